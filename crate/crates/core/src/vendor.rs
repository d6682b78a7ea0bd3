//! Translation between programs and vendor-specific robot code.
//!
//! Two dialects ship by default:
//!
//! | command       | `dobot-script` | `gcode-like`      |
//! |---------------|----------------|-------------------|
//! | move x y z    | `PTP x,y,z`    | `G0 Xx Yy Zz`     |
//! | suction on    | `SUCK 1`       | `M10`             |
//! | suction off   | `SUCK 0`       | `M11`             |
//!
//! Coordinates are written with at most three decimals, so translation
//! quantizes to 1 µm.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dsl::{parse_decimal, Command, Program};

pub const DOBOT_SCRIPT: &str = "dobot-script";
pub const GCODE_LIKE: &str = "gcode-like";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VendorError {
    #[error("unknown dialect {0:?}")]
    UnknownDialect(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// One vendor language. Lines passed to [`Dialect::parse_line`] are already
/// trimmed and non-empty.
pub trait Dialect: Send + Sync {
    fn id(&self) -> &str;
    fn emit(&self, command: &Command) -> String;
    fn parse_line(&self, line: &str) -> Result<Command, String>;
}

/// Formats a coordinate with up to 3 decimals, trailing zeros trimmed.
pub fn format_coord(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Rounds to the value a coordinate takes after a trip through vendor text.
pub fn quantize_coord(v: f64) -> f64 {
    let q: f64 = format_coord(v)
        .parse()
        .expect("formatted coordinate parses");
    q
}

/// Applies [`quantize_coord`] to every move of `program`.
pub fn quantize_program(program: &Program) -> Program {
    let commands = program
        .commands()
        .iter()
        .map(|c| match *c {
            Command::Move { x, y, z } => {
                Command::move_to(quantize_coord(x), quantize_coord(y), quantize_coord(z))
            }
            other => other,
        })
        .collect();
    Program::new(program.name(), commands).expect("quantized program stays valid")
}

fn coord(token: &str, what: &str) -> Result<f64, String> {
    parse_decimal(token.trim()).ok_or_else(|| format!("invalid {what} coordinate {token:?}"))
}

pub struct DobotScript;

impl Dialect for DobotScript {
    fn id(&self) -> &str {
        DOBOT_SCRIPT
    }

    fn emit(&self, command: &Command) -> String {
        match *command {
            Command::Move { x, y, z } => format!(
                "PTP {},{},{}",
                format_coord(x),
                format_coord(y),
                format_coord(z)
            ),
            Command::Suction { enabled } => format!("SUCK {}", u8::from(enabled)),
        }
    }

    fn parse_line(&self, line: &str) -> Result<Command, String> {
        let (op, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        match op.to_ascii_uppercase().as_str() {
            "PTP" => {
                let parts: Vec<&str> = rest.split(',').collect();
                if parts.len() != 3 {
                    return Err(format!(
                        "PTP takes 3 comma-separated coordinates, got {}",
                        parts.len()
                    ));
                }
                Ok(Command::move_to(
                    coord(parts[0], "x")?,
                    coord(parts[1], "y")?,
                    coord(parts[2], "z")?,
                ))
            }
            "SUCK" => match rest.trim() {
                "1" => Ok(Command::suction(true)),
                "0" => Ok(Command::suction(false)),
                other => Err(format!("SUCK takes 0 or 1, got {other:?}")),
            },
            other => Err(format!("unsupported instruction {other:?}")),
        }
    }
}

pub struct GcodeLike;

impl Dialect for GcodeLike {
    fn id(&self) -> &str {
        GCODE_LIKE
    }

    fn emit(&self, command: &Command) -> String {
        match *command {
            Command::Move { x, y, z } => format!(
                "G0 X{} Y{} Z{}",
                format_coord(x),
                format_coord(y),
                format_coord(z)
            ),
            Command::Suction { enabled: true } => "M10".to_string(),
            Command::Suction { enabled: false } => "M11".to_string(),
        }
    }

    fn parse_line(&self, line: &str) -> Result<Command, String> {
        let mut words = line.split_whitespace();
        let op = words.next().unwrap_or_default().to_ascii_uppercase();
        match op.as_str() {
            "G0" => {
                let mut axes: [Option<f64>; 3] = [None; 3];
                for word in words {
                    let (letter, value) =
                        word.split_at(word.chars().next().map_or(0, char::len_utf8));
                    let slot = match letter.to_ascii_uppercase().as_str() {
                        "X" => 0,
                        "Y" => 1,
                        "Z" => 2,
                        _ => return Err(format!("unexpected word {word:?}")),
                    };
                    if axes[slot].is_some() {
                        return Err(format!("axis {letter} given twice"));
                    }
                    axes[slot] = Some(coord(value, letter)?);
                }
                match axes {
                    [Some(x), Some(y), Some(z)] => Ok(Command::move_to(x, y, z)),
                    _ => Err("G0 needs X, Y and Z".to_string()),
                }
            }
            "M10" | "M11" => {
                if let Some(extra) = words.next() {
                    return Err(format!("unexpected word {extra:?}"));
                }
                Ok(Command::suction(op == "M10"))
            }
            other => Err(format!("unsupported opcode {other:?}")),
        }
    }
}

/// Dialects by id.
pub struct DialectRegistry {
    dialects: BTreeMap<String, Box<dyn Dialect>>,
}

impl Default for DialectRegistry {
    fn default() -> Self {
        let mut r = DialectRegistry {
            dialects: BTreeMap::new(),
        };
        r.register(Box::new(DobotScript));
        r.register(Box::new(GcodeLike));
        r
    }
}

impl DialectRegistry {
    pub fn register(&mut self, dialect: Box<dyn Dialect>) {
        self.dialects.insert(dialect.id().to_string(), dialect);
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.dialects.keys().map(String::as_str)
    }

    pub fn get(&self, id: &str) -> Result<&dyn Dialect, VendorError> {
        self.dialects
            .get(id)
            .map(Box::as_ref)
            .ok_or_else(|| VendorError::UnknownDialect(id.to_string()))
    }

    /// One line per command, `\n`-separated, no trailing newline.
    pub fn translate(&self, program: &Program, dialect: &str) -> Result<String, VendorError> {
        let d = self.get(dialect)?;
        Ok(program
            .commands()
            .iter()
            .map(|c| d.emit(c))
            .collect::<Vec<_>>()
            .join("\n"))
    }

    pub fn parse(&self, text: &str, dialect: &str) -> Result<Program, VendorError> {
        let d = self.get(dialect)?;
        let mut commands = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cmd = d.parse_line(line).map_err(|reason| VendorError::Parse {
                line: i + 1,
                reason,
            })?;
            commands.push(cmd);
        }
        Ok(Program::from_commands(commands).expect("parsed coordinates are finite"))
    }
}

pub fn translate_to_vendor(program: &Program, dialect: &str) -> Result<String, VendorError> {
    DialectRegistry::default().translate(program, dialect)
}

pub fn parse_vendor(text: &str, dialect: &str) -> Result<Program, VendorError> {
    DialectRegistry::default().parse(text, dialect)
}
