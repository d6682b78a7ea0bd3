//! The vendor-independent program representation.
//!
//! A program is an ordered list of `move x y z` and `suction on|off` blocks.
//! The text form has one command per line, `#` comments and case-insensitive
//! keywords:
//!
//! ```text
//! # pick the cube
//! move 200 0 280
//! suction on
//! ```
//!
//! The JSON interchange form is
//! `{"name": str, "commands": [{"type": "move", "x", "y", "z"} | {"type": "suction", "enabled"}]}`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{inverse_kinematics, ArmProfile, KinematicsError, Pose};

pub const DEFAULT_PROGRAM_NAME: &str = "program";
pub const MAX_NAME_LEN: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DslError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid program name {0:?}: 1-64 chars of [A-Za-z0-9_-]")]
    InvalidName(String),
    #[error("command {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("index {index} out of bounds for program of length {len}")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("invalid program JSON: {0}")]
    Json(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}, column {column}: expected {expected}")]
pub struct ParseError {
    /// 1-based.
    pub line: usize,
    /// 1-based character column.
    pub column: usize,
    pub expected: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Command {
    /// Tip target in the robot base frame (mm).
    Move {
        x: f64,
        y: f64,
        z: f64,
    },
    Suction {
        enabled: bool,
    },
}

impl Command {
    pub fn move_to(x: f64, y: f64, z: f64) -> Self {
        Command::Move { x, y, z }
    }

    pub fn suction(enabled: bool) -> Self {
        Command::Suction { enabled }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Command::Move { x, y, z } => x.is_finite() && y.is_finite() && z.is_finite(),
            Command::Suction { .. } => true,
        }
    }

    pub fn target(&self) -> Option<Pose> {
        match *self {
            Command::Move { x, y, z } => Some(Pose::new(x, y, z)),
            Command::Suction { .. } => None,
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Move { x, y, z } => write!(f, "move {x} {y} {z}"),
            Command::Suction { enabled: true } => f.write_str("suction on"),
            Command::Suction { enabled: false } => f.write_str("suction off"),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProgram {
    name: String,
    commands: Vec<Command>,
}

/// An ordered, named list of commands. Value semantics: every edit returns a
/// new program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProgram")]
pub struct Program {
    name: String,
    commands: Vec<Command>,
}

impl TryFrom<RawProgram> for Program {
    type Error = DslError;
    fn try_from(raw: RawProgram) -> Result<Self, DslError> {
        Program::new(raw.name, raw.commands)
    }
}

impl Program {
    pub fn new(name: impl Into<String>, commands: Vec<Command>) -> Result<Self, DslError> {
        let name = name.into();
        if !is_valid_name(&name) {
            return Err(DslError::InvalidName(name));
        }
        if let Some(i) = commands.iter().position(|c| !c.is_finite()) {
            return Err(DslError::NonFinite(i));
        }
        Ok(Program { name, commands })
    }

    /// A program named [`DEFAULT_PROGRAM_NAME`].
    pub fn from_commands(commands: Vec<Command>) -> Result<Self, DslError> {
        Program::new(DEFAULT_PROGRAM_NAME, commands)
    }

    pub fn empty() -> Self {
        Program {
            name: DEFAULT_PROGRAM_NAME.to_string(),
            commands: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn commands(&self) -> &[Command] {
        &self.commands
    }

    pub fn len(&self) -> usize {
        self.commands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }

    pub fn with_name(self, name: impl Into<String>) -> Result<Self, DslError> {
        Program::new(name, self.commands)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("program serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DslError> {
        serde_json::from_str(text).map_err(|e| DslError::Json(e.to_string()))
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self, DslError> {
        serde_json::from_value(value).map_err(|e| DslError::Json(e.to_string()))
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("program serializes")
    }
}

pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= MAX_NAME_LEN
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Parses a coordinate written as a plain decimal: optional sign, digits with
/// at most one `.`, no exponent. The value must be finite.
pub fn parse_decimal(token: &str) -> Option<f64> {
    let digits = token.strip_prefix(['+', '-']).unwrap_or(token);
    let mut seen_digit = false;
    let mut seen_dot = false;
    for b in digits.bytes() {
        match b {
            b'0'..=b'9' => seen_digit = true,
            b'.' if !seen_dot => seen_dot = true,
            _ => return None,
        }
    }
    if !seen_digit {
        return None;
    }
    token.parse::<f64>().ok().filter(|v| v.is_finite())
}

const ORDINALS: [&str; 3] = ["first", "second", "third"];

pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut commands = Vec::new();
    for (idx, raw_line) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw_line.strip_suffix('\r').unwrap_or(raw_line);
        let code = line.split('#').next().unwrap_or("");
        let tokens = tokenize(code);
        let Some(&(kw_col, keyword)) = tokens.first() else {
            continue;
        };
        let end_col = code.chars().count() + 1;
        let err = |column: usize, expected: &str| ParseError {
            line: line_no,
            column,
            expected: expected.to_string(),
        };
        let cmd = match keyword.to_ascii_lowercase().as_str() {
            "move" => {
                let mut xyz = [0.0; 3];
                for (k, slot) in xyz.iter_mut().enumerate() {
                    let expected = format!("{} coordinate", ORDINALS[k]);
                    let Some(&(col, tok)) = tokens.get(k + 1) else {
                        return Err(err(end_col, &expected));
                    };
                    *slot = parse_decimal(tok)
                        .ok_or_else(|| err(col, &format!("{expected} (finite decimal number)")))?;
                }
                if let Some(&(col, _)) = tokens.get(4) {
                    return Err(err(col, "end of line"));
                }
                Command::move_to(xyz[0], xyz[1], xyz[2])
            }
            "suction" => {
                let Some(&(col, tok)) = tokens.get(1) else {
                    return Err(err(end_col, "`on` or `off`"));
                };
                let enabled = match tok.to_ascii_lowercase().as_str() {
                    "on" => true,
                    "off" => false,
                    _ => return Err(err(col, "`on` or `off`")),
                };
                if let Some(&(col, _)) = tokens.get(2) {
                    return Err(err(col, "end of line"));
                }
                Command::suction(enabled)
            }
            _ => return Err(err(kw_col, "`move` or `suction`")),
        };
        commands.push(cmd);
    }
    Ok(Program {
        name: DEFAULT_PROGRAM_NAME.to_string(),
        commands,
    })
}

// Whitespace-separated tokens with their 1-based character column.
fn tokenize(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start: Option<(usize, usize)> = None;
    for (col, (byte, ch)) in line.char_indices().enumerate() {
        if ch.is_whitespace() {
            if let Some((c, b)) = start.take() {
                out.push((c + 1, &line[b..byte]));
            }
        } else if start.is_none() {
            start = Some((col, byte));
        }
    }
    if let Some((c, b)) = start {
        out.push((c + 1, &line[b..]));
    }
    out
}

/// Canonical text: lowercase keywords, one command per line, shortest
/// round-tripping decimals, no trailing newline.
pub fn serialize_program(program: &Program) -> String {
    program
        .commands
        .iter()
        .map(Command::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Edit {
    Add { index: usize, command: Command },
    Delete { index: usize },
    Modify { index: usize, command: Command },
    Reorder { from_index: usize, to_index: usize },
}

pub fn apply_edit(program: &Program, edit: &Edit) -> Result<Program, DslError> {
    let len = program.len();
    let oob = |index| Err(DslError::IndexOutOfBounds { index, len });
    let mut commands = program.commands.clone();
    match *edit {
        Edit::Add { index, command } => {
            if index > len {
                return oob(index);
            }
            commands.insert(index, command);
        }
        Edit::Delete { index } => {
            if index >= len {
                return oob(index);
            }
            commands.remove(index);
        }
        Edit::Modify { index, command } => {
            if index >= len {
                return oob(index);
            }
            commands[index] = command;
        }
        Edit::Reorder {
            from_index,
            to_index,
        } => {
            if from_index >= len {
                return oob(from_index);
            }
            if to_index >= len {
                return oob(to_index);
            }
            let c = commands.remove(from_index);
            commands.insert(to_index, c);
        }
    }
    Program::new(program.name.clone(), commands)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub command_index: usize,
    pub severity: Severity,
    pub code: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "command {}: {} {}: {}",
            self.command_index, self.severity, self.code, self.message
        )
    }
}

pub const UNREACHABLE_TARGET: &str = "unreachable_target";
pub const REDUNDANT_SUCTION: &str = "redundant_suction";

/// Static checks. Errors make the program non-executable; warnings do not.
/// Diagnostics come out sorted by command index.
pub fn validate_program(program: &Program, profile: &ArmProfile) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut prev_suction: Option<bool> = None;
    for (i, cmd) in program.commands.iter().enumerate() {
        match *cmd {
            Command::Move { x, y, z } => {
                prev_suction = None;
                if let Err(e) = inverse_kinematics(profile, &Pose::new(x, y, z)) {
                    let reason = match e {
                        KinematicsError::Unreachable { reason } => reason.to_string(),
                        other => other.to_string(),
                    };
                    out.push(Diagnostic {
                        command_index: i,
                        severity: Severity::Error,
                        code: UNREACHABLE_TARGET.into(),
                        message: format!("target ({x}, {y}, {z}) is unreachable ({reason})"),
                    });
                }
            }
            Command::Suction { enabled } => {
                if prev_suction == Some(enabled) {
                    out.push(Diagnostic {
                        command_index: i,
                        severity: Severity::Warning,
                        code: REDUNDANT_SUCTION.into(),
                        message: format!("suction already {}", if enabled { "on" } else { "off" }),
                    });
                }
                prev_suction = Some(enabled);
            }
        }
    }
    out
}

pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(|d| d.severity == Severity::Error)
}
