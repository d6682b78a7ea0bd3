//! Shared program with optimistic concurrency.

use serde::Serialize;
use speared_core::Program;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodeStoreEntry {
    pub program: Program,
    pub revision: u64,
    pub last_writer: Option<String>,
}

/// Rejected store: the caller's base revision is stale.
#[derive(Debug, Clone, PartialEq)]
pub struct Conflict {
    pub current: CodeStoreEntry,
}

#[derive(Debug, Clone)]
pub struct CodeStore {
    entry: CodeStoreEntry,
}

impl Default for CodeStore {
    fn default() -> Self {
        CodeStore {
            entry: CodeStoreEntry {
                program: Program::empty(),
                revision: 0,
                last_writer: None,
            },
        }
    }
}

impl CodeStore {
    pub fn load(&self) -> &CodeStoreEntry {
        &self.entry
    }

    /// Compare-and-swap on the revision counter.
    pub fn store(
        &mut self,
        program: Program,
        expected_revision: u64,
        client: &str,
    ) -> Result<&CodeStoreEntry, Conflict> {
        if expected_revision != self.entry.revision {
            return Err(Conflict {
                current: self.entry.clone(),
            });
        }
        self.entry = CodeStoreEntry {
            program,
            revision: self.entry.revision + 1,
            last_writer: Some(client.to_string()),
        };
        Ok(&self.entry)
    }
}
