//! Name-based lookup for interchangeable strategies (M-step maximizers,
//! belief-update rules) so callers can pick one from a config string.

use crate::error::{Error, Result};

pub trait Named {
    fn name(&self) -> &'static str;
}

/// A fixed, ordered set of strategies of one kind. The first entry is the
/// default.
pub struct Registry<S: ?Sized + Named + 'static> {
    kind: &'static str,
    entries: &'static [&'static S],
}

impl<S: ?Sized + Named + 'static> Registry<S> {
    pub const fn new(kind: &'static str, entries: &'static [&'static S]) -> Self {
        Self { kind, entries }
    }

    pub fn get(&self, name: &str) -> Result<&'static S> {
        self.entries
            .iter()
            .copied()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn default_entry(&self) -> &'static S {
        self.entries[0]
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|s| s.name()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &'static S> + '_ {
        self.entries.iter().copied()
    }
}
