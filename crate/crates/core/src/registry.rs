//! Name-keyed registries of interchangeable strategies.
//!
//! Distance metrics, attribution rankers and tally modes are each looked up
//! by the name used in run configurations. Builtins are registered by the
//! owning module; embedders may register more.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub struct Entry<T> {
    pub description: &'static str,
    pub value: T,
}

pub struct Registry<T> {
    kind: &'static str,
    entries: BTreeMap<String, Entry<T>>,
}

impl<T> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Adds or replaces `name`, returning the previous entry.
    pub fn register(&mut self, name: &str, description: &'static str, value: T) -> Option<Entry<T>> {
        self.entries.insert(name.to_string(), Entry { description, value })
    }

    pub fn with(mut self, name: &str, description: &'static str, value: T) -> Self {
        self.register(name, description, value);
        self
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries.get(name).map(|e| &e.value).ok_or_else(|| {
            Error::Argument(format!(
                "unknown {} '{name}' (known: {})",
                self.kind,
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Entry<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }
}
