use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{invalid, Result};

/// Dense internal document index, `0..num_docs`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct DocId(pub u32);

impl DocId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u32> for DocId {
    fn from(v: u32) -> Self {
        DocId(v)
    }
}

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Bijection between external document names and internal [`DocId`]s.
///
/// Ids are handed out in insertion order, so the internal id of a name is its
/// line number in the id sidecar file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DocIndex {
    names: Vec<String>,
    lookup: BTreeMap<String, DocId>,
}

impl DocIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an index from names in id order. Duplicate names are rejected.
    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut index = Self::new();
        for name in names {
            let name = name.into();
            if index.lookup.contains_key(&name) {
                return Err(invalid!("duplicate document name {name:?}"));
            }
            index.intern(&name);
        }
        Ok(index)
    }

    /// Returns the id for `name`, assigning the next free id if it is new.
    pub fn intern(&mut self, name: &str) -> DocId {
        if let Some(&id) = self.lookup.get(name) {
            return id;
        }
        let id = DocId(self.names.len() as u32);
        self.names.push(String::from(name));
        self.lookup.insert(String::from(name), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<DocId> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, id: DocId) -> Option<&str> {
        self.names.get(id.index()).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intern_is_stable_and_bijective() {
        let mut idx = DocIndex::new();
        let a = idx.intern("a");
        let b = idx.intern("b");
        assert_eq!(idx.intern("a"), a);
        assert_eq!((a, b), (DocId(0), DocId(1)));
        assert_eq!(idx.name(b), Some("b"));
        assert_eq!(idx.get("c"), None);
    }

    #[test]
    fn duplicate_names_rejected() {
        assert!(DocIndex::from_names(["x", "y", "x"]).is_err());
    }
}
