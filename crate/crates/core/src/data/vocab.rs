use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// String-to-id table with reserved special entries at the front.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    items: Vec<String>,
    index: BTreeMap<String, usize>,
}

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const E1_OPEN: &str = "<e1>";
pub const E1_CLOSE: &str = "</e1>";
pub const E2_OPEN: &str = "<e2>";
pub const E2_CLOSE: &str = "</e2>";
pub const OOV: &str = "[OOV]";
pub const PAD: &str = "[PAD]";

pub const TOKEN_SPECIALS: [&str; 8] = [CLS, SEP, E1_OPEN, E1_CLOSE, E2_OPEN, E2_CLOSE, OOV, PAD];
/// Specials for concept and relation tables.
pub const TABLE_SPECIALS: [&str; 2] = [OOV, PAD];

impl From<Vec<String>> for Vocab {
    fn from(items: Vec<String>) -> Self {
        let index = items.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Vocab { items, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.items
    }
}

impl Vocab {
    pub fn with_specials(specials: &[&str]) -> Self {
        Vocab::from(specials.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    }

    pub fn tokens() -> Self {
        Self::with_specials(&TOKEN_SPECIALS)
    }

    pub fn table() -> Self {
        Self::with_specials(&TABLE_SPECIALS)
    }

    pub fn insert(&mut self, s: &str) -> usize {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        self.items.push(s.to_string());
        self.index.insert(s.to_string(), self.items.len() - 1);
        self.items.len() - 1
    }

    pub fn get(&self, s: &str) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// Falls back to the `[OOV]` entry.
    pub fn id(&self, s: &str) -> usize {
        self.get(s).unwrap_or_else(|| self.index[OOV])
    }

    pub fn item(&self, id: usize) -> &str {
        &self.items[id]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}
