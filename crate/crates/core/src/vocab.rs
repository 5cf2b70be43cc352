//! Query vocabulary: subtitle words that every sign dictionary lists.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io;
use crate::subtitle::{tokenize, WordIndex};

/// A plain word list, one word per line, `#` comments allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub name: String,
    pub words: BTreeSet<String>,
}

impl Dictionary {
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut words = BTreeSet::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut tokens = tokenize(line);
            if tokens.len() == 1 {
                words.insert(tokens.pop().unwrap_or_default());
            } else {
                log::warn!("dictionary `{name}`: skipping multi-word entry `{line}`");
            }
        }
        if words.is_empty() {
            return Err(Error::EmptyDictionary(name.to_string()));
        }
        Ok(Dictionary {
            name: name.to_string(),
            words,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("dictionary")
            .to_string();
        Dictionary::parse(&name, &io::read_text(path)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    words: BTreeSet<String>,
    /// Dictionaries each word was confirmed by.
    provenance: BTreeMap<String, BTreeSet<String>>,
}

impl Vocabulary {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Vocabulary {
            words: words.into_iter().map(Into::into).collect(),
            provenance: BTreeMap::new(),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    /// Words in lexicographic order.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn sources(&self, word: &str) -> Option<&BTreeSet<String>> {
        self.provenance.get(word)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for w in &self.words {
            out.push_str(w);
            out.push('\n');
        }
        out
    }

    /// Read a vocabulary file (same format as a dictionary).
    pub fn load(path: &Path) -> Result<Self> {
        let dict = Dictionary::load(path)?;
        Ok(Vocabulary::from_words(dict.words))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_text(path, &self.to_text())
    }
}

/// Subtitle words intersected with every dictionary.
pub fn build_initial_vocab(index: &WordIndex, dictionaries: &[Dictionary]) -> Result<Vocabulary> {
    let Some((first, rest)) = dictionaries.split_first() else {
        return Err(Error::Invalid("at least one dictionary is required".into()));
    };
    let mut vocab = Vocabulary::default();
    for word in first.words.iter().filter(|w| index.contains(w)) {
        if rest.iter().all(|d| d.words.contains(word)) {
            vocab.words.insert(word.clone());
            vocab.provenance.insert(
                word.clone(),
                dictionaries.iter().map(|d| d.name.clone()).collect(),
            );
        }
    }
    Ok(vocab)
}
