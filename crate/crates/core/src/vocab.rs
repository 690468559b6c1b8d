//! Whitespace tokenizer with reserved special tokens and one target-language
//! specifier per declared language.
//!
//! Id layout is fixed: `[PAD] [UNK] [MASK] [SEP] [STOP] [IMG]` occupy ids
//! 0..=5, specifiers follow in declaration order, then corpus words in order
//! of first occurrence.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub type TokenId = usize;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const MASK: TokenId = 2;
pub const SEP: TokenId = 3;
pub const STOP: TokenId = 4;
pub const IMG: TokenId = 5;

pub const RESERVED: [&str; 6] = ["[PAD]", "[UNK]", "[MASK]", "[SEP]", "[STOP]", "[IMG]"];

/// Specifier token for a language code, e.g. `de` → `[DE]`.
pub fn specifier_token(lang: &str) -> String {
    format!("[{}]", lang.to_uppercase())
}

fn is_specifier(token: &str) -> bool {
    token.len() > 2
        && token.starts_with('[')
        && token.ends_with(']')
        && !RESERVED.contains(&token)
        && token[1..token.len() - 1]
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    languages: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary from whitespace-tokenized, lowercased corpus lines.
    pub fn build<'a, I>(corpus: I, languages: &[&str]) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut vocab = Self::with_languages(languages)?;
        let mut any = false;
        for line in corpus {
            for word in line.split_whitespace() {
                any = true;
                vocab.insert(&word.to_lowercase());
            }
        }
        if !any {
            return Err(Error::Empty("vocabulary corpus"));
        }
        Ok(vocab)
    }

    /// Vocabulary over an explicit word list (already lowercase).
    pub fn from_words<'a, I>(words: I, languages: &[&str]) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        Self::build(words, languages)
    }

    fn with_languages(languages: &[&str]) -> Result<Self> {
        let mut vocab = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
            languages: Vec::new(),
        };
        for tok in RESERVED {
            vocab.insert(tok);
        }
        for lang in languages {
            let code = lang.to_lowercase();
            if code.is_empty() || !code.chars().all(|c| c.is_ascii_alphanumeric()) {
                return Err(Error::invalid(format!("bad language code {lang:?}")));
            }
            if vocab.languages.contains(&code) {
                return Err(Error::invalid(format!("duplicate language {lang:?}")));
            }
            vocab.insert(&specifier_token(&code));
            vocab.languages.push(code);
        }
        Ok(vocab)
    }

    fn insert(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Id of the specifier for `lang` (case-insensitive code such as `de`).
    pub fn specifier(&self, lang: &str) -> Result<TokenId> {
        self.id(&specifier_token(lang))
            .ok_or_else(|| Error::UnknownToken(specifier_token(lang)))
    }

    /// Whether `id` is a reserved token or a language specifier.
    pub fn is_special(&self, id: TokenId) -> bool {
        id < RESERVED.len() + self.languages.len()
    }

    /// Lowercases, splits on whitespace, and maps unseen words to `[UNK]`.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace()
            .map(|w| self.id(&w.to_lowercase()).unwrap_or(UNK))
            .collect()
    }

    /// Space-joins word tokens, dropping specials other than `[UNK]`.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let mut words = Vec::with_capacity(ids.len());
        for &id in ids {
            let tok = self.token(id).ok_or(Error::OutOfRange {
                what: "decode token id",
                index: id,
                extent: self.len(),
            })?;
            if id == UNK || !self.is_special(id) {
                words.push(tok);
            }
        }
        Ok(words.join(" "))
    }

    /// One token per line; line number is the id.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < RESERVED.len() || lines[..RESERVED.len()] != RESERVED {
            return Err(Error::invalid(
                "vocabulary file does not start with the reserved block",
            ));
        }
        let mut vocab = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
            languages: Vec::new(),
        };
        let mut in_specifiers = true;
        for (i, line) in lines.iter().enumerate() {
            if line.is_empty() || line.split_whitespace().count() != 1 {
                return Err(Error::invalid(format!("bad vocabulary line {}", i + 1)));
            }
            if i >= RESERVED.len() {
                if in_specifiers && is_specifier(line) {
                    vocab.languages.push(line[1..line.len() - 1].to_lowercase());
                } else {
                    in_specifiers = false;
                }
            }
            if vocab.index.contains_key(*line) {
                return Err(Error::invalid(format!("duplicate token {line:?}")));
            }
            vocab.insert(line);
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}
