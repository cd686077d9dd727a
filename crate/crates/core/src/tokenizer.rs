//! Identifier tokenization.
//!
//! Command names, field names and type names are Pascal-case identifiers
//! glued together with punctuation (`New-AzKeyVault`,
//! `System.Collections.Generic.List<string>`). The tokenizer turns them
//! into plain words:
//!
//! 1. split on every non-alphanumeric character,
//! 2. split before a lowercase (or digit) to uppercase transition,
//! 3. split an uppercase run so that its last letter starts the next word
//!    when that letter is followed by a lowercase one (`AzVMConfig` gives
//!    `Az`, `VM`, `Config`),
//! 4. keep digits attached to the letters before them (`Sha256`),
//! 5. optionally lowercase the result.

use std::num::NonZeroUsize;

use serde::{Deserialize, Serialize};

/// Tokenizer knobs. Stored inside model artifacts so that inference
/// tokenizes exactly like training did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase_output: bool,
    /// Truncate each feature to this many tokens. `None` keeps everything.
    pub max_tokens_per_feature: Option<NonZeroUsize>,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            lowercase_output: true,
            max_tokens_per_feature: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    config: TokenizerConfig,
}

impl Tokenizer {
    pub fn new(config: TokenizerConfig) -> Self {
        Self { config }
    }

    /// A tokenizer that keeps the original casing, used to render
    /// human-readable documents.
    pub fn case_preserving() -> Self {
        Self::new(TokenizerConfig {
            lowercase_output: false,
            max_tokens_per_feature: None,
        })
    }

    pub fn config(&self) -> &TokenizerConfig {
        &self.config
    }

    /// Splits a raw identifier string into words.
    pub fn tokenize(&self, raw: &str) -> Vec<String> {
        let mut tokens = Vec::new();
        for fragment in raw.split(|c: char| !c.is_alphanumeric()) {
            if fragment.is_empty() {
                continue;
            }
            split_fragment(fragment, &mut tokens);
        }
        if let Some(limit) = self.config.max_tokens_per_feature {
            tokens.truncate(limit.get());
        }
        if self.config.lowercase_output {
            for token in &mut tokens {
                if token.chars().any(char::is_uppercase) {
                    // Some lowercase mappings expand into combining marks, and a
                    // few uppercase letters have no lowercase form at all.
                    *token = token
                        .to_lowercase()
                        .chars()
                        .filter(|c| c.is_alphanumeric() && !c.is_uppercase())
                        .collect();
                }
            }
            tokens.retain(|t| !t.is_empty());
        }
        tokens
    }
}

/// Tokenizes with the default configuration (lowercased, unlimited).
pub fn tokenize(raw: &str) -> Vec<String> {
    Tokenizer::default().tokenize(raw)
}

fn split_fragment(fragment: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = fragment.chars().collect();
    let mut start = 0;
    for i in 1..chars.len() {
        let prev = chars[i - 1];
        let cur = chars[i];
        let lower_to_upper = (prev.is_lowercase() || prev.is_numeric()) && cur.is_uppercase();
        let run_end = prev.is_uppercase()
            && cur.is_uppercase()
            && chars.get(i + 1).is_some_and(|next| next.is_lowercase());
        if lower_to_upper || run_end {
            out.push(chars[start..i].iter().collect());
            start = i;
        }
    }
    out.push(chars[start..].iter().collect());
}
