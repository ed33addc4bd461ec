//! Word-level tokenizer with frequency-aware number tokens.

use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::{default_classes, knowledge_text_for_class, KnowledgeMode};
use crate::text::{ExemplarSet, Task};

pub const FREQ_TOKEN: usize = 0;
pub const NUM_TOKEN: usize = 1;
const SPECIAL: usize = 2;

/// Lowest and highest frequency covered by the frequency features, in Hz.
pub const FEATURE_FREQ_RANGE: (f64, f64) = (20.0, 8000.0);

#[derive(Debug, Clone, PartialEq)]
enum Raw {
    Word(String),
    Num(f64),
}

fn scan(text: &str) -> Vec<Raw> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || (chars[i] == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit))) {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            out.push(Raw::Num(s.parse().unwrap_or(0.0)));
            // "2-4": the hyphen reads as a range.
            if chars.get(i) == Some(&'-') && chars.get(i + 1).is_some_and(char::is_ascii_digit) {
                out.push(Raw::Word("to".into()));
                i += 1;
            }
        } else if c.is_alphabetic() {
            let start = i;
            while i < chars.len() && (chars[i].is_alphabetic() || chars[i] == '\'') {
                i += 1;
            }
            out.push(Raw::Word(chars[start..i].iter().collect()));
        } else {
            i += 1;
        }
    }
    out
}

/// A token: vocabulary id and, for numbers followed by a Hz unit, the
/// frequency it names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub id: usize,
    pub freq_hz: Option<f64>,
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub words: Vec<String>,
    pub hash_buckets: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(mut words: Vec<String>, hash_buckets: usize) -> Self {
        words.sort();
        words.dedup();
        let mut v = Self { words, hash_buckets, index: HashMap::new() };
        v.reindex();
        v
    }

    fn reindex(&mut self) {
        self.index = self.words.iter().enumerate().map(|(i, w)| (w.clone(), i + SPECIAL)).collect();
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn restored(mut self) -> Self {
        self.reindex();
        self
    }

    /// Words of the toy descriptors and the bundled exemplars.
    pub fn builtin(hash_buckets: usize) -> Self {
        let mut texts = Vec::new();
        for c in default_classes() {
            for mode in [KnowledgeMode::ClassOnly, KnowledgeMode::Enriched] {
                texts.push(knowledge_text_for_class(&c, mode, 1.0));
            }
        }
        for task in [Task::SourceParse, Task::KnowledgeParse] {
            for e in ExemplarSet::builtin(task).exemplars {
                texts.push(e.input);
                texts.push(e.output);
            }
        }
        let words = texts
            .iter()
            .flat_map(|t| scan(t))
            .filter_map(|r| match r {
                Raw::Word(w) => Some(w),
                Raw::Num(_) => None,
            })
            .collect();
        Self::new(words, hash_buckets)
    }

    pub fn size(&self) -> usize {
        SPECIAL + self.words.len() + self.hash_buckets
    }

    fn word_id(&self, w: &str) -> usize {
        match self.index.get(w) {
            Some(&id) => id,
            None if self.hash_buckets > 0 => SPECIAL + self.words.len() + (fnv1a(w) % self.hash_buckets as u64) as usize,
            None => NUM_TOKEN,
        }
    }

    /// Tokenizes `text`, keeping at most `max_len` tokens.
    pub fn tokenize(&self, text: &str, max_len: usize) -> Vec<Token> {
        let raw = scan(text);
        let mut out = Vec::with_capacity(raw.len().min(max_len));
        for (i, r) in raw.iter().enumerate() {
            if out.len() == max_len {
                break;
            }
            out.push(match r {
                Raw::Word(w) => Token { id: self.word_id(w), freq_hz: None },
                Raw::Num(n) => match unit_after(&raw, i) {
                    Some(scale) => Token { id: FREQ_TOKEN, freq_hz: Some(n * scale) },
                    None => Token { id: NUM_TOKEN, freq_hz: None },
                },
            });
        }
        out
    }
}

/// Multiplier of the Hz unit that follows a number, skipping over the rest
/// of a range such as "200 and 400 Hz".
fn unit_after(raw: &[Raw], i: usize) -> Option<f64> {
    for r in raw.iter().skip(i + 1).take(4) {
        match r {
            Raw::Num(_) => continue,
            Raw::Word(w) if w == "and" || w == "to" => continue,
            Raw::Word(w) if w == "hz" => return Some(1.0),
            Raw::Word(w) if w == "khz" => return Some(1000.0),
            Raw::Word(_) => return None,
        }
    }
    None
}

/// Gaussian bumps over log frequency, evenly spaced across
/// [`FEATURE_FREQ_RANGE`].
pub fn freq_features(freq_hz: f64, n: usize) -> Vec<f64> {
    let (lo, hi) = FEATURE_FREQ_RANGE;
    let u = (freq_hz.max(1.0).ln() - lo.ln()) / (hi.ln() - lo.ln());
    let width = 1.0 / (n.max(2) - 1) as f64;
    (0..n)
        .map(|k| {
            let c = k as f64 * width;
            (-0.5 * ((u - c) / width).powi(2)).exp()
        })
        .collect()
}

/// Sinusoidal position code, `(len, dim)`.
pub fn positional_encoding(len: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((len, dim), |(pos, i)| {
        let rate = 1.0 / 10_000f64.powf((2 * (i / 2)) as f64 / dim as f64);
        let a = pos as f64 * rate;
        if i % 2 == 0 {
            a.sin()
        } else {
            a.cos()
        }
    })
}
