//! Bag-of-n-gram cosine similarity and label matching.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Default similarity a parsed phrase needs to count as naming a label.
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.3;

/// Lowercase alphanumeric words.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '-'))
        .map(|w| w.trim_matches(|c| c == '\'' || c == '-').to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

fn ngram_counts(text: &str) -> HashMap<String, f64> {
    let w = words(text);
    let mut counts = HashMap::new();
    for u in &w {
        *counts.entry(u.clone()).or_insert(0.0) += 1.0;
    }
    for pair in w.windows(2) {
        *counts.entry(format!("{} {}", pair[0], pair[1])).or_insert(0.0) += 1.0;
    }
    counts
}

/// Cosine similarity of unigram+bigram count vectors; 0 when either side
/// has no words.
pub fn cosine_similarity(a: &str, b: &str) -> f64 {
    let (ca, cb) = (ngram_counts(a), ngram_counts(b));
    let dot: f64 = ca.iter().filter_map(|(k, v)| cb.get(k).map(|w| v * w)).sum();
    let na: f64 = ca.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = cb.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TextEmbedderSpec {
    NgramCosine { threshold: f64 },
}

impl Default for TextEmbedderSpec {
    fn default() -> Self {
        TextEmbedderSpec::NgramCosine {
            threshold: DEFAULT_MATCH_THRESHOLD,
        }
    }
}

impl TextEmbedderSpec {
    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        match self {
            TextEmbedderSpec::NgramCosine { .. } => cosine_similarity(a, b),
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            TextEmbedderSpec::NgramCosine { threshold } => *threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMatch {
    pub label: usize,
    pub phrase: usize,
    pub similarity: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub matches: Vec<LabelMatch>,
    pub accuracy: f64,
}

/// Greedy one-to-one matching of labels to parsed phrases by descending
/// similarity. A label counts as correct when its match clears the
/// threshold and the phrase is most similar to that label.
pub fn match_sources_to_labels(
    parsed: &[String],
    labels: &[String],
    embedder: &TextEmbedderSpec,
) -> MatchResult {
    if labels.is_empty() || parsed.is_empty() {
        return MatchResult { matches: Vec::new(), accuracy: 0.0 };
    }
    let sim: Vec<Vec<f64>> = labels
        .iter()
        .map(|l| parsed.iter().map(|p| embedder.similarity(l, p)).collect())
        .collect();
    let mut pairs: Vec<(usize, usize)> = (0..labels.len())
        .flat_map(|l| (0..parsed.len()).map(move |p| (l, p)))
        .collect();
    // Stable sort keeps index order among ties.
    pairs.sort_by(|a, b| sim[b.0][b.1].total_cmp(&sim[a.0][a.1]));

    let mut label_used = vec![false; labels.len()];
    let mut phrase_used = vec![false; parsed.len()];
    let mut matches = Vec::new();
    for (l, p) in pairs {
        if label_used[l] || phrase_used[p] {
            continue;
        }
        label_used[l] = true;
        phrase_used[p] = true;
        let s = sim[l][p];
        let best_label = (0..labels.len())
            .max_by(|&a, &b| sim[a][p].total_cmp(&sim[b][p]).then(b.cmp(&a)))
            .unwrap();
        matches.push(LabelMatch {
            label: l,
            phrase: p,
            similarity: s,
            correct: s >= embedder.threshold() && best_label == l,
        });
    }
    matches.sort_by_key(|m| m.label);
    let correct = matches.iter().filter(|m| m.correct).count();
    MatchResult {
        accuracy: correct as f64 / labels.len() as f64,
        matches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn hand_computed_cosine() {
        // {dog, barking, "dog barking"} vs {dog, barks, "dog barks"}: one
        // shared unigram out of three features each.
        let c = cosine_similarity("Dog barking", "dog barks");
        assert!((c - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(cosine_similarity("violin", "dog barking"), 0.0);
        assert_eq!(cosine_similarity("", "dog"), 0.0);
        assert!((cosine_similarity("A cat meows.", "a cat meows") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_phrases_match_fully() {
        let labels = s(&["dog barking", "violin", "car horn honking"]);
        let r = match_sources_to_labels(&labels, &labels, &TextEmbedderSpec::default());
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn one_of_two_labels() {
        let r = match_sources_to_labels(
            &s(&["dog barking"]),
            &s(&["dog barking", "violin"]),
            &TextEmbedderSpec::default(),
        );
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.matches.len(), 1);
        assert_eq!((r.matches[0].label, r.matches[0].phrase), (0, 0));
    }

    #[test]
    fn disjoint_vocabulary_scores_zero() {
        let r = match_sources_to_labels(
            &s(&["thunder rumbling"]),
            &s(&["violin", "dog barking"]),
            &TextEmbedderSpec::default(),
        );
        assert_eq!(r.accuracy, 0.0);
        let empty = match_sources_to_labels(&[], &s(&["violin"]), &TextEmbedderSpec::default());
        assert_eq!(empty.accuracy, 0.0);
    }
}
