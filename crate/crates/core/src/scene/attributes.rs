use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ObjectInstance;

pub const DEFAULT_COLORS: &[&str] = &[
    "white", "black", "red", "orange", "yellow", "green", "blue", "purple", "pink", "brown", "gray",
    "grey", "beige", "silver", "gold",
];

pub const DEFAULT_SHAPES: &[&str] = &[
    "rectangular", "square", "round", "circular", "cylindrical", "l-shaped", "oval", "curved",
    "triangular", "spherical",
];

/// Appearance facts mined from an object's caption sentences.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AttributeSet {
    /// (weight, sentence), sorted by sentence.
    pub entries: Vec<(f64, String)>,
    pub colors: BTreeSet<String>,
    pub shapes: BTreeSet<String>,
}

impl AttributeSet {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn vocab_tokens(&self) -> impl Iterator<Item = &str> {
        self.colors.iter().chain(self.shapes.iter()).map(String::as_str)
    }
}

/// Lowercased word tokens; punctuation stripped, inner hyphens kept.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .map(|t| t.trim_matches('-').to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Exact whole-word vocabulary matches over the description sentences.
pub fn extract_attributes(
    obj: &ObjectInstance,
    color_vocab: &BTreeSet<String>,
    shape_vocab: &BTreeSet<String>,
) -> AttributeSet {
    let mut out = AttributeSet::default();
    for sentence in &obj.description {
        let text = sentence.trim();
        if text.is_empty() {
            continue;
        }
        for tok in tokenize(text) {
            if color_vocab.contains(&tok) {
                out.colors.insert(tok.clone());
            }
            if shape_vocab.contains(&tok) {
                out.shapes.insert(tok);
            }
        }
        out.entries.push((1.0, text.to_string()));
    }
    out.entries.sort_by(|a, b| a.1.cmp(&b.1));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn vocab(words: &[&str]) -> BTreeSet<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    fn with_description(lines: &[&str]) -> ObjectInstance {
        ObjectInstance {
            instance_id: "couch/1".into(),
            category: "couch".into(),
            scope: String::new(),
            room: "1/living room".into(),
            position: [0.0; 3],
            min_points: [0.0; 3],
            max_points: [0.0; 3],
            description: lines.iter().map(|s| s.to_string()).collect(),
            interactive: false,
            nearby_objects: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn couch_colors() {
        let obj = with_description(&[
            "The object is a white L-shaped couch.",
            "It has orange cushions.",
            "The cushions are square.",
        ]);
        let a = extract_attributes(&obj, &vocab(DEFAULT_COLORS), &vocab(DEFAULT_SHAPES));
        assert_eq!(a.colors, vocab(&["white", "orange"]));
        assert_eq!(a.shapes, vocab(&["l-shaped", "square"]));
        assert_eq!(a.entries.len(), 3);
    }

    #[test]
    fn empty_description() {
        let a = extract_attributes(&with_description(&[]), &vocab(DEFAULT_COLORS), &vocab(DEFAULT_SHAPES));
        assert_eq!(a, AttributeSet::default());
    }

    #[test]
    fn whole_word_only() {
        // "redwood" must not yield "red".
        let a = extract_attributes(&with_description(&["A redwood frame."]), &vocab(&["red"]), &vocab(&["x"]));
        assert!(a.colors.is_empty());
    }
}
