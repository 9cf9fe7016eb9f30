//! Lightweight English detection for the screening stage.

use std::collections::HashSet;
use std::sync::OnceLock;

/// Decides whether a text is English. Swappable so a real language
/// identifier can replace the bundled heuristic.
pub trait LanguageDetector: Send + Sync {
    fn is_english(&self, text: &str) -> bool;
}

// Function words that rarely occur as whole words in other European
// languages; short ambiguous ones ("a", "in", "an", "was", "no") are left out.
const STOP_WORDS: &[&str] = &[
    "the", "of", "and", "to", "is", "are", "with", "for", "that", "this", "from", "by", "which", "these", "were", "be",
    "been", "has", "have", "had", "it", "its", "their", "or", "not", "but", "as", "at", "we", "our", "than", "also",
    "between", "after", "into", "may", "can", "such", "other", "there", "both", "more", "most", "only", "who", "when",
    "where", "how", "while", "during", "however", "among", "about", "through", "using", "within", "without", "those",
    "they", "should", "would", "could", "did", "does", "each", "any", "all", "some", "many", "over", "under", "if",
    "then", "because", "whether", "further",
];

fn stop_words() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOP_WORDS.iter().copied().collect())
}

/// Stop-word ratio heuristic: English when at least `threshold` of the
/// alphabetic tokens are bundled English function words.
#[derive(Debug, Clone, Copy)]
pub struct StopWordDetector {
    pub threshold: f64,
}

impl Default for StopWordDetector {
    fn default() -> Self {
        StopWordDetector { threshold: 0.02 }
    }
}

impl LanguageDetector for StopWordDetector {
    fn is_english(&self, text: &str) -> bool {
        let words = stop_words();
        let (mut total, mut hits) = (0usize, 0usize);
        for token in text.split(|c: char| !c.is_alphabetic()).filter(|t| !t.is_empty()) {
            total += 1;
            if words.contains(token.to_lowercase().as_str()) {
                hits += 1;
            }
        }
        total > 0 && hits as f64 / total as f64 >= self.threshold
    }
}
