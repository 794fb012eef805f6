use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

const STOPWORDS_V1: &str = include_str!("../../data/stopwords-en-v1.txt");

/// The shipped stopword list (`data/stopwords-en-v1.txt`).
pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_V1
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

/// Lowercase content tokens with URLs, hashtags, mentions and stopwords removed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CleanText {
    pub tokens: Vec<String>,
}

impl CleanText {
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        CleanText {
            tokens: tokens.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn join(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn contains(&self, word: &str) -> bool {
        self.tokens.iter().any(|t| t == word)
    }
}

fn is_url(tok: &str) -> bool {
    tok.starts_with("http://") || tok.starts_with("https://") || tok.starts_with("www.") || tok.contains("://")
}

/// Tokenizes on whitespace and keeps only content words.
///
/// Per token: lowercase, fold typographic apostrophes to `'`, trim leading
/// characters that are not alphanumeric (sigils `#`/`@` survive so the token
/// can be recognised), trim trailing characters that are neither
/// alphanumeric nor `%`. Then drop URLs, `#hashtags`, `@mentions` and
/// stopwords. Every surviving token starts with an alphanumeric character,
/// which makes the function idempotent.
pub fn preprocess_text(text: &str) -> CleanText {
    let stop = stopwords();
    let tokens = text
        .split_whitespace()
        .filter_map(|raw| {
            let lower = raw.to_lowercase().replace(['\u{2019}', '\u{2018}'], "'");
            let tok = lower
                .trim_start_matches(|c: char| !(c.is_alphanumeric() || c == '#' || c == '@'))
                .trim_end_matches(|c: char| !(c.is_alphanumeric() || c == '%'));
            if tok.is_empty() || tok.starts_with(['#', '@']) || is_url(tok) || stop.contains(tok) {
                None
            } else {
                Some(tok.to_owned())
            }
        })
        .collect();
    CleanText { tokens }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty() {
        assert!(preprocess_text("").is_empty());
    }

    #[test]
    fn drops_hashtags_urls_stopwords() {
        assert_eq!(preprocess_text("Check this #depression https://t.co/x").tokens, vec!["check"]);
    }

    #[test]
    fn contraction_stopword() {
        assert!(stopwords().contains("don't"));
        assert_eq!(preprocess_text("Men don't cry").tokens, vec!["men", "cry"]);
        assert_eq!(preprocess_text("Men don\u{2019}t cry").tokens, vec!["men", "cry"]);
    }

    #[test]
    fn mentions_and_punctuation() {
        assert_eq!(
            preprocess_text("@doc said: (ONLY) 98% of autism... www.x.org #tag, ok!").tokens,
            vec!["said", "only", "98%", "autism", "ok"]
        );
    }

    #[test]
    fn shipped_list_keeps_generalization_cues() {
        for w in ["all", "only", "most", "every"] {
            assert!(!stopwords().contains(w), "{w}");
        }
        assert_eq!(stopwords().len(), 176);
    }

    proptest! {
        #[test]
        fn idempotent(s in "\\PC{0,80}") {
            let once = preprocess_text(&s);
            let twice = preprocess_text(&once.join());
            prop_assert_eq!(&once, &twice);
            for t in &once.tokens {
                prop_assert!(!t.starts_with('#') && !t.starts_with('@'));
                prop_assert!(!is_url(t));
                prop_assert!(!stopwords().contains(t.as_str()));
            }
        }

        #[test]
        fn idempotent_tweetlike(words in proptest::collection::vec(
            prop_oneof![
                "#[a-z]{1,5}", "@[a-z]{1,5}", "https?://[a-z./]{1,8}", "[A-Za-z']{1,7}[.,!?]?",
                Just("Don't".to_string()), "[0-9]{1,2}%",
            ], 0..12)) {
            let s = words.join(" ");
            let once = preprocess_text(&s);
            prop_assert_eq!(preprocess_text(&once.join()), once);
        }
    }
}
