use std::collections::HashMap;

use super::RawCaption;

/// Lowercased whitespace-separated words with punctuation stripped from both
/// ends; tokens that become empty are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AggregatedCaption {
    pub track_id: String,
    pub words: Vec<String>,
}

impl AggregatedCaption {
    pub fn joined(&self) -> String {
        self.words.join(" ")
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// The `take` most frequent tokens over all successful captions, ties going
/// to the token that appeared first. Captions are read by crop rank, then
/// prompt, whatever order they are passed in.
pub fn aggregate_words(track_id: &str, raw: &[RawCaption], take: usize) -> AggregatedCaption {
    let mut ordered: Vec<&RawCaption> = raw.iter().filter(|r| !r.failed()).collect();
    ordered.sort_by_key(|r| (r.crop_rank, r.prompt));
    let tokens: Vec<String> = ordered
        .iter()
        .filter_map(|r| r.text.as_deref())
        .flat_map(tokenize)
        .collect();
    AggregatedCaption {
        track_id: track_id.into(),
        words: rank_tokens(&tokens, take),
    }
}

/// Unique tokens by descending count, then first position.
pub(crate) fn rank_tokens(tokens: &[String], take: usize) -> Vec<String> {
    let mut stats: HashMap<&str, (usize, usize)> = HashMap::new();
    for (i, t) in tokens.iter().enumerate() {
        stats.entry(t.as_str()).or_insert((0, i)).0 += 1;
    }
    let mut ranked: Vec<(&str, usize, usize)> = stats.into_iter().map(|(t, (c, f))| (t, c, f)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked.into_iter().take(take).map(|(t, _, _)| t.to_string()).collect()
}
