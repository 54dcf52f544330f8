//! Shell-style patterns over video ids: `*`, `?` and `[...]` classes.

use regex::Regex;

use crate::error::PipelineError;

#[derive(Debug, Clone)]
pub struct VideoPattern {
    source: String,
    regex: Regex,
}

impl VideoPattern {
    pub fn new(pattern: &str) -> Result<Self, PipelineError> {
        let mut re = String::from("^");
        let mut chars = pattern.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '*' => re.push_str(".*"),
                '?' => re.push('.'),
                '[' => {
                    let mut class = String::from("[");
                    if matches!(chars.peek(), Some('!') | Some('^')) {
                        chars.next();
                        class.push('^');
                    }
                    let mut closed = false;
                    let mut first = true;
                    for c in chars.by_ref() {
                        if c == ']' && !first {
                            closed = true;
                            break;
                        }
                        first = false;
                        if c == '\\' || c == '[' || (c == ']') {
                            class.push('\\');
                        }
                        class.push(c);
                    }
                    if !closed {
                        return Err(PipelineError::Config(format!(
                            "unclosed [ in --videos pattern {pattern:?}"
                        )));
                    }
                    class.push(']');
                    re.push_str(&class);
                }
                c => re.push_str(&regex::escape(&c.to_string())),
            }
        }
        re.push('$');
        let regex =
            Regex::new(&re).map_err(|e| PipelineError::Config(format!("bad --videos pattern {pattern:?}: {e}")))?;
        Ok(Self {
            source: pattern.to_string(),
            regex,
        })
    }

    pub fn matches(&self, video_id: &str) -> bool {
        self.regex.is_match(video_id)
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }
}
