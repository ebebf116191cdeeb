//! Backend-driven page summarization with chunking.

use crate::backend::{BackendError, ChatBackend, ChatMessage, ChatRequest, Usage};
use crate::prompt::{TemplateId, render};

pub const CHUNK_CHARS: usize = 4000;
pub const DEFAULT_SUMMARY_CAP: usize = 2000;

/// Splits `text` into chunks of at most `size` characters, preferring to
/// break at whitespace within the last tenth of a chunk.
pub fn chunk_text(text: &str, size: usize) -> Vec<&str> {
    assert!(size > 0, "chunk size must be positive");
    let mut chunks = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let Some((hard, _)) = rest.char_indices().nth(size) else {
            chunks.push(rest);
            break;
        };
        let window = &rest[..hard];
        let floor = window.char_indices().nth(size - size / 10).map_or(0, |(i, _)| i);
        let cut = match window[floor..].rfind(char::is_whitespace) {
            Some(ws) if floor + ws > 0 => {
                let ws_at = floor + ws;
                ws_at + window[ws_at..].chars().next().map_or(0, char::len_utf8)
            }
            _ => hard,
        };
        chunks.push(&rest[..cut]);
        rest = &rest[cut..];
    }
    chunks
}

/// Cuts `text` to at most `cap` characters, ending at the last sentence
/// terminator that fits. Falls back to a word boundary, then a hard cut.
pub fn truncate_at_sentence(text: &str, cap: usize) -> String {
    if text.chars().count() <= cap {
        return text.to_string();
    }
    let end = text.char_indices().nth(cap).map_or(text.len(), |(i, _)| i);
    let window = &text[..end];
    let sentence_end = window
        .char_indices()
        .filter(|(i, c)| {
            matches!(c, '.' | '!' | '?') && text[i + c.len_utf8()..].chars().next().is_none_or(char::is_whitespace)
        })
        .map(|(i, c)| i + c.len_utf8())
        .next_back();
    if let Some(cut) = sentence_end {
        return window[..cut].trim_end().to_string();
    }
    match window.rfind(char::is_whitespace) {
        Some(ws) if ws > 0 => window[..ws].trim_end().to_string(),
        _ => window.to_string(),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summaries {
    pub per_page: Vec<String>,
    pub combined: String,
    pub usage: Vec<Usage>,
}

pub struct Summarizer<'a> {
    pub backend: &'a dyn ChatBackend,
    pub model_id: &'a str,
    pub chunk_chars: usize,
}

impl<'a> Summarizer<'a> {
    pub fn new(backend: &'a dyn ChatBackend, model_id: &'a str) -> Self {
        Self {
            backend,
            model_id,
            chunk_chars: CHUNK_CHARS,
        }
    }

    async fn ask(&self, prompt: String, usage: &mut Vec<Usage>) -> Result<String, BackendError> {
        let request = ChatRequest::new(self.model_id, vec![ChatMessage::user(prompt)]);
        let response = self.backend.complete(&request).await?;
        usage.push(response.usage);
        Ok(response.text.trim().to_string())
    }

    /// One call for short pages; otherwise one call per chunk plus a merge.
    pub async fn summarize_text(&self, text: &str, usage: &mut Vec<Usage>) -> Result<String, BackendError> {
        let chunks = chunk_text(text, self.chunk_chars);
        if chunks.len() <= 1 {
            let prompt = render(TemplateId::SummarizePage, &[text]).expect("arity 1");
            return self.ask(prompt, usage).await;
        }
        let mut parts = Vec::with_capacity(chunks.len());
        for chunk in chunks {
            let prompt = render(TemplateId::SummarizePage, &[chunk]).expect("arity 1");
            parts.push(self.ask(prompt, usage).await?);
        }
        let prompt = render(TemplateId::MergeSummaries, &[parts.join("\n\n")]).expect("arity 1");
        self.ask(prompt, usage).await
    }

    /// Summarizes pages independently, in order, and joins the results.
    pub async fn summarize_pages<S: AsRef<str>>(&self, pages: &[S], cap: usize) -> Result<Summaries, BackendError> {
        let mut usage = Vec::new();
        let mut per_page = Vec::with_capacity(pages.len());
        for page in pages {
            per_page.push(self.summarize_text(page.as_ref(), &mut usage).await?);
        }
        let combined = truncate_at_sentence(&per_page.join("\n\n"), cap);
        Ok(Summaries {
            per_page,
            combined,
            usage,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use proptest::prelude::*;

    #[test]
    fn chunk_boundaries() {
        assert_eq!(chunk_text("", 10).len(), 0);
        assert_eq!(chunk_text(&"a".repeat(4000), 4000).len(), 1);
        assert_eq!(chunk_text(&"a".repeat(4001), 4000).len(), 2);
        let words = "word ".repeat(1000);
        let chunks = chunk_text(&words, 4000);
        assert_eq!(chunks.len(), 2);
        assert!(chunks[0].ends_with(' '));
    }

    #[test]
    fn truncation_prefers_sentence_end() {
        assert_eq!(truncate_at_sentence("One. Two three four.", 12), "One.");
        assert_eq!(truncate_at_sentence("short", 100), "short");
        assert_eq!(truncate_at_sentence("alpha beta gamma", 12), "alpha beta");
        assert_eq!(truncate_at_sentence("v1.2 is out. Next", 14), "v1.2 is out.");
    }

    #[tokio::test]
    async fn pages_keep_rank_order() {
        let backend = ScriptedBackend::new(["S1", "S2", "S3"]).unwrap();
        let s = Summarizer::new(&backend, "m")
            .summarize_pages(&["p1", "p2", "p3"], DEFAULT_SUMMARY_CAP)
            .await
            .unwrap();
        assert_eq!(s.combined, "S1\n\nS2\n\nS3");
        assert_eq!(s.usage.len(), 3);
    }

    proptest! {
        #[test]
        fn chunks_reassemble_and_respect_size(text in "[a-z é\n]{0,300}", size in 1usize..50) {
            let chunks = chunk_text(&text, size);
            prop_assert_eq!(chunks.concat(), text.clone());
            for c in &chunks {
                prop_assert!(!c.is_empty());
                prop_assert!(c.chars().count() <= size);
            }
        }

        #[test]
        fn truncation_respects_cap(text in "[a-z .!?]{0,300}", cap in 0usize..120) {
            let out = truncate_at_sentence(&text, cap);
            prop_assert!(out.chars().count() <= cap);
            prop_assert!(text.starts_with(&out));
        }
    }
}
