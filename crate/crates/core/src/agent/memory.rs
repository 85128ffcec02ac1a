//! Summary-buffer conversation memory.
//!
//! Recent exchanges are kept verbatim; when the estimate exceeds the token
//! budget the oldest ones are folded into a running summary. Token counts use
//! a tokenizer-free estimate: `ceil(words * 4 / 3)`.

use serde::{Deserialize, Serialize};

use super::prompt::SUMMARY_PROMPT;
use crate::provider::{ChatRequest, PromptMessage, Provider, ProviderError, Purpose, Role};

pub const DEFAULT_TOKEN_BUDGET: u32 = 2000;

pub fn estimate_tokens(text: &str) -> u32 {
    let words = text.split_whitespace().count() as u32;
    (words * 4).div_ceil(3)
}

/// Largest word count whose estimate fits in `tokens`.
fn words_within(tokens: u32) -> usize {
    (tokens as usize * 3) / 4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Learner,
    Agent,
    /// Another co-learner or a system prompt relayed to this agent.
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub speaker: Speaker,
    pub text: String,
}

impl Exchange {
    pub fn tokens(&self) -> u32 {
        estimate_tokens(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryBuffer {
    running_summary: String,
    recent: Vec<Exchange>,
    token_budget: u32,
}

impl MemoryBuffer {
    pub fn new(token_budget: u32) -> Self {
        assert!(token_budget > 0, "token budget must be positive");
        Self {
            running_summary: String::new(),
            recent: Vec::new(),
            token_budget,
        }
    }

    pub fn summary(&self) -> &str {
        &self.running_summary
    }

    pub fn recent(&self) -> &[Exchange] {
        &self.recent
    }

    pub fn token_budget(&self) -> u32 {
        self.token_budget
    }

    pub fn token_estimate(&self) -> u32 {
        estimate_tokens(&self.running_summary) + self.recent.iter().map(Exchange::tokens).sum::<u32>()
    }

    pub fn record(&mut self, speaker: Speaker, text: impl Into<String>) {
        self.recent.push(Exchange {
            speaker,
            text: text.into(),
        });
    }

    /// Prompt messages replaying the summary and recent exchanges.
    pub fn as_messages(&self) -> Vec<PromptMessage> {
        let mut out = Vec::with_capacity(self.recent.len() + 1);
        if !self.running_summary.is_empty() {
            out.push(PromptMessage::new(
                Role::System,
                format!("Summary of the earlier conversation: {}", self.running_summary),
            ));
        }
        for ex in &self.recent {
            let role = match ex.speaker {
                Speaker::Agent => Role::Assistant,
                Speaker::Learner | Speaker::Other => Role::User,
            };
            out.push(PromptMessage::new(role, ex.text.clone()));
        }
        out
    }

    /// Folds the oldest exchanges into the running summary until the estimate
    /// fits the budget. On provider failure the buffer is left untouched.
    pub fn condense(&mut self, provider: &dyn Provider, temperature: f64) -> Result<(), ProviderError> {
        if self.token_estimate() <= self.token_budget {
            return Ok(());
        }
        // keep a quarter of the budget for the summary itself
        let reserve = (self.token_budget / 4).max(1);
        let keep_limit = self.token_budget.saturating_sub(reserve);

        let mut kept_tokens: u32 = self.recent.iter().map(Exchange::tokens).sum();
        let mut fold = 0;
        while fold < self.recent.len() && kept_tokens > keep_limit {
            kept_tokens -= self.recent[fold].tokens();
            fold += 1;
        }
        let summary_budget = self.token_budget - kept_tokens;

        let mut lines = String::new();
        if !self.running_summary.is_empty() {
            lines.push_str(&self.running_summary);
            lines.push('\n');
        }
        for ex in &self.recent[..fold] {
            let who = match ex.speaker {
                Speaker::Learner => "Learner",
                Speaker::Agent => "Me",
                Speaker::Other => "Other",
            };
            lines.push_str(&format!("{who}: {}\n", ex.text));
        }
        let request = ChatRequest {
            system_prompt: SUMMARY_PROMPT.to_string(),
            messages: vec![PromptMessage::new(Role::User, lines)],
            temperature,
            max_reply_tokens: summary_budget,
            purpose: Purpose::Summarize,
        };
        let summary = provider.complete(&request)?;

        let words: Vec<&str> = summary.split_whitespace().collect();
        let limit = words_within(summary_budget).min(words.len());
        self.running_summary = words[..limit].join(" ");
        self.recent.drain(..fold);
        debug_assert!(self.token_estimate() <= self.token_budget);
        Ok(())
    }
}
