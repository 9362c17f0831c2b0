//! Deterministic fixture-driven mock provider.
//!
//! A fixture maps (tag, match-key) to scripted content. The match-key is a
//! substring probe against the final user message; an empty probe matches
//! every message. First registered match wins.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ChatRequest, GatewayError, Role};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fixture {
    pub tag: String,
    pub probe: String,
    pub content: String,
}

#[derive(Debug, Clone, Default)]
pub struct FixtureBook {
    fixtures: Vec<Fixture>,
    by_tag: HashMap<String, Vec<usize>>,
}

impl FixtureBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, tag: impl Into<String>, probe: impl Into<String>, content: impl Into<String>) {
        let fixture = Fixture {
            tag: tag.into(),
            probe: probe.into(),
            content: content.into(),
        };
        self.by_tag.entry(fixture.tag.clone()).or_default().push(self.fixtures.len());
        self.fixtures.push(fixture);
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }

    /// Loads a fixture book from a JSON array of `{tag, probe, content}`.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let fixtures: Vec<Fixture> = serde_json::from_str(text)?;
        let mut book = Self::new();
        for f in fixtures {
            book.register(f.tag, f.probe, f.content);
        }
        Ok(book)
    }

    /// Resolves the scripted content for a request, or fails loudly: a
    /// missing fixture is a test bug, never a silent fallback.
    pub fn respond(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        let user_message = req
            .messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("");
        if let Some(indices) = self.by_tag.get(&req.tag) {
            for &i in indices {
                let f = &self.fixtures[i];
                if f.probe.is_empty() || user_message.contains(&f.probe) {
                    return Ok(f.content.clone());
                }
            }
        }
        Err(GatewayError::NoFixture(req.tag.clone()))
    }
}
