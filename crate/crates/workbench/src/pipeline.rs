//! The agentic evidence reranker.
//!
//! Four stages: intention recognition, per-passage relevance scoring,
//! threshold filtering, and query-conditioned summarization, plus the
//! cosine baseline and the v1/v2/v3 ablation switches. Per-passage
//! failures degrade through conservative fallbacks; only auth/unreachable
//! gateway errors abort a query.

use serde::{Deserialize, Serialize};

use crate::corpus::Passage;
use crate::embed::{cosine_similarity, embed_text, EmbedError, EmbedProviderConfig};
use crate::gateway::{ChatRequest, Gateway, GatewayError, Message, SchemaField, SchemaSpec};
use crate::prompts;
use crate::text::split_sentences;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    Definition,
    Mechanism,
    Comparison,
    Causal,
    Factual,
    FunctionalRole,
}

impl Intent {
    /// Case-insensitive normalization of LLM-produced intent labels.
    pub fn parse(label: &str) -> Option<Self> {
        match label.trim().to_lowercase().replace([' ', '-'], "_").as_str() {
            "definition" => Some(Self::Definition),
            "mechanism" => Some(Self::Mechanism),
            "comparison" => Some(Self::Comparison),
            "causal" | "causal_inference" => Some(Self::Causal),
            "factual" => Some(Self::Factual),
            "functional_role" => Some(Self::FunctionalRole),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Definition => "definition",
            Self::Mechanism => "mechanism",
            Self::Comparison => "comparison",
            Self::Causal => "causal",
            Self::Factual => "factual",
            Self::FunctionalRole => "functional_role",
        }
    }
}

/// Structured query representation: {topic, entity_type, intent,
/// expected_answer_type}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredIntent {
    pub topic: String,
    pub entity_type: String,
    pub intent: Intent,
    pub expected_answer_type: String,
}

impl StructuredIntent {
    /// Degenerate intent used when recognition fails; the pipeline must
    /// not abort on an unreadable intent.
    pub fn fallback() -> Self {
        Self {
            topic: String::new(),
            entity_type: String::new(),
            intent: Intent::Factual,
            expected_answer_type: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPassage {
    pub passage: Passage,
    pub score: f64,
    /// 1-based rank within its list.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceSummary {
    pub passage_id: String,
    pub summary: String,
    pub sentence_count: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Relevance threshold below which passages are filtered.
    pub tau: f64,
    /// Size cap on the incoming retrieval pool.
    pub top_n: usize,
    /// Number of passages retained for generation.
    pub k_out: usize,
    /// v1: skip intention recognition (raw-question scoring prompt).
    pub ablate_intent: bool,
    /// v2: skip threshold filtering (sorted list truncated to k_out).
    pub ablate_filter: bool,
    /// v3: skip summarization (verbatim passage texts).
    pub ablate_summarize: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau: 0.8,
            top_n: 30,
            k_out: 5,
            ablate_intent: false,
            ablate_filter: false,
            ablate_summarize: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(format!("tau must be in (0, 1], got {}", self.tau));
        }
        if self.k_out == 0 || self.k_out > self.top_n {
            return Err(format!("k_out must be in 1..=top_n, got {}", self.k_out));
        }
        Ok(())
    }
}

/// Degradation events raised while processing one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineFlag {
    pub passage_id: Option<String>,
    pub kind: String,
}

#[derive(Debug, Clone)]
pub struct RerankOutcome {
    pub intent: Option<StructuredIntent>,
    /// All passages, sorted by score descending, ranks 1..n.
    pub scored: Vec<ScoredPassage>,
    /// Passages surviving filtering and truncation, ranks 1..m.
    pub retained: Vec<ScoredPassage>,
    /// Evidence in rank order, one summary per retained passage.
    pub summaries: Vec<EvidenceSummary>,
    pub flags: Vec<PipelineFlag>,
}

fn intent_schema() -> SchemaSpec {
    SchemaSpec::new(vec![
        SchemaField::string("topic"),
        SchemaField::string("entity_type"),
        SchemaField::string("intent"),
        SchemaField::string("expected_answer_type"),
    ])
}

/// Extracts the structured query representation. Unreadable output
/// degrades to [`StructuredIntent::fallback`]; the second return value is
/// true when the fallback was used.
pub fn recognize_intent(
    question: &str,
    gateway: &Gateway,
) -> Result<(StructuredIntent, bool), GatewayError> {
    let schema = intent_schema();
    let req = ChatRequest {
        model: gateway.config().model.clone(),
        messages: vec![
            Message::system(prompts::INTENT_SYSTEM),
            Message::user(prompts::render(prompts::INTENT_USER, &[("query", question)])),
        ],
        temperature: 0.0,
        response_schema: Some(schema.clone()),
        tag: "intent".into(),
    };
    match gateway.complete_structured(&req, &schema) {
        Ok(map) => {
            let intent_label = map["intent"].as_str().unwrap_or("");
            match Intent::parse(intent_label) {
                Some(intent) => Ok((
                    StructuredIntent {
                        topic: map["topic"].as_str().unwrap_or("").to_string(),
                        entity_type: map["entity_type"].as_str().unwrap_or("").to_string(),
                        intent,
                        expected_answer_type: map["expected_answer_type"].as_str().unwrap_or("").to_string(),
                    },
                    false,
                )),
                None => {
                    log::warn!("unrecognized intent label `{intent_label}`, using fallback");
                    Ok((StructuredIntent::fallback(), true))
                }
            }
        }
        Err(GatewayError::SchemaParse(_)) => Ok((StructuredIntent::fallback(), true)),
        Err(e) if !e.is_fatal() && !matches!(e, GatewayError::NoFixture(_)) => {
            Ok((StructuredIntent::fallback(), true))
        }
        Err(e) => Err(e),
    }
}

/// First decimal literal in the content, for lenient score parsing.
fn first_number(content: &str) -> Option<f64> {
    let bytes: Vec<char> = content.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == '.') {
                i += 1;
            }
            let token: String = bytes[start..i].iter().collect();
            let token = token.trim_end_matches('.');
            if let Ok(v) = token.parse::<f64>() {
                return Some(v);
            }
        } else {
            i += 1;
        }
    }
    None
}

/// LLM relevance score for one passage, clamped to [0, 1]. Unparseable
/// judgments conservatively score 0.0: an unreadable judgment must never
/// admit a passage.
pub fn score_relevance(
    intent: Option<&StructuredIntent>,
    question: &str,
    passage: &Passage,
    gateway: &Gateway,
) -> Result<(f64, Vec<PipelineFlag>), GatewayError> {
    let user = match intent {
        Some(i) => prompts::render(
            prompts::SCORE_USER,
            &[
                ("query", question),
                ("topic", &i.topic),
                ("entity_type", &i.entity_type),
                ("intent", i.intent.as_str()),
                ("expected_answer_type", &i.expected_answer_type),
                ("passage_id", &passage.id),
                ("passage", &passage.text),
            ],
        ),
        None => prompts::render(
            prompts::SCORE_USER_RAW,
            &[("query", question), ("passage_id", &passage.id), ("passage", &passage.text)],
        ),
    };
    let req = ChatRequest {
        model: gateway.config().model.clone(),
        messages: vec![Message::system(prompts::SCORE_SYSTEM), Message::user(user)],
        temperature: 0.0,
        response_schema: None,
        tag: "score".into(),
    };
    let mut flags = Vec::new();
    let content = match gateway.complete_chat(&req) {
        Ok(resp) => resp.content,
        Err(e) if e.is_fatal() || matches!(e, GatewayError::NoFixture(_)) => return Err(e),
        Err(e) => {
            flags.push(PipelineFlag {
                passage_id: Some(passage.id.clone()),
                kind: format!("score_call_failed: {e}"),
            });
            return Ok((0.0, flags));
        }
    };
    let score = match first_number(&content) {
        Some(raw) => {
            if !(0.0..=1.0).contains(&raw) {
                flags.push(PipelineFlag {
                    passage_id: Some(passage.id.clone()),
                    kind: format!("score_out_of_range: {raw}"),
                });
            }
            raw.clamp(0.0, 1.0)
        }
        None => {
            flags.push(PipelineFlag {
                passage_id: Some(passage.id.clone()),
                kind: "score_parse_error".into(),
            });
            0.0
        }
    };
    Ok((score, flags))
}

/// Stable sort by score descending, threshold filter, top-1 fallback, and
/// truncation to k_out. Returns the full sorted list, the retained list,
/// and whether the filter-empty fallback fired.
pub fn rank_and_filter(
    scored: Vec<ScoredPassage>,
    cfg: &PipelineConfig,
) -> (Vec<ScoredPassage>, Vec<ScoredPassage>, bool) {
    assert!(!scored.is_empty(), "rank_and_filter requires a nonempty list");
    let mut sorted = scored;
    // Stable: ties keep original retrieval order.
    sorted.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
    for (i, sp) in sorted.iter_mut().enumerate() {
        sp.rank = i + 1;
    }

    let mut retained: Vec<ScoredPassage> = if cfg.ablate_filter {
        sorted.clone()
    } else {
        sorted.iter().filter(|sp| sp.score >= cfg.tau).cloned().collect()
    };
    let mut fallback = false;
    if retained.is_empty() {
        // The generator contractually requires at least one context.
        retained.push(sorted[0].clone());
        fallback = true;
    }
    retained.truncate(cfg.k_out);
    for (i, sp) in retained.iter_mut().enumerate() {
        sp.rank = i + 1;
    }
    (sorted, retained, fallback)
}

/// Condenses a retained passage into at most two sentences, preserving
/// terminology. Over-length outputs are truncated at the second sentence
/// boundary; empty outputs fall back to the passage's first two sentences.
pub fn summarize_evidence(
    passage: &Passage,
    intent: &StructuredIntent,
    question: &str,
    gateway: &Gateway,
) -> Result<(EvidenceSummary, Vec<PipelineFlag>), GatewayError> {
    let req = ChatRequest {
        model: gateway.config().model.clone(),
        messages: vec![
            Message::system(prompts::SUMMARIZE_SYSTEM),
            Message::user(prompts::render(
                prompts::SUMMARIZE_USER,
                &[
                    ("query", question),
                    ("intent", intent.intent.as_str()),
                    ("topic", &intent.topic),
                    ("expected_answer_type", &intent.expected_answer_type),
                    ("passage_id", &passage.id),
                    ("passage", &passage.text),
                ],
            )),
        ],
        temperature: 0.0,
        response_schema: None,
        tag: "summarize".into(),
    };
    let mut flags = Vec::new();
    let content = match gateway.complete_chat(&req) {
        Ok(resp) => resp.content,
        Err(e) if e.is_fatal() || matches!(e, GatewayError::NoFixture(_)) => return Err(e),
        Err(e) => {
            flags.push(PipelineFlag {
                passage_id: Some(passage.id.clone()),
                kind: format!("summarize_call_failed: {e}"),
            });
            String::new()
        }
    };

    let sentences = split_sentences(&content);
    let (summary, count) = if sentences.is_empty() {
        flags.push(PipelineFlag {
            passage_id: Some(passage.id.clone()),
            kind: "empty_summary_fallback".into(),
        });
        let head = split_sentences(&passage.text);
        let take = head.len().min(2).max(1);
        (head[..take.min(head.len())].join(" "), take.min(head.len()).max(1))
    } else if sentences.len() > 2 {
        flags.push(PipelineFlag {
            passage_id: Some(passage.id.clone()),
            kind: format!("summary_truncated_from_{}", sentences.len()),
        });
        (sentences[..2].join(" "), 2)
    } else {
        let n = sentences.len();
        (sentences.join(" "), n)
    };
    let summary = if summary.is_empty() { passage.text.clone() } else { summary };

    Ok((
        EvidenceSummary { passage_id: passage.id.clone(), summary, sentence_count: count },
        flags,
    ))
}

/// Composes the four stages, honoring the ablation switches.
pub fn rerank(
    question: &str,
    passages: &[Passage],
    cfg: &PipelineConfig,
    gateway: &Gateway,
) -> Result<RerankOutcome, GatewayError> {
    assert!(!passages.is_empty(), "rerank requires a nonempty pool");
    let pool: Vec<&Passage> = passages.iter().take(cfg.top_n).collect();
    let mut flags = Vec::new();

    // Step 1: intention recognition (skipped by v1).
    let intent = if cfg.ablate_intent {
        None
    } else {
        let (intent, fell_back) = recognize_intent(question, gateway)?;
        if fell_back {
            flags.push(PipelineFlag { passage_id: None, kind: "intent_fallback".into() });
        }
        Some(intent)
    };

    // Step 2: per-passage relevance, scored concurrently; the gateway's
    // admission window bounds actual parallelism.
    let results: Vec<Result<(f64, Vec<PipelineFlag>), GatewayError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = pool
            .iter()
            .map(|p| {
                let intent_ref = intent.as_ref();
                scope.spawn(move || score_relevance(intent_ref, question, p, gateway))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("scoring thread panicked")).collect()
    });
    let mut scored = Vec::with_capacity(pool.len());
    for (p, result) in pool.iter().zip(results) {
        let (score, score_flags) = result?;
        flags.extend(score_flags);
        scored.push(ScoredPassage { passage: (*p).clone(), score, rank: 0 });
    }

    // Step 3: sort, filter, truncate.
    let (sorted, retained, fallback) = rank_and_filter(scored, cfg);
    if fallback {
        flags.push(PipelineFlag { passage_id: None, kind: "filter_empty_fallback".into() });
    }

    // Step 4: summarization of the retained passages only (skipped by v3).
    let summaries = if cfg.ablate_summarize {
        retained
            .iter()
            .map(|sp| EvidenceSummary {
                passage_id: sp.passage.id.clone(),
                summary: sp.passage.text.clone(),
                sentence_count: split_sentences(&sp.passage.text).len(),
            })
            .collect()
    } else {
        let intent_for_summary = intent.clone().unwrap_or_else(StructuredIntent::fallback);
        let results: Vec<Result<(EvidenceSummary, Vec<PipelineFlag>), GatewayError>> =
            std::thread::scope(|scope| {
                let handles: Vec<_> = retained
                    .iter()
                    .map(|sp| {
                        let intent_ref = &intent_for_summary;
                        scope.spawn(move || {
                            summarize_evidence(&sp.passage, intent_ref, question, gateway)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("summarize thread panicked")).collect()
            });
        let mut summaries = Vec::with_capacity(retained.len());
        for result in results {
            let (summary, summary_flags) = result?;
            flags.extend(summary_flags);
            summaries.push(summary);
        }
        summaries
    };

    Ok(RerankOutcome { intent, scored: sorted, retained, summaries, flags })
}

/// The failure mode under test: rank purely by embedding similarity.
pub fn baseline_cosine_rerank(
    question: &str,
    passages: &[Passage],
    embedder: &EmbedProviderConfig,
) -> Result<Vec<ScoredPassage>, EmbedError> {
    assert!(!passages.is_empty(), "baseline requires a nonempty pool");
    let query = embed_text(question, embedder)?;
    let mut scored = Vec::with_capacity(passages.len());
    for p in passages {
        let v = embed_text(&p.text, embedder)?;
        scored.push(ScoredPassage {
            passage: p.clone(),
            score: cosine_similarity(&query, &v)?,
            rank: 0,
        });
    }
    scored.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
    for (i, sp) in scored.iter_mut().enumerate() {
        sp.rank = i + 1;
    }
    Ok(scored)
}
