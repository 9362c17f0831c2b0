//! Dataset construction: segmentation, clustering, structured extraction,
//! QA generation, Base context assembly, guidance synthesis, and SSLI
//! distractor generation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    validate_instance, Chunk, Document, Label, Passage, QAInstance, Setting, META_GOLDEN_ABSENT,
};
use crate::embed::{cosine_similarity, embed_text, EmbedError, EmbedProviderConfig, VectorIndex};
use crate::gateway::{
    ChatRequest, Gateway, GatewayError, Message, SchemaField, SchemaSpec,
};
use crate::metrics::normalize_tokens;
use crate::prompts;
use crate::text::split_sentences;

/// Methods / results / significance notes extracted from an abstract.
/// At least one field is nonempty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredInfo {
    pub doc_id: String,
    pub methods: String,
    pub results: String,
    pub significance: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QType {
    Method,
    Result,
    SignificanceOrHypothesis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub question: String,
    pub answer: String,
    pub qtype: QType,
    /// Passage id of the chunk the pair was generated from.
    pub source_chunk: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetType {
    Misleading,
    Background,
    Irrelevant,
}

/// The structured contract controlling distractor generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistractorGuidance {
    pub doc_id: String,
    pub target_type: TargetType,
    pub main_idea: String,
    /// Phrase(s) the distractor must not entail.
    pub answer_avoidance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub doc_id: String,
    pub cluster_id: usize,
    pub kept: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error("sentence {0} exceeds max_chars")]
    SentenceTooLong(usize),
    #[error("index is empty")]
    EmptyIndex,
    #[error("structured extraction failed for document {0}")]
    ExtractFailed(String),
    #[error("QA generation failed for document {0}")]
    GenerationFailed(String),
    #[error("guidance synthesis failed for {0}")]
    GuidanceFailed(String),
    #[error("all distractor candidates leaked the answer for {0}")]
    AllDistractorsRejected(String),
    #[error("distractor count must leave at least one original context")]
    TooManyDistractors,
    #[error("invalid precondition: {0}")]
    Precondition(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Greedy sentence-preserving segmentation: pack whole sentences into
/// chunks of at most `max_chars`, preserving order.
pub fn segment_abstract(doc: &Document, max_chars: usize) -> Result<Vec<Chunk>, ForgeError> {
    let sentences = split_sentences(&doc.abstract_text);
    for (i, s) in sentences.iter().enumerate() {
        if s.chars().count() > max_chars {
            return Err(ForgeError::SentenceTooLong(i));
        }
    }
    let mut chunks = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut current_len = 0usize;
    let mut span_start = 0usize;
    for (i, s) in sentences.iter().enumerate() {
        let s_len = s.chars().count();
        let joined = if current.is_empty() { s_len } else { current_len + 1 + s_len };
        if !current.is_empty() && joined > max_chars {
            chunks.push(Chunk {
                doc_id: doc.id.clone(),
                index: chunks.len(),
                text: current.join(" "),
                sentence_span: (span_start, i),
            });
            current.clear();
            current_len = 0;
            span_start = i;
        }
        current_len = if current.is_empty() { s_len } else { current_len + 1 + s_len };
        current.push(s.clone());
    }
    if !current.is_empty() {
        chunks.push(Chunk {
            doc_id: doc.id.clone(),
            index: chunks.len(),
            text: current.join(" "),
            sentence_span: (span_start, sentences.len()),
        });
    }
    Ok(chunks)
}

/// Single-pass greedy leader clustering over the index entries, in input
/// order. Clusters smaller than `min_size` are marked `kept = false`.
pub fn cluster_corpus(
    index: &VectorIndex,
    sim_threshold: f64,
    min_size: usize,
) -> Result<Vec<ClusterAssignment>, ForgeError> {
    if index.is_empty() {
        return Err(ForgeError::EmptyIndex);
    }
    let entries = index.entries();
    let mut leaders: Vec<usize> = Vec::new();
    let mut assignments: Vec<(String, usize)> = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    for (i, entry) in entries.iter().enumerate() {
        let mut cluster = None;
        for (cid, &leader_idx) in leaders.iter().enumerate() {
            let sim = cosine_similarity(&entries[leader_idx].vector, &entry.vector)?;
            if sim >= sim_threshold {
                cluster = Some(cid);
                break;
            }
        }
        let cid = match cluster {
            Some(cid) => cid,
            None => {
                leaders.push(i);
                sizes.push(0);
                leaders.len() - 1
            }
        };
        sizes[cid] += 1;
        assignments.push((entry.passage_id.clone(), cid));
    }
    Ok(assignments
        .into_iter()
        .map(|(doc_id, cluster_id)| ClusterAssignment {
            doc_id,
            cluster_id,
            kept: sizes[cluster_id] >= min_size,
        })
        .collect())
}

fn extract_schema() -> SchemaSpec {
    SchemaSpec::new(vec![
        SchemaField::string("methods"),
        SchemaField::string("results"),
        SchemaField::string("significance"),
    ])
}

pub fn extract_structured(doc: &Document, gateway: &Gateway) -> Result<StructuredInfo, ForgeError> {
    let schema = extract_schema();
    let req = ChatRequest {
        model: gateway.config().model.clone(),
        messages: vec![
            Message::system(prompts::EXTRACT_SYSTEM),
            Message::user(prompts::render(
                prompts::EXTRACT_USER,
                &[("doc_id", &doc.id), ("abstract", &doc.abstract_text)],
            )),
        ],
        temperature: 0.0,
        response_schema: Some(schema.clone()),
        tag: "extract".into(),
    };
    let map = gateway
        .complete_structured(&req, &schema)
        .map_err(|e| match e {
            GatewayError::SchemaParse(_) => ForgeError::ExtractFailed(doc.id.clone()),
            other => ForgeError::Gateway(other),
        })?;
    let field = |k: &str| map[k].as_str().unwrap_or("").to_string();
    let info = StructuredInfo {
        doc_id: doc.id.clone(),
        methods: field("methods"),
        results: field("results"),
        significance: field("significance"),
    };
    if info.methods.is_empty() && info.results.is_empty() && info.significance.is_empty() {
        return Err(ForgeError::ExtractFailed(doc.id.clone()));
    }
    Ok(info)
}

/// Generates 1..=3 QA pairs from structured notes and the source chunk.
/// More than 3 pairs are truncated; zero pairs is an error.
pub fn generate_qa(
    info: &StructuredInfo,
    chunk: &Chunk,
    gateway: &Gateway,
) -> Result<Vec<QAPair>, ForgeError> {
    let schema = SchemaSpec::new(vec![SchemaField::list("pairs")]);
    let req = ChatRequest {
        model: gateway.config().model.clone(),
        messages: vec![
            Message::system(prompts::QA_GEN_SYSTEM),
            Message::user(prompts::render(
                prompts::QA_GEN_USER,
                &[
                    ("methods", &info.methods),
                    ("results", &info.results),
                    ("significance", &info.significance),
                    ("doc_id", &info.doc_id),
                    ("chunk_text", &chunk.text),
                ],
            )),
        ],
        temperature: 0.0,
        response_schema: Some(schema.clone()),
        tag: "generate_qa".into(),
    };
    let map = gateway
        .complete_structured(&req, &schema)
        .map_err(|e| match e {
            GatewayError::SchemaParse(_) => ForgeError::GenerationFailed(info.doc_id.clone()),
            other => ForgeError::Gateway(other),
        })?;
    let mut pairs = Vec::new();
    for item in map["pairs"].as_array().expect("schema enforced list") {
        let question = item["question"].as_str().unwrap_or("").to_string();
        let answer = item["answer"].as_str().unwrap_or("").to_string();
        let qtype = match item["qtype"].as_str().unwrap_or("") {
            "method" => QType::Method,
            "result" => QType::Result,
            "significance_or_hypothesis" | "significance" | "hypothesis" => {
                QType::SignificanceOrHypothesis
            }
            _ => continue,
        };
        if question.is_empty() || answer.is_empty() {
            continue;
        }
        pairs.push(QAPair { question, answer, qtype, source_chunk: chunk.passage_id() });
    }
    if pairs.is_empty() {
        return Err(ForgeError::GenerationFailed(info.doc_id.clone()));
    }
    if pairs.len() > 3 {
        log::warn!("doc {}: {} QA pairs generated, truncating to 3", info.doc_id, pairs.len());
        pairs.truncate(3);
    }
    Ok(pairs)
}

/// Retrieves the context pool for a question and labels the source chunk
/// golden when it surfaces; otherwise records `golden_absent` in meta.
pub fn build_base_instance(
    pair: &QAPair,
    instance_id: &str,
    index: &VectorIndex,
    chunks_by_id: &BTreeMap<String, Chunk>,
    embedder: &EmbedProviderConfig,
    pool_size: usize,
) -> Result<QAInstance, ForgeError> {
    if index.is_empty() {
        return Err(ForgeError::EmptyIndex);
    }
    if pool_size < 3 {
        return Err(ForgeError::Precondition("pool_size must be >= 3".into()));
    }
    let query_vec = embed_text(&pair.question, embedder)?;
    let retrieved = index.top_k(&query_vec, pool_size)?;

    let mut contexts = Vec::with_capacity(retrieved.ranked.len());
    let mut golden_found = false;
    for (pid, _) in &retrieved.ranked {
        let chunk = chunks_by_id
            .get(pid)
            .ok_or_else(|| ForgeError::Precondition(format!("index entry {pid} has no chunk")))?;
        let label = if *pid == pair.source_chunk {
            golden_found = true;
            Label::Golden
        } else {
            Label::Natural
        };
        contexts.push(Passage {
            id: pid.clone(),
            text: chunk.text.clone(),
            label,
            source_doc: Some(chunk.doc_id.clone()),
            pair_of: None,
        });
    }
    let mut meta = BTreeMap::new();
    if !golden_found {
        meta.insert(META_GOLDEN_ABSENT.to_string(), "true".to_string());
    }
    Ok(QAInstance {
        id: instance_id.to_string(),
        question: pair.question.clone(),
        golden_answer: pair.answer.clone(),
        setting: Setting::Base,
        contexts,
        meta,
    })
}

fn guidance_schema() -> SchemaSpec {
    SchemaSpec::new(vec![
        SchemaField::string("doc_id"),
        SchemaField::enumeration("target_type", &["misleading", "background", "irrelevant"]),
        SchemaField::string("main_idea"),
        SchemaField::string("answer_avoidance"),
    ])
}

/// Asks the LLM for structured distractor-generation guidance from the
/// question, golden answer, and top-3 retrieved contexts.
pub fn create_guidance(
    question: &str,
    answer: &str,
    doc_id: &str,
    top3: &[Passage],
    gateway: &Gateway,
) -> Result<DistractorGuidance, ForgeError> {
    if top3.len() > 3 {
        return Err(ForgeError::Precondition("guidance takes at most 3 contexts".into()));
    }
    let contexts = top3
        .iter()
        .enumerate()
        .map(|(i, p)| format!("{}. [{}] {}", i + 1, p.id, p.text))
        .collect::<Vec<_>>()
        .join("\n");
    let schema = guidance_schema();
    let req = ChatRequest {
        model: gateway.config().model.clone(),
        messages: vec![
            Message::system(prompts::GUIDANCE_SYSTEM),
            Message::user(prompts::render(
                prompts::GUIDANCE_USER,
                &[("query", question), ("answer", answer), ("doc_id", doc_id), ("contexts", &contexts)],
            )),
        ],
        temperature: 0.0,
        response_schema: Some(schema.clone()),
        tag: "guidance".into(),
    };
    let map = gateway
        .complete_structured(&req, &schema)
        .map_err(|e| match e {
            GatewayError::SchemaParse(_) => ForgeError::GuidanceFailed(doc_id.to_string()),
            other => ForgeError::Gateway(other),
        })?;
    let target_type = match map["target_type"].as_str().expect("schema enforced enum") {
        "misleading" => TargetType::Misleading,
        "background" => TargetType::Background,
        _ => TargetType::Irrelevant,
    };
    let guidance = DistractorGuidance {
        doc_id: map["doc_id"].as_str().unwrap_or(doc_id).to_string(),
        target_type,
        main_idea: map["main_idea"].as_str().unwrap_or("").to_string(),
        answer_avoidance: map["answer_avoidance"].as_str().unwrap_or("").to_string(),
    };
    if guidance.doc_id.is_empty() || guidance.main_idea.is_empty() || guidance.answer_avoidance.is_empty() {
        return Err(ForgeError::GuidanceFailed(doc_id.to_string()));
    }
    Ok(guidance)
}

/// True when `needle`'s normalized token sequence occurs contiguously in
/// `haystack`'s normalized token sequence.
pub fn leaks_answer(candidate: &str, golden_answer: &str) -> bool {
    let hay = normalize_tokens(candidate).tokens;
    let needle = normalize_tokens(golden_answer).tokens;
    if needle.is_empty() || needle.len() > hay.len() {
        return false;
    }
    hay.windows(needle.len()).any(|w| w == needle.as_slice())
}

fn request_distractors(
    guidance: &DistractorGuidance,
    count: usize,
    attempt: usize,
    gateway: &Gateway,
) -> Result<Vec<String>, ForgeError> {
    let schema = SchemaSpec::new(vec![SchemaField::list("distractors")]);
    let target = match guidance.target_type {
        TargetType::Misleading => "misleading",
        TargetType::Background => "background",
        TargetType::Irrelevant => "irrelevant",
    };
    let mut user = prompts::render(
        prompts::DISTRACT_USER,
        &[
            ("doc_id", guidance.doc_id.as_str()),
            ("target_type", target),
            ("main_idea", guidance.main_idea.as_str()),
            ("answer_avoidance", guidance.answer_avoidance.as_str()),
            ("count", &count.to_string()),
        ],
    );
    if attempt > 1 {
        // Distinct prompt so the retry is a genuinely new request, not a
        // cache hit of the rejected batch.
        user.push_str(&format!("\n## Attempt: {attempt}"));
    }
    let req = ChatRequest {
        model: gateway.config().model.clone(),
        messages: vec![
            Message::system(prompts::render(prompts::DISTRACT_SYSTEM, &[("count", &count.to_string())])),
            Message::user(user),
        ],
        temperature: 0.0,
        response_schema: Some(schema.clone()),
        tag: "distract".into(),
    };
    let map = gateway
        .complete_structured(&req, &schema)
        .map_err(|e| match e {
            GatewayError::SchemaParse(_) => ForgeError::GenerationFailed(guidance.doc_id.clone()),
            other => ForgeError::Gateway(other),
        })?;
    Ok(map["distractors"]
        .as_array()
        .expect("schema enforced list")
        .iter()
        .filter_map(|v| v.as_str())
        .map(str::to_string)
        .collect())
}

/// Generates `count` distractor passages under the guidance. Candidates
/// whose normalized tokens contain the golden answer are regenerated once,
/// then dropped.
pub fn generate_distractors(
    guidance: &DistractorGuidance,
    count: usize,
    golden_answer: &str,
    gateway: &Gateway,
) -> Result<Vec<Passage>, ForgeError> {
    if count == 0 {
        return Err(ForgeError::Precondition("distractor count must be >= 1".into()));
    }
    let mut texts: Vec<String> = request_distractors(guidance, count, 1, gateway)?
        .into_iter()
        .take(count)
        .collect();
    if texts.iter().any(|t| leaks_answer(t, golden_answer)) {
        log::warn!("doc {}: distractor batch leaked the answer, regenerating once", guidance.doc_id);
        let retry = request_distractors(guidance, count, 2, gateway)?;
        let mut merged: Vec<String> = texts
            .into_iter()
            .filter(|t| !leaks_answer(t, golden_answer))
            .collect();
        for t in retry {
            if merged.len() >= count {
                break;
            }
            if !leaks_answer(&t, golden_answer) && !merged.contains(&t) {
                merged.push(t);
            }
        }
        texts = merged;
    }
    if texts.is_empty() {
        return Err(ForgeError::AllDistractorsRejected(guidance.doc_id.clone()));
    }
    Ok(texts
        .into_iter()
        .enumerate()
        .map(|(i, text)| Passage {
            id: format!("{}-d{}", guidance.doc_id, i),
            text,
            label: Label::Distractor,
            source_doc: None,
            pair_of: Some(guidance.doc_id.clone()),
        })
        .collect())
}

/// Builds the SSLI variant of a base instance: the lowest-ranked natural
/// passages are replaced in place by the distractors, keeping the pool
/// size fixed and the golden passage at its original slot.
pub fn assemble_ssli_instance(
    base: &QAInstance,
    distractors: &[Passage],
) -> Result<QAInstance, ForgeError> {
    if base.setting != Setting::Base {
        return Err(ForgeError::Precondition("assemble_ssli_instance takes a base instance".into()));
    }
    if distractors.is_empty() {
        return Err(ForgeError::Precondition("distractors must be nonempty".into()));
    }
    if distractors.len() >= base.contexts.len() {
        return Err(ForgeError::TooManyDistractors);
    }
    let natural_slots: Vec<usize> = base
        .contexts
        .iter()
        .enumerate()
        .filter(|(_, p)| p.label == Label::Natural)
        .map(|(i, _)| i)
        .collect();
    if distractors.len() > natural_slots.len() {
        return Err(ForgeError::TooManyDistractors);
    }
    let mut contexts = base.contexts.clone();
    let replace = &natural_slots[natural_slots.len() - distractors.len()..];
    for (slot, distractor) in replace.iter().zip(distractors) {
        contexts[*slot] = distractor.clone();
    }
    Ok(QAInstance {
        id: base.id.clone(),
        question: base.question.clone(),
        golden_answer: base.golden_answer.clone(),
        setting: Setting::Ssli,
        contexts,
        meta: base.meta.clone(),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ForgeConfig {
    pub pool_size: usize,
    pub distractor_count: usize,
    pub cluster_threshold: f64,
    pub min_cluster: usize,
    pub max_chunk_chars: usize,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        Self {
            pool_size: 30,
            distractor_count: 6,
            cluster_threshold: 0.35,
            min_cluster: 2,
            max_chunk_chars: 800,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForgeLogEntry {
    pub subject: String,
    pub event: String,
    pub detail: String,
}

#[derive(Debug)]
pub struct ForgeOutput {
    pub base: Vec<QAInstance>,
    pub ssli: Vec<QAInstance>,
    pub log: Vec<ForgeLogEntry>,
}

/// Runs the full dataset-construction pipeline over a document corpus.
pub fn run_forge(
    docs: &[Document],
    cfg: &ForgeConfig,
    embedder: &EmbedProviderConfig,
    gateway: &Gateway,
) -> Result<ForgeOutput, ForgeError> {
    let mut docs: Vec<&Document> = docs.iter().collect();
    // Leader clustering is order-dependent; sorted doc order makes the
    // whole forge deterministic.
    docs.sort_by(|a, b| a.id.cmp(&b.id));

    let mut log = Vec::new();

    // Step 1: segmentation and chunk embedding.
    let mut chunk_index = VectorIndex::new(embedder.dim);
    let mut chunks_by_id: BTreeMap<String, Chunk> = BTreeMap::new();
    let mut chunks_by_doc: BTreeMap<String, Vec<Chunk>> = BTreeMap::new();
    for doc in &docs {
        let chunks = segment_abstract(doc, cfg.max_chunk_chars)?;
        for chunk in &chunks {
            chunk_index.insert(chunk.passage_id(), embed_text(&chunk.text, embedder)?)?;
            chunks_by_id.insert(chunk.passage_id(), chunk.clone());
        }
        chunks_by_doc.insert(doc.id.clone(), chunks);
    }
    if chunk_index.is_empty() {
        return Err(ForgeError::EmptyIndex);
    }

    // Step 2: cluster documents and drop weakly connected ones.
    let mut doc_index = VectorIndex::new(embedder.dim);
    for doc in &docs {
        doc_index.insert(doc.id.clone(), embed_text(&doc.abstract_text, embedder)?)?;
    }
    let assignments = cluster_corpus(&doc_index, cfg.cluster_threshold, cfg.min_cluster)?;
    let kept: BTreeMap<&str, bool> =
        assignments.iter().map(|a| (a.doc_id.as_str(), a.kept)).collect();

    let mut base_out = Vec::new();
    let mut ssli_out = Vec::new();

    for doc in &docs {
        if !kept.get(doc.id.as_str()).copied().unwrap_or(false) {
            log.push(ForgeLogEntry {
                subject: doc.id.clone(),
                event: "doc_filtered".into(),
                detail: "weakly connected cluster".into(),
            });
            continue;
        }

        // Steps 3-4: structured extraction and QA generation.
        let info = match extract_structured(doc, gateway) {
            Ok(info) => info,
            Err(ForgeError::ExtractFailed(id)) => {
                log.push(ForgeLogEntry {
                    subject: id,
                    event: "extract_failed".into(),
                    detail: "document skipped".into(),
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let first_chunk = &chunks_by_doc[&doc.id][0];
        let pairs = match generate_qa(&info, first_chunk, gateway) {
            Ok(pairs) => pairs,
            Err(ForgeError::GenerationFailed(id)) => {
                log.push(ForgeLogEntry {
                    subject: id,
                    event: "qa_generation_failed".into(),
                    detail: "document skipped".into(),
                });
                continue;
            }
            Err(e) => return Err(e),
        };

        // Step 5: Base and SSLI context construction.
        for (j, pair) in pairs.iter().enumerate() {
            let instance_id = format!("{}-q{}", doc.id, j);
            let base = build_base_instance(
                pair,
                &instance_id,
                &chunk_index,
                &chunks_by_id,
                embedder,
                cfg.pool_size,
            )?;
            debug_assert!(validate_instance(&base).is_valid());

            let top3: Vec<Passage> = base.contexts.iter().take(3).cloned().collect();
            let ssli = build_ssli(&base, pair, &top3, doc, cfg, gateway, &mut log);
            base_out.push(base);
            if let Some(inst) = ssli {
                ssli_out.push(inst);
            }
        }
    }

    Ok(ForgeOutput { base: base_out, ssli: ssli_out, log })
}

fn build_ssli(
    base: &QAInstance,
    pair: &QAPair,
    top3: &[Passage],
    doc: &Document,
    cfg: &ForgeConfig,
    gateway: &Gateway,
    log: &mut Vec<ForgeLogEntry>,
) -> Option<QAInstance> {
    let guidance = match create_guidance(&pair.question, &pair.answer, &doc.id, top3, gateway) {
        Ok(g) => g,
        Err(e) => {
            log.push(ForgeLogEntry {
                subject: base.id.clone(),
                event: "guidance_failed".into(),
                detail: e.to_string(),
            });
            return None;
        }
    };
    // Pair distractors with the golden passage when it surfaced, so
    // discrimination pairs are recoverable from the record alone.
    let mut guidance = guidance;
    if let Some(golden) = base.contexts.iter().find(|p| p.label == Label::Golden) {
        guidance.doc_id = golden.id.clone();
    }
    let distractors = match generate_distractors(&guidance, cfg.distractor_count, &base.golden_answer, gateway)
    {
        Ok(d) => d,
        Err(e) => {
            log.push(ForgeLogEntry {
                subject: base.id.clone(),
                event: "distractors_failed".into(),
                detail: e.to_string(),
            });
            return None;
        }
    };
    if distractors.len() < cfg.distractor_count {
        log.push(ForgeLogEntry {
            subject: base.id.clone(),
            event: "distractors_dropped".into(),
            detail: format!("{}/{} survived the leak check; ssli skipped", distractors.len(), cfg.distractor_count),
        });
        return None;
    }
    match assemble_ssli_instance(base, &distractors) {
        Ok(inst) => {
            debug_assert!(validate_instance(&inst).is_valid());
            Some(inst)
        }
        Err(e) => {
            log.push(ForgeLogEntry {
                subject: base.id.clone(),
                event: "assembly_failed".into(),
                detail: e.to_string(),
            });
            None
        }
    }
}
