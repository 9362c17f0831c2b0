//! Prompt templates for every LLM-facing stage.
//!
//! Templates are versioned text assets with `{name}` placeholders. The
//! combined hash is recorded in report provenance so a report can always
//! be traced back to the exact wording that produced it.

use sha2::{Digest, Sha256};

pub const INTENT_SYSTEM: &str = "\
You are a scientific intent recognition agent. Your task is to analyze a scientific question and return a structured description of the user's intent.

Guidelines:
- topic: Identify the main scientific domain from the terminology in the question. Examples: immunology, genetics, oncology, neuroscience, metabolism.
- entity_type: Extract the main scientific entities explicitly mentioned (cells, proteins, genes, pathways). Be specific (e.g., \"cell type: T cells\"). If multiple entities are present, summarize the category (e.g., \"cell types\").
- intent: Determine the type of question based only on its phrasing. Use categories: definition, mechanism, comparison, causal, factual, functional role. Example: \"What are X and Y?\" -> definition; \"How does X do Y?\" -> mechanism.
- expected_answer_type: Infer what kind of answer the question demands. Example: \"What are the two types of lymphocytes...?\" -> \"two cell types and their roles in adaptive immunity\". Example: \"How does enzyme X catalyze Y?\" -> \"mechanistic explanation of catalytic process\".

Output strictly in JSON schema with keys: topic, entity_type, intent, expected_answer_type.";

pub const INTENT_USER: &str = "## Research question: {query}";

pub const SCORE_SYSTEM: &str = "\
You are a scientific evidence assessor. Given a structured representation of a research question and one candidate passage, output a single RelevanceScore in [0, 1].

Selection criteria:
- Reserve high scores for passages offering direct mechanistic, structural, or causal evidence for the question.
- The passage must explicitly address variable-specific relationships or provide data-driven results to score high.
- Assign low scores to speculative, redundant, vague, or conceptually mismatched passages, even when they share terminology with the question.
- Distinguish concepts, models, variables, and domains strictly; surface lexical overlap alone is not relevance.

Output only the numeric score.";

pub const SCORE_USER: &str = "\
## Question: {query}
## Structured intent:
topic: {topic}
entity_type: {entity_type}
intent: {intent}
expected_answer_type: {expected_answer_type}
## Candidate passage [{passage_id}]:
{passage}";

/// Ablation v1 variant: the scoring prompt sees the raw question only.
pub const SCORE_USER_RAW: &str = "\
## Question: {query}
## Candidate passage [{passage_id}]:
{passage}";

pub const SUMMARIZE_SYSTEM: &str = "\
You are a scientific evidence condenser. Summarize the passage for the given question intent, following three principles:
1. Key Information Extraction: keep only content directly addressing the scientific question.
2. Context Preservation: preserve original terminology and entities without paraphrasing.
3. Conciseness: produce a logically clear summary limited to one or two sentences.";

pub const SUMMARIZE_USER: &str = "\
## Question: {query}
## Intent: {intent} | topic: {topic} | expected answer: {expected_answer_type}
## Passage [{passage_id}]:
{passage}";

pub const JUDGE_SYSTEM: &str = "\
You are an answer-quality judge. Given a question, its golden answer, and a candidate answer, rate the candidate on factual correctness, logical consistency, and contextual adequacy. Assign one holistic integer score from 0 to 5, where higher values indicate stronger logical alignment with the golden answer.
Output strictly in JSON schema with keys: value (integer 0-5), rationale (string).";

pub const JUDGE_USER: &str = "\
## Question: {query}
## Golden answer: {gold}
## Candidate answer: {pred}";

pub const GENERATE_SYSTEM: &str = "\
You are a scientific question answering assistant. Answer the question using only the numbered evidence summaries. Answer concisely.";

pub const GENERATE_USER: &str = "\
## Question: {query}
## Evidence:
{evidence}";

pub const EXTRACT_SYSTEM: &str = "\
You are a scientific reader agent. Extract structured information from the abstract.
Output strictly in JSON schema with keys: methods, results, significance (strings; use \"\" when the abstract does not state one).";

pub const EXTRACT_USER: &str = "\
## Document ID: {doc_id}
## Abstract:
{abstract}";

pub const QA_GEN_SYSTEM: &str = "\
You are a Question Generator Agent. Given structured notes and the original scientific passage, generate 1-3 high-quality scientific question-answer pairs.

Guidelines:
- Questions must be self-contained, precise, and scientific. Avoid vague references like \"this passage\" or \"the study\".
- Cover different types: at least one method-type, one result-type, and one hypothesis/significance-type if possible.
- Answers must be concise but complete, directly supported by the passage and notes.

Output strictly in JSON schema with key: pairs (list of objects with keys question, answer, qtype; qtype is one of method, result, significance_or_hypothesis).";

pub const QA_GEN_USER: &str = "\
### Structured notes from Reader Agent:
methods: {methods}
results: {results}
significance: {significance}

### Original scientific passage (Document ID: {doc_id}):
{chunk_text}";

pub const GUIDANCE_SYSTEM: &str = "\
You are a distractor-generation planner. Given a question, its golden answer, and the top retrieved contexts, output structured guidance that controls distractor generation.
Output strictly in JSON schema with keys: doc_id, target_type (one of misleading, background, irrelevant), main_idea, answer_avoidance (the phrase or phrases the distractor must not entail).";

pub const GUIDANCE_USER: &str = "\
## Question: {query}
## Golden answer: {answer}
## Source document ID: {doc_id}
## Top retrieved contexts:
{contexts}";

pub const DISTRACT_SYSTEM: &str = "\
You are a distractor writer. Generate passages that are semantically coherent with the question and retrieved contexts but logically inconsistent with the ground-truth answer. Each passage must follow the guidance and must not state or entail the avoided answer.
Output strictly in JSON schema with key: distractors (list of {count} passage strings).";

pub const DISTRACT_USER: &str = "\
## Guidance for document {doc_id}:
target_type: {target_type}
main_idea: {main_idea}
answer_avoidance: {answer_avoidance}
## Number of distractors: {count}";

/// Fills `{name}` placeholders. Unknown placeholders are left intact so a
/// missing substitution is visible in the rendered prompt.
pub fn render(template: &str, bindings: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in bindings {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

/// Hash of every template in this module, for report provenance.
pub fn prompt_set_hash() -> String {
    let all = [
        INTENT_SYSTEM,
        INTENT_USER,
        SCORE_SYSTEM,
        SCORE_USER,
        SCORE_USER_RAW,
        SUMMARIZE_SYSTEM,
        SUMMARIZE_USER,
        JUDGE_SYSTEM,
        JUDGE_USER,
        GENERATE_SYSTEM,
        GENERATE_USER,
        EXTRACT_SYSTEM,
        EXTRACT_USER,
        QA_GEN_SYSTEM,
        QA_GEN_USER,
        GUIDANCE_SYSTEM,
        GUIDANCE_USER,
        DISTRACT_SYSTEM,
        DISTRACT_USER,
    ];
    let mut hasher = Sha256::new();
    for t in all {
        hasher.update(t.as_bytes());
        hasher.update([0]);
    }
    hex::encode(hasher.finalize())
}
