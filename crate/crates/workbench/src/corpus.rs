//! Dataset records and the JSONL interchange format shared by every
//! other module.
//!
//! One instance per line, canonical (lexicographically sorted) key order,
//! absent optionals serialized as `null`. Parsing preserves unknown
//! top-level keys into `meta` so foreign fields survive a round trip.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

/// A source abstract with its metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub abstract_text: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// A sentence-preserving fragment of a document abstract.
///
/// Concatenating all chunks of a document in `index` order reproduces the
/// abstract's sentence sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
    /// Half-open sentence range `[start, end)` into the parent abstract.
    pub sentence_span: (usize, usize),
}

impl Chunk {
    /// Stable passage id for this chunk, used as the vector-index key.
    pub fn passage_id(&self) -> String {
        format!("{}#{}", self.doc_id, self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Natural,
    Golden,
    Distractor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Base,
    Ssli,
}

/// A context passage inside a QA instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
    pub label: Label,
    /// Document the passage was cut from; always set for golden passages.
    pub source_doc: Option<String>,
    /// For distractors: id of the original passage the distractor was
    /// derived from. Required so context discrimination can recover pairs.
    pub pair_of: Option<String>,
}

/// One question with its golden answer and ordered context pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAInstance {
    pub id: String,
    pub question: String,
    pub golden_answer: String,
    pub setting: Setting,
    pub contexts: Vec<Passage>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

/// Meta key set to `"true"` when retrieval failed to surface the golden
/// passage for an instance.
pub const META_GOLDEN_ABSENT: &str = "golden_absent";

impl QAInstance {
    pub fn golden_absent(&self) -> bool {
        self.meta.get(META_GOLDEN_ABSENT).map(String::as_str) == Some("true")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub code: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub instance_id: String,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {0}: malformed JSON: {1}")]
    MalformedLine(usize, String),
    #[error("line {line}: schema violation in field `{field}`: {message}")]
    SchemaViolation {
        line: usize,
        field: String,
        message: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Checks every QAInstance invariant; an empty report means the instance
/// is admissible.
pub fn validate_instance(inst: &QAInstance) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |code: &'static str, message: String| violations.push(Violation { code, message });

    let golden: Vec<&Passage> = inst.contexts.iter().filter(|p| p.label == Label::Golden).collect();
    let distractors = inst.contexts.iter().filter(|p| p.label == Label::Distractor).count();

    if golden.len() > 1 {
        push("MULTI_GOLDEN", format!("{} contexts labeled golden", golden.len()));
    }
    if golden.is_empty() && !inst.golden_absent() {
        push(
            "NO_GOLDEN",
            "no golden context and meta does not record golden_absent".into(),
        );
    }
    if !golden.is_empty() && inst.golden_absent() {
        push("GOLDEN_ABSENT_MISMATCH", "meta says golden_absent but a golden context exists".into());
    }
    match inst.setting {
        Setting::Ssli if distractors == 0 => {
            push("NO_DISTRACTOR", "ssli instance has zero distractors".into())
        }
        Setting::Base if distractors > 0 => {
            push("DISTRACTOR_IN_BASE", format!("base instance has {distractors} distractors"))
        }
        _ => {}
    }
    for p in &inst.contexts {
        match p.label {
            Label::Distractor if p.pair_of.is_none() && p.source_doc.is_none() => {
                push("DISTRACTOR_UNPAIRED", format!("distractor {} has neither pair_of nor source_doc", p.id))
            }
            Label::Golden if p.source_doc.is_none() => {
                push("GOLDEN_NO_SOURCE", format!("golden passage {} has no source_doc", p.id))
            }
            _ => {}
        }
    }

    ValidationReport {
        instance_id: inst.id.clone(),
        violations,
    }
}

fn get_str(obj: &serde_json::Map<String, serde_json::Value>, key: &str, line: usize) -> Result<String, CorpusError> {
    match obj.get(key) {
        Some(serde_json::Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(CorpusError::SchemaViolation {
            line,
            field: key.into(),
            message: "expected a string".into(),
        }),
        None => Err(CorpusError::SchemaViolation {
            line,
            field: key.into(),
            message: "missing required field".into(),
        }),
    }
}

fn get_opt_str(
    obj: &serde_json::Map<String, serde_json::Value>,
    key: &str,
    line: usize,
) -> Result<Option<String>, CorpusError> {
    match obj.get(key) {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(serde_json::Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(CorpusError::SchemaViolation {
            line,
            field: key.into(),
            message: "expected a string or null".into(),
        }),
    }
}

const KNOWN_KEYS: &[&str] = &["id", "question", "golden_answer", "setting", "contexts", "meta"];

fn parse_instance_value(value: serde_json::Value, line: usize) -> Result<QAInstance, CorpusError> {
    let obj = match value {
        serde_json::Value::Object(o) => o,
        _ => {
            return Err(CorpusError::SchemaViolation {
                line,
                field: "<root>".into(),
                message: "expected a JSON object".into(),
            })
        }
    };

    let setting = match get_str(&obj, "setting", line)?.as_str() {
        "base" => Setting::Base,
        "ssli" => Setting::Ssli,
        other => {
            return Err(CorpusError::SchemaViolation {
                line,
                field: "setting".into(),
                message: format!("unknown setting `{other}`"),
            })
        }
    };

    let raw_contexts = match obj.get("contexts") {
        Some(serde_json::Value::Array(a)) => a.clone(),
        Some(_) => {
            return Err(CorpusError::SchemaViolation {
                line,
                field: "contexts".into(),
                message: "expected an array".into(),
            })
        }
        None => {
            return Err(CorpusError::SchemaViolation {
                line,
                field: "contexts".into(),
                message: "missing required field".into(),
            })
        }
    };

    let mut contexts = Vec::with_capacity(raw_contexts.len());
    for (i, ctx) in raw_contexts.into_iter().enumerate() {
        let cobj = match ctx {
            serde_json::Value::Object(o) => o,
            _ => {
                return Err(CorpusError::SchemaViolation {
                    line,
                    field: format!("contexts[{i}]"),
                    message: "expected an object".into(),
                })
            }
        };
        let label = match get_str(&cobj, "label", line)?.as_str() {
            "natural" => Label::Natural,
            "golden" => Label::Golden,
            "distractor" => Label::Distractor,
            other => {
                return Err(CorpusError::SchemaViolation {
                    line,
                    field: format!("contexts[{i}].label"),
                    message: format!("unknown label `{other}`"),
                })
            }
        };
        contexts.push(Passage {
            id: get_str(&cobj, "id", line)?,
            text: get_str(&cobj, "text", line)?,
            label,
            source_doc: get_opt_str(&cobj, "source_doc", line)?,
            pair_of: get_opt_str(&cobj, "pair_of", line)?,
        });
    }

    let mut meta: BTreeMap<String, String> = match obj.get("meta") {
        None | Some(serde_json::Value::Null) => BTreeMap::new(),
        Some(serde_json::Value::Object(m)) => m
            .iter()
            .map(|(k, v)| {
                let s = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                (k.clone(), s)
            })
            .collect(),
        Some(_) => {
            return Err(CorpusError::SchemaViolation {
                line,
                field: "meta".into(),
                message: "expected an object".into(),
            })
        }
    };

    // Unknown top-level keys survive the round trip inside meta.
    for (k, v) in &obj {
        if !KNOWN_KEYS.contains(&k.as_str()) {
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            meta.insert(k.clone(), s);
        }
    }

    let inst = QAInstance {
        id: get_str(&obj, "id", line)?,
        question: get_str(&obj, "question", line)?,
        golden_answer: get_str(&obj, "golden_answer", line)?,
        setting,
        contexts,
        meta,
    };

    let report = validate_instance(&inst);
    if let Some(v) = report.violations.first() {
        return Err(CorpusError::SchemaViolation {
            line,
            field: v.code.into(),
            message: v.message.clone(),
        });
    }
    Ok(inst)
}

/// Parses a JSONL dataset stream. Instances are returned in file order and
/// each line must be a valid instance.
pub fn parse_dataset<R: Read>(reader: R) -> Result<Vec<QAInstance>, CorpusError> {
    let buf = BufReader::new(reader);
    let mut out = Vec::new();
    for (i, line) in buf.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| CorpusError::MalformedLine(line_no, e.to_string()))?;
        out.push(parse_instance_value(value, line_no)?);
    }
    Ok(out)
}

fn instance_to_value(inst: &QAInstance) -> serde_json::Value {
    // Route through Value: serde_json's default map is a BTreeMap, which
    // gives the canonical sorted key order for free.
    let contexts: Vec<serde_json::Value> = inst
        .contexts
        .iter()
        .map(|p| {
            serde_json::json!({
                "id": p.id,
                "text": p.text,
                "label": p.label,
                "source_doc": p.source_doc,
                "pair_of": p.pair_of,
            })
        })
        .collect();
    serde_json::json!({
        "id": inst.id,
        "question": inst.question,
        "golden_answer": inst.golden_answer,
        "setting": inst.setting,
        "contexts": contexts,
        "meta": inst.meta,
    })
}

/// Serializes instances as JSONL. Output is deterministic: equal inputs
/// produce byte-identical streams.
pub fn serialize_dataset<W: Write>(instances: &[QAInstance], mut writer: W) -> std::io::Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut writer, &instance_to_value(inst))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn serialize_dataset_to_string(instances: &[QAInstance]) -> String {
    let mut buf = Vec::new();
    serialize_dataset(instances, &mut buf).expect("in-memory write cannot fail");
    String::from_utf8(buf).expect("serializer emits UTF-8")
}

/// Parses the forge input corpus: one `{id, title, abstract, metadata{}}`
/// object per line.
pub fn parse_corpus<R: Read>(reader: R) -> Result<Vec<Document>, CorpusError> {
    let buf = BufReader::new(reader);
    let mut out = Vec::new();
    for (i, line) in buf.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| CorpusError::MalformedLine(line_no, e.to_string()))?;
        let obj = match value {
            serde_json::Value::Object(o) => o,
            _ => {
                return Err(CorpusError::SchemaViolation {
                    line: line_no,
                    field: "<root>".into(),
                    message: "expected a JSON object".into(),
                })
            }
        };
        let abstract_text = get_str(&obj, "abstract", line_no)?;
        if abstract_text.is_empty() {
            return Err(CorpusError::SchemaViolation {
                line: line_no,
                field: "abstract".into(),
                message: "abstract must be nonempty".into(),
            });
        }
        let metadata = match obj.get("metadata") {
            None | Some(serde_json::Value::Null) => BTreeMap::new(),
            Some(serde_json::Value::Object(m)) => m
                .iter()
                .map(|(k, v)| {
                    let s = match v {
                        serde_json::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    };
                    (k.clone(), s)
                })
                .collect(),
            Some(_) => {
                return Err(CorpusError::SchemaViolation {
                    line: line_no,
                    field: "metadata".into(),
                    message: "expected an object".into(),
                })
            }
        };
        out.push(Document {
            id: get_str(&obj, "id", line_no)?,
            title: get_str(&obj, "title", line_no)?,
            abstract_text,
            metadata,
        });
    }
    Ok(out)
}

pub fn serialize_corpus<W: Write>(docs: &[Document], mut writer: W) -> std::io::Result<()> {
    for d in docs {
        let value = serde_json::json!({
            "id": d.id,
            "title": d.title,
            "abstract": d.abstract_text,
            "metadata": d.metadata,
        });
        serde_json::to_writer(&mut writer, &value)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn passage(id: &str, label: Label) -> Passage {
        Passage {
            id: id.into(),
            text: format!("text of {id}"),
            label,
            source_doc: match label {
                Label::Golden | Label::Natural => Some("doc1".into()),
                Label::Distractor => None,
            },
            pair_of: match label {
                Label::Distractor => Some("p0".into()),
                _ => None,
            },
        }
    }

    fn base_instance() -> QAInstance {
        QAInstance {
            id: "q1".into(),
            question: "How many mammal species are represented?".into(),
            golden_answer: "over 720 mammal species".into(),
            setting: Setting::Base,
            contexts: vec![passage("p0", Label::Golden), passage("p1", Label::Natural)],
            meta: BTreeMap::new(),
        }
    }

    fn ssli_instance() -> QAInstance {
        let mut inst = base_instance();
        inst.id = "q1-ssli".into();
        inst.setting = Setting::Ssli;
        inst.contexts.push(passage("d0", Label::Distractor));
        inst
    }

    #[test]
    fn empty_stream_parses_to_empty_list() {
        assert!(parse_dataset(std::io::empty()).unwrap().is_empty());
    }

    #[test]
    fn empty_list_serializes_to_empty_stream() {
        assert_eq!(serialize_dataset_to_string(&[]), "");
    }

    #[test]
    fn well_formed_line_parses() {
        let line = concat!(
            r#"{"id":"yale-1","question":"How many mammal species are represented in the Yale Peabody Museum's Division of Vertebrate Zoology collection?","#,
            r#""golden_answer":"The collection represents over 720 mammal species.","setting":"ssli","#,
            r#""contexts":[{"id":"p1","text":"The 5,086 mammal skins (over 720 species) date from the 19th century.","label":"golden","source_doc":"yale","pair_of":null},"#,
            r#"{"id":"p29","text":"A 2020 study cited 720 endangered mammal specimens, though this refers to individual specimens rather than distinct species.","label":"distractor","source_doc":null,"pair_of":"p1"}],"meta":{}}"#,
            "\n"
        );
        let parsed = parse_dataset(line.as_bytes()).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].setting, Setting::Ssli);
        assert_eq!(parsed[0].contexts.len(), 2);
    }

    #[test]
    fn ssli_without_distractor_is_schema_violation() {
        let line = r#"{"id":"q","question":"x?","golden_answer":"y","setting":"ssli","contexts":[],"meta":{"golden_absent":"true"}}"#;
        match parse_dataset(line.as_bytes()) {
            Err(CorpusError::SchemaViolation { line: 1, field, .. }) => {
                assert_eq!(field, "NO_DISTRACTOR")
            }
            other => panic!("expected schema violation, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_line_number() {
        let data = "{\"id\":\"a\"}\nnot json\n";
        match parse_dataset(data.as_bytes()) {
            Err(CorpusError::SchemaViolation { line: 1, .. }) => {}
            Err(CorpusError::MalformedLine(2, _)) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_preserved_into_meta() {
        let line = r#"{"id":"q","question":"x?","golden_answer":"y","setting":"base","contexts":[{"id":"p","text":"t","label":"golden","source_doc":"d","pair_of":null}],"extra_field":42}"#;
        let parsed = parse_dataset(line.as_bytes()).unwrap();
        assert_eq!(parsed[0].meta.get("extra_field").map(String::as_str), Some("42"));
        // And it survives a round trip.
        let text = serialize_dataset_to_string(&parsed);
        let reparsed = parse_dataset(text.as_bytes()).unwrap();
        assert_eq!(parsed, reparsed);
    }

    #[test]
    fn validate_accepts_valid_base_instance() {
        assert!(validate_instance(&base_instance()).is_valid());
    }

    #[test]
    fn validate_flags_ssli_with_zero_distractors() {
        let mut inst = ssli_instance();
        inst.contexts.retain(|p| p.label != Label::Distractor);
        let report = validate_instance(&inst);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].code, "NO_DISTRACTOR");
    }

    #[test]
    fn validate_flags_multiple_goldens() {
        let mut inst = base_instance();
        inst.contexts.push(passage("p2", Label::Golden));
        let codes: Vec<_> = validate_instance(&inst).violations.iter().map(|v| v.code).collect();
        assert!(codes.contains(&"MULTI_GOLDEN"));
    }

    #[test]
    fn validate_flags_unpaired_distractor_and_sourceless_golden() {
        let mut inst = ssli_instance();
        inst.contexts[0].source_doc = None; // golden without source
        inst.contexts[2].pair_of = None; // distractor without either link
        let codes: Vec<_> = validate_instance(&inst).violations.iter().map(|v| v.code).collect();
        assert!(codes.contains(&"GOLDEN_NO_SOURCE"));
        assert!(codes.contains(&"DISTRACTOR_UNPAIRED"));
    }

    #[test]
    fn golden_absent_meta_flag_is_accepted() {
        let mut inst = base_instance();
        inst.contexts[0].label = Label::Natural;
        inst.meta.insert(META_GOLDEN_ABSENT.into(), "true".into());
        assert!(validate_instance(&inst).is_valid());
    }

    #[test]
    fn non_ascii_round_trip() {
        let mut inst = base_instance();
        inst.golden_answer = "the α-helix motif".into();
        inst.contexts[0].text = "Die α-Helix ist ein Strukturmotiv — häufig in Proteinen.".into();
        let text = serialize_dataset_to_string(&[inst.clone()]);
        let parsed = parse_dataset(text.as_bytes()).unwrap();
        assert_eq!(parsed, vec![inst]);
    }

    fn random_words(rng: &mut StdRng, n: usize) -> String {
        let words = ["lymphocyte", "genome", "α-helix", "enzyme", "720", "catalysis", "pathway"];
        (0..n).map(|_| words[rng.gen_range(0..words.len())]).collect::<Vec<_>>().join(" ")
    }

    fn random_instance(rng: &mut StdRng, i: usize) -> QAInstance {
        let n_ctx = rng.gen_range(1..8);
        let golden_slot = rng.gen_range(0..n_ctx);
        let setting = if rng.gen_bool(0.5) { Setting::Base } else { Setting::Ssli };
        let mut contexts = Vec::new();
        for c in 0..n_ctx {
            let label = if c == golden_slot {
                Label::Golden
            } else if setting == Setting::Ssli && rng.gen_bool(0.4) {
                Label::Distractor
            } else {
                Label::Natural
            };
            contexts.push(Passage {
                id: format!("q{i}-p{c}"),
                text: random_words(rng, 6),
                label,
                source_doc: if label == Label::Distractor { None } else { Some(format!("doc{c}")) },
                pair_of: if label == Label::Distractor { Some(format!("q{i}-p{golden_slot}")) } else { None },
            });
        }
        if setting == Setting::Ssli && !contexts.iter().any(|p| p.label == Label::Distractor) {
            contexts.push(Passage {
                id: format!("q{i}-pd"),
                text: random_words(rng, 6),
                label: Label::Distractor,
                source_doc: None,
                pair_of: Some(format!("q{i}-p{golden_slot}")),
            });
        }
        let mut meta = BTreeMap::new();
        if rng.gen_bool(0.2) {
            meta.insert("subject".into(), random_words(rng, 1));
        }
        QAInstance {
            id: format!("q{i}"),
            question: format!("{}?", random_words(rng, 5)),
            golden_answer: random_words(rng, 4),
            setting,
            contexts,
            meta,
        }
    }

    #[test]
    fn round_trip_identity_on_random_instances() {
        let mut rng = StdRng::seed_from_u64(42);
        let instances: Vec<QAInstance> = (0..1000).map(|i| random_instance(&mut rng, i)).collect();
        for inst in &instances {
            assert!(validate_instance(inst).is_valid(), "generator produced invalid instance {}", inst.id);
        }
        let text = serialize_dataset_to_string(&instances);
        let parsed = parse_dataset(text.as_bytes()).unwrap();
        assert_eq!(parsed, instances);
        // Determinism: byte-identical on re-serialization.
        assert_eq!(serialize_dataset_to_string(&parsed), text);
    }
}
