//! Shared machinery for the acceptance suite: a minimal scripted HTTP
//! chat-completions server, a synthetic abstract corpus, and engineered
//! datasets whose distractors dominate the query in embedding space.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use sciqa_workbench::corpus::{Document, Label, Passage, QAInstance, Setting};
use sciqa_workbench::gateway::FixtureBook;

/// What the stub server does with each request.
#[derive(Clone)]
pub enum StubBehavior {
    /// 200 with content dispatched on prompt keywords, after a fixed delay.
    Ok { latency: Duration },
    /// HTTP 500 for the first `failures` requests, then 200.
    FailThenOk { failures: usize },
    /// The same status for every request.
    AlwaysStatus(u16),
}

pub struct StubServer {
    pub url: String,
    hits: Arc<AtomicUsize>,
    max_concurrent: Arc<AtomicUsize>,
    request_times: Arc<Mutex<Vec<Instant>>>,
    shutdown: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl StubServer {
    pub fn start(behavior: StubBehavior) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
        listener.set_nonblocking(true).expect("nonblocking listener");
        let url = format!("http://{}", listener.local_addr().unwrap());

        let hits = Arc::new(AtomicUsize::new(0));
        let concurrent = Arc::new(AtomicUsize::new(0));
        let max_concurrent = Arc::new(AtomicUsize::new(0));
        let request_times = Arc::new(Mutex::new(Vec::new()));
        let shutdown = Arc::new(AtomicBool::new(false));

        let handle = {
            let hits = hits.clone();
            let concurrent = concurrent.clone();
            let max_concurrent = max_concurrent.clone();
            let request_times = request_times.clone();
            let shutdown = shutdown.clone();
            std::thread::spawn(move || {
                let mut workers = Vec::new();
                while !shutdown.load(Ordering::SeqCst) {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            let behavior = behavior.clone();
                            let hits = hits.clone();
                            let concurrent = concurrent.clone();
                            let max_concurrent = max_concurrent.clone();
                            let request_times = request_times.clone();
                            workers.push(std::thread::spawn(move || {
                                handle_connection(
                                    stream,
                                    behavior,
                                    hits,
                                    concurrent,
                                    max_concurrent,
                                    request_times,
                                );
                            }));
                        }
                        Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            std::thread::sleep(Duration::from_millis(2));
                        }
                        Err(_) => break,
                    }
                }
                for w in workers {
                    let _ = w.join();
                }
            })
        };

        Self { url, hits, max_concurrent, request_times, shutdown, handle: Some(handle) }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn max_concurrent(&self) -> usize {
        self.max_concurrent.load(Ordering::SeqCst)
    }

    /// Arrival times of every request, in order.
    pub fn request_times(&self) -> Vec<Instant> {
        self.request_times.lock().unwrap().clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(
    mut stream: TcpStream,
    behavior: StubBehavior,
    hits: Arc<AtomicUsize>,
    concurrent: Arc<AtomicUsize>,
    max_concurrent: Arc<AtomicUsize>,
    request_times: Arc<Mutex<Vec<Instant>>>,
) {
    let body = match read_http_request(&mut stream) {
        Some(body) => body,
        None => return,
    };
    let seq = hits.fetch_add(1, Ordering::SeqCst);
    request_times.lock().unwrap().push(Instant::now());
    let now = concurrent.fetch_add(1, Ordering::SeqCst) + 1;
    max_concurrent.fetch_max(now, Ordering::SeqCst);

    let response = match behavior {
        StubBehavior::Ok { latency } => {
            std::thread::sleep(latency);
            ok_response(&dispatch_content(&body))
        }
        StubBehavior::FailThenOk { failures } => {
            if seq < failures {
                status_response(500, "Internal Server Error")
            } else {
                ok_response(&dispatch_content(&body))
            }
        }
        StubBehavior::AlwaysStatus(code) => {
            status_response(code, "scripted status")
        }
    };
    concurrent.fetch_sub(1, Ordering::SeqCst);
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
}

/// Reads one HTTP/1.1 request (headers + content-length body) and returns
/// the body.
fn read_http_request(stream: &mut TcpStream) -> Option<String> {
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end;
    loop {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        buf.extend_from_slice(&chunk[..n]);
        if let Some(pos) = find_subslice(&buf, b"\r\n\r\n") {
            header_end = pos + 4;
            break;
        }
        if buf.len() > 1 << 20 {
            return None;
        }
    }
    let headers = String::from_utf8_lossy(&buf[..header_end]).to_lowercase();
    let content_length: usize = headers
        .lines()
        .find_map(|l| l.strip_prefix("content-length:"))
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0);
    while buf.len() < header_end + content_length {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            break;
        }
        buf.extend_from_slice(&chunk[..n]);
    }
    Some(String::from_utf8_lossy(&buf[header_end..]).to_string())
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

/// Keyword dispatch over the request body so one server can answer every
/// pipeline stage.
fn dispatch_content(body: &str) -> String {
    if body.contains("intent recognition agent") {
        r#"{\"topic\":\"science\",\"entity_type\":\"entities\",\"intent\":\"factual\",\"expected_answer_type\":\"short answer\"}"#
            .to_string()
    } else if body.contains("evidence assessor") {
        "0.9".to_string()
    } else if body.contains("evidence condenser") {
        "Condensed evidence sentence.".to_string()
    } else if body.contains("answer-quality judge") {
        r#"{\"value\": 5, \"rationale\": \"scripted\"}"#.to_string()
    } else {
        "Scripted stub answer.".to_string()
    }
}

fn ok_response(content: &str) -> String {
    let body = format!(
        r#"{{"choices":[{{"message":{{"role":"assistant","content":"{content}"}}}}]}}"#
    );
    format!(
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
}

fn status_response(code: u16, reason: &str) -> String {
    let body = format!(r#"{{"error":"{reason}"}}"#);
    format!(
        "HTTP/1.1 {code} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
}

const NOUNS: &[&str] = &[
    "enzyme", "membrane", "pathway", "genome", "receptor", "protein", "catalyst", "neuron",
    "antibody", "substrate",
];
const VERBS: &[&str] =
    &["regulates", "inhibits", "binds", "activates", "modulates", "degrades", "stabilizes"];
const OBJECTS: &[&str] = &[
    "signal transduction", "gene expression", "cell division", "energy metabolism",
    "immune response", "lipid synthesis", "ion transport",
];

/// Deterministic synthetic corpus of scientific-looking abstracts sharing a
/// common vocabulary (so document clustering keeps them together).
pub fn synthetic_corpus(n_docs: usize, seed: u64) -> Vec<Document> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n_docs)
        .map(|i| {
            let n_sentences = rng.gen_range(3..7);
            let sentences: Vec<String> = (0..n_sentences)
                .map(|_| {
                    format!(
                        "The {} {} {} under controlled conditions.",
                        NOUNS[rng.gen_range(0..NOUNS.len())],
                        VERBS[rng.gen_range(0..VERBS.len())],
                        OBJECTS[rng.gen_range(0..OBJECTS.len())],
                    )
                })
                .collect();
            Document {
                id: format!("doc-{i:03}"),
                title: format!("Study {i:03}"),
                abstract_text: sentences.join(" "),
                metadata: BTreeMap::new(),
            }
        })
        .collect()
}

/// Fixture book driving the forge over [`synthetic_corpus`] output: one
/// extraction, one QA pair, one guidance block per document, and a generic
/// non-leaking distractor batch.
pub fn forge_fixtures(docs: &[Document], distractor_count: usize) -> FixtureBook {
    let mut book = FixtureBook::new();
    for doc in docs {
        let id = &doc.id;
        book.register(
            "extract",
            &format!("## Document ID: {id}\n"),
            &format!(
                r#"{{"methods": "observational assay for {id}", "results": "activity level {id} was measured", "significance": "relevant to regulation"}}"#
            ),
        );
        book.register(
            "generate_qa",
            &format!("(Document ID: {id}):"),
            &format!(
                r#"{{"pairs": [{{"question": "What activity level was measured in study {id}?", "answer": "Study {id} measured an activity level of {n} units.", "qtype": "result"}}]}}"#,
                n = 10 + id.len()
            ),
        );
        book.register(
            "guidance",
            &format!("## Source document ID: {id}\n"),
            &format!(
                r#"{{"doc_id": "{id}", "target_type": "misleading", "main_idea": "activity measurement context", "answer_avoidance": "the measured activity level"}}"#
            ),
        );
    }
    let distractors: Vec<String> = (0..distractor_count)
        .map(|i| format!("\"Archival calibration note {i} discusses instrument drift without reporting measurements.\""))
        .collect();
    book.register("distract", "", &format!(r#"{{"distractors": [{}]}}"#, distractors.join(", ")));
    book
}

/// An engineered distractor-separation dataset: each query shares far more
/// character-trigram mass with its distractors than with the golden
/// passage, so pure cosine ranking is fooled while a label-faithful scorer
/// is not.
pub fn engineered_ssli(n_instances: usize) -> Vec<QAInstance> {
    (0..n_instances)
        .map(|i| {
            let marker = format!("zorblat{i:02}-quuxite{i:02}");
            let question =
                format!("What is the {marker} coefficient reported for specimen batch {i:02}?");
            let golden_answer = format!("A value of {} units was recorded.", 3 * i + 7);
            let golden = Passage {
                id: format!("g{i:02}"),
                text: format!(
                    "Careful bench measurement recorded {} Persistent follow-up confirmed it.",
                    golden_answer.to_lowercase()
                ),
                label: Label::Golden,
                source_doc: Some(format!("gdoc{i:02}")),
                pair_of: None,
            };
            let naturals: Vec<Passage> = (0..2)
                .map(|j| Passage {
                    id: format!("n{i:02}-{j}"),
                    text: "Laboratory notebooks describe routine preparation and storage procedures.".into(),
                    label: Label::Natural,
                    source_doc: Some(format!("ndoc{j}")),
                    pair_of: None,
                })
                .collect();
            let distractors: Vec<Passage> = (0..4)
                .map(|j| Passage {
                    id: format!("d{i:02}-{j}"),
                    text: format!(
                        "The {marker} coefficient reported for specimen batch {i:02} remains contested; \
                         review {j} disputes the {marker} coefficient without stating one."
                    ),
                    label: Label::Distractor,
                    source_doc: None,
                    pair_of: Some(format!("g{i:02}")),
                })
                .collect();
            // Golden buried mid-pool: distractors, two naturals, golden, distractors.
            let mut contexts = Vec::new();
            contexts.push(distractors[0].clone());
            contexts.push(naturals[0].clone());
            contexts.push(distractors[1].clone());
            contexts.push(golden);
            contexts.push(naturals[1].clone());
            contexts.push(distractors[2].clone());
            contexts.push(distractors[3].clone());
            QAInstance {
                id: format!("eng-{i:02}"),
                question,
                golden_answer,
                setting: Setting::Ssli,
                contexts,
                meta: BTreeMap::new(),
            }
        })
        .collect()
}

/// Fixture book where distractors score high but still below τ=0.8: the
/// threshold is the only thing keeping them out of the evidence.
pub fn adversarial_fixtures(instances: &[QAInstance]) -> FixtureBook {
    let mut book = FixtureBook::new();
    book.register(
        "intent",
        "",
        r#"{"topic":"metrology","entity_type":"coefficient","intent":"factual","expected_answer_type":"numeric value"}"#,
    );
    book.register("summarize", "", "Condensed supporting evidence.");
    book.register("judge", "", r#"{"value": 5, "rationale": "matches"}"#);
    for inst in instances {
        for ctx in &inst.contexts {
            let score = match ctx.label {
                Label::Golden => "0.95",
                Label::Distractor => "0.7",
                Label::Natural => "0.3",
            };
            book.register("score", &format!("[{}]:", ctx.id), score);
        }
        book.register("generate", &format!("## Question: {}", inst.question), &inst.golden_answer);
    }
    book
}
