use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Completer, CompletionRequest, CompletionResponse, GatewayError};

/// Lowercase hex SHA-256 of the exact prompt bytes.
pub fn prompt_hash(prompt: &str) -> String {
    Sha256::digest(prompt.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReplayRecord {
    prompt_hash: String,
    response_text: String,
}

/// Recorded completions keyed by [`prompt_hash`].
///
/// Saved as JSON Lines sorted by hash, so the same contents always produce
/// the same bytes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayStore {
    entries: BTreeMap<String, String>,
}

impl ReplayStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let reader = BufReader::new(File::open(path)?);
        let mut entries = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |message: String| GatewayError::ReplayCorrupt {
                path: path.display().to_string(),
                line: idx + 1,
                message,
            };
            let rec: ReplayRecord =
                serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            if rec.prompt_hash.len() != 64 || !rec.prompt_hash.bytes().all(|b| b.is_ascii_hexdigit())
            {
                return Err(corrupt(format!("bad prompt hash {:?}", rec.prompt_hash)));
            }
            if let Some(prev) = entries.insert(rec.prompt_hash.clone(), rec.response_text.clone()) {
                if prev != rec.response_text {
                    return Err(corrupt(format!(
                        "conflicting responses for hash {}",
                        rec.prompt_hash
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<(), GatewayError> {
        let mut w = BufWriter::new(File::create(path)?);
        for (hash, text) in &self.entries {
            let rec = ReplayRecord {
                prompt_hash: hash.clone(),
                response_text: text.clone(),
            };
            writeln!(w, "{}", serde_json::to_string(&rec).expect("record serializes"))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn record(&mut self, prompt: &str, response: impl Into<String>) {
        self.entries.insert(prompt_hash(prompt), response.into());
    }

    pub fn lookup(&self, prompt: &str) -> Option<&str> {
        self.entries.get(&prompt_hash(prompt)).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Serves completions from a [`ReplayStore`].
///
/// On a miss: strict mode fails with [`GatewayError::ReplayMiss`]; otherwise
/// the optional live fallback is asked and its answer recorded, and without a
/// fallback the miss yields an empty completion (which downstream steps drop).
pub struct ReplayCompleter {
    store: Mutex<ReplayStore>,
    strict: bool,
    fallback: Option<Box<dyn Completer>>,
}

impl ReplayCompleter {
    pub fn new(store: ReplayStore, strict: bool) -> Self {
        Self {
            store: Mutex::new(store),
            strict,
            fallback: None,
        }
    }

    pub fn with_fallback(mut self, live: Box<dyn Completer>) -> Self {
        self.fallback = Some(live);
        self
    }

    pub fn lookup(&self, prompt: &str) -> Result<String, GatewayError> {
        let store = self.store.lock().expect("replay store lock");
        match store.lookup(prompt) {
            Some(text) => Ok(text.to_string()),
            None => Err(GatewayError::ReplayMiss {
                hash: prompt_hash(prompt),
            }),
        }
    }

    /// Snapshot of the store, including anything recorded from the fallback.
    pub fn store(&self) -> ReplayStore {
        self.store.lock().expect("replay store lock").clone()
    }
}

impl Completer for ReplayCompleter {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        request.validate()?;
        let hash = prompt_hash(&request.prompt);
        match self.lookup(&request.prompt) {
            Ok(text) => Ok(CompletionResponse {
                text,
                request_id: format!("replay-{hash}"),
            }),
            Err(miss) if self.strict => Err(miss),
            Err(_) => match &self.fallback {
                Some(live) => {
                    let resp = live.complete(request)?;
                    self.store
                        .lock()
                        .expect("replay store lock")
                        .record(&request.prompt, resp.text.clone());
                    Ok(resp)
                }
                None => {
                    log::warn!("no recorded completion for prompt hash {hash}; returning empty text");
                    Ok(CompletionResponse {
                        text: String::new(),
                        request_id: format!("replay-miss-{hash}"),
                    })
                }
            },
        }
    }

    fn max_concurrency(&self) -> usize {
        self.fallback.as_ref().map_or(1, |f| f.max_concurrency())
    }
}
