use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendFailure, GatewayError, InstructionId, ModelRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub instruction_id: InstructionId,
    pub response_text: String,
    /// Restricts the entry to one dataset sample; shared otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<String>,
}

/// Scripted model responses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))
    }

    /// Entries visible to one sample: shared entries plus its own.
    pub fn for_sample(&self, sample: &str) -> Vec<TranscriptEntry> {
        self.entries.iter().filter(|e| e.sample.as_deref().is_none_or(|s| s == sample)).cloned().collect()
    }
}

/// Replays responses in order, one FIFO queue per instruction id.
pub struct MockBackend {
    queues: Mutex<HashMap<InstructionId, VecDeque<String>>>,
}

impl MockBackend {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        let mut queues: HashMap<InstructionId, VecDeque<String>> = HashMap::new();
        for e in entries {
            queues.entry(e.instruction_id).or_default().push_back(e.response_text);
        }
        MockBackend { queues: Mutex::new(queues) }
    }

    pub fn remaining(&self, id: InstructionId) -> usize {
        self.queues.lock().unwrap().get(&id).map_or(0, VecDeque::len)
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn send(&self, request: &ModelRequest) -> Result<String, BackendFailure> {
        self.queues
            .lock()
            .unwrap()
            .get_mut(&request.instruction_id)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| BackendFailure::Rejected(format!("transcript has no response left for {}", request.instruction_id)))
    }
}
