//! Client/server messaging. Only parameters, counts and metrics are ever
//! placed on the bus.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::ClientUpdate;
use crate::error::{Error, Result};
use crate::tensor::ParameterVector;

/// Server -> client: the global model for a round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Broadcast {
    pub round_index: u64,
    pub local_epochs: usize,
    pub params: ParameterVector,
}

pub trait Transport {
    fn send_params(&mut self, client_id: &str, message: Broadcast) -> Result<()>;
    fn recv_params(&mut self, client_id: &str) -> Result<Broadcast>;
    fn send_update(&mut self, update: ClientUpdate) -> Result<()>;
    fn recv_update(&mut self) -> Result<ClientUpdate>;
}

/// FIFO queues per client plus one inbound queue at the server.
#[derive(Debug, Default)]
pub struct InProcessBus {
    outbound: BTreeMap<String, VecDeque<Broadcast>>,
    inbound: VecDeque<ClientUpdate>,
}

impl InProcessBus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pending(&self) -> usize {
        self.inbound.len() + self.outbound.values().map(VecDeque::len).sum::<usize>()
    }
}

impl Transport for InProcessBus {
    fn send_params(&mut self, client_id: &str, message: Broadcast) -> Result<()> {
        self.outbound.entry(client_id.to_string()).or_default().push_back(message);
        Ok(())
    }

    fn recv_params(&mut self, client_id: &str) -> Result<Broadcast> {
        self.outbound
            .get_mut(client_id)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| Error::protocol(format!("no broadcast queued for client `{client_id}`")))
    }

    fn send_update(&mut self, update: ClientUpdate) -> Result<()> {
        self.inbound.push_back(update);
        Ok(())
    }

    fn recv_update(&mut self) -> Result<ClientUpdate> {
        self.inbound
            .pop_front()
            .ok_or_else(|| Error::protocol("server expected an update but none is queued"))
    }
}

/// What a wire field carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldRole {
    Parameters,
    Layout,
    Count,
    Metric,
    ClientId,
    RoundIndex,
}

/// Every JSON path a message may contain, with its role. Array elements are
/// written as `[]`.
pub const MESSAGE_SCHEMA: &[(&str, FieldRole)] = &[
    ("broadcast.round_index", FieldRole::RoundIndex),
    ("broadcast.local_epochs", FieldRole::Count),
    ("broadcast.params.values[]", FieldRole::Parameters),
    ("broadcast.params.layout.entries[].name", FieldRole::Layout),
    ("broadcast.params.layout.entries[].shape[]", FieldRole::Layout),
    ("update.client_id", FieldRole::ClientId),
    ("update.round_index", FieldRole::RoundIndex),
    ("update.num_examples", FieldRole::Count),
    ("update.train_loss", FieldRole::Metric),
    ("update.val_loss", FieldRole::Metric),
    ("update.params.values[]", FieldRole::Parameters),
    ("update.params.layout.entries[].name", FieldRole::Layout),
    ("update.params.layout.entries[].shape[]", FieldRole::Layout),
];

/// Leaf paths of a JSON value, in the notation of [`MESSAGE_SCHEMA`].
pub fn leaf_paths(prefix: &str, value: &serde_json::Value, out: &mut Vec<String>) {
    match value {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                leaf_paths(&format!("{prefix}.{k}"), v, out);
            }
        }
        serde_json::Value::Array(items) => {
            for v in items {
                leaf_paths(&format!("{prefix}[]"), v, out);
            }
            if items.is_empty() {
                out.push(format!("{prefix}[]"));
            }
        }
        _ => out.push(prefix.to_string()),
    }
}
