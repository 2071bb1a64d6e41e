use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::LatentVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub state: LatentVector,
    pub action: LatentVector,
    pub reward: f64,
    pub next_state: LatentVector,
    pub done: bool,
}

/// Bounded FIFO replay memory with uniform sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    latent_dim: usize,
    records: VecDeque<TransitionRecord>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, latent_dim: usize) -> Result<Self> {
        if capacity == 0 || latent_dim == 0 {
            return Err(Error::Config("replay capacity and latent_dim must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            latent_dim,
            records: VecDeque::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &TransitionRecord> {
        self.records.iter()
    }

    pub fn push(&mut self, record: TransitionRecord) -> Result<()> {
        let k = self.latent_dim;
        if record.state.dim() != k || record.action.dim() != k || record.next_state.dim() != k {
            return Err(Error::invalid(format!(
                "transition dimensions {}/{}/{} do not match buffer dimension {k}",
                record.state.dim(),
                record.action.dim(),
                record.next_state.dim()
            )));
        }
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
        Ok(())
    }

    /// `batch_size` records drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<TransitionRecord>> {
        if self.records.is_empty() {
            return Err(Error::Unavailable("cannot sample from an empty replay buffer".into()));
        }
        let n = self.records.len();
        Ok((0..batch_size)
            .map(|_| self.records[rng.random_range(0..n)].clone())
            .collect())
    }
}
