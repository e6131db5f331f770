use std::collections::VecDeque;

use rand::Rng;

use super::Transition;

/// Returned by [`ReplayBuffer::sample`] while the buffer holds fewer
/// transitions than the requested batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Warmup {
    pub available: usize,
    pub required: usize,
}

/// Uniform experience replay with oldest-first eviction.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `batch_size` distinct transitions chosen uniformly at random.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        batch_size: usize,
    ) -> Result<Vec<&Transition>, Warmup> {
        if self.items.len() < batch_size {
            return Err(Warmup {
                available: self.items.len(),
                required: batch_size,
            });
        }
        Ok(rand::seq::index::sample(rng, self.items.len(), batch_size)
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}
