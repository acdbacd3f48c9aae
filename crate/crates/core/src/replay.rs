//! FIFO experience replay.

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// `next_state` is terminal; bootstrapping stops here.
    pub terminal: bool,
}

/// Ring buffer that evicts the oldest transition once full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    /// Slot the next push writes to once the buffer is full.
    head: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
            pushed: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Total number of transitions ever pushed.
    pub fn total_pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        self.pushed += 1;
    }

    /// The `i`-th oldest stored transition.
    pub fn get(&self, i: usize) -> Option<&Transition> {
        if i >= self.storage.len() {
            return None;
        }
        let start = if self.storage.len() < self.capacity {
            0
        } else {
            self.head
        };
        Some(&self.storage[(start + i) % self.storage.len()])
    }

    /// Stored transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> + '_ {
        (0..self.len()).map(move |i| self.get(i).expect("index in range"))
    }

    /// `n` uniform draws with replacement.
    pub fn sample_minibatch<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<&Transition>> {
        if self.is_empty() {
            return Err(Error::Empty("cannot sample from an empty replay buffer"));
        }
        let len = self.storage.len();
        Ok((0..n)
            .map(|_| &self.storage[rng.gen_range(0..len)])
            .collect())
    }

    /// Owned copy of the most recent `min(n_srl, len)` transitions, oldest first.
    pub fn snapshot(&self, n_srl: usize) -> Result<Vec<Transition>> {
        if n_srl == 0 || self.is_empty() {
            return Err(Error::Empty(
                "replay snapshot needs a positive size and a nonempty buffer",
            ));
        }
        let n = n_srl.min(self.len());
        Ok((self.len() - n..self.len())
            .map(|i| self.get(i).expect("index in range").clone())
            .collect())
    }

    /// Dumps the buffer as CSV: `state_*, action, reward, next_state_*, terminal`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let dim = self.get(0).map_or(0, |t| t.state.len());
        let mut header: Vec<String> = (0..dim).map(|i| format!("state_{i}")).collect();
        header.push("action".into());
        header.push("reward".into());
        header.extend((0..dim).map(|i| format!("next_state_{i}")));
        header.push("terminal".into());
        writeln!(out, "{}", header.join(","))?;
        for t in self.iter() {
            let mut row: Vec<String> = t.state.iter().map(|v| v.to_string()).collect();
            row.push(t.action.to_string());
            row.push(t.reward.to_string());
            row.extend(t.next_state.iter().map(|v| v.to_string()));
            row.push(u8::from(t.terminal).to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}
