use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// One expert-labelled visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub state: usize,
    pub action: usize,
    /// 1-based timestep of the visit.
    pub h: usize,
}

/// Expert labels collected where the gate fired. With a capacity, the
/// oldest samples are evicted first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InterventionBuffer {
    samples: VecDeque<Sample>,
    capacity: Option<usize>,
    added: usize,
}

impl InterventionBuffer {
    pub fn new(capacity: Option<usize>) -> Self {
        Self {
            samples: VecDeque::new(),
            capacity,
            added: 0,
        }
    }

    pub fn push(&mut self, sample: Sample) {
        if let Some(cap) = self.capacity {
            if cap == 0 {
                self.added += 1;
                return;
            }
            if self.samples.len() == cap {
                self.samples.pop_front();
            }
        }
        self.samples.push_back(sample);
        self.added += 1;
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Total pushes, including evicted samples.
    pub fn total_added(&self) -> usize {
        self.added
    }

    pub fn iter(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter()
    }

    /// Visit counts per state.
    pub fn state_counts(&self, num_states: usize) -> Vec<usize> {
        let mut counts = vec![0; num_states];
        for s in &self.samples {
            counts[s.state] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_evicts_oldest() {
        let mut b = InterventionBuffer::new(Some(2));
        for state in 0..3 {
            b.push(Sample { state, action: 0, h: 1 });
        }
        assert_eq!(b.len(), 2);
        assert_eq!(b.total_added(), 3);
        assert_eq!(b.iter().map(|s| s.state).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(b.state_counts(3), vec![0, 1, 1]);
    }
}
