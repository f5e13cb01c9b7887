//! FIFO experience replay with uniform sampling.

use std::sync::atomic::{AtomicUsize, Ordering};

use parking_lot::Mutex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::STATE_DIM;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: [f32; STATE_DIM],
    pub action: u8,
    pub reward: f32,
    pub next_state: [f32; STATE_DIM],
    pub done: bool,
}

/// Columnar minibatch, ready to feed the network.
#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub states: Vec<f32>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f32>,
    pub next_states: Vec<f32>,
    pub dones: Vec<f32>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn clear(&mut self) {
        self.states.clear();
        self.actions.clear();
        self.rewards.clear();
        self.next_states.clear();
        self.dones.clear();
    }
}

/// Ring buffer; once full, each push overwrites the oldest entry.
pub struct ReplayBuffer {
    cap: usize,
    len: usize,
    head: usize,
    pushed: u64,
    states: Vec<f32>,
    actions: Vec<u8>,
    rewards: Vec<f32>,
    next_states: Vec<f32>,
    dones: Vec<bool>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            cap: capacity,
            len: 0,
            head: 0,
            pushed: 0,
            states: vec![0.0; capacity * STATE_DIM],
            actions: vec![0; capacity],
            rewards: vec![0.0; capacity],
            next_states: vec![0.0; capacity * STATE_DIM],
            dones: vec![false; capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Transitions ever pushed, including overwritten ones.
    pub fn total_pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push_parts(&mut self, state: &[f32], action: u8, reward: f32, next_state: &[f32], done: bool) {
        debug_assert_eq!(state.len(), STATE_DIM);
        debug_assert_eq!(next_state.len(), STATE_DIM);
        let i = self.head;
        let row = i * STATE_DIM..(i + 1) * STATE_DIM;
        self.states[row.clone()].copy_from_slice(state);
        self.next_states[row].copy_from_slice(next_state);
        self.actions[i] = action;
        self.rewards[i] = reward;
        self.dones[i] = done;
        self.head = (self.head + 1) % self.cap;
        self.len = (self.len + 1).min(self.cap);
        self.pushed += 1;
    }

    pub fn push(&mut self, t: &Transition) {
        self.push_parts(&t.state, t.action, t.reward, &t.next_state, t.done);
    }

    /// Entry `i` in insertion order among the retained ones (0 = oldest).
    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len {
            return None;
        }
        let slot = (self.head + self.cap - self.len + i) % self.cap;
        Some(self.slot(slot))
    }

    fn slot(&self, s: usize) -> Transition {
        let row = s * STATE_DIM..(s + 1) * STATE_DIM;
        Transition {
            state: self.states[row.clone()].try_into().unwrap(),
            action: self.actions[s],
            reward: self.rewards[s],
            next_state: self.next_states[row].try_into().unwrap(),
            done: self.dones[s],
        }
    }

    /// Uniform sample with replacement; fails until `batch` entries exist.
    pub fn sample_into<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R, out: &mut Batch) -> Result<()> {
        if self.len < batch || batch == 0 {
            return Err(Error::NotReady { size: self.len, requested: batch });
        }
        out.clear();
        for _ in 0..batch {
            let s = rng.random_range(0..self.len);
            let row = s * STATE_DIM..(s + 1) * STATE_DIM;
            out.states.extend_from_slice(&self.states[row.clone()]);
            out.next_states.extend_from_slice(&self.next_states[row]);
            out.actions.push(self.actions[s] as usize);
            out.rewards.push(self.rewards[s]);
            out.dones.push(if self.dones[s] { 1.0 } else { 0.0 });
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Batch> {
        let mut out = Batch::default();
        self.sample_into(batch, rng, &mut out)?;
        Ok(out)
    }
}

/// Replay buffer shared between actor and learner threads.
///
/// Writers hold the lock for the copy of one batch of transitions; readers
/// hold it for one minibatch gather. `len` is readable without locking.
pub struct SharedReplay {
    inner: Mutex<ReplayBuffer>,
    len: AtomicUsize,
}

impl SharedReplay {
    pub fn new(capacity: usize) -> Self {
        Self {
            inner: Mutex::new(ReplayBuffer::new(capacity)),
            len: AtomicUsize::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.len.load(Ordering::Acquire)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        self.inner.lock().capacity()
    }

    /// Append many transitions under one lock acquisition.
    pub fn with_writer<F: FnOnce(&mut ReplayBuffer)>(&self, f: F) {
        let mut buf = self.inner.lock();
        f(&mut buf);
        self.len.store(buf.len(), Ordering::Release);
    }

    pub fn push(&self, t: &Transition) {
        self.with_writer(|b| b.push(t));
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R, out: &mut Batch) -> Result<()> {
        self.inner.lock().sample_into(batch, rng, out)
    }

    pub fn total_pushed(&self) -> u64 {
        self.inner.lock().total_pushed()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    fn tr(tag: u32) -> Transition {
        let mut state = [0.0; STATE_DIM];
        state[0] = tag as f32;
        let mut next_state = [0.0; STATE_DIM];
        next_state[0] = tag as f32 + 0.5;
        Transition {
            state,
            action: (tag % 5) as u8,
            reward: tag as f32 * 0.25,
            next_state,
            done: tag.is_multiple_of(7),
        }
    }

    #[test]
    fn not_ready_below_batch() {
        let mut b = ReplayBuffer::new(10);
        b.push(&tr(1));
        let e = b.sample(2, &mut derive_rng(0, 0)).unwrap_err();
        assert!(matches!(e, Error::NotReady { size: 1, requested: 2 }));
    }

    #[test]
    fn single_entry_fills_the_batch() {
        let mut b = ReplayBuffer::new(4);
        b.push(&tr(3));
        let s = b.sample(1, &mut derive_rng(0, 0)).unwrap();
        assert_eq!(s.states[0], 3.0);
        assert_eq!(s.actions, vec![3]);
    }

    #[test]
    fn sample_rows_are_stored_tuples() {
        let mut b = ReplayBuffer::new(50);
        for i in 0..30 {
            b.push(&tr(i));
        }
        let s = b.sample(30, &mut derive_rng(1, 0)).unwrap();
        for k in 0..30 {
            let tag = s.states[k * STATE_DIM] as u32;
            let t = tr(tag);
            assert_eq!(s.actions[k], t.action as usize);
            assert_eq!(s.rewards[k], t.reward);
            assert_eq!(s.next_states[k * STATE_DIM], t.next_state[0]);
            assert_eq!(s.dones[k], if t.done { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn sampling_is_roughly_uniform() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let mut b = ReplayBuffer::new(1000);
        for i in 0..1000 {
            b.push(&tr(i));
        }
        let mut counts = vec![0f64; 1000];
        let mut rng = derive_rng(2, 0);
        let mut out = Batch::default();
        for _ in 0..100 {
            b.sample_into(1000, &mut rng, &mut out).unwrap();
            for k in 0..1000 {
                counts[out.states[k * STATE_DIM] as usize] += 1.0;
            }
        }
        let expected = 100.0;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new(999.0).unwrap().cdf(chi2);
        assert!(p > 0.01, "chi2 {chi2} p {p}");
    }

    #[test]
    fn shared_concurrent_pushes_are_all_counted() {
        let shared = SharedReplay::new(100_000);
        std::thread::scope(|s| {
            for t in 0..4u32 {
                let shared = &shared;
                s.spawn(move || {
                    for i in 0..1000 {
                        shared.push(&tr(t * 1000 + i));
                    }
                });
            }
        });
        assert_eq!(shared.len(), 4000);
        assert_eq!(shared.total_pushed(), 4000);
    }

    proptest! {
        #[test]
        fn fifo_matches_deque_model(cap in 1usize..40, n in 0u32..150) {
            let mut b = ReplayBuffer::new(cap);
            let mut model = VecDeque::new();
            for i in 0..n {
                b.push(&tr(i));
                model.push_back(i);
                if model.len() > cap {
                    model.pop_front();
                }
                prop_assert_eq!(b.len(), model.len());
            }
            for (k, &tag) in model.iter().enumerate() {
                prop_assert_eq!(b.get(k).unwrap(), tr(tag));
            }
            prop_assert!(b.get(model.len()).is_none());
            prop_assert_eq!(b.total_pushed(), n as u64);
        }
    }
}
