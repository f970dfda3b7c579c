//! EV queue and the mapped charge-demand queue.
//!
//! Each EV owes `blocks_total` energy blocks; the demand queue is the
//! concatenation of those blocks in arrival order. Service always takes
//! demands from the head, so EVs depart in FIFO order.

use std::collections::VecDeque;

use rand::Rng;

use crate::chain::BatchLaw;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvRecord {
    pub id: u64,
    pub blocks_total: u32,
    pub blocks_remaining: u32,
    pub arrival_period: u64,
}

/// An EV that finished charging.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Departure {
    pub id: u64,
    pub arrival_period: u64,
    pub departure_period: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DualQueue {
    evs: VecDeque<EvRecord>,
    demand_len: u64,
    next_id: u64,
    clamps: u64,
}

impl DualQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `a` EVs with block counts drawn from `law`; returns the number
    /// of demands added.
    pub fn enqueue_arrivals<R: Rng + ?Sized>(&mut self, a: u64, law: BatchLaw, period: u64, rng: &mut R) -> u64 {
        let mut added = 0;
        for _ in 0..a {
            let blocks = law.sample(rng);
            self.push_ev(blocks, period);
            added += blocks as u64;
        }
        added
    }

    /// Appends one EV owing `blocks` demands.
    pub fn push_ev(&mut self, blocks: u32, period: u64) {
        assert!(blocks >= 1, "an EV owes at least one block");
        self.evs.push_back(EvRecord {
            id: self.next_id,
            blocks_total: blocks,
            blocks_remaining: blocks,
            arrival_period: period,
        });
        self.next_id += 1;
        self.demand_len += blocks as u64;
    }

    /// Serves up to `k_prime` demands from the head. Returns the number served;
    /// over-requests are clamped to the queue length and counted.
    pub fn serve_demands(&mut self, k_prime: u64) -> u64 {
        self.serve_demands_recording(k_prime, 0, &mut |_| {})
    }

    /// As [`serve_demands`](Self::serve_demands), reporting each EV that
    /// departs during `period`.
    pub fn serve_demands_recording(&mut self, k_prime: u64, period: u64, on_departure: &mut dyn FnMut(Departure)) -> u64 {
        if k_prime > self.demand_len {
            self.clamps += 1;
        }
        let served = k_prime.min(self.demand_len);
        let mut left = served;
        while left > 0 {
            let head = self.evs.front_mut().expect("demand_len > 0 implies an EV");
            let take = left.min(head.blocks_remaining as u64);
            head.blocks_remaining -= take as u32;
            left -= take;
            if head.blocks_remaining == 0 {
                let ev = self.evs.pop_front().unwrap();
                on_departure(Departure { id: ev.id, arrival_period: ev.arrival_period, departure_period: period });
            }
        }
        self.demand_len -= served;
        served
    }

    /// `(ev_len, demand_len)`.
    pub fn queue_lengths(&self) -> (u64, u64) {
        (self.evs.len() as u64, self.demand_len)
    }

    pub fn ev_len(&self) -> u64 {
        self.evs.len() as u64
    }

    pub fn demand_len(&self) -> u64 {
        self.demand_len
    }

    /// Number of `serve_demands` calls that asked for more than was queued.
    pub fn clamp_count(&self) -> u64 {
        self.clamps
    }

    pub fn evs(&self) -> impl Iterator<Item = &EvRecord> {
        self.evs.iter()
    }

    /// Checks `demand_len == sum blocks_remaining` and that every queued EV
    /// has work left.
    pub fn mapping_identity_holds(&self) -> bool {
        let sum: u64 = self.evs.iter().map(|e| e.blocks_remaining as u64).sum();
        sum == self.demand_len
            && self
                .evs
                .iter()
                .all(|e| e.blocks_remaining > 0 && e.blocks_remaining <= e.blocks_total && e.blocks_total >= 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamId};

    fn fig2_queue() -> DualQueue {
        let mut q = DualQueue::new();
        q.push_ev(3, 0);
        q.push_ev(2, 0);
        q
    }

    #[test]
    fn lengths_of_mapped_queue() {
        assert_eq!(DualQueue::new().queue_lengths(), (0, 0));
        assert_eq!(fig2_queue().queue_lengths(), (2, 5));
        let mut q = DualQueue::new();
        q.push_ev(2, 0);
        q.serve_demands(1);
        assert_eq!(q.queue_lengths(), (1, 1));
    }

    #[test]
    fn enqueue_adds_sampled_blocks() {
        let mut rng = stream(1, 0, StreamId::Batches);
        let mut q = DualQueue::new();
        let before = q.clone();
        assert_eq!(q.enqueue_arrivals(0, BatchLaw::new(3).unwrap(), 0, &mut rng), 0);
        assert_eq!(q, before);
        let added = q.enqueue_arrivals(4, BatchLaw::new(3).unwrap(), 0, &mut rng);
        assert_eq!(q.ev_len(), 4);
        assert_eq!(q.demand_len(), added);
        assert!(q.mapping_identity_holds());
    }

    #[test]
    fn fifo_partial_service() {
        let mut q = fig2_queue();
        let mut gone = Vec::new();
        let served = q.serve_demands_recording(4, 7, &mut |d| gone.push(d.id));
        assert_eq!(served, 4);
        assert_eq!(gone, vec![0]);
        assert_eq!(q.queue_lengths(), (1, 1));
        assert_eq!(q.evs().next().unwrap().blocks_remaining, 1);
    }

    #[test]
    fn zero_service_is_noop_and_overrequest_clamps() {
        let mut q = fig2_queue();
        let before = q.clone();
        assert_eq!(q.serve_demands(0), 0);
        assert_eq!(q, before);

        let mut q = DualQueue::new();
        q.push_ev(1, 0);
        assert_eq!(q.serve_demands(5), 1);
        assert_eq!(q.queue_lengths(), (0, 0));
        assert_eq!(q.clamp_count(), 1);
    }
}
