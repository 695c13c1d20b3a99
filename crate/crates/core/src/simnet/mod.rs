// SPDX-License-Identifier: Apache-2.0

//! Discrete-event network emulation.
//!
//! [`Simulator`] is a plain event queue over simulated microseconds. Events
//! scheduled for the same instant run in scheduling order, so a run is a pure
//! function of its inputs. [`world::World`] drives the TM, the controller,
//! the switches and the hosts on top of it.

pub mod world;

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("cannot schedule at {at} us, the clock is already at {now} us")]
    PastTime { at: u64, now: u64 },
    #[error("events still pending past {limit_us} us ({pending} queued)")]
    LimitExceeded { limit_us: u64, pending: usize },
    #[error("{0} never completed")]
    NeverCompleted(String),
}

struct Scheduled<E> {
    at: u64,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

pub struct Simulator<E> {
    now: u64,
    seq: u64,
    processed: u64,
    queue: BinaryHeap<Reverse<Scheduled<E>>>,
}

impl<E> Default for Simulator<E> {
    fn default() -> Self {
        Simulator {
            now: 0,
            seq: 0,
            processed: 0,
            queue: BinaryHeap::new(),
        }
    }
}

impl<E> Simulator<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    /// Number of events popped so far.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn schedule(&mut self, at: u64, event: E) -> Result<(), SimError> {
        if at < self.now {
            return Err(SimError::PastTime { at, now: self.now });
        }
        self.seq += 1;
        self.queue.push(Reverse(Scheduled {
            at,
            seq: self.seq,
            event,
        }));
        Ok(())
    }

    pub fn schedule_in(&mut self, delay_us: u64, event: E) {
        let at = self.now.saturating_add(delay_us);
        self.schedule(at, event).expect("relative times are never in the past");
    }

    /// Time of the next event, if any.
    pub fn peek_time(&self) -> Option<u64> {
        self.queue.peek().map(|Reverse(s)| s.at)
    }

    /// Removes the next event and advances the clock to it.
    pub fn pop(&mut self) -> Option<(u64, E)> {
        let Reverse(s) = self.queue.pop()?;
        self.now = s.at;
        self.processed += 1;
        Some((s.at, s.event))
    }

    /// Runs `handler` on every event up to and including `limit_us`. Fails
    /// if events remain queued beyond the limit.
    pub fn run_until_idle<F>(&mut self, limit_us: u64, mut handler: F) -> Result<(), SimError>
    where
        F: FnMut(&mut Simulator<E>, E),
    {
        while let Some(at) = self.peek_time() {
            if at > limit_us {
                return Err(SimError::LimitExceeded {
                    limit_us,
                    pending: self.pending(),
                });
            }
            let (_, ev) = self.pop().expect("peeked");
            handler(self, ev);
        }
        Ok(())
    }
}

/// A labelled interval of simulated time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementSpan {
    pub label: String,
    pub start_us: u64,
    pub end_us: u64,
}

impl MeasurementSpan {
    pub fn duration_us(&self) -> u64 {
        self.end_us - self.start_us
    }
}

/// Final state of one named node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSummary {
    pub name: String,
    pub kind: &'static str,
    pub nid: Option<u64>,
    pub state: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counters {
    pub packets_sent: u64,
    pub packet_ins: u64,
    pub table_miss_drops: u64,
    pub hop_limit_drops: u64,
    pub link_down_drops: u64,
    pub data_delivered: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimReport {
    pub spans: Vec<MeasurementSpan>,
    pub nodes: Vec<NodeSummary>,
    pub formation_us: Option<u64>,
    pub end_us: u64,
    pub events: u64,
    pub counters: Counters,
}

pub const CSV_HEADER: &str = "label,start_us,end_us,duration_us";

impl SimReport {
    pub fn span(&self, label: &str) -> Option<&MeasurementSpan> {
        self.spans.iter().find(|s| s.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for s in &self.spans {
            let _ = writeln!(out, "{},{},{},{}", s.label, s.start_us, s.end_us, s.duration_us());
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "simulated time: {} us ({} events)", self.end_us, self.events);
        match self.formation_us {
            Some(t) => {
                let _ = writeln!(out, "switch fabric formed at: {t} us");
            }
            None => out.push_str("switch fabric formed at: never\n"),
        }
        out.push_str("nodes:\n");
        for n in &self.nodes {
            let nid = n.nid.map_or_else(|| "-".to_string(), |v| v.to_string());
            let _ = writeln!(out, "  {:<12} {:<6} nid={:<4} {}", n.name, n.kind, nid, n.state);
        }
        out.push_str("spans:\n");
        for s in &self.spans {
            let _ = writeln!(
                out,
                "  {:<24} {:>10} .. {:>10}  {:>10} us",
                s.label,
                s.start_us,
                s.end_us,
                s.duration_us()
            );
        }
        let c = &self.counters;
        let _ = writeln!(
            out,
            "packets sent: {}, packet-ins: {}, drops: miss {} hop-limit {} link-down {}",
            c.packets_sent, c.packet_ins, c.table_miss_drops, c.hop_limit_drops, c.link_down_drops
        );
        out
    }
}
