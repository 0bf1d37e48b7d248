//! Deterministic discrete-event network simulator.
//!
//! Every message between parties becomes an envelope in a pending pool. The
//! scheduler — the adversary's delivery order — repeatedly picks one envelope
//! and hands it to the recipient machine, whose outputs are enqueued in turn.
//! A run ends when the pool drains (the protocol went quiescent) or when the
//! delivery budget is exhausted, which is reported as a diagnostic rather
//! than an error. Runs are bit-reproducible: the only randomness is a seeded
//! generator owned by the scheduler, and all per-party state lives in
//! machines keyed by index.

use std::collections::VecDeque;
use std::rc::Rc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use std::collections::BTreeMap;

use crate::msg::{Event, InstanceTag, Outbox, Path, Payload, Recipient};
use crate::PartyId;

/// Default delivery budget: plenty for every protocol at the supported
/// scales, small enough to flag runaway message storms quickly.
pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// One queued point-to-point message.
#[derive(Clone, Debug)]
pub struct Envelope {
    pub seq: u64,
    pub from: PartyId,
    pub to: PartyId,
    pub tag: InstanceTag,
    pub payload: Rc<Payload>,
    pub words: u64,
    /// Causal depth: boot messages are 1, replies are parent + 1. The
    /// maximum over a run counts adversary-independent round trips.
    pub depth: u32,
}

/// A party's protocol stack, driven entirely by deliveries.
pub trait Machine {
    fn boot(&mut self, out: &mut Outbox);
    fn deliver(&mut self, from: PartyId, tag: &InstanceTag, payload: &Payload, out: &mut Outbox);
    /// Whether this party has produced its terminal output.
    fn done(&self) -> bool;
}

impl<M: Machine + ?Sized> Machine for Box<M> {
    fn boot(&mut self, out: &mut Outbox) {
        (**self).boot(out)
    }
    fn deliver(&mut self, from: PartyId, tag: &InstanceTag, payload: &Payload, out: &mut Outbox) {
        (**self).deliver(from, tag, payload, out)
    }
    fn done(&self) -> bool {
        (**self).done()
    }
}

/// Delivery-order policy. All policies eventually deliver everything; they
/// differ only in how adversarially they reorder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SchedulerKind {
    /// Uniformly random choice from the pool.
    Uniform,
    /// Strict enqueue order; the friendliest network.
    Fifo,
    /// Uniform, except envelopes addressed to `target` are weighted by
    /// `weight` (0 starves the target until nothing else is pending).
    DelayWeighted { target: PartyId, weight: f64 },
}

enum Pool {
    Uniform(Vec<Envelope>),
    Fifo(VecDeque<Envelope>),
    Weighted {
        target: PartyId,
        weight: f64,
        hot: Vec<Envelope>,
        cold: Vec<Envelope>,
    },
}

impl Pool {
    fn new(kind: SchedulerKind) -> Pool {
        match kind {
            SchedulerKind::Uniform => Pool::Uniform(Vec::new()),
            SchedulerKind::Fifo => Pool::Fifo(VecDeque::new()),
            SchedulerKind::DelayWeighted { target, weight } => Pool::Weighted {
                target,
                weight,
                hot: Vec::new(),
                cold: Vec::new(),
            },
        }
    }

    fn push(&mut self, env: Envelope) {
        match self {
            Pool::Uniform(items) => items.push(env),
            Pool::Fifo(items) => items.push_back(env),
            Pool::Weighted {
                target, hot, cold, ..
            } => {
                if env.to == *target {
                    hot.push(env);
                } else {
                    cold.push(env);
                }
            }
        }
    }

    fn len(&self) -> usize {
        match self {
            Pool::Uniform(items) => items.len(),
            Pool::Fifo(items) => items.len(),
            Pool::Weighted { hot, cold, .. } => hot.len() + cold.len(),
        }
    }

    fn pop(&mut self, rng: &mut ChaCha20Rng) -> Option<Envelope> {
        match self {
            Pool::Uniform(items) => {
                if items.is_empty() {
                    return None;
                }
                let i = rng.gen_range(0..items.len());
                Some(items.swap_remove(i))
            }
            Pool::Fifo(items) => items.pop_front(),
            Pool::Weighted {
                weight, hot, cold, ..
            } => {
                let wa = *weight * hot.len() as f64;
                let wb = cold.len() as f64;
                if hot.is_empty() && cold.is_empty() {
                    return None;
                }
                let take_hot = if cold.is_empty() {
                    true
                } else if hot.is_empty() || wa + wb <= 0.0 {
                    false
                } else {
                    rng.gen::<f64>() * (wa + wb) < wa
                };
                let items = if take_hot { hot } else { cold };
                let i = rng.gen_range(0..items.len());
                Some(items.swap_remove(i))
            }
        }
    }
}

/// Per-run counters, serialized into experiment outputs.
#[derive(Clone, Debug, Serialize)]
pub struct RunMetrics {
    pub protocol: String,
    pub n: usize,
    pub f: usize,
    pub seed: u64,
    /// Envelopes enqueued (after fan-out of broadcasts).
    pub sent: u64,
    pub delivered: u64,
    /// Envelopes consumed without effect (duplicates, failed verification).
    pub dropped: u64,
    /// Total words over all sent envelopes.
    pub words_total: u64,
    pub words_by_path: BTreeMap<String, u64>,
    pub max_depth: u32,
    pub budget_exhausted: bool,
    pub honest_done: bool,
}

/// A semantic event with its global sequence position.
#[derive(Clone, Debug, Serialize)]
pub struct EventRec {
    pub seq: u64,
    pub party: PartyId,
    pub event: Event,
}

/// One line of the newline-delimited run trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceRec {
    pub seq: u64,
    pub kind: String,
    pub from: usize,
    pub to: Option<usize>,
    pub instance: String,
    pub words: u64,
}

#[derive(Serialize)]
pub struct RunLog {
    pub metrics: RunMetrics,
    pub events: Vec<EventRec>,
    pub trace: Vec<TraceRec>,
}

fn path_class(path: Path) -> &'static str {
    match path {
        Path::Main => "main",
        Path::GatherInput { .. } => "gather.in",
        Path::GatherS { .. } => "gather.s",
        Path::GatherT { .. } => "gather.t",
        Path::PeDkg => "pe.dkg",
        Path::PeEval => "pe.eval",
        Path::PeIndices { .. } => "pe.idx",
    }
}

fn event_kind(event: &Event) -> &'static str {
    match event {
        Event::RbDelivered { .. } => "rb-delivered",
        Event::GatherOutput { .. } => "gather-output",
        Event::GatherVerified { .. } => "gather-verified",
        Event::PeOutput { .. } => "pe-output",
        Event::PeVerified { .. } => "pe-verified",
        Event::EvalFanout { .. } => "eval-fanout",
        Event::ViewEntered { .. } => "view-entered",
        Event::EchoSigned { .. } => "echo-signed",
        Event::KeyFormed { .. } => "key-formed",
        Event::LockFormed { .. } => "lock-formed",
        Event::CommitFormed { .. } => "commit-formed",
        Event::Decided { .. } => "decided",
    }
}

struct Engine {
    pool: Pool,
    rng: ChaCha20Rng,
    n: usize,
    next_seq: u64,
    trace_on: bool,
    metrics: RunMetrics,
    events: Vec<EventRec>,
    trace: Vec<TraceRec>,
}

impl Engine {
    fn absorb(&mut self, from: PartyId, depth: u32, out: Outbox) {
        self.metrics.dropped += out.dropped;
        for event in out.events {
            let seq = self.next_seq;
            self.next_seq += 1;
            if self.trace_on {
                self.trace.push(TraceRec {
                    seq,
                    kind: event_kind(&event).to_string(),
                    from: from.0,
                    to: None,
                    instance: String::new(),
                    words: 0,
                });
            }
            self.events.push(EventRec {
                seq,
                party: from,
                event,
            });
        }
        for ob in out.msgs {
            let words = ob.payload.word_cost();
            let recipients: Vec<PartyId> = match ob.to {
                Recipient::One(p) => vec![p],
                Recipient::All => (0..self.n).map(PartyId).collect(),
            };
            for to in recipients {
                let seq = self.next_seq;
                self.next_seq += 1;
                self.metrics.sent += 1;
                self.metrics.words_total += words;
                *self
                    .metrics
                    .words_by_path
                    .entry(path_class(ob.tag.path).to_string())
                    .or_insert(0) += words;
                self.metrics.max_depth = self.metrics.max_depth.max(depth);
                if self.trace_on {
                    self.trace.push(TraceRec {
                        seq,
                        kind: "send".to_string(),
                        from: from.0,
                        to: Some(to.0),
                        instance: ob.tag.to_string(),
                        words,
                    });
                }
                self.pool.push(Envelope {
                    seq,
                    from,
                    to,
                    tag: ob.tag,
                    payload: Rc::clone(&ob.payload),
                    words,
                    depth,
                });
            }
        }
    }
}

/// Boots every machine, then drives deliveries until the pool drains or the
/// budget runs out.
#[allow(clippy::too_many_arguments)]
pub fn run<M: Machine>(
    protocol: &str,
    n: usize,
    f: usize,
    seed: u64,
    machines: &mut [M],
    honest: &[bool],
    scheduler: SchedulerKind,
    budget: u64,
    trace_on: bool,
) -> RunLog {
    assert_eq!(machines.len(), n);
    assert_eq!(honest.len(), n);
    let mut engine = Engine {
        pool: Pool::new(scheduler),
        rng: ChaCha20Rng::seed_from_u64(seed),
        n,
        next_seq: 0,
        trace_on,
        metrics: RunMetrics {
            protocol: protocol.to_string(),
            n,
            f,
            seed,
            sent: 0,
            delivered: 0,
            dropped: 0,
            words_total: 0,
            words_by_path: BTreeMap::new(),
            max_depth: 0,
            budget_exhausted: false,
            honest_done: false,
        },
        events: Vec::new(),
        trace: Vec::new(),
    };
    for (i, machine) in machines.iter_mut().enumerate() {
        let mut out = Outbox::default();
        machine.boot(&mut out);
        engine.absorb(PartyId(i), 1, out);
    }
    while engine.metrics.delivered < budget {
        let env = match engine.pool.pop(&mut engine.rng) {
            Some(env) => env,
            None => break,
        };
        engine.metrics.delivered += 1;
        if engine.trace_on {
            let seq = engine.next_seq;
            engine.next_seq += 1;
            engine.trace.push(TraceRec {
                seq,
                kind: "deliver".to_string(),
                from: env.from.0,
                to: Some(env.to.0),
                instance: env.tag.to_string(),
                words: env.words,
            });
        }
        let mut out = Outbox::default();
        machines[env.to.0].deliver(env.from, &env.tag, &env.payload, &mut out);
        engine.absorb(env.to, env.depth + 1, out);
    }
    engine.metrics.budget_exhausted = engine.pool.len() > 0;
    engine.metrics.honest_done = machines
        .iter()
        .zip(honest)
        .filter(|(_, h)| **h)
        .all(|(m, _)| m.done());
    RunLog {
        metrics: engine.metrics,
        events: engine.events,
        trace: engine.trace,
    }
}
