//! Envelope addressing, payload shapes, and word-cost accounting.
//!
//! Every broadcast instance is addressed by an [`InstanceTag`]: the scenario
//! root protocol, a session number, the consensus view that spawned it (0
//! outside a view), and a [`Path`] naming the sub-instance, keyed by dealer
//! where one instance exists per dealer. Machines emit [`Outbound`] messages
//! into an [`Outbox`]; the simulator expands them into envelopes.
//!
//! The metered cost of a payload counts one word per field element, digest,
//! signature, and index it carries.

use crate::crypto::{Digest, DkgShare, EvalShare, Sig};
use crate::field::FieldElem;
use crate::PartyId;
use serde::Serialize;
use std::fmt;
use std::rc::Rc;

#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Protocol {
    Rb,
    Vrb,
    Gather,
    Pe,
    Nwh,
    Adkg,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Rb => "rb",
            Protocol::Vrb => "vrb",
            Protocol::Gather => "gather",
            Protocol::Pe => "pe",
            Protocol::Nwh => "nwh",
            Protocol::Adkg => "adkg",
        }
    }

    pub fn parse(name: &str) -> Option<Protocol> {
        Some(match name {
            "rb" => Protocol::Rb,
            "vrb" => Protocol::Vrb,
            "gather" => Protocol::Gather,
            "pe" => Protocol::Pe,
            "nwh" => Protocol::Nwh,
            "adkg" => Protocol::Adkg,
            _ => return None,
        })
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sub-instance address within one protocol stack.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Path {
    /// Direct root-level traffic (agreement messages, key shares, claims).
    Main,
    /// Gather round 1: validated broadcast of `dealer`'s input.
    GatherInput { dealer: PartyId },
    /// Gather round 2: broadcast of `dealer`'s S-set.
    GatherS { dealer: PartyId },
    /// Gather round 3: broadcast of `dealer`'s T-set.
    GatherT { dealer: PartyId },
    /// Election round 1: direct key shares for the per-party VRF.
    PeDkg,
    /// Election evaluation shares, fanned out per elected index.
    PeEval,
    /// Broadcast of `dealer`'s elected index set.
    PeIndices { dealer: PartyId },
}

#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct InstanceTag {
    pub root: Protocol,
    pub session: u32,
    /// Consensus view that owns this instance; 0 outside a view.
    pub view: u64,
    pub path: Path,
}

impl InstanceTag {
    pub fn root(root: Protocol, session: u32) -> InstanceTag {
        InstanceTag {
            root,
            session,
            view: 0,
            path: Path::Main,
        }
    }

    pub fn with(self, view: u64, path: Path) -> InstanceTag {
        InstanceTag {
            root: self.root,
            session: self.session,
            view,
            path,
        }
    }
}

impl fmt::Display for InstanceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.root, self.session)?;
        if self.view > 0 {
            write!(f, "/v{}", self.view)?;
        }
        match self.path {
            Path::Main => Ok(()),
            Path::GatherInput { dealer } => write!(f, "/gather.in:{dealer}"),
            Path::GatherS { dealer } => write!(f, "/gather.s:{dealer}"),
            Path::GatherT { dealer } => write!(f, "/gather.t:{dealer}"),
            Path::PeDkg => write!(f, "/pe.dkg"),
            Path::PeEval => write!(f, "/pe.eval"),
            Path::PeIndices { dealer } => write!(f, "/pe.idx:{dealer}"),
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum RbKind {
    Value,
    Echo,
    Ready,
}

/// One reliable-broadcast message: the chunk-vector commitment, the encoded
/// message length, one chunk, and its opening proof.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RbMsg {
    pub kind: RbKind,
    pub com: Digest,
    pub len: usize,
    pub chunk: Vec<FieldElem>,
    pub proof: Vec<Digest>,
}

pub type SigSet = Vec<(PartyId, Sig)>;

/// A key or lock certificate triple `(view, value, proof)`; genesis triples
/// carry view 0 and no proof.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CertTriple {
    pub view: u64,
    pub value: Vec<u64>,
    pub proof: Option<SigSet>,
}

impl CertTriple {
    pub fn genesis(value: Vec<u64>) -> CertTriple {
        CertTriple {
            view: 0,
            value,
            proof: None,
        }
    }

    fn cost(&self) -> u64 {
        1 + self.value.len() as u64 + 2 * self.proof.as_ref().map_or(0, |p| p.len() as u64)
    }
}

/// A signed echo cited as evidence of conflicting key certificates.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct EchoCite {
    pub sender: PartyId,
    pub key: CertTriple,
    pub election: Vec<PartyId>,
    pub sig: Sig,
}

impl EchoCite {
    fn cost(&self) -> u64 {
        2 + self.key.cost() + self.election.len() as u64
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Payload {
    Rb(RbMsg),
    DkgShare(DkgShare),
    EvalShare {
        index: PartyId,
        share: EvalShare,
    },
    Suggest {
        view: u64,
        key: CertTriple,
    },
    Echo {
        view: u64,
        key: CertTriple,
        election: Vec<PartyId>,
        sig: Sig,
    },
    KeyMsg {
        view: u64,
        value: Vec<u64>,
        proof: SigSet,
        sig: Sig,
    },
    LockMsg {
        view: u64,
        value: Vec<u64>,
        proof: SigSet,
        sig: Sig,
    },
    CommitMsg {
        view: u64,
        value: Vec<u64>,
        proof: SigSet,
    },
    Blame {
        view: u64,
        key: CertTriple,
        election: Vec<PartyId>,
        lock: CertTriple,
    },
    Equivocate {
        view: u64,
        first: EchoCite,
        second: EchoCite,
    },
    /// Harness traffic: a gather output's index set, offered for verification.
    GatherClaim {
        indices: Vec<PartyId>,
    },
    /// Harness traffic: an election output, offered for verification.
    PeClaim {
        value: Vec<u64>,
        proof: Vec<PartyId>,
    },
}

impl Payload {
    /// Metered size: one word per field element, digest, signature, or index.
    pub fn word_cost(&self) -> u64 {
        let sigs = |s: &SigSet| 2 * s.len() as u64;
        match self {
            Payload::Rb(m) => 2 + m.chunk.len() as u64 + m.proof.len() as u64,
            Payload::DkgShare(_) => 3,
            Payload::EvalShare { .. } => 3,
            Payload::Suggest { key, .. } => 1 + key.cost(),
            Payload::Echo { key, election, .. } => 2 + key.cost() + election.len() as u64,
            Payload::KeyMsg { value, proof, .. } | Payload::LockMsg { value, proof, .. } => {
                2 + value.len() as u64 + sigs(proof)
            }
            Payload::CommitMsg { value, proof, .. } => 1 + value.len() as u64 + sigs(proof),
            Payload::Blame {
                key,
                election,
                lock,
                ..
            } => 1 + key.cost() + election.len() as u64 + lock.cost(),
            Payload::Equivocate { first, second, .. } => 1 + first.cost() + second.cost(),
            Payload::GatherClaim { indices } => indices.len() as u64,
            Payload::PeClaim { value, proof } => (value.len() + proof.len()) as u64,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Recipient {
    One(PartyId),
    All,
}

#[derive(Clone, Debug)]
pub struct Outbound {
    pub to: Recipient,
    pub tag: InstanceTag,
    pub payload: Rc<Payload>,
}

/// Semantic run-log entries consumed by the property checks and traced as
/// output, decide, and view-change records.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub enum Event {
    RbDelivered {
        words: Vec<u64>,
    },
    GatherOutput {
        set: Vec<(PartyId, Vec<u64>)>,
    },
    GatherVerified {
        claimer: PartyId,
        set: Vec<(PartyId, Vec<u64>)>,
    },
    PeOutput {
        value: Vec<u64>,
        indices: Vec<PartyId>,
    },
    PeVerified {
        claimer: PartyId,
        value: Vec<u64>,
        probe: bool,
    },
    EvalFanout {
        index: PartyId,
    },
    ViewEntered {
        view: u64,
    },
    EchoSigned {
        view: u64,
        value: Vec<u64>,
    },
    KeyFormed {
        view: u64,
        value: Vec<u64>,
    },
    LockFormed {
        view: u64,
        value: Vec<u64>,
    },
    CommitFormed {
        view: u64,
        value: Vec<u64>,
    },
    Decided {
        view: u64,
        value: Vec<u64>,
    },
}

/// Collects messages and events produced while handling one delivery.
#[derive(Default)]
pub struct Outbox {
    pub msgs: Vec<Outbound>,
    pub events: Vec<Event>,
    pub dropped: u64,
}

impl Outbox {
    pub fn send(&mut self, to: PartyId, tag: InstanceTag, payload: Payload) {
        self.msgs.push(Outbound {
            to: Recipient::One(to),
            tag,
            payload: Rc::new(payload),
        });
    }

    pub fn send_all(&mut self, tag: InstanceTag, payload: Payload) {
        self.msgs.push(Outbound {
            to: Recipient::All,
            tag,
            payload: Rc::new(payload),
        });
    }

    pub fn event(&mut self, event: Event) {
        self.events.push(event);
    }

    /// Records an envelope consumed without effect (failed verification,
    /// duplicate slot, stale view).
    pub fn note_dropped(&mut self) {
        self.dropped += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_render_hierarchically() {
        let root = InstanceTag::root(Protocol::Adkg, 0);
        assert_eq!(root.to_string(), "adkg:0");
        let t = root.with(3, Path::GatherInput { dealer: PartyId(2) });
        assert_eq!(t.to_string(), "adkg:0/v3/gather.in:2");
        let t = root.with(1, Path::PeEval);
        assert_eq!(t.to_string(), "adkg:0/v1/pe.eval");
    }

    #[test]
    fn word_costs_count_content_words() {
        let claim = Payload::GatherClaim {
            indices: vec![PartyId(0), PartyId(1), PartyId(2)],
        };
        assert_eq!(claim.word_cost(), 3);

        let triple = CertTriple {
            view: 2,
            value: vec![7; 5],
            proof: Some(vec![(PartyId(0), [0; 32]), (PartyId(1), [0; 32])]),
        };
        let echo = Payload::Echo {
            view: 3,
            key: triple,
            election: vec![PartyId(0); 3],
            sig: [0; 32],
        };
        // view + sig + (k + 5 value words + 2 sigs * 2) + 3 indices
        assert_eq!(echo.word_cost(), 2 + (1 + 5 + 4) + 3);
    }
}
