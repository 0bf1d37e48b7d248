//! Verifiable gather.
//!
//! Every party broadcasts its input over validated reliable broadcast, then
//! runs two more broadcast rounds of index sets: `S` (inputs seen), `T`
//! (S-sets covered), and accumulates `U`, mapping each `T`-sender to the
//! union `V_j` of the S-sets it covers. At `n - f` entries in `U` the party
//! outputs its current input set. The construction binds a core: there is a
//! set of at least `n - f` indices contained in every index set that
//! verification ever accepts, and all parties agree on the value at each
//! index. Verification of a claimed index set `I` is a predicate that
//! terminates only when `n - f` entries of `U` are contained in `I` and all
//! of `I`'s values have been delivered locally — for bogus claims it simply
//! never fires, which is the intended failure mode.

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use crate::crypto::CryptoSuite;
use crate::field::FieldError;
use crate::msg::{Event, InstanceTag, Outbox, Path, Payload, RbMsg};
use crate::rb::{RbConfig, RbInstance};
use crate::simnet::Machine;
use crate::validity::{indices_from_words, indices_to_words, Validity};
use crate::PartyId;

#[derive(Copy, Clone, Debug)]
pub struct GatherConfig {
    pub n: usize,
    pub f: usize,
    pub me: PartyId,
    /// Parent context; sub-instances keep its root, session, and view.
    pub tag: InstanceTag,
}

struct VerifyReq {
    indices: BTreeSet<PartyId>,
    result: Option<Vec<(PartyId, Vec<u64>)>>,
}

pub struct GatherInstance {
    cfg: GatherConfig,
    inputs: Vec<RbInstance>,
    s_bc: Vec<RbInstance>,
    t_bc: Vec<RbInstance>,
    /// Delivered inputs; its key set is the growing `S` of this party.
    r: BTreeMap<PartyId, Vec<u64>>,
    /// Accepted S-sets of parties admitted to `T`.
    s_sets: BTreeMap<PartyId, BTreeSet<PartyId>>,
    pending_s: BTreeMap<PartyId, BTreeSet<PartyId>>,
    t: BTreeSet<PartyId>,
    pending_t: BTreeMap<PartyId, BTreeSet<PartyId>>,
    u: BTreeMap<PartyId, BTreeSet<PartyId>>,
    sent_s: bool,
    sent_t: bool,
    output: Option<Vec<(PartyId, Vec<u64>)>>,
    output_taken: bool,
    verifies: Vec<VerifyReq>,
}

impl GatherInstance {
    pub fn new(cfg: GatherConfig, input_validity: Validity) -> GatherInstance {
        let sub = |path_of: fn(PartyId) -> Path, validity: &Validity| -> Vec<RbInstance> {
            (0..cfg.n)
                .map(|d| {
                    let dealer = PartyId(d);
                    RbInstance::new(
                        RbConfig {
                            n: cfg.n,
                            f: cfg.f,
                            me: cfg.me,
                            dealer,
                            tag: cfg.tag.with(cfg.tag.view, path_of(dealer)),
                        },
                        validity.clone(),
                    )
                })
                .collect()
        };
        GatherInstance {
            inputs: sub(|dealer| Path::GatherInput { dealer }, &input_validity),
            s_bc: sub(|dealer| Path::GatherS { dealer }, &Validity::Any),
            t_bc: sub(|dealer| Path::GatherT { dealer }, &Validity::Any),
            cfg,
            r: BTreeMap::new(),
            s_sets: BTreeMap::new(),
            pending_s: BTreeMap::new(),
            t: BTreeSet::new(),
            pending_t: BTreeMap::new(),
            u: BTreeMap::new(),
            sent_s: false,
            sent_t: false,
            output: None,
            output_taken: false,
            verifies: Vec::new(),
        }
    }

    fn quorum(&self) -> usize {
        self.cfg.n - self.cfg.f
    }

    /// Broadcasts this party's input. The value is not checked here: a party
    /// whose input fails the predicate is simply never delivered by others.
    pub fn start(&mut self, input: &[u64], out: &mut Outbox) -> Result<(), FieldError> {
        let me = self.cfg.me.0;
        self.inputs[me].dealer_start(input, out)
    }

    pub fn output(&self) -> Option<&Vec<(PartyId, Vec<u64>)>> {
        self.output.as_ref()
    }

    /// Returns the output exactly once, for layers that react to it.
    pub fn take_output(&mut self) -> Option<Vec<(PartyId, Vec<u64>)>> {
        if self.output_taken {
            return None;
        }
        match &self.output {
            Some(set) => {
                self.output_taken = true;
                Some(set.clone())
            }
            None => None,
        }
    }

    /// Registers a verification request; identical index sets share an id.
    pub fn request_verify(&mut self, indices: &[PartyId]) -> usize {
        let set: BTreeSet<PartyId> = indices.iter().copied().collect();
        if let Some(id) = self.verifies.iter().position(|v| v.indices == set) {
            return id;
        }
        self.verifies.push(VerifyReq {
            indices: set,
            result: None,
        });
        self.verifies.len() - 1
    }

    pub fn verify_result(&self, id: usize) -> Option<&Vec<(PartyId, Vec<u64>)>> {
        self.verifies.get(id).and_then(|v| v.result.as_ref())
    }

    /// Routes one broadcast envelope to its sub-instance; returns false if
    /// the path does not belong to this gather.
    pub fn handle(
        &mut self,
        from: PartyId,
        path: Path,
        m: &RbMsg,
        crypto: &CryptoSuite,
        out: &mut Outbox,
    ) -> bool {
        let n = self.cfg.n;
        match path {
            Path::GatherInput { dealer } if dealer.0 < n => {
                self.inputs[dealer.0].handle(from, m, crypto, out);
                if let Some(words) = self.inputs[dealer.0].take_delivered() {
                    self.r.insert(dealer, words);
                }
            }
            Path::GatherS { dealer } if dealer.0 < n => {
                self.s_bc[dealer.0].handle(from, m, crypto, out);
                if let Some(words) = self.s_bc[dealer.0].take_delivered() {
                    match self.decode_set(&words) {
                        Some(set) => {
                            self.pending_s.insert(dealer, set);
                        }
                        None => out.note_dropped(),
                    }
                }
            }
            Path::GatherT { dealer } if dealer.0 < n => {
                self.t_bc[dealer.0].handle(from, m, crypto, out);
                if let Some(words) = self.t_bc[dealer.0].take_delivered() {
                    match self.decode_set(&words) {
                        Some(set) => {
                            self.pending_t.insert(dealer, set);
                        }
                        None => out.note_dropped(),
                    }
                }
            }
            _ => return false,
        }
        self.poll(out);
        true
    }

    /// An index set on the wire must be ascending, in range, and of quorum
    /// size.
    fn decode_set(&self, words: &[u64]) -> Option<BTreeSet<PartyId>> {
        let ids = indices_from_words(words)?;
        if ids.len() < self.quorum() || ids.iter().any(|id| id.0 >= self.cfg.n) {
            return None;
        }
        Some(ids.into_iter().collect())
    }

    /// One forward pass over the guard conditions. Dependencies only flow
    /// from inputs to `S`, `S` to `T`, and `T` to `U`, so a single ordered
    /// pass per delivery reaches the fixpoint. Layers that register
    /// verification requests out of band must poll again afterwards.
    pub fn poll(&mut self, out: &mut Outbox) {
        let quorum = self.quorum();
        if !self.sent_s && self.r.len() >= quorum {
            self.sent_s = true;
            let ids: Vec<PartyId> = self.r.keys().copied().collect();
            let me = self.cfg.me.0;
            self.s_bc[me]
                .dealer_start(&indices_to_words(&ids), out)
                .expect("index set encoding is nonempty");
        }
        let ready: Vec<PartyId> = self
            .pending_s
            .iter()
            .filter(|(_, set)| set.iter().all(|k| self.r.contains_key(k)))
            .map(|(j, _)| *j)
            .collect();
        for j in ready {
            let set = self.pending_s.remove(&j).unwrap();
            self.t.insert(j);
            self.s_sets.insert(j, set);
        }
        if !self.sent_t && self.t.len() >= quorum {
            self.sent_t = true;
            let ids: Vec<PartyId> = self.t.iter().copied().collect();
            let me = self.cfg.me.0;
            self.t_bc[me]
                .dealer_start(&indices_to_words(&ids), out)
                .expect("index set encoding is nonempty");
        }
        let ready: Vec<PartyId> = self
            .pending_t
            .iter()
            .filter(|(_, set)| set.iter().all(|k| self.t.contains(k)))
            .map(|(j, _)| *j)
            .collect();
        for j in ready {
            let set = self.pending_t.remove(&j).unwrap();
            let mut v: BTreeSet<PartyId> = BTreeSet::new();
            for k in &set {
                v.extend(self.s_sets[k].iter().copied());
            }
            self.u.insert(j, v);
        }
        if self.output.is_none() && self.u.len() >= quorum {
            let set: Vec<(PartyId, Vec<u64>)> =
                self.r.iter().map(|(j, x)| (*j, x.clone())).collect();
            self.output = Some(set.clone());
            out.event(Event::GatherOutput { set });
        }
        for req in &mut self.verifies {
            if req.result.is_some() {
                continue;
            }
            let covered = self
                .u
                .values()
                .filter(|v| v.is_subset(&req.indices))
                .count();
            if covered >= quorum && req.indices.iter().all(|k| self.r.contains_key(k)) {
                req.result = Some(
                    req.indices
                        .iter()
                        .map(|k| (*k, self.r[k].clone()))
                        .collect(),
                );
            }
        }
    }
}

/// Standalone gather party: broadcasts its output's index set as a claim and
/// verifies everyone else's.
pub struct GatherMachine {
    crypto: Rc<CryptoSuite>,
    g: GatherInstance,
    input: Vec<u64>,
    tag: InstanceTag,
    claim_seen: BTreeSet<PartyId>,
    claims: Vec<(PartyId, usize, bool)>,
}

impl GatherMachine {
    pub fn new(
        crypto: Rc<CryptoSuite>,
        cfg: GatherConfig,
        validity: Validity,
        input: Vec<u64>,
    ) -> GatherMachine {
        GatherMachine {
            crypto,
            tag: cfg.tag,
            g: GatherInstance::new(cfg, validity),
            input,
            claim_seen: BTreeSet::new(),
            claims: Vec::new(),
        }
    }

    fn after_step(&mut self, out: &mut Outbox) {
        if let Some(set) = self.g.take_output() {
            let indices: Vec<PartyId> = set.iter().map(|(j, _)| *j).collect();
            out.send_all(self.tag, Payload::GatherClaim { indices });
        }
        for (claimer, id, emitted) in &mut self.claims {
            if !*emitted {
                if let Some(set) = self.g.verify_result(*id) {
                    *emitted = true;
                    out.event(Event::GatherVerified {
                        claimer: *claimer,
                        set: set.clone(),
                    });
                }
            }
        }
    }
}

impl Machine for GatherMachine {
    fn boot(&mut self, out: &mut Outbox) {
        let input = self.input.clone();
        self.g.start(&input, out).expect("input words validated");
    }

    fn deliver(&mut self, from: PartyId, tag: &InstanceTag, payload: &Payload, out: &mut Outbox) {
        match payload {
            Payload::Rb(m) => {
                if !self.g.handle(from, tag.path, m, &self.crypto, out) {
                    out.note_dropped();
                }
            }
            Payload::GatherClaim { indices } => {
                if !self.claim_seen.insert(from) || indices.iter().any(|k| k.0 >= self.g.cfg.n) {
                    out.note_dropped();
                } else {
                    let id = self.g.request_verify(indices);
                    self.claims.push((from, id, false));
                    self.g.poll(out);
                }
            }
            _ => out.note_dropped(),
        }
        self.after_step(out);
    }

    fn done(&self) -> bool {
        self.g.output().is_some()
    }
}
