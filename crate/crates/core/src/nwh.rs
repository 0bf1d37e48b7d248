//! View-based asynchronous agreement driven by per-view proposal elections.
//!
//! Each party enters view 1 with a genesis key triple over its own input and
//! suggests that key to everyone. Once a quorum of correct suggestions
//! arrives, the party votes the best of them (highest key view, own input if
//! all are genesis) into that view's [`PeInstance`]. The elected key is then
//! echoed, and quorums of echo, key, and lock signatures build the key, lock,
//! and commit certificates in turn; a commit certificate decides and is
//! forwarded so every party terminates.
//!
//! A party whose election output collides with the current view or predates
//! its lock broadcasts a blame and advances; conflicting echo evidence is
//! broadcast as an equivocation. Both fault messages are verified against the
//! view's election before they are forwarded and acted on, so stale or forged
//! complaints cannot stall progress. Elections of past views are kept alive
//! to serve exactly those verifications.

use crate::crypto::{CryptoSuite, Keypair, Sig};
use crate::msg::{CertTriple, EchoCite, Event, InstanceTag, Outbox, Path, Payload, SigSet};
use crate::pe::{PeConfig, PeInstance};
use crate::simnet::Machine;
use crate::validity::{
    commit_correct, eval_validity, key_correct, lock_correct, sig_msg, triple_from_words,
    triple_to_words, Validity,
};
use crate::PartyId;
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::rc::Rc;
use thiserror::Error;

#[derive(Error, Debug, PartialEq, Eq)]
pub enum NwhError {
    #[error("input does not satisfy the validity predicate")]
    InvalidInput,
}

#[derive(Copy, Clone, Debug)]
pub struct NwhConfig {
    pub n: usize,
    pub f: usize,
    pub me: PartyId,
    pub tag: InstanceTag,
}

/// A signature-checked echo waiting for its election verification.
struct PendingEcho {
    cite: EchoCite,
    verify_id: Option<usize>,
}

/// One election verification a fault message depends on.
struct FaultCheck {
    value: Vec<u64>,
    proof: Vec<PartyId>,
    verify_id: Option<usize>,
}

/// A blame or equivocation whose election checks are still outstanding.
struct PendingFault {
    payload: Payload,
    checks: Vec<FaultCheck>,
}

/// Accumulators for the view currently in progress; dropped on advance.
#[derive(Default)]
struct ViewState {
    suggest_seen: BTreeSet<PartyId>,
    suggestions: Vec<(PartyId, CertTriple)>,
    election_started: bool,
    election_handled: bool,
    echo_seen: BTreeSet<PartyId>,
    pending_echoes: Vec<PendingEcho>,
    echoes: Vec<EchoCite>,
    sent_key: bool,
    key_seen: BTreeSet<PartyId>,
    key_value: Option<Vec<u64>>,
    key_sigs: SigSet,
    sent_lock: bool,
    lock_seen: BTreeSet<PartyId>,
    lock_value: Option<Vec<u64>>,
    lock_sigs: SigSet,
    blame_seen: BTreeSet<PartyId>,
    equiv_seen: BTreeSet<PartyId>,
    pending_faults: Vec<PendingFault>,
}

/// One step the poll loop can take; each may advance the view, so the loop
/// rescans from scratch after every action.
enum Act {
    Election(Vec<u64>, Vec<PartyId>),
    EchoAccept(usize),
    EchoDrop(usize),
    FaultForward(usize),
    FaultDrop(usize),
}

pub struct NwhInstance {
    cfg: NwhConfig,
    crypto: Rc<CryptoSuite>,
    kp: Keypair,
    validity: Validity,
    input: Vec<u64>,
    rng: ChaCha20Rng,
    /// Current view; 0 until started.
    view: u64,
    key: CertTriple,
    lock: CertTriple,
    cur: ViewState,
    /// Elections by view; past views keep serving verification requests.
    pes: BTreeMap<u64, PeInstance>,
    /// Election traffic for the current view, before its election exists.
    pe_pending: BTreeMap<u64, Vec<(PartyId, Path, Payload)>>,
    /// Messages for views not yet entered, replayed in arrival order.
    future: BTreeMap<u64, Vec<(PartyId, Path, Payload)>>,
    commit_seen: BTreeSet<PartyId>,
    decided: Option<(u64, Vec<u64>)>,
}

impl NwhInstance {
    pub fn new(
        cfg: NwhConfig,
        crypto: Rc<CryptoSuite>,
        kp: Keypair,
        validity: Validity,
        input: Vec<u64>,
        rng: ChaCha20Rng,
    ) -> NwhInstance {
        NwhInstance {
            cfg,
            crypto,
            kp,
            validity,
            key: CertTriple::genesis(input.clone()),
            input,
            rng,
            view: 0,
            lock: CertTriple::genesis(Vec::new()),
            cur: ViewState::default(),
            pes: BTreeMap::new(),
            pe_pending: BTreeMap::new(),
            future: BTreeMap::new(),
            commit_seen: BTreeSet::new(),
            decided: None,
        }
    }

    fn quorum(&self) -> usize {
        self.cfg.n - self.cfg.f
    }

    pub fn decided(&self) -> Option<&(u64, Vec<u64>)> {
        self.decided.as_ref()
    }

    /// Enters view 1 and suggests the genesis key over `input`.
    pub fn start(&mut self, out: &mut Outbox) -> Result<(), NwhError> {
        if !eval_validity(&self.crypto, self.quorum(), &self.validity, &self.input) {
            return Err(NwhError::InvalidInput);
        }
        self.advance_view(out);
        Ok(())
    }

    /// Routes one envelope. Commit certificates are honored from any view;
    /// everything else is filtered against the current view.
    pub fn handle(
        &mut self,
        from: PartyId,
        tag: &InstanceTag,
        payload: &Payload,
        out: &mut Outbox,
    ) {
        if self.decided.is_some() {
            out.note_dropped();
            return;
        }
        if let Payload::CommitMsg { view, value, proof } = payload {
            self.on_commit(from, *view, value, proof, out);
            return;
        }
        let Some(view) = Self::msg_view(tag, payload) else {
            out.note_dropped();
            return;
        };
        if view == 0 {
            out.note_dropped();
            return;
        }
        if view > self.view {
            self.future
                .entry(view)
                .or_default()
                .push((from, tag.path, payload.clone()));
            return;
        }
        self.route(from, view, tag.path, payload, out);
        self.poll(out);
    }

    /// The view an envelope belongs to: the payload's own field for
    /// agreement messages, the tag's view for election sub-traffic.
    fn msg_view(tag: &InstanceTag, payload: &Payload) -> Option<u64> {
        match payload {
            Payload::Suggest { view, .. }
            | Payload::Echo { view, .. }
            | Payload::KeyMsg { view, .. }
            | Payload::LockMsg { view, .. }
            | Payload::Blame { view, .. }
            | Payload::Equivocate { view, .. } => Some(*view),
            Payload::Rb(_) | Payload::DkgShare(_) | Payload::EvalShare { .. } => Some(tag.view),
            _ => None,
        }
    }

    fn route(&mut self, from: PartyId, view: u64, path: Path, payload: &Payload, out: &mut Outbox) {
        match payload {
            // Election sub-traffic routes by owning view; elections outlive
            // their view so fault verifications can still resolve.
            Payload::Rb(_) | Payload::DkgShare(_) | Payload::EvalShare { .. } => {
                if let Some(pe) = self.pes.get_mut(&view) {
                    if !pe.handle(from, path, payload, out) {
                        out.note_dropped();
                    }
                } else if view == self.view {
                    self.pe_pending
                        .entry(view)
                        .or_default()
                        .push((from, path, payload.clone()));
                } else {
                    // An election this party never opened cannot open later.
                    out.note_dropped();
                }
                return;
            }
            _ => {}
        }
        if view < self.view {
            out.note_dropped();
            return;
        }
        match payload {
            Payload::Suggest { key, .. } => self.on_suggest(from, key, out),
            Payload::Echo {
                key, election, sig, ..
            } => self.on_echo(from, key, election, sig, out),
            Payload::KeyMsg {
                value, proof, sig, ..
            } => self.on_key(from, value, proof, sig, out),
            Payload::LockMsg {
                value, proof, sig, ..
            } => self.on_lock(from, value, proof, sig, out),
            Payload::Blame {
                key,
                election,
                lock,
                ..
            } => self.on_blame(from, payload, key, election, lock, out),
            Payload::Equivocate { first, second, .. } => {
                self.on_equivocate(from, payload, first, second, out)
            }
            _ => out.note_dropped(),
        }
    }

    fn on_suggest(&mut self, from: PartyId, key: &CertTriple, out: &mut Outbox) {
        if !self.cur.suggest_seen.insert(from) {
            out.note_dropped();
            return;
        }
        if key.view >= self.view || !key_correct(&self.crypto, self.quorum(), &self.validity, key) {
            out.note_dropped();
            return;
        }
        self.cur.suggestions.push((from, key.clone()));
        if self.cur.election_started || self.cur.suggestions.len() < self.quorum() {
            return;
        }
        self.cur.election_started = true;
        // The highest key view wins, ties toward the lowest sender. If no
        // suggestion beats genesis, vote this party's own input.
        let (_, best) = self
            .cur
            .suggestions
            .iter()
            .max_by_key(|(sender, k)| (k.view, std::cmp::Reverse(sender.0)))
            .expect("a quorum of suggestions is nonempty");
        let vote = if best.view == 0 {
            CertTriple::genesis(self.input.clone())
        } else {
            best.clone()
        };
        self.start_election(vote, out);
    }

    fn start_election(&mut self, vote: CertTriple, out: &mut Outbox) {
        let view = self.view;
        let mut pe = PeInstance::new(
            PeConfig {
                n: self.cfg.n,
                f: self.cfg.f,
                me: self.cfg.me,
                tag: self.cfg.tag.with(view, Path::Main),
            },
            Rc::clone(&self.crypto),
            self.kp.clone(),
            Validity::KeySuggestion(Box::new(self.validity.clone())),
        );
        pe.start(triple_to_words(&vote), &mut self.rng, out)
            .expect("the vote satisfies the key predicate");
        if let Some(pending) = self.pe_pending.remove(&view) {
            for (from, path, payload) in pending {
                if !pe.handle(from, path, &payload, out) {
                    out.note_dropped();
                }
            }
        }
        self.pes.insert(view, pe);
    }

    fn on_echo(
        &mut self,
        from: PartyId,
        key: &CertTriple,
        election: &[PartyId],
        sig: &Sig,
        out: &mut Outbox,
    ) {
        if !self.cur.echo_seen.insert(from) {
            out.note_dropped();
            return;
        }
        if election.iter().any(|k| k.0 >= self.cfg.n)
            || !self
                .crypto
                .verify_signature(from, &sig_msg("echo", &key.value, self.view), sig)
        {
            out.note_dropped();
            return;
        }
        self.cur.pending_echoes.push(PendingEcho {
            cite: EchoCite {
                sender: from,
                key: key.clone(),
                election: election.to_vec(),
                sig: *sig,
            },
            verify_id: None,
        });
    }

    fn on_key(
        &mut self,
        from: PartyId,
        value: &[u64],
        proof: &SigSet,
        sig: &Sig,
        out: &mut Outbox,
    ) {
        if !self.cur.key_seen.insert(from) {
            out.note_dropped();
            return;
        }
        let view = self.view;
        let triple = CertTriple {
            view,
            value: value.to_vec(),
            proof: Some(proof.clone()),
        };
        if !self
            .crypto
            .verify_signature(from, &sig_msg("key", value, view), sig)
            || !key_correct(&self.crypto, self.quorum(), &self.validity, &triple)
        {
            out.note_dropped();
            return;
        }
        match &self.cur.key_value {
            None => self.cur.key_value = Some(value.to_vec()),
            Some(v) if v != value => {
                out.note_dropped();
                return;
            }
            _ => {}
        }
        self.cur.key_sigs.push((from, *sig));
        if self.cur.sent_lock || self.cur.key_sigs.len() < self.quorum() {
            return;
        }
        self.cur.sent_lock = true;
        let sigs = self.cur.key_sigs.clone();
        self.lock = CertTriple {
            view,
            value: value.to_vec(),
            proof: Some(sigs.clone()),
        };
        let sig = self.crypto.sign(&self.kp, &sig_msg("lock", value, view));
        out.event(Event::LockFormed {
            view,
            value: value.to_vec(),
        });
        out.send_all(
            self.cfg.tag,
            Payload::LockMsg {
                view,
                value: value.to_vec(),
                proof: sigs,
                sig,
            },
        );
    }

    fn on_lock(
        &mut self,
        from: PartyId,
        value: &[u64],
        proof: &SigSet,
        sig: &Sig,
        out: &mut Outbox,
    ) {
        if !self.cur.lock_seen.insert(from) {
            out.note_dropped();
            return;
        }
        let view = self.view;
        let triple = CertTriple {
            view,
            value: value.to_vec(),
            proof: Some(proof.clone()),
        };
        if !self
            .crypto
            .verify_signature(from, &sig_msg("lock", value, view), sig)
            || !lock_correct(&self.crypto, self.quorum(), &triple)
        {
            out.note_dropped();
            return;
        }
        match &self.cur.lock_value {
            None => self.cur.lock_value = Some(value.to_vec()),
            Some(v) if v != value => {
                out.note_dropped();
                return;
            }
            _ => {}
        }
        self.cur.lock_sigs.push((from, *sig));
        if self.cur.lock_sigs.len() < self.quorum() {
            return;
        }
        let proof = self.cur.lock_sigs.clone();
        out.event(Event::CommitFormed {
            view,
            value: value.to_vec(),
        });
        out.send_all(
            self.cfg.tag,
            Payload::CommitMsg {
                view,
                value: value.to_vec(),
                proof,
            },
        );
        self.decide(view, value.to_vec(), out);
    }

    fn on_commit(
        &mut self,
        from: PartyId,
        view: u64,
        value: &[u64],
        proof: &SigSet,
        out: &mut Outbox,
    ) {
        if !self.commit_seen.insert(from) {
            out.note_dropped();
            return;
        }
        if !commit_correct(&self.crypto, self.quorum(), view, value, proof) {
            out.note_dropped();
            return;
        }
        // Forward once so every party terminates, then decide.
        out.event(Event::CommitFormed {
            view,
            value: value.to_vec(),
        });
        out.send_all(
            self.cfg.tag,
            Payload::CommitMsg {
                view,
                value: value.to_vec(),
                proof: proof.clone(),
            },
        );
        self.decide(view, value.to_vec(), out);
    }

    fn on_blame(
        &mut self,
        from: PartyId,
        payload: &Payload,
        key: &CertTriple,
        election: &[PartyId],
        lock: &CertTriple,
        out: &mut Outbox,
    ) {
        if !self.cur.blame_seen.insert(from) {
            out.note_dropped();
            return;
        }
        let view = self.view;
        // Justified only when the elected key collides with the blamed view
        // or predates a correct lock.
        if !(view <= key.view || key.view < lock.view)
            || election.iter().any(|k| k.0 >= self.cfg.n)
            || !lock_correct(&self.crypto, self.quorum(), lock)
        {
            out.note_dropped();
            return;
        }
        self.cur.pending_faults.push(PendingFault {
            payload: payload.clone(),
            checks: vec![FaultCheck {
                value: triple_to_words(key),
                proof: election.to_vec(),
                verify_id: None,
            }],
        });
    }

    fn on_equivocate(
        &mut self,
        from: PartyId,
        payload: &Payload,
        first: &EchoCite,
        second: &EchoCite,
        out: &mut Outbox,
    ) {
        if !self.cur.equiv_seen.insert(from) {
            out.note_dropped();
            return;
        }
        let view = self.view;
        let conflicting =
            (first.key.view, &first.key.value) != (second.key.view, &second.key.value);
        let cite_ok = |c: &EchoCite| {
            c.sender.0 < self.cfg.n
                && c.election.iter().all(|k| k.0 < self.cfg.n)
                && self.crypto.verify_signature(
                    c.sender,
                    &sig_msg("echo", &c.key.value, view),
                    &c.sig,
                )
        };
        if !conflicting || !cite_ok(first) || !cite_ok(second) {
            out.note_dropped();
            return;
        }
        self.cur.pending_faults.push(PendingFault {
            payload: payload.clone(),
            checks: [first, second]
                .iter()
                .map(|c| FaultCheck {
                    value: triple_to_words(&c.key),
                    proof: c.election.clone(),
                    verify_id: None,
                })
                .collect(),
        });
    }

    /// Settles everything the current view's election now permits: the
    /// party's own echo-or-blame step, pending echo verifications, and
    /// pending fault verifications. Any action may advance the view, so the
    /// scan restarts after each one.
    pub fn poll(&mut self, out: &mut Outbox) {
        'outer: loop {
            if self.decided.is_some() {
                return;
            }
            let view = self.view;
            let Some(pe) = self.pes.get_mut(&view) else {
                return;
            };
            pe.poll(out);
            for e in &mut self.cur.pending_echoes {
                if e.verify_id.is_none() {
                    e.verify_id =
                        Some(pe.request_verify(&triple_to_words(&e.cite.key), &e.cite.election));
                }
            }
            for fault in &mut self.cur.pending_faults {
                for c in &mut fault.checks {
                    if c.verify_id.is_none() {
                        c.verify_id = Some(pe.request_verify(&c.value, &c.proof));
                    }
                }
            }
            pe.poll(out);
            let act = 'scan: {
                if !self.cur.election_handled {
                    if let Some((words, election)) = pe.take_output() {
                        self.cur.election_handled = true;
                        break 'scan Some(Act::Election(words, election));
                    }
                }
                for (i, e) in self.cur.pending_echoes.iter().enumerate() {
                    match e.verify_id.and_then(|id| pe.verify_state(id)) {
                        Some(true) => break 'scan Some(Act::EchoAccept(i)),
                        Some(false) => break 'scan Some(Act::EchoDrop(i)),
                        None => {}
                    }
                }
                for (i, fault) in self.cur.pending_faults.iter().enumerate() {
                    let states: Vec<_> = fault
                        .checks
                        .iter()
                        .map(|c| c.verify_id.and_then(|id| pe.verify_state(id)))
                        .collect();
                    if states.contains(&Some(false)) {
                        break 'scan Some(Act::FaultDrop(i));
                    }
                    if states.iter().all(|s| *s == Some(true)) {
                        break 'scan Some(Act::FaultForward(i));
                    }
                }
                None
            };
            match act {
                None => return,
                Some(Act::Election(words, election)) => {
                    self.on_election(words, election, out);
                }
                Some(Act::EchoAccept(i)) => {
                    let e = self.cur.pending_echoes.remove(i);
                    self.accept_echo(e.cite, out);
                }
                Some(Act::EchoDrop(i)) => {
                    self.cur.pending_echoes.remove(i);
                    out.note_dropped();
                }
                Some(Act::FaultForward(i)) => {
                    let fault = self.cur.pending_faults.remove(i);
                    out.send_all(self.cfg.tag, fault.payload);
                    self.advance_view(out);
                }
                Some(Act::FaultDrop(i)) => {
                    self.cur.pending_faults.remove(i);
                    out.note_dropped();
                }
            }
            continue 'outer;
        }
    }

    /// Echoes the elected key when it is newer than the lock and older than
    /// the view; otherwise blames and advances.
    fn on_election(&mut self, words: Vec<u64>, election: Vec<PartyId>, out: &mut Outbox) {
        let view = self.view;
        let key = triple_from_words(&words).expect("elected values decode as key triples");
        if view > key.view && key.view >= self.lock.view {
            let sig = self
                .crypto
                .sign(&self.kp, &sig_msg("echo", &key.value, view));
            out.event(Event::EchoSigned {
                view,
                value: key.value.clone(),
            });
            out.send_all(
                self.cfg.tag,
                Payload::Echo {
                    view,
                    key,
                    election,
                    sig,
                },
            );
        } else {
            out.send_all(
                self.cfg.tag,
                Payload::Blame {
                    view,
                    key,
                    election,
                    lock: self.lock.clone(),
                },
            );
            self.advance_view(out);
        }
    }

    /// Stores a verified echo; on the first conflict, publishes the pair as
    /// equivocation evidence instead (the returning broadcast advances this
    /// party too). A quorum of consistent echoes forms the key certificate.
    fn accept_echo(&mut self, cite: EchoCite, out: &mut Outbox) {
        let view = self.view;
        if let Some(prev) = self
            .cur
            .echoes
            .iter()
            .find(|c| (c.key.view, &c.key.value) != (cite.key.view, &cite.key.value))
        {
            let first = prev.clone();
            out.send_all(
                self.cfg.tag,
                Payload::Equivocate {
                    view,
                    first,
                    second: cite,
                },
            );
            return;
        }
        self.cur.echoes.push(cite);
        if self.cur.sent_key || self.cur.echoes.len() < self.quorum() {
            return;
        }
        self.cur.sent_key = true;
        let value = self.cur.echoes[0].key.value.clone();
        let sigs: SigSet = self.cur.echoes.iter().map(|c| (c.sender, c.sig)).collect();
        self.key = CertTriple {
            view,
            value: value.clone(),
            proof: Some(sigs.clone()),
        };
        let sig = self.crypto.sign(&self.kp, &sig_msg("key", &value, view));
        out.event(Event::KeyFormed {
            view,
            value: value.clone(),
        });
        out.send_all(
            self.cfg.tag,
            Payload::KeyMsg {
                view,
                value,
                proof: sigs,
                sig,
            },
        );
    }

    fn decide(&mut self, view: u64, value: Vec<u64>, out: &mut Outbox) {
        out.event(Event::Decided {
            view,
            value: value.clone(),
        });
        self.decided = Some((view, value));
    }

    /// Enters the next view: fresh accumulators, a suggestion carrying the
    /// best key so far, and replay of everything buffered for the new view.
    fn advance_view(&mut self, out: &mut Outbox) {
        self.view += 1;
        self.cur = ViewState::default();
        let view = self.view;
        out.event(Event::ViewEntered { view });
        out.send_all(
            self.cfg.tag,
            Payload::Suggest {
                view,
                key: self.key.clone(),
            },
        );
        // Election traffic stashed for a view whose election never opened
        // can no longer be consumed.
        self.pe_pending.retain(|v, _| *v >= view);
        if let Some(buffered) = self.future.remove(&view) {
            for (from, path, payload) in buffered {
                self.route(from, view, path, &payload, out);
            }
        }
    }
}

/// Drives one [`NwhInstance`] as a simulation machine.
pub struct NwhMachine {
    nwh: NwhInstance,
}

impl NwhMachine {
    pub fn new(
        cfg: NwhConfig,
        crypto: Rc<CryptoSuite>,
        kp: Keypair,
        validity: Validity,
        input: Vec<u64>,
        rng: ChaCha20Rng,
    ) -> NwhMachine {
        NwhMachine {
            nwh: NwhInstance::new(cfg, crypto, kp, validity, input, rng),
        }
    }

    pub fn decided(&self) -> Option<&(u64, Vec<u64>)> {
        self.nwh.decided()
    }
}

impl Machine for NwhMachine {
    fn boot(&mut self, out: &mut Outbox) {
        self.nwh.start(out).expect("input validated by scenario");
    }

    fn deliver(&mut self, from: PartyId, tag: &InstanceTag, payload: &Payload, out: &mut Outbox) {
        self.nwh.handle(from, tag, payload, out);
    }

    fn done(&self) -> bool {
        self.nwh.decided().is_some()
    }
}
