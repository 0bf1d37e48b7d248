//! Erasure-coded reliable broadcast.
//!
//! The dealer encodes its message as a degree `len - 1` polynomial, sends
//! every party one chunk of `ceil(len / (f + 1))` evaluations under a vector
//! commitment, and parties echo their chunks. A party that collects
//! `(n - f) * c` echoed points reconstructs the polynomial, re-encodes all
//! `n` chunks, and sends a ready chunk only if the recomputed commitment
//! matches — this recommit check is what stops a dealer from committing to a
//! non-codeword. Readies amplify at `(f + 1) * c` points without the check
//! (those points are already bound to the commitment) and delivery happens at
//! `(n - f) * c` ready points. A validated instance additionally gates
//! delivery on an external-validity predicate; a reconstruction that fails it
//! is withheld permanently.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{vc_commit, vc_open_prove, vc_open_verify, CryptoSuite, Digest};
use crate::field::{chunk_len, encode_chunks, interpolate, FieldElem, FieldError};
use crate::msg::{Event, InstanceTag, Outbox, Payload, RbKind, RbMsg};
use crate::validity::{eval_validity, Validity};
use crate::PartyId;

/// Upper bound on message length in words, applied to every incoming header.
pub const MAX_MSG_WORDS: usize = 1 << 20;

#[derive(Copy, Clone, Debug)]
pub struct RbConfig {
    pub n: usize,
    pub f: usize,
    pub me: PartyId,
    pub dealer: PartyId,
    pub tag: InstanceTag,
}

/// One party's state for a single broadcast instance.
pub struct RbInstance {
    cfg: RbConfig,
    validity: Validity,
    /// One slot per `(sender, kind)`, consumed by the first arrival.
    seen: BTreeSet<(PartyId, u8)>,
    /// Echoed polynomial points, keyed by claimed `(commitment, len)`.
    echoes: BTreeMap<(Digest, usize), BTreeMap<u64, u64>>,
    readies: BTreeMap<(Digest, usize), BTreeMap<u64, u64>>,
    /// Commitments whose reconstruction failed the recommit check.
    dead: BTreeSet<(Digest, usize)>,
    sent_ready: bool,
    delivered: Option<Vec<u64>>,
    taken: bool,
    withheld: bool,
}

fn chunk_to_bytes(chunk: &[FieldElem]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * chunk.len());
    for e in chunk {
        out.extend_from_slice(&e.word().to_le_bytes());
    }
    out
}

/// Builds the commitment and the per-recipient value messages for `msg`.
/// Exposed so that tests and faulty-dealer behaviors can craft envelopes.
pub fn dealer_envelopes(
    msg: &[u64],
    n: usize,
    f: usize,
) -> Result<(Digest, Vec<RbMsg>), FieldError> {
    let chunks = encode_chunks(msg, n, f)?;
    let bytes: Vec<Vec<u8>> = chunks.iter().map(|c| chunk_to_bytes(c)).collect();
    let com = vc_commit(&bytes).expect("nonempty chunk vector");
    let msgs = chunks
        .into_iter()
        .enumerate()
        .map(|(i, chunk)| RbMsg {
            kind: RbKind::Value,
            com,
            len: msg.len(),
            chunk,
            proof: vc_open_prove(&bytes, i + 1).expect("index in range"),
        })
        .collect();
    Ok((com, msgs))
}

fn kind_rank(kind: RbKind) -> u8 {
    match kind {
        RbKind::Value => 0,
        RbKind::Echo => 1,
        RbKind::Ready => 2,
    }
}

impl RbInstance {
    pub fn new(cfg: RbConfig, validity: Validity) -> RbInstance {
        RbInstance {
            cfg,
            validity,
            seen: BTreeSet::new(),
            echoes: BTreeMap::new(),
            readies: BTreeMap::new(),
            dead: BTreeSet::new(),
            sent_ready: false,
            delivered: None,
            taken: false,
            withheld: false,
        }
    }

    /// Splits `msg` into chunks and sends each party its value envelope
    /// (including the dealer itself, through the network).
    pub fn dealer_start(&mut self, msg: &[u64], out: &mut Outbox) -> Result<(), FieldError> {
        let (_, msgs) = dealer_envelopes(msg, self.cfg.n, self.cfg.f)?;
        for (i, m) in msgs.into_iter().enumerate() {
            out.send(PartyId(i), self.cfg.tag, Payload::Rb(m));
        }
        Ok(())
    }

    pub fn delivered(&self) -> Option<&Vec<u64>> {
        self.delivered.as_ref()
    }

    /// Returns the delivered message exactly once, for composition layers
    /// that react to fresh deliveries.
    pub fn take_delivered(&mut self) -> Option<Vec<u64>> {
        if self.taken {
            return None;
        }
        match &self.delivered {
            Some(words) => {
                self.taken = true;
                Some(words.clone())
            }
            None => None,
        }
    }

    fn well_formed(&self, from: PartyId, m: &RbMsg) -> bool {
        if m.len == 0 || m.len > MAX_MSG_WORDS {
            return false;
        }
        if m.chunk.len() != chunk_len(m.len, self.cfg.f) {
            return false;
        }
        // A value envelope carries the recipient's chunk; echoes and readies
        // carry the sender's.
        let index = match m.kind {
            RbKind::Value => {
                if from != self.cfg.dealer {
                    return false;
                }
                self.cfg.me.0 + 1
            }
            RbKind::Echo | RbKind::Ready => from.0 + 1,
        };
        vc_open_verify(&m.com, &chunk_to_bytes(&m.chunk), index, &m.proof)
    }

    pub fn handle(&mut self, from: PartyId, m: &RbMsg, crypto: &CryptoSuite, out: &mut Outbox) {
        if !self.seen.insert((from, kind_rank(m.kind))) {
            out.note_dropped();
            return;
        }
        if !self.well_formed(from, m) {
            out.note_dropped();
            return;
        }
        match m.kind {
            RbKind::Value => {
                out.send_all(
                    self.cfg.tag,
                    Payload::Rb(RbMsg {
                        kind: RbKind::Echo,
                        com: m.com,
                        len: m.len,
                        chunk: m.chunk.clone(),
                        proof: m.proof.clone(),
                    }),
                );
            }
            RbKind::Echo => {
                Self::insert_points(&mut self.echoes, from, m);
                self.after_echo(m, out);
            }
            RbKind::Ready => {
                Self::insert_points(&mut self.readies, from, m);
                self.after_ready(m, crypto, out);
            }
        }
    }

    fn insert_points(
        map: &mut BTreeMap<(Digest, usize), BTreeMap<u64, u64>>,
        from: PartyId,
        m: &RbMsg,
    ) {
        let c = m.chunk.len();
        let points = map.entry((m.com, m.len)).or_default();
        for (k, e) in m.chunk.iter().enumerate() {
            points
                .entry((from.0 * c + k + 1) as u64)
                .or_insert(e.word());
        }
    }

    /// Interpolates the lowest `len` points and re-encodes all `n` chunks.
    fn reconstruct(&self, points: &BTreeMap<u64, u64>, len: usize) -> (Vec<u64>, Vec<Vec<u8>>) {
        let pts: Vec<(u64, u64)> = points.iter().take(len).map(|(a, v)| (*a, *v)).collect();
        let poly = interpolate(&pts, len - 1).expect("threshold guarantees len points");
        let words = poly.words_padded(len);
        let chunks = encode_chunks(&words, self.cfg.n, self.cfg.f).expect("len checked");
        let bytes = chunks.iter().map(|c| chunk_to_bytes(c)).collect();
        (words, bytes)
    }

    fn send_ready(&mut self, com: Digest, len: usize, bytes: &[Vec<u8>], out: &mut Outbox) {
        let me = self.cfg.me.0;
        let chunk = bytes[me]
            .chunks_exact(8)
            .map(|b| FieldElem::from_u64(u64::from_le_bytes(b.try_into().unwrap())))
            .collect();
        self.sent_ready = true;
        out.send_all(
            self.cfg.tag,
            Payload::Rb(RbMsg {
                kind: RbKind::Ready,
                com,
                len,
                chunk,
                proof: vc_open_prove(bytes, me + 1).expect("index in range"),
            }),
        );
    }

    fn after_echo(&mut self, m: &RbMsg, out: &mut Outbox) {
        let key = (m.com, m.len);
        if self.sent_ready || self.dead.contains(&key) {
            return;
        }
        let c = m.chunk.len();
        let points = &self.echoes[&key];
        if points.len() < (self.cfg.n - self.cfg.f) * c {
            return;
        }
        let (_, bytes) = self.reconstruct(points, m.len);
        let recommit = vc_commit(&bytes).expect("nonempty chunk vector");
        if recommit != m.com {
            // The dealer committed to something that is not a codeword; no
            // honest party will ever go ready for this commitment.
            self.dead.insert(key);
            out.note_dropped();
            return;
        }
        self.send_ready(m.com, m.len, &bytes, out);
    }

    fn after_ready(&mut self, m: &RbMsg, crypto: &CryptoSuite, out: &mut Outbox) {
        let key = (m.com, m.len);
        let c = m.chunk.len();
        let count = self.readies[&key].len();
        if !self.sent_ready && count >= (self.cfg.f + 1) * c {
            // Ready points are bound to the commitment by their openings, so
            // amplification needs no recommit check.
            let (_, bytes) = self.reconstruct(&self.readies[&key], m.len);
            self.send_ready(m.com, m.len, &bytes, out);
        }
        if self.delivered.is_none() && !self.withheld && count >= (self.cfg.n - self.cfg.f) * c {
            let (words, _) = self.reconstruct(&self.readies[&key], m.len);
            let quorum = self.cfg.n - self.cfg.f;
            if eval_validity(crypto, quorum, &self.validity, &words) {
                self.delivered = Some(words.clone());
                out.event(Event::RbDelivered { words });
            } else {
                self.withheld = true;
                out.note_dropped();
            }
        }
    }
}

/// Drives one [`RbInstance`] as a simulation machine; the dealer's machine
/// carries the message to broadcast.
pub struct RbMachine {
    rb: RbInstance,
    crypto: std::rc::Rc<CryptoSuite>,
    input: Option<Vec<u64>>,
}

impl RbMachine {
    pub fn new(
        cfg: RbConfig,
        crypto: std::rc::Rc<CryptoSuite>,
        validity: Validity,
        input: Option<Vec<u64>>,
    ) -> RbMachine {
        RbMachine {
            rb: RbInstance::new(cfg, validity),
            crypto,
            input,
        }
    }

    pub fn delivered(&self) -> Option<&Vec<u64>> {
        self.rb.delivered()
    }
}

impl crate::simnet::Machine for RbMachine {
    fn boot(&mut self, out: &mut Outbox) {
        if self.rb.cfg.me == self.rb.cfg.dealer {
            let msg = self.input.clone().expect("the dealer carries an input");
            self.rb
                .dealer_start(&msg, out)
                .expect("input validated by scenario");
        }
    }

    fn deliver(&mut self, from: PartyId, _tag: &InstanceTag, payload: &Payload, out: &mut Outbox) {
        match payload {
            Payload::Rb(m) => self.rb.handle(from, m, &self.crypto, out),
            _ => out.note_dropped(),
        }
    }

    fn done(&self) -> bool {
        self.rb.delivered().is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msg::{Protocol, Recipient};
    use std::collections::VecDeque;

    fn suite(n: usize, f: usize) -> CryptoSuite {
        CryptoSuite::provider("sim-oracle", n, f, 128, b"rb-tests").unwrap()
    }

    fn tag() -> InstanceTag {
        InstanceTag::root(Protocol::Rb, 0)
    }

    fn instances(n: usize, f: usize, dealer: usize, validity: Validity) -> Vec<RbInstance> {
        (0..n)
            .map(|i| {
                RbInstance::new(
                    RbConfig {
                        n,
                        f,
                        me: PartyId(i),
                        dealer: PartyId(dealer),
                        tag: tag(),
                    },
                    validity.clone(),
                )
            })
            .collect()
    }

    /// Runs a full broadcast under a FIFO pump with a per-envelope drop
    /// filter; returns delivered values and the dropped-envelope count.
    fn run(
        n: usize,
        f: usize,
        msg: &[u64],
        validity: Validity,
        drop: impl Fn(PartyId, PartyId, &RbMsg) -> bool,
    ) -> (Vec<Option<Vec<u64>>>, u64) {
        let crypto = suite(n, f);
        let mut parties = instances(n, f, 0, validity);
        let mut out = Outbox::default();
        parties[0].dealer_start(msg, &mut out).unwrap();
        let mut fifo: VecDeque<(PartyId, PartyId, RbMsg)> = VecDeque::new();
        for m in out.msgs {
            if let (Recipient::One(p), Payload::Rb(rb)) = (m.to, m.payload.as_ref()) {
                fifo.push_back((PartyId(0), p, rb.clone()));
            }
        }
        let mut dropped = 0;
        while let Some((from, to, m)) = fifo.pop_front() {
            if drop(from, to, &m) {
                continue;
            }
            let mut out = Outbox::default();
            parties[to.0].handle(from, &m, &crypto, &mut out);
            dropped += out.dropped;
            for ob in out.msgs {
                if let Payload::Rb(rb) = ob.payload.as_ref() {
                    match ob.to {
                        Recipient::One(p) => fifo.push_back((to, p, rb.clone())),
                        Recipient::All => {
                            for j in 0..n {
                                fifo.push_back((to, PartyId(j), rb.clone()));
                            }
                        }
                    }
                }
            }
        }
        (
            parties.iter().map(|p| p.delivered.clone()).collect(),
            dropped,
        )
    }

    #[test]
    fn happy_path_delivers_everywhere() {
        let msg = vec![1, 2, 3, 4, 5];
        let (delivered, _) = run(4, 1, &msg, Validity::Any, |_, _, _| false);
        for d in delivered {
            assert_eq!(d, Some(msg.clone()));
        }
    }

    #[test]
    fn short_and_padded_messages_roundtrip() {
        let (delivered, _) = run(4, 1, &[7], Validity::Any, |_, _, _| false);
        assert_eq!(delivered[3], Some(vec![7]));
        // Trailing zero words survive because length rides in every message.
        let msg = vec![5, 0, 0];
        let (delivered, _) = run(4, 1, &msg, Validity::Any, |_, _, _| false);
        assert_eq!(delivered[0], Some(msg));
    }

    #[test]
    fn ready_amplification_covers_missing_echoes() {
        // Party 3 sees no echoes at all, only readies from 0..3; it must
        // amplify its own ready and still deliver.
        let msg = vec![10, 20, 30];
        let (delivered, _) = run(4, 1, &msg, Validity::Any, |_, to, m| {
            m.kind == RbKind::Echo && to == PartyId(3)
        });
        for d in delivered {
            assert_eq!(d, Some(msg.clone()));
        }
    }

    #[test]
    fn equivocating_dealer_reaches_no_quorum() {
        let n = 4;
        let f = 1;
        let crypto = suite(n, f);
        let mut parties = instances(n, f, 0, Validity::Any);
        let (_, msgs_a) = dealer_envelopes(&[1, 2], n, f).unwrap();
        let (_, msgs_b) = dealer_envelopes(&[9, 9], n, f).unwrap();
        let mut fifo: VecDeque<(PartyId, PartyId, RbMsg)> = VecDeque::new();
        for j in 0..n {
            let m = if j < 2 { &msgs_a[j] } else { &msgs_b[j] };
            fifo.push_back((PartyId(0), PartyId(j), m.clone()));
        }
        while let Some((from, to, m)) = fifo.pop_front() {
            let mut out = Outbox::default();
            parties[to.0].handle(from, &m, &crypto, &mut out);
            for ob in out.msgs {
                if let Payload::Rb(rb) = ob.payload.as_ref() {
                    for j in 0..n {
                        fifo.push_back((to, PartyId(j), rb.clone()));
                    }
                }
            }
        }
        // Two echoes per commitment is below the (n - f) * c threshold.
        for p in &parties {
            assert_eq!(p.delivered, None);
            assert!(!p.sent_ready);
        }
    }

    #[test]
    fn recommit_check_blocks_non_codeword_commitments() {
        let n = 4;
        let f = 1;
        let crypto = suite(n, f);
        let mut parties = instances(n, f, 0, Validity::Any);
        // Commit honestly to chunks of msg, then corrupt one chunk before
        // committing, so openings verify but the vector is not a codeword.
        let msg = vec![4, 5, 6];
        let chunks = encode_chunks(&msg, n, f).unwrap();
        let mut bytes: Vec<Vec<u8>> = chunks.iter().map(|c| chunk_to_bytes(c)).collect();
        bytes[3] = chunk_to_bytes(&[FieldElem::from_u64(999), FieldElem::from_u64(998)]);
        let com = vc_commit(&bytes).unwrap();
        let mut fifo: VecDeque<(PartyId, PartyId, RbMsg)> = VecDeque::new();
        for (j, honest_chunk) in chunks.iter().enumerate() {
            let chunk = if j == 3 {
                vec![FieldElem::from_u64(999), FieldElem::from_u64(998)]
            } else {
                honest_chunk.clone()
            };
            fifo.push_back((
                PartyId(0),
                PartyId(j),
                RbMsg {
                    kind: RbKind::Value,
                    com,
                    len: msg.len(),
                    chunk,
                    proof: vc_open_prove(&bytes, j + 1).unwrap(),
                },
            ));
        }
        let mut saw_ready = false;
        while let Some((from, to, m)) = fifo.pop_front() {
            let mut out = Outbox::default();
            parties[to.0].handle(from, &m, &crypto, &mut out);
            for ob in out.msgs {
                if let Payload::Rb(rb) = ob.payload.as_ref() {
                    saw_ready |= rb.kind == RbKind::Ready;
                    for j in 0..n {
                        fifo.push_back((to, PartyId(j), rb.clone()));
                    }
                }
            }
        }
        assert!(!saw_ready);
        for p in &parties {
            assert_eq!(p.delivered, None);
        }
    }

    #[test]
    fn tampered_chunks_and_foreign_values_are_dropped() {
        let n = 4;
        let f = 1;
        let crypto = suite(n, f);
        let mut parties = instances(n, f, 0, Validity::Any);
        let (_, msgs) = dealer_envelopes(&[8, 8, 8], n, f).unwrap();
        // Flip a word in party 1's value chunk: opening fails.
        let mut bad = msgs[1].clone();
        bad.chunk[0] = FieldElem::from_u64(bad.chunk[0].word() ^ 1);
        let mut out = Outbox::default();
        parties[1].handle(PartyId(0), &bad, &crypto, &mut out);
        assert_eq!(out.dropped, 1);
        assert!(out.msgs.is_empty());
        // A value envelope from a non-dealer is dropped even if well-formed.
        let mut out = Outbox::default();
        parties[2].handle(PartyId(1), &msgs[2], &crypto, &mut out);
        assert_eq!(out.dropped, 1);
        assert!(out.msgs.is_empty());
    }

    #[test]
    fn sender_slots_are_consumed_by_first_arrival() {
        let n = 4;
        let f = 1;
        let crypto = suite(n, f);
        let mut parties = instances(n, f, 0, Validity::Any);
        let (_, msgs) = dealer_envelopes(&[3, 1, 4], n, f).unwrap();
        // Party 2 first receives a junk echo attributed to party 1 ...
        let mut junk = msgs[1].clone();
        junk.kind = RbKind::Echo;
        junk.chunk[0] = FieldElem::from_u64(junk.chunk[0].word() ^ 1);
        let mut out = Outbox::default();
        parties[2].handle(PartyId(1), &junk, &crypto, &mut out);
        assert_eq!(out.dropped, 1);
        // ... so party 1's genuine echo no longer counts.
        let mut echo = msgs[1].clone();
        echo.kind = RbKind::Echo;
        let mut out = Outbox::default();
        parties[2].handle(PartyId(1), &echo, &crypto, &mut out);
        assert_eq!(out.dropped, 1);
        assert!(parties[2].echoes.is_empty());
    }

    #[test]
    fn validated_broadcast_withholds_failing_reconstructions() {
        let msg = vec![1, 2, 3];
        let (delivered, dropped) = run(4, 1, &msg, Validity::MaxLen(1), |_, _, _| false);
        for d in delivered {
            assert_eq!(d, None);
        }
        // Each party noted the withheld delivery exactly once.
        assert_eq!(dropped, 4);
    }

    #[test]
    fn amplified_ready_matches_reencoded_chunk() {
        let n = 4;
        let f = 1;
        let msg = vec![10, 20, 30];
        let crypto = suite(n, f);
        let mut parties = instances(n, f, 0, Validity::Any);
        let mut out = Outbox::default();
        parties[0].dealer_start(&msg, &mut out).unwrap();
        let mut fifo: VecDeque<(PartyId, PartyId, RbMsg)> = VecDeque::new();
        for m in out.msgs {
            if let (Recipient::One(p), Payload::Rb(rb)) = (m.to, m.payload.as_ref()) {
                fifo.push_back((PartyId(0), p, rb.clone()));
            }
        }
        let mut ready_chunks: BTreeMap<usize, Vec<FieldElem>> = BTreeMap::new();
        while let Some((from, to, m)) = fifo.pop_front() {
            // Party 3 never sees an echo: it must amplify from readies.
            if m.kind == RbKind::Echo && to == PartyId(3) {
                continue;
            }
            let mut out = Outbox::default();
            parties[to.0].handle(from, &m, &crypto, &mut out);
            for ob in out.msgs {
                if let Payload::Rb(rb) = ob.payload.as_ref() {
                    if rb.kind == RbKind::Ready {
                        ready_chunks.insert(to.0, rb.chunk.clone());
                    }
                    for j in 0..n {
                        fifo.push_back((to, PartyId(j), rb.clone()));
                    }
                }
            }
        }
        let expected = encode_chunks(&msg, n, f).unwrap();
        assert_eq!(ready_chunks[&3], expected[3]);
        assert_eq!(parties[3].delivered, Some(msg));
    }
}
