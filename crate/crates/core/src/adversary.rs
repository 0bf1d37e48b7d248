//! Byzantine behaviors, applied as wrappers around honest machines.
//!
//! A corrupt party runs the honest protocol logic inside and rewrites the
//! traffic it emits, which keeps every behavior expressible as a pure
//! transformation of outbound messages (plus, for the equivocator, a
//! reaction to observed traffic). The five behaviors target different layers:
//! crashing, inconsistent dealing against the broadcast recommit check,
//! withholding election evaluation shares, double-signing echoes, and
//! unjustified blame messages against the view-change guard.

use crate::crypto::{CryptoSuite, Keypair};
use crate::field::P;
use crate::msg::{
    CertTriple, InstanceTag, Outbound, Outbox, Path, Payload, RbKind, RbMsg, Recipient,
};
use crate::rb::dealer_envelopes;
use crate::simnet::Machine;
use crate::validity::sig_msg;
use crate::PartyId;
use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum AdversaryKind {
    /// Sends nothing at all.
    Silent,
    /// Deals conflicting erasure codings to the two halves of the network.
    BadDealer,
    /// Withholds election evaluation shares.
    PeWithholder,
    /// Echoes one key to even parties and re-signs a conflicting key for
    /// odd parties when it observes one.
    NwhEquivocator,
    /// Replaces its echoes with blames that no guard should accept.
    StaleBlamer,
}

impl AdversaryKind {
    pub fn name(self) -> &'static str {
        match self {
            AdversaryKind::Silent => "silent",
            AdversaryKind::BadDealer => "bad_dealer",
            AdversaryKind::PeWithholder => "pe_withholder",
            AdversaryKind::NwhEquivocator => "nwh_equivocator",
            AdversaryKind::StaleBlamer => "stale_blamer",
        }
    }

    pub fn parse(name: &str) -> Option<AdversaryKind> {
        Some(match name {
            "silent" => AdversaryKind::Silent,
            "bad_dealer" => AdversaryKind::BadDealer,
            "pe_withholder" => AdversaryKind::PeWithholder,
            "nwh_equivocator" => AdversaryKind::NwhEquivocator,
            "stale_blamer" => AdversaryKind::StaleBlamer,
            _ => return None,
        })
    }

    pub fn all() -> [AdversaryKind; 5] {
        [
            AdversaryKind::Silent,
            AdversaryKind::BadDealer,
            AdversaryKind::PeWithholder,
            AdversaryKind::NwhEquivocator,
            AdversaryKind::StaleBlamer,
        ]
    }
}

/// Runs `inner` honestly and corrupts what it sends.
pub struct CorruptMachine {
    kind: AdversaryKind,
    n: usize,
    f: usize,
    crypto: Rc<CryptoSuite>,
    kp: Keypair,
    inner: Box<dyn Machine>,
    /// Equivocator: the tuple echoed per view, and whether the conflicting
    /// second signature already went out.
    echoed: BTreeMap<u64, CertTriple>,
    double_signed: BTreeSet<u64>,
}

impl CorruptMachine {
    pub fn new(
        kind: AdversaryKind,
        crypto: Rc<CryptoSuite>,
        kp: Keypair,
        n: usize,
        f: usize,
        inner: Box<dyn Machine>,
    ) -> CorruptMachine {
        CorruptMachine {
            kind,
            n,
            f,
            crypto,
            kp,
            inner,
            echoed: BTreeMap::new(),
            double_signed: BTreeSet::new(),
        }
    }

    fn transform(&mut self, raw: Outbox, out: &mut Outbox) {
        out.events.extend(raw.events);
        out.dropped += raw.dropped;
        match self.kind {
            AdversaryKind::Silent => {}
            AdversaryKind::BadDealer => self.deal_badly(raw.msgs, out),
            AdversaryKind::PeWithholder => {
                for m in raw.msgs {
                    if m.tag.path != Path::PeEval {
                        out.msgs.push(m);
                    }
                }
            }
            AdversaryKind::NwhEquivocator => {
                for m in raw.msgs {
                    if let Payload::Echo { view, key, .. } = m.payload.as_ref() {
                        // Remember the signed tuple and echo it to the even
                        // half only, leaving room for a conflicting story.
                        self.echoed.insert(*view, key.clone());
                        for j in (0..self.n).step_by(2) {
                            out.msgs.push(Outbound {
                                to: Recipient::One(PartyId(j)),
                                tag: m.tag,
                                payload: Rc::clone(&m.payload),
                            });
                        }
                    } else {
                        out.msgs.push(m);
                    }
                }
            }
            AdversaryKind::StaleBlamer => {
                for m in raw.msgs {
                    if let Payload::Echo {
                        view,
                        key,
                        election,
                        ..
                    } = m.payload.as_ref()
                    {
                        out.msgs.push(Outbound {
                            to: m.to,
                            tag: m.tag,
                            payload: Rc::new(Payload::Blame {
                                view: *view,
                                key: key.clone(),
                                election: election.clone(),
                                lock: CertTriple::genesis(Vec::new()),
                            }),
                        });
                    } else {
                        out.msgs.push(m);
                    }
                }
            }
        }
    }

    /// Groups the dealer's value envelopes per instance, recovers the
    /// encoded message, and hands the upper half of the network an encoding
    /// of a different message under a different commitment.
    fn deal_badly(&mut self, msgs: Vec<Outbound>, out: &mut Outbox) {
        let mut groups: BTreeMap<InstanceTag, Vec<usize>> = BTreeMap::new();
        for (i, m) in msgs.iter().enumerate() {
            if let Payload::Rb(rb) = m.payload.as_ref() {
                if rb.kind == RbKind::Value {
                    groups.entry(m.tag).or_default().push(i);
                }
            }
        }
        let mut replace: BTreeMap<usize, RbMsg> = BTreeMap::new();
        for idxs in groups.into_values() {
            if idxs.len() != self.n {
                continue;
            }
            if let Some(alts) = self.alternate_envelopes(&msgs, &idxs) {
                for &i in &idxs {
                    if let Recipient::One(PartyId(j)) = msgs[i].to {
                        if j >= self.n / 2 {
                            replace.insert(i, alts[j].clone());
                        }
                    }
                }
            }
        }
        for (i, m) in msgs.into_iter().enumerate() {
            match replace.remove(&i) {
                Some(alt) => out.msgs.push(Outbound {
                    to: m.to,
                    tag: m.tag,
                    payload: Rc::new(Payload::Rb(alt)),
                }),
                None => out.msgs.push(m),
            }
        }
    }

    fn alternate_envelopes(&self, msgs: &[Outbound], idxs: &[usize]) -> Option<Vec<RbMsg>> {
        let mut points: Vec<(u64, u64)> = Vec::new();
        let mut len = 0;
        for &i in idxs {
            let Payload::Rb(rb) = msgs[i].payload.as_ref() else {
                return None;
            };
            let Recipient::One(PartyId(j)) = msgs[i].to else {
                return None;
            };
            len = rb.len;
            let c = rb.chunk.len();
            for (k, e) in rb.chunk.iter().enumerate() {
                points.push(((j * c + k + 1) as u64, e.word()));
            }
        }
        points.sort_unstable();
        let poly = crate::field::interpolate(&points, len.checked_sub(1)?).ok()?;
        let mut words = poly.words_padded(len);
        words[0] = (words[0] + 1) % P;
        let (_, alts) = dealer_envelopes(&words, self.n, self.f).ok()?;
        Some(alts)
    }

    /// The equivocator signs a conflicting observed tuple for odd parties,
    /// once per view.
    fn react(&mut self, tag: &InstanceTag, payload: &Payload, out: &mut Outbox) {
        if self.kind != AdversaryKind::NwhEquivocator {
            return;
        }
        let Payload::Echo {
            view,
            key,
            election,
            ..
        } = payload
        else {
            return;
        };
        let Some(mine) = self.echoed.get(view) else {
            return;
        };
        if (mine.view, &mine.value) == (key.view, &key.value) || !self.double_signed.insert(*view) {
            return;
        }
        let sig = self
            .crypto
            .sign(&self.kp, &sig_msg("echo", &key.value, *view));
        for j in (1..self.n).step_by(2) {
            out.send(
                PartyId(j),
                *tag,
                Payload::Echo {
                    view: *view,
                    key: key.clone(),
                    election: election.clone(),
                    sig,
                },
            );
        }
    }
}

impl Machine for CorruptMachine {
    fn boot(&mut self, out: &mut Outbox) {
        let mut raw = Outbox::default();
        self.inner.boot(&mut raw);
        self.transform(raw, out);
    }

    fn deliver(&mut self, from: PartyId, tag: &InstanceTag, payload: &Payload, out: &mut Outbox) {
        let mut raw = Outbox::default();
        self.inner.deliver(from, tag, payload, &mut raw);
        self.react(tag, payload, &mut raw);
        self.transform(raw, out);
    }

    fn done(&self) -> bool {
        self.inner.done()
    }
}
