//! Distributed key generation: share distribution composed with agreement.
//!
//! Every party deals each peer a fresh key share. Once a quorum of verified
//! shares arrives, the party aggregates them into a transcript and proposes
//! its encoding to the view-based agreement, whose validity predicate admits
//! only verifying transcripts. The decided encoding decodes into the common
//! transcript every party outputs.

use crate::crypto::{
    transcript_from_words, transcript_to_words, CryptoSuite, DkgShare, DkgTranscript, Keypair,
};
use crate::msg::{InstanceTag, Outbox, Path, Payload};
use crate::nwh::{NwhConfig, NwhInstance};
use crate::simnet::Machine;
use crate::validity::Validity;
use crate::PartyId;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeSet;
use std::rc::Rc;

#[derive(Copy, Clone, Debug)]
pub struct AdkgConfig {
    pub n: usize,
    pub f: usize,
    pub me: PartyId,
    pub tag: InstanceTag,
}

pub struct AdkgMachine {
    cfg: AdkgConfig,
    crypto: Rc<CryptoSuite>,
    kp: Keypair,
    rng: ChaCha20Rng,
    share_seen: BTreeSet<PartyId>,
    shares: Vec<DkgShare>,
    nwh: Option<NwhInstance>,
    /// Agreement traffic that outran this party's own proposal.
    pre_nwh: Vec<(PartyId, InstanceTag, Payload)>,
    output: Option<DkgTranscript>,
}

impl AdkgMachine {
    pub fn new(
        cfg: AdkgConfig,
        crypto: Rc<CryptoSuite>,
        kp: Keypair,
        rng: ChaCha20Rng,
    ) -> AdkgMachine {
        AdkgMachine {
            cfg,
            crypto,
            kp,
            rng,
            share_seen: BTreeSet::new(),
            shares: Vec::new(),
            nwh: None,
            pre_nwh: Vec::new(),
            output: None,
        }
    }

    pub fn output(&self) -> Option<&DkgTranscript> {
        self.output.as_ref()
    }

    fn quorum(&self) -> usize {
        self.cfg.n - self.cfg.f
    }

    fn on_share(&mut self, from: PartyId, share: &DkgShare, out: &mut Outbox) {
        if !self.share_seen.insert(from)
            || share.contributor != from
            || !self.crypto.dkg_sh_verify(share)
        {
            out.note_dropped();
            return;
        }
        self.shares.push(share.clone());
        if self.nwh.is_some() || self.shares.len() < self.quorum() {
            return;
        }
        let transcript = self
            .crypto
            .dkg_aggregate(&self.shares)
            .expect("a quorum of verified shares aggregates");
        let mut nwh = NwhInstance::new(
            NwhConfig {
                n: self.cfg.n,
                f: self.cfg.f,
                me: self.cfg.me,
                tag: self.cfg.tag,
            },
            Rc::clone(&self.crypto),
            self.kp.clone(),
            Validity::Transcript,
            transcript_to_words(&transcript),
            ChaCha20Rng::seed_from_u64(self.rng.next_u64()),
        );
        nwh.start(out).expect("own aggregate verifies");
        for (from, tag, payload) in std::mem::take(&mut self.pre_nwh) {
            nwh.handle(from, &tag, &payload, out);
        }
        self.nwh = Some(nwh);
    }
}

impl Machine for AdkgMachine {
    fn boot(&mut self, out: &mut Outbox) {
        for j in 0..self.cfg.n {
            let share = self
                .crypto
                .dkg_sh(&self.kp, &mut self.rng as &mut dyn RngCore);
            out.send(PartyId(j), self.cfg.tag, Payload::DkgShare(share));
        }
    }

    fn deliver(&mut self, from: PartyId, tag: &InstanceTag, payload: &Payload, out: &mut Outbox) {
        match payload {
            // Root-level shares feed this party's aggregate; view-tagged
            // shares belong to the agreement's elections.
            Payload::DkgShare(share) if tag.view == 0 && tag.path == Path::Main => {
                self.on_share(from, share, out);
            }
            _ => match &mut self.nwh {
                Some(nwh) => nwh.handle(from, tag, payload, out),
                None => self.pre_nwh.push((from, *tag, payload.clone())),
            },
        }
        if self.output.is_none() {
            if let Some((_, words)) = self.nwh.as_ref().and_then(|n| n.decided()) {
                self.output =
                    Some(transcript_from_words(words).expect("decided values are transcripts"));
            }
        }
    }

    fn done(&self) -> bool {
        self.output.is_some()
    }
}
