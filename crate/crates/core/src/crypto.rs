//! Simulation-grade cryptography behind the protocol-facing suite contract.
//!
//! The `sim-oracle` provider models every primitive with keyed hashes over a
//! private setup seed, which keeps runs deterministic and byte-exact across
//! parties while preserving the access-control structure the protocols rely
//! on:
//!
//! - signatures are MACs under per-party secrets derived from the setup seed;
//!   holders of the suite can verify any signature but can only produce
//!   signatures for keypairs they were handed,
//! - the threshold function value for `(domain, transcript, message)` is a
//!   keyed hash under a private oracle salt, released only through [`
//!   CryptoSuite::eval`], which demands `f + 1` verifying shares from
//!   distinct evaluators; no smaller coalition can compute or predict it,
//! - the vector commitment is a domain-separated Merkle tree.
//!
//! Every eval operation takes a `domain` so that independent protocol
//! instances (one per consensus view) draw independent randomness even when
//! an adversary replays a transcript across instances.

use crate::wire::{WordReader, WordWriter};
use crate::PartyId;
use rand::RngCore;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub type Digest = [u8; 32];
pub type Sig = [u8; 32];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("unknown crypto provider {0:?}")]
    UnknownProvider(String),
    #[error("need {needed} shares, got {got}")]
    TooFewShares { needed: usize, got: usize },
    #[error("duplicate contributor {0}")]
    DuplicateContributor(PartyId),
    #[error("share from {0} does not verify")]
    ShareMismatch(PartyId),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("lambda {0} outside supported range")]
    LambdaOutOfRange(u32),
}

fn hash(domain: &str, parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    h.update((domain.len() as u64).to_le_bytes());
    h.update(domain.as_bytes());
    for part in parts {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    h.finalize().into()
}

/// Smallest security parameter admissible for `n` parties: the least lambda
/// with `2^lambda >= n^3`, computed in exact integer arithmetic.
pub fn min_lambda(n: usize) -> u32 {
    let cube = (n as u64).saturating_pow(3);
    64 - (cube - 1).leading_zeros()
}

/// Signing handle for one party. The engine hands each machine only its own.
#[derive(Clone)]
pub struct Keypair {
    pub party: PartyId,
    secret: [u8; 32],
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DkgShare {
    pub contributor: PartyId,
    pub payload: [u8; 32],
    pub tag: Sig,
}

/// Aggregate of at least `2f + 1` distinct contributor shares. The identity
/// is a digest over the canonically sorted share set, so it is invariant
/// under permutation of the input shares.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DkgTranscript {
    pub shares: Vec<DkgShare>,
    pub aggregate_id: Digest,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct EvalShare {
    pub evaluator: PartyId,
    pub share: Sig,
}

/// Released threshold-function value plus its correctness proof.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Evaluation {
    pub value: Vec<u8>,
    pub proof: Digest,
}

#[derive(Clone, Debug)]
pub struct CryptoSuite {
    n: usize,
    f: usize,
    lambda_bits: u32,
    setup: [u8; 32],
    oracle_salt: [u8; 32],
}

impl CryptoSuite {
    /// Instantiates a provider by name; only `sim-oracle` is available.
    pub fn provider(
        name: &str,
        n: usize,
        f: usize,
        lambda_bits: u32,
        seed: &[u8],
    ) -> Result<CryptoSuite, CryptoError> {
        if name != "sim-oracle" {
            return Err(CryptoError::UnknownProvider(name.to_string()));
        }
        if lambda_bits == 0 || lambda_bits > 256 {
            return Err(CryptoError::LambdaOutOfRange(lambda_bits));
        }
        Ok(CryptoSuite {
            n,
            f,
            lambda_bits,
            setup: hash("setup", &[seed]),
            oracle_salt: hash("oracle-salt", &[seed]),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn lambda_bits(&self) -> u32 {
        self.lambda_bits
    }

    fn secret(&self, party: PartyId) -> [u8; 32] {
        hash("sk", &[&self.setup, &(party.0 as u64).to_le_bytes()])
    }

    pub fn keypair(&self, party: PartyId) -> Keypair {
        Keypair {
            party,
            secret: self.secret(party),
        }
    }

    pub fn sign(&self, kp: &Keypair, msg: &[u8]) -> Sig {
        hash("sig", &[&kp.secret, msg])
    }

    pub fn verify_signature(&self, party: PartyId, msg: &[u8], sig: &Sig) -> bool {
        if party.0 >= self.n {
            return false;
        }
        &hash("sig", &[&self.secret(party), msg]) == sig
    }

    /// Draws a fresh contribution share; each invocation consumes randomness,
    /// so repeated calls by one party yield unlinkable shares.
    pub fn dkg_sh(&self, kp: &Keypair, rng: &mut dyn RngCore) -> DkgShare {
        let mut payload = [0u8; 32];
        rng.fill_bytes(&mut payload);
        let tag = self.sign(kp, &share_msg(kp.party, &payload));
        DkgShare {
            contributor: kp.party,
            payload,
            tag,
        }
    }

    pub fn dkg_sh_verify(&self, share: &DkgShare) -> bool {
        self.verify_signature(
            share.contributor,
            &share_msg(share.contributor, &share.payload),
            &share.tag,
        )
    }

    /// Aggregates verified shares from at least `2f + 1` distinct
    /// contributors into a transcript.
    pub fn dkg_aggregate(&self, shares: &[DkgShare]) -> Result<DkgTranscript, CryptoError> {
        let needed = 2 * self.f + 1;
        if shares.len() < needed {
            return Err(CryptoError::TooFewShares {
                needed,
                got: shares.len(),
            });
        }
        let mut sorted = shares.to_vec();
        sorted.sort_by_key(|s| s.contributor);
        for pair in sorted.windows(2) {
            if pair[0].contributor == pair[1].contributor {
                return Err(CryptoError::DuplicateContributor(pair[0].contributor));
            }
        }
        for share in &sorted {
            if !self.dkg_sh_verify(share) {
                return Err(CryptoError::ShareMismatch(share.contributor));
            }
        }
        let aggregate_id = aggregate_id(&sorted);
        Ok(DkgTranscript {
            shares: sorted,
            aggregate_id,
        })
    }

    pub fn dkg_verify(&self, t: &DkgTranscript) -> bool {
        if t.shares.len() < 2 * self.f + 1 {
            return false;
        }
        for pair in t.shares.windows(2) {
            if pair[0].contributor >= pair[1].contributor {
                return false;
            }
        }
        if t.shares.iter().any(|s| s.contributor.0 >= self.n) {
            return false;
        }
        if t.shares.iter().any(|s| !self.dkg_sh_verify(s)) {
            return false;
        }
        aggregate_id(&t.shares) == t.aggregate_id
    }

    pub fn eval_sh(&self, t: &DkgTranscript, kp: &Keypair, domain: &[u8], msg: &[u8]) -> EvalShare {
        EvalShare {
            evaluator: kp.party,
            share: self.sign(kp, &eval_msg(domain, &t.aggregate_id, msg)),
        }
    }

    pub fn eval_sh_verify(
        &self,
        t: &DkgTranscript,
        share: &EvalShare,
        domain: &[u8],
        msg: &[u8],
    ) -> bool {
        self.verify_signature(
            share.evaluator,
            &eval_msg(domain, &t.aggregate_id, msg),
            &share.share,
        )
    }

    /// The trusted oracle: releases the evaluation once handed `f + 1`
    /// verifying shares from distinct evaluators.
    pub fn eval(
        &self,
        t: &DkgTranscript,
        domain: &[u8],
        msg: &[u8],
        shares: &[EvalShare],
    ) -> Result<Evaluation, CryptoError> {
        let mut seen = Vec::new();
        for share in shares {
            if seen.contains(&share.evaluator) {
                return Err(CryptoError::DuplicateContributor(share.evaluator));
            }
            if !self.eval_sh_verify(t, share, domain, msg) {
                return Err(CryptoError::ShareMismatch(share.evaluator));
            }
            seen.push(share.evaluator);
        }
        let needed = self.f + 1;
        if seen.len() < needed {
            return Err(CryptoError::TooFewShares {
                needed,
                got: seen.len(),
            });
        }
        Ok(self.derive_evaluation(t, domain, msg))
    }

    pub fn eval_verify(
        &self,
        t: &DkgTranscript,
        domain: &[u8],
        msg: &[u8],
        evaluation: &Evaluation,
    ) -> bool {
        &self.derive_evaluation(t, domain, msg) == evaluation
    }

    fn derive_evaluation(&self, t: &DkgTranscript, domain: &[u8], msg: &[u8]) -> Evaluation {
        let raw = hash(
            "eval-value",
            &[&self.oracle_salt, domain, &t.aggregate_id, msg],
        );
        let nbytes = self.lambda_bits.div_ceil(8) as usize;
        let mut value = raw[..nbytes].to_vec();
        let spare = (nbytes * 8) as u32 - self.lambda_bits;
        value[0] &= 0xffu8 >> spare;
        let proof = hash(
            "eval-proof",
            &[&self.oracle_salt, domain, &t.aggregate_id, msg],
        );
        Evaluation { value, proof }
    }
}

fn share_msg(contributor: PartyId, payload: &[u8; 32]) -> Vec<u8> {
    let mut msg = b"dkg-share".to_vec();
    msg.extend_from_slice(&(contributor.0 as u64).to_le_bytes());
    msg.extend_from_slice(payload);
    msg
}

fn eval_msg(domain: &[u8], aggregate_id: &Digest, msg: &[u8]) -> Vec<u8> {
    let mut out = b"eval-share".to_vec();
    out.extend_from_slice(&(domain.len() as u64).to_le_bytes());
    out.extend_from_slice(domain);
    out.extend_from_slice(aggregate_id);
    out.extend_from_slice(msg);
    out
}

fn aggregate_id(sorted: &[DkgShare]) -> Digest {
    let mut h = Sha256::new();
    h.update(b"dkg-aggregate");
    h.update((sorted.len() as u64).to_le_bytes());
    for share in sorted {
        h.update((share.contributor.0 as u64).to_le_bytes());
        h.update(share.payload);
        h.update(share.tag);
    }
    h.finalize().into()
}

/// Serializes a transcript for broadcast; the identity is recomputed on
/// decode, so a tampered transcript cannot carry a matching identity.
pub fn transcript_to_words(t: &DkgTranscript) -> Vec<u64> {
    let mut w = WordWriter::new();
    w.put_uint(t.shares.len() as u64);
    for share in &t.shares {
        w.put_uint(share.contributor.0 as u64);
        w.put_bytes(&share.payload);
        w.put_bytes(&share.tag);
    }
    w.finish()
}

pub fn transcript_from_reader(r: &mut WordReader<'_>) -> Option<DkgTranscript> {
    let count = r.take_uint().ok()? as usize;
    if count > 1 << 16 {
        return None;
    }
    let mut shares = Vec::with_capacity(count);
    for _ in 0..count {
        let contributor = PartyId(r.take_uint().ok()? as usize);
        let payload = r.take_array::<32>().ok()?;
        let tag = r.take_array::<32>().ok()?;
        shares.push(DkgShare {
            contributor,
            payload,
            tag,
        });
    }
    let aggregate_id = aggregate_id(&shares);
    Some(DkgTranscript {
        shares,
        aggregate_id,
    })
}

pub fn transcript_from_words(words: &[u64]) -> Option<DkgTranscript> {
    let mut r = WordReader::new(words);
    let t = transcript_from_reader(&mut r)?;
    r.expect_end().ok()?;
    Some(t)
}

const LEAF_TAG: &[u8] = b"vc-leaf";
const NODE_TAG: &[u8] = b"vc-node";
const PAD_TAG: &[u8] = b"vc-pad";

fn leaf_digest(value: &[u8]) -> Digest {
    hash("vc", &[LEAF_TAG, value])
}

fn node_digest(left: &Digest, right: &Digest) -> Digest {
    hash("vc", &[NODE_TAG, left, right])
}

fn build_tree(values: &[Vec<u8>]) -> Vec<Vec<Digest>> {
    let width = values.len().next_power_of_two();
    let mut level: Vec<Digest> = values.iter().map(|v| leaf_digest(v)).collect();
    level.resize(width, hash("vc", &[PAD_TAG]));
    let mut levels = vec![level];
    while levels.last().unwrap().len() > 1 {
        let prev = levels.last().unwrap();
        let next: Vec<Digest> = prev
            .chunks(2)
            .map(|pair| node_digest(&pair[0], &pair[1]))
            .collect();
        levels.push(next);
    }
    levels
}

/// Commits to an ordered vector of values. A length-1 vector commits to the
/// bare leaf digest.
pub fn vc_commit(values: &[Vec<u8>]) -> Result<Digest, CryptoError> {
    if values.is_empty() {
        return Err(CryptoError::IndexOutOfRange { index: 0, len: 0 });
    }
    Ok(*build_tree(values).last().unwrap().first().unwrap())
}

/// Opening proof for 1-indexed position `index`; proof length is the tree
/// depth, `O(log n)` digests.
pub fn vc_open_prove(values: &[Vec<u8>], index: usize) -> Result<Vec<Digest>, CryptoError> {
    if index == 0 || index > values.len() {
        return Err(CryptoError::IndexOutOfRange {
            index,
            len: values.len(),
        });
    }
    let levels = build_tree(values);
    let mut path = Vec::new();
    let mut pos = index - 1;
    for level in &levels[..levels.len() - 1] {
        path.push(level[pos ^ 1]);
        pos >>= 1;
    }
    Ok(path)
}

pub fn vc_open_verify(com: &Digest, value: &[u8], index: usize, proof: &[Digest]) -> bool {
    if index == 0 || proof.len() >= 64 {
        return false;
    }
    let mut pos = index - 1;
    // The claimed position must be addressable within the proven depth.
    if pos >> proof.len() != 0 {
        return false;
    }
    let mut cur = leaf_digest(value);
    for sibling in proof {
        cur = if pos & 1 == 1 {
            node_digest(sibling, &cur)
        } else {
            node_digest(&cur, sibling)
        };
        pos >>= 1;
    }
    &cur == com
}
