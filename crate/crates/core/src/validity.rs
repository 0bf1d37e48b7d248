//! External-validity predicates and the value codecs they decode.
//!
//! Composed protocols wrap their parent's predicate: the election validates
//! `(proposal, transcript)` pairs, and the agreement validates key triples
//! whose certificates chain back to echo signatures. Predicates are pure
//! functions of the suite and the encoded value, so every party evaluates
//! them identically.

use crate::crypto::{transcript_from_reader, CryptoSuite, DkgTranscript, Sig};
use crate::msg::{CertTriple, SigSet};
use crate::wire::{WordReader, WordWriter};
use crate::PartyId;

/// Declarative predicate over encoded values.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Validity {
    /// Accepts any nonempty word vector.
    Any,
    /// Accepts nonempty vectors of at most `max` words.
    MaxLen(usize),
    /// Accepts encodings of verifying key-generation transcripts.
    Transcript,
    /// Accepts key triples correct under the inner value predicate.
    KeySuggestion(Box<Validity>),
    /// Accepts `(proposal, transcript)` election inputs.
    ElectionInput(Box<Validity>),
}

pub fn eval_validity(crypto: &CryptoSuite, quorum: usize, v: &Validity, words: &[u64]) -> bool {
    match v {
        Validity::Any => !words.is_empty(),
        Validity::MaxLen(max) => !words.is_empty() && words.len() <= *max,
        Validity::Transcript => match decode_transcript(words) {
            Some(t) => crypto.dkg_verify(&t),
            None => false,
        },
        Validity::KeySuggestion(inner) => match triple_from_words(words) {
            Some(triple) => key_correct(crypto, quorum, inner, &triple),
            None => false,
        },
        Validity::ElectionInput(inner) => match election_input_from_words(words) {
            Some((prop, t)) => eval_validity(crypto, quorum, inner, &prop) && crypto.dkg_verify(&t),
            None => false,
        },
    }
}

/// Signed statement for agreement certificates: `(kind, value, view)`.
pub fn sig_msg(kind: &str, value: &[u64], view: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + kind.len() + 8 * value.len() + 8);
    out.push(kind.len() as u8);
    out.extend_from_slice(kind.as_bytes());
    out.extend_from_slice(&(value.len() as u64).to_le_bytes());
    for w in value {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out.extend_from_slice(&view.to_le_bytes());
    out
}

fn quorum_signed(crypto: &CryptoSuite, quorum: usize, msg: &[u8], sigs: &SigSet) -> bool {
    let mut seen: Vec<PartyId> = Vec::new();
    for (party, sig) in sigs {
        if seen.contains(party) {
            continue;
        }
        if crypto.verify_signature(*party, msg, sig) {
            seen.push(*party);
        }
    }
    seen.len() >= quorum
}

/// A key triple is correct when its value validates and, past genesis, its
/// proof holds a quorum of echo signatures from the key's view.
pub fn key_correct(
    crypto: &CryptoSuite,
    quorum: usize,
    inner: &Validity,
    key: &CertTriple,
) -> bool {
    if !eval_validity(crypto, quorum, inner, &key.value) {
        return false;
    }
    if key.view == 0 {
        return true;
    }
    match &key.proof {
        Some(sigs) => quorum_signed(crypto, quorum, &sig_msg("echo", &key.value, key.view), sigs),
        None => false,
    }
}

/// Genesis locks are unconditionally correct; later locks need a quorum of
/// key signatures from the lock's view.
pub fn lock_correct(crypto: &CryptoSuite, quorum: usize, lock: &CertTriple) -> bool {
    if lock.view == 0 {
        return true;
    }
    match &lock.proof {
        Some(sigs) => quorum_signed(
            crypto,
            quorum,
            &sig_msg("key", &lock.value, lock.view),
            sigs,
        ),
        None => false,
    }
}

/// Commit certificates have no genesis case.
pub fn commit_correct(
    crypto: &CryptoSuite,
    quorum: usize,
    view: u64,
    value: &[u64],
    proof: &SigSet,
) -> bool {
    view > 0 && quorum_signed(crypto, quorum, &sig_msg("lock", value, view), proof)
}

pub fn triple_to_words(t: &CertTriple) -> Vec<u64> {
    let mut w = WordWriter::new();
    w.put_uint(t.view);
    w.put_words(&t.value);
    match &t.proof {
        None => w.put_uint(0),
        Some(sigs) => {
            w.put_uint(1);
            w.put_uint(sigs.len() as u64);
            for (party, sig) in sigs {
                w.put_uint(party.0 as u64);
                w.put_bytes(sig);
            }
        }
    }
    w.finish()
}

pub fn triple_from_words(words: &[u64]) -> Option<CertTriple> {
    let mut r = WordReader::new(words);
    let view = r.take_uint().ok()?;
    let value = r.take_words().ok()?;
    let proof = match r.take_uint().ok()? {
        0 => None,
        1 => {
            let count = r.take_uint().ok()? as usize;
            if count > 1 << 16 {
                return None;
            }
            let mut sigs: SigSet = Vec::with_capacity(count);
            for _ in 0..count {
                let party = PartyId(r.take_uint().ok()? as usize);
                let sig: Sig = r.take_array::<32>().ok()?;
                sigs.push((party, sig));
            }
            Some(sigs)
        }
        _ => return None,
    };
    r.expect_end().ok()?;
    Some(CertTriple { view, value, proof })
}

/// Index sets travel in strictly ascending order, one word per index.
pub fn indices_to_words(indices: &[PartyId]) -> Vec<u64> {
    let mut w = WordWriter::new();
    w.put_uint(indices.len() as u64);
    for i in indices {
        w.put_uint(i.0 as u64);
    }
    w.finish()
}

pub fn indices_from_words(words: &[u64]) -> Option<Vec<PartyId>> {
    let mut r = WordReader::new(words);
    let count = r.take_uint().ok()? as usize;
    if count > 1 << 16 {
        return None;
    }
    let mut out: Vec<PartyId> = Vec::with_capacity(count);
    for _ in 0..count {
        let id = PartyId(r.take_uint().ok()? as usize);
        if let Some(last) = out.last() {
            if *last >= id {
                return None;
            }
        }
        out.push(id);
    }
    r.expect_end().ok()?;
    Some(out)
}

pub fn election_input_to_words(prop: &[u64], t: &DkgTranscript) -> Vec<u64> {
    let mut w = WordWriter::new();
    w.put_words(prop);
    let words = w.finish();
    let mut out = words;
    out.extend(crate::crypto::transcript_to_words(t));
    out
}

pub fn election_input_from_words(words: &[u64]) -> Option<(Vec<u64>, DkgTranscript)> {
    let mut r = WordReader::new(words);
    let prop = r.take_words().ok()?;
    let t = transcript_from_reader(&mut r)?;
    r.expect_end().ok()?;
    Some((prop, t))
}

fn decode_transcript(words: &[u64]) -> Option<DkgTranscript> {
    crate::crypto::transcript_from_words(words)
}
