//! Canonical encoding of structured values into word vectors.
//!
//! Broadcast payloads travel as vectors of field words, so every value that
//! crosses a broadcast boundary (index sets, key triples, transcripts) is
//! serialized here. The encoding is canonical: equal values produce equal
//! word vectors, and every decode enforces the exact bytes it would itself
//! re-encode, so commitments over encoded values are stable across parties.
//!
//! Byte strings are packed into 7-byte little-endian limbs; a limb is always
//! below `2^56` and therefore a valid field word.

use crate::field::P;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("input truncated")]
    Truncated,
    #[error("malformed encoding")]
    Malformed,
}

const LIMB_BYTES: usize = 7;

#[derive(Default)]
pub struct WordWriter {
    words: Vec<u64>,
}

impl WordWriter {
    pub fn new() -> WordWriter {
        WordWriter::default()
    }

    pub fn finish(self) -> Vec<u64> {
        self.words
    }

    /// Writes a small integer (lengths, identifiers, view numbers).
    pub fn put_uint(&mut self, value: u64) {
        debug_assert!(value < P);
        self.words.push(value);
    }

    /// Writes a length-prefixed byte string as 7-byte limbs.
    pub fn put_bytes(&mut self, bytes: &[u8]) {
        self.put_uint(bytes.len() as u64);
        for limb in bytes.chunks(LIMB_BYTES) {
            let mut buf = [0u8; 8];
            buf[..limb.len()].copy_from_slice(limb);
            self.words.push(u64::from_le_bytes(buf));
        }
    }

    /// Writes a length-prefixed run of raw words (all below the modulus).
    pub fn put_words(&mut self, words: &[u64]) {
        self.put_uint(words.len() as u64);
        self.words.extend_from_slice(words);
    }
}

pub struct WordReader<'a> {
    words: &'a [u64],
    pos: usize,
}

impl<'a> WordReader<'a> {
    pub fn new(words: &'a [u64]) -> WordReader<'a> {
        WordReader { words, pos: 0 }
    }

    fn next(&mut self) -> Result<u64, WireError> {
        let w = *self.words.get(self.pos).ok_or(WireError::Truncated)?;
        if w >= P {
            return Err(WireError::Malformed);
        }
        self.pos += 1;
        Ok(w)
    }

    pub fn take_uint(&mut self) -> Result<u64, WireError> {
        self.next()
    }

    pub fn take_bytes(&mut self) -> Result<Vec<u8>, WireError> {
        let len = self.next()? as usize;
        if len > 1 << 20 {
            return Err(WireError::Malformed);
        }
        let mut out = Vec::with_capacity(len);
        let mut remaining = len;
        while remaining > 0 {
            let take = remaining.min(LIMB_BYTES);
            let w = *self.words.get(self.pos).ok_or(WireError::Truncated)?;
            self.pos += 1;
            // Reject spill into unused limb bytes so encodings stay unique.
            if take < 8 && w >> (8 * take) != 0 {
                return Err(WireError::Malformed);
            }
            out.extend_from_slice(&w.to_le_bytes()[..take]);
            remaining -= take;
        }
        Ok(out)
    }

    pub fn take_array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        let bytes = self.take_bytes()?;
        bytes.try_into().map_err(|_| WireError::Malformed)
    }

    pub fn take_words(&mut self) -> Result<Vec<u64>, WireError> {
        let len = self.next()? as usize;
        if len > 1 << 20 {
            return Err(WireError::Malformed);
        }
        (0..len).map(|_| self.next()).collect()
    }

    /// Succeeds only if every word was consumed.
    pub fn expect_end(&self) -> Result<(), WireError> {
        if self.pos == self.words.len() {
            Ok(())
        } else {
            Err(WireError::Malformed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrips_mixed_content() {
        let mut w = WordWriter::new();
        w.put_uint(42);
        w.put_bytes(b"hello world, this spans limbs");
        w.put_words(&[1, 2, 3]);
        w.put_bytes(&[]);
        let words = w.finish();
        assert!(words.iter().all(|&x| x < P));

        let mut r = WordReader::new(&words);
        assert_eq!(r.take_uint().unwrap(), 42);
        assert_eq!(r.take_bytes().unwrap(), b"hello world, this spans limbs");
        assert_eq!(r.take_words().unwrap(), vec![1, 2, 3]);
        assert_eq!(r.take_bytes().unwrap(), Vec::<u8>::new());
        assert!(r.expect_end().is_ok());
    }

    #[test]
    fn rejects_dirty_limb_padding() {
        let mut w = WordWriter::new();
        w.put_bytes(&[0xff; 3]);
        let mut words = w.finish();
        words[1] |= 1 << 40; // spill beyond the 3 declared bytes
        let mut r = WordReader::new(&words);
        assert_eq!(r.take_bytes(), Err(WireError::Malformed));
    }

    #[test]
    fn rejects_truncation_and_oversized_words() {
        let mut w = WordWriter::new();
        w.put_words(&[9, 9, 9]);
        let words = w.finish();
        let mut r = WordReader::new(&words[..2]);
        assert_eq!(r.take_words(), Err(WireError::Truncated));

        let bad = vec![1, P];
        let mut r = WordReader::new(&bad);
        assert_eq!(r.take_words(), Err(WireError::Malformed));
    }

    #[test]
    fn trailing_garbage_detected() {
        let mut w = WordWriter::new();
        w.put_uint(1);
        let mut words = w.finish();
        words.push(0);
        let mut r = WordReader::new(&words);
        r.take_uint().unwrap();
        assert_eq!(r.expect_end(), Err(WireError::Malformed));
    }
}
