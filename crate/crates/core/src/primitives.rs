//! Digests, identities and the canonical byte encoding shared by every module.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

/// Block height on a simulated chain.
pub type Height = u64;

/// Currency units. One bet is `ChainParams::bet_value` units.
pub type Amount = u64;

/// Index of a player in the tournament, `0..N`.
pub type PartyId = usize;

/// A 256-bit digest (SHA-256).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Hash256(pub [u8; 32]);

impl Hash256 {
    pub const ZERO: Hash256 = Hash256([0u8; 32]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out)?;
        Ok(Hash256(out))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Low bit of the last (big-endian least significant) byte.
    pub fn parity(&self) -> u8 {
        self.0[31] & 1
    }
}

impl fmt::Debug for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", &self.to_hex()[..16])
    }
}

impl fmt::Display for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Hash256 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Hash256 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Hash256::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// SHA-256 of a byte string.
pub fn sha256(data: &[u8]) -> Hash256 {
    Hash256(Sha256::digest(data).into())
}

/// SHA-256 over a domain tag followed by the given parts.
pub fn tagged_hash(tag: &[u8], parts: &[&[u8]]) -> Hash256 {
    let mut h = Sha256::new();
    h.update((tag.len() as u32).to_le_bytes());
    h.update(tag);
    for p in parts {
        h.update(p);
    }
    Hash256(h.finalize().into())
}

/// A participant's public key. Opaque 32 bytes; ownership lives in the signature oracle.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PublicKey(pub Hash256);

impl PublicKey {
    /// Deterministic key for `party` under a key-generation seed.
    pub fn derive(seed: u64, party: PartyId) -> Self {
        PublicKey(tagged_hash(
            b"lottery/pubkey",
            &[&seed.to_le_bytes(), &(party as u64).to_le_bytes()],
        ))
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pk:{:?}", self.0)
    }
}

/// A 32-byte secret whose hash serves as a commitment.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Secret(pub Hash256);

impl Secret {
    pub fn random<R: rand::RngCore + ?Sized>(rng: &mut R) -> Self {
        loop {
            let mut b = [0u8; 32];
            rng.fill_bytes(&mut b);
            // zero is the "unset" sentinel on the contract backend
            if b != [0u8; 32] {
                return Secret(Hash256(b));
            }
        }
    }

    pub fn commitment(&self) -> Hash256 {
        sha256(&self.0 .0)
    }

    pub fn parity(&self) -> u8 {
        self.0.parity()
    }

    pub fn bytes(&self) -> &[u8; 32] {
        &self.0 .0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "secret:{:?}", self.0)
    }
}

/// Canonical, injective serialization: length-prefixed fields in declaration order,
/// fixed-width little-endian integers.
#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn hash(&mut self, h: &Hash256) -> &mut Self {
        self.buf.extend_from_slice(&h.0);
        self
    }

    pub fn len_prefix(&mut self, n: usize) -> &mut Self {
        self.u32(n as u32)
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.len_prefix(b.len());
        self.buf.extend_from_slice(b);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }
}

/// Signature size in bytes (λ) used for on-chain size accounting.
pub const SIG_BYTES: u64 = 32;

/// How N-of-N authorization is paid for on chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SigModel {
    /// N separate signatures per authorization (`N·λ` bytes).
    #[default]
    Multisig,
    /// One aggregate/threshold signature per authorization (`λ` bytes).
    Aggregate,
}

impl SigModel {
    pub fn authorization_bytes(self, signers: usize) -> u64 {
        match self {
            SigModel::Multisig => signers as u64 * SIG_BYTES,
            SigModel::Aggregate => SIG_BYTES,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_roundtrip_and_parity() {
        let h = sha256(b"abc");
        assert_eq!(
            h.to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(Hash256::from_hex(&h.to_hex()).unwrap(), h);
        // 0xad is odd
        assert_eq!(h.parity(), 1);
    }

    #[test]
    fn encoder_is_length_prefixed() {
        let mut a = Encoder::new();
        a.bytes(b"ab").bytes(b"c");
        let mut b = Encoder::new();
        b.bytes(b"a").bytes(b"bc");
        assert_ne!(a.finish(), b.finish());
    }

    #[test]
    fn secrets_are_never_zero() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            assert_ne!(Secret::random(&mut rng).0, Hash256::ZERO);
        }
    }
}
