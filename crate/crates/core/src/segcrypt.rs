//! Segmented AES-GCM for large messages and direct GCM for small ones.
//!
//! A large message is encrypted under a fresh per-message subkey
//! `L = AES-128(k_large, V)` where `V` is a random 16-byte seed. The message
//! is cut into fixed-size segments and segment `i` (1-based) is sealed with
//! nonce `[0]_7 || [last]_1 || [i]_4`. Messages below [`PATH_THRESHOLD`] are
//! sealed directly with `k_small` under a random 12-byte nonce.
//!
//! Wire layout (all integers big-endian):
//!
//! ```text
//! header   = opcode:1 | seed:16 or nonce:12 | msg_len:8 | seg_size:4 | threads_hint:2
//! segments = (len:4 | bytes)*
//! ```
//!
//! Chopped-path segments carry the encoded header as GCM associated data, so
//! every header field is covered by every segment tag.

use std::fmt;
use std::ops::Range;

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes128;
use aes_gcm::aead::{Aead, AeadInPlace, Payload};
use aes_gcm::{Aes128Gcm, Nonce};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pipeline::ChopPlan;
use crate::scalar::pow2;

pub const KEY_LEN: usize = 16;
pub const SEED_LEN: usize = 16;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

/// Messages at or above this size take the chopped path.
pub const PATH_THRESHOLD: usize = 64 * 1024;

pub const OPCODE_SMALL: u8 = 0x01;
pub const OPCODE_CHOPPED: u8 = 0x02;

pub const SMALL_HEADER_LEN: usize = 1 + NONCE_LEN + 8 + 4 + 2;
pub const CHOPPED_HEADER_LEN: usize = 1 + SEED_LEN + 8 + 4 + 2;

/// Largest segment counter representable in the 4-byte nonce field.
pub const MAX_SEGMENTS: u64 = u32::MAX as u64;

/// The two master keys: one for the chopped path, one for direct GCM.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyPairing {
    k_large: [u8; KEY_LEN],
    k_small: [u8; KEY_LEN],
}

impl KeyPairing {
    pub fn new(k_large: [u8; KEY_LEN], k_small: [u8; KEY_LEN]) -> Result<Self> {
        if k_large == k_small {
            return Err(Error::KeySeparation);
        }
        Ok(Self { k_large, k_small })
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        loop {
            let mut k_large = [0u8; KEY_LEN];
            let mut k_small = [0u8; KEY_LEN];
            rng.fill_bytes(&mut k_large);
            rng.fill_bytes(&mut k_small);
            if let Ok(keys) = Self::new(k_large, k_small) {
                return keys;
            }
        }
    }

    /// Uses one key for both paths. This configuration is broken (see
    /// [`crate::adversary::forge_without_separation`]) and exists only to
    /// demonstrate that.
    pub fn shared_insecure(key: [u8; KEY_LEN]) -> Self {
        Self { k_large: key, k_small: key }
    }

    pub fn k_large(&self) -> &[u8; KEY_LEN] {
        &self.k_large
    }

    pub fn k_small(&self) -> &[u8; KEY_LEN] {
        &self.k_small
    }

    pub fn is_separated(&self) -> bool {
        self.k_large != self.k_small
    }

    /// `K1 || K2`, the form the key exchange transports.
    pub fn to_bytes(&self) -> [u8; 2 * KEY_LEN] {
        let mut out = [0u8; 2 * KEY_LEN];
        out[..KEY_LEN].copy_from_slice(&self.k_large);
        out[KEY_LEN..].copy_from_slice(&self.k_small);
        out
    }

    /// First 8 bytes of `SHA-256(K1 || K2)` in hex, for comparing pairings
    /// without printing them.
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.to_bytes())[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != 2 * KEY_LEN {
            return Err(Error::MalformedHeader(format!("key pairing of {} bytes", bytes.len())));
        }
        let mut k_large = [0u8; KEY_LEN];
        let mut k_small = [0u8; KEY_LEN];
        k_large.copy_from_slice(&bytes[..KEY_LEN]);
        k_small.copy_from_slice(&bytes[KEY_LEN..]);
        Self::new(k_large, k_small)
    }
}

impl fmt::Debug for KeyPairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPairing")
            .field("separated", &self.is_separated())
            .finish_non_exhaustive()
    }
}

/// Random per-message seed.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Seed(pub [u8; SEED_LEN]);

impl Seed {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut v = [0u8; SEED_LEN];
        rng.fill_bytes(&mut v);
        Seed(v)
    }
}

/// Per-message GCM key derived from `k_large` and a seed.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SubKey(pub(crate) [u8; KEY_LEN]);

impl SubKey {
    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SubKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SubKey(..)")
    }
}

/// Single-block AES-128 encryption.
pub(crate) fn aes_block(key: &[u8; KEY_LEN], block: &[u8; 16]) -> [u8; 16] {
    let cipher = Aes128::new(GenericArray::from_slice(key));
    let mut out = GenericArray::clone_from_slice(block);
    cipher.encrypt_block(&mut out);
    out.into()
}

pub fn derive_subkey(keys: &KeyPairing, seed: &Seed) -> SubKey {
    SubKey(aes_block(&keys.k_large, &seed.0))
}

/// 12-byte nonce `[0]_7 || [last]_1 || [index]_4`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct SegmentNonce([u8; NONCE_LEN]);

impl SegmentNonce {
    pub fn as_bytes(&self) -> &[u8; NONCE_LEN] {
        &self.0
    }

    pub fn index(&self) -> u32 {
        u32::from_be_bytes(self.0[8..12].try_into().unwrap())
    }

    pub fn is_last(&self) -> bool {
        self.0[7] == 0x01
    }
}

pub fn make_nonce(index: u64, is_last: bool) -> Result<SegmentNonce> {
    if index == 0 || index > MAX_SEGMENTS {
        return Err(Error::NonceRange(index));
    }
    let mut n = [0u8; NONCE_LEN];
    n[7] = is_last as u8;
    n[8..].copy_from_slice(&(index as u32).to_be_bytes());
    Ok(SegmentNonce(n))
}

/// Header of a chopped-path message.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ChoppedHeader {
    pub seed: Seed,
    pub msg_len: u64,
    pub seg_size: u32,
    pub threads_hint: u16,
}

impl ChoppedHeader {
    /// Checks the header invariants and returns the segment layout it implies.
    pub fn validate(&self) -> Result<SegmentLayout> {
        if self.msg_len < PATH_THRESHOLD as u64 {
            return Err(Error::MalformedHeader(format!(
                "chopped message of {} bytes is below the path threshold",
                self.msg_len
            )));
        }
        if self.seg_size as u64 > self.msg_len {
            return Err(Error::MalformedHeader(format!(
                "segment size {} exceeds message length {}",
                self.seg_size, self.msg_len
            )));
        }
        if self.threads_hint == 0 {
            return Err(Error::MalformedHeader("zero threads hint".into()));
        }
        SegmentLayout::new(self.msg_len, self.seg_size)
            .map_err(|e| Error::MalformedHeader(e.to_string()))
    }

    pub fn encode(&self) -> [u8; CHOPPED_HEADER_LEN] {
        let mut out = [0u8; CHOPPED_HEADER_LEN];
        out[0] = OPCODE_CHOPPED;
        out[1..17].copy_from_slice(&self.seed.0);
        out[17..25].copy_from_slice(&self.msg_len.to_be_bytes());
        out[25..29].copy_from_slice(&self.seg_size.to_be_bytes());
        out[29..31].copy_from_slice(&self.threads_hint.to_be_bytes());
        out
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum WireHeader {
    Small { nonce: [u8; NONCE_LEN], msg_len: u64 },
    Chopped(ChoppedHeader),
}

impl WireHeader {
    pub fn opcode(&self) -> u8 {
        match self {
            WireHeader::Small { .. } => OPCODE_SMALL,
            WireHeader::Chopped(_) => OPCODE_CHOPPED,
        }
    }

    pub fn msg_len(&self) -> u64 {
        match self {
            WireHeader::Small { msg_len, .. } => *msg_len,
            WireHeader::Chopped(h) => h.msg_len,
        }
    }

    pub fn encoded_len(&self) -> usize {
        match self {
            WireHeader::Small { .. } => SMALL_HEADER_LEN,
            WireHeader::Chopped(_) => CHOPPED_HEADER_LEN,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            WireHeader::Small { nonce, msg_len } => {
                let mut out = Vec::with_capacity(SMALL_HEADER_LEN);
                out.push(OPCODE_SMALL);
                out.extend_from_slice(nonce);
                out.extend_from_slice(&msg_len.to_be_bytes());
                out.extend_from_slice(&0u32.to_be_bytes());
                out.extend_from_slice(&0u16.to_be_bytes());
                out
            }
            WireHeader::Chopped(h) => h.encode().to_vec(),
        }
    }

    /// Decodes a header from the front of `bytes`, returning it with the
    /// number of bytes consumed. Field-level invariants beyond the layout are
    /// left to the decrypt routines.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(Self, usize)> {
        let opcode = *bytes.first().ok_or_else(|| Error::MalformedHeader("empty header".into()))?;
        let need = match opcode {
            OPCODE_SMALL => SMALL_HEADER_LEN,
            OPCODE_CHOPPED => CHOPPED_HEADER_LEN,
            other => return Err(Error::MalformedHeader(format!("unknown opcode {other:#04x}"))),
        };
        if bytes.len() < need {
            return Err(Error::MalformedHeader(format!("header truncated at {} bytes", bytes.len())));
        }
        let iv_len = need - 15;
        let iv = &bytes[1..1 + iv_len];
        let rest = &bytes[1 + iv_len..need];
        let msg_len = u64::from_be_bytes(rest[0..8].try_into().unwrap());
        let seg_size = u32::from_be_bytes(rest[8..12].try_into().unwrap());
        let threads_hint = u16::from_be_bytes(rest[12..14].try_into().unwrap());
        let header = if opcode == OPCODE_SMALL {
            if seg_size != 0 || threads_hint != 0 {
                return Err(Error::MalformedHeader("small header with nonzero segment fields".into()));
            }
            WireHeader::Small { nonce: iv.try_into().unwrap(), msg_len }
        } else {
            WireHeader::Chopped(ChoppedHeader {
                seed: Seed(iv.try_into().unwrap()),
                msg_len,
                seg_size,
                threads_hint,
            })
        };
        Ok((header, need))
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (header, used) = Self::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(Error::MalformedHeader(format!("{} trailing header bytes", bytes.len() - used)));
        }
        Ok(header)
    }
}

/// How a message of `msg_len` bytes splits into `seg_size` segments.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SegmentLayout {
    msg_len: u64,
    seg_size: u32,
    count: u32,
}

impl SegmentLayout {
    pub fn new(msg_len: u64, seg_size: u32) -> Result<Self> {
        if seg_size == 0 {
            return Err(Error::Plan("segment size must be positive".into()));
        }
        let count = msg_len.div_ceil(seg_size as u64).max(1);
        if count > MAX_SEGMENTS {
            return Err(Error::NonceRange(count));
        }
        Ok(Self { msg_len, seg_size, count: count as u32 })
    }

    pub fn msg_len(&self) -> u64 {
        self.msg_len
    }

    pub fn seg_size(&self) -> u32 {
        self.seg_size
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    /// Plaintext byte range of 1-based segment `index`.
    pub fn range(&self, index: u32) -> Range<usize> {
        debug_assert!(index >= 1 && index <= self.count);
        let start = (index as u64 - 1) * self.seg_size as u64;
        let end = (start + self.seg_size as u64).min(self.msg_len);
        start as usize..end as usize
    }

    pub fn ciphertext_len(&self, index: u32) -> usize {
        self.range(index).len() + TAG_LEN
    }

    /// Number of `width`-segment chunks.
    pub fn chunk_count(&self, width: u32) -> u32 {
        self.count.div_ceil(width.max(1))
    }

    /// 1-based segment indices in 1-based chunk `chunk`.
    pub fn chunk_segments(&self, chunk: u32, width: u32) -> std::ops::RangeInclusive<u32> {
        let width = width.max(1);
        let first = (chunk - 1) * width + 1;
        let last = (chunk * width).min(self.count);
        first..=last
    }
}

/// Seals and opens the segments of one chopped message.
///
/// Segment operations on disjoint indices are independent, so a shared
/// reference can be handed to any number of workers.
pub struct SegmentCipher {
    gcm: Aes128Gcm,
    aad: [u8; CHOPPED_HEADER_LEN],
    layout: SegmentLayout,
}

impl SegmentCipher {
    pub fn new(subkey: &SubKey, header: &ChoppedHeader) -> Result<Self> {
        let layout = header.validate()?;
        Ok(Self::with_layout(subkey, header, layout))
    }

    /// Skips the header invariants (path threshold, threads hint). Used by
    /// the encryption benchmark to time sub-threshold sizes.
    pub fn unchecked(subkey: &SubKey, header: &ChoppedHeader) -> Result<Self> {
        let layout = SegmentLayout::new(header.msg_len, header.seg_size)?;
        Ok(Self::with_layout(subkey, header, layout))
    }

    fn with_layout(subkey: &SubKey, header: &ChoppedHeader, layout: SegmentLayout) -> Self {
        Self {
            gcm: Aes128Gcm::new(GenericArray::from_slice(&subkey.0)),
            aad: header.encode(),
            layout,
        }
    }

    pub fn layout(&self) -> &SegmentLayout {
        &self.layout
    }

    fn nonce(&self, index: u32) -> SegmentNonce {
        // index is within 1..=count <= u32::MAX by construction
        make_nonce(index as u64, index == self.layout.count).expect("index within layout")
    }

    /// Encrypts segment `index` of `msg` (the whole plaintext message).
    pub fn seal(&self, index: u32, msg: &[u8]) -> Vec<u8> {
        let nonce = self.nonce(index);
        let pt = &msg[self.layout.range(index)];
        self.gcm
            .encrypt(Nonce::from_slice(nonce.as_bytes()), Payload { msg: pt, aad: &self.aad })
            .expect("GCM encryption of in-range segment")
    }

    /// Encrypts segment `index` of `msg` into `out`, which must be exactly
    /// [`SegmentLayout::ciphertext_len`] bytes.
    pub fn seal_into(&self, index: u32, msg: &[u8], out: &mut [u8]) {
        let nonce = self.nonce(index);
        let range = self.layout.range(index);
        let len = range.len();
        assert_eq!(out.len(), len + TAG_LEN, "output slice for segment {index}");
        let (body, tag_out) = out.split_at_mut(len);
        body.copy_from_slice(&msg[range]);
        let tag = self
            .gcm
            .encrypt_in_place_detached(Nonce::from_slice(nonce.as_bytes()), &self.aad, body)
            .expect("GCM encryption of in-range segment");
        tag_out.copy_from_slice(&tag);
    }

    /// Decrypts segment `index` into `out` (exactly the plaintext length).
    pub fn open_into(&self, index: u32, ct: &[u8], out: &mut [u8]) -> Result<()> {
        if index == 0 || index > self.layout.count() || ct.len() != self.layout.ciphertext_len(index) {
            return Err(Error::AuthFailure { segment: index });
        }
        let len = ct.len() - TAG_LEN;
        assert_eq!(out.len(), len, "output slice for segment {index}");
        let nonce = self.nonce(index);
        out.copy_from_slice(&ct[..len]);
        self.gcm
            .decrypt_in_place_detached(
                Nonce::from_slice(nonce.as_bytes()),
                &self.aad,
                out,
                GenericArray::from_slice(&ct[len..]),
            )
            .map_err(|_| {
                out.fill(0);
                Error::AuthFailure { segment: index }
            })
    }

    /// Decrypts segment `index` from its ciphertext bytes.
    pub fn open(&self, index: u32, ct: &[u8]) -> Result<Vec<u8>> {
        if index == 0 || index > self.layout.count || ct.len() != self.layout.ciphertext_len(index) {
            return Err(Error::AuthFailure { segment: index });
        }
        let nonce = self.nonce(index);
        self.gcm
            .decrypt(Nonce::from_slice(nonce.as_bytes()), Payload { msg: ct, aad: &self.aad })
            .map_err(|_| Error::AuthFailure { segment: index })
    }
}

/// Header plus ordered ciphertext segments.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SegmentedCiphertext {
    pub header: WireHeader,
    pub segments: Vec<Vec<u8>>,
}

impl SegmentedCiphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        let body: usize = self.segments.iter().map(|s| s.len() + 4).sum();
        let mut out = Vec::with_capacity(self.header.encoded_len() + body);
        out.extend_from_slice(&self.header.encode());
        for seg in &self.segments {
            out.extend_from_slice(&(seg.len() as u32).to_be_bytes());
            out.extend_from_slice(seg);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, mut pos) = WireHeader::decode_prefix(bytes)?;
        let mut segments = Vec::new();
        while pos < bytes.len() {
            let len_bytes = bytes
                .get(pos..pos + 4)
                .ok_or_else(|| Error::MalformedHeader("truncated segment length".into()))?;
            let len = u32::from_be_bytes(len_bytes.try_into().unwrap()) as usize;
            pos += 4;
            let seg = bytes
                .get(pos..pos + len)
                .ok_or_else(|| Error::MalformedHeader("truncated segment".into()))?;
            segments.push(seg.to_vec());
            pos += len;
        }
        Ok(Self { header, segments })
    }

    pub fn total_len(&self) -> usize {
        self.header.encoded_len() + self.segments.iter().map(|s| s.len() + 4).sum::<usize>()
    }
}

fn chopped_header(msg: &[u8], plan: &ChopPlan, seed: Seed) -> Result<ChoppedHeader> {
    if msg.len() < PATH_THRESHOLD {
        return Err(Error::PathMismatch { len: msg.len(), threshold: PATH_THRESHOLD });
    }
    let seg_size = u32::try_from(plan.seg_size)
        .map_err(|_| Error::Plan(format!("segment size {} exceeds 4 bytes", plan.seg_size)))?;
    let threads_hint = u16::try_from(plan.t)
        .map_err(|_| Error::Plan(format!("chunk width {} exceeds 2 bytes", plan.t)))?;
    if seg_size == 0 || threads_hint == 0 {
        return Err(Error::Plan("segment size and chunk width must be positive".into()));
    }
    let header = ChoppedHeader { seed, msg_len: msg.len() as u64, seg_size, threads_hint };
    SegmentLayout::new(header.msg_len, seg_size)?;
    header.validate().map_err(|e| Error::Plan(e.to_string()))?;
    Ok(header)
}

/// Prepares the header and segment cipher for a chopped message under a
/// chosen seed, without encrypting anything yet.
pub fn prepare_chopped(
    keys: &KeyPairing,
    msg: &[u8],
    plan: &ChopPlan,
    seed: Seed,
) -> Result<(ChoppedHeader, SegmentCipher)> {
    let header = chopped_header(msg, plan, seed)?;
    let cipher = SegmentCipher::new(&derive_subkey(keys, &seed), &header)?;
    Ok((header, cipher))
}

pub fn chop_encrypt<R: RngCore + CryptoRng>(
    keys: &KeyPairing,
    msg: &[u8],
    plan: &ChopPlan,
    rng: &mut R,
) -> Result<SegmentedCiphertext> {
    chop_encrypt_seeded(keys, msg, plan, Seed::generate(rng))
}

/// [`chop_encrypt`] with the seed supplied by the caller.
pub fn chop_encrypt_seeded(
    keys: &KeyPairing,
    msg: &[u8],
    plan: &ChopPlan,
    seed: Seed,
) -> Result<SegmentedCiphertext> {
    let (header, cipher) = prepare_chopped(keys, msg, plan, seed)?;
    let segments = (1..=cipher.layout().count()).map(|i| cipher.seal(i, msg)).collect();
    Ok(SegmentedCiphertext { header: WireHeader::Chopped(header), segments })
}

pub fn chop_decrypt(keys: &KeyPairing, ct: &SegmentedCiphertext) -> Result<Vec<u8>> {
    let WireHeader::Chopped(header) = &ct.header else {
        return Err(Error::MalformedHeader("expected chopped opcode".into()));
    };
    let layout = header.validate()?;
    if ct.segments.len() as u64 != layout.count() as u64 {
        return Err(Error::SegmentCountMismatch {
            expected: layout.count() as u64,
            actual: ct.segments.len() as u64,
        });
    }
    let cipher = SegmentCipher::new(&derive_subkey(keys, &header.seed), header)?;
    let mut out = Vec::with_capacity(layout.msg_len() as usize);
    for (pos, seg) in ct.segments.iter().enumerate() {
        out.extend_from_slice(&cipher.open(pos as u32 + 1, seg)?);
    }
    Ok(out)
}

fn small_gcm(keys: &KeyPairing) -> Aes128Gcm {
    Aes128Gcm::new(GenericArray::from_slice(&keys.k_small))
}

pub fn small_encrypt<R: RngCore + CryptoRng>(
    keys: &KeyPairing,
    msg: &[u8],
    rng: &mut R,
) -> Result<SegmentedCiphertext> {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    small_encrypt_with_nonce(keys, msg, nonce)
}

pub fn small_encrypt_with_nonce(
    keys: &KeyPairing,
    msg: &[u8],
    nonce: [u8; NONCE_LEN],
) -> Result<SegmentedCiphertext> {
    if msg.len() >= PATH_THRESHOLD {
        return Err(Error::PathMismatch { len: msg.len(), threshold: PATH_THRESHOLD });
    }
    let seg = small_gcm(keys)
        .encrypt(Nonce::from_slice(&nonce), msg)
        .expect("GCM encryption of small message");
    Ok(SegmentedCiphertext {
        header: WireHeader::Small { nonce, msg_len: msg.len() as u64 },
        segments: vec![seg],
    })
}

pub fn small_decrypt(keys: &KeyPairing, ct: &SegmentedCiphertext) -> Result<Vec<u8>> {
    let WireHeader::Small { nonce, msg_len } = &ct.header else {
        return Err(Error::MalformedHeader("expected small opcode".into()));
    };
    if *msg_len >= PATH_THRESHOLD as u64 {
        return Err(Error::MalformedHeader(format!("small message of {msg_len} bytes")));
    }
    if ct.segments.len() != 1 {
        return Err(Error::SegmentCountMismatch { expected: 1, actual: ct.segments.len() as u64 });
    }
    let seg = &ct.segments[0];
    if seg.len() as u64 != msg_len + TAG_LEN as u64 {
        return Err(Error::AuthFailure { segment: 1 });
    }
    small_gcm(keys)
        .decrypt(Nonce::from_slice(nonce), seg.as_slice())
        .map_err(|_| Error::AuthFailure { segment: 1 })
}

/// Encrypts on whichever path the message size selects. `plan` is only
/// consulted for the chopped path.
pub fn encrypt<R: RngCore + CryptoRng>(
    keys: &KeyPairing,
    msg: &[u8],
    plan: &ChopPlan,
    rng: &mut R,
) -> Result<SegmentedCiphertext> {
    if msg.len() < PATH_THRESHOLD {
        small_encrypt(keys, msg, rng)
    } else {
        chop_encrypt(keys, msg, plan, rng)
    }
}

/// Decrypts either path, dispatching on the opcode.
pub fn decrypt(keys: &KeyPairing, ct: &SegmentedCiphertext) -> Result<Vec<u8>> {
    match ct.header {
        WireHeader::Small { .. } => small_decrypt(keys, ct),
        WireHeader::Chopped(_) => chop_decrypt(keys, ct),
    }
}

/// Lower bound `1 - q^2 / 2^129` on the probability that `q` uniformly
/// random 128-bit seeds are pairwise distinct, clamped to `[0, 1]`.
pub fn seed_distinctness_bound(q: u128) -> BigRational {
    let q = BigInt::from(q);
    let bound = BigRational::one() - BigRational::from_integer(&q * &q) / pow2(129);
    if bound < BigRational::zero() {
        BigRational::zero()
    } else {
        bound
    }
}
