//! Attack harness: ciphertext mutations and the shared-key forgery.
//!
//! Segment indices in [`Attack`] are 1-based, matching nonce counters.

use rand::{CryptoRng, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::pipeline::ChopPlan;
use crate::segcrypt::{
    decrypt, small_encrypt_with_nonce, ChoppedHeader, KeyPairing, Seed, SegmentCipher, SegmentedCiphertext, SubKey,
    WireHeader, NONCE_LEN, PATH_THRESHOLD, SEED_LEN, TAG_LEN,
};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum HeaderField {
    MsgLen(u64),
    SegSize(u32),
    ThreadsHint(u16),
    Seed([u8; SEED_LEN]),
    Nonce([u8; NONCE_LEN]),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Attack {
    /// Flips bit `bit` of the concatenated segment bytes.
    BitFlip { bit: usize },
    Swap(usize, usize),
    Drop(usize),
    /// Inserts a copy of segment `i` right after it.
    Duplicate(usize),
    /// Removes `n` bytes from the end of the segment data.
    Truncate(usize),
    HeaderField(HeaderField),
}

fn harness(msg: String) -> Error {
    Error::Harness(msg)
}

fn check_index(ct: &SegmentedCiphertext, i: usize) -> Result<usize> {
    if i == 0 || i > ct.segments.len() {
        return Err(harness(format!("segment {i} outside 1..={}", ct.segments.len())));
    }
    Ok(i - 1)
}

pub fn mutate(ct: &SegmentedCiphertext, attack: Attack) -> Result<SegmentedCiphertext> {
    let mut out = ct.clone();
    let body: usize = ct.segments.iter().map(Vec::len).sum();
    match attack {
        Attack::BitFlip { bit } => {
            if bit >= body * 8 {
                return Err(harness(format!("bit {bit} outside {body} bytes")));
            }
            let mut byte = bit / 8;
            for seg in &mut out.segments {
                if byte < seg.len() {
                    seg[byte] ^= 1 << (bit % 8);
                    break;
                }
                byte -= seg.len();
            }
        }
        Attack::Swap(i, j) => {
            let (a, b) = (check_index(ct, i)?, check_index(ct, j)?);
            if a == b {
                return Err(harness("swap of a segment with itself".into()));
            }
            out.segments.swap(a, b);
        }
        Attack::Drop(i) => {
            let a = check_index(ct, i)?;
            out.segments.remove(a);
        }
        Attack::Duplicate(i) => {
            let a = check_index(ct, i)?;
            out.segments.insert(a + 1, ct.segments[a].clone());
        }
        Attack::Truncate(n) => {
            if n == 0 || n >= body {
                return Err(harness(format!("truncate {n} of {body} bytes")));
            }
            let mut left = n;
            while left > 0 {
                let last = out.segments.last_mut().expect("non-empty body");
                let cut = left.min(last.len());
                last.truncate(last.len() - cut);
                left -= cut;
                if last.is_empty() {
                    out.segments.pop();
                }
            }
        }
        Attack::HeaderField(field) => {
            out.header = mutate_header(&ct.header, field)?;
        }
    }
    Ok(out)
}

fn mutate_header(header: &WireHeader, field: HeaderField) -> Result<WireHeader> {
    let mut h = header.clone();
    match (&mut h, field) {
        (WireHeader::Small { msg_len, .. }, HeaderField::MsgLen(v)) => *msg_len = v,
        (WireHeader::Small { nonce, .. }, HeaderField::Nonce(v)) => *nonce = v,
        (WireHeader::Chopped(c), HeaderField::MsgLen(v)) => c.msg_len = v,
        (WireHeader::Chopped(c), HeaderField::SegSize(v)) => c.seg_size = v,
        (WireHeader::Chopped(c), HeaderField::ThreadsHint(v)) => c.threads_hint = v,
        (WireHeader::Chopped(c), HeaderField::Seed(v)) => c.seed = Seed(v),
        (_, f) => return Err(harness(format!("{f:?} does not apply to opcode {:#04x}", header.opcode()))),
    }
    if &h == header {
        return Err(harness(format!("{field:?} leaves the header unchanged")));
    }
    Ok(h)
}

/// Flips one bit anywhere in the serialized ciphertext, header included.
pub fn flip_serialized_bit(bytes: &[u8], bit: usize) -> Result<Vec<u8>> {
    if bit >= bytes.len() * 8 {
        return Err(harness(format!("bit {bit} outside {} bytes", bytes.len())));
    }
    let mut out = bytes.to_vec();
    out[bit / 8] ^= 1 << (bit % 8);
    Ok(out)
}

/// Draws a valid attack of a random kind for `ct`.
pub fn random_attack<R: Rng + ?Sized>(rng: &mut R, ct: &SegmentedCiphertext) -> Attack {
    let n = ct.segments.len();
    let body: usize = ct.segments.iter().map(Vec::len).sum();
    loop {
        let attack = match rng.gen_range(0..6) {
            0 => Attack::BitFlip { bit: rng.gen_range(0..body * 8) },
            1 if n >= 2 => {
                let i = rng.gen_range(1..=n);
                let j = loop {
                    let j = rng.gen_range(1..=n);
                    if j != i {
                        break j;
                    }
                };
                Attack::Swap(i, j)
            }
            2 => Attack::Drop(rng.gen_range(1..=n)),
            3 => Attack::Duplicate(rng.gen_range(1..=n)),
            4 if body > 1 => Attack::Truncate(rng.gen_range(1..body)),
            5 => Attack::HeaderField(random_header_field(rng, &ct.header)),
            _ => continue,
        };
        return attack;
    }
}

fn random_header_field<R: Rng + ?Sized>(rng: &mut R, header: &WireHeader) -> HeaderField {
    match header {
        WireHeader::Small { msg_len, nonce } => {
            if rng.gen() {
                HeaderField::MsgLen(msg_len ^ (1 << rng.gen_range(0..16)))
            } else {
                let mut v = *nonce;
                v[rng.gen_range(0..NONCE_LEN)] ^= 1 << rng.gen_range(0..8);
                HeaderField::Nonce(v)
            }
        }
        WireHeader::Chopped(c) => match rng.gen_range(0..4) {
            0 => HeaderField::MsgLen(c.msg_len ^ (1 << rng.gen_range(0..24))),
            1 => HeaderField::SegSize(c.seg_size ^ (1 << rng.gen_range(0..20))),
            2 => HeaderField::ThreadsHint(c.threads_hint ^ (1 << rng.gen_range(0..8))),
            _ => {
                let mut v = c.seed.0;
                v[rng.gen_range(0..SEED_LEN)] ^= 1 << rng.gen_range(0..8);
                HeaderField::Seed(v)
            }
        },
    }
}

/// Every non-identity reordering of the segments, and every ordered
/// arrangement of every strict subset (including the empty one).
pub fn rearrangements(ct: &SegmentedCiphertext) -> Vec<SegmentedCiphertext> {
    let n = ct.segments.len();
    let mut out = Vec::new();
    let mut seq = Vec::with_capacity(n);
    let mut used = vec![false; n];
    arrange(ct, &mut seq, &mut used, &mut out);
    out
}

fn arrange(ct: &SegmentedCiphertext, seq: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<SegmentedCiphertext>) {
    let n = ct.segments.len();
    let identity = seq.len() == n && seq.iter().enumerate().all(|(p, &i)| p == i);
    if !identity {
        out.push(SegmentedCiphertext {
            header: ct.header.clone(),
            segments: seq.iter().map(|&i| ct.segments[i].clone()).collect(),
        });
    }
    for i in 0..n {
        if !used[i] {
            used[i] = true;
            seq.push(i);
            arrange(ct, seq, used, out);
            seq.pop();
            used[i] = false;
        }
    }
}

/// A 16-byte plaintext the attacker knows, with its small-path ciphertext.
#[derive(Clone, Debug)]
pub struct KnownPair {
    pub nonce: [u8; NONCE_LEN],
    pub plaintext: [u8; 16],
    pub ciphertext: Vec<u8>,
}

impl KnownPair {
    pub fn from_small(ct: &SegmentedCiphertext, plaintext: &[u8]) -> Result<Self> {
        let WireHeader::Small { nonce, .. } = ct.header else {
            return Err(harness("known pair must come from the small path".into()));
        };
        let plaintext: [u8; 16] = plaintext
            .try_into()
            .map_err(|_| harness(format!("known plaintext must be 16 bytes, got {}", plaintext.len())))?;
        match ct.segments.as_slice() {
            [seg] if seg.len() == 16 + TAG_LEN => Ok(Self { nonce, plaintext, ciphertext: seg.clone() }),
            _ => Err(harness("known ciphertext must be one 32-byte segment".into())),
        }
    }

    /// The keystream block that encrypted the known plaintext.
    pub fn keystream(&self) -> [u8; 16] {
        let mut ks = [0u8; 16];
        for (i, b) in ks.iter_mut().enumerate() {
            *b = self.ciphertext[i] ^ self.plaintext[i];
        }
        ks
    }
}

#[derive(Clone, Debug)]
pub struct Forgery {
    /// Counter block value `c` for which the seed `nonce || [c]_4` was accepted.
    pub counter: u32,
    pub ciphertext: SegmentedCiphertext,
}

/// Counter-block values tried for the seed `nonce || [c]_4`.
pub const CANDIDATE_COUNTERS: [u32; 4] = [1, 2, 0, 3];

/// Builds the chopped ciphertext of `target` an attacker would send if
/// the keystream block came from counter block `counter`.
pub fn forge_candidate(known: &KnownPair, target: &[u8], plan: &ChopPlan, counter: u32) -> Result<SegmentedCiphertext> {
    if target.len() < PATH_THRESHOLD {
        return Err(harness(format!("forgery target of {} bytes is below the chopped path", target.len())));
    }
    let mut seed = [0u8; SEED_LEN];
    seed[..NONCE_LEN].copy_from_slice(&known.nonce);
    seed[NONCE_LEN..].copy_from_slice(&counter.to_be_bytes());
    let header = ChoppedHeader {
        seed: Seed(seed),
        msg_len: target.len() as u64,
        seg_size: u32::try_from(plan.seg_size).map_err(|_| harness("segment size".into()))?,
        threads_hint: u16::try_from(plan.t).map_err(|_| harness("chunk width".into()))?,
    };
    let cipher = SegmentCipher::new(&SubKey(known.keystream()), &header)?;
    let segments = (1..=cipher.layout().count()).map(|i| cipher.seal(i, target)).collect();
    Ok(SegmentedCiphertext { header: WireHeader::Chopped(header), segments })
}

/// Tries each candidate counter against the receiver and returns the first
/// forgery it accepts. `accepts` stands in for a receiver that reveals
/// whether a message decrypted.
pub fn forge_without_separation<F>(known: &KnownPair, target: &[u8], plan: &ChopPlan, mut accepts: F) -> Result<Option<Forgery>>
where
    F: FnMut(&SegmentedCiphertext) -> bool,
{
    for counter in CANDIDATE_COUNTERS {
        let ciphertext = forge_candidate(known, target, plan, counter)?;
        if accepts(&ciphertext) {
            return Ok(Some(Forgery { counter, ciphertext }));
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttackOutcome {
    pub separated: bool,
    /// Counter block the receiver accepted, if any.
    pub accepted_counter: Option<u32>,
    /// Plaintext the receiver decrypted from the forgery.
    pub delivered: Option<Vec<u8>>,
    pub target: Vec<u8>,
}

impl AttackOutcome {
    pub fn forged(&self) -> bool {
        self.delivered.as_deref() == Some(self.target.as_slice())
    }
}

/// Runs the forgery end to end with fixed inputs.
pub fn attack_demo(separated: bool) -> Result<AttackOutcome> {
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
    let keys = demo_keys(&mut rng, separated);
    let known_plaintext = *b"GET /status HTTP";
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let observed = small_encrypt_with_nonce(&keys, &known_plaintext, nonce)?;
    let known = KnownPair::from_small(&observed, &known_plaintext)?;

    let target: Vec<u8> = b"transfer all funds to mallory; "
        .iter()
        .copied()
        .cycle()
        .take(PATH_THRESHOLD * 2)
        .collect();
    let plan = ChopPlan::for_message(target.len(), 2, 4, 4)?;
    let forgery = forge_without_separation(&known, &target, &plan, |ct| decrypt(&keys, ct).is_ok())?;
    let (accepted_counter, delivered) = match forgery {
        Some(f) => (Some(f.counter), Some(decrypt(&keys, &f.ciphertext)?)),
        None => (None, None),
    };
    Ok(AttackOutcome { separated, accepted_counter, delivered, target })
}

fn demo_keys<R: RngCore + CryptoRng>(rng: &mut R, separated: bool) -> KeyPairing {
    if separated {
        KeyPairing::generate(rng)
    } else {
        let mut key = [0u8; 16];
        rng.fill_bytes(&mut key);
        KeyPairing::shared_insecure(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segcrypt::chop_encrypt;

    fn sample(segments: usize) -> (KeyPairing, SegmentedCiphertext) {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let keys = KeyPairing::generate(&mut rng);
        let msg: Vec<u8> = (0..PATH_THRESHOLD * segments).map(|i| i as u8).collect();
        let plan = ChopPlan::for_message(msg.len(), 1, segments, 1).unwrap();
        let ct = chop_encrypt(&keys, &msg, &plan, &mut rng).unwrap();
        assert_eq!(ct.segments.len(), segments);
        (keys, ct)
    }

    #[test]
    fn swap_is_rejected() {
        let (keys, ct) = sample(4);
        let bad = mutate(&ct, Attack::Swap(2, 3)).unwrap();
        assert!(matches!(decrypt(&keys, &bad), Err(Error::AuthFailure { segment: 2 })));
    }

    #[test]
    fn length_extension_is_rejected() {
        let (keys, ct) = sample(4);
        let WireHeader::Chopped(h) = &ct.header else { unreachable!() };
        let bad = mutate(&ct, Attack::HeaderField(HeaderField::MsgLen(h.msg_len + h.seg_size as u64))).unwrap();
        assert!(matches!(
            decrypt(&keys, &bad),
            Err(Error::SegmentCountMismatch { .. } | Error::AuthFailure { .. })
        ));
    }

    #[test]
    fn dropping_last_is_count_mismatch() {
        let (keys, ct) = sample(3);
        let bad = mutate(&ct, Attack::Drop(3)).unwrap();
        assert!(matches!(decrypt(&keys, &bad), Err(Error::SegmentCountMismatch { expected: 3, actual: 2 })));
    }

    #[test]
    fn out_of_range_parameters() {
        let (_, ct) = sample(2);
        for attack in [
            Attack::Swap(1, 1),
            Attack::Swap(0, 1),
            Attack::Drop(3),
            Attack::Duplicate(0),
            Attack::Truncate(0),
            Attack::BitFlip { bit: usize::MAX / 16 },
            Attack::HeaderField(HeaderField::Nonce([0; 12])),
        ] {
            assert!(matches!(mutate(&ct, attack), Err(Error::Harness(_))), "{attack:?}");
        }
        assert!(flip_serialized_bit(&[0], 8).is_err());
    }

    #[test]
    fn truncation_crosses_segments() {
        let (_, ct) = sample(2);
        let last = ct.segments[1].len();
        let cut = mutate(&ct, Attack::Truncate(last + 3)).unwrap();
        assert_eq!(cut.segments.len(), 1);
        assert_eq!(cut.segments[0].len(), ct.segments[0].len() - 3);
    }

    #[test]
    fn rearrangement_counts() {
        // sum over r of n!/(n-r)!, minus the identity
        for (n, expect) in [(2usize, 4usize), (3, 15), (4, 64)] {
            let (_, ct) = sample(n);
            assert_eq!(rearrangements(&ct).len(), expect);
        }
    }

    #[test]
    fn forgery_needs_shared_key() {
        let open = attack_demo(false).unwrap();
        assert!(open.forged());
        assert_eq!(open.accepted_counter, Some(2));
        let closed = attack_demo(true).unwrap();
        assert!(!closed.forged());
        assert_eq!(closed.delivered, None);
        assert_eq!(attack_demo(false).unwrap(), open);
    }

    #[test]
    fn known_pair_preconditions() {
        let keys = KeyPairing::shared_insecure([1; 16]);
        let ct = small_encrypt_with_nonce(&keys, b"short", [0; 12]).unwrap();
        assert!(KnownPair::from_small(&ct, b"short").is_err());
        let (_, chopped) = sample(1);
        assert!(KnownPair::from_small(&chopped, &[0; 16]).is_err());
    }
}
