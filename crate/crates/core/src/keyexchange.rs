//! Coordinator-based key distribution.
//!
//! Every peer sends an RSA public key (DER, SubjectPublicKeyInfo) to the
//! coordinator in a [`kind::PUBKEY`] frame. The coordinator samples one
//! [`KeyPairing`] and answers each peer with `RSA-OAEP-SHA256(pk_i, K1 || K2)`
//! in a [`kind::WRAPPED_KEYS`] frame. The coordinator takes part as rank 0
//! and needs no keypair of its own.
//!
//! There is no authentication of public keys; an active attacker on the
//! handshake channel can substitute its own.

use std::net::ToSocketAddrs;
use std::thread;
use std::time::{Duration, Instant};

use rand::{CryptoRng, RngCore};
use rsa::pkcs8::{DecodePublicKey, EncodePublicKey};
use rsa::{Oaep, RsaPrivateKey, RsaPublicKey};
use sha2::Sha256;

use crate::error::{Error, Result};
use crate::segcrypt::{KeyPairing, KEY_LEN};
use crate::transport::{connect_retry, kind, send_blocking, ChannelOptions, Frame, FrameSink, FrameSource, FramedChannel, Listener};

pub const RSA_BITS: usize = 2048;
pub const DEFAULT_HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);

/// A peer's RSA keypair. The private half never leaves this struct.
pub struct PeerSecret {
    private: RsaPrivateKey,
    public: RsaPublicKey,
}

impl std::fmt::Debug for PeerSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PeerSecret").field("private", &"<redacted>").finish()
    }
}

impl PeerSecret {
    pub fn public(&self) -> &RsaPublicKey {
        &self.public
    }

    pub fn public_der(&self) -> Result<Vec<u8>> {
        self.public
            .to_public_key_der()
            .map(|d| d.as_bytes().to_vec())
            .map_err(|e| Error::KeyGen(e.to_string()))
    }

    /// Decrypts an OAEP payload addressed to this peer.
    pub fn decrypt(&self, ct: &[u8]) -> Result<Vec<u8>> {
        self.private
            .decrypt(Oaep::new::<Sha256>(), ct)
            .map_err(|e| Error::KeyExchange { peer: 0, reason: format!("OAEP decryption failed: {e}") })
    }

    #[cfg(test)]
    pub(crate) fn private(&self) -> &RsaPrivateKey {
        &self.private
    }
}

pub fn peer_init<R: RngCore + CryptoRng>(rng: &mut R) -> Result<PeerSecret> {
    peer_init_bits(rng, RSA_BITS)
}

/// [`peer_init`] with an explicit modulus size.
pub fn peer_init_bits<R: RngCore + CryptoRng>(rng: &mut R, bits: usize) -> Result<PeerSecret> {
    let private = RsaPrivateKey::new(rng, bits).map_err(|e| Error::KeyGen(e.to_string()))?;
    let public = RsaPublicKey::from(&private);
    Ok(PeerSecret { private, public })
}

/// Samples `(K1, K2)` with `K1 != K2` and wraps `K1 || K2` for each peer.
/// Peer indices in errors are positions in `public_keys`.
pub fn coordinator_round<R: RngCore + CryptoRng>(
    public_keys: &[Vec<u8>],
    rng: &mut R,
) -> Result<(KeyPairing, Vec<Vec<u8>>)> {
    if public_keys.is_empty() {
        return Err(Error::KeyExchange { peer: 0, reason: "no peers".into() });
    }
    let keys: Vec<RsaPublicKey> = public_keys
        .iter()
        .enumerate()
        .map(|(peer, der)| {
            RsaPublicKey::from_public_key_der(der)
                .map_err(|e| Error::KeyExchange { peer, reason: format!("malformed public key: {e}") })
        })
        .collect::<Result<_>>()?;
    let pairing = KeyPairing::generate(rng);
    let payload = pairing.to_bytes();
    let wrapped = keys
        .iter()
        .enumerate()
        .map(|(peer, pk)| {
            pk.encrypt(rng, Oaep::new::<Sha256>(), &payload)
                .map_err(|e| Error::KeyExchange { peer, reason: e.to_string() })
        })
        .collect::<Result<_>>()?;
    Ok((pairing, wrapped))
}

pub fn peer_unwrap(secret: &PeerSecret, wrapped: &[u8]) -> Result<KeyPairing> {
    let payload = secret.decrypt(wrapped)?;
    if payload.len() != 2 * KEY_LEN {
        return Err(Error::KeyExchange { peer: 0, reason: format!("unwrapped {} bytes", payload.len()) });
    }
    KeyPairing::from_bytes(&payload)
}

fn recv_kind<C: FrameSource + ?Sized>(chan: &C, want: u8, deadline: Instant, timeout: Duration) -> Result<Frame> {
    let left = deadline.saturating_duration_since(Instant::now());
    match chan.recv_timeout(left)? {
        Some(frame) if frame.kind == want => Ok(frame),
        Some(frame) => Err(Error::MalformedFrame(format!(
            "expected frame kind {want:#04x}, got {:#04x}",
            frame.kind
        ))),
        None => Err(Error::HandshakeTimeout(timeout)),
    }
}

/// Coordinator side over already-connected channels, one per peer.
/// Public keys are gathered concurrently.
pub fn coordinator_handshake<C, R>(channels: &[C], rng: &mut R, timeout: Duration) -> Result<KeyPairing>
where
    C: FrameSink + FrameSource + Sync,
    R: RngCore + CryptoRng,
{
    let deadline = Instant::now() + timeout;
    let gathered: Vec<Result<Vec<u8>>> = thread::scope(|s| {
        let handles: Vec<_> = channels
            .iter()
            .map(|chan| s.spawn(move || recv_kind(chan, kind::PUBKEY, deadline, timeout).map(|f| f.payload)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("gather thread")).collect()
    });
    let public_keys = gathered
        .into_iter()
        .enumerate()
        .map(|(peer, r)| {
            r.map_err(|e| match e {
                Error::HandshakeTimeout(_) => e,
                other if other.is_transport() => other,
                other => Error::KeyExchange { peer, reason: other.to_string() },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (pairing, wrapped) = coordinator_round(&public_keys, rng)?;
    for (peer, (chan, ct)) in channels.iter().zip(wrapped).enumerate() {
        send_blocking(chan, Frame::new(kind::WRAPPED_KEYS, peer as u32, ct))?;
    }
    Ok(pairing)
}

/// Peer side over a connected channel.
pub fn peer_handshake<C, R>(chan: &C, rng: &mut R, timeout: Duration) -> Result<KeyPairing>
where
    C: FrameSink + FrameSource + ?Sized,
    R: RngCore + CryptoRng,
{
    let secret = peer_init(rng)?;
    peer_handshake_with(chan, &secret, timeout)
}

/// [`peer_handshake`] with a keypair generated beforehand.
pub fn peer_handshake_with<C>(chan: &C, secret: &PeerSecret, timeout: Duration) -> Result<KeyPairing>
where
    C: FrameSink + FrameSource + ?Sized,
{
    let deadline = Instant::now() + timeout;
    send_blocking(chan, Frame::new(kind::PUBKEY, 0, secret.public_der()?))?;
    let frame = recv_kind(chan, kind::WRAPPED_KEYS, deadline, timeout)?;
    peer_unwrap(secret, &frame.payload)
}

/// Accepts `peers` TCP connections and runs the coordinator side. Returns
/// the pairing and the open channels, in accept order.
pub fn serve_handshake<R: RngCore + CryptoRng>(
    listener: &Listener,
    peers: usize,
    rng: &mut R,
    timeout: Duration,
) -> Result<(KeyPairing, Vec<FramedChannel>)> {
    let deadline = Instant::now() + timeout;
    let mut channels = Vec::with_capacity(peers);
    while channels.len() < peers {
        let left = deadline.saturating_duration_since(Instant::now());
        match listener.accept_timeout(left)? {
            Some(chan) => channels.push(chan),
            None => return Err(Error::HandshakeTimeout(timeout)),
        }
    }
    let left = deadline.saturating_duration_since(Instant::now());
    let pairing = coordinator_handshake(&channels, rng, left.max(Duration::from_millis(1)))?;
    Ok((pairing, channels))
}

/// Connects to a coordinator (retrying until `timeout`) and runs the peer
/// side.
pub fn join_handshake<A, R>(
    addr: A,
    opts: ChannelOptions,
    rng: &mut R,
    timeout: Duration,
) -> Result<(KeyPairing, FramedChannel)>
where
    A: ToSocketAddrs + Clone,
    R: RngCore + CryptoRng,
{
    let start = Instant::now();
    let secret = peer_init(rng)?;
    let chan = connect_retry(addr, opts, timeout)?;
    let left = timeout.saturating_sub(start.elapsed()).max(Duration::from_millis(1));
    let pairing = peer_handshake_with(&chan, &secret, left)?;
    Ok((pairing, chan))
}
