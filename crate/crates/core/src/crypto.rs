//! Symmetric primitives: DRKey derivation, CBC-MAC authenticators, per-packet
//! validation fields and AEAD sealing of grants.
//!
//! Every MAC input is a fixed-width big-endian encoding, zero-padded to a
//! whole number of AES blocks. Field order follows the protocol definitions:
//!
//! | value            | key       | input                                   |
//! |------------------|-----------|-----------------------------------------|
//! | DRKey `K_{i→S}`  | `K_i`     | `S` as a 16-byte big-endian integer     |
//! | authenticator α  | `K_i`     | `S(8) ‖ ingress(2) ‖ egress(2)`         |
//! | request tag      | `K_{i→S}` | `tsReq(8) ‖ R(1) ‖ B(1) [‖ dem(8) ‖ min(8)]` |
//! | validation φ     | α         | `ts(8) ‖ len(2)`                        |

use std::cell::Cell;
use std::fmt;

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;
use chacha20poly1305::aead::AeadInPlace;
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce, Tag};
use thiserror::Error;

use crate::types::{AsId, Bandwidth, IfId, Timestamp};

pub const KEY_LEN: usize = 16;
pub const BLOCK_LEN: usize = 16;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

/// Length in bytes of a truncated validation field (RVF/BVF).
pub const VALIDATION_FIELD_LEN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("AEAD tag verification failed")]
    AuthFailure,
}

thread_local! {
    static MAC_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of MAC computations performed on the current thread.
pub fn mac_invocations() -> u64 {
    MAC_CALLS.with(|c| c.get())
}

pub fn reset_mac_invocations() {
    MAC_CALLS.with(|c| c.set(0));
}

fn count_mac() {
    MAC_CALLS.with(|c| c.set(c.get() + 1));
}

/// AS-local secret `K_i`. Has no serialization and a redacted `Debug`.
#[derive(Clone)]
pub struct SecretKey {
    bytes: [u8; KEY_LEN],
    cipher: Aes128,
}

impl SecretKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        SecretKey {
            bytes,
            cipher: Aes128::new(&GenericArray::from(bytes)),
        }
    }

    pub fn random<R: rand::RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; KEY_LEN];
        rng.fill_bytes(&mut bytes);
        Self::from_bytes(bytes)
    }

    pub fn expose(&self) -> &[u8; KEY_LEN] {
        &self.bytes
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

impl PartialEq for SecretKey {
    fn eq(&self, other: &Self) -> bool {
        self.bytes == other.bytes
    }
}

impl Eq for SecretKey {}

macro_rules! key_newtype {
    ($(#[$m:meta])* $name:ident, $len:expr) => {
        $(#[$m])*
        #[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!(stringify!($name), "("))?;
                for b in &self.0 {
                    write!(f, "{b:02x}")?;
                }
                write!(f, ")")
            }
        }
    };
}

key_newtype!(
    /// Derived key `K_{i→S}` shared between provider AS `i` and source AS `S`.
    DrKey,
    KEY_LEN
);
key_newtype!(
    /// Per-(source, interface pair, direction) authenticator α.
    Authenticator,
    BLOCK_LEN
);
key_newtype!(
    /// Truncated per-packet MAC (RVF or BVF).
    ValidationField,
    VALIDATION_FIELD_LEN
);
key_newtype!(RequestTag, BLOCK_LEN);

fn aes_block(cipher: &Aes128, block: [u8; BLOCK_LEN]) -> [u8; BLOCK_LEN] {
    let mut b = GenericArray::from(block);
    cipher.encrypt_block(&mut b);
    b.into()
}

/// AES-128 CBC-MAC over `input`, zero-padded to a multiple of the block size.
/// Callers only pass fixed-width inputs.
fn cbc_mac(cipher: &Aes128, input: &[u8]) -> [u8; BLOCK_LEN] {
    count_mac();
    let mut state = [0u8; BLOCK_LEN];
    for chunk in input.chunks(BLOCK_LEN) {
        for (s, b) in state.iter_mut().zip(chunk) {
            *s ^= b;
        }
        state = aes_block(cipher, state);
    }
    if input.is_empty() {
        state = aes_block(cipher, state);
    }
    state
}

pub fn derive_drkey(secret: &SecretKey, remote: AsId) -> DrKey {
    let mut block = [0u8; BLOCK_LEN];
    block[8..].copy_from_slice(&remote.0.to_be_bytes());
    DrKey(aes_block(&secret.cipher, block))
}

/// Forward authenticator for traffic entering at `ingress` and leaving at
/// `egress`. The backward authenticator is the same call with the
/// interfaces swapped.
pub fn compute_authenticator(
    secret: &SecretKey,
    src: AsId,
    ingress: IfId,
    egress: IfId,
) -> Authenticator {
    let mut input = [0u8; 12];
    input[..8].copy_from_slice(&src.0.to_be_bytes());
    input[8..10].copy_from_slice(&ingress.0.to_be_bytes());
    input[10..].copy_from_slice(&egress.0.to_be_bytes());
    Authenticator(cbc_mac(&secret.cipher, &input))
}

/// Untruncated per-packet MAC φ keyed by the authenticator.
pub fn compute_packet_mac(auth: &Authenticator, ts: Timestamp, len: u16) -> [u8; BLOCK_LEN] {
    let cipher = Aes128::new(&GenericArray::from(auth.0));
    let mut input = [0u8; 10];
    input[..8].copy_from_slice(&ts.0.to_be_bytes());
    input[8..].copy_from_slice(&len.to_be_bytes());
    cbc_mac(&cipher, &input)
}

/// RVF (with `len` = packet length) or BVF (with `len` = lenB).
pub fn compute_validation_field(auth: &Authenticator, ts: Timestamp, len: u16) -> ValidationField {
    let full = compute_packet_mac(auth, ts, len);
    let mut out = [0u8; VALIDATION_FIELD_LEN];
    out.copy_from_slice(&full[..VALIDATION_FIELD_LEN]);
    ValidationField(out)
}

/// Bandwidth-demand fields of a demand-aware setup request.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Demand {
    pub requested: Bandwidth,
    pub minimum: Bandwidth,
}

/// Per-hop authentication tag of a setup request, keyed by `K_{i→S}`.
pub fn compute_request_tag(
    key: &DrKey,
    ts_req: Timestamp,
    forward: bool,
    backward: bool,
    demand: Option<Demand>,
) -> RequestTag {
    let cipher = Aes128::new(&GenericArray::from(key.0));
    let mut input = [0u8; 26];
    input[..8].copy_from_slice(&ts_req.0.to_be_bytes());
    input[8] = forward as u8;
    input[9] = backward as u8;
    let len = match demand {
        Some(d) => {
            input[10..18].copy_from_slice(&d.requested.0.to_be_bytes());
            input[18..26].copy_from_slice(&d.minimum.0.to_be_bytes());
            26
        }
        None => 10,
    };
    RequestTag(cbc_mac(&cipher, &input[..len]))
}

/// Grant authenticator sealed for transport back to the source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SealedGrant {
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: [u8; BLOCK_LEN],
    pub tag: [u8; TAG_LEN],
}

fn aead_cipher(key: &DrKey) -> ChaCha20Poly1305 {
    // ChaCha20 wants 256 bits; expand the 128-bit DRKey with two labelled AES blocks.
    let aes = Aes128::new(&GenericArray::from(key.0));
    let mut label = [0u8; BLOCK_LEN];
    label[..15].copy_from_slice(b"helia-aead-key-");
    let mut full = [0u8; 32];
    label[15] = 1;
    full[..16].copy_from_slice(&aes_block(&aes, label));
    label[15] = 2;
    full[16..].copy_from_slice(&aes_block(&aes, label));
    ChaCha20Poly1305::new(Key::from_slice(&full))
}

fn grant_ad(bw: Bandwidth, ts_exp: Timestamp) -> [u8; 16] {
    let mut ad = [0u8; 16];
    ad[..8].copy_from_slice(&bw.0.to_be_bytes());
    ad[8..].copy_from_slice(&ts_exp.0.to_be_bytes());
    ad
}

/// Encrypts α with `(bw, ts_exp)` as associated data.
pub fn seal_grant(
    key: &DrKey,
    auth: &Authenticator,
    bw: Bandwidth,
    ts_exp: Timestamp,
    nonce: [u8; NONCE_LEN],
) -> SealedGrant {
    let mut buf = auth.0;
    let tag = aead_cipher(key)
        .encrypt_in_place_detached(Nonce::from_slice(&nonce), &grant_ad(bw, ts_exp), &mut buf)
        .expect("16-byte plaintext is within ChaCha20-Poly1305 limits");
    SealedGrant {
        nonce,
        ciphertext: buf,
        tag: tag.into(),
    }
}

pub fn unseal_grant(
    key: &DrKey,
    sealed: &SealedGrant,
    bw: Bandwidth,
    ts_exp: Timestamp,
) -> Result<Authenticator, CryptoError> {
    let mut buf = sealed.ciphertext;
    aead_cipher(key)
        .decrypt_in_place_detached(
            Nonce::from_slice(&sealed.nonce),
            &grant_ad(bw, ts_exp),
            &mut buf,
            Tag::from_slice(&sealed.tag),
        )
        .map_err(|_| CryptoError::AuthFailure)?;
    Ok(Authenticator(buf))
}

/// Constant-time comparison for short MAC values.
pub fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}
