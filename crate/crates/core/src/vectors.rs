//! Fixed crypto test vectors, printed by `helia vectors`.

use std::fmt::Write;

use crate::crypto::{
    compute_authenticator, compute_request_tag, compute_validation_field, derive_drkey,
    seal_grant, Authenticator, Demand, DrKey, SecretKey,
};
use crate::types::{AsId, Bandwidth, IfId, Timestamp};

const KEY: [u8; 16] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15];

/// Renders the vectors in the `kind inputs... expected` text format.
pub fn render_vectors() -> String {
    let k = hex::encode(KEY);
    let secret = SecretKey::from_bytes(KEY);
    let mut out = String::from(
        "# kind inputs... expected (hex); generated by an independent AES/ChaCha20-Poly1305 implementation\n",
    );
    for id in [42u64, 0, u64::MAX] {
        let d = derive_drkey(&secret, AsId(id));
        writeln!(out, "drkey {k} {id:016x} {}", hex::encode(d.0)).unwrap();
    }
    for (s, i, e) in [(7u64, 1u16, 2u16), (7, 2, 1), (0xFFFF_0000_0000_0001, 0, 65535)] {
        let a = compute_authenticator(&secret, AsId(s), IfId(i), IfId(e));
        writeln!(out, "auth {k} {s:016x} {i:04x} {e:04x} {}", hex::encode(a.0)).unwrap();
    }
    let auth = Authenticator(KEY);
    let ts = 1_000_000_000_000_000_000u64;
    for (t, len) in [(ts, 1040u16), (ts, 1041), (0, 0)] {
        let v = compute_validation_field(&auth, Timestamp(t), len);
        writeln!(out, "vf {k} {t:016x} {len:04x} {}", hex::encode(v.0)).unwrap();
    }
    let dk = DrKey(KEY);
    for (r, b) in [(true, false), (true, true)] {
        let tag = compute_request_tag(&dk, Timestamp(ts), r, b, None);
        writeln!(out, "reqtag {k} {ts:016x} {:02x} {:02x} {}", r as u8, b as u8, hex::encode(tag.0)).unwrap();
    }
    let demand = Demand {
        requested: Bandwidth(10_000_000),
        minimum: Bandwidth(1_000_000),
    };
    let tag = compute_request_tag(&dk, Timestamp(ts), true, false, Some(demand));
    writeln!(
        out,
        "reqtag2 {k} {ts:016x} 01 00 {:016x} {:016x} {}",
        demand.requested.0,
        demand.minimum.0,
        hex::encode(tag.0)
    )
    .unwrap();
    let mut alpha = [0u8; 16];
    for (i, b) in alpha.iter_mut().enumerate() {
        *b = 16 + i as u8;
    }
    let nonce: [u8; 12] = std::array::from_fn(|i| i as u8);
    let bw = Bandwidth::gbps(25);
    let exp = Timestamp(ts + 10_000_000_000);
    let sealed = seal_grant(&dk, &Authenticator(alpha), bw, exp, nonce);
    writeln!(
        out,
        "seal {k} {} {:016x} {:016x} {} {}{}",
        hex::encode(alpha),
        bw.0,
        exp.0,
        hex::encode(nonce),
        hex::encode(sealed.ciphertext),
        hex::encode(sealed.tag)
    )
    .unwrap();
    out
}
