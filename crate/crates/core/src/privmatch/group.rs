//! The commutative cipher: exponentiation in the order-`q` subgroup of
//! quadratic residues modulo a safe prime `p = 2q + 1`.
//!
//! For keys `a` and `b`, `(x^a)^b = (x^b)^a = x^(ab) mod p`, so two parties can
//! layer their encryptions in either order and compare the results.

use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_prime::nt_funcs::is_prime;
use num_traits::{One, ToPrimitive, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ProtocolError;

/// Smallest modulus accepted without the explicit toy flag.
pub const MIN_BITS: u64 = 256;
pub const MAX_BITS: u64 = 4096;

/// Candidate windows tried by [`derive_group`] before giving up.
const MAX_WINDOWS: usize = 10_000;
const WINDOW: usize = 4_096;

const HASH_DOMAIN: &[u8] = b"privlink/hash-to-group/v1";

#[derive(Clone, PartialEq, Eq)]
pub struct DomainParams {
    p: BigUint,
    q: BigUint,
    bits: u64,
}

impl fmt::Debug for DomainParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DomainParams {{ bits: {}, p: {:x} }}", self.bits, self.p)
    }
}

impl DomainParams {
    /// Validates an explicitly supplied safe prime. Moduli below
    /// [`MIN_BITS`] are refused unless `allow_toy` is set.
    pub fn new(p: BigUint, q: BigUint, allow_toy: bool) -> Result<Self, ProtocolError> {
        let bits = p.bits();
        if !allow_toy && bits < MIN_BITS {
            return Err(ProtocolError::Params(format!(
                "{bits}-bit modulus is below the {MIN_BITS}-bit minimum"
            )));
        }
        if p != &q * 2u32 + 1u32 {
            return Err(ProtocolError::Params("p != 2q + 1".into()));
        }
        if q < BigUint::from(3u32)
            || !is_prime(&q, None).probably()
            || !is_prime(&p, None).probably()
        {
            return Err(ProtocolError::Params("p and q must both be prime".into()));
        }
        Ok(DomainParams { p, q, bits })
    }

    /// `p = 23, q = 11`, for worked examples and tests only.
    pub fn toy() -> Self {
        DomainParams::new(23u32.into(), 11u32.into(), true).expect("23 is a safe prime")
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn is_member(&self, x: &BigUint) -> bool {
        !x.is_zero() && x < &self.p && x.modpow(&self.q, &self.p).is_one()
    }

    /// `p` and `q` as a small key-value document.
    pub fn to_toml(&self) -> String {
        toml::to_string(&ParamsFile {
            bits: self.bits,
            p: format!("{:x}", self.p),
            q: format!("{:x}", self.q),
        })
        .expect("plain struct serializes")
    }

    pub fn from_toml(text: &str, allow_toy: bool) -> Result<Self, ProtocolError> {
        let file: ParamsFile =
            toml::from_str(text).map_err(|e| ProtocolError::Params(e.to_string()))?;
        let hex = |s: &str| {
            BigUint::parse_bytes(s.as_bytes(), 16)
                .ok_or_else(|| ProtocolError::Params(format!("`{s}` is not hex")))
        };
        let params = DomainParams::new(hex(&file.p)?, hex(&file.q)?, allow_toy)?;
        if params.bits != file.bits {
            return Err(ProtocolError::Params(format!(
                "declared {} bits, modulus has {}",
                file.bits, params.bits
            )));
        }
        Ok(params)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    bits: u64,
    p: String,
    q: String,
}

fn seeded_rng(seed: &[u8]) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(Sha256::digest(seed).into())
}

fn random_below_bits(rng: &mut impl RngCore, bits: u64) -> BigUint {
    let nbytes = bits.div_ceil(8) as usize;
    let mut buf = vec![0u8; nbytes];
    rng.fill_bytes(&mut buf);
    let excess = nbytes as u64 * 8 - bits;
    buf[0] &= 0xffu8 >> excess;
    BigUint::from_bytes_be(&buf)
}

const SMALL_PRIMES_LIMIT: u32 = 2_000;

fn small_primes() -> Vec<u32> {
    (3..SMALL_PRIMES_LIMIT)
        .step_by(2)
        .filter(|&n| {
            (3..)
                .step_by(2)
                .take_while(|d| d * d <= n)
                .all(|d| n % d != 0)
        })
        .collect()
}

/// Deterministically derives a `bits`-bit safe prime from `seed`.
///
/// Candidates `q` of `bits - 1` bits are scanned upward from a seeded random
/// start; a small-prime sieve on both `q` and `2q + 1` discards most of them
/// before the probabilistic primality tests run.
pub fn derive_group(bits: u64, seed: &[u8]) -> Result<DomainParams, ProtocolError> {
    if !(MIN_BITS..=MAX_BITS).contains(&bits) {
        return Err(ProtocolError::Params(format!(
            "modulus size must be within {MIN_BITS}..={MAX_BITS} bits, got {bits}"
        )));
    }
    let primes = small_primes();
    let mut rng = seeded_rng(seed);
    for _ in 0..MAX_WINDOWS {
        let mut q = random_below_bits(&mut rng, bits - 1);
        q.set_bit(bits - 2, true);
        q.set_bit(0, true);
        let mut residues: Vec<u32> = primes
            .iter()
            .map(|&s| (&q % s).to_u32().expect("residue fits"))
            .collect();
        for _ in 0..WINDOW {
            let survives = primes
                .iter()
                .zip(&residues)
                .all(|(&s, &r)| r != 0 && r != (s - 1) / 2);
            if survives && is_prime(&q, None).probably() {
                let p = &q * 2u32 + 1u32;
                if p.bits() == bits && is_prime(&p, None).probably() {
                    return Ok(DomainParams { p, q, bits });
                }
            }
            q += 2u32;
            for (r, &s) in residues.iter_mut().zip(&primes) {
                *r = (*r + 2) % s;
            }
            if q.bits() != bits - 1 {
                break;
            }
        }
    }
    Err(ProtocolError::Capacity(format!(
        "no {bits}-bit safe prime found within the search budget"
    )))
}

/// An element of the order-`q` subgroup.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement(BigUint);

impl GroupElement {
    pub fn new(value: BigUint, params: &DomainParams) -> Result<Self, ProtocolError> {
        if params.is_member(&value) {
            Ok(GroupElement(value))
        } else {
            Err(ProtocolError::Malformed(
                "value is not in the order-q subgroup".into(),
            ))
        }
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn into_value(self) -> BigUint {
        self.0
    }
}

/// Maps arbitrary bytes into the subgroup: expand with SHA-256 to at least
/// 128 bits more than the modulus, reduce mod `p`, square. A zero residue is
/// retried under the next counter value.
pub fn hash_to_group(item: &[u8], params: &DomainParams) -> GroupElement {
    let blocks = (params.bits + 128).div_ceil(256) as u32;
    for counter in 0u32.. {
        let mut wide = Vec::with_capacity(blocks as usize * 32);
        for block in 0..blocks {
            let mut h = Sha256::new();
            h.update(HASH_DOMAIN);
            h.update(counter.to_be_bytes());
            h.update(block.to_be_bytes());
            h.update(item);
            wide.extend_from_slice(&h.finalize());
        }
        let x = BigUint::from_bytes_be(&wide) % &params.p;
        if !x.is_zero() {
            return GroupElement(x.modpow(&2u32.into(), &params.p));
        }
    }
    unreachable!("counter space exhausted")
}

/// A party's secret exponent, in `[2, q - 1]`. Since `q` is prime every such
/// exponent is invertible mod `q`.
#[derive(Clone, PartialEq, Eq)]
pub struct PartyKey {
    exponent: BigUint,
}

impl fmt::Debug for PartyKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PartyKey(..)")
    }
}

impl PartyKey {
    pub fn new(exponent: BigUint, params: &DomainParams) -> Result<Self, ProtocolError> {
        let two = BigUint::from(2u32);
        if exponent < two || exponent >= params.q {
            return Err(ProtocolError::Params(
                "key exponent must lie in [2, q - 1]".into(),
            ));
        }
        debug_assert!(exponent.gcd(&params.q).is_one());
        Ok(PartyKey { exponent })
    }

    /// Uniform over `[2, q - 1]`.
    pub fn random(params: &DomainParams, rng: &mut impl RngCore) -> Self {
        let span = &params.q - 2u32;
        let bits = span.bits();
        loop {
            let x = random_below_bits(rng, bits);
            if x < span {
                return PartyKey { exponent: x + 2u32 };
            }
        }
    }

    pub fn exponent(&self) -> &BigUint {
        &self.exponent
    }
}

/// `e^key mod p`.
pub fn commute_encrypt(key: &PartyKey, e: &GroupElement, params: &DomainParams) -> GroupElement {
    GroupElement(e.0.modpow(&key.exponent, &params.p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn el(v: u32, params: &DomainParams) -> GroupElement {
        GroupElement::new(v.into(), params).unwrap()
    }

    fn key(v: u32, params: &DomainParams) -> PartyKey {
        PartyKey::new(v.into(), params).unwrap()
    }

    #[test]
    fn toy_worked_example() {
        let p = DomainParams::toy();
        let four = el(4, &p);
        let a = key(3, &p);
        let b = key(7, &p);
        let ab = commute_encrypt(&a, &four, &p);
        assert_eq!(ab, el(18, &p));
        let ab = commute_encrypt(&b, &ab, &p);
        let ba = commute_encrypt(&b, &four, &p);
        assert_eq!(ba, el(8, &p));
        let ba = commute_encrypt(&a, &ba, &p);
        assert_eq!(ab, el(6, &p));
        assert_eq!(ab, ba);
    }

    #[test]
    fn smallest_exponent_squares() {
        let p = DomainParams::toy();
        assert!(PartyKey::new(1u32.into(), &p).is_err());
        assert!(PartyKey::new(11u32.into(), &p).is_err());
        assert_eq!(commute_encrypt(&key(2, &p), &el(4, &p), &p), el(16, &p));
    }

    #[test]
    fn toy_params_need_the_flag() {
        assert!(DomainParams::new(23u32.into(), 11u32.into(), false).is_err());
        assert!(DomainParams::new(23u32.into(), 10u32.into(), true).is_err());
        // 2 * 13 + 1 = 27 is not prime.
        assert!(DomainParams::new(27u32.into(), 13u32.into(), true).is_err());
    }

    #[test]
    fn derive_rejects_small_and_is_deterministic() {
        assert!(derive_group(8, b"s0").is_err());
        let a = derive_group(256, b"s0").unwrap();
        let b = derive_group(256, b"s0").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.bits(), 256);
        assert_eq!(a.p(), &(a.q() * 2u32 + 1u32));
        let c = derive_group(256, b"s1").unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn hashed_items_are_members() {
        for params in [DomainParams::toy(), derive_group(256, b"h").unwrap()] {
            for i in 0..200u32 {
                let e = hash_to_group(&i.to_be_bytes(), &params);
                assert!(params.is_member(e.value()));
                assert_eq!(e, hash_to_group(&i.to_be_bytes(), &params));
            }
        }
    }

    #[test]
    fn params_file_round_trip() {
        let p = derive_group(256, b"file").unwrap();
        assert_eq!(DomainParams::from_toml(&p.to_toml(), false).unwrap(), p);
        let toy = DomainParams::toy().to_toml();
        assert!(DomainParams::from_toml(&toy, false).is_err());
        assert!(DomainParams::from_toml(&toy, true).is_ok());
    }

    #[test]
    fn random_keys_in_range() {
        let p = DomainParams::toy();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..500 {
            let k = PartyKey::random(&p, &mut rng);
            let e = k.exponent().to_u32().unwrap();
            assert!((2..=10).contains(&e));
            seen.insert(e);
        }
        assert_eq!(seen.len(), 9);
    }
}
