//! Arithmetic in the scalar field of BN254.
//!
//! p = 21888242871839275222246405745257275088548364400416034343698204186575808495617
//!
//! Elements are stored in Montgomery form (`value * 2^256 mod p`) as four
//! little-endian 64-bit limbs. Everything observable (equality, ordering,
//! byte and hex encodings) goes through the canonical reduced integer.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// The prime modulus, little-endian limbs.
pub const MODULUS: [u64; 4] = [
    0x43e1f593f0000001,
    0x2833e84879b97091,
    0xb85045b68181585d,
    0x30644e72e131a029,
];

/// Decimal form of the modulus.
pub const MODULUS_DECIMAL: &str =
    "21888242871839275222246405745257275088548364400416034343698204186575808495617";

/// 2^256 mod p.
const R: [u64; 4] = [
    0xac96341c4ffffffb,
    0x36fc76959f60cd29,
    0x666ea36f7879462e,
    0x0e0a77c19a07df2f,
];

/// 2^512 mod p.
const R2: [u64; 4] = [
    0x1bb8e645ae216da7,
    0x53fe3ab1e35c59e3,
    0x8c49833d53bb8085,
    0x0216d0b17f4e44a5,
];

/// -p^{-1} mod 2^64.
const INV: u64 = 0xc2e1f593efffffff;

const P_MINUS_2: [u64; 4] = [
    0x43e1f593efffffff,
    0x2833e84879b97091,
    0xb85045b68181585d,
    0x30644e72e131a029,
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("encoded integer is not below the field modulus")]
    OutOfRange,
    #[error("expected 32 bytes, got {0}")]
    BadLength(usize),
    #[error("invalid hex field element: {0}")]
    BadHex(String),
    #[error("inverse of zero")]
    DivisionByZero,
    #[error("exponent must be at least 1")]
    ZeroExponent,
}

#[inline(always)]
const fn adc(a: u64, b: u64, carry: u64) -> (u64, u64) {
    let t = a as u128 + b as u128 + carry as u128;
    (t as u64, (t >> 64) as u64)
}

#[inline(always)]
const fn sbb(a: u64, b: u64, borrow: u64) -> (u64, u64) {
    let t = (a as u128).wrapping_sub(b as u128 + borrow as u128);
    (t as u64, (t >> 127) as u64)
}

#[inline(always)]
const fn mac(acc: u64, a: u64, b: u64, carry: u64) -> (u64, u64) {
    let t = acc as u128 + (a as u128) * (b as u128) + carry as u128;
    (t as u64, (t >> 64) as u64)
}

#[inline(always)]
fn geq_modulus(x: &[u64; 4]) -> bool {
    for i in (0..4).rev() {
        if x[i] != MODULUS[i] {
            return x[i] > MODULUS[i];
        }
    }
    true
}

#[inline(always)]
fn sub_modulus(x: [u64; 4]) -> [u64; 4] {
    let (r0, b) = sbb(x[0], MODULUS[0], 0);
    let (r1, b) = sbb(x[1], MODULUS[1], b);
    let (r2, b) = sbb(x[2], MODULUS[2], b);
    let (r3, _) = sbb(x[3], MODULUS[3], b);
    [r0, r1, r2, r3]
}

/// Montgomery product `a * b * 2^-256 mod p` (CIOS). Inputs must be reduced.
#[inline]
fn mont_mul(a: &[u64; 4], b: &[u64; 4]) -> [u64; 4] {
    let mut t = [0u64; 6];
    for &bi in b.iter() {
        let mut carry = 0;
        for j in 0..4 {
            let (lo, hi) = mac(t[j], a[j], bi, carry);
            t[j] = lo;
            carry = hi;
        }
        let (lo, hi) = adc(t[4], carry, 0);
        t[4] = lo;
        t[5] = hi;

        let m = t[0].wrapping_mul(INV);
        let (_, mut carry) = mac(t[0], m, MODULUS[0], 0);
        for j in 1..4 {
            let (lo, hi) = mac(t[j], m, MODULUS[j], carry);
            t[j - 1] = lo;
            carry = hi;
        }
        let (lo, hi) = adc(t[4], carry, 0);
        t[3] = lo;
        t[4] = t[5] + hi;
    }
    let r = [t[0], t[1], t[2], t[3]];
    if t[4] != 0 || geq_modulus(&r) {
        sub_modulus(r)
    } else {
        r
    }
}

/// An element of the BN254 scalar field, always fully reduced.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FieldElement {
    mont: [u64; 4],
}

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement { mont: [0; 4] };
    pub const ONE: FieldElement = FieldElement { mont: R };

    /// Builds an element from canonical little-endian limbs.
    pub fn from_canonical_limbs(limbs: [u64; 4]) -> Result<Self, FieldError> {
        if geq_modulus(&limbs) {
            return Err(FieldError::OutOfRange);
        }
        Ok(FieldElement { mont: mont_mul(&limbs, &R2) })
    }

    /// Canonical little-endian limbs of the reduced value.
    pub fn to_canonical_limbs(&self) -> [u64; 4] {
        mont_mul(&self.mont, &[1, 0, 0, 0])
    }

    pub fn from_u64(v: u64) -> Self {
        FieldElement { mont: mont_mul(&[v, 0, 0, 0], &R2) }
    }

    /// `v mod p` for a signed integer.
    pub fn from_i64(v: i64) -> Self {
        if v < 0 {
            -Self::from_u64(v.unsigned_abs())
        } else {
            Self::from_u64(v as u64)
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mont == [0; 4]
    }

    /// Strict 32-byte big-endian decoding; values `>= p` are rejected.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FieldError> {
        if bytes.len() != 32 {
            return Err(FieldError::BadLength(bytes.len()));
        }
        let mut limbs = [0u64; 4];
        for (i, chunk) in bytes.chunks_exact(8).enumerate() {
            limbs[3 - i] = u64::from_be_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        Self::from_canonical_limbs(limbs)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        let limbs = self.to_canonical_limbs();
        let mut out = [0u8; 32];
        for i in 0..4 {
            out[i * 8..(i + 1) * 8].copy_from_slice(&limbs[3 - i].to_be_bytes());
        }
        out
    }

    /// Parses big-endian hex, optionally `0x`-prefixed. Short strings are
    /// left-padded with zeros; more than 64 digits is an error.
    pub fn from_hex(s: &str) -> Result<Self, FieldError> {
        let digits = s.trim();
        let digits = digits
            .strip_prefix("0x")
            .or_else(|| digits.strip_prefix("0X"))
            .unwrap_or(digits);
        if digits.is_empty() || digits.len() > 64 {
            return Err(FieldError::BadHex(s.to_string()));
        }
        let padded = format!("{digits:0>64}");
        let bytes = hex::decode(&padded).map_err(|_| FieldError::BadHex(s.to_string()))?;
        Self::from_bytes(&bytes)
    }

    /// `0x`-prefixed, 64 hex digits.
    pub fn to_hex(&self) -> String {
        format!("0x{}", hex::encode(self.to_bytes()))
    }

    /// Uniform sample by rejection on 254-bit candidates.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let mut limbs: [u64; 4] = rng.gen();
            limbs[3] &= (1u64 << 62) - 1;
            if let Ok(x) = Self::from_canonical_limbs(limbs) {
                return x;
            }
        }
    }

    pub fn square(&self) -> Self {
        *self * *self
    }

    pub fn double(&self) -> Self {
        *self + *self
    }

    /// `self^e` for `e >= 1`. Exponents 3, 5 and 7 use fixed addition chains
    /// (2, 3 and 4 multiplications); anything else falls back to
    /// square-and-multiply.
    pub fn pow(&self, e: u64) -> Result<Self, FieldError> {
        let x = *self;
        match e {
            0 => Err(FieldError::ZeroExponent),
            1 => Ok(x),
            3 => Ok(x.square() * x),
            5 => {
                let x2 = x.square();
                let x4 = x2.square();
                Ok(x4 * x)
            }
            7 => {
                let x2 = x.square();
                let x4 = x2.square();
                let x6 = x4 * x2;
                Ok(x6 * x)
            }
            _ => Ok(x.pow_limbs(&[e, 0, 0, 0])),
        }
    }

    fn pow_limbs(&self, exp: &[u64; 4]) -> Self {
        let mut acc = Self::ONE;
        for limb in exp.iter().rev() {
            for bit in (0..64).rev() {
                acc = acc.square();
                if (limb >> bit) & 1 == 1 {
                    acc *= *self;
                }
            }
        }
        acc
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(&self) -> Result<Self, FieldError> {
        if self.is_zero() {
            return Err(FieldError::DivisionByZero);
        }
        Ok(self.pow_limbs(&P_MINUS_2))
    }

    /// Decimal rendering of the canonical value.
    pub fn to_decimal(&self) -> String {
        let mut limbs = self.to_canonical_limbs();
        if limbs == [0; 4] {
            return "0".to_string();
        }
        let mut digits = Vec::new();
        while limbs != [0; 4] {
            let mut rem: u128 = 0;
            for limb in limbs.iter_mut().rev() {
                let cur = (rem << 64) | *limb as u128;
                *limb = (cur / 10) as u64;
                rem = cur % 10;
            }
            digits.push(b'0' + rem as u8);
        }
        digits.reverse();
        String::from_utf8(digits).expect("ascii digits")
    }
}

/// Number of field multiplications in the addition chain `pow` uses for `e`.
/// These counts double as the R1CS cost of one S-box.
pub fn chain_multiplications(e: u64) -> Option<usize> {
    match e {
        0 => None,
        1 => Some(0),
        3 => Some(2),
        5 => Some(3),
        7 => Some(4),
        _ => {
            let bits = 64 - e.leading_zeros() as usize;
            Some(bits - 1 + e.count_ones() as usize - 1)
        }
    }
}

/// `(p - 1) mod m` for a small modulus `m`.
fn modulus_minus_one_rem(m: u64) -> u64 {
    let mut rem: u128 = 0;
    for limb in MODULUS.iter().rev() {
        rem = ((rem << 64) | *limb as u128) % m as u128;
    }
    ((rem + m as u128 - 1) % m as u128) as u64
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// True when `x -> x^d` is a bijection on the field, i.e. `gcd(d, p - 1) = 1`.
pub fn is_permutation_exponent(d: u64) -> bool {
    d >= 1 && gcd(d, modulus_minus_one_rem(d)) == 1
}

impl Add for FieldElement {
    type Output = FieldElement;
    #[inline]
    fn add(self, rhs: FieldElement) -> FieldElement {
        let a = &self.mont;
        let b = &rhs.mont;
        let (r0, c) = adc(a[0], b[0], 0);
        let (r1, c) = adc(a[1], b[1], c);
        let (r2, c) = adc(a[2], b[2], c);
        let (r3, _) = adc(a[3], b[3], c);
        let r = [r0, r1, r2, r3];
        // p < 2^254, so the sum never overflows 256 bits.
        let mont = if geq_modulus(&r) { sub_modulus(r) } else { r };
        FieldElement { mont }
    }
}

impl Sub for FieldElement {
    type Output = FieldElement;
    #[inline]
    fn sub(self, rhs: FieldElement) -> FieldElement {
        let a = &self.mont;
        let b = &rhs.mont;
        let (r0, bw) = sbb(a[0], b[0], 0);
        let (r1, bw) = sbb(a[1], b[1], bw);
        let (r2, bw) = sbb(a[2], b[2], bw);
        let (r3, bw) = sbb(a[3], b[3], bw);
        let mut r = [r0, r1, r2, r3];
        if bw != 0 {
            let (s0, c) = adc(r[0], MODULUS[0], 0);
            let (s1, c) = adc(r[1], MODULUS[1], c);
            let (s2, c) = adc(r[2], MODULUS[2], c);
            let (s3, _) = adc(r[3], MODULUS[3], c);
            r = [s0, s1, s2, s3];
        }
        FieldElement { mont: r }
    }
}

impl Neg for FieldElement {
    type Output = FieldElement;
    fn neg(self) -> FieldElement {
        FieldElement::ZERO - self
    }
}

impl Mul for FieldElement {
    type Output = FieldElement;
    #[inline]
    fn mul(self, rhs: FieldElement) -> FieldElement {
        FieldElement { mont: mont_mul(&self.mont, &rhs.mont) }
    }
}

impl AddAssign for FieldElement {
    fn add_assign(&mut self, rhs: FieldElement) {
        *self = *self + rhs;
    }
}

impl SubAssign for FieldElement {
    fn sub_assign(&mut self, rhs: FieldElement) {
        *self = *self - rhs;
    }
}

impl MulAssign for FieldElement {
    fn mul_assign(&mut self, rhs: FieldElement) {
        *self = *self * rhs;
    }
}

impl std::iter::Sum for FieldElement {
    fn sum<I: Iterator<Item = FieldElement>>(iter: I) -> Self {
        iter.fold(FieldElement::ZERO, |a, b| a + b)
    }
}

impl From<u64> for FieldElement {
    fn from(v: u64) -> Self {
        FieldElement::from_u64(v)
    }
}

impl PartialOrd for FieldElement {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FieldElement {
    fn cmp(&self, other: &Self) -> Ordering {
        let a = self.to_canonical_limbs();
        let b = other.to_canonical_limbs();
        a.iter().rev().cmp(b.iter().rev())
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fr({})", self.to_hex())
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for FieldElement {
    type Err = FieldError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FieldElement::from_hex(s)
    }
}

impl Serialize for FieldElement {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for FieldElement {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        FieldElement::from_hex(&s).map_err(serde::de::Error::custom)
    }
}
