//! Certified digit extraction and shifted-orbit reconstruction.
//!
//! A sampled point is a lazily refinable enclosure: the same underlying
//! real can be enclosed at any working precision, and recomputing at higher
//! precision always yields a nested enclosure.  Digits are extracted by
//! stepping the enclosure through the map with exact arithmetic; when the
//! enclosure straddles a coding boundary the working precision is doubled
//! and extraction restarts, up to a hard cap.
//!
//! Orbits are then digit shifts: T^n x is reconstructed from digits n..L of
//! x, never by re-applying the map n times, so the only error is the tail
//! bound of the truncated expansion (beta^-(L-n), the continued-fraction
//! convergent bound, or 3^-(L-n)).

use crate::error::OrbitError;
use crate::scalar::Exact;
use crate::systems::{SystemDescriptor, SystemKind};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Value known to lie in [center - radius, center + radius].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnclosedPoint {
    pub center: Exact,
    pub radius: Exact,
}

impl EnclosedPoint {
    pub fn exact(v: Exact) -> Self {
        EnclosedPoint { center: v, radius: Exact::zero() }
    }

    pub fn from_bounds(lo: Exact, hi: Exact) -> Self {
        debug_assert!(lo <= hi);
        let two = Exact::from_int(2);
        EnclosedPoint { center: &(&lo + &hi) / &two, radius: &(&hi - &lo) / &two }
    }

    pub fn lo(&self) -> Exact {
        &self.center - &self.radius
    }

    pub fn hi(&self) -> Exact {
        &self.center + &self.radius
    }

    pub fn contains(&self, v: &Exact) -> bool {
        &self.lo() <= v && v <= &self.hi()
    }
}

/// A sampled (or explicitly given) point that can be enclosed at any
/// requested precision.  Stream variants regenerate their random bits
/// deterministically, so refining never changes the underlying point.
#[derive(Debug, Clone)]
pub enum SamplePoint {
    /// A fixed enclosure; refinement requests return it unchanged.
    Fixed { lo: Exact, hi: Exact },
    /// Uniform dyadic bit stream: value in [0,1).
    BitStream { master: u64, stream: u64, word_base: u128 },
    /// 2^(u/2^128) - 1 for a fixed 128-bit u (Gauss inverse CDF).
    PowTwo { u: u128 },
    /// Ternary digit stream over {0,2} (Cantor-set sampling).
    CantorStream { master: u64, stream: u64, word_base: u128 },
}

impl From<Exact> for SamplePoint {
    fn from(v: Exact) -> Self {
        SamplePoint::Fixed { lo: v.clone(), hi: v }
    }
}

pub(crate) fn stream_rng(master: u64, stream: u64, word_base: u128) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.set_word_pos(word_base);
    rng
}

impl SamplePoint {
    /// Encloses the point to roughly `bits` of precision.
    pub fn enclose(&self, bits: u32) -> (Exact, Exact) {
        match self {
            SamplePoint::Fixed { lo, hi } => (lo.clone(), hi.clone()),
            SamplePoint::BitStream { master, stream, word_base } => {
                let m = draw_mantissa(*master, *stream, *word_base, bits);
                let den = BigInt::one() << bits;
                let lo = BigRational::new(m.clone(), den.clone());
                let hi = BigRational::new(m + 1, den);
                (Exact::from_big(lo), Exact::from_big(hi))
            }
            SamplePoint::PowTwo { u } => {
                let (lo, hi) = pow2_frac_interval(*u, bits);
                (Exact::from_big(lo), Exact::from_big(hi))
            }
            SamplePoint::CantorStream { master, stream, word_base } => {
                let digits = 1 + (bits as f64 * 2f64.ln() / 3f64.ln()) as usize;
                let ds = cantor_digits(*master, *stream, *word_base, digits);
                let mut val = BigRational::from_integer(0.into());
                let three = BigRational::from_integer(3.into());
                for d in ds.iter().rev() {
                    val = (val + BigRational::from_integer((*d).into())) / &three;
                }
                let hi = &val + BigRational::new(1.into(), BigInt::from(3).pow(digits as u32));
                (Exact::from_big(val), Exact::from_big(hi))
            }
        }
    }

    pub fn center_f64(&self, bits: u32) -> f64 {
        let (lo, hi) = self.enclose(bits);
        (&(&lo + &hi) / &Exact::from_int(2)).to_f64()
    }
}

/// First `bits` bits of the stream as a big integer (big-endian packing, so
/// longer draws extend shorter ones).
fn draw_mantissa(master: u64, stream: u64, word_base: u128, bits: u32) -> BigInt {
    let words = bits.div_ceil(64);
    let mut rng = stream_rng(master, stream, word_base);
    let mut m = BigInt::from(0);
    for _ in 0..words {
        m = (m << 64) | BigInt::from(rng.next_u64());
    }
    m >> (words * 64 - bits)
}

pub(crate) fn cantor_digits(master: u64, stream: u64, word_base: u128, count: usize) -> Vec<u64> {
    let mut rng = stream_rng(master, stream, word_base);
    let mut out = Vec::with_capacity(count);
    let mut word = 0u64;
    for i in 0..count {
        if i % 64 == 0 {
            word = rng.next_u64();
        }
        out.push(if word & 1 == 1 { 2 } else { 0 });
        word >>= 1;
    }
    out
}

// ---------------------------------------------------------------------------
// 2^(u/2^128) by iterated interval square roots of 2.
//
// Writing u/2^128 = sum over set bits i of 2^-(i+1), the value factors as a
// product of 2^(2^-k) terms, each obtained by k successive square roots of 2.
// The table of square roots is computed once per working precision with
// directed rounding and shared across threads.
// ---------------------------------------------------------------------------

type SqrtTable = Arc<Vec<(BigInt, BigInt)>>;

fn sqrt_table(bits: u32) -> SqrtTable {
    static TABLES: OnceLock<Mutex<HashMap<u32, SqrtTable>>> = OnceLock::new();
    let tables = TABLES.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = tables.lock().expect("sqrt table lock");
    guard
        .entry(bits)
        .or_insert_with(|| {
            let one = BigInt::one() << bits;
            let mut lo: BigInt = &one * 2;
            let mut hi = lo.clone();
            let mut table = Vec::with_capacity(128);
            for _ in 0..128 {
                lo = (&lo << bits).sqrt();
                let mut h = (&hi << bits).sqrt();
                if &h * &h < (&hi << bits) {
                    h += 1;
                }
                hi = h;
                table.push((lo.clone(), hi.clone()));
            }
            Arc::new(table)
        })
        .clone()
}

/// Interval for 2^(u/2^128) - 1 at internal precision `bits + 16`.
fn pow2_frac_interval(u: u128, bits: u32) -> (BigRational, BigRational) {
    let pb = bits + 16;
    let table = sqrt_table(pb);
    let scale = BigInt::one() << pb;
    let mask = &scale - 1;
    let mut lo = scale.clone();
    let mut hi = scale.clone();
    for i in 0..128 {
        if u & (1u128 << (127 - i)) != 0 {
            let (slo, shi) = &table[i];
            lo = (lo * slo) >> pb;
            hi = (hi * shi + &mask) >> pb;
        }
    }
    let den = scale.clone();
    (BigRational::new(lo - &scale, den.clone()), BigRational::new(hi - &scale, den))
}

// ---------------------------------------------------------------------------
// Digit extraction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PrecisionOpts {
    /// Hard cap on working precision (bits).
    pub max_bits: u32,
    /// Extra digits kept beyond the largest shift, `None` for the
    /// per-system default that keeps reconstruction error below 1e-6.
    pub guard: Option<usize>,
    /// Resample budget per sample index before an estimator run fails.
    pub resample_cap: u32,
}

impl Default for PrecisionOpts {
    fn default() -> Self {
        PrecisionOpts { max_bits: 4096, guard: None, resample_cap: 16 }
    }
}

/// Guard digits sized so the reconstruction radius at the largest allowed
/// shift stays below 1e-6: ceil(log_base 10^6) with the worst-case
/// per-digit contraction as the base (golden-ratio squared for Gauss).
pub fn default_guard(sys: &SystemDescriptor) -> usize {
    let target = 1e6f64.ln();
    match sys.kind {
        SystemKind::Beta => {
            let b = sys.beta.as_ref().unwrap().to_f64();
            (target / b.ln()).ceil() as usize
        }
        SystemKind::Gauss => {
            let phi = (1.0 + 5f64.sqrt()) / 2.0;
            (target / (2.0 * phi.ln())).ceil() as usize
        }
        SystemKind::Cantor => (target / 3f64.ln()).ceil() as usize,
    }
}

fn initial_bits(sys: &SystemDescriptor, len: usize) -> u32 {
    match sys.kind {
        SystemKind::Beta => {
            let b = sys.beta.as_ref().unwrap().to_f64();
            (len as f64 * b.log2()).ceil() as u32 + 128
        }
        SystemKind::Gauss => len as u32 * 4 + 160,
        SystemKind::Cantor => (len as f64 * 3f64.log2()).ceil() as u32 + 64,
    }
}

/// Digit word of a point, with enough metadata to reconstruct shifted
/// orbit values with certified error bounds.
#[derive(Debug, Clone)]
pub struct DigitSequence {
    pub kind: SystemKind,
    pub beta: Option<Exact>,
    pub digits: Vec<u64>,
    /// Digits reserved at the end of the word: shifts beyond
    /// `len() - guard` are refused.
    pub guard: usize,
}

impl DigitSequence {
    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn max_shift(&self) -> usize {
        self.len().saturating_sub(self.guard)
    }

    /// Upper bound on |x - value(digits)|.
    pub fn tail_error(&self) -> Exact {
        tail_radius(self, 0)
    }
}

/// Tail bound for the word shifted by `n`: the reconstruction of T^n x from
/// digits n..L is within this radius of T^n x.
fn tail_radius(seq: &DigitSequence, n: usize) -> Exact {
    let rem = (seq.len() - n) as i32;
    match seq.kind {
        SystemKind::Beta => seq.beta.as_ref().unwrap().pow_i(-rem),
        SystemKind::Cantor => Exact::from_int(3).pow_i(-rem),
        SystemKind::Gauss => {
            // cylinder of the shifted word has diameter 1/(q(q + q')) <= 1/q^2
            let mut q_prev = BigInt::from(0);
            let mut q = BigInt::from(1);
            for &a in &seq.digits[n..] {
                let next = BigInt::from(a) * &q + &q_prev;
                q_prev = std::mem::replace(&mut q, next);
            }
            Exact::from_big(BigRational::new(BigInt::one(), &q * (&q + &q_prev)))
        }
    }
}

/// Extracts the first `len` digits of the point's expansion, doubling the
/// working precision on coding-boundary straddles up to `opts.max_bits`.
pub fn extract_digits(
    sys: &SystemDescriptor,
    point: &SamplePoint,
    len: usize,
    opts: &PrecisionOpts,
) -> Result<DigitSequence, OrbitError> {
    let guard = opts.guard.unwrap_or_else(|| default_guard(sys));
    // digit streams already are the expansion
    if let (SystemKind::Cantor, SamplePoint::CantorStream { master, stream, word_base }) =
        (sys.kind, point)
    {
        return Ok(DigitSequence {
            kind: sys.kind,
            beta: None,
            digits: cantor_digits(*master, *stream, *word_base, len),
            guard,
        });
    }

    // for the doubling map, a uniform sample's binary digits are its bit
    // stream; take them directly unless a carry could reach the prefix
    if let (SystemKind::Beta, SamplePoint::BitStream { master, stream, word_base }) =
        (sys.kind, point)
    {
        if sys.beta.as_ref() == Some(&Exact::from_int(2)) {
            let m = draw_mantissa(*master, *stream, *word_base, len as u32 + 64);
            let tail = &m & &BigInt::from(u64::MAX);
            if tail != BigInt::from(u64::MAX) {
                let prefix = (m >> 64u32).to_biguint().expect("mantissa is nonnegative");
                let digits = (0..len)
                    .map(|j| u64::from(prefix.bit((len - 1 - j) as u64)))
                    .collect();
                return Ok(DigitSequence { kind: sys.kind, beta: sys.beta.clone(), digits, guard });
            }
            // all-ones lookahead: settle it through the interval walk
        }
    }

    let mut bits = initial_bits(sys, len).min(opts.max_bits);
    loop {
        let (lo, hi) = point.enclose(bits);
        let walked = if sys.kind == SystemKind::Gauss && lo.is_rational() && hi.is_rational() {
            gauss_cf_digits(
                lo.to_rational().expect("checked rational"),
                hi.to_rational().expect("checked rational"),
                len,
            )
        } else {
            walk_digits(sys, lo, hi, len)
        };
        match walked {
            Ok(digits) => {
                return Ok(DigitSequence { kind: sys.kind, beta: sys.beta.clone(), digits, guard })
            }
            Err(OrbitError::BranchStraddle) => {
                if matches!(point, SamplePoint::Fixed { .. }) {
                    // a fixed enclosure cannot be refined
                    return Err(OrbitError::BranchStraddle);
                }
                if bits >= opts.max_bits {
                    return Err(OrbitError::PrecisionExhausted { cap: opts.max_bits });
                }
                bits = (bits * 2).min(opts.max_bits);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Continued-fraction digits of a rational enclosure by integer Mobius steps
/// on unreduced numerator/denominator pairs.  The Gauss step n/d -> (d-a*n)/n
/// never grows the operands past the enclosure precision, and skipping the
/// per-operation rational normalization makes this the cheap path for bulk
/// sampling.  Digit and straddle decisions match `coding_digit` exactly:
/// the digit is floor(1/hi), accepted only when 1/lo < digit + 1.
fn gauss_cf_digits(lo: &BigRational, hi: &BigRational, len: usize) -> Result<Vec<u64>, OrbitError> {
    use num_traits::{Signed, ToPrimitive, Zero};
    // BigRational keeps denominators positive
    let (mut an, mut ad) = (lo.numer().clone(), lo.denom().clone());
    let (mut bn, mut bd) = (hi.numer().clone(), hi.denom().clone());
    let mut digits = Vec::with_capacity(len);
    for step in 0..len {
        let deeper = |e: OrbitError| {
            if step > 0 {
                OrbitError::InsufficientDigits { needed: len, have: step }
            } else {
                e
            }
        };
        if !an.is_positive() {
            if an.is_zero() && bn.is_zero() {
                // the expansion has terminated
                return Err(deeper(OrbitError::OutsideSupport));
            }
            return Err(OrbitError::BranchStraddle);
        }
        if bn >= bd {
            return Err(deeper(OrbitError::OutsideSupport));
        }
        let a = &bd / &bn;
        if ad >= (&a + 1) * &an {
            return Err(OrbitError::BranchStraddle);
        }
        digits.push(a.to_u64().expect("digit fits in u64"));
        // 1/x - a is decreasing, so the endpoints swap roles
        let new_lo_n = &bd - &(&a * &bn);
        let new_hi_n = &ad - &(&a * &an);
        (ad, bd) = (bn, an);
        (an, bn) = (new_lo_n, new_hi_n);
    }
    Ok(digits)
}

fn walk_digits(
    sys: &SystemDescriptor,
    mut lo: Exact,
    mut hi: Exact,
    len: usize,
) -> Result<Vec<u64>, OrbitError> {
    let mut digits = Vec::with_capacity(len);
    for step in 0..len {
        let d = sys.coding_digit(&lo, &hi).map_err(|e| match e {
            // a terminated expansion cannot yield more digits at any precision
            OrbitError::OutsideSupport if step > 0 => {
                OrbitError::InsufficientDigits { needed: len, have: step }
            }
            other => other,
        })?;
        let branch = sys.branch(d).expect("digit from partition");
        let (nlo, nhi) = branch.apply_interval(&lo, &hi);
        lo = nlo;
        hi = nhi;
        digits.push(d);
    }
    Ok(digits)
}

// ---------------------------------------------------------------------------
// Shifted values
// ---------------------------------------------------------------------------

/// Reconstruction of every shift of one digit word, built in one backward
/// pass: shift n costs O(1) lookups afterwards.
#[derive(Debug, Clone)]
pub struct ShiftTable {
    seq: DigitSequence,
    values_f64: Vec<f64>,
    radii_f64: Vec<f64>,
    max_shift: usize,
}

/// Covers every conversion error in the f64 shadow of a shift table
/// (values and radii lie in [0, 1], so a few ulps suffice; the margin is
/// three orders looser).
const F64_SLACK: f64 = 1e-12;

impl ShiftTable {
    /// Builds the f64 shadow of every shift in one backward pass; exact
    /// values are reconstructed per shift only when a screen cannot decide.
    pub fn build(seq: &DigitSequence) -> ShiftTable {
        let l = seq.len();
        let max_shift = seq.max_shift();
        // the backward recursions are contracting, so rounding stays within
        // F64_SLACK of the exact entries; radii may underflow to zero far
        // below the slack, which the widened error bound absorbs
        let mut vf = vec![0.0f64; l + 1];
        let mut rf = vec![0.0f64; l + 1];
        rf[l] = 1.0;
        match seq.kind {
            SystemKind::Beta | SystemKind::Cantor => {
                let base = match seq.kind {
                    SystemKind::Beta => seq.beta.as_ref().unwrap().to_f64(),
                    _ => 3.0,
                };
                let mut w = 0.0f64;
                let mut r = 1.0f64;
                for k in (0..l).rev() {
                    w = (w + seq.digits[k] as f64) / base;
                    r /= base;
                    vf[k] = w;
                    rf[k] = r;
                }
            }
            SystemKind::Gauss => {
                let mut v = 0.0f64;
                let mut q = 1.0f64;
                let mut q_prev = 0.0f64;
                for k in (0..l).rev() {
                    let a = seq.digits[k] as f64;
                    v = 1.0 / (a + v);
                    let nq = a * q + q_prev;
                    q_prev = std::mem::replace(&mut q, nq);
                    vf[k] = v;
                    rf[k] = 1.0 / (q * q);
                }
            }
        }
        ShiftTable { seq: seq.clone(), values_f64: vf, radii_f64: rf, max_shift }
    }

    pub fn max_shift(&self) -> usize {
        self.max_shift
    }

    /// Exact reconstruction of shift `n` from digits n..L.
    pub fn value(&self, n: usize) -> Result<EnclosedPoint, OrbitError> {
        if n > self.max_shift {
            return Err(OrbitError::InsufficientDigits {
                needed: n,
                have: self.max_shift,
            });
        }
        let seq = &self.seq;
        let center = match seq.kind {
            SystemKind::Beta | SystemKind::Cantor => {
                let base = match seq.kind {
                    SystemKind::Beta => seq.beta.clone().unwrap(),
                    _ => Exact::from_int(3),
                };
                let inv = base.recip();
                let mut w = Exact::zero();
                for k in (n..seq.len()).rev() {
                    w = &(&w + &Exact::from_int(seq.digits[k] as i64)) * &inv;
                }
                w
            }
            SystemKind::Gauss => {
                // value of digits n..L is p/q with p = q(next suffix),
                // q = a_{k+1} q(next) + p(next)
                let mut p = BigInt::from(0);
                let mut q = BigInt::from(1);
                for k in (n..seq.len()).rev() {
                    let a = BigInt::from(seq.digits[k]);
                    let nq = a * &q + &p;
                    p = std::mem::replace(&mut q, nq);
                }
                Exact::from_big(BigRational::new(p, q))
            }
        };
        Ok(EnclosedPoint { center, radius: tail_radius(seq, n) })
    }

    /// d(T^n x, x) as (distance, error-bound).
    pub fn distance(&self, n: usize) -> Result<(Exact, Exact), OrbitError> {
        let shifted = self.value(n)?;
        let base = self.value(0).expect("shift 0 always available");
        Ok((
            (&shifted.center - &base.center).abs(),
            &shifted.radius + &base.radius,
        ))
    }

    /// Shift `n` in f64 with an error bound widened by the conversion slack.
    pub fn value_f64(&self, n: usize) -> Result<(f64, f64), OrbitError> {
        if n > self.max_shift {
            return Err(OrbitError::InsufficientDigits { needed: n, have: self.max_shift });
        }
        Ok((self.values_f64[n], self.radii_f64[n] + F64_SLACK))
    }

    /// d(T^n x, x) in f64 with an error bound widened by the conversion
    /// slack, sound for screening against a threshold.
    pub fn distance_f64(&self, n: usize) -> Result<(f64, f64), OrbitError> {
        if n > self.max_shift {
            return Err(OrbitError::InsufficientDigits { needed: n, have: self.max_shift });
        }
        Ok((
            (self.values_f64[n] - self.values_f64[0]).abs(),
            self.radii_f64[n] + self.radii_f64[0] + F64_SLACK,
        ))
    }

    /// Three-valued test of d(T^n x, x) < threshold.  The f64 screen only
    /// answers when its widened error bound still separates the distance
    /// from the threshold, so the verdict always equals the exact one;
    /// `threshold_f64` must be the exact f64 value of `threshold`.
    pub fn classify(
        &self,
        n: usize,
        threshold: &Exact,
        threshold_f64: f64,
    ) -> Result<HitVerdict, OrbitError> {
        let (d, e) = self.distance_f64(n)?;
        if d - e > threshold_f64 {
            return Ok(HitVerdict::Miss);
        }
        if d + e < threshold_f64 {
            return Ok(HitVerdict::Hit);
        }
        let (d, e) = self.distance(n)?;
        Ok(classify_hit_exact(&d, &e, threshold))
    }
}

/// Value of T^n x reconstructed from digits n.. of x.
pub fn shifted_value(seq: &DigitSequence, n: usize) -> Result<EnclosedPoint, OrbitError> {
    if n > seq.max_shift() {
        return Err(OrbitError::InsufficientDigits { needed: n, have: seq.max_shift() });
    }
    let table = ShiftTable::build(seq);
    table.value(n)
}

/// Certified recurrence distance d(T^n x, x) with its error bound.
pub fn recurrence_distance(seq: &DigitSequence, n: usize) -> Result<(Exact, Exact), OrbitError> {
    let table = ShiftTable::build(seq);
    table.distance(n)
}

// ---------------------------------------------------------------------------
// Hit classification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitVerdict {
    Hit,
    Miss,
    Ambiguous,
}

/// Three-valued comparison of a certified distance against a threshold.
/// Hit and Miss are only issued when the whole enclosure is on one side.
pub fn classify_hit_exact(distance: &Exact, error: &Exact, threshold: &Exact) -> HitVerdict {
    if &(distance + error) < threshold {
        HitVerdict::Hit
    } else if &(distance - error) > threshold {
        HitVerdict::Miss
    } else {
        HitVerdict::Ambiguous
    }
}

/// f64 view of `classify_hit_exact`; the floats are lifted to exact
/// rationals, so the comparison itself has no rounding.
pub fn classify_hit(distance: f64, error: f64, threshold: f64) -> HitVerdict {
    let d = Exact::from_big(BigRational::from_float(distance).expect("finite distance"));
    let e = Exact::from_big(BigRational::from_float(error).expect("finite error"));
    let t = Exact::from_big(BigRational::from_float(threshold).expect("finite threshold"));
    classify_hit_exact(&d, &e, &t)
}
