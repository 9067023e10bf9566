//! Exact cylinder enumeration and the geometric constants attached to it:
//! expansion factors, distortion, image-of-ball constants, and the inverse
//! expansion sums that control recurrence series.
//!
//! A depth-n cylinder is a maximal interval on which the n-fold map is a
//! single monotone composition.  Beta cylinders are enumerated by interval
//! refinement (which yields exactly the admissible words), Gauss cylinders
//! by continuant recursion with length pruning and a certified omitted
//! mass, Cantor cylinders as plain digit products.

use crate::error::CylinderError;
use crate::scalar::Exact;
use crate::systems::{quasi_greedy_expansion, SystemDescriptor, SystemKind};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// The n-fold map restricted to one cylinder.
#[derive(Debug, Clone)]
pub enum ComposedMap {
    /// T^n x = slope * x + offset
    Affine { slope: Exact, offset: Exact },
    /// Continuant matrix of a Gauss word: preimage(t) = (p1 + p0 t)/(q1 + q0 t),
    /// with determinant +-1.
    Fraction { p1: BigInt, p0: BigInt, q1: BigInt, q0: BigInt },
}

impl ComposedMap {
    pub fn forward(&self, x: &Exact) -> Exact {
        match self {
            ComposedMap::Affine { slope, offset } => &(slope * x) + offset,
            ComposedMap::Fraction { p1, p0, q1, q0 } => {
                let (p1, p0, q1, q0) = frac_exact(p1, p0, q1, q0);
                &(&(&q1 * x) - &p1) / &(&p0 - &(&q0 * x))
            }
        }
    }

    pub fn preimage(&self, t: &Exact) -> Exact {
        match self {
            ComposedMap::Affine { slope, offset } => &(t - offset) / slope,
            ComposedMap::Fraction { p1, p0, q1, q0 } => {
                let (p1, p0, q1, q0) = frac_exact(p1, p0, q1, q0);
                &(&p1 + &(&p0 * t)) / &(&q1 + &(&q0 * t))
            }
        }
    }

    /// |d/dx T^n| at x.
    pub fn derivative_abs(&self, x: &Exact) -> Exact {
        match self {
            ComposedMap::Affine { slope, .. } => slope.abs(),
            ComposedMap::Fraction { p1, p0, q1, q0 } => {
                // |(T^n)'(x)| = (q1 + q0 t)^2 at t = T^n x
                let t = self.forward(x);
                let (_, _, q1, q0) = frac_exact(p1, p0, q1, q0);
                let s = &q1 + &(&q0 * &t);
                &s * &s
            }
        }
    }
}

fn frac_exact(p1: &BigInt, p0: &BigInt, q1: &BigInt, q0: &BigInt) -> (Exact, Exact, Exact, Exact) {
    let f = |b: &BigInt| Exact::from_big(BigRational::from_integer(b.clone()));
    (f(p1), f(p0), f(q1), f(q0))
}

#[derive(Debug, Clone)]
pub struct CylinderRecord {
    pub word: Vec<u64>,
    /// Closure endpoints, lo < hi.
    pub interval: (Exact, Exact),
    /// Infimum of |(T^n)'| over the cylinder (exact for affine families,
    /// the continuant square for Gauss).
    pub k_lower: Exact,
    /// Supremum of |(T^n)'| over the cylinder.
    pub k_upper: Exact,
    pub map: ComposedMap,
}

impl CylinderRecord {
    pub fn length(&self) -> Exact {
        &self.interval.1 - &self.interval.0
    }
}

#[derive(Debug, Clone)]
pub struct EnumerateOpts {
    pub depth: usize,
    /// Hard count guard; enumeration fails instead of exploding.
    pub max_cylinders: usize,
    /// Gauss only: subtrees with cylinder length below this are dropped and
    /// their exact total length reported as omitted.
    pub prune_len: f64,
}

impl Default for EnumerateOpts {
    fn default() -> Self {
        EnumerateOpts { depth: 1, max_cylinders: 300_000, prune_len: 1e-7 }
    }
}

#[derive(Debug)]
pub struct Enumeration {
    pub records: Vec<CylinderRecord>,
    /// Total Lebesgue length of pruned Gauss subtrees (zero elsewhere).
    pub omitted_length: Exact,
}

pub fn enumerate(sys: &SystemDescriptor, opts: &EnumerateOpts) -> Result<Enumeration, CylinderError> {
    match sys.kind {
        SystemKind::Beta => enumerate_beta(sys, opts),
        SystemKind::Cantor => enumerate_cantor(opts),
        SystemKind::Gauss => enumerate_gauss(opts),
    }
}

fn enumerate_beta(sys: &SystemDescriptor, opts: &EnumerateOpts) -> Result<Enumeration, CylinderError> {
    let beta = sys.beta.as_ref().unwrap();
    struct Node {
        word: Vec<u64>,
        interval: (Exact, Exact),
        image: (Exact, Exact),
        slope: Exact,
        offset: Exact,
    }
    let mut level = vec![Node {
        word: vec![],
        interval: (Exact::zero(), Exact::one()),
        image: (Exact::zero(), Exact::one()),
        slope: Exact::one(),
        offset: Exact::zero(),
    }];
    let digits: Vec<u64> = sys.branch_digits(0);
    for _ in 0..opts.depth {
        let mut next = Vec::with_capacity(level.len() * digits.len());
        for node in &level {
            for &d in &digits {
                let branch = sys.branch(d).unwrap();
                let c_lo = node.image.0.clone().max(branch.domain.0.clone());
                let c_hi = node.image.1.clone().min(branch.domain.1.clone());
                if c_lo >= c_hi {
                    continue;
                }
                // the clipped cell lives in T^k coordinates: pull it back
                // through the parent composition
                let parent = ComposedMap::Affine {
                    slope: node.slope.clone(),
                    offset: node.offset.clone(),
                };
                let interval = (parent.preimage(&c_lo), parent.preimage(&c_hi));
                let slope = &node.slope * beta;
                let offset = &(&node.offset * beta) - &Exact::from_int(d as i64);
                let image = branch.apply_interval(&c_lo, &c_hi);
                let mut word = node.word.clone();
                word.push(d);
                next.push(Node { word, interval, image, slope, offset });
                if next.len() > opts.max_cylinders {
                    return Err(CylinderError::TooMany { guard: opts.max_cylinders });
                }
            }
        }
        level = next;
    }
    let records = level
        .into_iter()
        .map(|n| {
            let k = n.slope.abs();
            CylinderRecord {
                word: n.word,
                interval: n.interval,
                k_lower: k.clone(),
                k_upper: k.clone(),
                map: ComposedMap::Affine { slope: n.slope, offset: n.offset },
            }
        })
        .collect();
    Ok(Enumeration { records, omitted_length: Exact::zero() })
}

fn enumerate_cantor(opts: &EnumerateOpts) -> Result<Enumeration, CylinderError> {
    let n = opts.depth;
    if 1usize << n > opts.max_cylinders {
        return Err(CylinderError::TooMany { guard: opts.max_cylinders });
    }
    let three = Exact::from_int(3);
    let k = three.pow_i(n as i32);
    let width = k.recip();
    let mut records = Vec::with_capacity(1 << n);
    for bits in 0u64..(1 << n) {
        let mut word = Vec::with_capacity(n);
        let mut lo = Exact::zero();
        let mut offset = Exact::zero();
        for i in 0..n {
            let d = if bits >> (n - 1 - i) & 1 == 1 { 2u64 } else { 0 };
            word.push(d);
            lo = &lo + &(&Exact::from_int(d as i64) * &three.pow_i(-(i as i32 + 1)));
            // T^(i+1) x = 3^(i+1) x - sum d_j 3^(i+1-j)
            offset = &(&offset * &three) - &Exact::from_int(d as i64);
        }
        let hi = &lo + &width;
        records.push(CylinderRecord {
            word,
            interval: (lo, hi),
            k_lower: k.clone(),
            k_upper: k.clone(),
            map: ComposedMap::Affine { slope: k.clone(), offset },
        });
    }
    Ok(Enumeration { records, omitted_length: Exact::zero() })
}

fn enumerate_gauss(opts: &EnumerateOpts) -> Result<Enumeration, CylinderError> {
    struct Walk<'a> {
        opts: &'a EnumerateOpts,
        records: Vec<CylinderRecord>,
        // unreduced num/den: the pruned tails have near-coprime denominators,
        // so reducing on every += blows the gcd cost up quadratically
        omitted_num: BigInt,
        omitted_den: BigInt,
        prune: BigRational,
    }
    impl Walk<'_> {
        fn node(
            &mut self,
            depth: usize,
            word: &mut Vec<u64>,
            p1: BigInt,
            p0: BigInt,
            q1: BigInt,
            q0: BigInt,
        ) -> Result<(), CylinderError> {
            if depth == self.opts.depth {
                let a = BigRational::new(p1.clone(), q1.clone());
                let b = BigRational::new(&p1 + &p0, &q1 + &q0);
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                let k_lower = Exact::from_big(BigRational::from_integer(&q1 * &q1));
                let s = &q1 + &q0;
                let k_upper = Exact::from_big(BigRational::from_integer(&s * &s));
                self.records.push(CylinderRecord {
                    word: word.clone(),
                    interval: (Exact::from_big(lo), Exact::from_big(hi)),
                    k_lower,
                    k_upper,
                    map: ComposedMap::Fraction { p1, p0, q1, q0 },
                });
                if self.records.len() > self.opts.max_cylinders {
                    return Err(CylinderError::TooMany { guard: self.opts.max_cylinders });
                }
                return Ok(());
            }
            let mut a = BigInt::one();
            loop {
                let cp1 = &a * &p1 + &p0;
                let cq1 = &a * &q1 + &q0;
                let len = BigRational::new(BigInt::one(), &cq1 * (&cq1 + &q1));
                if len < self.prune {
                    // the words from digit a on tile the interval between
                    // [0; w, a] and the a -> infinity endpoint [0; w]
                    let den = &q1 * &cq1;
                    self.omitted_num = &self.omitted_num * &den + &self.omitted_den;
                    self.omitted_den *= den;
                    return Ok(());
                }
                word.push(a.to_u64().expect("digit fits u64"));
                self.node(depth + 1, word, cp1, p1.clone(), cq1, q1.clone())?;
                word.pop();
                a += 1;
            }
        }
    }
    let mut walk = Walk {
        opts,
        records: Vec::new(),
        omitted_num: BigInt::zero(),
        omitted_den: BigInt::one(),
        prune: BigRational::from_float(opts.prune_len).unwrap(),
    };
    let mut word = Vec::new();
    walk.node(0, &mut word, BigInt::zero(), BigInt::one(), BigInt::one(), BigInt::zero())?;
    Ok(Enumeration {
        records: walk.records,
        omitted_length: Exact::from_big(BigRational::new(walk.omitted_num, walk.omitted_den)),
    })
}

// ---------------------------------------------------------------------------
// Admissibility
// ---------------------------------------------------------------------------

/// Lexicographic admissibility of a digit word for a beta map: every
/// suffix must stay at or below the quasi-greedy expansion of 1.
pub fn is_admissible(beta: &Exact, word: &[u64]) -> bool {
    let dstar = quasi_greedy_expansion(beta, word.len());
    'suffix: for k in 0..word.len() {
        for (j, &w) in word[k..].iter().enumerate() {
            if w < dstar[j] {
                continue 'suffix;
            }
            if w > dstar[j] {
                return false;
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Derived constants
// ---------------------------------------------------------------------------

/// Certified bounds for the inverse expansion sum at one depth: the sum of
/// k_lower^-delta over all depth-n cylinders.
#[derive(Debug, Clone)]
pub struct ExpansionSum {
    pub depth: usize,
    pub cylinders: usize,
    pub lo: Exact,
    pub hi: Exact,
}

/// Sum of K^-delta over depth-n cylinders.  The self-similar families
/// evaluate symbolically: the ternary Cantor system gives exactly 1 at
/// every depth because 3^delta = 2, and beta systems give count * beta^-n.
/// Gauss sums the exact continuant squares and bounds the pruned part by
/// twice its Lebesgue length.
pub fn expansion_sum(sys: &SystemDescriptor, opts: &EnumerateOpts) -> Result<ExpansionSum, CylinderError> {
    match sys.kind {
        SystemKind::Cantor => {
            let count = 1usize << opts.depth;
            Ok(ExpansionSum { depth: opts.depth, cylinders: count, lo: Exact::one(), hi: Exact::one() })
        }
        SystemKind::Beta => {
            let e = enumerate(sys, opts)?;
            let sum = &Exact::from_int(e.records.len() as i64)
                * &sys.beta.as_ref().unwrap().pow_i(-(opts.depth as i32));
            Ok(ExpansionSum {
                depth: opts.depth,
                cylinders: e.records.len(),
                lo: sum.clone(),
                hi: sum,
            })
        }
        SystemKind::Gauss => {
            let e = enumerate(sys, opts)?;
            let mut sum = Exact::zero();
            for r in &e.records {
                sum = &sum + &r.k_lower.recip();
            }
            // 1/q^2 is at most twice the cylinder length, so the omitted
            // words contribute at most twice the omitted length
            let hi = &sum + &(&e.omitted_length * &Exact::from_int(2));
            Ok(ExpansionSum { depth: opts.depth, cylinders: e.records.len(), lo: sum, hi })
        }
    }
}

/// Exact supremum over enumerated cylinders of sup|（T^n)'| / inf|(T^n)'|.
pub fn distortion_bound(sys: &SystemDescriptor, opts: &EnumerateOpts) -> Result<f64, CylinderError> {
    let e = enumerate(sys, opts)?;
    let mut worst = Exact::one();
    for r in &e.records {
        let ratio = &r.k_upper / &r.k_lower;
        if ratio > worst {
            worst = ratio;
        }
    }
    Ok(worst.to_f64())
}

/// Empirical image-of-ball constant: the factor by which T^n applied to a
/// centered ball inside a cylinder can distort the radius scaled by the
/// cylinder's expansion lower bound.  Exactly 1 for the affine families.
pub fn conformal_constant(sys: &SystemDescriptor, opts: &EnumerateOpts) -> Result<f64, CylinderError> {
    let e = enumerate(sys, opts)?;
    let half = Exact::from_ratio(1, 2);
    let quarter = Exact::from_ratio(1, 4);
    let mut worst = Exact::one();
    for r in &e.records {
        let (lo, hi) = &r.interval;
        let mid = &(lo + hi) * &half;
        let rad = &(hi - lo) * &quarter;
        let scaled = &r.k_lower * &rad;
        let center = r.map.forward(&mid);
        let left = (&center - &r.map.forward(&(&mid - &rad))).abs();
        let right = (&r.map.forward(&(&mid + &rad)) - &center).abs();
        for side in [left, right] {
            let out = &side / &scaled;
            let inn = &scaled / &side;
            for c in [out, inn] {
                if c > worst {
                    worst = c;
                }
            }
        }
    }
    Ok(worst.to_f64())
}

/// Counting check for beta maps: the number of depth-n cylinders is
/// squeezed between beta^n and beta^(n+1)/(beta - 1).
pub fn count_bounds_hold(beta: &Exact, depth: usize, count: usize) -> bool {
    let n = Exact::from_int(count as i64);
    let low = beta.pow_i(depth as i32);
    let high = &beta.pow_i(depth as i32 + 1) / &(beta - &Exact::one());
    low <= n && n <= high
}

/// How tightly near-period-m points cluster: grid points x in a depth-m
/// cylinder with d(T^m x, x) < psi must sit within c * psi / K of one
/// another (affine families: of the branch fixed point), with
/// c = 2/(1 - 1/K).
#[derive(Debug, Clone)]
pub struct RestrictionCheck {
    pub c_hat: f64,
    pub c_bound: f64,
    pub hits: usize,
}

pub fn restriction_check(
    sys: &SystemDescriptor,
    opts: &EnumerateOpts,
    psi: f64,
    grid: usize,
) -> Result<RestrictionCheck, CylinderError> {
    let e = enumerate(sys, opts)?;
    let psi_x = Exact::from_big(BigRational::from_float(psi).unwrap());
    let mut c_hat = 0.0f64;
    let mut c_bound = f64::INFINITY;
    let mut hits = 0usize;
    for r in &e.records {
        let k = r.k_lower.to_f64();
        c_bound = c_bound.min(2.0 / (1.0 - 1.0 / k));
        let (lo, hi) = &r.interval;
        let step = &(hi - lo) / &Exact::from_int(grid as i64);
        let anchor = match &r.map {
            // fixed point of slope*x + offset
            ComposedMap::Affine { slope, offset } => {
                Some(&(-offset.clone()) / &(slope - &Exact::one()))
            }
            ComposedMap::Fraction { .. } => None,
        };
        let mut hit_points: Vec<Exact> = Vec::new();
        for i in 1..grid {
            let x = lo + &(&step * &Exact::from_int(i as i64));
            let d = (&r.map.forward(&x) - &x).abs();
            if d < psi_x {
                hits += 1;
                match &anchor {
                    Some(a) => {
                        let c = (&(&x - a).abs() * &r.k_lower).to_f64() / psi;
                        c_hat = c_hat.max(c);
                    }
                    None => hit_points.push(x),
                }
            }
        }
        if let (None, true) = (&anchor, hit_points.len() > 1) {
            let diam = (hit_points.last().unwrap() - &hit_points[0]).abs();
            let c = (&diam * &r.k_lower).to_f64() / (2.0 * psi);
            c_hat = c_hat.max(c);
        }
    }
    Ok(RestrictionCheck { c_hat, c_bound, hits })
}
