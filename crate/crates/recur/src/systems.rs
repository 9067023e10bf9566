//! The three built-in expanding systems and their branch structure.
//!
//! A system is a piecewise map T on a coded subset of [0,1] together with
//! the Hausdorff dimension `delta` of its invariant measure's support:
//!
//! * `beta:<b>`  — T(x) = b*x mod 1 with ceil(b) monotone affine branches;
//! * `gauss`     — T(x) = 1/x - a on countably many branches (1/(a+1), 1/a);
//! * `cantor3`   — T(x) = 3x mod 1 restricted to the middle-third Cantor
//!                 set, coded by ternary digits {0, 2}.
//!
//! Branch domains are open subintervals of the unit interval (open in the
//! coded support for `cantor3`).  Digit assignment for expansions uses the
//! half-open greedy convention; `apply` on enclosures treats partition
//! endpoints as errors.

use crate::error::{BuildError, OrbitError};
use crate::scalar::Exact;
use num_traits::ToPrimitive;
use std::cmp::Ordering;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    Beta,
    Gauss,
    Cantor,
}

#[derive(Debug, Clone)]
pub struct SystemDescriptor {
    pub name: String,
    pub kind: SystemKind,
    /// Dimension exponent of the invariant measure (1 for beta and Gauss,
    /// log 2 / log 3 for the Cantor system).
    pub delta: f64,
    /// Expansion base for beta systems.
    pub beta: Option<Exact>,
}

/// One monotone branch: domain, forward map and derivative data.
#[derive(Debug, Clone)]
pub struct BranchSpec {
    /// Digit emitted when an orbit point lies in this branch.
    pub digit: u64,
    /// Open interval (closure endpoints stored exactly).
    pub domain: (Exact, Exact),
    pub map: BranchMap,
}

#[derive(Debug, Clone)]
pub enum BranchMap {
    /// x -> slope * x + offset
    Affine { slope: Exact, offset: Exact },
    /// x -> 1/x - digit (Gauss branches; monotone decreasing)
    Mobius { digit: u64 },
}

impl BranchSpec {
    pub fn apply_point(&self, x: &Exact) -> Exact {
        match &self.map {
            BranchMap::Affine { slope, offset } => slope * x + offset,
            BranchMap::Mobius { digit } => x.recip() - Exact::from_int(*digit as i64),
        }
    }

    /// |T'| at a point of the branch domain.
    pub fn derivative_abs(&self, x: &Exact) -> Exact {
        match &self.map {
            BranchMap::Affine { slope, .. } => slope.abs(),
            BranchMap::Mobius { .. } => (x * x).recip(),
        }
    }

    /// Image of an enclosure [lo, hi] contained in the branch domain,
    /// returned with ordered endpoints.
    pub fn apply_interval(&self, lo: &Exact, hi: &Exact) -> (Exact, Exact) {
        let a = self.apply_point(lo);
        let b = self.apply_point(hi);
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// Infimum of |T'| over the branch closure.
    pub fn expansion_inf(&self) -> Exact {
        match &self.map {
            BranchMap::Affine { slope, .. } => slope.abs(),
            // inf of 1/x^2 over (1/(a+1), 1/a) is a^2, attained at the right endpoint
            BranchMap::Mobius { digit } => Exact::from_int((digit * digit) as i64),
        }
    }
}

pub fn build_beta_system(beta: Exact) -> Result<SystemDescriptor, BuildError> {
    if beta <= Exact::one() {
        return Err(BuildError::BetaOutOfRange(format!("{beta:?}")));
    }
    let name = if beta == Exact::golden() {
        "beta:phi".to_string()
    } else {
        format!("beta:{}", beta.to_f64())
    };
    Ok(SystemDescriptor { name, kind: SystemKind::Beta, delta: 1.0, beta: Some(beta) })
}

pub fn build_gauss_system() -> SystemDescriptor {
    SystemDescriptor { name: "gauss".to_string(), kind: SystemKind::Gauss, delta: 1.0, beta: None }
}

pub fn build_cantor_system() -> SystemDescriptor {
    SystemDescriptor {
        name: "cantor3".to_string(),
        kind: SystemKind::Cantor,
        delta: 2f64.ln() / 3f64.ln(),
        beta: None,
    }
}

impl SystemDescriptor {
    /// Number of branches, `None` for the countable Gauss partition.
    pub fn branch_count(&self) -> Option<u64> {
        match self.kind {
            SystemKind::Beta => {
                let beta = self.beta.as_ref().unwrap();
                let floor = beta.floor_int().to_u64().unwrap();
                // integer beta: beta branches; otherwise one extra partial branch
                if &Exact::from_int(floor as i64) == beta {
                    Some(floor)
                } else {
                    Some(floor + 1)
                }
            }
            SystemKind::Gauss => None,
            SystemKind::Cantor => Some(2),
        }
    }

    /// Branch carrying the given digit, if the digit is legal.
    pub fn branch(&self, digit: u64) -> Option<BranchSpec> {
        match self.kind {
            SystemKind::Beta => {
                let count = self.branch_count().unwrap();
                if digit >= count {
                    return None;
                }
                let beta = self.beta.as_ref().unwrap().clone();
                let d = Exact::from_int(digit as i64);
                let lo = &d / &beta;
                let hi_raw = &(&d + &Exact::one()) / &beta;
                let one = Exact::one();
                let hi = if hi_raw > one { one } else { hi_raw };
                Some(BranchSpec {
                    digit,
                    domain: (lo, hi),
                    map: BranchMap::Affine { slope: beta, offset: -d },
                })
            }
            SystemKind::Gauss => {
                if digit == 0 {
                    return None;
                }
                let a = digit as i64;
                Some(BranchSpec {
                    digit,
                    domain: (Exact::from_ratio(1, a + 1), Exact::from_ratio(1, a)),
                    map: BranchMap::Mobius { digit },
                })
            }
            SystemKind::Cantor => match digit {
                0 => Some(BranchSpec {
                    digit: 0,
                    domain: (Exact::zero(), Exact::from_ratio(1, 3)),
                    map: BranchMap::Affine { slope: Exact::from_int(3), offset: Exact::zero() },
                }),
                2 => Some(BranchSpec {
                    digit: 2,
                    domain: (Exact::from_ratio(2, 3), Exact::one()),
                    map: BranchMap::Affine { slope: Exact::from_int(3), offset: Exact::from_int(-2) },
                }),
                _ => None,
            },
        }
    }

    /// Digits of the finite branches (Gauss truncated at `cap`).
    pub fn branch_digits(&self, cap: u64) -> Vec<u64> {
        match self.kind {
            SystemKind::Beta => (0..self.branch_count().unwrap()).collect(),
            SystemKind::Gauss => (1..=cap).collect(),
            SystemKind::Cantor => vec![0, 2],
        }
    }

    /// Greedy digit of an enclosure [lo, hi]: the digit is defined when the
    /// whole enclosure lies in one half-open coding cell.  The conventions
    /// match the usual expansions: beta cells are [d/b, (d+1)/b), Gauss
    /// cells are (1/(a+1), 1/a], Cantor cells split at the middle gap.
    pub fn coding_digit(&self, lo: &Exact, hi: &Exact) -> Result<u64, OrbitError> {
        debug_assert!(lo <= hi);
        match self.kind {
            SystemKind::Beta => {
                if lo.signum() == Ordering::Less || hi >= &Exact::one() {
                    return Err(OrbitError::OutsideSupport);
                }
                let beta = self.beta.as_ref().unwrap();
                let p_lo = beta * lo;
                let d = p_lo.floor_int();
                let upper = Exact::from_big(num_rational::BigRational::from_integer(&d + 1));
                if &(beta * hi) < &upper {
                    Ok(d.to_u64().expect("digit fits in u64"))
                } else {
                    Err(OrbitError::BranchStraddle)
                }
            }
            SystemKind::Gauss => {
                if lo.signum() != Ordering::Greater {
                    if lo.is_zero() && hi.is_zero() {
                        // the expansion has terminated
                        return Err(OrbitError::OutsideSupport);
                    }
                    return Err(OrbitError::BranchStraddle);
                }
                if hi >= &Exact::one() {
                    return Err(OrbitError::OutsideSupport);
                }
                // 1/x is decreasing: the digit of the whole enclosure is
                // floor(1/hi) provided 1/lo stays below the next integer.
                let inv_hi = hi.recip();
                let a = inv_hi.floor_int();
                let upper = Exact::from_big(num_rational::BigRational::from_integer(&a + 1));
                if &lo.recip() < &upper {
                    Ok(a.to_u64().expect("digit fits in u64"))
                } else {
                    Err(OrbitError::BranchStraddle)
                }
            }
            SystemKind::Cantor => {
                let third = Exact::from_ratio(1, 3);
                let two_thirds = Exact::from_ratio(2, 3);
                if lo.signum() == Ordering::Less || hi > &Exact::one() {
                    return Err(OrbitError::OutsideSupport);
                }
                if hi <= &third {
                    Ok(0)
                } else if lo >= &two_thirds {
                    Ok(2)
                } else if lo > &third && hi < &two_thirds {
                    Err(OrbitError::OutsideSupport)
                } else {
                    Err(OrbitError::BranchStraddle)
                }
            }
        }
    }
}

/// One forward step of T on an enclosure.  The enclosure must lie strictly
/// inside one open branch domain; meeting a partition endpoint is an error.
pub fn apply(sys: &SystemDescriptor, center: &Exact, radius: &Exact) -> Result<(Exact, Exact), OrbitError> {
    let lo = center - radius;
    let hi = center + radius;
    let digit = interior_digit(sys, &lo, &hi)?;
    let branch = sys.branch(digit).expect("digit came from the partition");
    let (ilo, ihi) = branch.apply_interval(&lo, &hi);
    let two = Exact::from_int(2);
    Ok((&(&ilo + &ihi) / &two, &(&ihi - &ilo) / &two))
}

/// Branch containing the enclosure with open-interval semantics.
fn interior_digit(sys: &SystemDescriptor, lo: &Exact, hi: &Exact) -> Result<u64, OrbitError> {
    match sys.kind {
        SystemKind::Cantor => {
            // branch domains are open in the coded support, which contains
            // its extreme points; only the middle gap is excluded
            let third = Exact::from_ratio(1, 3);
            let two_thirds = Exact::from_ratio(2, 3);
            if lo.signum() == Ordering::Less || hi > &Exact::one() {
                Err(OrbitError::OutsideSupport)
            } else if hi <= &third {
                Ok(0)
            } else if lo >= &two_thirds {
                Ok(2)
            } else if lo > &third && hi < &two_thirds {
                Err(OrbitError::OutsideSupport)
            } else {
                Err(OrbitError::BranchStraddle)
            }
        }
        _ => {
            let digit = sys.coding_digit(lo, hi)?;
            let branch = sys.branch(digit).expect("digit came from the partition");
            // reject the measure-zero boundary the half-open coding keeps
            let on_left = lo == &branch.domain.0 || hi == &branch.domain.0;
            let on_right = lo == &branch.domain.1 || hi == &branch.domain.1;
            if on_left || on_right {
                Err(OrbitError::BranchStraddle)
            } else {
                Ok(digit)
            }
        }
    }
}

/// Digit sequences of 1 under the greedy beta expansion.  Returns the digits
/// and whether the expansion terminated (hit zero exactly) before `len`.
pub fn beta_expansion_of_one(beta: &Exact, len: usize) -> (Vec<u64>, bool) {
    let mut digits = Vec::with_capacity(len);
    let mut z = Exact::one();
    for _ in 0..len {
        let prod = beta * &z;
        let d = prod.floor_int();
        z = &prod - &Exact::from_big(num_rational::BigRational::from_integer(d.clone()));
        digits.push(d.to_u64().expect("digit fits in u64"));
        if z.is_zero() {
            return (digits, true);
        }
    }
    (digits, false)
}

/// Quasi-greedy expansion of 1: the lexicographic supremum of expansions of
/// points below 1.  For a finite greedy expansion (d_1..d_m) it is the
/// periodic word (d_1 .. d_{m-1} (d_m - 1))^inf; otherwise it coincides with
/// the greedy expansion.
pub fn quasi_greedy_expansion(beta: &Exact, len: usize) -> Vec<u64> {
    let (digits, finite) = beta_expansion_of_one(beta, len);
    if !finite {
        return digits;
    }
    let mut period = digits;
    let last = period.last_mut().expect("greedy expansion of 1 is nonempty");
    debug_assert!(*last >= 1);
    *last -= 1;
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let take = (len - out.len()).min(period.len());
        out.extend_from_slice(&period[..take]);
    }
    out
}

pub fn parse_system(name: &str) -> Option<SystemDescriptor> {
    if name == "gauss" {
        return Some(build_gauss_system());
    }
    if name == "cantor3" {
        return Some(build_cantor_system());
    }
    if let Some(rest) = name.strip_prefix("beta:") {
        let beta = match rest {
            "phi" | "golden" => Exact::golden(),
            s => Exact::from_decimal_str(s)?,
        };
        return build_beta_system(beta).ok();
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Exact;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn doubling_map_descriptor() {
        let sys = build_beta_system(Exact::from_int(2)).unwrap();
        assert_eq!(sys.branch_count(), Some(2));
        let b0 = sys.branch(0).unwrap();
        assert_eq!(b0.domain, (Exact::zero(), Exact::from_ratio(1, 2)));
        // T(0.3) = 0.6 exactly
        let x = Exact::from_ratio(3, 10);
        assert_eq!(b0.apply_point(&x), Exact::from_ratio(3, 5));
        let (c, r) = apply(&sys, &x, &Exact::zero()).unwrap();
        assert_eq!(c, Exact::from_ratio(3, 5));
        assert!(r.is_zero());
    }

    #[test]
    fn slope_two_error_propagation() {
        let sys = build_beta_system(Exact::from_int(2)).unwrap();
        let (c, r) = apply(&sys, &Exact::from_ratio(1, 4), &Exact::from_ratio(1, 1000)).unwrap();
        assert_eq!(c, Exact::from_ratio(1, 2));
        assert_eq!(r, Exact::from_ratio(2, 1000));
    }

    #[test]
    fn golden_beta_partition() {
        let sys = build_beta_system(Exact::golden()).unwrap();
        assert_eq!(sys.branch_count(), Some(2));
        let b0 = sys.branch(0).unwrap();
        let inv_phi = Exact::golden().recip();
        assert_eq!(b0.domain.1, inv_phi);
        let b1 = sys.branch(1).unwrap();
        assert_eq!(b1.domain, (inv_phi, Exact::one()));
        assert_eq!(sys.name, "beta:phi");
    }

    #[test]
    fn beta_2_5_has_three_branches_last_partial() {
        let sys = build_beta_system(Exact::from_ratio(5, 2)).unwrap();
        assert_eq!(sys.branch_count(), Some(3));
        let last = sys.branch(2).unwrap();
        assert_eq!(last.domain, (Exact::from_ratio(4, 5), Exact::one()));
        // image of the partial branch is (0, 1/2)
        let (lo, hi) = last.apply_interval(&Exact::from_ratio(4, 5), &Exact::one());
        assert_eq!(lo, Exact::zero());
        assert_eq!(hi, Exact::from_ratio(1, 2));
    }

    #[test]
    fn gauss_branch_and_step() {
        let sys = build_gauss_system();
        let b1 = sys.branch(1).unwrap();
        assert_eq!(b1.domain, (Exact::from_ratio(1, 2), Exact::one()));
        // T(0.3) = 10/3 - 3 = 1/3
        let (c, r) = apply(&sys, &Exact::from_ratio(3, 10), &Exact::zero()).unwrap();
        assert_eq!(c, Exact::from_ratio(1, 3));
        assert!(r.is_zero());
        // partition endpoint is an error for apply
        assert_eq!(
            apply(&sys, &Exact::from_ratio(1, 2), &Exact::zero()).unwrap_err(),
            OrbitError::BranchStraddle
        );
    }

    #[test]
    fn cantor_fixed_points_and_gap() {
        let sys = build_cantor_system();
        let (c, _) = apply(&sys, &Exact::zero(), &Exact::zero()).unwrap();
        assert!(c.is_zero());
        let (c, _) = apply(&sys, &Exact::one(), &Exact::zero()).unwrap();
        assert_eq!(c, Exact::one());
        assert_eq!(
            apply(&sys, &Exact::from_ratio(1, 2), &Exact::zero()).unwrap_err(),
            OrbitError::OutsideSupport
        );
        assert_close(sys.delta, 0.6309297535714574, 1e-15);
    }

    #[test]
    fn two_step_composition_matches_closed_form() {
        // apply . apply equals the closed-form composition of the two branch maps
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            rng_state >> 11
        };
        for sys in [
            build_beta_system(Exact::from_int(2)).unwrap(),
            build_beta_system(Exact::from_ratio(5, 2)).unwrap(),
            build_gauss_system(),
        ] {
            let mut checked = 0;
            while checked < 1000 {
                let q = next() % 999_983 + 1;
                let p = next() % q;
                if p == 0 {
                    continue;
                }
                let x = Exact::from_ratio(p as i64, q as i64);
                let step1 = apply(&sys, &x, &Exact::zero());
                let Ok((y, _)) = step1 else { continue };
                if y.is_zero() {
                    continue;
                }
                let step2 = apply(&sys, &y, &Exact::zero());
                let Ok((z, _)) = step2 else { continue };
                // closed form: resolve both branches first, then compose
                let d1 = sys.coding_digit(&x, &x).unwrap();
                let d2 = sys.coding_digit(&y, &y).unwrap();
                let b1 = sys.branch(d1).unwrap();
                let b2 = sys.branch(d2).unwrap();
                let composed = b2.apply_point(&b1.apply_point(&x));
                assert_eq!(z, composed);
                checked += 1;
            }
        }
    }

    #[test]
    fn derivative_matches_central_finite_difference() {
        // exact-rational central difference, relative error < 1e-6
        let h = Exact::from_ratio(1, 1_000_000_000);
        for sys in [
            build_beta_system(Exact::from_int(2)).unwrap(),
            build_beta_system(Exact::golden()).unwrap(),
            build_gauss_system(),
            build_cantor_system(),
        ] {
            for digit in sys.branch_digits(6) {
                let b = sys.branch(digit).unwrap();
                let (lo, hi) = (&b.domain.0, &b.domain.1);
                let width = hi - lo;
                for q in [1i64, 2, 3] {
                    let x = lo + &(&width * &Exact::from_ratio(q, 4));
                    let fd = &(&b.apply_point(&(&x + &h)) - &b.apply_point(&(&x - &h)))
                        / &(&h * &Exact::from_int(2));
                    let d = b.derivative_abs(&x);
                    let rel = (&fd.abs() - &d).abs().to_f64() / d.to_f64();
                    assert!(rel < 1e-6, "{} digit {digit} q {q}: rel {rel}", sys.name);
                }
            }
        }
    }

    #[test]
    fn every_branch_expands_in_the_interior() {
        for sys in [
            build_beta_system(Exact::from_ratio(5, 2)).unwrap(),
            build_gauss_system(),
            build_cantor_system(),
        ] {
            for digit in sys.branch_digits(8) {
                let b = sys.branch(digit).unwrap();
                let (lo, hi) = (&b.domain.0, &b.domain.1);
                let mid = &(lo + hi) / &Exact::from_int(2);
                assert!(b.derivative_abs(&mid) > Exact::one(), "{} digit {digit}", sys.name);
            }
        }
        // Gauss expansion infimum over branch closures is digit^2; the first
        // branch only expands strictly inside its domain.
        let gauss = build_gauss_system();
        assert_eq!(gauss.branch(1).unwrap().expansion_inf(), Exact::from_int(1));
        assert_eq!(gauss.branch(7).unwrap().expansion_inf(), Exact::from_int(49));
    }

    #[test]
    fn expansions_of_one() {
        // integer beta: greedy (2, 0, 0, ...), quasi-greedy (1, 1, 1, ...)
        let two = Exact::from_int(2);
        let (d, finite) = beta_expansion_of_one(&two, 6);
        assert!(finite);
        assert_eq!(d, vec![2]);
        assert_eq!(quasi_greedy_expansion(&two, 5), vec![1, 1, 1, 1, 1]);
        // phi: greedy (1, 1), quasi-greedy (1, 0)^inf
        let phi = Exact::golden();
        let (d, finite) = beta_expansion_of_one(&phi, 6);
        assert!(finite);
        assert_eq!(d, vec![1, 1]);
        assert_eq!(quasi_greedy_expansion(&phi, 6), vec![1, 0, 1, 0, 1, 0]);
    }

    #[test]
    fn parse_system_names() {
        assert_eq!(parse_system("beta:2").unwrap().name, "beta:2");
        assert_eq!(parse_system("beta:phi").unwrap().name, "beta:phi");
        assert_eq!(parse_system("gauss").unwrap().kind, SystemKind::Gauss);
        assert_eq!(parse_system("cantor3").unwrap().kind, SystemKind::Cantor);
        assert!(parse_system("beta:0.5").is_none());
        assert!(parse_system("unknown").is_none());
    }
}
