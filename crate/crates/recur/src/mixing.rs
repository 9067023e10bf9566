//! Correlation decay against dyadic test sets.
//!
//! For each lag n the joint mass mu(E, T^-n F) is tallied over a grid of
//! dyadic cells, E and F ranging over all dyadic intervals up to a per-
//! system level.  Finite-branch systems tile [0,1] by depth-n cylinders
//! exactly; the Gauss enumeration is pruned, so its panel stays coarse and
//! every reported value carries a floor covering the omitted tail.  The
//! decay exponent gamma is a least-squares fit of log c_n over the lags
//! that clear their floors.

use crate::cylinders::{enumerate, ComposedMap, EnumerateOpts};
use crate::error::{CylinderError, RunError};
use crate::measures::{ls_slope, Measure};
use crate::precision::{PrecisionOpts, ShiftTable};
use crate::recurrence::sampled_digits;
use crate::scalar::Exact;
use crate::systems::{SystemDescriptor, SystemKind};
use num_traits::ToPrimitive;

#[derive(Debug, Clone)]
pub struct MixingOpts {
    pub n_min: usize,
    pub n_max: usize,
    /// Finest dyadic level of the test-set panel.
    pub level: u32,
    pub max_cylinders: usize,
    /// Gauss enumeration pruning threshold.
    pub prune_len: f64,
    /// Gauss lags at `mc_from` and beyond are tallied from samples instead
    /// of cylinders.
    pub mc_from: usize,
    pub mc_samples: usize,
    pub master: u64,
}

impl MixingOpts {
    /// Lag ranges sized so enumeration stays near 20k cylinders per lag;
    /// the Gauss panel is kept coarse because the pruned tail mass only
    /// shrinks like the square root of the threshold.
    pub fn for_system(sys: &SystemDescriptor) -> MixingOpts {
        let (n_min, n_max, level) = match sys.kind {
            SystemKind::Beta => {
                let b = sys.beta.as_ref().unwrap().to_f64();
                let n = ((20_000.0 * (b - 1.0)).ln() / b.ln()).floor() as usize;
                (2, n.saturating_sub(1).clamp(4, 24), 6)
            }
            SystemKind::Cantor => (2, 14, 6),
            SystemKind::Gauss => (1, 6, 2),
        };
        MixingOpts {
            n_min,
            n_max,
            level,
            max_cylinders: 300_000,
            prune_len: 3e-9,
            mc_from: if sys.kind == SystemKind::Gauss { 3 } else { usize::MAX },
            mc_samples: 20_000,
            master: 0x6a09,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorrelationPoint {
    pub n: usize,
    /// max over panel pairs of |mu(E, T^-n F) - mu(E) mu(F)| / mu(F)
    pub c_n: f64,
    /// Resolution floor: truncation mass for enumerated lags, ten standard
    /// errors for sampled ones.  Values at or below it are unresolved.
    pub floor: f64,
    pub sampled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaSource {
    /// Least-squares slope over the lags that cleared their floors.
    Fitted,
    /// Every lag sat at its floor (correlations indistinguishable from
    /// zero); gamma is the conservative per-system default.
    BelowFloor,
    /// Too few usable lags or a slope outside (0,1); same default.
    Fallback,
}

#[derive(Debug, Clone)]
pub struct MixingReport {
    pub points: Vec<CorrelationPoint>,
    pub gamma: f64,
    pub source: GammaSource,
}

/// f64 shadow of a composed map, for bulk preimage evaluation.  Parameters
/// of the lags used here (slopes up to ~2^15, continuants up to ~2^16) stay
/// well inside exact f64 range, so grid preimages are good to ~1e-15.
enum QuickMap {
    Affine { slope: f64, offset: f64 },
    Fraction { p1: f64, p0: f64, q1: f64, q0: f64 },
}

impl QuickMap {
    fn of(map: &ComposedMap) -> QuickMap {
        match map {
            ComposedMap::Affine { slope, offset } => {
                QuickMap::Affine { slope: slope.to_f64(), offset: offset.to_f64() }
            }
            ComposedMap::Fraction { p1, p0, q1, q0 } => QuickMap::Fraction {
                p1: p1.to_f64().unwrap(),
                p0: p0.to_f64().unwrap(),
                q1: q1.to_f64().unwrap(),
                q0: q0.to_f64().unwrap(),
            },
        }
    }

    fn preimage(&self, t: f64) -> f64 {
        match self {
            QuickMap::Affine { slope, offset } => (t - offset) / slope,
            QuickMap::Fraction { p1, p0, q1, q0 } => (p1 + p0 * t) / (q1 + q0 * t),
        }
    }
}

/// Joint cell masses m[e * f_cells + f] = mu([e]/e_cells intersect
/// T^-n [f]/f_cells) from a depth-n cylinder enumeration.
fn joint_matrix_enumerated(
    sys: &SystemDescriptor,
    measure: &Measure,
    n: usize,
    e_cells: usize,
    f_cells: usize,
    opts: &MixingOpts,
) -> Result<(Vec<f64>, f64), CylinderError> {
    let enm = enumerate(
        sys,
        &EnumerateOpts { depth: n, max_cylinders: opts.max_cylinders, prune_len: opts.prune_len },
    )?;
    let mut m = vec![0.0f64; e_cells * f_cells];
    let ef = e_cells as f64;
    for rec in &enm.records {
        let jlo = rec.interval.0.to_f64();
        let jhi = rec.interval.1.to_f64();
        let qm = QuickMap::of(&rec.map);
        let mut prev = qm.preimage(0.0);
        for fc in 0..f_cells {
            let next = qm.preimage((fc + 1) as f64 / f_cells as f64);
            let (a, b) = if prev <= next { (prev, next) } else { (next, prev) };
            prev = next;
            let lo = a.max(jlo);
            let hi = b.min(jhi);
            if lo >= hi {
                continue;
            }
            let e0 = ((lo * ef) as usize).min(e_cells - 1);
            let e1 = ((hi * ef) as usize).min(e_cells - 1);
            let mut cdf_lo = measure.cdf_quick(lo);
            for ec in e0..=e1 {
                let cut = if ec == e1 { hi } else { (ec + 1) as f64 / ef };
                let cdf_hi = measure.cdf_quick(cut);
                m[ec * f_cells + fc] += (cdf_hi - cdf_lo).max(0.0);
                cdf_lo = cdf_hi;
            }
        }
    }
    Ok((m, enm.omitted_length.to_f64()))
}

/// Sampled joint cell frequencies for (x, T^n x).
fn joint_matrix_sampled(
    sys: &SystemDescriptor,
    measure: &Measure,
    n: usize,
    e_cells: usize,
    f_cells: usize,
    opts: &MixingOpts,
) -> Result<Vec<f64>, RunError> {
    let precision = PrecisionOpts::default();
    let guard = crate::precision::default_guard(sys);
    let len = n + guard;
    let rows = crate::exec::map_indexed(opts.mc_samples, |i| -> Result<(usize, usize), RunError> {
        let (seq, _) = sampled_digits(sys, measure, opts.master, i as u64, len, &precision)?;
        let table = ShiftTable::build(&seq);
        let (x, _) = table.value_f64(0).map_err(RunError::Orbit)?;
        let (y, _) = table.value_f64(n).map_err(RunError::Orbit)?;
        let ec = ((x * e_cells as f64) as usize).min(e_cells - 1);
        let fc = ((y * f_cells as f64) as usize).min(f_cells - 1);
        Ok((ec, fc))
    });
    let mut m = vec![0.0f64; e_cells * f_cells];
    let w = 1.0 / opts.mc_samples as f64;
    for row in rows {
        let (ec, fc) = row?;
        m[ec * f_cells + fc] += w;
    }
    Ok(m)
}

/// Scans every dyadic pair (E, F) up to the panel levels and returns the
/// worst normalised correlation plus the smallest mu(F) encountered.
fn panel_max(
    measure: &Measure,
    m: &[f64],
    e_cells: usize,
    f_cells: usize,
) -> (f64, f64) {
    // 2-d prefix sums: rect(a..b, c..d) in O(1)
    let mut p = vec![0.0f64; (e_cells + 1) * (f_cells + 1)];
    for e in 0..e_cells {
        for f in 0..f_cells {
            p[(e + 1) * (f_cells + 1) + f + 1] = m[e * f_cells + f]
                + p[e * (f_cells + 1) + f + 1]
                + p[(e + 1) * (f_cells + 1) + f]
                - p[e * (f_cells + 1) + f];
        }
    }
    let rect = |e0: usize, e1: usize, f0: usize, f1: usize| {
        p[e1 * (f_cells + 1) + f1] - p[e0 * (f_cells + 1) + f1] - p[e1 * (f_cells + 1) + f0]
            + p[e0 * (f_cells + 1) + f0]
    };
    let e_levels = e_cells.trailing_zeros();
    let f_levels = f_cells.trailing_zeros();
    let mut worst = 0.0f64;
    let mut mu_f_min = 1.0f64;
    for lf in 1..=f_levels {
        let span_f = f_cells >> lf;
        for jf in 0..(1usize << lf) {
            let f0 = jf * span_f;
            let f1 = f0 + span_f;
            let mu_f = measure.cdf_quick(f1 as f64 / f_cells as f64)
                - measure.cdf_quick(f0 as f64 / f_cells as f64);
            if mu_f <= 1e-9 {
                continue;
            }
            mu_f_min = mu_f_min.min(mu_f);
            for le in 1..=e_levels {
                let span_e = e_cells >> le;
                for je in 0..(1usize << le) {
                    let e0 = je * span_e;
                    let e1 = e0 + span_e;
                    let mu_e = measure.cdf_quick(e1 as f64 / e_cells as f64)
                        - measure.cdf_quick(e0 as f64 / e_cells as f64);
                    let corr = (rect(e0, e1, f0, f1) - mu_e * mu_f).abs();
                    worst = worst.max(corr / mu_f);
                }
            }
        }
    }
    (worst, mu_f_min)
}

pub fn fallback_gamma(sys: &SystemDescriptor) -> f64 {
    match sys.kind {
        SystemKind::Beta => sys.beta.as_ref().unwrap().to_f64().recip(),
        _ => 0.5,
    }
}

/// Correlation profile c_n over the configured lags, with the fitted decay
/// exponent gamma.
pub fn correlation_profile(
    sys: &SystemDescriptor,
    measure: &Measure,
    opts: &MixingOpts,
) -> Result<MixingReport, RunError> {
    let cells = 1usize << opts.level;
    let density_cap = match sys.kind {
        SystemKind::Gauss => 1.0 / std::f64::consts::LN_2,
        _ => 1.0,
    };
    // f64 tally noise: the staircase digit scan is three orders coarser
    // than rational-breakpoint CDFs
    let tally_noise = match sys.kind {
        SystemKind::Cantor => 3e-7,
        _ => 1e-9,
    };
    let mut points = Vec::new();
    for n in opts.n_min..=opts.n_max {
        let sampled = n >= opts.mc_from;
        let (matrix, floor_raw) = if sampled {
            (joint_matrix_sampled(sys, measure, n, cells, cells, opts)?, f64::NAN)
        } else {
            let (m, omitted) = joint_matrix_enumerated(sys, measure, n, cells, cells, opts)?;
            (m, omitted)
        };
        let (c_n, mu_f_min) = panel_max(measure, &matrix, cells, cells);
        let floor = if sampled {
            // binomial error of the worst cell, ten-fold
            10.0 * (2.0 / (opts.mc_samples as f64 * mu_f_min)).sqrt()
        } else {
            (3.0 * density_cap * floor_raw + tally_noise) / mu_f_min
        };
        points.push(CorrelationPoint { n, c_n, floor, sampled });
    }
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.c_n > p.floor)
        .map(|p| (p.n as f64, p.c_n.ln()))
        .collect();
    let (gamma, source) = if usable.len() >= 2 {
        let g = ls_slope(&usable).exp();
        if g < 1.0 {
            (g, GammaSource::Fitted)
        } else {
            (fallback_gamma(sys), GammaSource::Fallback)
        }
    } else if points.iter().all(|p| p.c_n <= p.floor) {
        (fallback_gamma(sys), GammaSource::BelowFloor)
    } else {
        (fallback_gamma(sys), GammaSource::Fallback)
    };
    Ok(MixingReport { points, gamma, source })
}

/// Exact correlation bounds mu(E, T^-n F) - mu(E) mu(F) for one pair of
/// intervals, by exhaustive cylinder enumeration (finite-branch systems
/// only: the Gauss family cannot be enumerated without pruning).
pub fn exact_pair_correlation(
    sys: &SystemDescriptor,
    measure: &Measure,
    n: usize,
    e: &(Exact, Exact),
    f: &(Exact, Exact),
    max_cylinders: usize,
) -> Result<(Exact, Exact), CylinderError> {
    assert!(sys.kind != SystemKind::Gauss, "exact pair correlation needs a complete tiling");
    let enm = enumerate(sys, &EnumerateOpts { depth: n, max_cylinders, prune_len: 0.0 })?;
    let mut joint_lo = Exact::zero();
    let mut joint_hi = Exact::zero();
    for rec in &enm.records {
        let a = rec.map.preimage(&f.0);
        let b = rec.map.preimage(&f.1);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let lo = if lo < rec.interval.0 { rec.interval.0.clone() } else { lo };
        let hi = if hi > rec.interval.1 { rec.interval.1.clone() } else { hi };
        let lo = if lo < e.0 { e.0.clone() } else { lo };
        let hi = if hi > e.1 { e.1.clone() } else { hi };
        if lo >= hi {
            continue;
        }
        let (ml, mh) = measure.interval_mass_bounds(&lo, &hi);
        joint_lo = &joint_lo + &ml;
        joint_hi = &joint_hi + &mh;
    }
    let (el, eh) = measure.interval_mass_bounds(&e.0, &e.1);
    let (fl, fh) = measure.interval_mass_bounds(&f.0, &f.1);
    Ok((&joint_lo - &(&eh * &fh), &joint_hi - &(&el * &fl)))
}
