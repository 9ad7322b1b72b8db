//! Whole-system ages, age-minimizing arrival rates and the WQ/NQ crossing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form;
use crate::models::{build_nq_chain, check_streams, AgeReport, Discipline, SystemConfig};
use crate::shs;
use crate::{Error, Result};

/// Default tolerance on λ for searches.
pub const DEFAULT_TOL: f64 = 1e-4;

/// Crossing search stops only once `|WQ − NQ|` is below this fraction of
/// the total age (and the bracket is below the λ tolerance).
pub const CROSSING_REL_GAP: f64 = 1e-6;

/// Points in the validation scans run before golden-section and bisection.
const SCAN_POINTS: usize = 200;

/// Per-stream and total age for `streams` streams under `discipline`.
///
/// WQ uses the closed form; NQ solves the bufferless chain for each
/// priority depth. The top stream sees the same single-state chain under
/// both disciplines, so it always takes the closed-form value.
pub fn evaluate(cfg: &SystemConfig, streams: usize, discipline: Discipline) -> Result<AgeReport> {
    check_streams(streams)?;
    cfg.validate()?;
    match discipline {
        Discipline::Wq => closed_form::total_wq_age(cfg, streams),
        Discipline::Nq => {
            let per_stream = (0..streams)
                .map(|i| match i {
                    0 => Ok(closed_form::wq_age(cfg, 0)?.age),
                    _ => shs::average_age(&build_nq_chain(cfg, i)?, 0),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AgeReport::new(cfg, Discipline::Nq, per_stream))
        }
    }
}

fn total_age(streams: usize, mu: f64, lambda: f64, discipline: Discipline) -> Result<f64> {
    Ok(evaluate(&SystemConfig::new(lambda, mu)?, streams, discipline)?.total)
}

/// Evaluates the system at every rate of `lambdas`.
pub fn total_age_curve(
    streams: usize,
    mu: f64,
    lambdas: &[f64],
    discipline: Discipline,
) -> Result<Vec<AgeReport>> {
    lambdas
        .par_iter()
        .map(|&l| evaluate(&SystemConfig::new(l, mu)?, streams, discipline))
        .collect()
}

/// `points` rates from `lo` to `hi` inclusive, evenly spaced on a log scale
/// when `log` is set.
pub fn rate_grid(lo: f64, hi: f64, points: usize, log: bool) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "invalid rate range [{lo}, {hi}]"
        )));
    }
    if points == 0 {
        return Err(Error::InvalidConfig("grid needs at least one point".into()));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let step = |k: usize| k as f64 / (points - 1) as f64;
    Ok((0..points)
        .map(|k| {
            if k == points - 1 {
                hi
            } else if log {
                lo * (hi / lo).powf(step(k))
            } else {
                lo + (hi - lo) * step(k)
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumResult {
    #[serde(rename = "N")]
    pub streams: usize,
    pub mu: f64,
    pub discipline: Discipline,
    pub lambda_opt: f64,
    pub age_opt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingResult {
    pub lambda_pass: f64,
    pub bracket: [f64; 2],
    /// Half-width of the final bisection interval.
    pub achieved_tolerance: f64,
}

fn check_bracket(lo: f64, hi: f64, tol: f64) -> Result<()> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::BracketError(format!(
            "need 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    Ok(())
}

fn golden_section<F>(f: &F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

/// Rate in `[lo, hi]` minimizing the total age, to within `tol`.
///
/// Runs golden-section search, then cross-checks it against a log-spaced
/// scan of the bracket. If the scan finds a lower age (the curve is not
/// unimodal on the bracket) the search is redone around the best scan
/// point.
pub fn find_optimum(
    streams: usize,
    mu: f64,
    discipline: Discipline,
    (lo, hi): (f64, f64),
    tol: f64,
) -> Result<OptimumResult> {
    check_bracket(lo, hi, tol)?;
    check_streams(streams)?;
    SystemConfig::new(lo, mu)?;
    let f = |l: f64| total_age(streams, mu, l, discipline);

    let probe = tol.min((hi - lo) / 4.0);
    if f(lo + probe)? > f(lo)? {
        return Err(Error::BracketError(format!(
            "total age is increasing at lo = {lo}"
        )));
    }
    if f(hi - probe)? > f(hi)? {
        return Err(Error::BracketError(format!(
            "total age is decreasing at hi = {hi}"
        )));
    }

    let (mut lambda_opt, mut age_opt) = golden_section(&f, lo, hi, tol)?;

    let grid = rate_grid(lo, hi, SCAN_POINTS, true)?;
    let ages = grid.iter().map(|&l| f(l)).collect::<Result<Vec<_>>>()?;
    let (best, &best_age) = ages
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty grid");
    if best_age < age_opt {
        let a = grid[best.saturating_sub(1)];
        let b = grid[(best + 1).min(grid.len() - 1)];
        let (l, age) = golden_section(&f, a, b, tol)?;
        (lambda_opt, age_opt) = if age < best_age {
            (l, age)
        } else {
            (grid[best], best_age)
        };
    }

    Ok(OptimumResult {
        streams,
        mu,
        discipline,
        lambda_opt,
        age_opt,
    })
}

/// Rate at which the WQ and NQ total ages intersect.
///
/// A sign-change scan of `WQ − NQ` first confirms the bracket holds exactly
/// one crossing; bisection then narrows it until the interval half-width is
/// below `tol` and the gap is below [`CROSSING_REL_GAP`] of the total age.
pub fn find_crossing(
    streams: usize,
    mu: f64,
    (lo, hi): (f64, f64),
    tol: f64,
) -> Result<CrossingResult> {
    check_bracket(lo, hi, tol)?;
    check_streams(streams)?;
    SystemConfig::new(lo, mu)?;
    let gap = |l: f64| -> Result<(f64, f64)> {
        let wq = total_age(streams, mu, l, Discipline::Wq)?;
        let nq = total_age(streams, mu, l, Discipline::Nq)?;
        Ok((wq - nq, wq))
    };

    let (f_lo, _) = gap(lo)?;
    let (f_hi, _) = gap(hi)?;
    if f_lo == 0.0 || f_hi == 0.0 || f_lo.signum() == f_hi.signum() {
        return Err(Error::NoSignChange { lo, hi, f_lo, f_hi });
    }

    let grid = rate_grid(lo, hi, SCAN_POINTS, true)?;
    let signs = grid
        .iter()
        .map(|&l| gap(l).map(|(d, _)| d.signum()))
        .collect::<Result<Vec<_>>>()?;
    let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
    if changes > 1 {
        return Err(Error::MultipleCrossings {
            lo,
            hi,
            count: changes,
        });
    }

    let (mut a, mut b) = (lo, hi);
    let mut fa = f_lo;
    let mut mid = 0.5 * (a + b);
    for _ in 0..200 {
        mid = 0.5 * (a + b);
        let (fm, total) = gap(mid)?;
        if 0.5 * (b - a) <= tol && fm.abs() <= CROSSING_REL_GAP * total {
            break;
        }
        if fm == 0.0 || mid <= a || mid >= b {
            break;
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }

    Ok(CrossingResult {
        lambda_pass: mid,
        bracket: [lo, hi],
        achieved_tolerance: 0.5 * (b - a),
    })
}

/// One row of the WQ/NQ comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    #[serde(rename = "N")]
    pub streams: usize,
    pub mu: f64,
    pub wq: OptimumResult,
    pub nq: OptimumResult,
    pub crossing: CrossingResult,
}

/// Stream counts of the standard comparison table.
pub const TABLE_STREAMS: [usize; 3] = [3, 5, 8];
/// Bracket searched for the age-minimizing rate.
pub const OPTIMUM_BRACKET: (f64, f64) = (0.01, 3.0);
/// Bracket searched for the crossing.
pub const CROSSING_BRACKET: (f64, f64) = (0.05, 10.0);

/// Optimum of both disciplines and the crossing for each stream count.
pub fn comparison_table(stream_counts: &[usize], mu: f64, tol: f64) -> Result<Vec<ComparisonRow>> {
    stream_counts
        .iter()
        .map(|&n| {
            // Brackets are given for μ = 1; rates scale with μ.
            let scale = |(a, b): (f64, f64)| (a * mu, b * mu);
            Ok(ComparisonRow {
                streams: n,
                mu,
                wq: find_optimum(n, mu, Discipline::Wq, scale(OPTIMUM_BRACKET), tol)?,
                nq: find_optimum(n, mu, Discipline::Nq, scale(OPTIMUM_BRACKET), tol)?,
                crossing: find_crossing(n, mu, scale(CROSSING_BRACKET), tol)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(rate_grid(1.0, 3.0, 3, false).unwrap(), vec![1.0, 2.0, 3.0]);
        let g = rate_grid(0.1, 10.0, 3, true).unwrap();
        assert!((g[1] - 1.0).abs() < 1e-12 && g[2] == 10.0);
        assert!(rate_grid(0.0, 1.0, 3, true).is_err());
        assert!(rate_grid(1.0, 2.0, 0, true).is_err());
    }

    #[test]
    fn single_stream_disciplines_agree() {
        let ls = rate_grid(0.05, 20.0, 25, true).unwrap();
        let wq = total_age_curve(1, 1.0, &ls, Discipline::Wq).unwrap();
        let nq = total_age_curve(1, 1.0, &ls, Discipline::Nq).unwrap();
        for (a, b) in wq.iter().zip(&nq) {
            assert!((a.total - b.total).abs() <= 1e-12 * a.total);
        }
    }

    #[test]
    fn nq_total_at_table_point() {
        let r = evaluate(&SystemConfig::new(0.62, 1.0).unwrap(), 3, Discipline::Nq).unwrap();
        assert!((r.total - 19.71).abs() / 19.71 < 0.01, "{}", r.total);
        let small = SystemConfig::new(0.05, 1.0).unwrap();
        assert!(
            evaluate(&small, 3, Discipline::Wq).unwrap().total
                < evaluate(&small, 3, Discipline::Nq).unwrap().total
        );
    }

    #[test]
    fn golden_section_on_parabola() {
        let (x, fx) =
            golden_section(&|x: f64| Ok((x - 0.3).powi(2) + 1.0), 0.0, 2.0, 1e-8).unwrap();
        assert!((x - 0.3).abs() < 1e-8 && (fx - 1.0).abs() < 1e-15);
    }

    #[test]
    fn optimum_bracket_errors() {
        // The N = 3 minimum sits near 0.62; [1, 3] only sees the rising side.
        let err = find_optimum(3, 1.0, Discipline::Wq, (1.0, 3.0), 1e-4).unwrap_err();
        assert!(matches!(err, Error::BracketError(_)), "{err}");
        let err = find_optimum(3, 1.0, Discipline::Wq, (0.05, 0.3), 1e-4).unwrap_err();
        assert!(matches!(err, Error::BracketError(_)), "{err}");
        assert!(find_optimum(3, 1.0, Discipline::Wq, (2.0, 1.0), 1e-4).is_err());
    }

    #[test]
    fn optimum_is_a_local_minimum() {
        let r = find_optimum(3, 1.0, Discipline::Wq, (0.01, 3.0), 1e-4).unwrap();
        let f = |l| total_age(3, 1.0, l, Discipline::Wq).unwrap();
        assert!(r.age_opt <= f(r.lambda_opt + 1e-3));
        assert!(r.age_opt <= f(r.lambda_opt - 1e-3));
        assert!((r.age_opt - f(r.lambda_opt)).abs() < 1e-12);
    }

    #[test]
    fn crossing_errors() {
        let err = find_crossing(3, 1.0, (0.1, 1.0), 1e-4).unwrap_err();
        assert!(matches!(err, Error::NoSignChange { .. }), "{err}");
        assert!(matches!(
            find_crossing(1, 1.0, (0.1, 1.0), 1e-4),
            Err(Error::NoSignChange { .. })
        ));
    }

    #[test]
    fn crossing_meets_gap_tolerance() {
        let c = find_crossing(3, 1.0, (1.0, 5.0), 1e-4).unwrap();
        let wq = total_age(3, 1.0, c.lambda_pass, Discipline::Wq).unwrap();
        let nq = total_age(3, 1.0, c.lambda_pass, Discipline::Nq).unwrap();
        assert!((wq - nq).abs() <= CROSSING_REL_GAP * wq);
        assert!(c.achieved_tolerance <= 1e-4);
        assert!(1.0 < c.lambda_pass && c.lambda_pass < 5.0);
    }

    #[test]
    fn json_shapes() {
        let r = find_optimum(3, 1.0, Discipline::Nq, (0.01, 3.0), 1e-3).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in ["N", "mu", "discipline", "lambda_opt", "age_opt"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["discipline"], "nq");
        let c = find_crossing(3, 1.0, (1.0, 5.0), 1e-3).unwrap();
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(v["bracket"], serde_json::json!([1.0, 5.0]));
        assert!(v["lambda_pass"].is_f64());
    }
}
