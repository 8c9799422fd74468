//! Sub-gamma envelopes `lambda^2 v / (2 (1 - lambda c))` over measured
//! complexity-term curves.
//!
//! A fit is one-sided: for each candidate `c` the smallest `v` whose envelope
//! dominates every grid point is found in closed form, and the candidate with
//! the smallest area under the envelope wins. The residual of a returned fit
//! is therefore always zero.

use serde::{Deserialize, Serialize};

use crate::math::simpson;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubGammaFit {
    pub v: f64,
    pub c: f64,
    /// `1 / c`: the envelope is defined on `(0, lambda_max)`.
    pub lambda_max: f64,
    /// `max(0, C(lambda) - envelope(lambda))` over the fitted grid.
    pub residual: f64,
}

impl SubGammaFit {
    pub fn envelope(&self, lambda: f64) -> Result<f64> {
        envelope(self.v, self.c, lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Number of log-spaced `c` candidates.
    pub c_candidates: usize,
    /// Smallest `c` candidate; the largest is just below `1 / max lambda`.
    pub c_min: f64,
    /// Simpson panels used for the envelope area.
    pub area_intervals: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { c_candidates: 50, c_min: 1e-8, area_intervals: 512 }
    }
}

/// `lambda^2 v / (2 (1 - lambda c))` for `0 <= lambda < 1/c`.
pub fn envelope(v: f64, c: f64, lambda: f64) -> Result<f64> {
    if !(lambda * c < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda {lambda} is outside the envelope domain (0, {})",
            1.0 / c
        )));
    }
    Ok(lambda * lambda * v / (2.0 * (1.0 - lambda * c)))
}

fn check_grid(grid: &[(f64, f64)]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("sub-gamma fit needs a nonempty grid".into()));
    }
    for &(lambda, value) in grid {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid lambda must be positive, got {lambda}")));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("complexity value at lambda {lambda}")));
        }
    }
    Ok(())
}

/// Smallest `v` for which the envelope with scale `c` dominates the grid.
///
/// Slightly inflated so the dominance survives rounding when re-evaluated.
pub fn fit_fixed_c(grid: &[(f64, f64)], c: f64) -> Result<SubGammaFit> {
    check_grid(grid)?;
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("c must be positive, got {c}")));
    }
    let mut v = f64::MIN_POSITIVE;
    for &(lambda, value) in grid {
        if !(lambda * c < 1.0) {
            return Err(Error::InvalidArgument(format!("grid lambda {lambda} is not below 1/c = {}", 1.0 / c)));
        }
        v = v.max(2.0 * value * (1.0 - lambda * c) / (lambda * lambda));
    }
    let v = v * (1.0 + 4.0 * f64::EPSILON);
    let fit = SubGammaFit { v, c, lambda_max: 1.0 / c, residual: 0.0 };
    Ok(SubGammaFit { residual: residual(&fit, grid), ..fit })
}

/// Minimum-area dominating envelope over the configured `c` candidates.
pub fn fit(grid: &[(f64, f64)], cfg: &FitConfig) -> Result<SubGammaFit> {
    check_grid(grid)?;
    if cfg.c_candidates == 0 || !(cfg.c_min > 0.0) {
        return Err(Error::InvalidArgument("need at least one positive c candidate".into()));
    }
    let lo = grid.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = grid.iter().map(|p| p.0).fold(0.0, f64::max);
    let c_hi = 1.0 / hi;
    if c_hi <= cfg.c_min {
        return Err(Error::InvalidArgument(format!(
            "largest lambda {hi} leaves no c candidates above c_min {}",
            cfg.c_min
        )));
    }
    let ratio = (c_hi / cfg.c_min).ln();
    let mut best: Option<(f64, SubGammaFit)> = None;
    for j in 0..cfg.c_candidates {
        let c = cfg.c_min * (ratio * j as f64 / cfg.c_candidates as f64).exp();
        let candidate = fit_fixed_c(grid, c)?;
        let area = if hi > lo {
            simpson(|l| candidate.v * l * l / (2.0 * (1.0 - l * c)), lo, hi, cfg.area_intervals)
        } else {
            candidate.v
        };
        if best.as_ref().is_none_or(|(a, _)| area < *a) {
            best = Some((area, candidate));
        }
    }
    Ok(best.expect("at least one candidate").1)
}

fn residual(fit: &SubGammaFit, grid: &[(f64, f64)]) -> f64 {
    grid.iter()
        .map(|&(lambda, value)| match envelope(fit.v, fit.c, lambda) {
            Ok(e) => (value - e).max(0.0),
            Err(_) => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

/// True iff every grid point lies on or below the envelope (up to `1e-12`)
/// and inside its domain.
pub fn check(fit: &SubGammaFit, grid: &[(f64, f64)]) -> bool {
    grid.iter().all(|&(lambda, value)| match envelope(fit.v, fit.c, lambda) {
        Ok(e) => value <= e + 1e-12,
        Err(_) => false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_values() {
        assert_eq!(envelope(1.0, 0.5, 1.0).unwrap(), 1.0);
        assert_eq!(envelope(1.0, 0.5, 0.0).unwrap(), 0.0);
        assert!(envelope(1.0, 0.5, 2.0).is_err());
        // Envelope shape with the parameters reported for the residual network.
        let e = envelope(1.0, 1e-5, 1000.0).unwrap();
        assert!((e - 1e6 / (2.0 * 0.99)).abs() < 1e-6);
    }

    #[test]
    fn single_point_fit() {
        // v = 2 * 0.5 * (1 - c) on every candidate, so v -> 1 as c -> 0.
        let grid = [(1.0, 0.5)];
        let f = fit_fixed_c(&grid, 1e-8).unwrap();
        assert!((f.v - 1.0).abs() < 1e-6, "{f:?}");
        let f = fit(&grid, &FitConfig::default()).unwrap();
        assert!((f.v - (1.0 - f.c)).abs() < 1e-12, "{f:?}");
        assert_eq!(f.residual, 0.0);
    }

    #[test]
    fn check_detects_violation() {
        let grid = [(1.0, 0.4), (2.0, 1.9)];
        let fit = fit_fixed_c(&grid, 0.1).unwrap();
        assert!(check(&fit, &grid));
        let bad = [(1.0, 0.4), (2.0, 10.0)];
        assert!(!check(&fit, &bad));
    }

    #[test]
    fn rejects_infinite_points() {
        assert!(fit(&[(1.0, 0.2), (2.0, f64::INFINITY)], &FitConfig::default()).is_err());
        assert!(fit(&[], &FitConfig::default()).is_err());
    }
}
