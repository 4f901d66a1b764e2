//! Gaussian kernel density estimation for document-position figures.
//!
//! Produces per-group density curves (e.g. positions by party) on one shared
//! grid so curves are directly comparable. Bandwidths default to Silverman's
//! rule per group, floored so degenerate groups yield narrow spikes instead
//! of failing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::math;
use crate::Result;

/// Number of evaluation points on the shared grid.
pub const GRID_POINTS: usize = 512;
/// Lower bound on any bandwidth.
pub const BANDWIDTH_FLOOR: f64 = 1e-3;

/// A kernel density curve for one group of observations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityCurve {
    /// Group label.
    pub label: String,
    /// Number of observations in the group.
    pub n: usize,
    /// Bandwidth used for this group.
    pub bandwidth: f64,
    /// Density values, one per grid point.
    pub density: Vec<f64>,
}

/// Per-group density curves on a shared evaluation grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupDensities {
    /// Shared evaluation grid, ascending.
    pub grid: Vec<f64>,
    /// One curve per group, ordered by label.
    pub curves: Vec<DensityCurve>,
}

/// Silverman's rule-of-thumb bandwidth: `0.9·min(s, IQR/1.34)·n^(−1/5)` with
/// the sample standard deviation `s`, floored at [`BANDWIDTH_FLOOR`].
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let spread = math::sd_sample(xs).min(math::iqr(xs) / 1.34);
    (0.9 * spread * n.powf(-0.2)).max(BANDWIDTH_FLOOR)
}

/// Gaussian-kernel densities per group on a shared 512-point grid spanning
/// `[min − 3·h_max, max + 3·h_max]` over all observations, where `h_max` is
/// the largest group bandwidth. `bandwidth` overrides Silverman's rule for
/// every group. Each group needs at least two observations.
pub fn density_by_group(
    values: &[f64],
    labels: &[String],
    bandwidth: Option<f64>,
) -> Result<GroupDensities> {
    if values.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values for {} labels",
            values.len(),
            labels.len()
        )));
    }
    if values.is_empty() {
        return Err(Error::NoDocuments);
    }
    if let Some(h) = bandwidth {
        if h.is_nan() || h <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "bandwidth must be > 0, got {h}"
            )));
        }
    }

    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (value, label) in values.iter().zip(labels) {
        groups.entry(label.as_str()).or_default().push(*value);
    }
    for (label, xs) in &groups {
        if xs.len() < 2 {
            return Err(Error::GroupTooSmall {
                label: (*label).to_string(),
            });
        }
    }

    let bandwidths: Vec<f64> = groups
        .values()
        .map(|xs| {
            bandwidth
                .unwrap_or_else(|| silverman_bandwidth(xs))
                .max(BANDWIDTH_FLOOR)
        })
        .collect();
    let h_max = bandwidths.iter().cloned().fold(f64::MIN, f64::max);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min) - 3.0 * h_max;
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h_max;
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo + step * i as f64).collect();

    let curves = groups
        .iter()
        .zip(&bandwidths)
        .map(|((label, xs), &h)| {
            let norm = 1.0 / (xs.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
            let density = grid
                .iter()
                .map(|&g| {
                    let mut acc = 0.0;
                    for &x in xs {
                        let u = (g - x) / h;
                        acc += (-0.5 * u * u).exp();
                    }
                    acc * norm
                })
                .collect();
            DensityCurve {
                label: (*label).to_string(),
                n: xs.len(),
                bandwidth: h,
                density,
            }
        })
        .collect();

    Ok(GroupDensities { grid, curves })
}

/// Trapezoid-rule integral of a curve over the grid.
pub fn trapezoid(grid: &[f64], density: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..grid.len() {
        acc += 0.5 * (density[i] + density[i - 1]) * (grid[i] - grid[i - 1]);
    }
    acc
}

/// Number of interior local maxima whose height is at least `rel_threshold`
/// times the curve's peak. A flat run counts as one maximum when the curve
/// rises into it and falls after it (a symmetric peak can land exactly
/// between two equal grid values).
pub fn local_maxima(density: &[f64], rel_threshold: f64) -> usize {
    let peak = density.iter().cloned().fold(f64::MIN, f64::max);
    let cutoff = rel_threshold * peak;
    let n = density.len();
    let mut count = 0;
    let mut i = 1;
    while i + 1 < n {
        if density[i] > density[i - 1] && density[i] >= cutoff {
            let mut j = i;
            while j + 1 < n && density[j + 1] == density[j] {
                j += 1;
            }
            if j + 1 < n && density[j + 1] < density[i] {
                count += 1;
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn silverman_matches_hand_value_and_floors() {
        // For (0,1,2,3): sample sd = 1.29099…, IQR/1.34 = 1.11940…;
        // h = 0.9·1.11940…·4^(−1/5), recomputed by hand.
        let h = silverman_bandwidth(&[0.0, 1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(h, 0.7635139420854616, epsilon = 1e-12);
        assert_eq!(silverman_bandwidth(&[5.0, 5.0, 5.0]), BANDWIDTH_FLOOR);
    }

    /// Four points, fixed bandwidth: densities must equal the directly
    /// hand-summed kernels at every grid point.
    #[test]
    fn densities_equal_direct_kernel_sums() {
        let xs = [-1.0, -0.5, 0.25, 2.0];
        let labels: Vec<String> = vec!["g".into(); 4];
        let h = 0.4;
        let out = density_by_group(&xs, &labels, Some(h)).unwrap();
        assert_eq!(out.grid.len(), GRID_POINTS);
        assert_abs_diff_eq!(out.grid[0], -1.0 - 3.0 * h, epsilon = 1e-12);
        assert_abs_diff_eq!(out.grid[511], 2.0 + 3.0 * h, epsilon = 1e-12);
        let curve = &out.curves[0];
        for (g, d) in out.grid.iter().zip(&curve.density) {
            let expect: f64 = xs
                .iter()
                .map(|x| {
                    (-0.5 * ((g - x) / h) * ((g - x) / h)).exp()
                        / (4.0 * h * (2.0 * std::f64::consts::PI).sqrt())
                })
                .sum();
            assert_abs_diff_eq!(*d, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn curves_integrate_to_one() {
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            values.push((i as f64 * 0.37).sin() * 1.8);
            labels.push(if i % 2 == 0 {
                "a".to_string()
            } else {
                "b".to_string()
            });
        }
        let out = density_by_group(&values, &labels, None).unwrap();
        for curve in &out.curves {
            let integral = trapezoid(&out.grid, &curve.density);
            assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-3);
        }
    }

    #[test]
    fn groups_are_ordered_and_small_groups_fail() {
        let values = [0.0, 1.0, 2.0];
        let labels: Vec<String> = vec!["z".into(), "a".into(), "z".into()];
        let err = density_by_group(&values, &labels, None).unwrap_err();
        match err {
            Error::GroupTooSmall { label } => assert_eq!(label, "a"),
            other => panic!("expected GroupTooSmall, got {other:?}"),
        }

        let labels: Vec<String> = vec!["z".into(), "a".into(), "a".into(), "z".into()];
        let out = density_by_group(&[0.0, 1.0, 2.0, 3.0], &labels, None).unwrap();
        assert_eq!(out.curves[0].label, "a");
        assert_eq!(out.curves[1].label, "z");
    }

    #[test]
    fn degenerate_group_becomes_a_spike() {
        let values = [1.5, 1.5, 1.5];
        let labels: Vec<String> = vec!["c".into(); 3];
        let out = density_by_group(&values, &labels, None).unwrap();
        assert_eq!(out.curves[0].bandwidth, BANDWIDTH_FLOOR);
        // The whole spike sits at the grid boundary, so the grid captures
        // exactly the ±3σ mass of the kernel (erf(3/√2) ≈ 0.99730); curves
        // with interior points are unaffected by this truncation.
        let integral = trapezoid(&out.grid, &out.curves[0].density);
        assert_abs_diff_eq!(integral, 0.9973002039367398, epsilon = 1e-3);
        assert_eq!(local_maxima(&out.curves[0].density, 0.1), 1);
    }

    #[test]
    fn bimodal_sample_has_two_maxima() {
        let mut values = Vec::new();
        for i in 0..12 {
            values.push(-2.0 + 0.05 * i as f64);
            values.push(2.0 + 0.05 * i as f64);
        }
        let labels: Vec<String> = vec!["p".into(); values.len()];
        let out = density_by_group(&values, &labels, None).unwrap();
        assert_eq!(local_maxima(&out.curves[0].density, 0.1), 2);
        // A single cluster has one maximum.
        let half: Vec<f64> = values.iter().cloned().filter(|v| *v < 0.0).collect();
        let labels: Vec<String> = vec!["p".into(); half.len()];
        let out = density_by_group(&half, &labels, None).unwrap();
        assert_eq!(local_maxima(&out.curves[0].density, 0.1), 1);
    }
}
