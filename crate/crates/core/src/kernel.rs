//! Local linear kernel regression with an Epanechnikov kernel and
//! nearest-neighbour local bandwidths.
//!
//! The estimator is linear in the responses, so every fit is expressed as a
//! smoother matrix `L` (grid x observations) that can be reused across
//! bootstrap replicates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bandwidth floor.
pub const MIN_BANDWIDTH: f64 = 1e-6;
/// Factor applied to the occupancy distance when a window is too sparse.
pub const INFLATION: f64 = 1.1;

pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() < 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub nn_fraction: f64,
    /// Minimum number of distinct `alpha`s inside every window; 0 disables
    /// inflation.
    pub min_points: usize,
    /// Size of the equispaced part of the evaluation grid.
    pub grid_points: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            nn_fraction: 0.25,
            min_points: 3,
            grid_points: 201,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nn_fraction > 0.0 && self.nn_fraction <= 1.0) {
            return Err(Error::param(format!(
                "nn_fraction {} outside (0,1]",
                self.nn_fraction
            )));
        }
        if self.grid_points < 2 {
            return Err(Error::param("grid_points must be at least 2"));
        }
        Ok(())
    }
}

fn distinct_sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Bandwidth at `x`: distance to the k-th nearest observation with
/// `k = ceil(nn_fraction * n)`, widened when fewer than `min_points`
/// distinct `alpha`s would receive positive weight.
pub fn local_bandwidth(x: f64, alphas: &[f64], cfg: &KernelConfig) -> Result<f64> {
    cfg.validate()?;
    if alphas.is_empty() {
        return Err(Error::data("bandwidth needs at least one observation"));
    }
    let distinct = distinct_sorted(alphas.to_vec());
    if distinct.len() < cfg.min_points.max(2) {
        return Err(Error::data(format!(
            "{} distinct alpha values; the smoother needs at least {}",
            distinct.len(),
            cfg.min_points.max(2)
        )));
    }
    let mut dist: Vec<f64> = alphas.iter().map(|a| (a - x).abs()).collect();
    dist.sort_by(f64::total_cmp);
    let k = ((cfg.nn_fraction * alphas.len() as f64).ceil() as usize).clamp(1, alphas.len());
    let mut h = dist[k - 1].max(MIN_BANDWIDTH);

    if cfg.min_points > 0 {
        let inside = distinct.iter().filter(|a| (*a - x).abs() < h).count();
        if inside < cfg.min_points {
            let mut ddist: Vec<f64> = distinct.iter().map(|a| (a - x).abs()).collect();
            ddist.sort_by(f64::total_cmp);
            h = (ddist[cfg.min_points - 1] * INFLATION).max(h).max(MIN_BANDWIDTH);
        }
    }
    Ok(h)
}

/// Smoother weights `l` at `x` with bandwidth `h`: `g_hat(x) = sum_j l_j y_j`.
/// The flag is set when the local design is singular and the weighted mean
/// is used instead.
pub fn local_linear_weights(x: f64, h: f64, alphas: &[f64]) -> (Vec<f64>, bool) {
    let w: Vec<f64> = alphas.iter().map(|a| epanechnikov((a - x) / h)).collect();
    let s0: f64 = w.iter().sum();
    if s0 <= 0.0 {
        return (vec![0.0; alphas.len()], true);
    }
    let dbar = w.iter().zip(alphas).map(|(w, a)| w * (a - x)).sum::<f64>() / s0;
    let v: f64 = w
        .iter()
        .zip(alphas)
        .map(|(w, a)| {
            let c = a - x - dbar;
            w * c * c
        })
        .sum();
    if v <= 1e-12 * s0 * h * h {
        return (w.iter().map(|w| w / s0).collect(), true);
    }
    let l = w
        .iter()
        .zip(alphas)
        .map(|(w, a)| w / s0 - dbar * w * (a - x - dbar) / v)
        .collect();
    (l, false)
}

/// Local linear estimate at `x` for a given bandwidth.
pub fn local_linear_at(x: f64, h: f64, alphas: &[f64], ys: &[f64]) -> f64 {
    let (l, _) = local_linear_weights(x, h, alphas);
    l.iter().zip(ys).map(|(l, y)| l * y).sum()
}

/// `points` equispaced values spanning `[min alpha, max alpha]`.
pub fn equispaced_grid(alphas: &[f64], points: usize) -> Vec<f64> {
    let lo = alphas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = alphas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..points)
        .map(|i| {
            if i + 1 == points {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (points - 1) as f64
            }
        })
        .collect()
}

/// Equispaced grid merged with the observed `alpha`s, sorted and deduplicated.
pub fn evaluation_grid(alphas: &[f64], points: usize) -> Vec<f64> {
    let mut g = equispaced_grid(alphas, points);
    g.extend_from_slice(alphas);
    distinct_sorted(g)
}

/// Precomputed smoother for fixed design and grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoother {
    pub grid: Vec<f64>,
    pub bandwidths: Vec<f64>,
    pub fallback: Vec<bool>,
    rows: Vec<Vec<f64>>,
}

impl Smoother {
    pub fn new(alphas: &[f64], grid: Vec<f64>, cfg: &KernelConfig) -> Result<Self> {
        let mut bandwidths = Vec::with_capacity(grid.len());
        let mut fallback = Vec::with_capacity(grid.len());
        let mut rows = Vec::with_capacity(grid.len());
        for &x in &grid {
            let h = local_bandwidth(x, alphas, cfg)?;
            let (l, fb) = local_linear_weights(x, h, alphas);
            bandwidths.push(h);
            fallback.push(fb);
            rows.push(l);
        }
        Ok(Self {
            grid,
            bandwidths,
            fallback,
            rows,
        })
    }

    pub fn apply(&self, ys: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().zip(ys).map(|(l, y)| l * y).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonparFit {
    pub grid: Vec<f64>,
    pub g_hat: Vec<f64>,
    pub bandwidths: Vec<f64>,
    /// Grid points where the local constant fallback was used.
    pub fallback: Vec<bool>,
    pub nn_fraction: f64,
    pub dataset_hash: String,
}

/// Local linear fit on the evaluation grid (observed `alpha`s plus the
/// equispaced grid).
pub fn local_linear_fit(alphas: &[f64], ys: &[f64], cfg: &KernelConfig) -> Result<NonparFit> {
    if alphas.len() != ys.len() {
        return Err(Error::data("alpha and response lengths differ"));
    }
    cfg.validate()?;
    if alphas.is_empty() {
        return Err(Error::data("empty sample"));
    }
    let s = Smoother::new(alphas, evaluation_grid(alphas, cfg.grid_points), cfg)?;
    let g_hat = s.apply(ys);
    Ok(NonparFit {
        grid: s.grid,
        g_hat,
        bandwidths: s.bandwidths,
        fallback: s.fallback,
        nn_fraction: cfg.nn_fraction,
        dataset_hash: String::new(),
    })
}

/// Fit of a [`crate::dataset::Sample`], tagged with its hash.
pub fn fit_sample(sample: &crate::dataset::Sample, cfg: &KernelConfig) -> Result<NonparFit> {
    let mut f = local_linear_fit(sample.alphas(), sample.ys(), cfg)?;
    f.dataset_hash = sample.hash().to_string();
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(frac: f64, min_points: usize) -> KernelConfig {
        KernelConfig {
            nn_fraction: frac,
            min_points,
            grid_points: 201,
        }
    }

    #[test]
    fn kernel_values() {
        assert_eq!(epanechnikov(0.0), 0.75);
        assert_eq!(epanechnikov(1.0), 0.0);
        assert_eq!(epanechnikov(-1.0), 0.0);
        assert!((epanechnikov(0.8) - 0.27).abs() < 1e-15);
        assert_eq!(epanechnikov(3.0), 0.0);
    }

    #[test]
    fn bandwidth_examples() {
        let a = [0.1, 0.2, 0.3, 0.4];
        assert!((local_bandwidth(0.25, &a, &cfg(0.5, 0)).unwrap() - 0.05).abs() < 1e-15);
        assert!((local_bandwidth(0.25, &a, &cfg(1.0, 0)).unwrap() - 0.15).abs() < 1e-15);
        assert!(matches!(
            local_bandwidth(0.3, &[0.3; 5], &cfg(0.5, 3)),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn bandwidth_inflation_reaches_min_points() {
        let a = [0.1, 0.2, 0.3, 0.4];
        let h = local_bandwidth(0.25, &a, &cfg(0.5, 3)).unwrap();
        let inside = a.iter().filter(|x| (*x - 0.25f64).abs() < h).count();
        assert!(inside >= 3, "h = {h}");
    }

    #[test]
    fn bandwidth_floor() {
        let a = [0.1, 0.1, 0.1, 0.5, 0.9];
        assert_eq!(local_bandwidth(0.1, &a, &cfg(0.2, 0)).unwrap(), MIN_BANDWIDTH);
    }

    #[test]
    fn three_point_oracle() {
        let g = local_linear_at(0.4, 0.25, &[0.2, 0.4, 0.6], &[0.1, 0.3, 0.2]);
        assert!((g - 0.306 / 1.29).abs() < 1e-12, "{g}");
    }

    #[test]
    fn reproduces_affine_and_constant() {
        let alphas: Vec<f64> = (0..60)
            .map(|i| 0.05 + 0.9 * ((i * 37) % 60) as f64 / 59.0)
            .collect();
        let lin: Vec<f64> = alphas.iter().map(|a| 2.0 * a).collect();
        let fit = local_linear_fit(&alphas, &lin, &KernelConfig::default()).unwrap();
        for (x, g) in fit.grid.iter().zip(&fit.g_hat) {
            assert!((g - 2.0 * x).abs() < 1e-10);
        }
        let fit = local_linear_fit(&alphas, &vec![0.3; 60], &KernelConfig::default()).unwrap();
        assert!(fit.g_hat.iter().all(|g| (g - 0.3).abs() < 1e-12));
    }

    #[test]
    fn locality() {
        let alphas = [0.1, 0.2, 0.3, 0.5, 0.7, 0.9];
        let ys = [0.3, 0.1, 0.4, 0.2, 0.8, 0.5];
        let h = 0.25;
        let full = local_linear_at(0.3, h, &alphas, &ys);
        let near: (Vec<f64>, Vec<f64>) = alphas
            .iter()
            .zip(&ys)
            .filter(|(a, _)| (*a - 0.3f64).abs() < h)
            .map(|(a, y)| (*a, *y))
            .unzip();
        assert!((full - local_linear_at(0.3, h, &near.0, &near.1)).abs() < 1e-14);
    }

    #[test]
    fn singular_window_falls_back() {
        let (l, fb) = local_linear_weights(0.5, 0.1, &[0.5, 0.5, 0.9]);
        assert!(fb);
        assert_eq!(l, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn grid_contains_observations() {
        let a = [0.3, 0.11, 0.9];
        let g = evaluation_grid(&a, 201);
        assert!(a.iter().all(|x| g.contains(x)));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*g.first().unwrap(), 0.11);
        assert_eq!(*g.last().unwrap(), 0.9);
    }

    proptest! {
        #[test]
        fn duplication_invariance(pts in proptest::collection::vec((0.01f64..0.99, -1.0f64..1.0), 8..30)) {
            let (a, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let c = cfg(0.4, 0);
            prop_assume!(local_bandwidth(0.5, &a, &c).is_ok());
            let one = local_linear_fit(&a, &y, &c).unwrap();
            let a2: Vec<f64> = a.iter().chain(&a).copied().collect();
            let y2: Vec<f64> = y.iter().chain(&y).copied().collect();
            let two = local_linear_fit(&a2, &y2, &c).unwrap();
            for (g1, g2) in one.g_hat.iter().zip(&two.g_hat) {
                prop_assert!((g1 - g2).abs() < 1e-12 * (1.0 + g1.abs()));
            }
        }

        #[test]
        fn affine_exactness(slope in -3.0f64..3.0, icpt in -1.0f64..1.0, n in 10usize..50) {
            let a: Vec<f64> = (0..n).map(|i| 0.02 + 0.96 * i as f64 / (n - 1) as f64).collect();
            let y: Vec<f64> = a.iter().map(|x| icpt + slope * x).collect();
            let fit = local_linear_fit(&a, &y, &KernelConfig::default()).unwrap();
            for (x, g) in fit.grid.iter().zip(&fit.g_hat) {
                prop_assert!((g - icpt - slope * x).abs() < 1e-10);
            }
        }
    }
}
