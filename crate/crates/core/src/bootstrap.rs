//! Wild-bootstrap inference: parameter standard errors and percentile
//! intervals, the Hardle-Mammen specification test, and uniform confidence
//! bands for the parametric curve.
//!
//! One engine run produces all three from the same set of replicate refits.

use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::kernel::{equispaced_grid, evaluation_grid, KernelConfig, Smoother};
use crate::nls::{fit_arrays, predict_curve, FitConfig, FitResult, Form};
use crate::rng::{Domain, StreamKey};
use crate::stats::{quantile_sorted, std_dev};

/// Floor applied to the pointwise replicate standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-10;
/// Largest tolerated share of failed replicate refits.
pub const MAX_FAILURE_SHARE: f64 = 0.10;
pub const MIN_REPLICATES: usize = 99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WildNoise {
    #[default]
    StandardNormal,
    MammenTwoPoint,
    CenteredChiSquare,
}

const SQRT5: f64 = 2.236_067_977_499_79;
pub const MAMMEN_LOW: f64 = -(SQRT5 - 1.0) / 2.0;
pub const MAMMEN_HIGH: f64 = (SQRT5 + 1.0) / 2.0;
pub const MAMMEN_P_LOW: f64 = (SQRT5 + 1.0) / (2.0 * SQRT5);

impl WildNoise {
    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            WildNoise::StandardNormal => StandardNormal.sample(rng),
            WildNoise::MammenTwoPoint => {
                if rng.random::<f64>() < MAMMEN_P_LOW {
                    MAMMEN_LOW
                } else {
                    MAMMEN_HIGH
                }
            }
            WildNoise::CenteredChiSquare => {
                let chi = ChiSquared::new(1.0).expect("one degree of freedom");
                (chi.sample(rng) - 1.0) / std::f64::consts::SQRT_2
            }
        }
    }
}

impl FromStr for WildNoise {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "standard_normal" | "normal" => Ok(WildNoise::StandardNormal),
            "mammen_two_point" | "mammen" => Ok(WildNoise::MammenTwoPoint),
            "centered_chi_square" | "chi_square" => Ok(WildNoise::CenteredChiSquare),
            _ => Err(Error::param(format!("unknown noise law '{s}'"))),
        }
    }
}

/// `y_hat + (y - y_hat) * eps` with iid multipliers.
pub fn wild_resample<R: Rng + ?Sized>(y: &[f64], y_hat: &[f64], noise: WildNoise, rng: &mut R) -> Vec<f64> {
    assert_eq!(y.len(), y_hat.len(), "response and fit lengths differ");
    y.iter()
        .zip(y_hat)
        .map(|(y, f)| f + (y - f) * noise.draw(rng))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub noise: WildNoise,
    pub seed: u64,
    /// Coverage level of the uniform bands.
    pub level: f64,
}

impl BootstrapConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            replicates: 1000,
            noise: WildNoise::StandardNormal,
            seed,
            level: 0.99,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < MIN_REPLICATES {
            return Err(Error::param(format!(
                "{} replicates; at least {MIN_REPLICATES} are required",
                self.replicates
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::param(format!("level {} outside (0,1)", self.level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    #[serde(rename = "B")]
    pub b: usize,
    pub noise: WildNoise,
    pub seed: u64,
    pub failures: usize,
    /// Successful replicate estimates in replicate order.
    pub betas_star: Vec<[f64; 3]>,
    pub se: [f64; 3],
    pub ci95: [[f64; 2]; 3],
    #[serde(rename = "T_obs")]
    pub t_obs: f64,
    pub p_value: f64,
    pub level: f64,
    #[serde(rename = "q_T")]
    pub q_t: f64,
    /// Band grid: observed `alpha`s merged with the equispaced grid.
    pub grid: Vec<f64>,
    pub fit: Vec<f64>,
    pub sigma_y: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Grid indices where `sigma_y` was floored.
    pub sigma_floored: Vec<usize>,
    pub fit_config_hash: String,
    pub kernel_config_hash: String,
    pub dataset_hash: String,
}

impl BootstrapSummary {
    /// Band half-widths at another coverage level, from stored replicates.
    pub fn half_width_at(&self, level: f64, t_star: &[f64]) -> Vec<f64> {
        let mut t = t_star.to_vec();
        t.sort_by(f64::total_cmp);
        let q = quantile_sorted(&t, level);
        self.sigma_y.iter().map(|s| q * s).collect()
    }
}

/// Per-replicate output.
struct Replicate {
    beta: [f64; 3],
    t_stat: f64,
    curve: Vec<f64>,
}

fn hash_json<T: Serialize>(v: &T) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(v).expect("serializable")))
}

/// Full engine: replicate refits shared by the test, the bands and the
/// parameter intervals.
pub fn run(
    sample: &Sample,
    fit: &FitResult,
    fit_cfg: &FitConfig,
    kernel_cfg: &KernelConfig,
    cfg: &BootstrapConfig,
) -> Result<(BootstrapSummary, Vec<f64>)> {
    cfg.validate()?;
    kernel_cfg.validate()?;
    if !fit.converged {
        return Err(Error::Inference("bootstrap needs a converged fit".into()));
    }
    if fit.n_obs != sample.len() || (!fit.dataset_hash.is_empty() && fit.dataset_hash != sample.hash()) {
        return Err(Error::Inference("fit does not belong to this sample".into()));
    }
    if fit.beta.model != fit_cfg.model || fit.form != fit_cfg.form {
        return Err(Error::Inference(
            "fit and configuration disagree on the model".into(),
        ));
    }
    let alphas = sample.alphas();
    let ys = sample.ys();

    let test_smoother = Smoother::new(
        alphas,
        equispaced_grid(alphas, kernel_cfg.grid_points),
        kernel_cfg,
    )?;
    let band_grid = evaluation_grid(alphas, kernel_cfg.grid_points);
    let p_hat = predict_curve(&fit.beta, &band_grid)?;

    let stat = |y: &[f64], fitted: &[f64]| -> f64 {
        let diff: Vec<f64> = y.iter().zip(fitted).map(|(a, b)| a - b).collect();
        test_smoother.apply(&diff).iter().map(|d| d * d).sum()
    };
    let t_obs = stat(ys, &fit.fitted);
    let smoothed_fit = test_smoother.apply(&fit.fitted);
    let tie_tol = 1e-10 * smoothed_fit.iter().map(|v| v * v).sum::<f64>();

    // Resampling happens on the estimation scale.
    let (z, z_hat): (Vec<f64>, Vec<f64>) = match fit.form {
        Form::Level => (ys.to_vec(), fit.fitted.clone()),
        Form::Log => (
            ys.iter().map(|v| v.ln()).collect(),
            fit.fitted.iter().map(|v| v.ln()).collect(),
        ),
    };
    let warm = [fit.beta.as_array()];
    let key = StreamKey::new(cfg.seed);

    let replicates: Vec<Option<Replicate>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng: ChaCha8Rng = key.stream(Domain::Bootstrap, b as u64, 0);
            let z_star = wild_resample(&z, &z_hat, cfg.noise, &mut rng);
            let y_star: Vec<f64> = match fit.form {
                Form::Level => z_star,
                Form::Log => z_star.iter().map(|v| v.exp()).collect(),
            };
            let refit = fit_arrays(alphas, &y_star, fit_cfg, &warm).ok()?;
            if !refit.ssr.is_finite() {
                return None;
            }
            let curve = predict_curve(&refit.beta, &band_grid).ok()?;
            Some(Replicate {
                beta: refit.beta.as_array(),
                t_stat: stat(&y_star, &refit.fitted),
                curve,
            })
        })
        .collect();

    let ok: Vec<Replicate> = replicates.into_iter().flatten().collect();
    let failures = cfg.replicates - ok.len();
    if failures as f64 > MAX_FAILURE_SHARE * cfg.replicates as f64 {
        return Err(Error::Inference(format!(
            "{failures} of {} replicate refits failed",
            cfg.replicates
        )));
    }
    let b_ok = ok.len();

    let exceed = ok.iter().filter(|r| r.t_stat >= t_obs - tie_tol).count();
    let p_value = (1 + exceed) as f64 / (b_ok + 1) as f64;

    let mut se = [0.0; 3];
    let mut ci95 = [[0.0; 2]; 3];
    for k in 0..3 {
        let mut col: Vec<f64> = ok.iter().map(|r| r.beta[k]).collect();
        se[k] = std_dev(&col);
        col.sort_by(f64::total_cmp);
        ci95[k] = [quantile_sorted(&col, 0.025), quantile_sorted(&col, 0.975)];
    }

    let mut sigma_y = Vec::with_capacity(band_grid.len());
    let mut sigma_floored = Vec::new();
    let mut column = vec![0.0; b_ok];
    for g in 0..band_grid.len() {
        for (c, r) in column.iter_mut().zip(&ok) {
            *c = r.curve[g];
        }
        let s = std_dev(&column);
        if s.is_nan() || s < SIGMA_FLOOR {
            sigma_floored.push(g);
            sigma_y.push(SIGMA_FLOOR);
        } else {
            sigma_y.push(s);
        }
    }
    let mut t_star: Vec<f64> = ok
        .iter()
        .map(|r| {
            r.curve
                .iter()
                .zip(&p_hat)
                .zip(&sigma_y)
                .map(|((c, p), s)| (c - p).abs() / s)
                .fold(0.0, f64::max)
        })
        .collect();
    let t_star_ordered = t_star.clone();
    t_star.sort_by(f64::total_cmp);
    let q_t = quantile_sorted(&t_star, cfg.level);
    let lower = p_hat.iter().zip(&sigma_y).map(|(p, s)| p - q_t * s).collect();
    let upper = p_hat.iter().zip(&sigma_y).map(|(p, s)| p + q_t * s).collect();

    Ok((
        BootstrapSummary {
            b: cfg.replicates,
            noise: cfg.noise,
            seed: cfg.seed,
            failures,
            betas_star: ok.iter().map(|r| r.beta).collect(),
            se,
            ci95,
            t_obs,
            p_value,
            level: cfg.level,
            q_t,
            grid: band_grid,
            fit: p_hat,
            sigma_y,
            lower,
            upper,
            sigma_floored,
            fit_config_hash: fit_cfg.fingerprint(),
            kernel_config_hash: hash_json(kernel_cfg),
            dataset_hash: sample.hash().to_string(),
        },
        t_star_ordered,
    ))
}

/// Specification test: `(T_obs, p_value)`.
pub fn hm_test(
    sample: &Sample,
    fit: &FitResult,
    fit_cfg: &FitConfig,
    kernel_cfg: &KernelConfig,
    cfg: &BootstrapConfig,
) -> Result<(f64, f64)> {
    let (s, _) = run(sample, fit, fit_cfg, kernel_cfg, cfg)?;
    Ok((s.t_obs, s.p_value))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    pub grid: Vec<f64>,
    pub fit: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub sigma_y: Vec<f64>,
    pub q_t: f64,
}

/// Uniform confidence bands at `cfg.level`.
pub fn uniform_bands(
    sample: &Sample,
    fit: &FitResult,
    fit_cfg: &FitConfig,
    kernel_cfg: &KernelConfig,
    cfg: &BootstrapConfig,
) -> Result<Bands> {
    let (s, _) = run(sample, fit, fit_cfg, kernel_cfg, cfg)?;
    Ok(Bands {
        grid: s.grid,
        fit: s.fit,
        lower: s.lower,
        upper: s.upper,
        sigma_y: s.sigma_y,
        q_t: s.q_t,
    })
}

/// Standard errors and 95% percentile intervals per coefficient.
pub fn param_inference(
    sample: &Sample,
    fit: &FitResult,
    fit_cfg: &FitConfig,
    kernel_cfg: &KernelConfig,
    cfg: &BootstrapConfig,
) -> Result<([f64; 3], [[f64; 2]; 3])> {
    let (s, _) = run(sample, fit, fit_cfg, kernel_cfg, cfg)?;
    Ok((s.se, s.ci95))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavioral::{BehavioralParams, ModelKind};
    use crate::nls::fit;
    use rand::SeedableRng;

    fn moments(noise: WildNoise, n: usize) -> (f64, f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..n).map(|_| noise.draw(&mut rng)).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
        let t = xs.iter().map(|x| x.powi(3)).sum::<f64>() / n as f64;
        (m, v, t)
    }

    #[test]
    fn mammen_law_exact_moments() {
        let p = MAMMEN_P_LOW;
        assert!((MAMMEN_LOW + 0.618034).abs() < 1e-6 && (MAMMEN_HIGH - 1.618034).abs() < 1e-6);
        assert!((p - 0.723607).abs() < 1e-6);
        let mean = p * MAMMEN_LOW + (1.0 - p) * MAMMEN_HIGH;
        let var = p * MAMMEN_LOW.powi(2) + (1.0 - p) * MAMMEN_HIGH.powi(2);
        let third = p * MAMMEN_LOW.powi(3) + (1.0 - p) * MAMMEN_HIGH.powi(3);
        assert!(mean.abs() < 1e-15 && (var - 1.0).abs() < 1e-15 && (third - 1.0).abs() < 1e-14);
    }

    #[test]
    fn noise_laws_have_unit_moments() {
        let n = 1_000_000;
        for noise in [
            WildNoise::StandardNormal,
            WildNoise::MammenTwoPoint,
            WildNoise::CenteredChiSquare,
        ] {
            let (m, v, _) = moments(noise, n);
            // 4 standard errors; the variance SE uses the fourth moment (15 for chi-square).
            assert!(m.abs() < 4.0 / (n as f64).sqrt(), "{noise:?} mean {m}");
            assert!(
                (v - 1.0).abs() < 4.0 * (15.0f64 / n as f64).sqrt(),
                "{noise:?} var {v}"
            );
        }
        let (_, _, t) = moments(WildNoise::MammenTwoPoint, n);
        assert!((t - 1.0).abs() < 0.02, "third moment {t}");
    }

    #[test]
    fn zero_residuals_reproduce_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = [0.1, 0.2, 0.3];
        assert_eq!(
            wild_resample(&f, &f, WildNoise::StandardNormal, &mut rng),
            f.to_vec()
        );
    }

    #[test]
    fn resample_mean_matches_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (y, f) = ([0.5], [0.2]);
        let n = 100_000;
        let m = (0..n)
            .map(|_| wild_resample(&y, &f, WildNoise::MammenTwoPoint, &mut rng)[0])
            .sum::<f64>()
            / n as f64;
        assert!((m - 0.2).abs() < 3.0 * 0.3 / (n as f64).sqrt());
    }

    fn basque_sample(noise_sd: f64, n: usize, seed: u64) -> Sample {
        let beta = BehavioralParams::new(0.890, 0.030, 0.089, ModelKind::Pke2).unwrap();
        let alphas: Vec<f64> = (0..n).map(|i| 0.05 + 0.9 * i as f64 / (n - 1) as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ys = predict_curve(&beta, &alphas)
            .unwrap()
            .into_iter()
            .map(|p| {
                let z: f64 = StandardNormal.sample(&mut rng);
                p + noise_sd * z
            })
            .collect();
        Sample::new(alphas, ys).unwrap()
    }

    fn small_cfg(seed: u64) -> BootstrapConfig {
        BootstrapConfig {
            replicates: 99,
            noise: WildNoise::StandardNormal,
            seed,
            level: 0.99,
        }
    }

    #[test]
    fn noiseless_null_gives_unit_p_value_and_collapsed_bands() {
        let s = basque_sample(0.0, 40, 0);
        let fc = FitConfig::new(ModelKind::Pke2, Form::Level);
        let f = fit(&s, &fc).unwrap();
        let (sum, _) = run(&s, &f, &fc, &KernelConfig::default(), &small_cfg(1)).unwrap();
        assert_eq!(sum.p_value, 1.0);
        assert!(sum.t_obs < 1e-12);
        assert!(sum.se.iter().all(|s| *s < 1e-6), "{:?}", sum.se);
        for ((l, u), p) in sum.lower.iter().zip(&sum.upper).zip(&sum.fit) {
            assert!((l - p).abs() < 1e-6 && (u - p).abs() < 1e-6);
        }
    }

    #[test]
    fn reproducible_and_level_monotone() {
        let s = basque_sample(0.01, 40, 2);
        let fc = FitConfig::new(ModelKind::Pke2, Form::Level);
        let f = fit(&s, &fc).unwrap();
        let kc = KernelConfig::default();
        let (a, t_star) = run(&s, &f, &fc, &kc, &small_cfg(9)).unwrap();
        let (b, _) = run(&s, &f, &fc, &kc, &small_cfg(9)).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.p_value));
        assert!(a.se.iter().all(|s| *s >= 0.0));
        assert!(a.ci95.iter().all(|c| c[0] <= c[1]));
        let w90 = a.half_width_at(0.90, &t_star);
        let w99 = a.half_width_at(0.99, &t_star);
        assert!(w90.iter().zip(&w99).all(|(x, y)| x <= y));
        assert_eq!(a.fit_config_hash, fc.fingerprint());
    }

    #[test]
    fn rejects_small_b_and_foreign_fit() {
        let s = basque_sample(0.01, 30, 4);
        let fc = FitConfig::new(ModelKind::Pke2, Form::Level);
        let f = fit(&s, &fc).unwrap();
        let mut c = small_cfg(1);
        c.replicates = 50;
        assert!(matches!(
            run(&s, &f, &fc, &KernelConfig::default(), &c),
            Err(Error::Parameter(_))
        ));
        let other = basque_sample(0.01, 30, 5);
        assert!(run(&other, &f, &fc, &KernelConfig::default(), &small_cfg(1)).is_err());
    }
}
