//! Constrained nonlinear least squares for the prediction models.
//!
//! The constraints `beta1 > 0` and `0 < beta3 < 1` are enforced by fitting
//! the unconstrained coordinates `theta = (ln beta1, beta2, logit beta3)`
//! (`beta2 = exp(theta2)` when `beta2 > 0` is imposed). Minimization is a
//! multi-start Nelder-Mead search: every start gets a short exploratory run,
//! then the best few distinct basins are polished by restarted simplex runs
//! and a final Levenberg-Marquardt pass. A single start (warm start) goes
//! straight to Levenberg-Marquardt.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::behavioral::{BehavioralParams, ModelKind, MIN_GAP};
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::simplex::{nelder_mead, SimplexOptions};

pub const MIN_OBSERVATIONS: usize = 10;

const THETA1_BOUND: f64 = 60.0;
const THETA3_BOUND: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    Level,
    Log,
}

impl std::str::FromStr for Form {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "level" => Ok(Form::Level),
            "log" => Ok(Form::Log),
            _ => Err(Error::param(format!("unknown form '{s}' (level or log)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Starts {
    /// 3 x 4 x 3 grid spanning the published estimate regimes.
    Grid,
    List(Vec<[f64; 3]>),
}

pub const GRID_BETA1: [f64; 3] = [0.05, 0.5, 1.0];
pub const GRID_BETA2: [f64; 4] = [-1.5, -0.5, 0.05, 0.5];
pub const GRID_BETA3: [f64; 3] = [0.005, 0.1, 0.3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub model: ModelKind,
    pub form: Form,
    pub starts: Starts,
    /// Relative SSR tolerance of the polishing runs.
    pub tol_ssr: f64,
    /// Objective evaluations per simplex run.
    pub max_iter: usize,
    /// Restrict `beta2 > 0`.
    pub positive_beta2: bool,
}

impl FitConfig {
    pub fn new(model: ModelKind, form: Form) -> Self {
        Self {
            model,
            form,
            starts: Starts::Grid,
            tol_ssr: 1e-12,
            max_iter: 5_000,
            positive_beta2: false,
        }
    }

    /// Start points in beta coordinates, after grid expansion. With
    /// `positive_beta2` starts with `beta2 <= 0` are dropped.
    pub fn expanded_starts(&self) -> Result<Vec<[f64; 3]>> {
        let raw: Vec<[f64; 3]> = match &self.starts {
            Starts::Grid => GRID_BETA1
                .iter()
                .flat_map(|&b1| {
                    GRID_BETA2
                        .iter()
                        .flat_map(move |&b2| GRID_BETA3.iter().map(move |&b3| [b1, b2, b3]))
                })
                .collect(),
            Starts::List(l) => l.clone(),
        };
        let starts: Vec<_> = raw
            .into_iter()
            .filter(|b| b[0] > 0.0 && b[2] > 0.0 && b[2] < 1.0 && b.iter().all(|v| v.is_finite()))
            .filter(|b| !self.positive_beta2 || b[1] > 0.0)
            .collect();
        if starts.is_empty() {
            return Err(Error::param("no admissible start values"));
        }
        Ok(starts)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol_ssr > 0.0 && self.tol_ssr.is_finite()) {
            return Err(Error::param("tol_ssr must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter must be positive"));
        }
        self.expanded_starts().map(|_| ())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta: BehavioralParams,
    pub form: Form,
    pub ssr: f64,
    /// `y - P` in level form, `ln y - ln P` in log form.
    pub residuals: Vec<f64>,
    /// Level-scale predictions at the observed `alpha`s.
    pub fitted: Vec<f64>,
    pub converged: bool,
    pub n_obs: usize,
    pub start_that_won: usize,
    pub evaluations: usize,
    pub dataset_hash: String,
}

impl FitResult {
    /// Any fitted value outside `[0,1]`.
    pub fn out_of_range(&self) -> bool {
        self.fitted.iter().any(|v| !(0.0..=1.0).contains(v))
    }
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn to_beta(theta: &[f64], strict: bool) -> [f64; 3] {
    let b2 = if strict {
        theta[1].clamp(-THETA1_BOUND, THETA1_BOUND).exp()
    } else {
        theta[1]
    };
    [
        theta[0].clamp(-THETA1_BOUND, THETA1_BOUND).exp(),
        b2,
        sigmoid(theta[2].clamp(-THETA3_BOUND, THETA3_BOUND)),
    ]
}

fn to_theta(beta: &[f64; 3], strict: bool) -> [f64; 3] {
    [
        beta[0].ln(),
        if strict { beta[1].ln() } else { beta[1] },
        (beta[2] / (1.0 - beta[2])).ln(),
    ]
}

/// Precomputed design for fast objective evaluation.
pub(crate) struct Design {
    alpha: Vec<f64>,
    ln_alpha: Vec<f64>,
    target: Vec<f64>,
    model: ModelKind,
    form: Form,
}

impl Design {
    pub(crate) fn new(alphas: &[f64], ys: &[f64], model: ModelKind, form: Form) -> Self {
        let target = match form {
            Form::Level => ys.to_vec(),
            Form::Log => ys.iter().map(|y| y.ln()).collect(),
        };
        Self {
            alpha: alphas.to_vec(),
            ln_alpha: alphas.iter().map(|a| a.ln()).collect(),
            target,
            model,
            form,
        }
    }

    #[inline]
    fn predict(&self, i: usize, beta: &[f64; 3]) -> f64 {
        let a = self.alpha[i];
        let gap = (beta[2] * self.ln_alpha[i]).exp() - a;
        if gap <= MIN_GAP {
            return f64::NAN;
        }
        let x = beta[0] * (1.0 - a) * ((beta[1] - 1.0) * gap.ln()).exp();
        self.model.apply(a, x)
    }

    fn residual(&self, i: usize, beta: &[f64; 3]) -> f64 {
        let p = self.predict(i, beta);
        match self.form {
            Form::Level => self.target[i] - p,
            Form::Log if p > 0.0 => self.target[i] - p.ln(),
            Form::Log => f64::NAN,
        }
    }

    fn ssr(&self, beta: &[f64; 3]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.alpha.len() {
            let r = self.residual(i, beta);
            s += r * r;
        }
        if s.is_finite() {
            s
        } else {
            f64::INFINITY
        }
    }
}

fn check_inputs(sample: &Sample, cfg: &FitConfig) -> Result<()> {
    cfg.validate()?;
    if sample.len() < MIN_OBSERVATIONS {
        return Err(Error::data(format!(
            "{} observations; at least {MIN_OBSERVATIONS} are required",
            sample.len()
        )));
    }
    for (i, (&a, &y)) in sample.alphas().iter().zip(sample.ys()).enumerate() {
        let row = sample.row_label(i);
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::data(format!("{row}: alpha = {a} outside (0,1)")));
        }
        if !y.is_finite() {
            return Err(Error::data(format!("{row}: response {y} is not finite")));
        }
        if cfg.form == Form::Log && y <= 0.0 {
            return Err(Error::data(format!(
                "{row}: log form needs a positive response, got {y}"
            )));
        }
    }
    Ok(())
}

/// Fits the configured model to the sample.
pub fn fit(sample: &Sample, cfg: &FitConfig) -> Result<FitResult> {
    check_inputs(sample, cfg)?;
    let starts = cfg.expanded_starts()?;
    let mut res = fit_arrays(sample.alphas(), sample.ys(), cfg, &starts)?;
    res.dataset_hash = sample.hash().to_string();
    Ok(res)
}

struct Candidate {
    theta: [f64; 3],
    ssr: f64,
    start: usize,
    converged: bool,
}

/// Core fitting routine on validated arrays with explicit starts.
pub(crate) fn fit_arrays(
    alphas: &[f64],
    ys: &[f64],
    cfg: &FitConfig,
    starts: &[[f64; 3]],
) -> Result<FitResult> {
    let design = Design::new(alphas, ys, cfg.model, cfg.form);
    let strict = cfg.positive_beta2;
    let objective = |theta: &[f64]| design.ssr(&to_beta(theta, strict));
    let mut evaluations = 0usize;

    if starts.is_empty() {
        return Err(Error::param("no starting values"));
    }
    if starts.len() == 1 {
        let theta0 = to_theta(&starts[0], strict);
        let lm = levenberg_marquardt(&design, theta0, strict, cfg);
        evaluations += lm.1;
        let cand = if lm.0.converged && lm.0.ssr.is_finite() {
            lm.0
        } else {
            let start = Candidate {
                theta: theta0,
                ssr: objective(&theta0),
                start: 0,
                converged: false,
            };
            let (c, e) = polish(&objective, &design, start, cfg);
            evaluations += e;
            c
        };
        return finish(&design, cand, cfg, evaluations);
    }
    let mut explored: Vec<Candidate> = {
        let opts = SimplexOptions {
            max_evals: cfg.max_iter.min(600),
            f_tol_rel: 1e-8,
            f_tol_abs: 1e-30,
            x_tol: 1e-6,
        };
        starts
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let out = nelder_mead(objective, &to_theta(b, strict), &[0.3, 0.3, 0.5], &opts);
                evaluations += out.evals;
                Candidate {
                    theta: [out.x[0], out.x[1], out.x[2]],
                    ssr: out.f,
                    start: k,
                    converged: false,
                }
            })
            .collect()
    };
    explored.sort_by(|a, b| a.ssr.total_cmp(&b.ssr).then(a.start.cmp(&b.start)));

    // Polish the best few distinct basins.
    let mut chosen: Vec<Candidate> = Vec::new();
    for c in explored.into_iter() {
        if chosen.len() == 3 {
            break;
        }
        let distinct = chosen.iter().all(|o| {
            o.theta
                .iter()
                .zip(&c.theta)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                > 1e-3
        });
        if distinct {
            chosen.push(c);
        }
    }
    let polished: Vec<Candidate> = chosen
        .into_iter()
        .map(|c| {
            let (cand, evals) = polish(&objective, &design, c, cfg);
            evaluations += evals;
            cand
        })
        .collect();

    let best_ssr = polished.iter().map(|c| c.ssr).fold(f64::INFINITY, f64::min);
    if !best_ssr.is_finite() {
        return Err(Error::Estimation("objective is non-finite at every start".into()));
    }
    let tie = best_ssr * (1.0 + cfg.tol_ssr) + 1e-300;
    let winner = polished
        .into_iter()
        .filter(|c| c.ssr <= tie)
        .min_by(|a, b| {
            let (ba, bb) = (to_beta(&a.theta, strict), to_beta(&b.theta, strict));
            ba.iter()
                .zip(&bb)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("at least one finite candidate");

    finish(&design, winner, cfg, evaluations)
}

fn finish(design: &Design, winner: Candidate, cfg: &FitConfig, evaluations: usize) -> Result<FitResult> {
    if !winner.ssr.is_finite() {
        return Err(Error::Estimation("objective is non-finite at the optimum".into()));
    }
    let alphas = &design.alpha;
    let beta = to_beta(&winner.theta, cfg.positive_beta2);
    let params = BehavioralParams::new(beta[0], beta[1], beta[2], cfg.model)?;
    let residuals: Vec<f64> = (0..alphas.len()).map(|i| design.residual(i, &beta)).collect();
    let fitted: Vec<f64> = (0..alphas.len()).map(|i| design.predict(i, &beta)).collect();
    Ok(FitResult {
        beta: params,
        form: cfg.form,
        ssr: residuals.iter().map(|r| r * r).sum(),
        residuals,
        fitted,
        converged: winner.converged,
        n_obs: alphas.len(),
        start_that_won: winner.start,
        evaluations,
        dataset_hash: String::new(),
    })
}

fn polish<F>(objective: &F, design: &Design, start: Candidate, cfg: &FitConfig) -> (Candidate, usize)
where
    F: Fn(&[f64]) -> f64,
{
    let opts = SimplexOptions {
        max_evals: cfg.max_iter,
        f_tol_rel: cfg.tol_ssr,
        f_tol_abs: 1e-30,
        x_tol: 1e-9,
    };
    let mut theta = start.theta;
    let mut ssr = start.ssr;
    let mut evals = 0;
    let mut converged = false;
    let mut step = 0.1;
    for _ in 0..12 {
        let out = nelder_mead(objective, &theta, &[step; 3], &opts);
        evals += out.evals;
        let improved = out.f < ssr;
        let gain = ssr - out.f;
        if improved {
            theta = [out.x[0], out.x[1], out.x[2]];
            ssr = out.f;
        }
        // A restart that cannot improve on the previous optimum confirms it.
        if out.converged && (!improved || gain <= cfg.tol_ssr * ssr.abs() + 1e-30) {
            converged = true;
            break;
        }
        step = (step * 0.3).max(1e-4);
    }
    let (lm, lm_evals) = levenberg_marquardt(design, theta, cfg.positive_beta2, cfg);
    evals += lm_evals;
    if lm.ssr < ssr {
        theta = lm.theta;
        ssr = lm.ssr;
        converged |= lm.converged;
    }
    (
        Candidate {
            theta,
            ssr,
            start: start.start,
            converged,
        },
        evals,
    )
}

fn residual_vector(design: &Design, theta: &[f64; 3], strict: bool, out: &mut [f64]) -> f64 {
    let beta = to_beta(theta, strict);
    let mut s = 0.0;
    for (i, r) in out.iter_mut().enumerate() {
        *r = design.residual(i, &beta);
        s += *r * *r;
    }
    if s.is_finite() {
        s
    } else {
        f64::INFINITY
    }
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    if !d.is_finite() || d == 0.0 {
        return None;
    }
    let mut x = [0.0; 3];
    for (k, xk) in x.iter_mut().enumerate() {
        let mut m = a;
        for i in 0..3 {
            m[i][k] = b[i];
        }
        *xk = det(&m) / d;
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Levenberg-Marquardt in `theta` coordinates with a forward-difference
/// Jacobian. Returns the candidate and the number of residual-vector
/// evaluations.
fn levenberg_marquardt(
    design: &Design,
    theta0: [f64; 3],
    strict: bool,
    cfg: &FitConfig,
) -> (Candidate, usize) {
    let n = design.alpha.len();
    let mut r = vec![0.0; n];
    let mut rt = vec![0.0; n];
    let mut jac = vec![[0.0; 3]; n];
    let mut theta = theta0;
    let mut ssr = residual_vector(design, &theta, strict, &mut r);
    let mut evals = 1;
    let mut lambda = 1e-3;
    let mut converged = false;
    if !ssr.is_finite() {
        return (
            Candidate {
                theta,
                ssr,
                start: 0,
                converged,
            },
            evals,
        );
    }
    let max_iter = 200.min(cfg.max_iter);
    let mut iter = 0;
    while iter < max_iter {
        iter += 1;
        for k in 0..3 {
            let h = 1e-7 * (1.0 + theta[k].abs());
            let mut tp = theta;
            tp[k] += h;
            residual_vector(design, &tp, strict, &mut rt);
            evals += 1;
            for i in 0..n {
                // residual = y - P, so dr/dtheta = -dP/dtheta
                jac[i][k] = (rt[i] - r[i]) / h;
            }
        }
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for i in 0..n {
            for a in 0..3 {
                jtr[a] += jac[i][a] * r[i];
                for b in 0..3 {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        if jtj.iter().flatten().any(|v| !v.is_finite()) {
            break;
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut m = jtj;
            for d in 0..3 {
                m[d][d] += lambda * jtj[d][d].max(1e-12);
            }
            let Some(delta) = solve3(m, [-jtr[0], -jtr[1], -jtr[2]]) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [theta[0] + delta[0], theta[1] + delta[1], theta[2] + delta[2]];
            let s = residual_vector(design, &trial, strict, &mut rt);
            evals += 1;
            if s < ssr {
                let gain = ssr - s;
                let step = delta.iter().map(|d| d.abs()).fold(0.0, f64::max);
                theta = trial;
                ssr = s;
                std::mem::swap(&mut r, &mut rt);
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if gain <= cfg.tol_ssr * ssr + 1e-30 || step <= 1e-12 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
        if !accepted {
            // No descent direction left at machine precision.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    (
        Candidate {
            theta,
            ssr,
            start: 0,
            converged,
        },
        evals,
    )
}

/// Predictions of `beta` on a grid of `alpha` values.
pub fn predict_curve(beta: &BehavioralParams, grid: &[f64]) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&a| beta.predict_use(a).map(|p| p.predicted_use))
        .collect()
}
