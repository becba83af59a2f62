//! One-population replicator dynamics of the language use game.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{self, GameParams};

/// `dx/dt = x (1 - x) [alpha (m - n) (1 - x) - c (1 - alpha)]`.
pub fn rhs(x: f64, p: &GameParams) -> f64 {
    x * (1.0 - x) * (p.alpha * (p.m - p.n) * (1.0 - x) - p.c * (1.0 - p.alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicatorState {
    pub x: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub max_steps: u64,
    /// Record every `sample_every`-th step (the terminal state is always kept).
    pub sample_every: u64,
    /// Bound on `|rhs|` and on the step increment for convergence.
    pub rate_tol: f64,
    /// Consecutive steps that must satisfy `rate_tol`.
    pub settle_steps: u32,
    /// Distance to `x*` regarded as agreement when checking a converged run.
    pub conv_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            max_steps: 10_000_000,
            sample_every: 100,
            rate_tol: 1e-12,
            settle_steps: 10,
            conv_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Converged,
    MaxSteps,
    BoundaryHit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub samples: Vec<ReplicatorState>,
    pub terminal: Terminal,
    pub steps: u64,
}

impl Trajectory {
    pub fn last(&self) -> ReplicatorState {
        *self
            .samples
            .last()
            .expect("trajectory always holds the initial state")
    }
}

// States this close to a bound are snapped onto it; anything further out
// means the step overshot, which the vector field never allows.
const SNAP: f64 = 1e-15;
const MAX_CLAMP: f64 = 1e-9;

fn rk4_step(x: f64, dt: f64, p: &GameParams) -> f64 {
    let k1 = rhs(x, p);
    let k2 = rhs(x + 0.5 * dt * k1, p);
    let k3 = rhs(x + 0.5 * dt * k2, p);
    let k4 = rhs(x + dt * k3, p);
    x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

fn clamp_state(x: f64, step: u64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Integration(format!("non-finite state at step {step}")));
    }
    let clamped = x.clamp(0.0, 1.0);
    if (clamped - x).abs() > MAX_CLAMP {
        return Err(Error::Integration(format!("state {x} left [0,1] at step {step}")));
    }
    Ok(if clamped < SNAP {
        0.0
    } else if clamped > 1.0 - SNAP {
        1.0
    } else {
        clamped
    })
}

/// Fixed-step RK4 integration from `x0` until the state settles.
pub fn integrate(x0: f64, p: &GameParams, cfg: &IntegratorConfig) -> Result<Trajectory> {
    if !(x0 > 0.0 && x0 < 1.0) {
        return Err(Error::param(format!("initial state {x0} outside (0,1)")));
    }
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) || cfg.sample_every == 0 {
        return Err(Error::param("integrator needs dt > 0 and sample_every >= 1"));
    }
    p.check_basic()?;

    let mut x = x0;
    let mut samples = vec![ReplicatorState { x, t: 0.0 }];
    let mut quiet = 0u32;
    let mut terminal = Terminal::MaxSteps;
    let mut step = 0u64;
    while step < cfg.max_steps {
        let next = clamp_state(rk4_step(x, cfg.dt, p), step)?;
        step += 1;
        let settled = (next - x).abs() < cfg.rate_tol && rhs(next, p).abs() < cfg.rate_tol;
        x = next;
        quiet = if settled { quiet + 1 } else { 0 };
        if step.is_multiple_of(cfg.sample_every) {
            samples.push(ReplicatorState {
                x,
                t: step as f64 * cfg.dt,
            });
        }
        if quiet >= cfg.settle_steps {
            terminal = if x == 0.0 || x == 1.0 {
                Terminal::BoundaryHit
            } else {
                Terminal::Converged
            };
            break;
        }
    }
    if !step.is_multiple_of(cfg.sample_every) {
        samples.push(ReplicatorState {
            x,
            t: step as f64 * cfg.dt,
        });
    }
    Ok(Trajectory {
        samples,
        terminal,
        steps: step,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    AsymptoticallyStable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RestPoint {
    pub x: f64,
    pub stability: Stability,
}

/// Rest points with stability read off the sign of the vector field on
/// either side. Without an interior equilibrium only the bounds are returned.
pub fn classify_rest_points(p: &GameParams) -> Result<Vec<RestPoint>> {
    let eq = game::interior_equilibrium(p)?;
    let probe = 1e-6;
    let side = |x: f64, below: f64, above: f64| {
        let flows_in = (below <= 0.0 || rhs(below, p) > 0.0) && (above >= 1.0 || rhs(above, p) < 0.0);
        RestPoint {
            x,
            stability: if flows_in {
                Stability::AsymptoticallyStable
            } else {
                Stability::Unstable
            },
        }
    };
    let mut points = vec![side(0.0, -1.0, probe)];
    if eq.kind == game::EquilibriumKind::Interior {
        let x = eq.x_star;
        let d = probe.min(x / 2.0).min((1.0 - x) / 2.0);
        points.push(side(x, x - d, x + d));
    }
    points.push(side(1.0, 1.0 - probe, 2.0));
    Ok(points)
}
