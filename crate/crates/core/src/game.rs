//! The language use game: payoffs, assumption checks and the evolutionarily
//! stable convention.
//!
//! A bilingual meets another bilingual with probability `alpha` and a
//! monolingual otherwise. Coordinating in the minority language `B` pays `m`,
//! speaking `A` pays `n`, and a revealer forced back to `A` by a monolingual
//! gets `n - c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the strict inequality `c < b(alpha)`.
pub const COST_EPS: f64 = 1e-12;

/// Exogenous parameters of one game instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    pub alpha: f64,
    pub m: f64,
    pub n: f64,
    pub c: f64,
}

impl GameParams {
    pub fn new(alpha: f64, m: f64, n: f64, c: f64) -> Self {
        Self { alpha, m, n, c }
    }

    /// Weighted benefit `b(alpha) = (m - n) alpha / (1 - alpha)`.
    pub fn weighted_benefit(&self) -> f64 {
        (self.m - self.n) * self.alpha / (1.0 - self.alpha)
    }

    /// Whether `c < b(alpha)` holds strictly, with relative slack `eps`.
    pub fn cost_below_benefit(&self, eps: f64) -> bool {
        let b = self.weighted_benefit();
        let scale = b.abs().max(self.c.abs()).max(f64::MIN_POSITIVE);
        b - self.c > eps * scale
    }

    /// Minimal well-formedness shared by every payoff computation: finite
    /// values, `alpha` in (0,1), `m > n` and a non-negative cost.
    pub fn check_basic(&self) -> Result<()> {
        let Self { alpha, m, n, c } = *self;
        if ![alpha, m, n, c].iter().all(|v| v.is_finite()) {
            return Err(Error::param(format!("non-finite game parameters {self:?}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::param(format!("alpha = {alpha} outside (0,1)")));
        }
        if m <= n {
            return Err(Error::param(format!("m = {m} must exceed n = {n}")));
        }
        if c < 0.0 {
            return Err(Error::param(format!("frustration cost c = {c} is negative")));
        }
        Ok(())
    }
}

/// One line of a [`ValidationReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
    pub weighted_benefit: f64,
    /// Set when `alpha >= 0.5`; the formulas remain well defined, but the
    /// bilinguals are no longer a minority.
    pub majority_warning: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.holds)
    }
}

/// Checks the payoff ordering `m > n > c > 0` and `c < b(alpha)`.
pub fn validate_assumptions(p: &GameParams, eps: f64) -> ValidationReport {
    let b = p.weighted_benefit();
    let finite = [p.alpha, p.m, p.n, p.c].iter().all(|v| v.is_finite());
    let check = |name, holds: bool, lhs, rhs| AssumptionCheck {
        name,
        holds: finite && holds,
        lhs,
        rhs,
    };
    let checks = vec![
        check("0 < alpha", p.alpha > 0.0, 0.0, p.alpha),
        check("alpha < 1", p.alpha < 1.0, p.alpha, 1.0),
        check("m > n", p.m > p.n, p.m, p.n),
        check("n > c", p.n > p.c, p.n, p.c),
        check("c > 0", p.c > 0.0, p.c, 0.0),
        check("c < b(alpha)", p.cost_below_benefit(eps), p.c, b),
    ];
    ValidationReport {
        checks,
        weighted_benefit: b,
        majority_warning: p.alpha >= 0.5,
    }
}

/// Expected payoffs net of `n` for the symmetric 2x2 game between bilinguals.
///
/// Row `R` earns `h` against anyone; row `H` earns `j` against `R` and `0`
/// against `H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectedPayoffMatrix {
    pub h: f64,
    pub j: f64,
    pub hh_payoff: f64,
}

impl ExpectedPayoffMatrix {
    /// Expected payoff to `R` and to `H` when a share `x` of bilinguals reveal.
    pub fn strategy_payoffs(&self, x: f64) -> (f64, f64) {
        (self.h, self.j * x + self.hh_payoff * (1.0 - x))
    }
}

pub fn expected_payoffs(p: &GameParams) -> Result<ExpectedPayoffMatrix> {
    p.check_basic()?;
    let j = p.alpha * (p.m - p.n);
    Ok(ExpectedPayoffMatrix {
        h: j - p.c * (1.0 - p.alpha),
        j,
        hh_payoff: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumKind {
    Interior,
    BoundaryZero,
    BoundaryOne,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    pub x_star: f64,
    pub kind: EquilibriumKind,
    pub diagnostic: Option<String>,
}

/// Closed-form `x* = 1 - (1 - alpha) c / (alpha (m - n))`, without checks.
pub fn x_star_formula(p: &GameParams) -> f64 {
    1.0 - (1.0 - p.alpha) * p.c / (p.alpha * (p.m - p.n))
}

/// The stable share of revealers.
///
/// When `c >= b(alpha)` hiding dominates and the population collapses onto
/// `x = 0`; with no frustration cost revealing dominates and `x = 1`.
pub fn interior_equilibrium(p: &GameParams) -> Result<Equilibrium> {
    p.check_basic()?;
    if p.c <= 0.0 {
        return Ok(Equilibrium {
            x_star: 1.0,
            kind: EquilibriumKind::BoundaryOne,
            diagnostic: Some("zero frustration cost: revealing is weakly dominant".into()),
        });
    }
    if !p.cost_below_benefit(COST_EPS) {
        return Ok(Equilibrium {
            x_star: 0.0,
            kind: EquilibriumKind::BoundaryZero,
            diagnostic: Some(format!(
                "c = {} is not below the weighted benefit b(alpha) = {}",
                p.c,
                p.weighted_benefit()
            )),
        });
    }
    Ok(Equilibrium {
        x_star: x_star_formula(p),
        kind: EquilibriumKind::Interior,
        diagnostic: None,
    })
}

/// Matching masses between bilinguals at a convention `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchingComparison {
    /// Probability that two matched bilinguals both hide, `(1-x)^2`.
    pub a_mass: f64,
    /// Probability that at least one of them reveals, `1 - (1-x)^2`.
    pub b_mass: f64,
    pub a_dominates: bool,
}

/// `x*` below which both-hide matches outnumber matches with a revealer.
pub const A_DOMINANCE_THRESHOLD: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

/// A-use dominates exactly when `x < 1 - 1/sqrt(2)`.
pub fn a_use_dominates(x_star: f64) -> Result<MatchingComparison> {
    if !(0.0..=1.0).contains(&x_star) {
        return Err(Error::param(format!("x* = {x_star} outside [0,1]")));
    }
    let a_mass = (1.0 - x_star) * (1.0 - x_star);
    let b_mass = 1.0 - a_mass;
    Ok(MatchingComparison {
        a_mass,
        b_mass,
        a_dominates: x_star < A_DOMINANCE_THRESHOLD,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn validation_passes_and_reports_benefit() {
        let r = validate_assumptions(&GameParams::new(0.25, 3.0, 2.0, 0.2), COST_EPS);
        assert!(r.passed());
        assert!(close(r.weighted_benefit, 1.0 / 3.0, 1e-15));
        assert!(!r.majority_warning);
    }

    #[test]
    fn validation_rejects_boundary_cost() {
        let r = validate_assumptions(&GameParams::new(0.25, 3.0, 2.0, 1.0 / 3.0), COST_EPS);
        let failed: Vec<_> = r.failures().map(|c| c.name).collect();
        assert_eq!(failed, vec!["c < b(alpha)"]);
    }

    #[test]
    fn validation_rejects_ordering() {
        let r = validate_assumptions(&GameParams::new(0.25, 2.0, 3.0, 0.2), COST_EPS);
        assert!(r.failures().any(|c| c.name == "m > n"));
    }

    #[test]
    fn validation_flags_majority() {
        let r = validate_assumptions(&GameParams::new(0.6675, 3.0, 2.0, 0.2), COST_EPS);
        assert!(r.passed());
        assert!(r.majority_warning);
    }

    #[test]
    fn payoff_matrix_entries() {
        let e = expected_payoffs(&GameParams::new(0.5, 3.0, 2.0, 0.5)).unwrap();
        assert!(close(e.h, 0.25, 1e-15));
        assert!(close(e.j, 0.5, 1e-15));
        assert_eq!(e.hh_payoff, 0.0);

        let e = expected_payoffs(&GameParams::new(0.5, 3.0, 2.0, 0.0)).unwrap();
        assert_eq!(e.h, e.j);
        assert!(close(e.h, 0.5, 1e-15));
    }

    #[test]
    fn payoff_matrix_rejects_invalid() {
        assert!(expected_payoffs(&GameParams::new(1.5, 3.0, 2.0, 0.5)).is_err());
        assert!(expected_payoffs(&GameParams::new(0.5, 2.0, 3.0, 0.5)).is_err());
        assert!(expected_payoffs(&GameParams::new(0.5, 3.0, 2.0, f64::NAN)).is_err());
    }

    #[test]
    fn equilibrium_examples() {
        let e = interior_equilibrium(&GameParams::new(0.5, 3.0, 2.0, 0.5)).unwrap();
        assert_eq!(e.kind, EquilibriumKind::Interior);
        assert!(close(e.x_star, 0.5, 1e-15));

        let e = interior_equilibrium(&GameParams::new(0.25, 3.0, 2.0, 0.2)).unwrap();
        assert!(close(e.x_star, 0.4, 1e-15));

        let e = interior_equilibrium(&GameParams::new(0.25, 3.0, 2.0, 0.0)).unwrap();
        assert_eq!(e.kind, EquilibriumKind::BoundaryOne);
        assert_eq!(e.x_star, 1.0);

        // Approaching zero cost the interior point tends to one.
        let e = interior_equilibrium(&GameParams::new(0.25, 3.0, 2.0, 1e-9)).unwrap();
        assert!(e.x_star > 1.0 - 1e-8);
    }

    #[test]
    fn equilibrium_collapses_when_cost_too_high() {
        let e = interior_equilibrium(&GameParams::new(0.25, 3.0, 2.0, 1.0 / 3.0)).unwrap();
        assert_eq!(e.kind, EquilibriumKind::BoundaryZero);
        assert_eq!(e.x_star, 0.0);
        assert!(e.diagnostic.is_some());
    }

    #[test]
    fn matching_masses() {
        let r = a_use_dominates(0.2).unwrap();
        assert!(close(r.a_mass, 0.64, 1e-15) && close(r.b_mass, 0.36, 1e-15));
        assert!(r.a_dominates);

        let r = a_use_dominates(0.5).unwrap();
        assert!(close(r.a_mass, 0.25, 1e-15) && close(r.b_mass, 0.75, 1e-15));
        assert!(!r.a_dominates);

        // The threshold 1 - 1/sqrt(2) rounds to 0.293.
        let threshold = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(threshold, 0.293, 5e-4));
        assert!(!a_use_dominates(threshold).unwrap().a_dominates);
        assert!(a_use_dominates(threshold - 1e-9).unwrap().a_dominates);

        assert!(a_use_dominates(-0.1).is_err());
        assert!(a_use_dominates(1.1).is_err());
    }

    fn valid_params() -> impl Strategy<Value = GameParams> {
        (0.05f64..0.95, 0.5f64..5.0, 0.1f64..5.0, 0.02f64..0.98).prop_map(|(alpha, n, gap, frac)| {
            let m = n + gap;
            let b = gap * alpha / (1.0 - alpha);
            let c = frac * b.min(n);
            GameParams::new(alpha, m, n, c)
        })
    }

    proptest! {
        #[test]
        fn interior_point_is_a_rest_point(p in valid_params()) {
            let e = interior_equilibrium(&p).unwrap();
            prop_assert_eq!(e.kind, EquilibriumKind::Interior);
            prop_assert!(e.x_star > 0.0 && e.x_star < 1.0);
            prop_assert!(crate::replicator::rhs(e.x_star, &p).abs() < 1e-12);
        }

        #[test]
        fn positive_h_iff_cost_below_benefit(alpha in 0.01f64..0.99, n in 0.1f64..5.0, gap in 0.01f64..5.0, c in 0.0f64..5.0) {
            let p = GameParams::new(alpha, n + gap, n, c);
            let e = expected_payoffs(&p).unwrap();
            prop_assert!(close(e.h - e.j, -c * (1.0 - alpha), 1e-12));
            // Away from the knife edge the two conditions coincide.
            prop_assume!((p.weighted_benefit() - c).abs() > 1e-9);
            prop_assert_eq!(e.h > 0.0, p.cost_below_benefit(COST_EPS));
        }

        #[test]
        fn monotone_comparative_statics(p in valid_params()) {
            let x = x_star_formula(&p);
            let d = 1e-6;
            let up_alpha = GameParams { alpha: p.alpha + d, ..p };
            let up_m = GameParams { m: p.m + d, ..p };
            let up_c = GameParams { c: p.c + d, ..p };
            prop_assert!(x_star_formula(&up_alpha) > x);
            prop_assert!(x_star_formula(&up_m) > x);
            prop_assert!(x_star_formula(&up_c) < x);
        }

        #[test]
        fn dominance_region(x in 0.0f64..=1.0) {
            let threshold = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
            prop_assume!((x - threshold).abs() > 1e-12);
            prop_assert_eq!(a_use_dominates(x).unwrap().a_dominates, x < threshold);
        }
    }
}
