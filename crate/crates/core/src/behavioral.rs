//! The behavioral equilibrium function `x*(alpha)` and the language-use
//! prediction models built on it.
//!
//! With aspiration level `alpha* = alpha^beta3`, coordination utility
//! `m(alpha) = alpha* n / alpha` and relative net benefit
//! `b(alpha) = beta1 (alpha* - alpha)^beta2`, the interior equilibrium becomes
//!
//! ```text
//! x*(alpha) = beta1 (1 - alpha) (alpha^beta3 - alpha)^(beta2 - 1)
//! ```
//!
//! Predictions are not clamped to `[0,1]`; fitted parameters can imply
//! `x* > 1` at some `alpha`, which is flagged instead.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible aspiration gap `alpha^beta3 - alpha`.
pub const MIN_GAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// Street use with strong revealers: `alpha^2 (2x - x^2)`.
    #[serde(rename = "PKE1")]
    Pke1,
    /// Street use with weak revealers: `alpha^2 x`.
    #[serde(rename = "PKE2")]
    Pke2,
    /// Daily use: `alpha x`.
    #[serde(rename = "PDU")]
    Pdu,
}

impl ModelKind {
    /// Maps an equilibrium share to the predicted use.
    #[inline]
    pub fn apply(self, alpha: f64, x: f64) -> f64 {
        match self {
            ModelKind::Pke1 => alpha * alpha * x * (2.0 - x),
            ModelKind::Pke2 => alpha * alpha * x,
            ModelKind::Pdu => alpha * x,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Pke1 => "PKE1",
            ModelKind::Pke2 => "PKE2",
            ModelKind::Pdu => "PDU",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "PKE1" => Ok(ModelKind::Pke1),
            "PKE2" => Ok(ModelKind::Pke2),
            "PDU" => Ok(ModelKind::Pdu),
            _ => Err(Error::param(format!("unknown model '{s}' (PKE1, PKE2 or PDU)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehavioralParams {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub model: ModelKind,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            alpha,
            reason: "alpha must lie in (0,1)".into(),
        })
    }
}

impl BehavioralParams {
    /// Enforces `beta1 > 0` and `0 < beta3 < 1`.
    pub fn new(beta1: f64, beta2: f64, beta3: f64, model: ModelKind) -> Result<Self> {
        if !(beta1.is_finite() && beta2.is_finite() && beta3.is_finite()) {
            return Err(Error::param("non-finite behavioral parameter"));
        }
        if beta1 <= 0.0 {
            return Err(Error::param(format!("beta1 = {beta1} must be positive")));
        }
        if !(beta3 > 0.0 && beta3 < 1.0) {
            return Err(Error::param(format!("beta3 = {beta3} outside (0,1)")));
        }
        Ok(Self {
            beta1,
            beta2,
            beta3,
            model,
        })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.beta1, self.beta2, self.beta3]
    }

    /// Aspiration level `alpha^beta3`.
    pub fn aspiration(&self, alpha: f64) -> f64 {
        alpha.powf(self.beta3)
    }

    /// `alpha^beta3 - alpha`, guarded away from zero.
    pub fn aspiration_gap(&self, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        let gap = self.aspiration(alpha) - alpha;
        if gap > MIN_GAP {
            Ok(gap)
        } else {
            Err(Error::Domain {
                alpha,
                reason: format!("aspiration gap {gap:e} is numerically zero"),
            })
        }
    }

    /// Relative net benefit `beta1 (alpha^beta3 - alpha)^beta2`.
    pub fn net_benefit(&self, alpha: f64) -> Result<f64> {
        Ok(self.beta1 * self.aspiration_gap(alpha)?.powf(self.beta2))
    }

    pub fn x_star_of_alpha(&self, alpha: f64) -> Result<f64> {
        let gap = self.aspiration_gap(alpha)?;
        let x = self.beta1 * (1.0 - alpha) * gap.powf(self.beta2 - 1.0);
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::Domain {
                alpha,
                reason: "equilibrium share overflowed".into(),
            })
        }
    }

    pub fn predict_use(&self, alpha: f64) -> Result<UsePrediction> {
        let x_star = self.x_star_of_alpha(alpha)?;
        let predicted_use = self.model.apply(alpha, x_star);
        Ok(UsePrediction {
            alpha,
            x_star,
            predicted_use,
            out_of_range: !(0.0..=1.0).contains(&predicted_use) || !(0.0..=1.0).contains(&x_star),
        })
    }

    /// Frustration cost implied by the net benefit with `m(alpha) = K / alpha`,
    /// `K = alpha* n`.
    pub fn theoretical_c_of_alpha(&self, alpha: f64, n_payoff: f64) -> Result<CostOfAlpha> {
        if !(n_payoff > 0.0 && n_payoff.is_finite()) {
            return Err(Error::param(format!("payoff n = {n_payoff} must be positive")));
        }
        let gap = self.aspiration_gap(alpha)?;
        let weighted_benefit = n_payoff * gap / (1.0 - alpha);
        let cost = weighted_benefit - n_payoff * self.beta1 * gap.powf(self.beta2);
        Ok(CostOfAlpha {
            cost,
            weighted_benefit,
            coordination_payoff: self.aspiration(alpha) * n_payoff / alpha,
            meaningful: cost >= 0.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UsePrediction {
    pub alpha: f64,
    pub x_star: f64,
    pub predicted_use: f64,
    /// Either the equilibrium share or the prediction left `[0,1]`.
    pub out_of_range: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostOfAlpha {
    pub cost: f64,
    /// `n (alpha* - alpha) / (1 - alpha)`.
    pub weighted_benefit: f64,
    /// `m(alpha) = alpha* n / alpha`.
    pub coordination_payoff: f64,
    /// A negative cost has no interpretation.
    pub meaningful: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{x_star_formula, GameParams};
    use proptest::prelude::*;

    fn params(b1: f64, b2: f64, b3: f64, model: ModelKind) -> BehavioralParams {
        BehavioralParams::new(b1, b2, b3, model).unwrap()
    }

    #[test]
    fn constraints() {
        assert!(BehavioralParams::new(0.0, 0.1, 0.5, ModelKind::Pdu).is_err());
        assert!(BehavioralParams::new(1.0, 0.1, 1.0, ModelKind::Pdu).is_err());
        assert!(BehavioralParams::new(1.0, 0.1, 0.0, ModelKind::Pdu).is_err());
        assert!(BehavioralParams::new(1.0, -3.0, 0.5, ModelKind::Pdu).is_ok());
    }

    #[test]
    fn zero_exponent_benefit_is_flat() {
        let bp = params(0.7, 0.0, 0.3, ModelKind::Pke2);
        for a in [0.05, 0.3, 0.8] {
            assert_eq!(bp.net_benefit(a).unwrap(), 0.7);
        }
    }

    #[test]
    fn published_benefit_value() {
        let bp = params(0.890, 0.030, 0.089, ModelKind::Pke2);
        let expected = 0.890 * (0.25f64.powf(0.089) - 0.25).powf(0.03);
        assert_eq!(bp.net_benefit(0.25).unwrap(), expected);
        // By hand: 0.25^0.089 = 0.88393, gap 0.63393, ^0.03 = 0.98643.
        assert!((expected - 0.87792).abs() < 1e-4);
    }

    #[test]
    fn benefit_vanishes_near_one() {
        let bp = params(1.0, 0.5, 0.5, ModelKind::Pke2);
        assert!(bp.net_benefit(0.999999).unwrap() < 1e-3);
        assert!(bp.net_benefit(1.0).is_err());
        assert!(bp.net_benefit(0.0).is_err());
    }

    #[test]
    fn unit_exponent_drops_aspiration() {
        for b3 in [0.01, 0.5, 0.9] {
            let bp = params(0.8, 1.0, b3, ModelKind::Pdu);
            assert!((bp.x_star_of_alpha(0.3).unwrap() - 0.8 * 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn published_equilibrium_values() {
        // Basque 2016 estimates imply x* slightly above one.
        let basque = params(1.10, 0.008, 0.001, ModelKind::Pke2);
        let x = basque.x_star_of_alpha(0.284).unwrap();
        assert!((x - 1.099).abs() < 5e-4, "{x}");
        let pred = basque.predict_use(0.284).unwrap();
        assert!((pred.predicted_use - 0.0886).abs() < 5e-5, "{pred:?}");
        assert!(pred.out_of_range);

        let welsh = params(0.429, -0.667, 0.004, ModelKind::Pdu);
        let x = welsh.x_star_of_alpha(0.5).unwrap();
        assert!((x - 0.6875).abs() < 5e-4, "{x}");
        let pred = welsh.predict_use(0.5).unwrap();
        assert!((pred.predicted_use - 0.3438).abs() < 5e-4);
        assert!(!pred.out_of_range);
    }

    #[test]
    fn near_one_is_a_domain_error() {
        let bp = params(0.5, 0.5, 0.999_999_999_999_99, ModelKind::Pdu);
        match bp.x_star_of_alpha(0.5) {
            Err(Error::Domain { alpha, .. }) => assert_eq!(alpha, 0.5),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn cost_function_examples() {
        let a = 0.25;
        // A huge exponent on a gap below one sends the net benefit to zero,
        // leaving the full weighted benefit as the cost.
        let bp = params(0.4, 400.0, 0.5, ModelKind::Pke2);
        let c = bp.theoretical_c_of_alpha(a, 2.0).unwrap();
        let gap = bp.aspiration_gap(a).unwrap();
        assert!((c.weighted_benefit - 2.0 * gap / 0.75).abs() < 1e-15);
        assert_eq!(c.cost, c.weighted_benefit);

        // b(alpha) = (alpha* - alpha)/(1 - alpha): beta2 = 1, beta1 = 1/(1-alpha).
        let zero = params(1.0 / 0.75, 1.0, 0.5, ModelKind::Pke2);
        assert!(zero.theoretical_c_of_alpha(a, 1.0).unwrap().cost.abs() < 1e-15);

        let bp = params(1.0, 0.5, 0.089, ModelKind::Pke2);
        let c = bp.theoretical_c_of_alpha(0.25, 1.0).unwrap();
        assert!((bp.aspiration(0.25) - 0.8840).abs() < 1e-3);
        assert!((c.weighted_benefit - 0.8453).abs() < 1e-4);
        assert!(bp.theoretical_c_of_alpha(0.25, 0.0).is_err());
    }

    #[test]
    fn model_names_round_trip() {
        for m in [ModelKind::Pke1, ModelKind::Pke2, ModelKind::Pdu] {
            assert_eq!(m.name().parse::<ModelKind>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("PKE3".parse::<ModelKind>().is_err());
    }

    #[test]
    fn zero_equilibrium_predicts_zero() {
        for m in [ModelKind::Pke1, ModelKind::Pke2, ModelKind::Pdu] {
            assert_eq!(m.apply(0.4, 0.0), 0.0);
        }
    }

    proptest! {
        #[test]
        fn model_identities(alpha in 0.01f64..0.99, b1 in 0.01f64..2.0, b2 in -2.0f64..2.0, b3 in 0.001f64..0.9) {
            let bp = params(b1, b2, b3, ModelKind::Pke2);
            let x = bp.x_star_of_alpha(alpha).unwrap();
            let pke2 = bp.predict_use(alpha).unwrap().predicted_use;
            let pdu = BehavioralParams { model: ModelKind::Pdu, ..bp }.predict_use(alpha).unwrap().predicted_use;
            prop_assert!((alpha * alpha * x - pke2).abs() <= 1e-14 * pke2.abs().max(1.0));
            prop_assert!((alpha * x - pdu).abs() <= 1e-14 * pdu.abs().max(1.0));
            let asp = bp.aspiration(alpha);
            prop_assert!(asp > alpha && asp < 1.0);
        }

        #[test]
        fn strong_dominates_weak_on_unit_interval(alpha in 0.01f64..0.99, x in 0.0f64..=1.0) {
            prop_assert!(ModelKind::Pke1.apply(alpha, x) >= ModelKind::Pke2.apply(alpha, x));
        }

        #[test]
        fn equilibrium_chain_round_trip(alpha in 0.02f64..0.9, n in 0.2f64..5.0, b1 in 0.01f64..1.5, b2 in -1.0f64..2.0, b3 in 0.01f64..0.6) {
            let bp = params(b1, b2, b3, ModelKind::Pdu);
            let cost = bp.theoretical_c_of_alpha(alpha, n).unwrap();
            let x = bp.x_star_of_alpha(alpha).unwrap();
            let game = GameParams::new(alpha, cost.coordination_payoff, n, cost.cost);
            prop_assume!(cost.meaningful && x > 0.0 && x < 1.0);
            prop_assume!(game.check_basic().is_ok() && game.cost_below_benefit(1e-12));
            let via_game = x_star_formula(&game);
            prop_assert!((via_game - x).abs() < 1e-10, "{} vs {}", via_game, x);
        }
    }
}
