use luglab_core::game::{interior_equilibrium, EquilibriumKind, GameParams};
use luglab_core::population::{simulate, Recorder, SimConfig};
use luglab_core::replicator::{classify_rest_points, integrate, IntegratorConfig, Stability, Terminal};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replicator_reaches_the_interior_equilibrium(
        alpha in 0.1f64..0.9,
        n in 1.0f64..3.0,
        gap in 0.5f64..3.0,
        share in 0.1f64..0.9,
        x0 in 0.01f64..0.99,
    ) {
        let b = gap * alpha / (1.0 - alpha);
        let c = b * share;
        prop_assume!(c < n);
        let p = GameParams::new(alpha, n + gap, n, c);
        let eq = interior_equilibrium(&p).unwrap();
        prop_assert_eq!(eq.kind, EquilibriumKind::Interior);
        let tr = integrate(x0, &p, &IntegratorConfig::default()).unwrap();
        prop_assert_eq!(tr.terminal, Terminal::Converged);
        prop_assert!((tr.last().x - eq.x_star).abs() < 1e-6);
        let stable: Vec<_> = classify_rest_points(&p)
            .unwrap()
            .into_iter()
            .filter(|r| r.stability == Stability::AsymptoticallyStable)
            .collect();
        prop_assert_eq!(stable.len(), 1);
        prop_assert!((stable[0].x - eq.x_star).abs() < 1e-15);
    }
}

#[test]
fn small_population_tracks_the_equilibrium() {
    let cfg = SimConfig {
        seed: 42,
        n_total: 4000,
        alpha: 0.5,
        m: 3.0,
        n: 2.0,
        c: 0.5,
        mu: 0.2,
        rounds: 1500,
        recorder: Recorder::Strong,
        x0: 0.9,
    };
    let out = simulate(&cfg).unwrap();
    let x = out.mean_share_after(500).unwrap();
    assert!((x - 0.5).abs() < 0.03, "{x}");
    let ke = out.mean_street_use_after(500, Recorder::Weak).unwrap();
    assert!((ke - 0.25 * 0.5).abs() < 0.02, "{ke}");
}
