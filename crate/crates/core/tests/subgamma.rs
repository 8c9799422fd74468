use pacgrad::subgamma::{check, envelope, fit, fit_fixed_c, FitConfig};
use proptest::prelude::*;

mod common;

use common::log_spaced;

#[test]
fn synthetic_round_trip_recovers_v() {
    // Exact envelope with v = 2, c = 1e-4 on lambda in [1, 245].
    let grid: Vec<(f64, f64)> = log_spaced(1.0, 245.0, 30).into_iter().map(|l| (l, envelope(2.0, 1e-4, l).unwrap())).collect();
    let f = fit(&grid, &FitConfig::default()).unwrap();
    assert!((f.v / 2.0 - 1.0).abs() < 0.01, "{f:?}");
    assert!(check(&f, &grid));
    assert_eq!(f.residual, 0.0);
}

#[test]
fn recovers_a_pure_quadratic() {
    let grid: Vec<(f64, f64)> = log_spaced(1.0, 1000.0, 25).into_iter().map(|l| (l, 0.3 * l * l / 2.0)).collect();
    let f = fit(&grid, &FitConfig::default()).unwrap();
    assert!((f.v / 0.3 - 1.0).abs() < 1e-3, "{f:?}");
    assert!(f.c < 1e-6);
}

fn grid_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.1f64..1000.0, 0.0f64..100.0), 1..30)
}

proptest! {
    #[test]
    fn envelope_is_convex_in_lambda(v in 0.01f64..10.0, c in 1e-6f64..1e-2, t in 0.01f64..0.9, h in 1e-3f64..0.05) {
        let lmax = 1.0 / c;
        let (a, b) = (t * lmax, ((t + 2.0 * h) * lmax).min(0.99 * lmax));
        let mid = 0.5 * (a + b);
        let e = |l| envelope(v, c, l).unwrap();
        prop_assert!(e(mid) <= 0.5 * (e(a) + e(b)) * (1.0 + 1e-12));
    }

    #[test]
    fn fitted_envelopes_dominate_their_grid(grid in grid_strategy()) {
        let f = fit(&grid, &FitConfig::default()).unwrap();
        prop_assert!(check(&f, &grid));
        prop_assert_eq!(f.residual, 0.0);
        let hi = grid.iter().map(|p| p.0).fold(0.0, f64::max);
        prop_assert!(hi * f.c < 1.0);
    }

    #[test]
    fn shrinking_the_grid_never_increases_v(grid in grid_strategy(), keep in prop::collection::vec(any::<bool>(), 30), c in 1e-8f64..1e-3) {
        let sub: Vec<(f64, f64)> = grid.iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| *p).collect();
        prop_assume!(!sub.is_empty());
        let full = fit_fixed_c(&grid, c).unwrap();
        let part = fit_fixed_c(&sub, c).unwrap();
        prop_assert!(part.v <= full.v);
    }

    #[test]
    fn points_above_the_envelope_fail_the_check(grid in grid_strategy(), bump in 1e-6f64..1.0) {
        let f = fit(&grid, &FitConfig::default()).unwrap();
        let (l, _) = grid[0];
        let above = [(l, f.envelope(l).unwrap() * (1.0 + bump) + bump)];
        prop_assert!(!check(&f, &above));
    }
}
