//! Property tests over the public API: cumulant shape, boundary ordering,
//! path monotonicity, and optimality against simple admissible strategies.

use std::sync::OnceLock;

use lobexit::boundary::{tabulate, BoundaryTable, GridSpec};
use lobexit::montecarlo::PathSampler;
use lobexit::strategy::{self, StepControl};
use lobexit::valuation::{performance, ValueFunction};
use lobexit::{BookShape, JumpSpec, LevyModel, Phase, Problem, Resilience, VgParams};
use proptest::prelude::*;

fn problem(levy: LevyModel) -> Problem {
    Problem::new(
        levy,
        BookShape::block(1000.0, -1.0).unwrap(),
        Resilience::exponential(5.0).unwrap(),
        1e-2,
    )
    .unwrap()
}

fn bm() -> Problem {
    problem(LevyModel::brownian(-0.0018, 4.011e-4).unwrap())
}

fn lvg() -> Problem {
    let vg = VgParams::new(0.02, 0.6, -0.002).unwrap();
    problem(LevyModel::new(-0.0018, 0.0, JumpSpec::VarianceGamma(vg)).unwrap())
}

const Y_MAX: f64 = 2000.0;

fn bm_setup() -> &'static (Problem, BoundaryTable) {
    static CELL: OnceLock<(Problem, BoundaryTable)> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = bm();
        let t = tabulate(&p, &GridSpec::new(Y_MAX)).unwrap();
        (p, t)
    })
}

fn lvg_setup() -> &'static (Problem, BoundaryTable) {
    static CELL: OnceLock<(Problem, BoundaryTable)> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = lvg();
        let t = tabulate(&p, &GridSpec::new(Y_MAX)).unwrap();
        (p, t)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn risk_cost_is_increasing_and_convex(y1 in 0.0..5e3f64, dy in 1e-3..5e3f64, lvg_model in any::<bool>()) {
        let p = if lvg_model { &lvg_setup().0 } else { &bm_setup().0 };
        let y2 = y1 + dy;
        let (k1, k2) = (p.kappa(y1), p.kappa(y2));
        let km = p.kappa(0.5 * (y1 + y2));
        prop_assert!(k2 > k1);
        prop_assert!(km <= 0.5 * (k1 + k2) * (1.0 + 1e-12));
        prop_assert!(p.kappa_prime(y2) > p.kappa_prime(y1));
    }

    #[test]
    fn boundary_is_ordered(frac in 0.0..1.0f64, lvg_model in any::<bool>()) {
        let (_, t) = if lvg_model { lvg_setup() } else { bm_setup() };
        let y = frac * Y_MAX;
        let y2 = (y + 1.0).min(Y_MAX);
        let (b, lo) = (t.beta(y), t.beta_lower(y));
        prop_assert!(lo <= b);
        prop_assert!(t.beta(y2) <= b);
        prop_assert!(b >= t.zbar && b <= 0.0);
        if y > 0.0 {
            prop_assert!(b < 0.0);
        }
    }

    #[test]
    fn optimal_path_is_monotone_and_stays_in_the_book(
        y in 1.0..Y_MAX, zf in 0.0..0.9f64, lvg_model in any::<bool>()
    ) {
        let (p, t) = if lvg_model { lvg_setup() } else { bm_setup() };
        let z = zf * p.zbar();
        prop_assume!(p.is_solvent(y, z));
        let path = strategy::simulate(p, t, y, z, &StepControl::default()).unwrap();
        prop_assert!(path.times.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(path.y_vals.windows(2).all(|w| w[1] <= w[0] + 1e-9 * y));
        prop_assert!(path.z_vals.iter().all(|&z| z >= p.zbar() - 1e-9 && z <= 0.0));
        prop_assert_eq!(*path.phases.last().unwrap(), Phase::Done);
        prop_assert!(path.y_vals.last().unwrap().abs() <= 1e-9 * y);
        prop_assert!(path.t_bar.is_finite());
    }

    /// Selling everything at once costs `AΨ(z − y)`; the optimum can only
    /// be cheaper, and it matches the cost of its own path.
    #[test]
    fn value_beats_immediate_liquidation(y in 1.0..900.0f64, zf in 0.0..0.1f64) {
        let (p, t) = bm_setup();
        let vf = ValueFunction::new(p, t).unwrap();
        let z = zf * p.zbar();
        let v = vf.value(y, z).unwrap();
        let dump = p.a() * p.shape.psi_antiderivative(z - y);
        prop_assert!(v <= dump * (1.0 + 1e-12), "v {} vs dump {}", v, dump);
        let path = strategy::simulate(p, t, y, z, &StepControl::default()).unwrap();
        let j = performance(&path, p).unwrap();
        prop_assert!((v - j).abs() <= 1e-6 * (1.0 + v.abs()));
    }

    #[test]
    fn sampler_streams_are_order_independent(seed in any::<u64>(), k in 0usize..32) {
        let times = PathSampler::uniform_grid(1.0, 0.05);
        let s = PathSampler::new(lvg_setup().0.levy.clone(), times, 1e-3, seed).unwrap();
        let batch = s.sample_increments(32);
        prop_assert_eq!(&batch[k], &s.path_increments(k as u64));
    }
}
