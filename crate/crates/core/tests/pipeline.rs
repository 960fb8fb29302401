//! The whole chain on inputs without closed forms: a tabulated book,
//! tabulated resilience and a tabulated jump density.

use lobexit::boundary::{tabulate, GridSpec};
use lobexit::montecarlo::{estimate_utility, PathSampler};
use lobexit::oracle::{self, compare, solve_dp};
use lobexit::strategy::{self, classify, Region, StepControl};
use lobexit::valuation::{hjb_check, performance, utility, SampleSpec, ValueFunction};
use lobexit::{
    BookShape, JumpSpec, LevyModel, Problem, Resilience, TableResilience, TableShape,
    TabulatedDensity,
};

const BOOK: &str = "\
# price offset, bid density (shares per unit price)
-2.0, 100
-1.0, 300
-0.5, 500
 0.0, 800
";

const RESILIENCE: &str = "\
-3.0  -9.0
-1.0  -4.0
-0.2  -0.9
 0.0   0.0
";

/// Symmetric-ish jumps of a few percent, heavier on the downside.
const JUMPS: &str = "\
-0.06 0
-0.04 40
-0.02 120
-0.005 300
0.005 250
0.02 80
0.04 20
0.05 0
";

fn problem() -> Problem {
    let levy = LevyModel::new(
        -0.001,
        1e-4,
        JumpSpec::Table(TabulatedDensity::parse(JUMPS).unwrap()),
    )
    .unwrap();
    Problem::new(
        levy,
        BookShape::Table(TableShape::parse(BOOK).unwrap()),
        Resilience::Table(TableResilience::parse(RESILIENCE).unwrap()),
        2e-2,
    )
    .unwrap()
}

#[test]
fn table_models_satisfy_every_check() {
    let p = problem();
    let zbar = p.zbar();
    assert!((zbar + 725.0).abs() < 1e-9);
    assert_eq!(p.ybar(), f64::INFINITY);

    let table = tabulate(&p, &GridSpec::new(400.0)).unwrap();
    let vf = ValueFunction::new(&p, &table).unwrap();

    // value equals the cost of the path it induces, in every region
    let mut seen = [false; 3];
    for &(y, z) in &[
        (300.0, 0.0),
        (300.0, -150.0),
        (50.0, -400.0),
        (200.0, -100.0),
        (10.0, -5.0),
    ] {
        let region = classify(&p, &table, y, z).unwrap();
        seen[region as usize] = true;
        let v = vf.value(y, z).unwrap();
        let path = strategy::simulate(&p, &table, y, z, &StepControl::default()).unwrap();
        let j = performance(&path, &p).unwrap();
        assert!(
            (v - j).abs() <= 1e-6 * (1.0 + v.abs()),
            "({y}, {z}) {region:?}: v {v} vs J {j}"
        );
    }
    let on = table.beta(120.0);
    assert_eq!(classify(&p, &table, 120.0, on).unwrap(), Region::OnBoundary);
    assert!(seen[Region::Sell as usize] && seen[Region::Wait as usize]);

    // HJB residuals
    let spec = SampleSpec {
        n_points: 2000,
        ..SampleSpec::default()
    };
    let rep = hjb_check(&vf, &spec, 1e-8).unwrap();
    assert!(
        rep.violations.is_empty(),
        "{} violations",
        rep.violations.len()
    );
    assert!(rep.n_sell > 0 && rep.n_wait > 0 && rep.n_graph > 0);

    // dynamic programming agrees at lattice resolution
    let sol = solve_dp(&p, &oracle::GridSpec::new(300.0, 150, 150)).unwrap();
    let cmp = compare(&sol, &vf).unwrap();
    assert!(
        cmp.max_abs_error <= 5.0 * cmp.step_cost_scale,
        "{} vs {}",
        cmp.max_abs_error,
        cmp.step_cost_scale
    );
    assert!(cmp.frontier_cells <= 2.0, "{}", cmp.frontier_cells);
}

#[test]
fn table_jump_model_monte_carlo_matches_closed_form() {
    let p = problem();
    let (y, z, b, c) = (200.0, -20.0, 1.0, 0.0);
    let table = tabulate(&p, &GridSpec::new(y)).unwrap();
    let vf = ValueFunction::new(&p, &table).unwrap();
    let v = vf.value(y, z).unwrap();
    let path = strategy::simulate(&p, &table, y, z, &StepControl::default()).unwrap();
    let forms = utility(&p, b, c, y, z, v).unwrap();
    let times = PathSampler::uniform_grid(path.t_end, 2e-3);
    // every tabulated jump exceeds the truncation, so nothing is folded in
    let sampler = PathSampler::new(p.levy.clone(), times, 1e-3, 5).unwrap();
    let est = estimate_utility(&path, &p, &sampler, c, b, 20_000).unwrap();
    let (m, se) = est.log_neg_mean();
    let zscore = (m - (-forms.lemma_form).ln()) / se;
    assert!(zscore.abs() <= 4.0, "z = {zscore}");
}
