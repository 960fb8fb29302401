//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so each criterion reports its
//! measured figures next to the pinned tolerance, and the process exits
//! non-zero if any criterion fails.

use std::time::Instant;

use lobexit::boundary::{solve_beta, tabulate, GridSpec};
use lobexit::montecarlo::{estimate_utility, PathSampler};
use lobexit::oracle::{self, GridSpec as DpGrid};
use lobexit::strategy::{self, initial_action, InitialAction, StepControl};
use lobexit::valuation::{self, hjb_check, SampleSpec, ValueFunction};
use lobexit::{BookShape, BoundaryTable, JumpSpec, LevyModel, Problem, Resilience, VgParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ───────────────────────────────────────────────────────────────────
// Pinned tolerances
// ───────────────────────────────────────────────────────────────────

/// Relative error of the solved boundary against the closed form.
const CLOSED_FORM_REL: f64 = 1e-8;
/// Accepted initial block sizes (shares) and post-block best bids.
const LVG_BLOCK: (f64, f64) = (180.0, 220.0);
const BM_BLOCK: (f64, f64) = (135.0, 165.0);
/// `|v − J| ≤ VALUE_PATH_REL · (1 + |v|)`.
const VALUE_PATH_REL: f64 = 1e-6;
/// Normalised HJB residual bound.
const HJB_TOL: f64 = 1e-8;
/// DP error in units of the lattice step cost, refinement ratio, and the
/// frontier distance in cells.
const DP_ERROR_STEPS: f64 = 5.0;
const DP_REFINE_RATIO: f64 = 1.8;
const DP_FRONTIER_CELLS: f64 = 2.0;
/// Monte Carlo agreement in standard errors.
const MC_SIGMAS: f64 = 3.0;
/// Decay semigroup / waiting-time identity.
const DECAY_TOL: f64 = 1e-9;

// ───────────────────────────────────────────────────────────────────
// Configurations
// ───────────────────────────────────────────────────────────────────

const MU: f64 = -0.0018;
const SIGMA2: f64 = 4.011e-4;
const N_BOOK: f64 = 1000.0;
const LAMBDA: f64 = 5.0;

fn book() -> BookShape {
    BookShape::block(N_BOOK, -1.0).unwrap()
}

fn resilience() -> Resilience {
    Resilience::exponential(LAMBDA).unwrap()
}

fn bm(a: f64) -> Problem {
    bm_with_drift(a, MU)
}

fn bm_with_drift(a: f64, mu: f64) -> Problem {
    Problem::new(
        LevyModel::brownian(mu, SIGMA2).unwrap(),
        book(),
        resilience(),
        a,
    )
    .unwrap()
}

fn lvg(a: f64) -> Problem {
    let vg = VgParams::new(0.02, 0.6, -0.002).unwrap();
    let levy = LevyModel::new(MU, 0.0, JumpSpec::VarianceGamma(vg)).unwrap();
    Problem::new(levy, book(), resilience(), a).unwrap()
}

/// Independent closed form of the block/exponential boundary: the
/// non-positive root of `(λA/n)x² + κ_A′x − κ_A = 0`, with the Brownian
/// cumulant `κ_A(y) = −Aμy + A²σ²y²/2` written out here.
fn beta_closed_form(a: f64, mu: f64, s2: f64, y: f64) -> f64 {
    let (n, l) = (N_BOOK, LAMBDA);
    let k = -a * mu * y + 0.5 * a * a * s2 * y * y;
    let kp = -a * mu + a * a * s2 * y;
    n / (2.0 * l * a) * (-kp - (kp * kp + 4.0 * l * a * k / n).sqrt())
}

// ───────────────────────────────────────────────────────────────────
// Reporting
// ───────────────────────────────────────────────────────────────────

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let o = f();
    println!(
        "{} [{id}] {name}: {} ({:.1} s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        t0.elapsed().as_secs_f64()
    );
    o.pass
}

// ───────────────────────────────────────────────────────────────────
// Criteria
// ───────────────────────────────────────────────────────────────────

fn closed_form_boundary() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut at = (0.0, 0.0);
    for &a in &[1e-3, 1e-2] {
        let p = bm(a);
        for k in 0..500 {
            // log-spaced holdings over (0, 1e4]
            let y = 10f64.powf(-3.0 + 7.0 * (k as f64 + 1.0) / 500.0);
            let b = solve_beta(&p, y).unwrap().upper;
            let cf = beta_closed_form(a, MU, SIGMA2, y);
            let e = ((b - cf) / cf).abs();
            if e > worst {
                worst = e;
                at = (a, y);
            }
        }
    }
    outcome(
        worst <= CLOSED_FORM_REL,
        format!(
            "max rel error {worst:.2e} at A={:e}, y={:.4e} over 2x500 points (tol {CLOSED_FORM_REL:e})",
            at.0, at.1
        ),
    )
}

fn block_size(p: &Problem, y: f64) -> f64 {
    let table = tabulate(p, &GridSpec::new(y)).unwrap();
    match initial_action(p, &table, y, 0.0).unwrap() {
        InitialAction::Block(d) => d,
        InitialAction::Wait(_) => 0.0,
    }
}

fn example_blocks() -> Outcome {
    let y0 = 1e4;
    let lvg_block = block_size(&lvg(1e-2), y0);
    let bm_block = block_size(&bm(1e-2), y0);
    // closed-form cross-check of the BM block: γ(y') = −y0
    let g = |y: f64| beta_closed_form(1e-2, MU, SIGMA2, y) - y + y0;
    let (mut lo, mut hi) = (0.0, y0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let bm_cf = y0 - 0.5 * (lo + hi);
    // best bid after the block, unaffected price 1
    let bid = |d: f64| 1.0 + book().psi(-d);
    let ok = (LVG_BLOCK.0..=LVG_BLOCK.1).contains(&lvg_block)
        && (BM_BLOCK.0..=BM_BLOCK.1).contains(&bm_block);
    outcome(
        ok,
        format!(
            "LVG block {lvg_block:.2} (bid {:.4}) vs [{}, {}]; BM block {bm_block:.2} (bid {:.4}, closed form {bm_cf:.2}) vs [{}, {}]",
            bid(lvg_block),
            LVG_BLOCK.0,
            LVG_BLOCK.1,
            bid(bm_block),
            BM_BLOCK.0,
            BM_BLOCK.1
        ),
    )
}

fn value_vs_performance() -> Outcome {
    let p = bm(1e-2);
    let table = tabulate(&p, &GridSpec::new(500.0)).unwrap();
    let vf = ValueFunction::new(&p, &table).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut counts = [0usize; 3];
    for k in 0..50 {
        let y = 1.0 + 479.0 * rng.random::<f64>();
        let b = table.beta(y);
        let z = match k % 3 {
            0 => b * rng.random::<f64>(),
            1 => b + (p.zbar() - b) * rng.random::<f64>(),
            _ => b,
        };
        counts[k % 3] += 1;
        let v = vf.value(y, z).unwrap();
        let path = strategy::simulate(&p, &table, y, z, &StepControl::default()).unwrap();
        let j = valuation::performance(&path, &p).unwrap();
        worst = worst.max((v - j).abs() / (1.0 + v.abs()));
    }
    outcome(
        worst <= VALUE_PATH_REL,
        format!(
            "max |v-J|/(1+|v|) = {worst:.2e} over {} sell / {} wait / {} boundary states (tol {VALUE_PATH_REL:e})",
            counts[0], counts[1], counts[2]
        ),
    )
}

fn hjb_residuals() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, p) in [
        ("BM A=1e-2", bm(1e-2)),
        ("BM A=1e-3", bm(1e-3)),
        ("LVG A=1e-2", lvg(1e-2)),
    ] {
        let table = tabulate(&p, &GridSpec::new(1e4)).unwrap();
        let vf = ValueFunction::new(&p, &table).unwrap();
        let rep = hjb_check(&vf, &SampleSpec::default(), HJB_TOL).unwrap();
        ok &= rep.violations.is_empty();
        lines.push(format!(
            "{name}: {} pts, h1 {:.1e} h2 {:.1e} h3 {:.1e} h4 {:.1e}, {} violations",
            rep.n_points,
            rep.max_h1,
            rep.max_h2,
            rep.max_h3,
            rep.max_h4,
            rep.violations.len()
        ));
    }
    outcome(ok, format!("{} (tol {HJB_TOL:e})", lines.join("; ")))
}

fn dp_oracle() -> Outcome {
    let p = bm(1e-2);
    let table = tabulate(&p, &GridSpec::new(400.0)).unwrap();
    let vf = ValueFunction::new(&p, &table).unwrap();
    let coarse = oracle::solve_dp(&p, &DpGrid::new(400.0, 200, 200)).unwrap();
    let fine = oracle::solve_dp(&p, &DpGrid::new(400.0, 400, 400)).unwrap();
    let c1 = oracle::compare(&coarse, &vf).unwrap();
    let c2 = oracle::compare(&fine, &vf).unwrap();
    let ratio = c1.max_abs_error / c2.max_abs_error;
    let ok = c1.max_abs_error <= DP_ERROR_STEPS * c1.step_cost_scale
        && ratio >= DP_REFINE_RATIO
        && c1.frontier_cells <= DP_FRONTIER_CELLS;
    outcome(
        ok,
        format!(
            "200x200: max|V-v| {:.3e} at ({:.0},{:.0}) = {:.2} step costs ({:.3e}); 400x400: {:.3e}; ratio {ratio:.2} (min {DP_REFINE_RATIO}); frontier {:.2} cells (max {DP_FRONTIER_CELLS})",
            c1.max_abs_error,
            c1.at.0,
            c1.at.1,
            c1.max_abs_error / c1.step_cost_scale,
            c1.step_cost_scale,
            c2.max_abs_error,
            c1.frontier_cells
        ),
    )
}

fn monte_carlo_reduction() -> Outcome {
    let p = bm(1e-2);
    let a = p.a();
    let (y, z, b, c) = (100.0, 0.0, 1.0, 0.0);
    let table = tabulate(&p, &GridSpec::new(y)).unwrap();
    let ctl = StepControl::default();
    let path = strategy::simulate(&p, &table, y, z, &ctl).unwrap();
    let (risk, impact) = path.running_costs(&p);
    let tail = a * p.shape.psi_antiderivative(path.z_at_completion());
    let j = risk + impact + tail;
    let lemma = -a * (c + b * y) - a * p.shape.psi_antiderivative(z) + j;
    let theorem = -a * (c + b * y)
        + a * (p.shape.psi_antiderivative(z - y) - p.shape.psi_antiderivative(z))
        + j;
    let times = PathSampler::uniform_grid(path.t_end, 1e-3);
    let mut zl = Vec::new();
    let mut zt = Vec::new();
    for seed in 1..=5u64 {
        let s = PathSampler::new(p.levy.clone(), times.clone(), 1e-3, seed).unwrap();
        let est = estimate_utility(&path, &p, &s, c, b, 100_000).unwrap();
        let (m, se) = est.log_neg_mean();
        zl.push((m - lemma) / se);
        zt.push((m - theorem) / se);
    }
    let lemma_ok = zl.iter().all(|z| z.abs() <= MC_SIGMAS);
    let theorem_ok = zt.iter().all(|z| z.abs() <= MC_SIGMAS);
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|z| format!("{z:.2}"))
            .collect::<Vec<_>>()
            .join(",")
    };
    outcome(
        lemma_ok && !theorem_ok,
        format!(
            "selected {} exponent; z-scores lemma [{}] theorem [{}] over 5 seeds x 1e5 paths (|z| <= {MC_SIGMAS})",
            if lemma_ok && !theorem_ok {
                "int_z^0 psi"
            } else if theorem_ok && !lemma_ok {
                "int_z^(z-y) psi"
            } else {
                "no consistent"
            },
            fmt(&zl),
            fmt(&zt)
        ),
    )
}

fn property_suites() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let p = bm(1e-2);
    let table = tabulate(&p, &GridSpec::new(1000.0)).unwrap();

    // inverse identities on the tabulated graph; tolerance from the
    // boundary's own interpolation error at cell midpoints
    let mut interp: f64 = 0.0;
    for i in (1..table.y.len()).step_by(17) {
        let ym = 0.5 * (table.y[i - 1] + table.y[i]);
        interp = interp.max((table.beta(ym) - solve_beta(&p, ym).unwrap().upper).abs());
    }
    let tol = 2.0 * interp.max(1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut iden: f64 = 0.0;
    let s_min = table.s_min();
    for _ in 0..1000 {
        let x = s_min * rng.random::<f64>();
        let g = table.gamma_beta_inv(x).unwrap();
        iden = iden.max((table.rho_beta_inv(x).unwrap() - (x + g)).abs());
        let zz = table.beta(table.y_max()) * rng.random::<f64>();
        let bi = table.beta_inv(zz).0;
        iden = iden.max((table.gamma_beta_inv(table.rho_beta(zz)).unwrap() - bi).abs());
        let yy = table.y_max() * rng.random::<f64>();
        iden = iden.max((table.rho_beta_inv(table.gamma_beta(yy)).unwrap() - table.beta(yy)).abs());
    }
    ok &= iden <= tol;
    notes.push(format!("identities {iden:.1e} (tol {tol:.1e})"));

    // decay semigroup and waiting-time identity
    let r = resilience();
    let mut dec: f64 = 0.0;
    for _ in 0..1000 {
        let z0 = -1000.0 * rng.random::<f64>();
        let (t1, t2) = (rng.random::<f64>(), rng.random::<f64>());
        let a = r.decay(r.decay(z0, t1), t2);
        let b = r.decay(z0, t1 + t2);
        dec = dec.max((a - b).abs() / (1.0 + b.abs()));
        let zt = r.decay(z0, t1);
        dec = dec.max((r.recovery_time(z0, zt) - t1).abs());
    }
    ok &= dec <= DECAY_TOL;
    notes.push(format!("decay {dec:.1e}"));

    // κ convexity and derivative checks with Richardson-consistent FD
    let lp = lvg(1e-2);
    let mut conv_ok = true;
    let mut fd: f64 = 0.0;
    for k in 1..40 {
        let y = 25.0 * k as f64;
        let (km, k0, kp) = (lp.kappa(y - 1.0), lp.kappa(y), lp.kappa(y + 1.0));
        conv_ok &= km + kp - 2.0 * k0 > 0.0;
        let d = |h: f64| (lp.kappa(y + h) - lp.kappa(y - h)) / (2.0 * h);
        let rich = (4.0 * d(0.05) - d(0.1)) / 3.0;
        fd = fd.max((rich - lp.kappa_prime(y)).abs() / lp.kappa_prime(y));
    }
    ok &= conv_ok && fd <= 1e-6;
    notes.push(format!("kappa convex {conv_ok}, kappa' vs FD {fd:.1e}"));

    // small-holding limits of the boundary terms (zero drift, where both
    // limits vanish)
    let p0 = bm_with_drift(1e-2, 0.0);
    let mut prev = (f64::INFINITY, f64::INFINITY);
    let mut mono = true;
    for k in 1..=8 {
        let y = 10f64.powi(-k);
        let b = solve_beta(&p0, y).unwrap().upper;
        let t1 = (p0.kappa(y) / r.h(b)).abs();
        let t2 = (p0.kappa_prime(y) * r.big_h(b)).abs();
        mono &= t1 < prev.0 && t2 < prev.1;
        prev = (t1, t2);
    }
    mono &= prev.0 < 1e-9 && prev.1 < 1e-6;
    ok &= mono;
    notes.push(format!(
        "limits monotone to 0 {mono} (last {:.1e}, {:.1e})",
        prev.0, prev.1
    ));

    // perturbed strategies never beat the boundary strategy
    let vf = ValueFunction::new(&p, &table).unwrap();
    let (y0, z0) = (400.0, 0.0);
    let v = vf.value(y0, z0).unwrap();
    let ctl = StepControl::default();
    let mut worst_gap = f64::INFINITY;
    for k in 0..50 {
        let path = if k < 25 {
            let f = 0.5 + rng.random::<f64>();
            let st = 0.5 + 1.5 * rng.random::<f64>();
            let pt = perturbed(&p, &table, f, st, y0);
            strategy::simulate(&p, &pt, y0, z0, &ctl).unwrap()
        } else {
            let d0 = match initial_action(&p, &table, y0, z0).unwrap() {
                InitialAction::Block(d) => d,
                InitialAction::Wait(_) => 0.0,
            };
            let d = d0 * (1.0 + 2.0 * rng.random::<f64>());
            // the block itself is free in J; the rest of the path differs
            strategy::simulate(&p, &table, y0 - d, z0 - d, &ctl).unwrap()
        };
        let j = valuation::performance(&path, &p).unwrap();
        worst_gap = worst_gap.min(j - v);
    }
    let dom = worst_gap >= -VALUE_PATH_REL * (1.0 + v);
    ok &= dom;
    notes.push(format!("min J(perturbed)-v = {worst_gap:.2e} over 50"));

    // Monte Carlo: utility of the boundary strategy against 20 perturbed
    // ones with common random numbers
    let (ym, zm) = (100.0, 0.0);
    let tm = tabulate(&p, &GridSpec::new(200.0)).unwrap();
    let base = strategy::simulate(&p, &tm, ym, zm, &ctl).unwrap();
    let mut paths = vec![];
    for _ in 0..20 {
        let f = 0.5 + rng.random::<f64>();
        let st = 0.5 + 1.5 * rng.random::<f64>();
        let pt = perturbed(&p, &tm, f, st, ym);
        paths.push(strategy::simulate(&p, &pt, ym, zm, &ctl).unwrap());
    }
    let t_end = paths.iter().map(|q| q.t_end).fold(base.t_end, f64::max);
    let s = PathSampler::new(
        p.levy.clone(),
        PathSampler::uniform_grid(t_end, 1e-2),
        1e-3,
        99,
    )
    .unwrap();
    let ub = estimate_utility(&base, &p, &s, 0.0, 1.0, 20_000).unwrap();
    let mut mc_ok = true;
    for q in &paths {
        let u = estimate_utility(q, &p, &s, 0.0, 1.0, 20_000).unwrap();
        mc_ok &= ub.mean >= u.mean - MC_SIGMAS * (ub.stderr + u.stderr);
    }
    ok &= mc_ok;
    notes.push(format!("MC dominance over 20 perturbations {mc_ok}"));

    outcome(ok, notes.join("; "))
}

/// `β̃(y) = f · β(st · y)` on the holding range `[0, y_max]`.
fn perturbed(p: &Problem, t: &BoundaryTable, f: f64, st: f64, y_max: f64) -> BoundaryTable {
    let n = 1024;
    let ys: Vec<f64> = (0..=n).map(|k| y_max * k as f64 / n as f64).collect();
    let span = t.y_max() / st;
    let b = |y: f64| {
        let yy = (st * y).min(t.y_max());
        let extra = if y > span { y - span } else { 0.0 };
        (f * t.beta(yy) - extra).max(p.zbar())
    };
    let upper: Vec<f64> = ys
        .iter()
        .map(|&y| if y == 0.0 { 0.0 } else { b(y) })
        .collect();
    let mut lower = upper.clone();
    lower[0] = (f * t.beta0).max(p.zbar());
    BoundaryTable::from_nodes(p, ys, upper, lower).unwrap()
}

fn main() {
    let results = [
        run(1, "closed-form boundary match", closed_form_boundary),
        run(2, "example initial block sizes", example_blocks),
        run(3, "value equals path performance", value_vs_performance),
        run(4, "HJB residuals", hjb_residuals),
        run(5, "dynamic-programming oracle", dp_oracle),
        run(
            6,
            "Monte Carlo reduction and exponent selection",
            monte_carlo_reduction,
        ),
        run(7, "property suites", property_suites),
    ];
    let failed = results.iter().filter(|r| !**r).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
