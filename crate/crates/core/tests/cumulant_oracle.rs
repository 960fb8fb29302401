//! The variance-gamma cumulant against a quadrature written here from
//! scratch: the Lévy density in the log coordinate `u = ln(1+z)`,
//! `e^{Cu − D|u|}/(η|u|)`, is integrated after the substitution `u = ±e^s`,
//! which cancels the `1/|u|` singularity and leaves a smooth integrand that
//! decays exponentially as `s → −∞` and double-exponentially as `s → ∞`.
//! The trapezoidal rule is then spectrally accurate.

use lobexit::{JumpSpec, LevyModel, VgParams};

const RHO: f64 = 0.02;
const ETA: f64 = 0.6;
const THETA: f64 = -0.002;
const MU: f64 = -0.0018;

fn constants() -> (f64, f64) {
    let c = THETA / (RHO * RHO);
    let d = (THETA * THETA + 2.0 * RHO * RHO / ETA).sqrt() / (RHO * RHO);
    (c, d)
}

/// `e^w − 1 − w` without cancellation.
fn em1mx(w: f64) -> f64 {
    if w.abs() < 1e-3 {
        w * w * (0.5 + w * (1.0 / 6.0 + w * (1.0 / 24.0 + w / 120.0)))
    } else {
        w.exp_m1() - w
    }
}

/// `∫ g(z) ν(dz)` by the trapezoidal rule in `s` with step `h`.
fn jump_integral(g: impl Fn(f64) -> f64, h: f64) -> f64 {
    let (c, d) = constants();
    let mut total = 0.0;
    for sign in [-1.0, 1.0] {
        let mut s: f64 = -45.0;
        while s < 7.0 {
            let u = sign * s.exp();
            let w = (c * u - d * u.abs()).exp() / ETA;
            // beyond the double-exponential decay the weight underflows
            // while g may overflow
            if w > 0.0 {
                total += h * w * g(u.exp_m1());
            }
            s += h;
        }
    }
    total
}

fn kappa_oracle(theta: f64, h: f64) -> f64 {
    MU * theta + jump_integral(|z| em1mx(theta * z), h)
}

fn lvg() -> LevyModel {
    LevyModel::new(
        MU,
        0.0,
        JumpSpec::VarianceGamma(VgParams::new(RHO, ETA, THETA).unwrap()),
    )
    .unwrap()
}

#[test]
fn oracle_is_self_consistent_under_refinement() {
    for theta in [-1e-3, -1.0, -100.0] {
        let coarse = kappa_oracle(theta, 0.02);
        let fine = kappa_oracle(theta, 0.01);
        assert!(
            (coarse - fine).abs() <= 1e-12 * fine.abs(),
            "θ={theta}: {coarse} vs {fine}"
        );
    }
}

#[test]
fn vg_cumulant_matches_independent_quadrature() {
    let m = lvg();
    for theta in [-1e-4, -1e-3, -1e-2, -0.1, -1.0, -10.0, -100.0] {
        let want = kappa_oracle(theta, 0.01);
        let got = m.cumulant(theta);
        let rel = (got - want).abs() / want.abs();
        assert!(rel <= 1e-8, "θ={theta}: {got} vs {want} (rel {rel:e})");
    }
}

#[test]
fn vg_risk_cost_and_slope_at_example_holding() {
    let m = lvg();
    let (a, y) = (1e-2, 100.0);
    let k = -a * MU * y + jump_integral(|z| em1mx(-a * y * z), 0.01);
    let kp = -a * MU + a * jump_integral(|z| -(-a * y * z).exp_m1() * z, 0.01);
    let rel_k = (m.kappa_a(a, y) - k).abs() / k;
    let rel_kp = (m.kappa_a_prime(a, y) - kp).abs() / kp;
    assert!(rel_k <= 1e-6, "κ_A {} vs {k}", m.kappa_a(a, y));
    assert!(rel_kp <= 1e-6, "κ_A′ {} vs {kp}", m.kappa_a_prime(a, y));
}

#[test]
fn vg_variance_matches_brownian_example() {
    // the Brownian example's σ² was chosen to match this variance
    let var = jump_integral(|z| z * z, 0.01);
    assert!((var - 4.011e-4).abs() < 5e-7, "{var}");
    assert!((lvg().variance() - var).abs() <= 1e-9 * var);
}
