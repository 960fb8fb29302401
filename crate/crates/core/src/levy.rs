//! The unaffected-price Lévy process and its cumulant.
//!
//! `L_t = μt + σW_t + ∫∫ z (N(ds,dz) − ds ν(dz))`, with cumulant
//! `κ(θ) = μθ + σ²θ²/2 + ∫(e^{θz} − 1 − θz) ν(dz)`. The running risk cost of
//! holding `y` shares for a CARA agent with risk aversion `A` is
//! `κ_A(y) = κ(−Ay)`.

use crate::error::{Error, Result};
use crate::quad::{self, Estimate, Tolerance, DEFAULT_TOL};
use crate::table;

/// Variance-gamma parameters `(ρ, η, θ)` of the linear Lévy approximation
/// to the exponential variance-gamma model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VgParams {
    pub rho: f64,
    pub eta: f64,
    pub theta: f64,
}

impl VgParams {
    pub fn new(rho: f64, eta: f64, theta: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::domain("vg.rho", rho, "(0, inf)"));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::domain("vg.eta", eta, "(0, inf)"));
        }
        if !theta.is_finite() {
            return Err(Error::domain("vg.theta", theta, "finite reals"));
        }
        let p = VgParams { rho, eta, theta };
        if !(p.log_argument() > 0.0) {
            return Err(Error::invalid(format!(
                "variance-gamma parameters need 1 - rho^2 eta / 2 - theta eta > 0, got {}",
                p.log_argument()
            )));
        }
        if !(p.d() > p.c().abs()) {
            return Err(Error::invalid(
                "variance-gamma tails are not square-integrable (D <= |C|)",
            ));
        }
        Ok(p)
    }

    /// `C = θ/ρ²`.
    pub fn c(&self) -> f64 {
        self.theta / (self.rho * self.rho)
    }

    /// `D = sqrt(θ² + 2ρ²/η)/ρ²`.
    pub fn d(&self) -> f64 {
        let r2 = self.rho * self.rho;
        (self.theta * self.theta + 2.0 * r2 / self.eta).sqrt() / r2
    }

    fn log_argument(&self) -> f64 {
        1.0 - self.rho * self.rho * self.eta / 2.0 - self.theta * self.eta
    }

    /// Drift that makes the linear process match the exponential model:
    /// `μ = −ln(1 − ρ²η/2 − θη)/η`.
    pub fn implied_drift(&self) -> f64 {
        -self.log_argument().ln() / self.eta
    }

    /// Lévy density in the log coordinate `u = ln(1 + z)`:
    /// `ν(dz) = e^{Cu − D|u|} / (η|u|) du`.
    pub fn density_u(&self, u: f64) -> f64 {
        if u == 0.0 || !u.is_finite() {
            return 0.0;
        }
        (self.c() * u - self.d() * u.abs()).exp() / (self.eta * u.abs())
    }
}

/// A jump measure given by a piecewise-linear density on a finite
/// z-interval inside `(−1, ∞)`; mass outside the table is truncated.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    z: Vec<f64>,
    density: Vec<f64>,
}

impl TabulatedDensity {
    pub fn new(rows: Vec<(f64, f64)>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::invalid(
                "a jump density table needs at least two rows",
            ));
        }
        let (z, density): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
        if z.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "jump table abscissae must be strictly increasing",
            ));
        }
        if !(z[0] > -1.0) {
            return Err(Error::domain("jump table lower bound", z[0], "(-1, inf)"));
        }
        if let Some(&d) = density.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(Error::domain("jump density", d, "[0, inf)"));
        }
        Ok(TabulatedDensity { z, density })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::new(table::parse_two_column(text)?)
    }

    /// Declared truncation bounds `(z_min, z_max)`.
    pub fn support(&self) -> (f64, f64) {
        (self.z[0], self.z[self.z.len() - 1])
    }

    pub fn density(&self, z: f64) -> f64 {
        let (lo, hi) = self.support();
        if z < lo || z > hi {
            return 0.0;
        }
        table::lerp(&self.z, &self.density, z).max(0.0)
    }
}

/// The jump part of the Lévy triplet.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpSpec {
    None,
    VarianceGamma(VgParams),
    Table(TabulatedDensity),
}

impl JumpSpec {
    /// Computes `∫_{[a,b]∖{0}} g(z) ν(dz)` for `−1 ≤ a ≤ b ≤ ∞`.
    ///
    /// Variance-gamma integrals run in `u = ln(1 + z)`, which maps the
    /// boundary singularity at `z = −1` to an exponentially decaying tail.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: G, a: f64, b: f64, tol: Tolerance) -> Estimate {
        let zero = Estimate {
            value: 0.0,
            error: 0.0,
            evals: 0,
            converged: true,
        };
        match self {
            JumpSpec::None => zero,
            JumpSpec::VarianceGamma(p) => {
                let ua = if a <= -1.0 {
                    f64::NEG_INFINITY
                } else {
                    a.ln_1p()
                };
                let ub = if b == f64::INFINITY {
                    f64::INFINITY
                } else {
                    b.ln_1p()
                };
                if !(ub > ua) {
                    return zero;
                }
                let w = |u: f64| {
                    if u == 0.0 {
                        return 0.0;
                    }
                    let dens = p.density_u(u);
                    if dens == 0.0 {
                        return 0.0;
                    }
                    g(u.exp_m1()) * dens
                };
                let neg_scale = 1.0 / (p.c() + p.d());
                let pos_scale = 1.0 / (p.d() - p.c());
                let mut parts = Vec::with_capacity(2);
                if ua < 0.0 {
                    let hi = ub.min(0.0);
                    parts.push(if ua == f64::NEG_INFINITY {
                        quad::integrate_from_neg_infinity(w, hi, neg_scale, tol)
                    } else {
                        quad::integrate(w, ua, hi, tol)
                    });
                }
                if ub > 0.0 {
                    let lo = ua.max(0.0);
                    parts.push(if ub == f64::INFINITY {
                        quad::integrate_to_infinity(w, lo, pos_scale, tol)
                    } else {
                        quad::integrate(w, lo, ub, tol)
                    });
                }
                combine(&parts)
            }
            JumpSpec::Table(t) => {
                let (lo, hi) = t.support();
                let a = a.max(lo);
                let b = b.min(hi);
                if !(b > a) {
                    return zero;
                }
                let mut pts: Vec<f64> = std::iter::once(a)
                    .chain(t.z.iter().copied().filter(|&z| z > a && z < b))
                    .chain((a < 0.0 && b > 0.0).then_some(0.0))
                    .chain(std::iter::once(b))
                    .collect();
                pts.sort_by(f64::total_cmp);
                pts.dedup();
                quad::integrate_piecewise(
                    |z| if z == 0.0 { 0.0 } else { g(z) * t.density(z) },
                    &pts,
                    tol,
                )
            }
        }
    }

    /// Lévy density with respect to `du`, `u = ln(1 + z)`.
    pub fn density_u(&self, u: f64) -> f64 {
        match self {
            JumpSpec::None => 0.0,
            JumpSpec::VarianceGamma(p) => p.density_u(u),
            JumpSpec::Table(t) => {
                let z = u.exp_m1();
                t.density(z) * u.exp()
            }
        }
    }

    /// `inf` of the support of ν (≥ −1), or 0 when there are no jumps.
    pub fn support_lower(&self) -> f64 {
        match self {
            JumpSpec::None => 0.0,
            JumpSpec::VarianceGamma(_) => -1.0,
            JumpSpec::Table(t) => t.support().0,
        }
    }

    /// `sup` of the support of ν, or 0 when there are no jumps.
    pub fn support_upper(&self) -> f64 {
        match self {
            JumpSpec::None => 0.0,
            JumpSpec::VarianceGamma(_) => f64::INFINITY,
            JumpSpec::Table(t) => t.support().1,
        }
    }
}

fn combine(parts: &[Estimate]) -> Estimate {
    parts.iter().fold(
        Estimate {
            value: 0.0,
            error: 0.0,
            evals: 0,
            converged: true,
        },
        |acc, e| Estimate {
            value: acc.value + e.value,
            error: acc.error + e.error,
            evals: acc.evals + e.evals,
            converged: acc.converged && e.converged,
        },
    )
}

/// `e^w − 1 − w` without cancellation for small `|w|`.
pub fn exp_m1_m_x(w: f64) -> f64 {
    if w.abs() < 1e-3 {
        let w2 = w * w;
        w2 * (0.5 + w * (1.0 / 6.0 + w * (1.0 / 24.0 + w * (1.0 / 120.0 + w / 720.0))))
    } else {
        w.exp_m1() - w
    }
}

/// Drift, diffusion and jump measure of the unaffected price process.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyModel {
    /// Drift μ ≤ 0 (price units per day).
    pub mu: f64,
    /// Diffusion variance σ² ≥ 0 (price units² per day).
    pub sigma2: f64,
    pub jumps: JumpSpec,
}

impl LevyModel {
    pub fn new(mu: f64, sigma2: f64, jumps: JumpSpec) -> Result<Self> {
        if !mu.is_finite() || mu > 0.0 {
            return Err(Error::domain(
                "mu",
                mu,
                "(-inf, 0] (the unaffected price must be a supermartingale)",
            ));
        }
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::domain("sigma2", sigma2, "[0, inf)"));
        }
        Ok(LevyModel { mu, sigma2, jumps })
    }

    /// Brownian motion with drift.
    pub fn brownian(mu: f64, sigma2: f64) -> Result<Self> {
        Self::new(mu, sigma2, JumpSpec::None)
    }

    /// `κ(θ)`; `+∞` where the exponential moment does not exist.
    pub fn cumulant(&self, theta: f64) -> f64 {
        if theta == 0.0 {
            return 0.0;
        }
        let base = self.mu * theta + 0.5 * self.sigma2 * theta * theta;
        if theta > 0.0 && self.jumps.support_upper() == f64::INFINITY {
            return f64::INFINITY;
        }
        let jump =
            self.jumps
                .integrate(|z| exp_m1_m_x(theta * z), -1.0, f64::INFINITY, DEFAULT_TOL);
        if !jump.value.is_finite() {
            return f64::INFINITY;
        }
        base + jump.value
    }

    /// `κ′(θ) = μ + σ²θ + ∫ z (e^{θz} − 1) ν(dz)`.
    pub fn cumulant_prime(&self, theta: f64) -> f64 {
        let base = self.mu + self.sigma2 * theta;
        if theta == 0.0 {
            return base;
        }
        if theta > 0.0 && self.jumps.support_upper() == f64::INFINITY {
            return f64::INFINITY;
        }
        let jump = self.jumps.integrate(
            |z| z * (theta * z).exp_m1(),
            -1.0,
            f64::INFINITY,
            DEFAULT_TOL,
        );
        if !jump.value.is_finite() {
            return f64::INFINITY;
        }
        base + jump.value
    }

    /// `κ″(θ) = σ² + ∫ z² e^{θz} ν(dz)`.
    pub fn cumulant_second(&self, theta: f64) -> f64 {
        if theta > 0.0 && self.jumps.support_upper() == f64::INFINITY {
            return f64::INFINITY;
        }
        let jump = self.jumps.integrate(
            |z| z * z * (theta * z).exp(),
            -1.0,
            f64::INFINITY,
            DEFAULT_TOL,
        );
        self.sigma2 + jump.value
    }

    /// `∫ z² ν(dz)`.
    pub fn jump_second_moment(&self) -> f64 {
        self.jumps
            .integrate(|z| z * z, -1.0, f64::INFINITY, DEFAULT_TOL)
            .value
    }

    /// Variance of `L_1`.
    pub fn variance(&self) -> f64 {
        self.sigma2 + self.jump_second_moment()
    }

    /// `κ_A(y) = κ(−Ay)`.
    pub fn kappa_a(&self, a: f64, y: f64) -> f64 {
        self.cumulant(-a * y)
    }

    /// `κ_A′(y) = −A κ′(−Ay)`, evaluated from the differentiated integrand.
    pub fn kappa_a_prime(&self, a: f64, y: f64) -> f64 {
        if y >= self.ybar_a(a) {
            return f64::INFINITY;
        }
        -a * self.cumulant_prime(-a * y)
    }

    /// `ȳ_A = sup{y ≥ 0 | κ_A(y) < ∞}`.
    ///
    /// `κ_A(y)` integrates `e^{−Ayz}` against ν. Every supported jump
    /// measure is carried by `(−1, ∞)`, where that factor is bounded by
    /// `e^{Ay}` on the negative half-line and by 1 on the positive one, so
    /// the moment exists for all `y` and `ȳ_A = +∞`.
    pub fn ybar_a(&self, a: f64) -> f64 {
        debug_assert!(a > 0.0);
        debug_assert!(self.jumps.support_lower() >= -1.0);
        f64::INFINITY
    }
}
