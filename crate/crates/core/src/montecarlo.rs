//! Monte Carlo of the unaffected price and the realised cash of a
//! deterministic strategy.
//!
//! Jumps larger than `ε` in absolute size are simulated as a compound
//! Poisson process from a tabulated inverse CDF; the small jumps are
//! replaced by a Brownian motion with the same variance. The compensator is
//! kept so that `E[L_t] = μt` exactly.
//!
//! Every path owns a ChaCha8 stream selected by its index, so results do not
//! depend on how paths are scheduled across threads, and per-path values are
//! reduced in index order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::levy::{exp_m1_m_x, JumpSpec, LevyModel};
use crate::quad::{self, DEFAULT_TOL};
use crate::strategy::{Piece, StrategyPath};
use crate::Problem;

/// Cells per side of the tabulated big-jump distribution.
const JUMP_CELLS: usize = 4096;

/// Exponent of the neglected tail mass when truncating an unbounded jump
/// distribution (`e^{−40}`).
const TAIL_EXPONENT: f64 = 40.0;

/// Largest `−A·C` fed to `exp`; larger exponents are clamped and counted.
const MAX_EXPONENT: f64 = 700.0;

/// Inverse CDF of the big jumps in `u = ln(1 + z)`.
#[derive(Debug, Clone)]
struct JumpTable {
    /// Cell edges in `u` (ascending) and cumulative mass at each right edge.
    lo: Vec<f64>,
    hi: Vec<f64>,
    cum: Vec<f64>,
}

impl JumpTable {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let total = *self.cum.last().unwrap();
        let r = rng.random::<f64>() * total;
        let k = self
            .cum
            .partition_point(|&c| c <= r)
            .min(self.cum.len() - 1);
        let u = self.lo[k] + rng.random::<f64>() * (self.hi[k] - self.lo[k]);
        u.exp_m1()
    }
}

/// Sampler of Lévy increments on a fixed time grid.
#[derive(Debug, Clone)]
pub struct PathSampler {
    pub model: LevyModel,
    pub times: Vec<f64>,
    pub eps: f64,
    pub seed: u64,
    /// `σ² + ∫_{|z|≤ε} z² ν(dz)`.
    pub diffusion: f64,
    /// `∫_{|z|>ε} ν(dz)`.
    pub intensity: f64,
    /// `∫_{|z|>ε} z ν(dz)`.
    pub big_mean: f64,
    table: Option<JumpTable>,
}

impl PathSampler {
    pub fn new(model: LevyModel, times: Vec<f64>, eps: f64, seed: u64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::domain("jump truncation", eps, "(0, 1)"));
        }
        if times.first().is_some_and(|&t| t != 0.0) {
            return Err(Error::invalid("time grid must start at 0"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("time grid must be strictly increasing"));
        }
        let (diffusion, intensity, big_mean, table) = match &model.jumps {
            JumpSpec::None => (model.sigma2, 0.0, 0.0, None),
            jumps => {
                let small = jumps.integrate(|z| z * z, -eps, eps, DEFAULT_TOL).value;
                let table = build_table(&model, eps);
                let (intensity, big_mean) = table_moments(jumps, &table);
                let table = (intensity > 0.0).then_some(table);
                (model.sigma2 + small, intensity, big_mean, table)
            }
        };
        Ok(PathSampler {
            model,
            times,
            eps,
            seed,
            diffusion,
            intensity,
            big_mean,
            table,
        })
    }

    /// A uniform grid `0, dt, 2dt, …` reaching at least `t_end`.
    pub fn uniform_grid(t_end: f64, dt: f64) -> Vec<f64> {
        let n = (t_end / dt).ceil().max(0.0) as usize;
        (0..=n).map(|k| k as f64 * dt).collect()
    }

    /// Changes `κ(θ)` by replacing small jumps with a Brownian motion:
    /// `|∫_{|z|≤ε} (e^{θz} − 1 − θz − θ²z²/2) ν(dz)|`.
    pub fn truncation_error(&self, theta: f64) -> f64 {
        self.model
            .jumps
            .integrate(
                |z| exp_m1_m_x(theta * z) - 0.5 * (theta * z).powi(2),
                -self.eps,
                self.eps,
                DEFAULT_TOL,
            )
            .value
            .abs()
    }

    fn rng(&self, path: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path);
        rng
    }

    fn increment(&self, rng: &mut ChaCha8Rng, dt: f64) -> f64 {
        let mu = self.model.mu;
        let gauss: f64 = rng.sample(StandardNormal);
        let mut dl = (mu - self.big_mean) * dt + (self.diffusion * dt).sqrt() * gauss;
        if let Some(table) = &self.table {
            let lam = self.intensity * dt;
            let n = if lam > 0.0 {
                Poisson::new(lam).map(|d| d.sample(rng) as u64).unwrap_or(0)
            } else {
                0
            };
            for _ in 0..n {
                dl += table.sample(rng);
            }
        }
        dl
    }

    /// Increments of path `index` over each grid interval.
    pub fn path_increments(&self, index: u64) -> Vec<f64> {
        let mut rng = self.rng(index);
        self.times
            .windows(2)
            .map(|w| self.increment(&mut rng, w[1] - w[0]))
            .collect()
    }

    /// Increments of paths `0..n_paths`.
    pub fn sample_increments(&self, n_paths: usize) -> Vec<Vec<f64>> {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|k| self.path_increments(k))
            .collect()
    }
}

/// Cells tiling `{|z| > ε}` in `u`, geometrically refined towards the cut
/// where the density of infinite-activity measures blows up.
fn build_table(model: &LevyModel, eps: f64) -> JumpTable {
    let jumps = &model.jumps;
    let (u_neg_end, u_pos_end) = match jumps {
        JumpSpec::VarianceGamma(p) => (
            -TAIL_EXPONENT / (p.c() + p.d()),
            TAIL_EXPONENT / (p.d() - p.c()),
        ),
        _ => (
            jumps.support_lower().max(-1.0 + 1e-12).ln_1p(),
            jumps.support_upper().ln_1p(),
        ),
    };
    let cut_neg = (-eps).ln_1p();
    let cut_pos = eps.ln_1p();
    let mut lo = Vec::with_capacity(2 * JUMP_CELLS);
    let mut hi = Vec::with_capacity(2 * JUMP_CELLS);
    if u_neg_end < cut_neg {
        let edges = geometric(-cut_neg, -u_neg_end);
        for w in edges.windows(2).rev() {
            lo.push(-w[1]);
            hi.push(-w[0]);
        }
    }
    if u_pos_end > cut_pos {
        let edges = geometric(cut_pos, u_pos_end);
        for w in edges.windows(2) {
            lo.push(w[0]);
            hi.push(w[1]);
        }
    }
    let masses: Vec<f64> = lo
        .par_iter()
        .zip(&hi)
        .map(|(&a, &b)| quad::gk15(&|u: f64| jumps.density_u(u), a, b).0.max(0.0))
        .collect();
    let mut cum = Vec::with_capacity(masses.len());
    let mut acc = 0.0;
    for m in masses {
        acc += m;
        cum.push(acc);
    }
    JumpTable { lo, hi, cum }
}

fn geometric(a: f64, b: f64) -> Vec<f64> {
    let r = (b / a).ln() / JUMP_CELLS as f64;
    let mut e: Vec<f64> = (0..=JUMP_CELLS).map(|k| a * (r * k as f64).exp()).collect();
    e[JUMP_CELLS] = b;
    e
}

/// Intensity and mean jump of the tabulated (sampled) distribution, so the
/// compensator matches what is actually simulated.
fn table_moments(jumps: &JumpSpec, t: &JumpTable) -> (f64, f64) {
    let intensity = t.cum.last().copied().unwrap_or(0.0);
    let mut mean = 0.0;
    for (&a, &b) in t.lo.iter().zip(&t.hi) {
        let mid = 0.5 * (a + b);
        let mass = quad::gk15(&|u: f64| jumps.density_u(u), a, b).0.max(0.0);
        // uniform in u within the cell, as sampled
        let ez = if b > a {
            (b.exp() - a.exp()) / (b - a) - 1.0
        } else {
            mid.exp_m1()
        };
        mean += mass * ez;
    }
    (intensity, mean)
}

/// Price-impact cost `F_∞` by walking the book: each block sale sweeps
/// `∫ψ` over the bids it consumes and continuous sales pay `ψ(Z) dY`.
pub fn impact_cost_direct(path: &StrategyPath, p: &Problem) -> f64 {
    let shape = &p.shape;
    let mut f = 0.0;
    if path.initial_block > 0.0 {
        f += shape.psi_antiderivative(path.z0 - path.initial_block)
            - shape.psi_antiderivative(path.z0);
    }
    for pc in &path.pieces {
        if let Piece::Boundary {
            step,
            t1,
            anchor,
            slope,
            vertical: false,
        } = pc
        {
            let s0 = step.eval(step.t0).min(anchor.2);
            let s1 = step.eval(*t1).min(anchor.2);
            f += quad::integrate(
                |s| shape.psi((anchor.1 + (s - anchor.2) * slope.1).min(0.0)) * slope.0,
                s0,
                s1,
                DEFAULT_TOL,
            )
            .value;
        }
    }
    f
}

/// `F_∞ = ∫_z^0 ψ + ∫ h(Z)ψ(Z) dt`, with the post-liquidation recovery
/// integrated analytically.
pub fn impact_cost_lemma(path: &StrategyPath, p: &Problem) -> f64 {
    let (_, impact) = path.running_costs(p);
    -p.shape.psi_antiderivative(path.z0)
        + impact / p.a()
        + p.shape.psi_antiderivative(path.z_at_completion())
}

fn holdings_on_grid(path: &StrategyPath, times: &[f64]) -> Result<Vec<f64>> {
    let last = times.last().copied().unwrap_or(0.0);
    if path.y0 > 0.0 && last < path.t_end {
        return Err(Error::OutOfRange {
            what: "time grid end",
            value: last,
            limit: path.t_end,
        });
    }
    Ok(times[..times.len().saturating_sub(1)]
        .iter()
        .map(|&t| path.state_at(t).0)
        .collect())
}

/// Terminal cash `c + b y − F_∞ + Σ Y_{t_i} ΔL_i` of one sample.
pub fn realized_cash(
    path: &StrategyPath,
    p: &Problem,
    times: &[f64],
    increments: &[f64],
    c: f64,
    b: f64,
) -> Result<f64> {
    if increments.len() + 1 != times.len().max(1) {
        return Err(Error::invalid(format!(
            "{} increments for a grid of {} times",
            increments.len(),
            times.len()
        )));
    }
    let ys = holdings_on_grid(path, times)?;
    let gain: f64 = ys.iter().zip(increments).map(|(y, dl)| y * dl).sum();
    Ok(c + b * path.y0 - impact_cost_direct(path, p) + gain)
}

/// Sample mean of `U(C_∞) = −exp(−A C_∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    /// Samples whose exponent was clamped to avoid overflow.
    pub clamped: usize,
}

impl UtilityEstimate {
    /// `ln(−Ê[U])` and its delta-method standard error.
    pub fn log_neg_mean(&self) -> (f64, f64) {
        ((-self.mean).ln(), self.stderr / self.mean.abs())
    }
}

/// Estimates `E[U(C_∞)]` of a deterministic strategy.
pub fn estimate_utility(
    path: &StrategyPath,
    p: &Problem,
    sampler: &PathSampler,
    c: f64,
    b: f64,
    n_paths: usize,
) -> Result<UtilityEstimate> {
    if n_paths < 2 {
        return Err(Error::invalid("need at least two paths"));
    }
    let a = p.a();
    let ys = holdings_on_grid(path, &sampler.times)?;
    let det = c + b * path.y0 - impact_cost_direct(path, p);
    let samples: Vec<(f64, bool)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = sampler.rng(k);
            let mut gain = 0.0;
            for (w, y) in sampler.times.windows(2).zip(&ys) {
                let dl = sampler.increment(&mut rng, w[1] - w[0]);
                gain += y * dl;
            }
            let e = -a * (det + gain);
            if e > MAX_EXPONENT {
                (-MAX_EXPONENT.exp(), true)
            } else {
                (-e.exp(), false)
            }
        })
        .collect();
    let n = n_paths as f64;
    let mut sum = 0.0;
    let mut clamped = 0;
    for &(u, cl) in &samples {
        sum += u;
        clamped += cl as usize;
    }
    let mean = sum / n;
    let mut ss = 0.0;
    for &(u, _) in &samples {
        ss += (u - mean) * (u - mean);
    }
    let stderr = (ss / (n - 1.0) / n).sqrt();
    if clamped > 0 {
        log::warn!("{clamped} of {n_paths} utility samples clamped at exponent {MAX_EXPONENT}");
    }
    Ok(UtilityEstimate {
        mean,
        stderr,
        n_paths,
        clamped,
    })
}
