//! The optimal intervention boundary.
//!
//! For each holding `y`, `β(y)` maximises the concave criterion
//! `Γ(·;y)` over `[z̄, 0]`. [`solve_beta`] returns the largest and smallest
//! maximisers; [`BoundaryTable`] tabulates them on a grid and represents the
//! boundary graph as a polyline in the `(y, z)` plane, from which the
//! transforms `γ_β(y) = β(y) − y`, `ρ_β(z) = z − β⁻¹(z)` and their inverses
//! are read off.
//!
//! Along the graph `s = z − y` is strictly decreasing, so `γ_β⁻¹(s)` and
//! `ρ_β⁻¹(s)` are simply the coordinates of the point of the graph on the
//! diagonal line `z = y + s`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::search;
use crate::Problem;

/// Multiple of machine epsilon (times the derivative's term scale) within
/// which `Γ′` is treated as zero when locating the edges of a flat maximum.
const FLAT_EPS: f64 = 64.0 * f64::EPSILON;

/// Edges closer than this (relative) are reported as a single maximiser.
const SNAP_REL: f64 = 1e-12;

/// Largest monotonicity violation (relative) repaired by isotone projection.
const ISOTONE_TOL: f64 = 1e-8;

/// Largest and smallest maximisers of `Γ(·;y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximisers {
    /// `β*(y)`, the largest maximiser.
    pub upper: f64,
    /// `β_*(y)`, the smallest maximiser.
    pub lower: f64,
}

/// Boundary of the predicate `pred` on `[lo, hi]`: `pred(lo)` holds and
/// `pred(hi)` does not; returns the last point where it holds, to
/// floating-point resolution.
fn edge<P: Fn(f64) -> bool>(pred: P, mut lo: f64, mut hi: f64) -> f64 {
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return lo;
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Maximisers of `Γ(·;y)` given `κ_A(y)` and `κ_A′(y)`.
///
/// A golden-section search brackets the maximum; the sign of the monotone
/// derivative `∂Γ/∂x` is then bisected to machine precision. The edges of
/// the set where `∂Γ/∂x` vanishes (within rounding of its terms) give the
/// largest and smallest maximisers.
pub fn maximise_gamma(p: &Problem, kappa: f64, kappa_prime: f64) -> Result<Maximisers> {
    if !kappa.is_finite() || !kappa_prime.is_finite() {
        return Err(Error::domain(
            "kappa_A",
            if kappa.is_finite() {
                kappa_prime
            } else {
                kappa
            },
            "finite values (holding beyond ybar_A)",
        ));
    }
    if kappa == 0.0 && kappa_prime == 0.0 {
        // Γ = Aψ is maximised at the best bid
        return Ok(Maximisers {
            upper: 0.0,
            lower: 0.0,
        });
    }
    let zbar = p.zbar();
    let dgamma = |x: f64| p.gamma_prime_with(x, kappa, kappa_prime);
    // with zero drift the maximiser approaches the best bid linearly in y,
    // so the upper end of the search moves towards 0 until Γ′ < 0 there
    let mut top = -1e-12 * zbar.abs();
    let mut d_top = dgamma(top).0;
    while d_top >= 0.0 && top < -1e-280 {
        top *= 1e-3;
        d_top = dgamma(top).0;
    }
    if !(d_top < 0.0) {
        return Err(Error::NoConvergence {
            method: "boundary search",
            detail: format!("dGamma/dx = {d_top} does not turn negative near the best bid"),
        });
    }

    // bracket the maximum with a coarse golden-section search
    let (xg, _) = search::golden_section_max(
        |x| p.gamma_with(x, kappa, kappa_prime),
        zbar,
        top,
        1e-6 * zbar.abs(),
    );
    let mut width = 1e-5 * zbar.abs();
    let (mut lo, mut hi);
    loop {
        lo = (xg - width).max(zbar);
        hi = (xg + width).min(top);
        let lo_ok = lo == zbar || dgamma(lo).0 > 0.0;
        let hi_ok = hi == top || dgamma(hi).0 <= 0.0;
        if lo_ok && hi_ok {
            break;
        }
        width *= 4.0;
    }

    let positive = |x: f64| dgamma(x).0 > 0.0;
    let x0 = if positive(lo) {
        edge(positive, lo, hi)
    } else {
        lo
    };

    let not_negative = |x: f64| {
        let (d, scale) = dgamma(x);
        d >= -FLAT_EPS * scale
    };
    let upper = if not_negative(x0) {
        if not_negative(hi) {
            hi
        } else {
            edge(not_negative, x0, hi)
        }
    } else {
        x0
    };
    let clearly_positive = |x: f64| {
        let (d, scale) = dgamma(x);
        d > FLAT_EPS * scale
    };
    let lower = if clearly_positive(lo) {
        edge(clearly_positive, lo, x0)
    } else {
        lo
    };
    if upper - lower <= SNAP_REL * (1.0 + x0.abs()) {
        return Ok(Maximisers {
            upper: x0,
            lower: x0,
        });
    }
    Ok(Maximisers { upper, lower })
}

/// `(β*(y), β_*(y))` for `y ∈ (0, ȳ_A)`.
pub fn solve_beta(p: &Problem, y: f64) -> Result<Maximisers> {
    let ybar = p.ybar();
    if !(y > 0.0 && y < ybar) {
        return Err(Error::domain("y", y, format!("(0, {ybar})")));
    }
    maximise_gamma(p, p.kappa(y), p.kappa_prime(y)).map_err(|e| Error::Solver {
        y,
        source: Box::new(e),
    })
}

/// `β(0+) = lim_{y↓0} β(y)`: the maximiser of the limiting criterion
/// `Aψ(x) + κ_A′(0)H(x)` (κ_A vanishes at 0). It is strictly negative iff
/// the drift is strictly negative.
pub fn beta_zero_plus(p: &Problem) -> Result<f64> {
    let kp0 = p.kappa_prime(0.0);
    Ok(maximise_gamma(p, 0.0, kp0)?.upper)
}

/// Holding grid for [`tabulate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub y_max: f64,
    /// Number of nodes including `y = 0`.
    pub nodes: usize,
}

impl GridSpec {
    pub fn new(y_max: f64) -> Self {
        GridSpec { y_max, nodes: 2048 }
    }

    /// Geometric spacing from `1e−6·y_max` to `0.05·y_max` on a quarter of
    /// the nodes, uniform spacing to `y_max` on the rest.
    pub fn points(&self) -> Vec<f64> {
        let n = self.nodes.max(8);
        let n_geo = n / 4;
        let n_uni = n - 1 - n_geo;
        let lo = 1e-6 * self.y_max;
        let mid = 0.05 * self.y_max;
        let mut ys = Vec::with_capacity(n);
        ys.push(0.0);
        for k in 0..n_geo {
            ys.push(lo * (mid / lo).powf(k as f64 / (n_geo - 1) as f64));
        }
        for j in 1..=n_uni {
            ys.push(mid + (self.y_max - mid) * j as f64 / n_uni as f64);
        }
        let last = ys.len() - 1;
        ys[last] = self.y_max;
        ys
    }
}

/// Tabulated intervention boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTable {
    /// Holding grid, `y[0] = 0`.
    pub y: Vec<f64>,
    /// `β*` at the nodes (`β*(0) = 0`).
    pub upper: Vec<f64>,
    /// `β_*` at the nodes (`β_*(0) = β(0+)`).
    pub lower: Vec<f64>,
    /// `κ_A` at the nodes.
    pub kappa: Vec<f64>,
    /// `κ_A′` at the nodes.
    pub kappa_prime: Vec<f64>,
    /// `β(0+)`.
    pub beta0: f64,
    pub ybar: f64,
    pub zbar: f64,
    vy: Vec<f64>,
    vz: Vec<f64>,
    vs: Vec<f64>,
}

/// Pool-adjacent-violators projection onto non-increasing sequences.
/// Returns the largest change made to any entry.
fn isotone_nonincreasing(v: &mut [f64]) -> f64 {
    let orig = v.to_vec();
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(v.len());
    for &x in v.iter() {
        blocks.push((x, 1));
        while blocks.len() >= 2 {
            let (s2, c2) = blocks[blocks.len() - 1];
            let (s1, c1) = blocks[blocks.len() - 2];
            if s1 / c1 as f64 >= s2 / c2 as f64 {
                break;
            }
            blocks.pop();
            let last = blocks.len() - 1;
            blocks[last] = (s1 + s2, c1 + c2);
        }
    }
    let mut k = 0;
    for (s, c) in blocks {
        for _ in 0..c {
            v[k] = s / c as f64;
            k += 1;
        }
    }
    v.iter()
        .zip(orig.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Solves for the boundary at every grid node (in parallel).
pub fn tabulate(p: &Problem, grid: &GridSpec) -> Result<BoundaryTable> {
    if !(grid.y_max > 0.0 && grid.y_max.is_finite()) {
        return Err(Error::domain("y_max", grid.y_max, "(0, inf)"));
    }
    tabulate_on(p, grid.points())
}

/// Solves for the boundary on a caller-supplied grid starting at 0.
pub fn tabulate_on(p: &Problem, y: Vec<f64>) -> Result<BoundaryTable> {
    if y.len() < 2 || y[0] != 0.0 || y.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            "boundary grid must start at 0 and be strictly increasing",
        ));
    }
    let zbar = p.zbar();
    let ybar = p.ybar();
    let beta0 = beta_zero_plus(p)?;
    let solved: Vec<(f64, f64, f64, f64)> = y[1..]
        .par_iter()
        .map(|&yi| {
            if yi >= ybar {
                return Ok((zbar, zbar, f64::INFINITY, f64::INFINITY));
            }
            let k = p.kappa(yi);
            let kp = p.kappa_prime(yi);
            let m = maximise_gamma(p, k, kp).map_err(|e| Error::Solver {
                y: yi,
                source: Box::new(e),
            })?;
            Ok((m.upper, m.lower, k, kp))
        })
        .collect::<Result<_>>()?;

    let n = y.len();
    let mut upper = vec![0.0; n];
    let mut lower = vec![beta0; n];
    let mut kappa = vec![0.0; n];
    let mut kappa_prime = vec![p.kappa_prime(0.0); n];
    for (i, (u, l, k, kp)) in solved.into_iter().enumerate() {
        upper[i + 1] = u;
        lower[i + 1] = l;
        kappa[i + 1] = k;
        kappa_prime[i + 1] = kp;
    }

    // β(0+), β*(y1), β_*(y1), β*(y2), ... must be non-increasing
    let mut seq = Vec::with_capacity(2 * n);
    seq.push(beta0);
    for i in 1..n {
        seq.push(upper[i]);
        seq.push(lower[i]);
    }
    let scale = 1.0 + seq.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let change = isotone_nonincreasing(&mut seq);
    if change > ISOTONE_TOL * scale {
        return Err(Error::NoConvergence {
            method: "boundary tabulation",
            detail: format!(
                "boundary is not monotone in y (violation {change:e}); the model likely breaks the concavity assumptions"
            ),
        });
    }
    if change > 0.0 {
        log::debug!("isotone projection adjusted the boundary by {change:e}");
    }
    let beta0 = seq[0];
    lower[0] = beta0;
    for i in 1..n {
        upper[i] = seq[2 * i - 1];
        lower[i] = seq[2 * i];
    }
    BoundaryTable::assemble(p, y, upper, lower, kappa, kappa_prime)
}

impl BoundaryTable {
    /// Builds a table from boundary values at the nodes, e.g. a perturbed
    /// or externally computed boundary. `lower[0]` is taken as `β(0+)`;
    /// the sequence `β(0+), upper₁, lower₁, upper₂, …` must be
    /// non-increasing, strictly negative after the origin and not below `z̄`.
    pub fn from_nodes(p: &Problem, y: Vec<f64>, upper: Vec<f64>, lower: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if n < 2 || y[0] != 0.0 || y.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "boundary grid must start at 0 and be strictly increasing",
            ));
        }
        if upper.len() != n || lower.len() != n {
            return Err(Error::invalid("boundary values must match the grid length"));
        }
        let zbar = p.zbar();
        let beta0 = lower[0];
        let mut prev = beta0;
        if !(beta0 <= 0.0 && beta0 >= zbar) {
            return Err(Error::domain("beta(0+)", beta0, format!("[{zbar}, 0]")));
        }
        for i in 1..n {
            for v in [upper[i], lower[i]] {
                if v > prev || v < zbar {
                    return Err(Error::invalid(format!(
                        "boundary value {v} at y = {} breaks monotonicity or lies below {zbar}",
                        y[i]
                    )));
                }
                prev = v;
            }
        }
        let mut upper = upper;
        upper[0] = 0.0;
        let kappa: Vec<f64> = y.iter().map(|&v| p.kappa(v)).collect();
        let kappa_prime: Vec<f64> = y.iter().map(|&v| p.kappa_prime(v)).collect();
        Self::assemble(p, y, upper, lower, kappa, kappa_prime)
    }

    fn assemble(
        p: &Problem,
        y: Vec<f64>,
        upper: Vec<f64>,
        lower: Vec<f64>,
        kappa: Vec<f64>,
        kappa_prime: Vec<f64>,
    ) -> Result<Self> {
        let n = y.len();
        let beta0 = lower[0];
        let zbar = p.zbar();
        let ybar = p.ybar();
        if let Some(i) = (1..n).find(|&i| !(upper[i] < 0.0)) {
            return Err(Error::Solver {
                y: y[i],
                source: Box::new(Error::NoConvergence {
                    method: "boundary search",
                    detail: format!("beta = {} is not strictly negative", upper[i]),
                }),
            });
        }

        let mut vy = vec![0.0];
        let mut vz = vec![0.0];
        if beta0 < 0.0 {
            vy.push(0.0);
            vz.push(beta0);
        }
        for i in 1..n {
            vy.push(y[i]);
            vz.push(upper[i]);
            if lower[i] < upper[i] {
                vy.push(y[i]);
                vz.push(lower[i]);
            }
        }
        let vs = vy.iter().zip(&vz).map(|(y, z)| z - y).collect();
        Ok(BoundaryTable {
            y,
            upper,
            lower,
            kappa,
            kappa_prime,
            beta0,
            ybar,
            zbar,
            vy,
            vz,
            vs,
        })
    }
}

/// Point of the boundary graph on a diagonal, or an out-of-range marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagonalPoint {
    pub y: f64,
    pub z: f64,
    /// Index `j` of the polyline segment `[v_{j−1}, v_j]` containing the point.
    pub segment: usize,
}

impl BoundaryTable {
    pub fn y_max(&self) -> f64 {
        self.y[self.y.len() - 1]
    }

    /// Largest tabulated `s = z − y` magnitude: the diagonal through the
    /// last vertex.
    pub fn s_min(&self) -> f64 {
        self.vs[self.vs.len() - 1]
    }

    /// Vertices `(y, z)` of the boundary graph, ordered by decreasing `s`.
    pub fn vertices(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.vy.iter().copied().zip(self.vz.iter().copied())
    }

    /// `s = z − y` at each vertex (strictly decreasing).
    pub fn vertex_s(&self) -> &[f64] {
        &self.vs
    }

    /// Left-continuous boundary `β(y) = β*(y)` for `y ∈ [0, y_max]`,
    /// linear between nodes; `z̄` at and beyond `ȳ_A`; NaN beyond the table.
    pub fn beta(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if y >= self.ybar {
            return self.zbar;
        }
        if y > self.y_max() {
            return f64::NAN;
        }
        let i = self.y.partition_point(|&v| v < y);
        let (y0, y1) = (self.y[i - 1], self.y[i]);
        let (b0, b1) = (self.lower[i - 1], self.upper[i]);
        if y == y1 {
            return b1;
        }
        b0 + (y - y0) / (y1 - y0) * (b1 - b0)
    }

    /// Right-continuous representative `β_*(y)`.
    pub fn beta_lower(&self, y: f64) -> f64 {
        if y < 0.0 {
            return f64::NAN;
        }
        if let Ok(i) = self.y.binary_search_by(|v| v.total_cmp(&y)) {
            return self.lower[i];
        }
        self.beta(y)
    }

    /// Node index `i` such that `y ∈ (y_{i−1}, y_i]`.
    pub fn cell(&self, y: f64) -> usize {
        self.y
            .partition_point(|&v| v < y)
            .clamp(1, self.y.len() - 1)
    }

    /// `γ_β(y) = β(y) − y`.
    pub fn gamma_beta(&self, y: f64) -> f64 {
        self.beta(y) - y
    }

    /// `β⁻¹(z) = inf{y ≥ 0 | β(y) ≤ z}` and whether `z` lies below the
    /// tabulated range (in which case `y_max` is returned).
    pub fn beta_inv(&self, z: f64) -> (f64, bool) {
        if z >= self.beta0 {
            return (0.0, false);
        }
        // vertex z-values are non-increasing after the first
        let k = self.vz.partition_point(|&v| v > z);
        if k >= self.vz.len() {
            return (self.y_max(), true);
        }
        let (y0, z0, y1, z1) = (self.vy[k - 1], self.vz[k - 1], self.vy[k], self.vz[k]);
        if y1 == y0 {
            // a jump of the boundary
            return (y0, false);
        }
        (y0 + (z - z0) / (z1 - z0) * (y1 - y0), false)
    }

    /// `ρ_β(z) = z − β⁻¹(z)`.
    pub fn rho_beta(&self, z: f64) -> f64 {
        z - self.beta_inv(z).0
    }

    /// Intersection of the diagonal `z = y + s` with the boundary graph.
    pub fn diagonal(&self, s: f64) -> Result<DiagonalPoint> {
        if !(s <= 0.0) {
            return Err(Error::domain("s", s, "(-inf, 0]"));
        }
        let k = self.vs.partition_point(|&v| v > s);
        if k == 0 {
            return Ok(DiagonalPoint {
                y: 0.0,
                z: 0.0,
                segment: 0,
            });
        }
        if k >= self.vs.len() {
            return Err(Error::OutOfRange {
                what: "z - y",
                value: s,
                limit: self.s_min(),
            });
        }
        let w = (s - self.vs[k - 1]) / (self.vs[k] - self.vs[k - 1]);
        let y = self.vy[k - 1] + w * (self.vy[k] - self.vy[k - 1]);
        let z = self.vz[k - 1] + w * (self.vz[k] - self.vz[k - 1]);
        Ok(DiagonalPoint { y, z, segment: k })
    }

    /// `γ_β⁻¹(s)`: holding of the boundary point on the diagonal `z = y + s`.
    pub fn gamma_beta_inv(&self, s: f64) -> Result<f64> {
        Ok(self.diagonal(s)?.y)
    }

    /// `ρ_β⁻¹(s)`: book state of the boundary point on the diagonal.
    pub fn rho_beta_inv(&self, s: f64) -> Result<f64> {
        Ok(self.diagonal(s)?.z)
    }

    /// Vertex coordinates `(y_j, z_j)`.
    pub fn vertex(&self, j: usize) -> (f64, f64) {
        (self.vy[j], self.vz[j])
    }

    pub fn vertex_count(&self) -> usize {
        self.vy.len()
    }

    /// Largest spacing of the holding grid, a proxy for interpolation error.
    pub fn max_step(&self) -> f64 {
        self.y.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}
