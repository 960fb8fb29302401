//! Bid-side order book shape and resilience.
//!
//! The shape is described by `φ(x) = −m((x, 0])`, the (negative) volume
//! resting within `x` of the unaffected best bid, and its inverse `ψ`, which
//! converts a volume displacement `z ≤ 0` into a price displacement. The
//! book refills at rate `h`: between trades the volume displacement obeys
//! `dZ = −h(Z) dt`. `H(x) = ∫_{−1}^x du/h(u)` straightens that recovery,
//! `Z_t = H⁻¹(H(Z_0) − t)`.

use crate::error::{Error, Result};
use crate::table;

/// Relative tolerance of the sampled shape/resilience convexity checks.
const SHAPE_TOL: f64 = 1e-9;

/// Bid-side depth profile.
#[derive(Debug, Clone, PartialEq)]
pub enum BookShape {
    /// `n` shares per unit price down to `x̄` below the best bid.
    Block { n: f64, xbar: f64 },
    /// Piecewise-linear `φ` on a price grid ending at 0.
    Table(TableShape),
}

/// `φ` sampled at `x_0 = x̄ < … < x_K = 0`, linear in between.
#[derive(Debug, Clone, PartialEq)]
pub struct TableShape {
    x: Vec<f64>,
    phi: Vec<f64>,
    /// Cell densities `(φ_{i+1} − φ_i)/(x_{i+1} − x_i)`.
    slope: Vec<f64>,
    /// `Ψ(φ_i) = ∫_0^{φ_i} ψ`.
    psi_int: Vec<f64>,
}

impl TableShape {
    /// Builds the shape from `(x, density of m)` rows. The cumulative volume
    /// is the trapezoidal integral of the density, so each cell carries the
    /// average of its end-point densities.
    pub fn from_density(rows: Vec<(f64, f64)>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::invalid(
                "a book density table needs at least two rows",
            ));
        }
        let (x, dens): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "book table prices must be strictly increasing",
            ));
        }
        if x[x.len() - 1] != 0.0 {
            return Err(Error::domain(
                "last book table price",
                x[x.len() - 1],
                "{0}",
            ));
        }
        if let Some(&d) = dens.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(Error::domain("book density", d, "[0, inf)"));
        }
        let k = x.len() - 1;
        let slope: Vec<f64> = (0..k).map(|i| 0.5 * (dens[i] + dens[i + 1])).collect();
        if let Some(i) = slope.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::invalid(format!(
                "book table cell [{}, {}] holds no volume; psi would not be strictly increasing",
                x[i],
                x[i + 1]
            )));
        }
        // x ↦ m((x,0]) concave ⇔ cell densities non-decreasing towards 0
        let scale = slope.iter().fold(0.0_f64, |m, s| m.max(*s));
        for i in 1..k {
            if slope[i] < slope[i - 1] - SHAPE_TOL * scale {
                return Err(Error::invalid(format!(
                    "book volume x -> m((x,0]) is not concave near x = {} (cell density drops from {} to {})",
                    x[i],
                    slope[i - 1],
                    slope[i]
                )));
            }
        }
        let mut phi = vec![0.0; k + 1];
        for i in (0..k).rev() {
            phi[i] = phi[i + 1] - slope[i] * (x[i + 1] - x[i]);
        }
        let mut psi_int = vec![0.0; k + 1];
        for i in (0..k).rev() {
            // ∫_{φ_i}^{φ_{i+1}} ψ with ψ linear from x_i to x_{i+1}
            let seg = 0.5 * (x[i] + x[i + 1]) * (phi[i + 1] - phi[i]);
            psi_int[i] = psi_int[i + 1] - seg;
        }
        Ok(TableShape {
            x,
            phi,
            slope,
            psi_int,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_density(table::parse_two_column(text)?)
    }
}

impl BookShape {
    pub fn block(n: f64, xbar: f64) -> Result<Self> {
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::domain("book.block.n", n, "(0, inf)"));
        }
        if !(xbar < 0.0 && xbar.is_finite()) {
            return Err(Error::domain("book.block.xbar", xbar, "(-inf, 0)"));
        }
        Ok(BookShape::Block { n, xbar })
    }

    /// Total depth `z̄ = −m(ℝ⁻)`.
    pub fn zbar(&self) -> f64 {
        match self {
            BookShape::Block { n, xbar } => n * xbar,
            BookShape::Table(t) => t.phi[0],
        }
    }

    /// Price level `x̄` below which the book is empty.
    pub fn xbar(&self) -> f64 {
        match self {
            BookShape::Block { xbar, .. } => *xbar,
            BookShape::Table(t) => t.x[0],
        }
    }

    /// `φ(x) = −m((x, 0])`; constant `z̄` below `x̄`.
    pub fn phi(&self, x: f64) -> f64 {
        match self {
            BookShape::Block { n, xbar } => n * x.max(*xbar),
            BookShape::Table(t) => {
                if x <= t.x[0] {
                    return t.phi[0];
                }
                table::lerp(&t.x, &t.phi, x.min(0.0))
            }
        }
    }

    /// `ψ = φ⁻¹` on `[z̄, 0]`, `−∞` below `z̄`.
    pub fn psi(&self, z: f64) -> f64 {
        let zbar = self.zbar();
        if z < zbar {
            return f64::NEG_INFINITY;
        }
        match self {
            BookShape::Block { n, .. } => z / n,
            BookShape::Table(t) => {
                let i = table::segment(&t.phi, z);
                t.x[i] + (z - t.phi[i]) / t.slope[i]
            }
        }
    }

    /// `ψ′(z)`, taken from the right at table breakpoints.
    pub fn psi_prime(&self, z: f64) -> f64 {
        match self {
            BookShape::Block { n, .. } => 1.0 / n,
            BookShape::Table(t) => 1.0 / t.slope[table::segment(&t.phi, z)],
        }
    }

    /// `Ψ(z) = ∫_0^z ψ(u) du` for `z ∈ [z̄, 0]` (non-negative).
    pub fn psi_antiderivative(&self, z: f64) -> f64 {
        match self {
            BookShape::Block { n, .. } => z * z / (2.0 * n),
            BookShape::Table(t) => {
                let i = table::segment(&t.phi, z);
                let dz = z - t.phi[i];
                t.psi_int[i] + t.x[i] * dz + dz * dz / (2.0 * t.slope[i])
            }
        }
    }

    /// Signed `∫_a^b ψ(u) du` for `a, b ∈ [z̄, 0]`.
    pub fn psi_integral(&self, a: f64, b: f64) -> Result<f64> {
        let zbar = self.zbar();
        for (what, v) in [("lower limit", a), ("upper limit", b)] {
            if !(v >= zbar && v <= 0.0) {
                return Err(Error::domain(what, v, format!("[{zbar}, 0]")));
            }
        }
        if a == b {
            return Ok(0.0);
        }
        Ok(self.psi_antiderivative(b) - self.psi_antiderivative(a))
    }
}

/// Book resilience `h`.
#[derive(Debug, Clone, PartialEq)]
pub enum Resilience {
    /// `h(x) = λx`.
    Exponential { lambda: f64 },
    /// Piecewise-linear `h` through tabulated points ending at `(0, 0)`.
    Table(TableResilience),
}

/// Piecewise-linear resilience, extended linearly to the left of the table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableResilience {
    x: Vec<f64>,
    h: Vec<f64>,
    slope: Vec<f64>,
    /// `H(x_i)`, normalised so that `H(−1) = 0`.
    big_h: Vec<f64>,
}

impl TableResilience {
    pub fn new(rows: Vec<(f64, f64)>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::invalid("a resilience table needs at least two rows"));
        }
        let (x, h): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "resilience table abscissae must be strictly increasing",
            ));
        }
        let k = x.len() - 1;
        if x[k] != 0.0 || h[k] != 0.0 {
            return Err(Error::invalid("the resilience table must end at (0, 0)"));
        }
        if let Some(i) = (0..k).find(|&i| !(h[i] < 0.0)) {
            return Err(Error::domain("h", h[i], "(-inf, 0) for x < 0"));
        }
        let slope: Vec<f64> = (0..k)
            .map(|i| (h[i + 1] - h[i]) / (x[i + 1] - x[i]))
            .collect();
        if let Some(i) = slope.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::invalid(format!(
                "resilience must be strictly increasing; slope {} on [{}, {}]",
                slope[i],
                x[i],
                x[i + 1]
            )));
        }
        // 1/h concave ⇔ slopes of h non-decreasing (h convex) for linear pieces
        let scale = slope.iter().fold(0.0_f64, |m, s| m.max(*s));
        for i in 1..k {
            if slope[i] < slope[i - 1] - SHAPE_TOL * scale {
                return Err(Error::invalid(format!(
                    "1/h is not concave near x = {} (slope of h drops from {} to {})",
                    x[i],
                    slope[i - 1],
                    slope[i]
                )));
            }
        }
        let mut t = TableResilience {
            x,
            h,
            slope,
            big_h: vec![0.0; k + 1],
        };
        // accumulate ∫ du/h from x_0, then shift so that H(−1) = 0
        let mut acc = vec![0.0; k + 1];
        for i in 0..k - 1 {
            acc[i + 1] = acc[i] + t.segment_integral(i, t.x[i], t.x[i + 1]);
        }
        acc[k] = f64::NEG_INFINITY;
        t.big_h = acc;
        let offset = t.big_h(-1.0);
        for v in t.big_h.iter_mut().take(k) {
            *v -= offset;
        }
        Ok(t)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::new(table::parse_two_column(text)?)
    }

    /// Segment index for `x`, with everything left of the table in segment 0.
    fn seg(&self, x: f64) -> usize {
        table::segment(&self.x, x)
    }

    fn h(&self, x: f64) -> f64 {
        let i = self.seg(x);
        self.h[i] + self.slope[i] * (x - self.x[i])
    }

    /// `∫_a^b du/h(u)` inside segment `i` (`b < 0`).
    fn segment_integral(&self, i: usize, a: f64, b: f64) -> f64 {
        let s = self.slope[i];
        let ha = self.h[i] + s * (a - self.x[i]);
        let hb = self.h[i] + s * (b - self.x[i]);
        // h is linear: ∫ du/h = ln(h(b)/h(a))/s
        (hb / ha).ln() / s
    }

    fn big_h(&self, x: f64) -> f64 {
        let i = self.seg(x);
        self.big_h[i] + self.segment_integral(i, self.x[i], x)
    }

    fn big_h_inv(&self, u: f64) -> f64 {
        // H is decreasing: find the last node with H(x_i) >= u
        let k = self.x.len() - 1;
        let i = self.big_h[..k]
            .partition_point(|&v| v >= u)
            .saturating_sub(1)
            .min(k - 1);
        let s = self.slope[i];
        // within segment i: h(x) = h_i e^{s (H(x) − H_i)}
        let hx = self.h[i] * (s * (u - self.big_h[i])).exp();
        (self.x[i] + (hx - self.h[i]) / s).min(0.0)
    }
}

impl Resilience {
    pub fn exponential(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::domain("resilience.exp.lambda", lambda, "(0, inf)"));
        }
        Ok(Resilience::Exponential { lambda })
    }

    /// `h(x)`, negative for `x < 0`.
    pub fn h(&self, x: f64) -> f64 {
        match self {
            Resilience::Exponential { lambda } => lambda * x,
            Resilience::Table(t) => {
                if x >= 0.0 {
                    0.0
                } else {
                    t.h(x)
                }
            }
        }
    }

    /// `h′(x)`, taken from the right at table breakpoints.
    pub fn h_prime(&self, x: f64) -> f64 {
        match self {
            Resilience::Exponential { lambda } => *lambda,
            Resilience::Table(t) => t.slope[t.seg(x)],
        }
    }

    /// `H(x) = ∫_{−1}^x du/h(u)`, strictly decreasing on `x < 0` with
    /// `H(0−) = −∞`. Returns `−∞` at 0 and NaN for `x > 0`.
    pub fn big_h(&self, x: f64) -> f64 {
        if x > 0.0 {
            return f64::NAN;
        }
        if x == 0.0 {
            return f64::NEG_INFINITY;
        }
        match self {
            Resilience::Exponential { lambda } => (-x).ln() / lambda,
            Resilience::Table(t) => t.big_h(x),
        }
    }

    /// `H` with domain checking.
    pub fn big_h_checked(&self, x: f64) -> Result<f64> {
        if !(x <= 0.0) {
            return Err(Error::domain("x", x, "(-inf, 0]"));
        }
        Ok(self.big_h(x))
    }

    /// `H⁻¹(u)`; `H⁻¹(−∞) = 0`.
    pub fn big_h_inv(&self, u: f64) -> f64 {
        if u == f64::NEG_INFINITY {
            return 0.0;
        }
        match self {
            Resilience::Exponential { lambda } => -(lambda * u).exp(),
            Resilience::Table(t) => t.big_h_inv(u),
        }
    }

    /// No-trade recovery `Z_t = H⁻¹(H(z0) − t)`.
    pub fn decay(&self, z0: f64, t: f64) -> f64 {
        if z0 >= 0.0 {
            return 0.0;
        }
        match self {
            Resilience::Exponential { lambda } => z0 * (-lambda * t).exp(),
            Resilience::Table(_) => self.big_h_inv(self.big_h(z0) - t),
        }
    }

    /// Time for the recovery to carry `z1` up to `z2` (`z1 ≤ z2 < 0`).
    pub fn recovery_time(&self, z1: f64, z2: f64) -> f64 {
        match self {
            Resilience::Exponential { lambda } => (z1 / z2).ln() / lambda,
            Resilience::Table(_) => self.big_h(z1) - self.big_h(z2),
        }
    }
}
