//! The value function, the performance of a path, HJB residuals and the
//! expected utility.
//!
//! Above the boundary the value is an integral along the boundary graph in
//! the diagonal coordinate `s = z − y`:
//!
//! `v(y,z) = A∫_0^{β(0+)}ψ + ∫_{β(0+)}^{z−y} f(u) du`,
//! `f(u) = κ_A(γ_β⁻¹(u))/h(ρ_β⁻¹(u)) + Aψ(ρ_β⁻¹(u))`;
//!
//! on and below it
//!
//! `v(y,z) = κ_A(y)H(z) + A∫_0^z ψ − ∫_0^y Γ(β(u);u) du`.
//!
//! Both integrals are accumulated once over the tabulated boundary (vertex
//! by vertex and node by node) so a point evaluation needs one short
//! quadrature. The two formulas are evaluated independently; their agreement
//! on the graph is a check, not an assumption.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::boundary::BoundaryTable;
use crate::error::{Error, Result};
use crate::quad::{self, DEFAULT_TOL};
use crate::strategy::{self, StrategyPath};
use crate::Problem;

/// Closed-form value function over a tabulated boundary.
#[derive(Debug, Clone)]
pub struct ValueFunction<'a> {
    p: &'a Problem,
    table: &'a BoundaryTable,
    /// `v` at each vertex of the graph, from the diagonal formula.
    sell_cum: Vec<f64>,
    /// `∫_0^{y_i} Γ(β(u);u) du` at each holding node.
    gamma_cum: Vec<f64>,
}

impl<'a> ValueFunction<'a> {
    pub fn new(p: &'a Problem, table: &'a BoundaryTable) -> Result<Self> {
        let nv = table.vertex_count();
        let vs = table.vertex_s();
        let pieces: Vec<f64> = (1..nv)
            .into_par_iter()
            .map(|k| integrate_segment(p, table, k, vs[k - 1], vs[k]))
            .collect();
        let mut sell_cum = Vec::with_capacity(nv);
        sell_cum.push(0.0);
        for w in &pieces {
            let last = *sell_cum.last().unwrap();
            sell_cum.push(last + w);
        }

        let ny = table.y.len();
        let cells: Vec<f64> = (1..ny)
            .into_par_iter()
            .map(|i| integrate_gamma_cell(p, table, i, table.y[i]))
            .collect();
        let mut gamma_cum = Vec::with_capacity(ny);
        gamma_cum.push(0.0);
        for w in &cells {
            let last = *gamma_cum.last().unwrap();
            gamma_cum.push(last + w);
        }
        if sell_cum.iter().chain(&gamma_cum).any(|v| !v.is_finite()) {
            return Err(Error::NoConvergence {
                method: "value accumulation",
                detail: "non-finite cumulative integral".into(),
            });
        }
        Ok(ValueFunction {
            p,
            table,
            sell_cum,
            gamma_cum,
        })
    }

    pub fn problem(&self) -> &Problem {
        self.p
    }

    pub fn table(&self) -> &BoundaryTable {
        self.table
    }

    fn check(&self, y: f64, z: f64) -> Result<()> {
        self.p.check_solvent(y, z)?;
        if y > self.table.y_max() {
            return Err(Error::OutOfRange {
                what: "y",
                value: y,
                limit: self.table.y_max(),
            });
        }
        Ok(())
    }

    /// `v(y, z)`.
    pub fn value(&self, y: f64, z: f64) -> Result<f64> {
        self.check(y, z)?;
        if y == 0.0 {
            return Ok(self.p.a() * self.p.shape.psi_antiderivative(z));
        }
        if z > self.table.beta(y) {
            self.value_sell(z - y)
        } else {
            Ok(self.value_wait(y, z))
        }
    }

    /// The diagonal formula at `s = z − y` (valid above the boundary and,
    /// by continuity, on it).
    pub fn value_sell(&self, s: f64) -> Result<f64> {
        let d = self.table.diagonal(s)?;
        if d.segment == 0 {
            return Ok(0.0);
        }
        let k = d.segment;
        let sk = self.table.vertex_s()[k];
        Ok(self.sell_cum[k] + integrate_segment(self.p, self.table, k, sk, s))
    }

    /// The holding formula (valid below the boundary and on it).
    pub fn value_wait(&self, y: f64, z: f64) -> f64 {
        let p = self.p;
        let mut v = p.a() * p.shape.psi_antiderivative(z) - self.gamma_integral(y);
        let k = p.kappa(y);
        if k != 0.0 {
            v += k * p.resilience.big_h(z);
        }
        v
    }

    /// `∫_0^y Γ(β(u);u) du`.
    pub fn gamma_integral(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let i = self.table.cell(y);
        self.gamma_cum[i - 1] + integrate_gamma_cell(self.p, self.table, i, y)
    }

    /// `f(s)`, the diagonal integrand: `v_z` above the boundary.
    pub fn diagonal_rate(&self, s: f64) -> Result<f64> {
        let d = self.table.diagonal(s)?;
        Ok(rate(self.p, d.y, d.z))
    }

    /// Analytic derivatives `(D_y⁻v, v_z)` at `(y, z)`.
    pub fn derivatives(&self, y: f64, z: f64) -> Result<(f64, f64)> {
        self.check(y, z)?;
        let b = self.table.beta(y);
        if y > 0.0 && z > b {
            let f = self.diagonal_rate(z - y)?;
            Ok((-f, f))
        } else {
            let p = self.p;
            let k = p.kappa(y);
            let kp = p.kappa_prime(y);
            let dy = if y > 0.0 {
                let hz = if kp != 0.0 {
                    kp * p.resilience.big_h(z)
                } else {
                    0.0
                };
                hz - p.gamma_with(b, k, kp)
            } else {
                // v(0, ·) is only defined as a boundary value
                f64::NAN
            };
            Ok((dy, rate(p, y, z)))
        }
    }

    /// HJB residuals at one point.
    pub fn residuals(&self, y: f64, z: f64) -> Result<PointResiduals> {
        self.check(y, z)?;
        let p = self.p;
        let a = p.a();
        let b = self.table.beta(y);
        let h = p.resilience.h(z);
        let k = p.kappa(y);
        let ahpsi = a * h * p.shape.psi(z);
        let on_graph = (z - b).abs() <= 1e-12 * (1.0 + b.abs());
        let mut out = PointResiduals {
            y,
            z,
            region: if on_graph {
                PointRegion::Graph
            } else if z > b {
                PointRegion::Sell
            } else {
                PointRegion::Wait
            },
            ..Default::default()
        };
        if z > b || on_graph {
            // (D1) and (D2)
            let f = self.diagonal_rate(z - y)?;
            let (d1, d2) = (-f, f);
            out.h1 = Residual::new(d1 + d2, d1.abs() + d2.abs());
            if !on_graph {
                let hf = h * f;
                out.h2 = Residual::new(hf - k - ahpsi, hf.abs() + k.abs() + ahpsi.abs());
            }
        }
        if z <= b || on_graph {
            let kp = p.kappa_prime(y);
            let hz = p.resilience.big_h(z);
            let hb = p.resilience.big_h(b);
            let d4_terms = [k / h, a * p.shape.psi(z)];
            let d4 = d4_terms[0] + d4_terms[1];
            let hd4 = h * d4;
            out.h3 = Residual::new(hd4 - k - ahpsi, hd4.abs() + k.abs() + ahpsi.abs());
            if !on_graph {
                let d3_terms = [
                    kp * hz,
                    -k / p.resilience.h(b),
                    -a * p.shape.psi(b),
                    -kp * hb,
                ];
                let d3: f64 = d3_terms.iter().sum();
                let scale = d3_terms
                    .iter()
                    .chain(&d4_terms)
                    .map(|t| t.abs())
                    .sum::<f64>();
                out.h4 = Residual::new(d3 + d4, scale);
            }
        }
        Ok(out)
    }
}

/// `κ_A(y)/h(z) + Aψ(z)`, with the `0/0` at the origin read as 0.
fn rate(p: &Problem, y: f64, z: f64) -> f64 {
    let k = p.kappa(y);
    let mut f = p.a() * p.shape.psi(z);
    if k != 0.0 {
        f += k / p.resilience.h(z);
    }
    f
}

/// `∫_{s0}^{s1} f(u) du` along segment `k` of the graph.
fn integrate_segment(p: &Problem, table: &BoundaryTable, k: usize, s0: f64, s1: f64) -> f64 {
    if s0 == s1 {
        return 0.0;
    }
    let vs = table.vertex_s();
    let (ya, za) = table.vertex(k - 1);
    let (yb, zb) = table.vertex(k);
    let (sa, sb) = (vs[k - 1], vs[k]);
    let point = |u: f64| {
        let w = (u - sa) / (sb - sa);
        ((ya + w * (yb - ya)).max(0.0), (za + w * (zb - za)).min(0.0))
    };
    quad::integrate(
        |u| {
            let (y, z) = point(u);
            rate(p, y, z)
        },
        s0,
        s1,
        DEFAULT_TOL,
    )
    .value
}

/// `∫_{y_{i−1}}^{y} Γ(β(u);u) du` within cell `i`.
fn integrate_gamma_cell(p: &Problem, table: &BoundaryTable, i: usize, y: f64) -> f64 {
    let (y0, y1) = (table.y[i - 1], table.y[i]);
    let (b0, b1) = (table.lower[i - 1], table.upper[i]);
    quad::integrate(
        |u| {
            let b = b0 + (u - y0) / (y1 - y0) * (b1 - b0);
            p.gamma(b, u)
        },
        y0,
        y,
        DEFAULT_TOL,
    )
    .value
}

/// Which formula applies at a sampled point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PointRegion {
    #[default]
    Sell,
    Wait,
    Graph,
}

/// A residual and the sum of magnitudes of the terms it was formed from.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residual {
    pub value: f64,
    pub scale: f64,
}

impl Residual {
    fn new(value: f64, scale: f64) -> Self {
        Residual { value, scale }
    }

    /// `|value| / scale`, 0 when both vanish.
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.value.abs() / self.scale
        } else {
            self.value.abs()
        }
    }

    /// Positive part of `value / scale`, for the inequalities.
    pub fn excess(&self) -> f64 {
        if self.value <= 0.0 {
            0.0
        } else if self.scale > 0.0 {
            self.value / self.scale
        } else {
            self.value
        }
    }
}

/// Residuals of the four HJB relations at a point; absent relations are 0.
///
/// * `h1`: `D_y⁻v + v_z = 0` on the sell region and the graph.
/// * `h2`: `h v_z − κ_A − Ahψ ≤ 0` strictly above the graph.
/// * `h3`: `h v_z − κ_A − Ahψ = 0` on the wait region and the graph.
/// * `h4`: `D_y⁻v + v_z ≤ 0` strictly below the graph.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointResiduals {
    pub y: f64,
    pub z: f64,
    pub region: PointRegion,
    pub h1: Residual,
    pub h2: Residual,
    pub h3: Residual,
    pub h4: Residual,
}

impl PointResiduals {
    /// Worst normalised violation at this point.
    pub fn worst(&self) -> f64 {
        self.h1
            .relative()
            .max(self.h3.relative())
            .max(self.h2.excess())
            .max(self.h4.excess())
    }
}

/// How residual sample points are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSpec {
    pub n_points: usize,
    pub seed: u64,
    /// Sample holdings in `(0, y_max]`; defaults to the table's range.
    pub y_max: Option<f64>,
    /// Sample book states in `[z_min, 0]`; defaults to `z̄`.
    pub z_min: Option<f64>,
    /// Fraction of points placed exactly on the boundary graph.
    pub graph_fraction: f64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            n_points: 10_000,
            seed: 1,
            y_max: None,
            z_min: None,
            graph_fraction: 0.1,
        }
    }
}

/// Summary of a residual sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct HjbReport {
    pub n_points: usize,
    pub n_sell: usize,
    pub n_wait: usize,
    pub n_graph: usize,
    /// Largest normalised residual of each relation (excess for h2, h4).
    pub max_h1: f64,
    pub max_h2: f64,
    pub max_h3: f64,
    pub max_h4: f64,
    /// Points whose worst residual exceeds the tolerance.
    pub violations: Vec<PointResiduals>,
}

impl HjbReport {
    /// Largest equality residual on the sell side (h1) and wait side (h3).
    pub fn sell_region_max(&self) -> f64 {
        self.max_h1.max(self.max_h2)
    }

    pub fn wait_region_max(&self) -> f64 {
        self.max_h3.max(self.max_h4)
    }
}

/// Evaluates the HJB residuals on random points of the solvency region.
pub fn hjb_check(vf: &ValueFunction<'_>, spec: &SampleSpec, tol: f64) -> Result<HjbReport> {
    let p = vf.problem();
    let table = vf.table();
    let y_max = spec.y_max.unwrap_or(table.y_max()).min(table.y_max());
    let z_min = spec.z_min.unwrap_or(p.zbar()).max(p.zbar());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let points: Vec<(f64, f64)> = (0..spec.n_points)
        .map(|_| {
            let on_graph = rng.random::<f64>() < spec.graph_fraction;
            // (0, y_max]
            let y = y_max * (1.0 - rng.random::<f64>());
            let z = if on_graph {
                table.beta(y)
            } else {
                z_min * rng.random::<f64>()
            };
            (y, z)
        })
        .filter(|&(y, z)| p.is_solvent(y, z))
        .collect();
    let res: Vec<PointResiduals> = points
        .par_iter()
        .map(|&(y, z)| vf.residuals(y, z))
        .collect::<Result<_>>()?;
    let mut rep = HjbReport {
        n_points: res.len(),
        n_sell: 0,
        n_wait: 0,
        n_graph: 0,
        max_h1: 0.0,
        max_h2: 0.0,
        max_h3: 0.0,
        max_h4: 0.0,
        violations: Vec::new(),
    };
    for r in &res {
        match r.region {
            PointRegion::Sell => rep.n_sell += 1,
            PointRegion::Wait => rep.n_wait += 1,
            PointRegion::Graph => rep.n_graph += 1,
        }
        rep.max_h1 = rep.max_h1.max(r.h1.relative());
        rep.max_h2 = rep.max_h2.max(r.h2.excess());
        rep.max_h3 = rep.max_h3.max(r.h3.relative());
        rep.max_h4 = rep.max_h4.max(r.h4.excess());
        if r.worst() > tol {
            rep.violations.push(*r);
        }
    }
    Ok(rep)
}

/// `J(Y) = ∫_0^∞ [κ_A(Y_t) + A h(Z_t)ψ(Z_t)] dt` along a path: quadrature
/// in time up to `t̄` plus the recovery tail `A∫_0^{Z_t̄}ψ`.
pub fn performance(path: &StrategyPath, p: &Problem) -> Result<f64> {
    let adm = strategy::verify_admissibility(path, p);
    if !adm.admissible {
        return Err(Error::NoConvergence {
            method: "performance",
            detail: format!(
                "path is not admissible: risk integral {}, t*Y decay {:?}",
                adm.risk_integral, adm.vanishing
            ),
        });
    }
    let (risk, impact) = path.running_costs(p);
    Ok(risk + impact + p.a() * p.shape.psi_antiderivative(path.z_at_completion()))
}

/// The two printed forms of the optimal expected utility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityForms {
    /// `−exp(−A(c+by) + A∫_z^0 ψ + v)`.
    pub lemma_form: f64,
    /// `−exp(−A(c+by) + A∫_z^{z−y} ψ + v)`.
    pub theorem_form: f64,
}

/// Expected utility of the terminal cash from `(y, z)` with value `v`.
pub fn utility(p: &Problem, b: f64, c: f64, y: f64, z: f64, v: f64) -> Result<UtilityForms> {
    if !(b > 0.0) {
        return Err(Error::domain("b", b, "(0, inf)"));
    }
    let a = p.a();
    let base = -a * (c + b * y) + v;
    let psi0 = p.shape.psi_antiderivative(z);
    let lemma = base - a * psi0;
    let theorem = if z - y >= p.zbar() {
        base + a * (p.shape.psi_antiderivative(z - y) - psi0)
    } else {
        f64::INFINITY
    };
    Ok(UtilityForms {
        lemma_form: -lemma.exp(),
        theorem_form: -theorem.exp(),
    })
}

/// Everything known about one initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueReport {
    pub y: f64,
    pub z: f64,
    pub v_closed: f64,
    pub j_path: f64,
    pub initial_block: f64,
    pub wait_time: f64,
    pub t_bar: f64,
    pub hjb: Option<HjbReport>,
    pub utility: UtilityForms,
}

/// Value, path performance and utility at `(y, z)`.
pub fn report(
    vf: &ValueFunction<'_>,
    y: f64,
    z: f64,
    b: f64,
    c: f64,
    ctl: &strategy::StepControl,
) -> Result<ValueReport> {
    let p = vf.problem();
    let v = vf.value(y, z)?;
    let path = strategy::simulate(p, vf.table(), y, z, ctl)?;
    let j = performance(&path, p)?;
    Ok(ValueReport {
        y,
        z,
        v_closed: v,
        j_path: j,
        initial_block: path.initial_block,
        wait_time: path.wait_time,
        t_bar: path.t_bar,
        hjb: None,
        utility: utility(p, b, c, y, z, v)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{tabulate, GridSpec};
    use crate::strategy::StepControl;
    use crate::{BookShape, LevyModel, Resilience};

    fn setup(mu: f64) -> (Problem, BoundaryTable) {
        let p = Problem::new(
            LevyModel::brownian(mu, 4.011e-4).unwrap(),
            BookShape::block(1000.0, -1.0).unwrap(),
            Resilience::exponential(5.0).unwrap(),
            1e-2,
        )
        .unwrap();
        let t = tabulate(&p, &GridSpec::new(400.0)).unwrap();
        (p, t)
    }

    #[test]
    fn zero_holding_is_book_recovery() {
        let (p, t) = setup(-0.0018);
        let vf = ValueFunction::new(&p, &t).unwrap();
        assert_eq!(vf.value(0.0, 0.0).unwrap(), 0.0);
        let v = vf.value(0.0, -50.0).unwrap();
        assert!((v - 1e-2 * 2500.0 / 2000.0).abs() < 1e-15);
    }

    #[test]
    fn branches_agree_on_graph() {
        let (p, t) = setup(-0.0018);
        let vf = ValueFunction::new(&p, &t).unwrap();
        for &y in &[1e-3, 0.5, 3.0, 17.0, 100.0, 250.0, 399.0] {
            let b = t.beta(y);
            let vs = vf.value_sell(b - y).unwrap();
            let vw = vf.value_wait(y, b);
            assert!(
                (vs - vw).abs() <= 1e-9 * (1.0 + vs.abs()),
                "y={y}: {vs} vs {vw}"
            );
        }
    }

    #[test]
    fn value_matches_path_performance() {
        let (p, t) = setup(-0.0018);
        let vf = ValueFunction::new(&p, &t).unwrap();
        for &(y, z) in &[(100.0, 0.0), (100.0, -150.0), (10.0, -1.0), (300.0, -20.0)] {
            let v = vf.value(y, z).unwrap();
            let path = strategy::simulate(&p, &t, y, z, &StepControl::default()).unwrap();
            let j = performance(&path, &p).unwrap();
            assert!(
                (v - j).abs() <= 1e-6 * (1.0 + v.abs()),
                "({y},{z}): v={v} J={j}"
            );
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let (p, t) = setup(-0.0018);
        let vf = ValueFunction::new(&p, &t).unwrap();
        for &(y, z) in &[(100.0, -5.0), (100.0, -200.0), (37.0, -60.0)] {
            let (dy, dz) = vf.derivatives(y, z).unwrap();
            let e = 1e-4;
            let fz = (vf.value(y, z + e).unwrap() - vf.value(y, z - e).unwrap()) / (2.0 * e);
            let fy = (vf.value(y, z).unwrap() - vf.value(y - e, z).unwrap()) / e;
            assert!(
                (dz - fz).abs() < 1e-6 * (1.0 + dz.abs()),
                "v_z {dz} vs {fz}"
            );
            assert!(
                (dy - fy).abs() < 1e-4 * (1.0 + dy.abs()),
                "v_y {dy} vs {fy}"
            );
        }
    }

    #[test]
    fn utility_forms() {
        let (p, _) = setup(-0.0018);
        let u = utility(&p, 1.0, 2.0, 0.0, 0.0, 0.0).unwrap();
        assert!((u.lemma_form + (-1e-2f64 * 2.0).exp()).abs() < 1e-15);
        assert_eq!(u.lemma_form, u.theorem_form);
        assert!(utility(&p, 0.0, 0.0, 1.0, 0.0, 0.0).is_err());
        let u = utility(&p, 1.0, 0.0, 10.0, -3.0, 0.2).unwrap();
        assert!(u.lemma_form < 0.0 && u.theorem_form < 0.0);
    }

    #[test]
    fn residuals_small_on_sample() {
        let (p, t) = setup(-0.0018);
        let vf = ValueFunction::new(&p, &t).unwrap();
        let spec = SampleSpec {
            n_points: 500,
            ..Default::default()
        };
        let rep = hjb_check(&vf, &spec, 1e-8).unwrap();
        assert!(rep.n_sell > 0 && rep.n_wait > 0 && rep.n_graph > 0);
        assert!(
            rep.violations.is_empty(),
            "{:?}",
            &rep.violations[..rep.violations.len().min(3)]
        );
    }
}
