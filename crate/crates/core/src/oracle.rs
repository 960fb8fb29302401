//! A brute-force dynamic-programming solver for the deterministic cost
//! functional, built without reference to the boundary theory.
//!
//! The state space is a lattice `y_i = i q`, `z_j = −j q` with a common
//! step `q` (the sell quantum), so selling one quantum moves `(i, j)` to
//! `(i − 1, j + 1)` along the same diagonal `d = i + j`. Waiting only ever
//! raises `z`, i.e. lowers `d`. Processing diagonals in increasing `d` (and
//! within a diagonal in increasing `i`) therefore makes a single pass exact
//! except for the self-coupling of a short wait, which is solved in closed
//! form.
//!
//! Two wait discretisations are offered:
//!
//! * node to node (the default): wait exactly until `z` reaches the next
//!   lattice node; the elapsed time and cost are exact, so every grid
//!   policy is a genuine continuous-time strategy and `V̂ ≥ v`;
//! * fixed step `dt`: the book recovers for `dt` and the value at the
//!   off-lattice state is interpolated linearly in `z`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::strategy::StrategyPath;
use crate::valuation::ValueFunction;
use crate::Problem;

/// Lattice and iteration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub y_max: f64,
    pub n_y: usize,
    pub n_z: usize,
    /// Fixed wait step (days); `None` waits node to node.
    pub dt: Option<f64>,
    pub convergence_tol: f64,
    pub max_sweeps: usize,
}

impl GridSpec {
    pub fn new(y_max: f64, n_y: usize, n_z: usize) -> Self {
        GridSpec {
            y_max,
            n_y,
            n_z,
            dt: None,
            convergence_tol: 1e-12,
            max_sweeps: 10,
        }
    }

    /// The sell quantum `q = y_max / n_y`, also the `z` spacing.
    pub fn quantum(&self) -> f64 {
        self.y_max / self.n_y as f64
    }

    fn validate(&self, p: &Problem) -> Result<()> {
        if !(self.y_max > 0.0 && self.y_max.is_finite()) {
            return Err(Error::domain("grid y_max", self.y_max, "(0, inf)"));
        }
        if self.n_y == 0 || self.n_z == 0 {
            return Err(Error::invalid("grid sizes must be positive"));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::domain("grid dt", dt, "(0, inf)"));
            }
        }
        let z_low = -(self.n_z as f64) * self.quantum();
        if z_low < p.zbar() {
            return Err(Error::OutOfRange {
                what: "grid z range",
                value: z_low,
                limit: p.zbar(),
            });
        }
        if self.y_max >= p.ybar() {
            return Err(Error::OutOfRange {
                what: "grid y_max",
                value: self.y_max,
                limit: p.ybar(),
            });
        }
        Ok(())
    }
}

/// Minimising action at a lattice node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    /// Nothing left to sell.
    Done,
    Sell,
    Wait,
}

/// Value grid and greedy policy.
#[derive(Debug, Clone, PartialEq)]
pub struct DpSolution {
    pub spec: GridSpec,
    pub q: f64,
    /// `V̂(i, j)` at index `i * (n_z + 1) + j`.
    pub values: Vec<f64>,
    pub actions: Vec<Action>,
    pub sweeps: usize,
    /// Sup-norm change of the last sweep.
    pub residual: f64,
}

impl DpSolution {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.spec.n_z + 1) + j
    }

    pub fn y(&self, i: usize) -> f64 {
        i as f64 * self.q
    }

    pub fn z(&self, j: usize) -> f64 {
        -(j as f64) * self.q
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[self.idx(i, j)]
    }

    pub fn action(&self, i: usize, j: usize) -> Action {
        self.actions[self.idx(i, j)]
    }

    /// For each holding row, the book state of the first node (from `z = 0`
    /// down) at which waiting is preferred; `None` if the row never waits.
    pub fn frontier(&self) -> Vec<Option<f64>> {
        (0..=self.spec.n_y)
            .map(|i| {
                if i == 0 {
                    return None;
                }
                (0..=self.spec.n_z)
                    .find(|&j| self.action(i, j) == Action::Wait)
                    .map(|j| self.z(j))
            })
            .collect()
    }

    /// `max |V̂(i,j) − V̂(i,j−1)|` over interior nodes: the cost of one
    /// lattice step, the natural unit for discretisation error.
    pub fn step_cost_scale(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 1..=self.spec.n_y {
            for j in 1..self.spec.n_z {
                m = m.max((self.value(i, j) - self.value(i, j - 1)).abs());
            }
        }
        m
    }
}

struct Lattice<'a> {
    p: &'a Problem,
    spec: GridSpec,
    q: f64,
    /// `H(z_j)`, `A Ψ(z_j)`.
    big_h: Vec<f64>,
    a_psi: Vec<f64>,
    kappa: Vec<f64>,
}

impl Lattice<'_> {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.spec.n_z + 1) + j
    }

    /// Value of waiting at `(i, j)`, `i, j ≥ 1`: returns the candidate value
    /// assuming the wait is taken (self-coupling solved), using `v` for
    /// already-final nodes of lower diagonals.
    fn wait_value(&self, v: &[f64], i: usize, j: usize) -> f64 {
        let k = self.kappa[i];
        match self.spec.dt {
            None => {
                let tau = self.big_h[j] - self.big_h[j - 1];
                let tau = if tau.is_finite() { tau } else { f64::INFINITY };
                let risk = if k == 0.0 { 0.0 } else { k * tau };
                risk + (self.a_psi[j] - self.a_psi[j - 1]) + v[self.idx(i, j - 1)]
            }
            Some(dt) => {
                let zj = -(j as f64) * self.q;
                let zp = self.p.resilience.decay(zj, dt);
                let cost =
                    k * dt + self.a_psi[j] - self.p.a() * self.p.shape.psi_antiderivative(zp);
                let r = (-zp / self.q).clamp(0.0, j as f64);
                let ja = (r.floor() as usize).min(j - 1);
                let w = r - ja as f64;
                let va = v[self.idx(i, ja)];
                if ja + 1 == j {
                    // (1 − w) V(ja) + w V(j) with V(j) the unknown
                    if w >= 1.0 {
                        return f64::INFINITY;
                    }
                    (cost + (1.0 - w) * va) / (1.0 - w)
                } else {
                    cost + (1.0 - w) * va + w * v[self.idx(i, ja + 1)]
                }
            }
        }
    }

    /// One pass over all diagonals; returns the sup-norm change.
    fn sweep(&self, v: &mut [f64], act: &mut [Action]) -> f64 {
        let (ny, nz) = (self.spec.n_y, self.spec.n_z);
        let mut change: f64 = 0.0;
        for d in 0..=(ny + nz) {
            let i_lo = d.saturating_sub(nz).max(1);
            let i_hi = d.min(ny);
            if i_lo > i_hi {
                continue;
            }
            let waits: Vec<f64> = {
                let v_ro: &[f64] = v;
                (i_lo..=i_hi)
                    .into_par_iter()
                    .map(|i| {
                        let j = d - i;
                        if j == 0 {
                            f64::INFINITY
                        } else {
                            self.wait_value(v_ro, i, j)
                        }
                    })
                    .collect()
            };
            for (n, i) in (i_lo..=i_hi).enumerate() {
                let j = d - i;
                let sell = if j < nz {
                    v[self.idx(i - 1, j + 1)]
                } else {
                    f64::INFINITY
                };
                let (val, a) = if sell <= waits[n] {
                    (sell, Action::Sell)
                } else {
                    (waits[n], Action::Wait)
                };
                let k = self.idx(i, j);
                if v[k].is_finite() {
                    change = change.max((v[k] - val).abs());
                } else if val.is_finite() {
                    change = f64::INFINITY;
                }
                v[k] = val;
                act[k] = a;
            }
        }
        change
    }
}

/// Solves the lattice problem by value iteration.
pub fn solve_dp(p: &Problem, spec: &GridSpec) -> Result<DpSolution> {
    spec.validate(p)?;
    let q = spec.quantum();
    let (ny, nz) = (spec.n_y, spec.n_z);
    let zs: Vec<f64> = (0..=nz).map(|j| -(j as f64) * q).collect();
    let lat = Lattice {
        p,
        spec: *spec,
        q,
        big_h: zs.iter().map(|&z| p.resilience.big_h(z)).collect(),
        a_psi: zs
            .iter()
            .map(|&z| p.a() * p.shape.psi_antiderivative(z))
            .collect(),
        kappa: (0..=ny).map(|i| p.kappa(i as f64 * q)).collect(),
    };
    let n = (ny + 1) * (nz + 1);
    let mut v = vec![f64::INFINITY; n];
    let mut act = vec![Action::Done; n];
    // row y = 0: nothing to sell, the book just recovers
    v[..=nz].copy_from_slice(&lat.a_psi);
    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    while sweeps < spec.max_sweeps {
        residual = lat.sweep(&mut v, &mut act);
        sweeps += 1;
        if residual < spec.convergence_tol {
            break;
        }
    }
    if residual >= spec.convergence_tol {
        return Err(Error::NoConvergence {
            method: "value iteration",
            detail: format!("sup-norm change {residual:e} after {sweeps} sweeps"),
        });
    }
    Ok(DpSolution {
        spec: *spec,
        q,
        values: v,
        actions: act,
        sweeps,
        residual,
    })
}

/// Cost of a strategy path under the lattice accounting.
///
/// The path is snapped to the lattice: starting from the node nearest to
/// its initial state, one quantum is sold whenever the lattice holding
/// exceeds the path's holding by at least half a quantum, and otherwise the
/// book recovers to the next node (exact node-to-node wait cost). The result
/// is the cost of a lattice policy, hence never below the node-to-node
/// `V̂` at the starting node.
pub fn policy_cost(path: &StrategyPath, p: &Problem, spec: &GridSpec) -> Result<f64> {
    spec.validate(p)?;
    let q = spec.quantum();
    let mut i = (path.y0 / q).round() as usize;
    let mut j = (-path.z0 / q).round() as usize;
    if i > spec.n_y || j > spec.n_z {
        return Err(Error::OutOfRange {
            what: "path start",
            value: path.y0,
            limit: spec.y_max,
        });
    }
    let a = p.a();
    let z = |j: usize| -(j as f64) * q;
    let mut t = 0.0;
    let mut cost = 0.0;
    while i > 0 {
        let target = path.state_at(t).0;
        let ahead = i as f64 * q - target >= 0.5 * q;
        if (ahead || j == 0) && j < spec.n_z {
            i -= 1;
            j += 1;
        } else {
            if j == 0 {
                return Err(Error::invalid("lattice policy stuck at the best bid"));
            }
            let tau = p.resilience.recovery_time(z(j), z(j - 1));
            if !tau.is_finite() {
                return Ok(f64::INFINITY);
            }
            cost += p.kappa(i as f64 * q) * tau
                + a * (p.shape.psi_antiderivative(z(j)) - p.shape.psi_antiderivative(z(j - 1)));
            t += tau;
            j -= 1;
        }
    }
    Ok(cost + a * p.shape.psi_antiderivative(z(j)))
}

/// DP versus closed form on the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub q: f64,
    /// `max |V̂ − v|` over interior nodes (`i ≥ 1`, `j < n_z`).
    pub max_abs_error: f64,
    pub at: (f64, f64),
    pub step_cost_scale: f64,
    /// Largest distance, in lattice cells, between the DP frontier and `β`.
    pub frontier_cells: f64,
}

/// Compares a DP solution against the closed-form value and boundary.
pub fn compare(sol: &DpSolution, vf: &ValueFunction<'_>) -> Result<Comparison> {
    let (ny, nz) = (sol.spec.n_y, sol.spec.n_z);
    let rows: Vec<(f64, (f64, f64))> = (1..=ny)
        .into_par_iter()
        .map(|i| {
            let mut best = (0.0, (0.0, 0.0));
            for j in 0..nz {
                let (y, z) = (sol.y(i), sol.z(j));
                let e = (sol.value(i, j) - vf.value(y, z)?).abs();
                if e > best.0 {
                    best = (e, (y, z));
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let (max_abs_error, at) =
        rows.into_iter().fold(
            (0.0, (0.0, 0.0)),
            |acc, r| if r.0 > acc.0 { r } else { acc },
        );
    let frontier_cells = sol
        .frontier()
        .iter()
        .enumerate()
        .skip(1)
        .filter_map(|(i, f)| f.map(|z| ((z - vf.table().beta(sol.y(i))) / sol.q).abs()))
        .fold(0.0, f64::max);
    Ok(Comparison {
        q: sol.q,
        max_abs_error,
        at,
        step_cost_scale: sol.step_cost_scale(),
        frontier_cells,
    })
}
