//! The liquidation strategy induced by a boundary.
//!
//! From a state `(y, z)` the agent either sells a block down the diagonal
//! `z − y = const` onto the boundary graph (`z > β(y)`) or waits for the book
//! to recover up to it (`z < β(y)`). From then on the state stays on the
//! graph. Writing `s = z − y`, trading leaves `s` unchanged and resilience
//! raises it, so the whole motion on the graph is the scalar ODE
//!
//! `ds/dt = −h(ρ_β⁻¹(s))`, `(Y_t, Z_t) = (γ_β⁻¹(s_t), ρ_β⁻¹(s_t))`.
//!
//! On sloped pieces of the graph this is continuous selling; on vertical
//! pieces (jumps of `β`) `Y` is frozen and the agent waits. Liquidation ends
//! at `t̄` when `s` reaches `β(0+)`; afterwards the book just recovers.

use crate::book::Resilience;
use crate::boundary::BoundaryTable;
use crate::error::{Error, Result};
use crate::ode::{self, DenseStep, OdeOptions, Outcome};
use crate::quad::{self, DEFAULT_TOL};
use crate::Problem;

/// Region of the state space relative to the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Sell,
    Wait,
    OnBoundary,
}

/// First action from a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialAction {
    /// Sell this many shares immediately.
    Block(f64),
    /// Wait this long for the book to recover.
    Wait(f64),
}

/// Label of a sampled path point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Block,
    Wait,
    Boundary,
    Done,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Block => "block",
            Phase::Wait => "wait",
            Phase::Boundary => "boundary",
            Phase::Done => "done",
        }
    }
}

/// Integration and sampling controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    /// Relative tolerance of the boundary ODE.
    pub rtol: f64,
    /// Largest spacing of recorded samples (days).
    pub dt_max: f64,
    /// Time beyond which an unfinished path is cut off (days).
    pub horizon: f64,
    /// Paths that never finish are cut off once `Y < trunc_rel · Y_0`.
    pub trunc_rel: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            rtol: 1e-10,
            dt_max: f64::INFINITY,
            horizon: 1e6,
            trunc_rel: 1e-9,
        }
    }
}

/// A waiting interval at a jump of the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaitingInterval {
    pub t_start: f64,
    pub t_end: f64,
    /// Frozen holding.
    pub y: f64,
    /// `s = z − y` at the start of the wait.
    pub s_start: f64,
}

/// An analytic or dense-output description of one stretch of the path.
#[derive(Debug, Clone, PartialEq)]
pub enum Piece {
    /// `Y = y`, `Z` recovers from `z0` at `t0`.
    Wait { t0: f64, t1: f64, y: f64, z0: f64 },
    /// On the graph; `s(t)` from a dense ODE step, `(Y, Z)` affine in `s`.
    Boundary {
        step: DenseStep,
        t1: f64,
        /// `(y, z, s)` at the segment's upper-`s` vertex and the slopes
        /// `dy/ds`, `dz/ds` along it.
        anchor: (f64, f64, f64),
        slope: (f64, f64),
        vertical: bool,
    },
    /// `Y = 0` from `t0` on; `Z` recovers from `z0`.
    Tail { t0: f64, z0: f64 },
}

/// A liquidation trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyPath {
    /// Initial state before any block sale.
    pub y0: f64,
    pub z0: f64,
    pub times: Vec<f64>,
    pub y_vals: Vec<f64>,
    pub z_vals: Vec<f64>,
    pub phases: Vec<Phase>,
    /// Shares sold at `t = 0`.
    pub initial_block: f64,
    /// Initial waiting time `t_w`.
    pub wait_time: f64,
    pub waiting_intervals: Vec<WaitingInterval>,
    /// Completion time `t̄`; infinite when the path never liquidates fully.
    pub t_bar: f64,
    /// Time at which an unfinished path was cut off.
    pub t_end: f64,
    /// Upper bound on the cost of the discarded tail of a cut-off path.
    pub tail_bound: f64,
    pub pieces: Vec<Piece>,
    resilience: Resilience,
}

/// Classifies `(y, z)` against the boundary.
pub fn classify(p: &Problem, table: &BoundaryTable, y: f64, z: f64) -> Result<Region> {
    p.check_solvent(y, z)?;
    if y == 0.0 {
        return Ok(Region::Wait);
    }
    if y > table.y_max() {
        return Err(Error::OutOfRange {
            what: "y",
            value: y,
            limit: table.y_max(),
        });
    }
    let b = table.beta(y);
    let tol = 1e-12 * (1.0 + b.abs());
    Ok(if (z - b).abs() <= tol {
        Region::OnBoundary
    } else if z > b {
        Region::Sell
    } else {
        Region::Wait
    })
}

/// Block size or initial waiting time from `(y, z)`, `y > 0`.
pub fn initial_action(p: &Problem, table: &BoundaryTable, y: f64, z: f64) -> Result<InitialAction> {
    if !(y > 0.0) {
        return Err(Error::domain("y", y, "(0, inf)"));
    }
    match classify(p, table, y, z)? {
        Region::OnBoundary => Ok(InitialAction::Block(0.0)),
        Region::Sell => {
            let landing = table.gamma_beta_inv(z - y)?;
            Ok(InitialAction::Block((y - landing).max(0.0)))
        }
        Region::Wait => {
            let b = table.beta(y);
            Ok(InitialAction::Wait(p.resilience.recovery_time(z, b)))
        }
    }
}

struct Recorder<'a> {
    path: &'a mut StrategyPath,
    dt_max: f64,
}

impl Recorder<'_> {
    fn push(&mut self, t: f64, y: f64, z: f64, phase: Phase) {
        let p = &mut *self.path;
        if let Some(&last) = p.times.last() {
            if t == last && p.y_vals.last() == Some(&y) && p.z_vals.last() == Some(&z) {
                // a repeated state keeps its label unless it marks completion
                if phase == Phase::Done {
                    *p.phases.last_mut().expect("phases parallel times") = phase;
                }
                return;
            }
        }
        p.times.push(t);
        p.y_vals.push(y);
        p.z_vals.push(z);
        p.phases.push(phase);
    }

    /// Records intermediate samples of `state(t)` on `(t0, t1]`.
    fn fill<F: Fn(f64) -> (f64, f64)>(&mut self, t0: f64, t1: f64, phase: Phase, state: F) {
        if self.dt_max.is_finite() && t1 - t0 > self.dt_max {
            let n = ((t1 - t0) / self.dt_max).ceil() as usize;
            for k in 1..n {
                let t = t0 + (t1 - t0) * k as f64 / n as f64;
                let (y, z) = state(t);
                self.push(t, y, z, phase);
            }
        }
        let (y, z) = state(t1);
        self.push(t1, y, z, phase);
    }
}

/// Builds the path of the boundary strategy from `(y, z)`.
pub fn simulate(
    p: &Problem,
    table: &BoundaryTable,
    y: f64,
    z: f64,
    ctl: &StepControl,
) -> Result<StrategyPath> {
    p.check_solvent(y, z)?;
    let res = p.resilience.clone();
    let mut path = StrategyPath {
        y0: y,
        z0: z,
        times: Vec::new(),
        y_vals: Vec::new(),
        z_vals: Vec::new(),
        phases: Vec::new(),
        initial_block: 0.0,
        wait_time: 0.0,
        waiting_intervals: Vec::new(),
        t_bar: 0.0,
        t_end: 0.0,
        tail_bound: 0.0,
        pieces: Vec::new(),
        resilience: res.clone(),
    };
    let mut rec = Recorder {
        path: &mut path,
        dt_max: ctl.dt_max,
    };
    rec.push(0.0, y, z, Phase::Block);

    if y == 0.0 {
        rec.path.pieces.push(Piece::Tail { t0: 0.0, z0: z });
        rec.path.phases[0] = Phase::Done;
        return Ok(path);
    }

    // initial action
    let mut t = 0.0;
    let s;
    match initial_action(p, table, y, z)? {
        InitialAction::Block(delta) => {
            s = z - y;
            let d = table.diagonal(s)?;
            rec.path.initial_block = delta;
            if delta > 0.0 {
                rec.push(0.0, d.y, d.z, Phase::Block);
            }
        }
        InitialAction::Wait(tw) => {
            let b = table.beta(y);
            s = b - y;
            rec.path.wait_time = tw;
            rec.path.pieces.push(Piece::Wait {
                t0: 0.0,
                t1: tw,
                y,
                z0: z,
            });
            rec.path.phases[0] = Phase::Wait;
            rec.fill(0.0, tw, Phase::Wait, |tt| {
                if tt >= tw {
                    (y, b)
                } else {
                    (y, res.decay(z, tt))
                }
            });
            t = tw;
        }
    }

    follow_boundary(p, table, s, t, ctl, &mut rec)?;
    Ok(path)
}

/// Integrates the graph dynamics from `s` at time `t` to completion.
fn follow_boundary(
    p: &Problem,
    table: &BoundaryTable,
    mut s: f64,
    mut t: f64,
    ctl: &StepControl,
    rec: &mut Recorder<'_>,
) -> Result<()> {
    let vs = table.vertex_s();
    let y_start = table.diagonal(s)?.y;
    let y_cut = ctl.trunc_rel * y_start;
    let opts = OdeOptions {
        rtol: ctl.rtol,
        atol: ctl.rtol * 1e-3,
        h_max: ctl.dt_max,
        ..Default::default()
    };
    let mut k = table.diagonal(s)?.segment;
    loop {
        if k == 0 || s >= 0.0 {
            // reached the best bid with nothing left
            finish(rec, t, 0.0);
            return Ok(());
        }
        let (ya, za) = table.vertex(k - 1);
        let (yb, zb) = table.vertex(k);
        let (sa, sb) = (vs[k - 1], vs[k]);
        if k == 1 && ya == 0.0 && yb == 0.0 {
            // the vertical piece on y = 0: liquidation is complete
            finish(rec, t, table.diagonal(s)?.z);
            return Ok(());
        }
        let dyds = (ya - yb) / (sa - sb);
        let dzds = (za - zb) / (sa - sb);
        let vertical = ya == yb;
        let y_of = |s: f64| (ya + (s - sa) * dyds).max(0.0);
        let z_of = |s: f64| (za + (s - sa) * dzds).min(0.0);
        let rhs = |_: f64, s: f64| -p.resilience.h(z_of(s.min(sa)));
        // the final segment ending at the origin is never finished in
        // finite time when β(0+) = 0; it is cut at Y = y_cut
        let open_end = k == 1 && sa == 0.0;
        let event = |_: f64, s: f64| {
            if open_end {
                y_of(s) - y_cut
            } else {
                sa - s
            }
        };
        let phase = if vertical {
            Phase::Wait
        } else {
            Phase::Boundary
        };
        let t_seg0 = t;
        let s_seg0 = s;
        let mut steps: Vec<(DenseStep, f64)> = Vec::new();
        let out = ode::dopri5(rhs, t, s, ctl.horizon, &opts, event, |st, t1| {
            steps.push((*st, t1));
        })?;
        for (st, t1) in &steps {
            rec.path.pieces.push(Piece::Boundary {
                step: *st,
                t1: *t1,
                anchor: (ya, za, sa),
                slope: (dyds, dzds),
                vertical,
            });
            let st = *st;
            rec.fill(st.t0, *t1, phase, |tt| {
                let ss = st.eval(tt).min(sa);
                (y_of(ss), z_of(ss))
            });
        }
        let (t_new, s_new) = out.state();
        t = t_new;
        match out {
            Outcome::Horizon { .. } => {
                s = s_new;
                cut_off(p, rec, t, y_of(s), z_of(s), s);
                return Ok(());
            }
            Outcome::Event { .. } => {
                if vertical && t > t_seg0 {
                    rec.path.waiting_intervals.push(WaitingInterval {
                        t_start: t_seg0,
                        t_end: t,
                        y: ya,
                        s_start: s_seg0,
                    });
                }
                if open_end {
                    s = s_new;
                    cut_off(p, rec, t, y_of(s), z_of(s), s);
                    return Ok(());
                }
                s = sa;
                k -= 1;
            }
        }
    }
}

fn finish(rec: &mut Recorder<'_>, t: f64, z: f64) {
    rec.path.t_bar = t;
    rec.path.t_end = t;
    rec.path.pieces.push(Piece::Tail { t0: t, z0: z });
    rec.push(t, 0.0, z, Phase::Done);
}

fn cut_off(p: &Problem, rec: &mut Recorder<'_>, t: f64, y: f64, z: f64, s: f64) {
    rec.path.t_bar = f64::INFINITY;
    rec.path.t_end = t;
    // the remaining cost ∫(κ_A/(−h) − Aψ) ds from s to 0 has an integrand
    // that shrinks towards the origin, so its value at s bounds it
    let h = p.resilience.h(z);
    let rate = if h != 0.0 { p.kappa(y) / h.abs() } else { 0.0 } + p.a() * p.shape.psi(z).abs();
    rec.path.tail_bound = rate * s.abs();
}

impl StrategyPath {
    /// `(Y_t, Z_t)` for any `t ≥ 0` (right-continuous, after the block at 0).
    pub fn state_at(&self, t: f64) -> (f64, f64) {
        let piece = self
            .pieces
            .iter()
            .rev()
            .find(|pc| piece_start(pc) <= t)
            .or_else(|| self.pieces.first());
        match piece {
            None => (self.y0, self.z0),
            Some(Piece::Wait { t0, y, z0, .. }) => (*y, self.resilience.decay(*z0, t - t0)),
            Some(Piece::Boundary {
                step,
                t1,
                anchor,
                slope,
                ..
            }) => {
                let tt = t.min(*t1);
                let s = step.eval(tt).min(anchor.2);
                (
                    (anchor.0 + (s - anchor.2) * slope.0).max(0.0),
                    (anchor.1 + (s - anchor.2) * slope.1).min(0.0),
                )
            }
            Some(Piece::Tail { t0, z0 }) => (0.0, self.resilience.decay(*z0, t - t0)),
        }
    }

    /// Holding right after the initial block.
    pub fn y_after_block(&self) -> f64 {
        self.y0 - self.initial_block
    }

    /// Book state right after the initial block.
    pub fn z_after_block(&self) -> f64 {
        self.z0 - self.initial_block
    }

    /// Whether the path was cut off before liquidating completely.
    pub fn truncated(&self) -> bool {
        !self.t_bar.is_finite()
    }

    /// `∫ κ_A(Y_t) dt` and `∫ A h(Z_t) ψ(Z_t) dt` over the recorded path,
    /// by quadrature in time (the tail after `t̄` is not included).
    pub fn running_costs(&self, p: &Problem) -> (f64, f64) {
        let a = p.a();
        let mut risk = 0.0;
        let mut impact = 0.0;
        let impact_rate = |z: f64| a * p.resilience.h(z) * p.shape.psi(z);
        for pc in &self.pieces {
            match pc {
                Piece::Wait { t0, t1, y, z0 } => {
                    risk += p.kappa(*y) * (t1 - t0);
                    impact += quad::integrate(
                        |t| impact_rate(self.resilience.decay(*z0, t - t0)),
                        *t0,
                        *t1,
                        DEFAULT_TOL,
                    )
                    .value;
                }
                Piece::Boundary {
                    step,
                    t1,
                    anchor,
                    slope,
                    vertical,
                } => {
                    let st = *step;
                    let y_of = |t: f64| {
                        let s = st.eval(t).min(anchor.2);
                        (anchor.0 + (s - anchor.2) * slope.0).max(0.0)
                    };
                    let z_of = |t: f64| {
                        let s = st.eval(t).min(anchor.2);
                        (anchor.1 + (s - anchor.2) * slope.1).min(0.0)
                    };
                    if *vertical {
                        risk += p.kappa(anchor.0) * (t1 - st.t0);
                    } else {
                        risk +=
                            quad::integrate(|t| p.kappa(y_of(t)), st.t0, *t1, DEFAULT_TOL).value;
                    }
                    impact +=
                        quad::integrate(|t| impact_rate(z_of(t)), st.t0, *t1, DEFAULT_TOL).value;
                }
                Piece::Tail { .. } => {}
            }
        }
        (risk, impact)
    }

    /// `Z` at `t̄` (or at the cut-off time).
    pub fn z_at_completion(&self) -> f64 {
        match self.pieces.last() {
            Some(Piece::Tail { z0, .. }) => *z0,
            _ => self.state_at(self.t_end).1,
        }
    }
}

fn piece_start(pc: &Piece) -> f64 {
    match pc {
        Piece::Wait { t0, .. } => *t0,
        Piece::Boundary { step, .. } => step.t0,
        Piece::Tail { t0, .. } => *t0,
    }
}

/// Admissibility diagnostics of a completed path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibilityReport {
    /// `∫ κ_A(Y_t) dt` over the recorded path.
    pub risk_integral: f64,
    /// `t·Y_t` (negative drift) or `t·Y_t²` (zero drift) at the last
    /// recorded times; should decrease towards 0.
    pub vanishing: [f64; 2],
    pub finite_t_bar: bool,
    pub admissible: bool,
}

/// Checks `∫κ_A(Y)dt < ∞` and the vanishing rate of the holding.
pub fn verify_admissibility(path: &StrategyPath, p: &Problem) -> AdmissibilityReport {
    let (risk, _) = path.running_costs(p);
    let power = if p.levy.mu < 0.0 { 1 } else { 2 };
    let stat = |t: f64| {
        let (y, _) = path.state_at(t);
        t * y.powi(power)
    };
    let (t_half, t_end) = if path.t_bar.is_finite() {
        (path.t_bar, path.t_bar)
    } else {
        (0.5 * path.t_end, path.t_end)
    };
    let vanishing = [stat(t_half), stat(t_end)];
    let finite_t_bar = path.t_bar.is_finite();
    let admissible = risk.is_finite()
        && (finite_t_bar || (vanishing[1] <= vanishing[0] && path.tail_bound.is_finite()));
    AdmissibilityReport {
        risk_integral: risk,
        vanishing,
        finite_t_bar,
        admissible,
    }
}
