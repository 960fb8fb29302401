//! Scalar Dormand–Prince 5(4) integrator with dense output and a terminal
//! event.
//!
//! The strategy dynamics reduce to one autonomous scalar ODE between
//! boundary vertices, so a scalar solver with a single stopping event is all
//! that is needed.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Step-size control settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest permitted step; `f64::INFINITY` for none.
    pub h_max: f64,
    /// Smallest step before the integrator reports underflow.
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-11,
            atol: 1e-13,
            h_max: f64::INFINITY,
            h_min: 1e-14,
            max_steps: 1_000_000,
        }
    }
}

/// Quintic interpolant over one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    r: [f64; 5],
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// Interpolated solution at `t` in `[t0, t0 + h]`.
    pub fn eval(&self, t: f64) -> f64 {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        self.r[0] + th * (self.r[1] + th1 * (self.r[2] + th * (self.r[3] + th1 * self.r[4])))
    }
}

/// How an integration ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    /// `t_end` was reached.
    Horizon { t: f64, y: f64 },
    /// The event function changed sign at `t`.
    Event { t: f64, y: f64 },
}

impl Outcome {
    pub fn state(&self) -> (f64, f64) {
        match *self {
            Outcome::Horizon { t, y } | Outcome::Event { t, y } => (t, y),
        }
    }
}

/// Integrates `y' = f(t, y)` from `(t0, y0)` towards `t_end`.
///
/// Stops early at the first root of `event(t, y)` where it changes sign
/// from the sign at `t0`. Every accepted step is passed to `observer`
/// together with the last time at which it is valid (the event time for the
/// final step).
pub fn dopri5<F, G, O>(
    f: F,
    t0: f64,
    y0: f64,
    t_end: f64,
    opts: &OdeOptions,
    event: G,
    mut observer: O,
) -> Result<Outcome>
where
    F: Fn(f64, f64) -> f64,
    G: Fn(f64, f64) -> f64,
    O: FnMut(&DenseStep, f64),
{
    if !(t_end > t0) {
        return Ok(Outcome::Horizon { t: t0, y: y0 });
    }
    let g0 = event(t0, y0);
    if g0 == 0.0 {
        return Ok(Outcome::Event { t: t0, y: y0 });
    }
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, y);
    let scale0 = opts.atol + opts.rtol * y.abs();
    let mut h = if k1 != 0.0 {
        (0.01 * scale0 / k1.abs()).max(1e-6 * (t_end - t0).min(1.0))
    } else {
        1e-3 * (t_end - t0)
    };
    h = h.min(opts.h_max).min(t_end - t0);
    let mut g_prev = g0;
    for _ in 0..opts.max_steps {
        if t + h > t_end {
            h = t_end - t;
        }
        let k2 = f(t + C2 * h, y + h * A21 * k1);
        let k3 = f(t + C3 * h, y + h * (A31 * k1 + A32 * k2));
        let k4 = f(t + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3));
        let k5 = f(
            t + C5 * h,
            y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4),
        );
        let k6 = f(
            t + h,
            y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5),
        );
        let y1 = y + h * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6);
        let k7 = f(t + h, y1);
        let err_abs = (h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)).abs();
        let sc = opts.atol + opts.rtol * y.abs().max(y1.abs());
        let err = err_abs / sc;
        if !err.is_finite() || !y1.is_finite() {
            h *= 0.25;
            if h.abs() < opts.h_min {
                return Err(Error::NoConvergence {
                    method: "dopri5",
                    detail: format!("non-finite derivative near t = {t}"),
                });
            }
            continue;
        }
        if err <= 1.0 {
            let r2 = y1 - y;
            let r3 = h * k1 - r2;
            let r4 = r2 - h * k7 - r3;
            let r5 = h * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7);
            let step = DenseStep {
                t0: t,
                h,
                r: [y, r2, r3, r4, r5],
            };
            let t1 = t + h;
            let g1 = event(t1, y1);
            if g1 == 0.0 || g1.signum() != g_prev.signum() {
                // locate the root on the interpolant
                let (mut lo, mut hi) = (t, t1);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    let gm = event(mid, step.eval(mid));
                    if gm != 0.0 && gm.signum() == g_prev.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let te = hi;
                let ye = step.eval(te);
                observer(&step, te);
                return Ok(Outcome::Event { t: te, y: ye });
            }
            observer(&step, t1);
            t = t1;
            y = y1;
            k1 = k7;
            g_prev = g1;
            if t >= t_end {
                return Ok(Outcome::Horizon { t, y });
            }
        }
        let fac = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * fac).min(opts.h_max);
        if h < opts.h_min {
            return Err(Error::NoConvergence {
                method: "dopri5",
                detail: format!("step size underflow at t = {t}"),
            });
        }
    }
    Err(Error::NoConvergence {
        method: "dopri5",
        detail: format!("step budget exhausted at t = {t}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let opts = OdeOptions::default();
        let out = dopri5(
            |_, y| -5.0 * y,
            0.0,
            -0.5,
            1.0,
            &opts,
            |_, _| 1.0,
            |_, _| {},
        )
        .unwrap();
        let (t, y) = out.state();
        assert_eq!(t, 1.0);
        assert!((y + 0.5 * (-5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn event_located_precisely() {
        let opts = OdeOptions::default();
        // y = -e^{-t}; event at y = -0.25 -> t = ln 4
        let out = dopri5(
            |_, y| -y,
            0.0,
            -1.0,
            10.0,
            &opts,
            |_, y| y + 0.25,
            |_, _| {},
        )
        .unwrap();
        match out {
            Outcome::Event { t, y } => {
                assert!((t - 4f64.ln()).abs() < 1e-10, "{t}");
                assert!((y + 0.25).abs() < 1e-12);
            }
            other => panic!("expected event, got {other:?}"),
        }
    }

    #[test]
    fn dense_output_is_accurate_inside_steps() {
        let opts = OdeOptions::default();
        let mut worst: f64 = 0.0;
        dopri5(
            |t, _| t.cos(),
            0.0,
            0.0,
            6.0,
            &opts,
            |_, _| 1.0,
            |s, _| {
                for k in 1..4 {
                    let tt = s.t0 + s.h * k as f64 / 4.0;
                    worst = worst.max((s.eval(tt) - tt.sin()).abs());
                }
            },
        )
        .unwrap();
        assert!(worst < 1e-9, "{worst}");
    }
}
