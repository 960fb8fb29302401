//! Optimal liquidation for a CARA agent selling into a resilient one-sided
//! limit order book when the unaffected price is a Lévy process.
//!
//! The stochastic problem reduces to a deterministic singular control
//! problem in the state `(y, z)` — shares left and volume displacement of
//! the book. Its solution is an intervention boundary `z = β(y)`: above it
//! the agent sells a block, below it the agent waits for the book to
//! recover, and on it the agent sells continuously.
//!
//! * [`levy`] — cumulant machinery `κ`, `κ_A`, `κ_A′`.
//! * [`book`] — book shape `φ`/`ψ` and resilience `h`, `H`, `H⁻¹`.
//! * [`boundary`] — `Γ(x;y)`, the maximiser `β`, and the tabulated boundary.
//! * [`strategy`] — the induced liquidation path.
//! * [`valuation`] — closed-form value, path performance, HJB residuals,
//!   expected utility.
//! * [`oracle`] — an independent dynamic-programming solver.
//! * [`montecarlo`] — Lévy path sampling and realised-cash utility.

pub mod book;
pub mod boundary;
pub mod error;
pub mod levy;
pub mod montecarlo;
pub mod ode;
pub mod oracle;
pub mod quad;
pub mod search;
pub mod strategy;
pub mod table;
pub mod valuation;

pub use book::{BookShape, Resilience, TableResilience, TableShape};
pub use boundary::{BoundaryTable, GridSpec as BoundaryGrid};
pub use error::{Error, Result};
pub use levy::{JumpSpec, LevyModel, TabulatedDensity, VgParams};
pub use strategy::{Phase, StepControl, StrategyPath};

/// A complete liquidation problem: price process, book, and the agent's
/// risk aversion `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub levy: LevyModel,
    pub shape: BookShape,
    pub resilience: Resilience,
    /// Absolute risk aversion `A > 0`.
    pub risk_aversion: f64,
}

impl Problem {
    pub fn new(
        levy: LevyModel,
        shape: BookShape,
        resilience: Resilience,
        risk_aversion: f64,
    ) -> Result<Self> {
        if !(risk_aversion > 0.0 && risk_aversion.is_finite()) {
            return Err(Error::domain("A", risk_aversion, "(0, inf)"));
        }
        Ok(Problem {
            levy,
            shape,
            resilience,
            risk_aversion,
        })
    }

    pub fn a(&self) -> f64 {
        self.risk_aversion
    }

    pub fn zbar(&self) -> f64 {
        self.shape.zbar()
    }

    pub fn kappa(&self, y: f64) -> f64 {
        self.levy.kappa_a(self.risk_aversion, y)
    }

    pub fn kappa_prime(&self, y: f64) -> f64 {
        self.levy.kappa_a_prime(self.risk_aversion, y)
    }

    pub fn ybar(&self) -> f64 {
        self.levy.ybar_a(self.risk_aversion)
    }

    /// `(y, z)` lies in the solvency region `z > y − ȳ_A + z̄`, `z ≤ 0`.
    pub fn is_solvent(&self, y: f64, z: f64) -> bool {
        y >= 0.0 && z <= 0.0 && z >= self.zbar() && z > y - self.ybar() + self.zbar()
    }

    pub fn check_solvent(&self, y: f64, z: f64) -> Result<()> {
        if self.is_solvent(y, z) {
            Ok(())
        } else {
            Err(Error::Insolvent { y, z })
        }
    }

    /// `Γ(x;y) = Aψ(x) + κ_A(y)/h(x) + κ_A′(y)H(x)` with `κ_A(y)`, `κ_A′(y)`
    /// supplied by the caller.
    pub fn gamma_with(&self, x: f64, kappa: f64, kappa_prime: f64) -> f64 {
        let h = self.resilience.h(x);
        let mut g = self.risk_aversion * self.shape.psi(x);
        if kappa != 0.0 {
            g += kappa / h;
        }
        if kappa_prime != 0.0 {
            g += kappa_prime * self.resilience.big_h(x);
        }
        g
    }

    /// `Γ(x;y)`.
    pub fn gamma(&self, x: f64, y: f64) -> f64 {
        self.gamma_with(x, self.kappa(y), self.kappa_prime(y))
    }

    /// `∂Γ/∂x = Aψ′(x) − κ_A h′(x)/h(x)² + κ_A′/h(x)` and the sum of the
    /// absolute values of its three terms.
    pub fn gamma_prime_with(&self, x: f64, kappa: f64, kappa_prime: f64) -> (f64, f64) {
        let h = self.resilience.h(x);
        let t1 = self.risk_aversion * self.shape.psi_prime(x);
        let t2 = if kappa != 0.0 {
            -kappa * self.resilience.h_prime(x) / (h * h)
        } else {
            0.0
        };
        let t3 = if kappa_prime != 0.0 {
            kappa_prime / h
        } else {
            0.0
        };
        (t1 + t2 + t3, t1.abs() + t2.abs() + t3.abs())
    }
}
