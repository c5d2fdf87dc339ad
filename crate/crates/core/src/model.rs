//! Model parameters, equilibria and the linearization coefficients.
//!
//! The model is the scalar delay equation
//!
//! ```text
//! x'(t) = -[beta0 / (1 + x(t)^n) + delta] x(t) + k beta0 x(t-r) / (1 + x(t-r)^n),   k = 2 exp(-gamma r)
//! ```
//!
//! Everything here is a pure function of [`Parameters`]; nothing is cached.

use crate::error::{Error, Result};

/// The five positive model constants. `k` is derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parameters {
    /// Maximal proliferation rate.
    pub beta0: f64,
    /// Hill exponent (need not be an integer).
    pub n: f64,
    /// Decay rate.
    pub delta: f64,
    /// Loss rate entering `k = 2 exp(-gamma r)`.
    pub gamma: f64,
    /// Delay.
    pub r: f64,
}

impl Parameters {
    pub fn new(beta0: f64, n: f64, delta: f64, gamma: f64, r: f64) -> Result<Self> {
        let params = Self {
            beta0,
            n,
            delta,
            gamma,
            r,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta0", self.beta0),
            ("n", self.n),
            ("delta", self.delta),
            ("gamma", self.gamma),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite and strictly positive",
                });
            }
        }
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "r",
                value: self.r,
                reason: "must be finite and nonnegative",
            });
        }
        Ok(())
    }

    /// Same constants with a different delay (and therefore a different `k`).
    pub fn with_r(&self, r: f64) -> Result<Self> {
        Self::new(self.beta0, self.n, self.delta, self.gamma, r)
    }

    /// Returns a copy with one named parameter replaced. Used by sweeps.
    pub fn with_param(&self, name: ParamName, value: f64) -> Result<Self> {
        let mut p = *self;
        match name {
            ParamName::Beta0 => p.beta0 = value,
            ParamName::N => p.n = value,
            ParamName::Delta => p.delta = value,
            ParamName::Gamma => p.gamma = value,
            ParamName::R => p.r = value,
        }
        p.validate()?;
        Ok(p)
    }

    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::Beta0 => self.beta0,
            ParamName::N => self.n,
            ParamName::Delta => self.delta,
            ParamName::Gamma => self.gamma,
            ParamName::R => self.r,
        }
    }

    pub fn k(&self) -> f64 {
        derive_k(self)
    }

    /// `(beta0/delta)(k-1)`; the quantity `A` of the positive equilibrium.
    pub fn a_ratio(&self) -> f64 {
        self.beta0 * (self.k() - 1.0) / self.delta
    }

    /// Hill-type rate `beta(x) = beta0 / (1 + x^n)`.
    pub fn beta(&self, x: f64) -> f64 {
        self.beta0 / (1.0 + x.powf(self.n))
    }

    /// `beta'(x)` for x > 0. At x = 0 it is singular when n < 1.
    pub fn beta_prime(&self, x: f64) -> f64 {
        let xn = x.powf(self.n);
        -self.beta0 * self.n * x.powf(self.n - 1.0) / (1.0 + xn).powi(2)
    }
}

/// Names of the sweepable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamName {
    Beta0,
    N,
    Delta,
    Gamma,
    R,
}

impl ParamName {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParamName::Beta0 => "beta0",
            ParamName::N => "n",
            ParamName::Delta => "delta",
            ParamName::Gamma => "gamma",
            ParamName::R => "r",
        }
    }
}

impl std::str::FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta0" => Ok(ParamName::Beta0),
            "n" => Ok(ParamName::N),
            "delta" => Ok(ParamName::Delta),
            "gamma" => Ok(ParamName::Gamma),
            "r" => Ok(ParamName::R),
            other => Err(Error::Parse(format!(
                "unknown parameter '{other}' (expected one of beta0, n, delta, gamma, r)"
            ))),
        }
    }
}

impl std::fmt::Display for ParamName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `k = 2 exp(-gamma r)`.
pub fn derive_k(params: &Parameters) -> f64 {
    2.0 * (-params.gamma * params.r).exp()
}

/// Which equilibrium a computation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EquilibriumTag {
    X1,
    X2,
}

impl std::fmt::Display for EquilibriumTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EquilibriumTag::X1 => "x1",
            EquilibriumTag::X2 => "x2",
        })
    }
}

impl std::str::FromStr for EquilibriumTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x1" => Ok(EquilibriumTag::X1),
            "x2" => Ok(EquilibriumTag::X2),
            other => Err(Error::Parse(format!(
                "unknown equilibrium '{other}' (expected x1 or x2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibria {
    /// Always exactly zero.
    pub x1: f64,
    pub x2: Option<f64>,
}

impl Equilibria {
    pub fn get(&self, which: EquilibriumTag) -> Option<f64> {
        match which {
            EquilibriumTag::X1 => Some(self.x1),
            EquilibriumTag::X2 => self.x2,
        }
    }
}

/// `x1 = 0` and, when `(beta0/delta)(k-1) > 1` strictly, `x2 = ((beta0/delta)(k-1) - 1)^(1/n)`.
pub fn equilibria(params: &Parameters) -> Equilibria {
    let excess = params.a_ratio() - 1.0;
    let x2 = (excess > 0.0).then(|| excess.powf(1.0 / params.n));
    Equilibria { x1: 0.0, x2 }
}

/// Largest delay for which `x2` exists, `-(1/gamma) ln((1 + delta/beta0)/2)`.
///
/// Absent when `delta > beta0`; equals zero when `delta == beta0`, in which case
/// no nonnegative delay admits `x2`.
pub fn r_max(params: &Parameters) -> Option<f64> {
    let ratio = params.delta / params.beta0;
    (ratio <= 1.0).then(|| -(0.5 * (1.0 + ratio)).ln() / params.gamma)
}

/// Coefficients of the linearization `z' = -(B + delta) z(t) + k B z(t-r)` at one equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedCoeffs {
    pub equilibrium: EquilibriumTag,
    /// `beta0 (k-1) / delta`; carried for both equilibria but only meaningful for `x2`.
    pub a: f64,
    pub b: f64,
    /// `delta + B`
    pub p: f64,
    /// `k B`
    pub q: f64,
}

pub fn reduced_coeffs(params: &Parameters, which: EquilibriumTag) -> Result<ReducedCoeffs> {
    let k = params.k();
    let a = params.a_ratio();
    let b = match which {
        EquilibriumTag::X1 => params.beta0,
        EquilibriumTag::X2 => {
            if a - 1.0 <= 0.0 {
                return Err(Error::NoPositiveEquilibrium { ratio: a });
            }
            params.beta0 * (params.n - (params.n - 1.0) * a) / (a * a)
        }
    };
    Ok(ReducedCoeffs {
        equilibrium: which,
        a,
        b,
        p: params.delta + b,
        q: k * b,
    })
}

/// `B = beta'(x*) x* + beta(x*)` evaluated directly from the Hill function.
///
/// This is the definition of `B`; [`reduced_coeffs`] uses the closed form in `A`.
pub fn linearization_slope(params: &Parameters, x_star: f64) -> f64 {
    if x_star == 0.0 {
        return params.beta0;
    }
    params.beta_prime(x_star) * x_star + params.beta(x_star)
}

/// Delay at which `B` at `x2` changes sign, `-(1/gamma) ln((1/2)((delta/beta0)(n/(n-1)) + 1))`.
/// Only defined for `n > 1`.
pub fn r_n(params: &Parameters) -> Option<f64> {
    if params.n <= 1.0 {
        return None;
    }
    let ratio = params.delta / params.beta0 * params.n / (params.n - 1.0);
    Some(-(0.5 * (ratio + 1.0)).ln() / params.gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// `n <= 1`: B > 0 unconditionally.
    I,
    /// `n > 1` and `(n/(n-1)) delta >= beta0`: B > 0 for every admissible delay.
    II,
    /// `n > 1` and `(n/(n-1)) delta < beta0`: B < 0 below `r_n`, B > 0 on `(r_n, r_max)`.
    III,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BSignRegion {
    pub region: Region,
    pub r_n: Option<f64>,
    pub r_max: Option<f64>,
}

pub fn b_sign_region(params: &Parameters) -> BSignRegion {
    let n = params.n;
    let region = if n <= 1.0 {
        Region::I
    } else if n / (n - 1.0) * params.delta >= params.beta0 {
        Region::II
    } else {
        Region::III
    };
    BSignRegion {
        region,
        r_n: r_n(params),
        r_max: r_max(params),
    }
}
