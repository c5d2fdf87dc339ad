use crate::error::{Error, Result};
use crate::model::{equilibria, EquilibriumTag, Parameters};

/// Initial function on `[-r, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub enum History {
    Constant(f64),
    /// Constant `x* + amplitude` around the chosen equilibrium.
    PerturbedEquilibrium {
        which: EquilibriumTag,
        amplitude: f64,
    },
    Sampled(SampledHistory),
}

impl History {
    /// Resolves the equilibrium reference (if any) against concrete parameters.
    pub fn resolve(&self, params: &Parameters) -> Result<ResolvedHistory> {
        match self {
            History::Constant(level) => Ok(ResolvedHistory::Constant(*level)),
            History::PerturbedEquilibrium { which, amplitude } => {
                let eq = equilibria(params);
                let base = eq.get(*which).ok_or(Error::NoPositiveEquilibrium {
                    ratio: params.a_ratio(),
                })?;
                Ok(ResolvedHistory::Constant(base + amplitude))
            }
            History::Sampled(s) => {
                let (first, last) = (s.times[0], *s.times.last().expect("nonempty"));
                let slack = 1e-9 * (1.0 + params.r);
                if first > -params.r + slack || last < -slack {
                    return Err(Error::Domain(format!(
                        "sampled history covers [{first}, {last}] but must cover [-{}, 0]",
                        params.r
                    )));
                }
                Ok(ResolvedHistory::Sampled(s.clone()))
            }
        }
    }
}

/// A history with its equilibrium reference resolved to a number.
#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedHistory {
    Constant(f64),
    Sampled(SampledHistory),
}

impl ResolvedHistory {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            ResolvedHistory::Constant(c) => *c,
            ResolvedHistory::Sampled(h) => h.eval(s),
        }
    }

    /// First point where the history is negative, if any.
    pub fn first_negative(&self) -> Option<(f64, f64)> {
        match self {
            ResolvedHistory::Constant(c) => (*c < 0.0).then_some((0.0, *c)),
            ResolvedHistory::Sampled(h) => h
                .times
                .iter()
                .zip(&h.values)
                .find(|(_, v)| **v < 0.0)
                .map(|(t, v)| (*t, *v)),
        }
    }

    /// Supremum norm on `[-r, 0]`.
    pub fn sup_norm(&self) -> f64 {
        match self {
            ResolvedHistory::Constant(c) => c.abs(),
            // PCHIP does not overshoot the data
            ResolvedHistory::Sampled(h) => h.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        }
    }
}

/// Samples joined by a monotone piecewise-cubic (Fritsch-Carlson) interpolant, so
/// nonnegative data gives a nonnegative function.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledHistory {
    times: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl SampledHistory {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Parse(format!(
                "{} sample times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::Parse("a sampled history needs at least two samples".into()));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::Parse("sampled history contains non-finite numbers".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parse("sample times must be strictly increasing".into()));
        }
        let slopes = pchip_slopes(&times, &values);
        Ok(Self { times, values, slopes })
    }

    /// Equally spaced samples on `[-r, 0]`.
    pub fn uniform(r: f64, values: Vec<f64>) -> Result<Self> {
        let m = values.len().saturating_sub(1).max(1);
        let times = (0..values.len())
            .map(|i| if i == m { 0.0 } else { -r + r * i as f64 / m as f64 })
            .collect();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Interpolated value; constant extrapolation outside the sampled range.
    pub fn eval(&self, s: f64) -> f64 {
        let n = self.times.len();
        if s <= self.times[0] {
            return self.values[0];
        }
        if s >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let i = self.times.partition_point(|&t| t <= s) - 1;
        let h = self.times[i + 1] - self.times[i];
        hermite(
            (s - self.times[i]) / h,
            h,
            self.values[i],
            self.values[i + 1],
            self.slopes[i],
            self.slopes[i + 1],
        )
    }
}

/// Cubic Hermite interpolant on an interval of width `h` at fraction `theta`.
pub(crate) fn hermite(theta: f64, h: f64, y0: f64, y1: f64, d0: f64, d1: f64) -> f64 {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    d[0] = pchip_end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = pchip_end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn pchip_end(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > (3.0 * del0).abs() {
        3.0 * del0
    } else {
        d
    }
}
