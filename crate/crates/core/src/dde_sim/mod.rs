//! Method-of-steps integration of the delay equation, with runtime certificates.
//!
//! The step `h` divides the delay exactly, so every delayed argument lands on a node
//! or an interval midpoint of earlier output. On `[0, r]` the delayed value comes from
//! the history itself; afterwards from cubic Hermite dense output.

mod history;

use std::io::Write;

pub use history::{History, ResolvedHistory, SampledHistory};

use crate::error::{Error, Result};
use crate::model::{equilibria, Equilibria, EquilibriumTag, Parameters};
use history::hermite;

/// Values above this magnitude are treated as blow-up.
const OVERFLOW: f64 = 1e150;
const ALIGN_TOL: f64 = 1e-9;
const POSITIVITY_TOL: f64 = -1e-12;
const POSITIVITY_SAMPLES_PER_STEP: usize = 10;
const BOUND_TOL: f64 = 1e-9;

/// Right-hand side of the equation.
///
/// Inputs are used as given; negative arguments are not clamped.
pub fn step_rhs(params: &Parameters, x_now: f64, x_delayed: f64) -> f64 {
    let loss = params.beta0 / (1.0 + x_now.powf(params.n)) + params.delta;
    let gain = params.k() * params.beta0 * x_delayed / (1.0 + x_delayed.powf(params.n));
    -loss * x_now + gain
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositivityCertificate {
    pub min_value: f64,
    pub at_time: f64,
    pub passed: bool,
}

/// Check of `x(t)^2 <= phi(0)^2 exp(-eta t) + k beta0 / (epsilon eta)` at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundednessCertificate {
    pub epsilon: f64,
    /// `2 delta - epsilon k beta0`.
    pub eta: f64,
    pub phi0_sq: f64,
    /// `k beta0 / (epsilon eta)`.
    pub plateau: f64,
    /// Largest `(x^2 - bound) / (1 + bound)` over the nodes.
    pub max_violation: f64,
    pub at_time: f64,
    pub passed: bool,
    /// The estimate uses `y^2 / (1 + y^n) <= 1` for the delayed state. True for
    /// `n >= 2`; otherwise checked on the values actually visited.
    pub hypothesis_holds: bool,
}

impl BoundednessCertificate {
    pub fn bound(&self, t: f64) -> f64 {
        self.phi0_sq * (-self.eta * t).exp() + self.plateau
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: Parameters,
    pub history: ResolvedHistory,
    pub step: f64,
    /// `r / step`.
    pub steps_per_delay: usize,
    pub values: Vec<f64>,
    /// `x'` at each node (right derivative at `t = 0`).
    pub derivs: Vec<f64>,
    /// Set when the run stopped early on a non-finite or overflowing value.
    pub failure: Option<String>,
    /// `None` when the history is negative somewhere.
    pub positivity: Option<PositivityCertificate>,
    pub boundedness: Option<BoundednessCertificate>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, node: usize) -> f64 {
        node as f64 * self.step
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.values.len() - 1)
    }

    /// Dense output; the history for `t < 0`.
    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return self.history.eval(t);
        }
        let last = self.values.len() - 1;
        let pos = t / self.step;
        let i = (pos.floor() as usize).min(last.saturating_sub(1));
        if last == 0 {
            return self.values[0];
        }
        let theta = (pos - i as f64).clamp(0.0, 1.0);
        self.interval(i, theta)
    }

    fn interval(&self, i: usize, theta: f64) -> f64 {
        hermite(
            theta,
            self.step,
            self.values[i],
            self.values[i + 1],
            self.derivs[i],
            self.derivs[i + 1],
        )
    }

    /// Writes `t,x` at node resolution, or resampled every `dt` when given.
    pub fn write_csv<W: Write>(&self, out: W, dt: Option<f64>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Domain(format!("writing trajectory: {e}"));
        w.write_record(["t", "x"]).map_err(io)?;
        let mut row = |t: f64, x: f64| w.write_record([format!("{t:.16e}"), format!("{x:.16e}")]);
        match dt {
            Some(dt) if dt > 0.0 => {
                let t_end = self.t_end();
                let count = (t_end / dt + 1e-9).floor() as usize;
                for j in 0..=count {
                    let t = (j as f64 * dt).min(t_end);
                    row(t, self.eval(t)).map_err(io)?;
                }
            }
            Some(dt) => return Err(Error::Domain(format!("resampling step must be positive, got {dt}"))),
            None => {
                for (i, x) in self.values.iter().enumerate() {
                    row(self.time(i), *x).map_err(io)?;
                }
            }
        }
        w.flush()
            .map_err(|e| Error::Domain(format!("writing trajectory: {e}")))?;
        Ok(())
    }
}

/// Number of steps per delay for step `h`, or the misalignment error with the nearest
/// admissible step.
pub fn steps_per_delay(r: f64, h: f64) -> Result<usize> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidParameter {
            name: "h",
            value: h,
            reason: "step must be positive and finite",
        });
    }
    let ratio = r / h;
    let m = ratio.round().max(1.0);
    if (ratio - m).abs() > ALIGN_TOL * m {
        return Err(Error::MisalignedStep { h, r, suggested: r / m });
    }
    Ok(m as usize)
}

/// Integrates from `history` up to `t_end` (rounded up to a whole step) with classical
/// RK4 at step `r / m`.
pub fn integrate(params: &Parameters, history: &History, t_end: f64, h: f64) -> Result<Trajectory> {
    params.validate()?;
    let r = params.r;
    if r <= 0.0 {
        return Err(Error::Domain("simulation requires a positive delay".into()));
    }
    if !(t_end.is_finite() && t_end >= r) {
        return Err(Error::Domain(format!(
            "t_end = {t_end} must be at least the delay r = {r}"
        )));
    }
    let m = steps_per_delay(r, h)?;
    let h = r / m as f64;
    let history = history.resolve(params)?;
    let total = ((t_end / h) * (1.0 - 1e-12)).ceil() as usize;

    let mut values = Vec::with_capacity(total + 1);
    let mut derivs = Vec::with_capacity(total + 1);
    let x0 = history.eval(0.0);
    values.push(x0);

    let mut failure = None;
    // delayed value at node i + theta
    let delayed = |values: &[f64], derivs: &[f64], i: usize, theta: f64| -> f64 {
        if i < m {
            history.eval((i as f64 + theta - m as f64) * h)
        } else {
            let j = i - m;
            if theta == 0.0 {
                values[j]
            } else if theta == 1.0 {
                values[j + 1]
            } else {
                hermite(theta, h, values[j], values[j + 1], derivs[j], derivs[j + 1])
            }
        }
    };
    derivs.push(step_rhs(params, x0, delayed(&values, &derivs, 0, 0.0)));

    for i in 0..total {
        let x = values[i];
        let d0 = delayed(&values, &derivs, i, 0.0);
        let dm = delayed(&values, &derivs, i, 0.5);
        let d1 = delayed(&values, &derivs, i, 1.0);
        let k1 = step_rhs(params, x, d0);
        let k2 = step_rhs(params, x + 0.5 * h * k1, dm);
        let k3 = step_rhs(params, x + 0.5 * h * k2, dm);
        let k4 = step_rhs(params, x + h * k3, d1);
        let next = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let slope = step_rhs(params, next, d1);
        if !(next.is_finite() && slope.is_finite()) || next.abs() > OVERFLOW {
            failure = Some(format!("non-finite or overflowing state at t = {}", (i + 1) as f64 * h));
            break;
        }
        values.push(next);
        derivs.push(slope);
    }

    let mut traj = Trajectory {
        params: *params,
        history,
        step: h,
        steps_per_delay: m,
        values,
        derivs,
        failure,
        positivity: None,
        boundedness: None,
    };
    traj.positivity = certify_positivity(&traj).ok();
    traj.boundedness = certify_boundedness(&traj, default_epsilon(params)).ok();
    Ok(traj)
}

/// `delta / (k beta0)`, giving `eta = delta`.
pub fn default_epsilon(params: &Parameters) -> f64 {
    params.delta / (params.k() * params.beta0)
}

/// Minimum of the dense output sampled ten times per step.
///
/// Refuses trajectories whose history is negative somewhere.
pub fn certify_positivity(traj: &Trajectory) -> Result<PositivityCertificate> {
    if let Some((s, value)) = traj.history.first_negative() {
        return Err(Error::NegativeHistory { s, value });
    }
    let mut min_value = f64::INFINITY;
    let mut at_time = 0.0;
    let mut visit = |t: f64, x: f64| {
        if x < min_value {
            min_value = x;
            at_time = t;
        }
    };
    for i in 0..traj.len().saturating_sub(1) {
        for j in 0..POSITIVITY_SAMPLES_PER_STEP {
            let theta = j as f64 / POSITIVITY_SAMPLES_PER_STEP as f64;
            visit((i as f64 + theta) * traj.step, traj.interval(i, theta));
        }
    }
    if let Some(&last) = traj.values.last() {
        visit(traj.t_end(), last);
    }
    Ok(PositivityCertificate {
        min_value,
        at_time,
        passed: min_value >= POSITIVITY_TOL,
    })
}

/// Checks the squared-state bound at every node for `0 < epsilon < 2 delta/(k beta0)`.
pub fn certify_boundedness(traj: &Trajectory, epsilon: f64) -> Result<BoundednessCertificate> {
    let params = &traj.params;
    let kb = params.k() * params.beta0;
    let eta = 2.0 * params.delta - epsilon * kb;
    if !(epsilon > 0.0 && eta > 0.0) {
        return Err(Error::Domain(format!(
            "epsilon = {epsilon} must lie in (0, 2 delta/(k beta0)) = (0, {})",
            2.0 * params.delta / kb
        )));
    }
    let phi0 = traj.history.eval(0.0);
    let mut cert = BoundednessCertificate {
        epsilon,
        eta,
        phi0_sq: phi0 * phi0,
        plateau: kb / (epsilon * eta),
        max_violation: f64::NEG_INFINITY,
        at_time: 0.0,
        passed: true,
        hypothesis_holds: true,
    };
    for (i, x) in traj.values.iter().enumerate() {
        let t = traj.time(i);
        let bound = cert.bound(t);
        let violation = (x * x - bound) / (1.0 + bound);
        if violation > cert.max_violation {
            cert.max_violation = violation;
            cert.at_time = t;
        }
    }
    cert.passed = cert.max_violation <= BOUND_TOL;
    if params.n < 2.0 {
        let ratio = |y: f64| y * y / (1.0 + y.abs().powf(params.n));
        let history_peak = traj.history.sup_norm();
        cert.hypothesis_holds = ratio(history_peak) <= 1.0 && traj.values.iter().all(|&y| ratio(y) <= 1.0);
    }
    Ok(cert)
}

#[derive(Debug, Clone, PartialEq)]
pub enum AsymptoticVerdict {
    ConvergedTo { which: EquilibriumTag, final_gap: f64 },
    SustainedOscillation { amplitude: f64, period: f64 },
    GrowingOrUndecided,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticReport {
    pub verdict: AsymptoticVerdict,
    pub transient_cut: f64,
}

/// Defaults: trailing window `t_end/2`, tolerance `1e-6 (1 + x2)`.
pub fn classify_asymptotics_default(traj: &Trajectory) -> AsymptoticReport {
    let eq = equilibria(&traj.params);
    let tol = 1e-6 * (1.0 + eq.x2.unwrap_or(0.0));
    classify_asymptotics(traj, &eq, 0.5 * traj.t_end(), tol)
}

/// Classifies the trailing `window` of the run.
///
/// Converged when every node of the window lies within `tol` of an equilibrium.
/// Sustained oscillation when the half range exceeds `10 tol` and successive maxima
/// differ by less than 5% of the half range; the period is the mean peak spacing.
pub fn classify_asymptotics(traj: &Trajectory, eq: &Equilibria, window: f64, tol: f64) -> AsymptoticReport {
    let t_end = traj.t_end();
    let transient_cut = (t_end - window).max(0.0);
    let start = ((transient_cut / traj.step).ceil() as usize).min(traj.len() - 1);
    let tail = &traj.values[start..];

    let mut best: Option<(EquilibriumTag, f64)> = None;
    for which in [EquilibriumTag::X1, EquilibriumTag::X2] {
        let Some(x_star) = eq.get(which) else { continue };
        let worst = tail.iter().fold(0.0_f64, |m, x| m.max((x - x_star).abs()));
        if worst <= tol && best.is_none_or(|(_, w)| worst < w) {
            best = Some((which, worst));
        }
    }
    if let Some((which, _)) = best {
        let x_star = eq.get(which).expect("present");
        let final_gap = (tail[tail.len() - 1] - x_star).abs();
        return AsymptoticReport {
            verdict: AsymptoticVerdict::ConvergedTo { which, final_gap },
            transient_cut,
        };
    }

    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let amplitude = 0.5 * (hi - lo);
    let peaks = local_maxima(&traj.values, start, traj.step);
    let verdict = if amplitude > 10.0 * tol && peaks.len() >= 3 {
        let steady = peaks.windows(2).all(|w| (w[1].1 - w[0].1).abs() < 0.05 * amplitude);
        if steady {
            let period = (peaks[peaks.len() - 1].0 - peaks[0].0) / (peaks.len() - 1) as f64;
            AsymptoticVerdict::SustainedOscillation { amplitude, period }
        } else {
            AsymptoticVerdict::GrowingOrUndecided
        }
    } else {
        AsymptoticVerdict::GrowingOrUndecided
    };
    AsymptoticReport { verdict, transient_cut }
}

/// Interior local maxima of `values[start..]` as `(time, value)`, refined by a parabola
/// through the three nodes around each.
fn local_maxima(values: &[f64], start: usize, h: f64) -> Vec<(f64, f64)> {
    let mut peaks = Vec::new();
    for i in (start + 1)..values.len().saturating_sub(1) {
        let (a, b, c) = (values[i - 1], values[i], values[i + 1]);
        if b > a && b >= c {
            let curvature = a - 2.0 * b + c;
            let shift = if curvature < 0.0 {
                0.5 * (a - c) / curvature
            } else {
                0.0
            };
            let peak = b - 0.25 * (a - c) * shift;
            peaks.push(((i as f64 + shift) * h, peak));
        }
    }
    peaks
}

/// Exponential rate of `|x - x_star|` over `[t0, t1]`, by least squares on the log of
/// the deviation's peaks (or of every node when fewer than three peaks occur).
pub fn deviation_rate(traj: &Trajectory, x_star: f64, t0: f64, t1: f64) -> Option<f64> {
    let i0 = (t0 / traj.step).ceil() as usize;
    let i1 = ((t1 / traj.step).floor() as usize).min(traj.len().checked_sub(1)?);
    if i1 <= i0 + 2 {
        return None;
    }
    let dev: Vec<f64> = traj.values[..=i1].iter().map(|x| (x - x_star).abs()).collect();
    let peaks: Vec<(f64, f64)> = local_maxima(&dev, i0, traj.step)
        .into_iter()
        .filter(|&(_, v)| v > 0.0)
        .collect();
    let points: Vec<(f64, f64)> = if peaks.len() >= 3 {
        peaks.iter().map(|&(t, v)| (t, v.ln())).collect()
    } else {
        (i0..=i1)
            .filter(|&i| dev[i] > 0.0)
            .map(|i| (traj.time(i), dev[i].ln()))
            .collect()
    };
    least_squares_slope(&points)
}

fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (mt, my) = points.iter().fold((0.0, 0.0), |(a, b), &(t, y)| (a + t / n, b + y / n));
    let (sty, stt) = points.iter().fold((0.0, 0.0), |(a, b), &(t, y)| {
        (a + (t - mt) * (y - my), b + (t - mt) * (t - mt))
    });
    (stt > 0.0).then(|| sty / stt)
}
