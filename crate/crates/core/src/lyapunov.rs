//! Lyapunov functional for the zero equilibrium on the critical set
//! `k beta0 = delta + beta0`:
//!
//! `V(phi) = G(phi(0)) + k beta0 int_{-r}^0 phi(s)^2 / (1 + phi(s)^n)^2 ds`,
//! with `G(u) = int_0^u 2 s / (1 + s^n) ds`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dde_sim::{integrate, History, ResolvedHistory, SampledHistory, Trajectory};
use crate::error::{Error, Result};
use crate::model::Parameters;
use crate::quadrature::{integrate_adaptive, simpson};

const G_REL_TOL: f64 = 1e-12;
const MIN_PANELS: usize = 64;
const V_TOL: f64 = 1e-10;
const CRITICAL_TOL: f64 = 1e-12;
/// Largest accepted per-step increase of `V` along a trajectory.
pub const DRIFT_TOL: f64 = 1e-10;

/// `G(u) = int_0^u 2 s / (1 + s^n) ds`; closed forms for `n = 1, 2`.
pub fn g_func(u: f64, n: f64) -> Result<f64> {
    if !(u >= 0.0 && u.is_finite()) {
        return Err(Error::Domain(format!("G(u) requires finite u >= 0, got {u}")));
    }
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Domain(format!("G(u) requires n > 0, got {n}")));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    if n == 1.0 {
        return Ok(2.0 * (u - u.ln_1p()));
    }
    if n == 2.0 {
        return Ok((u * u).ln_1p());
    }
    Ok(integrate_adaptive(|s| 2.0 * s / (1.0 + s.powf(n)), 0.0, u, G_REL_TOL))
}

fn hill_sq(x: f64, n: f64) -> f64 {
    let a = x / (1.0 + x.powf(n));
    a * a
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovValue {
    pub v: f64,
    /// `G(phi(0))`.
    pub g_part: f64,
    /// `k beta0` times the delay integral.
    pub integral_part: f64,
}

impl LyapunovValue {
    fn new(g_part: f64, integral_part: f64) -> Self {
        Self {
            v: g_part + integral_part,
            g_part,
            integral_part,
        }
    }
}

/// `V` of an initial function; the integral by composite Simpson from 64 panels,
/// doubled until successive values agree to `1e-10`.
pub fn v_func(params: &Parameters, phi: &History) -> Result<LyapunovValue> {
    let phi = phi.resolve(params)?;
    if let Some((s, value)) = phi.first_negative() {
        return Err(Error::NegativeHistory { s, value });
    }
    let g_part = g_func(phi.eval(0.0), params.n)?;
    let kb = params.k() * params.beta0;
    let integrand = |s: f64| hill_sq(phi.eval(s), params.n);
    let r = params.r;
    let mut panels = MIN_PANELS;
    let mut prev = simpson(integrand, -r, 0.0, panels);
    loop {
        panels *= 2;
        let next = simpson(integrand, -r, 0.0, panels);
        if (next - prev).abs() <= V_TOL * prev.abs().max(1.0) || panels >= 1 << 20 {
            return Ok(LyapunovValue::new(g_part, kb * next));
        }
        prev = next;
    }
}

/// Exact `dV/dt` at a state with current value `phi0` and delayed value `phi_r`:
/// `-2 beta0 a^2 - 2 delta phi0^2/(1 + phi0^n) + 2 k beta0 a b + k beta0 (a^2 - b^2)`
/// with `a = phi0/(1 + phi0^n)`, `b = phi_r/(1 + phi_r^n)`.
pub fn analytic_vdot(params: &Parameters, phi0: f64, phi_r: f64) -> f64 {
    let n = params.n;
    let kb = params.k() * params.beta0;
    let a = phi0 / (1.0 + phi0.powf(n));
    let b = phi_r / (1.0 + phi_r.powf(n));
    -2.0 * params.beta0 * a * a - 2.0 * params.delta * phi0 * a + 2.0 * kb * a * b + kb * (a * a - b * b)
}

/// `2 (k beta0 - beta0 - delta) a^2`, the bound on [`analytic_vdot`] obtained from
/// `2ab <= a^2 + b^2` and `1 + phi0^n >= 1`. Zero on the critical set.
pub fn vdot_upper_bound(params: &Parameters, phi0: f64) -> f64 {
    let kb = params.k() * params.beta0;
    2.0 * (kb - params.beta0 - params.delta) * hill_sq(phi0, params.n)
}

/// Simpson panels per step so that a delay window holds at least 64 panels.
fn panels_per_step(traj: &Trajectory) -> usize {
    let per = MIN_PANELS.div_ceil(traj.steps_per_delay).max(2);
    per + per % 2
}

/// `int_a^b w(x(s)) ds` over the dense output, split at step boundaries.
fn window_integral(traj: &Trajectory, a: f64, b: f64) -> f64 {
    let n = traj.params.n;
    let h = traj.step;
    let panels = panels_per_step(traj);
    let w = |s: f64| hill_sq(traj.eval(s), n);
    // step boundaries strictly inside (a, b)
    let first = (a / h).floor() as i64 + 1;
    let last = (b / h).ceil() as i64 - 1;
    let mut cuts = vec![a];
    cuts.extend((first..=last).map(|j| j as f64 * h).filter(|&c| c > a && c < b));
    cuts.push(b);
    cuts.windows(2)
        .filter(|c| c[1] - c[0] > 1e-12 * h)
        .map(|c| simpson(w, c[0], c[1], panels))
        .sum()
}

/// `V(x_t)` for `t` in `[0, t_end]`.
pub fn v_at(traj: &Trajectory, t: f64) -> Result<LyapunovValue> {
    if !(0.0..=traj.t_end()).contains(&t) {
        return Err(Error::Domain(format!(
            "V(x_t) needs 0 <= t <= {}, got {t}",
            traj.t_end()
        )));
    }
    let kb = traj.params.k() * traj.params.beta0;
    let g_part = g_func(traj.eval(t).max(0.0), traj.params.n)?;
    Ok(LyapunovValue::new(
        g_part,
        kb * window_integral(traj, t - traj.params.r, t),
    ))
}

/// `V(x_{t_i})` at every node, from per-step integrals summed over each delay window.
pub fn v_series(traj: &Trajectory) -> Result<Vec<LyapunovValue>> {
    let h = traj.step;
    let m = traj.steps_per_delay;
    let n = traj.params.n;
    let kb = traj.params.k() * traj.params.beta0;
    let panels = panels_per_step(traj);
    // piece j covers [(j - m) h, (j - m + 1) h]
    let pieces = m + traj.len() - 1;
    let piece: Vec<f64> = (0..pieces)
        .map(|j| {
            let lo = (j as f64 - m as f64) * h;
            if j < m {
                let hist = &traj.history;
                simpson(|s| hill_sq(hist.eval(s), n), lo, lo + h, panels)
            } else {
                simpson(|s| hill_sq(traj.eval(s), n), lo, lo + h, panels)
            }
        })
        .collect();
    let mut out = Vec::with_capacity(traj.len());
    for i in 0..traj.len() {
        // window [t_i - r, t_i] is pieces i .. i + m; summed afresh so rounding
        // does not accumulate along the run
        let window: f64 = piece[i..i + m].iter().sum();
        let g_part = g_func(traj.values[i].max(0.0), n)?;
        out.push(LyapunovValue::new(g_part, kb * window));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VdotCheck {
    pub analytic: f64,
    /// `(V(x_{t+h}) - V(x_t)) / h` with `h` the trajectory step.
    pub forward_difference: f64,
}

/// `dV/dt` at `x_t`, analytically and by a forward difference of `V`.
pub fn vdot_along(params: &Parameters, traj: &Trajectory, t: f64) -> Result<VdotCheck> {
    let h = traj.step;
    if !(t >= 0.0 && t + h <= traj.t_end() * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!(
            "dV/dt at t = {t} needs the trajectory on [t - r, t + h] with h = {h}; it ends at {}",
            traj.t_end()
        )));
    }
    let analytic = analytic_vdot(params, traj.eval(t), traj.eval(t - params.r));
    let now = v_at(traj, t)?;
    let later = v_at(traj, (t + h).min(traj.t_end()))?;
    Ok(VdotCheck {
        analytic,
        forward_difference: (later.v - now.v) / h,
    })
}

/// Delay that puts the parameters on the critical set: `ln(2 beta0/(delta + beta0)) / gamma`.
pub fn critical_delay(params: &Parameters) -> Option<f64> {
    let r = (2.0 * params.beta0 / (params.delta + params.beta0)).ln() / params.gamma;
    (r > 0.0).then_some(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawOutcome {
    pub history: SampledHistory,
    /// Largest `V(x_{t_{i+1}}) - V(x_{t_i})`.
    pub max_drift: f64,
    pub v_initial: f64,
    pub max_state: f64,
    /// `G(x(t)) <= G(s) + k beta0 r s^2` with `s = |phi|_0`.
    pub state_bound_holds: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalReport {
    pub draws: Vec<DrawOutcome>,
    pub steps_per_delay: usize,
    pub t_end: f64,
}

impl CriticalReport {
    pub fn passed(&self) -> bool {
        self.draws.iter().all(|d| d.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &DrawOutcome> {
        self.draws.iter().filter(|d| !d.passed)
    }
}

const CRITICAL_STEPS_PER_DELAY: usize = 200;
const HISTORY_NODES: usize = 9;

/// Integrates `draws` random nonnegative histories with `|phi|_0 <= 1` to `40 r` and
/// checks that `V` never increases by more than [`DRIFT_TOL`] per step.
///
/// Refuses parameters off the critical set by more than `1e-12`.
pub fn verify_critical_stability(params: &Parameters, draws: usize, seed: u64) -> Result<CriticalReport> {
    let defect = params.k() * params.beta0 - (params.delta + params.beta0);
    if defect.abs() > CRITICAL_TOL {
        return Err(Error::Domain(format!(
            "parameters are off the critical set: k beta0 - (delta + beta0) = {defect:e}"
        )));
    }
    let r = params.r;
    let h = r / CRITICAL_STEPS_PER_DELAY as f64;
    let t_end = 40.0 * r;
    let outcomes = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let scale: f64 = rng.gen_range(0.0..=1.0);
            let values = (0..HISTORY_NODES).map(|_| scale * rng.gen::<f64>()).collect();
            let history = SampledHistory::uniform(r, values)?;
            check_draw(params, history, t_end, h)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CriticalReport {
        draws: outcomes,
        steps_per_delay: CRITICAL_STEPS_PER_DELAY,
        t_end,
    })
}

fn check_draw(params: &Parameters, history: SampledHistory, t_end: f64, h: f64) -> Result<DrawOutcome> {
    let traj = integrate(params, &History::Sampled(history.clone()), t_end, h)?;
    let series = v_series(&traj)?;
    let max_drift = series
        .windows(2)
        .map(|w| w[1].v - w[0].v)
        .fold(f64::NEG_INFINITY, f64::max);
    let s = ResolvedHistory::Sampled(history.clone()).sup_norm();
    let max_state = traj.values.iter().cloned().fold(0.0, f64::max);
    let cap = g_func(s, params.n)? + params.k() * params.beta0 * params.r * s * s;
    let state_bound_holds = g_func(max_state, params.n)? <= cap * (1.0 + 1e-12);
    let passed = traj.failure.is_none() && max_drift <= DRIFT_TOL && state_bound_holds;
    Ok(DrawOutcome {
        history,
        max_drift,
        v_initial: series[0].v,
        max_state,
        state_bound_holds,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn critical() -> Parameters {
        let mut p = Parameters::new(1.0, 2.0, 0.5, 0.1, 1.0).unwrap();
        p.r = critical_delay(&p).unwrap();
        p
    }

    #[test]
    fn g_closed_forms() {
        assert_eq!(g_func(0.0, 3.0).unwrap(), 0.0);
        assert_abs_diff_eq!(g_func(1.0, 1.0).unwrap(), 2.0 * (1.0 - 2f64.ln()), epsilon = 1e-15);
        assert_abs_diff_eq!(g_func(1.0, 2.0).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert!(g_func(-0.1, 2.0).is_err());
    }

    #[test]
    fn g_quadrature_against_frozen_values() {
        // 30-digit reference integrals
        let cases = [
            (1.5, 3.0, 1.169_939_335_752_743_5),
            (2.0, 0.5, 1.902_596_067_742_461_6),
            (0.7, 1.5, 0.372_636_666_969_302_4),
            (3.0, 4.0, 1.460_139_105_621_001),
        ];
        for (u, n, want) in cases {
            assert_abs_diff_eq!(g_func(u, n).unwrap(), want, epsilon = 1e-12 * want);
        }
    }

    #[test]
    fn v_of_constants() {
        let p = critical();
        assert_eq!(v_func(&p, &History::Constant(0.0)).unwrap().v, 0.0);
        let c = 0.8;
        let v = v_func(&p, &History::Constant(c)).unwrap();
        let expected = g_func(c, 2.0).unwrap() + p.k() * p.beta0 * p.r * hill_sq(c, 2.0);
        assert_abs_diff_eq!(v.v, expected, epsilon = 1e-12);
        assert_eq!(v.v, v.g_part + v.integral_part);
    }

    #[test]
    fn vdot_on_critical_set_is_nonpositive() {
        let p = critical();
        assert_eq!(analytic_vdot(&p, 0.0, 0.0), 0.0);
        assert!(analytic_vdot(&p, 0.4, 0.4) <= 1e-12);
        assert!(analytic_vdot(&p, 0.1, 0.9) <= 1e-12);
    }

    #[test]
    fn vdot_off_critical_set() {
        // k beta0 > delta + beta0: constant states can make V grow
        let p = Parameters::new(1.0, 2.0, 0.1, 0.1, 1.0).unwrap();
        let c = 0.5;
        let a = c / (1.0 + c * c);
        let exact = 2.0 * (p.k() * p.beta0 - p.beta0) * a * a - 2.0 * p.delta * c * a;
        assert_abs_diff_eq!(analytic_vdot(&p, c, c), exact, epsilon = 1e-15);
        assert!(exact > 0.0);
        assert!(exact <= vdot_upper_bound(&p, c));
    }

    #[test]
    fn vdot_two_ways_agree() {
        let p = critical();
        let hist = SampledHistory::uniform(p.r, vec![0.3, 0.6, 0.2, 0.5, 0.4]).unwrap();
        let traj = integrate(&p, &History::Sampled(hist), 3.0 * p.r, p.r / 400.0).unwrap();
        for t in [1.1 * p.r, 2.3 * p.r] {
            let c = vdot_along(&p, &traj, t).unwrap();
            assert!(c.analytic <= 1e-12);
            assert_abs_diff_eq!(
                c.analytic,
                c.forward_difference,
                epsilon = 5e-3 * (1.0 + c.analytic.abs())
            );
        }
        assert!(vdot_along(&p, &traj, traj.t_end()).is_err());
    }

    #[test]
    fn series_matches_direct_evaluation() {
        let p = critical();
        let hist = SampledHistory::uniform(p.r, vec![0.3, 0.6, 0.2]).unwrap();
        let traj = integrate(&p, &History::Sampled(hist.clone()), 2.0 * p.r, p.r / 40.0).unwrap();
        let series = v_series(&traj).unwrap();
        for i in [0, 17, 40, 80] {
            let direct = v_at(&traj, traj.time(i)).unwrap();
            assert_abs_diff_eq!(series[i].v, direct.v, epsilon = 1e-12);
        }
        // two Simpson panels per step here, against the converged value
        let v0 = v_func(&p, &History::Sampled(hist)).unwrap();
        assert_abs_diff_eq!(series[0].v, v0.v, epsilon = 1e-7);
    }

    #[test]
    fn critical_suite_small() {
        let report = verify_critical_stability(&critical(), 4, 7).unwrap();
        assert!(report.passed(), "{:?}", report.failures().collect::<Vec<_>>());
    }

    #[test]
    fn zero_history_keeps_v_zero() {
        let p = critical();
        let traj = integrate(&p, &History::Constant(0.0), 5.0 * p.r, p.r / 50.0).unwrap();
        assert!(v_series(&traj).unwrap().iter().all(|v| v.v == 0.0));
    }

    #[test]
    fn off_critical_refused() {
        let p = Parameters::new(1.0, 2.0, 0.5, 0.1, 1.0).unwrap();
        assert!(verify_critical_stability(&p, 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn am_gm_step(x in 0.0f64..5.0, y in 0.0f64..5.0, n in 0.5f64..6.0) {
            let a = x / (1.0 + x.powf(n));
            let b = y / (1.0 + y.powf(n));
            prop_assert!(2.0 * a * b <= a * a + b * b + 1e-15);
        }

        #[test]
        fn v_dominates_g(values in prop::collection::vec(0.0f64..1.0, 2..10)) {
            let p = critical();
            let hist = SampledHistory::uniform(p.r, values).unwrap();
            let phi0 = hist.eval(0.0);
            let v = v_func(&p, &History::Sampled(hist)).unwrap();
            prop_assert!(v.v >= g_func(phi0, p.n).unwrap());
            prop_assert!(v.integral_part >= 0.0);
        }
    }
}
