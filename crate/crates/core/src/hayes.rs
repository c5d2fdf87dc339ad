//! Stability classification of the scalar characteristic equation
//! `lambda + p = q exp(-lambda r)`.
//!
//! With `a = -p r` and `b = q r` the equation is `z = a + b exp(-z)` in the scaled
//! variable `z = lambda r`. All roots have negative real part iff `a < 1`, `a < -b`
//! and `-b < sqrt(theta^2 + a^2)` where `theta = T^{-1}(a)` and `T(y) = y cot y`.
//! [`classify`] evaluates these conditions split by the signs of `p` and `q`, in the
//! form that bounds the delay: case (a) `q < p < 0` needs
//! `arccos(p/q)/omega0 < r < 1/|p|`, case (b) `q < 0 < p` needs `p >= |q|` or
//! `r < arccos(p/q)/omega0`, case (c) `q > 0` needs `q < p`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use crate::charroots::char_fn;
use crate::error::{Error, Result};
use crate::model::{reduced_coeffs, EquilibriumTag, Parameters};
use num_complex::Complex64;

/// Default half-width of the band of margins reported as [`Status::Marginal`].
pub const DEFAULT_MARGINAL_BAND: f64 = 1e-9;

const T_INV_MAX_ITER: usize = 200;

/// `T(y) = y cot y` on `(0, pi)`, extended by `T(0) = 1`.
///
/// Strictly decreasing from 1 to `-inf`.
pub fn t_func(y: f64) -> Result<f64> {
    if !(0.0..PI).contains(&y) {
        return Err(Error::Domain(format!("T(y) requires 0 <= y < pi, got {y}")));
    }
    if y == 0.0 {
        return Ok(1.0);
    }
    Ok(y * y.cos() / y.sin())
}

fn t_unchecked(y: f64) -> f64 {
    if y == 0.0 {
        1.0
    } else {
        y * y.cos() / y.sin()
    }
}

/// Inverse of [`t_func`]: the unique `y` in `[0, pi)` with `y cot y = v`.
///
/// Bracketing bisection run until the bracket is two adjacent floats; the endpoint
/// with the smaller residual is returned. Near the pole at `pi` the upper end of the
/// bracket comes from `T(pi - e) ~ -pi/e`.
pub fn t_inv(v: f64) -> Result<f64> {
    if v.is_nan() || v > 1.0 {
        return Err(Error::Domain(format!("T^-1(v) requires v <= 1, got {v}")));
    }
    if v == 1.0 {
        return Ok(0.0);
    }
    let top = PI.next_down();
    let mut hi = if v >= 0.0 {
        FRAC_PI_2 + 0.1
    } else {
        (PI - PI / (4.0 * (1.0 - v))).min(top)
    };
    while t_unchecked(hi) >= v && hi < top {
        hi = (0.5 * (hi + PI)).min(top);
    }
    if t_unchecked(hi) >= v {
        // v lies below T of the largest representable y < pi.
        return Ok(hi);
    }
    let mut lo = 0.0_f64;
    for _ in 0..T_INV_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if t_unchecked(mid) > v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (t_unchecked(lo) - v).abs() <= (t_unchecked(hi) - v).abs() {
        Ok(lo)
    } else {
        Ok(hi)
    }
}

/// The solution in `(0, pi/r)` of `omega cot(omega r) = -p`, i.e. `T^{-1}(-p r) / r`.
///
/// Requires `p r >= -1`; at `p r = -1` the result degenerates to 0.
pub fn omega0(p: f64, r: f64) -> Result<f64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Domain(format!("omega0 requires r > 0, got {r}")));
    }
    let v = -p * r;
    if v > 1.0 {
        return Err(Error::Domain(format!("omega0 requires p r >= -1, got p r = {}", p * r)));
    }
    Ok(t_inv(v)? / r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Stable,
    Unstable,
    Marginal,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Stable => "Stable",
            Status::Unstable => "Unstable",
            Status::Marginal => "Marginal",
        })
    }
}

/// Which branch of the criterion decided the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseTag {
    /// `q < 0`, `p < 0`.
    PropA,
    /// `q < 0`, `p > 0`.
    PropB,
    /// `q > 0`.
    PropC,
    /// `q < 0`, `p = 0`: stable iff `-q r < pi/2`.
    PZeroRemark,
    /// `q = 0`: the only root is `-p`.
    QZeroDegenerate,
    /// Case (a) evaluated at `r |p| = 1`.
    BoundaryRAbsPdEq1,
    /// Marginal on the `arccos(p/q)/omega0` boundary: a pair `+-i omega0` on the axis.
    HopfBoundary,
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseTag::PropA => "PropA",
            CaseTag::PropB => "PropB",
            CaseTag::PropC => "PropC",
            CaseTag::PZeroRemark => "PZeroRemark",
            CaseTag::QZeroDegenerate => "QZeroDegenerate",
            CaseTag::BoundaryRAbsPdEq1 => "Boundary_rAbsPdEq1",
            CaseTag::HopfBoundary => "HopfBoundary",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict {
    pub status: Status,
    pub case_tag: CaseTag,
    /// Signed relative slack of the decisive inequality; positive means satisfied.
    pub margin: f64,
    pub omega0: Option<f64>,
}

/// Relative slack of `lhs < rhs`, in `[-2, 2]`.
fn slack(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (rhs - lhs) / scale
    }
}

/// Decides whether every root of `lambda + p = q exp(-lambda r)` has negative real part.
///
/// `margin` is the minimum relative slack over the inequalities of the applicable case
/// (the maximum, for the disjunction in case (b)); `|margin| <= marginal_band` is
/// reported as [`Status::Marginal`].
pub fn classify(p: f64, q: f64, r: f64, marginal_band: f64) -> Result<StabilityVerdict> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Domain(format!("classify requires r > 0, got {r}")));
    }
    if !(p.is_finite() && q.is_finite()) {
        return Err(Error::Domain(format!(
            "classify requires finite p, q, got p = {p}, q = {q}"
        )));
    }
    if marginal_band.is_nan() || marginal_band < 0.0 {
        return Err(Error::Domain(format!(
            "marginal band must be nonnegative, got {marginal_band}"
        )));
    }

    let (case_tag, margin, omega0) = if q == 0.0 {
        (CaseTag::QZeroDegenerate, slack(0.0, p), None)
    } else if q > 0.0 {
        (CaseTag::PropC, slack(q, p), None)
    } else if p == 0.0 {
        let w0 = FRAC_PI_2 / r;
        (CaseTag::PZeroRemark, slack(-q * r, FRAC_PI_2), Some(w0))
    } else if p < 0.0 {
        let order = slack(q, p);
        let delay = slack(-p * r, 1.0);
        let y = if -p * r < 1.0 { t_inv(-p * r)? } else { 0.0 };
        let mut margin = order.min(delay);
        let mut tag = CaseTag::PropA;
        if q < p {
            let crossing = slack((p / q).acos(), y);
            if crossing < margin {
                margin = crossing;
                if crossing.abs() <= marginal_band {
                    tag = CaseTag::HopfBoundary;
                }
            }
        }
        if (1.0 + p * r).abs() <= marginal_band {
            tag = CaseTag::BoundaryRAbsPdEq1;
        }
        (tag, margin, (y > 0.0).then_some(y / r))
    } else {
        let y = t_inv(-p * r)?;
        let dominant = slack(-q, p);
        let mut tag = CaseTag::PropB;
        let margin = if p <= -q {
            let crossing = slack(y, (p / q).acos());
            if crossing > dominant && crossing.abs() <= marginal_band {
                tag = CaseTag::HopfBoundary;
            }
            dominant.max(crossing)
        } else {
            dominant
        };
        (tag, margin, Some(y / r))
    };

    let status = if margin.abs() <= marginal_band {
        Status::Marginal
    } else if margin > 0.0 {
        Status::Stable
    } else {
        Status::Unstable
    };
    Ok(StabilityVerdict {
        status,
        case_tag,
        margin,
        omega0,
    })
}

/// A purely imaginary root `i omega_star` of the characteristic equation at delay `r_star`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfBoundaryPoint {
    pub r_star: f64,
    pub omega_star: f64,
    /// `|lambda + p - q exp(-lambda r_star)|` at `lambda = i omega_star`.
    pub residual: f64,
}

/// Delay at which `lambda = i sqrt(q^2 - p^2)` solves the characteristic equation.
///
/// For `q < 0` the principal branch gives `omega_star r_star = arccos(p/q)` in `(0, pi)`.
/// For `q > 0` the first crossing has `omega_star r_star = 2 pi - arccos(p/q)`.
pub fn hopf_boundary_r(p: f64, q: f64) -> Option<HopfBoundaryPoint> {
    if p.is_nan() || q.is_nan() || q.abs() <= p.abs() {
        return None;
    }
    let omega_star = ((q - p) * (q + p)).sqrt();
    let principal = (p / q).acos();
    let phase = if q < 0.0 { principal } else { 2.0 * PI - principal };
    let r_star = phase / omega_star;
    let residual = char_fn(p, q, r_star, Complex64::new(0.0, omega_star)).norm();
    Some(HopfBoundaryPoint {
        r_star,
        omega_star,
        residual,
    })
}

/// Correct stability bound `arccos(p/q) / omega0(p, r)`; `omega0` depends on `r`.
pub fn crossing_bound(p: f64, q: f64, r: f64) -> Option<f64> {
    if q == 0.0 || (p / q).abs() > 1.0 {
        return None;
    }
    let w0 = omega0(p, r).ok()?;
    (w0 > 0.0).then(|| (p / q).acos() / w0)
}

/// `arccos(p/q) / sqrt(q^2 - p^2)`, the bound used by earlier analyses of this model in
/// place of [`crossing_bound`]. Only kept for discrepancy reports.
pub fn legacy_boundary(p: f64, q: f64) -> Option<f64> {
    if !(q < 0.0 && q.abs() > p.abs()) {
        return None;
    }
    Some((p / q).acos() / ((q - p) * (q + p)).sqrt())
}

/// `g(r) = T^{-1}(-(delta + B(r)) r) - arccos((delta + B(r)) / (k(r) B(r)))` at `x2`,
/// with `k` and `B` recomputed at `r`. Its zeros are the stability switches of `x2`.
pub fn g_of_r(params: &Parameters, r: f64) -> Result<f64> {
    let at = params.with_r(r)?;
    if r <= 0.0 {
        return Err(Error::Domain("g(r) requires r > 0".into()));
    }
    let c = reduced_coeffs(&at, EquilibriumTag::X2)?;
    let v = -c.p * r;
    if v > 1.0 {
        return Err(Error::Domain(format!(
            "g(r): -(delta + B) r = {v} exceeds 1 at r = {r}"
        )));
    }
    let ratio = c.p / c.q;
    if c.q == 0.0 || !(-1.0..=1.0).contains(&ratio) {
        return Err(Error::Domain(format!(
            "g(r): (delta + B)/(k B) = {ratio} outside [-1, 1] at r = {r}"
        )));
    }
    Ok(t_inv(v)? - ratio.acos())
}

const SWITCH_SCAN_POINTS: usize = 512;
const SWITCH_TOL: f64 = 1e-11;

fn bisect_g(params: &Parameters, mut lo: f64, mut g_lo: f64, mut hi: f64) -> Option<f64> {
    while hi - lo > SWITCH_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = g_of_r(params, mid).ok()?;
        if g_mid == 0.0 {
            return Some(mid);
        }
        if (g_mid > 0.0) == (g_lo > 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// `g` also vanishes where `delta + B` changes sign, since both terms equal `pi/2`
/// there. Such zeros separate case (a) from case (b) without a change of verdict.
fn is_verdict_change(params: &Parameters, r: f64) -> bool {
    let eps = 1e-7 * (1.0 + r);
    let status = |r: f64| -> Option<Status> {
        let at = params.with_r(r).ok()?;
        let c = reduced_coeffs(&at, EquilibriumTag::X2).ok()?;
        classify(c.p, c.q, r, DEFAULT_MARGINAL_BAND).ok().map(|v| v.status)
    };
    match (status(r - eps), status(r + eps)) {
        (Some(a), Some(b)) => a != b,
        _ => true,
    }
}

/// Every zero of [`g_of_r`] in `[r_lo, r_hi]` at which the verdict for `x2` changes,
/// found by scanning and bisecting each bracketed sign change. Brackets across points
/// where `g` is undefined are skipped.
pub fn stability_switches(params: &Parameters, r_lo: f64, r_hi: f64) -> Vec<f64> {
    let mut found = Vec::new();
    if !(r_lo > 0.0 && r_hi > r_lo) {
        return found;
    }
    let step = (r_hi - r_lo) / SWITCH_SCAN_POINTS as f64;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=SWITCH_SCAN_POINTS {
        let r = if i == SWITCH_SCAN_POINTS {
            r_hi
        } else {
            r_lo + step * i as f64
        };
        let g = g_of_r(params, r).ok();
        if let (Some((r_prev, g_prev)), Some(g)) = (prev, g) {
            if g_prev == 0.0 {
                found.push(r_prev);
            } else if (g > 0.0) != (g_prev > 0.0) && g != 0.0 {
                if let Some(root) = bisect_g(params, r_prev, g_prev, r) {
                    found.push(root);
                }
            }
        }
        prev = g.map(|g| (r, g));
    }
    if let Some((r, g)) = prev {
        if g == 0.0 {
            found.push(r);
        }
    }
    found.retain(|&r| is_verdict_change(params, r));
    found
}

/// First zero of `g` scanned from `r_lo`, located to `1e-10` in `r`.
///
/// `g` is continuous but not known to be monotone, so only the first bracketed sign
/// change is returned.
pub fn find_stability_switch(params: &Parameters, r_lo: f64, r_hi: f64) -> Option<f64> {
    stability_switches(params, r_lo, r_hi).into_iter().next()
}
