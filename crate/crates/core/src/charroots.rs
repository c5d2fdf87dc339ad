//! Characteristic roots of `lambda + p = q exp(-lambda r)`, computed without using the
//! closed-form criterion in [`crate::hayes`].
//!
//! Roots with positive real part are counted by the argument principle on a rectangle
//! that provably contains them all; individual roots are refined by complex Newton.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::hayes;

/// Left edge of the counting rectangle; keeps imaginary-axis roots out of the count.
pub const AXIS_OFFSET: f64 = 1e-9;
const MIN_SAMPLES: usize = 4096;
const MAX_SAMPLES: usize = 1 << 20;
const ON_CONTOUR_MODULUS: f64 = 1e-8;
const DILATION: f64 = 1e-6;
const MAX_DILATIONS: usize = 5;
/// Largest argument increment between consecutive contour samples; longer steps are bisected.
const MAX_ARG_STEP: f64 = 1.0;

const NEWTON_MAX_ITER: usize = 100;
const ROOT_RESIDUAL: f64 = 1e-10;
const DEDUP_TOL: f64 = 1e-7;

/// `lambda + p - q exp(-lambda r)`.
pub fn char_fn(p: f64, q: f64, r: f64, lambda: Complex64) -> Complex64 {
    lambda + p - q * (-lambda * r).exp()
}

fn char_fn_derivative(q: f64, r: f64, lambda: Complex64) -> Complex64 {
    1.0 + q * r * (-lambda * r).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contour {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Contour {
    /// `[AXIS_OFFSET, M] x [-M, M]` with `M = |p| + |q| + 1`. Any root with
    /// `Re >= 0` has `|lambda| <= |p| + |q|`.
    pub fn right_half_plane(p: f64, q: f64) -> Self {
        let m = p.abs() + q.abs() + 1.0;
        Self {
            re_min: AXIS_OFFSET,
            re_max: m,
            im_min: -m,
            im_max: m,
        }
    }

    fn dilated(&self, by: f64) -> Self {
        Self {
            re_min: self.re_min + by,
            re_max: self.re_max + by,
            im_min: self.im_min - by,
            im_max: self.im_max + by,
        }
    }

    /// Point at parameter `s` in `[0, 4)` walking the boundary counterclockwise.
    fn point(&self, edge: usize, t: f64) -> Complex64 {
        let (a, b) = (self.re_min, self.re_max);
        let (c, d) = (self.im_min, self.im_max);
        match edge {
            0 => Complex64::new(a + (b - a) * t, c),
            1 => Complex64::new(b, c + (d - c) * t),
            2 => Complex64::new(b - (b - a) * t, d),
            _ => Complex64::new(a, d - (d - c) * t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhpRootCount {
    /// Zeros inside the contour, with multiplicity.
    pub count: usize,
    pub contour: Contour,
    pub samples_per_edge: usize,
    /// Distance of the raw winding number from the nearest integer.
    pub winding_residual: f64,
    /// Smallest `|char_fn|` seen on the contour.
    pub min_modulus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CountError {
    #[error("a characteristic root sits on the imaginary axis (min |f| = {min_modulus:e} on the contour after {attempts} dilations)")]
    MarginalAtAxis { min_modulus: f64, attempts: usize },
    #[error("winding number did not resolve at {samples} samples per edge (residual {residual})")]
    Unresolved { samples: usize, residual: f64 },
}

struct Winding {
    raw: f64,
    evaluations: usize,
    min_modulus: f64,
}

const MAX_BISECTION_DEPTH: u32 = 48;

/// Argument increment of `f` between `t0` and `t1` on one edge, bisecting until each
/// piece turns by at most [`MAX_ARG_STEP`].
#[allow(clippy::too_many_arguments)]
fn edge_increment(
    f: &dyn Fn(usize, f64) -> Complex64,
    edge: usize,
    t0: f64,
    f0: Complex64,
    t1: f64,
    f1: Complex64,
    depth: u32,
    acc: &mut Winding,
) -> f64 {
    let step = (f1 / f0).arg();
    if step.abs() <= MAX_ARG_STEP || depth >= MAX_BISECTION_DEPTH {
        return step;
    }
    let tm = 0.5 * (t0 + t1);
    let fm = f(edge, tm);
    acc.evaluations += 1;
    acc.min_modulus = acc.min_modulus.min(fm.norm());
    edge_increment(f, edge, t0, f0, tm, fm, depth + 1, acc) + edge_increment(f, edge, tm, fm, t1, f1, depth + 1, acc)
}

fn winding(p: f64, q: f64, r: f64, contour: &Contour, samples: usize) -> Winding {
    let f = |edge: usize, t: f64| char_fn(p, q, r, contour.point(edge, t));
    let mut acc = Winding {
        raw: 0.0,
        evaluations: 0,
        min_modulus: f64::INFINITY,
    };
    let mut total = 0.0;
    for edge in 0..4 {
        let mut t_prev = 0.0;
        let mut prev = f(edge, 0.0);
        acc.min_modulus = acc.min_modulus.min(prev.norm());
        for i in 1..=samples {
            let t = i as f64 / samples as f64;
            let cur = f(edge, t);
            acc.evaluations += 1;
            acc.min_modulus = acc.min_modulus.min(cur.norm());
            total += edge_increment(&f, edge, t_prev, prev, t, cur, 0, &mut acc);
            t_prev = t;
            prev = cur;
        }
    }
    acc.raw = total / (2.0 * PI);
    acc
}

/// Winding number of `char_fn` around an explicit contour at a fixed sample count.
pub fn winding_number(p: f64, q: f64, r: f64, contour: &Contour, samples_per_edge: usize) -> f64 {
    winding(p, q, r, contour, samples_per_edge).raw
}

/// Number of characteristic roots with `Re lambda > AXIS_OFFSET`.
///
/// When a root lies within `1e-8` (in `|f|`) of the contour, the contour is shifted
/// right/outward by `1e-6` and retried, at most five times.
pub fn count_rhp_roots(p: f64, q: f64, r: f64) -> Result<RhpRootCount, CountError> {
    let base = Contour::right_half_plane(p, q);
    let mut last_min = 0.0;
    for attempt in 0..=MAX_DILATIONS {
        let contour = base.dilated(DILATION * attempt as f64);
        let mut samples = MIN_SAMPLES;
        loop {
            let w = winding(p, q, r, &contour, samples);
            if w.min_modulus <= ON_CONTOUR_MODULUS {
                last_min = w.min_modulus;
                break;
            }
            let nearest = w.raw.round();
            let residual = (w.raw - nearest).abs();
            if residual <= 0.25 {
                return Ok(RhpRootCount {
                    count: nearest.max(0.0) as usize,
                    contour,
                    samples_per_edge: samples,
                    winding_residual: residual,
                    min_modulus: w.min_modulus,
                });
            }
            samples *= 2;
            if samples > MAX_SAMPLES {
                return Err(CountError::Unresolved {
                    samples: samples / 2,
                    residual,
                });
            }
        }
    }
    Err(CountError::MarginalAtAxis {
        min_modulus: last_min,
        attempts: MAX_DILATIONS,
    })
}

/// Real roots of the characteristic function in `(re_min, re_max)` of a contour,
/// found by sign changes on a fine grid. The real function is convex or concave, so
/// there are at most two.
pub fn real_roots_in(p: f64, q: f64, r: f64, contour: &Contour) -> usize {
    const GRID: usize = 20_000;
    let f = |x: f64| x + p - q * (-x * r).exp();
    let (a, b) = (contour.re_min, contour.re_max);
    let mut roots = 0;
    let mut prev = f(a);
    for i in 1..=GRID {
        let x = a + (b - a) * i as f64 / GRID as f64;
        let fx = f(x);
        if (fx > 0.0) != (prev > 0.0) {
            roots += 1;
        }
        prev = fx;
    }
    roots
}

impl RhpRootCount {
    /// Non-real roots come in conjugate pairs.
    pub fn parity_consistent(&self, p: f64, q: f64, r: f64) -> bool {
        let real = real_roots_in(p, q, r, &self.contour);
        self.count >= real && (self.count - real).is_multiple_of(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharRoot {
    pub mu: f64,
    pub omega: f64,
    pub residual: f64,
}

impl CharRoot {
    pub fn lambda(&self) -> Complex64 {
        Complex64::new(self.mu, self.omega)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum RootError {
    #[error("Newton did not converge in {NEWTON_MAX_ITER} iterations (last iterate {last}, residual {residual:e})")]
    NotConverged { last: Complex64, residual: f64 },
    #[error("derivative vanished at {last}")]
    FlatDerivative { last: Complex64 },
}

/// Newton iteration on the characteristic function from `seed`.
pub fn refine_root(p: f64, q: f64, r: f64, seed: Complex64) -> Result<CharRoot, RootError> {
    let mut z = seed;
    for _ in 0..NEWTON_MAX_ITER {
        let f = char_fn(p, q, r, z);
        if !(f.re.is_finite() && f.im.is_finite()) {
            break;
        }
        let d = char_fn_derivative(q, r, z);
        if d.norm() < 1e-14 {
            if f.norm() <= ROOT_RESIDUAL {
                break;
            }
            return Err(RootError::FlatDerivative { last: z });
        }
        let step = f / d;
        z -= step;
        if step.norm() <= 4.0 * f64::EPSILON * (1.0 + z.norm()) {
            break;
        }
    }
    let residual = char_fn(p, q, r, z).norm();
    if residual <= ROOT_RESIDUAL {
        Ok(CharRoot {
            mu: z.re,
            omega: z.im,
            residual,
        })
    } else {
        Err(RootError::NotConverged { last: z, residual })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RightmostRoot {
    pub root: CharRoot,
    pub rhp_count: Result<RhpRootCount, CountError>,
    /// `Re > 0` of the root agrees with `count > 0`.
    pub validated: bool,
}

const SEED_GRID: usize = 20;

/// Root of maximal real part among Newton limits from a grid of seeds over
/// `[-2S, S+1] x [0, max(S+1, pi/r)]` (`S = |p| + |q|`) plus `0`, `-p` and `i omega0`.
///
/// The result is cross-checked against [`count_rhp_roots`].
pub fn rightmost_root(p: f64, q: f64, r: f64) -> Option<RightmostRoot> {
    let s = p.abs() + q.abs();
    let (re_lo, re_hi) = (-2.0 * s - 1.0, s + 1.0);
    let im_hi = (s + 1.0).max(PI / r);
    let mut seeds = vec![Complex64::new(0.0, 0.0), Complex64::new(-p, 0.0)];
    if let Ok(w0) = hayes::omega0(p, r) {
        seeds.push(Complex64::new(0.0, w0));
    }
    for i in 0..SEED_GRID {
        for j in 0..SEED_GRID {
            let re = re_lo + (re_hi - re_lo) * i as f64 / (SEED_GRID - 1) as f64;
            let im = im_hi * j as f64 / (SEED_GRID - 1) as f64;
            seeds.push(Complex64::new(re, im));
        }
    }

    let mut roots: Vec<CharRoot> = Vec::new();
    for seed in seeds {
        let Ok(mut root) = refine_root(p, q, r, seed) else {
            continue;
        };
        if root.omega < 0.0 {
            root.omega = -root.omega;
        }
        if roots
            .iter()
            .all(|known| (known.lambda() - root.lambda()).norm() > DEDUP_TOL)
        {
            roots.push(root);
        }
    }
    let best = roots.into_iter().max_by(|a, b| a.mu.total_cmp(&b.mu))?;

    let rhp_count = count_rhp_roots(p, q, r);
    let validated = match &rhp_count {
        Ok(c) => (best.mu > AXIS_OFFSET) == (c.count > 0),
        Err(CountError::MarginalAtAxis { .. }) => best.mu.abs() < 1e-6,
        Err(_) => false,
    };
    Some(RightmostRoot {
        root: best,
        rhp_count,
        validated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn char_fn_anchors() {
        assert_eq!(char_fn(1.3, 1.3, 2.0, Complex64::new(0.0, 0.0)).norm(), 0.0);
        assert_eq!(char_fn(0.7, 0.0, 2.0, Complex64::new(-0.7, 0.0)).norm(), 0.0);
        let r_star = std::f64::consts::PI / (3.0 * 3f64.sqrt());
        let v = char_fn(-1.0, -2.0, r_star, Complex64::new(0.0, 3f64.sqrt()));
        assert!(v.norm() <= 1e-10);
    }

    #[test]
    fn counts_for_q_zero() {
        assert_eq!(count_rhp_roots(1.0, 0.0, 1.0).unwrap().count, 0);
        assert_eq!(count_rhp_roots(-1.0, 0.0, 1.0).unwrap().count, 1);
    }

    #[test]
    fn case_c_count_matches_dense_winding() {
        let c = count_rhp_roots(2.0, 1.0, 5.0).unwrap();
        assert_eq!(c.count, 0);
        // Independent dense evaluation at 2^16 samples per edge.
        let dense = winding_number(2.0, 1.0, 5.0, &Contour::right_half_plane(2.0, 1.0), 1 << 16);
        assert_abs_diff_eq!(dense, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn unstable_pair_counted_twice() {
        // p = -1, q = -2 past its Hopf delay: one conjugate pair in the right half plane
        let c = count_rhp_roots(-1.0, -2.0, 0.8).unwrap();
        assert_eq!(c.count, 2);
        assert!(c.parity_consistent(-1.0, -2.0, 0.8));
        assert_eq!(count_rhp_roots(-1.0, -2.0, 0.3).unwrap().count, 0);
    }

    #[test]
    fn root_on_axis_is_excluded() {
        // lambda = 0 is a root when p = q; the count must not include it
        let c = count_rhp_roots(1.5, 1.5, 0.7).unwrap();
        assert_eq!(c.count, 0);
        assert!(c.contour.re_min > AXIS_OFFSET);
    }

    #[test]
    fn newton_examples() {
        let z = refine_root(1.3, 1.3, 2.0, Complex64::new(0.0, 0.0)).unwrap();
        assert_eq!((z.mu, z.omega), (0.0, 0.0));
        let lin = refine_root(0.7, 0.0, 2.0, Complex64::new(-0.7, 0.0)).unwrap();
        assert_eq!(lin.mu, -0.7);
        let r_star = std::f64::consts::PI / (3.0 * 3f64.sqrt());
        let h = refine_root(-1.0, -2.0, r_star, Complex64::new(0.01, 1.7)).unwrap();
        assert_abs_diff_eq!(h.mu, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(h.omega, 3f64.sqrt(), epsilon = 1e-8);
    }

    #[test]
    fn newton_split_system() {
        let root = refine_root(-1.0, -2.0, 0.8, Complex64::new(-0.1, 1.5)).unwrap();
        let (mu, w, r) = (root.mu, root.omega, 0.8);
        // mu + p = q e^{-mu r} cos(w r),  w = -q e^{-mu r} sin(w r)
        assert_abs_diff_eq!(mu - 1.0, -2.0 * (-mu * r).exp() * (w * r).cos(), epsilon = 1e-10);
        assert_abs_diff_eq!(w, 2.0 * (-mu * r).exp() * (w * r).sin(), epsilon = 1e-10);
        let conj = char_fn(-1.0, -2.0, 0.8, root.lambda().conj());
        assert!(conj.norm() <= 1e-10);
    }

    #[test]
    fn rightmost_examples() {
        let zero = rightmost_root(1.5, 1.5, 0.7).unwrap();
        assert_abs_diff_eq!(zero.root.mu, 0.0, epsilon = 1e-12);
        assert!(zero.validated);

        let stable = rightmost_root(2.0, 1.0, 5.0).unwrap();
        assert!(stable.root.mu < 0.0);
        assert!(stable.validated);

        let r_star = std::f64::consts::PI / (3.0 * 3f64.sqrt());
        let hopf = rightmost_root(-1.0, -2.0, r_star).unwrap();
        assert_abs_diff_eq!(hopf.root.mu, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(hopf.root.omega, 3f64.sqrt(), epsilon = 1e-8);
    }
}
