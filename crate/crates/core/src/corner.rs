//! Corner exponents: the root of `sin(λα) + λ sin α = 0` with smallest
//! positive real part, certified by argument-principle root counts, and the
//! admissible weight window derived from it.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerExponent {
    pub alpha: f64,
    pub lambda_star: Complex64,
    pub residual: f64,
    /// An argument-principle count found no root with smaller positive real part.
    pub certified: bool,
    /// Roots (with conjugates) sharing the minimal real part.
    pub multiplicity: usize,
}

/// Closed rectangle `[re_min, re_max] × [im_min, im_max]` in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rect {
    pub fn new(re: (f64, f64), im: (f64, f64)) -> Self {
        Self { re_min: re.0, re_max: re.1, im_min: im.0, im_max: im.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentSolver {
    /// Left margin of the search strip; also the width of the multiplicity window.
    pub delta: f64,
    /// Initial real extent of the scan; doubled until a root is found.
    pub re_extent: f64,
    /// Lower bound for the imaginary extent of the scan.
    pub im_extent: f64,
    pub newton_budget: usize,
    pub residual_tol: f64,
}

impl Default for ExponentSolver {
    fn default() -> Self {
        Self { delta: 0.05, re_extent: 4.0, im_extent: 6.0, newton_budget: 60, residual_tol: 1e-12 }
    }
}

fn f(alpha: f64, l: Complex64) -> Complex64 {
    (l * alpha).sin() + l * alpha.sin()
}

fn df(alpha: f64, l: Complex64) -> Complex64 {
    (l * alpha).cos() * alpha + alpha.sin()
}

/// Winding number of `sin(λα) + λ sin α` around `rect`, i.e. the number of roots inside.
pub fn count_roots_in_rectangle(alpha: f64, rect: Rect) -> Result<usize> {
    let c = [
        Complex64::new(rect.re_min, rect.im_min),
        Complex64::new(rect.re_max, rect.im_min),
        Complex64::new(rect.re_max, rect.im_max),
        Complex64::new(rect.re_min, rect.im_max),
    ];
    let mut total = 0.0;
    let mut min_abs = f64::INFINITY;
    for k in 0..4 {
        let (a, b) = (c[k], c[(k + 1) % 4]);
        // uniform pre-sampling so that no oscillation hides between the two endpoints
        let pieces = 16;
        for i in 0..pieces {
            let z0 = a + (b - a) * (i as f64 / pieces as f64);
            let z1 = a + (b - a) * ((i + 1) as f64 / pieces as f64);
            total += track(alpha, z0, z1, f(alpha, z0), f(alpha, z1), 0, &mut min_abs)?;
        }
    }
    let w = total / (2.0 * PI);
    let n = w.round();
    if (w - n).abs() > 0.1 || n < 0.0 {
        return Err(Error::BoundaryRoot { min_abs });
    }
    Ok(n as usize)
}

fn boundary_threshold(z: Complex64) -> f64 {
    1e-13 * (1.0 + z.norm())
}

fn track(alpha: f64, z0: Complex64, z1: Complex64, f0: Complex64, f1: Complex64, depth: usize, min_abs: &mut f64) -> Result<f64> {
    for (z, v) in [(z0, f0), (z1, f1)] {
        let m = v.norm();
        *min_abs = min_abs.min(m);
        if m < boundary_threshold(z) {
            return Err(Error::BoundaryRoot { min_abs: m });
        }
    }
    let whole = (f1 / f0).arg();
    let zm = (z0 + z1) * 0.5;
    let fm = f(alpha, zm);
    let halves = (fm / f0).arg() + (f1 / fm).arg();
    if whole.abs() < PI / 8.0 && (halves - whole).abs() < 1e-9 {
        return Ok(whole);
    }
    if depth >= 60 {
        return Err(Error::BoundaryRoot { min_abs: *min_abs });
    }
    Ok(track(alpha, z0, zm, f0, fm, depth + 1, min_abs)? + track(alpha, zm, z1, fm, f1, depth + 1, min_abs)?)
}

impl ExponentSolver {
    /// Imaginary extent beyond which no root with `|Re λ| <= x` exists:
    /// `|sin(λα)| >= sinh(α |Im λ|)` dominates `|λ sin α|` there.
    fn im_bound(&self, alpha: f64, x: f64) -> f64 {
        let mut y = self.im_extent;
        while (alpha * y).sinh() <= 2.0 * (x + y) * alpha.sin().abs() + 1.0 {
            y *= 1.25;
        }
        y
    }

    /// Roots with `0 < Re λ <= re_hi`, `im_lo <= Im λ <= im_hi` (`im_lo < 0 < im_hi`).
    ///
    /// The rectangle starts at `Re = -delta` so the trivial root at 0 lies strictly
    /// inside; it is removed from the count. Roots are symmetric under `λ → -λ`, so
    /// anything else in the left sliver mirrors a root in `(0, delta)` and is counted
    /// as such.
    fn count_strip(&self, alpha: f64, re_hi: f64, im_lo: f64, im_hi: f64) -> Result<usize> {
        let n = self.count_perturbed(alpha, Rect::new((-self.delta, re_hi), (im_lo, im_hi)))?;
        if n == 0 {
            return Err(Error::CertificationFailed { alpha, reason: "trivial root at 0 not counted".into() });
        }
        Ok(n - 1)
    }

    fn count_perturbed(&self, alpha: f64, r: Rect) -> Result<usize> {
        // nudge the right edge when a root sits on the boundary
        let mut last = None;
        for k in 0..6 {
            let shift = k as f64 * 1.3e-7;
            match count_roots_in_rectangle(alpha, Rect { re_max: r.re_max + shift, ..r }) {
                Ok(n) => return Ok(n),
                Err(e @ Error::BoundaryRoot { .. }) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap())
    }

    pub fn solve(&self, alpha: f64) -> Result<CornerExponent> {
        if !(alpha > 0.0 && alpha <= 2.0 * PI * (1.0 + 1e-15)) {
            return Err(Error::InvalidInput(format!("opening {alpha} outside (0, 2π]")));
        }
        // scan: grow the real extent until the strip holds a root
        let mut x = self.re_extent + 0.0123;
        let y = loop {
            let y = self.im_bound(alpha, x);
            if self.count_strip(alpha, x, -y, y)? > 0 {
                break y;
            }
            x *= 2.0;
            if x > 1e6 {
                return Err(Error::NotConverged { alpha });
            }
        };
        // bisect the real extent to the strip of the leftmost roots
        let (mut lo, mut hi) = (0.0, x);
        while hi - lo > 1e-3 {
            let mid = lo + 0.4921 * (hi - lo);
            if self.count_strip(alpha, mid, -y, y)? > 0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // roots come in conjugate pairs: isolate one with Im >= 0
        let eta = 1e-3;
        let (mut ilo, mut ihi) = (-eta, y);
        let lo_r = lo.max(self.delta * 0.5);
        while ihi - ilo > 1e-3 {
            let mid = ilo + 0.4921 * (ihi - ilo);
            if self.count_perturbed(alpha, Rect::new((lo_r, hi), (ilo, mid)))? > 0 {
                ihi = mid;
            } else {
                ilo = mid;
            }
        }
        let start = Complex64::new(0.5 * (lo + hi), 0.5 * (ilo + ihi).max(0.0));
        let mut l = self.newton(alpha, start)?;
        if l.im.abs() < 1e-9 {
            // real roots: remove rounding noise in the imaginary part
            let lr = self.newton(alpha, Complex64::new(l.re, 0.0))?;
            if lr.im == 0.0 {
                l = lr;
            }
        }
        if l.im < 0.0 {
            l = l.conj();
        }
        let residual = f(alpha, l).norm();
        if residual > self.residual_tol {
            return Err(Error::NotConverged { alpha });
        }
        if !(l.re > 0.0) || (l.re - 0.5 * (lo + hi)).abs() > 1e-2 {
            return Err(Error::CertificationFailed { alpha, reason: format!("Newton left the isolating box: {l}") });
        }
        let y = y.max(self.im_bound(alpha, l.re + self.delta));
        let below = if l.re - 1e-8 > 0.0 { self.count_strip(alpha, l.re - 1e-8, -y, y)? } else { 0 };
        if below != 0 {
            return Err(Error::CertificationFailed { alpha, reason: format!("{below} roots with smaller real part") });
        }
        let multiplicity = self.count_strip(alpha, l.re + 1e-6, -y, y)?;
        let expected = if l.im == 0.0 { 1 } else { 2 };
        if multiplicity < expected {
            return Err(Error::CertificationFailed { alpha, reason: format!("count {multiplicity} below {expected}") });
        }
        Ok(CornerExponent { alpha, lambda_star: l, residual, certified: true, multiplicity })
    }

    fn newton(&self, alpha: f64, mut l: Complex64) -> Result<Complex64> {
        for _ in 0..self.newton_budget {
            let step = f(alpha, l) / df(alpha, l);
            if !step.re.is_finite() || !step.im.is_finite() {
                break;
            }
            l -= step;
            if step.norm() <= 1e-15 * (1.0 + l.norm()) {
                // one extra step to settle at machine precision
                let s = f(alpha, l) / df(alpha, l);
                if s.norm().is_finite() {
                    l -= s;
                }
                return Ok(l);
            }
        }
        Err(Error::NotConverged { alpha })
    }
}

/// [`ExponentSolver::solve`] with default settings.
pub fn solve_corner_exponent(alpha: f64) -> Result<CornerExponent> {
    ExponentSolver::default().solve(alpha)
}

/// Open interval of admissible weights at a corner; 0 is always excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightWindow {
    pub alpha: f64,
    pub lower: f64,
    pub upper: f64,
    pub empty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowVerdict {
    Inside,
    Outside,
    ExcludedZero,
}

impl WeightWindow {
    pub fn from_exponent(e: &CornerExponent) -> Self {
        let a = e.alpha;
        let lower = (1.0 - e.lambda_star.re).max(-PI / a);
        let upper = 1.0f64.min(PI / a);
        Self { alpha: a, lower, upper, empty: lower >= upper }
    }

    pub fn verdict(&self, beta: f64) -> WindowVerdict {
        if beta == 0.0 {
            WindowVerdict::ExcludedZero
        } else if !self.empty && beta > self.lower && beta < self.upper {
            WindowVerdict::Inside
        } else {
            WindowVerdict::Outside
        }
    }

    pub fn contains(&self, beta: f64) -> bool {
        self.verdict(beta) == WindowVerdict::Inside
    }

    /// Window midpoint, nudged off 0 when the window straddles it.
    pub fn midpoint(&self) -> f64 {
        let m = 0.5 * (self.lower + self.upper);
        if m == 0.0 {
            0.25 * self.upper
        } else {
            m
        }
    }

    /// Midpoint of the window's positive part. Discrete velocities vanish only
    /// linearly at a corner vertex, so their `V_β^2` norm is finite only for `β > 0`.
    pub fn positive_midpoint(&self) -> f64 {
        0.5 * (self.lower.max(0.0) + self.upper)
    }
}

pub fn admissible_weight_window(alpha: f64) -> Result<WeightWindow> {
    Ok(WeightWindow::from_exponent(&solve_corner_exponent(alpha)?))
}

/// CSV table `alpha,re_lambda,im_lambda,residual,window_lower,window_upper,empty`.
pub fn exponent_table_csv(alphas: &[f64]) -> Result<String> {
    let mut s = String::from("alpha,re_lambda,im_lambda,residual,window_lower,window_upper,empty\n");
    for &a in alphas {
        let e = solve_corner_exponent(a)?;
        let w = WeightWindow::from_exponent(&e);
        let _ = writeln!(
            s,
            "{:?},{:?},{:?},{:e},{:?},{:?},{}",
            a, e.lambda_star.re, e.lambda_star.im, e.residual, w.lower, w.upper, w.empty
        );
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Real root of sin(1.5πλ) = λ in (0.5, 0.6) by plain bisection.
    fn reentrant_oracle() -> f64 {
        let h = |l: f64| (1.5 * PI * l).sin() - l;
        let (mut a, mut b) = (0.5, 0.6);
        assert!(h(a) * h(b) < 0.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if h(a) * h(m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn straight_and_slit_openings() {
        let e = solve_corner_exponent(PI).unwrap();
        assert!((e.lambda_star - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        assert!(e.residual <= 1e-12 && e.certified);
        let e = solve_corner_exponent(2.0 * PI).unwrap();
        assert!((e.lambda_star - Complex64::new(0.5, 0.0)).norm() < 1e-10);
        assert!(e.residual <= 1e-12);
    }

    #[test]
    fn reentrant_matches_bisection() {
        let oracle = reentrant_oracle();
        assert!((oracle - 0.5445).abs() < 1e-4);
        let e = solve_corner_exponent(1.5 * PI).unwrap();
        assert!((e.lambda_star.re - oracle).abs() < 1e-10);
        assert_eq!(e.lambda_star.im, 0.0);
    }

    #[test]
    fn right_angle_is_complex_with_real_part_above_one() {
        let e = solve_corner_exponent(PI / 2.0).unwrap();
        assert!(e.lambda_star.re > 1.0);
        assert!(e.lambda_star.im >= 0.0);
        assert_eq!(e.multiplicity, if e.lambda_star.im == 0.0 { 1 } else { 2 });
    }

    #[test]
    fn small_opening_asymptotics() {
        let a = 0.05;
        let e = solve_corner_exponent(a).unwrap();
        let approx = Complex64::new(4.2124, 2.2507) / a;
        assert!((e.lambda_star - approx).norm() / approx.norm() < 1e-2);
    }

    #[test]
    fn rectangle_counts() {
        assert_eq!(count_roots_in_rectangle(PI, Rect::new((0.5, 1.5), (-0.5, 0.5))).unwrap(), 1);
        assert_eq!(count_roots_in_rectangle(PI, Rect::new((0.1, 0.4), (-0.1, 0.1))).unwrap(), 0);
        assert_eq!(count_roots_in_rectangle(1.5 * PI, Rect::new((0.4, 0.7), (-0.2, 0.2))).unwrap(), 1);
        assert!(matches!(
            count_roots_in_rectangle(PI, Rect::new((1.0, 2.0), (-0.5, 0.5))),
            Err(Error::BoundaryRoot { .. })
        ));
    }

    #[test]
    fn windows() {
        let w = admissible_weight_window(PI).unwrap();
        assert!(w.lower.abs() < 1e-10 && w.upper == 1.0 && !w.empty);
        assert_eq!(w.verdict(0.0), WindowVerdict::ExcludedZero);
        let w = admissible_weight_window(2.0 * PI).unwrap();
        assert!(w.empty);
        let w = admissible_weight_window(PI / 2.0).unwrap();
        assert!(w.lower < 0.0 && w.upper == 1.0);
        // reentrant corner: upper end is π/α = 2/3
        let w = admissible_weight_window(1.5 * PI).unwrap();
        assert!((w.upper - 2.0 / 3.0).abs() < 1e-15);
        assert!(w.contains(0.6) && !w.contains(0.9) && !w.contains(0.4));
    }

    #[test]
    fn sweep_respects_lower_bounds() {
        for k in 1..200 {
            let a = k as f64 * PI / 100.0;
            let e = solve_corner_exponent(a).unwrap_or_else(|err| panic!("alpha {k}π/100: {err}"));
            assert!(e.certified && e.residual <= 1e-12);
            if k < 100 {
                assert!(e.lambda_star.re > 1.0, "k={k}");
            }
            assert!(e.lambda_star.re > 0.5, "k={k}");
        }
    }

    #[test]
    fn csv_has_one_row_per_angle() {
        let s = exponent_table_csv(&[PI / 2.0, PI]).unwrap();
        assert_eq!(s.lines().count(), 3);
    }
}
