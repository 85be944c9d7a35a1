//! Real roots of depressed quartics `a4·X⁴ + a2·X² + a1·X + a0` by Ferrari's
//! method, and the per-stream quartic whose positive root fixes the robust
//! stream gains.
//!
//! Per stream, with `X = λσ` and the power-weighted split `wλ² = μσ²`, the
//! Lagrangian reduces to
//!
//! ```text
//! h(X) = ϑ·w·(γX − 1)² / (ϑ − wX²) + 2·√(wμ)·X,    0 ≤ X < √(ϑ/w)
//! ```
//!
//! which is convex on its domain. Clearing denominators in `h'(X) = 0` gives
//!
//! ```text
//! √μ·w²·X⁴ − (2wϑ√μ + w√w·γϑ)·X² + (γ²ϑ + w)·√w·ϑ·X + ϑ²(√μ − γ√w) = 0.
//! ```

use nalgebra::Matrix4;

use crate::error::{Error, Result};

/// Relative threshold on the resolvent-cubic discriminant below which the
/// closed form is abandoned for the companion-matrix eigenvalues.
const DISCRIMINANT_FLOOR: f64 = 1e-12;

/// Residual bound `|q(X)| ≤ RESIDUAL_TOL·max|a_k|·max(1,|X|)⁴`.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Roots closer than this (relative to `max(1,|X|)`) are merged.
const MERGE_TOL: f64 = 1e-8;

/// `a4·X⁴ + a2·X² + a1·X + a0` with `a4 ≠ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepressedQuartic {
    pub a4: f64,
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
}

impl DepressedQuartic {
    pub fn new(a4: f64, a2: f64, a1: f64, a0: f64) -> Result<Self> {
        if a4 == 0.0 || ![a4, a2, a1, a0].iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidStreamParameters(format!(
                "quartic coefficients ({a4}, {a2}, {a1}, {a0})"
            )));
        }
        Ok(Self { a4, a2, a1, a0 })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x2 = x * x;
        (self.a4 * x2 + self.a2) * x2 + self.a1 * x + self.a0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        4.0 * self.a4 * x * x * x + 2.0 * self.a2 * x + self.a1
    }

    fn coefficient_scale(&self) -> f64 {
        [self.a4, self.a2, self.a1, self.a0]
            .iter()
            .fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    /// Scale used in the residual bound at `x`.
    pub fn residual_scale(&self, x: f64) -> f64 {
        self.coefficient_scale() * x.abs().max(1.0).powi(4)
    }

    fn residual_ok(&self, x: f64) -> bool {
        self.eval(x).abs() <= RESIDUAL_TOL * self.residual_scale(x)
    }

    fn polish(&self, mut x: f64) -> f64 {
        let mut best = self.eval(x).abs();
        for _ in 0..4 {
            let d = self.derivative(x);
            if d == 0.0 || best == 0.0 {
                break;
            }
            let next = x - self.eval(x) / d;
            let r = self.eval(next).abs();
            if !(r < best) {
                break;
            }
            x = next;
            best = r;
        }
        x
    }
}

/// Largest real root of the monic cubic `x³ + b·x² + c·x + d`.
fn largest_cubic_root(b: f64, c: f64, d: f64) -> f64 {
    let shift = b / 3.0;
    let p = c - b * shift;
    let q = 2.0 * shift * shift * shift - shift * c + d;
    let half_q = 0.5 * q;
    let third_p = p / 3.0;
    let disc = half_q * half_q + third_p * third_p * third_p;
    let t = if disc > 0.0 {
        let a = -half_q.signum() * (half_q.abs() + disc.sqrt()).cbrt();
        let bb = if a != 0.0 { -third_p / a } else { 0.0 };
        a + bb
    } else if third_p == 0.0 {
        0.0
    } else {
        let r = (-third_p).sqrt();
        let arg = (-half_q / (r * r * r)).clamp(-1.0, 1.0);
        2.0 * r * (arg.acos() / 3.0).cos()
    };
    let mut x = t - shift;
    // Newton polish; the cubic is increasing to the right of its largest root.
    for _ in 0..3 {
        let f = ((x + b) * x + c) * x + d;
        let df = (3.0 * x + 2.0 * b) * x + c;
        if df == 0.0 {
            break;
        }
        let next = x - f / df;
        if (((next + b) * next + c) * next + d).abs() >= f.abs() {
            break;
        }
        x = next;
    }
    x
}

fn quadratic_real_roots(b: f64, c: f64, tol: f64, out: &mut Vec<f64>) {
    // x² + b·x + c
    let disc = b * b - 4.0 * c;
    if disc < -tol {
        return;
    }
    let sq = disc.max(0.0).sqrt();
    let sign = if b >= 0.0 { 1.0 } else { -1.0 };
    let q = -0.5 * (b + sign * sq);
    if q != 0.0 {
        out.push(q);
        out.push(c / q);
    } else {
        out.push(-0.5 * b);
    }
}

fn ferrari(q: &DepressedQuartic) -> Option<Vec<f64>> {
    let (p, qq, r) = (q.a2 / q.a4, q.a1 / q.a4, q.a0 / q.a4);
    let s = p.abs().max(qq.abs().sqrt()).max(r.abs().sqrt().sqrt());
    if s == 0.0 {
        return Some(vec![0.0]);
    }
    let mut roots = Vec::with_capacity(4);
    if qq.abs() <= 1e-15 * s * s * s {
        // Biquadratic in y = X².
        let mut ys = Vec::new();
        quadratic_real_roots(p, r, 1e-14 * s * s * s * s, &mut ys);
        for y in ys {
            if y >= -1e-14 * s * s {
                let x = y.max(0.0).sqrt();
                roots.push(x);
                roots.push(-x);
            }
        }
        return Some(roots);
    }

    // Resolvent cubic m³ + p·m² + (p²/4 − r)·m − q²/8 = 0 has a positive root.
    let (b, c, d) = (p, 0.25 * p * p - r, -0.125 * qq * qq);
    let disc =
        18.0 * b * c * d - 4.0 * b * b * b * d + b * b * c * c - 4.0 * c * c * c - 27.0 * d * d;
    if disc.abs() < DISCRIMINANT_FLOOR * s.powi(12) {
        return None;
    }
    let m = largest_cubic_root(b, c, d);
    if !(m > 0.0) {
        return None;
    }
    let root2m = (2.0 * m).sqrt();
    let shift = qq / (2.0 * root2m);
    let tol = 1e-14 * s * s;
    // X² ∓ √(2m)·X + (p/2 + m ± q/(2√(2m))) = 0
    quadratic_real_roots(-root2m, 0.5 * p + m + shift, tol, &mut roots);
    quadratic_real_roots(root2m, 0.5 * p + m - shift, tol, &mut roots);
    Some(roots)
}

fn companion_roots(q: &DepressedQuartic) -> Vec<f64> {
    let (p, qq, r) = (q.a2 / q.a4, q.a1 / q.a4, q.a0 / q.a4);
    #[rustfmt::skip]
    let companion = Matrix4::new(
        0.0, 0.0, 0.0, -r,
        1.0, 0.0, 0.0, -qq,
        0.0, 1.0, 0.0, -p,
        0.0, 0.0, 1.0, 0.0,
    );
    companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-6 * z.re.abs().max(1.0))
        .map(|z| z.re)
        .collect()
}

fn finish(q: &DepressedQuartic, raw: Vec<f64>) -> Vec<f64> {
    let mut roots: Vec<f64> = raw
        .into_iter()
        .filter(|x| x.is_finite())
        .map(|x| q.polish(x))
        .collect();
    roots.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::with_capacity(roots.len());
    for x in roots {
        match merged.last_mut() {
            Some(last) if (x - *last).abs() <= MERGE_TOL * x.abs().max(1.0) => {
                if q.eval(x).abs() < q.eval(*last).abs() {
                    *last = x;
                }
            }
            _ => merged.push(x),
        }
    }
    merged
}

/// All real roots, ascending, multiplicities collapsed.
pub fn solve_real_roots(q: &DepressedQuartic) -> Vec<f64> {
    if let Some(raw) = ferrari(q) {
        let roots = finish(q, raw);
        if roots.iter().all(|&x| q.residual_ok(x)) {
            return roots;
        }
    }
    finish(q, companion_roots(q))
        .into_iter()
        .filter(|&x| q.residual_ok(x))
        .collect()
}

/// Operator joining the `X²` and `X` groups of the stream quartic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearTermSign {
    /// `+ (γ²ϑ + w)·√w·ϑ·X`; the sign that zeroes the stream Lagrangian's derivative.
    #[default]
    Plus,
    Minus,
}

/// Coefficients of the per-stream quartic.
pub fn stream_quartic_with_sign(
    w: f64,
    gamma: f64,
    vartheta: f64,
    mu: f64,
    sign: LinearTermSign,
) -> Result<DepressedQuartic> {
    if !(w > 0.0 && mu > 0.0 && vartheta > 0.0 && gamma >= 0.0)
        || !(w.is_finite() && mu.is_finite() && vartheta.is_finite() && gamma.is_finite())
    {
        return Err(Error::InvalidStreamParameters(format!(
            "w={w}, gamma={gamma}, vartheta={vartheta}, mu={mu}"
        )));
    }
    let (sm, sw) = (mu.sqrt(), w.sqrt());
    let linear = (gamma * gamma * vartheta + w) * sw * vartheta;
    DepressedQuartic::new(
        sm * w * w,
        -(2.0 * w * vartheta * sm + w * sw * gamma * vartheta),
        match sign {
            LinearTermSign::Plus => linear,
            LinearTermSign::Minus => -linear,
        },
        vartheta * vartheta * (sm - gamma * sw),
    )
}

pub fn stream_quartic(w: f64, gamma: f64, vartheta: f64, mu: f64) -> Result<DepressedQuartic> {
    stream_quartic_with_sign(w, gamma, vartheta, mu, LinearTermSign::Plus)
}

/// Per-stream Lagrangian `h(X)`; `+∞` outside the domain `wX² < ϑ`.
/// `vartheta = ∞` gives the perfect-knowledge limit `w(γX − 1)² + 2√(wμ)X`.
pub fn stream_objective(x: f64, w: f64, gamma: f64, vartheta: f64, mu: f64) -> f64 {
    let a = gamma * x - 1.0;
    let penalty = 2.0 * (w * mu).sqrt() * x;
    if vartheta.is_infinite() {
        return w * a * a + penalty;
    }
    let slack = vartheta - w * x * x;
    if slack < 0.0 {
        return f64::INFINITY;
    }
    let num = vartheta * w * a * a;
    let first = if num == 0.0 {
        0.0
    } else if slack == 0.0 {
        f64::INFINITY
    } else {
        num / slack
    };
    first + penalty
}

/// `dh/dX`; `+∞` outside the domain.
pub fn stream_objective_derivative(x: f64, w: f64, gamma: f64, vartheta: f64, mu: f64) -> f64 {
    let a = gamma * x - 1.0;
    let penalty = 2.0 * (w * mu).sqrt();
    if vartheta.is_infinite() {
        return 2.0 * w * gamma * a + penalty;
    }
    let x_max = (vartheta / w).sqrt();
    let slack = w * (x_max - x) * (x_max + x);
    if slack <= 0.0 {
        return f64::INFINITY;
    }
    vartheta * w * (2.0 * gamma * a * slack + 2.0 * w * x * a * a) / (slack * slack) + penalty
}

/// Minimizer of `h` among `X = 0` and the positive roots inside the domain `wX² ≤ ϑ`.
pub fn select_root(roots: &[f64], w: f64, gamma: f64, vartheta: f64, mu: f64) -> f64 {
    roots
        .iter()
        .copied()
        .filter(|&x| x > 0.0 && w * x * x <= vartheta)
        .chain(std::iter::once(0.0))
        .map(|x| (x, stream_objective(x, w, gamma, vartheta, mu)))
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(0.0, |(x, _)| x)
}

/// Bisection on `h'` (increasing, since `h` is convex) between `lo` and `hi`.
fn bisect_derivative(mut lo: f64, mut hi: f64, w: f64, gamma: f64, vartheta: f64, mu: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if stream_objective_derivative(mid, w, gamma, vartheta, mu) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Interior minimizer of `h` to full precision. The quartic root seeds a
/// narrow bracket; near-double roots (close to the domain edge) are only
/// accurate to about the square root of machine precision.
fn refine_stationary(x: f64, w: f64, gamma: f64, vartheta: f64, mu: f64) -> f64 {
    let x_max = (vartheta / w).sqrt();
    let dh = |t: f64| stream_objective_derivative(t, w, gamma, vartheta, mu);
    if dh(x_max * (1.0 - 1e-15)) <= 0.0 {
        return x_max;
    }
    let d = 1e-6 * x;
    let (lo, hi) = (x - d, (x + d).min(x_max));
    if x > 0.0 && dh(lo) <= 0.0 && dh(hi) >= 0.0 {
        bisect_derivative(lo, hi, w, gamma, vartheta, mu)
    } else {
        bisect_derivative(0.0, x_max, w, gamma, vartheta, mu)
    }
}

/// Optimal `X = λσ` for one stream at fixed `(ϑ, μ)`.
///
/// Streams with `w = 0` or `γ = 0` are inactive. `vartheta = ∞` uses the
/// closed-form limit `X = (γ√w − √μ)/(γ²√w)`.
pub fn stream_product(w: f64, gamma: f64, vartheta: f64, mu: f64) -> Result<f64> {
    stream_product_with_sign(w, gamma, vartheta, mu, LinearTermSign::Plus)
}

pub fn stream_product_with_sign(
    w: f64,
    gamma: f64,
    vartheta: f64,
    mu: f64,
    sign: LinearTermSign,
) -> Result<f64> {
    if w == 0.0 || gamma == 0.0 {
        return Ok(0.0);
    }
    if vartheta.is_infinite() {
        if !(mu > 0.0) {
            return Err(Error::InvalidStreamParameters(format!("mu={mu}")));
        }
        let sw = w.sqrt();
        return Ok(((gamma * sw - mu.sqrt()) / (gamma * gamma * sw)).max(0.0));
    }
    // Roots are invariant to scaling; dividing by ϑ² keeps coefficients O(1)-ish.
    let q = stream_quartic_with_sign(w, gamma, vartheta, mu, sign)?;
    let s = vartheta * vartheta;
    let q = DepressedQuartic::new(q.a4 / s, q.a2 / s, q.a1 / s, q.a0 / s)?;
    let x = select_root(&solve_real_roots(&q), w, gamma, vartheta, mu);
    // h is convex, so h'(0) < 0 means an interior minimizer exists.
    let interior = gamma * w.sqrt() > mu.sqrt();
    if sign == LinearTermSign::Plus && interior {
        return Ok(refine_stationary(x, w, gamma, vartheta, mu));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn quartic(a4: f64, a2: f64, a1: f64, a0: f64) -> DepressedQuartic {
        DepressedQuartic::new(a4, a2, a1, a0).unwrap()
    }

    #[test]
    fn analytic_cases() {
        assert_eq!(
            solve_real_roots(&quartic(1.0, -5.0, 0.0, 4.0)),
            vec![-2.0, -1.0, 1.0, 2.0]
        );
        assert!(solve_real_roots(&quartic(1.0, 0.0, 0.0, 1.0)).is_empty());
        assert_eq!(
            solve_real_roots(&quartic(1.0, -2.0, 0.0, 1.0)),
            vec![-1.0, 1.0]
        );
    }

    #[test]
    fn non_biquadratic_known_roots() {
        // Roots summing to zero give a depressed quartic via Vieta's formulas.
        let r = [-3.0, 0.5, 1.0, 1.5];
        let e2: f64 = (0..4)
            .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
            .map(|(i, j)| r[i] * r[j])
            .sum();
        let e3: f64 = (0..4)
            .flat_map(|i| (i + 1..4).flat_map(move |j| (j + 1..4).map(move |k| (i, j, k))))
            .map(|(i, j, k)| r[i] * r[j] * r[k])
            .sum();
        let e4: f64 = r.iter().product();
        let roots = solve_real_roots(&quartic(1.0, e2, -e3, e4));
        assert_eq!(roots.len(), 4);
        for (a, b) in roots.iter().zip(r) {
            assert!((a - b).abs() < 1e-12, "{roots:?}");
        }
    }

    #[test]
    fn scaling_invariance_and_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..2000 {
            let c: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            let q = quartic(c[0], c[1], c[2], c[3]);
            let roots = solve_real_roots(&q);
            for &x in &roots {
                assert!(q.eval(x).abs() <= RESIDUAL_TOL * q.residual_scale(x));
            }
            let k: f64 = rng.random_range(0.01..100.0);
            let scaled = solve_real_roots(&quartic(k * c[0], k * c[1], k * c[2], k * c[3]));
            assert_eq!(roots.len(), scaled.len());
            for (a, b) in roots.iter().zip(&scaled) {
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn stream_quartic_leading_and_constant_terms() {
        let (w, g, t, m) = (1.7_f64, 0.8_f64, 3.2_f64, 0.45_f64);
        let q = stream_quartic(w, g, t, m).unwrap();
        assert!((q.a4 - m.sqrt() * w * w).abs() < 1e-14);
        assert!((q.a0 - t * t * (m.sqrt() - g * w.sqrt())).abs() < 1e-12);
        assert!(stream_quartic(0.0, g, t, m).is_err());
        assert!(stream_quartic(w, g, t, 0.0).is_err());
    }

    #[test]
    fn dead_stream_selects_zero() {
        let q = stream_quartic(1.0, 0.0, 2.0, 0.3).unwrap();
        assert!(q.a0 > 0.0);
        let roots = solve_real_roots(&q);
        assert_eq!(select_root(&roots, 1.0, 0.0, 2.0, 0.3), 0.0);
        assert_eq!(stream_product(1.0, 0.0, 2.0, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn select_root_trivial_cases() {
        assert_eq!(select_root(&[], 1.0, 1.0, 1.0, 1.0), 0.0);
        assert_eq!(select_root(&[-3.0, -1.0], 1.0, 1.0, 1.0, 1.0), 0.0);
    }

    fn grid_argmin(w: f64, g: f64, t: f64, m: f64) -> f64 {
        let hi = (t / w).sqrt();
        let n = 200_000;
        (0..n)
            .map(|k| hi * k as f64 / n as f64)
            .map(|x| (x, stream_objective(x, w, g, t, m)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0
    }

    #[test]
    fn selected_root_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let w = rng.random_range(0.2..3.0);
            let g = rng.random_range(0.1..4.0);
            let t = rng.random_range(0.1..20.0);
            let m = rng.random_range(0.01..2.0);
            let x = stream_product(w, g, t, m).unwrap();
            let xg = grid_argmin(w, g, t, m);
            let hi = (t / w).sqrt();
            assert!(
                (x - xg).abs() <= 2.0 * hi / 200_000.0 + 1e-9,
                "x={x} grid={xg}"
            );
            let v = stream_objective(x, w, g, t, m);
            assert!(v <= stream_objective(xg, w, g, t, m) + 1e-12);
        }
    }

    #[test]
    fn minus_sign_candidate_is_not_stationary() {
        // With the printed operator read as `−`, the selected root does not
        // zero h'(X) (checked by central differences).
        let (w, g, t, m) = (1.0, 1.5, 4.0, 0.2);
        let fd = |x: f64| {
            let h = 1e-6;
            (stream_objective(x + h, w, g, t, m) - stream_objective(x - h, w, g, t, m)) / (2.0 * h)
        };
        let plus = stream_product_with_sign(w, g, t, m, LinearTermSign::Plus).unwrap();
        assert!(plus > 0.0 && fd(plus).abs() < 1e-6);
        let minus = stream_product_with_sign(w, g, t, m, LinearTermSign::Minus).unwrap();
        assert!(minus == 0.0 || fd(minus).abs() > 1e-3);
    }

    #[test]
    fn infinite_vartheta_limit_matches_large_vartheta() {
        // μ = 1/4, w = γ = 1: perfect-knowledge solution λ = 1/2, σ = 1, X = 1/2.
        let lim = stream_product(1.0, 1.0, f64::INFINITY, 0.25).unwrap();
        assert!((lim - 0.5).abs() < 1e-15);
        let big = stream_product(1.0, 1.0, 1e8, 0.25).unwrap();
        assert!((big - 0.5).abs() < 1e-6);
    }
}
