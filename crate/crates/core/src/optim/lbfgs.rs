//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when `||grad||_inf <= grad_tol`.
    pub grad_tol: f64,
    /// Stop when the last `REL_WINDOW` iterations together lowered the value
    /// by at most `REL_WINDOW * rel_tol * |f|`. Zero disables the test.
    pub rel_tol: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 20,
            max_iters: 500,
            grad_tol: 1e-6,
            rel_tol: 0.0,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::Config("L-BFGS memory must be >= 1".into()));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::Config("grad_tol must be >= 0".into()));
        }
        if !(self.rel_tol >= 0.0 && self.rel_tol < 1.0) {
            return Err(Error::Config("rel_tol must lie in [0, 1)".into()));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Config("line search needs 0 < c1 < c2 < 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// The gradient or the relative-decrease test was met.
    pub converged: bool,
    /// The line search could not find an acceptable step.
    pub stalled: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

/// Minimizer of a cubic through `(a, fa, ga)` and `(b, fb, gb)`, clamped into
/// the interior of the interval.
fn cubic_min(a: f64, fa: f64, ga: f64, b: f64, fb: f64, gb: f64) -> f64 {
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - ga * gb;
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let fallback = 0.5 * (a + b);
    if !(disc >= 0.0) {
        return fallback;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2);
    let margin = 0.1 * (hi - lo);
    if t.is_finite() && t > lo + margin && t < hi - margin {
        t
    } else {
        fallback
    }
}

/// Minimize `f` from `x0`. `f` returns the value and gradient. Evaluation
/// errors at trial points are treated as infinite values so the step shrinks;
/// an error at `x0` is returned.
pub fn lbfgs_minimize<F>(mut f: F, x0: Vec<f64>, cfg: &LbfgsConfig) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let (f0, g0) = f(&x0)?;
    if !f0.is_finite() || g0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("objective is not finite at the start point".into()));
    }
    let mut evaluations = 1;
    let mut cur = Point { x: x0, f: f0, g: g0 };
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut stalled = false;
    let mut small_decrease = false;
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(REL_WINDOW + 1);
    recent.push_back(cur.f);
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        if inf_norm(&cur.g) <= cfg.grad_tol {
            break;
        }
        // Two-loop recursion.
        let mut d: Vec<f64> = cur.g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|di| *di *= gamma);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        let mut dg = dot(&d, &cur.g);
        if !(dg < 0.0) {
            // Not a descent direction: restart from steepest descent.
            hist.clear();
            d = cur.g.iter().map(|v| -v).collect();
            dg = dot(&d, &cur.g);
        }
        let alpha0 = if hist.is_empty() {
            (1.0 / inf_norm(&d)).min(1.0)
        } else {
            1.0
        };

        let step = line_search(&mut f, &cur, &d, dg, alpha0, cfg, &mut evaluations);
        iterations += 1;
        match step {
            Some(next) => {
                let s: Vec<f64> = next.x.iter().zip(&cur.x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = next.g.iter().zip(&cur.g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
                    if hist.len() == cfg.memory {
                        hist.pop_front();
                    }
                    hist.push_back((s, y, 1.0 / sy));
                }
                cur = next;
                log::trace!("iteration {iterations}: f = {:.9e}, |g| = {:.3e}", cur.f, inf_norm(&cur.g));
                recent.push_back(cur.f);
                if recent.len() > REL_WINDOW {
                    let old = recent.pop_front().expect("window is full");
                    if cfg.rel_tol > 0.0 && old - cur.f <= REL_WINDOW as f64 * cfg.rel_tol * cur.f.abs().max(old.abs()) {
                        small_decrease = true;
                        break;
                    }
                }
            }
            None => {
                if hist.is_empty() {
                    stalled = true;
                    break;
                }
                // Retry once from steepest descent before giving up.
                hist.clear();
            }
        }
    }
    let grad_inf = inf_norm(&cur.g);
    Ok(LbfgsResult {
        converged: grad_inf <= cfg.grad_tol || small_decrease,
        value: cur.f,
        grad_inf,
        x: cur.x,
        iterations,
        evaluations,
        stalled,
    })
}

/// Iterations over which the relative-decrease test is measured.
pub const REL_WINDOW: usize = 10;

/// Relative slack on the function value used by the approximate Wolfe test.
const APPROX_WOLFE_EPS: f64 = 1e-12;

/// Armijo, or near the optimum where function differences drown in rounding,
/// the approximate Wolfe test `f(a) <= f0 + eps` with
/// `(2 c1 - 1) dg0 >= dg(a)`.
fn sufficient_decrease(f0: f64, dg0: f64, eps_f: f64, cfg: &LbfgsConfig, a: f64, fa: f64, dga: f64) -> bool {
    fa <= f0 + cfg.c1 * a * dg0 || (fa <= f0 + eps_f && dga <= (2.0 * cfg.c1 - 1.0) * dg0)
}

fn line_search<F>(
    f: &mut F,
    cur: &Point,
    d: &[f64],
    dg0: f64,
    alpha0: f64,
    cfg: &LbfgsConfig,
    evaluations: &mut usize,
) -> Option<Point>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut eval = |alpha: f64| -> (f64, f64, Point) {
        *evaluations += 1;
        let x: Vec<f64> = cur.x.iter().zip(d).map(|(x, di)| x + alpha * di).collect();
        match f(&x) {
            Ok((fv, g)) if fv.is_finite() && g.iter().all(|v| v.is_finite()) => {
                let dg = dot(&g, d);
                (fv, dg, Point { x, f: fv, g })
            }
            _ => (f64::INFINITY, f64::NAN, Point { x, f: f64::INFINITY, g: vec![] }),
        }
    };
    let f0 = cur.f;
    let eps_f = APPROX_WOLFE_EPS * f0.abs();
    let armijo = |a: f64, fa: f64, dga: f64| sufficient_decrease(f0, dg0, eps_f, cfg, a, fa, dga);
    let curvature = |dga: f64| dga.abs() <= -cfg.c2 * dg0;

    let (mut a_prev, mut f_prev, mut dg_prev) = (0.0, f0, dg0);
    let mut a = alpha0;
    let mut evals = 0;
    while evals < cfg.max_line_search {
        evals += 1;
        let (fa, dga, pt) = eval(a);
        if !fa.is_finite() {
            // Undefined or infinite: shrink toward the last good step.
            a = a_prev + 0.5 * (a - a_prev);
            continue;
        }
        if !armijo(a, fa, dga) || (evals > 1 && fa >= f_prev) {
            return zoom(&mut eval, a_prev, f_prev, dg_prev, a, fa, dga, f0, dg0, cfg, cfg.max_line_search - evals);
        }
        if curvature(dga) {
            return Some(pt);
        }
        if dga >= 0.0 {
            return zoom(&mut eval, a, fa, dga, a_prev, f_prev, dg_prev, f0, dg0, cfg, cfg.max_line_search - evals);
        }
        a_prev = a;
        f_prev = fa;
        dg_prev = dga;
        a *= 2.0;
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn zoom<E>(
    eval: &mut E,
    mut lo: f64,
    mut f_lo: f64,
    mut dg_lo: f64,
    mut hi: f64,
    mut f_hi: f64,
    mut dg_hi: f64,
    f0: f64,
    dg0: f64,
    cfg: &LbfgsConfig,
    budget: usize,
) -> Option<Point>
where
    E: FnMut(f64) -> (f64, f64, Point),
{
    let mut best: Option<Point> = None;
    for _ in 0..budget.max(1) {
        let a = if f_hi.is_finite() && dg_hi.is_finite() {
            cubic_min(lo, f_lo, dg_lo, hi, f_hi, dg_hi)
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo).abs() <= 1e-16 * lo.abs().max(1e-300) {
            break;
        }
        let (fa, dga, pt) = eval(a);
        if !fa.is_finite()
            || !sufficient_decrease(f0, dg0, APPROX_WOLFE_EPS * f0.abs(), cfg, a, fa, dga)
            || fa > f_lo
        {
            hi = a;
            f_hi = fa;
            dg_hi = dga;
        } else {
            if dga.abs() <= -cfg.c2 * dg0 {
                return Some(pt);
            }
            if dga * (hi - lo) >= 0.0 {
                hi = lo;
                f_hi = f_lo;
                dg_hi = dg_lo;
            }
            lo = a;
            f_lo = fa;
            dg_lo = dga;
            best = Some(pt);
        }
    }
    // Accept a sufficient-decrease point even if curvature failed.
    best.filter(|p| p.f <= f0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_matches_linear_solve() {
        let n = 10;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b_mat: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        // A = B^T B + I (SPD)
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| b_mat[k][i] * b_mat[k][j]).sum::<f64>() + if i == j { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let obj = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let ax: Vec<f64> = a.iter().map(|r| dot(r, x)).collect();
            let g: Vec<f64> = ax.iter().zip(&b).map(|(p, q)| p - q).collect();
            Ok((0.5 * dot(x, &ax) - dot(&b, x), g))
        };
        let cfg = LbfgsConfig {
            grad_tol: 1e-12,
            ..Default::default()
        };
        let res = lbfgs_minimize(obj, vec![0.0; n], &cfg).unwrap();
        assert!(res.converged, "{res:?}");
        // Oracle: Gaussian elimination.
        let mut m: Vec<Vec<f64>> = a.iter().zip(&b).map(|(r, bi)| {
            let mut r = r.clone();
            r.push(*bi);
            r
        }).collect();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
            m.swap(c, p);
            for r in 0..n {
                if r != c {
                    let f = m[r][c] / m[c][c];
                    for k in c..=n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
        for i in 0..n {
            assert!((res.x[i] - m[i][n] / m[i][i]).abs() < 1e-8);
        }
    }

    #[test]
    fn rosenbrock() {
        let obj = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Ok((f, g))
        };
        let cfg = LbfgsConfig {
            grad_tol: 1e-10,
            ..Default::default()
        };
        let res = lbfgs_minimize(obj, vec![-1.2, 1.0], &cfg).unwrap();
        assert!((res.x[0] - 1.0).abs() < 1e-6 && (res.x[1] - 1.0).abs() < 1e-6, "{res:?}");
    }

    #[test]
    fn relative_decrease_stops_early() {
        // The offset makes relative progress tiny long before the gradient
        // of the quartic term vanishes.
        let obj = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let f = 1e3 + x.iter().map(|v| (v - 1.0).powi(4)).sum::<f64>();
            Ok((f, x.iter().map(|v| 4.0 * (v - 1.0).powi(3)).collect()))
        };
        let strict = LbfgsConfig {
            grad_tol: 1e-14,
            max_iters: 2000,
            ..Default::default()
        };
        let loose = LbfgsConfig { rel_tol: 1e-4, ..strict };
        let a = lbfgs_minimize(obj, vec![3.0, -2.0, 0.5], &strict).unwrap();
        let b = lbfgs_minimize(obj, vec![3.0, -2.0, 0.5], &loose).unwrap();
        assert!(b.converged);
        assert!(b.grad_inf > strict.grad_tol);
        assert!(b.iterations < a.iterations, "{} vs {}", b.iterations, a.iterations);
        assert!(b.value > a.value && b.value < 1e3 + 1.0, "{b:?}");
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let obj = |x: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((dot(x, x), x.iter().map(|v| 2.0 * v).collect())) };
        let res = lbfgs_minimize(obj, vec![0.0; 4], &LbfgsConfig::default()).unwrap();
        assert_eq!(res.iterations, 0);
        assert!(res.converged);
    }

    #[test]
    fn start_error_propagates() {
        let obj = |_: &[f64]| -> Result<(f64, Vec<f64>)> { Err(Error::Numerical("boom".into())) };
        assert!(lbfgs_minimize(obj, vec![0.0], &LbfgsConfig::default()).is_err());
    }
}
