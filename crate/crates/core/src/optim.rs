//! Quasi-Newton (BFGS) minimization with a strong-Wolfe line search.

/// Outcome of a minimization run.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Minimum {
    pub fn grad_sup_norm(&self) -> f64 {
        sup_norm(&self.gradient)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsSettings {
    pub max_iter: usize,
    /// Convergence when the gradient sup-norm drops to this value.
    pub grad_tol: f64,
}

impl Default for BfgsSettings {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
        }
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, where `f(x, grad)` returns the value and writes the gradient.
///
/// Non-finite values are treated as `+∞` by the line search, so the objective
/// may signal an infeasible point that way.
pub fn minimize<F>(mut f: F, x0: &[f64], settings: BfgsSettings) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    // Inverse Hessian approximation, row-major.
    let mut h = identity(n);
    let mut scaled = false;

    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut iterations = 0;

    while iterations < settings.max_iter {
        if sup_norm(&g) <= settings.grad_tol {
            break;
        }
        iterations += 1;
        for i in 0..n {
            dir[i] = -dot(&h[i * n..(i + 1) * n], &g);
        }
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            // Lost descent; restart from steepest descent.
            h = identity(n);
            scaled = false;
            for i in 0..n {
                dir[i] = -g[i];
            }
            slope = -dot(&g, &g);
        }

        let step = wolfe_search(&mut f, &x, fx, slope, &dir, &mut x_new, &mut g_new);
        let Some((alpha, f_new)) = step else {
            if scaled {
                // Retry once along the gradient with a fresh model.
                h = identity(n);
                scaled = false;
                continue;
            }
            break;
        };

        let s: Vec<f64> = dir.iter().map(|d| alpha * d).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;

        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if !scaled {
                let scale = sy / dot(&y, &y);
                for v in h.iter_mut() {
                    *v *= scale;
                }
                scaled = true;
            }
            bfgs_update(&mut h, n, &s, &y, sy);
        }
    }

    let converged = sup_norm(&g) <= settings.grad_tol;
    Minimum {
        x,
        value: fx,
        gradient: g,
        iterations,
        converged,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

/// `H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ`.
fn bfgs_update(h: &mut [f64], n: usize, s: &[f64], y: &[f64], sy: f64) {
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    let coef = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

/// Strong-Wolfe line search (bracketing then zoom by safeguarded cubic
/// interpolation). Returns the accepted step and value with `x_new`/`g_new`
/// filled in.
fn wolfe_search<F>(
    f: &mut F,
    x: &[f64],
    f0: f64,
    slope0: f64,
    dir: &[f64],
    x_new: &mut [f64],
    g_new: &mut [f64],
) -> Option<(f64, f64)>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let mut eval = |alpha: f64, x_new: &mut [f64], g_new: &mut [f64]| -> (f64, f64) {
        for i in 0..x.len() {
            x_new[i] = x[i] + alpha * dir[i];
        }
        let v = f(x_new, g_new);
        if v.is_finite() && g_new.iter().all(|g| g.is_finite()) {
            (v, dot(g_new, dir))
        } else {
            (f64::INFINITY, f64::NAN)
        }
    };

    let mut a_prev = 0.0;
    let mut f_prev = f0;
    let mut d_prev = slope0;
    let mut alpha = 1.0;
    for i in 0..40 {
        let (fa, da) = eval(alpha, x_new, g_new);
        if !fa.is_finite() {
            // Step left the feasible region; shrink.
            alpha = a_prev + 0.1 * (alpha - a_prev);
            if alpha - a_prev < 1e-16 {
                return None;
            }
            continue;
        }
        if fa > f0 + C1 * alpha * slope0 || (i > 0 && fa >= f_prev) {
            return zoom(&mut eval, f0, slope0, (a_prev, f_prev, d_prev), (alpha, fa, da), x_new, g_new);
        }
        if da.abs() <= -C2 * slope0 {
            return Some((alpha, fa));
        }
        if da >= 0.0 {
            return zoom(&mut eval, f0, slope0, (alpha, fa, da), (a_prev, f_prev, d_prev), x_new, g_new);
        }
        a_prev = alpha;
        f_prev = fa;
        d_prev = da;
        alpha *= 2.0;
    }
    None
}

fn zoom<E>(
    eval: &mut E,
    f0: f64,
    slope0: f64,
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
    x_new: &mut [f64],
    g_new: &mut [f64],
) -> Option<(f64, f64)>
where
    E: FnMut(f64, &mut [f64], &mut [f64]) -> (f64, f64),
{
    for _ in 0..60 {
        let (a_lo, a_hi) = (lo.0, hi.0);
        let width = (a_hi - a_lo).abs();
        if width < 1e-14 * a_lo.abs().max(1e-10) {
            break;
        }
        let mut a = cubic_min(lo, hi).unwrap_or(0.5 * (a_lo + a_hi));
        let (left, right) = (a_lo.min(a_hi), a_lo.max(a_hi));
        let margin = 0.1 * (right - left);
        if !(a > left + margin && a < right - margin) {
            a = 0.5 * (a_lo + a_hi);
        }
        let (fa, da) = eval(a, x_new, g_new);
        if !fa.is_finite() || fa > f0 + C1 * a * slope0 || fa >= lo.1 {
            hi = (a, fa, da);
        } else {
            if da.abs() <= -C2 * slope0 {
                return Some((a, fa));
            }
            if da * (a_hi - a_lo) >= 0.0 {
                hi = lo;
            }
            lo = (a, fa, da);
        }
    }
    // Accept the best sufficient-decrease point found, if any.
    if lo.0 > 0.0 && lo.1 < f0 {
        let (fa, _) = eval(lo.0, x_new, g_new);
        return Some((lo.0, fa));
    }
    None
}

/// Minimizer of the cubic interpolating values and slopes at two points.
fn cubic_min(a: (f64, f64, f64), b: (f64, f64, f64)) -> Option<f64> {
    let (x0, f0, d0) = a;
    let (x1, f1, d1) = b;
    if !(f1.is_finite() && d1.is_finite()) {
        return None;
    }
    let d1_ = d0 + d1 - 3.0 * (f0 - f1) / (x0 - x1);
    let disc = d1_ * d1_ - d0 * d1;
    if disc < 0.0 {
        return None;
    }
    let d2 = (x1 - x0).signum() * disc.sqrt();
    let denom = d1 - d0 + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let t = x1 - (x1 - x0) * (d1 + d2 - d1_) / denom;
    t.is_finite().then_some(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let m = minimize(f, &[-1.2, 1.0], BfgsSettings::default());
        assert!(m.converged, "{m:?}");
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn quadratic_is_exact() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (x[0] - 3.0);
            g[1] = 8.0 * (x[1] + 1.0);
            (x[0] - 3.0).powi(2) + 4.0 * (x[1] + 1.0).powi(2)
        };
        let m = minimize(f, &[0.0, 0.0], BfgsSettings::default());
        assert!(m.converged);
        assert!((m.x[0] - 3.0).abs() < 1e-7 && (m.x[1] + 1.0).abs() < 1e-7);
    }

    #[test]
    fn respects_infeasible_region() {
        // -ln x + x, minimum at 1, infinite for x <= 0
        let f = |x: &[f64], g: &mut [f64]| {
            if x[0] <= 0.0 {
                return f64::INFINITY;
            }
            g[0] = -1.0 / x[0] + 1.0;
            -x[0].ln() + x[0]
        };
        let m = minimize(f, &[5.0], BfgsSettings::default());
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6);
    }
}
