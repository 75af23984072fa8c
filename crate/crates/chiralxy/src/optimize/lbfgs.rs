//! Limited-memory BFGS with a strong Wolfe line search.

/// Stopping and line-search parameters.
#[derive(Clone, Copy, Debug)]
pub struct Params {
    pub memory: usize,
    pub max_iterations: usize,
    pub grad_tolerance: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_evals: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self { memory: 10, max_iterations: 10_000, grad_tolerance: 1e-8, c1: 1e-4, c2: 0.9, max_line_evals: 40 }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dotp(a, a).sqrt()
}

struct Line<'a, F> {
    f: &'a mut F,
    x0: &'a [f64],
    d: &'a [f64],
    x: Vec<f64>,
    g: Vec<f64>,
    evals: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Line<'_, F> {
    /// Returns `(phi(a), phi'(a))`, leaving the point and gradient in `self.x`, `self.g`.
    fn eval(&mut self, a: f64) -> (f64, f64) {
        for ((x, x0), d) in self.x.iter_mut().zip(self.x0).zip(self.d) {
            *x = x0 + a * d;
        }
        self.evals += 1;
        let v = (self.f)(&self.x, &mut self.g);
        (v, dotp(&self.g, self.d))
    }
}

/// Minimiser of the cubic through `(a, fa, da)` and `(b, fb, db)`, clamped into the bracket.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let mid = 0.5 * (a + b);
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    let margin = 0.1 * (hi - lo);
    if t.is_finite() && t > lo + margin && t < hi - margin {
        t
    } else {
        mid
    }
}

/// Accepts `a` under the strong Wolfe conditions, or the approximate Wolfe
/// conditions once function differences reach round-off.
fn acceptable(p: &Params, f0: f64, g0: f64, fa: f64, ga: f64, a: f64) -> bool {
    let curvature = ga.abs() <= -p.c2 * g0;
    if fa <= f0 + p.c1 * a * g0 && curvature {
        return true;
    }
    let noise = 1e-12 * f0.abs().max(1e-300);
    fa <= f0 + noise && (2.0 * p.c1 - 1.0) * g0 >= ga && curvature
}

/// Strong Wolfe line search; returns the accepted step or `None`.
fn line_search<F>(p: &Params, line: &mut Line<'_, F>, f0: f64, g0: f64, a_init: f64) -> Option<(f64, f64)>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let (mut a_prev, mut f_prev, mut g_prev) = (0.0, f0, g0);
    let mut a = a_init;
    for it in 0..p.max_line_evals {
        let (fa, ga) = line.eval(a);
        if !fa.is_finite() {
            a = 0.5 * (a_prev + a);
            continue;
        }
        if acceptable(p, f0, g0, fa, ga, a) {
            return Some((a, fa));
        }
        if fa > f0 + p.c1 * a * g0 || (it > 0 && fa >= f_prev) {
            return zoom(p, line, f0, g0, (a_prev, f_prev, g_prev), (a, fa, ga));
        }
        if ga >= 0.0 {
            return zoom(p, line, f0, g0, (a, fa, ga), (a_prev, f_prev, g_prev));
        }
        a_prev = a;
        f_prev = fa;
        g_prev = ga;
        a *= 2.0;
    }
    None
}

fn zoom<F>(
    p: &Params,
    line: &mut Line<'_, F>,
    f0: f64,
    g0: f64,
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
) -> Option<(f64, f64)>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    while line.evals < 2 * p.max_line_evals {
        if (hi.0 - lo.0).abs() <= 1e-14 * lo.0.abs().max(1e-300) {
            break;
        }
        let a = cubic_min(lo.0, lo.1, lo.2, hi.0, hi.1, hi.2);
        let (fa, ga) = line.eval(a);
        if acceptable(p, f0, g0, fa, ga, a) {
            return Some((a, fa));
        }
        if fa > f0 + p.c1 * a * g0 || fa >= lo.1 {
            hi = (a, fa, ga);
        } else {
            if ga * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (a, fa, ga);
        }
    }
    // Settle for the best decreasing point if there is one.
    if lo.0 > 0.0 && lo.1 < f0 {
        line.eval(lo.0);
        return Some((lo.0, lo.1));
    }
    None
}

/// Minimises `f`, which returns the value and writes the gradient.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, p: &Params) -> Outcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut gn = norm(&g);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut d = vec![0.0; n];
    let mut alpha_buf = vec![0.0; p.memory];
    let mut iterations = 0;
    let mut steepest_failures = 0;
    while iterations < p.max_iterations && gn > p.grad_tolerance {
        // Two-loop recursion.
        for (di, gi) in d.iter_mut().zip(&g) {
            *di = -gi;
        }
        let m = s_hist.len();
        for h in (0..m).rev() {
            let a = rho_hist[h] * dotp(&s_hist[h], &d);
            alpha_buf[h] = a;
            for (di, yi) in d.iter_mut().zip(&y_hist[h]) {
                *di -= a * yi;
            }
        }
        if m > 0 {
            let gamma = dotp(&s_hist[m - 1], &y_hist[m - 1]) / dotp(&y_hist[m - 1], &y_hist[m - 1]);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for h in 0..m {
            let b = rho_hist[h] * dotp(&y_hist[h], &d);
            for (di, si) in d.iter_mut().zip(&s_hist[h]) {
                *di += (alpha_buf[h] - b) * si;
            }
        }
        let mut g0 = dotp(&g, &d);
        if !(g0 < 0.0) {
            for (di, gi) in d.iter_mut().zip(&g) {
                *di = -gi;
            }
            g0 = -gn * gn;
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }
        let a_init = if s_hist.is_empty() { (1.0 / gn).min(1.0) } else { 1.0 };
        let result = {
            let mut line = Line { f: &mut f, x0: &x, d: &d, x: x.clone(), g: vec![0.0; n], evals: 0 };
            line_search(p, &mut line, fx, g0, a_init).map(|(_, fa)| (line.x, line.g, fa))
        };
        iterations += 1;
        match result {
            Some((xn, gnew, fnew)) => {
                steepest_failures = 0;
                let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dotp(&s, &y);
                if sy > 1e-16 * norm(&s) * norm(&y) && sy > 0.0 {
                    if s_hist.len() == p.memory {
                        s_hist.remove(0);
                        y_hist.remove(0);
                        rho_hist.remove(0);
                    }
                    s_hist.push(s);
                    y_hist.push(y);
                    rho_hist.push(1.0 / sy);
                }
                x = xn;
                g = gnew;
                fx = fnew;
                gn = norm(&g);
            }
            None => {
                if s_hist.is_empty() {
                    steepest_failures += 1;
                    if steepest_failures >= 2 {
                        break;
                    }
                }
                s_hist.clear();
                y_hist.clear();
                rho_hist.clear();
            }
        }
    }
    let converged = gn <= p.grad_tolerance;
    Outcome { x, f: fx, grad_norm: gn, iterations, converged }
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
        let p = Params { grad_tolerance: 1e-10, ..Params::default() };
        let out = minimize(f, vec![-1.2, 1.0], &p);
        assert!(out.converged, "{out:?}");
        assert!((out.x[0] - 1.0).abs() < 1e-8 && (out.x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn quadratic_in_many_dimensions() {
        let n = 50;
        let f = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..x.len() {
                let w = 1.0 + i as f64;
                g[i] = w * (x[i] - 1.0);
                v += 0.5 * w * (x[i] - 1.0).powi(2);
            }
            v
        };
        let out = minimize(f, vec![0.0; n], &Params { grad_tolerance: 1e-12, ..Params::default() });
        assert!(out.converged);
        assert!(out.x.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }
}
