//! Box-constrained L-BFGS with backtracking (Armijo) line search, used for
//! marginal-likelihood fitting. Minimizes; infeasible or failed evaluations
//! are treated as +inf so the line search simply backs off.

use std::collections::VecDeque;

pub(crate) struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Gradient with components that push against an active bound zeroed.
    fn projected_gradient(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(g)
            .enumerate()
            .map(|(i, (&xi, &gi))| {
                let at_lower = xi <= self.lower[i] && gi > 0.0;
                let at_upper = xi >= self.upper[i] && gi < 0.0;
                if at_lower || at_upper {
                    0.0
                } else {
                    gi
                }
            })
            .collect()
    }
}

pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const MEMORY: usize = 8;

/// `eval` returns `None` where the objective cannot be evaluated.
pub(crate) fn minimize<F>(eval: F, x0: &[f64], bounds: &Bounds, max_iters: usize) -> Option<Outcome>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let (mut f, mut g) = eval(&x).filter(|(v, g)| v.is_finite() && g.iter().all(|d| d.is_finite()))?;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);

    for _ in 0..max_iters {
        let pg = bounds.projected_gradient(&x, &g);
        let pg_norm = dot(&pg, &pg).sqrt();
        if pg_norm < 1e-8 * (1.0 + f.abs()) {
            break;
        }

        // two-loop recursion on the projected gradient
        let mut q = pg.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            // first step: unit-length move along steepest descent
            q.iter_mut().for_each(|v| *v /= pg_norm.max(1.0));
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        if dot(&dir, &pg) >= 0.0 {
            history.clear();
            dir = pg.iter().map(|v| -v / pg_norm.max(1.0)).collect();
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            bounds.project(&mut trial);
            let moved: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &moved);
            if let Some((ft, gt)) = eval(&trial) {
                if ft.is_finite() && gt.iter().all(|d| d.is_finite()) && ft <= f + 1e-4 * decrease.min(0.0) {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else { break };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let improvement = f - f_new;
        x = x_new;
        f = f_new;
        g = g_new;
        if improvement.abs() < 1e-12 * (1.0 + f.abs()) {
            break;
        }
    }
    Some(Outcome { x, value: f })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Some((v, g))
        };
        let bounds = Bounds { lower: vec![-5.0; 2], upper: vec![5.0; 2] };
        let out = minimize(f, &[-1.2, 1.0], &bounds, 500).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-4 && (out.x[1] - 1.0).abs() < 1e-4, "{:?}", out.x);
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| Some(((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)]));
        let bounds = Bounds { lower: vec![-1.0], upper: vec![1.0] };
        let out = minimize(f, &[0.0], &bounds, 100).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &[f64]| Some((x[0].sin() + 0.1 * x[0] * x[0], vec![x[0].cos() + 0.2 * x[0]]));
        let bounds = Bounds { lower: vec![-10.0], upper: vec![10.0] };
        for start in [-7.0, -2.0, 0.5, 4.0, 9.0] {
            let out = minimize(f, &[start], &bounds, 100).unwrap();
            assert!(out.value <= f(&[start]).unwrap().0);
        }
    }
}
