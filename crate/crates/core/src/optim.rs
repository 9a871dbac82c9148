//! Descent with a limited-memory quasi-Newton direction and a halving line
//! search. With `memory = 0` this is steepest descent.

#[derive(Clone, Debug)]
pub(crate) struct DescentConfig {
    pub max_iters: usize,
    /// Stop once the objective is at or below this value.
    pub target: f64,
    /// Largest parameter change on the first trial of a line search.
    pub step_cap: f64,
    pub max_halvings: usize,
    pub memory: usize,
    /// The objective is re-drawn every iteration (sampled estimates). The
    /// reported value is then the latest estimate rather than a running
    /// minimum, and a failed line search never ends the run.
    pub fresh_draws: bool,
}

pub(crate) struct DescentOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes an objective that may depend on the iteration index. Iteration
/// `i` compares line-search trials against a value from the same draw `i`.
///
/// `record(i, v)` is called with `i = 0` for the starting value and then once
/// per iteration. Once the search stalls (no descent along the steepest
/// direction) the remaining iterations record the final value unchanged.
pub(crate) fn minimize(
    x0: Vec<f64>,
    cfg: &DescentConfig,
    value: impl Fn(usize, &[f64]) -> f64,
    value_grad: impl Fn(usize, &[f64]) -> (f64, Vec<f64>),
    mut record: impl FnMut(usize, f64),
    stop_on_stall: bool,
) -> DescentOutcome {
    let mut x = x0;
    let (mut f, mut g) = value_grad(1, &x);
    record(0, f);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut stalled = false;
    let mut it = 0;
    while it < cfg.max_iters && f > cfg.target {
        it += 1;
        if stalled {
            record(it, f);
            continue;
        }
        // Two-loop recursion.
        let mut q = g.clone();
        let mut coeffs = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            coeffs.push((a, rho));
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        }
        for ((s, y), (a, rho)) in s_hist.iter().zip(&y_hist).zip(coeffs.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += si * (a - b));
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        if dot(&dir, &g) >= 0.0 {
            dir = g.iter().map(|v| -v).collect();
            s_hist.clear();
            y_hist.clear();
        }
        let dmax = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut accepted = None;
        if dmax > 0.0 && dmax.is_finite() {
            let mut step = (cfg.step_cap / dmax).min(1.0);
            for _ in 0..=cfg.max_halvings {
                let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
                if value(it, &trial) < f {
                    accepted = Some(trial);
                    break;
                }
                step *= 0.5;
            }
        }
        match accepted {
            Some(x_new) => {
                let (f_new, g_new) = value_grad(it + 1, &x_new);
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                if cfg.memory > 0 && dot(&s, &y) > 1e-16 {
                    s_hist.push(s);
                    y_hist.push(y);
                    if s_hist.len() > cfg.memory {
                        s_hist.remove(0);
                        y_hist.remove(0);
                    }
                }
                x = x_new;
                // The accepted trial is re-evaluated with the gradient; keep
                // the smaller so the trace stays monotone under rounding.
                f = if cfg.fresh_draws { f_new } else { f_new.min(f) };
                g = g_new;
            }
            None if cfg.fresh_draws => {
                s_hist.clear();
                y_hist.clear();
                (f, g) = value_grad(it + 1, &x);
            }
            None => {
                if s_hist.is_empty() {
                    stalled = true;
                    if stop_on_stall {
                        record(it, f);
                        break;
                    }
                }
                s_hist.clear();
                y_hist.clear();
            }
        }
        record(it, f);
    }
    DescentOutcome {
        x,
        value: f,
        iterations: it,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    fn rosen_grad(x: &[f64]) -> Vec<f64> {
        vec![
            -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
            200.0 * (x[1] - x[0] * x[0]),
        ]
    }

    #[test]
    fn quasi_newton_solves_rosenbrock() {
        let cfg = DescentConfig {
            max_iters: 500,
            target: 1e-12,
            step_cap: 1.0,
            max_halvings: 30,
            memory: 10,
            fresh_draws: false,
        };
        let mut trace = Vec::new();
        let out = minimize(
            vec![-1.2, 1.0],
            &cfg,
            |_, x| rosenbrock(x),
            |_, x| (rosenbrock(x), rosen_grad(x)),
            |i, v| trace.push((i, v)),
            true,
        );
        assert!(out.value <= 1e-12, "{}", out.value);
        assert!(trace.windows(2).all(|w| w[1].1 <= w[0].1));
    }

    #[test]
    fn zero_gradient_stalls_with_flat_trace() {
        let cfg = DescentConfig {
            max_iters: 5,
            target: f64::NEG_INFINITY,
            step_cap: 1.0,
            max_halvings: 3,
            memory: 0,
            fresh_draws: false,
        };
        let mut trace = Vec::new();
        let out = minimize(
            vec![0.3],
            &cfg,
            |_, _| 2.0,
            |_, _| (2.0, vec![0.0]),
            |i, v| trace.push((i, v)),
            false,
        );
        assert_eq!(out.iterations, 5);
        assert_eq!(trace, (0..=5).map(|i| (i, 2.0)).collect::<Vec<_>>());
    }
}
