//! Projected gradient descent with Barzilai-Borwein trial steps and Armijo
//! backtracking along the projection arc. Accepted objective values never
//! increase.

/// Tuning knobs for [`minimize`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PgSettings {
    pub max_iters: usize,
    /// Sufficient-decrease constant.
    pub armijo_c: f64,
    /// Step shrink factor on a failed Armijo test.
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Relative objective decrease below which an iteration counts as stalled.
    pub stall_tol: f64,
    /// Consecutive stalled iterations before stopping.
    pub stall_patience: usize,
    /// Stop once the accepted move is below this size (infinity norm).
    pub step_tol: f64,
}

impl Default for PgSettings {
    fn default() -> Self {
        Self {
            max_iters: 400,
            armijo_c: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
            stall_tol: 1e-13,
            stall_patience: 3,
            step_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PgOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Stopped on a stationarity or stall test rather than the iteration cap.
    pub converged: bool,
    /// The line search could not find a decrease from a non-stationary point.
    pub line_search_failed: bool,
    /// Accepted objective values, starting with the projected start point.
    pub trace: Vec<f64>,
}

/// Minimizes `eval` over the set described by `project`.
///
/// `eval(x, grad)` returns the objective and writes the gradient. `project`
/// maps a point onto the feasible set in place.
pub fn minimize<F, P>(x0: &[f64], mut eval: F, mut project: P, s: &PgSettings) -> PgOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    P: FnMut(&mut [f64]),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x);
    let mut g = vec![0.0; n];
    let mut f = eval(&x, &mut g);
    let mut evaluations = 1;
    let mut trace = vec![f];
    let out = |x: Vec<f64>, f: f64, it, ev, converged, failed, trace| PgOutcome {
        x,
        value: f,
        iterations: it,
        evaluations: ev,
        converged,
        line_search_failed: failed,
        trace,
    };
    if n == 0 || !f.is_finite() {
        return out(x, f, 0, evaluations, n == 0, !f.is_finite(), trace);
    }

    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut alpha = if gmax > 0.0 { 1.0 / gmax } else { 1.0 };
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut stalled = 0;

    for it in 0..s.max_iters {
        let mut step = alpha;
        let mut accepted = false;
        let mut f_trial = f;
        let mut moved = 0.0f64;
        for _ in 0..=s.max_backtracks {
            for i in 0..n {
                trial[i] = x[i] - step * g[i];
            }
            project(&mut trial);
            let mut decrease = 0.0;
            moved = 0.0;
            for i in 0..n {
                let d = trial[i] - x[i];
                decrease += g[i] * d;
                moved = moved.max(d.abs());
            }
            if moved <= s.step_tol {
                // Projected step vanished: stationary within tolerance.
                return out(x, f, it, evaluations, true, false, trace);
            }
            f_trial = eval(&trial, &mut g_trial);
            evaluations += 1;
            if f_trial.is_finite() && f_trial <= f + s.armijo_c * decrease {
                accepted = true;
                break;
            }
            step *= s.backtrack;
        }
        if !accepted {
            // Numerically flat: no representable decrease along the arc.
            let failed = moved > 1e-6;
            return out(x, f, it, evaluations, !failed, failed, trace);
        }

        // Barzilai-Borwein step for the next trial.
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..n {
            let sd = trial[i] - x[i];
            ss += sd * sd;
            sy += sd * (g_trial[i] - g[i]);
        }
        alpha = if sy > 0.0 {
            (ss / sy).clamp(1e-10, 1e10)
        } else {
            (step * 4.0).min(1e10)
        };

        let rel = (f - f_trial) / (1.0 + f.abs());
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_trial);
        f = f_trial;
        trace.push(f);
        if rel <= s.stall_tol {
            stalled += 1;
            if stalled >= s.stall_patience {
                return out(x, f, it + 1, evaluations, true, false, trace);
            }
        } else {
            stalled = 0;
        }
    }
    out(x, f, s.max_iters, evaluations, false, false, trace)
}
