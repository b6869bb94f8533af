//! Euclidean projection onto `{0 <= u_t <= u_max, |u_t - u_{t-1}| <= du_max}`
//! with `u_0` fixed.
//!
//! The constraints form a chain, so the projection is computed exactly by
//! dynamic programming over the derivative of the convex cost-to-come, which
//! stays piecewise linear. Dykstra's alternating projections over the box and
//! the even and odd drift pairs are kept as an independent reference.

use crate::domain::PowerLimits;

/// Convergence tolerance on the change of the iterate over one Dykstra cycle.
pub const PROJECTION_TOL: f64 = 1e-8;
const MAX_CYCLES: usize = 20_000;

fn first_window(lim: &PowerLimits) -> (f64, f64) {
    (
        (lim.u_prev - lim.du_max).max(0.0),
        (lim.u_prev + lim.du_max).min(lim.u_max),
    )
}

fn project_box(x: &mut [f64], lim: &PowerLimits) {
    for v in x.iter_mut() {
        *v = v.clamp(0.0, lim.u_max);
    }
    if let Some(v) = x.first_mut() {
        let (lo, hi) = first_window(lim);
        // An out-of-range u_prev can leave the window empty; fall back to the box.
        if lo <= hi {
            *v = v.clamp(lo, hi);
        }
    }
}

fn project_pairs(x: &mut [f64], first: usize, du: f64) {
    let mut i = first;
    while i + 1 < x.len() {
        let (a, b) = (x[i], x[i + 1]);
        let gap = b - a;
        if gap.abs() > du {
            let mid = 0.5 * (a + b);
            let half = 0.5 * du * gap.signum();
            x[i] = mid - half;
            x[i + 1] = mid + half;
        }
        i += 2;
    }
}

fn rates_ok(x: &[f64], du: f64) -> bool {
    x.windows(2).all(|w| (w[1] - w[0]).abs() <= du)
}

fn strictly_feasible(x: &[f64], lim: &PowerLimits) -> bool {
    let (lo, hi) = first_window(lim);
    x.iter().all(|&v| (0.0..=lim.u_max).contains(&v))
        && x.first().is_none_or(|&v| v >= lo && v <= hi)
        && rates_ok(x, lim.du_max)
}

/// Forward pass that removes any residual violation left by finite iteration.
fn repair(x: &mut [f64], lim: &PowerLimits) {
    let mut prev = lim.u_prev.clamp(0.0, lim.u_max);
    for v in x.iter_mut() {
        let lo = (prev - lim.du_max).max(0.0);
        let hi = (prev + lim.du_max).min(lim.u_max);
        *v = v.clamp(lo, hi);
        prev = *v;
    }
}

/// Nondecreasing piecewise-linear function on `[pts[0].0, pts[last].0]`,
/// interpolated between points; repeated abscissae encode jumps.
type Slope = Vec<(f64, f64)>;

/// Smallest point where the function crosses zero, clamped to the domain.
fn root(p: &[(f64, f64)]) -> f64 {
    if p[0].1 >= 0.0 {
        return p[0].0;
    }
    for w in p.windows(2) {
        let ((x0, v0), (x1, v1)) = (w[0], w[1]);
        if v1 >= 0.0 {
            if v1 == v0 || x1 == x0 {
                return x1;
            }
            return x0 + (x1 - x0) * (-v0) / (v1 - v0);
        }
    }
    p[p.len() - 1].0
}

/// Value at `x` inside the domain; at a jump, the right limit if `right`
/// and the left limit otherwise.
fn value_at(p: &[(f64, f64)], x: f64, right: bool) -> f64 {
    let mut i = 0;
    while i + 1 < p.len() && (p[i + 1].0 < x || (right && p[i + 1].0 == x)) {
        i += 1;
    }
    if i + 1 == p.len() {
        return p[i].1;
    }
    let ((x0, v0), (x1, v1)) = (p[i], p[i + 1]);
    if x1 == x0 {
        return if right { v1 } else { v0 };
    }
    v0 + (v1 - v0) * (x - x0) / (x1 - x0)
}

/// Writes into `out` the derivative of `x -> min_{|x - y| <= du} V(y)` where
/// `d` is `V'` and `m` its minimizer: the part left of `m` shifts left, the
/// part right of it shifts right, and the gap is flat. The result is then
/// restricted to `[lo, hi]` and `x - y` is added.
fn next_stage(d: &[(f64, f64)], m: f64, du: f64, lo: f64, hi: f64, y: f64, out: &mut Slope) {
    out.clear();
    let has_left = d[0].0 < m;
    let has_right = d[d.len() - 1].0 > m;
    out.extend(d.iter().filter(|(x, _)| *x < m).map(|&(x, v)| (x - du, v)));
    if has_left {
        out.push((m - du, value_at(d, m, false)));
    }
    out.push((m - du, 0.0));
    out.push((m + du, 0.0));
    if has_right {
        out.push((m + du, value_at(d, m, true)));
    }
    out.extend(d.iter().filter(|(x, _)| *x > m).map(|&(x, v)| (x + du, v)));

    // Clip to [lo, hi] in place.
    let (a, b) = (out[0].0, out[out.len() - 1].0);
    let (lo, hi) = (lo.max(a), hi.min(b));
    let vlo = value_at(out, lo, true);
    let vhi = value_at(out, hi, false);
    out.retain(|&(x, _)| x > lo && x < hi);
    out.insert(0, (lo, vlo));
    out.push((hi, vhi));
    for (x, v) in out.iter_mut() {
        *v += *x - y;
    }
}

/// Exact projection by a forward pass over cost-to-come derivatives and a
/// backward pass that clamps each stage minimizer into its drift window.
fn project_chain(x: &mut [f64], lim: &PowerLimits) {
    let n = x.len();
    if n == 0 {
        return;
    }
    let du = lim.du_max;
    let prev = lim.u_prev.clamp(0.0, lim.u_max);
    let (lo, hi) = ((prev - du).max(0.0), (prev + du).min(lim.u_max));
    let mut d: Slope = Vec::with_capacity(2 * n + 8);
    let mut scratch: Slope = Vec::with_capacity(2 * n + 8);
    d.push((lo, lo - x[0]));
    d.push((hi, hi - x[0]));
    // Per stage: minimizer and domain.
    let mut stage = Vec::with_capacity(n);
    stage.push((root(&d), lo, hi));
    for t in 1..n {
        next_stage(&d, stage[t - 1].0, du, 0.0, lim.u_max, x[t], &mut scratch);
        std::mem::swap(&mut d, &mut scratch);
        stage.push((root(&d), d[0].0, d[d.len() - 1].0));
    }
    x[n - 1] = stage[n - 1].0;
    for t in (0..n - 1).rev() {
        let (m, a, b) = stage[t];
        let next = x[t + 1];
        x[t] = m.clamp((next - du).max(a), (next + du).min(b));
    }
}

/// Projects `x` in place; the result always passes the feasibility check.
pub fn project_in_place(x: &mut [f64], lim: &PowerLimits) {
    if strictly_feasible(x, lim) {
        return;
    }
    project_chain(x, lim);
    repair(x, lim);
}

/// Projection by Dykstra's method, iterated to `PROJECTION_TOL`.
pub fn project_dykstra_in_place(x: &mut [f64], lim: &PowerLimits) {
    if strictly_feasible(x, lim) {
        return;
    }
    // If the box projection already satisfies the drift limits it is the
    // projection onto the intersection.
    let mut y = x.to_vec();
    project_box(&mut y, lim);
    if rates_ok(&y, lim.du_max) {
        x.copy_from_slice(&y);
        return;
    }

    let n = x.len();
    let mut incr = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut before = vec![0.0; n];
    for _ in 0..MAX_CYCLES {
        before.copy_from_slice(x);
        // The iterate can sit still while the increments keep moving, so
        // both must settle before stopping.
        let mut change = 0.0f64;
        for (set, p) in incr.iter_mut().enumerate() {
            for i in 0..n {
                y[i] = x[i] + p[i];
            }
            x.copy_from_slice(&y);
            match set {
                0 => project_box(x, lim),
                1 => project_pairs(x, 0, lim.du_max),
                _ => project_pairs(x, 1, lim.du_max),
            }
            for i in 0..n {
                let next = y[i] - x[i];
                change = change.max((next - p[i]).abs());
                p[i] = next;
            }
        }
        let change = x
            .iter()
            .zip(&before)
            .fold(change, |m, (a, b)| m.max((a - b).abs()));
        if change <= PROJECTION_TOL * 1e-2 {
            break;
        }
    }
    repair(x, lim);
}

pub fn project_feasible(u: &[f64], lim: &PowerLimits) -> Vec<f64> {
    let mut x = u.to_vec();
    project_in_place(&mut x, lim);
    x
}
