//! Discounted cell problems and time-dependent solvers.

use std::io::Write;

use serde::Serialize;

use crate::environment::write_lattice_csv;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, Vector};
use crate::models::{DiffusionModel, HamiltonianModel};
use crate::multigrid::{Anderson, Hierarchy};
use crate::par::Exec;
use crate::scheme::{lipschitz_estimate, Iteration, Operator, SchemeParams};

const ANDERSON_DEPTH: usize = 8;

/// Converged solution of `δv − tr(A(Dv+p)D²v) + H(Dv+p, x) = 0` on the lattice.
#[derive(Debug, Clone)]
pub struct DiscountedSolution {
    pub grid: GridSpec,
    pub v: Vec<f64>,
    pub delta: f64,
    pub p: Vector,
    pub residual_sup: f64,
    pub iterations: usize,
    /// Largest forward-difference gradient norm of `v`.
    pub lipschitz_estimate: f64,
    /// `δ · max |v|`.
    pub sup_norm_delta_v: f64,
    /// `max_x |H(p, x)|`, the a priori bound on `δ|v|`.
    pub max_abs_h: f64,
    pub params: SchemeParams,
    /// `(iteration, residual_sup)` samples.
    pub history: Vec<(usize, f64)>,
}

impl DiscountedSolution {
    /// `v` at the lattice origin.
    pub fn value_at_origin(&self) -> f64 {
        self.v[0]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write_lattice_csv(&mut w, &self.grid, &self.v, "v")
    }

    pub fn write_log_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iter,residual_sup")?;
        for (it, r) in &self.history {
            writeln!(w, "{it},{r:e}")?;
        }
        Ok(())
    }
}

/// Solve the discounted problem starting from `v ≡ 0`.
pub fn solve_discounted(
    ham: &HamiltonianModel,
    diff: &DiffusionModel,
    p: Vector,
    delta: f64,
    params: &SchemeParams,
) -> Result<DiscountedSolution> {
    solve_discounted_from(ham, diff, p, delta, params, None)
}

/// Solve the discounted problem from an explicit initial guess. The fixed
/// point does not depend on the guess.
pub fn solve_discounted_from(
    ham: &HamiltonianModel,
    diff: &DiffusionModel,
    p: Vector,
    delta: f64,
    params: &SchemeParams,
    init: Option<&[f64]>,
) -> Result<DiscountedSolution> {
    let grid = *ham.field().grid();
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::param("delta", "must be positive"));
    }
    if let Some(f) = diff.field() {
        if f.grid() != &grid {
            return Err(Error::param("diffusion", "field lives on a different grid"));
        }
    }
    params.check_stability(delta, &grid, diff.nu_max())?;

    let op = Operator::new(ham, diff, p, params);
    let n = grid.len();
    let mut v = match init {
        Some(v0) if v0.len() == n => v0.to_vec(),
        Some(_) => return Err(Error::param("init", "length does not match the grid")),
        None => vec![0.0; n],
    };
    let mut res = vec![0.0; n];
    let mut history = Vec::new();

    let iterations = match params.method {
        Iteration::Explicit => {
            let mut next = vec![0.0; n];
            let mut it = 0usize;
            loop {
                op.residual(Exec::available(), &v, delta, &mut res);
                let r = sup_abs(&res);
                if it % params.log_every == 0 {
                    history.push((it, r));
                }
                if r <= params.stop_tol {
                    break it;
                }
                if it >= params.max_iters || !r.is_finite() {
                    history.push((it, r));
                    return Err(Error::NonConvergence {
                        iterations: it,
                        residual: r,
                        tolerance: params.stop_tol,
                        history,
                    });
                }
                op.pseudo_step(Exec::available(), &v, delta, params.tau, &mut next);
                std::mem::swap(&mut v, &mut next);
                it += 1;
            }
        }
        Iteration::Sweeping | Iteration::Multigrid => {
            let hierarchy = (params.method == Iteration::Multigrid)
                .then(|| Hierarchy::new(ham, diff, p, delta, params));
            let cycle = match &hierarchy {
                Some(_) => 1,
                None => 1usize << grid.dim(),
            };
            let mut it = 0usize;
            let mut last_logged = 0usize;
            let mut accel = Anderson::new(ANDERSON_DEPTH);
            loop {
                op.residual(Exec::available(), &v, delta, &mut res);
                // F(v + c) = F(v) + δc for constants c: remove the mean residual
                let shift = -res.iter().sum::<f64>() / (n as f64 * delta);
                let r = res.iter().fold(0.0, |m: f64, f| {
                    let a = (f + delta * shift).abs();
                    if a.is_nan() || m.is_nan() {
                        f64::NAN
                    } else {
                        m.max(a)
                    }
                });
                v.iter_mut().for_each(|x| *x += shift);
                if it == 0 || it - last_logged >= params.log_every.min(64 * cycle) {
                    history.push((it, r));
                    last_logged = it;
                }
                if r <= params.stop_tol {
                    if history.last().map(|h| h.0) != Some(it) {
                        history.push((it, r));
                    }
                    break it;
                }
                if it >= params.max_iters || !r.is_finite() {
                    history.push((it, r));
                    return Err(Error::NonConvergence {
                        iterations: it,
                        residual: r,
                        tolerance: params.stop_tol,
                        history,
                    });
                }
                match &hierarchy {
                    Some(mg) => {
                        let mut g = v.clone();
                        mg.v_cycle(&mut g);
                        accel.mix(&v, &mut g);
                        v = g;
                    }
                    None => {
                        for k in 0..cycle {
                            op.sweep(&mut v, delta, k);
                        }
                    }
                }
                it += cycle;
            }
        }
    };

    // report the residual of the stored field, after the last mean correction
    op.residual(Exec::available(), &v, delta, &mut res);
    let residual_sup = sup_abs(&res);
    let vmax = sup_abs(&v);
    let observed = op.max_slope(&v);
    if observed > params.sigma * (1.0 + 1e-9) {
        log::warn!(
            "dissipation {} below observed |dH/dp| = {observed}; the scheme is not monotone here",
            params.sigma
        );
    }
    Ok(DiscountedSolution {
        grid,
        lipschitz_estimate: lipschitz_estimate(&grid, &v),
        sup_norm_delta_v: delta * vmax,
        max_abs_h: ham.sup_abs_on_lattice(p),
        v,
        delta,
        p,
        residual_sup,
        iterations,
        params: *params,
        history,
    })
}

/// `max |v_i|`, NaN if any entry is NaN.
fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| {
        if x.is_nan() || m.is_nan() {
            f64::NAN
        } else {
            m.max(x.abs())
        }
    })
}

/// Discrete shadow of the uniform bound `‖δv‖∞ + ‖Dv‖∞ ≤ C_R`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AssumptionReport {
    pub delta: f64,
    pub sup_norm_delta_v: f64,
    pub lipschitz_estimate: f64,
    pub total: f64,
    pub bound: f64,
    pub max_abs_h: f64,
    pub passes: bool,
}

pub fn check_assumption_h(sol: &DiscountedSolution, bound: f64) -> AssumptionReport {
    let total = sol.sup_norm_delta_v + sol.lipschitz_estimate;
    AssumptionReport {
        delta: sol.delta,
        sup_norm_delta_v: sol.sup_norm_delta_v,
        lipschitz_estimate: sol.lipschitz_estimate,
        total,
        bound,
        max_abs_h: sol.max_abs_h,
        passes: total <= bound,
    }
}

/// Recorded frames of a time-marching solve.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub grid: GridSpec,
    pub times: Vec<f64>,
    pub frames: Vec<Vec<f64>>,
    pub dt: f64,
    pub sigma: f64,
}

impl Evolution {
    pub fn final_frame(&self) -> &[f64] {
        self.frames.last().expect("at least the initial frame is recorded")
    }
}

/// Options for the time-marching solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarchOptions {
    /// Fraction of the largest stable time step.
    pub cfl: f64,
    /// Keep every `record_every`-th step (the final time is always kept).
    pub record_every: usize,
    /// Fixed dissipation; computed from the Hamiltonian when absent.
    pub sigma: Option<f64>,
    pub sigma_margin: f64,
    pub gradient_epsilon: f64,
}

impl Default for MarchOptions {
    fn default() -> Self {
        MarchOptions {
            cfl: 0.9,
            record_every: 1,
            sigma: None,
            sigma_margin: 1.1,
            gradient_epsilon: 1e-8,
        }
    }
}

fn march<S>(
    grid: GridSpec,
    u0: &[f64],
    horizon: f64,
    dt_max: f64,
    opts: &MarchOptions,
    sigma: f64,
    mut step: S,
) -> Result<Evolution>
where
    S: FnMut(&[f64], f64, &mut [f64]) -> Result<()>,
{
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::param("horizon", "must be positive"));
    }
    if u0.len() != grid.len() {
        return Err(Error::param("u0", "length does not match the grid"));
    }
    let steps = (horizon / dt_max).ceil().max(1.0) as usize;
    let dt = horizon / steps as f64;
    let mut u = u0.to_vec();
    let mut next = vec![0.0; u.len()];
    let mut times = vec![0.0];
    let mut frames = vec![u.clone()];
    for k in 1..=steps {
        step(&u, dt, &mut next)?;
        std::mem::swap(&mut u, &mut next);
        if k % opts.record_every.max(1) == 0 || k == steps {
            times.push(k as f64 * dt);
            frames.push(u.clone());
        }
    }
    Ok(Evolution {
        grid,
        times,
        frames,
        dt,
        sigma,
    })
}

/// March `u_t − ε tr(A(Du, x/ε) D²u) + H(Du, x/ε) = 0` on `grid` up to `horizon`.
///
/// The environment of `ham` and `diff` is evaluated at `x/ε` through its
/// analytic formula, so `extent/ε` must be a whole number of environment boxes.
pub fn solve_oscillatory(
    ham: &HamiltonianModel,
    diff: &DiffusionModel,
    epsilon: f64,
    u0: &[f64],
    horizon: f64,
    grid: &GridSpec,
    opts: &MarchOptions,
) -> Result<Evolution> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::param("epsilon", "must lie in (0, 1]"));
    }
    if grid.dim() != ham.dim() {
        return Err(Error::param("dim", "grid and model dimensions differ"));
    }
    if grid.spacing() > epsilon / 8.0 * (1.0 + 1e-12) {
        return Err(Error::param(
            "spacing",
            format!(
                "h = {} does not resolve the oscillation scale (need h <= epsilon/8 = {})",
                grid.spacing(),
                epsilon / 8.0
            ),
        ));
    }
    let env_l = ham.field().grid().extent();
    let boxes = grid.extent() / epsilon / env_l;
    if (boxes - boxes.round()).abs() > 1e-9 || boxes.round() < 1.0 {
        return Err(Error::param(
            "epsilon",
            format!("extent/epsilon must be a multiple of the environment extent {env_l}"),
        ));
    }
    let scaled = |x: Vector| [x[0] / epsilon, x[1] / epsilon];
    let hvals: Vec<f64> = (0..grid.len())
        .map(|i| ham.field().value_at(scaled(grid.position(i))))
        .collect();
    let nuvals: Vec<f64> = if diff.is_zero() {
        Vec::new()
    } else {
        (0..grid.len())
            .map(|i| epsilon * diff.coefficient(scaled(grid.position(i))))
            .collect()
    };
    let nu_max = nuvals.iter().copied().fold(0.0, f64::max);

    let lip = lipschitz_estimate(grid, u0);
    let fmax = hvals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let fmin = hvals.iter().copied().fold(f64::INFINITY, f64::min);
    let level = ham
        .eval_with([lip, 0.0], fmax)
        .abs()
        .max(ham.eval_with([lip, 0.0], fmin).abs());
    let r = ham.momentum_bound(level).max(lip);
    let cap = (!ham.globally_lipschitz()).then(|| opts.sigma_margin * r);
    let sigma = match opts.sigma {
        Some(s) => s,
        None => (opts.sigma_margin * ham.slope_bound(r))
            .max(cap.map_or(0.0, |c| ham.slope_bound(c))),
    };
    let op = Operator::with_fields(
        *grid,
        ham,
        diff,
        &hvals,
        nuvals,
        [0.0, 0.0],
        sigma,
        opts.gradient_epsilon,
    )
    .with_cap(cap);
    let dt_max = opts.cfl / crate::scheme::stability_denominator(sigma, 0.0, grid, nu_max);
    march(*grid, u0, horizon, dt_max, opts, sigma, |u, dt, out| {
        op.pseudo_step(Exec::available(), u, 0.0, dt, out);
        Ok(())
    })
}

/// Piecewise-linear (1D) or bilinear (2D) table of an effective Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct HbarTable {
    axes: Vec<Vec<f64>>,
    /// Row-major over the axes, first axis outermost.
    values: Vec<f64>,
}

impl HbarTable {
    pub fn new_1d(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![nodes], values)
    }

    pub fn new_2d(nodes0: Vec<f64>, nodes1: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![nodes0, nodes1], values)
    }

    fn new(axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        for a in &axes {
            if a.len() < 2 || a.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::param(
                    "p_grid",
                    "table nodes must be strictly increasing with at least 2 entries",
                ));
            }
        }
        let expected: usize = axes.iter().map(Vec::len).product();
        if values.len() != expected {
            return Err(Error::param(
                "p_grid",
                format!("expected {expected} table values, got {}", values.len()),
            ));
        }
        Ok(HbarTable { axes, values })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    fn locate(&self, axis: usize, x: f64) -> Result<(usize, f64)> {
        let nodes = &self.axes[axis];
        let (lo, hi) = (nodes[0], *nodes.last().unwrap());
        let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if !(x >= lo - tol && x <= hi + tol) {
            return Err(Error::Extrapolation {
                value: x,
                min: lo,
                max: hi,
            });
        }
        let x = x.clamp(lo, hi);
        let k = nodes.partition_point(|&n| n <= x).clamp(1, nodes.len() - 1) - 1;
        let t = (x - nodes[k]) / (nodes[k + 1] - nodes[k]);
        Ok((k, t))
    }

    pub fn eval(&self, p: Vector) -> Result<f64> {
        if self.dim() == 1 {
            let (k, t) = self.locate(0, p[0])?;
            Ok((1.0 - t) * self.values[k] + t * self.values[k + 1])
        } else {
            let (i, s) = self.locate(0, p[0])?;
            let (j, t) = self.locate(1, p[1])?;
            let m = self.axes[1].len();
            let v = |a: usize, b: usize| self.values[a * m + b];
            Ok((1.0 - s) * ((1.0 - t) * v(i, j) + t * v(i, j + 1))
                + s * ((1.0 - t) * v(i + 1, j) + t * v(i + 1, j + 1)))
        }
    }

    /// Largest absolute slope along any axis.
    pub fn max_slope(&self) -> f64 {
        let mut best: f64 = 0.0;
        if self.dim() == 1 {
            let n = &self.axes[0];
            for k in 0..n.len() - 1 {
                best = best.max(((self.values[k + 1] - self.values[k]) / (n[k + 1] - n[k])).abs());
            }
        } else {
            let (a0, a1) = (&self.axes[0], &self.axes[1]);
            let m = a1.len();
            for i in 0..a0.len() {
                for j in 0..m {
                    let v = self.values[i * m + j];
                    if i + 1 < a0.len() {
                        let s = (self.values[(i + 1) * m + j] - v) / (a0[i + 1] - a0[i]);
                        best = best.max(s.abs());
                    }
                    if j + 1 < m {
                        let s = (self.values[i * m + j + 1] - v) / (a1[j + 1] - a1[j]);
                        best = best.max(s.abs());
                    }
                }
            }
        }
        best
    }
}

/// March `u_t + H̄(Du) = 0` with a Lax-Friedrichs flux built from the table.
pub fn solve_effective(
    table: &HbarTable,
    u0: &[f64],
    horizon: f64,
    grid: &GridSpec,
    opts: &MarchOptions,
) -> Result<Evolution> {
    if table.dim() != grid.dim() {
        return Err(Error::param("dim", "table and grid dimensions differ"));
    }
    let sigma = opts.sigma.unwrap_or(opts.sigma_margin * table.max_slope());
    let h = grid.spacing();
    let d = grid.dim();
    let dt_max = opts.cfl / crate::scheme::stability_denominator(sigma, 0.0, grid, 0.0);
    march(*grid, u0, horizon, dt_max, opts, sigma, |u, dt, out| {
        for i in 0..grid.len() {
            let mut q = [0.0; 2];
            let mut diss = 0.0;
            for axis in 0..d {
                let up = u[grid.neighbor(i, axis, 1)];
                let dn = u[grid.neighbor(i, axis, -1)];
                q[axis] = (up - dn) / (2.0 * h);
                diss += up - 2.0 * u[i] + dn;
            }
            let hbar = table.eval(q)?;
            out[i] = u[i] - dt * (hbar - sigma / (2.0 * h) * diss);
        }
        Ok(())
    })
}

/// Sup-norm distance between two lattice fields.
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
