//! Monotone Lax-Friedrichs discretization on the periodic lattice.
//!
//! At lattice point `i` the discrete operator is
//!
//! ```text
//! F_i(v) = δ v_i − tr(A(D_h v + p) D²_h v) + H(D_h v + p, x_i) − (σ/2h) Σ_k (v_{i+e_k} − 2v_i + v_{i−e_k})
//! ```
//!
//! with `D_h` the centered gradient. The Hamiltonian and the diffusion matrix
//! only see centered differences, so `F_i` is affine in `v_i` with slope
//! `δ + dσ/h + 2W/h²`; the explicit pseudo-time step and the Gauss-Seidel
//! update both use this. Off-diagonal diffusion is split along the lattice
//! diagonals with nonnegative weights.
//!
//! Hamiltonians that are not globally Lipschitz are evaluated at the radial
//! projection of `D_h v + p` onto the a priori momentum ball `|q| ≤ cap`.
//! On that ball `σ` bounds the slope, so every update is monotone even for
//! transient iterates with large gradients; solutions that stay inside the
//! ball are unaffected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Vector};
use crate::models::{DiffusionModel, HamiltonianModel};
use crate::par::{self, Exec};

/// How the discounted fixed point is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Iteration {
    /// Jacobi pseudo-time steps `v ← v − τ F(v)`.
    Explicit,
    /// Alternating-direction Gauss-Seidel on `F(v) = 0` with an exact
    /// constant-mode correction after every cycle.
    Sweeping,
    /// Nonlinear multigrid V-cycles with Gauss-Seidel smoothing.
    #[default]
    Multigrid,
}

/// Resolved per-solve scheme parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    /// Lax-Friedrichs dissipation `σ`, at least `max |∂H/∂p_i|`.
    pub sigma: f64,
    /// Pseudo-time step `τ`.
    pub tau: f64,
    /// Tolerance on `sup |F(v)|`.
    pub stop_tol: f64,
    pub max_iters: usize,
    /// Below this `|D_h v + p|` the curvature diffusion is switched off.
    pub gradient_epsilon: f64,
    pub method: Iteration,
    /// Residual samples are kept every `log_every` iterations.
    pub log_every: usize,
    /// Radius of the momentum ball outside which `H` is frozen radially.
    pub momentum_cap: Option<f64>,
}

impl SchemeParams {
    pub fn new(sigma: f64, tau: f64, stop_tol: f64, max_iters: usize) -> Result<Self> {
        let p = SchemeParams {
            sigma,
            tau,
            stop_tol,
            max_iters,
            gradient_epsilon: 1e-8,
            method: Iteration::Multigrid,
            log_every: 10_000,
            momentum_cap: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::param("sigma", "must be finite and >= 0"));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::param("tau", "must be positive"));
        }
        if !(self.stop_tol > 0.0) {
            return Err(Error::param("stop_tol", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be >= 1"));
        }
        if !(self.gradient_epsilon >= 0.0) {
            return Err(Error::param("gradient_epsilon", "must be >= 0"));
        }
        if let Some(c) = self.momentum_cap {
            if !(c >= 0.0) {
                return Err(Error::param("momentum_cap", "must be >= 0"));
            }
        }
        Ok(())
    }

    /// `τ (δ + 2σ/h + 2dν_max/h²) ≤ 1`.
    pub fn check_stability(&self, delta: f64, grid: &GridSpec, nu_max: f64) -> Result<()> {
        self.validate()?;
        let bound = stability_denominator(self.sigma, delta, grid, nu_max);
        if self.tau * bound > 1.0 + 1e-12 {
            return Err(Error::param(
                "tau",
                format!(
                    "pseudo time step {} violates the stability bound {}",
                    self.tau,
                    1.0 / bound
                ),
            ));
        }
        Ok(())
    }
}

pub fn stability_denominator(sigma: f64, delta: f64, grid: &GridSpec, nu_max: f64) -> f64 {
    let h = grid.spacing();
    delta + 2.0 * sigma / h + 2.0 * grid.dim() as f64 * nu_max / (h * h)
}

/// User-facing scheme settings, resolved per solve into [`SchemeParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    /// Fixed dissipation; computed from the model when absent.
    pub sigma: Option<f64>,
    /// Multiplier applied to `σ` after it is resolved.
    pub sigma_scale: f64,
    /// Safety factor on the computed slope bound.
    pub sigma_margin: f64,
    /// Fraction of the largest stable pseudo time step.
    pub cfl: f64,
    pub stop_tol: f64,
    pub max_iters: usize,
    pub gradient_epsilon: f64,
    pub method: Iteration,
    pub log_every: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            sigma: None,
            sigma_scale: 1.0,
            sigma_margin: 1.1,
            cfl: 0.9,
            stop_tol: 1e-9,
            max_iters: 10_000_000,
            gradient_epsilon: 1e-8,
            method: Iteration::Multigrid,
            log_every: 10_000,
        }
    }
}

impl SchemeConfig {
    /// A priori momentum radius of the discounted problem at `p`:
    /// `|Dv + p| ≤ R` with `min_x H(q,x) ≤ max_x |H(p,x)|`.
    fn momentum_radius(&self, ham: &HamiltonianModel, p: Vector) -> f64 {
        let level = ham.sup_abs_on_lattice(p);
        ham.momentum_bound(level).max(crate::grid::norm(p))
    }

    /// The momentum cap: the a priori radius times `sigma_margin`, or `None`
    /// for globally Lipschitz Hamiltonians.
    pub fn cap_for(&self, ham: &HamiltonianModel, p: Vector) -> Option<f64> {
        (!ham.globally_lipschitz()).then(|| self.sigma_margin * self.momentum_radius(ham, p))
    }

    /// Dissipation covering `|∂H/∂q_i|` on the capped momentum range.
    pub fn sigma_for(&self, ham: &HamiltonianModel, p: Vector) -> f64 {
        let raw = match self.sigma {
            Some(s) => s,
            None => {
                let r = self.momentum_radius(ham, p);
                let on_cap = self.cap_for(ham, p).map_or(0.0, |c| ham.slope_bound(c));
                (self.sigma_margin * ham.slope_bound(r)).max(on_cap)
            }
        };
        raw * self.sigma_scale
    }

    pub fn resolve(
        &self,
        ham: &HamiltonianModel,
        diff: &DiffusionModel,
        p: Vector,
        delta: f64,
        grid: &GridSpec,
    ) -> Result<SchemeParams> {
        let sigma = self.sigma_for(ham, p);
        let mut params = self.with_sigma(sigma, delta, grid, diff.nu_max())?;
        params.momentum_cap = self.cap_for(ham, p);
        Ok(params)
    }

    /// Parameters for a given `σ`; `τ` is the largest stable step times `cfl`.
    pub fn with_sigma(
        &self,
        sigma: f64,
        delta: f64,
        grid: &GridSpec,
        nu_max: f64,
    ) -> Result<SchemeParams> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::param("cfl", "must lie in (0, 1]"));
        }
        let tau = self.cfl / stability_denominator(sigma, delta, grid, nu_max);
        let params = SchemeParams {
            sigma,
            tau,
            stop_tol: self.stop_tol,
            max_iters: self.max_iters,
            gradient_epsilon: self.gradient_epsilon,
            method: self.method,
            log_every: self.log_every.max(1),
            momentum_cap: None,
        };
        params.check_stability(delta, grid, nu_max)?;
        Ok(params)
    }
}

/// Local pieces of the discrete operator at one lattice point.
#[derive(Debug, Clone, Copy)]
pub struct LocalTerms {
    /// `H(D_h v + p, x_i)`.
    pub hamiltonian: f64,
    /// `(σ/2h) Σ_k (v_{i+e_k} − 2v_i + v_{i−e_k})`.
    pub dissipation: f64,
    /// `tr(A D²_h v)`.
    pub diffusion: f64,
    /// Slope of `F_i` in `v_i`, without the discount.
    pub center_weight: f64,
}

/// The lattice operator for one `(H, A, p)` with local field values.
pub struct Operator<'a> {
    pub grid: GridSpec,
    ham: &'a HamiltonianModel,
    diff: &'a DiffusionModel,
    hvals: &'a [f64],
    nuvals: Vec<f64>,
    pub p: Vector,
    pub sigma: f64,
    pub gradient_epsilon: f64,
    cap: f64,
}

impl<'a> Operator<'a> {
    /// Operator on the models' own lattice.
    pub fn new(
        ham: &'a HamiltonianModel,
        diff: &'a DiffusionModel,
        p: Vector,
        params: &SchemeParams,
    ) -> Self {
        let grid = *ham.field().grid();
        let nuvals = if diff.is_zero() {
            Vec::new()
        } else {
            (0..grid.len()).map(|i| diff.coefficient_at(i)).collect()
        };
        Operator {
            grid,
            ham,
            diff,
            hvals: ham.field().values(),
            nuvals,
            p,
            sigma: params.sigma,
            gradient_epsilon: params.gradient_epsilon,
            cap: params.momentum_cap.unwrap_or(f64::INFINITY),
        }
    }

    /// Operator on an arbitrary lattice with externally supplied field values
    /// (used for the rescaled oscillatory problem).
    #[allow(clippy::too_many_arguments)]
    pub fn with_fields(
        grid: GridSpec,
        ham: &'a HamiltonianModel,
        diff: &'a DiffusionModel,
        hvals: &'a [f64],
        nuvals: Vec<f64>,
        p: Vector,
        sigma: f64,
        gradient_epsilon: f64,
    ) -> Self {
        Operator {
            grid,
            ham,
            diff,
            hvals,
            nuvals,
            p,
            sigma,
            gradient_epsilon,
            cap: f64::INFINITY,
        }
    }

    /// Freeze `H` radially outside `|q| ≤ cap`.
    pub fn with_cap(mut self, cap: Option<f64>) -> Self {
        self.cap = cap.unwrap_or(f64::INFINITY);
        self
    }

    /// Evaluate the local terms at `i`. `delta(o)` returns `v(i + o) − v(i)`
    /// for a lattice offset `o`.
    #[inline(always)]
    pub fn terms<D: Fn([isize; 2]) -> f64>(&self, i: usize, delta: D) -> LocalTerms {
        let h = self.grid.spacing();
        let d = self.grid.dim();
        let mut grad = [0.0; 2];
        let mut lap = [0.0; 2];
        let mut dissipation = 0.0;
        for axis in 0..d {
            let mut o = [0isize; 2];
            o[axis] = 1;
            let dp = delta(o);
            o[axis] = -1;
            let dm = delta(o);
            grad[axis] = (dp - dm) / (2.0 * h);
            lap[axis] = dp + dm;
            dissipation += dp + dm;
        }
        dissipation *= self.sigma / (2.0 * h);
        let q = [grad[0] + self.p[0], grad[1] + self.p[1]];
        let hamiltonian = self.ham.eval_with(self.capped(q), self.hvals[i]);

        let mut diffusion = 0.0;
        let mut center_weight = d as f64 * self.sigma / h;
        if !self.nuvals.is_empty() {
            let a = self
                .diff
                .matrix_with(q, self.nuvals[i], self.gradient_epsilon);
            let h2 = h * h;
            if d == 1 {
                diffusion = a[0][0] * lap[0] / h2;
                center_weight += 2.0 * a[0][0] / h2;
            } else {
                let b = a[0][1];
                let wd = b.abs();
                let w0 = (a[0][0] - wd).max(0.0);
                let w1 = (a[1][1] - wd).max(0.0);
                diffusion = (w0 * lap[0] + w1 * lap[1]) / h2;
                if wd > 0.0 {
                    let s = if b > 0.0 { 1 } else { -1 };
                    let diag = delta([1, s]) + delta([-1, -s]);
                    diffusion += wd * diag / h2;
                }
                center_weight += 2.0 * (w0 + w1 + wd) / h2;
            }
        }
        LocalTerms {
            hamiltonian,
            dissipation,
            diffusion,
            center_weight,
        }
    }

    #[inline(always)]
    fn capped(&self, q: Vector) -> Vector {
        if self.cap.is_finite() {
            let n2 = q[0] * q[0] + q[1] * q[1];
            if n2 > self.cap * self.cap {
                let s = self.cap / n2.sqrt();
                return [q[0] * s, q[1] * s];
            }
        }
        q
    }

    #[inline]
    fn lattice_terms(&self, v: &[f64], i: usize) -> LocalTerms {
        self.lattice_terms_at(v, i, self.grid.coords(i))
    }

    #[inline(always)]
    fn lattice_terms_at(&self, v: &[f64], i: usize, c: [usize; 2]) -> LocalTerms {
        let g = &self.grid;
        let vi = v[i];
        self.terms(i, |o| v[g.step_index(c, o)] - vi)
    }

    /// `F_i(v)` for the discount `delta`.
    #[inline]
    pub fn residual_at(&self, v: &[f64], i: usize, delta: f64) -> f64 {
        let t = self.lattice_terms(v, i);
        delta * v[i] - t.diffusion + t.hamiltonian - t.dissipation
    }

    /// `F(v)` over the lattice.
    pub fn residual(&self, exec: Exec, v: &[f64], delta: f64, out: &mut [f64]) {
        par::fill_indexed(exec, out, |i| self.residual_at(v, i, delta));
    }

    /// One explicit pseudo-time step `out = v − τ F(v)`.
    pub fn pseudo_step(&self, exec: Exec, v: &[f64], delta: f64, tau: f64, out: &mut [f64]) {
        par::fill_indexed(exec, out, |i| v[i] - tau * self.residual_at(v, i, delta));
    }

    /// One Gauss-Seidel sweep in the ordering `order` (bit `k` reverses axis `k`).
    pub fn sweep(&self, v: &mut [f64], delta: f64, order: usize) {
        self.sweep_rhs(v, delta, &[], order)
    }

    /// Gauss-Seidel sweep for `F(v) = rhs`; an empty `rhs` means zero.
    pub fn sweep_rhs(&self, v: &mut [f64], delta: f64, rhs: &[f64], order: usize) {
        let n = self.grid.points_per_axis();
        let idx = |k: usize, rev: bool| if rev { n - 1 - k } else { k };
        if self.grid.dim() == 1 {
            for k in 0..n {
                let i = idx(k, order & 1 == 1);
                self.relax(v, i, [i, 0], delta, rhs);
            }
        } else {
            for a in 0..n {
                let i0 = idx(a, order & 1 == 1);
                for b in 0..n {
                    let i1 = idx(b, order & 2 == 2);
                    self.relax(v, i0 * n + i1, [i0, i1], delta, rhs);
                }
            }
        }
    }

    #[inline]
    fn relax(&self, v: &mut [f64], i: usize, c: [usize; 2], delta: f64, rhs: &[f64]) {
        let t = self.lattice_terms_at(v, i, c);
        let mut f = delta * v[i] - t.diffusion + t.hamiltonian - t.dissipation;
        if !rhs.is_empty() {
            f -= rhs[i];
        }
        v[i] -= f / (delta + t.center_weight);
    }

    /// Maximum `|∂H/∂p_i|` over the lattice at the centered gradient of `v`.
    pub fn max_slope(&self, v: &[f64]) -> f64 {
        let g = &self.grid;
        let h = g.spacing();
        (0..g.len())
            .map(|i| {
                let mut q = self.p;
                for axis in 0..g.dim() {
                    let up = v[g.neighbor(i, axis, 1)];
                    let dn = v[g.neighbor(i, axis, -1)];
                    q[axis] += (up - dn) / (2.0 * h);
                }
                let s = self.ham.grad_p_with(q, self.hvals[i]);
                s[0].abs().max(s[1].abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Largest Euclidean norm of the forward-difference gradient.
pub fn lipschitz_estimate(grid: &GridSpec, v: &[f64]) -> f64 {
    let h = grid.spacing();
    (0..grid.len())
        .map(|i| {
            let mut s = 0.0;
            for axis in 0..grid.dim() {
                let d = (v[grid.neighbor(i, axis, 1)] - v[i]) / h;
                s += d * d;
            }
            s.sqrt()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_field, EnvironmentSpec};
    use crate::models::{DiffusionKind, HamiltonianKind};

    #[test]
    fn stability_bound_is_enforced() {
        let g = GridSpec::new(1, 1.0, 1.0 / 64.0).unwrap();
        let p = SchemeParams::new(1.0, 1.0, 1e-9, 10).unwrap();
        assert!(p.check_stability(0.1, &g, 0.0).is_err());
        let ok = SchemeParams::new(1.0, 1.0 / (0.1 + 128.0), 1e-9, 10).unwrap();
        assert!(ok.check_stability(0.1, &g, 0.0).is_ok());
        assert!(SchemeParams::new(1.0, 0.1, 0.0, 10).is_err());
        assert!(SchemeParams::new(1.0, 0.1, 1e-9, 0).is_err());
    }

    #[test]
    fn affine_fields_have_constant_residual() {
        let g = GridSpec::new(2, 1.0, 1.0 / 16.0).unwrap();
        let f = sample_field(&EnvironmentSpec::constant(2.0), &g).unwrap();
        let ham = HamiltonianModel::new(HamiltonianKind::Eikonal, f.clone()).unwrap();
        let diff = DiffusionModel::new(DiffusionKind::Isotropic, f, 0.0).unwrap();
        let cfg = SchemeConfig::default();
        let params = cfg.resolve(&ham, &diff, [1.0, 0.0], 0.1, &g).unwrap();
        let op = Operator::new(&ham, &diff, [1.0, 0.0], &params);
        let v = vec![-20.0; g.len()];
        let mut r = vec![0.0; g.len()];
        op.residual(Exec::Sequential, &v, 0.1, &mut r);
        assert!(r.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn diagonal_split_reproduces_mixed_derivative() {
        // v = x y has v_xy = 1, so tr(A D²v) = 2 a12 for any A
        let g = GridSpec::new(2, 1.0, 1.0 / 16.0).unwrap();
        let f = sample_field(&EnvironmentSpec::constant(1.0), &g).unwrap();
        let ham = HamiltonianModel::new(HamiltonianKind::QuadraticPotential, f.clone()).unwrap();
        let diff = DiffusionModel::new(DiffusionKind::CurvatureProjection, f, 0.0).unwrap();
        let params = SchemeConfig::default()
            .resolve(&ham, &diff, [1.0, 1.0], 0.1, &g)
            .unwrap();
        // p along (1, 1) gives A = ½[[1, −1], [−1, 1]], diagonally dominant
        let op = Operator::new(&ham, &diff, [1.0, 1.0], &params);
        let h = g.spacing();
        let t = op.terms(0, |o| (o[0] as f64 * h) * (o[1] as f64 * h));
        assert!((t.diffusion - 2.0 * -0.5).abs() < 1e-12);
    }
}
