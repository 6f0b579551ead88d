//! Full-approximation-scheme multigrid for the discounted lattice equations.
//!
//! Every level carries the same Lax-Friedrichs operator on a grid of twice
//! the spacing, with the field values injected from the finer level. The
//! smoother is the alternating-direction Gauss-Seidel relaxation of
//! `F(v) = f`; the coarsest level is relaxed to convergence with the exact
//! constant-mode correction `F(v + c) = F(v) + δc`.

use crate::grid::GridSpec;
use crate::models::{DiffusionModel, HamiltonianModel};
use crate::scheme::{Operator, SchemeParams};
use crate::Vector;

struct Level {
    grid: GridSpec,
    hvals: Vec<f64>,
    nuvals: Vec<f64>,
}

pub(crate) struct Hierarchy<'a> {
    ham: &'a HamiltonianModel,
    diff: &'a DiffusionModel,
    p: Vector,
    sigma: f64,
    gradient_epsilon: f64,
    cap: Option<f64>,
    delta: f64,
    levels: Vec<Level>,
}

const COARSEST_POINTS: usize = 8;
const PRE_SWEEPS: usize = 1;
const POST_SWEEPS: usize = 1;
const COARSE_CYCLES: usize = 400;
/// Residual reduction at which the coarsest level counts as solved.
const COARSE_REDUCTION: f64 = 1e-3;

impl<'a> Hierarchy<'a> {
    pub(crate) fn new(
        ham: &'a HamiltonianModel,
        diff: &'a DiffusionModel,
        p: Vector,
        delta: f64,
        params: &SchemeParams,
    ) -> Self {
        let grid = *ham.field().grid();
        let nuvals = if diff.is_zero() {
            Vec::new()
        } else {
            (0..grid.len()).map(|i| diff.coefficient_at(i)).collect()
        };
        let mut levels = vec![Level {
            grid,
            hvals: ham.field().values().to_vec(),
            nuvals,
        }];
        loop {
            let fine = levels.last().unwrap();
            let n = fine.grid.points_per_axis();
            if n % 2 != 0 || n / 2 < COARSEST_POINTS {
                break;
            }
            let coarse = GridSpec::new(
                fine.grid.dim(),
                fine.grid.extent(),
                fine.grid.spacing() * 2.0,
            )
            .expect("halving a valid grid stays valid");
            let inject = |src: &[f64]| -> Vec<f64> {
                if src.is_empty() {
                    return Vec::new();
                }
                (0..coarse.len())
                    .map(|i| {
                        let c = coarse.coords(i);
                        src[fine.grid.index([2 * c[0], 2 * c[1]])]
                    })
                    .collect()
            };
            let level = Level {
                grid: coarse,
                hvals: inject(&fine.hvals),
                nuvals: inject(&fine.nuvals),
            };
            levels.push(level);
        }
        Hierarchy {
            ham,
            diff,
            p,
            sigma: params.sigma,
            gradient_epsilon: params.gradient_epsilon,
            cap: params.momentum_cap,
            delta,
            levels,
        }
    }

    pub(crate) fn depth(&self) -> usize {
        self.levels.len()
    }

    fn operator(&self, l: usize) -> Operator<'_> {
        let lv = &self.levels[l];
        Operator::with_fields(
            lv.grid,
            self.ham,
            self.diff,
            &lv.hvals,
            lv.nuvals.clone(),
            self.p,
            self.sigma,
            self.gradient_epsilon,
        )
        .with_cap(self.cap)
    }

    /// One V-cycle for `F_0(v) = 0` on the finest level.
    pub(crate) fn v_cycle(&self, v: &mut [f64]) {
        let ops: Vec<Operator<'_>> = (0..self.depth()).map(|l| self.operator(l)).collect();
        let rhs = vec![0.0; v.len()];
        self.cycle(&ops, 0, v, &rhs);
    }

    fn cycle(&self, ops: &[Operator<'_>], l: usize, v: &mut [f64], rhs: &[f64]) {
        let op = &ops[l];
        let delta = self.delta;
        let cycle = 1usize << op.grid.dim();
        if l + 1 == ops.len() {
            let mut res = vec![0.0; v.len()];
            let r0 = shift_constant(op, v, rhs, delta, &mut res);
            for _ in 0..COARSE_CYCLES {
                for k in 0..cycle {
                    op.sweep_rhs(v, delta, rhs, k);
                }
                if shift_constant(op, v, rhs, delta, &mut res) <= COARSE_REDUCTION * r0 {
                    break;
                }
            }
            return;
        }
        for s in 0..PRE_SWEEPS {
            for k in 0..cycle {
                op.sweep_rhs(v, delta, rhs, (k + s) % cycle);
            }
        }
        let fine = op.grid;
        let coarse_op = &ops[l + 1];
        let coarse = coarse_op.grid;

        let mut res = vec![0.0; v.len()];
        for i in 0..fine.len() {
            res[i] = rhs[i] - op.residual_at(v, i, delta);
        }
        let vc0 = restrict_inject(&fine, &coarse, v);
        let rc = restrict_full_weighting(&fine, &coarse, &res);
        let mut rhs_c = vec![0.0; coarse.len()];
        for i in 0..coarse.len() {
            rhs_c[i] = coarse_op.residual_at(&vc0, i, delta) + rc[i];
        }
        let mut vc = vc0.clone();
        self.cycle(ops, l + 1, &mut vc, &rhs_c);
        let corr: Vec<f64> = vc.iter().zip(&vc0).map(|(a, b)| a - b).collect();
        prolong_add(&coarse, &fine, &corr, v);

        for s in 0..POST_SWEEPS {
            for k in 0..cycle {
                op.sweep_rhs(v, delta, rhs, (cycle - 1 - k + s) % cycle);
            }
        }
    }
}

/// Shift `v` by the constant that zeroes the mean of `F(v) − rhs`; returns
/// the sup of the shifted residual.
pub(crate) fn shift_constant(
    op: &Operator<'_>,
    v: &mut [f64],
    rhs: &[f64],
    delta: f64,
    scratch: &mut [f64],
) -> f64 {
    for i in 0..v.len() {
        scratch[i] = op.residual_at(v, i, delta) - rhs[i];
    }
    let c = -scratch.iter().sum::<f64>() / (v.len() as f64 * delta);
    v.iter_mut().for_each(|x| *x += c);
    scratch
        .iter()
        .fold(0.0, |m: f64, r| m.max((r + delta * c).abs()))
}

fn restrict_inject(fine: &GridSpec, coarse: &GridSpec, v: &[f64]) -> Vec<f64> {
    (0..coarse.len())
        .map(|i| {
            let c = coarse.coords(i);
            v[fine.index([2 * c[0], 2 * c[1]])]
        })
        .collect()
}

fn restrict_full_weighting(fine: &GridSpec, coarse: &GridSpec, r: &[f64]) -> Vec<f64> {
    let w = [0.25, 0.5, 0.25];
    (0..coarse.len())
        .map(|i| {
            let c = coarse.coords(i);
            let center = fine.index([2 * c[0], 2 * c[1]]);
            if fine.dim() == 1 {
                (0..3)
                    .map(|a| w[a] * r[fine.translate(center, [a as isize - 1, 0])])
                    .sum()
            } else {
                let mut s = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        s += w[a] * w[b] * r[fine.translate(center, [a as isize - 1, b as isize - 1])];
                    }
                }
                s
            }
        })
        .collect()
}

fn prolong_add(coarse: &GridSpec, fine: &GridSpec, corr: &[f64], v: &mut [f64]) {
    let nc = coarse.points_per_axis();
    let at = |a: usize, b: usize| corr[coarse.index([a % nc, b % nc])];
    for (i, x) in v.iter_mut().enumerate() {
        let c = fine.coords(i);
        let (a, ra) = (c[0] / 2, c[0] % 2);
        if fine.dim() == 1 {
            *x += if ra == 0 {
                at(a, 0)
            } else {
                0.5 * (at(a, 0) + at(a + 1, 0))
            };
        } else {
            let (b, rb) = (c[1] / 2, c[1] % 2);
            let row = |aa: usize| {
                if rb == 0 {
                    at(aa, b)
                } else {
                    0.5 * (at(aa, b) + at(aa, b + 1))
                }
            };
            *x += if ra == 0 {
                row(a)
            } else {
                0.5 * (row(a) + row(a + 1))
            };
        }
    }
}

/// Anderson mixing over the last `depth` iterates of a fixed-point map.
pub(crate) struct Anderson {
    depth: usize,
    prev_x: Option<Vec<f64>>,
    prev_f: Option<Vec<f64>>,
    /// Columns of `Δf` and `Δg`, oldest first.
    df: Vec<Vec<f64>>,
    dg: Vec<Vec<f64>>,
}

impl Anderson {
    pub(crate) fn new(depth: usize) -> Self {
        Anderson {
            depth,
            prev_x: None,
            prev_f: None,
            df: Vec::new(),
            dg: Vec::new(),
        }
    }

    /// Given the iterate `x` and its image `g = G(x)`, overwrite `g` with the
    /// mixed next iterate.
    pub(crate) fn mix(&mut self, x: &[f64], g: &mut [f64]) {
        let f: Vec<f64> = g.iter().zip(x).map(|(a, b)| a - b).collect();
        if let (Some(px), Some(pf)) = (&self.prev_x, &self.prev_f) {
            let dfk: Vec<f64> = f.iter().zip(pf).map(|(a, b)| a - b).collect();
            // Δg = Δf + Δx
            let dgk: Vec<f64> = dfk
                .iter()
                .zip(x.iter().zip(px))
                .map(|(d, (a, b))| d + (a - b))
                .collect();
            self.df.push(dfk);
            self.dg.push(dgk);
            if self.df.len() > self.depth {
                self.df.remove(0);
                self.dg.remove(0);
            }
        }
        self.prev_x = Some(x.to_vec());
        self.prev_f = Some(f.clone());
        if self.df.is_empty() {
            return;
        }
        if let Some(gamma) = least_squares(&self.df, &f) {
            for (k, gk) in gamma.iter().enumerate() {
                for (gi, d) in g.iter_mut().zip(&self.dg[k]) {
                    *gi -= gk * d;
                }
            }
        } else {
            self.df.clear();
            self.dg.clear();
        }
    }
}

/// `argmin_γ ‖f − Σ γ_k cols_k‖₂` by modified Gram-Schmidt; `None` when the
/// columns are numerically dependent.
fn least_squares(cols: &[Vec<f64>], f: &[f64]) -> Option<Vec<f64>> {
    let m = cols.len();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut r = vec![vec![0.0; m]; m];
    for (j, c) in cols.iter().enumerate() {
        let mut w = c.clone();
        for (i, qi) in q.iter().enumerate() {
            let d = dotv(qi, &w);
            r[i][j] = d;
            w.iter_mut().zip(qi).for_each(|(a, b)| *a -= d * b);
        }
        let n = dotv(&w, &w).sqrt();
        let scale = dotv(c, c).sqrt();
        if !(n > 1e-10 * scale) || n == 0.0 {
            return None;
        }
        r[j][j] = n;
        w.iter_mut().for_each(|a| *a /= n);
        q.push(w);
    }
    let rhs: Vec<f64> = q.iter().map(|qi| dotv(qi, f)).collect();
    let mut gamma = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|k| r[i][k] * gamma[k]).sum();
        gamma[i] = (rhs[i] - s) / r[i][i];
    }
    Some(gamma)
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
