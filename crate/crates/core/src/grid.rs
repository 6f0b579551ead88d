//! Periodic lattices in one and two dimensions.
//!
//! Arrays over the lattice are stored flat with the first axis outermost:
//! `idx = i0 * N + i1` in two dimensions, `idx = i0` in one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point or momentum in at most two dimensions. Unused trailing
/// components are zero.
pub type Vector = [f64; 2];

pub const MIN_POINTS: usize = 8;

/// Periodic box `[0, L)^dim` discretized with spacing `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    extent: f64,
    spacing: f64,
    points_per_axis: usize,
}

impl GridSpec {
    pub fn new(dim: usize, extent: f64, spacing: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::param("dim", format!("must be 1 or 2, got {dim}")));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::param("extent", "must be positive and finite"));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::param("spacing", "must be positive and finite"));
        }
        let n = (extent / spacing).round();
        if n < MIN_POINTS as f64 {
            return Err(Error::param(
                "spacing",
                format!("extent/spacing = {n} is below the minimum of {MIN_POINTS} points"),
            ));
        }
        let points_per_axis = n as usize;
        if ((spacing * n - extent) / extent).abs() > 1e-12 {
            return Err(Error::param(
                "spacing",
                format!("extent {extent} is not an integer multiple of spacing {spacing}"),
            ));
        }
        Ok(GridSpec {
            dim,
            extent,
            spacing: extent / n,
            points_per_axis,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Multi-index of a flat index.
    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 2] {
        let n = self.points_per_axis;
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / n, idx % n]
        }
    }

    #[inline]
    pub fn index(&self, c: [usize; 2]) -> usize {
        if self.dim == 1 {
            c[0]
        } else {
            c[0] * self.points_per_axis + c[1]
        }
    }

    /// Physical position of a lattice point.
    #[inline]
    pub fn position(&self, idx: usize) -> Vector {
        let c = self.coords(idx);
        let h = self.spacing;
        if self.dim == 1 {
            [c[0] as f64 * h, 0.0]
        } else {
            [c[0] as f64 * h, c[1] as f64 * h]
        }
    }

    /// Signed periodic displacement from the origin, components in `[-L/2, L/2)`.
    pub fn displacement(&self, idx: usize) -> Vector {
        let c = self.coords(idx);
        let n = self.points_per_axis as i64;
        let h = self.spacing;
        let wrap = |i: usize| {
            let i = i as i64;
            let s = if 2 * i >= n { i - n } else { i };
            s as f64 * h
        };
        if self.dim == 1 {
            [wrap(c[0]), 0.0]
        } else {
            [wrap(c[0]), wrap(c[1])]
        }
    }

    /// Flat index of the neighbour `axis`-wards by `step` (±1) with wrap.
    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, step: isize) -> usize {
        let mut c = self.coords(idx);
        let n = self.points_per_axis as isize;
        c[axis] = ((c[axis] as isize + step).rem_euclid(n)) as usize;
        self.index(c)
    }

    /// Flat index of the point at multi-index `c` moved by `o ∈ {-1, 0, 1}^2`.
    #[inline(always)]
    pub fn step_index(&self, c: [usize; 2], o: [isize; 2]) -> usize {
        let n = self.points_per_axis;
        let wrap = |x: usize, d: isize| match d {
            1 => {
                if x + 1 == n {
                    0
                } else {
                    x + 1
                }
            }
            -1 => {
                if x == 0 {
                    n - 1
                } else {
                    x - 1
                }
            }
            _ => x,
        };
        if self.dim == 1 {
            wrap(c[0], o[0])
        } else {
            wrap(c[0], o[0]) * n + wrap(c[1], o[1])
        }
    }

    /// Flat index after a lattice translation by `k` cells per axis.
    pub fn translate(&self, idx: usize, k: [isize; 2]) -> usize {
        let c = self.coords(idx);
        let n = self.points_per_axis as isize;
        let mut out = [0usize; 2];
        for a in 0..self.dim {
            out[a] = (c[a] as isize + k[a]).rem_euclid(n) as usize;
        }
        self.index(out)
    }

    /// Nearest lattice index to a physical point (with periodic wrap).
    pub fn nearest_index(&self, x: Vector) -> usize {
        let n = self.points_per_axis as i64;
        let mut c = [0usize; 2];
        for a in 0..self.dim {
            let k = (x[a] / self.spacing).round() as i64;
            c[a] = k.rem_euclid(n) as usize;
        }
        self.index(c)
    }

    /// Sup norm of a displacement over the active axes.
    pub fn sup_norm(&self, v: Vector) -> f64 {
        (0..self.dim).map(|a| v[a].abs()).fold(0.0, f64::max)
    }
}

pub fn dot(a: Vector, b: Vector) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm(a: Vector) -> f64 {
    (a[0] * a[0] + a[1] * a[1]).sqrt()
}

pub fn scale(a: Vector, s: f64) -> Vector {
    [a[0] * s, a[1] * s]
}

pub fn add(a: Vector, b: Vector) -> Vector {
    [a[0] + b[0], a[1] + b[1]]
}

/// Vector from a slice of length 1 or 2.
pub fn vector_from_slice(v: &[f64]) -> Vector {
    match v {
        [a] => [*a, 0.0],
        [a, b, ..] => [*a, *b],
        [] => [0.0, 0.0],
    }
}
