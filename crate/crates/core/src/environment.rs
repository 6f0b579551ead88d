//! Seeded stationary random environments on periodic boxes.
//!
//! Each family is an analytic formula evaluated at arbitrary points, so a
//! translation of the environment is realized exactly by shifting the
//! argument. Stationarity comes from a uniform random global offset drawn per
//! seed; the offset and all other random draws come from a ChaCha8 stream
//! seeded with the spec's seed.

use std::collections::HashSet;
use std::f64::consts::{PI, TAU};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Vector};
use crate::par::{self, Exec};

/// `base + Σ a_k sin(2π k_k·(x + φ))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigParams {
    pub base: f64,
    #[serde(default)]
    pub amplitudes: Vec<f64>,
    #[serde(default)]
    pub frequencies: Vec<f64>,
    /// Wave-vector angles in radians (2D only). Defaults to `kπ/M` for mode `k`
    /// of `M`.
    #[serde(default)]
    pub angles: Vec<f64>,
}

/// `floor + height · Σ_j b(|x − c_j| / radius)` with Poisson-many uniform centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpParams {
    pub floor: f64,
    pub height: f64,
    /// Expected number of bumps per unit volume.
    pub density: f64,
    pub radius: f64,
}

/// Unit cells valued `low` or `high`, box-averaged over width `smoothing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckerParams {
    pub low: f64,
    pub high: f64,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
}

fn default_smoothing() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    RandomPhaseTrig(TrigParams),
    PoissonBumps(BumpParams),
    RandomCheckerboard(CheckerParams),
}

impl Family {
    /// Config key holding the family's lower bound.
    pub fn floor_key(&self) -> &'static str {
        match self {
            Family::RandomPhaseTrig(_) => "base",
            Family::PoissonBumps(_) => "floor",
            Family::RandomCheckerboard(_) => "low",
        }
    }

    pub fn constant(value: f64) -> Self {
        Family::RandomPhaseTrig(TrigParams {
            base: value,
            amplitudes: vec![],
            frequencies: vec![],
            angles: vec![],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub family: Family,
    #[serde(default)]
    pub seed: u64,
    /// Draw a random orientation per seed before sampling.
    #[serde(default)]
    pub isotropize: bool,
}

impl EnvironmentSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        EnvironmentSpec {
            family,
            seed,
            isotropize: false,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(Family::constant(value), 0)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        EnvironmentSpec {
            seed,
            ..self.clone()
        }
    }

    pub fn isotropized(mut self, on: bool) -> Self {
        self.isotropize = on;
        self
    }

    fn validate(&self, grid: &GridSpec) -> Result<()> {
        let finite = |key: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(key, "must be finite"))
            }
        };
        match &self.family {
            Family::RandomPhaseTrig(t) => {
                finite("base", t.base)?;
                if t.amplitudes.len() != t.frequencies.len() {
                    return Err(Error::param(
                        "frequencies",
                        format!(
                            "expected {} entries to match amplitudes, got {}",
                            t.amplitudes.len(),
                            t.frequencies.len()
                        ),
                    ));
                }
                if !t.angles.is_empty() && t.angles.len() != t.amplitudes.len() {
                    return Err(Error::param("angles", "length must match amplitudes"));
                }
                for &a in &t.amplitudes {
                    finite("amplitudes", a)?;
                }
                for &f in &t.frequencies {
                    if !(f.is_finite() && f >= 0.0) {
                        return Err(Error::param("frequencies", "must be finite and >= 0"));
                    }
                }
            }
            Family::PoissonBumps(b) => {
                finite("floor", b.floor)?;
                if !(b.height.is_finite() && b.height >= 0.0) {
                    return Err(Error::param("height", "must be >= 0"));
                }
                if !(b.density.is_finite() && b.density >= 0.0) {
                    return Err(Error::param("density", "must be >= 0"));
                }
                if !(b.radius > 0.0 && b.radius < grid.extent() / 2.0) {
                    return Err(Error::param("radius", "must lie in (0, extent/2)"));
                }
            }
            Family::RandomCheckerboard(c) => {
                finite("low", c.low)?;
                finite("high", c.high)?;
                if c.high < c.low {
                    return Err(Error::param("high", "must be >= low"));
                }
                if !(c.smoothing > 0.0 && c.smoothing <= 1.0) {
                    return Err(Error::param("smoothing", "must lie in (0, 1]"));
                }
                let l = grid.extent();
                if (l - l.round()).abs() > 1e-9 {
                    return Err(Error::param(
                        "extent",
                        "checkerboard cells need an integer box extent",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Signed permutation of the axes (an element of the square's symmetry group).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Orientation {
    swap: bool,
    sign: [f64; 2],
}

impl Orientation {
    const IDENTITY: Orientation = Orientation {
        swap: false,
        sign: [1.0, 1.0],
    };

    fn from_index(k: u32) -> Self {
        Orientation {
            swap: k & 4 != 0,
            sign: [
                if k & 1 != 0 { -1.0 } else { 1.0 },
                if k & 2 != 0 { -1.0 } else { 1.0 },
            ],
        }
    }

    fn apply(&self, x: Vector) -> Vector {
        let y = if self.swap { [x[1], x[0]] } else { x };
        [self.sign[0] * y[0], self.sign[1] * y[1]]
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Realization {
    Trig {
        base: f64,
        /// `(amplitude, wave vector)`; wave vectors lie on the `(1/L)ℤ^d` lattice.
        modes: Vec<(f64, Vector)>,
    },
    Bumps {
        floor: f64,
        height: f64,
        radius: f64,
        centers: Vec<Vector>,
    },
    Checker {
        low: f64,
        high: f64,
        smoothing: f64,
        cells_per_axis: usize,
        high_cells: Vec<bool>,
        orientation: Orientation,
    },
}

/// A seeded realization of a scalar field, sampled on a periodic lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    grid: GridSpec,
    values: Vec<f64>,
    shift: Vector,
    spec: EnvironmentSpec,
    offset: Vector,
    realization: Realization,
    floor: f64,
    cap: f64,
    lipschitz: f64,
}

impl FieldSample {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shift(&self) -> Vector {
        self.shift
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    /// Declared lower bound `m` of the family.
    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Declared upper bound `M` of the family.
    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// Declared Lipschitz constant of the realization.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Field value at an arbitrary point; wraps modulo the box.
    pub fn value_at(&self, x: Vector) -> f64 {
        let l = self.grid.extent();
        let d = self.grid.dim();
        let mut y = [0.0; 2];
        for a in 0..d {
            y[a] = (x[a] + self.shift[a]).rem_euclid(l);
        }
        self.eval_unshifted(y)
    }

    fn eval_unshifted(&self, x: Vector) -> f64 {
        let d = self.grid.dim();
        let l = self.grid.extent();
        match &self.realization {
            Realization::Trig { base, modes } => {
                let y = [x[0] + self.offset[0], x[1] + self.offset[1]];
                let mut v = *base;
                for (amp, k) in modes {
                    let phase = k[0] * y[0] + if d == 2 { k[1] * y[1] } else { 0.0 };
                    // reduce before scaling by 2π to keep the argument small
                    v += amp * (TAU * (phase - phase.floor())).sin();
                }
                v
            }
            Realization::Bumps {
                floor,
                height,
                radius,
                centers,
            } => {
                let mut s = 0.0;
                for c in centers {
                    let mut r2 = 0.0;
                    for a in 0..d {
                        let mut dx = (x[a] - c[a]).rem_euclid(l);
                        if dx > l / 2.0 {
                            dx -= l;
                        }
                        r2 += dx * dx;
                    }
                    s += bump(r2.sqrt() / radius);
                }
                floor + height * s
            }
            Realization::Checker {
                low,
                high,
                smoothing,
                cells_per_axis,
                high_cells,
                orientation,
            } => {
                let o = orientation.apply(x);
                let y = [o[0] + self.offset[0], o[1] + self.offset[1]];
                let n = *cells_per_axis;
                let w = *smoothing;
                // box average of the cell indicator over [y - w/2, y + w/2]^d
                let axis_weights = |t: f64| -> [(i64, f64); 2] {
                    let lo = t - w / 2.0;
                    let hi = t + w / 2.0;
                    let c0 = lo.floor();
                    let split = (c0 + 1.0).min(hi);
                    let f0 = (split - lo) / w;
                    [(c0 as i64, f0), (c0 as i64 + 1, 1.0 - f0)]
                };
                let wx = axis_weights(y[0]);
                let mut frac = 0.0;
                if d == 1 {
                    for (c, f) in wx {
                        if high_cells[c.rem_euclid(n as i64) as usize] {
                            frac += f;
                        }
                    }
                } else {
                    let wy = axis_weights(y[1]);
                    for (cx, fx) in wx {
                        for (cy, fy) in wy {
                            let i = cx.rem_euclid(n as i64) as usize;
                            let j = cy.rem_euclid(n as i64) as usize;
                            if high_cells[i * n + j] {
                                frac += fx * fy;
                            }
                        }
                    }
                }
                low + (high - low) * frac
            }
        }
    }

    /// Require `floor > min` (strict) or `floor >= min`, naming the family key on failure.
    pub fn require_floor(&self, min: f64, strict: bool, role: &str) -> Result<()> {
        let ok = if strict {
            self.floor > min
        } else {
            self.floor >= min
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(
                self.spec.family.floor_key(),
                format!(
                    "{role} field needs a lower bound {} {min}, declared bound is {}",
                    if strict { ">" } else { ">=" },
                    self.floor
                ),
            ))
        }
    }

    /// Write `index,x0[,x1],value` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write_lattice_csv(&mut w, &self.grid, &self.values, "value")
    }
}

/// Shared CSV writer for lattice arrays: `index,x0[,x1],<name>`.
pub fn write_lattice_csv<W: Write>(
    w: &mut W,
    grid: &GridSpec,
    values: &[f64],
    name: &str,
) -> std::io::Result<()> {
    if grid.dim() == 1 {
        writeln!(w, "index,x0,{name}")?;
    } else {
        writeln!(w, "index,x0,x1,{name}")?;
    }
    for (i, v) in values.iter().enumerate() {
        let x = grid.position(i);
        if grid.dim() == 1 {
            writeln!(w, "{i},{},{v:e}", x[0])?;
        } else {
            writeln!(w, "{i},{},{},{v:e}", x[0], x[1])?;
        }
    }
    Ok(())
}

/// Smooth compactly supported profile with `bump(0) = 1`, zero for `r >= 1`.
fn bump(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    }
}

// max |d/dr bump(r)| on [0, 1), evaluated numerically once
fn bump_slope_max() -> f64 {
    (1..2000)
        .map(|i| {
            let r = i as f64 / 2000.0;
            let e = 1e-6;
            ((bump(r + e) - bump(r - e)) / (2.0 * e)).abs()
        })
        .fold(0.0, f64::max)
}

fn cell_hash(seed: u64, cell: u64) -> u64 {
    // splitmix64 finalizer over the mixed pair
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(cell.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sample the field described by `spec` on `grid`.
pub fn sample_field(spec: &EnvironmentSpec, grid: &GridSpec) -> Result<FieldSample> {
    spec.validate(grid)?;
    let d = grid.dim();
    let l = grid.extent();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut offset = [0.0; 2];
    for o in offset.iter_mut().take(d) {
        *o = rng.random::<f64>() * l;
    }

    let (realization, floor, cap, lipschitz) = match &spec.family {
        Family::RandomPhaseTrig(t) => {
            let rotation = if spec.isotropize {
                if d == 2 {
                    rng.random::<f64>() * TAU
                } else if rng.random::<bool>() {
                    PI
                } else {
                    0.0
                }
            } else {
                0.0
            };
            let m = t.amplitudes.len();
            let mut modes = Vec::with_capacity(m);
            let mut lip = 0.0;
            for (k, (&amp, &freq)) in t.amplitudes.iter().zip(&t.frequencies).enumerate() {
                let angle = t.angles.get(k).copied().unwrap_or(k as f64 * PI / m as f64);
                let wave = if d == 1 {
                    let s = if rotation == PI { -1.0 } else { 1.0 };
                    [s * (freq * l).round() / l, 0.0]
                } else {
                    let a = angle + rotation;
                    [
                        (freq * l * a.cos()).round() / l,
                        (freq * l * a.sin()).round() / l,
                    ]
                };
                lip += TAU * amp.abs() * wave[0].hypot(wave[1]);
                modes.push((amp, wave));
            }
            let spread: f64 = t.amplitudes.iter().map(|a| a.abs()).sum();
            (
                Realization::Trig {
                    base: t.base,
                    modes,
                },
                t.base - spread,
                t.base + spread,
                lip,
            )
        }
        Family::PoissonBumps(b) => {
            let mean = b.density * l.powi(d as i32);
            let count = if mean > 0.0 {
                let poisson = Poisson::new(mean)
                    .map_err(|e| Error::param("density", e.to_string()))?;
                poisson.sample(&mut rng) as usize
            } else {
                0
            };
            let centers: Vec<Vector> = (0..count)
                .map(|_| {
                    let mut c = [0.0; 2];
                    for x in c.iter_mut().take(d) {
                        *x = rng.random::<f64>() * l;
                    }
                    c
                })
                .collect();
            let lip = b.height * count as f64 * bump_slope_max() / b.radius;
            (
                Realization::Bumps {
                    floor: b.floor,
                    height: b.height,
                    radius: b.radius,
                    centers: centers.clone(),
                },
                b.floor,
                b.floor + b.height * count as f64,
                lip,
            )
        }
        Family::RandomCheckerboard(c) => {
            let orientation = if spec.isotropize {
                let k = if d == 2 {
                    rng.random_range(0..8u32)
                } else {
                    rng.random_range(0..2u32)
                };
                Orientation::from_index(k)
            } else {
                Orientation::IDENTITY
            };
            let n = l.round() as usize;
            let cells = n.pow(d as u32);
            let high_cells = (0..cells as u64)
                .map(|i| cell_hash(spec.seed, i) & 1 == 1)
                .collect();
            let lip = (c.high - c.low) * (d as f64).sqrt() / c.smoothing;
            (
                Realization::Checker {
                    low: c.low,
                    high: c.high,
                    smoothing: c.smoothing,
                    cells_per_axis: n,
                    high_cells,
                    orientation,
                },
                c.low,
                c.high,
                lip,
            )
        }
    };

    let mut sample = FieldSample {
        grid: *grid,
        values: vec![0.0; grid.len()],
        shift: [0.0; 2],
        spec: spec.clone(),
        offset,
        realization,
        floor,
        cap,
        lipschitz,
    };
    sample.resample();
    Ok(sample)
}

impl FieldSample {
    fn resample(&mut self) {
        let mut values = std::mem::take(&mut self.values);
        let this = &*self;
        par::fill_indexed(Exec::Sequential, &mut values, |i| {
            this.value_at(this.grid.position(i))
        });
        self.values = values;
    }
}

/// Translate the environment: the result satisfies `new(x) = old(x + z)`.
pub fn shift_field(sample: &FieldSample, z: Vector) -> FieldSample {
    let l = sample.grid.extent();
    let mut out = sample.clone();
    for a in 0..sample.grid.dim() {
        let s = (sample.shift[a] + z[a]).rem_euclid(l);
        // rem_euclid can return l itself for tiny negative inputs
        out.shift[a] = if s >= l { 0.0 } else { s };
    }
    out.resample();
    out
}

/// One realization per seed, in the given order.
pub fn ensemble(
    spec: &EnvironmentSpec,
    grid: &GridSpec,
    seeds: &[u64],
) -> Result<Vec<FieldSample>> {
    let mut seen = HashSet::new();
    for &s in seeds {
        if !seen.insert(s) {
            return Err(Error::param("seeds", format!("duplicate seed {s}")));
        }
    }
    par::map(Exec::available(), seeds, |&s| {
        sample_field(&spec.with_seed(s), grid)
    })
    .into_iter()
    .collect()
}
