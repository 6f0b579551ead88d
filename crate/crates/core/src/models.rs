//! Hamiltonian and diffusion families.
//!
//! Hamiltonians:
//! - `Eikonal`: `H = c(x)|p|`, convex, 1-homogeneous, coercive when `c ≥ m > 0`.
//! - `QuadraticPotential`: `H = |p|² − V(x)`, convex, coercive, `V ≥ 0`.
//! - `DoubleWell`: `H = (|p|² − 1)² − V(x)`, coercive but not convex.
//!
//! Diffusions: `Zero`, `Isotropic` (`ν(x) I`) and `CurvatureProjection`
//! (`ν(x)(I − p̂⊗p̂)`, undefined at `p = 0`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environment::FieldSample;
use crate::error::{Error, Result};
use crate::grid::{norm, Vector};

pub type Matrix = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianKind {
    Eikonal,
    QuadraticPotential,
    DoubleWell,
}

#[derive(Debug, Clone)]
pub struct HamiltonianModel {
    kind: HamiltonianKind,
    field: FieldSample,
}

impl HamiltonianModel {
    pub fn new(kind: HamiltonianKind, field: FieldSample) -> Result<Self> {
        match kind {
            HamiltonianKind::Eikonal => field.require_floor(0.0, true, "speed")?,
            _ => field.require_floor(0.0, false, "potential")?,
        }
        Ok(HamiltonianModel { kind, field })
    }

    pub fn kind(&self) -> HamiltonianKind {
        self.kind
    }

    pub fn field(&self) -> &FieldSample {
        &self.field
    }

    pub fn dim(&self) -> usize {
        self.field.grid().dim()
    }

    pub fn convex_in_p(&self) -> bool {
        !matches!(self.kind, HamiltonianKind::DoubleWell)
    }

    pub fn homogeneity_degree(&self) -> Option<f64> {
        match self.kind {
            HamiltonianKind::Eikonal => Some(1.0),
            _ => None,
        }
    }

    /// Whether `|∂H/∂p|` is bounded independently of `p`.
    pub fn globally_lipschitz(&self) -> bool {
        self.kind == HamiltonianKind::Eikonal
    }

    pub fn coercive(&self) -> bool {
        true
    }

    /// `H(p, x)` with the field evaluated analytically at `x`.
    pub fn eval(&self, p: Vector, x: Vector) -> f64 {
        self.eval_with(p, self.field.value_at(x))
    }

    /// `H(p, ·)` at the lattice point `idx`.
    #[inline]
    pub fn eval_at(&self, p: Vector, idx: usize) -> f64 {
        self.eval_with(p, self.field.values()[idx])
    }

    /// `H` given the local field value (speed or potential).
    #[inline]
    pub fn eval_with(&self, p: Vector, f: f64) -> f64 {
        match self.kind {
            HamiltonianKind::Eikonal => f * norm(p),
            HamiltonianKind::QuadraticPotential => p[0] * p[0] + p[1] * p[1] - f,
            HamiltonianKind::DoubleWell => {
                let s = p[0] * p[0] + p[1] * p[1] - 1.0;
                s * s - f
            }
        }
    }

    /// A selection of `∂H/∂p` (zero at the eikonal kink).
    pub fn grad_p_with(&self, p: Vector, f: f64) -> Vector {
        match self.kind {
            HamiltonianKind::Eikonal => {
                let n = norm(p);
                if n == 0.0 {
                    [0.0, 0.0]
                } else {
                    [f * p[0] / n, f * p[1] / n]
                }
            }
            HamiltonianKind::QuadraticPotential => [2.0 * p[0], 2.0 * p[1]],
            HamiltonianKind::DoubleWell => {
                let s = 4.0 * (p[0] * p[0] + p[1] * p[1] - 1.0);
                [s * p[0], s * p[1]]
            }
        }
    }

    /// `max_x |H(p, x)|` over the lattice.
    pub fn sup_abs_on_lattice(&self, p: Vector) -> f64 {
        self.field
            .values()
            .iter()
            .map(|&f| self.eval_with(p, f).abs())
            .fold(0.0, f64::max)
    }

    /// Radius `R` with `{q : min_x H(q, x) ≤ level} ⊂ {|q| ≤ R}`.
    pub fn momentum_bound(&self, level: f64) -> f64 {
        let fmin = self.field.min_value();
        let fmax = self.field.max_value();
        match self.kind {
            HamiltonianKind::Eikonal => level.max(0.0) / fmin,
            HamiltonianKind::QuadraticPotential => (level + fmax).max(0.0).sqrt(),
            HamiltonianKind::DoubleWell => (1.0 + (level + fmax).max(0.0).sqrt()).sqrt(),
        }
    }

    /// `max_{|q| ≤ r, x} |∂H/∂q_i|` over the lattice field values.
    pub fn slope_bound(&self, r: f64) -> f64 {
        let fmax = self.field.max_value();
        match self.kind {
            HamiltonianKind::Eikonal => fmax,
            HamiltonianKind::QuadraticPotential => 2.0 * r,
            HamiltonianKind::DoubleWell => {
                // 4|s² − 1|s peaks at s = 1/√3 inside the unit ball
                let inner = if r >= 1.0 / 3f64.sqrt() {
                    8.0 / (3.0 * 3f64.sqrt())
                } else {
                    4.0 * (1.0 - r * r) * r
                };
                inner.max(4.0 * (r * r - 1.0).max(0.0) * r)
            }
        }
    }

    /// `(α, C)` with `H(p, x) ≥ α|p| − C` and the radius beyond which
    /// `s ↦ H(s e, x)` is nondecreasing.
    pub fn coercivity_constants(&self) -> (f64, f64, f64) {
        let vmax = self.field.cap().max(self.field.max_value());
        match self.kind {
            HamiltonianKind::Eikonal => (self.field.floor(), 0.0, 0.0),
            HamiltonianKind::QuadraticPotential => (1.0, vmax + 0.25, 0.0),
            // min_s (s² − 1)² − s ≈ −1.07
            HamiltonianKind::DoubleWell => (1.0, vmax + 1.25, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionKind {
    Zero,
    Isotropic,
    CurvatureProjection,
}

#[derive(Debug, Clone)]
pub struct DiffusionModel {
    kind: DiffusionKind,
    field: Option<FieldSample>,
    nu_min: f64,
    dim: usize,
}

impl DiffusionModel {
    pub fn zero(dim: usize) -> Self {
        DiffusionModel {
            kind: DiffusionKind::Zero,
            field: None,
            nu_min: 0.0,
            dim,
        }
    }

    /// `ν(x) = max(field(x), nu_min)`.
    pub fn new(kind: DiffusionKind, field: FieldSample, nu_min: f64) -> Result<Self> {
        if !(nu_min.is_finite() && nu_min >= 0.0) {
            return Err(Error::param("nu_min", "must be >= 0"));
        }
        let dim = field.grid().dim();
        if kind == DiffusionKind::Zero {
            return Ok(Self::zero(dim));
        }
        field.require_floor(0.0, false, "viscosity")?;
        Ok(DiffusionModel {
            kind,
            field: Some(field),
            nu_min,
            dim,
        })
    }

    pub fn kind(&self) -> DiffusionKind {
        self.kind
    }

    pub fn field(&self) -> Option<&FieldSample> {
        self.field.as_ref()
    }

    pub fn is_zero(&self) -> bool {
        self.kind == DiffusionKind::Zero
    }

    pub fn is_p_independent(&self) -> bool {
        self.kind != DiffusionKind::CurvatureProjection
    }

    #[inline]
    pub fn coefficient_at(&self, idx: usize) -> f64 {
        match &self.field {
            Some(f) => f.values()[idx].max(self.nu_min),
            None => 0.0,
        }
    }

    pub fn coefficient(&self, x: Vector) -> f64 {
        match &self.field {
            Some(f) => f.value_at(x).max(self.nu_min),
            None => 0.0,
        }
    }

    /// Largest `ν` on the lattice.
    pub fn nu_max(&self) -> f64 {
        match &self.field {
            Some(f) => f.max_value().max(self.nu_min),
            None => 0.0,
        }
    }

    /// `A(p, x)`; errors at `p = 0` for the curvature family.
    pub fn eval(&self, p: Vector, x: Vector) -> Result<Matrix> {
        if self.kind == DiffusionKind::CurvatureProjection && norm(p) == 0.0 {
            return Err(Error::ZeroGradient);
        }
        Ok(self.matrix_with(p, self.coefficient(x), 0.0))
    }

    /// `A` from a local coefficient. Below `eps` in `|p|` the curvature family
    /// degenerates to the zero matrix.
    #[inline]
    pub fn matrix_with(&self, p: Vector, nu: f64, eps: f64) -> Matrix {
        match self.kind {
            DiffusionKind::Zero => [[0.0; 2]; 2],
            DiffusionKind::Isotropic => {
                if self.dim == 1 {
                    [[nu, 0.0], [0.0, 0.0]]
                } else {
                    [[nu, 0.0], [0.0, nu]]
                }
            }
            DiffusionKind::CurvatureProjection => {
                let n = norm(p);
                if self.dim == 1 || n <= eps || n == 0.0 {
                    return [[0.0; 2]; 2];
                }
                let (a, b) = (p[0] / n, p[1] / n);
                [[nu * b * b, -nu * a * b], [-nu * a * b, nu * a * a]]
            }
        }
    }
}

/// Result of one sampled structural property.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub name: &'static str,
    /// Whether the model's flags claim the property.
    pub declared: bool,
    /// Whether every sample satisfied it.
    pub holds: bool,
    pub max_violation: f64,
    pub witness: Option<String>,
}

impl PropertyCheck {
    /// A declared property must hold; undeclared ones are informational.
    pub fn consistent(&self) -> bool {
        !self.declared || self.holds
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub samples: usize,
    pub checks: Vec<PropertyCheck>,
}

impl StructureReport {
    pub fn passes(&self) -> bool {
        self.checks.iter().all(PropertyCheck::consistent)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Tracker {
    name: &'static str,
    declared: bool,
    worst: f64,
    witness: Option<String>,
}

impl Tracker {
    fn new(name: &'static str, declared: bool) -> Self {
        Tracker {
            name,
            declared,
            worst: 0.0,
            witness: None,
        }
    }

    fn record(&mut self, violation: f64, witness: impl FnOnce() -> String) {
        if violation > self.worst {
            self.worst = violation;
            self.witness = Some(witness());
        }
    }

    fn finish(self) -> PropertyCheck {
        PropertyCheck {
            name: self.name,
            declared: self.declared,
            holds: self.worst == 0.0,
            max_violation: self.worst,
            witness: self.witness,
        }
    }
}

/// Sample `(p, x, λ)` triples and test the model's declared flags.
pub fn check_structure(model: &HamiltonianModel, samples: usize, seed: u64) -> StructureReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.dim();
    let l = model.field().grid().extent();
    let draw_vec = |rng: &mut ChaCha8Rng, r: f64| -> Vector {
        let mut v = [0.0; 2];
        for c in v.iter_mut().take(d) {
            *c = rng.random_range(-r..r);
        }
        v
    };
    let draw_x = |rng: &mut ChaCha8Rng| -> Vector {
        let mut v = [0.0; 2];
        for c in v.iter_mut().take(d) {
            *c = rng.random::<f64>() * l;
        }
        v
    };
    let rel = |a: f64, b: f64| 1e-12 * (1.0 + a.abs() + b.abs());

    let mut convex = Tracker::new("convexity", model.convex_in_p());
    let mut homog = Tracker::new("homogeneity", model.homogeneity_degree().is_some());
    let mut lambda = Tracker::new("lambda_inequality", model.homogeneity_degree().is_some());
    let mut coercive = Tracker::new("coercivity", model.coercive());
    let (alpha, c0, radius) = model.coercivity_constants();
    let degree = model.homogeneity_degree().unwrap_or(1.0);

    for _ in 0..samples {
        let x = draw_x(&mut rng);
        let p = draw_vec(&mut rng, 3.0);
        let q = draw_vec(&mut rng, 3.0);
        let mid = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
        let (hp, hq, hm) = (model.eval(p, x), model.eval(q, x), model.eval(mid, x));
        let gap = hm - (hp + hq) / 2.0;
        if gap > rel(hp, hq) {
            convex.record(gap, || format!("p={p:?} q={q:?} x={x:?}"));
        }

        let lam: f64 = rng.random_range(0.0..3.0);
        let hl = model.eval([lam * p[0], lam * p[1]], x);
        let err = (hl - lam.powf(degree) * hp).abs();
        if err > rel(hl, hp) {
            homog.record(err, || format!("p={p:?} lambda={lam} x={x:?}"));
        }

        let mu: f64 = rng.random();
        let hmu = model.eval([mu * p[0], mu * p[1]], x);
        let viol = (-hmu).max(hmu - mu * hp);
        if viol > rel(hmu, hp) {
            lambda.record(viol, || format!("p={p:?} lambda={mu} x={x:?}"));
        }

        // large momenta along a random direction
        let dir = draw_vec(&mut rng, 1.0);
        let n = norm(dir);
        if n > 1e-3 {
            let e = [dir[0] / n, dir[1] / n];
            let s0 = radius.max(1.0) * rng.random_range(1.0..10.0);
            let s1 = s0 * 1.5;
            let h0 = model.eval([s0 * e[0], s0 * e[1]], x);
            let h1 = model.eval([s1 * e[0], s1 * e[1]], x);
            let below = (alpha * s0 - c0) - h0;
            let descent = h0 - h1;
            let v = below.max(descent);
            if v > rel(h0, h1) {
                coercive.record(v, || format!("|p|={s0} dir={e:?} x={x:?}"));
            }
        }
    }

    StructureReport {
        samples,
        checks: vec![
            convex.finish(),
            homog.finish(),
            lambda.finish(),
            coercive.finish(),
        ],
    }
}
