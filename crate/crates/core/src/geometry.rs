//! Sublevel sets of tabulated effective Hamiltonians: convex hulls, extreme
//! points, and the radial-symmetry checks for isotropic ensembles.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Vector};
use crate::homog::{vanishing_discount, EffectiveEstimate, ModelSpec};
use crate::par::Exec;
use crate::scheme::SchemeConfig;

/// Coordinates are snapped to multiples of `2^-40` before orientation tests.
const SNAP: f64 = (1u64 << 40) as f64;

/// Relative collinearity tolerance, scaled by the level.
pub const TOL_COLLINEAR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TableRow {
    pub q: Vector,
    pub cbar: f64,
    pub uncertainty: f64,
}

/// Tabulated estimates of `H̄` on a set of momenta.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateTable {
    pub dim: usize,
    pub rows: Vec<TableRow>,
}

impl EstimateTable {
    pub fn new(dim: usize, rows: Vec<TableRow>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::param("dim", "must be 1 or 2"));
        }
        if rows.is_empty() {
            return Err(Error::param("p_grid", "empty table"));
        }
        Ok(EstimateTable { dim, rows })
    }

    /// Rows `q0[,q1],cbar,uncertainty`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let head = if self.dim == 1 { "q0" } else { "q0,q1" };
        writeln!(w, "{head},cbar,uncertainty")?;
        for r in &self.rows {
            writeln!(w, "{},{},{}", q_fields(r.q, self.dim), r.cbar, r.uncertainty)?;
        }
        Ok(())
    }
}

fn q_fields(q: Vector, dim: usize) -> String {
    if dim == 1 {
        format!("{}", q[0])
    } else {
        format!("{},{}", q[0], q[1])
    }
}

/// Run [`vanishing_discount`] at every momentum of `p_grid`.
pub fn tabulate_hbar(
    model: &ModelSpec,
    p_grid: &[Vector],
    deltas: &[f64],
    seeds: &[u64],
    grid: &GridSpec,
    scheme: &SchemeConfig,
    exec: Exec,
) -> Result<(EstimateTable, Vec<EffectiveEstimate>)> {
    if p_grid.is_empty() {
        return Err(Error::param("p_grid", "empty momentum grid"));
    }
    let mut rows = Vec::with_capacity(p_grid.len());
    let mut estimates = Vec::with_capacity(p_grid.len());
    for &q in p_grid {
        let est = vanishing_discount(model, q, deltas, seeds, grid, scheme, exec)?;
        rows.push(TableRow {
            q,
            cbar: est.cbar,
            uncertainty: est.uncertainty(),
        });
        estimates.push(est);
    }
    Ok((EstimateTable::new(grid.dim(), rows)?, estimates))
}

/// The sublevel set `{q : H̄(q) ≤ H̄(p)}` seen through a table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SublevelGeometry {
    pub dim: usize,
    pub level: f64,
    pub p: Vector,
    pub samples: Vec<TableRow>,
    pub member_flags: Vec<bool>,
    /// Indices into `samples`: counter-clockwise hull (2D) or `[min, max]` (1D).
    pub hull: Vec<usize>,
    /// One flag per entry of `hull`.
    pub extreme_flags: Vec<bool>,
    /// Members on the hull boundary that are not extreme-flagged.
    pub flat: Vec<usize>,
    /// Fewer than three non-collinear members.
    pub degenerate: bool,
    pub tol_collinear: f64,
}

impl SublevelGeometry {
    pub fn hull_vertices(&self) -> Vec<Vector> {
        self.hull.iter().map(|&i| self.samples[i].q).collect()
    }

    /// Points flagged extreme.
    pub fn extreme_points(&self) -> Vec<Vector> {
        self.hull
            .iter()
            .zip(&self.extreme_flags)
            .filter(|(_, &e)| e)
            .map(|(&i, _)| self.samples[i].q)
            .collect()
    }

    fn index_of(&self, q: Vector) -> Option<usize> {
        self.samples.iter().position(|r| same_point(r.q, q))
    }

    /// Whether `p` itself is an extreme-flagged hull vertex.
    pub fn p_is_extreme(&self) -> bool {
        let Some(ip) = self.index_of(self.p) else {
            return false;
        };
        self.hull
            .iter()
            .zip(&self.extreme_flags)
            .any(|(&i, &e)| i == ip && e)
    }

    /// Rows `q0[,q1],cbar,uncertainty,member,hull_vertex,extreme`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let head = if self.dim == 1 { "q0" } else { "q0,q1" };
        writeln!(w, "{head},cbar,uncertainty,member,hull_vertex,extreme")?;
        for (i, r) in self.samples.iter().enumerate() {
            let pos = self.hull.iter().position(|&k| k == i);
            let extreme = pos.map(|k| self.extreme_flags[k]).unwrap_or(false);
            writeln!(
                w,
                "{},{},{},{},{},{}",
                q_fields(r.q, self.dim),
                r.cbar,
                r.uncertainty,
                self.member_flags[i] as u8,
                pos.is_some() as u8,
                extreme as u8
            )?;
        }
        Ok(())
    }

    /// Samples, members, hull and extreme points (2D only).
    pub fn write_svg<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let size = 480.0;
        let pad = 32.0;
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for r in &self.samples {
            for a in 0..2 {
                lo[a] = lo[a].min(r.q[a]);
                hi[a] = hi[a].max(r.q[a]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        let map = |q: Vector| {
            (
                pad + (q[0] - lo[0]) / span * (size - 2.0 * pad),
                size - pad - (q[1] - lo[1]) / span * (size - 2.0 * pad),
            )
        };
        writeln!(
            w,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
        )?;
        writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
        if self.hull.len() >= 2 {
            let pts: Vec<String> = self
                .hull
                .iter()
                .map(|&i| {
                    let (x, y) = map(self.samples[i].q);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            writeln!(
                w,
                r##"<polygon points="{}" fill="#dde8f5" stroke="#1f4e8c" stroke-width="1.5"/>"##,
                pts.join(" ")
            )?;
        }
        for (i, r) in self.samples.iter().enumerate() {
            let (x, y) = map(r.q);
            let fill = if self.member_flags[i] { "#1f4e8c" } else { "#bbbbbb" };
            writeln!(w, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{fill}"/>"#)?;
        }
        for q in self.extreme_points() {
            let (x, y) = map(q);
            writeln!(
                w,
                r##"<circle cx="{x:.2}" cy="{y:.2}" r="6" fill="none" stroke="#c0392b" stroke-width="2"/>"##
            )?;
        }
        writeln!(
            w,
            r#"<text x="{pad}" y="20" font-family="sans-serif" font-size="13">level {:.6}</text>"#,
            self.level
        )?;
        writeln!(w, "</svg>")
    }
}

fn same_point(a: Vector, b: Vector) -> bool {
    let scale = 1.0 + a[0].abs().max(a[1].abs());
    (a[0] - b[0]).abs() <= 1e-12 * scale && (a[1] - b[1]).abs() <= 1e-12 * scale
}

fn snap(q: Vector) -> [i64; 2] {
    [(q[0] * SNAP).round() as i64, (q[1] * SNAP).round() as i64]
}

/// Exact sign of `(b − a) × (c − a)` on snapped coordinates.
fn orientation(a: [i64; 2], b: [i64; 2], c: [i64; 2]) -> i128 {
    let (abx, aby) = (b[0] as i128 - a[0] as i128, b[1] as i128 - a[1] as i128);
    let (acx, acy) = (c[0] as i128 - a[0] as i128, c[1] as i128 - a[1] as i128);
    abx * acy - aby * acx
}

/// Indices of the strict convex hull of `points`, counter-clockwise, starting
/// from the lexicographically smallest point. Duplicates and collinear
/// boundary points are dropped.
pub fn convex_hull(points: &[Vector]) -> Vec<usize> {
    let snapped: Vec<[i64; 2]> = points.iter().map(|&q| snap(q)).collect();
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| snapped[i]);
    order.dedup_by_key(|i| snapped[*i]);
    if order.len() < 3 {
        return order;
    }
    let mut hull: Vec<usize> = Vec::with_capacity(2 * order.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(order.iter())
        } else {
            Box::new(order.iter().rev())
        };
        for &i in iter {
            while hull.len() >= start + 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                if orientation(snapped[a], snapped[b], snapped[i]) <= 0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(i);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        // all points collinear: keep the two ends
        return vec![order[0], *order.last().unwrap()];
    }
    hull
}

fn segment_distance(x: Vector, a: Vector, b: Vector) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ax = [x[0] - a[0], x[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ax[0] * ab[0] + ax[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = [ax[0] - t * ab[0], ax[1] - t * ab[1]];
    d[0].hypot(d[1])
}

/// Membership, hull and extreme points of the sublevel set at `H̄(p)`.
pub fn sublevel_extremes(table: &EstimateTable, p: Vector) -> Result<SublevelGeometry> {
    let level = table
        .rows
        .iter()
        .find(|r| same_point(r.q, p))
        .map(|r| r.cbar)
        .ok_or_else(|| Error::param("p", "momentum is not a node of the table"))?;
    Ok(sublevel_at(table, p, level))
}

/// As [`sublevel_extremes`] with an explicit level.
pub fn sublevel_at(table: &EstimateTable, p: Vector, level: f64) -> SublevelGeometry {
    let samples = table.rows.clone();
    let member_flags: Vec<bool> = samples
        .iter()
        .map(|r| r.cbar <= level + r.uncertainty)
        .collect();
    let members: Vec<usize> = (0..samples.len()).filter(|&i| member_flags[i]).collect();
    let tol = TOL_COLLINEAR * level.abs();
    let mut geo = SublevelGeometry {
        dim: table.dim,
        level,
        p,
        samples,
        member_flags,
        hull: Vec::new(),
        extreme_flags: Vec::new(),
        flat: Vec::new(),
        degenerate: false,
        tol_collinear: tol,
    };
    if members.is_empty() {
        geo.degenerate = true;
        return geo;
    }
    let q = |i: usize| geo.samples[i].q;

    if table.dim == 1 {
        let lo = *members
            .iter()
            .min_by(|&&a, &&b| q(a)[0].total_cmp(&q(b)[0]))
            .unwrap();
        let hi = *members
            .iter()
            .max_by(|&&a, &&b| q(a)[0].total_cmp(&q(b)[0]))
            .unwrap();
        if q(lo)[0] == q(hi)[0] {
            geo.hull = vec![lo];
            geo.extreme_flags = vec![true];
            geo.degenerate = true;
        } else {
            geo.hull = vec![lo, hi];
            geo.extreme_flags = vec![true, true];
        }
        return geo;
    }

    if members.len() < 3 {
        geo.degenerate = true;
        geo.extreme_flags = vec![true; members.len()];
        geo.hull = members;
        return geo;
    }
    let pts: Vec<Vector> = members.iter().map(|&i| q(i)).collect();
    let hull: Vec<usize> = convex_hull(&pts).into_iter().map(|k| members[k]).collect();
    if hull.len() < 3 {
        geo.degenerate = true;
        geo.extreme_flags = vec![true; hull.len()];
        geo.hull = hull;
        return geo;
    }
    let n = hull.len();
    let extreme_flags: Vec<bool> = (0..n)
        .map(|k| {
            let prev = q(hull[(k + n - 1) % n]);
            let next = q(hull[(k + 1) % n]);
            segment_distance(q(hull[k]), prev, next) > tol
        })
        .collect();
    // members on a hull edge (within tolerance) that are not flagged extreme
    let flat: Vec<usize> = members
        .iter()
        .copied()
        .filter(|i| {
            if let Some(k) = hull.iter().position(|h| h == i) {
                return !extreme_flags[k];
            }
            (0..n).any(|k| segment_distance(q(*i), q(hull[k]), q(hull[(k + 1) % n])) <= tol)
        })
        .collect();
    geo.hull = hull;
    geo.extreme_flags = extreme_flags;
    geo.flat = flat;
    geo
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusStat {
    pub radius: f64,
    pub directions: usize,
    pub mean: f64,
    /// `(max − min) / mean` of `H̄` across directions.
    pub spread: f64,
    pub passes: bool,
}

/// A pair of radii on one ray where `H̄(s)/s` decreases beyond the uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityWitness {
    pub direction: f64,
    pub s1: f64,
    pub s2: f64,
    pub ratio1: f64,
    pub ratio2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialReport {
    pub directions: usize,
    pub radii: Vec<RadiusStat>,
    pub spread_tol: f64,
    pub isotropic: bool,
    pub monotone: bool,
    pub violations: Vec<MonotonicityWitness>,
    /// `c̄` of the fit `H̄(s) = c̄ s` (degree-one models only).
    pub fit_slope: Option<f64>,
    /// Largest `|H̄ − c̄ s| / (c̄ s)` over the table.
    pub fit_relative_residual: Option<f64>,
    pub fit_tol: f64,
    pub sufficient: bool,
    pub passes: bool,
}

impl RadialReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "radius,directions,mean_cbar,spread,pass")?;
        for r in &self.radii {
            writeln!(w, "{},{},{},{},{}", r.radius, r.directions, r.mean, r.spread, r.passes)?;
        }
        Ok(())
    }
}

fn key(x: f64) -> i64 {
    (x * 1e9).round() as i64
}

/// Isotropy, ray monotonicity of `H̄(s)/s`, and (for degree-one models) a
/// linear fit through the origin.
pub fn radial_checks(
    table: &EstimateTable,
    homogeneous: bool,
    spread_tol: f64,
    fit_tol: f64,
) -> RadialReport {
    // direction → radius → row
    let mut rays: BTreeMap<i64, BTreeMap<i64, (f64, TableRow)>> = BTreeMap::new();
    let mut by_radius: BTreeMap<i64, Vec<TableRow>> = BTreeMap::new();
    for r in &table.rows {
        let s = r.q[0].hypot(r.q[1]);
        if s == 0.0 {
            continue;
        }
        let angle = r.q[1].atan2(r.q[0]);
        rays.entry(key(angle))
            .or_default()
            .insert(key(s), (s, *r));
        by_radius.entry(key(s)).or_default().push(*r);
    }
    let directions = rays.len();
    let sufficient = directions >= 4 && by_radius.len() >= 3;

    let radii: Vec<RadiusStat> = by_radius
        .values()
        .map(|rows| {
            let s = rows[0].q[0].hypot(rows[0].q[1]);
            let mean = rows.iter().map(|r| r.cbar).sum::<f64>() / rows.len() as f64;
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
                (a.min(r.cbar), b.max(r.cbar))
            });
            let spread = if mean != 0.0 { (hi - lo) / mean.abs() } else { hi - lo };
            RadiusStat {
                radius: s,
                directions: rows.len(),
                mean,
                spread,
                passes: spread <= spread_tol,
            }
        })
        .collect();

    let mut violations = Vec::new();
    for (dir, ray) in &rays {
        let pts: Vec<&(f64, TableRow)> = ray.values().collect();
        for w in pts.windows(2) {
            let (s1, r1) = w[0];
            let (s2, r2) = w[1];
            let (a, b) = (r1.cbar / s1, r2.cbar / s2);
            if a > b + r1.uncertainty / s1 + r2.uncertainty / s2 {
                violations.push(MonotonicityWitness {
                    direction: *dir as f64 * 1e-9,
                    s1: *s1,
                    s2: *s2,
                    ratio1: a,
                    ratio2: b,
                });
            }
        }
    }

    let (fit_slope, fit_relative_residual) = if homogeneous {
        let rows: Vec<(f64, f64)> = rays
            .values()
            .flat_map(|ray| ray.values().map(|(s, r)| (*s, r.cbar)))
            .collect();
        let sxx: f64 = rows.iter().map(|(s, _)| s * s).sum();
        let sxy: f64 = rows.iter().map(|(s, c)| s * c).sum();
        let c = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let res = rows
            .iter()
            .map(|(s, v)| {
                let f = c * s;
                if f != 0.0 {
                    (v - f).abs() / f.abs()
                } else {
                    (v - f).abs()
                }
            })
            .fold(0.0, f64::max);
        (Some(c), Some(res))
    } else {
        (None, None)
    };

    let isotropic = radii.iter().all(|r| r.passes);
    let monotone = violations.is_empty();
    let fit_ok = fit_relative_residual.is_none_or(|r| r <= fit_tol);
    RadialReport {
        directions,
        passes: sufficient && isotropic && monotone && fit_ok,
        radii,
        spread_tol,
        isotropic,
        monotone,
        violations,
        fit_slope,
        fit_relative_residual,
        fit_tol,
        sufficient,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn row(q: Vector, cbar: f64) -> TableRow {
        TableRow {
            q,
            cbar,
            uncertainty: 0.0,
        }
    }

    #[test]
    fn ball_boundary_is_extreme() {
        let mut rows = Vec::new();
        for k in 0..8 {
            let a = TAU * k as f64 / 8.0;
            rows.push(row([a.cos(), a.sin()], 1.0));
        }
        rows.push(row([0.0, 0.0], 0.0));
        rows.push(row([0.3, -0.2], 0.36f64.hypot(0.2)));
        let t = EstimateTable::new(2, rows).unwrap();
        let g = sublevel_extremes(&t, [1.0, 0.0]).unwrap();
        assert_eq!(g.hull.len(), 8);
        assert!(g.extreme_flags.iter().all(|&e| e));
        assert!(g.p_is_extreme());
        assert!(g.member_flags.iter().all(|&m| m));
    }

    #[test]
    fn one_dimensional_interval() {
        let rows: Vec<TableRow> = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0]
            .iter()
            .map(|&q: &f64| row([q, 0.0], q * q))
            .collect();
        let t = EstimateTable::new(1, rows).unwrap();
        let g = sublevel_extremes(&t, [1.0, 0.0]).unwrap();
        assert_eq!(g.hull_vertices(), vec![[-1.0, 0.0], [1.0, 0.0]]);
        assert_eq!(g.extreme_points().len(), 2);
    }

    #[test]
    fn collinear_and_tiny_sets_are_degenerate() {
        let t = EstimateTable::new(2, vec![row([0.0, 0.0], 0.0), row([1.0, 1.0], 1.0)]).unwrap();
        let g = sublevel_at(&t, [0.0, 0.0], 1.0);
        assert!(g.degenerate);
        assert_eq!(g.extreme_points().len(), 2);
        let line: Vec<TableRow> = (0..4).map(|k| row([k as f64, 0.0], 0.0)).collect();
        let g = sublevel_at(&EstimateTable::new(2, line).unwrap(), [0.0, 0.0], 0.0);
        assert!(g.degenerate);
        assert_eq!(g.hull_vertices(), vec![[0.0, 0.0], [3.0, 0.0]]);
    }

    #[test]
    fn missing_p_is_an_error() {
        let t = EstimateTable::new(1, vec![row([0.0, 0.0], 0.0)]).unwrap();
        assert!(sublevel_extremes(&t, [1.0, 0.0]).is_err());
        assert!(EstimateTable::new(1, vec![]).is_err());
    }

    #[test]
    fn radial_detector_finds_decreasing_ratio() {
        let mut rows = Vec::new();
        for k in 0..4 {
            let a = TAU * k as f64 / 4.0;
            for (s, c) in [(0.5, 1.0), (1.0, 1.5), (2.0, 4.0)] {
                rows.push(row([s * a.cos(), s * a.sin()], c));
            }
        }
        let rep = radial_checks(&EstimateTable::new(2, rows).unwrap(), false, 0.03, 0.03);
        assert!(rep.sufficient && rep.isotropic);
        assert!(!rep.monotone);
        let w = &rep.violations[0];
        assert_eq!((w.s1, w.s2), (0.5, 1.0));
    }
}
