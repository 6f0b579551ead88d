use hjhomog_core::environment::EnvironmentSpec;
use hjhomog_core::geometry::{
    convex_hull, radial_checks, sublevel_at, sublevel_extremes, tabulate_hbar, EstimateTable,
    TableRow,
};
use hjhomog_core::homog::ModelSpec;
use hjhomog_core::models::HamiltonianKind;
use hjhomog_core::par::Exec;
use hjhomog_core::scheme::SchemeConfig;
use hjhomog_core::{Error, GridSpec, Vector};
use proptest::prelude::*;
use std::f64::consts::TAU;

fn row(q: Vector, cbar: f64) -> TableRow {
    TableRow {
        q,
        cbar,
        uncertainty: 0.0,
    }
}

fn ring(n: usize, radius: f64, cbar: f64) -> Vec<TableRow> {
    (0..n)
        .map(|k| {
            let a = TAU * k as f64 / n as f64;
            row([radius * a.cos(), radius * a.sin()], cbar)
        })
        .collect()
}

fn cross(o: Vector, a: Vector, b: Vector) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn points() -> impl Strategy<Value = Vec<Vector>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(x, y)| [x, y]), 3..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hull_of_the_hull_is_the_hull(pts in points()) {
        let hull = convex_hull(&pts);
        let verts: Vec<Vector> = hull.iter().map(|&i| pts[i]).collect();
        let again: Vec<Vector> = convex_hull(&verts).iter().map(|&i| verts[i]).collect();
        prop_assert_eq!(verts, again);
    }

    #[test]
    fn hull_is_convex_and_contains_every_point(pts in points()) {
        let h: Vec<Vector> = convex_hull(&pts).iter().map(|&i| pts[i]).collect();
        prop_assume!(h.len() >= 3);
        let n = h.len();
        for k in 0..n {
            let (a, b) = (h[k], h[(k + 1) % n]);
            prop_assert!(cross(a, b, h[(k + 2) % n]) > 0.0);
            for &x in &pts {
                prop_assert!(cross(a, b, x) >= -1e-12);
            }
        }
    }

    #[test]
    fn raising_the_level_never_removes_members(
        vals in prop::collection::vec(0.0f64..2.0, 12),
        unc in prop::collection::vec(0.0f64..0.1, 12),
        l1 in 0.0f64..2.0,
        dl in 0.0f64..1.0,
    ) {
        let rows: Vec<TableRow> = vals.iter().zip(&unc).enumerate().map(|(k, (&c, &u))| {
            let a = TAU * k as f64 / 12.0;
            TableRow { q: [a.cos(), a.sin()], cbar: c, uncertainty: u }
        }).collect();
        let t = EstimateTable::new(2, rows).unwrap();
        let lo = sublevel_at(&t, [1.0, 0.0], l1);
        let hi = sublevel_at(&t, [1.0, 0.0], l1 + dl);
        for (a, b) in lo.member_flags.iter().zip(&hi.member_flags) {
            prop_assert!(!a || *b);
        }
        for &i in &lo.hull {
            prop_assert!(lo.member_flags[i]);
        }
    }

    #[test]
    fn extreme_flags_follow_rigid_motions(
        pts in points(),
        angle in 0.0f64..TAU,
        t0 in -3.0f64..3.0,
        t1 in -3.0f64..3.0,
    ) {
        let (s, c) = angle.sin_cos();
        let moved: Vec<Vector> = pts.iter().map(|q| [c * q[0] - s * q[1] + t0, s * q[0] + c * q[1] + t1]).collect();
        let table = |qs: &[Vector]| EstimateTable::new(2, qs.iter().map(|&q| row(q, 0.0)).collect()).unwrap();
        let a = sublevel_at(&table(&pts), pts[0], 1.0);
        let b = sublevel_at(&table(&moved), moved[0], 1.0);
        let flagged = |g: &hjhomog_core::geometry::SublevelGeometry| {
            let mut v: Vec<usize> = g.hull.iter().zip(&g.extreme_flags).filter(|(_, &e)| e).map(|(&i, _)| i).collect();
            v.sort();
            v
        };
        prop_assert_eq!(flagged(&a), flagged(&b));
    }
}

#[test]
fn strictly_convex_ball_has_all_boundary_points_extreme() {
    let mut rows = ring(8, 1.0, 1.0);
    rows.push(row([0.0, 0.0], 0.0));
    rows.push(row([0.25, 0.25], 0.5f64.sqrt() / 2.0));
    rows.push(row([-0.4, 0.1], 0.17f64.sqrt()));
    let g = sublevel_extremes(&EstimateTable::new(2, rows).unwrap(), [1.0, 0.0]).unwrap();
    assert_eq!(g.level, 1.0);
    assert!(g.member_flags.iter().all(|&m| m));
    let mut hull = g.hull.clone();
    hull.sort();
    assert_eq!(hull, (0..8).collect::<Vec<_>>());
    assert!(g.extreme_flags.iter().all(|&e| e));
    assert!(g.flat.is_empty() && !g.degenerate);
}

#[test]
fn quadratic_interval_has_two_extreme_points() {
    let rows: Vec<TableRow> = (-8..=8)
        .map(|k| {
            let q = k as f64 / 4.0;
            row([q, 0.0], q * q)
        })
        .collect();
    let g = sublevel_extremes(&EstimateTable::new(1, rows).unwrap(), [1.0, 0.0]).unwrap();
    assert_eq!(g.hull_vertices(), vec![[-1.0, 0.0], [1.0, 0.0]]);
    assert_eq!(g.extreme_points(), vec![[-1.0, 0.0], [1.0, 0.0]]);
    assert_eq!(g.member_flags.iter().filter(|&&m| m).count(), 9);
}

#[test]
fn flat_annulus_keeps_inner_ring_off_the_extreme_set() {
    let mut rows = ring(8, 1.0, 0.0);
    rows.extend(ring(8, 0.5, 0.0));
    rows.push(row([0.0, 0.0], 1.0));
    let t = EstimateTable::new(2, rows).unwrap();
    let g = sublevel_extremes(&t, [0.5, 0.0]).unwrap();
    for i in 8..16 {
        assert!(g.member_flags[i]);
        assert!(!g.hull.contains(&i));
    }
    assert!(!g.member_flags[16]);
    assert!(!g.p_is_extreme());
    assert!(g.extreme_flags.iter().all(|&e| e));
    assert_eq!(g.hull.len(), 8);
}

#[test]
fn edge_midpoints_are_reported_flat() {
    let rows = vec![
        row([0.0, 0.0], 0.0),
        row([1.0, 0.0], 0.0),
        row([2.0, 0.0], 0.0),
        row([1.0, 1.0], 0.0),
    ];
    let g = sublevel_at(&EstimateTable::new(2, rows).unwrap(), [1.0, 0.0], 1.0);
    assert_eq!(g.hull.len(), 3);
    assert_eq!(g.flat, vec![1]);
    assert!(!g.p_is_extreme());
}

#[test]
fn constant_eikonal_table_is_two_abs_q() {
    let g = GridSpec::new(1, 2.0, 1.0 / 16.0).unwrap();
    let model = ModelSpec::first_order(HamiltonianKind::Eikonal, EnvironmentSpec::constant(2.0));
    let p_grid: Vec<Vector> = (-2..=2).map(|k| [k as f64, 0.0]).collect();
    let (table, ests) = tabulate_hbar(
        &model,
        &p_grid,
        &[0.2, 0.1],
        &[1, 2],
        &g,
        &SchemeConfig::default(),
        Exec::Sequential,
    )
    .unwrap();
    assert_eq!(ests.len(), 5);
    for r in &table.rows {
        assert!((r.cbar - 2.0 * r.q[0].abs()).abs() < 1e-10, "{r:?}");
        assert!(r.uncertainty < 1e-10);
    }
    let mut csv = Vec::new();
    table.write_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("q0,cbar,uncertainty\n"));

    let err = tabulate_hbar(
        &model,
        &[],
        &[0.2, 0.1],
        &[1],
        &g,
        &SchemeConfig::default(),
        Exec::Sequential,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Parameter { ref key, .. } if key == "p_grid"));
}

#[test]
fn constant_eikonal_passes_every_radial_check() {
    let mut rows = Vec::new();
    for s in [0.5, 1.0, 2.0] {
        rows.extend(ring(8, s, 2.0 * s));
    }
    let rep = radial_checks(&EstimateTable::new(2, rows).unwrap(), true, 0.03, 0.03);
    assert!(rep.sufficient && rep.passes);
    assert!(rep.radii.iter().all(|r| r.spread < 1e-12));
    assert!((rep.fit_slope.unwrap() - 2.0).abs() < 1e-12);
    assert!(rep.fit_relative_residual.unwrap() < 1e-12);

    let few = radial_checks(&EstimateTable::new(2, ring(3, 1.0, 1.0)).unwrap(), true, 0.03, 0.03);
    assert!(!few.sufficient && !few.passes);
}
