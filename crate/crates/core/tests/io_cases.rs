//! Run artifacts (CSV, VTK), the L1 error and the benchmark definitions.

mod common;

use common::{hanging_mesh, seven_leaf_mesh, GAMMA};
use monoamr::amr::{StepSnapshot, StepStats};
use monoamr::cases::{
    circular_exact, l1_error, linear_exact, oblique_shock_angle, theta_beta_mach, CaseDefinition, CornerSolution,
    ReflectedSolution, CASE_NAMES,
};
use monoamr::fespace::{FESpace, StateVector};
use monoamr::io::{read_csv, write_csv, write_vtk, CSV_HEADER};
use monoamr::mesh::{AdaptiveMesh, Rect};
use monoamr::physics::PhysicsModel;
use proptest::prelude::*;
use std::f64::consts::PI;

fn stats() -> impl Strategy<Value = StepStats> {
    (
        0usize..100,
        1usize..10_000_000,
        1usize..40_000_000,
        proptest::option::of(0.0..1.0f64),
        0.0..1e4f64,
        0usize..500,
        any::<bool>(),
    )
        .prop_map(|(step, cells, dofs, l1_error, wall_s, nl_iters, converged)| StepStats {
            step,
            cells,
            dofs,
            l1_error,
            wall_s,
            nl_iters,
            converged,
        })
}

proptest! {
    #[test]
    fn csv_rows_round_trip(rows in proptest::collection::vec(stats(), 1..20)) {
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        prop_assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
        prop_assert_eq!(read_csv(buf.as_slice()).unwrap(), rows);
    }
}

#[test]
fn csv_with_foreign_header_is_rejected() {
    let text = "step,cells,dofs,error,wall_s,nl_iters,converged\n0,1,1,,0.1,1,true\n";
    assert!(read_csv(text.as_bytes()).is_err());
}

#[test]
fn vtk_snapshot_is_consistent() {
    let space = FESpace::new(&hanging_mesh(), 2);
    let u = StateVector::from_fn(space.num_nodes(), 2, |i| {
        let p = space.coord(i);
        vec![p[0], p[0] + p[1]]
    });
    let indicator: Vec<f64> = (0..space.num_cells()).map(|c| c as f64).collect();
    let detector = vec![0.5; space.num_nodes()];
    let st = StepStats {
        step: 3,
        cells: space.num_cells(),
        dofs: 2 * space.num_nodes(),
        l1_error: None,
        wall_s: 0.0,
        nl_iters: 0,
        converged: true,
    };
    let snap = StepSnapshot { stats: &st, space: &space, u: &u, indicator: &indicator, detector: &detector };
    let mut buf = Vec::new();
    write_vtk(&mut buf, &snap, &["a", "b"]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let find = |key: &str| lines.iter().position(|l| l.starts_with(key)).unwrap_or_else(|| panic!("missing {key}"));

    let np = space.num_nodes() + space.num_hanging();
    assert!(space.num_hanging() > 0);
    let at = find("POINTS");
    assert_eq!(lines[at], format!("POINTS {np} double"));
    let points: Vec<[f64; 2]> = lines[at + 1..at + 1 + np]
        .iter()
        .map(|l| {
            let v: Vec<f64> = l.split_whitespace().map(|x| x.parse().unwrap()).collect();
            [v[0], v[1]]
        })
        .collect();

    let nc = space.num_cells();
    let at = find("CELLS");
    assert_eq!(lines[at], format!("CELLS {nc} {}", 5 * nc));
    for l in &lines[at + 1..at + 1 + nc] {
        let v: Vec<usize> = l.split_whitespace().map(|x| x.parse().unwrap()).collect();
        assert_eq!(v[0], 4);
        let q: Vec<[f64; 2]> = v[1..].iter().map(|&k| points[k]).collect();
        let area: f64 = (0..4).map(|k| q[k][0] * q[(k + 1) % 4][1] - q[(k + 1) % 4][0] * q[k][1]).sum::<f64>() * 0.5;
        assert!(area > 0.0, "quad {v:?} is not counter-clockwise");
    }
    let at = find("CELL_TYPES");
    assert!(lines[at + 1..at + 1 + nc].iter().all(|l| *l == "9"));
    assert_eq!(lines[find("CELL_DATA")], format!("CELL_DATA {nc}"));
    assert_eq!(lines[find("POINT_DATA")], format!("POINT_DATA {np}"));

    // Both fields are linear, so hanging points carry exact values.
    let at = find("SCALARS b");
    let values: Vec<f64> = lines[at + 2..at + 2 + np].iter().map(|l| l.parse().unwrap()).collect();
    for (p, v) in points.iter().zip(&values) {
        assert!((v - (p[0] + p[1])).abs() < 1e-12);
    }
    let at = find("SCALARS alpha");
    assert!(lines[at + 2..at + 2 + np].iter().all(|l| l.parse::<f64>().unwrap() == 0.5));
}

#[test]
fn l1_error_of_exact_interpolant_vanishes() {
    let space = FESpace::new(&seven_leaf_mesh(), 1);
    let f = |p: [f64; 2]| vec![0.3 + 2.0 * p[0] - p[1]];
    let u = space.interpolate(f);
    assert!(l1_error(&space, &u, &f, 0) < 1e-12);
}

#[test]
fn l1_error_of_zero_against_one_is_the_area() {
    let space = FESpace::new(&seven_leaf_mesh(), 1);
    let u = StateVector::zeros(space.num_nodes(), 1);
    assert!((l1_error(&space, &u, &|_| vec![1.0], 0) - 1.0).abs() < 1e-14);
}

#[test]
fn l1_error_of_step_on_two_cells_is_a_triangle() {
    // Step at the shared edge: the interpolant ramps from 0 to 1 over the left cell.
    let mesh = AdaptiveMesh::new_uniform(2, 1, Rect::new([0.0, 0.0], [2.0, 1.0])).unwrap();
    let space = FESpace::new(&mesh, 1);
    let step = |p: [f64; 2]| vec![if p[0] >= 1.0 { 1.0 } else { 0.0 }];
    let u = space.interpolate(step);
    assert!((l1_error(&space, &u, &step, 0) - 0.5).abs() < 1e-14);
}

#[test]
fn scalar_exact_solutions() {
    assert_eq!(linear_exact([0.0, 0.8]), 1.0);
    assert_eq!(linear_exact([0.0, 0.6]), 0.0);
    let along = |r: f64, t: f64| [r * t.sin(), r * t.cos()];
    for t in [0.0, 0.4, 1.2, 0.5 * PI] {
        assert_eq!(circular_exact(along(0.3, t)), 1.0);
        assert_eq!(circular_exact(along(0.5, t)), 0.0);
        let expected = ((10.0 / 3.0) * PI * 0.3).cos().powi(2);
        assert!((circular_exact(along(0.7, t)) - expected).abs() < 1e-12);
    }
}

#[test]
fn compression_corner_angle() {
    let beta = oblique_shock_angle(10f64.to_radians(), 2.0, GAMMA).unwrap();
    assert!((theta_beta_mach(beta, 2.0, GAMMA) - 10f64.to_radians()).abs() < 1e-12);
    let sol = CornerSolution::new(2.0, 10.0, GAMMA).unwrap();
    assert!((sol.wall_angle.to_degrees() - 29.3).abs() < 0.05, "{}", sol.wall_angle.to_degrees());
    // Behind the shock the flow runs parallel to the wall.
    assert!(sol.downstream[2].abs() < 1e-10 * sol.downstream[1].abs());
    // Upstream is normalised to unit density and unit sound speed.
    let u = sol.upstream;
    let p = (GAMMA - 1.0) * (u[3] - 0.5 * (u[1] * u[1] + u[2] * u[2]) / u[0]);
    assert!((u[0] - 1.0).abs() < 1e-15 && (GAMMA * p / u[0] - 1.0).abs() < 1e-12);
}

#[test]
fn reflected_shock_regions_hold_tabulated_states() {
    let sol = ReflectedSolution::new(1.0, GAMMA).unwrap();
    let density = |p| sol.state(p)[0];
    assert_eq!(density([0.2, 0.8]), 1.0);
    assert_eq!(density([1.5, 0.6]), 1.7);
    assert_eq!(density([2.5, 0.7]), 1.7);
    assert_eq!(density([3.4, 0.2]), 2.687);
    let [a, b, c] = sol.states;
    assert_eq!((a[1], a[3]), (2.9, 5.99075));
    assert!((b[2] / b[0] + 0.506).abs() < 1e-12);
    assert!((c[3] / c[0] - 5.6122).abs() < 1e-12);
}

#[test]
fn all_cases_resolve_by_name() {
    for name in CASE_NAMES {
        let case = CaseDefinition::by_name(name).unwrap();
        assert_eq!(case.name, name);
        assert!(case.exact.is_some());
        let mesh = case.initial_mesh().unwrap();
        assert_eq!(mesh.num_cells(), case.root.0 * case.root.1);
        let m = match case.model {
            PhysicsModel::Scalar { .. } => 1,
            PhysicsModel::Euler { .. } => 4,
        };
        assert_eq!(case.model.components(), m);
    }
    assert!(CaseDefinition::by_name("nope").is_err());
}
