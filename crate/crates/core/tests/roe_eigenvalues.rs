//! Closed-form Roe eigenvalues against dense eigensolves of the Roe matrix.

mod common;

use common::{euler_flux, euler_state, rng, textbook_jacobian, GAMMA};
use faer::Mat;
use monoamr::physics::roe_average;
use rand::Rng;

const SAMPLES: usize = 1000;
const TOL: f64 = 1e-10;

fn random_pair(r: &mut impl Rng) -> ([f64; 4], [f64; 4], [f64; 2]) {
    let state = |r: &mut dyn rand::RngCore| {
        euler_state(
            r.random_range(0.1..10.0),
            [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)],
            r.random_range(0.1..10.0),
        )
    };
    let ui = state(r);
    let uj = state(r);
    let n = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
    (ui, uj, n)
}

#[test]
fn closed_form_eigenvalues_match_dense_eigensolve() {
    let mut r = rng(2024);
    let mut worst = 0.0f64;
    for _ in 0..SAMPLES {
        let (ui, uj, n) = random_pair(&mut r);
        let roe = roe_average(&ui, &uj, GAMMA).unwrap();
        let a = textbook_jacobian(roe.v, roe.h, n);
        let scale = 1.0 + roe.eigenvalues(n).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut dense: Vec<f64> = Mat::from_fn(4, 4, |r, c| a[r][c])
            .eigenvalues()
            .unwrap()
            .iter()
            .map(|z| {
                assert!(z.im.abs() <= TOL * scale, "complex eigenvalue {z:?}");
                z.re
            })
            .collect();
        dense.sort_by(f64::total_cmp);
        let closed = roe.eigenvalues(n);
        for (d, c) in dense.iter().zip(closed) {
            worst = worst.max((d - c).abs() / scale);
        }
    }
    assert!(worst <= TOL, "largest relative eigenvalue mismatch {worst:.3e}");
}

#[test]
fn roe_matrix_satisfies_the_roe_property() {
    let mut r = rng(7);
    for _ in 0..SAMPLES {
        let (ui, uj, n) = random_pair(&mut r);
        let roe = roe_average(&ui, &uj, GAMMA).unwrap();
        let a = roe.jacobian(n, GAMMA);
        let (fi, fj) = (euler_flux(&ui), euler_flux(&uj));
        let scale = 1.0 + (0..4).map(|c| (fj[0][c] * n[0] + fj[1][c] * n[1]).abs()).fold(0.0, f64::max);
        for c in 0..4 {
            let lhs: f64 = (0..4).map(|k| a[c][k] * (uj[k] - ui[k])).sum();
            let rhs = (fj[0][c] - fi[0][c]) * n[0] + (fj[1][c] - fi[1][c]) * n[1];
            assert!((lhs - rhs).abs() <= TOL * scale, "component {c}: {lhs} vs {rhs}");
        }
        let dense = textbook_jacobian(roe.v, roe.h, n);
        for r in 0..4 {
            for k in 0..4 {
                assert!((a[r][k] - dense[r][k]).abs() <= TOL * (1.0 + a[r][k].abs()));
            }
        }
    }
}
