mod common;

use approx::assert_relative_eq;
use common::*;
use nalgebra::DVector;
use nlmag::linsolve::{cg_solve, energy_norm, reverse_cuthill_mckee, spmv, CsrMatrix, EnvelopeCholesky};
use nlmag::MetricChoice;
use rand::Rng;

fn random_spd(n: usize, seed: u64) -> CsrMatrix {
    let mut rng = rng(seed);
    let mut trip = Vec::new();
    // sparse symmetric off-diagonals, diagonal dominance makes it SPD
    let mut diag = vec![1.0; n];
    for i in 0..n {
        for j in 0..i {
            if rng.random_bool(0.2) {
                let v: f64 = rng.random_range(-1.0..1.0);
                trip.push((i, j, v));
                trip.push((j, i, v));
                diag[i] += v.abs();
                diag[j] += v.abs();
            }
        }
    }
    trip.extend(diag.iter().enumerate().map(|(i, &d)| (i, i, d)));
    CsrMatrix::from_triplets(n, &trip).unwrap()
}

#[test]
fn spmv_matches_dense() {
    for seed in 0..5 {
        let a = random_spd(30, seed);
        let x: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).cos()).collect();
        let expect = dense(&a) * DVector::from_vec(x.clone());
        let got = spmv(&a, &x).unwrap();
        for (g, e) in got.iter().zip(expect.iter()) {
            assert_relative_eq!(*g, *e, epsilon = 1e-12);
        }
    }
}

#[test]
fn cg_and_cholesky_match_dense_solve() {
    for seed in 0..5 {
        let a = random_spd(40, 100 + seed);
        let b: Vec<f64> = (0..40).map(|i| 1.0 + i as f64 % 3.0).collect();
        let x_ref = dense(&a).cholesky().unwrap().solve(&DVector::from_vec(b.clone()));
        let (x_cg, rep) = cg_solve(&a, &b, 1e-12, 1000).unwrap();
        assert!(rep.converged);
        let x_chol = EnvelopeCholesky::factor(&a).unwrap().solve(&b).unwrap();
        for i in 0..40 {
            assert_relative_eq!(x_cg[i], x_ref[i], epsilon = 1e-9, max_relative = 1e-9);
            assert_relative_eq!(x_chol[i], x_ref[i], epsilon = 1e-12, max_relative = 1e-10);
        }
    }
}

#[test]
fn energy_norm_matches_dense() {
    let a = random_spd(25, 7);
    let x: Vec<f64> = (0..25).map(|i| i as f64 - 12.0).collect();
    let xv = DVector::from_vec(x.clone());
    let expect = (xv.transpose() * dense(&a) * &xv)[(0, 0)].sqrt();
    assert_relative_eq!(energy_norm(&a, &x).unwrap(), expect, max_relative = 1e-13);
}

#[test]
fn rcm_is_a_permutation() {
    let a = random_spd(50, 9);
    let mut perm = reverse_cuthill_mckee(&a);
    perm.sort_unstable();
    assert_eq!(perm, (0..50).collect::<Vec<_>>());
}

#[test]
fn assembled_metrics_are_symmetric_positive_definite() {
    let cfg = desk();
    for (h, p) in [(0, 1), (0, 2), (1, 1)] {
        let problem = problem(&cfg, h, p);
        let mut rng = rng(u64::from(p) * 10 + u64::from(h));
        let a = random_coefficients(&problem, &mut rng, 0.02);
        for metric in [MetricChoice::Newton, MetricChoice::Kacanov, MetricChoice::FixedPoint { nu_bar: 6.31e3 }] {
            let m = problem.assemble_metric(&a, metric).unwrap();
            assert!(m.asymmetry() <= 1e-12 * m.values().iter().fold(0.0f64, |x, v| x.max(v.abs())));
            let eig = dense(&m).symmetric_eigenvalues();
            assert!(eig.min() > 0.0, "{metric:?} on p{p} h{h}");
            // the direct and iterative paths agree on the assembled system
            let rhs = problem.assemble_residual(&a);
            let (x_cg, rep) = cg_solve(&m, &rhs, 1e-12, 10_000).unwrap();
            assert!(rep.converged);
            let x_chol = EnvelopeCholesky::factor(&m).unwrap().solve(&rhs).unwrap();
            let diff: f64 = x_cg.iter().zip(&x_chol).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let size: f64 = x_chol.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(diff <= 1e-8 * size, "{diff} vs {size}");
        }
    }
}
