//! Rayleigh quotients of the assembled metrics against the unit-reluctivity
//! stiffness stay inside the certified `[α, β]`.

mod common;

use common::*;
use nalgebra::DVector;
use nlmag::certify::{derive_metric_bounds, material_bounds};
use nlmag::MetricChoice;
use rand::Rng;

#[test]
fn metric_rayleigh_quotients_within_certified_bounds() {
    let cfg = desk();
    let laws: Vec<_> = cfg.material_table().unwrap().into_values().collect();
    let bounds = material_bounds(&laws, cfg.s_max).unwrap();
    for (h, p) in [(0, 1), (0, 2)] {
        let problem = problem(&cfg, h, p);
        let k = dense(&problem.unit_stiffness());
        let k_chol = k.clone().cholesky().unwrap();
        let l_inv = k_chol.l().try_inverse().unwrap();
        let mut rng = rng(40 + u64::from(p));
        for scale in [0.0, 0.005, 0.02, 0.05] {
            let a = random_coefficients(&problem, &mut rng, scale);
            for metric in [MetricChoice::Newton, MetricChoice::Kacanov, MetricChoice::FixedPoint { nu_bar: 6.31e3 }] {
                let (alpha, beta) = derive_metric_bounds(metric, bounds);
                let m = dense(&problem.assemble_metric(&a, metric).unwrap());
                // generalized eigenvalues of (M, K) via L⁻¹ M L⁻ᵀ
                let reduced = &l_inv * m * l_inv.transpose();
                let eig = reduced.symmetric_eigenvalues();
                let slack = 1e-9 * beta;
                assert!(eig.min() >= alpha - slack, "{metric:?} scale {scale}: {} < {alpha}", eig.min());
                assert!(eig.max() <= beta + slack, "{metric:?} scale {scale}: {} > {beta}", eig.max());
                // random quotients agree with the eigenvalue range
                for _ in 0..5 {
                    let v = DVector::from_fn(problem.num_free(), |_, _| rng.random_range(-1.0..1.0));
                    let mv = dense(&problem.assemble_metric(&a, metric).unwrap()) * &v;
                    let q = v.dot(&mv) / v.dot(&(&k * &v));
                    assert!(q >= eig.min() * (1.0 - 1e-9) && q <= eig.max() * (1.0 + 1e-9));
                }
            }
        }
    }
}
