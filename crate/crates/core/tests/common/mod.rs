#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nlmag::config::{parse_config_str, Method, StudyConfig, DESK_CONFIG};
use nlmag::study::build_problem;
use nlmag::{Coefficients, FeProblem, MetricChoice};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn desk() -> StudyConfig {
    parse_config_str(DESK_CONFIG).unwrap()
}

/// Iron ring around a coil on a 6 × 6 grid: 25 free P1 dofs at level 0.
pub const TINY_P1: &str = r#"
[domain]
width = 0.06
height = 0.06
cells_x = 6
cells_y = 6

[region.core]
id = 1
material = "bundled"
rects = [
    [0.01, 0.01, 0.02, 0.05],
    [0.02, 0.01, 0.05, 0.02],
    [0.02, 0.04, 0.05, 0.05],
    [0.04, 0.02, 0.05, 0.04],
]

[region.coil]
id = 2
rects = [[0.02, 0.02, 0.04, 0.04]]
current_density = 6.25e5

[study]
h_levels = [0]
orders = [1]

[method.fixedpoint]
nu_bar = 6.31e3
"#;

/// Iron block beside a coil on a 3 × 3 grid: 25 free P2 dofs at level 0.
pub const TINY_P2: &str = r#"
[domain]
width = 0.06
height = 0.06
cells_x = 3
cells_y = 3

[region.core]
id = 1
material = "bundled"
rects = [[0.02, 0.0, 0.04, 0.06]]

[region.coil]
id = 2
rects = [[0.0, 0.02, 0.02, 0.04]]
current_density = 6.25e5

[study]
h_levels = [0]
orders = [2]

[method.fixedpoint]
nu_bar = 6.31e3
"#;

pub fn config(text: &str) -> StudyConfig {
    parse_config_str(text).unwrap()
}

pub fn problem(cfg: &StudyConfig, h_level: u32, order: u8) -> FeProblem {
    build_problem(cfg, &cfg.material_table().unwrap(), h_level, order).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random coefficients whose flux stays in the physically relevant range.
pub fn random_coefficients(problem: &FeProblem, rng: &mut ChaCha8Rng, scale: f64) -> Coefficients {
    Coefficients((0..problem.num_free()).map(|_| scale * rng.random_range(-1.0..1.0)).collect())
}

pub fn dense(m: &nlmag::linsolve::CsrMatrix) -> DMatrix<f64> {
    let rows = m.to_dense();
    let n = m.dim();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// Minimizer by undamped-when-possible Newton on the dense exact Hessian,
/// stopped when the step falls below `tol` relative to the iterate.
pub fn dense_newton_minimizer(problem: &FeProblem, tol: f64) -> Coefficients {
    let mut a = Coefficients::zeros(problem.num_free());
    for _ in 0..200 {
        let g = DVector::from_vec(problem.assemble_residual(&a));
        let h = dense(&problem.assemble_metric(&a, MetricChoice::Newton).unwrap());
        let step = h.cholesky().expect("Hessian is SPD").solve(&(-g));
        let step = step.as_slice().to_vec();
        let mut t = 1.0;
        while problem.energy_change(&a, &step, t) > 0.0 && t > 1e-12 {
            t *= 0.5;
        }
        a = a.axpy(t, &step);
        let step_norm = step.iter().map(|s| s * s).sum::<f64>().sqrt() * t;
        let a_norm = a.0.iter().map(|s| s * s).sum::<f64>().sqrt();
        if step_norm <= tol * a_norm.max(f64::MIN_POSITIVE) {
            return a;
        }
    }
    panic!("dense Newton did not converge");
}

pub fn methods() -> [Method; 3] {
    Method::ALL
}

pub fn spread(counts: &[usize]) -> (usize, usize, f64) {
    let mut v = counts.to_vec();
    v.sort_unstable();
    let median = if v.len() % 2 == 1 {
        v[v.len() / 2] as f64
    } else {
        0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2]) as f64
    };
    (v[0], v[v.len() - 1], median)
}
