//! Nested discrete spaces: refining the mesh or raising the order can only
//! lower the minimal energy, and dof counts grow by about four per level.

mod common;

use common::*;
use nlmag::descent::{run, SolverConfig};
use nlmag::MetricChoice;

fn minimal_energy(h_level: u32, order: u8) -> (usize, f64) {
    let cfg = desk();
    let problem = problem(&cfg, h_level, order);
    let solver = SolverConfig {
        epsilon: 1e-12,
        ..SolverConfig::new(MetricChoice::Newton)
    };
    let state = run(&problem, &solver, None).unwrap();
    assert!(state.terminated.is_success());
    (problem.num_free(), state.final_energy())
}

#[test]
fn energy_decreases_under_refinement_and_order() {
    let mut by_order = Vec::new();
    for order in [1, 2] {
        let levels: Vec<_> = (0..3).map(|h| minimal_energy(h, order)).collect();
        for w in levels.windows(2) {
            assert!(w[1].1 < w[0].1, "p{order}: {:?}", levels);
        }
        by_order.push(levels);
    }
    for h in 0..3 {
        assert!(by_order[1][h].1 < by_order[0][h].1, "h{h}");
    }
    // P2 on level h and P1 on level h+1 share the vertex set
    for h in 0..2 {
        assert_eq!(by_order[1][h].0, by_order[0][h + 1].0);
    }
}

#[test]
fn dof_growth_approaches_four() {
    let cfg = desk();
    for order in [1, 2] {
        let dofs: Vec<f64> = (1..5).map(|h| problem(&cfg, h, order).num_free() as f64).collect();
        let ratios: Vec<f64> = dofs.windows(2).map(|w| w[1] / w[0]).collect();
        for w in ratios.windows(2) {
            assert!((w[1] - 4.0).abs() < (w[0] - 4.0).abs());
        }
        assert!((ratios.last().unwrap() - 4.0).abs() < 0.1, "{ratios:?}");
    }
}
