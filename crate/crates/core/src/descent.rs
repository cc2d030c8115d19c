//! Generalized gradient descent for the discrete energy.
//!
//! Each step solves the linear update problem `M(aⁿ) δ = -∇Φ(aⁿ)` in the
//! metric selected by [`MetricChoice`], picks `τⁿ = ρᵏ` by Armijo
//! backtracking and sets `aⁿ⁺¹ = aⁿ + τⁿ δ`. The directional derivative
//! `⟨∇Φ, δ⟩` in the Armijo test is taken as `-δᵀ M δ`, which equals it up to
//! the linear solver tolerance.
//!
//! The run stops once `|Φ(aⁿ⁺¹) - Φ(aⁿ)| < ε ‖δa⁰‖`, where `δa⁰` is the
//! Newton step at the initial iterate measured in the Newton metric. This
//! compares an energy with a norm; the units do not match and are kept that
//! way so that iteration counts stay comparable with published tables.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::assembly::{Coefficients, FeProblem, MetricChoice};
use crate::error::{Error, Result};
use crate::linsolve::{cg_solve, dot, norm2, spmv, CsrMatrix, EnvelopeCholesky};

/// Zero-direction threshold relative to the termination scale.
pub const ZERO_DIRECTION_RELATIVE: f64 = 1e-14;
/// Zero-direction threshold relative to `sqrt(Σ |energy terms|)`, the
/// round-off floor of the residual.
pub const ZERO_DIRECTION_ROUNDOFF: f64 = 1e-12;
// A third test treats the direction as zero once `‖∇Φ(aⁿ)‖ ≤ linear_tol ‖∇Φ(a⁰)‖`:
// the gradient is then at the level the linear solves leave behind, and on a
// linear problem this is exactly what remains after the first step.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearSolverKind {
    /// Jacobi-preconditioned CG for every solve.
    Cg,
    /// Envelope Cholesky for every solve.
    Direct,
    /// Cholesky (factored once) for the fixed-point metric, CG otherwise.
    Auto,
}

impl LinearSolverKind {
    pub fn name(&self) -> &'static str {
        match self {
            LinearSolverKind::Cg => "cg",
            LinearSolverKind::Direct => "direct",
            LinearSolverKind::Auto => "auto",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cg" => Some(Self::Cg),
            "direct" => Some(Self::Direct),
            "auto" => Some(Self::Auto),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub metric: MetricChoice,
    pub rho: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub max_outer_iterations: usize,
    pub max_backtracks: usize,
    pub linear_tol: f64,
    pub linear_max_iterations: usize,
    pub linear_solver: LinearSolverKind,
    /// Store every iterate in the returned state.
    pub keep_iterates: bool,
}

impl SolverConfig {
    pub fn new(metric: MetricChoice) -> Self {
        Self {
            metric,
            rho: 0.5,
            sigma: 0.1,
            epsilon: 1e-7,
            max_outer_iterations: 20_000,
            max_backtracks: 60,
            linear_tol: 1e-10,
            linear_max_iterations: 50_000,
            linear_solver: LinearSolverKind::Auto,
            keep_iterates: false,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.rho > 0.0 && self.rho < 1.0) {
            v.push(format!("rho must lie in (0, 1), got {}", self.rho));
        }
        if !(self.sigma > 0.0 && self.sigma < 0.5) {
            v.push(format!("sigma must lie in (0, 1/2), got {}", self.sigma));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            v.push(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.linear_tol > 0.0 && self.linear_tol < 1.0) {
            v.push(format!("linear_tol must lie in (0, 1), got {}", self.linear_tol));
        }
        if self.max_outer_iterations == 0 {
            v.push("max_outer_iterations must be at least 1".into());
        }
        if self.linear_max_iterations == 0 {
            v.push("linear_max_iterations must be at least 1".into());
        }
        if let MetricChoice::FixedPoint { nu_bar } = self.metric {
            if !(nu_bar > 0.0 && nu_bar.is_finite()) {
                v.push(format!("nu_bar must be positive, got {nu_bar}"));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// One row of the iteration trace.
///
/// Step rows have `tau > 0`. The last row describes the final iterate and
/// carries `tau = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: usize,
    /// `Φ(aⁿ)`.
    pub energy: f64,
    pub tau: f64,
    pub backtracks: u32,
    /// `‖curl δaⁿ‖` in the metric of step `n`.
    pub increment_norm: f64,
    pub linear_iterations: usize,
    /// `⟨∇Φ(aⁿ), δaⁿ⟩`.
    pub directional_derivative: f64,
    /// `Φ(aⁿ⁺¹) - Φ(aⁿ)` from pointwise increments.
    pub energy_change: f64,
}

impl IterationRecord {
    pub fn is_step(&self) -> bool {
        self.tau > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    ZeroDirection,
}

impl Termination {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
            Termination::ZeroDirection => "zero_direction",
        }
    }

    pub fn is_success(&self) -> bool {
        !matches!(self, Termination::MaxIterations)
    }
}

#[derive(Debug, Clone)]
pub struct DescentState {
    pub coefficients: Coefficients,
    pub trace: Vec<IterationRecord>,
    pub terminated: Termination,
    /// `‖curl δa⁰‖` of the Newton step at the initial iterate.
    pub reference_scale: f64,
    /// Number of times the run's own metric matrix was assembled.
    pub metric_assemblies: usize,
    pub factorizations: usize,
    pub iterates: Vec<Coefficients>,
}

impl DescentState {
    /// Number of accepted steps.
    pub fn iterations(&self) -> usize {
        self.trace.iter().filter(|r| r.is_step()).count()
    }

    pub fn final_energy(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.energy)
    }

    pub fn steps(&self) -> impl Iterator<Item = &IterationRecord> {
        self.trace.iter().filter(|r| r.is_step())
    }
}

/// Update direction with its metric norm and solver effort.
#[derive(Debug, Clone)]
pub struct Direction {
    pub delta: Vec<f64>,
    /// `δᵀ M δ`.
    pub norm_sq: f64,
    pub linear_iterations: usize,
}

enum Operator {
    Iterative(CsrMatrix),
    Factored(CsrMatrix, EnvelopeCholesky),
}

impl Operator {
    fn new(matrix: CsrMatrix, direct: bool) -> Result<Self> {
        if direct {
            let chol = EnvelopeCholesky::factor(&matrix)?;
            Ok(Operator::Factored(matrix, chol))
        } else {
            Ok(Operator::Iterative(matrix))
        }
    }

    fn matrix(&self) -> &CsrMatrix {
        match self {
            Operator::Iterative(m) | Operator::Factored(m, _) => m,
        }
    }

    fn solve_direction(&self, residual: &[f64], config: &SolverConfig) -> Result<Direction> {
        let rhs: Vec<f64> = residual.iter().map(|r| -r).collect();
        let (delta, iterations) = match self {
            Operator::Factored(_, chol) => (chol.solve(&rhs)?, 0),
            Operator::Iterative(m) => {
                let (x, report) = cg_solve(m, &rhs, config.linear_tol, config.linear_max_iterations)?;
                if !report.converged {
                    return Err(Error::LinearSolve {
                        iterations: report.iterations,
                        residual: report.relative_residual,
                    });
                }
                (x, report.iterations)
            }
        };
        let md = spmv(self.matrix(), &delta)?;
        Ok(Direction {
            norm_sq: dot(&delta, &md).max(0.0),
            delta,
            linear_iterations: iterations,
        })
    }
}

fn uses_direct(config: &SolverConfig, metric: MetricChoice) -> bool {
    match config.linear_solver {
        LinearSolverKind::Cg => false,
        LinearSolverKind::Direct => true,
        LinearSolverKind::Auto => !metric.depends_on_iterate(),
    }
}

/// Solves the update problem in `metric` at `a`.
pub fn compute_direction(
    problem: &FeProblem,
    a: &Coefficients,
    metric: MetricChoice,
    config: &SolverConfig,
) -> Result<Direction> {
    let matrix = problem.assemble_metric(a, metric)?;
    let op = Operator::new(matrix, uses_direct(config, metric))?;
    op.solve_direction(&problem.assemble_residual(a), config)
}

/// Largest `τ = ρᵏ` with `Φ(a + τδ) ≤ Φ(a) + σ τ d`, where `d < 0` is the
/// directional derivative. Returns `(τ, k, Φ(a + τδ) - Φ(a))`.
pub fn armijo_stepsize(
    mut energy_change: impl FnMut(f64) -> f64,
    directional_derivative: f64,
    rho: f64,
    sigma: f64,
    max_backtracks: usize,
) -> Result<(f64, u32, f64)> {
    if !(directional_derivative < 0.0) {
        return Err(Error::Numerical(format!(
            "Armijo search needs a descent direction, directional derivative is {directional_derivative:e}"
        )));
    }
    for k in 0..=max_backtracks {
        let tau = rho.powi(k as i32);
        let change = energy_change(tau);
        if change <= sigma * tau * directional_derivative {
            return Ok((tau, k as u32, change));
        }
    }
    Err(Error::Numerical(format!(
        "Armijo backtracking exceeded {max_backtracks} reductions"
    )))
}

/// Runs the descent iteration from `a0` (zero if `None`).
pub fn run(problem: &FeProblem, config: &SolverConfig, a0: Option<Coefficients>) -> Result<DescentState> {
    config.validate()?;
    let n_free = problem.num_free();
    let mut a = a0.unwrap_or_else(|| Coefficients::zeros(n_free));
    if a.len() != n_free {
        return Err(Error::Usage(format!(
            "initial iterate has {} entries, problem has {n_free} free dofs",
            a.len()
        )));
    }
    let metric = config.metric;
    let direct = uses_direct(config, metric);

    let initial_residual = problem.assemble_residual(&a);
    let initial_gradient = norm2(&initial_residual);
    let newton_ref = {
        let matrix = problem.assemble_metric(&a, MetricChoice::Newton)?;
        let op = Operator::new(matrix, uses_direct(config, MetricChoice::Newton))?;
        op.solve_direction(&initial_residual, config)?
    };
    let reference_scale = newton_ref.norm_sq.sqrt();
    let tolerance = config.epsilon * reference_scale;
    let mut pending = matches!(metric, MetricChoice::Newton).then_some(newton_ref);

    let mut state = DescentState {
        coefficients: a.clone(),
        trace: Vec::new(),
        terminated: Termination::MaxIterations,
        reference_scale,
        metric_assemblies: usize::from(pending.is_some()),
        factorizations: usize::from(pending.is_some() && uses_direct(config, MetricChoice::Newton)),
        iterates: Vec::new(),
    };
    let mut frozen: Option<Operator> = None;
    let mut energy = problem.total_energy(&a);
    let terminal = |n: usize, energy: f64, increment_norm: f64| IterationRecord {
        n,
        energy,
        tau: 0.0,
        backtracks: 0,
        increment_norm,
        linear_iterations: 0,
        directional_derivative: 0.0,
        energy_change: 0.0,
    };

    for n in 0..=config.max_outer_iterations {
        if config.keep_iterates {
            state.iterates.push(a.clone());
        }
        if n == config.max_outer_iterations {
            state.trace.push(terminal(n, energy, f64::NAN));
            state.terminated = Termination::MaxIterations;
            break;
        }
        let direction = match pending.take() {
            Some(d) => d,
            None => {
                let residual = problem.assemble_residual(&a);
                if norm2(&residual) <= config.linear_tol * initial_gradient {
                    state.trace.push(terminal(n, energy, f64::NAN));
                    state.terminated = Termination::ZeroDirection;
                    break;
                }
                if metric.depends_on_iterate() {
                    let op = Operator::new(problem.assemble_metric(&a, metric)?, direct)?;
                    state.metric_assemblies += 1;
                    state.factorizations += usize::from(direct);
                    op.solve_direction(&residual, config)?
                } else {
                    if frozen.is_none() {
                        frozen = Some(Operator::new(problem.assemble_metric(&a, metric)?, direct)?);
                        state.metric_assemblies += 1;
                        state.factorizations += usize::from(direct);
                    }
                    frozen.as_ref().unwrap().solve_direction(&residual, config)?
                }
            }
        };
        let increment_norm = direction.norm_sq.sqrt();
        let roundoff = ZERO_DIRECTION_ROUNDOFF * problem.energy_magnitude(&a).sqrt();
        if increment_norm <= ZERO_DIRECTION_RELATIVE * reference_scale || increment_norm <= roundoff {
            state.trace.push(terminal(n, energy, increment_norm));
            state.terminated = Termination::ZeroDirection;
            break;
        }
        let slope = -direction.norm_sq;
        let (tau, backtracks, change) = armijo_stepsize(
            |tau| problem.energy_change(&a, &direction.delta, tau),
            slope,
            config.rho,
            config.sigma,
            config.max_backtracks,
        )?;
        state.trace.push(IterationRecord {
            n,
            energy,
            tau,
            backtracks,
            increment_norm,
            linear_iterations: direction.linear_iterations,
            directional_derivative: slope,
            energy_change: change,
        });
        a = a.axpy(tau, &direction.delta);
        energy = problem.total_energy(&a);
        if change.abs() < tolerance {
            if config.keep_iterates {
                state.iterates.push(a.clone());
            }
            state.trace.push(terminal(n + 1, energy, f64::NAN));
            state.terminated = Termination::Converged;
            break;
        }
    }
    state.coefficients = a;
    Ok(state)
}

/// Writes the trace as CSV.
pub fn write_trace_csv<W: Write>(trace: &[IterationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in trace {
        w.serialize(r).map_err(|e| Error::Parse(format!("trace csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::Parse(format!("trace csv: {e}")))?;
    Ok(())
}

/// Reads a trace CSV; lines starting with `#` are skipped.
pub fn read_trace_csv<R: Read>(reader: R) -> Result<Vec<IterationRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut trace = Vec::new();
    for (row, rec) in rdr.deserialize::<IterationRecord>().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("trace csv row {}: {e}", row + 1)))?;
        trace.push(rec);
    }
    Ok(trace)
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<IterationRecord>> {
    read_trace_csv(text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn armijo_quadratic_by_hand() {
        // Φ(t) = t²/2 from t = 1 along δ = -1: Φ(1 - τ) - Φ(1)
        let change = |tau: f64| 0.5 * (1.0 - tau).powi(2) - 0.5;
        let (tau, k, c) = armijo_stepsize(change, -1.0, 0.5, 0.25, 10).unwrap();
        assert_eq!((tau, k), (1.0, 0));
        assert_eq!(c, -0.5);
    }

    #[test]
    fn armijo_backtracks_on_overshoot() {
        // Φ(t) = 8 t²/2 from t = 1 along the gradient step δ = -8
        let change = |tau: f64| 4.0 * (1.0 - 8.0 * tau).powi(2) - 4.0;
        let (tau, k, _) = armijo_stepsize(change, -64.0, 0.5, 0.25, 10).unwrap();
        assert_eq!((tau, k), (0.125, 3));
        assert!(armijo_stepsize(|_| 1.0, -1.0, 0.5, 0.25, 5).is_err());
        assert!(armijo_stepsize(|_| -1.0, 0.0, 0.5, 0.25, 5).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::new(MetricChoice::Newton);
        assert!(c.validate().is_ok());
        c.sigma = 0.6;
        c.rho = 1.0;
        match c.validate() {
            Err(Error::Config(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trace_csv_round_trip() {
        let trace = vec![
            IterationRecord {
                n: 0,
                energy: -1.5,
                tau: 0.5,
                backtracks: 1,
                increment_norm: 2.0,
                linear_iterations: 7,
                directional_derivative: -4.0,
                energy_change: -0.25,
            },
            IterationRecord {
                n: 1,
                energy: -1.75,
                tau: 0.0,
                backtracks: 0,
                increment_norm: f64::NAN,
                linear_iterations: 0,
                directional_derivative: 0.0,
                energy_change: 0.0,
            },
        ];
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,energy,tau,backtracks,increment_norm,linear_iterations"));
        let back = parse_trace_csv(&format!("# header\n{text}")).unwrap();
        assert_eq!(back[0], trace[0]);
        assert!(back[1].increment_norm.is_nan());
        assert!(parse_trace_csv("n,energy\n1,2\n").is_err());
    }
}
