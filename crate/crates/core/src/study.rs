//! Sweeps over mesh level, element order and method, with per-cell traces,
//! certificates, a summary table and field snapshots.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::assembly::{Coefficients, FeProblem, MaterialTable, MetricChoice};
use crate::certify::{check_decay, estimate_minimum, CertReport, ConvergenceCertificate};
use crate::config::{Method, StudyConfig};
use crate::descent::{self, DescentState, SolverConfig, Termination};
use crate::error::{Error, Result};
use crate::mesh::generate_benchmark_mesh;

/// One `(method, h, p)` cell of the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub method: Method,
    pub order: u8,
    pub h_level: u32,
}

impl Cell {
    pub fn stem(&self) -> String {
        format!("{}_p{}_h{}", self.method.name(), self.order, self.h_level)
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    pub dofs: usize,
    /// Accepted outer steps.
    pub iterations: usize,
    pub termination: Option<Termination>,
    /// Set when the cell failed before producing a trace.
    pub error: Option<String>,
    pub final_energy: f64,
    pub certificate: Option<ConvergenceCertificate>,
    pub report: Option<CertReport>,
    /// Every accepted step lowered the energy.
    pub monotone: bool,
    pub metric_assemblies: usize,
    pub linear_iterations: usize,
    pub max_backtracks: u32,
    /// Smallest accepted step size.
    pub min_tau: f64,
    pub wall_time: Duration,
}

impl CellResult {
    pub fn converged(&self) -> bool {
        self.error.is_none() && self.termination.is_some_and(|t| t.is_success())
    }

    fn failed(cell: Cell, dofs: usize, err: &Error, wall_time: Duration) -> Self {
        Self {
            cell,
            dofs,
            iterations: 0,
            termination: None,
            error: Some(err.to_string()),
            final_energy: f64::NAN,
            certificate: None,
            report: None,
            monotone: true,
            metric_assemblies: 0,
            linear_iterations: 0,
            max_backtracks: 0,
            min_tau: f64::NAN,
            wall_time,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub cells: Vec<CellResult>,
    pub orders: Vec<u8>,
    pub h_levels: Vec<u32>,
    pub methods: Vec<Method>,
}

/// A solved cell, kept for export.
pub struct SolvedCell {
    pub problem: FeProblem,
    pub state: DescentState,
    pub result: CellResult,
}

#[derive(Debug, Clone, Default)]
pub struct StudyOptions {
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
    /// Write a VTK field file for every converged cell.
    pub write_fields: bool,
    /// Overrides the config's output directory.
    pub output: Option<PathBuf>,
}

/// Builds the discrete problem of one `(h, p)` cell.
pub fn build_problem(config: &StudyConfig, materials: &MaterialTable, h_level: u32, order: u8) -> Result<FeProblem> {
    let mesh = generate_benchmark_mesh(h_level, &config.geometry)?;
    FeProblem::new(mesh, order, materials, &config.source())
}

/// Certificate for `metric` over the configured materials.
pub fn certificate_for(config: &StudyConfig, materials: &MaterialTable, solver: &SolverConfig) -> Result<ConvergenceCertificate> {
    let laws: Vec<_> = materials.values().cloned().collect();
    ConvergenceCertificate::for_problem(&laws, solver.metric, config.s_max, solver.rho, solver.sigma)
}

/// Solves one cell with the given solver settings.
pub fn solve_cell_with(
    config: &StudyConfig,
    materials: &MaterialTable,
    cell: Cell,
    solver: &SolverConfig,
) -> Result<SolvedCell> {
    let start = Instant::now();
    let problem = build_problem(config, materials, cell.h_level, cell.order)?;
    let a0 = Coefficients(vec![config.initial_value; problem.num_free()]);
    let state = descent::run(&problem, solver, Some(a0))?;
    let certificate = certificate_for(config, materials, solver).ok();
    let report = certificate.map(|c| check_decay(&state.trace, estimate_minimum(&state.trace), &c));
    let result = CellResult {
        cell,
        dofs: problem.num_free(),
        iterations: state.iterations(),
        termination: Some(state.terminated),
        error: None,
        final_energy: state.final_energy(),
        certificate,
        report,
        monotone: state.steps().all(|r| r.energy_change < 0.0),
        metric_assemblies: state.metric_assemblies,
        linear_iterations: state.trace.iter().map(|r| r.linear_iterations).sum(),
        max_backtracks: state.steps().map(|r| r.backtracks).max().unwrap_or(0),
        min_tau: state.steps().map(|r| r.tau).fold(f64::INFINITY, f64::min),
        wall_time: start.elapsed(),
    };
    Ok(SolvedCell { problem, state, result })
}

pub fn solve_cell(config: &StudyConfig, materials: &MaterialTable, cell: Cell) -> Result<SolvedCell> {
    solve_cell_with(config, materials, cell, config.solver(cell.method)?)
}

fn dof_count(config: &StudyConfig, materials: &MaterialTable, h_level: u32, order: u8) -> usize {
    build_problem(config, materials, h_level, order).map_or(0, |p| p.num_free())
}

/// Cells in summary order: methods as configured, then `p`, then `h`.
pub fn cells_of(config: &StudyConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &method in &config.methods {
        for &order in &config.orders {
            for &h_level in &config.h_levels {
                cells.push(Cell { method, order, h_level });
            }
        }
    }
    cells
}

/// Runs every cell, writing per-cell traces and certificates, then the
/// summary. A failing cell is recorded without aborting the sweep.
pub fn run_study(config: &StudyConfig, options: &StudyOptions) -> Result<StudyResult> {
    let out = options.output.clone().unwrap_or_else(|| config.output.clone());
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    fs::write(out.join("config.toml"), config.to_toml()).map_err(|e| Error::io(out.join("config.toml"), e))?;
    let materials = config.material_table()?;
    let cells = cells_of(config);

    let work = |cell: Cell| -> Result<CellResult> {
        let start = Instant::now();
        match solve_cell(config, &materials, cell) {
            Ok(solved) => {
                write_cell_files(&out, &solved, options.write_fields)?;
                Ok(solved.result)
            }
            Err(e) => {
                let dofs = dof_count(config, &materials, cell.h_level, cell.order);
                Ok(CellResult::failed(cell, dofs, &e, start.elapsed()))
            }
        }
    };
    let results: Result<Vec<CellResult>> = match options.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Usage(format!("thread pool: {e}")))?
            .install(|| cells.par_iter().map(|&c| work(c)).collect()),
        None => cells.par_iter().map(|&c| work(c)).collect(),
    };
    let result = StudyResult {
        cells: results?,
        orders: config.orders.clone(),
        h_levels: config.h_levels.clone(),
        methods: config.methods.clone(),
    };
    for (name, text) in [
        ("summary.csv", result.summary_csv()),
        ("cells.csv", result.cells_csv()),
        ("timings.csv", result.timings_csv()),
    ] {
        let path = out.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(result)
}

fn write_cell_files(out: &Path, solved: &SolvedCell, write_fields: bool) -> Result<()> {
    let stem = solved.result.cell.stem();
    let trace_path = out.join(format!("trace_{stem}.csv"));
    let file = fs::File::create(&trace_path).map_err(|e| Error::io(&trace_path, e))?;
    let mut w = BufWriter::new(file);
    let header = cell_header(&solved.result);
    for line in header.lines() {
        writeln!(w, "# {line}").map_err(|e| Error::io(&trace_path, e))?;
    }
    descent::write_trace_csv(&solved.state.trace, &mut w)?;
    w.flush().map_err(|e| Error::io(&trace_path, e))?;

    let cert_path = out.join(format!("cert_{stem}.txt"));
    fs::write(&cert_path, header).map_err(|e| Error::io(&cert_path, e))?;

    if write_fields && solved.result.converged() {
        export_field(&solved.problem, &solved.state.coefficients, out.join(format!("field_{stem}.vtk")))?;
    }
    Ok(())
}

/// Certificate and decay report of a cell as key-value text.
pub fn cell_header(result: &CellResult) -> String {
    let mut s = String::new();
    let c = result.cell;
    let _ = writeln!(s, "method = {}", c.method.name());
    let _ = writeln!(s, "order = {}", c.order);
    let _ = writeln!(s, "h_level = {}", c.h_level);
    let _ = writeln!(s, "dofs = {}", result.dofs);
    let _ = writeln!(s, "iterations = {}", result.iterations);
    let _ = writeln!(
        s,
        "termination = {}",
        result.termination.map_or("error", |t| t.name())
    );
    if let Some(cert) = &result.certificate {
        s.push_str(&cert.to_text());
    }
    if let Some(report) = &result.report {
        s.push_str(&report.to_text());
    }
    s
}

fn column_label(order: u8, h_level: u32) -> String {
    format!("p{order}_h{h_level}")
}

impl StudyResult {
    pub fn all_converged(&self) -> bool {
        self.cells.iter().all(CellResult::converged)
    }

    pub fn get(&self, method: Method, order: u8, h_level: u32) -> Option<&CellResult> {
        let key = Cell { method, order, h_level };
        self.cells.iter().find(|c| c.cell == key)
    }

    fn columns(&self) -> Vec<(u8, u32)> {
        self.orders
            .iter()
            .flat_map(|&p| self.h_levels.iter().map(move |&h| (p, h)))
            .collect()
    }

    /// Iteration table: a dof row, then one row per method with the
    /// iteration count per `(p, h)` column (`-` where the cell did not
    /// converge), the guaranteed contraction factor and whether every cell
    /// of the row satisfied its certificate.
    pub fn summary_csv(&self) -> String {
        let cols = self.columns();
        let mut s = String::from("row");
        for &(p, h) in &cols {
            s.push(',');
            s.push_str(&column_label(p, h));
        }
        s.push_str(",q,certified\n");
        s.push_str("dofs");
        for &(p, h) in &cols {
            let dofs = self
                .cells
                .iter()
                .find(|c| c.cell.order == p && c.cell.h_level == h)
                .map_or(0, |c| c.dofs);
            let _ = write!(s, ",{dofs}");
        }
        s.push_str(",,\n");
        for &m in &self.methods {
            s.push_str(m.label());
            let mut certified = true;
            let mut q = None;
            for &(p, h) in &cols {
                match self.get(m, p, h) {
                    Some(c) if c.converged() => {
                        let _ = write!(s, ",{}", c.iterations);
                        certified &= c.report.as_ref().is_some_and(CertReport::ok);
                        q = q.or(c.certificate.map(|c| c.q));
                    }
                    _ => {
                        s.push_str(",-");
                        certified = false;
                    }
                }
            }
            let q = q.map_or_else(|| "-".to_string(), |q| format!("{q:.6e}"));
            let _ = writeln!(s, ",{q},{}", if certified { "yes" } else { "no" });
        }
        s
    }

    /// One row per cell with everything except timing.
    pub fn cells_csv(&self) -> String {
        let mut s = String::from(
            "method,order,h_level,dofs,iterations,termination,final_energy,metric_assemblies,linear_iterations,max_backtracks,tau_star,q,max_gap_ratio,certified,error\n",
        );
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{:.15e},{},{},{},{},{},{},{},{}",
                c.cell.method.name(),
                c.cell.order,
                c.cell.h_level,
                c.dofs,
                c.iterations,
                c.termination.map_or("error", |t| t.name()),
                c.final_energy,
                c.metric_assemblies,
                c.linear_iterations,
                c.max_backtracks,
                c.certificate.map_or("-".into(), |x| format!("{:.6e}", x.tau_star)),
                c.certificate.map_or("-".into(), |x| format!("{:.6e}", x.q)),
                c.report.as_ref().map_or("-".into(), |r| format!("{:.6e}", r.max_ratio())),
                c.report.as_ref().is_some_and(CertReport::ok),
                c.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
            );
        }
        s
    }

    pub fn timings_csv(&self) -> String {
        let mut s = String::from("method,order,h_level,seconds\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{:.3}",
                c.cell.method.name(),
                c.cell.order,
                c.cell.h_level,
                c.wall_time.as_secs_f64()
            );
        }
        s
    }
}

/// Legacy-VTK unstructured grid: vertices with the nodal potential, and per
/// triangle `|curl a|` at the centroid and the region id.
pub fn write_vtk<W: Write>(problem: &FeProblem, a: &Coefficients, out: W) -> std::io::Result<()> {
    write_vtk_full(problem, &problem.lift(&a.0), out)
}

/// As [`write_vtk`] for a full dof vector, boundary values included.
pub fn write_vtk_full<W: Write>(problem: &FeProblem, full: &[f64], mut out: W) -> std::io::Result<()> {
    let mesh = problem.mesh();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "nlmag field p{} h{}", problem.order(), mesh.h_level())?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", mesh.num_nodes())?;
    for p in mesh.nodes() {
        writeln!(out, "{:e} {:e} 0", p.x, p.y)?;
    }
    let nt = mesh.num_triangles();
    writeln!(out, "CELLS {} {}", nt, 4 * nt)?;
    for t in mesh.triangles() {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(out, "5")?;
    }
    writeln!(out, "POINT_DATA {}", mesh.num_nodes())?;
    writeln!(out, "SCALARS a double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    // vertex dofs come first in the dof numbering
    for v in &full[..mesh.num_nodes()] {
        writeln!(out, "{v:e}")?;
    }
    writeln!(out, "CELL_DATA {nt}")?;
    writeln!(out, "SCALARS flux_density double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    let third = 1.0 / 3.0;
    for t in 0..nt {
        let b = problem.eval_curl_at(full, t, &[third, third, third]);
        writeln!(out, "{:e}", b.norm())?;
    }
    writeln!(out, "SCALARS region int 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for r in mesh.regions() {
        writeln!(out, "{}", r.0)?;
    }
    Ok(())
}

pub fn export_field(problem: &FeProblem, a: &Coefficients, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_vtk(problem, a, &mut w)
        .and_then(|()| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// `n` values spaced geometrically from `lo` to `hi`.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let ratio = (hi / lo).ln() / (n - 1) as f64;
            (0..n).map(|i| lo * (ratio * i as f64).exp()).collect()
        }
    }
}

/// Fixed-point iteration count for every candidate `ν̄` on one cell;
/// `None` where the run did not converge.
pub fn scan_nu_bar(
    config: &StudyConfig,
    candidates: &[f64],
    h_level: u32,
    order: u8,
    max_iterations: usize,
) -> Result<Vec<(f64, Option<usize>)>> {
    let materials = config.material_table()?;
    let base = config
        .solvers
        .get(&Method::FixedPoint)
        .or_else(|| config.solvers.get(&Method::Newton))
        .cloned()
        .ok_or_else(|| Error::config("no solver settings"))?;
    let cell = Cell {
        method: Method::FixedPoint,
        order,
        h_level,
    };
    candidates
        .par_iter()
        .map(|&nu_bar| {
            let solver = SolverConfig {
                metric: MetricChoice::FixedPoint { nu_bar },
                max_outer_iterations: max_iterations,
                ..base.clone()
            };
            let solved = solve_cell_with(config, &materials, cell, &solver)?;
            Ok((nu_bar, solved.result.converged().then_some(solved.result.iterations)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    fn linear_config() -> StudyConfig {
        parse_config_str(
            "
[domain]
width = 1.0
height = 1.0
cells_x = 2
cells_y = 2
[region.iron]
id = 1
material = \"linear\"
mu_r = 100.0
rects = [[0.0, 0.0, 0.5, 1.0]]
current_density = 1.0
[study]
h_levels = [0, 1]
orders = [1, 2]
[method.fixedpoint]
nu_bar = 1e5
",
        )
        .unwrap()
    }

    #[test]
    fn linear_study_one_iteration_everywhere() {
        let cfg = linear_config();
        let dir = tempfile::tempdir().unwrap();
        let opts = StudyOptions {
            output: Some(dir.path().to_path_buf()),
            write_fields: true,
            threads: Some(2),
        };
        let res = run_study(&cfg, &opts).unwrap();
        assert!(res.all_converged());
        for c in res.cells.iter().filter(|c| c.cell.method == Method::Newton) {
            assert_eq!(c.iterations, 1, "{:?}", c.cell);
        }
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert!(summary.starts_with("row,p1_h0,p1_h1,p2_h0,p2_h1,q,certified\n"));
        assert!(summary.contains("\nNewton,1,1,1,1,"));
        assert!(dir.path().join("trace_newton_p2_h1.csv").exists());
        assert!(dir.path().join("field_kacanov_p1_h0.vtk").exists());
        let trace = fs::read_to_string(dir.path().join("trace_newton_p1_h0.csv")).unwrap();
        let parsed = descent::parse_trace_csv(&trace).unwrap();
        assert_eq!(parsed.len(), 2);
        let cert = ConvergenceCertificate::parse(&trace).unwrap();
        assert_eq!(Some(cert), res.get(Method::Newton, 1, 0).unwrap().certificate);
    }

    #[test]
    fn failing_cell_is_recorded() {
        let mut cfg = linear_config();
        cfg.methods = vec![Method::Newton];
        cfg.h_levels = vec![2];
        cfg.orders = vec![1];
        cfg.solvers.get_mut(&Method::Newton).unwrap().linear_max_iterations = 1;
        cfg.solvers.get_mut(&Method::Newton).unwrap().linear_solver = crate::descent::LinearSolverKind::Cg;
        let dir = tempfile::tempdir().unwrap();
        let opts = StudyOptions {
            output: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let res = run_study(&cfg, &opts).unwrap();
        assert!(!res.all_converged());
        assert!(res.cells[0].error.is_some());
        assert!(res.summary_csv().contains("Newton,-,"));
    }

    #[test]
    fn vtk_of_linear_potential() {
        let cfg = linear_config();
        let materials = cfg.material_table().unwrap();
        let problem = build_problem(&cfg, &materials, 1, 2).unwrap();
        let mut buf = Vec::new();
        write_vtk(&problem, &Coefficients::zeros(problem.num_free()), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let nt = problem.mesh().num_triangles();
        assert!(text.contains(&format!("CELL_DATA {nt}")));
        let flux: Vec<&str> = text
            .split("SCALARS flux_density double 1\nLOOKUP_TABLE default\n")
            .nth(1)
            .unwrap()
            .lines()
            .take(nt)
            .collect();
        assert!(flux.iter().all(|l| l.parse::<f64>().unwrap() == 0.0));
    }

    #[test]
    fn grid_endpoints() {
        let g = geometric_grid(1e3, 1e5, 3);
        assert_eq!(g.len(), 3);
        assert!((g[1] - 1e4).abs() < 1e-6);
        assert!((g[2] - 1e5).abs() < 1e-6);
    }
}
