use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nlmag::config::{parse_config, parse_config_str, Method, StudyConfig, DESK_CONFIG};
use nlmag::descent::read_trace_csv;
use nlmag::study::{self, Cell, StudyOptions};
use nlmag::{certify, ConvergenceCertificate};

#[derive(Parser)]
#[command(name = "nlmag", version, about = "Nonlinear 2D magnetostatics solver and convergence study driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single (method, h, p) cell.
    Solve(CellArgs),
    /// Run the full sweep of the config.
    Study(StudyArgs),
    /// Recompute the certificate of a trace and check the observed decay.
    Certify(CertifyArgs),
    /// Solve a cell and write the field as legacy VTK.
    Export(ExportArgs),
    /// Scan fixed-point reluctivities on one cell.
    Tune(TuneArgs),
    /// Print the bundled desk config.
    Init,
}

#[derive(Args)]
struct ConfigArg {
    /// Study config (TOML); the bundled desk config if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CellArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, default_value = "newton")]
    method: Method,
    #[arg(long = "h-level", default_value_t = 1)]
    h_level: u32,
    #[arg(long, default_value_t = 1)]
    order: u8,
    /// Directory for the trace and certificate.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Restrict the sweep to one method.
    #[arg(long)]
    method: Option<Method>,
    /// Restrict the sweep to one mesh level.
    #[arg(long = "h-level")]
    h_level: Option<u32>,
    /// Restrict the sweep to one element order.
    #[arg(long)]
    order: Option<u8>,
    /// Also write a VTK field per converged cell.
    #[arg(long)]
    fields: bool,
}

#[derive(Args)]
struct CertifyArgs {
    /// Trace CSV written by `solve` or `study`.
    trace: PathBuf,
    /// Recompute the certificate from this config instead of the trace header.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Method of the trace; read from the header if omitted.
    #[arg(long)]
    method: Option<Method>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    cell: CellArgs,
    /// Output VTK file; defaults to field_<cell>.vtk in --out or the working directory.
    #[arg(long)]
    file: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long = "h-level", default_value_t = 1)]
    h_level: u32,
    #[arg(long, default_value_t = 1)]
    order: u8,
    #[arg(long, default_value_t = 1e3)]
    lo: f64,
    #[arg(long, default_value_t = 1e6)]
    hi: f64,
    #[arg(long, default_value_t = 13)]
    count: usize,
    #[arg(long, default_value_t = 20_000)]
    max_iterations: usize,
}

fn load(arg: &ConfigArg) -> Result<StudyConfig> {
    match &arg.config {
        Some(path) => parse_config(path).with_context(|| format!("reading {}", path.display())),
        None => Ok(parse_config_str(DESK_CONFIG)?),
    }
}

fn solve(args: &CellArgs) -> Result<bool> {
    let config = load(&args.config)?;
    let materials = config.material_table()?;
    let cell = Cell {
        method: args.method,
        order: args.order,
        h_level: args.h_level,
    };
    let solved = study::solve_cell(&config, &materials, cell)?;
    let r = &solved.result;
    println!(
        "{} p={} h={}: {} dofs, {} iterations, {}, energy {:.12e}",
        cell.method,
        cell.order,
        cell.h_level,
        r.dofs,
        r.iterations,
        r.termination.map_or("error", |t| t.name()),
        r.final_energy
    );
    print!("{}", study::cell_header(r));
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(format!("trace_{}.csv", cell.stem()));
        let mut text = String::new();
        for line in study::cell_header(r).lines() {
            text.push_str("# ");
            text.push_str(line);
            text.push('\n');
        }
        let mut buf = Vec::new();
        nlmag::descent::write_trace_csv(&solved.state.trace, &mut buf)?;
        text.push_str(std::str::from_utf8(&buf)?);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(r.converged())
}

fn run_study(args: &StudyArgs) -> Result<bool> {
    let mut config = load(&args.config)?;
    if let Some(m) = args.method {
        config.solver(m)?;
        config.methods = vec![m];
    }
    if let Some(h) = args.h_level {
        config.h_levels = vec![h];
    }
    if let Some(p) = args.order {
        config.orders = vec![p];
    }
    let options = StudyOptions {
        threads: args.threads,
        write_fields: args.fields,
        output: args.out.clone(),
    };
    let result = study::run_study(&config, &options)?;
    print!("{}", result.summary_csv());
    for c in result.cells.iter().filter(|c| !c.converged()) {
        eprintln!(
            "cell {} did not converge: {}",
            c.cell.stem(),
            c.error.as_deref().unwrap_or(c.termination.map_or("error", |t| t.name()))
        );
    }
    Ok(result.all_converged())
}

fn header_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .filter_map(|l| l.strip_prefix('#'))
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == key)
        .map(|(_, v)| v.trim())
}

fn certify_trace(args: &CertifyArgs) -> Result<bool> {
    let text = std::fs::read_to_string(&args.trace).with_context(|| format!("reading {}", args.trace.display()))?;
    let trace = read_trace_csv(text.as_bytes())?;
    if trace.is_empty() {
        bail!("{} holds no iterations", args.trace.display());
    }
    let cert = match &args.config {
        Some(path) => {
            let config = parse_config(path).with_context(|| format!("reading {}", path.display()))?;
            let method = match args.method {
                Some(m) => m,
                None => header_value(&text, "method")
                    .context("trace header names no method; pass --method")?
                    .parse()?,
            };
            study::certificate_for(&config, &config.material_table()?, config.solver(method)?)?
        }
        None => ConvergenceCertificate::parse(&text).context("trace header carries no certificate; pass --config")?,
    };
    let report = certify::check_decay(&trace, certify::estimate_minimum(&trace), &cert);
    print!("{}", cert.to_text());
    print!("{}", report.to_text());
    Ok(report.ok())
}

fn export(args: &ExportArgs) -> Result<bool> {
    let cell_args = &args.cell;
    let config = load(&cell_args.config)?;
    let materials = config.material_table()?;
    let cell = Cell {
        method: cell_args.method,
        order: cell_args.order,
        h_level: cell_args.h_level,
    };
    let solved = study::solve_cell(&config, &materials, cell)?;
    let path = match (&args.file, &cell_args.out) {
        (Some(f), _) => f.clone(),
        (None, Some(dir)) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            dir.join(format!("field_{}.vtk", cell.stem()))
        }
        (None, None) => Path::new(".").join(format!("field_{}.vtk", cell.stem())),
    };
    study::export_field(&solved.problem, &solved.state.coefficients, &path)?;
    println!("wrote {}", path.display());
    Ok(solved.result.converged())
}

fn tune(args: &TuneArgs) -> Result<bool> {
    let config = load(&args.config)?;
    if !(args.lo > 0.0 && args.hi >= args.lo) || args.count == 0 {
        bail!("need 0 < lo <= hi and count >= 1");
    }
    let grid = study::geometric_grid(args.lo, args.hi, args.count);
    let scan = study::scan_nu_bar(&config, &grid, args.h_level, args.order, args.max_iterations)?;
    println!("nu_bar,iterations");
    for (nu, it) in &scan {
        println!("{nu:.6e},{}", it.map_or("-".to_string(), |n| n.to_string()));
    }
    let best = scan
        .iter()
        .filter_map(|&(nu, it)| it.map(|n| (n, nu)))
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    match best {
        Some((n, nu)) => {
            println!("best nu_bar = {nu:.6e} ({n} iterations)");
            Ok(true)
        }
        None => {
            eprintln!("no candidate converged");
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Study(a) => run_study(a),
        Command::Certify(a) => certify_trace(a),
        Command::Export(a) => export(a),
        Command::Tune(a) => tune(a),
        Command::Init => {
            print!("{DESK_CONFIG}");
            Ok(true)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
