//! Study configuration files.
//!
//! The format is TOML: a `[domain]` box with its base grid, a `[background]`
//! material, one `[region.<name>]` table per material or coil region, the
//! `[study]` sweep, shared `[solver]` settings and per-method overrides in
//! `[method.fixedpoint]`, `[method.kacanov]` and `[method.newton]`.
//!
//! ```toml
//! [domain]
//! width = 0.16
//! height = 0.16
//! cells_x = 8
//! cells_y = 8
//!
//! [region.core]
//! id = 1
//! material = "bundled"
//! rects = [[0.04, 0.02, 0.12, 0.14]]
//!
//! [method.fixedpoint]
//! nu_bar = 6.31e3
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use toml::{Table, Value};

use crate::assembly::{MaterialTable, MetricChoice, SourceSpec};
use crate::descent::{LinearSolverKind, SolverConfig};
use crate::error::{Error, Result};
use crate::material::{bundled_law, read_bh_csv, Flux2, MaterialLaw, MonotoneSpline, NU0};
use crate::mesh::{GeometrySpec, Rect, RegionId, RegionSpec};

/// The bundled desk-scale study.
pub const DESK_CONFIG: &str = include_str!("../data/desk.toml");

/// Default sampled flux range for the curvature bounds (T).
pub const DEFAULT_S_MAX: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    FixedPoint,
    Kacanov,
    Newton,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::FixedPoint, Method::Kacanov, Method::Newton];

    pub fn name(self) -> &'static str {
        match self {
            Method::FixedPoint => "fixedpoint",
            Method::Kacanov => "kacanov",
            Method::Newton => "newton",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::FixedPoint => "fixed-point",
            Method::Kacanov => "Kacanov",
            Method::Newton => "Newton",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fixedpoint" | "fixed-point" | "fixed_point" => Ok(Method::FixedPoint),
            "kacanov" => Ok(Method::Kacanov),
            "newton" => Ok(Method::Newton),
            other => Err(Error::Usage(format!(
                "unknown method '{other}', expected fixedpoint, kacanov or newton"
            ))),
        }
    }
}

/// Material of one region as written in the config.
#[derive(Debug, Clone, PartialEq)]
pub enum MaterialSpec {
    Vacuum,
    Linear { nu: f64 },
    /// The bundled B-H curve.
    Bundled,
    /// B-H samples from a two-column CSV file.
    Csv { path: PathBuf },
    Magnet { nu: f64, remanence: [f64; 2] },
}

impl MaterialSpec {
    pub fn build(&self) -> Result<MaterialLaw> {
        Ok(match self {
            MaterialSpec::Vacuum => MaterialLaw::vacuum(),
            MaterialSpec::Linear { nu } => MaterialLaw::Linear { nu: *nu },
            MaterialSpec::Bundled => bundled_law(),
            MaterialSpec::Csv { path } => {
                let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
                let data = read_bh_csv(file)?;
                MaterialLaw::spline(MonotoneSpline::build(&data, None)?)
            }
            MaterialSpec::Magnet { nu, remanence } => MaterialLaw::PermanentMagnet {
                nu: *nu,
                remanence: Flux2::new(remanence[0], remanence[1]),
            },
        })
    }

    fn kind(&self) -> &'static str {
        match self {
            MaterialSpec::Vacuum => "vacuum",
            MaterialSpec::Linear { .. } => "linear",
            MaterialSpec::Bundled => "bundled",
            MaterialSpec::Csv { .. } => "csv",
            MaterialSpec::Magnet { .. } => "magnet",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub geometry: GeometrySpec,
    pub background_material: MaterialSpec,
    /// Material of every non-background region.
    pub materials: BTreeMap<RegionId, MaterialSpec>,
    /// Current density per region (A/m²); absent means zero.
    pub sources: BTreeMap<RegionId, f64>,
    pub h_levels: Vec<u32>,
    pub orders: Vec<u8>,
    pub methods: Vec<Method>,
    /// Settings of every method the file fully determines. The fixed-point
    /// entry exists only when `nu_bar` is given.
    pub solvers: BTreeMap<Method, SolverConfig>,
    /// Constant value of `a⁰` at free dofs.
    pub initial_value: f64,
    pub s_max: f64,
    pub output: PathBuf,
}

impl StudyConfig {
    pub fn solver(&self, method: Method) -> Result<&SolverConfig> {
        self.solvers.get(&method).ok_or_else(|| {
            Error::config(format!(
                "no settings for {method}; the fixed-point method needs method.fixedpoint.nu_bar"
            ))
        })
    }

    pub fn material_table(&self) -> Result<MaterialTable> {
        let mut table = MaterialTable::new();
        table.insert(self.geometry.background, self.background_material.build()?);
        for (id, spec) in &self.materials {
            table.insert(*id, spec.build()?);
        }
        Ok(table)
    }

    pub fn source(&self) -> SourceSpec {
        self.sources
            .iter()
            .fold(SourceSpec::none(), |s, (&id, &j)| s.with(id, j))
    }

    pub fn region_label(&self, id: RegionId) -> String {
        if id == self.geometry.background {
            "background".to_string()
        } else {
            self.geometry.region_name(id).unwrap_or("?").to_string()
        }
    }

    /// Re-serializes to the file format; [`parse_config_str`] reads it back
    /// to an equal value.
    pub fn to_toml(&self) -> String {
        let mut root = Table::new();
        let mut domain = Table::new();
        domain.insert("width".into(), Value::Float(self.geometry.width));
        domain.insert("height".into(), Value::Float(self.geometry.height));
        domain.insert("cells_x".into(), Value::Integer(self.geometry.cells_x as i64));
        domain.insert("cells_y".into(), Value::Integer(self.geometry.cells_y as i64));
        root.insert("domain".into(), Value::Table(domain));

        let mut background = Table::new();
        write_material(&mut background, &self.background_material);
        root.insert("background".into(), Value::Table(background));

        let mut regions = Table::new();
        for region in &self.geometry.regions {
            let mut t = Table::new();
            t.insert("id".into(), Value::Integer(i64::from(region.id.0)));
            let rects = region
                .rects
                .iter()
                .map(|r| Value::Array([r.x0, r.y0, r.x1, r.y1].map(Value::Float).to_vec()))
                .collect();
            t.insert("rects".into(), Value::Array(rects));
            if let Some(spec) = self.materials.get(&region.id) {
                write_material(&mut t, spec);
            }
            if let Some(&j) = self.sources.get(&region.id) {
                t.insert("current_density".into(), Value::Float(j));
            }
            regions.insert(region.name.clone(), Value::Table(t));
        }
        if !regions.is_empty() {
            root.insert("region".into(), Value::Table(regions));
        }

        let mut study = Table::new();
        study.insert(
            "h_levels".into(),
            Value::Array(self.h_levels.iter().map(|&h| Value::Integer(i64::from(h))).collect()),
        );
        study.insert(
            "orders".into(),
            Value::Array(self.orders.iter().map(|&p| Value::Integer(i64::from(p))).collect()),
        );
        study.insert(
            "methods".into(),
            Value::Array(self.methods.iter().map(|m| Value::String(m.name().into())).collect()),
        );
        study.insert("output".into(), Value::String(self.output.display().to_string()));
        study.insert("s_max".into(), Value::Float(self.s_max));
        study.insert("initial_value".into(), Value::Float(self.initial_value));
        root.insert("study".into(), Value::Table(study));

        let mut methods = Table::new();
        for (method, cfg) in &self.solvers {
            let mut t = Table::new();
            if let MetricChoice::FixedPoint { nu_bar } = cfg.metric {
                t.insert("nu_bar".into(), Value::Float(nu_bar));
            }
            t.insert("rho".into(), Value::Float(cfg.rho));
            t.insert("sigma".into(), Value::Float(cfg.sigma));
            t.insert("epsilon".into(), Value::Float(cfg.epsilon));
            t.insert("max_iterations".into(), Value::Integer(cfg.max_outer_iterations as i64));
            t.insert("max_backtracks".into(), Value::Integer(cfg.max_backtracks as i64));
            t.insert("linear_tol".into(), Value::Float(cfg.linear_tol));
            t.insert(
                "linear_max_iterations".into(),
                Value::Integer(cfg.linear_max_iterations as i64),
            );
            t.insert("linear_solver".into(), Value::String(cfg.linear_solver.name().into()));
            methods.insert(method.name().into(), Value::Table(t));
        }
        root.insert("method".into(), Value::Table(methods));
        toml::to_string(&root).expect("config tables serialize")
    }
}

fn write_material(t: &mut Table, spec: &MaterialSpec) {
    t.insert("material".into(), Value::String(spec.kind().into()));
    match spec {
        MaterialSpec::Vacuum | MaterialSpec::Bundled => {}
        MaterialSpec::Linear { nu } => {
            t.insert("nu".into(), Value::Float(*nu));
        }
        MaterialSpec::Csv { path } => {
            t.insert("path".into(), Value::String(path.display().to_string()));
        }
        MaterialSpec::Magnet { nu, remanence } => {
            t.insert("nu".into(), Value::Float(*nu));
            t.insert("remanence".into(), Value::Array(remanence.map(Value::Float).to_vec()));
        }
    }
}

/// Reads and validates a config file. Relative CSV paths resolve against
/// the file's directory.
pub fn parse_config(path: impl AsRef<Path>) -> Result<StudyConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config_str(&text)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let rebase = |spec: &mut MaterialSpec| {
        if let MaterialSpec::Csv { path } = spec {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    };
    rebase(&mut cfg.background_material);
    cfg.materials.values_mut().for_each(rebase);
    Ok(cfg)
}

/// Parses config text, reporting every violation found.
pub fn parse_config_str(text: &str) -> Result<StudyConfig> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(vec![format!("malformed TOML: {}", e.message())]))?;
    let mut r = Reader::default();
    r.known(&root, "", &["domain", "background", "region", "study", "solver", "method"]);

    let empty = Table::new();
    let domain = r.table(&root, "", "domain").unwrap_or(&empty);
    r.known(domain, "domain", &["width", "height", "cells_x", "cells_y"]);
    let width = r.req_f64(domain, "domain", "width");
    let height = r.req_f64(domain, "domain", "height");
    let cells_x = r.req_usize(domain, "domain", "cells_x");
    let cells_y = r.req_usize(domain, "domain", "cells_y");

    let background = r.table(&root, "", "background").unwrap_or(&empty);
    r.known(background, "background", &MATERIAL_KEYS);
    let background_material = r.material(background, "background");

    let mut regions = Vec::new();
    let mut materials = BTreeMap::new();
    let mut sources = BTreeMap::new();
    if let Some(region_tables) = r.table(&root, "", "region") {
        for (name, value) in region_tables {
            let sect = format!("region.{name}");
            let Some(t) = value.as_table() else {
                r.err(format!("{sect} must be a table"));
                continue;
            };
            let mut keys = vec!["id", "rects", "current_density"];
            keys.extend(MATERIAL_KEYS);
            r.known(t, &sect, &keys);
            let id = r.req_usize(t, &sect, "id").and_then(|id| match u16::try_from(id) {
                Ok(id) if id > 0 => Some(RegionId(id)),
                _ => {
                    r.err(format!("{sect}.id must lie in 1..=65535, got {id}"));
                    None
                }
            });
            let rects = r.rects(t, &sect);
            let material = r.material(t, &sect);
            let j = r.opt_f64(t, &sect, "current_density");
            if let Some(j) = j {
                if !j.is_finite() {
                    r.err(format!("{sect}.current_density must be finite"));
                }
            }
            if let Some(id) = id {
                regions.push(RegionSpec {
                    id,
                    name: name.clone(),
                    rects: rects.unwrap_or_default(),
                });
                if let Some(m) = material {
                    materials.insert(id, m);
                }
                if let Some(j) = j {
                    sources.insert(id, j);
                }
            }
        }
    }

    let study = r.table(&root, "", "study").unwrap_or(&empty);
    r.known(study, "study", &["h_levels", "orders", "methods", "output", "s_max", "initial_value"]);
    let h_levels = r
        .opt_uint_list(study, "study", "h_levels")
        .unwrap_or_else(|| vec![1, 2, 3])
        .into_iter()
        .map(|h| h as u32)
        .collect::<Vec<_>>();
    let orders = r
        .opt_uint_list(study, "study", "orders")
        .unwrap_or_else(|| vec![1, 2])
        .into_iter()
        .map(|p| p as u8)
        .collect::<Vec<_>>();
    if h_levels.is_empty() {
        r.err("study.h_levels must not be empty".into());
    }
    if h_levels.iter().any(|&h| h > 12) {
        r.err("study.h_levels must not exceed 12".into());
    }
    if orders.is_empty() {
        r.err("study.orders must not be empty".into());
    }
    if orders.iter().any(|&p| p != 1 && p != 2) {
        r.err(format!("study.orders must contain only 1 and 2, got {orders:?}"));
    }
    let methods = match study.get("methods") {
        None => Method::ALL.to_vec(),
        Some(v) => {
            let mut out = Vec::new();
            match v.as_array() {
                Some(items) if !items.is_empty() => {
                    for item in items {
                        match item.as_str().map(Method::from_str) {
                            Some(Ok(m)) if !out.contains(&m) => out.push(m),
                            Some(Ok(m)) => r.err(format!("study.methods lists {m} twice")),
                            _ => r.err(format!("study.methods: unknown method {item}")),
                        }
                    }
                }
                _ => r.err("study.methods must be a nonempty array of method names".into()),
            }
            out
        }
    };
    let output = r
        .opt_str(study, "study", "output")
        .map_or_else(|| PathBuf::from("out"), PathBuf::from);
    let s_max = r.opt_f64(study, "study", "s_max").unwrap_or(DEFAULT_S_MAX);
    if !(s_max > 0.0 && s_max.is_finite()) {
        r.err(format!("study.s_max must be positive, got {s_max}"));
    }
    let initial_value = r.opt_f64(study, "study", "initial_value").unwrap_or(0.0);
    if !initial_value.is_finite() {
        r.err("study.initial_value must be finite".into());
    }

    let shared = r.table(&root, "", "solver").unwrap_or(&empty);
    r.known(shared, "solver", &SOLVER_KEYS);
    let method_tables = r.table(&root, "", "method").unwrap_or(&empty);
    r.known(method_tables, "method", &["fixedpoint", "kacanov", "newton"]);
    let mut solvers = BTreeMap::new();
    for method in Method::ALL {
        let sect = format!("method.{}", method.name());
        let own = r.table(method_tables, "method", method.name()).unwrap_or(&empty);
        let mut keys = SOLVER_KEYS.to_vec();
        if method == Method::FixedPoint {
            keys.push("nu_bar");
        } else if own.contains_key("nu_bar") {
            r.err(format!("{sect}.nu_bar applies only to the fixed-point method"));
        }
        r.known(own, &sect, &keys);
        let metric = match method {
            Method::Kacanov => Some(MetricChoice::Kacanov),
            Method::Newton => Some(MetricChoice::Newton),
            Method::FixedPoint => {
                let nu_bar = r.opt_f64(own, &sect, "nu_bar");
                if nu_bar.is_none() && methods.contains(&Method::FixedPoint) {
                    r.err(format!("missing required key {sect}.nu_bar"));
                }
                nu_bar.map(|nu_bar| MetricChoice::FixedPoint { nu_bar })
            }
        };
        let mut cfg = SolverConfig::new(metric.unwrap_or(MetricChoice::Newton));
        for (t, s) in [(shared, "solver"), (own, sect.as_str())] {
            r.solver_keys(t, s, &mut cfg);
        }
        if metric.is_some() {
            for v in cfg.violations() {
                if !r.errors.contains(&format!("{sect}: {v}")) {
                    r.err(format!("{sect}: {v}"));
                }
            }
            solvers.insert(method, cfg);
        }
    }

    let geometry = GeometrySpec {
        width: width.unwrap_or(f64::NAN),
        height: height.unwrap_or(f64::NAN),
        cells_x: cells_x.unwrap_or(0),
        cells_y: cells_y.unwrap_or(0),
        background: RegionId::BACKGROUND,
        regions,
    };
    if width.is_some() && height.is_some() && cells_x.is_some() && cells_y.is_some() {
        if let Err(Error::Config(v)) = geometry.validate() {
            r.errors.extend(v);
        }
    }
    if !r.errors.is_empty() {
        return Err(Error::Config(r.errors));
    }
    Ok(StudyConfig {
        geometry,
        background_material: background_material.unwrap_or(MaterialSpec::Vacuum),
        materials,
        sources,
        h_levels,
        orders,
        methods,
        solvers,
        initial_value,
        s_max,
        output,
    })
}

const MATERIAL_KEYS: [&str; 5] = ["material", "nu", "mu_r", "path", "remanence"];

const SOLVER_KEYS: [&str; 8] = [
    "rho",
    "sigma",
    "epsilon",
    "max_iterations",
    "max_backtracks",
    "linear_tol",
    "linear_max_iterations",
    "linear_solver",
];

#[derive(Default)]
struct Reader {
    errors: Vec<String>,
}

fn key_path(sect: &str, key: &str) -> String {
    if sect.is_empty() {
        key.to_string()
    } else {
        format!("{sect}.{key}")
    }
}

impl Reader {
    fn err(&mut self, msg: String) {
        self.errors.push(msg);
    }

    fn known(&mut self, t: &Table, sect: &str, keys: &[&str]) {
        for k in t.keys() {
            if !keys.contains(&k.as_str()) {
                self.err(format!("unknown key {}", key_path(sect, k)));
            }
        }
    }

    fn table<'a>(&mut self, t: &'a Table, sect: &str, key: &str) -> Option<&'a Table> {
        match t.get(key) {
            None => None,
            Some(Value::Table(inner)) => Some(inner),
            Some(_) => {
                self.err(format!("{} must be a table", key_path(sect, key)));
                None
            }
        }
    }

    fn opt_f64(&mut self, t: &Table, sect: &str, key: &str) -> Option<f64> {
        match t.get(key)? {
            Value::Float(v) => Some(*v),
            Value::Integer(v) => Some(*v as f64),
            other => {
                self.err(format!("{} must be a number, got {other}", key_path(sect, key)));
                None
            }
        }
    }

    fn req_f64(&mut self, t: &Table, sect: &str, key: &str) -> Option<f64> {
        if !t.contains_key(key) {
            self.err(format!("missing required key {}", key_path(sect, key)));
        }
        self.opt_f64(t, sect, key)
    }

    fn opt_usize(&mut self, t: &Table, sect: &str, key: &str) -> Option<usize> {
        match t.get(key)? {
            Value::Integer(v) if *v >= 0 => Some(*v as usize),
            other => {
                self.err(format!("{} must be a nonnegative integer, got {other}", key_path(sect, key)));
                None
            }
        }
    }

    fn req_usize(&mut self, t: &Table, sect: &str, key: &str) -> Option<usize> {
        if !t.contains_key(key) {
            self.err(format!("missing required key {}", key_path(sect, key)));
        }
        self.opt_usize(t, sect, key)
    }

    fn opt_str<'a>(&mut self, t: &'a Table, sect: &str, key: &str) -> Option<&'a str> {
        match t.get(key)? {
            Value::String(s) => Some(s),
            other => {
                self.err(format!("{} must be a string, got {other}", key_path(sect, key)));
                None
            }
        }
    }

    fn opt_uint_list(&mut self, t: &Table, sect: &str, key: &str) -> Option<Vec<u64>> {
        let v = t.get(key)?;
        let items = v.as_array().and_then(|a| {
            a.iter()
                .map(|x| x.as_integer().and_then(|i| u64::try_from(i).ok()))
                .collect::<Option<Vec<_>>>()
        });
        if items.is_none() {
            self.err(format!("{} must be an array of nonnegative integers", key_path(sect, key)));
        }
        Some(items.unwrap_or_default())
    }

    fn numbers(v: &Value) -> Option<Vec<f64>> {
        v.as_array()?
            .iter()
            .map(|x| match x {
                Value::Float(f) => Some(*f),
                Value::Integer(i) => Some(*i as f64),
                _ => None,
            })
            .collect()
    }

    fn rects(&mut self, t: &Table, sect: &str) -> Option<Vec<Rect>> {
        let Some(v) = t.get("rects") else {
            self.err(format!("missing required key {sect}.rects"));
            return None;
        };
        let rects = v.as_array().and_then(|items| {
            items
                .iter()
                .map(|item| match Self::numbers(item)?.as_slice() {
                    &[x0, y0, x1, y1] => Some(Rect::new(x0, y0, x1, y1)),
                    _ => None,
                })
                .collect::<Option<Vec<_>>>()
        });
        match rects {
            Some(r) if !r.is_empty() => Some(r),
            _ => {
                self.err(format!("{sect}.rects must be a nonempty array of [x0, y0, x1, y1]"));
                None
            }
        }
    }

    fn positive(&mut self, t: &Table, sect: &str, key: &str) -> Option<f64> {
        let v = self.opt_f64(t, sect, key)?;
        if !(v > 0.0 && v.is_finite()) {
            self.err(format!("{} must be positive, got {v}", key_path(sect, key)));
            return None;
        }
        Some(v)
    }

    /// `nu` directly or `mu_r` relative to vacuum.
    fn reluctivity(&mut self, t: &Table, sect: &str) -> Option<f64> {
        match (t.contains_key("nu"), t.contains_key("mu_r")) {
            (true, true) => {
                self.err(format!("{sect}: give either nu or mu_r, not both"));
                None
            }
            (true, false) => self.positive(t, sect, "nu"),
            (false, true) => self.positive(t, sect, "mu_r").map(|mu_r| NU0 / mu_r),
            (false, false) => {
                self.err(format!("missing required key {sect}.nu (or {sect}.mu_r)"));
                None
            }
        }
    }

    fn material(&mut self, t: &Table, sect: &str) -> Option<MaterialSpec> {
        let kind = self.opt_str(t, sect, "material").unwrap_or("vacuum");
        let allowed: &[&str] = match kind {
            "vacuum" | "bundled" => &[],
            "linear" => &["nu", "mu_r"],
            "csv" => &["path"],
            "magnet" => &["nu", "mu_r", "remanence"],
            other => {
                self.err(format!(
                    "{sect}.material: unknown material '{other}', expected vacuum, linear, bundled, csv or magnet"
                ));
                return None;
            }
        };
        for key in ["nu", "mu_r", "path", "remanence"] {
            if t.contains_key(key) && !allowed.contains(&key) {
                self.err(format!("{} does not apply to material '{kind}'", key_path(sect, key)));
            }
        }
        match kind {
            "vacuum" => Some(MaterialSpec::Vacuum),
            "bundled" => Some(MaterialSpec::Bundled),
            "linear" => self.reluctivity(t, sect).map(|nu| MaterialSpec::Linear { nu }),
            "csv" => match self.opt_str(t, sect, "path") {
                Some(p) => Some(MaterialSpec::Csv { path: PathBuf::from(p) }),
                None => {
                    self.err(format!("missing required key {sect}.path"));
                    None
                }
            },
            _ => {
                let nu = self.reluctivity(t, sect);
                let remanence = match t.get("remanence").map(Self::numbers) {
                    Some(Some(v)) if v.len() == 2 && v.iter().all(|x| x.is_finite()) => Some([v[0], v[1]]),
                    Some(_) => {
                        self.err(format!("{sect}.remanence must be [bx, by]"));
                        None
                    }
                    None => {
                        self.err(format!("missing required key {sect}.remanence"));
                        None
                    }
                };
                Some(MaterialSpec::Magnet {
                    nu: nu?,
                    remanence: remanence?,
                })
            }
        }
    }

    fn solver_keys(&mut self, t: &Table, sect: &str, cfg: &mut SolverConfig) {
        if let Some(v) = self.opt_f64(t, sect, "rho") {
            cfg.rho = v;
        }
        if let Some(v) = self.opt_f64(t, sect, "sigma") {
            cfg.sigma = v;
        }
        if let Some(v) = self.opt_f64(t, sect, "epsilon") {
            cfg.epsilon = v;
        }
        if let Some(v) = self.opt_usize(t, sect, "max_iterations") {
            cfg.max_outer_iterations = v;
        }
        if let Some(v) = self.opt_usize(t, sect, "max_backtracks") {
            cfg.max_backtracks = v;
        }
        if let Some(v) = self.opt_f64(t, sect, "linear_tol") {
            cfg.linear_tol = v;
        }
        if let Some(v) = self.opt_usize(t, sect, "linear_max_iterations") {
            cfg.linear_max_iterations = v;
        }
        if let Some(s) = self.opt_str(t, sect, "linear_solver") {
            match LinearSolverKind::parse(s) {
                Some(kind) => cfg.linear_solver = kind,
                None => self.err(format!("{sect}.linear_solver must be cg, direct or auto, got '{s}'")),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
[domain]
width = 1.0
height = 1.0
cells_x = 2
cells_y = 2

[region.iron]
id = 1
material = \"bundled\"
rects = [[0.0, 0.0, 0.5, 0.5]]
current_density = 10.0

[method.fixedpoint]
nu_bar = 7.98e4
";

    fn violations(text: &str) -> Vec<String> {
        match parse_config_str(text) {
            Err(Error::Config(v)) => v,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_lists_required_keys() {
        let v = violations("");
        for key in ["domain.width", "domain.height", "domain.cells_x", "domain.cells_y", "method.fixedpoint.nu_bar"] {
            assert!(v.iter().any(|m| m.contains(key)), "{key} missing from {v:?}");
        }
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        assert_eq!(cfg.h_levels, vec![1, 2, 3]);
        assert_eq!(cfg.orders, vec![1, 2]);
        assert_eq!(cfg.methods, Method::ALL.to_vec());
        assert_eq!(cfg.initial_value, 0.0);
        let newton = cfg.solver(Method::Newton).unwrap();
        assert_eq!((newton.rho, newton.sigma, newton.epsilon, newton.linear_tol), (0.5, 0.1, 1e-7, 1e-10));
        assert_eq!(
            cfg.solver(Method::FixedPoint).unwrap().metric,
            MetricChoice::FixedPoint { nu_bar: 7.98e4 }
        );
        assert_eq!(cfg.materials[&RegionId(1)], MaterialSpec::Bundled);
        assert_eq!(cfg.background_material, MaterialSpec::Vacuum);
        assert_eq!(cfg.source().get(RegionId(1)), 10.0);
    }

    #[test]
    fn round_trip() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        let again = parse_config_str(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
        let desk = parse_config_str(DESK_CONFIG).unwrap();
        assert_eq!(parse_config_str(&desk.to_toml()).unwrap(), desk);
    }

    #[test]
    fn rejects_large_sigma() {
        let text = format!("{MINIMAL}\n[solver]\nsigma = 0.6\n");
        let v = violations(&text);
        assert!(v.iter().any(|m| m.contains("sigma")), "{v:?}");
    }

    #[test]
    fn reports_every_violation() {
        let text = "
[domain]
width = -1.0
height = 1.0
cells_x = 2
cells_y = 2
colour = \"red\"

[region.a]
id = 1
rects = [[0.0, 0.0, 0.6, 0.6]]

[region.b]
id = 2
material = \"linear\"
rects = [[0.4, 0.4, 0.9, 0.9]]

[study]
orders = [3]
methods = [\"newton\", \"bfgs\"]
";
        let v = violations(text);
        assert!(v.iter().any(|m| m.contains("colour")), "{v:?}");
        assert!(v.iter().any(|m| m.contains("region.b.nu")), "{v:?}");
        assert!(v.iter().any(|m| m.contains("orders")), "{v:?}");
        assert!(v.iter().any(|m| m.contains("bfgs")), "{v:?}");
        assert!(v.len() >= 4);
    }

    #[test]
    fn overlapping_regions_rejected() {
        let text = "
[domain]
width = 1.0
height = 1.0
cells_x = 2
cells_y = 2
[region.a]
id = 1
rects = [[0.0, 0.0, 0.6, 0.6]]
[region.b]
id = 2
rects = [[0.4, 0.4, 0.9, 0.9]]
[study]
methods = [\"newton\"]
";
        let v = violations(text);
        assert!(v.iter().any(|m| m.contains("overlap")), "{v:?}");
    }

    #[test]
    fn mu_r_and_magnets() {
        let text = "
[domain]
width = 1.0
height = 1.0
cells_x = 2
cells_y = 2
[background]
material = \"linear\"
mu_r = 2.0
[region.pm]
id = 3
material = \"magnet\"
nu = 1e6
remanence = [0.0, 1.2]
rects = [[0.0, 0.0, 0.5, 0.5]]
[study]
methods = [\"newton\"]
";
        let cfg = parse_config_str(text).unwrap();
        assert_eq!(cfg.background_material, MaterialSpec::Linear { nu: NU0 / 2.0 });
        assert_eq!(
            cfg.materials[&RegionId(3)],
            MaterialSpec::Magnet {
                nu: 1e6,
                remanence: [0.0, 1.2]
            }
        );
        assert!(cfg.solver(Method::FixedPoint).is_err());
        assert_eq!(parse_config_str(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn malformed_toml() {
        let v = violations("[domain\nwidth = 1");
        assert!(v[0].contains("malformed"));
    }
}
