//! Lagrange finite-element discretization of the magnetic energy
//!
//! `Φ(a) = ∫ w(curl a) dx - ∫ j a dx`
//!
//! for the scalar 2D vector potential with `curl a = (∂a/∂y, -∂a/∂x)` and
//! `a = 0` on the boundary. The source enters as `∫ j a`, which equals
//! `∫ h_s · curl a` for any source field with `curl h_s = j`.

mod dofs;
mod quadrature;

use std::collections::BTreeMap;

pub use dofs::DofMap;
pub use quadrature::QuadratureRule;

use crate::error::{Error, Result};
use crate::linsolve::CsrMatrix;
use crate::material::{Flux2, MaterialLaw, SymTensor2};
use crate::mesh::{Point2, RegionId, TriMesh};

/// Material law per region.
pub type MaterialTable = BTreeMap<RegionId, MaterialLaw>;

/// Current density per region (A/m²); regions not listed carry no current.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourceSpec {
    pub current_density: BTreeMap<RegionId, f64>,
}

impl SourceSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with(mut self, region: RegionId, j: f64) -> Self {
        self.current_density.insert(region, j);
        self
    }

    pub fn get(&self, region: RegionId) -> f64 {
        self.current_density.get(&region).copied().unwrap_or(0.0)
    }
}

/// Values of the vector potential on the free (unconstrained) dofs.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients(pub Vec<f64>);

impl Coefficients {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `self + tau * dir`.
    pub fn axpy(&self, tau: f64, dir: &[f64]) -> Coefficients {
        Coefficients(self.0.iter().zip(dir).map(|(a, d)| a + tau * d).collect())
    }
}

/// Reluctivity used in the linear update problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricChoice {
    /// Constant scalar reluctivity `ν̄`.
    FixedPoint { nu_bar: f64 },
    /// Chord reluctivity `ν_ch(|curl a|)`.
    Kacanov,
    /// Differential reluctivity `∂²w(curl a)`.
    Newton,
}

impl MetricChoice {
    pub fn name(&self) -> &'static str {
        match self {
            MetricChoice::FixedPoint { .. } => "fixedpoint",
            MetricChoice::Kacanov => "kacanov",
            MetricChoice::Newton => "newton",
        }
    }

    /// Whether the metric matrix depends on the current iterate.
    pub fn depends_on_iterate(&self) -> bool {
        !matches!(self, MetricChoice::FixedPoint { .. })
    }
}

/// Discrete problem: mesh, dofs, quadrature tables, materials and sources.
#[derive(Debug, Clone)]
pub struct FeProblem {
    mesh: TriMesh,
    dofs: DofMap,
    quad: QuadratureRule,
    /// `laws[law_of[t]]` is the law of triangle `t`.
    laws: Vec<MaterialLaw>,
    law_of: Vec<usize>,
    source: Vec<f64>,
    /// Basis values per quadrature point, `quad × nloc`.
    shape: Vec<f64>,
    /// `w_q · area` per triangle and quadrature point.
    jxw: Vec<f64>,
    /// Basis curls `R ∇φ` per triangle, quadrature point and local dof.
    curls: Vec<Flux2>,
    pattern: CsrMatrix,
    /// CSR slot of every local (i, j) pair, `usize::MAX` if constrained.
    scatter: Vec<usize>,
}

impl FeProblem {
    pub fn new(mesh: TriMesh, order: u8, materials: &MaterialTable, source: &SourceSpec) -> Result<Self> {
        let dofs = DofMap::new(&mesh, order)?;
        let quad = QuadratureRule::for_order(order);

        let mut missing = Vec::new();
        let mut laws = Vec::new();
        let mut index_of: BTreeMap<RegionId, usize> = BTreeMap::new();
        let mut law_of = Vec::with_capacity(mesh.num_triangles());
        for &region in mesh.regions() {
            match materials.get(&region) {
                Some(law) => {
                    let idx = *index_of.entry(region).or_insert_with(|| {
                        laws.push(law.clone());
                        laws.len() - 1
                    });
                    law_of.push(idx);
                }
                None => {
                    if !missing.contains(&region) {
                        missing.push(region);
                    }
                    law_of.push(0);
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::Config(
                missing
                    .iter()
                    .map(|r| format!("no material law for region {r}"))
                    .collect(),
            ));
        }
        let mut bad_source = Vec::new();
        for (region, j) in &source.current_density {
            if !j.is_finite() {
                bad_source.push(format!("current density of region {region} is not finite"));
            }
        }
        if !bad_source.is_empty() {
            return Err(Error::Config(bad_source));
        }
        let source_per_tri = mesh.regions().iter().map(|&r| source.get(r)).collect();

        let nloc = dofs.local_size();
        let nq = quad.len();
        let mut shape = Vec::with_capacity(nq * nloc);
        for lam in quad.points() {
            shape.extend(basis_values(order, lam));
        }
        let mut jxw = Vec::with_capacity(mesh.num_triangles() * nq);
        let mut curls = Vec::with_capacity(mesh.num_triangles() * nq * nloc);
        for t in 0..mesh.num_triangles() {
            let area = mesh.signed_area(t);
            let grad_lam = barycentric_gradients(&mesh.vertices(t), area);
            for (lam, w) in quad.points().iter().zip(quad.weights()) {
                // reference weights sum to 1/2
                jxw.push(2.0 * w * area);
                for g in basis_gradients(order, lam, &grad_lam) {
                    curls.push(Flux2::new(g[1], -g[0]));
                }
            }
        }

        let (pattern, scatter) = build_pattern(&mesh, &dofs);
        Ok(Self {
            mesh,
            dofs,
            quad,
            laws,
            law_of,
            source: source_per_tri,
            shape,
            jxw,
            curls,
            pattern,
            scatter,
        })
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn order(&self) -> u8 {
        self.dofs.order()
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quad
    }

    pub fn num_free(&self) -> usize {
        self.dofs.num_free()
    }

    pub fn law(&self, t: usize) -> &MaterialLaw {
        &self.laws[self.law_of[t]]
    }

    pub fn laws(&self) -> &[MaterialLaw] {
        &self.laws
    }

    pub fn all_isotropic(&self) -> bool {
        self.laws.iter().all(MaterialLaw::is_isotropic)
    }

    /// Full dof vector with zero boundary values.
    pub fn lift(&self, a: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.dofs.num_dofs()];
        for (k, &dof) in self.dofs.free_dofs().iter().enumerate() {
            full[dof] = a[k];
        }
        full
    }

    /// Restriction of a full dof vector to the free dofs.
    pub fn restrict(&self, full: &[f64]) -> Coefficients {
        Coefficients(self.dofs.free_dofs().iter().map(|&d| full[d]).collect())
    }

    /// Nodal interpolant of `f` on all dofs, boundary included.
    pub fn interpolate_full(&self, f: impl Fn(Point2) -> f64) -> Vec<f64> {
        self.dofs.points().iter().map(|&p| f(p)).collect()
    }

    /// Nodal interpolant of `f` on the free dofs.
    pub fn interpolate(&self, f: impl Fn(Point2) -> f64) -> Coefficients {
        self.restrict(&self.interpolate_full(f))
    }

    fn nloc(&self) -> usize {
        self.dofs.local_size()
    }

    fn curl_index(&self, t: usize, q: usize) -> usize {
        (t * self.quad.len() + q) * self.nloc()
    }

    /// `curl a` at quadrature point `q` of triangle `t`, `a` a full vector.
    pub fn eval_curl(&self, a_full: &[f64], t: usize, q: usize) -> Flux2 {
        let base = self.curl_index(t, q);
        let mut b = Flux2::ZERO;
        for (k, &dof) in self.dofs.element_dofs(t).iter().enumerate() {
            let c = self.curls[base + k];
            b.bx += a_full[dof] * c.bx;
            b.by += a_full[dof] * c.by;
        }
        b
    }

    /// `curl a` at an arbitrary barycentric point of triangle `t`.
    pub fn eval_curl_at(&self, a_full: &[f64], t: usize, lam: &[f64; 3]) -> Flux2 {
        let area = self.mesh.signed_area(t);
        let grad_lam = barycentric_gradients(&self.mesh.vertices(t), area);
        let mut b = Flux2::ZERO;
        for (g, &dof) in basis_gradients(self.order(), lam, &grad_lam)
            .iter()
            .zip(self.dofs.element_dofs(t))
        {
            b.bx += a_full[dof] * g[1];
            b.by -= a_full[dof] * g[0];
        }
        b
    }

    /// Value of the FE function at a barycentric point of triangle `t`.
    pub fn eval_at(&self, a_full: &[f64], t: usize, lam: &[f64; 3]) -> f64 {
        basis_values(self.order(), lam)
            .iter()
            .zip(self.dofs.element_dofs(t))
            .map(|(phi, &dof)| phi * a_full[dof])
            .sum()
    }

    fn value_at_quad(&self, a_full: &[f64], t: usize, q: usize) -> f64 {
        let nloc = self.nloc();
        let shape = &self.shape[q * nloc..(q + 1) * nloc];
        shape
            .iter()
            .zip(self.dofs.element_dofs(t))
            .map(|(phi, &dof)| phi * a_full[dof])
            .sum()
    }

    /// `Φ(a)` for free coefficients.
    pub fn total_energy(&self, a: &Coefficients) -> f64 {
        self.total_energy_full(&self.lift(&a.0))
    }

    /// `Φ(a)` for a full dof vector.
    pub fn total_energy_full(&self, a_full: &[f64]) -> f64 {
        let mut total = 0.0;
        for t in 0..self.mesh.num_triangles() {
            let law = self.law(t);
            let j = self.source[t];
            let mut elem = 0.0;
            for q in 0..self.quad.len() {
                let w = self.jxw[t * self.quad.len() + q];
                let b = self.eval_curl(a_full, t, q);
                elem += w * law.energy_density(b);
                if j != 0.0 {
                    elem -= w * j * self.value_at_quad(a_full, t, q);
                }
            }
            total += elem;
        }
        total
    }

    /// `∫ |w(curl a)| + |j a|`, the scale against which roundoff in `Φ` is
    /// measured.
    pub fn energy_magnitude(&self, a: &Coefficients) -> f64 {
        let a_full = self.lift(&a.0);
        let mut total = 0.0;
        for t in 0..self.mesh.num_triangles() {
            let law = self.law(t);
            let j = self.source[t];
            for q in 0..self.quad.len() {
                let w = self.jxw[t * self.quad.len() + q];
                total += w * law.energy_density(self.eval_curl(&a_full, t, q)).abs();
                if j != 0.0 {
                    total += w * (j * self.value_at_quad(&a_full, t, q)).abs();
                }
            }
        }
        total
    }

    /// `Φ(a + τ δ) - Φ(a)` summed from pointwise energy increments, accurate
    /// even when the change is tiny relative to `Φ`.
    pub fn energy_change(&self, a: &Coefficients, dir: &[f64], tau: f64) -> f64 {
        let a_full = self.lift(&a.0);
        let d_full: Vec<f64> = self.lift(dir).into_iter().map(|d| tau * d).collect();
        let mut total = 0.0;
        for t in 0..self.mesh.num_triangles() {
            let law = self.law(t);
            let j = self.source[t];
            for q in 0..self.quad.len() {
                let w = self.jxw[t * self.quad.len() + q];
                let b = self.eval_curl(&a_full, t, q);
                let db = self.eval_curl(&d_full, t, q);
                total += w * law.energy_increment(b, db);
                if j != 0.0 {
                    total -= w * j * self.value_at_quad(&d_full, t, q);
                }
            }
        }
        total
    }

    /// Gradient of `Φ` with respect to the free coefficients:
    /// `⟨h(curl a), curl v⟩ - ⟨j, v⟩` for every free basis function `v`.
    pub fn assemble_residual(&self, a: &Coefficients) -> Vec<f64> {
        self.assemble_residual_full(&self.lift(&a.0))
    }

    pub fn assemble_residual_full(&self, a_full: &[f64]) -> Vec<f64> {
        let nloc = self.nloc();
        let mut r = vec![0.0; self.num_free()];
        let mut local = vec![0.0; nloc];
        for t in 0..self.mesh.num_triangles() {
            let law = self.law(t);
            let j = self.source[t];
            local.fill(0.0);
            for q in 0..self.quad.len() {
                let w = self.jxw[t * self.quad.len() + q];
                let h = law.field_intensity(self.eval_curl(a_full, t, q));
                let base = self.curl_index(t, q);
                let shape = &self.shape[q * nloc..(q + 1) * nloc];
                for k in 0..nloc {
                    local[k] += w * (h.dot_flux(self.curls[base + k]) - j * shape[k]);
                }
            }
            for (k, &dof) in self.dofs.element_dofs(t).iter().enumerate() {
                if let Some(i) = self.dofs.free_index(dof) {
                    r[i] += local[k];
                }
            }
        }
        r
    }

    /// Galerkin matrix of `⟨ν curl u, curl v⟩` over the free dofs.
    pub fn assemble_metric(&self, a: &Coefficients, choice: MetricChoice) -> Result<CsrMatrix> {
        self.assemble_metric_full(&self.lift(&a.0), choice)
    }

    pub fn assemble_metric_full(&self, a_full: &[f64], choice: MetricChoice) -> Result<CsrMatrix> {
        match choice {
            MetricChoice::Kacanov => {
                if let Some(law) = self.laws.iter().find(|l| !l.is_isotropic()) {
                    return Err(Error::UnsupportedMethod {
                        method: "Kacanov iteration",
                        detail: format!("region law is {}", law.kind_name()),
                    });
                }
            }
            MetricChoice::FixedPoint { nu_bar } => {
                if !(nu_bar.is_finite() && nu_bar > 0.0) {
                    return Err(Error::Usage(format!("fixed-point reluctivity must be positive, got {nu_bar}")));
                }
            }
            MetricChoice::Newton => {}
        }
        let nloc = self.nloc();
        let mut matrix = self.pattern.clone();
        let values = matrix.values_mut();
        let mut local = vec![0.0; nloc * nloc];
        for t in 0..self.mesh.num_triangles() {
            let law = self.law(t);
            local.fill(0.0);
            for q in 0..self.quad.len() {
                let w = self.jxw[t * self.quad.len() + q];
                let nu = match choice {
                    MetricChoice::FixedPoint { nu_bar } => SymTensor2::scalar(nu_bar),
                    MetricChoice::Kacanov => {
                        let s = self.eval_curl(a_full, t, q).norm();
                        SymTensor2::scalar(law.chord_reluctivity(s)?)
                    }
                    MetricChoice::Newton => law.differential_reluctivity(self.eval_curl(a_full, t, q)),
                };
                let base = self.curl_index(t, q);
                let curls = &self.curls[base..base + nloc];
                for (i, ci) in curls.iter().enumerate() {
                    let hi = nu.apply(*ci);
                    for (jdx, cj) in curls.iter().enumerate() {
                        local[i * nloc + jdx] += w * hi.dot_flux(*cj);
                    }
                }
            }
            let slots = &self.scatter[t * nloc * nloc..(t + 1) * nloc * nloc];
            for (slot, v) in slots.iter().zip(&local) {
                if *slot != usize::MAX {
                    values[*slot] += v;
                }
            }
        }
        Ok(matrix)
    }

    /// Stiffness matrix with unit reluctivity; `dᵀ K d = ‖curl d‖²`.
    pub fn unit_stiffness(&self) -> CsrMatrix {
        self.assemble_metric_full(&vec![0.0; self.dofs.num_dofs()], MetricChoice::FixedPoint { nu_bar: 1.0 })
            .expect("unit reluctivity is admissible")
    }

    /// `‖curl a‖²_{L²}` of a full dof vector.
    pub fn curl_seminorm_sq_full(&self, a_full: &[f64]) -> f64 {
        let mut total = 0.0;
        for t in 0..self.mesh.num_triangles() {
            for q in 0..self.quad.len() {
                let b = self.eval_curl(a_full, t, q);
                total += self.jxw[t * self.quad.len() + q] * b.dot(b);
            }
        }
        total
    }

    pub fn curl_seminorm(&self, a: &[f64]) -> f64 {
        self.curl_seminorm_sq_full(&self.lift(a)).sqrt()
    }

    /// Largest `|curl a|` over all quadrature points of triangles in `region`.
    pub fn max_flux_in(&self, a_full: &[f64], region: RegionId) -> f64 {
        let mut best = 0.0f64;
        for t in 0..self.mesh.num_triangles() {
            if self.mesh.regions()[t] != region {
                continue;
            }
            for q in 0..self.quad.len() {
                best = best.max(self.eval_curl(a_full, t, q).norm());
            }
        }
        best
    }
}

fn barycentric_gradients(v: &[Point2; 3], area: f64) -> [[f64; 2]; 3] {
    let inv = 1.0 / (2.0 * area);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (pj, pk) = (v[(i + 1) % 3], v[(i + 2) % 3]);
        g[i] = [(pj.y - pk.y) * inv, (pk.x - pj.x) * inv];
    }
    g
}

const EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

fn basis_values(order: u8, lam: &[f64; 3]) -> Vec<f64> {
    if order == 1 {
        return lam.to_vec();
    }
    let mut v: Vec<f64> = lam.iter().map(|l| l * (2.0 * l - 1.0)).collect();
    v.extend(EDGES.iter().map(|&(a, b)| 4.0 * lam[a] * lam[b]));
    v
}

fn basis_gradients(order: u8, lam: &[f64; 3], gl: &[[f64; 2]; 3]) -> Vec<[f64; 2]> {
    if order == 1 {
        return gl.to_vec();
    }
    let mut g: Vec<[f64; 2]> = (0..3)
        .map(|i| {
            let s = 4.0 * lam[i] - 1.0;
            [s * gl[i][0], s * gl[i][1]]
        })
        .collect();
    for &(a, b) in &EDGES {
        g.push([
            4.0 * (lam[a] * gl[b][0] + lam[b] * gl[a][0]),
            4.0 * (lam[a] * gl[b][1] + lam[b] * gl[a][1]),
        ]);
    }
    g
}

fn build_pattern(mesh: &TriMesh, dofs: &DofMap) -> (CsrMatrix, Vec<usize>) {
    let n = dofs.num_free();
    let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
    for t in 0..mesh.num_triangles() {
        let ed = dofs.element_dofs(t);
        for &a in ed {
            let Some(i) = dofs.free_index(a) else { continue };
            cols[i].extend(ed.iter().filter_map(|&b| dofs.free_index(b)));
        }
    }
    let mut row_ptr = vec![0];
    let mut col_idx = Vec::new();
    for row in &mut cols {
        row.sort_unstable();
        row.dedup();
        col_idx.extend_from_slice(row);
        row_ptr.push(col_idx.len());
    }
    let values = vec![0.0; col_idx.len()];
    let pattern = CsrMatrix::from_parts(n, row_ptr.clone(), col_idx.clone(), values)
        .expect("pattern is well formed");
    let nloc = dofs.local_size();
    let mut scatter = Vec::with_capacity(mesh.num_triangles() * nloc * nloc);
    for t in 0..mesh.num_triangles() {
        let ed = dofs.element_dofs(t);
        for &a in ed {
            for &b in ed {
                let slot = match (dofs.free_index(a), dofs.free_index(b)) {
                    (Some(i), Some(j)) => {
                        let row = &col_idx[row_ptr[i]..row_ptr[i + 1]];
                        row_ptr[i] + row.binary_search(&j).expect("column in pattern")
                    }
                    _ => usize::MAX,
                };
                scatter.push(slot);
            }
        }
    }
    (pattern, scatter)
}
