//! Structured triangular meshes over a rectangular box with rectangular
//! material regions.
//!
//! A mesh at refinement level `k` is the base grid of `cells_x × cells_y`
//! squares refined `k` times, each cell split along its lower-left to
//! upper-right diagonal. Because red refinement of such a grid reproduces the
//! finer structured grid triangle for triangle, [`generate_benchmark_mesh`]
//! builds level `k` directly in lexicographic node order, and
//! [`TriMesh::refine_uniform`] is available for arbitrary meshes.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn midpoint(self, other: Point2) -> Point2 {
        Point2::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }
}

/// Material region label attached to every triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegionId(pub u16);

impl RegionId {
    pub const BACKGROUND: RegionId = RegionId(0);
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains_point(&self, p: Point2) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    fn contains_rect(&self, other: &Rect) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }

    fn overlap_area(&self, other: &Rect) -> f64 {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    pub id: RegionId,
    pub name: String,
    pub rects: Vec<Rect>,
}

/// Box dimensions, base grid resolution and the region rectangles.
///
/// Triangles whose centroid lies in no rectangle belong to `background`.
/// Rectangles may touch or nest; where they nest the innermost one wins.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySpec {
    pub width: f64,
    pub height: f64,
    pub cells_x: usize,
    pub cells_y: usize,
    pub background: RegionId,
    pub regions: Vec<RegionSpec>,
}

impl GeometrySpec {
    /// Plain box without subregions.
    pub fn unit_square(cells: usize) -> Self {
        Self {
            width: 1.0,
            height: 1.0,
            cells_x: cells,
            cells_y: cells,
            background: RegionId::BACKGROUND,
            regions: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if !(self.width.is_finite() && self.width > 0.0) {
            errors.push(format!("box width must be positive, got {}", self.width));
        }
        if !(self.height.is_finite() && self.height > 0.0) {
            errors.push(format!("box height must be positive, got {}", self.height));
        }
        if self.cells_x == 0 || self.cells_y == 0 {
            errors.push("base grid needs at least one cell per direction".to_string());
        }
        let bbox = Rect::new(0.0, 0.0, self.width, self.height);
        let mut seen_ids = HashMap::new();
        let mut all: Vec<(&str, &Rect)> = Vec::new();
        for region in &self.regions {
            if region.id == self.background {
                errors.push(format!(
                    "region '{}' reuses the background id {}",
                    region.name, region.id
                ));
            }
            if let Some(prev) = seen_ids.insert(region.id, region.name.as_str()) {
                errors.push(format!(
                    "regions '{}' and '{}' share id {}",
                    prev, region.name, region.id
                ));
            }
            for r in &region.rects {
                let finite = [r.x0, r.y0, r.x1, r.y1].iter().all(|v| v.is_finite());
                if !finite || r.x1 <= r.x0 || r.y1 <= r.y0 {
                    errors.push(format!("region '{}': degenerate rectangle {:?}", region.name, r));
                    continue;
                }
                if !bbox.contains_rect(r) {
                    errors.push(format!("region '{}': rectangle {:?} leaves the box", region.name, r));
                }
                all.push((region.name.as_str(), r));
            }
        }
        for (i, (name_a, a)) in all.iter().enumerate() {
            for (name_b, b) in &all[i + 1..] {
                if a.overlap_area(b) <= 0.0 {
                    continue;
                }
                let nested = a.contains_rect(b) || b.contains_rect(a);
                if !nested || (a == b && name_a != name_b) {
                    errors.push(format!(
                        "rectangles of '{}' {:?} and '{}' {:?} overlap without nesting",
                        name_a, a, name_b, b
                    ));
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    /// Region of the innermost rectangle containing `p`.
    pub fn classify(&self, p: Point2) -> RegionId {
        let mut best: Option<(f64, RegionId)> = None;
        for region in &self.regions {
            for r in &region.rects {
                if r.contains_point(p) && best.is_none_or(|(area, _)| r.area() < area) {
                    best = Some((r.area(), region.id));
                }
            }
        }
        best.map_or(self.background, |(_, id)| id)
    }

    pub fn region_name(&self, id: RegionId) -> Option<&str> {
        self.regions
            .iter()
            .find(|r| r.id == id)
            .map(|r| r.name.as_str())
    }
}

/// Conforming triangulation with a region label per triangle.
#[derive(Debug, Clone)]
pub struct TriMesh {
    nodes: Vec<Point2>,
    triangles: Vec<[usize; 3]>,
    regions: Vec<RegionId>,
    boundary: Vec<bool>,
    h_level: u32,
}

impl TriMesh {
    /// Builds a mesh from raw parts. Triangles must be counter-clockwise;
    /// boundary flags are derived from the edge topology.
    pub fn from_parts(
        nodes: Vec<Point2>,
        triangles: Vec<[usize; 3]>,
        regions: Vec<RegionId>,
        h_level: u32,
    ) -> Result<Self> {
        if regions.len() != triangles.len() {
            return Err(Error::Usage(format!(
                "{} region labels for {} triangles",
                regions.len(),
                triangles.len()
            )));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nodes.len()) {
                return Err(Error::Usage(format!("triangle {t} references a missing node")));
            }
        }
        let mut mesh = Self {
            boundary: vec![false; nodes.len()],
            nodes,
            triangles,
            regions,
            h_level,
        };
        for t in 0..mesh.triangles.len() {
            if mesh.signed_area(t) <= 0.0 {
                return Err(Error::Usage(format!("triangle {t} is not counter-clockwise")));
            }
        }
        mesh.boundary = mesh.compute_boundary();
        Ok(mesh)
    }

    fn compute_boundary(&self) -> Vec<bool> {
        let mut boundary = vec![false; self.nodes.len()];
        for ((a, b), count) in self.edge_counts() {
            if count == 1 {
                boundary[a] = true;
                boundary[b] = true;
            }
        }
        boundary
    }

    /// Number of triangles sharing each undirected edge.
    pub fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                *counts.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn nodes(&self) -> &[Point2] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn regions(&self) -> &[RegionId] {
        &self.regions
    }

    pub fn h_level(&self) -> u32 {
        self.h_level
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.boundary
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn vertices(&self, t: usize) -> [Point2; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.vertices(t);
        0.5 * ((p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y))
    }

    pub fn centroid(&self, t: usize) -> Point2 {
        let [p0, p1, p2] = self.vertices(t);
        Point2::new((p0.x + p1.x + p2.x) / 3.0, (p0.y + p1.y + p2.y) / 3.0)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    pub fn locate_region(&self, tri_index: usize) -> Result<RegionId> {
        self.regions.get(tri_index).copied().ok_or_else(|| {
            Error::Usage(format!(
                "triangle index {tri_index} out of range (mesh has {})",
                self.triangles.len()
            ))
        })
    }

    /// Splits every triangle into four congruent children at the edge
    /// midpoints. Child `4 t + i` descends from parent `t`.
    pub fn refine_uniform(&self) -> TriMesh {
        let mut nodes = self.nodes.clone();
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        let mut regions = Vec::with_capacity(4 * self.triangles.len());
        for (tri, &region) in self.triangles.iter().zip(&self.regions) {
            let mut mid = [0usize; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                mid[k] = *midpoints.entry(edge_key(a, b)).or_insert_with(|| {
                    nodes.push(self.nodes[a].midpoint(self.nodes[b]));
                    nodes.len() - 1
                });
            }
            let [a, b, c] = *tri;
            let [ab, bc, ca] = mid;
            triangles.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
            regions.extend_from_slice(&[region; 4]);
        }
        let mut mesh = TriMesh {
            boundary: Vec::new(),
            nodes,
            triangles,
            regions,
            h_level: self.h_level + 1,
        };
        mesh.boundary = mesh.compute_boundary();
        mesh
    }

    /// Writes node, element and region lists as plain text.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# h_level {}", self.h_level)?;
        writeln!(out, "nodes {}", self.nodes.len())?;
        for (i, p) in self.nodes.iter().enumerate() {
            writeln!(out, "{} {:.17e} {:.17e} {}", i, p.x, p.y, u8::from(self.boundary[i]))?;
        }
        writeln!(out, "triangles {}", self.triangles.len())?;
        for (t, (tri, region)) in self.triangles.iter().zip(&self.regions).enumerate() {
            writeln!(out, "{} {} {} {} {}", t, tri[0], tri[1], tri[2], region)?;
        }
        Ok(())
    }
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Structured mesh of `geometry` at refinement level `h_level`.
pub fn generate_benchmark_mesh(h_level: u32, geometry: &GeometrySpec) -> Result<TriMesh> {
    geometry.validate()?;
    if h_level > 12 {
        return Err(Error::config(format!("h_level {h_level} is unreasonably large")));
    }
    let scale = 1usize << h_level;
    let nx = geometry.cells_x * scale;
    let ny = geometry.cells_y * scale;
    let dx = geometry.width / nx as f64;
    let dy = geometry.height / ny as f64;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            // exact endpoints keep boundary coordinates bit-identical across levels
            let x = if i == nx { geometry.width } else { i as f64 * dx };
            let y = if j == ny { geometry.height } else { j as f64 * dy };
            nodes.push(Point2::new(x, y));
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let regions = triangles
        .iter()
        .map(|tri| {
            let c = Point2::new(
                (nodes[tri[0]].x + nodes[tri[1]].x + nodes[tri[2]].x) / 3.0,
                (nodes[tri[0]].y + nodes[tri[1]].y + nodes[tri[2]].y) / 3.0,
            );
            geometry.classify(c)
        })
        .collect();
    TriMesh::from_parts(nodes, triangles, regions, h_level)
}

#[cfg(test)]
mod tests {
    use super::*;

    const IRON: RegionId = RegionId(1);

    fn iron_square() -> GeometrySpec {
        GeometrySpec {
            regions: vec![RegionSpec {
                id: IRON,
                name: "iron".into(),
                rects: vec![Rect::new(0.25, 0.25, 0.75, 0.75)],
            }],
            ..GeometrySpec::unit_square(4)
        }
    }

    #[test]
    fn base_grid_counts() {
        let mesh = generate_benchmark_mesh(0, &GeometrySpec::unit_square(2)).unwrap();
        assert_eq!(mesh.num_triangles(), 8);
        assert_eq!(mesh.num_nodes(), 9);
        assert_eq!(mesh.boundary_nodes().count(), 8);
        let mesh = generate_benchmark_mesh(1, &GeometrySpec::unit_square(2)).unwrap();
        assert_eq!(mesh.num_triangles(), 32);
        assert_eq!(mesh.num_nodes(), 25);
    }

    #[test]
    fn refine_quadruples_and_preserves_area() {
        let mesh = generate_benchmark_mesh(0, &GeometrySpec::unit_square(2)).unwrap();
        let fine = mesh.refine_uniform();
        assert_eq!(fine.num_triangles(), 32);
        assert_eq!(fine.h_level(), 1);
        for t in 0..mesh.num_triangles() {
            let children: f64 = (0..4).map(|c| fine.signed_area(4 * t + c)).sum();
            assert!((children - mesh.signed_area(t)).abs() < 1e-15);
        }
        for b in mesh.boundary_nodes() {
            assert!(fine.is_boundary_node(b));
        }
        assert_eq!(fine.refine_uniform().num_triangles(), 16 * mesh.num_triangles());
    }

    #[test]
    fn refinement_matches_direct_generation() {
        let geo = iron_square();
        let coarse = generate_benchmark_mesh(1, &geo).unwrap();
        let refined = coarse.refine_uniform();
        let direct = generate_benchmark_mesh(2, &geo).unwrap();
        let key = |m: &TriMesh, t: usize| {
            let c = m.centroid(t);
            ((c.x * 1e9).round() as i64, (c.y * 1e9).round() as i64, m.regions()[t])
        };
        let mut a: Vec<_> = (0..refined.num_triangles()).map(|t| key(&refined, t)).collect();
        let mut b: Vec<_> = (0..direct.num_triangles()).map(|t| key(&direct, t)).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn aligned_centroid_classification() {
        let mesh = generate_benchmark_mesh(0, &iron_square()).unwrap();
        let inside = Rect::new(0.25, 0.25, 0.75, 0.75);
        for t in 0..mesh.num_triangles() {
            let expected = if inside.contains_point(mesh.centroid(t)) {
                IRON
            } else {
                RegionId::BACKGROUND
            };
            assert_eq!(mesh.locate_region(t).unwrap(), expected);
        }
        assert_eq!(mesh.regions().iter().filter(|&&r| r == IRON).count(), 8);
    }

    #[test]
    fn children_inherit_region() {
        let mesh = generate_benchmark_mesh(0, &iron_square()).unwrap();
        let fine = mesh.refine_uniform();
        for t in 0..fine.num_triangles() {
            assert_eq!(fine.locate_region(t).unwrap(), mesh.locate_region(t / 4).unwrap());
        }
    }

    #[test]
    fn locate_region_out_of_range() {
        let mesh = generate_benchmark_mesh(0, &GeometrySpec::unit_square(2)).unwrap();
        assert_eq!(mesh.locate_region(3).unwrap(), RegionId::BACKGROUND);
        assert!(matches!(mesh.locate_region(8), Err(Error::Usage(_))));
    }

    #[test]
    fn overlapping_rectangles_rejected() {
        let mut geo = iron_square();
        geo.regions.push(RegionSpec {
            id: RegionId(2),
            name: "coil".into(),
            rects: vec![Rect::new(0.5, 0.5, 1.0, 1.0)],
        });
        assert!(matches!(generate_benchmark_mesh(0, &geo), Err(Error::Config(_))));
    }

    #[test]
    fn nested_rectangles_use_innermost() {
        let mut geo = iron_square();
        geo.regions.push(RegionSpec {
            id: RegionId(2),
            name: "coil".into(),
            rects: vec![Rect::new(0.25, 0.25, 0.5, 0.5)],
        });
        geo.validate().unwrap();
        assert_eq!(geo.classify(Point2::new(0.3, 0.3)), RegionId(2));
        assert_eq!(geo.classify(Point2::new(0.6, 0.6)), IRON);
        assert_eq!(geo.classify(Point2::new(0.9, 0.9)), RegionId::BACKGROUND);
    }

    #[test]
    fn interior_edges_shared_twice() {
        let mesh = generate_benchmark_mesh(2, &iron_square()).unwrap();
        let counts = mesh.edge_counts();
        assert!(counts.values().all(|&c| c == 1 || c == 2));
        for ((a, b), c) in counts {
            let (p, q) = (mesh.nodes()[a], mesh.nodes()[b]);
            let same_side = [p.x == 0.0 && q.x == 0.0, p.x == 1.0 && q.x == 1.0, p.y == 0.0 && q.y == 0.0, p.y == 1.0 && q.y == 1.0];
            assert_eq!(c == 1, same_side.contains(&true));
        }
    }

    #[test]
    fn text_export_lists_everything() {
        let mesh = generate_benchmark_mesh(0, &GeometrySpec::unit_square(1)).unwrap();
        let mut buf = Vec::new();
        mesh.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("nodes 4"));
        assert!(text.contains("triangles 2"));
    }
}
