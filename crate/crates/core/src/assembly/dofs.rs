use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mesh::{edge_key, Point2, TriMesh};

/// Degrees of freedom of continuous Lagrange elements of order 1 or 2.
///
/// Vertex dofs come first (numbered like mesh nodes), then one dof per edge
/// for `p = 2`. Local order per triangle is the three vertices followed by
/// the edges `(v0,v1)`, `(v1,v2)`, `(v2,v0)`. Dofs on the boundary carry the
/// homogeneous Dirichlet condition and are excluded from the unknowns.
#[derive(Debug, Clone)]
pub struct DofMap {
    order: u8,
    num_dofs: usize,
    local: Vec<usize>,
    constrained: Vec<bool>,
    free_index: Vec<Option<usize>>,
    free_dofs: Vec<usize>,
    points: Vec<Point2>,
}

impl DofMap {
    pub fn new(mesh: &TriMesh, order: u8) -> Result<Self> {
        if !(1..=2).contains(&order) {
            return Err(Error::config(format!("element order must be 1 or 2, got {order}")));
        }
        let nloc = Self::local_size_for(order);
        let nn = mesh.num_nodes();
        let mut local = Vec::with_capacity(nloc * mesh.num_triangles());
        let mut points = mesh.nodes().to_vec();
        let mut constrained: Vec<bool> = (0..nn).map(|i| mesh.is_boundary_node(i)).collect();
        let counts = if order == 2 { mesh.edge_counts() } else { HashMap::new() };
        let mut edge_dofs: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in mesh.triangles() {
            local.extend_from_slice(tri);
            if order == 2 {
                for k in 0..3 {
                    let key = edge_key(tri[k], tri[(k + 1) % 3]);
                    let dof = *edge_dofs.entry(key).or_insert_with(|| {
                        let (a, b) = key;
                        let (pa, pb) = (mesh.nodes()[a], mesh.nodes()[b]);
                        points.push(Point2::new(0.5 * (pa.x + pb.x), 0.5 * (pa.y + pb.y)));
                        constrained.push(counts[&key] == 1);
                        points.len() - 1
                    });
                    local.push(dof);
                }
            }
        }
        let num_dofs = points.len();
        let mut free_index = vec![None; num_dofs];
        let mut free_dofs = Vec::new();
        for (dof, &c) in constrained.iter().enumerate() {
            if !c {
                free_index[dof] = Some(free_dofs.len());
                free_dofs.push(dof);
            }
        }
        Ok(Self {
            order,
            num_dofs,
            local,
            constrained,
            free_index,
            free_dofs,
            points,
        })
    }

    fn local_size_for(order: u8) -> usize {
        if order == 1 {
            3
        } else {
            6
        }
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn local_size(&self) -> usize {
        Self::local_size_for(self.order)
    }

    pub fn num_dofs(&self) -> usize {
        self.num_dofs
    }

    pub fn num_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn element_dofs(&self, t: usize) -> &[usize] {
        let n = self.local_size();
        &self.local[n * t..n * (t + 1)]
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.constrained[dof]
    }

    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.free_index[dof]
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    /// Interpolation point of every dof (vertex or edge midpoint).
    pub fn points(&self) -> &[Point2] {
        &self.points
    }
}
