//! Triangulations of the unit square and degree-of-freedom layouts for the
//! finite element spaces used by the schemes.

use crate::error::{Error, Result};
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Edge of a triangulation with its (one or two) adjacent triangles.
#[derive(Debug, Clone, Copy)]
pub struct Edge {
    /// Vertex indices, stored with `v[0] < v[1]`.
    pub v: [usize; 2],
    pub tris: [Option<usize>; 2],
}

/// Conforming triangulation of a polygonal domain (here always [0,1]²).
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Vertex index triples, counterclockwise.
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// Per-triangle edge indices; local edge `k` joins local vertices
    /// `(k, k+1 mod 3)`.
    pub tri_edges: Vec<[usize; 3]>,
    pub boundary_vertex_flags: Vec<bool>,
    pub boundary_edge_flags: Vec<bool>,
}

impl Mesh {
    /// Build connectivity from raw vertices and triangles, validating the
    /// mesh invariants.
    pub fn from_triangles(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Mesh> {
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(Error::Internal(format!(
                        "triangle {t} references missing vertex {v}"
                    )));
                }
            }
            let area = signed_area(&vertices, *tri);
            if area <= 1e-14 {
                return Err(Error::Internal(format!(
                    "triangle {t} has non-positive area {area:e}"
                )));
            }
        }

        let mut edge_of: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut tri_edges = vec![[usize::MAX; 3]; triangles.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let e = *edge_of.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        v: [key.0, key.1],
                        tris: [None, None],
                    });
                    edges.len() - 1
                });
                let slot = &mut edges[e].tris;
                if slot[0].is_none() {
                    slot[0] = Some(t);
                } else if slot[1].is_none() {
                    slot[1] = Some(t);
                } else {
                    return Err(Error::Internal(format!(
                        "edge {:?} shared by more than two triangles",
                        edges[e].v
                    )));
                }
                tri_edges[t][k] = e;
            }
        }

        let boundary_edge_flags: Vec<bool> = edges.iter().map(|e| e.tris[1].is_none()).collect();
        let mut boundary_vertex_flags = vec![false; nv];
        for (e, edge) in edges.iter().enumerate() {
            if boundary_edge_flags[e] {
                boundary_vertex_flags[edge.v[0]] = true;
                boundary_vertex_flags[edge.v[1]] = true;
            }
        }

        let mesh = Mesh {
            vertices,
            triangles,
            edges,
            tri_edges,
            boundary_vertex_flags,
            boundary_edge_flags,
        };
        // Euler relation for a simply connected planar triangulation.
        let (v, e, t) = (mesh.vertices.len(), mesh.edges.len(), mesh.triangles.len());
        if v + t + 1 != e + 2 {
            return Err(Error::Internal(format!(
                "Euler relation violated: V={v}, E={e}, T={t}"
            )));
        }
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn tri_area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, self.triangles[t])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.tri_area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        [
            (a[0] + b[0] + c[0]) / 3.0,
            (a[1] + b[1] + c[1]) / 3.0,
        ]
    }

    /// Area and the (constant) gradients of the three barycentric coordinate
    /// functions on triangle `t`.
    pub fn tri_geometry(&self, t: usize) -> (f64, [[f64; 2]; 3]) {
        let [p0, p1, p2] = self.triangles[t].map(|v| self.vertices[v]);
        let area = signed_area(&self.vertices, self.triangles[t]);
        let inv2a = 1.0 / (2.0 * area);
        let grads = [
            [(p1[1] - p2[1]) * inv2a, (p2[0] - p1[0]) * inv2a],
            [(p2[1] - p0[1]) * inv2a, (p0[0] - p2[0]) * inv2a],
            [(p0[1] - p1[1]) * inv2a, (p1[0] - p0[0]) * inv2a],
        ];
        (area, grads)
    }

    /// Physical coordinates of a barycentric point on triangle `t`.
    pub fn point(&self, t: usize, bary: [f64; 3]) -> [f64; 2] {
        let [p0, p1, p2] = self.triangles[t].map(|v| self.vertices[v]);
        [
            bary[0] * p0[0] + bary[1] * p1[0] + bary[2] * p2[0],
            bary[0] * p0[1] + bary[1] * p1[1] + bary[2] * p2[1],
        ]
    }
}

fn signed_area(vertices: &[[f64; 2]], tri: [usize; 3]) -> f64 {
    let [a, b, c] = tri.map(|v| vertices[v]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Uniform triangulation of [0,1]²: nx×ny cells, each split along the
/// diagonal from its lower-left to its upper-right corner.
pub fn build_uniform_mesh(nx: usize, ny: usize) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(format!(
            "cell counts must be positive, got ({nx}, {ny})"
        )));
    }
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([i as f64 / nx as f64, j as f64 / ny as f64]);
        }
    }
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (ll, lr, ul, ur) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
            triangles.push([ll, lr, ur]);
            triangles.push([ll, ur, ul]);
        }
    }
    Mesh::from_triangles(vertices, triangles)
}

/// Red refinement of every triangle whose centroid satisfies `region`, with
/// red-green closure: neighbors with two or three split edges are also red
/// refined, neighbors with exactly one split edge are bisected through the
/// hanging node, so the result is again conforming.
pub fn refine_local<P>(mesh: &Mesh, region: P) -> Result<Mesh>
where
    P: Fn([f64; 2]) -> bool,
{
    let nt = mesh.num_triangles();
    let mut red = vec![false; nt];
    for t in 0..nt {
        red[t] = region(mesh.centroid(t));
    }
    if !red.iter().any(|&r| r) {
        return Ok(mesh.clone());
    }

    let mut edge_split = vec![false; mesh.num_edges()];
    loop {
        for t in 0..nt {
            if red[t] {
                for e in mesh.tri_edges[t] {
                    edge_split[e] = true;
                }
            }
        }
        let mut changed = false;
        for t in 0..nt {
            if !red[t] {
                let splits = mesh.tri_edges[t]
                    .iter()
                    .filter(|&&e| edge_split[e])
                    .count();
                if splits >= 2 {
                    red[t] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut vertices = mesh.vertices.clone();
    let mut midpoint = vec![usize::MAX; mesh.num_edges()];
    for (e, edge) in mesh.edges.iter().enumerate() {
        if edge_split[e] {
            let (a, b) = (mesh.vertices[edge.v[0]], mesh.vertices[edge.v[1]]);
            midpoint[e] = vertices.len();
            vertices.push([(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5]);
        }
    }

    let mut triangles = Vec::new();
    for t in 0..nt {
        let [v0, v1, v2] = mesh.triangles[t];
        let m: Vec<usize> = mesh.tri_edges[t].iter().map(|&e| midpoint[e]).collect();
        if red[t] {
            // Local edge k joins vertices (k, k+1): m[0]=m01, m[1]=m12, m[2]=m20.
            let (m01, m12, m20) = (m[0], m[1], m[2]);
            triangles.push([v0, m01, m20]);
            triangles.push([v1, m12, m01]);
            triangles.push([v2, m20, m12]);
            triangles.push([m01, m12, m20]);
        } else {
            let split_local: Vec<usize> = (0..3).filter(|&k| m[k] != usize::MAX).collect();
            match split_local.len() {
                0 => triangles.push([v0, v1, v2]),
                1 => {
                    // Green bisection: connect the hanging node on local edge
                    // k = (a,b) to the opposite vertex c.
                    let k = split_local[0];
                    let local = [v0, v1, v2];
                    let (a, b, c) = (local[k], local[(k + 1) % 3], local[(k + 2) % 3]);
                    let mid = m[k];
                    triangles.push([c, a, mid]);
                    triangles.push([c, mid, b]);
                }
                _ => unreachable!("closure loop guarantees <2 split edges"),
            }
        }
    }
    Mesh::from_triangles(vertices, triangles)
}

/// Finite element spaces supported by the schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    /// Continuous piecewise-linear scalars (φ, μ).
    P1Scalar,
    /// Pressure space: P1 scalars with zero mean, enforced at solve time.
    P1ScalarZeroMean,
    /// Continuous piecewise-linear 2x2 tensors (F, M), components row-major.
    P1Tensor2x2,
    /// Continuous piecewise-quadratic velocity vectors (Taylor–Hood).
    P2Vector2,
}

impl SpaceKind {
    pub fn components(self) -> usize {
        match self {
            SpaceKind::P1Scalar | SpaceKind::P1ScalarZeroMean => 1,
            SpaceKind::P1Tensor2x2 => 4,
            SpaceKind::P2Vector2 => 2,
        }
    }

    /// Scalar basis functions per element (before component interleaving).
    pub fn nodes_per_elem(self) -> usize {
        match self {
            SpaceKind::P2Vector2 => 6,
            _ => 3,
        }
    }
}

/// Global degree-of-freedom layout of one space on one mesh.
///
/// Ordering: vertex dofs first, then (for P2) edge-midpoint dofs; components
/// interleaved, so dof `components·n + c` is component `c` at node `n`.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub space: SpaceKind,
    pub num_dofs: usize,
    pub dofs_per_elem: usize,
    element_dofs: Vec<usize>,
    pub boundary_dofs: Vec<usize>,
}

impl DofMap {
    pub fn elem_dofs(&self, t: usize) -> &[usize] {
        &self.element_dofs[t * self.dofs_per_elem..(t + 1) * self.dofs_per_elem]
    }

    pub fn num_elems(&self) -> usize {
        self.element_dofs.len() / self.dofs_per_elem
    }
}

pub fn build_dof_map(mesh: &Mesh, space: SpaceKind) -> DofMap {
    let nv = mesh.num_vertices();
    let ne = mesh.num_edges();
    let comps = space.components();
    let (num_nodes, nodes_per_elem) = match space {
        SpaceKind::P2Vector2 => (nv + ne, 6),
        _ => (nv, 3),
    };
    let num_dofs = comps * num_nodes;
    let dofs_per_elem = comps * nodes_per_elem;

    let mut element_dofs = Vec::with_capacity(mesh.num_triangles() * dofs_per_elem);
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        for k in 0..nodes_per_elem {
            // Local scalar nodes: vertices 0..3, then midpoints of local
            // edges (01), (12), (20).
            let node = if k < 3 {
                tri[k]
            } else {
                nv + mesh.tri_edges[t][k - 3]
            };
            for c in 0..comps {
                element_dofs.push(comps * node + c);
            }
        }
    }

    let mut boundary_dofs = Vec::new();
    for v in 0..nv {
        if mesh.boundary_vertex_flags[v] {
            for c in 0..comps {
                boundary_dofs.push(comps * v + c);
            }
        }
    }
    if space == SpaceKind::P2Vector2 {
        for e in 0..ne {
            if mesh.boundary_edge_flags[e] {
                for c in 0..comps {
                    boundary_dofs.push(comps * (nv + e) + c);
                }
            }
        }
    }

    DofMap {
        space,
        num_dofs,
        dofs_per_elem,
        element_dofs,
        boundary_dofs,
    }
}
