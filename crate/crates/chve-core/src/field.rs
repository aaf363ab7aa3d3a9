//! Coefficient vectors in the finite element spaces and the per-time-level
//! solution bundles.

use crate::mesh::{Mesh, SpaceKind};
use crate::tensor::Mat2;
use alloc::vec;
use alloc::vec::Vec;

/// A finite element function: a coefficient vector in one of the spaces.
///
/// Dof layout (fixed by `mesh::build_dof_map`): components interleaved per
/// node; P1 nodes are the mesh vertices, P2 nodes are vertices followed by
/// edge midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub space: SpaceKind,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(space: SpaceKind, mesh: &Mesh) -> Field {
        let nodes = match space {
            SpaceKind::P2Vector2 => mesh.num_vertices() + mesh.num_edges(),
            _ => mesh.num_vertices(),
        };
        Field {
            space,
            values: vec![0.0; nodes * space.components()],
        }
    }

    pub fn constant(space: SpaceKind, mesh: &Mesh, value: f64) -> Field {
        let mut f = Field::zeros(space, mesh);
        f.values.fill(value);
        f
    }

    /// P1 tensor field equal to `m` everywhere.
    pub fn constant_tensor(mesh: &Mesh, m: Mat2) -> Field {
        let mut f = Field::zeros(SpaceKind::P1Tensor2x2, mesh);
        for v in 0..mesh.num_vertices() {
            f.values[4 * v..4 * v + 4].copy_from_slice(&m.0);
        }
        f
    }

    /// Nodal 2x2 tensor of a P1 tensor field.
    pub fn tensor_at_vertex(&self, v: usize) -> Mat2 {
        debug_assert_eq!(self.space, SpaceKind::P1Tensor2x2);
        let mut m = [0.0; 4];
        m.copy_from_slice(&self.values[4 * v..4 * v + 4]);
        Mat2(m)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// One time level of the discrete solution.
#[derive(Debug, Clone)]
pub struct State {
    /// Velocity (P2 vector).
    pub v: Field,
    /// Pressure (P1, zero mean).
    pub s: Field,
    /// Deformation gradient (P1 tensor).
    pub f: Field,
    /// Dual elastic variable M = ∂_F w − λΔF (P1 tensor).
    pub m: Field,
    /// Phase field (P1 scalar).
    pub phi: Field,
    /// Chemical potential (P1 scalar).
    pub mu: Field,
    pub t: f64,
}

impl State {
    pub fn zeros(mesh: &Mesh) -> State {
        State {
            v: Field::zeros(SpaceKind::P2Vector2, mesh),
            s: Field::zeros(SpaceKind::P1ScalarZeroMean, mesh),
            f: Field::constant_tensor(mesh, Mat2::identity()),
            m: Field::zeros(SpaceKind::P1Tensor2x2, mesh),
            phi: Field::zeros(SpaceKind::P1Scalar, mesh),
            mu: Field::zeros(SpaceKind::P1Scalar, mesh),
            t: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite()
            && self.s.is_finite()
            && self.f.is_finite()
            && self.m.is_finite()
            && self.phi.is_finite()
            && self.mu.is_finite()
    }
}

/// State extended by the scalar auxiliary variable β.
#[derive(Debug, Clone)]
pub struct SavState {
    pub state: State,
    pub beta: f64,
}
