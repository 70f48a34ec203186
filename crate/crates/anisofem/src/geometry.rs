//! Structured meshes of rectangles and their boundary classification.

use std::fmt::Write as _;

use thiserror::Error;

use crate::anisofield::{FieldError, FieldSpec};

/// Tolerance on `b·n` below which a boundary edge counts as tangential.
pub const TANGENTIAL_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("invalid mesh parameters: {0}")]
    InvalidMesh(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    Quad,
    Triangle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    pub fn outward_normal(self) -> [f64; 2] {
        match self {
            Side::Bottom => [0.0, -1.0],
            Side::Right => [1.0, 0.0],
            Side::Top => [0.0, 1.0],
            Side::Left => [-1.0, 0.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub element: usize,
    pub side: Side,
}

/// Boundary tag; the declaration order is the dominance order used for nodes
/// shared by differently tagged edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundaryTag {
    Dirichlet,
    Inflow,
    Outflow,
}

/// A tensor-product mesh of `[0, lx] x [0, ly]`, either `nx*ny` rectangles or
/// each rectangle cut into two triangles along its lower-left to upper-right
/// diagonal.
///
/// Nodes are numbered `i + j*(nx+1)`. Quad `e = ey*nx + ex` has nodes in
/// counter-clockwise order starting at the lower-left corner. The triangles of
/// cell `c` are `2c` (lower-right half) and `2c+1` (upper-left half).
#[derive(Clone, Debug)]
pub struct Mesh {
    kind: CellKind,
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    nodes: Vec<[f64; 2]>,
    cells: Vec<usize>,
    boundary: Vec<BoundaryEdge>,
}

fn check_params(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<(), MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidMesh(format!("need nx, ny >= 1, got {nx}x{ny}")));
    }
    if !(lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0) {
        return Err(MeshError::InvalidMesh(format!("need positive side lengths, got {lx} x {ly}")));
    }
    Ok(())
}

pub fn structured_quad_mesh(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Mesh, MeshError> {
    Mesh::build(CellKind::Quad, nx, ny, lx, ly)
}

pub fn structured_tri_mesh(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Mesh, MeshError> {
    Mesh::build(CellKind::Triangle, nx, ny, lx, ly)
}

impl Mesh {
    fn build(kind: CellKind, nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Mesh, MeshError> {
        check_params(nx, ny, lx, ly)?;
        let node = |i: usize, j: usize| i + j * (nx + 1);
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
            }
        }
        let per = match kind {
            CellKind::Quad => 4,
            CellKind::Triangle => 6,
        };
        let mut cells = Vec::with_capacity(nx * ny * per);
        for ey in 0..ny {
            for ex in 0..nx {
                let (ll, lr, ur, ul) = (node(ex, ey), node(ex + 1, ey), node(ex + 1, ey + 1), node(ex, ey + 1));
                match kind {
                    CellKind::Quad => cells.extend([ll, lr, ur, ul]),
                    CellKind::Triangle => cells.extend([ll, lr, ur, ll, ur, ul]),
                }
            }
        }
        let elem_of = |ex: usize, ey: usize, upper: bool| {
            let c = ey * nx + ex;
            match kind {
                CellKind::Quad => c,
                CellKind::Triangle => 2 * c + upper as usize,
            }
        };
        let mut boundary = Vec::with_capacity(2 * (nx + ny));
        for ex in 0..nx {
            boundary.push(BoundaryEdge { nodes: [node(ex, 0), node(ex + 1, 0)], element: elem_of(ex, 0, false), side: Side::Bottom });
        }
        for ey in 0..ny {
            boundary.push(BoundaryEdge { nodes: [node(nx, ey), node(nx, ey + 1)], element: elem_of(nx - 1, ey, false), side: Side::Right });
        }
        for ex in (0..nx).rev() {
            boundary.push(BoundaryEdge { nodes: [node(ex + 1, ny), node(ex, ny)], element: elem_of(ex, ny - 1, true), side: Side::Top });
        }
        for ey in (0..ny).rev() {
            boundary.push(BoundaryEdge { nodes: [node(0, ey + 1), node(0, ey)], element: elem_of(0, ey, true), side: Side::Left });
        }
        Ok(Mesh { kind, nx, ny, lx, ly, nodes, cells, boundary })
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    /// Largest element diameter; the cell diagonal for both cell kinds.
    pub fn h(&self) -> f64 {
        self.dx().hypot(self.dy())
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn nodes_per_element(&self) -> usize {
        match self.kind {
            CellKind::Quad => 4,
            CellKind::Triangle => 3,
        }
    }

    pub fn num_elements(&self) -> usize {
        self.cells.len() / self.nodes_per_element()
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let k = self.nodes_per_element();
        &self.cells[e * k..(e + 1) * k]
    }

    /// Cell indices `(ex, ey)` of element `e`, and whether it is the upper-left
    /// triangle of its cell.
    pub fn cell_of(&self, e: usize) -> (usize, usize, bool) {
        let (c, upper) = match self.kind {
            CellKind::Quad => (e, false),
            CellKind::Triangle => (e / 2, e % 2 == 1),
        };
        (c % self.nx, c / self.nx, upper)
    }

    /// Element containing `(x, y)`. Points on shared edges resolve to the
    /// lower/left neighbour.
    pub fn locate(&self, x: f64, y: f64) -> usize {
        let ex = ((x / self.dx()).floor().max(0.0) as usize).min(self.nx - 1);
        let ey = ((y / self.dy()).floor().max(0.0) as usize).min(self.ny - 1);
        let c = ey * self.nx + ex;
        match self.kind {
            CellKind::Quad => c,
            CellKind::Triangle => {
                let sx = x / self.dx() - ex as f64;
                let sy = y / self.dy() - ey as f64;
                2 * c + (sy > sx) as usize
            }
        }
    }

    /// Boundary edges, counter-clockwise starting at the origin.
    pub fn boundary(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn edge_midpoint(&self, edge: &BoundaryEdge) -> [f64; 2] {
        let [a, b] = edge.nodes.map(|n| self.nodes[n]);
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }

    /// Plain-text dump: node coordinates, element connectivity, boundary edges.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes {}", self.nodes.len());
        for p in &self.nodes {
            let _ = writeln!(s, "{:.17e} {:.17e}", p[0], p[1]);
        }
        let _ = writeln!(s, "elements {}", self.num_elements());
        for e in 0..self.num_elements() {
            let ids: Vec<String> = self.element(e).iter().map(|n| n.to_string()).collect();
            let _ = writeln!(s, "{}", ids.join(" "));
        }
        let _ = writeln!(s, "boundary {}", self.boundary.len());
        for b in &self.boundary {
            let _ = writeln!(s, "{} {} {:?}", b.nodes[0], b.nodes[1], b.side);
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct BoundaryTags {
    /// One tag per entry of [`Mesh::boundary`].
    pub edges: Vec<BoundaryTag>,
    /// Per mesh node; `None` for interior nodes.
    pub nodes: Vec<Option<BoundaryTag>>,
}

impl BoundaryTags {
    pub fn count(&self, tag: BoundaryTag) -> usize {
        self.edges.iter().filter(|&&t| t == tag).count()
    }
}

/// Tags each boundary edge by the sign of `b·n` at its midpoint. A node takes
/// the dominant tag among its edges (Dirichlet, then inflow, then outflow).
pub fn classify_boundary(mesh: &Mesh, field: &FieldSpec) -> Result<BoundaryTags, FieldError> {
    let mut edges = Vec::with_capacity(mesh.boundary().len());
    let mut nodes: Vec<Option<BoundaryTag>> = vec![None; mesh.nodes().len()];
    for edge in mesh.boundary() {
        let [x, y] = mesh.edge_midpoint(edge);
        let b = field.eval_b(x, y)?;
        let n = edge.side.outward_normal();
        let bn = b[0] * n[0] + b[1] * n[1];
        let tag = if bn < -TANGENTIAL_TOL {
            BoundaryTag::Inflow
        } else if bn > TANGENTIAL_TOL {
            BoundaryTag::Outflow
        } else {
            BoundaryTag::Dirichlet
        };
        edges.push(tag);
        for &v in &edge.nodes {
            nodes[v] = Some(nodes[v].map_or(tag, |t| t.min(tag)));
        }
    }
    Ok(BoundaryTags { edges, nodes })
}
