//! Lagrange spaces on structured meshes: dof maps, quadrature, assembly of the
//! three bilinear forms, interpolation and error norms.
//!
//! On a structured mesh every family places its dofs on a lattice `k` times
//! finer than the mesh (`k` the polynomial degree), numbered `i + j*mx`. For
//! P2 the midpoint of each cell diagonal is a lattice point too.

use std::sync::Arc;

use thiserror::Error;

use crate::anisofield::{FieldError, FieldSpec, LoadDensity};
use crate::exec::Exec;
use crate::geometry::{BoundaryTag, BoundaryTags, CellKind, Mesh};
use crate::sparse::{lu_factor, CsrMatrix, LuFactor, SparseError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("family {0:?} cannot be used on {1:?} cells")]
    IncompatibleFamily(Family, CellKind),
    #[error("tags were computed for a different mesh")]
    TagMismatch,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    P1,
    P2,
    Q1,
    Q2,
}

impl Family {
    pub fn degree(self) -> usize {
        match self {
            Family::P1 | Family::Q1 => 1,
            Family::P2 | Family::Q2 => 2,
        }
    }

    pub fn cell_kind(self) -> CellKind {
        match self {
            Family::P1 | Family::P2 => CellKind::Triangle,
            Family::Q1 | Family::Q2 => CellKind::Quad,
        }
    }

    pub fn local_dofs(self) -> usize {
        match self {
            Family::P1 => 3,
            Family::P2 => 6,
            Family::Q1 => 4,
            Family::Q2 => 9,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::P1 => "p1",
            Family::P2 => "p2",
            Family::Q1 => "q1",
            Family::Q2 => "q2",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        match s.to_ascii_lowercase().as_str() {
            "p1" => Some(Family::P1),
            "p2" => Some(Family::P2),
            "q1" => Some(Family::Q1),
            "q2" => Some(Family::Q2),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Form {
    /// `a(u, v) = ∫ A∇u·∇v`.
    Full,
    /// `a_par(u, v) = ∫ A_par (b·∇u)(b·∇v)`.
    Par,
    /// `(u, v)`.
    Mass,
}

/// Local dof positions, in lattice units from the cell's lower-left corner.
/// Triangle lists are `[v0, v1, v2, m01, m12, m20]` (or just the vertices).
const Q1_OFFSETS: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];
const Q2_OFFSETS: [(usize, usize); 9] = [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1), (0, 2), (1, 2), (2, 2)];
const P1_LOWER: [(usize, usize); 3] = [(0, 0), (1, 0), (1, 1)];
const P1_UPPER: [(usize, usize); 3] = [(0, 0), (1, 1), (0, 1)];
const P2_LOWER: [(usize, usize); 6] = [(0, 0), (2, 0), (2, 2), (1, 0), (2, 1), (1, 1)];
const P2_UPPER: [(usize, usize); 6] = [(0, 0), (2, 2), (0, 2), (1, 1), (1, 2), (0, 1)];

pub const MAX_LOCAL: usize = 9;

#[derive(Clone, Debug)]
pub struct FemSpace {
    mesh: Arc<Mesh>,
    family: Family,
    mx: usize,
    my: usize,
    dof_tags: Vec<Option<BoundaryTag>>,
    constrained: Vec<bool>,
}

/// Builds a space whose dofs on boundary parts carrying one of
/// `constrained_tags` are fixed. A dof shared by differently tagged edges
/// takes the dominant tag.
pub fn make_space(
    mesh: Arc<Mesh>,
    family: Family,
    constrained_tags: &[BoundaryTag],
    tags: &BoundaryTags,
) -> Result<FemSpace, FemError> {
    if family.cell_kind() != mesh.kind() {
        return Err(FemError::IncompatibleFamily(family, mesh.kind()));
    }
    if tags.edges.len() != mesh.boundary().len() {
        return Err(FemError::TagMismatch);
    }
    let k = family.degree();
    let (mx, my) = (k * mesh.nx() + 1, k * mesh.ny() + 1);
    let mut dof_tags: Vec<Option<BoundaryTag>> = vec![None; mx * my];
    let lattice = |node: usize| {
        let n1 = mesh.nx() + 1;
        (k * (node % n1), k * (node / n1))
    };
    for (edge, &tag) in mesh.boundary().iter().zip(&tags.edges) {
        let (a, b) = (lattice(edge.nodes[0]), lattice(edge.nodes[1]));
        for s in 0..=k {
            let i = (a.0 * (k - s) + b.0 * s) / k;
            let j = (a.1 * (k - s) + b.1 * s) / k;
            let d = &mut dof_tags[i + j * mx];
            *d = Some(d.map_or(tag, |t| t.min(tag)));
        }
    }
    let constrained = dof_tags.iter().map(|t| t.is_some_and(|t| constrained_tags.contains(&t))).collect();
    Ok(FemSpace { mesh, family, mx, my, dof_tags, constrained })
}

impl FemSpace {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn num_dofs(&self) -> usize {
        self.mx * self.my
    }

    pub fn lattice_dims(&self) -> (usize, usize) {
        (self.mx, self.my)
    }

    pub fn dof_coord(&self, d: usize) -> [f64; 2] {
        let k = self.family.degree() as f64;
        let (i, j) = (d % self.mx, d / self.mx);
        [i as f64 * self.mesh.dx() / k, j as f64 * self.mesh.dy() / k]
    }

    pub fn dof_tag(&self, d: usize) -> Option<BoundaryTag> {
        self.dof_tags[d]
    }

    pub fn is_constrained(&self, d: usize) -> bool {
        self.constrained[d]
    }

    pub fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    pub fn num_constrained(&self) -> usize {
        self.constrained.iter().filter(|&&c| c).count()
    }

    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.num_dofs()).filter(|&d| !self.constrained[d]).collect()
    }

    fn offsets(&self, upper: bool) -> &'static [(usize, usize)] {
        match (self.family, upper) {
            (Family::Q1, _) => &Q1_OFFSETS,
            (Family::Q2, _) => &Q2_OFFSETS,
            (Family::P1, false) => &P1_LOWER,
            (Family::P1, true) => &P1_UPPER,
            (Family::P2, false) => &P2_LOWER,
            (Family::P2, true) => &P2_UPPER,
        }
    }

    /// Global dofs of element `e`, in the local basis order.
    pub fn element_dofs(&self, e: usize) -> ([usize; MAX_LOCAL], usize) {
        let k = self.family.degree();
        let (ex, ey, upper) = self.mesh.cell_of(e);
        let offs = self.offsets(upper);
        let mut out = [0; MAX_LOCAL];
        for (o, &(di, dj)) in out.iter_mut().zip(offs) {
            *o = (k * ex + di) + (k * ey + dj) * self.mx;
        }
        (out, offs.len())
    }

    fn element_origin(&self, e: usize) -> ([f64; 2], usize) {
        let (ex, ey, upper) = self.mesh.cell_of(e);
        ([ex as f64 * self.mesh.dx(), ey as f64 * self.mesh.dy()], upper as usize)
    }

    /// Sparsity pattern over all dofs, values zeroed.
    pub fn pattern(&self) -> CsrMatrix {
        let n = self.num_dofs();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in 0..self.mesh.num_elements() {
            let (d, nl) = self.element_dofs(e);
            for &i in &d[..nl] {
                rows[i].extend_from_slice(&d[..nl]);
            }
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            indices.extend(r);
            indptr.push(indices.len());
        }
        let nnz = indices.len();
        CsrMatrix::from_parts(n, n, indptr, indices, vec![0.0; nnz]).expect("pattern is sorted")
    }
}

/// Quadrature rule on the reference element, weights summing to its area.
#[derive(Clone, Debug)]
pub struct QuadRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for m in 2..=n {
                let p2 = ((2 * m - 1) as f64 * z * p1 - (m - 1) as f64 * p0) / m as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { z } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

pub fn tensor_rule(n: usize) -> QuadRule {
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            points.push([x[i], x[j]]);
            weights.push(w[i] * w[j]);
        }
    }
    QuadRule { points, weights }
}

/// Symmetric 6-point rule, exact for degree 4, on the triangle
/// `(0,0), (1,0), (0,1)`.
pub fn triangle_rule_6() -> QuadRule {
    const A: [(f64, f64, f64); 2] = [
        (0.445948490915965, 0.108103018168070, 0.223381589678011),
        (0.091576213509771, 0.816847572980459, 0.109951743655322),
    ];
    let mut points = Vec::with_capacity(6);
    let mut weights = Vec::with_capacity(6);
    for &(a, b, w) in &A {
        for p in [[a, a], [b, a], [a, b]] {
            points.push(p);
            weights.push(0.5 * w);
        }
    }
    QuadRule { points, weights }
}

/// Collapsed Gauss rule on the reference triangle, exact for degree `2n-2`.
pub fn triangle_rule_collapsed(n: usize) -> QuadRule {
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (s, t) = (x[i], x[j]);
            points.push([s, t * (1.0 - s)]);
            weights.push(w[i] * w[j] * (1.0 - s));
        }
    }
    QuadRule { points, weights }
}

fn lagrange_1d(k: usize, i: usize, t: f64) -> (f64, f64) {
    match (k, i) {
        (1, 0) => (1.0 - t, -1.0),
        (1, 1) => (t, 1.0),
        (2, 0) => ((2.0 * t - 1.0) * (t - 1.0), 4.0 * t - 3.0),
        (2, 1) => (4.0 * t * (1.0 - t), 4.0 - 8.0 * t),
        (2, 2) => (t * (2.0 * t - 1.0), 4.0 * t - 1.0),
        _ => unreachable!("degree {k} node {i}"),
    }
}

/// Shape values and reference gradients at reference point `p`.
pub fn reference_basis(family: Family, p: [f64; 2], vals: &mut [f64], grads: &mut [[f64; 2]]) {
    let [s, t] = p;
    match family {
        Family::Q1 | Family::Q2 => {
            let k = family.degree();
            let offs: &[(usize, usize)] = if k == 1 { &Q1_OFFSETS } else { &Q2_OFFSETS };
            for (a, &(i, j)) in offs.iter().enumerate() {
                let (li, di) = lagrange_1d(k, i, s);
                let (lj, dj) = lagrange_1d(k, j, t);
                vals[a] = li * lj;
                grads[a] = [di * lj, li * dj];
            }
        }
        Family::P1 => {
            vals[..3].copy_from_slice(&[1.0 - s - t, s, t]);
            grads[..3].copy_from_slice(&[[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]);
        }
        Family::P2 => {
            let l = [1.0 - s - t, s, t];
            let dl = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
            for i in 0..3 {
                vals[i] = l[i] * (2.0 * l[i] - 1.0);
                let c = 4.0 * l[i] - 1.0;
                grads[i] = [c * dl[i][0], c * dl[i][1]];
            }
            for (m, (i, j)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
                vals[3 + m] = 4.0 * l[i] * l[j];
                grads[3 + m] = [
                    4.0 * (dl[i][0] * l[j] + l[i] * dl[j][0]),
                    4.0 * (dl[i][1] * l[j] + l[i] * dl[j][1]),
                ];
            }
        }
    }
}

/// Reference-to-physical Jacobian (columns are images of the reference axes)
/// for element type `upper` on a cell of size `dx x dy`.
fn jacobian(kind: CellKind, upper: usize, dx: f64, dy: f64) -> [[f64; 2]; 2] {
    match (kind, upper) {
        (CellKind::Quad, _) => [[dx, 0.0], [0.0, dy]],
        (CellKind::Triangle, 0) => [[dx, dx], [0.0, dy]],
        (CellKind::Triangle, _) => [[dx, 0.0], [dy, dy]],
    }
}

/// Physical quadrature data for one element type; all elements of a type are
/// translates of each other.
#[derive(Clone, Debug)]
struct TypeTab {
    offsets: Vec<[f64; 2]>,
    weights: Vec<f64>,
    values: Vec<f64>,
    grads: Vec<[f64; 2]>,
}

#[derive(Clone, Debug)]
struct Tabulation {
    nl: usize,
    types: Vec<TypeTab>,
}

impl Tabulation {
    fn new(space: &FemSpace, rule: &QuadRule) -> Tabulation {
        let mesh = space.mesh();
        let nl = space.family.local_dofs();
        let ntypes = if mesh.kind() == CellKind::Triangle { 2 } else { 1 };
        let types = (0..ntypes)
            .map(|t| {
                let j = jacobian(mesh.kind(), t, mesh.dx(), mesh.dy());
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                // inverse transpose maps reference gradients to physical ones
                let it = [[j[1][1] / det, -j[1][0] / det], [-j[0][1] / det, j[0][0] / det]];
                let mut tab = TypeTab { offsets: vec![], weights: vec![], values: vec![], grads: vec![] };
                let mut v = [0.0; MAX_LOCAL];
                let mut g = [[0.0; 2]; MAX_LOCAL];
                for (p, &w) in rule.points.iter().zip(&rule.weights) {
                    tab.offsets.push([j[0][0] * p[0] + j[0][1] * p[1], j[1][0] * p[0] + j[1][1] * p[1]]);
                    tab.weights.push(w * det);
                    reference_basis(space.family, *p, &mut v, &mut g);
                    for a in 0..nl {
                        tab.values.push(v[a]);
                        tab.grads.push([it[0][0] * g[a][0] + it[0][1] * g[a][1], it[1][0] * g[a][0] + it[1][1] * g[a][1]]);
                    }
                }
                tab
            })
            .collect();
        Tabulation { nl, types }
    }
}

fn assembly_rule(family: Family) -> QuadRule {
    match family.cell_kind() {
        CellKind::Quad => tensor_rule(4),
        CellKind::Triangle => triangle_rule_6(),
    }
}

fn error_rule(family: Family) -> QuadRule {
    match family.cell_kind() {
        CellKind::Quad => tensor_rule(6),
        CellKind::Triangle => triangle_rule_collapsed(6),
    }
}

pub fn assemble(form: Form, space: &FemSpace, field: &FieldSpec, exec: Exec) -> Result<CsrMatrix, FemError> {
    Ok(assemble_forms(&[form], space, field, exec)?.pop().expect("one form"))
}

/// Assembles several forms in one pass over the elements. Constraints are
/// not applied; matrices cover all dofs.
pub fn assemble_forms(forms: &[Form], space: &FemSpace, field: &FieldSpec, exec: Exec) -> Result<Vec<CsrMatrix>, FemError> {
    let tab = Tabulation::new(space, &assembly_rule(space.family));
    let nl = tab.nl;
    let nf = forms.len();
    let ne = space.mesh.num_elements();
    let locals = exec.map(ne, |e| -> Result<Vec<f64>, FemError> {
        let (origin, t) = space.element_origin(e);
        let tt = &tab.types[t];
        let mut k = vec![0.0; nf * nl * nl];
        for (q, off) in tt.offsets.iter().enumerate() {
            let (x, y) = (origin[0] + off[0], origin[1] + off[1]);
            let w = tt.weights[q];
            let phi = &tt.values[q * nl..(q + 1) * nl];
            let g = &tt.grads[q * nl..(q + 1) * nl];
            for (f, form) in forms.iter().enumerate() {
                let kf = &mut k[f * nl * nl..(f + 1) * nl * nl];
                match form {
                    Form::Full => {
                        let a = field.eval_a(x, y)?;
                        for i in 0..nl {
                            let ag = [a[0][0] * g[i][0] + a[0][1] * g[i][1], a[1][0] * g[i][0] + a[1][1] * g[i][1]];
                            for j in 0..nl {
                                kf[i * nl + j] += w * (ag[0] * g[j][0] + ag[1] * g[j][1]);
                            }
                        }
                    }
                    Form::Par => {
                        let b = field.eval_b(x, y)?;
                        let c = w * field.eval_a_par(x, y);
                        let mut s = [0.0; MAX_LOCAL];
                        for i in 0..nl {
                            s[i] = b[0] * g[i][0] + b[1] * g[i][1];
                        }
                        for i in 0..nl {
                            for j in 0..nl {
                                kf[i * nl + j] += c * s[i] * s[j];
                            }
                        }
                    }
                    Form::Mass => {
                        for i in 0..nl {
                            for j in 0..nl {
                                kf[i * nl + j] += w * phi[i] * phi[j];
                            }
                        }
                    }
                }
            }
        }
        Ok(k)
    });
    let pattern = space.pattern();
    let mut mats: Vec<CsrMatrix> = (0..nf).map(|_| pattern.clone()).collect();
    for (e, local) in locals.into_iter().enumerate() {
        let local = local?;
        let (d, _) = space.element_dofs(e);
        for i in 0..nl {
            for j in 0..nl {
                let pos = pattern.position(d[i], d[j]).expect("pattern covers element");
                for (f, m) in mats.iter_mut().enumerate() {
                    m.values_mut()[pos] += local[f * nl * nl + i * nl + j];
                }
            }
        }
    }
    Ok(mats.into_iter().map(CsrMatrix::pruned).collect())
}

/// Load vector `l(φ_i)` over all dofs.
pub fn assemble_rhs(space: &FemSpace, load: &dyn LoadDensity, exec: Exec) -> Result<Vec<f64>, FemError> {
    let tab = Tabulation::new(space, &assembly_rule(space.family));
    let nl = tab.nl;
    let locals = exec.map(space.mesh.num_elements(), |e| -> Result<[f64; MAX_LOCAL], FemError> {
        let (origin, t) = space.element_origin(e);
        let tt = &tab.types[t];
        let mut r = [0.0; MAX_LOCAL];
        for (q, off) in tt.offsets.iter().enumerate() {
            let lp = load.eval(origin[0] + off[0], origin[1] + off[1])?;
            let w = tt.weights[q];
            for i in 0..nl {
                let g = tt.grads[q * nl + i];
                r[i] += w * (lp.value * tt.values[q * nl + i] + lp.flux[0] * g[0] + lp.flux[1] * g[1]);
            }
        }
        Ok(r)
    });
    let mut out = vec![0.0; space.num_dofs()];
    for (e, r) in locals.into_iter().enumerate() {
        let r = r?;
        let (d, _) = space.element_dofs(e);
        for i in 0..nl {
            out[d[i]] += r[i];
        }
    }
    Ok(out)
}

/// `a_par(q, φ_i)` for every dof of `space`, where `q` lives on `q_space`,
/// a space on the same or a coarser nested mesh.
pub fn par_coupling_rhs(space: &FemSpace, field: &FieldSpec, q_space: &FemSpace, q: &[f64], exec: Exec) -> Result<Vec<f64>, FemError> {
    let tab = Tabulation::new(space, &assembly_rule(space.family));
    let nl = tab.nl;
    let locals = exec.map(space.mesh.num_elements(), |e| -> Result<[f64; MAX_LOCAL], FemError> {
        let (origin, t) = space.element_origin(e);
        let tt = &tab.types[t];
        let mut r = [0.0; MAX_LOCAL];
        for (qp, off) in tt.offsets.iter().enumerate() {
            let (x, y) = (origin[0] + off[0], origin[1] + off[1]);
            let b = field.eval_b(x, y)?;
            let (_, gq) = eval_at(q_space, q, x, y);
            let c = tt.weights[qp] * field.eval_a_par(x, y) * (b[0] * gq[0] + b[1] * gq[1]);
            for i in 0..nl {
                let g = tt.grads[qp * nl + i];
                r[i] += c * (b[0] * g[0] + b[1] * g[1]);
            }
        }
        Ok(r)
    });
    let mut out = vec![0.0; space.num_dofs()];
    for (e, r) in locals.into_iter().enumerate() {
        let r = r?;
        let (d, _) = space.element_dofs(e);
        for i in 0..nl {
            out[d[i]] += r[i];
        }
    }
    Ok(out)
}

/// Nodal interpolant.
pub fn interpolate<E>(space: &FemSpace, f: impl Fn(f64, f64) -> Result<f64, E>) -> Result<Vec<f64>, E> {
    (0..space.num_dofs())
        .map(|d| {
            let [x, y] = space.dof_coord(d);
            f(x, y)
        })
        .collect()
}

/// Value and gradient of the finite element function `u` at `(x, y)`.
pub fn eval_at(space: &FemSpace, u: &[f64], x: f64, y: f64) -> (f64, [f64; 2]) {
    let mesh = space.mesh();
    let e = mesh.locate(x, y);
    let (origin, t) = space.element_origin(e);
    let j = jacobian(mesh.kind(), t, mesh.dx(), mesh.dy());
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let (px, py) = (x - origin[0], y - origin[1]);
    let p = [(j[1][1] * px - j[0][1] * py) / det, (-j[1][0] * px + j[0][0] * py) / det];
    let mut v = [0.0; MAX_LOCAL];
    let mut g = [[0.0; 2]; MAX_LOCAL];
    reference_basis(space.family, p, &mut v, &mut g);
    let (d, nl) = space.element_dofs(e);
    let (mut val, mut gr) = (0.0, [0.0, 0.0]);
    for a in 0..nl {
        let c = u[d[a]];
        val += c * v[a];
        // J^-T applied to the reference gradient
        let gx = (j[1][1] * g[a][0] - j[1][0] * g[a][1]) / det;
        let gy = (-j[0][1] * g[a][0] + j[0][0] * g[a][1]) / det;
        gr[0] += c * gx;
        gr[1] += c * gy;
    }
    (val, gr)
}

/// Absolute errors, and relative errors normalised by the same norm of the
/// discrete solution. H1 is the full norm, not the seminorm.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorNorms {
    pub l2_abs: f64,
    pub h1_abs: f64,
    pub l2_rel: f64,
    pub h1_rel: f64,
}

type ExactFn<'a> = &'a (dyn Fn(f64, f64) -> Result<(f64, [f64; 2]), FieldError> + Sync);

pub fn error_norms(space: &FemSpace, u_h: &[f64], exact: ExactFn<'_>, exec: Exec) -> Result<ErrorNorms, FemError> {
    let s = integrate_sums(space, u_h, Some(exact), exec)?;
    let (e0, e1, n0, n1) = (s[0], s[1], s[2], s[3]);
    let l2 = e0.sqrt();
    let h1 = (e0 + e1).sqrt();
    Ok(ErrorNorms { l2_abs: l2, h1_abs: h1, l2_rel: l2 / n0.sqrt(), h1_rel: h1 / (n0 + n1).sqrt() })
}

/// `(||u_h||_L2, ||u_h||_H1)`.
pub fn fe_norms(space: &FemSpace, u_h: &[f64], exec: Exec) -> (f64, f64) {
    let s = integrate_sums(space, u_h, None, exec).expect("no exact solution to fail");
    (s[2].sqrt(), (s[2] + s[3]).sqrt())
}

/// Per-element sums of `|e|^2, |∇e|^2, |u_h|^2, |∇u_h|^2`, reduced in element order.
fn integrate_sums(space: &FemSpace, u_h: &[f64], exact: Option<ExactFn<'_>>, exec: Exec) -> Result<[f64; 4], FemError> {
    let tab = Tabulation::new(space, &error_rule(space.family));
    let nl = tab.nl;
    let parts = exec.map(space.mesh.num_elements(), |e| -> Result<[f64; 4], FemError> {
        let (origin, t) = space.element_origin(e);
        let tt = &tab.types[t];
        let (d, _) = space.element_dofs(e);
        let mut acc = [0.0; 4];
        for (q, off) in tt.offsets.iter().enumerate() {
            let (mut v, mut g) = (0.0, [0.0, 0.0]);
            for a in 0..nl {
                let c = u_h[d[a]];
                v += c * tt.values[q * nl + a];
                g[0] += c * tt.grads[q * nl + a][0];
                g[1] += c * tt.grads[q * nl + a][1];
            }
            let w = tt.weights[q];
            if let Some(ex) = exact {
                let (u, gu) = ex(origin[0] + off[0], origin[1] + off[1])?;
                acc[0] += w * (v - u).powi(2);
                acc[1] += w * ((g[0] - gu[0]).powi(2) + (g[1] - gu[1]).powi(2));
            }
            acc[2] += w * v * v;
            acc[3] += w * (g[0] * g[0] + g[1] * g[1]);
        }
        Ok(acc)
    });
    let mut s = [0.0; 4];
    for p in parts {
        let p = p?;
        for i in 0..4 {
            s[i] += p[i];
        }
    }
    Ok(s)
}

/// Riesz map of `V_h`: solves `(v, w)_V = a_par(q, w)` for all free `w`,
/// with `(·,·)_V` the full form `a`. Factorised once, reused per `q`.
pub struct RieszMap {
    free: Vec<usize>,
    n: usize,
    factor: LuFactor,
    a_par: CsrMatrix,
}

impl RieszMap {
    pub fn new(space: &FemSpace, field: &FieldSpec, exec: Exec) -> Result<RieszMap, FemError> {
        let mats = assemble_forms(&[Form::Full, Form::Par], space, field, exec)?;
        let [full, a_par]: [CsrMatrix; 2] = mats.try_into().expect("two forms");
        let free = space.free_dofs();
        let factor = lu_factor(restrict(&full, &free, &free))?;
        Ok(RieszMap { free, n: space.num_dofs(), factor, a_par })
    }

    /// `|q|_*h`, for `q` given on all dofs of the same space.
    pub fn star_norm(&self, q: &[f64]) -> Result<f64, FemError> {
        let full = self.a_par.matvec(q);
        self.star_norm_from_rhs(&full)
    }

    /// Same, from a precomputed `a_par(q, φ_i)` over all dofs.
    pub fn star_norm_from_rhs(&self, rhs_full: &[f64]) -> Result<f64, FemError> {
        debug_assert_eq!(rhs_full.len(), self.n);
        let rhs: Vec<f64> = self.free.iter().map(|&i| rhs_full[i]).collect();
        let v = self.factor.solve(&rhs)?;
        let av = self.factor.matrix().matvec(&v);
        Ok(v.iter().zip(&av).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt())
    }

    /// `|q|_par = a_par(q, q)^(1/2)`.
    pub fn par_seminorm(&self, q: &[f64]) -> f64 {
        self.a_par.bilinear(q, q).max(0.0).sqrt()
    }
}

/// `|q|_*h = sup_{v in V_h} a_par(q, v) / |v|_V`.
pub fn star_h_norm(q: &[f64], field: &FieldSpec, space: &FemSpace, exec: Exec) -> Result<f64, FemError> {
    RieszMap::new(space, field, exec)?.star_norm(q)
}

/// Submatrix on the given row and column index lists (each sorted).
pub fn restrict(m: &CsrMatrix, rows: &[usize], cols: &[usize]) -> CsrMatrix {
    let mut map = vec![usize::MAX; m.ncols()];
    for (k, &c) in cols.iter().enumerate() {
        map[c] = k;
    }
    let mut indptr = Vec::with_capacity(rows.len() + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    indptr.push(0);
    for &r in rows {
        let (c, v) = m.row(r);
        for (&j, &a) in c.iter().zip(v) {
            if map[j] != usize::MAX {
                indices.push(map[j]);
                values.push(a);
            }
        }
        indptr.push(indices.len());
    }
    CsrMatrix::from_parts(rows.len(), cols.len(), indptr, indices, values).expect("restriction keeps order")
}
