//! Simplicial finite elements on the strip mesh: continuous P1/P2 spaces per
//! subdomain with periodic identification in x, a broken (two-sided) space
//! for fields that jump across the interface, nodal interpolation, and
//! precomputed element tables for assembly.
//!
//! Gradient convention throughout the crate: `(grad u)_ij = d_i u_j`, i.e.
//! rows index the coordinate, columns the component.

use crate::mesh::{FacetTag, Mesh, Subdomain};
use crate::quadrature::TriangleRule;
use std::collections::HashMap;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degree {
    P1,
    P2,
}

/// Canonical mesh entity carrying a degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    Vertex(usize),
    Edge(usize),
}

/// Per-element tables at the default quadrature rule: physical points,
/// scaled weights, basis values, physical gradients and (constant) second
/// derivatives of the local basis.
#[derive(Debug, Clone)]
pub struct ElementTables {
    pub simplex: usize,
    pub dofs: Vec<usize>,
    pub qp_x: Vec<[f64; 2]>,
    pub qp_w: Vec<f64>,
    /// `basis[qp][loc]`
    pub basis: Vec<Vec<f64>>,
    /// `grad[qp][loc] = [d/dx, d/dy]`
    pub grad: Vec<Vec<[f64; 2]>>,
    /// `hess[loc] = [dxx, dxy, dyy]`, constant over the element
    pub hess: Vec<[f64; 3]>,
    pub area: f64,
}

/// A continuous scalar Lagrange space on one subdomain, periodic in x.
#[derive(Debug)]
pub struct Space {
    pub mesh: Arc<Mesh>,
    pub degree: Degree,
    pub subdomain: Subdomain,
    /// Simplex indices covered by this space.
    pub elems: Vec<usize>,
    /// Global dofs per element, aligned with `elems`.
    pub elem_dofs: Vec<Vec<usize>>,
    pub n_dofs: usize,
    /// Representative coordinate of each dof (vertex or edge midpoint).
    pub dof_coords: Vec<[f64; 2]>,
    pub dof_node: Vec<Node>,
    dof_of_node: HashMap<Node, usize>,
    pub tables: Vec<ElementTables>,
}

pub fn p1_basis(x: [f64; 2]) -> [f64; 3] {
    [1.0 - x[0] - x[1], x[0], x[1]]
}

pub fn p1_grad_ref() -> [[f64; 2]; 3] {
    [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]
}

/// P2 basis ordered: 3 vertex functions, then the edge function opposite
/// each vertex (edge i joins vertices (i+1)%3 and (i+2)%3).
pub fn p2_basis(x: [f64; 2]) -> [f64; 6] {
    let l = [1.0 - x[0] - x[1], x[0], x[1]];
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
        4.0 * l[0] * l[1],
    ]
}

pub fn p2_grad_ref(x: [f64; 2]) -> [[f64; 2]; 6] {
    let l = [1.0 - x[0] - x[1], x[0], x[1]];
    let dl = p1_grad_ref();
    let mut g = [[0.0; 2]; 6];
    for i in 0..3 {
        for d in 0..2 {
            g[i][d] = (4.0 * l[i] - 1.0) * dl[i][d];
        }
    }
    for i in 0..3 {
        let a = (i + 1) % 3;
        let b = (i + 2) % 3;
        for d in 0..2 {
            g[3 + i][d] = 4.0 * (dl[a][d] * l[b] + l[a] * dl[b][d]);
        }
    }
    g
}

/// Reference second derivatives [dxx, dxy, dyy]; constant for P2.
fn p2_hess_ref() -> [[f64; 3]; 6] {
    let dl = p1_grad_ref();
    let mut h = [[0.0; 3]; 6];
    for i in 0..3 {
        h[i] = [
            4.0 * dl[i][0] * dl[i][0],
            4.0 * dl[i][0] * dl[i][1],
            4.0 * dl[i][1] * dl[i][1],
        ];
    }
    for i in 0..3 {
        let a = (i + 1) % 3;
        let b = (i + 2) % 3;
        h[3 + i] = [
            8.0 * dl[a][0] * dl[b][0],
            4.0 * (dl[a][0] * dl[b][1] + dl[a][1] * dl[b][0]),
            8.0 * dl[a][1] * dl[b][1],
        ];
    }
    h
}

impl Space {
    pub fn new(mesh: Arc<Mesh>, degree: Degree, subdomain: Subdomain) -> Self {
        let elems: Vec<usize> = mesh.simplices_of(subdomain).collect();
        let mut dof_of_node: HashMap<Node, usize> = HashMap::new();
        let mut dof_coords = Vec::new();
        let mut dof_node = Vec::new();
        let mut elem_dofs = Vec::with_capacity(elems.len());
        for &k in &elems {
            let tri = mesh.simplices[k];
            let mut dofs = Vec::with_capacity(6);
            for &v in &tri {
                let node = Node::Vertex(mesh.periodic_vertex[v]);
                let next = dof_of_node.len();
                let dof = *dof_of_node.entry(node).or_insert(next);
                if dof == next {
                    dof_coords.push(mesh.vertices[v]);
                    dof_node.push(node);
                }
                dofs.push(dof);
            }
            if degree == Degree::P2 {
                for loc in 0..3 {
                    let e = mesh.simplex_edges[k][loc];
                    let node = Node::Edge(mesh.periodic_edge[e]);
                    let next = dof_of_node.len();
                    let dof = *dof_of_node.entry(node).or_insert(next);
                    if dof == next {
                        let [a, b] = mesh.edges[e];
                        let pa = mesh.vertices[a];
                        let pb = mesh.vertices[b];
                        dof_coords.push([(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0]);
                        dof_node.push(node);
                    }
                    dofs.push(dof);
                }
            }
            elem_dofs.push(dofs);
        }
        let n_dofs = dof_of_node.len();
        let rule = TriangleRule::degree5();
        let tables = elems
            .iter()
            .zip(&elem_dofs)
            .map(|(&k, dofs)| build_tables(&mesh, k, dofs.clone(), degree, &rule))
            .collect();
        Self {
            mesh,
            degree,
            subdomain,
            elems,
            elem_dofs,
            n_dofs,
            dof_coords,
            dof_node,
            dof_of_node,
            tables,
        }
    }

    pub fn dof_of(&self, node: Node) -> Option<usize> {
        self.dof_of_node.get(&node).copied()
    }

    /// Dofs whose nodes lie on facets with the given tag (canonicalized).
    pub fn dofs_on(&self, tag: FacetTag) -> Vec<usize> {
        let mesh = &self.mesh;
        let mut seen = vec![false; self.n_dofs];
        let mut out = Vec::new();
        for (_, f) in mesh.facets_of(tag) {
            let mut push = |node: Node, space: &Space| {
                if let Some(d) = space.dof_of(node) {
                    if !seen[d] {
                        seen[d] = true;
                        out.push(d);
                    }
                }
            };
            for &v in &f.vertices {
                push(Node::Vertex(mesh.periodic_vertex[v]), self);
            }
            if self.degree == Degree::P2 {
                let [a, b] = f.vertices;
                if let Some(e) = edge_index(mesh, a, b) {
                    push(Node::Edge(mesh.periodic_edge[e]), self);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Nodal interpolation of a function (evaluated at dof coordinates).
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.dof_coords.iter().map(|&x| f(x)).collect()
    }

    pub fn interpolate_vector(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.n_dofs];
        for (i, &x) in self.dof_coords.iter().enumerate() {
            let v = f(x);
            out[2 * i] = v[0];
            out[2 * i + 1] = v[1];
        }
        out
    }

    /// Barycentric coordinates of the physical point `x` in element `e`
    /// (index into `self.elems`).
    pub fn ref_coords(&self, e: usize, x: [f64; 2]) -> [f64; 2] {
        let [p0, p1, p2] = self.mesh.simplex_coords(self.elems[e]);
        let j = [
            [p1[0] - p0[0], p2[0] - p0[0]],
            [p1[1] - p0[1], p2[1] - p0[1]],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let rx = x[0] - p0[0];
        let ry = x[1] - p0[1];
        [
            (j[1][1] * rx - j[0][1] * ry) / det,
            (-j[1][0] * rx + j[0][0] * ry) / det,
        ]
    }

    pub fn basis_at(&self, xi: [f64; 2]) -> Vec<f64> {
        match self.degree {
            Degree::P1 => p1_basis(xi).to_vec(),
            Degree::P2 => p2_basis(xi).to_vec(),
        }
    }

    /// Physical basis gradients of element `e` at reference point `xi`.
    pub fn grads_at(&self, e: usize, xi: [f64; 2]) -> Vec<[f64; 2]> {
        let [p0, p1, p2] = self.mesh.simplex_coords(self.elems[e]);
        let j = [
            [p1[0] - p0[0], p2[0] - p0[0]],
            [p1[1] - p0[1], p2[1] - p0[1]],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let jinv_t = [
            [j[1][1] / det, -j[1][0] / det],
            [-j[0][1] / det, j[0][0] / det],
        ];
        let gref: Vec<[f64; 2]> = match self.degree {
            Degree::P1 => p1_grad_ref().to_vec(),
            Degree::P2 => p2_grad_ref(xi).to_vec(),
        };
        gref.iter()
            .map(|g| {
                [
                    jinv_t[0][0] * g[0] + jinv_t[0][1] * g[1],
                    jinv_t[1][0] * g[0] + jinv_t[1][1] * g[1],
                ]
            })
            .collect()
    }

    /// Position of element `simplex` within `self.elems`, if covered.
    pub fn elem_index(&self, simplex: usize) -> Option<usize> {
        // elems is sorted ascending by construction
        self.elems.binary_search(&simplex).ok()
    }
}

pub fn edge_index(mesh: &Mesh, a: usize, b: usize) -> Option<usize> {
    let key = [a.min(b), a.max(b)];
    // linear scan avoided: search the edge lists of the facet-adjacent
    // simplices is not available here, so use the global sorted pairs
    mesh.edges.iter().position(|e| *e == key)
}

fn build_tables(
    mesh: &Mesh,
    simplex: usize,
    dofs: Vec<usize>,
    degree: Degree,
    rule: &TriangleRule,
) -> ElementTables {
    let [p0, p1, p2] = mesh.simplex_coords(simplex);
    let j = [
        [p1[0] - p0[0], p2[0] - p0[0]],
        [p1[1] - p0[1], p2[1] - p0[1]],
    ];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let adet = det.abs();
    let jinv_t = [
        [j[1][1] / det, -j[1][0] / det],
        [-j[0][1] / det, j[0][0] / det],
    ];
    let jinv = [
        [j[1][1] / det, -j[0][1] / det],
        [-j[1][0] / det, j[0][0] / det],
    ];
    let mut qp_x = Vec::with_capacity(rule.len());
    let mut qp_w = Vec::with_capacity(rule.len());
    let mut basis = Vec::with_capacity(rule.len());
    let mut grad = Vec::with_capacity(rule.len());
    for (pt, &w) in rule.points.iter().zip(&rule.weights) {
        qp_x.push([
            p0[0] + j[0][0] * pt[0] + j[0][1] * pt[1],
            p0[1] + j[1][0] * pt[0] + j[1][1] * pt[1],
        ]);
        qp_w.push(w * adet);
        let (b, gref): (Vec<f64>, Vec<[f64; 2]>) = match degree {
            Degree::P1 => (p1_basis(*pt).to_vec(), p1_grad_ref().to_vec()),
            Degree::P2 => (p2_basis(*pt).to_vec(), p2_grad_ref(*pt).to_vec()),
        };
        basis.push(b);
        grad.push(
            gref.iter()
                .map(|g| {
                    [
                        jinv_t[0][0] * g[0] + jinv_t[0][1] * g[1],
                        jinv_t[1][0] * g[0] + jinv_t[1][1] * g[1],
                    ]
                })
                .collect(),
        );
    }
    // physical second derivatives: Jinv^T H Jinv, constant for P1/P2
    let hess = match degree {
        Degree::P1 => vec![[0.0; 3]; 3],
        Degree::P2 => p2_hess_ref()
            .iter()
            .map(|h| {
                let href = [[h[0], h[1]], [h[1], h[2]]];
                let mut tmp = [[0.0; 2]; 2];
                for r in 0..2 {
                    for c in 0..2 {
                        tmp[r][c] = jinv[0][r] * (href[0][0] * jinv[0][c] + href[0][1] * jinv[1][c])
                            + jinv[1][r] * (href[1][0] * jinv[0][c] + href[1][1] * jinv[1][c]);
                    }
                }
                [tmp[0][0], tmp[0][1], tmp[1][1]]
            })
            .collect(),
    };
    ElementTables {
        simplex,
        dofs,
        qp_x,
        qp_w,
        basis,
        grad,
        hess,
        area: adet / 2.0,
    }
}

/// The broken concentration space: independent P2 spaces on the fluid and
/// solid subdomain with duplicated interface nodes, so the field may jump
/// across the interface. Coefficients are laid out fluid-first.
#[derive(Debug)]
pub struct BrokenSpace {
    pub fluid: Space,
    pub solid: Space,
}

impl BrokenSpace {
    pub fn new(mesh: Arc<Mesh>, degree: Degree) -> Self {
        Self {
            fluid: Space::new(mesh.clone(), degree, Subdomain::Fluid),
            solid: Space::new(mesh, degree, Subdomain::Solid),
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.fluid.n_dofs + self.solid.n_dofs
    }

    pub fn solid_offset(&self) -> usize {
        self.fluid.n_dofs
    }

    pub fn interpolate(
        &self,
        f_fluid: impl Fn([f64; 2]) -> f64,
        f_solid: impl Fn([f64; 2]) -> f64,
    ) -> Vec<f64> {
        let mut c = self.fluid.interpolate(f_fluid);
        c.extend(self.solid.interpolate(f_solid));
        c
    }
}

/// Scalar field as coefficients over a space; the space is shared.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub coeffs: Vec<f64>,
}

/// Evaluate a scalar coefficient vector on one element of `space` at local
/// quadrature point `qp`.
pub fn eval_scalar(space: &Space, coeffs: &[f64], e: usize, qp: usize) -> f64 {
    let t = &space.tables[e];
    t.dofs
        .iter()
        .zip(&t.basis[qp])
        .map(|(&d, &b)| coeffs[d] * b)
        .sum()
}

pub fn eval_scalar_grad(space: &Space, coeffs: &[f64], e: usize, qp: usize) -> [f64; 2] {
    let t = &space.tables[e];
    let mut g = [0.0; 2];
    for (&d, gr) in t.dofs.iter().zip(&t.grad[qp]) {
        g[0] += coeffs[d] * gr[0];
        g[1] += coeffs[d] * gr[1];
    }
    g
}

/// Evaluate a vector coefficient vector (interleaved components) at a qp.
pub fn eval_vector(space: &Space, coeffs: &[f64], e: usize, qp: usize) -> [f64; 2] {
    let t = &space.tables[e];
    let mut v = [0.0; 2];
    for (&d, &b) in t.dofs.iter().zip(&t.basis[qp]) {
        v[0] += coeffs[2 * d] * b;
        v[1] += coeffs[2 * d + 1] * b;
    }
    v
}

/// Gradient of a vector field at a qp, convention `(grad u)_ij = d_i u_j`.
pub fn eval_vector_grad(space: &Space, coeffs: &[f64], e: usize, qp: usize) -> [[f64; 2]; 2] {
    let t = &space.tables[e];
    let mut g = [[0.0; 2]; 2];
    for (&d, gr) in t.dofs.iter().zip(&t.grad[qp]) {
        for i in 0..2 {
            for jc in 0..2 {
                g[i][jc] += coeffs[2 * d + jc] * gr[i];
            }
        }
    }
    g
}

/// One interface node shared (geometrically) by the fluid and solid traces.
#[derive(Debug, Clone, Copy)]
pub struct InterfaceNode {
    pub coord: [f64; 2],
    pub fluid_dof: usize,
    pub solid_dof: usize,
}

/// Trace pairing of two P2 spaces along the interface, plus per-facet
/// element references for facet quadrature.
#[derive(Debug)]
pub struct InterfaceMap {
    pub nodes: Vec<InterfaceNode>,
    /// (facet index, fluid element index in fluid space, solid element index
    /// in solid space)
    pub facets: Vec<(usize, usize, usize)>,
}

impl InterfaceMap {
    pub fn new(mesh: &Mesh, fluid: &Space, solid: &Space) -> Self {
        assert_eq!(fluid.degree, Degree::P2);
        assert_eq!(solid.degree, Degree::P2);
        let mut nodes = Vec::new();
        let mut seen: HashMap<Node, ()> = HashMap::new();
        let mut facets = Vec::new();
        for (fi, f) in mesh.facets_of(FacetTag::Interface) {
            let ef = fluid.elem_index(f.simplex).expect("fluid side");
            let es = solid.elem_index(f.simplex_other.unwrap()).expect("solid side");
            facets.push((fi, ef, es));
            let mut push = |node: Node, coord: [f64; 2]| {
                if seen.insert(node, ()).is_none() {
                    nodes.push(InterfaceNode {
                        coord,
                        fluid_dof: fluid.dof_of(node).expect("interface node in fluid space"),
                        solid_dof: solid.dof_of(node).expect("interface node in solid space"),
                    });
                }
            };
            for &v in &f.vertices {
                push(Node::Vertex(mesh.periodic_vertex[v]), mesh.vertices[v]);
            }
            let [a, b] = f.vertices;
            let e = edge_index(mesh, a, b).expect("interface edge");
            let pa = mesh.vertices[a];
            let pb = mesh.vertices[b];
            push(
                Node::Edge(mesh.periodic_edge[e]),
                [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0],
            );
        }
        Self { nodes, facets }
    }
}

/// Values stored per element and quadrature point of a space.
#[derive(Debug, Clone)]
pub struct QuadField<T: Clone> {
    pub values: Vec<Vec<T>>,
}

impl<T: Clone> QuadField<T> {
    pub fn from_fn(space: &Space, mut f: impl FnMut(usize, usize, [f64; 2]) -> T) -> Self {
        let values = space
            .tables
            .iter()
            .enumerate()
            .map(|(e, t)| {
                t.qp_x
                    .iter()
                    .enumerate()
                    .map(|(qp, &x)| f(e, qp, x))
                    .collect()
            })
            .collect();
        Self { values }
    }

    pub fn constant(space: &Space, v: T) -> Self {
        let values = space
            .tables
            .iter()
            .map(|t| vec![v.clone(); t.qp_x.len()])
            .collect();
        Self { values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_strip_mesh;

    fn mesh4() -> Arc<Mesh> {
        Arc::new(build_strip_mesh(1.0, 0.5, 0.5, 4).unwrap())
    }

    #[test]
    fn p2_partition_of_unity() {
        for pt in [[0.2, 0.3], [0.0, 0.0], [0.5, 0.5], [0.1, 0.05]] {
            let s: f64 = p2_basis(pt).iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
            let g = p2_grad_ref(pt);
            for d in 0..2 {
                let gs: f64 = g.iter().map(|v| v[d]).sum();
                assert!(gs.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn interpolation_reproduces_quadratics_exactly() {
        // quadratic and periodic in x means independent of x
        let mesh = mesh4();
        let space = Space::new(mesh, Degree::P2, Subdomain::Fluid);
        let f = |x: [f64; 2]| 1.0 + 3.0 * x[1] - 2.0 * x[1] * x[1];
        let coeffs = space.interpolate(f);
        for e in 0..space.elems.len() {
            for qp in 0..space.tables[e].qp_x.len() {
                let x = space.tables[e].qp_x[qp];
                let v = eval_scalar(&space, &coeffs, e, qp);
                assert!((v - f(x)).abs() < 1e-13);
                let g = eval_scalar_grad(&space, &coeffs, e, qp);
                assert!(g[0].abs() < 1e-12);
                assert!((g[1] - (3.0 - 4.0 * x[1])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadrature_weights_sum_to_subdomain_area() {
        let mesh = mesh4();
        let space = Space::new(mesh, Degree::P2, Subdomain::Solid);
        let total: f64 = space
            .tables
            .iter()
            .flat_map(|t| t.qp_w.iter())
            .sum();
        assert!((total - 0.5).abs() < 1e-13);
    }

    #[test]
    fn periodic_dofs_identified() {
        let mesh = mesh4();
        let space = Space::new(mesh.clone(), Degree::P2, Subdomain::Fluid);
        // a function periodic in x interpolates consistently; vertex at x=0
        // and x=L share the dof
        let left = space
            .dof_coords
            .iter()
            .filter(|c| c[0] == 0.0)
            .count();
        let right = space
            .dof_coords
            .iter()
            .filter(|c| (c[0] - mesh.length).abs() < 1e-14)
            .count();
        assert!(left > 0);
        assert_eq!(right, 0, "x = L nodes must alias x = 0 nodes");
    }

    #[test]
    fn vector_gradient_convention_is_row_coordinate() {
        // simple shear u = (gamma*y, 0): grad u = [[0,0],[gamma,0]]
        let mesh = mesh4();
        let space = Space::new(mesh, Degree::P2, Subdomain::Fluid);
        let gamma = 0.7;
        let coeffs = space.interpolate_vector(|x| [gamma * x[1], 0.0]);
        let g = eval_vector_grad(&space, &coeffs, 0, 0);
        assert!(g[0][0].abs() < 1e-13);
        assert!(g[0][1].abs() < 1e-13);
        assert!((g[1][0] - gamma).abs() < 1e-13);
        assert!(g[1][1].abs() < 1e-13);
    }

    #[test]
    fn broken_space_duplicates_interface_nodes() {
        let mesh = mesh4();
        let broken = BrokenSpace::new(mesh.clone(), Degree::P2);
        let imap = InterfaceMap::new(&mesh, &broken.fluid, &broken.solid);
        // nx vertices (periodic: one gets identified) + nx edge midpoints
        assert_eq!(imap.nodes.len(), 4 + 4);
        for n in &imap.nodes {
            assert_eq!(n.coord[1], 0.0);
        }
        // a two-sided constant with a jump interpolates exactly
        let c = broken.interpolate(|_| 1.0, |_| 2.0);
        for n in &imap.nodes {
            assert_eq!(c[n.fluid_dof], 1.0);
            assert_eq!(c[broken.solid_offset() + n.solid_dof], 2.0);
        }
    }

    #[test]
    fn second_derivative_tables() {
        let mesh = mesh4();
        let space = Space::new(mesh, Degree::P2, Subdomain::Fluid);
        // f = x^2 + 3xy: hessian [[2,3],[3,0]]
        let coeffs = space.interpolate(|x| x[0] * x[0] + 3.0 * x[0] * x[1]);
        let t = &space.tables[0];
        let mut h = [0.0; 3];
        for (&d, hl) in t.dofs.iter().zip(&t.hess) {
            for c in 0..3 {
                h[c] += coeffs[d] * hl[c];
            }
        }
        assert!((h[0] - 2.0).abs() < 1e-12);
        assert!((h[1] - 3.0).abs() < 1e-12);
        assert!(h[2].abs() < 1e-12);
    }
}
