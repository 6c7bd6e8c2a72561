//! Element assembly for the mixed velocity/pressure systems: vector mass,
//! symmetric-gradient and general fourth-order elasticity forms, the
//! divergence coupling, and right-hand-side covectors (volume forces,
//! divergence-form matrix data, facet tractions, continuity data).
//!
//! Vector dofs interleave components: dof = 2 * node + component. Pressure
//! spaces must enumerate the same elements as the velocity space (both are
//! built from the same subdomain, in the same order).

use crate::fem::{QuadField, Space};
use crate::kinematics::Mat2;
use crate::mesh::{FacetTag, Subdomain};
use crate::quadrature::segment_rule;

pub type Triplet = (usize, usize, f64);

pub fn vector_mass(space: &Space, scale: f64, out: &mut Vec<Triplet>) {
    for t in &space.tables {
        for (qp, &w) in t.qp_w.iter().enumerate() {
            for (a, &da) in t.dofs.iter().enumerate() {
                for (b, &db) in t.dofs.iter().enumerate() {
                    let v = scale * w * t.basis[qp][a] * t.basis[qp][b];
                    out.push((2 * da, 2 * db, v));
                    out.push((2 * da + 1, 2 * db + 1, v));
                }
            }
        }
    }
}

/// coeff * (grad u + grad^T u) : grad phi.
pub fn sym_gradient_form(space: &Space, coeff: f64, out: &mut Vec<Triplet>) {
    for t in &space.tables {
        for (qp, &w) in t.qp_w.iter().enumerate() {
            for (a, &da) in t.dofs.iter().enumerate() {
                let ga = &t.grad[qp][a];
                for (b, &db) in t.dofs.iter().enumerate() {
                    let gb = &t.grad[qp][b];
                    let dot = ga[0] * gb[0] + ga[1] * gb[1];
                    for i in 0..2 {
                        for j in 0..2 {
                            let mut v = gb[i] * ga[j];
                            if i == j {
                                v += dot;
                            }
                            out.push((2 * da + i, 2 * db + j, coeff * w * v));
                        }
                    }
                }
            }
        }
    }
}

/// General (C grad u) : grad phi with a constant fourth-order tensor packed
/// as c[((r*2+c)*2+k)*2+l], acting as (C A)_{rc} = C_{rckl} A_{kl}.
pub fn elasticity_form(space: &Space, c: &[f64], out: &mut Vec<Triplet>) {
    assert_eq!(c.len(), 16);
    for t in &space.tables {
        for (qp, &w) in t.qp_w.iter().enumerate() {
            for (a, &da) in t.dofs.iter().enumerate() {
                let ga = &t.grad[qp][a];
                for (b, &db) in t.dofs.iter().enumerate() {
                    let gb = &t.grad[qp][b];
                    for i in 0..2 {
                        for j in 0..2 {
                            // sum_{r,k} C_{r i k j} gb[k] ga[r]
                            let mut v = 0.0;
                            for r in 0..2 {
                                for k in 0..2 {
                                    v += c[((r * 2 + i) * 2 + k) * 2 + j] * gb[k] * ga[r];
                                }
                            }
                            out.push((2 * da + i, 2 * db + j, w * v));
                        }
                    }
                }
            }
        }
    }
}

/// Symmetric divergence coupling: momentum block -(psi, div phi) and
/// continuity block -(div u, psi). `vel_offset`/`prs_offset` place the
/// blocks in the global numbering.
pub fn divergence_coupling(
    vel: &Space,
    prs: &Space,
    prs_offset: usize,
    out: &mut Vec<Triplet>,
) {
    assert_eq!(vel.elems, prs.elems, "mixed pair must share elements");
    for (e, tv) in vel.tables.iter().enumerate() {
        let tp = &prs.tables[e];
        for (qp, &w) in tv.qp_w.iter().enumerate() {
            for (a, &da) in tv.dofs.iter().enumerate() {
                let ga = &tv.grad[qp][a];
                for (l, &dl) in tp.dofs.iter().enumerate() {
                    let psi = tp.basis[qp][l];
                    for i in 0..2 {
                        let v = -w * psi * ga[i];
                        out.push((2 * da + i, prs_offset + dl, v));
                        out.push((prs_offset + dl, 2 * da + i, v));
                    }
                }
            }
        }
    }
}

/// Covector of (f, phi) for a positionally given volume force.
pub fn volume_force(space: &Space, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let mut rhs = vec![0.0; 2 * space.n_dofs];
    for t in &space.tables {
        for (qp, &w) in t.qp_w.iter().enumerate() {
            let fv = f(t.qp_x[qp]);
            for (a, &da) in t.dofs.iter().enumerate() {
                rhs[2 * da] += w * t.basis[qp][a] * fv[0];
                rhs[2 * da + 1] += w * t.basis[qp][a] * fv[1];
            }
        }
    }
    rhs
}

/// Divergence-form right-hand side for matrix data K given at quadrature
/// points: the covector phi -> -int K_ij d_j phi_i. Together with the
/// natural boundary terms of the weak form this realizes body force
/// div K with consistent traction -K n on the Neumann part.
pub fn divergence_form(space: &Space, k: &QuadField<Mat2>) -> Vec<f64> {
    let mut rhs = vec![0.0; 2 * space.n_dofs];
    for (e, t) in space.tables.iter().enumerate() {
        for (qp, &w) in t.qp_w.iter().enumerate() {
            let m = &k.values[e][qp];
            for (a, &da) in t.dofs.iter().enumerate() {
                let g = &t.grad[qp][a];
                for i in 0..2 {
                    rhs[2 * da + i] -= w * (m[(i, 0)] * g[0] + m[(i, 1)] * g[1]);
                }
            }
        }
    }
    rhs
}

/// Covector of the facet integral (h, phi) over facets with the given tag.
pub fn facet_traction(
    space: &Space,
    tag: FacetTag,
    h: impl Fn([f64; 2]) -> [f64; 2],
) -> Vec<f64> {
    let mut rhs = vec![0.0; 2 * space.n_dofs];
    for (_, facet) in space.mesh.facets_of(tag) {
        let owner = if tag == FacetTag::Interface && space.subdomain == Subdomain::Solid {
            facet.simplex_other.expect("interface facet has a solid side")
        } else {
            facet.simplex
        };
        let Some(e) = space.elem_index(owner) else {
            continue;
        };
        let p0 = space.mesh.vertices[facet.vertices[0]];
        let p1 = space.mesh.vertices[facet.vertices[1]];
        for (x, w) in segment_rule(p0, p1, 4) {
            let xi = space.ref_coords(e, x);
            let basis = space.basis_at(xi);
            let hv = h(x);
            for (a, &da) in space.tables[e].dofs.iter().enumerate() {
                rhs[2 * da] += w * basis[a] * hv[0];
                rhs[2 * da + 1] += w * basis[a] * hv[1];
            }
        }
    }
    rhs
}

/// Continuity covector -(g, psi) for divergence data given at the pressure
/// space's quadrature points.
pub fn continuity_data(
    prs: &Space,
    g: impl Fn(usize, usize, [f64; 2]) -> f64,
) -> Vec<f64> {
    let mut rhs = vec![0.0; prs.n_dofs];
    for (e, t) in prs.tables.iter().enumerate() {
        for (qp, &w) in t.qp_w.iter().enumerate() {
            let gv = g(e, qp, t.qp_x[qp]);
            for (l, &dl) in t.dofs.iter().enumerate() {
                rhs[dl] -= w * t.basis[qp][l] * gv;
            }
        }
    }
    rhs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterfaceSide {
    Fluid,
    Solid,
}

/// Lifts a vector covector restricted to the interface into nodal values
/// through the interface trace mass matrix (P2 trace space). Returns one
/// [t_x, t_y] per interface node of `imap`.
pub fn lift_interface_covector(
    space: &Space,
    imap: &crate::fem::InterfaceMap,
    side: InterfaceSide,
    covector: &[f64],
) -> Result<Vec<[f64; 2]>, crate::linsolve::SolveError> {
    let nn = imap.nodes.len();
    let node_dof = |n: &crate::fem::InterfaceNode| match side {
        InterfaceSide::Fluid => n.fluid_dof,
        InterfaceSide::Solid => n.solid_dof,
    };
    let mut local_of = std::collections::HashMap::new();
    for (i, node) in imap.nodes.iter().enumerate() {
        local_of.insert(node_dof(node), i);
    }
    let mut triplets = Vec::new();
    let mesh = &space.mesh;
    for &(fi, ef, es) in &imap.facets {
        let e = match side {
            InterfaceSide::Fluid => ef,
            InterfaceSide::Solid => es,
        };
        let facet = &mesh.facets[fi];
        let p0 = mesh.vertices[facet.vertices[0]];
        let p1 = mesh.vertices[facet.vertices[1]];
        for (x, w) in segment_rule(p0, p1, 4) {
            let xi = space.ref_coords(e, x);
            let basis = space.basis_at(xi);
            let dofs = &space.tables[e].dofs;
            for (a, &da) in dofs.iter().enumerate() {
                let Some(&ia) = local_of.get(&da) else {
                    continue;
                };
                for (b, &db) in dofs.iter().enumerate() {
                    if let Some(&ib) = local_of.get(&db) {
                        triplets.push((ia, ib, w * basis[a] * basis[b]));
                    }
                }
            }
        }
    }
    let msys = crate::linsolve::LinearSystem::new(nn, &triplets, &[])?;
    let rx: Vec<f64> = imap
        .nodes
        .iter()
        .map(|n| covector[2 * node_dof(n)])
        .collect();
    let ry: Vec<f64> = imap
        .nodes
        .iter()
        .map(|n| covector[2 * node_dof(n) + 1])
        .collect();
    let tx = msys.solve(&rx, |_| 0.0);
    let ty = msys.solve(&ry, |_| 0.0);
    Ok(tx.iter().zip(&ty).map(|(&a, &b)| [a, b]).collect())
}

/// Scalar mass triplets (for L2 norms and projections).
pub fn scalar_mass(space: &Space, scale: f64, out: &mut Vec<Triplet>) {
    for t in &space.tables {
        for (qp, &w) in t.qp_w.iter().enumerate() {
            for (a, &da) in t.dofs.iter().enumerate() {
                for (b, &db) in t.dofs.iter().enumerate() {
                    out.push((da, db, scale * w * t.basis[qp][a] * t.basis[qp][b]));
                }
            }
        }
    }
}

/// Scalar stiffness triplets: coeff * (grad u, grad phi).
pub fn scalar_stiffness(space: &Space, coeff: f64, out: &mut Vec<Triplet>) {
    for t in &space.tables {
        for (qp, &w) in t.qp_w.iter().enumerate() {
            for (a, &da) in t.dofs.iter().enumerate() {
                let ga = &t.grad[qp][a];
                for (b, &db) in t.dofs.iter().enumerate() {
                    let gb = &t.grad[qp][b];
                    out.push((da, db, coeff * w * (ga[0] * gb[0] + ga[1] * gb[1])));
                }
            }
        }
    }
}

/// Scalar volume source covector (f, phi).
pub fn scalar_source(space: &Space, f: impl Fn(usize, usize, [f64; 2]) -> f64) -> Vec<f64> {
    let mut rhs = vec![0.0; space.n_dofs];
    for (e, t) in space.tables.iter().enumerate() {
        for (qp, &w) in t.qp_w.iter().enumerate() {
            let fv = f(e, qp, t.qp_x[qp]);
            for (a, &da) in t.dofs.iter().enumerate() {
                rhs[da] += w * t.basis[qp][a] * fv;
            }
        }
    }
    rhs
}

/// Scalar divergence-form covector phi -> -int v . grad phi for vector data
/// v at quadrature points.
pub fn scalar_divergence_form(space: &Space, v: &QuadField<[f64; 2]>) -> Vec<f64> {
    let mut rhs = vec![0.0; space.n_dofs];
    for (e, t) in space.tables.iter().enumerate() {
        for (qp, &w) in t.qp_w.iter().enumerate() {
            let vv = v.values[e][qp];
            for (a, &da) in t.dofs.iter().enumerate() {
                let g = &t.grad[qp][a];
                rhs[da] -= w * (vv[0] * g[0] + vv[1] * g[1]);
            }
        }
    }
    rhs
}
