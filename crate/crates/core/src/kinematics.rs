//! Deformation gradients at quadrature points, Neumann-series-validity
//! guarded inversion, the isotropic growth split, and the Piola-identity
//! diagnostic.

use crate::fem::{eval_vector_grad, QuadField, Space};
use crate::linsolve::LinearSystem;
use crate::mesh::FacetTag;
use crate::quadrature::segment_rule;
use crate::smallmat::{det, inv, Mat};
use thiserror::Error;

pub type Mat2 = Mat<2>;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("deformation validity lost on simplex {simplex}: max |F - I| = {norm} > {bound}")]
    ValidityLoss {
        simplex: usize,
        norm: f64,
        bound: f64,
    },
    #[error("growth metric dropped below 1/2 on simplex {simplex}: g = {value}")]
    GrowthBound { simplex: usize, value: f64 },
    #[error(transparent)]
    Solve(#[from] crate::linsolve::SolveError),
}

/// F = I + grad u at every quadrature point of the displacement's space,
/// with the row-coordinate gradient convention.
pub fn deformation_gradient(space: &Space, u: &[f64]) -> QuadField<Mat2> {
    QuadField::from_fn(space, |e, qp, _| {
        let g = eval_vector_grad(space, u, e, qp);
        Mat2::new(1.0 + g[0][0], g[0][1], g[1][0], 1.0 + g[1][1])
    })
}

/// Sup-norm diagnostics attached to a gradient inversion.
#[derive(Debug, Clone, Copy, Default)]
pub struct InversionReport {
    /// max |F - I| entrywise over all quadrature points
    pub dev_f: f64,
    /// max |F^{-1} - I| entrywise
    pub dev_finv: f64,
}

/// Pointwise inverse of F, guarded by the validity bound
/// `max |F - I| <= bound` (default 1/2). The offending simplex index is
/// reported on failure.
pub fn invert_f(
    space: &Space,
    f: &QuadField<Mat2>,
    bound: f64,
) -> Result<(QuadField<Mat2>, InversionReport), KinematicsError> {
    let mut report = InversionReport::default();
    let mut values = Vec::with_capacity(f.values.len());
    for (e, elem_vals) in f.values.iter().enumerate() {
        let mut row = Vec::with_capacity(elem_vals.len());
        for m in elem_vals {
            let dev = (m - Mat2::identity()).abs().max();
            if dev > bound {
                return Err(KinematicsError::ValidityLoss {
                    simplex: space.tables[e].simplex,
                    norm: dev,
                    bound,
                });
            }
            report.dev_f = report.dev_f.max(dev);
            let mi = inv(m).expect("within the validity bound F is invertible");
            report.dev_finv = report.dev_finv.max((mi - Mat2::identity()).abs().max());
            row.push(mi);
        }
        values.push(row);
    }
    Ok((QuadField { values }, report))
}

/// Deformation bundle produced by the growth split.
#[derive(Debug, Clone)]
pub struct DeformationState {
    pub f: QuadField<Mat2>,
    pub j: QuadField<f64>,
    pub finv: QuadField<Mat2>,
    pub g: QuadField<f64>,
    pub fe: QuadField<Mat2>,
    pub je: QuadField<f64>,
    /// max |Je - 1| over all quadrature points (elastic incompressibility defect)
    pub max_je_defect: f64,
    pub inversion: InversionReport,
}

/// Splits F multiplicatively into growth (g I) and elastic (F / g) factors.
/// Aborts if the growth metric violates its lower bound 1/2.
pub fn growth_split(
    space: &Space,
    f: &QuadField<Mat2>,
    g: &QuadField<f64>,
    validity_bound: f64,
) -> Result<DeformationState, KinematicsError> {
    let (finv, inversion) = invert_f(space, f, validity_bound)?;
    let mut je_vals = Vec::with_capacity(f.values.len());
    let mut fe_vals = Vec::with_capacity(f.values.len());
    let mut j_vals = Vec::with_capacity(f.values.len());
    let mut defect = 0.0_f64;
    for (e, elem_vals) in f.values.iter().enumerate() {
        let mut je_row = Vec::with_capacity(elem_vals.len());
        let mut fe_row = Vec::with_capacity(elem_vals.len());
        let mut j_row = Vec::with_capacity(elem_vals.len());
        for (qp, m) in elem_vals.iter().enumerate() {
            let gv = g.values[e][qp];
            if gv < 0.5 {
                return Err(KinematicsError::GrowthBound {
                    simplex: space.tables[e].simplex,
                    value: gv,
                });
            }
            let fe = m / gv;
            let je = det(&fe);
            defect = defect.max((je - 1.0).abs());
            je_row.push(je);
            fe_row.push(fe);
            j_row.push(det(m));
        }
        je_vals.push(je_row);
        fe_vals.push(fe_row);
        j_vals.push(j_row);
    }
    Ok(DeformationState {
        f: f.clone(),
        j: QuadField { values: j_vals },
        finv,
        g: g.clone(),
        fe: QuadField { values: fe_vals },
        je: QuadField { values: je_vals },
        max_je_defect: defect,
        inversion,
    })
}

/// Growth Jacobian g^d for the isotropic split (d-generic; d = 3 gives the
/// cubic law, the built discretization uses d = 2).
pub fn growth_jacobian(g: f64, d: usize) -> f64 {
    g.powi(d as i32)
}

/// Discrete L2 norm of the weak divergence of the Piola-transform matrix
/// J F^{-1} built from the displacement's deformation gradient and a
/// separately stored (L2-projected) determinant field, the way the coupled
/// scheme carries them. With the exact pointwise determinant the residual
/// is identically zero for conforming displacements (the adjugate of a
/// continuous P2 gradient has tangentially continuous normal traces); the
/// projected determinant exposes the commutation error, which vanishes for
/// affine maps and decreases under refinement.
/// Facet terms cover the full boundary of the space's subdomain; periodic
/// partners cancel for periodic displacements.
pub struct PiolaResidual<'a> {
    space: &'a Space,
    mass: LinearSystem,
    scalar_mass: LinearSystem,
}

impl<'a> PiolaResidual<'a> {
    pub fn new(space: &'a Space) -> Result<Self, KinematicsError> {
        let n = 2 * space.n_dofs;
        let mut triplets = Vec::new();
        let mut scalar_triplets = Vec::new();
        for t in &space.tables {
            for (qp, &w) in t.qp_w.iter().enumerate() {
                for (a, &da) in t.dofs.iter().enumerate() {
                    for (b, &db) in t.dofs.iter().enumerate() {
                        let v = w * t.basis[qp][a] * t.basis[qp][b];
                        triplets.push((2 * da, 2 * db, v));
                        triplets.push((2 * da + 1, 2 * db + 1, v));
                        scalar_triplets.push((da, db, v));
                    }
                }
            }
        }
        let mass = LinearSystem::new(n, &triplets, &[])?;
        let scalar_mass = LinearSystem::new(space.n_dofs, &scalar_triplets, &[])?;
        Ok(Self {
            space,
            mass,
            scalar_mass,
        })
    }

    /// L2 projection of det F onto the continuous scalar space.
    pub fn project_determinant(&self, u: &[f64]) -> Vec<f64> {
        let space = self.space;
        let mut rhs = vec![0.0; space.n_dofs];
        for (e, t) in space.tables.iter().enumerate() {
            for qp in 0..t.qp_w.len() {
                let g = eval_vector_grad(space, u, e, qp);
                let f = Mat2::new(1.0 + g[0][0], g[0][1], g[1][0], 1.0 + g[1][1]);
                let j = det(&f);
                let w = t.qp_w[qp];
                for (l, &dl) in t.dofs.iter().enumerate() {
                    rhs[dl] += w * t.basis[qp][l] * j;
                }
            }
        }
        self.scalar_mass.solve(&rhs, |_| 0.0)
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        let j_field = self.project_determinant(u);
        self.eval_with_j(u, &j_field)
    }

    /// Residual with an explicitly supplied scalar determinant field.
    pub fn eval_with_j(&self, u: &[f64], j_field: &[f64]) -> f64 {
        let space = self.space;
        let n = 2 * space.n_dofs;
        let mut r = vec![0.0; n];
        // volume part: -int (J_h F^{-1})_ij d_j phi_i
        for (e, t) in space.tables.iter().enumerate() {
            for qp in 0..t.qp_w.len() {
                let g = eval_vector_grad(space, u, e, qp);
                let f = Mat2::new(1.0 + g[0][0], g[0][1], g[1][0], 1.0 + g[1][1]);
                let jh = crate::fem::eval_scalar(space, j_field, e, qp);
                let a = adjugate(&f) * (jh / det(&f));
                let w = t.qp_w[qp];
                for (l, &dl) in t.dofs.iter().enumerate() {
                    let gphi = t.grad[qp][l];
                    for i in 0..2 {
                        // phi = basis * e_i; d_j phi_i = gphi[j]
                        r[2 * dl + i] -= w * (a[(i, 0)] * gphi[0] + a[(i, 1)] * gphi[1]);
                    }
                }
            }
        }
        // facet part: + (A n) . phi over the subdomain boundary
        for facet in &space.mesh.facets {
            let owner = match facet.tag {
                FacetTag::Interface => {
                    if space.subdomain == crate::mesh::Subdomain::Fluid {
                        facet.simplex
                    } else {
                        match facet.simplex_other {
                            Some(s) => s,
                            None => continue,
                        }
                    }
                }
                _ => facet.simplex,
            };
            let Some(e) = space.elem_index(owner) else {
                continue;
            };
            let normal = match facet.tag {
                // interface normal points fluid -> solid; flip for the solid side
                FacetTag::Interface if space.subdomain == crate::mesh::Subdomain::Solid => {
                    [-facet.normal[0], -facet.normal[1]]
                }
                _ => facet.normal,
            };
            let p0 = space.mesh.vertices[facet.vertices[0]];
            let p1 = space.mesh.vertices[facet.vertices[1]];
            for (x, w) in segment_rule(p0, p1, 4) {
                let xi = space.ref_coords(e, x);
                let basis = space.basis_at(xi);
                let grads = space.grads_at(e, xi);
                let mut g = [[0.0; 2]; 2];
                for (l, &dl) in space.tables[e].dofs.iter().enumerate() {
                    for i in 0..2 {
                        for c in 0..2 {
                            g[i][c] += u[2 * dl + c] * grads[l][i];
                        }
                    }
                }
                let f = Mat2::new(1.0 + g[0][0], g[0][1], g[1][0], 1.0 + g[1][1]);
                let mut jh = 0.0;
                for (l, &dl) in space.tables[e].dofs.iter().enumerate() {
                    jh += j_field[dl] * basis[l];
                }
                let a = adjugate(&f) * (jh / det(&f));
                let an = [
                    a[(0, 0)] * normal[0] + a[(0, 1)] * normal[1],
                    a[(1, 0)] * normal[0] + a[(1, 1)] * normal[1],
                ];
                for (l, &dl) in space.tables[e].dofs.iter().enumerate() {
                    for i in 0..2 {
                        r[2 * dl + i] += w * basis[l] * an[i];
                    }
                }
            }
        }
        // Riesz lift: z = M^{-1} r, |z|_{L2} = sqrt(z . r)
        let z = self.mass.solve(&r, |_| 0.0);
        z.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
    }
}

/// Adjugate J F^{-1} without forming the inverse. With the row-coordinate
/// gradient convention this is the matrix whose row-wise divergence
/// vanishes identically for gradients of twice-differentiable maps (the
/// Piola identity).
pub fn adjugate(f: &Mat2) -> Mat2 {
    Mat2::new(f[(1, 1)], -f[(0, 1)], -f[(1, 0)], f[(0, 0)])
}
