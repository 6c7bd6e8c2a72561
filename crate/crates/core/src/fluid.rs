//! Nonstationary Stokes steps on the fluid layer: implicit Euler in time,
//! Taylor–Hood (continuous P2 velocity / P1 pressure) in space, strong
//! no-slip on the wall, natural traction data on the interface, periodic in
//! x. The system matrix is factored once and reused for every step.

use crate::assemble;
use crate::fem::{eval_scalar, QuadField, Space};
use crate::linsolve::{CsrMatrix, LinearSystem, SolveError};
use crate::mesh::FacetTag;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FluidError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
}

/// Per-step compatibility warnings (checked, not enforced).
#[derive(Debug, Clone, Default)]
pub struct CompatibilityReport {
    /// weak divergence defect |(div u0 - g(0), psi)| lifted to L2
    pub divergence_defect: f64,
    /// max tangential traction mismatch at t = 0 on the interface
    pub tangential_traction_defect: f64,
}

pub struct FluidSolver<'a> {
    pub vel: &'a Space,
    pub prs: &'a Space,
    pub rho: f64,
    pub nu: f64,
    pub dt: f64,
    pub n_vel: usize,
    pub n: usize,
    sys: LinearSystem,
    mass: CsrMatrix,
    wall_dofs: Vec<usize>,
}

impl<'a> FluidSolver<'a> {
    pub fn new(vel: &'a Space, prs: &'a Space, rho: f64, nu: f64, dt: f64) -> Result<Self, FluidError> {
        if dt <= 0.0 {
            return Err(FluidError::BadTimeStep(dt));
        }
        let n_vel = 2 * vel.n_dofs;
        let n = n_vel + prs.n_dofs;
        let mut triplets = Vec::new();
        assemble::vector_mass(vel, rho / dt, &mut triplets);
        assemble::sym_gradient_form(vel, nu, &mut triplets);
        assemble::divergence_coupling(vel, prs, n_vel, &mut triplets);
        let mut wall_dofs = Vec::new();
        for node in vel.dofs_on(FacetTag::Wall) {
            wall_dofs.push(2 * node);
            wall_dofs.push(2 * node + 1);
        }
        let sys = LinearSystem::new(n, &triplets, &wall_dofs)?;
        let mut mass_triplets = Vec::new();
        assemble::vector_mass(vel, 1.0, &mut mass_triplets);
        let mass = CsrMatrix::from_triplets(n_vel, n_vel, &mass_triplets);
        Ok(Self {
            vel,
            prs,
            rho,
            nu,
            dt,
            n_vel,
            n,
            sys,
            mass,
            wall_dofs,
        })
    }

    /// One implicit-Euler step. `momentum` is the assembled covector of all
    /// momentum data at the new time level (volume forces, divergence-form
    /// matrix data, interface traction); `continuity` the covector -(g, psi).
    /// No-slip wall values are enforced strongly.
    pub fn solve_step(
        &self,
        prev_vel: &[f64],
        momentum: &[f64],
        continuity: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let mut rhs = vec![0.0; self.n];
        let m_prev = self.mass.matvec(prev_vel);
        for i in 0..self.n_vel {
            rhs[i] = momentum[i] + self.rho / self.dt * m_prev[i];
        }
        rhs[self.n_vel..].copy_from_slice(continuity);
        let x = self.sys.solve(&rhs, |_| 0.0);
        let vel = x[..self.n_vel].to_vec();
        let prs = x[self.n_vel..].to_vec();
        (vel, prs)
    }

    /// Full unconstrained residual A x - b for a solved step, given the
    /// same data covectors the step would use. Constrained (wall) rows carry
    /// reactions, free rows the data lag.
    pub fn residual_rows(
        &self,
        vel_new: &[f64],
        prs_new: &[f64],
        vel_prev: &[f64],
        momentum: &[f64],
        continuity: &[f64],
    ) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        x[..self.n_vel].copy_from_slice(vel_new);
        x[self.n_vel..].copy_from_slice(prs_new);
        let mut rhs = vec![0.0; self.n];
        let m_prev = self.mass.matvec(vel_prev);
        for i in 0..self.n_vel {
            rhs[i] = momentum[i] + self.rho / self.dt * m_prev[i];
        }
        rhs[self.n_vel..].copy_from_slice(continuity);
        self.sys.reaction(&x, &rhs)
    }

    /// L2 norm of a velocity coefficient vector.
    pub fn l2_vel(&self, v: &[f64]) -> f64 {
        let mv = self.mass.matvec(v);
        mv.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
    }

    /// Discrete L2 norm of div u - g (g given at pressure quadrature points).
    pub fn divergence_residual(
        &self,
        v: &[f64],
        g: impl Fn(usize, usize, [f64; 2]) -> f64,
    ) -> f64 {
        let mut acc = 0.0;
        for (e, t) in self.prs.tables.iter().enumerate() {
            for (qp, &w) in t.qp_w.iter().enumerate() {
                let gr = crate::fem::eval_vector_grad(self.vel, v, e, qp);
                let div = gr[0][0] + gr[1][1];
                acc += w * (div - g(e, qp, t.qp_x[qp])).powi(2);
            }
        }
        acc.sqrt()
    }

    /// Variationally consistent traction on the interface for a solved step:
    /// the residual functional of the momentum equation restricted to
    /// interface test functions. For the solver's own solutions this
    /// reproduces the imposed Neumann data; for externally built states it
    /// lifts their discrete traction.
    pub fn traction_functional(
        &self,
        vel_new: &[f64],
        prs_new: &[f64],
        vel_prev: &[f64],
        momentum_wo_traction: &[f64],
    ) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        x[..self.n_vel].copy_from_slice(vel_new);
        x[self.n_vel..].copy_from_slice(prs_new);
        let mut rhs = vec![0.0; self.n];
        let m_prev = self.mass.matvec(vel_prev);
        for i in 0..self.n_vel {
            rhs[i] = momentum_wo_traction[i] + self.rho / self.dt * m_prev[i];
        }
        let r = self.sys.reaction(&x, &rhs);
        r[..self.n_vel].to_vec()
    }

    /// Lifts an interface covector to nodal traction values through the
    /// interface mass matrix of the velocity trace space.
    pub fn lift_interface_covector(
        &self,
        imap: &crate::fem::InterfaceMap,
        covector: &[f64],
    ) -> Result<Vec<[f64; 2]>, FluidError> {
        Ok(crate::assemble::lift_interface_covector(
            self.vel,
            imap,
            crate::assemble::InterfaceSide::Fluid,
            covector,
        )?)
    }

    /// Pressure values at the interface nodes (the interface pressure trace).
    pub fn interface_pressure(
        &self,
        imap: &crate::fem::InterfaceMap,
        prs: &[f64],
    ) -> Vec<f64> {
        // P1 pressure: evaluate at node coordinates through the fluid-side
        // facet elements
        imap.nodes
            .iter()
            .map(|node| {
                let &(_, ef, _) = imap
                    .facets
                    .iter()
                    .find(|&&(fi, _, _)| {
                        let f = &self.vel.mesh.facets[fi];
                        let p0 = self.vel.mesh.vertices[f.vertices[0]];
                        let p1 = self.vel.mesh.vertices[f.vertices[1]];
                        node.coord[0] >= p0[0].min(p1[0]) - 1e-12
                            && node.coord[0] <= p0[0].max(p1[0]) + 1e-12
                    })
                    .expect("interface node lies on an interface facet");
                let xi = self.prs.ref_coords(ef, node.coord);
                let basis = self.prs.basis_at(xi);
                self.prs.tables[ef]
                    .dofs
                    .iter()
                    .zip(&basis)
                    .map(|(&d, &b)| prs[d] * b)
                    .sum()
            })
            .collect()
    }

    /// Compatibility of initial data per the linear theory: weak divergence
    /// and tangential traction at t = 0 (warn-only diagnostics).
    pub fn check_compatibility(
        &self,
        u0: &[f64],
        g0: impl Fn(usize, usize, [f64; 2]) -> f64,
        h0_tangential: impl Fn([f64; 2]) -> f64,
    ) -> CompatibilityReport {
        let divergence_defect = self.divergence_residual(u0, g0);
        // tangential part of nu (grad u0 + grad^T u0) n on the interface vs data
        let mut defect = 0.0_f64;
        let mesh = &self.vel.mesh;
        for (_, facet) in mesh.facets_of(FacetTag::Interface) {
            let e = self.vel.elem_index(facet.simplex).unwrap();
            let p0 = mesh.vertices[facet.vertices[0]];
            let p1 = mesh.vertices[facet.vertices[1]];
            for (x, _) in crate::quadrature::segment_rule(p0, p1, 2) {
                let xi = self.vel.ref_coords(e, x);
                let grads = self.vel.grads_at(e, xi);
                let mut g = [[0.0; 2]; 2];
                for (l, &dl) in self.vel.tables[e].dofs.iter().enumerate() {
                    for i in 0..2 {
                        for c in 0..2 {
                            g[i][c] += u0[2 * dl + c] * grads[l][i];
                        }
                    }
                }
                let nrm = facet.normal;
                let tan = [-nrm[1], nrm[0]];
                let mut tn = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        tn += self.nu * (g[i][j] + g[j][i]) * nrm[j] * tan[i];
                    }
                }
                defect = defect.max((tn - h0_tangential(x)).abs());
            }
        }
        CompatibilityReport {
            divergence_defect,
            tangential_traction_defect: defect,
        }
    }

    /// Interface velocity trace values at the interface nodes.
    pub fn interface_velocity(
        &self,
        imap: &crate::fem::InterfaceMap,
        vel: &[f64],
    ) -> Vec<[f64; 2]> {
        imap.nodes
            .iter()
            .map(|n| [vel[2 * n.fluid_dof], vel[2 * n.fluid_dof + 1]])
            .collect()
    }

    pub fn wall_dofs(&self) -> &[usize] {
        &self.wall_dofs
    }

    /// Evaluate the pressure field at quadrature points of the velocity
    /// space (aligned element lists).
    pub fn pressure_at_qp(&self, prs: &[f64]) -> QuadField<f64> {
        QuadField::from_fn(self.prs, |e, qp, _| eval_scalar(self.prs, prs, e, qp))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{Degree, InterfaceMap, Space};
    use crate::mesh::{build_strip_mesh, Subdomain};
    use std::f64::consts::TAU;
    use std::sync::Arc;

    struct Setup {
        vel: Space,
        prs: Space,
    }

    fn setup(n: usize) -> Setup {
        let mesh = Arc::new(build_strip_mesh(1.0, 0.5, 0.5, n).unwrap());
        Setup {
            vel: Space::new(mesh.clone(), Degree::P2, Subdomain::Fluid),
            prs: Space::new(mesh, Degree::P1, Subdomain::Fluid),
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let s = setup(4);
        let solver = FluidSolver::new(&s.vel, &s.prs, 1.0, 1.0, 0.01).unwrap();
        let zero_m = vec![0.0; solver.n_vel];
        let zero_c = vec![0.0; s.prs.n_dofs];
        let mut v = vec![0.0; solver.n_vel];
        for _ in 0..3 {
            let (vn, p) = solver.solve_step(&v, &zero_m, &zero_c);
            assert!(solver.l2_vel(&vn) < 1e-13);
            assert!(p.iter().all(|&x| x.abs() < 1e-11));
            v = vn;
        }
    }

    #[test]
    fn implicit_euler_is_dissipative_without_data() {
        let s = setup(4);
        let solver = FluidSolver::new(&s.vel, &s.prs, 1.0, 0.5, 0.02).unwrap();
        let zero_m = vec![0.0; solver.n_vel];
        let zero_c = vec![0.0; s.prs.n_dofs];
        let mut v = s.vel.interpolate_vector(|x| {
            [
                (TAU * x[0]).sin() * (x[1] + 0.5),
                (TAU * x[0]).cos() * x[1],
            ]
        });
        // zero out the wall so the state is admissible
        for &d in solver.wall_dofs() {
            v[d] = 0.0;
        }
        let mut prev_norm = solver.l2_vel(&v);
        for _ in 0..5 {
            let (vn, _) = solver.solve_step(&v, &zero_m, &zero_c);
            let nn = solver.l2_vel(&vn);
            assert!(nn <= prev_norm + 1e-12, "{nn} > {prev_norm}");
            prev_norm = nn;
            v = vn;
        }
    }

    #[test]
    fn solution_superposes_in_the_data() {
        let s = setup(4);
        let solver = FluidSolver::new(&s.vel, &s.prs, 1.2, 0.7, 0.01).unwrap();
        let f1 = assemble::volume_force(&s.vel, |x| [(TAU * x[0]).sin(), x[1]]);
        let f2 = assemble::facet_traction(&s.vel, FacetTag::Interface, |x| {
            [(TAU * x[0]).cos(), 1.0]
        });
        let g1 = assemble::continuity_data(&s.prs, |_, _, x| (TAU * x[0]).sin() * x[1]);
        let zero_c = vec![0.0; s.prs.n_dofs];
        let zero_v = vec![0.0; solver.n_vel];
        let (va, pa) = solver.solve_step(&zero_v, &f1, &g1);
        let (vb, pb) = solver.solve_step(&zero_v, &f2, &zero_c);
        let combined: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let gc: Vec<f64> = g1.iter().map(|a| 2.0 * a).collect();
        let (vc, pc) = solver.solve_step(&zero_v, &combined, &gc);
        for i in 0..solver.n_vel {
            let lin = 2.0 * va[i] - 3.0 * vb[i];
            assert!((vc[i] - lin).abs() < 1e-10);
        }
        for l in 0..s.prs.n_dofs {
            let lin = 2.0 * pa[l] - 3.0 * pb[l];
            assert!((pc[l] - lin).abs() < 1e-9);
        }
    }

    #[test]
    fn steady_traction_gives_hydrostatic_pressure() {
        // h = (0, -pbar) on the interface, no force: u = 0 and
        // S n = -p (0,1) = (0, -pbar), so p = +pbar
        let s = setup(4);
        let solver = FluidSolver::new(&s.vel, &s.prs, 1.0, 1.0, 1e9).unwrap();
        let pbar = 2.5;
        let h = assemble::facet_traction(&s.vel, FacetTag::Interface, |_| [0.0, -pbar]);
        let zero_c = vec![0.0; s.prs.n_dofs];
        let zero_v = vec![0.0; solver.n_vel];
        let (v, p) = solver.solve_step(&zero_v, &h, &zero_c);
        assert!(solver.l2_vel(&v) < 1e-9);
        for &pv in &p {
            assert!((pv - pbar).abs() < 1e-9, "{pv}");
        }
        assert!(solver.divergence_residual(&v, |_, _, _| 0.0) < 1e-10);
    }

    #[test]
    fn manufactured_steady_spatial_convergence() {
        // stream-function solution, wall-compatible, periodic in x
        let nu = 1.0;
        let exact_u = |x: [f64; 2]| {
            let (s, c) = (TAU * x[0]).sin_cos();
            let yp = x[1] + 0.5;
            [2.0 * yp * s, -TAU * c * yp * yp]
        };
        let exact_p = |x: [f64; 2]| (TAU * x[0]).cos() * (1.0 + x[1]);
        // f = -nu lap u + grad p
        let force = move |x: [f64; 2]| {
            let (s, c) = (TAU * x[0]).sin_cos();
            let yp = x[1] + 0.5;
            let lap_u = [-TAU * TAU * 2.0 * yp * s, TAU * TAU * TAU * c * yp * yp - 2.0 * TAU * c];
            let grad_p = [-TAU * s * (1.0 + x[1]), (TAU * x[0]).cos()];
            [
                -nu * lap_u[0] + grad_p[0],
                -nu * lap_u[1] + grad_p[1],
            ]
        };
        // traction on the interface y = 0 with n = (0,1):
        // t_i = -p n_i + nu (d_i u_j + d_j u_i) n_j -> t = (nu(dy ux + dx uy), -p + 2 nu dy uy)
        let traction = move |x: [f64; 2]| {
            let (s, c) = (TAU * x[0]).sin_cos();
            let yp: f64 = 0.5;
            let dy_ux = 2.0 * s;
            let dx_uy = TAU * TAU * s * yp * yp;
            let dy_uy = -2.0 * TAU * c * yp;
            [
                nu * (dy_ux + dx_uy),
                -exact_p([x[0], 0.0]) + 2.0 * nu * dy_uy,
            ]
        };
        let mut errors = Vec::new();
        for n in [4usize, 8, 16] {
            let s = setup(n);
            let solver = FluidSolver::new(&s.vel, &s.prs, 1.0, nu, 1e9).unwrap();
            let mut rhs = assemble::volume_force(&s.vel, force);
            let tr = assemble::facet_traction(&s.vel, FacetTag::Interface, traction);
            for (r, t) in rhs.iter_mut().zip(&tr) {
                *r += t;
            }
            let zero_c = vec![0.0; s.prs.n_dofs];
            let zero_v = vec![0.0; solver.n_vel];
            let (v, _) = solver.solve_step(&zero_v, &rhs, &zero_c);
            let ex = s.vel.interpolate_vector(exact_u);
            let diff: Vec<f64> = v.iter().zip(&ex).map(|(a, b)| a - b).collect();
            errors.push(solver.l2_vel(&diff));
        }
        let eoc1 = (errors[0] / errors[1]).log2();
        let eoc2 = (errors[1] / errors[2]).log2();
        assert!(eoc1 > 1.8 && eoc2 > 1.8, "errors {errors:?} eocs {eoc1} {eoc2}");
    }

    #[test]
    fn manufactured_temporal_convergence_first_order() {
        // spatially exact (quadratic) profile, so the error is purely temporal
        let s = setup(4);
        let nu = 0.8;
        let rho = 1.5;
        let t_final = 0.5;
        let exact = |x: [f64; 2], t: f64| [t.sin() * (x[1] + 0.5) * (x[1] + 0.5), 0.0];
        let mut errors = Vec::new();
        for steps in [8usize, 16, 32] {
            let dt = t_final / steps as f64;
            let solver = FluidSolver::new(&s.vel, &s.prs, rho, nu, dt).unwrap();
            let zero_c = vec![0.0; s.prs.n_dofs];
            let mut v = vec![0.0; solver.n_vel];
            for k in 1..=steps {
                let t = k as f64 * dt;
                let mut rhs = assemble::volume_force(&s.vel, move |x| {
                    let yp = x[1] + 0.5;
                    [rho * t.cos() * yp * yp - 2.0 * nu * t.sin(), 0.0]
                });
                let tr = assemble::facet_traction(&s.vel, FacetTag::Interface, move |_| {
                    [nu * t.sin(), 0.0]
                });
                for (r, tv) in rhs.iter_mut().zip(&tr) {
                    *r += tv;
                }
                let (vn, _) = solver.solve_step(&v, &rhs, &zero_c);
                v = vn;
            }
            let ex = s.vel.interpolate_vector(|x| exact(x, t_final));
            let diff: Vec<f64> = v.iter().zip(&ex).map(|(a, b)| a - b).collect();
            errors.push(solver.l2_vel(&diff));
        }
        let eoc1 = (errors[0] / errors[1]).log2();
        let eoc2 = (errors[1] / errors[2]).log2();
        assert!(eoc1 > 0.9 && eoc2 > 0.9, "errors {errors:?}");
    }

    #[test]
    fn couette_traction_lifted_exactly() {
        // u = (y, 0), p = 0, nu = 1: traction on y = 0 is (1, 0)
        let s = setup(4);
        let solver = FluidSolver::new(&s.vel, &s.prs, 1.0, 1.0, 1e9).unwrap();
        let imap = {
            let mesh = s.vel.mesh.clone();
            let solid = Space::new(mesh.clone(), Degree::P2, Subdomain::Solid);
            InterfaceMap::new(&mesh, &s.vel, &solid)
        };
        let v = s.vel.interpolate_vector(|x| [x[1], 0.0]);
        let p = vec![0.0; s.prs.n_dofs];
        // steady residual: pass prev = v so the time term cancels
        let zero_m = vec![0.0; solver.n_vel];
        let r = solver.traction_functional(&v, &p, &v, &zero_m);
        let lifted = solver.lift_interface_covector(&imap, &r).unwrap();
        for t in &lifted {
            assert!((t[0] - 1.0).abs() < 1e-10 && t[1].abs() < 1e-10, "{t:?}");
        }
        // pure pressure state: u = 0, p = c gives traction (0, -c)
        let c = 1.7;
        let p = vec![c; s.prs.n_dofs];
        let v0 = vec![0.0; solver.n_vel];
        let r = solver.traction_functional(&v0, &p, &v0, &zero_m);
        let lifted = solver.lift_interface_covector(&imap, &r).unwrap();
        for t in &lifted {
            assert!(t[0].abs() < 1e-10 && (t[1] - (-c)).abs() < 1e-10, "{t:?}");
        }
    }

    #[test]
    fn compatibility_report_flags_bad_initial_data() {
        let s = setup(4);
        let solver = FluidSolver::new(&s.vel, &s.prs, 1.0, 1.0, 0.01).unwrap();
        let ok = vec![0.0; solver.n_vel];
        let rep = solver.check_compatibility(&ok, |_, _, _| 0.0, |_| 0.0);
        assert!(rep.divergence_defect < 1e-12);
        assert!(rep.tangential_traction_defect < 1e-12);
        let bad = s.vel.interpolate_vector(|x| [(x[1] + 0.5) * (x[1] + 0.5), 0.0]);
        let rep = solver.check_compatibility(&bad, |_, _, _| 0.0, |_| 0.0);
        assert!(rep.tangential_traction_defect > 0.1);
    }
}
