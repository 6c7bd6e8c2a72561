//! The coupled driver: initial-data preparation (compatibility checks and
//! the nonlinear initial solid equilibrium), assembly of all lower-order
//! data terms of the decoupled linearization from a given iterate, and the
//! global-in-time fixed-point iteration over whole trajectories.
//!
//! One sweep of the iteration map solves, in order, the fluid steps (with
//! the previous iterate's solid interface traction as Neumann data), the
//! solid steps (with interface displacement data integrated from the new
//! fluid velocity and the growth-integral constraint), the transmission
//! steps, and the pointwise growth ODEs. The stopping test uses the
//! anisotropic space-time surrogate norm of the iterate difference.

use crate::assemble;
use crate::cells::{self, CellsError, CellsSolver, OdeParams};
use crate::fem::{
    eval_scalar, eval_scalar_grad, eval_vector_grad, BrokenSpace, Degree, InterfaceMap, QuadField,
    Space,
};
use crate::fluid::{FluidError, FluidSolver};
use crate::kinematics::{KinematicsError, Mat2};
use crate::linsolve::{LinearSystem, SolveError};
use crate::materials::{EnergyDensity, MaterialError};
use crate::mesh::{FacetTag, Mesh, Subdomain};
use crate::norms::{trajectory_norm, FieldOn, NormError, NormKind, NormSpec, Trajectory};
use crate::quadrature::segment_rule;
use crate::smallmat::inv;
use crate::solid::{SolidError, SolidSolver};
use crate::DIM;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("initial data violates `{condition}`: defect {defect:.3e} > {tol:.3e}")]
    Compatibility {
        condition: String,
        defect: f64,
        tol: f64,
    },
    #[error("initial equilibrium Newton iteration diverged (residual {residual:.3e} after {iterations} iterations)")]
    NewtonDivergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Fluid(#[from] FluidError),
    #[error(transparent)]
    Solid(#[from] SolidError),
    #[error(transparent)]
    Cells(#[from] CellsError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Norm(#[from] NormError),
}

/// Physical constants of the coupled system.
#[derive(Debug, Clone, Copy)]
pub struct Params {
    pub rho_f: f64,
    pub nu_f: f64,
    pub rho_s: f64,
    pub mu: f64,
    pub d_f: f64,
    pub d_s: f64,
    pub beta: f64,
    pub gamma: f64,
    pub zeta: f64,
    /// smallness budget for the initial solid strain/pressure
    pub kappa: f64,
    /// diagnostic integrability exponent (q > 5 in the short-time theory)
    pub q: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            rho_f: 1.0,
            nu_f: 1.0,
            rho_s: 1.0,
            mu: 1.0,
            d_f: 1.0,
            d_s: 0.5,
            beta: 0.1,
            gamma: 0.1,
            zeta: 1.0,
            kappa: 0.1,
            q: 6.0,
        }
    }
}

impl Params {
    pub fn ode(&self) -> OdeParams {
        OdeParams {
            beta: self.beta,
            gamma: self.gamma,
            rho_s: self.rho_s,
            dim: DIM,
        }
    }
}

/// All finite-element spaces of the coupled scheme on one mesh.
pub struct Discretization {
    pub mesh: Arc<Mesh>,
    pub vel: Space,
    pub prs_f: Space,
    pub dsp: Space,
    pub prs_s: Space,
    pub conc: BrokenSpace,
    /// velocity/displacement trace pairing on the interface
    pub iface_vd: InterfaceMap,
    /// two-sided concentration pairing on the interface
    pub iface_c: InterfaceMap,
}

impl Discretization {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let vel = Space::new(mesh.clone(), Degree::P2, Subdomain::Fluid);
        let prs_f = Space::new(mesh.clone(), Degree::P1, Subdomain::Fluid);
        let dsp = Space::new(mesh.clone(), Degree::P2, Subdomain::Solid);
        let prs_s = Space::new(mesh.clone(), Degree::P1, Subdomain::Solid);
        let conc = BrokenSpace::new(mesh.clone(), Degree::P2);
        assert_eq!(vel.elems, prs_f.elems);
        assert_eq!(dsp.elems, prs_s.elems);
        assert_eq!(vel.elems, conc.fluid.elems);
        assert_eq!(dsp.elems, conc.solid.elems);
        let iface_vd = InterfaceMap::new(&mesh, &vel, &dsp);
        let iface_c = InterfaceMap::new(&mesh, &conc.fluid, &conc.solid);
        Self {
            mesh,
            vel,
            prs_f,
            dsp,
            prs_s,
            conc,
            iface_vd,
            iface_c,
        }
    }
}

/// One space-time iterate of the coupled unknowns.
#[derive(Debug, Clone)]
pub struct StateW {
    pub times: Vec<f64>,
    pub vel: Vec<Vec<f64>>,
    pub prs_f: Vec<Vec<f64>>,
    pub dsp: Vec<Vec<f64>>,
    pub prs_s: Vec<Vec<f64>>,
    pub conc: Vec<Vec<f64>>,
    pub cstar: Vec<Vec<f64>>,
    pub growth: Vec<Vec<f64>>,
    /// interface traction covectors (on fluid velocity dofs) actually used
    /// as Neumann data at each step of the last sweep
    pub gamma_traction: Vec<Vec<f64>>,
}

impl StateW {
    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }
}

/// Prepared initial data for one window of the fixed-point iteration.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub vel0: Vec<f64>,
    pub conc0: Vec<f64>,
    pub cstar0: Vec<f64>,
    pub growth0: Vec<f64>,
    pub dsp0: Vec<f64>,
    pub prs_s0: Vec<f64>,
    /// interface fluid-pressure trace values per interface node of iface_vd
    pub pf0_trace: Vec<f64>,
    pub kappa: f64,
    /// measured initial strain/pressure size (fractional Sobolev surrogate)
    pub smallness: f64,
    /// uniform body force absorbed by the translation multiplier of the
    /// pure-traction equilibrium (zero for self-equilibrated data)
    pub equilibration_force: [f64; 2],
    /// compatibility defects at acceptance (all below tolerance)
    pub compatibility_defects: Vec<(String, f64)>,
}

/// The lower-order data terms of the decoupled linearization, evaluated
/// from one iterate at every time node. Matrix and vector entries live at
/// quadrature points; interface and outer-boundary traces are nodal.
pub struct RhsBundle {
    pub ktilde_f: Vec<QuadField<Mat2>>,
    pub g_f: Vec<QuadField<f64>>,
    pub ktilde_s: Vec<QuadField<Mat2>>,
    pub g_s: Vec<QuadField<f64>>,
    /// (gamma beta / rho_s) int_0^{t_k} c_s, at solid quadrature points
    pub growth_integral: Vec<QuadField<f64>>,
    pub ftilde_f: Vec<QuadField<[f64; 2]>>,
    pub ftilde_s: Vec<QuadField<[f64; 2]>>,
    /// reaction and growth-gradient part of the solid concentration source
    pub reaction_s: Vec<QuadField<f64>>,
    /// interface displacement data: time integral of the iterate's fluid
    /// velocity trace, per interface node of iface_vd
    pub h_s1: Vec<Vec<[f64; 2]>>,
    /// interface traction covector of the iterate's solid stress (on fluid
    /// velocity dofs): the Neumann datum of the fluid problem
    pub solid_traction: Vec<Vec<f64>>,
    /// traction-jump datum -K_f n + K_s n at interface nodes (diagnostic)
    pub h_f1: Vec<Vec<[f64; 2]>>,
    /// fluid-side interface flux datum (diagnostic)
    pub f2_f: Vec<Vec<f64>>,
    /// solid-side interface flux datum (diagnostic)
    pub f2_s: Vec<Vec<f64>>,
    /// outer-boundary flux datum (diagnostic, per outer facet node)
    pub f3: Vec<Vec<f64>>,
    /// linearized foam-cell correction at solid nodes
    pub f4: Vec<Vec<f64>>,
    /// linearized growth correction at solid nodes
    pub f5: Vec<Vec<f64>>,
}

impl RhsBundle {
    /// Max absolute entry over every stored term (the rest-state test).
    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0_f64;
        let qf = |m: &mut f64, f: &QuadField<f64>| {
            for row in &f.values {
                for v in row {
                    *m = m.max(v.abs());
                }
            }
        };
        for k in 0..self.ktilde_f.len() {
            for row in &self.ktilde_f[k].values {
                for v in row {
                    m = m.max(v.abs().max());
                }
            }
            for row in &self.ktilde_s[k].values {
                for v in row {
                    m = m.max(v.abs().max());
                }
            }
            for row in &self.ftilde_f[k].values {
                for v in row {
                    m = m.max(v[0].abs()).max(v[1].abs());
                }
            }
            for row in &self.ftilde_s[k].values {
                for v in row {
                    m = m.max(v[0].abs()).max(v[1].abs());
                }
            }
            qf(&mut m, &self.g_f[k]);
            qf(&mut m, &self.g_s[k]);
            qf(&mut m, &self.reaction_s[k]);
            for v in &self.h_s1[k] {
                m = m.max(v[0].abs()).max(v[1].abs());
            }
            for v in &self.h_f1[k] {
                m = m.max(v[0].abs()).max(v[1].abs());
            }
            for v in &self.f2_f[k] {
                m = m.max(v.abs());
            }
            for v in &self.f2_s[k] {
                m = m.max(v.abs());
            }
            for v in &self.f3[k] {
                m = m.max(v.abs());
            }
            for v in &self.f4[k] {
                m = m.max(v.abs());
            }
            for v in &self.f5[k] {
                m = m.max(v.abs());
            }
        }
        m
    }
}

fn mat_from_grad(g: [[f64; 2]; 2]) -> Mat2 {
    Mat2::new(g[0][0], g[0][1], g[1][0], g[1][1])
}

/// Cumulative trapezoidal time integrals of a trajectory of coefficient
/// vectors: out[k] = int_0^{t_k}.
fn cumulative_trapezoid(times: &[f64], snaps: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(snaps.len());
    out.push(vec![0.0; snaps[0].len()]);
    for k in 1..snaps.len() {
        let h = times[k] - times[k - 1];
        let prev = &out[k - 1];
        let next: Vec<f64> = prev
            .iter()
            .zip(snaps[k - 1].iter().zip(&snaps[k]))
            .map(|(acc, (a, b))| acc + h * (a + b) / 2.0)
            .collect();
        out.push(next);
    }
    out
}

/// Assembles every lower-order data term of the linearization from the
/// iterate `w` and the window's initial data. The deformation-validity
/// bound guards both inversions.
pub fn assemble_rhs(
    disc: &Discretization,
    params: &Params,
    energy: &EnergyDensity<2>,
    w: &StateW,
    w0: &InitialData,
) -> Result<RhsBundle, CouplingError> {
    let n_nodes = w.times.len();
    let d = DIM as i32;
    let off = disc.conc.solid_offset();
    // fluid displacement history
    let u_f = cumulative_trapezoid(&w.times, &w.vel);
    let mut bundle = RhsBundle {
        ktilde_f: Vec::with_capacity(n_nodes),
        g_f: Vec::with_capacity(n_nodes),
        ktilde_s: Vec::with_capacity(n_nodes),
        g_s: Vec::with_capacity(n_nodes),
        growth_integral: Vec::with_capacity(n_nodes),
        ftilde_f: Vec::with_capacity(n_nodes),
        ftilde_s: Vec::with_capacity(n_nodes),
        reaction_s: Vec::with_capacity(n_nodes),
        h_s1: Vec::with_capacity(n_nodes),
        solid_traction: Vec::with_capacity(n_nodes),
        h_f1: Vec::with_capacity(n_nodes),
        f2_f: Vec::with_capacity(n_nodes),
        f2_s: Vec::with_capacity(n_nodes),
        f3: Vec::with_capacity(n_nodes),
        f4: Vec::with_capacity(n_nodes),
        f5: Vec::with_capacity(n_nodes),
    };
    let c_s_int = {
        let c_solid: Vec<Vec<f64>> = w.conc.iter().map(|c| c[off..].to_vec()).collect();
        cumulative_trapezoid(&w.times, &c_solid)
    };
    // exact coefficient differences for the growth factors
    let g0_minus_1: Vec<f64> = w0.growth0.iter().map(|v| v - 1.0).collect();
    let g_minus_g0: Vec<Vec<f64>> = w
        .growth
        .iter()
        .map(|gk| gk.iter().zip(&w0.growth0).map(|(a, b)| a - b).collect())
        .collect();
    let identity = Mat2::identity();
    for k in 0..n_nodes {
        // --- fluid side ---
        let mut ktf = Vec::with_capacity(disc.vel.tables.len());
        let mut gf = Vec::with_capacity(disc.vel.tables.len());
        let mut ftf = Vec::with_capacity(disc.vel.tables.len());
        for (e, t) in disc.vel.tables.iter().enumerate() {
            let nq = t.qp_w.len();
            let mut ktf_row = Vec::with_capacity(nq);
            let mut gf_row = Vec::with_capacity(nq);
            let mut ftf_row = Vec::with_capacity(nq);
            for qp in 0..nq {
                let f = identity + mat_from_grad(eval_vector_grad(&disc.vel, &u_f[k], e, qp));
                let dev = (f - identity).abs().max();
                if dev > 0.5 {
                    return Err(KinematicsError::ValidityLoss {
                        simplex: t.simplex,
                        norm: dev,
                        bound: 0.5,
                    }
                    .into());
                }
                let finv = inv(&f).expect("valid deformation gradient");
                let finv_t = finv.transpose();
                let gv = mat_from_grad(eval_vector_grad(&disc.vel, &w.vel[k], e, qp));
                let pf = eval_scalar(&disc.prs_f, &w.prs_f[k], e, qp);
                ktf_row.push(ktilde_f_point(params.nu_f, gv, pf, finv));
                gf_row.push(-(finv_t - identity).dot(&gv));
                // concentration flux correction
                let gc = eval_scalar_grad(&disc.conc.fluid, &w.conc[k][..off], e, qp);
                let geo = finv * finv_t - identity;
                ftf_row.push([
                    params.d_f * (geo[(0, 0)] * gc[0] + geo[(0, 1)] * gc[1]),
                    params.d_f * (geo[(1, 0)] * gc[0] + geo[(1, 1)] * gc[1]),
                ]);
            }
            ktf.push(ktf_row);
            gf.push(gf_row);
            ftf.push(ftf_row);
            let _ = e;
        }
        // --- solid side ---
        let mut kts = Vec::with_capacity(disc.dsp.tables.len());
        let mut gs = Vec::with_capacity(disc.dsp.tables.len());
        let mut fts = Vec::with_capacity(disc.dsp.tables.len());
        let mut reac = Vec::with_capacity(disc.dsp.tables.len());
        let mut gint = Vec::with_capacity(disc.dsp.tables.len());
        for (e, t) in disc.dsp.tables.iter().enumerate() {
            let nq = t.qp_w.len();
            let mut kts_row = Vec::with_capacity(nq);
            let mut gs_row = Vec::with_capacity(nq);
            let mut fts_row = Vec::with_capacity(nq);
            let mut reac_row = Vec::with_capacity(nq);
            let mut gint_row = Vec::with_capacity(nq);
            for qp in 0..nq {
                let gu = mat_from_grad(eval_vector_grad(&disc.dsp, &w.dsp[k], e, qp));
                let f = identity + gu;
                let dev = gu.abs().max();
                if dev > 0.5 {
                    return Err(KinematicsError::ValidityLoss {
                        simplex: t.simplex,
                        norm: dev,
                        bound: 0.5,
                    }
                    .into());
                }
                let finv = inv(&f).expect("valid deformation gradient");
                let finv_t = finv.transpose();
                let dg = eval_scalar(&disc.conc.solid, &g_minus_g0[k], e, qp);
                let dg0 = eval_scalar(&disc.conc.solid, &g0_minus_1, e, qp);
                let g = 1.0 + dg0 + dg;
                if g < 0.5 {
                    return Err(KinematicsError::GrowthBound {
                        simplex: t.simplex,
                        value: g,
                    }
                    .into());
                }
                let ps = eval_scalar(&disc.prs_s, &w.prs_s[k], e, qp);
                kts_row.push(ktilde_s_point(params, energy, gu, ps, dg, dg0)?);
                gs_row.push(-(finv_t - identity).dot(&gu));
                let gc = eval_scalar_grad(&disc.conc.solid, &w.conc[k][off..], e, qp);
                let geo = finv * finv_t - identity;
                fts_row.push([
                    params.d_s * (geo[(0, 0)] * gc[0] + geo[(0, 1)] * gc[1]),
                    params.d_s * (geo[(1, 0)] * gc[0] + geo[(1, 1)] * gc[1]),
                ]);
                // reaction and growth-gradient source at the lagged iterate
                let cs = eval_scalar(&disc.conc.solid, &w.conc[k][off..], e, qp);
                let ggrad = eval_scalar_grad(&disc.conc.solid, &w.growth[k], e, qp);
                let full_flux = finv * finv_t * nalgebra::Vector2::new(gc[0], gc[1]) * params.d_s;
                let growth_term =
                    d as f64 / g * (ggrad[0] * full_flux[0] + ggrad[1] * full_flux[1]);
                reac_row.push(
                    -params.beta * cs * (1.0 + params.gamma / params.rho_s * cs) - growth_term,
                );
                gint_row.push(
                    params.gamma * params.beta / params.rho_s
                        * eval_scalar(&disc.conc.solid, &c_s_int[k], e, qp),
                );
            }
            kts.push(kts_row);
            gs.push(gs_row);
            fts.push(fts_row);
            reac.push(reac_row);
            gint.push(gint_row);
            let _ = e;
        }
        let ktilde_f = QuadField { values: ktf };
        let ktilde_s = QuadField { values: kts };
        // interface displacement datum from the iterate's own velocity
        let h_s1: Vec<[f64; 2]> = disc
            .iface_vd
            .nodes
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let n = &disc.iface_vd.nodes[i];
                [u_f[k][2 * n.fluid_dof], u_f[k][2 * n.fluid_dof + 1]]
            })
            .collect();
        // solid interface traction covector (full linearized Piola stress)
        let solid_traction = interface_traction_covector(
            disc,
            params,
            energy,
            &w.dsp[k],
            &w.prs_s[k],
            &w.growth[k],
            &w0.growth0,
        )?;
        // nodal diagnostics on the interface
        let mut h_f1 = Vec::with_capacity(disc.iface_vd.nodes.len());
        let mut f2_f = Vec::with_capacity(disc.iface_c.nodes.len());
        let mut f2_s = Vec::with_capacity(disc.iface_c.nodes.len());
        for node in disc.iface_vd.nodes.iter() {
            let x = node.coord;
            let (ef, es) = facet_elements_at(disc, x);
            let gu_f = vector_grad_at(&disc.vel, &u_f[k], ef, x);
            let finv_f = inv(&(identity + gu_f)).expect("valid fluid gradient");
            let gv = vector_grad_at(&disc.vel, &w.vel[k], ef, x);
            let pf = scalar_at(&disc.prs_f, &w.prs_f[k], ef, x);
            let ktf_v = ktilde_f_point(params.nu_f, gv, pf, finv_f);
            let gu_s = vector_grad_at(&disc.dsp, &w.dsp[k], es, x);
            let ps = scalar_at(&disc.prs_s, &w.prs_s[k], es, x);
            let dg = scalar_at(&disc.conc.solid, &g_minus_g0[k], es, x);
            let dg0 = scalar_at(&disc.conc.solid, &g0_minus_1, es, x);
            let kts_v = ktilde_s_point(params, energy, gu_s, ps, dg, dg0)?;
            let diff = kts_v - ktf_v;
            h_f1.push([diff[(0, 1)], diff[(1, 1)]]); // n = (0,1)
        }
        for node in &disc.iface_c.nodes {
            let x = node.coord;
            let (ef, es) = facet_elements_at(disc, x);
            // geometric flux corrections evaluated exactly at the node
            let ftilde = |space: &Space, c: &[f64], disp_space: &Space, disp: &[f64],
                          e: usize, dcoef: f64|
             -> [f64; 2] {
                let gu = vector_grad_at(disp_space, disp, e, x);
                let finv = inv(&(identity + gu)).expect("valid gradient");
                let geo = finv * finv.transpose() - identity;
                let gc = scalar_grad_at(space, c, e, x);
                [
                    dcoef * (geo[(0, 0)] * gc[0] + geo[(0, 1)] * gc[1]),
                    dcoef * (geo[(1, 0)] * gc[0] + geo[(1, 1)] * gc[1]),
                ]
            };
            let ft_f = ftilde(&disc.conc.fluid, &w.conc[k][..off], &disc.vel, &u_f[k], ef, params.d_f);
            let ft_s = ftilde(&disc.conc.solid, &w.conc[k][off..], &disc.dsp, &w.dsp[k], es, params.d_s);
            let gcs = scalar_grad_at(&disc.conc.solid, &w.conc[k][off..], es, x);
            // fluid-side flux datum: D_s grad c_s . n + [[Ftilde]] . n
            f2_f.push(params.d_s * gcs[1] + (ft_s[1] - ft_f[1]));
            let c_jump = w.conc[k][off + node.solid_dof] - w.conc[k][node.fluid_dof];
            f2_s.push(params.zeta * c_jump - ft_s[1]);
        }
        // outer-boundary flux datum
        let mut f3 = Vec::new();
        for node in disc.conc.solid.dofs_on(FacetTag::Outer) {
            let x = disc.conc.solid.dof_coords[node];
            let es = outer_element_at(disc, x);
            let gu = vector_grad_at(&disc.dsp, &w.dsp[k], es, x);
            let finv = inv(&(identity + gu)).expect("valid gradient");
            let geo = finv * finv.transpose() - identity;
            let gc = scalar_grad_at(&disc.conc.solid, &w.conc[k][off..], es, x);
            // n = (0,1) on the outer boundary
            f3.push(-params.d_s * (geo[(1, 0)] * gc[0] + geo[(1, 1)] * gc[1]));
        }
        // linearized ODE corrections at solid nodes
        let cs_nodal = &w.conc[k][off..];
        let f4: Vec<f64> = (0..disc.conc.solid.n_dofs)
            .map(|i| {
                -params.gamma * params.beta / params.rho_s
                    * cs_nodal[i]
                    * (w.cstar[k][i] - w0.cstar0[i])
            })
            .collect();
        let f5: Vec<f64> = (0..disc.conc.solid.n_dofs)
            .map(|i| {
                -params.gamma * params.beta / (DIM as f64 * params.rho_s)
                    * cs_nodal[i]
                    * (w.growth[k][i] - w0.growth0[i])
            })
            .collect();
        bundle.ktilde_f.push(ktilde_f);
        bundle.g_f.push(QuadField { values: gf });
        bundle.ktilde_s.push(ktilde_s);
        bundle.g_s.push(QuadField { values: gs });
        bundle.growth_integral.push(QuadField { values: gint });
        bundle.ftilde_f.push(QuadField { values: ftf });
        bundle.ftilde_s.push(QuadField { values: fts });
        bundle.reaction_s.push(QuadField { values: reac });
        bundle.h_s1.push(h_s1);
        bundle.solid_traction.push(solid_traction);
        bundle.h_f1.push(h_f1);
        bundle.f2_f.push(f2_f);
        bundle.f2_s.push(f2_s);
        bundle.f3.push(f3);
        bundle.f4.push(f4);
        bundle.f5.push(f5);
    }
    Ok(bundle)
}

fn facet_elements_at(disc: &Discretization, x: [f64; 2]) -> (usize, usize) {
    for &(fi, ef, es) in &disc.iface_vd.facets {
        let f = &disc.mesh.facets[fi];
        let x0 = disc.mesh.vertices[f.vertices[0]][0];
        let x1 = disc.mesh.vertices[f.vertices[1]][0];
        if x[0] >= x0.min(x1) - 1e-12 && x[0] <= x0.max(x1) + 1e-12 {
            return (ef, es);
        }
    }
    panic!("interface point {x:?} not on any interface facet");
}

fn outer_element_at(disc: &Discretization, x: [f64; 2]) -> usize {
    for (_, f) in disc.mesh.facets_of(FacetTag::Outer) {
        let x0 = disc.mesh.vertices[f.vertices[0]][0];
        let x1 = disc.mesh.vertices[f.vertices[1]][0];
        if x[0] >= x0.min(x1) - 1e-12 && x[0] <= x0.max(x1) + 1e-12 {
            return disc
                .conc
                .solid
                .elem_index(f.simplex)
                .expect("outer facet on solid");
        }
    }
    panic!("outer point {x:?} not on the outer boundary");
}

/// Scalar field value at an arbitrary point of element `e`.
fn scalar_at(space: &Space, coeffs: &[f64], e: usize, x: [f64; 2]) -> f64 {
    let xi = space.ref_coords(e, x);
    let basis = space.basis_at(xi);
    space.tables[e]
        .dofs
        .iter()
        .zip(&basis)
        .map(|(&d, &b)| coeffs[d] * b)
        .sum()
}

fn scalar_grad_at(space: &Space, coeffs: &[f64], e: usize, x: [f64; 2]) -> [f64; 2] {
    let xi = space.ref_coords(e, x);
    let grads = space.grads_at(e, xi);
    let mut g = [0.0; 2];
    for (l, &dl) in space.tables[e].dofs.iter().enumerate() {
        g[0] += coeffs[dl] * grads[l][0];
        g[1] += coeffs[dl] * grads[l][1];
    }
    g
}

fn vector_grad_at(space: &Space, coeffs: &[f64], e: usize, x: [f64; 2]) -> Mat2 {
    let xi = space.ref_coords(e, x);
    let grads = space.grads_at(e, xi);
    let mut g = [[0.0; 2]; 2];
    for (l, &dl) in space.tables[e].dofs.iter().enumerate() {
        for i in 0..2 {
            for c in 0..2 {
                g[i][c] += coeffs[2 * dl + c] * grads[l][i];
            }
        }
    }
    mat_from_grad(g)
}

/// a^d - b^d through the exact difference a - b (keeps the rest state
/// bit-exactly zero).
fn pow_diff(a: f64, b: f64, diff: f64, d: i32) -> f64 {
    let mut sum = 0.0;
    for j in 0..d {
        sum += a.powi(j) * b.powi(d - 1 - j);
    }
    diff * sum
}

/// The telescoped solid stress correction at one point: every summand
/// carries a factor that vanishes at the rest state (F = I, g = g0 = 1,
/// or DW(I) = 0), and together they close the identity
/// K_s + D2W(I) grad u - pi I = g^{d-1} DW(F/g) - g^d pi F^{-T}.
/// The growth factors enter through the exact differences g - g0 and
/// g0 - 1, so the rest state yields a bit-exact zero.
pub fn ktilde_s_point(
    params: &Params,
    energy: &EnergyDensity<2>,
    gu: Mat2,
    ps: f64,
    g_minus_g0: f64,
    g0_minus_1: f64,
) -> Result<Mat2, CouplingError> {
    let _ = params;
    let d = DIM as i32;
    let identity = Mat2::identity();
    let g0 = 1.0 + g0_minus_1;
    let g = g0 + g_minus_g0;
    let f = identity + gu;
    let finv = inv(&f).ok_or(KinematicsError::ValidityLoss {
        simplex: usize::MAX,
        norm: f64::INFINITY,
        bound: 0.5,
    })?;
    let finv_t = finv.transpose();
    let dw_f = energy.dw(&f)?;
    let dw_fg = if g == 1.0 {
        dw_f
    } else {
        energy.dw(&(f / g))?
    };
    let remainder = energy.remainder_r(&f)?;
    let gd = g.powi(d);
    let gd1 = g.powi(d - 1);
    Ok(-gd * ps * (finv_t - identity)
        - pow_diff(g, g0, g_minus_g0, d) * ps * identity
        - pow_diff(g0, 1.0, g0_minus_1, d) * ps * identity
        + dw_f * pow_diff(g, g0, g_minus_g0, d - 1)
        + dw_f * pow_diff(g0, 1.0, g0_minus_1, d - 1)
        + gd1 * (dw_fg - dw_f)
        + remainder)
}

/// The fluid stress correction at one point (geometry factors against the
/// current velocity gradient and pressure).
pub fn ktilde_f_point(nu_f: f64, gv: Mat2, pf: f64, finv: Mat2) -> Mat2 {
    let identity = Mat2::identity();
    let finv_t = finv.transpose();
    let a = finv_t - identity;
    -pf * a + nu_f * (finv * gv + gv.transpose() * finv_t) * a
        + nu_f * ((finv - identity) * gv + gv.transpose() * a)
}

/// Facet-quadrature covector of the solid's full linearized Piola traction
/// on the interface, assembled against fluid velocity test functions:
/// phi -> int_Gamma ((K_s + D2W(I) grad u_s - pi_s I) n) . phi.
/// All stress factors are evaluated exactly at the facet quadrature points.
pub fn interface_traction_covector(
    disc: &Discretization,
    params: &Params,
    energy: &EnergyDensity<2>,
    dsp: &[f64],
    prs_s: &[f64],
    growth: &[f64],
    growth0: &[f64],
) -> Result<Vec<f64>, CouplingError> {
    let mut cov = vec![0.0; 2 * disc.vel.n_dofs];
    let identity = Mat2::identity();
    let dg_field: Vec<f64> = growth.iter().zip(growth0).map(|(a, b)| a - b).collect();
    let dg0_field: Vec<f64> = growth0.iter().map(|v| v - 1.0).collect();
    for &(fi, ef, es) in &disc.iface_vd.facets {
        let facet = &disc.mesh.facets[fi];
        let p0 = disc.mesh.vertices[facet.vertices[0]];
        let p1 = disc.mesh.vertices[facet.vertices[1]];
        let n = facet.normal;
        for (x, w) in segment_rule(p0, p1, 4) {
            let gu = vector_grad_at(&disc.dsp, dsp, es, x);
            let ps = scalar_at(&disc.prs_s, prs_s, es, x);
            let dg = scalar_at(&disc.conc.solid, &dg_field, es, x);
            let dg0 = scalar_at(&disc.conc.solid, &dg0_field, es, x);
            let sigma = energy.d2w_i_apply(&gu) - ps * identity
                + ktilde_s_point(params, energy, gu, ps, dg, dg0)?;
            let tn = [
                sigma[(0, 0)] * n[0] + sigma[(0, 1)] * n[1],
                sigma[(1, 0)] * n[0] + sigma[(1, 1)] * n[1],
            ];
            // pair with fluid velocity test functions
            let xi_f = disc.vel.ref_coords(ef, x);
            let basis_f = disc.vel.basis_at(xi_f);
            for (a, &da) in disc.vel.tables[ef].dofs.iter().enumerate() {
                cov[2 * da] += w * basis_f[a] * tn[0];
                cov[2 * da + 1] += w * basis_f[a] * tn[1];
            }
        }
    }
    Ok(cov)
}

/// Raw (user-level) initial data before compatibility checking and the
/// nonlinear initial solid equilibrium.
pub struct RawInitial {
    pub vel0: Vec<f64>,
    pub conc0: Vec<f64>,
    pub cstar0: Vec<f64>,
    pub growth0: Vec<f64>,
    /// fluid pressure trace values per interface node of `iface_vd`
    pub pf0_trace: Vec<f64>,
    pub compat_tol: f64,
}

/// Checks the compatibility conditions of the initial data, then solves the
/// nonlinear stationary solid equilibrium (pure-traction problem with a
/// translation multiplier) by Newton iteration, and measures the initial
/// strain/pressure smallness.
pub fn prepare_initial(
    disc: &Discretization,
    params: &Params,
    energy: &EnergyDensity<2>,
    raw: &RawInitial,
) -> Result<InitialData, CouplingError> {
    let tol = raw.compat_tol;
    let off = disc.conc.solid_offset();
    let mut defects = Vec::new();
    // weak divergence of the initial velocity
    {
        let mut rhs = vec![0.0; disc.prs_f.n_dofs];
        for (e, t) in disc.prs_f.tables.iter().enumerate() {
            for (qp, &w) in t.qp_w.iter().enumerate() {
                let g = eval_vector_grad(&disc.vel, &raw.vel0, e, qp);
                let div = g[0][0] + g[1][1];
                for (l, &dl) in t.dofs.iter().enumerate() {
                    rhs[dl] += w * t.basis[qp][l] * div;
                }
            }
        }
        let mut mt = Vec::new();
        assemble::scalar_mass(&disc.prs_f, 1.0, &mut mt);
        let msys = LinearSystem::new(disc.prs_f.n_dofs, &mt, &[])?;
        let z = msys.solve(&rhs, |_| 0.0);
        let defect = z
            .iter()
            .zip(&rhs)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .max(0.0)
            .sqrt();
        defects.push(("div v0 = 0".to_string(), defect));
        if defect > tol {
            return Err(CouplingError::Compatibility {
                condition: "div v0 = 0".into(),
                defect,
                tol,
            });
        }
    }
    // vanishing interface velocity trace
    {
        let defect = disc
            .iface_vd
            .nodes
            .iter()
            .map(|n| {
                raw.vel0[2 * n.fluid_dof]
                    .abs()
                    .max(raw.vel0[2 * n.fluid_dof + 1].abs())
            })
            .fold(0.0, f64::max);
        defects.push(("v0 = 0 on the interface".to_string(), defect));
        if defect > tol {
            return Err(CouplingError::Compatibility {
                condition: "v0 = 0 on the interface".into(),
                defect,
                tol,
            });
        }
    }
    // concentration transmission conditions at t = 0
    {
        let mut jump_defect = 0.0_f64;
        let mut flux_defect = 0.0_f64;
        for &(fi, ef, es) in &disc.iface_c.facets {
            let facet = &disc.mesh.facets[fi];
            let p0 = disc.mesh.vertices[facet.vertices[0]];
            let p1 = disc.mesh.vertices[facet.vertices[1]];
            for (x, _) in segment_rule(p0, p1, 3) {
                let cf = scalar_at(&disc.conc.fluid, &raw.conc0[..off], ef, x);
                let cs = scalar_at(&disc.conc.solid, &raw.conc0[off..], es, x);
                let gf = scalar_grad_at(&disc.conc.fluid, &raw.conc0[..off], ef, x);
                let gs = scalar_grad_at(&disc.conc.solid, &raw.conc0[off..], es, x);
                // n = (0,1)
                jump_defect =
                    jump_defect.max((params.zeta * (cs - cf) - params.d_s * gs[1]).abs());
                flux_defect =
                    flux_defect.max((params.d_s * gs[1] - params.d_f * gf[1]).abs());
            }
        }
        defects.push(("zeta [[c0]] = D_s grad c0_s . n".to_string(), jump_defect));
        defects.push(("[[D grad c0]] . n = 0".to_string(), flux_defect));
        if jump_defect > tol {
            return Err(CouplingError::Compatibility {
                condition: "zeta [[c0]] = D_s grad c0_s . n".into(),
                defect: jump_defect,
                tol,
            });
        }
        if flux_defect > tol {
            return Err(CouplingError::Compatibility {
                condition: "[[D grad c0]] . n = 0".into(),
                defect: flux_defect,
                tol,
            });
        }
        let mut outer_defect = 0.0_f64;
        for (_, facet) in disc.mesh.facets_of(FacetTag::Outer) {
            let es = disc.conc.solid.elem_index(facet.simplex).unwrap();
            let p0 = disc.mesh.vertices[facet.vertices[0]];
            let p1 = disc.mesh.vertices[facet.vertices[1]];
            for (x, _) in segment_rule(p0, p1, 3) {
                let gs = scalar_grad_at(&disc.conc.solid, &raw.conc0[off..], es, x);
                outer_defect = outer_defect.max((params.d_s * gs[1]).abs());
            }
        }
        defects.push(("D_s grad c0_s . n = 0 on the outer boundary".to_string(), outer_defect));
        if outer_defect > tol {
            return Err(CouplingError::Compatibility {
                condition: "D_s grad c0_s . n = 0 on the outer boundary".into(),
                defect: outer_defect,
                tol,
            });
        }
    }
    // interface traction datum from the initial fluid state
    let pf0_field = {
        let mut field = vec![0.0; disc.conc.fluid.n_dofs];
        for (i, n) in disc.iface_vd.nodes.iter().enumerate() {
            field[n.fluid_dof] = raw.pf0_trace[i];
        }
        field
    };
    let traction0 = |x: [f64; 2], ef: usize| -> [f64; 2] {
        let pf = scalar_at(&disc.conc.fluid, &pf0_field, ef, x);
        let gv = vector_grad_at(&disc.vel, &raw.vel0, ef, x);
        let d = gv + gv.transpose();
        // n = (0,1)
        [
            params.nu_f * d[(0, 1)],
            -pf + params.nu_f * d[(1, 1)],
        ]
    };
    // Newton iteration on the pure-traction equilibrium with a translation
    // multiplier absorbing any net force of the (artifact-geometry) data
    let nd = 2 * disc.dsp.n_dofs;
    let np = disc.prs_s.n_dofs;
    let n = nd + np + 2;
    let mut u = vec![0.0; nd];
    let mut pi = vec![0.0; np];
    let mut lambda = [0.0; 2];
    let mut data_scale = 1.0_f64;
    for &(fi, ef, _) in &disc.iface_vd.facets {
        let facet = &disc.mesh.facets[fi];
        let p0 = disc.mesh.vertices[facet.vertices[0]];
        let p1 = disc.mesh.vertices[facet.vertices[1]];
        for (x, _) in segment_rule(p0, p1, 2) {
            let t = traction0(x, ef);
            data_scale = data_scale.max(t[0].abs()).max(t[1].abs());
        }
    }
    let newton_tol = 1e-12 * data_scale;
    let max_newton = 25;
    let mut converged = false;
    for it in 0..max_newton {
        // residual
        let mut res = vec![0.0; n];
        for (e, t) in disc.dsp.tables.iter().enumerate() {
            let tp = &disc.prs_s.tables[e];
            for (qp, &w) in t.qp_w.iter().enumerate() {
                let gu = mat_from_grad(eval_vector_grad(&disc.dsp, &u, e, qp));
                let f = Mat2::identity() + gu;
                let dw = energy.dw(&f)?;
                let pv = eval_scalar(&disc.prs_s, &pi, e, qp);
                let div_u = gu[(0, 0)] + gu[(1, 1)];
                for (a, &da) in t.dofs.iter().enumerate() {
                    let ga = &t.grad[qp][a];
                    let b = t.basis[qp][a];
                    for i in 0..2 {
                        res[2 * da + i] += w
                            * (dw[(i, 0)] * ga[0] + dw[(i, 1)] * ga[1] - pv * ga[i]
                                + lambda[i] * b);
                    }
                }
                for (l, &dl) in tp.dofs.iter().enumerate() {
                    res[nd + dl] -= w * tp.basis[qp][l] * div_u;
                }
                let uval = crate::fem::eval_vector(&disc.dsp, &u, e, qp);
                res[nd + np] += w * uval[0];
                res[nd + np + 1] += w * uval[1];
            }
        }
        for &(fi, ef, es) in &disc.iface_vd.facets {
            let facet = &disc.mesh.facets[fi];
            let p0 = disc.mesh.vertices[facet.vertices[0]];
            let p1 = disc.mesh.vertices[facet.vertices[1]];
            for (x, w) in segment_rule(p0, p1, 4) {
                let t0 = traction0(x, ef);
                let xi = disc.dsp.ref_coords(es, x);
                let basis = disc.dsp.basis_at(xi);
                for (a, &da) in disc.dsp.tables[es].dofs.iter().enumerate() {
                    res[2 * da] += w * basis[a] * t0[0];
                    res[2 * da + 1] += w * basis[a] * t0[1];
                }
            }
        }
        let rnorm = res.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if rnorm <= newton_tol {
            converged = true;
            break;
        }
        if !rnorm.is_finite() || it == max_newton - 1 {
            return Err(CouplingError::NewtonDivergence {
                iterations: it,
                residual: rnorm,
            });
        }
        // Jacobian
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        for (e, t) in disc.dsp.tables.iter().enumerate() {
            let tp = &disc.prs_s.tables[e];
            for (qp, &w) in t.qp_w.iter().enumerate() {
                let gu = mat_from_grad(eval_vector_grad(&disc.dsp, &u, e, qp));
                let f = Mat2::identity() + gu;
                for (b, &db) in t.dofs.iter().enumerate() {
                    let gb = &t.grad[qp][b];
                    for j in 0..2 {
                        let mut gmat = Mat2::zeros();
                        gmat[(0, j)] = gb[0];
                        gmat[(1, j)] = gb[1];
                        let m = energy.d2w_apply(&f, &gmat);
                        for (a, &da) in t.dofs.iter().enumerate() {
                            let ga = &t.grad[qp][a];
                            for i in 0..2 {
                                triplets.push((
                                    2 * da + i,
                                    2 * db + j,
                                    w * (m[(i, 0)] * ga[0] + m[(i, 1)] * ga[1]),
                                ));
                            }
                        }
                    }
                }
                for (a, &da) in t.dofs.iter().enumerate() {
                    let ga = &t.grad[qp][a];
                    for (l, &dl) in tp.dofs.iter().enumerate() {
                        let psi = tp.basis[qp][l];
                        for i in 0..2 {
                            triplets.push((2 * da + i, nd + dl, -w * psi * ga[i]));
                            triplets.push((nd + dl, 2 * da + i, -w * psi * ga[i]));
                        }
                    }
                    let b = t.basis[qp][a];
                    for i in 0..2 {
                        triplets.push((2 * da + i, nd + np + i, w * b));
                        triplets.push((nd + np + i, 2 * da + i, w * b));
                    }
                }
            }
        }
        let sys = LinearSystem::new(n, &triplets, &[])?;
        let neg_res: Vec<f64> = res.iter().map(|v| -v).collect();
        let delta = sys.solve(&neg_res, |_| 0.0);
        for i in 0..nd {
            u[i] += delta[i];
        }
        for l in 0..np {
            pi[l] += delta[nd + l];
        }
        lambda[0] += delta[nd + np];
        lambda[1] += delta[nd + np + 1];
    }
    if !converged {
        return Err(CouplingError::NewtonDivergence {
            iterations: max_newton,
            residual: f64::NAN,
        });
    }
    // measured smallness: fractional Sobolev surrogate of the initial
    // strain and pressure
    let s_frac = 1.0 - 2.0 / params.q;
    let on_u = FieldOn::Vector(&disc.dsp);
    let on_p = FieldOn::Scalar(&disc.prs_s);
    let smallness = on_u.lq_of_derivative(&u, params.q, 1)
        + on_u.slobodeckij_of_derivative(&u, s_frac, params.q, 1)?
        + on_p.lq_of_derivative(&pi, params.q, 0)
        + on_p.slobodeckij_of_derivative(&pi, s_frac, params.q, 0)?;
    Ok(InitialData {
        vel0: raw.vel0.clone(),
        conc0: raw.conc0.clone(),
        cstar0: raw.cstar0.clone(),
        growth0: raw.growth0.clone(),
        dsp0: u,
        prs_s0: pi,
        pf0_trace: raw.pf0_trace.clone(),
        kappa: params.kappa,
        smallness,
        equilibration_force: lambda,
        compatibility_defects: defects,
    })
}

/// The three factored linear solvers of one window (constant matrices).
pub struct CoupledSolvers<'a> {
    pub fluid: FluidSolver<'a>,
    pub solid: SolidSolver<'a>,
    pub cells: CellsSolver<'a>,
}

impl<'a> CoupledSolvers<'a> {
    pub fn new(
        disc: &'a Discretization,
        params: &Params,
        energy: &EnergyDensity<2>,
        dt: f64,
    ) -> Result<Self, CouplingError> {
        Ok(Self {
            fluid: FluidSolver::new(&disc.vel, &disc.prs_f, params.rho_f, params.nu_f, dt)?,
            solid: SolidSolver::new(&disc.dsp, &disc.prs_s, energy)?,
            cells: CellsSolver::new(
                &disc.conc,
                &disc.iface_c,
                params.d_f,
                params.d_s,
                params.zeta,
                dt,
            )?,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PicardConfig {
    pub t_final: f64,
    pub n_steps: usize,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub iteration: usize,
    pub delta: f64,
    pub contraction: Option<f64>,
    /// per-component surrogate norms of the difference:
    /// [vel, dsp, prs_f, prs_s, conc, cstar, growth]
    pub component_deltas: [f64; 7],
}

#[derive(Debug, Clone)]
pub struct ContractionReport {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub final_delta: f64,
}

impl ContractionReport {
    pub fn max_contraction(&self) -> f64 {
        self.records
            .iter()
            .filter_map(|r| r.contraction)
            .fold(0.0, f64::max)
    }
}

/// Builds the start state: trajectories frozen at the initial data (the
/// rest-like state whose data terms vanish when the initial data do).
pub fn start_state(disc: &Discretization, w0: &InitialData, cfg: &PicardConfig) -> StateW {
    let n = cfg.n_steps;
    let dt = cfg.t_final / n as f64;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
    StateW {
        times,
        vel: vec![w0.vel0.clone(); n + 1],
        prs_f: vec![vec![0.0; disc.prs_f.n_dofs]; n + 1],
        dsp: vec![w0.dsp0.clone(); n + 1],
        prs_s: vec![w0.prs_s0.clone(); n + 1],
        conc: vec![w0.conc0.clone(); n + 1],
        cstar: vec![w0.cstar0.clone(); n + 1],
        growth: vec![w0.growth0.clone(); n + 1],
        gamma_traction: vec![vec![0.0; 2 * disc.vel.n_dofs]; n + 1],
    }
}

/// One sweep of the iteration map: solves the decoupled linear systems over
/// the whole window with all lower-order data frozen at `w`, in the order
/// fluid -> solid -> transmission -> growth ODEs.
pub fn picard_sweep(
    disc: &Discretization,
    params: &Params,
    energy: &EnergyDensity<2>,
    solvers: &CoupledSolvers,
    w: &StateW,
    w0: &InitialData,
) -> Result<StateW, CouplingError> {
    let n = w.n_steps();
    let bundle = assemble_rhs(disc, params, energy, w, w0)?;
    let mut new = StateW {
        times: w.times.clone(),
        vel: Vec::with_capacity(n + 1),
        prs_f: Vec::with_capacity(n + 1),
        dsp: Vec::with_capacity(n + 1),
        prs_s: Vec::with_capacity(n + 1),
        conc: Vec::with_capacity(n + 1),
        cstar: Vec::with_capacity(n + 1),
        growth: Vec::with_capacity(n + 1),
        gamma_traction: bundle.solid_traction.clone(),
    };
    new.vel.push(w0.vel0.clone());
    new.prs_f.push(w.prs_f[0].clone());
    new.dsp.push(w0.dsp0.clone());
    new.prs_s.push(w0.prs_s0.clone());
    new.conc.push(w0.conc0.clone());
    new.cstar.push(w0.cstar0.clone());
    new.growth.push(w0.growth0.clone());
    // fluid sweep
    for m in 1..=n {
        let mut momentum = assemble::divergence_form(&disc.vel, &bundle.ktilde_f[m]);
        for (r, t) in momentum.iter_mut().zip(&bundle.solid_traction[m]) {
            *r += t;
        }
        let continuity = assemble::continuity_data(&disc.prs_f, |e, qp, _| {
            bundle.g_f[m].values[e][qp]
        });
        let (v, pf) = solvers.fluid.solve_step(&new.vel[m - 1], &momentum, &continuity);
        new.vel.push(v);
        new.prs_f.push(pf);
    }
    // interface displacement data from the new fluid velocity
    let iface_disp: Vec<Vec<[f64; 2]>> = {
        let nn = disc.iface_vd.nodes.len();
        let mut vals = vec![vec![[0.0; 2]; nn]; n + 1];
        for m in 1..=n {
            let h = w.times[m] - w.times[m - 1];
            for (i, node) in disc.iface_vd.nodes.iter().enumerate() {
                let vp = [
                    new.vel[m - 1][2 * node.fluid_dof],
                    new.vel[m - 1][2 * node.fluid_dof + 1],
                ];
                let vn = [
                    new.vel[m][2 * node.fluid_dof],
                    new.vel[m][2 * node.fluid_dof + 1],
                ];
                vals[m][i] = [
                    vals[m - 1][i][0] + h * (vp[0] + vn[0]) / 2.0,
                    vals[m - 1][i][1] + h * (vp[1] + vn[1]) / 2.0,
                ];
            }
        }
        vals
    };
    // the window may start from a nonzero equilibrium displacement
    let dsp0_trace: Vec<[f64; 2]> = disc
        .iface_vd
        .nodes
        .iter()
        .map(|node| {
            [
                w0.dsp0[2 * node.solid_dof],
                w0.dsp0[2 * node.solid_dof + 1],
            ]
        })
        .collect();
    // solid sweep
    for m in 1..=n {
        let momentum = assemble::divergence_form(&disc.dsp, &bundle.ktilde_s[m]);
        let continuity = assemble::continuity_data(&disc.prs_s, |e, qp, _| {
            bundle.g_s[m].values[e][qp] + bundle.growth_integral[m].values[e][qp]
        });
        let mut dirichlet = vec![0.0; 2 * disc.dsp.n_dofs];
        for (i, node) in disc.iface_vd.nodes.iter().enumerate() {
            dirichlet[2 * node.solid_dof] = dsp0_trace[i][0] + iface_disp[m][i][0];
            dirichlet[2 * node.solid_dof + 1] = dsp0_trace[i][1] + iface_disp[m][i][1];
        }
        let sol = solvers
            .solid
            .solve_quasistationary(&momentum, &continuity, |d| dirichlet[d]);
        new.dsp.push(sol.dsp);
        new.prs_s.push(sol.prs);
    }
    // transmission sweep
    let off = disc.conc.solid_offset();
    for m in 1..=n {
        let mut extra = solvers
            .cells
            .divergence_form_rhs(&bundle.ftilde_f[m], &bundle.ftilde_s[m]);
        let reac = solvers
            .cells
            .solid_source_rhs(|e, qp, _| bundle.reaction_s[m].values[e][qp]);
        for (r, v) in extra.iter_mut().zip(&reac) {
            *r += v;
        }
        let c = solvers.cells.step(&new.conc[m - 1], &extra)?;
        new.conc.push(c);
    }
    // growth ODEs with the new macrophage level
    for m in 1..=n {
        let dt = w.times[m] - w.times[m - 1];
        let (cstar, growth) = cells::step_odes(
            params.ode(),
            &new.conc[m][off..],
            &new.cstar[m - 1],
            &new.growth[m - 1],
            dt,
        )?;
        new.cstar.push(cstar);
        new.growth.push(growth);
    }
    Ok(new)
}

/// Anisotropic surrogate norms of the component-wise difference of two
/// iterates: [vel, dsp, prs_f, prs_s, conc, cstar, growth].
pub fn state_difference(
    disc: &Discretization,
    q: f64,
    a: &StateW,
    b: &StateW,
) -> Result<[f64; 7], CouplingError> {
    let diff_traj = |xa: &Vec<Vec<f64>>, xb: &Vec<Vec<f64>>| -> Trajectory {
        let snaps: Vec<Vec<f64>> = xa
            .iter()
            .zip(xb)
            .map(|(u, v)| u.iter().zip(v).map(|(x, y)| x - y).collect())
            .collect();
        Trajectory::new(a.times.clone(), snaps).expect("shared grid")
    };
    let spec = |s: f64, r: f64| NormSpec::new(s, q, r, NormKind::Anisotropic).unwrap();
    Ok([
        trajectory_norm(
            FieldOn::Vector(&disc.vel),
            &diff_traj(&a.vel, &b.vel),
            &spec(2.0, 1.0),
        )?,
        trajectory_norm(
            FieldOn::Vector(&disc.dsp),
            &diff_traj(&a.dsp, &b.dsp),
            &spec(2.0, 0.5),
        )?,
        trajectory_norm(
            FieldOn::Scalar(&disc.prs_f),
            &diff_traj(&a.prs_f, &b.prs_f),
            &spec(1.0, 0.0),
        )?,
        trajectory_norm(
            FieldOn::Scalar(&disc.prs_s),
            &diff_traj(&a.prs_s, &b.prs_s),
            &spec(1.0, 0.5),
        )?,
        trajectory_norm(
            FieldOn::Broken(&disc.conc),
            &diff_traj(&a.conc, &b.conc),
            &spec(2.0, 1.0),
        )?,
        trajectory_norm(
            FieldOn::Scalar(&disc.conc.solid),
            &diff_traj(&a.cstar, &b.cstar),
            &spec(1.0, 1.0),
        )?,
        trajectory_norm(
            FieldOn::Scalar(&disc.conc.solid),
            &diff_traj(&a.growth, &b.growth),
            &spec(1.0, 1.0),
        )?,
    ])
}

/// The global-in-time fixed-point iteration. Returns the last iterate and
/// the contraction report; `converged = false` means no contraction was
/// reached within the iteration budget at this window length.
pub fn picard_solve(
    disc: &Discretization,
    params: &Params,
    energy: &EnergyDensity<2>,
    solvers: &CoupledSolvers,
    w0: &InitialData,
    cfg: &PicardConfig,
) -> Result<(StateW, ContractionReport), CouplingError> {
    let mut w = start_state(disc, w0, cfg);
    let mut records = Vec::new();
    let mut prev_delta: Option<f64> = None;
    for it in 1..=cfg.max_iter {
        let new = picard_sweep(disc, params, energy, solvers, &w, w0)?;
        let comp = state_difference(disc, params.q, &new, &w)?;
        let delta = comp.iter().cloned().fold(0.0, f64::max);
        let contraction = prev_delta.map(|p| if p > 0.0 { delta / p } else { 0.0 });
        records.push(IterationRecord {
            iteration: it,
            delta,
            contraction,
            component_deltas: comp,
        });
        w = new;
        if delta < cfg.tol {
            return Ok((
                w,
                ContractionReport {
                    records,
                    converged: true,
                    final_delta: delta,
                },
            ));
        }
        prev_delta = Some(delta);
    }
    let final_delta = records.last().map(|r| r.delta).unwrap_or(0.0);
    Ok((
        w,
        ContractionReport {
            records,
            converged: false,
            final_delta,
        },
    ))
}

/// Scheme-consistent residuals of the original nonlinear system evaluated
/// at an iterate: every datum is re-assembled from the iterate itself and
/// compared against what the last sweep actually used, so a converged
/// fixed point drives all entries to the stopping tolerance. The interface
/// velocity entry carries its own first-order-in-dt scale.
#[derive(Debug, Clone, Copy)]
pub struct ResidualReport {
    pub fluid_momentum: f64,
    pub fluid_mass: f64,
    pub solid_momentum: f64,
    pub solid_mass: f64,
    pub traction_balance: f64,
    pub cells: f64,
    pub ode_cstar: f64,
    pub ode_growth: f64,
    pub interface_velocity: f64,
}

impl ResidualReport {
    /// Largest residual excluding the interface-velocity entry (which is
    /// bounded by the time step, not the iteration tolerance).
    pub fn max_lag(&self) -> f64 {
        [
            self.fluid_momentum,
            self.fluid_mass,
            self.solid_momentum,
            self.solid_mass,
            self.traction_balance,
            self.cells,
            self.ode_cstar,
            self.ode_growth,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn converged_residuals(
    disc: &Discretization,
    params: &Params,
    energy: &EnergyDensity<2>,
    solvers: &CoupledSolvers,
    w: &StateW,
    w0: &InitialData,
) -> Result<ResidualReport, CouplingError> {
    let n = w.n_steps();
    let bundle = assemble_rhs(disc, params, energy, w, w0)?;
    // mass systems for Riesz lifts
    let lift = |sys: &LinearSystem, r: &[f64]| -> f64 {
        let z = sys.solve(r, |_| 0.0);
        z.iter().zip(r).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
    };
    let vel_mass = {
        let mut t = Vec::new();
        assemble::vector_mass(&disc.vel, 1.0, &mut t);
        LinearSystem::new(2 * disc.vel.n_dofs, &t, &[])?
    };
    let prsf_mass = {
        let mut t = Vec::new();
        assemble::scalar_mass(&disc.prs_f, 1.0, &mut t);
        LinearSystem::new(disc.prs_f.n_dofs, &t, &[])?
    };
    let dsp_mass = {
        let mut t = Vec::new();
        assemble::vector_mass(&disc.dsp, 1.0, &mut t);
        LinearSystem::new(2 * disc.dsp.n_dofs, &t, &[])?
    };
    let prss_mass = {
        let mut t = Vec::new();
        assemble::scalar_mass(&disc.prs_s, 1.0, &mut t);
        LinearSystem::new(disc.prs_s.n_dofs, &t, &[])?
    };
    let conc_mass = {
        let off = disc.conc.solid_offset();
        let mut t = Vec::new();
        assemble::scalar_mass(&disc.conc.fluid, 1.0, &mut t);
        let mut ts = Vec::new();
        assemble::scalar_mass(&disc.conc.solid, 1.0, &mut ts);
        t.extend(ts.iter().map(|&(r, c, v)| (r + off, c + off, v)));
        LinearSystem::new(disc.conc.n_dofs(), &t, &[])?
    };
    let n_vel = 2 * disc.vel.n_dofs;
    let n_dsp = 2 * disc.dsp.n_dofs;
    let mut report = ResidualReport {
        fluid_momentum: 0.0,
        fluid_mass: 0.0,
        solid_momentum: 0.0,
        solid_mass: 0.0,
        traction_balance: 0.0,
        cells: 0.0,
        ode_cstar: 0.0,
        ode_growth: 0.0,
        interface_velocity: 0.0,
    };
    let wall = solvers.fluid.wall_dofs().to_vec();
    let gamma_dofs: Vec<usize> = solvers.solid.gamma_dofs.clone();
    let off = disc.conc.solid_offset();
    for m in 1..=n {
        // fluid rows against re-assembled data
        let mut momentum = assemble::divergence_form(&disc.vel, &bundle.ktilde_f[m]);
        for (r, t) in momentum.iter_mut().zip(&bundle.solid_traction[m]) {
            *r += t;
        }
        let continuity =
            assemble::continuity_data(&disc.prs_f, |e, qp, _| bundle.g_f[m].values[e][qp]);
        let mut r = solvers.fluid.residual_rows(
            &w.vel[m],
            &w.prs_f[m],
            &w.vel[m - 1],
            &momentum,
            &continuity,
        );
        for &d in &wall {
            r[d] = 0.0;
        }
        report.fluid_momentum = report
            .fluid_momentum
            .max(lift(&vel_mass, &r[..n_vel]));
        report.fluid_mass = report.fluid_mass.max(lift(&prsf_mass, &r[n_vel..]));
        // traction lag on the interface
        let tr_diff: Vec<f64> = bundle.solid_traction[m]
            .iter()
            .zip(&w.gamma_traction[m])
            .map(|(a, b)| a - b)
            .collect();
        let lifted = assemble::lift_interface_covector(
            &disc.vel,
            &disc.iface_vd,
            assemble::InterfaceSide::Fluid,
            &tr_diff,
        )?;
        let tmax = lifted
            .iter()
            .map(|t| (t[0] * t[0] + t[1] * t[1]).sqrt())
            .fold(0.0, f64::max);
        report.traction_balance = report.traction_balance.max(tmax);
        // solid rows
        let momentum_s = assemble::divergence_form(&disc.dsp, &bundle.ktilde_s[m]);
        let continuity_s = assemble::continuity_data(&disc.prs_s, |e, qp, _| {
            bundle.g_s[m].values[e][qp] + bundle.growth_integral[m].values[e][qp]
        });
        let mut rs =
            solvers
                .solid
                .residual_rows(&w.dsp[m], &w.prs_s[m], &momentum_s, &continuity_s);
        for &d in &gamma_dofs {
            rs[d] = 0.0;
        }
        report.solid_momentum = report
            .solid_momentum
            .max(lift(&dsp_mass, &rs[..n_dsp]));
        report.solid_mass = report.solid_mass.max(lift(&prss_mass, &rs[n_dsp..]));
        // transmission rows
        let mut extra = solvers
            .cells
            .divergence_form_rhs(&bundle.ftilde_f[m], &bundle.ftilde_s[m]);
        let reac = solvers
            .cells
            .solid_source_rhs(|e, qp, _| bundle.reaction_s[m].values[e][qp]);
        for (r, v) in extra.iter_mut().zip(&reac) {
            *r += v;
        }
        let rc = solvers.cells.residual_rows(&w.conc[m], &w.conc[m - 1], &extra);
        report.cells = report.cells.max(lift(&conc_mass, &rc));
        // pointwise ODE identities
        let dt = w.times[m] - w.times[m - 1];
        for i in 0..disc.conc.solid.n_dofs {
            let cs = w.conc[m][off + i];
            let rc = (w.cstar[m][i] - w.cstar[m - 1][i]) / dt
                - params.beta * cs * (1.0 - params.gamma * w.cstar[m][i] / params.rho_s);
            report.ode_cstar = report.ode_cstar.max(rc.abs());
            let rg = (w.growth[m][i] - w.growth[m - 1][i]) / dt
                - params.gamma * params.beta / (DIM as f64 * params.rho_s)
                    * cs
                    * w.growth[m][i];
            report.ode_growth = report.ode_growth.max(rg.abs());
        }
        // interface velocity continuity: v_f trace vs backward difference of
        // the solid displacement trace, in L2 on the interface
        let mut acc = 0.0;
        for &(fi, ef, es) in &disc.iface_vd.facets {
            let facet = &disc.mesh.facets[fi];
            let p0 = disc.mesh.vertices[facet.vertices[0]];
            let p1 = disc.mesh.vertices[facet.vertices[1]];
            for (x, wq) in segment_rule(p0, p1, 3) {
                let xi_f = disc.vel.ref_coords(ef, x);
                let basis_f = disc.vel.basis_at(xi_f);
                let mut v = [0.0; 2];
                for (l, &dl) in disc.vel.tables[ef].dofs.iter().enumerate() {
                    v[0] += w.vel[m][2 * dl] * basis_f[l];
                    v[1] += w.vel[m][2 * dl + 1] * basis_f[l];
                }
                let xi_s = disc.dsp.ref_coords(es, x);
                let basis_s = disc.dsp.basis_at(xi_s);
                let mut du = [0.0; 2];
                for (l, &dl) in disc.dsp.tables[es].dofs.iter().enumerate() {
                    du[0] += (w.dsp[m][2 * dl] - w.dsp[m - 1][2 * dl]) / dt * basis_s[l];
                    du[1] +=
                        (w.dsp[m][2 * dl + 1] - w.dsp[m - 1][2 * dl + 1]) / dt * basis_s[l];
                }
                acc += wq * ((v[0] - du[0]).powi(2) + (v[1] - du[1]).powi(2));
            }
        }
        report.interface_velocity = report.interface_velocity.max(acc.sqrt());
    }
    Ok(report)
}
