//! Two-domain concentration transport with the interface permeability
//! condition, plus the pointwise foam-cell and growth-metric ODEs.
//!
//! One implicit-Euler system couples both subdomains of the broken P2 space
//! through the interface integral zeta [[c]] [[phi]]; flux continuity and
//! the Robin-type permeability law are then natural conditions of the weak
//! form, and the geometric corrections of the linearization enter as lagged
//! divergence-form data. Testing against phi = 1 on both sides shows the
//! scheme conserves total mass exactly whenever reactions and sources are
//! off, and each subdomain's mass separately when zeta = 0.

use crate::assemble;
use crate::fem::{BrokenSpace, InterfaceMap, QuadField};
use crate::linsolve::{CsrMatrix, LinearSystem, SolveError};
use crate::norms::Trajectory;
use crate::quadrature::segment_rule;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CellsError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("nonfinite source data fed to the transmission step")]
    NonFiniteData,
    #[error("growth metric dropped below 1/2 at node {node}: g = {value}")]
    GrowthBound { node: usize, value: f64 },
    #[error("growth update unstable: dt * reaction = {0} >= 1")]
    StepTooLarge(f64),
}

pub struct CellsSolver<'a> {
    pub space: &'a BrokenSpace,
    pub imap: &'a InterfaceMap,
    pub d_f: f64,
    pub d_s: f64,
    pub zeta: f64,
    pub dt: f64,
    pub n: usize,
    sys: LinearSystem,
    mass: CsrMatrix,
}

impl<'a> CellsSolver<'a> {
    pub fn new(
        space: &'a BrokenSpace,
        imap: &'a InterfaceMap,
        d_f: f64,
        d_s: f64,
        zeta: f64,
        dt: f64,
    ) -> Result<Self, CellsError> {
        let off = space.solid_offset();
        let n = space.n_dofs();
        let mut triplets = Vec::new();
        let mut fluid_block = Vec::new();
        assemble::scalar_mass(&space.fluid, 1.0 / dt, &mut fluid_block);
        assemble::scalar_stiffness(&space.fluid, d_f, &mut fluid_block);
        triplets.extend(fluid_block.iter().copied());
        let mut solid_block = Vec::new();
        assemble::scalar_mass(&space.solid, 1.0 / dt, &mut solid_block);
        assemble::scalar_stiffness(&space.solid, d_s, &mut solid_block);
        triplets.extend(
            solid_block
                .iter()
                .map(|&(r, c, v)| (r + off, c + off, v)),
        );
        // interface penalty zeta [[c]][[phi]], [[.]] = solid - fluid
        if zeta != 0.0 {
            let mesh = &space.fluid.mesh;
            for &(fi, ef, es) in &imap.facets {
                let facet = &mesh.facets[fi];
                let p0 = mesh.vertices[facet.vertices[0]];
                let p1 = mesh.vertices[facet.vertices[1]];
                for (x, w) in segment_rule(p0, p1, 4) {
                    let xif = space.fluid.ref_coords(ef, x);
                    let xis = space.solid.ref_coords(es, x);
                    let bf = space.fluid.basis_at(xif);
                    let bs = space.solid.basis_at(xis);
                    let df = &space.fluid.tables[ef].dofs;
                    let ds = &space.solid.tables[es].dofs;
                    // combined local jump vector: -phi_f then +phi_s
                    let mut dofs = Vec::with_capacity(12);
                    let mut vals = Vec::with_capacity(12);
                    for (a, &da) in df.iter().enumerate() {
                        dofs.push(da);
                        vals.push(-bf[a]);
                    }
                    for (a, &da) in ds.iter().enumerate() {
                        dofs.push(da + off);
                        vals.push(bs[a]);
                    }
                    for (i, &di) in dofs.iter().enumerate() {
                        for (j, &dj) in dofs.iter().enumerate() {
                            triplets.push((di, dj, zeta * w * vals[i] * vals[j]));
                        }
                    }
                }
            }
        }
        let sys = LinearSystem::new(n, &triplets, &[])?;
        let mut mass_triplets = Vec::new();
        assemble::scalar_mass(&space.fluid, 1.0, &mut mass_triplets);
        let mut ms = Vec::new();
        assemble::scalar_mass(&space.solid, 1.0, &mut ms);
        mass_triplets.extend(ms.iter().map(|&(r, c, v)| (r + off, c + off, v)));
        let mass = CsrMatrix::from_triplets(n, n, &mass_triplets);
        Ok(Self {
            space,
            imap,
            d_f,
            d_s,
            zeta,
            dt,
            n,
            sys,
            mass,
        })
    }

    /// One implicit-Euler transmission step. `extra` is the assembled
    /// covector of all lagged data (divergence-form corrections, reaction
    /// and growth-gradient terms, volume sources).
    pub fn step(&self, prev: &[f64], extra: &[f64]) -> Result<Vec<f64>, CellsError> {
        if extra.iter().any(|v| !v.is_finite()) {
            return Err(CellsError::NonFiniteData);
        }
        let mut rhs = self.mass.matvec(prev);
        for (r, e) in rhs.iter_mut().zip(extra) {
            *r = *r / self.dt + e;
        }
        Ok(self.sys.solve(&rhs, |_| 0.0))
    }

    /// Full residual A c_new - (M/dt c_prev + extra) of a transmission step.
    pub fn residual_rows(&self, c_new: &[f64], c_prev: &[f64], extra: &[f64]) -> Vec<f64> {
        let mut rhs = self.mass.matvec(c_prev);
        for (r, e) in rhs.iter_mut().zip(extra) {
            *r = *r / self.dt + e;
        }
        self.sys.reaction(c_new, &rhs)
    }

    /// Divergence-form covector for the geometric flux corrections
    /// (vector data at quadrature points of each side).
    pub fn divergence_form_rhs(
        &self,
        ftilde_f: &QuadField<[f64; 2]>,
        ftilde_s: &QuadField<[f64; 2]>,
    ) -> Vec<f64> {
        let mut rhs = assemble::scalar_divergence_form(&self.space.fluid, ftilde_f);
        rhs.extend(assemble::scalar_divergence_form(&self.space.solid, ftilde_s));
        rhs
    }

    /// Volume source covector on the solid side only.
    pub fn solid_source_rhs(&self, f: impl Fn(usize, usize, [f64; 2]) -> f64) -> Vec<f64> {
        let mut rhs = vec![0.0; self.space.fluid.n_dofs];
        rhs.extend(assemble::scalar_source(&self.space.solid, f));
        rhs
    }

    /// Volume source covector on the fluid side only.
    pub fn fluid_source_rhs(&self, f: impl Fn(usize, usize, [f64; 2]) -> f64) -> Vec<f64> {
        let mut rhs = assemble::scalar_source(&self.space.fluid, f);
        rhs.extend(vec![0.0; self.space.solid.n_dofs]);
        rhs
    }

    /// Masses per subdomain (integral of c over the fluid/solid side).
    pub fn subdomain_masses(&self, c: &[f64]) -> (f64, f64) {
        let mc = self.mass.matvec(c);
        let off = self.space.solid_offset();
        (mc[..off].iter().sum(), mc[off..].iter().sum())
    }

    /// Max interface jump |c_s - c_f| over interface nodes.
    pub fn interface_jump_max(&self, c: &[f64]) -> f64 {
        let off = self.space.solid_offset();
        self.imap
            .nodes
            .iter()
            .map(|n| (c[off + n.solid_dof] - c[n.fluid_dof]).abs())
            .fold(0.0, f64::max)
    }
}

/// Reaction/growth coefficients for the pointwise node updates.
#[derive(Debug, Clone, Copy)]
pub struct OdeParams {
    pub beta: f64,
    pub gamma: f64,
    pub rho_s: f64,
    pub dim: usize,
}

/// Implicit-Euler update of the foam-cell and growth ODEs at every solid
/// node, driven by the macrophage concentration at the new time level:
/// dc*/dt = beta c (1 - gamma c*/rho), dg/dt = gamma beta c g / (d rho).
pub fn step_odes(
    p: OdeParams,
    c_s: &[f64],
    cstar: &[f64],
    g: &[f64],
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>), CellsError> {
    let mut cstar_new = Vec::with_capacity(cstar.len());
    let mut g_new = Vec::with_capacity(g.len());
    for i in 0..cstar.len() {
        let c = c_s[i];
        cstar_new.push((cstar[i] + dt * p.beta * c) / (1.0 + dt * p.gamma * p.beta / p.rho_s * c));
        let growth = dt * p.gamma * p.beta / (p.dim as f64 * p.rho_s) * c;
        if growth >= 1.0 {
            return Err(CellsError::StepTooLarge(growth));
        }
        let gn = g[i] / (1.0 - growth);
        if gn < 0.5 {
            return Err(CellsError::GrowthBound { node: i, value: gn });
        }
        g_new.push(gn);
    }
    Ok((cstar_new, g_new))
}

/// Global minimum over a trajectory with its dof and time indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivityReport {
    pub min: f64,
    pub dof: usize,
    pub step: usize,
    pub time: f64,
}

pub fn positivity_report(traj: &Trajectory) -> PositivityReport {
    let mut report = PositivityReport {
        min: f64::INFINITY,
        dof: 0,
        step: 0,
        time: 0.0,
    };
    for (k, snap) in traj.snapshots.iter().enumerate() {
        for (d, &v) in snap.iter().enumerate() {
            if v < report.min {
                report = PositivityReport {
                    min: v,
                    dof: d,
                    step: k,
                    time: traj.times[k],
                };
            }
        }
    }
    report
}
