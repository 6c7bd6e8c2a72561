//! Hyperelastic strain-energy density and its derivatives.
//!
//! The default (and only) energy is the squared Green strain
//! `W(F) = (mu/4) |F^T F - I|^2`: frame-indifferent, smooth on all of
//! R^{dxd}, zero with vanishing first derivative on rotations, and locally
//! coercive around SO(d). Its second derivative at the identity acts as
//! `A -> 2 mu sym A`, so the measured ellipticity constant is `2 mu`.

use nalgebra::{DMatrix, SVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::quadrature::gauss_legendre_unit;
use crate::smallmat::det;
pub use crate::smallmat::Mat;

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("deformation gradient outside the admissible region (det F = {0} <= 0)")]
    Inadmissible(f64),
    #[error("the quadrature segment (1-s)I + sF leaves the admissible region at s = {0}")]
    InadmissibleSegment(f64),
    #[error("assumption check needs at least 100 samples, got {0}")]
    TooFewSamples(usize),
    #[error("unknown energy kind `{0}` (supported: green)")]
    UnknownKind(String),
}

/// Selects the strain-energy density; config key `material.kind`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyKind {
    /// Squared Green strain, `(mu/4) |F^T F - I|^2`.
    Green,
}

impl std::str::FromStr for EnergyKind {
    type Err = MaterialError;
    fn from_str(s: &str) -> Result<Self, MaterialError> {
        match s {
            "green" => Ok(EnergyKind::Green),
            other => Err(MaterialError::UnknownKind(other.into())),
        }
    }
}

/// Energy density with evaluators for W, DW, D^2 W, and the cubic remainder
/// of the linearization at the identity. Immutable and freely shareable.
#[derive(Debug, Clone, Copy)]
pub struct EnergyDensity<const D: usize> {
    pub mu: f64,
    pub kind: EnergyKind,
}

/// Measured properties of the energy density on a sampling region.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    /// max |W(QF) - W(F)| over sampled rotations and strains
    pub frame_indifference_violation: f64,
    /// Frobenius norm of DW at the identity
    pub dw_at_identity: f64,
    /// smallest Rayleigh quotient of D^2 W(I) on symmetric matrices
    pub c1: f64,
    /// smallest sampled ratio W(F) / dist^2(F, SO(d)) over det F > 0
    pub c0: f64,
    /// smallest D^2 W(I)(a x b):(a x b) / (|a||b|)^2 over sampled rank-ones
    pub legendre_hadamard_min: f64,
    pub samples: usize,
}

impl<const D: usize> EnergyDensity<D> {
    pub fn new(kind: EnergyKind, mu: f64) -> Self {
        Self { mu, kind }
    }

    pub fn green(mu: f64) -> Self {
        Self::new(EnergyKind::Green, mu)
    }

    /// W(F) >= 0.
    pub fn w(&self, f: &Mat<D>) -> f64 {
        let e = f.transpose() * f - Mat::<D>::identity();
        self.mu / 4.0 * e.norm_squared()
    }

    fn dw_raw(&self, f: &Mat<D>) -> Mat<D> {
        let c = f.transpose() * f - Mat::<D>::identity();
        self.mu * f * c
    }

    /// First derivative, admissible region det F > 0.
    pub fn dw(&self, f: &Mat<D>) -> Result<Mat<D>, MaterialError> {
        let det = det(f);
        if det <= 0.0 {
            return Err(MaterialError::Inadmissible(det));
        }
        Ok(self.dw_raw(f))
    }

    /// Directional second derivative D^2 W(F)[A] at an arbitrary base point.
    pub fn d2w_apply(&self, f: &Mat<D>, a: &Mat<D>) -> Mat<D> {
        let c = f.transpose() * f - Mat::<D>::identity();
        self.mu * (a * c + f * (a.transpose() * f + f.transpose() * a))
    }

    /// D^2 W(I)[A] = 2 mu sym A.
    pub fn d2w_i_apply(&self, a: &Mat<D>) -> Mat<D> {
        self.mu * (a + a.transpose())
    }

    /// Components of the constant tensor D^2 W(I), index order (i,j,k,l)
    /// with (C A)_{ij} = C_{ijkl} A_{kl}.
    pub fn d2w_i_tensor(&self) -> Vec<f64> {
        let mut c = vec![0.0; D * D * D * D];
        for i in 0..D {
            for j in 0..D {
                for k in 0..D {
                    for l in 0..D {
                        let mut v = 0.0;
                        if i == k && j == l {
                            v += self.mu;
                        }
                        if i == l && j == k {
                            v += self.mu;
                        }
                        c[((i * D + j) * D + k) * D + l] = v;
                    }
                }
            }
        }
        c
    }

    /// D^3 W(F)[A, B].
    pub fn d3w_contract(&self, f: &Mat<D>, a: &Mat<D>, b: &Mat<D>) -> Mat<D> {
        self.mu
            * (a * (b.transpose() * f + f.transpose() * b)
                + b * (a.transpose() * f + f.transpose() * a)
                + f * (a.transpose() * b + b.transpose() * a))
    }

    /// Taylor remainder of DW at the identity:
    /// R(F) = int_0^1 D^3 W((1-s)I + sF)(1-s) ds [F-I, F-I],
    /// by 32-point Gauss quadrature (exact for this quartic energy).
    pub fn remainder_r(&self, f: &Mat<D>) -> Result<Mat<D>, MaterialError> {
        let e = f - Mat::<D>::identity();
        let mut acc = Mat::<D>::zeros();
        for (s, w) in gauss_legendre_unit(32) {
            let base = Mat::<D>::identity() * (1.0 - s) + f * s;
            if det(&base) <= 0.0 {
                return Err(MaterialError::InadmissibleSegment(s));
            }
            acc += self.d3w_contract(&base, &e, &e) * (w * (1.0 - s));
        }
        Ok(acc)
    }

    /// Monte Carlo verification of the structural assumptions on samples
    /// F = R (I + tau A) with |tau| <= radius, plus an exact eigen-analysis
    /// of D^2 W(I) on the symmetric subspace.
    pub fn check_assumptions(
        &self,
        samples: usize,
        radius: f64,
        seed: u64,
    ) -> Result<AssumptionReport, MaterialError> {
        if samples < 100 {
            return Err(MaterialError::TooFewSamples(samples));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fi_violation = 0.0_f64;
        let mut c0 = f64::INFINITY;
        let mut lh_min = f64::INFINITY;
        for _ in 0..samples {
            let a = random_matrix::<D>(&mut rng);
            let tau = rng.gen_range(0.0..radius);
            let q = random_rotation::<D>(&mut rng);
            let f = q * (Mat::<D>::identity() + a * tau);
            // frame indifference under a second, independent rotation
            let q2 = random_rotation::<D>(&mut rng);
            fi_violation = fi_violation.max((self.w(&(q2 * f)) - self.w(&f)).abs());
            if det(&f) > 0.0 {
                let d2 = dist_so_squared(&f);
                if d2 > 1e-20 {
                    c0 = c0.min(self.w(&f) / d2);
                }
            }
            // rank-one directions for the Legendre-Hadamard bound
            let va = random_vector::<D>(&mut rng);
            let vb = random_vector::<D>(&mut rng);
            let rank1 = va * vb.transpose();
            let denom = va.norm_squared() * vb.norm_squared();
            if denom > 1e-20 {
                let val = (self.d2w_i_apply(&rank1)).dot(&rank1) / denom;
                lh_min = lh_min.min(val);
            }
        }
        Ok(AssumptionReport {
            frame_indifference_violation: fi_violation,
            dw_at_identity: self.dw_raw(&Mat::<D>::identity()).norm(),
            c1: self.c1_exact(),
            c0,
            legendre_hadamard_min: lh_min,
            samples,
        })
    }

    /// Smallest eigenvalue of the quadratic form A -> D^2 W(I)A : A on the
    /// symmetric subspace (dense eigen-solve on an orthonormal basis).
    pub fn c1_exact(&self) -> f64 {
        let dim = D * (D + 1) / 2;
        let mut basis: Vec<Mat<D>> = Vec::with_capacity(dim);
        for i in 0..D {
            let mut m = Mat::<D>::zeros();
            m[(i, i)] = 1.0;
            basis.push(m);
        }
        for i in 0..D {
            for j in (i + 1)..D {
                let mut m = Mat::<D>::zeros();
                let v = 1.0 / 2.0_f64.sqrt();
                m[(i, j)] = v;
                m[(j, i)] = v;
                basis.push(m);
            }
        }
        let mut gram = DMatrix::<f64>::zeros(dim, dim);
        for (a, ea) in basis.iter().enumerate() {
            let image = self.d2w_i_apply(ea);
            for (b, eb) in basis.iter().enumerate() {
                gram[(a, b)] = image.dot(eb);
            }
        }
        let eig = gram.symmetric_eigen();
        eig.eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

fn random_matrix<const D: usize>(rng: &mut ChaCha8Rng) -> Mat<D> {
    Mat::<D>::from_fn(|_, _| rng.gen_range(-1.0..1.0))
}

fn random_vector<const D: usize>(rng: &mut ChaCha8Rng) -> SVector<f64, D> {
    SVector::<f64, D>::from_fn(|_, _| rng.gen_range(-1.0..1.0))
}

/// Uniform-ish random proper rotation via QR of a Gaussian-like matrix with
/// the determinant sign fixed.
pub fn random_rotation<const D: usize>(rng: &mut ChaCha8Rng) -> Mat<D> {
    loop {
        let m = random_matrix::<D>(rng);
        if det(&m).abs() < 1e-6 {
            continue;
        }
        let dm = DMatrix::from_fn(D, D, |i, j| m[(i, j)]);
        let qr = dm.qr();
        let mut q = qr.q();
        if q.determinant() < 0.0 {
            let col = q.column(0) * -1.0;
            q.set_column(0, &col);
        }
        return Mat::<D>::from_fn(|i, j| q[(i, j)]);
    }
}

/// Squared distance to SO(d) through singular values (valid for det F > 0):
/// sum (sigma_i - 1)^2.
pub fn dist_so_squared<const D: usize>(f: &Mat<D>) -> f64 {
    let dm = DMatrix::from_fn(D, D, |i, j| f[(i, j)]);
    let svd = dm.svd(false, false);
    svd.singular_values.iter().map(|s| (s - 1.0).powi(2)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    type M2 = Mat<2>;

    fn energy() -> EnergyDensity<2> {
        EnergyDensity::green(1.3)
    }

    #[test]
    fn rest_state_is_stress_free() {
        let en = energy();
        assert_eq!(en.w(&M2::identity()), 0.0);
        let dw = en.dw(&M2::identity()).unwrap();
        assert!(dw.norm() <= 1e-14);
    }

    #[test]
    fn rotations_carry_zero_energy() {
        let en = energy();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let r = random_rotation::<2>(&mut rng);
            assert!(en.w(&r).abs() < 1e-24);
            assert!(en.dw(&r).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn frame_indifference_exact() {
        let en = energy();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let q = random_rotation::<2>(&mut rng);
            let f = M2::identity() + random_matrix::<2>(&mut rng) * 0.4;
            assert!((en.w(&(q * f)) - en.w(&f)).abs() < 1e-12);
        }
    }

    #[test]
    fn dw_matches_central_differences() {
        let en = energy();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..50 {
            let f = M2::identity() + random_matrix::<2>(&mut rng) * 0.3;
            if f.determinant() <= 0.0 {
                continue;
            }
            let dw = en.dw(&f).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let mut fp = f;
                    let mut fm = f;
                    fp[(i, j)] += h;
                    fm[(i, j)] -= h;
                    let fd = (en.w(&fp) - en.w(&fm)) / (2.0 * h);
                    assert!(
                        (dw[(i, j)] - fd).abs() <= 1e-6 * (1.0 + dw.norm()),
                        "entry ({i},{j}): {} vs {}",
                        dw[(i, j)],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn d2w_at_identity_matches_differences_and_has_major_symmetry() {
        let en = energy();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = 1e-6;
        let a = random_matrix::<2>(&mut rng);
        let fp = M2::identity() + a * h;
        let fm = M2::identity() - a * h;
        let fd = (en.dw(&fp).unwrap() - en.dw(&fm).unwrap()) / (2.0 * h);
        let exact = en.d2w_i_apply(&a);
        assert!((fd - exact).norm() <= 1e-6 * (1.0 + exact.norm()));
        let c = en.d2w_i_tensor();
        let d = 2;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let cijkl = c[((i * d + j) * d + k) * d + l];
                        let cklij = c[((k * d + l) * d + i) * d + j];
                        assert!((cijkl - cklij).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn small_strain_linearization() {
        let en = energy();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix::<2>(&mut rng);
        let eps = 1e-6;
        let f = M2::identity() + a * eps;
        let dw = en.dw(&f).unwrap();
        let lin = en.d2w_i_apply(&a) * eps;
        assert!((dw - lin).norm() <= 1e-4 * lin.norm());
    }

    #[test]
    fn remainder_closes_the_taylor_identity() {
        // DW(F) - D2W(I)(F - I) - R(F) = 0 up to quadrature roundoff
        let en = energy();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(en.remainder_r(&M2::identity()).unwrap().norm() == 0.0);
        for _ in 0..200 {
            let mut a = random_matrix::<2>(&mut rng);
            a = (a + a.transpose()) * 0.5;
            let f = M2::identity() + a * 0.3;
            if f.determinant() <= 0.0 {
                continue;
            }
            let e = f - M2::identity();
            let resid = en.dw(&f).unwrap() - en.d2w_i_apply(&e) - en.remainder_r(&f).unwrap();
            assert!(resid.norm() <= 1e-10, "residual {}", resid.norm());
        }
    }

    #[test]
    fn remainder_is_second_order_along_rays() {
        let en = energy();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix::<2>(&mut rng);
        let taus: Vec<f64> = (0..9).map(|i| 1e-3 * 10f64.powf(i as f64 / 4.0)).collect();
        let logs: Vec<(f64, f64)> = taus
            .iter()
            .map(|&t| {
                let f = M2::identity() + a * t;
                (t.ln(), en.remainder_r(&f).unwrap().norm().ln())
            })
            .collect();
        // least-squares slope of log |R| vs log tau
        let n = logs.len() as f64;
        let sx: f64 = logs.iter().map(|p| p.0).sum();
        let sy: f64 = logs.iter().map(|p| p.1).sum();
        let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn assumption_report_default_energy() {
        let en = energy();
        let report = en.check_assumptions(1000, 0.5, 42).unwrap();
        assert!(report.frame_indifference_violation <= 1e-12);
        assert!(report.dw_at_identity <= 1e-14);
        assert!((report.c1 - 2.0 * en.mu).abs() <= 1e-10);
        assert!(report.c0 > 0.0);
        assert!(report.legendre_hadamard_min > 0.0);
        assert!(en.check_assumptions(99, 0.5, 0).is_err());
    }

    #[test]
    fn inadmissible_gradient_rejected() {
        let en = energy();
        let f = M2::new(-1.0, 0.0, 0.0, 1.0);
        assert!(matches!(en.dw(&f), Err(MaterialError::Inadmissible(_))));
        // segment from I to a reflected state crosses det = 0
        assert!(en.remainder_r(&M2::new(-3.0, 0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn three_dimensional_instantiation() {
        let en = EnergyDensity::<3>::green(0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let r = random_rotation::<3>(&mut rng);
        assert!(en.w(&r) < 1e-24);
        assert!((en.c1_exact() - 1.4).abs() < 1e-12);
        let a = random_matrix::<3>(&mut rng) * 0.2;
        let f = Mat::<3>::identity() + a;
        let e = a;
        let resid = en.dw(&f).unwrap() - en.d2w_i_apply(&e) - en.remainder_r(&f).unwrap();
        assert!(resid.norm() <= 1e-10);
    }
}
