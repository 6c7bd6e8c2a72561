//! Closed-form determinant and inverse for the small square matrices used at
//! quadrature points (d = 1, 2, 3), avoiding generic-dimension trait bounds
//! in hot loops.

use nalgebra::SMatrix;

pub type Mat<const D: usize> = SMatrix<f64, D, D>;

pub fn det<const D: usize>(m: &Mat<D>) -> f64 {
    match D {
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
        _ => unimplemented!("determinant only provided for d <= 3"),
    }
}

pub fn inv<const D: usize>(m: &Mat<D>) -> Option<Mat<D>> {
    let d = det(m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut out = Mat::<D>::zeros();
    match D {
        1 => out[(0, 0)] = 1.0 / d,
        2 => {
            out[(0, 0)] = m[(1, 1)] / d;
            out[(0, 1)] = -m[(0, 1)] / d;
            out[(1, 0)] = -m[(1, 0)] / d;
            out[(1, 1)] = m[(0, 0)] / d;
        }
        3 => {
            let c = |i: usize, j: usize| -> f64 {
                let r = [(i + 1) % 3, (i + 2) % 3];
                let s = [(j + 1) % 3, (j + 2) % 3];
                m[(r[0], s[0])] * m[(r[1], s[1])] - m[(r[0], s[1])] * m[(r[1], s[0])]
            };
            for i in 0..3 {
                for j in 0..3 {
                    out[(j, i)] = c(i, j) / d;
                }
            }
        }
        _ => unimplemented!("inverse only provided for d <= 3"),
    }
    Some(out)
}
