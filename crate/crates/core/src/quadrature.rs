//! Quadrature rules: Gauss–Legendre on [0,1] and symmetric rules on the
//! reference triangle {(x,y): x,y >= 0, x + y <= 1}.

/// Nodes and weights of the n-point Gauss–Legendre rule on [0,1].
///
/// Exact for polynomials of degree 2n-1. Nodes are found by Newton iteration
/// on the Legendre polynomial, seeded with the Chebyshev estimate.
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // root of P_n on [-1,1]
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push(((x + 1.0) / 2.0, w / 2.0));
    }
    out
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// A quadrature rule on the reference triangle. Weights sum to 1/2 (the
/// reference area).
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Degree-5 seven-point rule (Dunavant). Default rule for all volume
    /// integrals in this crate; exact for the P2 mass matrix and better.
    pub fn degree5() -> Self {
        let a = 0.059_715_871_789_770;
        let b = 0.470_142_064_105_115;
        let c = 0.797_426_985_353_087;
        let d = 0.101_286_507_323_456;
        let w1 = 0.225;
        let w2 = 0.132_394_152_788_506;
        let w3 = 0.125_939_180_544_827;
        let points = vec![
            [1.0 / 3.0, 1.0 / 3.0],
            [a, b],
            [b, a],
            [b, b],
            [c, d],
            [d, c],
            [d, d],
        ];
        let weights = vec![w1, w2, w2, w2, w3, w3, w3]
            .into_iter()
            .map(|w| w / 2.0)
            .collect();
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss rule mapped onto the segment [p0, p1] in the plane; returns
/// (point, weight) with weights scaled by the segment length.
pub fn segment_rule(p0: [f64; 2], p1: [f64; 2], n: usize) -> Vec<([f64; 2], f64)> {
    let len = ((p1[0] - p0[0]).powi(2) + (p1[1] - p0[1]).powi(2)).sqrt();
    gauss_legendre_unit(n)
        .into_iter()
        .map(|(s, w)| {
            (
                [p0[0] + s * (p1[0] - p0[0]), p0[1] + s * (p1[1] - p0[1])],
                w * len,
            )
        })
        .collect()
}
