/// Symmetric quadrature rule on the reference triangle.
///
/// Points are barycentric coordinates; weights sum to the reference area 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    degree: u32,
}

impl QuadratureRule {
    /// Three interior points, exact for quadratics.
    pub fn degree2() -> Self {
        let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
        Self {
            points: vec![[a, b, b], [b, a, b], [b, b, a]],
            weights: vec![1.0 / 6.0; 3],
            degree: 2,
        }
    }

    /// Six-point Dunavant rule, exact for quartics.
    pub fn degree4() -> Self {
        let a1 = 0.445_948_490_915_965;
        let w1 = 0.223_381_589_678_011;
        let a2 = 0.091_576_213_509_771;
        let w2 = 0.109_951_743_655_322;
        let (b1, b2) = (1.0 - 2.0 * a1, 1.0 - 2.0 * a2);
        Self {
            points: vec![[b1, a1, a1], [a1, b1, a1], [a1, a1, b1], [b2, a2, a2], [a2, b2, a2], [a2, a2, b2]],
            weights: [w1, w1, w1, w2, w2, w2].iter().map(|w| 0.5 * w).collect(),
            degree: 4,
        }
    }

    /// Rule of degree `2p` for Lagrange order `p`.
    pub fn for_order(order: u8) -> Self {
        if order <= 1 {
            Self::degree2()
        } else {
            Self::degree4()
        }
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
