//! Quadrature rules on triangles (barycentric points, weights summing to 1)
//! and Gauss-Legendre rules on segments.

use serde::{Deserialize, Serialize};

/// Polynomial degree integrated exactly by the triangle rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(try_from = "u8", into = "u8")]
pub enum Quadrature {
    Degree1,
    #[default]
    Degree2,
    Degree4,
}

impl TryFrom<u8> for Quadrature {
    type Error = String;
    fn try_from(d: u8) -> Result<Self, String> {
        match d {
            1 => Ok(Quadrature::Degree1),
            2 => Ok(Quadrature::Degree2),
            4 => Ok(Quadrature::Degree4),
            _ => Err(format!("quadrature degree must be 1, 2 or 4, got {d}")),
        }
    }
}

impl From<Quadrature> for u8 {
    fn from(q: Quadrature) -> u8 {
        match q {
            Quadrature::Degree1 => 1,
            Quadrature::Degree2 => 2,
            Quadrature::Degree4 => 4,
        }
    }
}

const CENTROID: [([f64; 3], f64); 1] = [([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 1.0)];

const DEG2: [([f64; 3], f64); 3] = [
    ([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], 1.0 / 3.0),
];

const A4: f64 = 0.445_948_490_915_965;
const B4: f64 = 0.091_576_213_509_771;
const WA4: f64 = 0.223_381_589_678_011;
const WB4: f64 = 0.109_951_743_655_322;

const DEG4: [([f64; 3], f64); 6] = [
    ([1.0 - 2.0 * A4, A4, A4], WA4),
    ([A4, 1.0 - 2.0 * A4, A4], WA4),
    ([A4, A4, 1.0 - 2.0 * A4], WA4),
    ([1.0 - 2.0 * B4, B4, B4], WB4),
    ([B4, 1.0 - 2.0 * B4, B4], WB4),
    ([B4, B4, 1.0 - 2.0 * B4], WB4),
];

impl Quadrature {
    /// `(barycentric point, weight)`; multiply weights by the triangle area.
    pub fn points(self) -> &'static [([f64; 3], f64)] {
        match self {
            Quadrature::Degree1 => &CENTROID,
            Quadrature::Degree2 => &DEG2,
            Quadrature::Degree4 => &DEG4,
        }
    }

    pub fn degree(self) -> u8 {
        self.into()
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]` with `n` points (1..=5).
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let (x, w): (&[f64], &[f64]) = match n {
        1 => (&[0.0], &[2.0]),
        2 => (&[-0.577_350_269_189_625_8, 0.577_350_269_189_625_8], &[1.0, 1.0]),
        3 => (
            &[-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4],
            &[5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0],
        ),
        4 => (
            &[-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6],
            &[0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9],
        ),
        5 => (
            &[-0.906_179_845_938_664, -0.538_469_310_105_683_1, 0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664],
            &[
                0.236_926_885_056_189_1,
                0.478_628_670_499_366_5,
                0.568_888_888_888_888_9,
                0.478_628_670_499_366_5,
                0.236_926_885_056_189_1,
            ],
        ),
        _ => panic!("gauss_legendre_unit supports 1 to 5 points, got {n}"),
    };
    x.iter().zip(w).map(|(&x, &w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
}
