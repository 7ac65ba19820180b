//! Similarity functions over collection items and kernel-matrix assembly.
//!
//! Every kernel has unit self-similarity, which is what lets a kernel matrix
//! be trace-normalized by simply dividing by the collection size.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::KernelMatrix;

/// Tolerance on `|‖x‖ - 1|` accepted by the linear kernel.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// Collections at least this large are assembled in parallel.
const PARALLEL_ASSEMBLY_MIN: usize = 64;

macro_rules! categorical {
    ($name:ident, $attr:literal, [$($variant:ident => $text:literal),+ $(,)?]) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok($name::$variant),)+
                    _ => Err(Error::UnknownCategory { attribute: $attr, value: s.to_string() }),
                }
            }
        }
    };
}

categorical!(Shape, "shape", [
    Square => "square",
    Circle => "circle",
    Triangle => "triangle",
    Diamond => "diamond",
    Star => "star",
    Hexagon => "hexagon",
    Pentagon => "pentagon",
    Cross => "cross",
]);

categorical!(Color, "color", [
    Black => "black",
    Red => "red",
    Blue => "blue",
    Green => "green",
    Yellow => "yellow",
    Purple => "purple",
    Orange => "orange",
    Cyan => "cyan",
]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShapeColor {
    pub shape: Shape,
    pub color: Color,
}

impl ShapeColor {
    pub fn new(shape: Shape, color: Color) -> Self {
        ShapeColor { shape, color }
    }
}

impl FromStr for ShapeColor {
    type Err = Error;

    /// Parses `shape:color`, e.g. `square:black`.
    fn from_str(s: &str) -> Result<Self> {
        let (shape, color) = s.split_once(':').ok_or_else(|| Error::UnknownCategory {
            attribute: "shape:color token",
            value: s.to_string(),
        })?;
        Ok(ShapeColor { shape: shape.parse()?, color: color.parse()? })
    }
}

impl fmt::Display for ShapeColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.shape, self.color)
    }
}

/// One element of a collection.
#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Vector(Vec<f64>),
    Token(ShapeColor),
}

impl Item {
    fn kind_name(&self) -> &'static str {
        match self {
            Item::Vector(_) => "a real vector",
            Item::Token(_) => "a shape-color token",
        }
    }
}

impl From<Vec<f64>> for Item {
    fn from(v: Vec<f64>) -> Self {
        Item::Vector(v)
    }
}

impl From<ShapeColor> for Item {
    fn from(t: ShapeColor) -> Self {
        Item::Token(t)
    }
}

/// A similarity function with `k(x, x) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Kernel {
    /// Inner product of unit-norm vectors.
    Linear,
    Cosine,
    /// `exp(-gamma * ‖a - b‖²)`
    Rbf { gamma: f64 },
    /// `1 - |a - b| / (|a| + |b|)` on scalars, with `k(0, 0) = 1`.
    Ratio1d,
    /// 1 for identical tokens, `partial_match_weight` when exactly one of
    /// shape or color agrees, 0 otherwise.
    ShapeColor {
        #[serde(default = "default_partial_match_weight")]
        partial_match_weight: f64,
    },
}

fn default_partial_match_weight() -> f64 {
    0.5
}

impl Kernel {
    pub fn rbf(gamma: f64) -> Result<Self> {
        let k = Kernel::Rbf { gamma };
        k.validate()?;
        Ok(k)
    }

    pub fn shape_color(partial_match_weight: f64) -> Result<Self> {
        let k = Kernel::ShapeColor { partial_match_weight };
        k.validate()?;
        Ok(k)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Linear => "linear",
            Kernel::Cosine => "cosine",
            Kernel::Rbf { .. } => "rbf",
            Kernel::Ratio1d => "ratio1d",
            Kernel::ShapeColor { .. } => "shape-color",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Rbf { gamma } if !(gamma.is_finite() && gamma > 0.0) => Err(
                Error::InvalidParameter(format!("rbf gamma must be positive, got {gamma}")),
            ),
            Kernel::ShapeColor { partial_match_weight: w } if !(0.0..=1.0).contains(&w) => Err(
                Error::InvalidParameter(format!("partial-match weight must be in [0, 1], got {w}")),
            ),
            _ => Ok(()),
        }
    }

    /// Whether `k(a, b)` depends only on `a - b`.
    pub fn is_translation_invariant(&self) -> bool {
        matches!(self, Kernel::Rbf { .. })
    }

    /// Checks that `item` can be fed to this kernel.
    pub fn check_item(&self, item: &Item) -> Result<()> {
        match (self, item) {
            (Kernel::ShapeColor { .. }, Item::Token(_)) => Ok(()),
            (Kernel::ShapeColor { .. }, Item::Vector(_)) | (_, Item::Token(_)) => {
                Err(Error::IncompatibleItem { kernel: self.name(), item: item.kind_name() })
            }
            (_, Item::Vector(v)) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite);
                }
                match self {
                    Kernel::Ratio1d if v.len() != 1 => {
                        Err(Error::DimensionMismatch { expected: 1, actual: v.len() })
                    }
                    Kernel::Linear => {
                        let norm = dot(v, v).sqrt();
                        if (norm - 1.0).abs() > UNIT_NORM_TOL {
                            Err(Error::NotUnitNorm { norm })
                        } else {
                            Ok(())
                        }
                    }
                    Kernel::Cosine if dot(v, v) == 0.0 => Err(Error::ZeroVector),
                    _ => Ok(()),
                }
            }
        }
    }

    /// Similarity of `a` and `b`.
    pub fn eval(&self, a: &Item, b: &Item) -> Result<f64> {
        self.check_item(a)?;
        self.check_item(b)?;
        self.eval_unchecked(a, b)
    }

    fn eval_unchecked(&self, a: &Item, b: &Item) -> Result<f64> {
        match (self, a, b) {
            (Kernel::ShapeColor { partial_match_weight }, Item::Token(a), Item::Token(b)) => {
                let same_shape = a.shape == b.shape;
                let same_color = a.color == b.color;
                Ok(match (same_shape, same_color) {
                    (true, true) => 1.0,
                    (false, false) => 0.0,
                    _ => *partial_match_weight,
                })
            }
            (_, Item::Vector(a), Item::Vector(b)) => {
                if a.len() != b.len() {
                    return Err(Error::DimensionMismatch { expected: a.len(), actual: b.len() });
                }
                Ok(self.eval_vectors(a, b))
            }
            _ => Err(Error::IncompatibleItem { kernel: self.name(), item: a.kind_name() }),
        }
    }

    /// Vector kernels on pre-validated, equal-length inputs.
    fn eval_vectors(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Cosine => {
                let c = dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt());
                c.clamp(-1.0, 1.0)
            }
            Kernel::Rbf { gamma } => (-gamma * squared_distance(a, b)).exp(),
            Kernel::Ratio1d => ratio1d(a[0], b[0]),
            Kernel::ShapeColor { .. } => unreachable!("shape-color kernel on vectors"),
        }
    }

    /// Assembles the `C x C` kernel matrix of a collection. The diagonal is
    /// written as exactly 1 and the lower triangle mirrors the upper one.
    pub fn matrix(&self, items: &[Item]) -> Result<KernelMatrix> {
        self.validate()?;
        if items.is_empty() {
            return Err(Error::EmptyCollection);
        }
        for item in items {
            self.check_item(item)?;
        }
        let n = items.len();
        let row = |i: usize| -> Result<Vec<f64>> {
            (i + 1..n).map(|j| self.eval_unchecked(&items[i], &items[j])).collect()
        };
        let upper: Vec<Vec<f64>> = if n >= PARALLEL_ASSEMBLY_MIN {
            (0..n).into_par_iter().map(row).collect::<Result<_>>()?
        } else {
            (0..n).map(row).collect::<Result<_>>()?
        };

        let mut m = DMatrix::identity(n, n);
        for (i, r) in upper.iter().enumerate() {
            for (offset, &v) in r.iter().enumerate() {
                let j = i + 1 + offset;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(KernelMatrix::from_assembled(m))
    }

    /// `∂k(a, b) / ∂a`.
    ///
    /// The ratio kernel is not differentiable at `a = b` or `a = 0`; the
    /// gradient there is taken to be zero.
    pub fn position_gradient(&self, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch { expected: a.len(), actual: b.len() });
        }
        if a.iter().chain(b).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        match *self {
            Kernel::Rbf { gamma } => {
                let k = (-gamma * squared_distance(a, b)).exp();
                Ok(a.iter().zip(b).map(|(x, y)| -2.0 * gamma * (x - y) * k).collect())
            }
            Kernel::Ratio1d => {
                if a.len() != 1 {
                    return Err(Error::DimensionMismatch { expected: 1, actual: a.len() });
                }
                Ok(vec![ratio1d_derivative(a[0], b[0])])
            }
            _ => Err(Error::NotDifferentiable(self.name())),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn ratio1d(a: f64, b: f64) -> f64 {
    let denom = a.abs() + b.abs();
    if denom == 0.0 {
        return 1.0;
    }
    1.0 - (a - b).abs() / denom
}

fn ratio1d_derivative(a: f64, b: f64) -> f64 {
    if a == b || a == 0.0 {
        return 0.0;
    }
    let denom = a.abs() + b.abs();
    let diff_sign = (a - b).signum();
    -(diff_sign * denom - (a - b).abs() * a.signum()) / (denom * denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> Item {
        Item::Vector(x.to_vec())
    }

    fn tok(shape: Shape, color: Color) -> Item {
        Item::Token(ShapeColor::new(shape, color))
    }

    #[test]
    fn rbf_values() {
        let k = Kernel::rbf(1.0).unwrap();
        assert_eq!(k.eval(&v(&[0.3, -1.2]), &v(&[0.3, -1.2])).unwrap(), 1.0);
        assert_relative_eq!(
            k.eval(&v(&[1.0, 0.0]), &v(&[0.0, 0.0])).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-15
        );
        assert_relative_eq!((-1.0f64).exp(), 0.367879, epsilon = 1e-6);
    }

    #[test]
    fn ratio_values() {
        let k = Kernel::Ratio1d;
        assert_relative_eq!(k.eval(&v(&[2.0]), &v(&[1.0])).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(k.eval(&v(&[0.0]), &v(&[0.0])).unwrap(), 1.0);
        assert_eq!(k.eval(&v(&[-1.5]), &v(&[-1.5])).unwrap(), 1.0);
        assert_eq!(k.eval(&v(&[1.0]), &v(&[-3.0])).unwrap(), 0.0);
        assert!(matches!(
            k.eval(&v(&[1.0, 2.0]), &v(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { expected: 1, actual: 2 })
        ));
    }

    #[test]
    fn shape_color_values() {
        let k = Kernel::shape_color(0.5).unwrap();
        let sq_black = tok(Shape::Square, Color::Black);
        assert_eq!(k.eval(&sq_black, &tok(Shape::Square, Color::Red)).unwrap(), 0.5);
        assert_eq!(k.eval(&sq_black, &tok(Shape::Circle, Color::Black)).unwrap(), 0.5);
        assert_eq!(k.eval(&sq_black, &tok(Shape::Circle, Color::Red)).unwrap(), 0.0);
        assert_eq!(k.eval(&sq_black, &sq_black).unwrap(), 1.0);
    }

    #[test]
    fn unknown_category_is_rejected() {
        assert!(matches!("square:mauve".parse::<ShapeColor>(), Err(Error::UnknownCategory { .. })));
        assert!(matches!("blob:red".parse::<ShapeColor>(), Err(Error::UnknownCategory { .. })));
        assert_eq!(
            "Square:RED".parse::<ShapeColor>().unwrap(),
            ShapeColor::new(Shape::Square, Color::Red)
        );
    }

    #[test]
    fn mixed_items_are_rejected() {
        let k = Kernel::rbf(1.0).unwrap();
        assert!(matches!(
            k.eval(&v(&[1.0]), &tok(Shape::Star, Color::Cyan)),
            Err(Error::IncompatibleItem { .. })
        ));
        assert!(matches!(
            k.eval(&v(&[1.0]), &v(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn linear_requires_unit_norm() {
        let k = Kernel::Linear;
        assert!(matches!(k.eval(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])), Err(Error::NotUnitNorm { .. })));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(k.eval(&v(&[s, s]), &v(&[1.0, 0.0])).unwrap(), s, epsilon = 1e-15);
    }

    #[test]
    fn matrix_examples() {
        let k = Kernel::shape_color(0.5).unwrap();
        let same = k.matrix(&[tok(Shape::Star, Color::Red), tok(Shape::Star, Color::Red)]).unwrap();
        assert_eq!(same.as_matrix(), &DMatrix::from_element(2, 2, 1.0));

        let distinct =
            k.matrix(&[tok(Shape::Star, Color::Red), tok(Shape::Circle, Color::Blue)]).unwrap();
        assert_eq!(distinct.as_matrix(), &DMatrix::identity(2, 2));

        let items = [
            tok(Shape::Star, Color::Red),
            tok(Shape::Star, Color::Red),
            tok(Shape::Circle, Color::Blue),
        ];
        let m = k.matrix(&items).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1., 1., 0., 1., 1., 0., 0., 0., 1.]);
        assert_eq!(m.as_matrix(), &expected);
    }

    #[test]
    fn parallel_assembly_matches_pairwise_eval() {
        let k = Kernel::rbf(0.7).unwrap();
        let items: Vec<Item> =
            (0..80).map(|i| v(&[(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])).collect();
        let m = k.matrix(&items).unwrap();
        for i in 0..items.len() {
            for j in 0..items.len() {
                let expected = if i == j { 1.0 } else { k.eval(&items[i], &items[j]).unwrap() };
                assert_eq!(m.as_matrix()[(i, j)], expected);
            }
        }
    }

    #[test]
    fn gradient_examples() {
        let rbf = Kernel::rbf(1.0).unwrap();
        assert_eq!(rbf.position_gradient(&[0.4, 0.1], &[0.4, 0.1]).unwrap(), vec![0.0, 0.0]);
        let g = rbf.position_gradient(&[1.0], &[0.0]).unwrap();
        assert_relative_eq!(g[0], -2.0 * (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(g[0], -0.735759, epsilon = 1e-6);

        let ratio = Kernel::Ratio1d;
        assert_relative_eq!(
            ratio.position_gradient(&[2.0], &[1.0]).unwrap()[0],
            -2.0 / 9.0,
            epsilon = 1e-15
        );
        assert_eq!(ratio.position_gradient(&[1.0], &[1.0]).unwrap()[0], 0.0);
        assert_eq!(ratio.position_gradient(&[0.0], &[1.0]).unwrap()[0], 0.0);
        assert_eq!(ratio.position_gradient(&[0.0], &[0.0]).unwrap()[0], 0.0);
        assert!(matches!(
            Kernel::Cosine.position_gradient(&[1.0], &[0.5]),
            Err(Error::NotDifferentiable("cosine"))
        ));
    }

    fn central_difference(k: &Kernel, a: &[f64], b: &[f64], h: f64) -> Vec<f64> {
        (0..a.len())
            .map(|i| {
                let mut plus = a.to_vec();
                let mut minus = a.to_vec();
                plus[i] += h;
                minus[i] -= h;
                let fp = k.eval(&Item::Vector(plus), &Item::Vector(b.to_vec())).unwrap();
                let fm = k.eval(&Item::Vector(minus), &Item::Vector(b.to_vec())).unwrap();
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn ratio_gradient_matches_finite_differences_on_all_sign_patterns() {
        let k = Kernel::Ratio1d;
        for &(a, b) in &[(2.0, 1.0), (0.5, 3.0), (-2.0, -0.25), (-0.7, -4.0), (1.3, -2.1), (-1.0, 0.4)] {
            let fd = central_difference(&k, &[a], &[b], 1e-5);
            let g = k.position_gradient(&[a], &[b]).unwrap();
            let scale = fd[0].abs().max(1e-10);
            assert!((g[0] - fd[0]).abs() / scale < 1e-6 || (g[0] - fd[0]).abs() < 1e-10, "{a} {b}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vec_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-3.0f64..3.0, d)
        }

        proptest! {
            #[test]
            fn symmetric_and_unit_diagonal(a in vec_strategy(3), b in vec_strategy(3), gamma in 0.05f64..4.0) {
                for k in [Kernel::Rbf { gamma }, Kernel::Cosine] {
                    let (ia, ib) = (Item::Vector(a.clone()), Item::Vector(b.clone()));
                    prop_assert_eq!(k.eval(&ia, &ib).unwrap(), k.eval(&ib, &ia).unwrap());
                    prop_assert!((k.eval(&ia, &ia).unwrap() - 1.0).abs() < 1e-15);
                }
                let (x, y) = (Item::Vector(vec![a[0]]), Item::Vector(vec![b[0]]));
                let r = Kernel::Ratio1d.eval(&x, &y).unwrap();
                prop_assert_eq!(r, Kernel::Ratio1d.eval(&y, &x).unwrap());
                prop_assert!((0.0..=1.0).contains(&r));
                prop_assert_eq!(Kernel::Ratio1d.eval(&x, &x).unwrap(), 1.0);
            }

            #[test]
            fn rbf_gradient_matches_finite_differences(a in vec_strategy(3), b in vec_strategy(3), gamma in 0.1f64..2.0) {
                let k = Kernel::Rbf { gamma };
                let g = k.position_gradient(&a, &b).unwrap();
                let fd = central_difference(&k, &a, &b, 1e-5);
                let gb = k.position_gradient(&b, &a).unwrap();
                for i in 0..3 {
                    let err = (g[i] - fd[i]).abs() / fd[i].abs().max(1e-10);
                    // Tiny components sit in finite-difference round-off.
                    prop_assert!(err < 1e-6 || (g[i] - fd[i]).abs() < 1e-10);
                    prop_assert!((g[i] + gb[i]).abs() < 1e-15);
                }
            }

            #[test]
            fn sampled_kernel_matrices_are_psd(points in proptest::collection::vec(vec_strategy(2), 2..20),
                                               scalars in proptest::collection::vec(-3.0f64..3.0, 2..20),
                                               gamma in 0.1f64..3.0) {
                let rbf: Vec<Item> = points.into_iter().map(Item::Vector).collect();
                let ratio: Vec<Item> = scalars.into_iter().map(|x| Item::Vector(vec![x])).collect();
                for (k, items) in [(Kernel::Rbf { gamma }, &rbf), (Kernel::Ratio1d, &ratio)] {
                    let m = k.matrix(items).unwrap().into_matrix();
                    let eig = m.symmetric_eigenvalues();
                    let max = eig.max();
                    prop_assert!(eig.min() >= -1e-10 * max, "{} min eig {}", k.name(), eig.min());
                }
            }

            #[test]
            fn shape_color_matrices_are_psd(idx in proptest::collection::vec((0usize..8, 0usize..8), 1..30)) {
                let items: Vec<Item> = idx
                    .iter()
                    .map(|&(s, c)| Item::Token(ShapeColor::new(Shape::ALL[s], Color::ALL[c])))
                    .collect();
                let m = Kernel::shape_color(0.5).unwrap().matrix(&items).unwrap().into_matrix();
                let eig = m.symmetric_eigenvalues();
                prop_assert!(eig.min() >= -1e-10 * eig.max());
            }
        }
    }
}
