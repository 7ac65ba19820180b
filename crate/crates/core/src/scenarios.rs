//! Synthetic shape-color collections with known class structure, and the
//! score tables built from them.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{Color, Item, Kernel, Shape, ShapeColor};
use crate::scores::{score_profile, Order};
use crate::spectrum::DEFAULT_SUPPORT_TOL;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub classes: Vec<(Shape, Color, usize)>,
    pub partial_match_weight: f64,
    /// Probability that an item has one attribute (shape or color, equally
    /// likely) replaced by a different random value.
    pub intra_class_noise: f64,
}

impl ScenarioSpec {
    pub fn new(classes: Vec<(Shape, Color, usize)>) -> Self {
        ScenarioSpec { classes, partial_match_weight: 0.5, intra_class_noise: 0.0 }
    }

    /// `counts.len()` classes on mutually distinct shapes and colors, so
    /// that items of different classes have zero similarity.
    pub fn orthogonal(counts: &[usize]) -> Result<Self> {
        if counts.len() > Shape::ALL.len() {
            return Err(Error::InvalidParameter(format!(
                "at most {} orthogonal classes, got {}",
                Shape::ALL.len(),
                counts.len()
            )));
        }
        Ok(Self::new(
            counts.iter().enumerate().map(|(i, &n)| (Shape::ALL[i], Color::ALL[i], n)).collect(),
        ))
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.intra_class_noise = noise;
        self
    }

    pub fn kernel(&self) -> Kernel {
        Kernel::ShapeColor { partial_match_weight: self.partial_match_weight }
    }

    pub fn size(&self) -> usize {
        self.classes.iter().map(|c| c.2).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::EmptyCollection);
        }
        if self.classes.iter().any(|c| c.2 == 0) {
            return Err(Error::InvalidParameter("class counts must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.intra_class_noise) {
            return Err(Error::InvalidParameter(format!(
                "intra-class noise must be in [0, 1], got {}",
                self.intra_class_noise
            )));
        }
        self.kernel().validate()
    }
}

pub fn generate_scenario(spec: &ScenarioSpec, seed: u64) -> Result<Vec<Item>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(spec.size());
    for &(shape, color, count) in &spec.classes {
        for _ in 0..count {
            let mut token = ShapeColor { shape, color };
            if spec.intra_class_noise > 0.0 && rng.random_bool(spec.intra_class_noise) {
                if rng.random_bool(0.5) {
                    token.shape = other(&Shape::ALL, shape, &mut rng);
                } else {
                    token.color = other(&Color::ALL, color, &mut rng);
                }
            }
            items.push(Item::Token(token));
        }
    }
    Ok(items)
}

fn other<T: Copy + PartialEq>(all: &[T], current: T, rng: &mut impl Rng) -> T {
    let candidates: Vec<T> = all.iter().copied().filter(|&v| v != current).collect();
    candidates[rng.random_range(0..candidates.len())]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Panel {
    A,
    B,
    C,
    D,
    E,
}

impl Panel {
    pub const ALL: [Panel; 5] = [Panel::A, Panel::B, Panel::C, Panel::D, Panel::E];
}

impl fmt::Display for Panel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Panel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Panel::A),
            "B" => Ok(Panel::B),
            "C" => Ok(Panel::C),
            "D" => Ok(Panel::D),
            "E" => Ok(Panel::E),
            _ => Err(Error::InvalidParameter(format!("unknown panel '{s}' (expected A-E)"))),
        }
    }
}

/// One collection of a panel, scored at every requested order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelRow {
    pub panel: Panel,
    pub label: String,
    pub size: usize,
    /// Same order as the requested `qs`.
    pub scores: Vec<f64>,
}

pub const BALANCED_CLASS_SIZE: usize = 5;
pub const IMBALANCED_COUNTS: [&[usize]; 3] = [&[20, 20], &[20, 20, 1], &[20, 20, 1, 1]];
pub const CORRELATION_LEVELS: [f64; 5] = [1.0, 0.75, 0.5, 0.25, 0.0];
pub const NOISE_LEVELS: [f64; 4] = [0.0, 0.2, 0.4, 0.6];

/// The collections of a panel, in the order the panel's trend is read.
pub fn panel_collections(panel: Panel, seed: u64) -> Result<Vec<(String, Vec<Item>)>> {
    let tokens = |pairs: &[(usize, usize)]| -> Vec<Item> {
        pairs
            .iter()
            .map(|&(s, c)| Item::Token(ShapeColor { shape: Shape::ALL[s], color: Color::ALL[c] }))
            .collect()
    };
    let repeat = |pairs: &[(usize, usize)], n: usize| -> Vec<Item> {
        let per_class: Vec<(usize, usize)> = pairs.iter().flat_map(|&p| std::iter::repeat_n(p, n)).collect();
        tokens(&per_class)
    };
    match panel {
        Panel::A => (2..=8)
            .map(|k| {
                let spec = ScenarioSpec::orthogonal(&vec![BALANCED_CLASS_SIZE; k])?;
                Ok((format!("K={k}"), generate_scenario(&spec, seed)?))
            })
            .collect(),
        Panel::B => IMBALANCED_COUNTS
            .iter()
            .map(|counts| {
                let label = counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("+");
                Ok((label, generate_scenario(&ScenarioSpec::orthogonal(counts)?, seed)?))
            })
            .collect(),
        Panel::C => Ok(vec![
            ("shared-shape".to_string(), repeat(&[(0, 0), (0, 1), (0, 2), (0, 3)], BALANCED_CLASS_SIZE)),
            ("paired-shapes".to_string(), repeat(&[(0, 0), (0, 1), (1, 2), (1, 3)], BALANCED_CLASS_SIZE)),
            ("distinct".to_string(), repeat(&[(0, 0), (1, 1), (2, 2), (3, 3)], BALANCED_CLASS_SIZE)),
        ]),
        Panel::D => Ok(CORRELATION_LEVELS
            .iter()
            .map(|&rho| (format!("rho={rho}"), tokens(&correlated_pairs(rho))))
            .collect()),
        Panel::E => NOISE_LEVELS
            .iter()
            .map(|&noise| {
                let spec = ScenarioSpec::orthogonal(&[10; 4])?.with_noise(noise);
                Ok((format!("noise={noise}"), generate_scenario(&spec, seed)?))
            })
            .collect(),
    }
}

/// Sixteen items over four shapes; the first `round(16 rho)` take the color
/// matching their shape and the rest cycle through colors independently.
fn correlated_pairs(rho: f64) -> Vec<(usize, usize)> {
    let n = 16;
    let tied = (rho * n as f64).round() as usize;
    (0..n).map(|i| (i % 4, if i < tied { i % 4 } else { i / 4 })).collect()
}

pub fn evaluate_panel(panel: Panel, qs: &[Order], seed: u64) -> Result<Vec<PanelRow>> {
    let kernel = Kernel::shape_color(0.5)?;
    panel_collections(panel, seed)?
        .into_iter()
        .map(|(label, items)| {
            let scores = score_profile(&items, &kernel, qs, DEFAULT_SUPPORT_TOL)?
                .into_iter()
                .map(|r| r.score)
                .collect();
            Ok(PanelRow { panel, label, size: items.len(), scores })
        })
        .collect()
}

pub fn evaluate_panels(qs: &[Order], seed: u64) -> Result<Vec<PanelRow>> {
    let mut rows = Vec::new();
    for panel in Panel::ALL {
        rows.extend(evaluate_panel(panel, qs, seed)?);
    }
    Ok(rows)
}

/// `100 (VS_q(full) - VS_q(reduced)) / VS_q(full)` for each order.
pub fn missing_mode_sensitivity(
    full: &[Item],
    reduced: &[Item],
    kernel: &Kernel,
    qs: &[Order],
    support_tol: f64,
) -> Result<Vec<f64>> {
    let a = score_profile(full, kernel, qs, support_tol)?;
    let b = score_profile(reduced, kernel, qs, support_tol)?;
    Ok(a.iter().zip(&b).map(|(f, r)| 100.0 * (f.score - r.score) / f.score).collect())
}
