//! Fits the position-only model `F = γ·G(p1)·G(p2)` and the distance model
//! `F = γ·G(p1)·G(p2)·H(d)` to common-connection accuracy cells and compares
//! them on held-out samples.
//!
//! Accuracies enter as percentages and are handled internally as fractions;
//! RMSE is reported in percentage points.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::encoding::Encoding;
use crate::eval::{bootstrap_stddev, AccuracyCell, Outcome};
use crate::prng;
use crate::tasks::{CellKey, Placement, TaskKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("invalid fit input: {0}")]
    InvalidParameter(String),
    #[error("every G(p1)·G(p2) product is zero; gamma is undefined")]
    DegenerateG,
    #[error("every cell fell below the ratio floor; H is undefined")]
    NoUsableCells,
}

/// Measured edge-existence accuracy (percent) at normalized positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionAccuracy {
    pub positions: Vec<f64>,
    pub accuracies: Vec<f64>,
}

impl PositionAccuracy {
    /// One point per placement cell, at the cell's mean measured position.
    pub fn from_cells(cells: &[AccuracyCell], encoding: Encoding) -> Self {
        let mut points: Vec<(f64, f64)> = Placement::ALL
            .iter()
            .filter_map(|&placement| {
                cells.iter().find(|c| {
                    c.task == TaskKind::EdgeExistence
                        && c.encoding == encoding
                        && c.cell == CellKey::Placement { placement }
                })
            })
            .filter_map(|c| Some((*c.mean_positions.first()?, c.accuracy)))
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            positions: points.iter().map(|p| p.0).collect(),
            accuracies: points.iter().map(|p| p.1).collect(),
        }
    }
}

/// Piecewise-linear Ĝ through the measured points, clamped to the nearest
/// end point outside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GHat {
    pub points: Vec<(f64, f64)>,
}

impl GHat {
    pub fn estimate(measured: &PositionAccuracy) -> Result<Self, FitError> {
        let n = measured.positions.len();
        if n < 2 || measured.accuracies.len() != n {
            return Err(FitError::InvalidParameter(format!(
                "G needs at least 2 positions with one accuracy each, got {} positions and {} accuracies",
                n,
                measured.accuracies.len()
            )));
        }
        if measured.positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FitError::InvalidParameter("positions must be strictly increasing".into()));
        }
        Ok(Self {
            points: measured.positions.iter().copied().zip(measured.accuracies.iter().copied()).collect(),
        })
    }

    /// Accuracy in percent at position `x`.
    pub fn percent(&self, x: f64) -> f64 {
        crate::runner::interpolate(&self.points, x)
    }

    /// Accuracy as a fraction at position `x`.
    pub fn fraction(&self, x: f64) -> f64 {
        self.percent(x) / 100.0
    }
}

/// One common-connection cell as seen by the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellObservation {
    pub p1: u8,
    pub p2: u8,
    /// Mean normalized positions of the two common blocks.
    pub position1: f64,
    pub position2: f64,
    pub normalized_distance: f64,
    /// Accuracy in percent.
    pub accuracy: f64,
    pub n: usize,
}

impl CellObservation {
    /// Distance class `|p2 - p1|` on the grid.
    pub fn distance_class(&self) -> u8 {
        self.p2.abs_diff(self.p1)
    }

    fn gg(&self, g: &GHat) -> f64 {
        g.fraction(self.position1) * g.fraction(self.position2)
    }
}

/// Least squares through the origin of `F` on `Ĝ(p1)·Ĝ(p2)`.
pub fn estimate_gamma(train: &[CellObservation], g: &GHat) -> Result<f64, FitError> {
    if train.is_empty() {
        return Err(FitError::InvalidParameter("gamma needs at least one training cell".into()));
    }
    let (num, den) = train.iter().fold((0.0, 0.0), |(num, den), c| {
        let gg = c.gg(g);
        (num + c.accuracy / 100.0 * gg, den + gg * gg)
    });
    if den == 0.0 {
        return Err(FitError::DegenerateG);
    }
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HClass {
    /// Grid distance classes pooled into this estimate.
    pub classes: Vec<u8>,
    pub mean_normalized_distance: f64,
    pub h: f64,
    /// Standard error of the mean ratio; `None` for a single cell.
    pub stderr: Option<f64>,
    pub cells: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HHat {
    /// Ordered by distance class.
    pub classes: Vec<HClass>,
    /// Cells skipped because `γ̂·Ĝ·Ĝ` fell below the floor.
    pub excluded_cells: usize,
}

impl HHat {
    /// Ĥ for a grid distance class; classes absent from training take the
    /// nearest estimated class.
    pub fn value(&self, class: u8) -> f64 {
        self.classes
            .iter()
            .min_by_key(|c| c.classes.iter().map(|k| k.abs_diff(class)).min().unwrap_or(u8::MAX))
            .map_or(1.0, |c| c.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Cells with `γ̂·Ĝ(p1)·Ĝ(p2)` below this are left out of Ĥ.
    pub ratio_floor: f64,
    /// Classes with fewer cells are pooled with their smaller neighbor.
    pub min_cells_per_class: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            ratio_floor: 1e-3,
            min_cells_per_class: 1,
        }
    }
}

struct Pool {
    classes: Vec<u8>,
    ratios: Vec<f64>,
    distances: Vec<f64>,
    samples: usize,
}

/// Ĥ per distance class: the mean of `F / (γ̂·Ĝ(p1)·Ĝ(p2))` over the class.
pub fn estimate_h(train: &[CellObservation], gamma: f64, g: &GHat, options: &FitOptions) -> Result<HHat, FitError> {
    if gamma <= 0.0 {
        return Err(FitError::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    let mut by_class: BTreeMap<u8, Pool> = BTreeMap::new();
    let mut excluded = 0;
    for c in train {
        let denom = gamma * c.gg(g);
        if denom < options.ratio_floor {
            excluded += 1;
            continue;
        }
        let pool = by_class.entry(c.distance_class()).or_insert_with(|| Pool {
            classes: vec![c.distance_class()],
            ratios: Vec::new(),
            distances: Vec::new(),
            samples: 0,
        });
        pool.ratios.push(c.accuracy / 100.0 / denom);
        pool.distances.push(c.normalized_distance);
        pool.samples += c.n;
    }
    if by_class.is_empty() {
        return Err(FitError::NoUsableCells);
    }
    let mut pools: Vec<Pool> = by_class.into_values().collect();
    while pools.len() > 1 {
        let Some(small) = (0..pools.len()).find(|&i| pools[i].ratios.len() < options.min_cells_per_class) else {
            break;
        };
        let neighbor = match (small.checked_sub(1), (small + 1 < pools.len()).then_some(small + 1)) {
            (Some(l), Some(r)) if pools[r].ratios.len() < pools[l].ratios.len() => r,
            (Some(l), _) => l,
            (None, Some(r)) => r,
            (None, None) => break,
        };
        let taken = pools.remove(small);
        let target = &mut pools[if neighbor > small { neighbor - 1 } else { neighbor }];
        target.classes.extend(taken.classes);
        target.classes.sort_unstable();
        target.ratios.extend(taken.ratios);
        target.distances.extend(taken.distances);
        target.samples += taken.samples;
    }
    let classes = pools
        .into_iter()
        .map(|p| {
            let k = p.ratios.len() as f64;
            let mean = p.ratios.iter().sum::<f64>() / k;
            let stderr = (p.ratios.len() > 1).then(|| {
                let var = p.ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (k - 1.0);
                (var / k).sqrt()
            });
            HClass {
                classes: p.classes,
                mean_normalized_distance: p.distances.iter().sum::<f64>() / k,
                h: mean,
                stderr,
                cells: p.ratios.len(),
                samples: p.samples,
            }
        })
        .collect();
    Ok(HHat {
        classes,
        excluded_cells: excluded,
    })
}

/// Root mean square error in percentage points, predictions clamped to
/// `[0, 100]`.
pub fn rmse(predicted: &[f64], observed: &[f64]) -> f64 {
    if predicted.is_empty() {
        return 0.0;
    }
    let sum: f64 = predicted
        .iter()
        .zip(observed)
        .map(|(p, o)| (p.clamp(0.0, 100.0) - o).powi(2))
        .sum();
    (sum / predicted.len() as f64).sqrt()
}

/// Per-sample correctness of one grid cell, with the cell's mean geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSamples {
    pub p1: u8,
    pub p2: u8,
    pub position1: f64,
    pub position2: f64,
    pub normalized_distance: f64,
    /// Correctness flags in canonical (instance id) order.
    pub correct: Vec<bool>,
}

impl CellSamples {
    /// Groups common-connection outcomes of one encoding by grid cell.
    pub fn from_outcomes(outcomes: &[Outcome], encoding: Encoding) -> Vec<CellSamples> {
        let mut groups: BTreeMap<(u8, u8), Vec<&Outcome>> = BTreeMap::new();
        for o in outcomes {
            if let (TaskKind::CommonConnection, CellKey::Grid { p1, p2 }) = (o.task, o.cell) {
                if o.encoding == encoding {
                    groups.entry((p1, p2)).or_default().push(o);
                }
            }
        }
        groups
            .into_iter()
            .map(|((p1, p2), mut rows)| {
                rows.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
                let n = rows.len() as f64;
                let mean = |f: &dyn Fn(&Outcome) -> f64| rows.iter().map(|o| f(o)).sum::<f64>() / n;
                CellSamples {
                    p1,
                    p2,
                    position1: mean(&|o| o.positions.first().copied().unwrap_or(0.0)),
                    position2: mean(&|o| o.positions.get(1).copied().unwrap_or(0.0)),
                    normalized_distance: mean(&|o| o.normalized_distances.first().copied().unwrap_or(0.0)),
                    correct: rows.iter().map(|o| o.correct).collect(),
                }
            })
            .collect()
    }

    fn observe(&self, flags: &[bool]) -> CellObservation {
        let hits = flags.iter().filter(|&&c| c).count();
        CellObservation {
            p1: self.p1,
            p2: self.p2,
            position1: self.position1,
            position2: self.position2,
            normalized_distance: self.normalized_distance,
            accuracy: 100.0 * hits as f64 / flags.len().max(1) as f64,
            n: flags.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelRmse {
    pub train: f64,
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub encoding: Encoding,
    pub split_seed: u64,
    pub gamma_hat: f64,
    pub g_hat: GHat,
    pub h_hat: HHat,
    /// Position-only model `γ̂·Ĝ·Ĝ`.
    pub position_model: ModelRmse,
    /// Distance model `γ̂·Ĝ·Ĝ·Ĥ`.
    pub distance_model: ModelRmse,
    /// Root mean square of the bootstrap standard deviations of the test
    /// cell accuracies, in percentage points.
    pub noise_floor: f64,
    pub train_cells: Vec<CellObservation>,
    pub test_cells: Vec<CellObservation>,
}

/// Splits every cell's samples in half at random (seeded per cell), fits
/// both models on the training halves and scores them on the test halves.
pub fn compare_models(
    encoding: Encoding,
    cells: &[CellSamples],
    g: &GHat,
    split_seed: u64,
    options: &FitOptions,
) -> Result<FitResult, FitError> {
    if cells.len() < 2 {
        return Err(FitError::InvalidParameter(format!("need at least 2 cells, got {}", cells.len())));
    }
    let mut train = Vec::with_capacity(cells.len());
    let mut test = Vec::with_capacity(cells.len());
    let mut floor_terms = Vec::with_capacity(cells.len());
    for c in cells {
        if c.correct.len() < 2 {
            return Err(FitError::InvalidParameter(format!(
                "cell ({},{}) has {} samples; at least 2 are needed to split",
                c.p1,
                c.p2,
                c.correct.len()
            )));
        }
        let label = format!("{}{}", c.p1, c.p2);
        let mut order: Vec<usize> = (0..c.correct.len()).collect();
        order.shuffle(&mut prng::derived_rng(split_seed, &["split", encoding.as_str(), &label]));
        let half = c.correct.len() / 2;
        let pick = |idx: &[usize]| idx.iter().map(|&i| c.correct[i]).collect::<Vec<bool>>();
        let (train_flags, test_flags) = (pick(&order[..half]), pick(&order[half..]));
        train.push(c.observe(&train_flags));
        test.push(c.observe(&test_flags));
        let seed = prng::derive_seed(split_seed, &["noise", encoding.as_str(), &label]);
        floor_terms.push(bootstrap_stddev(&test_flags, 1000, seed).powi(2));
    }
    let gamma = estimate_gamma(&train, g)?;
    let h = estimate_h(&train, gamma, g, options)?;
    let predict = |c: &CellObservation, with_h: bool| {
        100.0 * gamma * c.gg(g) * if with_h { h.value(c.distance_class()) } else { 1.0 }
    };
    let score = |with_h: bool| ModelRmse {
        train: rmse(
            &train.iter().map(|c| predict(c, with_h)).collect::<Vec<_>>(),
            &train.iter().map(|c| c.accuracy).collect::<Vec<_>>(),
        ),
        test: rmse(
            &test.iter().map(|c| predict(c, with_h)).collect::<Vec<_>>(),
            &test.iter().map(|c| c.accuracy).collect::<Vec<_>>(),
        ),
    };
    Ok(FitResult {
        encoding,
        split_seed,
        gamma_hat: gamma,
        g_hat: g.clone(),
        position_model: score(false),
        distance_model: score(true),
        noise_floor: (floor_terms.iter().sum::<f64>() / floor_terms.len() as f64).sqrt(),
        h_hat: h,
        train_cells: train,
        test_cells: test,
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Ĝ against position and Ĥ against normalized distance, side by side.
pub fn curves_svg(fit: &FitResult) -> String {
    let (w, h, pad) = (300.0, 200.0, 50.0);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">"#,
        2.0 * w + 3.0 * pad,
        h + 2.0 * pad
    );
    let panel = |svg: &mut String, x0: f64, title: &str, points: &[(f64, f64)], y_max: f64| {
        let _ = writeln!(
            svg,
            r##"<rect x="{x0:.1}" y="{pad:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#444444"/><text x="{:.1}" y="{:.1}" text-anchor="middle">{title}</text>"##,
            x0 + w / 2.0,
            pad - 10.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{y_max:.2}</text><text x="{:.1}" y="{:.1}" text-anchor="end">0</text>"#,
            x0 - 4.0,
            pad + 4.0,
            x0 - 4.0,
            pad + h
        );
        let coords: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{:.1},{:.1}", x0 + w * x.clamp(0.0, 1.0), pad + h * (1.0 - (y / y_max).clamp(0.0, 1.0))))
            .collect();
        let _ = writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="#2166ac" stroke-width="2"/>"##,
            coords.join(" ")
        );
        for c in &coords {
            let (cx, cy) = c.split_once(',').expect("formatted pair");
            let _ = writeln!(svg, r##"<circle cx="{cx}" cy="{cy}" r="3" fill="#2166ac"/>"##);
        }
    };
    panel(&mut svg, pad, "G (accuracy %) vs position", &fit.g_hat.points, 100.0);
    let h_points: Vec<(f64, f64)> = fit.h_hat.classes.iter().map(|c| (c.mean_normalized_distance, c.h)).collect();
    let h_max = h_points.iter().map(|p| p.1).fold(1.0, f64::max) * 1.1;
    panel(&mut svg, 2.0 * pad + w, "H vs normalized distance", &h_points, h_max);
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g() -> GHat {
        GHat::estimate(&PositionAccuracy {
            positions: vec![0.0, 0.5, 1.0],
            accuracies: vec![90.0, 60.0, 88.0],
        })
        .unwrap()
    }

    #[test]
    fn g_interpolates_and_clamps() {
        let g = g();
        assert!((g.percent(0.25) - 75.0).abs() < 1e-12);
        assert_eq!(g.percent(0.5), 60.0);
        assert_eq!(g.percent(1.2), 88.0);
        assert_eq!(g.percent(-0.3), 90.0);
        assert!(GHat::estimate(&PositionAccuracy { positions: vec![0.5], accuracies: vec![1.0] }).is_err());
        assert!(GHat::estimate(&PositionAccuracy { positions: vec![0.5, 0.2], accuracies: vec![1.0, 2.0] }).is_err());
    }

    fn grid(g: &GHat, gamma: f64, h: impl Fn(u8) -> f64) -> Vec<CellObservation> {
        let mut cells = Vec::new();
        for p1 in 0..3u8 {
            for p2 in 3..6u8 {
                let (x1, x2) = (0.1 + 0.15 * p1 as f64, 0.55 + 0.15 * (p2 - 3) as f64);
                let gg = g.fraction(x1) * g.fraction(x2);
                cells.push(CellObservation {
                    p1,
                    p2,
                    position1: x1,
                    position2: x2,
                    normalized_distance: x2 - x1,
                    accuracy: 100.0 * gamma * gg * h(p2 - p1),
                    n: 100,
                });
            }
        }
        cells
    }

    #[test]
    fn gamma_exact_models() {
        let g = g();
        assert!((estimate_gamma(&grid(&g, 1.0, |_| 1.0), &g).unwrap() - 1.0).abs() < 1e-12);
        assert!((estimate_gamma(&grid(&g, 0.9, |_| 1.0), &g).unwrap() - 0.9).abs() < 1e-9);
        let zero = GHat { points: vec![(0.0, 0.0), (1.0, 0.0)] };
        assert_eq!(estimate_gamma(&grid(&g, 0.9, |_| 1.0), &zero), Err(FitError::DegenerateG));
    }

    #[test]
    fn h_is_one_on_exact_position_model() {
        let g = g();
        let cells = grid(&g, 0.8, |_| 1.0);
        let gamma = estimate_gamma(&cells, &g).unwrap();
        let h = estimate_h(&cells, gamma, &g, &FitOptions::default()).unwrap();
        assert_eq!(h.classes.len(), 5);
        for c in &h.classes {
            assert!((c.h - 1.0).abs() < 1e-9);
        }
        assert_eq!(h.classes[0].stderr, None);
        assert!(h.classes[1].stderr.is_some());
    }

    #[test]
    fn h_recovers_planted_shape() {
        let g = g();
        let planted = |d: u8| 1.0 / (1.0 + d as f64 / 5.0);
        let cells = grid(&g, 0.9, planted);
        let gamma = estimate_gamma(&cells, &g).unwrap();
        let h = estimate_h(&cells, gamma, &g, &FitOptions::default()).unwrap();
        let values: Vec<f64> = h.classes.iter().map(|c| c.h).collect();
        assert!(values.windows(2).all(|w| w[0] > w[1]));
        let ratio = values[0] / values[4];
        assert!((ratio / (planted(1) / planted(5)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn floor_excludes_cells_and_small_classes_merge() {
        let g = g();
        let cells = grid(&g, 0.9, |_| 1.0);
        let h = estimate_h(&cells, 0.9, &g, &FitOptions { ratio_floor: 10.0, min_cells_per_class: 1 });
        assert_eq!(h, Err(FitError::NoUsableCells));
        let h = estimate_h(&cells, 0.9, &g, &FitOptions { ratio_floor: 0.0, min_cells_per_class: 2 }).unwrap();
        assert_eq!(h.classes.len(), 3);
        assert_eq!(h.classes.iter().map(|c| c.cells).sum::<usize>(), 9);
        assert_eq!(h.classes[0].classes, vec![1, 2]);
        assert_eq!(h.value(1), h.value(2));
        assert!(estimate_h(&cells, 0.0, &g, &FitOptions::default()).is_err());
    }

    #[test]
    fn single_cell_class_takes_its_ratio() {
        let g = g();
        let cell = grid(&g, 0.5, |_| 1.0).remove(0);
        let h = estimate_h(std::slice::from_ref(&cell), 0.25, &g, &FitOptions::default()).unwrap();
        assert_eq!(h.classes.len(), 1);
        assert!((h.classes[0].h - 2.0).abs() < 1e-9);
        assert_eq!(h.classes[0].stderr, None);
    }

    #[test]
    fn rmse_clamps_predictions() {
        assert_eq!(rmse(&[120.0, 50.0], &[100.0, 50.0]), 0.0);
        assert!((rmse(&[10.0, 20.0], &[13.0, 16.0]) - 12.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn compare_models_needs_two_cells() {
        let cell = CellSamples {
            p1: 0,
            p2: 3,
            position1: 0.2,
            position2: 0.7,
            normalized_distance: 0.5,
            correct: vec![true; 10],
        };
        assert!(compare_models(Encoding::Incident, std::slice::from_ref(&cell), &g(), 1, &FitOptions::default()).is_err());
        let fit = compare_models(Encoding::Incident, &[cell.clone(), CellSamples { p2: 4, ..cell }], &g(), 1, &FitOptions::default())
            .unwrap();
        assert_eq!(fit.train_cells[0].n, 5);
        assert_eq!(fit.test_cells[0].n, 5);
        assert_eq!(fit.noise_floor, 0.0);
        assert!(curves_svg(&fit).contains("<polyline"));
    }

    proptest! {
        #[test]
        fn g_hat_interpolates_and_clamps(raw in prop::collection::btree_map(0u32..1000, 0.0f64..100.0, 2..8), q in -0.5f64..1.5) {
            let measured = PositionAccuracy {
                positions: raw.keys().map(|&k| f64::from(k) / 1000.0).collect(),
                accuracies: raw.values().copied().collect(),
            };
            let g = GHat::estimate(&measured).unwrap();
            for (&x, &y) in measured.positions.iter().zip(&measured.accuracies) {
                prop_assert_eq!(g.percent(x), y);
            }
            let lo = measured.accuracies.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = measured.accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let v = g.percent(q);
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            if q <= measured.positions[0] {
                prop_assert_eq!(v, measured.accuracies[0]);
            }
            if q >= *measured.positions.last().unwrap() {
                prop_assert_eq!(v, *measured.accuracies.last().unwrap());
            }
        }

        #[test]
        fn scale_equivariance(c in 0.1f64..1.0, accs in prop::collection::vec(1.0f64..60.0, 9)) {
            let g = g();
            let mut cells = grid(&g, 1.0, |_| 1.0);
            for (cell, a) in cells.iter_mut().zip(&accs) {
                cell.accuracy = *a;
            }
            let scaled: Vec<CellObservation> = cells.iter().map(|x| CellObservation { accuracy: x.accuracy * c, ..x.clone() }).collect();
            let g1 = estimate_gamma(&cells, &g).unwrap();
            let g2 = estimate_gamma(&scaled, &g).unwrap();
            prop_assert!((g2 - c * g1).abs() < 1e-9 * g1.max(1.0));
            let opts = FitOptions { ratio_floor: 0.0, min_cells_per_class: 1 };
            let h1 = estimate_h(&cells, g1, &g, &opts).unwrap();
            let h2 = estimate_h(&scaled, g2, &g, &opts).unwrap();
            for (a, b) in h1.classes.iter().zip(&h2.classes) {
                prop_assert!((a.h - b.h).abs() < 1e-9);
            }
        }

        #[test]
        fn split_is_reproducible_and_halves(seed in any::<u64>(), flags in prop::collection::vec(any::<bool>(), 4..40)) {
            let cells: Vec<CellSamples> = (3..6u8).map(|p2| CellSamples {
                p1: 0, p2, position1: 0.2, position2: 0.7, normalized_distance: 0.5, correct: flags.clone(),
            }).collect();
            let a = compare_models(Encoding::Expert, &cells, &g(), seed, &FitOptions::default());
            let b = compare_models(Encoding::Expert, &cells, &g(), seed, &FitOptions::default());
            prop_assert_eq!(&a, &b);
            if let Ok(fit) = a {
                for (tr, te) in fit.train_cells.iter().zip(&fit.test_cells) {
                    prop_assert_eq!(tr.n + te.n, flags.len());
                    prop_assert_eq!(tr.n, flags.len() / 2);
                }
                prop_assert!(fit.position_model.test >= 0.0 && fit.distance_model.test >= 0.0);
            }
        }
    }
}
