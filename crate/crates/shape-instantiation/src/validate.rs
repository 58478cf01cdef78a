//! Leave-one-out validation of contour → mesh regression, plus the study
//! harnesses built on top of it.
//!
//! [`loocv`] holds out each frame in turn, trains the chosen regressor on
//! the remaining frames, instantiates the held-out mesh from its contour
//! alone, and records the mean per-vertex error in millimetres. A fold that
//! cannot be trained (rank collapse, degenerate kernel) is recorded as a
//! failure with its reason and the run continues, so one bad frame never
//! hides the rest of the picture. Every report also carries the
//! frame-to-frame shape variation — the natural "how much does the body
//! move here" yardstick an error should be judged against — and flags the
//! first and last frames, whose variation can only be estimated one-sided.
//!
//! The studies sweep one labeled axis and return a [`StudyGrid`] of
//! per-frame outcomes per tick: [`sweep_components`] varies the component
//! count (fitting each fold once at the largest count and truncating, which
//! is exact), [`deviation_study`] re-slices the sequence on a preset of
//! perturbed scan planes, and [`registration_study`] applies in-plane rigid
//! transforms to the contours to measure how registration-dependent a
//! regressor is. Everything runs sequentially and deterministically.

use crate::phantom::CyclePhase;
use crate::regress::{
    kplsr_fit, simpls_fit, KplsrModel, PlsrModel, RegressError,
};
use crate::scanplane::{
    build_contour_sequence, perturb_plane, PlanePerturbation, ScanPlane, ScanPlaneError,
};
use crate::ssm::{
    mean_distance_error, shape_variation, vertices_from_row3, ContourSequence2D, SsmError,
    ShapeSequence3D,
};
use nalgebra::{DMatrix, DVector, Point2, Rotation2, Vector2};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("contours have {contours} frames but shapes have {shapes}")]
    FrameCountMismatch { contours: usize, shapes: usize },
    #[error("need at least {needed} frames, found {found}")]
    TooFewFrames { found: usize, needed: usize },
    #[error("study needs at least one tick on its axis")]
    EmptyAxis,
    #[error("component counts must be positive")]
    ZeroComponentTick,
    #[error("reports cover different frame counts: {left} vs {right}")]
    ReportLengthMismatch { left: usize, right: usize },
    #[error(transparent)]
    Shape(#[from] SsmError),
    #[error(transparent)]
    Regress(#[from] RegressError),
    #[error(transparent)]
    Plane(#[from] ScanPlaneError),
}

/// Which regressor to validate, with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorSpec {
    Plsr { components: usize },
    Kplsr { components: usize, ratio: f64 },
}

impl RegressorSpec {
    pub fn components(&self) -> usize {
        match self {
            RegressorSpec::Plsr { components } => *components,
            RegressorSpec::Kplsr { components, .. } => *components,
        }
    }

    pub fn with_components(self, components: usize) -> Self {
        match self {
            RegressorSpec::Plsr { .. } => RegressorSpec::Plsr { components },
            RegressorSpec::Kplsr { ratio, .. } => RegressorSpec::Kplsr { components, ratio },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegressorSpec::Plsr { .. } => "plsr",
            RegressorSpec::Kplsr { .. } => "kplsr",
        }
    }
}

/// One leave-one-out fold: either an error in millimetres or the reason the
/// fold could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FoldOutcome {
    Success { error_mm: f64 },
    Failure { reason: String },
}

impl FoldOutcome {
    pub fn error_mm(&self) -> Option<f64> {
        match self {
            FoldOutcome::Success { error_mm } => Some(*error_mm),
            FoldOutcome::Failure { .. } => None,
        }
    }
}

/// Frame-to-frame movement yardstick: two-sided where a frame has both
/// neighbors, one-sided at the sequence ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "mm", rename_all = "snake_case")]
pub enum ShapeVariation {
    Interior(f64),
    OneSided(f64),
}

impl ShapeVariation {
    pub fn mm(&self) -> f64 {
        match self {
            ShapeVariation::Interior(v) | ShapeVariation::OneSided(v) => *v,
        }
    }

    pub fn kind_label(&self) -> &'static str {
        match self {
            ShapeVariation::Interior(_) => "interior",
            ShapeVariation::OneSided(_) => "one_sided",
        }
    }
}

/// Full leave-one-out result for one regressor configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoocvReport {
    pub per_frame: Vec<FoldOutcome>,
    pub shape_variations: Vec<ShapeVariation>,
    /// Frames whose variation estimate is one-sided (first and last).
    pub boundary_frames: Vec<usize>,
    pub config_used: RegressorSpec,
}

impl LoocvReport {
    pub fn n_frames(&self) -> usize {
        self.per_frame.len()
    }

    pub fn n_failures(&self) -> usize {
        self.per_frame
            .iter()
            .filter(|o| o.error_mm().is_none())
            .count()
    }

    /// Mean error over the successful folds; `None` if every fold failed.
    pub fn mean_error(&self) -> Option<f64> {
        mean_of_outcomes(&self.per_frame)
    }

    /// Mean error over successful folds at frames with two-sided neighbors.
    pub fn interior_mean_error(&self) -> Option<f64> {
        let interior: Vec<FoldOutcome> = self
            .per_frame
            .iter()
            .enumerate()
            .filter(|(t, _)| !self.boundary_frames.contains(t))
            .map(|(_, o)| o.clone())
            .collect();
        mean_of_outcomes(&interior)
    }
}

/// Mean over the successful outcomes; `None` if there are none.
pub fn mean_of_outcomes(outcomes: &[FoldOutcome]) -> Option<f64> {
    let errors: Vec<f64> = outcomes.iter().filter_map(|o| o.error_mm()).collect();
    if errors.is_empty() {
        None
    } else {
        Some(errors.iter().sum::<f64>() / errors.len() as f64)
    }
}

enum FittedRegressor {
    Plsr(PlsrModel),
    Kplsr(KplsrModel),
}

impl FittedRegressor {
    fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>, RegressError> {
        match self {
            FittedRegressor::Plsr(m) => m.predict(x),
            FittedRegressor::Kplsr(m) => m.predict(x),
        }
    }

    fn truncated(&self, m: usize) -> Result<FittedRegressor, RegressError> {
        Ok(match self {
            FittedRegressor::Plsr(model) => FittedRegressor::Plsr(model.truncated(m)?),
            FittedRegressor::Kplsr(model) => FittedRegressor::Kplsr(model.truncated(m)?),
        })
    }
}

fn fit_spec(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    spec: &RegressorSpec,
) -> Result<FittedRegressor, RegressError> {
    match spec {
        RegressorSpec::Plsr { components } => {
            simpls_fit(x, y, *components).map(FittedRegressor::Plsr)
        }
        RegressorSpec::Kplsr { components, ratio } => {
            kplsr_fit(x, y, *components, *ratio).map(FittedRegressor::Kplsr)
        }
    }
}

/// Fit at the requested component count, backing off to the largest count
/// the data supports. Returns the model and the achieved count.
fn fit_with_backoff(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    spec: &RegressorSpec,
) -> Result<(FittedRegressor, usize), RegressError> {
    let mut m = spec.components();
    loop {
        match fit_spec(x, y, &spec.with_components(m)) {
            Ok(model) => return Ok((model, m)),
            Err(RegressError::RankError { component }) if component > 1 => {
                m = component - 1;
            }
            Err(RegressError::InvalidComponents { max, .. }) if max >= 1 && m > max => {
                m = max;
            }
            Err(e) => return Err(e),
        }
    }
}

fn paired_designs(
    contours: &ContourSequence2D,
    shapes: &ShapeSequence3D,
    min_frames: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>), ValidateError> {
    let n = contours.n_frames();
    if shapes.n_frames() != n {
        return Err(ValidateError::FrameCountMismatch {
            contours: n,
            shapes: shapes.n_frames(),
        });
    }
    if n < min_frames {
        return Err(ValidateError::TooFewFrames {
            found: n,
            needed: min_frames,
        });
    }
    Ok((contours.flatten().values, shapes.flatten().values))
}

fn shape_variations_of(shapes: &ShapeSequence3D) -> Result<Vec<ShapeVariation>, SsmError> {
    let n = shapes.n_frames();
    (0..n)
        .map(|t| {
            if t == 0 {
                mean_distance_error(shapes.frame(0), shapes.frame(1)).map(ShapeVariation::OneSided)
            } else if t + 1 == n {
                mean_distance_error(shapes.frame(n - 2), shapes.frame(n - 1))
                    .map(ShapeVariation::OneSided)
            } else {
                shape_variation(shapes, t).map(ShapeVariation::Interior)
            }
        })
        .collect()
}

fn evaluate_fold(
    model: &FittedRegressor,
    x_test: &DVector<f64>,
    truth: &[nalgebra::Point3<f64>],
) -> Result<f64, String> {
    let row = model.predict(x_test).map_err(|e| e.to_string())?;
    let predicted = vertices_from_row3(row.as_slice()).map_err(|e| e.to_string())?;
    mean_distance_error(&predicted, truth).map_err(|e| e.to_string())
}

/// Leave-one-out cross validation: train on all frames but one, predict the
/// held-out mesh from its contour, in millimetres. Failed folds are kept in
/// the report with their reasons.
pub fn loocv(
    contours: &ContourSequence2D,
    shapes: &ShapeSequence3D,
    spec: &RegressorSpec,
) -> Result<LoocvReport, ValidateError> {
    let (x, y) = paired_designs(contours, shapes, 3)?;
    let n = x.nrows();
    let per_frame = (0..n)
        .map(|t| {
            let x_train = x.clone().remove_row(t);
            let y_train = y.clone().remove_row(t);
            let outcome = fit_spec(&x_train, &y_train, spec)
                .map_err(|e| e.to_string())
                .and_then(|model| evaluate_fold(&model, &x.row(t).transpose(), shapes.frame(t)));
            match outcome {
                Ok(error_mm) => FoldOutcome::Success { error_mm },
                Err(reason) => FoldOutcome::Failure { reason },
            }
        })
        .collect();
    Ok(LoocvReport {
        per_frame,
        shape_variations: shape_variations_of(shapes)?,
        boundary_frames: vec![0, n - 1],
        config_used: *spec,
    })
}

/// One labeled axis of a study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub ticks: Vec<String>,
}

/// What one grid cell holds: per-frame fold outcomes, or the reason the
/// whole configuration was unusable.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellOutcome {
    PerFrame { outcomes: Vec<FoldOutcome> },
    Missing { reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyCell {
    pub label: String,
    pub outcome: CellOutcome,
}

/// Results of sweeping one study axis: one cell per tick, each holding one
/// fold outcome per frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyGrid {
    pub axis: Axis,
    pub cells: Vec<StudyCell>,
    pub config_used: RegressorSpec,
}

/// Mean and spread of the errors one frame received across a grid's cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSpread {
    pub frame: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation; needs at least two successful cells.
    pub std: Option<f64>,
    pub samples: usize,
}

impl StudyGrid {
    /// Mean error of one cell over its successful folds.
    pub fn cell_mean(&self, index: usize) -> Option<f64> {
        match &self.cells[index].outcome {
            CellOutcome::PerFrame { outcomes } => mean_of_outcomes(outcomes),
            CellOutcome::Missing { .. } => None,
        }
    }

    /// Number of frames covered by the populated cells, if any.
    pub fn n_frames(&self) -> Option<usize> {
        self.cells.iter().find_map(|c| match &c.outcome {
            CellOutcome::PerFrame { outcomes } => Some(outcomes.len()),
            CellOutcome::Missing { .. } => None,
        })
    }

    /// Per-frame mean and sample standard deviation across the axis,
    /// skipping missing cells and failed folds.
    pub fn per_frame_spread(&self) -> Vec<FrameSpread> {
        let n = match self.n_frames() {
            Some(n) => n,
            None => return Vec::new(),
        };
        (0..n)
            .map(|frame| {
                let errors: Vec<f64> = self
                    .cells
                    .iter()
                    .filter_map(|c| match &c.outcome {
                        CellOutcome::PerFrame { outcomes } => outcomes[frame].error_mm(),
                        CellOutcome::Missing { .. } => None,
                    })
                    .collect();
                let samples = errors.len();
                let mean = if samples > 0 {
                    Some(errors.iter().sum::<f64>() / samples as f64)
                } else {
                    None
                };
                let std = if samples > 1 {
                    let m = mean.expect("mean exists when samples > 0");
                    let var = errors.iter().map(|e| (e - m) * (e - m)).sum::<f64>()
                        / (samples - 1) as f64;
                    Some(var.sqrt())
                } else {
                    None
                };
                FrameSpread {
                    frame,
                    mean,
                    std,
                    samples,
                }
            })
            .collect()
    }
}

/// Sweep the component count: each fold is fitted once at the largest
/// requested count (backing off if the data runs out of rank) and truncated
/// to every smaller tick, which matches a direct fit exactly.
pub fn sweep_components(
    contours: &ContourSequence2D,
    shapes: &ShapeSequence3D,
    spec: &RegressorSpec,
    component_ticks: &[usize],
) -> Result<StudyGrid, ValidateError> {
    if component_ticks.is_empty() {
        return Err(ValidateError::EmptyAxis);
    }
    if component_ticks.contains(&0) {
        return Err(ValidateError::ZeroComponentTick);
    }
    let (x, y) = paired_designs(contours, shapes, 3)?;
    let n = x.nrows();
    let top = *component_ticks.iter().max().expect("non-empty ticks");

    // per_tick[k][t] = outcome of component_ticks[k] at frame t.
    let mut per_tick: Vec<Vec<FoldOutcome>> =
        vec![Vec::with_capacity(n); component_ticks.len()];
    for t in 0..n {
        let x_train = x.clone().remove_row(t);
        let y_train = y.clone().remove_row(t);
        let fitted = fit_with_backoff(&x_train, &y_train, &spec.with_components(top));
        match fitted {
            Err(e) => {
                let reason = e.to_string();
                for outcomes in per_tick.iter_mut() {
                    outcomes.push(FoldOutcome::Failure {
                        reason: reason.clone(),
                    });
                }
            }
            Ok((model, achieved)) => {
                for (k, &m) in component_ticks.iter().enumerate() {
                    let outcome = if m > achieved {
                        FoldOutcome::Failure {
                            reason: format!(
                                "fold supports only {achieved} components, {m} requested"
                            ),
                        }
                    } else {
                        match model.truncated(m).map_err(|e| e.to_string()).and_then(
                            |truncated| {
                                evaluate_fold(
                                    &truncated,
                                    &x.row(t).transpose(),
                                    shapes.frame(t),
                                )
                            },
                        ) {
                            Ok(error_mm) => FoldOutcome::Success { error_mm },
                            Err(reason) => FoldOutcome::Failure { reason },
                        }
                    };
                    per_tick[k].push(outcome);
                }
            }
        }
    }

    Ok(StudyGrid {
        axis: Axis {
            name: "components".into(),
            ticks: component_ticks.iter().map(|m| m.to_string()).collect(),
        },
        cells: component_ticks
            .iter()
            .zip(per_tick)
            .map(|(m, outcomes)| StudyCell {
                label: m.to_string(),
                outcome: CellOutcome::PerFrame { outcomes },
            })
            .collect(),
        config_used: *spec,
    })
}

/// Re-slice the sequence on every plane of the standard perturbation preset
/// and run leave-one-out validation per plane. Planes that stop
/// intersecting the body yield missing cells instead of aborting the study.
pub fn deviation_study(
    shapes: &ShapeSequence3D,
    plane: &ScanPlane,
    num_x: usize,
    spec: &RegressorSpec,
) -> Result<StudyGrid, ValidateError> {
    if shapes.n_frames() < 3 {
        return Err(ValidateError::TooFewFrames {
            found: shapes.n_frames(),
            needed: 3,
        });
    }
    let preset = PlanePerturbation::axis_sweep_preset();
    let mut cells = Vec::with_capacity(preset.len());
    let mut ticks = Vec::with_capacity(preset.len());
    for perturbation in &preset {
        let label = perturbation.label();
        ticks.push(label.clone());
        let moved = perturb_plane(plane, perturbation);
        let outcome = match build_contour_sequence(shapes, &moved, num_x) {
            Err(e) => CellOutcome::Missing {
                reason: e.to_string(),
            },
            Ok(contours) => match loocv(&contours, shapes, spec) {
                Err(e) => CellOutcome::Missing {
                    reason: e.to_string(),
                },
                Ok(report) => CellOutcome::PerFrame {
                    outcomes: report.per_frame,
                },
            },
        };
        cells.push(StudyCell { label, outcome });
    }
    Ok(StudyGrid {
        axis: Axis {
            name: "plane".into(),
            ticks,
        },
        cells,
        config_used: *spec,
    })
}

/// An in-plane rigid transform applied to every contour vertex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rigid2D {
    pub angle_deg: f64,
    pub translation: [f64; 2],
}

impl Rigid2D {
    pub fn apply(&self, p: &Point2<f64>) -> Point2<f64> {
        let rot = Rotation2::new(self.angle_deg.to_radians());
        rot * p + Vector2::new(self.translation[0], self.translation[1])
    }

    pub fn label(&self) -> String {
        format!(
            "rot{}deg-t({},{})",
            self.angle_deg, self.translation[0], self.translation[1]
        )
    }
}

/// Apply one rigid transform to every vertex of every contour frame.
pub fn transform_contours(seq: &ContourSequence2D, rigid: &Rigid2D) -> ContourSequence2D {
    let frames = seq
        .frames()
        .iter()
        .map(|frame| frame.iter().map(|p| rigid.apply(p)).collect())
        .collect();
    ContourSequence2D::new(frames, seq.closed()).expect("transformed frames stay rectangular")
}

/// Run leave-one-out validation on the original contours and on each
/// rigidly transformed copy; a registration-free regressor produces the
/// same errors in every cell.
pub fn registration_study(
    contours: &ContourSequence2D,
    shapes: &ShapeSequence3D,
    spec: &RegressorSpec,
    transforms: &[Rigid2D],
) -> Result<StudyGrid, ValidateError> {
    let mut cells = Vec::with_capacity(transforms.len() + 1);
    let mut ticks = Vec::with_capacity(transforms.len() + 1);
    let original = loocv(contours, shapes, spec)?;
    ticks.push("original".to_string());
    cells.push(StudyCell {
        label: "original".into(),
        outcome: CellOutcome::PerFrame {
            outcomes: original.per_frame,
        },
    });
    for rigid in transforms {
        let label = rigid.label();
        ticks.push(label.clone());
        let moved = transform_contours(contours, rigid);
        let report = loocv(&moved, shapes, spec)?;
        cells.push(StudyCell {
            label,
            outcome: CellOutcome::PerFrame {
                outcomes: report.per_frame,
            },
        });
    }
    Ok(StudyGrid {
        axis: Axis {
            name: "registration".into(),
            ticks,
        },
        cells,
        config_used: *spec,
    })
}

/// Which frames count as cycle boundaries for [`boundary_analysis`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub cycle: CyclePhase,
    /// Number of frames at each sequence end treated as boundary.
    pub margin: usize,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        Self {
            cycle: CyclePhase::Half,
            margin: 2,
        }
    }
}

/// Error means split into boundary and interior frames.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryAnalysis {
    pub boundary_frames: Vec<usize>,
    pub interior_frames: Vec<usize>,
    pub boundary_mean: Option<f64>,
    pub interior_mean: Option<f64>,
}

/// Split a report's frames into motion-boundary and interior groups and
/// average each. Half cycles have boundaries at the sequence ends; full
/// cycles add the turning point mid-sequence (± margin−1 frames).
pub fn boundary_analysis(report: &LoocvReport, spec: &BoundarySpec) -> BoundaryAnalysis {
    let n = report.per_frame.len();
    let mut is_boundary = vec![false; n];
    for t in 0..n {
        if t < spec.margin || t + spec.margin >= n {
            is_boundary[t] = true;
        }
    }
    if spec.cycle == CyclePhase::Full && spec.margin > 0 {
        let mid = (n - 1) / 2;
        let lo = mid.saturating_sub(spec.margin - 1);
        let hi = (mid + spec.margin - 1).min(n - 1);
        for flag in is_boundary.iter_mut().take(hi + 1).skip(lo) {
            *flag = true;
        }
    }
    let mut boundary_frames = Vec::new();
    let mut interior_frames = Vec::new();
    let mut boundary_errors = Vec::new();
    let mut interior_errors = Vec::new();
    for (t, outcome) in report.per_frame.iter().enumerate() {
        if is_boundary[t] {
            boundary_frames.push(t);
            boundary_errors.extend(outcome.error_mm());
        } else {
            interior_frames.push(t);
            interior_errors.extend(outcome.error_mm());
        }
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    BoundaryAnalysis {
        boundary_frames,
        interior_frames,
        boundary_mean: mean(&boundary_errors),
        interior_mean: mean(&interior_errors),
    }
}

/// Plot-ready per-frame comparison of a linear and a kernel report over the
/// same sequence. Failed folds render as empty fields.
pub fn comparison_csv(
    plsr: &LoocvReport,
    kplsr: &LoocvReport,
) -> Result<String, ValidateError> {
    if plsr.per_frame.len() != kplsr.per_frame.len() {
        return Err(ValidateError::ReportLengthMismatch {
            left: plsr.per_frame.len(),
            right: kplsr.per_frame.len(),
        });
    }
    let mut out = String::from("frame,error_plsr,error_kplsr,shape_variation,shape_variation_kind\n");
    for t in 0..plsr.per_frame.len() {
        let fmt = |o: &FoldOutcome| o.error_mm().map(|e| e.to_string()).unwrap_or_default();
        let variation = &plsr.shape_variations[t];
        writeln!(
            out,
            "{t},{},{},{},{}",
            fmt(&plsr.per_frame[t]),
            fmt(&kplsr.per_frame[t]),
            variation.mm(),
            variation.kind_label()
        )
        .expect("writing to a string cannot fail");
    }
    Ok(out)
}

/// One CSV column per grid cell, one row per frame; missing cells and
/// failed folds render as empty fields.
pub fn grid_csv(grid: &StudyGrid) -> String {
    let mut out = String::from("frame");
    for cell in &grid.cells {
        out.push(',');
        out.push_str(&cell.label);
    }
    out.push('\n');
    let n = grid.n_frames().unwrap_or(0);
    for t in 0..n {
        let _ = write!(out, "{t}");
        for cell in &grid.cells {
            out.push(',');
            if let CellOutcome::PerFrame { outcomes } = &cell.outcome {
                if let Some(e) = outcomes[t].error_mm() {
                    let _ = write!(out, "{e}");
                }
            }
        }
        out.push('\n');
    }
    out
}
