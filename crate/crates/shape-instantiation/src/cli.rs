//! Command-line front end: scan-plane determination, slicing, model
//! fitting, single-contour instantiation, validation studies, and phantom
//! generation, over the JSON/OBJ/CSV formats of the `io` module.
//!
//! Every command is an ordinary library function taking a plain argument
//! struct, so the `shapeinst` binary stays a one-line dispatcher and tests
//! can drive commands directly. Options resolve in three layers: built-in
//! defaults, then an optional JSON config file (`--config`), then explicit
//! flags. Exit codes classify failures: 2 for configuration problems, 3
//! for unreadable or inconsistent data, 4 for numerical degeneracies
//! (rank collapse, degenerate geometry), 1 for anything else.
//!
//! All file outputs are written atomically and contain no timestamps or
//! timings, so a rerun over the same inputs produces byte-identical
//! results; timing goes to stdout only.

use crate::io::{
    self, read_contour_csv, read_contour_sequence, read_mesh_sequence, read_plane_json,
    write_contour_sequence, write_mesh_sequence, write_obj, write_plane_json, IoError,
};
use crate::phantom::{generate, CyclePhase, MotionModel, PhantomError, PhantomSpec};
use crate::regress::{
    kplsr_fit, simpls_fit, KplsrModel, KplsrModelDoc, PlsrModel, PlsrModelDoc, RegressError,
};
use crate::scanplane::{build_contour_sequence, fit_weighted_plane, ScanPlaneError};
use crate::spca::{spca, vertex_contributions, SparsityTarget, SpcaConfig, SpcaError};
use crate::ssm::{
    center_normalize, vertices_from_row3, Normalization, SsmError, TriangleMesh,
};
use crate::validate::{
    comparison_csv, deviation_study, grid_csv, loocv, registration_study, sweep_components,
    Axis, CellOutcome, RegressorSpec, Rigid2D, StudyCell, StudyGrid, ValidateError,
};
use clap::{Args, Parser, Subcommand};
use nalgebra::{DVector, Point3};
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;
use thiserror::Error;

/// Failure classification; the variant determines the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SsmError> for CliError {
    fn from(e: SsmError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PhantomError> for CliError {
    fn from(e: PhantomError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ScanPlaneError> for CliError {
    fn from(e: ScanPlaneError) -> Self {
        match e {
            ScanPlaneError::NotOrthonormal { .. }
            | ScanPlaneError::WeightCountMismatch { .. }
            | ScanPlaneError::InvalidWeight { .. }
            | ScanPlaneError::TooFewSamples { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SpcaError> for CliError {
    fn from(e: SpcaError) -> Self {
        match e {
            SpcaError::InvalidConfig(_)
            | SpcaError::ComponentOutOfRange { .. }
            | SpcaError::NotVertexInterleaved { .. }
            | SpcaError::DimensionMismatch { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<RegressError> for CliError {
    fn from(e: RegressError) -> Self {
        match e {
            RegressError::InvalidComponents { .. } | RegressError::InvalidRatio(_) => {
                CliError::Config(e.to_string())
            }
            RegressError::RankError { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ValidateError> for CliError {
    fn from(e: ValidateError) -> Self {
        match e {
            ValidateError::EmptyAxis | ValidateError::ZeroComponentTick => {
                CliError::Config(e.to_string())
            }
            ValidateError::FrameCountMismatch { .. }
            | ValidateError::TooFewFrames { .. }
            | ValidateError::ReportLengthMismatch { .. } => CliError::Data(e.to_string()),
            ValidateError::Shape(inner) => inner.into(),
            ValidateError::Regress(inner) => inner.into(),
            ValidateError::Plane(inner) => inner.into(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "shapeinst",
    about = "Registration-free real-time 3D shape instantiation from a single 2D contour",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a deforming phantom body as a mesh sequence
    Phantom(PhantomArgs),
    /// Determine the optimal scan plane of a mesh sequence
    Plane(PlaneArgs),
    /// Slice a mesh sequence into synchronized planar contours
    Slice(SliceArgs),
    /// Fit a contour-to-mesh regression model
    Fit(FitArgs),
    /// Instantiate a mesh from a single contour with a fitted model
    Instantiate(InstantiateArgs),
    /// Run validation studies described by a config file
    Study(StudyArgs),
}

/// Parse the given command line and run it; meant to be the whole body of
/// the binary's `main`.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests land here too; they are not errors.
            let is_usage_error = e.use_stderr();
            let _ = e.print();
            return if is_usage_error {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Phantom(args) => cmd_phantom(args),
        Command::Plane(args) => cmd_plane(args),
        Command::Slice(args) => cmd_slice(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Instantiate(args) => cmd_instantiate(args),
        Command::Study(args) => cmd_study(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Optional JSON config shared by the single-purpose commands; every field
/// may be omitted. Flags override config values, config values override
/// defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub version: Option<u32>,
    pub phantom: Option<PhantomSpec>,
    pub num_x: Option<usize>,
    pub plane_vertex_count: Option<usize>,
    pub regressor: Option<RegressorSpec>,
}

fn load_cli_config(path: Option<&Path>) -> Result<CliConfig, CliError> {
    let Some(path) = path else {
        return Ok(CliConfig::default());
    };
    let bytes = fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let config: CliConfig = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
    match config.version {
        Some(v) if v == io::FORMAT_VERSION => Ok(config),
        Some(v) => Err(CliError::Config(format!(
            "config {} declares version {v}, expected {}",
            path.display(),
            io::FORMAT_VERSION
        ))),
        None => Err(CliError::Config(format!(
            "config {} must declare a version field",
            path.display()
        ))),
    }
}

/// Parse "5", "1..8" (inclusive), or "1,2,4" into a list of counts.
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let lo: usize = a.trim().parse().map_err(|_| format!("bad range start {a:?}"))?;
        let hi: usize = b.trim().parse().map_err(|_| format!("bad range end {b:?}"))?;
        if lo == 0 || hi < lo {
            return Err(format!("range {s:?} must be ascending and start at 1 or higher"));
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad count {part:?}"))
        })
        .collect()
}

/// Parse "0.1" or "0.1,0.3,1" into a list of ratios.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad ratio {part:?}"))
        })
        .collect()
}

fn single_usize(s: &str, what: &str) -> Result<usize, CliError> {
    let list = parse_usize_list(s).map_err(CliError::Config)?;
    match list.as_slice() {
        [one] => Ok(*one),
        _ => Err(CliError::Config(format!(
            "{what} needs a single value, got the list {s:?}"
        ))),
    }
}

fn single_f64(s: &str, what: &str) -> Result<f64, CliError> {
    let list = parse_f64_list(s).map_err(CliError::Config)?;
    match list.as_slice() {
        [one] => Ok(*one),
        _ => Err(CliError::Config(format!(
            "{what} needs a single value, got the list {s:?}"
        ))),
    }
}

const DEFAULT_RATIO: f64 = 0.1;
const DEFAULT_NUM_X: usize = 64;

/// Combine config and flags into a concrete regressor choice.
fn resolve_regressor(
    from_config: Option<RegressorSpec>,
    kind_flag: Option<&str>,
    components_flag: Option<&str>,
    ratio_flag: Option<&str>,
    default_components: usize,
) -> Result<RegressorSpec, CliError> {
    let mut spec = from_config.unwrap_or(RegressorSpec::Kplsr {
        components: default_components,
        ratio: DEFAULT_RATIO,
    });
    if let Some(kind) = kind_flag {
        spec = match kind {
            "plsr" => RegressorSpec::Plsr {
                components: spec.components(),
            },
            "kplsr" => RegressorSpec::Kplsr {
                components: spec.components(),
                ratio: match spec {
                    RegressorSpec::Kplsr { ratio, .. } => ratio,
                    RegressorSpec::Plsr { .. } => DEFAULT_RATIO,
                },
            },
            other => {
                return Err(CliError::Config(format!(
                    "unknown regressor {other:?}; use plsr or kplsr"
                )))
            }
        };
    }
    if let Some(components) = components_flag {
        spec = spec.with_components(single_usize(components, "--components")?);
    }
    if let Some(ratio) = ratio_flag {
        let value = single_f64(ratio, "--ratio")?;
        spec = match spec {
            RegressorSpec::Kplsr { components, .. } => RegressorSpec::Kplsr {
                components,
                ratio: value,
            },
            RegressorSpec::Plsr { .. } => {
                return Err(CliError::Config(
                    "--ratio only applies to the kplsr regressor".into(),
                ))
            }
        };
    }
    Ok(spec)
}

#[derive(Args, Debug, Clone)]
pub struct PhantomArgs {
    /// JSON config file with an optional "phantom" section
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory receiving the mesh sequence
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for the bumpy base body (omit for the smooth ellipsoid)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of frames in the sequence
    #[arg(long)]
    pub frames: Option<usize>,
    /// Exact vertex count of each mesh
    #[arg(long = "numy")]
    pub num_y: Option<usize>,
    /// Peak displacement in millimetres
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Motion model: sinusoidal_radial, linear_stretch, or bending
    #[arg(long)]
    pub motion: Option<String>,
    /// Cycle coverage: half or full
    #[arg(long)]
    pub cycle: Option<String>,
}

fn parse_motion(s: &str) -> Result<MotionModel, CliError> {
    match s.replace('-', "_").as_str() {
        "sinusoidal_radial" => Ok(MotionModel::SinusoidalRadial),
        "linear_stretch" => Ok(MotionModel::LinearStretch),
        "bending" => Ok(MotionModel::Bending),
        other => Err(CliError::Config(format!(
            "unknown motion {other:?}; use sinusoidal_radial, linear_stretch, or bending"
        ))),
    }
}

fn parse_cycle(s: &str) -> Result<CyclePhase, CliError> {
    match s {
        "half" => Ok(CyclePhase::Half),
        "full" => Ok(CyclePhase::Full),
        other => Err(CliError::Config(format!(
            "unknown cycle {other:?}; use half or full"
        ))),
    }
}

pub fn cmd_phantom(args: &PhantomArgs) -> Result<(), CliError> {
    let config = load_cli_config(args.config.as_deref())?;
    let mut spec = config.phantom.unwrap_or_default();
    if let Some(frames) = args.frames {
        spec.n_frames = frames;
    }
    if let Some(num_y) = args.num_y {
        spec.num_y = num_y;
    }
    if let Some(amplitude) = args.amplitude {
        spec.amplitude_mm = amplitude;
    }
    if let Some(motion) = &args.motion {
        spec.motion = parse_motion(motion)?;
    }
    if let Some(cycle) = &args.cycle {
        spec.cycle = parse_cycle(cycle)?;
    }
    if let Some(seed) = args.seed {
        spec.bumpy_seed = Some(seed);
    }
    let sequence = generate(&spec)?;
    fs::create_dir_all(&args.out)?;
    let manifest = write_mesh_sequence(&args.out, &sequence)?;
    println!(
        "phantom: {} frames x {} vertices ({:?}, {:?}) -> {}",
        sequence.n_frames(),
        sequence.n_vertices(),
        spec.motion,
        spec.cycle,
        manifest.display()
    );
    Ok(())
}

#[derive(Args, Debug, Clone)]
pub struct PlaneArgs {
    /// Mesh-sequence manifest to analyze
    pub meshes: PathBuf,
    /// JSON config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory receiving plane.json, contributions.json, mean_shape.obj
    #[arg(long)]
    pub out: PathBuf,
    /// Number of vertices the sparse component may select
    #[arg(long)]
    pub count: Option<usize>,
}

/// Sparse-component summary written next to the fitted plane.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContributionsDoc {
    pub version: u32,
    pub num_vertices: usize,
    pub requested_count: usize,
    pub selected: Vec<usize>,
    pub contributions: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Fraction of vertices the sparse component keeps by default.
const DEFAULT_SELECTION_FRACTION: f64 = 0.075;

pub fn cmd_plane(args: &PlaneArgs) -> Result<(), CliError> {
    let config = load_cli_config(args.config.as_deref())?;
    let sequence = read_mesh_sequence(&args.meshes)?;
    let design = sequence.flatten();
    let (normalized, stats) =
        center_normalize(&design.values, Normalization::CenterUnitNorm)?;
    if stats.column_norms.iter().all(|n| *n == 0.0) {
        return Err(CliError::Numerical(
            "the sequence shows no motion at all; every plane is equally uninformative"
                .into(),
        ));
    }
    let num_vertices = sequence.n_vertices();
    let count = args
        .count
        .or(config.plane_vertex_count)
        .unwrap_or_else(|| {
            ((DEFAULT_SELECTION_FRACTION * num_vertices as f64).round() as usize)
                .clamp(1, num_vertices)
        });
    let spca_config = SpcaConfig::default()
        .with_components(1)
        .with_ridge_lambda(1e-4)
        .with_sparsity(SparsityTarget::NonZeroCount(count));
    let outcome = spca(&normalized, &spca_config)?;
    let contributions = vertex_contributions(&outcome.loadings, 0)?;
    if contributions.selected.is_empty() {
        return Err(CliError::Numerical(
            "the sparse component selected no vertices; the motion may be too uniform".into(),
        ));
    }

    let mut points = Vec::with_capacity(sequence.n_frames() * contributions.selected.len());
    let mut weights = Vec::with_capacity(points.capacity());
    for frame in sequence.frames() {
        for &v in &contributions.selected {
            points.push(frame[v]);
            weights.push(contributions.contributions[v]);
        }
    }
    let plane = fit_weighted_plane(&points, &weights)?;

    fs::create_dir_all(&args.out)?;
    let plane_path = args.out.join("plane.json");
    write_plane_json(&plane_path, &plane)?;
    let doc = ContributionsDoc {
        version: io::FORMAT_VERSION,
        num_vertices,
        requested_count: count,
        selected: contributions.selected.clone(),
        contributions: contributions.contributions.clone(),
        converged: outcome.converged[0],
        iterations: outcome.iterations[0],
    };
    io::write_json_pretty(&args.out.join("contributions.json"), &doc)?;
    let mean_vertices: Vec<Point3<f64>> = (0..num_vertices)
        .map(|v| {
            let sum = sequence
                .frames()
                .iter()
                .fold(nalgebra::Vector3::zeros(), |acc, frame| acc + frame[v].coords);
            Point3::from(sum / sequence.n_frames() as f64)
        })
        .collect();
    let mean_mesh = TriangleMesh::new(mean_vertices, sequence.connectivity().to_vec())?;
    write_obj(&args.out.join("mean_shape.obj"), &mean_mesh)?;

    let n = plane.normal();
    println!(
        "plane: selected {} of {} vertices; origin ({:.3}, {:.3}, {:.3}), normal ({:.4}, {:.4}, {:.4}) -> {}",
        contributions.selected.len(),
        num_vertices,
        plane.origin().x,
        plane.origin().y,
        plane.origin().z,
        n.x,
        n.y,
        n.z,
        plane_path.display()
    );
    Ok(())
}

#[derive(Args, Debug, Clone)]
pub struct SliceArgs {
    /// Mesh-sequence manifest to slice
    pub meshes: PathBuf,
    /// Scan plane JSON (as written by the plane command)
    #[arg(long)]
    pub plane: PathBuf,
    /// JSON config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory receiving the contour sequence
    #[arg(long)]
    pub out: PathBuf,
    /// Number of resampled contour vertices per frame
    #[arg(long = "numx")]
    pub num_x: Option<usize>,
}

pub fn cmd_slice(args: &SliceArgs) -> Result<(), CliError> {
    let config = load_cli_config(args.config.as_deref())?;
    let sequence = read_mesh_sequence(&args.meshes)?;
    let plane = read_plane_json(&args.plane)?;
    let num_x = args.num_x.or(config.num_x).unwrap_or(DEFAULT_NUM_X);
    let contours = build_contour_sequence(&sequence, &plane, num_x)?;
    fs::create_dir_all(&args.out)?;
    let manifest = write_contour_sequence(&args.out, &contours)?;
    println!(
        "slice: {} frames x {} contour vertices -> {}",
        contours.n_frames(),
        contours.n_vertices(),
        manifest.display()
    );
    Ok(())
}

#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    /// Contour-sequence manifest (predictors)
    pub contours: PathBuf,
    /// Mesh-sequence manifest (responses)
    pub meshes: PathBuf,
    /// JSON config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory receiving model.json
    #[arg(long)]
    pub out: PathBuf,
    /// Regressor kind: plsr or kplsr
    #[arg(long)]
    pub regressor: Option<String>,
    /// Number of regression components
    #[arg(long)]
    pub components: Option<String>,
    /// Kernel width ratio
    #[arg(long)]
    pub ratio: Option<String>,
}

/// Self-contained fitted model: the regression plus everything needed to
/// rebuild a mesh from a predicted row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDoc {
    pub version: u32,
    pub regressor: RegressorDoc,
    pub connectivity: Vec<[usize; 3]>,
    pub num_mesh_vertices: usize,
    pub num_contour_vertices: usize,
    pub contour_closed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorDoc {
    Plsr { model: PlsrModelDoc },
    Kplsr { model: KplsrModelDoc },
}

pub fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    let config = load_cli_config(args.config.as_deref())?;
    let contours = read_contour_sequence(&args.contours)?;
    let meshes = read_mesh_sequence(&args.meshes)?;
    if contours.n_frames() != meshes.n_frames() {
        return Err(CliError::Data(format!(
            "contours have {} frames but meshes have {}",
            contours.n_frames(),
            meshes.n_frames()
        )));
    }
    let n = contours.n_frames();
    let default_components = n.saturating_sub(1).clamp(1, 8);
    let spec = resolve_regressor(
        config.regressor,
        args.regressor.as_deref(),
        args.components.as_deref(),
        args.ratio.as_deref(),
        default_components,
    )?;
    let x = contours.flatten().values;
    let y = meshes.flatten().values;

    let started = Instant::now();
    let regressor = match spec {
        RegressorSpec::Plsr { components } => RegressorDoc::Plsr {
            model: simpls_fit(&x, &y, components)?.to_doc(),
        },
        RegressorSpec::Kplsr { components, ratio } => RegressorDoc::Kplsr {
            model: kplsr_fit(&x, &y, components, ratio)?.to_doc(),
        },
    };
    let elapsed = started.elapsed();

    let doc = ModelDoc {
        version: io::FORMAT_VERSION,
        regressor,
        connectivity: meshes.connectivity().to_vec(),
        num_mesh_vertices: meshes.n_vertices(),
        num_contour_vertices: contours.n_vertices(),
        contour_closed: contours.closed(),
    };
    fs::create_dir_all(&args.out)?;
    let model_path = args.out.join("model.json");
    io::write_json_pretty(&model_path, &doc)?;
    println!(
        "fit: {} with {} components on {} frames in {:.3} s -> {}",
        spec.name(),
        spec.components(),
        n,
        elapsed.as_secs_f64(),
        model_path.display()
    );
    Ok(())
}

#[derive(Args, Debug, Clone)]
pub struct InstantiateArgs {
    /// Fitted model JSON (as written by the fit command)
    pub model: PathBuf,
    /// Contour CSV for the frame to instantiate
    pub contour: PathBuf,
    /// Directory receiving instantiated.obj
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_instantiate(args: &InstantiateArgs) -> Result<(), CliError> {
    let doc: ModelDoc = io::read_json(&args.model)?;
    if doc.version != io::FORMAT_VERSION {
        return Err(CliError::Data(format!(
            "model {} declares version {}, expected {}",
            args.model.display(),
            doc.version,
            io::FORMAT_VERSION
        )));
    }
    let points = read_contour_csv(&args.contour)?;
    if points.len() != doc.num_contour_vertices {
        return Err(CliError::Data(format!(
            "contour has {} vertices but the model expects {}",
            points.len(),
            doc.num_contour_vertices
        )));
    }
    let x = DVector::from_fn(2 * points.len(), |i, _| {
        if i % 2 == 0 {
            points[i / 2].x
        } else {
            points[i / 2].y
        }
    });

    enum Loaded {
        Plsr(PlsrModel),
        Kplsr(KplsrModel),
    }
    let model = match &doc.regressor {
        RegressorDoc::Plsr { model } => Loaded::Plsr(PlsrModel::from_doc(model)?),
        RegressorDoc::Kplsr { model } => Loaded::Kplsr(KplsrModel::from_doc(model)?),
    };
    let started = Instant::now();
    let row = match &model {
        Loaded::Plsr(m) => m.predict(&x)?,
        Loaded::Kplsr(m) => m.predict(&x)?,
    };
    let elapsed = started.elapsed();

    let vertices = vertices_from_row3(row.as_slice())?;
    if vertices.len() != doc.num_mesh_vertices {
        return Err(CliError::Data(format!(
            "model predicted {} vertices but declares {}",
            vertices.len(),
            doc.num_mesh_vertices
        )));
    }
    let mesh = TriangleMesh::new(vertices, doc.connectivity.clone())?;
    fs::create_dir_all(&args.out)?;
    let out_path = args.out.join("instantiated.obj");
    write_obj(&out_path, &mesh)?;
    println!(
        "instantiate: {} vertices in {:.3} ms -> {}",
        mesh.n_vertices(),
        elapsed.as_secs_f64() * 1e3,
        out_path.display()
    );
    Ok(())
}

#[derive(Args, Debug, Clone)]
pub struct StudyArgs {
    /// Study description JSON
    pub config: PathBuf,
    /// Directory receiving study outputs
    #[arg(long)]
    pub out: PathBuf,
    /// Override the regressor kind: plsr or kplsr
    #[arg(long)]
    pub regressor: Option<String>,
    /// Override component counts: a value, list, or inclusive range "1..8"
    #[arg(long)]
    pub components: Option<String>,
    /// Override kernel width ratios: a value or comma list
    #[arg(long)]
    pub ratio: Option<String>,
    /// Override the contour vertex count used when re-slicing
    #[arg(long = "numx")]
    pub num_x: Option<usize>,
}

/// One study to run; config files hold a list of these.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StudySpec {
    /// Sweep the number of regression components.
    Components { ticks: Vec<usize> },
    /// Re-slice on the standard preset of perturbed scan planes.
    Deviation,
    /// Re-run validation on rigidly transformed contours.
    Registration { transforms: Vec<Rigid2D> },
    /// Sweep the kernel width ratio at a fixed component count.
    Ratios { ticks: Vec<f64> },
    /// Side-by-side linear/kernel per-frame error table.
    Comparison { plsr_components: usize },
}

impl StudySpec {
    fn kind_label(&self) -> &'static str {
        match self {
            StudySpec::Components { .. } => "components",
            StudySpec::Deviation => "plane_deviation",
            StudySpec::Registration { .. } => "registration",
            StudySpec::Ratios { .. } => "ratios",
            StudySpec::Comparison { .. } => "comparison",
        }
    }
}

/// Top-level study description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub version: u32,
    /// Mesh-sequence manifest (ground truth).
    pub shapes: PathBuf,
    /// Contour-sequence manifest; omit to slice `shapes` with `plane`.
    pub contours: Option<PathBuf>,
    /// Scan-plane JSON; needed by the deviation study and for slicing.
    pub plane: Option<PathBuf>,
    pub num_x: Option<usize>,
    pub regressor: RegressorSpec,
    pub studies: Vec<StudySpec>,
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn cmd_study(args: &StudyArgs) -> Result<(), CliError> {
    let bytes = fs::read(&args.config).map_err(|e| {
        CliError::Config(format!("cannot read config {}: {e}", args.config.display()))
    })?;
    let mut config: StudyConfig = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Config(format!("config {}: {e}", args.config.display())))?;
    if config.version != io::FORMAT_VERSION {
        return Err(CliError::Config(format!(
            "config {} declares version {}, expected {}",
            args.config.display(),
            config.version,
            io::FORMAT_VERSION
        )));
    }
    if config.studies.is_empty() {
        println!("study: no studies configured; nothing to do");
        return Ok(());
    }

    // Flag overrides.
    let mut spec = resolve_regressor(
        Some(config.regressor),
        args.regressor.as_deref(),
        None,
        None,
        1,
    )?;
    let mut components_override: Option<Vec<usize>> = None;
    if let Some(flag) = args.components.as_deref() {
        let list = parse_usize_list(flag).map_err(CliError::Config)?;
        if list.len() == 1 {
            spec = spec.with_components(list[0]);
        } else {
            components_override = Some(list);
        }
    }
    let mut ratio_override: Option<Vec<f64>> = None;
    if let Some(flag) = args.ratio.as_deref() {
        let list = parse_f64_list(flag).map_err(CliError::Config)?;
        if list.len() == 1 {
            spec = match spec {
                RegressorSpec::Kplsr { components, .. } => RegressorSpec::Kplsr {
                    components,
                    ratio: list[0],
                },
                RegressorSpec::Plsr { .. } => {
                    return Err(CliError::Config(
                        "--ratio only applies to the kplsr regressor".into(),
                    ))
                }
            };
        } else {
            ratio_override = Some(list);
        }
    }
    if let Some(num_x) = args.num_x {
        config.num_x = Some(num_x);
    }
    let num_x = config.num_x.unwrap_or(DEFAULT_NUM_X);

    // Load inputs, resolving paths relative to the config file.
    let base = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let shapes = read_mesh_sequence(&resolve_path(&base, &config.shapes))?;
    let plane = config
        .plane
        .as_ref()
        .map(|p| read_plane_json(&resolve_path(&base, p)))
        .transpose()?;
    let contours = match &config.contours {
        Some(path) => Some(read_contour_sequence(&resolve_path(&base, path))?),
        None => match &plane {
            Some(plane) => Some(build_contour_sequence(&shapes, plane, num_x)?),
            None => None,
        },
    };
    let need_contours = |what: &str| {
        CliError::Config(format!(
            "the {what} study needs contours; give a contours manifest or a plane to slice with"
        ))
    };

    fs::create_dir_all(&args.out)?;
    for (index, study) in config.studies.iter().enumerate() {
        let stem = format!("study_{index:02}_{}", study.kind_label());
        match study {
            StudySpec::Components { ticks } => {
                let contours = contours.as_ref().ok_or_else(|| need_contours("components"))?;
                let ticks = components_override.as_deref().unwrap_or(ticks);
                let grid = sweep_components(contours, &shapes, &spec, ticks)?;
                write_grid(&args.out, &stem, &grid)?;
            }
            StudySpec::Deviation => {
                let plane = plane.as_ref().ok_or_else(|| {
                    CliError::Config("the deviation study needs a plane".into())
                })?;
                let grid = deviation_study(&shapes, plane, num_x, &spec)?;
                write_grid(&args.out, &stem, &grid)?;
            }
            StudySpec::Registration { transforms } => {
                let contours =
                    contours.as_ref().ok_or_else(|| need_contours("registration"))?;
                let grid = registration_study(contours, &shapes, &spec, transforms)?;
                write_grid(&args.out, &stem, &grid)?;
            }
            StudySpec::Ratios { ticks } => {
                let contours = contours.as_ref().ok_or_else(|| need_contours("ratios"))?;
                let ticks = ratio_override.as_deref().unwrap_or(ticks);
                let components = match spec {
                    RegressorSpec::Kplsr { components, .. } => components,
                    RegressorSpec::Plsr { .. } => {
                        return Err(CliError::Config(
                            "the ratios study needs the kplsr regressor".into(),
                        ))
                    }
                };
                let mut cells = Vec::with_capacity(ticks.len());
                let mut tick_labels = Vec::with_capacity(ticks.len());
                for &ratio in ticks {
                    let label = ratio.to_string();
                    tick_labels.push(label.clone());
                    let outcome = match loocv(
                        contours,
                        &shapes,
                        &RegressorSpec::Kplsr { components, ratio },
                    ) {
                        Ok(report) => CellOutcome::PerFrame {
                            outcomes: report.per_frame,
                        },
                        Err(ValidateError::Regress(e)) => CellOutcome::Missing {
                            reason: e.to_string(),
                        },
                        Err(e) => return Err(e.into()),
                    };
                    cells.push(StudyCell { label, outcome });
                }
                let grid = StudyGrid {
                    axis: Axis {
                        name: "ratio".into(),
                        ticks: tick_labels,
                    },
                    cells,
                    config_used: spec,
                };
                write_grid(&args.out, &stem, &grid)?;
            }
            StudySpec::Comparison { plsr_components } => {
                let contours = contours.as_ref().ok_or_else(|| need_contours("comparison"))?;
                let kplsr_spec = match spec {
                    RegressorSpec::Kplsr { .. } => spec,
                    RegressorSpec::Plsr { .. } => {
                        return Err(CliError::Config(
                            "the comparison study needs a kplsr regressor to compare against"
                                .into(),
                        ))
                    }
                };
                let plsr_report = loocv(
                    contours,
                    &shapes,
                    &RegressorSpec::Plsr {
                        components: *plsr_components,
                    },
                )?;
                let kplsr_report = loocv(contours, &shapes, &kplsr_spec)?;
                let csv = comparison_csv(&plsr_report, &kplsr_report)?;
                let path = args.out.join(format!("{stem}.csv"));
                io::atomic_write(&path, csv.as_bytes())?;
                println!("study {index:02} comparison -> {}", path.display());
            }
        }
    }
    Ok(())
}

fn write_grid(out: &Path, stem: &str, grid: &StudyGrid) -> Result<(), CliError> {
    let json_path = out.join(format!("{stem}.json"));
    io::write_json_pretty(&json_path, grid)?;
    let csv_path = out.join(format!("{stem}.csv"));
    io::atomic_write(&csv_path, grid_csv(grid).as_bytes())?;
    let summary: Vec<String> = grid
        .cells
        .iter()
        .enumerate()
        .map(|(i, cell)| match grid.cell_mean(i) {
            Some(mean) => format!("{}={:.4}", cell.label, mean),
            None => format!("{}=n/a", cell.label),
        })
        .collect();
    println!(
        "study {} ({}): {} -> {}",
        &stem[6..8],
        grid.axis.name,
        summary.join(" "),
        json_path.display()
    );
    Ok(())
}
