//! Deterministic deforming phantom bodies with analytically known
//! cross-sections, for exercising the full pipeline without scanner data.
//!
//! The base body is an ellipsoid triangulated with an exact, user-chosen
//! vertex count ([`ellipsoid_mesh`]): two poles plus latitude rings whose
//! sizes follow sin θ, stitched by azimuth so the mesh is watertight and
//! outward-oriented. [`generate`] animates it over a half or full motion
//! cycle with one of three motion models:
//!
//! * `SinusoidalRadial` — a radial displacement field mixing three phase
//!   drivers (sin θ, (1−cos θ)/2, sin² θ) with three spatial profiles; the
//!   second-harmonic driver makes the contour → mesh relation genuinely
//!   nonlinear, which is what separates kernel from linear regression.
//! * `LinearStretch` — a pure z-scaling, exactly affine in its driver, so
//!   linear methods must already be exact.
//! * `Bending` — a shear along x growing quadratically with z.
//!
//! Displacement magnitude never exceeds the configured amplitude, and the
//! amplitude must stay below a quarter of the smallest semi-axis, which
//! keeps the body star-shaped and self-intersection-free.
//! [`analytic_cross_section`] returns the exact perimeter and area of a
//! central plane section (closed-form ellipse via the arithmetic-geometric
//! mean where the section is elliptic, high-order quadrature for the
//! deformed star-shaped case), the ground truth used to validate slicing.

use crate::scanplane::ScanPlane;
use crate::ssm::{ShapeSequence3D, TriangleMesh};
use nalgebra::{Matrix2, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("invalid phantom: {0}")]
    InvalidSpec(String),
    #[error("analytic cross-section unsupported: {0}")]
    UnsupportedSection(String),
    #[error(
        "plane misses the phantom center by {distance} mm; analytic sections \
         are only available for central planes"
    )]
    OffCenterPlane { distance: f64 },
    #[error("frame index {index} out of range, phantom has {n_frames} frames")]
    FrameOutOfRange { index: usize, n_frames: usize },
    #[error(transparent)]
    Shape(#[from] crate::ssm::SsmError),
}

/// How the phantom moves over the cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionModel {
    SinusoidalRadial,
    LinearStretch,
    Bending,
}

/// Whether the frames sweep half a cycle (phase 0..π) or a full cycle
/// (0..2π, whose last frame reproduces the first exactly).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CyclePhase {
    Half,
    Full,
}

/// Full description of a phantom sequence. Axis lengths and amplitude are
/// in millimetres; `semi_axes` are the ellipsoid half-extents. Fields left
/// out of a JSON description take their default values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub semi_axes: [f64; 3],
    pub num_y: usize,
    pub n_frames: usize,
    pub amplitude_mm: f64,
    pub motion: MotionModel,
    pub cycle: CyclePhase,
    /// When set, the base body is a seeded "bumpy" ellipsoid whose radius is
    /// modulated by up to ±10%; its sections have no closed form.
    pub bumpy_seed: Option<u64>,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            semi_axes: [30.0, 20.0, 15.0],
            num_y: 1002,
            n_frames: 20,
            amplitude_mm: 3.5,
            motion: MotionModel::SinusoidalRadial,
            cycle: CyclePhase::Half,
            bumpy_seed: None,
        }
    }
}

impl PhantomSpec {
    pub fn with_num_y(mut self, num_y: usize) -> Self {
        self.num_y = num_y;
        self
    }

    pub fn with_frames(mut self, n_frames: usize) -> Self {
        self.n_frames = n_frames;
        self
    }

    pub fn with_amplitude(mut self, amplitude_mm: f64) -> Self {
        self.amplitude_mm = amplitude_mm;
        self
    }

    pub fn with_motion(mut self, motion: MotionModel) -> Self {
        self.motion = motion;
        self
    }

    pub fn with_cycle(mut self, cycle: CyclePhase) -> Self {
        self.cycle = cycle;
        self
    }

    pub fn with_bumpy_seed(mut self, seed: u64) -> Self {
        self.bumpy_seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        for (i, s) in self.semi_axes.iter().enumerate() {
            if !s.is_finite() || *s <= 0.0 {
                return Err(PhantomError::InvalidSpec(format!(
                    "semi-axis {i} must be positive and finite, got {s}"
                )));
            }
        }
        let min_semi = self.semi_axes.iter().cloned().fold(f64::INFINITY, f64::min);
        if !self.amplitude_mm.is_finite() || self.amplitude_mm < 0.0 {
            return Err(PhantomError::InvalidSpec(format!(
                "amplitude must be non-negative and finite, got {}",
                self.amplitude_mm
            )));
        }
        if self.amplitude_mm >= 0.25 * min_semi {
            return Err(PhantomError::InvalidSpec(format!(
                "amplitude {} mm must stay below a quarter of the smallest \
                 semi-axis ({} mm) to keep the body star-shaped",
                self.amplitude_mm,
                0.25 * min_semi
            )));
        }
        if self.num_y < 8 {
            return Err(PhantomError::InvalidSpec(format!(
                "num_y must be at least 8, got {}",
                self.num_y
            )));
        }
        if self.n_frames < 2 {
            return Err(PhantomError::InvalidSpec(format!(
                "need at least 2 frames, got {}",
                self.n_frames
            )));
        }
        Ok(())
    }

    /// Motion phase of frame `t`: half cycles sweep 0..π inclusive, full
    /// cycles 0..2π inclusive (so the last frame equals the first).
    pub fn phase(&self, t: usize) -> f64 {
        let span = match self.cycle {
            CyclePhase::Half => PI,
            CyclePhase::Full => 2.0 * PI,
        };
        span * t as f64 / (self.n_frames - 1) as f64
    }
}

/// Unit-sphere directions and triangle list realizing an exact vertex
/// count: poles at ±z, `rings` latitude bands sized proportionally to sin θ.
fn sphere_directions(num_y: usize) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let interior = num_y - 2;
    let mut rings = (((interior as f64 * PI).sqrt() / 2.0).round() as usize).max(2) - 1;
    rings = rings.max(1);
    while 3 * rings > interior {
        rings -= 1;
    }
    let thetas: Vec<f64> = (0..rings)
        .map(|i| PI * (i + 1) as f64 / (rings + 1) as f64)
        .collect();
    let sin_sum: f64 = thetas.iter().map(|t| t.sin()).sum();
    let raw: Vec<f64> = thetas
        .iter()
        .map(|t| interior as f64 * t.sin() / sin_sum)
        .collect();
    let mut sizes: Vec<usize> = raw.iter().map(|x| (x.floor() as usize).max(3)).collect();
    let mut total: usize = sizes.iter().sum();
    if total < interior {
        // Grow rings with the largest fractional remainder first.
        let mut order: Vec<usize> = (0..rings).collect();
        order.sort_by(|&a, &b| {
            let fa = raw[a] - raw[a].floor();
            let fb = raw[b] - raw[b].floor();
            fb.partial_cmp(&fa).expect("finite remainders").then(a.cmp(&b))
        });
        let mut k = 0;
        while total < interior {
            sizes[order[k % rings]] += 1;
            total += 1;
            k += 1;
        }
    }
    while total > interior {
        // Shrink the currently largest ring; the min-3 clamp created the
        // surplus, and the largest ring can always spare a vertex.
        let mut largest = 0;
        for i in 1..rings {
            if sizes[i] > sizes[largest] {
                largest = i;
            }
        }
        sizes[largest] -= 1;
        total -= 1;
    }

    let mut dirs = Vec::with_capacity(num_y);
    dirs.push(Vector3::new(0.0, 0.0, 1.0));
    let mut ring_indices: Vec<Vec<usize>> = Vec::with_capacity(rings);
    for (i, &size) in sizes.iter().enumerate() {
        let theta = thetas[i];
        let mut indices = Vec::with_capacity(size);
        for j in 0..size {
            let phi = 2.0 * PI * j as f64 / size as f64;
            indices.push(dirs.len());
            dirs.push(Vector3::new(
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            ));
        }
        ring_indices.push(indices);
    }
    let south = dirs.len();
    dirs.push(Vector3::new(0.0, 0.0, -1.0));

    let mut triangles = Vec::new();
    // North cap.
    let first = &ring_indices[0];
    for j in 0..first.len() {
        triangles.push([0, first[j], first[(j + 1) % first.len()]]);
    }
    // Bands: advance whichever side's next azimuth boundary comes first.
    for w in ring_indices.windows(2) {
        let (top, bottom) = (&w[0], &w[1]);
        let (m, n) = (top.len(), bottom.len());
        let (mut a, mut b) = (0usize, 0usize);
        while a < m || b < n {
            let advance_top = if a == m {
                false
            } else if b == n {
                true
            } else {
                (a + 1) * n <= (b + 1) * m
            };
            if advance_top {
                triangles.push([top[a % m], bottom[b % n], top[(a + 1) % m]]);
                a += 1;
            } else {
                triangles.push([top[a % m], bottom[b % n], bottom[(b + 1) % n]]);
                b += 1;
            }
        }
    }
    // South cap, mirrored orientation.
    let last = ring_indices.last().expect("at least one ring");
    for j in 0..last.len() {
        triangles.push([south, last[(j + 1) % last.len()], last[j]]);
    }
    (dirs, triangles)
}

/// Watertight, outward-oriented ellipsoid mesh with exactly `num_y`
/// vertices (minimum 8) and semi-axes in millimetres.
pub fn ellipsoid_mesh(num_y: usize, semi_axes: [f64; 3]) -> Result<TriangleMesh, PhantomError> {
    let spec = PhantomSpec {
        num_y,
        semi_axes,
        amplitude_mm: 0.0,
        ..PhantomSpec::default()
    };
    spec.validate()?;
    let (dirs, triangles) = sphere_directions(num_y);
    let vertices: Vec<Point3<f64>> = dirs
        .iter()
        .map(|u| scale_to_ellipsoid(u, &semi_axes, 1.0))
        .collect();
    Ok(TriangleMesh::new(vertices, triangles)?)
}

fn scale_to_ellipsoid(u: &Vector3<f64>, semi: &[f64; 3], rho: f64) -> Point3<f64> {
    Point3::new(rho * semi[0] * u.x, rho * semi[1] * u.y, rho * semi[2] * u.z)
}

/// Seeded smooth radius modulation for the bumpy base, bounded by ±10%.
fn bumpy_modulation(seed: u64) -> impl Fn(&Vector3<f64>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm: f64 = weights.iter().map(|w| w.abs()).sum::<f64>().max(1e-12);
    move |u: &Vector3<f64>| {
        let f = [
            u.x,
            u.y,
            u.z,
            u.x * u.y,
            u.y * u.z,
            u.z * u.x,
            u.x * u.x - 1.0 / 3.0,
            u.y * u.y - 1.0 / 3.0,
        ];
        let m: f64 = weights.iter().zip(f).map(|(w, fi)| w * fi).sum();
        1.0 + 0.1 * m / norm
    }
}

/// Keeps the three-driver mix strictly inside ±1: slightly above
/// sup over the phase of sin θ + (1−cos θ)/2 + sin² θ ≈ 2.54158.
const DRIVER_NORMALIZER: f64 = 2.5416;

fn drivers(theta: f64) -> [f64; 3] {
    [
        theta.sin(),
        0.5 * (1.0 - theta.cos()),
        theta.sin() * theta.sin(),
    ]
}

fn profiles(u: &Vector3<f64>) -> [f64; 3] {
    [
        0.5 * (1.0 + u.z),
        (1.0 - u.z * u.z) * (0.7 + 0.3 * u.x),
        0.5 * (1.0 - u.z),
    ]
}

/// Signed radial displacement of the sinusoidal model at sphere parameter
/// `u` and phase `theta`; |result| < amplitude for every input.
fn radial_displacement(u: &Vector3<f64>, theta: f64, amplitude: f64) -> f64 {
    let c = drivers(theta);
    let g = profiles(u);
    amplitude * (c[0] * g[0] + c[1] * g[1] + c[2] * g[2]) / DRIVER_NORMALIZER
}

/// Fractional z-stretch of the linear model at phase `theta`.
fn stretch_fraction(theta: f64, amplitude: f64, semi_z: f64) -> f64 {
    amplitude / semi_z * 0.5 * (1.0 - theta.cos())
}

/// x-shear curvature of the bending model at phase `theta`.
fn bending_curvature(theta: f64, amplitude: f64, semi_z: f64) -> f64 {
    amplitude / (semi_z * semi_z) * 0.5 * (1.0 - theta.cos())
}

/// Generate the full phantom sequence. Identical specs produce bit-identical
/// sequences.
pub fn generate(spec: &PhantomSpec) -> Result<ShapeSequence3D, PhantomError> {
    spec.validate()?;
    let (dirs, triangles) = sphere_directions(spec.num_y);
    let rho: Box<dyn Fn(&Vector3<f64>) -> f64> = match spec.bumpy_seed {
        Some(seed) => Box::new(bumpy_modulation(seed)),
        None => Box::new(|_| 1.0),
    };
    let base: Vec<Point3<f64>> = dirs
        .iter()
        .map(|u| scale_to_ellipsoid(u, &spec.semi_axes, rho(u)))
        .collect();

    let mut frames = Vec::with_capacity(spec.n_frames);
    for t in 0..spec.n_frames {
        let theta = spec.phase(t);
        let frame: Vec<Point3<f64>> = match spec.motion {
            MotionModel::SinusoidalRadial => base
                .iter()
                .zip(&dirs)
                .map(|(p, u)| {
                    let s = radial_displacement(u, theta, spec.amplitude_mm);
                    let radial = p.coords / p.coords.norm();
                    Point3::from(p.coords + radial * s)
                })
                .collect(),
            MotionModel::LinearStretch => {
                let f = stretch_fraction(theta, spec.amplitude_mm, spec.semi_axes[2]);
                base.iter()
                    .map(|p| Point3::new(p.x, p.y, p.z * (1.0 + f)))
                    .collect()
            }
            MotionModel::Bending => {
                let k = bending_curvature(theta, spec.amplitude_mm, spec.semi_axes[2]);
                base.iter()
                    .map(|p| Point3::new(p.x + k * p.z * p.z, p.y, p.z))
                    .collect()
            }
        };
        frames.push(frame);
    }
    Ok(ShapeSequence3D::new(frames, triangles)?)
}

/// Exact perimeter and area of a central cross-section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossSection {
    pub perimeter: f64,
    pub area: f64,
}

/// Ground-truth section of frame `t` by a plane through the phantom center.
///
/// Supported: the smooth base body at any amplitude-zero phase (ellipse,
/// closed form), `LinearStretch` frames (still an ellipse), and
/// `SinusoidalRadial` frames (star-shaped section, high-order quadrature).
/// Bumpy bodies and `Bending` frames have no analytic section and are
/// rejected; planes that miss the center are rejected as well.
pub fn analytic_cross_section(
    spec: &PhantomSpec,
    plane: &ScanPlane,
    t: usize,
) -> Result<CrossSection, PhantomError> {
    spec.validate()?;
    if t >= spec.n_frames {
        return Err(PhantomError::FrameOutOfRange {
            index: t,
            n_frames: spec.n_frames,
        });
    }
    if spec.bumpy_seed.is_some() {
        return Err(PhantomError::UnsupportedSection(
            "bumpy bodies have no closed-form section".into(),
        ));
    }
    let max_semi = spec.semi_axes.iter().cloned().fold(0.0, f64::max);
    let offset = plane.signed_distance(&Point3::origin()).abs();
    if offset > 1e-9 * max_semi {
        return Err(PhantomError::OffCenterPlane { distance: offset });
    }

    let theta = spec.phase(t);
    let [a, b, c] = spec.semi_axes;
    match spec.motion {
        MotionModel::Bending => Err(PhantomError::UnsupportedSection(
            "bent frames have no closed-form section".into(),
        )),
        MotionModel::LinearStretch => {
            let f = stretch_fraction(theta, spec.amplitude_mm, c);
            Ok(ellipse_section(
                plane,
                &[a, b, c * (1.0 + f)],
            ))
        }
        MotionModel::SinusoidalRadial => {
            let drv = drivers(theta);
            if spec.amplitude_mm == 0.0 || drv.iter().all(|d| *d == 0.0) {
                return Ok(ellipse_section(plane, &spec.semi_axes));
            }
            Ok(star_section(plane, &spec.semi_axes, theta, spec.amplitude_mm))
        }
    }
}

/// Complete elliptic integral E(k) by the arithmetic-geometric mean:
/// with a₀ = 1, b₀ = √(1−k²), c₀ = k, E = K · (1 − Σ 2ⁿ⁻¹ cₙ²) and
/// K = π / (2·AGM(a₀, b₀)).
fn elliptic_e_by_agm(k: f64) -> f64 {
    let mut a = 1.0_f64;
    let mut b = (1.0 - k * k).max(0.0).sqrt();
    let mut c = k;
    let mut sum = 0.5 * c * c;
    let mut pow = 0.5;
    for _ in 0..64 {
        if c.abs() < 1e-17 {
            break;
        }
        let next_a = 0.5 * (a + b);
        let next_c = 0.5 * (a - b);
        b = (a * b).sqrt();
        a = next_a;
        c = next_c;
        pow *= 2.0;
        sum += pow * c * c;
    }
    let big_k = PI / (2.0 * a);
    big_k * (1.0 - sum)
}

/// Central section of an axis-aligned ellipsoid: solve the in-plane quadric
/// sᵀ (Qᵀ A Q) s = 1 with A = diag(1/a², 1/b², 1/c²).
fn ellipse_section(plane: &ScanPlane, semi: &[f64; 3]) -> CrossSection {
    let ax = plane.axis_x();
    let ay = plane.axis_y();
    let a2 = [semi[0] * semi[0], semi[1] * semi[1], semi[2] * semi[2]];
    let quad = |u: &Vector3<f64>, v: &Vector3<f64>| -> f64 {
        u.x * v.x / a2[0] + u.y * v.y / a2[1] + u.z * v.z / a2[2]
    };
    let m = Matrix2::new(quad(&ax, &ax), quad(&ax, &ay), quad(&ay, &ax), quad(&ay, &ay));
    let eig = nalgebra::SymmetricEigen::new(m);
    let (l0, l1) = (eig.eigenvalues[0], eig.eigenvalues[1]);
    let (lmin, lmax) = if l0 <= l1 { (l0, l1) } else { (l1, l0) };
    let major = 1.0 / lmin.sqrt();
    let minor = 1.0 / lmax.sqrt();
    let ecc = (1.0 - (minor / major) * (minor / major)).max(0.0).sqrt();
    CrossSection {
        perimeter: 4.0 * major * elliptic_e_by_agm(ecc),
        area: PI * major * minor,
    }
}

/// Radius of the deformed body along the in-plane direction at angle `phi`.
fn star_radius(
    plane: &ScanPlane,
    semi: &[f64; 3],
    theta: f64,
    amplitude: f64,
    phi: f64,
) -> f64 {
    let e = plane.axis_x() * phi.cos() + plane.axis_y() * phi.sin();
    let base = 1.0
        / (e.x * e.x / (semi[0] * semi[0])
            + e.y * e.y / (semi[1] * semi[1])
            + e.z * e.z / (semi[2] * semi[2]))
        .sqrt();
    // Sphere parameter of the base point r·e on the ellipsoid.
    let u = Vector3::new(e.x / semi[0], e.y / semi[1], e.z / semi[2]).normalize();
    base + radial_displacement(&u, theta, amplitude)
}

/// Perimeter and area of the star-shaped deformed section by periodic
/// quadrature: trapezoid sums over 65536 nodes with five-point-stencil
/// derivatives for the arc length integrand √(r² + r'²).
fn star_section(plane: &ScanPlane, semi: &[f64; 3], theta: f64, amplitude: f64) -> CrossSection {
    let n = 65536usize;
    let h = 2.0 * PI / n as f64;
    let r: Vec<f64> = (0..n)
        .map(|i| star_radius(plane, semi, theta, amplitude, h * i as f64))
        .collect();
    let mut perimeter = 0.0;
    let mut area = 0.0;
    for i in 0..n {
        let rp = (-r[(i + 2) % n] + 8.0 * r[(i + 1) % n] - 8.0 * r[(i + n - 1) % n]
            + r[(i + n - 2) % n])
            / (12.0 * h);
        perimeter += (r[i] * r[i] + rp * rp).sqrt() * h;
        area += 0.5 * r[i] * r[i] * h;
    }
    CrossSection { perimeter, area }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scanplane::slice_mesh;
    use crate::spca::pca;
    use crate::ssm::{center_normalize, shape_variation, Normalization};
    use approx::assert_relative_eq;
    use nalgebra::Point2;
    use std::collections::BTreeMap;

    fn xy_plane() -> ScanPlane {
        ScanPlane::from_parts(Point3::origin(), Vector3::x(), Vector3::y()).unwrap()
    }

    fn check_watertight_and_oriented(mesh: &TriangleMesh) {
        // Every directed edge must appear exactly once, and its reverse must
        // appear too: manifold, watertight, consistently oriented.
        let mut directed: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for tri in mesh.triangles() {
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                *directed.entry((a, b)).or_insert(0) += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            assert_eq!(count, 1, "directed edge ({a},{b}) appears {count} times");
            assert!(
                directed.contains_key(&(b, a)),
                "edge ({a},{b}) has no opposite-direction twin"
            );
        }
        // Closed genus-0 surface: F = 2V − 4.
        assert_eq!(mesh.triangles().len(), 2 * mesh.n_vertices() - 4);
        // Outward orientation: positive signed volume.
        let volume: f64 = mesh
            .triangles()
            .iter()
            .map(|t| {
                let (a, b, c) = (
                    mesh.vertices()[t[0]].coords,
                    mesh.vertices()[t[1]].coords,
                    mesh.vertices()[t[2]].coords,
                );
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum();
        assert!(volume > 0.0, "signed volume {volume} is not positive");
    }

    #[test]
    fn ellipsoid_mesh_has_exact_vertex_count_and_is_watertight() {
        for num_y in [8, 23, 150, 1002] {
            let mesh = ellipsoid_mesh(num_y, [30.0, 20.0, 15.0]).unwrap();
            assert_eq!(mesh.n_vertices(), num_y, "vertex count for num_y={num_y}");
            check_watertight_and_oriented(&mesh);
        }
    }

    #[test]
    fn fine_ellipsoid_volume_approaches_the_closed_form() {
        let (a, b, c) = (30.0, 20.0, 15.0);
        let mesh = ellipsoid_mesh(4002, [a, b, c]).unwrap();
        let volume: f64 = mesh
            .triangles()
            .iter()
            .map(|t| {
                let (p, q, r) = (
                    mesh.vertices()[t[0]].coords,
                    mesh.vertices()[t[1]].coords,
                    mesh.vertices()[t[2]].coords,
                );
                p.dot(&q.cross(&r)) / 6.0
            })
            .sum();
        let exact = 4.0 / 3.0 * PI * a * b * c;
        assert!(
            (volume - exact).abs() / exact < 0.01,
            "mesh volume {volume} vs {exact}"
        );
    }

    #[test]
    fn zero_amplitude_sequence_is_static() {
        let spec = PhantomSpec::default().with_amplitude(0.0).with_num_y(102).with_frames(5);
        let seq = generate(&spec).unwrap();
        for t in 1..seq.n_frames() {
            assert_eq!(seq.frame(t), seq.frame(0), "frame {t} differs");
        }
    }

    #[test]
    fn full_cycle_returns_to_the_first_frame() {
        let spec = PhantomSpec::default()
            .with_cycle(CyclePhase::Full)
            .with_num_y(102)
            .with_frames(9);
        let seq = generate(&spec).unwrap();
        let first = seq.frame(0);
        let last = seq.frame(seq.n_frames() - 1);
        for (p, q) in first.iter().zip(last) {
            assert_relative_eq!(p.coords, q.coords, epsilon = 1e-9);
        }
    }

    #[test]
    fn displacement_never_exceeds_the_amplitude() {
        let spec = PhantomSpec::default().with_num_y(402).with_frames(25);
        let seq = generate(&spec).unwrap();
        let base = ellipsoid_mesh(402, spec.semi_axes).unwrap();
        let mut max_disp = 0.0_f64;
        for t in 0..seq.n_frames() {
            for (p, q) in seq.frame(t).iter().zip(base.vertices()) {
                max_disp = max_disp.max((p - q).norm());
            }
        }
        assert!(
            max_disp < spec.amplitude_mm,
            "displacement {max_disp} reached amplitude {}",
            spec.amplitude_mm
        );
        assert!(max_disp > 0.5 * spec.amplitude_mm, "motion suspiciously small");
    }

    #[test]
    fn linear_stretch_frames_are_affine_in_one_driver() {
        let spec = PhantomSpec::default()
            .with_motion(MotionModel::LinearStretch)
            .with_num_y(102)
            .with_frames(7);
        let seq = generate(&spec).unwrap();
        let (normalized, _) =
            center_normalize(&seq.flatten().values, Normalization::Center).unwrap();
        let p = pca(&normalized).unwrap();
        assert!(
            p.singular_values[1] <= 1e-10 * p.singular_values[0],
            "second mode {} is not negligible against {}",
            p.singular_values[1],
            p.singular_values[0]
        );
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = PhantomSpec::default().with_num_y(150).with_frames(6).with_bumpy_seed(7);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn bumpy_radius_stays_within_ten_percent() {
        let smooth = ellipsoid_mesh(500, [30.0, 20.0, 15.0]).unwrap();
        let spec = PhantomSpec::default()
            .with_num_y(500)
            .with_frames(2)
            .with_amplitude(0.0)
            .with_bumpy_seed(99);
        let bumpy = generate(&spec).unwrap();
        for (p, q) in bumpy.frame(0).iter().zip(smooth.vertices()) {
            let ratio = p.coords.norm() / q.coords.norm();
            assert!(
                (0.9..=1.1).contains(&ratio),
                "radius ratio {ratio} outside ±10%"
            );
        }
    }

    #[test]
    fn amplitude_must_stay_below_a_quarter_of_the_smallest_semi_axis() {
        let spec = PhantomSpec::default().with_amplitude(3.75);
        assert!(matches!(
            generate(&spec),
            Err(PhantomError::InvalidSpec(_))
        ));
        let spec = PhantomSpec::default().with_amplitude(3.74);
        assert!(generate(&spec).is_ok());
    }

    #[test]
    fn shape_variation_matches_the_generator_formula() {
        let spec = PhantomSpec::default().with_num_y(302).with_frames(9);
        let seq = generate(&spec).unwrap();
        let (dirs, _) = sphere_directions(302);
        for t in 1..seq.n_frames() - 1 {
            let expected: f64 = dirs
                .iter()
                .map(|u| {
                    (radial_displacement(u, spec.phase(t + 1), spec.amplitude_mm)
                        - radial_displacement(u, spec.phase(t - 1), spec.amplitude_mm))
                    .abs()
                })
                .sum::<f64>()
                / dirs.len() as f64;
            let got = shape_variation(&seq, t).unwrap();
            assert_relative_eq!(got, expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn undeformed_central_sections_are_exact_ellipses() {
        let spec = PhantomSpec::default().with_amplitude(0.0);
        // z = 0 section: ellipse with semi-axes (30, 20).
        let s = analytic_cross_section(&spec, &xy_plane(), 0).unwrap();
        assert_relative_eq!(s.area, PI * 30.0 * 20.0, epsilon = 1e-9);
        // AGM perimeter against the polyline oracle.
        let oracle = polyline_oracle(|phi| {
            let (c, sn) = (phi.cos(), phi.sin());
            1.0 / (c * c / 900.0 + sn * sn / 400.0).sqrt()
        });
        assert_relative_eq!(s.perimeter, oracle.perimeter, epsilon = 1e-7);
        assert_relative_eq!(s.area, oracle.area, epsilon = 1e-7);

        // A circle section of a sphere for the closed form 2πr.
        let sphere = PhantomSpec {
            semi_axes: [10.0, 10.0, 10.0],
            amplitude_mm: 0.0,
            ..PhantomSpec::default()
        };
        let s = analytic_cross_section(&sphere, &xy_plane(), 0).unwrap();
        assert_relative_eq!(s.perimeter, 2.0 * PI * 10.0, epsilon = 1e-10);
        assert_relative_eq!(s.area, PI * 100.0, epsilon = 1e-10);
    }

    /// Dense polyline reference: perimeter by chord sums, area by shoelace.
    fn polyline_oracle(radius: impl Fn(f64) -> f64) -> CrossSection {
        let n = 1_000_000usize;
        let mut pts = Vec::with_capacity(n);
        for i in 0..n {
            let phi = 2.0 * PI * i as f64 / n as f64;
            let r = radius(phi);
            pts.push(Point2::new(r * phi.cos(), r * phi.sin()));
        }
        let mut perimeter = 0.0;
        let mut area = 0.0;
        for i in 0..n {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            perimeter += (b - a).norm();
            area += 0.5 * (a.x * b.y - b.x * a.y);
        }
        CrossSection { perimeter, area }
    }

    #[test]
    fn deformed_section_matches_a_dense_polyline_oracle() {
        let spec = PhantomSpec::default();
        let t = 7; // mid-cycle, all drivers active
        let plane = xy_plane();
        let got = analytic_cross_section(&spec, &plane, t).unwrap();
        let theta = spec.phase(t);
        let oracle = polyline_oracle(|phi| {
            star_radius(&plane, &spec.semi_axes, theta, spec.amplitude_mm, phi)
        });
        assert_relative_eq!(
            got.perimeter,
            oracle.perimeter,
            max_relative = 1e-8
        );
        assert_relative_eq!(got.area, oracle.area, max_relative = 1e-8);
    }

    #[test]
    fn stretch_section_by_a_transverse_plane_tracks_the_stretch() {
        let spec = PhantomSpec::default()
            .with_motion(MotionModel::LinearStretch)
            .with_frames(5);
        // Plane x = 0, containing the stretched z axis: section semi-axes
        // are (b, c·(1+f)).
        let plane =
            ScanPlane::from_parts(Point3::origin(), Vector3::y(), Vector3::z()).unwrap();
        let last = spec.n_frames - 1;
        let s = analytic_cross_section(&spec, &plane, last).unwrap();
        let f = stretch_fraction(spec.phase(last), spec.amplitude_mm, spec.semi_axes[2]);
        assert_relative_eq!(
            s.area,
            PI * spec.semi_axes[1] * spec.semi_axes[2] * (1.0 + f),
            epsilon = 1e-9
        );
        assert!(f > 0.2, "stretch driver unexpectedly small: {f}");
    }

    #[test]
    fn analytic_section_rejects_unsupported_cases() {
        let spec = PhantomSpec::default();
        // Off-center plane.
        let off = ScanPlane::from_parts(Point3::new(0.0, 0.0, 1.0), Vector3::x(), Vector3::y())
            .unwrap();
        assert!(matches!(
            analytic_cross_section(&spec, &off, 0),
            Err(PhantomError::OffCenterPlane { .. })
        ));
        // Bumpy base.
        let bumpy = spec.clone().with_bumpy_seed(1);
        assert!(matches!(
            analytic_cross_section(&bumpy, &xy_plane(), 0),
            Err(PhantomError::UnsupportedSection(_))
        ));
        // Bent frames.
        let bent = PhantomSpec::default().with_motion(MotionModel::Bending);
        assert!(matches!(
            analytic_cross_section(&bent, &xy_plane(), 1),
            Err(PhantomError::UnsupportedSection(_))
        ));
        // Frame out of range.
        assert!(matches!(
            analytic_cross_section(&spec, &xy_plane(), 20),
            Err(PhantomError::FrameOutOfRange { .. })
        ));
    }

    #[test]
    fn sliced_phantom_perimeter_approaches_the_analytic_value() {
        // End-to-end: slice the generated frame and compare against the
        // analytic section of the same frame.
        let spec = PhantomSpec::default().with_num_y(2502);
        let seq = generate(&spec).unwrap();
        let t = 11;
        let truth = analytic_cross_section(&spec, &xy_plane(), t).unwrap();
        let slice = slice_mesh(&seq.mesh(t).unwrap(), &xy_plane()).unwrap();
        let rel = (slice.contour.perimeter() - truth.perimeter).abs() / truth.perimeter;
        assert!(
            rel < 0.005,
            "sliced perimeter off by {rel} relative ({} vs {})",
            slice.contour.perimeter(),
            truth.perimeter
        );
    }

    #[test]
    fn driver_mix_stays_below_the_normalizer() {
        let mut sup = 0.0_f64;
        for i in 0..200_000 {
            let theta = 2.0 * PI * i as f64 / 200_000.0;
            let c = drivers(theta);
            sup = sup.max(c[0] + c[1] + c[2]);
            sup = sup.max(-c[0] + c[1] + c[2]); // sin flips sign on 2nd half
        }
        assert!(
            sup < DRIVER_NORMALIZER,
            "driver mix reaches {sup}, normalizer {DRIVER_NORMALIZER}"
        );
    }
}
