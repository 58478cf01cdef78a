//! Scan-plane geometry: fitting a plane to weighted vertex clouds, slicing
//! triangle meshes with it, and resampling the cut into a fixed-size contour.
//!
//! A [`ScanPlane`] is an oriented 2D coordinate frame in 3D: an origin and
//! two orthonormal in-plane axes. Its normal is `axis_x × axis_y`, so the
//! triple (axis_x, axis_y, normal) is right-handed, and projected contours
//! live in a well-defined (x, y) system — the object-space anchor that makes
//! downstream regression registration-free.
//!
//! [`fit_weighted_plane`] minimizes the weighted sum of squared
//! point-to-plane distances (total least squares: weighted centroid plus the
//! smallest-variance eigenvector of the weighted covariance).
//! [`slice_mesh`] intersects a mesh with a plane and returns the dominant
//! closed cross-section; [`resample_contour`] redistributes its vertices
//! uniformly by arc length so every frame yields the same contour
//! parameterization.

use crate::ssm::{ContourSequence2D, ShapeSequence3D, TriangleMesh};
use nalgebra::{Matrix3, Point2, Point3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScanPlaneError {
    #[error("plane fit needs at least 3 points with positive weight, found {found}")]
    NotEnoughWeightedPoints { found: usize },
    #[error("weighted points are degenerate (coincident or collinear), plane is ambiguous")]
    DegeneratePointCloud,
    #[error("{points} points but {weights} weights")]
    WeightCountMismatch { points: usize, weights: usize },
    #[error("weight {index} is negative or not finite")]
    InvalidWeight { index: usize },
    #[error("plane axes are not an orthonormal pair: {detail}")]
    NotOrthonormal { detail: String },
    #[error("plane does not intersect the mesh")]
    EmptyIntersection,
    #[error("slice produced only degenerate fragments")]
    DegenerateSlice,
    #[error("contour resampling needs at least 4 samples, requested {requested}")]
    TooFewSamples { requested: usize },
    #[error("contour is degenerate: {detail}")]
    DegenerateContour { detail: String },
    #[error("contour is not closed, cannot resample")]
    NotClosed,
    #[error("frame {frame}: {source}")]
    FrameSlice {
        frame: usize,
        source: Box<ScanPlaneError>,
    },
    #[error("frame {frame}: slice is not a closed loop")]
    OpenSliceAtFrame { frame: usize },
}

/// An oriented scan plane: origin plus orthonormal in-plane axes. The normal
/// is `axis_x × axis_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPlane {
    origin: Point3<f64>,
    axis_x: Vector3<f64>,
    axis_y: Vector3<f64>,
}

impl ScanPlane {
    /// Build from raw parts, validating that the axes are unit length and
    /// mutually orthogonal (within 1e-9).
    pub fn from_parts(
        origin: Point3<f64>,
        axis_x: Vector3<f64>,
        axis_y: Vector3<f64>,
    ) -> Result<Self, ScanPlaneError> {
        for (name, v) in [("axis_x", &axis_x), ("axis_y", &axis_y)] {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(ScanPlaneError::NotOrthonormal {
                    detail: format!("{name} has non-finite components"),
                });
            }
            if (v.norm() - 1.0).abs() > 1e-9 {
                return Err(ScanPlaneError::NotOrthonormal {
                    detail: format!("{name} has norm {}", v.norm()),
                });
            }
        }
        if axis_x.dot(&axis_y).abs() > 1e-9 {
            return Err(ScanPlaneError::NotOrthonormal {
                detail: format!("axes have dot product {}", axis_x.dot(&axis_y)),
            });
        }
        if !origin.coords.iter().all(|c| c.is_finite()) {
            return Err(ScanPlaneError::NotOrthonormal {
                detail: "origin has non-finite components".into(),
            });
        }
        Ok(Self {
            origin,
            axis_x,
            axis_y,
        })
    }

    pub fn origin(&self) -> Point3<f64> {
        self.origin
    }

    pub fn axis_x(&self) -> Vector3<f64> {
        self.axis_x
    }

    pub fn axis_y(&self) -> Vector3<f64> {
        self.axis_y
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.axis_x.cross(&self.axis_y)
    }

    /// In-plane coordinates of a 3D point (its normal offset is dropped).
    pub fn project(&self, p: &Point3<f64>) -> Point2<f64> {
        let d = p - self.origin;
        Point2::new(d.dot(&self.axis_x), d.dot(&self.axis_y))
    }

    /// The 3D position of in-plane coordinates.
    pub fn unproject(&self, q: &Point2<f64>) -> Point3<f64> {
        self.origin + self.axis_x * q.x + self.axis_y * q.y
    }

    /// Distance along the normal, signed.
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        (p - self.origin).dot(&self.normal())
    }
}

/// Fit the plane minimizing `Σ wᵢ · dist(pᵢ, plane)²`: origin at the
/// weighted centroid, normal along the smallest-variance direction of the
/// weighted covariance. The normal's largest-magnitude component is made
/// positive; `axis_x` is the in-plane projection of the global x axis
/// (global y if the normal is nearly parallel to x), `axis_y` completes the
/// right-handed triple.
pub fn fit_weighted_plane(
    points: &[Point3<f64>],
    weights: &[f64],
) -> Result<ScanPlane, ScanPlaneError> {
    if points.len() != weights.len() {
        return Err(ScanPlaneError::WeightCountMismatch {
            points: points.len(),
            weights: weights.len(),
        });
    }
    for (i, w) in weights.iter().enumerate() {
        if !w.is_finite() || *w < 0.0 {
            return Err(ScanPlaneError::InvalidWeight { index: i });
        }
    }
    let positive = weights.iter().filter(|w| **w > 0.0).count();
    if positive < 3 {
        return Err(ScanPlaneError::NotEnoughWeightedPoints { found: positive });
    }
    let total: f64 = weights.iter().sum();
    let mut centroid = Vector3::zeros();
    for (p, &w) in points.iter().zip(weights) {
        centroid += p.coords * w;
    }
    centroid /= total;

    let mut cov = Matrix3::zeros();
    for (p, &w) in points.iter().zip(weights) {
        let d = p.coords - centroid;
        cov += d * d.transpose() * w;
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("finite eigenvalues")
    });
    let lambda_max = eig.eigenvalues[order[2]].max(0.0);
    let lambda_mid = eig.eigenvalues[order[1]].max(0.0);
    if lambda_max <= 0.0 || lambda_mid <= 1e-8 * lambda_max {
        return Err(ScanPlaneError::DegeneratePointCloud);
    }

    let mut normal = eig.eigenvectors.column(order[0]).clone_owned();
    let mut best = 0.0;
    let mut sign = 1.0;
    for c in normal.iter() {
        if c.abs() > best {
            best = c.abs();
            sign = c.signum();
        }
    }
    if sign < 0.0 {
        normal.neg_mut();
    }
    normal.normalize_mut();

    let (axis_x, axis_y) = in_plane_axes(&normal);
    ScanPlane::from_parts(Point3::from(centroid), axis_x, axis_y)
}

/// Deterministic in-plane axes for a unit normal: project global x onto the
/// plane (global y when the normal is nearly parallel to x), complete with
/// the cross product so `axis_x × axis_y = normal`.
fn in_plane_axes(normal: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let mut axis_x = Vector3::x() - normal * normal.x;
    if axis_x.norm() < 1e-8 {
        axis_x = Vector3::y() - normal * normal.y;
    }
    axis_x.normalize_mut();
    let axis_y = normal.cross(&axis_x);
    (axis_x, axis_y)
}

/// Residual summaries of a plane against a weighted cloud: weighted mean
/// squared and weighted mean absolute point-to-plane distance. The squared
/// form is what [`fit_weighted_plane`] minimizes; the absolute form is
/// reported alongside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneObjectives {
    pub weighted_squared: f64,
    pub weighted_absolute: f64,
}

pub fn plane_objectives(
    plane: &ScanPlane,
    points: &[Point3<f64>],
    weights: &[f64],
) -> Result<PlaneObjectives, ScanPlaneError> {
    if points.len() != weights.len() {
        return Err(ScanPlaneError::WeightCountMismatch {
            points: points.len(),
            weights: weights.len(),
        });
    }
    for (i, w) in weights.iter().enumerate() {
        if !w.is_finite() || *w < 0.0 {
            return Err(ScanPlaneError::InvalidWeight { index: i });
        }
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(ScanPlaneError::NotEnoughWeightedPoints { found: 0 });
    }
    let mut squared = 0.0;
    let mut absolute = 0.0;
    for (p, &w) in points.iter().zip(weights) {
        let d = plane.signed_distance(p);
        squared += w * d * d;
        absolute += w * d.abs();
    }
    Ok(PlaneObjectives {
        weighted_squared: squared / total,
        weighted_absolute: absolute / total,
    })
}

/// An intrinsic plane perturbation: rotations about the plane's own x and y
/// axes (degrees) followed by a translation along the rotated normal (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanePerturbation {
    pub rx_deg: f64,
    pub ry_deg: f64,
    pub tz_mm: f64,
}

impl PlanePerturbation {
    pub fn new(rx_deg: f64, ry_deg: f64, tz_mm: f64) -> Self {
        Self {
            rx_deg,
            ry_deg,
            tz_mm,
        }
    }

    /// The 13-pose sweep used by the robustness study: the baseline plus
    /// ±3 and ±6 on each of the three degrees of freedom.
    pub fn axis_sweep_preset() -> Vec<PlanePerturbation> {
        let mut out = vec![PlanePerturbation::new(0.0, 0.0, 0.0)];
        for mag in [3.0, 6.0] {
            for s in [1.0, -1.0] {
                out.push(PlanePerturbation::new(s * mag, 0.0, 0.0));
            }
        }
        for mag in [3.0, 6.0] {
            for s in [1.0, -1.0] {
                out.push(PlanePerturbation::new(0.0, s * mag, 0.0));
            }
        }
        for mag in [3.0, 6.0] {
            for s in [1.0, -1.0] {
                out.push(PlanePerturbation::new(0.0, 0.0, s * mag));
            }
        }
        out
    }

    /// Short human-readable tag, e.g. `baseline`, `rx+3deg`, `tz-6mm`.
    pub fn label(&self) -> String {
        if self.rx_deg == 0.0 && self.ry_deg == 0.0 && self.tz_mm == 0.0 {
            return "baseline".to_string();
        }
        let mut parts = Vec::new();
        if self.rx_deg != 0.0 {
            parts.push(format!("rx{:+}deg", self.rx_deg));
        }
        if self.ry_deg != 0.0 {
            parts.push(format!("ry{:+}deg", self.ry_deg));
        }
        if self.tz_mm != 0.0 {
            parts.push(format!("tz{:+}mm", self.tz_mm));
        }
        parts.join("_")
    }
}

fn rot_x(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Apply an intrinsic perturbation: with Q = [axis_x axis_y normal], the new
/// frame is Q·Rx(rx)·Ry(ry) and the origin moves by tz along the *new*
/// normal. A perturbation is undone exactly by the reversed sequence of
/// single-axis inverses: (0,0,−tz), then (0,−ry,0), then (−rx,0,0).
pub fn perturb_plane(plane: &ScanPlane, p: &PlanePerturbation) -> ScanPlane {
    let q = Matrix3::from_columns(&[plane.axis_x, plane.axis_y, plane.normal()]);
    let rotated = q * rot_x(p.rx_deg.to_radians()) * rot_y(p.ry_deg.to_radians());
    let axis_x: Vector3<f64> = rotated.column(0).into();
    let axis_y: Vector3<f64> = rotated.column(1).into();
    let normal: Vector3<f64> = rotated.column(2).into();
    ScanPlane {
        origin: plane.origin + normal * p.tz_mm,
        axis_x: axis_x.normalize(),
        axis_y: axis_y.normalize(),
    }
}

/// A single planar polyline in scan-plane coordinates. Closed contours wrap
/// around from the last vertex back to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarContour {
    pub vertices: Vec<Point2<f64>>,
    pub closed: bool,
}

impl PlanarContour {
    pub fn perimeter(&self) -> f64 {
        let n = self.vertices.len();
        if n < 2 {
            return 0.0;
        }
        let wrap = if self.closed { n } else { n - 1 };
        (0..wrap)
            .map(|i| (self.vertices[(i + 1) % n] - self.vertices[i]).norm())
            .sum()
    }

    /// Signed area (shoelace); positive for counter-clockwise closed
    /// contours.
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        if !self.closed || n < 3 {
            return 0.0;
        }
        0.5 * (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
    }
}

/// Result of slicing a mesh: the dominant cross-section plus the number of
/// other disconnected slice components that were discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceResult {
    pub contour: PlanarContour,
    pub discarded_loops: usize,
}

/// Key identifying where an intersection point came from, so points shared
/// between adjacent triangles match exactly during chaining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum CutKey {
    Vertex(usize),
    Edge(usize, usize),
}

/// Intersect a triangle mesh with a plane. Vertices on the plane
/// (signed distance exactly 0) count as the positive side; every edge whose
/// endpoints land on opposite sides contributes one intersection point, and
/// the resulting segments are chained topologically (shared mesh edges, not
/// coordinate proximity). The largest-perimeter closed loop is projected to
/// plane coordinates and returned counter-clockwise. An open chain is
/// returned (flagged `closed: false`) only when no closed loop exists.
pub fn slice_mesh(mesh: &TriangleMesh, plane: &ScanPlane) -> Result<SliceResult, ScanPlaneError> {
    let vertices = mesh.vertices();
    let distances: Vec<f64> = vertices.iter().map(|v| plane.signed_distance(v)).collect();
    let side: Vec<bool> = distances.iter().map(|&d| d >= 0.0).collect();

    let mut key_to_index: std::collections::BTreeMap<CutKey, usize> = Default::default();
    let mut points: Vec<Point3<f64>> = Vec::new();
    let mut segments: Vec<[usize; 2]> = Vec::new();

    let mut cut_point = |a: usize, b: usize| -> usize {
        // Order so the positive-side endpoint comes first.
        let (pos, neg) = if side[a] { (a, b) } else { (b, a) };
        let key = if distances[pos] == 0.0 {
            CutKey::Vertex(pos)
        } else {
            CutKey::Edge(pos.min(neg), pos.max(neg))
        };
        *key_to_index.entry(key).or_insert_with(|| {
            let t = distances[pos] / (distances[pos] - distances[neg]);
            points.push(vertices[pos] + (vertices[neg] - vertices[pos]) * t);
            points.len() - 1
        })
    };

    for tri in mesh.triangles() {
        let mut cuts = Vec::with_capacity(2);
        for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
            if side[a] != side[b] {
                cuts.push(cut_point(a, b));
            }
        }
        if cuts.len() == 2 && cuts[0] != cuts[1] {
            segments.push([cuts[0], cuts[1]]);
        }
    }
    if segments.is_empty() {
        return Err(ScanPlaneError::EmptyIntersection);
    }

    // Adjacency: point index -> incident segments.
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); points.len()];
    for (s, seg) in segments.iter().enumerate() {
        incident[seg[0]].push(s);
        incident[seg[1]].push(s);
    }

    let mut used = vec![false; segments.len()];
    let mut components: Vec<(Vec<usize>, bool)> = Vec::new();
    for seed in 0..segments.len() {
        if used[seed] {
            continue;
        }
        used[seed] = true;
        let mut path = vec![segments[seed][0], segments[seed][1]];
        let mut closed = false;
        // Extend forward from the back, then backward from the front.
        loop {
            let tail = *path.last().expect("path starts with two points");
            let next = incident[tail].iter().copied().find(|&s| !used[s]);
            match next {
                Some(s) => {
                    used[s] = true;
                    let nxt = if segments[s][0] == tail {
                        segments[s][1]
                    } else {
                        segments[s][0]
                    };
                    if nxt == path[0] {
                        closed = true;
                        break;
                    }
                    path.push(nxt);
                }
                None => break,
            }
        }
        if !closed {
            loop {
                let head = path[0];
                let next = incident[head].iter().copied().find(|&s| !used[s]);
                match next {
                    Some(s) => {
                        used[s] = true;
                        let nxt = if segments[s][0] == head {
                            segments[s][1]
                        } else {
                            segments[s][0]
                        };
                        path.insert(0, nxt);
                    }
                    None => break,
                }
            }
        }
        components.push((path, closed));
    }

    // Collapse nearly-coincident consecutive points (sliver triangles).
    let bbox_diag = bounding_diagonal(vertices);
    let eps = 1e-9 * bbox_diag.max(1e-300);
    let mut cleaned: Vec<(Vec<Point3<f64>>, bool)> = Vec::new();
    for (path, closed) in components {
        let mut pts: Vec<Point3<f64>> = Vec::with_capacity(path.len());
        for &i in &path {
            if pts.last().map_or(true, |last| (points[i] - last).norm() > eps) {
                pts.push(points[i]);
            }
        }
        if closed && pts.len() > 1 {
            if (pts[0] - pts[pts.len() - 1]).norm() <= eps {
                pts.pop();
            }
        }
        let enough = if closed { pts.len() >= 3 } else { pts.len() >= 2 };
        if enough {
            cleaned.push((pts, closed));
        }
    }
    if cleaned.is_empty() {
        return Err(ScanPlaneError::DegenerateSlice);
    }

    let perimeter3 = |pts: &[Point3<f64>], closed: bool| -> f64 {
        let n = pts.len();
        let wrap = if closed { n } else { n - 1 };
        (0..wrap).map(|i| (pts[(i + 1) % n] - pts[i]).norm()).sum()
    };
    // Prefer closed loops; among them take the longest perimeter.
    let any_closed = cleaned.iter().any(|(_, c)| *c);
    let mut best: Option<(f64, usize)> = None;
    for (i, (pts, closed)) in cleaned.iter().enumerate() {
        if any_closed && !closed {
            continue;
        }
        let p = perimeter3(pts, *closed);
        if best.map_or(true, |(bp, _)| p > bp) {
            best = Some((p, i));
        }
    }
    let (_, keep) = best.expect("at least one component survives cleaning");
    let discarded_loops = cleaned.len() - 1;
    let (pts, closed) = &cleaned[keep];

    let mut projected: Vec<Point2<f64>> = pts.iter().map(|p| plane.project(p)).collect();
    let mut contour = PlanarContour {
        vertices: projected.clone(),
        closed: *closed,
    };
    if *closed && contour.signed_area() < 0.0 {
        projected[1..].reverse();
        contour.vertices = projected;
    }
    Ok(SliceResult {
        contour,
        discarded_loops,
    })
}

fn bounding_diagonal(vertices: &[Point3<f64>]) -> f64 {
    let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for v in vertices {
        for k in 0..3 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    (hi - lo).norm()
}

/// Resample a closed contour to exactly `num_x` vertices, uniformly spaced
/// by arc length, starting at the vertex with maximal x (ties broken by
/// maximal y) and walking in the contour's stored orientation. Resampling an
/// already-uniform `num_x`-gon reproduces its vertices.
pub fn resample_contour(
    contour: &PlanarContour,
    num_x: usize,
) -> Result<PlanarContour, ScanPlaneError> {
    if !contour.closed {
        return Err(ScanPlaneError::NotClosed);
    }
    if num_x < 4 {
        return Err(ScanPlaneError::TooFewSamples { requested: num_x });
    }
    // Drop exact consecutive duplicates (including last == first).
    let mut verts: Vec<Point2<f64>> = Vec::with_capacity(contour.vertices.len());
    for &v in &contour.vertices {
        if verts.last() != Some(&v) {
            verts.push(v);
        }
    }
    if verts.len() > 1 && verts.first() == verts.last() {
        verts.pop();
    }
    if verts.len() < 3 {
        return Err(ScanPlaneError::DegenerateContour {
            detail: format!("{} distinct vertices", verts.len()),
        });
    }

    // Anchor: maximal x, ties by maximal y.
    let mut anchor = 0;
    for (i, v) in verts.iter().enumerate() {
        let best = verts[anchor];
        if v.x > best.x || (v.x == best.x && v.y > best.y) {
            anchor = i;
        }
    }
    verts.rotate_left(anchor);

    let n = verts.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for i in 0..n {
        let len = (verts[(i + 1) % n] - verts[i]).norm();
        prefix.push(prefix[i] + len);
    }
    let total = prefix[n];
    if total <= 0.0 {
        return Err(ScanPlaneError::DegenerateContour {
            detail: "zero perimeter".into(),
        });
    }

    let mut out = Vec::with_capacity(num_x);
    let mut edge = 0usize;
    for k in 0..num_x {
        let s = total * k as f64 / num_x as f64;
        while edge + 1 < n && prefix[edge + 1] <= s {
            edge += 1;
        }
        let len = prefix[edge + 1] - prefix[edge];
        let t = if len > 0.0 { (s - prefix[edge]) / len } else { 0.0 };
        let a = verts[edge];
        let b = verts[(edge + 1) % n];
        out.push(if t == 0.0 { a } else { a + (b - a) * t });
    }
    Ok(PlanarContour {
        vertices: out,
        closed: true,
    })
}

/// Slice every frame of a mesh sequence with one plane and resample each cut
/// to `num_x` vertices, producing the synchronized 2D contour sequence.
/// Every frame must yield a closed cross-section; failures name the frame.
pub fn build_contour_sequence(
    sequence: &ShapeSequence3D,
    plane: &ScanPlane,
    num_x: usize,
) -> Result<ContourSequence2D, ScanPlaneError> {
    let mut frames = Vec::with_capacity(sequence.n_frames());
    for t in 0..sequence.n_frames() {
        let mesh = sequence
            .mesh(t)
            .expect("frame index ranges over n_frames");
        let slice = slice_mesh(&mesh, plane).map_err(|e| ScanPlaneError::FrameSlice {
            frame: t,
            source: Box::new(e),
        })?;
        if !slice.contour.closed {
            return Err(ScanPlaneError::OpenSliceAtFrame { frame: t });
        }
        let resampled = resample_contour(&slice.contour, num_x)
            .map_err(|e| ScanPlaneError::FrameSlice {
                frame: t,
                source: Box::new(e),
            })?;
        frames.push(resampled.vertices);
    }
    ContourSequence2D::new(frames, true).map_err(|_| ScanPlaneError::DegenerateSlice)
}
