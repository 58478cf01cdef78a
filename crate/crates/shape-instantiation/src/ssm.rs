//! Statistical shape model plumbing: synchronized sequences of corresponded
//! 3D meshes and 2D contours, their design-matrix form, and the distance
//! metrics the validation harness is built on.
//!
//! A sequence holds one frame per time point. Every frame has the same
//! vertex count and vertex `i` corresponds across frames; 3D sequences share
//! one triangle list. Design matrices are one row per frame with vertex
//! coordinates interleaved (`x1,y1,z1,x2,…` resp. `x1,y1,x2,…`), so column
//! order is a pure function of vertex index.

use nalgebra::{DMatrix, DVector, Point2, Point3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SsmError {
    #[error("sequence contains no frames")]
    EmptySequence,
    #[error("frame {frame} has {found} vertices, expected {expected} (ragged sequence)")]
    RaggedFrames {
        frame: usize,
        expected: usize,
        found: usize,
    },
    #[error("triangle {triangle} references vertex {vertex}, but frames have {num_vertices} vertices")]
    InvalidTriangle {
        triangle: usize,
        vertex: usize,
        num_vertices: usize,
    },
    #[error("vertex counts differ: {left} vs {right}")]
    VertexCountMismatch { left: usize, right: usize },
    #[error("frame {index} has no two-sided neighborhood in a {n_frames}-frame sequence")]
    NotInterior { index: usize, n_frames: usize },
    #[error("row length {len} is not divisible by the {stride}-coordinate vertex stride")]
    BadRowStride { len: usize, stride: usize },
    #[error("need at least {needed} frames, found {found}")]
    TooFewFrames { needed: usize, found: usize },
    #[error("stats were built for {expected} columns, matrix has {found}")]
    ColumnCountMismatch { expected: usize, found: usize },
    #[error("design matrix has {cols} columns but its layout declares {expected}")]
    LayoutMismatch { cols: usize, expected: usize },
    #[error("mesh has no vertices")]
    EmptyMesh,
    #[error("frame {frame} has a different triangle list than frame 0")]
    ConnectivityMismatch { frame: usize },
    #[error("frame index {index} out of range, sequence has {n_frames} frames")]
    FrameOutOfRange { index: usize, n_frames: usize },
}

/// One triangle mesh: vertex positions plus a shared 0-based triangle list.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Vertices must be non-empty; triangle indices must be in range. An
    /// empty triangle list is allowed (a bare point set).
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self, SsmError> {
        if vertices.is_empty() {
            return Err(SsmError::EmptyMesh);
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= vertices.len() {
                    return Err(SsmError::InvalidTriangle {
                        triangle: t,
                        vertex: v,
                        num_vertices: vertices.len(),
                    });
                }
            }
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }
}

/// Corresponded triangle meshes of one deforming body, one mesh per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSequence3D {
    frames: Vec<Vec<Point3<f64>>>,
    connectivity: Vec<[usize; 3]>,
}

impl ShapeSequence3D {
    /// Frames must be non-empty and rectangular; triangle indices must be in
    /// range. Connectivity is shared by every frame.
    pub fn new(
        frames: Vec<Vec<Point3<f64>>>,
        connectivity: Vec<[usize; 3]>,
    ) -> Result<Self, SsmError> {
        let num_vertices = check_rectangular(&frames)?;
        for (t, tri) in connectivity.iter().enumerate() {
            for &v in tri {
                if v >= num_vertices {
                    return Err(SsmError::InvalidTriangle {
                        triangle: t,
                        vertex: v,
                        num_vertices,
                    });
                }
            }
        }
        Ok(Self {
            frames,
            connectivity,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.frames[0].len()
    }

    pub fn frames(&self) -> &[Vec<Point3<f64>>] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &[Point3<f64>] {
        &self.frames[t]
    }

    pub fn connectivity(&self) -> &[[usize; 3]] {
        &self.connectivity
    }

    /// One row per frame, columns `x1,y1,z1,x2,y2,z2,…`.
    pub fn flatten(&self) -> DesignMatrix {
        let num_vertices = self.n_vertices();
        let values = DMatrix::from_fn(self.n_frames(), 3 * num_vertices, |r, c| {
            self.frames[r][c / 3][c % 3]
        });
        DesignMatrix {
            values,
            layout: VertexLayout::Xyz { num_vertices },
        }
    }

    /// Inverse of [`ShapeSequence3D::flatten`]; bit-exact round trip.
    pub fn from_design(
        design: &DesignMatrix,
        connectivity: Vec<[usize; 3]>,
    ) -> Result<Self, SsmError> {
        design.check_layout()?;
        let frames = (0..design.values.nrows())
            .map(|r| {
                let row: Vec<f64> = design.values.row(r).iter().copied().collect();
                vertices_from_row3(&row)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(frames, connectivity)
    }

    /// The mesh of one frame, with the shared connectivity.
    pub fn mesh(&self, t: usize) -> Result<TriangleMesh, SsmError> {
        if t >= self.n_frames() {
            return Err(SsmError::FrameOutOfRange {
                index: t,
                n_frames: self.n_frames(),
            });
        }
        TriangleMesh::new(self.frames[t].clone(), self.connectivity.clone())
    }

    /// Assemble a sequence from per-frame meshes that must all share one
    /// triangle list.
    pub fn from_meshes(meshes: &[TriangleMesh]) -> Result<Self, SsmError> {
        let first = meshes.first().ok_or(SsmError::EmptySequence)?;
        for (t, mesh) in meshes.iter().enumerate().skip(1) {
            if mesh.triangles != first.triangles {
                return Err(SsmError::ConnectivityMismatch { frame: t });
            }
        }
        Self::new(
            meshes.iter().map(|m| m.vertices.clone()).collect(),
            first.triangles.clone(),
        )
    }
}

/// Corresponded planar contours, one per frame, in scan-plane coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourSequence2D {
    frames: Vec<Vec<Point2<f64>>>,
    closed: bool,
}

impl ContourSequence2D {
    pub fn new(frames: Vec<Vec<Point2<f64>>>, closed: bool) -> Result<Self, SsmError> {
        check_rectangular(&frames)?;
        Ok(Self { frames, closed })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.frames[0].len()
    }

    pub fn frames(&self) -> &[Vec<Point2<f64>>] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &[Point2<f64>] {
        &self.frames[t]
    }

    pub fn closed(&self) -> bool {
        self.closed
    }

    /// One row per frame, columns `x1,y1,x2,y2,…`.
    pub fn flatten(&self) -> DesignMatrix {
        let num_vertices = self.n_vertices();
        let values = DMatrix::from_fn(self.n_frames(), 2 * num_vertices, |r, c| {
            self.frames[r][c / 2][c % 2]
        });
        DesignMatrix {
            values,
            layout: VertexLayout::Xy { num_vertices },
        }
    }

    /// Inverse of [`ContourSequence2D::flatten`]; bit-exact round trip.
    pub fn from_design(design: &DesignMatrix, closed: bool) -> Result<Self, SsmError> {
        design.check_layout()?;
        let frames = (0..design.values.nrows())
            .map(|r| {
                let row: Vec<f64> = design.values.row(r).iter().copied().collect();
                vertices_from_row2(&row)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(frames, closed)
    }
}

fn check_rectangular<P>(frames: &[Vec<P>]) -> Result<usize, SsmError> {
    let first = frames.first().ok_or(SsmError::EmptySequence)?;
    let expected = first.len();
    if expected == 0 {
        return Err(SsmError::EmptySequence);
    }
    for (i, f) in frames.iter().enumerate() {
        if f.len() != expected {
            return Err(SsmError::RaggedFrames {
                frame: i,
                expected,
                found: f.len(),
            });
        }
    }
    Ok(expected)
}

/// Column ordering of a flattened sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "num_vertices")]
pub enum VertexLayout {
    /// `x1,y1,z1,x2,…` — 3 columns per vertex.
    Xyz { num_vertices: usize },
    /// `x1,y1,x2,…` — 2 columns per vertex.
    Xy { num_vertices: usize },
}

impl VertexLayout {
    pub fn num_vertices(&self) -> usize {
        match *self {
            VertexLayout::Xyz { num_vertices } | VertexLayout::Xy { num_vertices } => num_vertices,
        }
    }

    pub fn stride(&self) -> usize {
        match self {
            VertexLayout::Xyz { .. } => 3,
            VertexLayout::Xy { .. } => 2,
        }
    }

    pub fn n_columns(&self) -> usize {
        self.num_vertices() * self.stride()
    }
}

/// A frame-per-row matrix plus the vertex ordering its columns follow.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    pub layout: VertexLayout,
}

impl DesignMatrix {
    fn check_layout(&self) -> Result<(), SsmError> {
        if self.values.ncols() != self.layout.n_columns() {
            return Err(SsmError::LayoutMismatch {
                cols: self.values.ncols(),
                expected: self.layout.n_columns(),
            });
        }
        Ok(())
    }
}

/// Rebuild 3D vertices from one interleaved row.
pub fn vertices_from_row3(row: &[f64]) -> Result<Vec<Point3<f64>>, SsmError> {
    if row.is_empty() || row.len() % 3 != 0 {
        return Err(SsmError::BadRowStride {
            len: row.len(),
            stride: 3,
        });
    }
    Ok(row
        .chunks_exact(3)
        .map(|c| Point3::new(c[0], c[1], c[2]))
        .collect())
}

/// Rebuild 2D vertices from one interleaved row.
pub fn vertices_from_row2(row: &[f64]) -> Result<Vec<Point2<f64>>, SsmError> {
    if row.is_empty() || row.len() % 2 != 0 {
        return Err(SsmError::BadRowStride {
            len: row.len(),
            stride: 2,
        });
    }
    Ok(row
        .chunks_exact(2)
        .map(|c| Point2::new(c[0], c[1]))
        .collect())
}

/// What [`center_normalize`] does beyond removing column means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Subtract column means only (regression predictors/responses).
    Center,
    /// Subtract column means, then scale each column to unit Euclidean norm
    /// (shape-model input). Constant columns stay zero and their norm is
    /// recorded as 0.
    CenterUnitNorm,
}

/// Per-column centering/scaling parameters, reusable on new rows.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub column_means: DVector<f64>,
    /// Euclidean norm of each centered training column (0 for constant columns).
    pub column_norms: DVector<f64>,
    pub mode: Normalization,
}

impl NormalizationStats {
    fn scale(&self, j: usize) -> f64 {
        match self.mode {
            Normalization::Center => 1.0,
            Normalization::CenterUnitNorm => {
                let n = self.column_norms[j];
                if n > 0.0 {
                    n
                } else {
                    1.0
                }
            }
        }
    }

    /// Apply the stored transform to new rows (same column count).
    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>, SsmError> {
        if m.ncols() != self.column_means.len() {
            return Err(SsmError::ColumnCountMismatch {
                expected: self.column_means.len(),
                found: m.ncols(),
            });
        }
        Ok(DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| {
            (m[(r, c)] - self.column_means[c]) / self.scale(c)
        }))
    }

    /// Undo [`NormalizationStats::apply`].
    pub fn invert(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>, SsmError> {
        if m.ncols() != self.column_means.len() {
            return Err(SsmError::ColumnCountMismatch {
                expected: self.column_means.len(),
                found: m.ncols(),
            });
        }
        Ok(DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| {
            m[(r, c)] * self.scale(c) + self.column_means[c]
        }))
    }
}

/// Center each column to mean 0 and, in [`Normalization::CenterUnitNorm`]
/// mode, scale it to unit Euclidean norm. Needs at least 2 rows.
pub fn center_normalize(
    m: &DMatrix<f64>,
    mode: Normalization,
) -> Result<(DMatrix<f64>, NormalizationStats), SsmError> {
    if m.nrows() < 2 {
        return Err(SsmError::TooFewFrames {
            needed: 2,
            found: m.nrows(),
        });
    }
    let column_means = DVector::from_fn(m.ncols(), |c, _| m.column(c).mean());
    let centered = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)] - column_means[c]);
    let column_norms = DVector::from_fn(m.ncols(), |c, _| centered.column(c).norm());
    let stats = NormalizationStats {
        column_means,
        column_norms,
        mode,
    };
    let out = match mode {
        Normalization::Center => centered,
        Normalization::CenterUnitNorm => {
            let mut out = centered;
            for c in 0..out.ncols() {
                let n = stats.column_norms[c];
                if n > 0.0 {
                    out.column_mut(c).scale_mut(1.0 / n);
                }
            }
            out
        }
    };
    Ok((out, stats))
}

/// Mean per-vertex Euclidean distance (mm) between two corresponded frames.
pub fn mean_distance_error(a: &[Point3<f64>], b: &[Point3<f64>]) -> Result<f64, SsmError> {
    if a.len() != b.len() {
        return Err(SsmError::VertexCountMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(SsmError::EmptySequence);
    }
    let total: f64 = a.iter().zip(b).map(|(p, q)| (p - q).norm()).sum();
    Ok(total / a.len() as f64)
}

/// Local motion scale at interior frame `t`: mean vertex distance between the
/// frames on either side of it. `t` must have both neighbors.
pub fn shape_variation(seq: &ShapeSequence3D, t: usize) -> Result<f64, SsmError> {
    let n = seq.n_frames();
    if t == 0 || t + 1 >= n {
        return Err(SsmError::NotInterior {
            index: t,
            n_frames: n,
        });
    }
    mean_distance_error(seq.frame(t - 1), seq.frame(t + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tetra_connectivity() -> Vec<[usize; 3]> {
        vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]
    }

    fn random_sequence(seed: u64, n_frames: usize, n_vertices: usize) -> ShapeSequence3D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = (0..n_frames)
            .map(|_| {
                (0..n_vertices)
                    .map(|_| {
                        Point3::new(
                            rng.gen_range(-50.0..50.0),
                            rng.gen_range(-50.0..50.0),
                            rng.gen_range(-50.0..50.0),
                        )
                    })
                    .collect()
            })
            .collect();
        ShapeSequence3D::new(frames, vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn flatten_interleaves_single_frame() {
        let seq = ShapeSequence3D::new(
            vec![vec![Point3::new(1.0, 2.0, 3.0), Point3::new(4.0, 5.0, 6.0)]],
            vec![],
        )
        .unwrap();
        let d = seq.flatten();
        assert_eq!(d.values.nrows(), 1);
        assert_eq!(d.values.ncols(), 6);
        let row: Vec<f64> = d.values.row(0).iter().copied().collect();
        assert_eq!(row, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(d.layout, VertexLayout::Xyz { num_vertices: 2 });
    }

    #[test]
    fn flatten_dimensions_match_sequence() {
        let seq = random_sequence(7, 20, 1000);
        let d = seq.flatten();
        assert_eq!((d.values.nrows(), d.values.ncols()), (20, 3000));
    }

    #[test]
    fn flatten_round_trip_is_bit_exact() {
        let seq = random_sequence(11, 6, 40);
        let rebuilt =
            ShapeSequence3D::from_design(&seq.flatten(), seq.connectivity().to_vec()).unwrap();
        assert_eq!(seq, rebuilt);
    }

    #[test]
    fn contour_flatten_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frames: Vec<Vec<Point2<f64>>> = (0..5)
            .map(|_| {
                (0..16)
                    .map(|_| Point2::new(rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0)))
                    .collect()
            })
            .collect();
        let seq = ContourSequence2D::new(frames, true).unwrap();
        let d = seq.flatten();
        assert_eq!((d.values.nrows(), d.values.ncols()), (5, 32));
        let rebuilt = ContourSequence2D::from_design(&d, true).unwrap();
        assert_eq!(seq, rebuilt);
    }

    #[test]
    fn ragged_frames_are_rejected() {
        let frames = vec![
            vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)],
            vec![Point3::new(0.0, 0.0, 0.0)],
        ];
        match ShapeSequence3D::new(frames, vec![]) {
            Err(SsmError::RaggedFrames {
                frame: 1,
                expected: 2,
                found: 1,
            }) => {}
            other => panic!("expected ragged-frame error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_triangle_is_rejected() {
        let frames = vec![vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ]];
        assert!(matches!(
            ShapeSequence3D::new(frames, vec![[0, 1, 3]]),
            Err(SsmError::InvalidTriangle { vertex: 3, .. })
        ));
    }

    #[test]
    fn center_normalize_two_by_two() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]);
        let (norm, stats) = center_normalize(&m, Normalization::CenterUnitNorm).unwrap();
        assert_eq!(stats.column_means.as_slice(), &[2.0, 2.0]);
        let s = 2.0_f64.sqrt();
        assert_relative_eq!(stats.column_norms[0], s, max_relative = 1e-15);
        assert_relative_eq!(stats.column_norms[1], s, max_relative = 1e-15);
        let e = 1.0 / s;
        let expected = DMatrix::from_row_slice(2, 2, &[-e, e, e, -e]);
        assert_relative_eq!(norm, expected, epsilon = 1e-15);
    }

    #[test]
    fn constant_column_maps_to_zero_with_zero_norm() {
        let m = DMatrix::from_row_slice(3, 1, &[5.0, 5.0, 5.0]);
        let (norm, stats) = center_normalize(&m, Normalization::CenterUnitNorm).unwrap();
        assert_eq!(norm, DMatrix::zeros(3, 1));
        assert_eq!(stats.column_norms[0], 0.0);
    }

    #[test]
    fn normalized_columns_have_zero_mean_and_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = DMatrix::from_fn(6, 4, |_, _| rng.gen_range(-10.0..10.0));
        let (norm, _) = center_normalize(&m, Normalization::CenterUnitNorm).unwrap();
        for c in 0..4 {
            assert!(norm.column(c).sum().abs() < 1e-12, "column {c} not centered");
            assert_relative_eq!(norm.column(c).norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_row_is_rejected() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(matches!(
            center_normalize(&m, Normalization::Center),
            Err(SsmError::TooFewFrames { needed: 2, found: 1 })
        ));
    }

    #[test]
    fn stats_apply_then_invert_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = DMatrix::from_fn(7, 5, |_, _| rng.gen_range(-4.0..4.0));
        for mode in [Normalization::Center, Normalization::CenterUnitNorm] {
            let (norm, stats) = center_normalize(&m, mode).unwrap();
            let applied = stats.apply(&m).unwrap();
            assert_relative_eq!(applied, norm, epsilon = 1e-13);
            let back = stats.invert(&norm).unwrap();
            assert_relative_eq!(back, m, epsilon = 1e-12);
        }
    }

    #[test]
    fn centering_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = DMatrix::from_fn(5, 3, |_, _| rng.gen_range(-100.0..100.0));
        let (once, _) = center_normalize(&m, Normalization::Center).unwrap();
        let (twice, _) = center_normalize(&once, Normalization::Center).unwrap();
        assert_relative_eq!(once, twice, epsilon = 1e-12);
    }

    #[test]
    fn mean_distance_error_on_identical_frames_is_zero() {
        let seq = random_sequence(21, 2, 30);
        assert_eq!(mean_distance_error(seq.frame(0), seq.frame(0)).unwrap(), 0.0);
    }

    #[test]
    fn mean_distance_error_of_rigid_offset_is_its_norm() {
        let seq = random_sequence(22, 1, 25);
        let shifted: Vec<Point3<f64>> = seq
            .frame(0)
            .iter()
            .map(|p| p + nalgebra::Vector3::new(3.0, 0.0, 4.0))
            .collect();
        let err = mean_distance_error(seq.frame(0), &shifted).unwrap();
        assert_relative_eq!(err, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn mean_distance_error_matches_scalar_loop() {
        let a = random_sequence(23, 1, 10);
        let b = random_sequence(24, 1, 10);
        // Independent scalar route: accumulate sqrt of explicit coordinate
        // differences, no vector types involved.
        let mut total = 0.0;
        for i in 0..10 {
            let (p, q) = (a.frame(0)[i], b.frame(0)[i]);
            let (dx, dy, dz) = (p.x - q.x, p.y - q.y, p.z - q.z);
            total += (dx * dx + dy * dy + dz * dz).sqrt();
        }
        let got = mean_distance_error(a.frame(0), b.frame(0)).unwrap();
        assert_relative_eq!(got, total / 10.0, epsilon = 1e-12);
    }

    #[test]
    fn mean_distance_error_rejects_mismatched_counts() {
        let a = random_sequence(25, 1, 10);
        let b = random_sequence(26, 1, 11);
        assert!(matches!(
            mean_distance_error(a.frame(0), b.frame(0)),
            Err(SsmError::VertexCountMismatch { left: 10, right: 11 })
        ));
    }

    #[test]
    fn shape_variation_of_equal_neighbors_is_zero() {
        let f = vec![Point3::new(1.0, 2.0, 3.0); 4];
        let g: Vec<Point3<f64>> = f.iter().map(|p| p + nalgebra::Vector3::x()).collect();
        let seq = ShapeSequence3D::new(vec![f.clone(), g, f], tetra_connectivity()).unwrap();
        assert_eq!(shape_variation(&seq, 1).unwrap(), 0.0);
    }

    #[test]
    fn shape_variation_of_pure_translation_is_its_norm() {
        let base = random_sequence(31, 1, 12);
        let step = nalgebra::Vector3::new(0.0, 0.0, 1.0);
        let frames: Vec<Vec<Point3<f64>>> = (0..3)
            .map(|t| base.frame(0).iter().map(|p| p + step * t as f64).collect())
            .collect();
        let seq = ShapeSequence3D::new(frames, vec![[0, 1, 2]]).unwrap();
        assert_relative_eq!(shape_variation(&seq, 1).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn shape_variation_rejects_boundary_frames() {
        let seq = random_sequence(32, 5, 8);
        assert!(matches!(
            shape_variation(&seq, 0),
            Err(SsmError::NotInterior { index: 0, .. })
        ));
        assert!(matches!(
            shape_variation(&seq, 4),
            Err(SsmError::NotInterior { index: 4, .. })
        ));
        assert!(shape_variation(&seq, 2).is_ok());
    }

    proptest! {
        #[test]
        fn prop_flatten_round_trip(n_frames in 1usize..6, n_vertices in 1usize..20, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frames: Vec<Vec<Point3<f64>>> = (0..n_frames)
                .map(|_| (0..n_vertices)
                    .map(|_| Point3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()))
                    .collect())
                .collect();
            let seq = ShapeSequence3D::new(frames, vec![]).unwrap();
            let rebuilt = ShapeSequence3D::from_design(&seq.flatten(), vec![]).unwrap();
            prop_assert_eq!(seq, rebuilt);
        }

        #[test]
        fn prop_mean_distance_error_is_a_metric(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut frame = || -> Vec<Point3<f64>> {
                (0..6).map(|_| Point3::new(
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                )).collect()
            };
            let (a, b, c) = (frame(), frame(), frame());
            let ab = mean_distance_error(&a, &b).unwrap();
            let ba = mean_distance_error(&b, &a).unwrap();
            let ac = mean_distance_error(&a, &c).unwrap();
            let cb = mean_distance_error(&c, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, ba);
            prop_assert_eq!(mean_distance_error(&a, &a).unwrap(), 0.0);
            prop_assert!(ab <= ac + cb + 1e-12);
        }
    }
}
