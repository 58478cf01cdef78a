//! On-disk formats: a strict OBJ subset for triangle meshes, CSV for planar
//! contours, JSON manifests tying per-frame files into sequences, and JSON
//! documents for planes and matrices.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so
//! write → read → write produces byte-identical files. All writes go through
//! [`atomic_write`] (temporary file plus rename), so a crash never leaves a
//! half-written artifact, and every JSON document carries a `version` field
//! checked on load.
//!
//! The OBJ subset is deliberately narrow: `v x y z` vertex lines, `f i j k`
//! 1-based triangle lines, comments, and blank lines. Anything else —
//! normals, texture coordinates, `f a/b/c` forms, negative indices — is
//! rejected with the offending line number, because silently dropping data
//! a file claims to have is worse than refusing it.

use crate::scanplane::ScanPlane;
use crate::ssm::{ContourSequence2D, ShapeSequence3D, TriangleMesh};
use nalgebra::{DMatrix, Point2, Point3, Vector3};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Version stamped into and required of every JSON document.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: unsupported format version {found}, this build reads version {expected}")]
    UnsupportedVersion {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("malformed document: {message}")]
    Malformed { message: String },
    #[error(transparent)]
    Shape(#[from] crate::ssm::SsmError),
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}

/// Write `bytes` to `path` via a sibling temporary file and an atomic
/// rename, so readers never observe a partially written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let tmp = match path.extension() {
        Some(ext) => path.with_extension(format!("{}.tmp", ext.to_string_lossy())),
        None => path.with_extension("tmp"),
    };
    fs::write(&tmp, bytes).map_err(file_err(&tmp))?;
    fs::rename(&tmp, path).map_err(file_err(path))
}

pub(crate) fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let bytes = fs::read(path).map_err(file_err(path))?;
    serde_json::from_slice(&bytes).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn check_version(path: &Path, found: u32) -> Result<(), IoError> {
    if found != FORMAT_VERSION {
        return Err(IoError::UnsupportedVersion {
            path: path.to_path_buf(),
            found,
            expected: FORMAT_VERSION,
        });
    }
    Ok(())
}

/// Write a mesh as `v x y z` lines followed by 1-based `f i j k` lines.
pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<(), IoError> {
    let mut out = String::new();
    for v in mesh.vertices() {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).expect("string write");
    }
    for t in mesh.triangles() {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).expect("string write");
    }
    atomic_write(path, out.as_bytes())
}

fn parse_coordinate(path: &Path, line: usize, token: &str) -> Result<f64, IoError> {
    let value: f64 = token.parse().map_err(|_| IoError::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("`{token}` is not a number"),
    })?;
    if !value.is_finite() {
        return Err(IoError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("`{token}` is not finite"),
        });
    }
    Ok(value)
}

/// Read the OBJ subset written by [`write_obj`]. Faces must reference
/// vertices already defined; errors carry the 1-based line number.
pub fn read_obj(path: &Path) -> Result<TriangleMesh, IoError> {
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let parse_err = |line: usize, message: String| IoError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        match tokens[0] {
            "v" => {
                if tokens.len() != 4 {
                    return Err(parse_err(
                        line,
                        format!("vertex line needs 3 coordinates, found {}", tokens.len() - 1),
                    ));
                }
                let x = parse_coordinate(path, line, tokens[1])?;
                let y = parse_coordinate(path, line, tokens[2])?;
                let z = parse_coordinate(path, line, tokens[3])?;
                vertices.push(Point3::new(x, y, z));
            }
            "f" => {
                if tokens.len() != 4 {
                    return Err(parse_err(
                        line,
                        format!("face line needs 3 vertex indices, found {}", tokens.len() - 1),
                    ));
                }
                let mut tri = [0usize; 3];
                for (k, token) in tokens[1..].iter().enumerate() {
                    if token.contains('/') {
                        return Err(parse_err(
                            line,
                            format!(
                                "`{token}`: only plain vertex indices are supported, \
                                 not `v/vt/vn` forms"
                            ),
                        ));
                    }
                    let index: i64 = token.parse().map_err(|_| {
                        parse_err(line, format!("`{token}` is not a vertex index"))
                    })?;
                    if index < 1 {
                        return Err(parse_err(
                            line,
                            format!("vertex index {index} out of range, indices are 1-based"),
                        ));
                    }
                    let zero_based = (index - 1) as usize;
                    if zero_based >= vertices.len() {
                        return Err(parse_err(
                            line,
                            format!(
                                "face references vertex {index} but only {} vertices \
                                 are defined so far",
                                vertices.len()
                            ),
                        ));
                    }
                    tri[k] = zero_based;
                }
                triangles.push(tri);
            }
            other => {
                return Err(parse_err(line, format!("unsupported directive `{other}`")));
            }
        }
    }
    TriangleMesh::new(vertices, triangles).map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Write a planar contour as one `x,y` row per vertex.
pub fn write_contour_csv(path: &Path, contour: &[Point2<f64>]) -> Result<(), IoError> {
    let mut out = String::new();
    for v in contour {
        writeln!(out, "{},{}", v.x, v.y).expect("string write");
    }
    atomic_write(path, out.as_bytes())
}

/// Read a contour CSV written by [`write_contour_csv`]. Blank lines and
/// `#` comments are skipped; every data row must be exactly `x,y`.
pub fn read_contour_csv(path: &Path) -> Result<Vec<Point2<f64>>, IoError> {
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    let mut contour = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 2 {
            return Err(IoError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected `x,y`, found {} fields", fields.len()),
            });
        }
        let x = parse_coordinate(path, line, fields[0].trim())?;
        let y = parse_coordinate(path, line, fields[1].trim())?;
        contour.push(Point2::new(x, y));
    }
    if contour.is_empty() {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            message: "contour file contains no vertices".into(),
        });
    }
    Ok(contour)
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestDoc {
    version: u32,
    kind: String,
    frames: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    closed: Option<bool>,
}

const MESH_KIND: &str = "mesh-sequence";
const CONTOUR_KIND: &str = "contour-sequence";

/// Write one OBJ per frame plus `manifest.json` into `dir` (created if
/// missing). Returns the manifest path.
pub fn write_mesh_sequence(dir: &Path, sequence: &ShapeSequence3D) -> Result<PathBuf, IoError> {
    fs::create_dir_all(dir).map_err(file_err(dir))?;
    let mut frames = Vec::with_capacity(sequence.n_frames());
    for t in 0..sequence.n_frames() {
        let name = format!("frame_{t:04}.obj");
        let mesh = sequence.mesh(t).expect("t ranges over n_frames");
        write_obj(&dir.join(&name), &mesh)?;
        frames.push(name);
    }
    let manifest = dir.join("manifest.json");
    write_json_pretty(
        &manifest,
        &ManifestDoc {
            version: FORMAT_VERSION,
            kind: MESH_KIND.into(),
            frames,
            closed: None,
        },
    )?;
    Ok(manifest)
}

fn read_manifest(path: &Path, expected_kind: &str) -> Result<(ManifestDoc, PathBuf), IoError> {
    let doc: ManifestDoc = read_json(path)?;
    check_version(path, doc.version)?;
    if doc.kind != expected_kind {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            message: format!("manifest kind is `{}`, expected `{expected_kind}`", doc.kind),
        });
    }
    if doc.frames.is_empty() {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            message: "manifest lists no frames".into(),
        });
    }
    let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    Ok((doc, base))
}

/// Read a mesh sequence from its manifest. Frame paths are resolved
/// relative to the manifest's directory; all frames must share one triangle
/// list.
pub fn read_mesh_sequence(manifest: &Path) -> Result<ShapeSequence3D, IoError> {
    let (doc, base) = read_manifest(manifest, MESH_KIND)?;
    let meshes = doc
        .frames
        .iter()
        .map(|f| read_obj(&base.join(f)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ShapeSequence3D::from_meshes(&meshes)?)
}

/// Write one CSV per frame plus `manifest.json` into `dir`. Returns the
/// manifest path.
pub fn write_contour_sequence(
    dir: &Path,
    sequence: &ContourSequence2D,
) -> Result<PathBuf, IoError> {
    fs::create_dir_all(dir).map_err(file_err(dir))?;
    let mut frames = Vec::with_capacity(sequence.n_frames());
    for t in 0..sequence.n_frames() {
        let name = format!("frame_{t:04}.csv");
        write_contour_csv(&dir.join(&name), sequence.frame(t))?;
        frames.push(name);
    }
    let manifest = dir.join("manifest.json");
    write_json_pretty(
        &manifest,
        &ManifestDoc {
            version: FORMAT_VERSION,
            kind: CONTOUR_KIND.into(),
            frames,
            closed: Some(sequence.closed()),
        },
    )?;
    Ok(manifest)
}

/// Read a contour sequence from its manifest.
pub fn read_contour_sequence(manifest: &Path) -> Result<ContourSequence2D, IoError> {
    let (doc, base) = read_manifest(manifest, CONTOUR_KIND)?;
    let closed = doc.closed.ok_or_else(|| IoError::Format {
        path: manifest.to_path_buf(),
        message: "contour manifest is missing the `closed` flag".into(),
    })?;
    let frames = doc
        .frames
        .iter()
        .map(|f| read_contour_csv(&base.join(f)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ContourSequence2D::new(frames, closed)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct PlaneDoc {
    version: u32,
    origin: [f64; 3],
    axis_x: [f64; 3],
    axis_y: [f64; 3],
}

pub fn write_plane_json(path: &Path, plane: &ScanPlane) -> Result<(), IoError> {
    write_json_pretty(
        path,
        &PlaneDoc {
            version: FORMAT_VERSION,
            origin: plane.origin().coords.into(),
            axis_x: plane.axis_x().into(),
            axis_y: plane.axis_y().into(),
        },
    )
}

/// Read a plane document; the axes are re-validated for orthonormality.
pub fn read_plane_json(path: &Path) -> Result<ScanPlane, IoError> {
    let doc: PlaneDoc = read_json(path)?;
    check_version(path, doc.version)?;
    ScanPlane::from_parts(
        Point3::from(Vector3::from(doc.origin)),
        Vector3::from(doc.axis_x),
        Vector3::from(doc.axis_y),
    )
    .map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// A dense matrix in JSON: row-major `data` with explicit dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixJson {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push(m[(r, c)]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>, IoError> {
        if self.rows * self.cols != self.data.len() {
            return Err(IoError::Malformed {
                message: format!(
                    "matrix declares {}x{} = {} entries but carries {}",
                    self.rows,
                    self.cols,
                    self.rows * self.cols,
                    self.data.len()
                ),
            });
        }
        Ok(DMatrix::from_fn(self.rows, self.cols, |r, c| {
            self.data[r * self.cols + c]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use tempfile::tempdir;

    fn tetra() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(0.25, 0.25, 1.5),
            ],
            vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [2, 0, 3]],
        )
        .unwrap()
    }

    #[test]
    fn obj_round_trip_is_byte_identical() {
        let dir = tempdir().unwrap();
        let first = dir.path().join("a.obj");
        let second = dir.path().join("b.obj");
        let mesh = TriangleMesh::new(
            vec![
                Point3::new(0.1, -2.5, 1.0 / 3.0),
                Point3::new(1e-12, 3.7e8, -0.0),
                Point3::new(2.0, 2.0, 2.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        write_obj(&first, &mesh).unwrap();
        let back = read_obj(&first).unwrap();
        assert_eq!(back, mesh);
        write_obj(&second, &back).unwrap();
        assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
    }

    #[test]
    fn obj_uses_one_based_indices() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.obj");
        fs::write(&path, "# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\n\nf 1 2 3\n").unwrap();
        let mesh = read_obj(&path).unwrap();
        assert_eq!(mesh.triangles(), &[[0, 1, 2]]);
        let text = {
            write_obj(&path, &mesh).unwrap();
            fs::read_to_string(&path).unwrap()
        };
        assert!(text.contains("f 1 2 3"));
    }

    #[test]
    fn obj_parse_errors_carry_line_numbers() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.obj");
        let cases: &[(&str, usize, &str)] = &[
            ("v 0 0 0\nv 1 0\n", 2, "3 coordinates"),
            ("v 0 0 zero\n", 1, "not a number"),
            ("v 0 0 inf\n", 1, "not finite"),
            ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2\n", 4, "3 vertex indices"),
            ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3/3\n", 4, "plain vertex indices"),
            ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n", 4, "1-based"),
            ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n", 4, "defined so far"),
            ("v 0 0 0\nvn 1 0 0\n", 2, "unsupported directive"),
        ];
        for (content, want_line, want_msg) in cases {
            fs::write(&path, content).unwrap();
            match read_obj(&path) {
                Err(IoError::Parse { line, message, .. }) => {
                    assert_eq!(line, *want_line, "for {content:?}");
                    assert!(
                        message.contains(want_msg),
                        "message {message:?} lacks {want_msg:?}"
                    );
                }
                other => panic!("expected parse error for {content:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn contour_csv_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let contour = vec![
            Point2::new(1.5, -0.25),
            Point2::new(1.0 / 7.0, 2e-9),
            Point2::new(-3.0, 4.0),
        ];
        write_contour_csv(&path, &contour).unwrap();
        assert_eq!(read_contour_csv(&path).unwrap(), contour);
    }

    #[test]
    fn contour_csv_rejects_malformed_rows() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.csv");
        fs::write(&path, "1.0,2.0\n3.0\n").unwrap();
        match read_contour_csv(&path) {
            Err(IoError::Parse { line: 2, message, .. }) => {
                assert!(message.contains("1 fields"));
            }
            other => panic!("unexpected {other:?}"),
        }
        fs::write(&path, "1.0,two\n").unwrap();
        assert!(matches!(
            read_contour_csv(&path),
            Err(IoError::Parse { line: 1, .. })
        ));
        fs::write(&path, "# only a comment\n").unwrap();
        assert!(matches!(
            read_contour_csv(&path),
            Err(IoError::Format { .. })
        ));
    }

    #[test]
    fn mesh_sequence_round_trips_through_a_manifest() {
        let dir = tempdir().unwrap();
        let base = tetra();
        let mut frames = Vec::new();
        for t in 0..3 {
            frames.push(
                base.vertices()
                    .iter()
                    .map(|v| v + Vector3::new(0.0, 0.0, 0.1 * t as f64))
                    .collect::<Vec<_>>(),
            );
        }
        let seq = ShapeSequence3D::new(frames, base.triangles().to_vec()).unwrap();
        let manifest = write_mesh_sequence(&dir.path().join("seq"), &seq).unwrap();
        let back = read_mesh_sequence(&manifest).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn contour_sequence_round_trips_through_a_manifest() {
        let dir = tempdir().unwrap();
        let frames = vec![
            vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.5, 1.0)],
            vec![Point2::new(0.1, 0.0), Point2::new(1.1, 0.0), Point2::new(0.6, 1.0)],
        ];
        let seq = ContourSequence2D::new(frames, true).unwrap();
        let manifest = write_contour_sequence(&dir.path().join("contours"), &seq).unwrap();
        let back = read_contour_sequence(&manifest).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn manifests_are_validated() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("manifest.json");

        fs::write(
            &path,
            r#"{"version": 2, "kind": "mesh-sequence", "frames": ["a.obj"]}"#,
        )
        .unwrap();
        assert!(matches!(
            read_mesh_sequence(&path),
            Err(IoError::UnsupportedVersion { found: 2, .. })
        ));

        fs::write(
            &path,
            r#"{"version": 1, "kind": "contour-sequence", "frames": ["a.csv"], "closed": true}"#,
        )
        .unwrap();
        match read_mesh_sequence(&path) {
            Err(IoError::Format { message, .. }) => assert!(message.contains("kind")),
            other => panic!("unexpected {other:?}"),
        }

        fs::write(&path, r#"{"version": 1, "kind": "mesh-sequence", "frames": []}"#).unwrap();
        match read_mesh_sequence(&path) {
            Err(IoError::Format { message, .. }) => assert!(message.contains("no frames")),
            other => panic!("unexpected {other:?}"),
        }

        fs::write(
            &path,
            r#"{"version": 1, "kind": "mesh-sequence", "frames": ["missing.obj"]}"#,
        )
        .unwrap();
        assert!(matches!(read_mesh_sequence(&path), Err(IoError::File { .. })));
    }

    #[test]
    fn sequence_writes_are_deterministic() {
        let dir = tempdir().unwrap();
        let seq = ShapeSequence3D::new(
            vec![tetra().vertices().to_vec(); 2],
            tetra().triangles().to_vec(),
        )
        .unwrap();
        let first = dir.path().join("one");
        let second = dir.path().join("two");
        write_mesh_sequence(&first, &seq).unwrap();
        write_mesh_sequence(&second, &seq).unwrap();
        for name in ["manifest.json", "frame_0000.obj", "frame_0001.obj"] {
            assert_eq!(
                fs::read(first.join(name)).unwrap(),
                fs::read(second.join(name)).unwrap(),
                "{name} differs between identical writes"
            );
        }
    }

    #[test]
    fn plane_json_round_trips_and_is_validated() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("plane.json");
        let plane = ScanPlane::from_parts(
            Point3::new(1.0, 2.0, 3.0),
            Vector3::new(0.6, 0.8, 0.0),
            Vector3::new(-0.8, 0.6, 0.0),
        )
        .unwrap();
        write_plane_json(&path, &plane).unwrap();
        let back = read_plane_json(&path).unwrap();
        assert_relative_eq!(back.origin().coords, plane.origin().coords, epsilon = 0.0);
        assert_relative_eq!(back.axis_x(), plane.axis_x(), epsilon = 0.0);
        assert_relative_eq!(back.axis_y(), plane.axis_y(), epsilon = 0.0);

        fs::write(
            &path,
            r#"{"version": 1, "origin": [0,0,0], "axis_x": [2,0,0], "axis_y": [0,1,0]}"#,
        )
        .unwrap();
        match read_plane_json(&path) {
            Err(IoError::Format { message, .. }) => assert!(message.contains("norm")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn matrix_json_is_row_major() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let doc = MatrixJson::from_matrix(&m);
        assert_eq!(doc.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(doc.to_matrix().unwrap(), m);

        let bad = MatrixJson {
            rows: 2,
            cols: 3,
            data: vec![0.0; 5],
        };
        assert!(matches!(bad.to_matrix(), Err(IoError::Malformed { .. })));
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp_file() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("out.json");
        atomic_write(&path, b"first").unwrap();
        atomic_write(&path, b"second").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second");
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .filter(|n| n.contains("tmp"))
            .collect();
        assert!(leftovers.is_empty(), "temp files left behind: {leftovers:?}");
    }
}
