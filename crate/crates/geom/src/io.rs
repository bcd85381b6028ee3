//! OBJ meshes and ascii PLY point clouds.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::chamfer::{Frame, PointCloud};
use crate::error::{GeomError, Result};
use crate::mesh::TriangleMesh;
use crate::Vec3;

fn io_err(path: &Path, e: std::io::Error) -> GeomError {
    GeomError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    }
}

pub fn write_obj(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    let mut emit = |s: String| w.write_all(s.as_bytes()).map_err(|e| io_err(path, e));
    for v in &mesh.vertices {
        emit(format!("v {:.9} {:.9} {:.9}\n", v.x, v.y, v.z))?;
    }
    for t in &mesh.triangles {
        emit(format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_obj(path: &Path) -> Result<TriangleMesh> {
    let f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let mut parts = line.split_whitespace();
        let parse_err = |detail: String| GeomError::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            detail,
        };
        match parts.next() {
            Some("v") => {
                let mut coord = || -> Result<f64> {
                    parts
                        .next()
                        .ok_or_else(|| parse_err("missing coordinate".into()))?
                        .parse()
                        .map_err(|e| parse_err(format!("bad coordinate: {}", e)))
                };
                vertices.push(Vec3::new(coord()?, coord()?, coord()?));
            }
            Some("f") => {
                let mut idx = || -> Result<u32> {
                    let tok = parts
                        .next()
                        .ok_or_else(|| parse_err("missing face index".into()))?;
                    let first = tok.split('/').next().unwrap_or(tok);
                    let i: i64 = first
                        .parse()
                        .map_err(|e| parse_err(format!("bad index: {}", e)))?;
                    Ok((i - 1) as u32)
                };
                triangles.push([idx()?, idx()?, idx()?]);
            }
            _ => {}
        }
    }
    Ok(TriangleMesh::new(vertices, triangles))
}

pub fn write_ply(cloud: &PointCloud, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    let header = format!(
        "ply\nformat ascii 1.0\ncomment frame {}\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        match cloud.frame {
            Frame::World => "world",
            Frame::Canonical => "canonical",
        },
        cloud.points.len()
    );
    w.write_all(header.as_bytes()).map_err(|e| io_err(path, e))?;
    for p in &cloud.points {
        w.write_all(format!("{:.9} {:.9} {:.9}\n", p.x, p.y, p.z).as_bytes())
            .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(f);
    let mut in_header = true;
    let mut frame = Frame::World;
    let mut points = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if in_header {
            if line.starts_with("comment frame canonical") {
                frame = Frame::Canonical;
            }
            if line.trim() == "end_header" {
                in_header = false;
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let mut coord = || -> Result<f64> {
            parts
                .next()
                .ok_or_else(|| GeomError::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    detail: "missing coordinate".into(),
                })?
                .parse()
                .map_err(|e| GeomError::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    detail: format!("bad coordinate: {}", e),
                })
        };
        points.push(Vec3::new(coord()?, coord()?, coord()?));
    }
    Ok(PointCloud::new(points, frame))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::{build_tool_mesh, ToolKind};

    #[test]
    fn obj_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tool.obj");
        let m = build_tool_mesh(ToolKind::Mountain);
        write_obj(&m, &path).unwrap();
        let back = read_obj(&path).unwrap();
        assert_eq!(back.triangles, m.triangles);
        for (a, b) in back.vertices.iter().zip(&m.vertices) {
            assert!((a - b).norm() < 1e-8);
        }
        back.check_watertight().unwrap();
    }

    #[test]
    fn ply_roundtrip_keeps_frame_tag() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.ply");
        let cloud = PointCloud::new(
            vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(-1.0, 2.0, -3.0)],
            Frame::Canonical,
        );
        write_ply(&cloud, &path).unwrap();
        let back = read_ply(&path).unwrap();
        assert_eq!(back.frame, Frame::Canonical);
        assert_eq!(back.len(), 2);
        assert!((back.points[1] - cloud.points[1]).norm() < 1e-8);
    }
}
