//! Binary STL.

use std::path::Path;

use super::IoError;
use crate::mesh::TriangleMesh;

const HEADER: usize = 80;
const RECORD: usize = 50;

pub fn write_stl(path: impl AsRef<Path>, mesh: &TriangleMesh) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(HEADER + 4 + RECORD * mesh.triangles.len());
    let mut header = [b' '; HEADER];
    let tag = b"binary STL, units mm";
    header[..tag.len()].copy_from_slice(tag);
    out.extend_from_slice(&header);
    let count = u32::try_from(mesh.triangles.len())
        .map_err(|_| IoError::Format { path: path.to_path_buf(), message: "too many triangles".into() })?;
    out.extend_from_slice(&count.to_le_bytes());
    for t in 0..mesh.triangles.len() {
        let normal = mesh.unit_normal(t);
        for x in normal.iter().chain(mesh.triangle_points(t).iter().flatten()) {
            out.extend_from_slice(&(*x as f32).to_le_bytes());
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    std::fs::write(path, out).map_err(IoError::file(path))
}

/// Triangles (normal dropped) of a binary STL file.
pub fn read_stl(path: impl AsRef<Path>) -> Result<Vec<[[f32; 3]; 3]>, IoError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(IoError::file(path))?;
    let bad = |message: &str| IoError::Format { path: path.to_path_buf(), message: message.into() };
    if bytes.len() < HEADER + 4 {
        return Err(bad("file shorter than the STL header"));
    }
    let count = u32::from_le_bytes(bytes[HEADER..HEADER + 4].try_into().expect("4 bytes")) as usize;
    if bytes.len() != HEADER + 4 + RECORD * count {
        return Err(bad("size does not match the triangle count"));
    }
    let float = |at: usize| f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    Ok((0..count)
        .map(|t| {
            let base = HEADER + 4 + RECORD * t + 12;
            std::array::from_fn(|v| std::array::from_fn(|a| float(base + 12 * v + 4 * a)))
        })
        .collect())
}
