//! TetGen .node/.ele ASCII pair reader.

use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{TetMesh, Vec3};

pub fn read(node_path: &Path, ele_path: &Path) -> Result<TetMesh> {
    let node_text = std::fs::read_to_string(node_path).map_err(|e| Error::io(node_path, e))?;
    let mut lines = data_lines(&node_text);
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(node_path, "empty .node file"))?;
    let mut it = header.split_whitespace();
    let count: usize = token(it.next(), node_path, "node count")?;
    let dim: usize = token(it.next(), node_path, "dimension")?;
    if dim != 3 {
        return Err(Error::parse(node_path, format!("dimension {dim}, need 3")));
    }

    let mut node_ids = Vec::with_capacity(count);
    let mut vertices = Vec::with_capacity(count);
    for _ in 0..count {
        let line = lines
            .next()
            .ok_or_else(|| Error::parse(node_path, "truncated node list"))?;
        let mut it = line.split_whitespace();
        let id: u64 = token(it.next(), node_path, "node id")?;
        let x: f64 = token(it.next(), node_path, "x")?;
        let y: f64 = token(it.next(), node_path, "y")?;
        let z: f64 = token(it.next(), node_path, "z")?;
        node_ids.push(id);
        vertices.push(Vec3::new(x, y, z));
    }

    let ele_text = std::fs::read_to_string(ele_path).map_err(|e| Error::io(ele_path, e))?;
    let mut lines = data_lines(&ele_text);
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(ele_path, "empty .ele file"))?;
    let mut it = header.split_whitespace();
    let count: usize = token(it.next(), ele_path, "element count")?;
    let per: usize = token(it.next(), ele_path, "nodes per tet")?;
    if per != 4 {
        return Err(Error::parse(
            ele_path,
            format!("{per} nodes per element, need 4"),
        ));
    }

    let mut tets_by_id = Vec::with_capacity(count);
    for _ in 0..count {
        let line = lines
            .next()
            .ok_or_else(|| Error::parse(ele_path, "truncated element list"))?;
        let mut it = line.split_whitespace();
        let _id: u64 = token(it.next(), ele_path, "element id")?;
        let mut tet = [0u64; 4];
        for slot in &mut tet {
            *slot = token(it.next(), ele_path, "corner")?;
        }
        tets_by_id.push(tet);
    }

    let tets = super::resolve_ids(&node_ids, &tets_by_id, ele_path)?;
    TetMesh::with_node_ids(vertices, tets, node_ids)
}

/// Non-empty lines with `#` comments stripped.
fn data_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
}

fn token<T: std::str::FromStr>(tok: Option<&str>, path: &Path, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(path, format!("expected {what}")))
}
