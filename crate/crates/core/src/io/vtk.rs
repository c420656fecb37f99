//! Legacy VTK ASCII (UNSTRUCTURED_GRID, cell type 10) writer and reader.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{TetMesh, Vec3, VertexMap};

pub fn write(path: &Path, mesh: &TetMesh, map: Option<&VertexMap>) -> Result<()> {
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("ballmap mesh\n");
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    out.push_str(&format!("POINTS {} double\n", mesh.vertex_count()));
    for v in 0..mesh.vertex_count() {
        let p = map.map_or(mesh.vertices()[v], |m| m.point(v));
        out.push_str(&format!(
            "{} {} {}\n",
            super::fmt_full(p.x),
            super::fmt_full(p.y),
            super::fmt_full(p.z)
        ));
    }
    out.push_str(&format!(
        "CELLS {} {}\n",
        mesh.tet_count(),
        mesh.tet_count() * 5
    ));
    for tet in mesh.tets() {
        out.push_str(&format!("4 {} {} {} {}\n", tet[0], tet[1], tet[2], tet[3]));
    }
    out.push_str(&format!("CELL_TYPES {}\n", mesh.tet_count()));
    for _ in 0..mesh.tet_count() {
        out.push_str("10\n");
    }

    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<TetMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut tokens = text
        .lines()
        .skip_while(|l| l.starts_with('#'))
        .flat_map(|l| l.split_whitespace());

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut cells: Vec<Vec<usize>> = Vec::new();
    let mut cell_types: Vec<u32> = Vec::new();

    while let Some(tok) = tokens.next() {
        match tok {
            "POINTS" => {
                let n: usize = parse(tokens.next(), path, "point count")?;
                let _dtype = tokens.next();
                for _ in 0..n {
                    let x: f64 = parse(tokens.next(), path, "x")?;
                    let y: f64 = parse(tokens.next(), path, "y")?;
                    let z: f64 = parse(tokens.next(), path, "z")?;
                    vertices.push(Vec3::new(x, y, z));
                }
            }
            "CELLS" => {
                let n: usize = parse(tokens.next(), path, "cell count")?;
                let _total: usize = parse(tokens.next(), path, "cell data size")?;
                for _ in 0..n {
                    let k: usize = parse(tokens.next(), path, "cell size")?;
                    let mut cell = Vec::with_capacity(k);
                    for _ in 0..k {
                        cell.push(parse(tokens.next(), path, "cell index")?);
                    }
                    cells.push(cell);
                }
            }
            "CELL_TYPES" => {
                let n: usize = parse(tokens.next(), path, "cell type count")?;
                for _ in 0..n {
                    cell_types.push(parse(tokens.next(), path, "cell type")?);
                }
            }
            _ => {}
        }
    }

    if vertices.is_empty() {
        return Err(Error::parse(path, "no POINTS section"));
    }
    if cells.len() != cell_types.len() {
        return Err(Error::parse(path, "CELLS and CELL_TYPES disagree"));
    }
    let mut tets = Vec::new();
    for (cell, ty) in cells.iter().zip(&cell_types) {
        if *ty == 10 {
            if cell.len() != 4 {
                return Err(Error::parse(path, "type-10 cell without 4 corners"));
            }
            tets.push([cell[0], cell[1], cell[2], cell[3]]);
        }
    }
    if tets.is_empty() {
        return Err(Error::parse(path, "no tetrahedral cells (type 10)"));
    }
    TetMesh::new(vertices, tets)
}

fn parse<T: std::str::FromStr>(tok: Option<&str>, path: &Path, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(path, format!("expected {what}")))
}
