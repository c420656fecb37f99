//! Gmsh MSH 2.2 ASCII reader and writer (tetrahedra only, element type 4).

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{TetMesh, Vec3, VertexMap};

pub fn read(path: &Path) -> Result<TetMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().map(str::trim);

    let mut node_ids: Vec<u64> = Vec::new();
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut tets_by_id: Vec<[u64; 4]> = Vec::new();

    while let Some(line) = lines.next() {
        match line {
            "$MeshFormat" => {
                let fmt = lines
                    .next()
                    .ok_or_else(|| Error::parse(path, "truncated $MeshFormat"))?;
                let mut it = fmt.split_whitespace();
                let version = it.next().unwrap_or("");
                let file_type = it.next().unwrap_or("");
                if !version.starts_with("2.") || file_type != "0" {
                    return Err(Error::parse(
                        path,
                        format!("unsupported MSH format '{fmt}' (need 2.x ASCII)"),
                    ));
                }
            }
            "$Nodes" => {
                let count: usize = parse_next(&mut lines, path, "node count")?;
                for _ in 0..count {
                    let line = lines
                        .next()
                        .ok_or_else(|| Error::parse(path, "truncated $Nodes"))?;
                    let mut it = line.split_whitespace();
                    let id: u64 = parse_token(it.next(), path, "node id")?;
                    let x: f64 = parse_token(it.next(), path, "node x")?;
                    let y: f64 = parse_token(it.next(), path, "node y")?;
                    let z: f64 = parse_token(it.next(), path, "node z")?;
                    node_ids.push(id);
                    vertices.push(Vec3::new(x, y, z));
                }
            }
            "$Elements" => {
                let count: usize = parse_next(&mut lines, path, "element count")?;
                for _ in 0..count {
                    let line = lines
                        .next()
                        .ok_or_else(|| Error::parse(path, "truncated $Elements"))?;
                    let mut it = line.split_whitespace();
                    let _id: u64 = parse_token(it.next(), path, "element id")?;
                    let etype: u32 = parse_token(it.next(), path, "element type")?;
                    let ntags: usize = parse_token(it.next(), path, "tag count")?;
                    for _ in 0..ntags {
                        let _: i64 = parse_token(it.next(), path, "tag")?;
                    }
                    if etype == 4 {
                        let mut tet = [0u64; 4];
                        for slot in &mut tet {
                            *slot = parse_token(it.next(), path, "element node")?;
                        }
                        tets_by_id.push(tet);
                    }
                    // other element types (surface triangles etc.) are skipped
                }
            }
            _ => {}
        }
    }

    if vertices.is_empty() {
        return Err(Error::parse(path, "no $Nodes section"));
    }
    if tets_by_id.is_empty() {
        return Err(Error::parse(path, "no tetrahedra (element type 4)"));
    }

    let tets = super::resolve_ids(&node_ids, &tets_by_id, path)?;
    TetMesh::with_node_ids(vertices, tets, node_ids)
}

pub fn write(path: &Path, mesh: &TetMesh, map: Option<&VertexMap>) -> Result<()> {
    let mut out = String::new();
    out.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n");
    out.push_str(&format!("{}\n", mesh.vertex_count()));
    for (v, &id) in mesh.node_ids().iter().enumerate() {
        let p = map.map_or(mesh.vertices()[v], |m| m.point(v));
        out.push_str(&format!(
            "{id} {} {} {}\n",
            super::fmt_full(p.x),
            super::fmt_full(p.y),
            super::fmt_full(p.z)
        ));
    }
    out.push_str("$EndNodes\n$Elements\n");
    out.push_str(&format!("{}\n", mesh.tet_count()));
    for (t, tet) in mesh.tets().iter().enumerate() {
        let ids = tet.map(|v| mesh.node_ids()[v]);
        out.push_str(&format!(
            "{} 4 2 0 1 {} {} {} {}\n",
            t + 1,
            ids[0],
            ids[1],
            ids[2],
            ids[3]
        ));
    }
    out.push_str("$EndElements\n");

    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

fn parse_next<'a, T: std::str::FromStr>(
    lines: &mut impl Iterator<Item = &'a str>,
    path: &Path,
    what: &str,
) -> Result<T> {
    parse_token(lines.next(), path, what)
}

fn parse_token<T: std::str::FromStr>(tok: Option<&str>, path: &Path, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(path, format!("expected {what}")))
}
