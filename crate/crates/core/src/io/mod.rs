//! Mesh file formats and auxiliary text inputs.
//!
//! Readers: Gmsh MSH 2.2 ASCII, TetGen .node/.ele pairs, legacy VTK ASCII.
//! Writers: Gmsh MSH 2.2 and legacy VTK. Coordinates are written with 17
//! significant digits so a write/read round trip is bit exact.

pub mod msh;
pub mod tetgen;
pub mod vtk;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mesh::{BoundaryMap, TetMesh, VertexMap};

/// Synthetic mesh descriptors understood by `load_or_build` and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Ball { refine: u32 },
    ShellBall { subdiv: u32, layers: u32 },
    SingleTet,
    RandomConvex { refine: u32, seed: u64 },
}

#[derive(Debug, Clone)]
pub enum MeshSource {
    Gmsh(PathBuf),
    TetGen { node: PathBuf, ele: PathBuf },
    Vtk(PathBuf),
    Synthetic(SyntheticKind),
}

impl MeshSource {
    /// Guess the source from a file path extension. `.node` files expect a
    /// sibling `.ele`.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("msh") => Ok(MeshSource::Gmsh(path.to_path_buf())),
            Some("vtk") => Ok(MeshSource::Vtk(path.to_path_buf())),
            Some("node") => Ok(MeshSource::TetGen {
                node: path.to_path_buf(),
                ele: path.with_extension("ele"),
            }),
            Some("ele") => Ok(MeshSource::TetGen {
                node: path.with_extension("node"),
                ele: path.to_path_buf(),
            }),
            _ => Err(Error::parse(
                path,
                "unknown mesh format (expected .msh, .vtk, .node or .ele)",
            )),
        }
    }
}

/// Load a mesh from a file or build a synthetic one; the measure defaults to
/// the tet volume and is multiplied by a per-tet density when supplied.
pub fn load_or_build(source: &MeshSource, density: Option<&Path>) -> Result<TetMesh> {
    let mesh = match source {
        MeshSource::Gmsh(path) => msh::read(path)?,
        MeshSource::TetGen { node, ele } => tetgen::read(node, ele)?,
        MeshSource::Vtk(path) => vtk::read(path)?,
        MeshSource::Synthetic(kind) => match *kind {
            SyntheticKind::Ball { refine } => crate::generate::ball(refine)?,
            SyntheticKind::ShellBall { subdiv, layers } => {
                crate::generate::shell_ball(subdiv, layers)?
            }
            SyntheticKind::SingleTet => crate::generate::single_tet(),
            SyntheticKind::RandomConvex { refine, seed } => {
                crate::generate::random_convex(refine, seed)?
            }
        },
    };
    match density {
        Some(path) => {
            let values = read_density(path, mesh.tet_count())?;
            mesh.with_density(&values)
        }
        None => Ok(mesh),
    }
}

/// Write a mesh (optionally with mapped coordinates) as `.msh` or `.vtk`.
pub fn write_mesh(path: &Path, mesh: &TetMesh, map: Option<&VertexMap>) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("msh") => msh::write(path, mesh, map),
        Some("vtk") => vtk::write(path, mesh, map),
        _ => Err(Error::parse(path, "unknown output format (.msh or .vtk)")),
    }
}

/// Plain-text density file: one positive real per tetrahedron, line-aligned
/// with the element list. `#` comments and blank lines are skipped.
pub fn read_density(path: &Path, tet_count: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Error::parse(path, format!("bad density value '{line}'")))?;
        values.push(v);
    }
    if values.len() != tet_count {
        return Err(Error::parse(
            path,
            format!("{} density values for {} tetrahedra", values.len(), tet_count),
        ));
    }
    Ok(values)
}

/// Boundary-map file: lines `node_id x y z` with unit-norm points, covering
/// exactly the boundary vertex set of the mesh. Points are validated to be
/// within 1e-6 of the unit sphere and then renormalized exactly.
pub fn read_boundary_map(path: &Path, mesh: &TetMesh) -> Result<BoundaryMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id_to_vertex: HashMap<u64, usize> = mesh
        .node_ids()
        .iter()
        .enumerate()
        .map(|(v, &id)| (id, v))
        .collect();

    let mut coords = vec![None; mesh.boundary_vertices().len()];
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let id: u64 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(path, format!("bad vertex id in '{line}'")))?;
        let mut p = crate::mesh::Vec3::zeros();
        for s in 0..3 {
            p[s] = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::parse(path, format!("bad coordinate in '{line}'")))?;
        }
        let &vertex = id_to_vertex
            .get(&id)
            .ok_or_else(|| Error::parse(path, format!("unknown node id {id}")))?;
        let pos = match mesh.vertex_class(vertex) {
            crate::mesh::VertexClass::Boundary(pos) => pos,
            crate::mesh::VertexClass::Interior(_) => {
                return Err(Error::parse(
                    path,
                    format!("node {id} is not a boundary vertex"),
                ))
            }
        };
        if (p.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::parse(
                path,
                format!("node {id} is not on the unit sphere: |p| = {}", p.norm()),
            ));
        }
        coords[pos] = Some(p / p.norm());
    }
    let coords: Option<Vec<_>> = coords.into_iter().collect();
    match coords {
        Some(coords) => Ok(BoundaryMap::new(coords)),
        None => Err(Error::parse(path, "boundary map does not cover the boundary")),
    }
}

/// 17 significant digits: enough for an exact f64 round trip.
pub fn fmt_full(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn resolve_ids(
    node_ids: &[u64],
    tets_by_id: &[[u64; 4]],
    path: &Path,
) -> Result<Vec<[usize; 4]>> {
    let map: HashMap<u64, usize> = node_ids
        .iter()
        .enumerate()
        .map(|(v, &id)| (id, v))
        .collect();
    if map.len() != node_ids.len() {
        return Err(Error::parse(path, "duplicate node ids"));
    }
    tets_by_id
        .iter()
        .map(|tet| {
            let mut out = [0usize; 4];
            for (slot, id) in out.iter_mut().zip(tet) {
                *slot = *map
                    .get(id)
                    .ok_or_else(|| Error::parse(path, format!("unknown node id {id}")))?;
            }
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;

    #[test]
    fn msh_roundtrip_is_exact() {
        let dir = std::env::temp_dir().join("ballmap-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("single.msh");
        let mesh = generate::random_convex(2, 3).unwrap();
        msh::write(&path, &mesh, None).unwrap();
        let back = msh::read(&path).unwrap();
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.tets(), mesh.tets());
    }

    #[test]
    fn vtk_roundtrip_is_exact() {
        let dir = std::env::temp_dir().join("ballmap-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("single.vtk");
        let mesh = generate::random_convex(2, 4).unwrap();
        vtk::write(&path, &mesh, None).unwrap();
        let back = vtk::read(&path).unwrap();
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.tets(), mesh.tets());
    }

    #[test]
    fn tetgen_pair_reads() {
        let dir = std::env::temp_dir().join("ballmap-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(
            dir.join("t.node"),
            "# reference tet\n4 3 0 0\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n",
        )
        .unwrap();
        std::fs::write(dir.join("t.ele"), "1 4 0\n1 1 2 3 4\n").unwrap();
        let mesh = tetgen::read(&dir.join("t.node"), &dir.join("t.ele")).unwrap();
        assert_eq!(mesh.tet_count(), 1);
        assert!((mesh.volumes()[0] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn density_scales_measure() {
        let dir = std::env::temp_dir().join("ballmap-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("density.txt");
        std::fs::write(&path, "2.0\n").unwrap();
        let mesh = load_or_build(
            &MeshSource::Synthetic(SyntheticKind::SingleTet),
            Some(&path),
        )
        .unwrap();
        assert!((mesh.measures()[0] - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn boundary_map_file_roundtrip() {
        let dir = std::env::temp_dir().join("ballmap-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let mesh = generate::octahedron();
        let bnd = crate::boundary::compute(&mesh, 5).unwrap();
        let path = dir.join("bmap.txt");
        let mut text = String::new();
        for (&v, p) in mesh.boundary_vertices().iter().zip(bnd.coords()) {
            text.push_str(&format!(
                "{} {} {} {}\n",
                mesh.node_ids()[v],
                fmt_full(p.x),
                fmt_full(p.y),
                fmt_full(p.z)
            ));
        }
        std::fs::write(&path, text).unwrap();
        let back = read_boundary_map(&path, &mesh).unwrap();
        for (a, b) in back.coords().iter().zip(bnd.coords()) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
