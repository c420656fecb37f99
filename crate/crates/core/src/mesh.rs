//! Tetrahedral mesh representation: simplex geometry, boundary extraction and
//! measure handling.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Classification of a vertex with its position inside the interior or
/// boundary index set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexClass {
    Interior(usize),
    Boundary(usize),
}

/// A simplicial 3-complex with a single closed genus-zero boundary.
///
/// Immutable after construction; tetrahedra are stored with positive signed
/// volume and the boundary faces are oriented outward.
#[derive(Debug, Clone)]
pub struct TetMesh {
    vertices: Vec<Vec3>,
    tets: Vec<[usize; 4]>,
    volume: Vec<f64>,
    measure: Vec<f64>,
    node_ids: Vec<u64>,
    boundary_faces: Vec<[usize; 3]>,
    boundary_vertices: Vec<usize>,
    interior_vertices: Vec<usize>,
    vertex_class: Vec<VertexClass>,
}

const DEGENERATE_REL: f64 = 1e-12;

impl TetMesh {
    /// Build a mesh from raw vertices and tetrahedra with `measure = |tet|`.
    ///
    /// Tetrahedra with negative signed volume are reoriented. Fails on
    /// degenerate tetrahedra, unreferenced vertices, and boundaries that are
    /// not a single closed genus-zero surface.
    pub fn new(vertices: Vec<Vec3>, tets: Vec<[usize; 4]>) -> Result<Self> {
        let ids = (1..=vertices.len() as u64).collect();
        Self::with_node_ids(vertices, tets, ids)
    }

    /// Same as [`TetMesh::new`] but keeps the node ids used by the source
    /// file, so that externally supplied per-vertex data can refer to them.
    pub fn with_node_ids(
        vertices: Vec<Vec3>,
        mut tets: Vec<[usize; 4]>,
        node_ids: Vec<u64>,
    ) -> Result<Self> {
        let n = vertices.len();
        if node_ids.len() != n {
            return Err(Error::Invalid(format!(
                "{} node ids for {} vertices",
                node_ids.len(),
                n
            )));
        }
        for (t, tet) in tets.iter().enumerate() {
            for &v in tet {
                if v >= n {
                    return Err(Error::Invalid(format!(
                        "tetrahedron {t} references vertex {v} out of {n}"
                    )));
                }
            }
        }

        let mut volume = Vec::with_capacity(tets.len());
        for tet in &mut tets {
            let mut vol = signed_volume(&tet.map(|v| vertices[v]));
            if vol < 0.0 {
                tet.swap(2, 3);
                vol = -vol;
            }
            volume.push(vol);
        }
        if volume.is_empty() {
            return Err(Error::Invalid("mesh has no tetrahedra".into()));
        }
        let mean_vol = volume.iter().sum::<f64>() / volume.len() as f64;
        let threshold = DEGENERATE_REL * mean_vol;
        for (t, &vol) in volume.iter().enumerate() {
            if vol <= threshold {
                return Err(Error::DegenerateTet {
                    tet: t,
                    volume: vol,
                    threshold,
                });
            }
        }

        let mut referenced = vec![false; n];
        for tet in &tets {
            for &v in tet {
                referenced[v] = true;
            }
        }
        if let Some(v) = referenced.iter().position(|&r| !r) {
            return Err(Error::Invalid(format!(
                "vertex {v} is not referenced by any tetrahedron"
            )));
        }

        let boundary_faces = extract_boundary(&vertices, &tets)?;
        check_boundary_topology(&boundary_faces)?;

        let mut on_boundary = vec![false; n];
        for face in &boundary_faces {
            for &v in face {
                on_boundary[v] = true;
            }
        }
        let boundary_vertices: Vec<usize> = (0..n).filter(|&v| on_boundary[v]).collect();
        let interior_vertices: Vec<usize> = (0..n).filter(|&v| !on_boundary[v]).collect();
        let mut vertex_class = vec![VertexClass::Interior(0); n];
        for (pos, &v) in boundary_vertices.iter().enumerate() {
            vertex_class[v] = VertexClass::Boundary(pos);
        }
        for (pos, &v) in interior_vertices.iter().enumerate() {
            vertex_class[v] = VertexClass::Interior(pos);
        }

        let measure = volume.clone();
        Ok(Self {
            vertices,
            tets,
            volume,
            measure,
            node_ids,
            boundary_faces,
            boundary_vertices,
            interior_vertices,
            vertex_class,
        })
    }

    /// Replace the measure by `density(t) * |tet t|`.
    pub fn with_density(mut self, density: &[f64]) -> Result<Self> {
        if density.len() != self.tets.len() {
            return Err(Error::Invalid(format!(
                "{} density values for {} tetrahedra",
                density.len(),
                self.tets.len()
            )));
        }
        for (t, &d) in density.iter().enumerate() {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NonPositiveMeasure { tet: t, value: d });
            }
            self.measure[t] = d * self.volume[t];
        }
        Ok(self)
    }

    /// Rescale the measure so that its total equals the unit-ball volume
    /// `4π/3`, matching an image that fills the unit ball.
    pub fn normalize_total_measure(&self) -> TetMesh {
        let total: f64 = self.measure.iter().sum();
        let scale = std::f64::consts::FRAC_PI_3 * 4.0 / total;
        let mut out = self.clone();
        for m in &mut out.measure {
            *m *= scale;
        }
        out
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn tet_count(&self) -> usize {
        self.tets.len()
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    /// Source volumes `|tet|` (positive).
    pub fn volumes(&self) -> &[f64] {
        &self.volume
    }

    /// Per-tetrahedron measure `mu` (volume by default, mass with a density).
    pub fn measures(&self) -> &[f64] {
        &self.measure
    }

    pub fn total_measure(&self) -> f64 {
        self.measure.iter().sum()
    }

    pub fn node_ids(&self) -> &[u64] {
        &self.node_ids
    }

    /// Outward-oriented boundary triangles.
    pub fn boundary_faces(&self) -> &[[usize; 3]] {
        &self.boundary_faces
    }

    /// Ordered boundary index set.
    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary_vertices
    }

    /// Ordered interior index set.
    pub fn interior_vertices(&self) -> &[usize] {
        &self.interior_vertices
    }

    pub fn vertex_class(&self, v: usize) -> VertexClass {
        self.vertex_class[v]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        matches!(self.vertex_class[v], VertexClass::Boundary(_))
    }
}

/// Signed volume of the tetrahedron spanned by four points.
pub fn signed_volume(p: &[Vec3; 4]) -> f64 {
    (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0])) / 6.0
}

/// Vertex images of a piecewise affine map, one row per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexMap {
    coords: Vec<Vec3>,
}

impl VertexMap {
    pub fn new(coords: Vec<Vec3>) -> Self {
        Self { coords }
    }

    /// The identity map on the mesh vertices.
    pub fn identity(mesh: &TetMesh) -> Self {
        Self {
            coords: mesh.vertices().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Vec3] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [Vec3] {
        &mut self.coords
    }

    pub fn point(&self, v: usize) -> Vec3 {
        self.coords[v]
    }

    /// Image points of one tetrahedron.
    pub fn tet_images(&self, tet: &[usize; 4]) -> [Vec3; 4] {
        tet.map(|v| self.coords[v])
    }

    /// Signed image volume of tetrahedron `t`.
    pub fn image_volume(&self, mesh: &TetMesh, t: usize) -> f64 {
        signed_volume(&self.tet_images(&mesh.tets()[t]))
    }

    /// Column-stacked vector `[f^1; f^2; f^3]` of length `3n`.
    pub fn stacked(&self) -> Vec<f64> {
        let n = self.coords.len();
        let mut out = vec![0.0; 3 * n];
        for (t, p) in self.coords.iter().enumerate() {
            out[t] = p.x;
            out[n + t] = p.y;
            out[2 * n + t] = p.z;
        }
        out
    }

    /// Inverse of [`VertexMap::stacked`].
    pub fn from_stacked(v: &[f64]) -> Self {
        let n = v.len() / 3;
        let coords = (0..n)
            .map(|t| Vec3::new(v[t], v[n + t], v[2 * n + t]))
            .collect();
        Self { coords }
    }

    /// Interleaved per-vertex difference `self - other`, blocks of
    /// `(dx, dy, dz)` per vertex.
    pub fn interleaved_diff(&self, other: &VertexMap) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.coords.len());
        for (a, b) in self.coords.iter().zip(&other.coords) {
            let d = a - b;
            out.extend_from_slice(&[d.x, d.y, d.z]);
        }
        out
    }

    /// Apply `f -> f R^T` (each row multiplied by `R^T`).
    pub fn rotate(&mut self, r: &nalgebra::Matrix3<f64>) {
        for p in &mut self.coords {
            *p = r * *p;
        }
    }
}

/// Boundary vertex images, aligned with [`TetMesh::boundary_vertices`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMap {
    coords: Vec<Vec3>,
}

impl BoundaryMap {
    pub fn new(coords: Vec<Vec3>) -> Self {
        Self { coords }
    }

    /// Extract the boundary rows of a full map.
    pub fn from_vertex_map(mesh: &TetMesh, map: &VertexMap) -> Self {
        Self {
            coords: mesh
                .boundary_vertices()
                .iter()
                .map(|&v| map.point(v))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Vec3] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [Vec3] {
        &mut self.coords
    }
}

/// Number of tetrahedra whose image signed volume is non-positive.
pub fn folding_count(mesh: &TetMesh, map: &VertexMap) -> usize {
    mesh.tets()
        .iter()
        .filter(|tet| signed_volume(&map.tet_images(tet)) <= 0.0)
        .count()
}

/// Signed volume enclosed by the image of the boundary surface, via the
/// divergence theorem on the cone from the origin.
pub fn boundary_enclosed_volume(mesh: &TetMesh, map: &VertexMap) -> f64 {
    mesh.boundary_faces()
        .iter()
        .map(|&[a, b, c]| {
            let (pa, pb, pc) = (map.point(a), map.point(b), map.point(c));
            pa.dot(&pb.cross(&pc)) / 6.0
        })
        .sum()
}

fn face_key(a: usize, b: usize, c: usize) -> [usize; 3] {
    let mut k = [a, b, c];
    k.sort_unstable();
    k
}

/// Faces that belong to exactly one tetrahedron, oriented outward.
fn extract_boundary(vertices: &[Vec3], tets: &[[usize; 4]]) -> Result<Vec<[usize; 3]>> {
    let mut counts: HashMap<[usize; 3], (usize, [usize; 4])> = HashMap::new();
    for tet in tets {
        for skip in 0..4 {
            let f: Vec<usize> = (0..4).filter(|&i| i != skip).map(|i| tet[i]).collect();
            let key = face_key(f[0], f[1], f[2]);
            counts
                .entry(key)
                .and_modify(|e| e.0 += 1)
                .or_insert((1, *tet));
        }
    }
    let mut boundary = Vec::new();
    for (key, (count, tet)) in &counts {
        match count {
            1 => {
                let opposite = tet
                    .iter()
                    .copied()
                    .find(|v| !key.contains(v))
                    .expect("face key vertices belong to the owning tet");
                let [mut a, mut b, c] = *key;
                let (pa, pb, pc, pd) = (
                    vertices[a],
                    vertices[b],
                    vertices[c],
                    vertices[opposite],
                );
                // outward: normal points away from the opposite vertex
                if (pb - pa).cross(&(pc - pa)).dot(&(pd - pa)) > 0.0 {
                    std::mem::swap(&mut a, &mut b);
                }
                boundary.push([a, b, c]);
            }
            2 => {}
            _ => {
                return Err(Error::NonmanifoldFace {
                    a: key[0],
                    b: key[1],
                    c: key[2],
                    count: *count,
                })
            }
        }
    }
    if boundary.is_empty() {
        return Err(Error::NoBoundary);
    }
    boundary.sort_unstable();
    Ok(boundary)
}

/// Closed manifold check, connectivity, and genus via Euler characteristic.
fn check_boundary_topology(faces: &[[usize; 3]]) -> Result<()> {
    let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
    for &[a, b, c] in faces {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            let key = (u.min(v), u.max(v));
            *edge_count.entry(key).or_insert(0) += 1;
        }
    }
    for (&(a, b), &count) in &edge_count {
        if count != 2 {
            return Err(Error::NonmanifoldBoundaryEdge { a, b, count });
        }
    }

    // connectivity over faces sharing an edge
    let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (fi, &[a, b, c]) in faces.iter().enumerate() {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            edge_faces.entry((u.min(v), u.max(v))).or_default().push(fi);
        }
    }
    let mut seen = vec![false; faces.len()];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(fi) = stack.pop() {
        let [a, b, c] = faces[fi];
        for (u, v) in [(a, b), (b, c), (c, a)] {
            for &other in &edge_faces[&(u.min(v), u.max(v))] {
                if !seen[other] {
                    seen[other] = true;
                    stack.push(other);
                }
            }
        }
    }
    let components = if seen.iter().all(|&s| s) {
        1
    } else {
        // count them for the error message
        let mut comps = 1;
        let mut seen2 = seen;
        while let Some(start) = seen2.iter().position(|&s| !s) {
            comps += 1;
            let mut stack = vec![start];
            seen2[start] = true;
            while let Some(fi) = stack.pop() {
                let [a, b, c] = faces[fi];
                for (u, v) in [(a, b), (b, c), (c, a)] {
                    for &other in &edge_faces[&(u.min(v), u.max(v))] {
                        if !seen2[other] {
                            seen2[other] = true;
                            stack.push(other);
                        }
                    }
                }
            }
        }
        comps
    };
    if components != 1 {
        return Err(Error::MultipleBoundaryComponents { count: components });
    }

    let mut verts: Vec<usize> = faces.iter().flatten().copied().collect();
    verts.sort_unstable();
    verts.dedup();
    let chi = verts.len() as i64 - edge_count.len() as i64 + faces.len() as i64;
    if chi != 2 {
        return Err(Error::BoundaryGenus { chi });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn reference_tet() -> (Vec<Vec3>, Vec<[usize; 4]>) {
        (
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 1, 2, 3]],
        )
    }

    #[test]
    fn reference_tet_volume_and_sets() {
        let (v, t) = reference_tet();
        let mesh = TetMesh::new(v, t).unwrap();
        assert_eq!(mesh.tet_count(), 1);
        assert_relative_eq!(mesh.volumes()[0], 1.0 / 6.0, max_relative = 1e-15);
        assert_eq!(mesh.boundary_vertices(), &[0, 1, 2, 3]);
        assert!(mesh.interior_vertices().is_empty());
    }

    #[test]
    fn signed_volume_antisymmetry_and_degeneracy() {
        let p = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        assert_relative_eq!(signed_volume(&p), 1.0 / 6.0);
        let swapped = [p[1], p[0], p[2], p[3]];
        assert_relative_eq!(signed_volume(&swapped), -1.0 / 6.0);
        let coplanar = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.3, 0.7, 0.0),
        ];
        assert_eq!(signed_volume(&coplanar), 0.0);
    }

    #[test]
    fn inverted_tet_is_reoriented() {
        let (v, _) = reference_tet();
        let mesh = TetMesh::new(v, vec![[0, 2, 1, 3]]).unwrap();
        assert!(mesh.volumes()[0] > 0.0);
        assert_relative_eq!(mesh.volumes()[0], 1.0 / 6.0);
    }

    #[test]
    fn normalize_total_measure_targets_ball_volume() {
        let (v, t) = reference_tet();
        let mesh = TetMesh::new(v, t).unwrap();
        let normalized = mesh.normalize_total_measure();
        assert_relative_eq!(
            normalized.total_measure(),
            4.0 * std::f64::consts::PI / 3.0,
            max_relative = 1e-14
        );
        // idempotent
        let twice = normalized.normalize_total_measure();
        for (a, b) in twice.measures().iter().zip(normalized.measures()) {
            assert_relative_eq!(a, b, max_relative = 1e-15);
        }
    }

    #[test]
    fn folding_counts() {
        let (v, t) = reference_tet();
        let mesh = TetMesh::new(v, t).unwrap();
        let id = VertexMap::identity(&mesh);
        assert_eq!(folding_count(&mesh, &id), 0);

        // reflect vertex 3 through the xy-plane: image volume flips sign
        let mut folded = id.clone();
        folded.coords_mut()[3] = Vec3::new(0.0, 0.0, -1.0);
        assert_eq!(folding_count(&mesh, &folded), 1);

        // collapse onto a plane: counted as folded
        let mut flat = id;
        flat.coords_mut()[3] = Vec3::new(0.25, 0.25, 0.0);
        assert_eq!(folding_count(&mesh, &flat), 1);
    }

    #[test]
    fn degenerate_tet_rejected() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.5, 0.5, 0.0),
        ];
        let err = TetMesh::new(v, vec![[0, 1, 2, 3]]).unwrap_err();
        assert!(matches!(err, Error::DegenerateTet { .. }));
    }

    #[test]
    fn stacked_roundtrip() {
        let coords = vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(-4.0, 5.0, 0.5)];
        let map = VertexMap::new(coords);
        let s = map.stacked();
        assert_eq!(s, vec![1.0, -4.0, 2.0, 5.0, 3.0, 0.5]);
        assert_eq!(VertexMap::from_stacked(&s), map);
    }
}
