//! Deterministic synthetic meshes for tests and benchmarks.

use nalgebra::Matrix3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::mesh::{TetMesh, Vec3};

/// The reference tetrahedron (0,0,0), (1,0,0), (0,1,0), (0,0,1).
pub fn single_tet() -> TetMesh {
    let vertices = vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
    ];
    TetMesh::new(vertices, vec![[0, 1, 2, 3]]).expect("reference tet is valid")
}

/// Unit-ball mesh: a regular grid on `[-1, 1]^3` split into 6 tetrahedra per
/// cube, with every vertex warped by the cube-to-ball radial map
/// `p -> p * |p|_inf / |p|_2`. The warp carries the cube onto the solid ball,
/// so the grid topology (and hence genus zero) is preserved by construction.
pub fn ball(refine: u32) -> Result<TetMesh> {
    let n = refine.max(1) as usize;
    let idx = |i: usize, j: usize, k: usize| i + j * (n + 1) + k * (n + 1) * (n + 1);

    let mut vertices = Vec::with_capacity((n + 1).pow(3));
    for k in 0..=n {
        for j in 0..=n {
            for i in 0..=n {
                let p = Vec3::new(
                    -1.0 + 2.0 * i as f64 / n as f64,
                    -1.0 + 2.0 * j as f64 / n as f64,
                    -1.0 + 2.0 * k as f64 / n as f64,
                );
                vertices.push(cube_to_ball(p));
            }
        }
    }
    // vertices are pushed in i-fastest order; rebuild in idx order
    let mut ordered = vec![Vec3::zeros(); (n + 1).pow(3)];
    let mut it = 0;
    for k in 0..=n {
        for j in 0..=n {
            for i in 0..=n {
                ordered[idx(i, j, k)] = vertices[it];
                it += 1;
            }
        }
    }

    let mut tets = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let c = [
                    idx(i, j, k),
                    idx(i + 1, j, k),
                    idx(i, j + 1, k),
                    idx(i + 1, j + 1, k),
                    idx(i, j, k + 1),
                    idx(i + 1, j, k + 1),
                    idx(i, j + 1, k + 1),
                    idx(i + 1, j + 1, k + 1),
                ];
                // Kuhn subdivision around the main diagonal c[0]-c[7]
                for path in [
                    [c[0], c[1], c[3], c[7]],
                    [c[0], c[3], c[2], c[7]],
                    [c[0], c[2], c[6], c[7]],
                    [c[0], c[6], c[4], c[7]],
                    [c[0], c[4], c[5], c[7]],
                    [c[0], c[5], c[1], c[7]],
                ] {
                    tets.push(path);
                }
            }
        }
    }
    TetMesh::new(ordered, tets)
}

/// Radial map taking the cube `[-1,1]^3` onto the unit ball.
fn cube_to_ball(p: Vec3) -> Vec3 {
    let linf = p.x.abs().max(p.y.abs()).max(p.z.abs());
    let l2 = p.norm();
    if l2 == 0.0 {
        Vec3::zeros()
    } else {
        p * (linf / l2)
    }
}

/// Randomized convex mesh: the ball mesh composed with a seeded linear map of
/// positive determinant (rotation * anisotropic scaling * rotation).
pub fn random_convex(refine: u32, seed: u64) -> Result<TetMesh> {
    let base = ball(refine)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r1 = random_rotation(&mut rng);
    let r2 = random_rotation(&mut rng);
    let scales = Vec3::new(
        rng.random_range(0.6..1.5),
        rng.random_range(0.6..1.5),
        rng.random_range(0.6..1.5),
    );
    let a = r1 * Matrix3::from_diagonal(&scales) * r2;
    let vertices = base.vertices().iter().map(|&p| a * p).collect();
    TetMesh::new(vertices, base.tets().to_vec())
}

/// Unit-ball mesh built from concentric icosphere shells: `layers` shells at
/// radii `l / layers`, prisms between shells split into tetrahedra with the
/// smallest-index diagonal rule (conforming across neighbors), and an
/// innermost fan to the center. Compared to [`ball`], far more of the tet
/// budget sits on the boundary sphere, so the surface polyhedron
/// approximates the ball volume much more closely at equal tet counts.
pub fn shell_ball(subdiv: u32, layers: u32) -> Result<TetMesh> {
    let layers = layers.max(1) as usize;
    let (sphere_verts, sphere_tris) = icosphere(subdiv);
    let shell_size = sphere_verts.len();

    let mut vertices = Vec::with_capacity(1 + layers * shell_size);
    vertices.push(Vec3::zeros());
    for l in 1..=layers {
        let r = l as f64 / layers as f64;
        vertices.extend(sphere_verts.iter().map(|&p| r * p));
    }
    let shell = |l: usize, v: usize| 1 + (l - 1) * shell_size + v;

    let mut tets = Vec::new();
    for &[a, b, c] in &sphere_tris {
        tets.push([0, shell(1, a), shell(1, b), shell(1, c)]);
    }
    for l in 1..layers {
        for &[a, b, c] in &sphere_tris {
            let bottom = [shell(l, a), shell(l, b), shell(l, c)];
            let top = [shell(l + 1, a), shell(l + 1, b), shell(l + 1, c)];
            split_prism(bottom, top, &mut tets);
        }
    }
    TetMesh::new(vertices, tets)
}

/// Split the prism `bottom = (p0, p1, p2)`, `top = (p3, p4, p5)` with
/// `p(i+3)` above `p(i)` into three tetrahedra, choosing every quad diagonal
/// through the quad's smallest global index so that adjacent prisms conform.
fn split_prism(bottom: [usize; 3], top: [usize; 3], tets: &mut Vec<[usize; 4]>) {
    let mut p = [bottom[0], bottom[1], bottom[2], top[0], top[1], top[2]];
    // rotate/flip until the global minimum sits at p[0]
    let min_pos = (0..6).min_by_key(|&i| p[i]).unwrap();
    if min_pos >= 3 {
        p = [p[3], p[4], p[5], p[0], p[1], p[2]];
    }
    let min_pos = (0..3).min_by_key(|&i| p[i]).unwrap();
    p = match min_pos {
        0 => p,
        1 => [p[1], p[2], p[0], p[4], p[5], p[3]],
        _ => [p[2], p[0], p[1], p[5], p[3], p[4]],
    };
    if p[1].min(p[5]) < p[2].min(p[4]) {
        tets.push([p[0], p[1], p[2], p[5]]);
        tets.push([p[0], p[1], p[5], p[4]]);
    } else {
        tets.push([p[0], p[1], p[2], p[4]]);
        tets.push([p[0], p[2], p[5], p[4]]);
    }
    tets.push([p[0], p[4], p[5], p[3]]);
}

/// Icosahedron subdivided `subdiv` times with vertices on the unit sphere.
fn icosphere(subdiv: u32) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut tris: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdiv {
        let mut midpoint: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let p = ((verts[a] + verts[b]) / 2.0).normalize();
                verts.push(p);
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for &[a, b, c] in &tris {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        tris = next;
    }
    (verts, tris)
}

/// Eight tetrahedra joining the center of a regular octahedron to its faces.
/// The boundary is the octahedron surface; handy as a tiny symmetric mesh.
pub fn octahedron() -> TetMesh {
    let vertices = vec![
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(-1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, -1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
        Vec3::new(0.0, 0.0, -1.0),
        Vec3::new(0.0, 0.0, 0.0),
    ];
    let faces = [
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    let tets = faces.map(|[a, b, c]| [6, a, b, c]).to_vec();
    TetMesh::new(vertices, tets).expect("octahedron star is valid")
}

pub(crate) fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let axis = loop {
        let v = Vec3::new(
            rng.sample::<f64, _>(rand_distr::StandardNormal),
            rng.sample::<f64, _>(rand_distr::StandardNormal),
            rng.sample::<f64, _>(rand_distr::StandardNormal),
        );
        if v.norm() > 1e-6 {
            break nalgebra::Unit::new_normalize(v);
        }
    };
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    nalgebra::Rotation3::from_axis_angle(&axis, angle).into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{folding_count, VertexMap};

    #[test]
    fn ball_mesh_is_valid_and_unfolded() {
        let mesh = ball(3).unwrap();
        assert_eq!(mesh.tet_count(), 6 * 27);
        assert_eq!(mesh.vertex_count(), 64);
        let id = VertexMap::identity(&mesh);
        assert_eq!(folding_count(&mesh, &id), 0);
        for &v in mesh.boundary_vertices() {
            assert!((mesh.vertices()[v].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ball_mesh_volume_close_to_unit_ball() {
        let mesh = ball(8).unwrap();
        let total: f64 = mesh.volumes().iter().sum();
        let exact = 4.0 * std::f64::consts::PI / 3.0;
        assert!((total - exact).abs() / exact < 0.05, "total = {total}");
    }

    #[test]
    fn random_convex_deterministic() {
        let a = random_convex(2, 7).unwrap();
        let b = random_convex(2, 7).unwrap();
        assert_eq!(a.vertices(), b.vertices());
        let c = random_convex(2, 8).unwrap();
        assert_ne!(a.vertices(), c.vertices());
    }

    #[test]
    fn shell_ball_is_valid_and_fills_the_ball() {
        let mesh = shell_ball(2, 2).unwrap();
        // conformity of the prism splits shows up as a clean boundary
        assert_eq!(mesh.boundary_faces().len(), 20 * 16);
        let total: f64 = mesh.volumes().iter().sum();
        let exact = 4.0 * std::f64::consts::PI / 3.0;
        assert!((total - exact).abs() / exact < 0.05, "total = {total}");
        let id = VertexMap::identity(&mesh);
        assert_eq!(folding_count(&mesh, &id), 0);
    }

    #[test]
    fn octahedron_boundary() {
        let mesh = octahedron();
        assert_eq!(mesh.boundary_faces().len(), 8);
        assert_eq!(mesh.interior_vertices(), &[6]);
    }
}
