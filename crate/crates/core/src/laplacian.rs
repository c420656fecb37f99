//! Volumetric stretch Laplacian: assembly of the map-dependent weights, the
//! stretch energy, its closed-form gradient, and per-tetrahedron stretch
//! factors.

use crate::error::{Error, Result};
use crate::mesh::{signed_volume, TetMesh, Vec3, VertexMap};

/// The six (edge, opposite edge) pairs of a tetrahedron in local indices.
pub const TET_EDGE_PAIRS: [([usize; 2], [usize; 2]); 6] = [
    ([0, 1], [2, 3]),
    ([0, 2], [1, 3]),
    ([0, 3], [1, 2]),
    ([1, 2], [0, 3]),
    ([1, 3], [0, 2]),
    ([2, 3], [0, 1]),
];

/// Per-tetrahedron weight contribution for the edge `{a, b}` with opposite
/// edge `{c, d}`:
/// `-[(f_c - f_a) x (f_d - f_a)] . [(f_d - f_b) x (f_c - f_b)] / (36 mu)`.
///
/// Symmetric in `a <-> b` and invariant under `c <-> d`.
pub fn pair_weight(images: &[Vec3; 4], mu: f64, a: usize, b: usize, c: usize, d: usize) -> f64 {
    let left = (images[c] - images[a]).cross(&(images[d] - images[a]));
    let right = (images[d] - images[b]).cross(&(images[c] - images[b]));
    -left.dot(&right) / (36.0 * mu)
}

/// Weight contribution of one tetrahedron to the edge given as a local
/// unordered pair of its vertices (0..4).
pub fn edge_weight(images: &[Vec3; 4], mu: f64, edge: (usize, usize)) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::NonPositiveMeasure { tet: 0, value: mu });
    }
    let (a, b) = edge;
    if a > 3 || b > 3 || a == b {
        return Err(Error::Invalid(format!("invalid local edge ({a}, {b})")));
    }
    let mut rest = (0..4).filter(|&v| v != a && v != b);
    let c = rest.next().unwrap();
    let d = rest.next().unwrap();
    Ok(pair_weight(images, mu, a, b, c, d))
}

/// Sparse symmetric stretch Laplacian. Off-diagonal entries are stored once
/// per unordered edge; the diagonal is the negated row sum.
///
/// Sign convention: the off-diagonal entry is the *negated* sum of the
/// per-tet pair weights, so that positive weights give a positive
/// semidefinite matrix and `1/2 trace(f^T L f)` equals the per-tet energy
/// `sum 3 |f(tau)|^2 / (2 mu)` with a positive sign. (Carrying the pair
/// weights directly as off-diagonals makes the trace form the negative of
/// the per-tet form, which breaks the energy identity and the gradient
/// formula.)
#[derive(Debug, Clone)]
pub struct StretchLaplacian {
    n: usize,
    edges: Vec<(usize, usize)>,
    weights: Vec<f64>,
    diag: Vec<f64>,
}

impl StretchLaplacian {
    /// Assemble `L_V(f)`. Iterates tetrahedra in index order so the summation
    /// is reproducible.
    pub fn assemble(mesh: &TetMesh, map: &VertexMap) -> Self {
        let pattern = EdgePattern::build(mesh);
        Self::assemble_with_pattern(mesh, map, &pattern)
    }

    /// Assembly against a prebuilt edge pattern (reused across iterations).
    pub fn assemble_with_pattern(mesh: &TetMesh, map: &VertexMap, pattern: &EdgePattern) -> Self {
        let n = mesh.vertex_count();
        let mut weights = vec![0.0; pattern.edges.len()];
        for (t, tet) in mesh.tets().iter().enumerate() {
            let images = map.tet_images(tet);
            let mu = mesh.measures()[t];
            for (slot, &([a, b], [c, d])) in TET_EDGE_PAIRS.iter().enumerate() {
                let edge_id = pattern.tet_edges[t][slot];
                weights[edge_id] -= pair_weight(&images, mu, a, b, c, d);
            }
        }
        let mut diag = vec![0.0; n];
        for (&(i, j), &w) in pattern.edges.iter().zip(&weights) {
            diag[i] -= w;
            diag[j] -= w;
        }
        Self {
            n,
            edges: pattern.edges.clone(),
            weights,
            diag,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Unordered edges `(i, j)` with `i < j`, sorted lexicographically.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// The off-diagonal entry `L_ij`, or `None` when `{i, j}` is not an edge.
    pub fn off_diagonal(&self, i: usize, j: usize) -> Option<f64> {
        let key = (i.min(j), i.max(j));
        self.edges
            .binary_search(&key)
            .ok()
            .map(|pos| self.weights[pos])
    }

    /// `L f` as an n-by-3 table.
    pub fn apply(&self, map: &VertexMap) -> Vec<Vec3> {
        let mut out: Vec<Vec3> = self
            .diag
            .iter()
            .zip(map.coords())
            .map(|(&d, p)| d * p)
            .collect();
        for (&(i, j), &w) in self.edges.iter().zip(&self.weights) {
            out[i] += w * map.point(j);
            out[j] += w * map.point(i);
        }
        out
    }

    /// Quadratic form `1/2 trace(f^T L f)`, evaluated edgewise as
    /// `-1/2 sum_ij w_ij |f_i - f_j|^2` (exact by the zero row sums).
    pub fn energy(&self, map: &VertexMap) -> f64 {
        let mut acc = 0.0;
        for (&(i, j), &w) in self.edges.iter().zip(&self.weights) {
            acc -= w * (map.point(i) - map.point(j)).norm_squared();
        }
        acc / 2.0
    }

    /// Largest absolute row sum relative to the largest entry; zero up to
    /// rounding by construction.
    pub fn max_row_sum(&self) -> f64 {
        let mut sums = self.diag.clone();
        for (&(i, j), &w) in self.edges.iter().zip(&self.weights) {
            sums[i] += w;
            sums[j] += w;
        }
        sums.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }
}

/// Edge list and per-tet edge slots, fixed per mesh.
#[derive(Debug, Clone)]
pub struct EdgePattern {
    pub edges: Vec<(usize, usize)>,
    tet_edges: Vec<[usize; 6]>,
}

impl EdgePattern {
    pub fn build(mesh: &TetMesh) -> Self {
        let mut edges: Vec<(usize, usize)> = Vec::with_capacity(mesh.tet_count() * 6);
        for tet in mesh.tets() {
            for ([a, b], _) in TET_EDGE_PAIRS {
                let (i, j) = (tet[a].min(tet[b]), tet[a].max(tet[b]));
                edges.push((i, j));
            }
        }
        edges.sort_unstable();
        edges.dedup();

        let tet_edges = mesh
            .tets()
            .iter()
            .map(|tet| {
                let mut slots = [0usize; 6];
                for (s, ([a, b], _)) in TET_EDGE_PAIRS.iter().enumerate() {
                    let key = (tet[*a].min(tet[*b]), tet[*a].max(tet[*b]));
                    slots[s] = edges.binary_search(&key).expect("edge present");
                }
                slots
            })
            .collect();
        Self { edges, tet_edges }
    }
}

/// Volumetric stretch energy `E_V(f) = 1/2 trace(f^T L_V(f) f)`.
pub fn energy(mesh: &TetMesh, map: &VertexMap) -> f64 {
    StretchLaplacian::assemble(mesh, map).energy(map)
}

/// Gradient of the stretch energy: row `t` is `3 [L_V(f) f]_t`.
pub fn energy_gradient(mesh: &TetMesh, map: &VertexMap) -> Vec<Vec3> {
    let lap = StretchLaplacian::assemble(mesh, map);
    lap.apply(map).into_iter().map(|g| 3.0 * g).collect()
}

/// Per-tetrahedron stretch factors `sigma(tau) = mu(tau) / |f(tau)|` with the
/// signed image volume, plus their mean and standard deviation. Degenerate
/// images are flagged infinite and excluded from the summary.
#[derive(Debug, Clone)]
pub struct StretchFactors {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Number of degenerate image tetrahedra excluded from the summary.
    pub degenerate: usize,
}

pub fn stretch_factors(mesh: &TetMesh, map: &VertexMap) -> StretchFactors {
    let mut values = Vec::with_capacity(mesh.tet_count());
    let mut degenerate = 0usize;
    for (t, tet) in mesh.tets().iter().enumerate() {
        let vol = signed_volume(&map.tet_images(tet));
        if vol == 0.0 {
            degenerate += 1;
            values.push(f64::INFINITY);
        } else {
            values.push(mesh.measures()[t] / vol);
        }
    }
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let (mean, std) = if finite.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / finite.len() as f64;
        (mean, var.sqrt())
    };
    StretchFactors {
        values,
        mean,
        std,
        degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference_images() -> [Vec3; 4] {
        [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ]
    }

    fn random_map(n: usize, rng: &mut impl Rng) -> VertexMap {
        VertexMap::new(
            (0..n)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn edge_weight_reference_value() {
        // frozen by direct evaluation of the two cross products:
        // (f2-f0)x(f3-f0) = (1,0,0), (f3-f1)x(f2-f1) = (-1,-1,-1),
        // dot = -1, weight = -(-1)/(36 * 1/6) = 1/6
        let w = edge_weight(&reference_images(), 1.0 / 6.0, (0, 1)).unwrap();
        assert_relative_eq!(w, 1.0 / 6.0, max_relative = 1e-15);
    }

    #[test]
    fn edge_weight_scaling_and_symmetry() {
        let imgs = reference_images();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let pts: [Vec3; 4] = std::array::from_fn(|_| {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            });
            let c = rng.random_range(0.5..2.0);
            let scaled = pts.map(|p| c * p);
            for (a, b) in [(0usize, 1usize), (1, 2), (2, 3), (0, 3)] {
                let w = edge_weight(&pts, 0.3, (a, b)).unwrap();
                let ws = edge_weight(&scaled, 0.3, (a, b)).unwrap();
                assert_relative_eq!(ws, c.powi(4) * w, max_relative = 1e-12);
                let wr = edge_weight(&pts, 0.3, (b, a)).unwrap();
                assert_relative_eq!(w, wr, max_relative = 1e-15);
            }
        }
        assert!(edge_weight(&imgs, 0.0, (0, 1)).is_err());
    }

    #[test]
    fn assemble_single_tet() {
        let mesh = generate::single_tet();
        let map = VertexMap::identity(&mesh);
        let lap = StretchLaplacian::assemble(&mesh, &map);
        // negated pair weight, see the sign note on StretchLaplacian
        assert_relative_eq!(lap.off_diagonal(0, 1).unwrap(), -1.0 / 6.0);
        assert!(lap.max_row_sum() < 1e-15);
        // symmetry is structural; spot-check
        assert_eq!(lap.off_diagonal(1, 0), lap.off_diagonal(0, 1));
    }

    #[test]
    fn assemble_additivity_over_shared_face() {
        // two tets sharing face (0,1,2)
        let vertices = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.2, 0.2, 1.0),
            Vec3::new(0.3, 0.3, -1.0),
        ];
        let mesh =
            crate::mesh::TetMesh::new(vertices.clone(), vec![[0, 1, 2, 3], [0, 2, 1, 4]]).unwrap();
        let map = VertexMap::identity(&mesh);
        let lap = StretchLaplacian::assemble(&mesh, &map);

        // shared-edge entry accumulates both per-tet contributions
        let tets = mesh.tets();
        let mut expected = 0.0;
        for (t, tet) in tets.iter().enumerate() {
            if let (Some(a), Some(b)) = (
                tet.iter().position(|&v| v == 0),
                tet.iter().position(|&v| v == 1),
            ) {
                expected -=
                    edge_weight(&map.tet_images(tet), mesh.measures()[t], (a, b)).unwrap();
            }
        }
        assert_relative_eq!(lap.off_diagonal(0, 1).unwrap(), expected, max_relative = 1e-14);
    }

    #[test]
    fn constant_map_gives_zero_matrix() {
        let mesh = generate::octahedron();
        let map = VertexMap::new(vec![Vec3::new(0.4, -0.1, 0.9); mesh.vertex_count()]);
        let lap = StretchLaplacian::assemble(&mesh, &map);
        assert!(lap.weights().iter().all(|&w| w == 0.0));
        assert!(lap.diag().iter().all(|&d| d == 0.0));
        let grad = energy_gradient(&mesh, &map);
        assert!(grad.iter().all(|g| g.norm() == 0.0));
    }

    #[test]
    fn energy_reference_tet() {
        let mesh = generate::single_tet();
        let map = VertexMap::identity(&mesh);
        assert_relative_eq!(energy(&mesh, &map), 0.25, max_relative = 1e-14);
    }

    #[test]
    fn trace_form_matches_per_tet_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for mesh in [generate::octahedron(), generate::ball(2).unwrap()] {
            for _ in 0..20 {
                let map = random_map(mesh.vertex_count(), &mut rng);
                let e_trace = energy(&mesh, &map);
                let e_per_tet: f64 = mesh
                    .tets()
                    .iter()
                    .enumerate()
                    .map(|(t, tet)| {
                        let v = crate::mesh::signed_volume(&map.tet_images(tet));
                        3.0 * v * v / (2.0 * mesh.measures()[t])
                    })
                    .sum();
                assert!(
                    (e_trace - e_per_tet).abs() <= 1e-10 * e_per_tet.max(1.0),
                    "{e_trace} vs {e_per_tet}"
                );
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mesh = generate::octahedron();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let map = random_map(mesh.vertex_count(), &mut rng);
            let grad = energy_gradient(&mesh, &map);
            let h = 1e-5;
            let mut max_rel: f64 = 0.0;
            let norm: f64 = grad.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
            for t in 0..mesh.vertex_count() {
                for s in 0..3 {
                    let mut plus = map.clone();
                    plus.coords_mut()[t][s] += h;
                    let mut minus = map.clone();
                    minus.coords_mut()[t][s] -= h;
                    let fd = (energy(&mesh, &plus) - energy(&mesh, &minus)) / (2.0 * h);
                    max_rel = max_rel.max((fd - grad[t][s]).abs());
                }
            }
            assert!(max_rel / norm <= 1e-6, "max abs dev {max_rel}, norm {norm}");
        }
    }

    #[test]
    fn translation_and_rotation_invariance() {
        let mesh = generate::ball(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let map = random_map(mesh.vertex_count(), &mut rng);
        let e0 = energy(&mesh, &map);

        let shift = Vec3::new(0.7, -2.0, 0.3);
        let translated = VertexMap::new(map.coords().iter().map(|p| p + shift).collect());
        assert_relative_eq!(energy(&mesh, &translated), e0, max_relative = 1e-10);

        let rot = generate::random_rotation(&mut rng);
        let mut rotated = map.clone();
        rotated.rotate(&rot.transpose());
        assert_relative_eq!(energy(&mesh, &rotated), e0, max_relative = 1e-10);
    }

    #[test]
    fn cross_product_form_matches_dihedral_form() {
        // w contribution = -(1/(9 mu)) * A_ikl * A_jkl * cos(theta), where
        // theta is the angle with cos(pi - theta) = n_ikl . n_jkl for the
        // (interior) dihedral angle along the opposite edge {k, l}
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let pts: [Vec3; 4] = std::array::from_fn(|_| {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            });
            if signed_volume(&pts).abs() < 1e-3 {
                continue;
            }
            let mu = rng.random_range(0.1..2.0);
            for ([a, b], [c, d]) in TET_EDGE_PAIRS {
                let w = pair_weight(&pts, mu, a, b, c, d);

                let area = |p: Vec3, q: Vec3, r: Vec3| (q - p).cross(&(r - p)).norm() / 2.0;
                let a_ikl = area(pts[a], pts[c], pts[d]);
                let a_jkl = area(pts[b], pts[c], pts[d]);
                // interior dihedral along edge (c, d)
                let e1 = pts[d] - pts[c];
                let n1 = e1.cross(&(pts[a] - pts[c]));
                let n2 = e1.cross(&(pts[b] - pts[c]));
                let cos_int = n1.dot(&n2) / (n1.norm() * n2.norm());
                let w_dihedral = -(1.0 / (9.0 * mu)) * a_ikl * a_jkl * (-cos_int);
                assert!(
                    (w - w_dihedral).abs() <= 1e-10 * w.abs().max(1.0),
                    "{w} vs {w_dihedral}"
                );
            }
        }
    }

    #[test]
    fn stretch_factor_basics() {
        let mesh = generate::ball(2).unwrap();
        let id = VertexMap::identity(&mesh);
        let sf = stretch_factors(&mesh, &id);
        assert_relative_eq!(sf.mean, 1.0, max_relative = 1e-12);
        assert!(sf.std < 1e-12);
        assert_eq!(sf.degenerate, 0);

        let c: f64 = 1.3;
        let scaled = VertexMap::new(id.coords().iter().map(|p| c * p).collect());
        let sf_scaled = stretch_factors(&mesh, &scaled);
        for (a, b) in sf_scaled.values.iter().zip(&sf.values) {
            assert_relative_eq!(*a, b * c.powi(-3), max_relative = 1e-12);
        }

        let collapsed = VertexMap::new(vec![Vec3::zeros(); mesh.vertex_count()]);
        let sf_flat = stretch_factors(&mesh, &collapsed);
        assert_eq!(sf_flat.degenerate, mesh.tet_count());
    }
}
