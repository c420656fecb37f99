//! Spherical area-preserving boundary maps.
//!
//! The fixed boundary condition for the volumetric solver is produced in two
//! stages: a harmonic initializer (punctured-surface map to the plane,
//! inverse stereographic projection, centroid re-centering) followed by an
//! iterative stretch-reweighted refinement that equalizes per-triangle area
//! ratios while keeping every vertex on the unit sphere.

use std::collections::HashMap;

use faer::sparse::Triplet;
use faer::Mat;

use crate::error::{Error, Result};
use crate::linsolve::SparseFactor;
use crate::mesh::{BoundaryMap, TetMesh, Vec3};

/// The closed genus-zero boundary surface of a tetrahedral mesh, with
/// per-triangle source measures.
#[derive(Debug, Clone)]
pub struct BoundarySurface {
    /// Global mesh indices of the boundary vertices (the ordered set B).
    vertex_ids: Vec<usize>,
    /// Triangles in local indices, outward oriented.
    triangles: Vec<[usize; 3]>,
    /// Source positions of the boundary vertices.
    coords: Vec<Vec3>,
    /// Per-triangle measure: area times the density of the owning tet.
    measure: Vec<f64>,
}

impl BoundarySurface {
    pub fn from_mesh(mesh: &TetMesh) -> Self {
        let vertex_ids = mesh.boundary_vertices().to_vec();
        let mut local = HashMap::new();
        for (pos, &v) in vertex_ids.iter().enumerate() {
            local.insert(v, pos);
        }
        let coords: Vec<Vec3> = vertex_ids.iter().map(|&v| mesh.vertices()[v]).collect();

        // owning tet per boundary face, for the induced density
        let mut owner: HashMap<[usize; 3], usize> = HashMap::new();
        for (t, tet) in mesh.tets().iter().enumerate() {
            for skip in 0..4 {
                let mut key: Vec<usize> =
                    (0..4).filter(|&i| i != skip).map(|i| tet[i]).collect();
                key.sort_unstable();
                owner.entry([key[0], key[1], key[2]]).or_insert(t);
            }
        }

        let mut triangles = Vec::with_capacity(mesh.boundary_faces().len());
        let mut measure = Vec::with_capacity(mesh.boundary_faces().len());
        for &[a, b, c] in mesh.boundary_faces() {
            triangles.push([local[&a], local[&b], local[&c]]);
            let mut key = [a, b, c];
            key.sort_unstable();
            let t = owner[&key];
            let density = mesh.measures()[t] / mesh.volumes()[t];
            let area = (mesh.vertices()[b] - mesh.vertices()[a])
                .cross(&(mesh.vertices()[c] - mesh.vertices()[a]))
                .norm()
                / 2.0;
            measure.push(density * area);
        }
        Self {
            vertex_ids,
            triangles,
            coords,
            measure,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_ids.len()
    }

    pub fn vertex_ids(&self) -> &[usize] {
        &self.vertex_ids
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn coords(&self) -> &[Vec3] {
        &self.coords
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }
}

/// Harmonic initializer: map the surface punctured at one vertex to the
/// plane with a cotangent Laplacian, lift back through the inverse
/// stereographic projection, and re-center so the lumped-area centroid sits
/// at the origin. All output vertices satisfy `|f| = 1` to 1e-12.
pub fn initial_sphere_map(surface: &BoundarySurface) -> Result<BoundaryMap> {
    let nb = surface.vertex_count();
    let centroid: Vec3 = surface.coords().iter().sum::<Vec3>() / nb as f64;
    let south = (0..nb)
        .max_by(|&a, &b| {
            let da = (surface.coords()[a] - centroid).norm();
            let db = (surface.coords()[b] - centroid).norm();
            da.partial_cmp(&db).unwrap().then(b.cmp(&a)) // ties: smallest index
        })
        .expect("surface has vertices");
    let south_id = surface.vertex_ids()[south];

    let ring =
        link_cycle(surface, south).ok_or(Error::HarmonicSolveFailed { vertex: south_id })?;

    // ring on the unit circle, angles proportional to source chord lengths
    let mut planar = vec![nalgebra::Vector2::<f64>::zeros(); nb];
    let mut is_fixed = vec![false; nb];
    let total_len: f64 = ring
        .iter()
        .enumerate()
        .map(|(r, &v)| {
            let next = ring[(r + 1) % ring.len()];
            (surface.coords()[next] - surface.coords()[v]).norm()
        })
        .sum();
    let mut angle = 0.0f64;
    for (r, &v) in ring.iter().enumerate() {
        planar[v] = nalgebra::Vector2::new(angle.cos(), angle.sin());
        is_fixed[v] = true;
        let next = ring[(r + 1) % ring.len()];
        angle += std::f64::consts::TAU * (surface.coords()[next] - surface.coords()[v]).norm()
            / total_len;
    }

    // cotangent Laplacian over all triangles except the punctured star
    let mut unknown_pos = vec![usize::MAX; nb];
    let unknowns: Vec<usize> = (0..nb).filter(|&v| v != south && !is_fixed[v]).collect();
    for (pos, &v) in unknowns.iter().enumerate() {
        unknown_pos[v] = pos;
    }
    if !unknowns.is_empty() {
        let nu = unknowns.len();
        let mut triplets: Vec<Triplet<usize, usize, f64>> = Vec::new();
        let mut rhs = Mat::<f64>::zeros(nu, 2);
        for tri in surface.triangles() {
            if tri.contains(&south) {
                continue;
            }
            for corner in 0..3 {
                let opp = tri[corner];
                let (i, j) = (tri[(corner + 1) % 3], tri[(corner + 2) % 3]);
                let e1 = surface.coords()[i] - surface.coords()[opp];
                let e2 = surface.coords()[j] - surface.coords()[opp];
                let cross = e1.cross(&e2).norm();
                let w = if cross > 0.0 {
                    e1.dot(&e2) / cross / 2.0
                } else {
                    0.0
                };
                add_edge(&mut triplets, &mut rhs, &unknown_pos, &planar, i, j, w);
            }
        }
        let factor = SparseFactor::try_new(nu, &triplets)
            .ok_or(Error::HarmonicSolveFailed { vertex: south_id })?;
        let x = factor.solve_mat(&rhs);
        if factor.residual_rel(&x, &rhs) > 1e-8 {
            return Err(Error::HarmonicSolveFailed { vertex: south_id });
        }
        for (pos, &v) in unknowns.iter().enumerate() {
            planar[v] = nalgebra::Vector2::new(x[(pos, 0)], x[(pos, 1)]);
        }
    }

    // lift: inverse stereographic projection from the south pole
    let mut points: Vec<Vec3> = planar
        .iter()
        .map(|uv| {
            let r2 = uv.norm_squared();
            Vec3::new(2.0 * uv.x, 2.0 * uv.y, 1.0 - r2) / (1.0 + r2)
        })
        .collect();
    points[south] = Vec3::new(0.0, 0.0, -1.0);

    // consistent outward orientation: total signed solid angle must be +4pi
    if total_spherical_area(&points, surface.triangles()) < 0.0 {
        for p in &mut points {
            p.y = -p.y;
        }
    }

    recenter(&mut points, surface.triangles());
    for p in &mut points {
        *p /= p.norm();
    }
    Ok(BoundaryMap::new(points))
}

/// Iterative stretch-reweighted refinement of a spherical map: each pass
/// assembles a surface Laplacian whose cotangent weights are divided by the
/// per-triangle area stretch factor `sigma = measure / |image|`, solves for
/// the vertices of one stereographic hemisphere chart with the opposite
/// hemisphere fixed, reprojects to the sphere, and keeps the iterate with
/// the smallest area-ratio standard deviation. Refinement aborts (returning
/// the best earlier iterate) when more than 0.1% of the triangles fold.
pub fn area_preserving_refine(
    surface: &BoundarySurface,
    init: &BoundaryMap,
    iters: usize,
) -> BoundaryMap {
    let mut current: Vec<Vec3> = init.coords().to_vec();
    let mut best = current.clone();
    let mut best_std = area_ratio_std(surface, &current);
    let fold_limit = (surface.triangles().len() as f64) * 0.001;

    for k in 0..iters {
        let north_chart = k % 2 == 1;
        let next = match refine_pass(surface, &current, north_chart) {
            Some(next) => next,
            None => break,
        };
        let folded = folded_triangles(&next, surface.triangles());
        if folded as f64 > fold_limit {
            break;
        }
        let std = area_ratio_std(surface, &next);
        if std < best_std {
            best_std = std;
            best = next.clone();
        }
        current = next;
    }
    BoundaryMap::new(best)
}

/// Convenience pipeline: surface extraction, harmonic initializer, and
/// `iters` refinement passes.
pub fn compute(mesh: &TetMesh, iters: usize) -> Result<BoundaryMap> {
    let surface = BoundarySurface::from_mesh(mesh);
    let init = initial_sphere_map(&surface)?;
    Ok(area_preserving_refine(&surface, &init, iters))
}

fn add_edge(
    triplets: &mut Vec<Triplet<usize, usize, f64>>,
    rhs: &mut Mat<f64>,
    unknown_pos: &[usize],
    planar: &[nalgebra::Vector2<f64>],
    i: usize,
    j: usize,
    w: f64,
) {
    let (pi, pj) = (unknown_pos[i], unknown_pos[j]);
    match (pi != usize::MAX, pj != usize::MAX) {
        (true, true) => {
            triplets.push(Triplet::new(pi, pi, w));
            triplets.push(Triplet::new(pj, pj, w));
            triplets.push(Triplet::new(pi, pj, -w));
            triplets.push(Triplet::new(pj, pi, -w));
        }
        (true, false) => {
            triplets.push(Triplet::new(pi, pi, w));
            rhs[(pi, 0)] += w * planar[j].x;
            rhs[(pi, 1)] += w * planar[j].y;
        }
        (false, true) => {
            triplets.push(Triplet::new(pj, pj, w));
            rhs[(pj, 0)] += w * planar[i].x;
            rhs[(pj, 1)] += w * planar[i].y;
        }
        (false, false) => {}
    }
}

/// One smoothing pass in a single stereographic chart. Returns `None` when
/// the chart has no solvable vertices or the factorization fails.
fn refine_pass(surface: &BoundarySurface, current: &[Vec3], north_chart: bool) -> Option<Vec<Vec3>> {
    let nb = current.len();

    // south-pole projection solves the northern hemisphere (z > 0),
    // north-pole projection the southern one
    let to_plane = |p: Vec3| -> nalgebra::Vector2<f64> {
        let denom = if north_chart { 1.0 - p.z } else { 1.0 + p.z };
        let denom = if denom.abs() < f64::MIN_POSITIVE {
            f64::MIN_POSITIVE
        } else {
            denom
        };
        nalgebra::Vector2::new(p.x / denom, p.y / denom)
    };
    let from_plane = |uv: nalgebra::Vector2<f64>| -> Vec3 {
        let r2 = uv.norm_squared();
        let z = if north_chart { r2 - 1.0 } else { 1.0 - r2 };
        Vec3::new(2.0 * uv.x, 2.0 * uv.y, z) / (1.0 + r2)
    };
    let solvable = |p: &Vec3| if north_chart { p.z < 0.0 } else { p.z > 0.0 };

    let unknowns: Vec<usize> = (0..nb).filter(|&v| solvable(&current[v])).collect();
    if unknowns.is_empty() || unknowns.len() == nb {
        return None;
    }
    let mut unknown_pos = vec![usize::MAX; nb];
    for (pos, &v) in unknowns.iter().enumerate() {
        unknown_pos[v] = pos;
    }
    let planar: Vec<nalgebra::Vector2<f64>> = current.iter().map(|&p| to_plane(p)).collect();

    // stretch-reweighted cotangent weights on the current image; cot(theta)
    // times the image area reduces to a plain dot product, so degenerate
    // image triangles contribute zero instead of NaN
    let mut triplets: Vec<Triplet<usize, usize, f64>> = Vec::new();
    let mut rhs = Mat::<f64>::zeros(unknowns.len(), 2);
    for (tri, &measure) in surface.triangles().iter().zip(surface.measure()) {
        for corner in 0..3 {
            let opp = tri[corner];
            let (i, j) = (tri[(corner + 1) % 3], tri[(corner + 2) % 3]);
            let e1 = current[i] - current[opp];
            let e2 = current[j] - current[opp];
            // cot / sigma = (cot * |image|) / measure = dot / (2 measure)
            let w = e1.dot(&e2) / (2.0 * measure);
            add_edge(&mut triplets, &mut rhs, &unknown_pos, &planar, i, j, w);
        }
    }

    let factor = SparseFactor::try_new(unknowns.len(), &triplets)?;
    let x = factor.solve_mat(&rhs);
    if !x[(0, 0)].is_finite() {
        return None;
    }

    let mut next = current.to_vec();
    for (pos, &v) in unknowns.iter().enumerate() {
        let p = from_plane(nalgebra::Vector2::new(x[(pos, 0)], x[(pos, 1)]));
        next[v] = p / p.norm();
    }
    Some(next)
}

/// Ordered cycle of neighbors around `center`, following the triangle
/// orientation. `None` when the star is not a single closed fan.
fn link_cycle(surface: &BoundarySurface, center: usize) -> Option<Vec<usize>> {
    let mut successor: HashMap<usize, usize> = HashMap::new();
    for tri in surface.triangles() {
        if let Some(pos) = tri.iter().position(|&v| v == center) {
            let a = tri[(pos + 1) % 3];
            let b = tri[(pos + 2) % 3];
            if successor.insert(a, b).is_some() {
                return None;
            }
        }
    }
    if successor.is_empty() {
        return None;
    }
    let start = *successor.keys().min()?;
    let mut cycle = vec![start];
    let mut cur = start;
    loop {
        cur = *successor.get(&cur)?;
        if cur == start {
            break;
        }
        if cycle.len() > successor.len() {
            return None;
        }
        cycle.push(cur);
    }
    if cycle.len() == successor.len() {
        Some(cycle)
    } else {
        None
    }
}

/// Shift-and-normalize iteration driving the lumped-area centroid of the
/// spherical image to the origin.
fn recenter(points: &mut [Vec3], triangles: &[[usize; 3]]) {
    for _ in 0..500 {
        let mut weight = vec![0.0f64; points.len()];
        for &[a, b, c] in triangles {
            let area = (points[b] - points[a])
                .cross(&(points[c] - points[a]))
                .norm()
                / 2.0;
            for v in [a, b, c] {
                weight[v] += area / 3.0;
            }
        }
        let total: f64 = weight.iter().sum();
        let centroid: Vec3 = points
            .iter()
            .zip(&weight)
            .map(|(p, &w)| w * p)
            .sum::<Vec3>()
            / total;
        if centroid.norm() < 1e-13 {
            return;
        }
        for p in points.iter_mut() {
            let shifted = *p - centroid;
            *p = shifted / shifted.norm();
        }
    }
}

/// Total signed spherical area (sum of signed solid angles); `4 pi` for an
/// outward-oriented cover of the sphere.
pub fn total_spherical_area(points: &[Vec3], triangles: &[[usize; 3]]) -> f64 {
    triangles
        .iter()
        .map(|&[a, b, c]| {
            let (pa, pb, pc) = (points[a], points[b], points[c]);
            let num = pa.dot(&pb.cross(&pc));
            let den = 1.0 + pa.dot(&pb) + pb.dot(&pc) + pc.dot(&pa);
            2.0 * num.atan2(den)
        })
        .sum()
}

/// Triangles whose spherical image is flipped or degenerate.
pub fn folded_triangles(points: &[Vec3], triangles: &[[usize; 3]]) -> usize {
    triangles
        .iter()
        .filter(|&&[a, b, c]| points[a].dot(&points[b].cross(&points[c])) <= 0.0)
        .count()
}

/// Standard deviation of the normalized per-triangle area ratios
/// `(|image| / total image) / (measure / total measure)`.
pub fn area_ratio_std(surface: &BoundarySurface, points: &[Vec3]) -> f64 {
    let areas: Vec<f64> = surface
        .triangles()
        .iter()
        .map(|&[a, b, c]| {
            (points[b] - points[a])
                .cross(&(points[c] - points[a]))
                .norm()
                / 2.0
        })
        .collect();
    let total_area: f64 = areas.iter().sum();
    let total_measure: f64 = surface.measure().iter().sum();
    let ratios: Vec<f64> = areas
        .iter()
        .zip(surface.measure())
        .map(|(&a, &m)| (a / total_area) / (m / total_measure))
        .collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / ratios.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;

    #[test]
    fn initial_map_is_on_the_sphere_and_covers_it() {
        for mesh in [generate::octahedron(), generate::ball(3).unwrap()] {
            let surface = BoundarySurface::from_mesh(&mesh);
            let map = initial_sphere_map(&surface).unwrap();
            for p in map.coords() {
                assert!((p.norm() - 1.0).abs() < 1e-12);
            }
            let area = total_spherical_area(map.coords(), surface.triangles());
            assert!(
                (area - 4.0 * std::f64::consts::PI).abs() < 1e-6,
                "area = {area}"
            );
            assert_eq!(folded_triangles(map.coords(), surface.triangles()), 0);
        }
    }

    #[test]
    fn octahedron_image_is_centered() {
        let mesh = generate::octahedron();
        let surface = BoundarySurface::from_mesh(&mesh);
        let map = initial_sphere_map(&surface).unwrap();
        let centroid: Vec3 = map.coords().iter().sum::<Vec3>() / surface.vertex_count() as f64;
        assert!(centroid.norm() <= 1e-10, "centroid = {centroid:?}");
    }

    #[test]
    fn refine_zero_iters_is_identity() {
        let mesh = generate::ball(2).unwrap();
        let surface = BoundarySurface::from_mesh(&mesh);
        let init = initial_sphere_map(&surface).unwrap();
        let out = area_preserving_refine(&surface, &init, 0);
        assert_eq!(out.coords(), init.coords());
    }

    #[test]
    fn refine_improves_area_ratios_on_ball_boundary() {
        let mesh = generate::ball(4).unwrap();
        let surface = BoundarySurface::from_mesh(&mesh);
        let init = initial_sphere_map(&surface).unwrap();
        let std0 = area_ratio_std(&surface, init.coords());
        let refined = area_preserving_refine(&surface, &init, 10);
        let std1 = area_ratio_std(&surface, refined.coords());
        assert!(std1 < std0, "std {std0} -> {std1}");
        for p in refined.coords() {
            assert!((p.norm() - 1.0).abs() < 1e-12);
        }
        let area = total_spherical_area(refined.coords(), surface.triangles());
        assert!((area - 4.0 * std::f64::consts::PI).abs() < 1e-6);
    }

    #[test]
    fn refine_never_regresses_from_init() {
        let mesh = generate::octahedron();
        let surface = BoundarySurface::from_mesh(&mesh);
        let init = initial_sphere_map(&surface).unwrap();
        let refined = area_preserving_refine(&surface, &init, 10);
        assert!(
            area_ratio_std(&surface, refined.coords())
                <= area_ratio_std(&surface, init.coords()) + 1e-15
        );
    }
}
