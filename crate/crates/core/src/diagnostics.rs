//! Convergence-analysis machinery as executable checks: the linearized
//! weight differences between consecutive iterates, the iterate-difference
//! transfer operator, accumulated products and their spectra, and the
//! R-linear convergence metric.

use faer::Mat;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::laplacian::{StretchLaplacian, TET_EDGE_PAIRS};
use crate::linsolve::InteriorSystem;
use crate::mesh::{BoundaryMap, TetMesh, Vec3, VertexClass, VertexMap};

/// Hard cap on `3n` for dense transfer-operator construction.
pub const TRANSFER_SIZE_LIMIT: usize = 3000;

/// Dense transfer operator: applied to the interleaved difference vector of
/// consecutive iterates it reproduces the next difference vector.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    matrix: DMatrix<f64>,
}

impl TransferOperator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, eps: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVector::from_column_slice(eps);
        (&self.matrix * v).iter().copied().collect()
    }
}

/// Coefficient vectors of the linearized weight difference for one
/// (edge, tetrahedron) pair: the difference of the pair weights at two maps
/// is exactly `sum_t coeff_t . eps_t` with `eps_t = f_curr_t - f_prev_t`.
///
/// Derived by splitting each product difference `x1 y1 - x0 y0` as
/// `(x1 - x0) y1 + x0 (y1 - y0)` in the expanded dot-product form of the
/// weight; the products mix current-map and previous-map edge vectors.
struct WeightDiffCoeffs {
    i: Vec3,
    j: Vec3,
    k: Vec3,
    l: Vec3,
}

fn weight_diff_coeffs(
    prev: &[Vec3; 4],
    curr: &[Vec3; 4],
    mu: f64,
    a: usize,
    b: usize,
    c: usize,
    d: usize,
) -> WeightDiffCoeffs {
    // h_pq = f_p - f_q on the current (1) and previous (0) maps; the
    // current-map k-i vector drops out of the expansion
    let h_li1 = curr[d] - curr[a];
    let h_kj1 = curr[c] - curr[b];
    let h_lj1 = curr[d] - curr[b];
    let h_ki0 = prev[c] - prev[a];
    let h_li0 = prev[d] - prev[a];
    let h_kj0 = prev[c] - prev[b];
    let h_lj0 = prev[d] - prev[b];

    let p1 = h_li1.dot(&h_kj1); // pairs with (h_ki . h_lj) differences
    let p2 = h_ki0.dot(&h_lj0);
    let q1 = h_li1.dot(&h_lj1); // pairs with (h_ki . h_kj) differences
    let q2 = h_ki0.dot(&h_kj0);

    let scale = -1.0 / (36.0 * mu);
    WeightDiffCoeffs {
        i: scale * (-p1 * h_lj1 - p2 * h_kj1 + q1 * h_kj1 + q2 * h_lj1),
        j: scale * (-p1 * h_ki0 - p2 * h_li0 + q1 * h_ki0 + q2 * h_li0),
        k: scale * (p1 * h_lj1 + p2 * h_li0 - q1 * (h_kj1 + h_ki0)),
        l: scale * (p1 * h_ki0 + p2 * h_kj1 - q2 * (h_lj1 + h_li0)),
    }
}

/// Exact linearized difference of the pair weight on the edge `(i, j)`
/// between two maps, summed over the tetrahedra containing the edge:
/// equals `w_ij(f_curr) - w_ij(f_prev)` of the per-tet weight form.
pub fn weight_difference(
    mesh: &TetMesh,
    f_prev: &VertexMap,
    f_curr: &VertexMap,
    edge: (usize, usize),
) -> f64 {
    let (gi, gj) = (edge.0.min(edge.1), edge.0.max(edge.1));
    let mut acc = 0.0;
    for (t, tet) in mesh.tets().iter().enumerate() {
        let (Some(a), Some(b)) = (
            tet.iter().position(|&v| v == gi),
            tet.iter().position(|&v| v == gj),
        ) else {
            continue;
        };
        let mut rest = (0..4).filter(|&p| p != a && p != b);
        let c = rest.next().unwrap();
        let d = rest.next().unwrap();
        let prev = f_prev.tet_images(tet);
        let curr = f_curr.tet_images(tet);
        let coeffs = weight_diff_coeffs(&prev, &curr, mesh.measures()[t], a, b, c, d);
        let eps = |p: usize| curr[p] - prev[p];
        acc += coeffs.i.dot(&eps(a))
            + coeffs.j.dot(&eps(b))
            + coeffs.k.dot(&eps(c))
            + coeffs.l.dot(&eps(d));
    }
    acc
}

/// Build the dense transfer operator from two consecutive solver iterates:
/// row blocks are interleaved per vertex, boundary rows are zero, and the
/// interior blocks are `L_II(f_curr)^-1` applied to the linearized Laplacian
/// difference contracted with `g_s = -f_curr^s`.
pub fn assemble_transfer(
    mesh: &TetMesh,
    f_prev: &VertexMap,
    f_curr: &VertexMap,
    boundary: &BoundaryMap,
) -> Result<TransferOperator> {
    let n = mesh.vertex_count();
    if 3 * n > TRANSFER_SIZE_LIMIT {
        return Err(Error::TransferTooLarge {
            size: 3 * n,
            limit: TRANSFER_SIZE_LIMIT,
        });
    }
    let ni = mesh.interior_vertices().len();
    let _ = boundary; // boundary rows are structurally zero

    // g_s = -f_curr^s over all vertices (interior part equals the previous
    // solve applied to the fixed boundary, boundary part is -f_B)
    let g = |s: usize, v: usize| -f_curr.point(v)[s];

    // T_s in R^{ni x 3n}: row i accumulates (g_sj - g_si) times the
    // linearized weight-difference coefficients of every edge at i
    let mut t_rows = vec![Mat::<f64>::zeros(ni, 3 * n); 3];
    for (t, tet) in mesh.tets().iter().enumerate() {
        let prev = f_prev.tet_images(tet);
        let curr = f_curr.tet_images(tet);
        let mu = mesh.measures()[t];
        for &([a, b], [c, d]) in &TET_EDGE_PAIRS {
            let coeffs = weight_diff_coeffs(&prev, &curr, mu, a, b, c, d);
            let blocks = [
                (tet[a], coeffs.i),
                (tet[b], coeffs.j),
                (tet[c], coeffs.k),
                (tet[d], coeffs.l),
            ];
            for (row_local, sign_local) in [(a, b), (b, a)] {
                let row_vertex = tet[row_local];
                let VertexClass::Interior(row) = mesh.vertex_class(row_vertex) else {
                    continue;
                };
                for s in 0..3 {
                    // the Laplacian stores negated pair weights, so the edge
                    // contribution to (Delta L g)_i is -(g_j - g_i) w-hat
                    let factor = -(g(s, tet[sign_local]) - g(s, row_vertex));
                    for (vertex, coeff) in &blocks {
                        for axis in 0..3 {
                            t_rows[s][(row, 3 * vertex + axis)] += factor * coeff[axis];
                        }
                    }
                }
            }
        }
    }

    // interleave P (I_3 (x) L_II^-1) [T_1; T_2; T_3]
    let lap = StretchLaplacian::assemble(mesh, f_curr);
    let system = InteriorSystem::new(&lap, mesh, 0)?;
    let mut matrix = DMatrix::<f64>::zeros(3 * n, 3 * n);
    for (s, rows) in t_rows.iter().enumerate() {
        if ni == 0 {
            break;
        }
        let solved = system.solve_mat(rows);
        for (pos, &v) in mesh.interior_vertices().iter().enumerate() {
            for col in 0..3 * n {
                matrix[(3 * v + s, col)] = solved[(pos, col)];
            }
        }
    }
    Ok(TransferOperator { matrix })
}

/// One row of the convergence panel.
#[derive(Debug, Clone, Serialize)]
pub struct PanelRow {
    pub iteration: usize,
    /// `|eps^(m)|_2`, the interleaved difference of consecutive iterates.
    pub eps_norm: f64,
    /// `|sigma^(m) - sigma^(m-1)|_2`.
    pub sigma_diff_norm: f64,
    /// `(|vec(f*) - vec(f^(m))|_inf)^(1/m)`; `None` when the difference
    /// vanishes (converged entries are flagged rather than reported as 0).
    pub r_linear: Option<f64>,
    /// Spectral radius of the accumulated transfer product (small meshes).
    pub rho_product: Option<f64>,
    /// 2-norm of the accumulated transfer product (small meshes).
    pub norm2_product: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergencePanel {
    pub rows: Vec<PanelRow>,
    pub spectral: bool,
}

impl ConvergencePanel {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,eps_norm,sigma_diff_norm,r_linear,rho_pm,norm2_pm\n");
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{},{},{}\n",
                r.iteration,
                r.eps_norm,
                r.sigma_diff_norm,
                opt(r.r_linear),
                opt(r.rho_product),
                opt(r.norm2_product),
            ));
        }
        out
    }
}

/// Evaluate the per-iteration convergence metrics of a recorded iterate
/// history (`history[0]` is the initial solve). With `spectral` set and the
/// mesh under the size guard, transfer operators are assembled for every
/// consecutive pair and their accumulated products analyzed.
pub fn convergence_panel(
    mesh: &TetMesh,
    history: &[VertexMap],
    spectral: bool,
) -> Result<ConvergencePanel> {
    if history.len() < 3 {
        return Err(Error::Invalid(format!(
            "convergence panel needs at least 3 iterates, got {}",
            history.len()
        )));
    }
    let last = history.last().unwrap();
    let last_vec = last.stacked();
    let spectral = spectral && 3 * mesh.vertex_count() <= TRANSFER_SIZE_LIMIT;
    let boundary = BoundaryMap::from_vertex_map(mesh, last);

    let mut rows = Vec::new();
    let mut product: Option<DMatrix<f64>> = None;
    let mut prev_sigma: Option<Vec<f64>> = None;

    for (m, map) in history.iter().enumerate() {
        let sigma = crate::laplacian::stretch_factors(mesh, map).values;
        if m == 0 {
            prev_sigma = Some(sigma);
            continue;
        }
        let eps = map.interleaved_diff(&history[m - 1]);
        let eps_norm = eps.iter().map(|e| e * e).sum::<f64>().sqrt();
        let sigma_diff_norm = sigma
            .iter()
            .zip(prev_sigma.as_ref().unwrap())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        prev_sigma = Some(sigma);

        let dist = map
            .stacked()
            .iter()
            .zip(&last_vec)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let r_linear = if dist > 0.0 {
            Some(dist.powf(1.0 / m as f64))
        } else {
            None
        };

        let (mut rho_product, mut norm2_product) = (None, None);
        if spectral && m + 1 < history.len() {
            let op = assemble_transfer(mesh, &history[m - 1], map, &boundary)?;
            // the difference vectors live in the zero-boundary subspace, so
            // the effective operator is the interior block; this also avoids
            // the high-multiplicity zero eigenvalue of the padded matrix
            let compressed = interior_block(mesh, op.matrix());
            let next = match &product {
                Some(p) => &compressed * p,
                None => compressed,
            };
            rho_product = spectral_radius(&next);
            norm2_product = two_norm(&next);
            product = Some(next);
        }

        rows.push(PanelRow {
            iteration: m,
            eps_norm,
            sigma_diff_norm,
            r_linear,
            rho_product,
            norm2_product,
        });
    }
    Ok(ConvergencePanel { rows, spectral })
}

/// Submatrix over the interleaved interior slots.
fn interior_block(mesh: &TetMesh, full: &DMatrix<f64>) -> DMatrix<f64> {
    let slots: Vec<usize> = mesh
        .interior_vertices()
        .iter()
        .flat_map(|&v| (0..3).map(move |s| 3 * v + s))
        .collect();
    DMatrix::from_fn(slots.len(), slots.len(), |r, c| full[(slots[r], slots[c])])
}

fn spectral_radius(m: &DMatrix<f64>) -> Option<f64> {
    if m.is_empty() {
        return None;
    }
    let schur = nalgebra::Schur::try_new(m.clone(), 1e-12, 100_000)?;
    schur
        .complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))))
}

fn two_norm(m: &DMatrix<f64>) -> Option<f64> {
    if m.is_empty() {
        return None;
    }
    let svd = nalgebra::SVD::try_new(m.clone(), false, false, 1e-12, 100_000)?;
    Some(svd.singular_values.max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary;
    use crate::generate;
    use crate::laplacian::edge_weight;
    use crate::vsem::{self, InitialLaplacian, VsemConfig};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

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

    /// Direct per-edge weight from the pair form, summed over tets.
    fn direct_weight(mesh: &TetMesh, map: &VertexMap, gi: usize, gj: usize) -> f64 {
        let mut acc = 0.0;
        for (t, tet) in mesh.tets().iter().enumerate() {
            if let (Some(a), Some(b)) = (
                tet.iter().position(|&v| v == gi),
                tet.iter().position(|&v| v == gj),
            ) {
                acc += edge_weight(&map.tet_images(tet), mesh.measures()[t], (a, b)).unwrap();
            }
        }
        acc
    }

    #[test]
    fn weight_difference_zero_for_identical_maps() {
        let mesh = generate::octahedron();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let map = random_map(mesh.vertex_count(), &mut rng);
        assert_eq!(weight_difference(&mesh, &map, &map, (0, 6)), 0.0);
    }

    #[test]
    fn weight_difference_matches_direct_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for mesh in [generate::single_tet(), generate::octahedron(), generate::ball(2).unwrap()] {
            let lap = crate::laplacian::StretchLaplacian::assemble(
                &mesh,
                &VertexMap::identity(&mesh),
            );
            for _ in 0..200 {
                let prev = random_map(mesh.vertex_count(), &mut rng);
                let curr = random_map(mesh.vertex_count(), &mut rng);
                let &(i, j) = &lap.edges()[rng.random_range(0..lap.edges().len())];
                let lin = weight_difference(&mesh, &prev, &curr, (i, j));
                let direct =
                    direct_weight(&mesh, &curr, i, j) - direct_weight(&mesh, &prev, i, j);
                assert!(
                    (lin - direct).abs() <= 1e-10 * direct.abs().max(1.0),
                    "{lin} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn weight_difference_single_vertex_perturbation() {
        let mesh = generate::single_tet();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let prev = random_map(4, &mut rng);
        let mut curr = prev.clone();
        curr.coords_mut()[2] += Vec3::new(0.13, -0.4, 0.25);
        let lin = weight_difference(&mesh, &prev, &curr, (0, 1));
        let direct = direct_weight(&mesh, &curr, 0, 1) - direct_weight(&mesh, &prev, 0, 1);
        assert!((lin - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn transfer_reproduces_iterate_differences() {
        let mesh = generate::ball(3).unwrap().normalize_total_measure();
        let bnd = boundary::compute(&mesh, 30).unwrap();
        let config = VsemConfig {
            tolerance: 0.0,
            max_iters: 6,
            ..Default::default()
        };
        let history = vsem_history(&mesh, &bnd, &config);
        assert!(history.len() >= 4);
        for m in 1..history.len() - 1 {
            let op = assemble_transfer(&mesh, &history[m - 1], &history[m], &bnd).unwrap();
            let eps_m = history[m].interleaved_diff(&history[m - 1]);
            let eps_next = history[m + 1].interleaved_diff(&history[m]);
            let predicted = op.apply(&eps_m);
            let err: f64 = predicted
                .iter()
                .zip(&eps_next)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let scale: f64 = eps_next.iter().map(|e| e * e).sum::<f64>().sqrt();
            assert!(err / scale <= 1e-8, "m={m}: relative error {}", err / scale);
        }

        // stationary input maps to zero
        let op = assemble_transfer(&mesh, &history[1], &history[1], &bnd).unwrap();
        let zeros = vec![0.0; 3 * mesh.vertex_count()];
        assert!(op.apply(&zeros).iter().all(|&x| x == 0.0));

        // boundary rows are identically zero
        let op = assemble_transfer(&mesh, &history[0], &history[1], &bnd).unwrap();
        for &v in mesh.boundary_vertices() {
            for s in 0..3 {
                for col in 0..3 * mesh.vertex_count() {
                    assert_eq!(op.matrix()[(3 * v + s, col)], 0.0);
                }
            }
        }
    }

    #[test]
    fn panel_flags_degenerate_history_and_bounds_spectra() {
        let mesh = generate::octahedron().normalize_total_measure();
        let id = VertexMap::identity(&mesh);
        let panel = convergence_panel(&mesh, &[id.clone(), id.clone(), id.clone()], false).unwrap();
        for row in &panel.rows {
            assert_eq!(row.eps_norm, 0.0);
            assert!(row.r_linear.is_none());
        }

        let bnd = boundary::compute(&mesh, 10).unwrap();
        let config = VsemConfig {
            tolerance: 0.0,
            max_iters: 12,
            ..Default::default()
        };
        let history = vsem_history(&mesh, &bnd, &config);
        let panel = convergence_panel(&mesh, &history, true).unwrap();
        assert!(panel.spectral);
        for row in &panel.rows {
            if let (Some(rho), Some(norm2)) = (row.rho_product, row.norm2_product) {
                assert!(rho <= norm2 + 1e-12, "rho {rho} > norm2 {norm2}");
            }
        }
    }

    fn vsem_history(mesh: &TetMesh, bnd: &BoundaryMap, config: &VsemConfig) -> Vec<VertexMap> {
        vsem::run_recorded(
            mesh,
            bnd,
            config.solver,
            config.max_iters,
            InitialLaplacian::Identity,
        )
        .unwrap()
    }
}
