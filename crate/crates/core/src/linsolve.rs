//! Direct and iterative solvers for the interior subsystem
//! `L_II f_I = -L_IB f_B`.
//!
//! `L_II` is positive definite whenever all pair weights are positive; since
//! weights may be negative, the Cholesky factorization falls back to sparse
//! LU on failure.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::laplacian::StretchLaplacian;
use crate::mesh::{BoundaryMap, TetMesh, Vec3, VertexClass};

/// Linear solver selection for the interior systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    #[default]
    Direct,
    /// Diagonally preconditioned conjugate gradient; requires the definiteness
    /// probe (positive diagonal) and falls back to the direct path otherwise.
    ConjugateGradient,
}

const COND_LIMIT: f64 = 1e14;
const RESIDUAL_LIMIT: f64 = 1e-10;

/// A factorized sparse symmetric matrix: Cholesky when definite, LU
/// otherwise.
pub struct SparseFactor {
    matrix: SparseColMat<usize, f64>,
    factor: Factor,
}

enum Factor {
    Llt(faer::sparse::linalg::solvers::Llt<usize, f64>),
    Lu(faer::sparse::linalg::solvers::Lu<usize, f64>),
}

impl SparseFactor {
    /// Assemble from triplets (duplicates are summed) and factorize.
    /// Returns `None` if the matrix cannot be factorized.
    pub fn try_new(n: usize, triplets: &[Triplet<usize, usize, f64>]) -> Option<Self> {
        let matrix = SparseColMat::try_new_from_triplets(n, n, triplets).ok()?;
        let factor = match faer::sparse::linalg::solvers::SymbolicLlt::try_new(
            matrix.symbolic(),
            Side::Lower,
        )
        .ok()
        .and_then(|sym| {
            faer::sparse::linalg::solvers::Llt::try_new_with_symbolic(
                sym,
                matrix.as_ref(),
                Side::Lower,
            )
            .ok()
        }) {
            Some(llt) => Factor::Llt(llt),
            None => {
                let sym =
                    faer::sparse::linalg::solvers::SymbolicLu::try_new(matrix.symbolic()).ok()?;
                let lu =
                    faer::sparse::linalg::solvers::Lu::try_new_with_symbolic(sym, matrix.as_ref())
                        .ok()?;
                Factor::Lu(lu)
            }
        };
        Some(Self { matrix, factor })
    }

    fn raw_solve(&self, m: &mut Mat<f64>) {
        match &self.factor {
            Factor::Llt(f) => f.solve_in_place(m.as_mut()),
            Factor::Lu(f) => f.solve_in_place(m.as_mut()),
        }
    }

    /// Solve with one step of iterative refinement.
    pub fn solve_mat(&self, rhs: &Mat<f64>) -> Mat<f64> {
        let mut x = rhs.clone();
        self.raw_solve(&mut x);
        let mut res = rhs - &self.matrix * &x;
        self.raw_solve(&mut res);
        x + res
    }

    pub fn residual_rel(&self, x: &Mat<f64>, rhs: &Mat<f64>) -> f64 {
        let res = rhs - &self.matrix * x;
        let rn = frob(&res);
        let bn = frob(rhs);
        if bn == 0.0 {
            rn
        } else {
            rn / bn
        }
    }

    pub fn matrix(&self) -> &SparseColMat<usize, f64> {
        &self.matrix
    }
}

/// Factorized interior operator `L_II` for one Laplacian.
pub struct InteriorSystem {
    dim: usize,
    inner: SparseFactor,
    norm1: f64,
}

impl InteriorSystem {
    /// Build and factorize `L_II`. `iteration` is only used to label errors.
    pub fn new(lap: &StretchLaplacian, mesh: &TetMesh, iteration: usize) -> Result<Self> {
        let ni = mesh.interior_vertices().len();
        let mut triplets: Vec<Triplet<usize, usize, f64>> = Vec::new();
        for (&(i, j), &w) in lap.edges().iter().zip(lap.weights()) {
            if let (VertexClass::Interior(pi), VertexClass::Interior(pj)) =
                (mesh.vertex_class(i), mesh.vertex_class(j))
            {
                triplets.push(Triplet::new(pi, pj, w));
                triplets.push(Triplet::new(pj, pi, w));
            }
        }
        for (pos, &v) in mesh.interior_vertices().iter().enumerate() {
            triplets.push(Triplet::new(pos, pos, lap.diag()[v]));
        }
        let inner = SparseFactor::try_new(ni, &triplets)
            .ok_or(Error::SingularSystem { iteration })?;
        let norm1 = one_norm(inner.matrix());
        let system = Self {
            dim: ni,
            inner,
            norm1,
        };
        let cond = system.condition_estimate();
        if !cond.is_finite() || cond > COND_LIMIT {
            return Err(Error::IllConditioned {
                iteration,
                estimate: cond,
                limit: COND_LIMIT,
            });
        }
        Ok(system)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Solve `L_II x = rhs` with one step of iterative refinement.
    pub fn solve_mat(&self, rhs: &Mat<f64>) -> Mat<f64> {
        self.inner.solve_mat(rhs)
    }

    pub fn residual_rel(&self, x: &Mat<f64>, rhs: &Mat<f64>) -> f64 {
        self.inner.residual_rel(x, rhs)
    }

    /// Hager-style 1-norm condition estimate using the factorization.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.dim;
        if n == 0 {
            return 1.0;
        }
        let mut x = Mat::from_fn(n, 1, |_, _| 1.0 / n as f64);
        let mut inv_norm = 0.0f64;
        for _ in 0..5 {
            let y = self.solve_mat(&x);
            inv_norm = (0..n).map(|i| y[(i, 0)].abs()).sum::<f64>();
            let xi = Mat::from_fn(n, 1, |i, _| if y[(i, 0)] >= 0.0 { 1.0 } else { -1.0 });
            let z = self.solve_mat(&xi);
            let (mut zmax, mut jmax) = (0.0f64, 0usize);
            for i in 0..n {
                if z[(i, 0)].abs() > zmax {
                    zmax = z[(i, 0)].abs();
                    jmax = i;
                }
            }
            let ztx: f64 = (0..n).map(|i| z[(i, 0)] * x[(i, 0)]).sum();
            if zmax <= ztx {
                break;
            }
            x = Mat::from_fn(n, 1, |i, _| if i == jmax { 1.0 } else { 0.0 });
        }
        self.norm1 * inv_norm
    }

    fn jacobi_cg(&self, rhs: &Mat<f64>) -> Option<Mat<f64>> {
        let n = self.dim;
        let matrix = self.inner.matrix();
        let mut diag = vec![0.0f64; n];
        for j in 0..n {
            for (i, v) in matrix.row_idx_of_col(j).zip(matrix.val_of_col(j)) {
                if i == j {
                    diag[j] = *v;
                }
            }
        }
        if diag.iter().any(|&d| d <= 0.0) {
            return None; // definiteness probe failed
        }
        let cols = rhs.ncols();
        let mut x = Mat::zeros(n, cols);
        for c in 0..cols {
            let b = rhs.col(c).to_owned();
            let bn = b.norm_l2();
            if bn == 0.0 {
                continue;
            }
            let mut xk = faer::Col::<f64>::zeros(n);
            let mut r = b.clone();
            let mut z = faer::Col::from_fn(n, |i| r[i] / diag[i]);
            let mut p = z.clone();
            let mut rz = r.transpose() * &z;
            let max_iter = 20 * n + 50;
            let mut ok = false;
            for _ in 0..max_iter {
                let ap = matrix * &p;
                let pap = p.transpose() * &ap;
                if pap <= 0.0 {
                    return None; // matrix not definite along p
                }
                let alpha = rz / pap;
                xk += alpha * &p;
                r -= alpha * &ap;
                if r.norm_l2() <= 1e-13 * bn {
                    ok = true;
                    break;
                }
                z = faer::Col::from_fn(n, |i| r[i] / diag[i]);
                let rz_new = r.transpose() * &z;
                let beta = rz_new / rz;
                rz = rz_new;
                p = &z + beta * &p;
            }
            if !ok {
                return None;
            }
            for i in 0..n {
                x[(i, c)] = xk[i];
            }
        }
        Some(x)
    }
}

fn frob(m: &Mat<f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            acc += m[(i, j)] * m[(i, j)];
        }
    }
    acc.sqrt()
}

fn one_norm(m: &SparseColMat<usize, f64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        let s: f64 = m.val_of_col(j).iter().map(|v| v.abs()).sum();
        best = best.max(s);
    }
    best
}

/// Outcome of one interior solve.
pub struct InteriorSolve {
    /// Interior images aligned with [`TetMesh::interior_vertices`].
    pub coords: Vec<Vec3>,
    pub condition_estimate: f64,
    pub residual_rel: f64,
    pub note: Option<String>,
}

/// Solve `L_II f_I^s = -L_IB f_B^s` for the three coordinate columns with a
/// shared factorization. The residual must satisfy
/// `|L_II x - b| <= 1e-10 |b|`.
pub fn solve_interior(
    lap: &StretchLaplacian,
    mesh: &TetMesh,
    boundary: &BoundaryMap,
    kind: SolverKind,
    iteration: usize,
) -> Result<InteriorSolve> {
    let ni = mesh.interior_vertices().len();
    if ni == 0 {
        return Ok(InteriorSolve {
            coords: Vec::new(),
            condition_estimate: 1.0,
            residual_rel: 0.0,
            note: None,
        });
    }

    // rhs = -L_IB f_B
    let mut rhs = Mat::<f64>::zeros(ni, 3);
    for (&(i, j), &w) in lap.edges().iter().zip(lap.weights()) {
        match (mesh.vertex_class(i), mesh.vertex_class(j)) {
            (VertexClass::Interior(pi), VertexClass::Boundary(pb)) => {
                let f = boundary.coords()[pb];
                for s in 0..3 {
                    rhs[(pi, s)] -= w * f[s];
                }
            }
            (VertexClass::Boundary(pb), VertexClass::Interior(pj)) => {
                let f = boundary.coords()[pb];
                for s in 0..3 {
                    rhs[(pj, s)] -= w * f[s];
                }
            }
            _ => {}
        }
    }

    let system = InteriorSystem::new(lap, mesh, iteration)?;
    let mut note = None;
    let x = match kind {
        SolverKind::Direct => system.solve_mat(&rhs),
        SolverKind::ConjugateGradient => match system.jacobi_cg(&rhs) {
            Some(x) => x,
            None => {
                note = Some("conjugate gradient probe failed; used direct solver".to_string());
                system.solve_mat(&rhs)
            }
        },
    };

    let residual = system.residual_rel(&x, &rhs);
    if !residual.is_finite() || residual > RESIDUAL_LIMIT {
        return Err(Error::ResidualTooLarge {
            iteration,
            residual,
            limit: RESIDUAL_LIMIT,
        });
    }

    let coords = (0..ni)
        .map(|i| Vec3::new(x[(i, 0)], x[(i, 1)], x[(i, 2)]))
        .collect();
    Ok(InteriorSolve {
        coords,
        condition_estimate: system.condition_estimate(),
        residual_rel: residual,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate;
    use crate::laplacian::StretchLaplacian;
    use crate::mesh::VertexMap;

    #[test]
    fn no_interior_vertices_is_empty_solve() {
        let mesh = generate::single_tet();
        let map = VertexMap::identity(&mesh);
        let lap = StretchLaplacian::assemble(&mesh, &map);
        let boundary = BoundaryMap::from_vertex_map(&mesh, &map);
        let out = solve_interior(&lap, &mesh, &boundary, SolverKind::Direct, 0).unwrap();
        assert!(out.coords.is_empty());
    }

    #[test]
    fn symmetric_star_puts_vertex_at_weighted_centroid() {
        // octahedron: one interior vertex, symmetric star and boundary
        let mesh = generate::octahedron();
        let map = VertexMap::identity(&mesh);
        let lap = StretchLaplacian::assemble(&mesh, &map);
        let boundary = BoundaryMap::from_vertex_map(&mesh, &map);
        let out = solve_interior(&lap, &mesh, &boundary, SolverKind::Direct, 0).unwrap();
        assert_eq!(out.coords.len(), 1);
        assert!(out.coords[0].norm() < 1e-12, "{:?}", out.coords[0]);
    }

    #[test]
    fn residual_is_small_on_random_mesh() {
        let mesh = generate::random_convex(2, 41).unwrap();
        let map = VertexMap::identity(&mesh);
        let lap = StretchLaplacian::assemble(&mesh, &map);
        let boundary = BoundaryMap::from_vertex_map(&mesh, &map);
        for kind in [SolverKind::Direct, SolverKind::ConjugateGradient] {
            let out = solve_interior(&lap, &mesh, &boundary, kind, 0).unwrap();
            assert!(out.residual_rel <= 1e-10, "{}", out.residual_rel);
            assert!(out.condition_estimate >= 1.0);
        }
    }
}
