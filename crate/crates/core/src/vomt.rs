//! Projected gradient minimization of the transport cost over
//! volume-preserving ball parameterizations, with the cost-optimal rotation
//! and optional Nesterov or FISTA momentum.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::error::Result;
use crate::laplacian::stretch_factors;
use crate::mesh::{folding_count, BoundaryMap, TetMesh, VertexMap};
use crate::vsem::{self, InitialLaplacian, SolverReport, VsemConfig};

/// Per-vertex measure: a quarter of the total measure of the incident
/// tetrahedra.
#[derive(Debug, Clone)]
pub struct VertexMeasure {
    values: Vec<f64>,
}

impl VertexMeasure {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v))
    }
}

pub fn vertex_measure(mesh: &TetMesh) -> VertexMeasure {
    let mut values = vec![0.0; mesh.vertex_count()];
    for (t, tet) in mesh.tets().iter().enumerate() {
        let share = mesh.measures()[t] / 4.0;
        for &v in tet {
            values[v] += share;
        }
    }
    VertexMeasure { values }
}

/// Transport cost: measure-weighted squared displacement from the source
/// vertices.
pub fn cost(mesh: &TetMesh, map: &VertexMap, nu: &VertexMeasure) -> f64 {
    mesh.vertices()
        .iter()
        .zip(map.coords())
        .zip(&nu.values)
        .map(|((v, f), &w)| w * (v - f).norm_squared())
        .sum()
}

/// Gradient of the cost with respect to the column-stacked map vector
/// `[f^1; f^2; f^3]`: entry `(s, t)` is `-2 nu_t (v_t^s - f_t^s)`.
pub fn cost_gradient(mesh: &TetMesh, map: &VertexMap, nu: &VertexMeasure) -> Vec<f64> {
    let n = mesh.vertex_count();
    let mut g = vec![0.0; 3 * n];
    for (t, ((v, f), &w)) in mesh
        .vertices()
        .iter()
        .zip(map.coords())
        .zip(&nu.values)
        .enumerate()
    {
        let d = v - f;
        g[t] = -2.0 * w * d.x;
        g[n + t] = -2.0 * w * d.y;
        g[2 * n + t] = -2.0 * w * d.z;
    }
    g
}

/// Exact line-search step along `-grad`: the cost is quadratic on the ray,
/// so `alpha = |g|^2 / (2 g^T D g)` with `D = I_3 (x) diag(nu)`. The step is
/// clamped to `2/L` (with `L = 2 max nu`); `clamped` reports when that
/// happened.
pub struct StepSize {
    pub alpha: f64,
    pub clamped: bool,
}

pub fn exact_step(grad: &[f64], nu: &VertexMeasure) -> Option<StepSize> {
    let n = nu.values.len();
    let mut g2 = 0.0;
    let mut gdg = 0.0;
    for s in 0..3 {
        for t in 0..n {
            let g = grad[s * n + t];
            g2 += g * g;
            gdg += nu.values[t] * g * g;
        }
    }
    if g2 == 0.0 || gdg <= 0.0 {
        return None;
    }
    let alpha = g2 / (2.0 * gdg);
    let cap = 1.0 / nu.max(); // 2/L with L = 2 max(nu)
    if alpha > cap {
        Some(StepSize {
            alpha: cap,
            clamped: true,
        })
    } else {
        Some(StepSize {
            alpha,
            clamped: false,
        })
    }
}

/// Measure-weighted orthogonal Procrustes solution: the rotation minimizing
/// `cost(f R^T)`. Returns the identity with `degenerate = true` when the
/// cross-covariance is rank deficient.
pub struct OptimalRotation {
    pub rotation: Matrix3<f64>,
    pub degenerate: bool,
}

pub fn optimal_rotation(mesh: &TetMesh, map: &VertexMap, nu: &VertexMeasure) -> OptimalRotation {
    let mut h = Matrix3::<f64>::zeros();
    for ((v, f), &w) in mesh.vertices().iter().zip(map.coords()).zip(&nu.values) {
        h += w * f * v.transpose();
    }
    let svd = nalgebra::SVD::new(h, true, true);
    let (u, v_t) = (svd.u.expect("svd"), svd.v_t.expect("svd"));
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-12 * smax {
        return OptimalRotation {
            rotation: Matrix3::identity(),
            degenerate: true,
        };
    }
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant();
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d.signum())) * u.transpose();
    OptimalRotation {
        rotation,
        degenerate: false,
    }
}

/// Project a map onto the set of volume-preserving parameterizations: run the
/// stretch-energy solver seeded with the Laplacian at the unprojected map and
/// the fixed boundary of the initial parameterization, then apply the
/// cost-optimal rotation.
pub fn project(
    mesh: &TetMesh,
    map: &VertexMap,
    boundary: &BoundaryMap,
    nu: &VertexMeasure,
    inner: &VsemConfig,
) -> Result<(VertexMap, SolverReport, Matrix3<f64>)> {
    let (mut projected, report) = vsem::run(mesh, boundary, inner, InitialLaplacian::AtMap(map))?;
    let rot = optimal_rotation(mesh, &projected, nu);
    projected.rotate(&rot.rotation);
    Ok((projected, report, rot.rotation))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Accel {
    None,
    Nesterov,
    #[default]
    Fista,
}

#[derive(Debug, Clone, Serialize)]
pub struct VomtConfig {
    /// Stop once the cost decrease falls to this tolerance or below.
    pub tolerance: f64,
    /// Maximum number of outer projected-gradient iterations.
    pub max_iters: usize,
    pub accel: Accel,
    /// Configuration of the inner projection solver.
    pub inner: VsemConfig,
}

impl Default for VomtConfig {
    fn default() -> Self {
        Self {
            tolerance: 0.0,
            max_iters: 2,
            accel: Accel::Fista,
            inner: VsemConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VomtTermination {
    /// The cost stopped decreasing; the last improving iterate was returned.
    CostNonDecrease,
    Tolerance,
    MaxIters,
    ZeroGradient,
}

/// History of one projected-gradient run. Index `m` describes outer iterate
/// `m`; iterate 0 is the initial volume-preserving map.
#[derive(Debug, Clone)]
pub struct VomtReport {
    pub cost: Vec<f64>,
    pub energy: Vec<f64>,
    pub stretch_mean: Vec<f64>,
    pub stretch_std: Vec<f64>,
    pub eps_norm: Vec<f64>,
    pub step_sizes: Vec<f64>,
    pub step_clamped: Vec<bool>,
    pub rotations: Vec<Matrix3<f64>>,
    pub degenerate_rotations: usize,
    pub initial_report: SolverReport,
    pub vsem_reports: Vec<SolverReport>,
    pub termination: VomtTermination,
    pub foldings: usize,
    pub initial_map: VertexMap,
}

impl VomtReport {
    pub fn final_cost(&self) -> f64 {
        *self.cost.last().expect("cost history is never empty")
    }

    /// Smallest accepted step size (the measured `eta`).
    pub fn min_step(&self) -> Option<f64> {
        self.step_sizes.iter().copied().reduce(f64::min)
    }
}

/// FISTA momentum coefficient used at outer step `step` (1-based):
/// `beta_step = (1 - lambda_step) / lambda_(step+1)` with the
/// `lambda` recurrence started from `lambda_0 = 0`, so the first step is a
/// plain gradient step.
pub(crate) fn fista_beta(step: usize) -> f64 {
    let next = |l: f64| (1.0 + (1.0 + 4.0 * l * l).sqrt()) / 2.0;
    let mut lam = 0.0;
    for _ in 0..step {
        lam = next(lam);
    }
    (1.0 - lam) / next(lam)
}

/// Nesterov momentum factor `k / (k + 3)` with `k = step - 1`.
pub(crate) fn nesterov_factor(step: usize) -> f64 {
    let k = (step - 1) as f64;
    k / (k + 3.0)
}

/// Run the projected gradient method from the stretch-energy parameterization
/// with the given fixed boundary. Stops on cost non-decrease (returning the
/// last improving iterate), on the tolerance, or at `max_iters`.
pub fn run(
    mesh: &TetMesh,
    boundary: &BoundaryMap,
    config: &VomtConfig,
) -> Result<(VertexMap, VomtReport)> {
    let nu = vertex_measure(mesh);

    let (initial, initial_report) =
        vsem::run(mesh, boundary, &config.inner, InitialLaplacian::Identity)?;
    let cost0 = cost(mesh, &initial, &nu);
    let sf0 = stretch_factors(mesh, &initial);

    let mut report = VomtReport {
        cost: vec![cost0],
        energy: vec![initial_report.final_energy()],
        stretch_mean: vec![sf0.mean],
        stretch_std: vec![sf0.std],
        eps_norm: Vec::new(),
        step_sizes: Vec::new(),
        step_clamped: Vec::new(),
        rotations: Vec::new(),
        degenerate_rotations: 0,
        initial_report,
        vsem_reports: Vec::new(),
        termination: VomtTermination::MaxIters,
        foldings: 0,
        initial_map: initial.clone(),
    };

    let mut current = initial;
    let mut current_cost = cost0;
    let mut prev_hat: Option<Vec<f64>> = None;

    for step in 1..=config.max_iters {
        let grad = cost_gradient(mesh, &current, &nu);
        let Some(stepinfo) = exact_step(&grad, &nu) else {
            report.termination = VomtTermination::ZeroGradient;
            break;
        };

        let cur_vec = current.stacked();
        let hat: Vec<f64> = cur_vec
            .iter()
            .zip(&grad)
            .map(|(x, g)| x - stepinfo.alpha * g)
            .collect();
        let bar: Vec<f64> = match config.accel {
            Accel::None => hat.clone(),
            Accel::Nesterov => {
                let factor = nesterov_factor(step);
                match &prev_hat {
                    Some(prev) => hat
                        .iter()
                        .zip(prev)
                        .map(|(h, p)| h + factor * (h - p))
                        .collect(),
                    None => hat.clone(),
                }
            }
            Accel::Fista => {
                let beta = fista_beta(step);
                match &prev_hat {
                    Some(prev) => hat
                        .iter()
                        .zip(prev)
                        .map(|(h, p)| (1.0 - beta) * h + beta * p)
                        .collect(),
                    None => hat.clone(),
                }
            }
        };

        let bar_map = VertexMap::from_stacked(&bar);
        let (projected, vrep, rotation) = project(mesh, &bar_map, boundary, &nu, &config.inner)?;
        let new_cost = cost(mesh, &projected, &nu);

        report.step_sizes.push(stepinfo.alpha);
        report.step_clamped.push(stepinfo.clamped);
        report.rotations.push(rotation);
        if rotation == Matrix3::identity() && optimal_rotation(mesh, &projected, &nu).degenerate {
            report.degenerate_rotations += 1;
        }
        report
            .eps_norm
            .push(
                projected
                    .interleaved_diff(&current)
                    .iter()
                    .map(|e| e * e)
                    .sum::<f64>()
                    .sqrt(),
            );
        report.cost.push(new_cost);
        report.energy.push(vrep.final_energy());
        report.stretch_mean.push(*vrep.stretch_mean.last().unwrap());
        report.stretch_std.push(*vrep.stretch_std.last().unwrap());
        report.vsem_reports.push(vrep);

        let delta = current_cost - new_cost;
        if delta <= 0.0 {
            report.termination = VomtTermination::CostNonDecrease;
            report.foldings = folding_count(mesh, &current);
            return Ok((current, report));
        }
        current = projected;
        current_cost = new_cost;
        prev_hat = Some(hat);
        if delta <= config.tolerance {
            report.termination = VomtTermination::Tolerance;
            break;
        }
    }

    report.foldings = folding_count(mesh, &current);
    Ok((current, report))
}
