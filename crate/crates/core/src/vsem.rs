//! Fixed-boundary stretch energy minimization: the interior coordinates are
//! re-solved from `L_II f_I = -L_IB f_B` with the Laplacian re-assembled at
//! each iterate.

use serde::Serialize;

use crate::error::Result;
use crate::laplacian::{stretch_factors, EdgePattern, StretchLaplacian};
use crate::linsolve::{self, SolverKind};
use crate::mesh::{folding_count, BoundaryMap, TetMesh, VertexClass, VertexMap};

#[derive(Debug, Clone, Serialize)]
pub struct VsemConfig {
    /// Stop once the energy decrease falls to this tolerance or below.
    pub tolerance: f64,
    /// Maximum number of reassembly cycles after the initial solve.
    pub max_iters: usize,
    pub solver: SolverKind,
}

impl Default for VsemConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iters: 5,
            solver: SolverKind::Direct,
        }
    }
}

/// Laplacian used for the initial solve.
#[derive(Debug, Clone, Copy)]
pub enum InitialLaplacian<'a> {
    /// `L_V(id)` of the source mesh.
    Identity,
    /// `L_V` at a supplied map (used by the projection step of the transport
    /// solver).
    AtMap(&'a VertexMap),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Tolerance,
    MaxIters,
    /// The energy increased; the previous (better) iterate was returned.
    EnergyIncrease,
}

/// Per-iteration history of one run. Entry `m` of `energy` and the stretch
/// statistics describes iterate `m` (iterate 0 is the initial solve);
/// `eps_norm[m-1]` is the interleaved difference norm between iterates `m`
/// and `m-1`.
#[derive(Debug, Clone, Serialize)]
pub struct SolverReport {
    pub energy: Vec<f64>,
    pub eps_norm: Vec<f64>,
    pub stretch_mean: Vec<f64>,
    pub stretch_std: Vec<f64>,
    pub termination: Termination,
    pub foldings: usize,
    pub condition_max: f64,
    pub notes: Vec<String>,
}

impl SolverReport {
    pub fn iterations(&self) -> usize {
        self.energy.len().saturating_sub(1)
    }

    pub fn final_energy(&self) -> f64 {
        *self.energy.last().expect("at least the initial iterate")
    }
}

/// Interior solve for a fixed Laplacian and boundary: three right-hand sides
/// share one factorization. Returns the full map (boundary rows copied from
/// `boundary`).
pub fn solve_interior(
    lap: &StretchLaplacian,
    mesh: &TetMesh,
    boundary: &BoundaryMap,
    solver: SolverKind,
    iteration: usize,
) -> Result<VertexMap> {
    let out = linsolve::solve_interior(lap, mesh, boundary, solver, iteration)?;
    Ok(compose(mesh, &out.coords, boundary))
}

/// Assemble the full vertex map from interior and boundary rows.
pub fn compose(mesh: &TetMesh, interior: &[crate::mesh::Vec3], boundary: &BoundaryMap) -> VertexMap {
    let coords = (0..mesh.vertex_count())
        .map(|v| match mesh.vertex_class(v) {
            VertexClass::Interior(p) => interior[p],
            VertexClass::Boundary(p) => boundary.coords()[p],
        })
        .collect();
    VertexMap::new(coords)
}

/// Run the fixed-point iteration. The initial solve uses the Laplacian given
/// by `init`; each cycle reassembles the Laplacian at the last iterate,
/// solves, and stops when the energy decrease `delta` drops to the tolerance,
/// the iteration limit is reached, or the energy increases (in which case the
/// previous iterate is returned).
pub fn run(
    mesh: &TetMesh,
    boundary: &BoundaryMap,
    config: &VsemConfig,
    init: InitialLaplacian<'_>,
) -> Result<(VertexMap, SolverReport)> {
    let pattern = EdgePattern::build(mesh);
    let mut notes = Vec::new();
    let mut condition_max = 0.0f64;

    let init_map;
    let init_ref = match init {
        InitialLaplacian::Identity => {
            init_map = VertexMap::identity(mesh);
            &init_map
        }
        InitialLaplacian::AtMap(m) => m,
    };

    let lap0 = StretchLaplacian::assemble_with_pattern(mesh, init_ref, &pattern);
    let mut current = solve_step(
        &lap0,
        mesh,
        boundary,
        config.solver,
        0,
        &mut condition_max,
        &mut notes,
    )?;
    let mut lap = StretchLaplacian::assemble_with_pattern(mesh, &current, &pattern);
    let mut energy_cur = lap.energy(&current);
    if !energy_cur.is_finite() {
        return Err(crate::error::Error::NonFiniteEnergy { iteration: 0 });
    }

    let mut report = SolverReport {
        energy: vec![energy_cur],
        eps_norm: Vec::new(),
        stretch_mean: Vec::new(),
        stretch_std: Vec::new(),
        termination: Termination::MaxIters,
        foldings: 0,
        condition_max: 0.0,
        notes: Vec::new(),
    };
    let sf = stretch_factors(mesh, &current);
    report.stretch_mean.push(sf.mean);
    report.stretch_std.push(sf.std);

    for m in 1..=config.max_iters {
        let next = solve_step(
            &lap,
            mesh,
            boundary,
            config.solver,
            m,
            &mut condition_max,
            &mut notes,
        )?;
        let lap_next = StretchLaplacian::assemble_with_pattern(mesh, &next, &pattern);
        let energy_next = lap_next.energy(&next);
        if !energy_next.is_finite() {
            return Err(crate::error::Error::NonFiniteEnergy { iteration: m });
        }

        let eps = next.interleaved_diff(&current);
        report
            .eps_norm
            .push(eps.iter().map(|e| e * e).sum::<f64>().sqrt());
        report.energy.push(energy_next);
        let sf = stretch_factors(mesh, &next);
        report.stretch_mean.push(sf.mean);
        report.stretch_std.push(sf.std);

        let delta = energy_cur - energy_next;
        if delta < 0.0 {
            report.termination = Termination::EnergyIncrease;
            report.foldings = folding_count(mesh, &current);
            report.condition_max = condition_max;
            report.notes = notes;
            return Ok((current, report));
        }
        current = next;
        lap = lap_next;
        energy_cur = energy_next;
        if delta <= config.tolerance {
            report.termination = Termination::Tolerance;
            break;
        }
    }

    report.foldings = folding_count(mesh, &current);
    report.condition_max = condition_max;
    report.notes = notes;
    Ok((current, report))
}

/// Run exactly `iters` fixed-point cycles with no termination tests and
/// record every iterate (index 0 is the initial solve). Used by the
/// long-horizon convergence diagnostics, which study the raw iteration.
pub fn run_recorded(
    mesh: &TetMesh,
    boundary: &BoundaryMap,
    solver: SolverKind,
    iters: usize,
    init: InitialLaplacian<'_>,
) -> Result<Vec<VertexMap>> {
    let pattern = EdgePattern::build(mesh);
    let mut notes = Vec::new();
    let mut cond = 0.0;

    let init_map;
    let init_ref = match init {
        InitialLaplacian::Identity => {
            init_map = VertexMap::identity(mesh);
            &init_map
        }
        InitialLaplacian::AtMap(m) => m,
    };
    let lap0 = StretchLaplacian::assemble_with_pattern(mesh, init_ref, &pattern);
    let mut current = solve_step(&lap0, mesh, boundary, solver, 0, &mut cond, &mut notes)?;
    let mut history = vec![current.clone()];
    for m in 1..=iters {
        let lap = StretchLaplacian::assemble_with_pattern(mesh, &current, &pattern);
        current = solve_step(&lap, mesh, boundary, solver, m, &mut cond, &mut notes)?;
        history.push(current.clone());
    }
    Ok(history)
}

fn solve_step(
    lap: &StretchLaplacian,
    mesh: &TetMesh,
    boundary: &BoundaryMap,
    solver: SolverKind,
    iteration: usize,
    condition_max: &mut f64,
    notes: &mut Vec<String>,
) -> Result<VertexMap> {
    let out = linsolve::solve_interior(lap, mesh, boundary, solver, iteration)?;
    *condition_max = condition_max.max(out.condition_estimate);
    if let Some(note) = out.note {
        notes.push(format!("iteration {iteration}: {note}"));
    }
    Ok(compose(mesh, &out.coords, boundary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary;
    use crate::generate;
    use crate::laplacian;

    fn ball_setup(refine: u32) -> (TetMesh, BoundaryMap) {
        let mesh = generate::ball(refine).unwrap().normalize_total_measure();
        let bnd = boundary::compute(&mesh, 30).unwrap();
        (mesh, bnd)
    }

    #[test]
    fn energies_non_increasing_and_report_consistent() {
        let (mesh, bnd) = ball_setup(4);
        let config = VsemConfig::default();
        let (map, report) = run(&mesh, &bnd, &config, InitialLaplacian::Identity).unwrap();
        assert_eq!(report.energy.len(), report.eps_norm.len() + 1);
        assert_eq!(report.energy.len(), report.stretch_mean.len());
        for w in report.energy.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "energy increased: {w:?}");
        }
        assert_eq!(folding_count(&mesh, &map), report.foldings);
    }

    #[test]
    fn tolerance_gate_stops_after_one_cycle() {
        let (mesh, bnd) = ball_setup(2);
        let config = VsemConfig {
            tolerance: f64::INFINITY,
            ..Default::default()
        };
        let (_, report) = run(&mesh, &bnd, &config, InitialLaplacian::Identity).unwrap();
        assert_eq!(report.termination, Termination::Tolerance);
        assert_eq!(report.iterations(), 1);
    }

    #[test]
    fn ball_quality_after_five_iterations() {
        // small-mesh analog of the benchmark pattern; the tight bands run on
        // finer meshes in the acceptance suite. The mean sits above 1 by the
        // inscribed-polyhedron volume deficit of the boundary sphere.
        let mesh = generate::shell_ball(2, 2).unwrap().normalize_total_measure();
        let bnd = boundary::compute(&mesh, 30).unwrap();
        let (map, report) =
            run(&mesh, &bnd, &VsemConfig::default(), InitialLaplacian::Identity).unwrap();
        let sf = laplacian::stretch_factors(&mesh, &map);
        assert!((sf.mean - 1.0).abs() < 0.04, "mean = {}", sf.mean);
        assert!(sf.std < 0.05, "std = {}", sf.std);
        assert_eq!(report.foldings, 0);
        let e = report.final_energy();
        let two_pi = 2.0 * std::f64::consts::PI;
        assert!((e - two_pi).abs() / two_pi < 0.10, "E_V = {e}");
    }

    #[test]
    fn converged_energy_matches_image_volume() {
        // at a fixed point with sigma == 1 the energy equals (3/2) |f(M)|;
        // sigma == 1 needs the total measure to match the attainable image
        // volume, so rescale to it before checking
        let mesh = generate::shell_ball(2, 2).unwrap().normalize_total_measure();
        let bnd = boundary::compute(&mesh, 30).unwrap();
        let config = VsemConfig {
            tolerance: 0.0,
            max_iters: 200,
            ..Default::default()
        };
        let (map, _) = run(&mesh, &bnd, &config, InitialLaplacian::Identity).unwrap();
        let vol = crate::mesh::boundary_enclosed_volume(&mesh, &map);

        let total_vol: f64 = mesh.volumes().iter().sum();
        let rescaled = mesh
            .clone()
            .with_density(&vec![vol / total_vol; mesh.tet_count()])
            .unwrap();
        assert!((rescaled.total_measure() - vol).abs() < 1e-10 * vol);

        let (map2, report2) = run(&rescaled, &bnd, &config, InitialLaplacian::Identity).unwrap();
        let vol2 = crate::mesh::boundary_enclosed_volume(&rescaled, &map2);
        let expected = 1.5 * vol2;
        let e = report2.final_energy();
        assert!(
            (e - expected).abs() / expected < 1e-3,
            "E = {e}, 1.5|f(M)| = {expected}"
        );
    }
}
