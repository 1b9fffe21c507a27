//! SIMP inner loop: FE analysis, sensitivities, sensitivity filtering and
//! optimality-criteria updates under a volume constraint.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem2d::{
    self, add_springs, assemble, bilinear, element_energy, element_stiffness, DisplacementField,
    ElementMatrix, FemError, LinearSystem, Material, Mesh2D, SparseMatrix,
};
use crate::problems::{ObjectiveKind, ProblemSpec};

/// Denominator guard of the sensitivity filter.
pub const FILTER_DENSITY_FLOOR: f64 = 1e-3;
/// Floor on `-g` in the optimality-criteria update of mechanism problems.
pub const MECHANISM_SENSITIVITY_FLOOR: f64 = 1e-10;
/// Relative width of the Lagrange multiplier bracket at which bisection stops.
pub const BISECTION_TOLERANCE: f64 = 1e-12;
/// Allowed deviation of the mean density from the volume fraction.
pub const VOLUME_TOLERANCE: f64 = 1e-4;
/// Starting density of genome voids in [`VoidMode::InitialOnly`]; the
/// multiplicative update could never lift an element off exactly zero.
pub const SEEDED_VOID_DENSITY: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimpError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("volume target {target} unreachable (attainable range [{min}, {max}])")]
    BisectionFailure { target: f64, min: f64, max: f64 },
    #[error("invalid design: {0}")]
    InvalidDesign(String),
}

impl SimpError {
    /// Whether the failure is attributable to the design rather than to the
    /// configuration. Design failures discard a genome, they never end a run.
    pub fn is_design_failure(&self) -> bool {
        !matches!(self, SimpError::Fem(FemError::InvalidMaterial(_) | FemError::InvalidMesh(_)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ElementState {
    #[default]
    Designable,
    ForcedVoid,
    ForcedSolid,
}

/// Per-element passivity flags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassiveMask {
    states: Vec<ElementState>,
}

impl PassiveMask {
    pub fn empty(n_elements: usize) -> Self {
        Self {
            states: vec![ElementState::Designable; n_elements],
        }
    }

    pub fn from_states(states: Vec<ElementState>) -> Self {
        Self { states }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[ElementState] {
        &self.states
    }

    pub fn get(&self, element: usize) -> ElementState {
        self.states[element]
    }

    pub fn set(&mut self, element: usize, state: ElementState) {
        self.states[element] = state;
    }

    pub fn is_void(&self, element: usize) -> bool {
        self.states[element] == ElementState::ForcedVoid
    }

    pub fn is_designable(&self, element: usize) -> bool {
        self.states[element] == ElementState::Designable
    }

    pub fn count(&self, state: ElementState) -> usize {
        self.states.iter().filter(|&&s| s == state).count()
    }

    /// Element-wise union; forced voids win over forced solids.
    pub fn union(&self, other: &PassiveMask) -> PassiveMask {
        assert_eq!(self.len(), other.len(), "mask sizes differ");
        let states = self
            .states
            .iter()
            .zip(&other.states)
            .map(|(&a, &b)| match (a, b) {
                (ElementState::ForcedVoid, _) | (_, ElementState::ForcedVoid) => ElementState::ForcedVoid,
                (ElementState::ForcedSolid, _) | (_, ElementState::ForcedSolid) => ElementState::ForcedSolid,
                _ => ElementState::Designable,
            })
            .collect();
        PassiveMask { states }
    }
}

/// Element densities together with the passivity mask they obey.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub rho: Vec<f64>,
    pub mask: PassiveMask,
}

impl DensityField {
    pub fn mean(&self) -> f64 {
        self.rho.iter().sum::<f64>() / self.rho.len() as f64
    }
}

/// Whether genome voids stay pinned at zero density or only seed the start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoidMode {
    #[default]
    Pinned,
    InitialOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimpParams {
    pub penal: f64,
    pub rmin: f64,
    pub move_limit: f64,
    pub inner_iters: usize,
    /// Stop once the largest density change of an update drops below this.
    pub change_tol: f64,
    pub void_mode: VoidMode,
    pub solver: fem2d::SolverOptions,
}

impl Default for SimpParams {
    fn default() -> Self {
        Self {
            penal: 3.0,
            rmin: 1.5,
            move_limit: 0.2,
            inner_iters: 50,
            change_tol: 0.01,
            void_mode: VoidMode::Pinned,
            solver: fem2d::SolverOptions::default(),
        }
    }
}

impl SimpParams {
    /// Filter radius used when none is configured: `nx / 50` elements, at
    /// least 1.5.
    pub fn default_rmin(nx: usize) -> f64 {
        (nx as f64 / 50.0).max(1.5)
    }

    pub fn validate(&self) -> Result<(), SimpError> {
        let bad = |m: String| Err(SimpError::Fem(FemError::InvalidInput(m)));
        if !(self.penal >= 1.0) {
            return bad(format!("penal must be >= 1, got {}", self.penal));
        }
        if !(self.rmin >= 1.0) {
            return bad(format!("rmin must be >= 1, got {}", self.rmin));
        }
        if !(self.move_limit > 0.0 && self.move_limit <= 1.0) {
            return bad(format!("move limit must lie in (0, 1], got {}", self.move_limit));
        }
        if self.inner_iters == 0 {
            return bad("inner_iters must be >= 1".into());
        }
        Ok(())
    }
}

/// Compliance sensitivities `-p rho^(p-1) (e0 - e_min) u_e^T k0 u_e`.
pub fn sensitivity_compliance(
    mesh: &Mesh2D,
    u: &DisplacementField,
    densities: &[f64],
    penal: f64,
    k0: &ElementMatrix,
    material: &Material,
) -> Vec<f64> {
    densities
        .iter()
        .enumerate()
        .map(|(e, &rho)| {
            let ue = u.element_values(mesh, e);
            -penal * rho.powf(penal - 1.0) * (material.e0 - material.e_min) * element_energy(k0, &ue)
        })
        .collect()
}

/// Output-displacement sensitivities `p rho^(p-1) (e0 - e_min) lambda_e^T k0 u_e`
/// given the adjoint field `lambda` solving `K lambda = -L`.
pub fn sensitivity_mechanism(
    mesh: &Mesh2D,
    u: &DisplacementField,
    lambda: &DisplacementField,
    densities: &[f64],
    penal: f64,
    k0: &ElementMatrix,
    material: &Material,
) -> Vec<f64> {
    densities
        .iter()
        .enumerate()
        .map(|(e, &rho)| {
            let ue = u.element_values(mesh, e);
            let le = lambda.element_values(mesh, e);
            penal * rho.powf(penal - 1.0) * (material.e0 - material.e_min) * bilinear(k0, &le, &ue)
        })
        .collect()
}

/// Precomputed cone weights `max(0, rmin - dist)` of the sensitivity filter.
#[derive(Debug, Clone)]
pub struct SensitivityFilter {
    neighbours: Vec<Vec<(usize, f64)>>,
    weight_sums: Vec<f64>,
}

impl SensitivityFilter {
    pub fn new(mesh: &Mesh2D, rmin: f64) -> Self {
        let reach = (rmin.ceil() as usize).saturating_sub(1);
        let mut neighbours = Vec::with_capacity(mesh.n_elements());
        let mut weight_sums = Vec::with_capacity(mesh.n_elements());
        for e in 0..mesh.n_elements() {
            let (c, r) = mesh.element_col_row(e);
            let mut list = Vec::new();
            for c2 in c.saturating_sub(reach)..=(c + reach).min(mesh.nx() - 1) {
                for r2 in r.saturating_sub(reach)..=(r + reach).min(mesh.ny() - 1) {
                    let dc = c as f64 - c2 as f64;
                    let dr = r as f64 - r2 as f64;
                    let w = rmin - (dc * dc + dr * dr).sqrt();
                    if w > 0.0 {
                        list.push((mesh.element(c2, r2), w));
                    }
                }
            }
            weight_sums.push(list.iter().map(|&(_, w)| w).sum());
            neighbours.push(list);
        }
        Self {
            neighbours,
            weight_sums,
        }
    }

    /// `g'_e = sum_i w_i rho_i g_i / (max(rho_e, 1e-3) sum_i w_i)`.
    pub fn apply(&self, densities: &[f64], gradient: &[f64]) -> Vec<f64> {
        self.neighbours
            .iter()
            .zip(&self.weight_sums)
            .enumerate()
            .map(|(e, (list, &wsum))| {
                let acc: f64 = list.iter().map(|&(i, w)| w * densities[i] * gradient[i]).sum();
                acc / (densities[e].max(FILTER_DENSITY_FLOOR) * wsum)
            })
            .collect()
    }
}

/// One-shot sensitivity filter.
pub fn filter_sensitivities(mesh: &Mesh2D, densities: &[f64], gradient: &[f64], rmin: f64) -> Vec<f64> {
    SensitivityFilter::new(mesh, rmin).apply(densities, gradient)
}

/// Optimality-criteria step `rho * sqrt(-g / lambda)` clipped to the move
/// limit and `[0, 1]`, with `lambda` bisected so the mean density over all
/// elements meets `volfrac`. Passive elements are copied unchanged. With
/// `floor` set, `-g` is replaced by `max(-g, floor)` (mechanism problems).
pub fn oc_update(
    field: &DensityField,
    gradient: &[f64],
    volfrac: f64,
    move_limit: f64,
    floor: Option<f64>,
) -> Result<DensityField, SimpError> {
    let n = field.rho.len();
    let target = volfrac * n as f64;
    let rho = &field.rho;
    let mask = &field.mask;
    let drive: Vec<f64> = gradient
        .iter()
        .map(|&g| match floor {
            Some(f) => (-g).max(f),
            None => -g,
        })
        .collect();
    let candidate = |lambda: f64| -> Vec<f64> {
        rho.iter()
            .zip(&drive)
            .enumerate()
            .map(|(e, (&x, &d))| {
                if !mask.is_designable(e) {
                    return x;
                }
                let step = x * (d / lambda).sqrt();
                (x - move_limit).max(0.0).max((x + move_limit).min(1.0).min(step))
            })
            .collect()
    };
    let bound_sum = |upper: bool| -> f64 {
        rho.iter()
            .enumerate()
            .map(|(e, &x)| match (mask.is_designable(e), upper) {
                (false, _) => x,
                (true, true) => (x + move_limit).min(1.0),
                (true, false) => (x - move_limit).max(0.0),
            })
            .sum()
    };
    let (lo_sum, hi_sum) = (bound_sum(false), bound_sum(true));
    let slack = VOLUME_TOLERANCE * n as f64;
    if target > hi_sum + slack || target < lo_sum - slack {
        return Err(SimpError::BisectionFailure {
            target: volfrac,
            min: lo_sum / n as f64,
            max: hi_sum / n as f64,
        });
    }

    let mut l1 = 0.0;
    let mut l2 = 1e9;
    while candidate(l2).iter().sum::<f64>() > target && l2 < 1e300 {
        l2 *= 1e3;
    }
    let mut next = rho.clone();
    while (l2 - l1) / (l1 + l2) > BISECTION_TOLERANCE {
        let lmid = 0.5 * (l2 + l1);
        next = candidate(lmid);
        if next.iter().sum::<f64>() > target {
            l1 = lmid;
        } else {
            l2 = lmid;
        }
    }
    let mean = next.iter().sum::<f64>() / n as f64;
    if (mean - volfrac).abs() > VOLUME_TOLERANCE {
        return Err(SimpError::BisectionFailure {
            target: volfrac,
            min: lo_sum / n as f64,
            max: hi_sum / n as f64,
        });
    }
    Ok(DensityField {
        rho: next,
        mask: mask.clone(),
    })
}

/// Starting densities for the inner loop.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialDensity {
    /// Designable elements share the material budget evenly.
    #[default]
    Uniform,
    /// Explicit designable densities; passive entries are overwritten.
    Custom(Vec<f64>),
}

/// Uniform random designable densities in `[volfrac - 0.1, volfrac + 0.1]`
/// rescaled so that the overall mean meets `volfrac`.
pub fn random_initial_density<R: Rng + ?Sized>(rng: &mut R, mask: &PassiveMask, volfrac: f64) -> Vec<f64> {
    let lo = (volfrac - 0.1).max(0.0);
    let hi = (volfrac + 0.1).min(1.0);
    let raw: Vec<f64> = (0..mask.len())
        .map(|e| if mask.is_designable(e) { rng.gen_range(lo..=hi) } else { 0.0 })
        .collect();
    let fixed: f64 = mask.count(ElementState::ForcedSolid) as f64;
    let budget = volfrac * mask.len() as f64 - fixed;
    let sum: f64 = raw.iter().sum();
    let scale = if sum > 0.0 { budget / sum } else { 0.0 };
    raw.iter().map(|x| (x * scale).clamp(0.0, 1.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Objective of the design entering this iteration.
    pub objective: f64,
    /// Mean density after the update.
    pub volume: f64,
    /// Largest absolute density change of the update.
    pub change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpResult {
    /// Objective of the returned density field.
    pub objective: f64,
    pub density: DensityField,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

/// State handed to an observer once per inner iteration.
pub struct IterationState<'a> {
    pub iteration: usize,
    pub before: &'a DensityField,
    pub after: &'a DensityField,
    pub stiffness: &'a SparseMatrix,
    pub displacement: &'a DisplacementField,
    pub force: &'a [f64],
    pub record: IterationRecord,
}

struct Analysis {
    objective: f64,
    gradient: Vec<f64>,
    stiffness: SparseMatrix,
    displacement: DisplacementField,
}

fn analyse(problem: &ProblemSpec, rho: &[f64], k0: &ElementMatrix, with_gradient: bool) -> Result<Analysis, SimpError> {
    let mesh = &problem.mesh;
    let penal = problem.simp.penal;
    let mut k = assemble(mesh, rho, penal, &problem.material)?;
    add_springs(&mut k, &problem.load)?;
    let system = LinearSystem::new(&k, problem.load.fixed_dofs(), problem.simp.solver)?;
    let f = problem.load.force_vector(mesh.n_dofs());
    let u = system.solve_rhs(&f)?;
    let (objective, gradient) = match problem.objective {
        ObjectiveKind::Compliance => {
            let objective: f64 = f.iter().zip(&u.u).map(|(a, b)| a * b).sum();
            let g = if with_gradient {
                sensitivity_compliance(mesh, &u, rho, penal, k0, &problem.material)
            } else {
                Vec::new()
            };
            (objective, g)
        }
        ObjectiveKind::MechanismOutputDisplacement => {
            let out = problem
                .load
                .output_dof()
                .ok_or_else(|| SimpError::InvalidDesign("mechanism problem without output dof".into()))?;
            let g = if with_gradient {
                let lambda = fem2d::adjoint_solve(&system, out)?;
                sensitivity_mechanism(mesh, &u, &lambda, rho, penal, k0, &problem.material)
            } else {
                Vec::new()
            };
            (u.u[out], g)
        }
    };
    if !objective.is_finite() {
        return Err(SimpError::InvalidDesign(format!("non-finite objective {objective}")));
    }
    Ok(Analysis {
        objective,
        gradient,
        stiffness: k,
        displacement: u,
    })
}

/// Rejects masks that bury a load, output or support node inside forced
/// voids, leave nothing designable, or make the volume target unreachable.
pub fn check_design(problem: &ProblemSpec, mask: &PassiveMask) -> Result<(), SimpError> {
    let mesh = &problem.mesh;
    let n = mesh.n_elements();
    if mask.len() != n {
        return Err(SimpError::InvalidDesign(format!("mask has {} entries for {} elements", mask.len(), n)));
    }
    if mask.count(ElementState::Designable) == 0 {
        return Err(SimpError::InvalidDesign("no designable elements".into()));
    }
    let voids = mask.count(ElementState::ForcedVoid) as f64;
    let solids = mask.count(ElementState::ForcedSolid) as f64;
    if voids >= (1.0 - problem.volfrac) * n as f64 || solids > problem.volfrac * n as f64 {
        return Err(SimpError::InvalidDesign(format!(
            "volume target {} unreachable with {voids} void and {solids} solid elements",
            problem.volfrac
        )));
    }
    let buried = |dof: usize| mesh.node_elements(dof / 2).iter().all(|&e| mask.is_void(e));
    let load = &problem.load;
    let output = load.output_dof();
    let critical = load
        .loads()
        .keys()
        .chain(output.iter())
        .chain(load.fixed_dofs().iter());
    for &dof in critical {
        if buried(dof) {
            return Err(SimpError::InvalidDesign(format!(
                "dof {dof} lies inside a forced-void region"
            )));
        }
    }
    Ok(())
}

/// Runs the SIMP loop on `problem` with the genome mask `mask` unioned with
/// the problem's own passive regions.
pub fn run_simp(problem: &ProblemSpec, mask: &PassiveMask, init: &InitialDensity) -> Result<SimpResult, SimpError> {
    run_simp_observed(problem, mask, init, |_| {})
}

/// [`run_simp`] with a callback invoked after every optimality-criteria step.
pub fn run_simp_observed<F>(
    problem: &ProblemSpec,
    mask: &PassiveMask,
    init: &InitialDensity,
    mut observer: F,
) -> Result<SimpResult, SimpError>
where
    F: FnMut(&IterationState<'_>),
{
    problem.simp.validate()?;
    problem.material.validate()?;
    let mesh = &problem.mesh;
    let n = mesh.n_elements();
    let genome_mask = if mask.is_empty() { PassiveMask::empty(n) } else { mask.clone() };
    if genome_mask.len() != n {
        return Err(SimpError::InvalidDesign(format!("mask has {} entries for {} elements", genome_mask.len(), n)));
    }
    let full_mask = problem.fixed_mask().union(&genome_mask);
    check_design(problem, &full_mask)?;

    // Genome voids either stay passive or just start empty.
    let optimised_mask = match problem.simp.void_mode {
        VoidMode::Pinned => full_mask.clone(),
        VoidMode::InitialOnly => {
            let mut m = problem.fixed_mask();
            for e in 0..n {
                if genome_mask.get(e) == ElementState::ForcedSolid {
                    m.set(e, ElementState::ForcedSolid);
                }
            }
            m
        }
    };

    let designable = full_mask.count(ElementState::Designable) as f64;
    let solids = full_mask.count(ElementState::ForcedSolid) as f64;
    let share = ((problem.volfrac * n as f64 - solids) / designable).clamp(0.0, 1.0);
    let void_start = |e: usize| {
        if optimised_mask.is_designable(e) {
            SEEDED_VOID_DENSITY
        } else {
            0.0
        }
    };
    let rho: Vec<f64> = match init {
        InitialDensity::Uniform => (0..n)
            .map(|e| match full_mask.get(e) {
                ElementState::Designable => share,
                ElementState::ForcedVoid => void_start(e),
                ElementState::ForcedSolid => 1.0,
            })
            .collect(),
        InitialDensity::Custom(values) => {
            if values.len() != n {
                return Err(SimpError::Fem(FemError::InvalidInput(format!(
                    "{} initial densities for {} elements",
                    values.len(),
                    n
                ))));
            }
            (0..n)
                .map(|e| match full_mask.get(e) {
                    ElementState::Designable => values[e].clamp(0.0, 1.0),
                    ElementState::ForcedVoid => void_start(e),
                    ElementState::ForcedSolid => 1.0,
                })
                .collect()
        }
    };
    let mut field = DensityField {
        rho,
        mask: optimised_mask,
    };

    let k0 = element_stiffness(1.0, problem.material.nu)?;
    let filter = SensitivityFilter::new(mesh, problem.simp.rmin);
    let floor = match problem.objective {
        ObjectiveKind::Compliance => None,
        ObjectiveKind::MechanismOutputDisplacement => Some(MECHANISM_SENSITIVITY_FLOOR),
    };
    let force = problem.load.force_vector(mesh.n_dofs());
    let mut history = Vec::with_capacity(problem.simp.inner_iters);
    let mut converged = false;
    for iteration in 0..problem.simp.inner_iters {
        let analysis = analyse(problem, &field.rho, &k0, true)?;
        let filtered = filter.apply(&field.rho, &analysis.gradient);
        let next = oc_update(&field, &filtered, problem.volfrac, problem.simp.move_limit, floor)?;
        let change = field
            .rho
            .iter()
            .zip(&next.rho)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let record = IterationRecord {
            objective: analysis.objective,
            volume: next.mean(),
            change,
        };
        observer(&IterationState {
            iteration,
            before: &field,
            after: &next,
            stiffness: &analysis.stiffness,
            displacement: &analysis.displacement,
            force: &force,
            record,
        });
        history.push(record);
        field = next;
        if change < problem.simp.change_tol {
            converged = true;
            break;
        }
    }
    let final_analysis = analyse(problem, &field.rho, &k0, false)?;
    Ok(SimpResult {
        objective: final_analysis.objective,
        density: field,
        history,
        converged,
    })
}
