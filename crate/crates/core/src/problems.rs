//! Benchmark problem definitions: the half MBB beam and the bending
//! gripper finger.

use serde::{Deserialize, Serialize};

use crate::fem2d::{FemError, LoadCase, Material, Mesh2D};
use crate::simp::{ElementState, PassiveMask, SimpParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// `f^T u`, minimised.
    Compliance,
    /// Displacement of the output DOF, minimised.
    MechanismOutputDisplacement,
}

/// Axis-aligned block of elements, `x`/`y` the top-left column and row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementRect {
    pub x: usize,
    pub y: usize,
    pub l: usize,
    pub w: usize,
}

impl ElementRect {
    /// Marks the part of the rectangle inside the mesh.
    pub fn paint(&self, mesh: &Mesh2D, mask: &mut PassiveMask, state: ElementState) {
        for c in self.x.min(mesh.nx())..(self.x + self.l).min(mesh.nx()) {
            for r in self.y.min(mesh.ny())..(self.y + self.w).min(mesh.ny()) {
                mask.set(mesh.element(c, r), state);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    pub mesh: Mesh2D,
    pub load: LoadCase,
    pub objective: ObjectiveKind,
    pub volfrac: f64,
    /// Problem-intrinsic void regions, independent of any genome.
    pub fixed_voids: Vec<ElementRect>,
    pub material: Material,
    pub simp: SimpParams,
}

impl ProblemSpec {
    pub fn fixed_mask(&self) -> PassiveMask {
        let mut mask = PassiveMask::empty(self.mesh.n_elements());
        for rect in &self.fixed_voids {
            rect.paint(&self.mesh, &mut mask, ElementState::ForcedVoid);
        }
        mask
    }

    pub fn validate(&self) -> Result<(), FemError> {
        self.material.validate()?;
        if self.load.max_dof() >= self.mesh.n_dofs() {
            return Err(FemError::InvalidLoadCase(format!(
                "dof {} outside a mesh with {} dofs",
                self.load.max_dof(),
                self.mesh.n_dofs()
            )));
        }
        if !(self.volfrac > 0.0 && self.volfrac < 1.0) {
            return Err(FemError::InvalidInput(format!("volfrac must lie in (0, 1), got {}", self.volfrac)));
        }
        Ok(())
    }
}

/// Right half of a simply supported beam: unit downward load at the top-left
/// node, x-symmetry along the left edge, roller at the bottom-right corner.
pub fn mbb_problem(nx: usize, ny: usize, volfrac: f64) -> Result<ProblemSpec, FemError> {
    if nx < 4 || ny < 4 {
        return Err(FemError::InvalidMesh(format!("mbb needs at least 4x4 elements, got {nx}x{ny}")));
    }
    let mesh = Mesh2D::new(nx, ny)?;
    let load_dof = 2 * mesh.node(0, 0) + 1;
    let fixed = (0..=ny)
        .map(|r| 2 * mesh.node(0, r))
        .chain(std::iter::once(2 * mesh.node(nx, ny) + 1));
    let load = LoadCase::new([(load_dof, -1.0)], fixed)?;
    let problem = ProblemSpec {
        name: "mbb".into(),
        mesh,
        load,
        objective: ObjectiveKind::Compliance,
        volfrac,
        fixed_voids: Vec::new(),
        material: Material::default(),
        simp: SimpParams {
            rmin: SimpParams::default_rmin(nx),
            ..SimpParams::default()
        },
    };
    problem.validate()?;
    Ok(problem)
}

/// Geometry knobs of the gripper finger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperLayout {
    pub k_in: f64,
    pub k_out: f64,
    pub force: f64,
    /// Fraction of the left edge, from the top, that is clamped.
    pub clamp_fraction: f64,
    /// Fixed void strip as fractions of the domain: width, height, and
    /// horizontal centre. The strip sits on the bottom edge.
    pub strip_width: f64,
    pub strip_height: f64,
    pub strip_centre: f64,
}

impl Default for GripperLayout {
    fn default() -> Self {
        Self {
            k_in: 0.1,
            k_out: 0.1,
            force: 1.0,
            clamp_fraction: 0.5,
            strip_width: 0.4,
            strip_height: 0.2,
            strip_centre: 0.5,
        }
    }
}

/// Bending finger: the top-right corner is pushed along -x against an input
/// spring and the bottom-left tip should move down (its y displacement is
/// minimised) against an output spring. The upper part of the left edge is
/// clamped and a void strip on the bottom edge keeps the closing path clear.
pub fn gripper_problem(nx: usize, ny: usize, volfrac: f64) -> Result<ProblemSpec, FemError> {
    gripper_problem_with(nx, ny, volfrac, &GripperLayout::default())
}

pub fn gripper_problem_with(
    nx: usize,
    ny: usize,
    volfrac: f64,
    layout: &GripperLayout,
) -> Result<ProblemSpec, FemError> {
    if nx < 10 || ny < 10 {
        return Err(FemError::InvalidMesh(format!("gripper needs at least 10x10 elements, got {nx}x{ny}")));
    }
    if !(0.0..1.0).contains(&layout.clamp_fraction) {
        return Err(FemError::InvalidInput(format!(
            "clamp fraction must lie in [0, 1), got {}",
            layout.clamp_fraction
        )));
    }
    let mesh = Mesh2D::new(nx, ny)?;
    let input = 2 * mesh.node(nx, 0);
    let output = 2 * mesh.node(0, ny) + 1;
    let clamped_rows = ((ny as f64 * layout.clamp_fraction).round() as usize).clamp(1, ny - 1);
    let fixed = (0..=clamped_rows).flat_map(|r| [2 * mesh.node(0, r), 2 * mesh.node(0, r) + 1]);
    let load = LoadCase::new([(input, -layout.force)], fixed)?
        .with_spring(input, layout.k_in)?
        .with_spring(output, layout.k_out)?
        .with_output(output)?;
    let strip_l = ((nx as f64 * layout.strip_width).round() as usize).max(1);
    let strip_w = ((ny as f64 * layout.strip_height).round() as usize).max(1);
    let centre = (nx as f64 * layout.strip_centre).round() as usize;
    let strip = ElementRect {
        x: centre.saturating_sub(strip_l / 2).min(nx - 1),
        y: ny - strip_w.min(ny),
        l: strip_l,
        w: strip_w,
    };
    let problem = ProblemSpec {
        name: "gripper".into(),
        mesh,
        load,
        objective: ObjectiveKind::MechanismOutputDisplacement,
        volfrac,
        fixed_voids: vec![strip],
        material: Material::default(),
        simp: SimpParams {
            rmin: SimpParams::default_rmin(nx),
            ..SimpParams::default()
        },
    };
    problem.validate()?;
    Ok(problem)
}

/// Looks a problem up by its configuration name.
pub fn problem_by_name(name: &str, nx: usize, ny: usize, volfrac: f64) -> Result<ProblemSpec, FemError> {
    match name {
        "mbb" => mbb_problem(nx, ny, volfrac),
        "gripper" => gripper_problem(nx, ny, volfrac),
        other => Err(FemError::InvalidInput(format!("unknown problem '{other}'"))),
    }
}
