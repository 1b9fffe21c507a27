//! Linear plane-stress finite elements on a regular grid of unit-square
//! bilinear quadrilaterals.
//!
//! Numbering follows the usual educational SIMP codes: nodes and elements are
//! numbered column by column, top to bottom. Node `(col, row)` has index
//! `col * (ny + 1) + row`, element `(col, row)` has index `col * ny + row`,
//! and node `n` owns DOFs `2n` (x) and `2n + 1` (y, positive upwards).
//!
//! Stiffness interpolation is the modified SIMP law
//! `E(rho) = e_min + rho^penal * (e0 - e_min)` applied to the unit-modulus
//! element matrix `k0`, so `K = sum_e E(rho_e) * k0`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense 8x8 element matrix in local DOF order BL, BR, TR, TL (x then y).
pub type ElementMatrix = [[f64; 8]; 8];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("invalid load case: {0}")]
    InvalidLoadCase(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("singular stiffness matrix (pivot {pivot:e} at reduced dof {dof})")]
    SingularSystem { dof: usize, pivot: f64 },
    #[error("linear solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    NonConvergence { iterations: usize, residual: f64 },
}

/// Regular `nx` x `ny` grid of square elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mesh2D {
    nx: usize,
    ny: usize,
    element_size: f64,
}

impl Mesh2D {
    pub fn new(nx: usize, ny: usize) -> Result<Self, FemError> {
        Self::with_element_size(nx, ny, 1.0)
    }

    pub fn with_element_size(nx: usize, ny: usize, element_size: f64) -> Result<Self, FemError> {
        if nx == 0 || ny == 0 {
            return Err(FemError::InvalidMesh(format!(
                "mesh needs at least one element per direction, got {nx}x{ny}"
            )));
        }
        if !(element_size > 0.0 && element_size.is_finite()) {
            return Err(FemError::InvalidMesh(format!(
                "element size must be positive, got {element_size}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            element_size,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn element_size(&self) -> f64 {
        self.element_size
    }

    pub fn n_elements(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.n_nodes()
    }

    pub fn node(&self, col: usize, row: usize) -> usize {
        debug_assert!(col <= self.nx && row <= self.ny);
        col * (self.ny + 1) + row
    }

    pub fn node_col_row(&self, node: usize) -> (usize, usize) {
        (node / (self.ny + 1), node % (self.ny + 1))
    }

    pub fn element(&self, col: usize, row: usize) -> usize {
        debug_assert!(col < self.nx && row < self.ny);
        col * self.ny + row
    }

    pub fn element_col_row(&self, element: usize) -> (usize, usize) {
        (element / self.ny, element % self.ny)
    }

    /// Physical position of a node, x to the right and y upwards from the
    /// bottom-left corner.
    pub fn node_position(&self, node: usize) -> (f64, f64) {
        let (col, row) = self.node_col_row(node);
        (
            col as f64 * self.element_size,
            (self.ny - row) as f64 * self.element_size,
        )
    }

    /// Global DOFs of an element in local order BL, BR, TR, TL.
    pub fn element_dofs(&self, element: usize) -> [usize; 8] {
        let (col, row) = self.element_col_row(element);
        let tl = self.node(col, row);
        let bl = tl + 1;
        let tr = tl + self.ny + 1;
        let br = tr + 1;
        [
            2 * bl,
            2 * bl + 1,
            2 * br,
            2 * br + 1,
            2 * tr,
            2 * tr + 1,
            2 * tl,
            2 * tl + 1,
        ]
    }

    /// Elements sharing a node (one to four).
    pub fn node_elements(&self, node: usize) -> Vec<usize> {
        let (col, row) = self.node_col_row(node);
        let mut out = Vec::with_capacity(4);
        for c in col.saturating_sub(1)..=col.min(self.nx - 1) {
            for r in row.saturating_sub(1)..=row.min(self.ny - 1) {
                out.push(self.element(c, r));
            }
        }
        out
    }

    /// Image of a DOF under reflection about the vertical centre line.
    pub fn mirror_dof_x(&self, dof: usize) -> usize {
        let (col, row) = self.node_col_row(dof / 2);
        2 * self.node(self.nx - col, row) + dof % 2
    }

    /// Image of an element under reflection about the vertical centre line.
    pub fn mirror_element_x(&self, element: usize) -> usize {
        let (col, row) = self.element_col_row(element);
        self.element(self.nx - 1 - col, row)
    }
}

/// Young's modulus range and Poisson ratio of the solid phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub e0: f64,
    pub e_min: f64,
    pub nu: f64,
}

impl Default for Material {
    fn default() -> Self {
        Self {
            e0: 1.0,
            e_min: 1e-9,
            nu: 0.3,
        }
    }
}

impl Material {
    pub fn validate(&self) -> Result<(), FemError> {
        if !(self.e0 > 0.0 && self.e0.is_finite()) {
            return Err(FemError::InvalidMaterial(format!("e0 must be positive, got {}", self.e0)));
        }
        if !(self.e_min > 0.0 && self.e_min < self.e0) {
            return Err(FemError::InvalidMaterial(format!(
                "e_min must lie in (0, e0), got {}",
                self.e_min
            )));
        }
        if !(0.0..0.5).contains(&self.nu) {
            return Err(FemError::InvalidMaterial(format!(
                "poisson ratio must lie in [0, 0.5), got {}",
                self.nu
            )));
        }
        Ok(())
    }

    /// Interpolated modulus `e_min + rho^penal (e0 - e_min)`.
    pub fn modulus(&self, rho: f64, penal: f64) -> f64 {
        self.e_min + rho.powf(penal) * (self.e0 - self.e_min)
    }
}

/// Point loads, supports and (for mechanisms) springs and the output DOF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadCase {
    loads: BTreeMap<usize, f64>,
    fixed_dofs: Vec<usize>,
    output_dof: Option<usize>,
    springs: BTreeMap<usize, f64>,
}

impl LoadCase {
    pub fn new(
        loads: impl IntoIterator<Item = (usize, f64)>,
        fixed_dofs: impl IntoIterator<Item = usize>,
    ) -> Result<Self, FemError> {
        let mut map = BTreeMap::new();
        for (dof, f) in loads {
            if !f.is_finite() {
                return Err(FemError::InvalidLoadCase(format!("non-finite load on dof {dof}")));
            }
            *map.entry(dof).or_insert(0.0) += f;
        }
        let mut fixed: Vec<usize> = fixed_dofs.into_iter().collect();
        fixed.sort_unstable();
        fixed.dedup();
        if fixed.is_empty() {
            return Err(FemError::InvalidLoadCase("no constrained dofs".into()));
        }
        if let Some(dof) = map.keys().find(|d| fixed.binary_search(d).is_ok()) {
            return Err(FemError::InvalidLoadCase(format!("dof {dof} is both loaded and fixed")));
        }
        Ok(Self {
            loads: map,
            fixed_dofs: fixed,
            output_dof: None,
            springs: BTreeMap::new(),
        })
    }

    /// Marks the DOF whose displacement a mechanism objective reads.
    pub fn with_output(mut self, dof: usize) -> Result<Self, FemError> {
        if self.is_fixed(dof) {
            return Err(FemError::InvalidLoadCase(format!("output dof {dof} is fixed")));
        }
        self.output_dof = Some(dof);
        Ok(self)
    }

    /// Adds a grounded spring of stiffness `k` on `dof`.
    pub fn with_spring(mut self, dof: usize, k: f64) -> Result<Self, FemError> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(FemError::InvalidLoadCase(format!("spring stiffness {k} on dof {dof}")));
        }
        *self.springs.entry(dof).or_insert(0.0) += k;
        Ok(self)
    }

    pub fn loads(&self) -> &BTreeMap<usize, f64> {
        &self.loads
    }

    pub fn fixed_dofs(&self) -> &[usize] {
        &self.fixed_dofs
    }

    pub fn output_dof(&self) -> Option<usize> {
        self.output_dof
    }

    pub fn springs(&self) -> &BTreeMap<usize, f64> {
        &self.springs
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        self.fixed_dofs.binary_search(&dof).is_ok()
    }

    /// Largest DOF index mentioned anywhere in the load case.
    pub fn max_dof(&self) -> usize {
        self.loads
            .keys()
            .chain(self.fixed_dofs.iter())
            .chain(self.springs.keys())
            .chain(self.output_dof.iter())
            .copied()
            .max()
            .unwrap_or(0)
    }

    /// Dense load vector of length `n_dofs`.
    pub fn force_vector(&self, n_dofs: usize) -> Vec<f64> {
        let mut f = vec![0.0; n_dofs];
        for (&dof, &val) in &self.loads {
            f[dof] = val;
        }
        f
    }

    /// Returns a copy with every load multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in out.loads.values_mut() {
            *v *= factor;
        }
        out
    }
}

/// Nodal displacement vector, fixed DOFs exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub u: Vec<f64>,
}

impl DisplacementField {
    pub fn element_values(&self, mesh: &Mesh2D, element: usize) -> [f64; 8] {
        let dofs = mesh.element_dofs(element);
        std::array::from_fn(|i| self.u[dofs[i]])
    }
}

/// Closed-form stiffness of a unit-thickness square Q4 element in plane
/// stress, integrated exactly (2x2 Gauss).
pub fn element_stiffness(young_modulus: f64, poisson_ratio: f64) -> Result<ElementMatrix, FemError> {
    if !(young_modulus > 0.0 && young_modulus.is_finite()) {
        return Err(FemError::InvalidMaterial(format!(
            "young modulus must be positive, got {young_modulus}"
        )));
    }
    if !(0.0..0.5).contains(&poisson_ratio) {
        return Err(FemError::InvalidMaterial(format!(
            "poisson ratio must lie in [0, 0.5), got {poisson_ratio}"
        )));
    }
    let nu = poisson_ratio;
    let k = [
        0.5 - nu / 6.0,
        0.125 + nu / 8.0,
        -0.25 - nu / 12.0,
        -0.125 + 3.0 * nu / 8.0,
        -0.25 + nu / 12.0,
        -0.125 - nu / 8.0,
        nu / 6.0,
        0.125 - 3.0 * nu / 8.0,
    ];
    let idx: [[usize; 8]; 8] = [
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ];
    let scale = young_modulus / (1.0 - nu * nu);
    Ok(std::array::from_fn(|i| std::array::from_fn(|j| scale * k[idx[i][j]])))
}

/// `v^T k v` for an element vector.
pub fn element_energy(k0: &ElementMatrix, v: &[f64; 8]) -> f64 {
    bilinear(k0, v, v)
}

/// `a^T k b` for element vectors.
pub fn bilinear(k0: &ElementMatrix, a: &[f64; 8], b: &[f64; 8]) -> f64 {
    let mut acc = 0.0;
    for i in 0..8 {
        let mut row = 0.0;
        for j in 0..8 {
            row += k0[i][j] * b[j];
        }
        acc += a[i] * row;
    }
    acc
}

/// Compressed sparse row matrix holding both triangles of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (cols, _) = self.row(i);
        cols.binary_search(&j).ok().map(|p| self.row_ptr[i] + p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    /// Adds `value` to an existing structural entry.
    pub fn add_to(&mut self, i: usize, j: usize, value: f64) -> Result<(), FemError> {
        match self.position(i, j) {
            Some(p) => {
                self.values[p] += value;
                Ok(())
            }
            None => Err(FemError::InvalidInput(format!("({i}, {j}) is outside the sparsity pattern"))),
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (i, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        out
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

fn mesh_pattern(mesh: &Mesh2D) -> (Vec<usize>, Vec<usize>) {
    let mut row_ptr = Vec::with_capacity(mesh.n_dofs() + 1);
    let mut col_idx = Vec::with_capacity(mesh.n_dofs() * 18);
    row_ptr.push(0);
    for node in 0..mesh.n_nodes() {
        let (col, row) = mesh.node_col_row(node);
        let mut neighbours = Vec::with_capacity(9);
        for c in col.saturating_sub(1)..=(col + 1).min(mesh.nx) {
            for r in row.saturating_sub(1)..=(row + 1).min(mesh.ny) {
                neighbours.push(mesh.node(c, r));
            }
        }
        neighbours.sort_unstable();
        for _ in 0..2 {
            for &nb in &neighbours {
                col_idx.push(2 * nb);
                col_idx.push(2 * nb + 1);
            }
            row_ptr.push(col_idx.len());
        }
    }
    (row_ptr, col_idx)
}

fn check_densities(mesh: &Mesh2D, densities: &[f64]) -> Result<(), FemError> {
    if densities.len() != mesh.n_elements() {
        return Err(FemError::InvalidInput(format!(
            "{} densities for {} elements",
            densities.len(),
            mesh.n_elements()
        )));
    }
    if let Some(bad) = densities.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(FemError::InvalidInput(format!("density {bad} outside [0, 1]")));
    }
    Ok(())
}

/// Global stiffness `sum_e (e_min + rho_e^penal (e0 - e_min)) k0`, where
/// `k0` is the unit-modulus element matrix for Poisson ratio `nu`.
pub fn assemble(
    mesh: &Mesh2D,
    densities: &[f64],
    penal: f64,
    material: &Material,
) -> Result<SparseMatrix, FemError> {
    material.validate()?;
    check_densities(mesh, densities)?;
    if !(penal >= 1.0) {
        return Err(FemError::InvalidInput(format!("penal must be >= 1, got {penal}")));
    }
    let k0 = element_stiffness(1.0, material.nu)?;
    let (row_ptr, col_idx) = mesh_pattern(mesh);
    let mut k = SparseMatrix {
        n: mesh.n_dofs(),
        values: vec![0.0; col_idx.len()],
        row_ptr,
        col_idx,
    };
    for (e, &rho) in densities.iter().enumerate() {
        let modulus = material.modulus(rho, penal);
        let dofs = mesh.element_dofs(e);
        for (a, &ga) in dofs.iter().enumerate() {
            let start = k.row_ptr[ga];
            let cols = &k.col_idx[start..k.row_ptr[ga + 1]];
            for (b, &gb) in dofs.iter().enumerate() {
                let p = start + cols.binary_search(&gb).expect("element dof in pattern");
                k.values[p] += modulus * k0[a][b];
            }
        }
    }
    Ok(k)
}

/// Adds the grounded springs of a load case onto the diagonal.
pub fn add_springs(k: &mut SparseMatrix, loads: &LoadCase) -> Result<(), FemError> {
    for (&dof, &stiffness) in loads.springs() {
        k.add_to(dof, dof, stiffness)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Banded Cholesky on the free DOFs.
    #[default]
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    Pcg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub kind: SolverKind,
    /// Bound on `|K_ff u_f - f_f| / max(1, |f_f|)`.
    pub tolerance: f64,
    /// PCG iteration cap as a multiple of the free DOF count.
    pub max_iter_factor: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kind: SolverKind::Direct,
            tolerance: 1e-8,
            max_iter_factor: 10,
        }
    }
}

/// Lower band of a Cholesky factor, stored row by row.
#[derive(Debug, Clone)]
struct BandCholesky {
    n: usize,
    half_band: usize,
    data: Vec<f64>,
}

impl BandCholesky {
    fn factor(a: &SparseMatrix) -> Result<Self, FemError> {
        let n = a.n;
        let mut half_band = 0;
        for i in 0..n {
            if let Some(&j) = a.row(i).0.first() {
                half_band = half_band.max(i.saturating_sub(j));
            }
        }
        let w = half_band + 1;
        let mut data = vec![0.0; n * w];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    data[i * w + j + half_band - i] = v;
                }
            }
        }
        for i in 0..n {
            let first = i.saturating_sub(half_band);
            let row_i = i * w + half_band - i;
            for j in first..i {
                let row_j = j * w + half_band - j;
                let lo = first.max(j.saturating_sub(half_band));
                let dot: f64 = data[row_i + lo..row_i + j]
                    .iter()
                    .zip(&data[row_j + lo..row_j + j])
                    .map(|(x, y)| x * y)
                    .sum();
                data[row_i + j] = (data[row_i + j] - dot) / data[row_j + j];
            }
            let original = data[row_i + i];
            let sq: f64 = data[row_i + first..row_i + i].iter().map(|x| x * x).sum();
            let pivot = original - sq;
            if !(pivot > original.abs() * 1e-14) || !pivot.is_finite() {
                return Err(FemError::SingularSystem { dof: i, pivot });
            }
            data[row_i + i] = pivot.sqrt();
        }
        Ok(Self { n, half_band, data })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let w = self.half_band + 1;
        let hb = self.half_band;
        let mut y = rhs.to_vec();
        for i in 0..self.n {
            let first = i.saturating_sub(hb);
            let row = i * w + hb - i;
            let dot: f64 = self.data[row + first..row + i]
                .iter()
                .zip(&y[first..i])
                .map(|(l, v)| l * v)
                .sum();
            y[i] = (y[i] - dot) / self.data[row + i];
        }
        for i in (0..self.n).rev() {
            let row = i * w + hb - i;
            y[i] /= self.data[row + i];
            let yi = y[i];
            let first = i.saturating_sub(hb);
            for (j, l) in (first..i).zip(&self.data[row + first..row + i]) {
                y[j] -= l * yi;
            }
        }
        y
    }
}

fn pcg(a: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>, FemError> {
    let n = a.n;
    let scale = norm(b).max(1.0);
    let mut x = vec![0.0; n];
    if norm(b) == 0.0 {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = (0..n)
        .map(|i| {
            let d = a.get(i, i);
            if d > 0.0 {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = dot(&r, &z);
    for it in 0..max_iter {
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(FemError::SingularSystem { dof: it, pivot: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) / scale <= tol {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(FemError::NonConvergence {
        iterations: max_iter,
        residual: norm(&r) / scale,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

enum Backend {
    Direct(BandCholesky),
    Pcg,
}

/// A stiffness matrix restricted to its free DOFs and prepared for repeated
/// solves (factorized once for the direct backend).
pub struct LinearSystem {
    n_full: usize,
    free: Vec<usize>,
    reduced: SparseMatrix,
    backend: Backend,
    options: SolverOptions,
}

impl LinearSystem {
    pub fn new(k: &SparseMatrix, fixed_dofs: &[usize], options: SolverOptions) -> Result<Self, FemError> {
        let n_full = k.n;
        let mut map = vec![usize::MAX; n_full];
        let mut free = Vec::with_capacity(n_full);
        for dof in 0..n_full {
            if fixed_dofs.binary_search(&dof).is_err() {
                map[dof] = free.len();
                free.push(dof);
            }
        }
        if let Some(&bad) = fixed_dofs.iter().find(|&&d| d >= n_full) {
            return Err(FemError::InvalidLoadCase(format!("fixed dof {bad} out of range")));
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::with_capacity(k.nnz());
        let mut values = Vec::with_capacity(k.nnz());
        for &g in &free {
            let (cols, vals) = k.row(g);
            for (&c, &v) in cols.iter().zip(vals) {
                if map[c] != usize::MAX {
                    col_idx.push(map[c]);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        let reduced = SparseMatrix {
            n: free.len(),
            row_ptr,
            col_idx,
            values,
        };
        let backend = match options.kind {
            SolverKind::Direct => Backend::Direct(BandCholesky::factor(&reduced)?),
            SolverKind::Pcg => Backend::Pcg,
        };
        Ok(Self {
            n_full,
            free,
            reduced,
            backend,
            options,
        })
    }

    /// Solves `K u = rhs` on the free DOFs; entries of `rhs` on fixed DOFs
    /// are ignored and the returned field is zero there.
    pub fn solve_rhs(&self, rhs: &[f64]) -> Result<DisplacementField, FemError> {
        if rhs.len() != self.n_full {
            return Err(FemError::InvalidInput(format!(
                "rhs has {} entries, system has {}",
                rhs.len(),
                self.n_full
            )));
        }
        let b: Vec<f64> = self.free.iter().map(|&g| rhs[g]).collect();
        let x = match &self.backend {
            Backend::Direct(chol) => chol.solve(&b),
            Backend::Pcg => pcg(
                &self.reduced,
                &b,
                self.options.tolerance,
                self.options.max_iter_factor * self.free.len().max(1),
            )?,
        };
        let ax = self.reduced.mul_vec(&x);
        let residual = norm(&ax.iter().zip(&b).map(|(a, b)| a - b).collect::<Vec<_>>()) / norm(&b).max(1.0);
        if !(residual <= self.options.tolerance) {
            return Err(FemError::NonConvergence { iterations: 0, residual });
        }
        let mut u = vec![0.0; self.n_full];
        for (&g, v) in self.free.iter().zip(x) {
            u[g] = v;
        }
        Ok(DisplacementField { u })
    }
}

/// Solves `K u = f` with the supports of `loads` eliminated.
pub fn solve(k: &SparseMatrix, loads: &LoadCase, options: &SolverOptions) -> Result<DisplacementField, FemError> {
    let system = LinearSystem::new(k, loads.fixed_dofs(), *options)?;
    system.solve_rhs(&loads.force_vector(k.n))
}

/// Solves `K lambda = -L`, `L` the unit selector of `output_dof`.
pub fn adjoint_solve(
    system: &LinearSystem,
    output_dof: usize,
) -> Result<DisplacementField, FemError> {
    if output_dof >= system.n_full || system.free.binary_search(&output_dof).is_err() {
        return Err(FemError::InvalidInput(format!("output dof {output_dof} is fixed or out of range")));
    }
    let mut rhs = vec![0.0; system.n_full];
    rhs[output_dof] = -1.0;
    system.solve_rhs(&rhs)
}

/// Compliance `sum_e E(rho_e) u_e^T k0 u_e` and the per-element terms.
pub fn compliance(
    u: &DisplacementField,
    densities: &[f64],
    penal: f64,
    k0: &ElementMatrix,
    mesh: &Mesh2D,
    material: &Material,
) -> (f64, Vec<f64>) {
    let energies: Vec<f64> = densities
        .iter()
        .enumerate()
        .map(|(e, &rho)| material.modulus(rho, penal) * element_energy(k0, &u.element_values(mesh, e)))
        .collect();
    (energies.iter().sum(), energies)
}
