//! Test-only oracles that share no code with the library's FE path.
#![allow(dead_code)]

pub mod reference;

use nalgebra::{DMatrix, DVector, SMatrix};

/// Unit-square Q4 plane-stress stiffness by 2x2 Gauss quadrature of
/// `B^T D B`, nodes ordered BL, BR, TR, TL with y upwards.
pub fn quadrature_element_stiffness(e: f64, nu: f64) -> SMatrix<f64, 8, 8> {
    let d = SMatrix::<f64, 3, 3>::new(1.0, nu, 0.0, nu, 1.0, 0.0, 0.0, 0.0, (1.0 - nu) / 2.0) * (e / (1.0 - nu * nu));
    let nodes = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    let g = 1.0 / 3f64.sqrt();
    let mut k = SMatrix::<f64, 8, 8>::zeros();
    for &xi in &[-g, g] {
        for &eta in &[-g, g] {
            // Physical square of side 1 maps from [-1, 1]^2 with jacobian 1/2.
            let mut b = SMatrix::<f64, 3, 8>::zeros();
            for (a, &(xa, ya)) in nodes.iter().enumerate() {
                let dn_dxi = 0.25 * xa * (1.0 + ya * eta);
                let dn_deta = 0.25 * ya * (1.0 + xa * xi);
                let dn_dx = dn_dxi * 2.0;
                let dn_dy = dn_deta * 2.0;
                b[(0, 2 * a)] = dn_dx;
                b[(1, 2 * a + 1)] = dn_dy;
                b[(2, 2 * a)] = dn_dy;
                b[(2, 2 * a + 1)] = dn_dx;
            }
            // Weight 1 per point, det J = 1/4.
            k += b.transpose() * d * b * 0.25;
        }
    }
    k
}

/// Column-major node index with `ny + 1` nodes per column.
pub fn node(ny: usize, col: usize, row: usize) -> usize {
    col * (ny + 1) + row
}

/// Element DOFs in BL, BR, TR, TL order, derived from node geometry.
pub fn element_dofs(ny: usize, col: usize, row: usize) -> [usize; 8] {
    let corners = [
        node(ny, col, row + 1),
        node(ny, col + 1, row + 1),
        node(ny, col + 1, row),
        node(ny, col, row),
    ];
    let mut out = [0; 8];
    for (i, n) in corners.iter().enumerate() {
        out[2 * i] = 2 * n;
        out[2 * i + 1] = 2 * n + 1;
    }
    out
}

/// Dense global stiffness with modified-SIMP scaling, element `(c, r)` at
/// index `c * ny + r`.
pub fn dense_stiffness(nx: usize, ny: usize, rho: &[f64], penal: f64, e0: f64, e_min: f64, nu: f64) -> DMatrix<f64> {
    let n = 2 * (nx + 1) * (ny + 1);
    let ke = quadrature_element_stiffness(1.0, nu);
    let mut k = DMatrix::zeros(n, n);
    for c in 0..nx {
        for r in 0..ny {
            let scale = e_min + rho[c * ny + r].powf(penal) * (e0 - e_min);
            let dofs = element_dofs(ny, c, r);
            for a in 0..8 {
                for b in 0..8 {
                    k[(dofs[a], dofs[b])] += scale * ke[(a, b)];
                }
            }
        }
    }
    k
}

/// Dense LU solve of `K u = f` with `fixed` rows and columns removed.
pub fn dense_solve(k: &DMatrix<f64>, f: &[f64], fixed: &[usize]) -> Vec<f64> {
    let n = k.nrows();
    let free: Vec<usize> = (0..n).filter(|d| !fixed.contains(d)).collect();
    let kff = DMatrix::from_fn(free.len(), free.len(), |i, j| k[(free[i], free[j])]);
    let ff = DVector::from_iterator(free.len(), free.iter().map(|&i| f[i]));
    let uf = kff.lu().solve(&ff).expect("nonsingular");
    let mut u = vec![0.0; n];
    for (i, &d) in free.iter().enumerate() {
        u[d] = uf[i];
    }
    u
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
