//! Line-by-line transcription of the 88-line educational SIMP code
//! (sensitivity-filter variant) for the half MBB beam, using its own element
//! matrix, triplet assembly and a sparse Cholesky from `nalgebra-sparse`.
//! The optimality-criteria bisection runs to a relative bracket of 1e-12
//! instead of 1e-3 so that the volume constraint is met tightly.

use nalgebra::{DMatrix, DVector, SMatrix};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

pub struct ReferenceRun {
    pub objectives: Vec<f64>,
    pub volumes: Vec<f64>,
    pub changes: Vec<f64>,
    pub x: Vec<f64>,
}

pub struct ReferenceParams {
    pub nelx: usize,
    pub nely: usize,
    pub volfrac: f64,
    pub penal: f64,
    pub rmin: f64,
    pub move_limit: f64,
    pub max_iter: usize,
    pub change_tol: f64,
}

pub fn ke_88(nu: f64) -> SMatrix<f64, 8, 8> {
    let a11 = SMatrix::<f64, 4, 4>::from_row_slice(&[
        12.0, 3.0, -6.0, -3.0, 3.0, 12.0, 3.0, 0.0, -6.0, 3.0, 12.0, -3.0, -3.0, 0.0, -3.0, 12.0,
    ]);
    let a12 = SMatrix::<f64, 4, 4>::from_row_slice(&[
        -6.0, -3.0, 0.0, 3.0, -3.0, -6.0, -3.0, -6.0, 0.0, -3.0, -6.0, 3.0, 3.0, -6.0, 3.0, -6.0,
    ]);
    let b11 = SMatrix::<f64, 4, 4>::from_row_slice(&[
        -4.0, 3.0, -2.0, 9.0, 3.0, -4.0, -9.0, 4.0, -2.0, -9.0, -4.0, -3.0, 9.0, 4.0, -3.0, -4.0,
    ]);
    let b12 = SMatrix::<f64, 4, 4>::from_row_slice(&[
        2.0, -3.0, 4.0, -9.0, -3.0, 2.0, 9.0, -2.0, 4.0, 9.0, 2.0, 3.0, -9.0, -2.0, 3.0, 2.0,
    ]);
    let mut ke = SMatrix::<f64, 8, 8>::zeros();
    let blocks = [
        (0, 0, a11 + b11 * nu),
        (0, 4, a12 + b12 * nu),
        (4, 0, (a12 + b12 * nu).transpose()),
        (4, 4, a11 + b11 * nu),
    ];
    for (r0, c0, blk) in blocks {
        for i in 0..4 {
            for j in 0..4 {
                ke[(r0 + i, c0 + j)] = blk[(i, j)];
            }
        }
    }
    ke * (1.0 / (1.0 - nu * nu) / 24.0)
}

/// Runs the transcription and records the objective of every iteration.
pub fn top88(p: &ReferenceParams) -> ReferenceRun {
    let (nelx, nely) = (p.nelx, p.nely);
    let e0 = 1.0;
    let emin = 1e-9;
    let nu = 0.3;
    let ke = ke_88(nu);
    // nodenrs = reshape(1:(1+nelx)*(1+nely), 1+nely, 1+nelx), zero-based.
    let nodenr = |row: usize, col: usize| col * (nely + 1) + row;
    let mut edof_mat = Vec::with_capacity(nelx * nely);
    for elx in 0..nelx {
        for ely in 0..nely {
            // edofVec = 2*nodenrs(1:end-1,1:end-1)+1 (one-based) -> 2n+2 zero-based.
            let v = 2 * nodenr(ely, elx) + 2;
            let offs: [isize; 8] = [
                0,
                1,
                2 * nely as isize + 2,
                2 * nely as isize + 3,
                2 * nely as isize,
                2 * nely as isize + 1,
                -2,
                -1,
            ];
            let row: [usize; 8] = std::array::from_fn(|k| (v as isize + offs[k]) as usize);
            edof_mat.push(row);
        }
    }
    let ndof = 2 * (nelx + 1) * (nely + 1);
    // F = sparse(2,1,-1,...); fixeddofs = union(1:2:2*(nely+1), 2*(nelx+1)*(nely+1)).
    let mut f = DVector::<f64>::zeros(ndof);
    f[1] = -1.0;
    let mut fixed: Vec<usize> = (0..=nely).map(|r| 2 * r).collect();
    fixed.push(ndof - 1);
    let freedofs: Vec<usize> = (0..ndof).filter(|d| !fixed.contains(d)).collect();
    let mut free_index = vec![usize::MAX; ndof];
    for (i, &d) in freedofs.iter().enumerate() {
        free_index[d] = i;
    }

    // Filter matrix H and its row sums Hs.
    let nele = nelx * nely;
    let mut h = DMatrix::<f64>::zeros(nele, nele);
    let reach = p.rmin.ceil() as isize - 1;
    for i1 in 0..nelx as isize {
        for j1 in 0..nely as isize {
            let e1 = (i1 * nely as isize + j1) as usize;
            for i2 in (i1 - reach).max(0)..=(i1 + reach).min(nelx as isize - 1) {
                for j2 in (j1 - reach).max(0)..=(j1 + reach).min(nely as isize - 1) {
                    let e2 = (i2 * nely as isize + j2) as usize;
                    let fac = p.rmin - (((i1 - i2).pow(2) + (j1 - j2).pow(2)) as f64).sqrt();
                    h[(e1, e2)] = fac.max(0.0);
                }
            }
        }
    }
    let hs: Vec<f64> = (0..nele).map(|i| h.row(i).sum()).collect();

    let mut x = vec![p.volfrac; nele];
    let mut run = ReferenceRun {
        objectives: Vec::new(),
        volumes: Vec::new(),
        changes: Vec::new(),
        x: Vec::new(),
    };
    let mut change = 1.0;
    let mut loop_count = 0;
    while change >= p.change_tol && loop_count < p.max_iter {
        loop_count += 1;
        // FE-analysis on the free dofs.
        let mut coo = CooMatrix::new(freedofs.len(), freedofs.len());
        for (e, edof) in edof_mat.iter().enumerate() {
            let s = emin + x[e].powf(p.penal) * (e0 - emin);
            for a in 0..8 {
                let ia = free_index[edof[a]];
                if ia == usize::MAX {
                    continue;
                }
                for b in 0..8 {
                    let ib = free_index[edof[b]];
                    if ib != usize::MAX {
                        coo.push(ia, ib, s * ke[(a, b)]);
                    }
                }
            }
        }
        let kff = CscMatrix::from(&coo);
        let chol = CscCholesky::factor(&kff).expect("positive definite");
        let ff = DVector::from_iterator(freedofs.len(), freedofs.iter().map(|&d| f[d]));
        let uf = chol.solve(&ff);
        let mut u = vec![0.0; ndof];
        for (i, &d) in freedofs.iter().enumerate() {
            u[d] = uf[(i, 0)];
        }
        // Objective and sensitivity.
        let mut c = 0.0;
        let mut dc = vec![0.0; nele];
        for (e, edof) in edof_mat.iter().enumerate() {
            let ue = DVector::from_iterator(8, edof.iter().map(|&d| u[d]));
            let ce = (ue.transpose() * ke * &ue)[(0, 0)];
            c += (emin + x[e].powf(p.penal) * (e0 - emin)) * ce;
            dc[e] = -p.penal * (e0 - emin) * x[e].powf(p.penal - 1.0) * ce;
        }
        // dc(:) = H*(x(:).*dc(:))./Hs./max(1e-3,x(:)).
        let xdc = DVector::from_iterator(nele, (0..nele).map(|e| x[e] * dc[e]));
        let hxdc = &h * xdc;
        let dc: Vec<f64> = (0..nele).map(|e| hxdc[e] / hs[e] / x[e].max(1e-3)).collect();
        // Optimality criteria update.
        let (mut l1, mut l2) = (0.0f64, 1e9f64);
        let mv = p.move_limit;
        let mut xnew = x.clone();
        while (l2 - l1) / (l1 + l2) > 1e-12 {
            let lmid = 0.5 * (l2 + l1);
            for e in 0..nele {
                let cand = x[e] * (-dc[e] / lmid).sqrt();
                xnew[e] = 0f64.max((x[e] - mv).max(1f64.min((x[e] + mv).min(cand))));
            }
            if xnew.iter().sum::<f64>() > p.volfrac * nele as f64 {
                l1 = lmid;
            } else {
                l2 = lmid;
            }
        }
        change = x.iter().zip(&xnew).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        x = xnew;
        run.objectives.push(c);
        run.volumes.push(x.iter().sum::<f64>() / nele as f64);
        run.changes.push(change);
    }
    run.x = x;
    run
}
