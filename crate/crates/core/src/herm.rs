//! Hermitian matrix fields (m x m at every grid node, m <= 2) and the small
//! per-node algebra used by the curvature pipeline.
//!
//! Index convention: a field `A` stores `A_{j kbar}` as the matrix entry
//! `[j][k]`; Hermitian symmetry means `A[k][j] = conj(A[j][k])`. Raised
//! metric components obey `g^{j kbar} = conj( (G^{-1})[j][k] )`, which is the
//! `raised` accessor below. Contractions of the form `g^{j kbar} A_{j kbar}`
//! therefore reduce to `tr(G^{-1} A)`.

use num_complex::Complex64;

use crate::exec;
use crate::fft::Spectrum;
use crate::grid::{PeriodicGrid, ScalarField};

/// Per-node m x m matrix; entries beyond `m` stay zero.
pub type NodeMat = [[Complex64; 2]; 2];

/// Hermitian matrix field, packed as real diagonals plus the (0,1) entry.
#[derive(Clone, Debug)]
pub struct HermitianField {
    grid: PeriodicGrid,
    diag: Vec<Vec<f64>>,
    /// Present only for m = 2: the `[0][1]` entry; `[1][0]` is its conjugate.
    off: Option<Vec<Complex64>>,
}

impl HermitianField {
    pub fn zeros(grid: PeriodicGrid) -> Self {
        let n = grid.len();
        Self {
            grid,
            diag: vec![vec![0.0; n]; grid.m()],
            off: (grid.m() == 2).then(|| vec![Complex64::ZERO; n]),
        }
    }

    pub fn scaled_identity(grid: PeriodicGrid, c: f64) -> Self {
        let n = grid.len();
        Self {
            grid,
            diag: vec![vec![c; n]; grid.m()],
            off: (grid.m() == 2).then(|| vec![Complex64::ZERO; n]),
        }
    }

    /// Complex Hessian `f_{j kbar}` of a real field given its spectrum.
    /// Diagonal entries have real symbols and are stored as real fields.
    pub fn complex_hessian(spec: &Spectrum) -> Self {
        let grid = spec.grid();
        let m = grid.m();
        let mut out = Self::zeros(grid);
        for j in 0..m {
            let entry = spec.dz_dzbar(j, j).inverse();
            out.diag[j] = entry.values().iter().map(|v| v.re).collect();
        }
        if m == 2 {
            let entry = spec.dz_dzbar(0, 1).inverse();
            out.off = Some(entry.values().to_vec());
        }
        out
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn m(&self) -> usize {
        self.grid.m()
    }

    /// Materialize the full matrix at one node.
    #[inline]
    pub fn at(&self, i: usize) -> NodeMat {
        let mut mat = [[Complex64::ZERO; 2]; 2];
        mat[0][0] = Complex64::new(self.diag[0][i], 0.0);
        if self.m() == 2 {
            mat[1][1] = Complex64::new(self.diag[1][i], 0.0);
            let o = self.off.as_ref().unwrap()[i];
            mat[0][1] = o;
            mat[1][0] = o.conj();
        }
        mat
    }

    pub fn set(&mut self, i: usize, mat: &NodeMat) {
        self.diag[0][i] = mat[0][0].re;
        if self.m() == 2 {
            self.diag[1][i] = mat[1][1].re;
            self.off.as_mut().unwrap()[i] = mat[0][1];
        }
    }

    /// `a * self + b * other`, entrywise.
    pub fn linear_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        let mut out = Self::zeros(self.grid);
        for j in 0..self.m() {
            for i in 0..self.grid.len() {
                out.diag[j][i] = a * self.diag[j][i] + b * other.diag[j][i];
            }
        }
        if let (Some(o), Some(s), Some(t)) = (
            out.off.as_mut(),
            self.off.as_ref(),
            other.off.as_ref(),
        ) {
            for i in 0..o.len() {
                o[i] = a * s[i] + b * t[i];
            }
        }
        out
    }

    /// Minimum over all nodes of the smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        let len = self.grid.len();
        exec::min_indexed(len, |i| min_eig(&self.at(i), self.m()))
    }
}

/// Determinant of a Hermitian node matrix (real).
#[inline]
pub fn det(mat: &NodeMat, m: usize) -> f64 {
    match m {
        1 => mat[0][0].re,
        _ => mat[0][0].re * mat[1][1].re - mat[0][1].norm_sqr(),
    }
}

/// Matrix inverse of a Hermitian node matrix (Hermitian again).
#[inline]
pub fn inverse(mat: &NodeMat, m: usize) -> NodeMat {
    let mut out = [[Complex64::ZERO; 2]; 2];
    match m {
        1 => {
            out[0][0] = Complex64::new(1.0 / mat[0][0].re, 0.0);
        }
        _ => {
            let d = det(mat, 2);
            out[0][0] = Complex64::new(mat[1][1].re / d, 0.0);
            out[1][1] = Complex64::new(mat[0][0].re / d, 0.0);
            out[0][1] = -mat[0][1] / d;
            out[1][0] = out[0][1].conj();
        }
    }
    out
}

/// Smallest eigenvalue of a Hermitian node matrix.
#[inline]
pub fn min_eig(mat: &NodeMat, m: usize) -> f64 {
    match m {
        1 => mat[0][0].re,
        _ => {
            let a = mat[0][0].re;
            let b = mat[1][1].re;
            let half = 0.5 * (a - b);
            0.5 * (a + b) - (half * half + mat[0][1].norm_sqr()).sqrt()
        }
    }
}

/// Smallest generalized eigenvalue of the pencil `(A, G)`, both Hermitian
/// positive definite: the smallest root of `det(A - lambda G) = 0`.
#[inline]
pub fn pencil_min_eig(a: &NodeMat, g: &NodeMat, m: usize) -> f64 {
    match m {
        1 => a[0][0].re / g[0][0].re,
        _ => {
            // Eigenvalues of G^{-1} A are real positive; use trace/det.
            let det_g = det(g, 2);
            let det_a = det(a, 2);
            let ginv = inverse(g, 2);
            let prod = mat_mul(&ginv, a);
            let tr = prod[0][0].re + prod[1][1].re;
            let dd = det_a / det_g;
            let disc = (tr * tr - 4.0 * dd).max(0.0).sqrt();
            0.5 * (tr - disc)
        }
    }
}

#[inline]
pub fn mat_mul(a: &NodeMat, b: &NodeMat) -> NodeMat {
    let mut out = [[Complex64::ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Raised components `g^{j kbar}` from the matrix inverse: `conj(G^{-1})`.
#[inline]
pub fn raised(inv: &NodeMat) -> NodeMat {
    let mut out = *inv;
    for row in out.iter_mut() {
        for v in row.iter_mut() {
            *v = v.conj();
        }
    }
    out
}

/// `g^{j kbar} A_{j kbar} = tr(G^{-1} A)`; real for Hermitian inputs.
#[inline]
pub fn trace_contract(inv: &NodeMat, a: &NodeMat, m: usize) -> f64 {
    let mut acc = Complex64::ZERO;
    for j in 0..m {
        for k in 0..m {
            acc += inv[j][k] * a[k][j];
        }
    }
    acc.re
}

/// Pointwise inner product of (1,1)-forms:
/// `<alpha, beta> = g^{j qbar} g^{p kbar} alpha_{j kbar} beta_{p qbar}`.
/// Real when both arguments are Hermitian.
#[inline]
pub fn inner_11_node(raised_inv: &NodeMat, alpha: &NodeMat, beta: &NodeMat, m: usize) -> f64 {
    let mut acc = Complex64::ZERO;
    for j in 0..m {
        for q in 0..m {
            for p in 0..m {
                for k in 0..m {
                    acc += raised_inv[j][q] * raised_inv[p][k] * alpha[j][k] * beta[p][q];
                }
            }
        }
    }
    acc.re
}

/// Scalar curvature contraction, exposed at field level:
/// `R = tr(G^{-1} Ric)` node by node.
pub fn trace_field(g_inv: &HermitianField, a: &HermitianField) -> ScalarField {
    let grid = g_inv.grid();
    let m = grid.m();
    let mut out = ScalarField::zeros(grid);
    exec::for_chunks_mut(out.values_mut(), exec::CHUNK, |ci, chunk| {
        let base = ci * exec::CHUNK;
        for (j, v) in chunk.iter_mut().enumerate() {
            let i = base + j;
            *v = trace_contract(&g_inv.at(i), &a.at(i), m);
        }
    });
    out
}
