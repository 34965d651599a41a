//! Polariton (normal-mode) picture: diagonalization of the coherent
//! coupling matrix, Hopfield coefficients, and the dressed feeding/loss
//! rates whose balance defines perfect absorption.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::Result;
use crate::model::{SpectrumVariant, SystemModel};
use crate::spectra;

/// Result of diagonalizing A(B0).
///
/// `u` is real orthogonal with rows = polaritons; column 0 is the photon
/// weight. Dressed rates follow from the diagonal of U Γ̃ Uᵀ:
/// γ̄_cj = (γ_r - γ_nr)|U_j0|², γ̄_sj = Σ_μ γ_sμ |U_jμ|², γ̄_j = -γ̄_cj + γ̄_sj.
#[derive(Debug, Clone)]
pub struct PolaritonDecomposition {
    pub omega_bar: Vec<f64>,
    pub u: DMatrix<f64>,
    pub gamma_bar_c: Vec<f64>,
    pub gamma_bar_s: Vec<f64>,
    pub gamma_bar: Vec<f64>,
}

impl PolaritonDecomposition {
    /// |U_j0|², the photon content of polariton j.
    pub fn photon_weight(&self, j: usize) -> f64 {
        self.u[(j, 0)] * self.u[(j, 0)]
    }
}

/// Diagonalize A(B0). Polaritons are ordered by ascending frequency,
/// which is continuous in B0 whenever all couplings are nonzero
/// (avoided crossings).
pub fn decompose(model: &SystemModel, b0: f64) -> PolaritonDecomposition {
    let a = model.hopfield_matrix(b0);
    let eig = a.matrix().clone().symmetric_eigen();
    let n = model.dim();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());

    let mut omega_bar = Vec::with_capacity(n);
    let mut u = DMatrix::zeros(n, n);
    for (row, &k) in order.iter().enumerate() {
        omega_bar.push(eig.eigenvalues[k]);
        let col = eig.eigenvectors.column(k);
        // fix the sign so the largest-magnitude component is positive
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            u[(row, i)] = sign * col[i];
        }
    }

    let r = model.resonator();
    let feed = r.gamma_r - r.gamma_nr;
    let mut gamma_bar_c = Vec::with_capacity(n);
    let mut gamma_bar_s = Vec::with_capacity(n);
    let mut gamma_bar = Vec::with_capacity(n);
    for j in 0..n {
        let c = feed * u[(j, 0)] * u[(j, 0)];
        let s: f64 = model
            .ensembles()
            .iter()
            .enumerate()
            .map(|(mu, e)| e.gamma_s * u[(j, mu + 1)] * u[(j, mu + 1)])
            .sum();
        gamma_bar_c.push(c);
        gamma_bar_s.push(s);
        gamma_bar.push(-c + s);
    }

    PolaritonDecomposition {
        omega_bar,
        u,
        gamma_bar_c,
        gamma_bar_s,
        gamma_bar,
    }
}

/// Per-polariton imbalance γ̄_cj - γ̄_sj; a zero crossing in B0 marks a
/// Hermitian subspace for that polariton.
pub fn dressed_rate_balance(model: &SystemModel, b0: f64) -> Vec<(usize, f64)> {
    let d = decompose(model, b0);
    d.gamma_bar_c
        .iter()
        .zip(&d.gamma_bar_s)
        .enumerate()
        .map(|(j, (c, s))| (j, c - s))
        .collect()
}

/// Residual |Im(Ω̃_j) + γ̄_j/2| per polariton: how well the diagonal
/// strong-coupling reduction reproduces the exact reflection zeros.
pub fn strong_coupling_check(model: &SystemModel, b0: f64) -> Result<Vec<f64>> {
    let d = decompose(model, b0);
    let zeros = spectra::eigenfrequencies(model, b0, SpectrumVariant::Zeros)?;
    // both lists are ascending in (real) frequency; pair by order
    Ok(zeros
        .values
        .iter()
        .zip(&d.gamma_bar)
        .map(|(z, gb)| (z.im + gb / 2.0).abs())
        .collect())
}

/// One tracked polariton branch over a field sweep, shaped for JSON export.
#[derive(Debug, Clone, Serialize)]
pub struct PolaritonBranch {
    pub omega_bar: Vec<f64>,
    pub photon_weight: Vec<f64>,
    pub gamma_bar_c: Vec<f64>,
    pub gamma_bar_s: Vec<f64>,
    pub gamma_bar: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PolaritonSweep {
    pub b_axis: Vec<f64>,
    pub branches: Vec<PolaritonBranch>,
}

pub fn sweep(model: &SystemModel, b_grid: &[f64]) -> PolaritonSweep {
    let n = model.dim();
    let mut branches: Vec<PolaritonBranch> = (0..n)
        .map(|_| PolaritonBranch {
            omega_bar: Vec::with_capacity(b_grid.len()),
            photon_weight: Vec::with_capacity(b_grid.len()),
            gamma_bar_c: Vec::with_capacity(b_grid.len()),
            gamma_bar_s: Vec::with_capacity(b_grid.len()),
            gamma_bar: Vec::with_capacity(b_grid.len()),
        })
        .collect();
    for &b in b_grid {
        let d = decompose(model, b);
        for j in 0..n {
            branches[j].omega_bar.push(d.omega_bar[j]);
            branches[j].photon_weight.push(d.photon_weight(j));
            branches[j].gamma_bar_c.push(d.gamma_bar_c[j]);
            branches[j].gamma_bar_s.push(d.gamma_bar_s[j]);
            branches[j].gamma_bar.push(d.gamma_bar[j]);
        }
    }
    PolaritonSweep {
        b_axis: b_grid.to_vec(),
        branches,
    }
}
