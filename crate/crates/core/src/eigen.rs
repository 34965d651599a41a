//! Dense complex eigenvalues for the small (at most 9x9) non-Hermitian
//! effective Hamiltonians. Backed by nalgebra's complex Schur
//! decomposition; the test suite cross-checks against an independent
//! characteristic-polynomial root finder.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 200;

/// Eigenvalues sorted by ascending real part, ties by ascending imaginary
/// part.
pub fn eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let schur = m
        .clone()
        .try_schur(SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Numerical {
            msg: format!("Schur iteration did not converge on {m:?}"),
        })?;
    let (_, t) = schur.unpack();
    let mut vals: Vec<Complex64> = t.diagonal().iter().cloned().collect();
    sort_spectrum(&mut vals);
    Ok(vals)
}

pub fn sort_spectrum(vals: &mut [Complex64]) {
    vals.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
}
