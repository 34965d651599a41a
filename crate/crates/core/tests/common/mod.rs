//! Shared helpers for the integration suites: an eigenvalue oracle that is
//! independent of the production Schur solver, and random model generators.

// each integration test binary uses a different subset of these helpers
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use pa_core::model::{ResonatorParams, SpinEnsembleParams, SystemModel, ZeemanLaw};

/// Monic characteristic polynomial coefficients `c[0] + c[1] x + ... + x^n`
/// by the Faddeev–LeVerrier recurrence (exact in rational arithmetic; here
/// f64 complex, adequate for n <= 9 after centering).
pub fn char_poly(a: &DMatrix<Complex64>) -> Vec<Complex64> {
    let n = a.nrows();
    let mut c = vec![Complex64::new(0.0, 0.0); n + 1];
    c[n] = Complex64::new(1.0, 0.0);
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for k in 1..=n {
        // M_k = A (M_{k-1} + c_{n-k+1} I)
        let mut shifted = m.clone();
        for i in 0..n {
            shifted[(i, i)] += c[n - k + 1];
        }
        m = a * shifted;
        let tr: Complex64 = m.diagonal().iter().sum();
        c[n - k] = -tr / k as f64;
    }
    c
}

/// All roots of a monic polynomial by Durand–Kerner simultaneous iteration.
/// The variable is rescaled so the roots are O(1) before iterating.
pub fn poly_roots(raw: &[Complex64]) -> Vec<Complex64> {
    let n = raw.len() - 1;
    if n == 0 {
        return vec![];
    }
    // substitute x = s*y with s chosen from the coefficient magnitudes
    let s = raw[..n]
        .iter()
        .enumerate()
        .map(|(k, c)| c.norm().powf(1.0 / (n - k) as f64))
        .fold(0.0f64, f64::max)
        .max(1e-30);
    let coeffs: Vec<Complex64> = raw
        .iter()
        .enumerate()
        .map(|(k, c)| c / s.powi((n - k) as i32))
        .collect();
    let radius = 2.0;
    let seed = Complex64::new(0.4, 0.9); // deliberately non-real, non-root-of-unity
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| radius * seed.powu(k as u32 + 1) / seed.norm().powi(k as i32))
        .collect();
    // Horner evaluation, highest (monic) coefficient first
    let eval = |x: Complex64| {
        let mut acc = Complex64::new(1.0, 0.0);
        for k in (0..n).rev() {
            acc = acc * x + coeffs[k];
        }
        acc
    };
    for _ in 0..500 {
        let mut max_step = 0.0f64;
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if j != i {
                    denom *= z[i] - z[j];
                }
            }
            if denom.norm() == 0.0 {
                // coincident iterates: nudge and continue
                z[i] += Complex64::new(1e-8 * radius, 1e-8 * radius);
                continue;
            }
            let step = eval(z[i]) / denom;
            z[i] -= step;
            max_step = max_step.max(step.norm());
        }
        if max_step < 1e-14 * radius.max(1.0) {
            break;
        }
    }
    z.iter().map(|r| r * s).collect()
}

/// Eigenvalues via characteristic polynomial + Durand–Kerner, centered on
/// the mean eigenvalue for conditioning. Shares no code with the
/// production Schur path.
pub fn oracle_eigenvalues(a: &DMatrix<Complex64>) -> Vec<Complex64> {
    let n = a.nrows();
    let shift: Complex64 = a.diagonal().iter().sum::<Complex64>() / n as f64;
    let mut b = a.clone();
    for i in 0..n {
        b[(i, i)] -= shift;
    }
    let coeffs = char_poly(&b);
    let mut roots: Vec<Complex64> = poly_roots(&coeffs).iter().map(|r| r + shift).collect();
    pa_core::eigen::sort_spectrum(&mut roots);
    roots
}

pub const OMEGA0: f64 = 9900.0;
pub const SLOPE: f64 = 28_000.0;
pub const B_RES: f64 = OMEGA0 / SLOPE;

/// Random passive model: N in 1..=8 ensembles, rates log-uniform in
/// [0.1, 50] MHz, couplings log-uniform in [0.1, 30] MHz, spin lines
/// placed within +-100 MHz of the cavity at B_RES.
pub fn random_model<R: Rng>(rng: &mut R) -> SystemModel {
    let log_uniform = |rng: &mut R, lo: f64, hi: f64| -> f64 {
        (rng.gen_range(lo.ln()..hi.ln())).exp()
    };
    let n = rng.gen_range(1..=8usize);
    let gamma_r = log_uniform(rng, 0.1, 50.0);
    let gamma_nr = log_uniform(rng, 0.1, 50.0);
    let ensembles = (0..n)
        .map(|i| {
            let offset = rng.gen_range(-100.0..100.0);
            SpinEnsembleParams {
                g: log_uniform(rng, 0.1, 30.0),
                gamma_s: log_uniform(rng, 0.1, 50.0),
                zeeman: ZeemanLaw::from_slope_offset(SLOPE, offset, "test").unwrap(),
                label: format!("line{i}"),
            }
        })
        .collect();
    SystemModel::new(
        ResonatorParams {
            omega0: OMEGA0,
            gamma_r,
            gamma_nr,
        },
        ensembles,
        None,
    )
    .unwrap()
}

/// Random single-ensemble model guaranteed strongly coupled
/// (g well above both g_min and g_th) with an overcoupled resonator.
pub fn random_strong_model<R: Rng>(rng: &mut R) -> SystemModel {
    let log_uniform = |rng: &mut R, lo: f64, hi: f64| -> f64 {
        (rng.gen_range(lo.ln()..hi.ln())).exp()
    };
    let gamma_nr = log_uniform(rng, 0.1, 2.0);
    let gamma_r = gamma_nr + log_uniform(rng, 0.2, 10.0);
    let gamma_s = log_uniform(rng, 0.5, 10.0);
    let g_min = ((gamma_r - gamma_nr) * gamma_s).sqrt() / 2.0;
    let g_th = (gamma_r - gamma_nr + gamma_s) / 4.0;
    let g = g_min.max(g_th) * rng.gen_range(3.0..10.0);
    SystemModel::new(
        ResonatorParams {
            omega0: OMEGA0,
            gamma_r,
            gamma_nr,
        },
        vec![SpinEnsembleParams {
            g,
            gamma_s,
            zeeman: ZeemanLaw::from_slope_offset(SLOPE, 0.0, "test").unwrap(),
            label: "line0".into(),
        }],
        None,
    )
    .unwrap()
}
