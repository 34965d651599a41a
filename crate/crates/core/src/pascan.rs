//! Perfect-absorption search over field sweeps, coupling-regime
//! classification, the (γ_s, Δ) phase surface, and switching/sensing
//! figures of merit.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{SpectrumVariant, SystemModel};
use crate::spectra::{self, s11_closed_form};

/// A located perfect-absorption point: a reflection zero on the real
/// frequency axis.
#[derive(Debug, Clone, Serialize)]
pub struct PaPoint {
    pub b0_t: f64,
    pub f_mhz: f64,
    /// Index of the tracked zero branch that touched the real axis.
    pub branch: usize,
    /// |S11| actually achieved at (f, B0).
    pub residual: f64,
    /// Δ = ω_s(B0) - ω0 for the triggering (nearest-resonance) ensemble.
    pub detuning_mhz: f64,
    pub ensemble: String,
}

#[derive(Debug, Clone, Copy)]
pub struct PaScanOptions {
    /// Coarse grid points per anticrossing window.
    pub grid_points: usize,
    /// |Im| acceptance for a real-axis zero, relative to ω0.
    pub im_tol_rel: f64,
}

impl Default for PaScanOptions {
    fn default() -> Self {
        PaScanOptions {
            grid_points: 201,
            im_tol_rel: 1e-9,
        }
    }
}

/// Locate all PA points in `[b_min, b_max]`.
///
/// Zero crossings of Im(Ω̃_j) are bracketed on a coarse grid per
/// anticrossing window and refined by bisection; tangencies (the double
/// root at g = g_min) are caught by minimizing Im along the branch. Each
/// candidate is verified against the closed-form |S11| at `tolerance`.
pub fn find_pa_points(
    model: &SystemModel,
    b_min: f64,
    b_max: f64,
    tolerance: f64,
    opts: PaScanOptions,
) -> Result<Vec<PaPoint>> {
    if !(b_min.is_finite() && b_max.is_finite() && b_max > b_min) {
        return Err(Error::Argument("field range must be finite with max > min".into()));
    }
    if !(tolerance > 0.0) {
        return Err(Error::Argument("tolerance must be > 0".into()));
    }
    let omega0 = model.resonator().omega0;
    let im_tol = opts.im_tol_rel * omega0;

    let mut points = Vec::new();
    for (lo, hi) in anticrossing_windows(model, b_min, b_max) {
        for root in im_zero_crossings(model, lo, hi, opts.grid_points, im_tol)? {
            let f = root.z.re;
            let residual = s11_closed_form(model, f, root.b0).norm();
            if residual >= tolerance {
                continue;
            }
            let (ens, detuning) = triggering_ensemble(model, root.b0);
            points.push(PaPoint {
                b0_t: root.b0,
                f_mhz: f,
                branch: root.branch,
                residual,
                detuning_mhz: detuning,
                ensemble: ens,
            });
        }
    }
    points.sort_by(|a, b| a.b0_t.partial_cmp(&b.b0_t).unwrap());
    points.dedup_by(|a, b| a.branch == b.branch && (a.b0_t - b.b0_t).abs() < 1e-12);

    // coalesce numerically coincident pairs (the double root at g = g_min
    // splits by far less than a linewidth just above threshold)
    let r = model.resonator();
    let feed = (r.gamma_r - r.gamma_nr).abs();
    let gs_max = model.ensembles().iter().map(|e| e.gamma_s).fold(0.0, f64::max);
    let slope_max = model
        .ensembles()
        .iter()
        .map(|e| e.zeeman.slope().abs())
        .fold(0.0, f64::max);
    let tol_mhz = 2e-3 * (feed + gs_max);
    let mut merged: Vec<PaPoint> = Vec::new();
    for p in points {
        if let Some(last) = merged.last_mut() {
            if ((p.b0_t - last.b0_t) * slope_max).abs() < tol_mhz
                && (p.f_mhz - last.f_mhz).abs() < tol_mhz
            {
                let b_mid = 0.5 * (p.b0_t + last.b0_t);
                let f_mid = 0.5 * (p.f_mhz + last.f_mhz);
                let (ens, detuning) = triggering_ensemble(model, b_mid);
                *last = PaPoint {
                    b0_t: b_mid,
                    f_mhz: f_mid,
                    branch: last.branch,
                    residual: s11_closed_form(model, f_mid, b_mid).norm(),
                    detuning_mhz: detuning,
                    ensemble: ens,
                };
                continue;
            }
        }
        merged.push(p);
    }
    Ok(merged)
}

/// Per-ensemble scan windows wide enough to contain the PA detunings,
/// merged when they overlap and clipped to the requested range.
fn anticrossing_windows(model: &SystemModel, b_min: f64, b_max: f64) -> Vec<(f64, f64)> {
    let r = model.resonator();
    let feed = r.gamma_r - r.gamma_nr;
    let mut windows: Vec<(f64, f64)> = Vec::new();
    for e in model.ensembles() {
        let b_res = e.zeeman.resonant_field(r.omega0);
        let rate_sum = feed.abs() + e.gamma_s;
        // PA detunings grow like (rates) * g / g_min; pad generously
        let g_min = (feed.max(0.0) * e.gamma_s).sqrt() / 2.0;
        let stretch = if g_min > 0.0 { (e.g / g_min).max(1.0) } else { 1.0 };
        let w_mhz = 2.0 * rate_sum * stretch + 4.0 * rate_sum + 2.0 * e.g;
        let w = w_mhz / e.zeeman.slope();
        let (lo, hi) = ((b_res - w).max(b_min), (b_res + w).min(b_max));
        if hi > lo {
            windows.push((lo, hi));
        }
    }
    windows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for w in windows {
        match merged.last_mut() {
            Some(last) if w.0 <= last.1 => last.1 = last.1.max(w.1),
            _ => merged.push(w),
        }
    }
    merged
}

fn triggering_ensemble(model: &SystemModel, b0: f64) -> (String, f64) {
    let omega0 = model.resonator().omega0;
    model
        .ensembles()
        .iter()
        .map(|e| (e.label.clone(), e.zeeman.freq(b0) - omega0))
        .min_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .unwrap()
}

struct ImRoot {
    b0: f64,
    branch: usize,
    z: Complex64,
}

/// Real-axis crossings of Im(Ω̃_j) for every tracked branch over
/// `[lo, hi]`, refined to machine precision in the field.
fn im_zero_crossings(
    model: &SystemModel,
    lo: f64,
    hi: f64,
    grid_points: usize,
    im_tol: f64,
) -> Result<Vec<ImRoot>> {
    let n = grid_points.max(3);
    let step = (hi - lo) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|k| lo + step * k as f64).collect();
    let branches = spectra::track_branches(model, &grid, SpectrumVariant::Zeros)?;

    let mut roots = Vec::new();
    for (j, branch) in branches.iter().enumerate() {
        let mut sign_change = vec![false; n - 1];
        for k in 0..n - 1 {
            sign_change[k] = branch[k].im.signum() != branch[k + 1].im.signum();
        }
        for k in 0..n - 1 {
            if sign_change[k] {
                let (b0, z) = bisect_im_zero(model, grid[k], grid[k + 1], branch[k], branch[k + 1]);
                roots.push(ImRoot { b0, branch: j, z });
            }
        }
        // tangency / sub-grid root pairs: interior |Im| minima without an
        // adjacent sign change
        for k in 1..n - 1 {
            if sign_change[k - 1] || sign_change[k] {
                continue;
            }
            let (a, c) = (branch[k - 1].im.abs(), branch[k + 1].im.abs());
            let v = branch[k].im.abs();
            if v >= a || v >= c {
                continue;
            }
            let (b_star, z_star) =
                minimize_abs_im(model, grid[k - 1], grid[k + 1], branch[k]);
            if z_star.im.abs() <= im_tol {
                // double root (or numerically coincident pair)
                roots.push(ImRoot {
                    b0: b_star,
                    branch: j,
                    z: z_star,
                });
            } else if z_star.im.signum() != branch[k].im.signum() {
                // overshoot within one grid cell: two distinct roots
                let (b1, z1) = bisect_im_zero(model, grid[k - 1], b_star, branch[k - 1], z_star);
                let (b2, z2) = bisect_im_zero(model, b_star, grid[k + 1], z_star, branch[k + 1]);
                roots.push(ImRoot { b0: b1, branch: j, z: z1 });
                roots.push(ImRoot { b0: b2, branch: j, z: z2 });
            }
        }
    }
    Ok(roots)
}

/// Eigenvalue of the zeros variant at `b0` closest to `reference`.
fn branch_value(model: &SystemModel, b0: f64, reference: Complex64) -> Complex64 {
    let spec = spectra::eigenfrequencies(model, b0, SpectrumVariant::Zeros)
        .expect("eigen-solver failure during refinement");
    *spec
        .values
        .iter()
        .min_by(|a, b| {
            (*a - reference)
                .norm_sqr()
                .partial_cmp(&(*b - reference).norm_sqr())
                .unwrap()
        })
        .unwrap()
}

fn bisect_im_zero(
    model: &SystemModel,
    mut lo: f64,
    mut hi: f64,
    mut z_lo: Complex64,
    mut z_hi: Complex64,
) -> (f64, Complex64) {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval exhausted at machine precision
        }
        let z_mid = branch_value(model, mid, 0.5 * (z_lo + z_hi));
        if z_mid.im == 0.0 {
            return (mid, z_mid);
        }
        if z_mid.im.signum() == z_lo.im.signum() {
            lo = mid;
            z_lo = z_mid;
        } else {
            hi = mid;
            z_hi = z_mid;
        }
    }
    if z_lo.im.abs() <= z_hi.im.abs() {
        (lo, z_lo)
    } else {
        (hi, z_hi)
    }
}

/// Golden-section minimization of |Im| along a branch.
fn minimize_abs_im(
    model: &SystemModel,
    mut lo: f64,
    mut hi: f64,
    reference: Complex64,
) -> (f64, Complex64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut refz = reference;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut z1 = branch_value(model, x1, refz);
    let mut z2 = branch_value(model, x2, refz);
    for _ in 0..120 {
        if hi - lo < f64::EPSILON * (hi.abs() + 1.0) {
            break;
        }
        if z1.im.abs() < z2.im.abs() {
            hi = x2;
            x2 = x1;
            z2 = z1;
            x1 = hi - INV_PHI * (hi - lo);
            refz = z2;
            z1 = branch_value(model, x1, refz);
        } else {
            lo = x1;
            x1 = x2;
            z1 = z2;
            x2 = lo + INV_PHI * (hi - lo);
            refz = z1;
            z2 = branch_value(model, x2, refz);
        }
    }
    if z1.im.abs() < z2.im.abs() {
        (x1, z1)
    } else {
        (x2, z2)
    }
}

/// Whether any two Im(Ω̃_j) branches cross each other over the window
/// (the strong-coupling signature, present iff g > g_th for N = 1).
pub fn im_branches_cross(
    model: &SystemModel,
    b_min: f64,
    b_max: f64,
    grid_points: usize,
) -> Result<bool> {
    let n = grid_points.max(3);
    let step = (b_max - b_min) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|k| b_min + step * k as f64).collect();
    let branches = spectra::track_branches(model, &grid, SpectrumVariant::Zeros)?;
    for a in 0..branches.len() {
        for b in a + 1..branches.len() {
            let mut last = branches[a][0].im - branches[b][0].im;
            for k in 1..n {
                let d = branches[a][k].im - branches[b][k].im;
                if d == 0.0 || d.signum() != last.signum() {
                    return Ok(true);
                }
                last = d;
            }
        }
    }
    Ok(false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Strong,
    Intermediate,
    WeakNoPa,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleRegime {
    pub label: String,
    pub g_mhz: f64,
    pub g_th_mhz: f64,
    /// Undefined when the resonator is undercoupled (γ_r <= γ_nr).
    pub g_min_mhz: Option<f64>,
    pub regime: Regime,
    pub pt_symmetric: bool,
    pub g_ep_mhz: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeReport {
    pub ensembles: Vec<EnsembleRegime>,
}

/// Classify each ensemble against g_th = (γ_r - γ_nr + γ_s)/4 and
/// g_min = sqrt((γ_r - γ_nr) γ_s)/2.
pub fn classify(model: &SystemModel) -> RegimeReport {
    let r = model.resonator();
    let feed = r.gamma_r - r.gamma_nr;
    let ensembles = model
        .ensembles()
        .iter()
        .map(|e| {
            let g_th = (feed + e.gamma_s) / 4.0;
            let g_min = if feed > 0.0 {
                Some((feed * e.gamma_s).sqrt() / 2.0)
            } else {
                None
            };
            let regime = match g_min {
                Some(_) if e.g > g_th => Regime::Strong,
                Some(gm) if e.g >= gm => Regime::Intermediate,
                _ => Regime::WeakNoPa,
            };
            let pt_symmetric = (feed - e.gamma_s).abs() < 1e-9 * e.gamma_s;
            EnsembleRegime {
                label: e.label.clone(),
                g_mhz: e.g,
                g_th_mhz: g_th,
                g_min_mhz: g_min,
                regime,
                pt_symmetric,
                g_ep_mhz: pt_symmetric.then(|| feed / 2.0),
            }
        })
        .collect();
    RegimeReport { ensembles }
}

/// min_j |Im(Ω̃_j)| over a (γ_s, Δ) grid for an N = 1 model, with the
/// extracted zero-level curves. The two curves coalesce at the
/// PT-symmetric point (γ_s, Δ) = (γ_r - γ_nr, 0).
#[derive(Debug, Clone, Serialize)]
pub struct PhaseSurface {
    pub gamma_s_mhz: Vec<f64>,
    pub delta_mhz: Vec<f64>,
    /// Row-major, rows = γ_s, cols = Δ.
    pub min_abs_im: Vec<f64>,
    /// Zero-level curve points (γ_s, Δ), one inner vec per curve
    /// (negative-detuning and positive-detuning families).
    pub contours: Vec<Vec<(f64, f64)>>,
}

pub fn pa_phase_surface(
    model: &SystemModel,
    gamma_s_grid: &[f64],
    delta_grid: &[f64],
) -> Result<PhaseSurface> {
    if model.n_ensembles() != 1 {
        return Err(Error::Argument("phase surface requires an N = 1 model".into()));
    }
    if gamma_s_grid.is_empty() || delta_grid.is_empty() {
        return Err(Error::Argument("empty phase-surface grid".into()));
    }
    let omega0 = model.resonator().omega0;
    let zeeman = model.ensembles()[0].zeeman;
    let b_of_delta = |d: f64| zeeman.resonant_field(omega0 + d);
    let im_tol = 1e-9 * omega0;

    let mut min_abs_im = Vec::with_capacity(gamma_s_grid.len() * delta_grid.len());
    let mut neg_curve = Vec::new();
    let mut pos_curve = Vec::new();
    for &gs in gamma_s_grid {
        let mut ens = model.ensembles().to_vec();
        ens[0].gamma_s = gs;
        let m = model.with_parts(model.resonator().clone(), ens)?;
        for &d in delta_grid {
            let spec = spectra::eigenfrequencies(&m, b_of_delta(d), SpectrumVariant::Zeros)?;
            let v = spec
                .values
                .iter()
                .map(|z| z.im.abs())
                .fold(f64::INFINITY, f64::min);
            min_abs_im.push(v);
        }
        let (b_lo, b_hi) = (b_of_delta(delta_grid[0]), b_of_delta(*delta_grid.last().unwrap()));
        let roots = im_zero_crossings(&m, b_lo, b_hi, delta_grid.len().max(64), im_tol)?;
        for r in roots {
            let delta = zeeman.freq(r.b0) - omega0;
            if delta <= 0.0 {
                neg_curve.push((gs, delta));
            }
            if delta >= 0.0 {
                pos_curve.push((gs, delta));
            }
        }
    }
    Ok(PhaseSurface {
        gamma_s_mhz: gamma_s_grid.to_vec(),
        delta_mhz: delta_grid.to_vec(),
        min_abs_im,
        contours: vec![neg_curve, pos_curve],
    })
}

/// Switching / sensing figures of merit extracted from a fixed-frequency
/// |S11| trace over field.
#[derive(Debug, Clone, Serialize)]
pub struct FigureOfMerit {
    pub modulation_depth_db: f64,
    pub on_field_t: f64,
    pub off_field_t: f64,
    pub slope_per_tesla: f64,
    pub slope_field_t: f64,
}

const S11_FLOOR: f64 = 1e-12;

/// Modulation depth M_d = 20 log10(|S11_on| / |S11_off|) from the global
/// extrema of the trace, plus the 10-90 transduction slope.
pub fn modulation_depth(trace: &[(f64, f64)]) -> Result<FigureOfMerit> {
    if trace.len() < 2 {
        return Err(Error::Argument("trace must contain at least 2 samples".into()));
    }
    let (mut on, mut off) = (trace[0], trace[0]);
    for &p in trace {
        if p.1 > on.1 {
            on = p;
        }
        if p.1 < off.1 {
            off = p;
        }
    }
    let md = 20.0 * (on.1.max(S11_FLOOR) / off.1.max(S11_FLOOR)).log10();
    let (slope, slope_field) = if trace.len() >= 3 {
        slope_transduction(trace)?
    } else {
        (0.0, trace[0].0)
    };
    Ok(FigureOfMerit {
        modulation_depth_db: md,
        on_field_t: on.0,
        off_field_t: off.0,
        slope_per_tesla: slope,
        slope_field_t: slope_field,
    })
}

/// Field-to-amplitude transduction slope: the 10-90 rise secant of |S11|
/// on the steeper flank of the deepest dip, with its field location.
pub fn slope_transduction(trace: &[(f64, f64)]) -> Result<(f64, f64)> {
    if trace.len() < 3 {
        return Err(Error::Argument("trace must contain at least 3 samples".into()));
    }
    let k_min = (0..trace.len())
        .min_by(|&a, &b| trace[a].1.partial_cmp(&trace[b].1).unwrap())
        .unwrap();
    let lo = trace[k_min].1;
    let hi = trace.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return Ok((0.0, trace[k_min].0));
    }
    let (t10, t90) = (lo + 0.1 * (hi - lo), lo + 0.9 * (hi - lo));
    // 10-90 rise secant on whichever flank of the dip recovers faster,
    // with the crossings located by linear interpolation
    let flank = |indices: Vec<usize>| -> Option<(f64, f64)> {
        let mut b10 = None;
        for w in indices.windows(2) {
            let (x0, y0) = trace[w[0]];
            let (x1, y1) = trace[w[1]];
            if b10.is_none() && y0 < t10 && y1 >= t10 {
                b10 = Some(x0 + (x1 - x0) * (t10 - y0) / (y1 - y0));
            }
            if y0 < t90 && y1 >= t90 {
                let b10 = b10?;
                let b90 = x0 + (x1 - x0) * (t90 - y0) / (y1 - y0);
                let span = (b90 - b10).abs();
                if span > 0.0 {
                    return Some((0.8 * (hi - lo) / span, 0.5 * (b90 + b10)));
                }
                return None;
            }
        }
        None
    };
    let forward = flank((k_min..trace.len()).collect());
    let backward = flank((0..=k_min).rev().collect());
    let best = [forward, backward]
        .into_iter()
        .flatten()
        .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    match best {
        Some(b) => Ok(b),
        None => Ok((0.0, trace[k_min].0)),
    }
}

/// Normalized thermal populations p_μ ∝ exp(-E_μ / T) for level energies
/// expressed in kelvin.
pub fn boltzmann_weights(temperature_k: f64, levels_k: &[f64]) -> Result<Vec<f64>> {
    if !(temperature_k > 0.0 && temperature_k.is_finite()) {
        return Err(Error::Argument("temperature must be > 0".into()));
    }
    if levels_k.is_empty() {
        return Err(Error::Argument("empty level list".into()));
    }
    if levels_k.iter().any(|e| !e.is_finite()) {
        return Err(Error::Argument("level energies must be finite".into()));
    }
    let e_min = levels_k.iter().cloned().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = levels_k
        .iter()
        .map(|e| (-(e - e_min) / temperature_k).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|p| p / sum).collect())
}

/// Rescale couplings with thermal populations: g_μ = g_ref sqrt(p_μ / p_ref).
pub fn rescale_couplings(g_ref: f64, weights: &[f64], ref_index: usize) -> Vec<f64> {
    let p_ref = weights[ref_index];
    weights
        .iter()
        .map(|p| g_ref * (p / p_ref).sqrt())
        .collect()
}

/// Equally spaced level ladder (kelvin), the default hyperfine abstraction.
pub fn equally_spaced_levels(n: usize, spacing_k: f64) -> Vec<f64> {
    (0..n).map(|i| spacing_k * i as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ResonatorParams, SpinEnsembleParams, ZeemanLaw};

    fn model(g: f64, gamma_r: f64, gamma_nr: f64, gamma_s: f64) -> SystemModel {
        SystemModel::new(
            ResonatorParams {
                omega0: 9900.0,
                gamma_r,
                gamma_nr,
            },
            vec![SpinEnsembleParams {
                g,
                gamma_s,
                zeeman: ZeemanLaw::from_slope_offset(28_000.0, 0.0, "z").unwrap(),
                label: "e".into(),
            }],
            None,
        )
        .unwrap()
    }

    /// Rates matching the single-ensemble sample: γ_r - γ_nr chosen so
    /// g_min = 1.4 MHz at γ_s = 5 MHz.
    fn bdpa() -> SystemModel {
        model(20.7, 1.868, 0.3, 5.0)
    }

    const B_RES: f64 = 9900.0 / 28_000.0;

    #[test]
    fn bdpa_two_points_symmetric_detunings() {
        let pts = find_pa_points(&bdpa(), 0.33, 0.38, 1e-6, PaScanOptions::default()).unwrap();
        assert_eq!(pts.len(), 2);
        assert_ne!(pts[0].branch, pts[1].branch);
        let (d1, d2) = (pts[0].detuning_mhz, pts[1].detuning_mhz);
        assert!((d1 + d2).abs() < 1e-3 * d1.abs());
        // detuning magnitude near the analytic value ~25.3 MHz
        assert!((d1.abs() - 25.31).abs() < 0.1, "{d1}");
    }

    #[test]
    fn below_g_min_no_points() {
        let m = model(1.0, 1.868, 0.3, 5.0);
        let pts = find_pa_points(&m, 0.33, 0.38, 1e-3, PaScanOptions::default()).unwrap();
        assert!(pts.is_empty());
    }

    #[test]
    fn at_g_min_single_double_root_at_zero_detuning() {
        let g_min = (1.568f64 * 5.0).sqrt() / 2.0;
        let m = model(g_min, 1.868, 0.3, 5.0);
        let pts = find_pa_points(&m, 0.33, 0.38, 1e-3, PaScanOptions::default()).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].detuning_mhz.abs() < 1e-6 * g_min);
    }

    #[test]
    fn classify_bdpa_rates() {
        // invert g_min = 1.4 at γ_s = 5: feed = 4 g_min²/γ_s = 1.568
        let rep = classify(&bdpa());
        let e = &rep.ensembles[0];
        assert!((e.g_min_mhz.unwrap() - 1.4).abs() < 1e-12);
        assert!((e.g_th_mhz - 1.642).abs() < 1e-12);
        assert_eq!(e.regime, Regime::Strong);
        assert!(!e.pt_symmetric);
    }

    #[test]
    fn classify_pt_point_collapses_thresholds() {
        let m = model(10.0, 5.3, 0.3, 5.0); // feed = γ_s = 5
        let rep = classify(&m);
        let e = &rep.ensembles[0];
        assert!(e.pt_symmetric);
        assert!((e.g_th_mhz - 2.5).abs() < 1e-12);
        assert!((e.g_min_mhz.unwrap() - 2.5).abs() < 1e-12);
        assert!((e.g_ep_mhz.unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn branch_crossing_iff_above_g_th() {
        for (g, expect) in [(1.7, true), (1.6, false), (20.7, true), (1.0, false)] {
            let m = model(g, 1.868, 0.3, 5.0);
            let got = im_branches_cross(&m, B_RES - 3e-3, B_RES + 3e-3, 801).unwrap();
            assert_eq!(got, expect, "g = {g}");
        }
    }

    #[test]
    fn phase_surface_contours_meet_at_pt_point() {
        let m = model(10.0, 5.3, 0.3, 5.0); // feed = 5
        let gs_grid: Vec<f64> = (0..41).map(|k| 1.0 + 0.2 * k as f64).collect();
        let d_grid: Vec<f64> = (0..81).map(|k| -40.0 + 1.0 * k as f64).collect();
        let surf = pa_phase_surface(&m, &gs_grid, &d_grid).unwrap();
        // the PT row (γ_s = 5 = feed) must contribute a Δ ≈ 0 point to
        // both curves
        for curve in &surf.contours {
            assert!(
                curve
                    .iter()
                    .any(|&(gs, d)| (gs - 5.0).abs() < 1e-9 && d.abs() < 1e-3),
                "curve misses PT point"
            );
        }
        // contour pairs symmetric under Δ -> -Δ
        for &(gs, d) in &surf.contours[0] {
            assert!(
                surf.contours[1]
                    .iter()
                    .any(|&(gs2, d2)| (gs2 - gs).abs() < 1e-9 && (d2 + d).abs() < 1e-5 * d.abs().max(1.0)),
                "no mirror of ({gs}, {d})"
            );
        }
    }

    #[test]
    fn modulation_depth_of_constant_trace_is_zero() {
        let trace: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 0.5)).collect();
        let fom = modulation_depth(&trace).unwrap();
        assert_eq!(fom.modulation_depth_db, 0.0);
    }

    #[test]
    fn slope_of_linear_ramp() {
        let a = 123.4;
        let trace: Vec<(f64, f64)> = (0..10).map(|k| (1e-3 * k as f64, a * 1e-3 * k as f64)).collect();
        let (slope, _) = slope_transduction(&trace).unwrap();
        assert!((slope - a).abs() < 1e-9 * a);
    }

    #[test]
    fn slope_of_flat_trace_is_zero() {
        let trace: Vec<(f64, f64)> = (0..5).map(|k| (k as f64, 1.0)).collect();
        assert_eq!(slope_transduction(&trace).unwrap().0, 0.0);
    }

    #[test]
    fn short_trace_is_an_error() {
        assert!(modulation_depth(&[(0.0, 1.0)]).is_err());
        assert!(slope_transduction(&[(0.0, 1.0), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn boltzmann_limits() {
        // effectively infinite temperature: uniform over 8 lines
        let p = boltzmann_weights(1e12, &equally_spaced_levels(8, 0.023)).unwrap();
        for &x in &p {
            assert!((x - 0.125).abs() < 1e-9);
        }
        // single level
        let p1 = boltzmann_weights(0.03, &[0.0]).unwrap();
        assert_eq!(p1, vec![1.0]);
    }

    #[test]
    fn boltzmann_hyperfine_ladder_ratio() {
        let p = boltzmann_weights(0.030, &equally_spaced_levels(8, 0.023)).unwrap();
        for k in 1..8 {
            assert!(p[k] < p[k - 1]);
        }
        let expect = (7.0 * 0.023f64 / 0.030).exp();
        assert!((p[0] / p[7] - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn rejects_bad_boltzmann_args() {
        assert!(boltzmann_weights(0.0, &[0.0]).is_err());
        assert!(boltzmann_weights(0.03, &[f64::NAN]).is_err());
    }
}
