//! Weighted nonlinear least-squares fitting of the closed-form reflection
//! model to measured (or synthetic) reflection maps, plus map ingestion.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use std::io::BufRead;
use std::path::Path;

use crate::config::{LossKind, MapFormat, NormalizationKind};
use crate::error::{Error, Result};
use crate::model::{SpinEnsembleParams, SystemModel};
use crate::spectra::{s11_closed_form, MapData, Normalization, Provenance, ReflectionMap};

/// One fittable scalar of a `SystemModel`. Ensemble parameters are
/// addressed by ensemble index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(into = "String")]
pub enum ParamId {
    Omega0,
    GammaR,
    GammaNr,
    G(usize),
    GammaS(usize),
    ZeemanSlope(usize),
    ZeemanOffset(usize),
}

impl From<ParamId> for String {
    fn from(p: ParamId) -> String {
        p.to_string()
    }
}

impl std::fmt::Display for ParamId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamId::Omega0 => write!(f, "f0"),
            ParamId::GammaR => write!(f, "gamma_r"),
            ParamId::GammaNr => write!(f, "gamma_nr"),
            ParamId::G(i) => write!(f, "g[{i}]"),
            ParamId::GammaS(i) => write!(f, "gamma_s[{i}]"),
            ParamId::ZeemanSlope(i) => write!(f, "slope[{i}]"),
            ParamId::ZeemanOffset(i) => write!(f, "offset[{i}]"),
        }
    }
}

impl ParamId {
    /// Parse `f0`, `gamma_r`, `gamma_nr`, or `g:<label>`,
    /// `gamma_s:<label>`, `slope:<label>`, `offset:<label>` against the
    /// model's ensemble labels.
    pub fn parse(name: &str, model: &SystemModel) -> Result<ParamId> {
        match name {
            "f0" => return Ok(ParamId::Omega0),
            "gamma_r" => return Ok(ParamId::GammaR),
            "gamma_nr" => return Ok(ParamId::GammaNr),
            _ => {}
        }
        if let Some((kind, label)) = name.split_once(':') {
            let idx = model
                .ensembles()
                .iter()
                .position(|e| e.label == label)
                .ok_or_else(|| Error::validation(format!("unknown ensemble label '{label}'")))?;
            return match kind {
                "g" => Ok(ParamId::G(idx)),
                "gamma_s" => Ok(ParamId::GammaS(idx)),
                "slope" => Ok(ParamId::ZeemanSlope(idx)),
                "offset" => Ok(ParamId::ZeemanOffset(idx)),
                _ => Err(Error::validation(format!("unknown parameter kind '{kind}'"))),
            };
        }
        Err(Error::validation(format!("unknown parameter '{name}'")))
    }

    pub fn get(&self, model: &SystemModel) -> f64 {
        let r = model.resonator();
        let e = |i: usize| &model.ensembles()[i];
        match *self {
            ParamId::Omega0 => r.omega0,
            ParamId::GammaR => r.gamma_r,
            ParamId::GammaNr => r.gamma_nr,
            ParamId::G(i) => e(i).g,
            ParamId::GammaS(i) => e(i).gamma_s,
            ParamId::ZeemanSlope(i) => e(i).zeeman.slope(),
            ParamId::ZeemanOffset(i) => e(i).zeeman.offset(),
        }
    }
}

/// Rebuild a model with the listed parameters replaced.
pub fn apply_params(model: &SystemModel, ids: &[ParamId], values: &[f64]) -> Result<SystemModel> {
    let mut resonator = model.resonator().clone();
    let mut ensembles: Vec<SpinEnsembleParams> = model.ensembles().to_vec();
    let mut zeeman: Vec<(f64, f64)> = ensembles
        .iter()
        .map(|e| (e.zeeman.slope(), e.zeeman.offset()))
        .collect();
    for (id, &v) in ids.iter().zip(values) {
        match *id {
            ParamId::Omega0 => resonator.omega0 = v,
            ParamId::GammaR => resonator.gamma_r = v,
            ParamId::GammaNr => resonator.gamma_nr = v,
            ParamId::G(i) => ensembles[i].g = v,
            ParamId::GammaS(i) => ensembles[i].gamma_s = v,
            ParamId::ZeemanSlope(i) => zeeman[i].0 = v,
            ParamId::ZeemanOffset(i) => zeeman[i].1 = v,
        }
    }
    for (e, &(slope, offset)) in ensembles.iter_mut().zip(&zeeman) {
        e.zeeman = crate::model::ZeemanLaw::from_slope_offset(slope, offset, "fit")?;
    }
    model.with_parts(resonator, ensembles)
}

#[derive(Debug, Clone)]
pub struct FitProblem {
    pub data: ReflectionMap,
    pub free: Vec<ParamId>,
    /// Per-free-parameter [lo, hi], same order as `free`.
    pub bounds: Vec<(f64, f64)>,
    pub initial: SystemModel,
    /// Per map point (row-major like the map), default uniform.
    pub weights: Option<Vec<f64>>,
    pub loss: LossKind,
    /// (fi, bj) indices actually fitted; by default every point within
    /// the frequency window ω0 ± max(5 g, 10 γ) around the resonator.
    pub active: Vec<(usize, usize)>,
}

impl FitProblem {
    pub fn new(
        data: ReflectionMap,
        initial: SystemModel,
        free: Vec<ParamId>,
        bounds: Vec<(f64, f64)>,
        loss: LossKind,
    ) -> Result<FitProblem> {
        if free.is_empty() {
            return Err(Error::validation("free_params is empty"));
        }
        if free.len() != bounds.len() {
            return Err(Error::validation("bounds must match free_params"));
        }
        for (id, &(lo, hi)) in free.iter().zip(&bounds) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::validation(format!(
                    "bounds for {id} must be finite with lo < hi"
                )));
            }
            let v = id.get(&initial);
            if v < lo || v > hi {
                return Err(Error::validation(format!(
                    "initial value {v} of {id} outside bounds [{lo}, {hi}]"
                )));
            }
        }
        if loss == LossKind::Complex && !data.is_complex() {
            return Err(Error::validation(
                "complex loss requires complex map data",
            ));
        }
        let active = frequency_window_indices(&data, &initial);
        if active.is_empty() {
            return Err(Error::validation(
                "no data points inside the fit frequency window",
            ));
        }
        Ok(FitProblem {
            data,
            free,
            bounds,
            initial,
            weights: None,
            loss,
            active,
        })
    }

    fn weight_at(&self, fi: usize, bj: usize) -> f64 {
        match &self.weights {
            Some(w) => w[fi * self.data.b_axis.len() + bj],
            None => 1.0,
        }
    }

    /// Residual vector at the given free-parameter values.
    fn residuals(&self, values: &[f64]) -> Result<DVector<f64>> {
        let model = apply_params(&self.initial, &self.free, values)?;
        let per_point = match self.loss {
            LossKind::Magnitude => 1,
            LossKind::Complex => 2,
        };
        let out: Vec<f64> = self
            .active
            .par_iter()
            .flat_map_iter(|&(fi, bj)| {
                let sw = self.weight_at(fi, bj).sqrt();
                let s = s11_closed_form(&model, self.data.f_axis[fi], self.data.b_axis[bj]);
                let mut vals = [0.0f64; 2];
                match self.loss {
                    LossKind::Magnitude => {
                        vals[0] = sw * (s.norm() - self.data.magnitude_at(fi, bj));
                    }
                    LossKind::Complex => {
                        let d = self.data.complex_at(fi, bj).unwrap();
                        vals[0] = sw * (s.re - d.re);
                        vals[1] = sw * (s.im - d.im);
                    }
                }
                vals.into_iter().take(per_point)
            })
            .collect();
        Ok(DVector::from_vec(out))
    }
}

/// Points within ω0 ± max(5 g_max, 10 γ_max) of the initial resonator.
fn frequency_window_indices(data: &ReflectionMap, model: &SystemModel) -> Vec<(usize, usize)> {
    let r = model.resonator();
    let g_max = model.ensembles().iter().map(|e| e.g).fold(0.0, f64::max);
    let rate_max = model
        .ensembles()
        .iter()
        .map(|e| e.gamma_s)
        .fold(r.gamma_r + r.gamma_nr, f64::max);
    let half = (5.0 * g_max).max(10.0 * rate_max);
    let mut out = Vec::new();
    for (fi, &f) in data.f_axis.iter().enumerate() {
        if (f - r.omega0).abs() <= half {
            for bj in 0..data.b_axis.len() {
                out.push((fi, bj));
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: SystemModel,
    pub free: Vec<ParamId>,
    pub values: Vec<f64>,
    pub residual_rms: f64,
    pub covariance: DMatrix<f64>,
    /// 1σ parameter errors (sqrt of the covariance diagonal).
    pub sigma: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub covariance_reliable: bool,
}

const LM_MAX_ITER: usize = 500;
const LM_COST_TOL: f64 = 1e-10;
const LM_STEP_TOL: f64 = 1e-12;
const JACOBIAN_REL_STEP: f64 = 1e-6;

/// Damped least squares with a numerically differentiated Jacobian.
/// Non-convergence is reported in the result, not as an error.
pub fn fit(problem: &FitProblem) -> Result<FitResult> {
    let n = problem.free.len();
    let mut p: Vec<f64> = problem.free.iter().map(|id| id.get(&problem.initial)).collect();
    let mut r = problem.residuals(&p)?;
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < LM_MAX_ITER {
        iterations += 1;
        let j = jacobian(problem, &p)?;
        let jt = j.transpose();
        let h = &jt * &j;
        let grad = &jt * &r;

        let mut accepted = false;
        loop {
            let mut damped = h.clone();
            for k in 0..n {
                damped[(k, k)] += lambda * h[(k, k)].max(1e-30);
            }
            let step = match damped.lu().solve(&(-&grad)) {
                Some(s) => s,
                None => {
                    lambda *= 10.0;
                    if lambda > 1e14 {
                        converged = true;
                        break;
                    }
                    continue;
                }
            };
            let trial: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(k, &v)| (v + step[k]).clamp(problem.bounds[k].0, problem.bounds[k].1))
                .collect();
            let step_norm = trial
                .iter()
                .zip(&p)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if step_norm < LM_STEP_TOL {
                converged = true;
                break;
            }
            let r_trial = problem.residuals(&trial)?;
            let cost_trial = r_trial.norm_squared();
            if cost_trial < cost {
                let rel_decrease = (cost - cost_trial) / cost.max(f64::MIN_POSITIVE);
                p = trial;
                r = r_trial;
                cost = cost_trial;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel_decrease < LM_COST_TOL {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e14 {
                converged = true;
                break;
            }
        }
        if converged || !accepted {
            break;
        }
    }

    let model = apply_params(&problem.initial, &problem.free, &p)?;
    let m = r.len();
    let residual_rms = (cost / m as f64).sqrt();

    // covariance from the Jacobian at the optimum
    let j = jacobian(problem, &p)?;
    let jtj = j.transpose() * &j;
    let dof = m.saturating_sub(n).max(1) as f64;
    let sigma2 = cost / dof;
    let (covariance, covariance_reliable) = match jtj.clone().try_inverse() {
        Some(inv) => (inv * sigma2, true),
        None => (DMatrix::zeros(n, n), false),
    };
    let sigma = (0..n).map(|k| covariance[(k, k)].max(0.0).sqrt()).collect();

    Ok(FitResult {
        model,
        free: problem.free.clone(),
        values: p,
        residual_rms,
        covariance,
        sigma,
        iterations,
        converged,
        covariance_reliable,
    })
}

/// Central-difference Jacobian, probes clamped to the parameter bounds.
fn jacobian(problem: &FitProblem, p: &[f64]) -> Result<DMatrix<f64>> {
    let n = p.len();
    let r0 = problem.residuals(p)?;
    let m = r0.len();
    let mut j = DMatrix::zeros(m, n);
    for k in 0..n {
        let h = JACOBIAN_REL_STEP * p[k].abs().max(1e-3);
        let (lo, hi) = problem.bounds[k];
        let mut plus = p.to_vec();
        plus[k] = (p[k] + h).min(hi);
        let mut minus = p.to_vec();
        minus[k] = (p[k] - h).max(lo);
        let denom = plus[k] - minus[k];
        let rp = problem.residuals(&plus)?;
        let rm = problem.residuals(&minus)?;
        for i in 0..m {
            j[(i, k)] = (rp[i] - rm[i]) / denom;
        }
    }
    Ok(j)
}

/// Seed a multi-line fit: each ensemble's (g, γ_s, zeeman offset) is first
/// refined on a field window around its own anticrossing, then the full
/// problem is fitted globally from the seeded model.
pub fn fit_seeded(problem: &FitProblem) -> Result<FitResult> {
    let mut seeded = problem.initial.clone();
    for (mu, e) in problem.initial.ensembles().iter().enumerate() {
        let local_free: Vec<ParamId> = problem
            .free
            .iter()
            .cloned()
            .filter(|id| {
                matches!(*id,
                    ParamId::G(i) | ParamId::GammaS(i) | ParamId::ZeemanOffset(i) if i == mu)
            })
            .collect();
        if local_free.is_empty() {
            continue;
        }
        let local_bounds: Vec<(f64, f64)> = local_free
            .iter()
            .map(|id| problem.bounds[problem.free.iter().position(|x| x == id).unwrap()])
            .collect();
        let b_res = e.zeeman.resonant_field(problem.initial.resonator().omega0);
        let half = (6.0 * e.g + 6.0 * e.gamma_s) / e.zeeman.slope();
        let mut local = FitProblem::new(
            problem.data.clone(),
            seeded.clone(),
            local_free.clone(),
            local_bounds,
            problem.loss,
        )?;
        local.weights = problem.weights.clone();
        local.active.retain(|&(_, bj)| (problem.data.b_axis[bj] - b_res).abs() <= half);
        if local.active.len() <= 2 * local.free.len() {
            continue;
        }
        let res = fit(&local)?;
        seeded = apply_params(&seeded, &res.free, &res.values)?;
    }
    let mut global = problem.clone();
    global.initial = seeded;
    fit(&global)
}

#[derive(Debug, Clone, Serialize)]
pub struct CostProfile {
    pub param: String,
    pub values: Vec<f64>,
    pub residual_rms: Vec<f64>,
    /// True when the span was clipped by a parameter bound.
    pub one_sided: bool,
}

/// 1-D cost profile around the optimum; a sanity check on the
/// covariance-based error bars.
pub fn profile_uncertainty(
    problem: &FitProblem,
    result: &FitResult,
    param: ParamId,
    span: f64,
    n_points: usize,
) -> Result<CostProfile> {
    if !result.converged {
        return Err(Error::Argument("profile requires a converged result".into()));
    }
    let k = result
        .free
        .iter()
        .position(|&id| id == param)
        .ok_or_else(|| Error::Argument(format!("{param} is not a free parameter")))?;
    let center = result.values[k];
    let (lo_b, hi_b) = problem.bounds[k];
    let lo = (center - span).max(lo_b);
    let hi = (center + span).min(hi_b);
    let one_sided = (center - span < lo_b) || (center + span > hi_b);
    let n = if span == 0.0 { 1 } else { n_points.max(2) };
    let mut values = Vec::with_capacity(n);
    let mut rms = Vec::with_capacity(n);
    for i in 0..n {
        let v = if n == 1 {
            center
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        };
        let mut trial = result.values.clone();
        trial[k] = v;
        let r = problem.residuals(&trial)?;
        values.push(v);
        rms.push((r.norm_squared() / r.len() as f64).sqrt());
    }
    Ok(CostProfile {
        param: param.to_string(),
        values,
        residual_rms: rms,
        one_sided,
    })
}

/// Read a reflection map from disk.
///
/// Baseline normalization divides each field column by the mean magnitude
/// over the outer 10% of the frequency window (both edges).
pub fn ingest_map(
    path: &Path,
    format: MapFormat,
    normalization: NormalizationKind,
) -> Result<ReflectionMap> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut map = match format {
        MapFormat::LongCsv => ReflectionMap::read_long_csv(reader, Provenance::Ingested)?,
        MapFormat::MatrixCsv => read_matrix_csv(reader)?,
    };
    if normalization == NormalizationKind::Baseline {
        baseline_normalize(&mut map);
    }
    Ok(map)
}

/// Matrix CSV: header row is a label followed by the field values; each
/// data row is a frequency followed by |S11| per field. Magnitude only.
fn read_matrix_csv<R: BufRead>(r: R) -> Result<ReflectionMap> {
    let mut b_axis: Vec<f64> = Vec::new();
    let mut f_axis: Vec<f64> = Vec::new();
    let mut data: Vec<f64> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("bad number '{s}'"),
            })
        };
        if lineno == 0 {
            for s in &fields[1..] {
                b_axis.push(parse(s)?);
            }
            continue;
        }
        if fields.len() != b_axis.len() + 1 {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("expected {} columns, found {}", b_axis.len() + 1, fields.len()),
            });
        }
        f_axis.push(parse(fields[0])?);
        for s in &fields[1..] {
            data.push(parse(s)?);
        }
    }
    ReflectionMap::new(
        b_axis,
        f_axis,
        MapData::Magnitude(data),
        Normalization::Raw,
        Provenance::Ingested,
    )
}

fn baseline_normalize(map: &mut ReflectionMap) {
    let nf = map.f_axis.len();
    let nb = map.b_axis.len();
    let edge = ((nf as f64 * 0.10).ceil() as usize).max(1).min(nf / 2).max(1);
    let edge_rows: Vec<usize> = (0..edge).chain(nf - edge..nf).collect();
    for bj in 0..nb {
        let mean: f64 = edge_rows
            .iter()
            .map(|&fi| map.magnitude_at(fi, bj))
            .sum::<f64>()
            / edge_rows.len() as f64;
        if mean <= 0.0 {
            continue;
        }
        match &mut map.data {
            MapData::Complex(v) => {
                for fi in 0..nf {
                    v[fi * nb + bj] /= mean;
                }
            }
            MapData::Magnitude(v) => {
                for fi in 0..nf {
                    v[fi * nb + bj] /= mean;
                }
            }
        }
    }
    map.normalization = Normalization::BaselineNormalized;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ResonatorParams, ZeemanLaw};
    use crate::spectra::simulate_map;

    fn bdpa() -> SystemModel {
        SystemModel::new(
            ResonatorParams {
                omega0: 9900.0,
                gamma_r: 1.868,
                gamma_nr: 0.3,
            },
            vec![SpinEnsembleParams {
                g: 20.7,
                gamma_s: 5.0,
                zeeman: ZeemanLaw::from_slope_offset(28_000.0, 0.0, "z").unwrap(),
                label: "bdpa".into(),
            }],
            None,
        )
        .unwrap()
    }

    const B_RES: f64 = 9900.0 / 28_000.0;

    fn grids(nb: usize, nf: usize) -> (Vec<f64>, Vec<f64>) {
        let b: Vec<f64> = (0..nb)
            .map(|k| B_RES - 3e-3 + 6e-3 * k as f64 / (nb - 1) as f64)
            .collect();
        let f: Vec<f64> = (0..nf)
            .map(|k| 9840.0 + 120.0 * k as f64 / (nf - 1) as f64)
            .collect();
        (b, f)
    }

    fn standard_problem(data: ReflectionMap, initial: SystemModel) -> FitProblem {
        let free = vec![
            ParamId::G(0),
            ParamId::GammaS(0),
            ParamId::GammaR,
            ParamId::GammaNr,
        ];
        let bounds = vec![(1.0, 60.0), (0.5, 20.0), (0.1, 10.0), (1e-3, 5.0)];
        FitProblem::new(data, initial, free, bounds, LossKind::Magnitude).unwrap()
    }

    #[test]
    fn fit_from_truth_stops_immediately() {
        let truth = bdpa();
        let (b, f) = grids(41, 61);
        let data = simulate_map(&truth, &b, &f).unwrap().to_magnitude();
        let problem = standard_problem(data, truth.clone());
        let res = fit(&problem).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        assert!(res.residual_rms < 1e-12, "rms = {}", res.residual_rms);
    }

    #[test]
    fn noiseless_roundtrip_recovers_perturbed_params() {
        let truth = bdpa();
        let (b, f) = grids(61, 81);
        let data = simulate_map(&truth, &b, &f).unwrap().to_magnitude();
        let init = apply_params(
            &truth,
            &[ParamId::G(0), ParamId::GammaS(0), ParamId::GammaR, ParamId::GammaNr],
            &[20.7 * 1.2, 5.0 * 0.8, 1.868 * 1.2, 0.3 * 0.8],
        )
        .unwrap();
        let problem = standard_problem(data, init);
        let res = fit(&problem).unwrap();
        assert!(res.converged);
        for (id, truth_v) in [
            (ParamId::G(0), 20.7),
            (ParamId::GammaS(0), 5.0),
            (ParamId::GammaR, 1.868),
            (ParamId::GammaNr, 0.3),
        ] {
            let got = id.get(&res.model);
            assert!(
                (got - truth_v).abs() / truth_v < 1e-4,
                "{id}: {got} vs {truth_v}"
            );
        }
    }

    #[test]
    fn weight_scaling_leaves_minimizer_unchanged() {
        let truth = bdpa();
        let (b, f) = grids(31, 41);
        let data = simulate_map(&truth, &b, &f).unwrap().to_magnitude();
        let init = apply_params(&truth, &[ParamId::G(0)], &[24.0]).unwrap();
        let mk = |scale: f64| {
            let mut p = FitProblem::new(
                data.clone(),
                init.clone(),
                vec![ParamId::G(0)],
                vec![(1.0, 60.0)],
                LossKind::Magnitude,
            )
            .unwrap();
            p.weights = Some(vec![scale; p.data.n_points()]);
            p
        };
        let r1 = fit(&mk(1.0)).unwrap();
        let r2 = fit(&mk(7.5)).unwrap();
        assert!((r1.values[0] - r2.values[0]).abs() < 1e-10);
    }

    #[test]
    fn complex_loss_roundtrip() {
        let truth = bdpa();
        let (b, f) = grids(31, 41);
        let data = simulate_map(&truth, &b, &f).unwrap();
        let init = apply_params(&truth, &[ParamId::G(0)], &[17.0]).unwrap();
        let problem = FitProblem::new(
            data,
            init,
            vec![ParamId::G(0)],
            vec![(1.0, 60.0)],
            LossKind::Complex,
        )
        .unwrap();
        let res = fit(&problem).unwrap();
        assert!((res.values[0] - 20.7).abs() < 1e-6);
    }

    #[test]
    fn profile_matches_covariance_curvature() {
        let truth = bdpa();
        let (b, f) = grids(41, 61);
        let data = simulate_map(&truth, &b, &f)
            .unwrap()
            .with_magnitude_noise(0.01, 7);
        let init = apply_params(&truth, &[ParamId::G(0)], &[22.0]).unwrap();
        let problem = FitProblem::new(
            data,
            init,
            vec![ParamId::G(0)],
            vec![(1.0, 60.0)],
            LossKind::Magnitude,
        )
        .unwrap();
        let res = fit(&problem).unwrap();
        assert!(res.converged && res.covariance_reliable);
        let span = 3.0 * res.sigma[0];
        let prof = profile_uncertainty(&problem, &res, ParamId::G(0), span, 21).unwrap();
        // fit a parabola cost(v) ≈ cost0 + (v - v0)²/(2 σ_est²) and compare
        let m = problem.active.len() as f64;
        let cost: Vec<f64> = prof.residual_rms.iter().map(|r| r * r * m).collect();
        let c0 = cost.iter().cloned().fold(f64::INFINITY, f64::min);
        let sigma2_data = res.residual_rms * res.residual_rms;
        let mut curv_est: Vec<f64> = Vec::new();
        for (v, c) in prof.values.iter().zip(&cost) {
            let dv = v - res.values[0];
            if dv.abs() > 0.5 * span {
                curv_est.push((c - c0) / (dv * dv));
            }
        }
        let curv = curv_est.iter().sum::<f64>() / curv_est.len() as f64;
        // cov diag ≈ 2 σ²_data / curvature
        let sigma_prof = (2.0 * sigma2_data * m / (2.0 * curv) / m).sqrt();
        let ratio = sigma_prof / res.sigma[0];
        assert!((0.8..1.25).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn profile_zero_span_single_point_and_bound_flag() {
        let truth = bdpa();
        let (b, f) = grids(21, 31);
        let data = simulate_map(&truth, &b, &f).unwrap().to_magnitude();
        let problem = FitProblem::new(
            data,
            truth.clone(),
            vec![ParamId::G(0)],
            vec![(1.0, 60.0)],
            LossKind::Magnitude,
        )
        .unwrap();
        let res = fit(&problem).unwrap();
        let p0 = profile_uncertainty(&problem, &res, ParamId::G(0), 0.0, 9).unwrap();
        assert_eq!(p0.values.len(), 1);
        assert!(!p0.one_sided);
        let p1 = profile_uncertainty(&problem, &res, ParamId::G(0), 100.0, 9).unwrap();
        assert!(p1.one_sided);
    }

    #[test]
    fn matrix_csv_equals_long_csv() {
        let truth = bdpa();
        let (b, f) = grids(4, 5);
        let map = simulate_map(&truth, &b, &f).unwrap().to_magnitude();
        let dir = tempfile::tempdir().unwrap();
        let long_path = dir.path().join("long.csv");
        map.write_long_csv_path(&long_path).unwrap();
        let matrix_path = dir.path().join("matrix.csv");
        let mut text = String::from("f_mhz");
        for bv in &map.b_axis {
            text.push_str(&format!(",{bv}"));
        }
        text.push('\n');
        for (fi, fv) in map.f_axis.iter().enumerate() {
            text.push_str(&format!("{fv}"));
            for bj in 0..map.b_axis.len() {
                text.push_str(&format!(",{}", map.magnitude_at(fi, bj)));
            }
            text.push('\n');
        }
        std::fs::write(&matrix_path, text).unwrap();
        let a = ingest_map(&long_path, MapFormat::LongCsv, NormalizationKind::Raw).unwrap();
        let c = ingest_map(&matrix_path, MapFormat::MatrixCsv, NormalizationKind::Raw).unwrap();
        assert_eq!(a.b_axis, c.b_axis);
        assert_eq!(a.f_axis, c.f_axis);
        for fi in 0..a.f_axis.len() {
            for bj in 0..a.b_axis.len() {
                assert!((a.magnitude_at(fi, bj) - c.magnitude_at(fi, bj)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn baseline_normalization_flattens_edges() {
        let truth = bdpa();
        let (b, f) = grids(5, 40);
        let mut map = simulate_map(&truth, &b, &f).unwrap().to_magnitude();
        // fake a gain ripple per column
        if let MapData::Magnitude(v) = &mut map.data {
            for fi in 0..f.len() {
                for bj in 0..b.len() {
                    v[fi * b.len() + bj] *= 2.0 + 0.1 * bj as f64;
                }
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        map.write_long_csv_path(&p).unwrap();
        let norm = ingest_map(&p, MapFormat::LongCsv, NormalizationKind::Baseline).unwrap();
        // off-resonance |S11| is ~1, so the edge mean is restored to ~1
        for bj in 0..b.len() {
            assert!((norm.magnitude_at(0, bj) - 1.0).abs() < 0.05);
        }
        assert_eq!(norm.normalization, Normalization::BaselineNormalized);
    }

    #[test]
    fn identifiability_gamma_r_gamma_nr_from_deep_dip() {
        // a map containing the near-zero PA dips pins the dip depth and
        // thus separates γ_r from γ_nr under magnitude-only loss
        let truth = bdpa();
        let (b, f) = grids(81, 101);
        let data = simulate_map(&truth, &b, &f).unwrap().to_magnitude();
        let init = apply_params(
            &truth,
            &[ParamId::GammaR, ParamId::GammaNr],
            &[1.868 * 0.85, 0.3 * 1.3],
        )
        .unwrap();
        let problem = FitProblem::new(
            data,
            init,
            vec![ParamId::GammaR, ParamId::GammaNr],
            vec![(0.1, 10.0), (1e-3, 5.0)],
            LossKind::Magnitude,
        )
        .unwrap();
        let res = fit(&problem).unwrap();
        assert!((ParamId::GammaR.get(&res.model) - 1.868).abs() / 1.868 < 1e-3);
        assert!((ParamId::GammaNr.get(&res.model) - 0.3).abs() / 0.3 < 1e-3);
    }
}
