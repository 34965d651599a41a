//! Reflection spectra by two independent routes (closed form and
//! pole/zero determinant ratio), complex eigenfrequencies of both
//! effective Hamiltonians, and simulated reflection maps.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::eigen;
use crate::error::{Error, Result};
use crate::model::{SpectrumVariant, SystemModel};

/// The N+1 complex eigenfrequencies of one variant at a given field,
/// sorted by ascending real part.
#[derive(Debug, Clone)]
pub struct ComplexSpectrum {
    pub values: Vec<Complex64>,
    pub variant: SpectrumVariant,
    pub b0: f64,
}

/// Closed-form reflection coefficient:
/// S11 = 1 - γ_r / [ (γ_r+γ_nr)/2 - i(ω-ω0) + Σ_μ g_μ² / (γ_sμ/2 - i(ω-ω_sμ)) ].
pub fn s11_closed_form(model: &SystemModel, omega: f64, b0: f64) -> Complex64 {
    let r = model.resonator();
    let mut denom = Complex64::new((r.gamma_r + r.gamma_nr) / 2.0, -(omega - r.omega0));
    for e in model.ensembles() {
        let spin = Complex64::new(e.gamma_s / 2.0, -(omega - e.zeeman.freq(b0)));
        denom += e.g * e.g / spin;
    }
    1.0 - r.gamma_r / denom
}

/// The effective non-Hermitian matrix A - iΓ/2 (or A - iΓ̃/2).
pub fn effective_matrix(
    model: &SystemModel,
    b0: f64,
    variant: SpectrumVariant,
) -> DMatrix<Complex64> {
    let a = model.hopfield_matrix(b0);
    let gamma = model.decay_matrix(variant);
    let n = model.dim();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = Complex64::new(a.matrix()[(i, j)], 0.0);
        }
        m[(i, i)].im = -gamma.diagonal()[i] / 2.0;
    }
    m
}

/// Complex eigenfrequencies Ω_j (poles) or Ω̃_j (zeros).
pub fn eigenfrequencies(
    model: &SystemModel,
    b0: f64,
    variant: SpectrumVariant,
) -> Result<ComplexSpectrum> {
    let m = effective_matrix(model, b0, variant);
    let values = eigen::eigenvalues(&m)?;
    Ok(ComplexSpectrum {
        values,
        variant,
        b0,
    })
}

/// Determinant-ratio reflection coefficient Π_j (ω - Ω̃_j)/(ω - Ω_j).
pub fn s11_det_ratio(model: &SystemModel, omega: f64, b0: f64) -> Result<Complex64> {
    let zeros = eigenfrequencies(model, b0, SpectrumVariant::Zeros)?;
    let poles = eigenfrequencies(model, b0, SpectrumVariant::Poles)?;
    let w = Complex64::new(omega, 0.0);
    let mut s = Complex64::new(1.0, 0.0);
    for (z, p) in zeros.values.iter().zip(&poles.values) {
        s *= (w - z) / (w - p);
    }
    Ok(s)
}

/// Eigenfrequency branches tracked by continuity across a field sweep.
///
/// `branches[j][k]` is branch j at `b_grid[k]`. Branches start from the
/// sorted spectrum at the first field and are continued by greedy
/// nearest-neighbor matching in the complex plane, so they stay smooth
/// through crossings where plain sorting would swap them.
pub fn track_branches(
    model: &SystemModel,
    b_grid: &[f64],
    variant: SpectrumVariant,
) -> Result<Vec<Vec<Complex64>>> {
    if b_grid.is_empty() {
        return Err(Error::Argument("empty field grid".into()));
    }
    let n = model.dim();
    let first = eigenfrequencies(model, b_grid[0], variant)?;
    let mut branches: Vec<Vec<Complex64>> = first.values.iter().map(|v| vec![*v]).collect();
    let mut prev = first.values;
    for &b in &b_grid[1..] {
        let next = eigenfrequencies(model, b, variant)?.values;
        let assignment = match_nearest(&prev, &next);
        for j in 0..n {
            branches[j].push(next[assignment[j]]);
        }
        prev = assignment.iter().map(|&k| next[k]).collect();
    }
    Ok(branches)
}

/// Greedy minimal-total-distance assignment `prev[j] -> next[result[j]]`.
fn match_nearest(prev: &[Complex64], next: &[Complex64]) -> Vec<usize> {
    let n = prev.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, p) in prev.iter().enumerate() {
        for (j, q) in next.iter().enumerate() {
            pairs.push(((p - q).norm_sqr(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut used_prev = vec![false; n];
    let mut used_next = vec![false; n];
    let mut assign = vec![0usize; n];
    let mut count = 0;
    for (_, i, j) in pairs {
        if !used_prev[i] && !used_next[j] {
            used_prev[i] = true;
            used_next[j] = true;
            assign[i] = j;
            count += 1;
            if count == n {
                break;
            }
        }
    }
    assign
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    Raw,
    BaselineNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Simulated,
    Ingested,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapData {
    /// Row-major, rows = frequency, cols = field.
    Complex(Vec<Complex64>),
    Magnitude(Vec<f64>),
}

/// |S11| (or complex S11) on a rectangular (B0, f) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionMap {
    pub b_axis: Vec<f64>,
    pub f_axis: Vec<f64>,
    pub data: MapData,
    pub normalization: Normalization,
    pub provenance: Provenance,
}

impl ReflectionMap {
    pub fn new(
        b_axis: Vec<f64>,
        f_axis: Vec<f64>,
        data: MapData,
        normalization: Normalization,
        provenance: Provenance,
    ) -> Result<Self> {
        check_monotonic(&b_axis, "b axis")?;
        check_monotonic(&f_axis, "f axis")?;
        let expect = b_axis.len() * f_axis.len();
        let got = match &data {
            MapData::Complex(v) => v.len(),
            MapData::Magnitude(v) => v.len(),
        };
        if got != expect {
            return Err(Error::validation(format!(
                "map data has {got} entries, axes require {expect}"
            )));
        }
        Ok(ReflectionMap {
            b_axis,
            f_axis,
            data,
            normalization,
            provenance,
        })
    }

    pub fn n_points(&self) -> usize {
        self.b_axis.len() * self.f_axis.len()
    }

    #[inline]
    fn idx(&self, fi: usize, bj: usize) -> usize {
        fi * self.b_axis.len() + bj
    }

    pub fn magnitude_at(&self, fi: usize, bj: usize) -> f64 {
        match &self.data {
            MapData::Complex(v) => v[self.idx(fi, bj)].norm(),
            MapData::Magnitude(v) => v[self.idx(fi, bj)],
        }
    }

    pub fn complex_at(&self, fi: usize, bj: usize) -> Option<Complex64> {
        match &self.data {
            MapData::Complex(v) => Some(v[self.idx(fi, bj)]),
            MapData::Magnitude(_) => None,
        }
    }

    pub fn is_complex(&self) -> bool {
        matches!(self.data, MapData::Complex(_))
    }

    /// Long-format CSV: `b_t,f_mhz,re_s11,im_s11` for complex maps,
    /// `b_t,f_mhz,abs_s11` for magnitude maps.
    pub fn write_long_csv<W: Write>(&self, mut w: W) -> Result<()> {
        match &self.data {
            MapData::Complex(_) => writeln!(w, "b_t,f_mhz,re_s11,im_s11")?,
            MapData::Magnitude(_) => writeln!(w, "b_t,f_mhz,abs_s11")?,
        }
        for fi in 0..self.f_axis.len() {
            for bj in 0..self.b_axis.len() {
                match &self.data {
                    MapData::Complex(v) => {
                        let s = v[self.idx(fi, bj)];
                        writeln!(
                            w,
                            "{},{},{},{}",
                            self.b_axis[bj], self.f_axis[fi], s.re, s.im
                        )?;
                    }
                    MapData::Magnitude(v) => {
                        writeln!(
                            w,
                            "{},{},{}",
                            self.b_axis[bj],
                            self.f_axis[fi],
                            v[self.idx(fi, bj)]
                        )?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn write_long_csv_path(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_long_csv(std::io::BufWriter::new(f))
    }

    /// Read a long-format CSV produced by `write_long_csv` (or equivalent).
    pub fn read_long_csv<R: BufRead>(r: R, provenance: Provenance) -> Result<Self> {
        let mut rows: Vec<(f64, f64, MapValue)> = Vec::new();
        let mut complex = None;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if lineno == 0 {
                complex = match fields.as_slice() {
                    ["b_t", "f_mhz", "re_s11", "im_s11"] => Some(true),
                    ["b_t", "f_mhz", "abs_s11"] => Some(false),
                    _ => {
                        return Err(Error::Parse {
                            line: 1,
                            msg: format!("unrecognized header '{line}'"),
                        })
                    }
                };
                continue;
            }
            let is_complex = complex.unwrap();
            let want = if is_complex { 4 } else { 3 };
            if fields.len() != want {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected {want} columns, found {}", fields.len()),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    msg: format!("bad number '{s}'"),
                })
            };
            let b = parse(fields[0])?;
            let f = parse(fields[1])?;
            let v = if is_complex {
                MapValue::Complex(Complex64::new(parse(fields[2])?, parse(fields[3])?))
            } else {
                MapValue::Magnitude(parse(fields[2])?)
            };
            rows.push((b, f, v));
        }
        if rows.is_empty() {
            return Err(Error::Parse {
                line: 1,
                msg: "no data rows".into(),
            });
        }
        Self::from_long_rows(rows, provenance)
    }

    fn from_long_rows(rows: Vec<(f64, f64, MapValue)>, provenance: Provenance) -> Result<Self> {
        let mut b_axis: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut f_axis: Vec<f64> = rows.iter().map(|r| r.1).collect();
        b_axis.sort_by(|a, b| a.partial_cmp(b).unwrap());
        b_axis.dedup();
        f_axis.sort_by(|a, b| a.partial_cmp(b).unwrap());
        f_axis.dedup();
        if b_axis.len() * f_axis.len() != rows.len() {
            return Err(Error::validation(format!(
                "grid is not rectangular or contains duplicate (b, f) pairs: \
                 {} rows vs {}x{} axes",
                rows.len(),
                f_axis.len(),
                b_axis.len()
            )));
        }
        let complex = matches!(rows[0].2, MapValue::Complex(_));
        let nb = b_axis.len();
        let mut cdata = vec![Complex64::default(); if complex { rows.len() } else { 0 }];
        let mut mdata = vec![f64::NAN; if complex { 0 } else { rows.len() }];
        let mut seen = vec![false; rows.len()];
        for (b, f, v) in rows {
            let bj = b_axis.partition_point(|x| *x < b);
            let fi = f_axis.partition_point(|x| *x < f);
            let k = fi * nb + bj;
            if seen[k] {
                return Err(Error::validation(format!(
                    "duplicate (b, f) pair ({b}, {f})"
                )));
            }
            seen[k] = true;
            match v {
                MapValue::Complex(c) => cdata[k] = c,
                MapValue::Magnitude(m) => mdata[k] = m,
            }
        }
        let data = if complex {
            MapData::Complex(cdata)
        } else {
            MapData::Magnitude(mdata)
        };
        ReflectionMap::new(b_axis, f_axis, data, Normalization::Raw, provenance)
    }

    /// Magnitude-only copy (used by magnitude-loss fits and noise tests).
    pub fn to_magnitude(&self) -> ReflectionMap {
        let v: Vec<f64> = (0..self.f_axis.len())
            .flat_map(|fi| (0..self.b_axis.len()).map(move |bj| (fi, bj)))
            .map(|(fi, bj)| self.magnitude_at(fi, bj))
            .collect();
        ReflectionMap {
            b_axis: self.b_axis.clone(),
            f_axis: self.f_axis.clone(),
            data: MapData::Magnitude(v),
            normalization: self.normalization,
            provenance: self.provenance,
        }
    }

    /// Add Gaussian noise to |S11| (synthetic data generation). The result
    /// is magnitude-only and clamped at zero.
    pub fn with_magnitude_noise(&self, sigma: f64, seed: u64) -> ReflectionMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map = self.to_magnitude();
        if let MapData::Magnitude(v) = &mut map.data {
            for x in v.iter_mut() {
                *x = (*x + sigma * standard_normal(&mut rng)).max(0.0);
            }
        }
        map
    }
}

enum MapValue {
    Complex(Complex64),
    Magnitude(f64),
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn check_monotonic(axis: &[f64], name: &str) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::validation(format!("{name} is empty")));
    }
    if axis.windows(2).any(|w| !(w[1] > w[0])) || axis.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation(format!(
            "{name} must be finite and strictly ascending"
        )));
    }
    Ok(())
}

/// Simulate a complex reflection map on the given grids. Grid points are
/// evaluated independently, so the result is identical regardless of
/// parallel scheduling.
pub fn simulate_map(model: &SystemModel, b_grid: &[f64], f_grid: &[f64]) -> Result<ReflectionMap> {
    check_monotonic(b_grid, "b grid")?;
    check_monotonic(f_grid, "f grid")?;
    let nb = b_grid.len();
    let data: Vec<Complex64> = (0..f_grid.len() * nb)
        .into_par_iter()
        .map(|k| s11_closed_form(model, f_grid[k / nb], b_grid[k % nb]))
        .collect();
    ReflectionMap::new(
        b_grid.to_vec(),
        f_grid.to_vec(),
        MapData::Complex(data),
        Normalization::Raw,
        Provenance::Simulated,
    )
}

/// Sidecar metadata written next to exported maps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapMeta {
    pub model: crate::config::ModelConfig,
    pub b_axis: Vec<f64>,
    pub f_axis: Vec<f64>,
    pub normalization: Normalization,
    pub provenance: Provenance,
}
