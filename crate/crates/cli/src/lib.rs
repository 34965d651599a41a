//! Command-line front end: simulate reflection maps, scan for perfect
//! absorption, fit measured maps, and extract figures of merit. All heavy
//! lifting lives in `pa-core`; this crate is plumbing and serialization.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use pa_core::config::{build_model, model_to_config, ConfigDocument, FitConfig, ScanConfig};
use pa_core::fit::{fit, fit_seeded, ingest_map, FitProblem, FitResult, ParamId};
use pa_core::model::{SpectrumVariant, SystemModel};
use pa_core::pascan::{self, FigureOfMerit, PaPoint, PaScanOptions, RegimeReport};
use pa_core::spectra::{self, s11_closed_form, MapMeta};

const EXIT_OK: i32 = 0;
const EXIT_CONFIG: i32 = 2;
const EXIT_IO: i32 = 3;

#[derive(Parser)]
#[command(name = "pa", about = "Cavity–spin reflection simulator and fitter", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Path to the JSON config document.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// RNG seed for synthetic noise.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a reflection map over the scan grid.
    Simulate,
    /// Find perfect-absorption points and classify coupling regimes.
    Pa,
    /// Fit the model to a measured or synthetic map.
    Fit,
    /// Modulation depth and field-to-amplitude slope at fixed-frequency cuts.
    Fom,
    /// Check the config and exit.
    Validate,
}

struct Failure {
    code: i32,
    msg: String,
}

impl Failure {
    fn config(msg: impl Into<String>) -> Failure {
        Failure {
            code: EXIT_CONFIG,
            msg: msg.into(),
        }
    }
}

impl From<pa_core::Error> for Failure {
    fn from(e: pa_core::Error) -> Failure {
        let code = match &e {
            pa_core::Error::Validation(_) | pa_core::Error::Argument(_) => EXIT_CONFIG,
            pa_core::Error::Io(_)
            | pa_core::Error::Parse { .. }
            | pa_core::Error::Json(_)
            | pa_core::Error::Numerical { .. } => EXIT_IO,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure {
            code: EXIT_IO,
            msg: e.to_string(),
        }
    }
}

/// Entry point shared by `main` and the integration tests. Returns the
/// process exit code: 0 success, 2 config/usage error, 3 I/O or runtime
/// failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return code;
        }
    };
    if cli.threads > 0 {
        // may already be initialized when called repeatedly in-process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            f.code
        }
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| Failure::config("--config is required"))?;
    let text = fs::read_to_string(config_path)?;
    let doc = ConfigDocument::from_json(&text)?;
    let model = build_model(&doc.model)?;
    let out_dir = cli
        .out
        .clone()
        .or_else(|| doc.output.as_ref().map(|o| PathBuf::from(&o.dir)))
        .unwrap_or_else(|| PathBuf::from("."));

    match cli.command {
        Command::Validate => {
            // grids and fit wiring are validated too, when present
            if let Some(scan) = &doc.scan {
                scan.b_grid()?;
                scan.f_grid()?;
            }
            if let Some(fc) = &doc.fit {
                parse_free_params(fc, &model)?;
            }
            println!("config ok");
            Ok(())
        }
        Command::Simulate => {
            fs::create_dir_all(&out_dir)?;
            cmd_simulate(&doc, &model, &out_dir, cli.seed)
        }
        Command::Pa => {
            fs::create_dir_all(&out_dir)?;
            cmd_pa(&doc, &model, &out_dir)
        }
        Command::Fit => {
            fs::create_dir_all(&out_dir)?;
            cmd_fit(&doc, &model, &out_dir)
        }
        Command::Fom => {
            fs::create_dir_all(&out_dir)?;
            cmd_fom(&doc, &model, &out_dir)
        }
    }
}

fn require_scan(doc: &ConfigDocument) -> Result<&ScanConfig, Failure> {
    doc.scan
        .as_ref()
        .ok_or_else(|| Failure::config("config needs a `scan` section for this subcommand"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure { code: EXIT_IO, msg: e.to_string() })?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn cmd_simulate(
    doc: &ConfigDocument,
    model: &SystemModel,
    out_dir: &Path,
    seed: Option<u64>,
) -> Result<(), Failure> {
    let scan = require_scan(doc)?;
    let b = scan.b_grid()?;
    let f = scan.f_grid()?;
    let mut map = spectra::simulate_map(model, &b, &f)?;
    if let Some(sigma) = scan.noise_sigma {
        map = map.with_magnitude_noise(sigma, seed.unwrap_or(0));
    }
    map.write_long_csv_path(&out_dir.join("map.csv"))?;
    let meta = MapMeta {
        model: model_to_config(model),
        b_axis: map.b_axis.clone(),
        f_axis: map.f_axis.clone(),
        normalization: map.normalization,
        provenance: map.provenance,
    };
    write_json(&out_dir.join("map.meta.json"), &meta)
}

#[derive(Serialize)]
struct PaReport {
    tolerance: f64,
    pa_points: Vec<PaPoint>,
    regimes: RegimeReport,
}

fn cmd_pa(doc: &ConfigDocument, model: &SystemModel, out_dir: &Path) -> Result<(), Failure> {
    let scan = require_scan(doc)?;
    let b = scan.b_grid()?;
    let points = pascan::find_pa_points(
        model,
        scan.b_min_t,
        scan.b_max_t,
        scan.pa_tolerance,
        PaScanOptions::default(),
    )?;
    let report = PaReport {
        tolerance: scan.pa_tolerance,
        pa_points: points,
        regimes: pascan::classify(model),
    };
    write_json(&out_dir.join("pa_report.json"), &report)?;

    let poles = spectra::track_branches(model, &b, SpectrumVariant::Poles)?;
    let zeros = spectra::track_branches(model, &b, SpectrumVariant::Zeros)?;
    let mut csv = String::from("b_t");
    for j in 0..model.dim() {
        csv.push_str(&format!(",pole{j}_re,pole{j}_im,zero{j}_re,zero{j}_im"));
    }
    csv.push('\n');
    for (k, bv) in b.iter().enumerate() {
        csv.push_str(&format!("{bv}"));
        for j in 0..model.dim() {
            csv.push_str(&format!(
                ",{},{},{},{}",
                poles[j][k].re, poles[j][k].im, zeros[j][k].re, zeros[j][k].im
            ));
        }
        csv.push('\n');
    }
    fs::write(out_dir.join("branches.csv"), csv)?;
    Ok(())
}

fn parse_free_params(
    fc: &FitConfig,
    model: &SystemModel,
) -> Result<(Vec<ParamId>, Vec<(f64, f64)>), Failure> {
    if fc.free_params.is_empty() {
        return Err(Failure::config("fit.free_params is empty"));
    }
    let mut ids = Vec::new();
    let mut bounds = Vec::new();
    for name in &fc.free_params {
        let id = ParamId::parse(name, model)?;
        let b = fc
            .bounds
            .get(name)
            .ok_or_else(|| Failure::config(format!("fit.bounds is missing an entry for '{name}'")))?;
        ids.push(id);
        bounds.push((b[0], b[1]));
    }
    Ok((ids, bounds))
}

#[derive(Serialize)]
struct ParamReport {
    name: String,
    value: f64,
    sigma: f64,
}

#[derive(Serialize)]
struct FitReport {
    converged: bool,
    iterations: usize,
    residual_rms: f64,
    covariance_reliable: bool,
    parameters: Vec<ParamReport>,
    covariance: Vec<Vec<f64>>,
    model: pa_core::config::ModelConfig,
}

fn fit_report(result: &FitResult) -> FitReport {
    let n = result.free.len();
    FitReport {
        converged: result.converged,
        iterations: result.iterations,
        residual_rms: result.residual_rms,
        covariance_reliable: result.covariance_reliable,
        parameters: result
            .free
            .iter()
            .zip(&result.values)
            .zip(&result.sigma)
            .map(|((id, &v), &s)| ParamReport {
                name: id.to_string(),
                value: v,
                sigma: s,
            })
            .collect(),
        covariance: (0..n)
            .map(|i| (0..n).map(|j| result.covariance[(i, j)]).collect())
            .collect(),
        model: model_to_config(&result.model),
    }
}

fn cmd_fit(doc: &ConfigDocument, model: &SystemModel, out_dir: &Path) -> Result<(), Failure> {
    let fc = doc
        .fit
        .as_ref()
        .ok_or_else(|| Failure::config("config needs a `fit` section for this subcommand"))?;
    let (ids, bounds) = parse_free_params(fc, model)?;
    let data = ingest_map(Path::new(&fc.data_path), fc.format, fc.normalization)?;
    let problem = FitProblem::new(data, model.clone(), ids, bounds, fc.loss)?;
    let result = if model.n_ensembles() > 1 {
        fit_seeded(&problem)?
    } else {
        fit(&problem)?
    };
    write_json(&out_dir.join("fit_report.json"), &fit_report(&result))?;

    let fitted = spectra::simulate_map(&result.model, &problem.data.b_axis, &problem.data.f_axis)?;
    fitted.write_long_csv_path(&out_dir.join("fitted_map.csv"))?;

    let mut csv = String::from("b_t,f_mhz,residual\n");
    for (fi, f) in problem.data.f_axis.iter().enumerate() {
        for (bj, b) in problem.data.b_axis.iter().enumerate() {
            let r = fitted.magnitude_at(fi, bj) - problem.data.magnitude_at(fi, bj);
            csv.push_str(&format!("{b},{f},{r}\n"));
        }
    }
    fs::write(out_dir.join("residual_map.csv"), csv)?;
    Ok(())
}

#[derive(Serialize)]
struct FomCut {
    f_mhz: f64,
    #[serde(flatten)]
    fom: FigureOfMerit,
}

#[derive(Serialize)]
struct FomReport {
    cuts: Vec<FomCut>,
}

fn cmd_fom(doc: &ConfigDocument, model: &SystemModel, out_dir: &Path) -> Result<(), Failure> {
    let scan = require_scan(doc)?;
    let cuts = scan
        .cut_f_mhz
        .as_ref()
        .filter(|c| !c.is_empty())
        .ok_or_else(|| Failure::config("fom needs scan.cut_f_mhz with at least one frequency"))?;
    let b = scan.b_grid()?;
    let mut report = FomReport { cuts: Vec::new() };
    for &f in cuts {
        let trace: Vec<(f64, f64)> = b
            .iter()
            .map(|&bv| (bv, s11_closed_form(model, f, bv).norm()))
            .collect();
        report.cuts.push(FomCut {
            f_mhz: f,
            fom: pascan::modulation_depth(&trace)?,
        });
    }
    write_json(&out_dir.join("fom_report.json"), &report)
}

pub use pa_core;
