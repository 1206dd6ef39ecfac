//! Experiment driver for k-ring self-backhauled mmWave networks.
//!
//! Every experiment reads an [`ExperimentConfig`], writes CSV files with a
//! one-line header into an output directory and returns a short summary.
//! Rates are in Mbps, SI and SNR in dB, distances in meters.

pub mod config;
pub mod experiments;
pub mod fit;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use config::{DeploymentConfig, Duplex, Experiment, ExperimentConfig};
pub use fit::{fit_decay, DecayFit};

/// Invalid configuration or input data.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Process exit status for an error: 2 for configuration problems, 3 for
/// infeasible instances, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<serde_json::Error>() || cause.is::<csv::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<kring_core::Error>() {
            return match e {
                kring_core::Error::Infeasible(_) => 3,
                kring_core::Error::Lp(_) => 1,
                _ => 2,
            };
        }
    }
    1
}

/// `error[<kind>]: <message>` on one line.
pub fn error_line(err: &anyhow::Error) -> String {
    let kind = match exit_code(err) {
        2 => "config",
        3 => "infeasible",
        _ => "runtime",
    };
    let msg = format!("{err:#}").replace(['\n', '\r'], " ");
    format!("error[{kind}]: {msg}")
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Runs one experiment and writes its outputs under `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    cfg.validate()?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut files = Vec::new();
    let mut emit = |name: &str| -> PathBuf {
        let p = out.join(name);
        files.push(p.clone());
        p
    };
    let params = &cfg.radio;
    let dep = || cfg.deployment.build(params, cfg.seed);
    let summary = match &cfg.experiment {
        Experiment::Analyze {
            duplex,
            soft_fraction,
            schedule,
        } => {
            let (row, report) = experiments::analyze(&dep()?, params, *duplex, *soft_fraction, *schedule, cfg.seed)?;
            write_csv(&emit("analyze.csv"), std::slice::from_ref(&row))?;
            fs::write(emit("report.json"), report.to_json()?)?;
            format!("gamma_mbps={} bottleneck_bs={}", row.gamma_mbps, row.bottleneck_bs)
        }
        Experiment::SweepK {
            k_min,
            k_max,
            ues_per_bs,
            offset_m,
            los,
            antennas,
        } => {
            let spec = experiments::SweepSpec {
                k_min: *k_min,
                k_max: *k_max,
                ues_per_bs: *ues_per_bs,
                offset_m: *offset_m,
                los: *los,
                antennas,
                spacing_m: cfg.deployment.spacing_m,
                association: cfg.deployment.association,
            };
            let rows = experiments::sweep_k(&spec, params, cfg.seed, cfg.exec)?;
            write_csv(&emit("sweep_k.csv"), &rows)?;
            let fits = if k_max - k_min >= 2 {
                experiments::fit_sweep(&rows)?
            } else {
                Vec::new()
            };
            write_csv(&emit("decay_fit.csv"), &fits)?;
            fits.iter()
                .map(|f| format!("beta[{}x{}]={:.4}", f.bs_antennas, f.ue_antennas, f.beta))
                .collect::<Vec<_>>()
                .join(" ")
        }
        Experiment::OabCompare { zetas } => {
            let rows = experiments::oab_compare(&dep()?, params, zetas)?;
            write_csv(&emit("oab_compare.csv"), &rows)?;
            format!("rows={}", rows.len())
        }
        Experiment::FullduplexSweep { si_db, soft_fraction } => {
            let rows = experiments::fullduplex_sweep(&dep()?, params, si_db, *soft_fraction, cfg.exec)?;
            write_csv(&emit("fullduplex_sweep.csv"), &rows)?;
            match experiments::crossover_si(&rows) {
                Some(si) => format!("crossover_si_db={si}"),
                None => "crossover_si_db=none".to_string(),
            }
        }
        Experiment::Dualconn { zeta } => {
            let (rows, s) = experiments::dualconn(&dep()?, params, *zeta)?;
            write_csv(&emit("dualconn.csv"), &rows)?;
            write_csv(&emit("dualconn_summary.csv"), std::slice::from_ref(&s))?;
            format!("load_variance={:.3} median_ratio={:.4}", s.load_variance, s.median_ratio)
        }
        Experiment::Oracle {
            schedules,
            interference,
        } => {
            let rows = experiments::oracle(&dep()?, params, *schedules, *interference, cfg.exec)?;
            write_csv(&emit("oracle.csv"), &rows)?;
            rows.iter()
                .map(|r| format!("{}{}={:.2}", r.scenario, if r.interference { "+int" } else { "" }, r.gamma_mbps))
                .collect::<Vec<_>>()
                .join(" ")
        }
        Experiment::Simulate { sim } => {
            let trace = experiments::simulate(&dep()?, params, sim)?;
            write_csv(&emit("sim_ues.csv"), &trace.ues)?;
            write_csv(&emit("sim_samples.csv"), &experiments::sample_rows(&trace))?;
            if sim.log_schedules {
                fs::write(emit("sim_schedules.json"), serde_json::to_string(&trace.schedules)?)?;
            }
            let mean = trace.e2e_rate_bps.iter().sum::<f64>() / trace.e2e_rate_bps.len().max(1) as f64;
            format!("mean_rate_mbps={:.3} rate_cv={:.4}", mean / 1e6, trace.rate_cv())
        }
    };
    Ok(Outcome { files, summary })
}

/// `fit-decay` on a CSV with `k` and `gamma_mbps` columns (other columns
/// ignored). Rows sharing an antenna configuration are fitted together when
/// those columns exist.
pub fn fit_decay_file(input: &Path, out: &Path) -> Result<Outcome> {
    #[derive(serde::Deserialize)]
    struct Point {
        k: u32,
        gamma_mbps: f64,
        bs_antennas: Option<u32>,
        ue_antennas: Option<u32>,
    }
    let pts: Vec<Point> = read_csv(input)?;
    let rows: Vec<experiments::SweepRow> = pts
        .into_iter()
        .map(|p| experiments::SweepRow {
            k: p.k,
            bs_antennas: p.bs_antennas.unwrap_or(0),
            ue_antennas: p.ue_antennas.unwrap_or(0),
            gamma_mbps: p.gamma_mbps,
        })
        .collect();
    let fits = experiments::fit_sweep(&rows)?;
    fs::create_dir_all(out)?;
    let path = out.join("decay_fit.csv");
    write_csv(&path, &fits)?;
    let summary = fits
        .iter()
        .map(|f| format!("alpha={:.4} beta={:.4} residual={:.3e}", f.alpha_mbps, f.beta, f.residual))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(Outcome {
        files: vec![path],
        summary,
    })
}
