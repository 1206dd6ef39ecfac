//! One function per experiment kind. Each returns plain rows; writing them is
//! left to [`crate::run`].

use serde::{Deserialize, Serialize};

use kring_core::analysis::{
    dual_connectivity_eval, maxmin_iab_fd, maxmin_iab_hd, maxmin_with_schedule, median, oab_equal_rate,
    oab_weighted, soft_maxmin, MaxMinReport, Network,
};
use kring_core::oracle::{
    all_schedule_rates, enumerate_schedules, solve_maxmin_lp, OracleProblem, ScheduleMode, TableRow,
};
use kring_core::radio::{InterferenceModel, RadioParams, RateTable, Scenario};
use kring_core::routing::nnhr_routes;
use kring_core::sim::{run_greedy_pf, SimConfig, SimTrace};
use kring_core::topology::{AssociationPolicy, Deployment, Placement, PlacementSpec};
use kring_core::{Error, Exec, Result};

use crate::config::Duplex;
use crate::fit::{fit_decay, DecayFit};

const MBPS: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeRow {
    pub k: u32,
    pub seed: u64,
    pub ues: usize,
    pub duplex: Duplex,
    pub gamma_mbps: f64,
    pub bottleneck_bs: usize,
    pub gamma_tx_mbps: Option<f64>,
    pub gamma_rx_mbps: Option<f64>,
}

/// UEs excluded by soft max-min: the `⌈fraction · U⌉` with the lowest access rates.
fn soft_excluded(access: &[f64], fraction: f64) -> Vec<usize> {
    let n_bad = (fraction * access.len() as f64 - 1e-9).ceil().max(0.0) as usize;
    let mut order: Vec<usize> = (0..access.len()).collect();
    order.sort_by(|&a, &b| access[a].total_cmp(&access[b]).then(a.cmp(&b)));
    order.truncate(n_bad);
    order.sort_unstable();
    order
}

fn half_duplex(net: &Network, dep: &Deployment, rates: &RateTable, soft: f64) -> Result<MaxMinReport> {
    if soft > 0.0 {
        soft_maxmin(net, &rates.access, rates.r1(), soft)
    } else {
        maxmin_iab_hd(net, dep, &rates.access, rates.r1())
    }
}

fn full_duplex(net: &Network, dep: &Deployment, rates: &RateTable, soft: f64) -> Result<MaxMinReport> {
    let excluded = soft_excluded(&rates.access, soft);
    let mut access = rates.access_fd.clone();
    for &u in &excluded {
        access[u] = f64::INFINITY;
    }
    let mut report = maxmin_iab_fd(net, dep, &access, rates.r1_fd())?;
    for &u in &excluded {
        report.per_ue_rate[u] = 0.0;
    }
    report.excluded_ues = excluded;
    Ok(report)
}

fn require_positive(report: &MaxMinReport) -> Result<()> {
    if report.gamma_star > 0.0 {
        Ok(())
    } else {
        Err(Error::Infeasible(format!(
            "max-min rate is zero, BS {} cannot serve its UEs",
            report.bottleneck_bs
        )))
    }
}

pub fn analyze(
    dep: &Deployment,
    params: &RadioParams,
    duplex: Duplex,
    soft: f64,
    schedule: bool,
    seed: u64,
) -> Result<(AnalyzeRow, MaxMinReport)> {
    let net = Network::nnhr(dep)?;
    let rates = RateTable::compute(dep, params)?;
    let report = match duplex {
        Duplex::Half if schedule && soft == 0.0 => maxmin_with_schedule(&net, dep, &rates.access, rates.r1())?,
        Duplex::Half => half_duplex(&net, dep, &rates, soft)?,
        Duplex::Full => full_duplex(&net, dep, &rates, soft)?,
    };
    require_positive(&report)?;
    let row = AnalyzeRow {
        k: dep.k,
        seed,
        ues: dep.ue_count(),
        duplex,
        gamma_mbps: report.gamma_star / MBPS,
        bottleneck_bs: report.bottleneck_bs,
        gamma_tx_mbps: report.gamma_tx.map(|g| g / MBPS),
        gamma_rx_mbps: report.gamma_rx.map(|g| g / MBPS),
    };
    Ok((row, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: u32,
    pub bs_antennas: u32,
    pub ue_antennas: u32,
    pub gamma_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub bs_antennas: u32,
    pub ue_antennas: u32,
    pub alpha_mbps: f64,
    pub beta: f64,
    pub residual: f64,
}

pub struct SweepSpec<'a> {
    pub k_min: u32,
    pub k_max: u32,
    pub ues_per_bs: usize,
    pub offset_m: Option<f64>,
    pub los: bool,
    pub antennas: &'a [[u32; 2]],
    pub spacing_m: f64,
    pub association: AssociationPolicy,
}

/// Max-min rate against `k` with the same UEs around every BS.
pub fn sweep_k(spec: &SweepSpec, params: &RadioParams, seed: u64, exec: Exec) -> Result<Vec<SweepRow>> {
    let points: Vec<([u32; 2], u32)> = spec
        .antennas
        .iter()
        .flat_map(|&a| (spec.k_min..=spec.k_max).map(move |k| (a, k)))
        .collect();
    let offset = spec.offset_m.unwrap_or(spec.spacing_m / 2.0);
    let rows = exec.map(&points, |&([bs, ue], k)| -> Result<SweepRow> {
        let params = RadioParams {
            bs_antennas: bs,
            ue_antennas: ue,
            ..params.clone()
        };
        let placement = PlacementSpec::new(Placement::UniformPerBs {
            n: spec.ues_per_bs,
            offset_m: offset,
            los: spec.los,
        });
        let dep = Deployment::build_kring(k, spec.spacing_m)?
            .place_ues(&placement, seed)?
            .associate(spec.association, &params)?;
        let (row, _) = analyze(&dep, &params, Duplex::Half, 0.0, false, seed)?;
        Ok(SweepRow {
            k,
            bs_antennas: bs,
            ue_antennas: ue,
            gamma_mbps: row.gamma_mbps,
        })
    });
    rows.into_iter().collect()
}

/// Fits `α/k^β` to each antenna configuration of a sweep.
pub fn fit_sweep(rows: &[SweepRow]) -> std::result::Result<Vec<FitRow>, crate::ConfigError> {
    let mut configs: Vec<(u32, u32)> = rows.iter().map(|r| (r.bs_antennas, r.ue_antennas)).collect();
    configs.sort_unstable();
    configs.dedup();
    configs
        .into_iter()
        .map(|(bs, ue)| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.bs_antennas == bs && r.ue_antennas == ue)
                .map(|r| (r.k as f64, r.gamma_mbps))
                .collect();
            let DecayFit { alpha, beta, residual } = fit_decay(&pts)?;
            Ok(FitRow {
                bs_antennas: bs,
                ue_antennas: ue,
                alpha_mbps: alpha,
                beta,
                residual,
            })
        })
        .collect()
}

/// One point of an empirical rate CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub scheme: String,
    pub zeta: Option<f64>,
    pub rate_mbps: f64,
    pub cdf: f64,
}

fn cdf_rows(scheme: &str, zeta: Option<f64>, rates: &[f64]) -> Vec<CdfRow> {
    let mut sorted: Vec<f64> = rates.iter().map(|r| r / MBPS).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, rate_mbps)| CdfRow {
            scheme: scheme.to_string(),
            zeta,
            rate_mbps,
            cdf: (i + 1) as f64 / n,
        })
        .collect()
}

/// Rate distributions of in-band and the two out-of-band schemes.
pub fn oab_compare(dep: &Deployment, params: &RadioParams, zetas: &[f64]) -> Result<Vec<CdfRow>> {
    let net = Network::nnhr(dep)?;
    let rates = RateTable::compute(dep, params)?;
    let iab = maxmin_iab_hd(&net, dep, &rates.access, rates.r1())?;
    let mut rows = cdf_rows("iab", None, &iab.per_ue_rate);
    let w = &net.loads.w;
    let mut zeta_star = None;
    for &z in zetas {
        let equal = oab_equal_rate(z, dep.k, rates.r1(), &rates.access, &net.serving, w)?;
        rows.extend(cdf_rows("oab_equal", Some(z), &equal));
        let weighted = oab_weighted(z, &net, &rates.access, rates.r1())?;
        rows.extend(cdf_rows("oab_weighted", Some(z), &weighted.per_ue_rate));
        zeta_star = Some(weighted.zeta_star);
    }
    if let Some(zs) = zeta_star.filter(|z| *z > 0.0 && *z < 1.0) {
        let best = oab_weighted(zs, &net, &rates.access, rates.r1())?;
        rows.extend(cdf_rows("oab_weighted_best", Some(zs), &best.per_ue_rate));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullDuplexRow {
    pub si_db: f64,
    pub gamma_fd_mbps: f64,
    pub gamma_hd_mbps: f64,
}

/// Full- against half-duplex max-min rate over a self-interference sweep.
pub fn fullduplex_sweep(
    dep: &Deployment,
    params: &RadioParams,
    si_db: &[f64],
    soft: f64,
    exec: Exec,
) -> Result<Vec<FullDuplexRow>> {
    let net = Network::nnhr(dep)?;
    let hd_rates = RateTable::compute(dep, params)?;
    let hd = half_duplex(&net, dep, &hd_rates, soft)?.gamma_star;
    let mut si: Vec<f64> = si_db.to_vec();
    si.sort_by(f64::total_cmp);
    exec.map(&si, |&s| {
        let p = RadioParams {
            self_interference_db: Some(s),
            ..params.clone()
        };
        let rates = RateTable::compute(dep, &p)?;
        // Self-interference can push the backhaul below the SE floor.
        let fd = if rates.r1_fd() > 0.0 {
            full_duplex(&net, dep, &rates, soft)?.gamma_star
        } else {
            0.0
        };
        Ok(FullDuplexRow {
            si_db: s,
            gamma_fd_mbps: fd / MBPS,
            gamma_hd_mbps: hd / MBPS,
        })
    })
    .into_iter()
    .collect()
}

/// Lowest swept SI at which full duplex no longer beats half duplex.
pub fn crossover_si(rows: &[FullDuplexRow]) -> Option<f64> {
    rows.iter().find(|r| r.gamma_fd_mbps <= r.gamma_hd_mbps).map(|r| r.si_db)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSummary {
    pub load_variance: f64,
    pub median_single_mbps: f64,
    pub median_dual_mbps: f64,
    pub median_ratio: f64,
}

pub fn dualconn(dep: &Deployment, params: &RadioParams, zeta: f64) -> Result<(Vec<CdfRow>, DualSummary)> {
    let dc = dual_connectivity_eval(dep, params, zeta)?;
    let mut rows = cdf_rows("single", Some(zeta), &dc.r_single);
    rows.extend(cdf_rows("dual", Some(zeta), &dc.r_dual));
    let summary = DualSummary {
        load_variance: dep.load_profile()?.variance(),
        median_single_mbps: median(&mut dc.r_single.clone()) / MBPS,
        median_dual_mbps: median(&mut dc.r_dual.clone()) / MBPS,
        median_ratio: median(&mut dc.r_dual.clone()) / median(&mut dc.r_single.clone()),
    };
    Ok((rows, summary))
}

/// LP max-min rates for optimal nearest-neighbour and highway routing, each
/// with and without interference.
pub fn oracle(
    dep: &Deployment,
    params: &RadioParams,
    mode: ScheduleMode,
    scenario: Scenario,
    exec: Exec,
) -> Result<Vec<TableRow>> {
    let model = InterferenceModel::new(scenario, dep.spacing_m);
    let mut rows = Vec::new();
    for (name, problem) in [
        ("optimal_nnr", OracleProblem::nnr(dep)?),
        ("nnhr", OracleProblem::fixed(dep, &nnhr_routes(dep)?)?),
    ] {
        let schedules = enumerate_schedules(&problem.links, mode)?;
        for interference in [true, false] {
            let m = interference.then_some(&model);
            let rates = all_schedule_rates(dep, params, &problem.links, &schedules, m, exec)?;
            let exact = matches!(mode, ScheduleMode::Exhaustive) && !interference;
            let sol = solve_maxmin_lp(&problem, &schedules, &rates, exact)?;
            rows.push(sol.row(name, interference));
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub slot: usize,
    pub link: usize,
    pub flow: usize,
    pub snr_db: f64,
    pub sinr_db: f64,
    pub rate_mbps: f64,
}

pub fn simulate(dep: &Deployment, params: &RadioParams, sim: &SimConfig) -> Result<SimTrace> {
    run_greedy_pf(dep, &nnhr_routes(dep)?, params, sim)
}

pub fn sample_rows(trace: &SimTrace) -> Vec<SampleRow> {
    trace
        .samples
        .iter()
        .map(|s| SampleRow {
            slot: s.slot,
            link: s.link,
            flow: s.flow,
            snr_db: s.snr_db,
            sinr_db: s.sinr_db,
            rate_mbps: s.rate_bps / MBPS,
        })
        .collect()
}
