//! Closed-form max-min rate engines and the hierarchical (ring-by-ring) scheduler.
//!
//! Everything here works on per-BS busy times: the fraction of the frame a BS
//! must be active (transmitting or receiving) to give every UE the common
//! rate `γ`. With half duplex that is, for BS `i`,
//!
//! ```text
//! c_i γ = γ ( Σ_{u at i} 1/R_a,u  +  (f(i) − w_i)/R_1  +  1{i≠0} f(i)/R_1 )
//! ```
//!
//! and `γ* = 1 / max_i c_i`.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::radio::RadioParams;
use crate::routing::{
    effective_loads, nnhr_routes, validate_routes, EffectiveLoads, RouteTable, ViolationKind,
};
use crate::topology::{Deployment, Direction, GridCoord};

/// Relative slack allowed on busy times and rate targets.
pub const TOL: f64 = 1e-9;

/// Everything the closed forms need about an associated, routed deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub serving: Vec<usize>,
    pub direction: Vec<Direction>,
    pub routes: Vec<Vec<usize>>,
    pub parent: Vec<Option<usize>>,
    pub loads: EffectiveLoads,
}

impl Network {
    pub fn new(dep: &Deployment, rt: &RouteTable) -> Result<Self> {
        Ok(Self {
            serving: dep.serving()?,
            direction: dep.ues.iter().map(|u| u.direction).collect(),
            routes: rt.routes.clone(),
            parent: rt.parent.clone(),
            loads: effective_loads(rt, dep)?,
        })
    }

    /// Network under nearest-neighbour highway routing.
    pub fn nnhr(dep: &Deployment) -> Result<Self> {
        Self::new(dep, &nnhr_routes(dep)?)
    }

    pub fn bs_count(&self) -> usize {
        self.loads.f.len()
    }

    pub fn ue_count(&self) -> usize {
        self.serving.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxMinReport {
    pub gamma_star: f64,
    pub bottleneck_bs: usize,
    pub busy_time: Vec<f64>,
    pub per_ue_rate: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_tx: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_rx: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded_ues: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<LinkActivation>,
}

/// Flat sweep-output row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub gamma_bps: f64,
    pub bottleneck: usize,
    pub k: u32,
    pub seed: u64,
    pub scenario: String,
}

impl MaxMinReport {
    pub fn row(&self, k: u32, seed: u64, scenario: &str) -> ReportRow {
        ReportRow {
            gamma_bps: self.gamma_star,
            bottleneck: self.bottleneck_bs,
            k,
            seed,
            scenario: scenario.to_string(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_rates(access: &[f64], n_ues: usize, r1: f64) -> Result<()> {
    if access.len() != n_ues {
        return param(format!(
            "{} access rates given for {} UEs",
            access.len(),
            n_ues
        ));
    }
    if !(r1 > 0.0 && r1.is_finite()) {
        return param(format!("backhaul rate must be positive, got {r1}"));
    }
    if access.iter().any(|r| r.is_nan() || *r < 0.0) {
        return param("access rates must be non-negative");
    }
    Ok(())
}

/// Per-BS half-duplex busy-time coefficients `c_i`. `inv_access[u]` is
/// `1/R_a,u` (0 for pseudo UEs, infinite for dead links).
pub fn hd_coefficients(net: &Network, inv_access: &[f64], r1: f64) -> Vec<f64> {
    let l = &net.loads;
    let mut c: Vec<f64> = (0..net.bs_count())
        .map(|i| {
            let relay = (l.f[i] - l.w[i]) as f64 / r1;
            let listen = if i == 0 { 0.0 } else { l.f[i] as f64 / r1 };
            relay + listen
        })
        .collect();
    for (u, &b) in net.serving.iter().enumerate() {
        c[b] += inv_access[u];
    }
    c
}

/// Lowest index attaining the maximum, up to rounding.
fn argmax(v: &[f64]) -> usize {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.iter()
        .position(|&x| x == max || (max.is_finite() && x >= max - 1e-12 * max.abs()))
        .unwrap_or(0)
}

fn report_from_coefficients(c: Vec<f64>, n_ues: usize, excluded: Vec<usize>) -> MaxMinReport {
    let bottleneck = argmax(&c);
    let cmax = c[bottleneck];
    let (gamma, diagnostic) = if cmax.is_infinite() {
        (0.0, Some(format!("a UE served by BS {bottleneck} has zero access rate")))
    } else if cmax <= 0.0 {
        (f64::INFINITY, Some("no traffic in the network".to_string()))
    } else {
        (1.0 / cmax, None)
    };
    let busy_time = c
        .iter()
        .map(|&ci| {
            if gamma.is_finite() && ci.is_finite() {
                ci * gamma
            } else if ci > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let mut per_ue_rate = vec![gamma; n_ues];
    for &u in &excluded {
        per_ue_rate[u] = 0.0;
    }
    MaxMinReport {
        gamma_star: gamma,
        bottleneck_bs: bottleneck,
        busy_time,
        per_ue_rate,
        gamma_tx: None,
        gamma_rx: None,
        excluded_ues: excluded,
        diagnostic,
        schedule: None,
    }
}

fn inverse(r: f64) -> f64 {
    if r > 0.0 {
        1.0 / r
    } else {
        f64::INFINITY
    }
}

/// Checks that routes form a nearest-neighbour tree rooted at the MBS.
fn require_unique_parent_nn(net: &Network, dep: &Deployment) -> Result<()> {
    let rt = RouteTable {
        parent: net.parent.clone(),
        routes: net.routes.clone(),
    };
    if let Some(v) = validate_routes(&rt, dep).into_iter().next() {
        return Err(Error::Route(v.to_string()));
    }
    Ok(())
}

/// Half-duplex max-min rate for unique-parent nearest-neighbour routing.
pub fn maxmin_iab_hd(net: &Network, dep: &Deployment, access: &[f64], r1: f64) -> Result<MaxMinReport> {
    require_unique_parent_nn(net, dep)?;
    check_rates(access, net.ue_count(), r1)?;
    let inv: Vec<f64> = access.iter().map(|&r| inverse(r)).collect();
    Ok(report_from_coefficients(
        hd_coefficients(net, &inv, r1),
        net.ue_count(),
        Vec::new(),
    ))
}

/// Same busy-time bound for any static routing. Every backhaul hop is charged
/// at `R_1`, so the value is an upper bound, not necessarily achievable.
pub fn maxmin_upper_bound_general(net: &Network, access: &[f64], r1: f64) -> Result<f64> {
    check_rates(access, net.ue_count(), r1)?;
    let inv: Vec<f64> = access.iter().map(|&r| inverse(r)).collect();
    Ok(report_from_coefficients(hd_coefficients(net, &inv, r1), net.ue_count(), Vec::new()).gamma_star)
}

/// Full-duplex transmit and receive busy-time coefficients.
pub fn fd_coefficients(net: &Network, access_fd: &[f64], r1_fd: f64) -> (Vec<f64>, Vec<f64>) {
    let l = &net.loads;
    let n = net.bs_count();
    let mut tx = vec![0.0; n];
    let mut rx = vec![0.0; n];
    for i in 0..n {
        if i == 0 {
            tx[i] = (l.f_dl[0] - l.w_dl[0]) as f64 / r1_fd;
            rx[i] = (l.f_ul[0] - l.w_ul[0]) as f64 / r1_fd;
        } else {
            tx[i] = (l.f[i] - l.w_dl[i]) as f64 / r1_fd;
            rx[i] = (l.f[i] - l.w_ul[i]) as f64 / r1_fd;
        }
    }
    for (u, &b) in net.serving.iter().enumerate() {
        match net.direction[u] {
            Direction::Downlink => tx[b] += inverse(access_fd[u]),
            Direction::Uplink => rx[b] += inverse(access_fd[u]),
        }
    }
    (tx, rx)
}

/// Full-duplex max-min rate: `γ* = min(γ_tx, γ_rx)`.
pub fn maxmin_iab_fd(net: &Network, dep: &Deployment, access_fd: &[f64], r1_fd: f64) -> Result<MaxMinReport> {
    require_unique_parent_nn(net, dep)?;
    check_rates(access_fd, net.ue_count(), r1_fd)?;
    let (tx, rx) = fd_coefficients(net, access_fd, r1_fd);
    let gamma_of = |c: &[f64]| {
        let m = c.iter().copied().fold(0.0, f64::max);
        if m > 0.0 {
            1.0 / m
        } else {
            f64::INFINITY
        }
    };
    let (gamma_tx, gamma_rx) = (gamma_of(&tx), gamma_of(&rx));
    let worst: Vec<f64> = tx.iter().zip(&rx).map(|(a, b)| a.max(*b)).collect();
    let mut report = report_from_coefficients(worst, net.ue_count(), Vec::new());
    report.gamma_tx = Some(gamma_tx);
    report.gamma_rx = Some(gamma_rx);
    Ok(report)
}

/// Optimal max-min rate under the uniform-load conditions.
pub fn maxmin_uniform(w00: usize, f00: usize, ra: f64, r1: f64) -> Result<f64> {
    if !(ra > 0.0 && r1 > 0.0) {
        return param("rates must be positive");
    }
    if f00 < w00 {
        return param(format!("f00 = {f00} is smaller than w00 = {w00}"));
    }
    let t = w00 as f64 / ra + (f00 - w00) as f64 / r1;
    Ok(if t > 0.0 { 1.0 / t } else { f64::INFINITY })
}

/// Ways in which a deployment breaks the conditions under which
/// [`maxmin_uniform`] is exact rather than an upper bound.
pub fn uniform_condition_warnings(dep: &Deployment) -> Result<Vec<String>> {
    let w = dep.load_profile()?.w;
    let mut out = Vec::new();
    for b in &dep.bs {
        if w[b.index] > w[0] {
            out.push(format!("BS {} has more UEs ({}) than the MBS ({})", b.index, w[b.index], w[0]));
        }
        let mirror = dep.index_of(GridCoord::new(-b.coord.i, -b.coord.j)).expect("k-ring is symmetric");
        if b.index < mirror && w[b.index] != w[mirror] {
            out.push(format!(
                "BS {} and its mirror BS {} carry {} and {} UEs",
                b.index, mirror, w[b.index], w[mirror]
            ));
        }
    }
    Ok(out)
}

/// Max-min rate of a `k`-ring with `w` UEs at every BS.
pub fn uniform_rate(w: usize, k: u32, ra: f64, r1: f64) -> f64 {
    let k = k as f64;
    let w = w as f64;
    1.0 / (w / ra + w * 2.0 * k * (k + 1.0) / r1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "k", rename_all = "snake_case")]
pub enum MaxRings {
    Feasible(u32),
    /// The target is not met even by the MBS alone.
    Infeasible,
}

/// Largest `k` for which `w` UEs per BS still get `gamma_target` each.
pub fn max_rings(w: usize, gamma_target: f64, ra: f64, r1: f64) -> Result<MaxRings> {
    if w == 0 || !(gamma_target > 0.0 && ra > 0.0 && r1 > 0.0) {
        return param("max_rings needs w >= 1 and positive rates");
    }
    let slack = 1.0 / (w as f64 * gamma_target) - 1.0 / ra;
    if slack < -TOL / ra {
        return Ok(MaxRings::Infeasible);
    }
    let bound = ((1.0 + 2.0 * r1 * slack.max(0.0)).sqrt() - 1.0) / 2.0;
    let mut k = bound.floor().clamp(0.0, u32::MAX as f64 - 1.0) as u32;
    let meets = |k: u32| uniform_rate(w, k, ra, r1) >= gamma_target * (1.0 - TOL);
    while k > 0 && !meets(k) {
        k -= 1;
    }
    while meets(k + 1) {
        k += 1;
    }
    Ok(MaxRings::Feasible(k))
}

fn check_zeta(zeta: f64) -> Result<()> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return param(format!("zeta must lie in (0, 1), got {zeta}"));
    }
    Ok(())
}

/// Per-UE rates when every relay gets the same backhaul share, with a fraction
/// `zeta` of resources reserved for access.
pub fn oab_equal_rate(zeta: f64, k: u32, r1: f64, access: &[f64], serving: &[usize], w: &[usize]) -> Result<Vec<f64>> {
    check_zeta(zeta)?;
    let relays = 2.0 * k as f64 * (k as f64 + 1.0);
    let backhaul = (1.0 - zeta) * r1 / relays;
    Ok(access
        .iter()
        .zip(serving)
        .map(|(&ra, &b)| (zeta * ra).min(backhaul) / w[b] as f64)
        .collect())
}

pub fn mean_access(access: &[f64]) -> f64 {
    if access.is_empty() {
        0.0
    } else {
        access.iter().sum::<f64>() / access.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OabWeighted {
    pub per_ue_rate: Vec<f64>,
    pub min_rate: f64,
    pub zeta_star: f64,
    pub min_rate_at_zeta_star: f64,
}

/// Backhaul time units per unit of common rate at the busiest BS of the
/// out-of-band backhaul network.
fn oab_backhaul_units(loads: &EffectiveLoads) -> f64 {
    let mut units = (loads.f[0] - loads.w[0]) as f64;
    for i in 1..loads.f.len() {
        units = units.max((2 * loads.f[i]).saturating_sub(loads.w[i]) as f64);
    }
    units
}

/// Per-UE rates when backhaul is shared in proportion to relay loads, plus the
/// split `zeta_star` that maximises the minimum rate.
pub fn oab_weighted(zeta: f64, net: &Network, access: &[f64], r1: f64) -> Result<OabWeighted> {
    check_zeta(zeta)?;
    check_rates(access, net.ue_count(), r1)?;
    let units = oab_backhaul_units(&net.loads);
    let per_unit = if units > 0.0 { r1 / units } else { f64::INFINITY };
    let eval = |z: f64| -> Vec<f64> {
        let backhaul = if per_unit.is_finite() {
            (1.0 - z) * per_unit
        } else {
            f64::INFINITY
        };
        access
            .iter()
            .zip(&net.serving)
            .map(|(&ra, &b)| (z * ra / net.loads.w[b] as f64).min(backhaul))
            .collect()
    };
    let min_of = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let per_ue_rate = eval(zeta);
    let access_min = access
        .iter()
        .zip(&net.serving)
        .map(|(&ra, &b)| ra / net.loads.w[b] as f64)
        .fold(f64::INFINITY, f64::min);
    let zeta_star = if per_unit.is_finite() {
        per_unit / (access_min + per_unit)
    } else {
        1.0
    };
    Ok(OabWeighted {
        min_rate: min_of(&per_ue_rate),
        per_ue_rate,
        zeta_star,
        min_rate_at_zeta_star: min_of(&eval(zeta_star)),
    })
}

/// Max-min rate after replacing the `⌈bad_fraction · U⌉` UEs with the lowest
/// access rates by pseudo UEs whose access time is free. They still count in
/// the backhaul loads and are reported with rate 0.
pub fn soft_maxmin(net: &Network, access: &[f64], r1: f64, bad_fraction: f64) -> Result<MaxMinReport> {
    if !(0.0..1.0).contains(&bad_fraction) {
        return param(format!("bad fraction must lie in [0, 1), got {bad_fraction}"));
    }
    check_rates(access, net.ue_count(), r1)?;
    let n_bad = (bad_fraction * net.ue_count() as f64 - 1e-9).ceil().max(0.0) as usize;
    let mut order: Vec<usize> = (0..net.ue_count()).collect();
    order.sort_by(|&a, &b| access[a].total_cmp(&access[b]).then(a.cmp(&b)));
    let mut excluded: Vec<usize> = order[..n_bad].to_vec();
    excluded.sort_unstable();
    let mut inv: Vec<f64> = access.iter().map(|&r| inverse(r)).collect();
    for &u in &excluded {
        inv[u] = 0.0;
    }
    Ok(report_from_coefficients(
        hd_coefficients(net, &inv, r1),
        net.ue_count(),
        excluded,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualConnectivity {
    pub r_single: Vec<f64>,
    pub r_dual: Vec<f64>,
    /// Second BS per UE; `None` when only one BS is reachable.
    pub second_bs: Vec<Option<usize>>,
    /// Loads counting every UE at both of its BSs.
    pub w_dual: Vec<usize>,
}

impl DualConnectivity {
    pub fn median_ratio(&self) -> f64 {
        let mut r: Vec<f64> = self
            .r_dual
            .iter()
            .zip(&self.r_single)
            .filter(|(_, s)| **s > 0.0)
            .map(|(d, s)| d / s)
            .collect();
        median(&mut r)
    }
}

pub fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Compares single and dual connectivity under equal-rate out-of-band backhaul.
/// Each UE keeps its serving BS and adds the reachable same-street BS with the
/// least path loss.
pub fn dual_connectivity_eval(dep: &Deployment, params: &RadioParams, zeta: f64) -> Result<DualConnectivity> {
    check_zeta(zeta)?;
    let serving = dep.serving()?;
    let w = dep.load_profile()?.w;
    let r1 = params.backhaul_rate(dep.spacing_m, 1)?;
    let relays = 2.0 * dep.k as f64 * (dep.k as f64 + 1.0);
    let backhaul = (1.0 - zeta) * r1 / relays;
    let mut links = Vec::with_capacity(dep.ue_count());
    let mut second_bs = Vec::with_capacity(dep.ue_count());
    let mut w_dual = w.clone();
    for (ue, &b1) in dep.ues.iter().zip(&serving) {
        let rate_to = |b: usize| -> Result<f64> {
            let d = dep.bs_position(b).distance(ue.position);
            params.access_rate(d, ue.is_los_to(b), ue.direction)
        };
        let mut best: Option<(f64, usize)> = None;
        for b in dep.same_street_bs(ue.position) {
            if b == b1 || rate_to(b)? <= 0.0 {
                continue;
            }
            let d = dep.bs_position(b).distance(ue.position);
            let g = params.path_gain(d, ue.is_los_to(b));
            if best.is_none_or(|(bg, _)| g > bg) {
                best = Some((g, b));
            }
        }
        let b2 = best.map(|(_, b)| b);
        if let Some(b) = b2 {
            w_dual[b] += 1;
        }
        links.push((rate_to(b1)?, b2.map(rate_to).transpose()?));
        second_bs.push(b2);
    }
    let mut r_single = Vec::with_capacity(links.len());
    let mut r_dual = Vec::with_capacity(links.len());
    for ((ra1, ra2), (&b1, &b2)) in links.iter().zip(serving.iter().zip(&second_bs)) {
        let single = (zeta * ra1).min(backhaul) / w[b1] as f64;
        r_single.push(single);
        r_dual.push(match (ra2, b2) {
            (Some(ra2), Some(b2)) => {
                (zeta * ra1).min(backhaul) / w_dual[b1] as f64 + (zeta * ra2).min(backhaul) / w_dual[b2] as f64
            }
            _ => single,
        });
    }
    Ok(DualConnectivity {
        r_single,
        r_dual,
        second_bs,
        w_dual,
    })
}

/// Endpoint of a scheduled link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "index", rename_all = "snake_case")]
pub enum Node {
    Bs(usize),
    Ue(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledLink {
    /// BS side: the parent BS of a backhaul link, the serving BS of an access link.
    pub bs: usize,
    pub peer: Node,
    pub rate: f64,
    /// `(ue, τ)`: fraction of the frame spent on this link for that UE.
    pub tau: Vec<(usize, f64)>,
    /// Disjoint `[start, end)` pieces of the unit frame during which the link is active.
    pub intervals: Vec<[f64; 2]>,
}

impl ScheduledLink {
    pub fn total_time(&self) -> f64 {
        self.tau.iter().map(|(_, t)| t).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkActivation {
    pub gamma: f64,
    pub links: Vec<ScheduledLink>,
    pub bs_busy: Vec<f64>,
}

impl LinkActivation {
    /// Long-term e2e rate of every UE: its worst hop.
    pub fn ue_rates(&self, n_ues: usize) -> Vec<f64> {
        let mut r = vec![f64::INFINITY; n_ues];
        for l in &self.links {
            for &(u, t) in &l.tau {
                r[u] = r[u].min(t * l.rate);
            }
        }
        r.iter().map(|&x| if x.is_finite() { x } else { 0.0 }).collect()
    }
}

/// Takes `len` units of time from the gaps of `busy` (sorted, disjoint), in
/// frame order, marks them busy and returns them.
fn take_free(busy: &mut Vec<[f64; 2]>, len: f64) -> Option<Vec<[f64; 2]>> {
    let mut out = Vec::new();
    let mut left = len;
    let mut t = 0.0;
    let mut idx = 0;
    while left > TOL * 1e-3 {
        let gap_end = busy.get(idx).map_or(1.0, |iv| iv[0]);
        if gap_end > t {
            let take = left.min(gap_end - t);
            out.push([t, t + take]);
            left -= take;
            t += take;
            if left <= TOL * 1e-3 {
                break;
            }
        }
        match busy.get(idx) {
            Some(iv) => {
                t = t.max(iv[1]);
                idx += 1;
            }
            None => {
                if left > TOL {
                    return None;
                }
                break;
            }
        }
    }
    busy.extend(out.iter().copied());
    busy.sort_by(|a, b| a[0].total_cmp(&b[0]));
    Some(out)
}

/// Hierarchical schedule achieving common rate `gamma`: every BS, starting at
/// the MBS and moving down the routing tree, reserves `γ/R_a` per attached UE
/// for access and `f(c)γ/R_1` for each child `c`, split equally among the
/// `f(c)` UEs carried. A relay's listening time is fixed by its parent; it
/// fits its own links around it.
pub fn synthesize_schedule(net: &Network, access: &[f64], r1: f64, gamma: f64) -> Result<LinkActivation> {
    check_rates(access, net.ue_count(), r1)?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return param(format!("gamma must be finite and non-negative, got {gamma}"));
    }
    let n = net.bs_count();
    let inv: Vec<f64> = access.iter().map(|&r| inverse(r)).collect();
    let busy: Vec<f64> = hd_coefficients(net, &inv, r1).iter().map(|c| c * gamma).collect();
    if let Some(i) = busy.iter().position(|&b| !(b <= 1.0 + TOL)) {
        return Err(Error::Infeasible(format!(
            "BS {i} would be busy {:.12} of the frame at rate {gamma}",
            busy[i]
        )));
    }

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut carried: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (u, route) in net.routes.iter().enumerate() {
        for &b in route.iter().skip(1) {
            if !carried[b].contains(&u) {
                carried[b].push(u);
            }
        }
    }
    for c in 1..n {
        if carried[c].is_empty() {
            continue;
        }
        match net.parent[c] {
            Some(p) => children[p].push(c),
            None => {
                return Err(Error::Route(format!("BS {c} carries traffic but has no unique parent")));
            }
        }
    }

    let mut timeline: Vec<Vec<[f64; 2]>> = vec![Vec::new(); n];
    let mut links = Vec::new();
    let mut queue = std::collections::VecDeque::from([0usize]);
    let mut by_bs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (u, &b) in net.serving.iter().enumerate() {
        by_bs[b].push(u);
    }
    let overflow = |b: usize| Error::Infeasible(format!("BS {b} ran out of frame time"));
    while let Some(b) = queue.pop_front() {
        for &u in &by_bs[b] {
            let t = gamma * inv[u];
            let iv = take_free(&mut timeline[b], t).ok_or_else(|| overflow(b))?;
            links.push(ScheduledLink {
                bs: b,
                peer: Node::Ue(u),
                rate: access[u],
                tau: vec![(u, t)],
                intervals: iv,
            });
        }
        for &c in &children[b] {
            let per_ue = gamma / r1;
            let t = per_ue * carried[c].len() as f64;
            let iv = take_free(&mut timeline[b], t).ok_or_else(|| overflow(b))?;
            timeline[c] = iv.clone();
            links.push(ScheduledLink {
                bs: b,
                peer: Node::Bs(c),
                rate: r1,
                tau: carried[c].iter().map(|&u| (u, per_ue)).collect(),
                intervals: iv,
            });
            queue.push_back(c);
        }
    }
    Ok(LinkActivation {
        gamma,
        links,
        bs_busy: busy,
    })
}

/// Max-min report with the hierarchical schedule attached.
pub fn maxmin_with_schedule(net: &Network, dep: &Deployment, access: &[f64], r1: f64) -> Result<MaxMinReport> {
    let mut report = maxmin_iab_hd(net, dep, access, r1)?;
    if report.gamma_star.is_finite() && report.gamma_star > 0.0 {
        report.schedule = Some(synthesize_schedule(net, access, r1, report.gamma_star)?);
    }
    Ok(report)
}

/// Whether a route table follows nearest-neighbour hops only.
pub fn is_nearest_neighbour(rt: &RouteTable, dep: &Deployment) -> bool {
    validate_routes(rt, dep)
        .iter()
        .all(|v| !matches!(v.kind, ViolationKind::NonNearestHop { .. }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{AssociationPolicy, Placement, PlacementSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const G: f64 = 1e9;

    fn uniform(k: u32, n: usize) -> Deployment {
        counts(k, vec![n; crate::topology::bs_count(k)])
    }

    fn counts(k: u32, c: Vec<usize>) -> Deployment {
        Deployment::build_kring(k, 200.0)
            .unwrap()
            .place_ues(
                &PlacementSpec::new(Placement::PerBs {
                    counts: c,
                    offset_m: 50.0,
                    los: true,
                }),
                0,
            )
            .unwrap()
            .associate(AssociationPolicy::Nearest, &RadioParams::default())
            .unwrap()
    }

    #[test]
    fn k1_two_per_bs() {
        let d = uniform(1, 2);
        let net = Network::nnhr(&d).unwrap();
        let r = maxmin_iab_hd(&net, &d, &vec![8.0 * G; d.ue_count()], 8.0 * G).unwrap();
        assert_relative_eq!(r.gamma_star, 0.8 * G, max_relative = 1e-12);
        assert_eq!(r.bottleneck_bs, 0);
        assert_relative_eq!(r.busy_time[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(
            maxmin_uniform(2, 10, 8.0 * G, 8.0 * G).unwrap(),
            0.8 * G,
            max_relative = 1e-12
        );
    }

    #[test]
    fn single_ue_at_mbs() {
        let mut c = vec![0; 5];
        c[0] = 1;
        let d = counts(1, c);
        let net = Network::nnhr(&d).unwrap();
        let r = maxmin_iab_hd(&net, &d, &[3.0 * G], 8.0 * G).unwrap();
        assert_relative_eq!(r.gamma_star, 3.0 * G, max_relative = 1e-12);
        let s = synthesize_schedule(&net, &[3.0 * G], 8.0 * G, r.gamma_star).unwrap();
        assert_eq!(s.links.len(), 1);
        assert_relative_eq!(s.links[0].total_time(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn heavy_relay_is_bottleneck() {
        // Ring-1 relay on +x carries 6 UEs of its own plus ring-2 (2,0).
        let mut c = vec![0; 13];
        let d0 = Deployment::build_kring(2, 200.0).unwrap();
        let i10 = d0.index_of(GridCoord::new(1, 0)).unwrap();
        let i20 = d0.index_of(GridCoord::new(2, 0)).unwrap();
        c[i10] = 6;
        c[i20] = 3;
        let d = counts(2, c);
        let net = Network::nnhr(&d).unwrap();
        let (ra, r1) = (8.0 * G, 8.0 * G);
        let r = maxmin_iab_hd(&net, &d, &vec![ra; d.ue_count()], r1).unwrap();
        assert_eq!(r.bottleneck_bs, i10);
        // Brute force: busy-time inequalities per BS.
        let mbs = 9.0 / r1;
        let relay = 6.0 / ra + 3.0 / r1 + 9.0 / r1;
        let leaf = 3.0 / ra + 3.0 / r1;
        assert_relative_eq!(r.gamma_star, 1.0 / mbs.max(relay).max(leaf), max_relative = 1e-12);
    }

    #[test]
    fn zero_access_rate_gives_zero() {
        let d = uniform(1, 1);
        let net = Network::nnhr(&d).unwrap();
        let mut a = vec![8.0 * G; 5];
        a[3] = 0.0;
        let r = maxmin_iab_hd(&net, &d, &a, 8.0 * G).unwrap();
        assert_eq!(r.gamma_star, 0.0);
        assert!(r.diagnostic.is_some());
        let soft = soft_maxmin(&net, &a, 8.0 * G, 0.2).unwrap();
        assert!(soft.gamma_star > 0.0);
        assert_eq!(soft.excluded_ues, vec![3]);
        let none = soft_maxmin(&net, &vec![8.0 * G; 5], 8.0 * G, 0.0).unwrap();
        assert_eq!(none.gamma_star, maxmin_iab_hd(&net, &d, &vec![8.0 * G; 5], 8.0 * G).unwrap().gamma_star);
    }

    #[test]
    fn general_bound_matches_nnhr_and_drops_with_load() {
        let d = uniform(2, 1);
        let net = Network::nnhr(&d).unwrap();
        let a = vec![5.0 * G; d.ue_count()];
        let hd = maxmin_iab_hd(&net, &d, &a, 8.0 * G).unwrap().gamma_star;
        assert_eq!(maxmin_upper_bound_general(&net, &a, 8.0 * G).unwrap(), hd);
        // Route every ring-2 UE through (1,0).
        let i10 = d.index_of(GridCoord::new(1, 0)).unwrap();
        let routes: Vec<Vec<usize>> = net
            .routes
            .iter()
            .map(|r| if r.len() == 3 { vec![0, i10, r[2]] } else { r.clone() })
            .collect();
        let rt = RouteTable::from_routes(d.bs_count(), routes).unwrap();
        let worse = Network::new(&d, &rt).unwrap();
        assert!(maxmin_upper_bound_general(&worse, &a, 8.0 * G).unwrap() < hd);
    }

    #[test]
    fn hd_requires_unique_parents() {
        let d = uniform(1, 1);
        let i1 = d.index_of(GridCoord::new(1, 0)).unwrap();
        let i2 = d.index_of(GridCoord::new(0, 1)).unwrap();
        let mut routes = nnhr_routes(&d).unwrap().routes;
        let u = d.ues.iter().position(|x| x.serving_bs == Some(i2)).unwrap();
        routes[u] = vec![0, i1, i2];
        let rt = RouteTable::from_routes(d.bs_count(), routes).unwrap();
        let net = Network::new(&d, &rt).unwrap();
        assert!(maxmin_iab_hd(&net, &d, &[G; 5], G).is_err());
    }

    #[test]
    fn fd_all_dl_beats_hd_without_self_interference() {
        let d = uniform(2, 2);
        let net = Network::nnhr(&d).unwrap();
        let a = vec![8.0 * G; d.ue_count()];
        let hd = maxmin_iab_hd(&net, &d, &a, 8.0 * G).unwrap();
        let fd = maxmin_iab_fd(&net, &d, &a, 8.0 * G).unwrap();
        let l = &net.loads;
        let expect = 1.0 / (l.w_dl[0] as f64 / (8.0 * G) + (l.f_dl[0] - l.w_dl[0]) as f64 / (8.0 * G));
        assert_relative_eq!(fd.gamma_tx.unwrap(), expect, max_relative = 1e-12);
        assert!(fd.gamma_star >= hd.gamma_star * (1.0 - 1e-12));
        // With a relay bottleneck the listening time disappears and FD wins.
        let mut c = vec![0; 13];
        c[d.index_of(GridCoord::new(1, 0)).unwrap()] = 6;
        c[d.index_of(GridCoord::new(2, 0)).unwrap()] = 3;
        let d = counts(2, c);
        let net = Network::nnhr(&d).unwrap();
        let a = vec![8.0 * G; d.ue_count()];
        let hd = maxmin_iab_hd(&net, &d, &a, 8.0 * G).unwrap();
        let fd = maxmin_iab_fd(&net, &d, &a, 8.0 * G).unwrap();
        assert!(fd.gamma_star > hd.gamma_star);
    }

    #[test]
    fn fd_ul_mirrors_dl() {
        let base = Deployment::build_kring(1, 200.0).unwrap();
        let mk = |eta: f64| {
            base.place_ues(
                &PlacementSpec::new(Placement::UniformPerBs {
                    n: 2,
                    offset_m: 100.0,
                    los: true,
                })
                .with_dl_fraction(eta),
                0,
            )
            .unwrap()
            .associate(AssociationPolicy::Nearest, &RadioParams::default())
            .unwrap()
        };
        let (dl, ul) = (mk(1.0), mk(0.0));
        let a = vec![6.0 * G; 10];
        let fdl = maxmin_iab_fd(&Network::nnhr(&dl).unwrap(), &dl, &a, 8.0 * G).unwrap();
        let ful = maxmin_iab_fd(&Network::nnhr(&ul).unwrap(), &ul, &a, 8.0 * G).unwrap();
        assert_relative_eq!(fdl.gamma_tx.unwrap(), ful.gamma_rx.unwrap(), max_relative = 1e-12);
        assert_relative_eq!(fdl.gamma_rx.unwrap(), ful.gamma_tx.unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn max_rings_examples() {
        assert_eq!(max_rings(2, 0.1 * G, 8.0 * G, 8.0 * G).unwrap(), MaxRings::Feasible(3));
        assert_relative_eq!(uniform_rate(2, 3, 8.0 * G, 8.0 * G), 0.16 * G, max_relative = 1e-12);
        assert_eq!(max_rings(2, 4.0 * G, 8.0 * G, 8.0 * G).unwrap(), MaxRings::Feasible(0));
        assert_eq!(max_rings(2, 4.1 * G, 8.0 * G, 8.0 * G).unwrap(), MaxRings::Infeasible);
    }

    #[test]
    fn oab_examples() {
        let r = oab_equal_rate(0.5, 1, 8.0 * G, &[8.0 * G], &[0], &[2]).unwrap();
        assert_relative_eq!(r[0], 0.5 * G, max_relative = 1e-12);
        assert!(oab_equal_rate(1.0, 1, 8.0 * G, &[8.0 * G], &[0], &[2]).is_err());
        assert!(oab_equal_rate(0.0, 1, 8.0 * G, &[8.0 * G], &[0], &[2]).is_err());
        let near_one = oab_equal_rate(1.0 - 1e-9, 1, 8.0 * G, &[8.0 * G], &[0], &[2]).unwrap();
        assert!(near_one[0] < 1.0);

        let d = uniform(1, 2);
        let net = Network::nnhr(&d).unwrap();
        let a = vec![8.0 * G; 10];
        let w = oab_weighted(0.5, &net, &a, 8.0 * G).unwrap();
        assert_relative_eq!(w.zeta_star, 0.2, max_relative = 1e-12);
        assert_relative_eq!(w.min_rate_at_zeta_star, 0.8 * G, max_relative = 1e-12);
        for eps in [1e-3, -1e-3] {
            let p = oab_weighted(0.2 + eps, &net, &a, 8.0 * G).unwrap();
            assert!(p.min_rate < w.min_rate_at_zeta_star);
        }
    }

    #[test]
    fn oab_without_relays_is_access_limited() {
        let mut c = vec![0; 5];
        c[0] = 2;
        let d = counts(1, c);
        let net = Network::nnhr(&d).unwrap();
        let w = oab_weighted(0.5, &net, &[4.0 * G, 8.0 * G], 8.0 * G).unwrap();
        assert_eq!(w.zeta_star, 1.0);
        assert_relative_eq!(w.min_rate_at_zeta_star, 2.0 * G, max_relative = 1e-12);
    }

    #[test]
    fn schedule_k1() {
        let d = uniform(1, 2);
        let net = Network::nnhr(&d).unwrap();
        let a = vec![8.0 * G; 10];
        let s = synthesize_schedule(&net, &a, 8.0 * G, 0.8 * G).unwrap();
        let mbs_access: f64 = s
            .links
            .iter()
            .filter(|l| l.bs == 0 && matches!(l.peer, Node::Ue(_)))
            .map(ScheduledLink::total_time)
            .sum();
        let mbs_bh: f64 = s
            .links
            .iter()
            .filter(|l| l.bs == 0 && matches!(l.peer, Node::Bs(_)))
            .map(ScheduledLink::total_time)
            .sum();
        assert_relative_eq!(mbs_access, 0.2, max_relative = 1e-12);
        assert_relative_eq!(mbs_bh, 0.8, max_relative = 1e-12);
        for l in s.links.iter().filter(|l| matches!(l.peer, Node::Bs(_))) {
            assert_relative_eq!(l.total_time(), 0.2, max_relative = 1e-12);
        }
        for r in s.ue_rates(10) {
            assert!(r >= 0.8 * G * (1.0 - 1e-9));
        }
        let half = synthesize_schedule(&net, &a, 8.0 * G, 0.4 * G).unwrap();
        assert!(half.bs_busy.iter().all(|&b| b <= 0.5 + 1e-12));
        let err = synthesize_schedule(&net, &a, 8.0 * G, 0.81 * G).unwrap_err();
        assert!(err.to_string().contains("BS 0"), "{err}");
    }

    #[test]
    fn timeline_has_no_overlap_per_bs() {
        let d = uniform(3, 2);
        let net = Network::nnhr(&d).unwrap();
        let a: Vec<f64> = (0..d.ue_count()).map(|u| (3.0 + (u % 5) as f64) * G).collect();
        let r = maxmin_with_schedule(&net, &d, &a, 8.0 * G).unwrap();
        let s = r.schedule.unwrap();
        for b in 0..d.bs_count() {
            let mut iv: Vec<[f64; 2]> = s
                .links
                .iter()
                .filter(|l| l.bs == b || l.peer == Node::Bs(b))
                .flat_map(|l| l.intervals.clone())
                .collect();
            iv.sort_by(|x, y| x[0].total_cmp(&y[0]));
            for w in iv.windows(2) {
                assert!(w[0][1] <= w[1][0] + 1e-12);
            }
            assert!(iv.last().is_none_or(|x| x[1] <= 1.0 + 1e-9));
        }
    }

    #[test]
    fn dual_connectivity_symmetric_ue() {
        // One UE midway between the MBS and (1,0), each BS otherwise empty.
        let mut d = uniform(1, 0);
        let p = RadioParams::default();
        d = d
            .place_ues(
                &PlacementSpec::new(Placement::PerBs {
                    counts: vec![1, 0, 0, 0, 0],
                    offset_m: 100.0,
                    los: true,
                }),
                0,
            )
            .unwrap()
            .associate(AssociationPolicy::Nearest, &p)
            .unwrap();
        let dc = dual_connectivity_eval(&d, &p, 0.5).unwrap();
        assert!(dc.second_bs[0].is_some());
        assert_relative_eq!(dc.r_dual[0], 2.0 * dc.r_single[0], max_relative = 1e-12);
    }

    fn arb_counts() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(0usize..4, 13)
    }

    proptest! {
        #[test]
        fn monotone_in_rates_and_scale_invariant(c in arb_counts(), s in 1.1f64..5.0) {
            prop_assume!(c.iter().sum::<usize>() > 0);
            let d = counts(2, c);
            let net = Network::nnhr(&d).unwrap();
            let a: Vec<f64> = (0..d.ue_count()).map(|u| (1.0 + (u % 7) as f64) * G).collect();
            let base = maxmin_iab_hd(&net, &d, &a, 8.0 * G).unwrap();
            let scaled: Vec<f64> = a.iter().map(|x| x * s).collect();
            let r = maxmin_iab_hd(&net, &d, &scaled, 8.0 * G * s).unwrap();
            prop_assert!((r.gamma_star / base.gamma_star - s).abs() < 1e-9 * s);
            prop_assert_eq!(r.bottleneck_bs, base.bottleneck_bs);
            let faster = maxmin_iab_hd(&net, &d, &scaled, 8.0 * G).unwrap();
            prop_assert!(faster.gamma_star >= base.gamma_star * (1.0 - 1e-12));
            prop_assert!((base.busy_time[base.bottleneck_bs] - 1.0).abs() < 1e-9);
            prop_assert!(base.busy_time.iter().all(|&b| b <= 1.0 + 1e-9));
        }

        #[test]
        fn schedule_meets_gamma(c in arb_counts()) {
            prop_assume!(c.iter().sum::<usize>() > 0);
            let d = counts(2, c);
            let net = Network::nnhr(&d).unwrap();
            let a: Vec<f64> = (0..d.ue_count()).map(|u| (2.0 + (u % 3) as f64) * G).collect();
            let r = maxmin_with_schedule(&net, &d, &a, 8.0 * G).unwrap();
            let s = r.schedule.unwrap();
            for rate in s.ue_rates(d.ue_count()) {
                prop_assert!(rate >= r.gamma_star * (1.0 - 1e-9));
            }
        }

        #[test]
        fn oab_weighted_equals_uniform_optimum(k in 1u32..5, w in 1usize..4, extra in 0usize..3, ra in 1.0f64..9.0) {
            let n = crate::topology::bs_count(k);
            let mut c = vec![w; n];
            c[0] += extra;
            let d = counts(k, c);
            let net = Network::nnhr(&d).unwrap();
            let a = vec![ra * G; d.ue_count()];
            let o = oab_weighted(0.5, &net, &a, 8.0 * G).unwrap();
            let u = maxmin_uniform(w + extra, net.loads.f[0], ra * G, 8.0 * G).unwrap();
            prop_assert!((o.min_rate_at_zeta_star / u - 1.0).abs() < 1e-12);
        }

        #[test]
        fn max_rings_matches_sweep(w in 1usize..6, gt in 0.01f64..2.0, ra in 0.5f64..10.0, r1 in 1.0f64..10.0) {
            let res = max_rings(w, gt * G, ra * G, r1 * G).unwrap();
            let mut sweep = None;
            for k in 0..200u32 {
                if uniform_rate(w, k, ra * G, r1 * G) >= gt * G * (1.0 - TOL) {
                    sweep = Some(k);
                } else {
                    break;
                }
            }
            match sweep {
                Some(k) => prop_assert_eq!(res, MaxRings::Feasible(k)),
                None => prop_assert_eq!(res, MaxRings::Infeasible),
            }
        }
    }
}
