//! Slotted queueing simulation of a greedy backpressure scheduler with
//! proportional-fair congestion control on the first hop.
//!
//! Every UE is a downlink flow from the MBS (infinite backlog) along its
//! route. Relays keep one queue per flow. Each slot, every link is tagged with
//! the priority of its best flow, links are packed greedily in descending
//! priority order subject to the half-duplex constraint, and every packed
//! link moves data of its best flow.

use serde::{Deserialize, Serialize};

use crate::analysis::Node;
use crate::error::{param, Result};
use crate::oracle::{Link, OracleProblem};
use crate::radio::{linear_to_db, InterferenceModel, RadioNode, RadioParams, Scenario};
use crate::routing::RouteTable;
use crate::topology::{Deployment, Direction, Heading};

/// Blockage scenario of the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Blockage {
    /// Every link along a street is LOS, access included.
    #[serde(rename = "s1")]
    S1,
    /// Only neighbouring backhaul links are LOS; access links are NLOS.
    #[serde(rename = "s2")]
    S2,
}

impl Blockage {
    pub fn interference_scenario(self) -> Scenario {
        match self {
            Blockage::S1 => Scenario::DirectionalS1,
            Blockage::S2 => Scenario::DirectionalS2,
        }
    }

    fn access_los(self) -> bool {
        self == Blockage::S1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub slot_s: f64,
    pub n_slots: usize,
    pub warmup: usize,
    pub beta: f64,
    pub c: f64,
    pub blockage: Blockage,
    pub interference: bool,
    pub seed: u64,
    /// Keep the per-slot schedule in the trace.
    pub log_schedules: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            slot_s: 2e-4,
            n_slots: 10_000,
            warmup: 1_000,
            beta: 0.99,
            c: 1e-14,
            blockage: Blockage::S1,
            interference: false,
            seed: 0,
            log_schedules: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup >= self.n_slots {
            return param(format!("warmup ({}) must be below n_slots ({})", self.warmup, self.n_slots));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return param(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if !(self.c > 0.0) {
            return param(format!("c must be positive, got {}", self.c));
        }
        if !(self.slot_s > 0.0) {
            return param("slot duration must be positive");
        }
        Ok(())
    }
}

/// One hop of one flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Hop {
    flow: usize,
    /// Position on the flow's route; 0 is the first hop out of the MBS.
    pos: usize,
}

/// Static description of the network being simulated.
#[derive(Debug, Clone)]
pub struct SimNetwork {
    pub links: Vec<Link>,
    /// Per flow, the link of each hop (access last).
    pub flow_links: Vec<Vec<usize>>,
    /// Noise-limited rate per link.
    pub rate: Vec<f64>,
    pub snr: Vec<f64>,
    signal: Vec<f64>,
    hops: Vec<Vec<Hop>>,
    nodes: Vec<(RadioNode, RadioNode)>,
    headings: Vec<(Option<Heading>, Option<Heading>)>,
}

impl SimNetwork {
    pub fn new(dep: &Deployment, rt: &RouteTable, params: &RadioParams, blockage: Blockage) -> Result<Self> {
        if dep.ues.iter().any(|u| u.direction != Direction::Downlink) {
            return param("the simulator handles downlink UEs only");
        }
        let prob = OracleProblem::fixed(dep, rt)?;
        let links = prob.links;
        let mut hops = vec![Vec::new(); links.len()];
        for (flow, ls) in prob.ue_links.iter().enumerate() {
            for (pos, &l) in ls.iter().enumerate() {
                hops[l].push(Hop { flow, pos });
            }
        }
        let node = |n: Node| match n {
            Node::Bs(b) => RadioNode::bs(dep.bs_position(b)),
            Node::Ue(u) => RadioNode::ue(dep.ues[u].position),
        };
        let mut rate = Vec::with_capacity(links.len());
        let mut snr = Vec::with_capacity(links.len());
        let mut signal = Vec::with_capacity(links.len());
        let mut nodes = Vec::with_capacity(links.len());
        let mut headings = Vec::with_capacity(links.len());
        for l in &links {
            let (tx, rx) = (node(l.tx), node(l.rx));
            let los = l.is_access().then(|| blockage.access_los()).unwrap_or(true);
            let s = params.desired_power_mw(tx, rx, los)?;
            rate.push(params.rate_from_powers(s, 0.0, 0.0, rx.is_bs));
            snr.push(s / params.noise_mw());
            signal.push(s);
            nodes.push((tx, rx));
            headings.push((
                Heading::between(tx.position, rx.position),
                Heading::between(rx.position, tx.position),
            ));
        }
        Ok(Self {
            links,
            flow_links: prob.ue_links,
            rate,
            snr,
            signal,
            hops,
            nodes,
            headings,
        })
    }

    pub fn flow_count(&self) -> usize {
        self.flow_links.len()
    }

    /// Access-link rate per flow, in the deployment's UE order.
    pub fn access_rates(&self) -> Vec<f64> {
        self.flow_links.iter().map(|ls| self.rate[*ls.last().unwrap()]).collect()
    }

    /// Backhaul rate of the first hop (the max-min closed forms assume all
    /// backhaul hops have this rate).
    pub fn backhaul_rate(&self) -> Option<f64> {
        self.links
            .iter()
            .position(|l| !l.is_access())
            .map(|l| self.rate[l])
    }
}

/// Queue and congestion-control state.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    /// `backlog[flow][pos]`: bits of the flow waiting at the transmitter of
    /// hop `pos`. Position 0 is the MBS and is never read (infinite).
    pub backlog: Vec<Vec<f64>>,
    /// First-hop throughput estimate per flow.
    pub avg_rate: Vec<f64>,
    pub slot: usize,
}

impl SimState {
    pub fn new(net: &SimNetwork) -> Self {
        Self {
            backlog: net.flow_links.iter().map(|ls| vec![0.0; ls.len()]).collect(),
            avg_rate: net.flow_links.iter().map(|ls| net.rate[ls[0]]).collect(),
            slot: 0,
        }
    }

    fn src(&self, h: Hop) -> f64 {
        if h.pos == 0 {
            f64::INFINITY
        } else {
            self.backlog[h.flow][h.pos]
        }
    }

    fn dst(&self, h: Hop) -> f64 {
        // The last hop delivers to the UE, which sinks everything.
        self.backlog[h.flow].get(h.pos + 1).copied().unwrap_or(0.0)
    }
}

/// Priority of `(link, flow)`: first hops use `r (1/(c R) − q_dst)`, other
/// hops `r (q_src − q_dst)`. Non-positive priorities mean ineligible.
pub fn hop_priority(rate: f64, first_hop: bool, q_src: f64, q_dst: f64, c: f64, avg_rate: f64) -> f64 {
    let p = if first_hop {
        rate * (1.0 / (c * avg_rate) - q_dst)
    } else {
        rate * (q_src - q_dst)
    };
    p.max(0.0)
}

/// Best flow and its priority per link; `None` when no flow is eligible.
pub fn compute_priorities(net: &SimNetwork, state: &SimState, cfg: &SimConfig) -> Vec<Option<(usize, f64)>> {
    net.hops
        .iter()
        .enumerate()
        .map(|(l, hops)| {
            let mut best: Option<(usize, f64)> = None;
            for &h in hops {
                let p = hop_priority(
                    net.rate[l],
                    h.pos == 0,
                    state.src(h),
                    state.dst(h),
                    cfg.c,
                    state.avg_rate[h.flow],
                );
                if p > 0.0 && best.is_none_or(|(_, bp)| p > bp) {
                    best = Some((h.flow, p));
                }
            }
            best
        })
        .collect()
}

/// Packs links in descending priority (ties by link index) while no node is
/// used twice. Returns `(link, flow)` pairs.
pub fn greedy_pack(links: &[Link], priorities: &[Option<(usize, f64)>]) -> Vec<(usize, usize)> {
    let mut order: Vec<(usize, usize, f64)> = priorities
        .iter()
        .enumerate()
        .filter_map(|(l, p)| p.map(|(f, v)| (l, f, v)))
        .collect();
    order.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<(usize, usize)> = Vec::new();
    for (l, f, _) in order {
        if chosen.iter().all(|&(c, _)| !links[c].conflicts(&links[l])) {
            chosen.push((l, f));
        }
    }
    chosen
}

/// What happened on one active link in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSample {
    pub slot: usize,
    pub link: usize,
    pub flow: usize,
    pub snr_db: f64,
    pub sinr_db: f64,
    pub rate_bps: f64,
    pub bits: f64,
}

/// Applies one slot's schedule and returns per-link outcomes.
pub fn step(
    net: &SimNetwork,
    state: &mut SimState,
    schedule: &[(usize, usize)],
    params: &RadioParams,
    model: Option<&InterferenceModel>,
    cfg: &SimConfig,
) -> Vec<LinkSample> {
    let mut out = Vec::with_capacity(schedule.len());
    let mut first_hop_rate = vec![0.0; net.flow_count()];
    for &(l, flow) in schedule {
        let (_, rx) = net.nodes[l];
        let mut interference = 0.0;
        if let Some(m) = model {
            for &(o, _) in schedule {
                if o != l {
                    interference += m.power_mw(params, net.nodes[o].0, net.headings[o].0, rx, net.headings[l].1);
                }
            }
        }
        let rate = if model.is_some() {
            params.rate_from_powers(net.signal[l], interference, 0.0, rx.is_bs)
        } else {
            net.rate[l]
        };
        let sinr = net.signal[l] / (params.noise_mw() + interference);
        let pos = net.flow_links[flow].iter().position(|&x| x == l).expect("link on route");
        let h = Hop { flow, pos };
        let bits = (rate * cfg.slot_s).min(state.src(h));
        if pos > 0 {
            state.backlog[flow][pos] -= bits;
        }
        if pos + 1 < state.backlog[flow].len() {
            state.backlog[flow][pos + 1] += bits;
        }
        if pos == 0 {
            first_hop_rate[flow] = rate;
        }
        out.push(LinkSample {
            slot: state.slot,
            link: l,
            flow,
            snr_db: linear_to_db(net.snr[l]),
            sinr_db: linear_to_db(sinr),
            rate_bps: rate,
            bits,
        });
    }
    for (r, &now) in state.avg_rate.iter_mut().zip(&first_hop_rate) {
        *r = cfg.beta * *r + (1.0 - cfg.beta) * now;
    }
    state.slot += 1;
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeSummary {
    pub ue_id: usize,
    /// Noise-limited SNR of the access link.
    pub snr_db: f64,
    /// Mean (linear, then dB) access SINR over the slots it was active.
    pub mean_sinr_db: f64,
    pub e2e_rate_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub delivered_bits: Vec<f64>,
    /// Bits sent out of the MBS per flow over the whole run.
    pub first_hop_bits: Vec<f64>,
    pub e2e_rate_bps: Vec<f64>,
    pub samples: Vec<LinkSample>,
    pub ues: Vec<UeSummary>,
    /// Largest relay backlog seen after each tenth of the measured run.
    pub backlog_checkpoints: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedules: Vec<Vec<(usize, usize)>>,
}

impl SimTrace {
    /// Coefficient of variation of the per-UE e2e rates.
    pub fn rate_cv(&self) -> f64 {
        let n = self.e2e_rate_bps.len() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let mean = self.e2e_rate_bps.iter().sum::<f64>() / n;
        let var = self.e2e_rate_bps.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        if mean > 0.0 {
            var.sqrt() / mean
        } else {
            0.0
        }
    }
}

/// Runs the greedy PF scheduler for `cfg.n_slots` slots.
pub fn run_greedy_pf(dep: &Deployment, rt: &RouteTable, params: &RadioParams, cfg: &SimConfig) -> Result<SimTrace> {
    cfg.validate()?;
    let net = SimNetwork::new(dep, rt, params, cfg.blockage)?;
    let model = cfg
        .interference
        .then(|| InterferenceModel::new(cfg.blockage.interference_scenario(), dep.spacing_m));
    let mut state = SimState::new(&net);
    let n = net.flow_count();
    let mut delivered = vec![0.0; n];
    let mut first_hop_bits = vec![0.0; n];
    let mut samples = Vec::new();
    let mut schedules = Vec::new();
    let mut checkpoints = Vec::new();
    let measured = cfg.n_slots - cfg.warmup;
    let every = (measured / 10).max(1);
    for t in 0..cfg.n_slots {
        let pr = compute_priorities(&net, &state, cfg);
        let sched = greedy_pack(&net.links, &pr);
        let out = step(&net, &mut state, &sched, params, model.as_ref(), cfg);
        for s in &out {
            if net.flow_links[s.flow][0] == s.link {
                first_hop_bits[s.flow] += s.bits;
            }
        }
        if t >= cfg.warmup {
            for s in &out {
                if net.flow_links[s.flow].last() == Some(&s.link) {
                    delivered[s.flow] += s.bits;
                }
            }
            samples.extend(out);
            if cfg.log_schedules {
                schedules.push(sched);
            }
            if (t + 1 - cfg.warmup) % every == 0 {
                let max_q = state
                    .backlog
                    .iter()
                    .flat_map(|q| q.iter().skip(1))
                    .fold(0.0, |a: f64, &b| a.max(b));
                checkpoints.push(max_q);
            }
        }
    }
    let secs = measured as f64 * cfg.slot_s;
    let e2e: Vec<f64> = delivered.iter().map(|b| b / secs).collect();
    let mut sinr_sum = vec![0.0; n];
    let mut sinr_n = vec![0usize; n];
    for s in &samples {
        if net.flow_links[s.flow].last() == Some(&s.link) {
            sinr_sum[s.flow] += crate::radio::db_to_linear(s.sinr_db);
            sinr_n[s.flow] += 1;
        }
    }
    let ues = (0..n)
        .map(|u| {
            let access = *net.flow_links[u].last().unwrap();
            UeSummary {
                ue_id: dep.ues[u].id,
                snr_db: linear_to_db(net.snr[access]),
                mean_sinr_db: if sinr_n[u] > 0 {
                    linear_to_db(sinr_sum[u] / sinr_n[u] as f64)
                } else {
                    f64::NAN
                },
                e2e_rate_mbps: e2e[u] / 1e6,
            }
        })
        .collect();
    Ok(SimTrace {
        delivered_bits: delivered,
        first_hop_bits,
        e2e_rate_bps: e2e,
        samples,
        ues,
        backlog_checkpoints: checkpoints,
        schedules,
    })
}
