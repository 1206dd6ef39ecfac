//! Joint-scheduling LP oracle.
//!
//! For a fixed routing the oracle maximises the common rate `γ` over time
//! sharing between transmission schedules (sets of links with no node in two
//! of them). Per-UE time fractions on a link only matter through their sum, so
//! each link gets one row `n_l γ ≤ Σ_p r_{l,p} x_p`, where `n_l` is the number
//! of UEs routed over it. With optimal nearest-neighbour routing (NNR) the
//! backhaul becomes a single-commodity flow out of (or into) the MBS, which
//! allows traffic of one UE to be split over several shortest paths.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::Node;
use crate::error::{param, Error, Result};
use crate::exec::Exec;
use crate::lp::Simplex;
use crate::radio::{InterferenceModel, RadioNode, RadioParams};
use crate::routing::RouteTable;
use crate::topology::{Deployment, Direction, Heading, Point};

/// Largest link count accepted by explicit exhaustive enumeration.
pub const EXHAUSTIVE_MAX_LINKS: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Link {
    pub tx: Node,
    pub rx: Node,
}

impl Link {
    pub fn touches(&self, n: Node) -> bool {
        self.tx == n || self.rx == n
    }

    pub fn conflicts(&self, other: &Link) -> bool {
        self.touches(other.tx) || self.touches(other.rx)
    }

    pub fn is_access(&self) -> bool {
        matches!(self.tx, Node::Ue(_)) || matches!(self.rx, Node::Ue(_))
    }

    /// Whether one end is the MBS.
    pub fn is_fiber(&self) -> bool {
        self.touches(Node::Bs(0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmissionSchedule {
    pub id: usize,
    pub links: Vec<usize>,
    /// Produced by greedy packing (as opposed to exhaustive or 3-link listing).
    #[serde(default)]
    pub greedy: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ScheduleMode {
    /// All maximal conflict-free link sets.
    Exhaustive,
    /// All conflict-free 3-link sets plus `n_greedy` random greedy packings
    /// with at least `min_links` links; a `fiber_bias` fraction of them is
    /// seeded with an MBS link.
    TriplesPlusGreedy {
        n_greedy: usize,
        min_links: usize,
        fiber_bias: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingKind {
    Fixed,
    OptimalNnr,
}

/// Links and demands of an oracle instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleProblem {
    pub routing: RoutingKind,
    pub links: Vec<Link>,
    /// Fixed routing: UEs carried per link. NNR: 1 on access links, 0 on backhaul.
    pub demand: Vec<usize>,
    /// Fixed routing only: link indices of each UE's route, access last.
    pub ue_links: Vec<Vec<usize>>,
    pub w_dl: Vec<usize>,
    pub w_ul: Vec<usize>,
}

fn node_point(dep: &Deployment, n: Node) -> Point {
    match n {
        Node::Bs(b) => dep.bs_position(b),
        Node::Ue(u) => dep.ues[u].position,
    }
}

fn radio_node(dep: &Deployment, n: Node) -> RadioNode {
    match n {
        Node::Bs(b) => RadioNode::bs(dep.bs_position(b)),
        Node::Ue(u) => RadioNode::ue(dep.ues[u].position),
    }
}

fn access_link(ue: usize, bs: usize, dir: Direction) -> Link {
    match dir {
        Direction::Downlink => Link {
            tx: Node::Bs(bs),
            rx: Node::Ue(ue),
        },
        Direction::Uplink => Link {
            tx: Node::Ue(ue),
            rx: Node::Bs(bs),
        },
    }
}

impl OracleProblem {
    /// Links on the given routes; every hop is oriented along the UE's traffic.
    pub fn fixed(dep: &Deployment, rt: &RouteTable) -> Result<Self> {
        let serving = dep.serving()?;
        if rt.routes.len() != dep.ue_count() {
            return Err(Error::Route(format!(
                "{} routes for {} UEs",
                rt.routes.len(),
                dep.ue_count()
            )));
        }
        let mut index: HashMap<Link, usize> = HashMap::new();
        let mut links = Vec::new();
        let mut demand = Vec::new();
        let mut ue_links = Vec::with_capacity(dep.ue_count());
        let mut intern = |l: Link, links: &mut Vec<Link>, demand: &mut Vec<usize>| {
            let i = *index.entry(l).or_insert_with(|| {
                links.push(l);
                demand.push(0);
                links.len() - 1
            });
            demand[i] += 1;
            i
        };
        for (u, route) in rt.routes.iter().enumerate() {
            let dir = dep.ues[u].direction;
            if route.last() != Some(&serving[u]) {
                return Err(Error::Route(format!("route of UE {u} does not end at its serving BS")));
            }
            let mut mine = Vec::with_capacity(route.len());
            for hop in route.windows(2) {
                let (a, b) = (Node::Bs(hop[0]), Node::Bs(hop[1]));
                let l = match dir {
                    Direction::Downlink => Link { tx: a, rx: b },
                    Direction::Uplink => Link { tx: b, rx: a },
                };
                mine.push(intern(l, &mut links, &mut demand));
            }
            mine.push(intern(access_link(u, serving[u], dir), &mut links, &mut demand));
            ue_links.push(mine);
        }
        let lp = dep.load_profile()?;
        Ok(Self {
            routing: RoutingKind::Fixed,
            links,
            demand,
            ue_links,
            w_dl: lp.w_dl,
            w_ul: lp.w_ul,
        })
    }

    /// Access links plus every nearest-neighbour backhaul hop pointing away
    /// from the MBS (downlink) or towards it (uplink).
    pub fn nnr(dep: &Deployment) -> Result<Self> {
        let serving = dep.serving()?;
        let lp = dep.load_profile()?;
        let has_dl = lp.w_dl.iter().any(|&w| w > 0);
        let has_ul = lp.w_ul.iter().any(|&w| w > 0);
        let mut links = Vec::new();
        let mut demand = Vec::new();
        for a in &dep.bs {
            for b in &dep.bs {
                let (ca, cb) = (a.coord, b.coord);
                let adjacent = (ca.i - cb.i).abs() + (ca.j - cb.j).abs() == 1;
                if adjacent && cb.ring() == ca.ring() + 1 {
                    let (na, nb) = (Node::Bs(a.index), Node::Bs(b.index));
                    if has_dl {
                        links.push(Link { tx: na, rx: nb });
                        demand.push(0);
                    }
                    if has_ul {
                        links.push(Link { tx: nb, rx: na });
                        demand.push(0);
                    }
                }
            }
        }
        for (u, ue) in dep.ues.iter().enumerate() {
            links.push(access_link(u, serving[u], ue.direction));
            demand.push(1);
        }
        Ok(Self {
            routing: RoutingKind::OptimalNnr,
            links,
            demand,
            ue_links: Vec::new(),
            w_dl: lp.w_dl,
            w_ul: lp.w_ul,
        })
    }

    fn has_row(&self, l: usize) -> bool {
        self.demand[l] > 0 || (self.routing == RoutingKind::OptimalNnr && !self.links[l].is_access())
    }
}

pub fn is_conflict_free(links: &[Link], set: &[usize]) -> bool {
    set.iter()
        .enumerate()
        .all(|(i, &a)| set[i + 1..].iter().all(|&b| !links[a].conflicts(&links[b])))
}

/// Lists transmission schedules over `links`.
pub fn enumerate_schedules(links: &[Link], mode: ScheduleMode) -> Result<Vec<TransmissionSchedule>> {
    let mut sets: Vec<(Vec<usize>, bool)> = Vec::new();
    match mode {
        ScheduleMode::Exhaustive => {
            if links.len() > EXHAUSTIVE_MAX_LINKS {
                return param(format!(
                    "exhaustive enumeration is limited to {EXHAUSTIVE_MAX_LINKS} links, got {}",
                    links.len()
                ));
            }
            let mut chosen = Vec::new();
            maximal_sets(links, 0, &mut chosen, &mut |s| sets.push((s.to_vec(), false)));
        }
        ScheduleMode::TriplesPlusGreedy {
            n_greedy,
            min_links,
            fiber_bias,
            seed,
        } => {
            if !(0.0..=1.0).contains(&fiber_bias) {
                return param(format!("fiber bias must lie in [0, 1], got {fiber_bias}"));
            }
            let n = links.len();
            let mut covered = vec![false; n];
            for a in 0..n {
                for b in a + 1..n {
                    if links[a].conflicts(&links[b]) {
                        continue;
                    }
                    for c in b + 1..n {
                        if !links[a].conflicts(&links[c]) && !links[b].conflicts(&links[c]) {
                            sets.push((vec![a, b, c], false));
                            covered[a] = true;
                            covered[b] = true;
                            covered[c] = true;
                        }
                    }
                }
            }
            // Links that fit in no triple still need a schedule of their own.
            for (l, _) in covered.iter().enumerate().filter(|(_, c)| !**c) {
                sets.push((vec![l], false));
            }
            let fiber: Vec<usize> = (0..n).filter(|&l| links[l].is_fiber()).collect();
            let n_biased = (n_greedy as f64 * fiber_bias).round() as usize;
            let mut seen: HashSet<Vec<usize>> = HashSet::new();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut order: Vec<usize> = (0..n).collect();
            for (want, biased) in [(n_biased, true), (n_greedy - n_biased, false)] {
                let mut found = 0;
                let mut attempts = 0;
                while found < want && attempts < 50 * want.max(1) {
                    attempts += 1;
                    order.shuffle(&mut rng);
                    let mut set: Vec<usize> = Vec::new();
                    if biased {
                        if fiber.is_empty() {
                            break;
                        }
                        set.push(fiber[rng.random_range(0..fiber.len())]);
                    }
                    for &l in &order {
                        if set.iter().all(|&s| s != l && !links[s].conflicts(&links[l])) {
                            set.push(l);
                        }
                    }
                    set.sort_unstable();
                    if set.len() >= min_links && seen.insert(set.clone()) {
                        sets.push((set, true));
                        found += 1;
                    }
                }
            }
        }
    }
    Ok(sets
        .into_iter()
        .enumerate()
        .map(|(id, (links, greedy))| TransmissionSchedule { id, links, greedy })
        .collect())
}

fn maximal_sets(links: &[Link], next: usize, chosen: &mut Vec<usize>, emit: &mut dyn FnMut(&[usize])) {
    if next == links.len() {
        let maximal = (0..links.len())
            .all(|l| chosen.contains(&l) || chosen.iter().any(|&c| links[c].conflicts(&links[l])));
        if maximal && !chosen.is_empty() {
            emit(chosen);
        }
        return;
    }
    if chosen.iter().all(|&c| !links[c].conflicts(&links[next])) {
        chosen.push(next);
        maximal_sets(links, next + 1, chosen, emit);
        chosen.pop();
    }
    maximal_sets(links, next + 1, chosen, emit);
}

/// Noise-limited rate of a single link.
pub fn link_rate(dep: &Deployment, params: &RadioParams, link: &Link) -> Result<f64> {
    rate_in_schedule(dep, params, link, &[], None)
}

fn desired_los(dep: &Deployment, link: &Link) -> bool {
    match (link.tx, link.rx) {
        (Node::Bs(b), Node::Ue(u)) | (Node::Ue(u), Node::Bs(b)) => dep.ues[u].is_los_to(b),
        _ => true,
    }
}

fn rate_in_schedule(
    dep: &Deployment,
    params: &RadioParams,
    link: &Link,
    others: &[&Link],
    model: Option<&InterferenceModel>,
) -> Result<f64> {
    let (tx, rx) = (radio_node(dep, link.tx), radio_node(dep, link.rx));
    let signal = params.desired_power_mw(tx, rx, desired_los(dep, link))?;
    let mut interference = 0.0;
    if let Some(model) = model {
        let rx_heading = Heading::between(rx.position, tx.position);
        for o in others {
            let (otx, orx) = (node_point(dep, o.tx), node_point(dep, o.rx));
            interference += model.power_mw(
                params,
                radio_node(dep, o.tx),
                Heading::between(otx, orx),
                rx,
                rx_heading,
            );
        }
    }
    Ok(params.rate_from_powers(signal, interference, 0.0, rx.is_bs))
}

/// Per-link rates within one schedule. With `model = None` every link gets its
/// noise-limited rate; otherwise the other active transmitters interfere.
pub fn schedule_rates(
    dep: &Deployment,
    params: &RadioParams,
    links: &[Link],
    schedule: &TransmissionSchedule,
    model: Option<&InterferenceModel>,
) -> Result<Vec<f64>> {
    schedule
        .links
        .iter()
        .map(|&l| {
            let others: Vec<&Link> = schedule
                .links
                .iter()
                .filter(|&&o| o != l)
                .map(|&o| &links[o])
                .collect();
            rate_in_schedule(dep, params, &links[l], &others, model)
        })
        .collect()
}

/// [`schedule_rates`] for every schedule.
pub fn all_schedule_rates(
    dep: &Deployment,
    params: &RadioParams,
    links: &[Link],
    schedules: &[TransmissionSchedule],
    model: Option<&InterferenceModel>,
    exec: Exec,
) -> Result<Vec<Vec<f64>>> {
    exec.map(schedules, |s| schedule_rates(dep, params, links, s, model))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauEntry {
    pub link: usize,
    pub ue: usize,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSchedule {
    pub id: usize,
    pub links: Vec<usize>,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub gamma: f64,
    /// Activation fraction per schedule, in the order the schedules were given
    /// (or generated, for column generation).
    #[serde(skip)]
    pub x: Vec<f64>,
    pub active: Vec<ActiveSchedule>,
    /// Fraction of time per link.
    pub link_time: Vec<f64>,
    /// Data rate delivered per link, `Σ_p r_{l,p} x_p`.
    pub link_throughput: Vec<f64>,
    /// Per-UE time fractions (fixed routing only).
    pub tau: Vec<TauEntry>,
    pub t1: f64,
    pub t2: f64,
    pub n_schedules: usize,
    /// True when the schedule set is complete and rates are schedule independent.
    pub exact: bool,
    pub note: String,
    pub iterations: usize,
}

/// One output row: rate and schedule-time statistics of one LP solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub scenario: String,
    pub interference: bool,
    pub gamma_mbps: f64,
    pub t1: f64,
    pub t2: f64,
}

impl OracleSolution {
    pub fn row(&self, scenario: &str, interference: bool) -> TableRow {
        TableRow {
            scenario: scenario.to_string(),
            interference,
            gamma_mbps: self.gamma / 1e6,
            t1: self.t1,
            t2: self.t2,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// LP rows shared by the explicit and column-generation solvers.
struct Layout {
    link_row: Vec<Option<usize>>,
    time_row: usize,
    gamma_col: usize,
    flow_col: Vec<Option<usize>>,
    scale: f64,
}

fn build_lp(problem: &OracleProblem, scale: f64) -> Result<(Simplex, Layout)> {
    let n_bs = problem.w_dl.len();
    let mut rows = 0;
    let mut link_row = vec![None; problem.links.len()];
    for (l, r) in link_row.iter_mut().enumerate() {
        if problem.has_row(l) {
            *r = Some(rows);
            rows += 1;
        }
    }
    let nnr = problem.routing == RoutingKind::OptimalNnr;
    let mut dl_row = vec![None; n_bs];
    let mut ul_row = vec![None; n_bs];
    if nnr {
        for b in 1..n_bs {
            dl_row[b] = Some(rows);
            ul_row[b] = Some(rows + 1);
            rows += 2;
        }
    }
    let time_row = rows;
    rows += 1;
    let mut b = vec![0.0; rows];
    b[time_row] = 1.0;
    let mut lp = Simplex::new(b)?;

    let mut gamma = Vec::new();
    for (l, r) in link_row.iter().enumerate() {
        if let Some(r) = *r {
            if problem.demand[l] > 0 {
                gamma.push((r, problem.demand[l] as f64));
            }
        }
    }
    if nnr {
        for bs in 1..n_bs {
            if problem.w_dl[bs] > 0 {
                gamma.push((dl_row[bs].unwrap(), problem.w_dl[bs] as f64));
            }
            if problem.w_ul[bs] > 0 {
                gamma.push((ul_row[bs].unwrap(), problem.w_ul[bs] as f64));
            }
        }
    }
    let gamma_col = lp.add_column(gamma, 1.0)?;

    let mut flow_col = vec![None; problem.links.len()];
    if nnr {
        for (l, link) in problem.links.iter().enumerate() {
            let (Node::Bs(a), Node::Bs(c)) = (link.tx, link.rx) else {
                continue;
            };
            let mut e = vec![(link_row[l].unwrap(), 1.0)];
            // Downlink rows bound inflow minus outflow, uplink rows the reverse.
            let (rows, sign) = if outward_link(a, c) {
                (&dl_row, 1.0)
            } else {
                (&ul_row, -1.0)
            };
            if let Some(r) = rows[a] {
                e.push((r, sign));
            }
            if let Some(r) = rows[c] {
                e.push((r, -sign));
            }
            flow_col[l] = Some(lp.add_column(e, 0.0)?);
        }
    }
    Ok((
        lp,
        Layout {
            link_row,
            time_row,
            gamma_col,
            flow_col,
            scale,
        },
    ))
}

/// BS indices are ring-major, so a link pointing away from the MBS goes from
/// a smaller to a larger index.
fn outward_link(tx: usize, rx: usize) -> bool {
    tx < rx
}

fn schedule_column(layout: &Layout, links: &[usize], rates: &[f64]) -> Vec<(usize, f64)> {
    let mut e: Vec<(usize, f64)> = links
        .iter()
        .zip(rates)
        .filter_map(|(&l, &r)| layout.link_row[l].map(|row| (row, -r / layout.scale)))
        .filter(|(_, v)| *v != 0.0)
        .collect();
    e.push((layout.time_row, 1.0));
    e
}

fn check_coverage(problem: &OracleProblem, schedules: &[TransmissionSchedule], rates: &[Vec<f64>]) -> Result<()> {
    let mut covered = vec![false; problem.links.len()];
    for (s, r) in schedules.iter().zip(rates) {
        for (&l, &rate) in s.links.iter().zip(r) {
            if rate > 0.0 {
                covered[l] = true;
            }
        }
    }
    for (l, link) in problem.links.iter().enumerate() {
        if problem.demand[l] > 0 && !covered[l] {
            return Err(Error::Infeasible(format!(
                "hop {:?} -> {:?} has no schedule with a positive rate",
                link.tx, link.rx
            )));
        }
    }
    Ok(())
}

fn finish(
    problem: &OracleProblem,
    layout: &Layout,
    sol: &crate::lp::Solution,
    schedules: &[TransmissionSchedule],
    rates: &[Vec<f64>],
    exact: bool,
    note: String,
) -> OracleSolution {
    let gamma = sol.x[layout.gamma_col] * layout.scale;
    let sched_col = |i: usize| layout.gamma_col + 1 + layout.flow_col.iter().flatten().count() + i;
    let x: Vec<f64> = (0..schedules.len()).map(|i| sol.x[sched_col(i)]).collect();
    let nl = problem.links.len();
    let mut link_time = vec![0.0; nl];
    let mut link_throughput = vec![0.0; nl];
    let (mut t1, mut t2) = (0.0, 0.0);
    let mut active = Vec::new();
    for ((s, r), &xp) in schedules.iter().zip(rates).zip(&x) {
        if xp <= 0.0 {
            continue;
        }
        for (&l, &rate) in s.links.iter().zip(r) {
            link_time[l] += xp;
            link_throughput[l] += rate * xp;
        }
        if s.greedy {
            t1 += xp;
        }
        if s.links.iter().any(|&l| problem.links[l].is_fiber()) {
            t2 += xp;
        }
        if xp > 1e-12 {
            active.push(ActiveSchedule {
                id: s.id,
                links: s.links.clone(),
                x: xp,
            });
        }
    }
    let mut tau = Vec::new();
    for (u, ls) in problem.ue_links.iter().enumerate() {
        for &l in ls {
            tau.push(TauEntry {
                link: l,
                ue: u,
                tau: link_time[l] / problem.demand[l] as f64,
            });
        }
    }
    OracleSolution {
        gamma,
        x,
        active,
        link_time,
        link_throughput,
        tau,
        t1,
        t2,
        n_schedules: schedules.len(),
        exact,
        note,
        iterations: sol.iterations,
    }
}

fn max_rate(rates: impl Iterator<Item = f64>) -> f64 {
    let m = rates.fold(0.0, f64::max);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Solves the LP over an explicit schedule list with per-schedule link rates.
/// Greedy-schedule time is minimised among the optimal solutions, so `t1` is
/// the smallest achievable at the optimum.
pub fn solve_maxmin_lp(
    problem: &OracleProblem,
    schedules: &[TransmissionSchedule],
    rates: &[Vec<f64>],
    exact: bool,
) -> Result<OracleSolution> {
    if schedules.len() != rates.len() {
        return param("one rate vector per schedule is required");
    }
    check_coverage(problem, schedules, rates)?;
    let scale = max_rate(rates.iter().flatten().copied());
    let (mut lp, layout) = build_lp(problem, scale)?;
    for (s, r) in schedules.iter().zip(rates) {
        let col = lp.add_column(schedule_column(&layout, &s.links, r), 0.0)?;
        if s.greedy {
            lp.set_secondary(col, -1.0);
        }
    }
    let sol = lp.solve()?;
    let note = if exact {
        "all schedules, schedule-independent rates: exact".to_string()
    } else {
        "restricted schedule set: lower bound on the optimum".to_string()
    };
    Ok(finish(problem, &layout, &sol, schedules, rates, exact, note))
}

/// Exact optimum over all schedules when rates do not depend on the schedule,
/// by column generation. Each round prices the best new schedule with a
/// maximum-weight matching on the link graph, which must be a forest (as it
/// is for any tree routing).
pub fn solve_maxmin_colgen(problem: &OracleProblem, rates: &[f64]) -> Result<OracleSolution> {
    if rates.len() != problem.links.len() {
        return param("one rate per link is required");
    }
    let forest = LinkForest::new(&problem.links)?;
    let scale = max_rate(rates.iter().copied());
    let (mut lp, layout) = build_lp(problem, scale)?;
    let mut schedules = Vec::new();
    let mut sched_rates = Vec::new();
    for l in 0..problem.links.len() {
        if layout.link_row[l].is_some() && rates[l] > 0.0 {
            schedules.push(TransmissionSchedule {
                id: schedules.len(),
                links: vec![l],
                greedy: false,
            });
            sched_rates.push(vec![rates[l]]);
        }
    }
    check_coverage(problem, &schedules, &sched_rates)?;
    for (s, r) in schedules.iter().zip(&sched_rates) {
        lp.add_column(schedule_column(&layout, &s.links, r), 0.0)?;
    }
    let mut seen: HashSet<Vec<usize>> = schedules.iter().map(|s| s.links.clone()).collect();
    for _ in 0..100_000 {
        let sol = lp.solve()?;
        let weights: Vec<f64> = (0..problem.links.len())
            .map(|l| layout.link_row[l].map_or(0.0, |r| sol.duals[r] * rates[l] / scale))
            .collect();
        let (best, set) = forest.max_weight_matching(&weights);
        let y_time = sol.duals[layout.time_row];
        if best <= y_time + 1e-10 * y_time.max(1.0) || !seen.insert(set.clone()) {
            return Ok(finish(
                problem,
                &layout,
                &sol,
                &schedules,
                &sched_rates,
                true,
                "column generation over all schedules: exact".to_string(),
            ));
        }
        let r: Vec<f64> = set.iter().map(|&l| rates[l]).collect();
        lp.add_column(schedule_column(&layout, &set, &r), 0.0)?;
        schedules.push(TransmissionSchedule {
            id: schedules.len(),
            links: set,
            greedy: false,
        });
        sched_rates.push(r);
    }
    Err(Error::Infeasible("column generation did not converge".to_string()))
}

/// Undirected forest on BS/UE nodes whose edges are links.
struct LinkForest {
    nodes: Vec<Node>,
    adj: Vec<Vec<(usize, Vec<usize>)>>,
}

impl LinkForest {
    fn new(links: &[Link]) -> Result<Self> {
        let mut id: HashMap<Node, usize> = HashMap::new();
        let mut nodes = Vec::new();
        let mut node = |n: Node, nodes: &mut Vec<Node>| {
            *id.entry(n).or_insert_with(|| {
                nodes.push(n);
                nodes.len() - 1
            })
        };
        let mut pairs: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (l, link) in links.iter().enumerate() {
            let a = node(link.tx, &mut nodes);
            let b = node(link.rx, &mut nodes);
            pairs.entry((a.min(b), a.max(b))).or_default().push(l);
        }
        let mut parent: Vec<usize> = (0..nodes.len()).collect();
        fn root(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut adj = vec![Vec::new(); nodes.len()];
        let mut keys: Vec<_> = pairs.into_iter().collect();
        keys.sort();
        for ((a, b), ls) in keys {
            let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
            if ra == rb {
                return param("implicit exhaustive schedules need a cycle-free link graph");
            }
            parent[ra] = rb;
            adj[a].push((b, ls.clone()));
            adj[b].push((a, ls));
        }
        Ok(Self { nodes, adj })
    }

    /// Maximum total weight of a conflict-free link set, and the set.
    fn max_weight_matching(&self, w: &[f64]) -> (f64, Vec<usize>) {
        let n = self.nodes.len();
        let best_link = |ls: &[usize]| -> (f64, usize) {
            ls.iter()
                .map(|&l| (w[l], l))
                .fold((f64::NEG_INFINITY, usize::MAX), |a, b| if b.0 > a.0 { b } else { a })
        };
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut up: Vec<Option<usize>> = vec![None; n];
        for r in 0..n {
            if visited[r] {
                continue;
            }
            visited[r] = true;
            let mut stack = vec![r];
            while let Some(v) = stack.pop() {
                order.push(v);
                for &(c, _) in &self.adj[v] {
                    if !visited[c] {
                        visited[c] = true;
                        up[c] = Some(v);
                        stack.push(c);
                    }
                }
            }
        }
        // free[v]: best in subtree with v unmatched below; take[v]: best overall.
        let mut free = vec![0.0; n];
        let mut take = vec![0.0; n];
        let mut pick: Vec<Option<(usize, usize)>> = vec![None; n];
        for &v in order.iter().rev() {
            let mut base = 0.0;
            for &(c, _) in &self.adj[v] {
                if up[c] == Some(v) {
                    base += take[c];
                }
            }
            free[v] = base;
            take[v] = base;
            for (c, ls) in &self.adj[v] {
                if up[*c] != Some(v) {
                    continue;
                }
                let (wl, l) = best_link(ls);
                if wl <= 0.0 {
                    continue;
                }
                let cand = base - take[*c] + free[*c] + wl;
                if cand > take[v] {
                    take[v] = cand;
                    pick[v] = Some((*c, l));
                }
            }
        }
        let mut set = Vec::new();
        let mut total = 0.0;
        let mut stack: Vec<(usize, bool)> = (0..n).filter(|&v| up[v].is_none()).map(|v| (v, false)).collect();
        // `true` means the node is already matched to its parent.
        while let Some((v, matched_up)) = stack.pop() {
            let chosen = if matched_up { None } else { pick[v] };
            if let Some((_, l)) = chosen {
                set.push(l);
                total += w[l];
            }
            for &(c, _) in &self.adj[v] {
                if up[c] == Some(v) {
                    stack.push((c, chosen.is_some_and(|(cc, _)| cc == c)));
                }
            }
        }
        set.sort_unstable();
        (total, set)
    }
}
