//! Constraint checker for explicit link activations, written against the
//! problem statement rather than the scheduler's own bookkeeping.

use std::collections::HashMap;

use kring_core::analysis::{LinkActivation, Node};

/// Checks, for UEs with the given routes (`routes[u]` runs from the MBS to the
/// serving BS), access rates and unit backhaul rate:
///
/// - every per-UE time share lies in `[0, 1]` and is only used on a hop of that UE's route,
/// - every BS is busy at most the whole frame,
/// - every hop of every UE carries at least `gamma` (relative slack `rel`),
/// - the activation intervals realise the time shares with one link per BS at a time.
pub fn check_activation(
    routes: &[Vec<usize>],
    access: &[f64],
    r1: f64,
    act: &LinkActivation,
    gamma: f64,
    rel: f64,
) -> Result<(), String> {
    let n_bs = routes.iter().flatten().copied().max().unwrap_or(0) + 1;
    let n_bs = n_bs.max(act.bs_busy.len());
    // hop (parent, child-or-UE) -> expected rate
    let mut hops: HashMap<(usize, Node), f64> = HashMap::new();
    for (u, route) in routes.iter().enumerate() {
        for w in route.windows(2) {
            hops.insert((w[0], Node::Bs(w[1])), r1);
        }
        hops.insert((*route.last().ok_or("empty route")?, Node::Ue(u)), access[u]);
    }
    let on_route = |u: usize, bs: usize, peer: Node| -> bool {
        let r = &routes[u];
        match peer {
            Node::Ue(v) => v == u && r.last() == Some(&bs),
            Node::Bs(c) => r.windows(2).any(|w| w[0] == bs && w[1] == c),
        }
    };

    let mut busy = vec![0.0; n_bs];
    let mut intervals: Vec<Vec<[f64; 2]>> = vec![Vec::new(); n_bs];
    let mut delivered: HashMap<(usize, usize, Node), f64> = HashMap::new();
    for l in &act.links {
        let expected = hops
            .get(&(l.bs, l.peer))
            .ok_or_else(|| format!("link {}->{:?} is on no route", l.bs, l.peer))?;
        if l.rate != *expected {
            return Err(format!("link {}->{:?} has rate {} not {}", l.bs, l.peer, l.rate, expected));
        }
        let mut total = 0.0;
        for &(u, tau) in &l.tau {
            if !(0.0..=1.0).contains(&tau) {
                return Err(format!("tau {tau} out of range"));
            }
            if tau > 0.0 && !on_route(u, l.bs, l.peer) {
                return Err(format!("UE {u} scheduled on {}->{:?} off its route", l.bs, l.peer));
            }
            total += tau;
            *delivered.entry((u, l.bs, l.peer)).or_default() += tau * l.rate;
        }
        let mut ends = vec![l.bs];
        if let Node::Bs(c) = l.peer {
            ends.push(c);
        }
        for &b in &ends {
            busy[b] += total;
            intervals[b].extend(l.intervals.iter().copied());
        }
        let len: f64 = l.intervals.iter().map(|iv| iv[1] - iv[0]).sum();
        if (len - total).abs() > 1e-9 {
            return Err(format!("link {}->{:?} active {len} for time shares {total}", l.bs, l.peer));
        }
    }

    for (b, t) in busy.iter().enumerate() {
        if *t > 1.0 + 1e-9 {
            return Err(format!("BS {b} busy {t}"));
        }
    }
    for (b, ivs) in intervals.iter_mut().enumerate() {
        ivs.sort_by(|a, c| a[0].total_cmp(&c[0]));
        for iv in ivs.iter() {
            if iv[0] < -1e-12 || iv[1] > 1.0 + 1e-9 || iv[1] < iv[0] {
                return Err(format!("BS {b} interval {iv:?} outside the frame"));
            }
        }
        for w in ivs.windows(2) {
            if w[1][0] < w[0][1] - 1e-12 {
                return Err(format!("BS {b} has overlapping intervals {:?} {:?}", w[0], w[1]));
            }
        }
    }

    let floor = gamma * (1.0 - rel);
    for (u, route) in routes.iter().enumerate() {
        let mut need: Vec<(usize, Node)> = route.windows(2).map(|w| (w[0], Node::Bs(w[1]))).collect();
        need.push((*route.last().unwrap(), Node::Ue(u)));
        for (b, peer) in need {
            let got = delivered.get(&(u, b, peer)).copied().unwrap_or(0.0);
            if got < floor {
                return Err(format!("UE {u} gets {got} on {b}->{peer:?}, below {floor}"));
            }
        }
    }
    Ok(())
}
