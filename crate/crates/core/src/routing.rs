//! Route tables and effective loads.
//!
//! A route is the ordered list of base stations a UE's data visits, starting
//! at the MBS (index 0) and ending at the UE's serving BS; the UE itself is
//! the implicit last node.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{Deployment, Direction, GridCoord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteTable {
    /// Parent of every BS, when the routes give it a unique one.
    pub parent: Vec<Option<usize>>,
    /// Per UE, in deployment order.
    pub routes: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectiveLoads {
    pub f: Vec<usize>,
    pub f_dl: Vec<usize>,
    pub f_ul: Vec<usize>,
    pub w: Vec<usize>,
    pub w_dl: Vec<usize>,
    pub w_ul: Vec<usize>,
    /// `1 +` number of relays served through each BS; only defined when every
    /// relay has a unique parent.
    pub g: Option<Vec<usize>>,
}

/// BS path of nearest-neighbour highway routing from the MBS to `c`.
///
/// Traffic first runs along the highway towards whichever of `(i,0)` and
/// `(0,j)` is farther from the MBS, then turns onto the street of `c`. On the
/// diagonals `|i| = |j|` the x highway is used when `i·j > 0` and the y
/// highway otherwise, so `(i,j)` and `(-i,-j)` always use the same axis.
pub fn highway_path(c: GridCoord) -> Vec<GridCoord> {
    let mut path = vec![GridCoord::ORIGIN];
    let via_x = match c.i.abs().cmp(&c.j.abs()) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => c.i * c.j > 0,
    };
    let mut cur = GridCoord::ORIGIN;
    let mut walk = |target: GridCoord, path: &mut Vec<GridCoord>| {
        while cur != target {
            if cur.i != target.i {
                cur.i += (target.i - cur.i).signum();
            } else {
                cur.j += (target.j - cur.j).signum();
            }
            path.push(cur);
        }
    };
    if via_x {
        walk(GridCoord::new(c.i, 0), &mut path);
    } else {
        walk(GridCoord::new(0, c.j), &mut path);
    }
    walk(c, &mut path);
    path
}

/// Nearest-neighbour highway routing for an associated deployment.
pub fn nnhr_routes(dep: &Deployment) -> Result<RouteTable> {
    let index = dep.coord_index();
    let bs_paths: Vec<Vec<usize>> = dep
        .bs
        .iter()
        .map(|b| highway_path(b.coord).into_iter().map(|c| index[&c]).collect())
        .collect();
    let parent = bs_paths
        .iter()
        .map(|p| (p.len() >= 2).then(|| p[p.len() - 2]))
        .collect();
    let routes = dep
        .serving()?
        .into_iter()
        .map(|b| bs_paths[b].clone())
        .collect();
    Ok(RouteTable { parent, routes })
}

impl RouteTable {
    /// Builds a table from arbitrary per-UE routes; parents are recorded only
    /// where every route agrees.
    pub fn from_routes(n_bs: usize, routes: Vec<Vec<usize>>) -> Result<Self> {
        let mut parent: Vec<Option<usize>> = vec![None; n_bs];
        let mut conflicted = vec![false; n_bs];
        for route in &routes {
            for hop in route.windows(2) {
                let (a, b) = (hop[0], hop[1]);
                if a >= n_bs || b >= n_bs {
                    return Err(Error::Route(format!("unknown base station in hop {a} -> {b}")));
                }
                match parent[b] {
                    None if !conflicted[b] => parent[b] = Some(a),
                    Some(p) if p != a => {
                        parent[b] = None;
                        conflicted[b] = true;
                    }
                    _ => {}
                }
            }
        }
        Ok(Self { parent, routes })
    }

    pub fn hop_count(&self, ue: usize) -> usize {
        // BS-to-BS hops plus the access hop.
        self.routes[ue].len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn effective_loads(rt: &RouteTable, dep: &Deployment) -> Result<EffectiveLoads> {
    let n = dep.bs_count();
    let lp = dep.load_profile()?;
    let mut f = vec![0; n];
    let mut f_dl = vec![0; n];
    let mut f_ul = vec![0; n];
    for (route, ue) in rt.routes.iter().zip(&dep.ues) {
        let visited: HashSet<usize> = route.iter().copied().collect();
        for b in visited {
            f[b] += 1;
            match ue.direction {
                Direction::Downlink => f_dl[b] += 1,
                Direction::Uplink => f_ul[b] += 1,
            }
        }
    }
    Ok(EffectiveLoads {
        f,
        f_dl,
        f_ul,
        w: lp.w,
        w_dl: lp.w_dl,
        w_ul: lp.w_ul,
        g: subtree_sizes(&rt.parent),
    })
}

/// Number of BSs in the subtree rooted at each BS (itself included).
pub fn subtree_sizes(parent: &[Option<usize>]) -> Option<Vec<usize>> {
    let n = parent.len();
    if parent.iter().skip(1).any(Option::is_none) {
        return None;
    }
    let mut g = vec![1; n];
    for b in 1..n {
        let mut cur = b;
        let mut steps = 0;
        while let Some(p) = parent[cur] {
            g[p] += 1;
            cur = p;
            steps += 1;
            if steps > n {
                return None;
            }
        }
    }
    Some(g)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    EmptyRoute,
    NotFromMbs { first: usize },
    Revisit { bs: usize },
    OffStreetHop { from: usize, to: usize },
    /// Hop longer than one inter-site distance; allowed, reported as a flag.
    NonNearestHop { from: usize, to: usize },
    WrongServingBs { expected: usize, found: usize },
    MultipleParents { bs: usize, parents: Vec<usize> },
    UnknownBs { bs: usize },
    MissingRoute,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// UE id, when the violation belongs to one route.
    pub ue: Option<usize>,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

impl Violation {
    /// Flags are reported but do not make a table invalid.
    pub fn is_flag(&self) -> bool {
        matches!(self.kind, ViolationKind::NonNearestHop { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(ue) = self.ue {
            write!(f, "UE {ue}: ")?;
        }
        match &self.kind {
            ViolationKind::EmptyRoute => write!(f, "empty route"),
            ViolationKind::NotFromMbs { first } => write!(f, "route starts at BS {first}, not the MBS"),
            ViolationKind::Revisit { bs } => write!(f, "revisit of BS {bs}"),
            ViolationKind::OffStreetHop { from, to } => write!(f, "off-street backhaul hop {from} -> {to}"),
            ViolationKind::NonNearestHop { from, to } => write!(f, "non-nearest-neighbour hop {from} -> {to}"),
            ViolationKind::WrongServingBs { expected, found } => {
                write!(f, "route ends at BS {found}, UE is served by BS {expected}")
            }
            ViolationKind::MultipleParents { bs, parents } => {
                write!(f, "BS {bs} has multiple parents {parents:?}")
            }
            ViolationKind::UnknownBs { bs } => write!(f, "unknown BS {bs}"),
            ViolationKind::MissingRoute => write!(f, "missing route"),
        }
    }
}

/// Checks a route table against the routing rules and lists every violation.
pub fn validate_routes(rt: &RouteTable, dep: &Deployment) -> Vec<Violation> {
    let n = dep.bs_count();
    let mut out = Vec::new();
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
    if rt.routes.len() != dep.ue_count() {
        for ue in dep.ues.iter().skip(rt.routes.len()) {
            out.push(Violation {
                ue: Some(ue.id),
                kind: ViolationKind::MissingRoute,
            });
        }
    }
    for (route, ue) in rt.routes.iter().zip(&dep.ues) {
        let v = |kind| Violation {
            ue: Some(ue.id),
            kind,
        };
        let Some(&first) = route.first() else {
            out.push(v(ViolationKind::EmptyRoute));
            continue;
        };
        if let Some(&bad) = route.iter().find(|&&b| b >= n) {
            out.push(v(ViolationKind::UnknownBs { bs: bad }));
            continue;
        }
        if first != 0 {
            out.push(v(ViolationKind::NotFromMbs { first }));
        }
        let mut seen = HashSet::new();
        for &b in route {
            if !seen.insert(b) {
                out.push(v(ViolationKind::Revisit { bs: b }));
            }
        }
        for hop in route.windows(2) {
            let (a, b) = (dep.bs[hop[0]].coord, dep.bs[hop[1]].coord);
            if a.i != b.i && a.j != b.j {
                out.push(v(ViolationKind::OffStreetHop {
                    from: hop[0],
                    to: hop[1],
                }));
            } else if (a.i - b.i).abs() + (a.j - b.j).abs() > 1 {
                out.push(v(ViolationKind::NonNearestHop {
                    from: hop[0],
                    to: hop[1],
                }));
            }
            if !parents[hop[1]].contains(&hop[0]) {
                parents[hop[1]].push(hop[0]);
            }
        }
        if let (Some(expected), Some(&last)) = (ue.serving_bs, route.last()) {
            if expected != last {
                out.push(v(ViolationKind::WrongServingBs {
                    expected,
                    found: last,
                }));
            }
        }
    }
    for (bs, ps) in parents.into_iter().enumerate() {
        if ps.len() > 1 {
            out.push(Violation {
                ue: None,
                kind: ViolationKind::MultipleParents { bs, parents: ps },
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::RadioParams;
    use crate::topology::{AssociationPolicy, Placement, PlacementSpec};

    fn uniform(k: u32, n: usize) -> Deployment {
        Deployment::build_kring(k, 200.0)
            .unwrap()
            .place_ues(
                &PlacementSpec::new(Placement::UniformPerBs {
                    n,
                    offset_m: 50.0,
                    los: true,
                }),
                0,
            )
            .unwrap()
            .associate(AssociationPolicy::Nearest, &RadioParams::default())
            .unwrap()
    }

    fn coords(p: &[GridCoord]) -> Vec<(i32, i32)> {
        p.iter().map(|c| (c.i, c.j)).collect()
    }

    #[test]
    fn highway_examples() {
        assert_eq!(
            coords(&highway_path(GridCoord::new(2, 1))),
            vec![(0, 0), (1, 0), (2, 0), (2, 1)]
        );
        assert_eq!(coords(&highway_path(GridCoord::ORIGIN)), vec![(0, 0)]);
        assert_eq!(
            coords(&highway_path(GridCoord::new(1, 1))),
            vec![(0, 0), (1, 0), (1, 1)]
        );
        assert_eq!(
            coords(&highway_path(GridCoord::new(-1, -1))),
            vec![(0, 0), (-1, 0), (-1, -1)]
        );
        assert_eq!(
            coords(&highway_path(GridCoord::new(1, -3))),
            vec![(0, 0), (0, -1), (0, -2), (0, -3), (1, -3)]
        );
    }

    #[test]
    fn k1_loads() {
        let d = uniform(1, 1);
        let rt = nnhr_routes(&d).unwrap();
        let l = effective_loads(&rt, &d).unwrap();
        assert_eq!(l.f, vec![5, 1, 1, 1, 1]);
        assert_eq!(l.g.unwrap(), vec![5, 1, 1, 1, 1]);
        assert!(validate_routes(&rt, &d).is_empty());
    }

    #[test]
    fn k2_loads_match_route_enumeration() {
        let d = uniform(2, 1);
        let rt = nnhr_routes(&d).unwrap();
        let l = effective_loads(&rt, &d).unwrap();
        // (1,0) relays (2,0) and (1,1); (0,-1) relays (1,-1) and (0,-2).
        let idx = |i, j| d.index_of(GridCoord::new(i, j)).unwrap();
        assert_eq!(l.f[idx(1, 0)], 3);
        assert_eq!(l.f[idx(-1, 0)], 3);
        assert_eq!(l.f[idx(0, 1)], 3);
        assert_eq!(l.f[idx(0, -1)], 3);
        assert_eq!(l.f[0], 13);
        let g = l.g.unwrap();
        assert_eq!(g[0], 13);
        for b in &d.bs {
            assert_eq!(g[b.index], g[idx(-b.coord.i, -b.coord.j)]);
        }
    }

    #[test]
    fn empty_network_has_zero_loads() {
        let d = uniform(2, 0);
        let rt = nnhr_routes(&d).unwrap();
        let l = effective_loads(&rt, &d).unwrap();
        assert!(l.f.iter().all(|&x| x == 0));
    }

    #[test]
    fn detects_violations() {
        let d = uniform(2, 2);
        let idx = |i, j| d.index_of(GridCoord::new(i, j)).unwrap();
        let mut routes = nnhr_routes(&d).unwrap().routes;
        let ue_at_11 = d.ues.iter().position(|u| u.serving_bs == Some(idx(1, 1))).unwrap();
        routes[ue_at_11] = vec![0, idx(1, 1)];
        let ue_at_20 = d.ues.iter().position(|u| u.serving_bs == Some(idx(2, 0))).unwrap();
        routes[ue_at_20] = vec![0, idx(1, 0), 0, idx(1, 0), idx(2, 0)];
        let rt = RouteTable::from_routes(d.bs_count(), routes).unwrap();
        let v = validate_routes(&rt, &d);
        let text: Vec<String> = v.iter().map(ToString::to_string).collect();
        assert!(text.iter().any(|s| s.contains("off-street backhaul hop")), "{text:?}");
        assert!(text.iter().any(|s| s.contains("revisit")), "{text:?}");
        assert!(v.iter().any(|x| matches!(x.kind, ViolationKind::MultipleParents { .. })));
    }

    #[test]
    fn long_hops_are_flagged() {
        let d = uniform(2, 1);
        let idx = |i, j| d.index_of(GridCoord::new(i, j)).unwrap();
        let mut routes = nnhr_routes(&d).unwrap().routes;
        let ue = d.ues.iter().position(|u| u.serving_bs == Some(idx(2, 0))).unwrap();
        routes[ue] = vec![0, idx(2, 0)];
        let rt = RouteTable::from_routes(d.bs_count(), routes).unwrap();
        let v = validate_routes(&rt, &d);
        assert_eq!(v.len(), 1);
        assert!(v[0].is_flag());
    }

    #[test]
    fn json_round_trip() {
        let d = uniform(2, 1);
        let rt = nnhr_routes(&d).unwrap();
        assert_eq!(RouteTable::from_json(&rt.to_json().unwrap()).unwrap(), rt);
    }
}
