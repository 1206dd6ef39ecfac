//! k-ring street-grid deployments: base-station layout, UE placement and association.

use std::collections::HashMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::radio::RadioParams;

/// Tolerance, in meters, for deciding that a point lies on a street line.
const STREET_EPS: f64 = 1e-6;

/// Grid position of a base station in units of the inter-site distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridCoord {
    pub i: i32,
    pub j: i32,
}

impl GridCoord {
    pub const ORIGIN: GridCoord = GridCoord { i: 0, j: 0 };

    pub fn new(i: i32, j: i32) -> Self {
        Self { i, j }
    }

    /// Manhattan distance to the MBS in hops.
    pub fn ring(self) -> u32 {
        self.i.unsigned_abs() + self.j.unsigned_abs()
    }

    /// Counterclockwise angle from the positive x axis, in `[0, 2π)`.
    fn angle(self) -> f64 {
        let a = f64::from(self.j).atan2(f64::from(self.i));
        if a < 0.0 {
            a + TAU
        } else {
            a
        }
    }

    pub fn neg(self) -> Self {
        Self::new(-self.i, -self.j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Traffic direction of a UE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "DL")]
    Downlink,
    #[serde(rename = "UL")]
    Uplink,
}

/// One of the four grid directions a beam can point in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    PosX,
    PosY,
    NegX,
    NegY,
}

impl Heading {
    /// Heading from `a` towards `b` when both lie on a common axis-aligned line.
    pub fn between(a: Point, b: Point) -> Option<Heading> {
        let dx = b.x - a.x;
        let dy = b.y - a.y;
        if dy.abs() < STREET_EPS && dx.abs() >= STREET_EPS {
            Some(if dx > 0.0 { Heading::PosX } else { Heading::NegX })
        } else if dx.abs() < STREET_EPS && dy.abs() >= STREET_EPS {
            Some(if dy > 0.0 { Heading::PosY } else { Heading::NegY })
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub index: usize,
    pub coord: GridCoord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeSpec {
    /// 1-based; after association UEs are numbered in ascending serving-BS order.
    pub id: usize,
    pub position: Point,
    /// BS the UE was placed around.
    pub anchor_bs: usize,
    pub serving_bs: Option<usize>,
    pub direction: Direction,
    pub los_to_serving: bool,
    /// Base stations with a LOS path to this UE.
    pub los_bs: Vec<usize>,
}

impl UeSpec {
    pub fn is_los_to(&self, bs: usize) -> bool {
        self.los_bs.contains(&bs)
    }
}

/// Per-BS attached-UE counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadProfile {
    pub w: Vec<usize>,
    pub w_dl: Vec<usize>,
    pub w_ul: Vec<usize>,
}

impl LoadProfile {
    pub fn total(&self) -> usize {
        self.w.iter().sum()
    }

    /// Population variance of the per-BS loads.
    pub fn variance(&self) -> f64 {
        let n = self.w.len() as f64;
        let mean = self.total() as f64 / n;
        self.w.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub k: u32,
    #[serde(rename = "D")]
    pub spacing_m: f64,
    pub bs: Vec<BaseStation>,
    pub ues: Vec<UeSpec>,
}

/// How UEs are scattered over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Placement {
    /// `n` UEs around every BS at `offset_m` along the streets.
    UniformPerBs { n: usize, offset_m: f64, los: bool },
    /// Like `UniformPerBs` with an explicit count per BS index.
    PerBs {
        counts: Vec<usize>,
        offset_m: f64,
        los: bool,
    },
    /// Poisson number of UEs, each on a street through a uniformly chosen BS.
    Random {
        mean_per_bs: f64,
        los_prob: f64,
        los_range_m: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementSpec {
    pub placement: Placement,
    /// Fraction of downlink UEs.
    #[serde(default = "default_dl_fraction")]
    pub dl_fraction: f64,
}

fn default_dl_fraction() -> f64 {
    1.0
}

impl PlacementSpec {
    pub fn new(placement: Placement) -> Self {
        Self {
            placement,
            dl_fraction: 1.0,
        }
    }

    pub fn with_dl_fraction(mut self, eta: f64) -> Self {
        self.dl_fraction = eta;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationPolicy {
    Nearest,
    MinPathloss,
}

/// Number of base stations in a k-ring deployment.
pub fn bs_count(k: u32) -> usize {
    let k = k as usize;
    2 * k * (k + 1) + 1
}

/// Street indices `(horizontal j, vertical i)` a point lies on.
fn streets_of(p: Point, spacing: f64) -> (Option<i64>, Option<i64>) {
    let on = |v: f64| {
        let n = (v / spacing).round();
        ((v - n * spacing).abs() < STREET_EPS).then_some(n as i64)
    };
    (on(p.y), on(p.x))
}

/// Whether two points share a street line of a grid with the given spacing.
pub fn same_street(a: Point, b: Point, spacing: f64) -> bool {
    let (ha, va) = streets_of(a, spacing);
    let (hb, vb) = streets_of(b, spacing);
    (ha.is_some() && ha == hb) || (va.is_some() && va == vb)
}

impl Deployment {
    /// Base stations at every grid point within Manhattan distance `k` of the
    /// MBS, ordered by ring and then counterclockwise from the positive x axis.
    pub fn build_kring(k: u32, spacing_m: f64) -> Result<Self> {
        if k == 0 {
            return param("k must be at least 1");
        }
        if !(spacing_m > 0.0) || !spacing_m.is_finite() {
            return param(format!("inter-site distance must be positive, got {spacing_m}"));
        }
        let k_i = k as i32;
        let mut coords: Vec<GridCoord> = (-k_i..=k_i)
            .flat_map(|i| (-k_i..=k_i).map(move |j| GridCoord::new(i, j)))
            .filter(|c| c.ring() <= k)
            .collect();
        coords.sort_by(|a, b| {
            a.ring()
                .cmp(&b.ring())
                .then(a.angle().total_cmp(&b.angle()))
        });
        let bs = coords
            .into_iter()
            .enumerate()
            .map(|(index, coord)| BaseStation { index, coord })
            .collect();
        Ok(Self {
            k,
            spacing_m,
            bs,
            ues: Vec::new(),
        })
    }

    pub fn bs_count(&self) -> usize {
        self.bs.len()
    }

    pub fn ue_count(&self) -> usize {
        self.ues.len()
    }

    pub fn coord_index(&self) -> HashMap<GridCoord, usize> {
        self.bs.iter().map(|b| (b.coord, b.index)).collect()
    }

    pub fn index_of(&self, coord: GridCoord) -> Option<usize> {
        self.bs.iter().position(|b| b.coord == coord)
    }

    pub fn bs_position(&self, index: usize) -> Point {
        let c = self.bs[index].coord;
        Point::new(
            f64::from(c.i) * self.spacing_m,
            f64::from(c.j) * self.spacing_m,
        )
    }

    /// Base stations sharing a street with `p`, in index order.
    pub fn same_street_bs(&self, p: Point) -> Vec<usize> {
        (0..self.bs.len())
            .filter(|&b| same_street(p, self.bs_position(b), self.spacing_m))
            .collect()
    }

    /// Returns a copy of the deployment populated with UEs. Placement is a
    /// pure function of `(spec, seed)`; association is left to [`Self::associate`].
    pub fn place_ues(&self, spec: &PlacementSpec, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&spec.dl_fraction) {
            return param(format!("dl_fraction must be in [0, 1], got {}", spec.dl_fraction));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ues = match &spec.placement {
            Placement::UniformPerBs { n, offset_m, los } => {
                let counts = vec![*n; self.bs.len()];
                self.place_fixed(&counts, *offset_m, *los, spec.dl_fraction)?
            }
            Placement::PerBs {
                counts,
                offset_m,
                los,
            } => {
                if counts.len() != self.bs.len() {
                    return param(format!(
                        "per_bs counts has {} entries, deployment has {} base stations",
                        counts.len(),
                        self.bs.len()
                    ));
                }
                self.place_fixed(counts, *offset_m, *los, spec.dl_fraction)?
            }
            Placement::Random {
                mean_per_bs,
                los_prob,
                los_range_m,
            } => self.place_random(
                *mean_per_bs,
                *los_prob,
                *los_range_m,
                spec.dl_fraction,
                &mut rng,
            )?,
        };
        Ok(Self {
            ues,
            ..self.clone()
        })
    }

    fn place_fixed(
        &self,
        counts: &[usize],
        offset_m: f64,
        los: bool,
        dl_fraction: f64,
    ) -> Result<Vec<UeSpec>> {
        if !(offset_m > 0.0) {
            return param(format!("offset_m must be positive, got {offset_m}"));
        }
        if offset_m >= self.spacing_m {
            return param(format!(
                "offset_m {offset_m} must be below the inter-site distance {}",
                self.spacing_m
            ));
        }
        let mut ues = Vec::new();
        for (b, &n) in counts.iter().enumerate() {
            let headings = self.placement_headings(b);
            let n_dl = (dl_fraction * n as f64).round() as usize;
            for m in 0..n {
                let (dx, dy) = headings[m % headings.len()];
                let origin = self.bs_position(b);
                let position = Point::new(origin.x + dx * offset_m, origin.y + dy * offset_m);
                let los_bs = if los {
                    self.same_street_bs(position)
                        .into_iter()
                        .filter(|&c| self.bs_position(c).distance(position) <= self.spacing_m + STREET_EPS)
                        .collect()
                } else {
                    Vec::new()
                };
                ues.push(UeSpec {
                    id: ues.len() + 1,
                    position,
                    anchor_bs: b,
                    serving_bs: None,
                    direction: if m < n_dl {
                        Direction::Downlink
                    } else {
                        Direction::Uplink
                    },
                    los_to_serving: false,
                    los_bs,
                });
            }
        }
        Ok(ues)
    }

    /// Outward street directions first (towards higher rings, so lower-index
    /// tie-breaks keep a UE on its anchor), then the inward ones.
    fn placement_headings(&self, b: usize) -> Vec<(f64, f64)> {
        let c = self.bs[b].coord;
        let all = [(1, 0), (0, 1), (-1, 0), (0, -1)];
        let ring_of = |(di, dj): (i32, i32)| GridCoord::new(c.i + di, c.j + dj).ring();
        let outward = all.iter().copied().filter(|&d| ring_of(d) > c.ring());
        let inward = all.iter().copied().filter(|&d| ring_of(d) <= c.ring());
        outward
            .chain(inward)
            .map(|(di, dj)| (f64::from(di), f64::from(dj)))
            .collect()
    }

    fn place_random(
        &self,
        mean_per_bs: f64,
        los_prob: f64,
        los_range_m: f64,
        dl_fraction: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<UeSpec>> {
        if !(mean_per_bs >= 0.0) || !mean_per_bs.is_finite() {
            return param(format!("mean_per_bs must be non-negative, got {mean_per_bs}"));
        }
        if !(0.0..=1.0).contains(&los_prob) {
            return param(format!("los_prob must be in [0, 1], got {los_prob}"));
        }
        if !(los_range_m >= 0.0) {
            return param(format!("los_range_m must be non-negative, got {los_range_m}"));
        }
        let lambda = mean_per_bs * self.bs.len() as f64;
        let total = if lambda > 0.0 {
            Poisson::new(lambda)
                .map_err(|e| Error::Param(e.to_string()))?
                .sample(rng) as usize
        } else {
            0
        };
        let half = self.spacing_m / 2.0;
        let mut ues = Vec::with_capacity(total);
        for _ in 0..total {
            let anchor = rng.random_range(0..self.bs.len());
            let along_x = rng.random_bool(0.5);
            let mut offset: f64 = 0.0;
            while offset.abs() < 1e-3 {
                offset = rng.random_range(-half..=half);
            }
            let origin = self.bs_position(anchor);
            let position = if along_x {
                Point::new(origin.x + offset, origin.y)
            } else {
                Point::new(origin.x, origin.y + offset)
            };
            let mut los_bs = Vec::new();
            for c in self.same_street_bs(position) {
                if self.bs_position(c).distance(position) <= los_range_m && rng.random_bool(los_prob) {
                    los_bs.push(c);
                }
            }
            let direction = if rng.random_bool(dl_fraction) {
                Direction::Downlink
            } else {
                Direction::Uplink
            };
            ues.push(UeSpec {
                id: 0,
                position,
                anchor_bs: anchor,
                serving_bs: None,
                direction,
                los_to_serving: false,
                los_bs,
            });
        }
        ues.sort_by_key(|u| u.anchor_bs);
        for (n, u) in ues.iter_mut().enumerate() {
            u.id = n + 1;
        }
        Ok(ues)
    }

    /// Serves every UE from exactly one same-street BS. UEs are re-numbered
    /// 1..U in ascending order of their serving BS.
    pub fn associate(&self, policy: AssociationPolicy, radio: &RadioParams) -> Result<Self> {
        let mut ues = self.ues.clone();
        for ue in &mut ues {
            let candidates = self.same_street_bs(ue.position);
            let mut best: Option<(usize, f64)> = None;
            for c in candidates {
                let dist = self.bs_position(c).distance(ue.position);
                if dist <= 0.0 {
                    continue;
                }
                let score = match policy {
                    AssociationPolicy::Nearest => -dist,
                    AssociationPolicy::MinPathloss => radio.path_gain(dist, ue.is_los_to(c)).log10(),
                };
                // Strict improvement only: ties keep the lower index.
                if best.map_or(true, |(_, s)| score > s + 1e-12 * s.abs().max(1.0)) {
                    best = Some((c, score));
                }
            }
            let (serving, _) = best.ok_or_else(|| Error::Association {
                ue: ue.id,
                reason: "no same-street base station in range".into(),
            })?;
            ue.serving_bs = Some(serving);
            ue.los_to_serving = ue.is_los_to(serving);
        }
        ues.sort_by_key(|u| u.serving_bs);
        for (n, u) in ues.iter_mut().enumerate() {
            u.id = n + 1;
        }
        Ok(Self {
            ues,
            ..self.clone()
        })
    }

    pub fn is_associated(&self) -> bool {
        self.ues.iter().all(|u| u.serving_bs.is_some())
    }

    /// Serving BS of every UE, failing if association has not run.
    pub fn serving(&self) -> Result<Vec<usize>> {
        self.ues
            .iter()
            .map(|u| {
                u.serving_bs.ok_or_else(|| Error::Association {
                    ue: u.id,
                    reason: "UE is not associated".into(),
                })
            })
            .collect()
    }

    pub fn load_profile(&self) -> Result<LoadProfile> {
        let n = self.bs.len();
        let mut lp = LoadProfile {
            w: vec![0; n],
            w_dl: vec![0; n],
            w_ul: vec![0; n],
        };
        for (ue, b) in self.ues.iter().zip(self.serving()?) {
            lp.w[b] += 1;
            match ue.direction {
                Direction::Downlink => lp.w_dl[b] += 1,
                Direction::Uplink => lp.w_ul[b] += 1,
            }
        }
        Ok(lp)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let dep: Self = serde_json::from_str(s)?;
        if dep.bs.len() != bs_count(dep.k) {
            return param(format!(
                "deployment lists {} base stations, a {}-ring grid has {}",
                dep.bs.len(),
                dep.k,
                bs_count(dep.k)
            ));
        }
        Ok(dep)
    }
}
