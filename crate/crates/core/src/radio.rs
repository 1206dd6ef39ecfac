//! Link-budget model: received power, SNR capping, rate mapping, full-duplex
//! self-interference and the interference models used by the oracle and simulator.
//!
//! Power arithmetic is linear (mW); dB only appears in parameters and reports.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::topology::{same_street, Deployment, Direction, Heading, Point};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub bs_power_dbm: f64,
    pub ue_power_dbm: f64,
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    /// NLOS correction factor Υ_n in dB.
    pub nlos_correction_db: f64,
    pub bs_antennas: u32,
    pub ue_antennas: u32,
    /// Per-antenna SNR ceiling; the receiver cap is this times the receive antenna count.
    pub snr_max_db: f64,
    pub se_max: f64,
    /// Spectral efficiency below which a link carries nothing.
    pub se_min: f64,
    pub noise_figure_db: f64,
    pub front_to_back_db: f64,
    /// Same-street interference paths are LOS up to this distance in the worst-case model.
    pub los_range_m: f64,
    /// Residual self-interference of full-duplex BSs relative to transmit power.
    pub self_interference_db: Option<f64>,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            carrier_hz: 28e9,
            bandwidth_hz: 800e6,
            bs_power_dbm: 30.0,
            ue_power_dbm: 23.0,
            alpha_los: 2.0,
            alpha_nlos: 3.4,
            nlos_correction_db: -5.0,
            bs_antennas: 64,
            ue_antennas: 16,
            snr_max_db: 16.0,
            se_max: 10.0,
            se_min: 0.02,
            noise_figure_db: 10.0,
            front_to_back_db: 25.0,
            los_range_m: 200.0,
            self_interference_db: None,
        }
    }
}

/// Effective SNR of a receiver whose SNR is limited by `cap`:
/// `(1/actual + 1/cap)^-1`, i.e. half the harmonic mean of the two.
pub fn effective_snr(actual: f64, cap: f64) -> f64 {
    if actual <= 0.0 || cap <= 0.0 {
        return 0.0;
    }
    1.0 / (1.0 / actual + 1.0 / cap)
}

/// A transmitter or receiver as seen by the radio model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioNode {
    pub position: Point,
    pub is_bs: bool,
}

impl RadioNode {
    pub fn bs(position: Point) -> Self {
        Self {
            position,
            is_bs: true,
        }
    }

    pub fn ue(position: Point) -> Self {
        Self {
            position,
            is_bs: false,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) {
            return param("bandwidth must be positive");
        }
        if !(self.carrier_hz > 0.0) {
            return param("carrier frequency must be positive");
        }
        if self.alpha_los > self.alpha_nlos {
            return param("LOS path-loss exponent exceeds the NLOS one");
        }
        if !(self.se_min < self.se_max) {
            return param("se_min must be below se_max");
        }
        if self.bs_antennas == 0 || self.ue_antennas == 0 {
            return param("antenna counts must be positive");
        }
        if let Some(si) = self.self_interference_db {
            if si > 0.0 {
                return param(format!("self-interference must be <= 0 dB, got {si}"));
            }
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// `(λ/4π)²`
    fn free_space_constant(&self) -> f64 {
        (self.wavelength_m() / (4.0 * std::f64::consts::PI)).powi(2)
    }

    pub fn noise_dbm(&self) -> f64 {
        -174.0 + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db
    }

    pub fn noise_mw(&self) -> f64 {
        db_to_linear(self.noise_dbm())
    }

    /// Residual self-interference at a full-duplex BS receiver, in mW.
    pub fn self_interference_mw(&self) -> f64 {
        self.self_interference_db
            .map_or(0.0, |si| db_to_linear(self.bs_power_dbm + si))
    }

    /// `Υ x^{-α}` for a LOS or NLOS path.
    pub fn path_gain(&self, distance_m: f64, los: bool) -> f64 {
        if los {
            distance_m.powf(-self.alpha_los)
        } else {
            db_to_linear(self.nlos_correction_db) * distance_m.powf(-self.alpha_nlos)
        }
    }

    pub fn received_power_mw(
        &self,
        tx_power_dbm: f64,
        gain_product: f64,
        distance_m: f64,
        los: bool,
    ) -> Result<f64> {
        if !(distance_m > 0.0) {
            return param(format!("link distance must be positive, got {distance_m}"));
        }
        Ok(self.free_space_constant()
            * db_to_linear(tx_power_dbm)
            * gain_product
            * self.path_gain(distance_m, los))
    }

    pub fn antennas(&self, is_bs: bool) -> f64 {
        f64::from(if is_bs {
            self.bs_antennas
        } else {
            self.ue_antennas
        })
    }

    pub fn tx_power_dbm(&self, is_bs: bool) -> f64 {
        if is_bs {
            self.bs_power_dbm
        } else {
            self.ue_power_dbm
        }
    }

    /// Receiver SNR ceiling `SNR_max · N_r`.
    pub fn snr_cap(&self, rx_is_bs: bool) -> f64 {
        db_to_linear(self.snr_max_db) * self.antennas(rx_is_bs)
    }

    /// `W min(log2(1 + snr), SE_max)`, zero below the SE floor.
    pub fn link_rate(&self, effective_snr: f64) -> f64 {
        let se = (1.0 + effective_snr.max(0.0)).log2().min(self.se_max);
        if se < self.se_min {
            0.0
        } else {
            self.bandwidth_hz * se
        }
    }

    /// Desired-signal power between two nodes with full beam alignment.
    pub fn desired_power_mw(&self, tx: RadioNode, rx: RadioNode, los: bool) -> Result<f64> {
        self.received_power_mw(
            self.tx_power_dbm(tx.is_bs),
            self.antennas(tx.is_bs) * self.antennas(rx.is_bs),
            tx.position.distance(rx.position),
            los,
        )
    }

    /// Rate of a link given its signal, interference and extra noise (e.g.
    /// self-interference) at the receiver.
    pub fn rate_from_powers(&self, signal_mw: f64, interference_mw: f64, extra_noise_mw: f64, rx_is_bs: bool) -> f64 {
        let sinr = signal_mw / (self.noise_mw() + extra_noise_mw + interference_mw);
        self.link_rate(effective_snr(sinr, self.snr_cap(rx_is_bs)))
    }

    fn access_nodes(&self, distance_m: f64, direction: Direction) -> (RadioNode, RadioNode) {
        let bs = RadioNode::bs(Point::new(0.0, 0.0));
        let ue = RadioNode::ue(Point::new(distance_m, 0.0));
        match direction {
            Direction::Downlink => (bs, ue),
            Direction::Uplink => (ue, bs),
        }
    }

    /// Noise-limited access rate of a UE at `distance_m` from its BS.
    pub fn access_rate(&self, distance_m: f64, los: bool, direction: Direction) -> Result<f64> {
        let (tx, rx) = self.access_nodes(distance_m, direction);
        let s = self.desired_power_mw(tx, rx, los)?;
        Ok(self.rate_from_powers(s, 0.0, 0.0, rx.is_bs))
    }

    /// Access rate when the BS operates in full duplex. Only uplink receivers
    /// (the BS) see self-interference.
    pub fn access_rate_fd(&self, distance_m: f64, los: bool, direction: Direction) -> Result<f64> {
        let (tx, rx) = self.access_nodes(distance_m, direction);
        let s = self.desired_power_mw(tx, rx, los)?;
        let extra = if rx.is_bs {
            self.self_interference_mw()
        } else {
            0.0
        };
        Ok(self.rate_from_powers(s, 0.0, extra, rx.is_bs))
    }

    fn backhaul_signal(&self, spacing_m: f64, hops: u32) -> Result<f64> {
        if hops == 0 {
            return param("backhaul hop length multiplier must be >= 1");
        }
        let a = RadioNode::bs(Point::new(0.0, 0.0));
        let b = RadioNode::bs(Point::new(spacing_m * f64::from(hops), 0.0));
        self.desired_power_mw(a, b, true)
    }

    /// LOS backhaul rate over a hop of length `hops · spacing`.
    pub fn backhaul_rate(&self, spacing_m: f64, hops: u32) -> Result<f64> {
        let s = self.backhaul_signal(spacing_m, hops)?;
        Ok(self.rate_from_powers(s, 0.0, 0.0, true))
    }

    pub fn backhaul_rate_fd(&self, spacing_m: f64, hops: u32) -> Result<f64> {
        let s = self.backhaul_signal(spacing_m, hops)?;
        Ok(self.rate_from_powers(s, 0.0, self.self_interference_mw(), true))
    }
}

/// Noise-limited per-link rates of an associated deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    /// Per UE, in deployment order.
    pub access: Vec<f64>,
    /// `backhaul[h - 1]` is the rate of a hop of length `h · D`, `h = 1..=k`.
    pub backhaul: Vec<f64>,
    pub access_fd: Vec<f64>,
    pub backhaul_fd: Vec<f64>,
}

impl RateTable {
    pub fn compute(dep: &Deployment, params: &RadioParams) -> Result<Self> {
        params.validate()?;
        let serving = dep.serving()?;
        let mut access = Vec::with_capacity(dep.ue_count());
        let mut access_fd = Vec::with_capacity(dep.ue_count());
        for (ue, &b) in dep.ues.iter().zip(&serving) {
            let dist = dep.bs_position(b).distance(ue.position);
            let los = ue.is_los_to(b);
            access.push(params.access_rate(dist, los, ue.direction)?);
            access_fd.push(params.access_rate_fd(dist, los, ue.direction)?);
        }
        let hops = 1..=dep.k;
        let backhaul = hops
            .clone()
            .map(|h| params.backhaul_rate(dep.spacing_m, h))
            .collect::<Result<_>>()?;
        let backhaul_fd = hops
            .map(|h| params.backhaul_rate_fd(dep.spacing_m, h))
            .collect::<Result<_>>()?;
        Ok(Self {
            access,
            backhaul,
            access_fd,
            backhaul_fd,
        })
    }

    /// Nearest-neighbour backhaul rate `R_1`.
    pub fn r1(&self) -> f64 {
        self.backhaul[0]
    }

    pub fn r1_fd(&self) -> f64 {
        self.backhaul_fd[0]
    }
}

/// Interference scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Maximum gains on every path; same-street LOS within `los_range_m`,
    /// everything else with the NLOS exponent.
    WorstCase,
    /// Two-level beams, no cross-street interference, same-street paths LOS.
    DirectionalS1,
    /// Two-level beams, no cross-street interference, only adjacent-BS paths LOS.
    DirectionalS2,
}

/// Interference power between an interfering transmitter and a victim receiver.
#[derive(Debug, Clone, Copy)]
pub struct InterferenceModel {
    pub scenario: Scenario,
    pub spacing_m: f64,
}

impl InterferenceModel {
    pub fn new(scenario: Scenario, spacing_m: f64) -> Self {
        Self {
            scenario,
            spacing_m,
        }
    }

    /// Power, in mW, that `tx` (beam along `tx_heading`) leaks into `rx`
    /// (beam along `rx_heading`). Interference paths carry no blockage
    /// correction factor, only the path-loss exponent.
    pub fn power_mw(
        &self,
        params: &RadioParams,
        tx: RadioNode,
        tx_heading: Option<Heading>,
        rx: RadioNode,
        rx_heading: Option<Heading>,
    ) -> f64 {
        let dist = tx.position.distance(rx.position);
        if dist <= 0.0 {
            return 0.0;
        }
        let co_street = same_street(tx.position, rx.position, self.spacing_m);
        let g_tx = params.antennas(tx.is_bs);
        let g_rx = params.antennas(rx.is_bs);
        let (gains, alpha) = match self.scenario {
            Scenario::WorstCase => {
                let alpha = if co_street && dist <= params.los_range_m {
                    params.alpha_los
                } else {
                    params.alpha_nlos
                };
                (g_tx * g_rx, alpha)
            }
            Scenario::DirectionalS1 | Scenario::DirectionalS2 => {
                if !co_street {
                    return 0.0;
                }
                let fb = db_to_linear(-params.front_to_back_db);
                let toward_rx = Heading::between(tx.position, rx.position);
                let toward_tx = Heading::between(rx.position, tx.position);
                let gt = if tx_heading.is_some() && tx_heading == toward_rx {
                    g_tx
                } else {
                    g_tx * fb
                };
                let gr = if rx_heading.is_some() && rx_heading == toward_tx {
                    g_rx
                } else {
                    g_rx * fb
                };
                let los = match self.scenario {
                    Scenario::DirectionalS1 => true,
                    _ => tx.is_bs && rx.is_bs && (dist - self.spacing_m).abs() < 1e-6,
                };
                let alpha = if los {
                    params.alpha_los
                } else {
                    params.alpha_nlos
                };
                (gt * gr, alpha)
            }
        };
        params.free_space_constant() * db_to_linear(params.tx_power_dbm(tx.is_bs)) * gains * dist.powf(-alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p() -> RadioParams {
        RadioParams::default()
    }

    #[test]
    fn received_power_matches_link_budget() {
        // 30 dBm - 61.39 dB (λ/4π)² + 30.10 dB (1024) - 40 dB
        let pr = p().received_power_mw(30.0, 1024.0, 100.0, true).unwrap();
        assert_relative_eq!(linear_to_db(pr), -41.287_944_282_329_64, max_relative = 1e-9);
        let far = p().received_power_mw(30.0, 1024.0, 200.0, true).unwrap();
        assert_relative_eq!(linear_to_db(pr) - linear_to_db(far), 20.0 * 2f64.log10(), epsilon = 1e-9);
        // NLOS: -5 dB correction and (3.4 - 2)·10·log10(100) = 28 dB extra loss.
        let nlos = p().received_power_mw(30.0, 1024.0, 100.0, false).unwrap();
        assert_relative_eq!(linear_to_db(pr) - linear_to_db(nlos), 33.0, epsilon = 1e-9);
        assert!(p().received_power_mw(30.0, 1.0, 0.0, true).is_err());
    }

    #[test]
    fn effective_snr_cases() {
        assert_relative_eq!(effective_snr(7.0, 7.0), 3.5);
        assert_relative_eq!(effective_snr(40.0, 1e300), 40.0, max_relative = 1e-12);
        let e = effective_snr(db_to_linear(33.7), db_to_linear(28.0));
        assert_relative_eq!(linear_to_db(e), 26.965, epsilon = 0.01);
        assert_eq!(effective_snr(0.0, 10.0), 0.0);
    }

    #[test]
    fn link_rate_clamps() {
        let r = p();
        assert_relative_eq!(r.link_rate(4095.0), 8e9, max_relative = 1e-12);
        assert_eq!(r.link_rate(0.0), 0.0);
        // log2(1 + s) = 0.01 < 0.02
        assert_eq!(r.link_rate(2f64.powf(0.01) - 1.0), 0.0);
        assert_relative_eq!(r.link_rate(2f64.powf(0.03) - 1.0), 0.03 * 800e6, max_relative = 1e-9);
    }

    #[test]
    fn default_backhaul_saturates() {
        let r = p();
        assert_relative_eq!(r.backhaul_rate(200.0, 1).unwrap(), 8e9, max_relative = 1e-12);
        let rates: Vec<f64> = (1..=6).map(|h| r.backhaul_rate(200.0, h).unwrap()).collect();
        assert!(rates.windows(2).all(|w| w[1] <= w[0]));
        assert!(rates[5] < rates[0]);
        assert_eq!(r.backhaul_rate(1e9, 1).unwrap(), 0.0);
        assert!(r.backhaul_rate(200.0, 0).is_err());
    }

    #[test]
    fn default_access_rate() {
        let ra = p().access_rate(100.0, true, Direction::Downlink).unwrap();
        assert_relative_eq!(ra, 7_175_876_324.453_331, max_relative = 1e-9);
    }

    #[test]
    fn full_duplex_backhaul() {
        let mut r = p();
        r.self_interference_db = Some(-80.0);
        // Noise floor raised by 10^((30 - 80)/10) mW.
        assert_relative_eq!(r.backhaul_rate_fd(200.0, 1).unwrap(), 2_454_746_868.804_926, max_relative = 1e-6);
        r.self_interference_db = Some(-300.0);
        assert_relative_eq!(
            r.backhaul_rate_fd(200.0, 1).unwrap(),
            r.backhaul_rate(200.0, 1).unwrap(),
            max_relative = 1e-9
        );
        let ul = r.access_rate(100.0, true, Direction::Uplink).unwrap();
        assert_relative_eq!(r.access_rate_fd(100.0, true, Direction::Uplink).unwrap(), ul, max_relative = 1e-9);
        r.self_interference_db = Some(1.0);
        assert!(r.validate().is_err());
    }

    #[test]
    fn si_sweep_is_monotone() {
        let mut last = f64::INFINITY;
        for si in (-120..=-60).step_by(5) {
            let r = RadioParams {
                self_interference_db: Some(f64::from(si)),
                ..p()
            };
            let bh = r.backhaul_rate_fd(200.0, 1).unwrap();
            let ul = r.access_rate_fd(100.0, true, Direction::Uplink).unwrap();
            assert!(bh <= last + 1e-6);
            assert!(bh <= r.backhaul_rate(200.0, 1).unwrap());
            assert!(ul <= r.access_rate(100.0, true, Direction::Uplink).unwrap());
            last = bh;
        }
    }

    #[test]
    fn directional_gains() {
        let r = p();
        let m = InterferenceModel::new(Scenario::DirectionalS1, 200.0);
        let tx = RadioNode::bs(Point::new(0.0, 0.0));
        let rx = RadioNode::bs(Point::new(200.0, 0.0));
        let aligned = m.power_mw(&r, tx, Some(Heading::PosX), rx, Some(Heading::NegX));
        let away = m.power_mw(&r, tx, Some(Heading::NegX), rx, Some(Heading::PosX));
        assert_relative_eq!(linear_to_db(aligned) - linear_to_db(away), 50.0, epsilon = 1e-9);
        let full = r.received_power_mw(30.0, 64.0 * 64.0, 200.0, true).unwrap();
        assert_relative_eq!(aligned, full, max_relative = 1e-12);
        // Cross-street pair.
        let cross = RadioNode::bs(Point::new(200.0, 200.0));
        assert_eq!(m.power_mw(&r, tx, Some(Heading::PosX), cross, Some(Heading::NegX)), 0.0);
        let wc = InterferenceModel::new(Scenario::WorstCase, 200.0);
        assert!(wc.power_mw(&r, tx, Some(Heading::PosX), cross, Some(Heading::NegX)) > 0.0);
        assert_relative_eq!(
            wc.power_mw(&r, tx, Some(Heading::NegX), rx, Some(Heading::PosX)),
            full,
            max_relative = 1e-12
        );
    }

    #[test]
    fn s2_only_adjacent_bs_paths_are_los() {
        let r = p();
        let m = InterferenceModel::new(Scenario::DirectionalS2, 200.0);
        let s1 = InterferenceModel::new(Scenario::DirectionalS1, 200.0);
        let tx = RadioNode::bs(Point::new(0.0, 0.0));
        let adj = RadioNode::bs(Point::new(200.0, 0.0));
        let far = RadioNode::bs(Point::new(400.0, 0.0));
        let h = (Some(Heading::PosX), Some(Heading::NegX));
        assert_relative_eq!(m.power_mw(&r, tx, h.0, adj, h.1), s1.power_mw(&r, tx, h.0, adj, h.1));
        let ratio = s1.power_mw(&r, tx, h.0, far, h.1) / m.power_mw(&r, tx, h.0, far, h.1);
        assert_relative_eq!(ratio, 400f64.powf(1.4), max_relative = 1e-9);
    }
}
