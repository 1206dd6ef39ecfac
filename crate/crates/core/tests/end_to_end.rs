use approx::assert_relative_eq;
use proptest::prelude::*;

use kring_core::analysis::{maxmin_iab_hd, maxmin_iab_fd, Network};
use kring_core::oracle::{
    all_schedule_rates, enumerate_schedules, link_rate, solve_maxmin_colgen, solve_maxmin_lp, OracleProblem,
    ScheduleMode,
};
use kring_core::radio::{InterferenceModel, RadioParams, RateTable, Scenario};
use kring_core::routing::nnhr_routes;
use kring_core::sim::{run_greedy_pf, SimConfig};
use kring_core::topology::{AssociationPolicy, Deployment, Direction, Placement, PlacementSpec};
use kring_core::Exec;

fn per_bs(k: u32, counts: Vec<usize>, offset_m: f64, los: bool) -> Deployment {
    Deployment::build_kring(k, 200.0)
        .unwrap()
        .place_ues(&PlacementSpec::new(Placement::PerBs { counts, offset_m, los }), 0)
        .unwrap()
        .associate(AssociationPolicy::Nearest, &RadioParams::default())
        .unwrap()
}

#[test]
fn default_link_rates() {
    let p = RadioParams::default();
    assert_relative_eq!(p.backhaul_rate(200.0, 1).unwrap(), 8e9, max_relative = 1e-9);
    let ra = p.access_rate(100.0, true, Direction::Downlink).unwrap();
    assert!((ra / 1e9 - 7.1759).abs() < 5e-5, "{ra}");
}

// One LOS UE 100 m from each BS of a 1-ring: the MBS serves its own UE and
// forwards four more, so 1/γ = 1/Ra + 4/R1 = 1/7.1759e9 + 4/8e9.
#[test]
fn one_ring_one_ue_each() {
    let dep = per_bs(1, vec![1; 5], 100.0, true);
    let p = RadioParams::default();
    let rt = RateTable::compute(&dep, &p).unwrap();
    let g = maxmin_iab_hd(&Network::nnhr(&dep).unwrap(), &dep, &rt.access, rt.r1())
        .unwrap()
        .gamma_star;
    assert_relative_eq!(g, 1.0 / (1.0 / rt.access[0] + 4.0 / 8e9), max_relative = 1e-12);
    assert!((g / 1e9 - 1.564_08).abs() < 1e-5, "{g}");

    let problem = OracleProblem::fixed(&dep, &nnhr_routes(&dep).unwrap()).unwrap();
    let s = enumerate_schedules(&problem.links, ScheduleMode::Exhaustive).unwrap();
    let r = all_schedule_rates(&dep, &p, &problem.links, &s, None, Exec::Sequential).unwrap();
    assert_relative_eq!(solve_maxmin_lp(&problem, &s, &r, true).unwrap().gamma, g, max_relative = 1e-9);
}

#[test]
fn json_round_trip_keeps_the_rate() {
    let p = RadioParams::default();
    let spec = PlacementSpec::new(Placement::Random {
        mean_per_bs: 2.0,
        los_prob: 0.5,
        los_range_m: 200.0,
    });
    let dep = Deployment::build_kring(2, 200.0)
        .unwrap()
        .place_ues(&spec, 7)
        .unwrap()
        .associate(AssociationPolicy::MinPathloss, &p)
        .unwrap();
    let back = Deployment::from_json(&dep.to_json().unwrap()).unwrap();
    let gamma = |d: &Deployment| {
        let rt = RateTable::compute(d, &p).unwrap();
        maxmin_iab_hd(&Network::nnhr(d).unwrap(), d, &rt.access, rt.r1())
            .unwrap()
            .gamma_star
    };
    assert_eq!(gamma(&dep), gamma(&back));
}

#[test]
fn sequential_and_parallel_agree() {
    let dep = per_bs(1, vec![1, 1, 0, 1, 1], 50.0, true);
    let p = RadioParams::default();
    let problem = OracleProblem::nnr(&dep).unwrap();
    let s = enumerate_schedules(&problem.links, ScheduleMode::Exhaustive).unwrap();
    let model = InterferenceModel::new(Scenario::WorstCase, 200.0);
    let a = all_schedule_rates(&dep, &p, &problem.links, &s, Some(&model), Exec::Sequential).unwrap();
    let b = all_schedule_rates(&dep, &p, &problem.links, &s, Some(&model), Exec::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn full_duplex_never_below_half_duplex_without_self_interference() {
    let dep = per_bs(2, vec![2; 13], 50.0, true);
    let p = RadioParams {
        self_interference_db: Some(-300.0),
        ..RadioParams::default()
    };
    let rt = RateTable::compute(&dep, &p).unwrap();
    let net = Network::nnhr(&dep).unwrap();
    let hd = maxmin_iab_hd(&net, &dep, &rt.access, rt.r1()).unwrap().gamma_star;
    let fd = maxmin_iab_fd(&net, &dep, &rt.access_fd, rt.r1_fd()).unwrap().gamma_star;
    assert!(fd >= hd * (1.0 - 1e-9), "{fd} < {hd}");
}

#[test]
fn simulation_with_interference_is_stable() {
    let dep = per_bs(1, vec![1, 2, 1, 2, 1], 50.0, true);
    let p = RadioParams::default();
    let cfg = SimConfig {
        n_slots: 3000,
        warmup: 500,
        interference: true,
        ..SimConfig::default()
    };
    let tr = run_greedy_pf(&dep, &nnhr_routes(&dep).unwrap(), &p, &cfg).unwrap();
    assert!(tr.e2e_rate_bps.iter().all(|&r| r > 0.0));
    for (d, f) in tr.delivered_bits.iter().zip(&tr.first_hop_bits) {
        assert!(d <= f);
    }
    let rt = RateTable::compute(&dep, &p).unwrap();
    let g = maxmin_iab_hd(&Network::nnhr(&dep).unwrap(), &dep, &rt.access, rt.r1())
        .unwrap()
        .gamma_star;
    let min = tr.e2e_rate_bps.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(min <= g * 1.05, "simulated minimum {min} above max-min {g}");
}

fn arb_counts() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..4, 5).prop_filter("some UE", |c| c.iter().any(|&x| x > 0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closed_form_equals_lp(counts in arb_counts(), offset in 20.0f64..100.0, los in any::<bool>()) {
        let dep = per_bs(1, counts, offset, los);
        let p = RadioParams::default();
        let rt = RateTable::compute(&dep, &p).unwrap();
        let g = maxmin_iab_hd(&Network::nnhr(&dep).unwrap(), &dep, &rt.access, rt.r1()).unwrap().gamma_star;
        let problem = OracleProblem::fixed(&dep, &nnhr_routes(&dep).unwrap()).unwrap();
        let rates: Vec<f64> = problem.links.iter().map(|l| link_rate(&dep, &p, l).unwrap()).collect();
        let lp = solve_maxmin_colgen(&problem, &rates).unwrap().gamma;
        prop_assert!((lp / g - 1.0).abs() < 1e-9, "lp {} closed {}", lp, g);
    }
}
