//! Values fixed by hand computation or by the published two-library example,
//! checked across module boundaries.

use multilib_caching::allocation::{
    brute_force_allocate, greedy_allocate, lambda_sweep, memory_sharing_rate,
    proportional_allocation, Allocation, DEFAULT_BRUTE_FORCE_CAP,
};
use multilib_caching::converse::{concatenate, conjecture_gap, cut_set_converse, GapStatus};
use multilib_caching::model::two_library_example;
use multilib_caching::rational::{int, rat};
use multilib_caching::sim::{self, verify_all, SimOptions, Simulation};
use multilib_caching::tradeoff::{centralized_scheme, exact_two_by_two};
use multilib_caching::{LibrarySpec, NetworkConfig, TradeoffSource};

fn unequal(m: multilib_caching::Rational) -> NetworkConfig {
    NetworkConfig::new(
        vec![
            LibrarySpec::new(1, rat(1, 2)),
            LibrarySpec::new(2, rat(1, 2)),
        ],
        2,
        m,
    )
    .unwrap()
}

#[test]
fn two_library_example_end_to_end() {
    let c = two_library_example();
    let t = vec![exact_two_by_two(), exact_two_by_two()];
    let greedy = greedy_allocate(&c, &t).unwrap();
    assert_eq!(
        greedy.final_allocation,
        Allocation::new(vec![rat(2, 5), rat(3, 5)])
    );
    assert_eq!(greedy.rate, rat(1, 2));

    let sweep = lambda_sweep(&c, &t, 100).unwrap();
    assert_eq!(sweep.minimum.lambda, rat(2, 5));
    assert_eq!(sweep.minimum.rate, rat(1, 2));

    let gap = conjecture_gap(&c, &t).unwrap();
    assert_eq!(gap.status, GapStatus::Tight);

    // the scheme realizes the same split, and the simulator measures it
    let report = verify_all(&c, &greedy.final_allocation, &SimOptions::default(), 42).unwrap();
    assert_eq!(report.measured_rate, rat(1, 2));
    assert_eq!(report.demands_checked, 16);
}

#[test]
fn zero_cache_rate_is_two() {
    let c = two_library_example().with_cache_size(int(0)).unwrap();
    let t = vec![exact_two_by_two(), exact_two_by_two()];
    assert_eq!(greedy_allocate(&c, &t).unwrap().rate, int(2));
    assert_eq!(
        memory_sharing_rate(&c, &proportional_allocation(&c), &t).unwrap(),
        int(2)
    );
}

#[test]
fn unequal_counts_oracles() {
    // hand-computed: cut-set on the concatenated library, in units of F
    assert_eq!(cut_set_converse(&unequal(int(0))), rat(3, 2));
    let c = unequal(rat(1, 2));
    let t: Vec<_> = c
        .libraries
        .iter()
        .map(|l| TradeoffSource::Auto.build(l.num_files, 2).unwrap())
        .collect();
    let gap = conjecture_gap(&c, &t).unwrap();
    assert_eq!(
        (gap.achievable, gap.converse, gap.gap),
        (rat(3, 4), rat(1, 2), rat(1, 4))
    );
    let brute = brute_force_allocate(&c, &t, &rat(1, 100), DEFAULT_BRUTE_FORCE_CAP).unwrap();
    assert_eq!(brute.rate, rat(3, 4));
    assert_eq!(concatenate(&c).betas, vec![rat(4, 3), rat(2, 3)]);
}

#[test]
fn zero_cache_unequal_counts_send_uncoded() {
    let c = unequal(int(0));
    let r = verify_all(
        &c,
        &Allocation::new(vec![int(0), int(0)]),
        &SimOptions::default(),
        0,
    )
    .unwrap();
    // worst case: both users want different files of library 2
    assert_eq!(r.measured_rate, rat(3, 2));
    assert_eq!(r.measured_rate, cut_set_converse(&c));
}

#[test]
fn simulator_follows_greedy_on_scheme_curves() {
    let c = unequal(rat(1, 2));
    let t = sim::scheme_tradeoffs(&c).unwrap();
    let greedy = greedy_allocate(&c, &t).unwrap();
    assert_eq!(
        greedy.final_allocation,
        Allocation::new(vec![int(0), rat(1, 2)])
    );
    let r = verify_all(&c, &greedy.final_allocation, &SimOptions::default(), 1).unwrap();
    assert_eq!(r.measured_rate, greedy.rate);
    assert_eq!(r.measured_rate, rat(3, 4));
}

#[test]
fn three_libraries_equal_counts() {
    let c = NetworkConfig::new(
        vec![
            LibrarySpec::new(2, rat(1, 6)),
            LibrarySpec::new(2, rat(1, 3)),
            LibrarySpec::new(2, rat(1, 2)),
        ],
        2,
        int(1),
    )
    .unwrap();
    let t = vec![exact_two_by_two(); 3];
    let greedy = greedy_allocate(&c, &t).unwrap();
    assert_eq!(greedy.rate, rat(1, 2));
    assert_eq!(greedy.final_allocation, proportional_allocation(&c));
    let sim = Simulation::new(&c, &greedy.final_allocation, &SimOptions::default(), 0).unwrap();
    assert_eq!(sim.plan.base_size, 12);
    assert_eq!(sim.placement.user_cache_bits(1), 12);
}

#[test]
fn scheme_curve_for_three_files_two_users() {
    let corners = centralized_scheme(3, 2).unwrap().corners();
    let pts: Vec<_> = corners
        .iter()
        .map(|c| (c.memory.clone(), c.rate.clone()))
        .collect();
    assert_eq!(
        pts,
        vec![(int(0), int(2)), (rat(3, 2), rat(1, 2)), (int(3), int(0))]
    );
}
