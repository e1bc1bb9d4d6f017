//! Discrete maximum principle on converged scalar solutions and the local-bounds
//! structure of the stabilised Euler operator.

mod common;

use common::{check_dmp, check_local_bounds, hanging_mesh, random_euler_state, rng};
use monoamr::cases::{circular_discontinuity, linear_discontinuity};
use monoamr::fespace::{FESpace, StateVector};
use monoamr::solver::DetectorMode;
use proptest::prelude::*;

#[test]
fn linear_transport_solution_satisfies_dmp() {
    check_dmp(linear_discontinuity());
}

#[test]
fn circular_transport_solution_satisfies_dmp() {
    check_dmp(circular_discontinuity());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn euler_operator_is_local_bounds_preserving_with_full_detector(seed in any::<u64>()) {
        let space = FESpace::new(&hanging_mesh(), 4);
        let mut r = rng(seed);
        let u = StateVector::from_fn(space.num_nodes(), 4, |_| random_euler_state(&mut r).to_vec());
        let checked = check_local_bounds(&space, &u, DetectorMode::Constant(1.0)).0;
        prop_assert_eq!(checked, space.num_nodes());
    }

    #[test]
    fn euler_operator_is_local_bounds_preserving_where_smooth_detector_saturates(seed in any::<u64>()) {
        let space = FESpace::new(&hanging_mesh(), 4);
        let mut r = rng(seed);
        let u = StateVector::from_fn(space.num_nodes(), 4, |_| random_euler_state(&mut r).to_vec());
        check_local_bounds(&space, &u, DetectorMode::Computed);
    }
}
