mod common;

fn run(check: common::Check) {
    match check {
        Ok(detail) => println!("{detail}"),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn rmse_against_brute_force() {
    run(common::rmse_oracle());
}

#[test]
fn column_stats_against_two_pass() {
    run(common::column_stats_oracle());
}

#[test]
fn improvement_formula() {
    run(common::improvement_oracle());
}

#[test]
fn interval_against_t_table() {
    run(common::confidence_interval_oracle());
}

#[test]
fn summary_recomputed_from_trials_csv() {
    run(common::report_aggregates_oracle());
}

#[test]
fn mixup_convexity_from_provenance() {
    run(common::convexity_invariant());
}

#[test]
fn tree_and_neighbour_predictions_bounded() {
    run(common::boundedness_invariant());
}

#[test]
fn zero_noise_is_identity() {
    run(common::zero_eta_identity());
}

#[test]
fn noise_scale_calibrated() {
    run(common::noise_calibration());
}

#[test]
fn backprop_matches_finite_differences() {
    run(common::gradient_check());
}
