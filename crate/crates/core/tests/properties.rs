//! One test per invariant, 200 random cases each.

mod common;

use common::invariants;

const CASES: u32 = 200;

#[test]
fn model_scale_invariance() {
    invariants::model_scale_invariance(CASES).unwrap();
}

#[test]
fn model_design_oracle() {
    invariants::model_design_oracle(CASES).unwrap();
}

#[test]
fn model_ssr_identity() {
    invariants::model_ssr_identity(CASES).unwrap();
}

#[test]
fn model_ties() {
    invariants::model_ties(CASES).unwrap();
}

#[test]
fn model_dataset_layout() {
    invariants::model_dataset_layout(CASES).unwrap();
}

#[test]
fn pca_orthonormal() {
    invariants::pca_orthonormal(CASES).unwrap();
}

#[test]
fn pca_eigen_identity() {
    invariants::pca_eigen_identity(CASES).unwrap();
}

#[test]
fn pca_sign() {
    invariants::pca_sign(CASES).unwrap();
}

#[test]
fn pca_rotation() {
    invariants::pca_rotation(CASES).unwrap();
}

#[test]
fn optim_bnb_brute() {
    invariants::optim_bnb_brute(CASES).unwrap();
}

#[test]
fn optim_relaxation_feasible() {
    invariants::optim_relaxation_feasible(CASES).unwrap();
}

#[test]
fn optim_warm_start() {
    invariants::optim_warm_start(CASES).unwrap();
}

#[test]
fn optim_gap_integral() {
    invariants::optim_gap_integral(CASES).unwrap();
}

#[test]
fn optim_cells_cover_grid() {
    invariants::optim_cells_cover_grid(CASES).unwrap();
}

#[test]
fn optim_validation() {
    invariants::optim_validation(CASES).unwrap();
}

#[test]
fn est_miqp_exact() {
    invariants::est_miqp_exact(CASES).unwrap();
}

#[test]
fn est_forms_agree() {
    invariants::est_forms_agree(CASES).unwrap();
}

#[test]
fn est_feasible() {
    invariants::est_feasible(CASES).unwrap();
}

#[test]
fn est_bcd_descent() {
    invariants::est_bcd_descent(CASES).unwrap();
}

#[test]
fn est_scale_classification() {
    invariants::est_scale_classification(CASES).unwrap();
}

#[test]
fn sel_monotone() {
    invariants::sel_monotone(CASES).unwrap();
}

#[test]
fn sel_zero_weight() {
    invariants::sel_zero_weight(CASES).unwrap();
}

#[test]
fn sel_permutation() {
    invariants::sel_permutation(CASES).unwrap();
}

#[test]
fn inf_unit_weights() {
    invariants::inf_unit_weights(CASES).unwrap();
}

#[test]
fn inf_lr_nonnegative() {
    invariants::inf_lr_nonnegative(CASES).unwrap();
}

#[test]
fn inf_k_step_monotone() {
    invariants::inf_k_step_monotone(CASES).unwrap();
}

#[test]
fn inf_replay() {
    invariants::inf_replay(CASES).unwrap();
}

#[test]
fn inf_zero_noise() {
    invariants::inf_zero_noise(CASES).unwrap();
}

#[test]
fn inf_conventions() {
    invariants::inf_conventions(CASES).unwrap();
}

#[test]
fn sim_drift_nonnegative() {
    invariants::sim_drift_nonnegative(CASES).unwrap();
}

#[test]
fn sim_drift_continuous() {
    invariants::sim_drift_continuous(CASES).unwrap();
}

#[test]
fn sim_dgp_moments() {
    invariants::sim_dgp_moments(CASES).unwrap();
}

#[test]
fn sim_report() {
    invariants::sim_report(CASES).unwrap();
}

#[test]
fn cli_config_roundtrip() {
    invariants::cli_config_roundtrip(CASES).unwrap();
}

#[test]
fn cli_result_roundtrip() {
    invariants::cli_result_roundtrip(CASES).unwrap();
}
