//! One test per acceptance criterion; each prints a PASS/FAIL line.
//!
//! Run `cargo test -p polystokes --test acceptance -- --nocapture --test-threads 1`
//! to see the lines in order.

use polystokes::config::VerifyOptions;
use polystokes::criteria::run_criterion;

fn check(id: u32) {
    let run = run_criterion(id, &VerifyOptions::default()).expect("known criterion");
    println!("{}", run.line());
    for (k, v) in &run.report.measured {
        println!("    {k} = {v:e}");
    }
    assert!(run.ok(), "{}", run.line());
}

#[test]
fn criterion_01_exact_exponents() {
    check(1);
}

#[test]
fn criterion_02_exponent_bounds() {
    check(2);
}

#[test]
fn criterion_03_reentrant_exponent() {
    check(3);
}

#[test]
fn criterion_04_weight_windows() {
    check(4);
}

#[test]
fn criterion_05_sector_norms() {
    check(5);
}

#[test]
fn criterion_06_resolvent_convergence() {
    check(6);
}

#[test]
fn criterion_07_korn_coercivity() {
    check(7);
}

#[test]
fn criterion_08_estimate_uniformity() {
    check(8);
}

#[test]
fn criterion_09_divergence_lifting() {
    check(9);
}

#[test]
fn criterion_10_neumann() {
    check(10);
}

#[test]
fn criterion_11_pressure_diagnostic() {
    check(11);
}

#[test]
fn criterion_12_evolution_cross_validation() {
    check(12);
}

#[test]
fn criterion_13_extension_independence() {
    check(13);
}

#[test]
fn criterion_14_compatibility_gating() {
    check(14);
}
