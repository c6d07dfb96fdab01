//! End-to-end acceptance: every criterion runs at its stated tolerance and
//! prints one PASS/FAIL line.
//!
//! Suites are expensive, so each runs once per process and is shared between
//! the criteria that read it. The determinism criterion reruns all of them on
//! two threads and compares the CSV output byte for byte.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};
use vctl::suite::{run_suite, Check, Group, SuiteReport, SUITES};

fn cache() -> &'static Mutex<HashMap<String, SuiteReport>> {
    static CACHE: OnceLock<Mutex<HashMap<String, SuiteReport>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn suite(name: &str) -> SuiteReport {
    let mut c = cache().lock().unwrap_or_else(|e| e.into_inner());
    if let Some(r) = c.get(name) {
        return r.clone();
    }
    let r = run_suite(name, 1).unwrap_or_else(|e| panic!("suite {name} aborted: {e}"));
    c.insert(name.into(), r.clone());
    r
}

fn verdict(id: usize, title: &str, checks: &[&Check]) {
    let ok = !checks.is_empty() && checks.iter().all(|c| c.passed());
    for c in checks {
        println!("    {c}");
    }
    println!("criterion {id} {title}: {}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} ({title}) failed");
}

fn suite_criterion(id: usize, title: &str, name: &str) {
    let r = suite(name);
    let checks: Vec<&Check> = r.checks.iter().filter(|c| c.group != Group::Support).collect();
    verdict(id, title, &checks);
}

#[test]
fn criterion_1_free_streaming() {
    suite_criterion(1, "free streaming against the characteristic solution", "free-streaming");
}

#[test]
fn criterion_2_maxwell_oracle() {
    suite_criterion(2, "vacuum Maxwell against the retarded-potential oracle", "maxwell-oracle");
}

#[test]
fn criterion_3_conservation() {
    suite_criterion(3, "mass, Gauss law and energy on a neutral run", "conservation");
}

#[test]
fn criterion_4_energy_identity() {
    suite_criterion(4, "energy identity with external work", "energy-identity");
}

#[test]
fn criterion_5_gradient() {
    suite_criterion(5, "adjoint, tangent and finite differences", "gradient");
}

#[test]
fn criterion_6_regularization() {
    suite_criterion(6, "regularization-only gradient", "regularization");
}

#[test]
fn criterion_7_optimizer() {
    suite_criterion(7, "optimizer on the twin experiment", "optimizer");
}

#[test]
fn criterion_8_support() {
    let reports: Vec<SuiteReport> = SUITES.iter().map(|n| suite(n)).collect();
    let checks: Vec<&Check> = reports.iter().flat_map(|r| r.group(Group::Support)).collect();
    verdict(8, "support growth and boundary-layer fields in every run", &checks);
}

#[test]
fn criterion_9_determinism() {
    let mut rows = Vec::new();
    for name in SUITES {
        let a = suite(name);
        let b = run_suite(name, 2).unwrap_or_else(|e| panic!("suite {name} aborted on two threads: {e}"));
        let same = a.data == b.data && a.checks_csv() == b.checks_csv();
        rows.push(Check::at_most(format!("{name}: CSV differs between 1 and 2 threads"), if same { 0.0 } else { 1.0 }, 0.0));
    }
    verdict(9, "bit-identical CSV regardless of thread count", &rows.iter().collect::<Vec<_>>());
}
