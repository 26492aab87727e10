use super::*;
use crate::fixtures::*;

fn xs(m: &Market, a: &Allocation) -> Vec<f64> {
    a.bundles(m).unwrap().iter().map(|b| b[0]).collect()
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9)
}

fn alloc(a: &[f64]) -> Allocation {
    Allocation { acceptances: a.iter().map(|&v| vec![v]).collect() }
}

#[test]
fn detection_on_four_agent_market() {
    let m = four_agent_market();
    let s = Settings::default();
    let c = detect_equilibrium(&m, &[3.0], &alloc(&[1.0, 0.0, 1.0, 0.5]), &s).unwrap();
    assert!(!c.is_exact());
    assert_eq!(c.in_demand, vec![true, true, true, false]);
    let c = detect_equilibrium(&m, &[3.0], &alloc(&[1.0, 0.0, 1.0, 1.0]), &s).unwrap();
    assert!(!c.is_exact());
    assert!(c.in_demand.iter().all(|&b| b));
    assert!((c.balance_residual - 1.0).abs() < 1e-12);
}

#[test]
fn approximate_equilibria_on_four_agent_market() {
    let m = four_agent_market();
    let s = Settings::default();
    let a = approximate_equilibria(&m, &s).unwrap();
    assert!((a.x_prime.prices[0] - 3.0).abs() < 1e-9);
    assert!(close(&xs(&m, &a.x_prime.allocation), &[3.0, 0.0, -2.0, -1.0]));
    assert_eq!(a.x_prime.violations, vec![3]);
    assert!(close(&xs(&m, &a.x_double_prime.allocation), &[3.0, 0.0, -2.0, -2.0]));
    assert!((a.x_double_prime.imbalance_norm - 1.0).abs() < 1e-9);
    assert!((a.x_double_prime.rho_bound - 1.0).abs() < 1e-9);
    let chp = &a.x_triple_prime;
    assert!((chp.loc.total - 1.0).abs() < 1e-9);
    assert!(close(&chp.loc.per_agent, &[0.0, 1.0, 0.0, 0.0]));
    assert!((chp.dual_value - chp.welfare - 1.0).abs() < 1e-9);
}

#[test]
fn euphemia_rejects_the_big_block() {
    let m = four_agent_market();
    let s = Settings::default();
    let out = clear_euphemia_style(&m, &s).unwrap().unwrap();
    assert!((out.prices[0] - 1.0).abs() < 1e-9);
    assert!(close(&xs(&m, &out.allocation), &[0.0, 1.0, -1.0, 0.0]));
    assert!((out.welfare - 1.0).abs() < 1e-9);
    assert_eq!(out.paradoxically_rejected, vec![(0, 0)]);
    let loc = lost_opportunity_cost(&m, &out.allocation, &out.prices, &s).unwrap();
    assert!((loc.total - 9.0).abs() < 1e-9);
}

#[test]
fn infeasible_bundle_has_infinite_loc() {
    let m = four_agent_market();
    let loc = lost_opportunity_cost(&m, &alloc(&[1.0, 0.0, 1.0, 0.5]), &[3.0], &Settings::default()).unwrap();
    assert!(loc.per_agent[3].is_infinite());
    assert!(loc.total.is_infinite());
}

#[test]
fn convex_market_is_in_equilibrium() {
    let m = four_agent_convex_market();
    let s = Settings::default();
    let a = approximate_equilibria(&m, &s).unwrap();
    assert!(a.x_prime.violations.is_empty());
    assert_eq!(a.x_double_prime.allocation, a.x_prime.allocation);
    assert_eq!(a.x_triple_prime.loc.total, 0.0);
    assert!(find_equilibrium(&m, &s).unwrap().is_some());
    let c = corollary1_check(&m, &s).unwrap();
    assert!(c.holds && c.equilibrium_found);
    let e = clear_euphemia_style(&m, &s).unwrap().unwrap();
    assert!((e.welfare - a.x_prime.primal_value).abs() < 1e-9);
}

#[test]
fn four_agent_market_has_no_equilibrium() {
    let m = four_agent_market();
    let s = Settings::default();
    assert!(find_equilibrium(&m, &s).unwrap().is_none());
    let c = corollary1_check(&m, &s).unwrap();
    assert!(!c.holds && !c.equilibrium_found);
    let p = check_proposition1(&m, 50, 7, &s).unwrap();
    assert!(p.holds());
    assert!((p.reference - 1.0).abs() < 1e-9);
}
