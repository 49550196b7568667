//! The free-server blocking system as a pathwise lower bound.
//!
//! Drives the original system and the modified system with the same arrivals
//! and potential departures, then compares the modified system's simulated
//! stationary means with its exact two-dimensional chain.
//!
//! ```text
//! cargo run --release --example coupled_lower_bound
//! ```

use hetlb::coupling::{coupled_run, exact_modified_stationary, simulate_modified_stationary, tilde_mu};
use hetlb::ctmc::RunSpec;
use hetlb::{PolicyKind, SystemConfig};

fn main() -> hetlb::Result<()> {
    let cfg = SystemConfig::fig1(50)?;
    println!("service rate of the modified system by busy count:");
    for c in [0, 5, 10, 20, 30, 40, 50] {
        println!("  mu~({c:>2}) = {:.3}", tilde_mu(c, &cfg));
    }

    for kind in [PolicyKind::SaJsq, PolicyKind::Jsq, PolicyKind::Pod(2)] {
        let tr = coupled_run(&cfg, kind, 100.0, 7)?;
        let slack2 = tr.events.iter().map(|e| e.qp2 - e.q2_tilde).min().unwrap_or(0);
        let slack1 = tr.events.iter().map(|e| e.q1 + e.qp2 - e.q1_tilde - e.q2_tilde).min().unwrap_or(0);
        println!(
            "{kind:>7}: {} events, {} violations, min slack Q+2 - q~2 = {slack2}, min slack (Q1+Q+2) - (q~1+q~2) = {slack1}",
            tr.events.len(),
            tr.violations()
        );
    }

    let small = SystemConfig::fig1(10)?;
    let exact = exact_modified_stationary(&small);
    let r = small.sqrt_n();
    let n = small.n as f64;
    let e1: f64 = exact.iter().map(|((a, _), p)| (*a as f64 - n) / r * p).sum();
    let e2: f64 = exact.iter().map(|((_, b), p)| *b as f64 / r * p).sum();
    let est = simulate_modified_stationary(&small, &RunSpec::new(50_000.0, 3))?;
    let g1 = est.estimate.get("y1_tilde").unwrap();
    let g2 = est.estimate.get("y2_tilde").unwrap();
    println!("\nmodified system at n = 10:");
    println!("  E[Y~1]: exact {e1:.5}, simulated {:.5} ± {:.5}", g1.mean, g1.se);
    println!("  E[Y~2]: exact {e2:.5}, simulated {:.5} ± {:.5}", g2.mean, g2.se);
    println!("  blocked fraction of arrivals: {:.2e}", est.blocking_fraction);
    Ok(())
}
