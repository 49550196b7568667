//! Batch-means stationary estimates from the event simulator against the
//! exact stationary law of the same truncated chain, plus the two
//! rate-conservation identities.
//!
//! ```text
//! cargo run --release --example stationary_vs_exact
//! ```

use hetlb::ctmc::{rate_conservation_check, simulate_stationary, RunSpec};
use hetlb::exact::exact_stationary_small;
use hetlb::model::{validate_config, RawConfig};
use hetlb::PolicyKind;

fn main() -> hetlb::Result<()> {
    let cfg = validate_config(RawConfig {
        pool_sizes: Some(vec![2, 3]),
        speeds: vec![2.0, 0.5],
        beta: 0.5,
        lambda: Some(0.85),
        ..Default::default()
    })?;
    let kind = PolicyKind::SaJsq;
    let cap = 4;

    let exact = exact_stationary_small(&cfg, kind, cap)?;
    let oracle = exact.estimate(&cfg);
    let sim = simulate_stationary(&cfg, kind, &RunSpec::new(50_000.0, 1).cap(Some(cap)))?;

    println!("{} states, buffer {cap}\n", exact.states.len());
    println!("{:<22} {:>12} {:>12} {:>10} {:>7}", "functional", "exact", "simulated", "se", "z");
    for (i, name) in sim.names.iter().enumerate() {
        let z = if sim.ses[i] > 0.0 { (sim.means[i] - oracle.means[i]) / sim.ses[i] } else { 0.0 };
        println!("{name:<22} {:>12.6} {:>12.6} {:>10.6} {:>7.2}", oracle.means[i], sim.means[i], sim.ses[i], z);
    }

    for (label, est) in [("exact", &oracle), ("simulated", &sim)] {
        let rc = rate_conservation_check(est, &cfg);
        println!(
            "\n{label}: busy-rate residual {:.3e} (within 3 SE: {}), overflow residual {:.3e} (within 3 SE: {})",
            rc.residual1.mean, rc.within1, rc.residual2.mean, rc.within2
        );
    }
    Ok(())
}
