//! Where does the next job go? Exact routing laws of every policy for one
//! occupancy state, next to empirical frequencies from `select`.
//!
//! ```text
//! cargo run --example policy_routing
//! ```

use std::collections::BTreeMap;

use hetlb::model::{validate_config, RawConfig};
use hetlb::policy::{enumerate_decisions, select};
use hetlb::rng::{stream, Lane};
use hetlb::{OccupancyState, PolicyKind};

fn main() -> hetlb::Result<()> {
    // Two fast servers (μ = 2) and three slow ones (μ = 0.5).
    let cfg = validate_config(RawConfig {
        pool_sizes: Some(vec![2, 3]),
        speeds: vec![2.0, 0.5],
        beta: 0.5,
        lambda: Some(0.9),
        ..Default::default()
    })?;
    let q = OccupancyState::from_lengths(&cfg, &[vec![1, 2], vec![1, 0, 3]])?;
    println!("queue lengths: fast [1, 2], slow [1, 0, 3]\n");

    let draws = 100_000;
    for kind in [PolicyKind::SaJsq, PolicyKind::Jsq, PolicyKind::Pod(2), PolicyKind::Jiq] {
        let mut rng = stream(3, 0, Lane::TieBreak);
        let mut freq = BTreeMap::new();
        for _ in 0..draws {
            *freq.entry(select(kind, &q, &mut rng)).or_insert(0usize) += 1;
        }
        println!("{kind}");
        for (d, p) in enumerate_decisions(kind, &q) {
            let f = *freq.get(&d).unwrap_or(&0) as f64 / draws as f64;
            println!("  pool {} at length {}: exact {p:.4}, sampled {f:.4}", d.pool + 1, d.target_level);
        }
    }
    Ok(())
}
