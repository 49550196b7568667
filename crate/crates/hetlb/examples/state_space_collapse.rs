//! Idle fast servers vanish on the diffusion scale as `n` grows.
//!
//! Runs SA-JSQ from an empty system and reports the mean over replications of
//! `sup_{t∈[1,10]} |Y_{1,1}(t)|`, plus one sampled path at the largest `n`.
//!
//! ```text
//! cargo run --release --example state_space_collapse
//! ```

use hetlb::analysis::{ssc_sweep, SscSpec};
use hetlb::ctmc::{simulate_transient, uniform_grid};
use hetlb::{OccupancyState, PolicyKind, SystemConfig};

fn main() -> hetlb::Result<()> {
    let spec = SscSpec {
        base: SystemConfig::fig1(100)?,
        ns: vec![100, 300, 700],
        kind: PolicyKind::SaJsq,
        window: (1.0, 10.0),
        replications: 20,
        seed: 2024,
    };
    println!("{:>6} {:>12} {:>10}", "n", "mean sup", "se");
    for row in ssc_sweep(&spec)? {
        println!("{:>6} {:>12.5} {:>10.5}", row.n, row.mean_sup, row.se);
    }

    let cfg = SystemConfig::fig1(700)?;
    let grid = uniform_grid(10.0, 1.0);
    let tr = simulate_transient(&cfg, PolicyKind::SaJsq, &OccupancyState::empty(&cfg), 10.0, &grid, 1)?;
    println!("\nn = 700, one path:");
    println!("{:>5} {:>10} {:>10} {:>10}", "t", "Y_1,1", "Y_2,1", "Y_1,2");
    for (t, s) in tr.sample_times.iter().zip(&tr.states) {
        println!("{:>5.1} {:>10.4} {:>10.4} {:>10.4}", t, s.y[0][0], s.y[1][0], s.y[0][1]);
    }
    Ok(())
}
