//! Stationary `Y_{+1}` and `Y_{+2}` under SA-JSQ, JSQ and JIQ with common
//! random numbers, bracketed below by the modified system and set against
//! the diffusion limit.
//!
//! ```text
//! cargo run --release --example compare_policies
//! ```

use hetlb::analysis::{compare_policies, ComparisonSpec, SdeSettings};
use hetlb::ctmc::RunSpec;
use hetlb::{PolicyKind, SystemConfig};

fn main() -> hetlb::Result<()> {
    let spec = ComparisonSpec {
        cfg: SystemConfig::fig1(200)?,
        policies: vec![PolicyKind::SaJsq, PolicyKind::Jsq, PolicyKind::Jiq],
        run: RunSpec::new(2000.0, 42),
        replications: 2,
        include_modified: true,
        sde: Some(SdeSettings { h: 5e-3, burn: 100.0, duration: 2000.0 }),
    };
    let report = compare_policies(&spec)?;
    println!("{:>10} {:>20} {:>20} {:>10}", "system", "Y+1", "Y+2", "arrivals");
    for r in &report.rows {
        println!(
            "{:>10} {:>11.4} ± {:.4} {:>11.4} ± {:.4} {:>10}",
            r.label, r.y_plus1.mean, r.y_plus1.se, r.y_plus2.mean, r.y_plus2.se, r.arrivals
        );
    }
    println!("\npaired differences (b - a):");
    for d in &report.diffs {
        println!("  {:>8} - {:<8} {:<8} {:>9.4} ± {:.4}", d.b, d.a, d.functional, d.diff, d.se);
    }
    if let Some(s) = report.sde {
        println!(
            "\ndiffusion: E[Y_M1] = {:.4} ± {:.4}, E[Y_12] = {:.4} ± {:.4}",
            s.y_m1.mean, s.y_m1.se, s.y12.mean, s.y12.se
        );
    }
    Ok(())
}
