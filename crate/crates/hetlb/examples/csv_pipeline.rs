//! Configuration file in, CSV out, and back: the flat `key = value` format
//! and the fixed-column CSV layouts the CLI writes.
//!
//! ```text
//! cargo run --example csv_pipeline
//! ```

use hetlb::config::parse_config;
use hetlb::ctmc::{simulate_transient, uniform_grid};
use hetlb::io::{read_rows, trajectory_table, write_rows, TrajectoryRow};
use hetlb::{OccupancyState, PolicyKind};

const CONFIG: &str = include_str!("fig1.cfg");

fn main() -> hetlb::Result<()> {
    let file = parse_config(CONFIG)?;
    let cfg = file.system()?;
    println!("n = {}, pools = {:?}, speeds = {:?}, lambda = {:.4}", cfg.n, cfg.pool_sizes, cfg.speeds, cfg.lambda);

    let tr = simulate_transient(
        &cfg,
        PolicyKind::SaJsq,
        &OccupancyState::empty(&cfg),
        2.0,
        &uniform_grid(2.0, 0.5),
        file.seed.unwrap_or(0),
    )?;
    let (header, rows) = trajectory_table(&tr);
    let mut buf = Vec::new();
    write_rows(&mut buf, &header, &rows)?;
    print!("\n{}", String::from_utf8_lossy(&buf));

    let (_, back): (Vec<String>, Vec<TrajectoryRow>) = read_rows(buf.as_slice())?;
    println!("\nround trip exact: {}", back == rows);
    Ok(())
}
