//! The reflected Ornstein-Uhlenbeck limit: the one-sided reflection map, a
//! sample path and long-run moments.
//!
//! ```text
//! cargo run --release --example reflected_ou
//! ```

use hetlb::diffusion::{integrate_limit_sde, sde_stationary_run, skorokhod_reflect, DiffusionParams, LimitState};

fn main() -> hetlb::Result<()> {
    let (phi, psi) = skorokhod_reflect(&[0.0, 2.0, 1.0, 3.0], 1.5);
    println!("reflect (0, 2, 1, 3) at 1.5: phi = {phi:?}, psi = {psi:?}\n");

    // β = 2, μ_1 = 2.5, μ_M = 0.625.
    let p = DiffusionParams::new(2.0, 2.5, 0.625, 5e-3, 10.0)?.record_every(200);
    let path = integrate_limit_sde(&p, &LimitState::pair(0.0, 0.0, &p), 11)?;
    println!("{:>6} {:>10} {:>10} {:>10}", "t", "Y_M1", "Y_12", "U_1");
    for k in 0..path.times.len() {
        println!("{:>6.2} {:>10.4} {:>10.4} {:>10.4}", path.times[k], path.y_m1[k], path.y12[k], path.u1[k]);
    }

    let long = DiffusionParams::new(2.0, 2.5, 0.625, 5e-3, 2100.0)?;
    let m = sde_stationary_run(&long, 100.0, 2000.0, 20, 0.5, 12)?;
    println!(
        "\nlong run: E[Y_M1] = {:.4} ± {:.4} (limit -beta/mu_M = -3.2), Var = {:.4}",
        m.mean_y_m1, m.se_y_m1, m.var_y_m1
    );
    println!("          E[Y_12] = {:.4} ± {:.4}, Var = {:.5}", m.mean_y12, m.se_y12, m.var_y12);
    Ok(())
}
