//! The fluid-based Lyapunov function: regions, values, derivatives, the PDE
//! residual and the Hessian bounds.
//!
//! ```text
//! cargo run --example lyapunov_pde
//! ```

use hetlb::lyapunov::{
    classify_region, f_star, fluid_trajectory, grad_f_star, hessian_f_star, pde_residual, x2_star, LyapunovContext,
};

fn main() -> hetlb::Result<()> {
    let ctx = LyapunovContext::new(100, 2.0, 2.5, 0.625, 1.0)?;
    println!(
        "kappa/sqrt(n) = {:.3}; boundary curve at x1 = -1: x2* = {:.4}\n",
        ctx.kn(),
        x2_star(-1.0, ctx.kappa, &ctx)
    );
    println!(
        "{:>6} {:>6} {:>8} {:>8} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "x1", "x2", "region", "tau", "f", "f1", "f2", "f12", "residual"
    );
    for x in [(-2.0, 0.05), (-2.0, 0.3), (-0.5, 0.3), (-0.5, 2.0), (0.0, 1.0), (-4.0, 4.0)] {
        let r = classify_region(x, &ctx);
        let (f1, f2) = grad_f_star(x, &ctx);
        let (_, f12, _) = hessian_f_star(x, &ctx);
        let tau = r.tau().map_or("-".to_string(), |t| format!("{t:.4}"));
        println!(
            "{:>6.2} {:>6.2} {:>8} {:>8} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.1e}",
            x.0,
            x.1,
            r.label(),
            tau,
            f_star(x, &ctx),
            f1,
            f2,
            f12,
            pde_residual(x, &ctx)
        );
    }

    println!("\nfluid path from (-1, 2):");
    for t in [0.0, 0.25, 0.5, 1.0, 2.0, 4.0] {
        let (a, b) = fluid_trajectory((-1.0, 2.0), t, &ctx);
        println!("  t = {t:>4}: ({a:.4}, {b:.4})");
    }
    println!("\nf11 <= {:.3}, f22 <= {:.3}", ctx.c5() * ctx.sqrt_n(), ctx.c6() * ctx.sqrt_n());
    Ok(())
}
