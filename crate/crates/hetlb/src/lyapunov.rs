//! Fluid-based Lyapunov function for the reduced two-dimensional system.
//!
//! Coordinates are `x1 = (Σ_k Q_{k,1} − n)/n ≤ 0` and `x2 = Q_{1,2}/n ≥ 0`.
//! The fluid path from `x` follows
//!
//! ```text
//! v1' = −β/√n − μ_M v1 + μ_1 v2,   v2' = −μ_1 v2
//! ```
//!
//! until `v1` reaches 0 at time `τ(x)`. It then slides along `v1 = 0` with
//! `v2' = −β/√n` until `μ_1 v2 = β/√n`, and leaves the boundary for good.
//! `f*(x) = ∫_0^∞ (v2(s) − κ/√n)^+ ds` solves `L f = −(x2 − κ/√n)^+` with
//!
//! ```text
//! L f = (−β/√n − μ_M x1 + μ_1 x2) f_1 − μ_1 x2 f_2.
//! ```
//!
//! The quadrant splits into `Ω1` (`x2 ≤ κ/√n`), `Ω2` (between `κ/√n` and the
//! curve `Γ^κ`) and `Ω3` (above `Γ^κ`, where the path reaches the boundary
//! while `v2 > κ/√n`).

use crate::error::{Error, Result};
use crate::model::{OccupancyState, SystemConfig};
use crate::roots::newton_bisect;

const TAU_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovContext {
    pub n: usize,
    pub beta: f64,
    pub mu1: f64,
    pub mu_m: f64,
    pub kappa: f64,
}

impl LyapunovContext {
    pub fn new(n: usize, beta: f64, mu1: f64, mu_m: f64, kappa: f64) -> Result<Self> {
        if n == 0 || !(beta > 0.0) || !(mu_m > 0.0) || !(mu1 > mu_m) {
            return Err(Error::InvalidConfig("need n ≥ 1, β > 0 and μ_1 > μ_M > 0".into()));
        }
        if !(kappa > beta / mu1) {
            return Err(Error::InvalidConfig(format!("kappa must exceed β/μ_1 = {}", beta / mu1)));
        }
        Ok(Self { n, beta, mu1, mu_m, kappa })
    }

    pub fn sqrt_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    /// `β/√n`.
    pub fn bn(&self) -> f64 {
        self.beta / self.sqrt_n()
    }

    /// `κ/√n`.
    pub fn kn(&self) -> f64 {
        self.kappa / self.sqrt_n()
    }

    /// `C5(κ)` in the bound `f_11 ≤ C5 √n`.
    pub fn c5(&self) -> f64 {
        let (b, m1, mm, k) = (self.beta, self.mu1, self.mu_m, self.kappa);
        (1.0 / b) * ((m1 + mm) / m1) * k / (k - b / m1)
    }

    /// `C6(κ)` in the bound `f_22 ≤ C6 √n`.
    pub fn c6(&self) -> f64 {
        let (b, m1, mm, k) = (self.beta, self.mu1, self.mu_m, self.kappa);
        let r = m1 / (m1 - mm);
        1.0 / (m1 * k) + (1.0 / b) * r * r * k / (k - b / m1) + (1.0 / b) * m1 * (1.0 + mm) / (m1 - mm)
    }
}

/// A point `(x1, x2)` of `Ω = (−∞, 0] × [0, ∞)`.
pub type Point = (f64, f64);

/// First coordinate of the exponential-phase fluid path at time `tau`.
pub fn g_tau(x: Point, tau: f64, ctx: &LyapunovContext) -> f64 {
    let (x1, x2) = x;
    let (m1, mm) = (ctx.mu1, ctx.mu_m);
    let a = -ctx.bn() / mm;
    a + (x1 - a) * (-mm * tau).exp() - m1 * x2 / (m1 - mm) * ((-m1 * tau).exp() - (-mm * tau).exp())
}

/// `d/dτ g_tau`.
pub fn g_tau_prime(x: Point, tau: f64, ctx: &LyapunovContext) -> f64 {
    let (x1, x2) = x;
    let (m1, mm) = (ctx.mu1, ctx.mu_m);
    let a = -ctx.bn() / mm;
    -mm * (x1 - a) * (-mm * tau).exp() + m1 * x2 / (m1 - mm) * (m1 * (-m1 * tau).exp() - mm * (-mm * tau).exp())
}

/// First time the fluid path from `x` reaches `x1 = 0`, or ∞.
///
/// `g` has the form `a + b e^{−μ_M t} + c e^{−μ_1 t}` with `c ≤ 0`, so it has
/// at most one interior maximum `t*`. A root exists iff `g(t*) ≥ 0`, and the
/// first one lies in `[0, t*]` where `g` is increasing.
pub fn solve_tau(x: Point, ctx: &LyapunovContext) -> f64 {
    let (x1, x2) = x;
    if x1 >= 0.0 {
        return 0.0;
    }
    let (m1, mm) = (ctx.mu1, ctx.mu_m);
    let a = -ctx.bn() / mm;
    let b = x1 - a + m1 * x2 / (m1 - mm);
    let c = -m1 * x2 / (m1 - mm);
    if b <= 0.0 || m1 * (-c) <= mm * b {
        return f64::INFINITY;
    }
    let t_star = ((m1 * (-c)) / (mm * b)).ln() / (m1 - mm);
    let peak = g_tau(x, t_star, ctx);
    if peak < 0.0 {
        return f64::INFINITY;
    }
    newton_bisect(|t| (g_tau(x, t, ctx), g_tau_prime(x, t, ctx)), 0.0, t_star, TAU_TOL).unwrap_or(t_star)
}

/// Height of the curve `Γ^{κ_c}` above `x1`: the `x2` whose fluid path hits
/// `x1 = 0` exactly when `v2 = κ_c/√n`.
pub fn x2_star(x1: f64, kappa_curve: f64, ctx: &LyapunovContext) -> f64 {
    let kc = kappa_curve / ctx.sqrt_n();
    if x1 >= 0.0 {
        return kc;
    }
    let (m1, mm) = (ctx.mu1, ctx.mu_m);
    let a = -ctx.bn() / mm;
    let d = m1 - mm;
    // g along x2 = kc·e^{μ_1 τ}, which is increasing in τ
    let h = |t: f64| {
        let v = a + (x1 - a) * (-mm * t).exp() - m1 * kc / d * (1.0 - (d * t).exp());
        let dv = -mm * (x1 - a) * (-mm * t).exp() + m1 * kc * (d * t).exp();
        (v, dv)
    };
    let mut hi = 1.0;
    while h(hi).0 < 0.0 {
        hi *= 2.0;
    }
    let tau = newton_bisect(h, 0.0, hi, TAU_TOL).unwrap_or(hi);
    kc * (m1 * tau).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Omega1,
    Omega2,
    /// Above `Γ^κ`, with the hitting time `τ(x)`.
    Omega3 {
        tau: f64,
    },
}

impl Region {
    pub fn label(&self) -> &'static str {
        match self {
            Region::Omega1 => "omega1",
            Region::Omega2 => "omega2",
            Region::Omega3 { .. } => "omega3",
        }
    }

    pub fn tau(&self) -> Option<f64> {
        match self {
            Region::Omega3 { tau } => Some(*tau),
            _ => None,
        }
    }
}

/// Region of `x`; points on `Γ^κ` belong to `Ω2`.
pub fn classify_region(x: Point, ctx: &LyapunovContext) -> Region {
    let (x1, x2) = x;
    if x2 <= ctx.kn() {
        Region::Omega1
    } else if x2 > x2_star(x1, ctx.kappa, ctx) {
        Region::Omega3 { tau: solve_tau(x, ctx) }
    } else {
        Region::Omega2
    }
}

/// Quantities shared by the `Ω3` formulas.
struct Omega3 {
    tau: f64,
    e1: f64,
    em: f64,
    /// `x2 e^{−μ_1 τ}`, the second coordinate at the hitting time.
    w: f64,
    tau1: f64,
    tau2: f64,
    theta: f64,
}

fn omega3(x: Point, tau: f64, ctx: &LyapunovContext) -> Omega3 {
    let (m1, mm) = (ctx.mu1, ctx.mu_m);
    let e1 = (-m1 * tau).exp();
    let em = (-mm * tau).exp();
    let w = x.1 * e1;
    let slope = m1 * w - ctx.bn();
    let r = m1 / (m1 - mm);
    Omega3 { tau, e1, em, w, tau1: -em / slope, tau2: r * (e1 - em) / slope, theta: r * (em - e1) + e1 }
}

pub fn f_star(x: Point, ctx: &LyapunovContext) -> f64 {
    let (m1, kn) = (ctx.mu1, ctx.kn());
    let x2 = x.1;
    match classify_region(x, ctx) {
        Region::Omega1 => 0.0,
        Region::Omega2 => x2 / m1 - kn / m1 - (kn / m1) * (x2 / kn).ln(),
        Region::Omega3 { tau } => {
            let o = omega3(x, tau, ctx);
            x2 / m1 * (1.0 - o.e1) - kn * o.tau + ctx.sqrt_n() / (2.0 * ctx.beta) * (o.w - kn).powi(2)
        }
    }
}

/// `(f_1, f_2)`.
pub fn grad_f_star(x: Point, ctx: &LyapunovContext) -> (f64, f64) {
    let (m1, kn) = (ctx.mu1, ctx.kn());
    let s = ctx.sqrt_n() / ctx.beta;
    match classify_region(x, ctx) {
        Region::Omega1 => (0.0, 0.0),
        Region::Omega2 => (0.0, 1.0 / m1 - kn / (m1 * x.1)),
        Region::Omega3 { tau } => {
            let o = omega3(x, tau, ctx);
            (s * o.em * (o.w - kn), (1.0 - o.e1) / m1 + (o.w - kn) * s * o.theta)
        }
    }
}

/// Second derivatives `(f_11, f_12, f_22)`.
pub fn hessian_f_star(x: Point, ctx: &LyapunovContext) -> (f64, f64, f64) {
    let (m1, mm, kn) = (ctx.mu1, ctx.mu_m, ctx.kn());
    let s = ctx.sqrt_n() / ctx.beta;
    match classify_region(x, ctx) {
        Region::Omega1 => (0.0, 0.0, 0.0),
        Region::Omega2 => (0.0, 0.0, kn / (m1 * x.1 * x.1)),
        Region::Omega3 { tau } => {
            let o = omega3(x, tau, ctx);
            let f11 = s * o.tau1 * o.em * (-(m1 + mm) * o.w + mm * kn);
            let f12 = s * o.em * (-(m1 + mm) * o.tau2 * o.w + mm * o.tau2 * kn + o.e1);
            let theta2 = m1 * mm / (m1 - mm) * (o.e1 - o.em) * o.tau2;
            let f22 = o.e1 * o.tau2 + s * ((o.e1 - m1 * o.w * o.tau2) * o.theta + (o.w - kn) * theta2);
            (f11, f12, f22)
        }
    }
}

/// `(f_11, f_22)`.
pub fn hess_diag_f_star(x: Point, ctx: &LyapunovContext) -> (f64, f64) {
    let (a, _, c) = hessian_f_star(x, ctx);
    (a, c)
}

/// `L f` from the gradient `grads = (f_1, f_2)`.
pub fn l_apply(grads: (f64, f64), x: Point, ctx: &LyapunovContext) -> f64 {
    let (x1, x2) = x;
    (-ctx.bn() - ctx.mu_m * x1 + ctx.mu1 * x2) * grads.0 - ctx.mu1 * x2 * grads.1
}

/// `L f*(x) + (x2 − κ/√n)^+`, zero up to rounding.
pub fn pde_residual(x: Point, ctx: &LyapunovContext) -> f64 {
    l_apply(grad_f_star(x, ctx), x, ctx) + (x.1 - ctx.kn()).max(0.0)
}

/// Position of the fluid path from `x` at time `t`.
pub fn fluid_trajectory(x: Point, t: f64, ctx: &LyapunovContext) -> Point {
    let m1 = ctx.mu1;
    let bn = ctx.bn();
    let tau = solve_tau(x, ctx);
    if t < tau {
        return (g_tau(x, t, ctx), x.1 * (-m1 * t).exp());
    }
    let w = x.1 * (-m1 * tau).exp();
    let exit = w.min(bn / m1);
    let slide = (w - exit) / bn;
    if t < tau + slide {
        return (0.0, w - bn * (t - tau));
    }
    // leaves the boundary and never returns
    let s = t - tau - slide;
    (g_tau((0.0, exit), s, ctx), exit * (-m1 * s).exp())
}

/// `V(q) = Σ_{j<M} (N_j − Q_{j,1})` and its generator value under SA-JSQ.
pub fn drift_v(q: &OccupancyState, cfg: &SystemConfig) -> (f64, f64) {
    let m = cfg.m();
    let v: usize = (0..m - 1).map(|j| cfg.pool_sizes[j] - q.q(j, 1)).sum();
    let up: f64 = (0..m - 1).map(|j| cfg.speeds[j] * q.exactly(j, 1) as f64).sum();
    let down = if v > 0 { cfg.arrival_rate() } else { 0.0 };
    (v as f64, up - down)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> LyapunovContext {
        LyapunovContext::new(100, 2.0, 2.5, 0.625, 1.0).unwrap()
    }

    fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let fa = f(a);
        for _ in 0..300 {
            let m = 0.5 * (a + b);
            if (f(m) > 0.0) == (fa > 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn g_tau_limits() {
        let c = ctx();
        assert_eq!(g_tau((-0.3, 0.2), 0.0, &c), -0.3);
        assert_eq!(g_tau((0.0, 1.7), 0.0, &c), 0.0);
        assert!((g_tau((-0.3, 0.2), 200.0, &c) + c.bn() / c.mu_m).abs() < 1e-15);
    }

    #[test]
    fn tau_examples() {
        let c = ctx();
        assert_eq!(solve_tau((0.0, 0.2), &c), 0.0);
        assert_eq!(solve_tau((-0.1, 0.0), &c), f64::INFINITY);
        let x = (-0.05, 0.30);
        let tau = solve_tau(x, &c);
        // oracle: scan for the first sign change on a fine grid, then bisect
        let mut lo = 0.0;
        while g_tau(x, lo + 1e-3, &c) < 0.0 {
            lo += 1e-3;
        }
        let oracle = bisect(|t| g_tau(x, t, &c), lo, lo + 1e-3);
        assert!((tau - oracle).abs() < 1e-10, "{tau} vs {oracle}");
    }

    #[test]
    fn x2_star_examples() {
        let c = ctx();
        assert_eq!(x2_star(0.0, 1.0, &c), c.kn());
        let v = x2_star(-0.1, 1.0, &c);
        // nested bisection oracle: outer on x2, inner on the first hitting time
        let hit_level = |x2: f64| {
            let x = (-0.1, x2);
            let g = |t: f64| g_tau(x, t, &c);
            // first root by scanning
            let mut t = 0.0;
            while t < 50.0 && g(t + 1e-3) < 0.0 {
                t += 1e-3;
            }
            if t >= 50.0 {
                return -1.0;
            }
            let tau = bisect(g, t, t + 1e-3);
            x2 * (-c.mu1 * tau).exp() - c.kn()
        };
        let oracle = bisect(hit_level, c.kn(), 5.0);
        assert!((v - oracle).abs() < 1e-9, "{v} vs {oracle}");
        assert!(x2_star(-0.2, 1.0, &c) > v);
    }

    #[test]
    fn region_examples() {
        let c = ctx();
        assert_eq!(classify_region((-1.0, c.kn() / 2.0), &c), Region::Omega1);
        assert!(matches!(classify_region((0.0, 2.0 * c.kn()), &c), Region::Omega3 { .. }));
        let x1 = -0.4;
        assert_eq!(classify_region((x1, x2_star(x1, c.kappa, &c)), &c), Region::Omega2);
    }

    #[test]
    fn f_star_examples() {
        let c = ctx();
        assert_eq!(f_star((-2.0, 0.05), &c), 0.0);
        let e = std::f64::consts::E;
        let x = (-3.0, e * c.kn());
        assert_eq!(classify_region(x, &c), Region::Omega2);
        assert!((f_star(x, &c) - c.kn() * (e - 2.0) / c.mu1).abs() < 1e-15);
        let x2 = 0.4;
        let expect = c.sqrt_n() / (2.0 * c.beta) * (x2 - c.kn()).powi(2);
        assert!((f_star((0.0, x2), &c) - expect).abs() < 1e-15);
    }

    #[test]
    fn boundary_gradient_and_operator() {
        let c = ctx();
        for x2 in [0.11, 0.5, 2.0, 4.9] {
            let (f1, f2) = grad_f_star((0.0, x2), &c);
            let expect = c.sqrt_n() / c.beta * (x2 - c.kn());
            assert!((f1 - expect).abs() < 1e-12 && (f2 - expect).abs() < 1e-12);
            let l = l_apply((f1, f2), (0.0, x2), &c);
            assert!((l + (x2 - c.kn())).abs() < 1e-12);
        }
        assert_eq!(l_apply((0.0, 0.0), (-1.0, 1.0), &c), 0.0);
    }

    #[test]
    fn omega2_residual_vanishes() {
        let c = ctx();
        let x1 = -2.0;
        let top = x2_star(x1, c.kappa, &c);
        for k in 1..10 {
            let x2 = c.kn() + (top - c.kn()) * k as f64 / 10.0;
            assert_eq!(classify_region((x1, x2), &c), Region::Omega2);
            assert!(pde_residual((x1, x2), &c).abs() < 1e-12);
        }
    }

    #[test]
    fn finite_difference_second_derivatives() {
        let c = ctx();
        for x in [(-0.05, 0.3), (-0.5, 2.0), (-1.2, 4.0), (-0.01, 0.15)] {
            assert!(matches!(classify_region(x, &c), Region::Omega3 { .. }));
            let (f11, f12, f22) = hessian_f_star(x, &c);
            let h1 = 1e-6 * x.0.abs().max(1e-2);
            let h2 = 1e-6 * x.1;
            let d11 = (grad_f_star((x.0 + h1, x.1), &c).0 - grad_f_star((x.0 - h1, x.1), &c).0) / (2.0 * h1);
            let d12 = (grad_f_star((x.0, x.1 + h2), &c).0 - grad_f_star((x.0, x.1 - h2), &c).0) / (2.0 * h2);
            let d22 = (grad_f_star((x.0, x.1 + h2), &c).1 - grad_f_star((x.0, x.1 - h2), &c).1) / (2.0 * h2);
            for (a, b) in [(f11, d11), (f12, d12), (f22, d22)] {
                assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()), "{x:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn fluid_path_integral_matches_f_star() {
        let c = ctx();
        for x in [(-0.05, 0.3), (-1.0, 3.0), (-2.0, 0.3), (0.0, 1.2), (-0.3, 0.05)] {
            // composite Simpson on a long horizon, split at the kinks
            let tau = solve_tau(x, &c);
            let mut knots = vec![0.0];
            if tau.is_finite() {
                let w = x.1 * (-c.mu1 * tau).exp();
                knots.push(tau);
                knots.push(tau + (w - w.min(c.bn() / c.mu1)) / c.bn());
            }
            let h = |s: f64| (fluid_trajectory(x, s, &c).1 - c.kn()).max(0.0);
            let kink = if x.1 > c.kn() { Some(((x.1 / c.kn()).ln()) / c.mu1) } else { None };
            knots.extend(kink);
            knots.push(60.0);
            knots.sort_by(f64::total_cmp);
            let mut total = 0.0;
            for w in knots.windows(2) {
                let (a, b) = (w[0], w[1]);
                let k = 20_000;
                let dh = (b - a) / k as f64;
                let mut s = h(a) + h(b);
                for i in 1..k {
                    s += h(a + i as f64 * dh) * if i % 2 == 1 { 4.0 } else { 2.0 };
                }
                total += s * dh / 3.0;
            }
            assert!((total - f_star(x, &c)).abs() < 1e-6, "{x:?}: {total} vs {}", f_star(x, &c));
        }
    }

    #[test]
    fn fluid_path_starts_at_x() {
        let c = ctx();
        assert_eq!(fluid_trajectory((-0.7, 1.1), 0.0, &c), (-0.7, 1.1));
        let v = fluid_trajectory((-0.7, 1.1), 0.2, &c);
        assert!((v.1 - 1.1 * (-c.mu1 * 0.2).exp()).abs() < 1e-15);
    }

    #[test]
    fn drift_examples() {
        let cfg = SystemConfig::fig1(100).unwrap();
        let q = OccupancyState::empty(&cfg);
        let (v, gv) = drift_v(&q, &cfg);
        assert_eq!(v, 20.0);
        assert!((gv + cfg.arrival_rate()).abs() < 1e-12);
        let full = OccupancyState::from_lengths(&cfg, &[vec![1; 20], vec![0; 80]]).unwrap();
        assert_eq!(drift_v(&full, &cfg).0, 0.0);
    }
}
