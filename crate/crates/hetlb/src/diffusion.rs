//! Limit processes: one-sided reflection, the reflected OU pair and the
//! linear tail components.
//!
//! The pair `(Y_{M,1}, Y_{1,2})` solves
//!
//! ```text
//! dY_{M,1} = (−β − μ_M Y_{M,1} + μ_1 Y_{1,2} + Σ_{j≥2} μ_j Y_{j,2}) dt + σ dW − dU_1
//! dY_{1,2} = −μ_1 (Y_{1,2} − Y_{1,3}) dt + dU_1
//! ```
//!
//! with `Y_{M,1} ≤ 0` and `U_1` increasing only when `Y_{M,1} = 0`. All other
//! components follow `y'_{j,i} = −μ_j (y_{j,i} − y_{j,i+1})`.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{stream, Lane};
use crate::stats::{mean_se, BatchAccumulator};

const TAIL_TOL: f64 = -1e-9;

/// One-sided reflection of a discrete path below `kappa` (`f64::INFINITY`
/// disables the barrier). Returns `(φ, ψ)` with `ψ_k = max_{s≤k} (x_s − κ)^+`
/// and `φ = x − ψ`.
pub fn skorokhod_reflect(path: &[f64], kappa: f64) -> (Vec<f64>, Vec<f64>) {
    if kappa == f64::INFINITY {
        return (path.to_vec(), vec![0.0; path.len()]);
    }
    let mut run = 0.0f64;
    let psi: Vec<f64> = path
        .iter()
        .map(|&x| {
            run = run.max(x - kappa);
            run
        })
        .collect();
    let phi = path.iter().zip(&psi).map(|(x, p)| x - p).collect();
    (phi, psi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionParams {
    pub beta: f64,
    pub mu1: f64,
    pub mu_m: f64,
    /// Noise coefficient on the first coordinate; √2 in the limit.
    pub sigma: f64,
    pub h: f64,
    pub horizon: f64,
    /// Store every `record_every`-th step.
    pub record_every: usize,
}

impl DiffusionParams {
    pub fn new(beta: f64, mu1: f64, mu_m: f64, h: f64, horizon: f64) -> Result<Self> {
        let p = Self { beta, mu1, mu_m, sigma: std::f64::consts::SQRT_2, h, horizon, record_every: 1 };
        p.validate()?;
        Ok(p)
    }

    pub fn sigma(mut self, s: f64) -> Self {
        self.sigma = s;
        self
    }

    pub fn record_every(mut self, k: usize) -> Self {
        self.record_every = k.max(1);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !(self.horizon >= 0.0) || !(self.mu1 > self.mu_m) || !(self.mu_m > 0.0) {
            return Err(Error::InvalidConfig("need h > 0, horizon ≥ 0 and μ_1 > μ_M > 0".into()));
        }
        if !(self.sigma >= 0.0) || !(self.beta > 0.0) {
            return Err(Error::InvalidConfig("need σ ≥ 0 and β > 0".into()));
        }
        Ok(())
    }
}

/// Initial condition. `upper[j][k]` is `Y_{j+1,k+2}`; `upper[0][0]` is
/// `Y_{1,2}`. `speeds[j]` is `μ_{j+1}` and is only needed when the tail is
/// nonzero beyond `Y_{1,2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitState {
    pub y_m1: f64,
    pub upper: Vec<Vec<f64>>,
    pub speeds: Vec<f64>,
}

impl LimitState {
    /// The reduced pair with no tail.
    pub fn pair(y_m1: f64, y12: f64, p: &DiffusionParams) -> Self {
        Self { y_m1, upper: vec![vec![y12]], speeds: vec![p.mu1] }
    }

    pub fn y12(&self) -> f64 {
        self.upper[0][0]
    }

    fn validate(&self) -> Result<()> {
        if self.y_m1 > 0.0
            || self.upper.iter().flatten().any(|&v| v < 0.0)
            || self.upper.is_empty()
            || self.upper[0].is_empty()
        {
            return Err(Error::InvalidConfig("need y_M1 ≤ 0 and a non-negative tail".into()));
        }
        if self.speeds.len() < self.upper.len() {
            return Err(Error::InvalidConfig("one speed per tail row required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionPath {
    pub times: Vec<f64>,
    pub y_m1: Vec<f64>,
    pub y12: Vec<f64>,
    pub u1: Vec<f64>,
    /// Full `upper` matrix per stored time, when a tail beyond `Y_{1,2}` is present.
    pub tail: Option<Vec<Vec<Vec<f64>>>>,
}

struct Stepper<'a> {
    p: &'a DiffusionParams,
    y_m1: f64,
    upper: Vec<Vec<f64>>,
    speeds: Vec<f64>,
    u1: f64,
    t: f64,
    has_tail: bool,
}

impl<'a> Stepper<'a> {
    fn new(p: &'a DiffusionParams, y0: &LimitState) -> Self {
        let has_tail = y0.upper.len() > 1 || y0.upper[0].len() > 1;
        Self { p, y_m1: y0.y_m1, upper: y0.upper.clone(), speeds: y0.speeds.clone(), u1: 0.0, t: 0.0, has_tail }
    }

    /// Advances by `h` with Brownian increment `dw`; returns the regulator increment.
    fn step(&mut self, h: f64, dw: f64) -> Result<f64> {
        let p = self.p;
        let y12 = self.upper[0][0];
        let mut drift1 = -p.beta - p.mu_m * self.y_m1 + p.mu1 * y12;
        if self.has_tail {
            drift1 += (1..self.upper.len())
                .map(|j| self.speeds[j] * self.upper[j].first().copied().unwrap_or(0.0))
                .sum::<f64>();
            let old = self.upper.clone();
            for (j, row) in self.upper.iter_mut().enumerate() {
                let mu = if j == 0 { p.mu1 } else { self.speeds[j] };
                for k in 0..row.len() {
                    let next = old[j].get(k + 1).copied().unwrap_or(0.0);
                    row[k] = old[j][k] - h * mu * (old[j][k] - next);
                }
            }
            for row in &self.upper {
                for &v in row.iter() {
                    if v < TAIL_TOL {
                        return Err(Error::StepTooLarge { t: self.t + h, value: v });
                    }
                }
            }
        } else {
            self.upper[0][0] = y12 - h * p.mu1 * y12;
            if self.upper[0][0] < TAIL_TOL {
                return Err(Error::StepTooLarge { t: self.t + h, value: self.upper[0][0] });
            }
        }
        self.y_m1 += drift1 * h + p.sigma * dw;
        self.t += h;
        let mut push = 0.0;
        if self.y_m1 > 0.0 {
            push = self.y_m1;
            self.y_m1 = 0.0;
            self.u1 += push;
            self.upper[0][0] += push;
        }
        Ok(push)
    }
}

/// Euler-Maruyama path driven by the given Brownian increments (one per step
/// of size `p.h`).
pub fn integrate_with_increments(p: &DiffusionParams, y0: &LimitState, dw: &[f64]) -> Result<DiffusionPath> {
    p.validate()?;
    y0.validate()?;
    let mut s = Stepper::new(p, y0);
    let mut path = DiffusionPath {
        times: vec![0.0],
        y_m1: vec![s.y_m1],
        y12: vec![s.upper[0][0]],
        u1: vec![0.0],
        tail: s.has_tail.then(|| vec![s.upper.clone()]),
    };
    for (i, &w) in dw.iter().enumerate() {
        s.step(p.h, w)?;
        if (i + 1) % p.record_every == 0 || i + 1 == dw.len() {
            path.times.push(s.t);
            path.y_m1.push(s.y_m1);
            path.y12.push(s.upper[0][0]);
            path.u1.push(s.u1);
            if let Some(t) = path.tail.as_mut() {
                t.push(s.upper.clone());
            }
        }
    }
    Ok(path)
}

fn n_steps(p: &DiffusionParams) -> usize {
    (p.horizon / p.h + 1e-9).round() as usize
}

/// Brownian increments `√h Z` for `steps` steps.
pub fn brownian_increments(h: f64, steps: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sh = h.sqrt();
    (0..steps)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sh * z
        })
        .collect()
}

/// Reflected Euler-Maruyama path of the limit system up to `p.horizon`.
pub fn integrate_limit_sde(p: &DiffusionParams, y0: &LimitState, seed: u64) -> Result<DiffusionPath> {
    p.validate()?;
    let mut rng = stream(seed, 0, Lane::Noise);
    let dw = brownian_increments(p.h, n_steps(p), &mut rng);
    integrate_with_increments(p, y0, &dw)
}

/// Exact solution at time `t` of `y'_i = −μ (y_i − y_{i+1})` for one pool,
/// with levels past the end of `y0` held at zero:
/// `y_i(t) = e^{−μt} Σ_k (μt)^k/k! · y_{i+k}(0)`.
pub fn ode_tail(y0_tail: &[f64], mu: f64, t: f64) -> Vec<f64> {
    let deepest = y0_tail.iter().rposition(|&v| v != 0.0).map_or(0, |i| i + 1);
    let mut weights = Vec::with_capacity(deepest);
    let mut w = (-mu * t).exp();
    for k in 0..deepest {
        if k > 0 {
            w *= mu * t / k as f64;
        }
        weights.push(w);
    }
    (0..y0_tail.len()).map(|i| (i..deepest).map(|l| weights[l - i] * y0_tail[l]).sum()).collect()
}

/// Time averages of the reflected pair after a burn-in.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeMoments {
    pub mean_y_m1: f64,
    pub se_y_m1: f64,
    pub var_y_m1: f64,
    pub mean_y12: f64,
    pub se_y12: f64,
    pub var_y12: f64,
    /// `(y_M1, y12)` snapshots taken every `sample_every` time units.
    pub samples: Vec<(f64, f64)>,
}

/// Long-run moments from one path over `[burn, burn + duration]`, 20 batches.
pub fn sde_stationary_estimate(p: &DiffusionParams, burn: f64, duration: f64, seed: u64) -> Result<SdeMoments> {
    sde_stationary_run(p, burn, duration, 20, 1.0, seed)
}

/// As [`sde_stationary_estimate`], with batch count and snapshot spacing.
pub fn sde_stationary_run(
    p: &DiffusionParams,
    burn: f64,
    duration: f64,
    n_batches: usize,
    sample_every: f64,
    seed: u64,
) -> Result<SdeMoments> {
    p.validate()?;
    let y0 = LimitState::pair(-p.beta / p.mu_m, 0.0, p);
    let mut s = Stepper::new(p, &y0);
    let mut rng = stream(seed, 0, Lane::Noise);
    let sh = p.h.sqrt();
    let total = ((burn + duration) / p.h).round() as usize;
    let mut acc = BatchAccumulator::new(burn, burn + duration, n_batches, 4);
    let mut samples = Vec::new();
    let mut next_sample = burn;
    for _ in 0..total {
        let (a, b) = (s.y_m1, s.upper[0][0]);
        let t0 = s.t;
        if t0 >= next_sample {
            samples.push((a, b));
            next_sample += sample_every;
        }
        let z: f64 = StandardNormal.sample(&mut rng);
        s.step(p.h, sh * z)?;
        acc.add(t0, s.t, &[a, b, a * a, b * b]);
    }
    let avgs = acc.batch_averages();
    let col = |i: usize| avgs.iter().map(|r| r[i]).collect::<Vec<_>>();
    let (m1, se1) = mean_se(&col(0));
    let (m2, se2) = mean_se(&col(1));
    let (sq1, _) = mean_se(&col(2));
    let (sq2, _) = mean_se(&col(3));
    Ok(SdeMoments {
        mean_y_m1: m1,
        se_y_m1: se1,
        var_y_m1: sq1 - m1 * m1,
        mean_y12: m2,
        se_y12: se2,
        var_y12: sq2 - m2 * m2,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::{fluid_trajectory, LyapunovContext};
    use proptest::prelude::*;

    fn fig1(h: f64, horizon: f64) -> DiffusionParams {
        DiffusionParams::new(2.0, 2.5, 0.625, h, horizon).unwrap()
    }

    #[test]
    fn reflection_examples() {
        let (phi, psi) = skorokhod_reflect(&[0.0; 5], 0.0);
        assert_eq!(phi, vec![0.0; 5]);
        assert_eq!(psi, vec![0.0; 5]);
        let t: Vec<f64> = (0..=20).map(|k| k as f64 * 0.25).collect();
        let (phi, psi) = skorokhod_reflect(&t, 1.0);
        for (i, &x) in t.iter().enumerate() {
            assert_eq!(psi[i], (x - 1.0).max(0.0));
            assert_eq!(phi[i], x.min(1.0));
        }
        let (phi, psi) = skorokhod_reflect(&[0.0, 2.0, 1.0, 3.0], 1.5);
        assert_eq!(psi, vec![0.0, 0.5, 0.5, 1.5]);
        assert_eq!(phi, vec![0.0, 1.5, 0.5, 1.5]);
        let (phi, psi) = skorokhod_reflect(&[1.0, -3.0], f64::INFINITY);
        assert_eq!((phi, psi), (vec![1.0, -3.0], vec![0.0, 0.0]));
    }

    proptest! {
        #[test]
        fn reflection_properties(path in proptest::collection::vec(-5.0f64..5.0, 1..50), kappa in 0.0f64..3.0) {
            let (phi, psi) = skorokhod_reflect(&path, kappa);
            prop_assert_eq!(psi[0], (path[0] - kappa).max(0.0));
            for k in 0..path.len() {
                prop_assert!(phi[k] <= kappa + 1e-12);
                if k > 0 {
                    prop_assert!(psi[k] >= psi[k - 1]);
                    if psi[k] > psi[k - 1] {
                        prop_assert!((phi[k] - kappa).abs() < 1e-12);
                    }
                }
                if psi[k] == 0.0 {
                    prop_assert_eq!(phi[k], path[k]);
                }
            }
        }
    }

    #[test]
    fn zero_start_no_noise_stays_below() {
        let p = fig1(1e-3, 5.0).sigma(0.0);
        let path = integrate_limit_sde(&p, &LimitState::pair(0.0, 0.0, &p), 1).unwrap();
        for (t, y) in path.times.iter().zip(&path.y_m1) {
            let exact = -(p.beta / p.mu_m) * (1.0 - (-p.mu_m * t).exp());
            assert!((y - exact).abs() < 2e-3);
            assert!(*y <= 0.0);
        }
        assert!(path.u1.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn fluid_mode_matches_closed_form() {
        let ctx = LyapunovContext::new(1, 2.0, 2.5, 0.625, 1.0).unwrap();
        for &(x1, x2) in &[(-0.5, 3.0), (-2.0, 0.7), (-0.1, 1.0)] {
            let mut errs = Vec::new();
            for h in [1e-3, 5e-4] {
                let p = fig1(h, 6.0).sigma(0.0);
                let path = integrate_limit_sde(&p, &LimitState::pair(x1, x2, &p), 0).unwrap();
                let err = path
                    .times
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| {
                        let v = fluid_trajectory((x1, x2), t, &ctx);
                        (path.y_m1[i] - v.0).abs().max((path.y12[i] - v.1).abs())
                    })
                    .fold(0.0, f64::max);
                errs.push(err);
            }
            assert!(errs[0] < 20.0 * 1e-3, "{errs:?}");
            assert!(errs[1] < 0.7 * errs[0], "not first order: {errs:?}");
        }
    }

    #[test]
    fn fluid_identity_before_boundary() {
        let p = fig1(1e-3, 0.3).sigma(0.0);
        let path = integrate_limit_sde(&p, &LimitState::pair(-3.0, 0.5, &p), 0).unwrap();
        for i in 1..path.times.len() {
            let lhs = (path.y_m1[i] + path.y12[i]) - (path.y_m1[i - 1] + path.y12[i - 1]);
            let rhs = (-p.beta - p.mu_m * path.y_m1[i - 1]) * p.h;
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn determinism_and_complementarity() {
        let p = fig1(1e-2, 50.0);
        let y0 = LimitState::pair(-1.0, 0.2, &p);
        let a = integrate_limit_sde(&p, &y0, 42).unwrap();
        let b = integrate_limit_sde(&p, &y0, 42).unwrap();
        assert_eq!(a, b);
        for i in 1..a.times.len() {
            assert!(a.y_m1[i] <= 0.0 && a.y12[i] >= 0.0);
            assert!(a.u1[i] >= a.u1[i - 1]);
            if a.u1[i] > a.u1[i - 1] {
                assert_eq!(a.y_m1[i], 0.0);
            }
        }
        assert!(a.u1.last().unwrap() > &0.0);
    }

    #[test]
    fn step_halving_converges() {
        let mut rng = stream(3, 0, Lane::Noise);
        let horizon = 5.0;
        let fine_h = 1e-4;
        let fine = brownian_increments(fine_h, (horizon / fine_h) as usize, &mut rng);
        let coarsen = |dw: &[f64], f: usize| dw.chunks(f).map(|c| c.iter().sum()).collect::<Vec<f64>>();
        let run = |f: usize| {
            let p = fig1(fine_h * f as f64, horizon);
            integrate_with_increments(&p, &LimitState::pair(-0.5, 0.3, &p), &coarsen(&fine, f)).unwrap()
        };
        let dist = |a: &DiffusionPath, b: &DiffusionPath, r: usize| {
            a.times
                .iter()
                .enumerate()
                .map(|(i, _)| (a.y_m1[i] - b.y_m1[i * r]).abs().max((a.y12[i] - b.y12[i * r]).abs()))
                .fold(0.0, f64::max)
        };
        let p8 = run(8);
        let p4 = run(4);
        let p2 = run(2);
        let d1 = dist(&p8, &p4, 2);
        let d2 = dist(&p4, &p2, 2);
        assert!(d2 < d1, "{d1} {d2}");
    }

    #[test]
    fn tail_step_too_large() {
        let p = fig1(1.0, 3.0).sigma(0.0);
        let y0 = LimitState { y_m1: -1.0, upper: vec![vec![0.0, 1.0], vec![0.0]], speeds: vec![2.5, 0.625] };
        assert!(matches!(integrate_limit_sde(&p, &y0, 0), Err(Error::StepTooLarge { .. })));
        let pair = LimitState::pair(-1.0, 1.0, &p);
        assert!(matches!(integrate_limit_sde(&p, &pair, 0), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn ode_tail_examples() {
        assert_eq!(ode_tail(&[0.0, 0.0, 0.0], 2.0, 1.3), vec![0.0; 3]);
        let v = ode_tail(&[0.0, 0.0, 1.5], 0.7, 2.0);
        assert!((v[2] - 1.5 * (-1.4f64).exp()).abs() < 1e-15);
        // series oracle: exp(tA) with A = μ(S − I) by truncated Taylor series
        let y0 = [0.4, 1.1];
        let (mu, t) = (1.7, 0.3);
        let a = [[-mu, mu], [0.0, -mu]];
        let mut term = [[1.0, 0.0], [0.0, 1.0]];
        let mut e = term;
        for k in 1..40 {
            let mut next = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    next[i][j] = (0..2).map(|l| term[i][l] * a[l][j]).sum::<f64>() * t / k as f64;
                }
            }
            term = next;
            for i in 0..2 {
                for j in 0..2 {
                    e[i][j] += term[i][j];
                }
            }
        }
        let oracle = [e[0][0] * y0[0] + e[0][1] * y0[1], e[1][0] * y0[0] + e[1][1] * y0[1]];
        let got = ode_tail(&y0, mu, t);
        assert!((got[0] - oracle[0]).abs() < 1e-14 && (got[1] - oracle[1]).abs() < 1e-14);
    }

    #[test]
    fn tail_euler_tracks_exact_tail() {
        let p = fig1(1e-4, 1.0).sigma(0.0);
        let y0 = LimitState { y_m1: -2.0, upper: vec![vec![0.3, 0.2, 0.1], vec![0.4, 0.05]], speeds: vec![2.5, 0.625] };
        let path = integrate_limit_sde(&p, &y0, 0).unwrap();
        let last = path.tail.unwrap().pop().unwrap();
        let exact = ode_tail(&[0.4, 0.05], 0.625, 1.0);
        assert!((last[1][0] - exact[0]).abs() < 1e-4);
        assert!((last[1][1] - exact[1]).abs() < 1e-4);
        let exact1 = ode_tail(&[0.2, 0.1], 2.5, 1.0);
        assert!((last[0][1] - exact1[0]).abs() < 1e-4);
    }

    #[test]
    fn zero_noise_rests_at_fixed_point() {
        let p = fig1(1e-2, 1.0).sigma(0.0);
        let m = sde_stationary_estimate(&p, 30.0, 20.0, 0).unwrap();
        assert!((m.mean_y_m1 + p.beta / p.mu_m).abs() < 1e-6);
        assert!(m.mean_y12.abs() < 1e-6);
    }

    #[test]
    fn large_beta_rarely_reflects() {
        let p = DiffusionParams::new(12.0, 2.5, 0.625, 1e-2, 1.0).unwrap();
        let m = sde_stationary_estimate(&p, 10.0, 400.0, 5).unwrap();
        assert!(m.mean_y12 < 1e-3);
    }
}
