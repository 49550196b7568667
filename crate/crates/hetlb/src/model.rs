//! System configuration, occupancy states and diffusion scaling.
//!
//! Pools are indexed from 0 in code, fastest first. Queue levels follow the
//! occupancy convention: `Q_{j,i}` is the number of pool-`j` servers holding at
//! least `i` jobs, so `Q_{j,0} = N_j`.

use crate::error::{Error, Result};

const CAPACITY_TOL: f64 = 1e-9;
const INITIAL_DEPTH: usize = 4;

/// Unvalidated configuration as read from a file or built by hand.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub pool_sizes: Option<Vec<usize>>,
    pub speeds: Vec<f64>,
    pub beta: f64,
    pub lambda: Option<f64>,
    pub gammas: Option<Vec<f64>>,
}

/// Validated parameters of the `n`-server system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub n: usize,
    pub pool_sizes: Vec<usize>,
    pub speeds: Vec<f64>,
    pub beta: f64,
    pub lambda: f64,
    pub gammas: Option<Vec<f64>>,
}

impl SystemConfig {
    /// Number of pools `M`.
    pub fn m(&self) -> usize {
        self.pool_sizes.len()
    }

    /// Total arrival rate `nλ`.
    pub fn arrival_rate(&self) -> f64 {
        self.n as f64 * self.lambda
    }

    /// Total service capacity `Σ μ_j N_j`.
    pub fn capacity(&self) -> f64 {
        self.pool_sizes.iter().zip(&self.speeds).map(|(&nj, &mu)| nj as f64 * mu).sum()
    }

    pub fn sqrt_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    /// Builds a validated config from limit fractions `γ_j`, rounding pool
    /// sizes and giving the remainder to the slowest pool.
    pub fn from_fractions(n: usize, gammas: &[f64], speeds: &[f64], beta: f64) -> Result<Self> {
        let m = gammas.len();
        if m == 0 || speeds.len() != m {
            return Err(Error::InvalidConfig("gammas and speeds must have equal, nonzero length".into()));
        }
        let mut sizes: Vec<usize> = gammas[..m - 1].iter().map(|g| (g * n as f64).round() as usize).collect();
        let used: usize = sizes.iter().sum();
        if used >= n {
            return Err(Error::InvalidConfig(format!("fractions leave no servers for the last pool at n = {n}")));
        }
        sizes.push(n - used);
        validate_config(RawConfig {
            n: Some(n),
            m: Some(m),
            pool_sizes: Some(sizes),
            speeds: speeds.to_vec(),
            beta,
            lambda: None,
            gammas: Some(gammas.to_vec()),
        })
    }

    /// Two pools with a fifth of the servers at speed 2.5 and the rest at
    /// 0.625, β = 2.
    pub fn fig1(n: usize) -> Result<Self> {
        Self::from_fractions(n, &[0.2, 0.8], &[2.5, 0.625], 2.0)
    }

    /// Same as `self` with an explicit arrival rate override.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::LambdaOutOfRange(lambda));
        }
        Ok(Self { lambda, ..self.clone() })
    }
}

/// Checks the invariants of a raw configuration and fills defaults.
///
/// `λ` defaults to `1 − β/√n`. When `pool_sizes` is absent it is derived
/// from `gammas`.
pub fn validate_config(raw: RawConfig) -> Result<SystemConfig> {
    let speeds = raw.speeds.clone();
    if speeds.is_empty() {
        return Err(Error::InvalidConfig("no speeds given".into()));
    }
    let decreasing = speeds.windows(2).all(|w| w[0] > w[1]);
    if !decreasing || speeds.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::NonDecreasingSpeeds(speeds));
    }
    let pool_sizes = match (&raw.pool_sizes, &raw.gammas, raw.n) {
        (Some(p), _, _) => p.clone(),
        (None, Some(g), Some(n)) => {
            return SystemConfig::from_fractions(n, g, &speeds, raw.beta).and_then(|c| match raw.lambda {
                Some(l) => c.with_lambda(l),
                None => Ok(c),
            })
        }
        _ => return Err(Error::InvalidConfig("pool_sizes or (n, gammas) required".into())),
    };
    if pool_sizes.len() != speeds.len() {
        return Err(Error::InvalidConfig(format!("{} pool sizes but {} speeds", pool_sizes.len(), speeds.len())));
    }
    if let Some(m) = raw.m {
        if m != speeds.len() {
            return Err(Error::InvalidConfig(format!("m = {m} but {} pools given", speeds.len())));
        }
    }
    if pool_sizes.contains(&0) {
        return Err(Error::InvalidConfig("pool sizes must be positive".into()));
    }
    let sum: usize = pool_sizes.iter().sum();
    let n = raw.n.unwrap_or(sum);
    if sum != n {
        return Err(Error::PoolSumMismatch { n, sum });
    }
    if !(raw.beta > 0.0) || !raw.beta.is_finite() {
        return Err(Error::InvalidConfig(format!("beta must be positive, got {}", raw.beta)));
    }
    if let Some(g) = &raw.gammas {
        if g.len() != speeds.len() || g.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidConfig("gammas must be positive, one per pool".into()));
        }
        let cap: f64 = g.iter().zip(&speeds).map(|(a, b)| a * b).sum();
        if (cap - 1.0).abs() > CAPACITY_TOL {
            return Err(Error::CapacityNotNormalized(cap));
        }
    }
    let lambda = raw.lambda.unwrap_or(1.0 - raw.beta / (n as f64).sqrt());
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::LambdaOutOfRange(lambda));
    }
    Ok(SystemConfig { n, pool_sizes, speeds, beta: raw.beta, lambda, gammas: raw.gammas })
}

/// Tail-count matrix `counts[j][i] = Q_{j,i+1}` with a simulation clock.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyState {
    sizes: Vec<usize>,
    counts: Vec<Vec<usize>>,
    pub clock: f64,
}

impl OccupancyState {
    pub fn empty(cfg: &SystemConfig) -> Self {
        Self { sizes: cfg.pool_sizes.clone(), counts: vec![vec![0; INITIAL_DEPTH]; cfg.m()], clock: 0.0 }
    }

    /// Builds a state from per-server queue lengths, one list per pool.
    pub fn from_lengths(cfg: &SystemConfig, lengths: &[Vec<usize>]) -> Result<Self> {
        if lengths.len() != cfg.m() {
            return Err(Error::InvalidConfig("one length list per pool required".into()));
        }
        let mut s = Self::empty(cfg);
        for (j, ls) in lengths.iter().enumerate() {
            if ls.len() != cfg.pool_sizes[j] {
                return Err(Error::InvalidConfig(format!(
                    "pool {} has {} servers, got {} lengths",
                    j + 1,
                    cfg.pool_sizes[j],
                    ls.len()
                )));
            }
            for &l in ls {
                s.ensure_depth(l);
                for i in 0..l {
                    s.counts[j][i] += 1;
                }
            }
        }
        Ok(s)
    }

    /// Builds a state directly from a tail-count matrix, checking monotonicity.
    pub fn from_counts(cfg: &SystemConfig, counts: Vec<Vec<usize>>) -> Result<Self> {
        if counts.len() != cfg.m() {
            return Err(Error::InvalidConfig("one count row per pool required".into()));
        }
        let depth = counts.iter().map(Vec::len).max().unwrap_or(0).max(INITIAL_DEPTH);
        let mut s = Self {
            sizes: cfg.pool_sizes.clone(),
            counts: counts
                .into_iter()
                .map(|mut r| {
                    r.resize(depth, 0);
                    r
                })
                .collect(),
            clock: 0.0,
        };
        if !s.is_valid() {
            return Err(Error::InvalidConfig("counts must be non-increasing and bounded by pool sizes".into()));
        }
        let last_used = s.counts.iter().any(|r| r[depth - 1] > 0);
        if last_used {
            s.grow();
        }
        Ok(s)
    }

    pub fn m(&self) -> usize {
        self.sizes.len()
    }

    pub fn pool_sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Tracked tail depth `L`.
    pub fn depth(&self) -> usize {
        self.counts[0].len()
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    /// `Q_{j,i}`: pool-`j` servers with at least `i` jobs (`Q_{j,0} = N_j`).
    pub fn q(&self, j: usize, i: usize) -> usize {
        if i == 0 {
            self.sizes[j]
        } else {
            self.counts[j].get(i - 1).copied().unwrap_or(0)
        }
    }

    /// Pool-`j` servers with exactly `len` jobs.
    pub fn exactly(&self, j: usize, len: usize) -> usize {
        self.q(j, len) - self.q(j, len + 1)
    }

    /// Largest queue length present anywhere.
    pub fn max_len(&self) -> usize {
        (0..self.m()).map(|j| self.counts[j].iter().take_while(|&&c| c > 0).count()).max().unwrap_or(0)
    }

    pub fn total_jobs(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// `Σ_j Q_{j,1}`, the number of busy servers.
    pub fn busy(&self) -> usize {
        (0..self.m()).map(|j| self.q(j, 1)).sum()
    }

    /// `Q_{+2} = Σ_j Σ_{i≥2} Q_{j,i}`, the number of waiting jobs.
    pub fn waiting(&self) -> usize {
        self.total_jobs() - self.busy()
    }

    /// Adds a job to a pool-`j` server currently holding `len` jobs.
    pub fn apply_arrival(&mut self, j: usize, len: usize) {
        debug_assert!(self.exactly(j, len) > 0, "no server of length {len} in pool {j}");
        self.ensure_depth(len + 1);
        self.counts[j][len] += 1;
        if self.counts[j][self.depth() - 1] > 0 {
            self.grow();
        }
    }

    /// Removes a job from a pool-`j` server currently holding `len ≥ 1` jobs.
    pub fn apply_departure(&mut self, j: usize, len: usize) {
        debug_assert!(len >= 1 && self.exactly(j, len) > 0);
        self.counts[j][len - 1] -= 1;
    }

    /// Tail monotonicity and pool-size bounds.
    pub fn is_valid(&self) -> bool {
        self.counts
            .iter()
            .zip(&self.sizes)
            .all(|(row, &nj)| row.first().is_none_or(|&c| c <= nj) && row.windows(2).all(|w| w[0] >= w[1]))
    }

    fn ensure_depth(&mut self, len: usize) {
        while self.depth() < len + 1 {
            self.grow();
        }
    }

    fn grow(&mut self) {
        let d = self.depth() * 2;
        for r in &mut self.counts {
            r.resize(d, 0);
        }
    }
}

/// Diffusion-scaled occupancy.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledState {
    /// `y[j][0] = (Q_{j,1} − N_j)/√n`, `y[j][i] = Q_{j,i+1}/√n`.
    pub y: Vec<Vec<f64>>,
    /// `Σ_{j<M} y[j][0]`.
    pub idle_fast: f64,
    /// `(Σ_j Q_{j,1} − n)/√n + Σ_j Σ_{i≥2} Q_{j,i}/√n`.
    pub y_plus1: f64,
    pub y_plus2: f64,
}

pub fn scale_state(q: &OccupancyState, cfg: &SystemConfig) -> ScaledState {
    let s = cfg.sqrt_n();
    let y: Vec<Vec<f64>> = (0..cfg.m())
        .map(|j| {
            let mut row = Vec::with_capacity(q.depth());
            row.push((q.q(j, 1) as f64 - cfg.pool_sizes[j] as f64) / s);
            row.extend((2..=q.depth()).map(|i| q.q(j, i) as f64 / s));
            row
        })
        .collect();
    let m = cfg.m();
    let idle_fast = (0..m - 1).map(|j| y[j][0]).sum();
    let y_plus2: f64 = y.iter().map(|r| r[1..].iter().sum::<f64>()).sum();
    let first: f64 = y.iter().map(|r| r[0]).sum();
    ScaledState { y, idle_fast, y_plus1: first + y_plus2, y_plus2 }
}

/// Inverse of [`scale_state`] on integer-grid states.
pub fn unscale(y: &ScaledState, cfg: &SystemConfig) -> Result<OccupancyState> {
    let s = cfg.sqrt_n();
    let counts =
        y.y.iter()
            .enumerate()
            .map(|(j, row)| {
                let mut r = Vec::with_capacity(row.len());
                r.push((row[0] * s + cfg.pool_sizes[j] as f64).round() as usize);
                r.extend(row[1..].iter().map(|v| (v * s).round() as usize));
                r
            })
            .collect();
    OccupancyState::from_counts(cfg, counts)
}

/// `Y_{[1,M-1],1}`, the scaled idle count of all pools but the slowest.
pub fn aggregate_idle_fast(y: &ScaledState) -> f64 {
    let m = y.y.len();
    y.y[..m - 1].iter().map(|r| r[0]).sum()
}
