//! Exact stationary distributions of small truncated chains.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::ctmc::{functional_names, functional_values, StationaryEstimate};
use crate::error::{Error, Result};
use crate::model::{OccupancyState, SystemConfig};
use crate::policy::{enumerate_decisions, PolicyKind};

/// Largest truncated state space accepted by [`exact_stationary_small`].
pub const MAX_STATES: usize = 200_000;
const DENSE_LIMIT: usize = 2_500;

/// Solves `πG = 0`, `Σπ = 1` for a generator given as off-diagonal transitions
/// `(from, to, rate)`.
pub fn solve_stationary(n: usize, transitions: &[(usize, usize, f64)]) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    if n <= DENSE_LIMIT {
        let mut a = DMatrix::<f64>::zeros(n, n);
        for &(i, j, r) in transitions {
            if i != j {
                a[(j, i)] += r;
                a[(i, i)] -= r;
            }
        }
        for c in 0..n {
            a[(n - 1, c)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(n);
        b[n - 1] = 1.0;
        let pi = a.lu().solve(&b).expect("irreducible chain has a unique stationary law");
        let s: f64 = pi.iter().sum();
        return pi.iter().map(|p| p.max(0.0) / s).collect();
    }
    gauss_seidel(n, transitions)
}

fn gauss_seidel(n: usize, transitions: &[(usize, usize, f64)]) -> Vec<f64> {
    let mut out_rate = vec![0.0; n];
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(i, j, r) in transitions {
        if i != j {
            out_rate[i] += r;
            incoming[j].push((i, r));
        }
    }
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..200_000 {
        let mut delta: f64 = 0.0;
        for j in 0..n {
            let v: f64 = incoming[j].iter().map(|&(i, r)| pi[i] * r).sum::<f64>() / out_rate[j];
            delta = delta.max((v - pi[j]).abs());
            pi[j] = v;
        }
        let s: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= s);
        if delta / s < 1e-15 {
            break;
        }
    }
    pi
}

/// Stationary law of the chain truncated at queue length `cap`.
#[derive(Debug, Clone)]
pub struct ExactStationary {
    pub states: Vec<OccupancyState>,
    pub probs: Vec<f64>,
    pub kind: PolicyKind,
    pub cap: usize,
}

impl ExactStationary {
    /// Expectations of the tracked functionals, as a zero-SE estimate.
    pub fn estimate(&self, cfg: &SystemConfig) -> StationaryEstimate {
        let names = functional_names(cfg.m());
        let mut means = vec![0.0; names.len()];
        for (q, &p) in self.states.iter().zip(&self.probs) {
            for (m, v) in means.iter_mut().zip(functional_values(q, cfg, self.kind, Some(self.cap))) {
                *m += p * v;
            }
        }
        StationaryEstimate {
            ses: vec![0.0; names.len()],
            names,
            means,
            batches: Vec::new(),
            n_batches: 0,
            warmup: 0.0,
            arrivals: 0,
        }
    }
}

/// Number of ways to place `servers` exchangeable servers on lengths `0..=cap`.
fn compositions(servers: usize, cap: usize) -> usize {
    let (a, b) = (servers + cap, cap.min(servers));
    (0..b).fold(1usize, |acc, i| acc * (a - i) / (i + 1))
}

fn pool_configs(servers: usize, cap: usize) -> Vec<Vec<usize>> {
    // counts of servers at each length 0..=cap
    fn rec(left: usize, slot: usize, cap: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slot == cap {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(left - k, slot + 1, cap, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(servers, 0, cap, &mut Vec::new(), &mut out);
    out
}

fn to_state(cfg: &SystemConfig, per_pool: &[&Vec<usize>], cap: usize) -> OccupancyState {
    let counts = per_pool.iter().map(|c| (1..=cap).map(|i| c[i..].iter().sum()).collect()).collect();
    OccupancyState::from_counts(cfg, counts).expect("valid by construction")
}

/// Exact stationary distribution with all queues truncated at `cap`.
pub fn exact_stationary_small(cfg: &SystemConfig, kind: PolicyKind, cap: usize) -> Result<ExactStationary> {
    if cap == 0 {
        return Err(Error::InvalidConfig("cap must be at least 1".into()));
    }
    let sizes: Vec<usize> = cfg.pool_sizes.iter().map(|&nj| compositions(nj, cap)).collect();
    let total = sizes.iter().try_fold(1usize, |a, &s| a.checked_mul(s)).unwrap_or(usize::MAX);
    if total > MAX_STATES {
        return Err(Error::StateSpaceTooLarge { states: total, limit: MAX_STATES });
    }
    let per_pool: Vec<Vec<Vec<usize>>> = cfg.pool_sizes.iter().map(|&nj| pool_configs(nj, cap)).collect();
    let mut keys: Vec<Vec<usize>> = vec![Vec::new()];
    for pp in &per_pool {
        keys = keys
            .into_iter()
            .flat_map(|k| {
                (0..pp.len()).map(move |i| {
                    let mut k2 = k.clone();
                    k2.push(i);
                    k2
                })
            })
            .collect();
    }
    let index: HashMap<Vec<usize>, usize> = keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
    let pool_index: Vec<HashMap<Vec<usize>, usize>> =
        per_pool.iter().map(|pp| pp.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect()).collect();
    let states: Vec<OccupancyState> = keys
        .iter()
        .map(|k| {
            let pools: Vec<&Vec<usize>> = k.iter().enumerate().map(|(j, &i)| &per_pool[j][i]).collect();
            to_state(cfg, &pools, cap)
        })
        .collect();

    let shift = |key: &Vec<usize>, j: usize, from: usize, to: usize| -> usize {
        let mut c = per_pool[j][key[j]].clone();
        c[from] -= 1;
        c[to] += 1;
        let mut k2 = key.clone();
        k2[j] = pool_index[j][&c];
        index[&k2]
    };
    let nl = cfg.arrival_rate();
    let mut transitions = Vec::new();
    for (s, key) in keys.iter().enumerate() {
        for (d, p) in enumerate_decisions(kind, &states[s]) {
            if d.target_level < cap {
                transitions.push((s, shift(key, d.pool, d.target_level, d.target_level + 1), nl * p));
            }
        }
        for j in 0..cfg.m() {
            let c = &per_pool[j][key[j]];
            for (len, &count) in c.iter().enumerate().take(cap + 1).skip(1) {
                if count > 0 {
                    transitions.push((s, shift(key, j, len, len - 1), cfg.speeds[j] * count as f64));
                }
            }
        }
    }
    let probs = solve_stationary(states.len(), &transitions);
    Ok(ExactStationary { states, probs, kind, cap })
}
