//! Routing policies acting on occupancy counts.
//!
//! Servers of the same pool and queue length are exchangeable, so a decision
//! is the pair (pool, current length of the chosen server).

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;

use crate::error::Error;
use crate::model::OccupancyState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    /// Shortest queue, ties broken toward the fastest pool.
    SaJsq,
    /// Shortest queue, ties broken uniformly over servers.
    Jsq,
    /// Shortest of `d` servers sampled without replacement.
    Pod(usize),
    /// Uniform idle server, or uniform over all servers when none is idle.
    Jiq,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::SaJsq => write!(f, "sa-jsq"),
            PolicyKind::Jsq => write!(f, "jsq"),
            PolicyKind::Pod(d) => write!(f, "pod:{d}"),
            PolicyKind::Jiq => write!(f, "jiq"),
        }
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sa-jsq" | "sajsq" => Ok(PolicyKind::SaJsq),
            "jsq" => Ok(PolicyKind::Jsq),
            "jiq" => Ok(PolicyKind::Jiq),
            other => {
                let d = other
                    .strip_prefix("pod:")
                    .and_then(|d| d.parse::<usize>().ok())
                    .ok_or_else(|| Error::Parse(format!("unknown policy '{s}'")))?;
                if d < 2 {
                    return Err(Error::Parse(format!("pod needs d >= 2, got {d}")));
                }
                Ok(PolicyKind::Pod(d))
            }
        }
    }
}

/// Join a pool-`pool` server that currently holds `target_level` jobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RoutingDecision {
    pub pool: usize,
    pub target_level: usize,
}

fn min_len(q: &OccupancyState) -> usize {
    (0..).find(|&l| (0..q.m()).any(|j| q.exactly(j, l) > 0)).expect("some server has a finite length")
}

/// Length of the `k`-th pool-`j` server when servers are listed longest first.
fn server_len(q: &OccupancyState, j: usize, k: usize) -> usize {
    (1..).take_while(|&i| q.q(j, i) > k).count()
}

/// Maps a global server index to (pool, length).
fn locate(q: &OccupancyState, mut idx: usize) -> (usize, usize) {
    for (j, &nj) in q.pool_sizes().iter().enumerate() {
        if idx < nj {
            return (j, server_len(q, j, idx));
        }
        idx -= nj;
    }
    unreachable!("server index out of range")
}

/// Picks a pool with probability proportional to `weights`.
fn weighted_pick<R: Rng + ?Sized>(weights: &[usize], rng: &mut R) -> usize {
    let total: usize = weights.iter().sum();
    let mut u = rng.random_range(0..total);
    for (j, &w) in weights.iter().enumerate() {
        if u < w {
            return j;
        }
        u -= w;
    }
    unreachable!()
}

/// Samples a routing decision.
pub fn select<R: Rng + ?Sized>(kind: PolicyKind, q: &OccupancyState, rng: &mut R) -> RoutingDecision {
    let m = q.m();
    match kind {
        PolicyKind::SaJsq => {
            let l = min_len(q);
            let pool = (0..m).find(|&j| q.exactly(j, l) > 0).unwrap();
            RoutingDecision { pool, target_level: l }
        }
        PolicyKind::Jsq => {
            let l = min_len(q);
            let w: Vec<usize> = (0..m).map(|j| q.exactly(j, l)).collect();
            let pool = if w.iter().filter(|&&x| x > 0).count() == 1 {
                w.iter().position(|&x| x > 0).unwrap()
            } else {
                weighted_pick(&w, rng)
            };
            RoutingDecision { pool, target_level: l }
        }
        PolicyKind::Pod(d) => {
            let n: usize = q.pool_sizes().iter().sum();
            let picks: Vec<(usize, usize)> =
                index::sample(rng, n, d.min(n)).into_iter().map(|i| locate(q, i)).collect();
            let best = picks.iter().map(|p| p.1).min().unwrap();
            let tied: Vec<&(usize, usize)> = picks.iter().filter(|p| p.1 == best).collect();
            let (pool, target_level) = *tied[if tied.len() > 1 { rng.random_range(0..tied.len()) } else { 0 }];
            RoutingDecision { pool, target_level }
        }
        PolicyKind::Jiq => {
            let idle: Vec<usize> = (0..m).map(|j| q.exactly(j, 0)).collect();
            if idle.iter().any(|&x| x > 0) {
                RoutingDecision { pool: weighted_pick(&idle, rng), target_level: 0 }
            } else {
                let n: usize = q.pool_sizes().iter().sum();
                let (pool, target_level) = locate(q, rng.random_range(0..n));
                RoutingDecision { pool, target_level }
            }
        }
    }
}

/// `C(a, d) / C(n, d)`.
fn binom_ratio(a: usize, n: usize, d: usize) -> f64 {
    if a < d {
        return 0.0;
    }
    (0..d).map(|i| (a - i) as f64 / (n - i) as f64).product()
}

/// Exact decision distribution, sorted by decision.
pub fn enumerate_decisions(kind: PolicyKind, q: &OccupancyState) -> Vec<(RoutingDecision, f64)> {
    let m = q.m();
    let n: usize = q.pool_sizes().iter().sum();
    let mut out: Vec<(RoutingDecision, f64)> = Vec::new();
    match kind {
        PolicyKind::SaJsq => {
            let l = min_len(q);
            let pool = (0..m).find(|&j| q.exactly(j, l) > 0).unwrap();
            out.push((RoutingDecision { pool, target_level: l }, 1.0));
        }
        PolicyKind::Jsq => {
            let l = min_len(q);
            let tot: usize = (0..m).map(|j| q.exactly(j, l)).sum();
            for j in 0..m {
                let c = q.exactly(j, l);
                if c > 0 {
                    out.push((RoutingDecision { pool: j, target_level: l }, c as f64 / tot as f64));
                }
            }
        }
        PolicyKind::Pod(d) => {
            let d = d.min(n);
            let top = q.max_len();
            for l in 0..=top {
                let at_least = |len: usize| -> usize { (0..m).map(|j| q.q(j, len)).sum() };
                let p_min = binom_ratio(at_least(l), n, d) - binom_ratio(at_least(l + 1), n, d);
                if p_min <= 0.0 {
                    continue;
                }
                let c_l = at_least(l) - at_least(l + 1);
                for j in 0..m {
                    let c = q.exactly(j, l);
                    if c > 0 {
                        out.push((RoutingDecision { pool: j, target_level: l }, p_min * c as f64 / c_l as f64));
                    }
                }
            }
        }
        PolicyKind::Jiq => {
            let idle: usize = (0..m).map(|j| q.exactly(j, 0)).sum();
            if idle > 0 {
                for j in 0..m {
                    let c = q.exactly(j, 0);
                    if c > 0 {
                        out.push((RoutingDecision { pool: j, target_level: 0 }, c as f64 / idle as f64));
                    }
                }
            } else {
                for j in 0..m {
                    for l in 1..=q.max_len() {
                        let c = q.exactly(j, l);
                        if c > 0 {
                            out.push((RoutingDecision { pool: j, target_level: l }, c as f64 / n as f64));
                        }
                    }
                }
            }
        }
    }
    out.sort_by_key(|a| a.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_config, RawConfig, SystemConfig};
    use crate::rng::{stream, Lane};

    fn cfg(sizes: Vec<usize>, speeds: Vec<f64>) -> SystemConfig {
        validate_config(RawConfig {
            pool_sizes: Some(sizes),
            speeds,
            beta: 0.1,
            lambda: Some(0.5),
            ..Default::default()
        })
        .unwrap()
    }

    fn state(c: &SystemConfig, lengths: &[Vec<usize>]) -> OccupancyState {
        OccupancyState::from_lengths(c, lengths).unwrap()
    }

    #[test]
    fn sa_jsq_examples() {
        let c = cfg(vec![2, 2], vec![2.0, 1.0]);
        let mut r = stream(1, 0, Lane::TieBreak);
        let d = select(PolicyKind::SaJsq, &state(&c, &[vec![1, 1], vec![0, 2]]), &mut r);
        assert_eq!(d, RoutingDecision { pool: 1, target_level: 0 });
        let d = select(PolicyKind::SaJsq, &state(&c, &[vec![0, 0], vec![0, 0]]), &mut r);
        assert_eq!(d, RoutingDecision { pool: 0, target_level: 0 });
        let d = select(PolicyKind::SaJsq, &state(&c, &[vec![1, 2], vec![1, 1]]), &mut r);
        assert_eq!(d, RoutingDecision { pool: 0, target_level: 1 });
    }

    #[test]
    fn pod_two_servers_picks_idle() {
        let c = cfg(vec![1, 1], vec![2.0, 1.0]);
        let q = state(&c, &[vec![0], vec![1]]);
        let dist = enumerate_decisions(PolicyKind::Pod(2), &q);
        assert_eq!(dist, vec![(RoutingDecision { pool: 0, target_level: 0 }, 1.0)]);
    }

    #[test]
    fn jsq_splits_ties_evenly() {
        let c = cfg(vec![1, 1], vec![2.0, 1.0]);
        let q = state(&c, &[vec![0], vec![0]]);
        let dist = enumerate_decisions(PolicyKind::Jsq, &q);
        assert_eq!(dist.len(), 2);
        assert!(dist.iter().all(|(_, p)| *p == 0.5));
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("sa-jsq".parse::<PolicyKind>().unwrap(), PolicyKind::SaJsq);
        assert_eq!("pod:3".parse::<PolicyKind>().unwrap(), PolicyKind::Pod(3));
        assert!("pod:1".parse::<PolicyKind>().is_err());
        assert!("random".parse::<PolicyKind>().is_err());
        for k in [PolicyKind::SaJsq, PolicyKind::Jsq, PolicyKind::Pod(2), PolicyKind::Jiq] {
            assert_eq!(k.to_string().parse::<PolicyKind>().unwrap(), k);
        }
    }

    #[test]
    fn jiq_without_idle_is_uniform_over_servers() {
        let c = cfg(vec![1, 3], vec![2.0, 1.0]);
        let q = state(&c, &[vec![2], vec![1, 1, 3]]);
        let dist = enumerate_decisions(PolicyKind::Jiq, &q);
        let p = |pool, target_level| {
            dist.iter().find(|(d, _)| *d == RoutingDecision { pool, target_level }).map(|x| x.1).unwrap_or(0.0)
        };
        assert_eq!(p(0, 2), 0.25);
        assert_eq!(p(1, 1), 0.5);
        assert_eq!(p(1, 3), 0.25);
    }
}
