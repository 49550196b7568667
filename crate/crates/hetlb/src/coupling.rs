//! The free-server blocking system and its coupling with the original system.
//!
//! The modified system keeps at most two jobs per queue, blocks arrivals when
//! every queue holds two, and always lets the fastest servers work on the
//! longest queues. It is summarised by `q̃1` (queues with ≥ 1 job) and `q̃2`
//! (queues with 2 jobs); its busy servers complete work at rate
//! `μ̃(q̃1)` where
//!
//! ```text
//! μ̃(c) = Σ_j μ_j · min(max(c − Σ_{k<j} N_k, 0), N_j).
//! ```
//!
//! Both systems share one arrival stream and one potential-departure stream of
//! rate `Σ_j μ_j N_j`, each epoch carrying a uniform `U`. The original system
//! scans its departure classes `(j, i)` from the largest pair down (`i`
//! descending, then `j` ascending) against cumulative thresholds
//! `Σ μ_j (Q_{j,i} − Q_{j,i+1}) / Σ μ_j N_j`, so a queue with at least two
//! jobs loses one iff `U ≤ Σ_j μ_j Q_{j,2} / Σ_j μ_j N_j`. The modified
//! system serves a two-job queue iff `U ≤ μ̃(q̃2)/Σ μ_j N_j`, a one-job queue
//! iff `μ̃(q̃2) < U·Σ μ_j N_j ≤ μ̃(q̃1)`. Under this construction
//! `q̃2 ≤ Q_{+2}` and `q̃1 + q̃2 ≤ Q_1 + Q_{+2}` hold on every path.
//!
//! Coupled runs must start with every queue holding at most two jobs, so that
//! the modified system can copy the original aggregates.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::ctmc::{RunSpec, StationaryEstimate, MIN_BATCHES};
use crate::error::{Error, Result};
use crate::exact::solve_stationary;
use crate::model::{OccupancyState, SystemConfig};
use crate::policy::{select, PolicyKind};
use crate::rng::{stream, Lane};
use crate::stats::BatchAccumulator;

/// Service rate of `count` busy queues when the fastest servers take them.
pub fn tilde_mu(count: usize, cfg: &SystemConfig) -> f64 {
    let mut before = 0usize;
    let mut total = 0.0;
    for (&nj, &mu) in cfg.pool_sizes.iter().zip(&cfg.speeds) {
        let busy = count.saturating_sub(before).min(nj);
        total += mu * busy as f64;
        before += nj;
    }
    total
}

/// State and cumulative counters of the modified system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ModifiedState {
    pub q1: usize,
    pub q2: usize,
    q1_0: usize,
    q2_0: usize,
    /// All arrivals.
    pub a: u64,
    /// Arrivals that joined a one-job queue.
    pub a1: u64,
    /// Arrivals rejected because every queue held two jobs.
    pub ar: u64,
    /// All departures.
    pub d1: u64,
    /// Departures from two-job queues.
    pub d2: u64,
}

/// What a potential departure did to the modified system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModifiedService {
    FromTwo,
    FromOne,
    Lost,
}

impl ModifiedState {
    pub fn new(q1: usize, q2: usize) -> Self {
        Self { q1, q2, q1_0: q1, q2_0: q2, ..Default::default() }
    }

    pub fn arrival(&mut self, n: usize) {
        self.a += 1;
        if self.q1 < n {
            self.q1 += 1;
        } else if self.q2 < n {
            self.q2 += 1;
            self.a1 += 1;
        } else {
            self.ar += 1;
        }
    }

    /// Applies a potential departure carrying `u ∈ (0, 1]`.
    pub fn potential_departure(&mut self, u: f64, cfg: &SystemConfig, total_rate: f64) -> ModifiedService {
        if u * total_rate <= tilde_mu(self.q2, cfg) && self.q2 > 0 {
            self.q2 -= 1;
            self.d1 += 1;
            self.d2 += 1;
            ModifiedService::FromTwo
        } else if u * total_rate <= tilde_mu(self.q1, cfg) && self.q1 > self.q2 {
            self.q1 -= 1;
            self.d1 += 1;
            ModifiedService::FromOne
        } else {
            ModifiedService::Lost
        }
    }

    /// Re-derives `(q̃1, q̃2)` from the counters.
    pub fn from_counters(&self) -> (i64, i64) {
        let q1 = self.q1_0 as i64 + self.a as i64 - self.ar as i64 - self.a1 as i64 - self.d1 as i64 + self.d2 as i64;
        let q2 = self.q2_0 as i64 + self.a1 as i64 - self.d2 as i64;
        (q1, q2)
    }

    pub fn balanced(&self) -> bool {
        self.from_counters() == (self.q1 as i64, self.q2 as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoupledEventKind {
    Arrival,
    /// Potential departure: the original system's served class `(pool, length)`
    /// (or none) and the modified system's outcome.
    Departure {
        original: Option<(usize, usize)>,
        modified: ModifiedService,
    },
}

impl CoupledEventKind {
    pub fn label(&self) -> String {
        match self {
            CoupledEventKind::Arrival => "arrival".into(),
            CoupledEventKind::Departure { original, modified } => {
                let o = original.map_or("lost".to_string(), |(j, i)| format!("{}.{}", j + 1, i));
                let m = match modified {
                    ModifiedService::FromTwo => "two",
                    ModifiedService::FromOne => "one",
                    ModifiedService::Lost => "lost",
                };
                format!("departure:o={o}:m={m}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledEvent {
    pub t: f64,
    /// Shared uniform of a potential departure; `None` for arrivals.
    pub u: Option<f64>,
    pub kind: CoupledEventKind,
    pub q1: usize,
    pub qp2: usize,
    pub q1_tilde: usize,
    pub q2_tilde: usize,
    pub violation: bool,
}

/// Both systems driven by shared randomness.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    pub cfg: SystemConfig,
    pub kind: PolicyKind,
    pub original: OccupancyState,
    pub modified: ModifiedState,
    total_rate: f64,
}

impl CoupledSystem {
    pub fn new(cfg: &SystemConfig, kind: PolicyKind, q0: OccupancyState) -> Result<Self> {
        if q0.max_len() > 2 {
            return Err(Error::InvalidConfig("coupled runs need every initial queue to hold at most two jobs".into()));
        }
        let modified = ModifiedState::new(q0.busy(), q0.waiting());
        Ok(Self { cfg: cfg.clone(), kind, original: q0, modified, total_rate: cfg.capacity() })
    }

    /// Rate of the shared potential-departure stream.
    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    /// Original-system class served by uniform `u`, scanning pairs from the largest.
    pub fn original_service(&self, u: f64) -> Option<(usize, usize)> {
        let q = &self.original;
        let mut cum = 0.0;
        for i in (1..=q.max_len()).rev() {
            for j in 0..q.m() {
                cum += self.cfg.speeds[j] * q.exactly(j, i) as f64;
                if u * self.total_rate <= cum && q.exactly(j, i) > 0 {
                    return Some((j, i));
                }
            }
        }
        None
    }

    fn record(&self, t: f64, u: Option<f64>, kind: CoupledEventKind) -> CoupledEvent {
        let (q1, qp2) = (self.original.busy(), self.original.waiting());
        let (a, b) = (self.modified.q1, self.modified.q2);
        CoupledEvent { t, u, kind, q1, qp2, q1_tilde: a, q2_tilde: b, violation: b > qp2 || a + b > q1 + qp2 }
    }

    pub fn arrival<R: Rng + ?Sized>(&mut self, t: f64, tie_break: &mut R) -> CoupledEvent {
        let d = select(self.kind, &self.original, tie_break);
        self.original.apply_arrival(d.pool, d.target_level);
        self.original.clock = t;
        self.modified.arrival(self.cfg.n);
        self.record(t, None, CoupledEventKind::Arrival)
    }

    pub fn potential_departure(&mut self, t: f64, u: f64) -> CoupledEvent {
        let original = self.original_service(u);
        if let Some((j, i)) = original {
            self.original.apply_departure(j, i);
        }
        self.original.clock = t;
        let modified = self.modified.potential_departure(u, &self.cfg, self.total_rate);
        self.record(t, Some(u), CoupledEventKind::Departure { original, modified })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledTrace {
    pub events: Vec<CoupledEvent>,
    pub seed: u64,
    pub kind: PolicyKind,
    /// Initial aggregates `(Q_1, Q_{+2})`, shared by both systems.
    pub initial: (usize, usize),
}

impl CoupledTrace {
    pub fn violations(&self) -> usize {
        self.events.iter().filter(|e| e.violation).count()
    }
}

/// Shared randomness of a coupled run.
struct CoupledStreams {
    arrivals: ChaCha8Rng,
    departures: ChaCha8Rng,
    tie_break: ChaCha8Rng,
}

impl CoupledStreams {
    fn new(seed: u64, replication: u64) -> Self {
        Self {
            arrivals: stream(seed, replication, Lane::Arrivals),
            departures: stream(seed, replication, Lane::Departures),
            tie_break: stream(seed, replication, Lane::TieBreak),
        }
    }
}

/// Runs both systems from `q0` to `horizon`, checking the pathwise
/// inequalities after every event.
pub fn coupled_run_from(
    cfg: &SystemConfig,
    kind: PolicyKind,
    q0: OccupancyState,
    horizon: f64,
    seed: u64,
) -> Result<CoupledTrace> {
    let mut sys = CoupledSystem::new(cfg, kind, q0)?;
    let initial = (sys.original.busy(), sys.original.waiting());
    let mut rs = CoupledStreams::new(seed, 0);
    let arr = Exp::new(cfg.arrival_rate()).unwrap();
    let dep = Exp::new(sys.total_rate()).unwrap();
    let mut next_a = arr.sample(&mut rs.arrivals);
    let mut next_d = dep.sample(&mut rs.departures);
    let mut events = Vec::new();
    loop {
        let t = next_a.min(next_d);
        if t > horizon {
            break;
        }
        let ev = if next_a <= next_d {
            next_a += arr.sample(&mut rs.arrivals);
            sys.arrival(t, &mut rs.tie_break)
        } else {
            let u = 1.0 - rs.departures.random::<f64>();
            next_d += dep.sample(&mut rs.departures);
            sys.potential_departure(t, u)
        };
        if ev.violation {
            return Err(Error::CouplingViolation {
                t,
                detail: format!(
                    "q2~={} Q+2={} q1~+q2~={} Q1+Q+2={}",
                    ev.q2_tilde,
                    ev.qp2,
                    ev.q1_tilde + ev.q2_tilde,
                    ev.q1 + ev.qp2
                ),
            });
        }
        debug_assert!(sys.modified.balanced());
        events.push(ev);
    }
    Ok(CoupledTrace { events, seed, kind, initial })
}

/// Coupled run from the empty system.
pub fn coupled_run(cfg: &SystemConfig, kind: PolicyKind, horizon: f64, seed: u64) -> Result<CoupledTrace> {
    coupled_run_from(cfg, kind, OccupancyState::empty(cfg), horizon, seed)
}

/// Names of the modified-system functionals.
pub const MODIFIED_NAMES: [&str; 4] = ["y1_tilde", "y2_tilde", "y_plus1", "y_plus2"];

/// Stationary estimates for the modified system plus its blocking fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedEstimate {
    pub estimate: StationaryEstimate,
    /// `Ã_R / Ã` over the measurement window.
    pub blocking_fraction: f64,
}

fn modified_values(s: &ModifiedState, n: usize) -> [f64; 4] {
    let r = (n as f64).sqrt();
    [(s.q1 as f64 - n as f64) / r, s.q2 as f64 / r, (s.q1 as f64 + s.q2 as f64 - n as f64) / r, s.q2 as f64 / r]
}

/// Time averages of `Ỹ_1 = (q̃1 − n)/√n`, `Ỹ_2 = q̃2/√n` and the aggregates
/// over `[warmup, warmup + duration]`, from an empty start.
pub fn simulate_modified_stationary(cfg: &SystemConfig, spec: &RunSpec) -> Result<ModifiedEstimate> {
    if spec.n_batches < MIN_BATCHES {
        return Err(Error::InsufficientBatches { min: MIN_BATCHES, got: spec.n_batches });
    }
    let n = cfg.n;
    let end = spec.warmup + spec.duration;
    let mut acc = BatchAccumulator::new(spec.warmup, end, spec.n_batches, MODIFIED_NAMES.len());
    let mut s = ModifiedState::new(0, 0);
    let mut rs = CoupledStreams::new(spec.seed, spec.replication);
    let total = cfg.capacity();
    let arr = Exp::new(cfg.arrival_rate()).unwrap();
    let dep = Exp::new(total).unwrap();
    let mut next_a = arr.sample(&mut rs.arrivals);
    let mut next_d = dep.sample(&mut rs.departures);
    let mut t = 0.0;
    let mut at_warmup = None;
    loop {
        let t1 = next_a.min(next_d).min(end);
        if t1 > spec.warmup && at_warmup.is_none() {
            at_warmup = Some(s);
        }
        acc.add(t, t1, &modified_values(&s, n));
        if t1 >= end {
            break;
        }
        t = t1;
        acc.mark_event(t);
        if next_a <= next_d {
            s.arrival(n);
            next_a += arr.sample(&mut rs.arrivals);
        } else {
            let u = 1.0 - rs.departures.random::<f64>();
            s.potential_departure(u, cfg, total);
            next_d += dep.sample(&mut rs.departures);
        }
    }
    if acc.events().contains(&0) {
        return Err(Error::InsufficientBatches {
            min: spec.n_batches,
            got: acc.events().iter().filter(|&&e| e > 0).count(),
        });
    }
    let w = at_warmup.unwrap_or(s);
    let arrivals = s.a - w.a;
    let blocking_fraction = if arrivals > 0 { (s.ar - w.ar) as f64 / arrivals as f64 } else { 0.0 };
    let names = MODIFIED_NAMES.iter().map(|s| s.to_string()).collect();
    Ok(ModifiedEstimate {
        estimate: StationaryEstimate::from_batches(names, acc.batch_averages(), spec.warmup, s.a),
        blocking_fraction,
    })
}

/// Exact stationary law of `(q̃1, q̃2)`, as `((q1, q2), probability)` pairs.
pub fn exact_modified_stationary(cfg: &SystemConfig) -> Vec<((usize, usize), f64)> {
    let n = cfg.n;
    let states: Vec<(usize, usize)> = (0..=n).flat_map(|a| (0..=a).map(move |b| (a, b))).collect();
    let index = |a: usize, b: usize| a * (a + 1) / 2 + b;
    let nl = cfg.arrival_rate();
    let mut tr = Vec::new();
    for (s, &(a, b)) in states.iter().enumerate() {
        if a < n {
            tr.push((s, index(a + 1, b), nl));
        } else if b < n {
            tr.push((s, index(a, b + 1), nl));
        }
        if b > 0 {
            tr.push((s, index(a, b - 1), tilde_mu(b, cfg)));
        }
        let one = tilde_mu(a, cfg) - tilde_mu(b, cfg);
        if one > 0.0 {
            tr.push((s, index(a - 1, b), one));
        }
    }
    let p = solve_stationary(states.len(), &tr);
    states.into_iter().zip(p).collect()
}
