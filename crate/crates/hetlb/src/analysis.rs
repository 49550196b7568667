//! Experiment orchestration: policy comparisons under common random numbers
//! and state-space-collapse sweeps over `n`.
//!
//! Replications fan out over the current rayon pool. Workers share nothing
//! and results are gathered in replication order, so reports are
//! bit-identical across runs and thread counts.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::coupling::simulate_modified_stationary;
use crate::ctmc::{simulate_stationary, sup_idle_fast_path, FunctionalEstimate, RunSpec};
use crate::diffusion::{sde_stationary_run, DiffusionParams};
use crate::error::{Error, Result};
use crate::io::{ComparisonRow, CsvRow, LyapunovRow};
use crate::lyapunov::{classify_region, f_star, grad_f_star, hess_diag_f_star, pde_residual, LyapunovContext};
use crate::model::{OccupancyState, SystemConfig};
use crate::policy::PolicyKind;
use crate::stats::mean_se;

/// Everything a CLI invocation needs besides the system parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub verb: String,
    pub config: Option<PathBuf>,
    pub policy: PolicyKind,
    pub n_sweep: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    /// Checks `replications ≥ 1` and that every swept `n` yields a valid
    /// system with the fractions, speeds and `β` of `base`.
    pub fn validate(&self, base: &SystemConfig) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        for &n in &self.n_sweep {
            sweep_config(base, n)?;
        }
        Ok(())
    }
}

/// `base` re-instantiated at `n` servers.
pub fn sweep_config(base: &SystemConfig, n: usize) -> Result<SystemConfig> {
    let gammas = base
        .gammas
        .clone()
        .ok_or_else(|| Error::InvalidConfig("an n-sweep needs pool fractions (gammas) in the configuration".into()))?;
    SystemConfig::from_fractions(n, &gammas, &base.speeds, base.beta)
}

/// Label used for the modified-system row.
pub const MODIFIED_LABEL: &str = "modified";
/// Label used for the diffusion reference rows.
pub const SDE_LABEL: &str = "sde";

/// Stationary `Y_{+1}`, `Y_{+2}` estimates of one system.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRow {
    pub label: String,
    pub y_plus1: FunctionalEstimate,
    pub y_plus2: FunctionalEstimate,
    /// Arrivals over all replications; equal across rows under common random numbers.
    pub arrivals: u64,
}

/// `b − a` for one functional with the standard error of paired batch differences.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDiff {
    pub a: String,
    pub b: String,
    pub functional: String,
    pub diff: f64,
    pub se: f64,
}

/// Long-run moments of the reflected diffusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeReference {
    pub y_m1: FunctionalEstimate,
    pub y12: FunctionalEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<PolicyRow>,
    pub diffs: Vec<PairDiff>,
    pub sde: Option<SdeReference>,
}

/// Diffusion run settings for the reference rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeSettings {
    pub h: f64,
    pub burn: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSpec {
    pub cfg: SystemConfig,
    pub policies: Vec<PolicyKind>,
    /// Per-replication run; `replication` is overridden by the replication index.
    pub run: RunSpec,
    pub replications: usize,
    pub include_modified: bool,
    pub sde: Option<SdeSettings>,
}

const FUNCTIONALS: [&str; 2] = ["y_plus1", "y_plus2"];

/// Per-batch `(Y_{+1}, Y_{+2})` pooled over replications, plus arrivals.
struct BatchSeries {
    label: String,
    batches: Vec<[f64; 2]>,
    arrivals: u64,
}

fn run_one(spec: &ComparisonSpec, which: Option<PolicyKind>, rep: u64) -> Result<(Vec<[f64; 2]>, u64)> {
    let run = spec.run.clone().replication(rep);
    let est = match which {
        Some(kind) => simulate_stationary(&spec.cfg, kind, &run)?,
        None => simulate_modified_stationary(&spec.cfg, &run)?.estimate,
    };
    let (i1, i2) = (est.index(FUNCTIONALS[0]).unwrap(), est.index(FUNCTIONALS[1]).unwrap());
    Ok((est.batches.iter().map(|b| [b[i1], b[i2]]).collect(), est.arrivals))
}

/// Runs every policy (and optionally the modified system) with the same seed
/// and replication indices, so all systems see identical arrival epochs.
pub fn compare_policies(spec: &ComparisonSpec) -> Result<ComparisonReport> {
    if spec.replications == 0 {
        return Err(Error::InvalidConfig("replications must be at least 1".into()));
    }
    if !(spec.cfg.lambda < 1.0) {
        return Err(Error::LambdaOutOfRange(spec.cfg.lambda));
    }
    let mut systems: Vec<(String, Option<PolicyKind>)> =
        spec.policies.iter().map(|k| (k.to_string(), Some(*k))).collect();
    if spec.include_modified {
        systems.push((MODIFIED_LABEL.to_string(), None));
    }
    let jobs: Vec<(usize, u64)> =
        (0..systems.len()).flat_map(|s| (0..spec.replications as u64).map(move |r| (s, r))).collect();
    let results: Vec<Result<(Vec<[f64; 2]>, u64)>> =
        jobs.par_iter().map(|&(s, r)| run_one(spec, systems[s].1, r)).collect();
    let mut series: Vec<BatchSeries> =
        systems.iter().map(|(l, _)| BatchSeries { label: l.clone(), batches: Vec::new(), arrivals: 0 }).collect();
    for (&(s, _), res) in jobs.iter().zip(results) {
        let (b, a) = res?;
        series[s].batches.extend(b);
        series[s].arrivals += a;
    }
    let column = |s: &BatchSeries, f: usize| s.batches.iter().map(|b| b[f]).collect::<Vec<_>>();
    let est = |v: &[f64]| {
        let (mean, se) = mean_se(v);
        FunctionalEstimate { mean, se }
    };
    let rows: Vec<PolicyRow> = series
        .iter()
        .map(|s| PolicyRow {
            label: s.label.clone(),
            y_plus1: est(&column(s, 0)),
            y_plus2: est(&column(s, 1)),
            arrivals: s.arrivals,
        })
        .collect();
    let mut diffs = Vec::new();
    for i in 0..series.len() {
        for k in i + 1..series.len() {
            for (f, name) in FUNCTIONALS.iter().enumerate() {
                let d: Vec<f64> = column(&series[k], f).iter().zip(column(&series[i], f)).map(|(b, a)| b - a).collect();
                let (_, se) = mean_se(&d);
                let mean_of = |r: &PolicyRow| if f == 0 { r.y_plus1.mean } else { r.y_plus2.mean };
                diffs.push(PairDiff {
                    a: series[i].label.clone(),
                    b: series[k].label.clone(),
                    functional: name.to_string(),
                    diff: mean_of(&rows[k]) - mean_of(&rows[i]),
                    se,
                });
            }
        }
    }
    let sde = match &spec.sde {
        Some(s) => {
            let m = spec.cfg.m();
            let p = DiffusionParams::new(
                spec.cfg.beta,
                spec.cfg.speeds[0],
                spec.cfg.speeds[m - 1],
                s.h,
                s.burn + s.duration,
            )?;
            let mom = sde_stationary_run(&p, s.burn, s.duration, 20, 1.0, spec.run.seed)?;
            Some(SdeReference {
                y_m1: FunctionalEstimate { mean: mom.mean_y_m1, se: mom.se_y_m1 },
                y12: FunctionalEstimate { mean: mom.mean_y12, se: mom.se_y12 },
            })
        }
        None => None,
    };
    Ok(ComparisonReport { rows, diffs, sde })
}

impl ComparisonReport {
    pub fn row(&self, label: &str) -> Option<&PolicyRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Difference `b − a` for `functional`, in either stored orientation.
    pub fn diff(&self, a: &str, b: &str, functional: &str) -> Option<FunctionalEstimate> {
        self.diffs.iter().find_map(|d| {
            if d.functional != functional {
                None
            } else if d.a == a && d.b == b {
                Some(FunctionalEstimate { mean: d.diff, se: d.se })
            } else if d.a == b && d.b == a {
                Some(FunctionalEstimate { mean: -d.diff, se: d.se })
            } else {
                None
            }
        })
    }

    /// Flat rows: estimates, then `diff:b-a` rows, then diffusion moments.
    pub fn to_rows(&self) -> Vec<ComparisonRow> {
        let mut out = Vec::new();
        for r in &self.rows {
            for (name, e) in [("y_plus1", r.y_plus1), ("y_plus2", r.y_plus2)] {
                out.push(ComparisonRow { policy: r.label.clone(), functional: name.into(), mean: e.mean, se: e.se });
            }
            out.push(ComparisonRow {
                policy: r.label.clone(),
                functional: "arrivals".into(),
                mean: r.arrivals as f64,
                se: 0.0,
            });
        }
        for d in &self.diffs {
            out.push(ComparisonRow {
                policy: format!("diff:{}|{}", d.b, d.a),
                functional: d.functional.clone(),
                mean: d.diff,
                se: d.se,
            });
        }
        if let Some(s) = &self.sde {
            for (name, e) in [("y_m1", s.y_m1), ("y12", s.y12)] {
                out.push(ComparisonRow { policy: SDE_LABEL.into(), functional: name.into(), mean: e.mean, se: e.se });
            }
        }
        out
    }

    /// Inverse of [`ComparisonReport::to_rows`].
    pub fn from_rows(rows: &[ComparisonRow]) -> Result<Self> {
        let bad = |r: &ComparisonRow| Error::Parse(format!("unexpected comparison row {r:?}"));
        let mut report = ComparisonReport { rows: Vec::new(), diffs: Vec::new(), sde: None };
        let zero = FunctionalEstimate { mean: 0.0, se: 0.0 };
        let mut sde = SdeReference { y_m1: zero, y12: zero };
        let mut have_sde = false;
        for r in rows {
            let e = FunctionalEstimate { mean: r.mean, se: r.se };
            if let Some(pair) = r.policy.strip_prefix("diff:") {
                let (b, a) = pair.split_once('|').ok_or_else(|| bad(r))?;
                report.diffs.push(PairDiff {
                    a: a.into(),
                    b: b.into(),
                    functional: r.functional.clone(),
                    diff: r.mean,
                    se: r.se,
                });
            } else if r.policy == SDE_LABEL {
                have_sde = true;
                match r.functional.as_str() {
                    "y_m1" => sde.y_m1 = e,
                    "y12" => sde.y12 = e,
                    _ => return Err(bad(r)),
                }
            } else {
                if report.rows.last().is_none_or(|p| p.label != r.policy) {
                    report.rows.push(PolicyRow { label: r.policy.clone(), y_plus1: zero, y_plus2: zero, arrivals: 0 });
                }
                let row = report.rows.last_mut().unwrap();
                match r.functional.as_str() {
                    "y_plus1" => row.y_plus1 = e,
                    "y_plus2" => row.y_plus2 = e,
                    "arrivals" => row.arrivals = r.mean as u64,
                    _ => return Err(bad(r)),
                }
            }
        }
        report.sde = have_sde.then_some(sde);
        Ok(report)
    }
}

/// Transient-run settings for the collapse sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SscSpec {
    pub base: SystemConfig,
    pub ns: Vec<usize>,
    pub kind: PolicyKind,
    /// The supremum is taken over the whole path on `[window.0, window.1]`.
    pub window: (f64, f64),
    pub replications: usize,
    pub seed: u64,
}

/// Mean over replications of `sup_t |Y_{[1,M-1],1}(t)|` at one `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SscRow {
    pub n: usize,
    pub mean_sup: f64,
    pub se: f64,
    pub replications: usize,
}

impl CsvRow for SscRow {
    fn to_record(&self) -> Vec<String> {
        vec![self.n.to_string(), self.mean_sup.to_string(), self.se.to_string(), self.replications.to_string()]
    }

    fn from_record(rec: &[&str]) -> Result<Self> {
        let p = |i: usize| rec.get(i).copied().ok_or_else(|| Error::Parse("short ssc row".into()));
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad field {s:?}")));
        let int = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad field {s:?}")));
        Ok(Self { n: int(p(0)?)?, mean_sup: num(p(1)?)?, se: num(p(2)?)?, replications: int(p(3)?)? })
    }
}

pub fn ssc_header() -> Vec<String> {
    ["n", "mean_sup", "se", "replications"].iter().map(|s| s.to_string()).collect()
}

/// Seed of replication `r` in a sweep.
pub fn replication_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add(r as u64)
}

/// Empty-start runs at each `n`, `replications` each.
pub fn ssc_sweep(spec: &SscSpec) -> Result<Vec<SscRow>> {
    if spec.replications < 2 {
        return Err(Error::InvalidConfig("a sweep needs at least 2 replications".into()));
    }
    spec.ns
        .iter()
        .map(|&n| {
            let cfg = sweep_config(&spec.base, n)?;
            let sups: Vec<f64> = (0..spec.replications)
                .into_par_iter()
                .map(|r| {
                    sup_idle_fast_path(
                        &cfg,
                        spec.kind,
                        &OccupancyState::empty(&cfg),
                        spec.window,
                        replication_seed(spec.seed, r),
                    )
                })
                .collect::<Result<_>>()?;
            let (mean_sup, se) = mean_se(&sups);
            Ok(SscRow { n, mean_sup, se, replications: spec.replications })
        })
        .collect()
}

/// Lyapunov quantities on the `grid × grid` lattice of `[−5, 0] × [0, 5]`.
pub fn lyapunov_grid(ctx: &LyapunovContext, grid: usize) -> Vec<LyapunovRow> {
    let step = 5.0 / (grid.max(2) - 1) as f64;
    let mut rows = Vec::with_capacity(grid * grid);
    for a in 0..grid {
        for b in 0..grid {
            let x = (-5.0 + a as f64 * step, b as f64 * step);
            let region = classify_region(x, ctx);
            let (f1, f2) = grad_f_star(x, ctx);
            let (f11, f22) = hess_diag_f_star(x, ctx);
            rows.push(LyapunovRow {
                x1: x.0,
                x2: x.1,
                region: region.label().to_string(),
                tau: region.tau(),
                f: f_star(x, ctx),
                f1,
                f2,
                f11,
                f22,
                residual: pde_residual(x, ctx),
            });
        }
    }
    rows
}
