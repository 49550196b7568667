//! CSV emission and parsing.
//!
//! Every layout has a fixed column order:
//!
//! | layout     | columns                                                    |
//! |------------|------------------------------------------------------------|
//! | trajectory | `t, y{j}_{i}… (j-major), idle_fast`                        |
//! | stationary | `functional, mean, se, batches`                            |
//! | couple     | `t, U_l, event_kind, Q1, Qp2, q1t, q2t`                    |
//! | sde        | `t, yM1, y12, u1, tail…`                                   |
//! | lyapunov   | `x1, x2, region, tau, f, f1, f2, f11, f22, residual`       |
//! | comparison | `policy, functional, mean, se`                             |
//!
//! Floats are written in Rust's shortest round-trip form, so parsing an
//! emitted file reproduces the rows exactly. Missing values are empty fields.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::coupling::CoupledTrace;
use crate::ctmc::{StationaryEstimate, Trajectory};
use crate::diffusion::DiffusionPath;
use crate::error::{Error, Result};

/// A row type with a CSV representation.
pub trait CsvRow: Sized {
    fn to_record(&self) -> Vec<String>;
    fn from_record(rec: &[&str]) -> Result<Self>;
}

fn num<T: FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse(format!("bad field {s:?}")))
}

fn opt<T: FromStr>(s: &str) -> Result<Option<T>> {
    if s.is_empty() {
        Ok(None)
    } else {
        num(s).map(Some)
    }
}

fn opt_str<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or(String::new(), T::to_string)
}

fn field<'a>(rec: &[&'a str], i: usize) -> Result<&'a str> {
    rec.get(i).copied().ok_or_else(|| Error::Parse(format!("missing column {i}")))
}

pub fn write_rows<W: Write, R: CsvRow>(w: W, header: &[String], rows: &[R]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header)?;
    for r in rows {
        wr.write_record(r.to_record())?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads a header and rows.
pub fn read_rows<Rd: Read, R: CsvRow>(r: Rd) -> Result<(Vec<String>, Vec<R>)> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let fields: Vec<&str> = rec.iter().collect();
        rows.push(R::from_record(&fields)?);
    }
    Ok((header, rows))
}

pub fn write_file<R: CsvRow>(path: &Path, header: &[String], rows: &[R]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    write_rows(File::create(path)?, header, rows)
}

pub fn read_file<R: CsvRow>(path: &Path) -> Result<(Vec<String>, Vec<R>)> {
    read_rows(File::open(path)?)
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// One sampled time of a transient run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    /// `Y_{j,i}` flattened pool-major, `depth` levels per pool.
    pub y: Vec<f64>,
    pub idle_fast: f64,
}

impl CsvRow for TrajectoryRow {
    fn to_record(&self) -> Vec<String> {
        let mut v = vec![self.t.to_string()];
        v.extend(self.y.iter().map(f64::to_string));
        v.push(self.idle_fast.to_string());
        v
    }

    fn from_record(rec: &[&str]) -> Result<Self> {
        if rec.len() < 2 {
            return Err(Error::Parse("trajectory row too short".into()));
        }
        let y = rec[1..rec.len() - 1].iter().map(|s| num(s)).collect::<Result<_>>()?;
        Ok(Self { t: num(rec[0])?, y, idle_fast: num(rec[rec.len() - 1])? })
    }
}

/// Header and rows for a trajectory; states are padded to a common depth.
pub fn trajectory_table(tr: &Trajectory) -> (Vec<String>, Vec<TrajectoryRow>) {
    let m = tr.states.first().map_or(0, |s| s.y.len());
    let depth = tr.states.iter().flat_map(|s| s.y.iter().map(Vec::len)).max().unwrap_or(1);
    let mut header = vec!["t".to_string()];
    for j in 1..=m {
        header.extend((1..=depth).map(|i| format!("y{j}_{i}")));
    }
    header.push("idle_fast".into());
    let rows = tr
        .sample_times
        .iter()
        .zip(&tr.states)
        .map(|(&t, s)| {
            let y = s.y.iter().flat_map(|r| (0..depth).map(move |i| r.get(i).copied().unwrap_or(0.0))).collect();
            TrajectoryRow { t, y, idle_fast: s.idle_fast }
        })
        .collect();
    (header, rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryRow {
    pub functional: String,
    pub mean: f64,
    pub se: f64,
    pub batches: usize,
}

impl CsvRow for StationaryRow {
    fn to_record(&self) -> Vec<String> {
        vec![self.functional.clone(), self.mean.to_string(), self.se.to_string(), self.batches.to_string()]
    }

    fn from_record(rec: &[&str]) -> Result<Self> {
        Ok(Self {
            functional: field(rec, 0)?.to_string(),
            mean: num(field(rec, 1)?)?,
            se: num(field(rec, 2)?)?,
            batches: num(field(rec, 3)?)?,
        })
    }
}

pub fn stationary_table(est: &StationaryEstimate) -> (Vec<String>, Vec<StationaryRow>) {
    let rows = est
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| StationaryRow {
            functional: name.clone(),
            mean: est.means[i],
            se: est.ses[i],
            batches: est.n_batches,
        })
        .collect();
    (names(&["functional", "mean", "se", "batches"]), rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupleRow {
    pub t: f64,
    pub u: Option<f64>,
    pub event_kind: String,
    pub q1: usize,
    pub qp2: usize,
    pub q1t: usize,
    pub q2t: usize,
}

impl CsvRow for CoupleRow {
    fn to_record(&self) -> Vec<String> {
        vec![
            self.t.to_string(),
            opt_str(&self.u),
            self.event_kind.clone(),
            self.q1.to_string(),
            self.qp2.to_string(),
            self.q1t.to_string(),
            self.q2t.to_string(),
        ]
    }

    fn from_record(rec: &[&str]) -> Result<Self> {
        Ok(Self {
            t: num(field(rec, 0)?)?,
            u: opt(field(rec, 1)?)?,
            event_kind: field(rec, 2)?.to_string(),
            q1: num(field(rec, 3)?)?,
            qp2: num(field(rec, 4)?)?,
            q1t: num(field(rec, 5)?)?,
            q2t: num(field(rec, 6)?)?,
        })
    }
}

pub fn couple_table(tr: &CoupledTrace) -> (Vec<String>, Vec<CoupleRow>) {
    let rows = tr
        .events
        .iter()
        .map(|e| CoupleRow {
            t: e.t,
            u: e.u,
            event_kind: e.kind.label(),
            q1: e.q1,
            qp2: e.qp2,
            q1t: e.q1_tilde,
            q2t: e.q2_tilde,
        })
        .collect();
    (names(&["t", "U_l", "event_kind", "Q1", "Qp2", "q1t", "q2t"]), rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeRow {
    pub t: f64,
    pub y_m1: f64,
    pub y12: f64,
    pub u1: f64,
    /// Tail entries beyond `Y_{1,2}`, row-major.
    pub tail: Vec<f64>,
}

impl CsvRow for SdeRow {
    fn to_record(&self) -> Vec<String> {
        let mut v = vec![self.t.to_string(), self.y_m1.to_string(), self.y12.to_string(), self.u1.to_string()];
        v.extend(self.tail.iter().map(f64::to_string));
        v
    }

    fn from_record(rec: &[&str]) -> Result<Self> {
        Ok(Self {
            t: num(field(rec, 0)?)?,
            y_m1: num(field(rec, 1)?)?,
            y12: num(field(rec, 2)?)?,
            u1: num(field(rec, 3)?)?,
            tail: rec.iter().skip(4).map(|s| num(s)).collect::<Result<_>>()?,
        })
    }
}

pub fn sde_table(path: &DiffusionPath) -> (Vec<String>, Vec<SdeRow>) {
    let mut header = names(&["t", "yM1", "y12", "u1"]);
    let flat = |k: usize| -> Vec<f64> {
        path.tail.as_ref().map_or(Vec::new(), |tail| tail[k].iter().flatten().skip(1).copied().collect())
    };
    if let Some(tail) = &path.tail {
        if let Some(first) = tail.first() {
            for (j, row) in first.iter().enumerate() {
                for k in 0..row.len() {
                    if j == 0 && k == 0 {
                        continue;
                    }
                    header.push(format!("y{}_{}", j + 1, k + 2));
                }
            }
        }
    }
    let rows = (0..path.times.len())
        .map(|k| SdeRow { t: path.times[k], y_m1: path.y_m1[k], y12: path.y12[k], u1: path.u1[k], tail: flat(k) })
        .collect();
    (header, rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovRow {
    pub x1: f64,
    pub x2: f64,
    pub region: String,
    pub tau: Option<f64>,
    pub f: f64,
    pub f1: f64,
    pub f2: f64,
    pub f11: f64,
    pub f22: f64,
    pub residual: f64,
}

impl CsvRow for LyapunovRow {
    fn to_record(&self) -> Vec<String> {
        vec![
            self.x1.to_string(),
            self.x2.to_string(),
            self.region.clone(),
            opt_str(&self.tau),
            self.f.to_string(),
            self.f1.to_string(),
            self.f2.to_string(),
            self.f11.to_string(),
            self.f22.to_string(),
            self.residual.to_string(),
        ]
    }

    fn from_record(rec: &[&str]) -> Result<Self> {
        Ok(Self {
            x1: num(field(rec, 0)?)?,
            x2: num(field(rec, 1)?)?,
            region: field(rec, 2)?.to_string(),
            tau: opt(field(rec, 3)?)?,
            f: num(field(rec, 4)?)?,
            f1: num(field(rec, 5)?)?,
            f2: num(field(rec, 6)?)?,
            f11: num(field(rec, 7)?)?,
            f22: num(field(rec, 8)?)?,
            residual: num(field(rec, 9)?)?,
        })
    }
}

pub fn lyapunov_header() -> Vec<String> {
    names(&["x1", "x2", "region", "tau", "f", "f1", "f2", "f11", "f22", "residual"])
}

/// One line of a policy comparison: an estimate or a pairwise difference.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub policy: String,
    pub functional: String,
    pub mean: f64,
    pub se: f64,
}

impl CsvRow for ComparisonRow {
    fn to_record(&self) -> Vec<String> {
        vec![self.policy.clone(), self.functional.clone(), self.mean.to_string(), self.se.to_string()]
    }

    fn from_record(rec: &[&str]) -> Result<Self> {
        Ok(Self {
            policy: field(rec, 0)?.to_string(),
            functional: field(rec, 1)?.to_string(),
            mean: num(field(rec, 2)?)?,
            se: num(field(rec, 3)?)?,
        })
    }
}

pub fn comparison_header() -> Vec<String> {
    names(&["policy", "functional", "mean", "se"])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::coupled_run;
    use crate::ctmc::{simulate_stationary, simulate_transient, uniform_grid, RunSpec};
    use crate::diffusion::{integrate_limit_sde, DiffusionParams, LimitState};
    use crate::model::{OccupancyState, SystemConfig};
    use crate::policy::PolicyKind;
    use proptest::prelude::*;

    fn round_trip<R: CsvRow + PartialEq + std::fmt::Debug>(header: Vec<String>, rows: Vec<R>) {
        let mut buf = Vec::new();
        write_rows(&mut buf, &header, &rows).unwrap();
        let (h, back): (Vec<String>, Vec<R>) = read_rows(buf.as_slice()).unwrap();
        assert_eq!(h, header);
        assert_eq!(back, rows);
    }

    #[test]
    fn trajectory_round_trip() {
        let c = SystemConfig::fig1(50).unwrap();
        let tr = simulate_transient(&c, PolicyKind::SaJsq, &OccupancyState::empty(&c), 5.0, &uniform_grid(5.0, 0.5), 3)
            .unwrap();
        let (h, rows) = trajectory_table(&tr);
        assert_eq!(h.first().unwrap(), "t");
        assert_eq!(h.last().unwrap(), "idle_fast");
        assert_eq!(rows.len(), 11);
        round_trip(h, rows);
    }

    #[test]
    fn stationary_round_trip() {
        let c = SystemConfig::fig1(50).unwrap();
        let est = simulate_stationary(&c, PolicyKind::Jsq, &RunSpec::new(200.0, 1)).unwrap();
        let (h, rows) = stationary_table(&est);
        round_trip(h, rows);
    }

    #[test]
    fn couple_round_trip() {
        let c = SystemConfig::fig1(50).unwrap();
        let tr = coupled_run(&c, PolicyKind::SaJsq, 3.0, 2).unwrap();
        let (h, rows) = couple_table(&tr);
        assert!(rows.iter().any(|r| r.u.is_none()) && rows.iter().any(|r| r.u.is_some()));
        round_trip(h, rows);
    }

    #[test]
    fn sde_round_trip_with_tail() {
        let p = DiffusionParams::new(2.0, 2.5, 0.625, 0.01, 1.0).unwrap().record_every(10);
        let mut y0 = LimitState::pair(-1.0, 0.5, &p);
        y0.upper = vec![vec![0.5, 0.25], vec![0.1]];
        y0.speeds = vec![2.5, 0.625];
        let path = integrate_limit_sde(&p, &y0, 9).unwrap();
        let (h, rows) = sde_table(&path);
        assert_eq!(h.len(), rows[0].to_record().len());
        round_trip(h, rows);
    }

    #[test]
    fn rejects_malformed() {
        let r: Result<(Vec<String>, Vec<StationaryRow>)> =
            read_rows("functional,mean,se,batches\ny,1.0,x,3\n".as_bytes());
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn lyapunov_rows_round_trip(vals in proptest::collection::vec(-1e6f64..1e6, 9), tau in proptest::option::of(0.0f64..50.0)) {
            let row = LyapunovRow {
                x1: vals[0], x2: vals[1], region: "Omega3".into(), tau,
                f: vals[2], f1: vals[3], f2: vals[4], f11: vals[5], f22: vals[6], residual: vals[7] * 1e-300,
            };
            let mut buf = Vec::new();
            write_rows(&mut buf, &lyapunov_header(), std::slice::from_ref(&row)).unwrap();
            let (_, back): (Vec<String>, Vec<LyapunovRow>) = read_rows(buf.as_slice()).unwrap();
            prop_assert_eq!(back, vec![row]);
        }
    }
}
