//! Versioned binary snapshots of finished runs plus the per-site CSV export.
//!
//! A snapshot stores both the result arrays and the generating inputs (world
//! seed, densities, forced seeds, override table, stop condition), so a file
//! is sufficient to re-derive fields for classification or to replay the run
//! bit-exactly.

use crate::engine::{BoundaryHit, Process, ProcessFilter, RunResult, StopCondition, StopReason};
use crate::lattice::{Site, Window};
use crate::randomness::{OverrideTable, PassageTimeField, SeedField, WorldSeed};
use std::io::{self, Read, Write};
use thiserror::Error;

const MAGIC: &[u8; 8] = b"FPPHSNP\x01";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Randomness(#[from] crate::randomness::RandomnessError),
    #[error(transparent)]
    Lattice(#[from] crate::lattice::LatticeError),
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
}

/// 17 significant digits: the minimal length that round-trips every f64.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Everything needed to regenerate a run.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub window: Window,
    pub world: WorldSeed,
    pub p: f64,
    pub lambda: f64,
    pub forced_seeds: Vec<Site>,
    pub overrides: OverrideTable,
    pub stop: StopCondition,
}

impl RunSpec {
    pub fn seed_field(&self) -> Result<SeedField, crate::randomness::RandomnessError> {
        let mut f = SeedField::new(self.p, self.world)?;
        for s in &self.forced_seeds {
            f = f.with_extra_seed(s.clone())?;
        }
        Ok(f)
    }

    pub fn time_field(&self) -> Result<PassageTimeField, crate::randomness::RandomnessError> {
        Ok(PassageTimeField::new(self.lambda, self.world)?
            .with_overrides(self.overrides.clone()))
    }

    pub fn execute(&self) -> Result<RunResult, SnapshotError> {
        let seeds = self.seed_field()?;
        let times = self.time_field()?;
        Ok(crate::engine::run(
            self.window.clone(),
            &seeds,
            &times,
            self.stop,
        )?)
    }
}

fn w_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn w_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn w_i64(w: &mut impl Write, v: i64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn w_f64(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn r_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N], SnapshotError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn r_u32(r: &mut impl Read) -> Result<u32, SnapshotError> {
    Ok(u32::from_le_bytes(r_exact::<4>(r)?))
}

fn r_u64(r: &mut impl Read) -> Result<u64, SnapshotError> {
    Ok(u64::from_le_bytes(r_exact::<8>(r)?))
}

fn r_i64(r: &mut impl Read) -> Result<i64, SnapshotError> {
    Ok(i64::from_le_bytes(r_exact::<8>(r)?))
}

fn r_f64(r: &mut impl Read) -> Result<f64, SnapshotError> {
    Ok(f64::from_le_bytes(r_exact::<8>(r)?))
}

pub fn save_snapshot(
    spec: &RunSpec,
    result: &RunResult,
    w: &mut impl Write,
) -> Result<(), SnapshotError> {
    w.write_all(MAGIC)?;
    let d = spec.window.dim();
    w_u32(w, d as u32)?;
    w_i64(w, spec.window.half_side())?;
    w_u64(w, spec.world.0)?;
    w_f64(w, spec.p)?;
    w_f64(w, spec.lambda)?;

    w_u64(w, spec.forced_seeds.len() as u64)?;
    for s in &spec.forced_seeds {
        for &c in &s.0 {
            w_i64(w, c)?;
        }
    }

    let ov = spec.overrides.to_text();
    w_u64(w, ov.len() as u64)?;
    w.write_all(ov.as_bytes())?;

    // Stop condition.
    match spec.stop.time_horizon {
        Some(t) => {
            w.write_all(&[1])?;
            w_f64(w, t)?;
        }
        None => w.write_all(&[0, 0, 0, 0, 0, 0, 0, 0, 0])?,
    }
    match spec.stop.max_occupied {
        Some(n) => {
            w.write_all(&[1])?;
            w_u64(w, n as u64)?;
        }
        None => w.write_all(&[0, 0, 0, 0, 0, 0, 0, 0, 0])?,
    }
    match spec.stop.first_boundary_hit_by {
        Some(f) => w.write_all(&[
            1,
            match f {
                ProcessFilter::Fpp1 => 1,
                ProcessFilter::FppLambda => 2,
                ProcessFilter::Either => 3,
            },
        ])?,
        None => w.write_all(&[0, 0])?,
    }
    w.write_all(&[spec.stop.quiescence as u8])?;

    // Result arrays.
    let (states, tau, activated, parent) = result.raw();
    w_u64(w, states.len() as u64)?;
    let bytes: Vec<u8> = states.iter().map(|&s| s as u8).collect();
    w.write_all(&bytes)?;
    for &t in tau {
        w_f64(w, t)?;
    }
    w.write_all(activated)?;
    for &p in parent {
        w_u32(w, p)?;
    }

    w_u64(w, result.boundary_hits().len() as u64)?;
    for hit in result.boundary_hits() {
        w_f64(w, hit.time)?;
        for &c in &hit.site.0 {
            w_i64(w, c)?;
        }
        w.write_all(&[hit.process.code()])?;
    }
    w.write_all(&[result.stop_reason().code()])?;
    w_f64(w, result.final_time())?;
    w_u64(w, result.events())?;
    Ok(())
}

pub fn load_snapshot(r: &mut impl Read) -> Result<(RunSpec, RunResult), SnapshotError> {
    let magic = r_exact::<8>(r)?;
    if &magic != MAGIC {
        return Err(SnapshotError::Corrupt("bad magic".into()));
    }
    let d = r_u32(r)? as usize;
    let half_side = r_i64(r)?;
    let window = Window::new(d, half_side)?;
    let world = WorldSeed(r_u64(r)?);
    let p = r_f64(r)?;
    let lambda = r_f64(r)?;

    let n_forced = r_u64(r)? as usize;
    let mut forced_seeds = Vec::with_capacity(n_forced);
    for _ in 0..n_forced {
        let mut coords = Vec::with_capacity(d);
        for _ in 0..d {
            coords.push(r_i64(r)?);
        }
        forced_seeds.push(Site(coords));
    }

    let ov_len = r_u64(r)? as usize;
    let mut ov_bytes = vec![0u8; ov_len];
    r.read_exact(&mut ov_bytes)?;
    let overrides = OverrideTable::parse(
        std::str::from_utf8(&ov_bytes)
            .map_err(|e| SnapshotError::Corrupt(format!("override text: {e}")))?,
    )?;

    let time_horizon = if r_exact::<1>(r)?[0] == 1 {
        Some(r_f64(r)?)
    } else {
        let _ = r_exact::<8>(r)?;
        None
    };
    let max_occupied = if r_exact::<1>(r)?[0] == 1 {
        Some(r_u64(r)? as usize)
    } else {
        let _ = r_exact::<8>(r)?;
        None
    };
    let first_boundary_hit_by = {
        let flags = r_exact::<2>(r)?;
        if flags[0] == 1 {
            Some(match flags[1] {
                1 => ProcessFilter::Fpp1,
                2 => ProcessFilter::FppLambda,
                3 => ProcessFilter::Either,
                other => {
                    return Err(SnapshotError::Corrupt(format!("bad filter code {other}")))
                }
            })
        } else {
            None
        }
    };
    let quiescence = r_exact::<1>(r)?[0] != 0;
    let stop = StopCondition {
        time_horizon,
        max_occupied,
        first_boundary_hit_by,
        quiescence,
    };

    let n = r_u64(r)? as usize;
    if n != window.site_count() {
        return Err(SnapshotError::Corrupt(format!(
            "site count {n} does not match window {}",
            window.site_count()
        )));
    }
    let mut state_bytes = vec![0u8; n];
    r.read_exact(&mut state_bytes)?;
    let states: Vec<i8> = state_bytes.iter().map(|&b| b as i8).collect();
    let mut tau = Vec::with_capacity(n);
    for _ in 0..n {
        tau.push(r_f64(r)?);
    }
    let mut activated = vec![0u8; n];
    r.read_exact(&mut activated)?;
    let mut parent = Vec::with_capacity(n);
    for _ in 0..n {
        parent.push(r_u32(r)?);
    }

    let n_hits = r_u64(r)? as usize;
    let mut boundary_hits = Vec::with_capacity(n_hits);
    for _ in 0..n_hits {
        let time = r_f64(r)?;
        let mut coords = Vec::with_capacity(d);
        for _ in 0..d {
            coords.push(r_i64(r)?);
        }
        let code = r_exact::<1>(r)?[0];
        boundary_hits.push(BoundaryHit {
            time,
            site: Site(coords),
            process: Process::from_code(code)
                .ok_or_else(|| SnapshotError::Corrupt(format!("bad process code {code}")))?,
        });
    }
    let stop_reason = StopReason::from_code(r_exact::<1>(r)?[0])
        .ok_or_else(|| SnapshotError::Corrupt("bad stop reason".into()))?;
    let final_time = r_f64(r)?;
    let _events = r_u64(r)?;

    let spec = RunSpec {
        window: window.clone(),
        world,
        p,
        lambda,
        forced_seeds,
        overrides,
        stop,
    };
    let result = RunResult::from_raw(
        window,
        states,
        tau,
        activated,
        parent,
        boundary_hits,
        stop_reason,
        final_time,
    );
    Ok((spec, result))
}

/// Per-site CSV: coordinates, state code, entrance time, activating process.
pub fn write_site_csv(result: &RunResult, w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "# fpphe-csv schema-version 1")?;
    let d = result.window().dim();
    let headers: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
    writeln!(w, "{},state,tau,activated_by", headers.join(","))?;
    for (site, rec) in result.records() {
        let coords: Vec<String> = site.0.iter().map(|c| c.to_string()).collect();
        let tau = rec
            .entrance_time
            .map(fmt_g17)
            .unwrap_or_default();
        let act = rec
            .activated_by
            .map(|p| p.code().to_string())
            .unwrap_or_default();
        writeln!(w, "{},{},{},{}", coords.join(","), rec.state.code(), tau, act)?;
    }
    Ok(())
}
