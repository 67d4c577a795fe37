//! Exact discrete-event simulation of the competing growth dynamics.
//!
//! The type-1 process starts at the origin and spreads over edges with rate-1
//! passage times. Dormant seeds, once attacked by either process, activate and
//! spread with rate-lambda times. Occupation is permanent. Events are
//! processed in (fire time, target, source) order; with continuous passage
//! times ties are null events, but override fixtures can create them, so the
//! tie-break is part of the contract.
//!
//! [`reference_run`] re-implements the dynamics with a frontier rescan instead
//! of an incremental queue; it is asymptotically slow and serves as the
//! correctness oracle for the optimized engine.

use crate::lattice::{BoxIndex, LatticeError, ScaleTable, Site, SiteRange, Window};
use crate::randomness::{PassageTimeField, RateClass, SeedField};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("origin lies outside the window")]
    OriginOutsideWindow,
    #[error("site {0:?} lies outside the window")]
    SiteOutsideWindow(Vec<i64>),
    #[error("box does not intersect the window")]
    BoxOutsideWindow,
    #[error("stop condition is empty; at least one criterion must be set")]
    EmptyStopCondition,
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Occupancy state of a site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteState {
    /// Non-activated seed.
    Seed,
    /// Neither a seed nor occupied.
    Empty,
    /// Occupied by the rate-1 process.
    Fpp1,
    /// Activated seed or a site conquered by the rate-lambda process.
    FppLambda,
}

impl SiteState {
    pub fn code(self) -> i8 {
        match self {
            SiteState::Seed => -1,
            SiteState::Empty => 0,
            SiteState::Fpp1 => 1,
            SiteState::FppLambda => 2,
        }
    }

    pub fn from_code(c: i8) -> Option<Self> {
        match c {
            -1 => Some(SiteState::Seed),
            0 => Some(SiteState::Empty),
            1 => Some(SiteState::Fpp1),
            2 => Some(SiteState::FppLambda),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Process {
    Fpp1,
    FppLambda,
}

impl Process {
    fn class(self) -> RateClass {
        match self {
            Process::Fpp1 => RateClass::Rate1,
            Process::FppLambda => RateClass::RateLambda,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Process::Fpp1 => 1,
            Process::FppLambda => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(Process::Fpp1),
            2 => Some(Process::FppLambda),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcessFilter {
    Fpp1,
    FppLambda,
    Either,
}

impl ProcessFilter {
    fn matches(self, p: Process) -> bool {
        match self {
            ProcessFilter::Fpp1 => p == Process::Fpp1,
            ProcessFilter::FppLambda => p == Process::FppLambda,
            ProcessFilter::Either => true,
        }
    }
}

/// When to stop a run. At least one criterion must be set; an exhausted event
/// queue always stops the run regardless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopCondition {
    pub time_horizon: Option<f64>,
    pub max_occupied: Option<usize>,
    pub first_boundary_hit_by: Option<ProcessFilter>,
    pub quiescence: bool,
}

impl StopCondition {
    pub fn quiescence() -> Self {
        StopCondition {
            time_horizon: None,
            max_occupied: None,
            first_boundary_hit_by: None,
            quiescence: true,
        }
    }

    pub fn horizon(t: f64) -> Self {
        StopCondition {
            time_horizon: Some(t),
            ..Self::quiescence()
        }
    }

    pub fn boundary(filter: ProcessFilter) -> Self {
        StopCondition {
            first_boundary_hit_by: Some(filter),
            ..Self::quiescence()
        }
    }

    pub fn max_occupied(n: usize) -> Self {
        StopCondition {
            max_occupied: Some(n),
            ..Self::quiescence()
        }
    }

    fn validate(&self) -> Result<(), EngineError> {
        if self.time_horizon.is_none()
            && self.max_occupied.is_none()
            && self.first_boundary_hit_by.is_none()
            && !self.quiescence
        {
            return Err(EngineError::EmptyStopCondition);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Quiescent,
    TimeHorizon,
    MaxOccupied,
    BoundaryHit,
}

impl StopReason {
    pub fn code(self) -> u8 {
        match self {
            StopReason::Quiescent => 0,
            StopReason::TimeHorizon => 1,
            StopReason::MaxOccupied => 2,
            StopReason::BoundaryHit => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(StopReason::Quiescent),
            1 => Some(StopReason::TimeHorizon),
            2 => Some(StopReason::MaxOccupied),
            3 => Some(StopReason::BoundaryHit),
            _ => None,
        }
    }
}

/// An attempt that targeted a site outside the window.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryHit {
    pub time: f64,
    pub site: Site,
    pub process: Process,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StateCounts {
    pub seeds: usize,
    pub empty: usize,
    pub fpp1: usize,
    pub fpp_lambda: usize,
}

impl StateCounts {
    pub fn occupied(&self) -> usize {
        self.fpp1 + self.fpp_lambda
    }

    pub fn total(&self) -> usize {
        self.seeds + self.empty + self.occupied()
    }
}

/// Per-site view assembled from the flat result arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteRecord {
    pub state: SiteState,
    pub entrance_time: Option<f64>,
    pub activated_by: Option<Process>,
    pub conquering_neighbor: Option<Site>,
}

const NO_PARENT: u32 = u32::MAX;

/// Immutable outcome of a finished run.
#[derive(Debug, Clone)]
pub struct RunResult {
    window: Window,
    states: Vec<i8>,
    tau: Vec<f64>,
    activated_by: Vec<u8>,
    parent: Vec<u32>,
    counts: StateCounts,
    boundary_hits: Vec<BoundaryHit>,
    stop_reason: StopReason,
    final_time: f64,
    events: u64,
    wall_time: Duration,
}

impl RunResult {
    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn counts(&self) -> StateCounts {
        self.counts
    }

    pub fn boundary_hits(&self) -> &[BoundaryHit] {
        &self.boundary_hits
    }

    pub fn stop_reason(&self) -> StopReason {
        self.stop_reason
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn wall_time(&self) -> Duration {
        self.wall_time
    }

    pub fn state_of(&self, v: &Site) -> Result<SiteState, EngineError> {
        let idx = self
            .window
            .index_of(v)
            .ok_or_else(|| EngineError::SiteOutsideWindow(v.0.clone()))?;
        Ok(SiteState::from_code(self.states[idx]).unwrap())
    }

    /// Entrance time of `v`, absent when unoccupied.
    pub fn entrance_time(&self, v: &Site) -> Result<Option<f64>, EngineError> {
        let idx = self
            .window
            .index_of(v)
            .ok_or_else(|| EngineError::SiteOutsideWindow(v.0.clone()))?;
        Ok(if self.tau[idx].is_nan() {
            None
        } else {
            Some(self.tau[idx])
        })
    }

    pub fn record(&self, v: &Site) -> Result<SiteRecord, EngineError> {
        let idx = self
            .window
            .index_of(v)
            .ok_or_else(|| EngineError::SiteOutsideWindow(v.0.clone()))?;
        Ok(self.record_at(idx))
    }

    fn record_at(&self, idx: usize) -> SiteRecord {
        SiteRecord {
            state: SiteState::from_code(self.states[idx]).unwrap(),
            entrance_time: if self.tau[idx].is_nan() {
                None
            } else {
                Some(self.tau[idx])
            },
            activated_by: Process::from_code(self.activated_by[idx]),
            conquering_neighbor: if self.parent[idx] == NO_PARENT {
                None
            } else {
                Some(self.window.site_at(self.parent[idx] as usize))
            },
        }
    }

    pub fn records(&self) -> impl Iterator<Item = (Site, SiteRecord)> + '_ {
        (0..self.states.len()).map(move |i| (self.window.site_at(i), self.record_at(i)))
    }

    /// Earliest entrance into the part of `range` visible in the window,
    /// with the lexicographically smallest argmin site on ties.
    pub fn range_entrance(&self, range: &SiteRange) -> Result<Option<(f64, Site)>, EngineError> {
        let clipped = range.intersect(&self.window.as_range());
        if clipped.is_empty() {
            return Err(EngineError::BoxOutsideWindow);
        }
        let mut best: Option<(f64, Site)> = None;
        for s in clipped.iter() {
            let idx = self.window.index_of(&s).unwrap();
            let t = self.tau[idx];
            if t.is_nan() {
                continue;
            }
            match &best {
                Some((bt, _)) if *bt <= t => {}
                _ => best = Some((t, s)),
            }
        }
        Ok(best)
    }

    /// Entrance time and entry site of the box at `idx`.
    pub fn box_entrance_time(
        &self,
        st: &ScaleTable,
        idx: &BoxIndex,
    ) -> Result<Option<(f64, Site)>, EngineError> {
        self.range_entrance(&st.box_of(idx)?)
    }

    /// Whether any site on the window boundary ring is occupied by `p`.
    pub fn touches_window_boundary(&self, p: Process) -> bool {
        let code = match p {
            Process::Fpp1 => 1,
            Process::FppLambda => 2,
        };
        let half = self.window.half_side();
        let d = self.window.dim();
        let ring = crate::lattice::boundary_sites(&self.window.as_range()).unwrap();
        debug_assert_eq!(d, self.window.dim());
        let _ = half;
        ring.into_iter().any(|s| {
            let i = self.window.index_of(&s).unwrap();
            self.states[i] == code
        })
    }

    pub fn density(&self, p: Process) -> f64 {
        let n = self.window.site_count() as f64;
        match p {
            Process::Fpp1 => self.counts.fpp1 as f64 / n,
            Process::FppLambda => self.counts.fpp_lambda as f64 / n,
        }
    }

    pub(crate) fn raw(&self) -> (&Vec<i8>, &Vec<f64>, &Vec<u8>, &Vec<u32>) {
        (&self.states, &self.tau, &self.activated_by, &self.parent)
    }

    pub(crate) fn from_raw(
        window: Window,
        states: Vec<i8>,
        tau: Vec<f64>,
        activated_by: Vec<u8>,
        parent: Vec<u32>,
        boundary_hits: Vec<BoundaryHit>,
        stop_reason: StopReason,
        final_time: f64,
    ) -> Self {
        let mut counts = StateCounts::default();
        for &s in &states {
            match s {
                -1 => counts.seeds += 1,
                0 => counts.empty += 1,
                1 => counts.fpp1 += 1,
                _ => counts.fpp_lambda += 1,
            }
        }
        RunResult {
            window,
            states,
            tau,
            activated_by,
            parent,
            counts,
            boundary_hits,
            stop_reason,
            final_time,
            events: 0,
            wall_time: Duration::ZERO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Target {
    In(u32),
    Out(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Attempt {
    fire: f64,
    target: Target,
    source: u32,
    class: RateClass,
}

impl Eq for Attempt {}

impl Ord for Attempt {
    fn cmp(&self, other: &Self) -> Ordering {
        self.fire
            .total_cmp(&other.fire)
            .then(self.target.cmp(&other.target))
            .then(self.source.cmp(&other.source))
    }
}

impl PartialOrd for Attempt {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Outcome of processing a single event.
#[derive(Debug, Clone, PartialEq)]
pub enum ProcessedEvent {
    Occupied { time: f64, site: Site, process: Process },
    SeedActivated { time: f64, site: Site, by: Process },
    Discarded { time: f64 },
    OutsideWindow { time: f64, site: Site, process: Process },
}

/// Live state of the optimized engine.
pub struct SimulationState<'a> {
    window: Window,
    time_field: &'a PassageTimeField,
    states: Vec<i8>,
    tau: Vec<f64>,
    activated_by: Vec<u8>,
    parent: Vec<u32>,
    queue: BinaryHeap<std::cmp::Reverse<Attempt>>,
    out_targets: Vec<Site>,
    boundary_hits: Vec<BoundaryHit>,
    counts: StateCounts,
    current_time: f64,
    events: u64,
    strides: Vec<usize>,
    scratch: Vec<i64>,
    scratch_nb: Vec<i64>,
}

/// Build the initial state: the origin occupied by the rate-1 process at time
/// zero, every other site a seed or empty per the seed field, and the 2d
/// attempts out of the origin scheduled with rate-1 times.
pub fn initialize<'a>(
    window: Window,
    seed_field: &SeedField,
    time_field: &'a PassageTimeField,
) -> Result<SimulationState<'a>, EngineError> {
    let origin = Site::origin(window.dim());
    let origin_idx = window
        .index_of(&origin)
        .ok_or(EngineError::OriginOutsideWindow)? as u32;
    let n = window.site_count();
    let mut states = vec![0i8; n];
    let mut counts = StateCounts::default();
    for i in 0..n {
        let s = window.site_at(i);
        if seed_field.is_seed(&s) {
            states[i] = -1;
            counts.seeds += 1;
        } else {
            counts.empty += 1;
        }
    }
    let d = window.dim();
    let side = window.side() as usize;
    let mut strides = vec![1usize; d];
    for a in (0..d.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * side;
    }
    let mut sim = SimulationState {
        window,
        time_field,
        states,
        tau: vec![f64::NAN; n],
        activated_by: vec![0u8; n],
        parent: vec![NO_PARENT; n],
        queue: BinaryHeap::new(),
        out_targets: Vec::new(),
        boundary_hits: Vec::new(),
        counts,
        current_time: 0.0,
        events: 0,
        strides,
        scratch: vec![0; d],
        scratch_nb: vec![0; d],
    };
    sim.occupy(origin_idx, Process::Fpp1, 0.0, NO_PARENT, None);
    Ok(sim)
}

impl<'a> SimulationState<'a> {
    pub fn window(&self) -> &Window {
        &self.window
    }

    fn decode(&mut self, idx: u32) {
        let side = self.window.side() as usize;
        let half = self.window.half_side();
        let mut rem = idx as usize;
        for a in (0..self.window.dim()).rev() {
            self.scratch[a] = (rem % side) as i64 - half;
            rem /= side;
        }
    }

    /// Occupy `idx` (possibly activating a seed) and schedule attempts across
    /// all 2d incident edges, including those into occupied sites (discarded
    /// at fire time) and those leaving the window (logged, never occupied).
    fn occupy(
        &mut self,
        idx: u32,
        process: Process,
        time: f64,
        parent: u32,
        activated_by: Option<Process>,
    ) {
        let i = idx as usize;
        match self.states[i] {
            -1 => self.counts.seeds -= 1,
            0 => self.counts.empty -= 1,
            _ => unreachable!("occupying an already occupied site"),
        }
        match process {
            Process::Fpp1 => self.counts.fpp1 += 1,
            Process::FppLambda => self.counts.fpp_lambda += 1,
        }
        self.states[i] = SiteState::code(match process {
            Process::Fpp1 => SiteState::Fpp1,
            Process::FppLambda => SiteState::FppLambda,
        });
        self.tau[i] = time;
        self.parent[i] = parent;
        if let Some(by) = activated_by {
            self.activated_by[i] = by.code();
        }

        self.decode(idx);
        let class = process.class();
        let half = self.window.half_side();
        for axis in 0..self.window.dim() {
            for delta in [-1i64, 1] {
                self.scratch_nb.copy_from_slice(&self.scratch);
                self.scratch_nb[axis] += delta;
                let passage =
                    self.time_field
                        .passage_time_coords(&self.scratch, &self.scratch_nb, class);
                let fire = time + passage;
                let target = if self.scratch_nb[axis].abs() <= half {
                    let t_idx = if delta > 0 {
                        idx as usize + self.strides[axis]
                    } else {
                        idx as usize - self.strides[axis]
                    };
                    Target::In(t_idx as u32)
                } else {
                    self.out_targets.push(Site(self.scratch_nb.clone()));
                    Target::Out((self.out_targets.len() - 1) as u32)
                };
                self.queue.push(std::cmp::Reverse(Attempt {
                    fire,
                    target,
                    source: idx,
                    class,
                }));
            }
        }
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.queue.peek().map(|a| a.0.fire)
    }

    pub fn occupied(&self) -> usize {
        self.counts.occupied()
    }

    /// Process the globally minimum-time pending attempt. `None` when the
    /// queue is empty (quiescent).
    pub fn step(&mut self) -> Option<ProcessedEvent> {
        let std::cmp::Reverse(att) = self.queue.pop()?;
        debug_assert!(att.fire >= self.current_time);
        self.current_time = att.fire;
        self.events += 1;
        let process = match att.class {
            RateClass::Rate1 => Process::Fpp1,
            RateClass::RateLambda => Process::FppLambda,
        };
        match att.target {
            Target::Out(out_idx) => {
                let site = self.out_targets[out_idx as usize].clone();
                self.boundary_hits.push(BoundaryHit {
                    time: att.fire,
                    site: site.clone(),
                    process,
                });
                Some(ProcessedEvent::OutsideWindow {
                    time: att.fire,
                    site,
                    process,
                })
            }
            Target::In(t) => {
                let i = t as usize;
                match self.states[i] {
                    1 | 2 => Some(ProcessedEvent::Discarded { time: att.fire }),
                    0 => {
                        self.occupy(t, process, att.fire, att.source, None);
                        Some(ProcessedEvent::Occupied {
                            time: att.fire,
                            site: self.window.site_at(i),
                            process,
                        })
                    }
                    _ => {
                        // Inactive seed: the attempt fails and the seed
                        // activates, spreading with rate-lambda times.
                        self.occupy(t, Process::FppLambda, att.fire, att.source, Some(process));
                        Some(ProcessedEvent::SeedActivated {
                            time: att.fire,
                            site: self.window.site_at(i),
                            by: process,
                        })
                    }
                }
            }
        }
    }

    fn finish(mut self, stop_reason: StopReason, started: Instant) -> RunResult {
        self.boundary_hits.sort_by(|a, b| {
            a.time
                .total_cmp(&b.time)
                .then_with(|| a.site.cmp(&b.site))
                .then_with(|| a.process.code().cmp(&b.process.code()))
        });
        RunResult {
            window: self.window,
            states: self.states,
            tau: self.tau,
            activated_by: self.activated_by,
            parent: self.parent,
            counts: self.counts,
            boundary_hits: self.boundary_hits,
            stop_reason,
            final_time: self.current_time,
            events: self.events,
            wall_time: started.elapsed(),
        }
    }

    /// Run until a stop criterion triggers or the queue empties.
    pub fn run(self, stop: StopCondition) -> Result<RunResult, EngineError> {
        stop.validate()?;
        let started = Instant::now();
        let mut sim = self;
        loop {
            if let (Some(horizon), Some(next)) = (stop.time_horizon, sim.peek_time()) {
                if next > horizon {
                    sim.current_time = horizon;
                    return Ok(sim.finish(StopReason::TimeHorizon, started));
                }
            }
            let event = match sim.step() {
                None => return Ok(sim.finish(StopReason::Quiescent, started)),
                Some(e) => e,
            };
            if let Some(filter) = stop.first_boundary_hit_by {
                if let ProcessedEvent::OutsideWindow { process, .. } = event {
                    if filter.matches(process) {
                        return Ok(sim.finish(StopReason::BoundaryHit, started));
                    }
                }
            }
            if let Some(max) = stop.max_occupied {
                if sim.counts.occupied() >= max {
                    return Ok(sim.finish(StopReason::MaxOccupied, started));
                }
            }
        }
    }
}

/// Convenience wrapper: initialize and run in one call.
pub fn run(
    window: Window,
    seed_field: &SeedField,
    time_field: &PassageTimeField,
    stop: StopCondition,
) -> Result<RunResult, EngineError> {
    initialize(window, seed_field, time_field)?.run(stop)
}

/// Validation oracle: identical semantics to [`run`], implemented by keeping
/// every pending attempt in a flat list and rescanning it for the global
/// minimum at each step.
pub fn reference_run(
    window: Window,
    seed_field: &SeedField,
    time_field: &PassageTimeField,
    stop: StopCondition,
) -> Result<RunResult, EngineError> {
    stop.validate()?;
    let started = Instant::now();
    let origin = Site::origin(window.dim());
    window
        .index_of(&origin)
        .ok_or(EngineError::OriginOutsideWindow)?;

    let n = window.site_count();
    let mut states = vec![0i8; n];
    for i in 0..n {
        if seed_field.is_seed(&window.site_at(i)) {
            states[i] = -1;
        }
    }
    let mut tau = vec![f64::NAN; n];
    let mut activated_by = vec![0u8; n];
    let mut parent = vec![NO_PARENT; n];
    let mut boundary_hits: Vec<BoundaryHit> = Vec::new();

    // Pending attempts; (fire, target, source, class) with Out targets keyed
    // by insertion order exactly as in the optimized engine.
    let mut pending: Vec<Attempt> = Vec::new();
    let mut out_targets: Vec<Site> = Vec::new();

    let occupy = |site_idx: usize,
                      process: Process,
                      time: f64,
                      from: u32,
                      activated: Option<Process>,
                      states: &mut Vec<i8>,
                      tau: &mut Vec<f64>,
                      activated_by: &mut Vec<u8>,
                      parent: &mut Vec<u32>,
                      pending: &mut Vec<Attempt>,
                      out_targets: &mut Vec<Site>| {
        states[site_idx] = match process {
            Process::Fpp1 => 1,
            Process::FppLambda => 2,
        };
        tau[site_idx] = time;
        parent[site_idx] = from;
        if let Some(by) = activated {
            activated_by[site_idx] = by.code();
        }
        let here = window.site_at(site_idx);
        for nb in here.neighbours() {
            let passage = time_field.passage_time_coords(&here.0, &nb.0, process.class());
            let fire = time + passage;
            let target = match window.index_of(&nb) {
                Some(t) => Target::In(t as u32),
                None => {
                    out_targets.push(nb);
                    Target::Out((out_targets.len() - 1) as u32)
                }
            };
            pending.push(Attempt {
                fire,
                target,
                source: site_idx as u32,
                class: process.class(),
            });
        }
    };

    let origin_idx = window.index_of(&origin).unwrap();
    occupy(
        origin_idx,
        Process::Fpp1,
        0.0,
        NO_PARENT,
        None,
        &mut states,
        &mut tau,
        &mut activated_by,
        &mut parent,
        &mut pending,
        &mut out_targets,
    );

    let mut current_time = 0.0f64;
    let stop_reason;
    'outer: loop {
        // Full rescan for the minimum pending attempt.
        let mut min_pos: Option<usize> = None;
        for (pos, att) in pending.iter().enumerate() {
            match min_pos {
                None => min_pos = Some(pos),
                Some(m) if *att < pending[m] => min_pos = Some(pos),
                _ => {}
            }
        }
        let pos = match min_pos {
            None => {
                stop_reason = StopReason::Quiescent;
                break;
            }
            Some(p) => p,
        };
        let att = pending[pos];
        if let Some(horizon) = stop.time_horizon {
            if att.fire > horizon {
                current_time = horizon;
                stop_reason = StopReason::TimeHorizon;
                break;
            }
        }
        pending.swap_remove(pos);
        current_time = att.fire;
        let process = match att.class {
            RateClass::Rate1 => Process::Fpp1,
            RateClass::RateLambda => Process::FppLambda,
        };
        match att.target {
            Target::Out(o) => {
                boundary_hits.push(BoundaryHit {
                    time: att.fire,
                    site: out_targets[o as usize].clone(),
                    process,
                });
                if let Some(filter) = stop.first_boundary_hit_by {
                    if filter.matches(process) {
                        stop_reason = StopReason::BoundaryHit;
                        break 'outer;
                    }
                }
            }
            Target::In(t) => {
                let i = t as usize;
                match states[i] {
                    1 | 2 => {}
                    0 => occupy(
                        i,
                        process,
                        att.fire,
                        att.source,
                        None,
                        &mut states,
                        &mut tau,
                        &mut activated_by,
                        &mut parent,
                        &mut pending,
                        &mut out_targets,
                    ),
                    _ => occupy(
                        i,
                        Process::FppLambda,
                        att.fire,
                        att.source,
                        Some(process),
                        &mut states,
                        &mut tau,
                        &mut activated_by,
                        &mut parent,
                        &mut pending,
                        &mut out_targets,
                    ),
                }
                if let Some(max) = stop.max_occupied {
                    let occ = states.iter().filter(|&&s| s == 1 || s == 2).count();
                    if occ >= max {
                        stop_reason = StopReason::MaxOccupied;
                        break 'outer;
                    }
                }
            }
        }
    }

    boundary_hits.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then_with(|| a.site.cmp(&b.site))
            .then_with(|| a.process.code().cmp(&b.process.code()))
    });
    let mut result = RunResult::from_raw(
        window,
        states,
        tau,
        activated_by,
        parent,
        boundary_hits,
        stop_reason,
        current_time,
    );
    result.wall_time = started.elapsed();
    Ok(result)
}

impl PassageTimeField {
    /// Allocation-free passage time between neighbouring coordinate slices;
    /// canonical edge order is the lexicographic slice order, matching
    /// [`crate::lattice::Edge::new`].
    pub fn passage_time_coords(&self, a: &[i64], b: &[i64], class: RateClass) -> f64 {
        if !self.overrides().is_empty() {
            let e = crate::lattice::Edge::new(Site(a.to_vec()), Site(b.to_vec()))
                .expect("override lookup on non-neighbouring sites");
            return self.passage_time(&e, class);
        }
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        self.passage_time_raw(lo, hi, class)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomness::{OverrideTable, WorldSeed};

    fn unit_overrides() -> OverrideTable {
        OverrideTable::with_default(1.0, 1000.0).unwrap()
    }

    #[test]
    fn initialize_p0_and_p1() {
        let w = Window::new(2, 3).unwrap();
        let seeds = SeedField::new(0.0, WorldSeed(1)).unwrap();
        let times = PassageTimeField::new(1.0, WorldSeed(1)).unwrap();
        let sim = initialize(w.clone(), &seeds, &times).unwrap();
        assert_eq!(sim.counts.occupied(), 1);
        assert_eq!(sim.queue.len(), 4);

        let seeds = SeedField::new(1.0, WorldSeed(1)).unwrap();
        let sim = initialize(w.clone(), &seeds, &times).unwrap();
        assert_eq!(sim.counts.seeds, w.site_count() - 1);
        for s in w.sites() {
            let idx = w.index_of(&s).unwrap();
            if s == Site::origin(2) {
                assert_eq!(sim.states[idx], 1);
            } else {
                assert_eq!(sim.states[idx], -1);
            }
        }
    }

    #[test]
    fn unit_time_growth_is_l1_distance() {
        let w = Window::new(2, 1).unwrap();
        let seeds = SeedField::new(0.0, WorldSeed(2)).unwrap();
        let times =
            PassageTimeField::new(1.0, WorldSeed(2)).unwrap().with_overrides(unit_overrides());
        let result = run(w.clone(), &seeds, &times, StopCondition::quiescence()).unwrap();
        for s in w.sites() {
            let expect = s.l1_distance(&Site::origin(2)) as f64;
            assert_eq!(result.entrance_time(&s).unwrap(), Some(expect));
            assert_eq!(result.state_of(&s).unwrap(), SiteState::Fpp1);
        }
        assert_eq!(result.stop_reason(), StopReason::Quiescent);
    }

    #[test]
    fn seed_activation_spreads_with_lambda_times() {
        // Single seed adjacent to the origin; its outgoing lambda edges are
        // fast enough to win everything except the origin.
        let w = Window::new(2, 1).unwrap();
        let seeds = SeedField::new(0.0, WorldSeed(3))
            .unwrap()
            .with_extra_seed(Site(vec![1, 0]))
            .unwrap();
        let mut ov = OverrideTable::with_default(10.0, 0.001).unwrap();
        // Fast rate-1 edge into the seed so it activates quickly.
        ov.set(
            crate::lattice::Edge::new(Site(vec![0, 0]), Site(vec![1, 0])).unwrap(),
            0.5,
            0.001,
        )
        .unwrap();
        let times = PassageTimeField::new(1e6, WorldSeed(3)).unwrap().with_overrides(ov);
        let result = run(w.clone(), &seeds, &times, StopCondition::quiescence()).unwrap();
        let seed_rec = result.record(&Site(vec![1, 0])).unwrap();
        assert_eq!(seed_rec.state, SiteState::FppLambda);
        assert_eq!(seed_rec.activated_by, Some(Process::Fpp1));
        assert_eq!(seed_rec.entrance_time, Some(0.5));
        // All non-origin sites fall to the lambda process.
        let counts = result.counts();
        assert_eq!(counts.fpp1, 1);
        assert_eq!(counts.fpp_lambda, w.site_count() - 1);
    }

    #[test]
    fn fully_seeded_neighbourhood_confines_fpp1() {
        let w = Window::new(2, 2).unwrap();
        let seeds = SeedField::new(1.0, WorldSeed(4)).unwrap();
        let times = PassageTimeField::new(0.5, WorldSeed(4)).unwrap();
        let result = run(w, &seeds, &times, StopCondition::quiescence()).unwrap();
        assert_eq!(result.counts().fpp1, 1);
        assert_eq!(result.entrance_time(&Site::origin(2)).unwrap(), Some(0.0));
    }

    #[test]
    fn horizon_zero_keeps_only_origin() {
        let w = Window::new(2, 5).unwrap();
        let seeds = SeedField::new(0.2, WorldSeed(5)).unwrap();
        let times = PassageTimeField::new(1.0, WorldSeed(5)).unwrap();
        let result = run(w, &seeds, &times, StopCondition::horizon(0.0)).unwrap();
        assert_eq!(result.counts().occupied(), 1);
        assert_eq!(result.stop_reason(), StopReason::TimeHorizon);
    }

    #[test]
    fn quiescence_with_no_seeds_fills_window() {
        let w = Window::new(2, 4).unwrap();
        let seeds = SeedField::new(0.0, WorldSeed(6)).unwrap();
        let times = PassageTimeField::new(1.0, WorldSeed(6)).unwrap();
        let result = run(w.clone(), &seeds, &times, StopCondition::quiescence()).unwrap();
        assert_eq!(result.counts().fpp1, w.site_count());
        // Parent chain consistency: tau(target) = tau(parent) + passage.
        for (s, rec) in result.records() {
            if let Some(p) = rec.conquering_neighbor {
                let edge = crate::lattice::Edge::new(s.clone(), p.clone()).unwrap();
                let passage = times.passage_time(&edge, RateClass::Rate1);
                let parent_tau = result.entrance_time(&p).unwrap().unwrap();
                assert_eq!(rec.entrance_time.unwrap(), parent_tau + passage);
            } else {
                assert_eq!(s, Site::origin(2));
            }
        }
    }

    #[test]
    fn optimized_matches_reference_on_random_instances() {
        for seed in 0..12u64 {
            let p = [0.0, 0.2, 0.5][(seed % 3) as usize];
            let lambda = [0.01, 1.0, 2.0][(seed % 3) as usize];
            let w = Window::new(2, 3).unwrap();
            let seeds = SeedField::new(p, WorldSeed(seed)).unwrap();
            let times = PassageTimeField::new(lambda, WorldSeed(seed)).unwrap();
            let a = run(w.clone(), &seeds, &times, StopCondition::quiescence()).unwrap();
            let b = reference_run(w.clone(), &seeds, &times, StopCondition::quiescence()).unwrap();
            for s in w.sites() {
                assert_eq!(a.state_of(&s).unwrap(), b.state_of(&s).unwrap());
                let (ta, tb) = (a.entrance_time(&s).unwrap(), b.entrance_time(&s).unwrap());
                match (ta, tb) {
                    (Some(x), Some(y)) => assert_eq!(x.to_bits(), y.to_bits()),
                    (None, None) => {}
                    _ => panic!("occupancy mismatch at {s:?}"),
                }
            }
        }
    }

    #[test]
    fn window_truncation_soundness() {
        for seed in 0..8u64 {
            let seeds = SeedField::new(0.25, WorldSeed(seed)).unwrap();
            let times = PassageTimeField::new(0.7, WorldSeed(seed)).unwrap();
            let small = run(
                Window::new(2, 5).unwrap(),
                &seeds,
                &times,
                StopCondition::quiescence(),
            )
            .unwrap();
            let large = run(
                Window::new(2, 8).unwrap(),
                &seeds,
                &times,
                StopCondition::quiescence(),
            )
            .unwrap();
            let first_hit = small
                .boundary_hits()
                .first()
                .map(|h| h.time)
                .unwrap_or(f64::INFINITY);
            for s in Window::new(2, 5).unwrap().sites() {
                if let Some(t) = small.entrance_time(&s).unwrap() {
                    if t < first_hit {
                        assert_eq!(
                            large.entrance_time(&s).unwrap().map(f64::to_bits),
                            Some(t.to_bits()),
                            "tau changed for {s:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn box_entrance_and_ties() {
        let w = Window::new(2, 3).unwrap();
        let seeds = SeedField::new(0.0, WorldSeed(9)).unwrap();
        let times =
            PassageTimeField::new(1.0, WorldSeed(9)).unwrap().with_overrides(unit_overrides());
        let result = run(w, &seeds, &times, StopCondition::quiescence()).unwrap();
        let st = ScaleTable::new(6, 2, 1).unwrap();
        let (t, site) = result
            .box_entrance_time(&st, &BoxIndex::new(1, vec![0, 0]))
            .unwrap()
            .unwrap();
        assert_eq!(t, 0.0);
        assert_eq!(site, Site::origin(2));
        // Unit times create ties; the lexicographically smallest argmin wins.
        let off = st
            .box_of(&BoxIndex::new(1, vec![1, 1]))
            .unwrap()
            .intersect(&Window::new(2, 3).unwrap().as_range());
        let mut best: Option<(f64, Site)> = None;
        for s in off.iter() {
            let t = result.entrance_time(&s).unwrap().unwrap();
            match &best {
                Some((bt, _)) if *bt <= t => {}
                _ => best = Some((t, s)),
            }
        }
        let got = result
            .box_entrance_time(&st, &BoxIndex::new(1, vec![1, 1]))
            .unwrap()
            .unwrap();
        assert_eq!(got.0, best.as_ref().unwrap().0);
        assert_eq!(got.1, best.unwrap().1);
    }

    #[test]
    fn entrance_time_outside_window_is_an_error() {
        let w = Window::new(2, 2).unwrap();
        let seeds = SeedField::new(0.0, WorldSeed(10)).unwrap();
        let times = PassageTimeField::new(1.0, WorldSeed(10)).unwrap();
        let result = run(w, &seeds, &times, StopCondition::quiescence()).unwrap();
        assert!(result.entrance_time(&Site(vec![5, 5])).is_err());
    }

    #[test]
    fn empty_stop_condition_rejected() {
        let stop = StopCondition {
            time_horizon: None,
            max_occupied: None,
            first_boundary_hit_by: None,
            quiescence: false,
        };
        let w = Window::new(2, 2).unwrap();
        let seeds = SeedField::new(0.0, WorldSeed(11)).unwrap();
        let times = PassageTimeField::new(1.0, WorldSeed(11)).unwrap();
        assert!(run(w, &seeds, &times, stop).is_err());
    }

    #[test]
    fn boundary_stop_triggers() {
        let w = Window::new(2, 2).unwrap();
        let seeds = SeedField::new(0.0, WorldSeed(12)).unwrap();
        let times = PassageTimeField::new(1.0, WorldSeed(12)).unwrap();
        let result = run(
            w,
            &seeds,
            &times,
            StopCondition::boundary(ProcessFilter::Fpp1),
        )
        .unwrap();
        assert_eq!(result.stop_reason(), StopReason::BoundaryHit);
        assert!(!result.boundary_hits().is_empty());
    }
}
