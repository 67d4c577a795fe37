//! Multi-scale classification of finished realizations.
//!
//! Scale-1 boxes are good when the five scale-1 events (optionally six) all
//! hold; a box at scale k >= 2 is good when it contains at most `A` pairwise
//! disjoint bad (k-1)-boxes. Good, entered boxes additionally carry a
//! positive/negative feedback label measuring whether the rate-1 process
//! reached the designated interior set quickly after the box was first
//! entered. Parents, progenitors, clusters and the timing properties are
//! post-hoc analyses over the resulting report table.
//!
//! Classification is a pure function of (run, fields, parameters); the
//! pipeline runs in two phases: geometry (goodness, entrances, parents,
//! cluster shapes) and dynamics (feedback, progenitors, confinement), so
//! per-box work parallelizes freely within each phase.

mod annulus;
mod clusters;
mod constants;
mod disjoint;
mod lineage;
mod properties;

pub use annulus::{annulus_check, AnnulusVerdict};
pub use clusters::{
    build_clusters, source_of, wonderful_inner, Cluster, ClusterKind, ClusterStructure,
    Confinement, WonderfulInner,
};
pub use constants::{constants_table, ConstantsTable};
pub use disjoint::{max_disjoint_boxes, DisjointCount};
pub use lineage::{progenitor, site_progenitor, trace_path_of_jumps, JumpTrail, TrailEnd};
pub use properties::{check_properties, density_lower_bound, PropertyKind, PropertyReport};

use crate::engine::{RunResult, SiteState};
use crate::lattice::{BoxIndex, LatticeError, ScaleTable, Site, Window};
use crate::percolation::{
    check_e1, check_e2, check_e3, check_e4, check_e5, check_e6, filled_seeds,
    nonseed_components_in_box, BoxSubgraph, ComponentLabeling, FilledSeedField, PairSampling,
    PercolationError,
};
use crate::randomness::{PassageTimeField, SeedField};
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MultiscaleError {
    #[error("invalid analysis parameter: {0}")]
    BadParameter(String),
    #[error("box {0:?} at scale {1} has unclassified sub-boxes")]
    UnclassifiedSubBoxes(Vec<i64>, usize),
    #[error("box {0:?} is not classified")]
    MissingReport(Vec<i64>),
    #[error("operation requires a good box, got a bad one at {0:?}")]
    NotGood(Vec<i64>),
    #[error("operation requires a bad or negative-feedback box at {0:?}")]
    NotBadOrNegative(Vec<i64>),
    #[error("inner-wonderful set is not a single connected component in box {0:?}")]
    ConnectivityDefect(Vec<i64>),
    #[error("box straddles or lies outside the window")]
    BoxNotInsideWindow,
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Percolation(#[from] PercolationError),
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
}

/// Parameters of the multi-scale analysis. `a2..a9` have no canonical values
/// and default to 1.0; `lambda_bar` defaults to infinity so the rate
/// threshold reduces to its explicit term.
#[derive(Debug, Clone)]
pub struct AnalysisParams {
    pub eps: f64,
    pub c1: f64,
    pub c2: f64,
    pub big_a: u32,
    pub big_c: f64,
    pub l1: i64,
    pub k_max: usize,
    pub d: usize,
    pub p: f64,
    pub lambda: f64,
    /// a2..a9, indexed by `a(n)`.
    pub a_consts: [f64; 8],
    pub lambda_bar: f64,
    pub sigma_override: Option<u32>,
    pub enable_e6: bool,
    pub sampling: PairSampling,
}

impl AnalysisParams {
    pub fn new(
        d: usize,
        p: f64,
        lambda: f64,
        l1: i64,
        k_max: usize,
    ) -> Result<Self, MultiscaleError> {
        let params = AnalysisParams {
            eps: 0.1,
            c1: 5.0,
            c2: 5.0,
            big_a: (d + 1) as u32,
            big_c: 1.0,
            l1,
            k_max,
            d,
            p,
            lambda,
            a_consts: [1.0; 8],
            lambda_bar: f64::INFINITY,
            sigma_override: None,
            enable_e6: false,
            sampling: PairSampling::default(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), MultiscaleError> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(MultiscaleError::BadParameter(format!(
                "eps must be in (0,1), got {}",
                self.eps
            )));
        }
        if self.c1 < 1.0 {
            return Err(MultiscaleError::BadParameter("c1 must be >= 1".into()));
        }
        if self.c2 <= 1.0 {
            return Err(MultiscaleError::BadParameter("c2 must be > 1".into()));
        }
        if self.big_a as usize <= self.d {
            return Err(MultiscaleError::BadParameter(format!(
                "A must exceed the dimension: A = {}, d = {}",
                self.big_a, self.d
            )));
        }
        if !(self.big_c > 0.0) {
            return Err(MultiscaleError::BadParameter("C must be positive".into()));
        }
        Ok(())
    }

    /// The proof constant `a_n` for n in 2..=9.
    pub fn a(&self, n: usize) -> f64 {
        self.a_consts[n - 2]
    }

    /// `r_1 = d * c2`.
    pub fn r1(&self) -> f64 {
        self.d as f64 * self.c2
    }

    /// Rate threshold `lambda_x = min(lambda_bar, 1 / ((x + r1)^2 L1^2))`.
    pub fn lambda_x(&self, x: f64) -> f64 {
        let l1 = self.l1 as f64;
        self.lambda_bar.min(1.0 / ((x + self.r1()).powi(2) * l1 * l1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Goodness {
    Good,
    Bad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feedback {
    Positive,
    Negative,
    /// Bad boxes carry no timeliness classification.
    UnclassifiedBad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scale1Flags {
    pub e1: bool,
    pub e2: bool,
    pub e3: bool,
    pub e4: bool,
    pub e5: bool,
    pub e6: Option<bool>,
}

impl Scale1Flags {
    pub fn all_pass(&self) -> bool {
        self.e1 && self.e2 && self.e3 && self.e4 && self.e5 && self.e6.unwrap_or(true)
    }
}

/// Everything known about one classified box.
#[derive(Debug, Clone)]
pub struct BoxReport {
    pub idx: BoxIndex,
    pub goodness: Goodness,
    pub scale1_flags: Option<Scale1Flags>,
    /// Raw number of bad (k-1)-boxes contained in the box (k >= 2).
    pub bad_subbox_count: Option<usize>,
    /// Maximum number of pairwise disjoint bad (k-1)-boxes, with exactness flag.
    pub disjoint_bad: Option<DisjointCount>,
    pub feedback: Option<Feedback>,
    pub entrance: Option<(f64, Site)>,
    pub parent: Option<BoxIndex>,
    pub progenitor: Option<BoxIndex>,
}

impl BoxReport {
    pub fn new(idx: BoxIndex, goodness: Goodness) -> Self {
        let feedback = match goodness {
            Goodness::Bad => Some(Feedback::UnclassifiedBad),
            Goodness::Good => None,
        };
        BoxReport {
            idx,
            goodness,
            scale1_flags: None,
            bad_subbox_count: None,
            disjoint_bad: None,
            feedback,
            entrance: None,
            parent: None,
            progenitor: None,
        }
    }

    pub fn is_good(&self) -> bool {
        self.goodness == Goodness::Good
    }

    pub fn is_bad_or_negative(&self) -> bool {
        self.goodness == Goodness::Bad || self.feedback == Some(Feedback::Negative)
    }

    pub fn tau(&self) -> Option<f64> {
        self.entrance.as_ref().map(|(t, _)| *t)
    }
}

/// All box reports of an analysis, indexed by scale and box index.
#[derive(Debug, Clone, Default)]
pub struct ReportTable {
    by_scale: BTreeMap<usize, BTreeMap<Vec<i64>, BoxReport>>,
}

impl ReportTable {
    pub fn new() -> Self {
        ReportTable::default()
    }

    pub fn insert(&mut self, report: BoxReport) {
        self.by_scale
            .entry(report.idx.k)
            .or_default()
            .insert(report.idx.i.clone(), report);
    }

    pub fn get(&self, k: usize, i: &[i64]) -> Option<&BoxReport> {
        self.by_scale.get(&k).and_then(|m| m.get(i))
    }

    pub fn get_mut(&mut self, k: usize, i: &[i64]) -> Option<&mut BoxReport> {
        self.by_scale.get_mut(&k).and_then(|m| m.get_mut(i))
    }

    pub fn get_idx(&self, idx: &BoxIndex) -> Option<&BoxReport> {
        self.get(idx.k, &idx.i)
    }

    pub fn scale(&self, k: usize) -> impl Iterator<Item = &BoxReport> {
        self.by_scale.get(&k).into_iter().flat_map(|m| m.values())
    }

    pub fn scale_count(&self, k: usize) -> usize {
        self.by_scale.get(&k).map(|m| m.len()).unwrap_or(0)
    }

    pub fn scales(&self) -> impl Iterator<Item = usize> + '_ {
        self.by_scale.keys().copied()
    }

    pub fn all(&self) -> impl Iterator<Item = &BoxReport> {
        self.by_scale.values().flat_map(|m| m.values())
    }
}

/// Static ingredients of scale-1 classification shared across boxes.
pub struct Scale1Context<'a> {
    pub field: &'a SeedField,
    pub times: &'a PassageTimeField,
    pub st: &'a ScaleTable,
    pub params: &'a AnalysisParams,
    pub theta_hat: f64,
    pub filled: Option<&'a FilledSeedField>,
}

/// Classify one scale-1 box from the static fields: the five events, plus the
/// filled-seed event when enabled.
pub fn classify_scale1(
    ctx: &Scale1Context<'_>,
    idx: &BoxIndex,
) -> Result<(BoxReport, ComponentLabeling), MultiscaleError> {
    let labeling = nonseed_components_in_box(ctx.field, ctx.st, idx)?;
    let box_range = ctx.st.box_of(idx)?;
    let sub = BoxSubgraph::nonseed(ctx.field, box_range.clone(), true);
    let world = ctx.field.world();
    let e1 = check_e1(&labeling, ctx.st, idx, ctx.params.eps, ctx.theta_hat)?;
    let e2 = check_e2(&labeling);
    let e3 = check_e3(&labeling, &sub, ctx.st, ctx.params.c1, &ctx.params.sampling, world)?;
    let e4 = check_e4(
        &labeling,
        &sub,
        ctx.st,
        ctx.times,
        ctx.params.c2,
        &ctx.params.sampling,
        world,
    )?;
    let e5 = check_e5(ctx.times, &box_range, ctx.params.lambda);
    let e6 = if ctx.params.enable_e6 {
        let filled = ctx.filled.ok_or_else(|| {
            MultiscaleError::BadParameter("E6 enabled but no filled-seed field supplied".into())
        })?;
        Some(check_e6(filled, ctx.st, idx)?)
    } else {
        None
    };
    let flags = Scale1Flags {
        e1,
        e2,
        e3,
        e4,
        e5,
        e6,
    };
    let goodness = if flags.all_pass() {
        Goodness::Good
    } else {
        Goodness::Bad
    };
    let mut report = BoxReport::new(idx.clone(), goodness);
    report.scale1_flags = Some(flags);
    Ok((report, labeling))
}

/// Classify a box at scale k >= 2: good iff it contains no more than `A`
/// pairwise disjoint bad (k-1)-boxes. Every contained (k-1)-box must already
/// be classified.
pub fn classify_scalek(
    reports: &ReportTable,
    st: &ScaleTable,
    idx: &BoxIndex,
    params: &AnalysisParams,
) -> Result<BoxReport, MultiscaleError> {
    assert!(idx.k >= 2);
    let ranges = clusters::contained_index_ranges(st, idx)?;
    let expected: u128 = ranges
        .iter()
        .map(|r| (r.end() - r.start() + 1) as u128)
        .product();
    let classified = reports
        .scale(idx.k - 1)
        .filter(|r| clusters::index_in_ranges(&r.idx.i, &ranges))
        .count() as u128;
    if classified < expected {
        return Err(MultiscaleError::UnclassifiedSubBoxes(idx.i.clone(), idx.k));
    }
    let bad: Vec<Vec<i64>> = reports
        .scale(idx.k - 1)
        .filter(|r| r.goodness == Goodness::Bad && clusters::index_in_ranges(&r.idx.i, &ranges))
        .map(|r| r.idx.i.clone())
        .collect();
    let disjoint = max_disjoint_boxes(&bad);
    let goodness = if disjoint.count as u32 <= params.big_a {
        Goodness::Good
    } else {
        Goodness::Bad
    };
    let mut report = BoxReport::new(idx.clone(), goodness);
    report.bad_subbox_count = Some(bad.len());
    report.disjoint_bad = Some(disjoint);
    Ok(report)
}

/// Positive feedback at scale 1: some rate-1-occupied site of the interior
/// giant component is reached within `r1 * L1` of the box entrance.
pub fn feedback_scale1(
    run: &RunResult,
    labeling: &ComponentLabeling,
    report: &BoxReport,
    r1: f64,
    l1: i64,
) -> Result<Option<Feedback>, MultiscaleError> {
    if report.goodness == Goodness::Bad {
        return Ok(Some(Feedback::UnclassifiedBad));
    }
    let (tau_box, _) = match &report.entrance {
        None => return Ok(None), // never entered: unlabeled
        Some(e) => e,
    };
    let deadline = tau_box + r1 * l1 as f64;
    for v in labeling.c1_minus_sites() {
        if run.state_of(&v)? == SiteState::Fpp1 {
            if let Some(t) = run.entrance_time(&v)? {
                if t <= deadline {
                    return Ok(Some(Feedback::Positive));
                }
            }
        }
    }
    Ok(Some(Feedback::Negative))
}

/// Positive feedback at scale k >= 2: some positive-feedback (k-1)-box of the
/// inner-wonderful set is entered within `(3/500) r_k L_k` of the box
/// entrance.
pub fn feedback_scalek(
    reports: &ReportTable,
    w_inn: &WonderfulInner,
    report: &BoxReport,
    constants: &ConstantsTable,
) -> Result<Option<Feedback>, MultiscaleError> {
    if report.goodness == Goodness::Bad {
        return Ok(Some(Feedback::UnclassifiedBad));
    }
    let k = report.idx.k;
    let (tau_box, _) = match &report.entrance {
        None => return Ok(None),
        Some(e) => e,
    };
    let deadline = tau_box + (3.0 / 500.0) * constants.r(k) * constants.length_f64(k);
    for sub in reports.scale(k - 1) {
        if sub.feedback == Some(Feedback::Positive) && w_inn.contains(&sub.idx.i) {
            if let Some(t) = sub.tau() {
                if t < deadline {
                    return Ok(Some(Feedback::Positive));
                }
            }
        }
    }
    Ok(Some(Feedback::Negative))
}

/// The parent of a box: the same-scale box whose core contains the entry
/// site.
pub fn parent_of(st: &ScaleTable, entry: &Site, k: usize) -> Result<BoxIndex, MultiscaleError> {
    Ok(st.core_index_containing(entry, k)?)
}

/// A finished analysis of one run.
pub struct Analysis {
    pub params: AnalysisParams,
    pub st: ScaleTable,
    pub theta_hat: f64,
    pub reports: ReportTable,
    /// Boxes intersecting but not contained in the window; never classified.
    pub indeterminate: Vec<BoxIndex>,
    pub cluster_structures: BTreeMap<(usize, Vec<i64>), ClusterStructure>,
    pub sigma_empirical: u32,
    pub constants: ConstantsTable,
}

impl Analysis {
    pub fn cluster_structure(&self, idx: &BoxIndex) -> Option<&ClusterStructure> {
        self.cluster_structures.get(&(idx.k, idx.i.clone()))
    }

    /// True when `s` lies in no cluster at any analyzed scale and belongs to
    /// the giant component of its core's 1-box.
    pub fn flawless(&self, field: &SeedField, s: &Site) -> Result<bool, MultiscaleError> {
        for cs in self.cluster_structures.values() {
            for cluster in &cs.clusters {
                for member in &cluster.members {
                    let sub_idx = BoxIndex::new(cs.sub_scale(), member.clone());
                    if self.st.box_of(&sub_idx)?.contains(s) {
                        return Ok(false);
                    }
                }
            }
        }
        let core_box = self.st.core_index_containing(s, 1)?;
        let labeling = nonseed_components_in_box(field, &self.st, &core_box)?;
        Ok(labeling.in_c1(s))
    }
}

/// Classify every box of every scale that fits inside the run's window, then
/// derive entrances, parents, feedback labels, clusters and progenitors.
pub fn classify_run(
    run: &RunResult,
    field: &SeedField,
    times: &PassageTimeField,
    params: &AnalysisParams,
    theta_hat: f64,
) -> Result<Analysis, MultiscaleError> {
    params.validate()?;
    let window = run.window();
    let st = ScaleTable::new(params.l1, params.d, params.k_max)?;
    let filled = if params.enable_e6 {
        Some(filled_seeds(field, window))
    } else {
        None
    };
    let ctx = Scale1Context {
        field,
        times,
        st: &st,
        params,
        theta_hat,
        filled: filled.as_ref(),
    };

    let mut reports = ReportTable::new();
    let mut indeterminate = Vec::new();
    let mut cluster_structures = BTreeMap::new();

    // Geometry phase, scale 1: goodness, entrance, parent.
    let inside = st.boxes_inside_window(1, window)?;
    indeterminate.extend(straddling_boxes(&st, 1, window)?);
    let classified: Vec<BoxReport> = inside
        .par_iter()
        .map(|idx| classify_scale1(&ctx, idx).map(|(r, _)| r))
        .collect::<Result<_, _>>()?;
    for mut report in classified {
        attach_entrance(run, &st, &mut report)?;
        reports.insert(report);
    }

    // Geometry phase, higher scales: goodness, entrance, parent, cluster
    // shapes.
    for k in 2..=params.k_max {
        let inside = st.boxes_inside_window(k, window)?;
        indeterminate.extend(straddling_boxes(&st, k, window)?);
        for idx in inside {
            let mut report = classify_scalek(&reports, &st, &idx, params)?;
            attach_entrance(run, &st, &mut report)?;
            if report.goodness == Goodness::Good {
                let cs = clusters::build_clusters(&reports, &st, &idx)?;
                cluster_structures.insert((k, idx.i.clone()), cs);
            }
            reports.insert(report);
        }
    }

    // Empirical sigma: the largest observed cluster-plus-boundary footprint.
    let sigma_empirical = cluster_structures
        .values()
        .flat_map(|cs| cs.clusters.iter())
        .map(|c| (c.members.len() + c.outer_boundary.len()) as u32)
        .max()
        .unwrap_or(0);
    let sigma = params.sigma_override.unwrap_or(sigma_empirical.max(1));
    let constants = constants_table(params, sigma)?;

    // Dynamics phase, scale 1: feedback then progenitors.
    let scale1_ids: Vec<Vec<i64>> = reports.scale(1).map(|r| r.idx.i.clone()).collect();
    let feedback: Vec<(Vec<i64>, Option<Feedback>)> = scale1_ids
        .par_iter()
        .map(|i| {
            let report = reports.get(1, i).unwrap();
            let labeling =
                nonseed_components_in_box(field, &st, &report.idx).map_err(MultiscaleError::from)?;
            let fb = feedback_scale1(run, &labeling, report, params.r1(), params.l1)?;
            Ok((i.clone(), fb))
        })
        .collect::<Result<_, MultiscaleError>>()?;
    for (i, fb) in feedback {
        reports.get_mut(1, &i).unwrap().feedback = fb;
    }
    assign_progenitors(&mut reports, 1);

    // Dynamics phase, higher scales: confinement, feedback, progenitors.
    for k in 2..=params.k_max {
        let ids: Vec<Vec<i64>> = reports.scale(k).map(|r| r.idx.i.clone()).collect();
        for i in &ids {
            if let Some(cs) = cluster_structures.get_mut(&(k, i.clone())) {
                clusters::assign_confinement(cs, &reports);
            }
        }
        for i in &ids {
            let report = reports.get(k, i).unwrap();
            if report.goodness == Goodness::Bad {
                continue;
            }
            let fb = match cluster_structures.get(&(k, i.clone())) {
                Some(cs) => {
                    match clusters::wonderful_inner(cs, &st) {
                        Ok(w_inn) => feedback_scalek(&reports, &w_inn, report, &constants)?,
                        // Inner parts need L_k divisible by 1000; without them
                        // higher-scale feedback is undefined.
                        Err(MultiscaleError::Lattice(LatticeError::InnerPartUnavailable(
                            ..,
                        ))) => None,
                        Err(e) => return Err(e),
                    }
                }
                None => None,
            };
            reports.get_mut(k, i).unwrap().feedback = fb;
        }
        assign_progenitors(&mut reports, k);
    }

    Ok(Analysis {
        params: params.clone(),
        st,
        theta_hat,
        reports,
        indeterminate,
        cluster_structures,
        sigma_empirical,
        constants,
    })
}

fn attach_entrance(
    run: &RunResult,
    st: &ScaleTable,
    report: &mut BoxReport,
) -> Result<(), MultiscaleError> {
    if let Some((t, site)) = run.box_entrance_time(st, &report.idx)? {
        report.parent = Some(parent_of(st, &site, report.idx.k)?);
        report.entrance = Some((t, site));
    }
    Ok(())
}

/// Assign progenitors to every bad or negative-feedback box at scale `k`.
fn assign_progenitors(reports: &mut ReportTable, k: usize) {
    let ids: Vec<Vec<i64>> = reports
        .scale(k)
        .filter(|r| r.is_bad_or_negative())
        .map(|r| r.idx.i.clone())
        .collect();
    for i in ids {
        let prog = progenitor(reports, &BoxIndex::new(k, i.clone())).ok().flatten();
        reports.get_mut(k, &i).unwrap().progenitor = prog;
    }
}

/// Boxes at scale `k` that intersect the window without being contained in
/// it. These are marked indeterminate, never classified.
fn straddling_boxes(
    st: &ScaleTable,
    k: usize,
    window: &Window,
) -> Result<Vec<BoxIndex>, MultiscaleError> {
    let l = match st.length_i64(k) {
        Ok(l) => l,
        Err(_) => return Ok(Vec::new()),
    };
    let (cell, half) = (l / 3, l / 2);
    // A box intersects the window iff |cell * i| <= half_side + half per
    // axis, and is contained iff |cell * i| <= half_side - half.
    let reach_any = (window.half_side() + half) / cell;
    let contained = |i: &[i64]| {
        window.half_side() >= half
            && i.iter().all(|&c| (c * cell).abs() <= window.half_side() - half)
    };
    let d = st.dim();
    let axis: Vec<i64> = (-reach_any..=reach_any).collect();
    let mut out = Vec::new();
    let mut cursor = vec![0usize; d];
    loop {
        let i: Vec<i64> = cursor.iter().map(|&c| axis[c]).collect();
        if !contained(&i) {
            out.push(BoxIndex::new(k, i));
        }
        let mut a = d;
        loop {
            if a == 0 {
                return Ok(out);
            }
            a -= 1;
            if cursor[a] + 1 < axis.len() {
                cursor[a] += 1;
                break;
            }
            cursor[a] = 0;
        }
    }
}
