//! Empirical verification of the fundamental timing properties on a
//! classified realization. Each property yields, per scale, the list of boxes
//! violating its inequality or implication; boxes whose entrance or
//! classification is undetermined are reported separately as indeterminate,
//! never as violations.

use super::clusters::{ClusterKind, ClusterStructure, Confinement};
use super::{
    constants::ConstantsTable, wonderful_inner, Feedback, Goodness, MultiscaleError, ReportTable,
};
use crate::engine::{RunResult, SiteState};
use crate::lattice::{BoxIndex, LatticeError, ScaleTable};
use crate::percolation::nonseed_components_in_box;
use crate::randomness::SeedField;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PropertyKind {
    /// Positive feedback cascades: at scale 1, every interior giant-component
    /// site of a positive box is occupied by the rate-1 process; at higher
    /// scales, every inner-wonderful sub-box of a positive box has positive
    /// feedback.
    Cascade,
    /// The parent of a negative-feedback box is bad or negative.
    Progenitor,
    /// A good box next to a positive box is entered within `2 r_k L_k`.
    Fast,
    /// A negative box with a negative parent is entered at least
    /// `C omega_k L_k` after it.
    Delay,
    /// Sources of poorly confined inner clusters have progenitors outside the
    /// cluster and are entered within `2 sigma r_k L_k` of the boundary.
    Confinement,
}

impl PropertyKind {
    pub fn name(self) -> &'static str {
        match self {
            PropertyKind::Cascade => "cascade",
            PropertyKind::Progenitor => "progenitor",
            PropertyKind::Fast => "fast",
            PropertyKind::Delay => "delay",
            PropertyKind::Confinement => "confinement",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PropertyEntry {
    pub violations: Vec<BoxIndex>,
    pub indeterminate: Vec<BoxIndex>,
}

#[derive(Debug, Clone, Default)]
pub struct PropertyReport {
    entries: BTreeMap<(PropertyKind, usize), PropertyEntry>,
}

impl PropertyReport {
    pub fn entry(&self, kind: PropertyKind, scale: usize) -> Option<&PropertyEntry> {
        self.entries.get(&(kind, scale))
    }

    fn slot(&mut self, kind: PropertyKind, scale: usize) -> &mut PropertyEntry {
        self.entries.entry((kind, scale)).or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(PropertyKind, usize), &PropertyEntry)> {
        self.entries.iter()
    }

    pub fn total_violations(&self) -> usize {
        self.entries.values().map(|e| e.violations.len()).sum()
    }

    pub fn violations(&self, kind: PropertyKind, scale: usize) -> usize {
        self.entry(kind, scale).map(|e| e.violations.len()).unwrap_or(0)
    }
}

/// Check every fundamental property at the requested scales. `run` and
/// `field` are needed for the scale-1 cascade (site-level occupancy); when
/// absent, that check is skipped.
#[allow(clippy::too_many_arguments)]
pub fn check_properties(
    run: Option<&RunResult>,
    field: Option<&SeedField>,
    st: &ScaleTable,
    reports: &ReportTable,
    cluster_structures: &BTreeMap<(usize, Vec<i64>), ClusterStructure>,
    constants: &ConstantsTable,
    scales: &[usize],
    big_c: f64,
) -> Result<PropertyReport, MultiscaleError> {
    let mut out = PropertyReport::default();
    for &k in scales {
        cascade_at(&mut out, run, field, st, reports, cluster_structures, constants, k)?;
        progenitor_at(&mut out, reports, k);
        fast_at(&mut out, reports, constants, k);
        delay_at(&mut out, reports, constants, big_c, k);
        confinement_at(&mut out, reports, cluster_structures, constants, k);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn cascade_at(
    out: &mut PropertyReport,
    run: Option<&RunResult>,
    field: Option<&SeedField>,
    st: &ScaleTable,
    reports: &ReportTable,
    cluster_structures: &BTreeMap<(usize, Vec<i64>), ClusterStructure>,
    constants: &ConstantsTable,
    k: usize,
) -> Result<(), MultiscaleError> {
    let entry = out.slot(PropertyKind::Cascade, k);
    if k == 1 {
        let (run, field) = match (run, field) {
            (Some(r), Some(f)) => (r, f),
            _ => return Ok(()),
        };
        for report in reports.scale(1) {
            if report.feedback != Some(Feedback::Positive) {
                continue;
            }
            let labeling = nonseed_components_in_box(field, st, &report.idx)?;
            let mut violated = false;
            let mut unresolved = false;
            for v in labeling.c1_minus_sites() {
                match run.state_of(&v)? {
                    SiteState::Fpp1 => {}
                    SiteState::FppLambda => violated = true,
                    // Unoccupied interior sites mean the run stopped before
                    // the box resolved.
                    SiteState::Empty | SiteState::Seed => unresolved = true,
                }
            }
            if violated {
                entry.violations.push(report.idx.clone());
            } else if unresolved {
                entry.indeterminate.push(report.idx.clone());
            }
        }
        return Ok(());
    }
    for report in reports.scale(k) {
        if report.feedback != Some(Feedback::Positive) {
            continue;
        }
        let cs = match cluster_structures.get(&(k, report.idx.i.clone())) {
            Some(cs) => cs,
            None => {
                entry.indeterminate.push(report.idx.clone());
                continue;
            }
        };
        let w_inn = match wonderful_inner(cs, st) {
            Ok(w) => w,
            Err(MultiscaleError::Lattice(LatticeError::InnerPartUnavailable(..))) => {
                entry.indeterminate.push(report.idx.clone());
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut violated = false;
        let mut unresolved = false;
        for sub in reports.scale(k - 1) {
            if !w_inn.contains(&sub.idx.i) {
                continue;
            }
            match sub.feedback {
                Some(Feedback::Positive) => {}
                Some(Feedback::Negative) => violated = true,
                Some(Feedback::UnclassifiedBad) => violated = true, // bad in W^inn
                None => unresolved = true,
            }
        }
        let _ = constants;
        if violated {
            entry.violations.push(report.idx.clone());
        } else if unresolved {
            entry.indeterminate.push(report.idx.clone());
        }
    }
    Ok(())
}

fn progenitor_at(out: &mut PropertyReport, reports: &ReportTable, k: usize) {
    let entry = out.slot(PropertyKind::Progenitor, k);
    for report in reports.scale(k) {
        if report.feedback != Some(Feedback::Negative) {
            continue;
        }
        let parent = match &report.parent {
            None => {
                entry.indeterminate.push(report.idx.clone());
                continue;
            }
            Some(p) => p,
        };
        match reports.get_idx(parent) {
            None => entry.indeterminate.push(report.idx.clone()),
            Some(pr) => {
                if pr.feedback == Some(Feedback::Positive) {
                    entry.violations.push(report.idx.clone());
                }
            }
        }
    }
}

fn fast_at(out: &mut PropertyReport, reports: &ReportTable, constants: &ConstantsTable, k: usize) {
    let entry = out.slot(PropertyKind::Fast, k);
    let slack = 2.0 * constants.r(k) * constants.length_f64(k);
    let positive: Vec<(&Vec<i64>, f64)> = reports
        .scale(k)
        .filter(|r| r.feedback == Some(Feedback::Positive))
        .filter_map(|r| r.tau().map(|t| (&r.idx.i, t)))
        .collect();
    for report in reports.scale(k) {
        if report.goodness != Goodness::Good {
            continue;
        }
        let near_positive: Vec<f64> = positive
            .iter()
            .filter(|(j, _)| {
                report
                    .idx
                    .i
                    .iter()
                    .zip(j.iter())
                    .map(|(a, b)| a.abs_diff(*b))
                    .max()
                    .unwrap_or(0)
                    == 1
            })
            .map(|(_, t)| *t)
            .collect();
        if near_positive.is_empty() {
            continue;
        }
        match report.tau() {
            None => entry.indeterminate.push(report.idx.clone()),
            Some(tau) => {
                if near_positive.iter().any(|tj| !(tau < tj + slack)) {
                    entry.violations.push(report.idx.clone());
                }
            }
        }
    }
}

fn delay_at(
    out: &mut PropertyReport,
    reports: &ReportTable,
    constants: &ConstantsTable,
    big_c: f64,
    k: usize,
) {
    let entry = out.slot(PropertyKind::Delay, k);
    let needed = big_c * constants.omega(k) * constants.length_f64(k);
    for report in reports.scale(k) {
        if report.feedback != Some(Feedback::Negative) {
            continue;
        }
        let parent = match &report.parent {
            None => {
                entry.indeterminate.push(report.idx.clone());
                continue;
            }
            Some(p) => p.clone(),
        };
        let parent_report = match reports.get_idx(&parent) {
            None => {
                entry.indeterminate.push(report.idx.clone());
                continue;
            }
            Some(r) => r,
        };
        if parent_report.feedback != Some(Feedback::Negative) {
            continue;
        }
        match (report.tau(), parent_report.tau()) {
            (Some(t), Some(tp)) => {
                if !(t > tp + needed) {
                    entry.violations.push(report.idx.clone());
                }
            }
            _ => entry.indeterminate.push(report.idx.clone()),
        }
    }
}

fn confinement_at(
    out: &mut PropertyReport,
    reports: &ReportTable,
    cluster_structures: &BTreeMap<(usize, Vec<i64>), ClusterStructure>,
    constants: &ConstantsTable,
    k: usize,
) {
    let entry = out.slot(PropertyKind::Confinement, k);
    let slack = 2.0 * constants.sigma as f64 * constants.r(k) * constants.length_f64(k);
    // Clusters of (k+1)-boxes hold k-boxes.
    for ((scale, _), cs) in cluster_structures.iter() {
        if *scale != k + 1 {
            continue;
        }
        for cluster in &cs.clusters {
            if cluster.kind != ClusterKind::Inner
                || cluster.confinement != Some(Confinement::Poor)
            {
                continue;
            }
            let source = match &cluster.source {
                None => continue,
                Some(s) => s.clone(),
            };
            let source_report = match reports.get_idx(&source) {
                None => {
                    entry.indeterminate.push(source.clone());
                    continue;
                }
                Some(r) => r,
            };
            // Progenitor of the source must leave the cluster.
            let prog_inside = source_report
                .progenitor
                .as_ref()
                .map(|p| cluster.contains_index(&p.i))
                .unwrap_or(false);
            // Entrance comparison against the earliest outer-boundary box.
            let tau_b = cluster
                .outer_boundary
                .iter()
                .filter_map(|i| reports.get(k, i))
                .filter_map(|r| r.tau())
                .fold(f64::INFINITY, f64::min);
            match source_report.tau() {
                None => entry.indeterminate.push(source),
                Some(tau_s) => {
                    if prog_inside || !(tau_s < tau_b + slack) {
                        entry.violations.push(source);
                    }
                }
            }
        }
    }
}

/// Per-site lower bound on the density the rate-1 process occupies inside a
/// fully positive-feedback box: `3^{-d} * zeta * (1 - eps) * theta`.
pub fn density_lower_bound(theta_hat: f64, eps: f64, zeta: f64, d: usize) -> f64 {
    3f64.powi(-(d as i32)) * zeta * (1.0 - eps) * theta_hat
}
