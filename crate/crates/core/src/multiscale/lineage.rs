//! Parent and progenitor tracing, at box scales and at the site level.
//!
//! The parent of a box is the same-scale box whose core contains its entry
//! site; entrance times are non-increasing along parents. A bad or
//! negative-feedback box is traced back through bad-or-negative parents until
//! a box with a positive-feedback parent appears: the progenitor. At the
//! site level the same structure exists with sites as scale-0 boxes: the
//! progenitor of a site conquered by the rate-lambda process is the seed,
//! activated by the rate-1 process, that the conquest chain leads back to.

use super::clusters::{ClusterStructure, Confinement};
use super::{Feedback, MultiscaleError, ReportTable};
use crate::engine::{Process, RunResult, SiteState};
use crate::lattice::{BoxIndex, Site};
use std::collections::BTreeSet;

/// The progenitor of a bad or negative-feedback box: walk the parent chain
/// while boxes are bad-or-negative; the first box whose parent has positive
/// feedback is the progenitor. `None` (with the walk abandoned) when the
/// chain leaves the classified region or reaches the self-parent box without
/// meeting a positive-feedback parent.
pub fn progenitor(
    reports: &ReportTable,
    idx: &BoxIndex,
) -> Result<Option<BoxIndex>, MultiscaleError> {
    Ok(parent_path_to_progenitor(reports, idx)?.map(|(_, prog)| prog))
}

/// As [`progenitor`], also returning the path of parents from `idx` to the
/// progenitor inclusive.
pub fn parent_path_to_progenitor(
    reports: &ReportTable,
    idx: &BoxIndex,
) -> Result<Option<(Vec<BoxIndex>, BoxIndex)>, MultiscaleError> {
    let start = reports
        .get_idx(idx)
        .ok_or_else(|| MultiscaleError::MissingReport(idx.i.clone()))?;
    if !start.is_bad_or_negative() {
        return Err(MultiscaleError::NotBadOrNegative(idx.i.clone()));
    }
    let mut path = vec![idx.clone()];
    let mut visited: BTreeSet<Vec<i64>> = BTreeSet::from([idx.i.clone()]);
    let mut cur = idx.clone();
    loop {
        let report = reports
            .get_idx(&cur)
            .ok_or_else(|| MultiscaleError::MissingReport(cur.i.clone()))?;
        let parent = match &report.parent {
            None => return Ok(None), // entrance unknown: chain leaves the window
            Some(p) => p.clone(),
        };
        if parent == cur {
            // The box containing the origin is its own parent; if it is
            // still bad-or-negative there is no positive-feedback parent.
            return Ok(None);
        }
        let parent_report = match reports.get_idx(&parent) {
            None => return Ok(None), // parent unclassified (outside window)
            Some(r) => r,
        };
        if parent_report.feedback == Some(Feedback::Positive) {
            return Ok(Some((path, cur)));
        }
        if parent_report.is_bad_or_negative() {
            if !visited.insert(parent.i.clone()) {
                return Ok(None); // defensive: malformed synthetic tables
            }
            path.push(parent.clone());
            cur = parent;
            continue;
        }
        // Parent good but unlabeled (never entered): indeterminate.
        return Ok(None);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrailEnd {
    /// The progenitor lies outside every cluster of the enclosing box.
    OutsideClusters,
    /// The progenitor lies in a boundary cluster of the enclosing box.
    BoundaryCluster,
    /// A parent chain left the classified region.
    NoProgenitor,
    /// The cluster holding a progenitor has no negative outer-boundary box.
    NoSource,
    /// More jumps than clusters can support; recording stopped.
    JumpCapExceeded,
}

/// The diagnostic trail of parent paths and jumps followed from a bad or
/// negative-feedback box through poorly confined inner clusters of its
/// enclosing good box.
#[derive(Debug, Clone)]
pub struct JumpTrail {
    /// Parent paths, one per segment; each runs from a start box to its
    /// progenitor inclusive.
    pub segments: Vec<Vec<BoxIndex>>,
    pub jumps: usize,
    pub end: TrailEnd,
}

/// Follow sources across poorly confined inner clusters of the enclosing box
/// until a progenitor exits the clusters or lands in a boundary cluster. The
/// number of jumps can never exceed the number of clusters.
pub fn trace_path_of_jumps(
    reports: &ReportTable,
    enclosing: &ClusterStructure,
    start: &BoxIndex,
) -> Result<JumpTrail, MultiscaleError> {
    let mut segments = Vec::new();
    let mut jumps = 0usize;
    let mut cur = start.clone();
    let cap = enclosing.clusters.len();
    loop {
        let (segment, prog) = match parent_path_to_progenitor(reports, &cur)? {
            None => {
                return Ok(JumpTrail {
                    segments,
                    jumps,
                    end: TrailEnd::NoProgenitor,
                })
            }
            Some(x) => x,
        };
        segments.push(segment);
        match enclosing.cluster_containing(&prog.i) {
            None => {
                return Ok(JumpTrail {
                    segments,
                    jumps,
                    end: TrailEnd::OutsideClusters,
                })
            }
            Some(cidx) => {
                let cluster = &enclosing.clusters[cidx];
                if cluster.kind == super::ClusterKind::Boundary {
                    return Ok(JumpTrail {
                        segments,
                        jumps,
                        end: TrailEnd::BoundaryCluster,
                    });
                }
                debug_assert_ne!(cluster.confinement, Some(Confinement::Successful));
                let source = match &cluster.source {
                    None => {
                        return Ok(JumpTrail {
                            segments,
                            jumps,
                            end: TrailEnd::NoSource,
                        })
                    }
                    Some(s) => s.clone(),
                };
                jumps += 1;
                if jumps > cap {
                    return Ok(JumpTrail {
                        segments,
                        jumps,
                        end: TrailEnd::JumpCapExceeded,
                    });
                }
                cur = source;
            }
        }
    }
}

/// Scale-0 progenitor: the seed, activated by the rate-1 process, from which
/// the rate-lambda occupation of `v` descends.
pub fn site_progenitor(run: &RunResult, v: &Site) -> Result<Option<Site>, MultiscaleError> {
    let rec = run.record(v)?;
    if rec.state != SiteState::FppLambda {
        return Err(MultiscaleError::NotBadOrNegative(v.0.clone()));
    }
    let mut cur = v.clone();
    loop {
        let rec = run.record(&cur)?;
        if let Some(by) = rec.activated_by {
            if by == Process::Fpp1 {
                return Ok(Some(cur));
            }
        }
        match rec.conquering_neighbor {
            Some(p) => cur = p,
            None => return Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{BoxReport, Feedback, Goodness, ReportTable};
    use super::*;
    use crate::lattice::BoxIndex;

    fn report(
        i: Vec<i64>,
        goodness: Goodness,
        feedback: Option<Feedback>,
        parent: Option<Vec<i64>>,
        tau: f64,
    ) -> BoxReport {
        let mut r = BoxReport::new(BoxIndex::new(1, i), goodness);
        if feedback.is_some() {
            r.feedback = feedback;
        }
        r.parent = parent.map(|p| BoxIndex::new(1, p));
        r.entrance = Some((tau, crate::lattice::Site(vec![0, 0])));
        r
    }

    #[test]
    fn progenitor_chain_examples() {
        let mut t = ReportTable::new();
        // o-box positive; chain o <- a(neg) <- b(neg) <- c(bad).
        t.insert(report(vec![0, 0], Goodness::Good, Some(Feedback::Positive), Some(vec![0, 0]), 0.0));
        t.insert(report(vec![2, 0], Goodness::Good, Some(Feedback::Negative), Some(vec![0, 0]), 1.0));
        t.insert(report(vec![4, 0], Goodness::Good, Some(Feedback::Negative), Some(vec![2, 0]), 2.0));
        t.insert(report(vec![6, 0], Goodness::Bad, None, Some(vec![4, 0]), 3.0));

        // A bad box whose own parent is positive is its own progenitor.
        let bad_near = {
            let mut r = BoxReport::new(BoxIndex::new(1, vec![-2, 0]), Goodness::Bad);
            r.parent = Some(BoxIndex::new(1, vec![0, 0]));
            r.entrance = Some((1.0, crate::lattice::Site(vec![0, 0])));
            r
        };
        t.insert(bad_near);
        assert_eq!(
            progenitor(&t, &BoxIndex::new(1, vec![-2, 0])).unwrap(),
            Some(BoxIndex::new(1, vec![-2, 0]))
        );

        // Three-link chain: the negative box at the end traces to the box
        // whose parent is positive, here (2,0).
        assert_eq!(
            progenitor(&t, &BoxIndex::new(1, vec![6, 0])).unwrap(),
            Some(BoxIndex::new(1, vec![2, 0]))
        );
        let (path, prog) = parent_path_to_progenitor(&t, &BoxIndex::new(1, vec![6, 0]))
            .unwrap()
            .unwrap();
        assert_eq!(prog, BoxIndex::new(1, vec![2, 0]));
        assert_eq!(
            path,
            vec![
                BoxIndex::new(1, vec![6, 0]),
                BoxIndex::new(1, vec![4, 0]),
                BoxIndex::new(1, vec![2, 0])
            ]
        );

        // Positive-feedback input is a precondition error.
        assert!(matches!(
            progenitor(&t, &BoxIndex::new(1, vec![0, 0])),
            Err(MultiscaleError::NotBadOrNegative(_))
        ));
    }

    #[test]
    fn progenitor_absent_when_chain_exits() {
        let mut t = ReportTable::new();
        // Negative box whose parent is unclassified.
        t.insert(report(vec![0, 2], Goodness::Good, Some(Feedback::Negative), Some(vec![0, 4]), 1.0));
        assert_eq!(progenitor(&t, &BoxIndex::new(1, vec![0, 2])).unwrap(), None);

        // Self-parent still negative: no positive parent exists.
        let mut t = ReportTable::new();
        t.insert(report(vec![0, 0], Goodness::Good, Some(Feedback::Negative), Some(vec![0, 0]), 0.0));
        assert_eq!(progenitor(&t, &BoxIndex::new(1, vec![0, 0])).unwrap(), None);
    }
}
