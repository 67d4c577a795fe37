//! Cluster geometry inside a good box at scale k >= 2.
//!
//! Starting from the bad (k-1)-boxes contained in the box, take every
//! contained (k-1)-box intersecting one of them, absorb the sub-boxes the set
//! disconnects from the box's index boundary, and split the result into
//! l-inf-connected components, the clusters. Each cluster carries its outer
//! boundary, a boundary/inner kind, and (after the dynamics phase) a
//! confinement verdict and source.

use super::{BoxReport, Feedback, Goodness, MultiscaleError, ReportTable};
use crate::lattice::{BoxIndex, ScaleTable, SiteRange};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::ops::RangeInclusive;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterKind {
    Inner,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Confinement {
    Successful,
    Poor,
}

#[derive(Debug, Clone)]
pub struct Cluster {
    /// (k-1)-box indices of the cluster, sorted.
    pub members: Vec<Vec<i64>>,
    /// Outer boundary: indices at l-inf distance 1 from the cluster, sorted.
    pub outer_boundary: Vec<Vec<i64>>,
    pub kind: ClusterKind,
    /// Set by the dynamics phase; only inner clusters are judged.
    pub confinement: Option<Confinement>,
    /// Negative-feedback outer-boundary box with the earliest entrance.
    pub source: Option<BoxIndex>,
}

impl Cluster {
    pub fn contains_index(&self, i: &[i64]) -> bool {
        self.members.binary_search_by(|m| m.as_slice().cmp(i)).is_ok()
    }

    pub fn footprint(&self) -> usize {
        self.members.len() + self.outer_boundary.len()
    }
}

#[derive(Debug, Clone)]
pub struct ClusterStructure {
    pub box_idx: BoxIndex,
    pub clusters: Vec<Cluster>,
}

impl ClusterStructure {
    /// Scale of the member boxes (one below the box scale).
    pub fn sub_scale(&self) -> usize {
        self.box_idx.k - 1
    }

    pub fn cluster_containing(&self, i: &[i64]) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains_index(i))
    }

    pub fn is_in_any_cluster(&self, i: &[i64]) -> bool {
        self.cluster_containing(i).is_some()
    }
}

/// Per-axis index ranges of (k-1)-boxes contained in the box at `idx`.
pub(super) fn contained_index_ranges(
    st: &ScaleTable,
    idx: &BoxIndex,
) -> Result<Vec<RangeInclusive<i64>>, MultiscaleError> {
    let k = idx.k;
    let l_k = st.length_i64(k)?;
    let l_sub = st.length_i64(k - 1)?;
    let (cell_k, cell_sub) = (l_k / 3, l_sub / 3);
    let slack = (l_k - l_sub) / 2;
    Ok(idx
        .i
        .iter()
        .map(|&c| {
            let centre = c * cell_k;
            let lo = div_ceil(centre - slack, cell_sub);
            let hi = (centre + slack).div_euclid(cell_sub);
            lo..=hi
        })
        .collect())
}

pub(super) fn index_in_ranges(i: &[i64], ranges: &[RangeInclusive<i64>]) -> bool {
    i.iter().zip(ranges).all(|(c, r)| r.contains(c))
}

fn div_ceil(a: i64, b: i64) -> i64 {
    let q = a.div_euclid(b);
    if a.rem_euclid(b) != 0 {
        q + 1
    } else {
        q
    }
}

fn linf(a: &[i64], b: &[i64]) -> u64 {
    a.iter().zip(b).map(|(x, y)| x.abs_diff(*y)).max().unwrap_or(0)
}

/// Build the clusters of the good box at `idx` from the classified
/// (k-1)-boxes. The caller guarantees goodness when driving the pipeline; a
/// bad box present in `reports` is rejected.
pub fn build_clusters(
    reports: &ReportTable,
    st: &ScaleTable,
    idx: &BoxIndex,
) -> Result<ClusterStructure, MultiscaleError> {
    if let Some(r) = reports.get_idx(idx) {
        if r.goodness == Goodness::Bad {
            return Err(MultiscaleError::NotGood(idx.i.clone()));
        }
    }
    let ranges = contained_index_ranges(st, idx)?;
    let bad: Vec<Vec<i64>> = reports
        .scale(idx.k - 1)
        .filter(|r| r.goodness == Goodness::Bad && index_in_ranges(&r.idx.i, &ranges))
        .map(|r| r.idx.i.clone())
        .collect();
    if bad.is_empty() {
        return Ok(ClusterStructure {
            box_idx: idx.clone(),
            clusters: Vec::new(),
        });
    }

    // Seed set: every contained box intersecting a bad box (l-inf <= 3).
    let mut seed_set: BTreeSet<Vec<i64>> = BTreeSet::new();
    let d = st.dim();
    for b in &bad {
        for off in crate::percolation::offsets_box(d, 3) {
            let j: Vec<i64> = b.iter().zip(&off).map(|(a, o)| a + o).collect();
            if index_in_ranges(&j, &ranges) {
                seed_set.insert(j);
            }
        }
    }

    // Fill step: absorb complement cells enclosed by the set, computed inside
    // the set's bounding box inflated by one and clipped to the contained
    // ranges. A complement component touching the (clipped) bounding-box
    // border can reach the box's index boundary and is not absorbed.
    let mut bbox: Vec<RangeInclusive<i64>> = Vec::with_capacity(d);
    for a in 0..d {
        let lo = seed_set.iter().map(|j| j[a]).min().unwrap();
        let hi = seed_set.iter().map(|j| j[a]).max().unwrap();
        bbox.push(
            (lo - 1).max(*ranges[a].start())..=(hi + 1).min(*ranges[a].end()),
        );
    }
    let volume: u128 = bbox
        .iter()
        .map(|r| (r.end() - r.start() + 1) as u128)
        .product();
    let mut filled = seed_set.clone();
    if volume <= 8_000_000 {
        let local = SiteRange::closed(
            bbox.iter().map(|r| *r.start()).collect(),
            bbox.iter().map(|r| *r.end()).collect(),
        );
        let n = local.site_count() as usize;
        let mut blocked = vec![false; n];
        for j in &seed_set {
            if let Some(p) = local.index_of(&crate::lattice::Site(j.clone())) {
                blocked[p] = true;
            }
        }
        // BFS over complement cells from the bbox border.
        let mut escapes = vec![false; n];
        let mut queue = VecDeque::new();
        for p in 0..n {
            if blocked[p] {
                continue;
            }
            let s = local.site_at(p);
            let on_border = s
                .0
                .iter()
                .enumerate()
                .any(|(a, &c)| c == *bbox[a].start() || c == *bbox[a].end());
            if on_border {
                escapes[p] = true;
                queue.push_back(p);
            }
        }
        while let Some(p) = queue.pop_front() {
            let s = local.site_at(p);
            for nb in s.neighbours() {
                if let Some(q) = local.index_of(&nb) {
                    if !blocked[q] && !escapes[q] {
                        escapes[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        for p in 0..n {
            if !blocked[p] && !escapes[p] {
                filled.insert(local.site_at(p).0);
            }
        }
    }
    // (Bounding boxes beyond the cap would only arise from far-apart bad
    // groups, which cannot jointly enclose anything at desk scale; the seed
    // set alone is then used.)

    // Split into l-inf-connected components.
    let mut remaining = filled.clone();
    let mut clusters = Vec::new();
    while let Some(start) = remaining.iter().next().cloned() {
        remaining.remove(&start);
        let mut members = vec![start.clone()];
        let mut queue = VecDeque::from([start]);
        while let Some(cur) = queue.pop_front() {
            let found: Vec<Vec<i64>> = remaining
                .iter()
                .filter(|j| linf(j, &cur) <= 1)
                .cloned()
                .collect();
            for j in found {
                remaining.remove(&j);
                members.push(j.clone());
                queue.push_back(j);
            }
        }
        members.sort();

        // Outer boundary in the full index lattice.
        let member_set: BTreeSet<&Vec<i64>> = members.iter().collect();
        let mut outer: BTreeSet<Vec<i64>> = BTreeSet::new();
        for m in &members {
            for off in crate::percolation::offsets_box(d, 1) {
                let j: Vec<i64> = m.iter().zip(&off).map(|(a, o)| a + o).collect();
                if !member_set.contains(&j) {
                    outer.insert(j);
                }
            }
        }

        // Kind: boundary iff some outer-boundary box reaches the boundary
        // ring of the k-box (equivalently is not strictly interior to it).
        let l_k = st.length_i64(idx.k)?;
        let l_sub = st.length_i64(idx.k - 1)?;
        let (cell_k, cell_sub) = (l_k / 3, l_sub / 3);
        let strict =
            |j: &Vec<i64>| -> bool {
                j.iter().zip(&idx.i).all(|(&jc, &ic)| {
                    (jc * cell_sub - ic * cell_k).abs() <= (l_k - l_sub) / 2 - 1
                })
            };
        let kind = if outer.iter().all(strict) {
            ClusterKind::Inner
        } else {
            ClusterKind::Boundary
        };
        clusters.push(Cluster {
            members,
            outer_boundary: outer.into_iter().collect(),
            kind,
            confinement: None,
            source: None,
        });
    }
    clusters.sort_by(|a, b| a.members[0].cmp(&b.members[0]));
    Ok(ClusterStructure {
        box_idx: idx.clone(),
        clusters,
    })
}

/// The source of a cluster: among negative-feedback boxes on the outer
/// boundary, the one with the smallest entrance time (ties lexicographic);
/// absent when the boundary carries no negative box.
pub fn source_of(cluster: &Cluster, reports: &ReportTable, k: usize) -> Option<BoxIndex> {
    let mut negatives: Vec<&BoxReport> = cluster
        .outer_boundary
        .iter()
        .filter_map(|i| reports.get(k, i))
        .filter(|r| r.feedback == Some(Feedback::Negative))
        .collect();
    negatives.sort_by(|a, b| {
        let ta = a.tau().unwrap_or(f64::INFINITY);
        let tb = b.tau().unwrap_or(f64::INFINITY);
        ta.total_cmp(&tb).then_with(|| a.idx.i.cmp(&b.idx.i))
    });
    negatives.first().map(|r| r.idx.clone())
}

/// Dynamics phase: sources and confinement verdicts from feedback labels and
/// progenitors of the member scale.
pub fn assign_confinement(cs: &mut ClusterStructure, reports: &ReportTable) {
    let k = cs.sub_scale();
    for cluster in &mut cs.clusters {
        cluster.source = source_of(cluster, reports, k);
        if cluster.kind == ClusterKind::Inner {
            let poor = cluster
                .outer_boundary
                .iter()
                .filter_map(|i| reports.get(k, i))
                .filter(|r| r.feedback == Some(Feedback::Negative))
                .any(|r| {
                    r.progenitor
                        .as_ref()
                        .map(|p| cluster.contains_index(&p.i))
                        .unwrap_or(false)
                });
            cluster.confinement = Some(if poor {
                Confinement::Poor
            } else {
                Confinement::Successful
            });
        }
    }
}

/// The inner-wonderful set of a good box: wonderful (k-1)-boxes contained in
/// the inner part, together with the outer boundaries of clusters whose outer
/// boundary meets the inner part.
pub struct WonderfulInner {
    contained: Vec<RangeInclusive<i64>>,
    inner_ok: Vec<RangeInclusive<i64>>,
    cluster_members: BTreeSet<Vec<i64>>,
    extras: BTreeSet<Vec<i64>>,
}

impl WonderfulInner {
    pub fn contains(&self, j: &[i64]) -> bool {
        if self.extras.contains(j) {
            return true;
        }
        index_in_ranges(j, &self.inner_ok) && !self.cluster_members.contains(j)
    }

    /// True when `j` is a wonderful box of the parent box (in no cluster),
    /// regardless of the inner part.
    pub fn is_wonderful(&self, j: &[i64]) -> bool {
        index_in_ranges(j, &self.contained) && !self.cluster_members.contains(j)
    }

    /// Materialize the membership when small enough to enumerate.
    pub fn enumerate(&self) -> Option<Vec<Vec<i64>>> {
        let volume: u128 = self
            .inner_ok
            .iter()
            .map(|r| ((r.end() - r.start() + 1).max(0)) as u128)
            .product();
        if volume > 400_000 {
            return None;
        }
        let mut out: BTreeSet<Vec<i64>> = self.extras.clone();
        let lo: Vec<i64> = self.inner_ok.iter().map(|r| *r.start()).collect();
        let hi: Vec<i64> = self.inner_ok.iter().map(|r| *r.end()).collect();
        if lo.iter().zip(&hi).all(|(a, b)| a <= b) {
            let range = SiteRange::closed(lo, hi);
            for s in range.iter() {
                if !self.cluster_members.contains(&s.0) {
                    out.insert(s.0);
                }
            }
        }
        Some(out.into_iter().collect())
    }

    /// Whether the membership forms a single l-inf-connected component;
    /// `None` when too large to enumerate.
    pub fn check_connected(&self) -> Option<bool> {
        let members = self.enumerate()?;
        if members.is_empty() {
            return Some(true);
        }
        let set: BTreeSet<&Vec<i64>> = members.iter().collect();
        let mut seen: BTreeSet<&Vec<i64>> = BTreeSet::new();
        let mut queue = VecDeque::from([&members[0]]);
        seen.insert(&members[0]);
        while let Some(cur) = queue.pop_front() {
            for other in &members {
                if !seen.contains(other) && linf(cur, other) <= 1 && set.contains(other) {
                    seen.insert(other);
                    queue.push_back(other);
                }
            }
        }
        Some(seen.len() == members.len())
    }

    /// Shortest path of member boxes between two members (l-inf steps), for
    /// bounding path lengths through the set.
    pub fn path_between(&self, a: &[i64], b: &[i64]) -> Option<Vec<Vec<i64>>> {
        let members = self.enumerate()?;
        let set: BTreeSet<&Vec<i64>> = members.iter().collect();
        if !set.contains(&a.to_vec()) || !set.contains(&b.to_vec()) {
            return None;
        }
        let mut prev: BTreeMap<Vec<i64>, Vec<i64>> = BTreeMap::new();
        let mut queue = VecDeque::from([a.to_vec()]);
        let mut seen: BTreeSet<Vec<i64>> = BTreeSet::from([a.to_vec()]);
        while let Some(cur) = queue.pop_front() {
            if cur.as_slice() == b {
                let mut path = vec![cur.clone()];
                let mut at = cur;
                while let Some(p) = prev.get(&at) {
                    path.push(p.clone());
                    at = p.clone();
                }
                path.reverse();
                return Some(path);
            }
            for other in &members {
                if !seen.contains(other) && linf(&cur, other) <= 1 {
                    seen.insert(other.clone());
                    prev.insert(other.clone(), cur.clone());
                    queue.push_back(other.clone());
                }
            }
        }
        None
    }
}

/// Build the inner-wonderful membership of a good box from its cluster
/// structure.
pub fn wonderful_inner(
    cs: &ClusterStructure,
    st: &ScaleTable,
) -> Result<WonderfulInner, MultiscaleError> {
    let idx = &cs.box_idx;
    let k = idx.k;
    let contained = contained_index_ranges(st, idx)?;
    let l_k = st.length_i64(k)?;
    if l_k % 1000 != 0 {
        return Err(MultiscaleError::Lattice(
            crate::lattice::LatticeError::InnerPartUnavailable(k, l_k),
        ));
    }
    let l_sub = st.length_i64(k - 1)?;
    let (cell_k, cell_sub) = (l_k / 3, l_sub / 3);
    let inner_half = 499 * (l_k / 1000);

    // Boxes contained in the inner part: |cell_sub j - cell_k i| + L_sub/2
    // <= inner_half per axis.
    let inner_ok: Vec<RangeInclusive<i64>> = idx
        .i
        .iter()
        .map(|&c| {
            let centre = c * cell_k;
            let slack = inner_half - l_sub / 2;
            let lo = div_ceil(centre - slack, cell_sub);
            let hi = (centre + slack).div_euclid(cell_sub);
            lo..=hi
        })
        .collect();

    let mut cluster_members = BTreeSet::new();
    let mut extras = BTreeSet::new();
    for cluster in &cs.clusters {
        for m in &cluster.members {
            cluster_members.insert(m.clone());
        }
        // Does the outer boundary meet the inner part (site-level)?
        let meets = cluster.outer_boundary.iter().any(|j| {
            j.iter().zip(&idx.i).all(|(&jc, &ic)| {
                (jc * cell_sub - ic * cell_k).abs() <= inner_half + l_sub / 2
            })
        });
        if meets {
            for j in &cluster.outer_boundary {
                extras.insert(j.clone());
            }
        }
    }
    Ok(WonderfulInner {
        contained,
        inner_ok,
        cluster_members,
        extras,
    })
}
