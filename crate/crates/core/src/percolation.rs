//! Static analysis of seed fields: connected components of non-seeds inside
//! boxes, chemical distances, constrained passage times, filled seeds, and
//! Monte Carlo estimators for percolation quantities.
//!
//! Component labeling inside a box uses the modified adjacency where edges
//! with both endpoints on the box boundary are removed; components are
//! ordered by size, ties broken by lexicographically smallest member.

use crate::lattice::{BoxIndex, LatticeError, ScaleTable, Site, SiteRange, Window};
use crate::randomness::{
    bernoulli_site, keyed_index, replica_seed, PassageTimeField, RateClass, SeedField, WorldSeed,
};
use rayon::prelude::*;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PercolationError {
    #[error("site {0:?} is not in the subgraph")]
    SiteNotInSubgraph(Vec<i64>),
    #[error("operation requires a scale-1 box, got scale {0}")]
    NotScale1(usize),
    #[error("box is not contained in the window")]
    BoxOutsideWindow,
    #[error("window side M must be even and positive, got {0}")]
    BadWindowSide(i64),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Union-find with path halving and union by size.
struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = self.parent[x as usize];
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
    }
}

/// The non-seed subgraph restricted to a box, optionally with edges between
/// boundary sites removed.
pub struct BoxSubgraph {
    region: SiteRange,
    member: Vec<bool>,
    drop_boundary_edges: bool,
}

impl BoxSubgraph {
    pub fn nonseed(field: &SeedField, region: SiteRange, drop_boundary_edges: bool) -> Self {
        let n = region.site_count() as usize;
        let mut member = vec![false; n];
        for (i, s) in region.iter().enumerate() {
            member[i] = !field.is_seed(&s);
        }
        BoxSubgraph {
            region,
            member,
            drop_boundary_edges,
        }
    }

    /// A subgraph with explicit membership (used by fixtures and tests).
    pub fn explicit(region: SiteRange, member: Vec<bool>, drop_boundary_edges: bool) -> Self {
        assert_eq!(member.len(), region.site_count() as usize);
        BoxSubgraph {
            region,
            member,
            drop_boundary_edges,
        }
    }

    pub fn region(&self) -> &SiteRange {
        &self.region
    }

    pub fn contains(&self, s: &Site) -> bool {
        self.region
            .index_of(s)
            .map(|i| self.member[i])
            .unwrap_or(false)
    }

    fn on_region_boundary(&self, s: &Site) -> bool {
        s.0.iter().enumerate().any(|(a, &c)| {
            c == self.region.axis(a).min_incl() || c == self.region.axis(a).max_incl()
        })
    }

    fn edge_allowed(&self, a: &Site, b: &Site) -> bool {
        !(self.drop_boundary_edges && self.on_region_boundary(a) && self.on_region_boundary(b))
    }

    /// Local indices of subgraph neighbours of the site with local index `i`.
    fn push_neighbours(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let s = self.region.site_at(i);
        for nb in s.neighbours() {
            if let Some(j) = self.region.index_of(&nb) {
                if self.member[j] && self.edge_allowed(&s, &nb) {
                    out.push(j);
                }
            }
        }
    }
}

/// One labelled component: size, members (local indices into the region) and
/// the lexicographically smallest member site.
#[derive(Debug, Clone)]
pub struct Component {
    pub size: usize,
    pub min_site: Site,
    pub members: Vec<u32>,
}

/// Components of a box subgraph, sorted by descending size with lexicographic
/// tie-break on the smallest member site.
pub struct ComponentLabeling {
    region: SiteRange,
    comp_of: Vec<Option<u32>>,
    components: Vec<Component>,
}

impl ComponentLabeling {
    pub fn build(sub: &BoxSubgraph) -> Self {
        let n = sub.member.len();
        let mut uf = UnionFind::new(n);
        let mut nbs = Vec::with_capacity(2 * sub.region.dim());
        for i in 0..n {
            if !sub.member[i] {
                continue;
            }
            sub.push_neighbours(i, &mut nbs);
            for &j in &nbs {
                if j > i {
                    uf.union(i as u32, j as u32);
                }
            }
        }
        let mut root_to_comp: std::collections::HashMap<u32, u32> =
            std::collections::HashMap::new();
        let mut components: Vec<Component> = Vec::new();
        let mut comp_of = vec![None; n];
        for i in 0..n {
            if !sub.member[i] {
                continue;
            }
            let root = uf.find(i as u32);
            let cid = *root_to_comp.entry(root).or_insert_with(|| {
                components.push(Component {
                    size: 0,
                    min_site: sub.region.site_at(i),
                    members: Vec::new(),
                });
                (components.len() - 1) as u32
            });
            let c = &mut components[cid as usize];
            c.size += 1;
            c.members.push(i as u32);
            comp_of[i] = Some(cid);
        }
        // Members are collected in row-major order, so the first one is the
        // lexicographically smallest site.
        for c in &mut components {
            c.min_site = sub.region.site_at(c.members[0] as usize);
        }
        let mut order: Vec<u32> = (0..components.len() as u32).collect();
        order.sort_by(|&a, &b| {
            let (ca, cb) = (&components[a as usize], &components[b as usize]);
            cb.size
                .cmp(&ca.size)
                .then_with(|| ca.min_site.cmp(&cb.min_site))
        });
        let mut rank_of = vec![0u32; components.len()];
        for (rank, &old) in order.iter().enumerate() {
            rank_of[old as usize] = rank as u32;
        }
        let mut sorted = Vec::with_capacity(components.len());
        for &old in &order {
            sorted.push(components[old as usize].clone());
        }
        for slot in comp_of.iter_mut().flatten() {
            *slot = rank_of[*slot as usize];
        }
        ComponentLabeling {
            region: sub.region.clone(),
            comp_of,
            components: sorted,
        }
    }

    pub fn region(&self) -> &SiteRange {
        &self.region
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, rank: usize) -> Option<&Component> {
        self.components.get(rank)
    }

    pub fn component_of(&self, s: &Site) -> Option<u32> {
        self.region.index_of(s).and_then(|i| self.comp_of[i])
    }

    /// Sites of the largest component.
    pub fn c1_sites(&self) -> impl Iterator<Item = Site> + '_ {
        self.components.first().into_iter().flat_map(move |c| {
            c.members
                .iter()
                .map(move |&i| self.region.site_at(i as usize))
        })
    }

    pub fn in_c1(&self, s: &Site) -> bool {
        self.component_of(s) == Some(0)
    }

    /// Sites of the largest component with region-boundary sites removed.
    pub fn c1_minus_sites(&self) -> Vec<Site> {
        let interior = |s: &Site| {
            !s.0.iter().enumerate().any(|(a, &c)| {
                c == self.region.axis(a).min_incl() || c == self.region.axis(a).max_incl()
            })
        };
        self.c1_sites().filter(interior).collect()
    }

    pub fn c2_size(&self) -> usize {
        self.components.get(1).map(|c| c.size).unwrap_or(0)
    }
}

/// Labeling of the non-seed sites of the scale-1 box at `idx` under the
/// modified adjacency.
pub fn nonseed_components_in_box(
    field: &SeedField,
    st: &ScaleTable,
    idx: &BoxIndex,
) -> Result<ComponentLabeling, PercolationError> {
    if idx.k != 1 {
        return Err(PercolationError::NotScale1(idx.k));
    }
    let region = st.box_of(idx)?;
    Ok(ComponentLabeling::build(&BoxSubgraph::nonseed(
        field, region, true,
    )))
}

/// As [`nonseed_components_in_box`], erroring when the box is not contained
/// in `window`.
pub fn nonseed_components_in_window_box(
    field: &SeedField,
    st: &ScaleTable,
    idx: &BoxIndex,
    window: &Window,
) -> Result<ComponentLabeling, PercolationError> {
    if !window.as_range().contains_range(&st.box_of(idx)?) {
        return Err(PercolationError::BoxOutsideWindow);
    }
    nonseed_components_in_box(field, st, idx)
}

/// Natural-log-squared helper used by the scale-1 events.
fn log_sq(x: f64) -> f64 {
    x.ln().powi(2)
}

/// Crossing and density event: in every core of the box, the largest
/// component must touch all faces of the core and fill at least a
/// `(1 - eps) * theta_hat` fraction of it.
pub fn check_e1(
    labeling: &ComponentLabeling,
    st: &ScaleTable,
    idx: &BoxIndex,
    eps: f64,
    theta_hat: f64,
) -> Result<bool, PercolationError> {
    let c1 = match labeling.component(0) {
        None => return Ok(false),
        Some(c) => c,
    };
    let cell = st.cell(1)? as f64;
    let d = st.dim();
    let need = (1.0 - eps) * theta_hat * cell.powi(d as i32);
    let in_c1: Vec<bool> = {
        let mut v = vec![false; labeling.region.site_count() as usize];
        for &m in &c1.members {
            v[m as usize] = true;
        }
        v
    };
    for off in offsets_box(d, 1) {
        let core_idx = BoxIndex::new(
            1,
            idx.i
                .iter()
                .zip(&off)
                .map(|(a, b)| a + b)
                .collect::<Vec<_>>(),
        );
        let core = st.core_of(&core_idx)?;
        let mut count = 0usize;
        let mut face_touched = vec![[false; 2]; d];
        for s in core.iter() {
            let local = match labeling.region.index_of(&s) {
                Some(l) => l,
                None => return Ok(false), // core leaks outside the box
            };
            if !in_c1[local] {
                continue;
            }
            count += 1;
            for (a, &c) in s.0.iter().enumerate() {
                if c == core.axis(a).min_incl() {
                    face_touched[a][0] = true;
                }
                if c == core.axis(a).max_incl() {
                    face_touched[a][1] = true;
                }
            }
        }
        if (count as f64) < need || face_touched.iter().any(|f| !f[0] || !f[1]) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// All integer offset vectors with entries in `[-radius, radius]`.
pub(crate) fn offsets_box(d: usize, radius: i64) -> Vec<Vec<i64>> {
    let mut offsets = vec![Vec::with_capacity(d)];
    for _ in 0..d {
        let mut next = Vec::new();
        for base in &offsets {
            for delta in -radius..=radius {
                let mut v = base.clone();
                v.push(delta);
                next.push(v);
            }
        }
        offsets = next;
    }
    offsets
}

/// Second-largest component is logarithmically small in the box site count.
pub fn check_e2(labeling: &ComponentLabeling) -> bool {
    let bound = log_sq(labeling.region.site_count() as f64);
    labeling.c2_size() as f64 <= bound
}

/// Breadth-first graph distance within the subgraph; `None` if disconnected.
pub fn chemical_distance(
    sub: &BoxSubgraph,
    x: &Site,
    y: &Site,
) -> Result<Option<u64>, PercolationError> {
    if !sub.contains(x) {
        return Err(PercolationError::SiteNotInSubgraph(x.0.clone()));
    }
    if !sub.contains(y) {
        return Err(PercolationError::SiteNotInSubgraph(y.0.clone()));
    }
    let start = sub.region.index_of(x).unwrap();
    let goal = sub.region.index_of(y).unwrap();
    let dist = bfs_from(sub, start, Some(goal));
    Ok(dist[goal].map(|d| d as u64))
}

fn bfs_from(sub: &BoxSubgraph, start: usize, stop_at: Option<usize>) -> Vec<Option<u32>> {
    let mut dist = vec![None; sub.member.len()];
    dist[start] = Some(0);
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(start);
    let mut nbs = Vec::with_capacity(2 * sub.region.dim());
    while let Some(i) = queue.pop_front() {
        if stop_at == Some(i) {
            break;
        }
        let base = dist[i].unwrap();
        sub.push_neighbours(i, &mut nbs);
        for &j in &nbs {
            if dist[j].is_none() {
                dist[j] = Some(base + 1);
                queue.push_back(j);
            }
        }
    }
    dist
}

/// Dijkstra over subgraph edges with the requested rate class.
fn dijkstra_from(
    sub: &BoxSubgraph,
    time_field: &PassageTimeField,
    class: RateClass,
    start: usize,
) -> Vec<f64> {
    #[derive(PartialEq)]
    struct Entry(f64, usize);
    impl Eq for Entry {}
    impl Ord for Entry {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            o.0.total_cmp(&self.0) // min-heap
        }
    }
    impl PartialOrd for Entry {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    let mut dist = vec![f64::INFINITY; sub.member.len()];
    dist[start] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry(0.0, start));
    let mut nbs = Vec::with_capacity(2 * sub.region.dim());
    while let Some(Entry(t, i)) = heap.pop() {
        if t > dist[i] {
            continue;
        }
        let here = sub.region.site_at(i);
        sub.push_neighbours(i, &mut nbs);
        for &j in &nbs {
            let there = sub.region.site_at(j);
            let w = time_field.passage_time_coords(&here.0, &there.0, class);
            let cand = t + w;
            if cand < dist[j] {
                dist[j] = cand;
                heap.push(Entry(cand, j));
            }
        }
    }
    dist
}

/// Minimal passage time between `x` and `y` over paths inside the subgraph.
pub fn constrained_passage_time(
    time_field: &PassageTimeField,
    x: &Site,
    y: &Site,
    sub: &BoxSubgraph,
    class: RateClass,
) -> Result<Option<f64>, PercolationError> {
    if !sub.contains(x) {
        return Err(PercolationError::SiteNotInSubgraph(x.0.clone()));
    }
    if !sub.contains(y) {
        return Err(PercolationError::SiteNotInSubgraph(y.0.clone()));
    }
    let start = sub.region.index_of(x).unwrap();
    let goal = sub.region.index_of(y).unwrap();
    let dist = dijkstra_from(sub, time_field, class, start);
    Ok(if dist[goal].is_finite() {
        Some(dist[goal])
    } else {
        None
    })
}

/// Pair-check strategy for the chemical-distance and passage-time events:
/// exact all-pairs up to `exact_threshold` sites in the largest component,
/// otherwise `sources * targets_per_source` sampled pairs keyed by the world
/// seed.
#[derive(Debug, Clone, Copy)]
pub struct PairSampling {
    pub exact_threshold: usize,
    pub sources: usize,
    pub targets_per_source: usize,
}

impl Default for PairSampling {
    fn default() -> Self {
        PairSampling {
            exact_threshold: 5000,
            sources: 100,
            targets_per_source: 100,
        }
    }
}

fn pair_sources(c1: &Component, sampling: &PairSampling, world: WorldSeed, salt: u64) -> Vec<u32> {
    if c1.size <= sampling.exact_threshold {
        c1.members.clone()
    } else {
        (0..sampling.sources)
            .map(|k| c1.members[keyed_index(world, salt, k as u64, c1.members.len())])
            .collect()
    }
}

/// Precompiled adjacency of a subgraph (local indices), hashing each edge
/// weight exactly once; the pair checks run many searches per box.
fn compile_adjacency(
    sub: &BoxSubgraph,
    weights: Option<(&PassageTimeField, RateClass)>,
) -> Vec<Vec<(u32, f64)>> {
    let n = sub.member.len();
    let mut adj = vec![Vec::new(); n];
    let mut nbs = Vec::with_capacity(2 * sub.region.dim());
    for i in 0..n {
        if !sub.member[i] {
            continue;
        }
        let here = sub.region.site_at(i);
        sub.push_neighbours(i, &mut nbs);
        for &j in &nbs {
            let w = match weights {
                None => 1.0,
                Some((tf, class)) => {
                    let there = sub.region.site_at(j);
                    tf.passage_time_coords(&here.0, &there.0, class)
                }
            };
            adj[i].push((j as u32, w));
        }
    }
    adj
}

fn bfs_adj(adj: &[Vec<(u32, f64)>], start: usize, dist: &mut [i64]) {
    dist.fill(-1);
    dist[start] = 0;
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(start);
    while let Some(i) = queue.pop_front() {
        let base = dist[i];
        for &(j, _) in &adj[i] {
            if dist[j as usize] < 0 {
                dist[j as usize] = base + 1;
                queue.push_back(j as usize);
            }
        }
    }
}

#[derive(PartialEq)]
struct HeapEntry(f64, u32);
impl Eq for HeapEntry {}
impl Ord for HeapEntry {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        o.0.total_cmp(&self.0)
    }
}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

fn dijkstra_adj(
    adj: &[Vec<(u32, f64)>],
    start: usize,
    dist: &mut [f64],
    heap: &mut BinaryHeap<HeapEntry>,
) {
    dist.fill(f64::INFINITY);
    dist[start] = 0.0;
    heap.clear();
    heap.push(HeapEntry(0.0, start as u32));
    while let Some(HeapEntry(t, i)) = heap.pop() {
        if t > dist[i as usize] {
            continue;
        }
        for &(j, w) in &adj[i as usize] {
            let cand = t + w;
            if cand < dist[j as usize] {
                dist[j as usize] = cand;
                heap.push(HeapEntry(cand, j));
            }
        }
    }
}

/// l1 distance between precomputed coordinate vectors.
fn l1_of(a: &[i64], b: &[i64]) -> u64 {
    a.iter().zip(b).map(|(x, y)| x.abs_diff(*y)).sum()
}

/// Chemical distances in the largest component are linear with a logarithmic
/// floor: `d(x, y) < c1 * max(l1(x, y), ln^2 L1)` for all checked pairs.
pub fn check_e3(
    labeling: &ComponentLabeling,
    sub: &BoxSubgraph,
    st: &ScaleTable,
    c1_const: f64,
    sampling: &PairSampling,
    world: WorldSeed,
) -> Result<bool, PercolationError> {
    let comp = match labeling.component(0) {
        None => return Ok(true), // vacuous
        Some(c) => c,
    };
    let floor = log_sq(st.l1() as f64);
    let adj = compile_adjacency(sub, None);
    let mut dist = vec![-1i64; sub.member.len()];
    // Coordinates of every member, computed once.
    let coords: Vec<Vec<i64>> = comp
        .members
        .iter()
        .map(|&m| sub.region.site_at(m as usize).0)
        .collect();
    if comp.size <= sampling.exact_threshold {
        // All pairs, each unordered pair once. Landmark searches give exact
        // upper bounds d(x, l) + d(l, y) >= d(x, y); a pair whose bound is
        // beaten by some landmark certainly satisfies the event, and only
        // sources with unscreened pairs run their own search.
        let landmarks = landmark_positions(comp.members.len());
        let lm_dist: Vec<Vec<i64>> = landmarks
            .iter()
            .map(|&pos| {
                let mut d = vec![-1i64; sub.member.len()];
                bfs_adj(&adj, comp.members[pos] as usize, &mut d);
                d
            })
            .collect();
        for (pos_s, &src) in comp.members.iter().enumerate() {
            let x = &coords[pos_s];
            let mut pending: Vec<(u32, f64)> = Vec::new();
            for (pos_t, &tgt) in comp.members.iter().enumerate().skip(pos_s) {
                let bound = c1_const * (l1_of(x, &coords[pos_t]) as f64).max(floor);
                let screened = lm_dist.iter().any(|d| {
                    let (a, b) = (d[src as usize], d[tgt as usize]);
                    a >= 0 && b >= 0 && ((a + b) as f64) < bound
                });
                if !screened {
                    pending.push((tgt, bound));
                }
            }
            if pending.is_empty() {
                continue;
            }
            bfs_adj(&adj, src as usize, &mut dist);
            for (tgt, bound) in pending {
                let dv = dist[tgt as usize];
                if dv < 0 || dv as f64 >= bound {
                    return Ok(false);
                }
            }
        }
        return Ok(true);
    }
    let sources = pair_sources(comp, sampling, world, 0xe3);
    for (snum, &src) in sources.iter().enumerate() {
        bfs_adj(&adj, src as usize, &mut dist);
        let x = sub.region.site_at(src as usize).0;
        for k in 0..sampling.targets_per_source {
            let pos = keyed_index(
                world,
                0xe3_01,
                (snum * sampling.targets_per_source + k) as u64,
                comp.members.len(),
            );
            let bound = c1_const * (l1_of(&x, &coords[pos]) as f64).max(floor);
            let dv = dist[comp.members[pos] as usize];
            if dv < 0 || dv as f64 >= bound {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Positions (into the member list) of up to 16 eventy spread landmarks.
fn landmark_positions(n: usize) -> Vec<usize> {
    let count = 16.min(n);
    let stride = (n / count.max(1)).max(1);
    (0..count).map(|k| (k * stride).min(n - 1)).collect()
}

/// Rate-1 passage times in the largest component are linear with the same
/// logarithmic floor: `T1(x -> y; G(i)) < c2 * max(l1(x, y), ln^2 L1)`.
pub fn check_e4(
    labeling: &ComponentLabeling,
    sub: &BoxSubgraph,
    st: &ScaleTable,
    time_field: &PassageTimeField,
    c2_const: f64,
    sampling: &PairSampling,
    world: WorldSeed,
) -> Result<bool, PercolationError> {
    let comp = match labeling.component(0) {
        None => return Ok(true),
        Some(c) => c,
    };
    let floor = log_sq(st.l1() as f64);
    let adj = compile_adjacency(sub, Some((time_field, RateClass::Rate1)));
    let mut dist = vec![f64::INFINITY; sub.member.len()];
    let mut heap = BinaryHeap::new();
    let coords: Vec<Vec<i64>> = comp
        .members
        .iter()
        .map(|&m| sub.region.site_at(m as usize).0)
        .collect();
    if comp.size <= sampling.exact_threshold {
        // Landmark screen as in the chemical-distance event: passage times
        // obey T(x, y) <= T(x, l) + T(l, y), so a landmark beating the bound
        // certifies the pair.
        let landmarks = landmark_positions(comp.members.len());
        let lm_dist: Vec<Vec<f64>> = landmarks
            .iter()
            .map(|&pos| {
                let mut d = vec![f64::INFINITY; sub.member.len()];
                dijkstra_adj(&adj, comp.members[pos] as usize, &mut d, &mut heap);
                d
            })
            .collect();
        for (pos_s, &src) in comp.members.iter().enumerate() {
            let x = &coords[pos_s];
            let mut pending: Vec<(u32, f64)> = Vec::new();
            for (pos_t, &tgt) in comp.members.iter().enumerate().skip(pos_s) {
                let bound = c2_const * (l1_of(x, &coords[pos_t]) as f64).max(floor);
                let screened = lm_dist
                    .iter()
                    .any(|d| d[src as usize] + d[tgt as usize] < bound);
                if !screened {
                    pending.push((tgt, bound));
                }
            }
            if pending.is_empty() {
                continue;
            }
            dijkstra_adj(&adj, src as usize, &mut dist, &mut heap);
            for (tgt, bound) in pending {
                if !(dist[tgt as usize] < bound) {
                    return Ok(false);
                }
            }
        }
        return Ok(true);
    }
    let sources = pair_sources(comp, sampling, world, 0xe4);
    for (snum, &src) in sources.iter().enumerate() {
        dijkstra_adj(&adj, src as usize, &mut dist, &mut heap);
        let x = sub.region.site_at(src as usize).0;
        for k in 0..sampling.targets_per_source {
            let pos = keyed_index(
                world,
                0xe4_01,
                (snum * sampling.targets_per_source + k) as u64,
                comp.members.len(),
            );
            let bound = c2_const * (l1_of(&x, &coords[pos]) as f64).max(floor);
            if !(dist[comp.members[pos] as usize] < bound) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Every edge with both endpoints in the box has a rate-lambda passage time
/// of at least `1 / sqrt(lambda)`.
pub fn check_e5(time_field: &PassageTimeField, box_range: &SiteRange, lambda: f64) -> bool {
    let threshold = 1.0 / lambda.sqrt();
    let d = box_range.dim();
    for s in box_range.iter() {
        for axis in 0..d {
            let mut nb = s.0.clone();
            nb[axis] += 1;
            if nb[axis] <= box_range.axis(axis).max_incl() {
                let t = time_field.passage_time_coords(&s.0, &nb, RateClass::RateLambda);
                if t < threshold {
                    return false;
                }
            }
        }
    }
    true
}

/// Seeds plus sites disconnected from the window boundary by seeds.
pub struct FilledSeedField {
    window: Window,
    filled: Vec<bool>,
}

impl FilledSeedField {
    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn is_filled(&self, s: &Site) -> bool {
        self.window
            .index_of(s)
            .map(|i| self.filled[i])
            .unwrap_or(false)
    }

    pub fn filled_count(&self) -> usize {
        self.filled.iter().filter(|&&f| f).count()
    }
}

/// Finite-window filled seeds: a non-seed component is filled iff it does not
/// touch the window boundary; seeds are always filled.
pub fn filled_seeds(field: &SeedField, window: &Window) -> FilledSeedField {
    let n = window.site_count();
    let mut is_seed = vec![false; n];
    for (i, flag) in is_seed.iter_mut().enumerate() {
        *flag = field.is_seed(&window.site_at(i));
    }
    let mut uf = UnionFind::new(n);
    let side = window.side() as usize;
    let d = window.dim();
    let mut strides = vec![1usize; d];
    for a in (0..d.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * side;
    }
    for i in 0..n {
        if is_seed[i] {
            continue;
        }
        let s = window.site_at(i);
        for (a, &c) in s.0.iter().enumerate() {
            if c < window.half_side() {
                let j = i + strides[a];
                if !is_seed[j] {
                    uf.union(i as u32, j as u32);
                }
            }
        }
    }
    // Components touching the window boundary ring are not filled.
    let mut touches = std::collections::HashSet::new();
    for s in crate::lattice::boundary_sites(&window.as_range()).unwrap() {
        let i = window.index_of(&s).unwrap();
        if !is_seed[i] {
            touches.insert(uf.find(i as u32));
        }
    }
    let mut filled = vec![false; n];
    for (i, flag) in filled.iter_mut().enumerate() {
        *flag = if is_seed[i] {
            true
        } else {
            !touches.contains(&uf.find(i as u32))
        };
    }
    FilledSeedField {
        window: window.clone(),
        filled,
    }
}

/// Largest connected component of filled sites within the box has size at
/// most `L1 / 100`.
pub fn check_e6(
    filled: &FilledSeedField,
    st: &ScaleTable,
    idx: &BoxIndex,
) -> Result<bool, PercolationError> {
    if idx.k != 1 {
        return Err(PercolationError::NotScale1(idx.k));
    }
    let region = st.box_of(idx)?.intersect(&filled.window.as_range());
    if region.is_empty() {
        return Err(PercolationError::BoxOutsideWindow);
    }
    let member: Vec<bool> = region.iter().map(|s| filled.is_filled(&s)).collect();
    let sub = BoxSubgraph::explicit(region, member, false);
    let labeling = ComponentLabeling::build(&sub);
    let largest = labeling.component(0).map(|c| c.size).unwrap_or(0);
    Ok(largest as u64 * 100 <= st.l1() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub reps: usize,
}

fn binomial_estimate(successes: usize, reps: usize) -> Estimate {
    let value = successes as f64 / reps as f64;
    Estimate {
        value,
        stderr: (value * (1.0 - value) / reps as f64).sqrt(),
        reps,
    }
}

/// Finite-size estimator for the probability that the origin lies in the
/// giant non-seed cluster: the fraction of replicas in which the origin's
/// non-seed component reaches the window boundary. Uses a raw Bernoulli field
/// (no origin exception), matching ordinary site percolation.
pub fn theta_estimate(
    p: f64,
    half_window: i64,
    reps: usize,
    master: WorldSeed,
) -> Result<Estimate, PercolationError> {
    let window = Window::new(2, half_window)?;
    let hits: usize = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let world = replica_seed(master, &[], rep as u64);
            origin_reaches_boundary(&window, |s| !bernoulli_site(world, s, p)) as usize
        })
        .sum();
    Ok(binomial_estimate(hits, reps))
}

/// BFS from the origin through sites accepted by `open`, true if the window
/// boundary ring is reached.
fn origin_reaches_boundary(window: &Window, open: impl Fn(&Site) -> bool) -> bool {
    let origin = Site::origin(window.dim());
    if !open(&origin) {
        return false;
    }
    let n = window.site_count();
    let mut seen = vec![false; n];
    let oi = window.index_of(&origin).unwrap();
    seen[oi] = true;
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(origin);
    while let Some(s) = queue.pop_front() {
        if window.on_boundary(&s) {
            return true;
        }
        for nb in s.neighbours() {
            if let Some(j) = window.index_of(&nb) {
                if !seen[j] && open(&nb) {
                    seen[j] = true;
                    queue.push_back(nb);
                }
            }
        }
    }
    false
}

/// Probability of a filled-seed path from a neighbour of the origin to the
/// boundary of the side-`m` window.
pub fn filled_reach_probability(
    p: f64,
    m: i64,
    reps: usize,
    master: WorldSeed,
) -> Result<Estimate, PercolationError> {
    if m < 2 || m % 2 != 0 {
        return Err(PercolationError::BadWindowSide(m));
    }
    let window = Window::new(2, m / 2)?;
    let hits: usize = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let world = replica_seed(master, &[1], rep as u64);
            let field = SeedField::new(p, world).expect("validated p");
            let filled = filled_seeds(&field, &window);
            let origin = Site::origin(window.dim());
            let mut queue: std::collections::VecDeque<Site> = std::collections::VecDeque::new();
            let mut seen = vec![false; window.site_count()];
            for nb in origin.neighbours() {
                if let Some(i) = window.index_of(&nb) {
                    if filled.filled[i] && !seen[i] {
                        seen[i] = true;
                        queue.push_back(nb);
                    }
                }
            }
            while let Some(s) = queue.pop_front() {
                if window.on_boundary(&s) {
                    return 1usize;
                }
                for nb in s.neighbours() {
                    if let Some(j) = window.index_of(&nb) {
                        if !seen[j] && filled.filled[j] {
                            seen[j] = true;
                            queue.push_back(nb);
                        }
                    }
                }
            }
            0usize
        })
        .sum();
    Ok(binomial_estimate(hits, reps))
}

/// Probability of a left-right crossing of open sites at open density `q` on
/// the `[-h, h]^2` window.
pub fn crossing_probability(
    q_open: f64,
    half_window: i64,
    reps: usize,
    master: WorldSeed,
) -> Result<Estimate, PercolationError> {
    let window = Window::new(2, half_window)?;
    let hits: usize = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let world = replica_seed(master, &[2], rep as u64);
            crossing_once(&window, |s| bernoulli_site(world, s, q_open)) as usize
        })
        .sum();
    Ok(binomial_estimate(hits, reps))
}

fn crossing_once(window: &Window, open: impl Fn(&Site) -> bool) -> bool {
    let h = window.half_side();
    let mut queue = std::collections::VecDeque::new();
    let mut seen = vec![false; window.site_count()];
    for y in -h..=h {
        let s = Site(vec![-h, y]);
        if open(&s) {
            let i = window.index_of(&s).unwrap();
            seen[i] = true;
            queue.push_back(s);
        }
    }
    while let Some(s) = queue.pop_front() {
        if s.0[0] == h {
            return true;
        }
        for nb in s.neighbours() {
            if let Some(j) = window.index_of(&nb) {
                if !seen[j] && open(&nb) {
                    seen[j] = true;
                    queue.push_back(nb);
                }
            }
        }
    }
    false
}

/// Bisection estimate of the critical open density via crossing probability
/// one half.
pub fn estimate_crossing_pc(
    half_window: i64,
    reps_per_probe: usize,
    master: WorldSeed,
    iterations: usize,
) -> Result<f64, PercolationError> {
    let mut lo = 0.40;
    let mut hi = 0.80;
    for iter in 0..iterations {
        let mid = 0.5 * (lo + hi);
        let probe = crossing_probability(
            mid,
            half_window,
            reps_per_probe,
            replica_seed(master, &[3], iter as u64),
        )?;
        if probe.value < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ScaleTable {
        ScaleTable::new(6, 2, 1).unwrap()
    }

    fn field(p: f64, seed: u64) -> SeedField {
        SeedField::new(p, WorldSeed(seed)).unwrap()
    }

    #[test]
    fn labeling_degenerate_cases() {
        let st = table();
        let idx = BoxIndex::new(1, vec![0, 0]);
        let lab = nonseed_components_in_box(&field(0.0, 1), &st, &idx).unwrap();
        // p = 0: corners are isolated by the boundary-edge removal, so the
        // largest component is everything except the 4 corners.
        let total = st.box_of(&idx).unwrap().site_count() as usize;
        assert_eq!(lab.component(0).unwrap().size, total - 4);
        assert_eq!(lab.component_count(), 5);

        // p = 1 away from the origin: every site is a seed, no components.
        let far = BoxIndex::new(1, vec![5, 5]);
        let lab = nonseed_components_in_box(&field(1.0, 1), &st, &far).unwrap();
        assert_eq!(lab.component_count(), 0);
        assert_eq!(lab.c2_size(), 0);
        // The box at the origin keeps the origin itself (never a seed).
        let lab = nonseed_components_in_box(&field(1.0, 1), &st, &idx).unwrap();
        assert_eq!(lab.component_count(), 1);
        assert_eq!(lab.component(0).unwrap().size, 1);
    }

    #[test]
    fn labeling_with_seed_wall() {
        // 5x5 range, a wall down x = 0 splits the rest in two.
        let region = SiteRange::closed(vec![-2, -2], vec![2, 2]);
        let member: Vec<bool> = region.iter().map(|s| s.0[0] != 0).collect();
        let sub = BoxSubgraph::explicit(region, member, false);
        let lab = ComponentLabeling::build(&sub);
        assert_eq!(lab.component_count(), 2);
        assert_eq!(lab.component(0).unwrap().size, 10);
        assert_eq!(lab.component(1).unwrap().size, 10);
        // Tie broken by lexicographically smallest member.
        assert_eq!(lab.component(0).unwrap().min_site, Site(vec![-2, -2]));
        assert_eq!(lab.component(1).unwrap().min_site, Site(vec![1, -2]));
    }

    #[test]
    fn labeling_matches_flood_fill_oracle() {
        // Independent BFS flood fill over random fields, exact comparison.
        for seed in 0..100u64 {
            let f = field(0.45, 1000 + seed);
            let region = SiteRange::closed(vec![-10, -10], vec![9, 9]);
            let sub = BoxSubgraph::nonseed(&f, region.clone(), true);
            let lab = ComponentLabeling::build(&sub);

            // Oracle: repeated DFS.
            let n = region.site_count() as usize;
            let mut oracle_comp: Vec<Option<u32>> = vec![None; n];
            let mut count = 0u32;
            let mut nbs = Vec::new();
            for i in 0..n {
                if !sub.member[i] || oracle_comp[i].is_some() {
                    continue;
                }
                let cid = count;
                count += 1;
                let mut stack = vec![i];
                oracle_comp[i] = Some(cid);
                while let Some(v) = stack.pop() {
                    sub.push_neighbours(v, &mut nbs);
                    let snapshot: Vec<usize> = nbs.clone();
                    for j in snapshot {
                        if oracle_comp[j].is_none() {
                            oracle_comp[j] = Some(cid);
                            stack.push(j);
                        }
                    }
                }
            }
            assert_eq!(lab.component_count(), count as usize);
            for i in 0..n {
                for j in (i + 1)..n {
                    let same_lab = lab.comp_of[i].is_some() && lab.comp_of[i] == lab.comp_of[j];
                    let same_orc = oracle_comp[i].is_some() && oracle_comp[i] == oracle_comp[j];
                    assert_eq!(same_lab, same_orc);
                }
            }
        }
    }

    #[test]
    fn e1_checks() {
        // Box corners are isolated by the boundary-edge removal, so at tiny
        // L1 the corner cores run a fixed 1-site deficit; eps = 0.2 absorbs
        // it (the deficit vanishes at realistic L1).
        let st = ScaleTable::new(12, 2, 1).unwrap();
        let idx = BoxIndex::new(1, vec![0, 0]);
        let lab = nonseed_components_in_box(&field(0.0, 2), &st, &idx).unwrap();
        assert!(check_e1(&lab, &st, &idx, 0.2, 1.0).unwrap());
        let lab = nonseed_components_in_box(&field(1.0, 2), &st, &idx).unwrap();
        assert!(!check_e1(&lab, &st, &idx, 0.2, 1.0).unwrap());
    }

    #[test]
    fn e2_checks() {
        let st = table();
        let idx = BoxIndex::new(1, vec![0, 0]);
        let lab = nonseed_components_in_box(&field(0.0, 3), &st, &idx).unwrap();
        assert!(check_e2(&lab));

        // A wall through the box splits it into two components of size ~21,
        // exceeding ln^2(49) ~ 15.1.
        let region = st.box_of(&idx).unwrap();
        let member: Vec<bool> = region.iter().map(|s| s.0[0] != 0).collect();
        let sub = BoxSubgraph::explicit(region, member, true);
        let lab = ComponentLabeling::build(&sub);
        assert!(!check_e2(&lab));
    }

    #[test]
    fn chemical_distance_examples() {
        let region = SiteRange::closed(vec![0, 0], vec![4, 4]);
        // L-shaped corridor: bottom row plus right column.
        let member: Vec<bool> = region.iter().map(|s| s.0[1] == 0 || s.0[0] == 4).collect();
        let sub = BoxSubgraph::explicit(region, member, false);
        let a = Site(vec![0, 0]);
        let b = Site(vec![4, 4]);
        assert_eq!(chemical_distance(&sub, &a, &a).unwrap(), Some(0));
        assert_eq!(
            chemical_distance(&sub, &a, &Site(vec![1, 0])).unwrap(),
            Some(1)
        );
        assert_eq!(chemical_distance(&sub, &a, &b).unwrap(), Some(8));
        assert!(chemical_distance(&sub, &a, &Site(vec![2, 2])).is_err());
    }

    #[test]
    fn e3_checks() {
        let st = table();
        let idx = BoxIndex::new(1, vec![0, 0]);
        let f = field(0.0, 4);
        let lab = nonseed_components_in_box(&f, &st, &idx).unwrap();
        let sub = BoxSubgraph::nonseed(&f, st.box_of(&idx).unwrap(), true);
        let sampling = PairSampling::default();
        // p = 0: graph distance equals l1 distance, so any c1 > 1 passes.
        assert!(check_e3(&lab, &sub, &st, 2.0, &sampling, WorldSeed(4)).unwrap());

        // Wall with a pinhole at the top: adjacent sites across the wall need
        // a long detour, violating the bound at c1 = 2.
        let region = st.box_of(&idx).unwrap();
        let member: Vec<bool> = region
            .iter()
            .map(|s| s.0[0] != 0 || s.0[1] == region.axis(1).max_incl())
            .collect();
        let sub = BoxSubgraph::explicit(region.clone(), member.clone(), false);
        let lab = ComponentLabeling::build(&sub);
        assert!(!check_e3(&lab, &sub, &st, 2.0, &sampling, WorldSeed(4)).unwrap());
        // Monotone in c1: a generous constant accepts the same fixture.
        assert!(check_e3(&lab, &sub, &st, 40.0, &sampling, WorldSeed(4)).unwrap());
    }

    #[test]
    fn constrained_passage_time_matches_brute_force() {
        use crate::randomness::OverrideTable;
        // 4x4 grid with deterministic times; oracle enumerates all simple
        // paths.
        let region = SiteRange::closed(vec![0, 0], vec![3, 3]);
        let member = vec![true; 16];
        let sub = BoxSubgraph::explicit(region.clone(), member, false);
        let mut ov = OverrideTable::new();
        for (n, s) in region.iter().enumerate() {
            for axis in 0..2 {
                let mut nb = s.0.clone();
                nb[axis] += 1;
                if region.contains(&Site(nb.clone())) {
                    let t = 0.25 + ((n * 7 + axis * 3) % 11) as f64 * 0.5;
                    ov.set(
                        crate::lattice::Edge::new(s.clone(), Site(nb)).unwrap(),
                        t,
                        t,
                    )
                    .unwrap();
                }
            }
        }
        let tf = PassageTimeField::new(1.0, WorldSeed(5))
            .unwrap()
            .with_overrides(ov);
        let x = Site(vec![0, 0]);
        let y = Site(vec![3, 3]);
        assert_eq!(
            constrained_passage_time(&tf, &x, &x, &sub, RateClass::Rate1).unwrap(),
            Some(0.0)
        );
        let got = constrained_passage_time(&tf, &x, &y, &sub, RateClass::Rate1)
            .unwrap()
            .unwrap();

        // Brute force over all simple paths.
        fn explore(
            at: Site,
            goal: &Site,
            region: &SiteRange,
            visited: &mut Vec<Site>,
            acc: f64,
            best: &mut f64,
            tf: &PassageTimeField,
        ) {
            if at == *goal {
                *best = best.min(acc);
                return;
            }
            for nb in at.neighbours() {
                if region.contains(&nb) && !visited.contains(&nb) {
                    let t = tf.passage_time(
                        &crate::lattice::Edge::new(at.clone(), nb.clone()).unwrap(),
                        RateClass::Rate1,
                    );
                    visited.push(nb.clone());
                    explore(nb, goal, region, visited, acc + t, best, tf);
                    visited.pop();
                }
            }
        }
        let mut best = f64::INFINITY;
        let mut visited = vec![x.clone()];
        explore(x.clone(), &y, &region, &mut visited, 0.0, &mut best, &tf);
        assert!((got - best).abs() < 1e-12);

        // Monotone under subgraph enlargement: restricting to the bottom-row
        // corridor can only increase the passage time.
        let corridor: Vec<bool> = region.iter().map(|s| s.0[1] == 0 || s.0[0] == 3).collect();
        let small = BoxSubgraph::explicit(region.clone(), corridor, false);
        let restricted = constrained_passage_time(&tf, &x, &y, &small, RateClass::Rate1)
            .unwrap()
            .unwrap();
        assert!(restricted >= got - 1e-12);
    }

    #[test]
    fn e4_checks() {
        use crate::randomness::OverrideTable;
        let st = table();
        let idx = BoxIndex::new(1, vec![0, 0]);
        let f = field(0.0, 6);
        let lab = nonseed_components_in_box(&f, &st, &idx).unwrap();
        let sub = BoxSubgraph::nonseed(&f, st.box_of(&idx).unwrap(), true);
        let sampling = PairSampling::default();
        let unit = PassageTimeField::new(1.0, WorldSeed(6))
            .unwrap()
            .with_overrides(OverrideTable::with_default(1.0, 1.0).unwrap());
        assert!(check_e4(&lab, &sub, &st, &unit, 2.0, &sampling, WorldSeed(6)).unwrap());

        // Slow edges around one interior site break the bound.
        let mut ov = OverrideTable::with_default(1.0, 1.0).unwrap();
        for nb in Site(vec![2, 2]).neighbours() {
            ov.set(
                crate::lattice::Edge::new(Site(vec![2, 2]), nb).unwrap(),
                1e6,
                1.0,
            )
            .unwrap();
        }
        let slow = PassageTimeField::new(1.0, WorldSeed(6))
            .unwrap()
            .with_overrides(ov);
        assert!(!check_e4(&lab, &sub, &st, &slow, 2.0, &sampling, WorldSeed(6)).unwrap());
    }

    #[test]
    fn e5_checks() {
        use crate::randomness::OverrideTable;
        let st = table();
        let region = st.box_of(&BoxIndex::new(1, vec![0, 0])).unwrap();
        let big = PassageTimeField::new(0.01, WorldSeed(7))
            .unwrap()
            .with_overrides(OverrideTable::with_default(1.0, 1000.0).unwrap());
        // Threshold 1/sqrt(0.01) = 10.
        assert!(check_e5(&big, &region, 0.01));
        let mut ov = OverrideTable::with_default(1.0, 1000.0).unwrap();
        ov.set(
            crate::lattice::Edge::new(Site(vec![0, 0]), Site(vec![0, 1])).unwrap(),
            1.0,
            5.0,
        )
        .unwrap();
        let fast = PassageTimeField::new(0.01, WorldSeed(7))
            .unwrap()
            .with_overrides(ov);
        assert!(!check_e5(&fast, &region, 0.01));
    }

    #[test]
    fn e5_empirical_failure_rate_bounded() {
        // Union bound: failure rate <= sqrt(lambda) * edge count.
        let st = ScaleTable::new(30, 2, 1).unwrap();
        let lambda = 1e-6;
        let region = st.box_of(&BoxIndex::new(1, vec![0, 0])).unwrap();
        let edges = {
            let side = region.axis(0).len();
            2 * side * (side - 1)
        };
        let reps = 200;
        let mut failures = 0;
        for rep in 0..reps {
            let tf = PassageTimeField::new(lambda, WorldSeed(9000 + rep)).unwrap();
            if !check_e5(&tf, &region, lambda) {
                failures += 1;
            }
        }
        let bound = lambda.sqrt() * edges as f64;
        assert!(
            (failures as f64 / reps as f64) <= bound.min(1.0),
            "failure rate {} vs union bound {}",
            failures as f64 / reps as f64,
            bound
        );
    }

    #[test]
    fn filled_seed_semantics() {
        let w = Window::new(2, 4).unwrap();
        let f = field(0.0, 8);
        let filled = filled_seeds(&f, &w);
        assert_eq!(filled.filled_count(), 0);

        // Closed seed ring around a pocket (away from the origin).
        let mut f = field(0.0, 8);
        for x in 1..=3i64 {
            for y in 1..=3i64 {
                if x == 2 && y == 2 {
                    continue;
                }
                f = f.with_extra_seed(Site(vec![x, y])).unwrap();
            }
        }
        let filled = filled_seeds(&f, &w);
        assert!(filled.is_filled(&Site(vec![2, 2]))); // the pocket
        assert!(filled.is_filled(&Site(vec![1, 1]))); // a seed
        assert!(!filled.is_filled(&Site(vec![0, 0]))); // outside component
        assert_eq!(filled.filled_count(), 9);

        let f = field(1.0, 8);
        let filled = filled_seeds(&f, &w);
        // Everything except the origin is a seed; the origin's singleton
        // component does not touch the boundary, so it is filled too.
        assert_eq!(filled.filled_count(), w.site_count());
    }

    #[test]
    fn filled_monotone_in_forced_seeds() {
        let w = Window::new(2, 5).unwrap();
        let base = field(0.25, 9);
        let filled_base = filled_seeds(&base, &w);
        let extra = base.with_extra_seed(Site(vec![2, 3])).unwrap();
        let filled_extra = filled_seeds(&extra, &w);
        for s in w.sites() {
            if filled_base.is_filled(&s) {
                assert!(filled_extra.is_filled(&s), "unfilled at {s:?}");
            }
        }
    }

    #[test]
    fn e6_checks() {
        let st = ScaleTable::new(600, 2, 1).unwrap();
        let w = Window::new(2, 400).unwrap();
        let f = field(0.0, 10);
        let filled = filled_seeds(&f, &w);
        let idx = BoxIndex::new(1, vec![0, 0]);
        assert!(check_e6(&filled, &st, &idx).unwrap());

        // A filled blob larger than L1/100 = 6 sites.
        let mut f = field(0.0, 10);
        for x in 0..=6i64 {
            f = f.with_extra_seed(Site(vec![x, 5])).unwrap();
        }
        let filled = filled_seeds(&f, &w);
        assert!(!check_e6(&filled, &st, &idx).unwrap());
    }

    #[test]
    fn e6_pass_rate_decreases_in_p() {
        // Larger seed density fills more, so the filled-component bound
        // fails more often.
        let st = ScaleTable::new(600, 2, 1).unwrap();
        let w = Window::new(2, 310).unwrap();
        let idx = BoxIndex::new(1, vec![0, 0]);
        let mut passes = [0usize; 2];
        for (slot, p) in [0.05f64, 0.35].into_iter().enumerate() {
            for rep in 0..20u64 {
                let world = replica_seed(WorldSeed(2024), &[slot as i64], rep);
                let f = SeedField::new(p, world).unwrap();
                let filled = filled_seeds(&f, &w);
                if check_e6(&filled, &st, &idx).unwrap() {
                    passes[slot] += 1;
                }
            }
        }
        assert!(passes[0] > passes[1], "pass counts {passes:?}");
    }

    #[test]
    fn theta_estimates() {
        let e = theta_estimate(0.0, 30, 50, WorldSeed(11)).unwrap();
        assert_eq!(e.value, 1.0);
        // Dense seeds: the origin is almost surely cut off quickly.
        let e = theta_estimate(0.9, 30, 200, WorldSeed(12)).unwrap();
        assert!(e.value <= 0.01);
    }

    #[test]
    fn theta_stable_across_window_sizes() {
        // Finite-size proxy at p = 0.1: windows 200 and 400 agree within two
        // standard errors.
        let a = theta_estimate(0.1, 100, 300, WorldSeed(17)).unwrap();
        let b = theta_estimate(0.1, 200, 300, WorldSeed(18)).unwrap();
        assert!((a.value - b.value).abs() <= 2.0 * (a.stderr + b.stderr));
    }

    #[test]
    fn e1_pass_rate_improves_with_box_size() {
        // Crossing-event failures shrink as the box grows (the trend the
        // higher-scale recursion rests on), checked at p = 0.05 over fresh
        // fields.
        let boxes = 300u64;
        let mut fails = [0usize; 2];
        for (slot, l1) in [30i64, 60].into_iter().enumerate() {
            let st = ScaleTable::new(l1, 2, 1).unwrap();
            let idx = BoxIndex::new(1, vec![0, 0]);
            for b in 0..boxes {
                let world = replica_seed(WorldSeed(4242), &[l1], b);
                let f = SeedField::new(0.05, world).unwrap();
                let lab = nonseed_components_in_box(&f, &st, &idx).unwrap();
                if !check_e1(&lab, &st, &idx, 0.1, 0.93).unwrap() {
                    fails[slot] += 1;
                }
            }
        }
        assert!(
            fails[0] > fails[1],
            "expected fewer failures at L1 = 60: {fails:?}"
        );
    }

    #[test]
    fn filled_reach_examples() {
        let e = filled_reach_probability(0.0, 20, 50, WorldSeed(13)).unwrap();
        assert_eq!(e.value, 0.0);
        let e = filled_reach_probability(0.95, 10, 100, WorldSeed(14)).unwrap();
        assert!(e.value > 0.9);
        assert!(filled_reach_probability(0.5, 7, 10, WorldSeed(15)).is_err());
    }

    #[test]
    fn filled_reach_nonincreasing_in_m() {
        let p = 0.1;
        let a = filled_reach_probability(p, 10, 400, WorldSeed(16)).unwrap();
        let b = filled_reach_probability(p, 30, 400, WorldSeed(16)).unwrap();
        assert!(b.value <= a.value + 2.0 * (a.stderr + b.stderr));
    }

    #[test]
    fn chemical_distance_dominates_l1() {
        let f = field(0.3, 16);
        let region = SiteRange::closed(vec![-6, -6], vec![6, 6]);
        let sub = BoxSubgraph::nonseed(&f, region.clone(), false);
        let lab = ComponentLabeling::build(&sub);
        if let Some(c) = lab.component(0) {
            let sites: Vec<Site> = c
                .members
                .iter()
                .take(20)
                .map(|&i| region.site_at(i as usize))
                .collect();
            for x in &sites {
                for y in &sites {
                    if let Some(dv) = chemical_distance(&sub, x, y).unwrap() {
                        assert!(dv >= x.l1_distance(y));
                    }
                }
            }
        }
    }
}
