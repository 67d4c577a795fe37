//! Geometry of finite windows of `Z^d` and the multi-scale box hierarchy.
//!
//! At every scale `k` the lattice is partitioned into disjoint *cores* of side
//! `L_k / 3`, and covered by overlapping *boxes* of side `L_k` centred on the
//! cores. Side lengths follow the recursion `L_k = k^2 * L_{k-1}^d`, computed
//! in arbitrary precision so the table can never silently overflow. Cores are
//! half-open, boxes and inner parts closed.

use num_bigint::BigUint;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("dimension must be at least 2, got {0}")]
    BadDimension(usize),
    #[error("window half side must be positive, got {0}")]
    BadHalfSide(i64),
    #[error("base scale length {0} is invalid: {1}")]
    BadBaseLength(i64, &'static str),
    #[error("scale {0} exceeds the configured table (k_max = {1})")]
    ScaleOutOfRange(usize, usize),
    #[error("scale length L_{0} does not fit in signed 64-bit site coordinates")]
    ScaleOverflow(usize),
    #[error("inner part requires L_k divisible by 1000, got L_{0} = {1}")]
    InnerPartUnavailable(usize, i64),
    #[error("site has dimension {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("sites are not nearest neighbours")]
    NotNeighbours,
    #[error("empty site range")]
    EmptyRange,
}

/// A site of `Z^d`, identified by its integer coordinate vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site(pub Vec<i64>);

impl Site {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn origin(d: usize) -> Self {
        Site(vec![0; d])
    }

    pub fn l1_distance(&self, other: &Site) -> u64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.abs_diff(*b))
            .sum()
    }

    /// The 2d nearest neighbours of this site.
    pub fn neighbours(&self) -> Vec<Site> {
        let mut out = Vec::with_capacity(2 * self.dim());
        for axis in 0..self.dim() {
            for delta in [-1i64, 1] {
                let mut c = self.0.clone();
                c[axis] += delta;
                out.push(Site(c));
            }
        }
        out
    }
}

/// A lattice edge between nearest neighbours, stored in canonical
/// (lexicographically sorted) endpoint order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    a: Site,
    b: Site,
}

impl Edge {
    pub fn new(x: Site, y: Site) -> Result<Self, LatticeError> {
        if x.dim() != y.dim() {
            return Err(LatticeError::DimensionMismatch {
                got: y.dim(),
                expected: x.dim(),
            });
        }
        if x.l1_distance(&y) != 1 {
            return Err(LatticeError::NotNeighbours);
        }
        if x <= y {
            Ok(Edge { a: x, b: y })
        } else {
            Ok(Edge { a: y, b: x })
        }
    }

    pub fn endpoints(&self) -> (&Site, &Site) {
        (&self.a, &self.b)
    }
}

/// The finite window `[-half_side, half_side]^d` of `Z^d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    d: usize,
    half_side: i64,
}

impl Window {
    pub fn new(d: usize, half_side: i64) -> Result<Self, LatticeError> {
        if d < 2 {
            return Err(LatticeError::BadDimension(d));
        }
        if half_side < 1 {
            return Err(LatticeError::BadHalfSide(half_side));
        }
        Ok(Window { d, half_side })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn half_side(&self) -> i64 {
        self.half_side
    }

    /// Sites per axis.
    pub fn side(&self) -> i64 {
        2 * self.half_side + 1
    }

    pub fn site_count(&self) -> usize {
        (self.side() as usize).pow(self.d as u32)
    }

    pub fn contains(&self, s: &Site) -> bool {
        s.dim() == self.d && s.0.iter().all(|&c| c.abs() <= self.half_side)
    }

    /// True when `s` lies in the window and has a lattice neighbour outside it.
    pub fn on_boundary(&self, s: &Site) -> bool {
        self.contains(s) && s.0.iter().any(|&c| c.abs() == self.half_side)
    }

    /// Row-major flat index; ordering agrees with lexicographic coordinate
    /// order in any window, which the engine relies on for tie-breaking.
    pub fn index_of(&self, s: &Site) -> Option<usize> {
        if !self.contains(s) {
            return None;
        }
        let side = self.side() as usize;
        let mut idx = 0usize;
        for &c in &s.0 {
            idx = idx * side + (c + self.half_side) as usize;
        }
        Some(idx)
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        let side = self.side() as usize;
        let mut coords = vec![0i64; self.d];
        for axis in (0..self.d).rev() {
            coords[axis] = (idx % side) as i64 - self.half_side;
            idx /= side;
        }
        Site(coords)
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.site_count()).map(move |i| self.site_at(i))
    }

    pub fn as_range(&self) -> SiteRange {
        SiteRange::closed(
            vec![-self.half_side; self.d],
            vec![self.half_side; self.d],
        )
    }
}

/// One axis of a site range: `[lo, hi]` with an open/closed flag per end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxisRange {
    pub lo: i64,
    pub hi: i64,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl AxisRange {
    pub fn min_incl(&self) -> i64 {
        if self.lo_open {
            self.lo + 1
        } else {
            self.lo
        }
    }

    pub fn max_incl(&self) -> i64 {
        if self.hi_open {
            self.hi - 1
        } else {
            self.hi
        }
    }

    pub fn len(&self) -> i64 {
        self.max_incl() - self.min_incl() + 1
    }

    pub fn contains(&self, c: i64) -> bool {
        c >= self.min_incl() && c <= self.max_incl()
    }
}

/// An axis-aligned box of sites, one [`AxisRange`] per axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteRange {
    axes: Vec<AxisRange>,
}

impl SiteRange {
    pub fn closed(lo: Vec<i64>, hi: Vec<i64>) -> Self {
        let axes = lo
            .into_iter()
            .zip(hi)
            .map(|(lo, hi)| AxisRange {
                lo,
                hi,
                lo_open: false,
                hi_open: false,
            })
            .collect();
        SiteRange { axes }
    }

    pub fn half_open(lo: Vec<i64>, hi: Vec<i64>) -> Self {
        let axes = lo
            .into_iter()
            .zip(hi)
            .map(|(lo, hi)| AxisRange {
                lo,
                hi,
                lo_open: false,
                hi_open: true,
            })
            .collect();
        SiteRange { axes }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, a: usize) -> &AxisRange {
        &self.axes[a]
    }

    pub fn is_empty(&self) -> bool {
        self.axes.iter().any(|ax| ax.len() <= 0)
    }

    pub fn site_count(&self) -> u64 {
        if self.is_empty() {
            return 0;
        }
        self.axes.iter().map(|ax| ax.len() as u64).product()
    }

    pub fn contains(&self, s: &Site) -> bool {
        s.dim() == self.dim() && s.0.iter().zip(&self.axes).all(|(&c, ax)| ax.contains(c))
    }

    /// True when `other` is contained in `self`.
    pub fn contains_range(&self, other: &SiteRange) -> bool {
        !other.is_empty()
            && self.axes.iter().zip(&other.axes).all(|(a, b)| {
                a.min_incl() <= b.min_incl() && b.max_incl() <= a.max_incl()
            })
    }

    pub fn intersect(&self, other: &SiteRange) -> SiteRange {
        let axes = self
            .axes
            .iter()
            .zip(&other.axes)
            .map(|(a, b)| AxisRange {
                lo: a.min_incl().max(b.min_incl()),
                hi: a.max_incl().min(b.max_incl()),
                lo_open: false,
                hi_open: false,
            })
            .collect();
        SiteRange { axes }
    }

    /// Row-major iteration over all sites of the range.
    pub fn iter(&self) -> RangeIter<'_> {
        RangeIter {
            range: self,
            cursor: if self.is_empty() {
                None
            } else {
                Some(self.axes.iter().map(|ax| ax.min_incl()).collect())
            },
        }
    }

    /// Dense local index of a site within the range (row-major).
    pub fn index_of(&self, s: &Site) -> Option<usize> {
        if !self.contains(s) {
            return None;
        }
        let mut idx = 0usize;
        for (c, ax) in s.0.iter().zip(&self.axes) {
            idx = idx * ax.len() as usize + (c - ax.min_incl()) as usize;
        }
        Some(idx)
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        let mut coords = vec![0i64; self.dim()];
        for axis in (0..self.dim()).rev() {
            let len = self.axes[axis].len() as usize;
            coords[axis] = (idx % len) as i64 + self.axes[axis].min_incl();
            idx /= len;
        }
        Site(coords)
    }
}

pub struct RangeIter<'a> {
    range: &'a SiteRange,
    cursor: Option<Vec<i64>>,
}

impl Iterator for RangeIter<'_> {
    type Item = Site;

    fn next(&mut self) -> Option<Site> {
        let cur = self.cursor.as_mut()?;
        let out = Site(cur.clone());
        let mut exhausted = true;
        for axis in (0..self.range.dim()).rev() {
            let ax = self.range.axis(axis);
            if cur[axis] < ax.max_incl() {
                cur[axis] += 1;
                exhausted = false;
                break;
            }
            cur[axis] = ax.min_incl();
        }
        if exhausted {
            self.cursor = None;
        }
        Some(out)
    }
}

/// All sites of `range` having at least one lattice neighbour outside it.
pub fn boundary_sites(range: &SiteRange) -> Result<Vec<Site>, LatticeError> {
    if range.is_empty() {
        return Err(LatticeError::EmptyRange);
    }
    let d = range.dim();
    let mut out = Vec::new();
    // Walk prefixes over axes 0..d-1; for the last axis either every value is
    // a boundary site (some earlier coordinate extremal) or only the two ends.
    let prefix_range = SiteRange {
        axes: range.axes[..d - 1].to_vec(),
    };
    let last = range.axis(d - 1);
    let emit = |coords: &[i64], c: i64, out: &mut Vec<Site>| {
        let mut v = coords.to_vec();
        v.push(c);
        out.push(Site(v));
    };
    if d == 1 {
        for c in last.min_incl()..=last.max_incl() {
            if c == last.min_incl() || c == last.max_incl() {
                emit(&[], c, &mut out);
            }
        }
        return Ok(out);
    }
    for prefix in prefix_range.iter() {
        let extremal = prefix
            .0
            .iter()
            .enumerate()
            .any(|(a, &c)| c == range.axis(a).min_incl() || c == range.axis(a).max_incl());
        if extremal {
            for c in last.min_incl()..=last.max_incl() {
                emit(&prefix.0, c, &mut out);
            }
        } else {
            emit(&prefix.0, last.min_incl(), &mut out);
            if last.max_incl() != last.min_incl() {
                emit(&prefix.0, last.max_incl(), &mut out);
            }
        }
    }
    Ok(out)
}

/// Address of one core/box at scale `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoxIndex {
    pub k: usize,
    pub i: Vec<i64>,
}

impl BoxIndex {
    pub fn new(k: usize, i: Vec<i64>) -> Self {
        BoxIndex { k, i }
    }

    pub fn linf_distance(&self, other: &BoxIndex) -> u64 {
        self.i
            .iter()
            .zip(&other.i)
            .map(|(a, b)| a.abs_diff(*b))
            .max()
            .unwrap_or(0)
    }
}

/// Exact side lengths `L_1, ..., L_{k_max}` via `L_k = k^2 * L_{k-1}^d`.
pub fn scale_lengths(l1: i64, d: usize, k_max: usize) -> Result<Vec<BigUint>, LatticeError> {
    validate_l1(l1)?;
    if d < 2 {
        return Err(LatticeError::BadDimension(d));
    }
    if k_max < 1 {
        return Err(LatticeError::ScaleOutOfRange(0, k_max));
    }
    let mut lengths = Vec::with_capacity(k_max);
    lengths.push(BigUint::from(l1 as u64));
    for k in 2..=k_max {
        let prev: &BigUint = lengths.last().unwrap();
        lengths.push(BigUint::from((k * k) as u64) * prev.pow(d as u32));
    }
    Ok(lengths)
}

fn validate_l1(l1: i64) -> Result<(), LatticeError> {
    if l1 < 6 {
        return Err(LatticeError::BadBaseLength(l1, "must be at least 6"));
    }
    if l1 % 6 != 0 {
        return Err(LatticeError::BadBaseLength(l1, "must be divisible by 6"));
    }
    Ok(())
}

/// The scale table: exact side lengths plus cached signed-64 views for
/// geometry on concrete windows.
///
/// `L_1` must be divisible by 6 so that `L_k / 3` and `L_k / 6` are exact
/// integers at every scale; it must additionally be divisible by 6000 when
/// inner parts are used, so that `499 L_k / 1000` is exact.
#[derive(Debug, Clone)]
pub struct ScaleTable {
    l1: i64,
    d: usize,
    lengths: Vec<BigUint>,
    lengths_i64: Vec<Option<i64>>,
}

impl ScaleTable {
    pub fn new(l1: i64, d: usize, k_max: usize) -> Result<Self, LatticeError> {
        let lengths = scale_lengths(l1, d, k_max)?;
        let lengths_i64 = lengths.iter().map(|l| biguint_to_i64(l)).collect();
        Ok(ScaleTable {
            l1,
            d,
            lengths,
            lengths_i64,
        })
    }

    pub fn l1(&self) -> i64 {
        self.l1
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn k_max(&self) -> usize {
        self.lengths.len()
    }

    pub fn length(&self, k: usize) -> Result<&BigUint, LatticeError> {
        self.lengths
            .get(k.checked_sub(1).ok_or(LatticeError::ScaleOutOfRange(k, self.k_max()))?)
            .ok_or(LatticeError::ScaleOutOfRange(k, self.k_max()))
    }

    /// `L_k` as machine integer, required by all concrete geometry.
    pub fn length_i64(&self, k: usize) -> Result<i64, LatticeError> {
        if k == 0 || k > self.k_max() {
            return Err(LatticeError::ScaleOutOfRange(k, self.k_max()));
        }
        self.lengths_i64[k - 1].ok_or(LatticeError::ScaleOverflow(k))
    }

    /// Core side `L_k / 3`.
    pub fn cell(&self, k: usize) -> Result<i64, LatticeError> {
        Ok(self.length_i64(k)? / 3)
    }

    fn check_dim(&self, idx: &BoxIndex) -> Result<(), LatticeError> {
        if idx.i.len() != self.d {
            return Err(LatticeError::DimensionMismatch {
                got: idx.i.len(),
                expected: self.d,
            });
        }
        Ok(())
    }

    /// The half-open core `(L_k/3) i + [-L_k/6, L_k/6)^d`.
    pub fn core_of(&self, idx: &BoxIndex) -> Result<SiteRange, LatticeError> {
        self.check_dim(idx)?;
        let l = self.length_i64(idx.k)?;
        let (cell, half) = (l / 3, l / 6);
        let lo = idx.i.iter().map(|&c| c * cell - half).collect();
        let hi = idx.i.iter().map(|&c| c * cell + half).collect();
        Ok(SiteRange::half_open(lo, hi))
    }

    /// The closed box `(L_k/3) i + [-L_k/2, L_k/2]^d`.
    pub fn box_of(&self, idx: &BoxIndex) -> Result<SiteRange, LatticeError> {
        self.check_dim(idx)?;
        let l = self.length_i64(idx.k)?;
        let (cell, half) = (l / 3, l / 2);
        let lo = idx.i.iter().map(|&c| c * cell - half).collect();
        let hi = idx.i.iter().map(|&c| c * cell + half).collect();
        Ok(SiteRange::closed(lo, hi))
    }

    /// The closed inner part `(L_k/3) i + [-499 L_k/1000, 499 L_k/1000]^d`.
    pub fn inner_part(&self, idx: &BoxIndex) -> Result<SiteRange, LatticeError> {
        self.check_dim(idx)?;
        let l = self.length_i64(idx.k)?;
        if l % 1000 != 0 {
            return Err(LatticeError::InnerPartUnavailable(idx.k, l));
        }
        let (cell, half) = (l / 3, 499 * (l / 1000));
        let lo = idx.i.iter().map(|&c| c * cell - half).collect();
        let hi = idx.i.iter().map(|&c| c * cell + half).collect();
        Ok(SiteRange::closed(lo, hi))
    }

    /// The unique core index containing `s` at scale `k`.
    pub fn core_index_containing(&self, s: &Site, k: usize) -> Result<BoxIndex, LatticeError> {
        if s.dim() != self.d {
            return Err(LatticeError::DimensionMismatch {
                got: s.dim(),
                expected: self.d,
            });
        }
        let l = self.length_i64(k)?;
        let (cell, half) = (l / 3, l / 6);
        let i = s.0.iter().map(|&c| (c + half).div_euclid(cell)).collect();
        Ok(BoxIndex::new(k, i))
    }

    /// All box indices at scale `k` whose box contains `s`. Sites interior to
    /// a core lie in `3^d` boxes; sites on shared box faces can lie in more.
    pub fn boxes_containing(&self, s: &Site, k: usize) -> Result<Vec<BoxIndex>, LatticeError> {
        if s.dim() != self.d {
            return Err(LatticeError::DimensionMismatch {
                got: s.dim(),
                expected: self.d,
            });
        }
        let l = self.length_i64(k)?;
        let (cell, half) = (l / 3, l / 2);
        let per_axis: Vec<Vec<i64>> = s
            .0
            .iter()
            .map(|&c| {
                let lo = div_ceil(c - half, cell);
                let hi = (c + half).div_euclid(cell);
                (lo..=hi).collect()
            })
            .collect();
        let mut out = Vec::new();
        let mut stack = vec![Vec::with_capacity(self.d)];
        while let Some(prefix) = stack.pop() {
            if prefix.len() == self.d {
                out.push(BoxIndex::new(k, prefix));
                continue;
            }
            let axis = prefix.len();
            for &v in per_axis[axis].iter().rev() {
                let mut next = prefix.clone();
                next.push(v);
                stack.push(next);
            }
        }
        out.sort();
        Ok(out)
    }

    /// Box indices at scale `k` whose box lies entirely inside `window`.
    pub fn boxes_inside_window(
        &self,
        k: usize,
        window: &Window,
    ) -> Result<Vec<BoxIndex>, LatticeError> {
        let l = self.length_i64(k)?;
        let (cell, half) = (l / 3, l / 2);
        let reach = window.half_side() - half;
        if reach < 0 {
            return Ok(Vec::new());
        }
        let max_i = reach / cell;
        let axis: Vec<i64> = (-max_i..=max_i).collect();
        let mut out = Vec::new();
        let mut idx = vec![0usize; self.d];
        loop {
            out.push(BoxIndex::new(
                k,
                idx.iter().map(|&j| axis[j]).collect::<Vec<_>>(),
            ));
            let mut axis_pos = self.d;
            loop {
                if axis_pos == 0 {
                    return Ok(out);
                }
                axis_pos -= 1;
                if idx[axis_pos] + 1 < axis.len() {
                    idx[axis_pos] += 1;
                    break;
                }
                idx[axis_pos] = 0;
            }
        }
    }
}

fn biguint_to_i64(v: &BigUint) -> Option<i64> {
    let digits = v.to_u64_digits();
    match digits.len() {
        0 => Some(0),
        1 if digits[0] <= i64::MAX as u64 => Some(digits[0] as i64),
        _ => None,
    }
}

fn div_ceil(a: i64, b: i64) -> i64 {
    // b > 0 in all call sites
    let q = a.div_euclid(b);
    if a.rem_euclid(b) != 0 {
        q + 1
    } else {
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(l1: i64, d: usize, k_max: usize) -> ScaleTable {
        ScaleTable::new(l1, d, k_max).unwrap()
    }

    #[test]
    fn scale_lengths_follow_recursion() {
        let l = scale_lengths(6000, 2, 2).unwrap();
        assert_eq!(l[0], BigUint::from(6000u64));
        assert_eq!(l[1], BigUint::from(4u64 * 6000 * 6000));

        let l = scale_lengths(6000, 2, 1).unwrap();
        assert_eq!(l, vec![BigUint::from(6000u64)]);

        let l = scale_lengths(6000, 3, 2).unwrap();
        assert_eq!(l[1], BigUint::from(4u64) * BigUint::from(6000u64).pow(3));
    }

    #[test]
    fn scale_lengths_strictly_increase_without_overflow() {
        // d = 4 at k = 3 exceeds u128; the exact table must still be correct.
        let l = scale_lengths(6000, 4, 3).unwrap();
        assert!(l[0] < l[1] && l[1] < l[2]);
        let expected = BigUint::from(9u64) * (BigUint::from(4u64) * BigUint::from(6000u64).pow(4)).pow(4);
        assert_eq!(l[2], expected);
        let st = ScaleTable::new(6000, 4, 3).unwrap();
        assert!(matches!(st.length_i64(3), Err(LatticeError::ScaleOverflow(3))));
    }

    #[test]
    fn invalid_l1_rejected() {
        assert!(scale_lengths(5, 2, 1).is_err());
        assert!(scale_lengths(6001, 2, 1).is_err());
        assert!(scale_lengths(6, 2, 1).is_ok());
    }

    #[test]
    fn core_of_matches_examples() {
        let st = table(6000, 2, 1);
        let r = st.core_of(&BoxIndex::new(1, vec![0, 0])).unwrap();
        assert_eq!(r.axis(0).min_incl(), -1000);
        assert_eq!(r.axis(0).max_incl(), 999);
        assert_eq!(r.site_count(), 2000 * 2000);

        let r = st.core_of(&BoxIndex::new(1, vec![1, 0])).unwrap();
        assert_eq!(r.axis(0).min_incl(), 1000);
        assert_eq!(r.axis(0).max_incl(), 2999);
        assert_eq!(r.axis(1).min_incl(), -1000);
    }

    #[test]
    fn cores_partition_every_site() {
        let st = table(6, 2, 1);
        let window = Window::new(2, 10).unwrap();
        for s in window.sites() {
            let idx = st.core_index_containing(&s, 1).unwrap();
            assert!(st.core_of(&idx).unwrap().contains(&s));
            // No neighbouring core also contains it.
            let mut hits = 0;
            for di in -1..=1 {
                for dj in -1..=1 {
                    let cand = BoxIndex::new(1, vec![idx.i[0] + di, idx.i[1] + dj]);
                    if st.core_of(&cand).unwrap().contains(&s) {
                        hits += 1;
                    }
                }
            }
            assert_eq!(hits, 1);
        }
    }

    #[test]
    fn box_of_matches_examples() {
        let st = table(6000, 2, 1);
        let r = st.box_of(&BoxIndex::new(1, vec![0, 0])).unwrap();
        assert_eq!(r.axis(0).min_incl(), -3000);
        assert_eq!(r.axis(0).max_incl(), 3000);

        let r = st.box_of(&BoxIndex::new(1, vec![-1, -1])).unwrap();
        assert_eq!(r.axis(0).min_incl(), -5000);
        assert_eq!(r.axis(0).max_incl(), 1000);
        assert_eq!(r.axis(1).min_incl(), -5000);
    }

    #[test]
    fn boxes_contain_their_cores_and_neighbours_overlap() {
        let st = table(6, 2, 1);
        let l = st.length_i64(1).unwrap();
        for i0 in -2..=2 {
            for i1 in -2..=2 {
                let idx = BoxIndex::new(1, vec![i0, i1]);
                let b = st.box_of(&idx).unwrap();
                let c = st.core_of(&idx).unwrap();
                assert!(b.contains_range(&c));

                let nb = st.box_of(&BoxIndex::new(1, vec![i0 + 1, i1])).unwrap();
                let overlap = b.intersect(&nb);
                assert!(overlap.site_count() as i64 >= (l / 3) * l.pow(1));
            }
        }
    }

    #[test]
    fn inner_part_margins() {
        let st = table(6000, 2, 1);
        let idx = BoxIndex::new(1, vec![0, 0]);
        let inner = st.inner_part(&idx).unwrap();
        assert_eq!(inner.axis(0).min_incl(), -2994);
        assert_eq!(inner.axis(0).max_incl(), 2994);
        let b = st.box_of(&idx).unwrap();
        assert!(b.contains_range(&inner));
        for a in 0..2 {
            assert_eq!(b.axis(a).max_incl() - inner.axis(a).max_incl(), 6000 / 1000);
        }
    }

    #[test]
    fn inner_part_requires_divisibility() {
        let st = table(6, 2, 1);
        assert!(matches!(
            st.inner_part(&BoxIndex::new(1, vec![0, 0])),
            Err(LatticeError::InnerPartUnavailable(1, 6))
        ));
    }

    #[test]
    fn boundary_sites_examples() {
        let single = SiteRange::closed(vec![0, 0], vec![0, 0]);
        assert_eq!(boundary_sites(&single).unwrap(), vec![Site(vec![0, 0])]);

        let ring = SiteRange::closed(vec![-1, -1], vec![1, 1]);
        let b = boundary_sites(&ring).unwrap();
        assert_eq!(b.len(), 8);
        assert!(!b.contains(&Site(vec![0, 0])));

        // Perimeter of an n x n site square is n^2 - (n-2)^2 = 4n - 4.
        let big = SiteRange::closed(vec![-3000, -3000], vec![3000, 3000]);
        assert_eq!(boundary_sites(&big).unwrap().len(), 4 * 6001 - 4);
    }

    #[test]
    fn boxes_containing_origin() {
        let st = table(6000, 2, 1);
        let found = st.boxes_containing(&Site::origin(2), 1).unwrap();
        assert_eq!(found.len(), 9);
        for idx in &found {
            assert!(st.box_of(idx).unwrap().contains(&Site::origin(2)));
            assert!(idx.i.iter().all(|c| c.abs() <= 1));
        }
        // A site deep inside one core still lies in 3^d overlapping boxes.
        let deep = Site(vec![10, -7]);
        let found = st.boxes_containing(&deep, 1).unwrap();
        assert_eq!(found.len(), 9);
        for idx in &found {
            assert!(st.box_of(idx).unwrap().contains(&deep));
        }
    }

    #[test]
    fn core_index_is_left_inverse() {
        let st = table(6, 2, 1);
        for i0 in -3..=3 {
            for i1 in -3..=3 {
                let idx = BoxIndex::new(1, vec![i0, i1]);
                for s in st.core_of(&idx).unwrap().iter() {
                    assert_eq!(st.core_index_containing(&s, 1).unwrap(), idx);
                }
            }
        }
    }

    #[test]
    fn edges_are_canonical() {
        let e1 = Edge::new(Site(vec![1, 0]), Site(vec![0, 0])).unwrap();
        let e2 = Edge::new(Site(vec![0, 0]), Site(vec![1, 0])).unwrap();
        assert_eq!(e1, e2);
        assert!(Edge::new(Site(vec![0, 0]), Site(vec![1, 1])).is_err());
    }

    #[test]
    fn window_invariants() {
        let w = Window::new(2, 2).unwrap();
        assert_eq!(w.site_count(), 25);
        assert!(w.contains(&Site::origin(2)));
        assert!(Window::new(1, 5).is_err());
        // Flat index ordering is lexicographic coordinate ordering.
        let mut sites: Vec<Site> = w.sites().collect();
        let mut sorted = sites.clone();
        sorted.sort();
        assert_eq!(sites, sorted);
        sites.dedup();
        assert_eq!(sites.len(), 25);
    }
}
