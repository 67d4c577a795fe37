//! Deterministic, order-independent randomness.
//!
//! Every random quantity is a pure function of a 64-bit world seed, a purpose
//! tag and the lattice coordinates it belongs to, evaluated through a keyed
//! avalanche hash. Finite-window runs are therefore exact restrictions of a
//! single infinite-lattice assignment: enlarging the window, reordering
//! traversals or evaluating in parallel can never change a value.
//!
//! Exponential passage times use the inverse-CDF transform, one uniform per
//! value, so replays are bit-exact.

use crate::lattice::{Edge, Site};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RandomnessError {
    #[error("probability must lie in [0, 1], got {0}")]
    BadProbability(f64),
    #[error("rate must be positive, got {0}")]
    BadRate(f64),
    #[error("the origin can never host a seed")]
    OriginSeed,
    #[error("override time must be strictly positive, got {0}")]
    NonPositiveOverride(f64),
    #[error("override file line {line}: {reason}")]
    BadOverrideLine { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Lattice(#[from] crate::lattice::LatticeError),
}

/// The master seed from which every stream in a run is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WorldSeed(pub u64);

const TAG_SEED: u64 = 0x7365_6564_0000_0001; // "seed"
const TAG_T1: u64 = 0x7431_0000_0000_0002; // rate-1 passage times
const TAG_TLAMBDA: u64 = 0x746c_0000_0000_0003; // rate-lambda passage times
const TAG_REPLICA: u64 = 0x7265_706c_0000_0004; // replica seed derivation
const TAG_PAIRS: u64 = 0x7072_7300_0000_0005; // sampled-pair selection

#[inline]
fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn chain(seed: u64, tag: u64, parts: &[i64]) -> u64 {
    let mut acc = mix(seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    for &p in parts {
        acc = mix(acc ^ (p as u64).wrapping_mul(0xd134_2543_de82_ef95));
    }
    mix(acc)
}

/// Uniform in the open interval (0, 1).
#[inline]
fn unit_open(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / 4503599627370496.0)
}

/// Keyed uniform draw in (0, 1) for arbitrary coordinate keys.
pub fn keyed_unit(world: WorldSeed, tag: u64, parts: &[i64]) -> f64 {
    unit_open(chain(world.0, tag, parts))
}

/// Derive an independent world seed for a sweep replica.
pub fn replica_seed(master: WorldSeed, cell: &[i64], replica: u64) -> WorldSeed {
    let mut parts: Vec<i64> = cell.to_vec();
    parts.push(replica as i64);
    WorldSeed(chain(master.0, TAG_REPLICA, &parts))
}

/// Keyed stream used to pick reproducible sample pairs in large-component
/// checks.
pub fn keyed_index(world: WorldSeed, salt: u64, draw: u64, bound: usize) -> usize {
    debug_assert!(bound > 0);
    (chain(world.0, TAG_PAIRS ^ salt, &[draw as i64]) % bound as u64) as usize
}

/// Raw Bernoulli(p) indicator at a site, with no origin exception. This is
/// the stream [`SeedField::is_seed`] consults; estimators of ordinary site
/// percolation use it directly.
pub fn bernoulli_site(world: WorldSeed, s: &Site, p: f64) -> bool {
    keyed_unit(world, TAG_SEED, &s.0) < p
}

/// Bernoulli seed placement of density `p` on all sites except the origin,
/// plus optional forced seeds for non-monotonicity experiments.
#[derive(Debug, Clone)]
pub struct SeedField {
    p: f64,
    world: WorldSeed,
    forced: Vec<Site>,
}

impl SeedField {
    pub fn new(p: f64, world: WorldSeed) -> Result<Self, RandomnessError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(RandomnessError::BadProbability(p));
        }
        Ok(SeedField {
            p,
            world,
            forced: Vec::new(),
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn world(&self) -> WorldSeed {
        self.world
    }

    pub fn forced_seeds(&self) -> &[Site] {
        &self.forced
    }

    /// Whether `s` hosts a seed. The origin never does.
    pub fn is_seed(&self, s: &Site) -> bool {
        if s.0.iter().all(|&c| c == 0) {
            return false;
        }
        if self.forced.contains(s) {
            return true;
        }
        bernoulli_site(self.world, s, self.p)
    }

    /// The same field with `s` forced to host a seed.
    pub fn with_extra_seed(&self, s: Site) -> Result<Self, RandomnessError> {
        if s.0.iter().all(|&c| c == 0) {
            return Err(RandomnessError::OriginSeed);
        }
        let mut out = self.clone();
        if !out.forced.contains(&s) {
            out.forced.push(s);
        }
        Ok(out)
    }
}

/// Which passage-time family an attempt draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RateClass {
    Rate1,
    RateLambda,
}

/// Per-edge override table: an optional default applied to every edge plus
/// explicit per-edge exceptions. Both times are strictly positive.
#[derive(Debug, Clone, Default)]
pub struct OverrideTable {
    default: Option<(f64, f64)>,
    per_edge: HashMap<Edge, (f64, f64)>,
}

impl OverrideTable {
    pub fn new() -> Self {
        OverrideTable::default()
    }

    pub fn with_default(t1: f64, tl: f64) -> Result<Self, RandomnessError> {
        check_positive(t1)?;
        check_positive(tl)?;
        Ok(OverrideTable {
            default: Some((t1, tl)),
            per_edge: HashMap::new(),
        })
    }

    pub fn set(&mut self, e: Edge, t1: f64, tl: f64) -> Result<(), RandomnessError> {
        check_positive(t1)?;
        check_positive(tl)?;
        self.per_edge.insert(e, (t1, tl));
        Ok(())
    }

    pub fn lookup(&self, e: &Edge) -> Option<(f64, f64)> {
        self.per_edge.get(e).copied().or(self.default)
    }

    pub fn is_empty(&self) -> bool {
        self.default.is_none() && self.per_edge.is_empty()
    }

    /// Parse the structured text format: one `default t1 tl` line at most and
    /// `edge x0 .. x(d-1) y0 .. y(d-1) t1 tl` lines, `#` comments allowed.
    pub fn parse(text: &str) -> Result<Self, RandomnessError> {
        let mut table = OverrideTable::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |reason: String| RandomnessError::BadOverrideLine {
                line: lineno + 1,
                reason,
            };
            match fields[0] {
                "default" => {
                    if fields.len() != 3 {
                        return Err(bad("expected `default t1 tlambda`".into()));
                    }
                    let t1 = parse_time(fields[1], lineno)?;
                    let tl = parse_time(fields[2], lineno)?;
                    table.default = Some((t1, tl));
                }
                "edge" => {
                    let n = fields.len() - 3;
                    if n < 4 || n % 2 != 0 {
                        return Err(bad(
                            "expected `edge <d coords> <d coords> t1 tlambda`".into(),
                        ));
                    }
                    let d = n / 2;
                    let coord = |f: &str| {
                        f.parse::<i64>()
                            .map_err(|e| bad(format!("bad coordinate {f:?}: {e}")))
                    };
                    let a = Site(fields[1..1 + d].iter().map(|f| coord(f)).collect::<Result<_, _>>()?);
                    let b = Site(
                        fields[1 + d..1 + 2 * d]
                            .iter()
                            .map(|f| coord(f))
                            .collect::<Result<_, _>>()?,
                    );
                    let t1 = parse_time(fields[1 + 2 * d], lineno)?;
                    let tl = parse_time(fields[2 + 2 * d], lineno)?;
                    table.set(Edge::new(a, b)?, t1, tl)?;
                }
                other => return Err(bad(format!("unknown directive {other:?}"))),
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, RandomnessError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Serialize back to the text format (exact via hex float round trip is
    /// unnecessary; 17 significant digits reproduce every f64).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some((t1, tl)) = self.default {
            let _ = writeln!(out, "default {} {}", fmt_f64(t1), fmt_f64(tl));
        }
        let mut entries: Vec<_> = self.per_edge.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        for (e, (t1, tl)) in entries {
            let (a, b) = e.endpoints();
            let coords = |s: &Site| {
                s.0.iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let _ = writeln!(
                out,
                "edge {} {} {} {}",
                coords(a),
                coords(b),
                fmt_f64(*t1),
                fmt_f64(*tl)
            );
        }
        out
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.17e}")
}

fn parse_time(f: &str, lineno: usize) -> Result<f64, RandomnessError> {
    let t: f64 = f.parse().map_err(|e| RandomnessError::BadOverrideLine {
        line: lineno + 1,
        reason: format!("bad time {f:?}: {e}"),
    })?;
    check_positive(t)?;
    Ok(t)
}

fn check_positive(t: f64) -> Result<(), RandomnessError> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(RandomnessError::NonPositiveOverride(t));
    }
    Ok(())
}

/// Both exponential passage-time families, keyed per canonical edge, with an
/// optional override table taking precedence.
#[derive(Debug, Clone)]
pub struct PassageTimeField {
    lambda: f64,
    world: WorldSeed,
    overrides: OverrideTable,
}

impl PassageTimeField {
    pub fn new(lambda: f64, world: WorldSeed) -> Result<Self, RandomnessError> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(RandomnessError::BadRate(lambda));
        }
        Ok(PassageTimeField {
            lambda,
            world,
            overrides: OverrideTable::new(),
        })
    }

    pub fn with_overrides(mut self, overrides: OverrideTable) -> Self {
        self.overrides = overrides;
        self
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn world(&self) -> WorldSeed {
        self.world
    }

    pub fn overrides(&self) -> &OverrideTable {
        &self.overrides
    }

    /// The passage time of edge `e` for the requested rate class. Strictly
    /// positive, and a pure function of `(world, e, class)`.
    pub fn passage_time(&self, e: &Edge, class: RateClass) -> f64 {
        if let Some((t1, tl)) = self.overrides.lookup(e) {
            return match class {
                RateClass::Rate1 => t1,
                RateClass::RateLambda => tl,
            };
        }
        let (a, b) = e.endpoints();
        self.passage_time_raw(&a.0, &b.0, class)
    }

    /// Hash path shared by the edge and slice entry points; `lo <= hi` in
    /// canonical (lexicographic) order.
    pub(crate) fn passage_time_raw(&self, lo: &[i64], hi: &[i64], class: RateClass) -> f64 {
        let (tag, rate) = match class {
            RateClass::Rate1 => (TAG_T1, 1.0),
            RateClass::RateLambda => (TAG_TLAMBDA, self.lambda),
        };
        let mut acc = mix(self.world.0 ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for &p in lo.iter().chain(hi) {
            acc = mix(acc ^ (p as u64).wrapping_mul(0xd134_2543_de82_ef95));
        }
        let u = unit_open(mix(acc));
        -(1.0 - u).ln() / rate
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Window;

    fn edge(ax: i64, ay: i64, bx: i64, by: i64) -> Edge {
        Edge::new(Site(vec![ax, ay]), Site(vec![bx, by])).unwrap()
    }

    #[test]
    fn origin_is_never_a_seed() {
        let f = SeedField::new(1.0, WorldSeed(7)).unwrap();
        assert!(!f.is_seed(&Site::origin(2)));
        assert!(f.is_seed(&Site(vec![1, 0])));
        let f = SeedField::new(0.0, WorldSeed(7)).unwrap();
        for s in Window::new(2, 3).unwrap().sites() {
            assert!(!f.is_seed(&s));
        }
    }

    #[test]
    fn seed_density_matches_p() {
        let p = 0.3;
        let f = SeedField::new(p, WorldSeed(20240401)).unwrap();
        let w = Window::new(2, 100).unwrap();
        let n = w.site_count() - 1; // origin excluded from the Bernoulli field
        let count = w.sites().filter(|s| f.is_seed(s)).count();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((count as f64 / n as f64 - p).abs() < 3.0 * se);
    }

    #[test]
    fn with_extra_seed_semantics() {
        let f = SeedField::new(0.5, WorldSeed(3)).unwrap();
        let s = Site(vec![2, -1]);
        let g = f.with_extra_seed(s.clone()).unwrap();
        assert!(g.is_seed(&s));
        let h = g.with_extra_seed(s.clone()).unwrap();
        assert_eq!(g.forced_seeds(), h.forced_seeds());
        assert!(f.with_extra_seed(Site::origin(2)).is_err());

        // Forcing differs from the base field at exactly one site (or zero if
        // it was already a seed).
        let w = Window::new(2, 10).unwrap();
        let diffs = w
            .sites()
            .filter(|v| f.is_seed(v) != g.is_seed(v))
            .collect::<Vec<_>>();
        assert!(diffs.len() <= 1);
        if diffs.len() == 1 {
            assert_eq!(diffs[0], s);
        }
    }

    #[test]
    fn passage_times_are_deterministic_and_positive() {
        let f = PassageTimeField::new(0.01, WorldSeed(99)).unwrap();
        let e = edge(0, 0, 1, 0);
        let a = f.passage_time(&e, RateClass::Rate1);
        let b = f.passage_time(&e, RateClass::Rate1);
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(a > 0.0);
        let c = f.passage_time(&e, RateClass::RateLambda);
        assert!(c > 0.0);
        assert_ne!(a.to_bits(), c.to_bits());
    }

    fn rate1_samples(n: usize) -> Vec<f64> {
        let f = PassageTimeField::new(1.0, WorldSeed(5150)).unwrap();
        (0..n)
            .map(|i| {
                let x = i as i64;
                f.passage_time(&edge(x, 0, x, 1), RateClass::Rate1)
            })
            .collect()
    }

    #[test]
    fn exponential_means() {
        let n = 100_000;
        let mean1: f64 = rate1_samples(n).iter().sum::<f64>() / n as f64;
        // Exp(1): mean 1, sd 1.
        assert!((mean1 - 1.0).abs() < 3.0 / (n as f64).sqrt());

        let f = PassageTimeField::new(0.01, WorldSeed(5151)).unwrap();
        let mean: f64 = (0..n)
            .map(|i| f.passage_time(&edge(i as i64, 0, i as i64, 1), RateClass::RateLambda))
            .sum::<f64>()
            / n as f64;
        // Exp(0.01): mean 100, sd 100.
        assert!((mean - 100.0).abs() < 300.0 / (n as f64).sqrt());
    }

    #[test]
    fn kolmogorov_smirnov_exp1() {
        let mut xs = rate1_samples(100_000);
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let mut d: f64 = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let cdf = 1.0 - (-x).exp();
            let lo = i as f64 / n;
            let hi = (i + 1) as f64 / n;
            d = d.max((cdf - lo).abs()).max((hi - cdf).abs());
        }
        // Critical value at significance 0.001.
        assert!(d < 1.949 / n.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn streams_are_uncorrelated() {
        let world = WorldSeed(77);
        let n = 100_000usize;
        let mut seed_u = Vec::with_capacity(n);
        let mut t1_u = Vec::with_capacity(n);
        let mut tl_u = Vec::with_capacity(n);
        for i in 0..n {
            let key = [i as i64, -3];
            seed_u.push(keyed_unit(world, TAG_SEED, &key));
            t1_u.push(keyed_unit(world, TAG_T1, &key));
            tl_u.push(keyed_unit(world, TAG_TLAMBDA, &key));
        }
        let corr = |a: &[f64], b: &[f64]| {
            let n = a.len() as f64;
            let ma = a.iter().sum::<f64>() / n;
            let mb = b.iter().sum::<f64>() / n;
            let mut num = 0.0;
            let mut va = 0.0;
            let mut vb = 0.0;
            for (x, y) in a.iter().zip(b) {
                num += (x - ma) * (y - mb);
                va += (x - ma).powi(2);
                vb += (y - mb).powi(2);
            }
            num / (va.sqrt() * vb.sqrt())
        };
        assert!(corr(&seed_u, &t1_u).abs() < 0.01);
        assert!(corr(&seed_u, &tl_u).abs() < 0.01);
        assert!(corr(&t1_u, &tl_u).abs() < 0.01);
    }

    #[test]
    fn override_table_round_trip() {
        let mut t = OverrideTable::with_default(1.0, 2.0).unwrap();
        t.set(edge(0, 0, 1, 0), 0.5, 10.0).unwrap();
        let text = t.to_text();
        let back = OverrideTable::parse(&text).unwrap();
        assert_eq!(back.lookup(&edge(0, 0, 1, 0)), Some((0.5, 10.0)));
        assert_eq!(back.lookup(&edge(5, 5, 5, 6)), Some((1.0, 2.0)));
    }

    #[test]
    fn override_rejects_bad_input() {
        assert!(OverrideTable::with_default(0.0, 1.0).is_err());
        assert!(OverrideTable::parse("edge 0 0 1 0 -1.0 2.0").is_err());
        assert!(OverrideTable::parse("edge 0 0 2 0 1.0 2.0").is_err()); // not neighbours
        assert!(OverrideTable::parse("bogus 1 2 3").is_err());
        assert!(OverrideTable::parse("# comment\n\ndefault 1.0 2.0").is_ok());
    }

    #[test]
    fn replica_seeds_differ() {
        let m = WorldSeed(1);
        let a = replica_seed(m, &[0, 0], 0);
        let b = replica_seed(m, &[0, 0], 1);
        let c = replica_seed(m, &[1, 0], 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, replica_seed(m, &[0, 0], 0));
    }
}
