//! Numeric constants of the multi-scale analysis: the per-scale speed
//! constants `r_k`, the delay attenuations `omega_k`, the core-density
//! factors `zeta_j` and their limit, and the rate threshold `lambda_x`.

use super::{AnalysisParams, MultiscaleError};

#[derive(Debug, Clone)]
pub struct ConstantsTable {
    pub d: usize,
    pub l1: i64,
    pub sigma: u32,
    pub big_a: u32,
    /// `a1 = 1000 * A * sigma / 3`.
    pub a1: f64,
    /// `r_1 = d * c2`.
    pub r1: f64,
    /// `C0 = 8 * sigma * r1 * a3`.
    pub c0: f64,
    pub lambda_bar: f64,
    r_seq: Vec<f64>,
    omega_seq: Vec<f64>,
    zeta_seq: Vec<f64>,
    zeta: f64,
    lengths: Vec<f64>,
    /// The a2 constant participating in the omega recursion, kept so the
    /// residual check is self-contained.
    omega_a2: f64,
}

impl ConstantsTable {
    /// `r_k` (1-based scale).
    pub fn r(&self, k: usize) -> f64 {
        self.r_seq[k - 1]
    }

    /// `omega_k` (1-based scale); `omega_1 = 1` is the empty product.
    pub fn omega(&self, k: usize) -> f64 {
        self.omega_seq[k - 1]
    }

    /// `zeta_j` (1-based).
    pub fn zeta_j(&self, j: usize) -> f64 {
        self.zeta_seq[j - 1]
    }

    /// The limit `zeta` of the partial products, evaluated to convergence.
    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn r_seq(&self) -> &[f64] {
        &self.r_seq
    }

    pub fn omega_seq(&self) -> &[f64] {
        &self.omega_seq
    }

    pub fn length_f64(&self, k: usize) -> f64 {
        self.lengths[k - 1]
    }

    /// Rate threshold `lambda_x = min(lambda_bar, 1 / ((x + r1)^2 L1^2))`.
    pub fn lambda_x(&self, x: f64) -> f64 {
        let l1 = self.l1 as f64;
        self.lambda_bar
            .min(1.0 / ((x + self.r1).powi(2) * l1 * l1))
    }

    /// The sequence `r_k` increases to a finite limit; for large enough `L1`
    /// the limit stays below `2 r_1`.
    pub fn r_below_2r1(&self) -> bool {
        self.r_seq.iter().all(|&r| r < 2.0 * self.r1)
    }

    /// The sequence `omega_k` decreases; for large enough `L1` it stays
    /// above one half.
    pub fn omega_above_half(&self) -> bool {
        self.omega_seq.iter().all(|&w| w > 0.5)
    }

    /// Maximum distance, in units in the last place, between the stored
    /// sequences and a fresh evaluation of their recursions.
    pub fn recursion_residual_ulps(&self) -> u64 {
        let mut worst = 0u64;
        for k in 2..=self.r_seq.len() {
            let denom = (k * k) as f64 * self.lengths[k - 2].powi(self.d as i32 - 1);
            let r_expect = self.r_seq[k - 2] * (1.0 + self.a1 / denom);
            worst = worst.max(ulp_distance(self.r_seq[k - 1], r_expect));
        }
        for k in 2..=self.omega_seq.len() {
            let denom = (k * k) as f64 * self.lengths[k - 2].powi(self.d as i32 - 1);
            let w_expect = self.omega_seq[k - 2] * (1.0 - self.omega_a2 / denom);
            worst = worst.max(ulp_distance(self.omega_seq[k - 1], w_expect));
        }
        worst
    }
}

fn ulp_distance(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    let (x, y) = (a.to_bits(), b.to_bits());
    x.abs_diff(y)
}

/// Build the constants table for the given parameters and `sigma`.
pub fn constants_table(
    params: &AnalysisParams,
    sigma: u32,
) -> Result<ConstantsTable, MultiscaleError> {
    if sigma == 0 {
        return Err(MultiscaleError::BadParameter(
            "sigma must be at least 1".into(),
        ));
    }
    let d = params.d;
    let k_max = params.k_max.max(1);
    // f64 lengths via the recursion; saturation to infinity only makes the
    // correction factors vanish, which is the correct limit behaviour.
    let mut lengths = Vec::with_capacity(k_max);
    lengths.push(params.l1 as f64);
    for k in 2..=k_max {
        let prev: f64 = lengths[k - 2];
        lengths.push((k * k) as f64 * prev.powi(d as i32));
    }

    let r1 = params.r1();
    let a1 = 1000.0 * params.big_a as f64 * sigma as f64 / 3.0;
    let a2 = params.a(2);
    let a3 = params.a(3);

    let mut r_seq = vec![r1];
    let mut omega_seq = vec![1.0f64];
    for k in 2..=k_max {
        let denom = (k * k) as f64 * lengths[k - 2].powi(d as i32 - 1);
        r_seq.push(r_seq[k - 2] * (1.0 + a1 / denom));
        omega_seq.push(omega_seq[k - 2] * (1.0 - a2 / denom));
    }

    // zeta_j = 1 - A*sigma / ((j+1)^{2d} L_j^{d(d-1)}); the product converges
    // after a handful of terms because L_j grows doubly exponentially.
    let a_sigma = params.big_a as f64 * sigma as f64;
    let mut zeta_seq = Vec::new();
    let mut zeta = 1.0f64;
    let mut l = params.l1 as f64;
    let mut j = 1usize;
    loop {
        let term = 1.0 - a_sigma / (((j + 1) as f64).powi(2 * d as i32) * l.powi((d * (d - 1)) as i32));
        zeta_seq.push(term);
        zeta *= term;
        if (j >= k_max && term == 1.0) || j >= 64 {
            break;
        }
        j += 1;
        l = (j * j) as f64 * l.powi(d as i32);
        if !l.is_finite() {
            l = f64::INFINITY;
        }
    }

    Ok(ConstantsTable {
        d,
        l1: params.l1,
        sigma,
        big_a: params.big_a,
        a1,
        r1,
        c0: 8.0 * sigma as f64 * r1 * a3,
        lambda_bar: params.lambda_bar,
        r_seq,
        omega_seq,
        zeta_seq,
        zeta,
        lengths,
        omega_a2: a2,
    })
}
