//! Reproducibility manifests: everything needed to replay a command
//! bit-exactly, plus digests of the outputs it produced.

use crate::config::{parse_num, parse_stop_clause, stop_clauses, KvFile, SimulateConfig};
use crate::{CliError, TOOL_VERSION};
use fpphe_core::engine::StopCondition;
use fpphe_core::lattice::Site;
use fpphe_core::multiscale::AnalysisParams;
use fpphe_core::percolation::PairSampling;
use fpphe_core::randomness::OverrideTable;
use fpphe_core::snapshot::fmt_g17;
use std::fmt::Write as _;
use std::path::Path;

/// Classification parameters plus the provenance of the density estimate.
#[derive(Debug, Clone)]
pub struct ClassifySpec {
    pub l1: i64,
    pub k_max: usize,
    pub eps: f64,
    pub c1: f64,
    pub c2: f64,
    pub big_a: u32,
    pub big_c: f64,
    pub a_consts: [f64; 8],
    pub lambda_bar: f64,
    pub sigma_override: Option<u32>,
    pub enable_e6: bool,
    pub pair_threshold: usize,
    pub pair_sources: usize,
    pub pair_targets: usize,
    pub theta_reps: usize,
    pub theta_half_window: i64,
    pub theta_hat: f64,
}

impl ClassifySpec {
    pub fn to_params(&self, d: usize, p: f64, lambda: f64) -> Result<AnalysisParams, CliError> {
        let mut params =
            AnalysisParams::new(d, p, lambda, self.l1, self.k_max).map_err(CliError::runtime)?;
        params.eps = self.eps;
        params.c1 = self.c1;
        params.c2 = self.c2;
        params.big_a = self.big_a;
        params.big_c = self.big_c;
        params.a_consts = self.a_consts;
        params.lambda_bar = self.lambda_bar;
        params.sigma_override = self.sigma_override;
        params.enable_e6 = self.enable_e6;
        params.sampling = PairSampling {
            exact_threshold: self.pair_threshold,
            sources: self.pair_sources,
            targets_per_source: self.pair_targets,
        };
        params.validate().map_err(CliError::runtime)?;
        Ok(params)
    }
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub command: String,
    pub sim: SimulateConfig,
    pub classify: Option<ClassifySpec>,
    /// (relative filename, digest).
    pub outputs: Vec<(String, String)>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        let _ = writeln!(w, "version 1");
        let _ = writeln!(w, "tool_version {TOOL_VERSION}");
        let _ = writeln!(w, "command {}", self.command);
        let _ = writeln!(w, "d {}", self.sim.d);
        let _ = writeln!(w, "half_side {}", self.sim.half_side);
        let _ = writeln!(w, "p {}", fmt_g17(self.sim.p));
        let _ = writeln!(w, "lambda {}", fmt_g17(self.sim.lambda));
        let _ = writeln!(w, "world_seed {}", self.sim.world_seed);
        for clause in stop_clauses(&self.sim.stop) {
            let _ = writeln!(w, "stop {clause}");
        }
        for s in &self.sim.forced_seeds {
            let coords: Vec<String> = s.0.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(w, "forced_seed {}", coords.join(" "));
        }
        for line in self.sim.overrides.to_text().lines() {
            let _ = writeln!(w, "override {line}");
        }
        if let Some(bands) = self.sim.render_bands {
            let _ = writeln!(w, "render_bands {bands}");
        }
        if let Some(c) = &self.classify {
            let _ = writeln!(w, "params_l1 {}", c.l1);
            let _ = writeln!(w, "params_k_max {}", c.k_max);
            let _ = writeln!(w, "params_eps {}", fmt_g17(c.eps));
            let _ = writeln!(w, "params_c1 {}", fmt_g17(c.c1));
            let _ = writeln!(w, "params_c2 {}", fmt_g17(c.c2));
            let _ = writeln!(w, "params_big_a {}", c.big_a);
            let _ = writeln!(w, "params_big_c {}", fmt_g17(c.big_c));
            for (n, v) in c.a_consts.iter().enumerate() {
                let _ = writeln!(w, "params_a{} {}", n + 2, fmt_g17(*v));
            }
            let _ = writeln!(w, "params_lambda_bar {}", fmt_g17(c.lambda_bar));
            if let Some(s) = c.sigma_override {
                let _ = writeln!(w, "params_sigma_override {s}");
            }
            let _ = writeln!(w, "params_enable_e6 {}", c.enable_e6);
            let _ = writeln!(w, "params_pair_threshold {}", c.pair_threshold);
            let _ = writeln!(w, "params_pair_sources {}", c.pair_sources);
            let _ = writeln!(w, "params_pair_targets {}", c.pair_targets);
            let _ = writeln!(w, "theta_reps {}", c.theta_reps);
            let _ = writeln!(w, "theta_half_window {}", c.theta_half_window);
            let _ = writeln!(w, "theta_hat {}", fmt_g17(c.theta_hat));
        }
        for (name, digest) in &self.outputs {
            let _ = writeln!(w, "output {name} {digest}");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_text()).map_err(CliError::io(path))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let kv = KvFile::parse(text)?;
        kv.check_keys(&[
            "tool_version",
            "command",
            "d",
            "half_side",
            "p",
            "lambda",
            "world_seed",
            "stop",
            "forced_seed",
            "override",
            "render_bands",
            "params_l1",
            "params_k_max",
            "params_eps",
            "params_c1",
            "params_c2",
            "params_big_a",
            "params_big_c",
            "params_a2",
            "params_a3",
            "params_a4",
            "params_a5",
            "params_a6",
            "params_a7",
            "params_a8",
            "params_a9",
            "params_lambda_bar",
            "params_sigma_override",
            "params_enable_e6",
            "params_pair_threshold",
            "params_pair_sources",
            "params_pair_targets",
            "theta_reps",
            "theta_half_window",
            "theta_hat",
            "output",
        ])?;
        let command = kv.required("command")?.to_string();
        let d: usize = parse_num("d", kv.required("d")?)?;

        let mut stop = StopCondition {
            time_horizon: None,
            max_occupied: None,
            first_boundary_hit_by: None,
            quiescence: false,
        };
        for clause in kv.all("stop") {
            parse_stop_clause(&mut stop, clause)?;
        }

        let mut forced_seeds = Vec::new();
        for line in kv.all("forced_seed") {
            let coords: Result<Vec<i64>, _> = line
                .split_whitespace()
                .map(|t| parse_num::<i64>("forced_seed", t))
                .collect();
            forced_seeds.push(Site(coords?));
        }

        let override_text: String = kv
            .all("override")
            .iter()
            .map(|l| format!("{l}\n"))
            .collect();
        let overrides = OverrideTable::parse(&override_text).map_err(CliError::runtime)?;

        let render_bands = match kv.one("render_bands")? {
            Some(v) => Some(parse_num("render_bands", v)?),
            None => None,
        };

        let sim = SimulateConfig {
            d,
            half_side: parse_num("half_side", kv.required("half_side")?)?,
            p: parse_num("p", kv.required("p")?)?,
            lambda: parse_num("lambda", kv.required("lambda")?)?,
            world_seed: parse_num("world_seed", kv.required("world_seed")?)?,
            stop,
            forced_seeds,
            overrides,
            render_bands,
        };

        let classify = if kv.one("params_l1")?.is_some() {
            let mut a_consts = [1.0f64; 8];
            for (n, slot) in a_consts.iter_mut().enumerate() {
                let key = format!("params_a{}", n + 2);
                if let Some(v) = kv.one(&key)? {
                    *slot = parse_num(&key, v)?;
                }
            }
            Some(ClassifySpec {
                l1: parse_num("params_l1", kv.required("params_l1")?)?,
                k_max: parse_num("params_k_max", kv.required("params_k_max")?)?,
                eps: parse_num("params_eps", kv.required("params_eps")?)?,
                c1: parse_num("params_c1", kv.required("params_c1")?)?,
                c2: parse_num("params_c2", kv.required("params_c2")?)?,
                big_a: parse_num("params_big_a", kv.required("params_big_a")?)?,
                big_c: parse_num("params_big_c", kv.required("params_big_c")?)?,
                a_consts,
                lambda_bar: parse_num("params_lambda_bar", kv.required("params_lambda_bar")?)?,
                sigma_override: match kv.one("params_sigma_override")? {
                    Some(v) => Some(parse_num("params_sigma_override", v)?),
                    None => None,
                },
                enable_e6: kv.required("params_enable_e6")? == "true",
                pair_threshold: parse_num(
                    "params_pair_threshold",
                    kv.required("params_pair_threshold")?,
                )?,
                pair_sources: parse_num(
                    "params_pair_sources",
                    kv.required("params_pair_sources")?,
                )?,
                pair_targets: parse_num(
                    "params_pair_targets",
                    kv.required("params_pair_targets")?,
                )?,
                theta_reps: parse_num("theta_reps", kv.required("theta_reps")?)?,
                theta_half_window: parse_num(
                    "theta_half_window",
                    kv.required("theta_half_window")?,
                )?,
                theta_hat: parse_num("theta_hat", kv.required("theta_hat")?)?,
            })
        } else {
            None
        };

        let mut outputs = Vec::new();
        for line in kv.all("output") {
            let (name, digest) = line.rsplit_once(' ').ok_or_else(|| {
                CliError::Usage(format!("malformed output entry {line:?}"))
            })?;
            outputs.push((name.trim().to_string(), digest.trim().to_string()));
        }

        Ok(Manifest {
            command,
            sim,
            classify,
            outputs,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text)
    }
}
