//! Implementations of the CLI subcommands; each is a plain function over
//! parsed inputs so tests can drive them in-process.

use crate::config::{SimulateConfig, SweepConfig};
use crate::digest::digest_string;
use crate::manifest::{ClassifySpec, Manifest};
use crate::render::render_ppm;
use crate::CliError;
use fpphe_core::engine::{Process, RunResult, StopReason};
use fpphe_core::lattice::Window;
use fpphe_core::multiscale::{
    check_properties, classify_run, Analysis, Feedback, Goodness,
};
use fpphe_core::percolation::{
    crossing_probability, estimate_crossing_pc, filled_reach_probability, theta_estimate,
};
use fpphe_core::randomness::{replica_seed, WorldSeed};
use fpphe_core::snapshot::{fmt_g17, load_snapshot, save_snapshot, write_site_csv, RunSpec};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const SNAPSHOT_FILE: &str = "run.snapshot";
pub const SITES_FILE: &str = "sites.csv";
pub const RENDER_FILE: &str = "render.ppm";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CLASSIFY_MANIFEST_FILE: &str = "classify_manifest.txt";
pub const BOXES_FILE: &str = "boxes.csv";
pub const PROPERTIES_FILE: &str = "properties.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const ESTIMATE_FILE: &str = "estimate.csv";

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn run_spec(sim: &SimulateConfig) -> Result<RunSpec, CliError> {
    Ok(RunSpec {
        window: Window::new(sim.d, sim.half_side).map_err(CliError::runtime)?,
        world: WorldSeed(sim.world_seed),
        p: sim.p,
        lambda: sim.lambda,
        forced_seeds: sim.forced_seeds.clone(),
        overrides: sim.overrides.clone(),
        stop: sim.stop,
    })
}

/// Regenerate the byte content of each artifact a simulate manifest records.
fn simulate_artifacts(
    sim: &SimulateConfig,
    result: &RunResult,
    spec: &RunSpec,
) -> Result<Vec<(String, Vec<u8>)>, CliError> {
    let mut snapshot_bytes = Vec::new();
    save_snapshot(spec, result, &mut snapshot_bytes).map_err(CliError::runtime)?;
    let mut csv_bytes = Vec::new();
    write_site_csv(result, &mut csv_bytes).map_err(CliError::runtime)?;
    let mut artifacts = vec![
        (SNAPSHOT_FILE.to_string(), snapshot_bytes),
        (SITES_FILE.to_string(), csv_bytes),
    ];
    if let Some(bands) = sim.render_bands {
        artifacts.push((RENDER_FILE.to_string(), render_ppm(result, bands)?));
    }
    Ok(artifacts)
}

/// Run one configuration, writing the snapshot, per-site CSV, optional
/// rendering, and the reproducibility manifest.
pub fn cmd_simulate(sim: &SimulateConfig, out_dir: &Path) -> Result<Manifest, CliError> {
    ensure_dir(out_dir)?;
    let spec = run_spec(sim)?;
    let result = spec.execute().map_err(CliError::runtime)?;
    let artifacts = simulate_artifacts(sim, &result, &spec)?;
    let mut outputs = Vec::new();
    for (name, bytes) in &artifacts {
        let path = out_dir.join(name);
        fs::write(&path, bytes).map_err(CliError::io(&path))?;
        outputs.push((name.clone(), digest_string(bytes)));
    }
    let manifest = Manifest {
        command: "simulate".into(),
        sim: sim.clone(),
        classify: None,
        outputs,
    };
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn reach_fraction_row(result: &RunResult) -> (bool, f64, f64) {
    (
        result.touches_window_boundary(Process::Fpp1),
        result.density(Process::Fpp1),
        result.density(Process::FppLambda),
    )
}

fn stop_reason_name(r: StopReason) -> &'static str {
    match r {
        StopReason::Quiescent => "quiescent",
        StopReason::TimeHorizon => "horizon",
        StopReason::MaxOccupied => "max-occupied",
        StopReason::BoundaryHit => "boundary",
    }
}

fn cell_file_name(p_token: &str, l_token: &str) -> String {
    format!("cell_p{p_token}_l{l_token}.csv")
}

/// Per-cell replica table; the trailing `# complete` marker makes resumption
/// skip finished cells.
fn run_cell(
    cfg: &SweepConfig,
    p_index: usize,
    l_index: usize,
) -> Result<String, CliError> {
    let (_, p) = &cfg.p_values[p_index];
    let (_, lambda) = &cfg.lambda_values[l_index];
    let rows: Result<Vec<String>, CliError> = (0..cfg.replicas)
        .into_par_iter()
        .map(|rep| {
            let world = replica_seed(
                WorldSeed(cfg.master_seed),
                &[p_index as i64, l_index as i64],
                rep as u64,
            );
            let spec = RunSpec {
                window: Window::new(cfg.d, cfg.half_side).map_err(CliError::runtime)?,
                world,
                p: *p,
                lambda: *lambda,
                forced_seeds: Vec::new(),
                overrides: Default::default(),
                stop: cfg.stop,
            };
            let result = spec.execute().map_err(CliError::runtime)?;
            let (reach, d1, d2) = reach_fraction_row(&result);
            Ok(format!(
                "{rep},{},{},{},{},{},{}",
                world.0,
                reach as u8,
                fmt_g17(d1),
                fmt_g17(d2),
                stop_reason_name(result.stop_reason()),
                fmt_g17(result.final_time())
            ))
        })
        .collect();
    let mut text = String::from("# fpphe-csv schema-version 1\n");
    text.push_str("replica,world_seed,fpp1_reach,fpp1_density,fpplambda_density,stop_reason,final_time\n");
    for row in rows? {
        text.push_str(&row);
        text.push('\n');
    }
    text.push_str("# complete\n");
    Ok(text)
}

fn cell_is_complete(path: &Path) -> bool {
    match fs::read_to_string(path) {
        Ok(text) => text.trim_end().ends_with("# complete"),
        Err(_) => false,
    }
}

struct CellStats {
    reach_frac: f64,
    reach_ci: f64,
    d1_mean: f64,
    d1_ci: f64,
    d2_mean: f64,
    d2_ci: f64,
    replicas: usize,
}

fn parse_cell(path: &Path) -> Result<CellStats, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let mut reach = 0usize;
    let mut d1 = Vec::new();
    let mut d2 = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("replica,") || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 7 {
            return Err(CliError::Runtime(format!(
                "malformed cell row in {}: {line:?}",
                path.display()
            )));
        }
        reach += fields[2].parse::<u8>().map_err(CliError::runtime)? as usize;
        d1.push(fields[3].parse::<f64>().map_err(CliError::runtime)?);
        d2.push(fields[4].parse::<f64>().map_err(CliError::runtime)?);
    }
    let n = d1.len();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let ci = |xs: &[f64]| {
        let m = mean(xs);
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len().max(2) - 1) as f64;
        1.96 * (var / xs.len() as f64).sqrt()
    };
    let frac = reach as f64 / n as f64;
    Ok(CellStats {
        reach_frac: frac,
        reach_ci: 1.96 * (frac * (1.0 - frac) / n as f64).sqrt(),
        d1_mean: mean(&d1),
        d1_ci: ci(&d1),
        d2_mean: mean(&d2),
        d2_ci: ci(&d2),
        replicas: n,
    })
}

/// Sweep a (p, lambda) grid with per-cell resumability, then aggregate.
pub fn cmd_sweep(cfg: &SweepConfig, out_dir: &Path) -> Result<PathBuf, CliError> {
    ensure_dir(out_dir)?;
    for (pi, (ptok, _)) in cfg.p_values.iter().enumerate() {
        for (li, (ltok, _)) in cfg.lambda_values.iter().enumerate() {
            let path = out_dir.join(cell_file_name(ptok, ltok));
            if cell_is_complete(&path) {
                continue;
            }
            let text = run_cell(cfg, pi, li)?;
            let tmp = path.with_extension("csv.tmp");
            fs::write(&tmp, &text).map_err(CliError::io(&tmp))?;
            fs::rename(&tmp, &path).map_err(CliError::io(&path))?;
        }
    }

    let mut agg = String::from("# fpphe-csv schema-version 1\n");
    agg.push_str(
        "p,lambda,replicas,fpp1_reach_frac,fpp1_reach_ci_half,fpp1_density_mean,\
         fpp1_density_ci_half,fpplambda_density_mean,fpplambda_density_ci_half\n",
    );
    for (ptok, _) in &cfg.p_values {
        for (ltok, _) in &cfg.lambda_values {
            let stats = parse_cell(&out_dir.join(cell_file_name(ptok, ltok)))?;
            let _ = writeln!(
                agg,
                "{ptok},{ltok},{},{},{},{},{},{},{}",
                stats.replicas,
                fmt_g17(stats.reach_frac),
                fmt_g17(stats.reach_ci),
                fmt_g17(stats.d1_mean),
                fmt_g17(stats.d1_ci),
                fmt_g17(stats.d2_mean),
                fmt_g17(stats.d2_ci),
            );
        }
    }
    let path = out_dir.join(SWEEP_FILE);
    fs::write(&path, agg).map_err(CliError::io(&path))?;
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct ClassifyArgs {
    pub spec: ClassifySpec,
}

impl ClassifyArgs {
    /// theta_hat starts as a placeholder until the estimator runs.
    pub fn new(l1: i64, k_max: usize) -> Self {
        ClassifyArgs {
            spec: ClassifySpec {
                l1,
                k_max,
                eps: 0.1,
                c1: 5.0,
                c2: 5.0,
                big_a: 3,
                big_c: 1.0,
                a_consts: [1.0; 8],
                lambda_bar: f64::INFINITY,
                sigma_override: None,
                enable_e6: false,
                pair_threshold: 5000,
                pair_sources: 100,
                pair_targets: 100,
                theta_reps: 400,
                theta_half_window: 100,
                theta_hat: f64::NAN,
            },
        }
    }
}

/// The density estimate stream is decorrelated from the run's streams by a
/// fixed xor on the world seed.
fn theta_master(world: u64) -> WorldSeed {
    WorldSeed(world ^ 0x7468_6574_6100_0000)
}

/// Classify a snapshot: box reports and property violations as CSV, plus a
/// manifest binding the snapshot, parameters and density-estimate
/// provenance.
pub fn cmd_classify(
    snapshot_path: &Path,
    args: &ClassifyArgs,
    out_dir: &Path,
) -> Result<Manifest, CliError> {
    ensure_dir(out_dir)?;
    let bytes = fs::read(snapshot_path).map_err(CliError::io(snapshot_path))?;
    let (spec, result) = load_snapshot(&mut bytes.as_slice()).map_err(CliError::runtime)?;
    let mut cspec = args.spec.clone();
    let theta = theta_estimate(
        spec.p,
        cspec.theta_half_window,
        cspec.theta_reps,
        theta_master(spec.world.0),
    )
    .map_err(CliError::runtime)?;
    cspec.theta_hat = theta.value;

    let field = spec.seed_field().map_err(CliError::runtime)?;
    let times = spec.time_field().map_err(CliError::runtime)?;
    let params = cspec.to_params(spec.window.dim(), spec.p, spec.lambda)?;
    let analysis =
        classify_run(&result, &field, &times, &params, cspec.theta_hat).map_err(CliError::runtime)?;

    let (boxes_csv, properties_csv) = classification_csvs_with_field(&analysis, &result, &field)?;
    let boxes_path = out_dir.join(BOXES_FILE);
    fs::write(&boxes_path, &boxes_csv).map_err(CliError::io(&boxes_path))?;
    let props_path = out_dir.join(PROPERTIES_FILE);
    fs::write(&props_path, &properties_csv).map_err(CliError::io(&props_path))?;

    let manifest = Manifest {
        command: "classify".into(),
        sim: SimulateConfig {
            d: spec.window.dim(),
            half_side: spec.window.half_side(),
            p: spec.p,
            lambda: spec.lambda,
            world_seed: spec.world.0,
            stop: spec.stop,
            forced_seeds: spec.forced_seeds.clone(),
            overrides: spec.overrides.clone(),
            render_bands: None,
        },
        classify: Some(cspec),
        outputs: vec![
            (
                snapshot_path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| SNAPSHOT_FILE.into()),
                digest_string(&bytes),
            ),
            (BOXES_FILE.into(), digest_string(boxes_csv.as_bytes())),
            (PROPERTIES_FILE.into(), digest_string(properties_csv.as_bytes())),
        ],
    };
    manifest.save(&out_dir.join(CLASSIFY_MANIFEST_FILE))?;
    Ok(manifest)
}

/// Box-report and property-violation tables, one row per box / finding.
fn classification_csvs_with_field(
    analysis: &Analysis,
    result: &RunResult,
    field: &fpphe_core::randomness::SeedField,
) -> Result<(String, String), CliError> {
    let joined = |xs: &[i64]| {
        xs.iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(";")
    };
    let mut boxes = String::from("# fpphe-csv schema-version 1\n");
    boxes.push_str(
        "k,index,goodness,e1,e2,e3,e4,e5,e6,bad_subboxes,disjoint_bad,disjoint_exact,\
         feedback,tau,entry,parent,progenitor\n",
    );
    let flag = |b: bool| if b { "1" } else { "0" };
    for report in analysis.reports.all() {
        let (e1, e2, e3, e4, e5, e6) = match &report.scale1_flags {
            Some(f) => (
                flag(f.e1).to_string(),
                flag(f.e2).to_string(),
                flag(f.e3).to_string(),
                flag(f.e4).to_string(),
                flag(f.e5).to_string(),
                f.e6.map(|b| flag(b).to_string()).unwrap_or_default(),
            ),
            None => Default::default(),
        };
        let _ = writeln!(
            boxes,
            "{},{},{},{e1},{e2},{e3},{e4},{e5},{e6},{},{},{},{},{},{},{},{}",
            report.idx.k,
            joined(&report.idx.i),
            match report.goodness {
                Goodness::Good => "good",
                Goodness::Bad => "bad",
            },
            report
                .bad_subbox_count
                .map(|n| n.to_string())
                .unwrap_or_default(),
            report
                .disjoint_bad
                .map(|d| d.count.to_string())
                .unwrap_or_default(),
            report
                .disjoint_bad
                .map(|d| flag(d.exact).to_string())
                .unwrap_or_default(),
            match report.feedback {
                Some(Feedback::Positive) => "positive",
                Some(Feedback::Negative) => "negative",
                Some(Feedback::UnclassifiedBad) => "unclassified-bad",
                None => "",
            },
            report.tau().map(fmt_g17).unwrap_or_default(),
            report
                .entrance
                .as_ref()
                .map(|(_, s)| joined(&s.0))
                .unwrap_or_default(),
            report
                .parent
                .as_ref()
                .map(|p| joined(&p.i))
                .unwrap_or_default(),
            report
                .progenitor
                .as_ref()
                .map(|p| joined(&p.i))
                .unwrap_or_default(),
        );
    }

    let scales: Vec<usize> = (1..=analysis.params.k_max).collect();
    let props = check_properties(
        Some(result),
        Some(field),
        &analysis.st,
        &analysis.reports,
        &analysis.cluster_structures,
        &analysis.constants,
        &scales,
        analysis.params.big_c,
    )
    .map_err(CliError::runtime)?;
    let mut properties = String::from("# fpphe-csv schema-version 1\n");
    properties.push_str("property,scale,kind,index\n");
    for ((kind, scale), entry) in props.iter() {
        for v in &entry.violations {
            let _ = writeln!(properties, "{},{scale},violation,{}", kind.name(), joined(&v.i));
        }
        for v in &entry.indeterminate {
            let _ = writeln!(
                properties,
                "{},{scale},indeterminate,{}",
                kind.name(),
                joined(&v.i)
            );
        }
    }
    Ok((boxes, properties))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Theta,
    FilledReach,
    CrossingPc,
}

impl std::str::FromStr for Estimator {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "theta" => Ok(Estimator::Theta),
            "filled_reach" => Ok(Estimator::FilledReach),
            "crossing_pc" => Ok(Estimator::CrossingPc),
            other => Err(CliError::Usage(format!("unknown estimator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimateArgs {
    pub estimator: Estimator,
    pub p: Option<f64>,
    pub m: Option<i64>,
    pub half_window: i64,
    pub reps: usize,
    pub seed: u64,
    pub bisection_iters: usize,
}

/// Run a Monte Carlo estimator and write its CSV row.
pub fn cmd_estimate(args: &EstimateArgs, out_dir: &Path) -> Result<PathBuf, CliError> {
    ensure_dir(out_dir)?;
    let master = WorldSeed(args.seed);
    let mut text = String::from("# fpphe-csv schema-version 1\n");
    text.push_str("estimator,p,window_or_m,reps,estimate,stderr,master_seed\n");
    match args.estimator {
        Estimator::Theta => {
            let p = args
                .p
                .ok_or_else(|| CliError::Usage("theta requires --p".into()))?;
            let e = theta_estimate(p, args.half_window, args.reps, master)
                .map_err(CliError::runtime)?;
            let _ = writeln!(
                text,
                "theta,{},{},{},{},{},{}",
                fmt_g17(p),
                args.half_window,
                e.reps,
                fmt_g17(e.value),
                fmt_g17(e.stderr),
                args.seed
            );
        }
        Estimator::FilledReach => {
            let p = args
                .p
                .ok_or_else(|| CliError::Usage("filled_reach requires --p".into()))?;
            let m = args
                .m
                .ok_or_else(|| CliError::Usage("filled_reach requires --m".into()))?;
            let e = filled_reach_probability(p, m, args.reps, master).map_err(CliError::runtime)?;
            let _ = writeln!(
                text,
                "filled_reach,{},{m},{},{},{},{}",
                fmt_g17(p),
                e.reps,
                fmt_g17(e.value),
                fmt_g17(e.stderr),
                args.seed
            );
        }
        Estimator::CrossingPc => {
            let pc = estimate_crossing_pc(args.half_window, args.reps, master, args.bisection_iters)
                .map_err(CliError::runtime)?;
            // Residual crossing probability at the estimate, as a noise scale.
            let probe = crossing_probability(pc, args.half_window, args.reps, master)
                .map_err(CliError::runtime)?;
            let _ = writeln!(
                text,
                "crossing_pc,,{},{},{},{},{}",
                args.half_window,
                args.reps,
                fmt_g17(pc),
                fmt_g17(probe.stderr),
                args.seed
            );
        }
    }
    let path = out_dir.join(ESTIMATE_FILE);
    fs::write(&path, text).map_err(CliError::io(&path))?;
    Ok(path)
}

/// Render a snapshot to a binary pixmap.
pub fn cmd_render(snapshot_path: &Path, bands: u32, out_path: &Path) -> Result<(), CliError> {
    let bytes = fs::read(snapshot_path).map_err(CliError::io(snapshot_path))?;
    let (_, result) = load_snapshot(&mut bytes.as_slice()).map_err(CliError::runtime)?;
    let img = render_ppm(&result, bands)?;
    fs::write(out_path, img).map_err(CliError::io(out_path))?;
    Ok(())
}

/// Re-execute a manifest and verify that every recorded output reproduces
/// byte-exactly; regenerated files are written into `out_dir`.
pub fn cmd_replay(manifest_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    let manifest = Manifest::load(manifest_path)?;
    let spec = run_spec(&manifest.sim)?;
    let result = spec.execute().map_err(CliError::runtime)?;

    let mut regenerated: Vec<(String, Vec<u8>)> =
        simulate_artifacts(&manifest.sim, &result, &spec)?;

    if manifest.command == "classify" {
        let cspec = manifest.classify.as_ref().ok_or_else(|| {
            CliError::Runtime("classify manifest missing parameters".into())
        })?;
        let theta = theta_estimate(
            spec.p,
            cspec.theta_half_window,
            cspec.theta_reps,
            theta_master(spec.world.0),
        )
        .map_err(CliError::runtime)?;
        if fmt_g17(theta.value) != fmt_g17(cspec.theta_hat) {
            return Err(CliError::Reproducibility(format!(
                "density estimate diverged: recomputed {} vs recorded {}",
                fmt_g17(theta.value),
                fmt_g17(cspec.theta_hat)
            )));
        }
        let field = spec.seed_field().map_err(CliError::runtime)?;
        let times = spec.time_field().map_err(CliError::runtime)?;
        let params = cspec.to_params(spec.window.dim(), spec.p, spec.lambda)?;
        let analysis = classify_run(&result, &field, &times, &params, cspec.theta_hat)
            .map_err(CliError::runtime)?;
        let (boxes_csv, properties_csv) =
            classification_csvs_with_field(&analysis, &result, &field)?;
        regenerated.push((BOXES_FILE.into(), boxes_csv.into_bytes()));
        regenerated.push((PROPERTIES_FILE.into(), properties_csv.into_bytes()));
    }

    for (name, recorded_digest) in &manifest.outputs {
        let bytes = match regenerated.iter().find(|(n, _)| n == name) {
            Some((_, b)) => b,
            // Snapshot listed under a custom name in classify manifests.
            None if manifest.command == "classify" => {
                &regenerated
                    .iter()
                    .find(|(n, _)| n == SNAPSHOT_FILE)
                    .expect("snapshot artifact always regenerated")
                    .1
            }
            None => {
                return Err(CliError::Reproducibility(format!(
                    "manifest lists {name:?} which this command does not produce"
                )))
            }
        };
        let digest = digest_string(bytes);
        if &digest != recorded_digest {
            return Err(CliError::Reproducibility(format!(
                "output {name:?} changed: {digest} vs recorded {recorded_digest}"
            )));
        }
        let path = out_dir.join(name);
        fs::write(&path, bytes).map_err(CliError::io(&path))?;
    }
    Ok(())
}
