use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::{json, Value};

use swarmsync_core::config;
use swarmsync_core::report::{self, AnalysisReport};
use swarmsync_core::safety::{self, SafetyReport};
use swarmsync_core::{graph, linalg, sim, trace_io, Error, SimConfig, SimTrace};

use crate::{RunArgs, SimulateArgs, SweepArgs, TraceArgs};

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_DIVERGENCE: u8 = 2;
pub const EXIT_SAFETY: u8 = 3;

/// A failed invocation: exit code plus a one-line diagnostic.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub category: &'static str,
    pub detail: String,
}

impl Failure {
    fn config(detail: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            category: "config",
            detail: one_line(&detail.into()),
        }
    }

    /// Anything raised while loading inputs is a configuration error.
    fn load(path: &Path, e: Error) -> Self {
        Self {
            code: EXIT_CONFIG,
            category: e.category(),
            detail: one_line(&format!("{}: {e}", path.display())),
        }
    }

    fn run(e: Error) -> Self {
        let code = match e.category() {
            "parse" | "config" | "io" => EXIT_CONFIG,
            "safety" => EXIT_SAFETY,
            _ => EXIT_DIVERGENCE,
        };
        Self {
            code,
            category: e.category(),
            detail: one_line(&e.to_string()),
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

type Outcome = Result<u8, Failure>;

/// What was run, where, and when; written before any computation.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config: PathBuf,
    pub out: PathBuf,
    pub subcommand: &'static str,
    pub version: &'static str,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunManifest {
    fn new(args: &RunArgs, subcommand: &'static str) -> Result<Self, Failure> {
        let config = args
            .config
            .clone()
            .or_else(|| args.config_pos.clone())
            .ok_or_else(|| Failure::config("no scenario file given (pass --config PATH)"))?;
        Ok(Self {
            config,
            out: args.out.clone(),
            subcommand,
            version: env!("CARGO_PKG_VERSION"),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        })
    }

    fn to_json(&self) -> Value {
        json!({
            "config": self.config.display().to_string(),
            "out": self.out.display().to_string(),
            "subcommand": self.subcommand,
            "version": self.version,
            "timestamp": self.timestamp,
        })
    }

    /// Creates the output directory and records the manifest in it.
    fn write(&self) -> Result<(), Failure> {
        fs::create_dir_all(&self.out)
            .map_err(|e| Failure::config(format!("output directory {}: {e}", self.out.display())))?;
        write_json(&self.out.join("manifest.json"), &self.to_json())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure {
        code: EXIT_CONFIG,
        category: "io",
        detail: one_line(&format!("{}: {e}", path.display())),
    })
}

fn write_json(path: &Path, v: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).expect("json values always serialize");
    write_file(path, &(text + "\n"))
}

/// Parses the scenario, applies command-line overrides, then validates.
fn load(args: &RunArgs, manifest: &RunManifest) -> Result<SimConfig, Failure> {
    let path = &manifest.config;
    let src = fs::read_to_string(path).map_err(|e| Failure::load(path, Error::Io(e.to_string())))?;
    let mut file = config::parse_file(&src).map_err(|e| Failure::load(path, e))?;
    if let Some(h) = args.horizon_override {
        file.simulation.horizon = h;
    }
    if let Some(s) = args.stride {
        file.simulation.stride = s;
    }
    if let Some(s) = args.seed {
        file.simulation.seed = s;
    }
    file.to_sim_config().map_err(|e| Failure::load(path, e))
}

fn start(args: &RunArgs, subcommand: &'static str) -> Result<(RunManifest, SimConfig), Failure> {
    let manifest = RunManifest::new(args, subcommand)?;
    let cfg = load(args, &manifest)?;
    manifest.write()?;
    Ok((manifest, cfg))
}

fn metrics_json(m: &sim::Metrics) -> Value {
    json!({
        "delta1_initial": m.delta1_initial,
        "delta1_final": m.delta1_final,
        "ultimate_bound": m.ultimate_bound,
        "settling_time": m.settling_time,
        "max_u": m.max_u,
        "min_pair_separation": m.min_pair_separation,
        "min_leader_separation": m.min_leader_separation,
        "min_obstacle_distance": m.min_obstacle_distance,
        "jump_ratios": m.jump_ratios.iter().map(|(t, r)| json!([t, r])).collect::<Vec<_>>(),
    })
}

fn create(path: &Path) -> Result<fs::File, Failure> {
    fs::File::create(path).map_err(|e| Failure::run(Error::Io(format!("{}: {e}", path.display()))))
}

pub fn simulate(args: &SimulateArgs) -> Outcome {
    let (manifest, cfg) = start(&args.run, "simulate")?;
    let trace = if args.weights {
        let mut writers = (1..=cfg.n_agents())
            .map(|i| create(&manifest.path(&format!("weights_agent{i}.csv"))).map(trace_io::WeightWriter::new))
            .collect::<Result<Vec<_>, Failure>>()?;
        let trace = sim::simulate_observed(&cfg, |t, state| {
            writers
                .iter_mut()
                .zip(&state.banks)
                .try_for_each(|(w, b)| w.write(t, b))
        })
        .map_err(Failure::run)?;
        writers.into_iter().try_for_each(|w| w.finish()).map_err(Failure::run)?;
        trace
    } else {
        sim::simulate(&cfg).map_err(Failure::run)?
    };
    let csv = manifest.path("trace.csv");
    trace_io::save_trace(&trace, &csv).map_err(Failure::run)?;
    write_file(&manifest.path("plot.gp"), &trace_io::plot_script(&trace, "trace.csv"))?;
    let m = sim::metrics(&trace);
    write_json(&manifest.path("summary.json"), &metrics_json(&m))?;
    println!(
        "simulated {} samples to {}; |delta1| {:.4} -> {:.4}, max |u| {:.3}",
        trace.samples.len(),
        csv.display(),
        m.delta1_initial,
        m.delta1_final,
        m.max_u
    );
    let verdict = safety::safety_monitor(&trace, &cfg.formation, &cfg.obstacles);
    if let Some(w) = verdict.worst.as_ref().filter(|_| !verdict.all_safe) {
        println!(
            "warning: {} came within {:.4} (threshold {}) at t = {}",
            w.kind, w.min_distance, w.threshold, w.time
        );
    }
    Ok(0)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

fn analysis_text(r: &AnalysisReport) -> String {
    let d = &r.dwell;
    let mut s = String::new();
    s += &format!(
        "rho0 = {:.6}\nmu = {:.6}\ntau_star = {}\n",
        d.rho0,
        d.mu,
        opt(d.tau_star)
    );
    s += &format!("conclusive = {}\n", d.conclusive);
    if !d.conclusive {
        s += "note: the decay factor is outside (0, 1) so no dwell time follows\n";
    }
    s += "\ntopology  half_min_q  coupling  s2  rho  q_min  iota\n";
    for (t, iota) in d.per_topology.iter().zip(&r.iota) {
        s += &format!(
            "{}  {:.6}  {:.6}  {:.6}  {:.6}  {:.6}  {:.6}\n",
            t.id + 1,
            t.half_min_q,
            t.coupling_term,
            t.s2,
            t.rho,
            t.q_min,
            iota
        );
    }
    s += "\ntopology  sylvester_ok  failing_minor  min_singular  b_d  mu1_threshold\n";
    for (id, k) in r.k_reports.iter().enumerate() {
        s += &format!(
            "{}  {}  {}  {:.6e}  {:.6e}  {:.6}\n",
            id + 1,
            k.sylvester_ok,
            k.failing_minor.map_or("-".to_string(), |m| m.to_string()),
            k.min_singular,
            k.b_d,
            k.mu1_threshold
        );
    }
    let k = &r.k_inputs;
    s += &format!(
        "\nbeta = {}, kappa = {}, kappa_w = {}, kappa0 = {}\nphi = {:?}\ntheta = {:?}\nresidual_bound = {}, c_e0 = {:.6}\n",
        k.beta, k.kappa, k.kappa_w, k.kappa0, k.phi, k.theta, k.residual_bound, k.c_e0
    );
    s
}

fn analysis_json(r: &AnalysisReport) -> Value {
    let d = &r.dwell;
    let k = &r.k_inputs;
    json!({
        "rho0": d.rho0,
        "mu": d.mu,
        "tau_star": d.tau_star,
        "conclusive": d.conclusive,
        "topologies": d.per_topology.iter().zip(&r.iota).zip(&r.k_reports).map(|((t, iota), kr)| json!({
            "id": t.id + 1,
            "half_min_q": t.half_min_q,
            "coupling_term": t.coupling_term,
            "s2": t.s2,
            "rho": t.rho,
            "q_min": t.q_min,
            "iota": iota,
            "k": {
                "minors": kr.minors,
                "sylvester_ok": kr.sylvester_ok,
                "failing_minor": kr.failing_minor,
                "min_singular": kr.min_singular,
                "omega_norm": kr.omega_norm,
                "b_d": kr.b_d,
                "mu1_threshold": kr.mu1_threshold,
            },
        })).collect::<Vec<_>>(),
        "k_inputs": {
            "beta": k.beta,
            "kappa": k.kappa,
            "kappa_w": k.kappa_w,
            "kappa0": k.kappa0,
            "phi": k.phi,
            "theta": k.theta,
            "residual_bound": k.residual_bound,
            "c_e0": k.c_e0,
        },
    })
}

/// Writes `name.csv` under `dir`.
fn export_matrix(dir: &Path, name: &str, m: &DMatrix<f64>) -> Result<(), Failure> {
    let file = create(&dir.join(format!("{name}.csv")))?;
    trace_io::write_matrix_csv(m, file).map_err(Failure::run)
}

fn export_topologies(manifest: &RunManifest, cfg: &SimConfig) -> Result<(), Failure> {
    let dir = manifest.path("matrices");
    fs::create_dir_all(&dir).map_err(|e| Failure::run(Error::Io(format!("{}: {e}", dir.display()))))?;
    for (k, t) in cfg.topologies.iter().enumerate() {
        let id = k + 1;
        let gm = graph::build_matrices(t);
        export_matrix(&dir, &format!("t{id}_adjacency"), t.adjacency())?;
        export_matrix(&dir, &format!("t{id}_laplacian"), &gm.laplacian)?;
        export_matrix(&dir, &format!("t{id}_leader"), &gm.leader)?;
        let coupling = graph::coupling_matrix(t, cfg.params.nu1, cfg.params.nu2).map_err(Failure::run)?;
        export_matrix(&dir, &format!("t{id}_coupling"), &coupling)?;
        let gl = graph::graph_weights(t, cfg.params.nu1, cfg.params.nu2).map_err(Failure::run)?;
        export_matrix(&dir, &format!("t{id}_p"), &gl.p)?;
        export_matrix(&dir, &format!("t{id}_q"), &gl.q_matrix)?;
    }
    Ok(())
}

pub fn analyze(args: &RunArgs) -> Outcome {
    let (manifest, cfg) = start(args, "analyze")?;
    let r = report::analyze_scenario(&cfg).map_err(Failure::run)?;
    export_topologies(&manifest, &cfg)?;
    let text = analysis_text(&r);
    write_file(&manifest.path("analysis.txt"), &text)?;
    write_json(&manifest.path("analysis.json"), &analysis_json(&r))?;
    print!("{text}");
    Ok(0)
}

fn load_trace_for(args: &TraceArgs, manifest: &RunManifest, cfg: &SimConfig) -> Result<SimTrace, Failure> {
    let path = args.trace.clone().unwrap_or_else(|| manifest.path("trace.csv"));
    let trace = trace_io::load_trace(&path).map_err(|e| Failure::load(&path, e))?;
    if trace.n_agents != cfg.n_agents() || trace.order != cfg.order || trace.dim != cfg.dim {
        return Err(Failure::config(format!(
            "{}: trace has {} agents of order {} in dimension {}, scenario has {}, {}, {}",
            path.display(),
            trace.n_agents,
            trace.order,
            trace.dim,
            cfg.n_agents(),
            cfg.order,
            cfg.dim
        )));
    }
    if trace.samples.is_empty() {
        return Err(Failure::config(format!("{}: trace has no samples", path.display())));
    }
    Ok(trace)
}

fn safety_json(r: &SafetyReport) -> Value {
    json!({
        "all_safe": r.all_safe,
        "worst": r.worst.as_ref().map(|w| w.kind.to_string()),
        "barriers": r.records.iter().map(|b| json!({
            "barrier": b.kind.to_string(),
            "threshold": b.threshold,
            "min_distance": b.min_distance,
            "time": b.time,
            "safe": b.safe(),
        })).collect::<Vec<_>>(),
    })
}

pub fn check_safety(args: &TraceArgs) -> Outcome {
    let (manifest, cfg) = start(&args.run, "check-safety")?;
    let trace = load_trace_for(args, &manifest, &cfg)?;
    let r = safety::safety_monitor(&trace, &cfg.formation, &cfg.obstacles);
    let mut text = format!("verdict = {}\n", if r.all_safe { "safe" } else { "violated" });
    text += "barrier  threshold  min_distance  time  safe\n";
    for b in &r.records {
        text += &format!(
            "{}  {}  {:.6}  {}  {}\n",
            b.kind,
            b.threshold,
            b.min_distance,
            b.time,
            b.safe()
        );
    }
    write_file(&manifest.path("safety.txt"), &text)?;
    write_json(&manifest.path("safety.json"), &safety_json(&r))?;
    match r.worst.as_ref().filter(|_| !r.all_safe) {
        None => {
            println!("safe: {} barriers respected", r.records.len());
            Ok(0)
        }
        Some(w) => Err(Failure {
            code: EXIT_SAFETY,
            category: "safety",
            detail: format!(
                "{} reached {:.6} below threshold {} at t = {}",
                w.kind, w.min_distance, w.threshold, w.time
            ),
        }),
    }
}

pub fn gain_rule(args: &TraceArgs) -> Outcome {
    let (manifest, cfg) = start(&args.run, "gain-rule")?;
    let trace = load_trace_for(args, &manifest, &cfg)?;
    let n = cfg.n_agents();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let rows = pairs
        .par_iter()
        .map(|&(i, j)| {
            let b = safety::estimate_bounds(&trace, &cfg, i, j)?;
            Ok((i, j, b, safety::gain_rule(&b)))
        })
        .collect::<Result<Vec<_>, Error>>()
        .map_err(Failure::run)?;
    let (current, _) = linalg::singular_extremes(&cfg.params.gamma1);
    let mut needed: f64 = 0.0;
    let mut inapplicable = 0;
    let mut text = String::from("pair  w  rest  drift  cross  min_gamma  status\n");
    let mut entries = Vec::new();
    for (i, j, b, rule) in &rows {
        let (min_gamma, status) = match rule {
            Ok(g) => {
                needed = needed.max(*g);
                (Some(*g), if current > *g { "ok" } else { "raise" })
            }
            Err(_) => {
                inapplicable += 1;
                (None, "inapplicable")
            }
        };
        text += &format!(
            "({},{})  {:.4e}  {:.4e}  {:.4e}  {:.4e}  {}  {}\n",
            i + 1,
            j + 1,
            b.w_bound,
            b.rest_bound,
            b.drift_bound,
            b.cross_bound,
            opt(min_gamma),
            status
        );
        entries.push(json!({
            "pair": [i + 1, j + 1],
            "w_bound": b.w_bound,
            "rest_bound": b.rest_bound,
            "drift_bound": b.drift_bound,
            "cross_bound": b.cross_bound,
            "psi": b.psi,
            "varpi": b.varpi,
            "min_gamma": min_gamma,
            "status": status,
        }));
    }
    text += &format!("\ncurrent gamma1 (smallest singular value) = {current}\n");
    text += &format!("recommended gamma1 > {needed:.6}\n");
    if inapplicable > 0 {
        text += &format!("{inapplicable} pair(s) inapplicable: cross repulsion too strong for the rule\n");
    }
    write_file(&manifest.path("gain_rule.txt"), &text)?;
    write_json(
        &manifest.path("gain_rule.json"),
        &json!({ "current_gamma1": current, "recommended_min": needed, "inapplicable": inapplicable, "pairs": entries }),
    )?;
    print!("{text}");
    Ok(0)
}

/// Worker count from `SWARMSYNC_THREADS`; `None` means rayon's default.
fn thread_cap() -> Result<Option<usize>, Failure> {
    match std::env::var("SWARMSYNC_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::config(format!(
                "SWARMSYNC_THREADS must be a positive integer, got {v:?}"
            ))),
        },
    }
}

pub fn sweep(args: &SweepArgs) -> Outcome {
    let (manifest, mut cfg) = start(&args.run, "sweep")?;
    if let Some(j) = args.jitter {
        if !(j >= 0.0) {
            return Err(Failure::config(format!("jitter must be >= 0, got {j}")));
        }
        cfg.initial_jitter = j;
        cfg.validate().map_err(|e| Failure::load(&manifest.config, e))?;
    }
    if cfg.initial_jitter == 0.0 {
        println!("note: initial_jitter is 0, every seed gives the same run");
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Failure::config(e.to_string()))?;
    let seeds: Vec<u64> = (0..args.runs).map(|k| cfg.seed + k).collect();
    let results: Vec<(u64, swarmsync_core::Result<sim::Metrics>)> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut c = cfg.clone();
                c.seed = seed;
                // each run is a separate context; validate jitter against this seed
                let r = c.validate().and_then(|_| sim::simulate(&c)).map(|t| sim::metrics(&t));
                (seed, r)
            })
            .collect()
    });
    let path = manifest.path("sweep.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Failure::run(e.into()))?;
    w.write_record([
        "seed",
        "status",
        "delta1_final",
        "ultimate_bound",
        "settling_time",
        "max_u",
        "min_pair_separation",
        "min_leader_separation",
        "min_obstacle_distance",
    ])
    .map_err(|e| Failure::run(e.into()))?;
    let mut worst = 0;
    for (seed, r) in &results {
        let record = match r {
            Ok(m) => {
                let v = [
                    m.delta1_final,
                    m.ultimate_bound,
                    m.settling_time,
                    m.max_u,
                    m.min_pair_separation,
                    m.min_leader_separation,
                    m.min_obstacle_distance,
                ];
                let mut rec = vec![seed.to_string(), "ok".to_string()];
                rec.extend(v.iter().map(f64::to_string));
                rec
            }
            Err(e) => {
                let f = Failure::run(e.clone());
                worst = worst.max(f.code);
                eprintln!("seed {seed}: error[{}]: {}", f.category, f.detail);
                let mut rec = vec![seed.to_string(), f.category.to_string()];
                rec.extend(std::iter::repeat_n(String::new(), 7));
                rec
            }
        };
        w.write_record(&record).map_err(|e| Failure::run(e.into()))?;
    }
    w.flush().map_err(|e| Failure::run(e.into()))?;
    let ok = results.iter().filter(|(_, r)| r.is_ok()).count();
    println!("{ok}/{} runs completed; summary in {}", results.len(), path.display());
    Ok(worst)
}
