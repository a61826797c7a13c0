//! Experiment driver behind the `qedsim` binary.
//!
//! Every command reads one [`ExperimentConfig`], writes its artifacts into
//! the output directory, and finishes with `manifest.json`. Artifacts depend
//! only on the config (worker count excluded), so reruns are byte-identical.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::convergence::{convergence_study, ConvergenceBudget};
use crate::analysis::drift::{drift_check_geometric, drift_check_quadratic, DriftReport, DriftRun};
use crate::analysis::stationary::{estimate_stationary, StationaryEstimate};
use crate::analysis::tail::{empirical_mgf, first_unreliable, fit_tail_exponent, write_mgf_csv, MgfPoint, TailFit};
use crate::analysis::waiting::{collect_event_samples, waiting_time_checks, EventPlan, WaitingReport};
use crate::arrivals::make_source;
use crate::config::{ExperimentConfig, Format, Mode};
use crate::error::Error;
use crate::exec::{with_workers, Execution};
use crate::finite_sim::event::{run_event_sim, CustomerCsv, EventSummary};
use crate::finite_sim::{default_warmup, EmbeddedChain, TraceWriter};
use crate::limit_chain::checks::{gamma_sandwich_check, y_bounds_check, y_identity_residual, BoundsReport, IdentityReport, SandwichReport};
use crate::limit_chain::{record, LimitChain, TrajectoryWriter};
use crate::model::{qed_scaling, theta_star, DerivedConstants, QedScaling};
use crate::rng::{Purpose, SeedStream};

/// Default limit-chain burn-in, in steps.
pub const LIMIT_WARMUP: u64 = 10_000;
/// Server count used by `validate` when the config gives none.
pub const VALIDATE_N: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Model,
    SimulateFinite,
    SimulateLimit,
    SimulateEvent,
    Estimate,
    Exponent,
    Drift,
    Validate,
    Compare,
    Run,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Model => "model",
            Command::SimulateFinite => "simulate-finite",
            Command::SimulateLimit => "simulate-limit",
            Command::SimulateEvent => "simulate-event",
            Command::Estimate => "estimate",
            Command::Exponent => "exponent",
            Command::Drift => "drift",
            Command::Validate => "validate",
            Command::Compare => "compare",
            Command::Run => "run",
        }
    }
}

/// Output directory bookkeeping.
pub struct Artifacts {
    dir: PathBuf,
    formats: Vec<Format>,
    written: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path, formats: &[Format]) -> Result<Self, Error> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display(), e))?;
        Ok(Self { dir: dir.to_path_buf(), formats: formats.to_vec(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>, Error> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(path.display(), e))?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    pub fn csv(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> csv::Result<()>) -> Result<(), Error> {
        if !self.formats.contains(&Format::Csv) {
            return Ok(());
        }
        let mut out = self.open(name)?;
        body(&mut out).map_err(|e| Error::io(name, e))?;
        out.flush().map_err(|e| Error::io(name, e))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Error> {
        if !self.formats.contains(&Format::Json) {
            return Ok(());
        }
        self.write_json(name, value)
    }

    /// Written regardless of the format list.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Error> {
        let mut out = self.open(name)?;
        serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::io(name, e))?;
        out.write_all(b"\n").and_then(|_| out.flush()).map_err(|e| Error::io(name, e))
    }
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: crate::config::RawConfig,
    config_toml: String,
    seeds: SeedInfo,
    artifacts: &'a [String],
}

#[derive(Debug, Clone, Serialize)]
struct SeedInfo {
    root: u64,
    generator: &'static str,
    stream_id: &'static str,
}

/// What a command produced, for printing.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: serde_json::Value,
    pub artifacts: Vec<String>,
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

/// Runs `cmd` with `cfg.run.workers` threads and writes the manifest.
pub fn execute(cmd: Command, cfg: &ExperimentConfig) -> Result<Outcome, Error> {
    let mut art = Artifacts::create(&cfg.output.directory, &cfg.output.formats)?;
    let result = with_workers(cfg.run.workers, || dispatch(cmd, cfg, &mut art, Execution::Parallel));
    let summary = match result {
        Ok(s) => s,
        Err(e) => {
            let _ = art.write_json("error.json", &e.report());
            write_manifest(cmd, cfg, &mut art)?;
            return Err(e);
        }
    };
    write_manifest(cmd, cfg, &mut art)?;
    Ok(Outcome { summary, artifacts: art.written().to_vec() })
}

fn write_manifest(cmd: Command, cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<(), Error> {
    let listed: Vec<String> = art.written().to_vec();
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: cmd.name(),
        config: cfg.resolved(),
        config_toml: cfg.to_toml_string(),
        seeds: SeedInfo {
            root: cfg.run.seed,
            generator: "ChaCha8",
            stream_id: "replication * 8 + purpose (arrivals 0, service 1, limit 2, replay 3, analysis 4)",
        },
        artifacts: &listed,
    };
    art.write_json("manifest.json", &manifest)
}

fn dispatch(cmd: Command, cfg: &ExperimentConfig, art: &mut Artifacts, exec: Execution) -> Result<serde_json::Value, Error> {
    match cmd {
        Command::Model => model(cfg, art),
        Command::SimulateFinite => simulate_finite(cfg, art),
        Command::SimulateLimit => simulate_limit(cfg, art),
        Command::SimulateEvent => simulate_event(cfg, art),
        Command::Estimate => estimate(cfg, art, exec).map(|e| to_value(&summary_of(&e))),
        Command::Exponent => exponent(cfg, art, exec),
        Command::Drift => drift(cfg, art, exec),
        Command::Validate => validate(cfg, art),
        Command::Compare => compare(cfg, art, exec),
        Command::Run => match cfg.run.mode {
            Mode::Limit => exponent(cfg, art, exec),
            Mode::Finite => estimate(cfg, art, exec).map(|e| to_value(&summary_of(&e))),
            Mode::Event => waiting(cfg, art, exec),
            Mode::Compare => compare(cfg, art, exec),
        },
    }
}

fn model(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<serde_json::Value, Error> {
    let c = DerivedConstants::new(&cfg.model.service, cfg.model.beta, cfg.arrivals.c_a())?;
    art.write_json("model.json", &c)?;
    Ok(to_value(&c))
}

fn scaling(cfg: &ExperimentConfig, n: u64) -> Result<QedScaling, Error> {
    Ok(qed_scaling(n, cfg.model.beta, &cfg.model.service)?)
}

fn finite_chain(cfg: &ExperimentConfig, sc: QedScaling, rep: u64) -> Result<EmbeddedChain, Error> {
    let seeds = SeedStream::new(cfg.run.seed);
    let source = make_source(cfg.arrivals, sc.lambda_n, seeds.seed(rep, Purpose::Arrivals))?;
    Ok(EmbeddedChain::new(sc, cfg.model.service.clone(), source, seeds.rng(rep, Purpose::Service)))
}

fn limit_chain(cfg: &ExperimentConfig, rep: u64) -> LimitChain {
    let seeds = SeedStream::new(cfg.run.seed);
    LimitChain::new(&cfg.model.service, cfg.model.beta, cfg.arrivals.c_a(), seeds.rng(rep, Purpose::LimitChain))
}

#[derive(Debug, Serialize)]
struct FiniteRunSummary {
    scaling: QedScaling,
    warmup: u64,
    slots: u64,
    rows: u64,
    mean_q: f64,
    max_identity_error: f64,
}

fn simulate_finite(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<serde_json::Value, Error> {
    let sc = scaling(cfg, cfg.single_n()?)?;
    let mut chain = finite_chain(cfg, sc, 0)?;
    let warmup = cfg.run.warmup.unwrap_or_else(|| default_warmup(sc.n, &cfg.model.service));
    for _ in 0..warmup {
        chain.step()?;
    }
    let k = cfg.model.service.k();
    let spacing = cfg.run.spacing;
    let mut rows = 0u64;
    let mut q_sum = 0.0;
    let mut max_err: f64 = 0.0;
    let mut failure = None;
    art.csv("trace.csv", |out| {
        let mut w = TraceWriter::new(out, k)?;
        for t in 1..=cfg.run.samples {
            if let Err(v) = chain.step() {
                failure = Some(v);
                break;
            }
            max_err = max_err.max(chain.view().identity_error(sc.beta_n));
            if t % spacing == 0 {
                w.write(&chain.state, &chain.last)?;
                rows += 1;
                q_sum += chain.state.q as f64;
            }
        }
        w.finish()
    })?;
    if let Some(v) = failure {
        return Err(v.into());
    }
    let s = FiniteRunSummary { scaling: sc, warmup, slots: cfg.run.samples, rows, mean_q: q_sum / rows.max(1) as f64, max_identity_error: max_err };
    art.json("finite_summary.json", &s)?;
    Ok(to_value(&s))
}

#[derive(Debug, Serialize)]
struct LimitRunSummary {
    beta: f64,
    c_a: f64,
    warmup: u64,
    steps: u64,
    rows: u64,
    mean_q_hat: f64,
}

fn simulate_limit(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<serde_json::Value, Error> {
    let mut chain = limit_chain(cfg, 0);
    let warmup = cfg.run.warmup.unwrap_or(LIMIT_WARMUP);
    chain.advance(warmup);
    let (mut rows, mut q_sum) = (0u64, 0.0);
    let mut failure = None;
    art.csv("trajectory.csv", |out| {
        let mut w = TrajectoryWriter::new(out, cfg.model.service.k())?;
        for t in 1..=cfg.run.samples {
            if let Err(v) = chain.step_checked() {
                failure = Some(v);
                break;
            }
            if t % cfg.run.spacing == 0 {
                w.write(&chain.state)?;
                rows += 1;
                q_sum += chain.state.q_hat;
            }
        }
        w.finish()
    })?;
    if let Some(v) = failure {
        return Err(v.into());
    }
    let s = LimitRunSummary { beta: cfg.model.beta, c_a: cfg.arrivals.c_a(), warmup, steps: cfg.run.samples, rows, mean_q_hat: q_sum / rows.max(1) as f64 };
    art.json("limit_summary.json", &s)?;
    Ok(to_value(&s))
}

#[derive(Debug, Serialize)]
struct EventRunSummary {
    scaling: QedScaling,
    horizon: u64,
    summary: EventSummary,
}

fn simulate_event(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<serde_json::Value, Error> {
    let sc = scaling(cfg, cfg.single_n()?)?;
    let seeds = SeedStream::new(cfg.run.seed);
    let mut source = make_source(cfg.arrivals, sc.lambda_n, seeds.seed(0, Purpose::Arrivals))?;
    let mut rng = seeds.rng(0, Purpose::Service);
    let horizon = cfg.run.samples;
    let mut summary = EventSummary::default();
    art.csv("customers.csv", |out| {
        let mut obs = CustomerCsv::new(out);
        summary = run_event_sim(sc.n, &cfg.model.service, &mut source, horizon, &mut rng, &mut obs);
        obs.finish()
    })?;
    if !cfg.wants(Format::Csv) {
        summary = run_event_sim(sc.n, &cfg.model.service, &mut source, horizon, &mut rng, &mut ());
    }
    let s = EventRunSummary { scaling: sc, horizon, summary };
    art.json("event_summary.json", &s)?;
    Ok(to_value(&s))
}

/// `Q̂` samples, one chain per replication concatenated in index order.
fn q_hat_samples(cfg: &ExperimentConfig, exec: Execution) -> Result<Vec<f64>, Error> {
    let reps = cfg.run.replications;
    let per = (cfg.run.samples as usize).div_ceil(reps);
    let groups: Vec<Result<Vec<f64>, Error>> = match cfg.run.mode {
        Mode::Finite => {
            let sc = scaling(cfg, cfg.single_n()?)?;
            let warmup = cfg.run.warmup.unwrap_or_else(|| default_warmup(sc.n, &cfg.model.service));
            exec.map(reps, |r| {
                let mut chain = finite_chain(cfg, sc, r as u64)?;
                for _ in 0..warmup {
                    chain.step()?;
                }
                let states = chain.sample_states(per, cfg.run.spacing)?;
                Ok(states.iter().map(|s| s.q as f64 / sc.sqrt_n()).collect())
            })
        }
        _ => exec.map(reps, |r| {
            let mut chain = limit_chain(cfg, r as u64);
            chain.advance(cfg.run.warmup.unwrap_or(LIMIT_WARMUP));
            Ok(chain.sample_q_hat(per, cfg.run.spacing))
        }),
    };
    let mut out = Vec::with_capacity(per * reps);
    for g in groups {
        out.extend(g?);
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct StationarySummary {
    mean: f64,
    variance: f64,
    batch_ci: f64,
    atom_at_zero: f64,
    atom_ci: f64,
    sample_count: usize,
    batch_count: usize,
    max: f64,
}

fn summary_of(e: &StationaryEstimate) -> StationarySummary {
    StationarySummary {
        mean: e.mean,
        variance: e.variance,
        batch_ci: e.batch_ci,
        atom_at_zero: e.atom_at_zero,
        atom_ci: e.atom_ci,
        sample_count: e.sample_count,
        batch_count: e.batch_count,
        max: e.max,
    }
}

fn estimate_from(cfg: &ExperimentConfig, art: &mut Artifacts, samples: &[f64]) -> Result<StationaryEstimate, Error> {
    let est = estimate_stationary(samples, 0, cfg.analysis.batches, cfg.analysis.bin_width)?;
    art.csv("histogram.csv", |out| est.histogram.write_csv(out))?;
    art.json("stationary.json", &est)?;
    Ok(est)
}

fn estimate(cfg: &ExperimentConfig, art: &mut Artifacts, exec: Execution) -> Result<StationaryEstimate, Error> {
    let samples = q_hat_samples(cfg, exec)?;
    estimate_from(cfg, art, &samples)
}

#[derive(Debug, Serialize)]
struct ExponentSummary {
    stationary: StationarySummary,
    tail_fit: TailFit,
    mgf: Vec<MgfPoint>,
    mgf_blow_up_theta: Option<f64>,
}

fn exponent(cfg: &ExperimentConfig, art: &mut Artifacts, exec: Execution) -> Result<serde_json::Value, Error> {
    let theta = theta_star(cfg.model.beta, cfg.arrivals.c_a(), cfg.model.service.c_s())?;
    let mut limit_cfg = cfg.clone();
    limit_cfg.run.mode = Mode::Limit;
    let samples = q_hat_samples(&limit_cfg, exec)?;
    let est = estimate_from(cfg, art, &samples)?;
    let fit = fit_tail_exponent(&est, cfg.analysis.tail_lo, cfg.analysis.tail_hi, theta)?;
    art.json("tail_fit.json", &fit)?;
    let grid: Vec<f64> = cfg.analysis.theta_grid.iter().map(|m| m * theta).collect();
    let mgf = empirical_mgf(&samples, &grid);
    art.csv("mgf.csv", |out| write_mgf_csv(&mgf, out))?;
    let s = ExponentSummary { stationary: summary_of(&est), tail_fit: fit, mgf_blow_up_theta: first_unreliable(&mgf), mgf };
    Ok(to_value(&s))
}

#[derive(Debug, Serialize)]
struct DriftRow {
    multiplier: f64,
    #[serde(flatten)]
    report: DriftReport,
}

#[derive(Debug, Serialize, PartialEq)]
struct DriftCsvRow {
    multiplier: f64,
    theta: f64,
    ratio_outside: f64,
    ratio_outside_ci: f64,
    growth_ratio_all: f64,
    growth_ratio_all_ci: f64,
    exception_frequency: f64,
    analytic_ratio_outside: f64,
}

fn drift(cfg: &ExperimentConfig, art: &mut Artifacts, exec: Execution) -> Result<serde_json::Value, Error> {
    let dist = &cfg.model.service;
    let c_a = cfg.arrivals.c_a();
    let theta = theta_star(cfg.model.beta, c_a, dist.c_s())?;
    let phi = dist.mu() * theta;
    let run = DriftRun {
        steps: cfg.run.samples,
        warmup: cfg.run.warmup.unwrap_or(LIMIT_WARMUP),
        batches: cfg.analysis.batches,
        seed: cfg.run.seed,
    };
    let reports = exec.map_slice(&cfg.analysis.drift_multipliers, |&m| {
        drift_check_geometric(dist, cfg.model.beta, c_a, m * phi, run).map(|report| DriftRow { multiplier: m, report })
    });
    let rows: Vec<DriftRow> = reports.into_iter().collect::<Result<_, _>>()?;
    let quadratic = match cfg.run.n.as_slice() {
        [n] => {
            let sc = scaling(cfg, *n)?;
            let run = DriftRun { warmup: cfg.run.warmup.unwrap_or_else(|| default_warmup(*n, dist)), ..run };
            Some(drift_check_quadratic(&sc, dist, cfg.arrivals, run)?)
        }
        _ => None,
    };
    art.csv("drift.csv", |out| {
        let mut w = csv::Writer::from_writer(out);
        for r in &rows {
            w.serialize(DriftCsvRow {
                multiplier: r.multiplier,
                theta: r.report.theta,
                ratio_outside: r.report.ratio_outside,
                ratio_outside_ci: r.report.ratio_outside_ci,
                growth_ratio_all: r.report.growth_ratio_all,
                growth_ratio_all_ci: r.report.growth_ratio_all_ci,
                exception_frequency: r.report.exception_frequency,
                analytic_ratio_outside: r.report.analytic_ratio_outside.unwrap_or(f64::NAN),
            })?;
        }
        w.flush()?;
        Ok(())
    })?;
    #[derive(Serialize)]
    struct DriftOut<'a> {
        phi_critical: f64,
        geometric: &'a [DriftRow],
        quadratic: Option<DriftReport>,
    }
    let out = DriftOut { phi_critical: phi, geometric: &rows, quadratic };
    art.json("drift.json", &out)?;
    Ok(to_value(&out))
}

#[derive(Debug, Serialize)]
pub struct FiniteValidation {
    pub n: u64,
    pub steps: usize,
    pub max_identity_error: f64,
}

#[derive(Debug, Serialize)]
pub struct ValidateReport {
    pub steps: usize,
    pub identity: IdentityReport,
    pub bounds: Vec<BoundsReport>,
    pub sandwich: Vec<SandwichReport>,
    pub finite: FiniteValidation,
    pub event: EventSummary,
    pub violations: u64,
}

fn validate(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<serde_json::Value, Error> {
    let dist = &cfg.model.service;
    let beta = cfg.model.beta;
    let steps = cfg.analysis.validate_steps;
    let mut chain = limit_chain(cfg, 0);
    chain.advance(cfg.run.warmup.unwrap_or(LIMIT_WARMUP).min(steps as u64));
    let tr = record(&mut chain, steps)?;
    let identity = y_identity_residual(&tr, dist, beta)?;
    let bounds = [0, 1, 5, 10].iter().map(|&k| y_bounds_check(&tr, dist, beta, k)).collect::<Result<Vec<_>, _>>()?;
    let sandwich = [0, 1, 5, 50].iter().map(|&j| gamma_sandwich_check(&tr, dist, beta, j)).collect::<Result<Vec<_>, _>>()?;

    let n = match cfg.run.n.as_slice() {
        [n, ..] => *n,
        [] => VALIDATE_N,
    };
    let sc = scaling(cfg, n)?;
    let mut fchain = finite_chain(cfg, sc, 0)?;
    let mut max_err: f64 = 0.0;
    for _ in 0..steps {
        fchain.step()?;
        max_err = max_err.max(fchain.view().identity_error(sc.beta_n));
    }
    let seeds = SeedStream::new(cfg.run.seed);
    let mut source = make_source(cfg.arrivals, sc.lambda_n, seeds.seed(1, Purpose::Arrivals))?;
    let horizon = (steps as u64 / 10).max(100);
    let event = run_event_sim(n, dist, &mut source, horizon, &mut seeds.rng(1, Purpose::Service), &mut ());

    let violations = (!identity.holds()) as u64
        + bounds.iter().map(|b| b.violations()).sum::<u64>()
        + sandwich.iter().map(|s| s.violations).sum::<u64>()
        + (max_err > 1e-9) as u64
        + event.idle_with_queue
        + event.order_violations;
    let report = ValidateReport {
        steps,
        identity,
        bounds,
        sandwich,
        finite: FiniteValidation { n, steps, max_identity_error: max_err },
        event,
        violations,
    };
    art.write_json("validate.json", &report)?;
    if violations > 0 {
        return Err(Error::Validation(format!("{violations} invariant violations; see validate.json")));
    }
    Ok(to_value(&report))
}

fn compare(cfg: &ExperimentConfig, art: &mut Artifacts, exec: Execution) -> Result<serde_json::Value, Error> {
    if cfg.run.n.is_empty() {
        return Err(crate::config::ConfigError::MissingKey("run.n".into()).into());
    }
    let budget = ConvergenceBudget {
        samples: cfg.run.samples as usize,
        replications: cfg.run.replications.max(2),
        spacing: cfg.run.spacing,
        finite_warmup: cfg.run.warmup,
        limit_warmup: LIMIT_WARMUP,
    };
    let table = convergence_study(&cfg.model.service, cfg.model.beta, cfg.arrivals, &cfg.run.n, budget, cfg.run.seed, exec)?;
    art.csv("convergence.csv", |out| table.write_csv(out))?;
    #[derive(Serialize)]
    struct CompareOut<'a> {
        table: &'a crate::analysis::convergence::ConvergenceTable,
        non_increasing_within_noise: bool,
        strictly_decreasing_beyond_noise: bool,
    }
    let out = CompareOut {
        table: &table,
        non_increasing_within_noise: table.non_increasing_within_noise(),
        strictly_decreasing_beyond_noise: table.strictly_decreasing_beyond_noise(),
    };
    art.json("convergence.json", &out)?;
    Ok(to_value(&out))
}

fn waiting(cfg: &ExperimentConfig, art: &mut Artifacts, exec: Execution) -> Result<serde_json::Value, Error> {
    if cfg.run.n.is_empty() {
        return Err(crate::config::ConfigError::MissingKey("run.n".into()).into());
    }
    let dist = &cfg.model.service;
    let seeds = SeedStream::new(cfg.run.seed);
    let samples = cfg.run.samples as usize;
    let mut limit = limit_chain(cfg, 0);
    limit.advance(LIMIT_WARMUP);
    let limit_q = limit.sample_q_hat(samples, cfg.run.spacing.max(10));
    let results = exec.map_slice(&cfg.run.n, |&n| -> Result<WaitingReport, Error> {
        let sc = scaling(cfg, n)?;
        let stride = sc.lambda_n.ceil().max(1.0) as u64;
        let plan = EventPlan {
            warmup: cfg.run.warmup.unwrap_or_else(|| default_warmup(n, dist)),
            // 5% headroom over the expected record count
            horizon: (1.05 * samples as f64 * stride as f64 / sc.lambda_n).ceil() as u64 + 1,
            customer_stride: stride,
            epoch_stride: cfg.run.spacing.max(10),
        };
        let ev = collect_event_samples(&sc, dist, cfg.arrivals, plan, &seeds, n)?;
        Ok(waiting_time_checks(&ev.waits, &ev.queue, &limit_q, &sc, cfg.arrivals, seeds.seed(n, Purpose::Replay))?)
    });
    let reports: Vec<WaitingReport> = results.into_iter().collect::<Result<_, _>>()?;
    art.csv("waiting.csv", |out| {
        let mut w = csv::Writer::from_writer(out);
        for r in &reports {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    })?;
    art.json("waiting.json", &reports)?;
    Ok(to_value(&reports))
}
