use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use lmo_core::dataset::{load_dataset, run_extract, ExtractConfig, Subset};
use lmo_core::scene::SceneConfig;
use lmo_core::SafetyParams;
use lmo_learn::classify::sweep::{GBM_DEPTH, GBM_LEARNING_RATE, KNN_K};
use lmo_learn::classify::{accuracy_score, sweep, Algorithm, Dataset, ModelFile, ModelSpec, SweepGrids, Task};
use lmo_learn::dqn::train::{write_histogram, write_reward_log};
use lmo_learn::dqn::{
    evaluate, reward_histogram, run_training, top_quartile_mass, DqnConfig, DqnModelFile, EpisodePool, RewardVariant,
    SynthEpisodeConfig, TrajectoryModel, HISTOGRAM_BINS,
};
use lmo_orchestrator::{Orchestrator, OrchestratorConfig, Server};
use lmo_sim::{read_log, replay, run_scenario, write_log, InProcLink, OrchestratorLink, Scenario, TcpLink};

#[derive(Parser)]
#[command(name = "lmo", version, about = "Lane merge orchestration toolkit", propagate_version = true)]
struct Cli {
    /// Machine-readable JSON on stdout instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract labelled merge samples from a trajectory CSV.
    Extract(ExtractArgs),
    /// Fit or sweep the merge/accel/heading classifiers.
    TrainClassifiers(ClassifierArgs),
    /// Train the dueling DQN merge agent.
    TrainDqn(DqnArgs),
    /// Run a merge scenario against an orchestrator.
    Simulate(SimulateArgs),
    /// Run the orchestrator service over TCP.
    Serve(ServeArgs),
    /// Compute KPI artifacts from a simulation log and reward log.
    Report(ReportArgs),
    /// Re-emit the message stream of a simulation log.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    input: PathBuf,
    /// Column mapping and label settings; NGSIM columns when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ClassifierArgs {
    /// Output directory of `extract`.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "merge")]
    task: Task,
    /// Repeat for several; all four when omitted.
    #[arg(long = "algo")]
    algos: Vec<Algorithm>,
    /// Sweep the hyperparameter grids on the validation set first.
    #[arg(long)]
    sweep: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for the fitted model files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum EnvKind {
    Dataset,
    Synthetic,
}

#[derive(Args)]
struct DqnArgs {
    #[arg(long, default_value = "positive")]
    variant: RewardVariant,
    #[arg(long, default_value_t = DqnConfig::default().episodes)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "synthetic")]
    env: EnvKind,
    /// Output directory of `extract`; required with `--env dataset`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Lane width used to build episodes from the dataset.
    #[arg(long, default_value_t = 3.7)]
    lane_width: f64,
    /// Writes model.json, rewards.csv and reward_histogram.csv here.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// `inproc`, or the address of a running `lmo serve`.
    #[arg(long, default_value = "inproc")]
    orchestrator: String,
    /// Trained agent for the in-process orchestrator.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Defaults to the scenario's own seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: String,
    /// Gateway to dial in addition to accepting connections.
    #[arg(long)]
    gateway: Option<String>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Scene description: a scene JSON or a scenario file containing one.
    #[arg(long)]
    boundary: PathBuf,
    #[arg(long, default_value_t = 1000)]
    staleness_ms: i64,
    /// Directory for the audit log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Simulation log (NDJSON).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Reward log written by `train-dqn`.
    #[arg(long)]
    rewards: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    log: PathBuf,
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn extract(a: &ExtractArgs, json: bool) -> Result<ExitCode> {
    let cfg = match &a.config {
        Some(p) => ExtractConfig::load(p)?,
        None => ExtractConfig::default(),
    };
    let report = run_extract(&a.input, &cfg, &a.out, a.seed)?;
    if json {
        print_json(&report)?;
    } else {
        println!(
            "{} rows ({} skipped), {} vehicles, {} lane changes, {} instances retained, {} samples",
            report.rows_read, report.rows_skipped, report.vehicles, report.lane_changes, report.retained, report.samples
        );
        for (why, n) in &report.rejections {
            println!("  rejected {why}: {n}");
        }
        println!("merge-frame safe fraction {:.3}{}", report.merge_frame_safe_fraction, if report.flagged { " (FLAGGED)" } else { "" });
    }
    Ok(ExitCode::SUCCESS)
}

fn default_spec(algo: Algorithm) -> ModelSpec {
    match algo {
        Algorithm::Dt => ModelSpec::DecisionTree { max_depth: None },
        Algorithm::Rf => ModelSpec::RandomForest { n_estimators: 100, max_depth: None },
        Algorithm::Knn => ModelSpec::Knn { k: KNN_K },
        Algorithm::Gbm => ModelSpec::GradientBoosting { n_estimators: 100, max_depth: GBM_DEPTH, learning_rate: GBM_LEARNING_RATE },
    }
}

#[derive(Serialize)]
struct ClassifierRow {
    algorithm: Algorithm,
    spec: ModelSpec,
    train_accuracy: f64,
    validation_accuracy: f64,
    test_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<lmo_learn::classify::SweepReport>,
}

fn train_classifiers(a: &ClassifierArgs, json: bool) -> Result<ExitCode> {
    let data = load_dataset(&a.dataset)?;
    let subset = |s| Dataset::from_samples(&data.samples, &data.split, s, a.task);
    let (train, validation, test) = (subset(Subset::Train)?, subset(Subset::Validation)?, subset(Subset::Test)?);
    let algos = if a.algos.is_empty() { Algorithm::ALL.to_vec() } else { a.algos.clone() };
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
    }
    let mut rows = Vec::new();
    for algo in algos {
        let report = if a.sweep { Some(sweep(a.task, algo, &train, &validation, &SweepGrids::default(), a.seed)?) } else { None };
        let spec = report.as_ref().map_or(default_spec(algo), |r| r.chosen);
        let model = spec.fit(&train, a.seed)?;
        let acc = |d: &Dataset| accuracy_score(&model.predict(d), &d.y);
        rows.push(ClassifierRow {
            algorithm: algo,
            spec,
            train_accuracy: acc(&train)?,
            validation_accuracy: acc(&validation)?,
            test_accuracy: acc(&test)?,
            sweep: report,
        });
        if let Some(dir) = &a.out {
            let name = format!("{}_{}.json", a.task.name(), serde_json::to_value(algo)?.as_str().unwrap_or("model"));
            ModelFile::new(a.task, spec, a.seed, train.n_features(), model).save(dir.join(name))?;
        }
    }
    if json {
        return print_json(&rows).map(|_| ExitCode::SUCCESS);
    }
    println!("task: {}  (train {}, validation {}, test {} samples)", a.task.name(), train.len(), validation.len(), test.len());
    println!("{:<22} {:>9} {:>11} {:>9}  hyperparameters", "algorithm", "train %", "validation %", "test %");
    for r in &rows {
        println!(
            "{:<22} {:>9.1} {:>11.1} {:>9.1}  {}",
            r.algorithm.display_name(),
            100.0 * r.train_accuracy,
            100.0 * r.validation_accuracy,
            100.0 * r.test_accuracy,
            serde_json::to_string(&r.spec)?
        );
        if let Some(s) = &r.sweep {
            if !s.guard_satisfied {
                println!("  note: no depth met the {:?} pp gap guard; smallest gap taken", s.guard_pp);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct DqnSummary {
    variant: RewardVariant,
    episodes_run: usize,
    steps: u64,
    skipped: usize,
    exhausted: bool,
    reward_top_quartile: f64,
    held_out_episodes: usize,
    safe_merge_rate: f64,
    far_behind_decreasing_fraction: f64,
    accel_in_0_2_fraction: f64,
    files: Vec<String>,
}

fn train_dqn(a: &DqnArgs, json: bool) -> Result<ExitCode> {
    let cfg = DqnConfig { episodes: a.episodes, ..DqnConfig::default() };
    let pool = match a.env {
        EnvKind::Synthetic => EpisodePool::synthetic(5000, &SynthEpisodeConfig::default(), a.seed.wrapping_add(11))?,
        EnvKind::Dataset => {
            let dir = a.dataset.as_ref().context("--env dataset needs --dataset <dir>")?;
            let data = load_dataset(dir)?;
            EpisodePool::from_instances(&data.instances, &data.split, a.lane_width, SafetyParams::default())
        }
    };
    if pool.train.is_empty() {
        bail!("no training episodes");
    }
    let result = run_training(pool.training_stream(a.seed), a.variant, &cfg, a.seed)?;
    let rewards: Vec<f64> = result.reward_log.iter().map(|r| r.reward).collect();
    let hist = reward_histogram(&rewards, a.variant, HISTOGRAM_BINS);
    let held_out = if pool.test.is_empty() { &pool.validation } else { &pool.test };
    let eval = evaluate(&result.net, held_out)?;

    std::fs::create_dir_all(&a.out).with_context(|| a.out.display().to_string())?;
    let files = ["model.json", "rewards.csv", "reward_histogram.csv"];
    DqnModelFile::new(a.variant, a.seed, cfg, result.net.clone()).save(a.out.join(files[0]))?;
    write_reward_log(&a.out.join(files[1]), &result.reward_log)?;
    write_histogram(&a.out.join(files[2]), &hist)?;

    let summary = DqnSummary {
        variant: a.variant,
        episodes_run: result.episodes_run,
        steps: result.steps,
        skipped: result.skipped,
        exhausted: result.exhausted,
        reward_top_quartile: top_quartile_mass(&hist),
        held_out_episodes: eval.episodes,
        safe_merge_rate: eval.safe_merge_rate,
        far_behind_decreasing_fraction: eval.far_behind_decreasing_fraction,
        accel_in_0_2_fraction: eval.accel_in_0_2_fraction,
        files: files.iter().map(|f| f.to_string()).collect(),
    };
    if json {
        print_json(&summary)?;
    } else {
        println!("{} episodes, {} steps ({} skipped){}", summary.episodes_run, summary.steps, summary.skipped, if summary.exhausted { ", source exhausted" } else { "" });
        println!("reward mass in top quartile: {:.3}", summary.reward_top_quartile);
        println!(
            "held-out ({} episodes): safe merges {:.3}, far-behind closing {:.3}, accel in [0,2] {:.3}",
            summary.held_out_episodes, summary.safe_merge_rate, summary.far_behind_decreasing_fraction, summary.accel_in_0_2_fraction
        );
        println!("wrote {} to {}", files.join(", "), a.out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn load_model(path: &Option<PathBuf>) -> Result<Option<Arc<dyn TrajectoryModel>>> {
    Ok(match path {
        Some(p) => Some(Arc::new(DqnModelFile::load(p)?.network)),
        None => None,
    })
}

fn simulate(a: &SimulateArgs, json: bool) -> Result<ExitCode> {
    let scn = Scenario::load(&a.scenario)?;
    let seed = a.seed.unwrap_or(scn.seed);
    let mut link: Box<dyn OrchestratorLink> = if a.orchestrator == "inproc" {
        let orch = Orchestrator::new(OrchestratorConfig::new(scn.scene.clone()), load_model(&a.model)?)?;
        Box::new(InProcLink::new(Arc::new(orch)))
    } else {
        if a.model.is_some() {
            log::warn!("--model is ignored with a remote orchestrator");
        }
        Box::new(TcpLink::connect(&a.orchestrator)?)
    };
    let out = run_scenario(&scn, link.as_mut(), seed)?;
    std::fs::create_dir_all(&a.out).with_context(|| a.out.display().to_string())?;
    let log_path = a.out.join("log.ndjson");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&log_path).with_context(|| log_path.display().to_string())?);
    write_log(&mut f, &out.events)?;
    let summary_path = a.out.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&out.summary)? + "\n")?;
    if json {
        print_json(&out.summary)?;
    } else {
        let s = &out.summary;
        println!("{} seed {}: {} at {} ms", s.scenario, s.seed, s.end_reason, s.end_ms);
        println!("merged {:?}, not merged {:?}, violations {}", s.merged, s.not_merged, s.violations);
        println!("log written to {}", log_path.display());
    }
    Ok(ExitCode::from(out.summary.exit_code() as u8))
}

fn load_scene(path: &Path) -> Result<SceneConfig> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let scene = value.get("scene").cloned().unwrap_or(value);
    serde_json::from_value(scene).with_context(|| format!("{}: not a scene or scenario", path.display()))
}

fn serve(a: &ServeArgs, json: bool) -> Result<ExitCode> {
    let cfg = OrchestratorConfig { staleness_ms: a.staleness_ms, ..OrchestratorConfig::new(load_scene(&a.boundary)?) };
    let mut orch = Orchestrator::new(cfg, load_model(&a.model)?)?;
    if let Some(dir) = &a.log {
        std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
        orch = orch.with_audit_file(&dir.join("audit.ndjson"))?;
    }
    let server = Server::bind(&a.listen, Arc::new(orch))?;
    if let Some(g) = &a.gateway {
        server.connect_gateway(g).with_context(|| format!("gateway {g}"))?;
    }
    if json {
        println!("{}", serde_json::json!({ "listening": server.local_addr().to_string() }));
    } else {
        println!("listening on {}", server.local_addr());
    }
    server.join();
    Ok(ExitCode::SUCCESS)
}

fn report(a: &ReportArgs, json: bool) -> Result<ExitCode> {
    let log = match &a.log {
        Some(p) => Some(read_log(std::io::BufReader::new(std::fs::File::open(p).with_context(|| p.display().to_string())?))?),
        None => None,
    };
    let rewards = a.rewards.as_deref().map(lmo_kpi::read_reward_log).transpose()?;
    let summary = lmo_kpi::report(&lmo_kpi::ReportInputs { log, rewards }, &a.out)?;
    if json {
        return print_json(&summary).map(|_| ExitCode::SUCCESS);
    }
    let h = &summary.headline;
    let pct = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{:.1}%", 100.0 * v));
    println!("recommended accelerations in [0, 2] m/s^2: {}", pct(h.recommended_accel_in_0_2));
    println!("recommended |acceleration| in [0, 2] m/s^2: {}", pct(h.recommended_abs_accel_in_0_2));
    println!("executed |acceleration| in [0, 2] m/s^2 while merging: {}", pct(h.executed_abs_accel_in_0_2));
    if let Some(m) = h.rtt_mean_ms {
        println!("recommendation RTT: mean {m:.1} ms over {} ({} unmatched)", h.rtt_samples, h.rtt_unmatched);
    }
    for (variant, q) in &h.reward_top_quartile {
        println!("{variant} reward mass in top quartile: {q:.3}");
    }
    for n in &summary.notes {
        println!("note: {n}");
    }
    println!("wrote {} to {}", summary.files.join(", "), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn replay_log(a: &ReplayArgs, json: bool) -> Result<ExitCode> {
    let events = read_log(std::io::BufReader::new(std::fs::File::open(&a.log).with_context(|| a.log.display().to_string())?))?;
    for r in replay(&events) {
        if json {
            println!("{}", serde_json::to_string(&r)?);
        } else {
            println!("{:>7} {:>5} {} -> {} {}", r.t_ms, r.seq, r.from, r.to, serde_json::to_string(&r.message)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let json = cli.json;
    let result = match &cli.command {
        Command::Extract(a) => extract(a, json),
        Command::TrainClassifiers(a) => train_classifiers(a, json),
        Command::TrainDqn(a) => train_dqn(a, json),
        Command::Simulate(a) => simulate(a, json),
        Command::Serve(a) => serve(a, json),
        Command::Report(a) => report(a, json),
        Command::Replay(a) => replay_log(a, json),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            if json {
                println!("{}", serde_json::json!({ "error": format!("{e:#}") }));
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::FAILURE
        }
    }
}
