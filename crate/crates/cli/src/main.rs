//! `refnav` command-line tool.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use refnav::eval::{evaluate_trajectory, RunReport, Thresholds};
use refnav::io;
use refnav::pipeline::{run, PipelineConfig, PipelineInputs};
use refnav::sim::{simulate, GroundTruthTrace, Scenario, ScenarioKind};
use refnav::ssc::{
    label_stream, train_on_imu, Confusion, ForestParams, RandomForestModel, StandstillClassifier,
};
use refnav::{LtpPose, MotionState};

#[derive(Parser)]
#[command(
    name = "refnav",
    version,
    about = "Reference localization from IMU and LiDAR markers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write truth, IMU, LiDAR and marker files.
    Simulate(SimulateArgs),
    /// Train the standstill classifier on a labelled IMU recording.
    TrainSsc(TrainArgs),
    /// Classify every IMU sample as standstill or motion.
    Classify(ClassifyArgs),
    /// Run the estimation pipeline.
    Estimate(EstimateArgs),
    /// Compare an estimate with ground truth.
    Evaluate(EvaluateArgs),
    /// Time the pipeline modules on simulated data.
    Profile(ProfileArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Standstill,
    StandstillVibration,
    WalkingRoll,
    DriveBy,
    Slalom,
    Figure8,
    ParkingLoop,
    ThreeMode,
}

impl From<Kind> for ScenarioKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Standstill => ScenarioKind::Standstill,
            Kind::StandstillVibration => ScenarioKind::StandstillVibration,
            Kind::WalkingRoll => ScenarioKind::WalkingRoll,
            Kind::DriveBy => ScenarioKind::DriveBy,
            Kind::Slalom => ScenarioKind::Slalom,
            Kind::Figure8 => ScenarioKind::Figure8,
            Kind::ParkingLoop => ScenarioKind::ParkingLoop,
            Kind::ThreeMode => ScenarioKind::ThreeMode,
        }
    }
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario TOML; overrides --kind, --speed and --duration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "drive-by")]
    kind: Kind,
    /// Cruise speed in km/h (0 picks the scenario default).
    #[arg(long, default_value_t = 0.0)]
    speed_kmh: f64,
    /// Seconds.
    #[arg(long, default_value_t = 30.0)]
    duration: f64,
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn scenario(&self) -> Result<Scenario> {
        let mut sc = match &self.config {
            Some(p) => {
                Scenario::load(p).with_context(|| format!("loading scenario {}", p.display()))?
            }
            None => Scenario::new(self.kind.into(), self.speed_kmh / 3.6, self.duration, 0),
        };
        if let Some(s) = self.seed {
            sc.seed = s;
        }
        sc.validate()?;
        Ok(sc)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// IMU CSV; needs a label column unless --truth is given.
    #[arg(long)]
    imu: PathBuf,
    /// Truth CSV to label the IMU samples from.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Pipeline TOML (its `ssc` table sets the window).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 12)]
    trees: usize,
    #[arg(long, default_value_t = 5)]
    min_leaf: usize,
    /// Output directory; receives `model.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    imu: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; receives `classification.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    imu: PathBuf,
    /// LiDAR point CSV.
    #[arg(long)]
    lidar: Option<PathBuf>,
    /// Marker library JSON; required with --lidar.
    #[arg(long)]
    markers: Option<PathBuf>,
    /// Classifier model; required unless the config disables the gate.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Take the initial pose and speed from the first truth row.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Initial pose `x,y,psi_deg` when no truth is given.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.0, 0.0, 0.0])]
    initial_pose: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    initial_speed: f64,
    /// Output directory; receives `estimate.csv`, `lbpm.csv` when markers
    /// were used, and `stats.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Classification CSV to score against the truth labels.
    #[arg(long)]
    classification: Option<PathBuf>,
    /// Threshold TOML with `velocity_mean`, `position_mean`, `orientation_mean_deg`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Exit with code 2 when a mean error exceeds its threshold.
    #[arg(long)]
    assert: bool,
    /// Output directory for `report.json`; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Classifier model; a small one is trained when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    calls: usize,
    /// Output directory for `runtime.json`; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn pipeline_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => {
            PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))
        }
        None => Ok(PipelineConfig::default()),
    }
}

fn out_dir(dir: &Path) -> Result<&Path> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_or_print(out: Option<&Path>, name: &str, json: &str) -> Result<()> {
    match out {
        Some(d) => {
            let p = out_dir(d)?.join(name);
            fs::write(&p, json).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{json}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let sc = a.scenario.scenario()?;
    let r = simulate(&sc)?;
    out_dir(&a.out)?;
    let labels: Vec<MotionState> = r.truth.samples().iter().map(|s| s.motion).collect();
    io::write_truth_file(&a.out.join("truth.csv"), r.truth.samples())?;
    io::write_imu_file(&a.out.join("imu.csv"), &r.imu, Some(&labels))?;
    io::write_points_file(&a.out.join("lidar.csv"), &r.points)?;
    r.markers.save(&a.out.join("markers.json"))?;
    eprintln!(
        "{} IMU samples, {} LiDAR points, {} markers -> {}",
        r.imu.len(),
        r.points.len(),
        r.markers.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = pipeline_config(a.config.as_deref())?;
    let (imu, labels) = io::read_imu_file(&a.imu)?;
    let labels = match (&a.truth, labels) {
        (Some(t), _) => {
            let truth = GroundTruthTrace::from_samples(io::read_truth_file(t)?)?;
            let ts: Vec<f64> = imu.iter().map(|s| s.t).collect();
            label_stream(&truth, &ts)?
        }
        (None, Some(l)) => l,
        (None, None) => bail!("{} has no label column; pass --truth", a.imu.display()),
    };
    let params = ForestParams {
        n_trees: a.trees,
        min_leaf_size: a.min_leaf,
        ..ForestParams::default()
    };
    let model = train_on_imu(&imu, &labels, &cfg.ssc, &params, a.seed)?;
    let path = out_dir(&a.out)?.join("model.json");
    model.save(&path)?;
    eprintln!(
        "trained {} trees on {} samples -> {}",
        model.n_trees(),
        imu.len(),
        path.display()
    );
    Ok(())
}

fn cmd_classify(a: &ClassifyArgs) -> Result<()> {
    let cfg = pipeline_config(a.config.as_deref())?;
    let (imu, _) = io::read_imu_file(&a.imu)?;
    let mut clf = StandstillClassifier::new(RandomForestModel::load(&a.model)?, cfg.ssc)?;
    let rows: Vec<_> = imu
        .iter()
        .map(|s| {
            let c = clf.push(s);
            (s.t, c.standstill_fraction, c.state)
        })
        .collect();
    io::write_classification_file(&out_dir(&a.out)?.join("classification.csv"), &rows)?;
    let still = rows
        .iter()
        .filter(|r| r.2 == MotionState::Standstill)
        .count();
    eprintln!("{still} of {} samples standstill", rows.len());
    Ok(())
}

fn cmd_estimate(a: &EstimateArgs) -> Result<()> {
    let cfg = pipeline_config(a.config.as_deref())?;
    let (imu, _) = io::read_imu_file(&a.imu)?;
    let points = a.lidar.as_deref().map(io::read_points_file).transpose()?;
    let markers = match (&a.markers, &points) {
        (Some(m), _) => Some(refnav::lbpm::MarkerLibrary::load(m)?),
        (None, Some(_)) => bail!("--lidar needs a marker library (--markers)"),
        (None, None) => None,
    };
    let model = a
        .model
        .as_deref()
        .map(RandomForestModel::load)
        .transpose()?;
    let (initial_pose, initial_speed) = match &a.truth {
        Some(t) => {
            let s = *io::read_truth_file(t)?
                .first()
                .context("truth file is empty")?;
            (s.pose(), s.v)
        }
        None => {
            let p = &a.initial_pose;
            (LtpPose::new(p[0], p[1], p[2].to_radians()), a.initial_speed)
        }
    };
    let inputs = PipelineInputs {
        imu: &imu,
        points: points.as_deref(),
        markers: markers.as_ref(),
        classifier: model.as_ref(),
        initial_pose,
        initial_speed,
    };
    let out = run(&inputs, &cfg)?;
    let dir = out_dir(&a.out)?;
    io::write_estimate_file(&dir.join("estimate.csv"), &out.rows)?;
    if markers.is_some() {
        let fixes: Vec<_> = out.lbpm.iter().map(|u| u.output).collect();
        io::write_lbpm_file(&dir.join("lbpm.csv"), &fixes)?;
    }
    let stats = serde_json::to_string_pretty(&out.stats)?;
    fs::write(dir.join("stats.json"), &stats)
        .with_context(|| format!("writing {}", dir.display()))?;
    eprintln!("{}", serde_json::to_string(&out.stats)?);
    Ok(())
}

/// Returns whether all thresholds held.
fn cmd_evaluate(a: &EvaluateArgs) -> Result<bool> {
    let thresholds: Thresholds = match &a.config {
        Some(p) => toml::from_str(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )
        .with_context(|| format!("parsing {}", p.display()))?,
        None => Thresholds::default(),
    };
    let rows = io::read_estimate_file(&a.estimate)?;
    let truth = io::read_truth_file(&a.truth)?;
    let errors = evaluate_trajectory(&rows, &truth)?;
    let confusion = match &a.classification {
        Some(p) => {
            let trace = GroundTruthTrace::from_samples(truth.clone())?;
            let mut c = Confusion::default();
            for (t, detected) in read_classification(p)? {
                if let Ok(m) = trace.motion_state_at(t) {
                    c.add(m, detected);
                }
            }
            Some(c)
        }
        None => None,
    };
    let report = RunReport {
        trajectory: Some(errors),
        confusion,
        ..RunReport::default()
    };
    write_or_print(
        a.out.as_deref(),
        "report.json",
        &serde_json::to_string_pretty(&report)?,
    )?;
    let violations = thresholds.check(&errors);
    for v in &violations {
        eprintln!("threshold violated: {v}");
    }
    Ok(violations.is_empty())
}

fn read_classification(path: &Path) -> Result<Vec<(f64, MotionState)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = (f.len() == 3)
            .then(|| Some((f[0].parse::<f64>().ok()?, f[2].parse::<u8>().ok()?)))
            .flatten()
            .and_then(|(t, l)| Some((t, MotionState::from_label(l)?)));
        match parsed {
            Some(row) => out.push(row),
            None => bail!(
                "{}:{}: expected `t,standstill_fraction,label`",
                path.display(),
                i + 1
            ),
        }
    }
    Ok(out)
}

fn cmd_profile(a: &ProfileArgs) -> Result<()> {
    let sc = a.scenario.scenario()?;
    let cfg = PipelineConfig::default();
    let r = simulate(&sc)?;
    let model = match &a.model {
        Some(p) => RandomForestModel::load(p)?,
        None => {
            let t = simulate(&Scenario::new(ScenarioKind::ThreeMode, 0.0, 300.0, sc.seed))?;
            let labels: Vec<MotionState> = t.truth.samples().iter().map(|s| s.motion).collect();
            train_on_imu(&t.imu, &labels, &cfg.ssc, &ForestParams::default(), sc.seed)?
        }
    };
    let runtime = refnav::profile::profile(&r, &model, &cfg, a.calls)?;
    let report = RunReport {
        runtime,
        ..RunReport::default()
    };
    write_or_print(
        a.out.as_deref(),
        "runtime.json",
        &serde_json::to_string_pretty(&report)?,
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a).map(|_| true),
        Command::TrainSsc(a) => cmd_train(a).map(|_| true),
        Command::Classify(a) => cmd_classify(a).map(|_| true),
        Command::Estimate(a) => cmd_estimate(a).map(|_| true),
        Command::Evaluate(a) => cmd_evaluate(a).map(|ok| ok || !a.assert),
        Command::Profile(a) => cmd_profile(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
