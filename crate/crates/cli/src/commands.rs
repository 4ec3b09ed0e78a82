//! Subcommands. Every CSV report starts with `#` lines naming the command,
//! the config hash, the seeds and the checksums of the inputs; reports carry
//! no timestamps, so a re-run with the same inputs reproduces them byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use edgefbg::baseline::{calibrate, predict_record_bl, BlCalibration, CalibrationSample};
use edgefbg::dictionary::{build_dictionary, NormIndex};
use edgefbg::evaluation::{resolution_ablation, split_dataset, ShapeErrorStats, TableRow, table_csv};
use edgefbg::explain::{loss_saliency, marker_saliency, slope_contrast};
use edgefbg::geometry::MarkerShape;
use edgefbg::nn::{predict_outputs, Examples, Network, Trainer, OUTPUT_SIZE};
use edgefbg::optics::{generate_dataset, sample_random_shape, sensor_curve, Dataset, ScenarioKind, TEMPLATE_COUNT};
use edgefbg::tuner::run_search;

use crate::config::ExperimentConfig;
use crate::files::{
    load_checkpoint, load_dataset, load_json, save_checkpoint, save_dataset, save_json, write_file, Checkpoint,
};
use crate::CliError;

#[derive(Parser, Debug)]
#[command(name = "edgefbg", version, about = "Eccentric-FBG shape sensing experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a dataset.
    Gen(GenArgs),
    /// Train the network and write a checkpoint.
    Train(TrainArgs),
    /// Hyperparameter search with successive halving.
    Tune(TuneArgs),
    /// Tip error and RMSE per method.
    Eval(EvalArgs),
    /// Perturbation saliency maps for one sample.
    Explain(ExplainArgs),
    /// Reconstruction error versus sensing-plane spacing.
    Ablate(AblateArgs),
    /// Fit the intensity-model calibration.
    Calibrate(CalibrateArgs),
    /// Build a spectrum dictionary and its search index.
    Dict(DictArgs),
    /// Write the effective configuration as JSON.
    Config(ConfigArgs),
}

#[derive(Args, Debug)]
pub struct Common {
    /// Experiment configuration (JSON); defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Kind {
    Random,
    Trajectory,
    Template,
}

impl From<Kind> for ScenarioKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Random => ScenarioKind::Random,
            Kind::Trajectory => ScenarioKind::Trajectory,
            Kind::Template => ScenarioKind::Template,
        }
    }
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub kind: Kind,
    /// Sample count; templates always produce 320.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Training data; split by the config unless `--val` is given.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch report; defaults to `<out>.csv`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Trial log, one JSON object per line.
    #[arg(long)]
    pub log: PathBuf,
    /// Trial table; defaults to `<log>.csv`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Bl,
    Dl,
    Dict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Part {
    All,
    Train,
    Val,
    Test,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "dl")]
    pub methods: Vec<Method>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    /// Part of the dataset to score, using the config's split.
    #[arg(long, value_enum, default_value = "all")]
    pub split: Part,
    /// Dataset label in the table; defaults to the file stem.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub sample_id: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Plane spacings in mm.
    #[arg(long, value_delimiter = ',', default_value = "50,25,10")]
    pub spacings: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-grating report; defaults to `<out>.csv`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DictArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Dictionary file; the index goes to `<out>.index.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => gen(&a),
        Command::Train(a) => train(&a),
        Command::Tune(a) => tune(&a),
        Command::Eval(a) => eval(&a),
        Command::Explain(a) => explain(&a),
        Command::Ablate(a) => ablate(&a),
        Command::Calibrate(a) => calibrate_cmd(&a),
        Command::Dict(a) => dict(&a),
        Command::Config(a) => {
            let cfg = ExperimentConfig::load(a.common.config.as_deref())?;
            write_file(&a.out, cfg.to_json().as_bytes())
        }
    }
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// `#` preamble shared by all reports.
struct Preamble {
    lines: Vec<String>,
}

impl Preamble {
    fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self { lines: vec![format!("# edgefbg {command}"), format!("# config_sha256={}", cfg.hash())] }
    }

    fn seed(mut self, name: &str, v: u64) -> Self {
        self.lines.push(format!("# seed.{name}={v}"));
        self
    }

    fn input(mut self, name: &str, path: &Path, digest: &str) -> Self {
        self.lines.push(format!("# input.{name}={} sha256={digest}", file_name(path)));
        self
    }

    fn note(mut self, line: String) -> Self {
        self.lines.push(format!("# {line}"));
        self
    }

    fn with(self, body: &str) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s.push_str(body);
        s
    }
}

fn gen(a: &GenArgs) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(a.common.config.as_deref())?;
    let kind: ScenarioKind = a.kind.into();
    let count = match (kind, a.count) {
        (ScenarioKind::Template, _) => TEMPLATE_COUNT,
        (_, Some(n)) => n,
        (_, None) => return Err(CliError::Config("--count is required for random and trajectory data".into())),
    };
    let d = generate_dataset(kind, count, &cfg.layout, &cfg.effects, &cfg.sampler, a.seed)?;
    save_dataset(&a.out, &d)?;
    println!("wrote {} {} samples to {}", d.len(), kind.name(), a.out.display());
    Ok(())
}

fn examples(d: &Dataset) -> Result<Examples, CliError> {
    Ok(Examples::from_records(&d.records)?)
}

/// Training and validation parts: the config's split of `data`, or all of
/// `data` and all of `val`.
fn train_val(cfg: &ExperimentConfig, data: &Dataset, val: Option<&Dataset>) -> Result<(Examples, Examples), CliError> {
    match val {
        Some(v) => Ok((examples(data)?, examples(v)?)),
        None => {
            let (tr, va, _) = split_dataset(data, &cfg.split)?;
            Ok((examples(&tr)?, examples(&va)?))
        }
    }
}

fn train(a: &TrainArgs) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(a.common.config.as_deref())?;
    let (data, data_sha) = load_dataset(&a.data)?;
    let val = a.val.as_deref().map(load_dataset).transpose()?;
    let (tr, va) = train_val(&cfg, &data, val.as_ref().map(|v| &v.0))?;

    let net = Network::<f32>::new(&cfg.model, cfg.init_seed)?;
    let trace = net.shape_trace().to_vec();
    let mut trainer = Trainer::new(net, &cfg.train)?;
    trainer.run_epochs(&tr, &va, cfg.train.epochs)?;
    let optimizer = Some(trainer.optimizer().state());
    let (net, history) = trainer.finish();
    save_checkpoint(
        &a.out,
        &Checkpoint { network: net.state(), train: cfg.train.clone(), init_seed: cfg.init_seed, history: history.clone(), optimizer, trace },
    )?;

    let mut body = String::from("epoch,train_loss,val_loss,val_rmse_mm,best\n");
    for e in &history.epochs {
        let best = history.best_epoch == Some(e.epoch);
        let _ = writeln!(body, "{},{:.6},{:.6},{:.4},{}", e.epoch, e.train_loss, e.val_loss, e.val_rmse_mm, best as u8);
    }
    let mut pre = Preamble::new("train", &cfg)
        .seed("init", cfg.init_seed)
        .seed("train", cfg.train.seed)
        .input("data", &a.data, &data_sha);
    pre = match &val {
        Some((_, sha)) => pre.input("val", a.val.as_deref().unwrap(), sha),
        None => pre.seed("split", cfg.split.seed),
    };
    let pre = pre.note(format!("train_samples={} val_samples={}", tr.len(), va.len()));
    write_file(&a.report.clone().unwrap_or_else(|| with_suffix(&a.out, ".csv")), pre.with(&body).as_bytes())
}

fn tune(a: &TuneArgs) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(a.common.config.as_deref())?;
    let (data, data_sha) = load_dataset(&a.data)?;
    let val = a.val.as_deref().map(load_dataset).transpose()?;
    let (tr, va) = train_val(&cfg, &data, val.as_ref().map(|v| &v.0))?;
    let mut log = Vec::new();
    let outcome = run_search(&cfg.tuner.space, &tr, &va, &cfg.train, &cfg.tuner.budget, Some(&mut log))?;
    write_file(&a.log, &log)?;

    let mut body = String::from("trial,bracket,round,epochs,val_rmse_mm,val_loss,status\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in &outcome.records {
        let status = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        let _ = writeln!(body, "{},{},{},{},{},{},{status}", r.trial, r.bracket, r.round, r.epochs, opt(r.val_rmse_mm), opt(r.val_loss));
    }
    let best = serde_json::to_string(&outcome.best.config).map_err(|e| CliError::Config(e.to_string()))?;
    let mut pre = Preamble::new("tune", &cfg).seed("search", cfg.tuner.budget.seed).input("data", &a.data, &data_sha);
    if let Some((_, sha)) = &val {
        pre = pre.input("val", a.val.as_deref().unwrap(), sha);
    } else {
        pre = pre.seed("split", cfg.split.seed);
    }
    let pre = pre.note(format!("best_trial={} best_val_rmse_mm={}", outcome.best.trial, opt(outcome.best.val_rmse_mm))).note(format!("best_config={best}"));
    write_file(&a.report.clone().unwrap_or_else(|| with_suffix(&a.log, ".csv")), pre.with(&body).as_bytes())
}

fn select(cfg: &ExperimentConfig, d: Dataset, part: Part) -> Result<Dataset, CliError> {
    if part == Part::All {
        return Ok(d);
    }
    let (tr, va, te) = split_dataset(&d, &cfg.split)?;
    Ok(match part {
        Part::Train => tr,
        Part::Val => va,
        _ => te,
    })
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str, method: &str) -> Result<&'a Path, CliError> {
    p.as_deref().ok_or_else(|| CliError::Config(format!("method {method} needs --{flag}")))
}

fn dl_predictions(net: &Network<f32>, d: &Dataset) -> Result<Vec<MarkerShape>, CliError> {
    let inputs: Vec<f32> = d.records.iter().flat_map(|r| r.scans.iter().copied()).collect();
    let out = predict_outputs(net, &inputs)?;
    out.chunks(OUTPUT_SIZE)
        .map(|c| Ok(MarkerShape::from_flat(&c.iter().map(|&v| v as f64).collect::<Vec<_>>())?))
        .collect()
}

fn load_dictionary(path: &Path) -> Result<(edgefbg::dictionary::SpectrumDictionary, Option<NormIndex>, String), CliError> {
    let (d, sha) = load_dataset(path)?;
    let dict = build_dictionary(&d.records)?;
    let index_path = with_suffix(path, ".index.json");
    let index = if index_path.exists() {
        let (idx, _): (NormIndex, _) = load_json(&index_path)?;
        if !idx.matches(&dict) {
            return Err(CliError::Io(format!("{} does not belong to {}", index_path.display(), path.display())));
        }
        Some(idx)
    } else {
        None
    };
    Ok((dict, index, sha))
}

fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(a.common.config.as_deref())?;
    let (data, data_sha) = load_dataset(&a.dataset)?;
    let data = select(&cfg, data, a.split)?;
    if data.is_empty() {
        return Err(CliError::Config("nothing to evaluate".into()));
    }
    let layout = data.header.layout.clone();
    let truths: Vec<MarkerShape> = data.records.iter().map(|r| r.marker_shape()).collect();
    let name = a.name.clone().unwrap_or_else(|| {
        a.dataset.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
    });
    let mut pre = Preamble::new("eval", &cfg).input("dataset", &a.dataset, &data_sha);
    if a.split != Part::All {
        pre = pre.seed("split", cfg.split.seed).note(format!("part={:?}", a.split).to_lowercase());
    }
    let mut rows = Vec::new();
    for &m in &a.methods {
        let (label, preds) = match m {
            Method::Bl => {
                let p = need(&a.calibration, "calibration", "bl")?;
                let (calib, sha): (BlCalibration, _) = load_json(p)?;
                pre = pre.input("calibration", p, &sha);
                let preds = data.records.iter().map(|r| predict_record_bl(r, &calib, &layout)).collect::<Result<Vec<_>, _>>()?;
                ("bl", preds)
            }
            Method::Dl => {
                let p = need(&a.checkpoint, "checkpoint", "dl")?;
                let (ckpt, sha) = load_checkpoint(p)?;
                pre = pre.input("checkpoint", p, &sha);
                let net = Network::<f32>::from_state(&ckpt.network)?;
                ("dl", dl_predictions(&net, &data)?)
            }
            Method::Dict => {
                let p = need(&a.dictionary, "dictionary", "dict")?;
                let (dict, index, sha) = load_dictionary(p)?;
                pre = pre.input("dictionary", p, &sha);
                let preds = data
                    .records
                    .iter()
                    .map(|r| match &index {
                        Some(idx) => idx.query(&dict, &r.scans).map(|(m, _)| m.shape),
                        None => dict.query(&r.scans).map(|m| m.shape),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                ("dict", preds)
            }
        };
        let stats = ShapeErrorStats::from_pairs(&preds, &truths)?;
        rows.push(TableRow { dataset: name.clone(), method: label.into(), tip: stats.tip, rmse: stats.rmse });
    }
    write_file(&a.out, pre.with(&table_csv(&rows)).as_bytes())
}

fn explain(a: &ExplainArgs) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(a.common.config.as_deref())?;
    let (ckpt, ckpt_sha) = load_checkpoint(&a.checkpoint)?;
    let (data, data_sha) = load_dataset(&a.dataset)?;
    let r = data
        .records
        .get(a.sample_id)
        .ok_or_else(|| CliError::Config(format!("sample {} outside 0..{}", a.sample_id, data.len())))?;
    let net = Network::<f32>::from_state(&ckpt.network)?;
    let h = cfg.explain.spacing;
    let loss = loss_saliency(&net, &r.scans, &r.marker_shape(), ckpt.train.smooth_l1_beta, h)?;
    let markers = marker_saliency(&net, &r.scans, h)?;
    let layout = &data.header.layout;
    let preamble = || {
        Preamble::new("explain", &cfg)
            .seed("sample", r.seed)
            .input("checkpoint", &a.checkpoint, &ckpt_sha)
            .input("dataset", &a.dataset, &data_sha)
            .note(format!("sample_id={} spacing={h}", a.sample_id))
    };
    let c_loss = slope_contrast(&loss.deltas, layout)?;
    let c_markers = slope_contrast(&markers.totals(), layout)?;
    let stem = format!("sample_{}", a.sample_id);
    write_file(
        &a.out_dir.join(format!("{stem}_loss.csv")),
        preamble().note(format!("flank_contrast={c_loss:.6}")).with(&loss.to_csv(&layout.grid)).as_bytes(),
    )?;
    write_file(
        &a.out_dir.join(format!("{stem}_markers.csv")),
        preamble().note(format!("flank_contrast={c_markers:.6}")).with(&markers.to_csv(&layout.grid)).as_bytes(),
    )
}

fn ablate(a: &AblateArgs) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(a.common.config.as_deref())?;
    if a.spacings.is_empty() || a.spacings.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(CliError::Config("spacings must be positive".into()));
    }
    if cfg.ablation.shapes == 0 {
        return Err(CliError::Config("ablation.shapes must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.ablation.seed);
    let curves = (0..cfg.ablation.shapes)
        .map(|_| sensor_curve(&sample_random_shape(&cfg.sampler, &mut rng)?, &cfg.layout))
        .collect::<Result<Vec<_>, _>>()?;
    let spacings: Vec<f64> = a.spacings.iter().map(|s| s * 1e-3).collect();
    let rows = resolution_ablation(&curves, &spacings, cfg.layout.length)?;
    let mut body = String::from("spacing_mm,planes,n,tip_median_mm,tip_iqr_mm,tip_mean_mm\n");
    for (r, mm) in rows.iter().zip(&a.spacings) {
        let _ = writeln!(body, "{mm},{},{},{:.4},{:.4},{:.4}", r.planes, r.tip.count, r.tip.median, r.tip.iqr, r.tip.mean);
    }
    write_file(&a.out, Preamble::new("ablate", &cfg).seed("shapes", cfg.ablation.seed).with(&body).as_bytes())
}

fn calibrate_cmd(a: &CalibrateArgs) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(a.common.config.as_deref())?;
    let (data, data_sha) = load_dataset(&a.dataset)?;
    let layout = &data.header.layout;
    let n = match cfg.calibration.records {
        0 => data.len(),
        k => k.min(data.len()),
    };
    let samples = data.records[..n].iter().map(|r| CalibrationSample::from_record(r, layout)).collect::<Result<Vec<_>, _>>()?;
    let calib = calibrate(&samples, layout)?;
    save_json(&a.out, &calib)?;
    let mut body = String::from("fbg,plane,phi_rad,gain_m,i0,residual_rms\n");
    for (i, (f, d)) in calib.fbgs.iter().zip(&layout.fbgs).enumerate() {
        let _ = writeln!(body, "{i},{},{:.6},{:.6e},{:.6},{:.6e}", d.plane_index, f.phi, f.gain, f.i0, f.residual_rms);
    }
    let pre = Preamble::new("calibrate", &cfg).input("dataset", &a.dataset, &data_sha).note(format!("records={n}"));
    write_file(&a.report.clone().unwrap_or_else(|| with_suffix(&a.out, ".csv")), pre.with(&body).as_bytes())
}

fn dict(a: &DictArgs) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(a.common.config.as_deref())?;
    let (data, data_sha) = load_dataset(&a.dataset)?;
    let dictionary = build_dictionary(&data.records)?;
    let index = NormIndex::build(&dictionary);
    save_dataset(&a.out, &data)?;
    save_json(&with_suffix(&a.out, ".index.json"), &index)?;
    let body = format!("entries,fingerprint\n{},{}\n", dictionary.len(), index.fingerprint);
    let pre = Preamble::new("dict", &cfg).input("dataset", &a.dataset, &data_sha);
    write_file(&a.report.clone().unwrap_or_else(|| with_suffix(&a.out, ".csv")), pre.with(&body).as_bytes())
}
