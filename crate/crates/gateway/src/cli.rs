//! Command-line front end.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use diagnostica_circuit::{ActionKind, ModelRegistry, OscillogramOutcome, Session, SessionState, StartRequest, Vehicle};
use diagnostica_core::kpi::{self, Feature, Granularity};
use diagnostica_core::scoring::{
    self, Case, LearnConfig, LearnerConfig, PruneContext, PruneOptions, ScoreRuleBase,
};
use diagnostica_core::subgroup::ReportEntry;
use diagnostica_core::tabular::{ColumnKind, Schema};
use diagnostica_core::{discover_top_k, Dataset, MiningTask, QualityMeasure};
use diagnostica_kg::{fixtures, shared, triples, KnowledgeGraph};
use diagnostica_neural::synth::spike_dataset;
use diagnostica_neural::{
    cam, render_heatmap_report, train, z_normalize, CamMethod, FcnConfig, FcnModel, TimeSeries, TrainConfig,
    ANOMALOUS, REGULAR,
};
use serde::{Deserialize, Serialize};

use crate::series_io::parse_series;
use crate::server::{self, ServeConfig};

#[derive(Debug, Parser)]
#[command(name = "diagnostica", version, about = "Vehicle diagnosis workbench")]
pub struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Knowledge-graph triples file.
    #[arg(long, global = true, env = "DIAGNOSTICA_KG")]
    pub kg: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Top-k subgroup discovery over a CSV table.
    Discover(DiscoverArgs),
    /// Logistical balance KPIs over a bill of materials and a bookings ledger.
    #[command(subcommand)]
    Kpi(KpiCommand),
    /// Diagnostic score rule bases.
    #[command(subcommand)]
    Scores(ScoresCommand),
    /// Train a time-series classifier.
    Train(TrainArgs),
    /// Classify a series and render its class activation maps.
    Cam(CamArgs),
    /// Knowledge-graph maintenance.
    #[command(subcommand)]
    Kg(KgCommand),
    /// Line-interactive diagnosis session on stdin.
    Diagnose(DiagnoseArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MeasureArg {
    Ps,
    Binomial,
    Gain,
    Chi2,
    Mean,
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Column kinds as `name=kind,...`; unlisted columns are nominal.
    #[arg(long)]
    pub schema: Option<String>,
    /// Shorthand for `--schema <col>=target` (or `numeric-target` with `--measure mean`).
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_enum, default_value = "ps")]
    pub measure: MeasureArg,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 3)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 1)]
    pub min_size: usize,
}

#[derive(Debug, Subcommand)]
pub enum KpiCommand {
    /// Per-material balances and the feature table for mining.
    Compute(KpiArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GranularityArg {
    Material,
    BookingGroup,
}

#[derive(Debug, Args)]
pub struct KpiArgs {
    #[arg(long)]
    pub structure: PathBuf,
    #[arg(long)]
    pub bookings: PathBuf,
    /// Feature table CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "material")]
    pub granularity: GranularityArg,
}

#[derive(Debug, Subcommand)]
pub enum ScoresCommand {
    /// Learn a rule base from labelled cases.
    Learn(LearnArgs),
    /// Remove rules using background knowledge.
    Prune(PruneArgs),
    /// Perceptron refinement on misclassified cases.
    Refine(RefineArgs),
    /// Cross-validated evaluation of a learner configuration.
    Eval(EvalArgs),
    /// Score the findings of each case.
    Infer(InferArgs),
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    /// JSON-lines cases.
    #[arg(long)]
    pub cases: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Rule base JSON; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Background knowledge JSON `{abnormal, attribute_class, diagnosis_class}`.
    #[arg(long)]
    pub context: Option<PathBuf>,
    /// Take abnormality flags from these cases.
    #[arg(long)]
    pub cases: Option<PathBuf>,
    #[arg(long)]
    pub abnormality: bool,
    #[arg(long)]
    pub partition: bool,
    #[arg(long)]
    pub heuristic: bool,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long)]
    pub cases: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub max_epochs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub cases: PathBuf,
    /// Learner configuration JSON; defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long)]
    pub cases: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ArchArg {
    Tiny,
    Standard,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON lines `{label, values}` with label `anomalous`/`regular` or 0/1.
    #[arg(long, conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// Train on this many generated flat/spike series instead.
    #[arg(long)]
    pub synthetic: Option<usize>,
    #[arg(long, default_value_t = 128)]
    pub length: usize,
    #[arg(long, value_enum, default_value = "tiny")]
    pub arch: ArchArg,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CamArg {
    GradCam,
    HiresCam,
    Both,
}

#[derive(Debug, Args)]
pub struct CamArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV column or JSON array.
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub method: CamArg,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum KgCommand {
    /// Replace the graph at `--kg` with the triples from a file.
    Import {
        file: PathBuf,
    },
    /// Write the graph at `--kg` as triples.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Create the graph at `--kg`, optionally with the causal example.
    Init {
        #[arg(long)]
        fixture: bool,
    },
    Stats,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long, default_value = "vehicle")]
    pub vehicle: String,
    #[arg(long)]
    pub vin: String,
    #[arg(long = "dtc")]
    pub dtcs: Vec<String>,
    #[arg(long = "symptom")]
    pub symptoms: Vec<String>,
    /// `component=model.json`, repeatable.
    #[arg(long = "model")]
    pub models: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// `component=model.json`, repeatable.
    #[arg(long = "model")]
    pub models: Vec<String>,
    #[arg(long, default_value = "grad-cam")]
    pub cam_method: CamMethod,
    /// Seed an empty graph with the causal example.
    #[arg(long)]
    pub fixture: bool,
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let out = Output { json: cli.json };
    match cli.command {
        Command::Discover(a) => discover(&out, a),
        Command::Kpi(KpiCommand::Compute(a)) => kpi_compute(&out, a),
        Command::Scores(c) => scores(&out, c),
        Command::Train(a) => train_model(&out, a),
        Command::Cam(a) => render_cam(&out, a),
        Command::Kg(c) => kg_command(&out, cli.kg, c),
        Command::Diagnose(a) => diagnose(cli.kg, a, io::stdin().lock(), io::stdout().lock()),
        Command::Serve(a) => {
            let config = ServeConfig {
                bind: a.bind,
                kg_path: cli.kg,
                models: parse_models(&a.models)?,
                cam_method: a.cam_method,
                fixture: a.fixture,
            };
            tokio::runtime::Runtime::new()?.block_on(server::serve(config))
        }
    }
}

struct Output {
    json: bool,
}

impl Output {
    /// JSON with `--json`, otherwise the human rendering.
    fn emit<T: Serialize>(&self, value: &T, human: impl FnOnce() -> String) -> Result<()> {
        let mut stdout = io::stdout().lock();
        if self.json {
            serde_json::to_writer_pretty(&mut stdout, value)?;
            writeln!(stdout)?;
        } else {
            write!(stdout, "{}", human())?;
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("malformed JSON in {}", path.display()))
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
            w.flush()?;
        }
        None => {
            let mut stdout = io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, value)?;
            writeln!(stdout)?;
        }
    }
    Ok(())
}

fn read_cases(path: &Path) -> Result<Vec<Case>> {
    scoring::read_cases(open(path)?).with_context(|| format!("cannot read cases from {}", path.display()))
}

fn parse_models(specs: &[String]) -> Result<Vec<(String, PathBuf)>> {
    specs
        .iter()
        .map(|s| {
            let (c, p) = s.split_once('=').ok_or_else(|| anyhow!("expected component=path, got {s:?}"))?;
            Ok((c.trim().to_string(), PathBuf::from(p.trim())))
        })
        .collect()
}

fn discover(out: &Output, a: DiscoverArgs) -> Result<()> {
    let measure = match a.measure {
        MeasureArg::Ps => QualityMeasure::PiatetskyShapiro,
        MeasureArg::Binomial => QualityMeasure::Binomial,
        MeasureArg::Gain => QualityMeasure::Gain { min_size: a.min_size.max(1) },
        MeasureArg::Chi2 => QualityMeasure::ChiSquare,
        MeasureArg::Mean => QualityMeasure::MeanShift,
    };
    let mut schema = match &a.schema {
        Some(s) => Schema::parse(s)?,
        None => Schema::new(),
    };
    if let Some(t) = &a.target {
        let kind = if measure.uses_numeric_target() { ColumnKind::NumericTarget } else { ColumnKind::Target };
        schema = schema.with(t.clone(), kind);
    }
    let data = Dataset::load_csv(open(&a.data)?, &schema)?;
    let task = MiningTask::new(measure, a.k, a.max_depth).with_min_size(a.min_size);
    let ranked = discover_top_k(&data, &task)?;
    let report: Vec<ReportEntry> = ranked.iter().map(ReportEntry::from).collect();
    out.emit(&report, || {
        let mut s = String::new();
        for (i, r) in ranked.iter().enumerate() {
            let p = r.p_value.map(|p| format!("  p={p:.3e}")).unwrap_or_default();
            s += &format!("{:>3}  q={:<12.6} n={:<6} {}{p}\n", i + 1, r.quality, r.stats.size, r.pattern);
        }
        s
    })
}

#[derive(Serialize)]
struct KpiSummary {
    materials: usize,
    rows: usize,
    out: PathBuf,
    balances: Vec<kpi::KpiValue>,
}

fn kpi_compute(out: &Output, a: KpiArgs) -> Result<()> {
    let (structure, accounting) = kpi::load_graphs(open(&a.structure)?, open(&a.bookings)?)?;
    let balances = kpi::compute_all(&structure, &accounting);
    let granularity = match a.granularity {
        GranularityArg::Material => Granularity::Material,
        GranularityArg::BookingGroup => Granularity::BookingGroup,
    };
    let table = kpi::kpi_feature_table(&structure, &accounting, &Feature::ALL, granularity)?;
    let mut w = create(&a.out)?;
    table.write_csv(&mut w)?;
    w.flush()?;
    let summary = KpiSummary { materials: balances.len(), rows: table.len(), out: a.out, balances };
    out.emit(&summary, || {
        let unbalanced = summary.balances.iter().filter(|k| k.balance.abs() > 1e-9).count();
        format!(
            "{} materials, {unbalanced} unbalanced; {} rows written to {} (target column {})\n",
            summary.materials,
            summary.rows,
            summary.out.display(),
            kpi::TARGET
        )
    })
}

fn rule_summary(rb: &ScoreRuleBase) -> String {
    let mut s = String::new();
    for r in rb.rules() {
        s += &format!("{}={} -> {} {}\n", r.attribute, r.value, r.diagnosis, r.category);
    }
    s += &format!("{} rules over {} diagnoses\n", rb.len(), rb.diagnoses().len());
    s
}

fn save_rules(out: &Output, path: Option<&Path>, rb: &ScoreRuleBase) -> Result<()> {
    match path {
        Some(p) => {
            write_json(Some(p), rb)?;
            out.emit(&serde_json::json!({"rules": rb.len(), "out": p}), || {
                format!("{} rules written to {}\n", rb.len(), p.display())
            })
        }
        None if out.json => write_json(None, rb),
        None => out.emit(rb, || rule_summary(rb)),
    }
}

#[derive(Serialize)]
struct CaseInference {
    case: usize,
    labelled: Vec<String>,
    established: Vec<String>,
    scores: std::collections::BTreeMap<String, scoring::Inference>,
}

fn scores(out: &Output, command: ScoresCommand) -> Result<()> {
    match command {
        ScoresCommand::Learn(a) => {
            let cases = read_cases(&a.cases)?;
            let config = LearnConfig { tau: a.tau, alpha: a.alpha, ..LearnConfig::default() };
            let rb = scoring::learn_scores(&cases, &config)?;
            save_rules(out, a.out.as_deref(), &rb)
        }
        ScoresCommand::Prune(a) => {
            let rb: ScoreRuleBase = read_json(&a.rules)?;
            let mut ctx: PruneContext = match &a.context {
                Some(p) => read_json(p)?,
                None => PruneContext::default(),
            };
            if let Some(p) = &a.cases {
                ctx.abnormal.extend(PruneContext::from_cases(&read_cases(p)?).abnormal);
            }
            let options = PruneOptions { abnormality: a.abnormality, partition: a.partition, heuristic: a.heuristic };
            let pruned = scoring::prune(&rb, options, &ctx);
            eprintln!("pruned {} of {} rules", rb.len() - pruned.len(), rb.len());
            save_rules(out, a.out.as_deref(), &pruned)
        }
        ScoresCommand::Refine(a) => {
            let rb: ScoreRuleBase = read_json(&a.rules)?;
            let cases = read_cases(&a.cases)?;
            let (refined, epochs) = scoring::refine_perceptron(&rb, &cases, a.max_epochs);
            eprintln!("refinement stopped after {epochs} epochs");
            save_rules(out, a.out.as_deref(), &refined)
        }
        ScoresCommand::Eval(a) => {
            let cases = read_cases(&a.cases)?;
            let config: LearnerConfig = match &a.config {
                Some(p) => read_json(p)?,
                None => LearnerConfig::default(),
            };
            let m = scoring::evaluate(&config, &cases, a.folds)?;
            out.emit(&m, || {
                format!(
                    "accuracy {:.4}\nrules per diagnosis {:.2} ± {:.2}\nfindings used {:.2}\ncategories per diagnosis {:.2}\n",
                    m.accuracy, m.avg_rules, m.avg_rules_stddev, m.avg_findings_used, m.avg_categories_per_diagnosis
                )
            })
        }
        ScoresCommand::Infer(a) => {
            let rb: ScoreRuleBase = read_json(&a.rules)?;
            let cases = read_cases(&a.cases)?;
            let results: Vec<CaseInference> = cases
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let scores = scoring::infer(&rb, &c.findings);
                    let established = scores
                        .iter()
                        .filter(|(_, inf)| inf.status == scoring::Status::Established)
                        .map(|(d, _)| d.clone())
                        .collect();
                    CaseInference { case: i, labelled: c.diagnoses.iter().cloned().collect(), established, scores }
                })
                .collect();
            out.emit(&results, || {
                results
                    .iter()
                    .map(|r| format!("case {}: established {:?}, labelled {:?}\n", r.case, r.established, r.labelled))
                    .collect()
            })
        }
    }
}

#[derive(Deserialize)]
struct LabelledSeries {
    label: serde_json::Value,
    values: Vec<f64>,
}

fn label(v: &serde_json::Value) -> Result<usize> {
    match v {
        serde_json::Value::String(s) if s == "anomalous" => Ok(ANOMALOUS),
        serde_json::Value::String(s) if s == "regular" => Ok(REGULAR),
        serde_json::Value::Number(n) if n.as_u64() == Some(ANOMALOUS as u64) => Ok(ANOMALOUS),
        serde_json::Value::Number(n) if n.as_u64() == Some(REGULAR as u64) => Ok(REGULAR),
        other => bail!("label must be \"anomalous\", \"regular\", {ANOMALOUS} or {REGULAR}, got {other}"),
    }
}

fn train_model(out: &Output, a: TrainArgs) -> Result<()> {
    let data = match (&a.data, a.synthetic) {
        (Some(path), _) => {
            let mut data = Vec::new();
            for (i, line) in open(path)?.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let r: LabelledSeries = serde_json::from_str(&line).with_context(|| format!("line {}", i + 1))?;
                let values = if r.values.len() == a.length {
                    r.values
                } else {
                    diagnostica_neural::interpolate(&r.values, a.length)
                };
                let v = z_normalize(&TimeSeries::new(values)).with_context(|| format!("line {}", i + 1))?;
                data.push((v, label(&r.label)?));
            }
            data
        }
        (None, Some(n)) => spike_dataset(a.seed, n, a.length, (a.length / 16).max(1))
            .into_iter()
            .map(|s| (s.series, s.label))
            .collect(),
        (None, None) => bail!("either --data or --synthetic is required"),
    };
    let arch = match a.arch {
        ArchArg::Tiny => FcnConfig::tiny(a.length),
        ArchArg::Standard => FcnConfig::standard(a.length),
    };
    let config = TrainConfig { epochs: a.epochs, seed: a.seed, ..TrainConfig::default() };
    let (model, report) = train(arch, &config, &data)?;
    model.save(&a.out)?;
    out.emit(&report, || {
        format!(
            "{} parameters, final loss {:.4}, training accuracy {:.3}; saved to {}\n",
            report.parameter_count,
            report.losses.last().copied().unwrap_or(f64::NAN),
            report.train_accuracy,
            a.out.display()
        )
    })
}

#[derive(Serialize)]
struct CamSummary {
    best_guess: &'static str,
    uncertainty: f64,
    probabilities: Vec<f64>,
    heatmaps: Vec<diagnostica_neural::Heatmap>,
}

fn render_cam(out: &Output, a: CamArgs) -> Result<()> {
    let model = FcnModel::load(&a.model).with_context(|| format!("cannot load model {}", a.model.display()))?;
    let text = std::fs::read_to_string(&a.series).with_context(|| format!("cannot read {}", a.series.display()))?;
    let raw = parse_series(&text)?;
    let n = model.config().input_length;
    let mut v = z_normalize(&TimeSeries::new(raw.clone()))?;
    if v.len() != n {
        v = z_normalize(&TimeSeries::new(diagnostica_neural::interpolate(&v.values, n)))?;
    }
    let prediction = model.predict(&v)?;
    let methods = match a.method {
        CamArg::GradCam => vec![CamMethod::GradCam],
        CamArg::HiresCam => vec![CamMethod::HiResCam],
        CamArg::Both => CamMethod::ALL.to_vec(),
    };
    let mut heatmaps = Vec::new();
    for m in methods {
        let mut h = cam(&model, &v, None, m)?;
        if h.values.len() != raw.len() {
            h.values = diagnostica_neural::interpolate(&h.values, raw.len());
        }
        heatmaps.push(h);
    }
    if a.svg.is_some() || a.csv.is_some() {
        let report = render_heatmap_report(&raw, &heatmaps)?;
        if let Some(p) = &a.svg {
            std::fs::write(p, &report.svg).with_context(|| format!("cannot write {}", p.display()))?;
        }
        if let Some(p) = &a.csv {
            std::fs::write(p, &report.csv).with_context(|| format!("cannot write {}", p.display()))?;
        }
    }
    let summary = CamSummary {
        best_guess: if prediction.is_anomalous() { "anomalous" } else { "regular" },
        uncertainty: prediction.uncertainty,
        probabilities: prediction.probabilities.to_vec(),
        heatmaps,
    };
    out.emit(&summary, || {
        let mut s = format!("{} (uncertainty {:.3})\n", summary.best_guess, summary.uncertainty);
        for h in &summary.heatmaps {
            s += &format!("{}: peak at sample {}\n", h.method, h.argmax());
        }
        s
    })
}

fn kg_path(kg: Option<PathBuf>) -> Result<PathBuf> {
    kg.ok_or_else(|| anyhow!("no knowledge graph; pass --kg or set DIAGNOSTICA_KG"))
}

fn load_kg(path: &Path) -> Result<KnowledgeGraph> {
    if path.exists() {
        triples::load(path).with_context(|| format!("cannot load knowledge graph {}", path.display()))
    } else {
        Ok(KnowledgeGraph::new())
    }
}

fn kg_command(out: &Output, kg: Option<PathBuf>, command: KgCommand) -> Result<()> {
    let path = kg_path(kg)?;
    let graph = match command {
        KgCommand::Import { file } => {
            let g = triples::load(&file).with_context(|| format!("cannot import {}", file.display()))?;
            triples::save(&g, &path)?;
            g
        }
        KgCommand::Export { out: target } => {
            let g = load_kg(&path)?;
            let text = triples::export_triples(&g);
            match target {
                Some(t) => std::fs::write(&t, text).with_context(|| format!("cannot write {}", t.display()))?,
                None => {
                    io::stdout().lock().write_all(text.as_bytes())?;
                    return Ok(());
                }
            }
            g
        }
        KgCommand::Init { fixture } => {
            let g = if fixture { fixtures::causal_graph() } else { KnowledgeGraph::new() };
            triples::save(&g, &path)?;
            g
        }
        KgCommand::Stats => load_kg(&path)?,
    };
    let stats = graph.stats();
    out.emit(&stats, || {
        let mut s = format!("{} entities, {} relations\n", stats.entities, stats.relations);
        for (concept, n) in &stats.by_concept {
            s += &format!("  {concept}: {n}\n");
        }
        s
    })
}

/// Runs a session over text commands:
/// `osc <component> <file>`, `manual <component> yes|no`, `sensor yes|no`,
/// `status`, `quit`.
pub fn diagnose(kg: Option<PathBuf>, a: DiagnoseArgs, input: impl BufRead, mut output: impl Write) -> Result<()> {
    let graph = match &kg {
        Some(p) => load_kg(p)?,
        None => KnowledgeGraph::new(),
    };
    let graph = shared(graph);
    let mut registry = ModelRegistry::new();
    for (component, path) in parse_models(&a.models)? {
        registry.register_file(&component, &path, CamMethod::GradCam)?;
    }
    let request = StartRequest {
        vehicle: Vehicle { name: a.vehicle, vin: a.vin },
        dtcs: a.dtcs,
        symptoms: a.symptoms,
    };
    let mut session = Session::start(graph.clone(), Arc::new(registry), request)?;
    let mut lines = input.lines();
    loop {
        let actions = session.advance()?;
        if matches!(session.state(), SessionState::Report | SessionState::NoDiagnosis) {
            break;
        }
        writeln!(output, "[{}]", session.state())?;
        for action in &actions {
            writeln!(output, "  - {}", action.instruction)?;
        }
        write!(output, "> ")?;
        output.flush()?;
        let Some(line) = lines.next() else {
            writeln!(output)?;
            bail!("input ended in state {}", session.state());
        };
        let line = line?;
        let words: Vec<&str> = line.split_whitespace().collect();
        let result = match words.as_slice() {
            [] => continue,
            ["quit"] => bail!("aborted in state {}", session.state()),
            ["status"] => {
                writeln!(output, "{}", serde_json::to_string_pretty(&session.view())?)?;
                continue;
            }
            ["osc", component, file] => std::fs::read_to_string(file)
                .map_err(anyhow::Error::from)
                .and_then(|text| parse_series(&text))
                .and_then(|values| Ok(session.submit_oscillogram(component, values)?))
                .map(|o| match o {
                    OscillogramOutcome::Classified { record, .. } => {
                        format!("{component}: {}", verdict(record.anomalous))
                    }
                    OscillogramOutcome::ConvertedToManual { notice } => notice,
                }),
            ["manual", component, answer] => yes_no(answer)
                .and_then(|anomalous| Ok(session.submit_manual_result(component, anomalous)?))
                .map(|r| format!("{component}: {}", verdict(r.anomalous))),
            ["sensor", answer] => yes_no(answer)
                .and_then(|defective| Ok(session.confirm_sensor_hypothesis(defective)?))
                .map(|s| format!("now {s}")),
            _ => Err(anyhow!("unknown command; expected osc, manual, sensor, status or quit")),
        };
        match result {
            Ok(msg) => writeln!(output, "{msg}")?,
            Err(e) => writeln!(output, "error: {e:#}")?,
        }
        if actions.iter().all(|x| x.kind != ActionKind::ConfirmSensorHypothesis) && session.state().is_terminal() {
            break;
        }
    }
    let report = session.finalize()?;
    writeln!(output, "{}", serde_json::to_string_pretty(&report)?)?;
    if let Some(p) = &kg {
        triples::save(&graph.read(), p)?;
    }
    Ok(())
}

fn verdict(anomalous: bool) -> &'static str {
    if anomalous {
        "anomalous"
    } else {
        "regular"
    }
}

fn yes_no(answer: &str) -> Result<bool> {
    match answer {
        "yes" | "y" | "anomalous" | "defective" | "1" | "true" => Ok(true),
        "no" | "n" | "regular" | "ok" | "0" | "false" => Ok(false),
        other => bail!("expected yes or no, got {other:?}"),
    }
}
