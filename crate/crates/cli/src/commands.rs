//! Batch subcommands. Each returns what main should print on stdout.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use eliminators_core::classifiers::{load_model, save_model, ErrorFunction, IntervalRuleSet, KnnMode, Metric};
use eliminators_core::datakit::{ingest_csv, load_dataset, sample_mixture, save_dataset, write_csv, IngestOptions};
use eliminators_core::metrics::TauVariance;
use eliminators_core::uncertainty::{confidence_intervals, rho_sweep, sensitivity_sweep, DEFAULT_BOUND_MULTIPLIER};
use eliminators_core::{ClassGrouping, Dataset, EliminationPolicy, Error, GaussianMixtureSpec, McConfig, TrainedModel};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::case::{analyze_case, check_features};
use crate::error::{CliError, CliResult};
use crate::manifest::ManifestBuilder;
use crate::report::{self, EvalOptions};
use crate::training::{self, scoring_view, ModelKind, TrainOptions};

#[derive(Debug, Parser)]
#[command(name = "eliminators", version, about = "Uncertainty-aware classification and class elimination")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a labelled CSV file into a dataset document.
    Ingest(IngestArgs),
    /// Sample a dataset from a Gaussian mixture spec.
    Generate(GenerateArgs),
    /// Split a dataset into train and test parts.
    Split(SplitArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Score a model: metric report, confusion CSV, rejection-curve CSV.
    Evaluate(EvaluateArgs),
    /// Test whether two models differ in tau on the same data.
    Compare(CompareArgs),
    /// Analyse one case: probabilities, verdict, sweeps, intervals.
    Case(CaseArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

/// What a successful command leaves on stdout.
#[derive(Debug)]
pub enum Output {
    Paths(Vec<PathBuf>),
    Json(String),
    Nothing,
}

fn snake<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|_| format!("unknown value `{s}`"))
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub csv: PathBuf,
    /// Name of the class column.
    #[arg(long)]
    pub label: String,
    /// Comma-separated categorical columns.
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// JSON mixture spec: means, covariance, priors, optional class_names.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub n: usize,
    /// Overrides the seed in the spec.
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the sample as CSV with a `class` column.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub test_fraction: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub kind: ModelKind,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Training log; defaults to `<out stem>.log.json`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// JSON training options; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    /// quadratic or cross-entropy
    #[arg(long, value_parser = snake::<ErrorFunction>)]
    pub error: Option<ErrorFunction>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// Class grouping for joint models, e.g. "1,2|3|4".
    #[arg(long)]
    pub groups: Option<String>,
    #[arg(long)]
    pub members: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// manhattan or euclidean
    #[arg(long, value_parser = snake::<Metric>)]
    pub metric: Option<Metric>,
    /// crisp or vote
    #[arg(long, value_parser = snake::<KnnMode>)]
    pub knn_mode: Option<KnnMode>,
    #[arg(long)]
    pub slope: Option<f64>,
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Interval rule set as JSON.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Tune rule endpoints and rho starting from this rho.
    #[arg(long)]
    pub tune_rho: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalFlags {
    /// Rejection thresholds; default 0,0.05,...,0.95.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Fixed base rate for tau; default is the largest true-class share.
    #[arg(long)]
    pub base_rate: Option<f64>,
    /// as-printed or delta-method
    #[arg(long, value_parser = snake::<TauVariance>)]
    pub tau_variance: Option<TauVariance>,
    /// Confidence above which a wrong answer counts as a high-confidence error.
    #[arg(long, default_value_t = 0.9)]
    pub high_confidence: f64,
    /// Grouping used to relabel the data for a joint model.
    #[arg(long)]
    pub groups: Option<String>,
}

impl EvalFlags {
    fn options(&self) -> EvalOptions {
        EvalOptions {
            thresholds: self.thresholds.clone().unwrap_or_else(report::default_thresholds),
            base_rate: self.base_rate,
            tau_variance: self.tau_variance.unwrap_or_default(),
            high_confidence: self.high_confidence,
        }
    }

    fn view(&self, model: &TrainedModel, data: &Dataset) -> CliResult<Dataset> {
        let grouping = self
            .groups
            .as_deref()
            .map(|g| ClassGrouping::parse(g, &data.class_names))
            .transpose()?;
        Ok(scoring_view(model, grouping.as_ref(), data)?)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub eval: EvalFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub model_a: PathBuf,
    #[arg(long)]
    pub model_b: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub eval: EvalFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct CaseArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated feature values in model order.
    #[arg(long, allow_hyphen_values = true)]
    pub features: String,
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    /// e.g. accept=0.9,retain=0.2,max=3
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long, default_value_t = 5000)]
    pub samples: usize,
    #[arg(long)]
    pub seed: u64,
    /// Writes a rho sweep over these values (needs --out-dir).
    #[arg(long, value_delimiter = ',')]
    pub rho_grid: Option<Vec<f64>>,
    /// Feature (1-based number or name) whose dispersion is swept at --rho.
    #[arg(long)]
    pub sensitivity: Option<String>,
    /// Dispersions for --sensitivity; default 11 points from 0 to half the feature range.
    #[arg(long, value_delimiter = ',')]
    pub s_grid: Option<Vec<f64>>,
    /// Also compute per-feature confidence intervals.
    #[arg(long)]
    pub intervals: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// 0 picks a free port.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Persist uploaded datasets and trained models here.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Allowed CORS origin; any origin when absent.
    #[arg(long)]
    pub cors_origin: Option<String>,
}

pub fn run(cli: Cli) -> CliResult<Output> {
    match cli.command {
        Command::Ingest(a) => ingest(&a),
        Command::Generate(a) => generate(&a),
        Command::Split(a) => split(&a),
        Command::Train(a) => train(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Compare(a) => compare(&a),
        Command::Case(a) => case(&a),
        Command::Serve(a) => crate::service::serve_blocking(&a).map(|()| Output::Nothing),
    }
}

fn config_of(args: &impl Serialize) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments serialize")
}

fn manifest_path(primary: &Path) -> PathBuf {
    let stem = primary.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    primary.with_file_name(format!("{stem}.manifest.json"))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    write_text(path, &text)
}

fn create_file(path: &Path) -> CliResult<fs::File> {
    Ok(fs::File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?)
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn read_json_file<T: DeserializeOwned>(path: &Path, what: &str) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::from(Error::Config(format!("{what} {}: {e}", path.display()))))
}

/// Records outputs, writes the manifest and returns every written path.
fn finish(mut m: ManifestBuilder, outputs: Vec<PathBuf>, manifest: PathBuf) -> CliResult<Output> {
    for p in &outputs {
        m.output(p)?;
    }
    write_json(&manifest, &m.finish())?;
    let mut paths = outputs;
    paths.push(manifest);
    Ok(Output::Paths(paths))
}

fn ingest(a: &IngestArgs) -> CliResult<Output> {
    let mut m = ManifestBuilder::new("ingest", config_of(a), None);
    m.input(&a.csv)?;
    let opts = a.categorical.iter().fold(IngestOptions::new(&a.label), |o, c| o.categorical(c));
    let ds = ingest_csv(&a.csv, &opts)?;
    save_dataset(&a.out, &ds)?;
    finish(m, vec![a.out.clone()], manifest_path(&a.out))
}

fn generate(a: &GenerateArgs) -> CliResult<Output> {
    let mut m = ManifestBuilder::new("generate", config_of(a), Some(a.seed));
    m.input(&a.spec)?;
    let spec = GaussianMixtureSpec {
        seed: a.seed,
        ..read_json_file::<GaussianMixtureSpec>(&a.spec, "mixture spec")?
    };
    let ds = sample_mixture(&spec, a.n)?;
    save_dataset(&a.out, &ds)?;
    let mut outputs = vec![a.out.clone()];
    if let Some(csv) = &a.csv {
        write_csv(&ds, "class", create_file(csv)?)?;
        outputs.push(csv.clone());
    }
    finish(m, outputs, manifest_path(&a.out))
}

fn split(a: &SplitArgs) -> CliResult<Output> {
    let mut m = ManifestBuilder::new("split", config_of(a), Some(a.seed));
    m.input(&a.data)?;
    let ds = load_dataset(&a.data)?;
    let (train, test) = ds.split(a.test_fraction, a.seed)?;
    save_dataset(&a.train_out, &train)?;
    save_dataset(&a.test_out, &test)?;
    finish(m, vec![a.train_out.clone(), a.test_out.clone()], manifest_path(&a.train_out))
}

fn train_options(a: &TrainArgs) -> CliResult<TrainOptions> {
    let mut o: TrainOptions = match &a.config {
        Some(p) => read_json_file(p, "training config")?,
        None => TrainOptions::default(),
    };
    o.train.seed = a.seed;
    macro_rules! set {
        ($($flag:ident => $($field:ident).+),* $(,)?) => {
            $(if let Some(v) = a.$flag.clone() { o.$($field).+ = v; })*
        };
    }
    set!(
        hidden => hidden,
        epochs => train.epochs,
        learning_rate => train.learning_rate,
        momentum => train.momentum,
        l2 => train.l2,
        error => train.error,
        batch_size => train.batch_size,
        validation_fraction => train.validation_fraction,
        members => members,
        k => k,
        metric => metric,
        knn_mode => knn_mode,
        ridge => ridge,
    );
    if a.patience.is_some() {
        o.train.patience = a.patience;
    }
    if a.groups.is_some() {
        o.groups = a.groups.clone();
    }
    if a.slope.is_some() {
        o.slope = a.slope;
    }
    if a.tune_rho.is_some() {
        o.tune_rho = a.tune_rho;
    }
    if let Some(p) = &a.rules {
        o.rules = Some(read_json_file::<IntervalRuleSet>(p, "rule set")?);
    }
    Ok(o)
}

fn train(a: &TrainArgs) -> CliResult<Output> {
    let opts = train_options(a)?;
    // the resolved options, not the raw flags, define the run
    let mut m = ManifestBuilder::new("train", json!({"kind": a.kind, "options": opts}), Some(a.seed));
    m.input(&a.data)?;
    for p in [&a.config, &a.rules].into_iter().flatten() {
        m.input(p)?;
    }
    let data = load_dataset(&a.data)?;
    let out = training::train(a.kind, &opts, &data)?;
    save_model(&a.out, &out.model)?;
    let log_path = a.log.clone().unwrap_or_else(|| {
        let stem = a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        a.out.with_file_name(format!("{stem}.log.json"))
    });
    write_json(&log_path, &out.log)?;
    finish(m, vec![a.out.clone(), log_path], manifest_path(&a.out))
}

fn evaluate(a: &EvaluateArgs) -> CliResult<Output> {
    let mut m = ManifestBuilder::new("evaluate", config_of(a), None);
    m.input(&a.model)?;
    m.input(&a.data)?;
    let model = load_model(&a.model)?;
    let data = a.eval.view(&model, &load_dataset(&a.data)?)?;
    let ev = report::evaluate(&model, &data, &a.eval.options())?;
    create_dir(&a.out_dir)?;
    let report_path = a.out_dir.join("report.json");
    let confusion_path = a.out_dir.join("confusion.csv");
    let rejection_path = a.out_dir.join("rejection.csv");
    write_json(&report_path, &ev)?;
    ev.confusion.write_csv(create_file(&confusion_path)?)?;
    let mut f = create_file(&rejection_path)?;
    report::write_rejection_csv(&ev.rejection_curve, &mut f)
        .and_then(|()| f.flush())
        .map_err(|e| Error::Io {
            path: rejection_path.clone(),
            source: e,
        })?;
    finish(m, vec![report_path, confusion_path, rejection_path], a.out_dir.join("manifest.json"))
}

fn compare(a: &CompareArgs) -> CliResult<Output> {
    let mut m = ManifestBuilder::new("compare", config_of(a), None);
    for p in [&a.model_a, &a.model_b, &a.data] {
        m.input(p)?;
    }
    let (ma, mb) = (load_model(&a.model_a)?, load_model(&a.model_b)?);
    let data = load_dataset(&a.data)?;
    let (va, vb) = (a.eval.view(&ma, &data)?, a.eval.view(&mb, &data)?);
    if va.class_names != vb.class_names {
        return Err(Error::ClassMismatch("the two models predict different class sets".into()).into());
    }
    let c = report::compare(&ma, &mb, &va, &a.eval.options())?;
    match &a.out {
        Some(out) => {
            write_json(out, &c)?;
            finish(m, vec![out.clone()], manifest_path(out))
        }
        None => Ok(Output::Json(serde_json::to_string_pretty(&c).expect("comparison serializes"))),
    }
}

pub fn parse_features(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.trim().parse::<f64>().map_err(|_| CliError::Usage {
                code: "malformed_features",
                message: format!("feature value `{}` in `{text}` is not a number", v.trim()),
            })
        })
        .collect()
}

/// Resolves a 1-based feature number or a feature name.
fn feature_index(model: &TrainedModel, key: &str) -> CliResult<usize> {
    if let Ok(n) = key.parse::<usize>() {
        if (1..=model.features.len()).contains(&n) {
            return Ok(n - 1);
        }
        return Err(CliError::usage(format!("feature number {n} outside 1..={}", model.features.len())));
    }
    model
        .features
        .iter()
        .position(|f| f.name == key)
        .ok_or_else(|| CliError::usage(format!("no feature named `{key}`")))
}

fn case(a: &CaseArgs) -> CliResult<Output> {
    let model = load_model(&a.model)?;
    let x = parse_features(&a.features)?;
    check_features(&model, &x)?;
    let policy = match &a.policy {
        Some(p) => EliminationPolicy::parse(p)?,
        None => EliminationPolicy::default(),
    };
    let mc = McConfig::new(a.samples, a.seed)?;
    let wants_files = a.rho_grid.is_some() || a.sensitivity.is_some() || a.intervals;
    let Some(dir) = &a.out_dir else {
        if wants_files {
            return Err(CliError::usage("--rho-grid, --sensitivity and --intervals need --out-dir"));
        }
        let analysis = analyze_case(&model, &x, a.rho, &policy, &mc)?;
        return Ok(Output::Json(serde_json::to_string_pretty(&analysis).expect("analysis serializes")));
    };
    let mut m = ManifestBuilder::new("case", config_of(a), Some(a.seed));
    m.input(&a.model)?;
    create_dir(dir)?;
    let analysis = analyze_case(&model, &x, a.rho, &policy, &mc)?;
    let mut outputs = vec![dir.join("case.json")];
    write_json(&outputs[0], &analysis)?;
    if let Some(grid) = &a.rho_grid {
        let curve = rho_sweep(&model, &x, &model.features, grid, &mc)?;
        let path = dir.join("rho_sweep.csv");
        curve.write_csv(&model.class_names, create_file(&path)?)?;
        outputs.push(path);
    }
    if let Some(key) = &a.sensitivity {
        let j = feature_index(&model, key)?;
        let grid = match &a.s_grid {
            Some(g) => g.clone(),
            None => {
                let range = model.features[j].range().ok_or_else(|| {
                    Error::Config(format!("feature `{}` is categorical and has no dispersion", model.features[j].name))
                })?;
                let range = if range > 0.0 { range } else { 1.0 };
                (0..=10).map(|i| 0.05 * range * i as f64).collect()
            }
        };
        let curve = sensitivity_sweep(&model, &x, &model.features, a.rho, j, &grid, &mc)?;
        let path = dir.join(format!("sensitivity_{}.csv", j + 1));
        curve.write_csv(&model.class_names, create_file(&path)?)?;
        outputs.push(path);
    }
    if a.intervals {
        let ci = confidence_intervals(&model, &x, &model.features, DEFAULT_BOUND_MULTIPLIER)?;
        let path = dir.join("intervals.json");
        write_json(&path, &ci)?;
        outputs.push(path);
    }
    finish(m, outputs, dir.join("manifest.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_lists() {
        assert_eq!(parse_features("1, -2.5,3e2").unwrap(), vec![1.0, -2.5, 300.0]);
        let e = parse_features("1,,2").unwrap_err();
        assert_eq!((e.code(), e.exit_code()), ("malformed_features", 2));
    }

    #[test]
    fn enum_flags() {
        assert_eq!(snake::<TauVariance>("delta-method").unwrap(), TauVariance::DeltaMethod);
        assert_eq!(snake::<ErrorFunction>("cross-entropy").unwrap(), ErrorFunction::CrossEntropy);
        assert!(snake::<Metric>("chebyshev").is_err());
    }

    #[test]
    fn manifest_names() {
        assert_eq!(manifest_path(Path::new("out/model.json")), PathBuf::from("out/model.manifest.json"));
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from([
            "eliminators", "train", "--data", "d.json", "--kind", "joint", "--seed", "4", "--out", "m.json",
            "--hidden", "5", "--groups", "1,2|3", "--error", "quadratic",
        ])
        .unwrap();
        let Command::Train(a) = cli.command else { panic!() };
        let o = train_options(&a).unwrap();
        assert_eq!((o.hidden, o.train.seed), (5, 4));
        assert_eq!(o.train.error, ErrorFunction::Quadratic);
        assert_eq!(o.groups.as_deref(), Some("1,2|3"));
    }

    #[test]
    fn seed_is_mandatory() {
        let r = Cli::try_parse_from(["eliminators", "train", "--data", "d", "--kind", "mlp", "--out", "m"]);
        assert!(r.is_err());
    }
}
