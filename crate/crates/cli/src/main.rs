use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use multiscan::calibrate::{
    bonferroni_calibration, calibrate, CalibrationKind, CalibrationTable, CriticalValueVector, Lookup, Model,
    TableKey, DEFAULT_REPS,
};
use multiscan::densmodel::{simulate_alternative_stream, simulate_uniform_stream, DensityAlternative};
use multiscan::io::{grid_to_csv, parse_grid, parse_points, parse_sequence, points_to_csv, sequence_to_csv, write_atomic};
use multiscan::powerlab::{boundary_mu, rows_to_csv, CompareRow, PowerLab, PowerPoint, TABLE_SCHEMA_VERSION};
use multiscan::scanner::{fast_scan, fast_scan_2d, fast_scan_density, GridData, ScanReport};
use multiscan::seqmodel::{inject_signal, simulate_null, SignalSpec};
use multiscan::sparsegrid::{build_collection_1d, build_collection_2d, RectCollection, SparseCollection, WindowFamily};

const EXIT_REJECTED: u8 = 2;

/// Multiscale scan statistics with size-dependent critical values.
#[derive(Debug, Parser)]
#[command(name = "multiscan", version)]
struct Cli {
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build (or load) a calibration and print its thresholds.
    Calibrate(CalibrateArgs),
    /// Scan a data file; exit 0 without rejection, 2 with rejection.
    Scan(ScanArgs),
    /// Power of one calibration against centered signals.
    Power(PowerArgs),
    /// Power and realized exponents for several calibrations on shared noise.
    Compare(CompareArgs),
    /// Write the sparse window collection as CSV.
    Collection(CollectionArgs),
    /// Write a seeded synthetic data set.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Gaussian,
    Density,
    Grid2d,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Gaussian => Model::Gaussian,
            ModelArg::Density => Model::Density,
            ModelArg::Grid2d => Model::Grid2d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn parse_kind(s: &str) -> Result<CalibrationKind, String> {
    s.parse::<CalibrationKind>().map_err(|e| e.to_string())
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("alpha must lie in (0, 1), got {a}"))
    }
}

fn parse_aspect(s: &str) -> Result<f64, String> {
    let m: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if m > 1.0 && m.is_finite() {
        Ok(m)
    } else {
        Err(format!("aspect base must exceed 1, got {m}"))
    }
}

#[derive(Debug, Args)]
struct Shape {
    /// Sequence length or sample size.
    #[arg(long)]
    n: Option<usize>,
    /// Grid rows (grid2d).
    #[arg(long)]
    n1: Option<usize>,
    /// Grid columns (grid2d).
    #[arg(long)]
    n2: Option<usize>,
    /// Aspect-ratio base for grid rectangles.
    #[arg(long, default_value_t = 2.0, value_parser = parse_aspect)]
    aspect: f64,
}

#[derive(Debug, Args)]
struct CalibrationOpts {
    #[arg(long, value_enum, default_value = "gaussian")]
    model: ModelArg,
    /// traditional, ds, sac, blocked or bonferroni.
    #[arg(long, value_parser = parse_kind)]
    kind: CalibrationKind,
    #[arg(long, value_parser = parse_alpha)]
    alpha: f64,
    /// Null replicates for simulated calibrations.
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
    /// Calibration table directory.
    #[arg(long, env = "MULTISCAN_TABLE_DIR", default_value = ".multiscan/tables")]
    table_dir: PathBuf,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    cal: CalibrationOpts,
    #[command(flatten)]
    shape: Shape,
    /// Seed of the null simulation.
    #[arg(long)]
    seed: u64,
    /// Also write the critical-value vector as JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScanArgs {
    #[command(flatten)]
    cal: CalibrationOpts,
    #[command(flatten)]
    shape: Shape,
    /// Seed of the calibration to use.
    #[arg(long)]
    seed: u64,
    /// Data file: one value per line (gaussian, density) or a CSV matrix (grid2d).
    #[arg(long)]
    input: PathBuf,
    /// Report path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Build the calibration if the table does not have it.
    #[arg(long)]
    auto_calibrate: bool,
}

#[derive(Debug, Args)]
struct StudyOpts {
    #[arg(long)]
    n: usize,
    #[arg(long, value_parser = parse_alpha)]
    alpha: f64,
    /// Replicates per power estimate.
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    /// Seed of the signal-plus-noise streams.
    #[arg(long)]
    seed: u64,
    /// Replicates of the null calibration.
    #[arg(long, default_value_t = DEFAULT_REPS)]
    cal_reps: usize,
    /// Calibration seed; derived from --seed when omitted.
    #[arg(long)]
    cal_seed: Option<u64>,
    #[arg(long, env = "MULTISCAN_TABLE_DIR", default_value = ".multiscan/tables")]
    table_dir: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

impl StudyOpts {
    fn cal_seed(&self) -> u64 {
        self.cal_seed.unwrap_or(self.seed ^ 0x9E37_79B9_7F4A_7C15)
    }

    fn lab(&self, kinds: &[CalibrationKind]) -> Result<PowerLab> {
        let table = CalibrationTable::open(&self.table_dir)?;
        Ok(PowerLab::calibrated_with_table(self.n, kinds, self.alpha, self.cal_reps, self.cal_seed(), &table)?)
    }
}

#[derive(Debug, Args)]
struct PowerArgs {
    #[command(flatten)]
    study: StudyOpts,
    #[arg(long, value_parser = parse_kind)]
    kind: CalibrationKind,
    /// Signal width.
    #[arg(long)]
    w: usize,
    /// Comma-separated amplitudes; defaults to the detection boundary at --eps.
    #[arg(long, value_delimiter = ',')]
    mu: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    study: StudyOpts,
    /// Comma-separated calibration kinds.
    #[arg(long, value_delimiter = ',', value_parser = parse_kind, default_value = "traditional,ds,sac,blocked,bonferroni")]
    kinds: Vec<CalibrationKind>,
    /// Comma-separated signal widths.
    #[arg(long, value_delimiter = ',', required = true)]
    w_list: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
}

#[derive(Debug, Args)]
struct CollectionArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    model: ModelArg,
    #[command(flatten)]
    shape: Shape,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    model: ModelArg,
    #[command(flatten)]
    shape: Shape,
    #[arg(long)]
    seed: u64,
    /// Signal amplitude (gaussian, grid2d).
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    /// Signal width, centered (gaussian), or side of a centered square (grid2d).
    #[arg(long)]
    w: Option<usize>,
    /// Density elevation factor on [lo, hi) (density).
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long, default_value_t = 0.45)]
    lo: f64,
    #[arg(long, default_value_t = 0.55)]
    hi: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

enum Family {
    Intervals(SparseCollection),
    Rects(RectCollection),
}

impl Family {
    fn build(model: Model, n: usize, dims: (usize, usize), aspect: f64) -> Result<Self> {
        Ok(match model {
            Model::Gaussian => Family::Intervals(build_collection_1d(n)?),
            Model::Density => {
                if n < 2 {
                    bail!("density model needs at least 2 points");
                }
                Family::Intervals(build_collection_1d(n)?.without_singletons())
            }
            Model::Grid2d => Family::Rects(build_collection_2d(dims.0, dims.1, aspect)?),
        })
    }

    fn as_dyn(&self) -> &dyn WindowFamily {
        match self {
            Family::Intervals(c) => c,
            Family::Rects(r) => r,
        }
    }

    fn calibrate(&self, model: Model, kind: CalibrationKind, alpha: f64, reps: usize, seed: u64) -> Result<CriticalValueVector> {
        Ok(match self {
            Family::Intervals(c) => calibrate(model, c, kind, alpha, reps, seed)?,
            Family::Rects(r) => calibrate(model, r, kind, alpha, reps, seed)?,
        })
    }
}

fn resolve_dims(model: Model, shape: &Shape) -> Result<(usize, (usize, usize))> {
    if model == Model::Grid2d {
        let (Some(n1), Some(n2)) = (shape.n1, shape.n2) else {
            bail!("grid2d needs --n1 and --n2");
        };
        Ok((n1 * n2, (n1, n2)))
    } else {
        let Some(n) = shape.n else { bail!("--n is required for the {model} model") };
        Ok((n, (n, 1)))
    }
}

fn table_key(family: &Family, model: Model, kind: CalibrationKind, alpha: f64, reps: usize, seed: u64) -> TableKey {
    let f = family.as_dyn();
    let simulated = kind.is_simulated();
    TableKey {
        kind,
        model,
        n: f.ambient(),
        alpha,
        reps: if simulated { reps } else { 0 },
        seed: if simulated { seed } else { 0 },
        collection_hash: f.fingerprint().to_string(),
    }
}

fn describe(lookup: &Lookup) -> String {
    match lookup {
        Lookup::Hit => "cache hit".into(),
        Lookup::Built => "built and stored".into(),
        Lookup::Rebuilt(why) => format!("rebuilt ({why})"),
        Lookup::Unsaved(why) => format!("built but not stored ({why})"),
    }
}

fn emit(output: Option<&Path>, contents: &str) -> Result<()> {
    match output {
        Some(path) => write_atomic(path, contents.as_bytes()).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn summarize(family: &Family, cv: &CriticalValueVector) -> String {
    let f = family.as_dyn();
    let mut out = String::new();
    let _ = writeln!(out, "block,min_size,max_size,members,min_threshold,max_threshold");
    for (b, range) in f.blocks() {
        let sizes = range.clone().map(|i| f.size(i));
        let (lo, hi) = sizes.fold((usize::MAX, 0), |(lo, hi), s| (lo.min(s), hi.max(s)));
        let t = &cv.thresholds[range.clone()];
        let tmin = t.iter().copied().fold(f64::INFINITY, f64::min);
        let tmax = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(out, "{b},{lo},{hi},{},{tmin},{tmax}", range.len());
    }
    out
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<ExitCode> {
    let model = Model::from(args.cal.model);
    let (n, dims) = resolve_dims(model, &args.shape)?;
    let family = Family::build(model, n, dims, args.shape.aspect)?;
    let (kind, alpha, reps) = (args.cal.kind, args.cal.alpha, args.cal.reps);
    let table = CalibrationTable::open(&args.cal.table_dir)?;
    let key = table_key(&family, model, kind, alpha, reps, args.seed);
    let (cv, lookup) = table.get_or_build(&key, || family.calibrate(model, kind, alpha, reps, args.seed).map_err(into_lib))?;
    eprintln!("{kind} calibration for {model} n={n}: {} ({})", describe(&lookup), table.path_for(&key).display());
    if let Some(offset) = cv.offset {
        eprintln!("offset {offset}");
    }
    if let Some(level) = cv.tuned_level {
        eprintln!("tuned harmonic scale {level}");
    }
    print!("{}", summarize(&family, &cv));
    if let Some(path) = &args.output {
        emit(Some(path), &serde_json::to_string_pretty(&cv)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn into_lib(e: anyhow::Error) -> multiscan::Error {
    match e.downcast::<multiscan::Error>() {
        Ok(e) => e,
        Err(e) => multiscan::Error::CalibrationFailure(e.to_string()),
    }
}

fn cmd_scan(args: ScanArgs) -> Result<ExitCode> {
    let model = Model::from(args.cal.model);
    let text = std::fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let input = args.input.display();
    enum Data {
        Seq(multiscan::seqmodel::Sequence),
        Points(multiscan::densmodel::PointSample),
        Grid(GridData),
    }
    let data = match model {
        Model::Gaussian => Data::Seq(parse_sequence(&text).with_context(|| format!("parsing {input}"))?),
        Model::Density => Data::Points(parse_points(&text).with_context(|| format!("parsing {input}"))?),
        Model::Grid2d => Data::Grid(parse_grid(&text).with_context(|| format!("parsing {input}"))?),
    };
    let (n, dims) = match &data {
        Data::Seq(s) => (s.len(), (s.len(), 1)),
        Data::Points(p) => (p.len(), (p.len(), 1)),
        Data::Grid(g) => (g.dims().0 * g.dims().1, g.dims()),
    };
    if let Some(expected) = args.shape.n {
        if model != Model::Grid2d && expected != n {
            bail!("{input} has {n} observations but --n is {expected}");
        }
    }
    for (flag, expected, got) in [("--n1", args.shape.n1, dims.0), ("--n2", args.shape.n2, dims.1)] {
        if model == Model::Grid2d && expected.is_some_and(|e| e != got) {
            bail!("{input} is a {}x{} grid but {flag} is {}", dims.0, dims.1, expected.unwrap_or(0));
        }
    }
    let family = Family::build(model, n, dims, args.shape.aspect)?;
    let (kind, alpha, reps) = (args.cal.kind, args.cal.alpha, args.cal.reps);
    let cv = if kind == CalibrationKind::Bonferroni {
        match &family {
            Family::Intervals(c) => bonferroni_calibration(c, model, alpha)?,
            Family::Rects(r) => bonferroni_calibration(r, model, alpha)?,
        }
    } else {
        let table = CalibrationTable::open(&args.cal.table_dir)?;
        let key = table_key(&family, model, kind, alpha, reps, args.seed);
        match table.get(&key) {
            Ok(Some(cv)) => cv,
            found => {
                if !args.auto_calibrate {
                    match found {
                        Err(e) => bail!("stored calibration unusable ({e}); rerun with --auto-calibrate"),
                        _ => bail!(
                            "no {kind} calibration for {model} n={n} alpha={alpha} reps={reps} seed={}; run `calibrate` or pass --auto-calibrate",
                            args.seed
                        ),
                    }
                }
                let (cv, lookup) =
                    table.get_or_build(&key, || family.calibrate(model, kind, alpha, reps, args.seed).map_err(into_lib))?;
                eprintln!("calibration {}", describe(&lookup));
                cv
            }
        }
    };
    let report: ScanReport = match (&data, &family) {
        (Data::Seq(s), Family::Intervals(c)) => fast_scan(s, c, &cv)?,
        (Data::Points(p), Family::Intervals(c)) => fast_scan_density(p, c, &cv)?,
        (Data::Grid(g), Family::Rects(r)) => fast_scan_2d(g, r, &cv)?,
        _ => unreachable!("family built from the data model"),
    };
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    emit(args.output.as_deref(), &json)?;
    eprintln!(
        "max statistic {:.4}; {} exceedances; {}",
        report.max_stat,
        report.exceedances.len(),
        if report.rejected { "rejected" } else { "not rejected" }
    );
    Ok(if report.rejected { ExitCode::from(EXIT_REJECTED) } else { ExitCode::SUCCESS })
}

fn power_csv(points: &[PowerPoint], alpha: f64) -> String {
    let mut out = String::from(
        "schema_version,kind,n,w,mu,alpha,reps,rejections,power,mc_se,seed,calibration_hash,cal_reps,cal_seed\n",
    );
    let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            TABLE_SCHEMA_VERSION,
            p.kind,
            p.n,
            p.w,
            p.mu,
            alpha,
            p.reps,
            p.rejections,
            p.power,
            p.mc_se,
            p.seed,
            p.calibration_hash,
            opt(p.cal_reps.map(|r| r as u64)),
            opt(p.cal_seed)
        );
    }
    out
}

#[derive(Serialize)]
struct JsonTable<'a, T> {
    schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    rows: &'a [T],
}

fn json_table<T: Serialize>(alpha: Option<f64>, rows: &[T]) -> Result<String> {
    let table = JsonTable { schema_version: TABLE_SCHEMA_VERSION, alpha, rows };
    Ok(serde_json::to_string_pretty(&table)? + "\n")
}

fn check_widths(n: usize, widths: &[usize]) -> Result<()> {
    if widths.is_empty() {
        bail!("no widths given");
    }
    if let Some(w) = widths.iter().find(|&&w| w == 0 || w > n) {
        bail!("width {w} outside [1, {n}]");
    }
    Ok(())
}

fn cmd_power(args: PowerArgs) -> Result<ExitCode> {
    let s = &args.study;
    check_widths(s.n, &[args.w])?;
    let lab = s.lab(&[args.kind])?;
    let mus = if args.mu.is_empty() { vec![boundary_mu(s.n, args.w, args.eps)] } else { args.mu.clone() };
    if let Some(mu) = mus.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
        bail!("amplitude {mu} must be finite and non-negative");
    }
    let points = mus
        .iter()
        .map(|&mu| lab.estimate_power(args.kind, args.w, mu, s.reps, s.seed))
        .collect::<multiscan::Result<Vec<_>>>()?;
    let text = match s.format {
        Format::Csv => power_csv(&points, s.alpha),
        Format::Json => json_table(Some(s.alpha), &points)?,
    };
    emit(s.output.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(args: CompareArgs) -> Result<ExitCode> {
    let s = &args.study;
    check_widths(s.n, &args.w_list)?;
    let mut kinds = Vec::new();
    for k in &args.kinds {
        if !kinds.contains(k) {
            kinds.push(*k);
        }
    }
    let lab = s.lab(&kinds)?;
    let rows: Vec<CompareRow> = lab.compare_table(&kinds, &args.w_list, args.eps, s.reps, s.seed)?;
    let text = match s.format {
        Format::Csv => rows_to_csv(&rows),
        Format::Json => json_table(None, &rows)?,
    };
    emit(s.output.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_collection(args: CollectionArgs) -> Result<ExitCode> {
    let model = Model::from(args.model);
    let (n, dims) = resolve_dims(model, &args.shape)?;
    let text = match Family::build(model, n, dims, args.shape.aspect)? {
        Family::Intervals(c) => c.to_csv(),
        Family::Rects(r) => r.to_csv(),
    };
    emit(args.output.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode> {
    let model = Model::from(args.model);
    let (n, dims) = resolve_dims(model, &args.shape)?;
    let text = match model {
        Model::Gaussian => {
            let seq = simulate_null(n, args.seed)?;
            match args.w {
                Some(w) => sequence_to_csv(&inject_signal(&seq, &SignalSpec::centered(args.mu, n, w)?)?),
                None if args.mu != 0.0 => bail!("--mu needs --w"),
                None => sequence_to_csv(&seq),
            }
        }
        Model::Density => {
            let alt = DensityAlternative::new(args.r, args.lo, args.hi)?;
            if args.r == 1.0 {
                points_to_csv(&simulate_uniform_stream(n, args.seed, 0)?)
            } else {
                points_to_csv(&simulate_alternative_stream(n, &alt, args.seed, 0)?)
            }
        }
        Model::Grid2d => {
            let mut values = simulate_null(n, args.seed)?.into_values();
            if let Some(w) = args.w {
                let (n1, n2) = dims;
                if w == 0 || w > n1.min(n2) {
                    bail!("square side {w} does not fit a {n1}x{n2} grid");
                }
                let (r0, c0) = ((n1 - w) / 2, (n2 - w) / 2);
                for r in r0..r0 + w {
                    for v in &mut values[r * n2 + c0..r * n2 + c0 + w] {
                        *v += args.mu;
                    }
                }
            }
            grid_to_csv(&GridData::new(dims.0, dims.1, values)?)
        }
    };
    emit(args.output.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(workers) = cli.workers {
        if workers == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(workers).build_global()?;
    }
    match cli.command {
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Power(a) => cmd_power(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Collection(a) => cmd_collection(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
