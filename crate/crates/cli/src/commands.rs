use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use vendi_core::sampler::{count_transitions, free_energy_difference, free_energy_oracle, run_vendi_sampling};
use vendi_core::scenarios::{evaluate_panel, Panel};
use vendi_core::scores::{abundance_profile, embedding_profile, kernel_profile, score_profile, subsampled_profile};
use vendi_core::{Error as CoreError, Item, Kernel, KernelMatrix, Order, ScoreReport, DEFAULT_SUPPORT_TOL};

use crate::config::SampleRunConfig;
use crate::correlate::pearson_matrix;
use crate::error::{CliError, CliResult};
use crate::matrix_file::{read_matrix, read_table, write_atomic};

#[derive(Debug, Parser)]
#[command(name = "vendi", version, about = "Similarity-based diversity scores of arbitrary order")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a collection at one or more orders
    Score(ScoreArgs),
    /// Diversity profile over a grid of orders
    Sweep(SweepArgs),
    /// Annealed Vendi-force Langevin sampling on the 2D double well
    SampleDw(SampleArgs),
    /// Shape-color benchmark tables
    Scenario(ScenarioArgs),
    /// Pearson correlations between named metric columns
    Correlate(CorrelateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputKind {
    /// One item per row, scored through `--kernel`
    Embeddings,
    /// A precomputed kernel matrix with unit diagonal
    Kernel,
    /// A probability vector (one row or one column)
    Abundance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// CSV or binary matrix file
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputKind::Embeddings)]
    pub kind: InputKind,
    /// linear | cosine | ratio1d | rbf[:GAMMA] | shape-color[:WEIGHT]
    #[arg(long, default_value = "linear")]
    pub kernel: String,
    /// Approximate with an m-dimensional basis: orthogonalized embeddings
    /// for the linear kernel, a random m-item subsample otherwise
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SUPPORT_TOL)]
    pub support_tol: f64,
    /// Seed for subsampling
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rescale embedding rows to unit norm
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Orders, comma separated; `inf` for infinity
    #[arg(long, value_delimiter = ',', default_value = "1", value_parser = parse_order)]
    pub q: Vec<Order>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated orders, `inf`, or MIN:MAX:POINTS ranges
    #[arg(long = "q-grid", value_delimiter = ',', required = true)]
    pub q_grid: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// JSON run configuration
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long, value_parser = parse_panel)]
    pub panel: Panel,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,1,2,inf", value_parser = parse_order)]
    pub q: Vec<Order>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// CSV with a header row naming the metrics
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_order(s: &str) -> Result<Order, String> {
    s.parse().map_err(|e: CoreError| e.to_string())
}

fn parse_panel(s: &str) -> Result<Panel, String> {
    s.parse().map_err(|e: CoreError| e.to_string())
}

pub fn parse_kernel(spec: &str) -> CliResult<Kernel> {
    let (name, param) = match spec.split_once(':') {
        Some((n, p)) => (n.trim(), Some(p.trim())),
        None => (spec.trim(), None),
    };
    let number = |p: &str| {
        p.parse::<f64>().map_err(|_| CliError::BadArgs(format!("cannot parse kernel parameter '{p}'")))
    };
    let kernel = match (name, param) {
        ("linear", None) => Kernel::Linear,
        ("cosine", None) => Kernel::Cosine,
        ("ratio1d", None) => Kernel::Ratio1d,
        ("rbf", None) => Kernel::rbf(1.0)?,
        ("rbf", Some(g)) => Kernel::rbf(number(g)?)?,
        ("shape-color", None) => Kernel::shape_color(0.5)?,
        ("shape-color", Some(w)) => Kernel::shape_color(number(w)?)?,
        _ => return Err(CliError::BadArgs(format!("unknown kernel '{spec}'"))),
    };
    Ok(kernel)
}

/// Expands grid tokens into sorted, de-duplicated orders.
pub fn parse_q_grid(tokens: &[String]) -> CliResult<Vec<Order>> {
    let bad = |t: &str| CliError::BadArgs(format!("invalid q-grid entry '{t}'"));
    let mut qs = Vec::new();
    for token in tokens {
        let parts: Vec<&str> = token.split(':').collect();
        match parts.as_slice() {
            [single] => qs.push(single.parse::<Order>()?),
            [lo, hi, points] => {
                let lo: f64 = lo.trim().parse().map_err(|_| bad(token))?;
                let hi: f64 = hi.trim().parse().map_err(|_| bad(token))?;
                let points: usize = points.trim().parse().map_err(|_| bad(token))?;
                if points == 0 || !(lo <= hi) {
                    return Err(bad(token));
                }
                for i in 0..points {
                    let t = if points == 1 { 0.0 } else { i as f64 / (points - 1) as f64 };
                    qs.push(Order::new(lo + t * (hi - lo))?);
                }
            }
            _ => return Err(bad(token)),
        }
    }
    if qs.is_empty() {
        return Err(CliError::BadArgs("empty q-grid".into()));
    }
    qs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    qs.dedup();
    Ok(qs)
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Score(args) => cmd_score(args, out),
        Command::Sweep(args) => cmd_sweep(args, out),
        Command::SampleDw(args) => cmd_sample_dw(args, out),
        Command::Scenario(args) => cmd_scenario(args, out),
        Command::Correlate(args) => cmd_correlate(args, out),
    }
}

fn emit(path: Option<&Path>, text: &str, out: &mut dyn Write) -> CliResult<()> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn as_vector(m: &DMatrix<f64>) -> CliResult<Vec<f64>> {
    if m.nrows() != 1 && m.ncols() != 1 {
        return Err(CliError::Malformed(format!(
            "abundances must be a single row or column, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.iter().copied().collect())
}

pub fn compute_reports(input: &InputArgs, qs: &[Order]) -> CliResult<Vec<ScoreReport>> {
    let data = read_matrix(&input.input)?;
    let tol = input.support_tol;
    if !(tol.is_finite() && (0.0..1.0).contains(&tol)) {
        return Err(CliError::BadArgs(format!("support tolerance must be in [0, 1), got {tol}")));
    }
    match input.kind {
        InputKind::Abundance => {
            if input.m.is_some() {
                return Err(CliError::BadArgs("--m does not apply to abundance input".into()));
            }
            Ok(abundance_profile(&as_vector(&data)?, qs)?)
        }
        InputKind::Kernel => {
            let k = KernelMatrix::new(data)?;
            Ok(match input.m {
                Some(m) => subsampled_profile(&k, qs, m, input.seed, tol)?,
                None => kernel_profile(&k, qs, tol)?,
            })
        }
        InputKind::Embeddings => {
            let mut e = data;
            if input.normalize {
                for mut row in e.row_iter_mut() {
                    let norm = row.norm();
                    if norm == 0.0 {
                        return Err(CoreError::ZeroVector.into());
                    }
                    row /= norm;
                }
            }
            let kernel = parse_kernel(&input.kernel)?;
            if let (Kernel::Linear, Some(m)) = (&kernel, input.m) {
                return Ok(embedding_profile(&e, qs, Some(m), tol)?);
            }
            let items: Vec<Item> = e.row_iter().map(|r| Item::Vector(r.iter().copied().collect())).collect();
            Ok(match input.m {
                Some(m) => subsampled_profile(&kernel.matrix(&items)?, qs, m, input.seed, tol)?,
                None => score_profile(&items, &kernel, qs, tol)?,
            })
        }
    }
}

pub fn reports_csv(reports: &[ScoreReport]) -> String {
    let mut s = String::from("q,score,support_count,method\n");
    for r in reports {
        let _ = writeln!(s, "{},{},{},{}", r.q, r.score, r.support_count, r.method);
    }
    s
}

fn cmd_score(args: &ScoreArgs, out: &mut dyn Write) -> CliResult<()> {
    let reports = compute_reports(&args.input, &args.q)?;
    let text = match args.format {
        Format::Csv => reports_csv(&reports),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&reports).map_err(|e| CliError::Failure(e.to_string()))?;
            s.push('\n');
            s
        }
    };
    emit(args.out.as_deref(), &text, out)
}

fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> CliResult<()> {
    let qs = parse_q_grid(&args.q_grid)?;
    let reports = compute_reports(&args.input, &qs)?;
    let mut text = String::from("q,score\n");
    for r in &reports {
        let _ = writeln!(text, "{},{}", r.q, r.score);
    }
    emit(args.out.as_deref(), &text, out)
}

fn cmd_sample_dw(args: &SampleArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = SampleRunConfig::load(&args.config)?;
    let traj = run_vendi_sampling(&cfg.sampler())?;
    let oracle = free_energy_oracle(&cfg.potential, &cfg.regions)?;

    let mut trajectory = String::from("step,nu,replica,x,y\n");
    for rec in &traj.records {
        for (i, p) in rec.positions.iter().enumerate() {
            let _ = writeln!(trajectory, "{},{},{},{},{}", rec.step, rec.nu, i, p[0], p[1]);
        }
    }
    let mut transitions = String::from("step,transitions\n");
    for (rec, n) in traj.records.iter().zip(count_transitions(&traj)) {
        let _ = writeln!(transitions, "{},{}", rec.step, n);
    }

    let last_step = traj.records.last().map_or(0, |r| r.step);
    let start = cfg.analysis_start.or_else(|| traj.unbiased_from());
    let mut free_energy =
        String::from("status,window_start,window_end,n_right,n_left,estimate,std_error,batch_std_error,oracle\n");
    let summary = match start {
        None => {
            let _ = writeln!(free_energy, "no-unbiased-samples,,,,,,,,{oracle}");
            format!("no unbiased samples; oracle {oracle}")
        }
        Some(start) => match free_energy_difference(&traj, start..last_step + 1, &cfg.regions) {
            Ok(f) => {
                let _ = writeln!(
                    free_energy,
                    "ok,{start},{last_step},{},{},{},{},{},{oracle}",
                    f.n_right, f.n_left, f.free_energy, f.std_error, f.batch_std_error
                );
                format!("estimate {} (se {}) oracle {oracle}", f.free_energy, f.std_error)
            }
            Err(CoreError::EmptyRegion { region }) => {
                let _ = writeln!(free_energy, "empty-{region},{start},{last_step},,,,,,{oracle}");
                format!("{region} region never visited; oracle {oracle}")
            }
            Err(e) => return Err(e.into()),
        },
    };

    std::fs::create_dir_all(&args.out_dir)?;
    write_atomic(&args.out_dir.join("trajectory.csv"), trajectory.as_bytes())?;
    write_atomic(&args.out_dir.join("transitions.csv"), transitions.as_bytes())?;
    write_atomic(&args.out_dir.join("free_energy.csv"), free_energy.as_bytes())?;
    write_atomic(&args.out_dir.join("oracle.txt"), format!("{oracle}\n").as_bytes())?;
    let total = count_transitions(&traj).last().copied().unwrap_or(0);
    writeln!(out, "{} records, {total} transitions, {summary}", traj.records.len())?;
    Ok(())
}

fn cmd_scenario(args: &ScenarioArgs, out: &mut dyn Write) -> CliResult<()> {
    let rows = evaluate_panel(args.panel, &args.q, args.seed)?;
    let mut text = String::from("panel,label,size,q,score\n");
    for row in &rows {
        for (q, s) in args.q.iter().zip(&row.scores) {
            let _ = writeln!(text, "{},{},{},{},{}", row.panel, row.label, row.size, q, s);
        }
    }
    emit(args.out.as_deref(), &text, out)
}

fn cmd_correlate(args: &CorrelateArgs, out: &mut dyn Write) -> CliResult<()> {
    let table = read_table(&args.input)?;
    emit(args.out.as_deref(), &pearson_matrix(&table)?.to_csv(), out)
}
