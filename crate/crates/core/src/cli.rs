//! Command-line harness behind the `mwjl` binary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cpfit::{
    cp_als, ls_coefficients, random_model, AlsOptions, AlsSketch, SynthKind, SynthSpec,
};
use crate::diagnostics::{coherence, CpModel};
use crate::error::{Error, Result};
use crate::experiment::{
    ls_experiment, norm_experiment, summarize_records, write_history, write_records, Sweep,
};
use crate::io::{load_tensor, parse_synth_descriptor, save_model, save_tensor, synth_descriptor};
use crate::sketch::{targets_for_ratio, MapKind, SketchPlan, StageSpec};
use crate::tensor::{DenseTensor, C64};

#[derive(Debug, Parser)]
#[command(
    name = "mwjl",
    version,
    about = "Modewise JL sketching of dense tensors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic rank-r tensor and its model descriptor.
    Gen(GenArgs),
    /// Print shape, norm and (when a descriptor is available) coherence.
    Info(InfoArgs),
    /// Write the modewise (or two-stage) sketch of a tensor.
    Sketch(SketchArgs),
    /// Relative-norm sweep over compression ratios.
    NormExp(NormExpArgs),
    /// Compressed coefficient least-squares sweep.
    LsExp(LsExpArgs),
    /// Fit a CP model with (optionally sketched) ALS.
    Cpals(CpalsArgs),
}

// List-valued fields spell `::std::vec::Vec` so clap parses one comma list
// per flag instead of repeated occurrences.
fn parse_list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| format!("bad list element `{p}`"))
        })
        .collect()
}

fn parse_shape(s: &str) -> std::result::Result<Vec<usize>, String> {
    parse_list(s)
}

fn parse_ratios(s: &str) -> std::result::Result<Vec<f64>, String> {
    parse_list(s)
}

fn parse_kind(s: &str) -> std::result::Result<MapKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_stage(s: &str) -> std::result::Result<StageSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Synthetic data flags shared by `gen` and the experiments.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Comma-separated extents, e.g. 100,100,100.
    #[arg(long, value_parser = parse_shape)]
    pub shape: Option<::std::vec::Vec<usize>>,
    /// Rank of the synthetic data.
    #[arg(long = "data-rank", default_value_t = 10)]
    pub data_rank: usize,
    /// gaussian or coherent.
    #[arg(long, default_value = "gaussian")]
    pub kind: String,
    /// Noise level of coherent data (entries 1 + sigma*g).
    #[arg(long, default_value_t = 0.1f64.sqrt())]
    pub sigma: f64,
    #[arg(long = "data-seed", default_value_t = 0)]
    pub data_seed: u64,
}

impl DataArgs {
    fn spec(&self) -> Result<SynthSpec> {
        let shape = self.shape.clone().ok_or_else(|| {
            Error::InvalidArgument("either --input or --shape is required".into())
        })?;
        Ok(SynthSpec {
            shape,
            rank: self.data_rank,
            kind: synth_kind(&self.kind, self.sigma)?,
            seed: self.data_seed,
        })
    }
}

fn synth_kind(kind: &str, sigma: f64) -> Result<SynthKind> {
    match kind {
        "gaussian" => Ok(SynthKind::Gaussian),
        "coherent" => Ok(SynthKind::Coherent { sigma }),
        other => Err(Error::InvalidArgument(format!(
            "unknown data kind `{other}`"
        ))),
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_parser = parse_shape)]
    pub shape: ::std::vec::Vec<usize>,
    #[arg(long)]
    pub rank: usize,
    #[arg(long, default_value = "gaussian")]
    pub kind: String,
    #[arg(long, default_value_t = 0.1f64.sqrt())]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output DTEN path; the descriptor goes to `<out>.desc`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Model descriptor; defaults to `<input>.desc` when that file exists.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SketchArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Compression ratio c_s; targets are ceil(c_s * n_j).
    #[arg(long, conflicts_with = "targets")]
    pub ratio: Option<f64>,
    /// Explicit per-mode targets.
    #[arg(long, value_parser = parse_shape)]
    pub targets: Option<::std::vec::Vec<usize>>,
    /// identity, gaussian or fjlt.
    #[arg(long, default_value = "gaussian", value_parser = parse_kind)]
    pub variant: MapKind,
    /// Optional second stage as kind:target, e.g. fjlt:1000.
    #[arg(long, value_parser = parse_stage)]
    pub second: Option<StageSpec>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output DTEN path; the plan descriptor goes to `<out>.plan`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated compression ratios.
    #[arg(long, value_parser = parse_ratios, default_value = "0.05,0.1,0.2,0.3,0.5")]
    pub ratios: ::std::vec::Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value = "gaussian", value_parser = parse_kind)]
    pub variant: MapKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fill the wall_ms column (makes output run-dependent).
    #[arg(long)]
    pub record_time: bool,
}

impl SweepArgs {
    fn sweep(&self) -> Sweep {
        Sweep {
            ratios: self.ratios.clone(),
            trials: self.trials,
            kind: self.variant,
            seed: self.seed,
            record_time: self.record_time,
        }
    }
}

#[derive(Debug, Args)]
pub struct NormExpArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub sweep: SweepArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LsExpArgs {
    /// Input tensor; its basis comes from CP-ALS at --rank.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Rank of the CP basis fitted to --input.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub als_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub als_tol: f64,
    #[command(flatten)]
    pub sweep: SweepArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CpalsArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub rank: usize,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Compress every subproblem with ratio c_s.
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long, default_value = "gaussian", value_parser = parse_kind)]
    pub variant: MapKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub record_time: bool,
    /// Output prefix: `<out>.weights.dten`, `<out>.factor<l>.dten`,
    /// `<out>.history.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_data(input: &Option<PathBuf>, data: &DataArgs) -> Result<(DenseTensor, Option<CpModel>)> {
    match input {
        Some(path) => Ok((load_tensor(path)?, None)),
        None => {
            let model = random_model(&data.spec()?)?;
            Ok((model.to_dense()?, Some(model)))
        }
    }
}

fn write_csv_file(
    path: &Path,
    invocation: &str,
    body: impl FnOnce(&mut dyn Write, &str) -> Result<()>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    body(&mut w, invocation)?;
    w.flush()?;
    Ok(())
}

/// Runs one parsed command. `invocation` is recorded in CSV comment lines.
pub fn run(cli: Cli, invocation: &str, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a, out),
        Command::Info(a) => cmd_info(&a, out),
        Command::Sketch(a) => cmd_sketch(&a, out),
        Command::NormExp(a) => cmd_norm_exp(&a, invocation, out),
        Command::LsExp(a) => cmd_ls_exp(&a, invocation, out),
        Command::Cpals(a) => cmd_cpals(&a, invocation, out),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, S>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&args).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    run(cli, &args.join(" "), out)
}

fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> Result<()> {
    let spec = SynthSpec {
        shape: a.shape.clone(),
        rank: a.rank,
        kind: synth_kind(&a.kind, a.sigma)?,
        seed: a.seed,
    };
    let model = random_model(&spec)?;
    save_tensor(&a.out, &model.to_dense()?)?;
    fs::write(sidecar(&a.out, ".desc"), synth_descriptor(&spec))?;
    writeln!(out, "wrote {}", a.out.display())?;
    Ok(())
}

fn cmd_info(a: &InfoArgs, out: &mut dyn Write) -> Result<()> {
    let x = load_tensor(&a.input)?;
    let shape: Vec<String> = x.shape().iter().map(ToString::to_string).collect();
    writeln!(out, "shape={}", shape.join(","))?;
    writeln!(out, "entries={}", x.len())?;
    writeln!(
        out,
        "scalar={}",
        if x.is_real() { "real" } else { "complex" }
    )?;
    writeln!(out, "norm={}", x.norm())?;
    let desc = a
        .model
        .clone()
        .or_else(|| Some(sidecar(&a.input, ".desc")).filter(|p| p.exists()));
    if let Some(path) = desc {
        let spec = parse_synth_descriptor(&fs::read_to_string(&path)?)?;
        if spec.shape != x.shape() {
            return Err(Error::ShapeMismatch(format!(
                "descriptor shape {:?} differs from tensor {:?}",
                spec.shape,
                x.shape()
            )));
        }
        write!(out, "{}", coherence(&random_model(&spec)?))?;
    }
    Ok(())
}

fn cmd_sketch(a: &SketchArgs, out: &mut dyn Write) -> Result<()> {
    let x = load_tensor(&a.input)?;
    let targets = match (a.variant, &a.targets, a.ratio) {
        (MapKind::Identity, _, _) => x.shape().to_vec(),
        (_, Some(t), _) => t.clone(),
        (_, None, Some(r)) => targets_for_ratio(x.shape(), r)?,
        (_, None, None) => {
            return Err(Error::InvalidArgument(
                "--ratio or --targets is required".into(),
            ))
        }
    };
    let plan = SketchPlan::new(x.shape(), &targets, a.variant, a.second, a.seed)?;
    let y = match plan.second_stage() {
        None => plan.sketch_modewise(&x)?,
        Some(_) => {
            let v = plan.sketch_full(&x)?;
            DenseTensor::new(vec![v.len()], v)?
        }
    };
    save_tensor(&a.out, &y)?;
    fs::write(sidecar(&a.out, ".plan"), plan.descriptor())?;
    let shape: Vec<String> = y.shape().iter().map(ToString::to_string).collect();
    writeln!(out, "shape={}", shape.join(","))?;
    Ok(())
}

fn print_summaries(
    records: &[crate::experiment::ExperimentRecord],
    out: &mut dyn Write,
) -> Result<()> {
    writeln!(out, "c_s,metric,trials,pooled_mean,pooled_std,median")?;
    for s in summarize_records(records) {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6}",
            s.ratio, s.metric, s.summary.count, s.summary.mean, s.summary.std, s.summary.median
        )?;
    }
    Ok(())
}

fn cmd_norm_exp(a: &NormExpArgs, invocation: &str, out: &mut dyn Write) -> Result<()> {
    let (x, _) = load_data(&a.input, &a.data)?;
    let records = norm_experiment(&x, &a.sweep.sweep())?;
    write_csv_file(&a.out, invocation, |w, inv| write_records(w, inv, &records))?;
    print_summaries(&records, out)
}

fn cmd_ls_exp(a: &LsExpArgs, invocation: &str, out: &mut dyn Write) -> Result<()> {
    let (x, model) = load_data(&a.input, &a.data)?;
    let (factors, reference) = match model {
        // Synthetic data carry their ground truth α = 1.
        Some(m) => (m.factors().to_vec(), m.weights().to_vec()),
        None => {
            let rank = a
                .rank
                .ok_or_else(|| Error::InvalidArgument("--rank is required with --input".into()))?;
            let fit = cp_als(
                &x,
                rank,
                &AlsOptions {
                    max_iters: a.als_iters,
                    tol: a.als_tol,
                    seed: a.sweep.seed,
                    sketch: None,
                },
            )?;
            let factors = fit.model.factors().to_vec();
            let reference: Vec<C64> = ls_coefficients(&x, &factors)?.coefficients;
            (factors, reference)
        }
    };
    let records = ls_experiment(&x, &factors, &reference, &a.sweep.sweep())?;
    write_csv_file(&a.out, invocation, |w, inv| write_records(w, inv, &records))?;
    print_summaries(&records, out)
}

fn cmd_cpals(a: &CpalsArgs, invocation: &str, out: &mut dyn Write) -> Result<()> {
    if a.iters == 0 {
        return Err(Error::InvalidArgument("--iters must be at least 1".into()));
    }
    let x = load_tensor(&a.input)?;
    let sketch = a.ratio.map(|ratio| AlsSketch {
        kind: a.variant,
        ratio,
    });
    let fit = cp_als(
        &x,
        a.rank,
        &AlsOptions {
            max_iters: a.iters,
            tol: a.tol,
            seed: a.seed,
            sketch,
        },
    )?;
    save_model(&a.out, &fit.model)?;
    write_csv_file(&sidecar(&a.out, ".history.csv"), invocation, |w, inv| {
        write_history(w, inv, &fit.history, a.record_time)
    })?;
    writeln!(out, "iterations={}", fit.history.len())?;
    writeln!(out, "converged={}", fit.converged)?;
    writeln!(out, "e_cpd={}", fit.final_error())?;
    Ok(())
}
