use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cirnet::analyzer::{
    calibrate, check_guidelines, compute_geometry, count_macs, count_params, render_human, render_tsv, MacConvention,
};
use cirnet::experiment::{run_bias_experiment, BiasConfig, BiasSummary};
use cirnet::graph::{
    dump_architecture, load_weights, parse_architecture, save_weights, Architecture, Graph, InitScheme,
};
use cirnet::matcher::{track_sequence, write_track_log, TrackerConfig};
use cirnet::synth::{evaluate, generate, load_sequence, Motion, SynthConfig};
use cirnet::tensor::{read_tensor, write_tensor};

/// Analyze, lint and run cropping-inside residual backbones.
#[derive(Debug, Parser)]
#[command(name = "cirnet", version, about)]
struct Cli {
    /// Worker threads for parallel sections; defaults to all cores.
    #[arg(long, global = true, env = "CIRNET_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Receptive field, stride, output size and padding influence per node.
    Analyze {
        #[command(flatten)]
        arch: ArchArg,
        /// Square input side in pixels.
        #[arg(long, default_value_t = 127)]
        input: usize,
        #[command(flatten)]
        format: FormatArg,
    },
    /// Checks the design guidelines; exits 1 when any fails.
    Lint {
        #[command(flatten)]
        arch: ArchArg,
        #[arg(long, default_value_t = 127)]
        exemplar: usize,
        #[command(flatten)]
        format: FormatArg,
    },
    /// Learnable parameter count.
    Params {
        #[command(flatten)]
        arch: ArchArg,
        #[command(flatten)]
        format: FormatArg,
    },
    /// Multiply-accumulate count of one forward pass.
    Flops {
        #[command(flatten)]
        arch: ArchArg,
        /// Explicit square input side; overrides the convention.
        #[arg(long)]
        input: Option<usize>,
        #[arg(long, value_enum, default_value_t = ConventionArg::Calibrated)]
        convention: ConventionArg,
        #[command(flatten)]
        format: FormatArg,
    },
    /// Runs a graph on a tensor file.
    Forward {
        #[command(flatten)]
        arch: ArchArg,
        #[command(flatten)]
        weights: WeightsArg,
        /// Input tensor (CIRT).
        #[arg(long = "tensor")]
        tensor: PathBuf,
        /// Where to write the output tensor.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Writes seeded random weights.
    Init {
        #[command(flatten)]
        arch: ArchArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = SchemeArg::FanIn)]
        scheme: SchemeArg,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Tracks a stored or synthetic sequence and writes the log.
    Track(TrackArgs),
    /// Paired boundary-localization experiment, padded baseline against a cropping backbone.
    BiasExp(BiasArgs),
    /// Exports an architecture in the text format.
    DumpArch {
        #[command(flatten)]
        arch: ArchArg,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ArchArg {
    /// Builtin name or path to an architecture text file.
    #[arg(long)]
    arch: String,
}

#[derive(Debug, Args)]
struct FormatArg {
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
}

#[derive(Debug, Args)]
struct WeightsArg {
    /// Weights file (CIRW).
    #[arg(long, conflicts_with = "seed")]
    weights: Option<PathBuf>,
    /// Seed for random weights when no file is given.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrackArgs {
    #[command(flatten)]
    arch: ArchArg,
    #[command(flatten)]
    weights: WeightsArg,
    /// Directory with frame_NNNN.cirt files and groundtruth.txt.
    #[arg(long, conflicts_with_all = ["synth_seed", "frames", "motion"])]
    sequence: Option<PathBuf>,
    /// Seed of the generated sequence.
    #[arg(long)]
    synth_seed: Option<u64>,
    #[arg(long)]
    frames: Option<usize>,
    /// `static`, `constant:DX,DY` or `boundary:SPEED`.
    #[arg(long)]
    motion: Option<String>,
    #[arg(long, default_value_t = 3)]
    scales: usize,
    /// Blend a cosine window into the response.
    #[arg(long)]
    window: bool,
    /// Tracking log destination.
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct BiasArgs {
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "ciresnet22")]
    candidate: Architecture,
    #[arg(long, default_value = "resnet22-padded")]
    baseline: Architecture,
    #[arg(long, default_value_t = 8)]
    speed: i64,
    #[arg(long, default_value_t = 8)]
    steps: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Also write one row per trial to this file.
    #[arg(long)]
    trials_out: Option<PathBuf>,
    #[command(flatten)]
    format: FormatArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Tsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConventionArg {
    Exemplar,
    Search,
    Both,
    /// Whichever convention best fits the published totals.
    Calibrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    FanIn,
    Positive,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Loads a builtin by name, or parses the file the argument names.
fn load_graph(spec: &str, channels: Option<usize>) -> Result<Graph> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let g = parse_architecture(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(c) = channels.filter(|&c| c != g.input_channels()) {
            bail!("{} takes {} input channels, data has {c}", path.display(), g.input_channels());
        }
        return Ok(g);
    }
    let arch: Architecture = spec.parse()?;
    Ok(match channels {
        Some(c) => arch.build_with_channels(c),
        None => arch.build(),
    })
}

fn with_weights(mut graph: Graph, w: &WeightsArg) -> Result<Graph> {
    match (&w.weights, w.seed) {
        (Some(path), _) => load_weights(&mut graph, path).with_context(|| format!("loading {}", path.display()))?,
        (None, Some(seed)) => graph.init_random(seed),
        (None, None) => bail!("pass --weights FILE or --seed N"),
    }
    Ok(graph)
}

fn parse_motion(s: &str) -> Result<Motion> {
    let bad = || anyhow::anyhow!("bad motion `{s}` (want static, constant:DX,DY or boundary:SPEED)");
    if s == "static" {
        return Ok(Motion::Static);
    }
    let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
    match kind {
        "constant" => {
            let (dx, dy) = rest.split_once(',').ok_or_else(bad)?;
            Ok(Motion::Constant {
                dx: dx.trim().parse().map_err(|_| bad())?,
                dy: dy.trim().parse().map_err(|_| bad())?,
            })
        }
        "boundary" => Ok(Motion::TowardBoundary {
            speed: rest.trim().parse().map_err(|_| bad())?,
            border: None,
        }),
        _ => Err(bad()),
    }
}

fn run(command: Command) -> Result<ExitCode> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match command {
        Command::Analyze { arch, input, format } => {
            let graph = load_graph(&arch.arch, None)?;
            let geo = compute_geometry(&graph, (input, input))?;
            match format.format {
                Format::Human => write!(out, "{}", render_human(&graph, &geo, &[]))?,
                Format::Tsv => write!(out, "{}", render_tsv(&geo))?,
            }
        }
        Command::Lint { arch, exemplar, format } => {
            let graph = load_graph(&arch.arch, None)?;
            let report = check_guidelines(&graph, exemplar)?;
            match format.format {
                Format::Human => writeln!(out, "{report}")?,
                Format::Tsv => {
                    writeln!(out, "guideline\tstatus\tdetail")?;
                    for v in &report.verdicts {
                        writeln!(out, "{}\t{}\t{}", v.guideline.name(), if v.ok { "pass" } else { "fail" }, v.message)?;
                    }
                }
            }
            out.flush()?;
            if !report.passed() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Params { arch, format } => {
            let graph = load_graph(&arch.arch, None)?;
            let n = count_params(&graph);
            match format.format {
                Format::Human => writeln!(out, "{}: {n} parameters ({:.3} M)", graph.name(), n as f64 / 1e6)?,
                Format::Tsv => writeln!(out, "arch\tparams\n{}\t{n}", graph.name())?,
            }
        }
        Command::Flops {
            arch,
            input,
            convention,
            format,
        } => {
            let graph = load_graph(&arch.arch, None)?;
            let (label, macs) = match input {
                Some(n) => (format!("input {n}x{n}"), count_macs(&graph, (n, n))?),
                None => {
                    let conv = match convention {
                        ConventionArg::Exemplar => MacConvention::Exemplar,
                        ConventionArg::Search => MacConvention::Search,
                        ConventionArg::Both => MacConvention::Both,
                        ConventionArg::Calibrated => calibrate().best().convention,
                    };
                    (format!("convention {conv}"), conv.macs(&graph)?)
                }
            };
            match format.format {
                Format::Human => writeln!(out, "{} ({label}): {macs} MACs ({:.3} G)", graph.name(), macs as f64 / 1e9)?,
                Format::Tsv => writeln!(out, "arch\tbasis\tmacs\n{}\t{label}\t{macs}", graph.name())?,
            }
        }
        Command::Forward {
            arch,
            weights,
            tensor,
            output,
        } => {
            let x = read_tensor(&tensor).with_context(|| format!("reading {}", tensor.display()))?;
            let graph = with_weights(load_graph(&arch.arch, Some(x.channels()))?, &weights)?;
            let y = graph.forward(&x)?;
            writeln!(out, "output: {}x{}x{}", y.channels(), y.height(), y.width())?;
            if let Some(path) = output {
                write_tensor(&path, &y).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Init {
            arch,
            seed,
            scheme,
            output,
        } => {
            let mut graph = load_graph(&arch.arch, None)?;
            let scheme = match scheme {
                SchemeArg::FanIn => InitScheme::FanInUniform,
                SchemeArg::Positive => InitScheme::Positive,
            };
            graph.init_with(seed, scheme);
            save_weights(&graph, &output).with_context(|| format!("writing {}", output.display()))?;
            writeln!(out, "{}: {} tensors, {} parameters -> {}", graph.name(), graph.weights().len(), count_params(&graph), output.display())?;
        }
        Command::Track(args) => track(args, &mut out)?,
        Command::BiasExp(args) => {
            let cfg = BiasConfig {
                trials: args.trials,
                seed: args.seed,
                candidate: args.candidate,
                baseline: args.baseline,
                speed: args.speed,
                steps: args.steps,
                alpha: args.alpha,
                ..BiasConfig::default()
            };
            let summary = run_bias_experiment(&cfg)?;
            if let Some(path) = &args.trials_out {
                write_trials(path, &summary).with_context(|| format!("writing {}", path.display()))?;
            }
            write_summary(&mut out, &cfg, &summary, args.format.format)?;
        }
        Command::DumpArch { arch, output } => {
            let text = dump_architecture(&load_graph(&arch.arch, None)?);
            match output {
                Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => write!(out, "{text}")?,
            }
        }
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn track(args: TrackArgs, out: &mut impl Write) -> Result<()> {
    let (frames, truth) = match &args.sequence {
        Some(dir) => load_sequence(dir).with_context(|| format!("loading {}", dir.display()))?,
        None => {
            let mut cfg = SynthConfig {
                channels: 3,
                ..SynthConfig::default()
            };
            if let Some(n) = args.frames {
                cfg.frames = n;
            }
            if let Some(m) = &args.motion {
                cfg.motion = parse_motion(m)?;
            }
            let seq = generate(args.synth_seed.unwrap_or(0), &cfg)?;
            (seq.frames, seq.ground_truth)
        }
    };
    let first = frames.first().context("sequence has no frames")?;
    let graph = with_weights(load_graph(&args.arch.arch, Some(first.channels()))?, &args.weights)?;
    let config = TrackerConfig {
        num_scales: args.scales,
        cosine_window: args.window,
        ..TrackerConfig::default()
    };
    let b = truth[0];
    let init = cirnet::matcher::LogRow::from_box(0, b.cx, b.cy, b.w, b.h);
    let log = track_sequence(graph, &frames, init, &config)?;
    write_track_log(&args.output, &log).with_context(|| format!("writing {}", args.output.display()))?;
    let m = evaluate(&log, &truth)?;
    writeln!(out, "frames: {}", m.frames)?;
    writeln!(out, "mean_center_error: {:.3}", m.mean_center_error)?;
    writeln!(out, "mean_iou: {:.4}", m.mean_iou)?;
    writeln!(out, "success_rate: {:.4}", m.success_rate)?;
    writeln!(out, "log: {}", args.output.display())?;
    Ok(())
}

fn write_summary(out: &mut impl Write, cfg: &BiasConfig, s: &BiasSummary, format: Format) -> Result<()> {
    let rows = [
        ("trials", s.trials.len().to_string()),
        ("candidate", cfg.candidate.name().to_string()),
        ("baseline", cfg.baseline.name().to_string()),
        ("final_offset", cfg.final_offset().to_string()),
        ("candidate_center_error", format!("{:.4}", s.mean_candidate_center)),
        ("candidate_border_error", format!("{:.4}", s.mean_candidate_border)),
        ("baseline_center_error", format!("{:.4}", s.mean_baseline_center)),
        ("baseline_border_error", format!("{:.4}", s.mean_baseline_border)),
        ("baseline_inward_shift", format!("{:.4}", s.mean_baseline_inward)),
        ("mean_difference", format!("{:.4}", s.mean_difference)),
        ("sd_difference", format!("{:.4}", s.sd_difference)),
        ("t", format!("{:.4}", s.t_statistic)),
        ("p_one_sided", format!("{:.3e}", s.p_value)),
        ("alpha", s.alpha.to_string()),
        ("significant", s.significant().to_string()),
    ];
    let sep = match format {
        Format::Human => ": ",
        Format::Tsv => "\t",
    };
    for (k, v) in rows {
        writeln!(out, "{k}{sep}{v}")?;
    }
    Ok(())
}

fn write_trials(path: &Path, s: &BiasSummary) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "seed\tborder\tcandidate_center\tcandidate_border\tbaseline_center\tbaseline_border\tbaseline_inward")?;
    for t in &s.trials {
        writeln!(
            w,
            "{}\t{:?}\t{}\t{}\t{}\t{}\t{}",
            t.seed, t.border, t.candidate_center, t.candidate_border, t.baseline_center, t.baseline_border, t.baseline_inward
        )?;
    }
    w.flush()?;
    Ok(())
}
