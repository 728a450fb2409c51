use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use seqcnn_core::accel::DEFAULT_L_REINIT;
use seqcnn_core::descriptor::{read_pgm, PIXEL_PATCH_TAG};
use seqcnn_core::eval::{emit_plot, evaluate, read_curve_csv, render_svg, Series, DEFAULT_TOLERANCE};
use seqcnn_core::online::write_k_trace;
use seqcnn_core::synth::write_dataset;
use seqcnn_core::{
    generate_pair, load_descriptor_file, match_accelerated, match_all, match_online, pixel_descriptor,
    save_descriptor_file, AccelParams, DescriptorSet, DifferenceMatrix, GroundTruth, MatchOutcome, MatchResult,
    MatcherParams, OnlineParams, PixelDescriptorConfig, SynthConfig,
};

#[derive(Parser, Debug)]
#[command(name = "seqcnn", version, about = "Sequence-based loop closure detection over frame descriptors")]
struct Cli {
    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long, global = true, env = "SEQCNN_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build pixel-patch descriptors from a directory of PGM images.
    ExtractPixels(ExtractArgs),
    /// Match a query traversal against a reference traversal.
    Match(MatchArgs),
    /// Score a match CSV against ground truth and write a PR curve.
    Eval(EvalArgs),
    /// Generate a synthetic reference/query pair with ground truth.
    Synth(SynthArgs),
    /// Overlay one or more PR curve CSVs into a single SVG.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Directory of .pgm files; frame order is the lexicographic file name order.
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 32)]
    height: usize,
    #[arg(long, default_value_t = 8)]
    patch: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Full,
    Accel,
    Online,
}

#[derive(Args, Debug)]
struct MatchArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    query: PathBuf,
    /// Sequence length; there is deliberately no default.
    #[arg(long)]
    ds: usize,
    #[arg(long, value_enum, default_value_t = Mode::Full)]
    mode: Mode,
    #[arg(long, default_value_t = 0.8)]
    v_min: f64,
    #[arg(long, default_value_t = 1.2)]
    v_max: f64,
    #[arg(long, default_value_t = 0.1)]
    v_step: f64,
    #[arg(long, default_value_t = 10)]
    r_window: usize,
    /// Query and reference are the same traversal: skip recent frames.
    #[arg(long)]
    same_traversal: bool,
    /// Matching ranges per frame (accel).
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Range width; defaults to 6 for accel and 16 for online.
    #[arg(long)]
    num: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_L_REINIT)]
    l_reinit: usize,
    #[arg(long, default_value_t = 30)]
    initial_k: usize,
    #[arg(long, default_value_t = 10)]
    t_window: usize,
    #[arg(long, default_value_t = 0.9)]
    cd_low: f64,
    #[arg(long, default_value_t = 1.1)]
    cd_high: f64,
    /// Match CSV destination.
    #[arg(long)]
    out: PathBuf,
    /// Per-frame work counters CSV.
    #[arg(long)]
    instrumentation: Option<PathBuf>,
    /// Per-frame k trace CSV (online mode).
    #[arg(long)]
    k_trace: Option<PathBuf>,
    /// Binary dump of the full difference matrix.
    #[arg(long)]
    dump_matrix: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Match CSV written by `match`.
    #[arg(long)]
    matches: PathBuf,
    /// Ground truth CSV with `query_index,ref_index` rows.
    #[arg(long, conflicts_with = "gt_identity", required_unless_present = "gt_identity")]
    gt: Option<PathBuf>,
    /// Treat query frame i as matching reference frame i.
    #[arg(long)]
    gt_identity: bool,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: usize,
    #[arg(long)]
    out_dir: PathBuf,
    /// Curve label in the SVG legend.
    #[arg(long, default_value = "matches")]
    label: String,
    /// Exit with status 1 if recall at 100% precision is below this.
    #[arg(long)]
    min_recall: Option<f64>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 500)]
    n_frames: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    shift: f64,
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    #[arg(long, default_value_t = 0.25)]
    step_angle: f64,
    /// Reference frame where the scene changes abruptly (repeatable).
    #[arg(long = "jump")]
    jumps: Vec<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Curve CSV, optionally prefixed with `label=` (repeatable).
    #[arg(long = "curve", required = true)]
    curves: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: cannot configure thread pool: {e}");
        return ExitCode::from(2);
    }
    let outcome = match cli.command {
        Command::ExtractPixels(a) => extract_pixels(a).map(|_| true),
        Command::Match(a) => run_match(a).map(|_| true),
        Command::Eval(a) => run_eval(a),
        Command::Synth(a) => run_synth(a).map(|_| true),
        Command::Plot(a) => run_plot(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn extract_pixels(a: ExtractArgs) -> Result<()> {
    let config = PixelDescriptorConfig {
        target_width: a.width,
        target_height: a.height,
        patch_size: a.patch,
    };
    config.validate()?;
    let mut paths: Vec<PathBuf> = fs::read_dir(&a.images)
        .with_context(|| format!("reading {}", a.images.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("empty input: no .pgm images in {}", a.images.display());
    }

    let mut descriptors = Vec::with_capacity(paths.len());
    let mut names = Vec::with_capacity(paths.len());
    for p in &paths {
        let file = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        let image = read_pgm(BufReader::new(file)).with_context(|| format!("decoding {}", p.display()))?;
        descriptors.push(pixel_descriptor(&image, &config).with_context(|| format!("describing {}", p.display()))?);
        names.push(p.file_name().unwrap_or_default().to_string_lossy().into_owned());
    }
    let set = DescriptorSet::from_descriptors(&descriptors, PIXEL_PATCH_TAG)?.with_frame_names(names)?;
    save_descriptor_file(&set, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} descriptors of dimension {} to {}", set.len(), set.dim(), a.out.display());
    Ok(())
}

fn load(path: &Path) -> Result<DescriptorSet> {
    load_descriptor_file(path).with_context(|| format!("loading {}", path.display()))
}

fn run_match(a: MatchArgs) -> Result<()> {
    let base = MatcherParams {
        ds: a.ds,
        v_min: a.v_min,
        v_max: a.v_max,
        v_step: a.v_step,
        r_window: a.r_window,
        same_traversal: a.same_traversal,
    };
    base.validate()?;
    let accel = AccelParams {
        base,
        k: a.k,
        num: a.num.unwrap_or(6),
        l_reinit: a.l_reinit,
    };
    let online = OnlineParams {
        initial_k: a.initial_k,
        num: a.num.unwrap_or(16),
        t_window: a.t_window,
        cd_low: a.cd_low,
        cd_high: a.cd_high,
    };
    match a.mode {
        Mode::Full => {}
        Mode::Accel => accel.validate()?,
        Mode::Online => {
            online.validate()?;
            AccelParams { k: 1, num: online.num, ..accel }.validate()?;
        }
    }
    if a.k_trace.is_some() && a.mode != Mode::Online {
        bail!("--k-trace is only produced in online mode");
    }

    let reference = load(&a.reference)?;
    let query = load(&a.query)?;
    let start = Instant::now();
    let (outcome, trace): (MatchOutcome, _) = match a.mode {
        Mode::Full => (match_all(&reference, &query, &base)?, None),
        Mode::Accel => (match_accelerated(&reference, &query, &accel)?, None),
        Mode::Online => {
            let o = match_online(&reference, &query, &base, a.l_reinit, &online)?;
            (o.outcome, Some(o.trace))
        }
    };
    let elapsed = start.elapsed();

    let mut w = create(&a.out)?;
    outcome.result.write_csv(&mut w)?;
    w.flush()?;
    if let Some(path) = &a.instrumentation {
        let mut w = create(path)?;
        outcome.stats.write_csv(&mut w)?;
        w.flush()?;
    }
    if let (Some(path), Some(trace)) = (&a.k_trace, &trace) {
        let mut w = create(path)?;
        write_k_trace(trace, &mut w)?;
        w.flush()?;
    }
    if let Some(path) = &a.dump_matrix {
        let d = DifferenceMatrix::build_full(&reference, &query)?;
        let mut w = create(path)?;
        d.write_to(&mut w)?;
        w.flush()?;
    }

    let totals = outcome.stats.totals();
    println!(
        "mode {:?}: matched {} of {} query frames in {:.3}s",
        a.mode,
        outcome.result.len(),
        query.len(),
        elapsed.as_secs_f64()
    );
    println!(
        "distance entries computed {}, sequence evaluations {}, full-sweep frames {}",
        totals.entries_computed, totals.seq_evals, totals.reinit_frames
    );
    let bound = match a.mode {
        Mode::Full => None,
        Mode::Accel => Some(accel.candidate_bound()),
        Mode::Online => Some(online.initial_k * (online.num + 1)),
    };
    if let Some(bound) = bound {
        let peak = outcome.stats.max_flagged_non_reinit().unwrap_or(0);
        let verdict = if peak <= bound { "respected" } else { "VIOLATED" };
        println!("candidate bound {bound}: peak {peak} per windowed frame, {verdict}");
    }
    if let Some(trace) = &trace {
        let last = trace.last().map_or(online.initial_k, |r| r.current_k);
        let resets = trace.iter().filter(|r| r.reset_flag).count();
        println!("final k {last}, {resets} resets");
    }
    Ok(())
}

fn run_eval(a: EvalArgs) -> Result<bool> {
    if let Some(m) = a.min_recall {
        if !(0.0..=1.0).contains(&m) {
            bail!("--min-recall must lie in [0, 1], got {m}");
        }
    }
    let file = File::open(&a.matches).with_context(|| format!("opening {}", a.matches.display()))?;
    let result = MatchResult::read_csv(BufReader::new(file)).with_context(|| format!("reading {}", a.matches.display()))?;
    let gt = match &a.gt {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let mut gt = GroundTruth::read_csv(BufReader::new(file), a.tolerance)?;
            gt.cover(result.frames.last().map_or(0, |f| f.query_index + 1));
            gt
        }
        None => GroundTruth::identity(result.frames.last().map_or(0, |f| f.query_index + 1), a.tolerance),
    };
    let report = evaluate(&result, &gt)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let (csv, svg) = emit_plot(&report, &a.label, a.out_dir.join("pr"))?;

    let best = report.max_recall_at_full_precision;
    println!("recall at 100% precision: {best:.4}");
    if let Some(p) = report.curve.first() {
        println!(
            "at the lowest threshold: precision {:.4}, recall {:.4} (tp {}, fp {}, fn {})",
            p.precision, p.recall, p.tp, p.fp, p.fn_
        );
    }
    println!("wrote {} and {}", csv.display(), svg.display());
    match a.min_recall {
        Some(m) if best < m => {
            eprintln!("recall at 100% precision {best:.4} is below the floor {m}");
            Ok(false)
        }
        _ => Ok(true),
    }
}

fn run_synth(a: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        n_frames: a.n_frames,
        dim: a.dim,
        condition_noise: a.noise,
        viewpoint_shift: a.shift,
        speed_ratio: a.speed,
        step_angle: a.step_angle,
        jumps: a.jumps,
        seed: a.seed,
    };
    let pair = generate_pair(&config)?;
    write_dataset(&pair, &a.out_dir)?;
    println!(
        "wrote {} reference and {} query frames to {}",
        pair.reference.len(),
        pair.query.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn run_plot(a: PlotArgs) -> Result<()> {
    let mut series = Vec::with_capacity(a.curves.len());
    for curve in &a.curves {
        let (label, path) = match curve.split_once('=') {
            Some((l, p)) => (l.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(curve);
                let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                (stem, p)
            }
        };
        let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let s: Series = read_curve_csv(label, BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
        series.push(s);
    }
    let mut w = create(&a.out)?;
    w.write_all(render_svg(&series).as_bytes())?;
    w.flush()?;
    println!("wrote {} curves to {}", series.len(), a.out.display());
    Ok(())
}
