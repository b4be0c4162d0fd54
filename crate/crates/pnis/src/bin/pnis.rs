//! Command-line front end: dataset generation, training, BER/goodput sweeps,
//! sensing runs, gradient checking, and a self-test suite. Every subcommand
//! reads a scenario config, derives everything else from (config, seed), and
//! writes its numeric outputs as CSV next to any binary artifacts.
//!
//! Exit status: 0 success, 1 validation error (bad flags, bad config, bad
//! inputs), 2 runtime failure (I/O, divergence, failed checks).

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pnis::config::ScenarioConfig;
use pnis::harness::dataset::{generate_dataset, ChannelDraw};
use pnis::harness::eval::{
    eval_ber_sweep, goodput_bps, load_models, r_max_bps, write_sweep_csv, Receiver,
};
use pnis::harness::gradcheck::run_gradcheck;
use pnis::harness::selftest::run_selftest;
use pnis::harness::sense::run_sense;
use pnis::harness::train::train;
use pnis::harness::HarnessError;

#[derive(Parser)]
#[command(
    name = "pnis",
    version,
    about = "Pilot-free PMCW-NOMA ISAC simulator",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Scenario config JSON.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Run seed; defaults to the config's training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for artifacts (created if missing).
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum DrawArg {
    /// Fresh channel realization per record.
    PerRecord,
    /// One realization shared by every record (overfit probes).
    Shared,
}

impl From<DrawArg> for ChannelDraw {
    fn from(d: DrawArg) -> Self {
        match d {
            DrawArg::PerRecord => ChannelDraw::PerRecord,
            DrawArg::Shared => ChannelDraw::Shared,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a labelled dataset for one user.
    GenDataset {
        #[command(flatten)]
        common: Common,
        /// Receiving user: 0 (far) or 1 (near).
        #[arg(long)]
        user: usize,
        /// Record count; defaults to the config's training.dataset_size.
        #[arg(long)]
        count: Option<usize>,
        /// How channel realizations are drawn across records.
        #[arg(long, value_enum, default_value_t = DrawArg::PerRecord)]
        channel: DrawArg,
    },
    /// Train the neural receiver on a generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset file produced by gen-dataset.
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,
    },
    /// BER/goodput sweep over noise figures for the selected receivers.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Receiver ids (zf-far, sic-near, t3former-far, t3former-near);
        /// defaults to all four.
        #[arg(long, value_delimiter = ',')]
        receivers: Vec<String>,
        /// Noise figures in dB; defaults to the config's eval grid.
        #[arg(long, value_delimiter = ',')]
        nf: Vec<f64>,
        /// Frames per sweep point; defaults to the config's eval setting.
        #[arg(long)]
        frames: Option<usize>,
        /// Directory holding t3former checkpoints; defaults to --out.
        #[arg(long, value_name = "DIR")]
        models: Option<PathBuf>,
    },
    /// Peak-rate and goodput arithmetic, standalone or over a sweep CSV.
    Goodput {
        #[command(flatten)]
        common: Common,
        /// Bit error rate to convert (both pilot modes are reported).
        #[arg(long, default_value_t = 0.0)]
        ber: f64,
        /// Recompute goodput per row of an eval sweep CSV instead.
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
    },
    /// One sensing run: maps, peaks, truth-vs-estimate report.
    Sense {
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference check of the model's analytic gradients.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
    /// Fast invariant suite for the given config.
    Selftest {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help/version are not failures; anything else is a usage error.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_class(&e))
        }
    }
}

/// 1 for problems in what the user handed us, 2 for failures at runtime.
fn exit_class(e: &HarnessError) -> u8 {
    match e {
        HarnessError::Config(_)
        | HarnessError::Domain(_)
        | HarnessError::Format(_)
        | HarnessError::DigestMismatch { .. } => 1,
        _ => 2,
    }
}

fn load(common: &Common) -> Result<(ScenarioConfig, u64), HarnessError> {
    let cfg = ScenarioConfig::from_path(&common.config)?;
    let seed = common.seed.unwrap_or(cfg.training.seed);
    std::fs::create_dir_all(&common.out)?;
    Ok((cfg, seed))
}

fn run(cmd: Cmd) -> Result<ExitCode, HarnessError> {
    match cmd {
        Cmd::GenDataset { common, user, count, channel } => {
            let (cfg, seed) = load(&common)?;
            let count = count.unwrap_or(cfg.training.dataset_size);
            let path = common.out.join(format!("dataset_user{user}.pnis"));
            let header = generate_dataset(&cfg, user, count, seed, channel.into(), &path)?;
            let bytes = std::fs::metadata(&path)?.len();
            let summary = common.out.join(format!("dataset_user{user}.csv"));
            let mut w = std::fs::File::create(&summary)?;
            writeln!(w, "records,bits_per_record,bytes,user,pilot_free,config_digest,seed")?;
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                header.count,
                header.bits_per_record(),
                bytes,
                user,
                header.pilot_free,
                header.config_digest,
                seed
            )?;
            println!(
                "wrote {} records ({} bits each, {} bytes) to {}",
                header.count,
                header.bits_per_record(),
                bytes,
                path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Train { common, dataset } => {
            let (cfg, seed) = load(&common)?;
            let out = train(&cfg, &dataset, seed, &common.out)?;
            println!(
                "trained {} epochs: loss {:.6} -> {:.6} (best {:.6} at epoch {}), ber {:.4}",
                out.epochs.len(),
                out.epochs.first().map_or(f64::NAN, |e| e.loss),
                out.final_loss,
                out.best_loss,
                out.best_epoch,
                out.final_ber
            );
            println!("best checkpoint:  {}", out.best_path.display());
            println!("final checkpoint: {}", out.final_path.display());
            println!("metrics:          {}", out.metrics_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Eval { common, receivers, nf, frames, models } => {
            let (cfg, seed) = load(&common)?;
            let receivers = parse_receivers(&receivers)?;
            let nf_list = if nf.is_empty() { cfg.eval.noise_figures_db.clone() } else { nf };
            let frames = frames.unwrap_or(cfg.eval.frames_per_point);
            let model_dir = models.as_deref().unwrap_or(&common.out);
            let loaded = load_models(model_dir, &cfg);
            let rows = eval_ber_sweep(&cfg, &receivers, &nf_list, frames, seed, &loaded)?;
            if rows.is_empty() {
                return Err(HarnessError::Domain(
                    "no evaluable receivers (missing checkpoints?)".into(),
                ));
            }
            let csv = common.out.join("sweep.csv");
            write_sweep_csv(&csv, &rows, &cfg.digest(), seed)?;
            for r in &rows {
                println!(
                    "nf {:>5.1} dB  {:<13}  ber {:.3e} ± {:.1e}  goodput {:.4e} bit/s  ({} bits)",
                    r.nf_db, r.receiver, r.ber, r.ber_ci, r.goodput_bps, r.bits
                );
            }
            println!("sweep written to {}", csv.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Goodput { common, ber, input } => {
            let (cfg, seed) = load(&common)?;
            let csv = common.out.join("goodput.csv");
            match input {
                Some(path) => goodput_over_csv(&cfg, seed, &path, &csv)?,
                None => goodput_single(&cfg, seed, ber, &csv)?,
            }
            println!("goodput written to {}", csv.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Sense { common } => {
            let (cfg, seed) = load(&common)?;
            let art = run_sense(&cfg, seed, &common.out)?;
            write_peaks_csv(&common.out.join("peaks.csv"), &art.report)?;
            for m in &art.report.matches {
                println!(
                    "target {}: range bin err {}, angle step err {}, doppler bin err {}, sign {}",
                    m.target,
                    m.range_bin_err,
                    m.angle_step_err,
                    m.doppler_bin_err,
                    if m.doppler_sign_ok { "ok" } else { "WRONG" }
                );
            }
            println!("maps and peaks under {}", common.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Gradcheck { common } => {
            let (cfg, seed) = load(&common)?;
            let run = run_gradcheck(&cfg, seed)?;
            write_gradcheck_csv(&common.out.join("gradcheck.csv"), &cfg, seed, &run)?;
            println!(
                "checked {} coordinates over {} tensors: {} violations, \
                 max resolvable rel err {:.3e}",
                run.report.coords_checked,
                run.names.len(),
                run.violations,
                run.resolvable_rel_err
            );
            for (name, worst) in &run.flat {
                println!("flat direction {name}: |grad| max {worst:.3e}");
            }
            if run.passed {
                println!("gradcheck PASS");
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("gradcheck FAIL");
                Ok(ExitCode::from(2))
            }
        }
        Cmd::Selftest { common } => {
            let (cfg, seed) = load(&common)?;
            let results = run_selftest(&cfg, seed, &common.out)?;
            let csv = common.out.join("selftest.csv");
            let digest = cfg.digest();
            let mut w = std::fs::File::create(&csv)?;
            writeln!(w, "check,status,detail,config_digest,seed")?;
            let mut ok = true;
            for r in &results {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    r.name,
                    if r.ok { "pass" } else { "fail" },
                    csv_quote(&r.detail),
                    digest,
                    seed
                )?;
                println!("{:<26} {}  {}", r.name, if r.ok { "pass" } else { "FAIL" }, r.detail);
                ok &= r.ok;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

fn parse_receivers(ids: &[String]) -> Result<Vec<Receiver>, HarnessError> {
    if ids.is_empty() {
        return Ok(vec![
            Receiver::ZfFar,
            Receiver::SicNear,
            Receiver::T3Far,
            Receiver::T3Near,
        ]);
    }
    ids.iter().map(|s| Receiver::parse(s)).collect()
}

/// Both pilot modes at one BER, plus the rate ceiling their ratio pins.
fn goodput_single(
    cfg: &ScenarioConfig,
    seed: u64,
    ber: f64,
    csv: &Path,
) -> Result<(), HarnessError> {
    let digest = cfg.digest();
    let mut w = std::fs::File::create(csv)?;
    writeln!(w, "mode,ber,r_max_bps,goodput_bps,config_digest,seed")?;
    for (mode, pf) in [("pilot", false), ("pilot_free", true)] {
        let r = r_max_bps(cfg, pf);
        let g = goodput_bps(ber, cfg, pf)?;
        writeln!(w, "{mode},{ber},{r},{g},{digest},{seed}")?;
        println!("{mode:<11} R_max {r:.6e} bit/s, goodput {g:.6e} bit/s at BER {ber}");
    }
    println!(
        "ceiling ratio pilot-free/pilot = {}",
        r_max_bps(cfg, true) / r_max_bps(cfg, false)
    );
    Ok(())
}

/// Recomputes goodput per row of an eval sweep CSV (pilot mode follows each
/// row's receiver id).
fn goodput_over_csv(
    cfg: &ScenarioConfig,
    seed: u64,
    input: &Path,
    csv: &Path,
) -> Result<(), HarnessError> {
    let text = std::fs::read_to_string(input)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let cols: Vec<&str> = header.split(',').collect();
    let col = |name: &str| -> Result<usize, HarnessError> {
        cols.iter().position(|c| *c == name).ok_or_else(|| {
            HarnessError::Format(format!("sweep CSV lacks a `{name}` column"))
        })
    };
    let (i_nf, i_rx, i_user, i_ber) =
        (col("nf_db")?, col("receiver")?, col("user")?, col("ber")?);

    let digest = cfg.digest();
    let mut w = std::fs::File::create(csv)?;
    writeln!(w, "nf_db,receiver,user,ber,r_max_bps,goodput_bps,config_digest,seed")?;
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let field = |i: usize| -> Result<&str, HarnessError> {
            f.get(i).copied().ok_or_else(|| {
                HarnessError::Format(format!("sweep CSV row {} too short", ln + 2))
            })
        };
        let rx = Receiver::parse(field(i_rx)?)?;
        let ber: f64 = field(i_ber)?
            .parse()
            .map_err(|_| HarnessError::Format(format!("bad ber in row {}", ln + 2)))?;
        let r = r_max_bps(cfg, rx.pilot_free());
        let g = goodput_bps(ber, cfg, rx.pilot_free())?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            field(i_nf)?,
            rx.id(),
            field(i_user)?,
            ber,
            r,
            g,
            digest,
            seed
        )?;
    }
    Ok(())
}

fn write_peaks_csv(
    path: &Path,
    rep: &pnis::harness::sense::SenseReport,
) -> Result<(), HarnessError> {
    let mut w = std::fs::File::create(path)?;
    writeln!(
        w,
        "target,range_bin,angle_step,doppler_bin,range_bin_err,angle_step_err,\
         doppler_bin_err,doppler_sign_ok,config_digest,seed"
    )?;
    for m in &rep.matches {
        let t = &rep.targets[m.target];
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            m.target,
            t.range_bin,
            t.angle_step,
            t.doppler_bin,
            m.range_bin_err,
            m.angle_step_err,
            m.doppler_bin_err,
            m.doppler_sign_ok,
            rep.config_digest,
            rep.seed
        )?;
    }
    Ok(())
}

fn write_gradcheck_csv(
    path: &Path,
    cfg: &ScenarioConfig,
    seed: u64,
    run: &pnis::harness::gradcheck::GradCheckRun,
) -> Result<(), HarnessError> {
    let digest = cfg.digest();
    let mut w = std::fs::File::create(path)?;
    writeln!(w, "tensor,coords,max_rel_err,flat_grad_max,config_digest,seed")?;
    let mut coords_per = vec![0usize; run.names.len()];
    for c in &run.report.coords {
        coords_per[c.tensor] += 1;
    }
    for (i, name) in run.names.iter().enumerate() {
        let flat = run
            .flat
            .iter()
            .find(|(n, _)| n == name)
            .map_or(String::new(), |(_, wst)| format!("{wst:e}"));
        writeln!(
            w,
            "{},{},{},{},{},{}",
            name, coords_per[i], run.report.per_tensor_max[i], flat, digest, seed
        )?;
    }
    Ok(())
}

/// Commas and quotes in free-text fields would break the row shape.
fn csv_quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
