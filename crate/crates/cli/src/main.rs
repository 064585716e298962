use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use echobp::phantom::{GroundTruth, PhantomConfig, PhantomSource};
use echobp::pipeline::{
    evaluate, pwv_from_reader, read_waveform_csv, run_reader, write_json, write_waveform_csv, Alignment,
    SessionConfig, SessionSummary,
};
use echobp::rf::RfReader;

#[derive(Parser)]
#[command(name = "echobp", version, about = "Blood pressure waveforms from three-element ultrasound RF echoes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic phantom RF stream and its ground truth.
    Synth(SynthArgs),
    /// Reconstruct the pressure waveform from an RF stream.
    Run(RunArgs),
    /// Estimate pulse wave velocity only.
    Pwv(PwvArgs),
    /// Compare a reconstructed waveform with a reference.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Phantom configuration (JSON); defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
    /// Ground-truth JSON output.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Noise seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Session configuration (JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Diastolic pressure from a cuff reading, mmHg.
    #[arg(long)]
    dbp: Option<f64>,
    /// Waveform CSV output.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    beats: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
    /// PWV assessment length, s.
    #[arg(long)]
    assess: Option<f64>,
    /// PWV re-assessment interval, s.
    #[arg(long)]
    reassess: Option<f64>,
    #[arg(long)]
    snr_gate: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct PwvArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    assess: f64,
    #[arg(long, default_value_t = echobp::wall::SNR_GATE_DB)]
    snr_gate: f64,
}

#[derive(Args)]
struct EvalArgs {
    /// Waveform CSV from `run`.
    #[arg(long)]
    measured: PathBuf,
    /// Ground-truth JSON from `synth`.
    #[arg(long)]
    reference: PathBuf,
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Reference channel; defaults to the middle element.
    #[arg(long)]
    channel: Option<usize>,
    #[arg(long, default_value = "first-cycle-minimum")]
    alignment: Alignment,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("cannot parse {}", path.display()))
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut config: PhantomConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => PhantomConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.rng_seed = seed;
    }
    let source = PhantomSource::new(config)?;
    let file = File::create(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    source.write_to(BufWriter::new(file))?.flush()?;
    if let Some(p) = &a.truth {
        write_json(&source.ground_truth(), p)?;
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => {
            let mut c: SessionConfig = read_json(p)?;
            if let Some(d) = a.dbp {
                c.dbp_input_mmhg = d;
            }
            c
        }
        None => match a.dbp {
            Some(d) => SessionConfig::new(d),
            None => bail!("--dbp is required without --config"),
        },
    };
    if let Some(v) = a.assess {
        config.assess_duration_s = v;
    }
    if a.reassess.is_some() {
        config.pwv_reassess_interval_s = a.reassess;
    }
    if let Some(v) = a.snr_gate {
        config.snr_gate_db = v;
    }
    if a.workers.is_some() {
        config.workers = a.workers;
    }
    let outputs = &mut config.outputs;
    outputs.waveform_csv = a.out.or(outputs.waveform_csv.take());
    outputs.beats_json = a.beats.or(outputs.beats_json.take());
    outputs.summary_json = a.summary.or(outputs.summary_json.take());

    let result = run_reader(RfReader::new(open(&a.input)?)?, &config)?;
    let outputs = &config.outputs;
    if let Some(p) = &outputs.waveform_csv {
        let file = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
        write_waveform_csv(&result.pressure, file)?;
    }
    if let Some(p) = &outputs.beats_json {
        write_json(&result.beats, p)?;
    }
    let summary = SessionSummary::new(&result);
    if let Some(p) = &outputs.summary_json {
        write_json(&summary, p)?;
    }
    println!(
        "PWV {:.2} ± {:.2} m/s, Dd {:.3} mm, {} beats",
        summary.pwv_mean_mps, summary.pwv_sd_mps, summary.dd_mm, summary.n_beats
    );
    for b in &result.beats {
        println!(
            "  t={:7.3} s  SBP {:6.1}  MAP {:6.1}  DBP {:6.1}  PP {:5.1} mmHg{}",
            b.onset_s,
            b.sbp_mmhg,
            b.map_mmhg,
            b.dbp_mmhg,
            b.pp_mmhg,
            if b.flagged { "  (flagged)" } else { "" }
        );
    }
    Ok(())
}

fn pwv(a: PwvArgs) -> Result<()> {
    let estimate = pwv_from_reader(RfReader::new(open(&a.input)?)?, a.assess, a.snr_gate)?;
    println!("{:.2} ± {:.2} m/s", estimate.mean_mps, estimate.sd_mps);
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let measured = read_waveform_csv(open(&a.measured)?)
        .with_context(|| format!("cannot read {}", a.measured.display()))?;
    let truth: GroundTruth = read_json(&a.reference)?;
    let n = truth.channel_pressure_mmhg.len();
    let channel = a.channel.unwrap_or(n / 2);
    if channel >= n {
        bail!("channel {channel} out of range (reference has {n})");
    }
    let report = evaluate(
        &measured,
        &truth.channel_pressure_mmhg[channel],
        &truth.channel_onsets(channel),
        a.alignment,
    )?;
    if let Some(p) = &a.out {
        write_json(&report, p)?;
    }
    println!("RMSE {:.3} mmHg, r {:.4}, MAE {:.3} mmHg", report.rmse, report.pearson_r, report.mae);
    println!(
        "PP error over {} beats: MAE {:.3}, max {:.3} mmHg",
        report.beats.n_beats, report.beats.pp.mae, report.beats.pp.max_abs_error
    );
    let ba = &report.bland_altman;
    println!(
        "Bland-Altman (MAP): bias {:.3}, LoA [{:.3}, {:.3}] mmHg, {:.0}% within",
        ba.mean_diff, ba.loa_low, ba.loa_high, ba.pct_within
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(a),
        Command::Pwv(a) => pwv(a),
        Command::Eval(a) => eval(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
