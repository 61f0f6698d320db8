use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ntnsync::channel::{apply_impairments, ImpairmentConfig};
use ntnsync::harness::{read_records_csv, run_campaign, summarize, write_outputs, ExperimentConfig};
use ntnsync::phase::{dechirp, extract_phase, DEFAULT_SMOOTH_WINDOW};
use ntnsync::tire::{train_tire, TireConfig};
use ntnsync::waveform::{build_schedule, gen_preamble, PreambleConfig};
use ntnsync::Error;

#[derive(Parser)]
#[command(name = "ntnsync", version, about = "NPRACH ToA/CFO estimation for LEO channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo campaign described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the JSON summary of a trial CSV.
    Summarize { csv: PathBuf },
    /// Write a preamble as interleaved little-endian f32 I/Q.
    Gen {
        #[arg(long)]
        preamble: Option<PathBuf>,
        #[arg(long)]
        iq: PathBuf,
    },
    /// Dump a noiseless phase trace.
    DemoPhase {
        #[arg(long, value_enum, default_value = "fig3")]
        scenario: Scenario,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Train a detector on a noiseless trace and save the model blob.
    TrainTire {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    /// 200-sample delay, 1500 Hz CFO.
    Fig3,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::Json(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn read_to_string(path: &PathBuf) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn fig3_trace() -> Result<ntnsync::phase::PhaseSeries, Failure> {
    let cfg = PreambleConfig::default();
    let x = gen_preamble(&cfg, &build_schedule(&cfg))?;
    let imp = ImpairmentConfig { toa_samples: 200.0, cfo_hz: 1500.0, ..Default::default() };
    let rx = apply_impairments(&x, &imp, None)?;
    Ok(extract_phase(&dechirp(&rx, &x)?, DEFAULT_SMOOTH_WINDOW, cfg.sg_len())?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::from_json(&read_to_string(&config)?)?;
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| Failure::Config("no output directory given".into()))?;
            let records = run_campaign(&cfg)?;
            let summary = write_outputs(&records, &dir)?;
            for g in &summary.groups {
                let snr = g.snr_db.map_or("none".to_string(), |s| format!("{s}"));
                let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
                println!(
                    "{:?} {:?} snr={snr} n_rep={} ok={}/{} mean_toa_us={} max_toa_us={} max_cfo_hz={}",
                    g.method,
                    g.channel,
                    g.n_rep,
                    g.ok,
                    g.trials,
                    show(g.mean_toa_error_us),
                    show(g.max_toa_error_us),
                    show(g.max_cfo_error_hz),
                );
            }
        }
        Command::Summarize { csv } => {
            let file = File::open(&csv).map_err(|e| Failure::Config(format!("{}: {e}", csv.display())))?;
            let records = read_records_csv(BufReader::new(file))?;
            let stdout = std::io::stdout();
            serde_json::to_writer_pretty(stdout.lock(), &summarize(&records)).map_err(Error::from)?;
            println!();
        }
        Command::Gen { preamble, iq } => {
            let cfg: PreambleConfig = match preamble {
                Some(p) => serde_json::from_str(&read_to_string(&p)?).map_err(Error::from)?,
                None => PreambleConfig::default(),
            };
            cfg.validate()?;
            let x = gen_preamble(&cfg, &build_schedule(&cfg))?;
            let mut w = BufWriter::new(File::create(&iq)?);
            x.write_raw(&mut w)?;
            w.flush()?;
        }
        Command::DemoPhase { scenario: Scenario::Fig3, csv } => {
            let ps = fig3_trace()?;
            ps.write_csv(BufWriter::new(File::create(&csv)?))?;
        }
        Command::TrainTire { out, seed } => {
            let ps = fig3_trace()?;
            let model = train_tire(&ps, &TireConfig { seed, ..Default::default() })?;
            let mut w = BufWriter::new(File::create(&out)?);
            model.save(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
