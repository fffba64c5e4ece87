use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use iipmix::checkpoint::Checkpoint;
use iipmix::config::load_config;
use iipmix::io::{self, ReportRow};
use iipmix::run::{self, default_jobs};
use iipmix_core::data::{synth_fleet, FleetConfig};
use iipmix_core::experiment::{prepare, AblationAxis, ExperimentConfig};

#[derive(Parser)]
#[command(name = "iipmix", version, about = "Battery capacity forecasting with intra/inter patch mixing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a config and write runs/<hash>/
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Root of the run directories
        #[arg(long, default_value = "runs")]
        out_dir: PathBuf,
    },
    /// Re-evaluate a saved checkpoint
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Cycle CSV to evaluate on instead of the checkpoint's data source
        #[arg(long)]
        data: Option<PathBuf>,
        /// Write the report CSV here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic fleet as a cycle CSV
    Synth {
        #[arg(long, default_value_t = 300)]
        cycles: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        batteries: usize,
        #[arg(long)]
        fade_rate: Option<f64>,
        #[arg(long)]
        noise_std: Option<f64>,
        #[arg(long)]
        regen_amp: Option<f64>,
        #[arg(long)]
        regen_period: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forest feature importances and the principal-feature selection
    Importance {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one ablation axis and write its table
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        /// heads, serial, weighted, features or arch
        #[arg(long)]
        axis: AblationAxis,
        /// Defaults to ablation_<axis>.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Collect report CSVs (or run directories) into one table
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config; defaults apply to anything it leaves out
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set train.lr=0.01 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Cycle CSV (data.path)
    #[arg(long)]
    data: Option<String>,
    /// Comma-separated seeds (train.seeds)
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// train.epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// train.lr
    #[arg(long)]
    lr: Option<f64>,
    /// model.arch: iip_mixer, mlp or dlinear
    #[arg(long)]
    arch: Option<String>,
    /// data.test_battery
    #[arg(long)]
    test_battery: Option<String>,
    /// Worker threads for seeds; defaults to the available cores
    #[arg(long)]
    jobs: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut sets = self.sets.clone();
        let quoted = |s: &str| format!("{s:?}");
        if let Some(p) = &self.data {
            sets.push(format!("data.path={}", quoted(p)));
        }
        if let Some(s) = &self.seeds {
            let list: Vec<String> = s.iter().map(u64::to_string).collect();
            sets.push(format!("train.seeds=[{}]", list.join(",")));
        }
        if let Some(e) = self.epochs {
            sets.push(format!("train.epochs={e}"));
        }
        if let Some(lr) = self.lr {
            sets.push(format!("train.lr={lr:?}"));
        }
        if let Some(a) = &self.arch {
            sets.push(format!("model.arch={}", quoted(a)));
        }
        if let Some(t) = &self.test_battery {
            sets.push(format!("data.test_battery={}", quoted(t)));
        }
        load_config(self.config.as_deref(), &sets)
    }

    fn jobs(&self) -> usize {
        self.jobs.unwrap_or_else(default_jobs).max(1)
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out_dir } => {
            let cfg = config.load()?;
            let batteries = io::load_batteries(&cfg.data)?;
            let (dir, result) = run::train_to_dir(&cfg, &batteries, &out_dir, config.jobs())?;
            let mut rows: Vec<ReportRow> = result
                .seeds
                .iter()
                .map(|s| ReportRow::of(&format!("seed {}", s.seed), &s.report))
                .collect();
            rows.push(ReportRow::of(&result.mean.method, &result.mean));
            print!("{}", io::render_report(&rows));
            println!("{}", dir.display());
        }
        Command::Evaluate { checkpoint, data, out } => {
            let text = fs::read_to_string(&checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
            let ckpt = Checkpoint::parse(&text)?;
            let mut source = ckpt.config.data.clone();
            if let Some(p) = data {
                source.path = Some(p.to_string_lossy().into_owned());
            }
            let batteries = io::load_batteries(&source)?;
            let (runs, mean) = run::evaluate_checkpoint(&ckpt, &batteries)?;
            let mut rows: Vec<ReportRow> =
                runs.iter().map(|s| ReportRow::of(&format!("seed {}", s.seed), &s.report)).collect();
            rows.push(ReportRow::of(&mean.method, &mean));
            print!("{}", io::render_report(&rows));
            if let Some(p) = out {
                write_file(&p, |b| io::write_report(b, &[(mean.method.as_str(), &mean)]))?;
            }
        }
        Command::Synth {
            cycles,
            seed,
            batteries,
            fade_rate,
            noise_std,
            regen_amp,
            regen_period,
            out,
        } => {
            let mut fleet = FleetConfig {
                batteries,
                ..FleetConfig::default()
            };
            fleet.battery.cycles = cycles;
            if let Some(v) = fade_rate {
                fleet.battery.fade_rate = v;
            }
            if let Some(v) = noise_std {
                fleet.battery.noise_std = v;
            }
            if let Some(v) = regen_amp {
                fleet.battery.regen_amp = v;
            }
            if let Some(v) = regen_period {
                fleet.battery.regen_period = v;
            }
            let records = synth_fleet(&fleet, seed)?;
            write_file(&out, |b| io::write_cycles(b, &records))?;
        }
        Command::Importance { config, out } => {
            let cfg = config.load()?;
            let batteries = io::load_batteries(&cfg.data)?;
            let data = prepare(&cfg, &batteries)?;
            let mut buf = Vec::new();
            io::write_importance(
                &mut buf,
                data.all_feature_names(),
                &data.importances,
                &data.selection.indices,
            )?;
            match out {
                Some(p) => write_file(&p, |b| {
                    b.extend_from_slice(&buf);
                    Ok(())
                })?,
                None => print!("{}", String::from_utf8(buf)?),
            }
        }
        Command::Ablate { config, axis, out } => {
            let cfg = config.load()?;
            let batteries = io::load_batteries(&cfg.data)?;
            let rows = run::run_ablation(&cfg, &batteries, axis, config.jobs())?;
            let path = out.unwrap_or_else(|| PathBuf::from(format!("ablation_{}.csv", axis.as_str())));
            run::write_ablation(&path, &rows)?;
            let table: Vec<ReportRow> = rows.iter().map(|r| ReportRow::of(&r.label, &r.result.mean)).collect();
            print!("{}", io::render_report(&table));
            println!("{}", path.display());
        }
        Command::Report { inputs, out } => {
            let mut rows = Vec::new();
            for p in &inputs {
                let file = if p.is_dir() { p.join("report.csv") } else { p.clone() };
                let f = fs::File::open(&file).with_context(|| format!("opening {}", file.display()))?;
                rows.extend(io::read_report(f).with_context(|| format!("reading {}", file.display()))?);
            }
            print!("{}", io::render_report(&rows));
            if let Some(p) = out {
                write_file(&p, |b| io::write_report_rows(b, &rows))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
