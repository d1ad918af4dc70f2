use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use codedfl_core::allocation::{aggregate_return, allocate, RedundancyPolicy};
use codedfl_core::data::{count_split, Split};
use codedfl_core::oracle::{self, kernel_error};
use codedfl_core::simulator::{self, load_data, run_scheme, time_to_accuracy, write_trace_csv, RunOutput};
use codedfl_core::{ClientProfile, Error, Scheme, SimConfig};

#[derive(Parser)]
#[command(name = "codedfl", version, about = "Coded federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one or both schemes and write trace.csv and manifest.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the scheme named in the config.
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
    },
    /// Print the load allocation for every global batch index.
    Allocate {
        #[arg(long, required_unless_present = "profile")]
        config: Option<PathBuf>,
        /// Emit `t,expected_return` rows for TMIN:TMAX:STEPS instead.
        #[arg(long, value_name = "TMIN:TMAX:STEPS")]
        sweep: Option<String>,
        /// Use a single client MU:ALPHA:TAU:P:SIZE instead of the config.
        #[arg(long, value_name = "MU:ALPHA:TAU:P:SIZE")]
        profile: Option<String>,
    },
    /// Run a brute-force reference suite.
    Oracle {
        #[arg(value_parser = oracle::SUITES)]
        name: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Report kernel approximation error on random pairs in [0, 1]^d.
    EmbedCheck {
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        #[arg(long, default_value_t = 784)]
        dim: usize,
        #[arg(long, default_value_t = 2000)]
        q: usize,
        #[arg(long, default_value_t = 5.0)]
        sigma: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Coded,
    Uncoded,
    Both,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config { .. } => 1,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn runtime(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate { config, out, scheme } => simulate(&config, &out, scheme),
        Command::Allocate { config, sweep, profile } => allocate_cmd(config.as_deref(), sweep.as_deref(), profile.as_deref()),
        Command::Oracle { name, seed } => oracle_cmd(&name, seed),
        Command::EmbedCheck {
            pairs,
            dim,
            q,
            sigma,
            seed,
        } => embed_check(pairs, dim, q, sigma, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn write_run(dir: &Path, run: &mut RunOutput) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    let trace = dir.join("trace.csv");
    let manifest = dir.join("manifest.json");
    write_trace_csv(&trace, &run.records)?;
    run.manifest.artifacts = vec![trace.display().to_string(), manifest.display().to_string()];
    let json = serde_json::to_string_pretty(&run.manifest).map_err(|e| runtime(e.to_string()))?;
    fs::write(&manifest, json + "\n").map_err(|e| runtime(format!("{}: {e}", manifest.display())))?;
    Ok(())
}

fn summarize(run: &RunOutput) {
    let last = run.records.last().expect("at least the initial record");
    println!(
        "{:<8} final accuracy {:.4}  simulated {:.2} h  ({} steps)",
        run.manifest.scheme.to_string(),
        last.test_accuracy,
        last.wall_clock_s / 3600.0,
        last.step
    );
}

fn hours(t: Option<f64>) -> String {
    t.map_or_else(|| "not reached".to_string(), |s| format!("{:.1}", s / 3600.0))
}

fn simulate(config_path: &Path, out: &Path, scheme: Option<SchemeArg>) -> Result<(), Failure> {
    let config = SimConfig::from_file(config_path)?;
    let schemes = match scheme {
        None => vec![config.scheme],
        Some(SchemeArg::Coded) => vec![Scheme::Coded],
        Some(SchemeArg::Uncoded) => vec![Scheme::Uncoded],
        Some(SchemeArg::Both) => vec![Scheme::Uncoded, Scheme::Coded],
    };
    let data = load_data(&config)?;
    let mut runs = Vec::new();
    for &s in &schemes {
        let mut run = run_scheme(&config, &data, s)?;
        let dir = if schemes.len() > 1 { out.join(s.to_string()) } else { out.to_path_buf() };
        write_run(&dir, &mut run)?;
        summarize(&run);
        runs.push(run);
    }
    if let [uncoded, coded] = runs.as_slice() {
        let gamma = config.target_accuracy;
        let tu = time_to_accuracy(&uncoded.records, gamma);
        let tc = time_to_accuracy(&coded.records, gamma);
        println!("{:<14} {:>6} {:>10} {:>10} {:>8}", "dataset", "gamma", "t_U (h)", "t_C (h)", "gain");
        let gain = match (tu, tc) {
            (Some(u), Some(c)) if c > 0.0 => format!("×{:.2}", u / c),
            _ => "n/a".to_string(),
        };
        println!(
            "{:<14} {:>6.1} {:>10} {:>10} {:>8}",
            config.dataset,
            100.0 * gamma,
            hours(tu),
            hours(tc),
            gain
        );
        println!("gain {gain}");
    }
    Ok(())
}

fn parse_profile(arg: &str) -> Result<ClientProfile, Failure> {
    let parts: Vec<&str> = arg.split(':').collect();
    if parts.len() != 5 {
        return Err(usage(format!("--profile expects MU:ALPHA:TAU:P:SIZE, got {arg:?}")));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| usage(format!("--profile: cannot parse {s:?}")));
    let size = parts[4]
        .parse::<usize>()
        .map_err(|_| usage(format!("--profile: cannot parse size {:?}", parts[4])))?;
    ClientProfile::new(num(parts[0])?, num(parts[1])?, num(parts[2])?, num(parts[3])?, size).map_err(|e| usage(e.to_string()))
}

fn parse_sweep(arg: &str) -> Result<(f64, f64, usize), Failure> {
    let parts: Vec<&str> = arg.split(':').collect();
    let bad = || usage(format!("--sweep expects TMIN:TMAX:STEPS, got {arg:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let steps: usize = parts[2].parse().map_err(|_| bad())?;
    if !(lo >= 0.0 && hi >= lo && steps >= 1) {
        return Err(bad());
    }
    Ok((lo, hi, steps))
}

fn allocate_cmd(config_path: Option<&Path>, sweep: Option<&str>, profile: Option<&str>) -> Result<(), Failure> {
    let config = config_path.map(SimConfig::from_file).transpose()?;
    let profiles: Vec<ClientProfile> = match (profile, &config) {
        (Some(p), _) => vec![parse_profile(p)?],
        (None, Some(cfg)) => simulator::build_profiles(cfg)?.iter().map(|c| c.profile).collect(),
        (None, None) => return Err(usage("allocate needs --config or --profile")),
    };

    if let Some(arg) = sweep {
        let (lo, hi, steps) = parse_sweep(arg)?;
        println!("t,expected_return");
        for i in 0..=steps {
            let t = lo + (hi - lo) * i as f64 / steps as f64;
            println!("{t},{}", aggregate_return(&profiles, t).0);
        }
        return Ok(());
    }

    let cfg = config.ok_or_else(|| usage("allocation without --sweep needs --config"))?;
    let m = if profile.is_some() {
        profiles[0].local_size
    } else {
        cfg.hyper.batch_size_global
    };
    let u = cfg.coded_rows().min(m);
    let batches = match count_split(&cfg.data_dir, Split::Train) {
        Ok(total) => {
            let total = if cfg.train_limit > 0 { total.min(cfg.train_limit) } else { total };
            (total / cfg.hyper.batch_size_global).max(1)
        }
        Err(e) => {
            eprintln!("note: {e}; printing a single batch index");
            1
        }
    };
    let alloc = allocate(&profiles, m, &RedundancyPolicy::Fixed { u })?;
    alloc.validate(&profiles)?;
    let all = vec![alloc; batches];
    println!("{}", serde_json::to_string_pretty(&all).map_err(|e| runtime(e.to_string()))?);
    Ok(())
}

fn oracle_cmd(name: &str, seed: u64) -> Result<(), Failure> {
    let report = oracle::run_suite(name, seed).map_err(|e| usage(e.to_string()))?;
    println!("suite {}", report.suite);
    for c in &report.checks {
        println!(
            "{} {}: computed {:.6e}, reference {:.6e}, tolerance {:.3e}, samples {}",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.computed,
            c.reference,
            c.tolerance,
            c.samples
        );
    }
    if report.passed() {
        Ok(())
    } else {
        Err(runtime(format!("oracle suite {name} disagrees with the closed forms")))
    }
}

fn embed_check(pairs: usize, dim: usize, q: usize, sigma: f64, seed: u64) -> Result<(), Failure> {
    if pairs == 0 {
        return Err(usage("--pairs must be positive"));
    }
    let s = kernel_error(seed, pairs, dim, q, sigma).map_err(|e| usage(e.to_string()))?;
    println!("pairs {}  d {dim}  q {q}  sigma {sigma}", s.pairs);
    println!("mean kernel value {:.6}", s.mean_kernel);
    println!("mean abs error    {:.6}", s.mean_abs);
    println!("max abs error     {:.6}", s.max_abs);
    Ok(())
}
