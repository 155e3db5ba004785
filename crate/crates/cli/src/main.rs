use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use histmatch::anonymize::{information_loss, microaggregate};
use histmatch::events::{
    filter_active_users, geo_origin, quantize_events, read_geo_csv, split_by_active_weeks, split_by_period,
    EventLog,
};
use histmatch::harness::{link_periods, run_experiment, ExperimentConfig};
use histmatch::io::{read_histogram_set, write_histogram_set, write_truth};
use histmatch::synth::{generate_pair, sample_population, OverlapSpec, PopulationSpec, GENERATOR};
use histmatch::transform::{aggregate_locations, AggregationTable};
use histmatch::{
    build_instance, match_bruteforce, match_cardinality, match_greedy, match_min_weight, Algorithm, Error,
    MetricKind, Result,
};

/// Link users across two location datasets and test defenses against it.
#[derive(Parser)]
#[command(name = "histmatch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn an event log into two per-period histogram sets and their truth.
    Ingest {
        /// `user,timestamp,location` or `user,timestamp,lat,lon` CSV.
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Split at this timestamp instead of halving each user's active weeks.
        #[arg(long)]
        boundary: Option<i64>,
        #[arg(long, default_value_t = 2)]
        min_active_weeks: usize,
        /// Grid side in meters for GPS fixes.
        #[arg(long, default_value_t = 1000.0)]
        grid_side: f64,
        /// Grid origin as `lat,lon`; defaults to the south-west corner.
        #[arg(long, value_parser = parse_origin)]
        origin: Option<(f64, f64)>,
        /// `from,to` location table applied to both sides.
        #[arg(long)]
        aggregate: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Match an unlabeled histogram set against a labeled one.
    Match {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long, default_value = "proposed")]
        metric: MetricKind,
        /// a1 | a2:<r> | greedy | brute
        #[arg(long, default_value = "a1")]
        algorithm: Algorithm,
        /// Only weigh pairs that share a location.
        #[arg(long)]
        prune: bool,
        #[arg(long)]
        out: PathBuf,
        /// Summary JSON path; printed to stdout either way.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Release a k-anonymous version of a histogram set.
    Anonymize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        /// Partition JSON path; printed to stdout when absent.
        #[arg(long)]
        partition: Option<PathBuf>,
    },
    /// Draw a synthetic matching problem.
    Synth {
        #[arg(long)]
        n_users: usize,
        #[arg(long, default_value_t = 200)]
        alphabet: usize,
        #[arg(long, default_value_t = histmatch::synth::DEFAULT_CONCENTRATION)]
        concentration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        t1: usize,
        /// Defaults to t1.
        #[arg(long)]
        t2: Option<usize>,
        /// Defaults to n-users.
        #[arg(long)]
        n_left: Option<usize>,
        #[arg(long)]
        n_right: Option<usize>,
        /// Users on both sides; defaults to the smaller side.
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a seeded experiment grid from a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the worker count of the config.
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn parse_origin(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lat, lon) = s.split_once(',').ok_or("expected lat,lon")?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    Ok((parse(lat)?, parse(lon)?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run(command: Command) -> Result<serde_json::Value> {
    match command {
        Command::Ingest { events, out, boundary, min_active_weeks, grid_side, origin, aggregate, seed } => {
            let mut text = String::new();
            open(&events)?.read_to_string(&mut text)?;
            let geo = text.lines().next().unwrap_or_default().split(',').any(|c| c.trim() == "lat");
            let log = if geo {
                let fixes = read_geo_csv(text.as_bytes())?;
                let origin = origin
                    .or_else(|| geo_origin(&fixes))
                    .ok_or_else(|| Error::InvalidInput("event log is empty".into()))?;
                quantize_events(&fixes, grid_side, origin)?
            } else {
                EventLog::read_csv(text.as_bytes())?
            };
            let (a, b) = match boundary {
                Some(t) => split_by_period(&log, t),
                None => split_by_active_weeks(&log, min_active_weeks),
            };
            let active = filter_active_users(&a, &b);
            if active.is_empty() {
                return Err(Error::InvalidInput("no user is active in both periods".into()));
            }
            let mut first = a.histograms(Some(&active), false)?;
            let mut second = b.histograms(Some(&active), true)?;
            if let Some(path) = aggregate {
                let table = AggregationTable::read_csv(open(&path)?)?;
                first = first.filter_map(|_, h| Some(aggregate_locations(h, &table)));
                second = second.filter_map(|_, h| Some(aggregate_locations(h, &table)));
            }
            let pair = link_periods(&first, &second, None, seed)?;
            fs::create_dir_all(&out)?;
            write_histogram_set(&pair.unlabeled, create(&out.join("left.csv"))?)?;
            write_histogram_set(&pair.labeled, create(&out.join("right.csv"))?)?;
            write_truth(&pair.truth, create(&out.join("truth.csv"))?)?;
            Ok(json!({ "users": pair.truth.len(), "events": log.len(), "out": out }))
        }
        Command::Match { left, right, metric, algorithm, prune, out, summary } => {
            let left = read_histogram_set(open(&left)?, false)?;
            let right = read_histogram_set(open(&right)?, true)?;
            let started = Instant::now();
            let instance = build_instance(&left, &right, metric, prune)?;
            let result = match algorithm {
                Algorithm::A1 => match_min_weight(&instance)?,
                Algorithm::A2(r) => match_cardinality(&instance, r)?,
                Algorithm::Greedy => match_greedy(&instance),
                Algorithm::BruteForce => match_bruteforce(&instance, None)?,
            };
            let runtime_ms = started.elapsed().as_secs_f64() * 1e3;
            let mut w = create(&out)?;
            result.write_csv(&instance, &mut w)?;
            w.flush()?;
            let doc = serde_json::to_value(result.summary(runtime_ms))?;
            if let Some(path) = summary {
                write_json(&path, &doc)?;
            }
            Ok(doc)
        }
        Command::Anonymize { input, k, out, partition } => {
            let set = read_histogram_set(open(&input)?, false)?;
            let (part, released) = microaggregate(&set, k)?;
            let loss = information_loss(&part, &set)?;
            let mut w = create(&out)?;
            write_histogram_set(&released, &mut w)?;
            w.flush()?;
            let mut doc = Vec::new();
            part.write_json(k, loss, &mut doc)?;
            match partition {
                Some(path) => {
                    fs::write(&path, &doc)?;
                    Ok(json!({ "k": k, "g": part.g(), "L": loss }))
                }
                None => Ok(serde_json::from_slice(&doc)?),
            }
        }
        Command::Synth { n_users, alphabet, concentration, seed, t1, t2, n_left, n_right, r, out } => {
            let spec = PopulationSpec { n_users, alphabet_size: alphabet, concentration, seed };
            let n_left = n_left.unwrap_or(n_users);
            let n_right = n_right.unwrap_or(n_users);
            let overlap = OverlapSpec { n_left, n_right, r: r.unwrap_or(n_left.min(n_right)) };
            let t2 = t2.unwrap_or(t1);
            let population = sample_population(&spec)?;
            let pair = generate_pair(&population, t1, t2, overlap, seed)?;
            fs::create_dir_all(&out)?;
            write_histogram_set(&pair.unlabeled, create(&out.join("left.csv"))?)?;
            write_histogram_set(&pair.labeled, create(&out.join("right.csv"))?)?;
            write_truth(&pair.truth, create(&out.join("truth.csv"))?)?;
            let meta = json!({
                "population": spec,
                "overlap": overlap,
                "t1": t1,
                "t2": t2,
                "seed": seed,
                "generator": GENERATOR,
            });
            write_json(&out.join("synth.json"), &meta)?;
            Ok(meta)
        }
        Command::Experiment { config, out, threads } => {
            let mut cfg = ExperimentConfig::read(open(&config)?)?;
            if threads.is_some() {
                cfg.threads = threads;
            }
            let report = run_experiment(&cfg)?;
            fs::create_dir_all(&out)?;
            let mut w = create(&out.join("report.csv"))?;
            report.write_csv(&mut w)?;
            w.flush()?;
            write_json(&out.join("metadata.json"), &report.metadata())?;
            Ok(json!({ "scenario": report.scenario.as_str(), "rows": report.rows.len(), "out": out }))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": "UsageError", "message": e.to_string().trim_end() }));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(doc) => {
            println!("{doc}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
