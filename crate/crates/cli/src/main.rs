use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use fiberlink::coincidence::classify_regime;
use fiberlink::fiber::{calibrate_fiber, calibrate_single_mode, Attenuation, CalibrationTargets};
use fiberlink::qkd::{crossover_analysis, SecurityParams};
use fiberlink::scenario::{self, AnalysisParams, Scenario, Table};
use fiberlink::sync::{run_sync, Role, SyncParams};
use fiberlink::tagfile::{read_tags, tags_from_records};
use fiberlink::units::{self, Dimension};

#[derive(Parser)]
#[command(name = "fiberlink", version, about = "Entanglement distribution over few-mode telecom fiber")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and analyze its tags.
    Simulate {
        /// Scenario file, or the name of a bundled scenario.
        config: String,
        /// Directory for the artifacts listed in the scenario.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the run length, e.g. "30 s".
        #[arg(long)]
        duration: Option<String>,
    },
    /// Coincidence analysis of two tag files.
    Analyze {
        tags_a: PathBuf,
        tags_b: PathBuf,
        /// Coincidence window (ps).
        #[arg(long, default_value_t = 3000)]
        window: i64,
        /// Offsets within ± this many ps are searched.
        #[arg(long, default_value_t = 50_000_000)]
        offset_search: i64,
        /// Histogram bin width (ps).
        #[arg(long, default_value_t = 100)]
        bin: i64,
        /// Writes the delay histogram here.
        #[arg(long)]
        histogram: Option<PathBuf>,
        /// Writes the matched coincidences here.
        #[arg(long)]
        coincidences: Option<PathBuf>,
    },
    /// Secure rate against fiber length in arm A.
    Sweep {
        config: String,
        /// km
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        lengths: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Segment-by-segment QBER and secure rate of a drifting link.
    Drift {
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also average the expected QBER over this many seeds.
        #[arg(long)]
        ensemble: Option<usize>,
    },
    /// The six-row distribution summary.
    Table1 {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fiber length up to which 810 nm beats 1550 nm.
    Crossover {
        /// dB/km
        #[arg(long, default_value_t = 3.0)]
        loss810: f64,
        /// dB/km
        #[arg(long, default_value_t = 0.22)]
        loss1550: f64,
        #[arg(long, default_value_t = 0.70)]
        eff_short: f64,
        #[arg(long, default_value_t = 0.15)]
        eff_long: f64,
    },
    /// Secure rate projected for a brighter source over a scenario's link.
    Outlook {
        #[arg(default_value = "outlook")]
        config: String,
    },
    /// Agree on the clock offset with a peer over TCP.
    Sync {
        #[arg(long, value_enum)]
        role: RoleArg,
        #[arg(long, conflicts_with = "connect", required_unless_present = "connect")]
        listen: Option<String>,
        #[arg(long)]
        connect: Option<String>,
        /// Local tag file.
        #[arg(long)]
        tags: PathBuf,
        /// ps
        #[arg(long, default_value_t = 100)]
        bin_width: u64,
        #[arg(long, default_value_t = 1 << 20)]
        bins: u32,
        /// ps
        #[arg(long, default_value_t = 50_000_000)]
        search: i64,
        /// s
        #[arg(long, default_value_t = 10)]
        timeout: u64,
    },
    /// Fit model parameters and print them as scenario TOML.
    Calibrate {
        #[command(subcommand)]
        what: CalibrateCommand,
    },
    /// List the bundled scenarios, or copy them into a directory.
    Scenarios {
        #[arg(long)]
        export: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CalibrateCommand {
    /// Telecom fiber and the short single-mode filter fiber.
    Fibers,
    /// Spatial-filter offset of a scenario for its target leakage.
    Filter { config: String },
    /// Detector dark rate putting the sweep cutoff at the target length.
    Darks { config: String },
    /// Drift rate reproducing the target mean QBER for the scenario's seed.
    Drift { config: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Alice,
    Bob,
}

fn load(config: &str) -> Result<Scenario> {
    let path = Path::new(config);
    let scenario = if path.exists() {
        scenario::load_file(path)?
    } else {
        scenario::load_bundled(config).with_context(|| format!("{config} is neither a file nor a bundled scenario"))?
    };
    Ok(scenario)
}

fn emit(table: &Table, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => table.write(p)?,
        None => print!("{}", table.to_tsv()),
    }
    Ok(())
}

fn simulate(config: &str, out: &Path, seed: Option<u64>, duration: Option<&str>) -> Result<()> {
    let mut s = load(config)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(d) = duration {
        s.duration = units::parse(d, Dimension::Duration)?;
    }
    let result = scenario::run_scenario(&s)?;
    print!("{}", Table::table1(&[scenario::Table1Row::from_result(&result)]).to_tsv());
    for path in scenario::write_bundle(&result, out)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn analyze(
    a: &Path,
    b: &Path,
    window: i64,
    offset_search: i64,
    bin: i64,
    histogram: Option<&Path>,
    coincidences: Option<&Path>,
) -> Result<()> {
    let (ha, ra) = read_tags(a).with_context(|| a.display().to_string())?;
    let (hb, rb) = read_tags(b).with_context(|| b.display().to_string())?;
    let ta = tags_from_records(&ha, &ra);
    let tb = tags_from_records(&hb, &rb);
    let span = |t: &[fiberlink::link::TimeTag]| t.last().map_or(0, |l| l.time) - t.first().map_or(0, |f| f.time);
    let duration = span(&ta).max(span(&tb)) as f64 * 1e-12;
    if duration <= 0.0 {
        bail!("tag files span no time");
    }
    let defaults = AnalysisParams::default();
    let half_range = (defaults.half_range / bin).max(1) * bin;
    let params = AnalysisParams { bin_width: bin, offset_search, half_range, ..defaults };
    let result = scenario::analyze_streams(&ta, &tb, &params, window, duration, &SecurityParams::default())?;
    let mut t = Table::new(&[
        "offset_ps",
        "window_ps",
        "coinc_per_s",
        "sifted_per_s",
        "visibility_pct",
        "qber",
        "secure_per_s",
    ]);
    let k = result.key;
    t.push(vec![
        result.offset.to_string(),
        window.to_string(),
        format!("{:.2}", k.coincidence_rate),
        format!("{:.2}", k.sifted_rate),
        format!("{:.2}", 100.0 * k.visibility),
        format!("{:.5}", k.qber),
        format!("{:.2}", k.secure_rate),
    ]);
    print!("{}", t.to_tsv());
    if let Some(p) = histogram {
        Table::histogram(&result.histogram).write(p)?;
    }
    if let Some(p) = coincidences {
        Table::coincidences(&result.coincidences).write(p)?;
    }
    Ok(())
}

fn sweep(config: &str, lengths: &[f64], out: Option<&Path>) -> Result<()> {
    let s = load(config)?;
    let points = scenario::run_sweep(&s, lengths)?;
    emit(&Table::sweep(&points), out)?;
    match scenario::sweep_cutoff(&points, &s.security) {
        Some(c) => eprintln!("secure rate vanishes at {c:.2} km"),
        None => eprintln!("secure rate stays positive over the sweep"),
    }
    if let Some((slope, _, r2)) = scenario::fit_log_linear(&points) {
        eprintln!("log-linear decay {:.2} dB/km of key rate, R² {r2:.4}", -10.0 * slope / std::f64::consts::LN_10);
    }
    Ok(())
}

fn drift(config: &str, out: Option<&Path>, ensemble: Option<usize>) -> Result<()> {
    let s = load(config)?;
    let segments = scenario::run_drift(&s)?;
    emit(&Table::drift(&segments), out)?;
    let n = segments.len() as f64;
    eprintln!(
        "mean QBER {:.4}, mean secure rate {:.1} /s",
        segments.iter().map(|x| x.qber).sum::<f64>() / n,
        segments.iter().map(|x| x.secure_rate).sum::<f64>() / n
    );
    if let Some(seeds) = ensemble {
        let points = scenario::drift_ensemble(&s, seeds)?;
        let path = out.map(|p| p.with_extension("ensemble.tsv"));
        emit(&Table::ensemble(&points), path.as_deref())?;
    }
    Ok(())
}

fn sync(role: RoleArg, listen: Option<&str>, connect: Option<&str>, tags: &Path, params: SyncParams) -> Result<()> {
    let (header, records) = read_tags(tags).with_context(|| tags.display().to_string())?;
    let tags = tags_from_records(&header, &records);
    let role = match role {
        RoleArg::Alice => Role::Alice,
        RoleArg::Bob => Role::Bob,
    };
    let mut stream = match (listen, connect) {
        (Some(addr), _) => TcpListener::bind(addr)?.accept()?.0,
        (None, Some(addr)) => TcpStream::connect(addr)?,
        (None, None) => bail!("one of --listen or --connect is required"),
    };
    stream.set_read_timeout(Some(params.timeout))?;
    let offset = run_sync(role, &tags, &mut stream, params)?;
    println!("{offset}");
    Ok(())
}

fn calibrate(what: &CalibrateCommand) -> Result<()> {
    match what {
        CalibrateCommand::Fibers => {
            let telecom = calibrate_fiber(&CalibrationTargets::telecom())?;
            let sm800 = calibrate_single_mode(
                "sm800",
                5.4,
                810.0,
                0.12,
                1.4533,
                vec![Attenuation { wavelength: 810.0, loss: 3.5 }],
            )?;
            print!("{}\n{}", scenario::fiber_to_toml(&telecom), scenario::fiber_to_toml(&sm800));
        }
        CalibrateCommand::Filter { config } => {
            let s = load(config)?;
            let Some(filter) = &s.spatial_filter else {
                bail!("{config} has no [spatial_filter] section");
            };
            let fiber = if s.arm_a.length > 0.0 { &s.arm_a.fiber } else { &s.arm_b.fiber };
            let offset =
                scenario::solve_filter_offset(fiber, &filter.fiber, filter.leakage, s.source.emission_wavelength)?;
            println!("[spatial_filter]\nlateral_offset = \"{offset} um\"");
        }
        CalibrateCommand::Darks { config } => {
            let rate = scenario::calibrate_dark_rate(&load(config)?)?;
            println!("[detectors]\ndark_rate = \"{rate:.0} /s\"");
        }
        CalibrateCommand::Drift { config } => {
            let rate = scenario::calibrate_drift_rate(&load(config)?)?;
            println!(
                "[arms.a]\ndrift_rate = \"{rate:.6} rad/sqrt(s)\"\n\n[arms.b]\ndrift_rate = \"{rate:.6} rad/sqrt(s)\""
            );
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, seed, duration } => simulate(&config, &out, seed, duration.as_deref()),
        Command::Analyze { tags_a, tags_b, window, offset_search, bin, histogram, coincidences } => {
            analyze(&tags_a, &tags_b, window, offset_search, bin, histogram.as_deref(), coincidences.as_deref())
        }
        Command::Sweep { config, lengths, out } => sweep(&config, &lengths, out.as_deref()),
        Command::Drift { config, out, ensemble } => drift(&config, out.as_deref(), ensemble),
        Command::Table1 { out } => {
            let rows: Vec<_> = scenario::report_table1()?.into_iter().map(|(row, _)| row).collect();
            emit(&Table::table1(&rows), out.as_deref())
        }
        Command::Crossover { loss810, loss1550, eff_short, eff_long } => {
            let c = crossover_analysis(loss810, loss1550, eff_short, eff_long)?;
            let mut t = Table::new(&["breakeven_length_km", "breakeven_loss_db"]);
            t.push(vec![format!("{:.3}", c.breakeven_length), format!("{:.3}", c.breakeven_loss)]);
            emit(&t, None)
        }
        Command::Outlook { config } => {
            let s = load(&config)?;
            let p = scenario::outlook_projection(&s)?;
            let mut t =
                Table::new(&["regime", "local_coinc_per_s", "loss_db", "delivered_per_s", "qber", "secure_per_s"]);
            let regime = format!("{:?}", classify_regime(s.arm_a.length, s.arm_b.length)).to_lowercase();
            t.push(vec![
                regime,
                format!("{:.0}", p.local_coincidence_rate),
                format!("{:.2}", p.loss_db),
                format!("{:.0}", p.delivered_rate),
                format!("{:.5}", p.qber),
                format!("{:.0}", p.secure_rate),
            ]);
            emit(&t, None)
        }
        Command::Sync { role, listen, connect, tags, bin_width, bins, search, timeout } => {
            let params = SyncParams {
                bin_width,
                bin_count: bins,
                search_range: search,
                timeout: Duration::from_secs(timeout),
                ..SyncParams::default()
            };
            sync(role, listen.as_deref(), connect.as_deref(), &tags, params)
        }
        Command::Calibrate { what } => calibrate(&what),
        Command::Scenarios { export } => {
            match export {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    for (name, text) in scenario::BUNDLED {
                        std::fs::write(dir.join(name), text)?;
                    }
                }
                None => {
                    for name in scenario::scenario_names() {
                        println!("{name}");
                    }
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
