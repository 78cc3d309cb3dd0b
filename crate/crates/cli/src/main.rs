use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use wzopt::calib::{
    build_table, default_v_max, fit_status_gaussians, read_samples_csv, QuantizationTable,
};
use wzopt::delay::write_steps_csv;
use wzopt::feed::{
    aggregate_daily_profile, read_store, run_collector, Clock, CollectorOptions, FetchJob,
    HttpTransport, ManualClock, ObservationStore, ReplayTransport, SystemClock, Transport,
    UrlTemplate,
};
use wzopt::flow::{invert_practical, read_model_params_csv, DEFAULT_X_MAX};
use wzopt::geo::{
    discretize, geo_to_tile, read_point_net_csv, read_roads_csv, write_point_net_csv,
    ProviderProfile,
};
use wzopt::sweep::{emit_curve, evaluate_start, format_hhmm, sweep, SweepSpec, TieTolerance};

mod config;

use config::{CollectConfig, Scenario};

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Input(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Input(e) | Failure::Runtime(e) => e,
        }
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Parser)]
#[command(
    name = "wzopt",
    version,
    about = "Pick the work-zone start time with the least added delay"
)]
struct Cli {
    /// Log level: error, warn, info, debug or trace.
    #[arg(long, global = true, env = "WZOPT_LOG", default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn road polylines into evenly spaced monitoring points.
    Discretize {
        /// Roads CSV `road_id,lat,lng`, vertices in order.
        #[arg(long, env = "WZOPT_ROADS")]
        roads: PathBuf,
        /// Point spacing in meters.
        #[arg(long, env = "WZOPT_SPACING", default_value_t = 50.0)]
        spacing: f64,
        #[arg(long, env = "WZOPT_OUT")]
        out: Option<PathBuf>,
    },
    /// Sample traffic tiles for every monitoring point on a schedule.
    Collect {
        #[arg(long, env = "WZOPT_CONFIG")]
        config: PathBuf,
        #[arg(long, env = "WZOPT_TRANSPORT", value_enum, default_value_t = TransportKind::Live)]
        transport: TransportKind,
        /// Run length in seconds, or `continuous`.
        #[arg(long, env = "WZOPT_DURATION", default_value = "continuous")]
        duration: String,
        /// Sampling period in seconds; overrides the config file.
        #[arg(long, env = "WZOPT_PERIOD")]
        period: Option<u32>,
        /// Store directory; overrides the config file.
        #[arg(long, env = "WZOPT_OUT")]
        out: Option<PathBuf>,
        /// Start a virtual clock at this Unix time in milliseconds instead of
        /// following the wall clock. Firings then happen without waiting.
        #[arg(long, env = "WZOPT_START_MS")]
        start_ms: Option<i64>,
    },
    /// Fit a status-to-speed table from tagged speed samples.
    Calibrate {
        /// Samples CSV `speed_kmh,status`.
        #[arg(long, env = "WZOPT_SAMPLES")]
        samples: PathBuf,
        /// Design speed, km/h; the table's top is 10 km/h above it unless a
        /// faster sample exists.
        #[arg(long, env = "WZOPT_DESIGN_SPEED", conflicts_with = "v_max")]
        design_speed: Option<f64>,
        /// Explicit upper end of the smooth range, km/h.
        #[arg(long, env = "WZOPT_V_MAX")]
        v_max: Option<f64>,
        #[arg(long, env = "WZOPT_OUT")]
        out: Option<PathBuf>,
    },
    /// Turn an observation store into a daily demand profile.
    Convert {
        #[arg(long, env = "WZOPT_STORE")]
        store: PathBuf,
        /// Quantization table CSV.
        #[arg(long, env = "WZOPT_TABLE")]
        table: PathBuf,
        /// Speed-flow model parameters CSV.
        #[arg(long, env = "WZOPT_MODEL")]
        model: PathBuf,
        /// Row of the model file to use, by design speed. Required when the
        /// file has more than one row.
        #[arg(long, env = "WZOPT_DESIGN_SPEED")]
        design_speed: Option<f64>,
        #[arg(long, env = "WZOPT_LANES")]
        lanes: u32,
        /// Profile step in minutes.
        #[arg(long, env = "WZOPT_GRID_MIN", default_value_t = 15)]
        grid_min: u32,
        /// Local time offset from UTC in seconds.
        #[arg(
            long,
            env = "WZOPT_UTC_OFFSET",
            default_value_t = 0,
            allow_hyphen_values = true
        )]
        utc_offset: i32,
        /// Only use points whose id starts with this prefix.
        #[arg(long, env = "WZOPT_POINT")]
        point: Option<String>,
        #[arg(long, env = "WZOPT_OUT")]
        out: Option<PathBuf>,
    },
    /// Delay report for one start time.
    Delay {
        #[arg(long, env = "WZOPT_CONFIG")]
        config: PathBuf,
        /// Start time `HH:MM`; overrides the scenario file.
        #[arg(long)]
        start: Option<String>,
        /// Work duration in hours; overrides the scenario file.
        #[arg(long, env = "WZOPT_DURATION")]
        duration: Option<f64>,
        /// Per-step CSV output.
        #[arg(long, env = "WZOPT_OUT")]
        out: Option<PathBuf>,
    },
    /// Sweep start times and report the least-delay window.
    Optimize {
        #[arg(long, env = "WZOPT_CONFIG")]
        config: PathBuf,
        #[arg(long, env = "WZOPT_GRID_MIN", default_value_t = 15)]
        grid_min: u32,
        /// Work duration in hours; overrides the scenario file.
        #[arg(long, env = "WZOPT_DURATION")]
        duration: Option<f64>,
        /// Tie tolerance as a fraction of the minimum.
        #[arg(long, env = "WZOPT_TIE", default_value_t = 0.01)]
        tie: f64,
        /// Curve CSV output.
        #[arg(long, env = "WZOPT_OUT")]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TransportKind {
    Live,
    Replay,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match path {
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))
                    .map_err(Failure::Runtime)?;
            }
            let f = File::create(p)
                .with_context(|| format!("creating {}", p.display()))
                .map_err(Failure::Runtime)?;
            Ok(Box::new(BufWriter::new(f)))
        }
    }
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(Failure::Input)
}

fn input<E: std::error::Error + Send + Sync + 'static>(
    what: &str,
) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Input(anyhow::Error::new(e).context(what.to_string()))
}

fn runtime<E: std::error::Error + Send + Sync + 'static>(
    what: &str,
) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Runtime(anyhow::Error::new(e).context(what.to_string()))
}

fn cmd_discretize(roads: &Path, spacing: f64, out: Option<&Path>) -> CmdResult {
    let roads = read_roads_csv(open(roads)?).map_err(input("roads file"))?;
    let mut nets = Vec::with_capacity(roads.len());
    for r in roads {
        let pts = discretize(&r.line, spacing).map_err(input("discretize"))?;
        info!("{}: {:.1} m, {} points", r.id, r.line.length_m(), pts.len());
        nets.push((r.id, pts));
    }
    let n = write_point_net_csv(output(out)?, &nets).map_err(runtime("writing points"))?;
    info!("wrote {n} points");
    Ok(())
}

fn parse_duration(s: &str) -> Result<Option<i64>, Failure> {
    if s.eq_ignore_ascii_case("continuous") {
        return Ok(None);
    }
    let secs: i64 = s.parse().map_err(|_| {
        Failure::Config(anyhow!(
            "duration must be seconds or `continuous`, got `{s}`"
        ))
    })?;
    if secs <= 0 {
        return Err(Failure::Config(anyhow!("duration must be positive")));
    }
    Ok(Some(secs))
}

fn cmd_collect(
    config: &Path,
    kind: TransportKind,
    duration: &str,
    period: Option<u32>,
    out: Option<&Path>,
    start_ms: Option<i64>,
) -> CmdResult {
    let cfg = CollectConfig::load(config)?;
    let duration = parse_duration(duration)?;
    let template = cfg
        .url_template
        .as_deref()
        .ok_or_else(|| Failure::Config(anyhow!("url_template is not set")))?;
    let template = UrlTemplate::new(template).map_err(|e| Failure::Config(e.into()))?;
    let profile = ProviderProfile::by_name(&cfg.profile).map_err(|e| Failure::Config(e.into()))?;
    let period = period.unwrap_or(cfg.period_s);

    let points = read_point_net_csv(open(&cfg.points)?).map_err(input("points file"))?;
    let jobs = points
        .into_iter()
        .map(|(id, p)| {
            let tile = geo_to_tile(p, cfg.zoom, &profile)
                .with_context(|| format!("point {id}"))
                .map_err(Failure::Input)?;
            FetchJob::new(id, tile, template.clone(), period).map_err(|e| Failure::Config(e.into()))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let transport: Box<dyn Transport> = match kind {
        TransportKind::Live => Box::new(
            HttpTransport::new(
                Duration::from_millis(cfg.min_gap_ms),
                Duration::from_secs(cfg.timeout_s),
            )
            .map_err(|e| Failure::Config(e.into()))?,
        ),
        TransportKind::Replay => {
            let dir = cfg
                .replay_dir
                .as_deref()
                .ok_or_else(|| Failure::Config(anyhow!("replay_dir is not set")))?;
            Box::new(ReplayTransport::open(dir).map_err(input("replay fixture"))?)
        }
    };
    let clock: Box<dyn Clock> = match start_ms {
        Some(t) => Box::new(ManualClock::new(t)),
        None => Box::new(SystemClock),
    };
    let store_dir = out.map(Path::to_path_buf).unwrap_or(cfg.store_dir.clone());
    let mut store =
        ObservationStore::open(&store_dir, &cfg.deployment).map_err(runtime("store"))?;
    let opts = CollectorOptions {
        radius_px: cfg.radius_px,
        rules: cfg.rules,
        until_ms: duration.map(|d| clock.now_ms() + d * 1000),
    };
    let stop = AtomicBool::new(false);
    let stats = run_collector(
        &jobs,
        transport.as_ref(),
        &mut store,
        clock.as_ref(),
        &opts,
        &stop,
    )
    .map_err(runtime("collector"))?;
    if stats.failures > 0 {
        warn!(
            "{} fetches failed and were stored as unknown",
            stats.failures
        );
    }
    println!(
        "{} observations over {} ticks ({} unknown) in {}",
        stats.observations,
        stats.ticks,
        stats.unknown,
        store_dir.display()
    );
    Ok(())
}

fn cmd_calibrate(
    samples: &Path,
    design_speed: Option<f64>,
    v_max: Option<f64>,
    out: Option<&Path>,
) -> CmdResult {
    let samples = read_samples_csv(open(samples)?).map_err(input("samples file"))?;
    let v_max = match (v_max, design_speed) {
        (Some(v), _) => v,
        (None, Some(d)) => default_v_max(d, &samples),
        (None, None) => {
            return Err(Failure::Config(anyhow!("give --design-speed or --v-max")));
        }
    };
    let fits = fit_status_gaussians(&samples).map_err(input("calibration"))?;
    let table = build_table(&fits, v_max).map_err(input("calibration"))?;
    for g in &fits {
        info!(
            "{}: mean {:.3} std {:.3} n {}",
            g.status, g.mean, g.std, g.n
        );
    }
    let b = table.boundaries();
    eprintln!("boundaries: {:.2} / {:.2} / {:.2} km/h", b[0], b[1], b[2]);
    table
        .write_csv(output(out)?)
        .map_err(runtime("writing table"))
}

#[allow(clippy::too_many_arguments)]
fn cmd_convert(
    store: &Path,
    table: &Path,
    model: &Path,
    design_speed: Option<f64>,
    lanes: u32,
    grid_min: u32,
    utc_offset: i32,
    point: Option<&str>,
    out: Option<&Path>,
) -> CmdResult {
    if lanes == 0 {
        return Err(Failure::Config(anyhow!("--lanes must be positive")));
    }
    let table = QuantizationTable::read_csv(open(table)?).map_err(input("table file"))?;
    let rows = read_model_params_csv(open(model)?).map_err(input("model file"))?;
    let row = match design_speed {
        Some(v) => rows
            .iter()
            .find(|r| r.design_speed_kmh == v)
            .ok_or_else(|| Failure::Config(anyhow!("no model row for design speed {v}")))?,
        None if rows.len() == 1 => &rows[0],
        None => {
            return Err(Failure::Config(anyhow!(
                "model file has {} rows; pick one with --design-speed",
                rows.len()
            )))
        }
    };
    let params = row.params();
    let mut obs = read_store(store).map_err(input("store"))?;
    if let Some(prefix) = point {
        obs.retain(|o| o.point_id.starts_with(prefix));
    }
    let profile = aggregate_daily_profile(&obs, grid_min * 60, &table, utc_offset)
        .map_err(input("aggregate"))?;
    let missing = profile.missing();
    if !missing.is_empty() {
        warn!(
            "{} of {} bins had no data and were interpolated",
            missing.len(),
            profile.speeds.len()
        );
    }
    let speeds = profile.filled().map_err(input("aggregate"))?;
    let mut wtr = output(out)?;
    let write = |w: &mut dyn Write| -> io::Result<()> {
        writeln!(w, "step_index,Q_pcu_per_h")?;
        for (i, u) in speeds.iter().enumerate() {
            let v = invert_practical(*u, &params, DEFAULT_X_MAX).map_err(io::Error::other)?;
            writeln!(w, "{i},{}", v * f64::from(lanes))?;
        }
        w.flush()
    };
    write(&mut *wtr).map_err(runtime("writing demand"))?;
    info!("profile over {} days", profile.days);
    Ok(())
}

fn cmd_delay(
    config: &Path,
    start: Option<&str>,
    duration: Option<f64>,
    out: Option<&Path>,
) -> CmdResult {
    let sc = Scenario::load(config)?;
    let start = match start {
        Some(s) => config::parse_hhmm(s).map_err(Failure::Config)?,
        None => sc
            .start
            .ok_or_else(|| Failure::Config(anyhow!("no start time in scenario or --start")))?,
    };
    let duration = duration.unwrap_or(sc.template.duration_h);
    let r = evaluate_start(
        &sc.template,
        &sc.template.demand,
        duration,
        start,
        sc.max_horizon_days,
    )
    .map_err(runtime("delay"))?;
    if let Some(p) = out {
        write_steps_csv(output(Some(p))?, &r.steps).map_err(runtime("writing steps"))?;
    }
    println!("start {}  duration {duration} h", format_hhmm(start));
    println!("total delay      {:.3} veh-h", r.total);
    println!("baseline delay   {:.3} veh-h", r.baseline_total);
    println!("added delay      {:.3} veh-h", r.added);
    Ok(())
}

fn cmd_optimize(
    config: &Path,
    grid_min: u32,
    duration: Option<f64>,
    tie: f64,
    out: Option<&Path>,
) -> CmdResult {
    let sc = Scenario::load(config)?;
    if grid_min == 0 {
        return Err(Failure::Config(anyhow!("--grid-min must be positive")));
    }
    if tie.is_nan() || tie < 0.0 {
        return Err(Failure::Config(anyhow!("--tie must be non-negative")));
    }
    let mut spec = SweepSpec::new(
        sc.template.demand.clone(),
        duration.unwrap_or(sc.template.duration_h),
        grid_min,
    );
    spec.tie = TieTolerance::Relative(tie);
    spec.max_horizon_days = sc.max_horizon_days;
    let result = sweep(&spec, &sc.template).map_err(|e| match e {
        wzopt::sweep::SweepError::AllFailed(_) => Failure::Runtime(e.into()),
        _ => Failure::Input(e.into()),
    })?;
    if let Some(p) = out {
        emit_curve(output(Some(p))?, &result).map_err(runtime("writing curve"))?;
    }
    let failed = result.curve.iter().filter(|c| c.added.is_err()).count();
    if failed > 0 {
        warn!("{failed} candidates failed; see the note column");
    }
    let (lo, hi) = result.window_bounds();
    let best: Vec<String> = result.best.iter().map(|m| format_hhmm(*m)).collect();
    println!("best start       {}", best.join(", "));
    println!("min added delay  {:.3} veh-h", result.min_added);
    println!("optimal window   {}-{}", format_hhmm(lo), format_hhmm(hi));
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    match cli.cmd {
        Command::Discretize {
            roads,
            spacing,
            out,
        } => cmd_discretize(&roads, spacing, out.as_deref()),
        Command::Collect {
            config,
            transport,
            duration,
            period,
            out,
            start_ms,
        } => cmd_collect(
            &config,
            transport,
            &duration,
            period,
            out.as_deref(),
            start_ms,
        ),
        Command::Calibrate {
            samples,
            design_speed,
            v_max,
            out,
        } => cmd_calibrate(&samples, design_speed, v_max, out.as_deref()),
        Command::Convert {
            store,
            table,
            model,
            design_speed,
            lanes,
            grid_min,
            utc_offset,
            point,
            out,
        } => cmd_convert(
            &store,
            &table,
            &model,
            design_speed,
            lanes,
            grid_min,
            utc_offset,
            point.as_deref(),
            out.as_deref(),
        ),
        Command::Delay {
            config,
            start,
            duration,
            out,
        } => cmd_delay(&config, start.as_deref(), duration, out.as_deref()),
        Command::Optimize {
            config,
            grid_min,
            duration,
            tie,
            out,
        } => cmd_optimize(&config, grid_min, duration, tie, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
