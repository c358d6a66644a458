//! Command-line front end for the floating-population analysis pipeline.
//!
//! Subcommands form a cached three-stage pipeline plus a generator:
//!   synth     generate a synthetic dataset with known ground truth
//!   ingest    filter devices, smooth towers, cache zone profiles
//!   profiles  export the cached zone profiles as CSV
//!   sweep     per-minute regressions, effect windows, spatial artifacts
//!
//! Exit codes: 0 success, 2 input error, 3 pipeline-state error (missing or
//! stale cache), 4 internal numerical failure.

use citypulse::experiment::{
    self, correlations_to_csv, diffs_at_minute, extract_windows, fits_to_csv, irr_series_csv,
    pokepoint_correlation, run_sweep, windows_to_csv, zone_differences, ModelSpec,
};
use citypulse::filter::DeviceFilterReport;
use citypulse::ingest::{self, StudyConfig};
use citypulse::pipeline::{run_pipeline, CsvEventSource, PipelineInputs};
use citypulse::synth::{SynthDataset, SynthScenario};
use citypulse::{DayGroup, StudyCalendar, TimeGrid, ZoneRecord};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "citypulse", version, about = "Floating-population intervention analysis")]
struct Cli {
    /// Study configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Significance level for effect windows.
    #[arg(long, global = true, default_value_t = 0.05)]
    sig_level: f64,

    /// Regression model: full, minimal, or interactions.
    #[arg(long, global = true, default_value = "full")]
    model: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known ground truth.
    Synth {
        /// Scenario description file (key = value lines).
        scenario: PathBuf,
    },
    /// Filter devices, smooth tower series, and cache zone profiles.
    Ingest,
    /// Export the cached zone profiles as CSV.
    Profiles,
    /// Run per-minute regressions and export effect windows and maps.
    Sweep,
}

/// Error with a process exit code attached.
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    fn state(message: impl Into<String>) -> Self {
        CliError { code: 3, message: message.into() }
    }
}

impl From<citypulse::Error> for CliError {
    fn from(e: citypulse::Error) -> Self {
        use citypulse::Error::*;
        let code = match &e {
            Io { .. } | Geometry { .. } | Ingest(_) | Config(_) => 2,
            _ => 4,
        };
        CliError { code, message: e.to_string() }
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: could not configure {} worker threads: {e}", cli.jobs);
            return ExitCode::from(4);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", cli.out.display())))?;
    match &cli.command {
        Command::Synth { scenario } => cmd_synth(cli, scenario),
        Command::Ingest => cmd_ingest(cli),
        Command::Profiles => cmd_profiles(cli),
        Command::Sweep => cmd_sweep(cli),
    }
}

// -------- run manifest --------

#[derive(Serialize)]
struct StageTime {
    stage: String,
    millis: u128,
}

#[derive(Serialize)]
struct RunManifest {
    tool_version: String,
    command: String,
    config: serde_json::Value,
    input_digests: BTreeMap<String, String>,
    timings: Vec<StageTime>,
    warnings: Vec<String>,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: serde_json::Value::Null,
            input_digests: BTreeMap::new(),
            timings: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
        let start = Instant::now();
        let out = f()?;
        self.timings.push(StageTime { stage: stage.to_string(), millis: start.elapsed().as_millis() });
        Ok(out)
    }

    fn write(&self, out_dir: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::input(format!("manifest serialization: {e}")))?;
        atomic_write(&out_dir.join(format!("manifest_{}.json", self.command)), text.as_bytes())
    }
}

/// Write through a temporary file and rename so readers never observe a
/// half-written file.
fn atomic_write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    let fail = |e: std::io::Error| CliError::input(format!("cannot write {}: {e}", path.display()));
    std::fs::write(&tmp, bytes).map_err(fail)?;
    std::fs::rename(&tmp, path).map_err(fail)
}

fn sha256_file(path: &str) -> CliResult<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::input(format!("cannot read input {path}: {e}")))?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    Ok(hex)
}

fn input_digests(cfg: &StudyConfig) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for path in [&cfg.events_path, &cfg.towers_path, &cfg.zones_path, &cfg.pois_path] {
        if !path.is_empty() {
            out.insert(path.clone(), sha256_file(path)?);
        }
    }
    Ok(out)
}

fn load_config(cli: &Cli) -> CliResult<StudyConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::input("this command requires --config"))?;
    Ok(StudyConfig::from_file(path)?)
}

fn config_snapshot(cfg: &StudyConfig) -> serde_json::Value {
    serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null)
}

// -------- cached pipeline state --------

/// Everything `ingest` computes that later stages reuse. The digests guard
/// against running `profiles` or `sweep` on a cache built from inputs that
/// have since changed.
#[derive(Serialize, Deserialize)]
struct Cache {
    input_digests: BTreeMap<String, String>,
    zones: Vec<ZoneRecord>,
    calendar: StudyCalendar,
    grid: TimeGrid,
    filter_report: DeviceFilterReport,
    profiles: Vec<citypulse::aggregation::ZoneProfile>,
}

fn cache_path(out_dir: &Path) -> PathBuf {
    out_dir.join("cache.json")
}

fn load_cache(cli: &Cli, cfg: &StudyConfig) -> CliResult<Cache> {
    let path = cache_path(&cli.out);
    let bytes = std::fs::read(&path).map_err(|_| {
        CliError::state(format!("no pipeline cache at {}; run ingest first", path.display()))
    })?;
    let cache: Cache = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::state(format!("unreadable cache {}: {e}", path.display())))?;
    let current = input_digests(cfg)?;
    if current != cache.input_digests {
        let changed: Vec<&str> = current
            .iter()
            .filter(|(k, v)| cache.input_digests.get(*k) != Some(v))
            .map(|(k, _)| k.as_str())
            .chain(cache.input_digests.keys().filter(|k| !current.contains_key(*k)).map(|k| k.as_str()))
            .collect();
        return Err(CliError::state(format!(
            "cache is stale: inputs changed since ingest ({}); rerun ingest",
            changed.join(", ")
        )));
    }
    Ok(cache)
}

// -------- subcommands --------

fn cmd_synth(cli: &Cli, scenario_path: &Path) -> CliResult<()> {
    let mut manifest = RunManifest::new("synth");
    manifest
        .input_digests
        .insert(scenario_path.display().to_string(), sha256_file(&scenario_path.display().to_string())?);
    let scenario = SynthScenario::from_file(scenario_path)?;
    let dataset = manifest.time("build", || Ok(SynthDataset::new(scenario)?))?;
    manifest.time("write", || Ok(dataset.write_to_dir(&cli.out)?))?;
    manifest.config = config_snapshot(&dataset.study_config());
    manifest.write(&cli.out)?;
    println!(
        "wrote synthetic dataset: {} zones, {} towers, {} devices, {} dates -> {}",
        dataset.world.zones.len(),
        dataset.world.towers.len(),
        dataset.scenario.devices,
        dataset.world.all_dates.len(),
        cli.out.display()
    );
    Ok(())
}

fn cmd_ingest(cli: &Cli) -> CliResult<()> {
    let mut manifest = RunManifest::new("ingest");
    let cfg = load_config(cli)?;
    manifest.config = config_snapshot(&cfg);
    manifest.input_digests = manifest.time("digest", || input_digests(&cfg))?;

    let zones = manifest.time("read_inputs", || {
        let mut zones = ingest::read_zones(Path::new(&cfg.zones_path))?;
        if !cfg.pois_path.is_empty() {
            let pois = ingest::read_pois(Path::new(&cfg.pois_path))?;
            let points: Vec<_> = pois.iter().map(|p| p.location).collect();
            zones = ingest::attach_pokepoints(&zones, &points)?;
        }
        Ok::<_, CliError>(zones)
    })?;
    let towers = ingest::read_towers(Path::new(&cfg.towers_path))?;
    let selected = ingest::select_zones(&zones, &towers, cfg.max_zone_area_km2)?;
    if selected.is_empty() {
        return Err(CliError::input("no zone passed selection (area, tower, and POI rules)"));
    }
    ingest::validate_zones(&selected)?;
    if selected.len() < zones.len() {
        manifest
            .warnings
            .push(format!("zone selection kept {} of {} zones", selected.len(), zones.len()));
    }

    let source = CsvEventSource { path: PathBuf::from(&cfg.events_path) };
    let inputs = PipelineInputs {
        zones: &selected,
        towers: &towers,
        calendar: &cfg.calendar,
        grid: &cfg.grid,
        lowess_bandwidth_min: cfg.lowess_bandwidth_min,
        min_mib: cfg.min_mib,
        max_mib: cfg.max_mib,
        category_allowlist: cfg.category_allowlist.as_ref(),
    };
    let output = manifest.time("pipeline", || Ok(run_pipeline(&source, &inputs)?))?;

    let cache = Cache {
        input_digests: manifest.input_digests.clone(),
        zones: selected,
        calendar: cfg.calendar.clone(),
        grid: cfg.grid,
        filter_report: output.filter_report.clone(),
        profiles: output.profiles,
    };
    manifest.time("write_cache", || {
        let bytes = serde_json::to_vec(&cache)
            .map_err(|e| CliError::input(format!("cache serialization: {e}")))?;
        atomic_write(&cache_path(&cli.out), &bytes)
    })?;
    atomic_write(&cli.out.join("filter_report.csv"), cache.filter_report.to_csv().as_bytes())?;
    manifest.write(&cli.out)?;
    println!(
        "ingested {} devices ({} kept), {} zone profiles cached -> {}",
        cache.filter_report.input_devices,
        cache.filter_report.kept_devices,
        cache.profiles.len(),
        cli.out.display()
    );
    Ok(())
}

fn cmd_profiles(cli: &Cli) -> CliResult<()> {
    let mut manifest = RunManifest::new("profiles");
    let cfg = load_config(cli)?;
    manifest.config = config_snapshot(&cfg);
    let cache = manifest.time("load_cache", || load_cache(cli, &cfg))?;
    manifest.input_digests = cache.input_digests.clone();

    manifest.time("write", || {
        let mut csv = String::from("zone_id,date,minute,time,value\n");
        for profile in &cache.profiles {
            for (idx, value) in profile.values.iter().enumerate() {
                let minute = cache.grid.minute_at(idx);
                let _ = writeln!(
                    csv,
                    "{},{},{},{:02}:{:02},{:.12e}",
                    profile.zone_id,
                    profile.date,
                    minute,
                    minute / 60,
                    minute % 60,
                    value
                );
            }
        }
        atomic_write(&cli.out.join("profiles.csv"), csv.as_bytes())
    })?;
    manifest.write(&cli.out)?;
    println!("wrote {} zone-date profiles -> {}", cache.profiles.len(), cli.out.display());
    Ok(())
}

fn cmd_sweep(cli: &Cli) -> CliResult<()> {
    let mut manifest = RunManifest::new("sweep");
    let cfg = load_config(cli)?;
    manifest.config = config_snapshot(&cfg);
    let model = ModelSpec::parse(&cli.model)?;
    if !(0.0 < cli.sig_level && cli.sig_level < 1.0) {
        return Err(CliError::input(format!("--sig-level {} out of (0,1)", cli.sig_level)));
    }
    let cache = manifest.time("load_cache", || load_cache(cli, &cfg))?;
    manifest.input_digests = cache.input_digests.clone();

    let sweep = manifest.time("sweep", || {
        Ok(run_sweep(&cache.profiles, &cache.zones, &cache.calendar, &cache.grid, model)?)
    })?;
    if let Some(w) = sweep.warning() {
        manifest.warnings.push(w);
    }
    let windows = extract_windows(&sweep.fits, experiment::POGO, cli.sig_level)?;

    manifest.time("write_fits", || {
        atomic_write(&cli.out.join("fits.csv"), fits_to_csv(&sweep.fits).as_bytes())?;
        atomic_write(&cli.out.join("windows.csv"), windows_to_csv(&windows).as_bytes())?;
        atomic_write(
            &cli.out.join("irr_series.csv"),
            irr_series_csv(&sweep.fits, &[experiment::POGO], cli.sig_level).as_bytes(),
        )
    })?;

    // spatial post-analysis at the strongest minute: the peak of the window
    // with the largest |ln IRR|, or the overall peak when nothing reached
    // significance
    let minute_star = windows
        .iter()
        .max_by(|a, b| {
            let (la, lb) = (a.max_irr.ln().abs(), b.max_irr.ln().abs());
            la.partial_cmp(&lb).unwrap().then(b.start_minute.cmp(&a.start_minute))
        })
        .map(|w| w.minute_of_max)
        .or_else(|| {
            sweep
                .fits
                .iter()
                .filter(|f| f.converged)
                .filter_map(|f| f.coef(experiment::POGO).map(|b| (f.minute, b.abs())))
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
                .map(|(m, _)| m)
        });

    let mut correlations: Vec<(DayGroup, u16, f64, f64)> = Vec::new();
    if let Some(minute) = minute_star {
        for group in [DayGroup::Business, DayGroup::Weekend] {
            let diffs = manifest.time(&format!("differences_{}", group.as_str()), || {
                Ok(zone_differences(&cache.profiles, &cache.zones, &cache.calendar, group, &cache.grid)?)
            });
            let diffs = match diffs {
                Ok(d) => d,
                Err(e) => {
                    // a study with no weekend (or no business) dates still
                    // produces the other group's artifacts
                    manifest.warnings.push(format!(
                        "skipping {} spatial analysis: {}",
                        group.as_str(),
                        e.message
                    ));
                    continue;
                }
            };
            let at_peak = diffs_at_minute(&diffs, minute);
            let geojson = experiment::export_choropleth(&at_peak, &cache.zones)?;
            let name = format!("choropleth_{}_{}.geojson", group.as_str(), minute);
            let text = serde_json::to_string_pretty(&geojson)
                .map_err(|e| CliError::input(format!("geojson serialization: {e}")))?;
            atomic_write(&cli.out.join(name), text.as_bytes())?;
            match pokepoint_correlation(&at_peak, &cache.zones) {
                Ok((r, p)) => correlations.push((group, minute, r, p)),
                Err(citypulse::Error::DegenerateCorrelation) => manifest.warnings.push(format!(
                    "{} correlation at minute {minute} is degenerate (constant series)",
                    group.as_str()
                )),
                Err(e) => return Err(e.into()),
            }
        }
    } else {
        manifest.warnings.push("no converged fit; spatial artifacts skipped".into());
    }
    atomic_write(&cli.out.join("correlations.csv"), correlations_to_csv(&correlations).as_bytes())?;

    manifest.write(&cli.out)?;
    println!(
        "sweep over {} minutes: {} significance windows, {} non-converged -> {}",
        sweep.fits.len(),
        windows.len(),
        sweep.non_converged,
        cli.out.display()
    );
    Ok(())
}
