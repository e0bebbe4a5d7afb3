//! Subcommand implementations.

use crate::args::{parse_list, DeltaArgs, GeometryArgs, NoiseArg, TuningArgs};
use crate::svg::{Chart, Series, Style};
use clap::Args;
use gridless_doa::benchmark::{run_benchmark, BenchmarkResult, BenchmarkSpec, DEFAULT_TRIALS};
use gridless_doa::geometry::ArrayGeometry;
use gridless_doa::io::{self, SCHEMA_VERSION};
use gridless_doa::manifold::{
    eval_trig_poly, fs_coefficients, min_dft_length, scan_bandwidth, sensor_spectrum_db,
    BANDWIDTH_INTERCEPT, BANDWIDTH_LAW_MIN_RADIUS, BANDWIDTH_SLOPE, DEFAULT_GAMMA_DB,
    DEFAULT_OVERSAMPLE,
};
use gridless_doa::pipeline::{cbf_spectrum, estimate, EstimatorConfig, SourceEstimate};
use gridless_doa::simulate::{synth_snapshot, GeometrySpec, NoiseSpec, Scenario, Source};
use gridless_doa::{DoaError, Result};
use serde::Serialize;
use serde_json::json;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

/// Grid for truncation errors in the DFT-length table.
const TRUNCATION_GRID: usize = 4096;
/// Extra bins shown beyond the widest bandwidth in spectrum output.
const SPECTRUM_PAD: usize = 16;

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Directory for result files; created if missing.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out_dir: PathBuf,
    /// Also write SVG plots.
    #[arg(long)]
    pub svg: bool,
}

impl OutputArgs {
    fn prepare(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out_dir)?;
        Ok(&self.out_dir)
    }
}

fn config_line(config: &serde_json::Value) -> String {
    format!("gdoa config {config}")
}

fn write_svg(path: &Path, mut chart: Chart, config: &serde_json::Value) -> Result<()> {
    chart.metadata = config.to_string();
    fs::write(path, chart.render())?;
    Ok(())
}

/// Resolves a relative CSV geometry path against `base`.
fn rebase(spec: GeometrySpec, base: Option<&Path>) -> GeometrySpec {
    match (spec, base) {
        (GeometrySpec::Csv { path }, Some(dir)) if path.is_relative() => GeometrySpec::Csv {
            path: dir.join(path),
        },
        (spec, _) => spec,
    }
}

fn geometry_points(g: &ArrayGeometry) -> Vec<[f64; 2]> {
    g.sensors()
        .iter()
        .map(|s| {
            let (x, y) = s.xy();
            [x, y]
        })
        .collect()
}

// ---------------------------------------------------------------- analyze

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[arg(long, value_name = "DB", allow_negative_numbers = true, default_value_t = DEFAULT_GAMMA_DB)]
    pub gamma_db: f64,
    /// Additional DFT length to include in the table.
    #[arg(long = "P", value_name = "P")]
    pub p: Option<usize>,
    /// Length of the long DFT used to measure bandwidths.
    #[arg(long, default_value_t = DEFAULT_OVERSAMPLE)]
    pub oversample: usize,
    /// Write the per-sensor Fourier power spectrum.
    #[arg(long)]
    pub spectrum: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Serialize)]
struct SensorRow {
    index: usize,
    x: f64,
    y: f64,
    radius: f64,
    azimuth_deg: f64,
    n: usize,
    p: usize,
}

#[derive(Debug, Serialize)]
struct DftRow {
    p: usize,
    n: usize,
    /// Largest `|sum_k a_k e^{jk theta} - a*(theta)|` over sensors and grid.
    max_truncation_error: f64,
}

#[derive(Debug, Serialize)]
struct SpectrumRow {
    sensor: usize,
    k: i64,
    power_db: f64,
}

fn truncation_error(g: &ArrayGeometry, p: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for s in g.sensors() {
        let h = fs_coefficients(s, p)?;
        for i in 0..TRUNCATION_GRID {
            let t = -PI + 2.0 * PI * i as f64 / TRUNCATION_GRID as f64;
            worst = worst.max((eval_trig_poly(&h, t) - s.response(t).conj()).norm());
        }
    }
    Ok(worst)
}

pub fn analyze_geometry(args: &AnalyzeArgs) -> Result<()> {
    let spec = args.geometry.require()?;
    let g = spec.build()?;
    let out = args.output.prepare()?;
    let config = json!({
        "command": "analyze-geometry",
        "schema_version": SCHEMA_VERSION,
        "geometry": spec,
        "gamma_db": args.gamma_db,
        "oversample": args.oversample,
        "extra_p": args.p,
    });
    let comment = config_line(&config);

    let p_min = min_dft_length(g.max_radius(), args.gamma_db)?;
    let law = (g.max_radius() >= BANDWIDTH_LAW_MIN_RADIUS)
        .then(|| BANDWIDTH_SLOPE * g.max_radius() + BANDWIDTH_INTERCEPT);
    let mut sensors = Vec::with_capacity(g.len());
    for (i, s) in g.sensors().iter().enumerate() {
        let n = scan_bandwidth(s, args.gamma_db, args.oversample)?;
        let (x, y) = s.xy();
        sensors.push(SensorRow {
            index: i,
            x,
            y,
            radius: s.radius(),
            azimuth_deg: s.azimuth().to_degrees(),
            n,
            p: 2 * n + 1,
        });
    }
    let mut lengths: Vec<usize> = (0..5).map(|i| p_min + 2 * i).collect();
    if let Some(p) = args.p {
        if p % 2 == 0 {
            return Err(DoaError::InvalidArgument(format!(
                "--P must be odd, got {p}"
            )));
        }
        lengths.push(p);
    }
    lengths.sort_unstable();
    lengths.dedup();
    let mut table = Vec::new();
    for &p in &lengths {
        table.push(DftRow {
            p,
            n: p / 2,
            max_truncation_error: truncation_error(&g, p)?,
        });
    }

    println!("sensors        {}", g.len());
    println!("max radius     {:.4} wavelengths", g.max_radius());
    println!("minimum P      {p_min}  (N = {})", p_min / 2);
    if let Some(l) = law {
        println!("linear law     {l:.2}");
    }
    println!("{:>6} {:>6} {:>16}", "P", "N", "trunc. error");
    for r in &table {
        println!("{:>6} {:>6} {:>16.3e}", r.p, r.n, r.max_truncation_error);
    }

    io::write_rows(&out.join("bandwidth.csv"), &sensors, &comment)?;
    io::write_rows(&out.join("dft_lengths.csv"), &table, &comment)?;
    io::write_json(
        &out.join("geometry_summary.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "config": config,
            "num_sensors": g.len(),
            "max_radius": g.max_radius(),
            "p": p_min,
            "n": p_min / 2,
            "linear_law": law,
            "dft_lengths": table,
            "sensors": sensors,
        }),
    )?;

    let n_max = sensors.iter().map(|s| s.n).max().unwrap_or(0);
    let show = (n_max + SPECTRUM_PAD) as i64;
    let mut spectra = Vec::new();
    if args.spectrum || args.output.svg {
        for s in g.sensors() {
            let db = sensor_spectrum_db(s, args.oversample)?;
            let half = ((db.len() - 1) / 2) as i64;
            let lim = show.min(half);
            spectra.push(
                ((-lim)..=lim)
                    .map(|k| (k, db[(k + half) as usize]))
                    .collect::<Vec<_>>(),
            );
        }
    }
    if args.spectrum {
        let rows: Vec<SpectrumRow> = spectra
            .iter()
            .enumerate()
            .flat_map(|(i, sp)| {
                sp.iter().map(move |&(k, power_db)| SpectrumRow {
                    sensor: i,
                    k,
                    power_db,
                })
            })
            .collect();
        io::write_rows(&out.join("spectrum.csv"), &rows, &comment)?;
    }
    if args.output.svg {
        let far = (0..g.len())
            .max_by(|&a, &b| g.sensors()[a].radius().total_cmp(&g.sensors()[b].radius()))
            .unwrap_or(0);
        let pts: Vec<(f64, f64)> = spectra[far]
            .iter()
            .map(|&(k, db)| (k as f64, db.max(-300.0)))
            .collect();
        let thr = vec![
            (pts[0].0, -args.gamma_db.abs()),
            (pts[pts.len() - 1].0, -args.gamma_db.abs()),
        ];
        let chart = Chart::new("Fourier power of the farthest sensor", "k", "|a_k|^2 (dB)")
            .push(Series::new(
                format!("radius {:.2}", g.sensors()[far].radius()),
                pts,
                Style::Line,
            ))
            .push(Series::new("threshold", thr, Style::Line));
        write_svg(&out.join("spectrum.svg"), chart, &config)?;
        let mut chart =
            Chart::new("Array geometry", "x (wavelengths)", "y (wavelengths)").push(Series::new(
                "sensors",
                geometry_points(&g).iter().map(|p| (p[0], p[1])).collect(),
                Style::Scatter,
            ));
        chart.square = true;
        write_svg(&out.join("geometry.svg"), chart, &config)?;
    }
    Ok(())
}

// --------------------------------------------------------------- estimate

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Scenario TOML to synthesize and estimate.
    #[arg(long, value_name = "TOML", conflicts_with = "snapshot")]
    pub scenario: Option<PathBuf>,
    /// Measured snapshot as `re,im` rows.
    #[arg(long, value_name = "CSV")]
    pub snapshot: Option<PathBuf>,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    #[command(flatten)]
    pub delta: DeltaArgs,
    /// Seed of the pruning fill angles.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Step of the CBF grid, degrees.
    #[arg(long, default_value_t = 0.1)]
    pub cbf_step_deg: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Serialize)]
struct DoaRow {
    doa_deg: f64,
    re: f64,
    im: f64,
    magnitude: f64,
    phase_deg: f64,
}

#[derive(Debug, Serialize)]
struct CbfRow {
    angle_deg: f64,
    cbf: f64,
}

pub fn estimate_cmd(args: &EstimateArgs) -> Result<SourceEstimate> {
    let (geometry, geometry_spec, y, scenario, sigma) = match (&args.scenario, &args.snapshot) {
        (Some(path), _) => {
            let mut sc = io::read_scenario(path)?;
            sc.geometry = rebase(sc.geometry, path.parent());
            if let Some(g) = args.geometry.spec()? {
                sc.geometry = g;
            }
            let snap = synth_snapshot(&sc)?;
            (
                snap.geometry,
                sc.geometry.clone(),
                snap.y,
                Some(sc),
                Some(snap.sigma_n),
            )
        }
        (None, Some(path)) => {
            let spec = args.geometry.require()?;
            let g = spec.build()?;
            let y = io::read_snapshot_csv(path)?;
            (g, spec, y, None, None)
        }
        (None, None) => {
            return Err(DoaError::InvalidArgument(
                "give --scenario or --snapshot".into(),
            ));
        }
    };
    let mut cfg = args.tuning.config()?;
    args.delta
        .apply(&mut cfg, sigma, args.tuning.config.is_some())?;
    if let Some(seed) = args.seed {
        cfg.fill_seed = seed;
    }
    if !(args.cbf_step_deg > 0.0 && args.cbf_step_deg <= 10.0) {
        return Err(DoaError::InvalidArgument(
            "--cbf-step-deg must lie in (0, 10]".into(),
        ));
    }

    let est = estimate(&y, &geometry, &cfg)?;
    let out = args.output.prepare()?;
    let config = json!({
        "command": "estimate",
        "schema_version": SCHEMA_VERSION,
        "estimator": cfg,
        "geometry": geometry_spec,
        "scenario": scenario,
        "snapshot": args.snapshot,
        "resolved_delta": est.diagnostics.delta,
        "resolved_beta": est.diagnostics.beta,
    });
    let comment = config_line(&config);

    let rows: Vec<DoaRow> = est
        .doas_deg
        .iter()
        .zip(&est.amplitudes)
        .map(|(&d, a)| DoaRow {
            doa_deg: d,
            re: a.re,
            im: a.im,
            magnitude: a.norm(),
            phase_deg: a.arg().to_degrees(),
        })
        .collect();
    println!("{:>10} {:>10} {:>10}", "DOA (deg)", "|s|", "phase");
    for r in &rows {
        println!(
            "{:>10.3} {:>10.4} {:>10.2}",
            r.doa_deg, r.magnitude, r.phase_deg
        );
    }
    println!(
        "candidates {}, kept {}, P = {}",
        est.diagnostics.pre_prune_count, est.diagnostics.post_prune_count, est.diagnostics.p
    );

    let truth = scenario.as_ref().map(|s| s.doas_deg());
    io::write_json(
        &out.join("result.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "config": config,
            "geometry_xy": geometry_points(&geometry),
            "truth_deg": truth,
            "sources": rows,
            "estimate": est,
        }),
    )?;
    io::write_rows(&out.join("doas.csv"), &rows, &comment)?;
    io::write_roots_csv(&out.join("roots.csv"), &est.artifacts.roots, &comment)?;
    io::write_profile_csv(
        &out.join("prune_profile.csv"),
        &est.artifacts.prune_profile,
        est.artifacts.num_candidates,
        &comment,
    )?;
    let n = (360.0 / args.cbf_step_deg).round() as usize;
    let grid: Vec<f64> = (0..n)
        .map(|i| (-180.0 + args.cbf_step_deg * (i + 1) as f64).to_radians())
        .collect();
    let cbf = cbf_spectrum(&y, &geometry, &grid);
    let cbf_rows: Vec<CbfRow> = grid
        .iter()
        .zip(&cbf)
        .map(|(&t, &v)| CbfRow {
            angle_deg: t.to_degrees(),
            cbf: v,
        })
        .collect();
    io::write_rows(&out.join("cbf.csv"), &cbf_rows, &comment)?;

    if args.output.svg {
        let roots = &est.artifacts.roots;
        let near: Vec<(f64, f64)> = roots
            .roots
            .iter()
            .copied()
            .filter(|r| (r.0.hypot(r.1) - 1.0).abs() <= cfg.circle_tol)
            .collect();
        let far: Vec<(f64, f64)> = roots
            .roots
            .iter()
            .copied()
            .filter(|r| (r.0.hypot(r.1) - 1.0).abs() > cfg.circle_tol && r.0.hypot(r.1) < 3.0)
            .collect();
        let mut chart = Chart::new("Roots of 1 - |b(z)|^2", "Re z", "Im z")
            .push(Series::new("roots", far, Style::Scatter))
            .push(Series::new("near unit circle", near, Style::Scatter));
        chart.square = true;
        chart.unit_circle = true;
        chart.x_range = Some((-1.6, 1.6));
        chart.y_range = Some((-1.6, 1.6));
        write_svg(&out.join("roots.svg"), chart, &config)?;

        let peak = cbf
            .iter()
            .copied()
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let amax = rows
            .iter()
            .map(|r| r.magnitude)
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut chart = Chart::new("CBF and estimates", "angle (deg)", "normalized magnitude")
            .push(Series::new(
                "CBF",
                cbf_rows
                    .iter()
                    .map(|r| (r.angle_deg, r.cbf / peak))
                    .collect(),
                Style::Line,
            ))
            .push(Series::new(
                "estimate",
                rows.iter()
                    .map(|r| (r.doa_deg, r.magnitude / amax))
                    .collect(),
                Style::Stem,
            ));
        if let Some(t) = &truth {
            chart = chart.push(Series::new(
                "truth",
                t.iter().map(|&d| (d, 1.0)).collect(),
                Style::Scatter,
            ));
        }
        chart.x_range = Some((-180.0, 180.0));
        chart.y_range = Some((0.0, 1.1));
        write_svg(&out.join("spectrum.svg"), chart, &config)?;

        if !est.artifacts.prune_profile.is_empty() {
            let nc = est.artifacts.num_candidates;
            let prof = &est.artifacts.prune_profile;
            let mut chart = Chart::new("Pruning coefficients", "angle (deg)", "|x|")
                .push(Series::new(
                    "fill",
                    prof[nc..]
                        .iter()
                        .map(|&(a, m)| (a.to_degrees(), m))
                        .collect(),
                    Style::Stem,
                ))
                .push(Series::new(
                    "candidates",
                    prof[..nc]
                        .iter()
                        .map(|&(a, m)| (a.to_degrees(), m))
                        .collect(),
                    Style::Stem,
                ));
            chart.x_range = Some((-180.0, 180.0));
            write_svg(&out.join("prune_profile.svg"), chart, &config)?;
        }
    }
    Ok(est)
}

// --------------------------------------------------------------- simulate

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Scenario TOML; other scenario flags override it.
    #[arg(long, value_name = "TOML")]
    pub scenario: Option<PathBuf>,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// Source DOAs in degrees.
    #[arg(long, value_name = "DEG,...", allow_negative_numbers = true)]
    pub doas: Option<String>,
    /// Source magnitudes, default 1.
    #[arg(long, value_name = "MAG,...")]
    pub magnitudes: Option<String>,
    /// Source phases in degrees, default 0.
    #[arg(long, value_name = "DEG,...", allow_negative_numbers = true)]
    pub phases: Option<String>,
    /// Per-sensor SNR in dB.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "sigma_n")]
    pub snr: Option<f64>,
    /// Per-sensor noise standard deviation.
    #[arg(long)]
    pub sigma_n: Option<f64>,
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn per_source(list: &Option<String>, flag: &str, n: usize, default: f64) -> Result<Vec<f64>> {
    match list {
        None => Ok(vec![default; n]),
        Some(s) => {
            let v = parse_list(s, flag)?;
            if v.len() != n {
                return Err(DoaError::Parse(format!(
                    "{flag}: expected {n} values, got {}",
                    v.len()
                )));
            }
            Ok(v)
        }
    }
}

pub fn simulate_cmd(args: &SimulateArgs) -> Result<Scenario> {
    let mut sc = match &args.scenario {
        Some(path) => {
            let mut sc = io::read_scenario(path)?;
            sc.geometry = rebase(sc.geometry, path.parent());
            sc
        }
        None => Scenario {
            geometry: args.geometry.require()?,
            sources: Vec::new(),
            noise: NoiseSpec::default(),
            seed: 0,
        },
    };
    if let Some(g) = args.geometry.spec()? {
        sc.geometry = g;
    }
    if let Some(d) = &args.doas {
        let doas = parse_list(d, "--doas")?;
        let mags = per_source(&args.magnitudes, "--magnitudes", doas.len(), 1.0)?;
        let phases = per_source(&args.phases, "--phases", doas.len(), 0.0)?;
        sc.sources = (0..doas.len())
            .map(|i| Source::new(doas[i], mags[i], phases[i]))
            .collect();
    } else if args.scenario.is_none() {
        return Err(DoaError::InvalidArgument(
            "give --doas or --scenario".into(),
        ));
    }
    if args.snr.is_some() || args.sigma_n.is_some() {
        sc.noise.snr_db = args.snr;
        sc.noise.sigma_n = args.sigma_n;
    }
    if let Some(n) = args.noise {
        sc.noise.kind = n.into();
    }
    if let Some(s) = args.seed {
        sc.seed = s;
    }
    let snap = synth_snapshot(&sc)?;
    let out = args.output.prepare()?;
    let config = json!({
        "command": "simulate",
        "schema_version": SCHEMA_VERSION,
        "scenario": sc,
        "sigma_n": snap.sigma_n,
    });
    let comment = config_line(&config);
    io::write_scenario(&out.join("scenario.toml"), &sc)?;
    io::write_snapshot_csv(&out.join("snapshot.csv"), &snap.y, &comment)?;
    io::write_geometry_csv(&out.join("geometry.csv"), &snap.geometry, &comment)?;
    io::write_json(
        &out.join("simulation.json"),
        &json!({ "schema_version": SCHEMA_VERSION, "config": config }),
    )?;
    println!(
        "{} sensors, {} sources, sigma_n = {:.4e}",
        snap.geometry.len(),
        sc.sources.len(),
        snap.sigma_n
    );
    if args.output.svg {
        let mut chart =
            Chart::new("Array geometry", "x (wavelengths)", "y (wavelengths)").push(Series::new(
                "sensors",
                geometry_points(&snap.geometry)
                    .iter()
                    .map(|p| (p[0], p[1]))
                    .collect(),
                Style::Scatter,
            ));
        chart.square = true;
        write_svg(&out.join("geometry.svg"), chart, &config)?;
    }
    Ok(sc)
}

// -------------------------------------------------------------- benchmark

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    /// Benchmark TOML; flags override it.
    #[arg(long, value_name = "TOML")]
    pub spec: Option<PathBuf>,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[command(flatten)]
    pub tuning: TuningArgs,
    /// SNR grid in dB.
    #[arg(long, value_name = "DB,...", allow_negative_numbers = true)]
    pub snr: Option<String>,
    /// Noise-bound multipliers of `sigma_n sqrt(M)`.
    #[arg(long, value_name = "MULT,...")]
    pub delta_mult: Option<String>,
    /// DOA separation of the source pair, degrees.
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,
    /// Worker threads, default all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Serialize)]
struct TrialRow {
    snr_db: f64,
    delta_multiplier: f64,
    trial: usize,
    seed: u64,
    true_doas_deg: String,
    est_doas_deg: String,
    errors_deg: String,
    failure: String,
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.6}"))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn benchmark_cmd(args: &BenchmarkArgs) -> Result<BenchmarkResult> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let mut s: BenchmarkSpec = toml::from_str(&text)
                .map_err(|e| DoaError::Parse(format!("{}: {e}", path.display())))?;
            s.geometry = rebase(s.geometry, path.parent());
            s
        }
        None => BenchmarkSpec {
            geometry: args.geometry.require()?,
            snr_grid: vec![0.0, 10.0, 20.0, 30.0, 40.0],
            delta_multipliers: vec![1.0],
            separation_deg: 30.0,
            n_trials: DEFAULT_TRIALS,
            seed: 0,
            noise: Default::default(),
            estimator: EstimatorConfig::default(),
        },
    };
    if let Some(g) = args.geometry.spec()? {
        spec.geometry = g;
    }
    if args.tuning.config.is_some() {
        spec.estimator = args.tuning.config()?;
    } else {
        args.tuning.apply(&mut spec.estimator);
    }
    if let Some(s) = &args.snr {
        spec.snr_grid = parse_list(s, "--snr")?;
    }
    if let Some(d) = &args.delta_mult {
        spec.delta_multipliers = parse_list(d, "--delta-mult")?;
    }
    if let Some(s) = args.separation {
        spec.separation_deg = s;
    }
    if let Some(t) = args.trials {
        spec.n_trials = t;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(n) = args.noise {
        spec.noise = n.into();
    }
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(DoaError::InvalidArgument(
            "--jobs must be at least 1".into(),
        ));
    }

    let result = run_benchmark(&spec, jobs)?;
    let out = args.output.prepare()?;
    let config = json!({
        "command": "benchmark",
        "schema_version": SCHEMA_VERSION,
        "spec": spec,
        "jobs": jobs,
        "matching_rule": result.matching_rule,
    });
    let comment = config_line(&config);

    println!(
        "{:>8} {:>8} {:>10} {:>8} {:>8}",
        "SNR", "delta", "RMSE(deg)", "failed", "found"
    );
    for c in &result.cells {
        println!(
            "{:>8.1} {:>8.2} {:>10.4} {:>8} {:>8.2}",
            c.snr_db, c.delta_multiplier, c.rmse_deg, c.failed, c.mean_detected
        );
    }
    for t in &result.trends {
        println!(
            "delta x{}: Spearman rho(SNR, RMSE) = {:.3}",
            t.delta_multiplier, t.spearman_rho
        );
    }
    let failed: usize = result.cells.iter().map(|c| c.failed).sum();
    if failed > 0 {
        eprintln!("warning: {failed} trial(s) failed; see trials.csv");
    }

    io::write_json(&out.join("benchmark.json"), &result)?;
    io::write_rows(&out.join("benchmark.csv"), &result.cells, &comment)?;
    let trial_rows: Vec<TrialRow> = result
        .trials
        .iter()
        .map(|r| TrialRow {
            snr_db: r.snr_db,
            delta_multiplier: r.delta_multiplier,
            trial: r.trial,
            seed: r.seed,
            true_doas_deg: join(&r.true_doas_deg),
            est_doas_deg: join(&r.est_doas_deg),
            errors_deg: join(&r.errors_deg),
            failure: r.failure.clone().unwrap_or_default(),
        })
        .collect();
    io::write_rows(&out.join("trials.csv"), &trial_rows, &comment)?;
    if args.output.svg {
        let mut chart = Chart::new("RMSE versus SNR", "SNR (dB)", "log10 RMSE (deg)");
        for &dm in &spec.delta_multipliers {
            let pts = result
                .cells
                .iter()
                .filter(|c| c.delta_multiplier == dm)
                .map(|c| (c.snr_db, c.rmse_deg.max(1e-6).log10()))
                .collect();
            chart = chart.push(Series::new(format!("delta = {dm} e_n"), pts, Style::Line));
        }
        write_svg(&out.join("rmse.svg"), chart, &config)?;
    }
    Ok(result)
}
