use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use mmred_core::clred::{
    build_compensator, certify_loop, default_blocks, reduce_closed_loop, CertifyOptions, ClosedLoopDesign,
    ExtractionOutcome, GainRoute, ReductionOptions, VerificationReport,
};
use mmred_core::linalg::{CMat, RMat};
use mmred_core::lti::{negative_feedback, Realization};
use mmred_core::momentmatch::moments_of;
use mmred_core::siggen::SignalGenerator;
use mmred_core::sim::{self, Trajectory, DEFAULT_DT, DEFAULT_THRESHOLD_REL};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bench;
use crate::error::{CliError, CliResult, EXIT_OK};
use crate::io::{
    load_generator, load_json, load_system, parse_point, parse_point_list, points_to_pairs, save_system, to_json,
    write_file, write_json, GeneratorFile, ReferenceSpec, SystemFile,
};

pub const SEED_ENV: &str = "MMRED_SEED";

#[derive(Debug, Parser)]
#[command(name = "mmred", version, about = "Closed-loop moment matching: reduction, certification and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Moments of a system at the modes of a signal generator.
    Moments(MomentsArgs),
    /// Observer-based compensator placing the given closed-loop poles.
    Design(DesignArgs),
    /// Reduce a plant/controller loop and write a design directory.
    Reduce(ReduceArgs),
    /// Simulate a reference-to-output loop and write the trajectory as CSV.
    Simulate(SimulateArgs),
    /// Re-run the tracking checks on a design directory.
    Certify(CertifyArgs),
    /// Bundled end-to-end demonstrations.
    #[command(subcommand)]
    Demo(Demo),
}

#[derive(Debug, Subcommand)]
pub enum Demo {
    /// Four-disk drive: baseline compensator, reduction, certification.
    Fourdisk(DemoArgs),
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    /// System JSON file.
    pub system: PathBuf,
    /// Step generator (moment at 0).
    #[arg(long, group = "gen")]
    pub step: bool,
    /// Ramp generator.
    #[arg(long, group = "gen")]
    pub ramp: bool,
    /// Generator of t^K.
    #[arg(long, value_name = "K", group = "gen")]
    pub poly: Option<usize>,
    /// Generator of cos(Wt).
    #[arg(long, value_name = "W", group = "gen")]
    pub sin: Option<f64>,
    /// Jordan block of order M at POINT; the moments come out as η₀…η_{M−1}.
    #[arg(long, num_args = 2, value_names = ["POINT", "M"], allow_hyphen_values = true, group = "gen")]
    pub jordan: Option<Vec<String>>,
    /// Generator JSON file.
    #[arg(long, value_name = "FILE", group = "gen")]
    pub generator: Option<PathBuf>,
    /// Also write the table as JSON.
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long, value_name = "FILE")]
    pub plant: PathBuf,
    /// 2n closed-loop poles: the first n go to state feedback, the rest to
    /// the observer.
    #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
    pub poles: String,
    /// Controller JSON to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also write the closed reference-to-output loop.
    #[arg(long = "loop-out", value_name = "FILE")]
    pub loop_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    #[arg(long, value_name = "FILE")]
    pub plant: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub controller: PathBuf,
    /// Order of the controller interpolation block.
    #[arg(long, value_name = "N")]
    pub nuc: usize,
    /// Reference: step, ramp, poly K or sin W.
    #[arg(long = "ref", num_args = 1..=2, default_values_t = [String::from("step")])]
    pub reference: Vec<String>,
    /// Interpolation point of the controller block.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub s2: f64,
    /// Seed for the gain search (falls back to MMRED_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "design")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Simulation horizon for certification (default: fifty slowest time
    /// constants, capped at 500 s).
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
    /// Take Π₁ from the homogeneous relation instead of the full loop.
    #[arg(long)]
    pub paper_literal: bool,
    /// Do not restrict G₁ to preserve the plant's relative degree.
    #[arg(long)]
    pub no_relative_degree: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Reference-to-output loop JSON.
    #[arg(long = "loop", value_name = "FILE")]
    pub loop_file: PathBuf,
    #[arg(long = "ref", num_args = 1..=2, default_values_t = [String::from("step")])]
    pub reference: Vec<String>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    /// Tracking threshold relative to ‖θ‖∞.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_REL)]
    pub threshold_rel: f64,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long, value_name = "DIR")]
    pub design: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 4)]
    pub nuc: usize,
    #[arg(long, default_value = "fourdisk-demo")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200.0)]
    pub horizon: f64,
    #[arg(long)]
    pub paper_literal: bool,
}

pub fn run(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Moments(a) => cmd_moments(&a),
        Command::Design(a) => cmd_design(&a),
        Command::Reduce(a) => cmd_reduce(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Certify(a) => cmd_certify(&a),
        Command::Demo(Demo::Fourdisk(a)) => cmd_demo_fourdisk(&a),
    }
}

pub fn resolve_seed(flag: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Usage(format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn pairs(z: &CMat) -> Vec<[f64; 2]> {
    z.iter().map(|v| [v.re, v.im]).collect()
}

fn rows(m: &RMat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn sorted_poles(sys: &Realization) -> Vec<Complex64> {
    let mut p = sys.poles();
    p.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    p
}

#[derive(Serialize)]
struct MomentTable {
    system: String,
    order: usize,
    points: Vec<[f64; 2]>,
    /// Entries of `CΠ + DL`.
    moments: Vec<[f64; 2]>,
    source_minimal: bool,
}

pub fn cmd_moments(a: &MomentsArgs) -> CliResult<u8> {
    let (name, sys) = load_system(&a.system)?;
    let g = if let Some(path) = &a.generator {
        load_generator(path)?
    } else if let Some(j) = &a.jordan {
        let point = parse_point(&j[0]).map_err(CliError::Usage)?;
        let m: usize = j[1].parse().map_err(|_| CliError::Usage(format!("bad Jordan order '{}'", j[1])))?;
        SignalGenerator::jordan(point, m)?
    } else if a.ramp {
        SignalGenerator::polynomial(1)
    } else if let Some(k) = a.poly {
        SignalGenerator::polynomial(k)
    } else if let Some(w) = a.sin {
        SignalGenerator::sinusoid(w)?
    } else {
        SignalGenerator::polynomial(0)
    };
    let mut m = moments_of(&sys, &g)?;
    if g.is_real() {
        // Real data has real moments; drop the rounding residue of the
        // complex solve.
        m.values.iter_mut().for_each(|v| v.im = 0.0);
    }
    let table = MomentTable {
        system: name,
        order: sys.order(),
        points: points_to_pairs(&g.spectrum()),
        moments: pairs(&m.values),
        source_minimal: m.source_minimal,
    };
    println!("system {} (order {})", table.system, table.order);
    let pts: Vec<String> = g.spectrum().iter().map(fmt_c).collect();
    println!("interpolation points: {}", pts.join(", "));
    println!("{:>4}  {:>24}  {:>24}", "k", "Re", "Im");
    for (k, v) in m.values.iter().enumerate() {
        println!("{k:>4}  {:>24.16e}  {:>24.16e}", v.re, v.im);
    }
    if !m.source_minimal {
        println!("note: the realization is not minimal");
    }
    if let Some(path) = &a.json {
        write_json(path, &table)?;
    }
    Ok(EXIT_OK)
}

fn fmt_c(z: &Complex64) -> String {
    if z.im == 0.0 {
        format!("{:.6}", z.re)
    } else {
        format!("{:.6}{:+.6}j", z.re, z.im)
    }
}

pub fn cmd_design(a: &DesignArgs) -> CliResult<u8> {
    let (name, plant) = load_system(&a.plant)?;
    let poles = parse_point_list(&a.poles).map_err(CliError::Usage)?;
    let comp = build_compensator(&plant, &poles)?;
    let lp = negative_feedback(&plant, &comp.controller)?;
    let defect = comp.similarity_defect(&plant, &lp);
    save_system(&a.out, &format!("{name}_controller"), &comp.controller)?;
    if let Some(path) = &a.loop_out {
        save_system(path, &format!("{name}_loop"), &lp.p_cl)?;
    }
    println!("controller order {}, closed-loop spectral abscissa {:.6e}", comp.controller.order(), lp.p_cl.spectral_abscissa());
    println!("separation-structure spectrum deviation {defect:.3e}");
    Ok(EXIT_OK)
}

/// Everything needed to re-certify a design directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignMeta {
    pub seed: u64,
    pub reference: ReferenceSpec,
    pub nu_c: usize,
    pub s2_point: f64,
    pub tol: f64,
    pub threshold_rel: f64,
    pub horizon: f64,
    pub dt: f64,
    pub literal_pi1: bool,
}

#[derive(Serialize)]
struct DesignSummary<'a> {
    meta: &'a DesignMeta,
    plant_order: usize,
    controller_order: usize,
    reduced_order: usize,
    route: &'a GainRoute,
    relative_degree_matched: bool,
    plant_input_gain_failure: &'a Option<String>,
    baseline_defect: f64,
    g1: Vec<Vec<f64>>,
    g2: Vec<Vec<f64>>,
    h1: Vec<Vec<f64>>,
    h2: Vec<Vec<f64>>,
    full_loop_poles: Vec<[f64; 2]>,
    reduced_loop_poles: Vec<[f64; 2]>,
    notes: &'a [String],
}

#[derive(Serialize)]
struct ExtractionFile {
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    numerator: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    denominator: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    poles: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    zeros: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reclosure_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cancelled: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    realization: Option<SystemFile>,
}

fn extraction_file(outcome: &ExtractionOutcome) -> ExtractionFile {
    match outcome {
        ExtractionOutcome::Extracted(k) => ExtractionFile {
            status: "extracted",
            error: None,
            numerator: Some(k.fraction.num.clone()),
            denominator: Some(k.fraction.den.clone()),
            poles: Some(points_to_pairs(&k.fraction.poles())),
            zeros: Some(points_to_pairs(&k.fraction.zeros())),
            reclosure_error: Some(k.reclosure_error),
            cancelled: Some(k.cancelled),
            realization: k.fraction.to_realization().ok().map(|r| SystemFile::from_realization("extracted_controller", &r)),
        },
        ExtractionOutcome::Failed(e) => ExtractionFile {
            status: "failed",
            error: Some(e.to_string()),
            numerator: None,
            denominator: None,
            poles: None,
            zeros: None,
            reclosure_error: None,
            cancelled: None,
            realization: None,
        },
    }
}

pub struct DesignRun {
    pub design: ClosedLoopDesign,
    pub meta: DesignMeta,
    pub baseline: VerificationReport,
    pub reduced_traj: Trajectory,
    pub full_traj: Trajectory,
}

fn run_design(
    plant: &Realization,
    controller: &Realization,
    reference: &ReferenceSpec,
    nu_c: usize,
    s2_point: f64,
    seed: u64,
    literal: bool,
    match_relative_degree: bool,
    copts: CertifyOptions,
) -> CliResult<DesignRun> {
    let g = reference.generator()?;
    let blocks = default_blocks(&g, plant.order(), nu_c, s2_point)?;
    let opts = ReductionOptions {
        seed,
        literal_pi1: literal,
        match_relative_degree,
        certify: copts.clone(),
        ..Default::default()
    };
    let design = reduce_closed_loop(plant, controller, &blocks, &g, &opts)?;
    let horizon = design.report.horizon;
    let baseline = certify_loop(
        &design.full_loop.p_cl,
        &g,
        &[],
        &CertifyOptions { horizon: Some(horizon), ..copts.clone() },
    );
    let reduced_traj = sim::simulate_reference_loop(&design.reduced_loop, &g, horizon, copts.dt)?;
    let full_traj = sim::simulate_closed_loop(&design.full_loop, &g, horizon, copts.dt)?;
    let meta = DesignMeta {
        seed,
        reference: reference.clone(),
        nu_c,
        s2_point,
        tol: copts.tol,
        threshold_rel: copts.threshold_rel,
        horizon,
        dt: copts.dt,
        literal_pi1: literal,
    };
    Ok(DesignRun { design, meta, baseline, reduced_traj, full_traj })
}

fn write_design_dir(dir: &Path, run: &DesignRun, plant_name: &str) -> CliResult<()> {
    create_dir(dir)?;
    let d = &run.design;
    save_system(&dir.join("plant.json"), plant_name, &d.plant)?;
    save_system(&dir.join("controller.json"), "controller", &d.controller)?;
    save_system(&dir.join("full_loop.json"), "full_loop", &d.full_loop.p_cl)?;
    save_system(&dir.join("reduced_loop.json"), "reduced_loop", &d.reduced_loop)?;
    if let Some(n) = &d.normative_loop {
        save_system(&dir.join("stacked_loop.json"), "stacked_loop", n)?;
    }
    write_json(&dir.join("generator_block1.json"), &GeneratorFile::from_generator(d.generator.first()))?;
    write_json(&dir.join("generator_block2.json"), &GeneratorFile::from_generator(d.generator.second()))?;
    let summary = DesignSummary {
        meta: &run.meta,
        plant_order: d.plant.order(),
        controller_order: d.controller.order(),
        reduced_order: d.reduced_loop.order(),
        route: &d.route,
        relative_degree_matched: d.relative_degree_matched,
        plant_input_gain_failure: &d.plant_input_gain_failure,
        baseline_defect: d.baseline_defect,
        g1: rows(&d.g1),
        g2: rows(&d.g2),
        h1: rows(&d.h1),
        h2: rows(&d.h2),
        full_loop_poles: points_to_pairs(&sorted_poles(&d.full_loop.p_cl)),
        reduced_loop_poles: points_to_pairs(&sorted_poles(&d.reduced_loop)),
        notes: &d.notes,
    };
    write_json(&dir.join("design.json"), &summary)?;
    write_json(&dir.join("meta.json"), &run.meta)?;
    write_json(&dir.join("extracted_controller.json"), &extraction_file(&d.extracted))?;
    write_json(&dir.join("report.json"), &d.report)?;
    write_json(&dir.join("baseline_report.json"), &run.baseline)?;
    write_file(&dir.join("trajectory_reduced.csv"), &run.reduced_traj.to_csv())?;
    write_file(&dir.join("trajectory_full.csv"), &run.full_traj.to_csv())?;
    Ok(())
}

fn print_report(label: &str, r: &VerificationReport) {
    println!(
        "{label}: abscissa {:.4e}, moment residual {:.3e}, error-moment residual {:.3e}, tail error {:.3e} (threshold {:.3e}), verdict {}",
        r.stability_abscissa,
        r.moment_residual_pcl,
        r.moment_residual_e,
        r.tracking_sim_error,
        r.tracking_threshold,
        if r.verdict { "PASS" } else { "FAIL" }
    );
}

pub fn cmd_reduce(a: &ReduceArgs) -> CliResult<u8> {
    let (name, plant) = load_system(&a.plant)?;
    let (_, controller) = load_system(&a.controller)?;
    let reference = ReferenceSpec::parse(&a.reference).map_err(CliError::Usage)?;
    let seed = resolve_seed(a.seed)?;
    let copts = CertifyOptions { tol: a.tol, horizon: a.horizon, dt: a.dt, ..Default::default() };
    let run = run_design(&plant, &controller, &reference, a.nuc, a.s2, seed, a.paper_literal, !a.no_relative_degree, copts)?;
    write_design_dir(&a.out, &run, &name)?;
    let d = &run.design;
    println!("reduced loop order {} via {:?}", d.reduced_loop.order(), d.route);
    print_report("baseline", &run.baseline);
    print_report("reduced", &d.report);
    match &d.extracted {
        ExtractionOutcome::Extracted(k) => println!("extracted controller of order {}", k.fraction.order()),
        ExtractionOutcome::Failed(e) => println!("controller extraction failed: {e}"),
    }
    for n in &d.notes {
        println!("note: {n}");
    }
    println!("wrote {}", a.out.display());
    Ok(EXIT_OK)
}

pub fn cmd_simulate(a: &SimulateArgs) -> CliResult<u8> {
    let (name, sys) = load_system(&a.loop_file)?;
    let reference = ReferenceSpec::parse(&a.reference).map_err(CliError::Usage)?;
    let g = reference.generator()?;
    let horizon = a.horizon.unwrap_or_else(|| sim::auto_horizon(&sys.a));
    let traj = sim::simulate_reference_loop(&sys, &g, horizon, a.dt)?;
    let v = sim::verdict(&traj, a.threshold_rel * traj.theta_inf());
    if let Some(path) = &a.csv {
        write_file(path, &traj.to_csv())?;
    }
    println!(
        "{name}: {} samples to t = {horizon}, tail error {:.6e}, threshold {:.3e}, decay rate {:.4e}, tracks {}",
        traj.len(),
        v.tail_error,
        v.threshold,
        v.decay_fit,
        v.tracks
    );
    Ok(EXIT_OK)
}

pub fn cmd_certify(a: &CertifyArgs) -> CliResult<u8> {
    let meta: DesignMeta = load_json(&a.design.join("meta.json"))?;
    let (_, reduced) = load_system(&a.design.join("reduced_loop.json"))?;
    let block1 = load_generator(&a.design.join("generator_block1.json"))?;
    let g = meta.reference.generator()?;
    let opts = CertifyOptions {
        tol: a.tol,
        threshold_rel: meta.threshold_rel,
        horizon: Some(a.horizon.unwrap_or(meta.horizon)),
        dt: a.dt.unwrap_or(meta.dt),
    };
    let report = certify_loop(&reduced, &g, &[block1], &opts);
    print!("{}", to_json(&report));
    if report.verdict {
        Ok(EXIT_OK)
    } else {
        let why = if !report.stable {
            "loop is unstable".to_string()
        } else {
            format!(
                "moment residual {:.3e}, error-moment residual {:.3e}, tail error {:.3e} (threshold {:.3e})",
                report.moment_residual_pcl, report.moment_residual_e, report.tracking_sim_error, report.tracking_threshold
            )
        };
        Err(CliError::NotCertified(why))
    }
}

pub fn cmd_demo_fourdisk(a: &DemoArgs) -> CliResult<u8> {
    bench::verify_checksums().map_err(CliError::Usage)?;
    let seed = resolve_seed(a.seed)?;
    let plant = bench::fourdisk_plant();
    let poles = bench::fourdisk_poles();
    let comp = build_compensator(&plant, &poles)?;
    let copts = CertifyOptions { horizon: Some(a.horizon), ..Default::default() };
    let run = run_design(&plant, &comp.controller, &ReferenceSpec::Step, a.nuc, 0.0, seed, a.paper_literal, true, copts)?;
    write_design_dir(&a.out, &run, "fourdisk")?;
    let defect = comp.similarity_defect(&plant, &run.design.full_loop);
    write_file(&a.out.join("report.md"), &fourdisk_report(&run, &poles, defect))?;
    print_report("baseline (order 16)", &run.baseline);
    print_report(&format!("reduced (order {})", run.design.reduced_loop.order()), &run.design.report);
    if run.design.literal_pi1 {
        for n in &run.design.notes {
            println!("note: {n}");
        }
    }
    println!("wrote {}", a.out.display());
    Ok(EXIT_OK)
}

fn fourdisk_report(run: &DesignRun, poles: &[Complex64], defect: f64) -> String {
    let d = &run.design;
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|t| t.as_secs()).unwrap_or(0);
    let mut s = String::new();
    let _ = writeln!(s, "# Four-disk drive: closed-loop reduction\n");
    let _ = writeln!(s, "Generated at unix time {stamp}. Seed {}, ν_C = {}.\n", run.meta.seed, run.meta.nu_c);
    let _ = writeln!(s, "## Baseline compensator\n");
    let _ = writeln!(s, "Observer-based compensator of order {} for the order-{} plant.", d.controller.order(), d.plant.order());
    let req: Vec<String> = poles.iter().map(fmt_c).collect();
    let _ = writeln!(s, "Requested poles (regulator, then observer): {}.", req.join(", "));
    let _ = writeln!(s, "Deviation of the separation-structure spectrum from the requested poles: {defect:.3e}.");
    let computed = d.full_loop.p_cl.poles();
    let drift = poles
        .iter()
        .map(|p| computed.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0f64, f64::max);
    let _ = writeln!(
        s,
        "Eigenvalues computed from the assembled order-{} loop matrix lie within {drift:.3e} of the requested poles; \
         the difference reflects the conditioning of that matrix, not the design.\n",
        d.full_loop.p_cl.order()
    );
    let _ = writeln!(s, "## Loops\n");
    let _ = writeln!(s, "| loop | order | spectral abscissa | moment residual | error-moment residual | tail error | threshold | tracks |");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
    for (name, order, r) in [("baseline", d.full_loop.p_cl.order(), &run.baseline), ("reduced", d.reduced_loop.order(), &d.report)] {
        let _ = writeln!(
            s,
            "| {name} | {order} | {:.4e} | {:.3e} | {:.3e} | {:.3e} | {:.3e} | {} |",
            r.stability_abscissa,
            r.moment_residual_pcl,
            r.moment_residual_e,
            r.tracking_sim_error,
            r.tracking_threshold,
            if r.verdict { "yes" } else { "no" }
        );
    }
    let _ = writeln!(s);
    let verdict = match (run.baseline.sim_check, d.report.verdict) {
        (false, true) => "The baseline does not track the step within the horizon; the reduced design tracks and is certified.",
        (true, true) => "Both loops track the step within the horizon; the reduced design is certified.",
        (_, false) => "The reduced design is not certified; see the residuals above.",
    };
    let _ = writeln!(s, "{verdict}\n");
    let _ = writeln!(s, "## Reduced loop\n");
    let _ = writeln!(s, "Gain route: {:?}; relative degree matched: {}.", d.route, d.relative_degree_matched);
    if let Some(f) = &d.plant_input_gain_failure {
        let _ = writeln!(s, "Plant-input gain G₁ = B rejected: {f}.");
    }
    let red: Vec<String> = sorted_poles(&d.reduced_loop).iter().map(fmt_c).collect();
    let _ = writeln!(s, "\nSpectrum: {}.\n", red.join(", "));
    let full: Vec<String> = sorted_poles(&d.full_loop.p_cl).iter().map(fmt_c).collect();
    let _ = writeln!(s, "Baseline spectrum: {}.\n", full.join(", "));
    let _ = writeln!(s, "## Controller extraction\n");
    match &d.extracted {
        ExtractionOutcome::Extracted(k) => {
            let _ = writeln!(s, "Extracted controller of order {} (re-closure error {:.3e}).", k.fraction.order(), k.reclosure_error);
        }
        ExtractionOutcome::Failed(e) => {
            let _ = writeln!(s, "Extraction failed: {e}.");
        }
    }
    if !d.notes.is_empty() {
        let _ = writeln!(s, "\n## Notes\n");
        for n in &d.notes {
            let _ = writeln!(s, "- {n}");
        }
    }
    let _ = writeln!(s, "\n## Artifacts\n");
    let _ = writeln!(
        s,
        "`trajectory_full.csv` and `trajectory_reduced.csv` hold `t,theta,y,eps` columns at dt = {} up to {} s.",
        run.meta.dt, run.meta.horizon
    );
    s
}
