//! Command-line front end: measure, certify, simulate, interconnect.
//!
//! Exit codes: 0 success/certified, 1 analysis negative (not contracting,
//! envelope violated, blow-up), 2 config error, 3 numerical error.

mod config;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use contraction_core::certify::{
    check_equilibrium_contraction, estimate_osl, sup_demidovich, sup_factored_measure,
    sup_jacobian_measure, ContractionCertificate, Witness,
};
use contraction_core::measure::{matrix_measure, MeasureMethod};
use contraction_core::network::{certify_network, network_osl_estimate};
use contraction_core::norms::norm;
use contraction_core::semi::{certify_semicontraction, certify_subspace_contraction};
use contraction_core::sim::{
    envelope_check, envelope_check_with, integrate, iss_experiment, measure_gain, Trajectory,
};

use config::{
    build_norm, build_pairing, build_region, build_semi, build_subsystems, build_system,
    core_error_exit_code, AnalysisConfig, ConfigError, MeasureConfig, SCHEMA_VERSION,
};
use report::{
    render, BlowupOut, CertifyOut, EnvelopeOut, InterconnectOut, IssOut, MeasureOut, SimulateOut,
    WitnessOut,
};

#[derive(Parser)]
#[command(
    name = "contraction",
    version,
    about = "Contraction analysis for weighted lp norms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Matrix measure of a constant matrix or a model Jacobian at a point.
    Measure(RunArgs),
    /// Sample-based contraction certificates over a region.
    Certify(RunArgs),
    /// Integrate trajectories, write CSVs, and run envelope/ISS checks.
    Simulate(RunArgs),
    /// Compose subsystem certificates over an interconnection.
    Interconnect(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON analysis config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.json and trajectory CSVs.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sampling loops (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

/// Run outcome: the report body plus the exit code (0 or 1).
struct Outcome {
    report_json: String,
    exit: u8,
    extra_files: Vec<(String, String)>,
}

enum RunError {
    Config(String),
    Numerical(String),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.0)
    }
}

impl From<contraction_core::Error> for RunError {
    fn from(e: contraction_core::Error) -> Self {
        match core_error_exit_code(&e) {
            2 => RunError::Config(e.to_string()),
            _ => RunError::Numerical(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, runner): (&RunArgs, fn(&AnalysisConfig) -> Result<Outcome, RunError>) =
        match &cli.command {
            Command::Measure(a) => (a, cmd_measure),
            Command::Certify(a) => (a, cmd_certify),
            Command::Simulate(a) => (a, cmd_simulate),
            Command::Interconnect(a) => (a, cmd_interconnect),
        };
    if let Some(threads) = args.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let mut cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    match runner(&cfg) {
        Ok(outcome) => {
            println!("{}", outcome.report_json);
            if let Err(e) = write_outputs(&args.out, &outcome) {
                eprintln!("failed to write outputs: {e}");
                return ExitCode::from(3);
            }
            ExitCode::from(outcome.exit)
        }
        Err(RunError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(RunError::Numerical(msg)) => {
            eprintln!("numerical error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn load_config(path: &Path) -> Result<AnalysisConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let cfg: AnalysisConfig =
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("invalid JSON: {e}")))?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(ConfigError(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            cfg.schema_version
        )));
    }
    Ok(cfg)
}

fn write_outputs(out: &Path, outcome: &Outcome) -> std::io::Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("report.json"), &outcome.report_json)?;
    for (name, contents) in &outcome.extra_files {
        fs::write(out.join(name), contents)?;
    }
    Ok(())
}

fn require<'a, T>(field: &'a Option<T>, name: &str) -> Result<&'a T, RunError> {
    field
        .as_ref()
        .ok_or_else(|| RunError::Config(format!("missing required `{name}` block")))
}

fn witness_out(w: &Witness) -> WitnessOut {
    match w {
        Witness::State { t, x } => WitnessOut {
            t: *t,
            x: x.iter().copied().collect(),
            direction: None,
            partner: None,
        },
        Witness::StateDirection { t, x, v } => WitnessOut {
            t: *t,
            x: x.iter().copied().collect(),
            direction: Some(v.iter().copied().collect()),
            partner: None,
        },
        Witness::StatePair { t, x, y } => WitnessOut {
            t: *t,
            x: x.iter().copied().collect(),
            direction: None,
            partner: Some(y.iter().copied().collect()),
        },
    }
}

fn certificate_out(cert: &ContractionCertificate) -> CertifyOut {
    CertifyOut {
        condition: cert.condition.name().to_string(),
        bound_b: cert.bound_b,
        verdict_contracting: cert.verdict_contracting,
        samples: cert.samples,
        witness: Some(witness_out(&cert.worst_witness)),
        grid_step: Some(cert.grid_step),
        nonsmooth_abs: cert.nonsmooth_abs,
        osl_bound: None,
        measure_bound: None,
    }
}

fn cmd_measure(cfg: &AnalysisConfig) -> Result<Outcome, RunError> {
    let measure_cfg = require(&cfg.measure, "measure")?;
    let (matrix, dim) = match measure_cfg {
        MeasureConfig::Matrix(rows) => {
            let n = rows.len();
            if n == 0 || rows.iter().any(|r| r.len() != n) {
                return Err(RunError::Config("measure.matrix must be square".into()));
            }
            (nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j]), n)
        }
        MeasureConfig::At { t, x } => {
            let system = require(&cfg.system, "system")?;
            let model = build_system(system)?;
            let point = DVector::from_row_slice(x);
            let jac = model.eval_jacobian(*t, &point, None)?;
            (jac, model.state_dim())
        }
    };
    let norm_cfg = require(&cfg.norm, "norm")?;
    let spec = build_norm(norm_cfg, dim)?;
    let result = matrix_measure(&matrix, &spec)?;
    let out = MeasureOut {
        value: result.value,
        method: match result.method {
            MeasureMethod::ClosedForm => "closed_form".to_string(),
            MeasureMethod::Optimized => "optimized".to_string(),
        },
        witness: result.witness.iter().copied().collect(),
        gap_estimate: result.gap_estimate,
    };
    eprintln!("measure: value = {:.12e} ({})", result.value, out.method);
    Ok(Outcome {
        report_json: render("measure", cfg.seed, cfg, out),
        exit: 0,
        extra_files: vec![],
    })
}

fn cmd_certify(cfg: &AnalysisConfig) -> Result<Outcome, RunError> {
    let certify_cfg = require(&cfg.certify, "certify")?;
    let system = require(&cfg.system, "system")?;
    let region_cfg = require(&cfg.region, "region")?;
    let model = build_system(system)?;
    let region = build_region(region_cfg)?;
    let seed = cfg.seed;
    let sampling = &cfg.sampling;

    let x_star_for = |model: &contraction_core::model::VectorFieldModel| {
        certify_cfg
            .x_star
            .as_ref()
            .map(|v| DVector::from_row_slice(v))
            .or_else(|| model.equilibrium.clone())
    };

    let (out, contracting) = match certify_cfg.condition.as_str() {
        "semi" => {
            let semi_cfg = require(&cfg.semi, "semi")?;
            let sspec = build_semi(semi_cfg, cfg.norm.as_ref())?;
            let cert = certify_semicontraction(&model, &sspec, &region, sampling.states, seed)?;
            let bound = cert.osl_bound.max(cert.measure_bound);
            (
                CertifyOut {
                    condition: "semi".into(),
                    bound_b: bound,
                    verdict_contracting: cert.verdict_contracting,
                    samples: cert.samples,
                    witness: Some(WitnessOut {
                        t: cert.measure_witness.0,
                        x: cert.measure_witness.1.iter().copied().collect(),
                        direction: None,
                        partner: None,
                    }),
                    grid_step: None,
                    nonsmooth_abs: model.has_abs_kinks(),
                    osl_bound: Some(cert.osl_bound),
                    measure_bound: Some(cert.measure_bound),
                },
                cert.verdict_contracting,
            )
        }
        "subspace" => {
            let semi_cfg = require(&cfg.semi, "semi")?;
            let sspec = build_semi(semi_cfg, cfg.norm.as_ref())?;
            let x_star = x_star_for(&model).ok_or_else(|| {
                RunError::Config("subspace certification needs certify.x_star".into())
            })?;
            let cert = certify_subspace_contraction(
                &model,
                &x_star,
                &sspec,
                &region,
                sampling.states,
                seed,
            )?;
            (
                CertifyOut {
                    condition: "subspace".into(),
                    bound_b: cert.bound,
                    verdict_contracting: cert.verdict_contracting,
                    samples: cert.samples,
                    witness: Some(WitnessOut {
                        t: cert.worst_state.0,
                        x: cert.worst_state.1.iter().copied().collect(),
                        direction: None,
                        partner: None,
                    }),
                    grid_step: None,
                    nonsmooth_abs: model.has_abs_kinks(),
                    osl_bound: None,
                    measure_bound: None,
                },
                cert.verdict_contracting,
            )
        }
        condition => {
            let norm_cfg = require(&cfg.norm, "norm")?;
            let spec = build_norm(norm_cfg, model.state_dim())?;
            let kind = build_pairing(cfg.pairing.as_deref(), &spec)?;
            let cert = match condition {
                "measure" => sup_jacobian_measure(&model, &spec, &region, sampling.states, seed)?,
                "factored_measure" => {
                    sup_factored_measure(&model, &spec, &region, sampling.states, seed)?
                }
                "demidovich" => sup_demidovich(
                    &model,
                    &spec,
                    kind,
                    &region,
                    sampling.states,
                    sampling.directions,
                    seed,
                )?,
                "osl" => estimate_osl(&model, &spec, kind, &region, sampling.pairs, seed)?,
                "equilibrium" => {
                    let x_star = x_star_for(&model).ok_or_else(|| {
                        RunError::Config("equilibrium certification needs certify.x_star".into())
                    })?;
                    check_equilibrium_contraction(
                        &model,
                        &x_star,
                        &spec,
                        kind,
                        &region,
                        sampling.states,
                        seed,
                    )?
                }
                other => {
                    return Err(RunError::Config(format!(
                        "unknown certify.condition `{other}`"
                    )))
                }
            };
            let contracting = cert.verdict_contracting;
            (certificate_out(&cert), contracting)
        }
    };
    eprintln!(
        "certify[{}]: bound b = {:.9}, contracting: {} (up to sampling)",
        out.condition, out.bound_b, contracting
    );
    Ok(Outcome {
        report_json: render("certify", cfg.seed, cfg, out),
        exit: u8::from(!contracting),
        extra_files: vec![],
    })
}

fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.states[0].len();
    let k = traj.inputs.as_ref().map_or(0, |u| u[0].len());
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",x{i}"));
    }
    for j in 1..=k {
        out.push_str(&format!(",u{j}"));
    }
    out.push('\n');
    for i in 0..traj.len() {
        out.push_str(&format!("{:.16e}", traj.time(i)));
        for v in traj.states[i].iter() {
            out.push_str(&format!(",{v:.16e}"));
        }
        if let Some(inputs) = &traj.inputs {
            for v in inputs[i].iter() {
                out.push_str(&format!(",{v:.16e}"));
            }
        }
        out.push('\n');
    }
    out
}

fn cmd_simulate(cfg: &AnalysisConfig) -> Result<Outcome, RunError> {
    let sim_cfg = require(&cfg.simulate, "simulate")?;
    let system = require(&cfg.system, "system")?;
    let model = build_system(system)?;
    let n = model.state_dim();
    if sim_cfg.x0.len() != n {
        return Err(RunError::Config(format!(
            "simulate.x0 has dim {}, model has {n}",
            sim_cfg.x0.len()
        )));
    }
    for sig in [&sim_cfg.input, &sim_cfg.input_y].into_iter().flatten() {
        if sig.dim() != model.input_dim() {
            return Err(RunError::Config(format!(
                "input signal has dim {}, model expects {}",
                sig.dim(),
                model.input_dim()
            )));
        }
    }
    let x0 = DVector::from_row_slice(&sim_cfg.x0);
    let input_x = sim_cfg.input.as_ref().map(|s| s.to_fn());
    let traj_x = integrate(
        &model,
        sim_cfg.t0,
        &x0,
        input_x
            .as_ref()
            .map(|f| f as &(dyn Fn(f64) -> DVector<f64> + Sync)),
        sim_cfg.horizon,
        sim_cfg.step,
    )?;
    let mut extra_files = vec![("trajectory_x.csv".to_string(), trajectory_csv(&traj_x))];
    let mut exit = 0u8;
    let mut blowup = traj_x.blowup.map(|(step, time)| BlowupOut { step, time });

    let traj_y = if let Some(y0) = &sim_cfg.y0 {
        if y0.len() != n {
            return Err(RunError::Config("simulate.y0 dimension mismatch".into()));
        }
        let input_y = sim_cfg
            .input_y
            .as_ref()
            .or(sim_cfg.input.as_ref())
            .map(|s| s.to_fn());
        let ty = integrate(
            &model,
            sim_cfg.t0,
            &DVector::from_row_slice(y0),
            input_y
                .as_ref()
                .map(|f| f as &(dyn Fn(f64) -> DVector<f64> + Sync)),
            sim_cfg.horizon,
            sim_cfg.step,
        )?;
        if blowup.is_none() {
            blowup = ty.blowup.map(|(step, time)| BlowupOut { step, time });
        }
        extra_files.push(("trajectory_y.csv".to_string(), trajectory_csv(&ty)));
        Some(ty)
    } else {
        None
    };
    if blowup.is_some() {
        exit = 1;
    }

    // Envelope check against the second trajectory or a constant equilibrium.
    let mut envelope = None;
    if blowup.is_none() {
        if let Some(b) = sim_cfg.envelope_b {
            let norm_cfg = require(&cfg.norm, "norm")?;
            let spec = build_norm(norm_cfg, n)?;
            let reference: Trajectory = match (&traj_y, &sim_cfg.equilibrium) {
                (Some(ty), _) => ty.clone(),
                (None, Some(xs)) => Trajectory {
                    t0: traj_x.t0,
                    h: traj_x.h,
                    states: vec![DVector::from_row_slice(xs); traj_x.len()],
                    inputs: None,
                    blowup: None,
                },
                (None, None) => {
                    return Err(RunError::Config(
                        "envelope_b needs simulate.y0 or simulate.equilibrium".into(),
                    ))
                }
            };
            let d0 = norm(&(&traj_x.states[0] - &reference.states[0]), &spec)?;
            let tol = sim_cfg.envelope_tol.unwrap_or(1e-4 * (1.0 + d0));
            let rep = envelope_check(&traj_x, &reference, &spec, b, tol)?;
            if !rep.pass {
                exit = 1;
            }
            envelope = Some(EnvelopeOut {
                b,
                tol,
                max_violation: rep.max_violation,
                pass: rep.pass,
                worst_pair: rep.worst_pair,
            });
        }
    }

    // ISS experiment and gain measurement against the zero input.
    let mut iss = None;
    if blowup.is_none() {
        if let Some(iss_cfg) = &sim_cfg.iss {
            let norm_cfg = require(&cfg.norm, "norm")?;
            let spec_x = build_norm(norm_cfg, n)?;
            let spec_u = contraction_core::norms::NormSpec::unweighted(
                contraction_core::norms::Lp::P(2.0),
                model.input_dim(),
            );
            let y0 = sim_cfg
                .y0
                .as_ref()
                .map(|v| DVector::from_row_slice(v))
                .unwrap_or_else(|| x0.clone());
            let probe = iss_cfg.probe.to_fn();
            let input_dim = model.input_dim();
            let zero = move |_t: f64| DVector::<f64>::zeros(input_dim);
            let tol = iss_cfg.tol.unwrap_or(1e-6 + 1e-2 * sim_cfg.step);
            let rep = iss_experiment(
                &model,
                &probe,
                &zero,
                &x0,
                &y0,
                iss_cfg.c,
                iss_cfg.ell,
                &spec_x,
                &spec_u,
                sim_cfg.horizon,
                sim_cfg.step,
                tol,
            )?;
            let q = config::parse_p(&iss_cfg.q)?.as_f64();
            let gain = measure_gain(
                &model,
                &x0,
                iss_cfg.c,
                iss_cfg.ell,
                &spec_x,
                &spec_u,
                q,
                &[&probe],
                sim_cfg.horizon,
                sim_cfg.step,
            )?;
            if !rep.pass || gain.measured > gain.bound + 1e-6 {
                exit = 1;
            }
            iss = Some(IssOut {
                c: iss_cfg.c,
                ell: iss_cfg.ell,
                max_violation: rep.max_violation,
                pass: rep.pass,
                sup_input_deviation: rep.sup_input_deviation,
                measured_gain: gain.measured,
                gain_bound: gain.bound,
            });
        }
    }

    let out = SimulateOut {
        csv_files: extra_files.iter().map(|(name, _)| name.clone()).collect(),
        blowup,
        envelope,
        iss,
        final_state: traj_x.last().iter().copied().collect(),
    };
    eprintln!(
        "simulate: {} steps, final state max-abs = {:.6e}",
        traj_x.len() - 1,
        traj_x.last().amax()
    );
    Ok(Outcome {
        report_json: render("simulate", cfg.seed, cfg, out),
        exit,
        extra_files,
    })
}

fn cmd_interconnect(cfg: &AnalysisConfig) -> Result<Outcome, RunError> {
    let net_cfg = require(&cfg.network, "network")?;
    let subsystems = build_subsystems(net_cfg)?;
    let cert = certify_network(&subsystems, net_cfg.epsilon)?;
    let mut simulation_envelope_pass = None;
    if net_cfg.simulation_check && cert.certified {
        let agg = cert.aggregate.as_ref().expect("certified network has weights");
        let rate = cert.rate.expect("certified network has a rate");
        let dist = |v: &DVector<f64>| agg.norm(v).expect("dims match");
        let n = cert.assembled.state_dim();
        let region = contraction_core::certify::Region::symmetric_box(2.0, n);
        let mut pass = true;
        for pair_seed in 0..5u64 {
            let states =
                contraction_core::certify::sample_states(&region, 2, cfg.seed ^ (pair_seed + 1));
            let tx = integrate(&cert.assembled, 0.0, &states[0], None, 4.0, 1e-3)?;
            let ty = integrate(&cert.assembled, 0.0, &states[1], None, 4.0, 1e-3)?;
            let d0 = dist(&(&states[0] - &states[1]));
            let rep = envelope_check_with(&tx, &ty, &dist, -rate + 0.01, 1e-6 * (1.0 + d0))?;
            pass &= rep.pass;
        }
        // Cross-check the aggregated one-sided Lipschitz estimate as well.
        let osl = network_osl_estimate(&cert.assembled, agg, &region, 2000, cfg.seed)?;
        pass &= osl <= cert.gain.abscissa + 0.05;
        simulation_envelope_pass = Some(pass);
    }
    let out = InterconnectOut {
        gamma: (0..cert.gain.gamma.nrows())
            .map(|i| cert.gain.gamma.row(i).iter().copied().collect())
            .collect(),
        abscissa: cert.gain.abscissa,
        irreducible: cert.gain.irreducible,
        certified: cert.certified,
        epsilon_used: cert.epsilon_used,
        rate: cert.rate,
        xi: cert.weights.as_ref().map(|w| w.xi.iter().copied().collect()),
        lmi_residual: cert.weights.as_ref().map(|w| w.lmi_max_eig),
        simulation_envelope_pass,
    };
    eprintln!(
        "interconnect: abscissa = {:.6}, certified: {}",
        cert.gain.abscissa, cert.certified
    );
    let negative = !cert.certified || simulation_envelope_pass == Some(false);
    Ok(Outcome {
        report_json: render("interconnect", cfg.seed, cfg, out),
        exit: u8::from(negative),
        extra_files: vec![],
    })
}
