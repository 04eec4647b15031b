//! Command-line orchestration: config loading, the six workflows, file
//! output, and exit codes (0 success, 1 validation failure, 2 solver
//! failure).

use crate::bd::{bd_oracle, BdConfig};
use crate::config::{parse_config_with_overrides, SimulationConfig};
use crate::diagnostics::{
    analytic_steady_state, check_energy, check_l1_bound, check_positivity,
    equilibrium_cell_masses, q_cell_masses, tv_distance, NormContext,
};
use crate::error::Error;
use crate::fields::TemperatureField;
use crate::io::{write_diagnostics_csv, write_snapshot, write_snapshot_raw};
use crate::mesh::Mesh;
use crate::mms;
use crate::solver::{epsilon_continuation, Simulation, Trajectory};
use crate::state::initial_condition;
use crate::wellposedness::{audit, CoercivityReport};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Run,
    Check,
    Steady,
    Mms,
    Continuation,
    Bd,
}

#[derive(Debug, Clone)]
pub struct CliArgs {
    pub mode: Mode,
    pub config: PathBuf,
    pub overrides: Vec<String>,
    pub allow_unverified: bool,
}

const USAGE: &str = "usage: fene-cpd <run|check|steady|mms|continuation|bd> --config <path> \
[--override section.key=value]... [--allow-unverified]";

pub fn parse_args(args: &[String]) -> Result<CliArgs, String> {
    let mut it = args.iter();
    let mode = match it.next().map(|s| s.as_str()) {
        Some("run") => Mode::Run,
        Some("check") => Mode::Check,
        Some("steady") => Mode::Steady,
        Some("mms") => Mode::Mms,
        Some("continuation") => Mode::Continuation,
        Some("bd") => Mode::Bd,
        Some(other) => return Err(format!("unknown subcommand `{other}`\n{USAGE}")),
        None => return Err(USAGE.to_string()),
    };
    let mut config = None;
    let mut overrides = Vec::new();
    let mut allow_unverified = false;
    while let Some(a) = it.next() {
        match a.as_str() {
            "--config" => {
                config = Some(PathBuf::from(it.next().ok_or_else(|| {
                    format!("--config requires a path\n{USAGE}")
                })?));
            }
            "--override" => {
                overrides.push(
                    it.next()
                        .ok_or_else(|| format!("--override requires section.key=value\n{USAGE}"))?
                        .clone(),
                );
            }
            "--allow-unverified" => allow_unverified = true,
            other => return Err(format!("unknown argument `{other}`\n{USAGE}")),
        }
    }
    Ok(CliArgs {
        mode,
        config: config.ok_or_else(|| format!("missing --config\n{USAGE}"))?,
        overrides,
        allow_unverified,
    })
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidParameter { .. }
        | Error::Mesh(_)
        | Error::DimensionMismatch { .. }
        | Error::ConditionViolated { .. } => 1,
        _ => 2,
    }
}

/// Entry point shared by the binary and the test harness.
pub fn execute(args: &[String]) -> i32 {
    let cli = match parse_args(args) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("{msg}");
            return 1;
        }
    };
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read config {}: {e}", cli.config.display());
            return 1;
        }
    };
    let config = match parse_config_with_overrides(&text, &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return 1;
        }
    };
    match dispatch(&cli, &config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            exit_code_for(&e)
        }
    }
}

fn dispatch(cli: &CliArgs, config: &SimulationConfig) -> crate::error::Result<()> {
    let outdir = Path::new(&config.output.dir);
    std::fs::create_dir_all(outdir.join("snapshots"))?;
    let mesh = config.build_mesh()?;
    match cli.mode {
        Mode::Check => mode_check(config, &mesh, outdir),
        Mode::Run => mode_run(cli, config, &mesh, outdir),
        Mode::Steady => mode_steady(config, &mesh, outdir),
        Mode::Mms => mode_mms(config, outdir),
        Mode::Continuation => mode_continuation(config, &mesh, outdir),
        Mode::Bd => mode_bd(config, &mesh, outdir),
    }
}

fn format_report(r: &CoercivityReport, flow_note: Option<&str>) -> String {
    let mut s = String::new();
    writeln!(s, "condition audit").unwrap();
    writeln!(s, "---------------").unwrap();
    writeln!(s, "theta_min            = {:.12e}", r.theta_min).unwrap();
    writeln!(s, "grad_theta_sup       = {:.12e}", r.grad_theta_sup).unwrap();
    writeln!(s, "margin_gradient      = {:.12e}  ({})", r.margin_r5, pass(r.margin_r5)).unwrap();
    writeln!(s, "c_hardy (nq = {})    = {:.12e}", r.hardy_level, r.c_hardy).unwrap();
    writeln!(s, "margin_strong        = {:.12e}  ({})", r.margin_ee9, pass(r.margin_ee9)).unwrap();
    writeln!(s, "c_poincare           = {:.12e}", r.c_poincare).unwrap();
    match r.lambda_m {
        Some(l) => writeln!(s, "lambda_m             = {l:.12e}").unwrap(),
        None => writeln!(s, "lambda_m             = n/a (gradient condition fails)").unwrap(),
    }
    match r.lambda_cap_m {
        Some(l) => writeln!(s, "lambda_M             = {l:.12e}").unwrap(),
        None => writeln!(s, "lambda_M             = n/a (strong condition fails)").unwrap(),
    }
    writeln!(
        s,
        "note: seminorm constants converted to full H1 via 1/(1 + c_poincare^2)"
    )
    .unwrap();
    if let Some(n) = flow_note {
        writeln!(s, "note: {n}").unwrap();
    }
    s
}

fn pass(margin: f64) -> &'static str {
    if margin > 0.0 {
        "holds"
    } else {
        "FAILS"
    }
}

fn flow_consistency_note(config: &SimulationConfig) -> Option<String> {
    if config.flow.kappa_consistent_with_velocity(config.mesh.dq) {
        None
    } else {
        Some("kappa differs from grad v for the selected flow family (independent data)".into())
    }
}

fn write_report(outdir: &Path, body: &str) -> crate::error::Result<()> {
    std::fs::write(outdir.join("report.txt"), body)?;
    Ok(())
}

fn mode_check(
    config: &SimulationConfig,
    mesh: &Mesh,
    outdir: &Path,
) -> crate::error::Result<()> {
    let report = audit(mesh, &config.params, &config.theta)?;
    let note = flow_consistency_note(config);
    let mut body = format!(
        "mesh: dofs = {}, active cells = {}, q-measure = {:.12e}\n",
        mesh.num_dofs(),
        mesh.num_active_cells(),
        mesh.masked_q_measure()
    );
    body.push_str(&format_report(&report, note.as_deref()));
    if config.output.dump_operators {
        dump_operator_triplets(config, mesh, outdir)?;
        writeln!(body, "operators dumped to {}/operators", outdir.display()).unwrap();
    }
    print!("{body}");
    write_report(outdir, &body)
}

/// Triplet text dumps (`row col value` per line) of the mass matrix and
/// every static term matrix at t = 0.
fn dump_operator_triplets(
    config: &SimulationConfig,
    mesh: &Mesh,
    outdir: &Path,
) -> crate::error::Result<()> {
    use crate::assembly::{assemble_mass, assemble_static};
    let dir = outdir.join("operators");
    std::fs::create_dir_all(&dir)?;
    let tm = assemble_static(mesh, &config.params, &config.theta, &config.flow, 0.0)?;
    let mass = assemble_mass(mesh);
    for (name, m) in [
        ("mass", &mass),
        ("transport", &tm.transport),
        ("diff_xx", &tm.diff_xx),
        ("cross_qx", &tm.cross_qx),
        ("cross_xq", &tm.cross_xq),
        ("diff_qq", &tm.diff_qq),
        ("drift_q", &tm.drift_q),
        ("fene", &tm.fene),
    ] {
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{name}.txt")))?);
        m.write_triplets(&mut f)?;
    }
    Ok(())
}

fn flush_trajectory(
    config: &SimulationConfig,
    mesh: &Mesh,
    outdir: &Path,
    traj: &Trajectory,
) -> crate::error::Result<()> {
    for (i, state) in traj.states.iter().enumerate() {
        let p = outdir.join("snapshots").join(format!("f_{i:05}.csv"));
        write_snapshot(&p, mesh, state)?;
        if config.output.raw {
            let p = outdir.join("snapshots").join(format!("f_{i:05}.f64"));
            write_snapshot_raw(&p, mesh, state)?;
        }
    }
    write_diagnostics_csv(&outdir.join("diagnostics.csv"), &traj.series)?;
    crate::io::write_steps_csv(&outdir.join("steps.csv"), &traj.reports)?;
    Ok(())
}

fn mode_run(
    cli: &CliArgs,
    config: &SimulationConfig,
    mesh: &Mesh,
    outdir: &Path,
) -> crate::error::Result<()> {
    let report = audit(mesh, &config.params, &config.theta)?;
    if !cli.allow_unverified {
        if report.margin_r5 <= 0.0 {
            return Err(Error::ConditionViolated {
                condition: "gradient condition (weak)",
                margin: report.margin_r5,
            });
        }
        if report.margin_ee9 <= 0.0 {
            return Err(Error::ConditionViolated {
                condition: "strong condition (Hardy)",
                margin: report.margin_ee9,
            });
        }
    }
    let f0 = initial_condition(mesh, config.params.q0, &config.initial_family()?)?;
    let mut sim = Simulation::new(mesh, config.params, config.theta.clone(), config.flow.clone())?;
    let (mut traj, failure) = sim.run(f0, config.output.snapshot_every);
    let energy = report
        .lambda_m
        .filter(|_| report.margin_r5 > 0.0 && report.margin_ee9 > 0.0)
        .and_then(|lam| check_energy(&mut traj.series, 0.95 * lam));
    flush_trajectory(config, mesh, outdir, &traj)?;
    let mut body = format_report(&report, flow_consistency_note(config).as_deref());
    writeln!(body).unwrap();
    writeln!(body, "run summary").unwrap();
    writeln!(body, "-----------").unwrap();
    writeln!(body, "steps completed      = {}", traj.reports.len()).unwrap();
    if let Some(last) = traj.series.l2.last() {
        writeln!(body, "final |f|_L2         = {last:.12e}").unwrap();
    }
    let l1 = check_l1_bound(&traj.series, 1e-3);
    writeln!(
        body,
        "l1 worst ratio       = {:.12e}  ({})",
        l1.worst_ratio,
        if l1.pass { "within bound" } else { "EXCEEDS bound" }
    )
    .unwrap();
    let pos = check_positivity(&traj.series);
    writeln!(body, "min nodal value      = {:.12e}", pos.min_value).unwrap();
    writeln!(body, "worst neg-part mass  = {:.12e}", pos.worst_neg_mass).unwrap();
    if let Some(en) = energy {
        writeln!(
            body,
            "energy slack min     = {:.12e}  (c1 = {:.6e}, c2 = {:.6e})",
            en.min_slack, en.c1, en.c2
        )
        .unwrap();
    } else {
        writeln!(body, "energy slack         = skipped (margins not certified)").unwrap();
    }
    if let Some(err) = failure {
        writeln!(body, "ABORTED: {err}").unwrap();
        write_report(outdir, &body)?;
        return Err(err);
    }
    write_report(outdir, &body)
}

fn mode_steady(
    config: &SimulationConfig,
    mesh: &Mesh,
    outdir: &Path,
) -> crate::error::Result<()> {
    let theta0 = match &config.theta {
        TemperatureField::Constant { theta0 } => *theta0,
        _ => {
            return Err(Error::InvalidParameter {
                name: "steady",
                reason: "steady mode requires the constant temperature family".into(),
            })
        }
    };
    let f0 = initial_condition(mesh, config.params.q0, &config.initial_family()?)?;
    let mut sim = Simulation::new(mesh, config.params, config.theta.clone(), config.flow.clone())?;
    let (traj, failure) = sim.run(f0, config.output.snapshot_every);
    flush_trajectory(config, mesh, outdir, &traj)?;
    if let Some(err) = failure {
        return Err(err);
    }
    let terminal = traj.states.last().expect("run keeps final state");
    let feq = analytic_steady_state(theta0, config.params.q0, mesh);
    let ctx = NormContext::new(mesh);
    let mut body = String::new();
    writeln!(body, "steady-state comparison").unwrap();
    writeln!(body, "-----------------------").unwrap();
    if mesh.x_resolved() {
        // with spatial Dirichlet walls the amplitude decays; compare the
        // mass-normalized configurational profiles
        let pm = q_cell_masses(mesh, &terminal.coeffs);
        let em = q_cell_masses(mesh, &feq.coeffs);
        let tv = tv_distance(&pm, &em);
        writeln!(body, "q-marginal TV vs equilibrium = {tv:.12e}").unwrap();
    } else {
        let mass = ctx.mass_integral(&terminal.coeffs);
        let normalized: Vec<f64> = terminal.coeffs.iter().map(|v| v / mass).collect();
        let rel = ctx.relative_l2_distance(&normalized, &feq.coeffs);
        writeln!(body, "relative L2 distance vs equilibrium = {rel:.12e}").unwrap();
    }
    print!("{body}");
    write_report(outdir, &body)
}

fn mode_mms(config: &SimulationConfig, outdir: &Path) -> crate::error::Result<()> {
    let spatial = mms::spatial_study(
        config.mesh.dx,
        config.mesh.dq,
        &config.mms.levels,
        &config.params,
        &config.theta,
        &config.flow,
    )?;
    let temporal = mms::temporal_study(
        config.mesh.dx,
        config.mesh.dq,
        config.mms.temporal_level,
        config.mms.temporal_dt0,
        config.mms.temporal_halvings,
        &config.params,
        &config.theta,
        &config.flow,
    )?;
    let mut body = String::new();
    writeln!(body, "manufactured-solution study").unwrap();
    writeln!(body, "---------------------------").unwrap();
    writeln!(body, "spatial: cells/axis   L2 error        observed order").unwrap();
    for i in 0..spatial.levels.len() {
        let order = if i == 0 {
            "      -".to_string()
        } else {
            format!("{:7.3}", spatial.orders[i - 1])
        };
        writeln!(
            body,
            "         {:>10}   {:.6e}    {order}",
            spatial.levels[i], spatial.errors[i]
        )
        .unwrap();
    }
    writeln!(body).unwrap();
    writeln!(body, "temporal: dt          error vs ref    observed order").unwrap();
    for i in 0..temporal.dts.len() {
        let order = if i == 0 {
            "      -".to_string()
        } else {
            format!("{:7.3}", temporal.orders[i - 1])
        };
        writeln!(
            body,
            "         {:.6e}  {:.6e}    {order}",
            temporal.dts[i], temporal.errors[i]
        )
        .unwrap();
    }
    print!("{body}");
    write_report(outdir, &body)
}

fn mode_continuation(
    config: &SimulationConfig,
    mesh: &Mesh,
    outdir: &Path,
) -> crate::error::Result<()> {
    let f0 = initial_condition(mesh, config.params.q0, &config.initial_family()?)?;
    let result = epsilon_continuation(
        mesh,
        &config.params,
        &config.theta,
        &config.flow,
        &f0,
        &config.continuation.schedule,
    )?;
    let mut body = String::new();
    writeln!(body, "epsilon continuation").unwrap();
    writeln!(body, "--------------------").unwrap();
    writeln!(body, "eps_i         eps_{{i+1}}     |f_i - f_{{i+1}}|_L2(space-time)").unwrap();
    for (a, b, dist) in &result.cauchy_table {
        writeln!(body, "{a:.6e}  {b:.6e}  {dist:.12e}").unwrap();
    }
    if let Some(f) = &result.failure {
        writeln!(body, "TRUNCATED: {f}").unwrap();
        print!("{body}");
        write_report(outdir, &body)?;
        return Err(Error::LinearSolver(f.clone()));
    }
    print!("{body}");
    write_report(outdir, &body)
}

fn mode_bd(config: &SimulationConfig, mesh: &Mesh, outdir: &Path) -> crate::error::Result<()> {
    let theta0 = match &config.theta {
        TemperatureField::Constant { theta0 } => *theta0,
        _ => {
            return Err(Error::InvalidParameter {
                name: "bd",
                reason: "bd mode requires the constant temperature family (isothermal)".into(),
            })
        }
    };
    let q_mesh = mesh.q_submesh();
    let x_ref = mesh.x_reference();
    let kappa = config.flow.kappa(&x_ref, 0.0, config.mesh.dq);
    let cfg = BdConfig {
        de: config.params.de,
        q0: config.params.q0,
        theta0,
        kappa,
        n_particles: config.bd.particles,
        n_steps: config.bd.steps,
        dt: config.bd.dt,
        seed: config.bd.seed,
    };
    let result = bd_oracle(&q_mesh, &cfg)?;
    let feq = equilibrium_cell_masses(&q_mesh, config.params.q0, theta0);
    let tv = tv_distance(&result.histogram, &feq);
    let mut body = String::new();
    writeln!(body, "brownian-dynamics histogram").unwrap();
    writeln!(body, "---------------------------").unwrap();
    writeln!(body, "particles counted    = {}", result.counted).unwrap();
    writeln!(body, "particles discarded  = {}", result.discarded).unwrap();
    writeln!(body, "discarded fraction   = {:.6e}", result.discarded_fraction()).unwrap();
    writeln!(body, "TV vs equilibrium    = {tv:.12e}").unwrap();
    print!("{body}");
    // histogram as CSV next to the report
    let mut hist = String::from("cell,bd,feq\n");
    for i in 0..result.histogram.len() {
        writeln!(hist, "{i},{:.17e},{:.17e}", result.histogram[i], feq[i]).unwrap();
    }
    std::fs::write(outdir.join("bd_histogram.csv"), hist)?;
    write_report(outdir, &body)
}
