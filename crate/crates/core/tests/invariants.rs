//! Property and oracle tests beyond the acceptance criteria: a-priori
//! bounds under refinement, stability monitors, degenerate-data behavior,
//! the coarse full-dimensional setting, and the CLI surface.

use fene_cpd::assembly::{assemble_entropy, assemble_static, compose_a_eps, h1_gram};
use fene_cpd::cli;
use fene_cpd::config::parse_config;
use fene_cpd::diagnostics::{
    check_energy, check_positivity, energy_slacks_with, InvariantSeries, NormContext,
};
use fene_cpd::fields::{FlowField, TemperatureField};
use fene_cpd::linalg::eigen::operator_norm_vs_gram;
use fene_cpd::mesh::Mesh;
use fene_cpd::params::Params;
use fene_cpd::solver::{epsilon_continuation, Simulation};
use fene_cpd::state::{initial_condition, DensityState, InitialFamily};
use fene_cpd::wellposedness::audit;
use std::path::{Path, PathBuf};

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

/// Boundedness of the composed form against the H1 Gram matrix: the
/// measured operator norm grows by less than 5% over a refinement
/// doubling at fixed eps.
#[test]
fn operator_norm_bounded_under_refinement() {
    let params = Params {
        eps: 0.1,
        q0: 0.8,
        ..Params::default()
    };
    let theta = TemperatureField::affine(1.0, vec![0.2]).unwrap();
    let flow = FlowField::ShearKappa { rate: 0.7 };
    let mut norms = Vec::new();
    for n in [16usize, 32] {
        let mesh = Mesh::build(1, 1, n, n, 3).unwrap();
        let tm = assemble_static(&mesh, &params, &theta, &flow, 0.0).unwrap();
        let r = DensityState::new(
            0.0,
            (0..mesh.num_dofs()).map(|i| 0.3 + (i % 7) as f64 * 0.4).collect(),
        );
        let em = assemble_entropy(&mesh, &params, &theta, 0.0, &r).unwrap();
        let a = compose_a_eps(&tm, &em).unwrap();
        let g = h1_gram(&mesh);
        norms.push(operator_norm_vs_gram(&a, &g).unwrap());
    }
    let growth = norms[1] / norms[0] - 1.0;
    assert!(growth < 0.05, "norms {norms:?}, growth {growth}");
}

/// Unconditional L2 stability of the isothermal homogeneous scheme with
/// no drift: the norm sequence is nonincreasing step by step.
#[test]
fn isothermal_l2_nonincreasing() {
    let mesh = Mesh::build_homogeneous_x(1, 1, 64, 3).unwrap();
    let params = Params {
        eps: 1e-3,
        dt: 0.02,
        t_end: 0.5,
        ..Params::default()
    };
    let theta = TemperatureField::constant(1.0).unwrap();
    let f0 = initial_condition(&mesh, 1.0, &InitialFamily::FeneEquilibriumUniform {
        theta0: 1.0,
    })
    .unwrap();
    let mut sim = Simulation::new(&mesh, params, theta, FlowField::Quiescent).unwrap();
    let (traj, err) = sim.run(f0, 0);
    assert!(err.is_none());
    for w in traj.series.l2.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "L2 grew: {} -> {}", w[0], w[1]);
    }
    // with kappa = 0 the L1 norm cannot exceed its initial value either
    let base = traj.series.l1[0];
    for v in &traj.series.l1 {
        assert!(*v <= base * (1.0 + 1e-6));
    }
}

/// Mass drift in the isothermal homogeneous case is a boundary-flux
/// quadrature effect of first order in h: halving the cell width shrinks
/// it by at least 1.5x.
#[test]
fn mass_drift_first_order_in_h() {
    let mut drift = Vec::new();
    for nq in [100usize, 200] {
        let mesh = Mesh::build_homogeneous_x(1, 1, nq, 3).unwrap();
        // eps far below the cell scale so the boundary layer is a pure
        // quadrature effect
        let params = Params {
            eps: 1e-9,
            dt: 0.05,
            t_end: 2.0,
            ..Params::default()
        };
        let theta = TemperatureField::constant(1.0).unwrap();
        let f0 = initial_condition(&mesh, 1.0, &InitialFamily::FeneEquilibriumUniform {
            theta0: 1.0,
        })
        .unwrap();
        let mut sim = Simulation::new(&mesh, params, theta, FlowField::Quiescent).unwrap();
        let (traj, err) = sim.run(f0, 0);
        assert!(err.is_none());
        let m0 = traj.series.mass[0];
        let m1 = traj.series.mass.last().unwrap();
        drift.push((m1 - m0).abs());
    }
    assert!(
        drift[1] <= drift[0] / 1.5,
        "mass drift did not shrink: {drift:?}"
    );
}

/// Isothermal homogeneous continuation: with the equilibrium
/// concentrated away from the sphere (cold solvent), the consecutive
/// space-time distances decay essentially linearly in eps.
#[test]
fn isothermal_continuation_distances_first_order() {
    let mesh = Mesh::build_homogeneous_x(1, 1, 64, 3).unwrap();
    let params = Params {
        dt: 0.01,
        t_end: 0.5,
        ..Params::default()
    };
    let theta = TemperatureField::constant(0.25).unwrap();
    let f0 = initial_condition(&mesh, 1.0, &InitialFamily::FeneEquilibriumUniform {
        theta0: 0.25,
    })
    .unwrap();
    let result = epsilon_continuation(
        &mesh,
        &params,
        &theta,
        &FlowField::Quiescent,
        &f0,
        &[0.1, 0.05, 0.025, 0.0125],
    )
    .unwrap();
    assert!(result.failure.is_none());
    let d: Vec<f64> = result.cauchy_table.iter().map(|r| r.2).collect();
    assert!(d[0] <= 0.02, "{d:?}");
    for w in d.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio >= 1.7, "sub-first-order decay: {d:?}");
    }
}

/// Smoke regression on the full non-isothermal operator: deterministic
/// terminal norms frozen from a reference run.
#[test]
fn nonisothermal_smoke_regression() {
    let mesh = Mesh::build(1, 1, 16, 16, 3).unwrap();
    let params = Params {
        de: 5.0,
        q0: 0.2,
        eps: 0.05,
        dt: 0.01,
        t_end: 0.1,
        ..Params::default()
    };
    let theta = TemperatureField::affine(1.0, vec![0.1]).unwrap();
    let flow = FlowField::ShearKappa { rate: 1.0 };
    let f0 = initial_condition(&mesh, params.q0, &InitialFamily::FeneEquilibriumBump {
        theta0: 1.0,
    })
    .unwrap();
    let mut sim = Simulation::new(&mesh, params, theta, flow).unwrap();
    let (traj, err) = sim.run(f0.clone(), 1);
    assert!(err.is_none());
    // trajectory contract
    assert_eq!(traj.states[0], f0);
    for w in traj.times.windows(2) {
        assert!(w[1] > w[0]);
    }
    for v in traj
        .series
        .l1
        .iter()
        .chain(&traj.series.l2)
        .chain(&traj.series.h1)
        .chain(&traj.series.mass)
    {
        assert!(v.is_finite());
    }
    // frozen reference values
    let l2 = traj.series.l2.last().unwrap();
    let l1 = traj.series.l1.last().unwrap();
    let h1 = traj.series.h1.last().unwrap();
    assert!((l2 - 1.83489308903023535e-1).abs() <= 1e-10 * l2);
    assert!((l1 - 2.10844089308170279e-1).abs() <= 1e-10 * l1);
    assert!((h1 - 6.71381328632915331e-1).abs() <= 1e-10 * h1);
}

/// The positivity monitor reports injected negative data instead of
/// masking it.
#[test]
fn positivity_monitor_flags_negative_state() {
    let mesh = Mesh::build(1, 1, 6, 6, 3).unwrap();
    let ctx = NormContext::new(&mesh);
    let mut series = InvariantSeries::default();
    let mut coeffs = vec![0.1; mesh.num_dofs()];
    coeffs[3] = -0.05;
    series.record(&DensityState::new(0.0, coeffs), &ctx);
    let rep = check_positivity(&series);
    assert!(rep.min_value < 0.0);
    assert!(rep.worst_neg_mass > 0.0);
    assert!(rep.worst_neg_fraction > 0.0);
}

/// Falsifiability of the energy check: the calibrated constants accept
/// the run, a tenfold-inflated coercivity constant with the same frozen
/// c2 is rejected.
#[test]
fn energy_check_is_falsifiable() {
    let mesh = Mesh::build(1, 1, 16, 16, 3).unwrap();
    let params = Params {
        de: 5.0,
        q0: 0.2,
        eps: 0.05,
        dt: 0.01,
        t_end: 0.2,
        ..Params::default()
    };
    let theta = TemperatureField::affine(1.0, vec![0.1]).unwrap();
    let flow = FlowField::ShearKappa { rate: 1.0 };
    let report = audit(&mesh, &params, &theta).unwrap();
    let c1 = 0.95 * report.lambda_m.unwrap();
    let f0 = initial_condition(&mesh, params.q0, &InitialFamily::FeneEquilibriumBump {
        theta0: 1.0,
    })
    .unwrap();
    let mut sim = Simulation::new(&mesh, params, theta, flow).unwrap();
    let (mut traj, err) = sim.run(f0, 0);
    assert!(err.is_none());
    let honest = check_energy(&mut traj.series, c1).unwrap();
    assert!(honest.min_slack >= 0.0);
    let inflated = energy_slacks_with(&traj.series, 10.0 * c1, honest.c2);
    let min_inflated = inflated.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(min_inflated < 0.0, "inflated c1 not rejected: {min_inflated}");
}

/// Random-vector form of the strong-condition coercivity bound.
#[test]
fn full_form_dominates_certified_constant_on_random_vectors() {
    use rand::{Rng, SeedableRng};
    let mesh = Mesh::build(1, 1, 16, 16, 3).unwrap();
    let params = Params {
        q0: 0.2,
        eps: 0.1,
        ..Params::default()
    };
    let theta = TemperatureField::affine(1.0, vec![0.1]).unwrap();
    let report = audit(&mesh, &params, &theta).unwrap();
    let cap = report.lambda_cap_m.unwrap();
    let tm = assemble_static(&mesh, &params, &theta, &FlowField::Quiescent, 0.0).unwrap();
    let bf = tm.b_form().add(&tm.fene.symmetric_part()).unwrap();
    let g = h1_gram(&mesh);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let x: Vec<f64> = (0..mesh.num_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let num = bf.bilinear(&x, &x);
        let den = g.bilinear(&x, &x);
        assert!(num >= 0.95 * cap * den, "{num} vs {}", 0.95 * cap * den);
    }
}

/// The full-dimensional setting (dx = dq = 2) runs at coarse resolution
/// with finite diagnostics through the nonlinear path.
#[test]
fn full_dimensional_coarse_smoke() {
    let mesh = Mesh::build(2, 2, 4, 8, 2).unwrap();
    let params = Params {
        de: 2.0,
        q0: 0.5,
        eps: 0.1,
        dt: 0.02,
        t_end: 0.06,
        ..Params::default()
    };
    let theta = TemperatureField::affine(1.0, vec![0.1, 0.0]).unwrap();
    let flow = FlowField::Cellular { amplitude: 0.5 };
    let f0 = initial_condition(&mesh, params.q0, &InitialFamily::FeneEquilibriumBump {
        theta0: 1.0,
    })
    .unwrap();
    let mut sim = Simulation::new(&mesh, params, theta, flow).unwrap();
    let (traj, err) = sim.run(f0, 1);
    assert!(err.is_none(), "{err:?}");
    assert_eq!(traj.reports.len(), 3);
    for v in traj.series.l2.iter().chain(&traj.series.h1) {
        assert!(v.is_finite());
    }
}

// ------------------------------------------------------------------ CLI

fn run_cli(args: &[&str]) -> i32 {
    let owned: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    cli::execute(&owned)
}

#[test]
fn cli_check_reports_both_margins() {
    let tmp = tempfile::tempdir().unwrap();
    let code = run_cli(&[
        "check",
        "--config",
        config_path("noniso.cfg").to_str().unwrap(),
        "--override",
        &format!("output.dir={}", tmp.path().display()),
        "--override",
        "output.dump_operators=true",
    ]);
    assert_eq!(code, 0);
    let report = std::fs::read_to_string(tmp.path().join("report.txt")).unwrap();
    assert!(report.contains("margin_gradient"));
    assert!(report.contains("margin_strong"));
    assert!(report.contains("holds"));
    assert!(report.contains("dofs"));
    // kappa-vs-grad-v consistency note for the prescribed-shear family
    assert!(report.contains("kappa differs"));
    // triplet dumps exist and have the documented format
    let fene = std::fs::read_to_string(tmp.path().join("operators/fene.txt")).unwrap();
    let first = fene.lines().next().unwrap();
    assert_eq!(first.split_whitespace().count(), 3);
}

#[test]
fn cli_run_rejects_failing_strong_condition() {
    let tmp = tempfile::tempdir().unwrap();
    // Q0 = 1 defeats the strong condition while the gradient one holds
    let code = run_cli(&[
        "run",
        "--config",
        config_path("noniso.cfg").to_str().unwrap(),
        "--override",
        &format!("output.dir={}", tmp.path().display()),
        "--override",
        "params.q0=1.0",
    ]);
    assert_eq!(code, 1);
    // and --allow-unverified lets the same run proceed
    let code = run_cli(&[
        "run",
        "--config",
        config_path("noniso.cfg").to_str().unwrap(),
        "--override",
        &format!("output.dir={}", tmp.path().display()),
        "--override",
        "params.q0=1.0",
        "--override",
        "params.t_end=0.01",
        "--override",
        "params.dt=0.005",
        "--allow-unverified",
    ]);
    assert_eq!(code, 0);
}

#[test]
fn cli_solver_failure_exits_two_with_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let code = run_cli(&[
        "run",
        "--config",
        config_path("noniso.cfg").to_str().unwrap(),
        "--override",
        &format!("output.dir={}", tmp.path().display()),
        "--override",
        "params.max_picard=1",
    ]);
    assert_eq!(code, 2);
    // partial outputs flushed: at least the initial snapshot and the
    // diagnostics file
    assert!(tmp.path().join("snapshots/f_00000.csv").exists());
    assert!(tmp.path().join("diagnostics.csv").exists());
    let report = std::fs::read_to_string(tmp.path().join("report.txt")).unwrap();
    assert!(report.contains("ABORTED"));
}

#[test]
fn cli_mms_writes_order_table() {
    let tmp = tempfile::tempdir().unwrap();
    let code = run_cli(&[
        "mms",
        "--config",
        config_path("diffusion-mms.cfg").to_str().unwrap(),
        "--override",
        &format!("output.dir={}", tmp.path().display()),
    ]);
    assert_eq!(code, 0);
    let report = std::fs::read_to_string(tmp.path().join("report.txt")).unwrap();
    assert!(report.contains("observed order"));
    assert!(report.contains("temporal"));
    // two spatial levels and the header line
    assert!(report.lines().filter(|l| l.trim_start().starts_with('8')).count() >= 1);
}

#[test]
fn cli_steady_and_bd_reports() {
    let tmp = tempfile::tempdir().unwrap();
    // shorten the run; the report label is what is under test here
    let code = run_cli(&[
        "steady",
        "--config",
        config_path("steady.cfg").to_str().unwrap(),
        "--override",
        &format!("output.dir={}", tmp.path().display()),
        "--override",
        "params.t_end=0.5",
    ]);
    assert_eq!(code, 0);
    let report = std::fs::read_to_string(tmp.path().join("report.txt")).unwrap();
    assert!(report.contains("relative L2 distance"));

    let tmp2 = tempfile::tempdir().unwrap();
    let code = run_cli(&[
        "bd",
        "--config",
        config_path("steady.cfg").to_str().unwrap(),
        "--override",
        &format!("output.dir={}", tmp2.path().display()),
        "--override",
        "bd.particles=2000",
        "--override",
        "bd.steps=50",
    ]);
    assert_eq!(code, 0);
    assert!(tmp2.path().join("bd_histogram.csv").exists());
    let report = std::fs::read_to_string(tmp2.path().join("report.txt")).unwrap();
    assert!(report.contains("TV vs equilibrium"));
}

#[test]
fn shipped_configs_roundtrip() {
    for name in ["steady.cfg", "noniso.cfg", "diffusion-mms.cfg", "minimal.cfg"] {
        let text = std::fs::read_to_string(config_path(name)).unwrap();
        let parsed = parse_config(&text).unwrap();
        let emitted = parsed.emit();
        let reparsed = parse_config(&emitted).unwrap();
        assert_eq!(parsed, reparsed, "round-trip failed for {name}");
    }
}

#[test]
fn custom_nodal_initial_condition_from_file() {
    let tmp = tempfile::tempdir().unwrap();
    let mesh = Mesh::build(1, 1, 8, 32, 3).unwrap();
    let nodal = tmp.path().join("nodal.csv");
    let values: Vec<String> = (0..mesh.num_dofs()).map(|i| format!("{}", 1 + i % 3)).collect();
    std::fs::write(&nodal, values.join("\n")).unwrap();
    let cfg_text = format!(
        "[params]\nt_end = 0.01\ndt = 0.005\n[mesh]\nnx = 8\nnq = 32\n[initial]\nfamily = custom-nodal\nfile = {}\n[output]\ndir = {}\n",
        nodal.display(),
        tmp.path().join("out").display()
    );
    let cfg_file = tmp.path().join("c.cfg");
    std::fs::write(&cfg_file, cfg_text).unwrap();
    let code = run_cli(&[
        "run",
        "--config",
        cfg_file.to_str().unwrap(),
        "--allow-unverified",
    ]);
    assert_eq!(code, 0);
}
