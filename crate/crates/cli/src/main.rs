//! Batch front door: experiment configuration, orchestration, deterministic
//! outputs, and plot-data emission.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use config::{AlphaChoice, ExperimentConfig};
use fluxlab::bundle::{build_bundle, bundle_chern};
use fluxlab::error::FluxError;
use fluxlab::evolution::{decompose_big_loop, loop_state, origin_ground_state, IntegratorSettings};
use fluxlab::hamiltonian::{TwistAngles, TwistedHamiltonianSpec};
use fluxlab::lattice::{ChargeSector, Site};
use fluxlab::models::{self, ModelPreset};
use fluxlab::observables::{
    berry_phase_loop, chern_fhs, chern_fhs_filled, fractional_diagnostics, kubo_sigma_xy,
    kubo_sigma_xy_filled, main_bound_decomposition, obstruction_sweep, power_phase_bound,
    BerryRoute, ProjectorMode,
};
use fluxlab::quasiadiabatic::{
    envelopes, locality_stats, s_op, s_op_quadrature, s_op_shell, s_op_truncated, shell_envelope,
    EnvelopeInputs, FilterParams, QuadratureControls,
};
use fluxlab::spectral::eig;

#[derive(Parser)]
#[command(name = "fluxlab", about = "flux-threading laboratory on finite torus lattices")]
struct Cli {
    /// Experiment configuration (JSON); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for reports and scan data.
    #[arg(long, global = true, default_value = "fluxlab-out")]
    out: PathBuf,
    /// Worker threads (defaults to the config value or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed override for seeded presets.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Integrator certification tolerance override.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Kubo conductance and the FHS Chern number of the configured model
    Conductance,
    /// Berry phases, loop overlaps and the quantization-bound ledger
    Loopscan,
    /// Stokes decomposition residuals of the 2π×2π loop
    Decompose,
    /// Shell norms of the localized super-operator against the envelope
    Locality,
    /// Averaged-path projector bundle over the flux mesh
    Bundle,
    /// Gap/conductance sweep interpolating towards a second model
    Obstruction,
    /// Topological-order and holonomy diagnostics for a degenerate ground space
    Fractional,
    /// Fast property sweep over the built-in pipelines
    Selftest,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Conductance => "conductance",
            Command::Loopscan => "loopscan",
            Command::Decompose => "decompose",
            Command::Locality => "locality",
            Command::Bundle => "bundle",
            Command::Obstruction => "obstruction",
            Command::Fractional => "fractional",
            Command::Selftest => "selftest",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(msgs) => {
            for m in &msgs {
                eprintln!("config error: {m}");
            }
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads.or(config.threads) {
        // a second init in the same process is harmless; ignore the error
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli.command, &config, &cli.out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e}", cli.command.name());
            ExitCode::from(match e {
                FluxError::Config(_) => 2,
                FluxError::Resource(_) => 4,
                _ => 3,
            })
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Vec<String>> {
    let mut config = match &cli.config {
        None => ExperimentConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| vec![format!("cannot read {}: {e}", path.display())])?;
            serde_json::from_str(&text).map_err(|e| vec![format!("malformed config: {e}")])?
        }
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(tol) = cli.tolerance {
        config.integrator.certify = Some(tol);
    }
    let problems = config.validate();
    if problems.is_empty() {
        Ok(config)
    } else {
        Err(problems)
    }
}

/// Pending output files; nothing touches the disk until the command finishes.
struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn new(dir: &Path) -> Self {
        Artifacts {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn json(&mut self, name: &str, hash: &str, payload: serde_json::Value) {
        let doc = json!({
            "meta": { "timestamp_unix": now_unix() },
            "provenance": { "config_hash": hash },
            "result": payload,
        });
        let mut bytes = serde_json::to_vec_pretty(&doc).expect("report serializes");
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("csv header");
        for row in rows {
            w.write_record(row).expect("csv row");
        }
        let bytes = w.into_inner().expect("csv buffer");
        self.files.push((name.to_string(), bytes));
    }

    fn commit(self) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(&self.dir)?;
        let mut written = Vec::new();
        for (name, bytes) in self.files {
            let path = self.dir.join(name);
            std::fs::write(&path, bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

struct Workbench {
    preset: ModelPreset,
    sector: ChargeSector,
    params: FilterParams,
    settings: IntegratorSettings,
    gamma: f64,
    hash: String,
}

fn bench(config: &ExperimentConfig) -> Result<Workbench, FluxError> {
    let preset = models::build_preset(&config.model.preset, config.seed, config.model.overrides)?;
    let sector = preset.sector()?;
    let h0 = preset.spec.assemble(TwistAngles::ZERO, &sector)?;
    let sd = eig(&h0)?;
    let gamma = match preset.filled_levels {
        Some(n) => sd.gap_above(n),
        None => sd.gap(),
    };
    let alpha = match &config.alpha {
        AlphaChoice::Value(a) => *a,
        AlphaChoice::Formula(_) => FilterParams::paper_alpha(preset.spec.lattice(), preset.spec.j_bound()),
    };
    let params = FilterParams::new(alpha, preset.spec.lattice().range(), preset.spec.j_bound());
    Ok(Workbench {
        preset,
        sector,
        params,
        settings: config.integrator,
        gamma,
        hash: config.hash(),
    })
}

fn run(command: Command, config: &ExperimentConfig, out: &Path) -> Result<(), FluxError> {
    let mut artifacts = Artifacts::new(out);
    match command {
        Command::Conductance => cmd_conductance(config, &mut artifacts)?,
        Command::Loopscan => cmd_loopscan(config, &mut artifacts)?,
        Command::Decompose => cmd_decompose(config, &mut artifacts)?,
        Command::Locality => cmd_locality(config, &mut artifacts)?,
        Command::Bundle => cmd_bundle(config, &mut artifacts)?,
        Command::Obstruction => cmd_obstruction(config, &mut artifacts)?,
        Command::Fractional => cmd_fractional(config, &mut artifacts)?,
        Command::Selftest => cmd_selftest(config, &mut artifacts)?,
    }
    let written = artifacts
        .commit()
        .map_err(|e| FluxError::Config(format!("cannot write outputs: {e}")))?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable")
}

fn cmd_conductance(config: &ExperimentConfig, artifacts: &mut Artifacts) -> Result<(), FluxError> {
    let wb = bench(config)?;
    let (report, chern) = match wb.preset.filled_levels {
        Some(n) => (
            kubo_sigma_xy_filled(&wb.preset.spec, &wb.sector, n)?,
            chern_fhs_filled(&wb.preset.spec, &wb.sector, n, config.mesh, 1e-9)?,
        ),
        None => (
            kubo_sigma_xy(&wb.preset.spec, &wb.sector, ProjectorMode::Unique)?,
            chern_fhs(&wb.preset.spec, &wb.sector, config.mesh, 1e-9)?,
        ),
    };
    artifacts.json(
        "conductance_report.json",
        &wb.hash,
        json!({
            "preset": wb.preset.name,
            "sector_charge": wb.sector.total_charge(),
            "sector_dim": wb.sector.dim(),
            "gamma": wb.gamma,
            "conductance": to_json(&report),
            "fhs_chern": chern,
            "mesh": config.mesh,
        }),
    );
    println!(
        "sigma_xy = {:+.8} (nearest integer {}, deviation {:.3e}); FHS Chern {}",
        report.sigma_xy, report.nearest_integer, report.deviation, chern
    );
    Ok(())
}

fn cmd_loopscan(config: &ExperimentConfig, artifacts: &mut Artifacts) -> Result<(), FluxError> {
    let wb = bench(config)?;
    let mut rows = Vec::new();
    for &r in &config.loop_rs {
        let phi_line = berry_phase_loop(&wb.preset.spec, &wb.sector, r, BerryRoute::LineIntegral)?;
        let phi_surface =
            berry_phase_loop(&wb.preset.spec, &wb.sector, r, BerryRoute::SurfaceIntegral)?;
        let state = loop_state(
            &wb.preset.spec,
            &wb.sector,
            (0.0, 0.0),
            r,
            &wb.params,
            &wb.settings,
            false,
        )?;
        let (psi0, _) = origin_ground_state(&wb.preset.spec, &wb.sector)?;
        let overlap: Complex64 = psi0
            .iter()
            .zip(state.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        let phase_dev = (overlap - Complex64::from_polar(1.0, phi_line)).norm();
        rows.push(vec![
            format!("{r}"),
            format!("{phi_line}"),
            format!("{phi_surface}"),
            format!("{}", overlap.re),
            format!("{}", overlap.im),
            format!("{phase_dev}"),
        ]);
    }
    artifacts.csv(
        "loopscan.csv",
        &[
            "r",
            "phi_line",
            "phi_surface",
            "overlap_re",
            "overlap_im",
            "phase_estimate_dev",
        ],
        &rows,
    );
    let main_bound = main_bound_decomposition(
        &wb.preset.spec,
        &wb.sector,
        config.n_loops,
        &wb.params,
        &wb.settings,
        wb.gamma,
    )?;
    artifacts.json(
        "loopscan_main_bound.json",
        &wb.hash,
        to_json(&main_bound),
    );
    println!(
        "loopscan over {:?}: ledger residual {:.2e}, implied |sigma - n| bound {:.3e}",
        config.loop_rs, main_bound.ledger.ledger_residual, main_bound.implied_sigma_bound
    );
    Ok(())
}

fn cmd_decompose(config: &ExperimentConfig, artifacts: &mut Artifacts) -> Result<(), FluxError> {
    let wb = bench(config)?;
    let mut rows = Vec::new();
    for steps in [
        wb.settings.steps_per_two_pi / 4,
        wb.settings.steps_per_two_pi / 2,
        wb.settings.steps_per_two_pi,
    ] {
        if steps == 0 {
            continue;
        }
        let settings = IntegratorSettings {
            steps_per_two_pi: steps,
            ..wb.settings
        };
        let d = decompose_big_loop(&wb.preset.spec, &wb.sector, config.n_loops, &wb.params, &settings)?;
        let defect = d
            .unitaries
            .iter()
            .map(|u| u.unitarity_defect)
            .fold(0.0f64, f64::max);
        rows.push(vec![
            format!("{}", config.n_loops),
            format!("{steps}"),
            format!("{}", d.residual),
            format!("{defect}"),
        ]);
        println!(
            "N = {} at {steps} steps/2π: residual {:.3e}, worst unitarity defect {:.2e}",
            config.n_loops, d.residual, defect
        );
    }
    artifacts.csv(
        "decompose.csv",
        &["n_loops", "steps_per_two_pi", "residual", "max_unitarity_defect"],
        &rows,
    );
    Ok(())
}

fn cmd_locality(config: &ExperimentConfig, artifacts: &mut Artifacts) -> Result<(), FluxError> {
    let wb = bench(config)?;
    let spec = &wb.preset.spec;
    let lat = *spec.lattice();
    let term = spec
        .terms()
        .get(config.shell_term)
        .ok_or_else(|| FluxError::Config(format!("shell_term {} out of range", config.shell_term)))?;
    let z: Vec<Site> = term.support().to_vec();
    let dim = wb.sector.dim();
    let mut a_sector = Array2::zeros((dim, dim));
    TwistedHamiltonianSpec::embed_into(&wb.sector, &z, term.matrix(), &mut a_sector);
    let norm_a = fluxlab::spectral::eigvalsh(&a_sector)
        .iter()
        .fold(0.0f64, |m, &v| m.max(v.abs()));

    let mut rows = Vec::new();
    for k in lat.range()..=lat.side() {
        let shell = s_op_shell(
            spec,
            &wb.sector,
            TwistAngles::ZERO,
            wb.params.alpha,
            &z,
            &a_sector,
            k,
        )?;
        let measured = fluxlab::spectral::eigvalsh(&shell)
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        let envelope = shell_envelope(k, lat.range(), &wb.params, norm_a);
        rows.push(vec![format!("{k}"), format!("{measured}"), format!("{envelope}")]);
    }
    artifacts.csv("locality_shells.csv", &["k", "shell_norm", "envelope"], &rows);

    let stats = locality_stats(spec, TwistAngles::ZERO, fluxlab::hamiltonian::TwistDirection::ThetaX);
    let env = envelopes(EnvelopeInputs {
        range: lat.range(),
        j: spec.j_bound(),
        q_max: lat.q_max(),
        gamma: wb.gamma.max(1e-12),
        l: lat.side() as f64,
        alpha: Some(wb.params.alpha),
    })?;
    artifacts.json(
        "locality_report.json",
        &wb.hash,
        json!({
            "preset": wb.preset.name,
            "term": term.label(),
            "stats": to_json(&stats),
            "envelopes": to_json(&env),
        }),
    );
    println!(
        "locality scan on '{}': {} shells, j_max exact {:.4} (bound {:.4}), s_max exact {} (bound {})",
        term.label(),
        rows.len(),
        stats.j_max_exact,
        stats.j_max_bound,
        stats.s_max_exact,
        stats.s_max_bound
    );
    Ok(())
}

fn cmd_bundle(config: &ExperimentConfig, artifacts: &mut Artifacts) -> Result<(), FluxError> {
    let wb = bench(config)?;
    let field = build_bundle(
        &wb.preset.spec,
        &wb.sector,
        config.mesh,
        config.kernel_halfwidth,
        &wb.params,
        &wb.settings,
    )?;
    let chern = bundle_chern(&field)?;
    let n = field.n_g;
    let mut rows = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let tau = 2.0 * std::f64::consts::PI;
            rows.push(vec![
                format!("{i}"),
                format!("{j}"),
                format!("{}", tau * i as f64 / n as f64),
                format!("{}", tau * j as f64 / n as f64),
                format!("{}", field.lambda1[i][j]),
                format!("{}", field.lambda2[i][j]),
                format!("{}", field.defect_x[i][j]),
                format!("{}", field.defect_y[i][j]),
            ]);
        }
    }
    artifacts.csv(
        "bundle_field.csv",
        &[
            "i",
            "j",
            "theta_x",
            "theta_y",
            "lambda1",
            "lambda2",
            "defect_x",
            "defect_y",
        ],
        &rows,
    );
    artifacts.json(
        "bundle_report.json",
        &wb.hash,
        json!({
            "preset": wb.preset.name,
            "mesh": field.n_g,
            "kernel_halfwidth": field.kernel_halfwidth,
            "eps_check": field.eps_check,
            "seam_defect": field.seam_defect,
            "idempotency_defect": field.idempotency_defect,
            "trace_defect": field.trace_defect,
            "generator_norm_max": field.d_max,
            "chern": chern,
        }),
    );
    println!(
        "bundle: ε̌ = {:.3e}, idempotency {:.2e}, Chern {chern}",
        field.eps_check, field.idempotency_defect
    );
    Ok(())
}

fn cmd_obstruction(config: &ExperimentConfig, artifacts: &mut Artifacts) -> Result<(), FluxError> {
    let wb = bench(config)?;
    let target_cfg = config.obstruction_target.clone().unwrap_or(config::ModelConfig {
        preset: "trivial_atomic".into(),
        overrides: fluxlab::models::PresetOverrides {
            side: Some(wb.preset.spec.lattice().side()),
            ..Default::default()
        },
    });
    let target = models::build_preset(&target_cfg.preset, config.seed, target_cfg.overrides)?;
    let filling = wb.preset.filled_levels.unwrap_or(1);
    let sweep = obstruction_sweep(&wb.preset.spec, &target.spec, &wb.sector, filling, 41)?;
    let rows: Vec<Vec<String>> = sweep
        .iter()
        .map(|p| vec![format!("{}", p.s), format!("{}", p.gap), format!("{}", p.sigma_xy)])
        .collect();
    artifacts.csv("obstruction_sweep.csv", &["s", "gap", "sigma_xy"], &rows);
    let gap_min = sweep.iter().map(|p| p.gap).fold(f64::INFINITY, f64::min);
    artifacts.json(
        "obstruction_report.json",
        &wb.hash,
        json!({
            "from": wb.preset.name,
            "to": target.name,
            "filling": filling,
            "gap_endpoints": [sweep.first().unwrap().gap, sweep.last().unwrap().gap],
            "gap_min": gap_min,
        }),
    );
    println!(
        "obstruction sweep {} -> {}: gap endpoints {:.4}/{:.4}, minimum {:.4e}",
        wb.preset.name,
        target.name,
        sweep.first().unwrap().gap,
        sweep.last().unwrap().gap,
        gap_min
    );
    Ok(())
}

fn cmd_fractional(config: &ExperimentConfig, artifacts: &mut Artifacts) -> Result<(), FluxError> {
    let wb = bench(config)?;
    // identity probe plus a local occupation probe away from the twists
    let lat = wb.preset.spec.lattice();
    let mut nloc = Array2::<Complex64>::zeros((2, 2));
    nloc[(1, 1)] = Complex64::new(1.0, 0.0);
    let probes = vec![
        (vec![Site::new(1, 1)], Array2::<Complex64>::eye(2)),
        (vec![Site::new(lat.wrap(3), lat.wrap(3))], nloc),
    ];
    let report = fractional_diagnostics(
        &wb.preset.spec,
        &wb.sector,
        config.ground_space,
        &probes,
        &wb.params,
        &wb.settings,
    )?;
    println!(
        "fractional q = {}: ε_topo = {:.3e}, |det Z - 1| = {:.3e}, nearest root phase {:.4}",
        report.q, report.epsilon_topo, report.det_z_deviation, report.nearest_root_phase
    );
    artifacts.json("fractional_report.json", &wb.hash, to_json(&report));
    Ok(())
}

fn cmd_selftest(config: &ExperimentConfig, artifacts: &mut Artifacts) -> Result<(), FluxError> {
    let hash = config.hash();
    let mut failures = 0usize;
    let mut results = Vec::new();
    let mut check = |name: &str, pass: bool, detail: String| {
        println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failures += 1;
        }
        results.push(json!({ "name": name, "pass": pass, "detail": detail }));
    };

    // filter routes agree on a small random pair
    {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed ^ 0x5e1f);
        let n = 6;
        let mut h = Array2::<Complex64>::zeros((n, n));
        let mut a = Array2::<Complex64>::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let x = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let y = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                h[(i, j)] = x;
                h[(j, i)] = x.conj();
                a[(i, j)] = y;
                a[(j, i)] = y.conj();
                if i == j {
                    h[(i, j)] = Complex64::new(h[(i, j)].re, 0.0);
                    a[(i, j)] = Complex64::new(a[(i, j)].re, 0.0);
                }
            }
        }
        let sd = eig(&h)?;
        let s1 = s_op(&sd, &a, 0.8)?;
        let s2 = s_op_quadrature(&h, &a, 0.8, QuadratureControls::default())?;
        let diff = s1
            .iter()
            .zip(s2.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0f64, f64::max);
        check("filter route agreement", diff <= 1e-6, format!("max diff {diff:.2e}"));
    }

    // twist/anti-twist isospectrality on the dimer toy
    {
        let preset = models::twist_dimer_toy()?;
        let sector = preset.sector()?;
        let e0 = fluxlab::spectral::eigvalsh(preset.spec.assemble(TwistAngles::ZERO, &sector)?.as_ref());
        let h = preset.spec.assemble_fresh(
            TwistAngles {
                theta_x: 1.1,
                phi_x: -1.1,
                theta_y: 0.6,
                phi_y: -0.6,
            },
            &sector,
        );
        let e = fluxlab::spectral::eigvalsh(&h);
        let dev = e0
            .iter()
            .zip(e.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        check("twist/anti-twist isospectrality", dev <= 1e-10, format!("max dev {dev:.2e}"));
    }

    // shell telescoping on the dimer toy
    {
        let preset = models::twist_dimer_toy()?;
        let sector = preset.sector()?;
        let spec = &preset.spec;
        let term = &spec.terms()[0];
        let dim = sector.dim();
        let mut a_sector = Array2::zeros((dim, dim));
        TwistedHamiltonianSpec::embed_into(&sector, term.support(), term.matrix(), &mut a_sector);
        let mut sum = Array2::<Complex64>::zeros((dim, dim));
        for k in 1..=3usize {
            sum = sum
                + s_op_shell(spec, &sector, TwistAngles::ZERO, 1.0, term.support(), &a_sector, k)?;
        }
        let direct =
            s_op_truncated(spec, &sector, TwistAngles::ZERO, 1.0, term.support(), &a_sector, 3)?;
        let diff = sum
            .iter()
            .zip(direct.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0f64, f64::max);
        check("shell telescoping", diff <= 1e-9, format!("residual {diff:.2e}"));
    }

    // Stokes residual on the dimer toy
    {
        let preset = models::twist_dimer_toy()?;
        let sector = preset.sector()?;
        let params = FilterParams::new(1.2, 1, preset.spec.j_bound());
        let d = decompose_big_loop(
            &preset.spec,
            &sector,
            2,
            &params,
            &IntegratorSettings::default().with_steps(96),
        )?;
        check(
            "stokes decomposition",
            d.residual <= 1e-7,
            format!("N=2 residual {:.2e}", d.residual),
        );
    }

    // the power-difference inequality on a quick sweep
    {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed ^ 0x90f7);
        let mut violations = 0usize;
        let mut n = 0usize;
        while n < 2000 {
            let rep = power_phase_bound(
                rng.gen_range(0.0..=1.0),
                rng.gen_range(-0.6..0.6),
                rng.gen_range(1..=40),
            );
            if !rep.within_hypothesis {
                continue;
            }
            if !rep.holds {
                violations += 1;
            }
            n += 1;
        }
        check("power-difference inequality", violations == 0, format!("{n} cases, {violations} violations"));
    }

    artifacts.json(
        "selftest_report.json",
        &hash,
        json!({ "checks": results, "failures": failures }),
    );
    if failures > 0 {
        return Err(FluxError::Accuracy(format!("{failures} selftest checks failed")));
    }
    Ok(())
}
