//! Acceptance suite: one test per shipping criterion, each printing a
//! PASS/FAIL line with the measured numbers (run with `--nocapture` to see
//! them all).

use std::time::Instant;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use fluxlab::evolution::{
    decompose_big_loop, integrate_axis, loop_state, origin_ground_state, AxisMode,
    IntegratorSettings,
};
use fluxlab::hamiltonian::{InteractionTerm, TwistAngles, TwistedHamiltonianSpec};
use fluxlab::lattice::{ChargeSector, Site, TorusLattice};
use fluxlab::models::{self, PresetOverrides};
use fluxlab::observables::{
    berry_curvature, berry_phase_loop, chern_fhs, chern_fhs_filled, kubo_sigma_xy,
    kubo_sigma_xy_filled, obstruction_sweep, power_phase_bound, BerryRoute, ProjectorMode,
};
use fluxlab::quasiadiabatic::{
    envelopes, filter_weight, gauss_legendre, s_op, s_op_quadrature, s_op_shell, s_op_truncated,
    shell_envelope, Axis, EnvelopeInputs, FilterParams, QuadratureControls, SQRT_2PI,
};
use fluxlab::spectral::{eig, eigvalsh, parallel_transport};

const TAU: f64 = 2.0 * std::f64::consts::PI;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_hermitian(n: usize, rng: &mut impl Rng) -> Array2<Complex64> {
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    let md = m.t().mapv(|z: Complex64| z.conj());
    (m + md).mapv(|z| z * 0.5)
}

fn op_norm(a: &Array2<Complex64>) -> f64 {
    let ada = a.t().mapv(|z: Complex64| z.conj()).dot(a);
    eigvalsh(&ada).iter().fold(0.0f64, |m, &v| m.max(v)).max(0.0).sqrt()
}

fn vec_norm(a: &Array1<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn inner(a: &Array1<Complex64>, b: &Array1<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {id:02} [{}] {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id:02} ({name}): {detail}");
}

/// Hardcore-hopping chain along the row y = 1; the shell-locality testbed.
fn chain_spec(l: usize) -> (TorusLattice, TwistedHamiltonianSpec) {
    let lat = TorusLattice::new(l, 1, 1).unwrap();
    let li = l as i32;
    let mut terms = Vec::new();
    for x in 1..=li {
        let a = Site::new(lat.wrap(x), lat.wrap(1));
        let b = Site::new(lat.wrap(x + 1), lat.wrap(1));
        let mut m = Array2::zeros((4, 4));
        m[(2, 1)] = c(0.8, 0.15);
        m[(1, 2)] = c(0.8, -0.15);
        m[(3, 3)] = c(0.25, 0.0);
        terms.push(InteractionTerm::new(&lat, vec![a, b], m, format!("bond{x}")).unwrap());
    }
    let spec = TwistedHamiltonianSpec::new(lat, terms, 4.0).unwrap();
    (lat, spec)
}

#[test]
fn acceptance_01_s_alpha_route_agreement() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let n = 2 + (k % 15);
        let h = random_hermitian(n, &mut rng);
        let a = random_hermitian(n, &mut rng);
        let alpha = rng.gen_range(0.4..1.2);
        let sd = eig(&h).unwrap();
        let s1 = s_op(&sd, &a, alpha).unwrap();
        let s2 = s_op_quadrature(&h, &a, alpha, QuadratureControls::default()).unwrap();
        for (x, y) in s1.iter().zip(s2.iter()) {
            worst = worst.max((x - y).norm());
        }
    }
    let dt = start.elapsed().as_secs_f64();
    verdict(
        1,
        "S_alpha spectral vs quadrature",
        worst <= 1e-6 && dt < 30.0,
        &format!("max elementwise diff {worst:.3e} over 20 pairs in {dt:.1}s (≤1e-6, <30s)"),
    );
}

#[test]
fn acceptance_02_s_alpha_contracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut herm_worst = 0.0f64;
    let mut norm_violations = 0usize;
    for k in 0..100 {
        let n = 2 + (k % 9);
        let h = random_hermitian(n, &mut rng);
        let a = random_hermitian(n, &mut rng);
        let alpha = rng.gen_range(0.2..3.0);
        let sd = eig(&h).unwrap();
        let s = s_op(&sd, &a, alpha).unwrap();
        for i in 0..n {
            for j in 0..n {
                herm_worst = herm_worst.max((s[(i, j)] - s[(j, i)].conj()).norm());
            }
        }
        if op_norm(&s) > 2.0 * alpha / SQRT_2PI * op_norm(&a) + 1e-12 {
            norm_violations += 1;
        }
    }
    // commuting pair annihilates
    let h = random_hermitian(7, &mut rng);
    let a = h.dot(&h).mapv(|z| z * 0.4);
    let sd = eig(&h).unwrap();
    let s0 = op_norm(&s_op(&sd, &a, 1.3).unwrap());
    let pass = herm_worst <= 1e-12 && norm_violations == 0 && s0 <= 1e-12;
    verdict(
        2,
        "S_alpha contracts",
        pass,
        &format!(
            "hermiticity {herm_worst:.2e} (≤1e-12), norm violations {norm_violations}/100, commuting case {s0:.2e}"
        ),
    );
}

/// Quasi-adiabatic flow of the test lemma, integrated with RK4 on the state.
fn quasi_flow(
    fam: &dyn Fn(f64) -> Array2<Complex64>,
    dfam: &dyn Fn(f64) -> Array2<Complex64>,
    alpha: f64,
    theta: f64,
    steps: usize,
    psi0: Array1<Complex64>,
) -> Array1<Complex64> {
    let h = theta / steps as f64;
    let rhs = |t: f64, psi: &Array1<Complex64>| -> Array1<Complex64> {
        let sd = eig(&fam(t)).unwrap();
        let s = s_op(&sd, &dfam(t), alpha).unwrap();
        s.dot(psi).mapv(|z| z * Complex64::new(0.0, 1.0))
    };
    let mut psi = psi0;
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = rhs(t, &psi);
        let k2 = rhs(t + 0.5 * h, &(&psi + &k1.mapv(|z| z * (0.5 * h))));
        let k3 = rhs(t + 0.5 * h, &(&psi + &k2.mapv(|z| z * (0.5 * h))));
        let k4 = rhs(t + h, &(&psi + &k3.mapv(|z| z * h)));
        psi = &psi + &(k1 + k2.mapv(|z| z * 2.0) + k3.mapv(|z| z * 2.0) + k4).mapv(|z| z * (h / 6.0));
        let n = vec_norm(&psi);
        psi.mapv_inplace(|z| z / n);
    }
    psi
}

#[test]
fn acceptance_03_adiabatic_approximation() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let theta = 0.5;
    let mut violations = 0usize;
    let mut mono_failures = 0usize;
    let mut worst_ratio = 0.0f64;
    for _ in 0..10 {
        // gapped 4-level path H(t) = A + tB with a lifted ground state
        let mut a = random_hermitian(4, &mut rng);
        let sd_a = eig(&a).unwrap();
        let v0 = sd_a.ground_state();
        for i in 0..4 {
            for j in 0..4 {
                a[(i, j)] -= v0[i] * v0[j].conj() * 2.5;
            }
        }
        let mut b = random_hermitian(4, &mut rng);
        b.mapv_inplace(|z| z * 0.15);
        let fam = |t: f64| &a + &b.mapv(|z| z * t);
        let dfam = |_t: f64| b.clone();

        // uniform gap along the path
        let mut delta = f64::INFINITY;
        for k in 0..=20 {
            let t = theta * k as f64 / 20.0;
            delta = delta.min(eig(&fam(t)).unwrap().gap());
        }
        let sup_dh = op_norm(&b);
        let alpha = 0.8 / delta;

        let dev = |alpha: f64| -> f64 {
            let sd0 = eig(&fam(0.0)).unwrap();
            let phi = quasi_flow(&fam, &dfam, alpha, theta, 200, sd0.ground_state());
            let tr = parallel_transport(&fam, None, (0.0, theta), 200, delta * 0.5).unwrap();
            vec_norm(&(&phi - tr.final_state()))
        };
        let d1 = dev(alpha);
        let d2 = dev(2.0 * alpha);
        let bound = 2.0 * theta * sup_dh * (-alpha * alpha * delta * delta).exp() / delta;
        worst_ratio = worst_ratio.max(d1 / bound);
        if d1 > bound {
            violations += 1;
        }
        if d2 >= d1 {
            mono_failures += 1;
        }
    }
    verdict(
        3,
        "adiabatic approximation bound",
        violations == 0 && mono_failures == 0,
        &format!(
            "10 gapped 4-level paths, worst measured/bound {worst_ratio:.3}, dev(2α)<dev(α) failures {mono_failures}"
        ),
    );
}

#[test]
fn acceptance_04_gap_drift() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut violations = 0usize;
    for _ in 0..10 {
        let mut a = random_hermitian(5, &mut rng);
        let sd_a = eig(&a).unwrap();
        let v0 = sd_a.ground_state();
        for i in 0..5 {
            for j in 0..5 {
                a[(i, j)] -= v0[i] * v0[j].conj() * 2.0;
            }
        }
        let mut b = random_hermitian(5, &mut rng);
        b.mapv_inplace(|z| z * 0.3);
        let gap0 = eig(&a).unwrap().gap();
        let sup_dh = op_norm(&b);
        for k in 0..=25 {
            let t = k as f64 * 0.04;
            let gap = eig(&(&a + &b.mapv(|z| z * t))).unwrap().gap();
            if gap < gap0 - 2.0 * t * sup_dh - 1e-12 {
                violations += 1;
            }
        }
    }
    verdict(
        4,
        "gap drift estimate",
        violations == 0,
        &format!("Δ(θ) ≥ Δ(0) - 2|θ|·sup‖∂H‖ on 10 random paths, violations {violations}"),
    );
}

#[test]
fn acceptance_05_exact_stokes_decomposition() {
    let preset = models::twist_dimer_toy().unwrap();
    let sector = preset.sector().unwrap();
    let params = FilterParams::new(3.0, 1, preset.spec.j_bound());

    let residual = |n: usize, steps: usize| {
        decompose_big_loop(
            &preset.spec,
            &sector,
            n,
            &params,
            &IntegratorSettings::default().with_steps(steps),
        )
        .unwrap()
        .residual
    };
    let r2 = residual(2, 256);
    let r3 = residual(3, 256);
    // step-halving window ending at the default step count; the default
    // residual itself sits at the cancellation floor
    let r3_coarse = residual(3, 64);
    let shrink = r3_coarse / r3.max(1e-300);
    let pass = r2 <= 1e-7 && r3 <= 1e-7 && shrink >= 8.0;
    verdict(
        5,
        "exact Stokes decomposition",
        pass,
        &format!(
            "N=2 residual {r2:.3e}, N=3 residual {r3:.3e} at default steps (≤1e-7); halving the step twice ({r3_coarse:.3e} → {r3:.3e}) shrinks by {shrink:.0}x (≥8)"
        ),
    );
}

#[test]
fn acceptance_06_berry_stokes_consistency() {
    let preset = models::flux_quantum_toy(PresetOverrides::default()).unwrap();
    let sector = preset.sector().unwrap();
    let r = 0.2;
    let line = berry_phase_loop(&preset.spec, &sector, r, BerryRoute::LineIntegral).unwrap();
    let surface = berry_phase_loop(&preset.spec, &sector, r, BerryRoute::SurfaceIntegral).unwrap();
    let disagreement = (line - surface).abs();

    let g0 = berry_curvature(&preset.spec, &sector, 0.0, 0.0, 1).unwrap();
    let mut errs = Vec::new();
    for r in [0.05, 0.1, 0.2] {
        let phi = berry_phase_loop(&preset.spec, &sector, r, BerryRoute::SurfaceIntegral).unwrap();
        errs.push(((phi / (r * r) - g0).abs()).max(1e-16));
    }
    let slope = (errs[2].ln() - errs[0].ln()) / (0.2f64.ln() - 0.05f64.ln());
    let pass = disagreement <= 1e-6 && errs[0] < errs[1] && errs[1] < errs[2] && slope >= 0.9;
    verdict(
        6,
        "Berry line/surface consistency",
        pass,
        &format!(
            "line-surface diff {disagreement:.3e} (≤1e-6); |φ(r)/r² - g(0,0)| = {:.2e}/{:.2e}/{:.2e} at r = 0.05/0.1/0.2, empirical slope {slope:.2} (≥0.9)",
            errs[0], errs[1], errs[2]
        ),
    );
}

#[test]
fn acceptance_07_quantization_at_desk_scale() {
    let start = Instant::now();
    let preset = models::chern_fermion_toy(PresetOverrides::default()).unwrap();
    let sector = preset.sector().unwrap();
    let filled = preset.filled_levels.unwrap();
    let c6 = chern_fhs_filled(&preset.spec, &sector, filled, 6, 1e-6).unwrap();
    let c12 = chern_fhs_filled(&preset.spec, &sector, filled, 12, 1e-6).unwrap();
    let kubo = kubo_sigma_xy_filled(&preset.spec, &sector, filled).unwrap();
    let dev = (kubo.sigma_xy - c6 as f64).abs();

    let trivial = models::trivial_atomic(PresetOverrides {
        side: Some(6),
        ..Default::default()
    })
    .unwrap();
    let tsec = trivial.sector().unwrap();
    let sig0 = kubo_sigma_xy(&trivial.spec, &tsec, ProjectorMode::Unique)
        .unwrap()
        .sigma_xy;
    let dt = start.elapsed().as_secs_f64();
    let pass = c6 == c12 && c6.abs() == 1 && dev <= 1e-2 && sig0.abs() <= 1e-10 && dt < 300.0;
    verdict(
        7,
        "quantization at desk scale",
        pass,
        &format!(
            "filled-band σ = {:.6} vs FHS integer {c6} (dev {dev:.2e} ≤ 1e-2); mesh stable 6↔12: {}; trivial σ = {sig0:.2e} (≤1e-10); runtime {dt:.0}s (<300)",
            kubo.sigma_xy,
            c6 == c12
        ),
    );
}

#[test]
fn acceptance_08_shell_locality() {
    let (lat, spec) = chain_spec(8);
    let sector = ChargeSector::enumerate(&lat, 1).unwrap();
    let params = FilterParams::new(1.1, lat.range(), spec.j_bound());
    let z: Vec<Site> = spec.terms()[0].support().to_vec();
    let dim = sector.dim();
    let mut a_sector = Array2::zeros((dim, dim));
    TwistedHamiltonianSpec::embed_into(&sector, &z, spec.terms()[0].matrix(), &mut a_sector);
    let norm_a = op_norm(&a_sector);

    let mut violations = 0usize;
    let mut sum: Array2<Complex64> = Array2::zeros((dim, dim));
    for k in lat.range()..=lat.side() {
        let shell = s_op_shell(
            &spec,
            &sector,
            TwistAngles::ZERO,
            params.alpha,
            &z,
            &a_sector,
            k,
        )
        .unwrap();
        if op_norm(&shell) > shell_envelope(k, lat.range(), &params, norm_a) + 1e-12 {
            violations += 1;
        }
        sum = sum + shell;
    }
    let direct = s_op_truncated(
        &spec,
        &sector,
        TwistAngles::ZERO,
        params.alpha,
        &z,
        &a_sector,
        lat.side(),
    )
    .unwrap();
    let telescope = op_norm(&(&sum - &direct));
    let pass = violations == 0 && telescope <= 1e-9;
    verdict(
        8,
        "shell locality",
        pass,
        &format!(
            "every ‖S_α^k‖ under the envelope for k = R..L ({violations} violations); telescoping residual {telescope:.2e} (≤1e-9)"
        ),
    );
}

#[test]
fn acceptance_09_twist_algebra() {
    let preset = models::hofstadter_hardcore(PresetOverrides::default()).unwrap();
    let sector = preset.sector().unwrap();
    let h0 = preset.spec.assemble(TwistAngles::ZERO, &sector).unwrap();
    let e0 = eigvalsh(&h0);
    let mut worst = 0.0f64;
    for i in 0..5 {
        for j in 0..5 {
            let tx = TAU * i as f64 / 5.0;
            let ty = TAU * j as f64 / 5.0;
            let h = preset
                .spec
                .assemble_fresh(
                    TwistAngles {
                        theta_x: tx,
                        phi_x: -tx,
                        theta_y: ty,
                        phi_y: -ty,
                    },
                    &sector,
                );
            let e = eigvalsh(&h);
            for (a, b) in e0.iter().zip(e.iter()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    // exact 2π periodicity
    let h_tau = preset
        .spec
        .assemble_fresh(TwistAngles::xy(TAU, TAU), &sector);
    let mut per = 0.0f64;
    for (a, b) in h_tau.iter().zip(h0.iter()) {
        per = per.max((a - b).norm());
    }
    let pass = worst <= 1e-10 && per <= 1e-12;
    verdict(
        9,
        "twist algebra",
        pass,
        &format!("twist/anti-twist isospectrality {worst:.2e} on a 5x5 grid (≤1e-10); 2π periodicity {per:.2e} (≤1e-12)"),
    );
}

#[test]
fn acceptance_10_power_difference_inequality() {
    let worked = power_phase_bound(0.99, 0.01, 10);
    let worked_ok = (worked.lhs - 0.13483).abs() <= 1e-4
        && (worked.rhs - 0.21549).abs() <= 1e-4
        && worked.holds;
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut checked = 0usize;
    let mut violations = 0usize;
    while checked < 100_000 {
        let b = rng.gen_range(0.0..=1.0);
        let theta = rng.gen_range(-0.8..0.8);
        let m = rng.gen_range(1..=50);
        let rep = power_phase_bound(b, theta, m);
        if !rep.within_hypothesis {
            continue;
        }
        if !rep.holds {
            violations += 1;
        }
        checked += 1;
    }
    verdict(
        10,
        "power-difference inequality",
        worked_ok && violations == 0,
        &format!(
            "worked case lhs {:.5} ≤ rhs {:.5}; {checked} randomized in-hypothesis cases, {violations} violations",
            worked.lhs, worked.rhs
        ),
    );
}

#[test]
fn acceptance_11_big_loop_triviality_and_translation() {
    let preset = models::twist_dimer_toy().unwrap();
    let sector = preset.sector().unwrap();
    let spec = &preset.spec;
    let settings = IntegratorSettings::default().with_steps(192);
    let (psi0, gamma) = origin_ground_state(spec, &sector).unwrap();
    let alpha = 4.0 / gamma * 0.474; // αγ ≈ 1.9 and 3.8 at the two test points

    let measure = |alpha: f64| -> (f64, f64) {
        let params = FilterParams::new(alpha, 1, spec.j_bound());
        let big = loop_state(spec, &sector, (0.0, 0.0), TAU, &params, &settings, false).unwrap();
        let big_dev = (inner(&psi0, &big) - c(1.0, 0.0)).norm();
        let r = TAU / 4.0;
        let base = inner(
            &psi0,
            &loop_state(spec, &sector, (0.0, 0.0), r, &params, &settings, false).unwrap(),
        );
        let mut trans_dev = 0.0f64;
        for k in 0..12 {
            let tx = TAU * ((k * 5) % 12) as f64 / 12.0;
            let ty = TAU * ((k * 7 + 3) % 12) as f64 / 12.0;
            let p = inner(
                &psi0,
                &loop_state(spec, &sector, (tx, ty), r, &params, &settings, true).unwrap(),
            );
            trans_dev = trans_dev.max((p - base).norm());
        }
        (big_dev, trans_dev)
    };
    let (big1, trans1) = measure(alpha);
    let (big2, trans2) = measure(2.0 * alpha);
    let pass = big2 < big1 && trans2 < trans1;
    verdict(
        11,
        "big-loop triviality and translation",
        pass,
        &format!(
            "|<Ψ0|Ψ⟲(2π)> - 1|: {big1:.3e} → {big2:.3e} under α doubling; translation spread over 12 points: {trans1:.3e} → {trans2:.3e}"
        ),
    );
}

#[test]
fn acceptance_12_bundle_construction() {
    let preset = models::flux_quantum_toy(PresetOverrides::default()).unwrap();
    let sector = preset.sector().unwrap();
    let params = FilterParams::new(4.0, 1, preset.spec.j_bound());
    let settings = IntegratorSettings::default().with_steps(96);
    let field = fluxlab::bundle::build_bundle(&preset.spec, &sector, 6, 1, &params, &settings).unwrap();
    let c_bundle = fluxlab::bundle::bundle_chern(&field).unwrap();
    let c_ground = chern_fhs(&preset.spec, &sector, 6, 1e-9).unwrap();
    let pass = field.idempotency_defect <= 1e-10
        && field.seam_defect <= 1e-9
        && c_bundle == c_ground;
    verdict(
        12,
        "bundle construction",
        pass,
        &format!(
            "P idempotency {:.2e} (≤1e-10), seam defect {:.2e}, bundle Chern {c_bundle} == ground pipeline {c_ground}",
            field.idempotency_defect, field.seam_defect
        ),
    );
}

#[test]
fn acceptance_13_constant_evaluators() {
    let v = fluxlab::quasiadiabatic::lr_velocity(1, 1.0);
    let v_ok = (v - 1056.0 * std::f64::consts::E).abs() < 1e-9;
    let c0_ok = (fluxlab::quasiadiabatic::c0_bound(1.0) - 66.0).abs() < 1e-12;

    let mut xi_ok = true;
    let mut g_ok = true;
    let mut serialized = Vec::new();
    for l in [1e3, 1e6, 1e9] {
        let rep = envelopes(EnvelopeInputs {
            range: 1,
            j: 1.0,
            q_max: 1,
            gamma: 0.5,
            l,
            alpha: None,
        })
        .unwrap();
        xi_ok &= (rep.xi - 1.0 / TAU).abs() < 1e-12;
        // independent re-derivation of G
        let vv = 132.0 * std::f64::consts::E * 8.0;
        let g_alt = (0.5 / (4.0 * vv)) * (l / (48.0 * TAU * l.ln().powi(3))).powf(0.2);
        g_ok &= ((rep.g_big - g_alt) / g_alt).abs() < 1e-12;
        serialized.push(serde_json::to_string(&rep).unwrap());
    }
    let out = std::env::temp_dir().join("fluxlab_envelopes.json");
    std::fs::write(&out, format!("[{}]", serialized.join(","))).unwrap();
    let pass = v_ok && c0_ok && xi_ok && g_ok;
    verdict(
        13,
        "constant evaluators",
        pass,
        &format!(
            "v(1,1) = 1056e: {v_ok}; C0(1) = 66: {c0_ok}; ξ(q_max=1) = 1/2π: {xi_ok}; G re-derivation at L=1e3/1e6/1e9: {g_ok}; reports → {}",
            out.display()
        ),
    );
}

#[test]
fn acceptance_14_obstruction_sweep() {
    let a = models::chern_fermion_toy(PresetOverrides::default()).unwrap();
    let b = models::trivial_atomic(PresetOverrides {
        side: Some(16),
        ..Default::default()
    })
    .unwrap();
    let sector = a.sector().unwrap();
    let filled = a.filled_levels.unwrap();
    let sweep = obstruction_sweep(&a.spec, &b.spec, &sector, filled, 41).unwrap();
    let gap_start = sweep.first().unwrap().gap;
    let gap_end = sweep.last().unwrap().gap;
    let gap_min = sweep.iter().map(|p| p.gap).fold(f64::INFINITY, f64::min);
    let endpoints_quantized = (sweep.first().unwrap().sigma_xy - 1.0).abs() < 2e-2
        && sweep.last().unwrap().sigma_xy.abs() < 2e-2;
    let pass = gap_min < gap_start && gap_min < gap_end && endpoints_quantized;
    verdict(
        14,
        "obstruction sweep",
        pass,
        &format!(
            "gap dips to {gap_min:.3e} between endpoint gaps {gap_start:.3} and {gap_end:.3}; endpoint σ quantized: {endpoints_quantized}"
        ),
    );
}
