//! Measured quantities: Kubo conductance, Berry phases and curvature, Chern
//! numbers, energy and partial-trace estimates, the triangle decomposition of
//! the quantization bound, and the fractional-case holonomy diagnostics.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FluxError, Result};
use crate::evolution::{
    decompose_big_loop, integrate_axis, AxisMode, IntegratorSettings, LoopUnitary,
};
use crate::hamiltonian::{TwistAngles, TwistDirection, TwistedHamiltonianSpec};
use crate::lattice::{ChargeSector, Region, Site};
use crate::linalg;
use crate::quasiadiabatic::{Axis, FilterParams, SQRT_2PI};
use crate::spectral::{eig, parallel_transport};

const TAU: f64 = 2.0 * std::f64::consts::PI;

// ---------------------------------------------------------------------------
// Kubo conductance and Berry curvature

/// Hall conductance measurement in units of e²/h.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConductanceReport {
    pub sigma_xy: f64,
    pub nearest_integer: i64,
    pub deviation: f64,
    pub method: String,
}

impl ConductanceReport {
    fn new(sigma_xy: f64, method: &str) -> Self {
        let nearest_integer = sigma_xy.round() as i64;
        ConductanceReport {
            sigma_xy,
            nearest_integer,
            deviation: (sigma_xy - sigma_xy.round()).abs(),
            method: method.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectorMode {
    /// unique ground state
    Unique,
    /// degenerate ground space of the given dimension, Kubo with `(1 - P_g)`
    ExcludeGroundSpace(usize),
}

/// Kubo sum for the state `a` of the spectrum, excluding the lowest
/// `exclude_q` levels from the intermediate states:
/// `σ = 2π · 2 Im Σ_n <a|∂_y H|n><n|∂_x H|a> / (E_n - E_a)²`.
pub fn sigma_xy_from_eigenbasis(
    eigenvalues: &[f64],
    eigenvectors: &Array2<Complex64>,
    dh_x: &Array2<Complex64>,
    dh_y: &Array2<Complex64>,
    state: usize,
    exclude_q: usize,
) -> f64 {
    let dim = eigenvalues.len();
    let psi = eigenvectors.column(state).to_owned();
    let dx = dh_x.dot(&psi);
    let dy = dh_y.dot(&psi);
    let mut sum = Complex64::new(0.0, 0.0);
    for n in exclude_q..dim {
        if n == state {
            continue;
        }
        let vn = eigenvectors.column(n).to_owned();
        let denom = eigenvalues[n] - eigenvalues[state];
        let ay = linalg::inner(&vn, &dy); // <n|∂_y H|a>
        let ax = linalg::inner(&vn, &dx);
        sum += ay.conj() * ax / Complex64::new(denom * denom, 0.0);
    }
    TAU * 2.0 * sum.im
}

/// Berry curvature `g(θx, θy) = 2 Im <∂_y Ψ0|∂_x Ψ0>` by the reduced-resolvent
/// spectral sum (never finite differences).
pub fn berry_curvature(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    theta_x: f64,
    theta_y: f64,
    exclude_q: usize,
) -> Result<f64> {
    let angles = TwistAngles::xy(theta_x, theta_y);
    let h = spec.assemble_fresh(angles, sector);
    let sd = eig(&h)?;
    let dh_x = spec.twist_derivative(angles, TwistDirection::ThetaX, 1, sector);
    let dh_y = spec.twist_derivative(angles, TwistDirection::ThetaY, 1, sector);
    Ok(sigma_xy_from_eigenbasis(
        sd.eigenvalues(),
        sd.eigenvectors(),
        &dh_x,
        &dh_y,
        0,
        exclude_q.max(1),
    ) / TAU)
}

/// Kubo Hall conductance at the flux origin.
pub fn kubo_sigma_xy(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    mode: ProjectorMode,
) -> Result<ConductanceReport> {
    let h = spec.assemble(TwistAngles::ZERO, sector)?;
    let sd = eig(&h)?;
    sd.require_full()?;
    let dh_x = spec.twist_derivative(TwistAngles::ZERO, TwistDirection::ThetaX, 1, sector);
    let dh_y = spec.twist_derivative(TwistAngles::ZERO, TwistDirection::ThetaY, 1, sector);
    match mode {
        ProjectorMode::Unique => {
            if sd.gap() < 1e-10 {
                return Err(FluxError::Degeneracy(format!(
                    "gap {:.3e} at the origin; use the ground-space mode",
                    sd.gap()
                )));
            }
            let sigma =
                sigma_xy_from_eigenbasis(sd.eigenvalues(), sd.eigenvectors(), &dh_x, &dh_y, 0, 1);
            Ok(ConductanceReport::new(sigma, "kubo"))
        }
        ProjectorMode::ExcludeGroundSpace(q) => {
            if q == 0 || q >= sd.dim() {
                return Err(FluxError::Domain("ground-space dimension out of range".into()));
            }
            let avg = (0..q)
                .map(|a| {
                    sigma_xy_from_eigenbasis(
                        sd.eigenvalues(),
                        sd.eigenvectors(),
                        &dh_x,
                        &dh_y,
                        a,
                        q,
                    )
                })
                .sum::<f64>()
                / q as f64;
            Ok(ConductanceReport::new(avg, "kubo-ground-space"))
        }
    }
}

// ---------------------------------------------------------------------------
// Berry phase around Λ(r)

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BerryRoute {
    LineIntegral,
    SurfaceIntegral,
}

/// Geometric phase around the square loop `Λ(r)`, by parallel transport along
/// the four legs or by integrating the curvature over the enclosed square.
pub fn berry_phase_loop(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    r: f64,
    route: BerryRoute,
) -> Result<f64> {
    if r == 0.0 {
        return Ok(0.0);
    }
    // gap margin from the drift estimate: Δ = γ - 2 r D_H(r)
    let sd0 = eig(spec.assemble(TwistAngles::ZERO, sector)?.as_ref())?;
    let gamma = sd0.gap();
    let sup_dh = loop_derivative_sup(spec, sector, r);
    let margin = gamma - 2.0 * r * sup_dh;
    if margin <= 0.0 {
        return Err(FluxError::LoopTooLarge(format!(
            "gap margin γ - 2r·D_H = {margin:.3e} at r = {r}"
        )));
    }
    match route {
        BerryRoute::LineIntegral => {
            let steps = 160;
            let legs: [((f64, f64), [f64; 2]); 4] = [
                ((0.0, 0.0), [1.0, 0.0]),
                ((r, 0.0), [0.0, 1.0]),
                ((r, r), [-1.0, 0.0]),
                ((0.0, r), [0.0, -1.0]),
            ];
            let mut psi = sd0.ground_state();
            let start = psi.clone();
            for ((x0, y0), v) in legs {
                let fam = move |t: f64| {
                    spec.assemble_fresh(TwistAngles::xy(x0 + v[0] * t, y0 + v[1] * t), sector)
                };
                let dfam = move |t: f64| {
                    let angles = TwistAngles::xy(x0 + v[0] * t, y0 + v[1] * t);
                    let dx = spec.twist_derivative(angles, TwistDirection::ThetaX, 1, sector);
                    let dy = spec.twist_derivative(angles, TwistDirection::ThetaY, 1, sector);
                    dx.mapv(|z| z * v[0]) + dy.mapv(|z| z * v[1])
                };
                let tr = parallel_transport_from(&fam, &dfam, r, steps, margin * 0.5, psi)?;
                psi = tr;
            }
            Ok(linalg::inner(&start, &psi).arg())
        }
        BerryRoute::SurfaceIntegral => {
            let order = 12;
            let fine = surface_quadrature(spec, sector, r, order)?;
            let coarse = surface_quadrature(spec, sector, r, order - 4)?;
            if (fine - coarse).abs() > 1e-7 {
                return Err(FluxError::Accuracy(format!(
                    "curvature quadrature moved by {:.2e} under refinement",
                    (fine - coarse).abs()
                )));
            }
            Ok(fine)
        }
    }
}

/// Measured `D_H(r)`: the largest twist-derivative norm over the corners of
/// the loop `Λ(r)`.
pub fn loop_derivative_sup(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    r: f64,
) -> f64 {
    let corners = [(0.0, 0.0), (r, 0.0), (r, r), (0.0, r)];
    let mut sup = 0.0f64;
    for (tx, ty) in corners {
        let angles = TwistAngles::xy(tx, ty);
        for dir in [TwistDirection::ThetaX, TwistDirection::ThetaY] {
            let d = spec.twist_derivative(angles, dir, 1, sector);
            sup = sup.max(linalg::op_norm(&d));
        }
    }
    sup
}

fn surface_quadrature(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    r: f64,
    order: usize,
) -> Result<f64> {
    let (gx, gw) = crate::quasiadiabatic::gauss_legendre(order);
    let pts: Vec<(f64, f64, f64)> = gx
        .iter()
        .zip(gw.iter())
        .flat_map(|(&x, &wx)| {
            gx.iter()
                .zip(gw.iter())
                .map(move |(&y, &wy)| (r * 0.5 * (x + 1.0), r * 0.5 * (y + 1.0), wx * wy))
        })
        .collect();
    let vals: Result<Vec<f64>> = pts
        .par_iter()
        .map(|&(tx, ty, w)| Ok(w * berry_curvature(spec, sector, tx, ty, 1)?))
        .collect();
    Ok(vals?.iter().sum::<f64>() * r * r / 4.0)
}

/// Parallel transport that continues a given state rather than restarting
/// from the phase-fixed ground state.
fn parallel_transport_from(
    family: &dyn Fn(f64) -> Array2<Complex64>,
    deriv: &dyn Fn(f64) -> Array2<Complex64>,
    span: f64,
    steps: usize,
    gap_floor: f64,
    initial: Array1<Complex64>,
) -> Result<Array1<Complex64>> {
    let tr = parallel_transport(family, Some(deriv), (0.0, span), steps, gap_floor)?;
    // rotate the transported curve onto the incoming phase
    let first = &tr.states[0];
    let overlap = linalg::inner(first, &initial);
    if overlap.norm() < 0.999 {
        return Err(FluxError::Domain(format!(
            "initial state is not the ground state of the first Hamiltonian (overlap {:.6})",
            overlap.norm()
        )));
    }
    let phase = overlap / overlap.norm();
    Ok(tr.final_state().mapv(|z| z * phase))
}

// ---------------------------------------------------------------------------
// FHS Chern numbers

/// A grid of states over the flux mesh, `states[i][j]` at
/// `(2πi/N, 2πj/N)`.
pub type StateField = Vec<Vec<Array1<Complex64>>>;

/// Ground states over an `n_g × n_g` flux mesh; errors when the gap closes.
pub fn ground_state_field(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    n_g: usize,
    gap_floor: f64,
) -> Result<StateField> {
    let rows: Result<Vec<Vec<Array1<Complex64>>>> = (0..n_g)
        .into_par_iter()
        .map(|i| {
            let tx = TAU * i as f64 / n_g as f64;
            let mut row = Vec::with_capacity(n_g);
            for j in 0..n_g {
                let ty = TAU * j as f64 / n_g as f64;
                let sd = eig(&spec.assemble_fresh(TwistAngles::xy(tx, ty), sector))?;
                if sd.gap() < gap_floor {
                    return Err(FluxError::Degeneracy(format!(
                        "gap {:.3e} below floor {gap_floor:.1e} at mesh point ({i}, {j})",
                        sd.gap()
                    )));
                }
                row.push(sd.ground_state());
            }
            Ok(row)
        })
        .collect();
    rows
}

/// Gauge-invariant lattice Chern number from link-overlap plaquette phases;
/// integer by construction.
pub fn chern_from_state_field(field: &StateField) -> Result<i64> {
    let n = field.len();
    let link = |a: &Array1<Complex64>, b: &Array1<Complex64>| -> Result<Complex64> {
        let v = linalg::inner(a, b);
        if v.norm() < 1e-8 {
            return Err(FluxError::Degeneracy(
                "vanishing link overlap; refine the mesh".into(),
            ));
        }
        Ok(v / v.norm())
    };
    let mut total = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let ip = (i + 1) % n;
            let jp = (j + 1) % n;
            let u1 = link(&field[i][j], &field[ip][j])?;
            let u2 = link(&field[ip][j], &field[ip][jp])?;
            let u3 = link(&field[ip][jp], &field[i][jp])?;
            let u4 = link(&field[i][jp], &field[i][j])?;
            total += (u1 * u2 * u3 * u4).arg();
        }
    }
    // oriented so the integer matches 2π·2Im<∂_yΨ|∂_xΨ> of the Kubo formula
    let c = -total / TAU;
    let rounded = c.round();
    if (c - rounded).abs() > 1e-6 {
        return Err(FluxError::Accuracy(format!(
            "plaquette sum {c:.3e} is not an integer"
        )));
    }
    Ok(rounded as i64)
}

/// FHS Chern number of the unique-ground-state bundle.
pub fn chern_fhs(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    n_g: usize,
    gap_floor: f64,
) -> Result<i64> {
    let field = ground_state_field(spec, sector, n_g, gap_floor)?;
    chern_from_state_field(&field)
}

// ---------------------------------------------------------------------------
// filled-band variants: the occupied subspace as a determinant bundle

/// Orthonormal frames of the lowest `n_filled` levels over the flux mesh.
pub type FrameField = Vec<Vec<Array2<Complex64>>>;

/// Frames of the occupied subspace over an `n_g × n_g` mesh; the relevant
/// gap is the one above the filled set.
pub fn filled_frame_field(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    n_filled: usize,
    n_g: usize,
    gap_floor: f64,
) -> Result<FrameField> {
    if n_filled == 0 || n_filled >= sector.dim() {
        return Err(FluxError::Domain("filling out of range".into()));
    }
    let rows: Result<FrameField> = (0..n_g)
        .into_par_iter()
        .map(|i| {
            let tx = TAU * i as f64 / n_g as f64;
            let mut row = Vec::with_capacity(n_g);
            for j in 0..n_g {
                let ty = TAU * j as f64 / n_g as f64;
                let sd = eig(&spec.assemble_fresh(TwistAngles::xy(tx, ty), sector))?;
                let gap = sd.eigenvalues()[n_filled] - sd.eigenvalues()[n_filled - 1];
                if gap < gap_floor {
                    return Err(FluxError::Degeneracy(format!(
                        "band gap {gap:.3e} below floor at mesh point ({i}, {j})"
                    )));
                }
                let dim = sd.dim();
                let mut frame = Array2::zeros((dim, n_filled));
                for a in 0..n_filled {
                    for k in 0..dim {
                        frame[(k, a)] = sd.eigenvectors()[(k, a)];
                    }
                }
                row.push(frame);
            }
            Ok(row)
        })
        .collect();
    rows
}

/// Non-Abelian FHS: plaquette phases of determinant link variables of the
/// occupied frames.
pub fn chern_from_frame_field(field: &FrameField) -> Result<i64> {
    let n = field.len();
    let link = |a: &Array2<Complex64>, b: &Array2<Complex64>| -> Result<Complex64> {
        let overlap = linalg::dagger(a).dot(b);
        let d = small_det(&overlap);
        if d.norm() < 1e-8 {
            return Err(FluxError::Degeneracy(
                "vanishing frame-overlap determinant; refine the mesh".into(),
            ));
        }
        Ok(d / d.norm())
    };
    let mut total = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let ip = (i + 1) % n;
            let jp = (j + 1) % n;
            let u1 = link(&field[i][j], &field[ip][j])?;
            let u2 = link(&field[ip][j], &field[ip][jp])?;
            let u3 = link(&field[ip][jp], &field[i][jp])?;
            let u4 = link(&field[i][jp], &field[i][j])?;
            total += (u1 * u2 * u3 * u4).arg();
        }
    }
    let c = -total / TAU;
    let rounded = c.round();
    if (c - rounded).abs() > 1e-6 {
        return Err(FluxError::Accuracy(format!(
            "plaquette sum {c:.3e} is not an integer"
        )));
    }
    Ok(rounded as i64)
}

/// FHS Chern number of the filled lowest `n_filled` levels.
pub fn chern_fhs_filled(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    n_filled: usize,
    n_g: usize,
    gap_floor: f64,
) -> Result<i64> {
    let field = filled_frame_field(spec, sector, n_filled, n_g, gap_floor)?;
    chern_from_frame_field(&field)
}

/// Kubo conductance of the filled lowest `n_filled` levels: the sum of the
/// per-level sums with intermediate states above the filled set.
pub fn kubo_sigma_xy_filled(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    n_filled: usize,
) -> Result<ConductanceReport> {
    let h = spec.assemble(TwistAngles::ZERO, sector)?;
    let sd = eig(&h)?;
    sd.require_full()?;
    if n_filled == 0 || n_filled >= sd.dim() {
        return Err(FluxError::Domain("filling out of range".into()));
    }
    let gap = sd.eigenvalues()[n_filled] - sd.eigenvalues()[n_filled - 1];
    if gap < 1e-10 {
        return Err(FluxError::Degeneracy(format!(
            "no gap above the filled set ({gap:.3e})"
        )));
    }
    let dh_x = spec.twist_derivative(TwistAngles::ZERO, TwistDirection::ThetaX, 1, sector);
    let dh_y = spec.twist_derivative(TwistAngles::ZERO, TwistDirection::ThetaY, 1, sector);
    let sigma: f64 = (0..n_filled)
        .map(|a| {
            sigma_xy_from_eigenbasis(sd.eigenvalues(), sd.eigenvectors(), &dh_x, &dh_y, a, n_filled)
        })
        .sum();
    Ok(ConductanceReport::new(sigma, "kubo-filled-band"))
}

/// One point of the obstruction sweep between two Hamiltonians.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObstructionPoint {
    pub s: f64,
    pub gap: f64,
    pub sigma_xy: f64,
}

/// Interpolate `(1-s) A + s B` and record the gap above the filling and the
/// filled-band conductance along the way.
pub fn obstruction_sweep(
    a: &TwistedHamiltonianSpec,
    b: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    n_filled: usize,
    n_points: usize,
) -> Result<Vec<ObstructionPoint>> {
    let pts: Vec<usize> = (0..n_points).collect();
    pts.par_iter()
        .map(|&k| {
            let s = k as f64 / (n_points - 1) as f64;
            let spec = crate::models::interpolate(a, b, s)?;
            let h = spec.assemble(TwistAngles::ZERO, sector)?;
            let sd = eig(&h)?;
            let gap = sd.eigenvalues()[n_filled] - sd.eigenvalues()[n_filled - 1];
            let sigma = if gap > 1e-9 {
                kubo_sigma_xy_filled(&spec, sector, n_filled)?.sigma_xy
            } else {
                f64::NAN
            };
            Ok(ObstructionPoint { s, gap, sigma_xy: sigma })
        })
        .collect()
}

/// Mesh average of the Kubo conductance, the cross-check oracle for the FHS
/// integer.
pub fn kubo_mesh_average(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    n_g: usize,
) -> Result<f64> {
    let pts: Vec<(usize, usize)> = (0..n_g)
        .flat_map(|i| (0..n_g).map(move |j| (i, j)))
        .collect();
    let vals: Result<Vec<f64>> = pts
        .par_iter()
        .map(|&(i, j)| {
            let tx = TAU * i as f64 / n_g as f64;
            let ty = TAU * j as f64 / n_g as f64;
            Ok(TAU * berry_curvature(spec, sector, tx, ty, 1)?)
        })
        .collect();
    Ok(vals?.iter().sum::<f64>() / (n_g * n_g) as f64)
}

// ---------------------------------------------------------------------------
// loop ledger and the main-bound triangle

/// Per-loop bookkeeping of the Stokes decomposition: ground-state overlaps,
/// nested brackets and off-ground leakage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoopLedger {
    /// p_i = <Ψ0|U_i Ψ0>
    pub p: Vec<(f64, f64)>,
    /// p_[s, N²] suffix brackets, index s-1
    pub p_bracket: Vec<(f64, f64)>,
    /// q_[s, N²] leakage terms
    pub q_bracket: Vec<(f64, f64)>,
    /// residual of the ledger identity p_[1,N²] - Πp_i = Σ p_1..p_{i-1} q_[i,N²]
    pub ledger_residual: f64,
    /// the three terms of the appendix bound, already scaled by N²
    pub bound_terms: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MainBoundReport {
    pub n: usize,
    pub r: f64,
    pub sigma_xy: f64,
    /// |<Ψ0|Ψ⟲(r)>^{N²} - e^{2πi σ}|
    pub term_small_loop_power: f64,
    /// |1 - <Ψ0|Ψ⟲(2π)>|
    pub term_big_loop: f64,
    /// |<Ψ0|Ψ⟲(2π)> - <Ψ0|Ψ⟲(r)>^{N²}|
    pub term_stokes: f64,
    /// √2/(2π) times the triangle sum: the implied |σ - n| bound
    pub implied_sigma_bound: f64,
    /// the r selection formula of the analysis
    pub r_choice: f64,
    pub ledger: LoopLedger,
    pub stokes_residual: f64,
}

fn cpx(z: Complex64) -> (f64, f64) {
    (z.re, z.im)
}

/// Run the full decomposition at `N` loops per side and assemble the ledger
/// and the three terms of the quantization triangle.
pub fn main_bound_decomposition(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    n: usize,
    params: &FilterParams,
    settings: &IntegratorSettings,
    gamma: f64,
) -> Result<MainBoundReport> {
    let r = TAU / n as f64;
    let decomp = decompose_big_loop(spec, sector, n, params, settings)?;
    let (psi0, _) = crate::evolution::origin_ground_state(spec, sector)?;
    let nn = n * n;

    let p: Vec<Complex64> = decomp
        .unitaries
        .iter()
        .map(|u| linalg::inner(&psi0, &u.apply(&psi0)))
        .collect();

    // suffix brackets p_[s, N²] and leakage q_[s, N²]
    let mut a = psi0.clone(); // a_{s+1} accumulates U_s† ... U_{N²}† Ψ0
    let mut p_bracket = vec![Complex64::new(0.0, 0.0); nn];
    let mut q_bracket = vec![Complex64::new(0.0, 0.0); nn];
    for s in (0..nn).rev() {
        let u_psi = decomp.unitaries[s].apply(&psi0);
        let bracket = linalg::inner(&a, &u_psi);
        p_bracket[s] = bracket;
        q_bracket[s] = bracket
            - p[s]
                * if s + 1 < nn {
                    p_bracket[s + 1]
                } else {
                    Complex64::new(1.0, 0.0)
                };
        a = linalg::dagger(&decomp.unitaries[s].matrix).dot(&a);
    }

    // ledger identity: p_[1,N²] - Πp_i = Σ_{i} p_1 ... p_{i-1} q_[i,N²]
    let full_product: Complex64 = p.iter().product();
    let mut rhs = Complex64::new(0.0, 0.0);
    let mut prefix = Complex64::new(1.0, 0.0);
    for i in 0..nn {
        rhs += prefix * q_bracket[i];
        prefix *= p[i];
    }
    let ledger_residual = (p_bracket[0] - full_product - rhs).norm();

    // appendix bound terms
    let p_n = p[n - 1]; // the loop at the origin: i = N ⇒ index N-1
    let sup_dev = p
        .iter()
        .map(|pi| (pi - p_n).norm())
        .fold(0.0f64, f64::max);
    let bound_terms = [
        nn as f64 * (2.0 * (1.0 - p_n.norm())).max(0.0).sqrt(),
        nn as f64 * (2.0 * sup_dev).sqrt(),
        nn as f64 * std::f64::consts::E * sup_dev,
    ];

    // main-bound triangle
    let sigma = kubo_sigma_xy(spec, sector, ProjectorMode::Unique)?.sigma_xy;
    let big_overlap = linalg::inner(&psi0, &decomp.big_loop.apply(&psi0));
    let p_n_pow = p_n.powu(nn as u32);
    let target = Complex64::from_polar(1.0, TAU * sigma);
    let term_small_loop_power = (p_n_pow - target).norm();
    let term_big_loop = (Complex64::new(1.0, 0.0) - big_overlap).norm();
    let term_stokes = (big_overlap - p_n_pow).norm();
    let implied_sigma_bound =
        2f64.sqrt() / TAU * (term_small_loop_power + term_big_loop + term_stokes);

    // r-choice formula
    let q_max_const = spec.q_max_const();
    let l = spec.lattice().side() as f64;
    let base = (q_max_const * params.alpha * spec.j_bound() * l).powf(2.0 / 3.0)
        * (params.alpha * params.alpha * gamma * gamma / 3.0).exp();
    let r_choice = TAU / base.floor().max(1.0);

    Ok(MainBoundReport {
        n,
        r,
        sigma_xy: sigma,
        term_small_loop_power,
        term_big_loop,
        term_stokes,
        implied_sigma_bound,
        r_choice,
        ledger: LoopLedger {
            p: p.iter().map(|&z| cpx(z)).collect(),
            p_bracket: p_bracket.iter().map(|&z| cpx(z)).collect(),
            q_bracket: q_bracket.iter().map(|&z| cpx(z)).collect(),
            ledger_residual,
            bound_terms,
        },
        stokes_residual: decomp.residual,
    })
}

// ---------------------------------------------------------------------------
// the power-difference inequality

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PowerPhaseReport {
    pub epsilon: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub within_hypothesis: bool,
}

/// `|b - e^{iθ}| ≤ ε ≤ 1/2  ⇒  |b^m - e^{imθ}| ≤ sqrt(7/3) m ε`; inputs
/// outside the hypothesis are evaluated and flagged, not rejected.
pub fn power_phase_bound(b: f64, theta: f64, m: u32) -> PowerPhaseReport {
    let e_itheta = Complex64::from_polar(1.0, theta);
    let epsilon = (Complex64::new(b, 0.0) - e_itheta).norm();
    let lhs = (Complex64::new(b.powi(m as i32), 0.0) - Complex64::from_polar(1.0, m as f64 * theta))
        .norm();
    let rhs = (7.0f64 / 3.0).sqrt() * m as f64 * epsilon;
    PowerPhaseReport {
        epsilon,
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-15,
        within_hypothesis: (0.0..=1.0).contains(&b) && epsilon <= 0.5,
    }
}

// ---------------------------------------------------------------------------
// energy estimates

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyReport {
    pub energy_excess: f64,
    /// analytic right-hand side of the estimate, with unit constant
    pub paper_rhs: f64,
    /// `‖Q0 Ψ‖² ≤ excess/γ`
    pub leakage_bound: f64,
    pub leakage_measured: f64,
}

/// Energy of a state above the zero-twist ground energy, with the analytic
/// comparison value of the estimate.
pub fn energy_estimate(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    state: &Array1<Complex64>,
    angles: TwistAngles,
    params: &FilterParams,
    theta: f64,
    gamma: f64,
) -> Result<EnergyReport> {
    let h0 = spec.assemble(TwistAngles::ZERO, sector)?;
    let sd0 = eig(&h0)?;
    let h = spec.assemble(angles, sector)?;
    let expectation = linalg::inner(state, &h.dot(state)).re;
    let energy_excess = expectation - sd0.e0();

    let l = spec.lattice().side() as f64;
    let r = spec.lattice().range() as f64;
    let sigma = params.sigma();
    let q_max_const = spec.q_max_const();
    let j = spec.j_bound();
    let paper_rhs = theta.abs()
        * q_max_const
        * (j / gamma)
        * l.powi(3)
        * (params.alpha * gamma / SQRT_2PI * l / (sigma * sigma) * (-l / (8.0 * r)).exp()
            + (-params.alpha * params.alpha * gamma * gamma).exp())
        * j;

    let psi0 = sd0.ground_state();
    let overlap = linalg::inner(&psi0, state);
    let leakage_measured = (1.0 - overlap.norm_sqr()).max(0.0);
    Ok(EnergyReport {
        energy_excess,
        paper_rhs,
        leakage_bound: energy_excess.max(0.0) / gamma,
        leakage_measured,
    })
}

// ---------------------------------------------------------------------------
// partial traces

/// Reduced density matrix on `region`, exploiting the sector block structure
/// (configurations pair only when their complement parts agree).
pub fn reduced_density_matrix(
    state: &Array1<Complex64>,
    region: &Region,
    sector: &ChargeSector,
) -> Result<Array2<Complex64>> {
    const REDUCED_CAP: usize = 4096;
    let lat = sector.lattice();
    let region_idx: Vec<usize> = region.sites().map(|s| lat.site_index(s)).collect();
    let mut comp_idx: Vec<usize> = (0..lat.n_sites()).collect();
    comp_idx.retain(|i| !region_idx.contains(i));

    // deterministic local indexing of the region configurations present
    let mut region_keys: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
    for i in 0..sector.dim() {
        let cfg = sector.config(i);
        let key: Vec<u8> = region_idx.iter().map(|&k| cfg[k]).collect();
        let next = region_keys.len();
        region_keys.entry(key).or_insert(next);
    }
    // BTreeMap insertion order is not positional; re-number lexicographically
    let n_red = region_keys.len();
    for (rank, (_k, v)) in region_keys.iter_mut().enumerate() {
        *v = rank;
    }
    if n_red > REDUCED_CAP {
        return Err(FluxError::Resource(format!(
            "reduced matrix dimension {n_red} exceeds the cap {REDUCED_CAP}"
        )));
    }

    let mut groups: BTreeMap<Vec<u8>, Vec<(usize, usize)>> = BTreeMap::new();
    for i in 0..sector.dim() {
        let cfg = sector.config(i);
        let rkey: Vec<u8> = region_idx.iter().map(|&k| cfg[k]).collect();
        let ckey: Vec<u8> = comp_idx.iter().map(|&k| cfg[k]).collect();
        let r = region_keys[&rkey];
        groups.entry(ckey).or_default().push((r, i));
    }

    let mut rho = Array2::zeros((n_red, n_red));
    for members in groups.values() {
        for &(ra, ia) in members {
            for &(rb, ib) in members {
                rho[(ra, rb)] += state[ia] * state[ib].conj();
            }
        }
    }
    Ok(rho)
}

/// Trace distance of the reduced density matrices of two sector states on a
/// region: `‖Tr_region̄ (ρ1 - ρ2)‖₁`.
pub fn partial_trace_distance(
    state1: &Array1<Complex64>,
    state2: &Array1<Complex64>,
    region: &Region,
    sector: &ChargeSector,
) -> Result<f64> {
    let r1 = reduced_density_matrix(state1, region, sector)?;
    let r2 = reduced_density_matrix(state2, region, sector)?;
    let diff = &r1 - &r2;
    Ok(crate::spectral::eigvalsh(&diff).iter().map(|v| v.abs()).sum())
}

// ---------------------------------------------------------------------------
// fractional diagnostics

type CMatrix = Vec<Vec<[f64; 2]>>;

fn to_cmatrix(m: &Array2<Complex64>) -> CMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn small_det(m: &Array2<Complex64>) -> Complex64 {
    // LU with partial pivoting on a copy
    let n = m.nrows();
    let mut a = m.clone();
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if a[(row, col)].norm() > a[(piv, col)].norm() {
                piv = row;
            }
        }
        if a[(piv, col)].norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if piv != col {
            for k in 0..n {
                let tmp = a[(col, k)];
                a[(col, k)] = a[(piv, k)];
                a[(piv, k)] = tmp;
            }
            det = -det;
        }
        det *= a[(col, col)];
        for row in col + 1..n {
            let f = a[(row, col)] / a[(col, col)];
            for k in col..n {
                let sub = f * a[(col, k)];
                a[(row, k)] -= sub;
            }
        }
    }
    det
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FractionalReport {
    pub q: usize,
    /// max over probes of min_c ‖M - c·1‖
    pub epsilon_topo: f64,
    pub sigma_per_state: Vec<f64>,
    pub sigma_average: f64,
    pub u_x: CMatrix,
    pub u_y: CMatrix,
    pub z_matrix: CMatrix,
    pub u_x_unitarity_defect: f64,
    pub u_y_unitarity_defect: f64,
    pub det_z: [f64; 2],
    pub det_z_deviation: f64,
    /// phase extracted from tr(Z)/q
    pub z_phase: f64,
    pub nearest_root_phase: f64,
    pub nearest_root_distance: f64,
}

/// Topological-order and holonomy diagnostics for a `q`-fold ground space.
pub fn fractional_diagnostics(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    q: usize,
    probes: &[(Vec<Site>, Array2<Complex64>)],
    params: &FilterParams,
    settings: &IntegratorSettings,
) -> Result<FractionalReport> {
    let h = spec.assemble(TwistAngles::ZERO, sector)?;
    let sd = eig(&h)?;
    sd.require_full()?;
    if q == 0 || q + 1 > sd.dim() {
        return Err(FluxError::Domain("need 1 <= q < dim".into()));
    }
    let spread = sd.eigenvalues()[q - 1] - sd.eigenvalues()[0];
    let gap = sd.eigenvalues()[q] - sd.eigenvalues()[q - 1];
    if gap <= 0.0 || spread > 0.1 * gap {
        return Err(FluxError::Degeneracy(format!(
            "declared q = {q} inconsistent with the spectrum: spread {spread:.3e}, gap {gap:.3e}"
        )));
    }

    // topological-order error
    let mut epsilon_topo = 0.0f64;
    for (support, local) in probes {
        let dim = sector.dim();
        let mut op = Array2::zeros((dim, dim));
        TwistedHamiltonianSpec::embed_into(sector, support, local, &mut op);
        let norm = linalg::op_norm(&op);
        if norm == 0.0 {
            continue;
        }
        let op = op.mapv(|z| z / norm);
        let mut m = Array2::zeros((q, q));
        for a in 0..q {
            for b in 0..q {
                let va = sd.state(a);
                let vb = sd.state(b);
                m[(a, b)] = linalg::inner(&va, &op.dot(&vb));
            }
        }
        let c = (0..q).map(|a| m[(a, a)]).sum::<Complex64>() / q as f64;
        let mut dm = m;
        for a in 0..q {
            dm[(a, a)] -= c;
        }
        epsilon_topo = epsilon_topo.max(linalg::op_norm(&dm));
    }

    // per-state Kubo with the ground space excluded
    let dh_x = spec.twist_derivative(TwistAngles::ZERO, TwistDirection::ThetaX, 1, sector);
    let dh_y = spec.twist_derivative(TwistAngles::ZERO, TwistDirection::ThetaY, 1, sector);
    let sigma_per_state: Vec<f64> = (0..q)
        .map(|a| sigma_xy_from_eigenbasis(sd.eigenvalues(), sd.eigenvectors(), &dh_x, &dh_y, a, q))
        .collect();
    let sigma_average = sigma_per_state.iter().sum::<f64>() / q as f64;

    // holonomy matrices
    let ux_full = integrate_axis(
        spec,
        sector,
        TwistAngles::ZERO,
        Axis::X,
        TAU,
        params,
        AxisMode::Plain,
        settings,
    )?;
    let uy_full = integrate_axis(
        spec,
        sector,
        TwistAngles::ZERO,
        Axis::Y,
        TAU,
        params,
        AxisMode::Plain,
        settings,
    )?;
    let project = |u: &LoopUnitary| -> Array2<Complex64> {
        let mut m = Array2::zeros((q, q));
        for a in 0..q {
            for b in 0..q {
                let va = sd.state(a);
                let vb = sd.state(b);
                m[(a, b)] = linalg::inner(&va, &u.matrix.dot(&vb));
            }
        }
        m
    };
    let ux = project(&ux_full);
    let uy = project(&uy_full);
    let z = linalg::dagger(&uy).dot(&linalg::dagger(&ux)).dot(&uy).dot(&ux);

    let defect = |u: &Array2<Complex64>| -> f64 {
        let mut m = linalg::dagger(u).dot(u);
        for i in 0..q {
            m[(i, i)] -= Complex64::new(1.0, 0.0);
        }
        linalg::op_norm(&m)
    };

    let det_z = small_det(&z);
    let z_trace = (0..q).map(|a| z[(a, a)]).sum::<Complex64>() / q as f64;
    let z_phase = z_trace.arg();
    let mut nearest_root_phase = 0.0;
    let mut best = f64::INFINITY;
    for k in 0..q {
        let root = TAU * k as f64 / q as f64;
        let d = (Complex64::from_polar(1.0, z_phase) - Complex64::from_polar(1.0, root)).norm();
        if d < best {
            best = d;
            nearest_root_phase = root;
        }
    }
    Ok(FractionalReport {
        q,
        epsilon_topo,
        sigma_per_state,
        sigma_average,
        u_x: to_cmatrix(&ux),
        u_y: to_cmatrix(&uy),
        z_matrix: to_cmatrix(&z),
        u_x_unitarity_defect: defect(&ux),
        u_y_unitarity_defect: defect(&uy),
        det_z: [det_z.re, det_z.im],
        det_z_deviation: (det_z - Complex64::new(1.0, 0.0)).norm(),
        z_phase,
        nearest_root_phase,
        nearest_root_distance: best,
    })
}
