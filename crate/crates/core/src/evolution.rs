//! Quasi-adiabatic unitary flows in flux space: axis evolutions, path
//! compositions, loop operators, the exact Stokes-type decomposition of the
//! big loop, and localized/rotated loop variants.
//!
//! All flows integrate `∂_t U = i G(t) U` with a fourth-order commutator-free
//! Magnus scheme whose elementary factors are exact exponentials of Hermitian
//! combinations, so every returned matrix is unitary to machine precision
//! regardless of step size.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FluxError, Result};
use crate::hamiltonian::{TwistAngles, TwistedHamiltonianSpec};
use crate::lattice::{charge_phases, ChargeSector, Region};
use crate::linalg;
use crate::quasiadiabatic::{s_op, Axis, FilterParams};
use crate::spectral::eig;

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// Fixed-step integrator configuration.  `certify` enables the Richardson
/// step-halving check; spans are discretized with one extra step so composed
/// and directly integrated paths never share a grid.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub steps_per_two_pi: usize,
    /// Richardson certification tolerance; `None` runs pure fixed-step.
    pub certify: Option<f64>,
    pub max_refinements: usize,
    pub collect_diagnostics: bool,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            steps_per_two_pi: 256,
            certify: None,
            max_refinements: 4,
            collect_diagnostics: false,
        }
    }
}

impl IntegratorSettings {
    pub fn certified(mut self, tol: f64) -> Self {
        self.certify = Some(tol);
        self
    }

    pub fn with_steps(mut self, steps_per_two_pi: usize) -> Self {
        self.steps_per_two_pi = steps_per_two_pi;
        self
    }

    fn steps_for(&self, span: f64) -> usize {
        if span.abs() < 1e-15 {
            0
        } else {
            (span.abs() * self.steps_per_two_pi as f64 / TAU).ceil() as usize + 1
        }
    }
}

/// Per-step record for scan output.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepDiag {
    pub t: f64,
    pub gap: f64,
    pub generator_norm: f64,
    pub unitarity_defect: f64,
}

/// A unitary produced by one flow or composition, with its measured defects.
#[derive(Debug, Clone)]
pub struct LoopUnitary {
    pub matrix: Array2<Complex64>,
    pub unitarity_defect: f64,
    /// Richardson residual estimate when certification ran.
    pub residual: Option<f64>,
    pub steps: usize,
    pub diagnostics: Vec<StepDiag>,
}

impl LoopUnitary {
    fn identity(dim: usize) -> Self {
        LoopUnitary {
            matrix: linalg::identity(dim),
            unitarity_defect: 0.0,
            residual: Some(0.0),
            steps: 0,
            diagnostics: Vec::new(),
        }
    }

    pub fn dagger(&self) -> Self {
        LoopUnitary {
            matrix: linalg::dagger(&self.matrix),
            unitarity_defect: self.unitarity_defect,
            residual: self.residual,
            steps: self.steps,
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// `self · other`, accumulating defects and residual estimates.
    pub fn compose(&self, other: &LoopUnitary) -> Self {
        LoopUnitary {
            matrix: self.matrix.dot(&other.matrix),
            unitarity_defect: self.unitarity_defect + other.unitarity_defect,
            residual: match (self.residual, other.residual) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            },
            steps: self.steps + other.steps,
            diagnostics: {
                let mut d = self.diagnostics.clone();
                d.extend_from_slice(&other.diagnostics);
                d
            },
        }
    }

    pub fn apply(&self, psi: &Array1<Complex64>) -> Array1<Complex64> {
        self.matrix.dot(psi)
    }
}

/// Generator evaluation: the Hermitian flow generator and the instantaneous
/// spectral gap (NaN when the mode does not diagonalize the full H).
type GenEval<'a> = dyn Fn(f64) -> Result<(Array2<Complex64>, f64)> + Sync + 'a;

fn expm_i(a: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    let sd = eig(a)?;
    let v = sd.eigenvectors();
    let vd = linalg::dagger(v);
    let mut w = vd.clone();
    for (row, lam) in sd.eigenvalues().iter().enumerate() {
        let ph = Complex64::from_polar(1.0, *lam);
        for col in 0..w.ncols() {
            w[(row, col)] *= ph;
        }
    }
    Ok(v.dot(&w))
}

/// One commutator-free fourth-order Magnus pass over `span` with `steps`
/// fixed steps.
fn flow_fixed(
    gen: &GenEval,
    span: f64,
    steps: usize,
    dim: usize,
    diag: Option<&mut Vec<StepDiag>>,
) -> Result<Array2<Complex64>> {
    if steps == 0 {
        return Ok(linalg::identity(dim));
    }
    let h = span / steps as f64;
    let c1 = 0.5 - 3f64.sqrt() / 6.0;
    let c2 = 0.5 + 3f64.sqrt() / 6.0;
    let a_plus = 0.25 + 3f64.sqrt() / 6.0;
    let a_minus = 0.25 - 3f64.sqrt() / 6.0;
    let mut u = linalg::identity(dim);
    let mut diags = diag;
    for k in 0..steps {
        let t = k as f64 * h;
        let (g1, gap1) = gen(t + c1 * h)?;
        let (g2, _) = gen(t + c2 * h)?;
        let b1 = (&g1.mapv(|z| z * (a_plus * h)) + &g2.mapv(|z| z * (a_minus * h))).to_owned();
        let b2 = (&g1.mapv(|z| z * (a_minus * h)) + &g2.mapv(|z| z * (a_plus * h))).to_owned();
        let e1 = expm_i(&b1)?;
        let e2 = expm_i(&b2)?;
        u = e2.dot(&e1).dot(&u);
        if let Some(d) = diags.as_deref_mut() {
            d.push(StepDiag {
                t: t + h,
                gap: gap1,
                generator_norm: linalg::op_norm(&g1),
                unitarity_defect: linalg::unitarity_defect(&u),
            });
        }
    }
    Ok(u)
}

/// Fixed-step flow with optional Richardson certification by step halving.
fn flow(gen: &GenEval, span: f64, dim: usize, settings: &IntegratorSettings) -> Result<LoopUnitary> {
    let mut steps = settings.steps_for(span);
    if steps == 0 {
        return Ok(LoopUnitary::identity(dim));
    }
    let mut diagnostics = Vec::new();
    let diag_slot = if settings.collect_diagnostics {
        Some(&mut diagnostics)
    } else {
        None
    };
    let coarse = flow_fixed(gen, span, steps, dim, diag_slot)?;
    let (matrix, residual, steps_used) = match settings.certify {
        None => (coarse, None, steps),
        Some(tol) => {
            let mut prev = coarse;
            let mut refined = None;
            for _ in 0..settings.max_refinements {
                let next = flow_fixed(gen, span, steps * 2, dim, None)?;
                let est = linalg::op_norm(&(&next - &prev)) / 15.0;
                if est <= tol {
                    refined = Some((next, est, steps * 2));
                    break;
                }
                prev = next;
                steps *= 2;
            }
            match refined {
                Some((m, est, s)) => (m, Some(est), s),
                None => {
                    return Err(FluxError::Accuracy(format!(
                        "integrator tolerance {tol:.1e} unmet after {} refinements",
                        settings.max_refinements
                    )))
                }
            }
        }
    };
    let unitarity_defect = linalg::unitarity_defect(&matrix);
    Ok(LoopUnitary {
        matrix,
        unitarity_defect,
        residual,
        steps: steps_used,
        diagnostics,
    })
}

/// Evolution family for one axis sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisMode {
    /// generator `S_α(H(θ+t), ∂H)` along the plain flux family
    Plain,
    /// twist/anti-twist family `H(θ+t, -(θ+t))`
    AntiTwist,
    /// ball-truncated generator `S_α^{(M)}(H, ∂H)`
    Truncated(usize),
    /// the reversed, Ω-restricted, truncated flow `U_Ω`
    OmegaRestricted(usize),
}

fn plain_generator<'a>(
    spec: &'a TwistedHamiltonianSpec,
    sector: &'a ChargeSector,
    start: TwistAngles,
    velocity: [f64; 4],
    alpha: f64,
) -> impl Fn(f64) -> Result<(Array2<Complex64>, f64)> + Sync + 'a {
    move |t: f64| {
        let angles = start.add_scaled(velocity, t);
        let h = spec.assemble_fresh(angles, sector);
        let sd = eig(&h)?;
        let dh = spec.path_derivative(angles, velocity, sector);
        let g = s_op(&sd, &dh, alpha)?;
        Ok((g, sd.gap()))
    }
}

fn truncated_generator<'a>(
    spec: &'a TwistedHamiltonianSpec,
    sector: &'a ChargeSector,
    start: TwistAngles,
    velocity: [f64; 4],
    alpha: f64,
    m: usize,
) -> impl Fn(f64) -> Result<(Array2<Complex64>, f64)> + Sync + 'a {
    move |t: f64| {
        let angles = start.add_scaled(velocity, t);
        let dim = sector.dim();
        let mut g = Array2::zeros((dim, dim));
        for (support, local) in spec.path_derivative_pieces(angles, velocity) {
            let mut piece = Array2::zeros((dim, dim));
            TwistedHamiltonianSpec::embed_into(sector, &support, &local, &mut piece);
            let hm = spec.restrict_ball(&support, m, angles, sector)?;
            let sd = eig(&hm)?;
            g = g + s_op(&sd, &piece, alpha)?;
        }
        Ok((g, f64::NAN))
    }
}

fn omega_generator<'a>(
    spec: &'a TwistedHamiltonianSpec,
    sector: &'a ChargeSector,
    start: TwistAngles,
    alpha: f64,
    m: usize,
    omega: &'a Region,
) -> impl Fn(f64) -> Result<(Array2<Complex64>, f64)> + Sync + 'a {
    move |t: f64| {
        // reversed flow: the generator is evaluated at θx - t and negated
        let angles = TwistAngles::xy(start.theta_x - t, start.theta_y);
        let dim = sector.dim();
        let mut g = Array2::zeros((dim, dim));
        for (support, local) in
            spec.derivative_pieces(angles, crate::hamiltonian::TwistDirection::ThetaX, 1)
        {
            if !omega.contains_all(&support) {
                continue;
            }
            let mut piece = Array2::zeros((dim, dim));
            TwistedHamiltonianSpec::embed_into(sector, &support, &local, &mut piece);
            let hm = spec.restrict_ball(&support, m, angles, sector)?;
            let sd = eig(&hm)?;
            g = g + s_op(&sd, &piece, alpha)?;
        }
        Ok((g.mapv(|z: Complex64| -z), f64::NAN))
    }
}

/// Integrate one axis sweep `U(start, axis, span)` in the requested mode.
pub fn integrate_axis(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    start: TwistAngles,
    axis: Axis,
    span: f64,
    params: &FilterParams,
    mode: AxisMode,
    settings: &IntegratorSettings,
) -> Result<LoopUnitary> {
    let dim = sector.dim();
    match mode {
        AxisMode::Plain => {
            let gen = plain_generator(spec, sector, start, axis.velocity(), params.alpha);
            flow(&gen, span, dim, settings)
        }
        AxisMode::AntiTwist => {
            let velocity = match axis {
                Axis::X => [1.0, -1.0, 0.0, 0.0],
                Axis::Y => [0.0, 0.0, 1.0, -1.0],
            };
            let gen = plain_generator(spec, sector, start, velocity, params.alpha);
            flow(&gen, span, dim, settings)
        }
        AxisMode::Truncated(m) => {
            let gen = truncated_generator(spec, sector, start, axis.velocity(), params.alpha, m);
            flow(&gen, span, dim, settings)
        }
        AxisMode::OmegaRestricted(m) => {
            if axis != Axis::X {
                return Err(FluxError::Domain(
                    "the Ω-restricted flow is defined for the X axis".into(),
                ));
            }
            let omega = Region::omega(spec.lattice());
            let gen = omega_generator(spec, sector, start, params.alpha, m, &omega);
            flow(&gen, span, dim, settings)
        }
    }
}

/// Leg order of a rectangle path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathOrder {
    /// y first, then x
    V,
    /// x first, then y
    W,
}

/// Evolve along the rectangle sides `from -> to` in the given leg order.
pub fn path_evolve(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    from: (f64, f64),
    to: (f64, f64),
    order: PathOrder,
    params: &FilterParams,
    settings: &IntegratorSettings,
    mode: AxisMode,
) -> Result<LoopUnitary> {
    let (fx, fy) = from;
    let (tx, ty) = to;
    match order {
        PathOrder::V => {
            let uy = integrate_axis(
                spec,
                sector,
                TwistAngles::xy(fx, fy),
                Axis::Y,
                ty - fy,
                params,
                mode,
                settings,
            )?;
            let ux = integrate_axis(
                spec,
                sector,
                TwistAngles::xy(fx, ty),
                Axis::X,
                tx - fx,
                params,
                mode,
                settings,
            )?;
            Ok(ux.compose(&uy))
        }
        PathOrder::W => {
            let ux = integrate_axis(
                spec,
                sector,
                TwistAngles::xy(fx, fy),
                Axis::X,
                tx - fx,
                params,
                mode,
                settings,
            )?;
            let uy = integrate_axis(
                spec,
                sector,
                TwistAngles::xy(tx, fy),
                Axis::Y,
                ty - fy,
                params,
                mode,
                settings,
            )?;
            Ok(uy.compose(&ux))
        }
    }
}

/// Counter-clockwise loop unitary `V_⟲(θx, θy, r) = V† W` around the square
/// of side `r` based at `(θx, θy)`.
pub fn loop_unitary(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    origin: (f64, f64),
    r: f64,
    params: &FilterParams,
    settings: &IntegratorSettings,
) -> Result<LoopUnitary> {
    loop_unitary_mode(spec, sector, origin, r, params, settings, AxisMode::Plain)
}

pub fn loop_unitary_mode(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    origin: (f64, f64),
    r: f64,
    params: &FilterParams,
    settings: &IntegratorSettings,
    mode: AxisMode,
) -> Result<LoopUnitary> {
    let to = (origin.0 + r, origin.1 + r);
    let v = path_evolve(spec, sector, origin, to, PathOrder::V, params, settings, mode)?;
    let w = path_evolve(spec, sector, origin, to, PathOrder::W, params, settings, mode)?;
    Ok(v.dagger().compose(&w))
}

/// Ground state of the assembled Hamiltonian at the flux origin; errors on a
/// degenerate ground state.
pub fn origin_ground_state(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
) -> Result<(Array1<Complex64>, f64)> {
    let h = spec.assemble(TwistAngles::ZERO, sector)?;
    let sd = eig(&h)?;
    if sd.gap() < 1e-10 {
        return Err(FluxError::Degeneracy(format!(
            "ground state at the flux origin is degenerate (gap {:.3e})",
            sd.gap()
        )));
    }
    Ok((sd.ground_state(), sd.gap()))
}

/// `|Ψ_⟲(r)>` and its translated variants.
pub fn loop_state(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    origin: (f64, f64),
    r: f64,
    params: &FilterParams,
    settings: &IntegratorSettings,
    translated: bool,
) -> Result<Array1<Complex64>> {
    let (psi0, _) = origin_ground_state(spec, sector)?;
    let state = if translated {
        let v0 = path_evolve(
            spec,
            sector,
            (0.0, 0.0),
            origin,
            PathOrder::V,
            params,
            settings,
            AxisMode::Plain,
        )?;
        let vl = loop_unitary(spec, sector, origin, r, params, settings)?;
        v0.dagger().apply(&vl.apply(&v0.apply(&psi0)))
    } else {
        loop_unitary(spec, sector, (0.0, 0.0), r, params, settings)?.apply(&psi0)
    };
    Ok(state)
}

/// The exact decomposition of the 2π × 2π loop into `n²` conjugated small
/// loops, with the measured product-versus-big-loop residual.
#[derive(Debug)]
pub struct BigLoopDecomposition {
    pub unitaries: Vec<LoopUnitary>,
    pub product: Array2<Complex64>,
    pub big_loop: LoopUnitary,
    pub residual: f64,
}

pub fn decompose_big_loop(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    n: usize,
    params: &FilterParams,
    settings: &IntegratorSettings,
) -> Result<BigLoopDecomposition> {
    if n == 0 {
        return Err(FluxError::Domain("need at least one loop per side".into()));
    }
    let r = TAU / n as f64;
    let indices: Vec<usize> = (1..=n * n).collect();
    let unitaries: Result<Vec<LoopUnitary>> = indices
        .par_iter()
        .map(|&i| {
            let m = n - 1 - ((i - 1) % n);
            let row = (i - 1) / n;
            let corner = (m as f64 * r, row as f64 * r);
            let v = path_evolve(
                spec,
                sector,
                (0.0, 0.0),
                corner,
                PathOrder::V,
                params,
                settings,
                AxisMode::Plain,
            )?;
            let vl = loop_unitary(spec, sector, corner, r, params, settings)?;
            Ok(v.dagger().compose(&vl).compose(&v))
        })
        .collect();
    let unitaries = unitaries?;
    let mut product = linalg::identity(sector.dim());
    for u in &unitaries {
        product = u.matrix.dot(&product);
    }
    let big_loop = loop_unitary(spec, sector, (0.0, 0.0), TAU, params, settings)?;
    let residual = linalg::op_norm(&(&product - &big_loop.matrix));
    Ok(BigLoopDecomposition {
        unitaries,
        product,
        big_loop,
        residual,
    })
}

/// Conjugate a sector operator with `R_Y(θy, R_X(θx, ·))`.
pub fn rotate_xy(
    sector: &ChargeSector,
    m: &Array2<Complex64>,
    theta_x: f64,
    theta_y: f64,
) -> Array2<Complex64> {
    let lat = sector.lattice();
    let px = charge_phases(&Region::qx_half(lat), sector, theta_x);
    let py = charge_phases(&Region::qy_half(lat), sector, theta_y);
    let dim = sector.dim();
    let mut out = m.clone();
    for i in 0..dim {
        for j in 0..dim {
            let ph = px[i] * py[i] * (px[j] * py[j]).conj();
            out[(i, j)] *= ph;
        }
    }
    out
}

/// Discrepancy between a translated loop unitary and the rotated origin
/// loop, plus the truncated-flow variants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RotatedLoopReport {
    /// ‖V_⟲(θx,θy,r) − R_Y(θy, R_X(θx, V_⟲(0,0,r)))‖
    pub plain: f64,
    /// same discrepancy for the M-truncated flows
    pub truncated: f64,
    /// ‖V^{(M)}_⟲ − V_⟲‖ at the translated corner
    pub truncation_error: f64,
}

pub fn rotated_loop_discrepancy(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    theta_x: f64,
    theta_y: f64,
    r: f64,
    m: usize,
    params: &FilterParams,
    settings: &IntegratorSettings,
) -> Result<RotatedLoopReport> {
    let at = loop_unitary(spec, sector, (theta_x, theta_y), r, params, settings)?;
    let at0 = loop_unitary(spec, sector, (0.0, 0.0), r, params, settings)?;
    let rotated = rotate_xy(sector, &at0.matrix, theta_x, theta_y);
    let plain = linalg::op_norm(&(&at.matrix - &rotated));

    let mode = AxisMode::Truncated(m);
    let at_m = loop_unitary_mode(spec, sector, (theta_x, theta_y), r, params, settings, mode)?;
    let at0_m = loop_unitary_mode(spec, sector, (0.0, 0.0), r, params, settings, mode)?;
    let rotated_m = rotate_xy(sector, &at0_m.matrix, theta_x, theta_y);
    let truncated = linalg::op_norm(&(&at_m.matrix - &rotated_m));
    let truncation_error = linalg::op_norm(&(&at_m.matrix - &at.matrix));
    Ok(RotatedLoopReport {
        plain,
        truncated,
        truncation_error,
    })
}

/// A piecewise-axis-aligned path in flux space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Segment {
    pub start: TwistAngles,
    pub velocity: [f64; 4],
    pub span: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FluxPath {
    pub segments: Vec<Segment>,
}

impl FluxPath {
    /// The loop `Λ(r)` based at the origin.
    pub fn square_loop(r: f64) -> Self {
        let seg = |start: (f64, f64), vel: [f64; 4], span: f64| Segment {
            start: TwistAngles::xy(start.0, start.1),
            velocity: vel,
            span,
        };
        FluxPath {
            segments: vec![
                seg((0.0, 0.0), [1.0, 0.0, 0.0, 0.0], r),
                seg((r, 0.0), [0.0, 0.0, 1.0, 0.0], r),
                seg((r, r), [1.0, 0.0, 0.0, 0.0], -r),
                seg((0.0, r), [0.0, 0.0, 1.0, 0.0], -r),
            ],
        }
    }

    pub fn evolve(
        &self,
        spec: &TwistedHamiltonianSpec,
        sector: &ChargeSector,
        params: &FilterParams,
        settings: &IntegratorSettings,
    ) -> Result<LoopUnitary> {
        let mut acc = LoopUnitary::identity(sector.dim());
        for segment in &self.segments {
            let gen = plain_generator(spec, sector, segment.start, segment.velocity, params.alpha);
            let leg = flow(&gen, segment.span, sector.dim(), settings)?;
            acc = leg.compose(&acc);
        }
        Ok(acc)
    }
}
