//! Constructive rank-1 projector bundle over the flux torus: four-path
//! holonomies, the path-weighted averaged operator `O`, periodic smoothing,
//! and the top-eigenvector projector field with its covariance defects.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{FluxError, Result};
use crate::evolution::{integrate_axis, origin_ground_state, AxisMode, IntegratorSettings};
use crate::hamiltonian::TwistAngles;
use crate::lattice::ChargeSector;
use crate::hamiltonian::TwistedHamiltonianSpec;
use crate::linalg;
use crate::observables::{chern_from_state_field, StateField};
use crate::quasiadiabatic::{generator, Axis, FilterParams};

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// Span of the "decrease from 2π" leg ending at `theta`; zero at the seam so
/// the four paths at the origin are all empty.
fn dec_span(theta: f64) -> f64 {
    if theta <= 0.0 {
        0.0
    } else {
        theta - TAU
    }
}

/// Path weights `w^a = w^a_x(θx) w^a_y(θy)`: a bilinear partition of unity
/// favouring the short way around in each direction.
pub fn path_weights(theta_x: f64, theta_y: f64) -> [f64; 4] {
    let wy_inc = 1.0 - theta_y / TAU;
    let wy_dec = theta_y / TAU;
    let wx_inc = 1.0 - theta_x / TAU;
    let wx_dec = theta_x / TAU;
    // a = 1: inc y, inc x; a = 2: inc y, dec x; a = 3: dec y, inc x; a = 4: dec y, dec x
    [
        wy_inc * wx_inc,
        wy_inc * wx_dec,
        wy_dec * wx_inc,
        wy_dec * wx_dec,
    ]
}

/// The four path unitaries to `(θx, θy)` and their pairwise ground-state
/// overlaps.
#[derive(Debug, Clone)]
pub struct FourPaths {
    pub unitaries: [Array2<Complex64>; 4],
    /// |<Ψ0|U_a† U_b Ψ0>|²
    pub overlap_sq: [[f64; 4]; 4],
    /// max over pairs of sqrt(1 - overlap²)
    pub eps_check: f64,
}

pub fn four_path_unitaries(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    theta_x: f64,
    theta_y: f64,
    params: &FilterParams,
    settings: &IntegratorSettings,
) -> Result<FourPaths> {
    let leg_y = |span: f64| {
        integrate_axis(
            spec,
            sector,
            TwistAngles::ZERO,
            Axis::Y,
            span,
            params,
            AxisMode::Plain,
            settings,
        )
    };
    let leg_x = |span: f64| {
        integrate_axis(
            spec,
            sector,
            TwistAngles::xy(0.0, theta_y),
            Axis::X,
            span,
            params,
            AxisMode::Plain,
            settings,
        )
    };
    let y_inc = leg_y(theta_y)?;
    let y_dec = leg_y(dec_span(theta_y))?;
    let x_inc = leg_x(theta_x)?;
    let x_dec = leg_x(dec_span(theta_x))?;
    let unitaries = [
        x_inc.matrix.dot(&y_inc.matrix),
        x_dec.matrix.dot(&y_inc.matrix),
        x_inc.matrix.dot(&y_dec.matrix),
        x_dec.matrix.dot(&y_dec.matrix),
    ];
    let (psi0, _) = origin_ground_state(spec, sector)?;
    let states: Vec<Array1<Complex64>> = unitaries.iter().map(|u| u.dot(&psi0)).collect();
    let mut overlap_sq = [[0.0f64; 4]; 4];
    let mut eps_check = 0.0f64;
    for a in 0..4 {
        for b in 0..4 {
            let o = linalg::inner(&states[a], &states[b]).norm_sqr();
            overlap_sq[a][b] = o;
            if a != b {
                eps_check = eps_check.max((1.0 - o).max(0.0).sqrt());
            }
        }
    }
    Ok(FourPaths {
        unitaries,
        overlap_sq,
        eps_check,
    })
}

/// `O(θx, θy) = Σ_a w^a U_a |Ψ0><Ψ0| U_a†` at a single point.
pub fn averaged_projector(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    theta_x: f64,
    theta_y: f64,
    params: &FilterParams,
    settings: &IntegratorSettings,
) -> Result<Array2<Complex64>> {
    let paths = four_path_unitaries(spec, sector, theta_x, theta_y, params, settings)?;
    let (psi0, _) = origin_ground_state(spec, sector)?;
    let w = path_weights(theta_x, theta_y);
    let dim = sector.dim();
    let mut o = Array2::zeros((dim, dim));
    for a in 0..4 {
        let psi = paths.unitaries[a].dot(&psi0);
        o = o + linalg::outer(&psi, &psi).mapv(|z| z * w[a]);
    }
    Ok(o)
}

/// The averaged-operator field over the mesh plus the measured path-overlap
/// deficit.
pub struct OField {
    pub n_g: usize,
    pub o: Vec<Vec<Array2<Complex64>>>,
    pub eps_check: f64,
    /// elementwise defect of the 0 ↔ 2π seam reconstruction
    pub seam_defect: f64,
}

/// Build the field incrementally: cumulative y-legs down the two sides, then
/// cumulative x-legs across each row, reusing each leg for the two y-variants.
pub fn build_o_field(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    n_g: usize,
    params: &FilterParams,
    settings: &IntegratorSettings,
) -> Result<OField> {
    if n_g < 3 {
        return Err(FluxError::Domain("mesh too coarse".into()));
    }
    let (psi0, _) = origin_ground_state(spec, sector)?;
    let dtheta = TAU / n_g as f64;

    // cumulative y-legs: inc from 0, dec from 2π
    let mut y_inc = vec![psi0.clone()];
    let mut y_dec_rev = vec![psi0.clone()]; // index k holds θy = -k dθ ≡ 2π - k dθ
    for k in 0..n_g - 1 {
        let leg = integrate_axis(
            spec,
            sector,
            TwistAngles::xy(0.0, k as f64 * dtheta),
            Axis::Y,
            dtheta,
            params,
            AxisMode::Plain,
            settings,
        )?;
        y_inc.push(leg.apply(y_inc.last().unwrap()));
        let leg_d = integrate_axis(
            spec,
            sector,
            TwistAngles::xy(0.0, -(k as f64) * dtheta),
            Axis::Y,
            -dtheta,
            params,
            AxisMode::Plain,
            settings,
        )?;
        y_dec_rev.push(leg_d.apply(y_dec_rev.last().unwrap()));
    }

    // rows in parallel: cumulative x-legs applied to both y-variants; the
    // decreasing-x sweep walks down from 2π, so its states land at the
    // mirrored column n_g - k
    let rows: Result<Vec<(Vec<Array2<Complex64>>, f64)>> = (0..n_g)
        .into_par_iter()
        .map(|j| {
            let ty = j as f64 * dtheta;
            let ya = y_inc[j].clone();
            let yd = y_dec_rev[(n_g - j) % n_g].clone();
            let dim = sector.dim();

            let mut inc1 = vec![ya.clone()];
            let mut inc3 = vec![yd.clone()];
            for i in 1..n_g {
                let leg = integrate_axis(
                    spec,
                    sector,
                    TwistAngles::xy((i - 1) as f64 * dtheta, ty),
                    Axis::X,
                    dtheta,
                    params,
                    AxisMode::Plain,
                    settings,
                )?;
                inc1.push(leg.apply(inc1.last().unwrap()));
                inc3.push(leg.apply(inc3.last().unwrap()));
            }
            let mut dec2 = vec![ya.clone(); n_g];
            let mut dec4 = vec![yd.clone(); n_g];
            let mut cur2 = ya.clone();
            let mut cur4 = yd.clone();
            for k in 1..n_g {
                let leg = integrate_axis(
                    spec,
                    sector,
                    TwistAngles::xy(-((k - 1) as f64) * dtheta, ty),
                    Axis::X,
                    -dtheta,
                    params,
                    AxisMode::Plain,
                    settings,
                )?;
                cur2 = leg.apply(&cur2);
                cur4 = leg.apply(&cur4);
                dec2[n_g - k] = cur2.clone();
                dec4[n_g - k] = cur4.clone();
            }

            let mut row = Vec::with_capacity(n_g);
            let mut eps = 0.0f64;
            for i in 0..n_g {
                let tx = i as f64 * dtheta;
                let states = [&inc1[i], &dec2[i], &inc3[i], &dec4[i]];
                for a in 0..4 {
                    for b in a + 1..4 {
                        let o = linalg::inner(states[a], states[b]).norm_sqr();
                        eps = eps.max((1.0 - o).max(0.0).sqrt());
                    }
                }
                let w = path_weights(tx, ty);
                let mut o = Array2::zeros((dim, dim));
                for (k, st) in states.iter().enumerate() {
                    o = o + linalg::outer(st, st).mapv(|z| z * w[k]);
                }
                row.push(o);
            }
            Ok((row, eps))
        })
        .collect();
    let rows = rows?;
    let eps_check = rows.iter().map(|(_, e)| *e).fold(0.0f64, f64::max);
    // rows are produced per θy; store the field as o[θx index][θy index]
    let dim = sector.dim();
    let mut o = vec![vec![Array2::<Complex64>::zeros((dim, dim)); n_g]; n_g];
    for (j, (row, _)) in rows.into_iter().enumerate() {
        for (i, m) in row.into_iter().enumerate() {
            o[i][j] = m;
        }
    }

    // seam check: O at θx = 2π rebuilt directly must match O at θx = 0
    let seam = {
        let direct = averaged_projector(spec, sector, TAU, 0.0, params, settings);
        match direct {
            Ok(m) => linalg::op_norm(&(&m - &o[0][0])),
            Err(_) => f64::NAN,
        }
    };

    Ok(OField {
        n_g,
        o,
        eps_check,
        seam_defect: seam,
    })
}

/// The smoothed field, its rank-1 projectors and the covariance defects.
pub struct BundleField {
    pub n_g: usize,
    pub kernel_halfwidth: usize,
    pub eps_check: f64,
    pub seam_defect: f64,
    pub lambda1: Vec<Vec<f64>>,
    pub lambda2: Vec<Vec<f64>>,
    pub defect_x: Vec<Vec<f64>>,
    pub defect_y: Vec<Vec<f64>>,
    pub idempotency_defect: f64,
    pub trace_defect: f64,
    /// max measured generator norm over the mesh
    pub d_max: f64,
    pub p_field: Vec<Vec<Array2<Complex64>>>,
    pub top_states: StateField,
}

/// Convolve with the normalized square kernel, project onto the top
/// eigenvector per point, and measure `‖i[D, P] - ∂P‖` with centered mesh
/// differences.
pub fn smooth_and_project(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    field: &OField,
    kernel_halfwidth: usize,
    params: &FilterParams,
) -> Result<BundleField> {
    let n = field.n_g;
    if 2 * kernel_halfwidth + 1 > n {
        return Err(FluxError::Domain(
            "kernel wider than the mesh; refine the mesh or shrink the kernel".into(),
        ));
    }
    let w = kernel_halfwidth as isize;
    let norm = ((2 * kernel_halfwidth + 1) * (2 * kernel_halfwidth + 1)) as f64;
    let dim = sector.dim();
    let mut o_smooth = vec![vec![Array2::<Complex64>::zeros((dim, dim)); n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = Array2::<Complex64>::zeros((dim, dim));
            for di in -w..=w {
                for dj in -w..=w {
                    let ii = (i as isize + di).rem_euclid(n as isize) as usize;
                    let jj = (j as isize + dj).rem_euclid(n as isize) as usize;
                    acc = acc + &field.o[ii][jj];
                }
            }
            o_smooth[i][j] = acc.mapv(|z| z / norm);
        }
    }

    let mut lambda1 = vec![vec![0.0; n]; n];
    let mut lambda2 = vec![vec![0.0; n]; n];
    let mut p_field = vec![vec![Array2::<Complex64>::zeros((dim, dim)); n]; n];
    let mut top_states: StateField = vec![vec![Array1::zeros(dim); n]; n];
    let mut idem = 0.0f64;
    let mut trace_defect = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let sd = crate::spectral::eig(&o_smooth[i][j])?;
            let e = sd.eigenvalues();
            let l1 = e[dim - 1];
            let l2 = if dim > 1 { e[dim - 2] } else { 0.0 };
            if l1 - l2 < 1e-6 {
                return Err(FluxError::Degeneracy(format!(
                    "top eigenvalue splitting {:.3e} at mesh point ({i}, {j})",
                    l1 - l2
                )));
            }
            lambda1[i][j] = l1;
            lambda2[i][j] = l2;
            let v = sd.state(dim - 1);
            let p = linalg::outer(&v, &v);
            idem = idem.max(linalg::op_norm(&(&p.dot(&p) - &p)));
            let tr: Complex64 = (0..dim).map(|k| p[(k, k)]).sum();
            trace_defect = trace_defect.max((tr - Complex64::new(1.0, 0.0)).norm());
            p_field[i][j] = p;
            top_states[i][j] = v;
        }
    }

    // covariance defects with the full generators
    let dtheta = TAU / n as f64;
    let pts: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let defects: Result<Vec<(f64, f64, f64)>> = pts
        .par_iter()
        .map(|&(i, j)| {
            let angles = TwistAngles::xy(i as f64 * dtheta, j as f64 * dtheta);
            let dx = generator(spec, sector, angles, Axis::X, params.alpha)?;
            let dy = generator(spec, sector, angles, Axis::Y, params.alpha)?;
            let d_norm = linalg::op_norm(&dx).max(linalg::op_norm(&dy));
            let ddx = (&p_field[(i + 1) % n][j] - &p_field[(i + n - 1) % n][j])
                .mapv(|z| z / (2.0 * dtheta));
            let ddy = (&p_field[i][(j + 1) % n] - &p_field[i][(j + n - 1) % n])
                .mapv(|z| z / (2.0 * dtheta));
            let p = &p_field[i][j];
            let cx = linalg::commutator(&dx, p).mapv(|z| z * Complex64::new(0.0, 1.0));
            let cy = linalg::commutator(&dy, p).mapv(|z| z * Complex64::new(0.0, 1.0));
            Ok((
                linalg::op_norm(&(&cx - &ddx)),
                linalg::op_norm(&(&cy - &ddy)),
                d_norm,
            ))
        })
        .collect();
    let defects = defects?;
    let mut defect_x = vec![vec![0.0; n]; n];
    let mut defect_y = vec![vec![0.0; n]; n];
    let mut d_max = 0.0f64;
    for (k, &(dx, dy, dn)) in defects.iter().enumerate() {
        let (i, j) = pts[k];
        defect_x[i][j] = dx;
        defect_y[i][j] = dy;
        d_max = d_max.max(dn);
    }

    Ok(BundleField {
        n_g: n,
        kernel_halfwidth,
        eps_check: field.eps_check,
        seam_defect: field.seam_defect,
        lambda1,
        lambda2,
        defect_x,
        defect_y,
        idempotency_defect: idem,
        trace_defect,
        d_max,
        p_field,
        top_states,
    })
}

/// FHS Chern number of the projector field's top eigenvectors.
pub fn bundle_chern(field: &BundleField) -> Result<i64> {
    chern_from_state_field(&field.top_states)
}

/// Convenience: the whole pipeline at one mesh size.
pub fn build_bundle(
    spec: &TwistedHamiltonianSpec,
    sector: &ChargeSector,
    n_g: usize,
    kernel_halfwidth: usize,
    params: &FilterParams,
    settings: &IntegratorSettings,
) -> Result<BundleField> {
    let o = build_o_field(spec, sector, n_g, params, settings)?;
    smooth_and_project(spec, sector, &o, kernel_halfwidth, params)
}
