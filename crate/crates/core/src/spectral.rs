//! Dense Hermitian eigendecomposition, Heisenberg evolution in the eigenbasis,
//! and the exact parallel-transport oracle for gapped families.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{FluxError, Result};
use crate::linalg;

/// Full decompositions are refused above this dimension; larger sectors only
/// get extremal pairs through the Lanczos path.
pub const DENSE_DIM_LIMIT: usize = 6000;

const HERM_TOL: f64 = 1e-10;

/// Eigenvalues of a Hermitian matrix, ascending.  Panics on non-square input;
/// hermiticity is the caller's responsibility (used for norms).
pub fn eigvalsh(h: &Array2<Complex64>) -> Vec<f64> {
    let n = h.nrows();
    if n == 0 {
        return Vec::new();
    }
    let m = faer::Mat::from_fn(n, n, |i, j| h[(i, j)]);
    let evd = m
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("self-adjoint eigendecomposition failed");
    let s = evd.S().column_vector();
    (0..n).map(|i| s[i].re).collect()
}

/// Eigen-decomposition of one Hamiltonian: ascending eigenvalues, unitary
/// column eigenvectors, phase-fixed so the largest-magnitude component of
/// each column is real positive.
#[derive(Debug, Clone)]
pub struct SpectralData {
    eigenvalues: Vec<f64>,
    eigenvectors: Array2<Complex64>,
    full: bool,
}

impl SpectralData {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Array2<Complex64> {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn n_levels(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_full(&self) -> bool {
        self.full
    }

    pub fn require_full(&self) -> Result<()> {
        if self.full {
            Ok(())
        } else {
            Err(FluxError::Capability(
                "partial spectrum only; this operation needs the full eigenbasis".into(),
            ))
        }
    }

    pub fn e0(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Gap above the lowest `q` levels (default pass `1`).
    pub fn gap_above(&self, q: usize) -> f64 {
        if q < self.eigenvalues.len() {
            self.eigenvalues[q] - self.eigenvalues[0]
        } else {
            0.0
        }
    }

    pub fn gap(&self) -> f64 {
        self.gap_above(1)
    }

    pub fn state(&self, n: usize) -> Array1<Complex64> {
        self.eigenvectors.column(n).to_owned()
    }

    pub fn ground_state(&self) -> Array1<Complex64> {
        self.state(0)
    }

    /// Projector onto the lowest `q` levels.
    pub fn ground_projector(&self, q: usize) -> Array2<Complex64> {
        let dim = self.dim();
        let mut p = Array2::zeros((dim, dim));
        for k in 0..q {
            let v = self.eigenvectors.column(k);
            for i in 0..dim {
                for j in 0..dim {
                    p[(i, j)] += v[i] * v[j].conj();
                }
            }
        }
        p
    }

    /// Reduced resolvent `(1-P0)/(H-E0)` excluding the lowest `q` levels.
    pub fn reduced_resolvent(&self, q: usize) -> Array2<Complex64> {
        let dim = self.dim();
        let mut r = Array2::zeros((dim, dim));
        for n in q..self.n_levels() {
            let w = 1.0 / (self.eigenvalues[n] - self.eigenvalues[0]);
            let v = self.eigenvectors.column(n);
            for i in 0..dim {
                for j in 0..dim {
                    r[(i, j)] += v[i] * v[j].conj() * w;
                }
            }
        }
        r
    }
}

/// Full decomposition for dims within the dense cap; Lanczos extremal pairs
/// beyond it (flagged partial).
pub fn eig(h: &Array2<Complex64>) -> Result<SpectralData> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(FluxError::Domain("matrix not square".into()));
    }
    let scale = h.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
    if linalg::hermiticity_defect(h) > HERM_TOL * scale {
        return Err(FluxError::Domain(
            "matrix is not Hermitian within tolerance".into(),
        ));
    }
    if n > DENSE_DIM_LIMIT {
        return lanczos_lowest(h, 8);
    }
    let m = faer::Mat::from_fn(n, n, |i, j| h[(i, j)]);
    let evd = m
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| FluxError::Domain(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let eigenvalues: Vec<f64> = (0..n).map(|i| s[i].re).collect();
    let mut eigenvectors = Array2::zeros((n, n));
    for j in 0..n {
        for i in 0..n {
            eigenvectors[(i, j)] = u[(i, j)];
        }
    }
    fix_phases(&mut eigenvectors);
    Ok(SpectralData {
        eigenvalues,
        eigenvectors,
        full: true,
    })
}

/// Rotate each column so its largest-magnitude entry is real positive.
pub fn fix_phases(v: &mut Array2<Complex64>) {
    for j in 0..v.ncols() {
        let mut best = 0usize;
        let mut mag = -1.0f64;
        for i in 0..v.nrows() {
            let m = v[(i, j)].norm();
            if m > mag {
                mag = m;
                best = i;
            }
        }
        if mag > 0.0 {
            let phase = v[(best, j)] / Complex64::new(mag, 0.0);
            let fix = phase.conj();
            for i in 0..v.nrows() {
                v[(i, j)] *= fix;
            }
        }
    }
}

/// Lanczos with full reorthogonalization for the lowest `k` pairs.
fn lanczos_lowest(h: &Array2<Complex64>, k: usize) -> Result<SpectralData> {
    let n = h.nrows();
    let m = (6 * k + 40).min(n);
    let mut basis: Vec<Array1<Complex64>> = Vec::with_capacity(m);
    let mut alphas = Vec::with_capacity(m);
    let mut betas = Vec::with_capacity(m);

    // deterministic start vector
    let mut v = Array1::from_shape_fn(n, |i| {
        Complex64::new(((i * 2654435761) % 1000) as f64 / 1000.0 - 0.5, 0.3)
    });
    let nv = linalg::norm(&v);
    v.mapv_inplace(|z| z / nv);

    for j in 0..m {
        let mut w = h.dot(&v);
        let alpha = linalg::inner(&v, &w).re;
        alphas.push(alpha);
        basis.push(v.clone());
        // full reorthogonalization, twice
        for _ in 0..2 {
            for b in &basis {
                let c = linalg::inner(b, &w);
                w = w - b.mapv(|z| z * c);
            }
        }
        let beta = linalg::norm(&w);
        if beta < 1e-13 || j == m - 1 {
            break;
        }
        betas.push(beta);
        v = w.mapv(|z| z / beta);
    }

    let t = alphas.len();
    let mut tri = Array2::zeros((t, t));
    for i in 0..t {
        tri[(i, i)] = Complex64::new(alphas[i], 0.0);
        if i + 1 < t {
            tri[(i, i + 1)] = Complex64::new(betas[i], 0.0);
            tri[(i + 1, i)] = Complex64::new(betas[i], 0.0);
        }
    }
    let small = eig(&tri)?;
    let keep = k.min(t);
    let mut eigenvalues = Vec::with_capacity(keep);
    let mut eigenvectors = Array2::zeros((n, keep));
    for col in 0..keep {
        eigenvalues.push(small.eigenvalues[col]);
        let coeff = small.eigenvectors.column(col);
        let mut vec = Array1::<Complex64>::zeros(n);
        for (bi, b) in basis.iter().enumerate() {
            let c = coeff[bi];
            vec = vec + b.mapv(|z| z * c);
        }
        let nv = linalg::norm(&vec);
        vec.mapv_inplace(|z| z / nv);
        for i in 0..n {
            eigenvectors[(i, col)] = vec[i];
        }
    }
    fix_phases(&mut eigenvectors);
    Ok(SpectralData {
        eigenvalues,
        eigenvectors,
        full: false,
    })
}

/// Heisenberg evolution `τ_u(A) = e^{iuH} A e^{-iuH}` via eigenbasis phases.
pub fn heisenberg(sd: &SpectralData, a: &Array2<Complex64>, u: f64) -> Array2<Complex64> {
    let v = sd.eigenvectors();
    let vd = linalg::dagger(v);
    let mut w = vd.dot(a).dot(v);
    for m in 0..w.nrows() {
        for n in 0..w.ncols() {
            let phase = u * (sd.eigenvalues[m] - sd.eigenvalues[n]);
            w[(m, n)] *= Complex64::from_polar(1.0, phase);
        }
    }
    v.dot(&w).dot(&vd)
}

/// Result of transporting a ground state along a one-parameter family.
#[derive(Debug, Clone)]
pub struct Transported {
    pub thetas: Vec<f64>,
    pub states: Vec<Array1<Complex64>>,
    pub gaps: Vec<f64>,
    /// max |<Ψ|∂Ψ>| observed at accepted steps
    pub max_transport_defect: f64,
}

impl Transported {
    pub fn final_state(&self) -> &Array1<Complex64> {
        self.states.last().unwrap()
    }
}

/// Integrates the parallel-transport equation
/// `∂_θ |Ψ> = -(1-P0)/(H-E0) ∂_θ H |Ψ>` with RK4, re-diagonalizing at every
/// stage.  `deriv` may be `None`, in which case a central finite difference
/// of the family is used.
pub fn parallel_transport(
    family: &dyn Fn(f64) -> Array2<Complex64>,
    deriv: Option<&dyn Fn(f64) -> Array2<Complex64>>,
    span: (f64, f64),
    steps: usize,
    gap_floor: f64,
) -> Result<Transported> {
    let (t0, t1) = span;
    let h = (t1 - t0) / steps.max(1) as f64;
    let fd = |t: f64| {
        let dt = 1e-6;
        (family(t + dt) - family(t - dt)).mapv(|z| z / (2.0 * dt))
    };
    let dh = |t: f64| match deriv {
        Some(d) => d(t),
        None => fd(t),
    };

    let rhs = |t: f64, psi: &Array1<Complex64>| -> Result<(Array1<Complex64>, f64)> {
        let sd = eig(&family(t))?;
        sd.require_full()?;
        let gap = sd.gap();
        if gap < gap_floor {
            return Err(FluxError::PathDegeneracy {
                at: t,
                gap,
                floor: gap_floor,
            });
        }
        let r = sd.reduced_resolvent(1);
        let v = r.dot(&dh(t).dot(psi)).mapv(|z| -z);
        Ok((v, gap))
    };

    let sd0 = eig(&family(t0))?;
    sd0.require_full()?;
    if sd0.gap() < gap_floor {
        return Err(FluxError::PathDegeneracy {
            at: t0,
            gap: sd0.gap(),
            floor: gap_floor,
        });
    }
    let mut psi = sd0.ground_state();

    let mut thetas = vec![t0];
    let mut states = vec![psi.clone()];
    let mut gaps = vec![sd0.gap()];
    let mut max_defect = 0.0f64;

    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let (k1, gap) = rhs(t, &psi)?;
        max_defect = max_defect.max(linalg::inner(&psi, &k1).norm());
        let (k2, _) = rhs(t + 0.5 * h, &(psi.clone() + k1.mapv(|z| z * (0.5 * h))))?;
        let (k3, _) = rhs(t + 0.5 * h, &(psi.clone() + k2.mapv(|z| z * (0.5 * h))))?;
        let (k4, _) = rhs(t + h, &(psi.clone() + k3.mapv(|z| z * h)))?;
        psi = psi
            + (k1 + k2.mapv(|z| z * 2.0) + k3.mapv(|z| z * 2.0) + k4).mapv(|z| z * (h / 6.0));
        let n = linalg::norm(&psi);
        psi.mapv_inplace(|z| z / n);
        thetas.push(t + h);
        states.push(psi.clone());
        gaps.push(gap);
    }

    Ok(Transported {
        thetas,
        states,
        gaps,
        max_transport_defect: max_defect,
    })
}

/// Projector-valued transport for degenerate ground spaces:
/// `∂_θ P = -(R ∂H P + P ∂H R)` with `R` the reduced resolvent above level `q`.
pub fn parallel_transport_projector(
    family: &dyn Fn(f64) -> Array2<Complex64>,
    deriv: Option<&dyn Fn(f64) -> Array2<Complex64>>,
    q: usize,
    span: (f64, f64),
    steps: usize,
    gap_floor: f64,
) -> Result<Vec<Array2<Complex64>>> {
    let (t0, t1) = span;
    let h = (t1 - t0) / steps.max(1) as f64;
    let dh = |t: f64| match deriv {
        Some(d) => d(t),
        None => {
            let dt = 1e-6;
            (family(t + dt) - family(t - dt)).mapv(|z| z / (2.0 * dt))
        }
    };
    let rhs = |t: f64, p: &Array2<Complex64>| -> Result<Array2<Complex64>> {
        let sd = eig(&family(t))?;
        sd.require_full()?;
        let gap = sd.gap_above(q);
        if gap < gap_floor {
            return Err(FluxError::PathDegeneracy {
                at: t,
                gap,
                floor: gap_floor,
            });
        }
        let r = sd.reduced_resolvent(q);
        let d = dh(t);
        let rp = r.dot(&d).dot(p);
        let pr = p.dot(&d).dot(&r);
        Ok((rp + pr).mapv(|z| -z))
    };

    let sd0 = eig(&family(t0))?;
    let mut p = sd0.ground_projector(q);
    let mut out = vec![p.clone()];
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let k1 = rhs(t, &p)?;
        let k2 = rhs(t + 0.5 * h, &(&p + &k1.mapv(|z| z * (0.5 * h))))?;
        let k3 = rhs(t + 0.5 * h, &(&p + &k2.mapv(|z| z * (0.5 * h))))?;
        let k4 = rhs(t + h, &(&p + &k3.mapv(|z| z * h)))?;
        p = &p + &(k1 + k2.mapv(|z| z * 2.0) + k3.mapv(|z| z * 2.0) + k4).mapv(|z| z * (h / 6.0));
        out.push(p.clone());
    }
    Ok(out)
}
