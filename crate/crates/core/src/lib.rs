//! Numerical laboratory for flux-threading on finite torus lattices.
//!
//! The crate assembles twisted lattice Hamiltonians term by term, filters
//! their derivatives through a Gaussian spectral weight, integrates the
//! resulting quasi-adiabatic flows around loops in flux space, and measures
//! everything downstream of that: Berry phases, Kubo conductance, Chern
//! numbers, localization envelopes, loop ledgers, and the rank-1 bundle
//! projector built from averaged path evolutions.

pub mod bundle;
pub mod error;
pub mod evolution;
pub mod hamiltonian;
pub mod lattice;
pub mod models;
pub mod observables;
pub mod quasiadiabatic;
pub mod spectral;

pub use error::{FluxError, Result};

pub(crate) mod linalg {
    //! Small shared dense-matrix helpers on `ndarray` storage.

    use ndarray::{Array1, Array2};
    use num_complex::Complex64;

    pub fn dagger(a: &Array2<Complex64>) -> Array2<Complex64> {
        a.t().mapv(|z| z.conj())
    }

    pub fn hermiticity_defect(a: &Array2<Complex64>) -> f64 {
        let mut d = 0.0f64;
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                d = d.max((a[(i, j)] - a[(j, i)].conj()).norm());
            }
        }
        d
    }

    /// Operator 2-norm. Hermitian inputs take the eigenvalue route, anything
    /// else goes through the largest singular value of `A†A`.
    pub fn op_norm(a: &Array2<Complex64>) -> f64 {
        if a.nrows() == 0 {
            return 0.0;
        }
        let scale = a.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        if hermiticity_defect(a) <= 1e-12 * scale.max(1.0) {
            crate::spectral::eigvalsh(a)
                .iter()
                .fold(0.0f64, |m, &v| m.max(v.abs()))
        } else {
            let ada = dagger(a).dot(a);
            let top = crate::spectral::eigvalsh(&ada)
                .iter()
                .fold(0.0f64, |m, &v| m.max(v));
            top.max(0.0).sqrt()
        }
    }

    pub fn commutator(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
        a.dot(b) - b.dot(a)
    }

    pub fn unitarity_defect(u: &Array2<Complex64>) -> f64 {
        let mut m = dagger(u).dot(u);
        for i in 0..m.nrows() {
            m[(i, i)] -= Complex64::new(1.0, 0.0);
        }
        op_norm(&m)
    }

    pub fn identity(n: usize) -> Array2<Complex64> {
        Array2::eye(n)
    }

    pub fn inner(a: &Array1<Complex64>, b: &Array1<Complex64>) -> Complex64 {
        a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
    }

    pub fn norm(a: &Array1<Complex64>) -> f64 {
        inner(a, a).re.sqrt()
    }

    pub fn outer(a: &Array1<Complex64>, b: &Array1<Complex64>) -> Array2<Complex64> {
        let n = a.len();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = a[i] * b[j].conj();
            }
        }
        m
    }
}
