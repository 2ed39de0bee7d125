//! Interaction terms, the four-angle twist prescription, analytic twist
//! derivatives, and ball/region restrictions of the assembled Hamiltonian.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use ndarray::Array2;
use num_complex::Complex64;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::error::{FluxError, Result};
use crate::lattice::{ChargeSector, Region, Site, TorusLattice};
use crate::linalg;

const HERM_TOL: f64 = 1e-12;

/// One Hermitian interaction term with declared support.
///
/// The local matrix lives on the tensor factor of the support sites taken in
/// site-index order, each site contributing a `(q_max+1)`-dimensional factor,
/// basis ordered lexicographically in the occupations.
#[derive(Debug, Clone)]
pub struct InteractionTerm {
    support: Vec<Site>,
    matrix: Array2<Complex64>,
    label: String,
    norm: f64,
}

impl InteractionTerm {
    pub fn new(
        lat: &TorusLattice,
        support: Vec<Site>,
        matrix: Array2<Complex64>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if support.is_empty() {
            return Err(FluxError::Domain("term with empty support".into()));
        }
        let mut support: Vec<Site> = support
            .into_iter()
            .map(|s| Site::new(lat.wrap(s.x), lat.wrap(s.y)))
            .collect();
        support.sort_by_key(|s| lat.site_index(*s));
        support.dedup();
        let diam = lat.diameter(&support);
        if diam > lat.range() as i32 {
            return Err(FluxError::Domain(format!(
                "support diameter {diam} exceeds range R = {}",
                lat.range()
            )));
        }
        let dim = (lat.q_max() as usize + 1).pow(support.len() as u32);
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(FluxError::Domain(format!(
                "local matrix is {}x{}, expected {dim}x{dim} for {} sites",
                matrix.nrows(),
                matrix.ncols(),
                support.len()
            )));
        }
        let scale = matrix.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
        if linalg::hermiticity_defect(&matrix) > HERM_TOL * scale {
            return Err(FluxError::Domain(format!(
                "term '{}' is not Hermitian",
                label.into()
            )));
        }
        let norm = linalg::op_norm(&matrix);
        Ok(InteractionTerm {
            support,
            matrix,
            label: label.into(),
            norm,
        })
    }

    pub fn support(&self) -> &[Site] {
        &self.support
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Total charge of local basis state `idx` (base `q_max+1` digits).
    fn local_charge(idx: usize, n_sites: usize, base: usize) -> u32 {
        let mut v = idx;
        let mut q = 0u32;
        for _ in 0..n_sites {
            q += (v % base) as u32;
            v /= base;
        }
        q
    }

    /// Charge of local basis state `idx` restricted to the masked sites.
    fn masked_charge(idx: usize, n_sites: usize, base: usize, mask: &[bool]) -> u32 {
        let mut v = idx;
        let mut q = 0u32;
        // digit k (least significant) is the occupation of the LAST site:
        // index = sum_k occ[k] * base^{n-1-k}
        for k in (0..n_sites).rev() {
            if mask[k] {
                q += (v % base) as u32;
            }
            v /= base;
        }
        q
    }

    pub fn is_charge_conserving(&self, q_max: u8) -> bool {
        let base = q_max as usize + 1;
        let n = self.support.len();
        let dim = self.matrix.nrows();
        for a in 0..dim {
            for b in 0..dim {
                if self.matrix[(a, b)].norm() > HERM_TOL
                    && Self::local_charge(a, n, base) != Self::local_charge(b, n, base)
                {
                    return false;
                }
            }
        }
        true
    }
}

/// Projection onto the local-charge-conserving blocks; equals the angle
/// average `(1/2π)∫ e^{iθQ} Φ e^{-iθQ} dθ`.
pub fn charge_symmetrize(lat: &TorusLattice, term: &InteractionTerm) -> InteractionTerm {
    let base = lat.q_max() as usize + 1;
    let n = term.support.len();
    let dim = term.matrix.nrows();
    let mut m = term.matrix.clone();
    for a in 0..dim {
        for b in 0..dim {
            if InteractionTerm::local_charge(a, n, base)
                != InteractionTerm::local_charge(b, n, base)
            {
                m[(a, b)] = Complex64::new(0.0, 0.0);
            }
        }
    }
    let norm = linalg::op_norm(&m);
    InteractionTerm {
        support: term.support.clone(),
        matrix: m,
        label: term.label.clone(),
        norm,
    }
}

/// The four boundary flux angles, each 2π-periodic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwistAngles {
    pub theta_x: f64,
    pub phi_x: f64,
    pub theta_y: f64,
    pub phi_y: f64,
}

impl TwistAngles {
    pub const ZERO: TwistAngles = TwistAngles {
        theta_x: 0.0,
        phi_x: 0.0,
        theta_y: 0.0,
        phi_y: 0.0,
    };

    /// `H(θx, θy)` convention: both virtual fluxes zero.
    pub fn xy(theta_x: f64, theta_y: f64) -> Self {
        TwistAngles {
            theta_x,
            phi_x: 0.0,
            theta_y,
            phi_y: 0.0,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.theta_x, self.phi_x, self.theta_y, self.phi_y]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        TwistAngles {
            theta_x: a[0],
            phi_x: a[1],
            theta_y: a[2],
            phi_y: a[3],
        }
    }

    pub fn add_scaled(&self, v: [f64; 4], t: f64) -> Self {
        let a = self.as_array();
        TwistAngles::from_array([
            a[0] + t * v[0],
            a[1] + t * v[1],
            a[2] + t * v[2],
            a[3] + t * v[3],
        ])
    }

    fn key_bits(&self) -> [u64; 4] {
        [
            self.theta_x.to_bits(),
            self.phi_x.to_bits(),
            self.theta_y.to_bits(),
            self.phi_y.to_bits(),
        ]
    }
}

/// One of the four twist directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TwistDirection {
    ThetaX,
    PhiX,
    ThetaY,
    PhiY,
}

/// Which side of a region restriction to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestrictionSide {
    In,
    Out,
}

type CacheKey = ([u64; 4], u32);

/// A term list over a lattice together with the strength bound `J`, plus a
/// concurrent cache of assembled per-sector matrices.
pub struct TwistedHamiltonianSpec {
    lattice: TorusLattice,
    terms: Vec<InteractionTerm>,
    j_bound: f64,
    cache: RwLock<HashMap<CacheKey, Arc<OnceLock<Arc<Array2<Complex64>>>>>>,
}

impl Clone for TwistedHamiltonianSpec {
    fn clone(&self) -> Self {
        TwistedHamiltonianSpec {
            lattice: self.lattice,
            terms: self.terms.clone(),
            j_bound: self.j_bound,
            cache: RwLock::new(HashMap::new()),
        }
    }
}

impl std::fmt::Debug for TwistedHamiltonianSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TwistedHamiltonianSpec")
            .field("lattice", &self.lattice)
            .field("terms", &self.terms.len())
            .field("j_bound", &self.j_bound)
            .finish()
    }
}

impl TwistedHamiltonianSpec {
    /// Validates Hermiticity, range and the declared strength bound.  Terms
    /// must already conserve charge; use [`from_raw_terms`] to symmetrize
    /// arbitrary Hermitian terms first.
    ///
    /// [`from_raw_terms`]: TwistedHamiltonianSpec::from_raw_terms
    pub fn new(lat: TorusLattice, terms: Vec<InteractionTerm>, j_bound: f64) -> Result<Self> {
        for t in &terms {
            if !t.is_charge_conserving(lat.q_max()) {
                return Err(FluxError::Domain(format!(
                    "term '{}' does not commute with the local charge; symmetrize it first",
                    t.label
                )));
            }
        }
        let spec = TwistedHamiltonianSpec {
            lattice: lat,
            terms,
            j_bound,
            cache: RwLock::new(HashMap::new()),
        };
        let measured = spec.strength();
        if measured > j_bound * (1.0 + 1e-12) {
            return Err(FluxError::Domain(format!(
                "measured strength sup_s Σ_(Z∋s) ‖Φ(Z)‖ = {measured:.6} exceeds declared J = {j_bound}"
            )));
        }
        Ok(spec)
    }

    /// Symmetrizes every term, then validates.
    pub fn from_raw_terms(
        lat: TorusLattice,
        terms: Vec<InteractionTerm>,
        j_bound: f64,
    ) -> Result<Self> {
        let symmetrized = terms.iter().map(|t| charge_symmetrize(&lat, t)).collect();
        Self::new(lat, symmetrized, j_bound)
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    pub fn terms(&self) -> &[InteractionTerm] {
        &self.terms
    }

    pub fn j_bound(&self) -> f64 {
        self.j_bound
    }

    /// `sup_s Σ_(Z∋s) ‖Φ(Z)‖`, the measured interaction strength.
    pub fn strength(&self) -> f64 {
        let mut per_site: HashMap<Site, f64> = HashMap::new();
        for t in &self.terms {
            for s in &t.support {
                *per_site.entry(*s).or_insert(0.0) += t.norm;
            }
        }
        per_site.values().fold(0.0f64, |m, &v| m.max(v))
    }

    /// `Q_max = q_max R² / 4`, the charge-per-term constant in the bounds.
    pub fn q_max_const(&self) -> f64 {
        self.lattice.q_max() as f64 * (self.lattice.range() as f64).powi(2) / 4.0
    }

    fn x_half_mask(&self, support: &[Site]) -> Vec<bool> {
        let l2 = self.lattice.side() as i32 / 2;
        support
            .iter()
            .map(|s| {
                let x = self.lattice.x_one_based(*s);
                x >= 1 && x <= l2
            })
            .collect()
    }

    fn y_half_mask(&self, support: &[Site]) -> Vec<bool> {
        let l2 = self.lattice.side() as i32 / 2;
        support
            .iter()
            .map(|s| {
                let y = self.lattice.y_one_based(*s);
                y >= 1 && y <= l2
            })
            .collect()
    }

    fn touches(&self, support: &[Site], strip: StripLine) -> bool {
        let lat = &self.lattice;
        let r = lat.range() as i32;
        let phi_line = lat.wrap(lat.side() as i32 / 2 + 1);
        support.iter().any(|s| match strip {
            StripLine::XTheta => lat.dist1(s.x, 1) < r,
            StripLine::XPhi => lat.dist1(s.x, phi_line) < r,
            StripLine::YTheta => lat.dist1(s.y, 1) < r,
            StripLine::YPhi => lat.dist1(s.y, phi_line) < r,
        })
    }

    /// Twist case of a term along one axis: which rotation (if any) applies.
    fn twist_case_x(&self, support: &[Site]) -> Option<TwistDirection> {
        if self.touches(support, StripLine::XTheta) {
            Some(TwistDirection::ThetaX)
        } else if self.touches(support, StripLine::XPhi) {
            Some(TwistDirection::PhiX)
        } else {
            None
        }
    }

    fn twist_case_y(&self, support: &[Site]) -> Option<TwistDirection> {
        if self.touches(support, StripLine::YTheta) {
            Some(TwistDirection::ThetaY)
        } else if self.touches(support, StripLine::YPhi) {
            Some(TwistDirection::PhiY)
        } else {
            None
        }
    }

    /// Conjugate a local matrix by `exp(i angle * q_masked)`.
    fn conjugate_by_charge_phase(
        &self,
        m: &Array2<Complex64>,
        n_sites: usize,
        mask: &[bool],
        angle: f64,
    ) -> Array2<Complex64> {
        let base = self.lattice.q_max() as usize + 1;
        let dim = m.nrows();
        let phases: Vec<Complex64> = (0..dim)
            .map(|idx| {
                let q = InteractionTerm::masked_charge(idx, n_sites, base, mask);
                Complex64::from_polar(1.0, angle * q as f64)
            })
            .collect();
        let mut out = m.clone();
        for a in 0..dim {
            for b in 0..dim {
                out[(a, b)] = phases[a] * m[(a, b)] * phases[b].conj();
            }
        }
        out
    }

    /// The twist prescription: terms touching a twist strip are conjugated by
    /// the corresponding charge phase, Y rules first, then X; the order is
    /// irrelevant because the charge phases are diagonal.
    pub fn apply_twists(&self, term: &InteractionTerm, angles: TwistAngles) -> InteractionTerm {
        let n = term.support.len();
        let mut m = term.matrix.clone();
        match self.twist_case_y(&term.support) {
            Some(TwistDirection::ThetaY) => {
                m = self.conjugate_by_charge_phase(
                    &m,
                    n,
                    &self.y_half_mask(&term.support),
                    angles.theta_y,
                );
            }
            Some(TwistDirection::PhiY) => {
                m = self.conjugate_by_charge_phase(
                    &m,
                    n,
                    &self.y_half_mask(&term.support),
                    -angles.phi_y,
                );
            }
            _ => {}
        }
        match self.twist_case_x(&term.support) {
            Some(TwistDirection::ThetaX) => {
                m = self.conjugate_by_charge_phase(
                    &m,
                    n,
                    &self.x_half_mask(&term.support),
                    angles.theta_x,
                );
            }
            Some(TwistDirection::PhiX) => {
                m = self.conjugate_by_charge_phase(
                    &m,
                    n,
                    &self.x_half_mask(&term.support),
                    -angles.phi_x,
                );
            }
            _ => {}
        }
        InteractionTerm {
            support: term.support.clone(),
            matrix: m,
            label: term.label.clone(),
            norm: term.norm,
        }
    }

    /// Embed a local matrix on `support` into the sector basis, adding it to
    /// `out`.
    pub fn embed_into(
        sector: &ChargeSector,
        support: &[Site],
        local: &Array2<Complex64>,
        out: &mut Array2<Complex64>,
    ) {
        let lat = sector.lattice();
        let base = lat.q_max() as usize + 1;
        let n = support.len();
        let site_idx: Vec<usize> = support.iter().map(|s| lat.site_index(*s)).collect();
        let dim_local = local.nrows();
        let mut scratch: Vec<u8> = Vec::new();
        for col in 0..sector.dim() {
            let cfg = sector.config(col);
            let mut loc = 0usize;
            for &si in &site_idx {
                loc = loc * base + cfg[si] as usize;
            }
            for row_loc in 0..dim_local {
                let v = local[(row_loc, loc)];
                if v.norm() == 0.0 {
                    continue;
                }
                scratch.clear();
                scratch.extend_from_slice(cfg);
                let mut rem = row_loc;
                for k in (0..n).rev() {
                    scratch[site_idx[k]] = (rem % base) as u8;
                    rem /= base;
                }
                if let Some(row) = sector.find(&scratch) {
                    out[(row, col)] += v;
                }
            }
        }
    }

    /// Assemble `H(angles)` in the sector basis; results are cached per
    /// `(angles, sector charge)`, with at most one builder per key.
    pub fn assemble(
        &self,
        angles: TwistAngles,
        sector: &ChargeSector,
    ) -> Result<Arc<Array2<Complex64>>> {
        if sector.dim() > crate::spectral::DENSE_DIM_LIMIT {
            return Err(FluxError::Resource(format!(
                "sector dimension {} exceeds the dense cap {}",
                sector.dim(),
                crate::spectral::DENSE_DIM_LIMIT
            )));
        }
        let key: CacheKey = (angles.key_bits(), sector.total_charge());
        let cell = {
            let read = self.cache.read();
            read.get(&key).cloned()
        };
        let cell = match cell {
            Some(c) => c,
            None => {
                let mut write = self.cache.write();
                write.entry(key).or_default().clone()
            }
        };
        let out = cell.get_or_init(|| Arc::new(self.assemble_uncached(angles, sector)));
        Ok(out.clone())
    }

    /// Assemble without touching the cache; integrator steps use this so the
    /// cache holds only deliberately revisited angle points.
    pub fn assemble_fresh(&self, angles: TwistAngles, sector: &ChargeSector) -> Array2<Complex64> {
        self.assemble_uncached(angles, sector)
    }

    fn assemble_uncached(&self, angles: TwistAngles, sector: &ChargeSector) -> Array2<Complex64> {
        let dim = sector.dim();
        let mut h = Array2::zeros((dim, dim));
        for t in &self.terms {
            let tw = self.apply_twists(t, angles);
            Self::embed_into(sector, &tw.support, &tw.matrix, &mut h);
        }
        h
    }

    /// Per-term derivative pieces `∂ Φ(Z; angles)` in the chosen direction,
    /// as local (support, matrix) pairs.  Terms not rotated by that angle
    /// contribute nothing.
    pub fn derivative_pieces(
        &self,
        angles: TwistAngles,
        dir: TwistDirection,
        order: u8,
    ) -> Vec<(Vec<Site>, Array2<Complex64>)> {
        assert!(order == 1 || order == 2, "derivative order must be 1 or 2");
        let mut out = Vec::new();
        for t in &self.terms {
            let case = match dir {
                TwistDirection::ThetaX | TwistDirection::PhiX => self.twist_case_x(&t.support),
                TwistDirection::ThetaY | TwistDirection::PhiY => self.twist_case_y(&t.support),
            };
            if case != Some(dir) {
                continue;
            }
            let tw = self.apply_twists(t, angles);
            let mask = match dir {
                TwistDirection::ThetaX | TwistDirection::PhiX => self.x_half_mask(&t.support),
                TwistDirection::ThetaY | TwistDirection::PhiY => self.y_half_mask(&t.support),
            };
            let sign = match dir {
                TwistDirection::ThetaX | TwistDirection::ThetaY => 1.0,
                TwistDirection::PhiX | TwistDirection::PhiY => -1.0,
            };
            let base = self.lattice.q_max() as usize + 1;
            let n = t.support.len();
            let dim = tw.matrix.nrows();
            let q: Vec<f64> = (0..dim)
                .map(|idx| InteractionTerm::masked_charge(idx, n, base, &mask) as f64)
                .collect();
            let mut d = Array2::zeros((dim, dim));
            for a in 0..dim {
                for b in 0..dim {
                    let dq = q[a] - q[b];
                    d[(a, b)] = match order {
                        // d/dθ e^{iθ q_a} Φ e^{-iθ q_b} = i (q_a - q_b) Φ_tw
                        1 => Complex64::new(0.0, sign * dq) * tw.matrix[(a, b)],
                        _ => Complex64::new(-dq * dq, 0.0) * tw.matrix[(a, b)],
                    };
                }
            }
            out.push((t.support.clone(), d));
        }
        out
    }

    /// Analytic `∂H/∂angle` (or second derivative) assembled in the sector.
    pub fn twist_derivative(
        &self,
        angles: TwistAngles,
        dir: TwistDirection,
        order: u8,
        sector: &ChargeSector,
    ) -> Array2<Complex64> {
        let dim = sector.dim();
        let mut d = Array2::zeros((dim, dim));
        for (support, local) in self.derivative_pieces(angles, dir, order) {
            Self::embed_into(sector, &support, &local, &mut d);
        }
        d
    }

    /// Directional derivative `Σ_d v_d ∂_d H` along a straight line in angle
    /// space; this is the generator input for anti-twist evolutions.
    pub fn path_derivative(
        &self,
        angles: TwistAngles,
        velocity: [f64; 4],
        sector: &ChargeSector,
    ) -> Array2<Complex64> {
        let dirs = [
            TwistDirection::ThetaX,
            TwistDirection::PhiX,
            TwistDirection::ThetaY,
            TwistDirection::PhiY,
        ];
        let dim = sector.dim();
        let mut d = Array2::zeros((dim, dim));
        for (k, dir) in dirs.iter().enumerate() {
            if velocity[k] == 0.0 {
                continue;
            }
            let part = self.twist_derivative(angles, *dir, 1, sector);
            d = d + part.mapv(|z| z * velocity[k]);
        }
        d
    }

    /// Per-term derivative pieces along a straight line in angle space.
    pub fn path_derivative_pieces(
        &self,
        angles: TwistAngles,
        velocity: [f64; 4],
    ) -> Vec<(Vec<Site>, Array2<Complex64>)> {
        let dirs = [
            TwistDirection::ThetaX,
            TwistDirection::PhiX,
            TwistDirection::ThetaY,
            TwistDirection::PhiY,
        ];
        let mut out = Vec::new();
        for (k, dir) in dirs.iter().enumerate() {
            if velocity[k] == 0.0 {
                continue;
            }
            for (support, local) in self.derivative_pieces(angles, *dir, 1) {
                out.push((support, local.mapv(|z| z * velocity[k])));
            }
        }
        out
    }

    /// A rigorous model-specific bound on `‖∂_θ H‖`: `L · sup_s Σ_(Z∋s)
    /// q_max |Z ∩ half| ‖Φ(Z)‖` over the terms the twist rotates.
    pub fn derivative_norm_bound(&self, dir: TwistDirection) -> f64 {
        let mut per_site: HashMap<Site, f64> = HashMap::new();
        for t in &self.terms {
            let case = match dir {
                TwistDirection::ThetaX | TwistDirection::PhiX => self.twist_case_x(&t.support),
                TwistDirection::ThetaY | TwistDirection::PhiY => self.twist_case_y(&t.support),
            };
            if case != Some(dir) {
                continue;
            }
            let mask = match dir {
                TwistDirection::ThetaX | TwistDirection::PhiX => self.x_half_mask(&t.support),
                TwistDirection::ThetaY | TwistDirection::PhiY => self.y_half_mask(&t.support),
            };
            let in_half = mask.iter().filter(|&&b| b).count() as f64;
            let w = self.lattice.q_max() as f64 * in_half * t.norm;
            for s in &t.support {
                *per_site.entry(*s).or_insert(0.0) += w;
            }
        }
        let sup = per_site.values().fold(0.0f64, |m, &v| m.max(v));
        self.lattice.side() as f64 * sup
    }

    /// `H_M(Z) = Σ_(X: d(X,Z) < M−R) Φ(X)`, everything assembled at `angles`.
    /// `M ≥ L` returns the full Hamiltonian.
    pub fn restrict_ball(
        &self,
        z: &[Site],
        m: usize,
        angles: TwistAngles,
        sector: &ChargeSector,
    ) -> Result<Array2<Complex64>> {
        let dim = sector.dim();
        let mut h = Array2::zeros((dim, dim));
        for t in self.ball_terms(z, m)? {
            let tw = self.apply_twists(t, angles);
            Self::embed_into(sector, &tw.support, &tw.matrix, &mut h);
        }
        Ok(h)
    }

    /// The terms participating in `H_M(Z)`.
    pub fn ball_terms(&self, z: &[Site], m: usize) -> Result<Vec<&InteractionTerm>> {
        let r = self.lattice.range();
        if m < r {
            return Err(FluxError::Domain(format!(
                "ball radius M = {m} below the interaction range R = {r}"
            )));
        }
        let full = m >= self.lattice.side();
        Ok(self
            .terms
            .iter()
            .filter(|t| {
                full || (self.lattice.set_distance(&t.support, z) as i64) < (m as i64 - r as i64)
            })
            .collect())
    }

    /// Region restriction: `In` keeps terms with support inside the region,
    /// `Out` the rest; the two sides add up to the full Hamiltonian.
    pub fn restrict_region(
        &self,
        region: &Region,
        angles: TwistAngles,
        side: RestrictionSide,
        sector: &ChargeSector,
    ) -> Array2<Complex64> {
        let dim = sector.dim();
        let mut h = Array2::zeros((dim, dim));
        for t in &self.terms {
            let inside = region.contains_all(&t.support);
            let keep = match side {
                RestrictionSide::In => inside,
                RestrictionSide::Out => !inside,
            };
            if keep {
                let tw = self.apply_twists(t, angles);
                Self::embed_into(sector, &tw.support, &tw.matrix, &mut h);
            }
        }
        h
    }
}

#[derive(Clone, Copy)]
enum StripLine {
    XTheta,
    XPhi,
    YTheta,
    YPhi,
}

// ---------------------------------------------------------------------------
// model files

/// Serialized form of a term list: one JSON document per model.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub lattice: TorusLattice,
    pub j_bound: f64,
    pub terms: Vec<TermRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TermRecord {
    pub support: Vec<Site>,
    pub entries: Vec<MatrixEntry>,
    pub label: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub row: usize,
    pub col: usize,
    pub re: f64,
    pub im: f64,
}

impl ModelFile {
    pub fn from_spec(spec: &TwistedHamiltonianSpec) -> Self {
        let terms = spec
            .terms()
            .iter()
            .map(|t| {
                let dim = t.matrix().nrows();
                let mut entries = Vec::new();
                for row in 0..dim {
                    for col in 0..dim {
                        let v = t.matrix()[(row, col)];
                        if v != Complex64::new(0.0, 0.0) {
                            entries.push(MatrixEntry {
                                row,
                                col,
                                re: v.re,
                                im: v.im,
                            });
                        }
                    }
                }
                TermRecord {
                    support: t.support().to_vec(),
                    entries,
                    label: t.label().to_string(),
                }
            })
            .collect();
        ModelFile {
            lattice: *spec.lattice(),
            j_bound: spec.j_bound(),
            terms,
        }
    }

    pub fn into_spec(self) -> Result<TwistedHamiltonianSpec> {
        let lat = TorusLattice::new(self.lattice.side(), self.lattice.range(), self.lattice.q_max())?;
        let dim_of = |n: usize| (lat.q_max() as usize + 1).pow(n as u32);
        let mut terms = Vec::with_capacity(self.terms.len());
        for rec in self.terms {
            let dim = dim_of(rec.support.len());
            let mut m = Array2::zeros((dim, dim));
            for e in rec.entries {
                if e.row >= dim || e.col >= dim {
                    return Err(FluxError::Domain(format!(
                        "matrix entry ({}, {}) outside {dim}x{dim} block in term '{}'",
                        e.row, e.col, rec.label
                    )));
                }
                m[(e.row, e.col)] = Complex64::new(e.re, e.im);
            }
            terms.push(InteractionTerm::new(&lat, rec.support, m, rec.label)?);
        }
        TwistedHamiltonianSpec::new(lat, terms, self.j_bound)
    }
}
