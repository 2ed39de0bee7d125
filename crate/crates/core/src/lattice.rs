//! Torus geometry, charge-sector bases and the named lattice regions.
//!
//! Site coordinates are stored centered, `x, y ∈ {-⌈L/2⌉+1, …, ⌊L/2⌋}`, so
//! that regions like `|x| ≤ L/4` read off directly.  The twist lines sit at
//! the images of `x = 1` and `x = L/2 + 1` in that frame.

use std::collections::{BTreeSet, HashMap};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FluxError, Result};

/// A lattice site in centered coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site {
    pub x: i32,
    pub y: i32,
}

impl Site {
    pub fn new(x: i32, y: i32) -> Self {
        Site { x, y }
    }
}

/// Square torus of `L × L` sites with interaction range `R` and on-site
/// charges `0..=q_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusLattice {
    side: usize,
    range: usize,
    q_max: u8,
}

impl TorusLattice {
    /// Requires `L > 2R` so that wrap-around cannot make a single
    /// interaction see itself from both sides.
    pub fn new(side: usize, range: usize, q_max: u8) -> Result<Self> {
        if range == 0 {
            return Err(FluxError::Domain("interaction range must be >= 1".into()));
        }
        if side <= 2 * range {
            return Err(FluxError::Domain(format!(
                "need L > 2R, got L = {side}, R = {range}"
            )));
        }
        if q_max == 0 {
            return Err(FluxError::Domain("q_max must be >= 1".into()));
        }
        Ok(TorusLattice {
            side,
            range,
            q_max,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn range(&self) -> usize {
        self.range
    }

    pub fn q_max(&self) -> u8 {
        self.q_max
    }

    pub fn n_sites(&self) -> usize {
        self.side * self.side
    }

    pub fn coord_min(&self) -> i32 {
        1 - (self.side as i32 + 1) / 2
    }

    pub fn coord_max(&self) -> i32 {
        self.side as i32 / 2
    }

    /// Twist machinery needs an even side (the charge half-tori end at
    /// `x = L/2`) and four pairwise disjoint twist strips of width `2R - 1`.
    pub fn twists_supported(&self) -> bool {
        self.side % 2 == 0 && self.side >= 4 * self.range
    }

    pub fn require_twists(&self) -> Result<()> {
        if self.twists_supported() {
            Ok(())
        } else {
            Err(FluxError::Domain(format!(
                "twist experiments need even L >= 4R (disjoint twist strips); got L = {}, R = {}",
                self.side, self.range
            )))
        }
    }

    /// Wrap a coordinate into the centered window.
    pub fn wrap(&self, c: i32) -> i32 {
        let l = self.side as i32;
        let mut c = c.rem_euclid(l);
        if c > self.coord_max() {
            c -= l;
        }
        c
    }

    /// All sites, row-major in the 1-based frame; this fixes the site order
    /// used by sector bases and local-matrix tensor factors.
    pub fn sites(&self) -> Vec<Site> {
        let l = self.side as i32;
        let mut out = Vec::with_capacity(self.n_sites());
        for y1 in 1..=l {
            for x1 in 1..=l {
                out.push(Site::new(self.wrap(x1), self.wrap(y1)));
            }
        }
        out
    }

    pub fn site_index(&self, s: Site) -> usize {
        let l = self.side as i32;
        let x1 = (s.x - 1).rem_euclid(l); // 0-based column in the 1..L frame
        let y1 = (s.y - 1).rem_euclid(l);
        (y1 * l + x1) as usize
    }

    /// Wrap-around distance along one axis.
    pub fn dist1(&self, a: i32, b: i32) -> i32 {
        let l = self.side as i32;
        let d = (a - b).rem_euclid(l);
        d.min(l - d)
    }

    /// L1 torus distance.  The literal `|Δ| mod L` reading of the distance
    /// would deny that `x = L` and `x = 1` are neighbours; the wrap-around
    /// metric is the one consistent with boundary-crossing interactions.
    pub fn distance(&self, s1: Site, s2: Site) -> i32 {
        self.dist1(s1.x, s2.x) + self.dist1(s1.y, s2.y)
    }

    pub fn diameter(&self, sites: &[Site]) -> i32 {
        let mut d = 0;
        for (i, a) in sites.iter().enumerate() {
            for b in &sites[i + 1..] {
                d = d.max(self.distance(*a, *b));
            }
        }
        d
    }

    /// min over pairs, the set distance `d(Z1, Z2)`.
    pub fn set_distance(&self, z1: &[Site], z2: &[Site]) -> i32 {
        let mut d = i32::MAX;
        for a in z1 {
            for b in z2 {
                d = d.min(self.distance(*a, *b));
            }
        }
        d
    }

    /// 1-based x coordinate of a site (twist rules are stated in that frame).
    pub fn x_one_based(&self, s: Site) -> i32 {
        let l = self.side as i32;
        (s.x - 1).rem_euclid(l) + 1
    }

    pub fn y_one_based(&self, s: Site) -> i32 {
        let l = self.side as i32;
        (s.y - 1).rem_euclid(l) + 1
    }
}

/// A named set of sites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub name: String,
    sites: BTreeSet<Site>,
}

impl Region {
    pub fn from_sites(name: impl Into<String>, sites: impl IntoIterator<Item = Site>) -> Self {
        Region {
            name: name.into(),
            sites: sites.into_iter().collect(),
        }
    }

    fn select(lat: &TorusLattice, name: &str, pred: impl Fn(Site) -> bool) -> Self {
        Region::from_sites(name, lat.sites().into_iter().filter(|s| pred(*s)))
    }

    pub fn all(lat: &TorusLattice) -> Self {
        Region::select(lat, "T", |_| true)
    }

    pub fn empty() -> Self {
        Region::from_sites("empty", std::iter::empty())
    }

    /// `Ω = {s : |y(s)| ≤ 5L/24 − R}`.
    pub fn omega(lat: &TorusLattice) -> Self {
        let cut = 5.0 * lat.side() as f64 / 24.0 - lat.range() as f64;
        Region::select(lat, "Omega", |s| (s.y as f64).abs() <= cut)
    }

    /// `Ω₀ = {s : |x| ≤ L/8 − R and |y| ≤ L/8 − R}`.
    pub fn omega_0(lat: &TorusLattice) -> Self {
        let cut = lat.side() as f64 / 8.0 - lat.range() as f64;
        Region::select(lat, "Omega0", |s| {
            (s.x as f64).abs() <= cut && (s.y as f64).abs() <= cut
        })
    }

    /// `Ω_X = {s : |x| ≤ L/4}`.
    pub fn omega_x(lat: &TorusLattice) -> Self {
        let cut = lat.side() as f64 / 4.0;
        Region::select(lat, "OmegaX", |s| (s.x as f64).abs() <= cut)
    }

    /// `Ω_Y = {s : |y| ≤ L/4}`.
    pub fn omega_y(lat: &TorusLattice) -> Self {
        let cut = lat.side() as f64 / 4.0;
        Region::select(lat, "OmegaY", |s| (s.y as f64).abs() <= cut)
    }

    /// Sites within distance `R` of the complement of `Ω_X`.
    pub fn omega_x_c(lat: &TorusLattice) -> Self {
        Region::omega_x(lat)
            .complement(lat)
            .fattened(lat, lat.range() as i32)
            .renamed("OmegaXc")
    }

    pub fn omega_y_c(lat: &TorusLattice) -> Self {
        Region::omega_y(lat)
            .complement(lat)
            .fattened(lat, lat.range() as i32)
            .renamed("OmegaYc")
    }

    /// Half torus `1 ≤ x ≤ L/2` carrying the charge `Q_X`.
    pub fn qx_half(lat: &TorusLattice) -> Self {
        let l2 = lat.side() as i32 / 2;
        Region::select(lat, "QX", |s| {
            let x = lat.x_one_based(s);
            x >= 1 && x <= l2
        })
    }

    pub fn qy_half(lat: &TorusLattice) -> Self {
        let l2 = lat.side() as i32 / 2;
        Region::select(lat, "QY", |s| {
            let y = lat.y_one_based(s);
            y >= 1 && y <= l2
        })
    }

    /// Strip `|x − 1| < R` around the θx twist line (periodic distance).
    pub fn strip_x_theta(lat: &TorusLattice) -> Self {
        let r = lat.range() as i32;
        Region::select(lat, "StripXTheta", |s| lat.dist1(s.x, 1) < r)
    }

    /// Strip around the φx line at `x = L/2 + 1`.
    pub fn strip_x_phi(lat: &TorusLattice) -> Self {
        let r = lat.range() as i32;
        let line = lat.wrap(lat.side() as i32 / 2 + 1);
        Region::select(lat, "StripXPhi", |s| lat.dist1(s.x, line) < r)
    }

    pub fn strip_y_theta(lat: &TorusLattice) -> Self {
        let r = lat.range() as i32;
        Region::select(lat, "StripYTheta", |s| lat.dist1(s.y, 1) < r)
    }

    pub fn strip_y_phi(lat: &TorusLattice) -> Self {
        let r = lat.range() as i32;
        let line = lat.wrap(lat.side() as i32 / 2 + 1);
        Region::select(lat, "StripYPhi", |s| lat.dist1(s.y, line) < r)
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        self.sites.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, s: Site) -> bool {
        self.sites.contains(&s)
    }

    pub fn contains_all(&self, sites: &[Site]) -> bool {
        sites.iter().all(|s| self.contains(*s))
    }

    pub fn complement(&self, lat: &TorusLattice) -> Region {
        Region::from_sites(
            format!("{}^bar", self.name),
            lat.sites().into_iter().filter(|s| !self.contains(*s)),
        )
    }

    /// All sites within torus distance `r` of the region.
    pub fn fattened(&self, lat: &TorusLattice, r: i32) -> Region {
        let inner: Vec<Site> = self.sites.iter().copied().collect();
        Region::from_sites(
            format!("{}+{}", self.name, r),
            lat.sites()
                .into_iter()
                .filter(|s| inner.iter().any(|t| lat.distance(*s, *t) <= r)),
        )
    }

    pub fn intersect(&self, other: &Region) -> Region {
        Region::from_sites(
            format!("{}&{}", self.name, other.name),
            self.sites.intersection(&other.sites).copied(),
        )
    }
}

/// Basis of occupation configurations with fixed total charge.
///
/// The basis order is lexicographic in the site-major occupation vector, so
/// repeated enumerations are bitwise identical.
#[derive(Debug, Clone)]
pub struct ChargeSector {
    lattice: TorusLattice,
    total_charge: u32,
    basis: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

impl ChargeSector {
    pub fn enumerate(lat: &TorusLattice, total_charge: u32) -> Result<Self> {
        let n = lat.n_sites();
        let q_max = lat.q_max() as u32;
        if total_charge > q_max * n as u32 {
            return Err(FluxError::Domain(format!(
                "total charge {total_charge} exceeds q_max * L^2 = {}",
                q_max * n as u32
            )));
        }
        let mut basis = Vec::new();
        let mut cfg = vec![0u8; n];
        enumerate_rec(&mut basis, &mut cfg, 0, total_charge, q_max, n);
        let index = basis
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Ok(ChargeSector {
            lattice: *lat,
            total_charge,
            basis,
            index,
        })
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    pub fn total_charge(&self) -> u32 {
        self.total_charge
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn config(&self, i: usize) -> &[u8] {
        &self.basis[i]
    }

    pub fn find(&self, cfg: &[u8]) -> Option<usize> {
        self.index.get(cfg).copied()
    }

    /// Charge carried inside `region` by basis configuration `i`.
    pub fn charge_in_region(&self, i: usize, region: &Region) -> u32 {
        let cfg = &self.basis[i];
        region
            .sites()
            .map(|s| cfg[self.lattice.site_index(s)] as u32)
            .sum()
    }
}

fn enumerate_rec(
    out: &mut Vec<Vec<u8>>,
    cfg: &mut Vec<u8>,
    site: usize,
    remaining: u32,
    q_max: u32,
    n: usize,
) {
    if site == n {
        if remaining == 0 {
            out.push(cfg.clone());
        }
        return;
    }
    // capacity prune: the remaining sites can hold at most q_max each
    let capacity = q_max * (n - site - 1) as u32;
    for q in 0..=q_max.min(remaining) {
        if remaining - q > capacity {
            continue;
        }
        cfg[site] = q as u8;
        enumerate_rec(out, cfg, site + 1, remaining - q, q_max, n);
    }
    cfg[site] = 0;
}

/// Diagonal operator counting the charge inside `region`, in the sector basis.
pub fn charge_operator(region: &Region, sector: &ChargeSector) -> Array2<Complex64> {
    let dim = sector.dim();
    let mut m = Array2::zeros((dim, dim));
    for i in 0..dim {
        m[(i, i)] = Complex64::new(sector.charge_in_region(i, region) as f64, 0.0);
    }
    m
}

/// Diagonal of `exp(i angle Q_region)` in the sector basis; conjugating with
/// it implements the global rotations `R_X`, `R_Y`.
pub fn charge_phases(region: &Region, sector: &ChargeSector, angle: f64) -> Vec<Complex64> {
    (0..sector.dim())
        .map(|i| Complex64::from_polar(1.0, angle * sector.charge_in_region(i, region) as f64))
        .collect()
}
