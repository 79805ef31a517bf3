//! Box domain, slab partition along `z`, the augmented domain `Ω₀ = Ω ∪ D₀`,
//! the chain sets `W_k`, `U_k` and the ball chain used for propagation of smallness.

use crate::{pt, Error, Point, Result};
use serde::{Deserialize, Serialize};

const TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Point,
    pub upper: Point,
    /// Geometric scale `r0`.
    pub r0: f64,
    /// Constant `C` in `|Ω| ≤ C r0³`.
    pub volume_constant: f64,
}

impl BoxDomain {
    pub fn new(lower: Point, upper: Point, r0: f64, volume_constant: f64) -> Result<Self> {
        if (0..3).any(|a| !(upper[a] > lower[a])) {
            return Err(Error::Geometry("upper corner must exceed lower corner".into()));
        }
        if !(r0 > 0.0) {
            return Err(Error::Geometry("r0 must be positive".into()));
        }
        let b = BoxDomain { lower, upper, r0, volume_constant };
        if b.volume() > volume_constant * r0.powi(3) * (1.0 + TOL) {
            return Err(Error::Geometry(format!(
                "volume {} exceeds C·r0³ = {}",
                b.volume(),
                volume_constant * r0.powi(3)
            )));
        }
        Ok(b)
    }

    pub fn unit(r0: f64) -> Result<Self> {
        let c = (1.0 / r0.powi(3)).max(1.0);
        Self::new(pt(0.0, 0.0, 0.0), pt(1.0, 1.0, 1.0), r0, c)
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        self.extent(0) * self.extent(1) * self.extent(2)
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|a| p[a] >= self.lower[a] - TOL && p[a] <= self.upper[a] + TOL)
    }

    pub fn lateral_center(&self) -> (f64, f64) {
        (0.5 * (self.lower[0] + self.upper[0]), 0.5 * (self.lower[1] + self.upper[1]))
    }
}

/// Flat interface `Σ_m` between `D_{m-1}` and `D_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interface {
    /// Interface label `m` (so `Σ_m` separates slab `m-1` from slab `m`).
    pub index: usize,
    pub z: f64,
    pub anchor: Point,
    /// Outward normal of `∂D_{m-1}` at the anchor.
    pub normal: Point,
    pub disc_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabPartition {
    pub domain: BoxDomain,
    pub cuts: Vec<f64>,
    /// Interior interfaces `Σ_2, …, Σ_N`.
    pub interfaces: Vec<Interface>,
}

impl SlabPartition {
    pub fn n_slabs(&self) -> usize {
        self.cuts.len() + 1
    }

    /// Heights bounding slab `j ∈ 1..=N`.
    pub fn slab_z(&self, j: usize) -> (f64, f64) {
        assert!(j >= 1 && j <= self.n_slabs(), "slab index {j} out of range");
        let lo = if j == 1 { self.domain.lower[2] } else { self.cuts[j - 2] };
        let hi = if j == self.n_slabs() { self.domain.upper[2] } else { self.cuts[j - 1] };
        (lo, hi)
    }

    /// Corners of slab `j`.
    pub fn slab_box(&self, j: usize) -> (Point, Point) {
        let (lo, hi) = self.slab_z(j);
        let d = &self.domain;
        (pt(d.lower[0], d.lower[1], lo), pt(d.upper[0], d.upper[1], hi))
    }

    /// Slab containing height `z`; heights on a cut belong to the lower slab.
    pub fn slab_of(&self, z: f64) -> usize {
        for (i, &c) in self.cuts.iter().enumerate() {
            if z <= c {
                return i + 1;
            }
        }
        self.n_slabs()
    }

    /// Height of the plane closing `W_k` from above: `z_0 = bottom`, `z_k` the `k`-th cut, `z_N = top`.
    pub fn chain_height(&self, k: usize) -> f64 {
        if k == 0 {
            self.domain.lower[2]
        } else if k >= self.n_slabs() {
            self.domain.upper[2]
        } else {
            self.cuts[k - 1]
        }
    }
}

pub fn build_slab_partition(domain: BoxDomain, n: usize, cuts: &[f64]) -> Result<SlabPartition> {
    if n == 0 {
        return Err(Error::Geometry("need at least one slab".into()));
    }
    if cuts.len() + 1 != n {
        return Err(Error::Geometry(format!("{} cuts do not give {} slabs", cuts.len(), n)));
    }
    let (zl, zu) = (domain.lower[2], domain.upper[2]);
    let mut levels = vec![zl];
    for &c in cuts {
        if !(c > zl && c < zu) {
            return Err(Error::Geometry(format!("cut {c} outside the box")));
        }
        levels.push(c);
    }
    levels.push(zu);
    let min_gap = domain.r0 / 3.0;
    for w in levels.windows(2) {
        let gap = w[1] - w[0];
        if !(gap > 0.0) {
            return Err(Error::Geometry("cuts must be strictly increasing".into()));
        }
        if gap < min_gap * (1.0 - TOL) {
            return Err(Error::Geometry(format!("slab thickness {gap} below r0/3 = {min_gap}")));
        }
    }
    let radius = domain.r0 / 3.0;
    let half = 0.5 * domain.extent(0).min(domain.extent(1));
    if !cuts.is_empty() && half < radius * (1.0 - TOL) {
        return Err(Error::Geometry(format!("interface cannot contain a disc of radius {radius}")));
    }
    let (cx, cy) = domain.lateral_center();
    let interfaces = cuts
        .iter()
        .enumerate()
        .map(|(i, &z)| Interface {
            index: i + 2,
            z,
            anchor: pt(cx, cy, z),
            normal: pt(0.0, 0.0, 1.0),
            disc_radius: radius,
        })
        .collect();
    Ok(SlabPartition { domain, cuts: cuts.to_vec(), interfaces })
}

/// Axis-aligned rectangle in the plane `z = const`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: f64,
}

impl Patch {
    pub fn center(&self) -> Point {
        pt(0.5 * (self.x[0] + self.x[1]), 0.5 * (self.y[0] + self.y[1]), self.z)
    }

    pub fn min_half_width(&self) -> f64 {
        0.5 * (self.x[1] - self.x[0]).min(self.y[1] - self.y[0])
    }

    pub fn contains_lateral(&self, p: &Point) -> bool {
        p[0] >= self.x[0] - TOL && p[0] <= self.x[1] + TOL && p[1] >= self.y[0] - TOL && p[1] <= self.y[1] + TOL
    }

    pub fn bottom_face(d: &BoxDomain) -> Patch {
        Patch { x: [d.lower[0], d.upper[0]], y: [d.lower[1], d.upper[1]], z: d.lower[2] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedDomain {
    pub partition: SlabPartition,
    /// Accessible boundary portion `Σ` on the bottom face.
    pub sigma: Patch,
    pub depth: f64,
    /// Robin patch `Σ₀` on the far face of `D₀`.
    pub sigma0: Patch,
}

impl AugmentedDomain {
    pub fn domain(&self) -> &BoxDomain {
        &self.partition.domain
    }

    /// Corners of `D₀`.
    pub fn d0_box(&self) -> (Point, Point) {
        let z = self.sigma.z;
        (pt(self.sigma.x[0], self.sigma.y[0], z - self.depth), pt(self.sigma.x[1], self.sigma.y[1], z))
    }

    /// Corners of the bounding box of `Ω₀`.
    pub fn bounding_box(&self) -> (Point, Point) {
        let d = self.domain();
        (pt(d.lower[0], d.lower[1], d.lower[2] - self.depth), d.upper)
    }

    pub fn in_d0(&self, p: &Point) -> bool {
        let (lo, hi) = self.d0_box();
        (0..3).all(|a| p[a] >= lo[a] - TOL && p[a] <= hi[a] + TOL)
    }

    /// Region index of a point of `Ω₀`: `0` for `D₀`, `j` for slab `D_j`.
    /// Points on a shared face belong to the lower index.
    pub fn region_of(&self, p: &Point) -> Option<usize> {
        let d = self.domain();
        if p[2] <= d.lower[2] + TOL && self.in_d0(p) {
            return Some(0);
        }
        if d.contains(p) {
            return Some(self.partition.slab_of(p[2]));
        }
        None
    }

    /// Interface anchors `P_1` (centre of `Σ`), `P_2, …, P_N`.
    pub fn anchors(&self) -> Vec<Point> {
        let mut v = vec![self.sigma.center()];
        v.extend(self.partition.interfaces.iter().map(|i| i.anchor));
        v
    }
}

pub fn augment(partition: SlabPartition, sigma: Patch, depth: f64, sigma0: Option<Patch>) -> Result<AugmentedDomain> {
    if !(depth > 0.0) {
        return Err(Error::Geometry(format!("D0 depth must be positive, got {depth}")));
    }
    let d = &partition.domain;
    if (sigma.z - d.lower[2]).abs() > TOL {
        return Err(Error::Geometry("Σ must lie on the bottom face".into()));
    }
    if sigma.x[0] < d.lower[0] - TOL || sigma.x[1] > d.upper[0] + TOL || sigma.y[0] < d.lower[1] - TOL || sigma.y[1] > d.upper[1] + TOL
    {
        return Err(Error::Geometry("Σ leaves the bottom face".into()));
    }
    let r = d.r0 / 3.0;
    if sigma.min_half_width() < r * (1.0 - TOL) {
        return Err(Error::Geometry(format!("Σ too small: half-width {} < r0/3 = {r}", sigma.min_half_width())));
    }
    let far = sigma.z - depth;
    let sigma0 = sigma0.unwrap_or(Patch { z: far, ..sigma });
    if (sigma0.z - far).abs() > TOL || !sigma.contains_lateral(&pt(sigma0.x[0], sigma0.y[0], far)) || !sigma.contains_lateral(&pt(sigma0.x[1], sigma0.y[1], far))
    {
        return Err(Error::Geometry("Σ0 must lie on the far face of D0".into()));
    }
    if 2.0 * sigma0.min_half_width() < r * (1.0 - TOL) {
        return Err(Error::Geometry("Σ0 smaller than r0/3".into()));
    }
    Ok(AugmentedDomain { partition, sigma, depth, sigma0 })
}

/// `W_k` = interior of `D₀ ∪ … ∪ D_k`, `U_k = Ω \ closure(W_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSets {
    pub k: usize,
    /// Plane separating `W_k` (below) from `U_k` (above).
    pub split: f64,
    domain: AugmentedDomain,
}

impl ChainSets {
    pub fn in_w(&self, p: &Point) -> bool {
        p[2] < self.split - TOL && self.domain.region_of(p).is_some()
    }

    pub fn in_u(&self, p: &Point) -> bool {
        p[2] > self.split + TOL && self.domain.domain().contains(p)
    }

    /// Distance from `p` to `U_k` (infinite when `U_k` is empty).
    pub fn distance_to_u(&self, p: &Point) -> f64 {
        if self.k >= self.domain.partition.n_slabs() {
            return f64::INFINITY;
        }
        (self.split - p[2]).max(0.0)
    }

    /// Cell masks `(W_k, U_k)` for cell centres.
    pub fn masks(&self, centers: impl Iterator<Item = Point>) -> (Vec<bool>, Vec<bool>) {
        centers.map(|c| (self.in_w(&c), self.in_u(&c))).unzip()
    }
}

pub fn chain_sets(domain: &AugmentedDomain, k: usize) -> Result<ChainSets> {
    let n = domain.partition.n_slabs();
    if k > n {
        return Err(Error::Geometry(format!("chain index {k} exceeds N = {n}")));
    }
    Ok(ChainSets { k, split: domain.partition.chain_height(k), domain: domain.clone() })
}

/// Ball chain centres with the three-sphere radii `r1`, `r2 = 3 r1`, `r3 = 4 r1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallChain {
    pub k: usize,
    pub centers: Vec<Point>,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

impl BallChain {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// Half-width along `axis` of the slice of a ball with the half-space `{z ≤ plane}` or `{z ≥ plane}`.
fn cap_half_width(center: &Point, r: f64, plane: f64, below: bool) -> Option<f64> {
    let a = if below { center[2] - plane } else { plane - center[2] };
    if a >= r {
        None
    } else if a <= 0.0 {
        Some(r)
    } else {
        Some((r * r - a * a).sqrt())
    }
}

fn ball_in_w(domain: &AugmentedDomain, split: f64, c: &Point, r: f64) -> bool {
    let d = domain.domain();
    let z0 = d.lower[2];
    if c[2] + r > split + TOL {
        return false;
    }
    // Part above Σ's plane must stay inside the box laterally.
    if let Some(w) = cap_half_width(c, r, z0, false) {
        for a in 0..2 {
            if c[a] - w < d.lower[a] - TOL || c[a] + w > d.upper[a] + TOL {
                return false;
            }
        }
    }
    // Part below must stay inside D0.
    if let Some(w) = cap_half_width(c, r, z0, true) {
        let (lo, hi) = domain.d0_box();
        if c[2] - r < lo[2] - TOL {
            return false;
        }
        for a in 0..2 {
            if c[a] - w < lo[a] - TOL || c[a] + w > hi[a] + TOL {
                return false;
            }
        }
    }
    true
}

/// Centres along the polyline `start → P_1 → … → P_k → target` spaced `2 r1` apart.
pub fn ball_chain(domain: &AugmentedDomain, start: Point, target: Point, r1: f64) -> Result<BallChain> {
    if !(r1 > 0.0) {
        return Err(Error::Geometry("r1 must be positive".into()));
    }
    let k = domain
        .region_of(&target)
        .ok_or_else(|| Error::Geometry("target outside Ω0".into()))?;
    if domain.region_of(&start) != Some(0) {
        return Err(Error::Geometry("start must lie in D0".into()));
    }
    let mut half = vec![0.5 * domain.depth];
    for j in 1..=k {
        let (lo, hi) = domain.partition.slab_z(j);
        half.push(0.5 * (hi - lo));
    }
    if let Some(&h) = half.iter().find(|&&h| r1 > h) {
        return Err(Error::Geometry(format!("r1 = {r1} exceeds slab half-thickness {h}")));
    }
    let split = domain.partition.chain_height(k);
    for p in [&start, &target] {
        if !ball_in_w(domain, split, p, r1) {
            return Err(Error::Geometry("start/target closer than r1 to the boundary of W_k".into()));
        }
    }
    let mut verts = vec![start];
    verts.extend(domain.anchors().into_iter().take(k));
    verts.push(target);
    verts.dedup_by(|a, b| (*a - *b).norm() < TOL);

    let step = 2.0 * r1;
    let mut centers = vec![start];
    let mut seg = 0usize;
    let mut s_on_seg = 0.0f64;
    while (target - *centers.last().unwrap()).norm() > TOL {
        let c = *centers.last().unwrap();
        if (target - c).norm() <= step * (1.0 + 1e-9) {
            centers.push(target);
            break;
        }
        // Largest polyline parameter beyond the current one whose point is exactly `step` from `c`.
        let mut best: Option<(usize, f64)> = None;
        for i in seg..verts.len() - 1 {
            let (a, b) = (verts[i], verts[i + 1]);
            let dir = b - a;
            let len2 = dir.norm_sq();
            if len2 == 0.0 {
                continue;
            }
            let w = a - c;
            let (qa, qb, qc) = (len2, 2.0 * w.dot(&dir), w.norm_sq() - step * step);
            let disc = qb * qb - 4.0 * qa * qc;
            if disc < 0.0 {
                continue;
            }
            for s in [(-qb - disc.sqrt()) / (2.0 * qa), (-qb + disc.sqrt()) / (2.0 * qa)] {
                let within = s >= -1e-12 && s <= 1.0 + 1e-12;
                let ahead = i > seg || s > s_on_seg + 1e-12;
                if within && ahead && best.is_none_or(|(bi, bs)| (i, s) > (bi, bs)) {
                    best = Some((i, s.clamp(0.0, 1.0)));
                }
            }
        }
        let (i, s) = best.ok_or_else(|| Error::Geometry("no admissible polyline step".into()))?;
        seg = i;
        s_on_seg = s;
        centers.push(verts[i] + (verts[i + 1] - verts[i]).scale(s));
    }
    for c in &centers {
        if !ball_in_w(domain, split, c, r1) {
            return Err(Error::Geometry(format!("ball at {:?} leaves W_{k}: slab too thin for r1 = {r1}", c.0)));
        }
    }
    Ok(BallChain { k, centers, r1, r2: 3.0 * r1, r3: 4.0 * r1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_slab(r0: f64) -> SlabPartition {
        build_slab_partition(BoxDomain::unit(r0).unwrap(), 2, &[0.5]).unwrap()
    }

    #[test]
    fn single_slab_has_no_interfaces() {
        let p = build_slab_partition(BoxDomain::unit(0.9).unwrap(), 1, &[]).unwrap();
        assert!(p.interfaces.is_empty());
        assert_eq!(p.n_slabs(), 1);
    }

    #[test]
    fn two_slab_anchor_and_disc() {
        let p = two_slab(0.9);
        let s = &p.interfaces[0];
        assert_eq!(s.index, 2);
        assert!((s.disc_radius - 0.3).abs() < 1e-15);
        assert_eq!(s.anchor, pt(0.5, 0.5, 0.5));
        // Disc containment by sampling the disc boundary.
        for i in 0..64 {
            let t = i as f64 * std::f64::consts::TAU / 64.0;
            let q = pt(0.5 + 0.3 * t.cos(), 0.5 + 0.3 * t.sin(), 0.5);
            assert!(p.domain.contains(&q));
        }
    }

    #[test]
    fn thin_gap_rejected() {
        let e = build_slab_partition(BoxDomain::unit(0.9).unwrap(), 3, &[0.2, 0.25]);
        assert!(matches!(e, Err(Error::Geometry(_))));
    }

    #[test]
    fn tie_break_lower_slab() {
        let p = two_slab(0.9);
        assert_eq!(p.slab_of(0.5), 1);
        assert_eq!(p.slab_of(0.5000001), 2);
    }

    #[test]
    fn augment_height_and_errors() {
        let p = two_slab(0.9);
        let sig = Patch::bottom_face(&p.domain);
        let a = augment(p.clone(), sig, 0.4, None).unwrap();
        let (lo, hi) = a.bounding_box();
        assert!((hi[2] - lo[2] - 1.4).abs() < 1e-15);
        assert!((a.sigma0.z + 0.4).abs() < 1e-15);
        assert!(augment(p, sig, 0.0, None).is_err());
    }

    #[test]
    fn chain_sets_examples() {
        let p = two_slab(0.9);
        let a = augment(p, Patch::bottom_face(&BoxDomain::unit(0.9).unwrap()), 0.25, None).unwrap();
        let u0 = chain_sets(&a, 0).unwrap();
        assert!(u0.in_u(&pt(0.5, 0.5, 0.01)) && u0.in_w(&pt(0.5, 0.5, -0.1)));
        let c1 = chain_sets(&a, 1).unwrap();
        assert!(c1.in_w(&pt(0.5, 0.5, 0.25)) && c1.in_w(&pt(0.5, 0.5, -0.1)));
        assert!(c1.in_u(&pt(0.5, 0.5, 0.75)));
        let c2 = chain_sets(&a, 2).unwrap();
        assert!(!c2.in_u(&pt(0.5, 0.5, 0.99)));
        assert!(chain_sets(&a, 3).is_err());
    }

    fn tall_domain() -> AugmentedDomain {
        let b = BoxDomain::new(pt(0.0, 0.0, 0.0), pt(1.0, 1.0, 1.5), 0.9, 4.0).unwrap();
        let p = build_slab_partition(b.clone(), 3, &[0.5, 1.0]).unwrap();
        augment(p, Patch::bottom_face(&b), 0.4, None).unwrap()
    }

    #[test]
    fn ball_chain_unit_segment() {
        let a = tall_domain();
        let ch = ball_chain(&a, pt(0.5, 0.5, -0.2), pt(0.5, 0.5, 0.8), 0.1).unwrap();
        assert_eq!(ch.k, 2);
        assert_eq!(ch.len(), 6);
        for w in ch.centers.windows(2) {
            assert!(((w[1] - w[0]).norm() - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn ball_chain_degenerate_and_thick() {
        let a = tall_domain();
        let s = pt(0.5, 0.5, -0.2);
        assert_eq!(ball_chain(&a, s, s, 0.1).unwrap().len(), 1);
        assert!(ball_chain(&a, s, pt(0.5, 0.5, 0.8), 0.26).is_err());
    }
}
