//! Farthest point sampling, exact k-nearest neighbors and control points.
//!
//! Both searches are exhaustive. Distances are accumulated in `f64` whatever
//! the input scalar, and every tie is broken towards the lower index so that
//! an encoder and a decoder on different machines pick the same points.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::frame::GaussianFrame;
use crate::scalar::Scalar;

#[inline]
fn dist2<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> f64 {
    let dx = a[0].to_f64_lossy() - b[0].to_f64_lossy();
    let dy = a[1].to_f64_lossy() - b[1].to_f64_lossy();
    let dz = a[2].to_f64_lossy() - b[2].to_f64_lossy();
    dx * dx + dy * dy + dz * dz
}

/// Greedy max-min selection of `count` points starting from `start_index`.
pub fn fps<T: Scalar>(positions: &[[T; 3]], count: usize, start_index: usize) -> Result<Vec<usize>> {
    let n = positions.len();
    if n == 0 {
        return Err(Error::InvalidArgument("fps on empty point set".into()));
    }
    if count == 0 || count > n {
        return Err(Error::InvalidArgument(format!("fps count {count} outside [1, {n}]")));
    }
    if start_index >= n {
        return Err(Error::IndexOutOfRange { index: start_index, len: n });
    }
    let mut selected = Vec::with_capacity(count);
    let mut min_d = vec![f64::INFINITY; n];
    let mut current = start_index;
    selected.push(current);
    min_d[current] = f64::NEG_INFINITY;
    while selected.len() < count {
        let c = positions[current];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, (p, md)) in positions.iter().zip(min_d.iter_mut()).enumerate() {
            if *md == f64::NEG_INFINITY {
                continue;
            }
            let d = dist2(p, &c);
            if d < *md {
                *md = d;
            }
            // strict comparison keeps the lowest index on ties
            if *md > best_d {
                best_d = *md;
                best = i;
            }
        }
        current = best;
        min_d[current] = f64::NEG_INFINITY;
        selected.push(current);
    }
    Ok(selected)
}

/// For each query, its nearest targets and their Euclidean distances.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborMap {
    pub k: usize,
    /// Row-major `queries × k`.
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

impl NeighborMap {
    pub fn len(&self) -> usize {
        self.indices.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn neighbors(&self, q: usize) -> &[usize] {
        &self.indices[q * self.k..(q + 1) * self.k]
    }

    pub fn distances(&self, q: usize) -> &[f64] {
        &self.distances[q * self.k..(q + 1) * self.k]
    }
}

/// Exact `k` nearest targets per query, ascending by distance then index.
/// Returns `min(k, targets)` neighbors per query.
pub fn knn<T: Scalar>(queries: &[[T; 3]], targets: &[[T; 3]], k: usize) -> Result<NeighborMap> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("knn against empty target set".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("knn with k = 0".into()));
    }
    let k = k.min(targets.len());
    let mut indices = Vec::with_capacity(queries.len() * k);
    let mut distances = Vec::with_capacity(queries.len() * k);
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(targets.len());
    let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    for q in queries {
        scratch.clear();
        scratch.extend(targets.iter().enumerate().map(|(i, t)| (dist2(q, t), i)));
        if k < scratch.len() {
            scratch.select_nth_unstable_by(k - 1, order);
            scratch.truncate(k);
        }
        scratch.sort_unstable_by(order);
        for &(d2, i) in &scratch {
            indices.push(i);
            distances.push(d2.sqrt());
        }
    }
    Ok(NeighborMap { k, indices, distances })
}

/// Control points picked from a frame together with their geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPointSet<T> {
    pub indices: Vec<usize>,
    pub positions: Vec<[T; 3]>,
    /// `(μ, q)` per control point.
    pub attributes: Vec<[T; 7]>,
}

impl<T: Scalar> ControlPointSet<T> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn gather_control_points<T: Scalar>(frame: &GaussianFrame<T>, indices: &[usize]) -> Result<ControlPointSet<T>> {
    let n = frame.len();
    let mut seen = HashSet::with_capacity(indices.len());
    for &i in indices {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        if !seen.insert(i) {
            return Err(Error::DuplicateIndex(i));
        }
    }
    Ok(ControlPointSet {
        indices: indices.to_vec(),
        positions: indices.iter().map(|&i| frame.positions[i]).collect(),
        attributes: indices.iter().map(|&i| frame.attributes(i)).collect(),
    })
}

/// Axis-aligned box used to normalize positions into `[0, 1]^3`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    /// Bounding box of `positions`, grown by `margin` of its extent on every
    /// side. Degenerate axes get a unit extent.
    pub fn around<T: Scalar>(positions: &[[T; 3]], margin: f64) -> Aabb {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for p in positions {
            for a in 0..3 {
                let v = p[a].to_f64_lossy();
                min[a] = min[a].min(v);
                max[a] = max[a].max(v);
            }
        }
        for a in 0..3 {
            if !min[a].is_finite() {
                min[a] = 0.0;
                max[a] = 0.0;
            }
            let mut ext = max[a] - min[a];
            if ext <= 0.0 {
                ext = 1.0;
                min[a] -= 0.5;
                max[a] += 0.5;
            }
            min[a] -= margin * ext;
            max[a] += margin * ext;
        }
        Aabb { min, max }
    }

    pub fn unit() -> Aabb {
        Aabb { min: [0.0; 3], max: [1.0; 3] }
    }

    pub fn extent(&self) -> [f64; 3] {
        [self.max[0] - self.min[0], self.max[1] - self.min[1], self.max[2] - self.min[2]]
    }

    /// Maps a point into `[0, 1]^3`, clamping points outside the box.
    pub fn normalize<T: Scalar>(&self, p: &[T; 3]) -> [T; 3] {
        let mut out = [T::zero(); 3];
        for a in 0..3 {
            let lo = T::lit(self.min[a]);
            let ext = T::lit(self.max[a] - self.min[a]);
            out[a] = ((p[a] - lo) / ext).max(T::zero()).min(T::one());
        }
        out
    }

    /// Same as [`Aabb::normalize`] without clamping.
    pub fn to_unit<T: Scalar>(&self, p: &[T; 3]) -> [T; 3] {
        let mut out = [T::zero(); 3];
        for a in 0..3 {
            out[a] = (p[a] - T::lit(self.min[a])) / T::lit(self.max[a] - self.min[a]);
        }
        out
    }
}
