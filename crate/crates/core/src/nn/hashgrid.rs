//! Multi-resolution hash grid with trilinear interpolation.
//!
//! Level `l` has resolution `base · 2^l` (capped at 2^19) over the unit cube.
//! Vertex `(i, j, k)` of a level maps to a table slot by XOR-ing the
//! coordinates multiplied by `(1, 2654435761, 805459861)` in wrapping `u32`
//! arithmetic, reduced modulo the table size.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use crate::scalar::Scalar;

pub const HASH_PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];
pub const MAX_RESOLUTION: u64 = 1 << 19;
pub const INIT_RANGE: f64 = 1e-4;

#[inline(always)]
fn prefetch<T>(v: &T) {
    #[cfg(target_arch = "x86_64")]
    {
        use std::arch::x86_64::{_mm_prefetch, _MM_HINT_T0};
        // SAFETY: a prefetch is a hint on a valid reference and cannot fault.
        unsafe { _mm_prefetch::<_MM_HINT_T0>((v as *const T).cast()) };
    }
    #[cfg(not(target_arch = "x86_64"))]
    let _ = v;
}

#[derive(Clone, Debug, PartialEq)]
pub struct HashGrid<T> {
    pub levels: usize,
    pub features: usize,
    pub table_size: usize,
    pub resolutions: Vec<u64>,
    /// `levels × table_size × features`, row-major.
    pub table: Vec<T>,
}

/// Table slots and weights touched by a batch query, for the backward pass.
#[derive(Clone, Debug)]
pub struct HashCache<T> {
    slots: Vec<u32>,
    weights: Vec<T>,
}

impl<T: Scalar> HashGrid<T> {
    pub fn zeros(levels: usize, features: usize, table_log2: u32, base_resolution: u32) -> Self {
        let table_size = 1usize << table_log2;
        let resolutions = (0..levels)
            .map(|l| {
                let r = (base_resolution as f64 * 2f64.powi(l as i32)).floor();
                (r as u64).min(MAX_RESOLUTION)
            })
            .collect();
        HashGrid { levels, features, table_size, resolutions, table: vec![T::zero(); levels * table_size * features] }
    }

    pub fn new<R: Rng>(levels: usize, features: usize, table_log2: u32, base_resolution: u32, rng: &mut R) -> Self {
        let mut g = Self::zeros(levels, features, table_log2, base_resolution);
        for v in g.table.iter_mut() {
            *v = T::lit(rng.gen_range(-INIT_RANGE..INIT_RANGE));
        }
        g
    }

    pub fn zeros_like(&self) -> Self {
        HashGrid { table: vec![T::zero(); self.table.len()], resolutions: self.resolutions.clone(), ..*self }
    }

    pub fn output_dim(&self) -> usize {
        self.levels * self.features
    }

    #[inline]
    fn slot(&self, level: usize, c: [u64; 3]) -> u32 {
        let h = (c[0] as u32).wrapping_mul(HASH_PRIMES[0])
            ^ (c[1] as u32).wrapping_mul(HASH_PRIMES[1])
            ^ (c[2] as u32).wrapping_mul(HASH_PRIMES[2]);
        (level * self.table_size + (h as usize & (self.table_size - 1))) as u32
    }

    /// Visits the 8 corner slots and trilinear weights of `p` at `level`.
    #[inline]
    fn corners(&self, level: usize, p: &[T; 3], mut f: impl FnMut(u32, T)) {
        let res = self.resolutions[level];
        let rs = T::lit(res as f64);
        let mut base = [0u64; 3];
        let mut frac = [T::zero(); 3];
        for a in 0..3 {
            let x = p[a].max(T::zero()).min(T::one()) * rs;
            let fl = x.floor();
            base[a] = fl.to_u64().unwrap_or(0).min(res);
            frac[a] = x - fl;
        }
        for corner in 0..8u32 {
            let mut w = T::one();
            let mut c = base;
            for a in 0..3 {
                if corner >> a & 1 == 1 {
                    c[a] += 1;
                    w *= frac[a];
                } else {
                    w *= T::one() - frac[a];
                }
            }
            f(self.slot(level, c), w);
        }
    }

    /// Features of one point in `[0, 1]^3`; coordinates outside are clamped.
    pub fn query(&self, p: &[T; 3]) -> Vec<T> {
        let mut out = vec![T::zero(); self.output_dim()];
        for l in 0..self.levels {
            let dst = &mut out[l * self.features..(l + 1) * self.features];
            self.corners(l, p, |slot, w| {
                let src = &self.table[slot as usize * self.features..][..self.features];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * *s;
                }
            });
        }
        out
    }

    /// Batch query without recording the touched slots. Slots of a block of
    /// points are computed and prefetched before any table read.
    pub fn infer_batch(&self, points: &[[T; 3]]) -> Array2<T> {
        const BLOCK: usize = 16;
        let f = self.features;
        let per_point = self.levels * 8;
        let mut out = Array2::zeros((points.len(), self.output_dim()));
        let mut slots = vec![0u32; BLOCK * per_point];
        let mut weights = vec![T::zero(); BLOCK * per_point];
        for (pts, mut rows) in points.chunks(BLOCK).zip(out.axis_chunks_iter_mut(Axis(0), BLOCK)) {
            for (b, p) in pts.iter().enumerate() {
                for l in 0..self.levels {
                    let mut j = b * per_point + l * 8;
                    self.corners(l, p, |slot, w| {
                        slots[j] = slot;
                        weights[j] = w;
                        j += 1;
                    });
                }
            }
            for &slot in &slots[..pts.len() * per_point] {
                prefetch(&self.table[slot as usize * f]);
            }
            for (b, mut row) in rows.rows_mut().into_iter().enumerate() {
                let row = row.as_slice_mut().expect("standard layout");
                let range = b * per_point..(b + 1) * per_point;
                for (j, (&slot, &w)) in slots[range.clone()].iter().zip(&weights[range]).enumerate() {
                    let l = j / 8;
                    let src = &self.table[slot as usize * f..][..f];
                    for (d, s) in row[l * f..(l + 1) * f].iter_mut().zip(src) {
                        *d += w * *s;
                    }
                }
            }
        }
        out
    }

    pub fn query_batch(&self, points: &[[T; 3]]) -> (Array2<T>, HashCache<T>) {
        let n = points.len();
        let mut out = Array2::zeros((n, self.output_dim()));
        let mut cache = HashCache {
            slots: Vec::with_capacity(n * self.levels * 8),
            weights: Vec::with_capacity(n * self.levels * 8),
        };
        for (p, mut row) in points.iter().zip(out.rows_mut()) {
            let row = row.as_slice_mut().expect("standard layout");
            for l in 0..self.levels {
                let dst = &mut row[l * self.features..(l + 1) * self.features];
                self.corners(l, p, |slot, w| {
                    cache.slots.push(slot);
                    cache.weights.push(w);
                    let src = &self.table[slot as usize * self.features..][..self.features];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += w * *s;
                    }
                });
            }
        }
        (out, cache)
    }

    /// Scatters output gradients into `table_grad`, which has the layout of
    /// [`HashGrid::table`].
    pub fn backward(&self, cache: &HashCache<T>, grad: ArrayView2<T>, table_grad: &mut [T]) {
        assert_eq!(table_grad.len(), self.table.len());
        let per_point = self.levels * 8;
        for (r, g) in grad.rows().into_iter().enumerate() {
            let g = g.to_vec();
            for j in 0..per_point {
                let slot = cache.slots[r * per_point + j] as usize;
                let w = cache.weights[r * per_point + j];
                let level = j / 8;
                let dst = &mut table_grad[slot * self.features..][..self.features];
                for (d, gv) in dst.iter_mut().zip(&g[level * self.features..(level + 1) * self.features]) {
                    *d += w * *gv;
                }
            }
        }
    }
}
