//! Plug-in histogram estimator of differential entropy.
//!
//! Bins are equal-width on the empirical `[min, max]` range of each
//! dimension. The estimate is `sum_bins -p log2 p + log2(bin volume)` with
//! `p` the empirical bin frequency; no bias correction is applied.

use std::collections::HashMap;

use rayon::prelude::*;

use super::McError;

/// Bins above this count switch the accumulator to a sparse map.
const DENSE_LIMIT: usize = 1 << 21;

/// Row-major cloud of `dim`-dimensional real points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    dim: usize,
    data: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            dim,
            data: Vec::with_capacity(dim * n),
        }
    }

    /// Wraps a flat row-major buffer.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0 && data.len() % dim == 0, "buffer length must be a multiple of dim");
        Self { dim, data }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Self {
        let mut cloud = Self::with_capacity(dim, rows.len());
        for r in rows {
            cloud.push(r);
        }
        cloud
    }

    pub fn push(&mut self, point: &[f64]) {
        assert_eq!(point.len(), self.dim);
        self.data.extend_from_slice(point);
    }

    pub fn extend(&mut self, other: &PointCloud) {
        assert_eq!(self.dim, other.dim);
        self.data.extend_from_slice(&other.data);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn points_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        self.data.chunks_exact_mut(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// Result of a histogram entropy estimate, echoing the bin layout.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramEntropy {
    /// Differential entropy in bits.
    pub bits: f64,
    pub bins_per_dim: usize,
    /// `(min, max)` per dimension.
    pub ranges: Vec<(f64, f64)>,
    pub occupied_bins: usize,
    pub samples: usize,
    /// Fewer than `10 * bins^d` samples were supplied.
    pub undersampled: bool,
}

impl HistogramEntropy {
    pub fn bin_widths(&self) -> Vec<f64> {
        self.ranges
            .iter()
            .map(|(lo, hi)| (hi - lo) / self.bins_per_dim as f64)
            .collect()
    }
}

/// Samples recommended for `bins` bins per dimension in `dim` dimensions.
pub fn recommended_samples(bins: usize, dim: usize) -> f64 {
    10.0 * (bins as f64).powi(dim as i32)
}

/// Estimates the differential entropy (bits) of `samples`.
pub fn estimate_entropy_histogram(
    samples: &PointCloud,
    bins_per_dim: usize,
) -> Result<HistogramEntropy, McError> {
    let dim = samples.dim();
    if !(1..=3).contains(&dim) {
        return Err(McError::UnsupportedDimension(dim));
    }
    if bins_per_dim < 2 {
        return Err(McError::InvalidSettings(format!(
            "bins_per_dim must be at least 2, got {bins_per_dim}"
        )));
    }
    let n = samples.len();
    if n == 0 {
        return Err(McError::EmptySampleSet);
    }

    let ranges = ranges(samples)?;
    let widths: Vec<f64> = ranges
        .iter()
        .map(|(lo, hi)| (hi - lo) / bins_per_dim as f64)
        .collect();
    let total_bins = bins_per_dim
        .checked_pow(dim as u32)
        .ok_or_else(|| McError::InvalidSettings("bin count overflows".into()))?;

    let index_of = |p: &[f64]| -> usize {
        let mut idx = 0usize;
        for d in 0..dim {
            let t = ((p[d] - ranges[d].0) / widths[d]) as usize;
            idx = idx * bins_per_dim + t.min(bins_per_dim - 1);
        }
        idx
    };

    // Chunked parallel counting; integer counts merge associatively, so the
    // result does not depend on the thread count.
    const CHUNK: usize = 1 << 16;
    let flat = samples.as_flat();
    let counts: Vec<u64> = if total_bins <= DENSE_LIMIT {
        let dense = flat
            .par_chunks(CHUNK * dim)
            .fold(
                || vec![0u32; total_bins],
                |mut acc, chunk| {
                    for p in chunk.chunks_exact(dim) {
                        acc[index_of(p)] += 1;
                    }
                    acc
                },
            )
            .reduce(
                || vec![0u32; total_bins],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            );
        dense.into_iter().filter(|&c| c > 0).map(u64::from).collect()
    } else {
        let sparse = flat
            .par_chunks(CHUNK * dim)
            .fold(HashMap::<usize, u64>::new, |mut acc, chunk| {
                for p in chunk.chunks_exact(dim) {
                    *acc.entry(index_of(p)).or_default() += 1;
                }
                acc
            })
            .reduce(HashMap::new, |mut a, b| {
                for (k, v) in b {
                    *a.entry(k).or_default() += v;
                }
                a
            });
        let mut v: Vec<(usize, u64)> = sparse.into_iter().collect();
        v.sort_unstable();
        v.into_iter().map(|(_, c)| c).collect()
    };

    let nf = n as f64;
    let plug_in: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / nf;
            -p * p.log2()
        })
        .sum();
    let log_volume: f64 = widths.iter().map(|w| w.log2()).sum();
    Ok(HistogramEntropy {
        bits: plug_in + log_volume,
        bins_per_dim,
        ranges,
        occupied_bins: counts.len(),
        samples: n,
        undersampled: nf < recommended_samples(bins_per_dim, dim),
    })
}

fn ranges(samples: &PointCloud) -> Result<Vec<(f64, f64)>, McError> {
    let dim = samples.dim();
    let mut r = vec![(f64::INFINITY, f64::NEG_INFINITY); dim];
    for p in samples.points() {
        for d in 0..dim {
            let v = p[d];
            if !v.is_finite() {
                return Err(McError::NonFiniteSample);
            }
            r[d].0 = r[d].0.min(v);
            r[d].1 = r[d].1.max(v);
        }
    }
    if let Some(d) = r.iter().position(|(lo, hi)| hi <= lo) {
        return Err(McError::DegenerateRange { dim: d });
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian_cloud(dim: usize, n: usize, seed: u64) -> PointCloud {
        let mut rng = rng_from_seed(seed);
        let mut c = PointCloud::with_capacity(dim, n);
        let mut p = vec![0.0; dim];
        for _ in 0..n {
            for v in p.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            c.push(&p);
        }
        c
    }

    fn gaussian_entropy_bits(dim: usize) -> f64 {
        0.5 * dim as f64 * (2.0 * std::f64::consts::PI * std::f64::consts::E).log2()
    }

    #[test]
    fn standard_normal_1d() {
        let c = gaussian_cloud(1, 1_000_000, 11);
        let h = estimate_entropy_histogram(&c, 256).unwrap();
        assert!((h.bits - gaussian_entropy_bits(1)).abs() <= 0.02, "{}", h.bits);
        assert!((gaussian_entropy_bits(1) - 2.047).abs() < 1e-3);
        assert!(!h.undersampled);
    }

    #[test]
    fn standard_normal_3d() {
        let c = gaussian_cloud(3, 1_000_000, 12);
        let h = estimate_entropy_histogram(&c, 32).unwrap();
        assert!((h.bits - gaussian_entropy_bits(3)).abs() <= 0.05, "{}", h.bits);
    }

    #[test]
    fn unit_uniform_has_zero_entropy() {
        let mut rng = rng_from_seed(5);
        let mut c = PointCloud::new(1);
        // Pin the range to the unit interval.
        c.push(&[0.0]);
        c.push(&[1.0 - 1e-12]);
        for _ in 0..500_000 {
            c.push(&[rng.random::<f64>()]);
        }
        let h = estimate_entropy_histogram(&c, 50).unwrap();
        assert!(h.bits.abs() < 0.01, "{}", h.bits);
    }

    #[test]
    fn errors() {
        assert_eq!(
            estimate_entropy_histogram(&PointCloud::new(2), 10),
            Err(McError::EmptySampleSet)
        );
        let c = PointCloud::from_flat(2, vec![1.0, 0.0, 1.0, 2.0, 1.0, 3.0]);
        assert_eq!(
            estimate_entropy_histogram(&c, 10),
            Err(McError::DegenerateRange { dim: 0 })
        );
        let c = PointCloud::from_flat(1, vec![0.0, 1.0]);
        assert!(matches!(estimate_entropy_histogram(&c, 1), Err(McError::InvalidSettings(_))));
        let c = PointCloud::from_flat(4, vec![0.0; 8]);
        assert_eq!(estimate_entropy_histogram(&c, 4), Err(McError::UnsupportedDimension(4)));
    }

    #[test]
    fn sparse_and_dense_paths_agree() {
        let c = gaussian_cloud(3, 200_000, 3);
        // 150^3 > DENSE_LIMIT forces the sparse map.
        let sparse = estimate_entropy_histogram(&c, 150).unwrap();
        assert!(150usize.pow(3) > DENSE_LIMIT);
        // Re-derive the same quantity through a brute-force count.
        let mut map = HashMap::<(usize, usize, usize), u64>::new();
        let w: Vec<f64> = sparse.bin_widths();
        for p in c.points() {
            let b = |d: usize| (((p[d] - sparse.ranges[d].0) / w[d]) as usize).min(149);
            *map.entry((b(0), b(1), b(2))).or_default() += 1;
        }
        let n = c.len() as f64;
        let brute: f64 = map.values().map(|&k| -(k as f64 / n) * (k as f64 / n).log2()).sum::<f64>()
            + w.iter().map(|x| x.log2()).sum::<f64>();
        assert!((sparse.bits - brute).abs() < 1e-9);
        assert_eq!(sparse.occupied_bins, map.len());
    }

    #[test]
    fn scaling_shifts_entropy_by_log_factor() {
        let c = gaussian_cloud(2, 100_000, 9);
        let h1 = estimate_entropy_histogram(&c, 40).unwrap().bits;
        let scaled = PointCloud::from_flat(2, c.as_flat().iter().map(|v| 4.0 * v).collect());
        let h2 = estimate_entropy_histogram(&scaled, 40).unwrap().bits;
        assert!((h2 - h1 - 4.0).abs() < 1e-9);
    }
}
