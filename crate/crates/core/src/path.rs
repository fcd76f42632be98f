//! Seeded Brownian increments on a fine grid with exact coarsening.
//!
//! Increments are drawn from a ChaCha8 stream keyed by `(seed, path_index)`
//! and mapped to Gaussians by the inverse normal CDF. Each record is then
//! snapped to a common dyadic quantum chosen so that every partial sum of
//! its increments is exactly representable: block sums, cumulative sums and
//! nested coarsenings agree bit-for-bit regardless of summation order.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Result};

/// Disjoint regions of the `path_index` space.
///
/// The top two bits of a key select the region, so streams used for
/// different purposes never share a ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeySpace {
    /// Driving noise of the scheme/reference pair.
    Primary,
    /// Driving noise `W` of an independent limit-law sample.
    LimitW,
    /// Second Brownian motion `B` of the limit law.
    LimitB,
    /// Auxiliary draws (reference self-consistency, synthetic samples).
    Auxiliary,
}

impl KeySpace {
    const REGION_BITS: u32 = 62;

    pub fn key(self, index: u64) -> u64 {
        assert!(index < 1 << Self::REGION_BITS, "path index {index} overflows key region");
        let region: u64 = match self {
            KeySpace::Primary => 0,
            KeySpace::LimitW => 1,
            KeySpace::LimitB => 2,
            KeySpace::Auxiliary => 3,
        };
        (region << Self::REGION_BITS) | index
    }
}

/// Deterministic standard-normal stream for one key.
pub struct NormalStream {
    rng: ChaCha8Rng,
    normal: Normal,
}

impl NormalStream {
    pub fn new(seed: u64, key: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(key);
        NormalStream { rng, normal: Normal::standard() }
    }

    /// Uniform on the open interval (0, 1).
    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        let u = self.next_uniform();
        self.normal.inverse_cdf(u)
    }
}

/// Standard normal draws for auxiliary uses (synthetic comparison samples).
pub fn normal_samples(seed: u64, key: u64, count: usize) -> Vec<f64> {
    let mut s = NormalStream::new(seed, key);
    (0..count).map(|_| s.next_normal()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianGrid {
    horizon: f64,
    increments: Vec<f64>,
    seed: u64,
    path_index: u64,
}

impl BrownianGrid {
    /// Draws `n_fine` increments of variance `horizon / n_fine`.
    pub fn generate(seed: u64, path_index: u64, horizon: f64, n_fine: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return invalid(format!("horizon must be positive, got {horizon}"));
        }
        if n_fine == 0 {
            return invalid("n_fine must be at least 1");
        }
        let scale = (horizon / n_fine as f64).sqrt();
        let mut stream = NormalStream::new(seed, path_index);
        let mut increments: Vec<f64> = (0..n_fine).map(|_| stream.next_normal() * scale).collect();
        quantize(&mut increments);
        Ok(BrownianGrid { horizon, increments, seed, path_index })
    }

    /// Grid built from explicit increments (used for synthetic paths).
    pub fn from_increments(horizon: f64, increments: Vec<f64>) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return invalid(format!("horizon must be positive, got {horizon}"));
        }
        if increments.is_empty() {
            return invalid("a Brownian grid needs at least one increment");
        }
        Ok(BrownianGrid { horizon, increments, seed: 0, path_index: 0 })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn fine_steps(&self) -> usize {
        self.increments.len()
    }

    pub fn fine_dt(&self) -> f64 {
        self.horizon / self.increments.len() as f64
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    /// `W` at every fine grid time, starting from `W_0 = 0`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.increments.len() + 1);
        let mut acc = 0.0;
        w.push(acc);
        for dw in &self.increments {
            acc += dw;
            w.push(acc);
        }
        w
    }

    /// Fine steps per coarse step, if `n_coarse` divides the fine grid.
    pub fn ratio(&self, n_coarse: usize) -> Result<usize> {
        if n_coarse == 0 || !self.increments.len().is_multiple_of(n_coarse) {
            return invalid(format!(
                "coarse step count {n_coarse} does not divide fine step count {}",
                self.increments.len()
            ));
        }
        Ok(self.increments.len() / n_coarse)
    }

    /// Block sums of the fine increments over `n_coarse` equal blocks.
    pub fn coarsen(&self, n_coarse: usize) -> Result<Vec<f64>> {
        let r = self.ratio(n_coarse)?;
        Ok(self.increments.chunks_exact(r).map(|c| c.iter().sum()).collect())
    }

    /// The same path viewed on a coarser fine grid.
    pub fn coarsened(&self, n_coarse: usize) -> Result<BrownianGrid> {
        Ok(BrownianGrid {
            horizon: self.horizon,
            increments: self.coarsen(n_coarse)?,
            seed: self.seed,
            path_index: self.path_index,
        })
    }

    /// Writes `t,W` for every fine grid point.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,W")?;
        let h = self.fine_dt();
        for (k, w) in self.cumulative().iter().enumerate() {
            writeln!(out, "{},{}", k as f64 * h, w)?;
        }
        Ok(())
    }
}

/// Rounds every increment to a multiple of a power of two `q` such that
/// `Σ|Δ| < 2^52 q`; any partial sum is then an exact integer multiple of `q`.
fn quantize(increments: &mut [f64]) {
    let total: f64 = increments.iter().map(|d| d.abs()).sum();
    if total == 0.0 || !total.is_finite() {
        return;
    }
    let exp = total.log2().ceil() as i32 + 1;
    let q = 2f64.powi(exp - 52);
    for d in increments.iter_mut() {
        *d = (*d / q).round() * q;
    }
}

/// Left grid time `⌊n t / T⌋ T / n`.
pub fn grid_projection(t: f64, n: usize, horizon: f64) -> Result<f64> {
    if n == 0 || !(horizon > 0.0) {
        return invalid("grid projection needs n >= 1 and T > 0");
    }
    if !(0.0..=horizon).contains(&t) {
        return invalid(format!("time {t} outside [0, {horizon}]"));
    }
    let k = (n as f64 * t / horizon).floor();
    Ok(k * horizon / n as f64)
}

/// `Δg^(n)_t = g(t) - g(n(t))`.
pub fn grid_increment<G: Fn(f64) -> f64>(g: G, t: f64, n: usize, horizon: f64) -> Result<f64> {
    let left = grid_projection(t, n, horizon)?;
    Ok(g(t) - g(left))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_per_key() {
        let a = BrownianGrid::generate(11, 5, 1.0, 1024).unwrap();
        let b = BrownianGrid::generate(11, 5, 1.0, 1024).unwrap();
        let c = BrownianGrid::generate(11, 6, 1.0, 1024).unwrap();
        assert_eq!(a.increments(), b.increments());
        assert_ne!(a.increments(), c.increments());
        assert_eq!(a.fine_steps(), 1024);
    }

    #[test]
    fn generation_rejects_bad_arguments() {
        assert!(BrownianGrid::generate(1, 1, 1.0, 0).is_err());
        assert!(BrownianGrid::generate(1, 1, 0.0, 4).is_err());
        assert!(BrownianGrid::generate(1, 1, -2.0, 4).is_err());
    }

    #[test]
    fn coarsen_examples() {
        let g = BrownianGrid::from_increments(1.0, vec![0.1, -0.2, 0.3, 0.4]).unwrap();
        assert_eq!(g.coarsen(2).unwrap(), vec![-0.1, 0.7]);
        assert_eq!(g.coarsen(4).unwrap(), g.increments().to_vec());
        let total = g.coarsen(1).unwrap();
        assert_eq!(total.len(), 1);
        assert_eq!(total[0], *g.cumulative().last().unwrap());
        assert!(g.coarsen(3).is_err());
        assert!(g.coarsen(0).is_err());
    }

    #[test]
    fn generated_sums_are_order_independent() {
        let g = BrownianGrid::generate(3, 9, 2.0, 768).unwrap();
        let w = g.cumulative();
        for n in [1, 2, 3, 4, 6, 8, 12, 256, 768] {
            let coarse = g.coarsen(n).unwrap();
            let r = 768 / n;
            for (j, c) in coarse.iter().enumerate() {
                assert_eq!(*c, w[(j + 1) * r] - w[j * r]);
            }
            let total: f64 = coarse.iter().sum();
            assert_eq!(total, w[768]);
        }
        let via = g.coarsened(12).unwrap().coarsen(3).unwrap();
        assert_eq!(via, g.coarsen(3).unwrap());
    }

    #[test]
    fn projection_examples() {
        assert_eq!(grid_projection(0.6, 4, 1.0).unwrap(), 0.5);
        assert_eq!(grid_projection(0.5, 4, 1.0).unwrap(), 0.5);
        assert_eq!(grid_projection(0.0, 7, 3.0).unwrap(), 0.0);
        assert!(grid_projection(1.5, 4, 1.0).is_err());
        assert!(grid_projection(-0.1, 4, 1.0).is_err());
        let d = grid_increment(|t| t * t, 0.6, 4, 1.0).unwrap();
        assert!((d - (0.36 - 0.25)).abs() < 1e-15);
    }

    #[test]
    fn key_spaces_are_disjoint() {
        let keys = [
            KeySpace::Primary.key(7),
            KeySpace::LimitW.key(7),
            KeySpace::LimitB.key(7),
            KeySpace::Auxiliary.key(7),
        ];
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(keys[i], keys[j]);
            }
        }
    }

    #[test]
    fn csv_dump_has_one_row_per_grid_point() {
        let g = BrownianGrid::from_increments(1.0, vec![0.5, -0.25]).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "t,W\n0,0\n0.5,0.5\n1,0.25\n");
    }
}
