//! Coupled Brownian increment lattices for strong-convergence studies.
//!
//! A lattice holds the increments `Δβ_{j,i} = β_j(t_i) − β_j(t_{i−1})` of the
//! first `J` scalar Brownian motions driving the noise expansion, sampled on
//! the finest time grid of a refinement study. Coarser time grids and smaller
//! mode sets are *views* onto the same underlying buffer:
//!
//! * [`NoiseLattice::coarsen_time`] groups fine steps into blocks; a block's
//!   increment is always re-summed from the finest data, left to right, so
//!   composing coarsenings is bit-identical to coarsening once (floating-point
//!   addition is not associative — summing previously coarsened values would
//!   break that).
//! * [`NoiseLattice::truncate_modes`] restricts to a prefix of the mode rows.
//!   Each mode row is generated from its own deterministically derived stream,
//!   so row `j` of a `J = 64` lattice is bit-identical to row `j` of a
//!   `J = 256` lattice with the same seed and sample index.
//!
//! Both properties together make refinement sweeps *couplings*: every
//! resolution consumes literally the same driving noise.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SpdeError};

/// splitmix64 mixing step: decorrelates consecutive key material words.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the 32-byte stream key for one (seed, sample, mode row) triple.
fn row_key(seed: u64, sample_index: u64, mode_row: u64) -> [u8; 32] {
    let mut state = seed
        ^ sample_index.wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ mode_row.wrapping_mul(0x1656_67B1_9E37_79F9);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Brownian increments for `j_modes` independent scalar motions on a time
/// grid, stored at the finest resolution and exposed through coarsening /
/// truncating views.
#[derive(Clone)]
pub struct NoiseLattice {
    /// Finest increments, row-major: `fine[row * k_fine + i]`.
    fine: Arc<Vec<f64>>,
    /// Mode rows present in `fine`.
    j_generated: usize,
    /// Finest step count.
    k_fine: usize,
    horizon: f64,
    seed: u64,
    sample_index: u64,
    /// Active view: first `j_modes` rows, blocks of `factor` fine steps.
    j_modes: usize,
    factor: usize,
}

impl NoiseLattice {
    /// Sample a fresh lattice. Each mode row draws sequentially from its own
    /// stream keyed by `(seed, sample_index, row)`, so the result does not
    /// depend on scheduling and rows are reproducible independently of how
    /// many of them are generated.
    pub fn generate(
        seed: u64,
        sample_index: u64,
        j_modes: usize,
        k_steps: usize,
        horizon: f64,
    ) -> Result<NoiseLattice> {
        if j_modes == 0 || k_steps == 0 {
            return Err(SpdeError::Config(
                "noise lattice needs at least one mode and one step".into(),
            ));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(SpdeError::Config(format!(
                "time horizon must be positive and finite, got {horizon}"
            )));
        }
        let sqrt_tau = (horizon / k_steps as f64).sqrt();
        let mut fine = vec![0.0f64; j_modes * k_steps];
        for row in 0..j_modes {
            let mut rng = ChaCha8Rng::from_seed(row_key(seed, sample_index, row as u64));
            for v in &mut fine[row * k_steps..(row + 1) * k_steps] {
                let z: f64 = rng.sample(StandardNormal);
                *v = sqrt_tau * z;
            }
        }
        Ok(NoiseLattice {
            fine: Arc::new(fine),
            j_generated: j_modes,
            k_fine: k_steps,
            horizon,
            seed,
            sample_index,
            j_modes,
            factor: 1,
        })
    }

    /// Number of mode rows in the active view.
    pub fn modes(&self) -> usize {
        self.j_modes
    }

    /// Number of time steps in the active view.
    pub fn steps(&self) -> usize {
        self.k_fine / self.factor
    }

    /// Step size of the active view.
    pub fn tau(&self) -> f64 {
        self.horizon / self.steps() as f64
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sample_index(&self) -> u64 {
        self.sample_index
    }

    /// View with every `factor` consecutive steps merged into one block.
    pub fn coarsen_time(&self, factor: usize) -> Result<NoiseLattice> {
        if factor == 0 {
            return Err(SpdeError::Config("coarsening factor must be positive".into()));
        }
        let new_factor = self.factor * factor;
        if self.k_fine % new_factor != 0 {
            return Err(SpdeError::Config(format!(
                "cannot coarsen {} steps by a factor of {factor}: the combined block size \
                 {new_factor} does not divide the finest grid of {} steps",
                self.steps(),
                self.k_fine
            )));
        }
        let mut view = self.clone();
        view.factor = new_factor;
        Ok(view)
    }

    /// View restricted to the first `j_modes` mode rows.
    pub fn truncate_modes(&self, j_modes: usize) -> Result<NoiseLattice> {
        if j_modes == 0 || j_modes > self.j_modes {
            return Err(SpdeError::Config(format!(
                "cannot truncate a {}-mode lattice to {j_modes} modes",
                self.j_modes
            )));
        }
        let mut view = self.clone();
        view.j_modes = j_modes;
        Ok(view)
    }

    /// Increment of mode row `row` (0-based) over view step `step`.
    /// Block sums always run over the finest data, left to right.
    pub fn increment(&self, row: usize, step: usize) -> f64 {
        assert!(row < self.j_modes, "mode row out of range");
        assert!(step < self.steps(), "time step out of range");
        let base = row * self.k_fine + step * self.factor;
        let mut sum = 0.0;
        for i in 0..self.factor {
            sum += self.fine[base + i];
        }
        sum
    }

    /// Fill `out` with the increments of the first `out.len()` mode rows over
    /// view step `step`.
    pub fn fill_increments(&self, step: usize, out: &mut [f64]) {
        assert!(out.len() <= self.j_modes, "more rows requested than the view holds");
        assert!(step < self.steps(), "time step out of range");
        let f = self.factor;
        let offset = step * f;
        for (row, v) in out.iter_mut().enumerate() {
            let base = row * self.k_fine + offset;
            let mut sum = 0.0;
            for i in 0..f {
                sum += self.fine[base + i];
            }
            *v = sum;
        }
    }

    /// Materialize the active view row-major (`modes() × steps()`).
    pub fn to_matrix(&self) -> Vec<f64> {
        let steps = self.steps();
        let mut out = vec![0.0; self.j_modes * steps];
        for row in 0..self.j_modes {
            for step in 0..steps {
                out[row * steps + step] = self.increment(row, step);
            }
        }
        out
    }

    /// Serialize the active view: five little-endian 64-bit header fields
    /// (modes, steps, horizon bits, seed, sample index) followed by the
    /// row-major increments as little-endian f64.
    pub fn dump<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(&(self.j_modes as u64).to_le_bytes())?;
        writer.write_all(&(self.steps() as u64).to_le_bytes())?;
        writer.write_all(&self.horizon.to_bits().to_le_bytes())?;
        writer.write_all(&self.seed.to_le_bytes())?;
        writer.write_all(&self.sample_index.to_le_bytes())?;
        for v in self.to_matrix() {
            writer.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Deserialize a lattice written by [`NoiseLattice::dump`]. The loaded
    /// grid becomes the finest resolution of the new lattice.
    pub fn load<R: Read>(mut reader: R) -> Result<NoiseLattice> {
        let mut header = [0u8; 40];
        reader
            .read_exact(&mut header)
            .map_err(|_| SpdeError::Format("noise dump shorter than its 40-byte header".into()))?;
        let word = |i: usize| u64::from_le_bytes(header[8 * i..8 * i + 8].try_into().unwrap());
        let j_modes = word(0) as usize;
        let k_steps = word(1) as usize;
        let horizon = f64::from_bits(word(2));
        let seed = word(3);
        let sample_index = word(4);
        if j_modes == 0 || k_steps == 0 {
            return Err(SpdeError::Format(
                "noise dump declares an empty lattice".into(),
            ));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(SpdeError::Format(
                "noise dump declares a non-positive time horizon".into(),
            ));
        }
        let expected = j_modes
            .checked_mul(k_steps)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| SpdeError::Format("noise dump dimensions overflow".into()))?;
        let mut payload = Vec::new();
        reader.read_to_end(&mut payload)?;
        if payload.len() != expected {
            return Err(SpdeError::Format(format!(
                "noise dump payload is {} bytes, expected {expected} for a {j_modes}×{k_steps} lattice",
                payload.len()
            )));
        }
        let fine: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(NoiseLattice {
            fine: Arc::new(fine),
            j_generated: j_modes,
            k_fine: k_steps,
            horizon,
            seed,
            sample_index,
            j_modes,
            factor: 1,
        })
    }
}

impl std::fmt::Debug for NoiseLattice {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fmt.debug_struct("NoiseLattice")
            .field("modes", &self.j_modes)
            .field("steps", &self.steps())
            .field("generated_modes", &self.j_generated)
            .field("finest_steps", &self.k_fine)
            .field("horizon", &self.horizon)
            .field("seed", &self.seed)
            .field("sample_index", &self.sample_index)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regeneration_is_bit_identical() {
        let a = NoiseLattice::generate(9, 3, 6, 32, 1.0).unwrap();
        let b = NoiseLattice::generate(9, 3, 6, 32, 1.0).unwrap();
        assert_eq!(bits(&a.to_matrix()), bits(&b.to_matrix()));
        let c = NoiseLattice::generate(9, 4, 6, 32, 1.0).unwrap();
        assert_ne!(bits(&a.to_matrix()), bits(&c.to_matrix()));
    }

    #[test]
    fn mode_rows_do_not_depend_on_how_many_are_generated() {
        let small = NoiseLattice::generate(7, 0, 8, 64, 1.0).unwrap();
        let large = NoiseLattice::generate(7, 0, 24, 64, 1.0).unwrap();
        for row in 0..8 {
            for step in 0..64 {
                assert_eq!(
                    small.increment(row, step).to_bits(),
                    large.increment(row, step).to_bits()
                );
            }
        }
    }

    #[test]
    fn composed_coarsenings_telescope_bit_exactly() {
        let lat = NoiseLattice::generate(11, 0, 4, 360, 2.0).unwrap();
        let once = lat.coarsen_time(20).unwrap();
        let twice = lat.coarsen_time(4).unwrap().coarsen_time(5).unwrap();
        let swapped = lat.coarsen_time(5).unwrap().coarsen_time(4).unwrap();
        assert_eq!(once.steps(), 18);
        for row in 0..4 {
            for step in 0..once.steps() {
                let reference = once.increment(row, step).to_bits();
                assert_eq!(twice.increment(row, step).to_bits(), reference);
                assert_eq!(swapped.increment(row, step).to_bits(), reference);
            }
        }
    }

    #[test]
    fn coarse_blocks_sum_the_fine_increments() {
        let lat = NoiseLattice::generate(5, 1, 3, 12, 1.0).unwrap();
        let coarse = lat.coarsen_time(4).unwrap();
        for row in 0..3 {
            for step in 0..3 {
                let mut expected = 0.0;
                for i in 0..4 {
                    expected += lat.increment(row, 4 * step + i);
                }
                assert_eq!(coarse.increment(row, step).to_bits(), expected.to_bits());
            }
        }
        assert!((coarse.tau() - 4.0 * lat.tau()).abs() < 1e-15);
    }

    #[test]
    fn truncation_and_coarsening_commute() {
        let lat = NoiseLattice::generate(13, 5, 10, 48, 0.5).unwrap();
        let a = lat.truncate_modes(4).unwrap().coarsen_time(6).unwrap();
        let b = lat.coarsen_time(6).unwrap().truncate_modes(4).unwrap();
        assert_eq!(bits(&a.to_matrix()), bits(&b.to_matrix()));
        assert_eq!(a.modes(), 4);
        assert_eq!(a.steps(), 8);
    }

    #[test]
    fn invalid_views_are_rejected() {
        let lat = NoiseLattice::generate(1, 0, 3, 12, 1.0).unwrap();
        assert!(lat.coarsen_time(5).is_err(), "5 does not divide 12");
        assert!(lat.coarsen_time(0).is_err());
        assert!(lat.truncate_modes(0).is_err());
        assert!(lat.truncate_modes(4).is_err());
        assert!(NoiseLattice::generate(1, 0, 0, 12, 1.0).is_err());
        assert!(NoiseLattice::generate(1, 0, 3, 12, -1.0).is_err());
    }

    #[test]
    fn increment_variance_scales_with_the_step() {
        // Statistical sanity at a fixed seed: the per-step variance of the
        // increments should sit near τ for both the fine and a coarse view.
        let lat = NoiseLattice::generate(123, 0, 64, 512, 1.0).unwrap();
        let fine_var = sample_variance(&lat.to_matrix());
        assert!(
            (fine_var / lat.tau() - 1.0).abs() < 0.05,
            "fine variance {fine_var:.3e} vs τ {:.3e}",
            lat.tau()
        );
        let coarse = lat.coarsen_time(8).unwrap();
        let coarse_var = sample_variance(&coarse.to_matrix());
        assert!(
            (coarse_var / coarse.tau() - 1.0).abs() < 0.1,
            "coarse variance {coarse_var:.3e} vs τ {:.3e}",
            coarse.tau()
        );
    }

    #[test]
    fn dump_then_load_round_trips_the_view() {
        let lat = NoiseLattice::generate(21, 2, 6, 40, 1.5).unwrap();
        let view = lat.coarsen_time(5).unwrap().truncate_modes(3).unwrap();
        let mut buf = Vec::new();
        view.dump(&mut buf).unwrap();
        assert_eq!(buf.len(), 40 + 3 * 8 * 8);
        let loaded = NoiseLattice::load(buf.as_slice()).unwrap();
        assert_eq!(loaded.modes(), 3);
        assert_eq!(loaded.steps(), 8);
        assert_eq!(loaded.seed(), 21);
        assert_eq!(loaded.sample_index(), 2);
        assert_eq!(bits(&loaded.to_matrix()), bits(&view.to_matrix()));
        // A second dump of the loaded lattice reproduces the bytes.
        let mut again = Vec::new();
        loaded.dump(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn malformed_dumps_are_rejected() {
        let lat = NoiseLattice::generate(3, 0, 2, 4, 1.0).unwrap();
        let mut buf = Vec::new();
        lat.dump(&mut buf).unwrap();

        let truncated = &buf[..buf.len() - 1];
        assert!(matches!(
            NoiseLattice::load(truncated),
            Err(SpdeError::Format(_))
        ));

        let mut padded = buf.clone();
        padded.push(0);
        assert!(matches!(
            NoiseLattice::load(padded.as_slice()),
            Err(SpdeError::Format(_))
        ));

        assert!(matches!(
            NoiseLattice::load(&buf[..10]),
            Err(SpdeError::Format(_))
        ));
    }

    fn bits(values: &[f64]) -> Vec<u64> {
        values.iter().map(|v| v.to_bits()).collect()
    }

    fn sample_variance(values: &[f64]) -> f64 {
        let n = values.len() as f64;
        let mean: f64 = values.iter().sum::<f64>() / n;
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    }
}
