use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{invalid, Result};

/// Missingness indicator with the derived observed/unobserved index lists.
/// `m[i] == true` marks a missing response. Index lists are ascending, and
/// `y_u` vectors are always ordered like `unobserved_idx`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingPattern {
    m: Vec<bool>,
    observed: Vec<usize>,
    unobserved: Vec<usize>,
    slot: Vec<usize>,
}

impl MissingPattern {
    pub fn from_indicator(m: Vec<bool>) -> Self {
        let mut observed = Vec::new();
        let mut unobserved = Vec::new();
        let mut slot = Vec::with_capacity(m.len());
        for (i, &mi) in m.iter().enumerate() {
            if mi {
                slot.push(unobserved.len());
                unobserved.push(i);
            } else {
                slot.push(observed.len());
                observed.push(i);
            }
        }
        Self { m, observed, unobserved, slot }
    }

    pub fn from_unobserved(n: usize, unobserved: &[usize]) -> Result<Self> {
        let mut m = alloc::vec![false; n];
        for &i in unobserved {
            if i >= n || m[i] {
                return invalid("unobserved indices must be distinct and below n");
            }
            m[i] = true;
        }
        Ok(Self::from_indicator(m))
    }

    pub fn all_observed(n: usize) -> Self {
        Self::from_indicator(alloc::vec![false; n])
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn n_o(&self) -> usize {
        self.observed.len()
    }

    pub fn n_u(&self) -> usize {
        self.unobserved.len()
    }

    pub fn m(&self) -> &[bool] {
        &self.m
    }

    pub fn is_missing(&self, i: usize) -> bool {
        self.m[i]
    }

    pub fn observed_idx(&self) -> &[usize] {
        &self.observed
    }

    pub fn unobserved_idx(&self) -> &[usize] {
        &self.unobserved
    }

    /// Position of unit `i` inside its own index list.
    pub fn slot(&self, i: usize) -> usize {
        self.slot[i]
    }

    /// Full response from observed and unobserved parts.
    pub fn assemble(&self, y_o: &[f64], y_u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y_o.len(), self.n_o());
        debug_assert_eq!(y_u.len(), self.n_u());
        (0..self.n()).map(|i| if self.m[i] { y_u[self.slot[i]] } else { y_o[self.slot[i]] }).collect()
    }

    pub fn split(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.observed.iter().map(|&i| y[i]).collect(), self.unobserved.iter().map(|&i| y[i]).collect())
    }
}

/// `round(x)` with ties to even.
pub fn round_half_even(x: f64) -> f64 {
    x.round_ties_even()
}

/// Marks a uniformly random subset of `round(n·fraction)` units missing.
pub fn generate_mar<R: Rng + ?Sized>(n: usize, fraction: f64, rng: &mut R) -> Result<MissingPattern> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return invalid("missing fraction must lie in (0, 1)");
    }
    let n_u = round_half_even(n as f64 * fraction) as usize;
    if n_u == 0 || n_u >= n {
        return invalid("missing fraction leaves no missing or no observed unit");
    }
    let picked = rand::seq::index::sample(rng, n, n_u).into_vec();
    MissingPattern::from_unobserved(n, &picked)
}

/// Disjoint blocks covering the unobserved units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    blocks: Vec<Vec<usize>>,
    block_size: usize,
}

impl BlockPartition {
    /// Blocks of global unit indices.
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }
}

/// Default block size under MNAR: a quarter of `n_u` up to 1000 missing
/// units, a tenth above.
pub fn mnar_default_block_size(n_u: usize) -> usize {
    let frac = if n_u <= 1000 { 0.25 } else { 0.10 };
    ((n_u as f64 * frac).ceil() as usize).max(1)
}

/// Default Gibbs block size under MAR.
pub const MAR_GIBBS_BLOCK_SIZE: usize = 500;

/// Shuffles the unobserved units and chunks them into blocks of `block_size`.
pub fn make_blocks<R: Rng + ?Sized>(
    pattern: &MissingPattern,
    block_size: usize,
    rng: &mut R,
) -> Result<BlockPartition> {
    let n_u = pattern.n_u();
    if block_size == 0 || block_size > n_u.max(1) {
        return invalid("block size must lie in 1..=n_u");
    }
    let mut idx = pattern.unobserved_idx().to_vec();
    idx.shuffle(rng);
    let blocks = idx.chunks(block_size).map(|c| c.to_vec()).collect();
    Ok(BlockPartition { blocks, block_size })
}

/// One block holding every unobserved unit.
pub fn single_block(pattern: &MissingPattern) -> BlockPartition {
    BlockPartition { blocks: alloc::vec![pattern.unobserved_idx().to_vec()], block_size: pattern.n_u().max(1) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rounding() {
        assert_eq!(round_half_even(468.75), 469.0);
        assert_eq!(round_half_even(2.5), 2.0);
        assert_eq!(round_half_even(3.5), 4.0);
        assert_eq!(round_half_even(3.2), 3.0);
    }

    #[test]
    fn mar_counts_and_determinism() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let p = generate_mar(625, 0.75, &mut a).unwrap();
        assert_eq!(p.n_u(), 469);
        assert_eq!(p, generate_mar(625, 0.75, &mut b).unwrap());
        assert!(generate_mar(10, 0.01, &mut a).is_err());
        assert!(generate_mar(10, 1.0, &mut a).is_err());
    }

    #[test]
    fn block_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = generate_mar(625, 0.75, &mut rng).unwrap();
        let k = mnar_default_block_size(p.n_u());
        assert_eq!(k, 118);
        let b = make_blocks(&p, k, &mut rng).unwrap();
        assert_eq!(b.k(), 4);
        let mut all: Vec<usize> = b.blocks().concat();
        all.sort_unstable();
        assert_eq!(all, p.unobserved_idx());
        assert_eq!(mnar_default_block_size(7500), 750);
        let big = MissingPattern::from_unobserved(10_000, &(0..7500).collect::<Vec<_>>()).unwrap();
        assert_eq!(make_blocks(&big, MAR_GIBBS_BLOCK_SIZE, &mut rng).unwrap().k(), 15);
        assert_eq!(make_blocks(&p, p.n_u(), &mut rng).unwrap().k(), 1);
        assert!(make_blocks(&p, 0, &mut rng).is_err());
    }

    #[test]
    fn assemble_split_round_trip() {
        let p = MissingPattern::from_unobserved(5, &[3, 1]).unwrap();
        let y = [0.5, 1.5, 2.5, 3.5, 4.5];
        let (o, u) = p.split(&y);
        assert_eq!(u, alloc::vec![1.5, 3.5]);
        assert_eq!(p.assemble(&o, &u), y);
    }
}
