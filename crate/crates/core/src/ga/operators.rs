//! The five mutation and two recombination operators over genomes.
//!
//! Every operator returns a fresh genome. Operators that would grow a genome
//! past the length cap return their (first) input unchanged.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::Exp;

use crate::query::Genome;

use super::GaError;

/// Draws phrase ids with probability proportional to `(rank + 1)^-gamma`.
/// Ids are frequency ranks, so `gamma > 0` leans toward common phrases.
#[derive(Debug, Clone)]
pub struct PhraseSampler {
    dist: Option<WeightedIndex<f64>>,
    len: usize,
    gamma: f64,
}

impl PhraseSampler {
    pub fn new(vocab_len: usize, gamma: f64) -> Self {
        let dist = (vocab_len > 0).then(|| {
            WeightedIndex::new((0..vocab_len).map(|r| ((r + 1) as f64).powf(-gamma))).expect("positive weights")
        });
        PhraseSampler { dist, len: vocab_len, gamma }
    }

    pub fn vocab_len(&self) -> usize {
        self.len
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// A 0-based phrase id.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u32, GaError> {
        let dist = self.dist.as_ref().ok_or(GaError::EmptyVocabulary)?;
        Ok(dist.sample(rng) as u32)
    }
}

/// Picks a cut position in `0..=len`. Positions at either end or next to a
/// zero separator weigh `boundary_weight`, all others weigh 1.
pub fn sample_cut<R: Rng + ?Sized>(g: &[i32], boundary_weight: f64, rng: &mut R) -> usize {
    let weight = |k: usize| {
        let at_boundary = k == 0 || k == g.len() || g[k - 1] == 0 || g[k] == 0;
        if at_boundary {
            boundary_weight
        } else {
            1.0
        }
    };
    let total: f64 = (0..=g.len()).map(weight).sum();
    let mut r = rng.gen::<f64>() * total;
    for k in 0..=g.len() {
        r -= weight(k);
        if r < 0.0 {
            return k;
        }
    }
    g.len()
}

/// Phrase+: inserts a positive literal at a uniform position.
pub fn phrase_add<R: Rng + ?Sized>(
    g: &Genome,
    sampler: &PhraseSampler,
    max_len: usize,
    rng: &mut R,
) -> Result<Genome, GaError> {
    let id = sampler.sample(rng)?;
    if g.len() >= max_len {
        return Ok(g.clone());
    }
    let pos = rng.gen_range(0..=g.len());
    let mut seq = g.0.clone();
    seq.insert(pos, id as i32 + 1);
    Ok(Genome(seq))
}

/// Clause+: inserts a separator at a uniform position, splitting a clause
/// or opening an empty one.
pub fn clause_add<R: Rng + ?Sized>(g: &Genome, max_len: usize, rng: &mut R) -> Genome {
    if g.len() >= max_len {
        return g.clone();
    }
    let pos = rng.gen_range(0..=g.len());
    let mut seq = g.0.clone();
    seq.insert(pos, 0);
    Genome(seq)
}

/// Swap: transposes two elements `d` apart, `d = 1 + floor(Exp(mean))`
/// clamped to the genome.
pub fn swap<R: Rng + ?Sized>(g: &Genome, distance_mean: f64, rng: &mut R) -> Result<Genome, GaError> {
    let n = g.len();
    if n < 2 {
        return Err(GaError::GenomeTooShort);
    }
    let exp = Exp::new(1.0 / distance_mean).map_err(|_| GaError::Config("swap distance mean must be positive".into()))?;
    let extra: f64 = exp.sample(rng);
    let d = (1 + extra.floor().min(n as f64) as usize).min(n - 1);
    let i = rng.gen_range(0..n - d);
    Ok(swap_at(g, i, i + d))
}

pub fn swap_at(g: &Genome, i: usize, j: usize) -> Genome {
    let mut seq = g.0.clone();
    seq.swap(i, j);
    Genome(seq)
}

/// Negate: flips the sign of one uniformly chosen non-separator element.
pub fn negate<R: Rng + ?Sized>(g: &Genome, rng: &mut R) -> Result<Genome, GaError> {
    let terms: Vec<usize> = (0..g.len()).filter(|&i| g.0[i] != 0).collect();
    if terms.is_empty() {
        return Err(GaError::NoTerms);
    }
    Ok(negate_at(g, terms[rng.gen_range(0..terms.len())]))
}

pub fn negate_at(g: &Genome, i: usize) -> Genome {
    let mut seq = g.0.clone();
    seq[i] = -seq[i];
    Genome(seq)
}

/// Simplify: drops repeated identical values inside each clause, keeping
/// the first. Repeats in different clauses, or with opposite signs, stay.
pub fn simplify(g: &Genome) -> Genome {
    let mut out = Vec::with_capacity(g.len());
    let mut clause_start = 0;
    for &v in &g.0 {
        if v == 0 {
            out.push(0);
            clause_start = out.len();
        } else if !out[clause_start..].contains(&v) {
            out.push(v);
        }
    }
    Genome(out)
}

/// Crossover: `a[..cut_a] ++ b[cut_b..]` with boundary-biased cuts.
pub fn crossover<R: Rng + ?Sized>(a: &Genome, b: &Genome, boundary_weight: f64, max_len: usize, rng: &mut R) -> Genome {
    let cut_a = sample_cut(&a.0, boundary_weight, rng);
    let cut_b = sample_cut(&b.0, boundary_weight, rng);
    let child = crossover_at(a, cut_a, b, cut_b);
    if child.len() > max_len {
        a.clone()
    } else {
        child
    }
}

pub fn crossover_at(a: &Genome, cut_a: usize, b: &Genome, cut_b: usize) -> Genome {
    let mut seq = a.0[..cut_a].to_vec();
    seq.extend_from_slice(&b.0[cut_b..]);
    Genome(seq)
}

/// Swatch insertion: two cuts in `donor` select a middle segment, which is
/// spliced into `host` at one cut.
pub fn swatch_insert<R: Rng + ?Sized>(
    donor: &Genome,
    host: &Genome,
    boundary_weight: f64,
    max_len: usize,
    rng: &mut R,
) -> Genome {
    let c1 = sample_cut(&donor.0, boundary_weight, rng);
    let c2 = sample_cut(&donor.0, boundary_weight, rng);
    let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
    let at = sample_cut(&host.0, boundary_weight, rng);
    let child = swatch_insert_at(donor, lo, hi, host, at);
    if child.len() > max_len {
        host.clone()
    } else {
        child
    }
}

pub fn swatch_insert_at(donor: &Genome, lo: usize, hi: usize, host: &Genome, at: usize) -> Genome {
    let mut seq = host.0[..at].to_vec();
    seq.extend_from_slice(&donor.0[lo..hi]);
    seq.extend_from_slice(&host.0[at..]);
    Genome(seq)
}
