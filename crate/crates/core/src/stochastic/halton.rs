use rand::seq::SliceRandom;

use super::{PointSet, RngPolicy, Scrambling, StreamPurpose};

/// The first `n` primes.
pub fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut candidate = 2u64;
    while primes.len() < n {
        if primes
            .iter()
            .take_while(|p| *p * *p <= candidate)
            .all(|p| !candidate.is_multiple_of(*p))
        {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Digit permutation for `base` that keeps 0 fixed, so finite expansions
/// stay finite and every point remains inside the open unit interval.
fn digit_permutation(base: u64, policy: &RngPolicy, dim_index: usize) -> Vec<u64> {
    let mut rest: Vec<u64> = (1..base).collect();
    let mut rng = policy.stream(StreamPurpose::Scramble, 0, dim_index);
    rest.shuffle(&mut rng);
    std::iter::once(0).chain(rest).collect()
}

fn radical_inverse(mut index: u64, base: u64, perm: Option<&[u64]>) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut value = 0.0;
    while index > 0 {
        let digit = index % base;
        let digit = perm.map_or(digit, |p| p[digit as usize]);
        value += digit as f64 * scale;
        index /= base;
        scale *= inv;
    }
    value
}

/// `count` points of the `dim`-dimensional Halton sequence in `(0,1)^dim`.
///
/// Point `k` (zero based) uses sequence index `halton_skip + k + 1`; index 0
/// would be the origin and is never emitted.
pub fn halton_points(count: usize, dim: usize, policy: &RngPolicy) -> PointSet {
    let bases = first_primes(dim);
    let perms: Vec<Option<Vec<u64>>> = bases
        .iter()
        .enumerate()
        .map(|(j, &b)| match policy.scrambling {
            Scrambling::None => None,
            Scrambling::PerDimensionPermutation => Some(digit_permutation(b, policy, j)),
        })
        .collect();
    let mut out = PointSet::zeros(count, dim);
    for k in 0..count {
        let index = policy.halton_skip + k as u64 + 1;
        for (j, row) in out.row_mut(k).iter_mut().enumerate() {
            *row = radical_inverse(index, bases[j], perms[j].as_deref());
        }
    }
    out
}
