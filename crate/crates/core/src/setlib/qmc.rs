//! Halton points with Cranley–Patterson rotations.

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

pub const MAX_DIM: usize = PRIMES.len();

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    out
}

/// Point `index` of the `dim`-dimensional Halton sequence shifted by `shift` modulo 1.
/// Index 0 is skipped so the origin never appears.
pub fn halton_shifted(index: u64, shift: &[f64], out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        let x = radical_inverse(index + 1, PRIMES[k]) + shift[k];
        *o = x - x.floor();
    }
}
