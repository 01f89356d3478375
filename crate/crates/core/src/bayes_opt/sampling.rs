use rand::seq::SliceRandom;
use rand::Rng;

/// `n` stratified points on the unit box: one point per stratum per axis.
pub(crate) fn latin_hypercube<R: Rng>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dim]; n];
    for d in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (i, s) in strata.into_iter().enumerate() {
            pts[i][d] = (s as f64 + rng.gen::<f64>()) / n as f64;
        }
    }
    pts
}

const PRIMES: [u32; 4] = [2, 3, 5, 7];

fn radical_inverse(mut i: u32, base: u32) -> f64 {
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

/// Halton points with a random toroidal shift.
pub(crate) fn halton(n: usize, dim: usize, shift: &[f64]) -> Vec<Vec<f64>> {
    (1..=n as u32)
        .map(|i| {
            (0..dim)
                .map(|d| (radical_inverse(i, PRIMES[d]) + shift[d]).fract())
                .collect()
        })
        .collect()
}
