//! Scrambled Sobol points.
//!
//! The base sequence uses the Joe–Kuo D6 direction numbers in Gray-code order.
//! Scrambling is nested uniform (Owen) scrambling realized with the
//! Laine–Karras hash on bit-reversed integers, keyed per dimension.

use sobol::params::JoeKuoD6;
use sobol::Sobol;

const TWO_POW_32: f64 = 4_294_967_296.0;

/// 64-bit finalizer from SplitMix64.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn laine_karras(mut x: u32, seed: u32) -> u32 {
    x = x.wrapping_add(seed);
    x ^= x.wrapping_mul(0x6c50_b47c);
    x ^= x.wrapping_mul(0xb82f_1e52);
    x ^= x.wrapping_mul(0xc7af_e638);
    x ^= x.wrapping_mul(0x8d22_f6e6);
    x
}

/// Owen-scrambles the 32-bit fixed-point coordinate `x`.
pub fn nested_uniform_scramble(x: u32, seed: u32) -> u32 {
    laine_karras(x.reverse_bits(), seed).reverse_bits()
}

/// First `n` points of the unscrambled `dim`-dimensional sequence as 32-bit fixed point.
pub fn sobol_u32(dim: usize, n: usize) -> Vec<Vec<u32>> {
    Sobol::<u32>::new(dim, &JoeKuoD6::standard()).take(n).collect()
}

/// First `n` points of the unscrambled sequence in `[0, 1)^dim`.
pub fn sobol_points(dim: usize, n: usize) -> Vec<Vec<f64>> {
    sobol_u32(dim, n)
        .into_iter()
        .map(|p| p.into_iter().map(|v| v as f64 / TWO_POW_32).collect())
        .collect()
}

/// First `n` points of a scrambled sequence in `(0, 1)^dim`, keyed by `(seed, stream)`.
pub fn scrambled_sobol(dim: usize, n: usize, seed: u64, stream: u64) -> Vec<Vec<f64>> {
    let key = mix64(mix64(seed) ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let seeds: Vec<u32> = (0..dim as u64)
        .map(|d| (mix64(key.wrapping_add(d.wrapping_mul(0xd1b5_4a32_d192_ed03))) >> 32) as u32)
        .collect();
    sobol_u32(dim, n)
        .into_iter()
        .map(|p| {
            p.into_iter()
                .zip(&seeds)
                .map(|(v, &s)| (nested_uniform_scramble(v, s) as f64 + 0.5) / TWO_POW_32)
                .collect()
        })
        .collect()
}
