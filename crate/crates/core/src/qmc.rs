//! Sobol low-discrepancy sequences with optional seeded scrambling.
//!
//! Direction numbers are the Joe–Kuo `new-joe-kuo-6.21201` table (first 64
//! dimensions). Points are generated in Gray-code order with 32-bit
//! integers, so the first point of the unscrambled sequence is the origin.
//! Scrambling applies a random lower-triangular linear matrix to every
//! direction number followed by a random digital shift; both preserve the
//! (t, m, s)-net structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Number of dimensions with embedded direction numbers.
pub const MAX_SOBOL_DIM: usize = 64;

const BITS: usize = 32;
const SCALE: f64 = 1.0 / 4_294_967_296.0;

/// `(primitive polynomial, initial direction numbers)` per dimension.
/// The polynomial degree is `bit_length(poly) - 1`.
const DIRECTIONS: [(u32, &[u32]); MAX_SOBOL_DIM] = [
    (1, &[1]),
    (3, &[1]),
    (7, &[1, 3]),
    (11, &[1, 3, 1]),
    (13, &[1, 1, 1]),
    (19, &[1, 1, 3, 3]),
    (25, &[1, 3, 5, 13]),
    (37, &[1, 1, 5, 5, 17]),
    (41, &[1, 1, 5, 5, 5]),
    (47, &[1, 1, 7, 11, 19]),
    (55, &[1, 1, 5, 1, 1]),
    (59, &[1, 1, 1, 3, 11]),
    (61, &[1, 3, 5, 5, 31]),
    (67, &[1, 3, 3, 9, 7, 49]),
    (91, &[1, 1, 1, 15, 21, 21]),
    (97, &[1, 3, 1, 13, 27, 49]),
    (103, &[1, 1, 1, 15, 7, 5]),
    (109, &[1, 3, 1, 15, 13, 25]),
    (115, &[1, 1, 5, 5, 19, 61]),
    (131, &[1, 3, 7, 11, 23, 15, 103]),
    (137, &[1, 3, 7, 13, 13, 15, 69]),
    (143, &[1, 1, 3, 13, 7, 35, 63]),
    (145, &[1, 3, 5, 9, 1, 25, 53]),
    (157, &[1, 3, 1, 13, 9, 35, 107]),
    (167, &[1, 3, 1, 5, 27, 61, 31]),
    (171, &[1, 1, 5, 11, 19, 41, 61]),
    (185, &[1, 3, 5, 3, 3, 13, 69]),
    (191, &[1, 1, 7, 13, 1, 19, 1]),
    (193, &[1, 3, 7, 5, 13, 19, 59]),
    (203, &[1, 1, 3, 9, 25, 29, 41]),
    (211, &[1, 3, 5, 13, 23, 1, 55]),
    (213, &[1, 3, 7, 3, 13, 59, 17]),
    (229, &[1, 3, 1, 3, 5, 53, 69]),
    (239, &[1, 1, 5, 5, 23, 33, 13]),
    (241, &[1, 1, 7, 7, 1, 61, 123]),
    (247, &[1, 1, 7, 9, 13, 61, 49]),
    (253, &[1, 3, 3, 5, 3, 55, 33]),
    (285, &[1, 3, 1, 15, 31, 13, 49, 245]),
    (299, &[1, 3, 5, 15, 31, 59, 63, 97]),
    (301, &[1, 3, 1, 11, 11, 11, 77, 249]),
    (333, &[1, 3, 1, 11, 27, 43, 71, 9]),
    (351, &[1, 1, 7, 15, 21, 11, 81, 45]),
    (355, &[1, 3, 7, 3, 25, 31, 65, 79]),
    (357, &[1, 3, 1, 1, 19, 11, 3, 205]),
    (361, &[1, 1, 5, 9, 19, 21, 29, 157]),
    (369, &[1, 3, 7, 11, 1, 33, 89, 185]),
    (391, &[1, 3, 3, 3, 15, 9, 79, 71]),
    (397, &[1, 3, 7, 11, 15, 39, 119, 27]),
    (425, &[1, 1, 3, 1, 11, 31, 97, 225]),
    (451, &[1, 1, 1, 3, 23, 43, 57, 177]),
    (463, &[1, 3, 7, 7, 17, 17, 37, 71]),
    (487, &[1, 3, 1, 5, 27, 63, 123, 213]),
    (501, &[1, 1, 3, 5, 11, 43, 53, 133]),
    (529, &[1, 3, 5, 5, 29, 17, 47, 173, 479]),
    (539, &[1, 3, 3, 11, 3, 1, 109, 9, 69]),
    (545, &[1, 1, 1, 5, 17, 39, 23, 5, 343]),
    (557, &[1, 3, 1, 5, 25, 15, 31, 103, 499]),
    (563, &[1, 1, 1, 11, 11, 17, 63, 105, 183]),
    (601, &[1, 1, 5, 11, 9, 29, 97, 231, 363]),
    (607, &[1, 1, 5, 15, 19, 45, 41, 7, 383]),
    (617, &[1, 3, 7, 7, 31, 19, 83, 137, 221]),
    (623, &[1, 1, 1, 3, 23, 15, 111, 223, 83]),
    (631, &[1, 1, 5, 13, 31, 15, 55, 25, 161]),
    (637, &[1, 1, 3, 13, 25, 47, 39, 87, 257]),
];

fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (j, vj) in v.iter_mut().enumerate() {
            *vj = 1 << (BITS - 1 - j);
        }
        return v;
    }
    let (poly, init) = DIRECTIONS[dim];
    let m = (32 - poly.leading_zeros() - 1) as usize;
    let mut raw = [0u64; BITS];
    raw[..m].copy_from_slice(&init.iter().map(|&x| u64::from(x)).collect::<Vec<_>>()[..m]);
    for j in m..BITS {
        let mut next = raw[j - m] ^ (raw[j - m] << m);
        for k in 1..m {
            if (poly >> (m - k)) & 1 == 1 {
                next ^= raw[j - k] << k;
            }
        }
        raw[j] = next;
    }
    for j in 0..BITS {
        v[j] = (raw[j] << (BITS - 1 - j)) as u32;
    }
    v
}

/// Stateful Sobol generator.
#[derive(Debug, Clone)]
pub struct Sobol {
    dirs: Vec<[u32; BITS]>,
    shift: Vec<u32>,
    state: Vec<u32>,
    index: u64,
}

impl Sobol {
    /// Unscrambled generator when `scramble_seed` is `None`.
    pub fn new(d: usize, scramble_seed: Option<u64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("Sobol dimension must be >= 1".into()));
        }
        if d > MAX_SOBOL_DIM {
            return Err(Error::SobolDimension {
                requested: d,
                max: MAX_SOBOL_DIM,
            });
        }
        let mut dirs: Vec<[u32; BITS]> = (0..d).map(direction_numbers).collect();
        let mut shift = vec![0u32; d];
        if let Some(seed) = scramble_seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (v, s) in dirs.iter_mut().zip(shift.iter_mut()) {
                scramble_directions(v, &mut rng);
                *s = rng.random();
            }
        }
        Ok(Self {
            state: shift.clone(),
            dirs,
            shift,
            index: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dirs.len()
    }

    /// Next point in `[0, 1)^d`.
    pub fn next_point(&mut self) -> Vec<f64> {
        let out = self.state.iter().map(|&s| f64::from(s) * SCALE).collect();
        // Gray-code update: flip the direction of the lowest zero bit of the index.
        let c = (!self.index).trailing_zeros() as usize;
        if c < BITS {
            for (s, v) in self.state.iter_mut().zip(&self.dirs) {
                *s ^= v[c];
            }
        }
        self.index += 1;
        out
    }

    /// Restart from the first point, keeping the scramble.
    pub fn reset(&mut self) {
        self.state.clone_from(&self.shift);
        self.index = 0;
    }
}

/// Multiply the direction bits by a random unit lower-triangular matrix
/// (most significant bit first): output bit `b` mixes input bits `0..=b`.
fn scramble_directions<R: Rng>(v: &mut [u32; BITS], rng: &mut R) {
    let mut rows = [0u32; BITS];
    for (b, row) in rows.iter_mut().enumerate() {
        let msb_mask: u32 = if b == 0 { 0 } else { !0u32 << (BITS - b) };
        let r: u32 = rng.random();
        *row = (r & msb_mask) | (1 << (BITS - 1 - b));
    }
    for vj in v.iter_mut() {
        let mut out = 0u32;
        for (b, row) in rows.iter().enumerate() {
            if (row & *vj).count_ones() & 1 == 1 {
                out |= 1 << (BITS - 1 - b);
            }
        }
        *vj = out;
    }
}

/// First `n` points of the `d`-dimensional Sobol sequence.
pub fn sobol(d: usize, n: usize, scramble_seed: Option<u64>) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidParameter("Sobol count must be >= 1".into()));
    }
    let mut gen = Sobol::new(d, scramble_seed)?;
    Ok((0..n).map(|_| gen.next_point()).collect())
}

/// Map unit-cube points affinely onto the box `[lower, upper]`.
pub fn scale_to_box(points: &mut [Vec<f64>], lower: &[f64], upper: &[f64]) {
    for p in points {
        for ((v, lo), hi) in p.iter_mut().zip(lower).zip(upper) {
            *v = lo + (hi - lo) * *v;
        }
    }
}
