//! Digitally shift-scrambled Sobol sequence (Gray-code construction,
//! Joe-Kuo direction numbers for the first 8 dimensions).

use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;

pub const MAX_DIM: usize = 8;

// (degree s, coefficient a, initial m values); dimension 0 is van der Corput
const JOE_KUO: [(u32, u32, &[u32]); 7] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
];

const BITS: usize = 32;

fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1u32 << (BITS - 1 - k);
        }
        return v;
    }
    let (s, a, m_init) = JOE_KUO[dim - 1];
    let s = s as usize;
    let mut m = [0u32; BITS];
    m[..s].copy_from_slice(m_init);
    for k in s..BITS {
        // m_k = 2a_1 m_{k-1} ^ ... ^ 2^{s-1} a_{s-1} m_{k-s+1} ^ 2^s m_{k-s} ^ m_{k-s}
        let mut mk = m[k - s] ^ (m[k - s] << s);
        for j in 1..s {
            let aj = (a >> (s - 1 - j)) & 1;
            if aj == 1 {
                mk ^= m[k - j] << j;
            }
        }
        m[k] = mk;
    }
    for k in 0..BITS {
        v[k] = m[k] << (BITS - 1 - k);
    }
    v
}

/// `n` points of a `ranges.len()`-dimensional scrambled Sobol sequence,
/// each dimension mapped affinely into its `(lo, hi)` range. Scrambling is
/// a per-dimension random digital (XOR) shift derived from `seed`.
pub fn sobol_scrambled(n: usize, ranges: &[(f64, f64)], seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let d = ranges.len();
    if d == 0 || d > MAX_DIM {
        return Err(Error::InvalidParameter(format!(
            "dimension {d} outside 1..={MAX_DIM}"
        )));
    }
    for (i, &(lo, hi)) in ranges.iter().enumerate() {
        if !(lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "range {i}: lo {lo} must be < hi {hi}"
            )));
        }
    }

    let v: Vec<[u32; BITS]> = (0..d).map(direction_numbers).collect();
    let mut r = rng::derive(seed, 0x536f626f6c);
    let shifts: Vec<u32> = (0..d).map(|_| r.gen()).collect();

    let scale = 1.0 / (1u64 << BITS) as f64;
    let mut out = Vec::with_capacity(n);
    let mut x = vec![0u32; d];
    for i in 0..n {
        if i > 0 {
            let c = (i as u32).trailing_zeros() as usize;
            for (xj, vj) in x.iter_mut().zip(&v) {
                *xj ^= vj[c];
            }
        }
        let point = (0..d)
            .map(|j| {
                let u = (x[j] ^ shifts[j]) as f64 * scale;
                let (lo, hi) = ranges[j];
                lo + u * (hi - lo)
            })
            .collect();
        out.push(point);
    }
    Ok(out)
}
