use serde::Serialize;

use super::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SdcVerdict {
    Clean,
    Corrupt,
}

/// Runs `comm` `repeats` times, letting `inject` tamper with each result,
/// and reports corruption if any two results differ bitwise. Corruption
/// that is identical on every run cannot be seen this way.
pub fn sdc_check<C, I>(comm: C, repeats: usize, mut inject: I) -> Result<SdcVerdict>
where
    C: Fn() -> Vec<f64>,
    I: FnMut(usize, &mut [f64]),
{
    if repeats < 2 {
        return Err(SimError::TooFewRepeats(repeats));
    }
    let mut first: Option<Vec<u64>> = None;
    let mut verdict = SdcVerdict::Clean;
    for run in 0..repeats {
        let mut out = comm();
        inject(run, &mut out);
        let bits: Vec<u64> = out.iter().map(|v| v.to_bits()).collect();
        match &first {
            None => first = Some(bits),
            Some(f) if *f != bits => verdict = SdcVerdict::Corrupt,
            Some(_) => {}
        }
    }
    Ok(verdict)
}

/// Flips one bit of `values[index]`.
pub fn flip_bit(values: &mut [f64], index: usize, bit: u32) {
    if let Some(v) = values.get_mut(index) {
        *v = f64::from_bits(v.to_bits() ^ (1u64 << (bit % 64)));
    }
}

/// A deterministic stand-in for an all-reduce: element-wise sums of
/// per-replica vectors derived from `seed`.
pub fn synthetic_all_reduce(seed: u64, replicas: usize, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for r in 0..replicas {
        for (i, o) in out.iter_mut().enumerate() {
            let x = seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add((r * len + i) as u64)
                .wrapping_mul(1442695040888963407);
            *o += (x >> 11) as f64 / (1u64 << 53) as f64;
        }
    }
    out
}
