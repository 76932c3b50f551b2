//! Counting the spatial configurations a flattened signal could have come from.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::One;

use crate::error::{Error, Result};

/// Number of ordered factorizations of `n` into `kappa` positive factors
/// (the Piltz divisor function), via `d_1(n) = 1`, `d_k(n) = sum_{d | n} d_{k-1}(d)`.
pub fn piltz(n: u64, kappa: u32) -> Result<BigUint> {
    if n == 0 || kappa == 0 {
        return Err(Error::InvalidArgument(format!(
            "piltz requires n >= 1 and kappa >= 1 (got n={n}, kappa={kappa})"
        )));
    }
    let divisors = divisors(n);
    let mut memo = HashMap::new();
    Ok(piltz_rec(n, kappa, &divisors, &mut memo))
}

fn piltz_rec(
    n: u64,
    kappa: u32,
    divisors_of_root: &[u64],
    memo: &mut HashMap<(u64, u32), BigUint>,
) -> BigUint {
    if kappa == 1 {
        return BigUint::one();
    }
    if let Some(v) = memo.get(&(n, kappa)) {
        return v.clone();
    }
    // Divisors of a divisor of the root are themselves divisors of the root.
    let mut total = BigUint::default();
    for &d in divisors_of_root.iter().filter(|&&d| n % d == 0) {
        total += piltz_rec(d, kappa - 1, divisors_of_root, memo);
    }
    memo.insert((n, kappa), total.clone());
    total
}

fn divisors(n: u64) -> Vec<u64> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1;
    while d * d <= n {
        if n % d == 0 {
            small.push(d);
            if d != n / d {
                large.push(n / d);
            }
        }
        d += 1;
    }
    small.extend(large.into_iter().rev());
    small
}

pub fn factorial(n: u64) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, k| acc * k)
}

/// `d_kappa(n) * n!`: the number of spatial configurations an `n`-vector may
/// have had as a `kappa`-dimensional signal.
pub fn count_spatial_configurations(n: u64, kappa: u32) -> Result<BigUint> {
    Ok(piltz(n, kappa)? * factorial(n))
}
