//! Cluster budgets sum to the round budget and start from the exact ceilings.

use madbal_core::selection::{allocate_budgets, ceil_budgets};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracle;
use crate::Outcome;

/// Random non-negative cluster uncertainties with a positive sum. Some
/// instances use short decimals, whose shares land on integers.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, usize) {
    let k = rng.random_range(1..=20);
    let decimal = rng.random_bool(0.3);
    let mut u: Vec<f64> = (0..k)
        .map(|_| {
            if rng.random_bool(0.2) {
                0.0
            } else if decimal {
                rng.random_range(1..=9) as f64 / 10.0
            } else {
                rng.random_range(0.0..5.0)
            }
        })
        .collect();
    if u.iter().all(|&v| v == 0.0) {
        let i = rng.random_range(0..k);
        u[i] = 0.5;
    }
    let total = if decimal { 10 * rng.random_range(1..=20) } else { rng.random_range(1..=500) };
    (u, total)
}

pub fn run() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb0d6e7);
    let mut trimmed = 0;
    for case in 0..500 {
        let (u, total) = random_instance(&mut rng);
        let raw = ceil_budgets(&u, total).map_err(|e| e.to_string())?;
        let exact = oracle::ceilings(&u, total);
        ensure!(raw == exact, "case {case}: pre-trim {raw:?} != exact ceilings {exact:?} for u={u:?}, B={total}");
        let budgets = allocate_budgets(&u, total).map_err(|e| e.to_string())?;
        let sum: usize = budgets.iter().sum();
        ensure!(sum == total, "case {case}: budgets {budgets:?} sum to {sum}, not {total}");
        for k in 0..u.len() {
            ensure!(u[k] > 0.0 || budgets[k] == 0, "case {case}: zero-uncertainty cluster {k} got {}", budgets[k]);
            ensure!(
                budgets[k] <= raw[k] && budgets[k] + 1 >= raw[k],
                "case {case}: cluster {k} trimmed from {} to {}",
                raw[k],
                budgets[k]
            );
        }
        let want = oracle::allocate(&u, total);
        ensure!(budgets == want, "case {case}: trimmed {budgets:?}, exact rule gives {want:?} for u={u:?}, B={total}");
        if budgets != raw {
            trimmed += 1;
        }
    }
    Ok(format!("500 instances, {trimmed} needed trimming"))
}
