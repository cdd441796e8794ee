use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Disjoint train/test cover of `0..n`, both lists ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Seeded shuffle split with `|test| = round(test_fraction * n)`.
pub fn split(n: usize, test_fraction: f64, seed: u64) -> Result<SplitIndices> {
    if n < 2 {
        return Err(Error::Argument(format!("cannot split {n} rows")));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Argument(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::Argument(format!(
            "test fraction {test_fraction} of {n} rows leaves one side empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test, train) = order.split_at(n_test);
    let mut test = test.to_vec();
    let mut train = train.to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(SplitIndices { train, test, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn half_split_of_a_thousand() {
        let s = split(1000, 0.5, 1).unwrap();
        assert_eq!(s.train.len(), 500);
        assert_eq!(s.test.len(), 500);
    }

    #[test]
    fn ten_rows_thirty_percent_seed_seven() {
        let s = split(10, 0.3, 7).unwrap();
        assert_eq!(s.test.len(), 3);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(s.test.iter().all(|t| !s.train.contains(t)));
    }

    #[test]
    fn degenerate_fractions_are_rejected() {
        assert!(split(10, 0.01, 0).is_err());
        assert!(split(10, 0.99, 0).is_err());
        assert!(split(10, 0.0, 0).is_err());
        assert!(split(10, 1.0, 0).is_err());
        assert!(split(1, 0.5, 0).is_err());
    }

    proptest! {
        #[test]
        fn split_is_deterministic_disjoint_cover(n in 2usize..300, frac in 0.05f64..0.95, seed: u64) {
            let a = split(n, frac, seed);
            let b = split(n, frac, seed);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(&a, &b);
                    prop_assert_eq!(a.test.len(), (frac * n as f64).round() as usize);
                    let mut all: Vec<usize> = a.train.iter().chain(&a.test).copied().collect();
                    all.sort_unstable();
                    prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "nondeterministic outcome"),
            }
        }
    }
}
