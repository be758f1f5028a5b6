use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Class(usize),
    RiskPool,
}

/// Best class if its ratio reaches `threshold`, else the risk pool. `ratios`
/// are `(class, ratio)` pairs; equal ratios resolve to the smaller class id.
pub fn decide<W: Num + PartialOrd + Clone>(ratios: &[(usize, W)], threshold: &W) -> Result<Verdict> {
    if !(*threshold > W::zero() && *threshold <= W::one()) {
        return Err(Error::arg("triage threshold must lie in (0, 1]"));
    }
    let mut best: Option<&(usize, W)> = None;
    for r in ratios {
        best = match best {
            Some(b) if b.1 > r.1 || (b.1 == r.1 && b.0 < r.0) => Some(b),
            _ => Some(r),
        };
    }
    Ok(match best {
        Some((class, ratio)) if ratio >= threshold => Verdict::Class(*class),
        _ => Verdict::RiskPool,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    type Q = Ratio<i64>;

    #[test]
    fn figure_two_falls_into_risk_pool() {
        let ratios = [(1, Q::new(8, 15)), (3, Q::new(7, 15))];
        assert_eq!(decide(&ratios, &Q::new(3, 5)).unwrap(), Verdict::RiskPool);
        assert_eq!(decide(&ratios, &Q::new(8, 15)).unwrap(), Verdict::Class(1));
    }

    #[test]
    fn clear_majority_is_classified() {
        assert_eq!(decide(&[(1, 0.7), (2, 0.3)], &0.6).unwrap(), Verdict::Class(1));
        assert_eq!(decide(&[(1, 0.7), (2, 0.3)], &1.0).unwrap(), Verdict::RiskPool);
        assert_eq!(decide(&[(5, 1.0)], &1.0).unwrap(), Verdict::Class(5));
    }

    #[test]
    fn ties_go_to_smaller_class() {
        assert_eq!(decide(&[(4, 0.5), (2, 0.5)], &0.5).unwrap(), Verdict::Class(2));
    }

    #[test]
    fn threshold_outside_unit_interval_is_rejected() {
        assert!(decide(&[(0, 1.0)], &0.0).is_err());
        assert!(decide(&[(0, 1.0)], &1.5).is_err());
    }

    proptest! {
        #[test]
        fn raising_threshold_never_leaves_risk_pool(
            raw in prop::collection::vec(1u32..100, 1..8),
            lo in 1u32..100,
            gap in 0u32..100,
        ) {
            let total: u32 = raw.iter().sum();
            let ratios: Vec<(usize, Q)> = raw.iter().enumerate().map(|(c, &w)| (c, Q::new(w as i64, total as i64))).collect();
            let t1 = Q::new(lo as i64, 100);
            let t2 = Q::new((lo + gap).min(100) as i64, 100);
            let a = decide(&ratios, &t1).unwrap();
            let b = decide(&ratios, &t2).unwrap();
            if a == Verdict::RiskPool {
                prop_assert_eq!(b, Verdict::RiskPool);
            } else if b != Verdict::RiskPool {
                prop_assert_eq!(a, b);
            }
        }
    }
}
