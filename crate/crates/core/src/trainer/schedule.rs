use crate::error::{Error, Result};

/// Linear warmup to `base` over `warmup` steps, then linear decay to zero at
/// `total`.
pub fn lr_at(step: usize, base: f64, warmup: usize, total: usize) -> Result<f64> {
    if step > total {
        return Err(Error::OutOfRange {
            what: "schedule step",
            index: step,
            extent: total + 1,
        });
    }
    if warmup > total {
        return Err(Error::invalid(format!(
            "warmup {warmup} exceeds total {total}"
        )));
    }
    Ok(if step < warmup {
        base * step as f64 / warmup as f64
    } else if step == warmup {
        base
    } else {
        base * (total - step) as f64 / (total - warmup) as f64
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn schedule_points() {
        assert_eq!(lr_at(0, 3e-4, 200, 1000).unwrap(), 0.0);
        assert_eq!(lr_at(200, 3e-4, 200, 1000).unwrap(), 3e-4);
        assert_eq!(lr_at(1000, 3e-4, 200, 1000).unwrap(), 0.0);
        assert_eq!(lr_at(16_000, 1.3e-5, 16_000, 100_000).unwrap(), 1.3e-5);
        assert!((lr_at(600, 3e-4, 200, 1000).unwrap() - 1.5e-4).abs() < 1e-18);
        assert!(lr_at(1001, 3e-4, 200, 1000).is_err());
    }

    proptest! {
        #[test]
        fn piecewise_linear_and_continuous(
            base in 1e-6f64..1e-2,
            warmup in 1usize..500,
            extra in 1usize..2000,
        ) {
            let total = warmup + extra;
            let at = |s| lr_at(s, base, warmup, total).unwrap();
            prop_assert_eq!(at(warmup), base);
            let left = at(warmup - 1);
            let right = at(warmup + 1);
            prop_assert!((base - left - base / warmup as f64).abs() < 1e-15);
            prop_assert!((base - right - base / extra as f64).abs() < 1e-15);
            prop_assert!((0..=total).all(|s| (0.0..=base).contains(&at(s))));
        }
    }
}
