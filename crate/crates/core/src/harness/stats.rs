//! Summary statistics and the paired t-test.

use crate::error::{MimlError, Result};

/// Two-sided critical values of Student's t at alpha = 0.05, df = 1..=60.
const T_CRIT_05: [f64; 60] = [
    12.706205, 4.302653, 3.182446, 2.776445, 2.570582, 2.446912, 2.364624, 2.306004, 2.262157,
    2.228139, 2.200985, 2.178813, 2.160369, 2.144787, 2.131450, 2.119905, 2.109816, 2.100922,
    2.093024, 2.085963, 2.079614, 2.073873, 2.068658, 2.063899, 2.059539, 2.055529, 2.051831,
    2.048407, 2.045230, 2.042272, 2.039513, 2.036933, 2.034515, 2.032245, 2.030108, 2.028094,
    2.026192, 2.024394, 2.022691, 2.021075, 2.019541, 2.018082, 2.016692, 2.015368, 2.014103,
    2.012896, 2.011741, 2.010635, 2.009575, 2.008559, 2.007584, 2.006647, 2.005746, 2.004879,
    2.004045, 2.003241, 2.002465, 2.001717, 2.000995, 2.000298,
];

/// Two-sided critical values of Student's t at alpha = 0.01, df = 1..=60.
const T_CRIT_01: [f64; 60] = [
    63.656741, 9.924843, 5.840909, 4.604095, 4.032143, 3.707428, 3.499483, 3.355387, 3.249836,
    3.169273, 3.105807, 3.054540, 3.012276, 2.976843, 2.946713, 2.920782, 2.898231, 2.878440,
    2.860935, 2.845340, 2.831360, 2.818756, 2.807336, 2.796940, 2.787436, 2.778715, 2.770683,
    2.763262, 2.756386, 2.749996, 2.744042, 2.738481, 2.733277, 2.728394, 2.723806, 2.719485,
    2.715409, 2.711558, 2.707913, 2.704459, 2.701181, 2.698066, 2.695102, 2.692278, 2.689585,
    2.687013, 2.684556, 2.682204, 2.679952, 2.677793, 2.675722, 2.673734, 2.671823, 2.669985,
    2.668216, 2.666512, 2.664870, 2.663287, 2.661759, 2.660283,
];

/// (df = 120, df = infinity) pairs used beyond the table.
const T_TAIL_05: (f64, f64) = (1.979930, 1.959964);
const T_TAIL_01: (f64, f64) = (2.617421, 2.575829);

/// Two-sided critical value for `df` degrees of freedom.
///
/// Only alpha 0.05 and 0.01 are tabulated. Past 60 degrees of freedom the
/// value is interpolated linearly in `1/df` between 60, 120 and infinity.
pub fn t_critical(df: usize, alpha: f64) -> Result<f64> {
    let (table, tail) = if alpha == 0.05 {
        (&T_CRIT_05, T_TAIL_05)
    } else if alpha == 0.01 {
        (&T_CRIT_01, T_TAIL_01)
    } else {
        return Err(MimlError::InvalidArgument(format!(
            "no critical values tabulated for alpha {alpha}"
        )));
    };
    if df == 0 {
        return Err(MimlError::InvalidArgument(
            "t-test needs at least one degree of freedom".into(),
        ));
    }
    if df <= 60 {
        return Ok(table[df - 1]);
    }
    let x = 1.0 / df as f64;
    let (x60, x120) = (1.0 / 60.0, 1.0 / 120.0);
    Ok(if df <= 120 {
        tail.0 + (table[59] - tail.0) * (x - x120) / (x60 - x120)
    } else {
        tail.1 + (tail.0 - tail.1) * x / x120
    })
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    pub critical: f64,
    pub significant: bool,
    /// The differences had zero variance; significance then means a non-zero mean difference.
    pub degenerate: bool,
}

/// Paired two-sided t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(MimlError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(MimlError::InvalidArgument(
            "paired t-test needs at least two pairs".into(),
        ));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len();
    let df = n - 1;
    let critical = t_critical(df, alpha)?;
    let m = mean(&diffs);
    let s = std_dev(&diffs);
    if s == 0.0 {
        let t = if m == 0.0 {
            0.0
        } else {
            m.signum() * f64::INFINITY
        };
        return Ok(TTest {
            t,
            df,
            critical,
            significant: m != 0.0,
            degenerate: true,
        });
    }
    let t = m / (s / (n as f64).sqrt());
    Ok(TTest {
        t,
        df,
        critical,
        significant: t.abs() > critical,
        degenerate: false,
    })
}
