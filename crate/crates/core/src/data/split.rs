use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};

/// Index lists into a store, earliest times first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Chronological split. Train and validation sizes are floored, the
/// remainder goes to test. Ties in time are broken by index.
pub fn split_by_time(store: &Dataset, fractions: (f64, f64, f64)) -> Result<Split> {
    check(store, fractions)?;
    Ok(split_indices(store, (0..store.len()).collect(), fractions))
}

fn check(store: &Dataset, fractions: (f64, f64, f64)) -> Result<()> {
    if store.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(f.is_finite() && *f >= 0.0)) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("split fractions {fractions:?} must be >= 0 and sum to 1")));
    }
    Ok(())
}

fn split_indices(store: &Dataset, mut order: Vec<usize>, fractions: (f64, f64, f64)) -> Split {
    let (a, b, _) = fractions;
    let ts = store.ts();
    order.sort_by(|&i, &j| ts[i].total_cmp(&ts[j]).then(i.cmp(&j)));
    let n = order.len() as f64;
    let n_train = ((a * n).floor() as usize).min(order.len());
    let n_val = ((b * n).floor() as usize).min(order.len() - n_train);
    let test = order.split_off(n_train + n_val);
    let validation = order.split_off(n_train);
    Split {
        train: order,
        validation,
        test,
    }
}

/// [`split_by_time`] applied within each calendar day (`floor(t / 86400)`),
/// so every day contributes to all three parts.
pub fn split_per_day(store: &Dataset, fractions: (f64, f64, f64)) -> Result<Split> {
    check(store, fractions)?;
    let mut days: std::collections::BTreeMap<i64, Vec<usize>> = Default::default();
    for (i, &t) in store.ts().iter().enumerate() {
        days.entry((t / 86_400.0).floor() as i64).or_default().push(i);
    }
    let mut out = Split::default();
    for members in days.into_values() {
        let s = split_indices(store, members, fractions);
        out.train.extend(s.train);
        out.validation.extend(s.validation);
        out.test.extend(s.test);
    }
    Ok(out)
}
