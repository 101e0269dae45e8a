use crate::KpiError;

/// Right-continuous empirical CDF: one `(value, fraction <= value)` pair
/// per distinct value, ascending.
pub fn compute_ecdf(values: &[f64]) -> Result<Vec<(f64, f64)>, KpiError> {
    if values.is_empty() {
        return Err(KpiError::Empty);
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(KpiError::NonFinite(bad));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => out.push((v, frac)),
        }
    }
    Ok(out)
}

/// Share of values in the closed interval `[lo, hi]`; 0 for no values.
pub fn fraction_in(values: &[f64], lo: f64, hi: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|v| (lo..=hi).contains(*v)).count() as f64 / values.len() as f64
}
