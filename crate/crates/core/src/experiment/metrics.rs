use crate::error::{Error, Result};
use crate::grid::{Subdomain, SubdomainMap};

/// Volume-weighted means of `u` over the background and the inclusions; `None` for an
/// empty subdomain.
pub fn compute_averages(u: &[f64], volumes: &[f64], subdomains: &SubdomainMap) -> (Option<f64>, Option<f64>) {
    let mut sums = [0.0; 2];
    let mut vols = [0.0; 2];
    for ((&x, &v), &label) in u.iter().zip(volumes).zip(subdomains.labels()) {
        let idx = match label {
            Subdomain::Background => 0,
            Subdomain::Inclusion => 1,
        };
        sums[idx] += v * x;
        vols[idx] += v;
    }
    let mean = |i: usize| (vols[i] > 0.0).then(|| sums[i] / vols[i]);
    (mean(0), mean(1))
}

/// `(∫(u_ref − u)² / ∫u_ref²)^{1/2}` with cellwise quadrature.
pub fn compute_relative_l2(u: &[f64], reference: &[f64], volumes: &[f64]) -> Result<f64> {
    if u.len() != reference.len() || volumes.len() != reference.len() {
        return Err(Error::DimensionMismatch { expected: reference.len(), found: u.len() });
    }
    let (mut num, mut den) = (0.0, 0.0);
    for ((&a, &r), &v) in u.iter().zip(reference).zip(volumes) {
        num += v * (r - a) * (r - a);
        den += v * r * r;
    }
    if !(den > 0.0) {
        return Err(Error::invalid("reference field has zero norm"));
    }
    Ok((num / den).sqrt())
}
