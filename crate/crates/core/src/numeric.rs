/// `log(1 + exp(z))` without overflow.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `(softplus(z), sigmoid(z))` sharing one exponential.
#[inline]
pub(crate) fn softplus_sigmoid(z: f64) -> (f64, f64) {
    let t = (-z.abs()).exp();
    let sp = z.max(0.0) + t.ln_1p();
    let sg = if z >= 0.0 { 1.0 / (1.0 + t) } else { t / (1.0 + t) };
    (sp, sg)
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}
