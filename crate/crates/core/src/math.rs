//! Small numeric helpers on top of `libm`.

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Two-pass population mean and standard deviation.
pub fn mean_std<'a, I>(values: I) -> (f64, f64)
where
    I: IntoIterator<Item = &'a f64>,
    I::IntoIter: Clone,
{
    let it = values.into_iter();
    let (n, sum) = it.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / n as f64;
    let var = it.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, libm::sqrt(var))
}
