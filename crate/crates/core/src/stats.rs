//! Small numerical kernels shared across modules.

/// Neumaier-compensated sum in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    // The correction term is meaningless once the sum overflows.
    if sum.is_finite() {
        sum + c
    } else {
        sum
    }
}

/// Mean, shifted by the first value so that constant input is reproduced
/// exactly.
pub fn mean(values: &[f64]) -> f64 {
    let Some(&x0) = values.first() else {
        return f64::NAN;
    };
    if !x0.is_finite() {
        return compensated_sum(values.iter().copied()) / values.len() as f64;
    }
    x0 + compensated_sum(values.iter().map(|v| v - x0)) / values.len() as f64
}

/// Two-pass unbiased sample variance (divisor `len - 1`). Returns 0 for fewer
/// than two values.
pub fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    // Deviations from the first value keep constant input at exactly zero.
    let x0 = values[0];
    let m = compensated_sum(values.iter().map(|v| v - x0)) / values.len() as f64;
    let ss = compensated_sum(values.iter().map(|v| (v - x0 - m) * (v - x0 - m)));
    ss / (values.len() - 1) as f64
}

/// `log(sum(exp(v)))` with a max shift. Empty input gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + compensated_sum(values.iter().map(|v| (v - max).exp())).ln()
}

/// `log(mean(exp(v)))` with a max shift.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    log_sum_exp(values) - (values.len() as f64).ln()
}

/// Running log-sum-exp accumulator: one pass, never overflows.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self { max: f64::NEG_INFINITY, scaled: 0.0 }
    }
}

impl LogSumExp {
    pub fn push(&mut self, v: f64) {
        if v <= self.max {
            self.scaled += (v - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    pub fn value(&self) -> f64 {
        self.max + self.scaled.ln()
    }
}

/// Mean and standard error (sd / sqrt(len)) of replicated values. The SE is
/// `None` with fewer than two values.
pub fn mean_se(values: &[f64]) -> (f64, Option<f64>) {
    let m = mean(values);
    if values.len() < 2 {
        return (m, None);
    }
    (m, Some((variance(values) / values.len() as f64).sqrt()))
}
