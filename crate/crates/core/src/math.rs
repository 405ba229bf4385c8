use crate::scalar::Real;

/// Logistic function, computed so that `sigmoid(-x) == 1 - sigmoid(x)`
/// holds exactly in floating point.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        // 1/(1+e^x) >= 0.5 here, so the subtraction is exact.
        1.0 - 1.0 / (1.0 + x.exp())
    }
}

/// `sigmoid(x) - 0.5`, odd in `x` bit for bit.
pub fn centered_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        sigmoid(x) - 0.5
    } else {
        -(sigmoid(-x) - 0.5)
    }
}

/// Mean of the scores `0.5 + c_i`, arranged so that negating every `c_i`
/// yields exactly `1 - result`.
pub fn mean_centered_score(centered: &[f64]) -> f64 {
    let m = compensated_sum(centered.iter().copied()) / centered.len() as f64;
    if m >= 0.0 {
        0.5 + m
    } else {
        // 0.5 + |m| >= 0.5, so this subtraction is exact.
        1.0 - (0.5 + -m)
    }
}

/// `log(sum(exp(v)))` without overflow; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<T: Real>(v: &[T]) -> T {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() || !max.is_finite() {
        return max;
    }
    let s: T = v.iter().map(|x| (*x - max).exp()).sum();
    max + s.ln()
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
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
    sum + c
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    compensated_sum(values.iter().copied()) / values.len() as f64
}
