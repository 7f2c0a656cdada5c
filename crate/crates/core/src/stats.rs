//! Small descriptive statistics shared across modules.

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sum of squared deviations from the mean.
fn centered_ss(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m).powi(2)).sum()
}

/// Population standard deviation.
pub(crate) fn std_pop(xs: &[f64]) -> f64 {
    (centered_ss(xs, mean(xs)) / xs.len() as f64).sqrt()
}

/// True when the spread of `xs` is at rounding level.
pub(crate) fn is_constant(xs: &[f64]) -> bool {
    let m = mean(xs);
    let scale = xs.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let floor = (8.0 * f64::EPSILON * scale).powi(2) * xs.len() as f64;
    centered_ss(xs, m) <= floor
}

/// Sample Pearson correlation, `None` when either series is constant or
/// the lengths differ or are below 2.
pub(crate) fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || is_constant(xs) || is_constant(ys) {
        return None;
    }
    let (mx, my) = (mean(xs), mean(ys));
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let r = sxy / (centered_ss(xs, mx) * centered_ss(ys, my)).sqrt();
    Some(r.clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]), Some(1.0));
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]), None);
        assert_eq!(pearson(&[1.0], &[1.0]), None);
    }

    #[test]
    fn constant_detection_is_scale_aware() {
        assert!(is_constant(&[0.1; 5]));
        assert!(is_constant(&[1e6, 1e6, 1e6]));
        assert!(!is_constant(&[1e-8, 2e-8]));
    }

    #[test]
    fn population_std() {
        assert_eq!(std_pop(&[1.0, 3.0]), 1.0);
    }
}
