//! Composite closed Newton-Cotes integration.

use super::MetrologyError;

/// Integer weights and panel scale for the closed rules of order 1..=6.
/// A panel of order n spans n steps and integrates to
/// `scale * step * Σ weights[j] * f[j]`.
const RULES: [(f64, &[f64]); 6] = [
    (1.0 / 2.0, &[1.0, 1.0]),
    (1.0 / 3.0, &[1.0, 4.0, 1.0]),
    (3.0 / 8.0, &[1.0, 3.0, 3.0, 1.0]),
    (2.0 / 45.0, &[7.0, 32.0, 12.0, 32.0, 7.0]),
    (5.0 / 288.0, &[19.0, 75.0, 50.0, 50.0, 75.0, 19.0]),
    (1.0 / 140.0, &[41.0, 216.0, 27.0, 272.0, 27.0, 216.0, 41.0]),
];

pub const MAX_NEWTON_COTES_ORDER: usize = RULES.len();

/// Highest polynomial degree the order-`order` closed rule integrates exactly.
pub fn degree_of_exactness(order: usize) -> usize {
    if order.is_multiple_of(2) {
        order + 1
    } else {
        order
    }
}

/// Integrates equally spaced `values` with the composite closed rule of
/// `order`, applied panel by panel. `values.len() - 1` must be a multiple
/// of `order`.
pub fn integrate_newton_cotes(values: &[f64], step: f64, order: usize) -> Result<f64, MetrologyError> {
    if order == 0 || order > MAX_NEWTON_COTES_ORDER {
        return Err(MetrologyError::UnsupportedOrder(order));
    }
    if values.len() < 2 || !(values.len() - 1).is_multiple_of(order) {
        return Err(MetrologyError::BadPartition {
            points: values.len(),
            order,
        });
    }
    let (scale, weights) = RULES[order - 1];
    let sum: f64 = values
        .windows(order + 1)
        .step_by(order)
        .map(|panel| panel.iter().zip(weights).map(|(f, w)| f * w).sum::<f64>())
        .sum();
    Ok(scale * step * sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> (Vec<f64>, f64) {
        let h = (b - a) / intervals as f64;
        ((0..=intervals).map(|j| f(a + j as f64 * h)).collect(), h)
    }

    #[test]
    fn simpson_is_exact_on_x_squared() {
        let (v, h) = sample(|x| x * x, 0.0, 1.0, 2);
        assert!((integrate_newton_cotes(&v, h, 2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_on_x_squared() {
        let (v, h) = sample(|x| x * x, 0.0, 1.0, 1);
        let got = integrate_newton_cotes(&v, h, 1).unwrap();
        assert_eq!(got, 0.5);
        assert!((got - 1.0 / 3.0 - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn simpson_is_exact_on_x_cubed() {
        let (v, h) = sample(|x| x * x * x, 0.0, 1.0, 2);
        assert!((integrate_newton_cotes(&v, h, 2).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn panel_weights_sum_to_order() {
        for (n, (scale, w)) in RULES.iter().enumerate() {
            assert_eq!(w.len(), n + 2);
            assert!((scale * w.iter().sum::<f64>() - (n + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn partition_and_order_errors() {
        assert_eq!(
            integrate_newton_cotes(&[0.0; 4], 1.0, 2),
            Err(MetrologyError::BadPartition { points: 4, order: 2 })
        );
        assert_eq!(
            integrate_newton_cotes(&[0.0; 8], 1.0, 7),
            Err(MetrologyError::UnsupportedOrder(7))
        );
        assert_eq!(
            integrate_newton_cotes(&[0.0; 3], 1.0, 0),
            Err(MetrologyError::UnsupportedOrder(0))
        );
        assert!(integrate_newton_cotes(&[1.0], 1.0, 1).is_err());
    }

    #[test]
    fn error_shrinks_with_refinement() {
        let exact = 1.0 - (1.0f64).cos();
        for order in 1..=6 {
            let coarse = {
                let (v, h) = sample(f64::sin, 0.0, 1.0, order);
                (integrate_newton_cotes(&v, h, order).unwrap() - exact).abs()
            };
            let fine = {
                let (v, h) = sample(f64::sin, 0.0, 1.0, 4 * order);
                (integrate_newton_cotes(&v, h, order).unwrap() - exact).abs()
            };
            assert!(fine < coarse, "order {order}: {fine} !< {coarse}");
        }
    }
}
