//! Normalized free-run model fit.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::sim::{free_run, Experiment};
use crate::vessel::VesselState;

/// `100 (1 - |y - y_hat| / |y - mean(y)|)`, `channel` only labels errors.
pub fn fit_value(y: &[f64], y_hat: &[f64], channel: usize) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::DimensionMismatch {
            axis: "fit series",
            expected: y.len(),
            found: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Empty("fit series"));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let den = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::ConstantChannel(channel));
    }
    let num = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(100.0 * (1.0 - num / den))
}

/// Simulates `theta` freely from the first validation sample under the
/// validation input and scores each velocity channel.
pub fn model_fit(validation: &Experiment, theta: &[f64], dt: f64) -> Result<[f64; 3]> {
    if validation.is_empty() {
        return Err(Error::Empty("validation data"));
    }
    let start = VesselState {
        nu: Vector3::from(validation.y[0]),
        eta: Vector3::new(0.0, 0.0, validation.y_psi[0]),
    };
    let (nu, _) = free_run(theta, start, &validation.u, dt)?;
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let y: Vec<f64> = validation.y.iter().map(|v| v[c]).collect();
        let y_hat: Vec<f64> = nu.iter().map(|v| v[c]).collect();
        *o = fit_value(&y, &y_hat, c + 1)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let y = [0.0, 1.0, 0.0, 1.0];
        assert_eq!(fit_value(&y, &y, 1).unwrap(), 100.0);
        assert_eq!(fit_value(&y, &[0.5; 4], 1).unwrap(), 0.0);
        let f = fit_value(&y, &[0.0; 4], 1).unwrap();
        assert!((f - 100.0 * (1.0 - 2f64.sqrt())).abs() < 1e-10);
        assert!((f - (-41.42)).abs() < 5e-3);
    }

    #[test]
    fn constant_channel_is_an_error() {
        assert_eq!(
            fit_value(&[2.0; 5], &[1.0; 5], 3).unwrap_err(),
            Error::ConstantChannel(3)
        );
    }
}
