//! Channel generation and unit conversions.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type CMat = DMatrix<Complex64>;

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watt_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// Linear power gain of the `32.6 + 36.7 log10(d)` dB path-loss model.
pub fn path_loss_gain(distance_m: f64) -> f64 {
    10f64.powf(-(32.6 + 36.7 * distance_m.log10()) / 10.0)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChannelModel {
    /// Unit-variance circularly symmetric Gaussian entries.
    Rayleigh,
    /// LoS plus Rayleigh scattering with the given K-factor, scaled by path
    /// loss at each user's distance. `distances` cycles if shorter than the
    /// number of users.
    Rician { factor: f64, distances: Vec<f64> },
}

/// One circularly symmetric complex Gaussian sample with unit variance.
pub fn cn01<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Uniform linear array response with half-wavelength spacing.
pub fn steering(n: usize, angle: f64) -> Vec<Complex64> {
    (0..n)
        .map(|i| Complex64::from_polar(1.0, std::f64::consts::PI * i as f64 * angle.sin()))
        .collect()
}

/// `rows x users` channel matrix; column `k` is user `k`'s channel.
pub fn draw_channel<R: Rng + ?Sized>(
    rows: usize,
    users: usize,
    model: &ChannelModel,
    rng: &mut R,
) -> CMat {
    match model {
        ChannelModel::Rayleigh => CMat::from_fn(rows, users, |_, _| cn01(rng)),
        ChannelModel::Rician { factor, distances } => {
            let los_w = (factor / (factor + 1.0)).sqrt();
            let nlos_w = (1.0 / (factor + 1.0)).sqrt();
            let mut h = CMat::zeros(rows, users);
            for k in 0..users {
                let angle = rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
                let los = steering(rows, angle);
                let beta = if distances.is_empty() {
                    1.0
                } else {
                    path_loss_gain(distances[k % distances.len()]).sqrt()
                };
                for n in 0..rows {
                    h[(n, k)] = (los[n] * los_w + cn01(rng) * nlos_w) * beta;
                }
            }
            h
        }
    }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_conversions() {
        assert!((dbm_to_watt(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watt(-80.0) - 1e-11).abs() < 1e-25);
        assert!((watt_to_dbm(1e-3)).abs() < 1e-12);
    }

    #[test]
    fn large_factor_is_line_of_sight() {
        let mut rng = seeded(4);
        let model = ChannelModel::Rician {
            factor: 1e9,
            distances: vec![],
        };
        let h = draw_channel(8, 1, &model, &mut rng);
        // Every LoS entry has unit modulus.
        for n in 0..8 {
            assert!((h[(n, 0)].norm() - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = draw_channel(4, 2, &ChannelModel::Rayleigh, &mut seeded(9));
        let b = draw_channel(4, 2, &ChannelModel::Rayleigh, &mut seeded(9));
        assert_eq!(a, b);
    }
}
