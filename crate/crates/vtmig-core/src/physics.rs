//! Closed-form link and latency math: great-circle and slant distances,
//! free-space channel gain, Shannon rates, and the per-slot latency
//! components (transfer, compute, migration).
//!
//! Everything here is a pure function of its arguments; no randomness, no
//! shared state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum PhysicsError {
    #[error("latitude {0} out of range [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} out of range [-180, 180]")]
    LongitudeOutOfRange(f64),
    #[error("coordinate is not finite")]
    NonFiniteCoordinate,
    #[error("altitude must be non-negative, got {0}")]
    NegativeAltitude(f64),
    #[error("distance must be strictly positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("noise power must be strictly positive, got {0}")]
    NonPositiveNoise(f64),
    #[error("rate must be strictly positive, got {0}")]
    NonPositiveRate(f64),
    #[error("CPU frequency must be strictly positive, got {0}")]
    NonPositiveCpu(f64),
    #[error("size must be non-negative, got {0}")]
    NegativeSize(f64),
}

/// Latitude/longitude point, degrees. Ranges are enforced at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPosition<T> {
    lat_deg: T,
    lon_deg: T,
}

impl<T: Scalar> GeoPosition<T> {
    pub fn new(lat_deg: T, lon_deg: T) -> Result<Self, PhysicsError> {
        if !lat_deg.is_finite() || !lon_deg.is_finite() {
            return Err(PhysicsError::NonFiniteCoordinate);
        }
        if lat_deg < T::of(-90.0) || lat_deg > T::of(90.0) {
            return Err(PhysicsError::LatitudeOutOfRange(lat_deg.to_f64_lossy()));
        }
        if lon_deg < T::of(-180.0) || lon_deg > T::of(180.0) {
            return Err(PhysicsError::LongitudeOutOfRange(lon_deg.to_f64_lossy()));
        }
        Ok(Self { lat_deg, lon_deg })
    }

    pub fn lat_deg(&self) -> T {
        self.lat_deg
    }

    pub fn lon_deg(&self) -> T {
        self.lon_deg
    }
}

/// Channel constants shared by every link computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams<T> {
    /// Channel increment coefficient A (dimensionless).
    pub increment_coefficient: T,
    /// Carrier frequency f in Hz.
    pub carrier_frequency_hz: T,
    /// Linear noise power sigma^2.
    pub noise_power: T,
    /// Speed of light c in m/s.
    pub light_speed_mps: T,
    /// Earth radius R in meters.
    pub earth_radius_m: T,
}

impl<T: Scalar> Default for ChannelParams<T> {
    fn default() -> Self {
        Self {
            increment_coefficient: T::one(),
            carrier_frequency_hz: T::of(5.9e9),
            noise_power: T::of(10.0),
            light_speed_mps: T::of(3.0e8),
            earth_radius_m: T::of(6_371_393.0),
        }
    }
}

impl<T: Scalar> ChannelParams<T> {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        for v in [
            self.increment_coefficient,
            self.carrier_frequency_hz,
            self.noise_power,
            self.light_speed_mps,
            self.earth_radius_m,
        ] {
            if !(v > T::zero()) {
                return Err(PhysicsError::NonPositiveNoise(v.to_f64_lossy()));
            }
        }
        Ok(())
    }
}

/// One directed radio link: bandwidth, transmit power, distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget<T> {
    pub bandwidth_hz: T,
    pub tx_power_w: T,
    pub distance_m: T,
}

/// Great-circle distance in meters via the haversine central angle.
///
/// Symmetric, non-negative, and zero exactly when both coordinates are equal.
pub fn surface_distance<T: Scalar>(
    a: &GeoPosition<T>,
    b: &GeoPosition<T>,
    params: &ChannelParams<T>,
) -> T {
    let half = T::of(0.5);
    let phi_a = a.lat_deg.to_radians();
    let phi_b = b.lat_deg.to_radians();
    let d_phi_half = (b.lat_deg - a.lat_deg).to_radians() * half;
    let d_lambda_half = (b.lon_deg - a.lon_deg).to_radians() * half;
    let hav = d_phi_half.sin() * d_phi_half.sin()
        + phi_a.cos() * phi_b.cos() * d_lambda_half.sin() * d_lambda_half.sin();
    // Clamp guards asin against round-off just above 1 for antipodal points.
    let eta = T::of(2.0) * hav.sqrt().min(T::one()).asin();
    params.earth_radius_m * eta
}

/// Vehicle-to-UAV distance: hypotenuse of ground distance and cruise altitude.
pub fn slant_distance<T: Scalar>(
    vehicle: &GeoPosition<T>,
    uav: &GeoPosition<T>,
    altitude_m: T,
    params: &ChannelParams<T>,
) -> Result<T, PhysicsError> {
    if altitude_m < T::zero() {
        return Err(PhysicsError::NegativeAltitude(altitude_m.to_f64_lossy()));
    }
    let ground = surface_distance(vehicle, uav, params);
    Ok((ground * ground + altitude_m * altitude_m).sqrt())
}

/// Deterministic free-space channel gain A * (c / (4 pi f D))^2.
pub fn channel_gain<T: Scalar>(distance_m: T, params: &ChannelParams<T>) -> Result<T, PhysicsError> {
    if !(distance_m > T::zero()) {
        return Err(PhysicsError::NonPositiveDistance(distance_m.to_f64_lossy()));
    }
    let four_pi = T::of(4.0) * T::of(std::f64::consts::PI);
    let ratio = params.light_speed_mps / (four_pi * params.carrier_frequency_hz * distance_m);
    Ok(params.increment_coefficient * ratio * ratio)
}

/// Shannon rate B * log2(1 + p * gain / sigma^2) in bits/second.
///
/// Rates are in bits, so the capacity logarithm is base 2.
pub fn shannon_rate<T: Scalar>(
    link: &LinkBudget<T>,
    gain: T,
    noise_power: T,
) -> Result<T, PhysicsError> {
    if !(noise_power > T::zero()) {
        return Err(PhysicsError::NonPositiveNoise(noise_power.to_f64_lossy()));
    }
    let snr = link.tx_power_w * gain / noise_power;
    Ok(link.bandwidth_hz * (T::one() + snr).log2())
}

/// Transmission latency size/rate in seconds. Satellite links pass the fixed
/// configured rate here instead of a Shannon rate.
pub fn transfer_latency<T: Scalar>(size_bits: T, rate_bps: T) -> Result<T, PhysicsError> {
    if size_bits < T::zero() {
        return Err(PhysicsError::NegativeSize(size_bits.to_f64_lossy()));
    }
    if !(rate_bps > T::zero()) {
        return Err(PhysicsError::NonPositiveRate(rate_bps.to_f64_lossy()));
    }
    Ok(size_bits / rate_bps)
}

/// Computation latency for a server holding `load_after_arrivals_bits`.
///
/// Under the cache limit the whole buffered load is charged at the serving
/// CPU; past the limit the overload fallback charges only the vehicle's own
/// task at the satellite CPU. The boundary (load == limit) belongs to the
/// non-overloaded branch.
pub fn compute_latency<T: Scalar>(
    load_after_arrivals_bits: T,
    cache_limit_bits: T,
    task_bits: T,
    cycles_per_bit: T,
    server_cpu_hz: T,
    satellite_cpu_hz: T,
) -> Result<T, PhysicsError> {
    if !(server_cpu_hz > T::zero()) {
        return Err(PhysicsError::NonPositiveCpu(server_cpu_hz.to_f64_lossy()));
    }
    if !(satellite_cpu_hz > T::zero()) {
        return Err(PhysicsError::NonPositiveCpu(satellite_cpu_hz.to_f64_lossy()));
    }
    if load_after_arrivals_bits < T::zero() || task_bits < T::zero() {
        return Err(PhysicsError::NegativeSize(
            load_after_arrivals_bits.min(task_bits).to_f64_lossy(),
        ));
    }
    if load_after_arrivals_bits <= cache_limit_bits {
        Ok(cycles_per_bit * load_after_arrivals_bits / server_cpu_hz)
    } else {
        Ok(cycles_per_bit * task_bits / satellite_cpu_hz)
    }
}

/// Migration latency between two servers. Zero when source == target; else
/// the migration payload over the inter-server Shannon rate. Links that
/// involve the satellite bypass this and use the fixed rate directly.
pub fn migration_latency<T: Scalar>(
    same_server: bool,
    migration_bits: T,
    link: &LinkBudget<T>,
    params: &ChannelParams<T>,
) -> Result<T, PhysicsError> {
    if same_server {
        return Ok(T::zero());
    }
    let gain = channel_gain(link.distance_m, params)?;
    let rate = shannon_rate(link, gain, params.noise_power)?;
    transfer_latency(migration_bits, rate)
}

/// The four per-slot latency components; the total is their plain sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyBreakdown<T> {
    pub uplink_s: T,
    pub downlink_s: T,
    pub compute_s: T,
    pub migration_s: T,
}

impl<T: Scalar> LatencyBreakdown<T> {
    pub fn total(&self) -> T {
        self.uplink_s + self.downlink_s + self.compute_s + self.migration_s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> ChannelParams<f64> {
        ChannelParams::default()
    }

    fn pos(lat: f64, lon: f64) -> GeoPosition<f64> {
        GeoPosition::new(lat, lon).unwrap()
    }

    #[test]
    fn position_ranges_enforced() {
        assert!(GeoPosition::new(95.0, 0.0).is_err());
        assert!(GeoPosition::new(0.0, 181.0).is_err());
        assert!(GeoPosition::new(f64::NAN, 0.0).is_err());
        assert!(GeoPosition::new(-90.0, 180.0).is_ok());
    }

    #[test]
    fn surface_distance_identity() {
        let a = pos(12.34, 56.78);
        assert_eq!(surface_distance(&a, &a, &params()), 0.0);
    }

    #[test]
    fn surface_distance_one_degree_equator() {
        // One degree of longitude on the equator subtends R * pi/180.
        let expected = 6_371_393.0 * std::f64::consts::PI / 180.0;
        let d = surface_distance(&pos(0.0, 0.0), &pos(0.0, 1.0), &params());
        assert_relative_eq!(d, expected, max_relative = 1e-9);
    }

    #[test]
    fn surface_distance_symmetric() {
        let a = pos(39.9, 116.4);
        let b = pos(40.1, 116.9);
        assert_eq!(
            surface_distance(&a, &b, &params()),
            surface_distance(&b, &a, &params())
        );
    }

    #[test]
    fn slant_distance_cases() {
        let a = pos(0.0, 0.0);
        // Coincident ground points at 50 m altitude.
        assert_eq!(slant_distance(&a, &a, 50.0, &params()).unwrap(), 50.0);
        // Zero altitude degenerates to the surface distance.
        let b = pos(0.0, 0.01);
        assert_eq!(
            slant_distance(&a, &b, 0.0, &params()).unwrap(),
            surface_distance(&a, &b, &params())
        );
        assert!(slant_distance(&a, &b, -1.0, &params()).is_err());
    }

    #[test]
    fn slant_distance_345_triangle() {
        // Pick a longitude offset giving a 400 m ground leg, altitude 300 m.
        let ground_target = 400.0;
        let dlon = ground_target / (6_371_393.0 * std::f64::consts::PI / 180.0);
        let a = pos(0.0, 0.0);
        let b = pos(0.0, dlon);
        let d = slant_distance(&a, &b, 300.0, &params()).unwrap();
        assert_relative_eq!(d, 500.0, max_relative = 1e-9);
    }

    #[test]
    fn channel_gain_inverse_square_and_unit() {
        let p = params();
        let g1 = channel_gain(250.0, &p).unwrap();
        let g2 = channel_gain(500.0, &p).unwrap();
        assert_relative_eq!(g2 * 4.0, g1, max_relative = 1e-12);

        // A = 1, f = c / (4 pi), D = 1 gives gain exactly 1.
        let unit = ChannelParams {
            increment_coefficient: 1.0,
            carrier_frequency_hz: 3.0e8 / (4.0 * std::f64::consts::PI),
            ..p
        };
        assert_relative_eq!(channel_gain(1.0, &unit).unwrap(), 1.0, max_relative = 1e-12);
        assert!(channel_gain(0.0, &p).is_err());
        assert!(channel_gain(-5.0, &p).is_err());
    }

    #[test]
    fn channel_gain_hand_evaluated() {
        // A = 1, f = 5.9 GHz, D = 100 m:
        //   (3e8 / (4 pi * 5.9e9 * 100))^2 = 1.63743...e-9
        let g = channel_gain(100.0, &params()).unwrap();
        let oracle = {
            let x = 3.0e8 / (4.0 * std::f64::consts::PI * 5.9e9 * 100.0);
            x * x
        };
        assert_relative_eq!(g, oracle, max_relative = 1e-12);
        assert_relative_eq!(g, 1.6374e-9, max_relative = 1e-4);
    }

    #[test]
    fn shannon_identities() {
        // SNR = 1 -> rate = B exactly.
        let link = LinkBudget {
            bandwidth_hz: 300e6,
            tx_power_w: 10.0,
            distance_m: 1.0,
        };
        let rate = shannon_rate(&link, 1.0, 10.0).unwrap();
        assert_eq!(rate, 300e6);

        // Zero power -> exactly zero rate.
        let silent = LinkBudget {
            tx_power_w: 0.0,
            ..link
        };
        assert_eq!(shannon_rate(&silent, 1.0, 10.0).unwrap(), 0.0);

        // SNR = 3, B = 1 -> 2 bits/s.
        let narrow = LinkBudget {
            bandwidth_hz: 1.0,
            tx_power_w: 3.0,
            distance_m: 1.0,
        };
        assert_eq!(shannon_rate(&narrow, 1.0, 1.0).unwrap(), 2.0);

        assert!(shannon_rate(&link, 1.0, 0.0).is_err());
    }

    #[test]
    fn transfer_latency_cases() {
        assert_eq!(transfer_latency(3.0e8, 3.0e8).unwrap(), 1.0);
        assert_eq!(transfer_latency(0.0, 5.0).unwrap(), 0.0);
        // 60 MB task over the default satellite rate 1e8 bits/s.
        assert_eq!(transfer_latency(4.8e8, 1.0e8).unwrap(), 4.8);
        assert!(transfer_latency(1.0, 0.0).is_err());
        assert!(transfer_latency(-1.0, 1.0).is_err());
    }

    #[test]
    fn compute_latency_branches() {
        // Non-overloaded: e = 1000, load = 8e6 bits, C_m = 32e9 Hz -> 0.25 s.
        let t = compute_latency(8e6, 2.4e9, 8e6, 1000.0, 32e9, 80e9).unwrap();
        assert_relative_eq!(t, 0.25, max_relative = 1e-12);
        // Zero load.
        assert_eq!(compute_latency(0.0, 2.4e9, 8e6, 1000.0, 32e9, 80e9).unwrap(), 0.0);
        // Overloaded: e = 1000, task = 8e6 bits, C_s = 80e9 Hz -> 0.1 s.
        let t = compute_latency(3e9, 2.4e9, 8e6, 1000.0, 32e9, 80e9).unwrap();
        assert_relative_eq!(t, 0.1, max_relative = 1e-12);
        // Boundary load == limit stays on the non-overloaded branch.
        let t = compute_latency(2.4e9, 2.4e9, 8e6, 1000.0, 32e9, 80e9).unwrap();
        assert_relative_eq!(t, 1000.0 * 2.4e9 / 32e9, max_relative = 1e-12);
        assert!(compute_latency(1.0, 1.0, 1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn migration_latency_cases() {
        let p = params();
        let link = LinkBudget {
            bandwidth_hz: 4.8e8,
            tx_power_w: 1000.0,
            distance_m: 500.0,
        };
        assert_eq!(migration_latency(true, 4.8e8, &link, &p).unwrap(), 0.0);

        // Unit ratio: rig the link so the Shannon rate equals the payload.
        let gain = channel_gain(500.0, &p).unwrap();
        let snr = 1000.0 * gain / p.noise_power;
        let rate = 4.8e8 * (1.0 + snr).log2();
        let t = migration_latency(false, rate, &link, &p).unwrap();
        assert_relative_eq!(t, 1.0, max_relative = 1e-12);

        // Monotone: larger inter-server distance never decreases latency.
        let near = migration_latency(false, 4.8e8, &link, &p).unwrap();
        let far_link = LinkBudget {
            distance_m: 1500.0,
            ..link
        };
        let far = migration_latency(false, 4.8e8, &far_link, &p).unwrap();
        assert!(far >= near);
    }

    #[test]
    fn latency_breakdown_total_is_plain_sum() {
        let b = LatencyBreakdown {
            uplink_s: 0.1,
            downlink_s: 0.2,
            compute_s: 0.3,
            migration_s: 0.4,
        };
        assert_eq!(b.total(), 0.1 + 0.2 + 0.3 + 0.4);
    }

    #[test]
    fn generic_over_f32() {
        let p: ChannelParams<f32> = ChannelParams::default();
        let a = GeoPosition::<f32>::new(0.0, 0.0).unwrap();
        let b = GeoPosition::<f32>::new(0.0, 1.0).unwrap();
        let d = surface_distance(&a, &b, &p);
        assert!((d - 111_202.0).abs() / 111_202.0 < 1e-3);
    }
}
