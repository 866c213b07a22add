//! Standard-normal primitives shared by every model module.
//!
//! The CDF is computed through Cody's rational Chebyshev approximations
//! for erf/erfc (the SPECFUN `calerf` coefficients), which keep the
//! relative error of the underlying erf/erfc near machine epsilon. That
//! gives `std_normal_cdf` absolute accuracy well below 1e-14 across
//! |z| <= 8 and a reflection defect |Φ(z) + Φ(-z) - 1| within 1e-14.
//!
//! The quantile starts from Acklam's rational approximation (relative
//! error ~1.15e-9) and applies one Halley refinement against the CDF,
//! which drives the round-trip error |Φ(Φ⁻¹(p)) - p| below 1e-12.

use serde::Serialize;

use crate::error::{Error, Result};

/// 1/sqrt(2*pi), the standard normal density at zero.
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// sqrt(2*pi); shows up in the contraction bound sqrt(2*pi)/(1-alpha).
pub const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// A value constrained to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(Error::Domain(format!(
                "probability must lie in [0, 1], got {value}"
            )));
        }
        Ok(Probability(value))
    }

    /// Constructor for values already guaranteed to lie in [0, 1].
    pub(crate) fn new_unchecked(value: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&value), "probability out of range: {value}");
        Probability(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// Standard normal CDF Φ(z).
pub fn std_normal_cdf(z: f64) -> Result<Probability> {
    if !z.is_finite() {
        return Err(Error::Domain(format!("cdf argument must be finite, got {z}")));
    }
    Ok(Probability::new_unchecked(phi(z)))
}

/// Standard normal density φ(z).
pub fn std_normal_pdf(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::Domain(format!("pdf argument must be finite, got {z}")));
    }
    Ok(pdf(z))
}

/// Standard normal quantile Φ⁻¹(p).
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !p.is_finite() || p <= 0.0 || p >= 1.0 {
        return Err(Error::Domain(format!(
            "quantile argument must lie strictly inside (0, 1), got {p}"
        )));
    }
    Ok(quantile(p))
}

/// Unchecked Φ(z); result clamped to [0, 1].
pub(crate) fn phi(z: f64) -> f64 {
    let v = 0.5 * erfc(-z * FRAC_1_SQRT_2);
    v.clamp(0.0, 1.0)
}

/// Unchecked φ(z).
pub(crate) fn pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Unchecked Φ⁻¹(p) for p strictly inside (0, 1).
pub(crate) fn quantile(p: f64) -> f64 {
    // Work on the lower tail so the Halley residual Φ(x) - p is formed
    // from a CDF value of the same magnitude as p (no cancellation).
    if p > 0.5 {
        -quantile_lower(1.0 - p)
    } else {
        quantile_lower(p)
    }
}

fn quantile_lower(p: f64) -> f64 {
    let x = acklam_initial(p);
    // One Halley step: with f = Φ(x) - p, f' = φ(x), f'' = -x φ(x),
    // the update is x - 2 f / (2 φ(x) + x f).
    let f = phi(x) - p;
    let d = pdf(x);
    if d == 0.0 {
        return x;
    }
    x - 2.0 * f / (2.0 * d + x * f)
}

/// Acklam's rational initial approximation, valid for p in (0, 0.5].
fn acklam_initial(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_690e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Complementary error function, Cody's rational approximations.
fn erfc(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        return 1.0 - erf_small(x);
    }
    let v = if y <= 4.0 { erfc_mid(y) } else { erfc_large(y) };
    if x < 0.0 {
        2.0 - v
    } else {
        v
    }
}

/// erf(x) for |x| <= 0.46875.
fn erf_small(x: f64) -> f64 {
    const A: [f64; 5] = [
        3.161_123_743_870_565_6,
        1.138_641_541_510_501_56e2,
        3.774_852_376_853_020_2e2,
        3.209_377_589_138_469_47e3,
        1.857_777_061_846_031_53e-1,
    ];
    const B: [f64; 4] = [
        2.360_129_095_234_412_09e1,
        2.440_246_379_344_441_73e2,
        1.282_616_526_077_372_28e3,
        2.844_236_833_439_170_62e3,
    ];
    let z = x * x;
    let mut num = A[4] * z;
    let mut den = z;
    for i in 0..3 {
        num = (num + A[i]) * z;
        den = (den + B[i]) * z;
    }
    x * (num + A[3]) / (den + B[3])
}

/// erfc(y) for 0.46875 < y <= 4.
fn erfc_mid(y: f64) -> f64 {
    const C: [f64; 9] = [
        5.641_884_969_886_700_9e-1,
        8.883_149_794_388_375_9,
        6.611_919_063_714_162_95e1,
        2.986_351_381_974_001_31e2,
        8.819_522_212_417_690_9e2,
        1.712_047_612_634_070_58e3,
        2.051_078_377_826_071_47e3,
        1.230_339_354_797_997_25e3,
        2.153_115_354_744_038_46e-8,
    ];
    const D: [f64; 8] = [
        1.574_492_611_070_983_47e1,
        1.176_939_508_913_124_99e2,
        5.371_811_018_620_098_58e2,
        1.621_389_574_566_690_19e3,
        3.290_799_235_733_459_63e3,
        4.362_619_090_143_247_16e3,
        3.439_367_674_143_721_64e3,
        1.230_339_354_803_749_42e3,
    ];
    let mut num = C[8] * y;
    let mut den = y;
    for i in 0..7 {
        num = (num + C[i]) * y;
        den = (den + D[i]) * y;
    }
    scaled_exp(y) * (num + C[7]) / (den + D[7])
}

/// erfc(y) for y > 4.
fn erfc_large(y: f64) -> f64 {
    const P: [f64; 6] = [
        3.053_266_349_612_323_44e-1,
        3.603_448_999_498_044_39e-1,
        1.257_817_261_112_292_46e-1,
        1.608_378_514_874_227_66e-2,
        6.587_491_615_298_378_03e-4,
        1.631_538_713_730_209_78e-2,
    ];
    const Q: [f64; 5] = [
        2.568_520_192_289_822_42,
        1.872_952_849_923_460_47,
        5.279_051_029_514_284_12e-1,
        6.051_834_131_244_131_91e-2,
        2.335_204_976_268_691_85e-3,
    ];
    // 1/sqrt(pi)
    const SQRPI: f64 = 5.641_895_835_477_562_9e-1;
    // erfc underflows past this point.
    if y >= 26.543 {
        return 0.0;
    }
    let z = 1.0 / (y * y);
    let mut num = P[5] * z;
    let mut den = z;
    for i in 0..4 {
        num = (num + P[i]) * z;
        den = (den + Q[i]) * z;
    }
    let r = z * (num + P[4]) / (den + Q[4]);
    scaled_exp(y) * (SQRPI - r) / y
}

/// exp(-y^2) computed as exp(-ysq^2) * exp(-(y-ysq)(y+ysq)) with ysq a
/// 1/16-grid truncation of y, which keeps the argument rounding error of
/// the large square out of the exponential.
fn scaled_exp(y: f64) -> f64 {
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent CDF oracle: composite Simpson integration of the
    /// density from 0 to z, step ~1e-4, Kahan-compensated so the
    /// 80k-term sum stays accurate to ~1e-16 absolute.
    fn oracle_cdf(z: f64) -> f64 {
        let n = ((z.abs() / 1e-4).ceil() as usize).max(2) & !1usize;
        let n = n.max(2);
        let h = z / n as f64;
        let mut acc = pdf(0.0) + pdf(z);
        let mut comp = 0.0;
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            let term = w * pdf(i as f64 * h) - comp;
            let next = acc + term;
            comp = (next - acc) - term;
            acc = next;
        }
        0.5 + acc * h / 3.0
    }

    #[test]
    fn cdf_at_zero_is_half() {
        assert_eq!(std_normal_cdf(0.0).unwrap().value(), 0.5);
    }

    #[test]
    fn cdf_matches_integration_oracle() {
        for &z in &[-8.0, -3.0, -1.0, -0.1, 0.3, 0.8, 1.959964, 2.5, 5.0, 8.0] {
            let got = std_normal_cdf(z).unwrap().value();
            let want = oracle_cdf(z);
            assert!(
                (got - want).abs() <= 1e-14,
                "cdf({z}) = {got}, oracle {want}"
            );
        }
    }

    #[test]
    fn cdf_of_1_959964_is_near_0975() {
        let got = std_normal_cdf(1.959964).unwrap().value();
        assert!((got - 0.975).abs() < 1e-7);
        assert!((got - oracle_cdf(1.959964)).abs() <= 1e-14);
    }

    #[test]
    fn reflection_identity_within_1e14() {
        let mut z = -8.0;
        while z <= 8.0 {
            let a = std_normal_cdf(z).unwrap().value();
            let b = std_normal_cdf(-z).unwrap().value();
            assert!((a + b - 1.0).abs() <= 1e-14, "reflection defect at z = {z}");
            z += 0.0625;
        }
    }

    #[test]
    fn cdf_strictly_increasing_on_sample() {
        let mut prev = std_normal_cdf(-8.0).unwrap().value();
        let mut z = -7.9;
        while z <= 8.0 {
            let cur = std_normal_cdf(z).unwrap().value();
            assert!(cur > prev, "not increasing at z = {z}");
            prev = cur;
            z += 0.1;
        }
    }

    #[test]
    fn pdf_at_zero() {
        assert_eq!(std_normal_pdf(0.0).unwrap(), FRAC_1_SQRT_2PI);
    }

    #[test]
    fn pdf_matches_cdf_finite_difference() {
        // Central difference of the CDF at z = 0.8, h = 1e-5.
        let h = 1e-5;
        let fd = (phi(0.8 + h) - phi(0.8 - h)) / (2.0 * h);
        assert!((fd - pdf(0.8)).abs() <= 1e-6);
    }

    #[test]
    fn quantile_at_half_is_zero() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn quantile_of_0975() {
        // Root of Φ(z) = 0.975 located by bisection against the
        // integration oracle.
        let (mut lo, mut hi) = (1.9, 2.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if oracle_cdf(mid) < 0.975 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let want = 0.5 * (lo + hi);
        let got = std_normal_quantile(0.975).unwrap();
        assert!((got - want).abs() <= 1e-12, "got {got}, oracle {want}");
    }

    #[test]
    fn quantile_round_trip_dense_grid() {
        // Dense interior grid plus hard tail points.
        let mut worst: f64 = 0.0;
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            let z = std_normal_quantile(p).unwrap();
            worst = worst.max((phi(z) - p).abs());
        }
        for &p in &[1e-12, 1e-9, 1e-6, 1e-3, 0.02425, 1.0 - 1e-6, 1.0 - 1e-9] {
            let z = std_normal_quantile(p).unwrap();
            worst = worst.max((phi(z) - p).abs());
        }
        assert!(worst <= 1e-12, "worst round-trip error {worst}");
    }

    #[test]
    fn quantile_cdf_inverse_both_ways() {
        for &z in &[-6.0, -2.2, -0.4, 0.0, 0.7, 1.3, 4.0] {
            let p = phi(z);
            let back = std_normal_quantile(p).unwrap();
            assert!((back - z).abs() <= 1e-9, "z = {z}, back = {back}");
        }
    }

    #[test]
    fn domain_errors() {
        assert!(std_normal_cdf(f64::NAN).is_err());
        assert!(std_normal_cdf(f64::INFINITY).is_err());
        assert!(std_normal_pdf(f64::NEG_INFINITY).is_err());
        assert!(std_normal_quantile(0.0).is_err());
        assert!(std_normal_quantile(1.0).is_err());
        assert!(std_normal_quantile(-0.25).is_err());
        assert!(std_normal_quantile(f64::NAN).is_err());
        assert!(Probability::new(1.5).is_err());
        assert!(Probability::new(f64::NAN).is_err());
    }
}
