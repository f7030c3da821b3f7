//! Binomial confidence bounds, the standard normal quantile and the
//! certified radius of the smoothed classifier.
//!
//! For a fixed rotation axis the smoothed prediction is invariant under any
//! motion `a` with
//!
//! ```text
//! sqrt((theta/s_theta)^2 + (tx/s_x)^2 + (ty/s_y)^2 + (tz/s_z)^2) < (Phi^-1(pA) - Phi^-1(pB)) / 2
//! ```
//!
//! where `pA` lower-bounds the top class probability and `pB` upper-bounds
//! the runner-up's. Restricted to one axis this is `|a_i| < radius` with
//! `radius = s_i/2 * (Phi^-1(pA) - Phi^-1(pB))`.

// The AS241 coefficients are kept digit for digit as published.
#![allow(clippy::excessive_precision)]

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::geometry::{MotionParams, Vec3};
use crate::motion::{MotionAxis, SmoothingSpec};
use crate::smoothing::SampleCounts;
use crate::{Error, Result};

/// Probabilities are clamped into `[P_CLAMP, 1 - P_CLAMP]` before the quantile.
pub const P_CLAMP: f64 = 1e-15;

const BISECTION_STEPS: usize = 200;

fn check_binomial(k: u64, n: u64, alpha: f64) -> Result<()> {
    if n == 0 || k > n {
        return Err(Error::invalid(format!("need 0 <= k <= n and n >= 1, got k={k} n={n}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// `P[Binom(n, p) >= k]` for `1 <= k <= n`.
fn upper_tail(k: u64, n: u64, p: f64) -> f64 {
    beta_reg(k as f64, (n - k + 1) as f64, p)
}

/// `P[Binom(n, p) <= k]` for `0 <= k < n`.
fn lower_tail(k: u64, n: u64, p: f64) -> f64 {
    beta_reg((n - k) as f64, (k + 1) as f64, 1.0 - p)
}

/// Bisects a monotone predicate on `[0, 1]`: `below(lo)` holds, `below(hi)`
/// does not. Returns the final bracket.
fn bisect(mut below: impl FnMut(f64) -> bool) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

/// One-sided Clopper–Pearson lower bound: the `L` with
/// `P[Binom(n, L) >= k] = alpha`, rounded down. Zero when `k = 0`.
pub fn binom_lower_bound(k: u64, n: u64, alpha: f64) -> Result<f64> {
    check_binomial(k, n, alpha)?;
    if k == 0 {
        return Ok(0.0);
    }
    Ok(bisect(|p| upper_tail(k, n, p) <= alpha).0)
}

/// One-sided Clopper–Pearson upper bound: the `U` with
/// `P[Binom(n, U) <= k] = alpha`, rounded up. One when `k = n`.
pub fn binom_upper_bound(k: u64, n: u64, alpha: f64) -> Result<f64> {
    check_binomial(k, n, alpha)?;
    if k == n {
        return Ok(1.0);
    }
    Ok(bisect(|p| lower_tail(k, n, p) > alpha).1)
}

/// Two-sided exact binomial test of `p = 1/2`.
pub fn binom_two_sided_p_value(k: u64, n: u64) -> Result<f64> {
    if n == 0 || k > n {
        return Err(Error::invalid(format!("need 0 <= k <= n and n >= 1, got k={k} n={n}")));
    }
    let extreme = k.max(n - k);
    if extreme == 0 {
        return Ok(1.0);
    }
    Ok((2.0 * upper_tail(extreme, n, 0.5)).min(1.0))
}

const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    133.141_667_891_784_377_45,
    1_971.590_950_306_551_442_7,
    13_731.693_765_509_461_125,
    45_921.953_931_549_871_457,
    67_265.770_927_008_700_853,
    33_430.575_583_588_128_105,
    2_509.080_928_730_122_672_7,
];
const B: [f64; 8] = [
    1.0,
    42.313_330_701_600_911_252,
    687.187_007_492_057_908_30,
    5_394.196_021_424_751_107_7,
    21_213.794_301_586_595_867,
    39_307.895_800_092_710_610,
    28_729.085_735_721_942_674,
    5_226.495_278_852_854_561_0,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_90,
    5.769_497_221_460_691_405_50,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    0.241_780_725_177_450_611_770,
    0.022_723_844_989_269_184_583_3,
    7.745_450_142_783_414_076_40e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_40,
    0.689_767_334_985_100_004_550,
    0.148_103_976_427_480_074_590,
    0.015_198_666_563_616_457_196_6,
    5.475_938_084_995_344_946_00e-4,
    1.050_750_071_644_416_843_24e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777_20,
    5.463_784_911_164_114_369_90,
    1.784_826_539_917_291_335_80,
    0.296_560_571_828_504_891_230,
    0.026_532_189_526_576_123_093_0,
    1.242_660_947_388_078_438_60e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const F: [f64; 8] = [
    1.0,
    0.599_832_206_555_887_937_690,
    0.136_929_880_922_735_805_310,
    0.014_875_361_290_850_614_852_5,
    7.868_691_311_456_132_591_00e-4,
    1.846_318_317_510_054_681_80e-5,
    1.421_511_758_316_445_888_70e-7,
    2.044_263_103_389_939_785_64e-15,
];

fn poly(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

/// Standard normal quantile (Wichura's AS241, PPND16).
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("quantile needs p in (0, 1), got {p}")));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return Ok(q * poly(&A, r) / poly(&B, r));
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let v = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    Ok(if q < 0.0 { -v } else { v })
}

fn clamped_quantile(p: f64) -> f64 {
    std_normal_quantile(p.clamp(P_CLAMP, 1.0 - P_CLAMP)).expect("clamped into (0, 1)")
}

/// `(Phi^-1(pA) - Phi^-1(pB)) / 2`, the radius in units of sigma.
pub fn normalized_margin(pa_lower: f64, pb_upper: f64) -> f64 {
    0.5 * (clamped_quantile(pa_lower) - clamped_quantile(pb_upper))
}

/// Outcome of certifying one sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub top_class: usize,
    pub runner_up_class: usize,
    pub pa_lower: f64,
    pub pb_upper: f64,
    /// Present exactly when not abstained.
    pub radius: Option<f64>,
    pub abstained: bool,
    pub sigma_used: f64,
    pub confidence: f64,
}

/// Certified radius along one axis with noise level `sigma`. Each bound
/// takes half of `alpha`; `top2` comes from an independent selection run.
pub fn certify_one_axis(counts: &SampleCounts, top2: (usize, usize), sigma: f64, alpha: f64) -> Result<Certificate> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!("certification needs sigma > 0, got {sigma}")));
    }
    let (top, runner_up) = top2;
    let k = counts.counts();
    if top >= k.len() || runner_up >= k.len() || top == runner_up {
        return Err(Error::invalid(format!("bad top-2 pair ({top}, {runner_up}) for {} classes", k.len())));
    }
    let n = counts.n();
    let pa_lower = binom_lower_bound(k[top], n, alpha / 2.0)?;
    let pb_upper = binom_upper_bound(k[runner_up], n, alpha / 2.0)?;
    let abstained = pa_lower <= pb_upper;
    let radius = (!abstained).then(|| sigma * normalized_margin(pa_lower, pb_upper));
    Ok(Certificate {
        top_class: top,
        runner_up_class: runner_up,
        pa_lower,
        pb_upper,
        radius,
        abstained,
        sigma_used: sigma,
        confidence: 1.0 - alpha,
    })
}

/// Whether `motion` lies strictly inside the certified ellipsoid. The
/// rotation must be about the spec's fixed axis; axes with zero noise accept
/// only zero coordinates.
pub fn certify_motion(motion: &MotionParams, spec: &SmoothingSpec, pa_lower: f64, pb_upper: f64) -> Result<bool> {
    spec.validate()?;
    let rotvec = motion.rotvec();
    let theta = if rotvec == Vec3::zeros() {
        0.0
    } else {
        let axis = spec
            .fixed_axis
            .map(Vec3::from)
            .ok_or_else(|| Error::NotCertifiable("rotation without a fixed smoothing axis".into()))?;
        let theta = rotvec.dot(&axis);
        if (rotvec - axis * theta).norm() > 1e-12 * rotvec.norm().max(1.0) {
            return Err(Error::NotCertifiable("rotation axis differs from the smoothing axis".into()));
        }
        theta
    };
    let t = motion.translation();
    let terms = [
        (t.x, spec.sigma_x_m, "x translation"),
        (t.y, spec.sigma_y_m, "y translation"),
        (t.z, spec.sigma_z_m, "z translation"),
        (theta, spec.sigma_theta_rad, "rotation"),
    ];
    let mut sum = 0.0;
    for (value, sigma, name) in terms {
        if value == 0.0 {
            continue;
        }
        if sigma == 0.0 {
            return Err(Error::NotCertifiable(format!("nonzero {name} on an axis without noise")));
        }
        sum += (value / sigma).powi(2);
    }
    Ok(sum.sqrt() < normalized_margin(pa_lower, pb_upper))
}

/// The single axis a spec smooths over, if there is exactly one.
pub fn active_axis(spec: &SmoothingSpec) -> Option<MotionAxis> {
    let active: Vec<MotionAxis> = MotionAxis::ALL.into_iter().filter(|&a| spec.sigma_for(a) > 0.0).collect();
    match active.as_slice() {
        [a] => Some(*a),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::axis_motion;
    use proptest::prelude::*;
    use statrs::function::erf::erfc;
    use statrs::function::gamma::ln_gamma;

    /// Binomial CDF by direct log-gamma pmf summation.
    fn cdf_oracle(k: u64, n: u64, p: f64) -> f64 {
        let (nf, lp, lq) = (n as f64, p.ln(), (1.0 - p).ln());
        (0..=k)
            .map(|i| {
                let i = i as f64;
                (ln_gamma(nf + 1.0) - ln_gamma(i + 1.0) - ln_gamma(nf - i + 1.0) + i * lp + (nf - i) * lq).exp()
            })
            .sum()
    }

    fn phi(x: f64) -> f64 {
        0.5 * erfc(-x / std::f64::consts::SQRT_2)
    }

    fn counts(v: &[u64]) -> SampleCounts {
        SampleCounts::new(v.to_vec()).unwrap()
    }

    #[test]
    fn lower_bound_examples() {
        assert_eq!(binom_lower_bound(0, 37, 0.01).unwrap(), 0.0);
        let l = binom_lower_bound(1000, 1000, 0.005).unwrap();
        assert!((l - 0.005f64.powf(1e-3)).abs() < 1e-12);
        assert!((l - 0.994716).abs() < 1e-6);
        let l = binom_lower_bound(990, 1000, 0.005).unwrap();
        assert!((cdf_oracle(989, 1000, l) - 0.995).abs() < 1e-9);
    }

    #[test]
    fn upper_bound_examples() {
        assert_eq!(binom_upper_bound(7, 7, 0.01).unwrap(), 1.0);
        let u = binom_upper_bound(0, 1000, 0.005).unwrap();
        assert!((u - (1.0 - 0.005f64.powf(1e-3))).abs() < 1e-12);
        assert!((u - 0.005284).abs() < 1e-6);
        let u = binom_upper_bound(12, 1000, 0.005).unwrap();
        assert!((cdf_oracle(12, 1000, u) - 0.005).abs() < 1e-9);
    }

    #[test]
    fn bound_domain_errors() {
        assert!(binom_lower_bound(5, 4, 0.1).is_err());
        assert!(binom_lower_bound(0, 0, 0.1).is_err());
        assert!(binom_upper_bound(1, 4, 0.0).is_err());
        assert!(binom_upper_bound(1, 4, 1.0).is_err());
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        assert!((std_normal_quantile(0.8413447460685429).unwrap() - 1.0).abs() < 1e-9);
        assert!(std_normal_quantile(0.0).is_err());
        assert!(std_normal_quantile(1.0).is_err());
        assert!(std_normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_matches_high_precision_reference() {
        // Reference quantiles from 60-digit bisection on the normal CDF.
        let table = [
            (1e-300, -37.047_096_299_361_199_237),
            (1e-100, -21.273_453_560_965_324_295),
            (1e-20, -9.262_340_089_798_407_573_7),
            (1e-12, -7.034_483_825_301_131_929_8),
            (1e-6, -4.753_424_308_822_898_948_2),
            (0.001, -3.090_232_306_167_813_541_5),
            (0.02, -2.053_748_910_631_823_052_9),
            (0.07, -1.475_791_028_179_170_735_2),
            (0.3, -0.524_400_512_708_040_784_04),
            (0.6, 0.253_347_103_135_799_798_80),
            (0.92, 1.405_071_560_309_632_555_95),
            (0.999, 3.090_232_306_167_813_541_5),
        ];
        for (p, x) in table {
            let q = std_normal_quantile(p).unwrap();
            assert!((q - x).abs() < 1e-13, "p={p}: {q} vs {x}");
        }
    }

    #[test]
    fn quantile_inverts_erfc_cdf() {
        // Loose bound: the erfc implementation itself is good to ~1e-11 relative in the tails.
        for &p in &[1e-12, 1e-6, 0.001, 0.02, 0.07, 0.3, 0.5, 0.6, 0.92, 0.999] {
            let x = std_normal_quantile(p).unwrap();
            let back = if x < 0.0 { phi(x) } else { 1.0 - phi(-x) };
            assert!(((back - p) / p.min(1.0 - p)).abs() < 1e-10, "p={p} x={x} back={back}");
        }
    }

    #[test]
    fn p_value_examples() {
        assert!(binom_two_sided_p_value(51, 100).unwrap() > 0.5);
        assert!((binom_two_sided_p_value(1, 1).unwrap() - 1.0).abs() < 1e-12);
        assert!((binom_two_sided_p_value(7, 7).unwrap() - 2.0 * 0.5f64.powi(7)).abs() < 1e-15);
        assert!(binom_two_sided_p_value(100, 100).unwrap() < 0.01);
    }

    #[test]
    fn one_axis_radius_is_one_sigma_at_pm_one() {
        let m = normalized_margin(0.841_344_746_068_542_9, 0.158_655_253_931_457_1);
        assert!((0.1 * m - 0.1).abs() < 1e-9);
    }

    #[test]
    fn all_successes_radius() {
        let cert = certify_one_axis(&counts(&[1000, 0, 0, 0, 0]), (0, 1), 0.122, 0.01).unwrap();
        let l = 0.005f64.powf(1e-3);
        assert!((cert.pa_lower - l).abs() < 1e-12);
        assert!((cert.pb_upper - (1.0 - l)).abs() < 1e-12);
        let margin = 0.5 * (std_normal_quantile(l).unwrap() - std_normal_quantile(1.0 - l).unwrap());
        assert!((margin - 2.5557).abs() < 1e-3);
        assert!((cert.radius.unwrap() - 0.122 * margin).abs() < 1e-9);
        assert!(!cert.abstained);
        assert_eq!(cert.confidence, 0.99);
    }

    #[test]
    fn overlapping_bounds_abstain() {
        let cert = certify_one_axis(&counts(&[510, 490]), (0, 1), 0.1, 0.01).unwrap();
        assert!(cert.abstained);
        assert!(cert.pa_lower <= cert.pb_upper);
        assert_eq!(cert.radius, None);
    }

    #[test]
    fn zero_sigma_rejected() {
        assert!(matches!(certify_one_axis(&counts(&[10, 0]), (0, 1), 0.0, 0.01), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn motion_examples() {
        let tz = SmoothingSpec::one_axis(MotionAxis::Tz, 0.1).unwrap();
        assert!(certify_motion(&MotionParams::identity(), &tz, 0.9, 0.1).unwrap());
        let (pa, pb) = (0.841_344_746_068_542_9, 0.158_655_253_931_457_1);
        assert!(certify_motion(&axis_motion(MotionAxis::Tz, 0.05).unwrap(), &tz, pa, pb).unwrap());

        let spec = SmoothingSpec { sigma_theta_rad: 0.1, fixed_axis: Some([0.0, 1.0, 0.0]), ..tz };
        // Margin 0.78 from symmetric bounds.
        let pa = phi(0.78);
        let motion = MotionParams::new(Vec3::new(0.0, 0.06, 0.0), Vec3::new(0.0, 0.0, 0.05)).unwrap();
        assert!((normalized_margin(pa, 1.0 - pa) - 0.78).abs() < 1e-9);
        assert!(!certify_motion(&motion, &spec, pa, 1.0 - pa).unwrap());
    }

    #[test]
    fn motion_on_unsmoothed_axis_not_certifiable() {
        let tz = SmoothingSpec::one_axis(MotionAxis::Tz, 0.1).unwrap();
        let tx = axis_motion(MotionAxis::Tx, 0.01).unwrap();
        assert!(matches!(certify_motion(&tx, &tz, 0.9, 0.1), Err(Error::NotCertifiable(_))));
        let rz = SmoothingSpec::one_axis(MotionAxis::Rz, 0.1).unwrap();
        let ry = axis_motion(MotionAxis::Ry, 0.01).unwrap();
        assert!(matches!(certify_motion(&ry, &rz, 0.9, 0.1), Err(Error::NotCertifiable(_))));
    }

    #[test]
    fn boundary_motion_not_certified() {
        let tz = SmoothingSpec::one_axis(MotionAxis::Tz, 0.1).unwrap();
        let cert = certify_one_axis(&counts(&[950, 50]), (0, 1), 0.1, 0.01).unwrap();
        let r = cert.radius.unwrap();
        let at = axis_motion(MotionAxis::Tz, r).unwrap();
        assert!(!certify_motion(&at, &tz, cert.pa_lower, cert.pb_upper).unwrap());
    }

    proptest! {
        #[test]
        fn quantile_antisymmetric(p in 1e-12f64..0.999_999) {
            let a = std_normal_quantile(p).unwrap();
            let b = std_normal_quantile(1.0 - p).unwrap();
            prop_assert!((a + b).abs() < 1e-12 * a.abs().max(1.0) * 10.0 || (a + b).abs() < 1e-12);
        }

        #[test]
        fn bounds_are_dual(n in 1u64..2000, frac in 0.0f64..=1.0, alpha in 0.001f64..0.5) {
            let k = ((n as f64) * frac).round() as u64;
            let u = binom_upper_bound(k, n, alpha).unwrap();
            let l = binom_lower_bound(n - k, n, alpha).unwrap();
            prop_assert!((u - (1.0 - l)).abs() < 1e-9);
            prop_assert!(binom_lower_bound(k, n, alpha).unwrap() <= k as f64 / n as f64);
        }

        #[test]
        fn radius_monotone_and_linear(
            a in 0.5f64..0.999_99, b in 0.0001f64..0.5, da in 0.0f64..0.01, db in 0.0f64..0.01,
            sigma in 0.001f64..1.0,
        ) {
            let m = normalized_margin(a, b);
            prop_assert!(normalized_margin((a + da).min(1.0), b) >= m);
            prop_assert!(normalized_margin(a, (b + db).min(1.0)) <= m);
            prop_assert!(((2.0 * sigma) * m - 2.0 * (sigma * m)).abs() <= 1e-15 * sigma * m.abs().max(1.0));
        }

        #[test]
        fn one_axis_agrees_with_ellipsoid(
            top in 500u64..1000, frac in 0.0f64..1.0, sigma in 0.01f64..0.5,
            axis_idx in 0usize..6, u in -1.5f64..1.5,
        ) {
            let axis = MotionAxis::ALL[axis_idx];
            let runner = ((1000 - top) as f64 * frac) as u64;
            let c = counts(&[top, runner, 1000 - top - runner]);
            let cert = certify_one_axis(&c, (0, 1), sigma, 0.01).unwrap();
            let spec = SmoothingSpec::one_axis(axis, sigma).unwrap();
            if let Some(r) = cert.radius {
                let value = u * r;
                let motion = axis_motion(axis, value).unwrap();
                let inside = certify_motion(&motion, &spec, cert.pa_lower, cert.pb_upper).unwrap();
                let coord = axis.coordinate(&motion);
                // Away from the boundary the two views must agree exactly.
                if (coord.abs() - r).abs() > 1e-12 {
                    prop_assert_eq!(inside, coord.abs() < r);
                }
            }
        }
    }
}
