use std::f64::consts::FRAC_PI_2;

use crate::datamodel::RasterStack;
use crate::error::{Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Diagonal Gaussian summary of a pixel neighbourhood.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotDistribution {
    pub mean: Vec<f64>,
    /// Per-feature variance, never below [`VARIANCE_FLOOR`].
    pub var: Vec<f64>,
}

impl PlotDistribution {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() || mean.is_empty() {
            return Err(Error::InvalidArgument("mean and variance must be non-empty and equal length".into()));
        }
        let var = var.into_iter().map(|v| v.max(VARIANCE_FLOOR)).collect();
        Ok(PlotDistribution { mean, var })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityScore {
    /// Combined similarity in [0, 1].
    pub value: f64,
    /// Jeffries-Matusita distance in [0, 2].
    pub jm: f64,
    /// Spectral angle in radians.
    pub sam: f64,
}

/// Folds a JM distance and a spectral angle into one score in [0, 1].
pub type Combiner = fn(jm: f64, sam: f64) -> f64;

/// `(1 - JM/2) * (1 - min(SAM, pi/2) / (pi/2))`.
pub fn combine_jmsam(jm: f64, sam: f64) -> f64 {
    let separability = (1.0 - jm / 2.0).clamp(0.0, 1.0);
    let angle = 1.0 - sam.min(FRAC_PI_2) / FRAC_PI_2;
    separability * angle.clamp(0.0, 1.0)
}

/// Mean and population variance over the valid cells of an odd window.
pub fn estimate_distribution(stack: &RasterStack, center: (usize, usize), window: usize) -> Result<PlotDistribution> {
    let (row, col) = center;
    let (w, h) = (stack.width(), stack.height());
    if window % 2 == 0 || window == 0 {
        return Err(Error::InvalidArgument(format!("window {window} must be odd")));
    }
    if row >= h || col >= w {
        return Err(Error::InvalidArgument(format!("center ({row}, {col}) outside {w}x{h} grid")));
    }
    let half = (window / 2) as isize;
    let d = stack.bands().len();
    let mut pixels: Vec<Vec<f64>> = Vec::with_capacity(window * window);
    for dr in -half..=half {
        for dc in -half..=half {
            let (r, c) = (row as isize + dr, col as isize + dc);
            if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
                continue;
            }
            if let Some(p) = stack.pixel(r as usize, c as usize) {
                pixels.push(p);
            }
        }
    }
    if pixels.is_empty() {
        return Err(Error::InsufficientData(format!("window at ({row}, {col}) is entirely nodata")));
    }
    let n = pixels.len() as f64;
    let mut mean = vec![0.0; d];
    for p in &pixels {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for p in &pixels {
        for ((s, v), m) in var.iter_mut().zip(p).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    PlotDistribution::new(mean, var)
}

/// Jeffries-Matusita distance `2 (1 - exp(-B))` with `B` the Bhattacharyya
/// distance between two diagonal Gaussians.
pub fn jm_distance(a: &PlotDistribution, b: &PlotDistribution) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidArgument(format!(
            "distribution dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let mut bhatt = 0.0;
    for i in 0..a.dim() {
        let (va, vb) = (a.var[i], b.var[i]);
        let dm = a.mean[i] - b.mean[i];
        let sum = va + vb;
        bhatt += dm * dm * 2.0 / sum / 8.0;
        // 1/2 ln((va + vb) / (2 sqrt(va vb))), split so equal variances cancel exactly
        bhatt += 0.5 * (sum / 2.0).ln() - 0.25 * (va.ln() + vb.ln());
    }
    Ok(2.0 * (1.0 - (-bhatt.max(0.0)).exp()))
}

/// Angle between two non-zero vectors, in [0, pi].
///
/// Evaluated as `2 atan2(|u - v|, |u + v|)` on the unit vectors, which
/// equals the arccosine of the normalised dot product without its rounding
/// trouble near 0 and pi.
pub fn spectral_angle(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument("vectors differ in length".into()));
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("spectral angle of a zero vector".into()));
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    Ok((2.0 * diff.sqrt().atan2(sum.sqrt())).clamp(0.0, std::f64::consts::PI))
}

pub fn jmsam_similarity(a: &PlotDistribution, b: &PlotDistribution) -> Result<SimilarityScore> {
    jmsam_similarity_with(a, b, combine_jmsam)
}

/// Similarity with a caller-supplied combination rule. Identical mean
/// vectors have angle zero even when they are the zero vector.
pub fn jmsam_similarity_with(a: &PlotDistribution, b: &PlotDistribution, combiner: Combiner) -> Result<SimilarityScore> {
    let jm = jm_distance(a, b)?;
    let sam = if a.mean == b.mean { 0.0 } else { spectral_angle(&a.mean, &b.mean)? };
    Ok(SimilarityScore {
        value: combiner(jm, sam),
        jm,
        sam,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{GeoTransform, RasterBand, DEFAULT_NODATA};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn dist(mean: &[f64], var: &[f64]) -> PlotDistribution {
        PlotDistribution::new(mean.to_vec(), var.to_vec()).unwrap()
    }

    fn one_band(values: Vec<f64>, w: usize, h: usize) -> RasterStack {
        RasterStack::from_bands(
            vec![RasterBand::new("x", w, h, values, DEFAULT_NODATA).unwrap()],
            GeoTransform::default(),
        )
        .unwrap()
    }

    #[test]
    fn constant_window() {
        let s = one_band(vec![2.5; 9], 3, 3);
        let d = estimate_distribution(&s, (1, 1), 3).unwrap();
        assert_eq!(d.mean, vec![2.5]);
        assert_eq!(d.var, vec![VARIANCE_FLOOR]);
    }

    #[test]
    fn window_zero_to_eight() {
        let s = one_band((0..9).map(f64::from).collect(), 3, 3);
        let d = estimate_distribution(&s, (1, 1), 3).unwrap();
        assert_eq!(d.mean, vec![4.0]);
        // population variance of 0..8 = 60/9
        assert!((d.var[0] - 60.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn half_nodata_window() {
        let mut v: Vec<f64> = (0..9).map(f64::from).collect();
        for x in v.iter_mut().take(4) {
            *x = DEFAULT_NODATA;
        }
        let s = one_band(v, 3, 3);
        let d = estimate_distribution(&s, (1, 1), 3).unwrap();
        assert_eq!(d.mean, vec![6.0]);
        let all_nodata = one_band(vec![DEFAULT_NODATA; 9], 3, 3);
        assert!(estimate_distribution(&all_nodata, (1, 1), 3).is_err());
    }

    #[test]
    fn jm_examples() {
        let a = dist(&[0.0], &[1.0]);
        assert_eq!(jm_distance(&a, &a).unwrap(), 0.0);
        let b = dist(&[1.0], &[1.0]);
        let expected = 2.0 * (1.0 - (-0.125f64).exp());
        assert!((jm_distance(&a, &b).unwrap() - expected).abs() < 1e-12);
        let far = dist(&[1e6], &[1.0]);
        assert!((jm_distance(&a, &far).unwrap() - 2.0).abs() < 1e-12);
        assert!(jm_distance(&a, &dist(&[0.0, 1.0], &[1.0, 1.0])).is_err());
    }

    #[test]
    fn angle_examples() {
        assert_eq!(spectral_angle(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert!((spectral_angle(&[1.0, 0.0], &[0.0, 2.0]).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!((spectral_angle(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - FRAC_PI_4).abs() < 1e-12);
        assert!((spectral_angle(&[1.0, 0.0], &[-1.0, 0.0]).unwrap() - PI).abs() < 1e-15);
        assert!(spectral_angle(&[0.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn similarity_examples() {
        let a = dist(&[1.0, 2.0], &[0.5, 0.5]);
        let s = jmsam_similarity(&a, &a).unwrap();
        assert_eq!(s.value, 1.0);
        assert_eq!(combine_jmsam(2.0, 0.3), 0.0);
        let jm = 2.0 * (1.0 - (-0.125f64).exp());
        let v = combine_jmsam(jm, FRAC_PI_4);
        assert!((v - (1.0 - jm / 2.0) * 0.5).abs() < 1e-15);
        assert!((v - 0.44125).abs() < 1e-5);
    }

    fn arb_dist(d: usize) -> impl Strategy<Value = PlotDistribution> {
        (
            proptest::collection::vec(-5.0f64..5.0, d),
            proptest::collection::vec(1e-3f64..4.0, d),
        )
            .prop_map(|(m, v)| PlotDistribution::new(m, v).unwrap())
    }

    proptest! {
        #[test]
        fn jm_symmetric_bounded(a in arb_dist(4), b in arb_dist(4)) {
            let ab = jm_distance(&a, &b).unwrap();
            let ba = jm_distance(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=2.0).contains(&ab));
            prop_assert_eq!(jm_distance(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn similarity_symmetric_and_permutation_invariant(a in arb_dist(3), b in arb_dist(3)) {
            let s = jmsam_similarity(&a, &b).unwrap();
            let t = jmsam_similarity(&b, &a).unwrap();
            prop_assert!((s.value - t.value).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&s.value));
            let perm = |d: &PlotDistribution| PlotDistribution::new(
                vec![d.mean[2], d.mean[0], d.mean[1]], vec![d.var[2], d.var[0], d.var[1]]).unwrap();
            let p = jmsam_similarity(&perm(&a), &perm(&b)).unwrap();
            prop_assert!((s.value - p.value).abs() < 1e-12);
        }
    }
}
