//! Monte-Carlo estimation of the motion-smoothed classifier.
//!
//! Sample `i` of a run renders the frame under `sample_gaussian(spec, seed, i)`
//! and counts the base classifier's argmax. Counts merge by addition, so the
//! result does not depend on how samples are spread over threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{binom_two_sided_p_value, certify_one_axis, Certificate};
use crate::classifier::{argmax, Classifier};
use crate::geometry::CameraIntrinsics;
use crate::motion::{sample_gaussian, SeedSpec, SmoothingSpec};
use crate::renderer::{relative_project, SceneFrame};
use crate::{Error, Result};

/// Stream tags separating top-2 selection from the certified estimate.
pub const SELECTION_STREAM: u64 = 0;
pub const ESTIMATION_STREAM: u64 = 1;

/// Per-class argmax counts over `n` samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    counts: Vec<u64>,
    n: u64,
}

impl SampleCounts {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        let n = counts.iter().sum();
        if n == 0 {
            return Err(Error::invalid("sample counts need at least one sample"));
        }
        Ok(Self { counts, n })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Most and second most frequent classes, lowest index first on ties.
    pub fn top2(&self) -> (usize, usize) {
        let as_f: Vec<f64> = self.counts.iter().map(|&c| c as f64).collect();
        let top = argmax(&as_f);
        let runner_up = (0..self.counts.len())
            .filter(|&i| i != top)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if self.counts[b] >= self.counts[i] => Some(b),
                _ => Some(i),
            })
            .unwrap_or(if top == 0 { 1 } else { 0 });
        (top, runner_up)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedPrediction {
    pub top_class: usize,
    pub runner_up_class: usize,
    pub counts: SampleCounts,
    pub abstained: bool,
    /// Two-sided binomial p-value of the top count against the runner-up's.
    pub p_value: f64,
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    Ok(())
}

/// Counts the base classifier's decisions over `n` smoothing samples.
/// Any classifier failure aborts the whole count.
pub fn sample_counts(
    frame: &SceneFrame,
    classifier: &dyn Classifier,
    intrinsics: &CameraIntrinsics,
    spec: &SmoothingSpec,
    n: u64,
    seed: SeedSpec,
) -> Result<SampleCounts> {
    check_n(n)?;
    spec.validate()?;
    let classes = classifier.class_count();
    let counts = (0..n)
        .into_par_iter()
        .map(|i| {
            let image = relative_project(frame, &sample_gaussian(spec, seed, i), intrinsics)?;
            let class = classifier.predict(&image)?.class;
            if class >= classes {
                return Err(Error::ClassifierIo(format!("class {class} outside 0..{classes}")));
            }
            Ok(class)
        })
        .try_fold(
            || vec![0u64; classes],
            |mut acc, class: Result<usize>| {
                acc[class?] += 1;
                Ok::<_, Error>(acc)
            },
        )
        .try_reduce(
            || vec![0u64; classes],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    SampleCounts::new(counts)
}

/// Decision from precomputed counts: abstains unless the top count beats the
/// runner-up under an exact two-sided binomial test at level `alpha`.
pub fn decide(counts: SampleCounts, alpha: f64) -> Result<SmoothedPrediction> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let (top, runner_up) = counts.top2();
    let c = counts.counts();
    let p_value = binom_two_sided_p_value(c[top], c[top] + c.get(runner_up).copied().unwrap_or(0))?;
    Ok(SmoothedPrediction { top_class: top, runner_up_class: runner_up, abstained: p_value > alpha, counts, p_value })
}

/// Smoothed prediction from `n0` samples of the selection stream of `seed`.
pub fn smoothed_predict(
    frame: &SceneFrame,
    classifier: &dyn Classifier,
    intrinsics: &CameraIntrinsics,
    spec: &SmoothingSpec,
    n0: u64,
    alpha: f64,
    seed: SeedSpec,
) -> Result<SmoothedPrediction> {
    let counts = sample_counts(frame, classifier, intrinsics, spec, n0, seed.derive(SELECTION_STREAM))?;
    decide(counts, alpha)
}

/// Sample sizes and confidence of the predict-then-certify protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyParams {
    pub n0: u64,
    pub n: u64,
    pub alpha: f64,
}

impl Default for CertifyParams {
    fn default() -> Self {
        Self { n0: 100, n: 1000, alpha: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedCertification {
    pub prediction: SmoothedPrediction,
    pub estimate: SampleCounts,
    pub certificate: Certificate,
}

/// Selects the top two classes with `n0` samples, then bounds their
/// probabilities with `n` fresh samples from a disjoint stream and derives
/// the radius along the axis smoothed with `sigma`.
pub fn certify_frame(
    frame: &SceneFrame,
    classifier: &dyn Classifier,
    intrinsics: &CameraIntrinsics,
    spec: &SmoothingSpec,
    sigma: f64,
    params: &CertifyParams,
    seed: SeedSpec,
) -> Result<SmoothedCertification> {
    let prediction = smoothed_predict(frame, classifier, intrinsics, spec, params.n0, params.alpha, seed)?;
    let estimate = sample_counts(frame, classifier, intrinsics, spec, params.n, seed.derive(ESTIMATION_STREAM))?;
    let top2 = (prediction.top_class, prediction.runner_up_class);
    let certificate = certify_one_axis(&estimate, top2, sigma, params.alpha)?;
    Ok(SmoothedCertification { prediction, estimate, certificate })
}

/// Mean of the base classifier's probability vectors over `n` samples.
/// Diagnostic only: certificates are derived from hard counts.
pub fn soft_average(
    frame: &SceneFrame,
    classifier: &dyn Classifier,
    intrinsics: &CameraIntrinsics,
    spec: &SmoothingSpec,
    n: u64,
    seed: SeedSpec,
) -> Result<Vec<f64>> {
    check_n(n)?;
    let classes = classifier.class_count();
    let per_sample = (0..n)
        .into_par_iter()
        .map(|i| {
            let image = relative_project(frame, &sample_gaussian(spec, seed, i), intrinsics)?;
            Ok(classifier.predict(&image)?.probs.probs().to_vec())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let mut mean = vec![0.0; classes];
    for p in &per_sample {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    Ok(mean.into_iter().map(|m| m / n as f64).collect())
}
