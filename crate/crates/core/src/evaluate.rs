//! Benign, empirical-robust and certified accuracy over a set of test views.
//!
//! Empirical robustness attacks each view with a grid of one-axis motions
//! inside `[-radius, radius]` and calls the view robust only if every attacked
//! image is classified correctly. For a list of attack sizes `k1 < k2 < ...`
//! the motions tried for `kj` are the union of the grids of `k1..=kj`, so a
//! larger attack never succeeds less often. Abstentions count as errors.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::Certificate;
use crate::classifier::Classifier;
use crate::geometry::{CameraIntrinsics, MotionParams};
use crate::motion::{axis_motion, sample_uniform_random, uniform_grid_values, MotionAxis, SeedSpec, SmoothingSpec};
use crate::renderer::{relative_project, SceneFrame};
use crate::smoothing::{certify_frame, smoothed_predict, CertifyParams};
use crate::{Error, Result};

/// One test view with its ground truth.
#[derive(Debug, Clone)]
pub struct EvalTask {
    pub pose_id: usize,
    pub true_label: usize,
    pub frame: SceneFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub k: usize,
    pub base_robust: bool,
    pub smoothed_robust: bool,
}

/// Per-view evaluation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub pose_id: usize,
    pub true_label: usize,
    pub benign_pred: usize,
    pub smoothed_pred: usize,
    /// The smoothed prediction abstained, or its certificate did.
    pub abstained: bool,
    pub axis: MotionAxis,
    pub attack_radius: f64,
    pub attacks: Vec<AttackOutcome>,
    /// Absent when the axis carries no smoothing noise.
    pub certificate: Option<Certificate>,
}

impl EvalRecord {
    pub fn smoothed_correct(&self) -> bool {
        !self.abstained && self.smoothed_pred == self.true_label
    }

    pub fn certified_radius(&self) -> Option<f64> {
        self.certificate.as_ref().and_then(|c| c.radius)
    }

    /// Correct, not abstained, and certified beyond `radius`.
    pub fn certified_at(&self, radius: f64) -> bool {
        self.smoothed_correct() && self.certified_radius().is_some_and(|r| r > radius)
    }

    fn attack(&self, k: usize) -> Result<&AttackOutcome> {
        self.attacks
            .iter()
            .find(|a| a.k == k)
            .ok_or_else(|| Error::invalid(format!("pose {} has no k={k} attack result", self.pose_id)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub axis: MotionAxis,
    pub attack_radius: f64,
    /// Attack sizes, strictly increasing after sorting.
    pub attack_ks: Vec<usize>,
    /// Random uniform attack motions instead of evenly spaced grids.
    pub random_attacks: bool,
    pub smoothing: SmoothingSpec,
    pub certify: CertifyParams,
    pub seed: u64,
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.smoothing.validate()?;
        if !(self.attack_radius.is_finite() && self.attack_radius >= 0.0) {
            return Err(Error::invalid(format!("attack radius must be >= 0, got {}", self.attack_radius)));
        }
        if self.attack_ks.is_empty() || self.attack_ks.contains(&0) {
            return Err(Error::invalid("attack sizes must be a nonempty list of positive integers"));
        }
        let p = &self.certify;
        if p.n0 == 0 || p.n == 0 || !(p.alpha > 0.0 && p.alpha < 1.0) {
            return Err(Error::invalid("need n0 >= 1, n >= 1 and 0 < alpha < 1"));
        }
        Ok(())
    }

    fn sorted_ks(&self) -> Vec<usize> {
        let mut ks = self.attack_ks.clone();
        ks.sort_unstable();
        ks.dedup();
        ks
    }

    /// Attack coordinates for each attack size, cumulative over smaller sizes.
    pub fn attack_sets(&self) -> Result<Vec<(usize, Vec<f64>)>> {
        let mut seen: Vec<f64> = Vec::new();
        let mut out = Vec::new();
        for k in self.sorted_ks() {
            let values = if self.random_attacks {
                let seed = SeedSpec::new(self.seed, 0).derive(0x00a7_7ac4 ^ k as u64);
                sample_uniform_random(self.axis, self.attack_radius, k, seed)?
                    .iter()
                    .map(|m| self.axis.coordinate(m))
                    .collect()
            } else {
                uniform_grid_values(self.attack_radius, k)?
            };
            for v in values {
                // -0.0 and 0.0 are the same motion.
                let v = if v == 0.0 { 0.0 } else { v };
                seen.push(v);
            }
            seen.sort_by(f64::total_cmp);
            seen.dedup();
            out.push((k, seen.clone()));
        }
        Ok(out)
    }

    fn pose_seed(&self, pose_id: usize) -> SeedSpec {
        pose_seed(self.seed, pose_id)
    }
}

/// Smoothing seed shared by every run on the view `pose_id`.
fn pose_seed(seed: u64, pose_id: usize) -> SeedSpec {
    SeedSpec::new(seed, 0).derive(pose_id as u64)
}

/// Evaluates one view: benign and smoothed predictions, the certificate, and
/// every attack outcome.
pub fn evaluate_task(
    task: &EvalTask,
    classifier: &dyn Classifier,
    intrinsics: &CameraIntrinsics,
    config: &EvalConfig,
) -> Result<EvalRecord> {
    config.validate()?;
    let seed = config.pose_seed(task.pose_id);
    let benign = classifier.predict(&relative_project(&task.frame, &MotionParams::identity(), intrinsics)?)?;
    let sigma = config.smoothing.sigma_for(config.axis);
    let p = &config.certify;

    let (smoothed_pred, abstained, certificate) = if sigma > 0.0 {
        let c = certify_frame(&task.frame, classifier, intrinsics, &config.smoothing, sigma, p, seed)?;
        let abstained = c.prediction.abstained || c.certificate.abstained;
        (c.prediction.top_class, abstained, Some(c.certificate))
    } else {
        let s = smoothed_predict(&task.frame, classifier, intrinsics, &config.smoothing, p.n0, p.alpha, seed)?;
        (s.top_class, s.abstained, None)
    };

    let sets = config.attack_sets()?;
    let all_values = &sets.last().expect("validated nonempty").1;
    let mut base_ok = BTreeMap::new();
    let mut smoothed_ok = BTreeMap::new();
    for &v in all_values {
        let motion = axis_motion(config.axis, v)?;
        let base = classifier.predict(&relative_project(&task.frame, &motion, intrinsics)?)?;
        base_ok.insert(v.to_bits(), base.class == task.true_label);
        let moved = task.frame.moved(&motion);
        let s = smoothed_predict(&moved, classifier, intrinsics, &config.smoothing, p.n0, p.alpha, seed)?;
        smoothed_ok.insert(v.to_bits(), !s.abstained && s.top_class == task.true_label);
    }
    let attacks = sets
        .iter()
        .map(|(k, values)| AttackOutcome {
            k: *k,
            base_robust: values.iter().all(|v| base_ok[&v.to_bits()]),
            smoothed_robust: values.iter().all(|v| smoothed_ok[&v.to_bits()]),
        })
        .collect();

    Ok(EvalRecord {
        pose_id: task.pose_id,
        true_label: task.true_label,
        benign_pred: benign.class,
        smoothed_pred,
        abstained,
        axis: config.axis,
        attack_radius: config.attack_radius,
        attacks,
        certificate,
    })
}

/// [`evaluate_task`] over all tasks in parallel; records keep task order.
pub fn evaluate_tasks(
    tasks: &[EvalTask],
    classifier: &dyn Classifier,
    intrinsics: &CameraIntrinsics,
    config: &EvalConfig,
) -> Result<Vec<EvalRecord>> {
    config.validate()?;
    tasks.par_iter().map(|t| evaluate_task(t, classifier, intrinsics, config)).collect()
}

/// Flat certificate output for one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub pose_id: usize,
    pub true_label: usize,
    pub benign_pred: usize,
    pub smoothed_pred: usize,
    pub abstained: bool,
    #[serde(rename = "pA_lower")]
    pub pa_lower: f64,
    #[serde(rename = "pB_upper")]
    pub pb_upper: f64,
    pub radius: Option<f64>,
    pub axis: MotionAxis,
    pub sigma: f64,
    pub confidence: f64,
}

/// Benign prediction plus the smoothed certificate along `axis` for every
/// view, without attacks. Seeds per view match [`evaluate_tasks`].
pub fn certify_tasks(
    tasks: &[EvalTask],
    classifier: &dyn Classifier,
    intrinsics: &CameraIntrinsics,
    axis: MotionAxis,
    smoothing: &SmoothingSpec,
    params: &CertifyParams,
    seed: u64,
) -> Result<Vec<CertificateRecord>> {
    smoothing.validate()?;
    let sigma = smoothing.sigma_for(axis);
    tasks
        .par_iter()
        .map(|t| {
            let benign = classifier.predict(&relative_project(&t.frame, &MotionParams::identity(), intrinsics)?)?;
            let c =
                certify_frame(&t.frame, classifier, intrinsics, smoothing, sigma, params, pose_seed(seed, t.pose_id))?;
            Ok(CertificateRecord {
                pose_id: t.pose_id,
                true_label: t.true_label,
                benign_pred: benign.class,
                smoothed_pred: c.prediction.top_class,
                abstained: c.prediction.abstained || c.certificate.abstained,
                pa_lower: c.certificate.pa_lower,
                pb_upper: c.certificate.pb_upper,
                radius: c.certificate.radius,
                axis,
                sigma,
                confidence: c.certificate.confidence,
            })
        })
        .collect()
}

fn fraction(records: &[EvalRecord], pred: impl Fn(&EvalRecord) -> bool) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::invalid("no records to aggregate"));
    }
    Ok(records.iter().filter(|r| pred(r)).count() as f64 / records.len() as f64)
}

/// Fraction of views the base classifier gets right without perturbation.
pub fn benign_accuracy(records: &[EvalRecord]) -> Result<f64> {
    fraction(records, |r| r.benign_pred == r.true_label)
}

/// Benign accuracy of the smoothed classifier; abstentions are errors.
pub fn smoothed_benign_accuracy(records: &[EvalRecord]) -> Result<f64> {
    fraction(records, EvalRecord::smoothed_correct)
}

/// Fraction of views surviving every attack motion of size `k`.
pub fn empirical_robust_accuracy(records: &[EvalRecord], k: usize, smoothed: bool) -> Result<f64> {
    for r in records {
        r.attack(k)?;
    }
    fraction(records, |r| {
        let a = r.attack(k).expect("checked above");
        if smoothed {
            a.smoothed_robust
        } else {
            a.base_robust
        }
    })
}

/// Fraction of views that are correct, not abstained, and certified with a
/// radius strictly larger than `radius`.
pub fn certified_accuracy(records: &[EvalRecord], radius: f64) -> Result<f64> {
    fraction(records, |r| r.certified_at(radius))
}

/// Certified accuracy at each radius. Radii must be ascending.
pub fn radius_sweep(records: &[EvalRecord], radii: &[f64]) -> Result<Vec<(f64, f64)>> {
    if radii.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::invalid("radii must be sorted ascending"));
    }
    radii.iter().map(|&r| Ok((r, certified_accuracy(records, r)?))).collect()
}

/// Evenly spaced radii from 0 to the largest certified radius.
pub fn default_sweep_radii(records: &[EvalRecord], steps: usize) -> Vec<f64> {
    let max = records.iter().filter_map(EvalRecord::certified_radius).fold(0.0, f64::max);
    let steps = steps.max(1);
    (0..=steps).map(|i| max * i as f64 / steps as f64).collect()
}

/// Empirical robust accuracy of a classifier computed directly on views.
pub fn empirical_robust_accuracy_on(
    tasks: &[EvalTask],
    classifier: &dyn Classifier,
    intrinsics: &CameraIntrinsics,
    axis: MotionAxis,
    radius: f64,
    k: usize,
) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::invalid("no views to attack"));
    }
    let values = uniform_grid_values(radius, k)?;
    let robust = tasks
        .par_iter()
        .map(|t| {
            for &v in &values {
                let image = relative_project(&t.frame, &axis_motion(axis, v)?, intrinsics)?;
                if classifier.predict(&image)?.class != t.true_label {
                    return Ok(false);
                }
            }
            Ok(true)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(robust.iter().filter(|&&b| b).count() as f64 / tasks.len() as f64)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per record with every field flattened.
pub fn write_records_csv(records: &[EvalRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let ks: Vec<usize> = records.first().map(|r| r.attacks.iter().map(|a| a.k).collect()).unwrap_or_default();
    let mut header: Vec<String> =
        ["pose_id", "true_label", "benign_pred", "smoothed_pred", "abstained", "axis", "attack_radius"]
            .map(String::from)
            .to_vec();
    for k in &ks {
        header.push(format!("base_robust_k{k}"));
        header.push(format!("smoothed_robust_k{k}"));
    }
    header.extend(["pa_lower", "pb_upper", "radius", "sigma", "confidence"].map(String::from));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.pose_id.to_string(),
            r.true_label.to_string(),
            r.benign_pred.to_string(),
            r.smoothed_pred.to_string(),
            r.abstained.to_string(),
            r.axis.to_string(),
            r.attack_radius.to_string(),
        ];
        for k in &ks {
            let a = r.attack(*k)?;
            row.push(a.base_robust.to_string());
            row.push(a.smoothed_robust.to_string());
        }
        let c = r.certificate.as_ref();
        row.extend([
            opt(c.map(|c| c.pa_lower)),
            opt(c.map(|c| c.pb_upper)),
            opt(c.and_then(|c| c.radius)),
            opt(c.map(|c| c.sigma_used)),
            opt(c.map(|c| c.confidence)),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Base and smoothed rows with benign, per-k empirical and certified columns.
pub fn write_summary_csv(records: &[EvalRecord], config: &EvalConfig, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let ks = config.sorted_ks();
    let mut header: Vec<String> = ["axis", "radius", "sigma", "model", "benign_acc"].map(String::from).to_vec();
    header.extend(ks.iter().map(|k| format!("emp_robust_acc_k{k}")));
    header.push("certified_acc".into());
    w.write_record(&header)?;
    let sigma = config.smoothing.sigma_for(config.axis);
    let fmt = |x: f64| format!("{x:.3}");
    for smoothed in [false, true] {
        let mut row = vec![
            config.axis.to_string(),
            config.attack_radius.to_string(),
            sigma.to_string(),
            if smoothed { "smoothed" } else { "base" }.to_string(),
            fmt(if smoothed { smoothed_benign_accuracy(records)? } else { benign_accuracy(records)? }),
        ];
        for &k in &ks {
            row.push(fmt(empirical_robust_accuracy(records, k, smoothed)?));
        }
        let certified = records.iter().any(|r| r.certificate.is_some());
        row.push(if smoothed && certified {
            fmt(certified_accuracy(records, config.attack_radius)?)
        } else {
            String::new()
        });
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(sweep: &[(f64, f64)], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["radius", "certified_acc"])?;
    for (r, a) in sweep {
        w.write_record([r.to_string(), a.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
