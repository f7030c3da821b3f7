//! Subcommand bodies. Each reads only its inputs and writes only into the
//! output directory, every artifact next to a `.config.json` sidecar.

use std::path::{Path, PathBuf};

use camsmooth::classifier::{serve, CentroidModel, Classifier, ExternalClassifier, FeatureSpec};
use camsmooth::evaluate::{
    certify_tasks, default_sweep_radii, evaluate_tasks, radius_sweep, write_records_csv, write_summary_csv,
    write_sweep_csv, EvalConfig, EvalRecord,
};
use camsmooth::geometry::CameraIntrinsics;
use camsmooth::motion::{axis_motion, SmoothingSpec};
use camsmooth::pipeline::{train, LabeledScenes, TrainOptions};
use camsmooth::pointcloud::DownsampleConfig;
use camsmooth::renderer::{encode_tensor, render, write_png};
use camsmooth::scene::{build_scene_set, desk_specs, PoseLayout, SceneManifest};
use camsmooth::smoothing::CertifyParams;
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ClassifierSource, ImageFormat, RunConfig};
use crate::Failure;

pub const CERTIFICATES_FILE: &str = "certificates.json";
pub const RECORDS_FILE: &str = "records.json";
pub const MODEL_FILE: &str = "model.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Contents of every artifact sidecar.
#[derive(Serialize)]
struct Provenance<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
}

/// `records.json`: evaluation records with the settings that produced them.
#[derive(Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub records: Vec<EvalRecord>,
}

pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".config.json");
    artifact.with_file_name(name)
}

/// A resolved run. Artifacts written through it carry its config.
pub struct Run {
    pub command: &'static str,
    pub config: RunConfig,
}

impl Run {
    fn out_dir(&self) -> Result<&Path, Failure> {
        std::fs::create_dir_all(&self.config.out_dir)?;
        Ok(&self.config.out_dir)
    }

    fn write_sidecar(&self, artifact: &Path) -> Result<(), Failure> {
        let p = Provenance { command: self.command, version: env!("CARGO_PKG_VERSION"), config: &self.config };
        std::fs::write(sidecar_path(artifact), serde_json::to_vec_pretty(&p)?)?;
        Ok(())
    }

    fn write_artifact(&self, path: &Path, bytes: &[u8]) -> Result<(), Failure> {
        std::fs::write(path, bytes)?;
        self.write_sidecar(path)
    }

    fn load_manifest(&self) -> Result<SceneManifest, Failure> {
        let path = self.config.manifest_path();
        let bytes = std::fs::read(path)?;
        let de = &mut serde_json::Deserializer::from_slice(&bytes);
        serde_path_to_error::deserialize(de)
            .map_err(|e| Failure::Schema(format!("manifest '{}': {}: {}", path.display(), e.path(), e.inner())))
    }

    /// Loads the scenes and fixes the camera: the configured one, else the
    /// manifest's.
    fn load_scenes(&mut self) -> Result<(LabeledScenes, CameraIntrinsics), Failure> {
        let manifest = self.load_manifest()?;
        let path = self.config.manifest_path().to_path_buf();
        let base = path.parent().unwrap_or(Path::new("."));
        let mut scenes = LabeledScenes::load(&manifest, base).map_err(|e| match e {
            camsmooth::Error::Schema(msg) => Failure::Schema(format!("manifest '{}': {msg}", path.display())),
            other => other.into(),
        })?;
        if self.config.downsample {
            scenes = scenes.downsampled(&DownsampleConfig::for_axis(self.config.axis))?;
        }
        let k = *self.config.intrinsics.get_or_insert(manifest.intrinsics);
        info!(
            "loaded {} classes, {} points, from {}",
            scenes.class_count(),
            scenes.clouds.iter().map(|c| c.len()).sum::<usize>(),
            path.display()
        );
        Ok((scenes, k))
    }

    fn load_classifier(&self, class_count: usize) -> Result<Box<dyn Classifier>, Failure> {
        match &self.config.classifier {
            ClassifierSource::Builtin { model_path } => {
                let path = model_path.as_deref().expect("resolved config has a model path");
                let model = CentroidModel::load(path)?;
                if model.class_count() != class_count {
                    return Err(Failure::Schema(format!(
                        "classifier.model_path: model '{}' has {} classes, the manifest has {class_count}",
                        path.display(),
                        model.class_count()
                    )));
                }
                Ok(Box::new(model))
            }
            ClassifierSource::External { command } => Ok(Box::new(ExternalClassifier::new(command, class_count)?)),
        }
    }

    fn smoothing(&self) -> Result<SmoothingSpec, Failure> {
        Ok(SmoothingSpec::one_axis(self.config.axis, self.config.sigma_for_axis())?)
    }

    fn certify_params(&self) -> CertifyParams {
        CertifyParams { n0: self.config.n0, n: self.config.n, alpha: self.config.alpha_conf }
    }
}

pub fn gen_scene(mut run: Run) -> Result<(), Failure> {
    let c = &run.config;
    let s = c.scene.clone();
    let layout = PoseLayout { test_count: s.test_poses, ..PoseLayout::default() };
    let mut specs = desk_specs(c.seed);
    specs.truncate(s.classes);
    for spec in &mut specs {
        spec.point_density_m = s.point_density_m;
    }
    let set = build_scene_set(specs, &layout, s.train_poses, s.gap_degrees, c.seed)?;
    let k = *run.config.intrinsics.get_or_insert(CameraIntrinsics::evaluation_default());
    // The manifest is always written to the output directory.
    let out = run.out_dir()?.to_path_buf();
    run.config.manifest_path = Some(out.join(MANIFEST_FILE));
    let manifest = set.write(&out, k, s.gap_degrees, &layout)?;
    for class in &manifest.classes {
        run.write_sidecar(&out.join(&class.ply_path))?;
    }
    let path = out.join(MANIFEST_FILE);
    manifest.save(&path)?;
    run.write_sidecar(&path)?;
    info!("wrote {} classes to {}", manifest.class_count(), out.display());
    Ok(())
}

pub fn render_views(mut run: Run) -> Result<(), Failure> {
    let (scenes, k) = run.load_scenes()?;
    let tasks = scenes.eval_tasks();
    let c = &run.config;
    let ids: Vec<usize> = c.render.pose_ids.clone().unwrap_or_else(|| (0..tasks.len()).collect());
    if let Some(i) = ids.iter().position(|&id| id >= tasks.len()) {
        return Err(Failure::Schema(format!(
            "render.pose_ids[{i}]: pose {} is out of range for {} test views",
            ids[i],
            tasks.len()
        )));
    }
    let jobs: Vec<(usize, f64)> = ids.iter().flat_map(|&id| c.render.motions.iter().map(move |&m| (id, m))).collect();
    let format = c.render.format;
    let axis = c.axis;
    let encoded = jobs
        .par_iter()
        .map(|&(id, value)| {
            let image = render(&tasks[id].frame, &axis_motion(axis, value)?, &k)?;
            let (bytes, ext) = match format {
                ImageFormat::Png => {
                    let mut buf = Vec::new();
                    write_png(&image, &mut buf)?;
                    (buf, "png")
                }
                ImageFormat::Tensor => (encode_tensor(&image), "cmsimg"),
            };
            Ok((format!("pose{id:03}_{axis}_{value:+.4}.{ext}"), bytes))
        })
        .collect::<camsmooth::Result<Vec<_>>>()?;
    let dir = run.out_dir()?.join("render");
    std::fs::create_dir_all(&dir)?;
    for (name, bytes) in &encoded {
        run.write_artifact(&dir.join(name), bytes)?;
    }
    info!("wrote {} images to {}", encoded.len(), dir.display());
    Ok(())
}

pub fn train_model(mut run: Run) -> Result<(), Failure> {
    let (scenes, k) = run.load_scenes()?;
    let c = &run.config;
    let augment_spec = if c.train.augment_per_pose > 0 { run.smoothing()? } else { SmoothingSpec::default() };
    let options = TrainOptions {
        feature_spec: FeatureSpec { block: c.train.feature_block_px },
        temperature: c.train.temperature,
        augment_per_pose: c.train.augment_per_pose,
        augment_spec,
        seed: c.seed,
    };
    let model = train(&scenes, &k, &options)?;
    let path = run.out_dir()?.join(MODEL_FILE);
    model.save(&path)?;
    run.write_sidecar(&path)?;
    info!("wrote model to {}", path.display());
    Ok(())
}

pub fn certify(mut run: Run) -> Result<(), Failure> {
    let (scenes, k) = run.load_scenes()?;
    let classifier = run.load_classifier(scenes.class_count())?;
    let records = certify_tasks(
        &scenes.eval_tasks(),
        classifier.as_ref(),
        &k,
        run.config.axis,
        &run.smoothing()?,
        &run.certify_params(),
        run.config.seed,
    )?;
    let path = run.out_dir()?.join(CERTIFICATES_FILE);
    run.write_artifact(&path, &serde_json::to_vec_pretty(&records)?)?;
    let certified = records.iter().filter(|r| !r.abstained).count();
    info!("certified {certified} of {} views, wrote {}", records.len(), path.display());
    Ok(())
}

pub fn evaluate(mut run: Run) -> Result<(), Failure> {
    let (scenes, k) = run.load_scenes()?;
    let classifier = run.load_classifier(scenes.class_count())?;
    let c = &run.config;
    let config = EvalConfig {
        axis: c.axis,
        attack_radius: c.radius_for_axis(),
        attack_ks: c.attack_ks.clone(),
        random_attacks: c.random_attacks,
        smoothing: run.smoothing()?,
        certify: run.certify_params(),
        seed: c.seed,
    };
    let records = evaluate_tasks(&scenes.eval_tasks(), classifier.as_ref(), &k, &config)?;
    let out = run.out_dir()?.to_path_buf();

    let mut buf = Vec::new();
    write_records_csv(&records, &mut buf)?;
    run.write_artifact(&out.join("records.csv"), &buf)?;
    let mut summary = Vec::new();
    write_summary_csv(&records, &config, &mut summary)?;
    run.write_artifact(&out.join("summary.csv"), &summary)?;
    let mut buf = Vec::new();
    write_sweep_csv(&radius_sweep(&records, &default_sweep_radii(&records, c.sweep_steps))?, &mut buf)?;
    run.write_artifact(&out.join("sweep.csv"), &buf)?;
    let report = EvalReport { config, records };
    run.write_artifact(&out.join(RECORDS_FILE), &serde_json::to_vec_pretty(&report)?)?;
    print!("{}", String::from_utf8_lossy(&summary));
    Ok(())
}

/// Aligned text table of the summary rows, plus abstention counts.
pub fn format_report(report: &EvalReport) -> Result<String, Failure> {
    let mut csv = Vec::new();
    write_summary_csv(&report.records, &report.config, &mut csv)?;
    let rows: Vec<Vec<String>> =
        String::from_utf8_lossy(&csv).lines().map(|l| l.split(',').map(String::from).collect()).collect();
    let cols = rows.first().map_or(0, Vec::len);
    let widths: Vec<usize> = (0..cols).map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0)).collect();
    let mut text = String::new();
    for row in &rows {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(cell, w)| format!("{cell:<w$}")).collect();
        text.push_str(cells.join("  ").trim_end());
        text.push('\n');
    }
    let abstained = report.records.iter().filter(|r| r.abstained).count();
    text.push_str(&format!("views: {}, smoothed abstentions: {abstained}\n", report.records.len()));
    Ok(text)
}

pub fn report(run: Run) -> Result<(), Failure> {
    let path = run.config.out_dir.join(RECORDS_FILE);
    if !path.is_file() {
        return Err(Failure::Schema(format!(
            "out_dir: '{}' has no {RECORDS_FILE}; run evaluate first",
            run.config.out_dir.display()
        )));
    }
    let report: EvalReport = serde_json::from_slice(&std::fs::read(&path)?)?;
    let text = format_report(&report)?;
    run.write_artifact(&run.config.out_dir.join("report.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

pub fn serve_classifier(model_path: &Path) -> Result<(), Failure> {
    let model = CentroidModel::load(model_path)?;
    let stdin = std::io::stdin().lock();
    let stdout = std::io::BufWriter::new(std::io::stdout().lock());
    serve(&model, stdin, stdout)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_sits_next_to_the_artifact() {
        assert_eq!(sidecar_path(Path::new("out/model.json")), Path::new("out/model.json.config.json"));
        assert_eq!(sidecar_path(Path::new("a.ply")), Path::new("a.ply.config.json"));
    }
}
