//! Seeded synthetic fixtures: random matrices, orthogonal transforms, and
//! complete on-disk runs with a known drift schedule.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use crate::error::{Error, Result};
use crate::tensor_io::npy::{self, Dtype};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// A Haar-ish random orthogonal matrix (Gram–Schmidt on a Gaussian matrix).
pub fn random_orthogonal<R: Rng>(rng: &mut R, d: usize) -> Array2<f64> {
    loop {
        let g = gaussian_matrix(rng, d, d);
        let mut q = Array2::<f64>::zeros((d, d));
        let mut ok = true;
        for j in 0..d {
            let mut v: Array1<f64> = g.column(j).to_owned();
            // two passes keep the columns orthogonal to working precision
            for _ in 0..2 {
                for k in 0..j {
                    let qk = q.column(k);
                    let proj = qk.dot(&v);
                    v.scaled_add(-proj, &qk);
                }
            }
            let norm = v.dot(&v).sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            q.column_mut(j).assign(&(v / norm));
        }
        if ok {
            return q;
        }
    }
}

/// Front-loaded drift: `max · (1 − e^{−epoch/τ})` for `epoch = 0..epochs`, with
/// τ = 0.75 so most of the drift happens in the first epoch.
pub fn drift_schedule(epochs: usize, max: f64) -> Vec<f64> {
    (0..epochs)
        .map(|e| max * (1.0 - (-(e as f64) / 0.75).exp()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    pub runs: usize,
    pub epochs: usize,
    /// Largest mixing weight of the run-specific direction.
    pub drift_max: f64,
    /// Per-checkpoint isotropic noise scale.
    pub noise: f64,
    /// Accuracy at zero drift; accuracy rises linearly with drift to `acc_max`.
    pub acc_base: f64,
    pub acc_max: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n: 96,
            d: 12,
            classes: 4,
            runs: 3,
            epochs: 5,
            drift_max: 0.8,
            noise: 0.02,
            acc_base: 0.55,
            acc_max: 0.9,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFixture {
    /// Single-checkpoint manifest for the pre-trained model.
    pub reference: PathBuf,
    /// One manifest per fine-tuning run.
    pub runs: Vec<PathBuf>,
    /// Drift weight per epoch.
    pub schedule: Vec<f64>,
}

fn write_f32(path: &Path, m: &Array2<f64>) -> Result<()> {
    let data: Vec<f64> = m.iter().copied().collect();
    npy::write(path, &[m.nrows(), m.ncols()], &data, Dtype::F32)
}

/// Logits whose top-1 accuracy is `round(acc·n)/n`: the first correct samples
/// (in a seeded order) put their margin on the true class, the rest on the next
/// class.
fn logits_with_accuracy<R: Rng>(rng: &mut R, labels: &[usize], classes: usize, acc: f64) -> Array2<f64> {
    let n = labels.len();
    let correct = (acc * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut logits = Array2::<f64>::zeros((n, classes));
    for (rank, &i) in order.iter().enumerate() {
        let target = if rank < correct {
            labels[i]
        } else {
            (labels[i] + 1) % classes
        };
        logits[[i, target]] = 2.0 + rng.gen_range(0.0..1.0);
    }
    logits
}

/// Writes a reference manifest plus `cfg.runs` run manifests under `dir`.
///
/// The reference has two layers, `block1` and `block2`. Run `r` at epoch `e`
/// mixes each layer toward a run-specific random direction with weight
/// `schedule[e]` (half that for `block1`), plus small per-checkpoint noise, so
/// similarity to the reference falls as drift grows while accuracy rises.
pub fn write_fixture(dir: &Path, cfg: &SyntheticConfig) -> Result<SyntheticFixture> {
    if cfg.n < 4 || cfg.d == 0 || cfg.classes < 2 || cfg.epochs == 0 || cfg.runs == 0 {
        return Err(Error::InvalidArgument("synthetic config too small".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = rng(cfg.seed);

    let labels: Vec<usize> = (0..cfg.n).map(|i| i % cfg.classes).collect();
    let class_means = gaussian_matrix(&mut rng, cfg.classes, cfg.d) * 2.0;
    let mut base = gaussian_matrix(&mut rng, cfg.n, cfg.d);
    for (i, mut row) in base.axis_iter_mut(Axis(0)).enumerate() {
        row += &class_means.row(labels[i]);
    }
    let early = &base.dot(&random_orthogonal(&mut rng, cfg.d)) + &(gaussian_matrix(&mut rng, cfg.n, cfg.d) * 0.5);
    let label_data: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    npy::write(&dir.join("labels.npy"), &[cfg.n], &label_data, Dtype::F64)?;
    let sample_ids: Vec<String> = (0..cfg.n).map(|i| format!("img_{i:05}.png")).collect();

    let ref_dir = dir.join("pretrained");
    std::fs::create_dir_all(&ref_dir).map_err(|e| Error::io(&ref_dir, e))?;
    write_f32(&ref_dir.join("block1.npy"), &early)?;
    write_f32(&ref_dir.join("block2.npy"), &base)?;
    write_f32(
        &ref_dir.join("logits.npy"),
        &logits_with_accuracy(&mut rng, &labels, cfg.classes, cfg.acc_base),
    )?;
    let reference = dir.join("pretrained.json");
    let manifest = json!({
        "schema_version": 1,
        "run_id": "pretrained",
        "dataset_id": "synthetic",
        "metadata": { "family": "synthetic" },
        "sample_ids": sample_ids,
        "labels": "labels.npy",
        "checkpoints": [{
            "epoch": 0,
            "id": "pretrained",
            "layers": { "block1": "pretrained/block1.npy", "block2": "pretrained/block2.npy" },
            "predictions": "pretrained/logits.npy"
        }]
    });
    write_json(&reference, &manifest)?;

    let schedule = drift_schedule(cfg.epochs, cfg.drift_max);
    let mut runs = Vec::with_capacity(cfg.runs);
    for r in 0..cfg.runs {
        let run_id = format!("run{r:02}");
        let direction_early = gaussian_matrix(&mut rng, cfg.n, cfg.d) * 3.0;
        let direction = gaussian_matrix(&mut rng, cfg.n, cfg.d) * 3.0;
        let mut checkpoints = Vec::with_capacity(cfg.epochs);
        for (e, &alpha) in schedule.iter().enumerate() {
            let sub = format!("{run_id}/e{e}");
            let ck_dir = dir.join(&sub);
            std::fs::create_dir_all(&ck_dir).map_err(|err| Error::io(&ck_dir, err))?;
            let mix = |src: &Array2<f64>, dirn: &Array2<f64>, a: f64, rng: &mut ChaCha8Rng| {
                src * (1.0 - a) + dirn * a + gaussian_matrix(rng, cfg.n, cfg.d) * cfg.noise
            };
            let b1 = mix(&early, &direction_early, alpha * 0.5, &mut rng);
            let b2 = mix(&base, &direction, alpha, &mut rng);
            write_f32(&ck_dir.join("block1.npy"), &b1)?;
            write_f32(&ck_dir.join("block2.npy"), &b2)?;
            let acc = cfg.acc_base + (cfg.acc_max - cfg.acc_base) * alpha / cfg.drift_max;
            write_f32(
                &ck_dir.join("logits.npy"),
                &logits_with_accuracy(&mut rng, &labels, cfg.classes, acc),
            )?;
            checkpoints.push(json!({
                "epoch": e,
                "layers": { "block1": format!("{sub}/block1.npy"), "block2": format!("{sub}/block2.npy") },
                "predictions": format!("{sub}/logits.npy")
            }));
        }
        let path = dir.join(format!("{run_id}.json"));
        write_json(
            &path,
            &json!({
                "schema_version": 1,
                "run_id": run_id,
                "dataset_id": "synthetic",
                "metadata": { "family": "synthetic" },
                "sample_ids": sample_ids,
                "labels": "labels.npy",
                "checkpoints": checkpoints
            }),
        )?;
        runs.push(path);
    }
    Ok(SyntheticFixture {
        reference,
        runs,
        schedule,
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
