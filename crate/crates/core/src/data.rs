//! Dataset ingestion (IDX, CSV), binary-task construction, normalization
//! with verifiable certificates, splits and cross-validation folds, and the
//! synthetic generators used by the experiment harness and tests.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{LabeledInstance, NormKind};
use crate::vecmath::{dot, l2_norm, linf_norm};

/// What normalization, if any, the dataset is certified for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormCertificate {
    None,
    /// max_i ||x_i||_2 <= 1
    L2,
    /// max_i ||x_i||_inf <= 1
    Linf,
}

impl NormCertificate {
    pub fn for_kind(kind: NormKind) -> Self {
        match kind {
            NormKind::L1 => NormCertificate::Linf,
            NormKind::L2 => NormCertificate::L2,
        }
    }
}

/// An in-memory, immutable collection of labeled instances with a common
/// dimension.
#[derive(Debug, Clone)]
pub struct Dataset {
    instances: Vec<LabeledInstance>,
    d: usize,
    norm_certificate: NormCertificate,
    /// Set by loaders of raw pixel data (values in [0, 255]); tells the
    /// max-norm normalization to use the fixed 255 scale.
    pixel_range: bool,
}

impl Dataset {
    pub fn new(instances: Vec<LabeledInstance>) -> Result<Self> {
        let Some(first) = instances.first() else {
            return Err(Error::config("dataset must contain at least one instance"));
        };
        let d = first.dim();
        if d < 1 {
            return Err(Error::config("instances must have dimension >= 1"));
        }
        if let Some(bad) = instances.iter().position(|i| i.dim() != d) {
            return Err(Error::config(format!(
                "instance {bad} has dimension {} but expected {d}",
                instances[bad].dim()
            )));
        }
        Ok(Dataset {
            instances,
            d,
            norm_certificate: NormCertificate::None,
            pixel_range: false,
        })
    }

    fn with_certificate(mut self, cert: NormCertificate) -> Self {
        self.norm_certificate = cert;
        self
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, index: usize) -> &LabeledInstance {
        &self.instances[index]
    }

    pub fn instances(&self) -> &[LabeledInstance] {
        &self.instances
    }

    pub fn norm_certificate(&self) -> NormCertificate {
        self.norm_certificate
    }

    /// Largest |y| in the dataset.
    pub fn label_bound(&self) -> f64 {
        self.instances
            .iter()
            .fold(0.0, |m, i| m.max(i.target().abs()))
    }

    /// Exhaustively re-checks the claimed normalization certificate.
    pub fn verify_certificate(&self) -> Result<()> {
        let norm: fn(&[f64]) -> f64 = match self.norm_certificate {
            NormCertificate::None => {
                return Err(Error::config("dataset carries no normalization certificate"))
            }
            NormCertificate::L2 => l2_norm,
            NormCertificate::Linf => linf_norm,
        };
        for (idx, inst) in self.instances.iter().enumerate() {
            let n = norm(inst.attributes());
            if !(n <= 1.0 + 1e-12) {
                return Err(Error::config(format!(
                    "certificate violated: instance {idx} has norm {n}"
                )));
            }
        }
        Ok(())
    }

    /// Builds a new dataset from the instances at `indices`, preserving the
    /// certificate.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let instances = indices
            .iter()
            .map(|&i| self.instances[i].clone())
            .collect::<Vec<_>>();
        Ok(Dataset::new(instances)?
            .with_certificate(self.norm_certificate))
    }
}

fn read_be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    let Some(slice) = bytes.get(offset..end) else {
        return Err(Error::format(format!(
            "truncated file: need 4 bytes for {what} at offset {offset}, file has {}",
            bytes.len()
        )));
    };
    Ok(u32::from_be_bytes(slice.try_into().unwrap()))
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Loads an IDX image/label file pair: big-endian magics 2051 and 2049,
/// big-endian 32-bit dimension sizes, unsigned pixel bytes. Images are
/// flattened row-major; pixel values stay in [0, 255] and labels are
/// attached raw (0-9).
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;

    let magic = read_be_u32(&images, 0, "images magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(format!(
            "bad images magic at offset 0: expected {IDX_IMAGES_MAGIC}, found {magic}"
        )));
    }
    let count = read_be_u32(&images, 4, "image count")? as usize;
    let rows = read_be_u32(&images, 8, "row count")? as usize;
    let cols = read_be_u32(&images, 12, "column count")? as usize;
    let d = rows * cols;
    if d == 0 {
        return Err(Error::format("image dimensions must be positive"));
    }
    let need = 16 + count * d;
    if images.len() < need {
        return Err(Error::format(format!(
            "truncated images file: need {need} bytes, found {} (offset {})",
            images.len(),
            images.len()
        )));
    }

    let lmagic = read_be_u32(&labels, 0, "labels magic")?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(Error::format(format!(
            "bad labels magic at offset 0: expected {IDX_LABELS_MAGIC}, found {lmagic}"
        )));
    }
    let lcount = read_be_u32(&labels, 4, "label count")? as usize;
    if lcount != count {
        return Err(Error::format(format!(
            "count mismatch: {count} images but {lcount} labels"
        )));
    }
    if labels.len() < 8 + count {
        return Err(Error::format(format!(
            "truncated labels file: need {} bytes, found {} (offset {})",
            8 + count,
            labels.len(),
            labels.len()
        )));
    }

    let mut instances = Vec::with_capacity(count);
    for i in 0..count {
        let start = 16 + i * d;
        let pixels = images[start..start + d]
            .iter()
            .map(|&b| b as f64)
            .collect::<Vec<_>>();
        instances.push(LabeledInstance::new(pixels, labels[8 + i] as f64));
    }
    let mut ds = Dataset::new(instances)?;
    ds.pixel_range = true;
    Ok(ds)
}

/// Loads a numeric CSV: optional header row, comma separation, '.' decimal,
/// last column is the target.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut instances = Vec::new();
    let mut d = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.trim().parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if lineno == 0 => continue, // header row
            Err(e) => {
                return Err(Error::format(format!(
                    "line {}: unparseable numeric field ({e})",
                    lineno + 1
                )))
            }
        };
        if values.len() < 2 {
            return Err(Error::format(format!(
                "line {}: need at least one attribute column plus the target",
                lineno + 1
            )));
        }
        match d {
            None => d = Some(values.len()),
            Some(expect) if values.len() != expect => {
                return Err(Error::format(format!(
                    "line {}: {} columns but expected {expect}",
                    lineno + 1,
                    values.len()
                )))
            }
            _ => {}
        }
        let (attrs, target) = values.split_at(values.len() - 1);
        instances.push(LabeledInstance::new(attrs.to_vec(), target[0]));
    }
    Dataset::new(instances)
}

/// Keeps only instances labeled `pos_digit` (target becomes +1) or
/// `neg_digit` (target becomes -1), preserving order.
pub fn make_binary_task(ds: &Dataset, pos_digit: u8, neg_digit: u8) -> Result<Dataset> {
    if pos_digit > 9 || neg_digit > 9 {
        return Err(Error::config("digits must be in 0..=9"));
    }
    if pos_digit == neg_digit {
        return Err(Error::config("positive and negative digits must differ"));
    }
    let mut instances = Vec::new();
    for inst in ds.instances() {
        let label = inst.target();
        if label == pos_digit as f64 {
            instances.push(LabeledInstance::new(inst.attributes().to_vec(), 1.0));
        } else if label == neg_digit as f64 {
            instances.push(LabeledInstance::new(inst.attributes().to_vec(), -1.0));
        }
    }
    if instances.is_empty() {
        return Err(Error::config(format!(
            "no instances labeled {pos_digit} or {neg_digit}"
        )));
    }
    let mut out = Dataset::new(instances)?;
    out.pixel_range = ds.pixel_range;
    Ok(out)
}

/// Rescales attributes so the target norm certificate holds, using one
/// global scale so the linear structure across instances is preserved.
/// Max-norm normalization of pixel data divides by 255; otherwise the scale
/// is the largest instance norm. Re-normalizing to an already certified
/// target is a no-op.
pub fn normalize(ds: &Dataset, target: NormCertificate) -> Result<Dataset> {
    if target == NormCertificate::None {
        return Err(Error::config("cannot normalize to the empty certificate"));
    }
    if ds.norm_certificate == target {
        return Ok(ds.clone());
    }
    let scale = match target {
        NormCertificate::Linf if ds.pixel_range => 255.0,
        NormCertificate::Linf => ds
            .instances
            .iter()
            .fold(0.0f64, |m, i| m.max(linf_norm(i.attributes()))),
        NormCertificate::L2 => ds
            .instances
            .iter()
            .fold(0.0f64, |m, i| m.max(l2_norm(i.attributes()))),
        NormCertificate::None => unreachable!(),
    };
    if scale == 0.0 {
        return Err(Error::config(
            "cannot normalize an all-zero dataset (no attribute mass)",
        ));
    }
    let instances = ds
        .instances
        .iter()
        .map(|inst| {
            let scaled = inst.attributes().iter().map(|x| x / scale).collect();
            LabeledInstance::new(scaled, inst.target())
        })
        .collect::<Vec<_>>();
    let out = Dataset::new(instances)?.with_certificate(target);
    out.verify_certificate()?;
    Ok(out)
}

/// A seeded assignment of instances to cross-validation folds; fold sizes
/// differ by at most one.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    fold_count: usize,
    assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn fold_count(&self) -> usize {
        self.fold_count
    }

    pub fn fold_of(&self, instance: usize) -> usize {
        self.assignment[instance]
    }

    /// Indices outside and inside the given validation fold.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut valid = Vec::new();
        for (i, &f) in self.assignment.iter().enumerate() {
            if f == fold {
                valid.push(i);
            } else {
                train.push(i);
            }
        }
        (train, valid)
    }
}

pub fn kfold(ds: &Dataset, folds: usize, seed: u64) -> Result<FoldPlan> {
    if folds < 2 {
        return Err(Error::config("need at least 2 folds"));
    }
    if folds > ds.len() {
        return Err(Error::config(format!(
            "{folds} folds requested but dataset has only {} instances",
            ds.len()
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0usize; ds.len()];
    for (position, &instance) in order.iter().enumerate() {
        assignment[instance] = position % folds;
    }
    Ok(FoldPlan {
        fold_count: folds,
        assignment,
    })
}

/// Seeded random split into train and test parts.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config("train fraction must lie strictly in (0, 1)"));
    }
    if ds.len() < 2 {
        return Err(Error::config("need at least 2 instances to split"));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ds.len() as f64 * train_fraction).round() as usize).clamp(1, ds.len() - 1);
    let train = ds.subset(&order[..n_train])?;
    let test = ds.subset(&order[n_train..])?;
    Ok((train, test))
}

/// Generates a linear task: a `sparsity`-sparse unit-norm ground truth,
/// instances on the unit ball (2-norm target) or unit cube (max-norm
/// target), and targets w*.x plus Gaussian noise, clamped to [-1, 1].
/// Returns the dataset (certified for the target norm) and w*.
pub fn synth_linear(
    d: usize,
    m: usize,
    sparsity: usize,
    noise_sd: f64,
    norm_target: NormCertificate,
    seed: u64,
) -> Result<(Dataset, Vec<f64>)> {
    if d < 1 || m < 1 {
        return Err(Error::config("d and m must be at least 1"));
    }
    if sparsity < 1 || sparsity > d {
        return Err(Error::config("sparsity must lie in 1..=d"));
    }
    if noise_sd < 0.0 {
        return Err(Error::config("noise standard deviation must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();

    let mut support: Vec<usize> = (0..d).collect();
    support.shuffle(&mut rng);
    support.truncate(sparsity);
    let mut w_star = vec![0.0; d];
    for &i in &support {
        let mut v = normal.sample(&mut rng);
        if v == 0.0 {
            v = 1.0;
        }
        w_star[i] = v;
    }
    // Scale the ground truth to the dual-feasible unit ball of the task.
    let scale = match norm_target {
        NormCertificate::L2 => l2_norm(&w_star),
        NormCertificate::Linf => w_star.iter().map(|x| x.abs()).sum::<f64>(),
        NormCertificate::None => return Err(Error::config("norm target required")),
    };
    for v in w_star.iter_mut() {
        *v /= scale;
    }

    let mut instances = Vec::with_capacity(m);
    for _ in 0..m {
        let x = match norm_target {
            NormCertificate::L2 => {
                let mut g: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
                let norm = l2_norm(&g);
                let radius: f64 = rng.random::<f64>().powf(1.0 / d as f64);
                if norm > 0.0 {
                    for v in g.iter_mut() {
                        *v *= radius / norm;
                    }
                }
                g
            }
            NormCertificate::Linf => (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect(),
            NormCertificate::None => unreachable!(),
        };
        let mut y = dot(&w_star, &x);
        if noise_sd > 0.0 {
            y += noise_sd * normal.sample(&mut rng);
        }
        instances.push(LabeledInstance::new(x, y.clamp(-1.0, 1.0)));
    }
    let ds = Dataset::new(instances)?.with_certificate(norm_target);
    ds.verify_certificate()?;
    Ok((ds, w_star))
}

/// The hard single-coordinate distribution: a hidden support of size
/// ceil(1/eps^2) with Rademacher signs; every example is (r_i * e_i, 1) for
/// a uniformly random support index. The planted regressor
/// w* = sum_{i in T} eps * r_i * e_i has squared-loss risk (1 - eps)^2 / 2.
#[derive(Debug, Clone)]
pub struct HardInstance {
    d: usize,
    support: Vec<usize>,
    signs: Vec<f64>,
    w_star: Vec<f64>,
    epsilon: f64,
}

impl HardInstance {
    pub fn new(d: usize, epsilon: f64, seed: u64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::config("epsilon must lie in (0, 1]"));
        }
        let size = (1.0 / (epsilon * epsilon)).ceil() as usize;
        if size > d {
            return Err(Error::config(format!(
                "support size ceil(1/eps^2) = {size} exceeds dimension {d}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut indices: Vec<usize> = (0..d).collect();
        indices.shuffle(&mut rng);
        indices.truncate(size);
        let signs: Vec<f64> = (0..size)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let mut w_star = vec![0.0; d];
        for (&i, &r) in indices.iter().zip(&signs) {
            w_star[i] = epsilon * r;
        }
        Ok(HardInstance {
            d,
            support: indices,
            signs,
            w_star,
            epsilon,
        })
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Draws `m` examples from the distribution.
    pub fn sample(&self, m: usize, seed: u64) -> Result<Dataset> {
        if m < 1 {
            return Err(Error::config("m must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut instances = Vec::with_capacity(m);
        for _ in 0..m {
            let pick = rng.random_range(0..self.support.len());
            let mut x = vec![0.0; self.d];
            x[self.support[pick]] = self.signs[pick];
            instances.push(LabeledInstance::new(x, 1.0));
        }
        let ds = Dataset::new(instances)?.with_certificate(NormCertificate::L2);
        ds.verify_certificate()?;
        Ok(ds)
    }
}

const IMAGE_SIDE: usize = 28;

/// Synthetic stand-in for a two-digit image task: 28x28 "images" built from
/// two class-specific blob templates plus pixel noise, labels in {-1, +1},
/// pixel values in [0, 255]. Deterministic in the seed.
pub fn synth_image_task(m: usize, seed: u64) -> Result<Dataset> {
    if m < 2 {
        return Err(Error::config("need at least 2 instances"));
    }
    let d = IMAGE_SIDE * IMAGE_SIDE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Three blobs per class, drawn once per dataset.
    let mut template = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut t = vec![0.0f64; d];
        for _ in 0..3 {
            let cr = rng.random_range(6.0..22.0);
            let cc = rng.random_range(6.0..22.0);
            let spread = rng.random_range(2.0..4.0);
            for r in 0..IMAGE_SIDE {
                for c in 0..IMAGE_SIDE {
                    let dr = r as f64 - cr;
                    let dc = c as f64 - cc;
                    t[r * IMAGE_SIDE + c] +=
                        190.0 * (-(dr * dr + dc * dc) / (2.0 * spread * spread)).exp();
                }
            }
        }
        t
    };
    let proto_pos = template(&mut rng);
    let proto_neg = template(&mut rng);

    let mut instances = Vec::with_capacity(m);
    for i in 0..m {
        let positive = i % 2 == 0;
        let proto = if positive { &proto_pos } else { &proto_neg };
        let intensity = rng.random_range(0.85..1.15);
        let pixels = proto
            .iter()
            .map(|&p| (p * intensity + rng.random_range(0.0..30.0)).clamp(0.0, 255.0))
            .collect::<Vec<_>>();
        instances.push(LabeledInstance::new(pixels, if positive { 1.0 } else { -1.0 }));
    }
    let mut ds = Dataset::new(instances)?;
    ds.pixel_range = true;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothing::LossSpec;

    #[test]
    fn binary_task_filters_and_relabels() {
        let ds = Dataset::new(vec![
            LabeledInstance::new(vec![1.0], 3.0),
            LabeledInstance::new(vec![2.0], 5.0),
            LabeledInstance::new(vec![3.0], 7.0),
        ])
        .unwrap();
        let task = make_binary_task(&ds, 5, 3).unwrap();
        assert_eq!(task.len(), 2);
        assert_eq!(task.get(0).target(), -1.0);
        assert_eq!(task.get(1).target(), 1.0);
        assert!(make_binary_task(&ds, 3, 3).is_err());
    }

    #[test]
    fn normalize_l2_scales_by_max_instance_norm() {
        let ds = Dataset::new(vec![LabeledInstance::new(vec![3.0, 4.0], 1.0)]).unwrap();
        let out = normalize(&ds, NormCertificate::L2).unwrap();
        assert!((out.get(0).attributes()[0] - 0.6).abs() < 1e-15);
        assert!((out.get(0).attributes()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn normalize_pixel_data_uses_255() {
        let mut ds = Dataset::new(vec![LabeledInstance::new(vec![255.0, 51.0], 1.0)]).unwrap();
        ds.pixel_range = true;
        let out = normalize(&ds, NormCertificate::Linf).unwrap();
        assert_eq!(out.get(0).attributes()[0], 1.0);
        assert_eq!(out.get(0).attributes()[1], 0.2);
    }

    #[test]
    fn normalize_is_idempotent() {
        let ds = Dataset::new(vec![
            LabeledInstance::new(vec![3.0, 4.0], 1.0),
            LabeledInstance::new(vec![0.1, 0.2], -1.0),
        ])
        .unwrap();
        let once = normalize(&ds, NormCertificate::L2).unwrap();
        let twice = normalize(&once, NormCertificate::L2).unwrap();
        for (a, b) in once.instances().iter().zip(twice.instances()) {
            for (x, y) in a.attributes().iter().zip(b.attributes()) {
                assert!((x - y).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn normalize_rejects_zero_dataset() {
        let ds = Dataset::new(vec![LabeledInstance::new(vec![0.0, 0.0], 1.0)]).unwrap();
        assert!(normalize(&ds, NormCertificate::L2).is_err());
    }

    #[test]
    fn kfold_sizes_differ_by_at_most_one() {
        let instances = (0..103)
            .map(|i| LabeledInstance::new(vec![i as f64], 0.0))
            .collect();
        let ds = Dataset::new(instances).unwrap();
        let plan = kfold(&ds, 10, 9).unwrap();
        let mut sizes = vec![0usize; 10];
        for i in 0..ds.len() {
            sizes[plan.fold_of(i)] += 1;
        }
        sizes.sort();
        assert_eq!(&sizes[..7], &[10; 7]);
        assert_eq!(&sizes[7..], &[11; 3]);
    }

    #[test]
    fn kfold_with_equal_sizes_and_determinism() {
        let instances = (0..10)
            .map(|i| LabeledInstance::new(vec![i as f64], 0.0))
            .collect::<Vec<_>>();
        let ds = Dataset::new(instances).unwrap();
        let a = kfold(&ds, 10, 3).unwrap();
        let b = kfold(&ds, 10, 3).unwrap();
        for i in 0..10 {
            assert_eq!(a.fold_of(i), b.fold_of(i));
        }
        let mut sizes = vec![0usize; 10];
        for i in 0..10 {
            sizes[a.fold_of(i)] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 1));
        assert!(kfold(&ds, 11, 0).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let instances = (0..20)
            .map(|i| LabeledInstance::new(vec![i as f64], 0.0))
            .collect::<Vec<_>>();
        let ds = Dataset::new(instances).unwrap();
        let (tr1, te1) = split(&ds, 0.8, 5).unwrap();
        let (tr2, te2) = split(&ds, 0.8, 5).unwrap();
        assert_eq!(tr1.len(), 16);
        assert_eq!(te1.len(), 4);
        for i in 0..tr1.len() {
            assert_eq!(tr1.get(i).attributes(), tr2.get(i).attributes());
        }
        for i in 0..te1.len() {
            assert_eq!(te1.get(i).attributes(), te2.get(i).attributes());
        }
    }

    #[test]
    fn synth_linear_noise_free_is_exact_at_d1() {
        let (ds, w_star) = synth_linear(1, 50, 1, 0.0, NormCertificate::L2, 4).unwrap();
        for inst in ds.instances() {
            assert!((inst.target() - w_star[0] * inst.attributes()[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn synth_linear_is_deterministic() {
        let (a, wa) = synth_linear(5, 20, 3, 0.1, NormCertificate::Linf, 11).unwrap();
        let (b, wb) = synth_linear(5, 20, 3, 0.1, NormCertificate::Linf, 11).unwrap();
        assert_eq!(wa, wb);
        for i in 0..a.len() {
            assert_eq!(a.get(i).attributes(), b.get(i).attributes());
            assert_eq!(a.get(i).target(), b.get(i).target());
        }
    }

    #[test]
    fn synth_linear_ground_truth_risk_is_near_noise_floor() {
        let noise = 0.05;
        let (ds, w_star) = synth_linear(6, 4000, 3, noise, NormCertificate::L2, 8).unwrap();
        let risk = crate::learners::evaluate(&w_star, &ds, &LossSpec::Squared).unwrap();
        // Bayes risk is noise^2/2 up to clamping slack and sampling error.
        assert!(risk <= 0.5 * noise * noise * 1.2 + 1e-4, "risk {risk}");
    }

    #[test]
    fn hard_instance_examples_are_signed_singletons() {
        let hard = HardInstance::new(50, 0.3, 2).unwrap();
        assert_eq!(hard.support().len(), 12); // ceil(1/0.09)
        let ds = hard.sample(200, 3).unwrap();
        for inst in ds.instances() {
            let nonzero: Vec<f64> = inst
                .attributes()
                .iter()
                .copied()
                .filter(|v| *v != 0.0)
                .collect();
            assert_eq!(nonzero.len(), 1);
            assert!(nonzero[0] == 1.0 || nonzero[0] == -1.0);
            assert_eq!(inst.target(), 1.0);
        }
    }

    #[test]
    fn hard_instance_planted_risk() {
        let eps = 0.25;
        let hard = HardInstance::new(64, eps, 5).unwrap();
        let ds = hard.sample(4000, 6).unwrap();
        let risk = crate::learners::evaluate(hard.w_star(), &ds, &LossSpec::Squared).unwrap();
        let expected = 0.5 * (1.0 - eps) * (1.0 - eps);
        // The per-example loss is deterministic here, so no sampling error.
        assert!((risk - expected).abs() < 1e-12, "risk {risk} vs {expected}");
    }

    #[test]
    fn hard_instance_degenerate_epsilon() {
        let hard = HardInstance::new(8, 1.0, 7).unwrap();
        assert_eq!(hard.support().len(), 1);
        let ds = hard.sample(50, 8).unwrap();
        let risk = crate::learners::evaluate(hard.w_star(), &ds, &LossSpec::Squared).unwrap();
        assert_eq!(risk, 0.0);
        assert!(HardInstance::new(3, 0.1, 0).is_err());
    }

    #[test]
    fn image_task_shape_and_labels() {
        let ds = synth_image_task(40, 1).unwrap();
        assert_eq!(ds.dim(), 784);
        assert!(ds
            .instances()
            .iter()
            .all(|i| i.target() == 1.0 || i.target() == -1.0));
        assert!(ds
            .instances()
            .iter()
            .all(|i| i.attributes().iter().all(|&p| (0.0..=255.0).contains(&p))));
        let norm = normalize(&ds, NormCertificate::Linf).unwrap();
        norm.verify_certificate().unwrap();
    }
}
