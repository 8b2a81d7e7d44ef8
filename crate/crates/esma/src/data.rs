//! Labeled point sets and the synthetic Gaussian-mixture source.
//!
//! The toy experiments all run on small mixtures of full-covariance
//! Gaussians. [`gen_gaussian_mixture`] draws a seeded [`LabeledDataset`] and
//! [`bayes_posterior`] evaluates the exact mixture posterior, which is the
//! minimum-error-rate reference classifier for that data.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Points in `R^d` with integer class labels in `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    points: Vec<Vec<f64>>,
    labels: Vec<usize>,
    dim: usize,
    n_classes: usize,
}

impl LabeledDataset {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("empty dataset".to_string()));
        }
        if points.len() != labels.len() {
            return Err(Error::InvalidInput(
                "points/labels length mismatch".to_string(),
            ));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::InvalidInput("zero-dimensional points".to_string()));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::InvalidInput("ragged points".to_string()));
            }
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidInput("non-finite point".to_string()));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Self {
            points,
            labels,
            dim,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Indices of the samples of one class, in dataset order.
    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }

    /// Sub-dataset by index list (copies).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let points = indices.iter().map(|&i| self.points[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(points, labels, self.n_classes)
    }

    /// Writes `label,x0,..,x{d-1}` rows. Floats use the shortest decimal
    /// form that round-trips, so save -> load is exact.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(file, "label")?;
        for j in 0..self.dim {
            write!(file, ",x{j}")?;
        }
        writeln!(file)?;
        for (p, y) in self.points.iter().zip(&self.labels) {
            write!(file, "{y}")?;
            for v in p {
                write!(file, ",{v}")?;
            }
            writeln!(file)?;
        }
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = BufReader::new(std::fs::File::open(path)?);
        let mut lines = file.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty dataset file".to_string()))??;
        let dim = header.split(',').count().saturating_sub(1);
        if dim == 0 {
            return Err(Error::Format("dataset header has no feature columns".to_string()));
        }
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let label: usize = fields
                .next()
                .unwrap()
                .parse()
                .map_err(|e| Error::Format(format!("bad label: {e}")))?;
            let point: Vec<f64> = fields
                .map(|f| f.parse().map_err(|e| Error::Format(format!("bad value: {e}"))))
                .collect::<Result<_>>()?;
            if point.len() != dim {
                return Err(Error::Format("row width does not match header".to_string()));
            }
            labels.push(label);
            points.push(point);
        }
        let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
        Self::new(points, labels, n_classes)
    }
}

/// One mixture component: mean, full covariance, and mixing weight.
#[derive(Debug, Clone)]
pub struct GaussianClass {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub prior: f64,
}

/// A Gaussian mixture to sample labeled data from.
#[derive(Debug, Clone)]
pub struct GaussianMixtureSpec {
    pub classes: Vec<GaussianClass>,
    pub n_samples: usize,
    pub seed: u64,
}

impl GaussianMixtureSpec {
    /// The overlapping two-Gaussian default: means `(-1.5, 0)` and
    /// `(+1.5, 0)`, identity covariance, equal priors, 200 samples.
    pub fn two_gaussians(n_samples: usize, seed: u64) -> Self {
        let identity = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        Self {
            classes: vec![
                GaussianClass {
                    mean: vec![-1.5, 0.0],
                    covariance: identity.clone(),
                    prior: 0.5,
                },
                GaussianClass {
                    mean: vec![1.5, 0.0],
                    covariance: identity,
                    prior: 0.5,
                },
            ],
            n_samples,
            seed,
        }
    }

    /// Three equally weighted populations arranged around the origin.
    pub fn three_gaussians(n_samples: usize, seed: u64) -> Self {
        let identity = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let means = [[-2.0, -1.0], [2.0, -1.0], [0.0, 2.0]];
        Self {
            classes: means
                .iter()
                .map(|m| GaussianClass {
                    mean: m.to_vec(),
                    covariance: identity.clone(),
                    prior: 1.0 / 3.0,
                })
                .collect(),
            n_samples,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.classes.first().map_or(0, |c| c.mean.len())
    }

    fn validate(&self) -> Result<Vec<Cholesky>> {
        if self.classes.is_empty() {
            return Err(Error::InvalidConfig("mixture has no classes".to_string()));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("n_samples must be >= 1".to_string()));
        }
        let d = self.dim();
        let prior_sum: f64 = self.classes.iter().map(|c| c.prior).sum();
        if (prior_sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "priors sum to {prior_sum}, expected 1"
            )));
        }
        let mut factors = Vec::with_capacity(self.classes.len());
        for (k, class) in self.classes.iter().enumerate() {
            if class.mean.len() != d {
                return Err(Error::InvalidConfig("mixed mean dimensions".to_string()));
            }
            if class.prior < 0.0 {
                return Err(Error::InvalidConfig("negative prior".to_string()));
            }
            let chol = Cholesky::new(&class.covariance).map_err(|e| {
                Error::InvalidConfig(format!("class {k} covariance not usable: {e}"))
            })?;
            if chol.det() < 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "class {k} covariance is near singular (det < 1e-12)"
                )));
            }
            factors.push(chol);
        }
        Ok(factors)
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
struct Cholesky {
    l: Vec<Vec<f64>>,
}

impl Cholesky {
    fn new(matrix: &[Vec<f64>]) -> std::result::Result<Self, String> {
        let d = matrix.len();
        if d == 0 {
            return Err("empty matrix".to_string());
        }
        for row in matrix {
            if row.len() != d {
                return Err("matrix not square".to_string());
            }
        }
        for i in 0..d {
            for j in 0..i {
                if (matrix[i][j] - matrix[j][i]).abs() > 1e-9 {
                    return Err("matrix not symmetric".to_string());
                }
            }
        }
        let mut l = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..=i {
                let mut sum = matrix[i][j];
                for k in 0..j {
                    sum -= l[i][k] * l[j][k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err("matrix not positive definite".to_string());
                    }
                    l[i][j] = sum.sqrt();
                } else {
                    l[i][j] = sum / l[j][j];
                }
            }
        }
        Ok(Self { l })
    }

    fn dim(&self) -> usize {
        self.l.len()
    }

    /// det(Sigma) = prod(L_ii)^2
    fn det(&self) -> f64 {
        let p: f64 = (0..self.dim()).map(|i| self.l[i][i]).product();
        p * p
    }

    /// x = mean + L z for z ~ N(0, I).
    fn sample<R: Rng>(&self, mean: &[f64], rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        (0..d)
            .map(|i| mean[i] + (0..=i).map(|k| self.l[i][k] * z[k]).sum::<f64>())
            .collect()
    }

    /// Solves L v = b by forward substitution; `|v|^2` is the Mahalanobis
    /// quadratic form.
    fn mahalanobis_sq(&self, mean: &[f64], x: &[f64]) -> f64 {
        let d = self.dim();
        let mut v = vec![0.0; d];
        for i in 0..d {
            let mut sum = x[i] - mean[i];
            for k in 0..i {
                sum -= self.l[i][k] * v[k];
            }
            v[i] = sum / self.l[i][i];
        }
        v.iter().map(|t| t * t).sum()
    }

    fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[i][i].ln()).sum::<f64>()
    }
}

/// Draws a seeded labeled dataset: labels from the priors, points from the
/// class Gaussians.
pub fn gen_gaussian_mixture(spec: &GaussianMixtureSpec) -> Result<LabeledDataset> {
    let factors = spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let mut points = Vec::with_capacity(spec.n_samples);
    let mut labels = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut label = spec.classes.len() - 1;
        for (k, class) in spec.classes.iter().enumerate() {
            acc += class.prior;
            if u < acc {
                label = k;
                break;
            }
        }
        points.push(factors[label].sample(&spec.classes[label].mean, &mut rng));
        labels.push(label);
    }
    LabeledDataset::new(points, labels, spec.classes.len())
}

/// Exact per-class posterior `P(y = k | x)` under the mixture.
pub fn bayes_posterior(spec: &GaussianMixtureSpec, x: &[f64]) -> Result<Vec<f64>> {
    let factors = spec.validate()?;
    let d = spec.dim();
    if x.len() != d {
        return Err(Error::InvalidInput(format!(
            "point has dim {}, mixture has dim {d}",
            x.len()
        )));
    }
    // log(prior_k) + log N(x; mu_k, Sigma_k), normalized with
    // max-subtraction.
    let log_terms: Vec<f64> = spec
        .classes
        .iter()
        .zip(&factors)
        .map(|(class, chol)| {
            let quad = chol.mahalanobis_sq(&class.mean, x);
            class.prior.ln()
                - 0.5 * (quad + chol.log_det() + d as f64 * (2.0 * std::f64::consts::PI).ln())
        })
        .collect();
    let max = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = log_terms.iter().map(|t| (t - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    Ok(unnorm.into_iter().map(|u| u / total).collect())
}

/// Argmax class of the Bayes posterior; ties go to the lowest index.
pub fn bayes_predict(spec: &GaussianMixtureSpec, x: &[f64]) -> Result<usize> {
    let post = bayes_posterior(spec, x)?;
    Ok(crate::stats::argmax(&post))
}
