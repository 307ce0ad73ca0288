//! Classical (q = 1) sampling of `W_j = A_j′X_j′B_jX_jA_j` families.
//!
//! Streams come from xoshiro256++ seeded through SplitMix64; partition `k`
//! uses the seeded state advanced by `k` jumps of 2¹²⁸ steps. Normals are
//! Box–Muller pairs built from uniforms on `(0, 1]`.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde_json::{json, Value};
use thiserror::Error;

use crate::linalg::{check_spd, jacobi_eigen, LinalgError, Matrix};
use crate::moments::{
    real_wishart_moment, ColorMatrices, EngineOptions, MatrixBindings, MomentError, MonomialSpec, ScaleBinding,
    ShapeBinding,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub seed: u64,
    pub samples: usize,
    pub colors: Vec<ColorMatrices<f64>>,
    /// Independent sample streams; the estimate depends on this count.
    pub partitions: usize,
}

impl SamplerConfig {
    pub fn new(seed: u64, samples: usize, colors: Vec<ColorMatrices<f64>>) -> Result<Self, McError> {
        let cfg = SamplerConfig { seed, samples, colors, partitions: 1 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_partitions(mut self, partitions: usize) -> Result<Self, McError> {
        if partitions == 0 || partitions > self.samples {
            return Err(McError::InvalidConfig(format!("partitions must be in 1..={}", self.samples)));
        }
        self.partitions = partitions;
        Ok(self)
    }

    /// `B_j = I_{M_j}`, `Σ_j = I_N`.
    pub fn identity(seed: u64, samples: usize, shape_sizes: &[usize], n: usize) -> Result<Self, McError> {
        let colors = shape_sizes
            .iter()
            .map(|&m| ColorMatrices { b: Matrix::identity(m), sigma: Matrix::identity(n) })
            .collect();
        Self::new(seed, samples, colors)
    }

    pub fn color_count(&self) -> usize {
        self.colors.len()
    }

    fn validate(&self) -> Result<(), McError> {
        if self.samples < 2 {
            return Err(McError::InvalidConfig("samples must be at least 2".into()));
        }
        if self.colors.is_empty() {
            return Err(McError::InvalidConfig("no colors".into()));
        }
        let bindings = MatrixBindings::float(self.colors.clone());
        bindings.validate(self.colors.len())?;
        Ok(())
    }

    pub fn bindings(&self) -> MatrixBindings {
        MatrixBindings::float(self.colors.clone())
    }

    /// `{"seed": u64, "samples": n, "matrices": [{"B":…,"Sigma":…}, …], "partitions"?: k}`.
    pub fn from_json(v: &Value) -> Result<Self, McError> {
        let field = |k: &str| v.get(k).ok_or_else(|| McError::InvalidConfig(format!("missing field \"{k}\"")));
        let seed = field("seed")?.as_u64().ok_or_else(|| McError::InvalidConfig("seed must be a 64-bit unsigned integer".into()))?;
        let samples = field("samples")?
            .as_u64()
            .ok_or_else(|| McError::InvalidConfig("samples must be a positive integer".into()))? as usize;
        let bindings = MatrixBindings::from_json(field("matrices")?)?;
        let cfg = Self::new(seed, samples, float_colors(&bindings)?)?;
        match v.get("partitions") {
            None => Ok(cfg),
            Some(p) => cfg.with_partitions(
                p.as_u64().ok_or_else(|| McError::InvalidConfig("partitions must be a positive integer".into()))? as usize,
            ),
        }
    }
}

/// Per-color float matrices from concrete bindings.
pub fn float_colors(bindings: &MatrixBindings) -> Result<Vec<ColorMatrices<f64>>, McError> {
    let b: Vec<Matrix<f64>> = match &bindings.shape {
        ShapeBinding::Exact(b) => b.iter().map(Matrix::to_f64).collect(),
        ShapeBinding::Float(b) => b.clone(),
        _ => return Err(McError::InvalidConfig("sampling needs explicit B matrices".into())),
    };
    let s: Vec<Matrix<f64>> = match &bindings.scale {
        ScaleBinding::Exact(s) => s.iter().map(Matrix::to_f64).collect(),
        ScaleBinding::Float(s) => s.clone(),
        _ => return Err(McError::InvalidConfig("sampling needs explicit Sigma matrices".into())),
    };
    Ok(b.into_iter().zip(s).map(|(b, sigma)| ColorMatrices { b, sigma }).collect())
}

/// Symmetric positive definite root `A` with `A·A = Σ`.
pub fn symmetric_root(sigma: &Matrix<f64>) -> Result<Matrix<f64>, McError> {
    check_spd(sigma)?;
    let (eig, v) = jacobi_eigen(sigma)?;
    let n = sigma.rows();
    let mut a = Matrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let x: f64 = (0..n).map(|k| v.get(i, k) * eig[k].sqrt() * v.get(j, k)).sum();
            a.set(i, j, x);
            a.set(j, i, x);
        }
    }
    Ok(a)
}

/// Standard normal stream: Box–Muller on uniforms from `(0, 1]`.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

impl NormalStream {
    /// Stream for partition `partition` of the run seeded with `seed`.
    pub fn new(seed: u64, partition: usize) -> Self {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        for _ in 0..partition {
            rng.jump();
        }
        NormalStream { rng, spare: None }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.next_normal();
        }
    }
}

/// Precomputed roots for repeated sampling.
#[derive(Debug, Clone)]
pub struct Sampler {
    colors: Vec<ColorMatrices<f64>>,
    roots: Vec<Matrix<f64>>,
}

impl Sampler {
    pub fn new(config: &SamplerConfig) -> Result<Self, McError> {
        let roots = config.colors.iter().map(|c| symmetric_root(&c.sigma)).collect::<Result<_, _>>()?;
        Ok(Sampler { colors: config.colors.clone(), roots })
    }

    /// One draw of `W_1 … W_s` with independent Gaussian `X_j`.
    pub fn sample_family(&self, stream: &mut NormalStream) -> Vec<Matrix<f64>> {
        self.colors
            .iter()
            .zip(&self.roots)
            .map(|(c, a)| {
                let (m, n) = (c.b.rows(), c.sigma.rows());
                let mut x = vec![0.0; m * n];
                stream.fill(&mut x);
                let x = Matrix::from_vec(m, n, x).expect("sized above");
                let y = x.matmul(a).expect("X is M×N, A is N×N");
                let by = c.b.matmul(&y).expect("B is M×M");
                y.transpose().matmul(&by).expect("conformable")
            })
            .collect()
    }
}

/// `p_{σ,t}(W)` as the product of the cycle traces.
pub fn evaluate_monomial(spec: &MonomialSpec, w: &[Matrix<f64>]) -> f64 {
    spec.cycle_words()
        .iter()
        .map(|word| {
            let mut acc = w[word[0] - 1].clone();
            for &c in &word[1..] {
                acc = acc.matmul(&w[c - 1]).expect("all W_j are N×N");
            }
            acc.trace()
        })
        .product()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub exact: f64,
    pub z: f64,
}

impl EstimateReport {
    pub fn to_json(&self) -> Value {
        json!({ "mean": self.mean, "stderr": self.stderr, "samples": self.samples, "exact": self.exact, "z": self.z })
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let d = x - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        let count = self.count + other.count;
        let d = other.mean - self.mean;
        Moments {
            count,
            mean: self.mean + d * other.count / count,
            m2: self.m2 + other.m2 + d * d * self.count * other.count / count,
        }
    }
}

/// Sample mean and standard error of the monomial, against `real_wishart_moment`.
pub fn estimate_monomial(spec: &MonomialSpec, config: &SamplerConfig) -> Result<EstimateReport, McError> {
    if spec.colors() > config.color_count() {
        return Err(MomentError::MissingColor(config.color_count() + 1).into());
    }
    let exact = real_wishart_moment(spec, &config.bindings(), &EngineOptions::default())?
        .as_f64()
        .ok_or_else(|| McError::InvalidConfig("exact value is not numeric".into()))?;
    let sampler = Sampler::new(config)?;
    let k = config.partitions;
    let per = config.samples / k;
    let extra = config.samples % k;
    let run = |p: usize| {
        let mut stream = NormalStream::new(config.seed, p);
        let mut acc = Moments::default();
        for _ in 0..per + usize::from(p < extra) {
            acc.push(evaluate_monomial(spec, &sampler.sample_family(&mut stream)));
        }
        acc
    };
    let parts: Vec<Moments> = if k == 1 {
        vec![run(0)]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..k).map(|p| s.spawn(move || run(p))).collect();
            handles.into_iter().map(|h| h.join().expect("sampling worker panicked")).collect()
        })
    };
    let total = parts.into_iter().reduce(Moments::merge).expect("at least one partition");
    let var = total.m2 / (total.count - 1.0);
    let stderr = (var / total.count).sqrt();
    let z = if stderr > 0.0 {
        (total.mean - exact).abs() / stderr
    } else if total.mean == exact {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(EstimateReport { mean: total.mean, stderr, samples: config.samples, exact, z })
}
