//! Synthetic benchmark designs.
//!
//! The first `q` columns are equicorrelated normals (unit variance, pairwise
//! correlation 0.5) carrying the signal `beta = 1`; the remaining `p - q`
//! auxiliary columns are i.i.d. noise from the case's family and do not
//! enter the response. Errors are `N(0, noise_sd^2)`.
//!
//! | case | q (full scale) | auxiliary family |
//! |------|----------------|------------------|
//! | 1    | 10             | N(0, 1)          |
//! | 2    | 10             | LN(0, 1)         |
//! | 3    | 10             | t_2              |
//! | 4    | 25             | N(0, 1)          |
//! | 5    | 25             | LN(0, 1)         |
//! | 6    | 25             | t_2              |
//!
//! Row `i` is generated from its own ChaCha stream, so output is independent
//! of how rows are split across threads.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

const EQUICORRELATION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuxFamily {
    Normal,
    LogNormal,
    StudentT2,
}

/// One of the six simulation cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct SimCase(u8);

impl SimCase {
    pub fn new(id: u8) -> Result<Self> {
        if (1..=6).contains(&id) {
            Ok(SimCase(id))
        } else {
            Err(Error::InvalidArgument(format!("simulation case must be 1..6, got {id}")))
        }
    }

    pub fn all() -> impl Iterator<Item = SimCase> {
        (1..=6).map(SimCase)
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn family(self) -> AuxFamily {
        match (self.0 - 1) % 3 {
            0 => AuxFamily::Normal,
            1 => AuxFamily::LogNormal,
            _ => AuxFamily::StudentT2,
        }
    }

    /// Cases 4-6 use the larger informative block.
    pub fn has_large_signal(self) -> bool {
        self.0 >= 4
    }

    /// Informative dimension at the full n = 1e5, p = 50 scale.
    pub fn full_scale_q(self) -> usize {
        if self.has_large_signal() {
            25
        } else {
            10
        }
    }
}

impl TryFrom<u8> for SimCase {
    type Error = Error;
    fn try_from(id: u8) -> Result<Self> {
        SimCase::new(id)
    }
}

impl From<SimCase> for u8 {
    fn from(c: SimCase) -> u8 {
        c.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub case: SimCase,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SimConfig {
    /// Full-scale configuration: n = 1e5, p = 50, noise variance 9.
    pub fn full_scale(case: SimCase, seed: u64) -> Self {
        SimConfig {
            n: 100_000,
            p: 50,
            q: case.full_scale_q(),
            case,
            noise_sd: 3.0,
            seed,
        }
    }

    /// Reduced-size configuration; `q` is `q_small` for cases 1-3 and `q_large` for 4-6.
    pub fn scaled(case: SimCase, n: usize, p: usize, q_small: usize, q_large: usize, seed: u64) -> Self {
        SimConfig {
            n,
            p,
            q: if case.has_large_signal() { q_large } else { q_small },
            case,
            noise_sd: 3.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidArgument("n and p must be positive".into()));
        }
        if self.q == 0 || self.q > self.p {
            return Err(Error::InvalidArgument(format!(
                "informative dimension q = {} must lie in 1..=p (p = {})",
                self.q, self.p
            )));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::InvalidArgument("noise_sd must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    /// `q` ones followed by `p - q` zeros.
    pub beta_true: DVector<f64>,
    /// `Sigma_ij = 0.5^{1(i != j)}` over the informative block.
    pub sigma_informative: DMatrix<f64>,
}

impl SimTruth {
    fn new(p: usize, q: usize) -> Self {
        SimTruth {
            beta_true: DVector::from_fn(p, |j, _| if j < q { 1.0 } else { 0.0 }),
            sigma_informative: DMatrix::from_fn(q, q, |i, j| {
                if i == j {
                    1.0
                } else {
                    EQUICORRELATION
                }
            }),
        }
    }
}

fn aux_draw<R: Rng>(family: AuxFamily, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    match family {
        AuxFamily::Normal => z,
        AuxFamily::LogNormal => z.exp(),
        AuxFamily::StudentT2 => {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            z / ((a * a + b * b) / 2.0).sqrt()
        }
    }
}

/// Generate `(X, y)` and the truth. The data is not standardized here.
pub fn generate(cfg: &SimConfig) -> Result<(Dataset, SimTruth)> {
    cfg.validate()?;
    let (n, p, q) = (cfg.n, cfg.p, cfg.q);
    let family = cfg.case.family();
    // Equicorrelated normals: x_j = sqrt(rho) w + sqrt(1 - rho) z_j with a shared w.
    let shared = EQUICORRELATION.sqrt();
    let own = (1.0 - EQUICORRELATION).sqrt();

    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, i as u64);
            let w: f64 = rng.sample(StandardNormal);
            let mut row = Vec::with_capacity(p);
            for _ in 0..q {
                let z: f64 = rng.sample(StandardNormal);
                row.push(shared * w + own * z);
            }
            for _ in q..p {
                row.push(aux_draw(family, &mut rng));
            }
            let eps: f64 = rng.sample(StandardNormal);
            let y = row[..q].iter().sum::<f64>() + cfg.noise_sd * eps;
            (row, y)
        })
        .collect();

    let mut values = Vec::with_capacity(n * p);
    let mut ys = Vec::with_capacity(n);
    for (row, y) in rows {
        values.extend(row);
        ys.push(y);
    }
    let x = DMatrix::from_row_slice(n, p, &values);
    let d = Dataset::new(x, DVector::from_vec(ys))?;
    Ok((d, SimTruth::new(p, q)))
}
