//! Model generators used by tests, batteries and experiment configs.

use rand::Rng as _;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hard::{ci_pair_build, DzFamily};
use crate::model::{CondIndepModel, DiscreteJoint, Model};
use crate::rng::{self, Rng};

/// Uniform draw from the `(k-1)`-simplex (flat Dirichlet).
pub fn random_simplex(k: usize, rng: &mut Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Flat-Dirichlet joint table over `m^n` signals and `k` outcomes.
pub fn random_joint(n: usize, m: usize, k: usize, rng: &mut Rng) -> Result<DiscreteJoint> {
    let cells = m.pow(n as u32) * k;
    DiscreteJoint::build(n, vec![m; n], k, random_simplex(cells, rng))
}

/// Random conditionally independent model; for `k = 2` the prior `p` is
/// drawn uniformly from `p_range`.
pub fn random_cond_indep(n: usize, m: usize, k: usize, p_range: (f64, f64), rng: &mut Rng) -> Result<CondIndepModel> {
    let prior = if k == 2 {
        let p = rng.random_range(p_range.0..=p_range.1);
        vec![1.0 - p, p]
    } else {
        random_simplex(k, rng)
    };
    let cond = (0..n).map(|_| (0..k).map(|_| random_simplex(m, rng)).collect()).collect();
    CondIndepModel::build(prior, cond)
}

/// Every signal carries no information; every report equals the prior.
pub fn uninformative(n: usize, m: usize, p: f64) -> Result<CondIndepModel> {
    let row = vec![1.0 / m as f64; m];
    CondIndepModel::build(vec![1.0 - p, p], vec![vec![row.clone(), row]; n])
}

/// Two uniform bits with `w = s_1 xor s_2`.
pub fn xor() -> Result<DiscreteJoint> {
    let mut prob = Vec::with_capacity(8);
    for s1 in 0..2 {
        for s2 in 0..2 {
            let w = s1 ^ s2;
            prob.extend((0..2).map(|o| if o == w { 0.25 } else { 0.0 }));
        }
    }
    DiscreteJoint::build(2, vec![2, 2], 2, prob)
}

/// Binary signals with `P(s = 1 | w = 1) = P(s = 0 | w = 0) = q`.
pub fn symmetric_binary(n: usize, q: f64, p: f64) -> Result<CondIndepModel> {
    CondIndepModel::build(vec![1.0 - p, p], vec![vec![vec![q, 1.0 - q], vec![1.0 - q, q]]; n])
}

/// Binary signals whose likelihood ratios are exactly `1 + gamma` and
/// `1 / (1 + gamma)`.
pub fn weak_binary(n: usize, gamma: f64, p: f64) -> Result<CondIndepModel> {
    let hi = (1.0 + gamma) / (2.0 + gamma);
    symmetric_binary(n, hi, p)
}

/// Named generator with parameters, as used in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum GeneratorSpec {
    RandomJoint {
        n: usize,
        m: usize,
        #[serde(default = "two")]
        k: usize,
    },
    RandomCondIndep {
        n: usize,
        m: usize,
        #[serde(default = "two")]
        k: usize,
        #[serde(default = "default_p_range")]
        p_range: (f64, f64),
    },
    Uninformative {
        n: usize,
        m: usize,
        p: f64,
    },
    Xor,
    Symmetric {
        n: usize,
        q: f64,
        #[serde(default = "half")]
        p: f64,
    },
    Weak {
        n: usize,
        gamma: f64,
        #[serde(default = "half")]
        p: f64,
    },
    /// One member (`which` = 1 or 2) of the CiPair.
    CiPair {
        n: usize,
        eps: f64,
        which: usize,
    },
    /// `P_D` instance of a random member of the `D_z` family.
    Dz {
        m: usize,
        n: usize,
        eps: f64,
    },
}

fn two() -> usize {
    2
}

fn half() -> f64 {
    0.5
}

fn default_p_range() -> (f64, f64) {
    (0.1, 0.9)
}

impl GeneratorSpec {
    /// Builds the model; random generators draw from the `"generate"`
    /// substream of `seed`.
    pub fn build(&self, seed: u64) -> Result<Model> {
        let mut rng = rng::substream(seed, "generate", 0);
        Ok(match *self {
            Self::RandomJoint { n, m, k } => random_joint(n, m, k, &mut rng)?.into(),
            Self::RandomCondIndep { n, m, k, p_range } => {
                if !(0.0 < p_range.0 && p_range.0 <= p_range.1 && p_range.1 < 1.0) {
                    return Err(Error::InvalidParameter(format!("p_range {p_range:?}")));
                }
                random_cond_indep(n, m, k, p_range, &mut rng)?.into()
            }
            Self::Uninformative { n, m, p } => uninformative(n, m, p)?.into(),
            Self::Xor => xor()?.into(),
            Self::Symmetric { n, q, p } => symmetric_binary(n, q, p)?.into(),
            Self::Weak { n, gamma, p } => weak_binary(n, gamma, p)?.into(),
            Self::CiPair { n, eps, which } => {
                if which != 1 && which != 2 {
                    return Err(Error::InvalidParameter(format!("which = {which}, expected 1 or 2")));
                }
                ci_pair_build(n, eps)?.models[which - 1].clone().into()
            }
            Self::Dz { m, n, eps } => {
                let fam = DzFamily::new(m, n, eps)?;
                let z = fam.random_z(&mut rng);
                fam.to_aggregation_instance(&z)?.into()
            }
        })
    }
}
