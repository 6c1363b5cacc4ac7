//! Priority scores for unlabeled inputs. Higher scores mean the input is more
//! likely to reveal an error.

mod dsa;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

pub use dsa::{build_dsa_index, score_dsa, score_dsa_batch, DsaIndex, DsaMatch};

use crate::engine::{self, ForwardMode};
use crate::error::{Error, Result};
use crate::format::{Model, Task};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Softmax,
    DropoutCls,
    DropoutReg,
    Dsa,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Softmax => "softmax",
            Method::DropoutCls => "dropout_cls",
            Method::DropoutReg => "dropout_reg",
            Method::Dsa => "dsa",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(Method::Softmax),
            "dropout_cls" => Ok(Method::DropoutCls),
            "dropout_reg" => Ok(Method::DropoutReg),
            "dsa" => Ok(Method::Dsa),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRecord {
    pub input_index: u32,
    pub method: Method,
    /// Non-negative; `f64::INFINITY` marks a degenerate DSA query.
    pub score: f64,
}

/// Monte-Carlo dropout settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub samples: u32,
    pub global_seed: u64,
}

impl McConfig {
    pub fn new(samples: u32, global_seed: u64) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidArgument(
                "Monte-Carlo sample count must be at least 1".into(),
            ));
        }
        Ok(Self {
            samples,
            global_seed,
        })
    }
}

/// Shannon entropy (natural log) of a probability vector, with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::Probability("empty vector".into()));
    }
    if let Some(bad) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Probability(format!(
            "entry {bad} is not a probability"
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-4 {
        return Err(Error::Probability(format!("entries sum to {total}")));
    }
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    // rounding can leave -0.0 or a hair below zero on near one-hot inputs
    Ok(if h > 0.0 { h } else { 0.0 })
}

fn require(model: &Model, task: Task, what: &str) -> Result<()> {
    if model.task() != task {
        return Err(Error::Task(format!(
            "{what} requires a {} model",
            task.as_str()
        )));
    }
    Ok(())
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

/// Entropy of the deterministic softmax output.
pub fn score_softmax(model: &Model, input: &[f32], input_index: u32) -> Result<ScoreRecord> {
    require(model, Task::Classification, "softmax scoring")?;
    let probs = engine::forward_flat(model, input, ForwardMode::Deterministic)?;
    Ok(ScoreRecord {
        input_index,
        method: Method::Softmax,
        score: entropy(&widen(&probs))?,
    })
}

fn stochastic_outputs(
    model: &Model,
    input: &[f32],
    input_index: u32,
    mc: McConfig,
) -> Result<Vec<Vec<f32>>> {
    if mc.samples == 0 {
        return Err(Error::InvalidArgument(
            "Monte-Carlo sample count must be at least 1".into(),
        ));
    }
    if !model.has_dropout() {
        return Err(Error::NoDropout);
    }
    (0..mc.samples)
        .map(|t| {
            engine::forward_flat(
                model,
                input,
                ForwardMode::Stochastic {
                    global_seed: mc.global_seed,
                    input_index: u64::from(input_index),
                    sample_index: t,
                },
            )
        })
        .collect()
}

/// Element-wise mean in `f64`.
fn mean_vector(samples: &[Vec<f32>]) -> Vec<f64> {
    let mut mean = vec![0f64; samples[0].len()];
    for s in samples {
        for (m, &v) in mean.iter_mut().zip(s) {
            *m += f64::from(v);
        }
    }
    let t = samples.len() as f64;
    mean.iter_mut().for_each(|m| *m /= t);
    mean
}

/// Entropy of the mean of `T` stochastic softmax outputs.
pub fn score_dropout_cls(
    model: &Model,
    input: &[f32],
    input_index: u32,
    mc: McConfig,
) -> Result<ScoreRecord> {
    require(
        model,
        Task::Classification,
        "dropout classification scoring",
    )?;
    let samples = stochastic_outputs(model, input, input_index, mc)?;
    Ok(ScoreRecord {
        input_index,
        method: Method::DropoutCls,
        score: entropy(&mean_vector(&samples))?,
    })
}

/// Predictive variance `(1/T) Σ fᵀf − E(y)ᵀE(y)` over `T` stochastic outputs.
pub fn predictive_variance(samples: &[Vec<f32>]) -> Result<f64> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("no samples".into()))?;
    if samples.iter().any(|s| s.len() != first.len()) {
        return Err(Error::Dimension("samples differ in length".into()));
    }
    // Centered form of the same quantity: (1/T) Σ ||f − E(y)||². Identical
    // samples give exactly zero and the result cannot go negative.
    let mean = mean_vector(samples);
    let total: f64 = samples
        .iter()
        .map(|s| {
            s.iter()
                .zip(&mean)
                .map(|(&v, &m)| {
                    let d = f64::from(v) - m;
                    d * d
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / samples.len() as f64)
}

pub fn score_dropout_reg(
    model: &Model,
    input: &[f32],
    input_index: u32,
    mc: McConfig,
) -> Result<ScoreRecord> {
    require(model, Task::Regression, "dropout variance scoring")?;
    let samples = stochastic_outputs(model, input, input_index, mc)?;
    Ok(ScoreRecord {
        input_index,
        method: Method::DropoutReg,
        score: predictive_variance(&samples)?,
    })
}

/// Scores every row of `inputs` (`[N, ...input_shape]`) with a model-based
/// method. Row `i` gets input index `i`. Runs on the current rayon pool.
pub fn score_batch(
    model: &Model,
    inputs: &Tensor,
    method: Method,
    mc: Option<McConfig>,
) -> Result<Vec<ScoreRecord>> {
    if inputs.rank() < 2 || &inputs.shape()[1..] != model.input_shape() {
        return Err(Error::Dimension(format!(
            "batch shape {:?} is not [N, {:?}]",
            inputs.shape(),
            model.input_shape()
        )));
    }
    let n = u32::try_from(inputs.rows())
        .map_err(|_| Error::InvalidArgument("too many inputs".into()))?;
    let mc =
        || mc.ok_or_else(|| Error::InvalidArgument(format!("{method} needs a Monte-Carlo config")));
    let score_one = |i: u32| -> Result<ScoreRecord> {
        let x = inputs.row(i as usize);
        match method {
            Method::Softmax => score_softmax(model, x, i),
            Method::DropoutCls => score_dropout_cls(model, x, i, mc()?),
            Method::DropoutReg => score_dropout_reg(model, x, i, mc()?),
            Method::Dsa => Err(Error::InvalidArgument(
                "dsa scores come from score_dsa_batch".into(),
            )),
        }
    };
    (0..n).into_par_iter().map(score_one).collect()
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::format::{LayerKind, LayerSpec, ModelManifest};

    #[test]
    fn entropy_cases() {
        assert_eq!(entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        let uniform = vec![0.1; 10];
        assert!((entropy(&uniform).unwrap() - 10f64.ln()).abs() < 1e-12);
        // -(0.7 ln 0.7 + 0.2 ln 0.2 + 0.1 ln 0.1), evaluated with mpmath at 30 digits
        let oracle = 0.801_818_552_543_337_3;
        assert!((entropy(&[0.7, 0.2, 0.1]).unwrap() - oracle).abs() < 1e-9);
        assert!(entropy(&[0.5, 0.6]).is_err());
        assert!(entropy(&[-0.1, 1.1]).is_err());
        assert!(entropy(&[]).is_err());
    }

    #[test]
    fn entropy_ignores_zero_classes() {
        let a = entropy(&[0.3, 0.7]).unwrap();
        let b = entropy(&[0.3, 0.0, 0.7, 0.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn variance_hand_example() {
        let v = predictive_variance(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(v, 2.0);
        assert_eq!(predictive_variance(&vec![vec![0.3, -1.7]; 7]).unwrap(), 0.0);
    }

    fn logistic(rate: f64) -> Model {
        let layers = vec![
            LayerSpec::new("drop", LayerKind::Dropout { rate }),
            LayerSpec::new(
                "fc",
                LayerKind::Dense {
                    in_dim: 2,
                    out_dim: 3,
                },
            ),
            LayerSpec::new("softmax", LayerKind::Softmax),
        ];
        let mut weights = BTreeMap::new();
        weights.insert(
            "fc/kernel".to_string(),
            Tensor::new(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, -1.0, -1.0]).unwrap(),
        );
        weights.insert(
            "fc/bias".to_string(),
            Tensor::from_vec(vec![0.0, 0.0, 0.5]).unwrap(),
        );
        Model::new(ModelManifest {
            name: "logistic".into(),
            task: Task::Classification,
            input_shape: vec![2],
            layers,
            weights,
        })
        .unwrap()
    }

    #[test]
    fn softmax_score_composes_oracles() {
        let m = logistic(0.5);
        let x = [0.4f32, -0.3];
        let logits = [0.4f64, -0.3, 0.5 - 0.4 + 0.3];
        let max = logits.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let s: f64 = e.iter().sum();
        let oracle: f64 = e.iter().map(|v| v / s).map(|p| -p * p.ln()).sum();
        let got = score_softmax(&m, &x, 0).unwrap().score;
        assert!((got - oracle).abs() < 1e-6, "{got} vs {oracle}");
    }

    #[test]
    fn dropout_zero_rate_equals_softmax() {
        let m = logistic(0.0);
        let x = [1.5f32, 0.25];
        let soft = score_softmax(&m, &x, 4).unwrap().score;
        for t in [1, 3, 10, 100] {
            let mc = McConfig::new(t, 42).unwrap();
            assert_eq!(
                score_dropout_cls(&m, &x, 4, mc).unwrap().score.to_bits(),
                soft.to_bits()
            );
        }
    }

    #[test]
    fn dropout_cls_single_sample_is_entropy_of_that_sample() {
        let m = logistic(0.5);
        let x = [1.5f32, 0.25];
        let mc = McConfig::new(1, 7).unwrap();
        let y = engine::forward_flat(
            &m,
            &x,
            ForwardMode::Stochastic {
                global_seed: 7,
                input_index: 2,
                sample_index: 0,
            },
        )
        .unwrap();
        let expected = entropy(&widen(&y)).unwrap();
        assert_eq!(score_dropout_cls(&m, &x, 2, mc).unwrap().score, expected);
    }

    #[test]
    fn task_and_config_errors() {
        let m = logistic(0.5);
        assert!(McConfig::new(0, 1).is_err());
        let bad = McConfig {
            samples: 0,
            global_seed: 1,
        };
        assert!(score_dropout_cls(&m, &[0.0, 0.0], 0, bad).is_err());
        let mc = McConfig::new(2, 1).unwrap();
        assert!(matches!(
            score_dropout_reg(&m, &[0.0, 0.0], 0, mc),
            Err(Error::Task(_))
        ));
    }

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::Softmax,
            Method::DropoutCls,
            Method::DropoutReg,
            Method::Dsa,
        ] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("lsa".parse::<Method>().is_err());
    }
}
