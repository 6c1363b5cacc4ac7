#![allow(dead_code)]

use std::collections::BTreeMap;

use prioritizer_core::{LayerKind, LayerSpec, Model, ModelManifest, Task, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape,
        (0..n).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

/// dense -> relu -> dropout -> dense [-> softmax]
pub fn mlp(
    rng: &mut ChaCha8Rng,
    input: usize,
    hidden: usize,
    output: usize,
    rate: f64,
    task: Task,
) -> Model {
    let mut layers = vec![
        LayerSpec::new(
            "fc1",
            LayerKind::Dense {
                in_dim: input,
                out_dim: hidden,
            },
        ),
        LayerSpec::new("relu1", LayerKind::Relu),
        LayerSpec::new("drop1", LayerKind::Dropout { rate }),
        LayerSpec::new(
            "fc2",
            LayerKind::Dense {
                in_dim: hidden,
                out_dim: output,
            },
        ),
    ];
    if task == Task::Classification {
        layers.push(LayerSpec::new("softmax", LayerKind::Softmax));
    }
    let mut weights = BTreeMap::new();
    weights.insert(
        "fc1/kernel".into(),
        random_tensor(rng, vec![hidden, input], 1.0),
    );
    weights.insert("fc1/bias".into(), random_tensor(rng, vec![hidden], 0.5));
    weights.insert(
        "fc2/kernel".into(),
        random_tensor(rng, vec![output, hidden], 1.0),
    );
    weights.insert("fc2/bias".into(), random_tensor(rng, vec![output], 0.5));
    Model::new(ModelManifest {
        name: "mlp".into(),
        task,
        input_shape: vec![input],
        layers,
        weights,
    })
    .unwrap()
}
