//! Mini-batch gradient descent (with momentum) on mean squared steering error.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{window_features, Controller, Mlp};
use crate::camera::Image;
use crate::offline::LabeledDataset;
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// 1 trains a stateless controller, more trains a windowed one.
    pub history_window: usize,
    /// Use every `frame_stride`-th frame of each dataset.
    pub frame_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![32],
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 30,
            batch_size: 32,
            seed: 0,
            history_window: 1,
            frame_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub samples: usize,
    pub epoch_losses: Vec<f64>,
    /// Mean absolute error over the training samples after the last epoch.
    pub final_mae: f64,
}

struct Samples {
    dim: usize,
    features: Vec<f32>,
    targets: Vec<f64>,
}

impl Samples {
    fn input(&self, i: usize, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend(self.features[i * self.dim..(i + 1) * self.dim].iter().map(|&f| f64::from(f)));
    }

    fn len(&self) -> usize {
        self.targets.len()
    }
}

fn collect_samples(datasets: &[LabeledDataset], window: usize, stride: usize) -> Result<Samples> {
    let first = datasets
        .iter()
        .find_map(|d| d.frames.first())
        .ok_or(Error::EmptyInput("training dataset"))?;
    let dim = first.image.pixels().len();
    let mut samples = Samples {
        dim,
        features: Vec::new(),
        targets: Vec::new(),
    };
    for ds in datasets {
        for (j, frame) in ds.frames.iter().enumerate().step_by(stride.max(1)) {
            if frame.image.pixels().len() != dim {
                return Err(Error::InvalidArgument("training images differ in size".into()));
            }
            let lo = (j + 1).saturating_sub(window);
            let mut history: Vec<&Image> = std::iter::repeat(&ds.frames[lo].image)
                .take(window - (j + 1 - lo))
                .collect();
            history.extend(ds.frames[lo..=j].iter().map(|f| &f.image));
            samples
                .features
                .extend(window_features(&history).into_iter().map(|f| f as f32));
            samples.targets.push(frame.theta_label);
        }
    }
    Ok(samples)
}

/// Fits a `pixels -> hidden... -> 1` tanh network to the frame labels.
/// Deterministic for a fixed `cfg.seed`; zero epochs returns the seeded
/// initialization.
pub fn train(datasets: &[LabeledDataset], cfg: &TrainConfig) -> Result<(Controller, TrainReport)> {
    let window = cfg.history_window.max(1);
    let samples = collect_samples(datasets, window, cfg.frame_stride)?;
    let mut sizes = vec![samples.dim];
    sizes.extend(&cfg.hidden_sizes);
    sizes.push(1);
    let mut net = Mlp::new(&sizes, cfg.seed)?;

    let mut rng = seed::rng(seed::substream(cfg.seed, 0x5348_5546));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut params = net.params();
    let mut velocity = vec![0.0; params.len()];
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let batch_size = cfg.batch_size.max(1);
    let mut inputs: Vec<Vec<f64>> = vec![Vec::with_capacity(samples.dim); batch_size];

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            for (buf, &i) in inputs.iter_mut().zip(chunk) {
                samples.input(i, buf);
            }
            let batch: Vec<(&[f64], f64)> = inputs
                .iter()
                .zip(chunk)
                .map(|(x, &i)| (x.as_slice(), samples.targets[i]))
                .collect();
            let (loss, grad) = net.loss_and_gradient(&batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            epoch_loss += loss * chunk.len() as f64;
            for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *p += *v;
            }
            net.set_params(&params);
        }
        let mean = epoch_loss / samples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        epoch_losses.push(mean);
    }

    let mut buf = Vec::with_capacity(samples.dim);
    let final_mae = (0..samples.len())
        .map(|i| {
            samples.input(i, &mut buf);
            (net.predict_scalar(&buf) - samples.targets[i]).abs()
        })
        .sum::<f64>()
        / samples.len() as f64;

    let controller = if window == 1 {
        Controller::Learned(net)
    } else {
        Controller::Windowed { net, window }
    };
    Ok((
        controller,
        TrainReport {
            samples: samples.len(),
            epoch_losses,
            final_mae,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offline::{LabeledFrame, Provenance};
    use rand::Rng;

    fn dataset(labels: impl Fn(usize) -> f64, n: usize, seed: u64) -> LabeledDataset {
        let mut rng = seed::rng(seed);
        LabeledDataset {
            frames: (0..n)
                .map(|i| LabeledFrame {
                    image: Image::from_pixels(
                        6,
                        6,
                        (0..36).map(|_| rng.random_range(0.0..1.0)).collect(),
                    )
                    .unwrap(),
                    theta_label: labels(i),
                })
                .collect(),
            provenance: Provenance::Simulated,
            source_id: "t".into(),
            fps: 20.0,
            scenario: None,
            truncated: false,
        }
    }

    #[test]
    fn fits_a_constant_label() {
        let ds = dataset(|_| 0.2, 200, 1);
        let cfg = TrainConfig {
            hidden_sizes: vec![8],
            epochs: 40,
            ..TrainConfig::default()
        };
        let (_, report) = train(&[ds], &cfg).unwrap();
        assert!(report.final_mae < 0.02, "{}", report.final_mae);
        assert_eq!(report.epoch_losses.len(), 40);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let ds = dataset(|i| i as f64 / 100.0, 50, 2);
        let cfg = TrainConfig {
            hidden_sizes: vec![4],
            epochs: 0,
            seed: 77,
            ..TrainConfig::default()
        };
        let (c, _) = train(&[ds], &cfg).unwrap();
        assert_eq!(c, Controller::Learned(Mlp::new(&[36, 4, 1], 77).unwrap()));
    }

    #[test]
    fn training_is_deterministic_and_windowed_kind_follows_config() {
        let ds = dataset(|i| ((i as f64) * 0.1).sin() * 0.3, 60, 3);
        let cfg = TrainConfig {
            hidden_sizes: vec![4],
            epochs: 3,
            history_window: 5,
            ..TrainConfig::default()
        };
        let a = train(std::slice::from_ref(&ds), &cfg).unwrap();
        let b = train(&[ds], &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.history_window(), 5);
    }

    #[test]
    fn divergence_names_the_epoch() {
        let ds = dataset(|_| 0.5, 40, 4);
        let cfg = TrainConfig {
            hidden_sizes: vec![4],
            learning_rate: f64::INFINITY,
            epochs: 5,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&[ds], &cfg), Err(Error::Divergence { epoch: 1 })));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(matches!(train(&[], &TrainConfig::default()), Err(Error::EmptyInput(_))));
    }
}
