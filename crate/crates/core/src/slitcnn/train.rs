use super::{ModelSpec, Network, Workspace};
use crate::nn::checkpoint::{Checkpoint, CheckpointError, NamedTensor};
use crate::nn::{adam_step, AdamState, NnError, Tensor, TrainConfig};
use crate::trajectory::InterpolatedTrajectory;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: InterpolatedTrajectory,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// A network together with its optimizer state and training history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub network: Network,
    pub adam: AdamState,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose parameters are held, `None` before training.
    pub best_epoch: Option<usize>,
}

impl TrainedModel {
    /// Untrained model with seeded initialization.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, NnError> {
        let network = Network::new(spec, seed)?;
        let adam = AdamState::new(network.parameters().iter().map(Vec::len));
        Ok(Self {
            network,
            adam,
            history: Vec::new(),
            best_epoch: None,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.network.spec()
    }

    pub fn predict_proba(&self, batch: &[&InterpolatedTrajectory]) -> Result<Vec<Vec<f64>>, NnError> {
        self.network.predict_proba(batch)
    }

    /// Argmax class per trajectory.
    pub fn predict(&self, batch: &[&InterpolatedTrajectory]) -> Result<Vec<usize>, NnError> {
        Ok(self.predict_proba(batch)?.iter().map(|p| argmax(p)).collect())
    }

    /// `epoch,train_loss,val_accuracy` with a header row.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_accuracy\n");
        for r in &self.history {
            let _ = writeln!(s, "{},{},{}", r.epoch, r.train_loss, r.val_accuracy);
        }
        s
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let spec = self.spec();
        let header = vec![
            spec.t as f64,
            spec.num_classes as f64,
            spec.conv1_width as f64,
            spec.conv1_channels as f64,
            spec.conv2_width as f64,
            spec.conv2_channels as f64,
            spec.stream_fc as f64,
            spec.fuse_fc as f64,
            spec.dropout,
            self.adam.step as f64,
            self.best_epoch.map_or(0.0, |e| e as f64),
        ];
        let mut tensors = vec![NamedTensor {
            name: "meta".into(),
            tensor: Tensor::from_vec(&[header.len()], header).expect("1-d"),
        }];
        let shapes = spec.parameter_shapes();
        for (k, (name, shape)) in shapes.iter().enumerate() {
            tensors.push(NamedTensor {
                name: name.clone(),
                tensor: Tensor::from_vec(shape, self.network.parameters()[k].clone()).expect("spec shape"),
            });
        }
        for (prefix, moments) in [("adam.m.", &self.adam.m), ("adam.v.", &self.adam.v)] {
            for (k, (name, shape)) in shapes.iter().enumerate() {
                tensors.push(NamedTensor {
                    name: format!("{prefix}{name}"),
                    tensor: Tensor::from_vec(shape, moments[k].clone()).expect("spec shape"),
                });
            }
        }
        Checkpoint {
            variant: spec.variant.tag().into(),
            tensors,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, CheckpointError> {
        let corrupt = |m: String| CheckpointError::Corrupt(m);
        let variant = ckpt
            .variant
            .parse()
            .map_err(|e: NnError| corrupt(e.to_string()))?;
        let meta = ckpt
            .get("meta")
            .ok_or_else(|| corrupt("missing meta".into()))?
            .data();
        if meta.len() != 11 {
            return Err(corrupt(format!("meta has {} values", meta.len())));
        }
        let spec = ModelSpec {
            variant,
            t: meta[0] as usize,
            num_classes: meta[1] as usize,
            conv1_width: meta[2] as usize,
            conv1_channels: meta[3] as usize,
            conv2_width: meta[4] as usize,
            conv2_channels: meta[5] as usize,
            stream_fc: meta[6] as usize,
            fuse_fc: meta[7] as usize,
            dropout: meta[8],
        };
        let fetch = |name: &str| -> Result<Vec<f64>, CheckpointError> {
            Ok(ckpt
                .get(name)
                .ok_or_else(|| corrupt(format!("missing tensor {name}")))?
                .data()
                .to_vec())
        };
        let shapes = spec.parameter_shapes();
        let mut params = Vec::with_capacity(shapes.len());
        let mut m = Vec::with_capacity(shapes.len());
        let mut v = Vec::with_capacity(shapes.len());
        for (name, _) in &shapes {
            params.push(fetch(name)?);
            m.push(fetch(&format!("adam.m.{name}"))?);
            v.push(fetch(&format!("adam.v.{name}"))?);
        }
        let network = Network::from_parameters(spec, params).map_err(|e| corrupt(e.to_string()))?;
        if m.iter()
            .zip(network.parameters())
            .any(|(a, p)| a.len() != p.len())
            || v.iter()
                .zip(network.parameters())
                .any(|(a, p)| a.len() != p.len())
        {
            return Err(corrupt("optimizer state does not match parameters".into()));
        }
        Ok(Self {
            network,
            adam: AdamState {
                m,
                v,
                step: meta[9] as u64,
            },
            history: Vec::new(),
            best_epoch: (meta[10] > 0.0).then_some(meta[10] as usize),
        })
    }
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &v)| if v > best.1 { (i, v) } else { best },
        )
        .0
}

fn check_split(name: &str, set: &[Example], classes: usize) -> Result<(), NnError> {
    if set.is_empty() {
        return Err(NnError::Argument(format!("{name} set is empty")));
    }
    if let Some(e) = set.iter().find(|e| e.label >= classes) {
        return Err(NnError::Argument(format!(
            "{name} label {} outside 0..{classes}",
            e.label
        )));
    }
    Ok(())
}

fn accuracy(net: &Network, set: &[Example], ws: &mut Workspace) -> Result<f64, NnError> {
    let inputs: Vec<&InterpolatedTrajectory> = set.iter().map(|e| &e.input).collect();
    let probs = net.predict_proba_with(&inputs, ws)?;
    let hits = probs
        .iter()
        .zip(set)
        .filter(|(p, e)| argmax(p) == e.label)
        .count();
    Ok(hits as f64 / set.len() as f64)
}

/// Shuffled mini-batch Adam on cross-entropy, keeping the parameters of the
/// epoch with the highest validation accuracy (earliest on ties).
pub fn train(
    model: TrainedModel,
    train_set: &[Example],
    val_set: &[Example],
    config: &TrainConfig,
) -> Result<TrainedModel, NnError> {
    train_with_progress(model, train_set, val_set, config, |_| {})
}

pub fn train_with_progress(
    mut model: TrainedModel,
    train_set: &[Example],
    val_set: &[Example],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainedModel, NnError> {
    config.validate()?;
    let classes = model.spec().num_classes;
    check_split("training", train_set, classes)?;
    check_split("validation", val_set, classes)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ws = Workspace::default();
    let mut grads = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let first_epoch = model.history.len() + 1;
    let mut best: Option<(f64, usize, Network, AdamState)> = None;
    let mut stale = 0;

    for epoch in first_epoch..first_epoch + config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&InterpolatedTrajectory> = chunk.iter().map(|&i| &train_set[i].input).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_set[i].label).collect();
            let dropout_rng = (model.spec().dropout > 0.0).then_some(&mut rng);
            let loss = model
                .network
                .loss_and_gradients(&batch, &labels, &mut ws, dropout_rng, &mut grads)?;
            loss_sum += loss * chunk.len() as f64;
            let mut params: Vec<&mut [f64]> = model
                .network
                .parameters_mut()
                .iter_mut()
                .map(Vec::as_mut_slice)
                .collect();
            let g: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
            adam_step(&mut params, &g, &mut model.adam, config)?;
        }
        let val_accuracy = accuracy(&model.network, val_set, &mut ws)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_accuracy,
        };
        model.history.push(record);
        on_epoch(&record);

        if best.as_ref().is_none_or(|b| val_accuracy > b.0) {
            best = Some((val_accuracy, epoch, model.network.clone(), model.adam.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        // no later epoch can beat a perfect score, so the snapshot is final
        if config.stop_at_perfect_validation && val_accuracy >= 1.0 {
            break;
        }
        if config.target_loss.is_some_and(|l| record.train_loss < l) {
            break;
        }
        if config.patience.is_some_and(|p| stale >= p) {
            break;
        }
    }

    let (_, epoch, network, adam) = best.expect("at least one epoch");
    model.network = network;
    model.adam = adam;
    model.best_epoch = Some(epoch);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slitcnn::Variant;
    use rand::Rng;

    fn toy_set(n: usize, classes: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = i % classes;
                let data = (0..64 * 6)
                    .map(|k| {
                        let phase = (k / 6) as f64 * 0.1 * (label + 1) as f64;
                        0.1 * phase.sin() + rng.random_range(-0.02..0.02)
                    })
                    .collect();
                Example {
                    input: InterpolatedTrajectory::new(6, data).unwrap(),
                    label,
                }
            })
            .collect()
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = TrainedModel::new(ModelSpec::new(Variant::TwoStream, 64, 3), 2).unwrap();
        let set = toy_set(6, 3, 1);
        let cfg = TrainConfig {
            max_epochs: 2,
            batch_size: 4,
            ..Default::default()
        };
        let trained = train(model, &set, &set, &cfg).unwrap();
        let restored = TrainedModel::from_checkpoint(&trained.to_checkpoint()).unwrap();
        assert_eq!(restored.network, trained.network);
        assert_eq!(restored.adam, trained.adam);
        assert_eq!(restored.best_epoch, trained.best_epoch);
    }

    #[test]
    fn rejects_bad_labels_and_empty_sets() {
        let model = TrainedModel::new(ModelSpec::new(Variant::TipOnly, 64, 3), 0).unwrap();
        let mut set = toy_set(3, 3, 0);
        let cfg = TrainConfig::default();
        assert!(train(model.clone(), &[], &set, &cfg).is_err());
        set[0].label = 3;
        assert!(train(model, &set, &set, &cfg).is_err());
    }

    #[test]
    fn history_csv_format() {
        let mut model = TrainedModel::new(ModelSpec::new(Variant::TipOnly, 64, 2), 0).unwrap();
        model.history.push(EpochRecord {
            epoch: 1,
            train_loss: 0.5,
            val_accuracy: 0.25,
        });
        assert_eq!(model.history_csv(), "epoch,train_loss,val_accuracy\n1,0.5,0.25\n");
    }

    fn overfit_config() -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 300,
            stop_at_perfect_validation: false,
            target_loss: Some(0.01),
            ..Default::default()
        }
    }

    fn no_dropout(variant: Variant) -> ModelSpec {
        let mut spec = ModelSpec::new(variant, 64, 4);
        spec.dropout = 0.0;
        spec
    }

    #[test]
    fn same_seed_runs_are_identical() {
        let set = toy_set(8, 4, 5);
        let cfg = TrainConfig {
            max_epochs: 3,
            batch_size: 3,
            stop_at_perfect_validation: false,
            ..Default::default()
        };
        let run = || {
            let model = TrainedModel::new(ModelSpec::new(Variant::TwoStream, 64, 4), 9).unwrap();
            train(model, &set, &set, &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.history, b.history);
        assert_eq!(a.network, b.network);
        assert_eq!(a.adam, b.adam);
    }

    #[test]
    fn small_model_overfits_eight_samples() {
        let set = toy_set(8, 4, 2);
        for variant in [Variant::TipOnly, Variant::TwoStream] {
            let model = TrainedModel::new(no_dropout(variant), 1).unwrap();
            let trained = train(model, &set, &set, &overfit_config()).unwrap();
            let last = trained.history.last().unwrap();
            assert!(last.train_loss < 0.01, "{variant}: {last:?}");
            assert!(trained.history[..5]
                .windows(2)
                .all(|w| w[1].train_loss < w[0].train_loss));
        }
    }

    #[test]
    fn keeps_best_validation_snapshot() {
        let set = toy_set(8, 4, 3);
        let cfg = TrainConfig {
            max_epochs: 6,
            learning_rate: 1e-3,
            stop_at_perfect_validation: false,
            ..Default::default()
        };
        let model = TrainedModel::new(no_dropout(Variant::TipOnly), 4).unwrap();
        let trained = train(model, &set, &set, &cfg).unwrap();
        let best = trained.best_epoch.unwrap();
        let acc = trained.history[best - 1].val_accuracy;
        assert!(trained.history[..best - 1].iter().all(|r| r.val_accuracy < acc));
        assert!(trained.history.iter().all(|r| r.val_accuracy <= acc));
        let mut ws = Workspace::default();
        assert_eq!(accuracy(&trained.network, &set, &mut ws).unwrap(), acc);
    }

    #[test]
    fn patience_and_perfect_validation_stop_early() {
        let set = toy_set(8, 4, 2);
        let model = TrainedModel::new(no_dropout(Variant::TipOnly), 1).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 300,
            ..Default::default()
        };
        let trained = train(model.clone(), &set, &set, &cfg).unwrap();
        assert!(trained.history.len() < 300);
        assert_eq!(trained.history.last().unwrap().val_accuracy, 1.0);
        let cfg = TrainConfig {
            learning_rate: 1e-12,
            max_epochs: 50,
            patience: Some(2),
            stop_at_perfect_validation: false,
            ..Default::default()
        };
        let stalled = train(model, &set, &set, &cfg).unwrap();
        assert!(stalled.history.len() < 50);
    }
}
