//! Trainable predictor backends.
//!
//! Three architectures learn the map from observable history to the future
//! QoI value `q̂(t + tau)`: a feedforward network on delay-embedded inputs
//! trained with Levenberg–Marquardt, a stacked LSTM trained with Adam over
//! truncated BPTT, and an echo-state reservoir with a closed-form ridge
//! readout. All of them standardize inputs and targets with training-portion
//! statistics and are deterministic functions of `(dataset, config, seed)`.

pub mod feedforward;
pub mod lstm;
pub mod reservoir;

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::observables::{DelayEmbedding, ObservationDataset};
use crate::{Error, Result};

pub use feedforward::{ff_forward, ff_train, Activation, FfConfig, FfNet};
pub use lstm::{lstm_cell_step, lstm_train, LstmCellWeights, LstmConfig, LstmNet};
pub use reservoir::{
    rc_build, rc_train, rc_update, rescale_to_spectral_radius, spectral_radius, RcConfig,
    RcReadout, Reservoir,
};

/// Input/target standardization fitted on the training portion only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

impl Standardizer {
    /// Fit on the training-portion observable rows and the training targets.
    pub fn fit(ds: &ObservationDataset) -> Self {
        let r = ds.input_dim();
        let rows = ds.split_index;
        let mut input_mean = vec![0.0; r];
        let mut input_std = vec![1.0; r];
        for c in 0..r {
            let col: Vec<f64> = (0..rows).map(|t| ds.p[[t, c]]).collect();
            let mean = col.iter().sum::<f64>() / rows as f64;
            let std = crate::linalg::population_std(&col);
            input_mean[c] = mean;
            input_std[c] = if std > 1e-300 { std } else { 1.0 };
        }
        let targets: Vec<f64> = ds.train_rows().iter().map(|&t| ds.target(t)).collect();
        let (target_mean, target_std) = if targets.is_empty() {
            (0.0, 1.0)
        } else {
            let mean = targets.iter().sum::<f64>() / targets.len() as f64;
            let std = crate::linalg::population_std(&targets);
            (mean, if std > 1e-300 { std } else { 1.0 })
        };
        Standardizer { input_mean, input_std, target_mean, target_std }
    }

    /// Standardize a (possibly delay-embedded) input vector in place; column
    /// `j` of an embedded vector is a delayed copy of raw column `j % r`.
    pub fn standardize_input(&self, x: &mut [f64]) {
        let r = self.input_mean.len();
        for (j, v) in x.iter_mut().enumerate() {
            let c = j % r;
            *v = (*v - self.input_mean[c]) / self.input_std[c];
        }
    }

    pub fn standardize_target(&self, q: f64) -> f64 {
        (q - self.target_mean) / self.target_std
    }

    pub fn destandardize_target(&self, y: f64) -> f64 {
        y * self.target_std + self.target_mean
    }
}

/// Shape of the inputs a model was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSchema {
    /// Raw observable dimension `r`.
    pub input_dim: usize,
    /// Delay embedding for feedforward inputs; `None` for recurrent models.
    pub embedding: Option<DelayEmbedding>,
}

/// Per-epoch loss bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochStats>,
    pub stop_reason: String,
    /// Number of gradient-clipping events (LSTM only).
    pub clip_events: usize,
    pub warnings: Vec<String>,
}

/// A trained predictor with its configuration and learned parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub variant: PredictorVariant,
    pub scaler: Standardizer,
    pub schema: InputSchema,
    pub seed: u64,
    pub log: TrainingLog,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictorVariant {
    Feedforward(FfNet),
    Lstm(LstmNet),
    Reservoir(RcReadout),
}

impl PredictorVariant {
    pub fn name(&self) -> &'static str {
        match self {
            PredictorVariant::Feedforward(_) => "feedforward",
            PredictorVariant::Lstm(_) => "lstm",
            PredictorVariant::Reservoir(_) => "reservoir",
        }
    }
}

/// Configuration for any of the three predictor variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "variant")]
pub enum PredictorConfig {
    Feedforward(FfConfig),
    Lstm(LstmConfig),
    Reservoir(RcConfig),
}

impl PredictorConfig {
    pub fn name(&self) -> &'static str {
        match self {
            PredictorConfig::Feedforward(_) => "feedforward",
            PredictorConfig::Lstm(_) => "lstm",
            PredictorConfig::Reservoir(_) => "reservoir",
        }
    }

    /// Train the configured variant on a dataset.
    pub fn train(&self, ds: &ObservationDataset, seed: u64) -> Result<PredictorModel> {
        match self {
            PredictorConfig::Feedforward(c) => ff_train(ds, c, seed),
            PredictorConfig::Lstm(c) => lstm_train(ds, c, seed),
            PredictorConfig::Reservoir(c) => rc_train(ds, c, seed),
        }
    }
}

/// Which contiguous portion of a dataset to predict over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Portion {
    Train,
    Test,
}

impl PredictorModel {
    /// Predict `q̂` for every admissible input row of the portion.
    ///
    /// Feedforward models evaluate row by row on embedded inputs. Recurrent
    /// models are warm-started by running over the portion from its first row
    /// (never touching rows after the one being predicted), so no target
    /// information can leak backwards.
    pub fn predict_series(
        &self,
        ds: &ObservationDataset,
        portion: Portion,
    ) -> Result<(Vec<usize>, Vec<f64>)> {
        if ds.input_dim() != self.schema.input_dim {
            return Err(Error::Schema(format!(
                "model expects {} observables, dataset has {}",
                self.schema.input_dim,
                ds.input_dim()
            )));
        }
        if self.schema.embedding != ds.embedding && matches!(self.variant, PredictorVariant::Feedforward(_)) {
            return Err(Error::Schema(
                "dataset embedding does not match the model's input schema".into(),
            ));
        }
        let rows = match portion {
            Portion::Train => ds.train_rows(),
            Portion::Test => ds.test_rows(),
        };
        if rows.is_empty() {
            return Err(Error::InsufficientData("portion has no admissible rows".into()));
        }

        let predictions = match &self.variant {
            PredictorVariant::Feedforward(net) => {
                let mut out = Vec::with_capacity(rows.len());
                for &t in &rows {
                    let mut x = ds.input_row(t).to_vec();
                    self.scaler.standardize_input(&mut x);
                    out.push(self.scaler.destandardize_target(net.forward(&x)?));
                }
                out
            }
            PredictorVariant::Lstm(net) => {
                let mut state = net.zero_state();
                let mut out = Vec::with_capacity(rows.len());
                for &t in &rows {
                    let mut x = ds.p.row(t).to_vec();
                    self.scaler.standardize_input(&mut x);
                    let y = net.step(&x, &mut state)?;
                    out.push(self.scaler.destandardize_target(y));
                }
                out
            }
            PredictorVariant::Reservoir(readout) => {
                let mut state = readout.reservoir.initial_state();
                let mut out = Vec::with_capacity(rows.len());
                for &t in &rows {
                    let mut x = ds.p.row(t).to_vec();
                    self.scaler.standardize_input(&mut x);
                    readout.reservoir.update(&mut state, &x)?;
                    out.push(self.scaler.destandardize_target(readout.output(&state)));
                }
                out
            }
        };
        Ok((rows, predictions))
    }

    /// Serialize to the versioned binary container: magic, version, JSON
    /// header, then raw little-endian f64 parameter blocks. Round-trips are
    /// bit-exact.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let (header_variant, blocks) = self.variant.to_blocks();
        let header = ModelHeader {
            variant: header_variant,
            schema: self.schema,
            scaler: self.scaler.clone(),
            seed: self.seed,
            log: self.log.clone(),
            blocks: blocks.iter().map(|b| BlockDesc { name: b.0.clone(), len: b.1.len() }).collect(),
        };
        let header_json = serde_json::to_vec(&header)?;
        let mut file = fs::File::create(path)?;
        file.write_all(MAGIC)?;
        file.write_all(&FORMAT_VERSION.to_le_bytes())?;
        file.write_all(&(header_json.len() as u32).to_le_bytes())?;
        file.write_all(&header_json)?;
        for (_, data) in &blocks {
            let mut buf = Vec::with_capacity(data.len() * 8);
            for v in data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            file.write_all(&buf)?;
        }
        Ok(())
    }

    /// Load a model written by [`PredictorModel::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let mut raw = Vec::new();
        fs::File::open(path)?.read_to_end(&mut raw)?;
        if raw.len() < 12 || &raw[..4] != MAGIC {
            return Err(Error::Format("not a predictor model file".into()));
        }
        let version = u32::from_le_bytes(raw[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model format version {version}")));
        }
        let header_len = u32::from_le_bytes(raw[8..12].try_into().unwrap()) as usize;
        if raw.len() < 12 + header_len {
            return Err(Error::Format("truncated model header".into()));
        }
        let header: ModelHeader = serde_json::from_slice(&raw[12..12 + header_len])?;
        let mut offset = 12 + header_len;
        let mut blocks = Vec::with_capacity(header.blocks.len());
        for desc in &header.blocks {
            let bytes = desc.len * 8;
            if raw.len() < offset + bytes {
                return Err(Error::Format(format!("truncated block {}", desc.name)));
            }
            let mut data = Vec::with_capacity(desc.len);
            for chunk in raw[offset..offset + bytes].chunks_exact(8) {
                data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
            blocks.push((desc.name.clone(), data));
            offset += bytes;
        }
        let variant = PredictorVariant::from_blocks(&header.variant, &blocks)?;
        Ok(PredictorModel {
            variant,
            scaler: header.scaler,
            schema: header.schema,
            seed: header.seed,
            log: header.log,
        })
    }
}

const MAGIC: &[u8; 4] = b"ECMF";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    variant: VariantHeader,
    schema: InputSchema,
    scaler: Standardizer,
    seed: u64,
    log: TrainingLog,
    blocks: Vec<BlockDesc>,
}

#[derive(Serialize, Deserialize)]
struct BlockDesc {
    name: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
enum VariantHeader {
    Feedforward { config: FfConfig, layer_dims: Vec<(usize, usize)> },
    Lstm { config: LstmConfig, input_dim: usize },
    Reservoir { config: RcConfig, input_dim: usize },
}

type Block = (String, Vec<f64>);

impl PredictorVariant {
    fn to_blocks(&self) -> (VariantHeader, Vec<Block>) {
        match self {
            PredictorVariant::Feedforward(net) => {
                let mut blocks = Vec::new();
                let mut dims = Vec::new();
                for (i, layer) in net.layers.iter().enumerate() {
                    dims.push((layer.w.nrows(), layer.w.ncols()));
                    blocks.push((format!("w{i}"), layer.w.iter().cloned().collect()));
                    blocks.push((format!("b{i}"), layer.b.to_vec()));
                }
                (
                    VariantHeader::Feedforward { config: net.config.clone(), layer_dims: dims },
                    blocks,
                )
            }
            PredictorVariant::Lstm(net) => {
                let mut blocks = Vec::new();
                for (i, layer) in net.layers.iter().enumerate() {
                    blocks.push((format!("w_ih{i}"), layer.w_ih.iter().cloned().collect()));
                    blocks.push((format!("w_hh{i}"), layer.w_hh.iter().cloned().collect()));
                    blocks.push((format!("b{i}"), layer.b.to_vec()));
                }
                blocks.push(("head_w".into(), net.head_w.to_vec()));
                blocks.push(("head_b".into(), vec![net.head_b]));
                (
                    VariantHeader::Lstm { config: net.config.clone(), input_dim: net.input_dim },
                    blocks,
                )
            }
            PredictorVariant::Reservoir(readout) => {
                let res = &readout.reservoir;
                let blocks = vec![
                    ("w_in".into(), res.w_in.iter().cloned().collect()),
                    ("adjacency".into(), res.adjacency_dense().iter().cloned().collect()),
                    ("r0".into(), res.r0.to_vec()),
                    ("w_out".into(), readout.w_out.to_vec()),
                ];
                (
                    VariantHeader::Reservoir {
                        config: res.config.clone(),
                        input_dim: res.input_dim(),
                    },
                    blocks,
                )
            }
        }
    }

    fn from_blocks(header: &VariantHeader, blocks: &[Block]) -> Result<Self> {
        let find = |name: &str| -> Result<&Vec<f64>> {
            blocks
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, d)| d)
                .ok_or_else(|| Error::Format(format!("missing parameter block {name}")))
        };
        match header {
            VariantHeader::Feedforward { config, layer_dims } => {
                let mut layers = Vec::with_capacity(layer_dims.len());
                for (i, &(rows, cols)) in layer_dims.iter().enumerate() {
                    let w = Array2::from_shape_vec((rows, cols), find(&format!("w{i}"))?.clone())
                        .map_err(|e| Error::Format(e.to_string()))?;
                    let b = Array1::from(find(&format!("b{i}"))?.clone());
                    layers.push(feedforward::Layer { w, b });
                }
                Ok(PredictorVariant::Feedforward(FfNet::from_parts(config.clone(), layers)?))
            }
            VariantHeader::Lstm { config, input_dim } => {
                let hidden = config.hidden_units;
                let mut layers = Vec::with_capacity(config.num_layers);
                for i in 0..config.num_layers {
                    let in_dim = if i == 0 { *input_dim } else { hidden };
                    let w_ih =
                        Array2::from_shape_vec((4 * hidden, in_dim), find(&format!("w_ih{i}"))?.clone())
                            .map_err(|e| Error::Format(e.to_string()))?;
                    let w_hh =
                        Array2::from_shape_vec((4 * hidden, hidden), find(&format!("w_hh{i}"))?.clone())
                            .map_err(|e| Error::Format(e.to_string()))?;
                    let b = Array1::from(find(&format!("b{i}"))?.clone());
                    layers.push(LstmCellWeights { w_ih, w_hh, b });
                }
                let head_w = Array1::from(find("head_w")?.clone());
                let head_b = find("head_b")?[0];
                Ok(PredictorVariant::Lstm(LstmNet::from_parts(
                    config.clone(),
                    *input_dim,
                    layers,
                    head_w,
                    head_b,
                )?))
            }
            VariantHeader::Reservoir { config, input_dim } => {
                let m = config.num_nodes;
                let w_in = Array2::from_shape_vec((m, *input_dim), find("w_in")?.clone())
                    .map_err(|e| Error::Format(e.to_string()))?;
                let dense = Array2::from_shape_vec((m, m), find("adjacency")?.clone())
                    .map_err(|e| Error::Format(e.to_string()))?;
                let r0 = Array1::from(find("r0")?.clone());
                let w_out = Array1::from(find("w_out")?.clone());
                let reservoir = Reservoir::from_parts(config.clone(), w_in, &dense, r0)?;
                Ok(PredictorVariant::Reservoir(RcReadout { reservoir, w_out }))
            }
        }
    }
}
