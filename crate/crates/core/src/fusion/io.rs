use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::input::{hidden_size, input_dim};
use super::model::FusionModel;
use super::train::{EpochRecord, TrainConfig};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &str = "REID-FUSIONNET";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub config: Option<TrainConfig>,
    pub best_epoch: Option<usize>,
    #[serde(default)]
    pub curve: Vec<EpochRecord>,
    /// Free-form metadata supplied by the producing tool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

/// Self-describing model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub magic: String,
    pub version: u32,
    #[serde(rename = "W")]
    pub window: usize,
    pub input_dim: usize,
    pub hidden_size: usize,
    pub weights_1: Vec<f64>,
    pub bias_1: Vec<f64>,
    pub weights_2: Vec<f64>,
    pub bias_2: f64,
    pub metadata: TrainingMetadata,
}

impl ModelDocument {
    pub fn new(model: &FusionModel, metadata: TrainingMetadata) -> Self {
        ModelDocument {
            magic: MODEL_MAGIC.into(),
            version: MODEL_VERSION,
            window: model.window,
            input_dim: model.input_dim,
            hidden_size: model.hidden_size,
            weights_1: model.weights_1.clone(),
            bias_1: model.bias_1.clone(),
            weights_2: model.weights_2.clone(),
            bias_2: model.bias_2,
            metadata,
        }
    }

    pub fn to_model(&self) -> Result<FusionModel> {
        if self.magic != MODEL_MAGIC {
            return Err(Error::ModelFile(format!("bad magic {:?}", self.magic)));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::ModelFile(format!("unsupported version {}", self.version)));
        }
        if self.input_dim != input_dim(self.window) || self.hidden_size != hidden_size(self.window) {
            return Err(Error::ModelFile(format!(
                "W={} implies {}x{} but file declares {}x{}",
                self.window,
                hidden_size(self.window),
                input_dim(self.window),
                self.hidden_size,
                self.input_dim
            )));
        }
        let check = |name: &str, len: usize, want: usize| {
            if len == want {
                Ok(())
            } else {
                Err(Error::ModelFile(format!("{name} has {len} values, expected {want}")))
            }
        };
        check("weights_1", self.weights_1.len(), self.hidden_size * self.input_dim)?;
        check("bias_1", self.bias_1.len(), self.hidden_size)?;
        check("weights_2", self.weights_2.len(), self.hidden_size)?;
        let all = self.weights_1.iter().chain(&self.bias_1).chain(&self.weights_2).chain([&self.bias_2]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelFile("non-finite parameter".into()));
        }
        Ok(FusionModel {
            window: self.window,
            input_dim: self.input_dim,
            hidden_size: self.hidden_size,
            weights_1: self.weights_1.clone(),
            bias_1: self.bias_1.clone(),
            weights_2: self.weights_2.clone(),
            bias_2: self.bias_2,
        })
    }
}

pub fn write_model<W: Write>(writer: W, model: &FusionModel, metadata: TrainingMetadata) -> Result<()> {
    serde_json::to_writer_pretty(writer, &ModelDocument::new(model, metadata))?;
    Ok(())
}

pub fn read_model<R: Read>(reader: R) -> Result<(FusionModel, TrainingMetadata)> {
    let doc: ModelDocument =
        serde_json::from_reader(reader).map_err(|e| Error::ModelFile(format!("unreadable model file: {e}")))?;
    let model = doc.to_model()?;
    Ok((model, doc.metadata))
}

/// One parameter in the long-format weight table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub tensor: String,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Row-major dump of every parameter: `weights_1` (hidden x input), `bias_1`,
/// `weights_2` (1 x hidden), `bias_2`.
pub fn weight_table(model: &FusionModel) -> Vec<WeightRow> {
    let mut rows = Vec::with_capacity(model.parameter_count());
    let row = |tensor: &str, row, col, value| WeightRow {
        tensor: tensor.into(),
        row,
        col,
        value,
    };
    for h in 0..model.hidden_size {
        for c in 0..model.input_dim {
            rows.push(row("weights_1", h, c, model.weights_1[h * model.input_dim + c]));
        }
    }
    for h in 0..model.hidden_size {
        rows.push(row("bias_1", h, 0, model.bias_1[h]));
    }
    for h in 0..model.hidden_size {
        rows.push(row("weights_2", 0, h, model.weights_2[h]));
    }
    rows.push(row("bias_2", 0, 0, model.bias_2));
    rows
}

pub fn write_weight_table<W: Write>(writer: W, model: &FusionModel) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in weight_table(model) {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Rebuilds a model for window `window` from a weight table. Every parameter
/// must appear exactly once.
pub fn read_weight_table<R: Read>(reader: R, window: usize) -> Result<FusionModel> {
    let mut model = FusionModel::zeros(window);
    let mut seen = vec![false; model.parameter_count()];
    let (n_in, n_hidden) = (model.input_dim, model.hidden_size);
    let w1 = n_hidden * n_in;
    let mut rdr = csv::Reader::from_reader(reader);
    for (line, rec) in rdr.deserialize::<WeightRow>().enumerate() {
        let r = rec?;
        let slot = match r.tensor.as_str() {
            "weights_1" if r.row < n_hidden && r.col < n_in => r.row * n_in + r.col,
            "bias_1" if r.row < n_hidden && r.col == 0 => w1 + r.row,
            "weights_2" if r.row == 0 && r.col < n_hidden => w1 + n_hidden + r.col,
            "bias_2" if r.row == 0 && r.col == 0 => w1 + 2 * n_hidden,
            _ => {
                return Err(Error::ModelFile(format!(
                    "line {}: unexpected entry {}[{},{}]",
                    line + 2,
                    r.tensor,
                    r.row,
                    r.col
                )))
            }
        };
        if std::mem::replace(&mut seen[slot], true) {
            return Err(Error::ModelFile(format!("line {}: duplicate entry {}[{},{}]", line + 2, r.tensor, r.row, r.col)));
        }
        let mut params = model.parameters();
        params[slot] = r.value;
        model.set_parameters(&params)?;
    }
    let missing = seen.iter().filter(|s| !**s).count();
    if missing > 0 {
        return Err(Error::ModelFile(format!("weight table is missing {missing} parameters")));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FusionInput;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn probe(model: &FusionModel, rng: &mut ChaCha8Rng) -> Vec<FusionInput> {
        (0..16)
            .map(|_| FusionInput {
                s_a: rng.random(),
                s_t: (0..model.input_dim - 1).map(|_| rng.random()).collect(),
            })
            .collect()
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = FusionModel::init(10, &mut rng);
        let mut buf = Vec::new();
        write_model(&mut buf, &model, TrainingMetadata { seed: 1, ..Default::default() }).unwrap();
        let (back, meta) = read_model(buf.as_slice()).unwrap();
        assert_eq!(meta.seed, 1);
        for x in probe(&model, &mut rng) {
            assert!((model.forward(&x).unwrap() - back.forward(&x).unwrap()).abs() <= 1e-15);
        }
        assert_eq!(back, model);
    }

    #[test]
    fn window_ten_table_is_fifteen_by_twenty_two() {
        let model = FusionModel::zeros(10);
        let table = weight_table(&model);
        let w1: Vec<_> = table.iter().filter(|r| r.tensor == "weights_1").collect();
        assert_eq!(w1.len(), 15 * 22);
        assert_eq!(w1.iter().map(|r| r.row).max(), Some(14));
        assert_eq!(w1.iter().map(|r| r.col).max(), Some(21));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = FusionModel::init(3, &mut rng);
        let mut buf = Vec::new();
        write_weight_table(&mut buf, &model).unwrap();
        assert_eq!(read_weight_table(buf.as_slice(), 3).unwrap(), model);
    }

    #[test]
    fn truncated_files_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = FusionModel::init(2, &mut rng);
        let mut json = Vec::new();
        write_model(&mut json, &model, TrainingMetadata::default()).unwrap();
        assert!(matches!(read_model(&json[..json.len() / 2]), Err(Error::ModelFile(_))));

        let mut doc: ModelDocument = serde_json::from_slice(&json).unwrap();
        doc.weights_1.pop();
        let text = serde_json::to_vec(&doc).unwrap();
        assert!(matches!(read_model(text.as_slice()), Err(Error::ModelFile(_))));

        let mut csv_buf = Vec::new();
        write_weight_table(&mut csv_buf, &model).unwrap();
        let text = String::from_utf8(csv_buf).unwrap();
        let cut: Vec<&str> = text.lines().collect();
        let short = cut[..cut.len() - 3].join("\n");
        assert!(read_weight_table(short.as_bytes(), 2).is_err());
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut doc = ModelDocument::new(&FusionModel::zeros(1), TrainingMetadata::default());
        doc.magic = "OTHER".into();
        assert!(doc.to_model().is_err());
    }
}
