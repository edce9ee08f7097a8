use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};

/// Gradient bytes per trainable parameter (32-bit floats).
pub const BYTES_PER_PARAM: u64 = 4;

const RESNET50_CSV: &str = include_str!("../../data/resnet50_layers.csv");

/// Trainable parameter counts per layer, in forward order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerManifest {
    layers: Vec<u64>,
    bytes_per_param: u64,
}

impl LayerManifest {
    pub fn new(layers: Vec<u64>, bytes_per_param: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("manifest has no layers".into()));
        }
        if let Some(i) = layers.iter().position(|&p| p == 0) {
            return Err(Error::InvalidArgument(format!("layer {i} has no parameters")));
        }
        if bytes_per_param == 0 {
            return Err(Error::InvalidArgument("bytes per parameter must be positive".into()));
        }
        Ok(Self {
            layers,
            bytes_per_param,
        })
    }

    /// The bundled 54-layer ResNet-50 inventory (convolutions with their
    /// batch-norm scale and shift, then the classifier).
    pub fn resnet50() -> Self {
        parse_manifest(RESNET50_CSV.as_bytes(), "resnet50_layers.csv").expect("bundled manifest is valid")
    }

    pub fn layers(&self) -> &[u64] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn bytes_per_param(&self) -> u64 {
        self.bytes_per_param
    }

    pub fn total_params(&self) -> u64 {
        self.layers.iter().sum()
    }

    pub fn layer_bytes(&self, layer: usize) -> u64 {
        self.layers[layer] * self.bytes_per_param
    }

    /// Gradient volume of one full backward pass.
    pub fn gradient_bytes(&self) -> u64 {
        self.total_params() * self.bytes_per_param
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<LayerManifest> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(BufReader::new(file), &path.display().to_string())
}

/// Parses `layer_index,param_count` rows; a header row is skipped. Indices
/// must be strictly increasing.
pub fn parse_manifest<R: Read>(input: R, name: &str) -> Result<LayerManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let mut layers = Vec::new();
    let mut last_index: Option<u64> = None;
    for (i, row) in reader.records().enumerate() {
        let line = i + 1;
        let row = row?;
        let err = |reason: String| Error::Parse {
            path: name.to_string(),
            line,
            reason,
        };
        if row.len() != 2 {
            return Err(err(format!("expected 2 fields, found {}", row.len())));
        }
        if i == 0 && row[0].chars().any(|c| c.is_ascii_alphabetic()) {
            continue;
        }
        let index: u64 = row[0]
            .parse()
            .map_err(|e| err(format!("bad layer index `{}`: {e}", &row[0])))?;
        let params: i64 = row[1]
            .parse()
            .map_err(|e| err(format!("bad parameter count `{}`: {e}", &row[1])))?;
        if params <= 0 {
            return Err(err(format!("parameter count {params} is not positive")));
        }
        if last_index.is_some_and(|l| index <= l) {
            return Err(err(format!("layer index {index} is out of order")));
        }
        last_index = Some(index);
        layers.push(params as u64);
    }
    if layers.is_empty() {
        return Err(Error::Parse {
            path: name.to_string(),
            line: 0,
            reason: "manifest has no layers".into(),
        });
    }
    LayerManifest::new(layers, BYTES_PER_PARAM)
}
