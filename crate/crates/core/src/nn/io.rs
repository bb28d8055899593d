//! Model file format: magic, version, config JSON, raw little-endian f32
//! parameter blocks in canonical layer order.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::nn::layers::LstmWeights;
use crate::nn::model::{LayerParams, ModelParameters};
use crate::nn::{count_params, LayerSpec, ModelConfig};

pub const MODEL_MAGIC: &[u8; 8] = b"ECGFMDL\0";
pub const MODEL_VERSION: u32 = 1;

/// Serialized size in bytes: header plus 4 bytes per parameter.
pub fn model_file_size(config: &ModelConfig) -> Result<usize> {
    let json = serde_json::to_vec(config)?;
    Ok(MODEL_MAGIC.len() + 4 + 4 + json.len() + 4 * count_params(config))
}

pub fn save_model(path: &Path, config: &ModelConfig, params: &ModelParameters) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let json = serde_json::to_vec(config)?;
    file.write_all(MODEL_MAGIC)?;
    file.write_all(&MODEL_VERSION.to_le_bytes())?;
    file.write_all(&(json.len() as u32).to_le_bytes())?;
    file.write_all(&json)?;
    for (_, values) in params.named_tensors() {
        let mut buf = Vec::with_capacity(values.len() * 4);
        for v in values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        file.write_all(&buf)?;
    }
    Ok(())
}

fn read_exact_block(
    file: &mut std::fs::File,
    count: usize,
    block_name: &str,
) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 4];
    file.read_exact(&mut buf).map_err(|_| {
        Error::ModelFile(format!("file truncated while reading block {block_name}"))
    })?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn read_lstm(
    file: &mut std::fs::File,
    input: usize,
    units: usize,
    name: &str,
) -> Result<LstmWeights> {
    let w = read_exact_block(file, input * 4 * units, &format!("{name}.w"))?;
    let u = read_exact_block(file, units * 4 * units, &format!("{name}.u"))?;
    let b = read_exact_block(file, 4 * units, &format!("{name}.b"))?;
    Ok(LstmWeights {
        w: Array2::from_shape_vec((input, 4 * units), w)
            .map_err(|e| Error::ModelFile(e.to_string()))?,
        u: Array2::from_shape_vec((units, 4 * units), u)
            .map_err(|e| Error::ModelFile(e.to_string()))?,
        b: Array1::from_vec(b),
    })
}

pub fn load_model(path: &Path) -> Result<(ModelConfig, ModelParameters)> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)
        .map_err(|_| Error::ModelFile("file too short for magic".into()))?;
    if &magic != MODEL_MAGIC {
        return Err(Error::ModelFile("bad magic".into()));
    }
    let mut word = [0u8; 4];
    file.read_exact(&mut word)
        .map_err(|_| Error::ModelFile("file too short for version".into()))?;
    let version = u32::from_le_bytes(word);
    if version != MODEL_VERSION {
        return Err(Error::ModelFile(format!("unsupported version {version}")));
    }
    file.read_exact(&mut word)
        .map_err(|_| Error::ModelFile("file too short for config length".into()))?;
    let json_len = u32::from_le_bytes(word) as usize;
    let mut json = vec![0u8; json_len];
    file.read_exact(&mut json)
        .map_err(|_| Error::ModelFile("file truncated in config".into()))?;
    let config: ModelConfig =
        serde_json::from_slice(&json).map_err(|e| Error::ModelFile(format!("bad config: {e}")))?;

    let mut width = config.input_width;
    let mut layers = Vec::with_capacity(config.layers.len());
    for (idx, layer) in config.layers.iter().enumerate() {
        match layer {
            LayerSpec::Lstm { units } => {
                layers.push(LayerParams::Lstm(read_lstm(
                    &mut file,
                    width,
                    *units,
                    &format!("layer{idx}.fwd"),
                )?));
                width = *units;
            }
            LayerSpec::Bilstm { units } => {
                let fwd = read_lstm(&mut file, width, *units, &format!("layer{idx}.fwd"))?;
                let bwd = read_lstm(&mut file, width, *units, &format!("layer{idx}.bwd"))?;
                layers.push(LayerParams::Bilstm { fwd, bwd });
                width = 2 * units;
            }
            LayerSpec::Dropout { .. } => layers.push(LayerParams::Dropout),
            LayerSpec::Dense { units, .. } => {
                let w = read_exact_block(&mut file, width * units, &format!("layer{idx}.w"))?;
                let b = read_exact_block(&mut file, *units, &format!("layer{idx}.b"))?;
                layers.push(LayerParams::Dense {
                    w: Array2::from_shape_vec((width, *units), w)
                        .map_err(|e| Error::ModelFile(e.to_string()))?,
                    b: Array1::from_vec(b),
                });
                width = *units;
            }
        }
    }
    let mut trailing = [0u8; 1];
    if file.read(&mut trailing)? != 0 {
        return Err(Error::ModelFile("trailing bytes after parameters".into()));
    }
    Ok((config, ModelParameters { layers }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ModelConfig, Preset};
    use std::io::Seek;

    fn small_model() -> (ModelConfig, ModelParameters) {
        let config = ModelConfig::preset(Preset::Tiny, 10, 0.25);
        let params = ModelParameters::init(&config, 123);
        (config, params)
    }

    #[test]
    fn save_load_round_trip_is_bitwise() {
        let (config, params) = small_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&path, &config, &params).unwrap();
        let (config2, params2) = load_model(&path).unwrap();
        assert_eq!(config, config2);
        assert_eq!(params, params2);
    }

    #[test]
    fn file_size_matches_formula() {
        let (config, params) = small_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&path, &config, &params).unwrap();
        let actual = std::fs::metadata(&path).unwrap().len() as usize;
        assert_eq!(actual, model_file_size(&config).unwrap());
        let json_len = serde_json::to_vec(&config).unwrap().len();
        assert_eq!(actual, 8 + 4 + 4 + json_len + 4 * 83_973);
    }

    #[test]
    fn truncated_file_names_the_missing_block() {
        let (config, params) = small_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&path, &config, &params).unwrap();
        let len = std::fs::metadata(&path).unwrap().len();
        let file = std::fs::OpenOptions::new().write(true).open(&path).unwrap();
        file.set_len(len - 10).unwrap();
        drop(file);
        match load_model(&path) {
            Err(Error::ModelFile(msg)) => {
                assert!(msg.contains("truncated"), "message: {msg}");
                assert!(msg.contains("layer"), "message: {msg}");
            }
            other => panic!("expected model file error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        std::fs::write(&path, b"NOTAMODELFILE___").unwrap();
        assert!(matches!(load_model(&path), Err(Error::ModelFile(_))));
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let (config, params) = small_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&path, &config, &params).unwrap();
        let mut file = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
        file.seek(std::io::SeekFrom::End(0)).unwrap();
        file.write_all(&[0u8; 3]).unwrap();
        drop(file);
        assert!(matches!(load_model(&path), Err(Error::ModelFile(_))));
    }
}
