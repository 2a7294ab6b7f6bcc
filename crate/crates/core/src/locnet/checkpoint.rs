//! Checkpoint layout (all integers little-endian `u32`):
//!
//! ```text
//! magic "ALCK" | version | metadata length | metadata JSON
//! tensor count | per tensor: rank, dims..., f32 values
//! ```

use super::loss::Normalization;
use super::model::{Architecture, PoseModel};
use super::LocNetError;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"ALCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub architecture: Architecture,
    pub normalization: Normalization,
    pub seed: u64,
    pub parameter_count: usize,
}

pub fn save_checkpoint(model: &PoseModel<f32>, path: &Path) -> Result<(), LocNetError> {
    let meta = CheckpointMeta {
        architecture: model.arch.clone(),
        normalization: model.norm,
        seed: model.seed,
        parameter_count: model.parameter_count(),
    };
    let json = serde_json::to_vec(&meta)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(json.len() as u32)?;
    w.write_all(&json)?;
    let shapes = model.param_shapes();
    let params = model.params();
    w.write_u32::<LittleEndian>(params.len() as u32)?;
    for (shape, values) in shapes.iter().zip(params) {
        w.write_u32::<LittleEndian>(shape.len() as u32)?;
        for &d in shape {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        for &v in values {
            w.write_f32::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(PoseModel<f32>, CheckpointMeta), LocNetError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(LocNetError::Checkpoint("not a model checkpoint".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(LocNetError::Checkpoint(format!("unsupported version {version}")));
    }
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let meta: CheckpointMeta = serde_json::from_slice(&json)?;
    let mut model = PoseModel::<f32>::new(meta.architecture.clone(), meta.normalization, meta.seed)?;
    let shapes = model.param_shapes();
    let count = r.read_u32::<LittleEndian>()? as usize;
    if count != shapes.len() {
        return Err(LocNetError::Checkpoint(format!(
            "{count} tensors stored, architecture has {}",
            shapes.len()
        )));
    }
    for (shape, dst) in shapes.iter().zip(model.params_mut()) {
        let rank = r.read_u32::<LittleEndian>()? as usize;
        let dims = (0..rank)
            .map(|_| r.read_u32::<LittleEndian>().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if &dims != shape {
            return Err(LocNetError::Checkpoint(format!("tensor shape {dims:?}, expected {shape:?}")));
        }
        r.read_f32_into::<LittleEndian>(dst)?;
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(LocNetError::Checkpoint("trailing bytes".into()));
    }
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::locnet::ConvSpec;

    fn model() -> PoseModel<f32> {
        let arch = Architecture {
            input_size: 32,
            convs: vec![ConvSpec::new(4, 5, 2), ConvSpec::new(6, 3, 2)],
            pool_grid: 2,
            hidden: vec![8],
        };
        let norm = Normalization {
            center: Vec2::new(10.0, 20.0),
            half_extent: Vec2::new(10.0, 20.0),
        };
        PoseModel::new(arch, norm, 17).unwrap()
    }

    #[test]
    fn round_trip_preserves_parameters() {
        let mut m = model();
        m.dense[0].bias[3] = 0.125;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_checkpoint(&m, &path).unwrap();
        let (back, meta) = load_checkpoint(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(meta.parameter_count, m.parameter_count());
    }

    #[test]
    fn corrupt_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_checkpoint(&model(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(LocNetError::Checkpoint(_))));

        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(load_checkpoint(&path).is_err());

        let mut long = bytes.clone();
        long.push(0);
        std::fs::write(&path, &long).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(LocNetError::Checkpoint(_))));
    }
}
