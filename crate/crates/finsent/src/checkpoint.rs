//! Model checkpoint container: config plus all named tensors with shapes.
//!
//! Layout: 8-byte magic, length-prefixed config JSON, then a count of
//! records, each `name | ndims | dims | f64 data`, all little-endian.
//! Save → load → save is byte-identical.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ModelParams};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"FINSENT1";

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_record(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f64]) {
    push_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    push_u32(out, shape.len() as u32);
    for &d in shape {
        push_u64(out, d as u64);
    }
    for &v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let config_json =
        serde_json::to_vec(&model.config).map_err(|e| Error::Checkpoint(e.to_string()))?;
    push_u32(&mut out, config_json.len() as u32);
    out.extend_from_slice(&config_json);
    let named = model.params.named_params();
    push_u32(&mut out, (named.len() + 2) as u32);
    for (name, tensor) in &named {
        push_record(&mut out, name, &tensor.shape(), &tensor.data());
    }
    let w = model.params.bn_running_mean.len();
    push_record(&mut out, "bn_running_mean", &[w], &model.params.bn_running_mean);
    push_record(&mut out, "bn_running_var", &[w], &model.params.bn_running_var);
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated checkpoint file".into()));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint file", path.display())));
    }
    let config_len = r.u32()? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(config_len)?)
        .map_err(|e| Error::Checkpoint(format!("bad config block: {}", e)))?;
    config.validate()?;
    let mut model = Model::new(config, 0)?;
    let n_records = r.u32()? as usize;
    for _ in 0..n_records {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("non-UTF8 tensor name".into()))?
            .to_string();
        let ndims = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            shape.push(r.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
        }
        apply_record(&mut model.params, &name, &shape, data)?;
    }
    Ok(model)
}

fn apply_record(params: &mut ModelParams, name: &str, shape: &[usize], data: Vec<f64>) -> Result<()> {
    match name {
        "bn_running_mean" => {
            check_shape(name, shape, &[params.bn_running_mean.len()])?;
            params.bn_running_mean = data;
            Ok(())
        }
        "bn_running_var" => {
            check_shape(name, shape, &[params.bn_running_var.len()])?;
            params.bn_running_var = data;
            Ok(())
        }
        _ => {
            let tensor = find_tensor(params, name)?;
            check_shape(name, shape, &tensor.shape())?;
            tensor.set_data(data);
            Ok(())
        }
    }
}

fn find_tensor(params: &ModelParams, name: &str) -> Result<Tensor> {
    params
        .named_params()
        .into_iter()
        .find(|(n, _)| n == name)
        .map(|(_, t)| t)
        .ok_or_else(|| Error::Checkpoint(format!("unknown tensor `{}`", name)))
}

fn check_shape(name: &str, got: &[usize], want: &[usize]) -> Result<()> {
    if got != want {
        return Err(Error::Checkpoint(format!(
            "tensor `{}` has shape {:?}, expected {:?}",
            name, got, want
        )));
    }
    Ok(())
}
