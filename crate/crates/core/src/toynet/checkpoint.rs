//! Checkpoints: all parameters flattened into one raw tensor plus a JSON
//! manifest naming each slice.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_raw_tensor, write_raw_tensor};
use crate::plane::Tensor;

use super::net::ToyWsdNet;

pub const WEIGHTS_FILE: &str = "checkpoint.utsr";
pub const MANIFEST_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Element offset into the flat parameter vector.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub num_categories: usize,
    pub params: Vec<ParamEntry>,
}

pub fn manifest(net: &ToyWsdNet) -> Manifest {
    let mut offset = 0;
    let mut params = Vec::new();
    for l in &net.layers {
        for (suffix, shape) in [("weight", l.weight_shape().to_vec()), ("bias", vec![l.out_ch])] {
            let n: usize = shape.iter().product();
            params.push(ParamEntry {
                name: format!("{}.{suffix}", l.name),
                shape,
                offset,
            });
            offset += n;
        }
    }
    Manifest {
        num_categories: net.num_categories,
        params,
    }
}

pub fn flatten(net: &ToyWsdNet) -> Tensor {
    let data: Vec<f32> = net
        .layers
        .iter()
        .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
        .collect();
    Tensor::new(vec![data.len()], data).expect("rank-1 tensor")
}

/// Rebuilds a network, checking every manifest entry against the layout.
pub fn unflatten(m: &Manifest, flat: &Tensor) -> Result<ToyWsdNet> {
    let mut net = ToyWsdNet::zeros(m.num_categories)?;
    let expected = manifest(&net);
    if expected.params != m.params {
        return Err(Error::shape(
            "checkpoint manifest does not match the network layout".to_string(),
        ));
    }
    if flat.rank() != 1 || flat.len() != net.param_count() {
        return Err(Error::shape(format!(
            "checkpoint holds {:?}, network needs {} parameters",
            flat.dims(),
            net.param_count()
        )));
    }
    let mut data = flat.data();
    for l in &mut net.layers {
        let (w, rest) = data.split_at(l.weight.len());
        let (b, rest) = rest.split_at(l.bias.len());
        l.weight.copy_from_slice(w);
        l.bias.copy_from_slice(b);
        data = rest;
    }
    Ok(net)
}

pub fn save(net: &ToyWsdNet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_raw_tensor(&flatten(net), dir.join(WEIGHTS_FILE))?;
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest(net)).expect("manifest serializes");
    std::fs::write(&path, json + "\n").map_err(|source| Error::Io { path, source })
}

pub fn load(dir: impl AsRef<Path>) -> Result<ToyWsdNet> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Decode {
        path,
        msg: e.to_string(),
    })?;
    unflatten(&m, &read_raw_tensor(dir.join(WEIGHTS_FILE))?)
}
