//! NNP1 parameter checkpoint format.
//!
//! Little-endian throughout:
//!   magic "NNP1"
//!   u32 block count
//!   per block: u32 name length, UTF-8 name,
//!              u32 ndim, u32 dims[ndim],
//!              f32 payload (prod(dims) values, row-major)
//!
//! Composite models serialize as named blocks with dotted prefixes; an MLP
//! with prefix `p` owns `p.acts` (activation codes) plus `p.{l}.w` / `p.{l}.b`
//! per layer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::mlp::{Activation, Mlp};
use super::tensor::Tensor;
use crate::numcore::kernel::Net;
use crate::{Error, Result};

pub const NNP1_MAGIC: &[u8; 4] = b"NNP1";

fn write_u32(w: &mut impl Write, v: u32, path: &Path) -> Result<()> {
    w.write_all(&v.to_le_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(u32::from_le_bytes(buf))
}

pub fn save_blocks(path: &Path, blocks: &[(String, Tensor)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    w.write_all(NNP1_MAGIC)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    write_u32(&mut w, blocks.len() as u32, path)?;
    for (name, tensor) in blocks {
        tensor.assert_finite(name)?;
        let bytes = name.as_bytes();
        write_u32(&mut w, bytes.len() as u32, path)?;
        w.write_all(bytes)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        write_u32(&mut w, tensor.shape().len() as u32, path)?;
        for &d in tensor.shape() {
            write_u32(&mut w, d as u32, path)?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())
                .map_err(|e| Error::io(path.display().to_string(), e))?;
        }
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_blocks(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    if &magic != NNP1_MAGIC {
        return Err(Error::Parse {
            what: format!("{}", path.display()),
            detail: format!("bad magic {magic:?}, want {NNP1_MAGIC:?}"),
        });
    }
    let count = read_u32(&mut r, path)?;
    let mut blocks = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = read_u32(&mut r, path)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let name = String::from_utf8(name_bytes).map_err(|e| Error::Parse {
            what: format!("{}", path.display()),
            detail: format!("block name not UTF-8: {e}"),
        })?;
        let ndim = read_u32(&mut r, path)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u32(&mut r, path)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut payload = vec![0u8; n * 4];
        r.read_exact(&mut payload)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tensor = Tensor::new(shape, data)?;
        tensor.assert_finite(&name)?;
        blocks.push((name, tensor));
    }
    Ok(blocks)
}

pub fn mlp_to_blocks(prefix: &str, mlp: &Mlp, out: &mut Vec<(String, Tensor)>) {
    let acts: Vec<f32> = mlp.activations().iter().map(|a| a.code() as f32).collect();
    out.push((format!("{prefix}.acts"), Tensor::from_vec(acts)));
    for l in 0..mlp.n_layers() {
        out.push((format!("{prefix}.{l}.w"), mlp.weight(l)));
        out.push((format!("{prefix}.{l}.b"), mlp.bias(l)));
    }
}

pub fn find_block<'a>(blocks: &'a [(String, Tensor)], name: &str) -> Result<&'a Tensor> {
    blocks
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, t)| t)
        .ok_or_else(|| Error::Parse {
            what: "NNP1 blocks".into(),
            detail: format!("missing block {name:?}"),
        })
}

pub fn mlp_from_blocks(prefix: &str, blocks: &[(String, Tensor)]) -> Result<Mlp> {
    let acts_t = find_block(blocks, &format!("{prefix}.acts"))?;
    let n_layers = acts_t.len();
    let mut acts = Vec::with_capacity(n_layers);
    for &code in acts_t.data() {
        acts.push(Activation::from_code(code as u32)?);
    }
    let mut dims = Vec::with_capacity(n_layers + 1);
    let mut w = Vec::new();
    let mut b = Vec::new();
    for l in 0..n_layers {
        let wt = find_block(blocks, &format!("{prefix}.{l}.w"))?;
        let bt = find_block(blocks, &format!("{prefix}.{l}.b"))?;
        let (out, inn) = match wt.shape() {
            [o, i] => (*o, *i),
            other => {
                return Err(Error::Parse {
                    what: format!("{prefix}.{l}.w"),
                    detail: format!("want rank-2 weights, got {other:?}"),
                })
            }
        };
        if bt.len() != out {
            return Err(Error::Parse {
                what: format!("{prefix}.{l}.b"),
                detail: format!("bias length {} does not match {out} rows", bt.len()),
            });
        }
        if l == 0 {
            dims.push(inn);
        } else if dims[l] != inn {
            return Err(Error::Parse {
                what: format!("{prefix}.{l}.w"),
                detail: format!("input width {inn} does not chain with {}", dims[l]),
            });
        }
        dims.push(out);
        w.push(wt.data().to_vec());
        b.push(bt.data().to_vec());
    }
    Ok(Mlp {
        net: Net {
            dims,
            acts,
            w,
            b,
        },
    })
}
