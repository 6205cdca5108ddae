//! Checkpoint container.
//!
//! ```text
//! magic "ADNETCK1"
//! u32 header_len | header_len bytes of UTF-8 `key=value` lines
//! u32 tensor_count
//! tensor_count x ( u16 name_len | name | u32 rows | u32 cols | rows*cols f64 )
//! ```
//! All integers and floats little-endian. The header always carries every
//! `ModelConfig` field; training state adds extra keys and tensors.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::dense::{Dense, Matrix};
use super::{ModelConfig, Network};
use crate::error::{Error, Result};
use crate::numfmt::fmt_f64;

const MAGIC: &[u8; 8] = b"ADNETCK1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub header: BTreeMap<String, String>,
    pub tensors: Vec<(String, Matrix)>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

impl Checkpoint {
    pub fn get(&self, key: &str) -> Result<&str> {
        self.header
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| format_err(format!("missing header key `{key}`")))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| format_err(format!("header key `{key}` has unparsable value `{raw}`")))
    }

    pub fn tensor(&self, name: &str) -> Result<&Matrix> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| format_err(format!("missing tensor `{name}`")))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        let header: String = self.header.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(header.as_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, m) in &self.tensors {
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(m.rows() as u32).to_le_bytes())?;
            w.write_all(&(m.cols() as u32).to_le_bytes())?;
            for v in m.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let trunc = |e: std::io::Error| format_err(format!("truncated checkpoint: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(trunc)?;
        if &magic != MAGIC {
            return Err(format_err("not a checkpoint (bad magic)"));
        }
        let mut u32buf = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut u32buf).map_err(trunc)?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let header_len = read_u32(&mut r)? as usize;
        let mut header_bytes = vec![0u8; header_len];
        r.read_exact(&mut header_bytes).map_err(trunc)?;
        let header_text = String::from_utf8(header_bytes).map_err(|_| format_err("header is not UTF-8"))?;
        let mut header = BTreeMap::new();
        for line in header_text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format_err(format!("bad header line `{line}`")))?;
            header.insert(k.to_string(), v.to_string());
        }
        let count = read_u32(&mut r)? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let mut len = [0u8; 2];
            r.read_exact(&mut len).map_err(trunc)?;
            let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
            r.read_exact(&mut name).map_err(trunc)?;
            let name = String::from_utf8(name).map_err(|_| format_err("tensor name is not UTF-8"))?;
            let rows = read_u32(&mut r)? as usize;
            let cols = read_u32(&mut r)? as usize;
            let mut bytes = vec![0u8; rows * cols * 8];
            r.read_exact(&mut bytes).map_err(trunc)?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let m = Matrix::from_vec(rows, cols, data)
                .map_err(|_| format_err(format!("tensor `{name}` has non-finite values")))?;
            tensors.push((name, m));
        }
        Ok(Checkpoint { header, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }

    pub fn push_layers(&mut self, prefix: &str, names: &[String], layers: &[Dense]) {
        for (name, layer) in names.iter().zip(layers) {
            self.tensors
                .push((format!("{prefix}{name}.weight"), layer.weight.clone()));
            let bias = Matrix::from_vec(1, layer.bias.len(), layer.bias.clone()).expect("finite bias");
            self.tensors.push((format!("{prefix}{name}.bias"), bias));
        }
    }

    pub fn take_layers(&self, prefix: &str, names: &[String]) -> Result<Vec<Dense>> {
        names
            .iter()
            .map(|name| {
                let weight = self.tensor(&format!("{prefix}{name}.weight"))?.clone();
                let bias = self.tensor(&format!("{prefix}{name}.bias"))?;
                if bias.rows() != 1 || bias.cols() != weight.cols() {
                    return Err(Error::shape(format!("bias of {name} does not match its weight")));
                }
                Ok(Dense {
                    weight,
                    bias: bias.data().to_vec(),
                })
            })
            .collect()
    }
}

fn write_config(header: &mut BTreeMap<String, String>, c: &ModelConfig) {
    let hidden: Vec<String> = c.hidden_sizes.iter().map(ToString::to_string).collect();
    for (k, v) in [
        ("grid_len", c.grid_len.to_string()),
        ("gps_len", c.gps_len.to_string()),
        ("use_gps", c.use_gps.to_string()),
        ("use_copy_crop", c.use_copy_crop.to_string()),
        ("hidden_sizes", hidden.join(",")),
        ("latent_dim", c.latent_dim.to_string()),
        ("kl_weight", fmt_f64(c.kl_weight)),
        ("variant", c.variant().slug().to_string()),
    ] {
        header.insert(k.to_string(), v);
    }
}

fn read_config(ck: &Checkpoint) -> Result<ModelConfig> {
    let hidden = ck.get("hidden_sizes")?;
    let hidden_sizes = if hidden.is_empty() {
        Vec::new()
    } else {
        hidden
            .split(',')
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| format_err(format!("bad hidden_sizes `{hidden}`")))
            })
            .collect::<Result<_>>()?
    };
    Ok(ModelConfig {
        grid_len: ck.parse("grid_len")?,
        gps_len: ck.parse("gps_len")?,
        use_gps: ck.parse("use_gps")?,
        use_copy_crop: ck.parse("use_copy_crop")?,
        hidden_sizes,
        latent_dim: ck.parse("latent_dim")?,
        kl_weight: ck.parse("kl_weight")?,
    })
}

impl Network {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        write_config(&mut ck.header, self.config());
        ck.push_layers("", &self.layer_names(), self.layers());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = read_config(ck)?;
        let probe = Network::zeros(config.clone())?;
        let layers = ck.take_layers("", &probe.layer_names())?;
        Network::from_layers(config, layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Network::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, GridVector, ObjectCategory};
    use crate::ingest::GpsFeature;
    use crate::nn::Variant;

    #[test]
    fn round_trip_bit_identical_outputs() {
        let spec = GridSpec::new(2, 3, 10, 10).unwrap();
        for v in Variant::ALL {
            let mut c = ModelConfig::for_variant(v, spec.len());
            c.hidden_sizes = vec![7, 5];
            c.latent_dim = 4;
            c.kl_weight = 0.1;
            let net = Network::new(c, 42).unwrap();
            let mut buf = Vec::new();
            net.to_checkpoint().write_to(&mut buf).unwrap();
            let back = Network::from_checkpoint(&Checkpoint::read_from(&buf[..]).unwrap()).unwrap();
            assert_eq!(back, net);
            let g = GridVector::zeros(spec)
                .set_cell(&spec.cell(1, 2, ObjectCategory::Car).unwrap())
                .unwrap();
            let gps = v.use_gps().then(|| GpsFeature::new(0.3, 0.3, 0.3));
            let a = net.reconstruct(&g, gps.as_ref()).unwrap();
            let b = back.reconstruct(&g, gps.as_ref()).unwrap();
            assert_eq!(
                a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn rejects_corruption() {
        let net = Network::new(ModelConfig::for_variant(Variant::Vae, 16), 1).unwrap();
        let mut buf = Vec::new();
        net.to_checkpoint().write_to(&mut buf).unwrap();
        assert!(Checkpoint::read_from(&buf[..buf.len() - 1]).is_err());
        buf[0] = b'X';
        assert!(Checkpoint::read_from(&buf[..]).is_err());

        let mut ck = net.to_checkpoint();
        ck.header.insert("latent_dim".into(), "5".into());
        assert!(Network::from_checkpoint(&ck).is_err());
    }
}
