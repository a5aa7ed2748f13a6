//! Binary checkpoint format.
//!
//! ```text
//! "PGAN" | u16 version | u32 echo_len | echo (UTF-8 key=value lines)
//! u64 step | u64 rng seed | u64 rng stream | u128 rng word position
//! u64 adam_g.t | u64 adam_d.t | u32 record count
//! records: u16 name_len | name | u8 rank | rank x u32 extents | f32 data
//! ```
//!
//! All integers and floats are little-endian. Record names are prefixed
//! with their group: `g/`, `d/`, `g.m/`, `g.v/`, `d.m/`, `d.v/`, `buf/`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, ParamSet};
use crate::rng::RngSnapshot;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"PGAN";
pub const VERSION: u16 = 1;

/// Everything needed to resume training bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Ordered `key=value` pairs of the producing configuration.
    pub config_echo: Vec<(String, String)>,
    /// Completed training steps.
    pub step: u64,
    /// Position of the image buffer's random stream.
    pub rng: RngSnapshot,
    pub generator: ParamSet<f32>,
    pub discriminator: ParamSet<f32>,
    pub adam_g: AdamState<f32>,
    pub adam_d: AdamState<f32>,
    pub buffer: Vec<Tensor<f32>>,
}

impl Checkpoint {
    pub fn echo(&self, key: &str) -> Option<&str> {
        self.config_echo.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let echo: String = self.config_echo.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        out.extend_from_slice(&(echo.len() as u32).to_le_bytes());
        out.extend_from_slice(echo.as_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.rng.seed.to_le_bytes());
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        out.extend_from_slice(&self.adam_g.t.to_le_bytes());
        out.extend_from_slice(&self.adam_d.t.to_le_bytes());

        let mut records: Vec<(String, &Tensor<f32>)> = Vec::new();
        for (prefix, ps, adam) in [("g", &self.generator, &self.adam_g), ("d", &self.discriminator, &self.adam_d)] {
            for (name, t) in ps.iter() {
                records.push((format!("{prefix}/{name}"), t));
            }
            for ((name, _), m) in ps.iter().zip(&adam.m) {
                records.push((format!("{prefix}.m/{name}"), m));
            }
            for ((name, _), v) in ps.iter().zip(&adam.v) {
                records.push((format!("{prefix}.v/{name}"), v));
            }
        }
        for (i, t) in self.buffer.iter().enumerate() {
            records.push((format!("buf/{i}"), t));
        }

        out.extend_from_slice(&(records.len() as u32).to_le_bytes());
        for (name, t) in records {
            if name.len() > u16::MAX as usize || t.rank() > u8::MAX as usize {
                return Err(Error::Contract(format!("record {name} cannot be encoded")));
            }
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &d in t.shape() {
                let d = u32::try_from(d).map_err(|_| Error::Contract(format!("extent {d} of {name} exceeds u32")))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Decodes a checkpoint; Adam hyperparameters are not stored and are
    /// taken from `adam`.
    pub fn from_bytes(bytes: &[u8], adam: AdamConfig) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint: bad magic".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "checkpoint version {version} unsupported (expected {VERSION})"
            )));
        }
        let echo_len = r.u32()? as usize;
        let echo = std::str::from_utf8(r.take(echo_len)?)
            .map_err(|_| Error::Corrupt("config echo is not UTF-8".into()))?;
        let config_echo = echo
            .lines()
            .map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::Corrupt(format!("malformed echo line {l:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let step = r.u64()?;
        let rng = RngSnapshot {
            seed: r.u64()?,
            stream: r.u64()?,
            word_pos: u128::from_le_bytes(r.take(16)?.try_into().unwrap()),
        };
        let t_g = r.u64()?;
        let t_d = r.u64()?;

        let mut generator = ParamSet::new();
        let mut discriminator = ParamSet::new();
        let mut moments: [Vec<Tensor<f32>>; 4] = Default::default();
        let mut buffer = Vec::new();
        let count = r.u32()?;
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Corrupt("record name is not UTF-8".into()))?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let len = len
                .filter(|&n| n.checked_mul(4).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| Error::Corrupt(format!("record {name} extends past end of file")))?;
            let data = r
                .take(4 * len)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::new(&shape, data).map_err(|e| Error::Corrupt(format!("record {name}: {e}")))?;
            let (group, param) = name
                .split_once('/')
                .ok_or_else(|| Error::Corrupt(format!("record {name} has no group")))?;
            match group {
                "g" => {
                    generator.insert(param, t);
                }
                "d" => {
                    discriminator.insert(param, t);
                }
                "g.m" => moments[0].push(t),
                "g.v" => moments[1].push(t),
                "d.m" => moments[2].push(t),
                "d.v" => moments[3].push(t),
                "buf" => buffer.push(t),
                _ => return Err(Error::Corrupt(format!("unknown record group {group}"))),
            }
        }
        if r.remaining() != 0 {
            return Err(Error::Corrupt(format!("{} trailing bytes", r.remaining())));
        }
        let [gm, gv, dm, dv] = moments;
        if gm.len() != generator.len() || gv.len() != generator.len() || dm.len() != discriminator.len() || dv.len() != discriminator.len() {
            return Err(Error::Corrupt("optimizer moments do not match parameters".into()));
        }
        Ok(Self {
            config_echo,
            step,
            rng,
            generator,
            discriminator,
            adam_g: AdamState { config: adam, m: gm, v: gv, t: t_g },
            adam_d: AdamState { config: adam, m: dm, v: dv, t: t_d },
            buffer,
        })
    }

    /// Writes via a temporary sibling and rename, so an interrupted save never
    /// leaves a truncated checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, adam: AdamConfig) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, adam)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Corrupt(format!(
                "truncated: wanted {n} bytes at offset {}, {} left",
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
