//! Binary checkpoint format.
//!
//! ```text
//! "DFCK" | u32 LE version | u32 LE header length | JSON header | f32 LE data
//! ```
//!
//! The header carries the schedule, network config, epoch, loss, seed, and an
//! ordered manifest of `(name, shape, offset)` where `offset` is the byte
//! position of each array within the data section.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::denoiser::{ParamTensor, ParameterSet, UNet, UNetConfig, UNetDenoiser};
use crate::error::{Error, Result};
use crate::schedule::ScheduleConfig;

pub const MAGIC: &[u8; 4] = b"DFCK";
pub const FORMAT_VERSION: u32 = 1;
const PREAMBLE: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub schedule: ScheduleConfig,
    pub unet: UNetConfig,
    pub params: ParameterSet,
    pub epoch: usize,
    pub loss: f64,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schedule: ScheduleConfig,
    unet: UNetConfig,
    epoch: usize,
    loss: f64,
    seed: u64,
    parameters: Vec<ManifestEntry>,
}

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        offset,
        reason: reason.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let raw = bytes
        .get(offset..offset + 4)
        .ok_or_else(|| format_err(bytes.len(), "file truncated in preamble"))?;
    Ok(u32::from_le_bytes(raw.try_into().expect("four bytes")))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let parameters = self
            .params
            .iter()
            .map(|t| {
                let entry = ManifestEntry {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    offset,
                };
                offset += t.data.len() * 4;
                entry
            })
            .collect();
        let header = Header {
            schedule: self.schedule,
            unet: self.unet.clone(),
            epoch: self.epoch,
            loss: self.loss,
            seed: self.seed,
            parameters,
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Config(e.to_string()))?;
        let header_len = u32::try_from(json.len())
            .map_err(|_| Error::Config("checkpoint header too large".into()))?;
        let mut out = Vec::with_capacity(PREAMBLE + json.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.params.iter() {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.get(..4) != Some(MAGIC.as_slice()) {
            return Err(format_err(0, "bad magic"));
        }
        let version = read_u32(bytes, 4)?;
        if version != FORMAT_VERSION {
            return Err(format_err(4, format!("unsupported version {version}")));
        }
        let header_len = read_u32(bytes, 8)? as usize;
        let data_start = PREAMBLE + header_len;
        let json = bytes
            .get(PREAMBLE..data_start)
            .ok_or_else(|| format_err(bytes.len(), "file truncated in header"))?;
        let header: Header = serde_json::from_slice(json).map_err(|e| {
            format_err(
                PREAMBLE + e.column().saturating_sub(1),
                format!("bad header: {e}"),
            )
        })?;

        let net = UNet::new(header.unet.clone())
            .map_err(|e| format_err(PREAMBLE, format!("bad network config: {e}")))?;
        let layout = net.layout();
        if layout.len() != header.parameters.len() {
            return Err(format_err(
                PREAMBLE,
                format!(
                    "manifest lists {} arrays, config needs {}",
                    header.parameters.len(),
                    layout.len()
                ),
            ));
        }
        let data = &bytes[data_start..];
        let mut expected = 0;
        let mut tensors = Vec::with_capacity(layout.len());
        for ((name, shape), entry) in layout.into_iter().zip(header.parameters) {
            if entry.name != name || entry.shape != shape || entry.offset != expected {
                return Err(format_err(
                    PREAMBLE,
                    format!(
                        "manifest entry {} does not match layout entry {name}",
                        entry.name
                    ),
                ));
            }
            let len = shape.iter().product::<usize>() * 4;
            let raw = data
                .get(expected..expected + len)
                .ok_or_else(|| format_err(bytes.len(), format!("file truncated in {name}")))?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
                .collect();
            tensors.push(ParamTensor {
                name,
                shape,
                data: values,
            });
            expected += len;
        }
        if data.len() != expected {
            return Err(format_err(
                data_start + expected,
                "trailing bytes after parameter data",
            ));
        }
        header
            .schedule
            .build()
            .map_err(|e| format_err(PREAMBLE, format!("bad schedule: {e}")))?;
        Ok(Self {
            schedule: header.schedule,
            unet: header.unet,
            params: ParameterSet::new(tensors)?,
            epoch: header.epoch,
            loss: header.loss,
            seed: header.seed,
        })
    }

    /// Writes through a temporary sibling and renames, so a crash never
    /// leaves a half-written checkpoint at `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("ckpt.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn denoiser(&self) -> Result<UNetDenoiser> {
        UNetDenoiser::new(self.unet.clone(), self.params.clone())
    }
}

pub fn checkpoint_save(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    ckpt.save(path)
}

pub fn checkpoint_load(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}
