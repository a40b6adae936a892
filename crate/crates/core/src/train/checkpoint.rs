//! Binary checkpoint files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "CKGCKPT\0"
//! version    u32
//! kind       u8       model kind code
//! config     str      model configuration (JSON)
//! echo       str      full run configuration (JSON)
//! digest     str      configuration digest
//! entities   u64 n, n × str
//! relations  u64 n, n × str
//! params     tensors
//! adam step  u64
//! adam m     tensors
//! adam v     tensors
//! epoch      u64
//! val MRR    u8 present flag, f64
//! crc32      u32      over every preceding byte
//!
//! str     = u64 byte length, UTF-8 bytes
//! tensors = u64 count, count × (str name, u64 rows, u64 cols, rows·cols × f64)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kg::{EntityId, Relation, Vocab};
use crate::models::{Model, ModelConfig, ModelKind};
use crate::numeric::{OptimState, ParamStore, Tensor};

const MAGIC: &[u8; 8] = b"CKGCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    /// Run configuration echoed verbatim.
    pub config_echo: String,
    pub config_digest: String,
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    pub params: ParamStore,
    pub optim: OptimState,
    pub epoch: u64,
    pub val_mrr: Option<f64>,
}

impl Checkpoint {
    pub fn kind(&self) -> ModelKind {
        self.model.kind
    }

    pub fn vocab(&self) -> Result<Vocab> {
        let entities = self
            .entities
            .iter()
            .map(EntityId::new)
            .collect::<Result<Vec<_>>>()?;
        let relations = self
            .relations
            .iter()
            .map(|r| r.parse::<Relation>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Vocab::from_parts(entities, relations))
    }

    /// Rebuilds the model, refusing a checkpoint of another kind.
    pub fn to_model(&self, expected: Option<ModelKind>) -> Result<Model> {
        if let Some(k) = expected {
            if k != self.kind() {
                return Err(Error::Checkpoint(format!(
                    "checkpoint holds a {} model, expected {k}",
                    self.kind()
                )));
            }
        }
        self.model.restore(self.params.clone())
    }
}

pub fn vocab_names(vocab: &Vocab) -> (Vec<String>, Vec<String>) {
    (
        vocab.entities().iter().map(|e| e.to_string()).collect(),
        vocab.relations().iter().map(|r| r.name()).collect(),
    )
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn tensors(&mut self, p: &ParamStore) {
        self.u64(p.len() as u64);
        for (name, t) in p.iter() {
            self.str(name);
            self.u64(t.rows() as u64);
            self.u64(t.cols() as u64);
            for x in t.data() {
                self.f64(*x);
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("unexpected end of data at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        usize::try_from(n)
            .ok()
            .filter(|n| *n <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("implausible length {n}")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("string field is not UTF-8".into()))
    }
    fn tensors(&mut self) -> Result<ParamStore> {
        let n = self.len()?;
        let mut p = ParamStore::new();
        for _ in 0..n {
            let name = self.str()?;
            let rows = self.len()?;
            let cols = self.len()?;
            let count = rows
                .checked_mul(cols)
                .filter(|c| c.saturating_mul(8) <= self.buf.len())
                .ok_or_else(|| Error::Checkpoint(format!("tensor {name} is implausibly large")))?;
            let data = (0..count).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
            p.insert(name, Tensor::from_vec(rows, cols, data)?)?;
        }
        Ok(p)
    }
}

pub fn encode_checkpoint(c: &Checkpoint) -> Result<Vec<u8>> {
    let model_json = serde_json::to_string(&c.model)
        .map_err(|e| Error::Checkpoint(format!("model configuration: {e}")))?;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u8(c.kind().code());
    w.str(&model_json);
    w.str(&c.config_echo);
    w.str(&c.config_digest);
    for names in [&c.entities, &c.relations] {
        w.u64(names.len() as u64);
        for n in names {
            w.str(n);
        }
    }
    w.tensors(&c.params);
    w.u64(c.optim.step);
    w.tensors(&c.optim.m);
    w.tensors(&c.optim.v);
    w.u64(c.epoch);
    w.u8(c.val_mrr.is_some() as u8);
    w.f64(c.val_mrr.unwrap_or(0.0));
    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    Ok(w.0)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 4 {
        return Err(Error::Checkpoint("file too short to be a checkpoint".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::Checkpoint("checksum mismatch (file truncated or corrupted)".into()));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"
        )));
    }
    let kind = ModelKind::from_code(r.u8()?)?;
    let model: ModelConfig = serde_json::from_str(&r.str()?)
        .map_err(|e| Error::Checkpoint(format!("model configuration: {e}")))?;
    if model.kind != kind {
        return Err(Error::Checkpoint("header kind disagrees with stored configuration".into()));
    }
    let config_echo = r.str()?;
    let config_digest = r.str()?;
    let mut names = || -> Result<Vec<String>> {
        let n = r.len()?;
        (0..n).map(|_| r.str()).collect()
    };
    let entities = names()?;
    let relations = names()?;
    let params = r.tensors()?;
    let step = r.u64()?;
    let m = r.tensors()?;
    let v = r.tensors()?;
    let epoch = r.u64()?;
    let has_mrr = r.u8()? != 0;
    let mrr = r.f64()?;
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes after checkpoint body".into()));
    }
    if !params.same_layout(&m) || !params.same_layout(&v) {
        return Err(Error::Checkpoint("optimizer state does not mirror the parameters".into()));
    }
    Ok(Checkpoint {
        model,
        config_echo,
        config_digest,
        entities,
        relations,
        params,
        optim: OptimState { m, v, step },
        epoch,
        val_mrr: has_mrr.then_some(mrr),
    })
}

/// Writes via a sibling temporary file and a rename.
pub fn save_checkpoint(path: &Path, c: &Checkpoint) -> Result<()> {
    let bytes = encode_checkpoint(c)?;
    let tmp = path.with_extension("ckpt.partial");
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
