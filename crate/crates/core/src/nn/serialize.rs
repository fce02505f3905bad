//! Versioned binary model container.
//!
//! Layout: the magic bytes, a `u32` format version, a `u32` section count,
//! then tagged sections (`PARS` parser, `PRID` predicate identifier), each a
//! 4-byte tag, a `u64` payload length and the payload. All integers and
//! reals are little-endian; strings are a `u32` byte length and UTF-8.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{Hyper, ParserModel, Vocab};
use super::tape::ParamStore;
use crate::corpus::EmbeddingTable;
use crate::error::{Error, Result};
use crate::pid::PidModel;

pub const MAGIC: &[u8; 8] = b"SJMODEL\0";
pub const VERSION: u32 = 1;

const PARSER_TAG: &[u8; 4] = b"PARS";
const PID_TAG: &[u8; 4] = b"PRID";

/// Everything a model file may hold.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelFile {
    pub parser: Option<ParserModel>,
    pub pid: Option<PidModel>,
}

impl ModelFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        let mut sections: Vec<(&[u8; 4], Vec<u8>)> = Vec::new();
        if let Some(p) = &self.parser {
            let mut body = Vec::new();
            write_parser(&mut body, p);
            sections.push((PARSER_TAG, body));
        }
        if let Some(p) = &self.pid {
            let mut body = Vec::new();
            write_pid(&mut body, p);
            sections.push((PID_TAG, body));
        }
        put_u32(&mut out, sections.len() as u32);
        for (tag, body) in sections {
            out.extend_from_slice(tag);
            out.write_u64::<LE>(body.len() as u64).expect("vec write");
            out.extend_from_slice(&body);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::ModelFormat("not a model file (bad magic)".into()));
        }
        let version = get_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let count = get_u32(&mut r)?;
        let mut file = ModelFile::default();
        for _ in 0..count {
            let mut tag = [0u8; 4];
            read_exact(&mut r, &mut tag)?;
            let len = r.read_u64::<LE>().map_err(truncated)? as usize;
            let start = r.position() as usize;
            let body = bytes
                .get(start..start.checked_add(len).ok_or_else(truncated_msg)?)
                .ok_or_else(truncated_msg)?;
            r.set_position((start + len) as u64);
            let mut br = Cursor::new(body);
            match &tag {
                t if t == PARSER_TAG => file.parser = Some(read_parser(&mut br)?),
                t if t == PID_TAG => file.pid = Some(read_pid(&mut br)?),
                other => {
                    return Err(Error::ModelFormat(format!(
                        "unknown section {:?}",
                        String::from_utf8_lossy(other)
                    )))
                }
            }
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn truncated_msg() -> Error {
    Error::ModelFormat("truncated model file".into())
}

fn truncated(_: std::io::Error) -> Error {
    truncated_msg()
}

fn read_exact(r: &mut Cursor<&[u8]>, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(truncated)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.write_u32::<LE>(v).expect("vec write");
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.write_f64::<LE>(v).expect("vec write");
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn put_strs(out: &mut Vec<u8>, items: &[String]) {
    put_u32(out, items.len() as u32);
    for s in items {
        put_str(out, s);
    }
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        put_f64(out, v);
    }
}

fn get_u32(r: &mut Cursor<&[u8]>) -> Result<u32> {
    r.read_u32::<LE>().map_err(truncated)
}

fn get_f64(r: &mut Cursor<&[u8]>) -> Result<f64> {
    r.read_f64::<LE>().map_err(truncated)
}

fn get_str(r: &mut Cursor<&[u8]>) -> Result<String> {
    let len = get_u32(r)? as usize;
    let remaining = r.get_ref().len() - r.position() as usize;
    if len > remaining {
        return Err(truncated_msg());
    }
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::ModelFormat("invalid UTF-8 string".into()))
}

fn get_strs(r: &mut Cursor<&[u8]>) -> Result<Vec<String>> {
    let n = get_u32(r)?;
    (0..n).map(|_| get_str(r)).collect()
}

fn get_f64s(r: &mut Cursor<&[u8]>, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| get_f64(r)).collect()
}

fn put_pairs(out: &mut Vec<u8>, pairs: &[(&str, usize)]) {
    put_u32(out, pairs.len() as u32);
    for (k, v) in pairs {
        put_str(out, k);
        out.write_u64::<LE>(*v as u64).expect("vec write");
    }
}

fn get_pairs(r: &mut Cursor<&[u8]>) -> Result<HashMap<String, usize>> {
    let n = get_u32(r)?;
    let mut out = HashMap::new();
    for _ in 0..n {
        let k = get_str(r)?;
        let v = r.read_u64::<LE>().map_err(truncated)? as usize;
        out.insert(k, v);
    }
    Ok(out)
}

fn put_params(out: &mut Vec<u8>, store: &ParamStore) {
    put_u32(out, store.len() as u32);
    for id in store.ids() {
        let t = store.get(id);
        put_str(out, store.name(id));
        put_u32(out, t.rows as u32);
        put_u32(out, t.cols as u32);
        put_f64s(out, &t.data);
    }
}

/// Reads tensors into `store`, whose layout must match by name and shape.
fn get_params(r: &mut Cursor<&[u8]>, store: &mut ParamStore) -> Result<()> {
    let n = get_u32(r)? as usize;
    if n != store.len() {
        return Err(Error::ModelFormat(format!(
            "expected {} tensors, found {n}",
            store.len()
        )));
    }
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = get_str(r)?;
        let rows = get_u32(r)? as usize;
        let cols = get_u32(r)? as usize;
        let t = store.get(id);
        if name != store.name(id) || rows != t.rows || cols != t.cols {
            return Err(Error::ModelFormat(format!(
                "tensor {name} {rows}x{cols} does not match expected {} {}x{}",
                store.name(id),
                t.rows,
                t.cols
            )));
        }
        let data = get_f64s(r, rows * cols)?;
        store.get_mut(id).data = data;
    }
    Ok(())
}

fn write_parser(out: &mut Vec<u8>, m: &ParserModel) {
    put_str(out, m.mode.name());
    put_pairs(out, &m.hyper.pairs());
    for v in [&m.words, &m.pos, &m.labels, &m.roles, &m.senses] {
        put_strs(out, v.items());
    }
    put_u32(out, m.lemma_senses.len() as u32);
    for (lemma, senses) in &m.lemma_senses {
        put_str(out, lemma);
        put_strs(out, senses);
    }
    let table = &m.pretrained;
    put_u32(out, table.dimension() as u32);
    put_u32(out, table.len() as u32);
    for (word, v) in table.entries() {
        put_str(out, word);
        put_f64s(out, v);
    }
    put_f64s(out, table.oov_vector());
    put_params(out, &m.params);
    match &m.syntax {
        Some(s) => {
            out.push(1);
            write_parser(out, s);
        }
        None => out.push(0),
    }
}

fn read_parser(r: &mut Cursor<&[u8]>) -> Result<ParserModel> {
    let mode = get_str(r)?.parse()?;
    let hyper = Hyper::from_pairs(&get_pairs(r)?)?;
    let mut vocabs = Vec::with_capacity(5);
    for _ in 0..5 {
        vocabs.push(Vocab::from_items(get_strs(r)?));
    }
    let n = get_u32(r)?;
    let mut lemma_senses = BTreeMap::new();
    for _ in 0..n {
        let lemma = get_str(r)?;
        lemma_senses.insert(lemma, get_strs(r)?);
    }
    let dim = get_u32(r)? as usize;
    let count = get_u32(r)?;
    let mut entries = Vec::new();
    for _ in 0..count {
        let w = get_str(r)?;
        entries.push((w, get_f64s(r, dim)?));
    }
    let oov = get_f64s(r, dim)?;
    let pretrained = EmbeddingTable::with_oov(dim, entries, oov)?;
    let mut it = vocabs.into_iter();
    let mut next = || it.next().expect("five vocabularies");
    let (words, pos, labels, roles, senses) = (next(), next(), next(), next(), next());
    // the layout is rebuilt and then overwritten, so the seed is irrelevant
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = ParserModel::assemble(mode, hyper, words, pos, labels, roles, senses, lemma_senses, pretrained, &mut rng);
    get_params(r, &mut model.params)?;
    let mut flag = [0u8; 1];
    read_exact(r, &mut flag)?;
    if flag[0] == 1 {
        model.syntax = Some(Box::new(read_parser(r)?));
    }
    Ok(model)
}

fn write_pid(out: &mut Vec<u8>, m: &PidModel) {
    put_pairs(
        out,
        &[("lemma_dim", m.lemma_dim), ("pos_dim", m.pos_dim), ("hidden", m.hidden)],
    );
    put_f64(out, m.threshold);
    put_strs(out, m.lemmas.items());
    put_strs(out, m.pos.items());
    put_params(out, &m.params);
}

fn read_pid(r: &mut Cursor<&[u8]>) -> Result<PidModel> {
    let pairs = get_pairs(r)?;
    let get = |k: &str| {
        pairs
            .get(k)
            .copied()
            .ok_or_else(|| Error::ModelFormat(format!("missing hyperparameter {k}")))
    };
    let (lemma_dim, pos_dim, hidden) = (get("lemma_dim")?, get("pos_dim")?, get("hidden")?);
    let threshold = get_f64(r)?;
    let lemmas = Vocab::from_items(get_strs(r)?);
    let pos = Vocab::from_items(get_strs(r)?);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = PidModel::assemble(lemma_dim, pos_dim, hidden, threshold, lemmas, pos, &mut rng);
    get_params(r, &mut model.params)?;
    Ok(model)
}
