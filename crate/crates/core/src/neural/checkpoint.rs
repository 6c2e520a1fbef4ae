//! Checkpoint files.
//!
//! ```text
//! EVPIRANK-CKPT v1
//! model <name>
//! meta <key> <value>          (zero or more)
//! tensors <count>
//! <name> <rows> <cols>        (one line per tensor)
//! data
//! <little-endian f64 values, row-major, in manifest order>
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::params::ParamSet;
use super::Matrix;
use crate::error::{Error, Result};

const HEADER: &str = "EVPIRANK-CKPT v1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: String,
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn new(model: impl Into<String>) -> Self {
        Checkpoint {
            model: model.into(),
            meta: BTreeMap::new(),
            tensors: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_owned(), value.to_string());
        self
    }

    pub fn push_params<P: ParamSet>(&mut self, prefix: &str, params: &P) {
        for (name, t) in params.tensor_names().into_iter().zip(params.tensors()) {
            let name = if prefix.is_empty() {
                name
            } else {
                format!("{prefix}.{name}")
            };
            self.tensors.push((name, t.clone()));
        }
    }

    pub fn meta_value<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Checkpoint(format!("missing or bad meta `{key}`")))
    }

    pub fn tensor(&self, name: &str) -> Result<&Matrix> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
    }

    /// Copies tensors named `<prefix>.<name>` into `params`, checking shapes.
    pub fn fill_params<P: ParamSet>(&self, prefix: &str, params: &mut P) -> Result<()> {
        let names = params.tensor_names();
        for (name, dst) in names.into_iter().zip(params.tensors_mut()) {
            let full = if prefix.is_empty() {
                name
            } else {
                format!("{prefix}.{name}")
            };
            let src = self.tensor(&full)?;
            if src.shape() != dst.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{full}` has shape {:?}, expected {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            *dst = src.clone();
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{HEADER}")?;
        writeln!(w, "model {}", self.model)?;
        for (k, v) in &self.meta {
            writeln!(w, "meta {k} {v}")?;
        }
        writeln!(w, "tensors {}", self.tensors.len())?;
        for (name, t) in &self.tensors {
            writeln!(w, "{name} {} {}", t.rows(), t.cols())?;
        }
        writeln!(w, "data")?;
        for (_, t) in &self.tensors {
            for v in t.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line_no = 0;
        let mut next_line = |r: &mut R| -> Result<(usize, String)> {
            let mut s = String::new();
            if r.read_line(&mut s)? == 0 {
                return Err(Error::Checkpoint("unexpected end of file".into()));
            }
            line_no += 1;
            Ok((line_no, s.trim_end_matches('\n').to_owned()))
        };
        let (n, header) = next_line(&mut r)?;
        if header != HEADER {
            return Err(Error::parse(n, format!("bad checkpoint header `{header}`")));
        }
        let (n, model) = next_line(&mut r)?;
        let model = model
            .strip_prefix("model ")
            .ok_or_else(|| Error::parse(n, "expected `model <name>`"))?
            .to_owned();
        let mut meta = BTreeMap::new();
        let count = loop {
            let (n, line) = next_line(&mut r)?;
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest
                    .split_once(' ')
                    .ok_or_else(|| Error::parse(n, "expected `meta <key> <value>`"))?;
                meta.insert(k.to_owned(), v.to_owned());
            } else if let Some(rest) = line.strip_prefix("tensors ") {
                break rest.parse::<usize>().map_err(|_| Error::parse(n, "bad tensor count"))?;
            } else {
                return Err(Error::parse(n, format!("unexpected line `{line}`")));
            }
        };
        let mut manifest = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, line) = next_line(&mut r)?;
            let mut parts = line.rsplitn(3, ' ');
            let (cols, rows, name) = match (parts.next(), parts.next(), parts.next()) {
                (Some(c), Some(r), Some(name)) => (c, r, name),
                _ => return Err(Error::parse(n, "expected `<name> <rows> <cols>`")),
            };
            let rows: usize = rows.parse().map_err(|_| Error::parse(n, "bad row count"))?;
            let cols: usize = cols.parse().map_err(|_| Error::parse(n, "bad column count"))?;
            manifest.push((name.to_owned(), rows, cols));
        }
        let (n, line) = next_line(&mut r)?;
        if line != "data" {
            return Err(Error::parse(n, "expected `data`"));
        }
        let mut tensors = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for (name, rows, cols) in manifest {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                r.read_exact(&mut buf)
                    .map_err(|_| Error::Checkpoint(format!("truncated data for `{name}`")))?;
                data.push(f64::from_le_bytes(buf));
            }
            tensors.push((name, Matrix::new(rows, cols, data)?));
        }
        if r.read(&mut buf)? != 0 {
            return Err(Error::Checkpoint("trailing bytes after tensor data".into()));
        }
        Ok(Checkpoint { model, meta, tensors })
    }
}
