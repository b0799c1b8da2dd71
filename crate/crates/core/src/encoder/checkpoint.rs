//! `MICREC-CKPT v1`: a header line, a `config <n>` block of `key=value` lines,
//! `idmap <name> <n>` blocks of keys, then `tensor <name> <rows> <cols>` blocks
//! of row-major decimal values, one matrix row per line.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::params::{DomainParams, ModelParams, Projection};
use crate::error::{Error, Result};
use crate::graph::DomainTag;
use crate::numeric::DenseMatrix;
use crate::scalar::Scalar;

pub const CHECKPOINT_HEADER: &str = "MICREC-CKPT v1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint<T> {
    pub config: BTreeMap<String, String>,
    pub idmaps: BTreeMap<String, Vec<String>>,
    pub tensors: Vec<(String, DenseMatrix<T>)>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn tensor(&self, name: &str) -> Result<&DenseMatrix<T>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Version(format!("checkpoint lacks tensor {name:?}")))
    }

    pub fn config_value(&self, key: &str) -> Result<&str> {
        self.config
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Version(format!("checkpoint lacks config key {key:?}")))
    }

    /// Appends all parameter tensors under `prefix`.
    pub fn push_params(&mut self, prefix: &str, params: &ModelParams<T>) {
        for (name, m) in params.named_tensors() {
            self.tensors.push((format!("{prefix}{name}"), m.clone()));
        }
    }

    pub fn params(&self, prefix: &str) -> Result<ModelParams<T>> {
        let get = |name: &str| self.tensor(&format!("{prefix}{name}")).cloned();
        let dom = |tag: DomainTag| -> Result<DomainParams<T>> {
            Ok(DomainParams {
                user_templates: get(&format!("{tag}.user_templates"))?,
                item_templates: get(&format!("{tag}.item_templates"))?,
                bias_user: get(&format!("{tag}.bias_user"))?,
                bias_item: get(&format!("{tag}.bias_item"))?,
                se_projection: get(&format!("{tag}.se_projection"))?,
            })
        };
        let proj = |p: &str| -> Result<Projection<T>> {
            Ok(Projection {
                w1: get(&format!("{p}.w1"))?,
                b1: get(&format!("{p}.b1"))?,
                w2: get(&format!("{p}.w2"))?,
                b2: get(&format!("{p}.b2"))?,
            })
        };
        let a = dom(DomainTag::A)?;
        let dim = a.bias_user.cols();
        let params = ModelParams {
            dim,
            domains: [a, dom(DomainTag::B)?],
            proj_a: proj("proj_a")?,
            proj_b: proj("proj_b")?,
        };
        for (name, m) in params.named_tensors() {
            let ok = match name.rsplit('.').next() {
                Some("user_templates") | Some("item_templates") | Some("bias_user") | Some("bias_item") | Some("b1")
                | Some("b2") => m.cols() == dim,
                _ => m.shape() == (dim, dim),
            };
            if !ok {
                return Err(Error::Version(format!("tensor {name} has shape {:?} for dim {dim}", m.shape())));
            }
        }
        Ok(params)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<checkpoint>", e);
        writeln!(w, "{CHECKPOINT_HEADER}").map_err(io)?;
        writeln!(w, "config {}", self.config.len()).map_err(io)?;
        for (k, v) in &self.config {
            writeln!(w, "{k}={v}").map_err(io)?;
        }
        for (name, keys) in &self.idmaps {
            writeln!(w, "idmap {name} {}", keys.len()).map_err(io)?;
            for k in keys {
                writeln!(w, "{k}").map_err(io)?;
            }
        }
        for (name, m) in &self.tensors {
            writeln!(w, "tensor {name} {} {}", m.rows(), m.cols()).map_err(io)?;
            for r in 0..m.rows() {
                let line: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
                writeln!(w, "{}", line.join(" ")).map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R, source: &str) -> Result<Self> {
        let mut lines = r.lines().enumerate().map(|(n, l)| (n + 1, l));
        let bad = |line: usize, msg: String| Error::Parse {
            path: source.to_string(),
            line,
            msg,
        };
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n, l)),
                Some((n, Err(e))) => Err(bad(n, e.to_string())),
                None => Err(bad(0, format!("unexpected end of file, expected {what}"))),
            }
        };
        let (_, header) = next("header")?;
        if header != CHECKPOINT_HEADER {
            return Err(Error::Version(format!(
                "{source}: expected `{CHECKPOINT_HEADER}`, found {header:?}"
            )));
        }
        let mut ck = Checkpoint::default();
        let count = |n: usize, s: &str| s.parse::<usize>().map_err(|_| bad(n, format!("bad count {s:?}")));
        loop {
            let (n, line) = match next("section") {
                Ok(x) => x,
                Err(Error::Parse { line: 0, .. }) => break,
                Err(e) => return Err(e),
            };
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(' ').collect();
            match parts.as_slice() {
                ["config", c] => {
                    for _ in 0..count(n, c)? {
                        let (n, kv) = next("config entry")?;
                        let (k, v) = kv.split_once('=').ok_or_else(|| bad(n, "expected key=value".into()))?;
                        ck.config.insert(k.to_string(), v.to_string());
                    }
                }
                ["idmap", name, c] => {
                    let mut keys = Vec::new();
                    for _ in 0..count(n, c)? {
                        keys.push(next("id map key")?.1);
                    }
                    ck.idmaps.insert(name.to_string(), keys);
                }
                ["tensor", name, rows, cols] => {
                    let (rows, cols) = (count(n, rows)?, count(n, cols)?);
                    let mut data = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        let (n, l) = next("tensor row")?;
                        let before = data.len();
                        for tok in l.split(' ').filter(|t| !t.is_empty()) {
                            let v: T = tok.parse().map_err(|_| bad(n, format!("bad value {tok:?}")))?;
                            if !v.is_finite() {
                                return Err(bad(n, format!("non-finite value in {name}")));
                            }
                            data.push(v);
                        }
                        if data.len() - before != cols {
                            return Err(bad(n, format!("expected {cols} values in {name}")));
                        }
                    }
                    ck.tensors.push((name.to_string(), DenseMatrix::from_vec(rows, cols, data)?));
                }
                _ => return Err(bad(n, format!("unknown section {line:?}"))),
            }
        }
        if let Some(p) = ck.config.get("precision") {
            if p != T::TAG {
                return Err(Error::Version(format!(
                    "{source}: checkpoint precision {p} cannot load as {}",
                    T::TAG
                )));
            }
        }
        Ok(ck)
    }
}
