//! Posterior persistence: a flat `chain,iter,param_name,value` CSV and a
//! compact little-endian binary cache.
//!
//! Cache layout (all integers little-endian):
//!
//! ```text
//! magic    b"NMIGPS01"
//! u32      country count C, then C x (u16 length, UTF-8 bytes)
//! u32      chain count K, then K x 3 f64 acceptance rates (phi, tau, ab)
//! u64      draw count D, then D x (u32 chain, u64 iter, (3C+4) f64 values)
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{AcceptanceRates, Draw, PosteriorSample};
use crate::data::{fmt_f64, write_err};
use crate::error::{Error, Result};
use crate::model::{parameter_names, ModelState};

const MAGIC: &[u8; 8] = b"NMIGPS01";

pub fn write_posterior_csv(sample: &PosteriorSample, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["chain", "iter", "param_name", "value"])
        .map_err(|e| write_err(path, e))?;
    let names = sample.parameter_names();
    for d in &sample.draws {
        let chain = d.chain.to_string();
        let iter = d.iter.to_string();
        for (name, v) in names.iter().zip(d.state.to_vec()) {
            w.write_record([chain.as_str(), iter.as_str(), name, &fmt_f64(v)])
                .map_err(|e| write_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a posterior CSV. Acceptance rates are not part of the CSV and come
/// back empty.
pub fn read_posterior_csv(path: impl AsRef<Path>) -> Result<PosteriorSample> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let mut draws: BTreeMap<(usize, usize), Vec<(String, f64)>> = BTreeMap::new();
    let mut codes = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.into(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |msg: &str| Error::Parse {
            path: path.into(),
            line,
            msg: msg.to_string(),
        };
        if rec.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let chain: usize = rec[0].parse().map_err(|_| bad("invalid chain"))?;
        let iter: usize = rec[1].parse().map_err(|_| bad("invalid iter"))?;
        let value: f64 = rec[3].parse().map_err(|_| bad("invalid value"))?;
        let name = rec[2].to_string();
        if let Some(code) = name.strip_prefix("mu[").and_then(|s| s.strip_suffix(']')) {
            if draws.is_empty() || draws.len() == 1 && draws.contains_key(&(chain, iter)) {
                codes.push(code.to_string());
            }
        }
        draws.entry((chain, iter)).or_default().push((name, value));
    }
    let names = parameter_names(&codes);
    let n_chains = draws.keys().map(|k| k.0 + 1).max().unwrap_or(0);
    let draws = draws
        .into_iter()
        .map(|((chain, iter), values)| {
            let got: Vec<&str> = values.iter().map(|(n, _)| n.as_str()).collect();
            if got != names {
                return Err(Error::Cache(format!(
                    "draw ({chain}, {iter}) does not list the expected parameters"
                )));
            }
            let v: Vec<f64> = values.into_iter().map(|(_, v)| v).collect();
            Ok(Draw {
                chain,
                iter,
                state: ModelState::from_slice(&v, codes.len())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorSample {
        country_codes: codes,
        n_chains,
        draws,
        acceptance: Vec::new(),
    })
}

pub fn write_posterior_cache(sample: &PosteriorSample, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let file = File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(sample.country_codes.len() as u32).to_le_bytes()).map_err(io)?;
    for code in &sample.country_codes {
        let bytes = code.as_bytes();
        let len = u16::try_from(bytes.len()).map_err(|_| Error::Cache("country code too long".into()))?;
        w.write_all(&len.to_le_bytes()).map_err(io)?;
        w.write_all(bytes).map_err(io)?;
    }
    w.write_all(&(sample.acceptance.len() as u32).to_le_bytes()).map_err(io)?;
    for a in &sample.acceptance {
        for v in [a.phi, a.tau, a.ab] {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.write_all(&(sample.draws.len() as u64).to_le_bytes()).map_err(io)?;
    for d in &sample.draws {
        w.write_all(&(d.chain as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(d.iter as u64).to_le_bytes()).map_err(io)?;
        for v in d.state.to_vec() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Cache("unexpected end of file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
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

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_posterior_cache(path: impl AsRef<Path>) -> Result<PosteriorSample> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(Error::Cache(format!("{} is not a posterior cache", path.display())));
    }
    let n_countries = cur.u32()? as usize;
    let mut codes = Vec::with_capacity(n_countries);
    for _ in 0..n_countries {
        let len = cur.u16()? as usize;
        let code = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| Error::Cache("country code is not UTF-8".into()))?;
        codes.push(code.to_string());
    }
    let n_chains = cur.u32()? as usize;
    let mut acceptance = Vec::with_capacity(n_chains);
    for _ in 0..n_chains {
        acceptance.push(AcceptanceRates {
            phi: cur.f64()?,
            tau: cur.f64()?,
            ab: cur.f64()?,
        });
    }
    let n_draws = cur.u64()? as usize;
    let width = 3 * n_countries + 4;
    let mut draws = Vec::with_capacity(n_draws.min(buf.len() / 8));
    let mut values = vec![0.0; width];
    for _ in 0..n_draws {
        let chain = cur.u32()? as usize;
        let iter = cur.u64()? as usize;
        for v in values.iter_mut() {
            *v = cur.f64()?;
        }
        draws.push(Draw {
            chain,
            iter,
            state: ModelState::from_slice(&values, n_countries)?,
        });
    }
    if cur.pos != buf.len() {
        return Err(Error::Cache("trailing bytes after the last draw".into()));
    }
    Ok(PosteriorSample {
        country_codes: codes,
        n_chains: n_chains.max(draws.iter().map(|d| d.chain + 1).max().unwrap_or(0)),
        draws,
        acceptance,
    })
}
