//! Line-oriented text container shared by the model and policy files.
//!
//! ```text
//! <magic> <version>
//! <tag> k=v k=v ...
//! <tag> v,v,v
//! params <count>
//! v,v,... (16 per line)
//! ```
//!
//! Floats are written with the shortest representation that round-trips.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const PER_LINE: usize = 16;

#[derive(Default)]
pub(crate) struct Writer {
    out: String,
}

impl Writer {
    pub fn new(magic: &str, version: &str) -> Self {
        Writer {
            out: format!("{magic} {version}\n"),
        }
    }

    pub fn keyed(&mut self, tag: &str, pairs: &[(&str, String)]) {
        self.out.push_str(tag);
        for (k, v) in pairs {
            let _ = write!(self.out, " {k}={v}");
        }
        self.out.push('\n');
    }

    pub fn floats(&mut self, tag: &str, values: &[f64]) {
        let _ = writeln!(self.out, "{tag} {}", join(values));
    }

    pub fn block(&mut self, values: &[f64]) {
        let _ = writeln!(self.out, "params {}", values.len());
        for chunk in values.chunks(PER_LINE) {
            self.out.push_str(&join(chunk));
            self.out.push('\n');
        }
    }

    pub fn finish(self) -> String {
        self.out
    }
}

fn join(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| v.to_string()).collect();
    parts.join(",")
}

pub(crate) struct Reader<'a> {
    path: PathBuf,
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks the magic word and version on the first line.
    pub fn open(text: &'a str, path: &Path, magic: &str, version: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let mut r = Reader {
            path: path.to_path_buf(),
            lines,
            pos: 0,
        };
        let first = r.next_line()?;
        let mut words = first.split_whitespace();
        if words.next() != Some(magic) {
            return Err(r.err(format!("missing {magic:?} header")));
        }
        let found = words.next().unwrap_or("");
        if found != version {
            return Err(Error::Version {
                path: r.path.clone(),
                found: found.to_string(),
                expected: version.to_string(),
            });
        }
        Ok(r)
    }

    pub fn err(&self, msg: impl Into<String>) -> Error {
        Error::format(&self.path, self.pos, msg)
    }

    fn next_line(&mut self) -> Result<&'a str> {
        let line = self
            .lines
            .get(self.pos)
            .copied()
            .ok_or_else(|| Error::format(&self.path, self.pos + 1, "unexpected end of file"))?;
        self.pos += 1;
        Ok(line)
    }

    fn tagged(&mut self, tag: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        match line.split_once(' ') {
            Some((t, rest)) if t == tag => Ok(rest),
            _ if line == tag => Ok(""),
            _ => Err(self.err(format!("expected {tag:?} line"))),
        }
    }

    pub fn keyed(&mut self, tag: &str) -> Result<Keyed> {
        let rest = self.tagged(tag)?;
        let mut map = BTreeMap::new();
        for w in rest.split_whitespace() {
            let (k, v) = w
                .split_once('=')
                .ok_or_else(|| self.err(format!("malformed field {w:?}")))?;
            map.insert(k.to_string(), v.to_string());
        }
        Ok(Keyed {
            map,
            path: self.path.clone(),
            line: self.pos,
        })
    }

    fn parse_floats(&self, s: &str) -> Result<Vec<f64>> {
        if s.trim().is_empty() {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| self.err(format!("bad number {t:?}")))
            })
            .collect()
    }

    pub fn floats(&mut self, tag: &str, expected: usize) -> Result<Vec<f64>> {
        let rest = self.tagged(tag)?;
        let v = self.parse_floats(rest)?;
        if v.len() != expected {
            return Err(self.err(format!("{tag}: expected {expected} values, found {}", v.len())));
        }
        Ok(v)
    }

    pub fn block(&mut self, expected: usize) -> Result<Vec<f64>> {
        let rest = self.tagged("params")?;
        let count: usize = rest.trim().parse().map_err(|_| self.err("bad parameter count"))?;
        if count != expected {
            return Err(self.err(format!("expected {expected} parameters, header says {count}")));
        }
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let line = self.next_line()?;
            let vals = self.parse_floats(line)?;
            if vals.is_empty() || out.len() + vals.len() > count {
                return Err(self.err("parameter block has the wrong length"));
            }
            out.extend(vals);
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(self.err("non-finite parameter"));
        }
        Ok(out)
    }

    pub fn finish(mut self) -> Result<()> {
        while self.pos < self.lines.len() {
            if !self.next_line()?.trim().is_empty() {
                return Err(self.err("trailing data"));
            }
        }
        Ok(())
    }
}

pub(crate) struct Keyed {
    map: BTreeMap<String, String>,
    path: PathBuf,
    line: usize,
}

impl Keyed {
    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .map
            .get(key)
            .ok_or_else(|| Error::format(&self.path, self.line, format!("missing field {key:?}")))?;
        raw.parse()
            .map_err(|_| Error::format(&self.path, self.line, format!("bad value for {key:?}: {raw:?}")))
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
