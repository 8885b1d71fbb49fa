//! Envelope assembly and byte-stable serialisation.

use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;
use simtrace::numfmt::g17;
use simtrace::{Error, Result};

#[derive(Debug, Serialize)]
pub struct Envelope {
    pub tool_version: &'static str,
    pub command: &'static str,
    pub inputs: Value,
    pub result: Value,
    pub warnings: Vec<String>,
}

impl Envelope {
    pub fn new(command: &'static str, inputs: Value, result: Value, warnings: Vec<String>) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            inputs,
            result,
            warnings,
        }
    }
}

/// Pretty JSON with every float printed as `%.17g`.
struct G17Formatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Formatter for G17Formatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(g17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = Vec::new();
    let fmt = G17Formatter {
        inner: PrettyFormatter::with_indent(b"  "),
    };
    let mut ser = serde_json::Serializer::with_formatter(&mut out, fmt);
    value
        .serialize(&mut ser)
        .expect("serialising to memory cannot fail");
    out.push(b'\n');
    out
}

/// Converts a library value to a JSON tree. Floats survive unchanged; the
/// formatting happens only at write time.
pub fn value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("library types serialise to JSON")
}

/// Minimal CSV table builder; cells are already formatted.
pub struct Table {
    rows: Vec<Vec<String>>,
    raw: Option<Vec<u8>>,
}

impl Table {
    /// Bytes already in CSV form.
    pub fn raw(bytes: Vec<u8>) -> Self {
        Self {
            rows: Vec::new(),
            raw: Some(bytes),
        }
    }

    pub fn new(header: &[&str]) -> Self {
        Self {
            rows: vec![header.iter().map(|s| s.to_string()).collect()],
            raw: None,
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn into_bytes(self) -> Vec<u8> {
        if let Some(raw) = self.raw {
            return raw;
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.rows {
            w.write_record(row).expect("in-memory csv write");
        }
        w.into_inner().expect("in-memory csv flush")
    }
}

pub fn num(v: f64) -> String {
    g17(v)
}

/// Writes the whole output in one go: to `path` through a temporary file and a
/// rename, or to stdout with a single write.
pub fn emit(bytes: &[u8], path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => {
            let dir = p
                .parent()
                .filter(|d| !d.as_os_str().is_empty())
                .unwrap_or_else(|| Path::new("."));
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
            std::fs::write(&tmp, bytes).map_err(|e| Error::Io {
                path: tmp.clone(),
                source: e,
            })?;
            std::fs::rename(&tmp, p).map_err(|e| {
                let _ = std::fs::remove_file(&tmp);
                Error::Io {
                    path: p.to_path_buf(),
                    source: e,
                }
            })
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|e| Error::Io {
                    path: "<stdout>".into(),
                    source: e,
                })
        }
    }
}
