//! Reader and writer for the NPY array format.
//!
//! Only the subset needed for feature dumps is accepted: little-endian `f4`/`f8`
//! payloads in C order with one to three dimensions. Header versions 1.0, 2.0 and
//! 3.0 are decoded; the writer always emits 1.0 with the same 64-byte header
//! alignment numpy uses, so files written here are byte-identical to `np.save`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";

const ALIGN: usize = 64;
const MAX_DIMS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn descr(self) -> &'static str {
        match self {
            Dtype::F32 => "<f4",
            Dtype::F64 => "<f8",
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// A decoded array. Values are always held as `f64`; `dtype` records what was on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub dtype: Dtype,
    pub data: Vec<f64>,
}

impl NpyArray {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Decodes a complete NPY file image.
pub fn decode(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic);
    }
    let rest = &bytes[MAGIC.len()..];
    if rest.len() < 2 {
        return Err(Error::MalformedHeader("missing version bytes".into()));
    }
    let (major, minor) = (rest[0], rest[1]);
    let rest = &rest[2..];
    let (header_len, rest) = match major {
        1 => {
            if rest.len() < 2 {
                return Err(Error::MalformedHeader("missing header length".into()));
            }
            (u16::from_le_bytes([rest[0], rest[1]]) as usize, &rest[2..])
        }
        2 | 3 => {
            if rest.len() < 4 {
                return Err(Error::MalformedHeader("missing header length".into()));
            }
            let len = u32::from_le_bytes([rest[0], rest[1], rest[2], rest[3]]) as usize;
            (len, &rest[4..])
        }
        _ => return Err(Error::UnsupportedVersion(major, minor)),
    };
    if minor != 0 {
        return Err(Error::UnsupportedVersion(major, minor));
    }
    if rest.len() < header_len {
        return Err(Error::MalformedHeader(format!(
            "header declares {header_len} bytes but only {} remain",
            rest.len()
        )));
    }
    let (header_bytes, payload) = rest.split_at(header_len);
    let header = std::str::from_utf8(header_bytes)
        .map_err(|_| Error::MalformedHeader("header is not valid text".into()))?;
    let header = parse_header(header)?;

    let count = header
        .shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::MalformedHeader("shape overflows".into()))?;
    let expected = count
        .checked_mul(header.dtype.size())
        .ok_or_else(|| Error::MalformedHeader("shape overflows".into()))?;
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::MalformedHeader(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }

    let data: Vec<f64> = match header.dtype {
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { index });
    }

    Ok(NpyArray {
        shape: header.shape,
        dtype: header.dtype,
        data,
    })
}

pub fn read(path: &Path) -> Result<NpyArray> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Encodes `data` (C order) with the given shape. `f32` output narrows each value.
pub fn encode(shape: &[usize], data: &[f64], dtype: Dtype) -> Result<Vec<u8>> {
    if shape.is_empty() || shape.len() > MAX_DIMS {
        return Err(Error::UnsupportedLayout(format!(
            "{} dimensions (supported: 1 to {MAX_DIMS})",
            shape.len()
        )));
    }
    let count: usize = shape.iter().product();
    if count != data.len() {
        return Err(Error::ShapeMismatch(format!(
            "shape {shape:?} holds {count} values, got {}",
            data.len()
        )));
    }
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { index });
    }

    let mut dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': (",
        dtype.descr()
    );
    for (i, d) in shape.iter().enumerate() {
        if i > 0 {
            dict.push_str(", ");
        }
        write!(dict, "{d}").unwrap();
    }
    if shape.len() == 1 {
        dict.push(',');
    }
    dict.push_str("), }");
    let preamble = MAGIC.len() + 2 + 2;
    let unpadded = preamble + dict.len() + 1;
    let padding = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.extend(std::iter::repeat_n(' ', padding));
    dict.push('\n');
    let header_len = u16::try_from(dict.len())
        .map_err(|_| Error::UnsupportedLayout("header too long for version 1.0".into()))?;

    let mut out = Vec::with_capacity(preamble + dict.len() + count * dtype.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    match dtype {
        Dtype::F64 => data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Dtype::F32 => data
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
    }
    Ok(out)
}

pub fn write(path: &Path, shape: &[usize], data: &[f64], dtype: Dtype) -> Result<()> {
    let bytes = encode(shape, data, dtype)?;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

#[derive(Debug)]
struct Header {
    dtype: Dtype,
    shape: Vec<usize>,
}

#[derive(Debug, PartialEq)]
enum Literal {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

fn parse_header(text: &str) -> Result<Header> {
    let mut p = LiteralParser::new(text);
    let entries = p.dict()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(Error::MalformedHeader("unexpected text after header dict".into()));
    }

    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    for (key, value) in entries {
        let slot = match key.as_str() {
            "descr" => &mut descr,
            "fortran_order" => &mut fortran,
            "shape" => &mut shape,
            other => {
                return Err(Error::MalformedHeader(format!("unexpected key {other:?}")));
            }
        };
        if slot.replace(value).is_some() {
            return Err(Error::MalformedHeader(format!("duplicate key {key:?}")));
        }
    }

    let dtype = match descr {
        Some(Literal::Str(s)) => match s.as_str() {
            "<f8" => Dtype::F64,
            "<f4" => Dtype::F32,
            _ => return Err(Error::UnsupportedDtype(s)),
        },
        Some(_) => return Err(Error::UnsupportedDtype("non-string descr".into())),
        None => return Err(Error::MalformedHeader("missing 'descr'".into())),
    };
    match fortran {
        Some(Literal::Bool(false)) => {}
        Some(Literal::Bool(true)) => {
            return Err(Error::UnsupportedLayout("Fortran order".into()));
        }
        Some(_) => return Err(Error::MalformedHeader("'fortran_order' is not a bool".into())),
        None => return Err(Error::MalformedHeader("missing 'fortran_order'".into())),
    }
    let shape = match shape {
        Some(Literal::Tuple(dims)) => dims,
        Some(_) => return Err(Error::MalformedHeader("'shape' is not a tuple".into())),
        None => return Err(Error::MalformedHeader("missing 'shape'".into())),
    };
    if shape.is_empty() || shape.len() > MAX_DIMS {
        return Err(Error::UnsupportedLayout(format!(
            "{} dimensions (supported: 1 to {MAX_DIMS})",
            shape.len()
        )));
    }
    Ok(Header { dtype, shape })
}

/// Just enough of a Python literal parser for NPY header dicts.
struct LiteralParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> LiteralParser<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn err<T>(&self, what: &str) -> Result<T> {
        Err(Error::MalformedHeader(format!("{what} at byte {}", self.pos)))
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(&format!("expected {:?}", c as char))
        }
    }

    fn dict(&mut self) -> Result<Vec<(String, Literal)>> {
        self.expect(b'{')?;
        let mut entries = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(b'}') {
                self.pos += 1;
                return Ok(entries);
            }
            let key = self.string()?;
            self.expect(b':')?;
            let value = self.value()?;
            entries.push((key, value));
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {}
                _ => return self.err("expected ',' or '}'"),
            }
        }
    }

    fn value(&mut self) -> Result<Literal> {
        self.skip_ws();
        match self.peek() {
            Some(b'\'' | b'"') => self.string().map(Literal::Str),
            Some(b'(') => self.tuple().map(Literal::Tuple),
            Some(b'T') => self.keyword("True").map(|_| Literal::Bool(true)),
            Some(b'F') => self.keyword("False").map(|_| Literal::Bool(false)),
            _ => self.err("unsupported literal"),
        }
    }

    fn keyword(&mut self, word: &str) -> Result<()> {
        if self.src[self.pos..].starts_with(word.as_bytes()) {
            self.pos += word.len();
            Ok(())
        } else {
            self.err("unknown keyword")
        }
    }

    fn string(&mut self) -> Result<String> {
        self.skip_ws();
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return self.err("expected string"),
        };
        self.pos += 1;
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c == b'\\' {
                return self.err("escapes are not supported");
            }
            if c == quote {
                let s = std::str::from_utf8(&self.src[start..self.pos])
                    .map_err(|_| Error::MalformedHeader("invalid utf-8 in string".into()))?
                    .to_owned();
                self.pos += 1;
                return Ok(s);
            }
            self.pos += 1;
        }
        self.err("unterminated string")
    }

    fn tuple(&mut self) -> Result<Vec<usize>> {
        self.expect(b'(')?;
        let mut dims = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b')') => {
                    self.pos += 1;
                    return Ok(dims);
                }
                Some(c) if c.is_ascii_digit() => {
                    let start = self.pos;
                    while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                        self.pos += 1;
                    }
                    let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                    let dim = text
                        .parse::<usize>()
                        .map_err(|_| Error::MalformedHeader(format!("dimension {text} too large")))?;
                    dims.push(dim);
                    self.skip_ws();
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b')') => {}
                        _ => return self.err("expected ',' or ')'"),
                    }
                }
                _ => return self.err("expected dimension"),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_matrix() {
        let data = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let bytes = encode(&[2, 3], &data, Dtype::F64).unwrap();
        let arr = decode(&bytes).unwrap();
        assert_eq!(arr.shape, vec![2, 3]);
        assert_eq!(arr.data, data);
        assert_eq!(bytes.len(), 128 + 48);
    }

    #[test]
    fn header_is_aligned() {
        for shape in [vec![1], vec![7, 3], vec![10_000, 3, 768]] {
            let n: usize = shape.iter().product();
            let bytes = encode(&shape, &vec![0.0; n], Dtype::F32).unwrap();
            let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
            assert_eq!((10 + header_len) % 64, 0);
            assert_eq!(bytes[9 + header_len], b'\n');
        }
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(decode(b"NUMPY\x93\x01\x00"), Err(Error::BadMagic)));
        assert!(matches!(decode(b""), Err(Error::BadMagic)));
    }

    fn with_header(dict: &str, payload: &[u8]) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
        out.extend_from_slice(dict.as_bytes());
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn big_endian_rejected() {
        let bytes = with_header(
            "{'descr': '>f8', 'fortran_order': False, 'shape': (1,), }\n",
            &1.0f64.to_be_bytes(),
        );
        assert!(matches!(decode(&bytes), Err(Error::UnsupportedDtype(d)) if d == ">f8"));
    }

    #[test]
    fn layout_errors() {
        let fortran = with_header(
            "{'descr': '<f8', 'fortran_order': True, 'shape': (1, 1), }\n",
            &[0; 8],
        );
        assert!(matches!(decode(&fortran), Err(Error::UnsupportedLayout(_))));
        let four = with_header(
            "{'descr': '<f8', 'fortran_order': False, 'shape': (1, 1, 1, 1), }\n",
            &[0; 8],
        );
        assert!(matches!(decode(&four), Err(Error::UnsupportedLayout(_))));
        let scalar = with_header("{'descr': '<f8', 'fortran_order': False, 'shape': (), }\n", &[0; 8]);
        assert!(matches!(decode(&scalar), Err(Error::UnsupportedLayout(_))));
    }

    #[test]
    fn truncated_and_trailing() {
        let dict = "{'descr': '<f4', 'fortran_order': False, 'shape': (3,), }\n";
        assert!(matches!(
            decode(&with_header(dict, &[0; 8])),
            Err(Error::Truncated { expected: 12, found: 8 })
        ));
        assert!(matches!(
            decode(&with_header(dict, &[0; 13])),
            Err(Error::MalformedHeader(_))
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let mut payload = 1.0f64.to_le_bytes().to_vec();
        payload.extend_from_slice(&f64::INFINITY.to_le_bytes());
        let bytes = with_header(
            "{'descr': '<f8', 'fortran_order': False, 'shape': (2,), }\n",
            &payload,
        );
        assert!(matches!(decode(&bytes), Err(Error::NonFiniteValue { index: 1 })));
        assert!(encode(&[1], &[f64::NAN], Dtype::F64).is_err());
    }

    #[test]
    fn header_key_order_and_quotes_are_free() {
        let bytes = with_header(
            "{\"shape\": (2,), \"fortran_order\": False, \"descr\": \"<f8\"}",
            &[0; 16],
        );
        assert_eq!(decode(&bytes).unwrap().shape, vec![2]);
    }

    #[test]
    fn f32_round_trip_is_exact() {
        let data = [0.1f32 as f64, -3.5, 1e-30f32 as f64];
        let arr = decode(&encode(&[3], &data, Dtype::F32).unwrap()).unwrap();
        assert_eq!(arr.dtype, Dtype::F32);
        assert_eq!(arr.data, data);
    }
}
