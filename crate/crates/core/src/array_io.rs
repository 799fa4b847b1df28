//! `BSGD-ARRAY v1` files: an ASCII header line `BSGD <ndim> <dim1> ...`
//! followed by the row-major values as little-endian IEEE-754 float64.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::GridVector;

const MAGIC: &str = "BSGD";

pub fn write_array<W: Write>(mut out: W, v: &GridVector) -> std::io::Result<()> {
    let dims: Vec<String> = v.shape().iter().map(|d| d.to_string()).collect();
    writeln!(out, "{MAGIC} {} {}", v.shape().len(), dims.join(" "))?;
    let mut payload = Vec::with_capacity(8 * v.len());
    for x in v.values() {
        payload.extend_from_slice(&x.to_le_bytes());
    }
    out.write_all(&payload)?;
    out.flush()
}

pub fn read_array<R: Read>(input: R) -> Result<GridVector> {
    let mut reader = BufReader::new(input);
    let mut header = Vec::new();
    reader
        .read_until(b'\n', &mut header)
        .map_err(|e| Error::ArrayFormat(e.to_string()))?;
    if header.last() != Some(&b'\n') {
        return Err(Error::ArrayFormat("header is not newline-terminated".into()));
    }
    let header = std::str::from_utf8(&header[..header.len() - 1])
        .map_err(|_| Error::ArrayFormat("header is not ASCII".into()))?;
    let mut fields = header.split_ascii_whitespace();
    if fields.next() != Some(MAGIC) {
        return Err(Error::ArrayFormat(format!("bad magic in header `{header}`")));
    }
    let parse = |s: Option<&str>| -> Result<usize> {
        s.and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::ArrayFormat(format!("bad header `{header}`")))
    };
    let ndim = parse(fields.next())?;
    if ndim == 0 {
        return Err(Error::ArrayFormat("zero-dimensional array".into()));
    }
    let shape = (0..ndim)
        .map(|_| parse(fields.next()))
        .collect::<Result<Vec<_>>>()?;
    if fields.next().is_some() {
        return Err(Error::ArrayFormat(format!("trailing header fields in `{header}`")));
    }
    let count: usize = shape.iter().product();
    let mut payload = Vec::new();
    reader
        .read_to_end(&mut payload)
        .map_err(|e| Error::ArrayFormat(e.to_string()))?;
    if payload.len() != 8 * count {
        return Err(Error::ArrayFormat(format!(
            "payload has {} bytes, header promises {}",
            payload.len(),
            8 * count
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    GridVector::new(values, shape)
}

pub fn save_array(path: impl AsRef<Path>, v: &GridVector) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_array(std::io::BufWriter::new(file), v).map_err(|e| Error::io(path, e))
}

pub fn load_array(path: impl AsRef<Path>) -> Result<GridVector> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_array(file)
}
