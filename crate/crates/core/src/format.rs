//! The `cpdhnf-tensor v1` text format.
//!
//! ```text
//! cpdhnf-tensor v1
//! real
//! 3
//! 4 3 3
//! 1 0 0 0 ...
//! ```
//!
//! Values follow in row-major order, whitespace separated; complex entries
//! are written as `re im` pairs.

use std::fmt::Write as _;
use std::path::Path;

use faer::c64;

use crate::error::{Error, Result};
use crate::scalar::Field;
use crate::tensor::DenseTensor;

pub const MAGIC: &str = "cpdhnf-tensor v1";

/// A tensor of either field, as read from disk.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyTensor {
    Real(DenseTensor<f64>),
    Complex(DenseTensor<c64>),
}

impl AnyTensor {
    pub fn field(&self) -> Field {
        match self {
            AnyTensor::Real(_) => Field::Real,
            AnyTensor::Complex(_) => Field::Complex,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::Real(t) => t.shape(),
            AnyTensor::Complex(t) => t.shape(),
        }
    }
}

/// 17 significant digits, enough to round-trip every `f64`.
fn fmt_f64(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").expect("writing to a string");
}

pub fn write_real(t: &DenseTensor<f64>) -> String {
    write_with(Field::Real, t.shape(), t.data().len(), |out, i| fmt_f64(out, t.data()[i]))
}

pub fn write_complex(t: &DenseTensor<c64>) -> String {
    write_with(Field::Complex, t.shape(), t.data().len(), |out, i| {
        fmt_f64(out, t.data()[i].re);
        out.push(' ');
        fmt_f64(out, t.data()[i].im);
    })
}

pub fn write_any(t: &AnyTensor) -> String {
    match t {
        AnyTensor::Real(t) => write_real(t),
        AnyTensor::Complex(t) => write_complex(t),
    }
}

fn write_with(field: Field, shape: &[usize], len: usize, mut entry: impl FnMut(&mut String, usize)) -> String {
    let mut out = String::with_capacity(len * 26 + 64);
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(field.name());
    out.push('\n');
    writeln!(out, "{}", shape.len()).expect("writing to a string");
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    out.push_str(&dims.join(" "));
    out.push('\n');
    let per_line = *shape.last().unwrap_or(&1);
    for i in 0..len {
        entry(&mut out, i);
        out.push(if (i + 1) % per_line == 0 { '\n' } else { ' ' });
    }
    out
}

pub fn parse(text: &str) -> Result<AnyTensor> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut next = |what: &str| -> Result<(usize, &str)> {
        lines
            .next()
            .map(|(i, l)| (i + 1, l.trim()))
            .ok_or_else(|| Error::Parse { line: 0, msg: format!("missing {what}") })
    };
    let (ln, magic) = next("header")?;
    if magic != MAGIC {
        return Err(Error::Parse { line: ln, msg: format!("expected `{MAGIC}`, found `{magic}`") });
    }
    let (ln, field) = next("field tag")?;
    let field: Field = field.parse().map_err(|msg| Error::Parse { line: ln, msg })?;
    let (ln, order) = next("order")?;
    let order: usize = order.parse().map_err(|_| Error::Parse { line: ln, msg: format!("bad order `{order}`") })?;
    let (ln, dims_line) = next("dimensions")?;
    let dims: Vec<usize> = dims_line
        .split_whitespace()
        .map(|d| d.parse().map_err(|_| Error::Parse { line: ln, msg: format!("bad dimension `{d}`") }))
        .collect::<Result<_>>()?;
    if dims.len() != order {
        return Err(Error::Parse { line: ln, msg: format!("order {order} but {} dimensions", dims.len()) });
    }
    let body_start = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .nth(4)
        .map_or(text.lines().count(), |(i, _)| i);
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate().skip(body_start) {
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("bad number `{tok}`") })?;
            values.push(v);
        }
    }
    match field {
        Field::Real => Ok(AnyTensor::Real(DenseTensor::new(dims, values)?)),
        Field::Complex => {
            if values.len() % 2 != 0 {
                return Err(Error::Parse { line: 0, msg: "complex data needs an even number of values".into() });
            }
            let data = values.chunks(2).map(|p| c64::new(p[0], p[1])).collect();
            Ok(AnyTensor::Complex(DenseTensor::new(dims, data)?))
        }
    }
}

pub fn read_file(path: &Path) -> Result<AnyTensor> {
    parse(&std::fs::read_to_string(path)?)
}

pub fn write_file(path: &Path, t: &AnyTensor) -> Result<()> {
    std::fs::write(path, write_any(t))?;
    Ok(())
}
