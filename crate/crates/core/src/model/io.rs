//! Text format: a header `EED1 <model> <N> <D> <bias|NA>` followed by `2N`
//! rows of `D` values (rows of X, then rows of Y) with 17 significant digits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use super::{Embedding, ModelKind};
use crate::error::{Error, Result};

const MAGIC: &str = "EED1";

pub fn write_embedding<W: Write>(e: &Embedding, mut out: W) -> std::io::Result<()> {
    let bias = if e.model.has_bias() {
        format!("{:.16e}", e.bias)
    } else {
        "NA".to_string()
    };
    writeln!(out, "{MAGIC} {} {} {} {bias}", e.model, e.n(), e.dim())?;
    for m in [&e.x, &e.y] {
        for row in m.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
    }
    Ok(())
}

pub fn save_embedding(e: &Embedding, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|err| Error::io(path, err))?;
    let mut out = BufWriter::new(file);
    write_embedding(e, &mut out)
        .and_then(|_| out.flush())
        .map_err(|err| Error::io(path, err))
}

pub fn load_embedding(path: impl AsRef<Path>) -> Result<Embedding> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|err| Error::io(path, err))?;
    read_embedding(BufReader::new(file))
}

pub fn read_embedding<R: BufRead>(reader: R) -> Result<Embedding> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "missing header".into() })?;
    let header = header.map_err(|e| Error::io("<embedding>", e))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.first() != Some(&MAGIC) {
        return Err(Error::VersionMismatch(fields.first().unwrap_or(&"").to_string()));
    }
    if fields.len() != 5 {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header needs 5 fields, found {}", fields.len()),
        });
    }
    let bad = |msg: String| Error::Parse { line: 1, msg };
    let model: ModelKind = fields[1].parse()?;
    let n: usize = fields[2].parse().map_err(|_| bad(format!("invalid N {:?}", fields[2])))?;
    let d: usize = fields[3].parse().map_err(|_| bad(format!("invalid D {:?}", fields[3])))?;
    let bias = match (fields[4], model.has_bias()) {
        ("NA", false) => 0.0,
        ("NA", true) => return Err(bad(format!("model {model} requires a bias"))),
        (b, _) => b.parse::<f64>().map_err(|_| bad(format!("invalid bias {b:?}")))?,
    };

    let mut values = Vec::with_capacity(2 * n * d);
    let mut rows = 0usize;
    for (lineno, line) in lines {
        let line = line.map_err(|e| Error::io("<embedding>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            let v = tok.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("invalid value {tok:?}"),
            })?;
            values.push(v);
        }
        if values.len() - before != d {
            return Err(Error::DimensionMismatch(format!(
                "line {} has {} values, header says D = {d}",
                lineno + 1,
                values.len() - before
            )));
        }
        rows += 1;
    }
    if rows != 2 * n {
        return Err(Error::DimensionMismatch(format!(
            "found {rows} rows, header says N = {n} (expected {})",
            2 * n
        )));
    }
    let y = Array2::from_shape_vec((n, d), values.split_off(n * d)).expect("sized above");
    let x = Array2::from_shape_vec((n, d), values).expect("sized above");
    Embedding::new(model, x, y, bias)
}
