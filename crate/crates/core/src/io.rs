//! Text file formats.
//!
//! Scene file:
//! ```text
//! SPC1 <n_points> <d_f> <n_categories>
//! x y z r g b f_1 ... f_{d_f} sem inst        (one line per point)
//! ```
//! Label file: one `sem inst` line per point.
//!
//! Head checkpoint:
//! ```text
//! HEAD1 <d_in> <d_e> <n_categories> <normalize:0|1>
//! <d_e lines of d_in weights>
//! <1 line of d_e biases>
//! <n_categories lines of d_in classifier weights>
//! <1 line of n_categories classifier biases>
//! ```
//! Reals are written in shortest round-trip form, so write → read is exact.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scene::{PointCloud, SceneLabels};
use crate::trainer::EmbeddingHead;

pub const SCENE_MAGIC: &str = "SPC1";
pub const HEAD_MAGIC: &str = "HEAD1";

/// Contents of a scene file.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub cloud: PointCloud,
    pub labels: SceneLabels,
    pub n_categories: usize,
}

fn join<'a>(line: &mut String, values: impl IntoIterator<Item = &'a f64>) {
    for (k, v) in values.into_iter().enumerate() {
        if k > 0 {
            line.push(' ');
        }
        write!(line, "{v}").expect("writing to a String cannot fail");
    }
}

pub fn write_scene<W: Write>(mut w: W, cloud: &PointCloud, labels: &SceneLabels, n_categories: usize) -> Result<()> {
    if labels.len() != cloud.n_points() {
        return Err(Error::ShapeMismatch {
            what: "labels",
            expected: cloud.n_points().to_string(),
            found: labels.len().to_string(),
        });
    }
    writeln!(w, "{SCENE_MAGIC} {} {} {}", cloud.n_points(), cloud.feature_dim(), n_categories)?;
    let (coords, colors, features) = (cloud.coords(), cloud.colors(), cloud.features());
    let mut line = String::new();
    for i in 0..cloud.n_points() {
        line.clear();
        join(
            &mut line,
            coords.row(i).iter().chain(colors.row(i)).chain(features.row(i)),
        );
        writeln!(w, "{line} {} {}", labels.semantic[i], labels.instance[i])?;
    }
    w.flush()?;
    Ok(())
}

fn header_fields<const N: usize>(line: &str, magic: &'static str, expected: &'static str) -> Result<[usize; N]> {
    let malformed = || Error::MalformedHeader {
        expected,
        line: line.to_string(),
    };
    let mut parts = line.split_whitespace();
    if parts.next() != Some(magic) {
        return Err(malformed());
    }
    let values: Vec<usize> = parts
        .map(|p| p.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| malformed())?;
    values.try_into().map_err(|_| malformed())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_reals(text: &str, line: usize, expected: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| parse_err(line, format!("bad number {t:?}"))))
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(parse_err(line, format!("expected {expected} values, found {}", values.len())));
    }
    Ok(values)
}

fn next_line<R: BufRead>(lines: &mut std::io::Lines<R>, line_no: &mut usize) -> Result<String> {
    *line_no += 1;
    match lines.next() {
        Some(l) => Ok(l?),
        None => Err(parse_err(*line_no, "unexpected end of file")),
    }
}

pub fn read_scene<R: BufRead>(r: R) -> Result<SceneFile> {
    let mut lines = r.lines();
    let mut line_no = 0;
    let header = match lines.next() {
        Some(l) => l?,
        None => String::new(),
    };
    line_no += 1;
    let [n, d_f, n_categories] =
        header_fields::<3>(&header, SCENE_MAGIC, "SPC1 <n_points> <d_f> <n_categories>")?;
    if n == 0 {
        return Err(Error::MalformedHeader {
            expected: "n_points >= 1",
            line: header,
        });
    }
    let width = 6 + d_f;
    let mut coords = Array2::<f64>::zeros((n, 3));
    let mut colors = Array2::<f64>::zeros((n, 3));
    let mut features = Array2::<f64>::zeros((n, d_f));
    let mut semantic = Vec::with_capacity(n);
    let mut instance = Vec::with_capacity(n);
    for i in 0..n {
        let text = next_line(&mut lines, &mut line_no)?;
        let tokens: Vec<&str> = text.split_whitespace().collect();
        if tokens.len() != width + 2 {
            return Err(parse_err(
                line_no,
                format!("expected {} fields, found {}", width + 2, tokens.len()),
            ));
        }
        let reals = parse_reals(&tokens[..width].join(" "), line_no, width)?;
        for a in 0..3 {
            coords[[i, a]] = reals[a];
            colors[[i, a]] = reals[3 + a];
        }
        for j in 0..d_f {
            features[[i, j]] = reals[6 + j];
        }
        let sem: usize = tokens[width]
            .parse()
            .map_err(|_| parse_err(line_no, "bad semantic label"))?;
        if sem >= n_categories {
            return Err(parse_err(line_no, format!("semantic label {sem} >= {n_categories}")));
        }
        let inst: i32 = tokens[width + 1]
            .parse()
            .map_err(|_| parse_err(line_no, "bad instance id"))?;
        semantic.push(sem);
        instance.push(inst);
    }
    if lines.any(|l| l.map(|l| !l.trim().is_empty()).unwrap_or(true)) {
        return Err(parse_err(line_no + 1, "trailing data after last point"));
    }
    Ok(SceneFile {
        cloud: PointCloud::new(coords, colors, features)?,
        labels: SceneLabels::new(semantic, instance)?,
        n_categories,
    })
}

pub fn write_labels<W: Write>(mut w: W, labels: &SceneLabels) -> Result<()> {
    for (s, i) in labels.semantic.iter().zip(&labels.instance) {
        writeln!(w, "{s} {i}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels<R: BufRead>(r: R) -> Result<SceneLabels> {
    let mut semantic = Vec::new();
    let mut instance = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let [s, i] = tokens[..] else {
            return Err(parse_err(k + 1, "expected `sem inst`"));
        };
        semantic.push(s.parse().map_err(|_| parse_err(k + 1, "bad semantic label"))?);
        instance.push(i.parse().map_err(|_| parse_err(k + 1, "bad instance id"))?);
    }
    SceneLabels::new(semantic, instance)
}

pub fn write_head<W: Write>(mut w: W, head: &EmbeddingHead) -> Result<()> {
    writeln!(
        w,
        "{HEAD_MAGIC} {} {} {} {}",
        head.input_dim(),
        head.embedding_dim(),
        head.n_categories(),
        u8::from(head.normalize_rows)
    )?;
    let mut line = String::new();
    let mut emit = |w: &mut W, values: &mut dyn Iterator<Item = &f64>| -> Result<()> {
        line.clear();
        join(&mut line, values);
        writeln!(w, "{line}")?;
        Ok(())
    };
    for row in head.weight.rows() {
        emit(&mut w, &mut row.iter())?;
    }
    emit(&mut w, &mut head.bias.iter())?;
    for row in head.classifier_weight.rows() {
        emit(&mut w, &mut row.iter())?;
    }
    emit(&mut w, &mut head.classifier_bias.iter())?;
    w.flush()?;
    Ok(())
}

pub fn read_head<R: BufRead>(r: R) -> Result<EmbeddingHead> {
    let mut lines = r.lines();
    let header = match lines.next() {
        Some(l) => l?,
        None => String::new(),
    };
    let mut line_no = 1;
    let expected = "HEAD1 <d_in> <d_e> <n_categories> <normalize:0|1>";
    let [d_in, d_e, k, norm] = header_fields::<4>(&header, HEAD_MAGIC, expected)?;
    if norm > 1 || d_in == 0 || d_e < 2 || k == 0 {
        return Err(Error::MalformedHeader { expected, line: header });
    }
    let mut matrix = |rows: usize, cols: usize, lines: &mut std::io::Lines<R>| -> Result<Array2<f64>> {
        let mut m = Array2::<f64>::zeros((rows, cols));
        for r in 0..rows {
            let text = next_line(lines, &mut line_no)?;
            let v = parse_reals(&text, line_no, cols)?;
            m.row_mut(r).assign(&Array1::from(v));
        }
        Ok(m)
    };
    let weight = matrix(d_e, d_in, &mut lines)?;
    let bias = matrix(1, d_e, &mut lines)?.row(0).to_owned();
    let classifier_weight = matrix(k, d_in, &mut lines)?;
    let classifier_bias = matrix(1, k, &mut lines)?.row(0).to_owned();
    Ok(EmbeddingHead {
        weight,
        bias,
        classifier_weight,
        classifier_bias,
        normalize_rows: norm == 1,
    })
}

pub fn save_scene(path: impl AsRef<Path>, cloud: &PointCloud, labels: &SceneLabels, n_categories: usize) -> Result<()> {
    write_scene(BufWriter::new(File::create(path)?), cloud, labels, n_categories)
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneFile> {
    read_scene(BufReader::new(File::open(path)?))
}

pub fn save_labels(path: impl AsRef<Path>, labels: &SceneLabels) -> Result<()> {
    write_labels(BufWriter::new(File::create(path)?), labels)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<SceneLabels> {
    read_labels(BufReader::new(File::open(path)?))
}

pub fn save_head(path: impl AsRef<Path>, head: &EmbeddingHead) -> Result<()> {
    write_head(BufWriter::new(File::create(path)?), head)
}

pub fn load_head(path: impl AsRef<Path>) -> Result<EmbeddingHead> {
    read_head(BufReader::new(File::open(path)?))
}
