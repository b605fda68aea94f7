//! CSV emission and parsing of sweep results.
//!
//! Layout: `#`-prefixed header lines (config hash, constants version, axis
//! and output units, lattice shape), one column-name row, then one row per
//! cell with axis values, outputs and a `converged` flag (1/0). Failed
//! cells carry `NaN`. Numbers use the shortest representation that parses
//! back to the same `f64`.

use std::io::{Read, Write};
use std::path::Path;

use crate::ensemble::Map2D;
use crate::error::{Error, Result};
use crate::scenarios::{AxisValues, Output, Provenance, SweepParam, SweepResult};

fn param_from_name(name: &str) -> Option<SweepParam> {
    [
        SweepParam::DeltaO,
        SweepParam::DeltaMu,
        SweepParam::PMwDbm,
        SweepParam::POpt,
    ]
    .into_iter()
    .find(|p| p.name() == name)
}

fn output_from_name(name: &str) -> Option<Output> {
    [
        Output::Eta,
        Output::Popdiff,
        Output::KappaAbs,
        Output::Reflection,
    ]
    .into_iter()
    .find(|o| o.name() == name)
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:?}")
    }
}

/// Writes `result` as CSV.
pub fn write_result_to<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut out = out;
    let axes: Vec<String> = result
        .axes
        .iter()
        .map(|a| format!("{} [{}]", a.name.name(), a.name.unit()))
        .collect();
    let outputs: Vec<String> = result
        .outputs
        .iter()
        .map(|o| format!("{} [{}]", o.name(), o.unit()))
        .collect();
    let shape: Vec<String> = result
        .axes
        .iter()
        .map(|a| a.values.len().to_string())
        .collect();
    writeln!(out, "# config_hash: {}", result.provenance.config_hash)?;
    writeln!(out, "# constants: {}", result.provenance.constants_version)?;
    writeln!(out, "# axes: {}", axes.join(", "))?;
    writeln!(out, "# outputs: {}", outputs.join(", "))?;
    writeln!(out, "# shape: {}", shape.join("x"))?;

    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = result.axes.iter().map(|a| a.name.name()).collect();
    header.extend(result.outputs.iter().map(|o| o.name()));
    header.push("converged");
    w.write_record(&header)?;
    for k in 0..result.cell_count() {
        let mut row: Vec<String> = result.coords(k).into_iter().map(num).collect();
        row.extend(result.values.iter().map(|col| num(col[k])));
        row.push(if result.converged[k] { "1" } else { "0" }.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_result(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_result_to(result, std::io::BufWriter::new(file))
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

/// Parses a CSV written by [`write_result_to`].
pub fn read_result_from<R: Read>(input: R) -> Result<SweepResult> {
    let mut text = String::new();
    let mut input = input;
    input.read_to_string(&mut text)?;
    let mut hash = None;
    let mut constants = None;
    let mut shape: Option<Vec<usize>> = None;
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim();
        if let Some(v) = body.strip_prefix("config_hash:") {
            hash = Some(v.trim().to_string());
        } else if let Some(v) = body.strip_prefix("constants:") {
            constants = Some(v.trim().to_string());
        } else if let Some(v) = body.strip_prefix("shape:") {
            let dims: std::result::Result<Vec<usize>, _> =
                v.trim().split('x').map(str::parse).collect();
            shape = Some(dims.map_err(|_| bad(format!("bad shape line `{line}`")))?);
        }
    }
    let shape = shape.ok_or_else(|| bad("missing `# shape:` header"))?;

    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    let n_axes = shape.len();
    if header.len() < n_axes + 2 || &header[header.len() - 1] != "converged" {
        return Err(bad("header must list axes, outputs and `converged`"));
    }
    let params = header
        .iter()
        .take(n_axes)
        .map(|h| param_from_name(h).ok_or_else(|| bad(format!("unknown axis column `{h}`"))))
        .collect::<Result<Vec<_>>>()?;
    let outputs = header
        .iter()
        .skip(n_axes)
        .take(header.len() - n_axes - 1)
        .map(|h| output_from_name(h).ok_or_else(|| bad(format!("unknown output column `{h}`"))))
        .collect::<Result<Vec<_>>>()?;

    let mut coords: Vec<Vec<f64>> = Vec::new();
    let mut values = vec![Vec::new(); outputs.len()];
    let mut converged = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| bad(format!("bad number `{s}`")))
        };
        coords.push(rec.iter().take(n_axes).map(parse).collect::<Result<_>>()?);
        for (o, col) in values.iter_mut().enumerate() {
            col.push(parse(&rec[n_axes + o])?);
        }
        converged.push(match &rec[rec.len() - 1] {
            "1" => true,
            "0" => false,
            other => return Err(bad(format!("bad converged flag `{other}`"))),
        });
    }
    let cells: usize = shape.iter().product();
    if coords.len() != cells {
        return Err(bad(format!(
            "expected {cells} rows, found {}",
            coords.len()
        )));
    }
    let mut axes = Vec::with_capacity(n_axes);
    let mut stride = cells;
    for (i, &n) in shape.iter().enumerate() {
        stride /= n;
        axes.push(AxisValues {
            name: params[i],
            values: (0..n).map(|j| coords[j * stride][i]).collect(),
        });
    }
    Ok(SweepResult {
        axes,
        outputs,
        values,
        failures: converged
            .iter()
            .enumerate()
            .filter(|(_, &c)| !c)
            .map(|(k, _)| (k, "not converged".to_string()))
            .collect(),
        converged,
        provenance: Provenance {
            config_hash: hash.ok_or_else(|| bad("missing `# config_hash:` header"))?,
            constants_version: constants.ok_or_else(|| bad("missing `# constants:` header"))?,
        },
    })
}

pub fn read_result(path: impl AsRef<Path>) -> Result<SweepResult> {
    read_result_from(std::fs::File::open(path)?)
}

/// Writes a population-difference map with detunings converted to Hz.
pub fn write_map_to<W: Write>(map: &Map2D, provenance: &Provenance, out: W) -> Result<()> {
    let mut out = out;
    let to_hz = |x: f64| x / (2.0 * std::f64::consts::PI);
    writeln!(out, "# config_hash: {}", provenance.config_hash)?;
    writeln!(out, "# constants: {}", provenance.constants_version)?;
    writeln!(out, "# axes: ion delta_o [Hz], ion delta_mu [Hz]")?;
    writeln!(out, "# outputs: rho11_minus_rho33 [1]")?;
    writeln!(out, "# shape: {}x{}", map.delta_mu.len(), map.delta_o.len())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["delta_mu", "delta_o", "rho11_minus_rho33"])?;
    for (j, &d_mu) in map.delta_mu.iter().enumerate() {
        for (i, &d_o) in map.delta_o.iter().enumerate() {
            w.write_record([num(to_hz(d_mu)), num(to_hz(d_o)), num(map.get(i, j))])?;
        }
    }
    w.flush()?;
    Ok(())
}
