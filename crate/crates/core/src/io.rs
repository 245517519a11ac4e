//! CSV and flat-binary exchange formats.
//!
//! Floats are written in shortest round-trip form, so every CSV written here
//! reads back bit-identically.
//!
//! The binary tensor layout is three little-endian `u64` dimensions followed
//! by the row-major little-endian `f64` magnitudes.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureAtom;
use crate::ridge::RidgeCurve;
use crate::signal::Signal;
use crate::tfa::{Spectrogram, TfcRepresentation};

fn parse_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Parse(e.to_string())
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(true).from_writer(w)
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r)
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(r: R) -> Result<Vec<T>> {
    reader(r).deserialize().collect::<std::result::Result<Vec<T>, _>>().map_err(parse_err)
}

#[derive(Serialize, Deserialize)]
struct SignalRow {
    time: f64,
    value: f64,
}

pub fn write_signal_csv<W: Write>(w: W, x: &Signal) -> Result<()> {
    let mut wr = writer(w);
    for (time, &value) in x.times().into_iter().zip(x.samples()) {
        wr.serialize(SignalRow { time, value }).map_err(parse_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads `time,value` rows. The sample rate comes from the first and last
/// time stamps; spacing must be uniform to 1e-6 of a sample.
pub fn read_signal_csv<R: Read>(r: R) -> Result<Signal> {
    let rows: Vec<SignalRow> = read_rows(r)?;
    if rows.len() < 2 {
        return Err(Error::Parse(format!("need at least 2 samples, got {}", rows.len())));
    }
    let n = rows.len();
    let span = rows[n - 1].time - rows[0].time;
    if !(span > 0.0) {
        return Err(Error::Parse("time stamps must increase".into()));
    }
    let dt = span / (n - 1) as f64;
    for (i, row) in rows.iter().enumerate() {
        let expected = rows[0].time + i as f64 * dt;
        if (row.time - expected).abs() > 1e-6 * dt {
            return Err(Error::Parse(format!(
                "non-uniform sampling at row {}: t={} expected {expected}",
                i + 2,
                row.time
            )));
        }
    }
    // rounding keeps integer rates exact when the time column is i/fs
    let fs = 1.0 / dt;
    let fs = if (fs - fs.round()).abs() < 1e-6 * fs { fs.round() } else { fs };
    Ok(Signal::new(rows.iter().map(|r| r.value).collect(), fs)?.with_start_time(rows[0].time))
}

#[derive(Serialize, Deserialize)]
struct RidgeRow {
    frame: usize,
    time_s: f64,
    if_hz: f64,
    cr_hzps: f64,
    energy: f64,
    mode_index: usize,
}

/// Curves get 1-based `mode_index` in slice order.
pub fn write_ridges_csv<W: Write>(w: W, ridges: &[RidgeCurve]) -> Result<()> {
    let mut wr = writer(w);
    for (k, r) in ridges.iter().enumerate() {
        for f in 0..r.len() {
            wr.serialize(RidgeRow {
                frame: f,
                time_s: r.time_s[f],
                if_hz: r.if_hz[f],
                cr_hzps: r.cr_hzps[f],
                energy: r.energy[f],
                mode_index: k + 1,
            })
            .map_err(parse_err)?;
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn read_ridges_csv<R: Read>(r: R) -> Result<Vec<RidgeCurve>> {
    let rows: Vec<RidgeRow> = read_rows(r)?;
    let k = rows.iter().map(|r| r.mode_index).max().unwrap_or(0);
    let mut curves = vec![
        RidgeCurve {
            time_s: Vec::new(),
            if_hz: Vec::new(),
            cr_hzps: Vec::new(),
            energy: Vec::new(),
        };
        k
    ];
    for row in rows {
        if row.mode_index == 0 {
            return Err(Error::Parse("ridge mode_index must be at least 1".into()));
        }
        let c = &mut curves[row.mode_index - 1];
        if row.frame != c.len() {
            return Err(Error::Parse(format!(
                "ridge {} frames out of order at frame {}",
                row.mode_index, row.frame
            )));
        }
        c.time_s.push(row.time_s);
        c.if_hz.push(row.if_hz);
        c.cr_hzps.push(row.cr_hzps);
        c.energy.push(row.energy);
    }
    Ok(curves)
}

#[derive(Serialize, Deserialize)]
struct AtomRow {
    mode_index: usize,
    tau_s: f64,
    xi_hz: f64,
    beta_hzps: f64,
    phi: u8,
}

#[derive(Serialize, Deserialize)]
struct ClusteredAtomRow {
    mode_index: usize,
    tau_s: f64,
    xi_hz: f64,
    beta_hzps: f64,
    phi: u8,
    cluster: i64,
}

/// Writes `mode_index,tau_s,xi_hz,beta_hzps,phi`, plus a `cluster` column
/// when labels are given.
pub fn write_atoms_csv<W: Write>(w: W, atoms: &[FeatureAtom], clusters: Option<&[i64]>) -> Result<()> {
    if let Some(c) = clusters {
        if c.len() != atoms.len() {
            return Err(Error::LengthMismatch {
                expected: atoms.len(),
                actual: c.len(),
            });
        }
    }
    let mut wr = writer(w);
    for (i, a) in atoms.iter().enumerate() {
        let res = match clusters {
            Some(c) => wr.serialize(ClusteredAtomRow {
                mode_index: a.mode_index,
                tau_s: a.tau,
                xi_hz: a.xi,
                beta_hzps: a.beta,
                phi: a.phi,
                cluster: c[i],
            }),
            None => wr.serialize(AtomRow {
                mode_index: a.mode_index,
                tau_s: a.tau,
                xi_hz: a.xi,
                beta_hzps: a.beta,
                phi: a.phi,
            }),
        };
        res.map_err(parse_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads atoms, ignoring any `cluster` column.
pub fn read_atoms_csv<R: Read>(r: R) -> Result<Vec<FeatureAtom>> {
    let mut rd = reader(r);
    let headers = rd.headers().map_err(parse_err)?.clone();
    let wanted = ["mode_index", "tau_s", "xi_hz", "beta_hzps", "phi"];
    let idx = wanted
        .iter()
        .map(|h| {
            headers
                .iter()
                .position(|c| c == *h)
                .ok_or_else(|| Error::Parse(format!("atom CSV lacks column {h}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(parse_err)?;
        let field = |j: usize| -> Result<&str> {
            rec.get(idx[j])
                .ok_or_else(|| Error::Parse(format!("row {}: missing {}", line + 2, wanted[j])))
        };
        let num = |j: usize| -> Result<f64> {
            field(j)?
                .parse()
                .map_err(|e| Error::Parse(format!("row {}: {}: {e}", line + 2, wanted[j])))
        };
        let phi: u8 = field(4)?
            .parse()
            .map_err(|e| Error::Parse(format!("row {}: phi: {e}", line + 2)))?;
        if phi > 1 {
            return Err(Error::Parse(format!("row {}: phi must be 0 or 1", line + 2)));
        }
        out.push(FeatureAtom {
            mode_index: field(0)?
                .parse()
                .map_err(|e| Error::Parse(format!("row {}: mode_index: {e}", line + 2)))?,
            tau: num(1)?,
            xi: num(2)?,
            beta: num(3)?,
            phi,
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct TensorRow {
    frame: usize,
    freq: f64,
    cr: f64,
    magnitude: f64,
}

/// Long format `frame,freq,cr,magnitude` with frequencies in Hz and chirp
/// rates in Hz/s.
pub fn write_tfc_csv<W: Write>(w: W, tfc: &TfcRepresentation) -> Result<()> {
    let mut wr = writer(w);
    let (nf, nk, nb) = tfc.dims();
    for f in 0..nf {
        for k in 0..nk {
            for b in 0..nb {
                wr.serialize(TensorRow {
                    frame: f,
                    freq: tfc.freq_axis[k],
                    cr: tfc.cr_axis[b],
                    magnitude: tfc.at(f, k, b).norm(),
                })
                .map_err(parse_err)?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}

/// Spectrogram in the tensor CSV layout with `cr = 0`.
pub fn write_spectrogram_csv<W: Write>(w: W, spec: &Spectrogram) -> Result<()> {
    let mut wr = writer(w);
    for f in 0..spec.n_frames {
        for (k, c) in spec.frame(f).iter().enumerate() {
            wr.serialize(TensorRow {
                frame: f,
                freq: spec.freq_axis[k],
                cr: 0.0,
                magnitude: c.norm(),
            })
            .map_err(parse_err)?;
        }
    }
    wr.flush()?;
    Ok(())
}

pub fn write_tensor_binary<W: Write>(mut w: W, dims: (usize, usize, usize), values: &[f64]) -> Result<()> {
    let (a, b, c) = dims;
    if a * b * c != values.len() {
        return Err(Error::LengthMismatch {
            expected: a * b * c,
            actual: values.len(),
        });
    }
    for d in [a, b, c] {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor_binary<R: Read>(mut r: R) -> Result<((usize, usize, usize), Vec<f64>)> {
    let mut head = [0u8; 24];
    r.read_exact(&mut head)?;
    let dim = |i: usize| u64::from_le_bytes(head[8 * i..8 * i + 8].try_into().expect("8 bytes")) as usize;
    let dims = (dim(0), dim(1), dim(2));
    let n = dims
        .0
        .checked_mul(dims.1)
        .and_then(|v| v.checked_mul(dims.2))
        .ok_or_else(|| Error::Parse("tensor dimensions overflow".into()))?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != n * 8 {
        return Err(Error::Parse(format!(
            "tensor body holds {} bytes, header implies {}",
            body.len(),
            n * 8
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((dims, values))
}
