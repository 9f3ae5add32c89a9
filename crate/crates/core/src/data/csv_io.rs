use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::trajectory::{Dataset, Trajectory};
use crate::error::{Result, VdmError};

fn header(lead: &[&str], col: &str, d: usize) -> Vec<String> {
    lead.iter()
        .map(|s| s.to_string())
        .chain((0..d).map(|j| format!("{col}{j}")))
        .collect()
}

fn csv_err(e: csv::Error) -> VdmError {
    VdmError::Data(e.to_string())
}

/// Reads `seq_id,t,x0..` rows; sequences keep their first `seq_len` steps and
/// shorter ones are skipped. Returns the dataset and the number skipped.
pub fn read_csv<R: Read>(
    reader: R,
    d_x: usize,
    seq_len: usize,
    prefix_len: usize,
) -> Result<(Dataset, usize)> {
    if prefix_len == 0 || prefix_len > seq_len {
        return Err(VdmError::Config(format!(
            "prefix_len {prefix_len} must be in 1..={seq_len}"
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut seqs: BTreeMap<u64, Vec<(u64, Vec<f64>)>> = BTreeMap::new();
    let mut order = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let rec = rec.map_err(|e| VdmError::Row {
            row,
            msg: e.to_string(),
        })?;
        if rec.len() != d_x + 2 {
            return Err(VdmError::Row {
                row,
                msg: format!("expected {} columns, found {}", d_x + 2, rec.len()),
            });
        }
        let int = |j: usize, name: &str| -> Result<u64> {
            rec[j].parse().map_err(|_| VdmError::Row {
                row,
                msg: format!("bad {name} '{}'", &rec[j]),
            })
        };
        let id = int(0, "seq_id")?;
        let t = int(1, "t")?;
        let mut x = Vec::with_capacity(d_x);
        for j in 0..d_x {
            let v: f64 = rec[j + 2].parse().map_err(|_| VdmError::Row {
                row,
                msg: format!("bad value '{}'", &rec[j + 2]),
            })?;
            if !v.is_finite() {
                return Err(VdmError::Row {
                    row,
                    msg: "non-finite value".into(),
                });
            }
            x.push(v);
        }
        let entry = seqs.entry(id).or_insert_with(|| {
            order.push(id);
            Vec::new()
        });
        if let Some((last, _)) = entry.last() {
            if t <= *last {
                return Err(VdmError::Row {
                    row,
                    msg: format!("sequence {id}: step {t} not ascending"),
                });
            }
        }
        entry.push((t, x));
    }
    let mut skipped = 0;
    let mut out = Vec::new();
    for id in order {
        let rows = &seqs[&id];
        if rows.len() < seq_len {
            skipped += 1;
            continue;
        }
        let obs = rows[..seq_len].iter().map(|(_, x)| x.clone()).collect();
        out.push(
            Trajectory::new(obs, prefix_len)
                .map_err(|e| VdmError::Data(format!("sequence {id}: {e}")))?,
        );
    }
    Ok((Dataset::new(d_x, out)?, skipped))
}

/// File wrapper around [`read_csv`] that logs skipped short sequences.
pub fn load_csv(path: &Path, d_x: usize, seq_len: usize, prefix_len: usize) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| VdmError::file(path, e))?;
    let (ds, skipped) = read_csv(file, d_x, seq_len, prefix_len)?;
    if skipped > 0 {
        log::warn!(
            "{}: skipped {skipped} sequences shorter than {seq_len}",
            path.display()
        );
    }
    Ok(ds)
}

fn write_rows<W: Write>(
    w: W,
    head: Vec<String>,
    rows: impl Iterator<Item = (Vec<String>, Vec<f64>)>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(&head).map_err(csv_err)?;
    for (lead, x) in rows {
        let rec: Vec<String> = lead
            .into_iter()
            .chain(x.iter().map(f64::to_string))
            .collect();
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    wtr.flush().map_err(VdmError::from)
}

/// Writes a dataset with `seq_id,t,x0..` columns; ids are positions.
pub fn write_dataset<W: Write>(w: W, ds: &Dataset) -> Result<()> {
    let rows = ds.iter().enumerate().flat_map(|(i, tr)| {
        tr.observations
            .iter()
            .enumerate()
            .map(move |(t, x)| (vec![i.to_string(), t.to_string()], x.clone()))
    });
    write_rows(w, header(&["seq_id", "t"], "x", ds.d_x), rows)
}

/// Groups flattened into one file with a leading `group_id` column.
pub fn write_groups<W: Write>(w: W, groups: &[Dataset]) -> Result<()> {
    let d = groups.first().map_or(0, |g| g.d_x);
    let rows = groups.iter().enumerate().flat_map(|(g, ds)| {
        ds.iter().enumerate().flat_map(move |(i, tr)| {
            tr.observations
                .iter()
                .enumerate()
                .map(move |(t, x)| (vec![g.to_string(), i.to_string(), t.to_string()], x.clone()))
        })
    });
    write_rows(w, header(&["group_id", "seq_id", "t"], "x", d), rows)
}

/// Reads the output of [`write_groups`].
pub fn read_groups<R: Read>(
    reader: R,
    d_x: usize,
    seq_len: usize,
    prefix_len: usize,
) -> Result<Vec<Dataset>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut by_group: BTreeMap<u64, Vec<u8>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| VdmError::Row {
            row,
            msg: e.to_string(),
        })?;
        let g: u64 = rec
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| VdmError::Row {
                row,
                msg: "bad group_id".into(),
            })?;
        let buf = by_group.entry(g).or_insert_with(|| {
            let mut b = Vec::new();
            let mut wtr = csv::Writer::from_writer(&mut b);
            wtr.write_record(header(&["seq_id", "t"], "x", d_x)).ok();
            drop(wtr);
            b
        });
        let mut wtr = csv::Writer::from_writer(&mut *buf);
        wtr.write_record(rec.iter().skip(1)).map_err(csv_err)?;
        wtr.flush().map_err(VdmError::from)?;
    }
    by_group
        .into_values()
        .map(|b| read_csv(b.as_slice(), d_x, seq_len, prefix_len).map(|(d, _)| d))
        .collect()
}

/// `forecasts[i][f][t]` is step `t` of forecast `f` for input sequence `i`.
pub fn write_forecasts<W: Write>(w: W, forecasts: &[Vec<Vec<Vec<f64>>>]) -> Result<()> {
    let d = forecasts
        .iter()
        .flatten()
        .flatten()
        .next()
        .map_or(0, Vec::len);
    let rows = forecasts.iter().enumerate().flat_map(|(i, fs)| {
        fs.iter().enumerate().flat_map(move |(f, path)| {
            path.iter()
                .enumerate()
                .map(move |(t, x)| (vec![i.to_string(), f.to_string(), t.to_string()], x.clone()))
        })
    });
    write_rows(w, header(&["seq_id", "forecast_id", "t"], "x", d), rows)
}

/// Per-step latent draws: `draws[i][step]` is a list of latent vectors.
pub fn write_latents<W: Write>(w: W, draws: &[Vec<Vec<Vec<f64>>>]) -> Result<()> {
    let d = draws.iter().flatten().flatten().next().map_or(0, Vec::len);
    let rows = draws.iter().enumerate().flat_map(|(i, steps)| {
        steps.iter().enumerate().flat_map(move |(s, zs)| {
            zs.iter()
                .map(move |z| (vec![i.to_string(), s.to_string()], z.clone()))
        })
    });
    write_rows(w, header(&["seq_id", "step"], "z", d), rows)
}
