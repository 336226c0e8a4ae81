//! Text and binary serialization of panels.
//!
//! Binary caches share one framing: an 8-byte magic identifying the payload,
//! a little-endian `u32` format version, the panel dimensions, the grid
//! times, the tickers, the values and the missing mask.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};
use crate::market_data::{GridTime, ReturnPanel};
use crate::signals::{SignalPanel, SIGNAL_DIM, SIGNAL_WINDOWS};

pub const RETURN_PANEL_MAGIC: &[u8; 8] = b"ESNCRETP";
pub const SIGNAL_PANEL_MAGIC: &[u8; 8] = b"ESNCSIGP";
pub const CACHE_VERSION: u32 = 1;

struct Frame {
    times: Vec<GridTime>,
    tickers: Vec<String>,
    depth: usize,
    values: Vec<f64>,
    missing: Vec<bool>,
}

fn write_frame<W: Write>(w: &mut W, magic: &[u8; 8], f: &Frame) -> std::io::Result<()> {
    w.write_all(magic)?;
    w.write_u32::<LittleEndian>(CACHE_VERSION)?;
    w.write_u64::<LittleEndian>(f.times.len() as u64)?;
    w.write_u64::<LittleEndian>(f.tickers.len() as u64)?;
    w.write_u64::<LittleEndian>(f.depth as u64)?;
    for t in &f.times {
        w.write_i32::<LittleEndian>(t.date.num_days_from_ce())?;
        w.write_u8(t.slot)?;
    }
    for name in &f.tickers {
        w.write_u32::<LittleEndian>(name.len() as u32)?;
        w.write_all(name.as_bytes())?;
    }
    for v in &f.values {
        w.write_f64::<LittleEndian>(*v)?;
    }
    for m in &f.missing {
        w.write_u8(*m as u8)?;
    }
    Ok(())
}

fn read_frame<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<Frame> {
    let bad = |e: std::io::Error| Error::Data(format!("truncated or unreadable cache: {e}"));
    let mut got = [0u8; 8];
    r.read_exact(&mut got).map_err(bad)?;
    if &got != magic {
        return Err(Error::Data(format!(
            "cache magic {:?} does not match expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = r.read_u32::<LittleEndian>().map_err(bad)?;
    if version != CACHE_VERSION {
        return Err(Error::Data(format!("unsupported cache version {version}")));
    }
    let nt = r.read_u64::<LittleEndian>().map_err(bad)? as usize;
    let n = r.read_u64::<LittleEndian>().map_err(bad)? as usize;
    let depth = r.read_u64::<LittleEndian>().map_err(bad)? as usize;
    let mut times = Vec::with_capacity(nt);
    for _ in 0..nt {
        let days = r.read_i32::<LittleEndian>().map_err(bad)?;
        let slot = r.read_u8().map_err(bad)?;
        let date = NaiveDate::from_num_days_from_ce_opt(days)
            .ok_or_else(|| Error::Data(format!("bad date ordinal {days}")))?;
        times.push(GridTime { date, slot });
    }
    let mut tickers = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.read_u32::<LittleEndian>().map_err(bad)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf).map_err(bad)?;
        tickers.push(String::from_utf8(buf).map_err(|e| Error::Data(format!("ticker is not UTF-8: {e}")))?);
    }
    let mut values = vec![0.0; nt * n * depth];
    r.read_f64_into::<LittleEndian>(&mut values).map_err(bad)?;
    let mut missing = Vec::with_capacity(nt * n);
    for _ in 0..nt * n {
        missing.push(r.read_u8().map_err(bad)? != 0);
    }
    Ok(Frame {
        times,
        tickers,
        depth,
        values,
        missing,
    })
}

pub fn write_return_panel_binary<W: Write>(w: W, panel: &ReturnPanel) -> Result<()> {
    let mut w = w;
    let frame = Frame {
        times: panel.times().to_vec(),
        tickers: panel.tickers().to_vec(),
        depth: 1,
        values: panel.values().to_vec(),
        missing: panel.missing_mask().to_vec(),
    };
    write_frame(&mut w, RETURN_PANEL_MAGIC, &frame).map_err(|e| Error::io("<cache>", e))
}

pub fn read_return_panel_binary<R: Read>(r: R) -> Result<ReturnPanel> {
    let mut r = r;
    let f = read_frame(&mut r, RETURN_PANEL_MAGIC)?;
    if f.depth != 1 {
        return Err(Error::Data(format!("return cache has depth {}", f.depth)));
    }
    ReturnPanel::new(f.times, f.tickers, f.values, f.missing)
}

pub fn write_signal_panel_binary<W: Write>(w: W, panel: &SignalPanel) -> Result<()> {
    let mut w = w;
    let frame = Frame {
        times: panel.times.clone(),
        tickers: panel.tickers.clone(),
        depth: SIGNAL_DIM,
        values: panel.values.iter().flat_map(|z| z.iter().copied()).collect(),
        missing: panel.missing.clone(),
    };
    write_frame(&mut w, SIGNAL_PANEL_MAGIC, &frame).map_err(|e| Error::io("<cache>", e))
}

pub fn read_signal_panel_binary<R: Read>(r: R) -> Result<SignalPanel> {
    let mut r = r;
    let f = read_frame(&mut r, SIGNAL_PANEL_MAGIC)?;
    if f.depth != SIGNAL_DIM {
        return Err(Error::Data(format!("signal cache has depth {}, expected {SIGNAL_DIM}", f.depth)));
    }
    let values = f
        .values
        .chunks_exact(SIGNAL_DIM)
        .map(|c| {
            let mut z = [0.0; SIGNAL_DIM];
            z.copy_from_slice(c);
            z
        })
        .collect();
    SignalPanel::new(f.times, f.tickers, values, f.missing)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Columnar text: `time,ticker,return,missing`.
pub fn write_return_panel_csv<W: Write>(w: W, panel: &ReturnPanel) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["time", "ticker", "return", "missing"])?;
    for (t, time) in panel.times().iter().enumerate() {
        let ts = time.to_string();
        for (i, ticker) in panel.tickers().iter().enumerate() {
            let v = panel.get(t, i);
            wtr.write_record([ts.as_str(), ticker, &fmt_opt(v), if v.is_none() { "1" } else { "0" }])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Collects `(time, ticker) -> cells` from a long-format table.
fn read_long_table<R: Read>(r: R, value_cols: &[&str]) -> Result<(Vec<GridTime>, Vec<String>, HashMap<(usize, usize), Vec<Option<f64>>>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
    };
    let tcol = col("time")?;
    let kcol = col("ticker")?;
    let mcol = col("missing")?;
    let vcols: Vec<usize> = value_cols.iter().map(|c| col(c)).collect::<Result<_>>()?;

    let mut times: Vec<GridTime> = Vec::new();
    let mut time_ix: HashMap<GridTime, usize> = HashMap::new();
    let mut tickers: Vec<String> = Vec::new();
    let mut ticker_ix: HashMap<String, usize> = HashMap::new();
    let mut cells = HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let time: GridTime = rec[tcol].parse()?;
        let t = *time_ix.entry(time).or_insert_with(|| {
            times.push(time);
            times.len() - 1
        });
        let name = rec[kcol].to_string();
        let i = *ticker_ix.entry(name.clone()).or_insert_with(|| {
            tickers.push(name);
            tickers.len() - 1
        });
        let missing = &rec[mcol] == "1";
        let vals = vcols
            .iter()
            .map(|&c| {
                if missing {
                    Ok(None)
                } else {
                    rec[c]
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|e| Error::Data(format!("line {}: {e}", line + 2)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        cells.insert((t, i), vals);
    }
    Ok((times, tickers, cells))
}

pub fn read_return_panel_csv<R: Read>(r: R) -> Result<ReturnPanel> {
    let (times, tickers, cells) = read_long_table(r, &["return"])?;
    let mut panel = ReturnPanel::empty(times, tickers)?;
    for ((t, i), v) in cells {
        panel.set(t, i, v[0]);
    }
    Ok(panel)
}

pub fn signal_columns() -> Vec<String> {
    SIGNAL_WINDOWS.iter().map(|p| format!("z{p}")).collect()
}

/// Columnar text: `time,ticker,z10,...,z150,missing`.
pub fn write_signal_panel_csv<W: Write>(w: W, panel: &SignalPanel) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["time".to_string(), "ticker".to_string()];
    header.extend(signal_columns());
    header.push("missing".into());
    wtr.write_record(&header)?;
    for (t, time) in panel.times.iter().enumerate() {
        let ts = time.to_string();
        for (i, ticker) in panel.tickers.iter().enumerate() {
            let z = panel.get(t, i);
            let mut rec = vec![ts.clone(), ticker.clone()];
            for d in 0..SIGNAL_DIM {
                rec.push(fmt_opt(z.map(|z| z[d])));
            }
            rec.push(if z.is_none() { "1".into() } else { "0".into() });
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_signal_panel_csv<R: Read>(r: R) -> Result<SignalPanel> {
    let cols = signal_columns();
    let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let (times, tickers, cells) = read_long_table(r, &refs)?;
    let n = tickers.len();
    let mut values = vec![[f64::NAN; SIGNAL_DIM]; times.len() * n];
    let mut missing = vec![true; times.len() * n];
    for ((t, i), v) in cells {
        if v.iter().all(Option::is_some) {
            for d in 0..SIGNAL_DIM {
                values[t * n + i][d] = v[d].expect("checked");
            }
            missing[t * n + i] = false;
        }
    }
    SignalPanel::new(times, tickers, values, missing)
}

pub fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn open_file(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::MissingInput {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Loads a return panel from `.bin` (binary cache) or any other extension (CSV).
pub fn load_return_panel(path: &Path) -> Result<ReturnPanel> {
    let r = open_file(path)?;
    if path.extension().is_some_and(|e| e == "bin") {
        read_return_panel_binary(r)
    } else {
        read_return_panel_csv(r)
    }
}

pub fn load_signal_panel(path: &Path) -> Result<SignalPanel> {
    let r = open_file(path)?;
    if path.extension().is_some_and(|e| e == "bin") {
        read_signal_panel_binary(r)
    } else {
        read_signal_panel_csv(r)
    }
}
