//! Metrics streams and histogram tables.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use aapu_core::trainer::EpochRecord;
use aapu_core::LossHistogram;

use crate::error::{Error, Result};

/// Streams epoch records as JSON lines.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<fs::File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = fs::File::create(path).map_err(Error::io(path))?;
        Ok(MetricsWriter { path: path.to_path_buf(), out: BufWriter::new(file) })
    }

    pub fn push(&mut self, record: &EpochRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, record).map_err(|e| Error::data(&self.path, e.to_string()))?;
        self.out.write_all(b"\n").map_err(Error::io(&self.path))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(Error::io(&self.path))
    }
}

/// One JSON object per epoch, one per line.
pub fn write_metrics(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut w = MetricsWriter::create(path)?;
    for r in records {
        w.push(r)?;
    }
    w.finish()
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| serde_json::from_str(line).map_err(|e| Error::data(path, format!("line {}: {e}", i + 1))))
        .collect()
}

/// `histograms/epoch_0010.csv` style name.
pub fn histogram_file_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}.csv")
}

/// Columns `bin_left,bin_right,count_total,count_true_p,count_true_n`; the
/// class columns stay empty without ground truth.
pub fn write_histogram(path: &Path, h: &LossHistogram) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
    let wrap = |e: csv::Error| Error::data(path, e.to_string());
    w.write_record(["bin_left", "bin_right", "count_total", "count_true_p", "count_true_n"]).map_err(wrap)?;
    for (b, total) in h.counts_total.iter().enumerate() {
        let class = |c: &Option<Vec<u64>>| c.as_ref().map_or(String::new(), |c| c[b].to_string());
        w.write_record([
            h.bin_edges[b].to_string(),
            h.bin_edges[b + 1].to_string(),
            total.to_string(),
            class(&h.counts_true_p),
            class(&h.counts_true_n),
        ])
        .map_err(|e| Error::data(path, e.to_string()))?;
    }
    w.flush().map_err(Error::io(path))
}

/// A histogram table read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramTable {
    pub bin_left: Vec<f64>,
    pub bin_right: Vec<f64>,
    pub count_total: Vec<u64>,
    pub count_true_p: Option<Vec<u64>>,
    pub count_true_n: Option<Vec<u64>>,
}

pub fn read_histogram(path: &Path) -> Result<HistogramTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
    let mut t = HistogramTable {
        bin_left: Vec::new(),
        bin_right: Vec::new(),
        count_total: Vec::new(),
        count_true_p: Some(Vec::new()),
        count_true_n: Some(Vec::new()),
    };
    let bad = |what: &str| Error::data(path, format!("unparsable {what}"));
    for record in reader.records() {
        let r = record.map_err(|e| Error::data(path, e.to_string()))?;
        t.bin_left.push(r[0].parse().map_err(|_| bad("bin_left"))?);
        t.bin_right.push(r[1].parse().map_err(|_| bad("bin_right"))?);
        t.count_total.push(r[2].parse().map_err(|_| bad("count_total"))?);
        for (field, column) in [(&r[3], &mut t.count_true_p), (&r[4], &mut t.count_true_n)] {
            if field.is_empty() {
                *column = None;
            } else if let Some(c) = column {
                c.push(field.parse().map_err(|_| bad("class count"))?);
            }
        }
    }
    Ok(t)
}
