use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::ViewLossReport;
use crate::trainer::StepReport;

/// One JSON-lines metrics record, embedding the run's config hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub views: Vec<ViewLossReport>,
    pub l3d_a_to_b: Option<f64>,
    pub l3d_b_to_a: Option<f64>,
    pub total: f64,
    pub config_hash: String,
}

impl StepRecord {
    pub fn new(report: &StepReport, config_hash: &str) -> Self {
        Self {
            step: report.step,
            epoch: report.epoch,
            lr: report.lr,
            views: report.views.clone(),
            l3d_a_to_b: report.l3d_a_to_b,
            l3d_b_to_a: report.l3d_b_to_a,
            total: report.total,
            config_hash: config_hash.to_string(),
        }
    }
}

pub struct MetricsWriter {
    file: std::io::BufWriter<std::fs::File>,
    path: std::path::PathBuf,
}

impl MetricsWriter {
    pub fn open(path: &Path, append: bool) -> Result<Self> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            file: std::io::BufWriter::new(file),
            path: path.to_path_buf(),
        })
    }

    pub fn write(&mut self, record: &StepRecord) -> Result<()> {
        let line = serde_json::to_string(record).map_err(|e| Error::json(&self.path, e))?;
        writeln!(self.file, "{line}").map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<StepRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
    }
    Ok(out)
}
