use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One line of the metrics CSV. Empty optional fields mean "did not happen
/// in this episode".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: usize,
    pub seed: u64,
    pub episode: usize,
    /// Environment steps since the start of the run, this episode included.
    pub total_env_steps: u64,
    pub episode_return: f64,
    pub epsilon: f64,
    pub mean_td_loss: Option<f64>,
    /// Losses of the last LCR invocation in this episode.
    pub lcr_loss_first: Option<f64>,
    pub lcr_loss_last: Option<f64>,
}

/// Appends rows and flushes after each so a crash keeps everything written.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl MetricsWriter<File> {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self::new(File::create(path)?))
    }
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(out: W) -> Self {
        Self {
            inner: csv::Writer::from_writer(out),
        }
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.serialize(row)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    let rows = rd.deserialize().collect::<Result<Vec<MetricsRow>, _>>()?;
    Ok(rows)
}
