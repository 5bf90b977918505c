use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

pub const STEP_HEADER: &str = "step,g_loss,d_loss,l1_term,epoch,wall_ms";
pub const VAL_HEADER: &str = "epoch,val_l1,val_ssim,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub g_loss: f64,
    pub d_loss: f64,
    pub l1_term: f64,
    pub epoch: u32,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: u32,
    pub val_l1: f64,
    pub val_ssim: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl StepRecord {
    fn csv(&self) -> String {
        format!("{},{},{},{},{},{}", self.step, self.g_loss, self.d_loss, self.l1_term, self.epoch, self.wall_ms)
    }
}

impl EpochRecord {
    fn csv(&self) -> String {
        let ssim = self.val_ssim.map(|v| v.to_string()).unwrap_or_default();
        format!("{},{},{},{}", self.epoch, self.val_l1, ssim, self.wall_ms)
    }
}

impl TrainLog {
    pub fn steps_csv(&self) -> String {
        let mut s = format!("{STEP_HEADER}\n");
        for r in &self.steps {
            s.push_str(&r.csv());
            s.push('\n');
        }
        s
    }

    /// Parses a step log; malformed lines are reported with their 1-based line number.
    pub fn read_steps(path: &Path) -> Result<Vec<StepRecord>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let perr = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == STEP_HEADER => {}
            _ => return Err(perr(1, format!("expected header `{STEP_HEADER}`"))),
        }
        let mut out = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(perr(i + 1, format!("expected 6 fields, found {}", f.len())));
            }
            let num = |k: usize| f[k].trim().parse::<f64>().map_err(|e| perr(i + 1, format!("field {}: {e}", k + 1)));
            let int = |k: usize| f[k].trim().parse::<u64>().map_err(|e| perr(i + 1, format!("field {}: {e}", k + 1)));
            out.push(StepRecord {
                step: int(0)?,
                g_loss: num(1)?,
                d_loss: num(2)?,
                l1_term: num(3)?,
                epoch: int(4)? as u32,
                wall_ms: int(5)?,
            });
        }
        Ok(out)
    }
}

/// Append-only CSV writers for a training run directory.
pub(crate) struct LogWriter {
    steps: std::fs::File,
    epochs: std::fs::File,
    dir: std::path::PathBuf,
}

fn open_append(path: &Path, header: &str) -> Result<std::fs::File> {
    let fresh = !path.exists();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    if fresh {
        writeln!(f, "{header}").map_err(|e| Error::io(path, e))?;
    }
    Ok(f)
}

impl LogWriter {
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            steps: open_append(&dir.join("train_log.csv"), STEP_HEADER)?,
            epochs: open_append(&dir.join("val_log.csv"), VAL_HEADER)?,
            dir: dir.to_path_buf(),
        })
    }

    pub fn step(&mut self, r: &StepRecord) -> Result<()> {
        writeln!(self.steps, "{}", r.csv()).map_err(|e| Error::io(self.dir.join("train_log.csv"), e))
    }

    pub fn epoch(&mut self, r: &EpochRecord) -> Result<()> {
        writeln!(self.epochs, "{}", r.csv()).map_err(|e| Error::io(self.dir.join("val_log.csv"), e))
    }
}
