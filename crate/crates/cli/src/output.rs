//! Run directories and artifact writers. By default every run goes into its
//! own timestamped subdirectory of the output root; `--force` writes into a
//! fixed per-experiment directory instead, overwriting previous contents.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hjres::solve::HistoryRow;

use crate::CliError;

pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(out_root: &Path, experiment: &str, force: bool) -> Result<Self, CliError> {
        let path = if force {
            out_root.join(experiment)
        } else {
            let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S%.3f");
            out_root.join(format!("{experiment}-{stamp}"))
        };
        if path.exists() && !force {
            return Err(CliError::Config(format!(
                "refusing to overwrite {}; use --force",
                path.display()
            )));
        }
        fs::create_dir_all(&path)?;
        Ok(Self { path })
    }

    pub fn file(&self, name: &str) -> Result<fs::File, CliError> {
        Ok(fs::File::create(self.path.join(name))?)
    }

    pub fn write_history_csv(&self, name: &str, rows: &[HistoryRow]) -> Result<(), CliError> {
        let mut f = self.file(name)?;
        writeln!(f, "iter,loss,res_inf")?;
        for r in rows {
            writeln!(f, "{},{},{}", r.iter, r.loss, r.res_inf)?;
        }
        Ok(())
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let mut f = self.file(name)?;
        f.write_all(text.as_bytes())?;
        Ok(())
    }
}
