use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;

/// Environment variable naming the output directory.
pub const OUT_DIR_VAR: &str = "RELAXED_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "results";

pub fn out_dir_from_env() -> PathBuf {
    std::env::var_os(OUT_DIR_VAR).map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), PathBuf::from)
}

/// Creates CSV files that open with the resolved configuration as comment
/// lines, and remembers their paths.
pub struct Sink {
    dir: PathBuf,
    prefix: String,
    header: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path, config: &ExperimentConfig) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            prefix: config.text("prefix").to_string(),
            header: config.header_lines(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}_{suffix}", self.prefix))
    }

    /// Opens `<prefix>_<suffix>` and writes the config header.
    pub fn csv(&mut self, suffix: &str) -> io::Result<BufWriter<File>> {
        let path = self.path(suffix);
        let mut w = BufWriter::new(File::create(&path)?);
        for line in &self.header {
            writeln!(w, "{line}")?;
        }
        self.files.push(path);
        Ok(w)
    }

    /// Writes a diagnostics dump for tripped oracles.
    pub fn diagnostics(&mut self, failures: &[String]) -> io::Result<PathBuf> {
        let path = self.path("diagnostics.txt");
        let mut w = BufWriter::new(File::create(&path)?);
        for line in &self.header {
            writeln!(w, "{line}")?;
        }
        for f in failures {
            writeln!(w, "{f}")?;
        }
        w.flush()?;
        self.files.push(path.clone());
        Ok(path)
    }
}

/// Mean and sample standard deviation; the deviation of one value is 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_sample() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    }
}
