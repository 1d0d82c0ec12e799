use std::fs::File;
use std::path::Path;

use csv::{Terminator, Writer, WriterBuilder};
use prida::Trace;

use crate::CliError;

pub(crate) fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// RFC-4180 CSV (CRLF line endings) with a header row.
pub(crate) struct CsvFile<'a> {
    path: &'a Path,
    writer: Writer<File>,
}

impl<'a> CsvFile<'a> {
    pub(crate) fn create(path: &'a Path, header: &[&str]) -> Result<Self, CliError> {
        let writer = WriterBuilder::new()
            .terminator(Terminator::CRLF)
            .from_path(path)
            .map_err(|source| csv_error(path, source))?;
        let mut out = Self { path, writer };
        out.row(header)?;
        Ok(out)
    }

    pub(crate) fn row<I, T>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.writer
            .write_record(fields)
            .map_err(|source| csv_error(self.path, source))
    }

    pub(crate) fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|source| CliError::Io {
            path: self.path.to_path_buf(),
            source,
        })
    }
}

fn csv_error(path: &Path, source: csv::Error) -> CliError {
    CliError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn write_trace(trace: &Trace, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, trace.to_csv_string()).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the partial trace carried by a numerical failure next to the other
/// outputs, then hands the error back.
pub(crate) fn dump_failure(err: prida::Error, dir: &Path, name: &str) -> CliError {
    if let prida::Error::NumericalFailure { trace, .. } = &err {
        let path = dir.join(name);
        match write_trace(trace, &path) {
            Ok(()) => eprintln!("partial trace written to {}", path.display()),
            Err(e) => eprintln!("could not write partial trace: {e}"),
        }
    }
    CliError::Core(err)
}
