use crate::args::Format;
use crate::error::{CliError, Result};
use bellcheck::report::RunInfo;
use serde::Serialize;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Where and how a command's primary output is written.
pub struct Sink {
    pub out: Option<PathBuf>,
    pub format: Format,
    pub run: RunInfo,
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    run: &'a RunInfo,
    result: &'a T,
}

pub fn write_to<F>(path: Option<&Path>, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> bellcheck::Result<()>,
{
    let label = path.unwrap_or(Path::new("<stdout>"));
    let io_err = |e| CliError::io(label, e);
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(io_err)?);
            body(&mut w)?;
            w.flush().map_err(io_err)
        }
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            body(&mut w)?;
            w.flush().map_err(io_err)
        }
    }
}

impl Sink {
    /// Raw data (trials, bits) with no run header.
    pub fn data<F>(&self, body: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> bellcheck::Result<()>,
    {
        write_to(self.out.as_deref(), body)?;
        eprintln!(
            "seed {} config_hash {}",
            self.run.seed, self.run.config_hash
        );
        Ok(())
    }

    /// A value that already carries its run info.
    pub fn json_plain<T: Serialize>(&self, value: &T) -> Result<()> {
        write_to(self.out.as_deref(), |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    pub fn json<T: Serialize>(&self, result: &T) -> Result<()> {
        self.json_plain(&Envelope {
            run: &self.run,
            result,
        })
    }

    pub fn csv(&self, notes: &[String], header: &str, rows: &[String]) -> Result<()> {
        write_to(self.out.as_deref(), |w| write_csv(w, &self.run, notes, header, rows))
    }

    /// JSON envelope or CSV table, whichever was requested.
    pub fn report<T: Serialize>(&self, result: &T, header: &str, rows: &[String]) -> Result<()> {
        match self.format {
            Format::Json => self.json(result),
            Format::Csv => self.csv(&[], header, rows),
        }
    }
}

/// CSV with `#` comment lines carrying the run info ahead of the header.
pub fn write_csv(
    w: &mut dyn Write,
    run: &RunInfo,
    notes: &[String],
    header: &str,
    rows: &[String],
) -> bellcheck::Result<()> {
    writeln!(w, "# bellcheck {}", run.tool_version)?;
    writeln!(w, "# config_hash {}", run.config_hash)?;
    writeln!(w, "# seed {}", run.seed)?;
    for n in notes {
        writeln!(w, "# {n}")?;
    }
    writeln!(w, "{header}")?;
    for r in rows {
        writeln!(w, "{r}")?;
    }
    Ok(())
}

pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
