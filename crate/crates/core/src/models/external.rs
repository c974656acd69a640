//! Bridge to a black-box model running as a child process.
//!
//! Wire protocol, one exchange per batch: the child is started through
//! `sh -c <command>`, receives on stdin a UTF-8 CSV document with a header
//! row and LF line endings (categorical cells as level names), and must
//! write one decimal score per input row to stdout, each terminated by LF,
//! then exit with status 0.

use std::any::Any;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use crate::dataset::RowMatrix;
use crate::error::{Error, ModelError, Result};
use crate::model::{Model, ModelInfo};

#[derive(Clone, Debug, PartialEq)]
pub struct ExternalModelConfig {
    pub command: String,
    /// Rows per child invocation.
    pub batch_size: usize,
    pub startup_timeout: Duration,
    pub response_timeout: Duration,
}

impl ExternalModelConfig {
    pub fn new(command: impl Into<String>) -> Self {
        ExternalModelConfig {
            command: command.into(),
            batch_size: 100_000,
            startup_timeout: Duration::from_secs(10),
            response_timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Debug)]
pub struct ExternalModel {
    config: ExternalModelConfig,
    info: ModelInfo,
}

pub fn external_model(config: ExternalModelConfig) -> Result<ExternalModel> {
    if config.batch_size == 0 {
        return Err(Error::invalid("external model batch size must be at least 1"));
    }
    if config.command.trim().is_empty() {
        return Err(Error::invalid("external model command is empty"));
    }
    let info = ModelInfo::new("external", "external")
        .with("command", &config.command)
        .with("batch_size", config.batch_size);
    Ok(ExternalModel { config, info })
}

impl ExternalModel {
    pub fn config(&self) -> &ExternalModelConfig {
        &self.config
    }

    fn encode(rows: &RowMatrix) -> Vec<u8> {
        let schema = rows.schema();
        let mut out = Vec::with_capacity(rows.as_slice().len() * 4);
        {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut out);
            w.write_record(schema.features.iter().map(|f| f.name.as_str()))
                .expect("write to memory");
            for row in rows.rows() {
                w.write_record(
                    schema
                        .features
                        .iter()
                        .zip(row)
                        .map(|(f, &v)| f.format_value(v)),
                )
                .expect("write to memory");
            }
            w.flush().expect("write to memory");
        }
        out
    }

    fn exchange(&self, rows: &RowMatrix) -> Result<Vec<f64>, ModelError> {
        let payload = Self::encode(rows);
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.config.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| ModelError::Spawn {
                command: self.config.command.clone(),
                source,
            })?;

        let mut stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        // A child that exits without reading its input makes this fail with
        // a broken pipe; the exit status reports the real problem.
        let writer = thread::spawn(move || {
            let _ = stdin.write_all(&payload);
        });
        let (tx, rx) = mpsc::channel();
        let out_tx = tx.clone();
        thread::spawn(move || {
            let mut buf = Vec::new();
            let r = stdout.read_to_end(&mut buf).map(|_| buf);
            let _ = out_tx.send((true, r));
        });
        thread::spawn(move || {
            let mut buf = Vec::new();
            let r = stderr.read_to_end(&mut buf).map(|_| buf);
            let _ = tx.send((false, r));
        });

        let limit = self.config.startup_timeout + self.config.response_timeout;
        let deadline = Instant::now() + limit;
        let mut out = None;
        let mut err = None;
        while out.is_none() || err.is_none() {
            let left = deadline.saturating_duration_since(Instant::now());
            match rx.recv_timeout(left) {
                Ok((true, r)) => out = Some(r.unwrap_or_default()),
                Ok((false, r)) => err = Some(r.unwrap_or_default()),
                Err(_) => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(ModelError::Timeout(limit));
                }
            }
        }
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(2)),
                Ok(None) => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(ModelError::Timeout(limit));
                }
                Err(e) => return Err(ModelError::Other(format!("waiting for model process: {e}"))),
            }
        };
        let _ = writer.join();
        let stderr = String::from_utf8_lossy(&err.unwrap_or_default()).trim().to_string();
        if !status.success() {
            return Err(ModelError::ProcessFailure {
                status: status.to_string(),
                stderr,
            });
        }
        parse_scores(&out.unwrap_or_default(), rows.n_rows())
    }
}

/// Parses one decimal per line; exactly `expected` lines are required.
pub fn parse_scores(bytes: &[u8], expected: usize) -> Result<Vec<f64>, ModelError> {
    let text = String::from_utf8_lossy(bytes);
    let mut scores = Vec::with_capacity(expected);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() && i >= expected {
            continue;
        }
        let v = line.parse::<f64>().map_err(|_| ModelError::Malformed {
            line: i + 1,
            content: line.to_string(),
        })?;
        scores.push(v);
    }
    if scores.len() < expected {
        return Err(ModelError::ShortResponse {
            expected,
            got: scores.len(),
        });
    }
    if scores.len() > expected {
        return Err(ModelError::Malformed {
            line: expected + 1,
            content: format!("{} extra lines", scores.len() - expected),
        });
    }
    Ok(scores)
}

impl Model for ExternalModel {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn predict(&self, rows: &RowMatrix) -> Result<Vec<f64>, ModelError> {
        let n = rows.n_rows();
        let mut scores = Vec::with_capacity(n);
        let mut start = 0;
        while start < n {
            let end = (start + self.config.batch_size).min(n);
            let chunk = if start == 0 && end == n {
                self.exchange(rows)?
            } else {
                self.exchange(&rows.slice_rows(start, end))?
            };
            scores.extend(chunk);
            start = end;
        }
        Ok(scores)
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
