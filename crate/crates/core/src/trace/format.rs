use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use super::{RecordBody, TraceError, TraceRecord, FORMAT_VERSION};
use crate::Micros;

/// Free-form `key=value` metadata on the first line, kept sorted by key.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceHeader {
    pub meta: BTreeMap<String, String>,
}

impl TraceHeader {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<T, TraceError> {
        let raw = self.get(key).ok_or_else(|| TraceError::Header {
            key: key.to_string(),
            value: String::new(),
        })?;
        raw.parse().map_err(|_| TraceError::Header {
            key: key.to_string(),
            value: raw.to_string(),
        })
    }

    fn render(&self) -> Result<String, TraceError> {
        let mut line = FORMAT_VERSION.to_string();
        for (k, v) in &self.meta {
            let bad = |s: &str| s.is_empty() || s.contains(|c: char| c.is_whitespace() || c == '=');
            if bad(k) || bad(v) {
                return Err(TraceError::Header {
                    key: k.clone(),
                    value: v.clone(),
                });
            }
            line.push(' ');
            line.push_str(k);
            line.push('=');
            line.push_str(v);
        }
        Ok(line)
    }

    fn parse(line: &str) -> Result<Self, TraceError> {
        let mut parts = line.split(' ');
        let version = parts.next().unwrap_or_default();
        if version != FORMAT_VERSION {
            return Err(TraceError::Version(version.to_string()));
        }
        let mut meta = BTreeMap::new();
        for tok in parts {
            let (k, v) = tok.split_once('=').ok_or_else(|| TraceError::Malformed {
                line: 1,
                reason: format!("bad header field {tok:?}"),
            })?;
            meta.insert(k.to_string(), v.to_string());
        }
        Ok(Self { meta })
    }
}

/// A whole trace in memory. `records` ends with the summary record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    /// `(ts, drops)` of the summary record.
    pub fn summary(&self) -> Option<(Micros, u64)> {
        match self.records.last() {
            Some(TraceRecord {
                ts,
                body: RecordBody::Summary { drops },
            }) => Some((*ts, *drops)),
            _ => None,
        }
    }
}

/// Streams records to a file. Records must arrive in timestamp order.
pub struct TraceWriter<W: Write> {
    out: BufWriter<W>,
    last_ts: Option<Micros>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(inner: W, header: &TraceHeader) -> Result<Self, TraceError> {
        let mut out = BufWriter::new(inner);
        writeln!(out, "{}", header.render()?)?;
        Ok(Self { out, last_ts: None })
    }

    fn check_order(&mut self, ts: Micros) -> Result<(), TraceError> {
        if let Some(previous) = self.last_ts {
            if ts < previous {
                return Err(TraceError::Unordered { ts, previous });
            }
        }
        self.last_ts = Some(ts);
        Ok(())
    }

    pub fn write(&mut self, record: &TraceRecord) -> Result<(), TraceError> {
        if let RecordBody::Summary { drops } = record.body {
            return self.write_summary(record.ts, drops);
        }
        self.check_order(record.ts)?;
        writeln!(self.out, "{record}")?;
        Ok(())
    }

    fn write_summary(&mut self, ts: Micros, drops: u64) -> Result<(), TraceError> {
        self.check_order(ts)?;
        writeln!(
            self.out,
            "{}",
            TraceRecord {
                ts,
                body: RecordBody::Summary { drops }
            }
        )?;
        Ok(())
    }

    /// Writes the summary record and flushes.
    pub fn finish(mut self, ts: Micros, drops: u64) -> Result<W, TraceError> {
        self.write_summary(ts, drops)?;
        self.out.into_inner().map_err(|e| TraceError::Io(e.into_error()))
    }
}

/// Reads records lazily in file order.
pub struct TraceReader<R: BufRead> {
    input: R,
    pub header: TraceHeader,
    line_no: usize,
    buf: String,
    seen_summary: bool,
    last_ts: Option<Micros>,
    done: bool,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(mut input: R) -> Result<Self, TraceError> {
        let mut first = String::new();
        if input.read_line(&mut first)? == 0 {
            return Err(TraceError::Incomplete);
        }
        let header = TraceHeader::parse(first.trim_end_matches('\n'))?;
        Ok(Self {
            input,
            header,
            line_no: 1,
            buf: String::new(),
            seen_summary: false,
            last_ts: None,
            done: false,
        })
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<TraceRecord, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        self.buf.clear();
        let res = match self.input.read_line(&mut self.buf) {
            Err(e) => Err(e.into()),
            Ok(0) if self.seen_summary => {
                self.done = true;
                return None;
            }
            Ok(0) => Err(TraceError::Incomplete),
            Ok(_) => {
                self.line_no += 1;
                let line = match self.buf.strip_suffix('\n') {
                    Some(l) => l,
                    // the last line lost its newline: the file was cut short
                    None if !self.seen_summary => {
                        self.done = true;
                        return Some(Err(TraceError::Malformed {
                            line: self.line_no,
                            reason: "truncated line".into(),
                        }));
                    }
                    None => &self.buf,
                };
                if self.seen_summary {
                    Err(TraceError::AfterSummary { line: self.line_no })
                } else {
                    match line.parse::<TraceRecord>() {
                        Ok(r) if self.last_ts.is_some_and(|p| r.ts < p) => Err(TraceError::Unordered {
                            ts: r.ts,
                            previous: self.last_ts.unwrap_or_default(),
                        }),
                        Ok(r) => {
                            self.seen_summary = matches!(r.body, RecordBody::Summary { .. });
                            self.last_ts = Some(r.ts);
                            Ok(r)
                        }
                        Err(reason) => Err(TraceError::Malformed {
                            line: self.line_no,
                            reason,
                        }),
                    }
                }
            }
        };
        if res.is_err() {
            self.done = true;
        }
        Some(res)
    }
}

pub fn read_trace_from<R: BufRead>(input: R) -> Result<Trace, TraceError> {
    let reader = TraceReader::new(input)?;
    let header = reader.header.clone();
    let records = reader.collect::<Result<Vec<_>, _>>()?;
    Ok(Trace { header, records })
}

pub fn read_trace(path: &Path) -> Result<Trace, TraceError> {
    read_trace_from(BufReader::new(File::open(path)?))
}

/// Writes `trace`, which must end with its summary record.
pub fn write_trace_to<W: Write>(out: W, trace: &Trace) -> Result<W, TraceError> {
    let (ts, drops) = trace.summary().ok_or(TraceError::Incomplete)?;
    let mut w = TraceWriter::new(out, &trace.header)?;
    for r in &trace.records[..trace.records.len() - 1] {
        if matches!(r.body, RecordBody::Summary { .. }) {
            return Err(TraceError::AfterSummary { line: 0 });
        }
        w.write(r)?;
    }
    w.finish(ts, drops)
}

pub fn write_trace(path: &Path, trace: &Trace) -> Result<(), TraceError> {
    write_trace_to(File::create(path)?, trace)?;
    Ok(())
}
