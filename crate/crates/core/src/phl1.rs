//! PHL1 pixel-hit list format and its CSV debugging twin.
//!
//! Layout (little-endian):
//!
//! ```text
//! header  "PHL1" | u32 version = 1 | u64 record count | u64 acquisition duration (ps)
//! record  u16 x | u16 y | u64 toa_ps | u16 tot                       (14 bytes)
//! ```
//!
//! Records must be sorted by `toa_ps`. The CSV form uses the header
//! `x,y,toa_ps,tot` and one decimal record per line.

use std::io::{self, BufRead, Read, Seek, SeekFrom, Write};

use thiserror::Error;

use crate::event::{InvalidHit, PixelHit};

pub const MAGIC: [u8; 4] = *b"PHL1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
pub const RECORD_LEN: usize = 14;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("bad magic {found:?}, expected \"PHL1\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported PHL1 version {found}")]
    UnsupportedVersion { found: u32 },
    #[error("truncated data at byte offset {offset}")]
    Truncated { offset: u64 },
    #[error("{extra} trailing bytes after the last record at byte offset {offset}")]
    TrailingBytes { offset: u64, extra: u64 },
    #[error("hit {index} has toa {toa_ps} ps, earlier than the previous hit ({previous_ps} ps)")]
    Unsorted { index: u64, previous_ps: u64, toa_ps: u64 },
    #[error("invalid record at byte offset {offset}: {source}")]
    InvalidRecord { offset: u64, source: InvalidHit },
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Phl1Header {
    pub count: u64,
    pub duration_ps: u64,
}

impl Phl1Header {
    pub fn to_bytes(self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..8].copy_from_slice(&VERSION.to_le_bytes());
        out[8..16].copy_from_slice(&self.count.to_le_bytes());
        out[16..24].copy_from_slice(&self.duration_ps.to_le_bytes());
        out
    }

    pub fn parse(bytes: &[u8; HEADER_LEN]) -> Result<Self, CodecError> {
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(CodecError::BadMagic { found: magic });
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(CodecError::UnsupportedVersion { found: version });
        }
        Ok(Self {
            count: u64::from_le_bytes(bytes[8..16].try_into().unwrap()),
            duration_ps: u64::from_le_bytes(bytes[16..24].try_into().unwrap()),
        })
    }
}

fn encode_record(hit: &PixelHit) -> [u8; RECORD_LEN] {
    let mut rec = [0u8; RECORD_LEN];
    rec[0..2].copy_from_slice(&hit.x.to_le_bytes());
    rec[2..4].copy_from_slice(&hit.y.to_le_bytes());
    rec[4..12].copy_from_slice(&hit.toa_ps.to_le_bytes());
    rec[12..14].copy_from_slice(&hit.tot.to_le_bytes());
    rec
}

fn decode_record(rec: &[u8; RECORD_LEN]) -> PixelHit {
    PixelHit {
        x: u16::from_le_bytes([rec[0], rec[1]]),
        y: u16::from_le_bytes([rec[2], rec[3]]),
        toa_ps: u64::from_le_bytes(rec[4..12].try_into().unwrap()),
        tot: u16::from_le_bytes([rec[12], rec[13]]),
    }
}

fn check_order(index: u64, previous: Option<u64>, hit: &PixelHit) -> Result<(), CodecError> {
    match previous {
        Some(prev) if hit.toa_ps < prev => Err(CodecError::Unsorted {
            index,
            previous_ps: prev,
            toa_ps: hit.toa_ps,
        }),
        _ => Ok(()),
    }
}

/// Encode a time-sorted hit list into an in-memory PHL1 buffer.
pub fn encode_hits(hits: &[PixelHit], duration_ps: u64) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * hits.len());
    out.extend_from_slice(
        &Phl1Header {
            count: hits.len() as u64,
            duration_ps,
        }
        .to_bytes(),
    );
    let mut previous = None;
    for (i, hit) in hits.iter().enumerate() {
        check_order(i as u64, previous, hit)?;
        previous = Some(hit.toa_ps);
        out.extend_from_slice(&encode_record(hit));
    }
    Ok(out)
}

/// Decode a complete PHL1 buffer.
pub fn decode_hits(bytes: &[u8]) -> Result<(Phl1Header, Vec<PixelHit>), CodecError> {
    let reader = Phl1Reader::new(bytes)?;
    let header = reader.header();
    let hits = reader.collect::<Result<Vec<_>, _>>()?;
    Ok((header, hits))
}

/// Streaming PHL1 writer. The record count is patched into the header on
/// [`Phl1Writer::finish`], so the sink must be seekable.
pub struct Phl1Writer<W: Write + Seek> {
    inner: W,
    count: u64,
    previous: Option<u64>,
}

impl<W: Write + Seek> Phl1Writer<W> {
    pub fn new(mut inner: W) -> Result<Self, CodecError> {
        inner.write_all(
            &Phl1Header {
                count: 0,
                duration_ps: 0,
            }
            .to_bytes(),
        )?;
        Ok(Self {
            inner,
            count: 0,
            previous: None,
        })
    }

    pub fn push(&mut self, hit: &PixelHit) -> Result<(), CodecError> {
        check_order(self.count, self.previous, hit)?;
        self.previous = Some(hit.toa_ps);
        self.inner.write_all(&encode_record(hit))?;
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(mut self, duration_ps: u64) -> Result<W, CodecError> {
        self.inner.seek(SeekFrom::Start(0))?;
        self.inner.write_all(
            &Phl1Header {
                count: self.count,
                duration_ps,
            }
            .to_bytes(),
        )?;
        self.inner.seek(SeekFrom::End(0))?;
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Streaming PHL1 reader: an iterator of hits in file order.
pub struct Phl1Reader<R: Read> {
    inner: R,
    header: Phl1Header,
    read: u64,
    done: bool,
}

/// Read until `buf` is full or EOF; returns bytes read.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

impl<R: Read> Phl1Reader<R> {
    pub fn new(mut inner: R) -> Result<Self, CodecError> {
        let mut buf = [0u8; HEADER_LEN];
        let n = read_full(&mut inner, &mut buf)?;
        if n >= 4 && buf[0..4] != MAGIC {
            return Err(CodecError::BadMagic {
                found: buf[0..4].try_into().unwrap(),
            });
        }
        if n < HEADER_LEN {
            return Err(CodecError::Truncated { offset: 0 });
        }
        let header = Phl1Header::parse(&buf)?;
        Ok(Self {
            inner,
            header,
            read: 0,
            done: false,
        })
    }

    pub fn header(&self) -> Phl1Header {
        self.header
    }

    fn offset(&self) -> u64 {
        HEADER_LEN as u64 + self.read * RECORD_LEN as u64
    }

    fn next_record(&mut self) -> Result<Option<PixelHit>, CodecError> {
        if self.read == self.header.count {
            let mut probe = [0u8; 64];
            let extra = read_full(&mut self.inner, &mut probe)?;
            if extra > 0 {
                let mut rest = Vec::new();
                self.inner.read_to_end(&mut rest)?;
                return Err(CodecError::TrailingBytes {
                    offset: self.offset(),
                    extra: (extra + rest.len()) as u64,
                });
            }
            return Ok(None);
        }
        let offset = self.offset();
        let mut rec = [0u8; RECORD_LEN];
        let n = read_full(&mut self.inner, &mut rec)?;
        if n < RECORD_LEN {
            return Err(CodecError::Truncated { offset });
        }
        let hit = decode_record(&rec);
        hit.validate()
            .map_err(|source| CodecError::InvalidRecord { offset, source })?;
        self.read += 1;
        Ok(Some(hit))
    }
}

impl<R: Read> Iterator for Phl1Reader<R> {
    type Item = Result<PixelHit, CodecError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_record() {
            Ok(Some(hit)) => Some(Ok(hit)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

pub const CSV_HEADER: &str = "x,y,toa_ps,tot";

pub fn write_hits_csv<W: Write>(out: W, hits: &[PixelHit]) -> Result<(), CodecError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER.split(',')).map_err(csv_to_io)?;
    for h in hits {
        w.write_record(&[
            h.x.to_string(),
            h.y.to_string(),
            h.toa_ps.to_string(),
            h.tot.to_string(),
        ])
        .map_err(csv_to_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_hits_csv<R: BufRead>(input: R) -> Result<Vec<PixelHit>, CodecError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = r.headers().map_err(csv_to_io)?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER.split(',').collect::<Vec<_>>() {
        return Err(CodecError::Csv {
            line: 1,
            message: format!("expected header `{CSV_HEADER}`"),
        });
    }
    let mut hits = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| CodecError::Csv {
            line,
            message: e.to_string(),
        })?;
        let field = |k: usize| -> Result<u64, CodecError> {
            rec.get(k)
                .ok_or_else(|| CodecError::Csv {
                    line,
                    message: "missing field".into(),
                })?
                .parse::<u64>()
                .map_err(|e| CodecError::Csv {
                    line,
                    message: e.to_string(),
                })
        };
        let narrow = |v: u64| -> Result<u16, CodecError> {
            u16::try_from(v).map_err(|_| CodecError::Csv {
                line,
                message: format!("value {v} out of range"),
            })
        };
        let hit =
            PixelHit::new(narrow(field(0)?)?, narrow(field(1)?)?, field(2)?, narrow(field(3)?)?).map_err(|e| {
                CodecError::Csv {
                    line,
                    message: e.to_string(),
                }
            })?;
        hits.push(hit);
    }
    Ok(hits)
}

fn csv_to_io(e: csv::Error) -> io::Error {
    io::Error::other(e)
}
