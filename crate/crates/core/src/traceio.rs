//! Trace persistence (CSV) and the framed binary sensor link.
//!
//! Both formats are described byte for byte in `docs/formats.md`.
//!
//! Frame layout (65 bytes):
//!
//! ```text
//! +------+------+-----+---------------------------------------+---------+
//! | 0xAA | 0x55 | LEN | PAYLOAD (60 bytes, little-endian)      | CRC16   |
//! +------+------+-----+---------------------------------------+---------+
//!   PAYLOAD = u32 timestamp_ms, 13 × f32 (ax ay az gx gy gz mx my mz
//!             qw qx qy qz), u32 flex_ohms
//!   CRC16   = CRC-CCITT (poly 0x1021, init 0xFFFF, no reflection, no final
//!             xor) over LEN + PAYLOAD, sent big-endian
//! ```

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::orientation::{Quaternion, Vec3};
use crate::sensor_models::ImuSample;

pub const CSV_HEADER: &str = "timestamp_ms,ax,ay,az,gx,gy,gz,mx,my,mz,qw,qx,qy,qz,flex_ohms";
pub const CSV_COLUMNS: usize = 15;

pub const SYNC: [u8; 2] = [0xAA, 0x55];
pub const PAYLOAD_LEN: usize = 60;
pub const FRAME_LEN: usize = 2 + 1 + PAYLOAD_LEN + 2;

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("MalformedHeader: expected {CSV_HEADER:?}, found {found:?}")]
    MalformedHeader { found: String },
    #[error("NonMonotonicTimestamp: row {row}: timestamp {got} ms does not follow {previous} ms")]
    NonMonotonicTimestamp { row: usize, previous: u64, got: u64 },
    #[error("BadFieldCount: row {row}: expected {CSV_COLUMNS} fields, found {found}")]
    BadFieldCount { row: usize, found: usize },
    #[error("UnparseableNumber: row {row}, column {column}: {value:?}")]
    UnparseableNumber { row: usize, column: &'static str, value: String },
    #[error("Io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("TimestampOverflow: {0} ms does not fit in 32 bits")]
    TimestampOverflow(u64),
    #[error("FlexOutOfRange: flex value cannot be encoded as an unsigned 32-bit ohm count")]
    FlexOutOfRange,
}

/// Formats `x` rounded to 9 significant digits, in the shortest form that
/// reads back to that rounded value.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        // Keeps the sign of -0.0.
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    let a = rounded.abs();
    if (1e-5..1e15).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

fn csv_columns() -> [&'static str; CSV_COLUMNS] {
    [
        "timestamp_ms", "ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz", "qw", "qx", "qy", "qz",
        "flex_ohms",
    ]
}

fn sample_reals(s: &ImuSample) -> [f64; 14] {
    [
        s.accel.x, s.accel.y, s.accel.z, s.gyro.x, s.gyro.y, s.gyro.z, s.mag.x, s.mag.y, s.mag.z, s.quat.b0,
        s.quat.b1, s.quat.b2, s.quat.b3, s.flex_ohms,
    ]
}

fn sample_from_reals(timestamp_ms: u64, r: &[f64; 14]) -> ImuSample {
    ImuSample {
        timestamp_ms,
        accel: Vec3::new(r[0], r[1], r[2]),
        gyro: Vec3::new(r[3], r[4], r[5]),
        mag: Vec3::new(r[6], r[7], r[8]),
        quat: Quaternion::new(r[9], r[10], r[11], r[12]),
        flex_ohms: r[13],
    }
}

/// Renders a trace as CSV text, header included.
pub fn csv_string(trace: &[ImuSample]) -> String {
    let mut out = String::with_capacity(32 + trace.len() * 160);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in trace {
        let _ = write!(out, "{}", s.timestamp_ms);
        for v in sample_reals(s) {
            out.push(',');
            out.push_str(&format_sig9(v));
        }
        out.push('\n');
    }
    out
}

pub fn write_csv<W: Write>(mut w: W, trace: &[ImuSample]) -> io::Result<()> {
    w.write_all(csv_string(trace).as_bytes())
}

/// Reads a trace. Row numbers in errors are 1-based file lines (the header is
/// row 1). Blank lines are skipped.
pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<ImuSample>, TraceIoError> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim_end_matches('\r') != CSV_HEADER {
        return Err(TraceIoError::MalformedHeader { found: header });
    }
    let names = csv_columns();
    let mut out = Vec::new();
    let mut previous: Option<u64> = None;
    for (idx, line) in lines.enumerate() {
        let row = idx + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != CSV_COLUMNS {
            return Err(TraceIoError::BadFieldCount { row, found: fields.len() });
        }
        let timestamp_ms: u64 = fields[0].trim().parse().map_err(|_| TraceIoError::UnparseableNumber {
            row,
            column: names[0],
            value: fields[0].to_string(),
        })?;
        let mut reals = [0.0; 14];
        for (k, field) in fields[1..].iter().enumerate() {
            reals[k] = field
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| TraceIoError::UnparseableNumber {
                    row,
                    column: names[k + 1],
                    value: field.to_string(),
                })?;
        }
        if let Some(previous) = previous {
            if timestamp_ms <= previous {
                return Err(TraceIoError::NonMonotonicTimestamp { row, previous, got: timestamp_ms });
            }
        }
        previous = Some(timestamp_ms);
        out.push(sample_from_reals(timestamp_ms, &reals));
    }
    Ok(out)
}

const fn crc_table() -> [u16; 256] {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u16) << 8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x8000 != 0 { (crc << 1) ^ 0x1021 } else { crc << 1 };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

static CRC_TABLE: [u16; 256] = crc_table();

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, MSB first, no final xor.
pub fn crc16_ccitt(bytes: &[u8]) -> u16 {
    bytes.iter().fold(0xFFFF, |crc, &b| {
        (crc << 8) ^ CRC_TABLE[(((crc >> 8) as u8) ^ b) as usize]
    })
}

/// Shift-register form of [`crc16_ccitt`], one bit at a time.
pub fn crc16_ccitt_bitwise(bytes: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &b in bytes {
        for bit in (0..8).rev() {
            let input = (b >> bit) & 1 == 1;
            let top = crc & 0x8000 != 0;
            crc <<= 1;
            if input ^ top {
                crc ^= 0x1021;
            }
        }
    }
    crc
}

pub fn encode_frame(sample: &ImuSample) -> Result<[u8; FRAME_LEN], FrameError> {
    let timestamp = u32::try_from(sample.timestamp_ms).map_err(|_| FrameError::TimestampOverflow(sample.timestamp_ms))?;
    let flex = sample.flex_ohms.round();
    if !(0.0..=u32::MAX as f64).contains(&flex) {
        return Err(FrameError::FlexOutOfRange);
    }

    let mut frame = [0u8; FRAME_LEN];
    frame[0..2].copy_from_slice(&SYNC);
    frame[2] = PAYLOAD_LEN as u8;
    let payload = &mut frame[3..3 + PAYLOAD_LEN];
    payload[0..4].copy_from_slice(&timestamp.to_le_bytes());
    let reals = sample_reals(sample);
    for (k, v) in reals[..13].iter().enumerate() {
        let at = 4 + 4 * k;
        payload[at..at + 4].copy_from_slice(&(*v as f32).to_le_bytes());
    }
    payload[56..60].copy_from_slice(&(flex as u32).to_le_bytes());
    let crc = crc16_ccitt(&frame[2..3 + PAYLOAD_LEN]);
    frame[3 + PAYLOAD_LEN..].copy_from_slice(&crc.to_be_bytes());
    Ok(frame)
}

fn decode_payload(payload: &[u8]) -> ImuSample {
    let word = |at: usize| [payload[at], payload[at + 1], payload[at + 2], payload[at + 3]];
    let timestamp_ms = u32::from_le_bytes(word(0)) as u64;
    let mut reals = [0.0f64; 14];
    for (k, v) in reals[..13].iter_mut().enumerate() {
        *v = f32::from_le_bytes(word(4 + 4 * k)) as f64;
    }
    reals[13] = u32::from_le_bytes(word(56)) as f64;
    sample_from_reals(timestamp_ms, &reals)
}

/// The sample exactly as it will come back from a frame round trip:
/// channels narrowed to `f32`, flex rounded to whole ohms.
pub fn frame_precision(sample: &ImuSample) -> ImuSample {
    let mut reals = sample_reals(sample);
    for v in reals[..13].iter_mut() {
        *v = *v as f32 as f64;
    }
    reals[13] = reals[13].round();
    sample_from_reals(sample.timestamp_ms, &reals)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    BadCrc,
    Truncated,
    BadLength,
}

/// Problem found at `offset`, counted in bytes from the start of the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub offset: u64,
}

/// Resynchronizing frame decoder for a byte stream that arrives in chunks.
///
/// After a bad length or a CRC mismatch it drops a single byte and scans for
/// the next sync pair, so an intact frame that follows garbage is never lost.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    /// Stream offset of `buf[0]`.
    base: u64,
    diagnostics: Vec<Diagnostic>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends bytes and returns every sample completed by them.
    pub fn push(&mut self, bytes: &[u8]) -> Vec<ImuSample> {
        self.buf.extend_from_slice(bytes);
        let mut out = Vec::new();
        let mut pos = 0;
        loop {
            let Some(rel) = find_sync(&self.buf[pos..]) else {
                // Keep a trailing 0xAA: it may be the first half of a sync.
                pos = if self.buf.last() == Some(&SYNC[0]) { self.buf.len() - 1 } else { self.buf.len() };
                break;
            };
            pos += rel;
            let avail = self.buf.len() - pos;
            if avail < 3 {
                break;
            }
            if self.buf[pos + 2] as usize != PAYLOAD_LEN {
                self.diagnose(DiagnosticKind::BadLength, pos);
                pos += 1;
                continue;
            }
            if avail < FRAME_LEN {
                break;
            }
            let frame = &self.buf[pos..pos + FRAME_LEN];
            let expected = u16::from_be_bytes([frame[FRAME_LEN - 2], frame[FRAME_LEN - 1]]);
            if crc16_ccitt(&frame[2..3 + PAYLOAD_LEN]) != expected {
                self.diagnose(DiagnosticKind::BadCrc, pos);
                pos += 1;
                continue;
            }
            out.push(decode_payload(&frame[3..3 + PAYLOAD_LEN]));
            pos += FRAME_LEN;
        }
        self.buf.drain(..pos);
        self.base += pos as u64;
        out
    }

    /// Ends the stream, reporting a partial frame still buffered.
    pub fn finish(&mut self) -> Vec<Diagnostic> {
        if let Some(rel) = find_sync(&self.buf) {
            self.diagnose(DiagnosticKind::Truncated, rel);
        }
        self.base += self.buf.len() as u64;
        self.buf.clear();
        std::mem::take(&mut self.diagnostics)
    }

    /// Diagnostics recorded so far, without ending the stream.
    pub fn take_diagnostics(&mut self) -> Vec<Diagnostic> {
        std::mem::take(&mut self.diagnostics)
    }

    fn diagnose(&mut self, kind: DiagnosticKind, pos: usize) {
        self.diagnostics.push(Diagnostic { kind, offset: self.base + pos as u64 });
    }
}

fn find_sync(bytes: &[u8]) -> Option<usize> {
    bytes.windows(2).position(|w| w == SYNC)
}

/// Decodes a complete byte stream. Never fails; problems are reported as
/// diagnostics.
pub fn decode_frames(bytes: &[u8]) -> (Vec<ImuSample>, Vec<Diagnostic>) {
    let mut decoder = FrameDecoder::new();
    let samples = decoder.push(bytes);
    (samples, decoder.finish())
}

/// Concatenated frames for a whole trace.
pub fn encode_stream(trace: &[ImuSample]) -> Result<Vec<u8>, FrameError> {
    let mut out = Vec::with_capacity(trace.len() * FRAME_LEN);
    for s in trace {
        out.extend_from_slice(&encode_frame(s)?);
    }
    Ok(out)
}
