//! Wire format between the host and an external scorer process.
//!
//! ```text
//! scorer → host   HELLO launder-scorer v1\n
//! host → scorer   PATCH <w> <h> <c>\n  followed by w·h·c raw bytes
//! scorer → host   <score>\n
//! ```
//!
//! Pixel bytes are row-major with interleaved channels. The host closes
//! the scorer's stdin to end the session.

use std::io::{BufRead, Read};

use crate::error::{Error, Result, ScorerPhase};
use crate::imaging::ImageBuffer;

pub const HELLO: &str = "HELLO launder-scorer v1";
/// Longest line either side accepts.
pub const MAX_LINE: usize = 4096;
/// Largest frame payload a scorer accepts, in bytes.
pub const MAX_FRAME_BYTES: usize = 1 << 26;

fn strip_newline(line: &str) -> &str {
    let line = line.strip_suffix('\n').unwrap_or(line);
    line.strip_suffix('\r').unwrap_or(line)
}

fn excerpt(line: &str) -> String {
    let s: String = line.chars().take(64).collect();
    format!("{s:?}")
}

/// Accepts exactly the greeting line (LF or CRLF terminated).
pub fn parse_handshake(line: &str) -> Result<()> {
    if strip_newline(line) == HELLO {
        Ok(())
    } else {
        Err(Error::Scorer {
            phase: ScorerPhase::Handshake,
            detail: format!("expected {HELLO:?}, got {}", excerpt(line)),
        })
    }
}

/// One finite decimal number, optionally padded with spaces.
pub fn parse_score_line(line: &str) -> Result<f64> {
    let body = strip_newline(line).trim_matches(' ');
    let malformed = || Error::Scorer {
        phase: ScorerPhase::Response,
        detail: format!("malformed score line {}", excerpt(line)),
    };
    // the float parser also accepts "inf" and "nan"; only plain numbers pass
    if body.is_empty() || !body.bytes().all(|b| b.is_ascii_digit() || b"+-.eE".contains(&b)) {
        return Err(malformed());
    }
    body.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(malformed)
}

pub fn format_score(score: f64) -> String {
    // shortest representation that round-trips exactly
    format!("{score:?}\n")
}

pub fn encode_patch_frame(img: &ImageBuffer) -> Vec<u8> {
    let mut out = format!("PATCH {} {} {}\n", img.width(), img.height(), img.channels()).into_bytes();
    out.extend_from_slice(img.bytes());
    out
}

fn parse_dim(tok: &str) -> Option<usize> {
    if tok.is_empty() || tok.len() > 9 || !tok.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    tok.parse().ok()
}

/// Parses `PATCH <w> <h> <c>`; returns `(w, h, c)`.
pub fn parse_patch_header(line: &str) -> Result<(usize, usize, usize)> {
    let bad = |why: &str| Error::Scorer {
        phase: ScorerPhase::Request,
        detail: format!("{why}: {}", excerpt(line)),
    };
    let body = strip_newline(line);
    let toks: Vec<&str> = body.split(' ').collect();
    if toks.len() != 4 || toks[0] != "PATCH" {
        return Err(bad("expected PATCH <w> <h> <c>"));
    }
    let dims: Vec<usize> = toks[1..]
        .iter()
        .map(|t| parse_dim(t))
        .collect::<Option<_>>()
        .ok_or_else(|| bad("bad dimension"))?;
    let (w, h, c) = (dims[0], dims[1], dims[2]);
    if w == 0 || h == 0 || !(c == 1 || c == 3) {
        return Err(bad("dimensions out of range"));
    }
    match w.checked_mul(h).and_then(|v| v.checked_mul(c)) {
        Some(n) if n <= MAX_FRAME_BYTES => Ok((w, h, c)),
        _ => Err(bad("frame too large")),
    }
}

/// Reads one line of at most [`MAX_LINE`] bytes; `None` at end of stream.
pub fn read_line<R: BufRead>(reader: &mut R) -> std::io::Result<Option<String>> {
    let mut buf = Vec::new();
    let n = reader.by_ref().take(MAX_LINE as u64).read_until(b'\n', &mut buf)?;
    if n == 0 {
        return Ok(None);
    }
    if buf.last() != Some(&b'\n') && n == MAX_LINE {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "line too long"));
    }
    String::from_utf8(buf)
        .map(Some)
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidData, "line is not UTF-8"))
}

/// Scorer side: reads the next frame, or `None` once the host has closed
/// the stream.
pub fn read_patch_frame<R: BufRead>(reader: &mut R) -> Result<Option<ImageBuffer>> {
    let io_err = |e: std::io::Error| Error::Scorer {
        phase: ScorerPhase::Request,
        detail: e.to_string(),
    };
    let Some(line) = read_line(reader).map_err(io_err)? else {
        return Ok(None);
    };
    let (w, h, c) = parse_patch_header(&line)?;
    let mut data = vec![0u8; w * h * c];
    reader.read_exact(&mut data).map_err(io_err)?;
    ImageBuffer::from_bytes(w, h, c, data).map(Some)
}
