//! Binary path record.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! header  magic   4 bytes  "SRDR"
//!         version u32      1
//!         hash    32 bytes configuration hash (zero if none)
//!         dim     u32
//!         points  u32      nodes per axis
//!         period  f64
//!         dt      f64
//! frame   t, step (u64), sup, l1, l_beta, budget, min_u, comparison_gap,
//!         level, then points^dim field values (f64, row-major)
//! ```
//!
//! Frames follow the header back to back until end of file.

use std::io::{self, Read, Write};

use super::run::{Snapshot, TimeSample};
use super::Grid;

pub const RECORD_MAGIC: [u8; 4] = *b"SRDR";
pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RecordHeader {
    pub config_hash: [u8; 32],
    pub grid: Grid,
    pub dt: f64,
}

/// One decoded frame; the same layout as a [`Snapshot`].
pub type RecordFrame = Snapshot;

/// Streams frames to `W` after writing the header.
pub struct RecordWriter<W: Write> {
    out: W,
    nodes: usize,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(mut out: W, header: &RecordHeader) -> io::Result<Self> {
        out.write_all(&RECORD_MAGIC)?;
        out.write_all(&RECORD_VERSION.to_le_bytes())?;
        out.write_all(&header.config_hash)?;
        out.write_all(&(header.grid.dim as u32).to_le_bytes())?;
        out.write_all(&(header.grid.points as u32).to_le_bytes())?;
        out.write_all(&header.grid.period.to_le_bytes())?;
        out.write_all(&header.dt.to_le_bytes())?;
        Ok(Self {
            out,
            nodes: header.grid.len(),
        })
    }

    pub fn push(&mut self, frame: &Snapshot) -> io::Result<()> {
        if frame.field.len() != self.nodes {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame size does not match the grid"));
        }
        let s = &frame.stats;
        self.out.write_all(&s.t.to_le_bytes())?;
        self.out.write_all(&s.step.to_le_bytes())?;
        for v in [s.sup, s.l1, s.l_beta, s.budget, s.min_u, s.comparison_gap, s.level] {
            self.out.write_all(&v.to_le_bytes())?;
        }
        for v in &frame.field {
            self.out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Writes a complete record.
pub fn write_path_record<W: Write>(out: W, header: &RecordHeader, frames: &[Snapshot]) -> io::Result<W> {
    let mut w = RecordWriter::new(out, header)?;
    for f in frames {
        w.push(f)?;
    }
    w.finish()
}

fn invalid(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads a record written by [`RecordWriter`].
pub fn read_path_record<R: Read>(mut input: R) -> io::Result<(RecordHeader, Vec<Snapshot>)> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if magic != RECORD_MAGIC {
        return Err(invalid("not a path record"));
    }
    let version = read_u32(&mut input)?;
    if version != RECORD_VERSION {
        return Err(invalid(&format!("unsupported record version {version}")));
    }
    let mut config_hash = [0u8; 32];
    input.read_exact(&mut config_hash)?;
    let dim = read_u32(&mut input)? as usize;
    let points = read_u32(&mut input)? as usize;
    let period = read_f64(&mut input)?;
    let dt = read_f64(&mut input)?;
    let grid = Grid::new(dim, points, period).map_err(|e| invalid(&e.to_string()))?;
    let header = RecordHeader { config_hash, grid, dt };

    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    let frame_bytes = 8 * (9 + grid.len());
    if rest.len() % frame_bytes != 0 {
        return Err(invalid("truncated frame"));
    }
    let mut frames = Vec::with_capacity(rest.len() / frame_bytes);
    for chunk in rest.chunks_exact(frame_bytes) {
        let word = |i: usize| -> [u8; 8] { chunk[8 * i..8 * i + 8].try_into().unwrap() };
        let f = |i: usize| f64::from_le_bytes(word(i));
        let stats = TimeSample {
            t: f(0),
            step: u64::from_le_bytes(word(1)),
            sup: f(2),
            l1: f(3),
            l_beta: f(4),
            budget: f(5),
            min_u: f(6),
            comparison_gap: f(7),
            level: f(8),
        };
        let field = (0..grid.len()).map(|i| f(9 + i)).collect();
        frames.push(Snapshot { stats, field });
    }
    Ok((header, frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(t: f64, n: usize) -> Snapshot {
        Snapshot {
            stats: TimeSample {
                t,
                step: (t * 100.0) as u64,
                sup: 1.5,
                l1: 2.0,
                l_beta: 0.7,
                budget: 0.01,
                min_u: -1e-9,
                comparison_gap: -0.2,
                level: 4.0,
            },
            field: (0..n).map(|i| i as f64 * t).collect(),
        }
    }

    #[test]
    fn round_trip() {
        let grid = Grid::new(2, 4, 3.0).unwrap();
        let header = RecordHeader {
            config_hash: [7; 32],
            grid,
            dt: 0.125,
        };
        let frames = vec![frame(0.0, 16), frame(0.5, 16), frame(1.0, 16)];
        let bytes = write_path_record(Vec::new(), &header, &frames).unwrap();
        assert_eq!(&bytes[..4], b"SRDR");
        assert_eq!(bytes.len(), 4 + 4 + 32 + 4 + 4 + 8 + 8 + 3 * 8 * (9 + 16));
        let (h, f) = read_path_record(&bytes[..]).unwrap();
        assert_eq!(h, header);
        assert_eq!(f, frames);
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let grid = Grid::new(1, 4, 1.0).unwrap();
        let header = RecordHeader {
            config_hash: [0; 32],
            grid,
            dt: 0.1,
        };
        let bytes = write_path_record(Vec::new(), &header, &[frame(0.1, 4)]).unwrap();
        assert!(read_path_record(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_path_record(&bad[..]).is_err());
    }
}
