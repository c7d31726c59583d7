//! Self-describing restart container (`.prcp`).
//!
//! Layout, all integers little-endian:
//!
//! | bytes            | content                                        |
//! |------------------|------------------------------------------------|
//! | 4                | magic `PRCP`                                   |
//! | 4                | format version (u32) = 1                       |
//! | 4 + 4            | nx, ny (u32)                                   |
//! | 8                | time in seconds (u64)                          |
//! | 4 + 4            | slice index, iteration index (i32, -1 = none)  |
//! | 1                | history count (u8)                             |
//! | 5 * nx * ny * 8  | U, V, ETA, T, S as f64, row-major              |
//! | h * 5 * nx*ny*8  | history tendencies, newest first, same layout  |
//! | 8                | CRC-64/XZ of every preceding byte              |
//!
//! Grid spacing is not part of the file; readers supply the grid.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crc::{Crc, CRC_64_XZ};
use thiserror::Error;

use crate::solver::{StepHistory, Tendency};
use crate::state::{FieldSet, Grid, ModelState, StateError};

pub const MAGIC: &[u8; 4] = b"PRCP";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 4 + 4 + 1;
const TRAILER_LEN: usize = 8;
const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("unsupported checkpoint version {found} (expected {FORMAT_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("checkpoint grid {nx}x{ny} does not match expected {expected}")]
    GridMismatch { nx: u32, ny: u32, expected: Grid },
    #[error("checkpoint holds an invalid state: {0}")]
    InvalidState(#[from] StateError),
    #[error("checkpoint has invalid history: {0}")]
    InvalidHistory(String),
    #[error("checkpoint I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Position of a checkpoint within a run, the analog of a model clock file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockRecord {
    pub time: u64,
    pub slice: i32,
    pub iteration: i32,
}

impl ClockRecord {
    pub const NOT_IN_RUN: i32 = -1;

    pub fn standalone(time: u64) -> Self {
        Self {
            time,
            slice: Self::NOT_IN_RUN,
            iteration: Self::NOT_IN_RUN,
        }
    }
}

/// Decoded file contents, independent of grid spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub nx: u32,
    pub ny: u32,
    pub clock: ClockRecord,
    pub fields: FieldSet,
    /// Newest first.
    pub history: Vec<FieldSet>,
}

impl Checkpoint {
    pub fn from_state(s: &ModelState, history: Option<&StepHistory>, slice: i32, iteration: i32) -> Self {
        Self {
            nx: s.grid().nx() as u32,
            ny: s.grid().ny() as u32,
            clock: ClockRecord {
                time: s.time(),
                slice,
                iteration,
            },
            fields: s.fields().clone(),
            history: history
                .map(|h| h.tendencies().iter().map(|t| t.fields().clone()).collect())
                .unwrap_or_default(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let cells = self.nx as usize * self.ny as usize;
        let mut out = Vec::with_capacity(HEADER_LEN + (5 + 5 * self.history.len()) * cells * 8 + TRAILER_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.nx.to_le_bytes());
        out.extend_from_slice(&self.ny.to_le_bytes());
        out.extend_from_slice(&self.clock.time.to_le_bytes());
        out.extend_from_slice(&self.clock.slice.to_le_bytes());
        out.extend_from_slice(&self.clock.iteration.to_le_bytes());
        let count = u8::try_from(self.history.len()).expect("history count fits in a byte");
        out.push(count);
        for set in std::iter::once(&self.fields).chain(&self.history) {
            for (_, values) in set.iter() {
                for v in values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let crc = CRC64.checksum(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < HEADER_LEN + TRAILER_LEN {
            return Err(CheckpointError::Corrupt(format!("file too short ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(CheckpointError::Corrupt("bad magic".into()));
        }
        let mut r = Reader { bytes, pos: 4 };
        let version = r.u32();
        if version != FORMAT_VERSION {
            return Err(CheckpointError::VersionMismatch { found: version });
        }
        let nx = r.u32();
        let ny = r.u32();
        let time = r.u64();
        let slice = r.i32();
        let iteration = r.i32();
        let count = r.u8() as usize;
        let cells = nx as usize * ny as usize;
        let expected = (5 * cells)
            .checked_mul(1 + count)
            .and_then(|v| v.checked_mul(8))
            .and_then(|v| v.checked_add(HEADER_LEN + TRAILER_LEN));
        if expected != Some(bytes.len()) {
            return Err(CheckpointError::Corrupt(format!(
                "length {} does not match header ({nx}x{ny}, {count} history entries)",
                bytes.len()
            )));
        }
        let body_end = bytes.len() - TRAILER_LEN;
        let stored = u64::from_le_bytes(bytes[body_end..].try_into().unwrap());
        if CRC64.checksum(&bytes[..body_end]) != stored {
            return Err(CheckpointError::Corrupt("checksum mismatch".into()));
        }
        let mut sets = (0..=count).map(|_| {
            FieldSet::from_arrays(std::array::from_fn(|_| (0..cells).map(|_| r.f64()).collect()))
        });
        let fields = sets.next().unwrap();
        let history = sets.collect();
        Ok(Self {
            nx,
            ny,
            clock: ClockRecord {
                time,
                slice,
                iteration,
            },
            fields,
            history,
        })
    }

    /// Attaches grid spacing. The history comes back only when stored.
    pub fn into_state(self, grid: Grid) -> Result<(ModelState, Option<StepHistory>), CheckpointError> {
        if grid.nx() != self.nx as usize || grid.ny() != self.ny as usize {
            return Err(CheckpointError::GridMismatch {
                nx: self.nx,
                ny: self.ny,
                expected: grid,
            });
        }
        let state = ModelState::new(grid, self.fields, self.clock.time)?;
        if self.history.is_empty() {
            return Ok((state, None));
        }
        let tendencies = self.history.into_iter().map(Tendency).collect();
        let history = StepHistory::from_parts(state.clone(), tendencies)
            .map_err(|e| CheckpointError::InvalidHistory(e.to_string()))?;
        Ok((state, Some(history)))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out = self.bytes[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        out
    }

    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn i32(&mut self) -> i32 {
        i32::from_le_bytes(self.take())
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }

    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes bytes to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CheckpointError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        file.write_all(bytes).map_err(io_err(&tmp))?;
        file.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), CheckpointError> {
    write_atomic(path, &checkpoint.encode())
}

/// Convenience wrapper: state plus optional history with clock tags.
pub fn write_state(
    path: &Path,
    s: &ModelState,
    history: Option<&StepHistory>,
    slice: i32,
    iteration: i32,
) -> Result<(), CheckpointError> {
    write_checkpoint(path, &Checkpoint::from_state(s, history, slice, iteration))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Checkpoint::decode(&bytes)
}

pub fn read_state(path: &Path, grid: Grid) -> Result<(ModelState, Option<StepHistory>, ClockRecord), CheckpointError> {
    let cp = read_checkpoint(path)?;
    let clock = cp.clock;
    let (state, history) = cp.into_state(grid)?;
    Ok((state, history, clock))
}
