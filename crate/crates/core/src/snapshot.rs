//! Binary state snapshots.
//!
//! A snapshot stores a two-mode state verbatim: truncation settings, the
//! preparation record, and the raw amplitude grid or density matrix in
//! row-major order, all little-endian.  Loading restores the exact bits
//! that were saved, so cached states survive round-trips unchanged.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::fock::{FockConfig, Preparation, StateData, TwoModeState};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"NPTSNAP\x01";
const VERSION: u32 = 1;

const TAG_TMSV: u8 = 0;
const TAG_SUBTRACTED: u8 = 1;
const TAG_CAT: u8 = 2;
const TAG_CUSTOM: u8 = 3;

const PURITY_PURE: u8 = 0;
const PURITY_MIXED: u8 = 1;

/// Maps an early end of input to a format violation instead of a bare
/// I/O failure; anything else stays an I/O error.
fn map_io(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format("snapshot payload is truncated".into())
    } else {
        Error::Io(e)
    }
}

/// Writes a state snapshot to any byte sink.
pub fn write_snapshot(state: &TwoModeState, sink: &mut impl Write) -> Result<()> {
    sink.write_all(MAGIC)?;
    sink.write_u32::<LittleEndian>(VERSION)?;
    let config = state.config();
    sink.write_u64::<LittleEndian>(config.dim_a as u64)?;
    sink.write_u64::<LittleEndian>(config.dim_b as u64)?;
    sink.write_f64::<LittleEndian>(config.tail_tolerance)?;
    match state.preparation() {
        Preparation::TwoModeSqueezed { zeta } => {
            sink.write_u8(TAG_TMSV)?;
            sink.write_f64::<LittleEndian>(zeta)?;
        }
        Preparation::SubtractedSqueezed { zeta, n_sub, m_sub } => {
            sink.write_u8(TAG_SUBTRACTED)?;
            sink.write_f64::<LittleEndian>(zeta)?;
            sink.write_u32::<LittleEndian>(n_sub)?;
            sink.write_u32::<LittleEndian>(m_sub)?;
        }
        Preparation::EntangledCat { alpha } => {
            sink.write_u8(TAG_CAT)?;
            sink.write_f64::<LittleEndian>(alpha)?;
        }
        Preparation::Custom => sink.write_u8(TAG_CUSTOM)?,
    }
    let payload: &DMatrix<Complex64> = match &state.data {
        StateData::Pure(psi) => {
            sink.write_u8(PURITY_PURE)?;
            psi
        }
        StateData::Mixed(rho) => {
            sink.write_u8(PURITY_MIXED)?;
            rho
        }
    };
    for r in 0..payload.nrows() {
        for c in 0..payload.ncols() {
            let z = payload[(r, c)];
            sink.write_f64::<LittleEndian>(z.re)?;
            sink.write_f64::<LittleEndian>(z.im)?;
        }
    }
    Ok(())
}

/// Reads a state snapshot from any byte source.
pub fn read_snapshot(source: &mut impl Read) -> Result<TwoModeState> {
    let mut magic = [0u8; 8];
    source.read_exact(&mut magic).map_err(map_io)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a state snapshot (bad magic)".into()));
    }
    let version = source.read_u32::<LittleEndian>().map_err(map_io)?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "snapshot version {version} is not supported (expected {VERSION})"
        )));
    }
    let dim_a = source.read_u64::<LittleEndian>().map_err(map_io)? as usize;
    let dim_b = source.read_u64::<LittleEndian>().map_err(map_io)? as usize;
    let tail = source.read_f64::<LittleEndian>().map_err(map_io)?;
    if dim_a < 2 || dim_b < 2 || dim_a > 1 << 20 || dim_b > 1 << 20 {
        return Err(Error::Format(format!(
            "snapshot declares an unusable box {dim_a}x{dim_b}"
        )));
    }
    let config = FockConfig::new(dim_a, dim_b).with_tail_tolerance(tail);
    let preparation = match source.read_u8().map_err(map_io)? {
        TAG_TMSV => Preparation::TwoModeSqueezed {
            zeta: source.read_f64::<LittleEndian>().map_err(map_io)?,
        },
        TAG_SUBTRACTED => Preparation::SubtractedSqueezed {
            zeta: source.read_f64::<LittleEndian>().map_err(map_io)?,
            n_sub: source.read_u32::<LittleEndian>().map_err(map_io)?,
            m_sub: source.read_u32::<LittleEndian>().map_err(map_io)?,
        },
        TAG_CAT => Preparation::EntangledCat {
            alpha: source.read_f64::<LittleEndian>().map_err(map_io)?,
        },
        TAG_CUSTOM => Preparation::Custom,
        tag => {
            return Err(Error::Format(format!(
                "unknown preparation tag {tag} in snapshot"
            )))
        }
    };
    let purity = source.read_u8().map_err(map_io)?;
    let (rows, cols) = match purity {
        PURITY_PURE => (dim_a, dim_b),
        PURITY_MIXED => (dim_a * dim_b, dim_a * dim_b),
        other => {
            return Err(Error::Format(format!(
                "unknown purity marker {other} in snapshot"
            )))
        }
    };
    let mut payload = DMatrix::<Complex64>::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let re = source.read_f64::<LittleEndian>().map_err(map_io)?;
            let im = source.read_f64::<LittleEndian>().map_err(map_io)?;
            payload[(r, c)] = Complex64::new(re, im);
        }
    }
    let data = match purity {
        PURITY_PURE => StateData::Pure(payload),
        _ => StateData::Mixed(payload),
    };
    TwoModeState::from_raw_parts(data, config, preparation)
}

/// Saves a state snapshot to a file.
pub fn save_snapshot(state: &TwoModeState, path: &Path) -> Result<()> {
    let mut sink = BufWriter::new(File::create(path)?);
    write_snapshot(state, &mut sink)?;
    sink.flush()?;
    Ok(())
}

/// Loads a state snapshot from a file.
pub fn load_snapshot(path: &Path) -> Result<TwoModeState> {
    let mut source = BufReader::new(File::open(path)?);
    let state = read_snapshot(&mut source)?;
    // trailing garbage means the file is not what it claims to be
    let mut rest = [0u8; 1];
    match source.read(&mut rest) {
        Ok(0) => Ok(state),
        Ok(_) => Err(Error::Format(
            "snapshot file has trailing bytes after the payload".into(),
        )),
        Err(e) => Err(Error::Io(e)),
    }
}
