//! TGS thermogram container.
//!
//! One UTF-8 header line followed by raw frame data:
//!
//! ```text
//! TGS1 nx=<u> ny=<u> nt=<u> dx_m=<f> dy_m=<f> dt_s=<f> t0_frames=<u> pulse_s=<f>\n
//! ```
//!
//! then `nt * ny * nx` little-endian IEEE-754 32-bit floats, row-major within
//! a frame, frames in time order. Values are promoted to f64 in memory.
//! Single fields (defect maps, masks, PSF frames) use the same container with
//! `nt=1`.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{PsrError, Result};
use crate::field::Field2D;
use crate::grid::GridSpec;
use crate::stack::ThermogramStack;

const MAGIC: &str = "TGS1";
const HEADER_KEYS: [&str; 8] =
    ["nx", "ny", "nt", "dx_m", "dy_m", "dt_s", "t0_frames", "pulse_s"];

pub fn save_stack(stack: &ThermogramStack, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = stack_to_bytes(stack)?;
    fs::write(path, bytes).map_err(|source| PsrError::Io { path: path.to_owned(), source })
}

pub fn load_stack(path: impl AsRef<Path>) -> Result<ThermogramStack> {
    let path = path.as_ref();
    let bytes =
        fs::read(path).map_err(|source| PsrError::Io { path: path.to_owned(), source })?;
    stack_from_bytes(&bytes, path)
}

pub fn save_field(field: &Field2D, path: impl AsRef<Path>) -> Result<()> {
    let grid = GridSpec { nt: 1, ..*field.grid() };
    let stack = ThermogramStack::new(grid, vec![field.values().clone()], 0, 0.0)?;
    save_stack(&stack, path)
}

pub fn load_field(path: impl AsRef<Path>) -> Result<Field2D> {
    let path = path.as_ref();
    let stack = load_stack(path)?;
    if stack.grid().nt != 1 {
        return Err(PsrError::Format {
            path: path.to_owned(),
            detail: format!("expected a single-frame container, found nt = {}", stack.grid().nt),
        });
    }
    Ok(stack.frame_field(0))
}

pub fn stack_to_bytes(stack: &ThermogramStack) -> Result<Vec<u8>> {
    let g = stack.grid();
    let header = format!(
        "{MAGIC} nx={} ny={} nt={} dx_m={} dy_m={} dt_s={} t0_frames={} pulse_s={}\n",
        g.nx,
        g.ny,
        g.nt,
        g.dx,
        g.dy,
        g.dt,
        stack.t0_frames(),
        stack.pulse_length()
    );
    let mut bytes = header.into_bytes();
    bytes.reserve(g.nt * g.n_pixels() * 4);
    for (k, frame) in stack.frames().iter().enumerate() {
        for &v in frame.iter() {
            if v.abs() > f32::MAX as f64 {
                return Err(PsrError::invalid(format!(
                    "frame {k}: value {v:e} exceeds 32-bit float range"
                )));
            }
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(bytes)
}

pub fn stack_from_bytes(bytes: &[u8], path: &Path) -> Result<ThermogramStack> {
    let bad = |detail: String| PsrError::Format { path: path.to_owned(), detail };

    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| bad("header is not valid UTF-8".into()))?;
    let mut tokens = header.split(' ');
    if tokens.next() != Some(MAGIC) {
        return Err(bad(format!("bad magic, expected {MAGIC}")));
    }
    let mut values = Vec::with_capacity(HEADER_KEYS.len());
    for key in HEADER_KEYS {
        let token = tokens.next().ok_or_else(|| bad(format!("missing header key {key}")))?;
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed header token {token:?}")))?;
        if k != key {
            return Err(bad(format!("expected header key {key}, found {k}")));
        }
        values.push(v.to_owned());
    }
    if let Some(extra) = tokens.next() {
        return Err(bad(format!("unexpected trailing header token {extra:?}")));
    }

    let parse_usize = |i: usize| -> Result<usize> {
        values[i]
            .parse()
            .map_err(|_| bad(format!("header {}={:?} is not an integer", HEADER_KEYS[i], values[i])))
    };
    let parse_f64 = |i: usize| -> Result<f64> {
        values[i]
            .parse()
            .map_err(|_| bad(format!("header {}={:?} is not a number", HEADER_KEYS[i], values[i])))
    };
    let nx = parse_usize(0)?;
    let ny = parse_usize(1)?;
    let nt = parse_usize(2)?;
    let dx = parse_f64(3)?;
    let dy = parse_f64(4)?;
    let dt = parse_f64(5)?;
    let t0_frames = parse_usize(6)?;
    let pulse_s = parse_f64(7)?;
    let grid = GridSpec::new(nx, ny, nt, dx, dy, dt)?;

    let data = &bytes[nl + 1..];
    let frame_bytes = nx * ny * 4;
    let expected = nt * frame_bytes;
    if data.len() != expected {
        let whole_frames = data.len() / frame_bytes;
        return Err(bad(format!(
            "frame byte-count mismatch: header declares {nt} frames ({expected} bytes) but file \
             holds {} bytes ({whole_frames} whole frames)",
            data.len()
        )));
    }

    let mut frames = Vec::with_capacity(nt);
    for k in 0..nt {
        let chunk = &data[k * frame_bytes..(k + 1) * frame_bytes];
        let mut frame = Array2::<f64>::zeros((ny, nx));
        for (i, v) in frame.iter_mut().enumerate() {
            let raw = f32::from_le_bytes(chunk[i * 4..i * 4 + 4].try_into().unwrap());
            if !raw.is_finite() {
                return Err(PsrError::NonFinite { frame: k, x: i % nx, y: i / nx });
            }
            *v = raw as f64;
        }
        frames.push(frame);
    }
    ThermogramStack::new(grid, frames, t0_frames, pulse_s)
}
