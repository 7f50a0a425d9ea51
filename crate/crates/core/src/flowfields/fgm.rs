//! FGM v1 container for time-tagged grid maps.
//!
//! ```text
//! FGM 1
//! origin_x origin_y dx dy nx ny
//! t0 dt nt
//! binary | ascii
//! <payload>
//! ```
//!
//! Binary payload: per time layer, the u-plane then the v-plane, each `ny*nx`
//! little-endian f64 in row-major (y, then x) order. ASCII payload: one `u v`
//! pair per line in the same (time, y, x) order.

use super::{FlowError, GridFlowMap, GridGeometry};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FgmEncoding {
    #[default]
    Binary,
    Ascii,
}

fn parse_err(location: impl Into<String>, msg: impl Into<String>) -> FlowError {
    FlowError::Parse { location: location.into(), msg: msg.into() }
}

pub fn write_fgm<W: Write>(grid: &GridFlowMap, mut out: W, encoding: FgmEncoding) -> Result<(), FlowError> {
    let g = &grid.geometry;
    writeln!(out, "FGM 1")?;
    writeln!(out, "{} {} {} {} {} {}", g.origin[0], g.origin[1], g.dx, g.dy, g.nx, g.ny)?;
    writeln!(out, "{} {} {}", g.t0, g.dt, g.nt)?;
    let layer = g.layer_len();
    let (u, v) = (grid.u_values(), grid.v_values());
    match encoding {
        FgmEncoding::Binary => {
            writeln!(out, "binary")?;
            for it in 0..g.nt {
                let range = it * layer..(it + 1) * layer;
                for x in &u[range.clone()] {
                    out.write_all(&x.to_le_bytes())?;
                }
                for x in &v[range] {
                    out.write_all(&x.to_le_bytes())?;
                }
            }
        }
        FgmEncoding::Ascii => {
            writeln!(out, "ascii")?;
            for (a, b) in u.iter().zip(v) {
                writeln!(out, "{a} {b}")?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_fgm(grid: &GridFlowMap, path: impl AsRef<Path>, encoding: FgmEncoding) -> Result<(), FlowError> {
    let file = File::create(path)?;
    write_fgm(grid, BufWriter::new(file), encoding)
}

pub fn load_fgm(path: impl AsRef<Path>) -> Result<GridFlowMap, FlowError> {
    read_fgm(File::open(path)?)
}

fn next_line<'a>(bytes: &'a [u8], pos: &mut usize, line_no: usize) -> Result<&'a str, FlowError> {
    if *pos >= bytes.len() {
        return Err(parse_err(format!("line {line_no}"), "unexpected end of file in header"));
    }
    let rest = &bytes[*pos..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| parse_err(format!("line {line_no}"), "unterminated header line"))?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end])
        .map(|s| s.trim_end_matches('\r'))
        .map_err(|_| parse_err(format!("line {line_no}"), "header is not valid UTF-8"))
}

fn fields<T: std::str::FromStr>(line: &str, line_no: usize, n: usize) -> Result<Vec<T>, FlowError> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != n {
        return Err(parse_err(format!("line {line_no}"), format!("expected {n} fields, found {}", tokens.len())));
    }
    tokens
        .iter()
        .map(|t| t.parse::<T>().map_err(|_| parse_err(format!("line {line_no}"), format!("cannot parse `{t}`"))))
        .collect()
}

pub fn read_fgm<R: Read>(mut input: R) -> Result<GridFlowMap, FlowError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut pos = 0;

    let magic = next_line(&bytes, &mut pos, 1)?;
    if magic.trim() != "FGM 1" {
        return Err(parse_err("line 1", format!("bad magic `{magic}`")));
    }
    let line2 = next_line(&bytes, &mut pos, 2)?;
    let spatial: Vec<f64> = fields(line2, 2, 6)?;
    let counts: Vec<usize> = fields::<usize>(
        &line2.split_whitespace().skip(4).collect::<Vec<_>>().join(" "),
        2,
        2,
    )?;
    let line3 = next_line(&bytes, &mut pos, 3)?;
    let timing: Vec<f64> = fields(line3, 3, 3)?;
    let nt: usize = fields::<usize>(line3.split_whitespace().nth(2).unwrap_or(""), 3, 1)?[0];
    let geometry = GridGeometry {
        origin: [spatial[0], spatial[1]],
        dx: spatial[2],
        dy: spatial[3],
        nx: counts[0],
        ny: counts[1],
        t0: timing[0],
        dt: timing[1],
        nt,
    };
    geometry.validate()?;
    let encoding = match next_line(&bytes, &mut pos, 4)?.trim() {
        "binary" => FgmEncoding::Binary,
        "ascii" => FgmEncoding::Ascii,
        other => return Err(parse_err("line 4", format!("unknown encoding `{other}`"))),
    };

    let expected = geometry.len();
    let layer = geometry.layer_len();
    let payload = &bytes[pos..];
    let (u, v) = match encoding {
        FgmEncoding::Binary => {
            if payload.len() % 8 != 0 {
                let offset = pos + payload.len() - payload.len() % 8;
                return Err(parse_err(format!("byte offset {offset}"), "truncated 8-byte value"));
            }
            let found = payload.len() / 16;
            if payload.len() % 16 != 0 || found != expected {
                return Err(FlowError::DimensionMismatch { expected: 2 * expected, found: payload.len() / 8 });
            }
            let values: Vec<f64> = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            let mut u = Vec::with_capacity(expected);
            let mut v = Vec::with_capacity(expected);
            for block in values.chunks_exact(2 * layer) {
                u.extend_from_slice(&block[..layer]);
                v.extend_from_slice(&block[layer..]);
            }
            (u, v)
        }
        FgmEncoding::Ascii => {
            let text = std::str::from_utf8(payload).map_err(|_| parse_err("line 5", "payload is not valid UTF-8"))?;
            let mut u = Vec::with_capacity(expected);
            let mut v = Vec::with_capacity(expected);
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let pair: Vec<f64> = fields(line, i + 5, 2)?;
                u.push(pair[0]);
                v.push(pair[1]);
            }
            if u.len() != expected {
                return Err(FlowError::DimensionMismatch { expected, found: u.len() });
            }
            (u, v)
        }
    };
    GridFlowMap::new(geometry, u, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_grid() -> GridFlowMap {
        let g = GridGeometry { origin: [0.1, -3.0], dx: 0.3, dy: 1.0 / 3.0, nx: 3, ny: 2, t0: 7.5, dt: 3600.0, nt: 2 };
        let n = g.len();
        let u = (0..n).map(|i| (i as f64).exp() * 1e-3 - 0.1).collect();
        let v = (0..n).map(|i| -(i as f64 + 0.5).ln()).collect();
        GridFlowMap::new(g, u, v).unwrap()
    }

    #[test]
    fn round_trip_both_encodings() {
        let grid = sample_grid();
        for enc in [FgmEncoding::Binary, FgmEncoding::Ascii] {
            let mut buf = Vec::new();
            write_fgm(&grid, &mut buf, enc).unwrap();
            let back = read_fgm(buf.as_slice()).unwrap();
            assert_eq!(back, grid);
        }
    }

    #[test]
    fn binary_layout_is_u_plane_then_v_plane() {
        let grid = sample_grid();
        let mut buf = Vec::new();
        write_fgm(&grid, &mut buf, FgmEncoding::Binary).unwrap();
        let header_end = buf.windows(7).position(|w| w == b"binary\n").unwrap() + 7;
        let first_v = &buf[header_end + 6 * 8..header_end + 7 * 8];
        assert_eq!(f64::from_le_bytes(first_v.try_into().unwrap()), grid.v_values()[0]);
        let second_layer_u = &buf[header_end + 12 * 8..header_end + 13 * 8];
        assert_eq!(f64::from_le_bytes(second_layer_u.try_into().unwrap()), grid.u_values()[6]);
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let grid = sample_grid();
        let mut buf = Vec::new();
        write_fgm(&grid, &mut buf, FgmEncoding::Binary).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_fgm(buf.as_slice()), Err(FlowError::Parse { .. })));

        let mut text = Vec::new();
        write_fgm(&grid, &mut text, FgmEncoding::Ascii).unwrap();
        let cut = text.iter().rposition(|&b| b == b' ').unwrap() + 1;
        let err = read_fgm(&text[..cut]).unwrap_err();
        assert!(matches!(err, FlowError::Parse { .. }), "{err}");
        assert!(matches!(read_fgm(&text[..20]), Err(FlowError::Parse { .. })));
    }

    #[test]
    fn header_payload_mismatch() {
        let grid = sample_grid();
        let mut buf = Vec::new();
        write_fgm(&grid, &mut buf, FgmEncoding::Binary).unwrap();
        let text = String::from_utf8_lossy(&buf[..40]).to_string();
        let patched = text.replacen(" 3 2\n", " 4 2\n", 1);
        let mut forged = patched.into_bytes();
        forged.extend_from_slice(&buf[40..]);
        assert!(matches!(read_fgm(forged.as_slice()), Err(FlowError::DimensionMismatch { .. })));
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(read_fgm(&b"FGM 2\n"[..]), Err(FlowError::Parse { .. })));
    }
}
