//! Grid CSV: the on-disk format shared by every subcommand.
//!
//! Layout:
//!
//! ```text
//! # d=<d> xi=<xi> lo=<k1,...,kd> hi=<k1,...,kd>
//! v,v,...,v        <- one line per row, last axis fastest
//! ...
//!                  <- blank line between consecutive axis-1 slices (3D)
//! ```
//!
//! Values are printed with C's `%.17g` (17 significant digits, trailing
//! zeros stripped), which round-trips `f64` exactly. Kernel tables use the
//! same body with a `# kernel d=<d> xi=<xi> radius=<r>` first line.

use crate::error::{GdsError, Result};
use crate::green::GreenKernel;
use crate::lattice::{LatticeField, LatticeWindow, MassConfig};
use std::io::{BufRead, BufReader, Read, Write};

/// Format a finite `f64` the way C's `printf("%.17g", v)` does.
pub fn format_g17(v: f64) -> String {
    format_g(v, 17)
}

fn format_g(v: f64, precision: usize) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let p = precision.max(1);
    // %e with p-1 fractional digits gives the decimal exponent
    let sci = format!("{:.*e}", p - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= p as i32 {
        // scientific notation, trailing zeros stripped, C-style exponent
        let mantissa = strip_trailing_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        // fixed notation with p-1-exp fractional digits
        let frac = (p as i32 - 1 - exp).max(0) as usize;
        let fixed = format!("{:.*}", frac, v);
        if fixed.contains('.') {
            strip_trailing_zeros(&fixed).to_string()
        } else {
            fixed
        }
    }
}

fn strip_trailing_zeros(s: &str) -> &str {
    if !s.contains('.') {
        return s;
    }
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').unwrap_or(s)
}

fn join_coords(v: &[i64]) -> String {
    v.iter()
        .map(|k| k.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn write_body(out: &mut impl Write, window: &LatticeWindow, values: &[f64]) -> Result<()> {
    let d = window.dimension();
    let ext: Vec<usize> = (0..d)
        .map(|a| (window.hi()[a] - window.lo()[a] + 1) as usize)
        .collect();
    let row_len = ext[d - 1];
    let rows = values.len() / row_len;
    let rows_per_slice = if d == 3 { ext[1] } else { rows };
    for row in 0..rows {
        if d == 3 && row > 0 && row % rows_per_slice == 0 {
            writeln!(out)?;
        }
        let line = values[row * row_len..(row + 1) * row_len]
            .iter()
            .map(|&v| format_g17(v))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn write_header(out: &mut impl Write, window: &LatticeWindow) -> Result<()> {
    let d = window.dimension();
    writeln!(
        out,
        "# d={} xi={} lo={} hi={}",
        d,
        format_g17(window.xi()),
        join_coords(&window.lo()[..d]),
        join_coords(&window.hi()[..d]),
    )?;
    Ok(())
}

pub fn write_mass_config(out: &mut impl Write, config: &MassConfig) -> Result<()> {
    write_header(out, config.window())?;
    write_body(out, config.window(), config.values())
}

pub fn write_field(out: &mut impl Write, field: &LatticeField) -> Result<()> {
    write_header(out, field.window())?;
    write_body(out, field.window(), field.values())
}

pub fn write_kernel(out: &mut impl Write, kernel: &GreenKernel) -> Result<()> {
    let d = kernel.dimension();
    let r = kernel.radius();
    writeln!(
        out,
        "# kernel d={} xi={} radius={}",
        d,
        format_g17(kernel.xi()),
        r
    )?;
    let window = LatticeWindow::new(d, kernel.xi(), [-r, -r, -r], [r, r, r])?;
    write_body(out, &window, kernel.raw_table())
}

struct ParsedHeader {
    kernel: bool,
    d: usize,
    xi: f64,
    lo: [i64; 3],
    hi: [i64; 3],
}

fn parse_header(line: &str) -> Result<ParsedHeader> {
    let line = line.trim();
    let rest = line
        .strip_prefix('#')
        .ok_or_else(|| GdsError::Parse(format!("missing '#' header: {line:?}")))?
        .trim();
    let (kernel, rest) = match rest.strip_prefix("kernel") {
        Some(r) => (true, r.trim()),
        None => (false, rest),
    };
    let mut d = None;
    let mut xi = None;
    let mut lo = None;
    let mut hi = None;
    let mut radius = None;
    for tok in rest.split_whitespace() {
        let (key, val) = tok
            .split_once('=')
            .ok_or_else(|| GdsError::Parse(format!("bad header token {tok:?}")))?;
        match key {
            "d" => d = Some(val.parse::<usize>().map_err(|e| GdsError::Parse(e.to_string()))?),
            "xi" => xi = Some(val.parse::<f64>().map_err(|e| GdsError::Parse(e.to_string()))?),
            "radius" => {
                radius = Some(val.parse::<i64>().map_err(|e| GdsError::Parse(e.to_string()))?)
            }
            "lo" | "hi" => {
                let mut arr = [0i64; 3];
                for (a, part) in val.split(',').enumerate() {
                    if a >= 3 {
                        return Err(GdsError::Parse(format!("too many coordinates in {tok:?}")));
                    }
                    arr[a] = part.parse().map_err(|e: std::num::ParseIntError| {
                        GdsError::Parse(e.to_string())
                    })?;
                }
                if key == "lo" {
                    lo = Some(arr);
                } else {
                    hi = Some(arr);
                }
            }
            _ => return Err(GdsError::Parse(format!("unknown header key {key:?}"))),
        }
    }
    let d = d.ok_or_else(|| GdsError::Parse("header missing d".into()))?;
    let xi = xi.ok_or_else(|| GdsError::Parse("header missing xi".into()))?;
    let (lo, hi) = if kernel {
        let r = radius.ok_or_else(|| GdsError::Parse("kernel header missing radius".into()))?;
        ([-r, -r, -r], [r, r, r])
    } else {
        (
            lo.ok_or_else(|| GdsError::Parse("header missing lo".into()))?,
            hi.ok_or_else(|| GdsError::Parse("header missing hi".into()))?,
        )
    };
    Ok(ParsedHeader { kernel, d, xi, lo, hi })
}

fn read_grid(input: &mut impl Read) -> Result<(ParsedHeader, LatticeWindow, Vec<f64>)> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines();
    let header = parse_header(
        &lines
            .next()
            .ok_or_else(|| GdsError::Parse("empty grid file".into()))??,
    )?;
    let window = LatticeWindow::new(header.d, header.xi, header.lo, header.hi)?;
    let mut values = Vec::with_capacity(window.len());
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        for tok in line.split(',') {
            values.push(
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| GdsError::Parse(format!("bad value {tok:?}: {e}")))?,
            );
        }
    }
    if values.len() != window.len() {
        return Err(GdsError::Parse(format!(
            "expected {} values, found {}",
            window.len(),
            values.len()
        )));
    }
    Ok((header, window, values))
}

pub fn read_mass_config(input: &mut impl Read) -> Result<MassConfig> {
    let (header, window, values) = read_grid(input)?;
    if header.kernel {
        return Err(GdsError::Parse("expected a grid, found a kernel table".into()));
    }
    MassConfig::from_values(window, values)
}

pub fn read_field(input: &mut impl Read) -> Result<LatticeField> {
    let (header, window, values) = read_grid(input)?;
    if header.kernel {
        return Err(GdsError::Parse("expected a grid, found a kernel table".into()));
    }
    LatticeField::from_values(window, values)
}

pub fn read_kernel(input: &mut impl Read) -> Result<GreenKernel> {
    let (header, window, values) = read_grid(input)?;
    if !header.kernel {
        return Err(GdsError::Parse("expected a kernel table header".into()));
    }
    let radius = window.hi()[0];
    GreenKernel::from_raw(header.d, header.xi, radius, values)
}
