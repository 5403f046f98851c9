//! CSV emission and checkpoint files.
//!
//! Numbers are written with 17 significant digits so that every value reads
//! back bit-for-bit; lines end in `\n`.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::ergodics::RadialPdf;
use crate::integrator::Trajectory;
use crate::state::{HistoryBuffer, Tail, WalkerState};

/// `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a header line and one line per row.
pub fn write_csv<W: Write, R: AsRef<[f64]>>(
    w: &mut W,
    header: &[String],
    rows: impl IntoIterator<Item = R>,
) -> io::Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.as_ref().iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// `prefix1, ..., prefixd`.
pub fn indexed(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}{i}")).collect()
}

pub fn trajectory_header(d: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(indexed("x", d));
    h.extend(indexed("v", d));
    h
}

fn state_row(s: &WalkerState) -> Vec<f64> {
    let mut row = Vec::with_capacity(1 + 2 * s.dim());
    row.push(s.t);
    row.extend(&s.x);
    row.extend(&s.v);
    row
}

/// `t,x1..xd,v1..vd`, one row per recorded state.
pub fn write_trajectory_csv<W: Write>(w: &mut W, traj: &Trajectory) -> io::Result<()> {
    let d = traj.final_state.dim();
    write_csv(w, &trajectory_header(d), traj.states.iter().map(state_row))
}

/// `r,p` with `r` the bin centre.
pub fn write_histogram_csv<W: Write>(w: &mut W, pdf: &RadialPdf) -> io::Result<()> {
    let rows = pdf.centers().into_iter().zip(&pdf.densities).map(|(r, p)| [r, *p]);
    write_csv(w, &["r".to_string(), "p".to_string()], rows)
}

/// Current state as a one-row trajectory, followed by the history buffer.
pub fn write_checkpoint<W: Write>(w: &mut W, state: &WalkerState, buffer: &HistoryBuffer) -> io::Result<()> {
    write_csv(w, &trajectory_header(state.dim()), [state_row(state)])?;
    writeln!(
        w,
        "# history dt={} n_mem={} len={} max_evicted_norm={}",
        fmt_f64(buffer.dt()),
        buffer.n_mem(),
        buffer.len(),
        fmt_f64(buffer.max_evicted_norm())
    )?;
    match buffer.tail() {
        Tail::Constant(c) => {
            let c: Vec<String> = c.iter().map(|v| fmt_f64(*v)).collect();
            writeln!(w, "# tail constant {}", c.join(","))?;
        }
        Tail::Truncated => writeln!(w, "# tail truncated")?,
    }
    for s in buffer.samples() {
        let line: Vec<String> = s.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {lineno}: '{f}' is not a number")))
        })
        .collect()
}

fn field<'a>(line: &'a str, key: &str, lineno: usize) -> Result<&'a str> {
    line.split_whitespace()
        .find_map(|w| w.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| Error::Parse(format!("line {lineno}: missing '{key}'")))
}

fn num<T: std::str::FromStr>(s: &str, key: &str, lineno: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("line {lineno}: bad value '{s}' for {key}")))
}

/// Reads a file produced by [`write_checkpoint`].
pub fn read_checkpoint(text: &str) -> Result<(WalkerState, HistoryBuffer)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty checkpoint".into()))?;
    let cols = header.split(',').count();
    if cols < 3 || cols % 2 == 0 || !header.starts_with("t,") {
        return Err(Error::Parse(format!("line 1: unexpected header '{header}'")));
    }
    let d = (cols - 1) / 2;
    let (n, row) = lines.next().ok_or_else(|| Error::Parse("missing state row".into()))?;
    let row = parse_row(row, n)?;
    if row.len() != cols {
        return Err(Error::Parse(format!("line {n}: expected {cols} fields, found {}", row.len())));
    }
    let state = WalkerState::new(row[1..=d].to_vec(), row[d + 1..].to_vec(), row[0])?;

    let (n, meta) = lines.next().ok_or_else(|| Error::Parse("missing history section".into()))?;
    if !meta.starts_with("# history") {
        return Err(Error::Parse(format!("line {n}: expected '# history'")));
    }
    let dt: f64 = num(field(meta, "dt", n)?, "dt", n)?;
    let n_mem: usize = num(field(meta, "n_mem", n)?, "n_mem", n)?;
    let len: usize = num(field(meta, "len", n)?, "len", n)?;
    let evicted: f64 = num(field(meta, "max_evicted_norm", n)?, "max_evicted_norm", n)?;

    let (n, tail_line) = lines.next().ok_or_else(|| Error::Parse("missing tail line".into()))?;
    let tail = if let Some(rest) = tail_line.strip_prefix("# tail constant ") {
        Tail::Constant(parse_row(rest, n)?)
    } else if tail_line.trim() == "# tail truncated" {
        Tail::Truncated
    } else {
        return Err(Error::Parse(format!("line {n}: unrecognized tail '{tail_line}'")));
    };

    let mut samples = Vec::with_capacity(len);
    for (n, l) in lines {
        if l.is_empty() {
            continue;
        }
        let s = parse_row(l, n)?;
        if s.len() != d {
            return Err(Error::Parse(format!("line {n}: expected {d} fields, found {}", s.len())));
        }
        samples.push(s);
    }
    if samples.len() != len {
        return Err(Error::Parse(format!("history lists {} samples, header says {len}", samples.len())));
    }
    let mut buffer = HistoryBuffer::from_samples(&samples, dt, n_mem, tail)?;
    buffer.set_max_evicted_norm(evicted);
    Ok((state, buffer))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.283185307179586, 1e300] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(fmt_f64(1.5), "1.5000000000000000e0");
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut b = HistoryBuffer::constant_past(&[2.0, 0.0], 0.25, 4).unwrap();
        for k in 0..7 {
            b.push_sample(&[k as f64 * 0.1, 1.0 / (k as f64 + 3.0)]);
        }
        assert!(b.is_truncated());
        let s = WalkerState::new(vec![0.6, 0.2], vec![-1.0 / 7.0, 3.0], 1.75).unwrap();
        let mut out = Vec::new();
        write_checkpoint(&mut out, &s, &b).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(!text.contains('\r'));
        let (s2, b2) = read_checkpoint(&text).unwrap();
        assert_eq!(s2, s);
        assert_eq!(b2, b);

        let c = HistoryBuffer::constant_past(&[1.0, -1.0], 0.5, 10).unwrap();
        let mut out = Vec::new();
        write_checkpoint(&mut out, &s, &c).unwrap();
        let (_, c2) = read_checkpoint(std::str::from_utf8(&out).unwrap()).unwrap();
        assert_eq!(c2, c);
    }

    #[test]
    fn malformed_checkpoints() {
        assert!(read_checkpoint("").is_err());
        assert!(read_checkpoint("t,x1,v1\n0,1,2\n# nope\n").is_err());
        let bad = "t,x1,v1\n0,1,2\n# history dt=0.1 n_mem=4 len=1 max_evicted_norm=0\n# tail truncated\nabc\n";
        match read_checkpoint(bad) {
            Err(Error::Parse(m)) => assert!(m.contains("line 5")),
            other => panic!("{other:?}"),
        }
    }
}
