//! Plain-text ROM persistence.
//!
//! ```text
//! airtwin-rom v1
//! rank <r>
//! n_velocity <n>
//! mu_range <lo> <hi>
//! energy <fraction>
//! eigenvalues <m>
//! <m values>
//! lifting
//! <n values>
//! mode <i>            (r times)
//! <n values>
//! a_l / a_r / c_ll / d_r / c_r   (row-major; c_r as r·r rows of r values, i then j)
//! end
//! ```
//!
//! Values are whitespace separated and written in shortest round-trip form.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::{RomBasis, RomOperators};

const MAGIC: &str = "airtwin-rom v1";

fn row(s: &mut String, v: &[f64]) {
    let mut first = true;
    for x in v {
        if !first {
            s.push(' ');
        }
        first = false;
        let _ = write!(s, "{x:?}");
    }
    s.push('\n');
}

pub fn rom_to_string(ops: &RomOperators) -> String {
    let b = &ops.basis;
    let r = ops.rank();
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}\nrank {r}\nn_velocity {}", b.lifting.len());
    let _ = writeln!(s, "mu_range {:?} {:?}\nenergy {:?}", ops.mu_range[0], ops.mu_range[1], b.energy);
    let _ = writeln!(s, "eigenvalues {}", b.eigenvalues.len());
    row(&mut s, &b.eigenvalues);
    s.push_str("lifting\n");
    row(&mut s, &b.lifting);
    for (i, m) in b.modes.iter().enumerate() {
        let _ = writeln!(s, "mode {i}");
        row(&mut s, m);
    }
    s.push_str("a_l\n");
    row(&mut s, &ops.a_l);
    s.push_str("a_r\n");
    ops.a_r.iter().for_each(|v| row(&mut s, v));
    s.push_str("c_ll\n");
    row(&mut s, &ops.c_ll);
    s.push_str("d_r\n");
    ops.d_r.iter().for_each(|v| row(&mut s, v));
    s.push_str("c_r\n");
    ops.c_r.iter().flatten().for_each(|v| row(&mut s, v));
    s.push_str("end\n");
    s
}

pub fn save_rom(ops: &RomOperators, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, rom_to_string(ops)).map_err(|e| Error::io(path, e))
}

pub fn load_rom(path: impl AsRef<Path>) -> Result<RomOperators> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_rom(&text, &path.display().to_string())
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    label: &'a str,
    line: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { path: self.label.to_string(), line: self.line, message: msg.into() }
    }

    fn next(&mut self) -> Result<&'a str> {
        match self.lines.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l.trim())
            }
            None => {
                self.line += 1;
                Err(self.err("unexpected end of file"))
            }
        }
    }

    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let l = self.next()?;
        let mut it = l.split_whitespace();
        if it.next() != Some(key) {
            return Err(self.err(format!("expected {key:?}, found {l:?}")));
        }
        Ok(it.collect())
    }

    fn scalar<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.expect(key)?;
        v.first().and_then(|s| s.parse().ok()).ok_or_else(|| self.err(format!("bad value for {key}")))
    }

    fn values(&mut self, n: usize) -> Result<Vec<f64>> {
        let l = self.next()?;
        let v: Vec<f64> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| self.err("non-numeric value"))?;
        if v.len() != n {
            return Err(self.err(format!("expected {n} values, found {}", v.len())));
        }
        Ok(v)
    }
}

pub fn read_rom(text: &str, label: &str) -> Result<RomOperators> {
    let mut rd = Reader { lines: text.lines().enumerate(), label, line: 0 };
    if rd.next()? != MAGIC {
        return Err(rd.err("missing airtwin-rom header"));
    }
    let r: usize = rd.scalar("rank")?;
    let n: usize = rd.scalar("n_velocity")?;
    let range = rd.expect("mu_range")?;
    let mu_range = match range.as_slice() {
        [a, b] => [a.parse().map_err(|_| rd.err("bad mu_range"))?, b.parse().map_err(|_| rd.err("bad mu_range"))?],
        _ => return Err(rd.err("mu_range needs two values")),
    };
    let energy: f64 = rd.scalar("energy")?;
    let m: usize = rd.scalar("eigenvalues")?;
    let eigenvalues = rd.values(m)?;
    rd.expect("lifting")?;
    let lifting = rd.values(n)?;
    let mut modes = Vec::with_capacity(r);
    for i in 0..r {
        let idx: usize = rd.scalar("mode")?;
        if idx != i {
            return Err(rd.err(format!("expected mode {i}")));
        }
        modes.push(rd.values(n)?);
    }
    rd.expect("a_l")?;
    let a_l = rd.values(r)?;
    rd.expect("a_r")?;
    let a_r = (0..r).map(|_| rd.values(r)).collect::<Result<_>>()?;
    rd.expect("c_ll")?;
    let c_ll = rd.values(r)?;
    rd.expect("d_r")?;
    let d_r = (0..r).map(|_| rd.values(r)).collect::<Result<_>>()?;
    rd.expect("c_r")?;
    let c_r = (0..r)
        .map(|_| (0..r).map(|_| rd.values(r)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    rd.expect("end")?;
    Ok(RomOperators { basis: RomBasis { modes, eigenvalues, lifting, energy }, mu_range, a_l, a_r, c_ll, d_r, c_r })
}
