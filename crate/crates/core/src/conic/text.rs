//! Sparse text dump of a [`ConicProgram`].
//!
//! One record per line, whitespace separated. Blank lines and lines starting
//! with `#` are ignored. An affine expression is written as its constant
//! followed by `coord:coef` triplet pairs, e.g. `0.5 3:1 7:-2`.
//!
//! ```text
//! coords <n>
//! scalar <name> <coord>
//! hermitian <name> <offset> <dim>
//! objective min|max <expr>
//! affine <label> ge|le|eq <expr>
//! exp <label>
//!   x <expr>
//!   y <expr>
//!   z <expr>
//! psd <label> <dim>
//!   re <i> <j> <expr>       (i <= j)
//!   im <i> <j> <expr>       (i < j)
//! end
//! ```
//!
//! Floats are printed in shortest round-trip form, so parsing a dump
//! reproduces the program exactly.

use std::fmt::Write as _;

use super::{ConicProgram, HermExpr, HermVar, LinExpr, ObjectiveSense, ScalarVar, Sense};
use crate::error::{Error, Result};

fn label(s: &str) -> String {
    if s.is_empty() {
        return "_".into();
    }
    s.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect()
}

fn expr(e: &LinExpr) -> String {
    let mut out = format!("{:?}", e.constant);
    for (c, v) in &e.terms {
        let _ = write!(out, " {c}:{v:?}");
    }
    out
}

pub(super) fn write_program(p: &ConicProgram) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "coords {}", p.n_coords);
    for (name, v) in &p.scalars {
        let _ = writeln!(s, "scalar {} {}", label(name), v.coord);
    }
    for (name, v) in &p.hermitians {
        let _ = writeln!(s, "hermitian {} {} {}", label(name), v.offset, v.dim);
    }
    let sense = match p.objective.sense {
        ObjectiveSense::Minimize => "min",
        ObjectiveSense::Maximize => "max",
    };
    let _ = writeln!(s, "objective {sense} {}", expr(&p.objective.expr));
    for c in &p.affine {
        let sense = match c.sense {
            Sense::Ge => "ge",
            Sense::Le => "le",
            Sense::Eq => "eq",
        };
        let _ = writeln!(s, "affine {} {sense} {}", label(&c.label), expr(&c.expr));
    }
    for c in &p.exp_cones {
        let _ = writeln!(s, "exp {}", label(&c.label));
        let _ = writeln!(s, "  x {}", expr(&c.x));
        let _ = writeln!(s, "  y {}", expr(&c.y));
        let _ = writeln!(s, "  z {}", expr(&c.z));
    }
    for c in &p.psd {
        let n = c.expr.dim;
        let _ = writeln!(s, "psd {} {n}", label(&c.label));
        for i in 0..n {
            for j in i..n {
                let _ = writeln!(s, "  re {i} {j} {}", expr(c.expr.re(i, j)));
                if i < j {
                    let _ = writeln!(s, "  im {i} {j} {}", expr(&c.expr.im(i, j).unwrap_or_default()));
                }
            }
        }
    }
    s.push_str("end\n");
    s
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn next_record(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (i, line) in self.inner.by_ref() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Some((i + 1, t.split_whitespace().collect()));
        }
        None
    }

    fn expect(&mut self, key: &str, last_line: usize) -> Result<(usize, Vec<&'a str>)> {
        match self.next_record() {
            Some((line, toks)) if toks[0] == key => Ok((line, toks)),
            Some((line, toks)) => Err(perr(line, format!("expected `{key}`, found `{}`", toks[0]))),
            None => Err(perr(last_line, format!("unexpected end of input, expected `{key}`"))),
        }
    }
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(line: usize, tok: Option<&&str>, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| perr(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| perr(line, format!("bad {what} `{tok}`")))
}

fn parse_expr(line: usize, toks: &[&str]) -> Result<LinExpr> {
    let (first, rest) = toks.split_first().ok_or_else(|| perr(line, "missing expression"))?;
    let mut e = LinExpr::constant(num(line, Some(first), "constant")?);
    for t in rest {
        let (c, v) = t.split_once(':').ok_or_else(|| perr(line, format!("bad term `{t}`")))?;
        let c: usize = c.parse().map_err(|_| perr(line, format!("bad coordinate `{c}`")))?;
        let v: f64 = v.parse().map_err(|_| perr(line, format!("bad coefficient `{v}`")))?;
        if e.terms.insert(c, v).is_some() {
            return Err(perr(line, format!("coordinate {c} repeated")));
        }
    }
    Ok(e)
}

/// Parses the output of [`ConicProgram::to_text`].
pub fn parse_program(text: &str) -> Result<ConicProgram> {
    let mut lines = Lines {
        inner: text.lines().enumerate().peekable(),
    };
    let (line, toks) = lines.expect("coords", 0)?;
    let mut p = ConicProgram::new();
    p.n_coords = num(line, toks.get(1), "coordinate count")?;
    let mut last = line;
    let mut seen_end = false;
    while let Some((line, toks)) = lines.next_record() {
        last = line;
        let id = p.scalars.len() + p.hermitians.len();
        match toks[0] {
            "scalar" => {
                let coord = num(line, toks.get(2), "coordinate")?;
                let name = toks.get(1).ok_or_else(|| perr(line, "missing name"))?.to_string();
                p.scalars.push((name, ScalarVar { id, coord }));
            }
            "hermitian" => {
                let name = toks.get(1).ok_or_else(|| perr(line, "missing name"))?.to_string();
                let offset = num(line, toks.get(2), "offset")?;
                let dim = num(line, toks.get(3), "dimension")?;
                p.hermitians.push((name, HermVar { id, offset, dim }));
            }
            "objective" => {
                let sense = match toks.get(1) {
                    Some(&"min") => ObjectiveSense::Minimize,
                    Some(&"max") => ObjectiveSense::Maximize,
                    other => return Err(perr(line, format!("bad objective sense {other:?}"))),
                };
                p.set_objective(sense, parse_expr(line, &toks[2..])?);
            }
            "affine" => {
                if toks.len() < 4 {
                    return Err(perr(line, "truncated affine record"));
                }
                let sense = match toks[2] {
                    "ge" => Sense::Ge,
                    "le" => Sense::Le,
                    "eq" => Sense::Eq,
                    s => return Err(perr(line, format!("bad sense `{s}`"))),
                };
                p.constrain(toks[1], parse_expr(line, &toks[3..])?, sense);
            }
            "exp" => {
                let lbl = toks.get(1).ok_or_else(|| perr(line, "missing label"))?.to_string();
                let mut parts = Vec::with_capacity(3);
                for key in ["x", "y", "z"] {
                    let (l, t) = lines.expect(key, last)?;
                    last = l;
                    parts.push(parse_expr(l, &t[1..])?);
                }
                let z = parts.pop().unwrap_or_default();
                let y = parts.pop().unwrap_or_default();
                let x = parts.pop().unwrap_or_default();
                p.exp_cone(lbl, x, y, z);
            }
            "psd" => {
                let lbl = toks.get(1).ok_or_else(|| perr(line, "missing label"))?.to_string();
                let n: usize = num(line, toks.get(2), "dimension")?;
                let mut h = HermExpr::zeros(n);
                for i in 0..n {
                    for j in i..n {
                        for key in if i < j { &["re", "im"][..] } else { &["re"][..] } {
                            let (l, t) = lines.expect(key, last)?;
                            last = l;
                            let (ti, tj): (usize, usize) = (num(l, t.get(1), "row")?, num(l, t.get(2), "column")?);
                            if (ti, tj) != (i, j) {
                                return Err(perr(l, format!("expected entry ({i}, {j}), found ({ti}, {tj})")));
                            }
                            let e = parse_expr(l, &t[3..])?;
                            let slot = h.slot(i, j);
                            if *key == "re" {
                                h.entries[slot].0 = e;
                            } else {
                                h.entries[slot].1 = e;
                            }
                        }
                    }
                }
                p.psd(lbl, h);
            }
            "end" => {
                seen_end = true;
                break;
            }
            other => return Err(perr(line, format!("unknown record `{other}`"))),
        }
    }
    if !seen_end {
        return Err(perr(last, "missing `end`"));
    }
    p.validate()?;
    Ok(p)
}
