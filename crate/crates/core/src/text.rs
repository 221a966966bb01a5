//! Canonical line-oriented program text.
//!
//! ```text
//! layout: scalars=16 vectors=16 matrices=16 indices=16 vec_dim=4 mat_dim=4
//! init:
//! s3 = 0.94767900000000003
//! v0 = [0, 1.0000000000000000, 0, 0]
//! m0 = [[0, 0], [0, 0]]
//! def get_action:
//!   s2 = OP2(s3, s0)
//!   v3 = OP58(consts=[0.5]; idx=[2])
//!   s8, v3, i2 = CALL_CADF(s0, s1, s2, s3, v0, v1, i0, i1; idx=[0])
//! def cadf0:
//!   s5 = OP2(s0, s1)
//! ```
//!
//! Floats are written with 17 significant digits so parsing restores the
//! exact bits. `#` starts a comment. Init slots omitted from the text are
//! zero.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ops::{Bank, Op};
use crate::program::{Address, Instruction, MemoryLayout, Program, MAX_CADFS};

/// Formats `x` with 17 significant digits, positional where reasonable.
pub fn format_f64(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.16e}");
    let exp: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .unwrap_or(0);
    if (-5..=16).contains(&exp) {
        format!("{:.*}", (16 - exp) as usize, x)
    } else {
        sci
    }
}

fn write_list(out: &mut String, values: &[f64]) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&format_f64(*v));
    }
    out.push(']');
}

fn write_instruction(out: &mut String, instr: &Instruction) {
    out.push_str("  ");
    if !instr.outputs.is_empty() {
        let outs: Vec<String> = instr.outputs.iter().map(ToString::to_string).collect();
        let _ = write!(out, "{} = ", outs.join(", "));
    }
    let mut segments = Vec::new();
    if !instr.inputs.is_empty() {
        let ins: Vec<String> = instr.inputs.iter().map(ToString::to_string).collect();
        segments.push(ins.join(", "));
    }
    if !instr.consts.is_empty() {
        let mut s = String::from("consts=");
        write_list(&mut s, &instr.consts);
        segments.push(s);
    }
    if !instr.indices.is_empty() {
        let idx: Vec<String> = instr.indices.iter().map(ToString::to_string).collect();
        segments.push(format!("idx=[{}]", idx.join(", ")));
    }
    let _ = writeln!(out, "{}({})", instr.op, segments.join("; "));
}

/// Renders `program` in canonical form.
pub fn serialize(program: &Program) -> String {
    let l = &program.layout;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "layout: scalars={} vectors={} matrices={} indices={} vec_dim={} mat_dim={}",
        l.n_scalar, l.n_vector, l.n_matrix, l.n_index, l.vec_dim, l.mat_dim
    );
    out.push_str("init:\n");
    for (k, v) in program.init.scalars.iter().enumerate() {
        let _ = writeln!(out, "s{k} = {}", format_f64(*v));
    }
    for (k, v) in program.init.vectors.chunks(l.vec_dim).enumerate() {
        let _ = write!(out, "v{k} = ");
        write_list(&mut out, v);
        out.push('\n');
    }
    let mat_len = l.mat_dim * l.mat_dim;
    for (k, m) in program.init.matrices.chunks(mat_len).enumerate() {
        let _ = write!(out, "m{k} = [");
        for (r, row) in m.chunks(l.mat_dim).enumerate() {
            if r > 0 {
                out.push_str(", ");
            }
            write_list(&mut out, row);
        }
        out.push_str("]\n");
    }
    out.push_str("def get_action:\n");
    for instr in &program.get_action {
        write_instruction(&mut out, instr);
    }
    for (k, body) in program.cadfs.iter().enumerate() {
        let _ = writeln!(out, "def cadf{k}:");
        for instr in body {
            write_instruction(&mut out, instr);
        }
    }
    out
}

enum Section {
    Preamble,
    Init,
    Function(Option<usize>),
}

/// Parses canonical program text. The result is not validated beyond what
/// the grammar requires; call [`Program::validate`] for semantic checks.
pub fn deserialize(text: &str) -> Result<Program> {
    let mut layout: Option<MemoryLayout> = None;
    let mut program: Option<Program> = None;
    let mut section = Section::Preamble;
    let mut seen_get_action = false;

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("layout:") {
            if layout.is_some() {
                return Err(Error::parse(line_no, "duplicate layout"));
            }
            let l = parse_layout(rest, line_no)?;
            l.check().map_err(|e| Error::parse(line_no, e.to_string()))?;
            layout = Some(l);
            program = Some(Program::empty(l));
            continue;
        }
        let prog = program
            .as_mut()
            .ok_or_else(|| Error::parse(line_no, "expected `layout:` first"))?;
        if line == "init:" {
            section = Section::Init;
            continue;
        }
        if let Some(name) = line.strip_prefix("def ").and_then(|s| s.strip_suffix(':')) {
            let name = name.trim();
            if name == "get_action" {
                if seen_get_action {
                    return Err(Error::parse(line_no, "duplicate get_action"));
                }
                seen_get_action = true;
                section = Section::Function(None);
            } else if let Some(k) = name.strip_prefix("cadf").and_then(|k| k.parse::<usize>().ok()) {
                if k != prog.cadfs.len() || k >= MAX_CADFS {
                    return Err(Error::parse(
                        line_no,
                        format!("expected cadf{} next, found cadf{k}", prog.cadfs.len()),
                    ));
                }
                prog.cadfs.push(Vec::new());
                section = Section::Function(Some(k));
            } else {
                return Err(Error::parse(line_no, format!("unknown function `{name}`")));
            }
            continue;
        }
        match section {
            Section::Preamble => {
                return Err(Error::parse(line_no, format!("unexpected `{line}`")));
            }
            Section::Init => parse_init_line(prog, line, line_no)?,
            Section::Function(which) => {
                let instr = parse_instruction(line, line_no)?;
                match which {
                    None => prog.get_action.push(instr),
                    Some(k) => prog.cadfs[k].push(instr),
                }
            }
        }
    }
    program.ok_or_else(|| Error::parse(text.lines().count().max(1), "missing `layout:`"))
}

fn parse_layout(rest: &str, line_no: usize) -> Result<MemoryLayout> {
    let mut l = MemoryLayout {
        n_scalar: 0,
        n_vector: 0,
        n_matrix: 0,
        n_index: 0,
        vec_dim: 0,
        mat_dim: 0,
    };
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::parse(line_no, format!("bad layout field `{field}`")))?;
        let value: usize = value
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad layout value `{value}`")))?;
        match key {
            "scalars" => l.n_scalar = value,
            "vectors" => l.n_vector = value,
            "matrices" => l.n_matrix = value,
            "indices" => l.n_index = value,
            "vec_dim" => l.vec_dim = value,
            "mat_dim" => l.mat_dim = value,
            _ => return Err(Error::parse(line_no, format!("unknown layout key `{key}`"))),
        }
    }
    Ok(l)
}

fn parse_f64(s: &str, line_no: usize) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::parse(line_no, format!("bad number `{}`", s.trim())))?;
    if !v.is_finite() {
        return Err(Error::parse(line_no, format!("non-finite number `{}`", s.trim())));
    }
    Ok(v)
}

fn parse_list(s: &str, line_no: usize) -> Result<Vec<f64>> {
    let inner = s
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| Error::parse(line_no, format!("expected `[...]`, found `{}`", s.trim())))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(|v| parse_f64(v, line_no)).collect()
}

fn parse_init_line(prog: &mut Program, line: &str, line_no: usize) -> Result<()> {
    let (lhs, rhs) = line
        .split_once('=')
        .ok_or_else(|| Error::parse(line_no, "expected `<slot> = <value>`"))?;
    let addr: Address = lhs.trim().parse().map_err(|e: String| Error::parse(line_no, e))?;
    let l = prog.layout;
    if addr.slot >= l.count(addr.bank) {
        return Err(Error::parse(line_no, format!("{addr} is outside the layout")));
    }
    match addr.bank {
        Bank::Scalar => prog.init.scalars[addr.slot] = parse_f64(rhs, line_no)?,
        Bank::Vector => {
            let v = parse_list(rhs, line_no)?;
            if v.len() != l.vec_dim {
                return Err(Error::parse(line_no, format!("{addr} needs {} values", l.vec_dim)));
            }
            prog.init.vectors[addr.slot * l.vec_dim..(addr.slot + 1) * l.vec_dim].copy_from_slice(&v);
        }
        Bank::Matrix => {
            let body = rhs
                .trim()
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| Error::parse(line_no, "expected `[[...], ...]`"))?;
            let mut values = Vec::with_capacity(l.mat_dim * l.mat_dim);
            for row in body.split(']') {
                let row = row.trim().trim_start_matches(',').trim();
                if row.is_empty() {
                    continue;
                }
                let r = parse_list(&format!("{row}]"), line_no)?;
                if r.len() != l.mat_dim {
                    return Err(Error::parse(line_no, format!("{addr} rows need {} values", l.mat_dim)));
                }
                values.extend(r);
            }
            if values.len() != l.mat_dim * l.mat_dim {
                return Err(Error::parse(line_no, format!("{addr} needs {} rows", l.mat_dim)));
            }
            let n = l.mat_dim * l.mat_dim;
            prog.init.matrices[addr.slot * n..(addr.slot + 1) * n].copy_from_slice(&values);
        }
        Bank::Index => return Err(Error::parse(line_no, "index memory has no initial values")),
    }
    Ok(())
}

fn parse_addresses(s: &str, line_no: usize) -> Result<Vec<Address>> {
    s.split(',')
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(|a| a.parse().map_err(|e: String| Error::parse(line_no, e)))
        .collect()
}

fn parse_instruction(line: &str, line_no: usize) -> Result<Instruction> {
    let (outputs, call) = match line.split_once('=') {
        // `consts=[...]` inside the parentheses also contains `=`
        Some((lhs, rhs)) if !lhs.contains('(') => (parse_addresses(lhs, line_no)?, rhs.trim()),
        _ => (Vec::new(), line),
    };
    let open = call
        .find('(')
        .ok_or_else(|| Error::parse(line_no, "expected `OPnn(...)`"))?;
    let args = call[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| Error::parse(line_no, "missing `)`"))?;
    let op: Op = call[..open].trim().parse().map_err(|e: String| Error::parse(line_no, e))?;
    let mut inputs = Vec::new();
    let mut consts = Vec::new();
    let mut indices = Vec::new();
    for seg in args.split(';').map(str::trim) {
        if let Some(list) = seg.strip_prefix("consts=") {
            consts = parse_list(list, line_no)?;
        } else if let Some(list) = seg.strip_prefix("idx=") {
            let inner = list
                .trim()
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| Error::parse(line_no, "expected `idx=[...]`"))?;
            indices = inner
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<usize>()
                        .map_err(|_| Error::parse(line_no, format!("bad index `{s}`")))
                })
                .collect::<Result<_>>()?;
        } else {
            inputs.extend(parse_addresses(seg, line_no)?);
        }
    }
    Ok(Instruction::new(op, inputs, outputs, consts, indices))
}
