use std::collections::HashMap;

use super::{
    BasicBlock, BlockId, Instruction, IrError, Program, Region, RegionId, Terminator, VarId,
    Variable,
};
use crate::config::FileConfig;

enum RawTerm {
    Goto(String),
    Branch(Vec<String>, String, String),
    Exit,
}

enum RawInst {
    Ref(String),
    RefLine(String, u32),
    RefAny(String),
    Secret(String),
    Nop,
}

struct RawBlock {
    name: String,
    line: usize,
    body: Vec<(usize, RawInst)>,
    term: Option<(usize, RawTerm)>,
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Block names may carry unroll suffixes: `body@2`.
fn is_block_name(s: &str) -> bool {
    let mut parts = s.split('@');
    let head = parts.next().unwrap_or("");
    is_ident(head) && parts.all(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()))
}

fn syntax(line: usize, msg: impl Into<String>) -> IrError {
    IrError::Syntax {
        line,
        msg: msg.into(),
    }
}

fn parse_stmt(line: usize, stmt: &str) -> Result<Result<RawInst, RawTerm>, IrError> {
    let (kw, rest) = match stmt.split_once(char::is_whitespace) {
        Some((k, r)) => (k, r.trim()),
        None => (stmt, ""),
    };
    match kw {
        "nop" | "exit" if !rest.is_empty() => Err(syntax(line, format!("`{kw}` takes no operand"))),
        "nop" => Ok(Ok(RawInst::Nop)),
        "exit" => Ok(Err(RawTerm::Exit)),
        "ref" => {
            if let Some(open) = rest.find('[') {
                let name = &rest[..open];
                let idx = rest[open + 1..]
                    .strip_suffix(']')
                    .ok_or_else(|| syntax(line, format!("unterminated index in `{rest}`")))?;
                if !is_ident(name) {
                    return Err(syntax(line, format!("bad region name `{name}`")));
                }
                if idx.trim() == "*" {
                    return Ok(Ok(RawInst::RefAny(name.to_string())));
                }
                let i = idx
                    .trim()
                    .parse::<u32>()
                    .map_err(|_| syntax(line, format!("bad index `{idx}`")))?;
                return Ok(Ok(RawInst::RefLine(name.to_string(), i)));
            }
            if let Some((name, idx)) = rest.split_once('.') {
                if !is_ident(name) {
                    return Err(syntax(line, format!("bad region name `{name}`")));
                }
                let i = idx
                    .parse::<u32>()
                    .map_err(|_| syntax(line, format!("bad index `{idx}`")))?;
                return Ok(Ok(RawInst::RefLine(name.to_string(), i)));
            }
            if !is_ident(rest) {
                return Err(syntax(line, format!("bad operand `{rest}` for `ref`")));
            }
            Ok(Ok(RawInst::Ref(rest.to_string())))
        }
        "secret_ref" => {
            if !is_ident(rest) {
                return Err(syntax(line, format!("bad region name `{rest}`")));
            }
            Ok(Ok(RawInst::Secret(rest.to_string())))
        }
        "goto" => {
            if !is_block_name(rest) {
                return Err(syntax(line, format!("bad block name `{rest}`")));
            }
            Ok(Err(RawTerm::Goto(rest.to_string())))
        }
        "branch" => {
            let (conds, arms) = rest
                .split_once('?')
                .ok_or_else(|| syntax(line, "expected `branch <vars> ? <then> : <else>`"))?;
            let (t, e) = arms
                .split_once(':')
                .ok_or_else(|| syntax(line, "expected `: <else>` in branch"))?;
            let (t, e) = (t.trim(), e.trim());
            if !is_block_name(t) || !is_block_name(e) {
                return Err(syntax(line, "bad branch target"));
            }
            let mut cv = Vec::new();
            for c in conds.split(',').map(str::trim).filter(|c| !c.is_empty()) {
                cv.push(c.to_string());
            }
            Ok(Err(RawTerm::Branch(cv, t.to_string(), e.to_string())))
        }
        "" => Err(syntax(line, "empty statement")),
        other => Err(syntax(line, format!("unknown statement `{other}`"))),
    }
}

/// Parses the textual IR and validates it.
pub fn parse_program(text: &str) -> Result<Program, IrError> {
    let mut config = FileConfig::default();
    let mut vars: Vec<Variable> = Vec::new();
    let mut regions: Vec<Region> = Vec::new();
    let mut var_ix: HashMap<String, VarId> = HashMap::new();
    let mut region_ix: HashMap<String, RegionId> = HashMap::new();
    let mut blocks: Vec<RawBlock> = Vec::new();
    let mut entry: Option<(usize, String)> = None;
    let mut hints: Vec<(usize, String, u32)> = Vec::new();

    for (ln0, raw) in text.lines().enumerate() {
        let line = ln0 + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (kw, rest) = match content.split_once(char::is_whitespace) {
            Some((k, r)) => (k, r.trim()),
            None => (content, ""),
        };
        match kw {
            "config" => {
                for kv in rest.split_whitespace() {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| syntax(line, format!("expected key=value, got `{kv}`")))?;
                    config.set(k, v).map_err(|m| syntax(line, m))?;
                }
            }
            "var" => {
                if rest.is_empty() {
                    return Err(syntax(line, "`var` needs at least one name"));
                }
                for name in rest.split_whitespace() {
                    if !is_ident(name) {
                        return Err(syntax(line, format!("bad variable name `{name}`")));
                    }
                    if var_ix.contains_key(name) || region_ix.contains_key(name) {
                        return Err(IrError::Duplicate {
                            line,
                            name: name.to_string(),
                        });
                    }
                    var_ix.insert(name.to_string(), VarId(vars.len() as u32));
                    vars.push(Variable {
                        name: name.to_string(),
                        region: None,
                    });
                }
            }
            "region" => {
                let mut it = rest.split_whitespace();
                let name = it.next().ok_or_else(|| syntax(line, "`region` needs a name"))?;
                let size = it
                    .next()
                    .and_then(|s| s.strip_prefix("size="))
                    .ok_or_else(|| syntax(line, "expected `region <name> size=<m>`"))?
                    .parse::<u32>()
                    .map_err(|_| syntax(line, "bad region size"))?;
                if it.next().is_some() {
                    return Err(syntax(line, "trailing tokens after region size"));
                }
                if !is_ident(name) {
                    return Err(syntax(line, format!("bad region name `{name}`")));
                }
                if size == 0 {
                    return Err(syntax(line, "region size must be at least 1"));
                }
                if var_ix.contains_key(name) || region_ix.contains_key(name) {
                    return Err(IrError::Duplicate {
                        line,
                        name: name.to_string(),
                    });
                }
                let rid = RegionId(regions.len() as u32);
                let first = VarId(vars.len() as u32);
                for i in 0..size {
                    let lname = format!("{name}.{i}");
                    var_ix.insert(lname.clone(), VarId(vars.len() as u32));
                    vars.push(Variable {
                        name: lname,
                        region: Some(rid),
                    });
                }
                region_ix.insert(name.to_string(), rid);
                regions.push(Region {
                    name: name.to_string(),
                    size,
                    first,
                });
            }
            "entry" => {
                if entry.is_some() {
                    return Err(syntax(line, "duplicate `entry`"));
                }
                if !is_block_name(rest) {
                    return Err(syntax(line, format!("bad block name `{rest}`")));
                }
                entry = Some((line, rest.to_string()));
            }
            "unroll" => {
                let mut it = rest.split_whitespace();
                let (b, k) = match (it.next(), it.next(), it.next()) {
                    (Some(b), Some(k), None) => (b, k),
                    _ => return Err(syntax(line, "expected `unroll <block> <k>`")),
                };
                let k = k
                    .parse::<u32>()
                    .ok()
                    .filter(|k| *k >= 1)
                    .ok_or_else(|| syntax(line, "unroll count must be a positive integer"))?;
                hints.push((line, b.to_string(), k));
            }
            "block" => {
                let (name, tail) = rest
                    .split_once(':')
                    .ok_or_else(|| syntax(line, "expected `block <name>:`"))?;
                let name = name.trim();
                if !is_block_name(name) {
                    return Err(syntax(line, format!("bad block name `{name}`")));
                }
                if blocks.iter().any(|b| b.name == name) {
                    return Err(IrError::Duplicate {
                        line,
                        name: name.to_string(),
                    });
                }
                blocks.push(RawBlock {
                    name: name.to_string(),
                    line,
                    body: Vec::new(),
                    term: None,
                });
                add_statements(blocks.last_mut().unwrap(), line, tail)?;
            }
            _ => {
                let cur = blocks
                    .last_mut()
                    .ok_or_else(|| syntax(line, "statement outside of a block"))?;
                add_statements(cur, line, content)?;
            }
        }
    }

    let block_ix: HashMap<&str, BlockId> = blocks
        .iter()
        .enumerate()
        .map(|(i, b)| (b.name.as_str(), BlockId(i as u32)))
        .collect();
    let resolve_block = |line: usize, name: &str| {
        block_ix
            .get(name)
            .copied()
            .ok_or_else(|| IrError::DanglingSuccessor {
                line,
                name: name.to_string(),
            })
    };
    let resolve_var = |line: usize, name: &str| {
        var_ix.get(name).copied().ok_or_else(|| IrError::UndeclaredVar {
            line,
            name: name.to_string(),
        })
    };
    let resolve_region = |line: usize, name: &str| {
        region_ix
            .get(name)
            .copied()
            .ok_or_else(|| IrError::UndeclaredRegion {
                line,
                name: name.to_string(),
            })
    };

    let mut out_blocks = Vec::with_capacity(blocks.len());
    for rb in &blocks {
        let mut body = Vec::with_capacity(rb.body.len());
        for (line, ri) in &rb.body {
            let line = *line;
            body.push(match ri {
                RawInst::Ref(v) => Instruction::Ref(resolve_var(line, v)?),
                RawInst::RefLine(r, i) => {
                    let rid = resolve_region(line, r)?;
                    let reg = &regions[rid.idx()];
                    if *i >= reg.size {
                        return Err(IrError::LineOutOfRange {
                            line,
                            region: r.clone(),
                            index: *i,
                            size: reg.size,
                        });
                    }
                    Instruction::Ref(reg.line(*i))
                }
                RawInst::RefAny(r) => Instruction::RefRegionUnknown(resolve_region(line, r)?),
                RawInst::Secret(r) => Instruction::SecretRef(resolve_region(line, r)?),
                RawInst::Nop => Instruction::Nop,
            });
        }
        let term = match &rb.term {
            None => return Err(IrError::MissingTerminator(rb.name.clone())),
            Some((line, RawTerm::Exit)) => {
                let _ = line;
                Terminator::Exit
            }
            Some((line, RawTerm::Goto(t))) => Terminator::Goto(resolve_block(*line, t)?),
            Some((line, RawTerm::Branch(cv, t, e))) => {
                let mut cond = Vec::new();
                for c in cv {
                    let v = resolve_var(*line, c)?;
                    if !cond.contains(&v) {
                        cond.push(v);
                    }
                }
                Terminator::Branch {
                    cond,
                    then_: resolve_block(*line, t)?,
                    else_: resolve_block(*line, e)?,
                }
            }
        };
        let (source, copy) = split_copy(&rb.name);
        out_blocks.push(BasicBlock {
            name: rb.name.clone(),
            body,
            term,
            source,
            copy,
        });
    }

    let entry = match entry {
        None => return Err(IrError::MissingEntry),
        Some((_, name)) => block_ix
            .get(name.as_str())
            .copied()
            .ok_or(IrError::UnknownEntry(name))?,
    };
    let mut unroll_hints = Vec::new();
    for (line, b, k) in hints {
        let id = resolve_block(line, &b)?;
        if unroll_hints.iter().any(|(h, _)| *h == id) {
            return Err(syntax(line, format!("duplicate unroll hint for `{b}`")));
        }
        unroll_hints.push((id, k));
    }
    let _ = blocks.iter().map(|b| b.line);

    let prog = Program {
        vars,
        regions,
        blocks: out_blocks,
        entry,
        unroll_hints,
        config,
    };
    prog.validate()?;
    Ok(prog)
}

/// `body@3` → (`body`, 3); composite suffixes `b@1@2` fold left to right.
fn split_copy(name: &str) -> (String, u32) {
    match name.split_once('@') {
        None => (name.to_string(), 0),
        Some((src, rest)) => {
            let copy = rest.split('@').last().and_then(|d| d.parse().ok()).unwrap_or(0);
            (src.to_string(), copy)
        }
    }
}

fn add_statements(block: &mut RawBlock, line: usize, text: &str) -> Result<(), IrError> {
    for stmt in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        if block.term.is_some() {
            return Err(syntax(
                line,
                format!("statement after the terminator of block `{}`", block.name),
            ));
        }
        match parse_stmt(line, stmt)? {
            Ok(inst) => block.body.push((line, inst)),
            Err(term) => block.term = Some((line, term)),
        }
    }
    Ok(())
}
