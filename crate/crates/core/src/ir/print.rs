use std::fmt::Write;

use super::{Instruction, Program, Terminator};

/// Canonical text form; `parse_program(print_program(p)) == p`.
pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    if !p.config.is_empty() {
        let _ = writeln!(out, "config {}", p.config.render());
    }
    // Declarations in index order so that re-parsing assigns the same ids.
    let mut pending: Vec<&str> = Vec::new();
    let mut i = 0;
    while i < p.vars.len() {
        let v = &p.vars[i];
        match v.region {
            None => {
                pending.push(&v.name);
                i += 1;
            }
            Some(r) => {
                if !pending.is_empty() {
                    let _ = writeln!(out, "var {}", pending.join(" "));
                    pending.clear();
                }
                let reg = p.region(r);
                let _ = writeln!(out, "region {} size={}", reg.name, reg.size);
                i += reg.size as usize;
            }
        }
    }
    if !pending.is_empty() {
        let _ = writeln!(out, "var {}", pending.join(" "));
    }
    let _ = writeln!(out, "entry {}", p.block(p.entry).name);
    for (h, k) in &p.unroll_hints {
        let _ = writeln!(out, "unroll {} {}", p.block(*h).name, k);
    }
    for b in &p.blocks {
        let _ = writeln!(out, "block {}:", b.name);
        for inst in &b.body {
            let _ = writeln!(out, "  {}", render(p, inst));
        }
        let term = match &b.term {
            Terminator::Exit => "exit".to_string(),
            Terminator::Goto(t) => format!("goto {}", p.block(*t).name),
            Terminator::Branch { cond, then_, else_ } => {
                let cv: Vec<&str> = cond.iter().map(|v| p.var_name(*v)).collect();
                if cv.is_empty() {
                    format!("branch ? {} : {}", p.block(*then_).name, p.block(*else_).name)
                } else {
                    format!(
                        "branch {} ? {} : {}",
                        cv.join(","),
                        p.block(*then_).name,
                        p.block(*else_).name
                    )
                }
            }
        };
        let _ = writeln!(out, "  {term}");
    }
    out
}

fn render(p: &Program, inst: &Instruction) -> String {
    p.render_instruction(inst)
}
