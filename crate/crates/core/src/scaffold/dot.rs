//! Graphviz export of the scaffold DAG.

use std::collections::HashMap;
use std::fmt::Write;

use super::Tournament;
use crate::chain::InputSpec;

/// One node per body, one edge per (possible) spend.
pub fn export_dot(t: &Tournament) -> String {
    let bodies = t.all_bodies();
    let mut ids = HashMap::new();
    let mut out =
        String::from("digraph scaffold {\n  rankdir=LR;\n  node [shape=box, fontsize=10];\n");
    for (n, (loc, body)) in bodies.iter().enumerate() {
        ids.insert(body.ntxid(), n);
        let _ = writeln!(out, "  n{n} [label=\"{loc}\"];");
    }
    for (n, (_, body)) in bodies.iter().enumerate() {
        for input in &body.inputs {
            let refs: Vec<_> = match input {
                InputSpec::Fixed(r) => vec![*r],
                InputSpec::MultiInput(set) => set.iter().copied().collect(),
            };
            for r in refs {
                if let Some(src) = ids.get(&r.txid) {
                    let style = if matches!(input, InputSpec::MultiInput(_)) {
                        " [style=dashed]"
                    } else {
                        ""
                    };
                    let _ = writeln!(out, "  n{src} -> n{n}{style};");
                }
            }
        }
    }
    out.push_str("}\n");
    out
}
