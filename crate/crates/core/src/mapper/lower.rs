use super::MapError;
use crate::graph::{expand_builtin, FactorGraph, FactorKind, FactorNode, VariableNode};

/// Widest PARITY relation kept as a single table.
pub const MAX_PARITY_ARITY: usize = 4;

/// A graph whose factors are all tables, plus provenance of each lowered factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Lowered {
    pub graph: FactorGraph,
    /// Variables `0..original_vars` are the input variables; the rest are auxiliaries.
    pub original_vars: usize,
    /// Input factor id of every lowered factor.
    pub origin: Vec<usize>,
}

/// Rewrites builtins into tables that fit a cell.
///
/// ALL_DIFFERENT becomes a clique of pairwise not-equal tables, PARITY wider
/// than four bits becomes a chain of four-bit parity tables linked by
/// auxiliary binary variables, and other builtins are expanded in place.
/// Violations weigh `eps`. Any table above `table_words` is rejected.
pub fn lower(graph: &FactorGraph, eps: f64, table_words: usize) -> Result<Lowered, MapError> {
    let mut out = FactorGraph::new(graph.variables.clone(), Vec::new());
    let mut origin = Vec::new();
    let push = |out: &mut FactorGraph,
                origin: &mut Vec<usize>,
                src: usize,
                scope: Vec<usize>,
                kind: FactorKind| {
        let node = FactorNode {
            id: out.factors.len(),
            scope,
            kind,
        };
        let node = if node.kind.is_builtin() {
            let cards = out.scope_cards(&node);
            expand_builtin(&node, &cards, eps)?
        } else {
            node
        };
        let words = match &node.kind {
            FactorKind::Table(v) => v.len(),
            _ => unreachable!("builtins are expanded above"),
        };
        if words > table_words {
            return Err(MapError::TableTooLarge {
                factor: src,
                words,
                limit: table_words,
            });
        }
        out.factors.push(node);
        origin.push(src);
        Ok(())
    };
    for f in &graph.factors {
        match &f.kind {
            FactorKind::AllDifferent => {
                for i in 0..f.scope.len() {
                    for j in i + 1..f.scope.len() {
                        push(
                            &mut out,
                            &mut origin,
                            f.id,
                            vec![f.scope[i], f.scope[j]],
                            FactorKind::AllDifferent,
                        )?;
                    }
                }
            }
            FactorKind::Parity if f.scope.len() > MAX_PARITY_ARITY => {
                let mut rest: Vec<usize> = f.scope.clone();
                while rest.len() > MAX_PARITY_ARITY {
                    let aux = out.variables.len();
                    out.variables.push(VariableNode::new(aux, 2));
                    let mut scope: Vec<usize> = rest.drain(..MAX_PARITY_ARITY - 1).collect();
                    scope.push(aux);
                    push(&mut out, &mut origin, f.id, scope, FactorKind::Parity)?;
                    rest.insert(0, aux);
                }
                push(&mut out, &mut origin, f.id, rest, FactorKind::Parity)?;
            }
            kind => push(&mut out, &mut origin, f.id, f.scope.clone(), kind.clone())?,
        }
    }
    Ok(Lowered {
        graph: out,
        original_vars: graph.variables.len(),
        origin,
    })
}
