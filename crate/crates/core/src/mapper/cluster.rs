use std::collections::{BTreeSet, VecDeque};

use super::MapError;
use crate::graph::{FactorGraph, FactorKind};
use crate::machine::Capacities;

/// The variables and factors assigned to one cell.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Cluster {
    pub vars: Vec<usize>,
    pub factors: Vec<usize>,
}

impl Cluster {
    /// Remote variables referenced by local factors.
    pub fn remote_vars(&self, graph: &FactorGraph) -> BTreeSet<usize> {
        self.factors
            .iter()
            .flat_map(|&f| graph.factors[f].scope.iter().copied())
            .filter(|v| !self.vars.contains(v))
            .collect()
    }

    pub fn table_words(&self, graph: &FactorGraph) -> usize {
        self.factors.iter().map(|&f| words(graph, f)).sum()
    }
}

fn words(graph: &FactorGraph, f: usize) -> usize {
    match &graph.factors[f].kind {
        FactorKind::Table(t) => t.len(),
        _ => graph.scope_cards(&graph.factors[f]).iter().product(),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Node {
    Var(usize),
    Factor(usize),
}

/// Shadow bookkeeping while clusters grow. A cell needs one input shadow per
/// remote variable its factors read, and one return shadow per (home
/// variable, other cluster with a factor on it).
struct Book<'a> {
    graph: &'a FactorGraph,
    adj: Vec<Vec<usize>>,
    caps: &'a Capacities,
    var_of: Vec<Option<usize>>,
    fac_of: Vec<Option<usize>>,
    inputs: Vec<usize>,
    returns: Vec<BTreeSet<(usize, usize)>>,
    words: usize,
}

impl Book<'_> {
    fn shadows(&self, d: usize, current: &Cluster, id: usize) -> usize {
        let inputs = if d == id {
            current.remote_vars(self.graph).len()
        } else {
            self.inputs[d]
        };
        inputs + self.returns[d].len()
    }

    fn try_factor(&mut self, f: usize, c: &mut Cluster, id: usize) -> bool {
        if self.fac_of[f].is_some() || c.factors.len() >= self.caps.rels {
            return false;
        }
        let w = words(self.graph, f);
        if self.words + w > self.caps.table_words {
            return false;
        }
        c.factors.push(f);
        let mut fresh: Vec<(usize, usize)> = Vec::new();
        for &u in &self.graph.factors[f].scope {
            if let Some(d) = self.var_of[u] {
                if d != id && !self.returns[d].contains(&(u, id)) && !fresh.contains(&(d, u)) {
                    fresh.push((d, u));
                }
            }
        }
        let fits = self.shadows(id, c, id) <= self.caps.shadows
            && fresh.iter().all(|&(d, _)| {
                self.shadows(d, c, id) + fresh.iter().filter(|x| x.0 == d).count()
                    <= self.caps.shadows
            });
        if !fits {
            c.factors.pop();
            return false;
        }
        for (d, u) in fresh {
            self.returns[d].insert((u, id));
        }
        self.fac_of[f] = Some(id);
        self.words += w;
        true
    }

    fn try_var(&mut self, v: usize, c: &mut Cluster, id: usize) -> bool {
        if c.vars.len() >= self.caps.vars {
            return false;
        }
        let others: BTreeSet<usize> = self.adj[v]
            .iter()
            .filter_map(|&g| self.fac_of[g])
            .filter(|&e| e != id)
            .collect();
        c.vars.push(v);
        if self.shadows(id, c, id) + others.len() > self.caps.shadows {
            c.vars.pop();
            return false;
        }
        self.returns[id].extend(others.into_iter().map(|e| (v, e)));
        self.var_of[v] = Some(id);
        true
    }
}

/// Greedy breadth-first agglomeration.
///
/// Each cluster is seeded at the lowest-id unassigned variable and grows
/// through adjacent factors and variables while the cell limits allow. Factors
/// left over once every variable is placed are grouped the same way, reaching
/// each other through the variables they share.
pub fn cluster(graph: &FactorGraph, caps: &Capacities) -> Result<Vec<Cluster>, MapError> {
    for f in 0..graph.factors.len() {
        let w = words(graph, f);
        if w > caps.table_words || caps.rels == 0 {
            return Err(MapError::NodeTooLarge(format!(
                "factor {f} needs {w} table words (limit {})",
                caps.table_words
            )));
        }
    }
    if caps.vars == 0 && !graph.variables.is_empty() {
        return Err(MapError::NodeTooLarge(
            "cells have no variable slots".into(),
        ));
    }
    let mut book = Book {
        graph,
        adj: graph.adjacency(),
        caps,
        var_of: vec![None; graph.variables.len()],
        fac_of: vec![None; graph.factors.len()],
        inputs: Vec::new(),
        returns: Vec::new(),
        words: 0,
    };
    let mut clusters: Vec<Cluster> = Vec::new();

    loop {
        let seed = match book.var_of.iter().position(Option::is_none) {
            Some(v) => Node::Var(v),
            None => match book.fac_of.iter().position(Option::is_none) {
                Some(f) => Node::Factor(f),
                None => break,
            },
        };
        let id = clusters.len();
        let leftover = matches!(seed, Node::Factor(_));
        let mut c = Cluster::default();
        book.words = 0;
        book.returns.push(BTreeSet::new());
        let placed = match seed {
            Node::Var(v) => book.try_var(v, &mut c, id),
            Node::Factor(f) => book.try_factor(f, &mut c, id),
        };
        if !placed {
            let what = match seed {
                Node::Var(v) => format!("variable {v}"),
                Node::Factor(f) => format!("factor {f}"),
            };
            return Err(MapError::NodeTooLarge(format!(
                "{what} needs more than {} shadow slots",
                caps.shadows
            )));
        }
        let mut queue = VecDeque::from([seed]);
        while let Some(node) = queue.pop_front() {
            match node {
                Node::Var(v) => {
                    for f in book.adj[v].clone() {
                        if book.try_factor(f, &mut c, id) {
                            queue.push_back(Node::Factor(f));
                        }
                    }
                }
                Node::Factor(f) => {
                    for &v in &graph.factors[f].scope {
                        match book.var_of[v] {
                            None => {
                                if book.try_var(v, &mut c, id) {
                                    queue.push_back(Node::Var(v));
                                }
                            }
                            Some(owner) if leftover && owner != id => {
                                for g in book.adj[v].clone() {
                                    if book.try_factor(g, &mut c, id) {
                                        queue.push_back(Node::Factor(g));
                                    }
                                }
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
        c.vars.sort_unstable();
        c.factors.sort_unstable();
        book.inputs.push(c.remote_vars(graph).len());
        clusters.push(c);
    }
    Ok(clusters)
}
