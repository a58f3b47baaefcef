//! Bipartite variable/relation graphs: the program a factor machine executes.
//!
//! Variables are discrete with a finite domain `0..cardinality`. Relations
//! (factors) are either explicit non-negative tables or one of a few builtin
//! constraint kinds that expand to tables on demand.

mod builtin;
mod table;
mod uai;

pub use builtin::{expand_builtin, SOFT_EPSILON, SOFT_PENALTY};
pub use table::Table;
pub use uai::{parse_evidence, parse_uai, serialize_evidence, serialize_uai};

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("variable {var}: cardinality {card} < 2")]
    Cardinality { var: usize, card: usize },
    #[error("factor {factor}: table-length mismatch (expected {expected}, found {found})")]
    TableLength {
        factor: usize,
        expected: usize,
        found: usize,
    },
    #[error("factor {factor}: dangling variable id {var}")]
    DanglingVariable { factor: usize, var: usize },
    #[error("factor {factor}: builtin must be expanded before serialization")]
    UnexpandedBuiltin { factor: usize },
    #[error("factor {factor}: {msg}")]
    BuiltinPrecondition { factor: usize, msg: String },
    #[error("evidence for variable {var}: {msg}")]
    Evidence { var: usize, msg: String },
    #[error("invalid graph: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableNode {
    pub id: usize,
    pub cardinality: usize,
    pub evidence: Option<usize>,
}

impl VariableNode {
    pub fn new(id: usize, cardinality: usize) -> Self {
        Self {
            id,
            cardinality,
            evidence: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FactorKind {
    /// Flat table, last scope variable varying fastest.
    Table(Vec<f64>),
    AllDifferent,
    /// Even parity over binary variables.
    Parity,
    Equality,
    PairwiseIsing(f64),
}

impl FactorKind {
    pub fn is_builtin(&self) -> bool {
        !matches!(self, FactorKind::Table(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            FactorKind::Table(_) => "TABLE",
            FactorKind::AllDifferent => "ALL_DIFFERENT",
            FactorKind::Parity => "PARITY",
            FactorKind::Equality => "EQUALITY",
            FactorKind::PairwiseIsing(_) => "PAIRWISE_ISING",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorNode {
    pub id: usize,
    pub scope: Vec<usize>,
    pub kind: FactorKind,
}

impl FactorNode {
    pub fn table(id: usize, scope: Vec<usize>, values: Vec<f64>) -> Self {
        Self {
            id,
            scope,
            kind: FactorKind::Table(values),
        }
    }

    pub fn builtin(id: usize, scope: Vec<usize>, kind: FactorKind) -> Self {
        Self { id, scope, kind }
    }
}

/// A factor graph. Edges are implied by factor scopes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FactorGraph {
    pub variables: Vec<VariableNode>,
    pub factors: Vec<FactorNode>,
}

impl FactorGraph {
    pub fn new(variables: Vec<VariableNode>, factors: Vec<FactorNode>) -> Self {
        Self { variables, factors }
    }

    /// Graph with `cards.len()` variables and no factors.
    pub fn with_variables(cards: &[usize]) -> Self {
        let variables = cards
            .iter()
            .enumerate()
            .map(|(i, &c)| VariableNode::new(i, c))
            .collect();
        Self {
            variables,
            factors: Vec::new(),
        }
    }

    /// Appends a factor, assigning the next dense id. Returns that id.
    pub fn add_factor(&mut self, scope: Vec<usize>, kind: FactorKind) -> usize {
        let id = self.factors.len();
        self.factors.push(FactorNode { id, scope, kind });
        id
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.cardinality).collect()
    }

    pub fn scope_cards(&self, factor: &FactorNode) -> Vec<usize> {
        factor
            .scope
            .iter()
            .map(|&v| self.variables[v].cardinality)
            .collect()
    }

    /// Factor ids adjacent to each variable, in factor-id order.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.variables.len()];
        for f in &self.factors {
            for &v in &f.scope {
                if v < adj.len() && !adj[v].contains(&f.id) {
                    adj[v].push(f.id);
                }
            }
        }
        adj
    }

    /// Number of variable/factor edges.
    pub fn edge_count(&self) -> usize {
        self.factors.iter().map(|f| f.scope.len()).sum()
    }

    pub fn set_evidence(&mut self, var: usize, value: usize) -> Result<(), GraphError> {
        let node = self
            .variables
            .get_mut(var)
            .ok_or_else(|| GraphError::Evidence {
                var,
                msg: "unknown variable".into(),
            })?;
        if value >= node.cardinality {
            return Err(GraphError::Evidence {
                var,
                msg: format!("value {value} outside domain of size {}", node.cardinality),
            });
        }
        node.evidence = Some(value);
        Ok(())
    }

    pub fn evidence(&self) -> Vec<(usize, usize)> {
        self.variables
            .iter()
            .filter_map(|v| v.evidence.map(|e| (v.id, e)))
            .collect()
    }

    /// All factors as tables, expanding builtins with constraint-violation weight `eps`.
    pub fn tables(&self, eps: f64) -> Result<Vec<Table>, GraphError> {
        self.factors
            .iter()
            .map(|f| {
                let cards = self.scope_cards(f);
                let values = match &f.kind {
                    FactorKind::Table(v) => v.clone(),
                    _ => match expand_builtin(f, &cards, eps)?.kind {
                        FactorKind::Table(v) => v,
                        _ => unreachable!("expand_builtin returns a table"),
                    },
                };
                Ok(Table::new(f.scope.clone(), cards, values))
            })
            .collect()
    }

    /// Returns every violated invariant, each naming the offending node.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, v) in self.variables.iter().enumerate() {
            if v.id != i {
                out.push(format!("variable {}: id not dense (position {i})", v.id));
            }
            if v.cardinality < 2 {
                out.push(format!(
                    "variable {}: cardinality {} < 2",
                    v.id, v.cardinality
                ));
            }
            if let Some(e) = v.evidence {
                if e >= v.cardinality {
                    out.push(format!("variable {}: evidence {e} outside domain", v.id));
                }
            }
        }
        let n = self.variables.len();
        for (i, f) in self.factors.iter().enumerate() {
            let id = f.id;
            if id != i {
                out.push(format!("factor {id}: id not dense (position {i})"));
            }
            if f.scope.is_empty() {
                out.push(format!("factor {id}: empty scope"));
                continue;
            }
            let mut seen = Vec::with_capacity(f.scope.len());
            let mut dangling = false;
            for &v in &f.scope {
                if v >= n {
                    out.push(format!("factor {id}: dangling variable id {v}"));
                    dangling = true;
                } else if seen.contains(&v) {
                    out.push(format!("factor {id}: duplicate variable in scope"));
                }
                seen.push(v);
            }
            if dangling {
                continue;
            }
            let cards = self.scope_cards(f);
            match &f.kind {
                FactorKind::Table(values) => {
                    let expected: usize = cards.iter().product();
                    if values.len() != expected {
                        out.push(format!(
                            "factor {id}: table-length mismatch (expected {expected}, found {})",
                            values.len()
                        ));
                    }
                    if values.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                        out.push(format!("factor {id}: negative or non-finite table entry"));
                    } else if !values.iter().any(|&x| x > 0.0) {
                        out.push(format!("factor {id}: table has no positive entry"));
                    }
                }
                FactorKind::AllDifferent | FactorKind::Parity => {
                    if cards.iter().any(|&c| c != cards[0]) {
                        out.push(format!("factor {id}: scope cardinalities differ"));
                    }
                    if matches!(f.kind, FactorKind::Parity) && cards[0] != 2 {
                        out.push(format!("factor {id}: PARITY requires binary variables"));
                    }
                }
                FactorKind::Equality => {}
                FactorKind::PairwiseIsing(j) => {
                    if f.scope.len() != 2 {
                        out.push(format!("factor {id}: PAIRWISE_ISING requires arity 2"));
                    }
                    if !j.is_finite() {
                        out.push(format!("factor {id}: non-finite coupling"));
                    }
                }
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Consumes the graph, returning it only if it validates.
    pub fn validated(self) -> Result<Self, GraphError> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(GraphError::Invalid(violations))
        }
    }

    /// Whether the bipartite graph has no cycles.
    pub fn is_forest(&self) -> bool {
        // edges - nodes + components == 0 for a forest
        let nodes = self.variables.len() + self.factors.len();
        nodes == 0 || self.edge_count() + self.components() == nodes
    }

    fn components(&self) -> usize {
        let n = self.variables.len();
        let mut parent: Vec<usize> = (0..n + self.factors.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut comps = parent.len();
        for f in &self.factors {
            for &v in &f.scope {
                let (a, b) = (find(&mut parent, v), find(&mut parent, n + f.id));
                if a != b {
                    parent[a] = b;
                    comps -= 1;
                }
            }
        }
        comps
    }

    /// Longest shortest path (in edges) of the bipartite graph, over all components.
    pub fn diameter(&self) -> usize {
        let n = self.variables.len();
        let total = n + self.factors.len();
        let mut nbrs = vec![Vec::new(); total];
        for f in &self.factors {
            for &v in &f.scope {
                nbrs[v].push(n + f.id);
                nbrs[n + f.id].push(v);
            }
        }
        let mut best = 0;
        let mut dist = vec![usize::MAX; total];
        let mut queue = std::collections::VecDeque::new();
        for start in 0..total {
            dist.iter_mut().for_each(|d| *d = usize::MAX);
            dist[start] = 0;
            queue.push_back(start);
            while let Some(x) = queue.pop_front() {
                best = best.max(dist[x]);
                for &y in &nbrs[x] {
                    if dist[y] == usize::MAX {
                        dist[y] = dist[x] + 1;
                        queue.push_back(y);
                    }
                }
            }
        }
        best
    }
}

impl fmt::Display for FactorGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "FactorGraph({} variables, {} factors)",
            self.variables.len(),
            self.factors.len()
        )
    }
}
