/// Dense factor table over an ordered scope; the last scope variable varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub scope: Vec<usize>,
    pub cards: Vec<usize>,
    pub values: Vec<f64>,
    strides: Vec<usize>,
}

impl Table {
    pub fn new(scope: Vec<usize>, cards: Vec<usize>, values: Vec<f64>) -> Self {
        let strides = strides_for(&cards);
        Self {
            scope,
            cards,
            values,
            strides,
        }
    }

    pub fn arity(&self) -> usize {
        self.scope.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Row index of a per-position assignment.
    pub fn row(&self, local: &[usize]) -> usize {
        local.iter().zip(&self.strides).map(|(x, s)| x * s).sum()
    }

    /// Value at the row selected by a full-graph assignment.
    pub fn lookup(&self, assignment: &[usize]) -> f64 {
        let row: usize = self
            .scope
            .iter()
            .zip(&self.strides)
            .map(|(&v, s)| assignment[v] * s)
            .sum();
        self.values[row]
    }

    /// Value of scope position `pos` in row `row`.
    pub fn digit(&self, row: usize, pos: usize) -> usize {
        (row / self.strides[pos]) % self.cards[pos]
    }

    /// Position of variable `var` in the scope.
    pub fn position(&self, var: usize) -> Option<usize> {
        self.scope.iter().position(|&v| v == var)
    }
}

pub(crate) fn strides_for(cards: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * cards[i + 1];
    }
    strides
}
