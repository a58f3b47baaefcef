use super::table::strides_for;
use super::{FactorKind, FactorNode, GraphError};

/// Penalty `W` for soft constraint violation in log-domain and sampling modes.
pub const SOFT_PENALTY: f64 = 20.0;

/// `e^-W`: the constraint-violation weight used for min-sum and Gibbs.
pub const SOFT_EPSILON: f64 = 2.061_153_622_438_558e-9;

/// Expands a builtin relation to an equivalent TABLE factor.
///
/// Rows satisfying the constraint get weight 1.0 and violating rows get `eps`.
/// `PAIRWISE_ISING(J)` ignores `eps`.
pub fn expand_builtin(
    factor: &FactorNode,
    cards: &[usize],
    eps: f64,
) -> Result<FactorNode, GraphError> {
    let id = factor.id;
    let pre = |msg: &str| GraphError::BuiltinPrecondition {
        factor: id,
        msg: msg.to_string(),
    };
    if cards.len() != factor.scope.len() {
        return Err(pre("cardinality list does not match scope"));
    }
    if cards.is_empty() {
        return Err(pre("empty scope"));
    }
    let same_card = cards.iter().all(|&c| c == cards[0]);
    match factor.kind {
        FactorKind::Table(_) => return Err(pre("factor is already a table")),
        FactorKind::AllDifferent if !same_card => {
            return Err(pre("ALL_DIFFERENT requires equal cardinalities"))
        }
        FactorKind::Parity if !same_card || cards[0] != 2 => {
            return Err(pre("PARITY requires binary variables"))
        }
        FactorKind::PairwiseIsing(_) if cards.len() != 2 => {
            return Err(pre("PAIRWISE_ISING requires arity 2"))
        }
        _ => {}
    }

    let strides = strides_for(cards);
    let len: usize = cards.iter().product();
    let mut digits = vec![0usize; cards.len()];
    let mut values = Vec::with_capacity(len);
    for row in 0..len {
        for (i, d) in digits.iter_mut().enumerate() {
            *d = (row / strides[i]) % cards[i];
        }
        let ok = |b: bool| if b { 1.0 } else { eps };
        let v = match factor.kind {
            FactorKind::AllDifferent => ok(
                (0..digits.len()).all(|i| (i + 1..digits.len()).all(|j| digits[i] != digits[j]))
            ),
            FactorKind::Parity => ok(digits.iter().sum::<usize>() % 2 == 0),
            FactorKind::Equality => ok(digits.iter().all(|&d| d == digits[0])),
            FactorKind::PairwiseIsing(j) => {
                if digits[0] == digits[1] {
                    j.exp()
                } else {
                    (-j).exp()
                }
            }
            FactorKind::Table(_) => unreachable!(),
        };
        values.push(v);
    }
    Ok(FactorNode::table(id, factor.scope.clone(), values))
}
