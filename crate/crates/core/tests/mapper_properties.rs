use factor_machine::apps::{random_acyclic, RandomGraphParams};
use factor_machine::golden::{exact_marginals, linf_distance};
use factor_machine::graph::{FactorGraph, FactorKind};
use factor_machine::image::Mode;
use factor_machine::machine::{Capacities, Machine};
use factor_machine::mapper::*;
use proptest::prelude::*;

fn caps_strategy() -> impl Strategy<Value = Capacities> {
    (1usize..=4, 1usize..=4, 4usize..=16).prop_map(|(vars, rels, shadows)| Capacities {
        vars,
        rels,
        shadows,
        table_words: 512,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clusters_partition_the_graph_within_capacity(seed in any::<u64>(), caps in caps_strategy()) {
        let g = random_acyclic(seed, &RandomGraphParams::default());
        let clusters = match cluster(&g, &caps) {
            Ok(c) => c,
            Err(MapError::NodeTooLarge(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let mut vars: Vec<usize> = clusters.iter().flat_map(|c| c.vars.iter().copied()).collect();
        let mut facs: Vec<usize> = clusters.iter().flat_map(|c| c.factors.iter().copied()).collect();
        vars.sort_unstable();
        facs.sort_unstable();
        prop_assert_eq!(vars, (0..g.variables.len()).collect::<Vec<_>>());
        prop_assert_eq!(facs, (0..g.factors.len()).collect::<Vec<_>>());
        for (i, c) in clusters.iter().enumerate() {
            prop_assert!(c.vars.len() <= caps.vars && c.factors.len() <= caps.rels);
            let returns: usize = c.vars.iter()
                .map(|&v| clusters.iter().enumerate().filter(|&(j, d)| j != i && d.factors.iter().any(|&f| g.factors[f].scope.contains(&v))).count())
                .sum();
            prop_assert!(c.remote_vars(&g).len() + returns <= caps.shadows);
            prop_assert!(c.table_words(&g) <= caps.table_words);
        }
    }

    #[test]
    fn annealing_never_loses_to_row_major(n in 2usize..16, seed in any::<u64>(), raw in prop::collection::vec((0usize..16, 0usize..16, 1u64..4), 1..30)) {
        let edges: Vec<(usize, usize, u64)> = raw.into_iter()
            .map(|(a, b, w)| (a % n, b % n, w))
            .filter(|(a, b, _)| a != b)
            .map(|(a, b, w)| (a.min(b), a.max(b), w))
            .collect();
        let r = place(n, &edges, 4, 4, seed, &AnnealParams::default()).unwrap();
        prop_assert!(r.final_cost <= r.initial_cost);
        prop_assert_eq!(edge_cost(&r.placement.coords, &edges), r.final_cost);
        let mut cells: Vec<_> = r.placement.coords.clone();
        cells.sort_unstable();
        cells.dedup();
        prop_assert_eq!(cells.len(), n);
        prop_assert!(r.placement.coords.iter().all(|&(row, col)| row < 4 && col < 4));
    }

    #[test]
    fn compile_is_deterministic_and_loadable(seed in any::<u64>(), caps in caps_strategy(), gibbs in any::<bool>()) {
        let g = random_acyclic(seed, &RandomGraphParams::default());
        let mode = if gibbs { Mode::Gibbs } else { Mode::SumProd };
        let mut o = CompileOptions::new(4, 4, mode);
        o.caps = caps;
        o.seed = seed;
        match compile(&g, &o) {
            Ok(a) => {
                let b = compile(&g, &o).unwrap();
                prop_assert_eq!(a.image.to_string(), b.image.to_string());
                let (v, s, r, w) = a.utilization();
                prop_assert!(v <= caps.vars && s <= caps.shadows && r <= caps.rels && w <= caps.table_words);
                prop_assert!(Machine::load_image_with(&a.image, &caps).is_ok());
                prop_assert_eq!(a.final_cost, cost(&a.placement, &a.clusters, &a.lowered.graph));
            }
            Err(MapError::GridTooSmall { clusters, cells }) => prop_assert!(clusters > cells),
            // tight shadow limits can leave a node with no legal cluster
            Err(MapError::NodeTooLarge(_)) => {}
            Err(e) => prop_assert!(false, "unexpected mapping error {e}"),
        }
    }

    /// Lowering at zero violation weight keeps the marginals of the input variables.
    #[test]
    fn lowering_preserves_marginals(bits in 2usize..9, mask in any::<u16>(), seed in any::<u64>()) {
        let mut g = random_acyclic(seed, &RandomGraphParams { max_vars: 5, ..RandomGraphParams::default() });
        let base = g.variables.len();
        let cards: Vec<usize> = g.variables.iter().map(|v| v.cardinality).collect();
        let mut all = cards.clone();
        all.extend(std::iter::repeat(2).take(bits));
        let mut h = FactorGraph::with_variables(&all);
        h.factors = g.factors.clone();
        let parity: Vec<usize> = (base..base + bits).collect();
        h.add_factor(parity, FactorKind::Parity);
        for (i, v) in (base..base + bits).enumerate() {
            let bias = if mask >> i & 1 == 1 { vec![0.3, 0.7] } else { vec![0.6, 0.4] };
            h.add_factor(vec![v], FactorKind::Table(bias));
        }
        // ALL_DIFFERENT over same-cardinality variables, never more of them than values
        for c in 2..=4 {
            let same: Vec<usize> = (0..base).filter(|&v| cards[v] == c).take(c).collect();
            if same.len() >= 2 {
                h.add_factor(same, FactorKind::AllDifferent);
                break;
            }
        }
        g = h;
        let lowered = lower(&g, 0.0, 512).unwrap();
        let before = exact_marginals::<f64>(&g).unwrap();
        let after = exact_marginals::<f64>(&lowered.graph).unwrap();
        prop_assert!(linf_distance(&before, &after[..lowered.original_vars]) <= 1e-9);
        prop_assert!(lowered.graph.factors.iter().all(|f| !f.kind.is_builtin()));
        prop_assert!(lowered.graph.factors.iter().all(|f| f.scope.len() <= MAX_PARITY_ARITY || lowered.origin[f.id] < g.factors.len() - bits - 1));
    }
}

#[test]
fn placement_stays_on_grid_for_every_seed() {
    let g = random_acyclic(
        17,
        &RandomGraphParams {
            min_vars: 12,
            ..RandomGraphParams::default()
        },
    );
    for seed in 0..10 {
        let mut o = CompileOptions::new(4, 4, Mode::SumProd);
        o.seed = seed;
        o.caps = Capacities {
            vars: 1,
            rels: 1,
            ..Capacities::default()
        };
        let m = compile(&g, &o).unwrap();
        assert!(m.final_cost <= m.initial_cost);
        assert_eq!(m.image.cells.len(), m.clusters.len());
    }
}

#[test]
fn oversized_table_is_a_mapping_error() {
    let mut g = FactorGraph::with_variables(&[16, 16, 16]);
    g.add_factor(vec![0, 1, 2], FactorKind::Table(vec![1.0; 4096]));
    assert!(matches!(
        compile(&g, &CompileOptions::new(4, 4, Mode::SumProd)),
        Err(MapError::TableTooLarge { .. })
    ));
}
