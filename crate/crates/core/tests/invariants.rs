//! Property checks over the search structures and codecs.

use std::collections::BTreeMap;

use cogmcts::actions::{parse_response, ParseContext};
use cogmcts::cognition::{build_ccs, elite_weights, ExperienceRecord, KnowledgeBase, KnowledgeKind};
use cogmcts::exec::sanitize;
use cogmcts::exec::template::{TemplateDocument, TemplateId};
use cogmcts::orchestrator::{EliteSet, RunConfig};
use cogmcts::prompts::render;
use cogmcts::tree::{lambda_decay, uct_score, NodeId, Origin, QualityBounds, SearchTree};
use cogmcts::{Dialect, HeuristicArtifact, Problem, SignatureKind};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn artifact(k: usize) -> HeuristicArtifact {
    HeuristicArtifact::new(format!("h{k}"), Dialect::Template, format!("payload {k}"), SignatureKind::EdgeMatrix)
}

/// Grows a tree the way the engine does: attach, then back up from the parent.
fn grow(ops: &[(usize, f64)], max_depth: usize) -> SearchTree {
    let mut tree = SearchTree::new(max_depth, 2.0);
    for (k, &(pick, reward)) in ops.iter().enumerate() {
        let open: Vec<NodeId> = tree.nodes().iter().filter(|n| n.depth < max_depth).map(|n| n.id).collect();
        let parent = open[pick % open.len()];
        tree.add_child(parent, artifact(k), Origin::M1, reward, k as u64 + 1).unwrap();
        tree.backpropagate(parent, 1);
    }
    tree
}

fn subtree_leaf_max(tree: &SearchTree, id: NodeId) -> f64 {
    let n = tree.node(id);
    if n.is_leaf() {
        return n.q;
    }
    n.children.iter().map(|&c| subtree_leaf_max(tree, c)).fold(f64::NEG_INFINITY, f64::max)
}

fn subtree_size(tree: &SearchTree, id: NodeId) -> u64 {
    1 + tree.node(id).children.iter().map(|&c| subtree_size(tree, c)).sum::<u64>()
}

proptest! {
    #[test]
    fn visits_count_subtrees_and_q_is_the_best_leaf(
        ops in prop::collection::vec((0usize..1000, -50.0f64..50.0), 1..60),
        depth in 1usize..5,
    ) {
        let tree = grow(&ops, depth);
        for n in tree.nodes() {
            let expected = subtree_size(&tree, n.id) - u64::from(n.parent.is_none());
            prop_assert_eq!(n.n_visits, expected);
            prop_assert!(n.depth <= depth);
            if !n.is_leaf() {
                prop_assert_eq!(n.q, subtree_leaf_max(&tree, n.id));
            }
        }
    }

    #[test]
    fn selection_ends_at_a_leaf_or_the_depth_cap(
        ops in prop::collection::vec((0usize..1000, -50.0f64..50.0), 1..60),
        depth in 1usize..5,
        lambda in 0.0f64..1.0,
    ) {
        let tree = grow(&ops, depth);
        let q: Vec<f64> = tree.nodes().iter().skip(1).map(|n| n.q).collect();
        let bounds = QualityBounds::default().updated(&q);
        let path = tree.select_path(bounds, lambda).unwrap();
        let mut parent = tree.root();
        for &id in &path {
            prop_assert_eq!(tree.node(id).parent, Some(parent));
            parent = id;
        }
        let last = tree.node(*path.last().unwrap());
        prop_assert!(last.is_leaf() || last.depth == depth);
    }

    #[test]
    fn uct_exploitation_is_normalized(
        a in -100.0f64..100.0, b in -100.0f64..100.0, frac in 0.0f64..=1.0,
        n in 1u64..1000, parent in 0u64..1000,
    ) {
        let bounds = QualityBounds { q_max: a.max(b), q_min: a.min(b) };
        let q = bounds.q_min + frac * (bounds.q_max - bounds.q_min);
        let s = uct_score(q, n, parent, bounds, 0.0);
        prop_assert!((-1e-9..=1.0 + 1e-9).contains(&s));
        let explore = uct_score(q, n, parent, bounds, 0.5) - s;
        prop_assert!(explore >= 0.0);
        let higher = uct_score(bounds.q_max, n, parent, bounds, 0.0);
        prop_assert!(higher >= s - 1e-12);
    }

    #[test]
    fn lambda_decays_linearly_to_zero(t1 in 0u64..2000, t2 in 0u64..2000, budget in 1u64..1000, l0 in 0.0f64..2.0) {
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let a = lambda_decay(lo, budget, l0).unwrap();
        let b = lambda_decay(hi, budget, l0).unwrap();
        prop_assert!(b <= a);
        prop_assert!((0.0..=l0).contains(&a));
        if hi >= budget {
            prop_assert_eq!(b, 0.0);
        }
    }

    #[test]
    fn elite_set_keeps_the_top_k(rewards in prop::collection::vec(-1e3f64..1e3, 0..80), k in 1usize..25) {
        let mut e = EliteSet::new(k);
        for (i, &r) in rewards.iter().enumerate() {
            e.update(NodeId(i + 1), r);
        }
        let mut sorted = rewards.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        sorted.truncate(k);
        let kept: Vec<f64> = e.members().iter().map(|&(_, r)| r).collect();
        prop_assert_eq!(kept, sorted);
    }

    #[test]
    fn weights_are_a_decreasing_distribution(n in 1usize..50) {
        let ranks: Vec<usize> = (1..=n).collect();
        let w = elite_weights(&ranks, n);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.windows(2).all(|p| p[0] > p[1]));
    }

    #[test]
    fn candidate_sets_are_distinct_and_bounded(n in 0usize..30, real_m in 0usize..12, uct in 1usize..40, seed in any::<u64>()) {
        let elites: Vec<NodeId> = (1..=n).map(NodeId).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ccs = build_ccs(NodeId(uct), &elites, real_m, &mut rng);
        let members = ccs.members();
        prop_assert_eq!(members[0], NodeId(uct));
        prop_assert!(ccs.elite_members.len() <= real_m.min(n));
        let mut seen = members.clone();
        seen.sort();
        seen.dedup();
        prop_assert_eq!(seen.len(), members.len());
        for &(id, rank) in &ccs.elite_members {
            prop_assert_eq!(elites[rank - 1], id);
        }
    }

    #[test]
    fn knowledge_base_is_a_bounded_fifo(kinds in prop::collection::vec(any::<bool>(), 0..60), cap in 1usize..10) {
        let mut kb = KnowledgeBase::new(cap);
        for (i, &pos) in kinds.iter().enumerate() {
            let kind = if pos { KnowledgeKind::Positive } else { KnowledgeKind::Negative };
            kb.push(kind, ExperienceRecord { cycle_index: i as u64, text: String::new(), ccs_digest: vec![], created_at_budget: 0 });
        }
        prop_assert!(kb.positive.len() <= cap && kb.negative.len() <= cap);
        let newest: Vec<u64> = kinds.iter().enumerate().filter(|(_, &p)| p).map(|(i, _)| i as u64).rev().take(cap).collect();
        let kept: Vec<u64> = kb.positive.iter().rev().map(|r| r.cycle_index).collect();
        prop_assert_eq!(kept, newest);
    }

    #[test]
    fn sanitized_values_are_finite_and_non_negative(values in prop::collection::vec(prop_oneof![
        any::<f64>(), Just(f64::NAN), Just(f64::INFINITY), Just(f64::NEG_INFINITY)
    ], 0..50)) {
        let mut v = values.clone();
        let (repaired, substituted) = sanitize(&mut v);
        prop_assert!(v.iter().all(|x| x.is_finite() && *x >= 0.0));
        prop_assert_eq!(repaired, values.iter().filter(|x| !x.is_finite() || **x < 0.0).count());
        prop_assert_eq!(substituted, values.iter().all(|x| !(x.is_finite() && *x > 0.0)));
    }

    #[test]
    fn substitution_is_single_pass(value in "[a-z{} ]{0,30}") {
        let vars = BTreeMap::from([("a", value.clone()), ("b", "{{a}}".to_string())]);
        prop_assert_eq!(render("<{{a}}|{{b}}>", &vars).unwrap(), format!("<{value}|{{{{a}}}}>"));
    }

    #[test]
    fn rendered_templates_parse_back(pick in 0usize..6, raw in prop::collection::vec(0.0f64..1.0, 3)) {
        let id = TemplateId::ALL[pick];
        let overrides: Vec<(&str, f64)> = id.params().iter().zip(&raw)
            .map(|(p, &u)| (p.name, p.min + u * (p.max - p.min)))
            .collect();
        let doc = TemplateDocument::new(id, &overrides).unwrap();
        let art = HeuristicArtifact::new("a described heuristic", Dialect::Template, doc.to_text(), id.signature_kind());
        let problem = id.problems()[0];
        let parsed = parse_response(&art.render("python"), &ParseContext { problem, code_dialect: "python" }).unwrap();
        prop_assert_eq!(&parsed, &art);
        prop_assert_eq!(TemplateDocument::parse(&parsed.payload).unwrap(), doc);
    }

    #[test]
    fn config_round_trips(budget in 10u64..5000, n_init in 1usize..10, cycle in 1u64..6, l0 in 0.01f64..2.0, seed in any::<u64>()) {
        let mut cfg = RunConfig::default();
        cfg.problem = Problem::Tsp;
        cfg.seed = seed >> 1;
        cfg.search.budget = budget;
        cfg.search.n_init = n_init;
        cfg.search.thinking_cycle = cycle;
        cfg.search.lambda0 = l0;
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
