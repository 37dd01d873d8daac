use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nodecon::checkpoint::Checkpoint;
use nodecon::dpp::{build_kernel, greedy_map, sample_kdpp, Bandwidth};
use nodecon::encoder::{readout, xavier_init, AdamConfig, AdamState, EncoderDims};
use nodecon::graph::{generate_sbm, induced_subgraph, k_hop_neighbors, Graph, NormalizedAdj, SbmParams, Splits};
use nodecon::objective::{contrastive_loss, negative_weights};
use nodecon::pipeline::TrainConfig;
use nodecon::sampling::{
    filter_transfer, init_contrast_sets, mix_pair, mixup_augment, random_walk, train_filter_heads, HeadConfig,
    PositiveSource,
};

fn graph_strategy() -> impl Strategy<Value = Graph> {
    (1usize..14, any::<u64>(), 0.0f64..1.0).prop_map(|(n, seed, p)| {
        use rand::Rng;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (a..n).map(move |b| (a, b)))
            .filter(|_| r.random_bool(p))
            .collect();
        let x = Array2::from_shape_fn((n, 3), |_| r.random_range(-1.0..1.0));
        let labels = (0..n).map(|i| i % 2).collect();
        Graph::new(n, edges, x, labels, Splits::default()).unwrap()
    })
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_edges_are_canonical(g in graph_strategy()) {
        for w in g.edges().windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        for &(a, b) in g.edges() {
            prop_assert!(a < b);
            prop_assert!(g.has_edge(b, a));
        }
        let degree_sum: usize = (0..g.num_nodes()).map(|v| g.degree(v)).sum();
        prop_assert_eq!(degree_sum, 2 * g.num_edges());
    }

    #[test]
    fn normalized_adjacency_is_symmetric_with_unit_row_scale(g in graph_strategy()) {
        let a = NormalizedAdj::from_edges(g.num_nodes(), g.edges()).unwrap();
        let v = a.values();
        for i in 0..g.num_nodes() {
            prop_assert!((v[[i, i]] - 1.0 / (1.0 + g.degree(i) as f64)).abs() < 1e-15);
            for j in 0..g.num_nodes() {
                prop_assert_eq!(v[[i, j]], v[[j, i]]);
                prop_assert!(v[[i, j]] >= 0.0 && v[[i, j]] <= 1.0);
            }
        }
    }

    #[test]
    fn khop_grows_with_k_and_contains_anchor(g in graph_strategy(), v in 0usize..14, k in 0usize..4) {
        let v = v % g.num_nodes();
        let near = k_hop_neighbors(&g, v, k);
        let far = k_hop_neighbors(&g, v, k + 1);
        prop_assert!(near.binary_search(&v).is_ok());
        prop_assert!(near.iter().all(|x| far.binary_search(x).is_ok()));
        if k == 0 {
            prop_assert_eq!(near, vec![v]);
        }
    }

    #[test]
    fn walks_stay_connected_and_views_keep_all_edges(g in graph_strategy(), v in 0usize..14, steps in 0usize..30, seed in any::<u64>()) {
        let v = v % g.num_nodes();
        let walk = random_walk(&g, v, steps, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(walk[0], v);
        prop_assert!(walk.len() <= steps + 1);
        let reach = k_hop_neighbors(&g, v, g.num_nodes());
        prop_assert!(walk.iter().all(|x| reach.binary_search(x).is_ok()));

        let view = induced_subgraph(&g, &walk, v).unwrap();
        prop_assert_eq!(view.local_to_global.clone(), walk.clone());
        let expected = g
            .edges()
            .iter()
            .filter(|(a, b)| walk.contains(a) && walk.contains(b))
            .count();
        prop_assert_eq!(view.local_edges.len(), expected);
        for &(a, b) in &view.local_edges {
            prop_assert!(g.has_edge(view.local_to_global[a], view.local_to_global[b]));
        }
    }

    #[test]
    fn contrast_sets_partition_the_nodes(g in graph_strategy(), v in 0usize..14, k in 0usize..3) {
        let v = v % g.num_nodes();
        let khop = k_hop_neighbors(&g, v, k);
        let table = g.features().clone();
        let sets = init_contrast_sets(v, g.num_nodes(), &khop, table.view());
        let mut seen: Vec<usize> = sets.positives.iter().filter_map(|p| p.node).collect();
        seen.extend(&sets.negatives);
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..g.num_nodes()).collect::<Vec<_>>());
        prop_assert_eq!(sets.count(PositiveSource::SelfView), 1);
        prop_assert_eq!(sets.positives[0].node, Some(v));
    }

    #[test]
    fn transfer_keeps_the_partition(g in graph_strategy(), v in 0usize..14, alpha in 0.0f64..3.0) {
        let v = v % g.num_nodes();
        let khop = k_hop_neighbors(&g, v, 1);
        let table = g.features().clone();
        let sets = init_contrast_sets(v, g.num_nodes(), &khop, table.view());
        prop_assume!(!sets.negatives.is_empty());
        let pos = sets.positive_embeddings();
        let negs: Vec<_> = sets.negatives.iter().map(|&j| table.row(j)).collect();
        let heads = train_filter_heads(&pos, &negs, &HeadConfig { steps: 20, ..HeadConfig::default() }).unwrap();
        let before = sets.negatives.clone();
        let (after, records) = filter_transfer(&heads, sets, table.view(), alpha, &khop);
        prop_assert_eq!(after.count(PositiveSource::Transferred), records.len());
        prop_assert_eq!(after.negatives.len() + records.len(), before.len());
        for r in &records {
            prop_assert!(r.ratio > alpha);
            prop_assert!(before.contains(&r.node));
            prop_assert!(khop.binary_search(&r.node).is_err());
            prop_assert!(!after.negatives.contains(&r.node));
        }
    }

    #[test]
    fn mixup_points_lie_on_segments(a in matrix(1, 5), b in matrix(1, 5), lambda in 0.0f64..=1.0) {
        let (a, b) = (a.row(0).to_owned(), b.row(0).to_owned());
        let m = mix_pair(a.view(), b.view(), lambda);
        for i in 0..5 {
            let (lo, hi) = (a[i].min(b[i]), a[i].max(b[i]));
            prop_assert!(m[i] >= lo - 1e-12 && m[i] <= hi + 1e-12);
        }
    }

    #[test]
    fn mixup_keeps_originals_and_adds_count(x in matrix(4, 3), count in 0usize..10, seed in any::<u64>()) {
        let rows: Vec<Array1<f64>> = x.outer_iter().map(|r| r.to_owned()).collect();
        let out = mixup_augment(&rows, count, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(out.len(), rows.len() + count);
        prop_assert_eq!(&out[..rows.len()], &rows[..]);
        for p in &out[rows.len()..] {
            for c in 0..3 {
                let col = x.column(c);
                let lo = col.iter().cloned().fold(f64::MAX, f64::min);
                let hi = col.iter().cloned().fold(f64::MIN, f64::max);
                prop_assert!(p[c] >= lo - 1e-12 && p[c] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn weights_are_nonnegative_and_average_one(q in matrix(1, 4), negs in matrix(6, 4), tau_w in 0.1f64..5.0) {
        let views: Vec<_> = negs.outer_iter().collect();
        let w = negative_weights(q.row(0), &views, tau_w).unwrap();
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 6.0).abs() < 1e-9);
    }

    #[test]
    fn infonce_is_nonnegative_and_finite(q in matrix(1, 4), k in matrix(1, 4), negs in matrix(5, 4), tau in 0.05f64..4.0) {
        let views: Vec<_> = negs.outer_iter().collect();
        let t = contrastive_loss(q.row(0), k.row(0), &views, &[1.0; 5], tau).unwrap();
        prop_assert!(t.loss.is_finite() && t.loss >= 0.0);
    }

    #[test]
    fn readout_is_in_unit_interval_and_monotone(h in matrix(4, 3), bump in 0.0f64..2.0) {
        let base = readout(h.view()).unwrap().h;
        prop_assert!(base.iter().all(|&x| x > 0.0 && x < 1.0));
        let raised = readout((&h + bump).view()).unwrap().h;
        prop_assert!(base.iter().zip(raised.iter()).all(|(a, b)| b >= a));
    }

    #[test]
    fn dpp_draws_are_distinct_sorted_and_sized(x in matrix(8, 3), m in 0usize..=8, seed in any::<u64>()) {
        let kernel = build_kernel(x.view(), (0..8).collect(), Bandwidth::Median).unwrap();
        match sample_kdpp(&kernel, m, &mut ChaCha8Rng::seed_from_u64(seed)) {
            Ok(s) => {
                prop_assert_eq!(s.len(), m);
                prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(s.iter().all(|&i| i < 8));
            }
            Err(nodecon::Error::RankDeficient { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
        let g = greedy_map(&kernel, m).unwrap();
        prop_assert!(g.len() <= m);
        let mut sorted = g.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), g.len());
    }

    #[test]
    fn sbm_is_a_pure_function_of_seed(seed in any::<u64>(), p_in in 0.0f64..=1.0, p_out in 0.0f64..=1.0) {
        let params = SbmParams { block_sizes: vec![4, 5], p_in, p_out, feature_dim: 3, feature_separation: 2.0 };
        let a = generate_sbm(&params, seed).unwrap();
        let b = generate_sbm(&params, seed).unwrap();
        prop_assert_eq!(a.edges(), b.edges());
        prop_assert_eq!(a.features(), b.features());
        prop_assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn checkpoint_bytes_round_trip(i in 1usize..5, h in 1usize..5, o in 1usize..5, seed in any::<u64>(), epoch in any::<u64>()) {
        let dims = EncoderDims::new(i, h, o);
        let ck = Checkpoint {
            params: xavier_init(dims, seed).unwrap(),
            adam: AdamState::new(dims, AdamConfig::default()),
            config_hash: format!("{seed:x}"),
            epoch,
        };
        prop_assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).unwrap(), ck);
    }

    #[test]
    fn config_file_round_trip(epochs in 0usize..5000, alpha in 0.01f64..10.0, seed in any::<u64>(), dropout in 0.0f64..0.99) {
        let cfg = TrainConfig { epochs, alpha, seed, dropout, ..TrainConfig::default() };
        let mut back = TrainConfig::desk();
        back.apply_text(&cfg.to_file_string(), std::path::Path::new("round-trip")).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}
