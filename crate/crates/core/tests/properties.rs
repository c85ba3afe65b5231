use flowpath_core::analysis::{
    average_distance, coverage_curve, distance_matrix, nearest_k, topk_coverage, ConfusionMatrix,
};
use flowpath_core::data::{augment_noise, Dataset, NoiseConfig};
use flowpath_core::nn::{Activation, DenseLayer, Layer, NetworkDescriptor};
use flowpath_core::pathway::{extract_mlp_pathways, ClassPathway, PathwayConfig, PathwayLayer, PathwaySet};
use flowpath_core::pruning::{apply_prune, node_importance, PruneMask};
use flowpath_core::train::evaluate;
use proptest::prelude::*;

fn quarter() -> impl Strategy<Value = f64> {
    (-8i32..=8).prop_map(|v| v as f64 / 4.0)
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(quarter(), cols), rows)
}

/// Dense net with two hidden layers of the given widths.
fn mlp() -> impl Strategy<Value = (Vec<Vec<Vec<f64>>>, NetworkDescriptor)> {
    (1usize..=4, 1usize..=5, 1usize..=5, 2usize..=4)
        .prop_flat_map(|(i, h1, h2, o)| (matrix(i, h1), matrix(h1, h2), matrix(h2, o)))
        .prop_map(|(a, b, c)| {
            let mats = vec![a, b, c];
            (mats.clone(), build(&mats))
        })
}

fn build(mats: &[Vec<Vec<f64>>]) -> NetworkDescriptor {
    let last = mats.len() - 1;
    let layers = mats
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let act = if k == last { Activation::Softmax } else { Activation::Relu };
            Layer::Dense(DenseLayer::from_rows(m, vec![0.0; m[0].len()], act).unwrap())
        })
        .collect();
    NetworkDescriptor::new(vec![mats[0].len()], layers, mats[last][0].len()).unwrap()
}

fn pathway_set(n: usize, width: usize) -> impl Strategy<Value = PathwaySet> {
    prop::collection::vec(prop::collection::vec(0.0f64..3.0, width), n).prop_map(move |rows| {
        let pathways = rows.into_iter().enumerate().map(|(c, v)| ClassPathway::new(c, vec![v])).collect();
        PathwaySet::new(pathways, vec![PathwayLayer::unknown(width)]).unwrap()
    })
}

fn confusion(n: usize) -> impl Strategy<Value = ConfusionMatrix> {
    prop::collection::vec(prop::collection::vec(0u64..50, n), n).prop_map(|mut rows| {
        // guarantee at least one error
        rows[0][1] += 1;
        ConfusionMatrix::from_rows(rows).unwrap()
    })
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #[test]
    fn scaling_a_class_column_scales_its_pathway((mats, net) in mlp(), exp in -3i32..=3, pick in 0usize..4) {
        let class = pick % net.class_count();
        let c = 2f64.powi(exp);
        let mut scaled = mats.clone();
        for row in scaled.last_mut().unwrap() {
            row[class] *= c;
        }
        let cfg = PathwayConfig::default();
        let before = extract_mlp_pathways(&net, &cfg).unwrap();
        let after = extract_mlp_pathways(&build(&scaled), &cfg).unwrap();
        for k in 0..net.class_count() {
            let factor = if k == class { c } else { 1.0 };
            for (a, b) in before.get(k).layers().iter().flatten().zip(after.get(k).layers().iter().flatten()) {
                prop_assert_eq!(a * factor, *b);
            }
        }
    }

    #[test]
    fn zero_node_contributes_nothing_upstream((_, net) in mlp(), pick in 0usize..4) {
        let class = pick % net.class_count();
        let cfg = PathwayConfig::default();
        let set = extract_mlp_pathways(&net, &cfg).unwrap();
        let second = &set.get(class).layers()[1];
        let zero = second.iter().position(|v| *v == 0.0);
        prop_assume!(zero.is_some() && second.len() > 1);
        let mut mask = PruneMask::empty();
        mask.insert(1, [zero.unwrap()]);
        let reduced = extract_mlp_pathways(&apply_prune(&net, &mask).unwrap(), &cfg).unwrap();
        prop_assert_eq!(&reduced.get(class).layers()[0], &set.get(class).layers()[0]);
    }

    #[test]
    fn extraction_is_repeatable_and_non_negative((_, net) in mlp()) {
        let cfg = PathwayConfig::default();
        let a = extract_mlp_pathways(&net, &cfg).unwrap();
        prop_assert_eq!(&a, &extract_mlp_pathways(&net, &cfg).unwrap());
        prop_assert!(a.pathways().iter().flat_map(|p| p.layers().iter().flatten()).all(|v| *v >= 0.0));
    }

    #[test]
    fn distance_matrices_are_metric(set in pathway_set(6, 5)) {
        let d = distance_matrix(&set, &PathwayConfig::default()).unwrap();
        for i in 0..6 {
            prop_assert_eq!(d.get(i, i), 0.0);
            for j in 0..6 {
                prop_assert_eq!(d.get(i, j), d.get(j, i));
                prop_assert!(d.get(i, j) >= 0.0);
                for k in 0..6 {
                    prop_assert!(d.get(i, k) <= d.get(i, j) + d.get(j, k) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn coverage_is_monotone_and_complete(set in pathway_set(5, 4), c in confusion(5)) {
        let d = distance_matrix(&set, &PathwayConfig::default()).unwrap();
        let curve = coverage_curve(&d, &c).unwrap();
        for pair in curve.windows(2) {
            prop_assert!(pair[0].fraction <= pair[1].fraction);
        }
        prop_assert_eq!(curve.last().unwrap().fraction, 1.0);
        prop_assert!(curve.iter().all(|r| (0.0..=1.0).contains(&r.fraction)));
    }

    #[test]
    fn relabeling_is_equivariant(set in pathway_set(6, 4), c in confusion(6), perm in permutation(6), k in 1usize..6) {
        let d = distance_matrix(&set, &PathwayConfig::default()).unwrap();
        let (dp, cp) = (d.permuted(&perm), c.permuted(&perm));
        let avg = average_distance(&d).unwrap();
        let avg_p = average_distance(&dp).unwrap();
        for i in 0..6 {
            prop_assert!((avg[i] - avg_p[perm[i]]).abs() < 1e-12);
            let mut mapped: Vec<usize> = nearest_k(&d, i, k).iter().map(|&j| perm[j]).collect();
            let mut direct = nearest_k(&dp, perm[i], k);
            mapped.sort_unstable();
            direct.sort_unstable();
            prop_assert_eq!(mapped, direct);
        }
        let a = topk_coverage(&d, &c, k).unwrap();
        let b = topk_coverage(&dp, &cp, k).unwrap();
        prop_assert_eq!(a.covered, b.covered);
        prop_assert_eq!(a.fraction, b.fraction);
    }

    #[test]
    fn importance_is_additive(set in pathway_set(4, 6), pick in 0usize..4, exp in -2i32..=2) {
        let c = 2f64.powi(exp);
        let imp = node_importance(&set).unwrap();
        let scaled: Vec<ClassPathway> = set
            .pathways()
            .iter()
            .map(|p| {
                let f = if p.class_id() == pick { c } else { 1.0 };
                ClassPathway::new(p.class_id(), p.layers().iter().map(|l| l.iter().map(|v| v * f).collect()).collect())
            })
            .collect();
        let imp2 = node_importance(&PathwaySet::new(scaled, set.layout().to_vec()).unwrap()).unwrap();
        for (node, (a, b)) in imp.layer(0).iter().zip(imp2.layer(0)).enumerate() {
            let expected = a + (c - 1.0) * set.get(pick).layers()[0][node];
            prop_assert!((b - expected).abs() <= 1e-12 * (1.0 + b.abs()));
            prop_assert!(*b >= 0.0);
        }
    }

    #[test]
    fn noise_is_seeded_and_clipped(pixels in prop::collection::vec(0.0f64..=1.0, 12), seed in any::<u64>(), sigma in 0.0f64..2.0) {
        let ds = Dataset::new(pixels, vec![0, 1, 2], 4, 3).unwrap();
        let cfg = NoiseConfig { sigma, rng_seed: seed, keep_original: false };
        let a = augment_noise(&ds, &cfg).unwrap();
        prop_assert_eq!(&a, &augment_noise(&ds, &cfg).unwrap());
        prop_assert!(a.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert_eq!(a.labels(), ds.labels());
    }

    #[test]
    fn confusion_cells_account_for_every_sample((_, net) in mlp(), seed in 0u64..1000) {
        let n = 20;
        let pixels: Vec<f64> = (0..n * net.input_len()).map(|i| ((i as u64 * 2654435761 + seed) % 997) as f64 / 996.0).collect();
        let labels: Vec<usize> = (0..n).map(|i| (i + seed as usize) % net.class_count()).collect();
        let ds = Dataset::new(pixels, labels.clone(), net.input_len(), net.class_count()).unwrap();
        let eval = evaluate(&net, &ds).unwrap();
        prop_assert_eq!(eval.confusion.total(), n as u64);
        for class in 0..net.class_count() {
            let expected = labels.iter().filter(|&&l| l == class).count() as u64;
            prop_assert_eq!(eval.confusion.row_sum(class), expected);
        }
    }
}

#[test]
fn zero_sigma_is_identity_and_full_set_doubles() {
    let ds = Dataset::new(vec![0.0, 0.95, 0.5, 1.0], vec![0, 1], 2, 2).unwrap();
    let same = augment_noise(&ds, &NoiseConfig { sigma: 0.0, rng_seed: 3, keep_original: false }).unwrap();
    assert_eq!(same, ds);
    let both = augment_noise(&ds, &NoiseConfig { sigma: 0.1, rng_seed: 3, keep_original: true }).unwrap();
    assert_eq!(both.len(), 4);
}
