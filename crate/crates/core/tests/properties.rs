use proptest::prelude::*;

use sfda_core::datasets::{dataset_to_csv, parse_csv_dataset};
use sfda_core::numerics::{dot, softmax_rows};
use sfda_core::objectives::{aad_loss, bnm_loss, mi_loss, BnmVariant};
use sfda_core::{
    make_twin_moons, rotate_dataset, BankMode, Dataset, Domain, Matrix, MemoryBank, MoonsConfig,
};

fn logits(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-4.0f64..4.0, rows * cols)
        .prop_map(move |v| Matrix::new(rows, cols, v).unwrap())
}

#[test]
fn dot_product_on_the_simplex_grid_peaks_at_matching_vertices() {
    // every point of the 3-class simplex on a 0.05 grid
    let steps = 20;
    let mut grid = Vec::new();
    for a in 0..=steps {
        for b in 0..=steps - a {
            let c = steps - a - b;
            grid.push([a as f64, b as f64, c as f64].map(|v| v / steps as f64));
        }
    }
    let (mut max, mut min) = (f64::MIN, f64::MAX);
    let (mut argmax, mut argmin) = ((0, 0), (0, 0));
    for (i, p) in grid.iter().enumerate() {
        for (j, q) in grid.iter().enumerate() {
            let d = dot(p, q);
            if d > max {
                max = d;
                argmax = (i, j);
            }
            if d < min {
                min = d;
                argmin = (i, j);
            }
        }
    }
    assert!((max - 1.0).abs() < 1e-12);
    let (p, q) = (grid[argmax.0], grid[argmax.1]);
    assert_eq!(p, q);
    assert!(p.contains(&1.0));
    assert!(min.abs() < 1e-12);
    assert_eq!(dot(&grid[argmin.0], &grid[argmin.1]), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn batch_order_does_not_change_batch_objectives(
        z in logits(6, 3),
        nb_z in logits(6, 3),
        shift in 1usize..6,
        lambda in 0.0f64..2.0,
    ) {
        let p = softmax_rows(&z).unwrap();
        let nb_all = softmax_rows(&nb_z).unwrap();
        let nb: Vec<Matrix> = (0..6).map(|i| nb_all.select_rows(&[i]).unwrap()).collect();
        let order: Vec<usize> = (0..6).map(|i| (i + shift) % 6).collect();
        let pp = p.select_rows(&order).unwrap();
        let nbp: Vec<Matrix> = order.iter().map(|&i| nb[i].clone()).collect();

        let a = aad_loss(&p, &nb, lambda).unwrap();
        let b = aad_loss(&pp, &nbp, lambda).unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-12);
        for (r, &src) in order.iter().enumerate() {
            for c in 0..3 {
                prop_assert!((b.grad.get(r, c) - a.grad.get(src, c)).abs() < 1e-12);
            }
        }
        prop_assert!((mi_loss(&p).unwrap().value - mi_loss(&pp).unwrap().value).abs() < 1e-12);
        let f = |m: &Matrix| bnm_loss(m, BnmVariant::Nuclear).unwrap().value;
        prop_assert!((f(&p) - f(&pp)).abs() < 1e-9);
    }

    #[test]
    fn relabeling_classes_does_not_change_aad_or_mi(z in logits(5, 4), nb_z in logits(5, 4)) {
        let perm = [2usize, 0, 3, 1];
        let swap = |m: &Matrix| Matrix::from_fn(m.rows(), m.cols(), |r, c| m.get(r, perm[c]));
        let p = softmax_rows(&z).unwrap();
        let nb: Vec<Matrix> = (0..5)
            .map(|i| softmax_rows(&nb_z).unwrap().select_rows(&[i]).unwrap())
            .collect();
        let nbs: Vec<Matrix> = nb.iter().map(swap).collect();
        let a = aad_loss(&p, &nb, 0.7).unwrap().value;
        let b = aad_loss(&swap(&p), &nbs, 0.7).unwrap().value;
        prop_assert!((a - b).abs() < 1e-12);
        let m1 = mi_loss(&p).unwrap().value;
        let m2 = mi_loss(&swap(&p)).unwrap().value;
        prop_assert!((m1 - m2).abs() < 1e-12);
    }

    #[test]
    fn knn_results_are_ordered_and_skip_the_excluded_id(
        feats in prop::collection::vec(-1.0f64..1.0, 40 * 3),
        query in prop::collection::vec(-1.0f64..1.0, 3),
        k in 1usize..8,
        exclude in 0usize..40,
    ) {
        let f = Matrix::new(40, 3, feats).unwrap();
        let p = Matrix::from_fn(40, 2, |_, _| 0.5);
        let mut bank = MemoryBank::new(BankMode::Full, 40, 3, 2).unwrap();
        bank.update(&(0..40).collect::<Vec<_>>(), &f, &p).unwrap();
        let nn = bank.knn(&query, k, Some(exclude)).unwrap();
        prop_assert_eq!(nn.ids.len(), k);
        prop_assert!(!nn.ids.contains(&exclude));
        for w in nn.similarities.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        for (pos, &s) in nn.similarities.iter().enumerate() {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
            prop_assert_eq!(nn.slots[pos], nn.ids[pos]);
        }
    }

    #[test]
    fn rotation_keeps_the_centroid_and_pairwise_distances(seed in 0u64..1000, deg in -180.0f64..180.0) {
        let ds: Dataset = make_twin_moons(&MoonsConfig { n_per_class: 20, seed, ..Default::default() }).unwrap();
        let r = rotate_dataset(&ds, deg).unwrap();
        let (c0, c1) = (ds.centroid(), r.centroid());
        prop_assert!((c0[0] - c1[0]).abs() < 1e-9 && (c0[1] - c1[1]).abs() < 1e-9);
        for i in 0..ds.len() {
            for j in 0..i {
                let d = |m: &Matrix| {
                    let (a, b) = (m.row(i), m.row(j));
                    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
                };
                prop_assert!((d(&ds.x) - d(&r.x)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn csv_round_trip_is_exact(seed in 0u64..1000) {
        let ds: Dataset = make_twin_moons(&MoonsConfig { n_per_class: 15, seed, ..Default::default() }).unwrap();
        let back: Dataset = parse_csv_dataset(&dataset_to_csv(&ds, true), Domain::Source).unwrap();
        prop_assert_eq!(back, ds);
    }
}
