mod common;

use common::{enumerate_ctc, log_softmax, random_matrix, rng};
use meta_reinit::ctc::{collapse, ctc_bruteforce, ctc_nll, extend_with_blanks, greedy_decode, min_frames};
use meta_reinit::nn::Matrix;
use meta_reinit::Error;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn forward_backward_matches_enumeration() {
    let mut r = rng(42);
    let mut checked = 0;
    while checked < 150 {
        let t = r.random_range(1..=6);
        let v = r.random_range(2..=4);
        let l = r.random_range(1..=3);
        let labels: Vec<u32> = (0..l).map(|_| r.random_range(1..v as u32)).collect();
        let lp = log_softmax(&random_matrix(&mut r, t, v, 3.0));
        match enumerate_ctc(&lp, &labels) {
            Some(expect) => {
                let (nll, _) = ctc_nll(&lp, &labels).unwrap();
                assert!(
                    (nll - expect).abs() <= 1e-9,
                    "T={t} V={v} {labels:?}: {nll} vs {expect}"
                );
                let bf = ctc_bruteforce(&lp, &labels).unwrap();
                assert!((bf - expect).abs() <= 1e-9);
                checked += 1;
            }
            None => {
                assert!(t < min_frames(&labels));
                assert!(matches!(ctc_nll(&lp, &labels), Err(Error::InfeasibleLabels { .. })));
            }
        }
    }
}

#[test]
fn gradient_is_negative_occupancy() {
    // occupancies of one frame sum to one, so each gradient row sums to -1
    let mut r = rng(9);
    for _ in 0..20 {
        let lp = log_softmax(&random_matrix(&mut r, 6, 4, 2.0));
        let (_, g) = ctc_nll(&lp, &[1, 2, 1]).unwrap();
        for row in 0..g.rows() {
            let s: f64 = g.row(row).iter().sum();
            assert!((s + 1.0).abs() < 1e-12);
            assert!(g.row(row).iter().all(|&x| x <= 1e-15));
        }
    }
}

#[test]
fn enumeration_bound_is_enforced() {
    let lp = log_softmax(&Matrix::zeros(11, 4));
    assert!(matches!(ctc_bruteforce(&lp, &[1]), Err(Error::EnumerationBound { .. })));
}

#[test]
fn greedy_decoding_examples() {
    let rows = |path: &[usize]| {
        let mut m = Matrix::zeros(path.len(), 3);
        for (t, &c) in path.iter().enumerate() {
            m.set(t, c, 5.0);
        }
        log_softmax(&m)
    };
    assert_eq!(greedy_decode(&rows(&[1, 1, 0, 1, 2, 2])), vec![1, 1, 2]);
    assert_eq!(greedy_decode(&rows(&[0, 0, 0])), Vec::<u32>::new());
}

proptest! {
    #[test]
    fn collapse_has_no_blanks_or_adjacent_repeats(path in proptest::collection::vec(0u32..4, 0..12)) {
        let c = collapse(&path);
        prop_assert!(c.iter().all(|&x| x != 0));
        prop_assert!(c.len() <= path.len());
    }

    #[test]
    fn blank_extended_labels_collapse_back(labels in proptest::collection::vec(1u32..4, 0..6)) {
        prop_assert_eq!(collapse(&extend_with_blanks(&labels)), labels);
    }

    #[test]
    fn nll_is_nonnegative(seed in 0u64..500) {
        let mut r = rng(seed);
        let lp = log_softmax(&random_matrix(&mut r, 5, 3, 2.0));
        let (nll, g) = ctc_nll(&lp, &[2, 1]).unwrap();
        prop_assert!(nll >= 0.0);
        prop_assert!(g.all_finite());
    }
}
