//! GF(2) kernels and code constructions against unpacked enumeration oracles.

mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qldpc_core::codes::*;
use qldpc_core::{BinMatrix, BinVector, ClassicalCode, CssCode};

fn random_matrix(rows: usize, cols: usize, density: f64, rng: &mut ChaCha8Rng) -> BinMatrix {
    BinMatrix::from_fn(rows, cols, |_, _| rng.random_bool(density))
}

fn hgp129() -> CssCode {
    let (a, b) = bch_seed_codes();
    build_hgp(&a, &b).unwrap()
}

/// All four code invariants, checked with unpacked arithmetic.
fn assert_css_invariants(code: &CssCode) {
    assert_eq!(code.hx.cols(), code.n);
    assert_eq!(code.hz.cols(), code.n);
    let prod = naive_mul(&dense(&code.hx), &dense(&code.hz.transpose()));
    assert!(prod.iter().flatten().all(|&b| b == 0));
    for (m, name) in [(&code.hx, "hx"), (&code.hz, "hz")] {
        for r in 0..m.rows() {
            assert!(m.row_weight(r) <= code.row_bound, "{name} row {r}");
        }
        assert!(m.column_weights().iter().all(|&w| w <= code.col_bound));
    }
}

fn assert_k_by_enumeration(code: &CssCode) {
    assert_eq!(code.k, code.n - enum_rank(&code.hx) - enum_rank(&code.hz));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn products_match_naive(r in 1usize..=64, k in 1usize..=64, c in 1usize..=64, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_matrix(r, k, 0.5, &mut rng);
        let b = random_matrix(k, c, 0.3, &mut rng);
        prop_assert_eq!(dense(&a.mat_mul(&b).unwrap()), naive_mul(&dense(&a), &dense(&b)));
        let x = BinVector::from_bools((0..k).map(|_| rng.random_bool(0.5)));
        prop_assert_eq!(bits(&a.mat_vec(&x).unwrap()), naive_mat_vec(&dense(&a), &bits(&x)));
    }

    #[test]
    fn rank_is_transpose_invariant(r in 1usize..=40, c in 1usize..=40, d in 0.05f64..0.6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_matrix(r, c, d, &mut rng);
        prop_assert_eq!(a.rank(), a.transpose().rank());
    }

    #[test]
    fn rank_and_membership_match_enumeration(r in 1usize..=12, c in 1usize..=16, d in 0.1f64..0.6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_matrix(r, c, d, &mut rng);
        let span = rowspace(&a);
        prop_assert_eq!(1usize << a.rank(), span.len());
        for _ in 0..20 {
            let x = BinVector::from_bools((0..c).map(|_| rng.random_bool(0.5)));
            prop_assert_eq!(a.in_rowspace(&x).unwrap(), span.contains(&bits(&x)));
        }
        // Members drawn from the span itself.
        for member in span.iter().take(20) {
            prop_assert!(a.in_rowspace(&to_vector(member)).unwrap());
        }
    }

    #[test]
    fn rref_is_idempotent(r in 1usize..=30, c in 1usize..=30, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_matrix(r, c, 0.3, &mut rng);
        let mut order: Vec<usize> = (0..c).collect();
        for i in (1..c).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let once = a.rref(&order).unwrap();
        let twice = once.reduced.rref(&order).unwrap();
        prop_assert_eq!(&once.pivots, &twice.pivots);
        prop_assert_eq!(once.rank, a.rank());
        // Same row space before and after elimination.
        prop_assert_eq!(rowspace(&once.reduced.select_rows(&(0..once.rank.min(12)).collect::<Vec<_>>())).len(),
            1usize << once.rank.min(12));
    }

    #[test]
    fn solve_random_consistent_systems(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_matrix(10, 14, 0.4, &mut rng);
        let x0 = BinVector::from_bools((0..14).map(|_| rng.random_bool(0.5)));
        let b = a.mat_vec(&x0).unwrap();
        let order: Vec<usize> = (0..14).collect();
        let pivots = a.rref(&order).unwrap().pivots;
        let x = a.solve_with_pivots(&b, &pivots).unwrap();
        prop_assert_eq!(naive_mat_vec(&dense(&a), &bits(&x)), bits(&b));
        prop_assert!(x.iter_ones().all(|i| pivots.contains(&i)));
    }

    #[test]
    fn circulants_commute_with_transpose(len in 1usize..=40, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = BinVector::from_bools((0..len).map(|_| rng.random_bool(0.4)));
        let c = BinMatrix::circulant(&v).unwrap();
        let ct = c.transpose();
        prop_assert_eq!(dense(&c.mat_mul(&ct).unwrap()), dense(&ct.mat_mul(&c).unwrap()));
        prop_assert_eq!(bits(&c.row(0)), bits(&v));
    }

    #[test]
    fn hgp_of_random_seeds_is_css(seed in any::<u64>(), m1 in 1usize..=4, n1 in 2usize..=6, m2 in 1usize..=4, n2 in 2usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c1 = ClassicalCode::from_parity_check(random_matrix(m1, n1, 0.5, &mut rng));
        let c2 = ClassicalCode::from_parity_check(random_matrix(m2, n2, 0.5, &mut rng));
        let code = build_hgp(&c1, &c2).unwrap();
        prop_assert_eq!(code.n, n1 * n2 + m1 * m2);
        prop_assert_eq!(code.hx.shape(), (m1 * n2, code.n));
        prop_assert_eq!(code.hz.shape(), (n1 * m2, code.n));
        assert_css_invariants(&code);
        if code.hx.rows() <= 14 && code.hz.rows() <= 14 {
            assert_k_by_enumeration(&code);
        }
        prop_assert_eq!(build_hgp(&c1, &c2).unwrap(), code);
    }

    #[test]
    fn small_bicycles_are_css(seed in 0u64..200) {
        let code = build_bicycle(8, 2, 2, seed).unwrap();
        prop_assert_eq!((code.n, code.k), (8, 2));
        assert_css_invariants(&code);
        assert_k_by_enumeration(&code);
        prop_assert_eq!(build_bicycle(8, 2, 2, seed).unwrap(), code);
    }

    #[test]
    fn tanner_graph_round_trips(seed in any::<u64>(), rows in 1usize..=20, cols in 1usize..=30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hx = random_matrix(rows, cols, 0.3, &mut rng);
        let code = CssCode::new("x-only", hx, BinMatrix::zeros(0, cols), Construction::Explicit).unwrap();
        let g = code.tanner_graph();
        prop_assert_eq!(dense(&g.to_matrix()), dense(&code.check_matrix()));
        prop_assert_eq!(g.edge_count(), code.hx.count_ones());
    }
}

#[test]
fn kron_examples() {
    assert_eq!(BinMatrix::identity(2).kron(&BinMatrix::identity(3)), BinMatrix::identity(6));
    let (a, _) = bch_seed_codes();
    assert_eq!(a.h.kron(&BinMatrix::identity(15)).shape(), (45, 105));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b = random_matrix(4, 5, 0.5, &mut rng);
    assert_eq!(BinMatrix::identity(1).kron(&b), b);
}

#[test]
fn hamming_rowspace_excludes_all_ones() {
    let h = BinMatrix::from_rows(&[[1u8, 0, 1, 0, 1, 0, 1], [0, 1, 1, 0, 0, 1, 1], [0, 0, 0, 1, 1, 1, 1]]);
    let span = rowspace(&h);
    assert_eq!(span.len(), 8);
    let ones = BinVector::from_bits(&[1; 7]);
    assert!(!span.contains(&bits(&ones)));
    assert!(!h.in_rowspace(&ones).unwrap());
    assert!(h.in_rowspace(&BinVector::zeros(7)).unwrap());
}

#[test]
fn bch_seeds_match_enumeration() {
    let (a, b) = bch_seed_codes();
    assert_eq!((a.h.shape(), enum_rank(&a.h)), ((3, 7), 3));
    assert_eq!((b.h.shape(), enum_rank(&b.h)), ((8, 15), 8));
    let min_weight = |h: &BinMatrix| {
        let n = h.cols();
        let dh = dense(h);
        all_solutions(&dh, n, &vec![0; h.rows()])
            .iter()
            .map(|x| x.iter().filter(|&&b| b == 1).count())
            .filter(|&w| w > 0)
            .min()
            .unwrap()
    };
    assert_eq!(min_weight(&a.h), 3);
    assert_eq!(min_weight(&b.h), 5);
}

#[test]
fn hgp_129_28() {
    let code = hgp129();
    assert_eq!((code.n, code.k), (129, 28));
    assert_eq!(code.hx.shape(), (45, 129));
    assert_eq!(code.hz.shape(), (56, 129));
    assert_eq!(code.hx.rank() + code.hz.rank(), 101);
    assert_css_invariants(&code);
    let g = code.tanner_graph();
    assert_eq!((g.var_count, g.check_count), (258, 101));
    assert_eq!(g.edge_count(), code.hx.count_ones() + code.hz.count_ones());
    assert_eq!(g.component_count(), 2);
    assert_eq!(dense(&g.to_matrix()), dense(&code.check_matrix()));
}

#[test]
fn hgp_of_repetition_code() {
    let rep = ClassicalCode::from_parity_check(BinMatrix::from_rows(&[[1u8, 1, 0], [0, 1, 1]]));
    let code = build_hgp(&rep, &rep).unwrap();
    assert_eq!(code.n, 13);
    assert_css_invariants(&code);
    assert_k_by_enumeration(&code);
}

#[test]
fn bicycle_256_32() {
    let code = build_bicycle(256, 32, 8, 7).unwrap();
    assert_eq!((code.n, code.k), (256, 32));
    assert_css_invariants(&code);
    let Construction::Bicycle { support, deleted_rows, .. } = &code.construction else {
        panic!("wrong construction tag");
    };
    assert_eq!(support.len(), 8);
    assert_eq!(deleted_rows.len(), 16);
    let v = BinVector::from_bools((0..128).map(|i| support.contains(&i)));
    let c = BinMatrix::circulant(&v).unwrap();
    let h_o = c.hstack(&c.transpose()).unwrap();
    assert!((0..128).all(|r| h_o.row_weight(r) == 16));
    assert!(h_o.mat_mul(&h_o.transpose()).unwrap().is_zero());
    let keep: Vec<usize> = (0..128).filter(|r| !deleted_rows.contains(r)).collect();
    assert_eq!(h_o.select_rows(&keep), code.hx);
    assert_eq!(code.hx, code.hz);
    assert_eq!(code.tanner_graph().component_count(), 2);
}

#[test]
fn bicycle_random_deletion_also_valid() {
    let code = build_bicycle_with(256, 32, 8, 7, RowDeletion::Random).unwrap();
    assert_eq!((code.n, code.k), (256, 32));
    assert_css_invariants(&code);
}
