use laminate_forge::laminate::{barycenter, det_expectation, inverse_laminate, replay};
use laminate_forge::matrix::{diag, DiagMatrix};
use laminate_forge::rational::{rat, Rational};
use laminate_forge::sets::{member, Family, Mode, Params, SpectralSetId};
use laminate_forge::staircase_nd::*;
use laminate_forge::StaircaseError;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn a_set(k: usize, i: usize, p: Params) -> SpectralSetId {
    SpectralSetId::a(k, i, Mode::OpenNd, p)
}

fn b_set(k: usize, i: usize, p: Params) -> SpectralSetId {
    SpectralSetId::b(k, i, Mode::OpenNd, p)
}

fn in_any(m: &DiagMatrix, sets: &[SpectralSetId]) -> bool {
    sets.iter().any(|s| member(m, s).unwrap())
}

fn with_s(mut sets: Vec<SpectralSetId>, k: usize, i: usize, p: Params) -> Vec<SpectralSetId> {
    for a in p.s_range() {
        sets.push(SpectralSetId::s(k, i, a, p));
    }
    sets
}

fn all_params() -> Vec<Params> {
    vec![
        Params::new(3, 1, 1).unwrap(),
        Params::new(4, 1, 1).unwrap(),
        Params::new(4, 1, 2).unwrap(),
        Params::new(4, 2, 1).unwrap(),
        Params::new(4, 2, 2).unwrap(),
    ]
}

#[test]
fn split_a_first_step_and_leading_atom() {
    let p = Params::new(3, 1, 1).unwrap();
    let a = diag(&[(1, 2), (1, 2), (1, 1)]);
    let cert = split_a_nd(&a, 1, 1, p).unwrap();
    let s0 = &cert.steps[0];
    assert_eq!((s0.atom_index, s0.position), (0, 1));
    assert_eq!((s0.low.clone(), s0.high.clone()), (rat(1, 3), rat(2, 1)));
    assert_eq!(s0.lambda, rat(9, 10));
    let nu = replay(&cert).unwrap();
    assert_eq!(barycenter(&nu), a);
    let m1 = leading_atom(&cert).unwrap();
    assert_eq!(m1.matrix, diag(&[(1, 3), (1, 3), (1, 1)]));
    assert_eq!(m1.weight, rat(81, 100));
}

#[test]
fn split_a_rejects_non_members() {
    let p = Params::new(3, 1, 1).unwrap();
    let err = split_a_nd(&diag(&[(1, 1), (1, 2), (1, 1)]), 1, 1, p).unwrap_err();
    assert!(matches!(err, StaircaseError::NotInSet { .. }));
}

#[test]
fn split_a_sweep_counters_and_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for p in all_params() {
        for k in 1..4 {
            for i in 1..4 {
                for _ in 0..5 {
                    let a = random_member(&a_set(k, i, p), &mut rng).unwrap();
                    let (cert, counters) = split_a_nd_traced(&a, k, i, p).unwrap();
                    let np = p.reduced();
                    let b = counters[0].b;
                    for c in &counters {
                        assert!(c.beta1 + c.beta2 + c.gamma2 <= np.n - np.m1);
                        assert!(c.beta3 + c.gamma1 + c.gamma3 <= np.n - np.m2 - b);
                        assert_eq!(c.beta1 + c.beta2 + c.beta3 + c.gamma1 + c.gamma2 + c.gamma3, np.n - b);
                    }
                    let nu = replay(&cert).unwrap();
                    assert_eq!(barycenter(&nu), a);
                    let target = with_s(vec![a_set(k + 1, i, p), b_set(k + 1, i, p)], k + 1, i, p);
                    assert!(nu.atoms().iter().all(|x| in_any(&x.matrix, &target)));
                    let m1 = leading_atom(&cert).unwrap();
                    assert!(member(&m1.matrix, &a_set(k + 1, i, p)).unwrap());
                    assert!(a.dist(&m1.matrix).unwrap() <= rat(1, (k * k) as i64));
                    let mut prod = Rational::one();
                    let ord = a.sort_order();
                    for &pos in ord.iter().take(np.n - np.m1) {
                        let s = a.get(pos);
                        prod *= (rat(i as i64 + 1, 1) - s) / (rat(i as i64 + 1, 1) - rat(1, k as i64 + 2));
                    }
                    assert_eq!(m1.weight, prod);
                }
            }
        }
    }
}

#[test]
fn split_b_contract_on_member() {
    let p = Params::new(4, 1, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_member(&b_set(2, 3, p), &mut rng).unwrap();
    let cert = split_b_nd(&a, 2, 3, p).unwrap();
    let nu = replay(&cert).unwrap();
    assert_eq!(barycenter(&nu), a);
    let target = with_s(vec![a_set(2, 4, p), b_set(2, 4, p)], 2, 4, p);
    assert!(nu.atoms().iter().all(|x| in_any(&x.matrix, &target)));
    let m1 = leading_atom(&cert).unwrap();
    assert!(member(&m1.matrix, &b_set(2, 4, p)).unwrap());
    assert_eq!(a.dist(&m1.matrix).unwrap(), Rational::one());
    assert!(a.inverse().dist(&m1.matrix.inverse()).unwrap() <= rat(1, 9));
}

#[test]
fn split_b_sweep_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in all_params() {
        for k in 1..4 {
            for i in 1..4 {
                for _ in 0..5 {
                    let a = random_member(&b_set(k, i, p), &mut rng).unwrap();
                    let nu = replay(&split_b_nd(&a, k, i, p).unwrap()).unwrap();
                    assert_eq!(barycenter(&nu), a);
                    let target = with_s(vec![a_set(k, i + 1, p), b_set(k, i + 1, p)], k, i + 1, p);
                    assert!(nu.atoms().iter().all(|x| in_any(&x.matrix, &target)));
                }
            }
        }
    }
}

#[test]
fn split_s_contract() {
    let p = Params::new(4, 1, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (k, i) in [(1, 1), (2, 3), (4, 2)] {
        let a = random_member(&SpectralSetId::s(k, i, 2, p), &mut rng).unwrap();
        let nu = replay(&split_s_nd(&a, k, i, 2, p).unwrap()).unwrap();
        assert_eq!(barycenter(&nu), a);
        let target = with_s(vec![a_set(k + 1, i + 1, p), b_set(k + 1, i + 1, p)], k + 1, i + 1, p);
        assert!(nu.atoms().iter().all(|x| in_any(&x.matrix, &target)));
        assert!(inverse_transport_cost(&nu, &a) <= rat(8, 1));
    }
    let q = Params::new(4, 1, 2).unwrap();
    let err = split_s_nd(&DiagMatrix::identity(4), 1, 1, 2, q).unwrap_err();
    assert!(matches!(err, StaircaseError::UnsupportedRegime(_)));
}

#[test]
fn push_a_row_support() {
    let p = Params::new(4, 1, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = random_member(&a_set(2, 1, p), &mut rng).unwrap();
    let nu = replay(&push_a_row_nd(&a, 1, 2, p).unwrap()).unwrap();
    assert_eq!(barycenter(&nu), a);
    let mut target = vec![b_set(3, 3, p)];
    for i in 1..=3 {
        target.push(a_set(3, i, p));
        target = with_s(target, 3, i, p);
    }
    assert!(nu.atoms().iter().all(|x| in_any(&x.matrix, &target)));
}

#[test]
fn push_b_row_support() {
    let p = Params::new(4, 1, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = random_member(&b_set(1, 2, p), &mut rng).unwrap();
    let nu = replay(&push_b_row_nd(&a, 1, 2, p).unwrap()).unwrap();
    assert_eq!(barycenter(&nu), a);
    let mut target = vec![a_set(3, 3, p)];
    for i in 1..=3 {
        target.push(b_set(i, 3, p));
        target = with_s(target, i, 3, p);
    }
    assert!(nu.atoms().iter().all(|x| in_any(&x.matrix, &target)));
}

#[test]
fn reduce_freeze_round_trip() {
    let low = Params::new(4, 1, 1).unwrap();
    let err = reduce_freeze(&DiagMatrix::identity(4), low, Family::A).unwrap_err();
    assert!(matches!(err, StaircaseError::RegimeMismatch(_)));

    let p = Params::new(4, 2, 2).unwrap();
    let a = diag(&[(1, 1), (1, 2), (2, 3), (1, 2)]);
    assert!(member(&a, &a_set(1, 1, p)).unwrap());
    let fr = reduce_freeze(&a, p, Family::A).unwrap();
    assert_eq!(fr.reduced.n(), 3);
    assert_eq!(fr.frozen, vec![3]);
    assert_eq!(fr.expand(&fr.reduced), a);

    let nu = replay(&split_a_nd(&a, 1, 1, p).unwrap()).unwrap();
    assert_eq!(barycenter(&nu), a);
    assert!(nu.atoms().iter().all(|x| x.matrix.get(3) == a.get(3)));
}

#[test]
fn stage_one_support() {
    for p in all_params() {
        let s1 = stage_one_nd(p, &ConfigNd::default()).unwrap();
        assert_eq!(barycenter(&s1.nu), DiagMatrix::identity(p.n));
        let target = with_s(vec![a_set(1, 1, p), b_set(1, 1, p)], 1, 1, p);
        assert!(s1.nu.atoms().iter().all(|x| in_any(&x.matrix, &target)));
        assert!(s1.unclassified.is_zero());
    }
}

#[test]
fn sequence_invariants_all_regimes() {
    let cfg = ConfigNd::default();
    for p in all_params() {
        let seq = build_sequence_nd(p, 3, &cfg).unwrap();
        assert_eq!(seq.len(), 3);
        let id = DiagMatrix::identity(p.n);
        for st in &seq {
            assert_eq!(barycenter(&st.nu), id);
            assert!(det_expectation(&st.nu).is_one());
            assert_eq!(barycenter(&inverse_laminate(&st.nu)), id);
            let total = st.masses.values().fold(st.unclassified.clone(), |acc, m| acc + m);
            assert!(total.is_one());
            assert!(st.unclassified.is_zero(), "{p:?} stage {}", st.j);
        }
    }
}

#[test]
fn keeping_strays_leaves_unclassified_mass() {
    let p = Params::new(4, 1, 1).unwrap();
    let cfg = ConfigNd { stray: StrayPolicy::Keep, ..ConfigNd::default() };
    let seq = build_sequence_nd(p, 3, &cfg).unwrap();
    assert!(seq.iter().any(|s| !s.unclassified.is_zero()));
    for st in &seq {
        assert_eq!(barycenter(&st.nu), DiagMatrix::identity(4));
    }
}

#[test]
fn stage_history_replays() {
    let p = Params::new(4, 1, 1).unwrap();
    let seq = build_sequence_nd(p, 2, &ConfigNd::default()).unwrap();
    let again = laminate_forge::compose(&seq[0].nu, &seq[1].children).unwrap();
    assert_eq!(again, seq[1].nu);
}
