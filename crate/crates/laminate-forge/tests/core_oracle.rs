use std::collections::BTreeMap;

use laminate_forge::laminate::*;
use laminate_forge::matrix::{diag, DiagMatrix};
use laminate_forge::rational::{rat, Rational};
use laminate_forge::sets::{self, classify, member, Mode, Params, SpectralSetId, TieBreak};
use num_traits::{One, Zero};
use proptest::prelude::*;

fn lam(atoms: &[(i64, i64, DiagMatrix)]) -> Laminate {
    Laminate::new(atoms.iter().map(|(p, q, m)| Atom::new(rat(*p, *q), m.clone())).collect()).unwrap()
}

fn three_atom() -> Laminate {
    lam(&[
        (4, 9, diag(&[(1, 2), (1, 2), (2, 1)])),
        (2, 9, diag(&[(1, 2), (2, 1), (2, 1)])),
        (1, 3, diag(&[(2, 1), (1, 1), (2, 1)])),
    ])
}

/// Six-leaf tree of the identity, split toward (1/2, 2).
fn six_leaf_cert() -> SplitCertificate {
    let mut b = CertBuilder::new(DiagMatrix::identity(3));
    let (l, r) = b.split(0, 1, rat(1, 2), rat(2, 1)).unwrap();
    let (_, mid) = b.split(l, 2, rat(1, 2), rat(2, 1)).unwrap();
    b.split(mid, 3, rat(2, 1), rat(1, 2)).unwrap();
    let (_, tail) = b.split(r, 3, rat(2, 1), rat(1, 2)).unwrap();
    b.split(tail, 2, rat(1, 2), rat(2, 1)).unwrap();
    b.finish()
}

#[test]
fn det_examples() {
    assert_eq!(DiagMatrix::identity(3).det(), Rational::one());
    assert_eq!(diag(&[(1, 2), (2, 1), (2, 1)]).det(), rat(2, 1));
    assert_eq!(diag(&[(1, 2), (1, 2), (1, 1)]).det(), rat(1, 4));
}

#[test]
fn inverse_examples() {
    assert_eq!(DiagMatrix::identity(3).inverse(), DiagMatrix::identity(3));
    assert_eq!(diag(&[(1, 2), (2, 1), (2, 1)]).inverse(), diag(&[(2, 1), (1, 2), (1, 2)]));
    assert_eq!(diag(&[(1, 3), (1, 2), (1, 1)]).inverse(), diag(&[(3, 1), (2, 1), (1, 1)]));
}

#[test]
fn op_norm_and_spectrum_examples() {
    assert_eq!(DiagMatrix::identity(3).op_norm(), Rational::one());
    assert_eq!(diag(&[(1, 2), (2, 1), (2, 1)]).op_norm(), rat(2, 1));
    assert_eq!(diag(&[(3, 1), (1, 4), (2, 1)]).op_norm(), rat(3, 1));
    assert_eq!(diag(&[(2, 1), (1, 1), (2, 1)]).sorted_spectrum(), vec![rat(1, 1), rat(2, 1), rat(2, 1)]);
    assert_eq!(diag(&[(1, 2), (2, 1), (1, 2)]).sorted_spectrum(), vec![rat(1, 2), rat(1, 2), rat(2, 1)]);
}

#[test]
fn barycenter_examples() {
    assert_eq!(barycenter(&Laminate::dirac(DiagMatrix::identity(3))), DiagMatrix::identity(3));
    assert_eq!(barycenter(&three_atom()), diag(&[(1, 1), (1, 1), (2, 1)]));
    let sym = lam(&[(1, 2, diag(&[(1, 2), (1, 1), (1, 1)])), (1, 2, diag(&[(3, 2), (1, 1), (1, 1)]))]);
    assert_eq!(barycenter(&sym), DiagMatrix::identity(3));
}

#[test]
fn apply_split_examples() {
    let root = diag(&[(1, 1), (1, 1), (2, 1)]);
    let step = SplitStep { atom_index: 0, position: 1, low: rat(1, 2), high: rat(2, 1), lambda: rat(2, 3) };
    let cert = apply_split(&SplitCertificate::new(root), step.clone()).unwrap();
    let got = replay(&cert).unwrap();
    assert_eq!(got.weight_of(&diag(&[(1, 2), (1, 1), (2, 1)])), rat(2, 3));
    assert_eq!(got.weight_of(&diag(&[(2, 1), (1, 1), (2, 1)])), rat(1, 3));

    let bad = SplitStep { lambda: rat(1, 2), ..step };
    assert!(matches!(
        apply_split(&SplitCertificate::new(diag(&[(1, 1), (1, 1), (2, 1)])), bad),
        Err(LaminateError::NonConvexSplit { step: 0 })
    ));

    let mid = SplitStep { atom_index: 0, position: 2, low: rat(1, 2), high: rat(3, 2), lambda: rat(1, 2) };
    let c2 = apply_split(&SplitCertificate::new(DiagMatrix::identity(2)), mid).unwrap();
    let l2 = replay(&c2).unwrap();
    assert_eq!(l2.weight_of(&diag(&[(1, 1), (1, 2)])), rat(1, 2));
    assert_eq!(l2.weight_of(&diag(&[(1, 1), (3, 2)])), rat(1, 2));

    let out_of_range = SplitStep { atom_index: 3, position: 1, low: rat(1, 2), high: rat(3, 2), lambda: rat(1, 2) };
    assert!(matches!(
        apply_split(&SplitCertificate::new(DiagMatrix::identity(2)), out_of_range),
        Err(LaminateError::BadIndex { .. })
    ));
}

#[test]
fn replay_examples() {
    let empty = SplitCertificate::new(DiagMatrix::identity(3));
    assert_eq!(replay(&empty).unwrap(), Laminate::dirac(DiagMatrix::identity(3)));

    let mut b = CertBuilder::new(diag(&[(1, 1), (1, 1), (2, 1)]));
    let (l, _) = b.split(0, 1, rat(1, 2), rat(2, 1)).unwrap();
    b.split(l, 2, rat(1, 2), rat(2, 1)).unwrap();
    assert_eq!(replay(b.certificate()).unwrap(), merge_atoms(&three_atom()));

    let six = replay(&six_leaf_cert()).unwrap();
    let mut weights: Vec<Rational> = six.atoms().iter().map(|a| a.weight.clone()).collect();
    weights.sort();
    let mut want = vec![rat(4, 9), rat(2, 27), rat(4, 27), rat(1, 9), rat(4, 27), rat(2, 27)];
    want.sort();
    assert_eq!(weights, want);
}

#[test]
fn compose_examples() {
    let a = diag(&[(1, 1), (1, 1)]);
    let nu = lam(&[(1, 2, a.clone()), (1, 2, diag(&[(2, 1), (1, 1)]))]);
    assert_eq!(compose(&nu, &BTreeMap::new()).unwrap(), merge_atoms(&nu));

    let mut cb = CertBuilder::new(a.clone());
    cb.split(0, 1, rat(1, 2), rat(2, 1)).unwrap();
    let child = cb.finish();
    let single = compose(&Laminate::dirac(a.clone()), &BTreeMap::from([(a.clone(), child.clone())])).unwrap();
    assert_eq!(single, replay(&child).unwrap());

    let got = compose(&nu, &BTreeMap::from([(a.clone(), child)])).unwrap();
    assert_eq!(got.weight_of(&diag(&[(1, 2), (1, 1)])), rat(1, 3));
    assert_eq!(got.weight_of(&diag(&[(2, 1), (1, 1)])), rat(1, 6) + rat(1, 2));

    let wrong = SplitCertificate::new(diag(&[(3, 1), (1, 1)]));
    assert!(matches!(compose(&nu, &BTreeMap::from([(a, wrong)])), Err(LaminateError::RootMismatch(_))));
}

#[test]
fn merge_examples() {
    let a = diag(&[(1, 1), (1, 1)]);
    let b = diag(&[(2, 1), (1, 1)]);
    let c = diag(&[(3, 1), (1, 1)]);
    let twice = lam(&[(1, 2, a.clone()), (1, 2, a.clone())]);
    assert_eq!(merge_atoms(&twice), Laminate::dirac(a.clone()));
    let with_zero = Laminate::new(vec![
        Atom::new(rat(1, 3), a.clone()),
        Atom::new(Rational::zero(), b),
        Atom::new(rat(2, 3), c.clone()),
    ])
    .unwrap();
    let merged = merge_atoms(&with_zero);
    assert_eq!(merged, lam(&[(1, 3, a), (2, 3, c)]));
    assert_eq!(merge_atoms(&merged), merged);
}

#[test]
fn det_expectation_examples() {
    assert_eq!(det_expectation(&Laminate::dirac(diag(&[(1, 1), (1, 1), (2, 1)]))), rat(2, 1));
    assert_eq!(det_expectation(&three_atom()), rat(2, 1));
    assert_eq!(det_expectation(&replay(&six_leaf_cert()).unwrap()), Rational::one());
}

#[test]
fn inverse_laminate_examples() {
    let id = Laminate::dirac(DiagMatrix::identity(3));
    assert_eq!(inverse_laminate(&id), id);
    let sym = lam(&[(1, 2, diag(&[(1, 2), (1, 1), (1, 1)])), (1, 2, diag(&[(3, 2), (1, 1), (1, 1)]))]);
    let inv = inverse_laminate(&sym);
    assert_eq!(inv.weight_of(&diag(&[(2, 1), (1, 1), (1, 1)])), rat(1, 4));
    assert_eq!(inv.weight_of(&diag(&[(2, 3), (1, 1), (1, 1)])), rat(3, 4));

    let six = inverse_laminate(&replay(&six_leaf_cert()).unwrap());
    assert_eq!(six.weight_of(&diag(&[(2, 1), (2, 1), (1, 1)])), rat(3, 27));
    assert_eq!(six.weight_of(&diag(&[(1, 2), (1, 1), (1, 2)])), rat(12, 27));
}

#[test]
fn validate_certificate_examples() {
    let cert = six_leaf_cert();
    let good = replay(&cert).unwrap();
    assert!(validate_certificate(&cert, &good).valid);

    let mut atoms = good.atoms().to_vec();
    atoms[0].weight += rat(1, 1_000_000);
    atoms[1].weight -= rat(1, 1_000_000);
    let tampered = Laminate::new(atoms).unwrap();
    let check = validate_certificate(&cert, &tampered);
    assert!(!check.valid);
    assert_eq!(check.diagnostic, "weight mismatch");

    let mut broken = cert.clone();
    broken.steps[2].lambda = rat(1, 2);
    let check = validate_certificate(&broken, &good);
    assert!(!check.valid);
    assert_eq!(check.failing_step, Some(2));
}

#[test]
fn certificate_json_round_trip() {
    let cert = six_leaf_cert();
    let text = cert.to_json();
    let back = SplitCertificate::from_json(&text).unwrap();
    assert_eq!(back, cert);
    assert_eq!(back.to_json(), text);
    assert!(text.contains("\"lambda\": \"1/3\""));
}

#[test]
fn exact_membership_examples() {
    assert!(member(&diag(&[(1, 1), (1, 1), (2, 1)]), &SpectralSetId::a3(1, 2)).unwrap());
    assert!(!member(&DiagMatrix::identity(3), &SpectralSetId::b3(1, 1)).unwrap());
    assert!(member(&DiagMatrix::identity(3), &SpectralSetId::a3(1, 1)).unwrap());
    let p = Params::three_d();
    let open = SpectralSetId::a(1, 1, Mode::OpenNd, p);
    assert!(member(&diag(&[(1, 2), (1, 2), (1, 1)]), &open).unwrap());
}

#[test]
fn classify_examples() {
    let p = Params::three_d();
    let t = TieBreak::Upper;
    assert_eq!(
        classify(&diag(&[(1, 2), (1, 2), (2, 1)]), 2, p, Mode::Exact3d, t).unwrap(),
        Some(SpectralSetId::a3(2, 2))
    );
    assert_eq!(
        classify(&diag(&[(1, 1), (2, 1), (2, 1)]), 2, p, Mode::Exact3d, t).unwrap(),
        Some(SpectralSetId::b3(2, 2))
    );
    assert_eq!(classify(&diag(&[(5, 1), (5, 1), (5, 1)]), 2, p, Mode::Exact3d, t).unwrap(), None);
}

#[test]
fn strict_tie_break_surfaces_overlap() {
    let p = Params::three_d();
    let d = diag(&[(1, 3), (1, 3), (2, 1)]);
    assert!(matches!(classify(&d, 3, p, Mode::Exact3d, TieBreak::Strict), Err(sets::SetError::AmbiguousMembership(_))));
    assert_eq!(classify(&d, 3, p, Mode::Exact3d, TieBreak::Lower).unwrap(), Some(SpectralSetId::a3(3, 2)));
    assert_eq!(classify(&d, 3, p, Mode::Exact3d, TieBreak::Upper).unwrap(), Some(SpectralSetId::a3(3, 3)));
}

#[test]
fn inverse_set_examples() {
    let d = diag(&[(1, 1), (1, 1), (2, 1)]);
    assert!(member(&d, &SpectralSetId::a3(1, 2)).unwrap());
    assert!(sets::inverse_set(SpectralSetId::b3(2, 1))(&d).unwrap());
    assert!(member(&diag(&[(1, 1), (1, 1), (1, 2)]), &SpectralSetId::b3(2, 1)).unwrap());
    let id = DiagMatrix::identity(3);
    assert!(member(&id, &SpectralSetId::a3(1, 1)).unwrap());
    assert!(!sets::inverse_set(SpectralSetId::b3(1, 1))(&id).unwrap());
}

fn exact_3d_matrix() -> impl Strategy<Value = DiagMatrix> {
    (1i64..6, 1i64..6, 0usize..2, 0usize..3).prop_map(|(k, i, which, pos)| {
        let small = rat(1, k);
        let large = if which == 0 || i == 1 { rat(i, 1) } else { rat(i - 1, 1) };
        let mut e = vec![small.clone(), small, large];
        e.swap(2, pos);
        DiagMatrix::new(e).unwrap()
    })
}

fn positive_diag() -> impl Strategy<Value = DiagMatrix> {
    prop::collection::vec((1i64..40, 1i64..40), 2..5)
        .prop_map(|v| DiagMatrix::new(v.into_iter().map(|(p, q)| rat(p, q)).collect()).unwrap())
}

proptest! {
    #[test]
    fn matrix_identities(d in positive_diag()) {
        prop_assert_eq!(d.inverse().det(), d.det().recip());
        prop_assert_eq!(d.inverse().inverse(), d.clone());
        prop_assert_eq!(Some(d.op_norm()), d.sorted_spectrum().pop());
        let mut rev: Vec<Rational> = d.sorted_spectrum().iter().map(|x| x.recip()).collect();
        rev.reverse();
        prop_assert_eq!(d.inverse().sorted_spectrum(), rev);
    }

    #[test]
    fn exact_duality(d in exact_3d_matrix(), k in 1usize..6, i in 1usize..6) {
        if !d.is_identity() {
            let a = member(&d, &SpectralSetId::a3(k, i)).unwrap();
            let b = member(&d.inverse(), &SpectralSetId::b3(i, k)).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn random_certificates_conserve(
        root in positive_diag(),
        moves in prop::collection::vec((0usize..8, 0usize..4, 1i64..9, 1i64..9), 0..8)
    ) {
        let mut b = CertBuilder::new(root.clone());
        for (idx, pos, dl, dh) in moves {
            let idx = idx % b.len();
            let pos = pos % root.n() + 1;
            let x = b.atom(idx).matrix.get(pos).clone();
            let low = &x * rat(dl, dl + 1);
            let high = &x + rat(dh, 3);
            b.split(idx, pos, low, high).unwrap();
        }
        let nu = replay(b.certificate()).unwrap();
        let total = nu.atoms().iter().fold(Rational::zero(), |acc, a| acc + &a.weight);
        prop_assert!(total.is_one());
        prop_assert_eq!(barycenter(&nu), root.clone());
        prop_assert_eq!(det_expectation(&nu), root.det());
        prop_assert_eq!(barycenter(&inverse_laminate(&nu)), root.inverse());
        prop_assert!(validate_certificate(b.certificate(), &nu).valid);
    }

    #[test]
    fn dirac_inverse_involution(d in positive_diag()) {
        let nu = Laminate::dirac(d);
        prop_assert_eq!(inverse_laminate(&inverse_laminate(&nu)), nu);
    }
}
