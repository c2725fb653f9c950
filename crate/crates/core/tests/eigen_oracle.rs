//! The hand-written Jacobi solver against nalgebra's symmetric eigensolver.

use nalgebra::SymmetricEigen;
use opmean::matcore::{apply_fn, jacobi_eig, SymMatrix};
use opmean::rng;

fn random_symmetric(n: usize, seed: u64) -> SymMatrix {
    let g = rng::gaussian_matrix(n, n, &mut rng::seeded(seed));
    SymMatrix::from_dense((&g + g.transpose()) * 0.5, 1e-12).unwrap()
}

#[test]
fn eigenvalues_match_oracle() {
    for (t, n) in (1..=40).enumerate() {
        let a = random_symmetric(n, t as u64);
        let ours = jacobi_eig(&a).unwrap();
        let mut theirs: Vec<f64> = SymmetricEigen::new(a.as_dense().clone()).eigenvalues.iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        let scale = ours.norm2().max(1.0);
        for (x, y) in ours.values.iter().zip(&theirs) {
            assert!((x - y).abs() <= 1e-12 * n as f64 * scale, "n={n}: {x} vs {y}");
        }
    }
}

#[test]
fn functional_calculus_matches_oracle() {
    for n in [2, 5, 12] {
        let g = rng::gaussian_matrix(n, n, &mut rng::seeded(100 + n as u64));
        let spd = SymMatrix::from_dense(&g * g.transpose() + nalgebra::DMatrix::identity(n, n), 1e-10).unwrap();
        let ours = apply_fn(&spd, f64::sqrt).unwrap();
        let eig = SymmetricEigen::new(spd.as_dense().clone());
        let root = &eig.eigenvectors
            * nalgebra::DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt))
            * eig.eigenvectors.transpose();
        let gap = (ours.as_dense() - root).abs().max();
        assert!(gap <= 1e-12 * spd.norm2().unwrap(), "n={n}: {gap:e}");
    }
}

#[test]
fn degenerate_and_diagonal_inputs() {
    let a = SymMatrix::scalar(6, 3.0);
    let e = jacobi_eig(&a).unwrap();
    assert!(e.values.iter().all(|&v| v == 3.0));
    let d = SymMatrix::from_diagonal(&[5.0, -1.0, 2.0]);
    assert_eq!(jacobi_eig(&d).unwrap().values, vec![-1.0, 2.0, 5.0]);
}
