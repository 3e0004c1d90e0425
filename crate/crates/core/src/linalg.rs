use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// non-increasing order. Each eigenvector is sign-fixed so that its entry of
/// largest magnitude is positive.
pub(crate) fn sorted_sym_eigen(m: DMatrix<f64>) -> (Vec<f64>, Vec<DVector<f64>>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    // stable sort keeps index order among exact ties
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut v = eig.eigenvectors.column(i).into_owned();
            fix_sign(v.as_mut_slice());
            v
        })
        .collect();
    (values, vectors)
}

pub(crate) fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
