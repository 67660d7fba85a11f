use nalgebra::DMatrix;

/// `exp(A)` by scaling and squaring with a Padé approximant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    a.exp()
}
