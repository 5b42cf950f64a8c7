//! Eigenvalue machinery for real symmetric tridiagonal and complex Hermitian
//! banded matrices.
//!
//! Full spectra go through Givens band-to-tridiagonal reduction followed by
//! implicit QL. A handful of extreme eigenvalues are cheaper by bisection on
//! LDLᴴ inertia counts. Eigenvectors, when residuals are needed, come from
//! inverse iteration with a pivoted band LU.

mod band;
mod tridiag;

pub use band::HermitianBand;
pub use tridiag::tridiagonal_eigenvalues;
