use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Lower,
    Upper,
}

/// Square triangular matrix. Entries in the other triangle are exactly zero.
#[derive(Debug, Clone)]
pub struct TriangularFactor {
    data: DMatrix<f64>,
    orientation: Orientation,
}

impl TriangularFactor {
    /// Keeps the lower triangle of `m` (diagonal included) and zeroes the rest.
    pub fn lower(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "triangular factor must be square");
        Self {
            data: m.lower_triangle(),
            orientation: Orientation::Lower,
        }
    }

    pub fn upper(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "triangular factor must be square");
        Self {
            data: m.upper_triangle(),
            orientation: Orientation::Upper,
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self {
            data: self.data.transpose(),
            orientation: match self.orientation {
                Orientation::Lower => Orientation::Upper,
                Orientation::Upper => Orientation::Lower,
            },
        }
    }

    /// Solves against this factor in place, whichever its orientation.
    pub fn solve_in_place(&self, y: &mut [f64]) -> Result<()> {
        let d = self.dim();
        if y.len() != d {
            return Err(Error::DimensionMismatch {
                what: "triangular solve right-hand side",
                expected: d,
                got: y.len(),
            });
        }
        let m = &self.data;
        match self.orientation {
            Orientation::Lower => {
                for i in 0..d {
                    let mut acc = y[i];
                    for k in 0..i {
                        acc -= m[(i, k)] * y[k];
                    }
                    let piv = m[(i, i)];
                    if piv == 0.0 {
                        return Err(Error::SingularFactor { index: i });
                    }
                    y[i] = acc / piv;
                }
            }
            Orientation::Upper => {
                for i in (0..d).rev() {
                    let mut acc = y[i];
                    for k in i + 1..d {
                        acc -= m[(i, k)] * y[k];
                    }
                    let piv = m[(i, i)];
                    if piv == 0.0 {
                        return Err(Error::SingularFactor { index: i });
                    }
                    y[i] = acc / piv;
                }
            }
        }
        Ok(())
    }
}

/// Solves `L·w = y` for lower-triangular `L`.
pub fn forward_substitution(l: &TriangularFactor, y: &DVector<f64>) -> Result<DVector<f64>> {
    if l.orientation() != Orientation::Lower {
        return Err(Error::Precondition("forward substitution needs a lower factor".into()));
    }
    let mut w = y.clone();
    l.solve_in_place(w.as_mut_slice())?;
    Ok(w)
}

/// Solves `U·w = y` for upper-triangular `U`.
pub fn back_substitution(u: &TriangularFactor, y: &DVector<f64>) -> Result<DVector<f64>> {
    if u.orientation() != Orientation::Upper {
        return Err(Error::Precondition("back substitution needs an upper factor".into()));
    }
    let mut w = y.clone();
    u.solve_in_place(w.as_mut_slice())?;
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn hand_solves() {
        let l = TriangularFactor::lower(dmatrix![2.0, 0.0; 1.0, 1.0]);
        assert_eq!(forward_substitution(&l, &dvector![2.0, 2.0]).unwrap(), dvector![1.0, 1.0]);
        let u = TriangularFactor::upper(dmatrix![1.0, 1.0; 0.0, 2.0]);
        assert_eq!(back_substitution(&u, &dvector![3.0, 2.0]).unwrap(), dvector![2.0, 1.0]);
    }

    #[test]
    fn identity_is_noop() {
        let y = dvector![0.3, -1.0, 7.5, 2.0];
        let eye = DMatrix::identity(4, 4);
        assert_eq!(forward_substitution(&TriangularFactor::lower(eye.clone()), &y).unwrap(), y);
        assert_eq!(back_substitution(&TriangularFactor::upper(eye), &y).unwrap(), y);
    }

    #[test]
    fn zero_pivot_is_named() {
        let l = TriangularFactor::lower(dmatrix![1.0, 0.0; 3.0, 0.0]);
        match forward_substitution(&l, &dvector![1.0, 1.0]) {
            Err(Error::SingularFactor { index }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        let u = TriangularFactor::upper(dmatrix![0.0, 1.0; 0.0, 1.0]);
        assert!(matches!(
            back_substitution(&u, &dvector![1.0, 1.0]),
            Err(Error::SingularFactor { index: 0 })
        ));
    }

    #[test]
    fn other_triangle_is_zeroed() {
        let l = TriangularFactor::lower(dmatrix![1.0, 9.0; 2.0, 3.0]);
        assert_eq!(l.matrix()[(0, 1)], 0.0);
    }

    fn random_factor(seed: u64, d: usize) -> DMatrix<f64> {
        let mut rng = substream(seed, 0);
        DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                1.0 + rng.random::<f64>()
            } else {
                rng.random::<f64>() - 0.5
            }
        })
    }

    #[test]
    fn round_trip_d8() {
        let m = random_factor(11, 8);
        let l = TriangularFactor::lower(m);
        let w = DVector::from_fn(8, |i, _| (i as f64).sin());
        let y = l.matrix() * &w;
        let got = forward_substitution(&l, &y).unwrap();
        assert!((got - &w).norm() <= 1e-12 * w.norm());
    }

    proptest! {
        #[test]
        fn round_trips(seed in 0u64..10_000, d in 1usize..24) {
            let m = random_factor(seed, d);
            let w = DVector::from_fn(d, |i, _| ((seed as f64) + i as f64).cos());
            let l = TriangularFactor::lower(m.clone());
            let u = TriangularFactor::upper(m);
            let wl = forward_substitution(&l, &(l.matrix() * &w)).unwrap();
            let wu = back_substitution(&u, &(u.matrix() * &w)).unwrap();
            prop_assert!((wl - &w).norm() <= 1e-10 * w.norm());
            prop_assert!((wu - &w).norm() <= 1e-10 * w.norm());
        }
    }
}
