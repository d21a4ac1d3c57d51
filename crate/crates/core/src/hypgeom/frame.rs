use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{mink, GeomError, HPoint, Isometry, Tangent};

/// An orthonormal `p`-frame of tangent vectors at a point.
#[derive(Clone, Debug)]
pub struct Frame {
    base: HPoint,
    vectors: Vec<Tangent>,
}

impl Frame {
    /// Checks tangency (1e-10) and orthonormality of the Gram matrix (1e-8).
    pub fn new(base: HPoint, vectors: Vec<Tangent>) -> Result<Self, GeomError> {
        let d = base.dim();
        if vectors.len() > d {
            return Err(GeomError::InvalidFrame(format!("{} vectors in dimension {d}", vectors.len())));
        }
        for v in &vectors {
            if v.len() != d + 1 {
                return Err(GeomError::DimensionMismatch { expected: d + 1, got: v.len() });
            }
            let c = mink(base.as_slice(), v.as_slice());
            if c.abs() > 1e-10 * base.time() * (1.0 + v.norm()) {
                return Err(GeomError::InvalidFrame(format!("<base, v> = {c:e}")));
            }
        }
        let f = Frame { base, vectors };
        let gram = f.gram();
        let err = (gram - DMatrix::identity(f.vectors.len(), f.vectors.len())).norm();
        if err > 1e-8 {
            return Err(GeomError::InvalidFrame(format!("Gram defect {err:e}")));
        }
        Ok(f)
    }

    /// The image of `e_1, ..., e_p` under the pure translation from `O` to `x`.
    pub fn standard(x: &HPoint, p: usize) -> Self {
        let t = Isometry::translation_to(x);
        Frame::transported(x, &t, &DMatrix::identity(x.dim(), p))
    }

    /// A uniformly random orthonormal `p`-frame at `x`.
    pub fn random(x: &HPoint, p: usize, rng: &mut impl Rng) -> Self {
        let d = x.dim();
        let g = DMatrix::<f64>::from_fn(d, p, |_, _| rng.sample(rand_distr::StandardNormal));
        let q = g.qr().q();
        let t = Isometry::translation_to(x);
        Frame::transported(x, &t, &q.columns(0, p).into_owned())
    }

    /// Columns of `spatial` (orthonormal in `R^d`) pushed from `T_O` to `T_x` by `t`.
    fn transported(x: &HPoint, t: &Isometry, spatial: &DMatrix<f64>) -> Self {
        let d = x.dim();
        let vectors = (0..spatial.ncols())
            .map(|j| {
                let mut e = DVector::zeros(d + 1);
                for i in 0..d {
                    e[i + 1] = spatial[(i, j)];
                }
                t.apply_tangent(&e)
            })
            .collect();
        Frame { base: x.clone(), vectors }
    }

    pub fn base(&self) -> &HPoint {
        &self.base
    }

    pub fn vectors(&self) -> &[Tangent] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn gram(&self) -> DMatrix<f64> {
        let p = self.vectors.len();
        DMatrix::from_fn(p, p, |i, j| mink(self.vectors[i].as_slice(), self.vectors[j].as_slice()))
    }

    /// Coordinates of a tangent vector in this frame.
    pub fn coordinates(&self, v: &Tangent) -> DVector<f64> {
        DVector::from_iterator(self.vectors.len(), self.vectors.iter().map(|e| mink(e.as_slice(), v.as_slice())))
    }

    /// The tangent vector with the given frame coordinates.
    pub fn combine(&self, c: &[f64]) -> Tangent {
        let mut v = DVector::zeros(self.base.dim() + 1);
        for (e, a) in self.vectors.iter().zip(c) {
            v += e * *a;
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypgeom::tests::random_point;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn frames_are_orthonormal_and_tangent() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let x = random_point(&mut rng, 3, 4.0);
            let f = Frame::random(&x, 3, &mut rng);
            assert!(Frame::new(x.clone(), f.vectors().to_vec()).is_ok());
            let s = Frame::standard(&x, 2);
            assert!(Frame::new(x.clone(), s.vectors().to_vec()).is_ok());
            let v = f.combine(&[0.3, -1.0, 2.0]);
            let c = f.coordinates(&v);
            assert!((c[0] - 0.3).abs() < 1e-9 && (c[2] - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_tangent() {
        let o = HPoint::origin(2);
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(Frame::new(o, vec![v]).is_err());
    }
}
