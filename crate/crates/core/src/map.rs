//! The update-map abstraction shared by the solver, simulator, and
//! intervention planner, plus a piecewise-linear map for constructed
//! test shapes.

/// A deterministic one-dimensional update map x ↦ f(x).
pub trait UpdateMap {
    fn eval(&self, x: f64) -> f64;

    /// Closed-form derivative where the map has one; solvers fall back
    /// to central finite differences otherwise.
    fn derivative(&self, x: f64) -> Option<f64> {
        let _ = x;
        None
    }
}

impl<M: UpdateMap + ?Sized> UpdateMap for &M {
    fn eval(&self, x: f64) -> f64 {
        (**self).eval(x)
    }

    fn derivative(&self, x: f64) -> Option<f64> {
        (**self).derivative(x)
    }
}

/// Adapter making a plain closure usable as an update map.
pub struct FnMap<F: Fn(f64) -> f64>(pub F);

impl<F: Fn(f64) -> f64> UpdateMap for FnMap<F> {
    fn eval(&self, x: f64) -> f64 {
        (self.0)(x)
    }
}

/// Continuous piecewise-linear map defined by knots; constant beyond the
/// first and last knot. Used to build maps with prescribed fixed-point
/// and slope structure.
#[derive(Debug, Clone)]
pub struct PiecewiseLinearMap {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinearMap {
    /// Knots must be sorted strictly by x; at least two are required.
    pub fn new(knots: Vec<(f64, f64)>) -> crate::Result<Self> {
        if knots.len() < 2 {
            return Err(crate::Error::Domain(
                "piecewise-linear map needs at least two knots".into(),
            ));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(crate::Error::Domain(format!(
                    "knot abscissae must increase strictly, got {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        if knots.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(crate::Error::Domain("knots must be finite".into()));
        }
        Ok(PiecewiseLinearMap { knots })
    }
}

impl UpdateMap for PiecewiseLinearMap {
    fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        if x <= k[0].0 {
            return k[0].1;
        }
        if x >= k[k.len() - 1].0 {
            return k[k.len() - 1].1;
        }
        // partition_point: first knot with abscissa > x; x lies in the
        // segment ending there.
        let i = k.partition_point(|&(kx, _)| kx <= x);
        let (x0, y0) = k[i - 1];
        let (x1, y1) = k[i];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_clamps() {
        let m = PiecewiseLinearMap::new(vec![(0.0, 0.1), (1.0, 0.9)]).unwrap();
        assert_eq!(m.eval(0.5), 0.5);
        assert_eq!(m.eval(-3.0), 0.1);
        assert_eq!(m.eval(7.0), 0.9);
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(PiecewiseLinearMap::new(vec![(0.0, 0.0)]).is_err());
        assert!(PiecewiseLinearMap::new(vec![(0.0, 0.0), (0.0, 1.0)]).is_err());
        assert!(PiecewiseLinearMap::new(vec![(0.0, 0.0), (f64::NAN, 1.0)]).is_err());
    }
}
