//! One-dimensional cubic B-spline bases and Gauss–Legendre quadrature.
//!
//! Two bases are provided: an open-uniform ("clamped") cubic basis on a finite
//! interval, whose end coefficients interpolate the end values, and a uniform
//! periodic cubic basis. Both are C² inside, so tensor products are
//! H²-conforming.

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature needs at least one point");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { t } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (t * pn - pnm1) / (t * t - 1.0);
            let dt = pn / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            x[0] = 0.0;
            w[0] = 2.0;
            break;
        }
        x[i] = -t;
        x[n - 1 - i] = t;
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss points and weights mapped to [a, b].
pub fn gauss_on(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    x.iter()
        .zip(&w)
        .map(|(xi, wi)| (a + half * (xi + 1.0), half * wi))
        .collect()
}

/// Values and first two derivatives of the four basis functions that are
/// nonzero at a point; `first` is the index of the first one.
#[derive(Debug, Clone, Copy)]
pub struct LocalBasis {
    pub first: usize,
    /// `d[k][i]` is the k-th derivative of basis function `first + i`.
    pub d: [[f64; 4]; 3],
}

/// Open-uniform cubic B-spline basis on [0, length] with `intervals` equal knot
/// spans; it has `intervals + 3` functions.
#[derive(Debug, Clone)]
pub struct ClampedCubic {
    length: f64,
    intervals: usize,
    knots: Vec<f64>,
}

impl ClampedCubic {
    pub fn new(length: f64, intervals: usize) -> Self {
        assert!(length > 0.0 && intervals >= 1);
        let h = length / intervals as f64;
        let mut knots = vec![0.0; 3];
        for k in 0..=intervals {
            knots.push(if k == intervals { length } else { k as f64 * h });
        }
        knots.extend([length; 3]);
        Self {
            length,
            intervals,
            knots,
        }
    }

    pub fn n_basis(&self) -> usize {
        self.intervals + 3
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn interval_bounds(&self, k: usize) -> (f64, f64) {
        (self.knots[k + 3], self.knots[k + 4])
    }

    /// Knot span containing `x` (points outside [0, L] are clamped).
    pub fn interval_of(&self, x: f64) -> usize {
        let h = self.length / self.intervals as f64;
        let k = (x / h).floor();
        if k < 0.0 {
            0
        } else {
            (k as usize).min(self.intervals - 1)
        }
    }

    pub fn eval(&self, x: f64) -> LocalBasis {
        let x = x.clamp(0.0, self.length);
        let span = self.interval_of(x) + 3;
        let d = ders_basis_funs(span, x, &self.knots);
        LocalBasis {
            first: span - 3,
            d,
        }
    }
}

/// Cox–de Boor evaluation of the nonzero cubic basis functions and their first
/// two derivatives at `x` in knot span `span`.
fn ders_basis_funs(span: usize, x: f64, u: &[f64]) -> [[f64; 4]; 3] {
    const P: usize = 3;
    let mut ndu = [[0.0f64; P + 1]; P + 1];
    let mut left = [0.0; P + 1];
    let mut right = [0.0; P + 1];
    ndu[0][0] = 1.0;
    for j in 1..=P {
        left[j] = x - u[span + 1 - j];
        right[j] = u[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    let mut ders = [[0.0; P + 1]; 3];
    for j in 0..=P {
        ders[0][j] = ndu[j][P];
    }
    let mut a = [[0.0f64; P + 1]; 2];
    for r in 0..=P {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=2usize {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = P - k;
            if r >= k {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { P - r };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut fac = P as f64;
    for (k, row) in ders.iter_mut().enumerate().skip(1) {
        for v in row.iter_mut() {
            *v *= fac;
        }
        fac *= (P - k) as f64;
    }
    ders
}

/// Uniform periodic cubic B-spline basis on [0, period) with `intervals`
/// functions (one per knot span).
#[derive(Debug, Clone)]
pub struct PeriodicCubic {
    period: f64,
    intervals: usize,
}

impl PeriodicCubic {
    pub fn new(period: f64, intervals: usize) -> Self {
        assert!(period > 0.0 && intervals >= 4, "periodic cubic needs >= 4 spans");
        Self { period, intervals }
    }

    pub fn n_basis(&self) -> usize {
        self.intervals
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn interval_bounds(&self, k: usize) -> (f64, f64) {
        let h = self.period / self.intervals as f64;
        (k as f64 * h, (k + 1) as f64 * h)
    }

    /// Index of basis function `first + i`, wrapped.
    pub fn index(&self, first: usize, i: usize) -> usize {
        (first + i) % self.intervals
    }

    /// Local basis; indices must be wrapped with [`PeriodicCubic::index`].
    pub fn eval(&self, x: f64) -> LocalBasis {
        let h = self.period / self.intervals as f64;
        let y = x.rem_euclid(self.period) / h;
        let mut k = y.floor() as usize;
        if k >= self.intervals {
            k = self.intervals - 1;
        }
        let u = y - k as f64;
        let (u2, u3) = (u * u, u * u * u);
        let v = [
            (1.0 - u).powi(3) / 6.0,
            (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
            (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
            u3 / 6.0,
        ];
        let d1 = [
            -(1.0 - u).powi(2) / 2.0 / h,
            (9.0 * u2 - 12.0 * u) / 6.0 / h,
            (-9.0 * u2 + 6.0 * u + 3.0) / 6.0 / h,
            u2 / 2.0 / h,
        ];
        let h2 = h * h;
        let d2 = [
            (1.0 - u) / h2,
            (3.0 * u - 2.0) / h2,
            (-3.0 * u + 1.0) / h2,
            u / h2,
        ];
        LocalBasis {
            first: (k + self.intervals - 3) % self.intervals,
            d: [v, d1, d2],
        }
    }
}
