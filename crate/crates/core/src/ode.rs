//! Dormand-Prince 5(4) embedded Runge-Kutta pair over fixed-size states.

use crate::real::Real;

// Butcher tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// 5th order weights (same as the last row of A, FSAL)
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Error tolerances and step control for the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance<T> {
    pub atol: T,
    pub rtol: T,
    pub safety: T,
    pub min_factor: T,
    pub max_factor: T,
}

impl<T: Real> Tolerance<T> {
    pub fn new(atol: T, rtol: T) -> Self {
        Tolerance {
            atol,
            rtol,
            safety: T::lit(0.9),
            min_factor: T::lit(0.2),
            max_factor: T::lit(5.0),
        }
    }

    /// New step size from the normalized error of the last attempt.
    pub fn next_step(&self, h: T, err: T) -> T {
        let factor = if err == T::zero() {
            self.max_factor
        } else {
            (self.safety * err.powf(T::lit(-0.2))).max(self.min_factor).min(self.max_factor)
        };
        h * factor
    }
}

/// Result of a single attempted step.
#[derive(Debug, Clone, Copy)]
pub struct Step<T, const N: usize> {
    pub y: [T; N],
    /// Weighted RMS error norm; the step is acceptable when `<= 1`.
    pub err: T,
}

/// One Dormand-Prince step of size `h` (negative `h` integrates backward).
pub fn dopri_step<T, const N: usize, F>(f: &F, t: T, y: &[T; N], h: T, tol: &Tolerance<T>) -> Step<T, N>
where
    T: Real,
    F: Fn(T, &[T; N]) -> [T; N],
{
    let mut k = [[T::zero(); N]; 7];
    k[0] = f(t, y);
    for stage in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(stage) {
            let a = T::lit(A[stage][j]);
            if a != T::zero() {
                for i in 0..N {
                    ys[i] = ys[i] + h * a * kj[i];
                }
            }
        }
        k[stage] = f(t + h * T::lit(C[stage]), &ys);
    }
    let mut y5 = *y;
    let mut e = [T::zero(); N];
    for (s, ks) in k.iter().enumerate() {
        let b5 = T::lit(B5[s]);
        let db = T::lit(B5[s] - B4[s]);
        for i in 0..N {
            y5[i] = y5[i] + h * b5 * ks[i];
            e[i] = e[i] + h * db * ks[i];
        }
    }
    let mut acc = T::zero();
    for i in 0..N {
        let scale = tol.atol + tol.rtol * y[i].abs().max(y5[i].abs());
        let r = e[i] / scale;
        acc = acc + r * r;
    }
    let err = (acc / T::from_usize(N).unwrap()).sqrt();
    Step { y: y5, err }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_accurate() {
        let f = |_t: f64, y: &[f64; 1]| [-y[0]];
        let tol = Tolerance::new(1e-12, 1e-12);
        let mut t = 0.0;
        let mut y = [1.0];
        let mut h: f64 = 0.01;
        while t < 2.0 {
            let h_try = h.min(2.0 - t);
            let st = dopri_step(&f, t, &y, h_try, &tol);
            if st.err <= 1.0 {
                t += h_try;
                y = st.y;
            }
            h = tol.next_step(h_try, st.err);
        }
        assert!((y[0] - (-2.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn constant_derivative_is_exact() {
        let f = |_t: f64, _y: &[f64; 2]| [7.0, -1.0];
        let tol = Tolerance::new(1e-10, 1e-10);
        let st = dopri_step(&f, 0.0, &[0.0, 1.0], 0.5, &tol);
        assert!((st.y[0] - 3.5).abs() < 1e-14);
        assert!((st.y[1] - 0.5).abs() < 1e-14);
        assert!(st.err < 1e-3);
    }
}
