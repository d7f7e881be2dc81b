//! Current-balance solve of the network with voltage-dependent loads.
//!
//! Unknowns are the real and imaginary parts of every bus voltage,
//! interleaved. The residual is `Y_aug V + I_load(V) - I_src`, where
//! `Y_aug` already holds generator Norton admittances, constant-impedance
//! loads and fault shunts. A factorized Jacobian is reused across solves
//! (chord iterations) and refreshed when convergence slows.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;

pub(crate) struct Network {
    n: usize,
    y: DMatrix<Complex64>,
    block: DMatrix<f64>,
    lu: Option<LU<f64, Dyn, Dyn>>,
}

#[derive(Debug)]
pub(crate) struct SolveFailure {
    pub residual: f64,
}

impl Network {
    pub fn new(y: DMatrix<Complex64>) -> Self {
        let n = y.nrows();
        let mut block = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let (g, b) = (y[(i, j)].re, y[(i, j)].im);
                block[(2 * i, 2 * j)] = g;
                block[(2 * i, 2 * j + 1)] = -b;
                block[(2 * i + 1, 2 * j)] = b;
                block[(2 * i + 1, 2 * j + 1)] = g;
            }
        }
        Self {
            n,
            y,
            block,
            lu: None,
        }
    }

    fn residual<F>(&self, v: &[Complex64], i_src: &[Complex64], loads: &[usize], cur: &F) -> Vec<Complex64>
    where
        F: Fn(usize, Complex64) -> Complex64,
    {
        let mut r: Vec<Complex64> = (0..self.n)
            .map(|i| {
                let mut acc = -i_src[i];
                for j in 0..self.n {
                    acc += self.y[(i, j)] * v[j];
                }
                acc
            })
            .collect();
        for (k, &bus) in loads.iter().enumerate() {
            r[bus] += cur(k, v[bus]);
        }
        r
    }

    fn factor<F>(&mut self, v: &[Complex64], loads: &[usize], cur: &F) -> bool
    where
        F: Fn(usize, Complex64) -> Complex64,
    {
        let mut jac = self.block.clone();
        for (k, &bus) in loads.iter().enumerate() {
            let v0 = v[bus];
            let h = 1e-7 * v0.norm().max(1e-2);
            let i0 = cur(k, v0);
            let dre = (cur(k, v0 + Complex64::new(h, 0.0)) - i0) / h;
            let dim = (cur(k, v0 + Complex64::new(0.0, h)) - i0) / h;
            jac[(2 * bus, 2 * bus)] += dre.re;
            jac[(2 * bus + 1, 2 * bus)] += dre.im;
            jac[(2 * bus, 2 * bus + 1)] += dim.re;
            jac[(2 * bus + 1, 2 * bus + 1)] += dim.im;
        }
        let lu = jac.lu();
        if !lu.is_invertible() {
            self.lu = None;
            return false;
        }
        self.lu = Some(lu);
        true
    }

    /// Solve for `v` in place; returns the final residual (infinity norm).
    pub fn solve<F>(
        &mut self,
        v: &mut [Complex64],
        i_src: &[Complex64],
        loads: &[usize],
        cur: F,
        tol: f64,
        max_iter: usize,
    ) -> Result<f64, SolveFailure>
    where
        F: Fn(usize, Complex64) -> Complex64,
    {
        let norm = |r: &[Complex64]| r.iter().map(|c| c.re.abs().max(c.im.abs())).fold(0.0, f64::max);
        let mut r = self.residual(v, i_src, loads, &cur);
        let mut rn = norm(&r);
        if !rn.is_finite() {
            return Err(SolveFailure { residual: rn });
        }
        let mut fresh = false;
        if self.lu.is_none() {
            if !self.factor(v, loads, &cur) {
                return Err(SolveFailure { residual: rn });
            }
            fresh = true;
        }
        let mut iter = 0;
        while rn > tol {
            if iter >= max_iter {
                return Err(SolveFailure { residual: rn });
            }
            iter += 1;
            let rhs = DVector::from_iterator(2 * self.n, r.iter().flat_map(|c| [-c.re, -c.im]));
            let step = match self.lu.as_ref().and_then(|lu| lu.solve(&rhs)) {
                Some(s) => s,
                None => return Err(SolveFailure { residual: rn }),
            };
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..10 {
                let trial: Vec<Complex64> = v
                    .iter()
                    .enumerate()
                    .map(|(i, vi)| vi + Complex64::new(step[2 * i], step[2 * i + 1]) * lambda)
                    .collect();
                let rt = self.residual(&trial, i_src, loads, &cur);
                let rtn = norm(&rt);
                if rtn.is_finite() && rtn < rn {
                    accepted = Some((trial, rt, rtn));
                    break;
                }
                lambda *= 0.5;
            }
            match accepted {
                Some((trial, rt, rtn)) => {
                    let ratio = rtn / rn;
                    v.copy_from_slice(&trial);
                    r = rt;
                    rn = rtn;
                    if rn > tol && ratio > 0.05 && !fresh {
                        if !self.factor(v, loads, &cur) {
                            return Err(SolveFailure { residual: rn });
                        }
                        fresh = true;
                    } else {
                        fresh = false;
                    }
                }
                None if fresh => return Err(SolveFailure { residual: rn }),
                None => {
                    if !self.factor(v, loads, &cur) {
                        return Err(SolveFailure { residual: rn });
                    }
                    fresh = true;
                }
            }
        }
        Ok(rn)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_network_solves_in_one_step() {
        let j = |x: f64| Complex64::new(0.0, x);
        let y = DMatrix::from_row_slice(2, 2, &[j(-15.0), j(10.0), j(10.0), j(-10.0) + 1.0]);
        let mut net = Network::new(y.clone());
        let src = [Complex64::new(0.0, -5.0), Complex64::new(0.0, 0.0)];
        let mut v = vec![Complex64::new(1.0, 0.0); 2];
        let res = net.solve(&mut v, &src, &[], |_, _| Complex64::new(0.0, 0.0), 1e-12, 5);
        assert!(res.unwrap() <= 1e-12);
        for i in 0..2 {
            let mut acc = -src[i];
            for k in 0..2 {
                acc += y[(i, k)] * v[k];
            }
            assert!(acc.norm() < 1e-12);
        }
    }

    #[test]
    fn constant_power_load_converges() {
        let j = |x: f64| Complex64::new(0.0, x);
        let y = DMatrix::from_row_slice(2, 2, &[j(-15.0), j(10.0), j(10.0), j(-10.0)]);
        let mut net = Network::new(y);
        let src = [Complex64::new(0.0, -5.0), Complex64::new(0.0, 0.0)];
        let s = Complex64::new(0.8, 0.3);
        let mut v = vec![Complex64::new(1.0, 0.0); 2];
        let res = net.solve(&mut v, &src, &[1], |_, vb| (s / vb).conj(), 1e-11, 30);
        assert!(res.is_ok());
        let p = v[1] * ((s / v[1]).conj()).conj();
        assert!((p - s).norm() < 1e-9);
    }
}
