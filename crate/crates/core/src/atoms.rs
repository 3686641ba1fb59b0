//! Compressed chirp atoms `d = Wᴴ a(ω, κ)`.
//!
//! Both estimators evaluate thousands of compressed atoms per trial, so the
//! combiner is kept pre-conjugated in element-major order and the chirp is
//! generated by a phase recurrence instead of one `sin_cos` per element.

use crate::{CMat, CVec, C64};

#[derive(Debug, Clone)]
pub struct AtomCompressor {
    elements: usize,
    rf_chains: usize,
    /// `conj(W[m, k])` at `m * rf_chains + k`, real and imaginary parts
    /// stored apart so the accumulation vectorises.
    w_re: Vec<f64>,
    w_im: Vec<f64>,
    first_index: f64,
}

impl AtomCompressor {
    /// `centred` is the array's centred index; only its first entry and length
    /// are used since the index is uniformly spaced.
    pub fn new(combiner: &CMat, centred: &[f64]) -> Self {
        let (elements, rf_chains) = combiner.shape();
        assert_eq!(elements, centred.len(), "combiner rows must match element count");
        let mut w_re = Vec::with_capacity(elements * rf_chains);
        let mut w_im = Vec::with_capacity(elements * rf_chains);
        for m in 0..elements {
            for k in 0..rf_chains {
                w_re.push(combiner[(m, k)].re);
                w_im.push(-combiner[(m, k)].im);
            }
        }
        Self {
            elements,
            rf_chains,
            w_re,
            w_im,
            first_index: centred[0],
        }
    }

    pub fn rf_chains(&self) -> usize {
        self.rf_chains
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    /// Writes `Wᴴ a(ω, κ)` into `out` (length `N_RF`).
    pub fn compress_into(&self, omega: f64, kappa: f64, out: &mut [C64]) {
        debug_assert_eq!(out.len(), self.rf_chains);
        let m0 = self.first_index;
        // phase(m̄) = ω m̄ − κ m̄²; first difference ω − κ(2m̄ + 1), second −2κ
        let mut a = C64::from_polar(1.0, omega * m0 - kappa * m0 * m0);
        let step = C64::from_polar(1.0, omega - kappa * (2.0 * m0 + 1.0));
        let accel = C64::from_polar(1.0, -2.0 * kappa);
        // two interleaved chains over even and odd elements halve the
        // dependency depth: a(m+2) = a(m) s(m) s(m+1), s(m) s(m+1) advances by accel⁴
        let n = self.rf_chains;
        let mut re = [0.0f64; 32];
        let mut im = [0.0f64; 32];
        let mut heap;
        let (re, im): (&mut [f64], &mut [f64]) = if n <= 32 {
            (&mut re[..n], &mut im[..n])
        } else {
            heap = (vec![0.0; n], vec![0.0; n]);
            (&mut heap.0[..], &mut heap.1[..])
        };
        let accel2 = accel * accel;
        let accel4 = accel2 * accel2;
        let mut a_odd = a * step;
        let mut pair_even = step * step * accel;
        let mut pair_odd = pair_even * accel2;
        let mut rows_re = self.w_re.chunks_exact(2 * n);
        let mut rows_im = self.w_im.chunks_exact(2 * n);
        for (wr, wi) in (&mut rows_re).zip(&mut rows_im) {
            accumulate(re, im, &wr[..n], &wi[..n], a);
            accumulate(re, im, &wr[n..], &wi[n..], a_odd);
            a *= pair_even;
            a_odd *= pair_odd;
            pair_even *= accel4;
            pair_odd *= accel4;
        }
        if !rows_re.remainder().is_empty() {
            accumulate(re, im, rows_re.remainder(), rows_im.remainder(), a);
        }
        for (z, (&r, &i)) in out.iter_mut().zip(re.iter().zip(im.iter())) {
            *z = C64::new(r, i);
        }
    }

    pub fn compress(&self, omega: f64, kappa: f64) -> CVec {
        let mut out = vec![C64::new(0.0, 0.0); self.rf_chains];
        self.compress_into(omega, kappa, &mut out);
        CVec::from_vec(out)
    }

    /// `Wᴴ v` for an arbitrary element-space vector.
    pub fn compress_vector(&self, v: &[C64]) -> CVec {
        assert_eq!(v.len(), self.elements);
        let n = self.rf_chains;
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        for ((wr, wi), &a) in self.w_re.chunks_exact(n).zip(self.w_im.chunks_exact(n)).zip(v) {
            accumulate(&mut re, &mut im, wr, wi, a);
        }
        CVec::from_iterator(n, re.into_iter().zip(im).map(|(r, i)| C64::new(r, i)))
    }
}

fn accumulate(acc_re: &mut [f64], acc_im: &mut [f64], wr: &[f64], wi: &[f64], a: C64) {
    for (((r, i), &x), &y) in acc_re.iter_mut().zip(acc_im.iter_mut()).zip(wr).zip(wi) {
        *r += x * a.re - y * a.im;
        *i += x * a.im + y * a.re;
    }
}

/// Real part of `xᴴ A x`.
pub fn quadratic_form(a: &CMat, x: &[C64]) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for c in 0..n {
        let mut col = C64::new(0.0, 0.0);
        for r in 0..n {
            col += x[r].conj() * a[(r, c)];
        }
        acc += (col * x[c]).re;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::ArrayConfig;
    use rand::{Rng, SeedableRng};

    #[test]
    fn recurrence_matches_direct_product() {
        let array = ArrayConfig::new(28e9, 256).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let w = CMat::from_fn(256, 8, |_, _| C64::from_polar(1.0 / 16.0, rng.random::<f64>() * 6.28));
        let comp = AtomCompressor::new(&w, array.centred());
        for &(theta, u) in &[(0.4, 0.0), (1.0, 0.05), (1.4, 0.9)] {
            let direct = w.adjoint() * array.steering_chirp(theta, u);
            let fast = comp.compress(array.omega(theta), array.chirp_constant(theta) * u);
            assert!((direct - fast).camax() < 1e-11);
        }
    }

    #[test]
    fn odd_sizes_and_wide_combiners_match_direct_product() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for (m, n) in [(2, 1), (7, 3), (33, 40), (64, 8)] {
            let array = ArrayConfig::new(28e9, m).unwrap();
            let w = CMat::from_fn(m, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let comp = AtomCompressor::new(&w, array.centred());
            let a = array.steering_chirp(0.8, 0.3);
            let direct = w.adjoint() * &a;
            assert!((&direct - comp.compress(array.omega(0.8), array.chirp_constant(0.8) * 0.3)).camax() < 1e-12);
            assert!((&direct - comp.compress_vector(a.as_slice())).camax() < 1e-12);
        }
    }

    #[test]
    fn quadratic_form_of_identity_is_norm() {
        let x = [C64::new(1.0, 2.0), C64::new(-0.5, 0.25)];
        let id = CMat::identity(2, 2);
        assert!((quadratic_form(&id, &x) - (5.0 + 0.3125)).abs() < 1e-15);
    }
}
