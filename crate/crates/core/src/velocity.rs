//! Frequency-domain velocity vector (FDVV) and its inverse transform, the
//! time-domain velocity vector (TDVV).
//!
//! Per bin the FDVV is the ratio of the gradient channels to the pressure
//! channel, `V(f) = [X(f), Y(f), Z(f)] / W(f)`. Its real part follows the
//! active intensity and its imaginary part the reactive intensity. Bins can be
//! down-weighted (noise gating, plane weighting) before the inverse transform;
//! the weights multiply the complex vector as a whole.

use std::sync::Arc;

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner};

use crate::error::{Error, Result};
use crate::foa::{SpectralFrames, CHANNELS, W, X, Y, Z};
use crate::geom::Vec3;

/// Default relative threshold on |W(f)| below which a bin is discarded.
pub const DEFAULT_EPS_W: f64 = 1e-6;

/// Bins whose reactive part is shorter than this carry no plane information.
pub const EPS_IM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FdvvFrame {
    frame_len: usize,
    vv: [Vec<Complex64>; 3],
    weights: Vec<f64>,
    valid: Vec<bool>,
}

impl FdvvFrame {
    /// Builds the FDVV from one frame's W, X, Y, Z half-spectra.
    ///
    /// A bin is kept when `|W(f)| > eps_w · max_f |W(f)|`; discarded bins are
    /// zeroed with weight 0. A frame without any kept bin is silent.
    pub fn from_spectra(
        channels: [&[Complex64]; CHANNELS],
        frame_len: usize,
        eps_w: f64,
    ) -> Result<Self> {
        let bins = frame_len / 2 + 1;
        if let Some(bad) = channels.iter().find(|c| c.len() != bins) {
            return Err(Error::LengthMismatch {
                expected: bins,
                actual: bad.len(),
            });
        }
        let w = channels[W];
        let max_w = w.iter().map(|c| c.norm()).fold(0.0_f64, f64::max);
        if !(max_w > 0.0) || !max_w.is_finite() {
            return Err(Error::SilentFrame);
        }
        let threshold = eps_w * max_w;
        let nyquist = frame_len.is_multiple_of(2).then_some(bins - 1);

        let mut vv = [vec![Complex64::default(); bins], vec![Complex64::default(); bins], vec![Complex64::default(); bins]];
        let mut weights = vec![0.0; bins];
        let mut valid = vec![false; bins];
        for f in 0..bins {
            if w[f].norm() <= threshold {
                continue;
            }
            let inv = w[f].inv();
            for (row, ch) in vv.iter_mut().zip([X, Y, Z]) {
                let mut v = channels[ch][f] * inv;
                if f == 0 || Some(f) == nyquist {
                    v.im = 0.0;
                }
                row[f] = v;
            }
            weights[f] = 1.0;
            valid[f] = true;
        }
        if !valid.iter().any(|&v| v) {
            return Err(Error::SilentFrame);
        }
        Ok(Self {
            frame_len,
            vv,
            weights,
            valid,
        })
    }

    /// Builds a frame directly from velocity-vector rows; every bin is valid
    /// with weight 1.
    pub fn from_rows(rows: [Vec<Complex64>; 3], frame_len: usize) -> Result<Self> {
        let bins = frame_len / 2 + 1;
        if let Some(bad) = rows.iter().find(|r| r.len() != bins) {
            return Err(Error::LengthMismatch {
                expected: bins,
                actual: bad.len(),
            });
        }
        let mut vv = rows;
        let nyquist = frame_len.is_multiple_of(2).then_some(bins - 1);
        for row in &mut vv {
            row[0].im = 0.0;
            if let Some(n) = nyquist {
                row[n].im = 0.0;
            }
        }
        Ok(Self {
            frame_len,
            vv,
            weights: vec![1.0; bins],
            valid: vec![true; bins],
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn bin_count(&self) -> usize {
        self.valid.len()
    }

    pub fn rows(&self) -> &[Vec<Complex64>; 3] {
        &self.vv
    }

    /// Unweighted velocity vector of bin `f` as (real, imaginary) parts.
    pub fn bin(&self, f: usize) -> (Vec3, Vec3) {
        let [x, y, z] = [self.vv[0][f], self.vv[1][f], self.vv[2][f]];
        (Vec3::new(x.re, y.re, z.re), Vec3::new(x.im, y.im, z.im))
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Replaces the per-bin weights. Invalid bins stay at 0 and values are
    /// clamped into [0, 1].
    pub fn set_weights(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.bin_count() {
            return Err(Error::LengthMismatch {
                expected: self.bin_count(),
                actual: weights.len(),
            });
        }
        for ((dst, &src), &valid) in self.weights.iter_mut().zip(weights).zip(&self.valid) {
            *dst = if valid { src.clamp(0.0, 1.0) } else { 0.0 };
        }
        Ok(())
    }

    /// Multiplies the current weights by `factors` bin by bin.
    pub fn apply_weights(&mut self, factors: &[f64]) -> Result<()> {
        if factors.len() != self.bin_count() {
            return Err(Error::LengthMismatch {
                expected: self.bin_count(),
                actual: factors.len(),
            });
        }
        let combined: Vec<f64> = self.weights.iter().zip(factors).map(|(w, q)| w * q).collect();
        self.set_weights(&combined)
    }

    /// Zeroes the weight of every bin with negative SNR.
    pub fn suppress_low_snr(&mut self, snr_db: &[f64]) -> Result<()> {
        if snr_db.len() != self.bin_count() {
            return Err(Error::LengthMismatch {
                expected: self.bin_count(),
                actual: snr_db.len(),
            });
        }
        for (w, &snr) in self.weights.iter_mut().zip(snr_db) {
            if snr < 0.0 {
                *w = 0.0;
            }
        }
        Ok(())
    }

    /// Per-bin plane weights `q(f) = exp(-|Im V(f) · n| / ‖Im V(f)‖)`, where
    /// `n` is the unit normal of the vertical plane containing `u0`.
    ///
    /// Bins whose reactive part vanishes (or that are invalid) get `q = 1`.
    /// The result is not applied; callers multiply it into the weights.
    pub fn plane_weights(&self, u0: Vec3) -> Result<Vec<f64>> {
        let normal = vertical_plane_normal(u0)?;
        Ok((0..self.bin_count())
            .map(|f| {
                if !self.valid[f] {
                    return 1.0;
                }
                let (_, im) = self.bin(f);
                let len = im.norm();
                if len < EPS_IM {
                    1.0
                } else {
                    (-(im.dot(normal).abs() / len)).exp()
                }
            })
            .collect())
    }

    /// Mean of the real part over valid bins, unweighted.
    pub fn mean_active(&self) -> Option<Vec3> {
        let count = self.valid_count();
        if count == 0 {
            return None;
        }
        let sum = (0..self.bin_count())
            .filter(|&f| self.valid[f])
            .fold(Vec3::ZERO, |acc, f| acc + self.bin(f).0);
        Some(sum * (1.0 / count as f64))
    }
}

/// Unit normal of the plane spanned by `u` and the z-axis.
pub fn vertical_plane_normal(u: Vec3) -> Result<Vec3> {
    let n = u.cross(Vec3::Z);
    if n.norm() < 1e-12 * u.norm().max(1.0) {
        return Err(Error::DegeneratePlane);
    }
    n.normalized().ok_or(Error::DegeneratePlane)
}

pub fn compute_fdvv(spectra: &SpectralFrames, frame_index: usize, eps_w: f64) -> Result<FdvvFrame> {
    if frame_index >= spectra.frame_count() {
        return Err(Error::FrameOutOfRange {
            index: frame_index,
            count: spectra.frame_count(),
        });
    }
    FdvvFrame::from_spectra(spectra.frame(frame_index), spectra.frame_len(), eps_w)
}

/// Real 3×T time-domain velocity vector; column `j` is lag `j / fs`.
#[derive(Debug, Clone, PartialEq)]
pub struct TdvvFrame {
    fs: f64,
    rows: [Vec<f64>; 3],
}

impl TdvvFrame {
    pub fn new(rows: [Vec<f64>; 3], fs: f64) -> Result<Self> {
        let len = rows[0].len();
        if let Some(bad) = rows.iter().find(|r| r.len() != len) {
            return Err(Error::LengthMismatch {
                expected: len,
                actual: bad.len(),
            });
        }
        Ok(Self { fs, rows })
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    /// Number of lags T.
    pub fn len(&self) -> usize {
        self.rows[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> &[Vec<f64>; 3] {
        &self.rows
    }

    pub fn column(&self, lag: usize) -> Vec3 {
        Vec3::new(self.rows[0][lag], self.rows[1][lag], self.rows[2][lag])
    }

    pub fn column_norms(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.column(j).norm()).collect()
    }
}

/// Reusable inverse transform for one frame length.
pub struct TdvvTransform {
    frame_len: usize,
    plan: Arc<dyn ComplexToReal<f64>>,
    spectrum: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl TdvvTransform {
    pub fn new(frame_len: usize) -> Self {
        let plan = RealFftPlanner::<f64>::new().plan_fft_inverse(frame_len);
        let spectrum = plan.make_input_vec();
        let scratch = plan.make_scratch_vec();
        Self {
            frame_len,
            plan,
            spectrum,
            scratch,
        }
    }

    /// Inverse real transform of each weighted FDVV row, extended by
    /// conjugate symmetry and scaled by `1/T` so that lag 0 is the mean of
    /// the full spectrum.
    pub fn process(&mut self, fdvv: &FdvvFrame, fs: f64) -> Result<TdvvFrame> {
        if fdvv.frame_len() != self.frame_len {
            return Err(Error::LengthMismatch {
                expected: self.frame_len,
                actual: fdvv.frame_len(),
            });
        }
        if fdvv.valid_count() == 0 {
            return Err(Error::EmptySpectrum);
        }
        let last = self.spectrum.len() - 1;
        let even = self.frame_len.is_multiple_of(2);
        let rows = std::array::from_fn(|r| {
            for ((dst, &v), &w) in self.spectrum.iter_mut().zip(&fdvv.rows()[r]).zip(fdvv.weights()) {
                *dst = v * w;
            }
            self.spectrum[0].im = 0.0;
            if even {
                self.spectrum[last].im = 0.0;
            }
            self.inverse()
        });
        TdvvFrame::new(rows, fs)
    }

    /// Inverse transform of the weights alone: the lag kernel the weighting
    /// convolves the TDVV with. Lag 0 is the mean full-spectrum weight.
    pub fn weight_kernel(&mut self, weights: &[f64]) -> Result<Vec<f64>> {
        if weights.len() != self.spectrum.len() {
            return Err(Error::LengthMismatch {
                expected: self.spectrum.len(),
                actual: weights.len(),
            });
        }
        for (dst, &w) in self.spectrum.iter_mut().zip(weights) {
            *dst = Complex64::new(w, 0.0);
        }
        Ok(self.inverse())
    }

    fn inverse(&mut self) -> Vec<f64> {
        let mut out = vec![0.0; self.frame_len];
        self.plan
            .process_with_scratch(&mut self.spectrum, &mut out, &mut self.scratch)
            .expect("buffer sizes come from the same plan");
        let scale = 1.0 / self.frame_len as f64;
        out.iter_mut().for_each(|s| *s *= scale);
        out
    }
}

pub fn compute_tdvv(fdvv: &FdvvFrame, fs: f64) -> Result<TdvvFrame> {
    TdvvTransform::new(fdvv.frame_len()).process(fdvv, fs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    /// Full-spectrum mean of the weighted real part, straight from the
    /// definition of the inverse DFT at lag 0.
    fn full_spectrum_mean(fdvv: &FdvvFrame) -> Vec3 {
        let t = fdvv.frame_len();
        let mut sum = Vec3::ZERO;
        for k in 0..t {
            let (f, _) = if k <= t / 2 { (k, false) } else { (t - k, true) };
            let (re, _) = fdvv.bin(f);
            sum = sum + re * fdvv.weights()[f];
        }
        sum * (1.0 / t as f64)
    }

    #[test]
    fn direct_ratio() {
        let bins = 5;
        let w = vec![c(1.0); bins];
        let x = vec![c(0.5); bins];
        let zero = vec![c(0.0); bins];
        let fdvv = FdvvFrame::from_spectra([&w, &x, &zero, &zero], 8, DEFAULT_EPS_W).unwrap();
        for f in 0..bins {
            let (re, im) = fdvv.bin(f);
            assert_eq!(re, Vec3::new(0.5, 0.0, 0.0));
            assert_eq!(im, Vec3::ZERO);
        }
    }

    #[test]
    fn plane_wave_gives_its_direction() {
        let u0 = Vec3::from_angles_deg(40.0, -15.0);
        let w: Vec<Complex64> = (0..9).map(|f| Complex64::from_polar(1.0 + f as f64, 0.3 * f as f64)).collect();
        let grads: Vec<Vec<Complex64>> = u0.to_array().iter().map(|&u| w.iter().map(|&s| s * u).collect()).collect();
        let fdvv = FdvvFrame::from_spectra([&w, &grads[0], &grads[1], &grads[2]], 16, DEFAULT_EPS_W).unwrap();
        for f in 0..9 {
            let (re, im) = fdvv.bin(f);
            assert!((re - u0).norm() < 1e-14);
            assert!(im.norm() < 1e-14);
        }
    }

    #[test]
    fn two_wave_constructive_bin() {
        // W = 1 + g, X = u0x + g·u1x with e^{-j2πfτ} = 1.
        let g = 0.5;
        let w = vec![c(1.0 + g); 2];
        let x = vec![c(1.0 - g); 2];
        let zero = vec![c(0.0); 2];
        let fdvv = FdvvFrame::from_spectra([&w, &x, &zero, &zero], 2, DEFAULT_EPS_W).unwrap();
        assert!((fdvv.bin(0).0.x - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn silent_and_weak_bins() {
        let zero = vec![c(0.0); 5];
        assert_eq!(
            FdvvFrame::from_spectra([&zero, &zero, &zero, &zero], 8, DEFAULT_EPS_W),
            Err(Error::SilentFrame)
        );
        let mut w = vec![c(1.0); 5];
        w[2] = c(1e-9);
        let fdvv = FdvvFrame::from_spectra([&w, &w, &zero, &zero], 8, DEFAULT_EPS_W).unwrap();
        assert_eq!(fdvv.valid_mask(), &[true, true, false, true, true]);
        assert_eq!(fdvv.weights()[2], 0.0);
        assert_eq!(fdvv.bin(2).0, Vec3::ZERO);
    }

    #[test]
    fn dc_and_nyquist_are_real() {
        let w = vec![Complex64::new(1.0, 0.2); 5];
        let x = vec![Complex64::new(0.3, -0.7); 5];
        let fdvv = FdvvFrame::from_spectra([&w, &x, &x, &x], 8, DEFAULT_EPS_W).unwrap();
        assert_eq!(fdvv.bin(0).1, Vec3::ZERO);
        assert_eq!(fdvv.bin(4).1, Vec3::ZERO);
        assert_ne!(fdvv.bin(2).1, Vec3::ZERO);
    }

    fn sample_frame() -> FdvvFrame {
        let rows = std::array::from_fn(|r| {
            (0..11)
                .map(|f| Complex64::new((r + f) as f64 * 0.1, ((r * 3 + f) as f64).sin()))
                .collect()
        });
        FdvvFrame::from_rows(rows, 20).unwrap()
    }

    #[test]
    fn snr_gate() {
        let mut fdvv = sample_frame();
        fdvv.suppress_low_snr(&[10.0; 11]).unwrap();
        assert_eq!(fdvv, sample_frame());

        let mut snr = vec![10.0; 11];
        snr[2] = -1.0;
        snr[5] = -1.0;
        fdvv.suppress_low_snr(&snr).unwrap();
        for (f, &w) in fdvv.weights().iter().enumerate() {
            assert_eq!(w, if f == 2 || f == 5 { 0.0 } else { 1.0 });
        }

        fdvv.suppress_low_snr(&[-1.0; 11]).unwrap();
        let tdvv = compute_tdvv(&fdvv, 16000.0).unwrap();
        assert!(tdvv.rows().iter().flatten().all(|&v| v == 0.0));

        assert!(fdvv.suppress_low_snr(&[1.0; 3]).is_err());
    }

    fn single_bin(im: Vec3) -> FdvvFrame {
        let rows = im.to_array().map(|v| vec![c(0.0), Complex64::new(0.2, v), c(0.0)]);
        FdvvFrame::from_rows(rows, 4).unwrap()
    }

    #[test]
    fn plane_weight_values() {
        // u0 along +x: the vertical plane is xz, normal ±y.
        let u0 = Vec3::new(1.0, 0.0, 0.0);
        let q = single_bin(Vec3::new(0.3, 0.0, -0.4)).plane_weights(u0).unwrap();
        assert_eq!(q[1], 1.0);
        let q = single_bin(Vec3::new(0.0, 2.0, 0.0)).plane_weights(u0).unwrap();
        assert!((q[1] - (-1.0f64).exp()).abs() < 1e-15);
        let q = single_bin(Vec3::new(1.0, 1.0, 0.0)).plane_weights(u0).unwrap();
        assert!((q[1] - (-(0.5f64.sqrt())).exp()).abs() < 1e-15);
        assert!((q[1] - 0.4931).abs() < 1e-4);
        // purely active bins are kept
        assert_eq!(q[0], 1.0);
    }

    #[test]
    fn vertical_doa_has_no_plane() {
        let fdvv = single_bin(Vec3::new(0.0, 1.0, 0.0));
        assert_eq!(fdvv.plane_weights(Vec3::new(0.0, 0.0, 1.0)), Err(Error::DegeneratePlane));
        assert_eq!(fdvv.plane_weights(Vec3::new(0.0, 0.0, -1.0)), Err(Error::DegeneratePlane));
    }

    #[test]
    fn constant_spectrum_is_an_impulse() {
        let rows = [vec![c(0.0); 41], vec![c(0.0); 41], vec![c(1.0); 41]];
        let tdvv = compute_tdvv(&FdvvFrame::from_rows(rows, 80).unwrap(), 16000.0).unwrap();
        assert_eq!(tdvv.len(), 80);
        assert!((tdvv.column(0) - Vec3::Z).norm() < 1e-14);
        assert!((1..80).all(|j| tdvv.column(j).norm() < 1e-14));
    }

    #[test]
    fn lag_zero_is_weighted_spectral_mean() {
        for frame_len in [20, 21] {
            let bins = frame_len / 2 + 1;
            let rows = std::array::from_fn(|r| {
                (0..bins)
                    .map(|f| Complex64::from_polar(1.0 + 0.1 * r as f64, 0.7 * f as f64))
                    .collect()
            });
            let mut fdvv = FdvvFrame::from_rows(rows, frame_len).unwrap();
            let weights: Vec<f64> = (0..bins).map(|f| (f as f64 * 0.37).cos().abs()).collect();
            fdvv.set_weights(&weights).unwrap();
            let tdvv = compute_tdvv(&fdvv, 8000.0).unwrap();
            assert!((tdvv.column(0) - full_spectrum_mean(&fdvv)).norm() < 1e-14);
        }
    }

    #[test]
    fn inverse_matches_naive_idft() {
        let fdvv = sample_frame();
        let t = fdvv.frame_len();
        let tdvv = compute_tdvv(&fdvv, 1.0).unwrap();
        for (r, row) in fdvv.rows().iter().enumerate() {
            let full: Vec<Complex64> = (0..t)
                .map(|k| if k <= t / 2 { row[k] } else { row[t - k].conj() })
                .collect();
            for n in 0..t {
                let v: Complex64 = full
                    .iter()
                    .enumerate()
                    .map(|(k, &x)| x * Complex64::from_polar(1.0, 2.0 * PI * (k * n) as f64 / t as f64))
                    .sum::<Complex64>()
                    / t as f64;
                assert!(v.im.abs() < 1e-12);
                assert!((v.re - tdvv.rows()[r][n]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_spectrum_is_rejected() {
        let mut fdvv = sample_frame();
        fdvv.valid.iter_mut().for_each(|v| *v = false);
        assert_eq!(compute_tdvv(&fdvv, 1.0), Err(Error::EmptySpectrum));
    }

    #[test]
    fn mean_active_direction() {
        let rows = [vec![c(0.0)], vec![c(1.0)], vec![c(0.0)]];
        let fdvv = FdvvFrame::from_rows(rows, 1).unwrap();
        assert_eq!(fdvv.mean_active(), Some(Vec3::new(0.0, 1.0, 0.0)));
    }

    #[test]
    fn weight_kernel_of_flat_weights_is_an_impulse() {
        let mut t = TdvvTransform::new(10);
        let k = t.weight_kernel(&[1.0; 6]).unwrap();
        assert!((k[0] - 1.0).abs() < 1e-15);
        assert!(k[1..].iter().all(|v| v.abs() < 1e-15));
        // Dropping bin 2 alone: k(n) = δ(n) - 2cos(2π·2n/10)/10.
        let mut w = [1.0; 6];
        w[2] = 0.0;
        let k = t.weight_kernel(&w).unwrap();
        for (n, v) in k.iter().enumerate() {
            let want = f64::from(n == 0) - 0.2 * (2.0 * PI * 2.0 * n as f64 / 10.0).cos();
            assert!((v - want).abs() < 1e-14);
        }
        assert!(t.weight_kernel(&[1.0; 5]).is_err());
    }
}
