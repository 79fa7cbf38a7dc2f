use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense n-dimensional array in row-major order.
///
/// The shape is a list of extents, all of which must be at least 1, and
/// `data.len()` always equals the product of the extents. Tensors are plain
/// values: immutable in practice once built, cheap to clone at the sizes this
/// crate works with, and safe to share read-only across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<E: Scalar> {
    shape: Vec<usize>,
    data: Vec<E>,
}

impl<E: Scalar> Tensor<E> {
    pub fn from_vec(shape: Vec<usize>, data: Vec<E>) -> Result<Self> {
        let numel = checked_numel(&shape)?;
        if numel != data.len() {
            return Err(Error::Dim(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let numel = checked_numel(&shape)?;
        Ok(Self {
            shape,
            data: vec![E::ZERO; numel],
        })
    }

    pub fn filled(shape: Vec<usize>, value: E) -> Result<Self> {
        let numel = checked_numel(&shape)?;
        Ok(Self {
            shape,
            data: vec![value; numel],
        })
    }

    pub fn scalar(value: E) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    /// Interpret as a matrix, failing on any other rank.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [m, n] => Ok((m, n)),
            _ => Err(Error::Dim(format!(
                "expected rank 2, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [a, b, c] => Ok((a, b, c)),
            _ => Err(Error::Dim(format!(
                "expected rank 3, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Rows × columns view of any tensor: the last extent is the column
    /// count, everything before it is flattened into rows.
    pub fn as_rows(&self) -> (usize, usize) {
        let cols = *self.shape.last().unwrap_or(&1);
        (self.data.len() / cols.max(1), cols)
    }

    /// Same data, new shape; element count must not change.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self> {
        let numel = checked_numel(&shape)?;
        if numel != self.data.len() {
            return Err(Error::Dim(format!(
                "cannot reshape {:?} ({} elements) to {:?} ({} elements)",
                self.shape,
                self.data.len(),
                shape,
                numel
            )));
        }
        Ok(Self {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn convert<F: Scalar>(&self) -> Tensor<F> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| F::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max)
    }
}

fn checked_numel(shape: &[usize]) -> Result<usize> {
    let mut numel: usize = 1;
    for &extent in shape {
        if extent == 0 {
            return Err(Error::Dim(format!("zero extent in shape {shape:?}")));
        }
        numel = numel.checked_mul(extent).ok_or_else(|| {
            Error::Arithmetic(format!("element count overflow for shape {shape:?}"))
        })?;
    }
    Ok(numel)
}

/// A learnable tensor paired with its gradient accumulator.
///
/// The gradient always has the same shape as the value and starts at zero;
/// [`crate::autodiff::Tape::backward`] produces gradients that callers
/// accumulate here.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<E: Scalar> {
    pub value: Tensor<E>,
    pub gradient: Tensor<E>,
}

impl<E: Scalar> Parameter<E> {
    pub fn new(value: Tensor<E>) -> Self {
        let gradient = Tensor::zeros(value.shape().to_vec()).expect("valid shape");
        Self { value, gradient }
    }

    pub fn accumulate(&mut self, grad: &Tensor<E>) -> Result<()> {
        if grad.shape() != self.value.shape() {
            return Err(Error::Dim(format!(
                "gradient shape {:?} does not match parameter shape {:?}",
                grad.shape(),
                self.value.shape()
            )));
        }
        for (g, d) in self.gradient.data_mut().iter_mut().zip(grad.data()) {
            *g += *d;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for g in self.gradient.data_mut() {
            *g = E::ZERO;
        }
    }
}

/// Gamma/beta pair of a layer norm.
#[derive(Debug, Clone)]
pub struct NormParams<E: Scalar> {
    pub gamma: Parameter<E>,
    pub beta: Parameter<E>,
}

impl<E: Scalar> NormParams<E> {
    /// Fresh gamma=1, beta=0 pair over `channels`.
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: Parameter::new(Tensor::filled(vec![channels], E::ONE).expect("valid")),
            beta: Parameter::new(Tensor::zeros(vec![channels]).expect("valid")),
        }
    }
}

fn dims_for_matmul<E: Scalar>(a: &Tensor<E>, b: &Tensor<E>) -> Result<(usize, usize, usize)> {
    let (m, ka) = a.dims2()?;
    let (kb, n) = b.dims2()?;
    if ka != kb {
        return Err(Error::Dim(format!(
            "matmul inner extents differ: lhs {:?} vs rhs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok((m, ka, n))
}

/// `a[m×k] · b[k×n]`, accumulating in ascending index order so results are
/// bit-reproducible across runs.
pub fn matmul<E: Scalar>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    let (m, k, n) = dims_for_matmul(a, b)?;
    let mut out = vec![E::ZERO; m * n];
    let ad = a.data();
    let bd = b.data();
    for i in 0..m {
        for t in 0..k {
            let av = ad[i * k + t];
            let brow = &bd[t * n..(t + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    Tensor::from_vec(vec![m, n], out)
}

/// `a[m×k] · b[n×k]ᵀ` (used by backward passes).
pub(crate) fn matmul_nt<E: Scalar>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    let (m, ka) = a.dims2()?;
    let (n, kb) = b.dims2()?;
    if ka != kb {
        return Err(Error::Dim(format!(
            "matmul_nt inner extents differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let k = ka;
    let mut out = vec![E::ZERO; m * n];
    for i in 0..m {
        let arow = &a.data()[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b.data()[j * k..(j + 1) * k];
            let mut acc = E::ZERO;
            for t in 0..k {
                acc += arow[t] * brow[t];
            }
            out[i * n + j] = acc;
        }
    }
    Tensor::from_vec(vec![m, n], out)
}

/// `a[k×m]ᵀ · b[k×n]` (used by backward passes).
pub(crate) fn matmul_tn<E: Scalar>(a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
    let (ka, m) = a.dims2()?;
    let (kb, n) = b.dims2()?;
    if ka != kb {
        return Err(Error::Dim(format!(
            "matmul_tn inner extents differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let k = ka;
    let mut out = vec![E::ZERO; m * n];
    for t in 0..k {
        let arow = &a.data()[t * m..(t + 1) * m];
        let brow = &b.data()[t * n..(t + 1) * n];
        for i in 0..m {
            let av = arow[i];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    Tensor::from_vec(vec![m, n], out)
}

/// Batched matrix product over a shared leading extent.
///
/// `a` is `[B, m, k]`; `b` is `[B, k, n]`, or `[B, n, k]` when `trans_b` is
/// set. Every product is scaled by `scale`.
pub fn batch_matmul<E: Scalar>(
    a: &Tensor<E>,
    b: &Tensor<E>,
    trans_b: bool,
    scale: E,
) -> Result<Tensor<E>> {
    let (ba, m, k) = a.dims3()?;
    let (bb, d1, d2) = b.dims3()?;
    let (n, kb) = if trans_b { (d1, d2) } else { (d2, d1) };
    if ba != bb || k != kb {
        return Err(Error::Dim(format!(
            "batch_matmul shapes incompatible: {:?} vs {:?} (trans_b={})",
            a.shape(),
            b.shape(),
            trans_b
        )));
    }
    let mut out = vec![E::ZERO; ba * m * n];
    for bi in 0..ba {
        let ao = bi * m * k;
        let bo = bi * k * n;
        let oo = bi * m * n;
        if trans_b {
            for i in 0..m {
                for j in 0..n {
                    let mut acc = E::ZERO;
                    for t in 0..k {
                        acc += a.data()[ao + i * k + t] * b.data()[bo + j * k + t];
                    }
                    out[oo + i * n + j] = acc * scale;
                }
            }
        } else {
            for i in 0..m {
                for t in 0..k {
                    let av = a.data()[ao + i * k + t];
                    for j in 0..n {
                        out[oo + i * n + j] += av * b.data()[bo + t * n + j];
                    }
                }
            }
            if scale != E::ONE {
                for v in &mut out[oo..oo + m * n] {
                    *v *= scale;
                }
            }
        }
    }
    Tensor::from_vec(vec![ba, m, n], out)
}

/// Numerically stable softmax over the last axis.
pub fn softmax_rows<E: Scalar>(x: &Tensor<E>) -> Result<Tensor<E>> {
    if x.rank() == 0 {
        return Err(Error::Dim(String::from("softmax_rows needs rank >= 1")));
    }
    let (rows, cols) = x.as_rows();
    let mut out = vec![E::ZERO; rows * cols];
    for r in 0..rows {
        let row = &x.data()[r * cols..(r + 1) * cols];
        let mut max = row[0];
        for &v in row {
            if v.is_nan() {
                return Err(Error::Numeric(String::from("NaN input to softmax_rows")));
            }
            max = max.maximum(v);
        }
        let orow = &mut out[r * cols..(r + 1) * cols];
        let mut sum = E::ZERO;
        for (o, &v) in orow.iter_mut().zip(row) {
            let e = (v - max).exp();
            *o = e;
            sum += e;
        }
        for o in orow.iter_mut() {
            *o = *o / sum;
        }
    }
    Tensor::from_vec(x.shape().to_vec(), out)
}

/// Layer normalization over the last (channel) axis followed by the
/// per-channel affine `gamma * xhat + beta`. Variance is the biased estimate.
pub fn layer_norm<E: Scalar>(
    x: &Tensor<E>,
    gamma: &Tensor<E>,
    beta: &Tensor<E>,
    eps: f64,
) -> Result<Tensor<E>> {
    if x.rank() == 0 {
        return Err(Error::Dim(String::from("layer_norm needs rank >= 1")));
    }
    let (rows, c) = x.as_rows();
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::Dim(format!(
            "layer_norm affine shapes {:?}/{:?} do not match channel count {}",
            gamma.shape(),
            beta.shape(),
            c
        )));
    }
    let epsv = E::from_f64(eps);
    let inv_c = E::ONE / E::from_f64(c as f64);
    let mut out = vec![E::ZERO; rows * c];
    for r in 0..rows {
        let row = &x.data()[r * c..(r + 1) * c];
        let mut mean = E::ZERO;
        for &v in row {
            mean += v;
        }
        mean *= inv_c;
        let mut var = E::ZERO;
        for &v in row {
            let d = v - mean;
            var += d * d;
        }
        var *= inv_c;
        let inv_std = E::ONE / (var + epsv).sqrt();
        let orow = &mut out[r * c..(r + 1) * c];
        for j in 0..c {
            let xhat = (row[j] - mean) * inv_std;
            orow[j] = gamma.data()[j] * xhat + beta.data()[j];
        }
    }
    Tensor::from_vec(x.shape().to_vec(), out)
}

/// `x[N×Cin] · w[Cin×Cout]` plus an optional broadcast bias.
pub fn linear<E: Scalar>(x: &Tensor<E>, w: &Tensor<E>, b: Option<&Tensor<E>>) -> Result<Tensor<E>> {
    let mut out = matmul(x, w)?;
    if let Some(bias) = b {
        let (_, n) = out.dims2()?;
        if bias.shape() != [n] {
            return Err(Error::Dim(format!(
                "bias shape {:?} does not match output width {}",
                bias.shape(),
                n
            )));
        }
        for row in out.data_mut().chunks_mut(n) {
            for (o, &bv) in row.iter_mut().zip(bias.data()) {
                *o += bv;
            }
        }
    }
    Ok(out)
}

/// Exact-erf GELU: `x * Phi(x)`.
pub fn gelu<E: Scalar>(x: &Tensor<E>) -> Tensor<E> {
    let half = E::from_f64(0.5);
    let inv_sqrt2 = E::from_f64(core::f64::consts::FRAC_1_SQRT_2);
    let mut out = x.clone();
    for v in out.data_mut() {
        let phi = half * (E::ONE + (*v * inv_sqrt2).erf());
        *v *= phi;
    }
    out
}

pub(crate) fn gelu_derivative<E: Scalar>(x: E) -> E {
    let half = E::from_f64(0.5);
    let inv_sqrt2 = E::from_f64(core::f64::consts::FRAC_1_SQRT_2);
    let inv_sqrt2pi = E::from_f64(1.0 / libm::sqrt(2.0 * core::f64::consts::PI));
    let cdf = half * (E::ONE + (x * inv_sqrt2).erf());
    let pdf = inv_sqrt2pi * (-(x * x) * half).exp();
    cdf + x * pdf
}

/// Per-channel 2D cross-correlation with stride 1 and zero "same" padding.
///
/// `x` is `[C, h, w]`, `k` is `[C, kh, kw]` with odd kernel extents; the
/// output keeps the input's spatial size.
pub fn depthwise_conv2d<E: Scalar>(x: &Tensor<E>, k: &Tensor<E>) -> Result<Tensor<E>> {
    let (c, h, w) = x.dims3()?;
    let (ck, kh, kw) = k.dims3()?;
    if ck != c {
        return Err(Error::Dim(format!(
            "kernel channels {} do not match input channels {}",
            ck, c
        )));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::Config(format!(
            "depthwise kernel extents must be odd, got {}x{}",
            kh, kw
        )));
    }
    let ph = (kh - 1) / 2;
    let pw = (kw - 1) / 2;
    let mut out = vec![E::ZERO; c * h * w];
    for ci in 0..c {
        let xo = ci * h * w;
        let ko = ci * kh * kw;
        for i in 0..h {
            for j in 0..w {
                let mut acc = E::ZERO;
                for u in 0..kh {
                    let si = i + u;
                    if si < ph || si - ph >= h {
                        continue;
                    }
                    let si = si - ph;
                    for v in 0..kw {
                        let sj = j + v;
                        if sj < pw || sj - pw >= w {
                            continue;
                        }
                        let sj = sj - pw;
                        acc += x.data()[xo + si * w + sj] * k.data()[ko + u * kw + v];
                    }
                }
                out[ci * h * w + i * w + j] = acc;
            }
        }
    }
    Tensor::from_vec(vec![c, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn from_vec_rejects_zero_extent_and_length_mismatch() {
        assert!(matches!(
            Tensor::<f64>::from_vec(vec![2, 0], vec![]),
            Err(Error::Dim(_))
        ));
        assert!(matches!(
            Tensor::<f64>::from_vec(vec![2, 2], vec![1.0; 3]),
            Err(Error::Dim(_))
        ));
    }

    #[test]
    fn matmul_hand_example() {
        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2, 1], &[5.0, 6.0]);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_scalar_case() {
        let a = t(&[1, 1], &[2.0]);
        let b = t(&[1, 1], &[3.0]);
        assert_eq!(matmul(&a, &b).unwrap().data(), &[6.0]);
    }

    #[test]
    fn matmul_identity_is_bitwise() {
        let a = t(&[2, 2], &[0.1, -2.7, 3.3, 4.9]);
        let b = t(&[2, 2], &[1.5, 0.25, -0.75, 2.0]);
        let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let ia = matmul(&eye, &a).unwrap();
        assert_eq!(ia, a);
        assert_eq!(matmul(&ia, &b).unwrap(), matmul(&a, &b).unwrap());
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = t(&[2, 3], &[0.0; 6]);
        let b = t(&[2, 2], &[0.0; 4]);
        let err = matmul(&a, &b).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn softmax_uniform_and_shift_invariance() {
        let x = t(&[1, 4], &[0.0; 4]);
        let y = softmax_rows(&x).unwrap();
        for &v in y.data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let c = 1.7;
        let x = t(&[1, 2], &[3.0, 3.0 + c]);
        let y = softmax_rows(&x).unwrap();
        let e = libm::exp(c);
        assert!((y.data()[0] - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((y.data()[1] - e / (1.0 + e)).abs() < 1e-12);
    }

    #[test]
    fn softmax_large_values_do_not_overflow() {
        let x = t(&[1, 2], &[1000.0, 0.0]);
        let y = softmax_rows(&x).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
        assert!(y.data()[1] >= 0.0 && y.data()[1] < 1e-300);
    }

    #[test]
    fn softmax_rejects_nan() {
        let x = t(&[1, 2], &[f64::NAN, 0.0]);
        assert!(matches!(softmax_rows(&x), Err(Error::Numeric(_))));
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let x = t(&[1, 3], &[5.0, 5.0, 5.0]);
        let gamma = t(&[3], &[1.0, 1.0, 1.0]);
        let beta = t(&[3], &[0.0, 0.0, 0.0]);
        let y = layer_norm(&x, &gamma, &beta, 1e-5).unwrap();
        for &v in y.data() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn layer_norm_affine_collapse() {
        let x = t(&[1, 3], &[1.0, -4.0, 2.5]);
        let gamma = t(&[3], &[0.0; 3]);
        let beta = t(&[3], &[7.0, 7.0, 7.0]);
        let y = layer_norm(&x, &gamma, &beta, 1e-5).unwrap();
        for &v in y.data() {
            assert_eq!(v, 7.0);
        }
    }

    #[test]
    fn layer_norm_two_point_row() {
        let x = t(&[1, 2], &[1.0, 3.0]);
        let gamma = t(&[2], &[1.0, 1.0]);
        let beta = t(&[2], &[0.0, 0.0]);
        let y = layer_norm(&x, &gamma, &beta, 1e-12).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-9);
        assert!((y.data()[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn linear_identity_bias_and_example() {
        let x = t(&[1, 2], &[1.0, 2.0]);
        let wid = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(linear(&x, &wid, None).unwrap(), x);

        let zero = t(&[1, 2], &[0.0, 0.0]);
        let b = t(&[2], &[0.5, -1.5]);
        assert_eq!(linear(&zero, &wid, Some(&b)).unwrap().data(), b.data());

        let b1 = t(&[2], &[1.0, 1.0]);
        assert_eq!(linear(&x, &wid, Some(&b1)).unwrap().data(), &[2.0, 3.0]);
    }

    #[test]
    fn gelu_values() {
        let x = t(&[3], &[0.0, 10.0, -10.0]);
        let y = gelu(&x);
        assert_eq!(y.data()[0], 0.0);
        assert!((y.data()[1] - 10.0).abs() < 1e-9);
        assert!(y.data()[2].abs() < 1e-9);

        let one = t(&[1], &[1.0]);
        // Phi(1) = 0.5 * (1 + erf(1/sqrt(2)))
        assert!((gelu(&one).data()[0] - 0.8413447460685429).abs() < 1e-12);
    }

    #[test]
    fn conv_identity_and_zero() {
        let x = t(&[1, 2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut k = Tensor::zeros(vec![1, 3, 3]).unwrap();
        k.data_mut()[4] = 1.0; // center tap
        assert_eq!(depthwise_conv2d(&x, &k).unwrap(), x);

        let zero = Tensor::zeros(vec![1, 2, 3]).unwrap();
        let ones = Tensor::filled(vec![1, 3, 3], 1.0).unwrap();
        let y = depthwise_conv2d(&zero, &ones).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_ones_padded_overlap_counts() {
        let x = Tensor::filled(vec![1, 3, 3], 1.0f64).unwrap();
        let k = Tensor::filled(vec![1, 3, 3], 1.0f64).unwrap();
        let y = depthwise_conv2d(&x, &k).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn conv_rejects_even_kernel() {
        let x = Tensor::filled(vec![1, 3, 3], 1.0f64).unwrap();
        let k = Tensor::filled(vec![1, 2, 2], 1.0f64).unwrap();
        assert!(matches!(depthwise_conv2d(&x, &k), Err(Error::Config(_))));
    }

    #[test]
    fn batch_matmul_matches_per_slice_matmul() {
        let a = t(
            &[2, 2, 3],
            &[1., 2., 3., 4., 5., 6., -1., 0.5, 2., 0., 1., -2.],
        );
        let b = t(
            &[2, 3, 2],
            &[1., 0., 0., 1., 1., 1., 2., 1., 0., -1., 1., 0.],
        );
        let y = batch_matmul(&a, &b, false, 1.0).unwrap();
        for bi in 0..2 {
            let ab = matmul(
                &t(&[2, 3], &a.data()[bi * 6..(bi + 1) * 6]),
                &t(&[3, 2], &b.data()[bi * 6..(bi + 1) * 6]),
            )
            .unwrap();
            assert_eq!(&y.data()[bi * 4..(bi + 1) * 4], ab.data());
        }
    }
}
