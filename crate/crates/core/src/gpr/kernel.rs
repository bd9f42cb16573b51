//! Vectorizable squared-exponential kernel sums.
//!
//! `f64::exp` goes through libm and blocks auto-vectorization, which makes
//! the inner Monte Carlo of the GPR-MC scheme several times slower. The
//! kernel only ever needs `exp` of non-positive arguments, so a branch-free
//! Cody–Waite reduction with a degree-13 Taylor polynomial is enough.

const LOG2_E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
// 1.5 * 2^52: adding it rounds to the nearest integer and leaves that
// integer in the low mantissa bits.
const ROUND_SHIFT: f64 = 6_755_399_441_055_744.0;

/// `exp(x)` for `x <= 0`. Arguments below -708 are clamped, which returns
/// about 3e-308 instead of a subnormal or zero.
#[inline(always)]
pub fn exp_neg(x: f64) -> f64 {
    let x = x.clamp(-708.0, 0.0);
    let t = x * LOG2_E + ROUND_SHIFT;
    let k = t - ROUND_SHIFT;
    let r = (-k).mul_add(LN2_LO, (-k).mul_add(LN2_HI, x));
    let mut p: f64 = 1.0 / 6_227_020_800.0;
    for c in [
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ] {
        p = p.mul_add(r, c);
    }
    let scale = f64::from_bits((t.to_bits() << 52).wrapping_add(1023u64 << 52));
    p * scale
}

/// Points stored dimension-major (`coords[i * len + q]` is coordinate `i`
/// of point `q`) so the sums below vectorize over points.
#[derive(Debug, Clone, PartialEq)]
pub struct DimMajor {
    len: usize,
    dim: usize,
    coords: Vec<f64>,
}

impl DimMajor {
    pub fn from_rows<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>, dim: usize) -> Self {
        let len = rows.len();
        let mut coords = vec![0.0; len * dim];
        for (q, row) in rows.enumerate() {
            for (i, v) in row.iter().enumerate() {
                coords[i * len + q] = *v;
            }
        }
        Self { len, dim, coords }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `sum_q w_q * exp(-scale * |center - p_q|^2)`; `buf` needs `len` slots.
    #[inline]
    pub fn gauss_sum(&self, center: &[f64], weights: &[f64], scale: f64, buf: &mut [f64]) -> f64 {
        let n = self.len;
        let buf = &mut buf[..n];
        let weights = &weights[..n];
        buf.fill(0.0);
        for (i, c) in center.iter().enumerate().take(self.dim) {
            let col = &self.coords[i * n..(i + 1) * n];
            for (b, p) in buf.iter_mut().zip(col) {
                let diff = c - p;
                *b += diff * diff;
            }
        }
        let mut acc = [0.0f64; 8];
        let mut chunks_b = buf.chunks_exact(8);
        let mut chunks_w = weights.chunks_exact(8);
        for (cb, cw) in (&mut chunks_b).zip(&mut chunks_w) {
            for k in 0..8 {
                acc[k] += cw[k] * exp_neg(-scale * cb[k]);
            }
        }
        let mut total: f64 = chunks_b
            .remainder()
            .iter()
            .zip(chunks_w.remainder())
            .map(|(b, w)| w * exp_neg(-scale * b))
            .sum();
        total += acc.iter().sum::<f64>();
        total
    }
}
