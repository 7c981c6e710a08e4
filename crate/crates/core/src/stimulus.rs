//! Mechanical stimulus: octahedral shear strain, smooth activations, the
//! cell-averaged (homogenized) stimulus and its derivatives.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::fft_solver::CorrectorField;
use crate::par;
use crate::tensor::SymComponents;

/// Normalization of the octahedral shear strain.
pub const STIMULUS_SCALE: f64 = 0.0375;
/// Below this value `γ_oct` is treated as zero and its derivative vanishes.
pub const GAMMA_SINGULAR: f64 = 1e-12;
/// Default steepness of the smooth activations.
pub const DEFAULT_SHARPNESS: f64 = 40.0;

/// Stimulus thresholds separating resorption, bone, cartilage and fibrous
/// tissue.
pub const RESORPTION_LIMIT: f64 = 0.01;
pub const BONE_LIMIT: f64 = 3.0;
pub const CARTILAGE_LIMIT: f64 = 5.0;

/// `(2 / 3a) sqrt(3 tr(ε²) - tr(ε)²)`, evaluated through the deviator
/// (`3 tr(ε²) - tr(ε)² = 3 |dev ε|²`) so pure dilatations give exactly zero.
pub fn gamma_oct(e: &SymComponents) -> f64 {
    let m = (e[0] + e[1] + e[2]) / 3.0;
    let (d0, d1, d2) = (e[0] - m, e[1] - m, e[2] - m);
    let dev_sq = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * (e[3] * e[3] + e[4] * e[4] + e[5] * e[5]);
    2.0 / (3.0 * STIMULUS_SCALE) * (3.0 * dev_sq).max(0.0).sqrt()
}

/// Directional derivative of [`gamma_oct`] at `e0` along `de`.
pub fn d_gamma_oct(e0: &SymComponents, de: &SymComponents) -> f64 {
    let g = gamma_oct(e0);
    if g < GAMMA_SINGULAR {
        return 0.0;
    }
    let inner = e0[0] * de[0] + e0[1] * de[1] + e0[2] * de[2] + 2.0 * (e0[3] * de[3] + e0[4] * de[4] + e0[5] * de[5]);
    let tr0 = e0[0] + e0[1] + e0[2];
    let trd = de[0] + de[1] + de[2];
    4.0 / (3.0 * STIMULUS_SCALE * STIMULUS_SCALE * g) * (inner - tr0 * trd / 3.0)
}

/// Gradient of [`gamma_oct`] with respect to the tensor components, i.e.
/// `d_gamma_oct(e0, de) = Σ_j grad[j] de[j]`.
pub fn gamma_oct_gradient(e0: &SymComponents) -> SymComponents {
    let g = gamma_oct(e0);
    if g < GAMMA_SINGULAR {
        return [0.0; 6];
    }
    let k = 4.0 / (3.0 * STIMULUS_SCALE * STIMULUS_SCALE * g);
    let m = (e0[0] + e0[1] + e0[2]) / 3.0;
    [
        k * (e0[0] - m),
        k * (e0[1] - m),
        k * (e0[2] - m),
        2.0 * k * e0[3],
        2.0 * k * e0[4],
        2.0 * k * e0[5],
    ]
}

/// Engineering Voigt vector of tensor components.
pub fn to_voigt(e: &SymComponents) -> [f64; 6] {
    [e[0], e[1], e[2], 2.0 * e[3], 2.0 * e[4], 2.0 * e[5]]
}

/// Frobenius-gradient matrix from a gradient with respect to the
/// engineering Voigt vector.
pub fn gradient_matrix(voigt_gradient: &[f64; 6]) -> Matrix3<f64> {
    let g = voigt_gradient;
    Matrix3::new(g[0], g[5], g[4], g[5], g[1], g[3], g[4], g[3], g[2])
}

/// Scalar function of the stimulus together with its derivative.
pub trait Response {
    fn value(&self, s: f64) -> f64;
    fn slope(&self, s: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    /// Smooth step `1_[threshold, ∞)`.
    Sigmoid { threshold: f64 },
    /// Smooth window `1_[lower, upper]`.
    Window { lower: f64, upper: f64 },
}

/// `σ_a(S) = 1 / (1 + exp(-k (S - a) / a))`; the window is
/// `σ_lower (1 - σ_upper)` rescaled to peak one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activation {
    kind: ActivationKind,
    sharpness: f64,
    peak: f64,
}

#[inline]
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Activation {
    pub fn sigmoid(threshold: f64, sharpness: f64) -> Self {
        assert!(threshold > 0.0 && sharpness > 0.0);
        Self { kind: ActivationKind::Sigmoid { threshold }, sharpness, peak: 1.0 }
    }

    pub fn window(lower: f64, upper: f64, sharpness: f64) -> Self {
        assert!(0.0 < lower && lower < upper && sharpness > 0.0);
        let raw = Self { kind: ActivationKind::Window { lower, upper }, sharpness, peak: 1.0 };
        let peak = raw.locate_peak(lower, upper);
        Self { peak, ..raw }
    }

    pub fn kind(&self) -> ActivationKind {
        self.kind
    }

    pub fn sharpness(&self) -> f64 {
        self.sharpness
    }

    #[inline]
    fn step(&self, threshold: f64, s: f64) -> (f64, f64) {
        let scale = self.sharpness / threshold;
        let v = logistic(scale * (s - threshold));
        (v, scale * v * (1.0 - v))
    }

    fn unnormalized(&self, s: f64) -> f64 {
        match self.kind {
            ActivationKind::Sigmoid { threshold } => self.step(threshold, s).0,
            ActivationKind::Window { lower, upper } => self.step(lower, s).0 * (1.0 - self.step(upper, s).0),
        }
    }

    /// Maximum of the raw window: coarse scan, then golden-section refinement.
    fn locate_peak(&self, lower: f64, upper: f64) -> f64 {
        let samples = 2000;
        let (mut best, mut best_v) = (lower, f64::NEG_INFINITY);
        for i in 0..=samples {
            let s = lower + (upper - lower) * i as f64 / samples as f64;
            let v = self.unnormalized(s);
            if v > best_v {
                best = s;
                best_v = v;
            }
        }
        let h = (upper - lower) / samples as f64;
        let (mut a, mut b) = (best - h, best + h);
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let c = b - ratio * (b - a);
            let d = a + ratio * (b - a);
            if self.unnormalized(c) > self.unnormalized(d) {
                b = d;
            } else {
                a = c;
            }
        }
        self.unnormalized(0.5 * (a + b)).max(best_v)
    }
}

impl Response for Activation {
    fn value(&self, s: f64) -> f64 {
        (self.unnormalized(s) / self.peak).min(1.0)
    }

    fn slope(&self, s: f64) -> f64 {
        match self.kind {
            ActivationKind::Sigmoid { threshold } => self.step(threshold, s).1,
            ActivationKind::Window { lower, upper } => {
                let (a, da) = self.step(lower, s);
                let (b, db) = self.step(upper, s);
                (da * (1.0 - b) - a * db) / self.peak
            }
        }
    }
}

/// Number of stimulus-dependent channels feeding the reaction terms.
pub const CHANNELS: usize = 7;

/// Rate coefficients and activations of the four cell types
/// (progenitor, fibroblast, chondrocyte, osteoblast).
///
/// Channels, all in `[0, 1]`:
/// `0` progenitor activity `σ_0.01`, `1` fibrous `σ_5`, `2` cartilage
/// `φ_3,5`, `3` bone `φ_0.01,3`, `4..=6` differentiation shares
/// `μ_i σ_0.01` towards fibroblasts, chondrocytes and osteoblasts, where
/// `μ_i` is the fate window normalized to sum one.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub proliferation: [f64; 4],
    pub differentiation: f64,
    pub apoptosis: [f64; 4],
    resorption: Activation,
    fibrous: Activation,
    cartilage: Activation,
    bone: Activation,
}

/// Reaction rates (1/day) for one set of channel values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRates {
    pub proliferation: [f64; 4],
    /// Differentiation from progenitors into fib, cho, ost.
    pub differentiation: [f64; 3],
    pub apoptosis: [f64; 4],
}

impl RateTable {
    pub fn with_sharpness(sharpness: f64) -> Self {
        Self {
            proliferation: [0.6, 0.55, 0.2, 0.3],
            differentiation: -(0.7f64.ln()),
            apoptosis: [-(0.95f64.ln()), -(0.95f64.ln()), -(0.9f64.ln()), -(0.84f64.ln())],
            resorption: Activation::sigmoid(RESORPTION_LIMIT, sharpness),
            fibrous: Activation::sigmoid(CARTILAGE_LIMIT, sharpness),
            cartilage: Activation::window(BONE_LIMIT, CARTILAGE_LIMIT, sharpness),
            bone: Activation::window(RESORPTION_LIMIT, BONE_LIMIT, sharpness),
        }
    }

    /// All rates zero; used to isolate transport in tests.
    pub fn inert() -> Self {
        Self { proliferation: [0.0; 4], differentiation: 0.0, apoptosis: [0.0; 4], ..Self::default() }
    }

    pub fn activations(&self) -> [&Activation; 4] {
        [&self.resorption, &self.fibrous, &self.cartilage, &self.bone]
    }

    /// Channel values and their derivatives with respect to `S`.
    pub fn channels_with_slopes(&self, s: f64) -> ([f64; CHANNELS], [f64; CHANNELS]) {
        let (a0, d0) = (self.resorption.value(s), self.resorption.slope(s));
        let w = [self.fibrous.value(s), self.cartilage.value(s), self.bone.value(s)];
        let dw = [self.fibrous.slope(s), self.cartilage.slope(s), self.bone.slope(s)];
        let sum = w[0] + w[1] + w[2] + 1e-12;
        let dsum = dw[0] + dw[1] + dw[2];
        let mut v = [a0, w[0], w[1], w[2], 0.0, 0.0, 0.0];
        let mut d = [d0, dw[0], dw[1], dw[2], 0.0, 0.0, 0.0];
        for i in 0..3 {
            let mu = w[i] / sum;
            let dmu = (dw[i] * sum - w[i] * dsum) / (sum * sum);
            v[4 + i] = mu * a0;
            d[4 + i] = dmu * a0 + mu * d0;
        }
        (v, d)
    }

    pub fn channels(&self, s: f64) -> [f64; CHANNELS] {
        self.channels_with_slopes(s).0
    }

    /// Rates from (possibly cell-averaged) channel values.
    pub fn rates(&self, ch: &[f64; CHANNELS]) -> CellRates {
        let act = [ch[0], ch[1], ch[2], ch[3]];
        let mut proliferation = [0.0; 4];
        let mut apoptosis = [0.0; 4];
        for i in 0..4 {
            proliferation[i] = self.proliferation[i] * act[i];
            apoptosis[i] = self.apoptosis[i] * (1.0 - act[i]);
        }
        let differentiation = [0, 1, 2].map(|i| self.differentiation * ch[4 + i]);
        CellRates { proliferation, differentiation, apoptosis }
    }
}

impl Default for RateTable {
    fn default() -> Self {
        Self::with_sharpness(DEFAULT_SHARPNESS)
    }
}

/// Cell average of `resp(γ_oct(G(y) ε))` for a vector-valued response.
/// `resp` returns values and slopes. When `want_gradient` is set the second
/// result holds, per component, the gradient with respect to the
/// engineering Voigt strain.
pub fn hom_quadrature<const K: usize>(
    corrector: &CorrectorField,
    strain: &SymComponents,
    resp: impl Fn(f64) -> ([f64; K], [f64; K]) + Sync,
    want_gradient: bool,
) -> ([f64; K], [[f64; 6]; K]) {
    let v = to_voigt(strain);
    let count = corrector.voxel_count();
    let leaf = |p: usize| {
        let local = corrector.local_strain(p, &v);
        let (val, slope) = resp(gamma_oct(&local));
        let mut grad = [[0.0; 6]; K];
        if want_gradient {
            let dg = gamma_oct_gradient(&local);
            let g = corrector.block(p);
            for i in 0..6 {
                let mut di = 0.0;
                for j in 0..6 {
                    di += dg[j] * g[i * 6 + j] as f64;
                }
                for k in 0..K {
                    grad[k][i] = slope[k] * di;
                }
            }
        }
        (val, grad)
    };
    let combine = |(mut a, mut ga): ([f64; K], [[f64; 6]; K]), (b, gb): ([f64; K], [[f64; 6]; K])| {
        for k in 0..K {
            a[k] += b[k];
            for i in 0..6 {
                ga[k][i] += gb[k][i];
            }
        }
        (a, ga)
    };
    let (sum, grad) = par::tree_reduce(count, &leaf, &combine);
    let c = count as f64;
    (sum.map(|x| x / c), grad.map(|row| row.map(|x| x / c)))
}

/// Cell average of `∂resp/∂G` contracted with the corrector difference
/// `(upper - lower) / step` at fixed macro strain.
pub fn hom_density_quadrature<const K: usize>(
    center: &CorrectorField,
    lower: &CorrectorField,
    upper: &CorrectorField,
    step: f64,
    strain: &SymComponents,
    resp: impl Fn(f64) -> ([f64; K], [f64; K]) + Sync,
) -> [f64; K] {
    assert!(center.n == lower.n && lower.n == upper.n, "corrector resolutions differ");
    let v = to_voigt(strain);
    let count = center.voxel_count();
    let leaf = |p: usize| {
        let local = center.local_strain(p, &v);
        let (_, slope) = resp(gamma_oct(&local));
        let lo = lower.local_strain(p, &v);
        let hi = upper.local_strain(p, &v);
        let de: SymComponents = std::array::from_fn(|j| (hi[j] - lo[j]) / step);
        let dg = d_gamma_oct(&local, &de);
        slope.map(|s| s * dg)
    };
    let combine = |mut a: [f64; K], b: [f64; K]| {
        for k in 0..K {
            a[k] += b[k];
        }
        a
    };
    par::tree_reduce(count, &leaf, &combine).map(|x| x / count as f64)
}

fn scalar<F: Response + Sync + ?Sized>(f: &F) -> impl Fn(f64) -> ([f64; 1], [f64; 1]) + Sync + '_ {
    move |s| ([f.value(s)], [f.slope(s)])
}

/// `mean_Y f(γ_oct(G(y) : ε))`.
pub fn hom_stimulus<F: Response + Sync + ?Sized>(corrector: &CorrectorField, strain: &SymComponents, f: &F) -> f64 {
    hom_quadrature(corrector, strain, scalar(f), false).0[0]
}

/// Frobenius gradient of [`hom_stimulus`] with respect to the macro strain.
pub fn d_hom_stimulus_strain<F: Response + Sync + ?Sized>(
    corrector: &CorrectorField,
    strain: &SymComponents,
    f: &F,
) -> Matrix3<f64> {
    gradient_matrix(&hom_quadrature(corrector, strain, scalar(f), true).1[0])
}

/// Sensitivity of [`hom_stimulus`] to a volume fraction, approximated by
/// the corrector difference between neighbouring cells.
pub fn d_hom_stimulus_density<F: Response + Sync + ?Sized>(
    center: &CorrectorField,
    lower: &CorrectorField,
    upper: &CorrectorField,
    step: f64,
    strain: &SymComponents,
    f: &F,
) -> f64 {
    hom_density_quadrature(center, lower, upper, step, strain, scalar(f))[0]
}

/// First-order expansion of a scalar map `N(ε, ρ, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linearization {
    /// Gradient with respect to the engineering Voigt strain.
    pub strain: [f64; 6],
    pub scaffold: f64,
    pub bone: f64,
}

/// Cotangents on `(ε, ρ, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cotangents {
    pub strain: [f64; 6],
    pub scaffold: f64,
    pub bone: f64,
}

impl Linearization {
    /// `D N (δε, δρ, δb)`.
    pub fn apply(&self, strain: &[f64; 6], scaffold: f64, bone: f64) -> f64 {
        self.strain.iter().zip(strain).map(|(a, b)| a * b).sum::<f64>() + self.scaffold * scaffold + self.bone * bone
    }

    /// Adjoint action `y* ↦ y* D N`.
    pub fn adjoint(&self, cotangent: f64) -> Cotangents {
        Cotangents {
            strain: self.strain.map(|g| g * cotangent),
            scaffold: self.scaffold * cotangent,
            bone: self.bone * cotangent,
        }
    }
}
