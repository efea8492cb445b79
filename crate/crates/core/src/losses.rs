//! Training losses with analytic gradients.
//!
//! Every loss takes the foreground probability map `s` and returns its value
//! together with `∂value/∂s` at every pixel. Values are mean-reduced over the
//! pixels of one image; the background channel of two-class losses is
//! `1 - s`. Probabilities are clamped to `[ε, 1 - ε]` before any logarithm,
//! and the clamp's zero derivative is propagated.

use crate::grid::{threshold, BinaryMask, Geometry, ProbMap, ScalarGrid};
use crate::levelset::{signed_distance, DistanceMode, LevelSetMap};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    /// `∂value/∂s`, same geometry as `s`.
    pub grad: ScalarGrid,
}

impl LossResult {
    fn new(geometry: &Geometry, value: f64, grad: Vec<f64>) -> Self {
        Self {
            value,
            grad: ScalarGrid::from_parts_unchecked(geometry.clone(), grad),
        }
    }

    /// `self * a + other * b`, value and gradient alike.
    pub fn linear_combination(&self, a: f64, other: &LossResult, b: f64) -> Result<LossResult> {
        self.grad
            .geometry()
            .require_same(other.grad.geometry(), "loss combination")?;
        let grad = self
            .grad
            .values()
            .iter()
            .zip(other.grad.values())
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(LossResult::new(self.grad.geometry(), a * self.value + b * other.value, grad))
    }

    fn scaled(&self, a: f64) -> LossResult {
        let grad = self.grad.values().iter().map(|x| a * x).collect();
        LossResult::new(self.grad.geometry(), a * self.value, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    /// Border weight of the distance-weighted cross-entropy.
    pub w0: f64,
    /// Border width (mm) of the distance-weighted cross-entropy.
    pub sigma: f64,
    /// Focal exponent.
    pub gamma: f64,
    /// Distance exponent of the Hausdorff loss.
    pub beta: f64,
    pub epsilon: f64,
    /// Threshold turning probabilities into a region.
    pub delta: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            w0: 10.0,
            sigma: 5.0,
            gamma: 2.0,
            beta: 2.0,
            epsilon: 1e-10,
            delta: 0.5,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.w0 >= 0.0
            && self.sigma > 0.0
            && self.gamma >= 0.0
            && self.beta >= 0.0
            && self.epsilon > 0.0
            && self.delta > 0.0
            && self.delta < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("hyper-parameters out of range: {self:?}")))
        }
    }
}

fn check(s: &ProbMap, other: &Geometry, what: &str) -> Result<usize> {
    s.geometry().require_same(other, what)?;
    Ok(s.len())
}

/// Clamped probability and the derivative of the clamp.
fn clamp(p: f64, eps: f64) -> (f64, f64) {
    if p < eps {
        (eps, 0.0)
    } else if p > 1.0 - eps {
        (1.0 - eps, 0.0)
    } else {
        (p, 1.0)
    }
}

/// Boundary loss: mean of `φ_G · s`; the gradient is `φ_G / |Ω|`.
pub fn boundary_loss(s: &ProbMap, phi: &LevelSetMap) -> Result<LossResult> {
    let n = check(s, phi.geometry(), "boundary loss")? as f64;
    let value = s
        .values()
        .iter()
        .zip(phi.values())
        .map(|(p, f)| p * f)
        .sum::<f64>()
        / n;
    let grad = phi.values().iter().map(|f| f / n).collect();
    Ok(LossResult::new(s.geometry(), value, grad))
}

/// Two-class generalized Dice loss with squared inverse class-size weights.
pub fn gdl(s: &ProbMap, g: &BinaryMask, eps: f64) -> Result<LossResult> {
    check(s, g.geometry(), "generalized Dice")?;
    let fg = g.count() as f64;
    let bg = g.len() as f64 - fg;
    let w_g = 1.0 / (fg + eps).powi(2);
    let w_b = 1.0 / (bg + eps).powi(2);

    let (mut inter_g, mut inter_b, mut sum_s) = (0.0, 0.0, 0.0);
    for (&p, &t) in s.values().iter().zip(g.values()) {
        if t == 1 {
            inter_g += p;
        } else {
            inter_b += 1.0 - p;
        }
        sum_s += p;
    }
    let n = g.len() as f64;
    let numer = w_g * inter_g + w_b * inter_b;
    let denom = w_g * (sum_s + fg) + w_b * (2.0 * n - sum_s - fg) + eps;
    let value = 1.0 - 2.0 * numer / denom;

    let d_denom = w_g - w_b;
    let grad = g
        .values()
        .iter()
        .map(|&t| {
            let d_numer = if t == 1 { w_g } else { -w_b };
            -2.0 * (d_numer * denom - numer * d_denom) / (denom * denom)
        })
        .collect();
    Ok(LossResult::new(s.geometry(), value, grad))
}

/// Distance-weighted cross-entropy.
///
/// Pixel weights are `u_c(p) = g_c(p) [w_c + w0 exp(-D(p)² / 2σ²)]` with
/// `w_c` the fraction of pixels in class `c` and `D` the distance from a
/// pixel to the opposite class, i.e. `|φ_G|`.
pub fn weighted_ce(
    s: &ProbMap,
    g: &BinaryMask,
    distance: &ScalarGrid,
    w0: f64,
    sigma: f64,
    eps: f64,
) -> Result<LossResult> {
    let n = check(s, g.geometry(), "weighted cross-entropy")?;
    check(s, distance.geometry(), "weighted cross-entropy distances")?;
    let nf = n as f64;
    let w_fg = g.count() as f64 / nf;
    let w_bg = 1.0 - w_fg;
    let two_sigma2 = 2.0 * sigma * sigma;

    let mut value = 0.0;
    let mut grad = Vec::with_capacity(n);
    for ((&p, &t), &d) in s.values().iter().zip(g.values()).zip(distance.values()) {
        let border = w0 * (-d * d / two_sigma2).exp();
        let (q, dq) = clamp(p, eps);
        if t == 1 {
            let u = w_fg + border;
            value -= u * q.ln();
            grad.push(-u / q * dq / nf);
        } else {
            let u = w_bg + border;
            value -= u * (1.0 - q).ln();
            grad.push(u / (1.0 - q) * dq / nf);
        }
    }
    Ok(LossResult::new(s.geometry(), value / nf, grad))
}

/// Focal loss `-Σ_c (1 - s_c)^γ g_c log s_c`, mean over pixels.
pub fn focal(s: &ProbMap, g: &BinaryMask, gamma: f64, eps: f64) -> Result<LossResult> {
    let n = check(s, g.geometry(), "focal")?;
    let nf = n as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (&p, &t) in s.values().iter().zip(g.values()) {
        let (q, dq) = clamp(p, eps);
        // Probability of the true class and its derivative w.r.t. s.
        let (pt, sign) = if t == 1 { (q, 1.0) } else { (1.0 - q, -1.0) };
        let modulation = (1.0 - pt).powf(gamma);
        let log_pt = pt.ln();
        value -= modulation * log_pt;
        let d_modulation = if gamma == 0.0 {
            0.0
        } else {
            -gamma * (1.0 - pt).powf(gamma - 1.0)
        };
        let d_pt = -(d_modulation * log_pt + modulation / pt);
        grad.push(d_pt * sign * dq / nf);
    }
    Ok(LossResult::new(s.geometry(), value / nf, grad))
}

/// Unsigned distance to a region's boundary, falling back to zeros for an
/// empty or full region.
pub fn boundary_distance(region: &BinaryMask) -> ScalarGrid {
    signed_distance(region, DistanceMode::Full3d).magnitude()
}

/// Hausdorff loss with both distance maps computed at call time.
pub fn hausdorff_loss(s: &ProbMap, g: &BinaryMask, beta: f64, delta: f64) -> Result<LossResult> {
    check(s, g.geometry(), "Hausdorff")?;
    let dg = boundary_distance(g);
    hausdorff_loss_with(s, g, &dg, beta, delta)
}

/// Hausdorff loss `mean (g - s)² (D_G^β + D_S^β)` with a precomputed `D_G`.
/// `D_S` is recomputed from `threshold(s, δ)`; both maps are treated as
/// constants in the gradient.
pub fn hausdorff_loss_with(
    s: &ProbMap,
    g: &BinaryMask,
    dg: &ScalarGrid,
    beta: f64,
    delta: f64,
) -> Result<LossResult> {
    let n = check(s, g.geometry(), "Hausdorff")?;
    check(s, dg.geometry(), "Hausdorff distances")?;
    let ds = boundary_distance(&threshold(s, delta)?);
    let nf = n as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (((&p, &t), &a), &b) in s
        .values()
        .iter()
        .zip(g.values())
        .zip(dg.values())
        .zip(ds.values())
    {
        let weight = a.powf(beta) + b.powf(beta);
        let err = p - f64::from(t);
        value += err * err * weight;
        grad.push(2.0 * err * weight / nf);
    }
    Ok(LossResult::new(s.geometry(), value / nf, grad))
}

/// Regional term paired with the boundary loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionalLoss {
    Gdl,
    WeightedCe,
    Focal,
}

impl RegionalLoss {
    pub fn name(self) -> &'static str {
        match self {
            RegionalLoss::Gdl => "gdl",
            RegionalLoss::WeightedCe => "weighted_ce",
            RegionalLoss::Focal => "focal",
        }
    }

    /// Evaluate with `|φ|` standing in for the class distance of the
    /// weighted cross-entropy.
    pub fn evaluate(
        self,
        s: &ProbMap,
        g: &BinaryMask,
        phi: &LevelSetMap,
        params: &HyperParams,
    ) -> Result<LossResult> {
        match self {
            RegionalLoss::Gdl => gdl(s, g, params.epsilon),
            RegionalLoss::WeightedCe => weighted_ce(
                s,
                g,
                &phi.magnitude(),
                params.w0,
                params.sigma,
                params.epsilon,
            ),
            RegionalLoss::Focal => focal(s, g, params.gamma, params.epsilon),
        }
    }
}

impl std::str::FromStr for RegionalLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gdl" => Ok(RegionalLoss::Gdl),
            "weighted_ce" | "wce" => Ok(RegionalLoss::WeightedCe),
            "focal" => Ok(RegionalLoss::Focal),
            other => Err(Error::InvalidArgument(format!("unknown regional loss {other:?}"))),
        }
    }
}

/// Unweighted component values of a combined loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Components {
    pub regional: f64,
    pub boundary: f64,
}

/// `w_R · L_R + w_B · L_B`.
pub fn combined(
    s: &ProbMap,
    g: &BinaryMask,
    phi: &LevelSetMap,
    regional: RegionalLoss,
    params: &HyperParams,
    weights: (f64, f64),
) -> Result<LossResult> {
    combined_with_components(s, g, phi, regional, params, weights).map(|(r, _)| r)
}

/// [`combined`] plus the unweighted terms. A term whose weight is exactly
/// zero is not evaluated and reports 0.
pub fn combined_with_components(
    s: &ProbMap,
    g: &BinaryMask,
    phi: &LevelSetMap,
    regional: RegionalLoss,
    params: &HyperParams,
    (w_r, w_b): (f64, f64),
) -> Result<(LossResult, Components)> {
    check(s, g.geometry(), "combined")?;
    check(s, phi.geometry(), "combined level set")?;
    let region = (w_r != 0.0)
        .then(|| regional.evaluate(s, g, phi, params))
        .transpose()?;
    let bound = (w_b != 0.0).then(|| boundary_loss(s, phi)).transpose()?;
    let components = Components {
        regional: region.as_ref().map_or(0.0, |r| r.value),
        boundary: bound.as_ref().map_or(0.0, |r| r.value),
    };
    let total = match (region, bound) {
        (Some(r), Some(b)) => r.linear_combination(w_r, &b, w_b)?,
        (Some(r), None) => r.scaled(w_r),
        (None, Some(b)) => b.scaled(w_b),
        (None, None) => LossResult::new(s.geometry(), 0.0, vec![0.0; s.len()]),
    };
    Ok((total, components))
}
