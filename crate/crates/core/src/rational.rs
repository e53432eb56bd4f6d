//! Rational activation functions.
//!
//! Two forms are supported. The original form
//!
//! ```text
//!          a_n x^n + ... + a_1 x + a_0
//! f(x) = ---------------------------------
//!         1 + |b_m x^m| + ... + |b_1 x|
//! ```
//!
//! and the constrained form, which drops `a_0` (so `f(0) = 0`) and adds an
//! internal regularizer `|x / c|^d` with `d > n` to the denominator, forcing
//! `f(x) -> 0` as `|x| -> inf`.
//!
//! Coefficients are stored highest power first, matching how the formulas are
//! written: `numerator = [a_n, ..., a_1, (a_0)]`, `denominator = [b_m, ..., b_1]`.
//! The trainable vector is the numerator followed by the denominator.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which rational form to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Variant {
    Original,
    /// `c` scales the input of the regularizer and `d` is its exponent.
    Constrained { c: f64, d: u32 },
}

impl Variant {
    pub fn is_constrained(&self) -> bool {
        matches!(self, Variant::Constrained { .. })
    }
}

/// Coefficients of one rational activation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct RationalParams {
    variant: Variant,
    numerator: Vec<f64>,
    denominator: Vec<f64>,
    with_a0: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    variant: Variant,
    numerator: Vec<f64>,
    denominator: Vec<f64>,
    #[serde(default)]
    with_a0: Option<bool>,
}

impl TryFrom<RawParams> for RationalParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        let with_a0 = raw.with_a0.unwrap_or(!raw.variant.is_constrained());
        let p = RationalParams {
            variant: raw.variant,
            numerator: raw.numerator,
            denominator: raw.denominator,
            with_a0,
        };
        p.validate()?;
        Ok(p)
    }
}

impl From<RationalParams> for RawParams {
    fn from(p: RationalParams) -> Self {
        RawParams {
            variant: p.variant,
            numerator: p.numerator,
            denominator: p.denominator,
            with_a0: Some(p.with_a0),
        }
    }
}

impl RationalParams {
    /// Original form. `numerator` is `[a_n, ..., a_0]` (length `n + 1`),
    /// `denominator` is `[b_m, ..., b_1]`.
    pub fn original(numerator: Vec<f64>, denominator: Vec<f64>) -> Result<Self> {
        let p = RationalParams {
            variant: Variant::Original,
            numerator,
            denominator,
            with_a0: true,
        };
        p.validate()?;
        Ok(p)
    }

    /// Constrained form without `a_0`. `numerator` is `[a_n, ..., a_1]`.
    pub fn constrained(numerator: Vec<f64>, denominator: Vec<f64>, c: f64, d: u32) -> Result<Self> {
        let p = RationalParams {
            variant: Variant::Constrained { c, d },
            numerator,
            denominator,
            with_a0: false,
        };
        p.validate()?;
        Ok(p)
    }

    /// Constrained form that keeps a trainable `a_0` (the ablation setting).
    /// `numerator` is `[a_n, ..., a_0]`.
    pub fn constrained_with_a0(
        numerator: Vec<f64>,
        denominator: Vec<f64>,
        c: f64,
        d: u32,
    ) -> Result<Self> {
        let p = RationalParams {
            variant: Variant::Constrained { c, d },
            numerator,
            denominator,
            with_a0: true,
        };
        p.validate()?;
        Ok(p)
    }

    /// All-zero coefficients of the given shape, then `a_1 = 1`.
    pub fn identity(n: usize, m: usize, variant: Variant, with_a0: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("identity needs numerator degree >= 1".into()));
        }
        let len = if with_a0 { n + 1 } else { n };
        let mut numerator = vec![0.0; len];
        numerator[n - 1] = 1.0;
        let p = RationalParams {
            variant,
            numerator,
            denominator: vec![0.0; m],
            with_a0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.variant.is_constrained() && !self.with_a0 {
            return Err(Error::Config("original rationals always carry a_0".into()));
        }
        let n = self.numerator_degree();
        if self.numerator.is_empty() {
            return Err(Error::Config("numerator needs at least one coefficient".into()));
        }
        if let Variant::Constrained { c, d } = self.variant {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config(format!("regularizer scale c must be > 0, got {c}")));
            }
            if (d as usize) <= n {
                return Err(Error::Config(format!(
                    "regularizer exponent d = {d} must exceed numerator degree n = {n}"
                )));
            }
        }
        if let Some(v) = self
            .numerator
            .iter()
            .chain(&self.denominator)
            .find(|v| !v.is_finite())
        {
            return Err(Error::Config(format!("non-finite coefficient {v}")));
        }
        Ok(())
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn has_a0(&self) -> bool {
        self.with_a0
    }

    /// Numerator degree `n`.
    pub fn numerator_degree(&self) -> usize {
        if self.with_a0 {
            self.numerator.len().saturating_sub(1)
        } else {
            self.numerator.len()
        }
    }

    /// Denominator degree `m`.
    pub fn denominator_degree(&self) -> usize {
        self.denominator.len()
    }

    /// `[a_n, ..., a_1, (a_0)]`.
    pub fn numerator(&self) -> &[f64] {
        &self.numerator
    }

    /// `[b_m, ..., b_1]`.
    pub fn denominator(&self) -> &[f64] {
        &self.denominator
    }

    /// Coefficient `a_power`; zero when the term is structurally absent.
    pub fn a(&self, power: usize) -> f64 {
        let n = self.numerator_degree();
        if power > n || (power == 0 && !self.with_a0) {
            return 0.0;
        }
        self.numerator[n - power]
    }

    /// Coefficient `b_power` for `power` in `1..=m`.
    pub fn b(&self, power: usize) -> f64 {
        let m = self.denominator_degree();
        if power == 0 || power > m {
            return 0.0;
        }
        self.denominator[m - power]
    }

    pub fn trainable_len(&self) -> usize {
        self.numerator.len() + self.denominator.len()
    }

    /// Numerator coefficients followed by denominator coefficients.
    pub fn trainable(&self) -> Vec<f64> {
        let mut v = self.numerator.clone();
        v.extend_from_slice(&self.denominator);
        v
    }

    /// Copy of `self` with the trainable coefficients replaced.
    pub fn with_trainable(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.trainable_len() {
            return Err(Error::Contract(format!(
                "expected {} coefficients, got {}",
                self.trainable_len(),
                values.len()
            )));
        }
        let mut p = self.clone();
        p.set_trainable_unchecked(values);
        Ok(p)
    }

    pub(crate) fn set_trainable_unchecked(&mut self, values: &[f64]) {
        let k = self.numerator.len();
        self.numerator.copy_from_slice(&values[..k]);
        self.denominator.copy_from_slice(&values[k..]);
    }

    pub fn numerator_norm(&self) -> f64 {
        self.numerator.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn denominator_norm(&self) -> f64 {
        self.denominator.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `f(x)`; rejects non-finite input.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Input(format!("cannot evaluate rational at {x}")));
        }
        Ok(self.value(x))
    }

    /// `f(x)` without input checks.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        self.numerator_value(x) / self.denominator_value(x)
    }

    #[inline]
    fn numerator_value(&self, x: f64) -> f64 {
        let horner = self.numerator.iter().fold(0.0, |acc, &a| acc * x + a);
        if self.with_a0 {
            horner
        } else {
            horner * x
        }
    }

    /// The denominator; always `>= 1`.
    #[inline]
    pub fn denominator_value(&self, x: f64) -> f64 {
        let ax = x.abs();
        let mut den = 1.0;
        let mut pow = 1.0;
        for &b in self.denominator.iter().rev() {
            pow *= ax;
            den += b.abs() * pow;
        }
        if let Variant::Constrained { c, d } = self.variant {
            den += (ax / c).powi(d as i32);
        }
        den
    }

    /// Value, input derivative and (optionally) coefficient partials in trainable
    /// order. Absolute-value kinks use the subgradient 0.
    #[inline]
    pub fn eval_with_grad(&self, x: f64, coeff_grad: Option<&mut [f64]>) -> (f64, f64) {
        let n = self.numerator_degree();
        let m = self.denominator_degree();
        let ax = x.abs();
        let sx = sign(x);

        // Numerator and its x-derivative.
        let mut num = 0.0;
        let mut dnum = 0.0;
        let lowest = if self.with_a0 { 0 } else { 1 };
        for (i, &a) in self.numerator.iter().enumerate() {
            let p = n - i;
            debug_assert!(p >= lowest);
            num += a * powu(x, p);
            if p > 0 {
                dnum += a * p as f64 * powu(x, p - 1);
            }
        }

        let mut den = 1.0;
        let mut dden = 0.0;
        for (jdx, &b) in self.denominator.iter().enumerate() {
            let j = m - jdx;
            den += b.abs() * powu(ax, j);
            dden += b.abs() * j as f64 * powu(ax, j - 1);
        }
        if let Variant::Constrained { c, d } = self.variant {
            let r = ax / c;
            den += r.powi(d as i32);
            dden += d as f64 / c * r.powi(d as i32 - 1);
        }
        dden *= sx;

        let f = num / den;
        let dfdx = (dnum * den - num * dden) / (den * den);

        if let Some(g) = coeff_grad {
            let k = self.numerator.len();
            debug_assert_eq!(g.len(), k + m);
            for (i, gi) in g[..k].iter_mut().enumerate() {
                *gi = powu(x, n - i) / den;
            }
            let q = -num / (den * den);
            for (jdx, gj) in g[k..].iter_mut().enumerate() {
                let j = m - jdx;
                *gj = q * sign(self.denominator[jdx]) * powu(ax, j);
            }
        }
        (f, dfdx)
    }

    /// Threshold `X` with `|f(x)| < level` for every `|x| > X`.
    ///
    /// For `|x| >= 1` the numerator is at most `A |x|^n` with `A = sum |a_i|`, and the
    /// denominator is at least `(|x| / c)^d`, so `|f(x)| <= A c^d |x|^(n - d)`.
    /// Solving for the level gives `X = max(1, (A c^d / level)^(1 / (d - n)))`.
    pub fn asymptotic_bound(&self, level: f64) -> Result<f64> {
        let Variant::Constrained { c, d } = self.variant else {
            return Err(Error::Contract("original rationals have no asymptotic bound".into()));
        };
        if !(level > 0.0) {
            return Err(Error::Contract(format!("bound level must be positive, got {level}")));
        }
        // Tightest numerator degree actually in use.
        let Some(first) = self.numerator.iter().position(|&a| a != 0.0) else {
            return Ok(0.0);
        };
        let n_eff = self.numerator_degree() - first;
        if (d as usize) <= n_eff {
            return Err(Error::Contract(format!(
                "exponent d = {d} does not exceed numerator degree {n_eff}"
            )));
        }
        let a_sum: f64 = self.numerator.iter().map(|a| a.abs()).sum();
        let k = (d as usize - n_eff) as f64;
        let log_x = (a_sum.ln() + d as f64 * c.ln() - level.ln()) / k;
        Ok(log_x.exp().max(1.0))
    }
}

impl fmt::Display for RationalParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.numerator_degree();
        let mut terms = Vec::new();
        for (i, a) in self.numerator.iter().enumerate() {
            terms.push(match n - i {
                0 => format!("{a}"),
                1 => format!("{a}x"),
                p => format!("{a}x^{p}"),
            });
        }
        let mut den = Vec::new();
        let m = self.denominator_degree();
        for (j, b) in self.denominator.iter().enumerate() {
            den.push(match m - j {
                1 => format!("|{b}x|"),
                p => format!("|{b}x^{p}|"),
            });
        }
        den.push("1".into());
        if let Variant::Constrained { c, d } = self.variant {
            den.push(format!("|x/{c}|^{d}"));
        }
        write!(f, "({}) / ({})", terms.join(" + "), den.join(" + "))
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn powu(x: f64, p: usize) -> f64 {
    x.powi(p as i32)
}

/// Default regularizer scale for constrained rationals.
pub const DEFAULT_C: f64 = 2.0;

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 6] = [
    "original_low",
    "original_high",
    "constrained_low",
    "constrained_high",
    "identity",
    "leaky_relu_like",
];

/// Named coefficient sets. The four `*_low`/`*_high` entries are the published
/// initialization table (denominator columns read as `[b_2, b_1]`); `identity`
/// is `f(x) = x` at degrees (3, 2); `leaky_relu_like` is the least-squares fit of
/// Leaky ReLU on `[-5, 5]` at degrees (3, 2).
pub fn preset(name: &str) -> Result<RationalParams> {
    match name {
        "original_low" => RationalParams::original(vec![0.096, 0.651, 1.178, 0.381], vec![0.149, 0.249]),
        "original_high" => RationalParams::original(vec![5.0, 10.0, 40.0, 0.1], vec![5.0, 34.0]),
        "constrained_low" => RationalParams::constrained(vec![0.5, 0.1, 2.0], vec![0.05, 0.5], DEFAULT_C, 4),
        "constrained_high" => {
            RationalParams::constrained(vec![3.966, 19.19, 15.78], vec![0.0, 34.8], DEFAULT_C, 4)
        }
        "identity" => RationalParams::identity(3, 2, Variant::Original, true),
        "leaky_relu_like" => {
            static FIT: OnceLock<RationalParams> = OnceLock::new();
            let fitted = FIT.get_or_init(|| {
                crate::fit::fit_init(
                    &crate::fit::Target::LeakyRelu { slope: crate::fit::DEFAULT_LEAKY_SLOPE },
                    (-5.0, 5.0),
                    (3, 2),
                    Variant::Original,
                    &crate::fit::FitOptions::default(),
                )
                .expect("built-in fit is well posed")
                .params
            });
            Ok(fitted.clone())
        }
        other => Err(Error::Registry(other.to_string())),
    }
}

/// Accepts either a preset name or inline coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RationalSource {
    Preset(String),
    Inline(RationalParams),
}

impl RationalSource {
    pub fn resolve(&self) -> Result<RationalParams> {
        match self {
            RationalSource::Preset(name) => preset(name),
            RationalSource::Inline(p) => {
                p.validate()?;
                Ok(p.clone())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sweep_formula_constant_term() {
        let p = RationalParams::original(vec![3.86, 123.0, -375.0, -1114.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(p.eval(0.0).unwrap(), -1114.0);
    }

    #[test]
    fn constrained_hand_value() {
        let p = RationalParams::constrained(vec![0.0, 0.0, 1.0], vec![0.0, 0.0], 2.0, 4).unwrap();
        assert_eq!(p.eval(1.0).unwrap(), 0.9411764705882353);
        assert_eq!(p.eval(0.0).unwrap(), 0.0);
    }

    #[test]
    fn non_finite_input_rejected() {
        let p = preset("identity").unwrap();
        assert!(matches!(p.eval(f64::NAN), Err(Error::Input(_))));
        assert!(p.eval(f64::INFINITY).is_err());
    }

    #[test]
    fn identity_preset_is_identity() {
        let p = preset("identity").unwrap();
        for x in [-7.5, -1.0, 0.0, 0.3, 12.0] {
            assert_eq!(p.eval(x).unwrap(), x);
            let (_, dx) = p.eval_with_grad(x, None);
            assert_eq!(dx, 1.0);
        }
    }

    #[test]
    fn table_presets() {
        assert_eq!(preset("original_high").unwrap().a(1), 40.0);
        assert_eq!(preset("constrained_high").unwrap().a(3), 3.966);
        let low = preset("original_low").unwrap();
        assert_eq!((low.b(2), low.b(1)), (0.149, 0.249));
        assert_eq!(low.a(0), 0.381);
        assert!(matches!(preset("tanh"), Err(Error::Registry(_))));
    }

    #[test]
    fn constrained_coefficient_grads_vanish_at_zero() {
        let p = preset("constrained_high").unwrap();
        let mut g = vec![1.0; p.trainable_len()];
        let (f, _) = p.eval_with_grad(0.0, Some(&mut g));
        assert_eq!(f, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(RationalParams::constrained(vec![1.0, 0.0, 1.0], vec![], 0.0, 4).is_err());
        assert!(RationalParams::constrained(vec![1.0, 0.0, 1.0], vec![], 2.0, 3).is_err());
        assert!(RationalParams::original(vec![f64::NAN, 1.0], vec![]).is_err());
    }

    #[test]
    fn bound_of_linear_numerator() {
        let p = RationalParams::constrained(vec![0.0, 0.0, 1.0], vec![0.0, 0.0], 2.0, 4).unwrap();
        let x = p.asymptotic_bound(1.0).unwrap();
        assert!(x <= 16.0 + 1e-9, "{x}");
        for i in 1..=10_000 {
            let t = x * (1.0 + 9.0 * i as f64 / 10_000.0);
            assert!(p.value(t).abs() < 1.0 && p.value(-t).abs() < 1.0);
        }
    }

    #[test]
    fn bound_of_zero_numerator_and_original() {
        let z = RationalParams::constrained(vec![0.0, 0.0, 0.0], vec![1.0, 1.0], 2.0, 4).unwrap();
        assert_eq!(z.asymptotic_bound(1.0).unwrap(), 0.0);
        assert_eq!(z.value(3.0), 0.0);
        assert!(matches!(
            preset("original_low").unwrap().asymptotic_bound(1.0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn bound_of_constrained_high() {
        let p = preset("constrained_high").unwrap();
        let x = p.asymptotic_bound(1.0).unwrap();
        for i in 1..=10_000 {
            let t = x * (1.0 + 9.0 * i as f64 / 10_000.0);
            assert!(p.value(t).abs() < 1.0 && p.value(-t).abs() < 1.0);
        }
    }

    #[test]
    fn serde_roundtrip_and_defaults() {
        let p = preset("constrained_low").unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let back: RationalParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
        let q: RationalParams = serde_json::from_str(
            r#"{"variant":{"kind":"original"},"numerator":[1.0,0.0],"denominator":[]}"#,
        )
        .unwrap();
        assert!(q.has_a0());
        assert_relative_eq!(q.eval(2.5).unwrap(), 2.5);
        let bad = serde_json::from_str::<RationalParams>(
            r#"{"variant":{"kind":"original"},"numerator":[1.0],"denominator":[],"extra":1}"#,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn source_resolves_presets_and_inline() {
        let s: RationalSource = serde_json::from_str(r#""original_high""#).unwrap();
        assert_eq!(s.resolve().unwrap(), preset("original_high").unwrap());
    }
}
