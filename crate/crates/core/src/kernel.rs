//! Coagulation kernel families, their parameter derivatives, and separable
//! majorants.
//!
//! A majorant for an event class is a list of components `c · f(x) · g(y)`
//! whose sum bounds the true rate of that class from above at every pair of
//! integer masses. Each `f` and `g` is a [`Feature`], a single-particle
//! weight that an ensemble can keep summed in a tree, which is what makes
//! pair selection factorise into two independent single-particle draws.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelId {
    /// `K(x, y) = λ (x + y)`.
    Additive,
    /// `K(x, y) = (1/x + 1/y)^{1/2} (x^{1/λ} + y^{1/λ})^2`, free-molecular soot.
    Soot,
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelId::Additive => f.write_str("additive"),
            KernelId::Soot => f.write_str("soot"),
        }
    }
}

impl FromStr for KernelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(KernelId::Additive),
            "soot" => Ok(KernelId::Soot),
            other => Err(Error::config(
                "kernel",
                format!("unknown kernel `{other}` (expected additive | soot)"),
            )),
        }
    }
}

/// Which rate a majorant bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventClass {
    /// The kernel `K` itself.
    Main,
    /// The positive part of `∂_λ K`.
    DerivPos,
    /// The negative part of `∂_λ K`, as a non-negative rate.
    DerivNeg,
}

impl EventClass {
    pub const ALL: [EventClass; 3] = [EventClass::Main, EventClass::DerivPos, EventClass::DerivNeg];
}

/// Single-particle weight `x^power`, optionally multiplied by `ln(1 + x)`.
#[derive(Clone, Copy, Debug)]
pub struct Feature {
    pub power: f64,
    pub log1p: bool,
}

impl Feature {
    pub const CONSTANT: Feature = Feature {
        power: 0.0,
        log1p: false,
    };

    pub const fn pow(power: f64) -> Self {
        Feature {
            power,
            log1p: false,
        }
    }

    pub const fn pow_log(power: f64) -> Self {
        Feature { power, log1p: true }
    }

    #[inline]
    pub fn eval(&self, mass: u64) -> f64 {
        let x = mass as f64;
        let base = if self.power == 0.0 {
            1.0
        } else if self.power == 1.0 {
            x
        } else {
            x.powf(self.power)
        };
        if self.log1p {
            base * x.ln_1p()
        } else {
            base
        }
    }
}

impl PartialEq for Feature {
    fn eq(&self, other: &Self) -> bool {
        self.power.to_bits() == other.power.to_bits() && self.log1p == other.log1p
    }
}

impl Eq for Feature {}

/// One separable term `coef · f(x) · g(y)` of a majorant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MajorantComponent {
    pub event_class: EventClass,
    pub beta: usize,
    pub coef: f64,
    pub f: Feature,
    pub g: Feature,
}

impl MajorantComponent {
    #[inline]
    pub fn f_value(&self, x: u64) -> f64 {
        self.coef * self.f.eval(x)
    }

    #[inline]
    pub fn g_value(&self, y: u64) -> f64 {
        self.g.eval(y)
    }

    #[inline]
    pub fn eval(&self, x: u64, y: u64) -> f64 {
        self.coef * self.f.eval(x) * self.g.eval(y)
    }
}

/// Sum of all components at the pair `(x, y)`.
pub fn majorant_value(components: &[MajorantComponent], x: u64, y: u64) -> f64 {
    components.iter().map(|c| c.eval(x, y)).sum()
}

/// A parameterised symmetric coagulation kernel `K_λ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelFamily {
    id: KernelId,
    lambda: f64,
}

impl KernelFamily {
    pub fn new(id: KernelId, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::Domain(format!(
                "kernel parameter must be positive and finite, got {lambda}"
            )));
        }
        Ok(KernelFamily { id, lambda })
    }

    pub fn additive(lambda: f64) -> Result<Self> {
        Self::new(KernelId::Additive, lambda)
    }

    pub fn soot(lambda: f64) -> Result<Self> {
        Self::new(KernelId::Soot, lambda)
    }

    pub fn id(&self) -> KernelId {
        self.id
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Same family at another parameter value.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.id, lambda)
    }

    /// Checked kernel evaluation.
    pub fn eval_kernel(&self, x: u64, y: u64) -> Result<f64> {
        check_masses(x, y)?;
        Ok(self.rate(x, y))
    }

    /// Checked evaluation of `∂_λ K_λ(x, y)`.
    pub fn eval_deriv(&self, x: u64, y: u64) -> Result<f64> {
        check_masses(x, y)?;
        Ok(self.deriv(x, y))
    }

    /// Kernel value without the mass check; masses must be at least 1.
    #[inline]
    pub fn rate(&self, x: u64, y: u64) -> f64 {
        debug_assert!(x >= 1 && y >= 1);
        self.rate_f64(x as f64, y as f64)
    }

    #[inline]
    pub fn rate_f64(&self, x: f64, y: f64) -> f64 {
        match self.id {
            KernelId::Additive => self.lambda * (x + y),
            KernelId::Soot => {
                let a = 1.0 / self.lambda;
                let s = (1.0 / x + 1.0 / y).sqrt();
                let h = x.powf(a) + y.powf(a);
                s * h * h
            }
        }
    }

    /// `∂_λ K_λ(x, y)` without the mass check.
    #[inline]
    pub fn deriv(&self, x: u64, y: u64) -> f64 {
        debug_assert!(x >= 1 && y >= 1);
        let (xf, yf) = (x as f64, y as f64);
        match self.id {
            KernelId::Additive => xf + yf,
            KernelId::Soot => {
                let a = 1.0 / self.lambda;
                let (xa, ya) = (xf.powf(a), yf.powf(a));
                let s = (1.0 / xf + 1.0 / yf).sqrt();
                // d/dλ x^{1/λ} = -(1/λ²) x^{1/λ} ln x
                -2.0 * a * a * s * (xa + ya) * (xa * xf.ln() + ya * yf.ln())
            }
        }
    }

    /// Positive and negative parts of the derivative, `(max(K', 0), max(-K', 0))`.
    #[inline]
    pub fn deriv_parts(&self, x: u64, y: u64) -> (f64, f64) {
        let d = self.deriv(x, y);
        (d.max(0.0), (-d).max(0.0))
    }

    /// True rate of an event class at a pair.
    #[inline]
    pub fn class_rate(&self, class: EventClass, x: u64, y: u64) -> f64 {
        match class {
            EventClass::Main => self.rate(x, y),
            EventClass::DerivPos => self.deriv_parts(x, y).0,
            EventClass::DerivNeg => self.deriv_parts(x, y).1,
        }
    }

    /// Separable majorant for an event class. An empty list means the class
    /// rate is identically zero.
    pub fn majorant_components(&self, class: EventClass) -> Vec<MajorantComponent> {
        let terms: Vec<(f64, Feature, Feature)> = match (self.id, class) {
            (KernelId::Additive, EventClass::Main) => additive_terms(self.lambda),
            (KernelId::Additive, EventClass::DerivPos) => additive_terms(1.0),
            (KernelId::Additive, EventClass::DerivNeg) => Vec::new(),
            (KernelId::Soot, EventClass::Main) => soot_main_terms(1.0 / self.lambda),
            (KernelId::Soot, EventClass::DerivPos) => Vec::new(),
            (KernelId::Soot, EventClass::DerivNeg) => soot_deriv_terms(self.lambda),
        };
        terms
            .into_iter()
            .enumerate()
            .map(|(beta, (coef, f, g))| MajorantComponent {
                event_class: class,
                beta,
                coef,
                f,
                g,
            })
            .collect()
    }

    /// The parameter among `a` and `b` whose main majorant bounds the kernel
    /// at both values: the larger one when `K` grows with `λ`, the smaller
    /// one otherwise.
    pub fn dominating_lambda(&self, a: f64, b: f64) -> f64 {
        match self.id {
            KernelId::Additive => a.max(b),
            KernelId::Soot => a.min(b),
        }
    }
}

fn check_masses(x: u64, y: u64) -> Result<()> {
    if x < 1 || y < 1 {
        return Err(Error::Domain(format!(
            "masses must be at least 1, got ({x}, {y})"
        )));
    }
    Ok(())
}

fn additive_terms(scale: f64) -> Vec<(f64, Feature, Feature)> {
    vec![
        (scale, Feature::pow(1.0), Feature::CONSTANT),
        (scale, Feature::CONSTANT, Feature::pow(1.0)),
    ]
}

// (1/x + 1/y)^{1/2} <= x^{-1/2} + y^{-1/2}, times the exact expansion
// (x^a + y^a)^2 = x^{2a} + 2 x^a y^a + y^{2a}.
fn soot_main_terms(a: f64) -> Vec<(f64, Feature, Feature)> {
    let p = Feature::pow;
    vec![
        (1.0, p(2.0 * a - 0.5), Feature::CONSTANT),
        (2.0, p(a - 0.5), p(a)),
        (1.0, p(-0.5), p(2.0 * a)),
        (1.0, p(2.0 * a), p(-0.5)),
        (2.0, p(a), p(a - 0.5)),
        (1.0, Feature::CONSTANT, p(2.0 * a - 0.5)),
    ]
}

// |K'| = (2/λ²) s (x^a + y^a)(x^a ln x + y^a ln y), bounded with the same
// square-root split and ln(1 + x) >= ln x.
fn soot_deriv_terms(lambda: f64) -> Vec<(f64, Feature, Feature)> {
    let a = 1.0 / lambda;
    let c = 2.0 / (lambda * lambda);
    let p = Feature::pow;
    let pl = Feature::pow_log;
    vec![
        (c, pl(2.0 * a - 0.5), Feature::CONSTANT),
        (c, p(a - 0.5), pl(a)),
        (c, pl(a - 0.5), p(a)),
        (c, p(-0.5), pl(2.0 * a)),
        (c, pl(2.0 * a), p(-0.5)),
        (c, p(a), pl(a - 0.5)),
        (c, pl(a), p(a - 0.5)),
        (c, Feature::CONSTANT, pl(2.0 * a - 0.5)),
    ]
}
