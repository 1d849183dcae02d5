//! Second-order costs `c(x, x', y, y') = c~(x, x', t)` with `t = <y, y'>`
//! (inner-product kind) or `t = |y - y'|^2` (squared-norm kind).
//!
//! Every built-in profile depends on the feature pair only through one
//! scalar: `<x, x'>`, a kernel value `k(x, x')`, or `|x - x'|^2`. The pair
//! loops compute that scalar once and feed it to [`CostFamily::profile`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default regularization added to the q-Sammon denominator.
pub const SAMMON_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostKind {
    InnerProduct,
    SquaredNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Rbf { sigma: f64 },
    Polynomial { degree: u32, offset: f64 },
}

impl Kernel {
    pub fn eval(&self, x: &[f64], xp: &[f64]) -> f64 {
        match *self {
            Kernel::Rbf { sigma } => (-sq_dist(x, xp) / (2.0 * sigma * sigma)).exp(),
            Kernel::Polynomial { degree, offset } => (dot(x, xp) + offset).powi(degree as i32),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum Profile {
    /// `(<x,x'> - t)^2`
    QuadraticIp,
    /// `(k(x,x') - t)^2`
    KernelIp { kernel: Kernel },
    /// `(|x-x'|^2 - t)^2`
    Qmds,
    /// `(|x-x'|^2 - t)^2 / (|x-x'|^2 + eps)`
    QSammon { eps: f64 },
    /// `t exp(-|x-x'|^2 / 2 sigma^2) + beta |x-x'|^2 exp(-t)`
    Elastic { sigma: f64, beta: f64 },
}

/// Structural properties of a built-in profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Capabilities {
    /// `t -> c~(x,x',t)` strictly convex for almost every pair.
    pub convex_in_t: bool,
    /// `t -> c~(x,x,t)` has its unique minimizer at `t = 0`.
    pub unique_min_at_zero: bool,
    /// The marginal problem has a closed-form global minimizer.
    pub has_closed_form_marginal: bool,
}

/// Value and first two `t`-derivatives of a profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileDerivs {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostFamily {
    pub profile: Profile,
}

impl CostFamily {
    pub const fn new(profile: Profile) -> Self {
        Self { profile }
    }

    pub const fn qmds() -> Self {
        Self::new(Profile::Qmds)
    }

    pub const fn quadratic_ip() -> Self {
        Self::new(Profile::QuadraticIp)
    }

    pub const fn qsammon() -> Self {
        Self::new(Profile::QSammon { eps: SAMMON_EPS })
    }

    pub const fn elastic(sigma: f64, beta: f64) -> Self {
        Self::new(Profile::Elastic { sigma, beta })
    }

    pub const fn kernel_ip(kernel: Kernel) -> Self {
        Self::new(Profile::KernelIp { kernel })
    }

    /// All built-ins with representative parameters.
    pub fn builtins() -> Vec<CostFamily> {
        vec![
            Self::quadratic_ip(),
            Self::kernel_ip(Kernel::Rbf { sigma: 1.0 }),
            Self::kernel_ip(Kernel::Polynomial {
                degree: 2,
                offset: 1.0,
            }),
            Self::qmds(),
            Self::qsammon(),
            Self::elastic(1.0, 1.0),
        ]
    }

    pub fn kind(&self) -> CostKind {
        match self.profile {
            Profile::QuadraticIp | Profile::KernelIp { .. } => CostKind::InnerProduct,
            Profile::Qmds | Profile::QSammon { .. } | Profile::Elastic { .. } => {
                CostKind::SquaredNorm
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self.profile {
            Profile::QuadraticIp => "quadratic-ip",
            Profile::KernelIp {
                kernel: Kernel::Rbf { .. },
            } => "kernel-ip-rbf",
            Profile::KernelIp {
                kernel: Kernel::Polynomial { .. },
            } => "kernel-ip-poly",
            Profile::Qmds => "qmds",
            Profile::QSammon { .. } => "qsammon",
            Profile::Elastic { .. } => "elastic",
        }
    }

    pub fn capabilities(&self) -> Capabilities {
        match self.profile {
            Profile::QuadraticIp | Profile::KernelIp { .. } => Capabilities {
                convex_in_t: true,
                unique_min_at_zero: false,
                has_closed_form_marginal: true,
            },
            Profile::Qmds => Capabilities {
                convex_in_t: true,
                unique_min_at_zero: true,
                has_closed_form_marginal: true,
            },
            Profile::QSammon { .. } => Capabilities {
                convex_in_t: true,
                unique_min_at_zero: true,
                has_closed_form_marginal: false,
            },
            // Convex but only strictly so for x != x'.
            Profile::Elastic { .. } => Capabilities {
                convex_in_t: false,
                unique_min_at_zero: true,
                has_closed_form_marginal: false,
            },
        }
    }

    /// The scalar feature term the profile depends on.
    #[inline]
    pub fn feature_term(&self, x: &[f64], xp: &[f64]) -> f64 {
        match self.profile {
            Profile::QuadraticIp => dot(x, xp),
            Profile::KernelIp { kernel } => kernel.eval(x, xp),
            Profile::Qmds | Profile::QSammon { .. } | Profile::Elastic { .. } => sq_dist(x, xp),
        }
    }

    /// The embedding argument `t` for this cost kind.
    #[inline]
    pub fn embed_term(&self, y: &[f64], yp: &[f64]) -> f64 {
        match self.kind() {
            CostKind::InnerProduct => dot(y, yp),
            CostKind::SquaredNorm => sq_dist(y, yp),
        }
    }

    /// `c~` as a function of the feature term `s` and `t`.
    #[inline]
    pub fn profile_value(&self, s: f64, t: f64) -> f64 {
        match self.profile {
            Profile::QuadraticIp | Profile::KernelIp { .. } | Profile::Qmds => {
                let r = s - t;
                r * r
            }
            Profile::QSammon { eps } => {
                let r = s - t;
                r * r / (s + eps)
            }
            Profile::Elastic { sigma, beta } => {
                t * (-s / (2.0 * sigma * sigma)).exp() + beta * s * (-t).exp()
            }
        }
    }

    #[inline]
    pub fn profile(&self, s: f64, t: f64) -> ProfileDerivs {
        match self.profile {
            Profile::QuadraticIp | Profile::KernelIp { .. } | Profile::Qmds => {
                let r = s - t;
                ProfileDerivs {
                    value: r * r,
                    d1: -2.0 * r,
                    d2: 2.0,
                }
            }
            Profile::QSammon { eps } => {
                let r = s - t;
                let den = s + eps;
                ProfileDerivs {
                    value: r * r / den,
                    d1: -2.0 * r / den,
                    d2: 2.0 / den,
                }
            }
            Profile::Elastic { sigma, beta } => {
                let attract = (-s / (2.0 * sigma * sigma)).exp();
                let repel = beta * s * (-t).exp();
                ProfileDerivs {
                    value: t * attract + repel,
                    d1: attract - repel,
                    d2: repel,
                }
            }
        }
    }

    /// `c(x, x', y, y')`.
    pub fn evaluate(&self, x: &[f64], xp: &[f64], y: &[f64], yp: &[f64]) -> Result<f64> {
        check_same_len(x, xp, "feature")?;
        check_same_len(y, yp, "embedding")?;
        Ok(self.profile_value(self.feature_term(x, xp), self.embed_term(y, yp)))
    }

    /// `(c~, dc~/dt, d^2c~/dt^2)` at `(x, x', t)`.
    pub fn profile_derivatives(&self, x: &[f64], xp: &[f64], t: f64) -> Result<ProfileDerivs> {
        check_same_len(x, xp, "feature")?;
        if self.kind() == CostKind::SquaredNorm && t < 0.0 {
            return Err(Error::input(format!(
                "squared-norm costs take t >= 0, got {t}"
            )));
        }
        Ok(self.profile(self.feature_term(x, xp), t))
    }

    /// Parses a cost name as used on the command line.
    pub fn from_name(name: &str, params: &CostParams) -> Result<Self> {
        let cost = match name {
            "qmds" => Self::qmds(),
            "quadratic-ip" | "pca" => Self::quadratic_ip(),
            "kernel-ip-rbf" => Self::kernel_ip(Kernel::Rbf {
                sigma: params.sigma,
            }),
            "kernel-ip-poly" => Self::kernel_ip(Kernel::Polynomial {
                degree: params.degree,
                offset: params.offset,
            }),
            "qsammon" => Self::new(Profile::QSammon { eps: params.eps_d }),
            "elastic" => Self::elastic(params.sigma, params.beta),
            other => {
                return Err(Error::input(format!(
                    "unknown cost '{other}' (expected qmds, quadratic-ip, kernel-ip-rbf, \
                     kernel-ip-poly, qsammon or elastic)"
                )))
            }
        };
        cost.validate()?;
        Ok(cost)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.profile {
            Profile::QuadraticIp | Profile::Qmds => true,
            Profile::KernelIp {
                kernel: Kernel::Rbf { sigma },
            } => sigma > 0.0 && sigma.is_finite(),
            Profile::KernelIp {
                kernel: Kernel::Polynomial { degree, offset },
            } => degree >= 1 && offset.is_finite(),
            Profile::QSammon { eps } => eps > 0.0 && eps.is_finite(),
            Profile::Elastic { sigma, beta } => sigma > 0.0 && beta >= 0.0 && beta.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::input(format!("invalid parameters for {self:?}")))
        }
    }
}

/// Numeric parameters for named costs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostParams {
    pub sigma: f64,
    pub beta: f64,
    pub degree: u32,
    pub offset: f64,
    pub eps_d: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            beta: 1.0,
            degree: 2,
            offset: 1.0,
            eps_d: SAMMON_EPS,
        }
    }
}

/// Evaluates `c(x, x', y, y')`.
pub fn evaluate_cost(cost: &CostFamily, x: &[f64], xp: &[f64], y: &[f64], yp: &[f64]) -> Result<f64> {
    cost.evaluate(x, xp, y, yp)
}

/// `(c~, dc~/dt, d^2c~/dt^2)` at `(x, x', t)`.
pub fn profile_derivatives(cost: &CostFamily, x: &[f64], xp: &[f64], t: f64) -> Result<ProfileDerivs> {
    cost.profile_derivatives(x, xp, t)
}

fn check_same_len(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::input(format!(
            "{what} dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| {
            let d = u - v;
            d * d
        })
        .sum()
}

#[inline]
pub fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}
