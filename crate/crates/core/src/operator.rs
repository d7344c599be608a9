//! The transformed radial Dirac operator
//!
//! ```text
//!   K = [[ a - b,        kc - fa d - d/dx ],
//!        [ kc - fa d + d/dx,  -a - b      ]]
//! ```
//!
//! on `L^2((0, inf), dx)`, its coefficients, the first-order system
//! `(K - lambda) g = 0`, the phase integrals and the boundary form.
//!
//! All quantities are rescaled: `x_hat = x / r_star`, `lambda_hat = lambda r_star`,
//! so the mass term becomes `r_star * f` and the candidate eigenvalue is
//! `-Z alpha_s`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::coordinates::{CoordinateMap, Geometry, RadialPoint, Rescale};
use crate::numerics::{integrate_adaptive, integrate_with_hint, EndpointHint, ToleranceSpec};
use crate::spacetime::Spacetime;
use crate::{Error, Result};

/// Which coefficient functions the operator carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CoefficientModel {
    #[default]
    Rwn,
    /// `a = c = d = 0`, `b = Z alpha_s / r_star`: the constant-coefficient
    /// comparison operator.
    FreeComparison,
}

/// One partial-wave problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialMode {
    map: CoordinateMap,
    k: i32,
    fa: f64,
    theta: Option<f64>,
    model: CoefficientModel,
}

impl RadialMode {
    pub fn new(spacetime: Spacetime, k: i32, fa: f64, theta: Option<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("k must be nonzero".into()));
        }
        if !(fa >= 0.0 && fa.is_finite()) {
            return Err(Error::InvalidInput(format!("fa must be >= 0, got {fa}")));
        }
        if let Some(t) = theta {
            if !(0.0..PI).contains(&t) {
                return Err(Error::InvalidInput(format!("theta must lie in [0, pi), got {t}")));
            }
        }
        Ok(Self {
            map: CoordinateMap::new(spacetime, Rescale::ByInnerRadius)?,
            k,
            fa,
            theta,
            model: CoefficientModel::Rwn,
        })
    }

    pub fn with_model(mut self, model: CoefficientModel) -> Self {
        self.model = model;
        self
    }

    pub fn with_theta(self, theta: Option<f64>) -> Result<Self> {
        Self::new(*self.spacetime(), self.k, self.fa, theta).map(|m| m.with_model(self.model))
    }

    pub fn with_fa(self, fa: f64) -> Result<Self> {
        Self::new(*self.spacetime(), self.k, fa, self.theta).map(|m| m.with_model(self.model))
    }

    pub fn spacetime(&self) -> &Spacetime {
        self.map.spacetime()
    }

    pub fn map(&self) -> &CoordinateMap {
        &self.map
    }

    pub fn geometry(&self) -> Geometry {
        self.map.geometry()
    }

    pub fn k(&self) -> i32 {
        self.k
    }

    pub fn fa(&self) -> f64 {
        self.fa
    }

    pub fn theta(&self) -> Option<f64> {
        self.theta
    }

    pub fn model(&self) -> CoefficientModel {
        self.model
    }

    /// Mass-term factor `r_star` of the rescaled operator.
    pub fn mass_scale(&self) -> f64 {
        self.map.r_star()
    }

    /// `Z alpha_s`, the limit of `b_hat` in the tail.
    pub fn w0(&self) -> f64 {
        self.spacetime().charge_coupling()
    }

    /// `(Z alpha_s^2 / 4 pi) / r_star`, the rescaled prefactor of `d`.
    pub fn d0(&self) -> f64 {
        let alpha = self.spacetime().constants().alpha_s();
        self.spacetime().z() * alpha * alpha / (4.0 * PI * self.mass_scale())
    }

    /// `P = fa * d0`, so that `kappa_tilde = f (k r - P) / r^2`.
    pub fn big_p(&self) -> f64 {
        match self.model {
            CoefficientModel::Rwn => self.fa * self.d0(),
            CoefficientModel::FreeComparison => 0.0,
        }
    }

    /// Rescaled coefficients at a radial point.
    pub fn local(&self, p: RadialPoint) -> LocalCoefficients {
        match self.model {
            CoefficientModel::FreeComparison => LocalCoefficients {
                mass: 0.0,
                b: self.w0(),
                kt: 0.0,
            },
            CoefficientModel::Rwn => {
                let f = self.geometry().f(p);
                let r = p.r;
                LocalCoefficients {
                    mass: self.mass_scale() * f,
                    b: self.w0() / r,
                    kt: f * (self.k as f64 * r - self.big_p()) / (r * r),
                }
            }
        }
    }

    /// Right-hand side of `(K - lambda) g = 0` in `x_hat`.
    pub fn rhs_x(&self, p: RadialPoint, lambda: Complex64, g: [Complex64; 2]) -> [Complex64; 2] {
        let c = self.local(p);
        [
            -c.kt * g[0] + (lambda + c.mass + c.b) * g[1],
            (c.mass - c.b - lambda) * g[0] + c.kt * g[1],
        ]
    }

    /// Right-hand side in `r_hat` (the `x` system times `1/f^2`), written so
    /// that it stays finite at `r = 0` when `fa = 0`.
    pub fn rhs_r(&self, p: RadialPoint, lambda: Complex64, g: [Complex64; 2]) -> [Complex64; 2] {
        let s = self.geometry().s(p);
        let r = p.r;
        let s2 = s * s;
        let (kt, plus, minus) = match self.model {
            CoefficientModel::FreeComparison => {
                let w = r * r / s2;
                (0.0.into(), (lambda + self.w0()) * w, -(lambda + self.w0()) * w)
            }
            CoefficientModel::Rwn => {
                let big_p = self.big_p();
                let kt = if big_p == 0.0 {
                    self.k as f64 / s
                } else {
                    (self.k as f64 * r - big_p) / (r * s)
                };
                let mass = self.mass_scale() * s * r / s2;
                let coul = self.w0() * r / s2;
                let lam = lambda * (r * r / s2);
                (Complex64::from(kt), lam + mass + coul, mass - coul - lam)
            }
        };
        [-kt * g[0] + plus * g[1], minus * g[0] + kt * g[1]]
    }
}

/// Rescaled operator coefficients at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalCoefficients {
    /// `r_star * f`.
    pub mass: f64,
    /// `Z alpha_s / r_hat`.
    pub b: f64,
    /// `k c - fa d`.
    pub kt: f64,
}

/// Coefficient functions at one `x`, in the rescaled view:
/// `a = f`, `b = Z alpha_s / r`, `c = f / r`, `d = (Z alpha_s^2 / 4 pi r_star) f / r^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientSample {
    pub x: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// Two-component radial wave function value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinorState {
    pub g1: Complex64,
    pub g2: Complex64,
}

impl SpinorState {
    pub fn new(g1: Complex64, g2: Complex64) -> Self {
        Self { g1, g2 }
    }

    pub fn real(g1: f64, g2: f64) -> Self {
        Self::new(g1.into(), g2.into())
    }

    pub fn as_array(&self) -> [Complex64; 2] {
        [self.g1, self.g2]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.g1.norm_sqr() + self.g2.norm_sqr()
    }

    pub fn is_finite(&self) -> bool {
        self.g1.is_finite() && self.g2.is_finite()
    }
}

impl From<[Complex64; 2]> for SpinorState {
    fn from(g: [Complex64; 2]) -> Self {
        Self::new(g[0], g[1])
    }
}

fn point_at(mode: &RadialMode, x: f64) -> Result<RadialPoint> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("x must be positive, got {x}")));
    }
    mode.geometry().point_of_x(x)
}

fn sample_at(mode: &RadialMode, x: f64, p: RadialPoint) -> CoefficientSample {
    match mode.model {
        CoefficientModel::FreeComparison => CoefficientSample {
            x,
            a: 0.0,
            b: mode.w0(),
            c: 0.0,
            d: 0.0,
        },
        CoefficientModel::Rwn => {
            let f = mode.geometry().f(p);
            CoefficientSample {
                x,
                a: f,
                b: mode.w0() / p.r,
                c: f / p.r,
                d: mode.d0() * f / (p.r * p.r),
            }
        }
    }
}

/// Coefficients at rescaled coordinate `x`.
pub fn coefficients(mode: &RadialMode, x: f64) -> Result<CoefficientSample> {
    let p = point_at(mode, x)?;
    Ok(sample_at(mode, x, p))
}

/// Coefficients in Compton units at raw coordinate `x`.
pub fn coefficients_raw(mode: &RadialMode, x: f64) -> Result<CoefficientSample> {
    let unit = mode.mass_scale();
    let s = coefficients(mode, x / unit)?;
    Ok(CoefficientSample {
        x,
        a: s.a,
        b: s.b / unit,
        c: s.c / unit,
        d: s.d / unit,
    })
}

/// Symmetric potential `[[a - b, kc - fa d], [kc - fa d, -a - b]]` of the
/// rescaled operator (mass term scaled by `r_star`).
pub fn potential_matrix(mode: &RadialMode, x: f64) -> Result<[[f64; 2]; 2]> {
    let p = point_at(mode, x)?;
    let c = mode.local(p);
    Ok([[c.mass - c.b, c.kt], [c.kt, -c.mass - c.b]])
}

/// Coefficient matrix `M` of `g' = M g` at rescaled `x`.
pub fn system_matrix(mode: &RadialMode, lambda: Complex64, x: f64) -> Result<[[Complex64; 2]; 2]> {
    let p = point_at(mode, x)?;
    let c = mode.local(p);
    Ok([
        [Complex64::from(-c.kt), lambda + c.mass + c.b],
        [c.mass - c.b - lambda, Complex64::from(c.kt)],
    ])
}

/// Derivative of `g` at rescaled `x` for spectral parameter `lambda_hat`.
pub fn ode_rhs(mode: &RadialMode, lambda: Complex64, x: f64, g: SpinorState) -> Result<SpinorState> {
    let p = point_at(mode, x)?;
    Ok(mode.rhs_x(p, lambda, g.as_array()).into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhaseKind {
    Nu,
    Xi,
    Eta,
}

/// Default anchor for `eta` (and for `xi` when `fa > 0`).
pub const DEFAULT_ANCHOR: f64 = 1.0;

fn phase_tol() -> ToleranceSpec {
    ToleranceSpec::new(1e-12, 1e-15, 400).expect("valid")
}

/// `int_lo^hi (k c - fa d) dx` over rescaled `x`.
fn kt_integral(mode: &RadialMode, lo: f64, hi: f64, hint: EndpointHint) -> Result<f64> {
    if hi <= lo {
        return Ok(0.0);
    }
    let mut err = None;
    let v = integrate_with_hint(
        |x| match mode.geometry().point_of_x(x) {
            Ok(p) => mode.local(p).kt,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        lo,
        hi,
        hint,
        &phase_tol(),
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// Phase integrals:
/// `nu(x) = int_0^x k c`, `xi(x) = -int_A^min(x, A+1) (k c - fa d)` with
/// `A = 0` when `fa = 0`, and `eta(x; A) = int_A^x (Z alpha_s - b)`.
pub fn phase(mode: &RadialMode, which: PhaseKind, x: f64, anchor: Option<f64>) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("x must be >= 0, got {x}")));
    }
    match which {
        PhaseKind::Nu => {
            if x == 0.0 || mode.model == CoefficientModel::FreeComparison {
                return Ok(0.0);
            }
            let nofa = RadialMode { fa: 0.0, ..*mode };
            kt_integral(&nofa, 0.0, x, EndpointHint::left(-2.0 / 3.0))
        }
        PhaseKind::Xi => {
            let a = if mode.fa == 0.0 {
                anchor.unwrap_or(0.0)
            } else {
                let a = anchor.unwrap_or(DEFAULT_ANCHOR);
                if !(a > 0.0) {
                    return Err(Error::Domain(
                        "xi needs a positive anchor when fa > 0".into(),
                    ));
                }
                a
            };
            let hi = x.min(a + 1.0);
            if hi <= a {
                return Ok(0.0);
            }
            let hint = if a == 0.0 {
                EndpointHint::left(-2.0 / 3.0)
            } else {
                EndpointHint::default()
            };
            Ok(-kt_integral(mode, a, hi, hint)?)
        }
        PhaseKind::Eta => {
            let a = anchor.unwrap_or(DEFAULT_ANCHOR);
            if !(a > 0.0) {
                return Err(Error::Domain("eta needs a positive anchor".into()));
            }
            if x == 0.0 {
                return Err(Error::Domain("eta diverges at x = 0".into()));
            }
            let pa = mode.geometry().point_of_x(a)?;
            let px = mode.geometry().point_of_x(x)?;
            Ok(eta_between(mode, pa, px))
        }
    }
}

/// Closed form of `int (Z alpha_s - b) dx` between two points.
pub(crate) fn eta_between(mode: &RadialMode, from: RadialPoint, to: RadialPoint) -> f64 {
    if mode.model == CoefficientModel::FreeComparison {
        return 0.0;
    }
    // (Z alpha_s)(1 - 1/r) / f^2 dr = -Z alpha_s r dr / (rho - r)  or  / (1 - r)
    let w0 = mode.w0();
    match mode.geometry() {
        Geometry::Subextremal { rho } => {
            w0 * ((to.r - from.r) + rho * ((from.r - to.r) / (rho - from.r)).ln_1p())
        }
        Geometry::Extremal => w0 * ((to.r - from.r) + (to.log_gap - from.log_gap)),
    }
}

/// Boundary form `[g, h] = g2 conj(h1) - g1 conj(h2)`.
pub fn boundary_form(g: SpinorState, h: SpinorState) -> Complex64 {
    g.g2 * h.g1.conj() - g.g1 * h.g2.conj()
}

/// Data satisfying `g1 sin(theta) + g2 cos(theta) = 0`, unit norm.
pub fn theta_boundary_data(theta: f64) -> SpinorState {
    SpinorState::real(theta.cos(), -theta.sin())
}

/// `I_r = int |g|^2 / f^2 dr` and `I_x = int |g|^2 dx` for a sample given on
/// rescaled `r_hat` with support inside `support = (lo, hi)`, `0 <= lo < hi <= 1`.
pub fn norm_equivalence_check<F>(
    st: &Spacetime,
    sample: F,
    support: (f64, f64),
    tol: &ToleranceSpec,
) -> Result<(f64, f64)>
where
    F: Fn(f64) -> SpinorState,
{
    let map = CoordinateMap::new(*st, Rescale::ByInnerRadius)?;
    let g = map.geometry();
    let (lo, hi) = support;
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::InvalidInput(format!("bad support ({lo}, {hi})")));
    }
    let weight = |r: f64| {
        if r <= 0.0 || r >= 1.0 {
            return 0.0;
        }
        let v = sample(r).norm_sqr();
        if v == 0.0 {
            0.0
        } else {
            v / g.f_squared(RadialPoint::from_r(r))
        }
    };
    let i_r = integrate_adaptive(weight, lo, hi, tol)?;

    let x_lo = if lo == 0.0 { 0.0 } else { g.x_hat(RadialPoint::from_r(lo)) };
    let mut err = None;
    let mut dens = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        match g.point_of_x(x) {
            Ok(p) if p.r < 1.0 => sample(p.r).norm_sqr(),
            Ok(_) => 0.0,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        }
    };
    let i_x = if hi < 1.0 {
        let x_hi = g.x_hat(RadialPoint::from_r(hi));
        integrate_adaptive(&mut dens, x_lo, x_hi, tol)?
    } else {
        let x_mid = g.x_hat(RadialPoint::from_r(0.5_f64.max(lo)));
        let left = if x_mid > x_lo {
            integrate_adaptive(&mut dens, x_lo, x_mid, tol)?
        } else {
            0.0
        };
        left + integrate_adaptive(&mut dens, x_mid.max(x_lo), f64::INFINITY, tol)?
    };
    if let Some(e) = err {
        return Err(e);
    }
    Ok((i_r, i_x))
}
