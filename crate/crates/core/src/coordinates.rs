//! The tortoise-type coordinate `x` with `f^2 d/dr = d/dx` on the static
//! interior `0 < r < r_star`, its inverse and its asymptotics.
//!
//! Internally every computation runs in rescaled units (`r_hat = r / r_star`).
//! Radii close to the horizon are carried as [`RadialPoint`]s, which keep
//! `ln(1 - r_hat)` alongside `r_hat` so that the gap never underflows.

use crate::numerics::{fit_line, fit_power_law, log_grid, root_find_bracketed, FitResult, ToleranceSpec};
use crate::spacetime::{Sector, Spacetime};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rescale {
    /// Compton units.
    None,
    /// Lengths divided by `r_star`.
    ByInnerRadius,
}

/// A rescaled radius `r` in `(0, 1)` together with `log_gap = ln(1 - r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialPoint {
    pub r: f64,
    pub log_gap: f64,
}

impl RadialPoint {
    pub fn from_r(r: f64) -> Self {
        Self {
            r,
            log_gap: (-r).ln_1p(),
        }
    }

    pub fn from_log_gap(log_gap: f64) -> Self {
        Self {
            r: -log_gap.exp_m1(),
            log_gap,
        }
    }

    /// `1 - r` (may underflow to zero deep in the tail).
    pub fn gap(&self) -> f64 {
        self.log_gap.exp()
    }
}

/// `-ln(1 - s) - s - s^2/2`, given `ln(1 - s)` as well.
fn l3(s: f64, log_one_minus_s: f64) -> f64 {
    if s < 0.25 {
        let mut term = s * s * s;
        let mut sum = 0.0;
        let mut n = 3.0;
        while term > 1e-18 * sum || n < 4.0 {
            sum += term / n;
            term *= s;
            n += 1.0;
            if n > 200.0 {
                break;
            }
        }
        sum
    } else {
        -log_one_minus_s - s - 0.5 * s * s
    }
}

/// Rescaled interior geometry; depends only on `rho = r_+ / r_-`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    Subextremal { rho: f64 },
    Extremal,
}

impl Geometry {
    pub fn rho(&self) -> f64 {
        match *self {
            Geometry::Subextremal { rho } => rho,
            Geometry::Extremal => 1.0,
        }
    }

    /// `x_hat(r_hat)` from the closed forms.
    pub fn x_hat(&self, p: RadialPoint) -> f64 {
        let r = p.r;
        match *self {
            Geometry::Subextremal { rho } => {
                if r < 0.25 {
                    // sum_n r^n/n * (rho^-1 + ... + rho^-(n-2))
                    let inv = 1.0 / rho;
                    let mut coeff = inv;
                    let mut inv_pow = inv;
                    let mut rn = r * r * r;
                    let mut sum = 0.0;
                    let mut n = 3.0;
                    loop {
                        let term = rn / n * coeff;
                        sum += term;
                        if term <= 1e-18 * sum || n > 300.0 {
                            break;
                        }
                        inv_pow *= inv;
                        coeff += inv_pow;
                        rn *= r;
                        n += 1.0;
                    }
                    sum
                } else {
                    let s = r / rho;
                    let inner = l3(s, (-s).ln_1p());
                    (l3(r, p.log_gap) - rho * rho * inner) / (rho - 1.0)
                }
            }
            Geometry::Extremal => {
                if r < 0.25 {
                    let mut rn = r * r * r;
                    let mut sum = 0.0;
                    let mut n = 3.0;
                    loop {
                        let term = rn * (1.0 - 2.0 / n);
                        sum += term;
                        if term <= 1e-18 * sum || n > 400.0 {
                            break;
                        }
                        rn *= r;
                        n += 1.0;
                    }
                    sum
                } else {
                    r * r * r * (-p.log_gap).exp() - 2.0 * l3(r, p.log_gap)
                }
            }
        }
    }

    /// `s = r f` in rescaled units.
    pub fn s(&self, p: RadialPoint) -> f64 {
        match *self {
            Geometry::Subextremal { rho } => ((rho - p.r) * p.gap()).sqrt(),
            Geometry::Extremal => p.gap(),
        }
    }

    /// Metric factor `f = sqrt(f^2)`.
    pub fn f(&self, p: RadialPoint) -> f64 {
        self.s(p) / p.r
    }

    pub fn f_squared(&self, p: RadialPoint) -> f64 {
        let f = self.f(p);
        f * f
    }

    /// `d(-log_gap)/dx_hat = f^2 / (1 - r)`.
    pub fn dt_dx(&self, p: RadialPoint) -> f64 {
        match *self {
            Geometry::Subextremal { rho } => (rho - p.r) / (p.r * p.r),
            Geometry::Extremal => p.gap() / (p.r * p.r),
        }
    }

    /// Decay rate of the gap in `x_hat` (0 for extremal).
    pub fn kappa_hat(&self) -> f64 {
        self.rho() - 1.0
    }

    /// `D_hat` in `1 - r_hat ~ D_hat exp(-kappa_hat x_hat)`; 1 for extremal
    /// where `1 - r_hat ~ 1 / x_hat`.
    pub fn tail_prefactor(&self) -> f64 {
        match *self {
            Geometry::Subextremal { rho } => {
                ((rho - 1.0) + rho * rho * (-1.0 / rho).ln_1p()).exp()
            }
            Geometry::Extremal => 1.0,
        }
    }

    /// Inverse of [`Geometry::x_hat`].
    pub fn point_of_x(&self, x: f64) -> Result<RadialPoint> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::Domain(format!("x must be positive and finite, got {x}")));
        }
        let rho = self.rho();
        let r_small = (3.0 * rho * x).cbrt().min(0.5);
        let mut guess = -(-r_small).ln_1p();
        match *self {
            Geometry::Subextremal { rho } => {
                let tail = (rho - 1.0) * x - self.tail_prefactor().ln();
                guess = guess.max(tail);
            }
            Geometry::Extremal => guess = guess.max(x.ln()),
        }
        let eval = |tau: f64| self.x_hat(RadialPoint::from_log_gap(-tau)) - x;
        let mut lo = 0.5 * guess;
        let mut n = 0;
        while eval(lo) > 0.0 {
            lo *= 0.5;
            n += 1;
            if n > 2000 {
                return Err(Error::Domain(format!("cannot bracket x = {x}")));
            }
        }
        let mut hi = 2.0 * guess + 1.0;
        n = 0;
        while eval(hi) < 0.0 {
            hi *= 2.0;
            n += 1;
            if n > 2000 {
                return Err(Error::Domain(format!("cannot bracket x = {x}")));
            }
        }
        let tol = ToleranceSpec {
            rel_tol: 1e-16,
            abs_tol: 0.0,
            max_iterations: 400,
        };
        let tau = root_find_bracketed(eval, lo, hi, &tol)?;
        Ok(RadialPoint::from_log_gap(-tau))
    }
}

/// Tail behaviour of the gap `r_star - r` as `x -> infinity`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailConstants {
    /// `r_- - r ~ prefactor * exp(-kappa x)`.
    Subextremal { kappa: f64, prefactor: f64 },
    /// `r_0 - r ~ coefficient / x`.
    Extremal { coefficient: f64 },
}

/// Fitted asymptotic exponents of `r(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentFits {
    /// log-log fit of `r_hat` against `x_hat` on `[1e-12, 1e-8]`.
    pub small_x: FitResult,
    /// Subextremal: line fit of `ln(1 - r_hat)` against `x_hat` on `[2, 4]`.
    /// Extremal: log-log fit of `1 - r_hat` against `x_hat` on `[1e5, 1e7]`.
    pub tail: FitResult,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateMap {
    spacetime: Spacetime,
    rescale: Rescale,
    geometry: Geometry,
    r_star: f64,
}

impl CoordinateMap {
    pub fn new(spacetime: Spacetime, rescale: Rescale) -> Result<Self> {
        let geometry = match spacetime.sector() {
            Sector::Naked => {
                return Err(Error::Domain(
                    "coordinate map needs a black-hole sector".into(),
                ))
            }
            Sector::Extremal => Geometry::Extremal,
            Sector::Subextremal => Geometry::Subextremal {
                rho: spacetime.rho().expect("subextremal rho"),
            },
        };
        Ok(Self {
            spacetime,
            rescale,
            geometry,
            r_star: spacetime.r_star().expect("black-hole r_star"),
        })
    }

    pub fn rescaled(spacetime: Spacetime) -> Result<Self> {
        Self::new(spacetime, Rescale::ByInnerRadius)
    }

    pub fn spacetime(&self) -> &Spacetime {
        &self.spacetime
    }

    pub fn rescale(&self) -> Rescale {
        self.rescale
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn r_star(&self) -> f64 {
        self.r_star
    }

    /// Length unit of this map in Compton units.
    pub fn length_unit(&self) -> f64 {
        match self.rescale {
            Rescale::None => 1.0,
            Rescale::ByInnerRadius => self.r_star,
        }
    }

    fn upper(&self) -> f64 {
        self.r_star / self.length_unit()
    }

    pub fn x_of_r(&self, r: f64) -> Result<f64> {
        let hi = self.upper();
        if !(r > 0.0 && r < hi) {
            return Err(Error::Domain(format!(
                "r = {r} outside the static interior (0, {hi})"
            )));
        }
        let rhat = r * self.length_unit() / self.r_star;
        Ok(self.geometry.x_hat(RadialPoint::from_r(rhat)) * self.r_star / self.length_unit())
    }

    pub fn r_of_x(&self, x: f64) -> Result<f64> {
        let p = self.point_of_x(x)?;
        Ok(p.r * self.r_star / self.length_unit())
    }

    /// Rescaled radial point at coordinate `x` (in this map's units).
    pub fn point_of_x(&self, x: f64) -> Result<RadialPoint> {
        self.geometry.point_of_x(x * self.length_unit() / self.r_star)
    }

    /// Coordinate (in this map's units) of a rescaled radial point.
    pub fn x_of_point(&self, p: RadialPoint) -> f64 {
        self.geometry.x_hat(p) * self.r_star / self.length_unit()
    }

    pub fn tail_constants(&self) -> TailConstants {
        let unit = self.r_star / self.length_unit();
        match self.geometry {
            Geometry::Subextremal { .. } => TailConstants::Subextremal {
                kappa: self.geometry.kappa_hat() / unit,
                prefactor: self.geometry.tail_prefactor() * unit,
            },
            Geometry::Extremal => TailConstants::Extremal {
                coefficient: unit * unit,
            },
        }
    }

    pub fn verify_exponents(&self) -> Result<ExponentFits> {
        let g = self.geometry;
        let small: Vec<(f64, f64)> = log_grid(1e-12, 1e-8, 9)
            .into_iter()
            .map(|x| g.point_of_x(x).map(|p| (x, p.r)))
            .collect::<Result<_>>()?;
        let small_x = fit_power_law(&small)?;
        let tail = match g {
            Geometry::Subextremal { .. } => {
                let pts: Vec<(f64, f64)> = (0..21)
                    .map(|i| {
                        let x = 2.0 + 0.1 * i as f64;
                        g.point_of_x(x).map(|p| (x, p.log_gap))
                    })
                    .collect::<Result<_>>()?;
                fit_line(&pts)?
            }
            Geometry::Extremal => {
                let pts: Vec<(f64, f64)> = log_grid(1e5, 1e7, 9)
                    .into_iter()
                    .map(|x| g.point_of_x(x).map(|p| (x, p.gap())))
                    .collect::<Result<_>>()?;
                fit_power_law(&pts)?
            }
        };
        Ok(ExponentFits { small_x, tail })
    }
}
