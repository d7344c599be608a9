use num_complex::Complex64;

use crate::coordinates::{Geometry, RadialPoint};
use crate::numerics::{integrate_adaptive, NumericsError, ToleranceSpec};
use crate::operator::RadialMode;
use crate::{Error, Result};

use super::{tail_start, SpectralSettings, TailUse};

/// Residual of one Weyl-sequence member, evaluated two ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeylResidual {
    pub n: u32,
    pub lambda: f64,
    /// Closed-form reduction plus a one-dimensional coefficient integral.
    pub analytic: f64,
    /// Direct quadrature of `|(K00 - lambda) f_n|^2`.
    pub quadrature: f64,
    /// `||f_n||`.
    pub norm: f64,
    /// Left end of the support.
    pub support_start: f64,
}

const AGREEMENT: f64 = 1e-8;

fn quad_tol() -> ToleranceSpec {
    ToleranceSpec {
        rel_tol: 1e-13,
        abs_tol: 0.0,
        max_iterations: 200,
    }
}

fn sum_pieces(mut f: impl FnMut(f64) -> f64, cuts: &[f64]) -> Result<f64> {
    let tol = quad_tol();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += integrate_adaptive(&mut f, w[0], w[1], &tol)?;
    }
    Ok(total)
}

/// Weyl sequence at `lambda` with the comparison operator
/// `K00 = [[-w0, kt - D], [kt + D, -w0]]`.
///
/// `fa = 0`: `f_n = x e^{-x/2n + i w x} (1, -i) / (2 n^{3/2})` on `(0, inf)`.
/// `fa > 0`: `f_n = e^{-(x-b)/2n + i w (x-b)} (1, -i) / sqrt(2n)` on `(b, inf)`
/// with `b` the tail start (extremal: moved out proportionally to `n`).
pub fn weyl_residual_report(
    mode: &RadialMode,
    lambda: f64,
    n: u32,
    settings: &SpectralSettings,
) -> Result<WeylResidual> {
    mode.spacetime().require_black_hole()?;
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let nf = n as f64;
    let geometry = mode.geometry();
    let w0 = mode.w0();
    let w = -w0 - lambda;
    let k = mode.k() as f64;
    let big_p = mode.big_p();
    let shifted = big_p != 0.0;
    let b = match (shifted, geometry) {
        (false, _) => 0.0,
        (true, Geometry::Subextremal { .. }) => tail_start(mode, TailUse::Scan, settings),
        // kt decays only like P / x: push the support out with n
        (true, Geometry::Extremal) => tail_start(mode, TailUse::Scan, settings)
            .max(1e3 * nf * (big_p + k.abs() + 1.0)),
    };
    let xm = geometry.x_hat(RadialPoint::from_r(0.5));

    // analytic route: closed-form part plus one coefficient integral
    let kt_term = if shifted {
        // in s = x - b, so that b >> n keeps full resolution
        let mut failure = None;
        let v = sum_pieces(
            |s| match geometry.point_of_x(b + s) {
                Ok(p) => {
                    let kt = mode.local(p).kt;
                    (-s / nf).exp() * kt * kt
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            &[0.0, nf, 10.0 * nf, f64::INFINITY],
        );
        if let Some(e) = failure {
            return Err(e);
        }
        v?
    } else {
        // in t = -ln(1 - r), where c^2 dx = (1 - r) / r^2 dt
        sum_pieces(
            |t| {
                if t <= 0.0 {
                    return 0.0;
                }
                let p = RadialPoint::from_log_gap(-t);
                let x = geometry.x_hat(p);
                x * x * (-x / nf).exp() * k * k * p.gap() / (p.r * p.r)
            },
            &[0.0, 1.0, 10.0, f64::INFINITY],
        )?
    };
    let analytic_sq = if shifted {
        0.25 / (nf * nf) + kt_term / nf
    } else {
        0.25 / (nf * nf) + kt_term / (2.0 * nf * nf * nf)
    };

    // direct route: apply K00 - lambda to f_n, parametrised by s = x - b
    let phi = |s: f64| -> (Complex64, Complex64) {
        let osc = Complex64::from_polar(1.0, w * s);
        if shifted {
            let v = osc * ((-s / (2.0 * nf)).exp() / (2.0 * nf).sqrt());
            (v, v * Complex64::new(-0.5 / nf, w))
        } else {
            let e = (-s / (2.0 * nf)).exp() / (2.0 * nf.powf(1.5));
            let v = osc * (s * e);
            let dv = osc * e * Complex64::new(1.0 - s / (2.0 * nf), w * s);
            (v, dv)
        }
    };
    let mut failure = None;
    let residual_density = |s: f64| -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let p = match geometry.point_of_x(b + s) {
            Ok(p) => p,
            Err(e) => {
                failure.get_or_insert(e);
                return f64::NAN;
            }
        };
        let kt = mode.local(p).kt;
        let (v, dv) = phi(s);
        let mi = Complex64::new(0.0, -1.0);
        let (f1, f2, d1, d2) = (v, mi * v, dv, mi * dv);
        let row1 = (-w0 - lambda) * f1 + kt * f2 - d2;
        let row2 = kt * f1 + d1 + (-w0 - lambda) * f2;
        row1.norm_sqr() + row2.norm_sqr()
    };
    let cuts: Vec<f64> = if shifted {
        vec![0.0, nf, 10.0 * nf, f64::INFINITY]
    } else {
        vec![0.0, xm, 1.0, 10.0, 10.0 + nf, f64::INFINITY]
    };
    let quadrature_sq = sum_pieces(residual_density, &cuts);
    if let Some(e) = failure {
        return Err(e);
    }
    let quadrature_sq = quadrature_sq?;
    let norm_sq = sum_pieces(|s| if s <= 0.0 { 0.0 } else { 2.0 * phi(s).0.norm_sqr() }, &cuts)?;

    let analytic = analytic_sq.sqrt();
    let quadrature = quadrature_sq.sqrt();
    if !((analytic - quadrature).abs() <= AGREEMENT * analytic) {
        return Err(NumericsError::NoConvergence {
            what: "weyl residual routes disagree",
            iterations: n as usize,
        }
        .into());
    }
    Ok(WeylResidual {
        n,
        lambda,
        analytic,
        quadrature,
        norm: norm_sq.sqrt(),
        support_start: b,
    })
}

/// `||(K00 - lambda) f_n||` after both evaluations agree.
pub fn weyl_residual(mode: &RadialMode, lambda: f64, n: u32, settings: &SpectralSettings) -> Result<f64> {
    weyl_residual_report(mode, lambda, n, settings).map(|r| r.analytic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::fit_power_law;
    use crate::spacetime::{extremal_mass_number, Spacetime};

    const ALPHA: f64 = 1.0 / 137.036;

    fn cfg_sub(fa: f64, theta: f64) -> RadialMode {
        RadialMode::new(Spacetime::new(1, 2e18).unwrap(), -1, fa, Some(theta)).unwrap()
    }

    fn slope(mode: &RadialMode, lambda: f64) -> (Vec<WeylResidual>, f64) {
        let s = SpectralSettings::default();
        let reps: Vec<_> = [4u32, 16, 64, 256]
            .iter()
            .map(|&n| weyl_residual_report(mode, lambda, n, &s).unwrap())
            .collect();
        let pts: Vec<(f64, f64)> = reps.iter().map(|r| (r.n as f64, r.analytic)).collect();
        let fit = fit_power_law(&pts).unwrap();
        (reps, fit.slope)
    }

    #[test]
    fn unit_norm_and_decay() {
        for mode in [cfg_sub(0.0, 0.0), cfg_sub(1.0, 0.0)] {
            let (reps, s) = slope(&mode, 0.01);
            for r in &reps {
                assert!((r.norm - 1.0).abs() < 1e-10, "{r:?}");
                assert!((r.analytic - r.quadrature).abs() <= 1e-8 * r.analytic);
            }
            assert!(reps.windows(2).all(|w| w[1].analytic < w[0].analytic));
            assert!((s + 1.0).abs() < 0.1, "slope {s}");
        }
    }

    #[test]
    fn extremal_sequence_also_decays() {
        let st = Spacetime::new(1, extremal_mass_number(1, &Default::default())).unwrap();
        let mode = RadialMode::new(st, -1, 0.0, Some(0.0)).unwrap();
        let (_, s) = slope(&mode, -ALPHA);
        assert!((s + 1.0).abs() < 0.1, "slope {s}");
    }

    #[test]
    fn extremal_anomalous_sequence_decays() {
        let st = Spacetime::new(1, extremal_mass_number(1, &Default::default())).unwrap();
        let mode = RadialMode::new(st, -1, 1.0, None).unwrap();
        let (reps, s) = slope(&mode, -ALPHA);
        assert!((s + 1.0).abs() < 0.1, "slope {s}");
        assert!(reps.iter().all(|r| (r.norm - 1.0).abs() < 1e-10));
    }

    #[test]
    fn residual_is_theta_independent() {
        let s = SpectralSettings::default();
        let a = weyl_residual(&cfg_sub(0.0, 0.0), 0.02, 16, &s).unwrap();
        let b = weyl_residual(&cfg_sub(0.0, std::f64::consts::FRAC_PI_4), 0.02, 16, &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dominant_term_is_one_over_two_n() {
        let s = SpectralSettings::default();
        let r = weyl_residual(&cfg_sub(0.0, 0.0), 0.0, 256, &s).unwrap();
        assert!((r * 512.0 - 1.0).abs() < 1e-2);
    }
}
