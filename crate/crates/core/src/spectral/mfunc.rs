use num_complex::Complex64;

use crate::coordinates::Rescale;
use crate::operator::RadialMode;
use crate::{Error, Result};

use super::propagate::{Bundle, Engine, Pos};
use super::{candidate_eigenvalue, local_exponent, tail_start, SpectralSettings, TailUse};

/// Titchmarsh-Weyl function from the solution square-integrable at infinity.
///
/// For `fa = 0` the boundary data at `r = 0` are read in the frame rotated by
/// `theta`; for `p >= 3/2` the ratio `g2 / g1` is taken at the point where
/// the admissible solution leaves the WKB regime. `Im z < 0` is accepted and
/// gives `conj(m(conj z))`.
pub fn m_function(mode: &RadialMode, z: Complex64, settings: &SpectralSettings) -> Result<Complex64> {
    mode.spacetime().require_black_hole()?;
    if z.im == 0.0 || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::InvalidInput(format!("z must be off the real axis, got {z}")));
    }
    let sign = z.im.signum();
    let x_tail = tail_start(mode, TailUse::Scan, settings);
    let start = Pos::at_x(mode, x_tail)?;
    let one = Complex64::new(1.0, 0.0);
    let decaying = Bundle::single([one, Complex64::new(0.0, sign)]);
    let eng = Engine::new(mode, z, settings);
    let xm = Pos::at_r(mode, 0.5);

    if mode.big_p() == 0.0 {
        let (b, _, _) = eng.x_leg(&decaying, start, xm.x, &[])?;
        let b = eng.r_leg(&b, 0.5, 0.0)?;
        let [g1, g2] = b.cols[0];
        let (s, c) = mode.theta().unwrap_or(0.0).sin_cos();
        return Ok((g1 * s + g2 * c) / (g1 * c - g2 * s));
    }
    if local_exponent(mode)? < 1.5 {
        return Err(Error::Unsupported(
            "0 < p < 3/2: the zero endpoint is limit-circle and no boundary condition is fixed".into(),
        ));
    }
    // reference point: end of the WKB regime of the real problem
    let lam = candidate_eigenvalue(mode.spacetime(), Rescale::ByInnerRadius)?;
    let real = Engine::new(mode, Complex64::new(lam, 0.0), settings);
    let x_ref = if real.branch(xm.p, 1.0).eps >= settings.eps_adiabatic {
        Some(xm)
    } else {
        let out = real.adiabatic_leg(xm, Complex64::new(0.0, 0.0), x_tail, &[])?;
        out.switched.then_some(out.pos)
    };
    match x_ref {
        Some(pos) => {
            let (b, _, _) = eng.x_leg(&decaying, start, pos.x, &[])?;
            let [g1, g2] = b.cols[0];
            Ok(g2 / g1)
        }
        // WKB throughout: take the branch decaying towards infinity
        None => Ok(eng.branch(xm.p, -1.0).y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::CoefficientModel;
    use crate::spacetime::Spacetime;

    const ALPHA: f64 = 1.0 / 137.036;

    fn mode(fa: f64, theta: f64) -> RadialMode {
        RadialMode::new(Spacetime::new(1, 2e18).unwrap(), -1, fa, Some(theta)).unwrap()
    }

    #[test]
    fn free_model_gives_i() {
        let s = SpectralSettings::default();
        let m = mode(0.0, 0.0).with_model(CoefficientModel::FreeComparison);
        for z in [Complex64::new(0.3, 0.5), Complex64::new(-ALPHA, 1e-3 * ALPHA), Complex64::new(2.0, 1.0)] {
            let v = m_function(&m, z, &s).unwrap();
            assert!((v - Complex64::new(0.0, 1.0)).norm() < 1e-8, "{z}: {v}");
        }
    }

    #[test]
    fn herglotz_and_conjugation() {
        let s = SpectralSettings::default();
        for m in [mode(0.0, 0.0), mode(0.0, 1.0), mode(1.0, 0.0)] {
            for z in [Complex64::new(-ALPHA, 1e-3 * ALPHA), Complex64::new(0.1, 0.2)] {
                let v = m_function(&m, z, &s).unwrap();
                assert!(v.im > 0.0, "{z}: {v}");
                let w = m_function(&m, z.conj(), &s).unwrap();
                assert!((w - v.conj()).norm() <= 1e-8 * v.norm(), "{v} vs {w}");
            }
        }
    }

    #[test]
    fn theta_rotation_is_moebius() {
        let s = SpectralSettings::default();
        let z = Complex64::new(0.02, 0.01);
        let m0 = m_function(&mode(0.0, 0.0), z, &s).unwrap();
        let th: f64 = 0.7;
        let mt = m_function(&mode(0.0, th), z, &s).unwrap();
        let (sn, c) = th.sin_cos();
        let oracle = (m0 * c + sn) / (c - m0 * sn);
        assert!((mt - oracle).norm() < 1e-8 * oracle.norm());
    }

    #[test]
    fn real_z_is_rejected() {
        assert!(m_function(&mode(0.0, 0.0), Complex64::new(0.1, 0.0), &SpectralSettings::default()).is_err());
    }
}
