use num_complex::Complex64;

use crate::operator::RadialMode;
use crate::Result;

use super::propagate::{Bundle, Engine, Pos};
use super::{forward_admissible, local_exponent, tail_start, SpectralSettings, TailUse};

/// Square-integrable solution counts at `lambda = +i` and `-i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeficiencyReport {
    pub n_plus: usize,
    pub n_minus: usize,
}

/// Decay threshold for one tail window of length `W`: `e^{-W/2}`.
fn decays(log_growth: f64, window: f64) -> bool {
    log_growth < -0.5 * window
}

/// Singular values of a 2x2 complex matrix, largest first.
fn singular_values(m: [[Complex64; 2]; 2]) -> (f64, f64) {
    let fro = m.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>();
    let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).norm_sqr();
    let disc = (fro * fro - 4.0 * det).max(0.0).sqrt();
    let big = 0.5 * (fro + disc);
    let small = if big > 0.0 { det / big } else { 0.0 };
    (big.sqrt(), small.sqrt())
}

fn count(mode: &RadialMode, z: Complex64, settings: &SpectralSettings) -> Result<usize> {
    let x = tail_start(mode, TailUse::Deficiency, settings);
    let w = settings.deficiency_window;
    if local_exponent(mode)? < 1.5 {
        // every solution is L2 at zero: count decaying directions in the tail
        let eng = Engine::new(mode, z, settings);
        let (b, _, _) = eng.x_leg(&Bundle::identity(), Pos::at_x(mode, x)?, x + w, &[])?;
        let (big, small) = singular_values(b.matrix());
        let n = [big, small]
            .iter()
            .filter(|&&s| decays(s.ln() + b.log_scale, w))
            .count();
        Ok(n)
    } else {
        let windows: Vec<f64> = (0..4).map(|i| x + w * i as f64).collect();
        let fwd = forward_admissible(mode, z, &windows, windows[3], settings)?;
        let logs: Vec<f64> = fwd.windows.iter().map(|g| 0.5 * g.log_first()).collect();
        Ok(usize::from(logs.windows(2).all(|v| decays(v[1] - v[0], w))))
    }
}

pub fn deficiency_indices(mode: &RadialMode, settings: &SpectralSettings) -> Result<DeficiencyReport> {
    mode.spacetime().require_black_hole()?;
    Ok(DeficiencyReport {
        n_plus: count(mode, Complex64::new(0.0, 1.0), settings)?,
        n_minus: count(mode, Complex64::new(0.0, -1.0), settings)?,
    })
}
