//! Solution propagation for `(K - lambda) g = 0`.
//!
//! Three legs are available:
//! * an `r` leg, regular at `r = 0` when `fa = 0`;
//! * an explicit `x` leg carrying `t = -ln(1 - r)` as an extra state, with
//!   the solution bundle kept at unit Frobenius norm and the discarded
//!   growth accumulated in a log scale;
//! * an adiabatic leg that follows one WKB branch of the Riccati equation
//!   when the anomalous term makes the system extremely stiff.

use num_complex::Complex64;

use crate::coordinates::RadialPoint;
use crate::numerics::{ode_solve_with, OdeSettings};
use crate::operator::RadialMode;
use crate::Result;

use super::SpectralSettings;

type C = Complex64;

/// Solutions sharing a common log scale: actual solution `i` is
/// `exp(log_scale) * cols[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub cols: Vec<[C; 2]>,
    pub log_scale: f64,
}

impl Bundle {
    pub fn single(g: [C; 2]) -> Self {
        let mut b = Self {
            cols: vec![g],
            log_scale: 0.0,
        };
        b.normalize();
        b
    }

    pub fn identity() -> Self {
        Self {
            cols: vec![[C::new(1.0, 0.0), C::new(0.0, 0.0)], [C::new(0.0, 0.0), C::new(1.0, 0.0)]],
            log_scale: 0.0,
        }
    }

    fn frobenius(&self) -> f64 {
        self.cols
            .iter()
            .map(|g| g[0].norm_sqr() + g[1].norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.frobenius();
        if n > 0.0 && n.is_finite() {
            for g in &mut self.cols {
                g[0] /= n;
                g[1] /= n;
            }
            self.log_scale += n.ln();
        }
    }

    /// 2x2 matrix with the columns as solutions (two-column bundles).
    pub fn matrix(&self) -> [[C; 2]; 2] {
        [
            [self.cols[0][0], self.cols[1][0]],
            [self.cols[0][1], self.cols[1][1]],
        ]
    }
}

/// Window integral of the Gram matrix `G_ij = int conj(g_i) . g_j dx`,
/// stored as `exp(log_factor) * g` with `g = [G11, G22, Re G12, Im G12]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogGram {
    pub log_factor: f64,
    pub g: [f64; 4],
}

impl LogGram {
    pub fn zero() -> Self {
        Self {
            log_factor: f64::NEG_INFINITY,
            g: [0.0; 4],
        }
    }

    pub fn add(&mut self, other: &LogGram) {
        if other.log_factor == f64::NEG_INFINITY {
            return;
        }
        if self.log_factor == f64::NEG_INFINITY {
            *self = *other;
            return;
        }
        let m = self.log_factor.max(other.log_factor);
        let (a, b) = ((self.log_factor - m).exp(), (other.log_factor - m).exp());
        for i in 0..4 {
            self.g[i] = a * self.g[i] + b * other.g[i];
        }
        self.log_factor = m;
    }

    /// `ln int |sum_i v_i g_i|^2`.
    pub fn log_norm(&self, v: [C; 2]) -> f64 {
        let g12 = C::new(self.g[2], self.g[3]);
        let q = v[0].norm_sqr() * self.g[0]
            + v[1].norm_sqr() * self.g[1]
            + 2.0 * (v[0].conj() * g12 * v[1]).re;
        self.log_factor + q.max(0.0).ln()
    }

    /// `ln int |g_1|^2` of the first solution.
    pub fn log_first(&self) -> f64 {
        self.log_factor + self.g[0].ln()
    }
}

/// Position along the path: coordinate and radial point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pos {
    pub x: f64,
    pub p: RadialPoint,
}

impl Pos {
    pub fn at_r(mode: &RadialMode, r: f64) -> Self {
        let p = RadialPoint::from_r(r);
        Self {
            x: mode.geometry().x_hat(p),
            p,
        }
    }

    pub fn at_x(mode: &RadialMode, x: f64) -> Result<Self> {
        Ok(Self {
            x,
            p: mode.geometry().point_of_x(x)?,
        })
    }
}

/// Local WKB data for one branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchData {
    /// `sqrt(kt^2 + alpha beta)` with the branch sign applied.
    pub lambda: C,
    /// Corrected slope `g2 / g1` on the branch.
    pub y: C,
    /// Growth rate of `ln g1` in `x`.
    pub rate: C,
    /// Adiabaticity parameter.
    pub eps: f64,
    /// `|Lambda| / |Lambda'|`, the local variation length.
    pub scale: f64,
}

pub struct Engine<'a> {
    pub mode: &'a RadialMode,
    pub lambda: C,
    pub settings: &'a SpectralSettings,
}

fn pack(b: &Bundle, y: &mut Vec<f64>) {
    for g in &b.cols {
        y.extend_from_slice(&[g[0].re, g[0].im, g[1].re, g[1].im]);
    }
}

fn unpack(y: &[f64], ncols: usize) -> Vec<[C; 2]> {
    (0..ncols)
        .map(|i| {
            let o = 4 * i;
            [C::new(y[o], y[o + 1]), C::new(y[o + 2], y[o + 3])]
        })
        .collect()
}

fn gram_len(ncols: usize) -> usize {
    if ncols == 1 {
        1
    } else {
        4
    }
}

impl<'a> Engine<'a> {
    pub fn new(mode: &'a RadialMode, lambda: C, settings: &'a SpectralSettings) -> Self {
        Self {
            mode,
            lambda,
            settings,
        }
    }

    fn ode(&self) -> OdeSettings {
        OdeSettings::new(self.settings.ode_tol).with_max_steps(self.settings.max_steps)
    }

    /// Propagate in `r` from `r0` to `r1` (either direction).
    pub fn r_leg(&self, bundle: &Bundle, r0: f64, r1: f64) -> Result<Bundle> {
        let ncols = bundle.cols.len();
        let mut y0 = vec![bundle.log_scale];
        pack(bundle, &mut y0);
        let mode = self.mode;
        let lambda = self.lambda;
        let traj = ode_solve_with(
            |r, y, dy| {
                let p = RadialPoint::from_r(r);
                let cols = unpack(&y[1..], ncols);
                let mut num = 0.0;
                let mut den = 0.0;
                let mut d = Vec::with_capacity(ncols);
                for g in &cols {
                    let dg = mode.rhs_r(p, lambda, *g);
                    num += (g[0].conj() * dg[0] + g[1].conj() * dg[1]).re;
                    den += g[0].norm_sqr() + g[1].norm_sqr();
                    d.push(dg);
                }
                let sig = num / den;
                dy[0] = sig;
                for (i, (g, dg)) in cols.iter().zip(&d).enumerate() {
                    let o = 1 + 4 * i;
                    let a = dg[0] - g[0] * sig;
                    let b = dg[1] - g[1] * sig;
                    dy[o] = a.re;
                    dy[o + 1] = a.im;
                    dy[o + 2] = b.re;
                    dy[o + 3] = b.im;
                }
            },
            r0,
            r1,
            &y0,
            &self.ode(),
            Some(&[r1]),
        )?;
        let y = traj.ys.last().expect("end state");
        let mut out = Bundle {
            cols: unpack(&y[1..], ncols),
            log_scale: y[0],
        };
        out.normalize();
        Ok(out)
    }

    /// Explicit propagation in `x` from `start` to `x_end`. For forward legs
    /// `windows` lists window boundaries; the Gram integral over each
    /// consecutive pair that lies inside `[start.x, x_end]` is returned.
    pub fn x_leg(
        &self,
        bundle: &Bundle,
        start: Pos,
        x_end: f64,
        windows: &[f64],
    ) -> Result<(Bundle, Pos, Vec<LogGram>)> {
        let ncols = bundle.cols.len();
        let ng = gram_len(ncols);
        let forward = x_end >= start.x;
        let mut grams = vec![LogGram::zero(); windows.len().saturating_sub(1)];

        // segment boundaries
        let mut stops: Vec<f64> = if forward {
            windows
                .iter()
                .copied()
                .filter(|&w| w > start.x && w < x_end)
                .collect()
        } else {
            Vec::new()
        };
        stops.push(x_end);

        let mut y = vec![start.p.log_gap.abs(), bundle.log_scale];
        y[0] = -start.p.log_gap;
        pack(bundle, &mut y);
        y.extend(std::iter::repeat(0.0).take(ng));
        let mut x = start.x;
        let mode = self.mode;
        let lambda = self.lambda;
        let geometry = mode.geometry();
        let g0 = 2 + 4 * ncols;

        for &stop in &stops {
            if stop == x {
                continue;
            }
            let window = if forward {
                windows.windows(2).position(|w| x >= w[0] && stop <= w[1])
            } else {
                None
            };
            for v in &mut y[g0..] {
                *v = 0.0;
            }
            let traj = ode_solve_with(
                |_x, y, dy| {
                    let p = RadialPoint::from_log_gap(-y[0]);
                    dy[0] = geometry.dt_dx(p);
                    let lc = mode.local(p);
                    let plus = lambda + lc.mass + lc.b;
                    let minus = lc.mass - lc.b - lambda;
                    let cols = unpack(&y[2..], ncols);
                    let mut num = 0.0;
                    let mut den = 0.0;
                    let mut d = [[C::new(0.0, 0.0); 2]; 2];
                    for (i, g) in cols.iter().enumerate() {
                        let dg = [-lc.kt * g[0] + plus * g[1], minus * g[0] + lc.kt * g[1]];
                        num += (g[0].conj() * dg[0] + g[1].conj() * dg[1]).re;
                        den += g[0].norm_sqr() + g[1].norm_sqr();
                        d[i] = dg;
                    }
                    let sig = num / den;
                    dy[1] = sig;
                    for (i, g) in cols.iter().enumerate() {
                        let o = 2 + 4 * i;
                        let a = d[i][0] - g[0] * sig;
                        let b = d[i][1] - g[1] * sig;
                        dy[o] = a.re;
                        dy[o + 1] = a.im;
                        dy[o + 2] = b.re;
                        dy[o + 3] = b.im;
                    }
                    let go = 2 + 4 * ncols;
                    let n0 = cols[0][0].norm_sqr() + cols[0][1].norm_sqr();
                    dy[go] = n0 - 2.0 * sig * y[go];
                    if ncols == 2 {
                        let n1 = cols[1][0].norm_sqr() + cols[1][1].norm_sqr();
                        let g12 = cols[0][0].conj() * cols[1][0] + cols[0][1].conj() * cols[1][1];
                        dy[go + 1] = n1 - 2.0 * sig * y[go + 1];
                        dy[go + 2] = g12.re - 2.0 * sig * y[go + 2];
                        dy[go + 3] = g12.im - 2.0 * sig * y[go + 3];
                    }
                },
                x,
                stop,
                &y,
                &self.ode(),
                Some(&[stop]),
            )?;
            y = traj.ys.last().expect("end state").clone();
            if let Some(w) = window {
                let mut g = [0.0; 4];
                g[..ng].copy_from_slice(&y[g0..g0 + ng]);
                grams[w].add(&LogGram {
                    log_factor: 2.0 * y[1],
                    g,
                });
            }
            // fold the norm back into the log scale
            let mut b = Bundle {
                cols: unpack(&y[2..], ncols),
                log_scale: y[1],
            };
            b.normalize();
            y.truncate(2);
            y[1] = b.log_scale;
            pack(&b, &mut y);
            y.extend(std::iter::repeat(0.0).take(ng));
            x = stop;
        }
        let bundle = Bundle {
            cols: unpack(&y[2..], ncols),
            log_scale: y[1],
        };
        let pos = Pos {
            x,
            p: RadialPoint::from_log_gap(-y[0]),
        };
        Ok((bundle, pos, grams))
    }

    fn branch_raw(&self, p: RadialPoint, sign: f64) -> (C, C, C) {
        let lc = self.mode.local(p);
        let kt = C::from(lc.kt);
        let alpha = self.lambda + lc.mass + lc.b;
        let beta = lc.mass - lc.b - self.lambda;
        let lam = (kt * kt + alpha * beta).sqrt() * sign;
        let y = if (kt + lam).norm() >= (lam - kt).norm() {
            (kt + lam) / alpha
        } else {
            beta / (lam - kt)
        };
        (lam, y, alpha)
    }

    /// WKB data at `p` for the branch growing (`sign = 1`) or decaying
    /// (`sign = -1`) in the direction of increasing `x`.
    pub fn branch(&self, p: RadialPoint, sign: f64) -> BranchData {
        let t = -p.log_gap;
        let h = 1e-5 * t.max(1.0).min(1e3).sqrt();
        let (lam, y, alpha) = self.branch_raw(p, sign);
        let (lp, yp, _) = self.branch_raw(RadialPoint::from_log_gap(-(t + h)), sign);
        let (lm, ym, _) = self.branch_raw(RadialPoint::from_log_gap(-(t - h)), sign);
        let dtdx = self.mode.geometry().dt_dx(p);
        let dlam = (lp - lm) * (dtdx / (2.0 * h));
        let dy = (yp - ym) * (dtdx / (2.0 * h));
        let mag = lam.norm();
        let eps = (alpha * dy).norm().max(dlam.norm()) / (mag * mag);
        BranchData {
            lambda: lam,
            y: y - dy / (2.0 * lam),
            rate: lam - alpha * dy / (2.0 * lam),
            eps: if eps.is_finite() { eps } else { f64::INFINITY },
            scale: if dlam.norm() > 0.0 { mag / dlam.norm() } else { f64::INFINITY },
        }
    }

    /// Follow the growing branch from `start` while it stays adiabatic.
    pub fn adiabatic_leg(
        &self,
        start: Pos,
        log_amp: C,
        x_end: f64,
        windows: &[f64],
    ) -> Result<AdiabaticOutcome> {
        let mut grams = vec![LogGram::zero(); windows.len().saturating_sub(1)];
        let mut pos = start;
        let mut lg = log_amp;
        let mut data = self.branch(pos.p, 1.0);
        let phi = |lg: C, d: &BranchData| 2.0 * lg.re + (1.0 + d.y.norm_sqr()).ln();
        let mut switched = false;
        let mut chunks = 0usize;
        let geometry = self.mode.geometry();
        let mut ode = self.ode();
        while pos.x < x_end {
            if data.eps > self.settings.eps_adiabatic {
                switched = true;
                break;
            }
            chunks += 1;
            if chunks > self.settings.max_steps {
                return Err(crate::numerics::NumericsError::NoConvergence {
                    what: "adiabatic leg",
                    iterations: chunks,
                }
                .into());
            }
            let next_window = windows.iter().copied().find(|&w| w > pos.x).unwrap_or(f64::INFINITY);
            let len = (0.05 * data.scale).max(1e-12 * pos.x.max(1.0));
            let stop = (pos.x + len).min(x_end).min(next_window);
            let engine = self;
            ode.tol.abs_tol = self.settings.ode_tol.rel_tol * (1.0 + data.rate.norm() * (stop - pos.x));
            let traj = ode_solve_with(
                |_x, y, dy| {
                    let p = RadialPoint::from_log_gap(-y[0]);
                    dy[0] = geometry.dt_dx(p);
                    let b = engine.branch(p, 1.0);
                    dy[1] = b.rate.re;
                    dy[2] = b.rate.im;
                },
                pos.x,
                stop,
                &[-pos.p.log_gap, lg.re, lg.im],
                &ode,
                Some(&[stop]),
            )?;
            let y = traj.ys.last().expect("end state");
            let new_pos = Pos {
                x: stop,
                p: RadialPoint::from_log_gap(-y[0]),
            };
            let new_lg = C::new(y[1], y[2]);
            let new_data = self.branch(new_pos.p, 1.0);
            if let Some(w) = windows.windows(2).position(|w| pos.x >= w[0] && stop <= w[1]) {
                let (p0, p1) = (phi(lg, &data), phi(new_lg, &new_data));
                let dphi = (p1 - p0).abs();
                let shape = if dphi < 1e-8 {
                    0.0
                } else {
                    ((-(dphi)).exp_m1().abs() / dphi).ln()
                };
                grams[w].add(&LogGram {
                    log_factor: p0.max(p1) + (stop - pos.x).ln() + shape,
                    g: [1.0, 0.0, 0.0, 0.0],
                });
            }
            pos = new_pos;
            lg = new_lg;
            data = new_data;
        }
        Ok(AdiabaticOutcome {
            pos,
            log_amp: lg,
            slope: data.y,
            switched,
            windows: grams,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdiabaticOutcome {
    pub pos: Pos,
    pub log_amp: C,
    /// `g2 / g1` at the end point.
    pub slope: C,
    /// True when the leg stopped because adiabaticity was lost.
    pub switched: bool,
    pub windows: Vec<LogGram>,
}

impl AdiabaticOutcome {
    /// Bundle continuing the branch solution in an explicit leg.
    pub fn to_bundle(&self) -> Bundle {
        let mut b = Bundle::single([C::new(1.0, 0.0), self.slope]);
        b.log_scale += self.log_amp.re;
        b
    }
}
