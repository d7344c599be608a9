//! Deterministic numerical kernels: bracketed root finding, adaptive
//! Gauss-Kronrod quadrature, a Dormand-Prince 5(4) integrator with dense
//! output, and least-squares power-law fits.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("root not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    NoBracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },
    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },
    #[error("step size underflow at x = {x} (h = {h})")]
    StepUnderflow { x: f64, h: f64 },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),
    #[error("non-finite value encountered at x = {x}")]
    NonFinite { x: f64 },
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// Relative/absolute tolerances plus an iteration budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iterations: usize,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_iterations: 200,
        }
    }
}

impl ToleranceSpec {
    pub fn new(rel_tol: f64, abs_tol: f64, max_iterations: usize) -> Result<Self> {
        let tol = Self {
            rel_tol,
            abs_tol,
            max_iterations,
        };
        tol.validate()?;
        Ok(tol)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !self.rel_tol.is_finite() {
            return Err(NumericsError::InvalidTolerance(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if !(self.abs_tol >= 0.0) || !self.abs_tol.is_finite() {
            return Err(NumericsError::InvalidTolerance(format!(
                "abs_tol must be non-negative, got {}",
                self.abs_tol
            )));
        }
        if self.max_iterations == 0 {
            return Err(NumericsError::InvalidTolerance(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn with_rel(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_abs(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }
}

// ---------------------------------------------------------------------------
// Root finding
// ---------------------------------------------------------------------------

/// Brent's method on a sign-changing bracket `[lo, hi]`.
///
/// The returned root always lies inside the initial bracket. Iteration stops
/// when the bracket has shrunk below `abs_tol + rel_tol * |x|` (plus a few
/// ulps) or the function value is exactly zero.
pub fn root_find_bracketed<F>(mut f: F, lo: f64, hi: f64, tol: &ToleranceSpec) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    tol.validate()?;
    if !(lo < hi) {
        return Err(NumericsError::DegenerateInput(format!(
            "bracket requires lo < hi, got [{lo}, {hi}]"
        )));
    }
    let mut a = lo;
    let mut b = hi;
    let mut fa = f(a);
    let mut fb = f(b);
    if !fa.is_finite() {
        return Err(NumericsError::NonFinite { x: a });
    }
    if !fb.is_finite() {
        return Err(NumericsError::NonFinite { x: b });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(NumericsError::NoBracket {
            lo,
            hi,
            f_lo: fa,
            f_hi: fb,
        });
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..tol.max_iterations {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * (tol.abs_tol + tol.rel_tol * b.abs());
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b.clamp(lo, hi));
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // inverse quadratic interpolation, secant when only two points
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        if d.abs() > tol1 {
            b += d;
        } else {
            b += tol1.copysign(xm);
        }
        fb = f(b);
        if !fb.is_finite() {
            return Err(NumericsError::NonFinite { x: b });
        }
    }
    Err(NumericsError::NoConvergence {
        what: "root_find_bracketed",
        iterations: tol.max_iterations,
    })
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gauss_kronrod_15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<Segment> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    if !fc.is_finite() {
        return Err(NumericsError::NonFinite { x: center });
    }
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = kronrod.abs();
    let mut samples = [0.0; 15];
    samples[7] = fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let x1 = center - dx;
        let x2 = center + dx;
        let f1 = f(x1);
        let f2 = f(x2);
        if !f1.is_finite() {
            return Err(NumericsError::NonFinite { x: x1 });
        }
        if !f2.is_finite() {
            return Err(NumericsError::NonFinite { x: x2 });
        }
        samples[j] = f1;
        samples[14 - j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((samples[j] - mean).abs() + (samples[14 - j] - mean).abs());
    }
    let value = kronrod * half;
    let resabs = abs_sum * half.abs();
    let resasc = asc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (1.0f64).min((200.0 * error / resasc).powf(1.5));
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    Ok(Segment { a, b, value, error })
}

/// Globally adaptive Gauss-Kronrod (7/15) quadrature on `[a, b]`.
///
/// `b` may be `f64::INFINITY`; the half-line is then mapped onto `[0, 1)`
/// with `x = a + t / (1 - t)`. `max_iterations` bounds the number of
/// bisections.
pub fn integrate_adaptive<F>(mut f: F, a: f64, b: f64, tol: &ToleranceSpec) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    tol.validate()?;
    if a == b {
        return Ok(0.0);
    }
    if b == f64::INFINITY {
        if !a.is_finite() {
            return Err(NumericsError::DegenerateInput(
                "lower limit must be finite".into(),
            ));
        }
        return integrate_finite(
            |t: f64| {
                let s = 1.0 - t;
                let x = a + t / s;
                let v = f(x) / (s * s);
                if x.is_finite() && v.is_finite() {
                    v
                } else {
                    0.0
                }
            },
            0.0,
            1.0,
            tol,
        );
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(NumericsError::DegenerateInput(
            "only [a, +inf) infinite ranges are supported".into(),
        ));
    }
    if b < a {
        return integrate_finite(f, b, a, tol).map(|v| -v);
    }
    integrate_finite(f, a, b, tol)
}

fn integrate_finite<F>(mut f: F, a: f64, b: f64, tol: &ToleranceSpec) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let first = gauss_kronrod_15(&mut f, a, b)?;
    let mut segments = vec![first];
    let mut total = first.value;
    let mut total_err = first.error;
    for _ in 0..tol.max_iterations {
        let target = tol.abs_tol.max(tol.rel_tol * total.abs());
        if total_err <= target {
            return Ok(total);
        }
        // bisect the segment with the largest error estimate
        let (idx, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("at least one segment");
        let worst = segments.swap_remove(idx);
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // interval exhausted at machine resolution
            segments.push(Segment {
                error: 0.0,
                ..worst
            });
            total_err = segments.iter().map(|s| s.error).sum();
            continue;
        }
        let left = gauss_kronrod_15(&mut f, worst.a, mid)?;
        let right = gauss_kronrod_15(&mut f, mid, worst.b)?;
        segments.push(left);
        segments.push(right);
        total = segments.iter().map(|s| s.value).sum();
        total_err = segments.iter().map(|s| s.error).sum();
    }
    let target = tol.abs_tol.max(tol.rel_tol * total.abs());
    if total_err <= target {
        Ok(total)
    } else {
        Err(NumericsError::NoConvergence {
            what: "integrate_adaptive",
            iterations: tol.max_iterations,
        })
    }
}

/// Declared algebraic endpoint behaviour `f ~ (x - endpoint)^exponent`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EndpointHint {
    pub left_exponent: Option<f64>,
    pub right_exponent: Option<f64>,
}

impl EndpointHint {
    pub fn left(exponent: f64) -> Self {
        Self {
            left_exponent: Some(exponent),
            right_exponent: None,
        }
    }

    pub fn right(exponent: f64) -> Self {
        Self {
            left_exponent: None,
            right_exponent: Some(exponent),
        }
    }
}

fn power_for(exponent: f64) -> Result<f64> {
    if !(exponent > -1.0) {
        return Err(NumericsError::DegenerateInput(format!(
            "endpoint exponent {exponent} is not integrable"
        )));
    }
    // x - a = (b - a) t^m with m (1 + s) = 1 removes the algebraic factor
    Ok((1.0 / (1.0 + exponent)).max(1.0))
}

/// Adaptive quadrature on a finite `[a, b]` with algebraic endpoint
/// singularities removed by the substitution `x - a = (b - a) t^m`.
pub fn integrate_with_hint<F>(
    mut f: F,
    a: f64,
    b: f64,
    hint: EndpointHint,
    tol: &ToleranceSpec,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    hinted(&mut f, a, b, hint, tol)
}

fn hinted(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    b: f64,
    hint: EndpointHint,
    tol: &ToleranceSpec,
) -> Result<f64> {
    tol.validate()?;
    if !(a < b) || !b.is_finite() || !a.is_finite() {
        return Err(NumericsError::DegenerateInput(format!(
            "hinted quadrature needs a finite a < b, got [{a}, {b}]"
        )));
    }
    match (hint.left_exponent, hint.right_exponent) {
        (None, None) => integrate_finite(f, a, b, tol),
        (Some(s), None) => {
            let m = power_for(s)?;
            let width = b - a;
            integrate_finite(
                |t: f64| {
                    if t <= 0.0 {
                        return 0.0;
                    }
                    let x = a + width * t.powf(m);
                    f(x) * width * m * t.powf(m - 1.0)
                },
                0.0,
                1.0,
                tol,
            )
        }
        (None, Some(s)) => {
            let m = power_for(s)?;
            let width = b - a;
            integrate_finite(
                |t: f64| {
                    if t <= 0.0 {
                        return 0.0;
                    }
                    let x = b - width * t.powf(m);
                    f(x) * width * m * t.powf(m - 1.0)
                },
                0.0,
                1.0,
                tol,
            )
        }
        (Some(sl), Some(sr)) => {
            let mid = 0.5 * (a + b);
            let split = ToleranceSpec {
                abs_tol: 0.5 * tol.abs_tol,
                ..*tol
            };
            let left = hinted(f, a, mid, EndpointHint::left(sl), &split)?;
            let right = hinted(f, mid, b, EndpointHint::right(sr), &split)?;
            Ok(left + right)
        }
    }
}

/// Fixed-order Gauss-Legendre rule on `[a, b]` (16 nodes).
pub fn gauss_legendre_16<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    const NODES: [f64; 8] = [
        0.095_012_509_837_637_440_185,
        0.281_603_550_779_258_913_230,
        0.458_016_777_657_227_386_342,
        0.617_876_244_402_643_748_447,
        0.755_404_408_355_003_033_895,
        0.865_631_202_387_831_743_880,
        0.944_575_023_073_232_576_078,
        0.989_400_934_991_649_932_596,
    ];
    const WEIGHTS: [f64; 8] = [
        0.189_450_610_455_068_496_285,
        0.182_603_415_044_923_588_867,
        0.169_156_519_395_002_538_189,
        0.149_595_988_816_576_732_081,
        0.124_628_971_255_533_872_052,
        0.095_158_511_682_492_784_810,
        0.062_253_523_938_647_892_863,
        0.027_152_459_411_754_094_852,
    ];
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut sum = 0.0;
    for (x, w) in NODES.iter().zip(WEIGHTS.iter()) {
        sum += w * (f(c - h * x) + f(c + h * x));
    }
    sum * h
}

// ---------------------------------------------------------------------------
// ODE integration
// ---------------------------------------------------------------------------

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Settings for [`ode_solve_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeSettings {
    pub tol: ToleranceSpec,
    /// Upper bound on accepted plus rejected steps.
    pub max_steps: usize,
    /// Optional cap on |h|.
    pub h_max: Option<f64>,
    /// Optional first step size.
    pub h_init: Option<f64>,
}

impl OdeSettings {
    pub fn new(tol: ToleranceSpec) -> Self {
        Self {
            tol,
            max_steps: 2_000_000,
            h_max: None,
            h_init: None,
        }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = Some(h_max);
        self
    }

    pub fn with_h_init(mut self, h: f64) -> Self {
        self.h_init = Some(h);
        self
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }
}

/// Sampled solution of an initial value problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub xs: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn last(&self) -> (f64, &[f64]) {
        let n = self.xs.len() - 1;
        (self.xs[n], &self.ys[n])
    }
}

/// Integrate `y' = rhs(x, y)` from `x0` to `x1`, recording every accepted
/// step. Uses the default step budget of [`OdeSettings`].
pub fn ode_solve<F>(rhs: F, x0: f64, x1: f64, y0: &[f64], tol: &ToleranceSpec) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    ode_solve_with(rhs, x0, x1, y0, &OdeSettings::new(*tol), None)
}

/// Dormand-Prince 5(4) with step-size control.
///
/// With `outputs = Some(points)` the trajectory is sampled at exactly those
/// abscissae (monotone in the direction of integration, inside `[x0, x1]`)
/// using the fifth-order dense output; otherwise every accepted step is
/// recorded. `x1 < x0` integrates backwards.
pub fn ode_solve_with<F>(
    mut rhs: F,
    x0: f64,
    x1: f64,
    y0: &[f64],
    settings: &OdeSettings,
    outputs: Option<&[f64]>,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let tol = settings.tol;
    tol.validate()?;
    let n = y0.len();
    let dir = if x1 >= x0 { 1.0 } else { -1.0 };
    let span = (x1 - x0).abs();

    let mut traj = Trajectory {
        xs: Vec::new(),
        ys: Vec::new(),
        accepted_steps: 0,
        rejected_steps: 0,
    };
    let mut out_idx = 0usize;
    let outputs = outputs.unwrap_or(&[]);
    let dense = !outputs.is_empty();
    if let Some(w) = outputs.windows(2).find(|w| (w[1] - w[0]) * dir < 0.0) {
        return Err(NumericsError::DegenerateInput(format!(
            "output points not monotone: {} then {}",
            w[0], w[1]
        )));
    }

    // emit outputs at (or before) x0
    let record_start = |traj: &mut Trajectory, out_idx: &mut usize| {
        if dense {
            while *out_idx < outputs.len() && (outputs[*out_idx] - x0) * dir <= 0.0 {
                traj.xs.push(outputs[*out_idx]);
                traj.ys.push(y0.to_vec());
                *out_idx += 1;
            }
        } else {
            traj.xs.push(x0);
            traj.ys.push(y0.to_vec());
        }
    };
    record_start(&mut traj, &mut out_idx);
    if span == 0.0 {
        return Ok(traj);
    }

    let mut x = x0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    rhs(x, &y, &mut k1);
    if k1.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite { x });
    }

    let h_max = settings.h_max.unwrap_or(span).min(span);
    let mut h = match settings.h_init {
        Some(h0) => h0.abs().min(h_max),
        None => initial_step(&mut rhs, x, &y, &k1, dir, &tol, h_max),
    };
    let mut err_prev: f64 = 1e-4;
    let mut reject = false;

    for _ in 0..settings.max_steps {
        if (x1 - x) * dir <= 0.0 {
            break;
        }
        let remaining = (x1 - x).abs();
        let mut last = false;
        if h >= remaining * (1.0 - 1e-12) {
            h = remaining;
            last = true;
        }
        if h <= 10.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) || h == 0.0 {
            return Err(NumericsError::StepUnderflow { x, h });
        }
        let hs = h * dir;

        for i in 0..n {
            ytmp[i] = y[i] + hs * A21 * k1[i];
        }
        rhs(x + C2 * hs, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(x + C3 * hs, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(x + C4 * hs, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(x + C5 * hs, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] = y[i]
                + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let x_new = if last { x1 } else { x + hs };
        rhs(x + hs, &ytmp, &mut k6);
        for i in 0..n {
            ynew[i] = y[i]
                + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(x_new, &ynew, &mut k7);

        let mut err = 0.0;
        let mut finite = true;
        for i in 0..n {
            let e = hs
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol.abs_tol + tol.rel_tol * y[i].abs().max(ynew[i].abs());
            let r = if sc > 0.0 { e / sc } else { e / f64::MIN_POSITIVE };
            err += r * r;
            finite &= ynew[i].is_finite() && k7[i].is_finite();
        }
        err = (err / n.max(1) as f64).sqrt();
        if !finite || !err.is_finite() {
            traj.rejected_steps += 1;
            reject = true;
            h *= 0.25;
            continue;
        }

        if err <= 1.0 {
            // accepted: dense output between x and x_new
            if dense {
                while out_idx < outputs.len() && (outputs[out_idx] - x_new) * dir <= 0.0 {
                    let theta = (outputs[out_idx] - x) / hs;
                    let theta1 = 1.0 - theta;
                    let mut yo = vec![0.0; n];
                    for i in 0..n {
                        let r1 = y[i];
                        let r2 = ynew[i] - y[i];
                        let r3 = hs * k1[i] - r2;
                        let r4 = r2 - hs * k7[i] - r3;
                        let r5 = hs
                            * (D1 * k1[i]
                                + D3 * k3[i]
                                + D4 * k4[i]
                                + D5 * k5[i]
                                + D6 * k6[i]
                                + D7 * k7[i]);
                        yo[i] = r1 + theta * (r2 + theta1 * (r3 + theta * (r4 + theta1 * r5)));
                    }
                    traj.xs.push(outputs[out_idx]);
                    traj.ys.push(yo);
                    out_idx += 1;
                }
            } else {
                traj.xs.push(x_new);
                traj.ys.push(ynew.clone());
            }
            traj.accepted_steps += 1;
            x = x_new;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);

            // PI controller (Hairer's beta = 0.04)
            let err_c = err.max(1e-10);
            let mut fac = 0.9 * err_c.powf(-0.2 + 0.04 * 0.75) * err_prev.powf(0.04);
            fac = fac.clamp(0.2, 10.0);
            if reject {
                fac = fac.min(1.0);
            }
            err_prev = err_c.max(1e-4);
            h = (h * fac).min(h_max);
            reject = false;
            if last {
                break;
            }
        } else {
            traj.rejected_steps += 1;
            reject = true;
            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            h *= fac;
        }
    }
    if (x1 - x) * dir > 0.0 {
        return Err(NumericsError::NoConvergence {
            what: "ode_solve",
            iterations: settings.max_steps,
        });
    }
    // outputs exactly at x1 that were not emitted because of rounding
    while dense && out_idx < outputs.len() {
        traj.xs.push(outputs[out_idx]);
        traj.ys.push(y.clone());
        out_idx += 1;
    }
    Ok(traj)
}

fn initial_step<F>(
    rhs: &mut F,
    x: f64,
    y: &[f64],
    f0: &[f64],
    dir: f64,
    tol: &ToleranceSpec,
    h_max: f64,
) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..n {
        let sc = tol.abs_tol + tol.rel_tol * y[i].abs();
        let sc = if sc > 0.0 { sc } else { f64::MIN_POSITIVE };
        d0 += (y[i] / sc).powi(2);
        d1 += (f0[i] / sc).powi(2);
    }
    d0 = (d0 / n.max(1) as f64).sqrt();
    d1 = (d1 / n.max(1) as f64).sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(h_max);
    let mut y1 = vec![0.0; n];
    for i in 0..n {
        y1[i] = y[i] + dir * h0 * f0[i];
    }
    let mut f1 = vec![0.0; n];
    rhs(x + dir * h0, &y1, &mut f1);
    let mut d2 = 0.0;
    for i in 0..n {
        let sc = tol.abs_tol + tol.rel_tol * y[i].abs();
        let sc = if sc > 0.0 { sc } else { f64::MIN_POSITIVE };
        d2 += ((f1[i] - f0[i]) / sc).powi(2);
    }
    d2 = (d2 / n.max(1) as f64).sqrt() / h0;
    if !d2.is_finite() {
        return h0 * 1e-3;
    }
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(h_max)
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

/// Least-squares line `y = slope x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
}

/// Ordinary least-squares line through `(x, y)` samples.
pub fn fit_line(samples: &[(f64, f64)]) -> Result<FitResult> {
    if samples.len() < 2 {
        return Err(NumericsError::DegenerateInput(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mx = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxx: f64 = samples.iter().map(|s| (s.0 - mx).powi(2)).sum();
    let sxy: f64 = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum();
    if sxx == 0.0 || !sxx.is_finite() {
        return Err(NumericsError::DegenerateInput(
            "all abscissae are equal".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = samples
        .iter()
        .map(|s| (s.1 - (slope * s.0 + intercept)).powi(2))
        .sum();
    Ok(FitResult {
        slope,
        intercept,
        residual_rms: (ss / n).sqrt(),
    })
}

/// Fit `y = C x^slope` by least squares in `(ln x, ln y)`.
pub fn fit_power_law(samples: &[(f64, f64)]) -> Result<FitResult> {
    if samples.len() < 3 {
        return Err(NumericsError::DegenerateInput(format!(
            "need at least 3 samples, got {}",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|s| !(s.0 > 0.0 && s.1 > 0.0)) {
        return Err(NumericsError::DegenerateInput(format!(
            "power-law samples must be positive, got ({}, {})",
            bad.0, bad.1
        )));
    }
    let logs: Vec<(f64, f64)> = samples.iter().map(|s| (s.0.ln(), s.1.ln())).collect();
    fit_line(&logs)
}

/// `n` log-spaced points on `[lo, hi]` (inclusive).
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// `n` evenly spaced points on `[lo, hi]` (inclusive).
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// `ln(sum(exp(terms)))` without overflow.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m == f64::INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> ToleranceSpec {
        ToleranceSpec::default()
    }

    #[test]
    fn brent_sqrt_two() {
        let r = root_find_bracketed(|x| x * x - 2.0, 1.0, 2.0, &tol()).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn brent_odd_function() {
        let r = root_find_bracketed(|x| x, -1.0, 1.0, &tol()).unwrap();
        assert!(r.abs() < 1e-14);
    }

    #[test]
    fn brent_errors() {
        assert!(matches!(
            root_find_bracketed(|x| x * x + 1.0, -1.0, 1.0, &tol()),
            Err(NumericsError::NoBracket { .. })
        ));
        let tight = tol().with_max_iterations(2).with_rel(1e-16).with_abs(0.0);
        assert!(matches!(
            root_find_bracketed(|x| x.powi(3) - 0.3, 0.0, 10.0, &tight),
            Err(NumericsError::NoConvergence { .. })
        ));
        assert!(root_find_bracketed(|x| x, 1.0, -1.0, &tol()).is_err());
    }

    #[test]
    fn tolerance_validation() {
        assert!(ToleranceSpec::new(0.0, 0.0, 1).is_err());
        assert!(ToleranceSpec::new(1e-8, -1.0, 1).is_err());
        assert!(ToleranceSpec::new(1e-8, 0.0, 0).is_err());
        assert!(ToleranceSpec::new(1e-8, 0.0, 1).is_ok());
    }

    #[test]
    fn quadrature_polynomial() {
        let v = integrate_adaptive(|x| x * x, 0.0, 1.0, &tol()).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn quadrature_endpoint_singularity() {
        let v = integrate_with_hint(|x| x.powf(-2.0 / 3.0), 0.0, 1.0, EndpointHint::left(-2.0 / 3.0), &tol())
            .unwrap();
        assert!((v - 3.0).abs() < 1e-10);
        let w = integrate_with_hint(
            |x| (1.0 - x).powf(-0.5),
            0.0,
            1.0,
            EndpointHint::right(-0.5),
            &tol(),
        )
        .unwrap();
        assert!((w - 2.0).abs() < 1e-10);
    }

    #[test]
    fn quadrature_half_line() {
        let v = integrate_adaptive(|x| (-x).exp(), 0.0, f64::INFINITY, &tol()).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quadrature_reversed_limits() {
        let v = integrate_adaptive(|x| x, 1.0, 0.0, &tol()).unwrap();
        assert!((v + 0.5).abs() < 1e-14);
    }

    #[test]
    fn ode_exponential() {
        let traj = ode_solve(|_, y, dy| dy[0] = y[0], 0.0, 1.0, &[1.0], &tol()).unwrap();
        let (x, y) = traj.last();
        assert_eq!(x, 1.0);
        assert!((y[0] - std::f64::consts::E).abs() < 1e-9);
    }

    #[test]
    fn ode_constant() {
        let traj = ode_solve(|_, _, dy| dy.fill(0.0), 0.0, 3.0, &[1.0, 2.0], &tol()).unwrap();
        for y in &traj.ys {
            assert_eq!(y, &vec![1.0, 2.0]);
        }
    }

    #[test]
    fn ode_backward_and_dense() {
        let outs = [1.0, 0.75, 0.5, 0.25, 0.0];
        let traj = ode_solve_with(
            |_, y, dy| dy[0] = -y[0],
            1.0,
            0.0,
            &[1.0],
            &OdeSettings::new(tol()),
            Some(&outs),
        )
        .unwrap();
        assert_eq!(traj.xs, outs.to_vec());
        for (x, y) in traj.xs.iter().zip(&traj.ys) {
            assert!((y[0] - (1.0 - x).exp()).abs() < 1e-9, "x={x}");
        }
    }

    #[test]
    fn ode_harmonic_dense_output() {
        let outs = linear_grid(0.0, 10.0, 41);
        let traj = ode_solve_with(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            10.0,
            &[0.0, 1.0],
            &OdeSettings::new(tol()),
            Some(&outs),
        )
        .unwrap();
        for (x, y) in traj.xs.iter().zip(&traj.ys) {
            assert!((y[0] - x.sin()).abs() < 1e-8);
        }
    }

    #[test]
    fn ode_wronskian_trace_free() {
        // y'' = -(1 + x) y written as a trace-free first-order system
        let run = |y0: [f64; 2]| {
            ode_solve_with(
                |x, y, dy| {
                    dy[0] = y[1];
                    dy[1] = -(1.0 + x) * y[0];
                },
                0.0,
                5.0,
                &y0,
                &OdeSettings::new(tol()),
                Some(&linear_grid(0.0, 5.0, 11)),
            )
            .unwrap()
        };
        let a = run([1.0, 0.0]);
        let b = run([0.0, 1.0]);
        for (ya, yb) in a.ys.iter().zip(&b.ys) {
            let w = ya[0] * yb[1] - ya[1] * yb[0];
            assert!((w - 1.0).abs() < 10.0 * 1e-10 * 100.0, "w = {w}");
        }
    }

    #[test]
    fn fit_exact_power() {
        let s: Vec<_> = [1e-6, 1e-4, 1e-2]
            .iter()
            .map(|&x: &f64| (x, x.powf(1.0 / 3.0)))
            .collect();
        let fit = fit_power_law(&s).unwrap();
        assert!((fit.slope - 1.0 / 3.0).abs() < 1e-12);
        let c: Vec<_> = [1.0, 2.0, 3.0].iter().map(|&x| (x, 5.0)).collect();
        assert!(fit_power_law(&c).unwrap().slope.abs() < 1e-14);
    }

    #[test]
    fn fit_degenerate() {
        let s = [(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)];
        assert!(fit_power_law(&s).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, -2.0), (3.0, 1.0)]).is_err());
    }

    #[test]
    fn log_sum_exp_large() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn root_stays_in_bracket(c in -0.99f64..0.99, lo in -5.0f64..-1.0, hi in 1.0f64..5.0) {
                let r = root_find_bracketed(|x| x - c, lo, hi, &ToleranceSpec::default()).unwrap();
                prop_assert!(r >= lo && r <= hi);
                prop_assert!((r - c).abs() < 1e-9);
            }

            #[test]
            fn quadrature_additive(c in 0.05f64..0.95, w in 0.5f64..5.0) {
                let tol = ToleranceSpec::default();
                let f = |x: f64| (w * x).sin() + x * x;
                let whole = integrate_adaptive(f, 0.0, 1.0, &tol).unwrap();
                let left = integrate_adaptive(f, 0.0, c, &tol).unwrap();
                let right = integrate_adaptive(f, c, 1.0, &tol).unwrap();
                let bound = 2.0 * tol.abs_tol.max(tol.rel_tol * whole.abs()) + 1e-15;
                prop_assert!((whole - left - right).abs() <= bound);
            }

            #[test]
            fn power_law_recovered(e in -3.0f64..3.0, c in 0.1f64..10.0) {
                let s: Vec<_> = [0.1, 0.5, 1.0, 7.0, 30.0].iter().map(|&x: &f64| (x, c * x.powf(e))).collect();
                let fit = fit_power_law(&s).unwrap();
                prop_assert!((fit.slope - e).abs() < 1e-12);
            }
        }
    }
}
