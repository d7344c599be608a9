//! One table builder per subcommand.

use rayon::prelude::*;
use rayon::ThreadPool;
use rwn_dirac::coordinates::CoordinateMap;
use rwn_dirac::numerics::fit_power_law;
use rwn_dirac::operator::{coefficients, coefficients_raw, RadialMode};
use rwn_dirac::spacetime::hyper_heavy;
use rwn_dirac::spectral::{
    bisect_threshold, candidate_eigenvalue, classify_infinity_endpoint, classify_zero_endpoint,
    deficiency_indices, eigen_scan_point, esa_threshold, m_function, variation_limits,
    weyl_residual_report, CandidateVerdict, EndpointReport, SpectralSettings,
};
use rwn_dirac::{Complex64, Error};
use serde_json::json;

use crate::config::{linear_points, log_points, RescaleSpec, RunConfig};
use crate::output::{Cell, Row, Table};
use crate::CliError;

/// Only numerical failures become failed rows; anything else is a
/// configuration the library refuses.
fn row_or_abort(prefix: Vec<Cell>, width: usize, r: Result<Vec<Cell>, Error>) -> Result<Row, CliError> {
    match r {
        Ok(mut cells) => {
            let mut all = prefix;
            all.append(&mut cells);
            Ok(Row::ok(all))
        }
        Err(Error::Numerics(e)) => Ok(Row::failed(prefix, width, e.to_string())),
        Err(e) => Err(CliError::Config(e.to_string())),
    }
}

fn config_err(e: Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Evaluate `f` on every grid point in the pool; rows come back in grid order.
fn sweep<T, F>(pool: &ThreadPool, grid: &[T], width: usize, prefix: fn(&T) -> Vec<Cell>, f: F) -> Result<Vec<Row>, CliError>
where
    T: Sync,
    F: Fn(&T) -> Result<Vec<Cell>, Error> + Sync,
{
    let results: Vec<Result<Row, CliError>> =
        pool.install(|| grid.par_iter().map(|p| row_or_abort(prefix(p), width, f(p))).collect());
    results.into_iter().collect()
}

fn mode(config: &RunConfig) -> Result<RadialMode, CliError> {
    let st = config.spacetime()?;
    RadialMode::new(st, config.k, config.fa, Some(config.theta)).map_err(config_err)
}

fn x_prefix(x: &f64) -> Vec<Cell> {
    vec![Cell::Num(*x)]
}

pub fn classify(config: &RunConfig) -> Result<Table, CliError> {
    let st = config.spacetime()?;
    let mut t = Table::new(vec![
        "Z", "A", "sector", "mu", "r_minus", "r_plus", "r0", "q", "kappa", "r_star", "rho", "hyper_heavy",
    ]);
    let heavy = hyper_heavy(st.nucleus(), st.constants());
    t.rows.push(Row::ok(vec![
        Cell::Int(config.z as i64),
        Cell::Num(config.mass_number),
        Cell::Text(st.sector().name().into()),
        Cell::Num(st.mu()),
        Cell::opt(st.r_minus()),
        Cell::opt(st.r_plus()),
        Cell::opt(st.r0()),
        Cell::opt(st.q()),
        Cell::opt(st.kappa()),
        Cell::opt(st.r_star()),
        Cell::opt(st.rho()),
        Cell::Bool(heavy),
    ]));
    t.summary.insert("sector".into(), json!(st.sector().name()));
    t.summary.insert("rho".into(), json!(st.rho()));
    t.summary.insert("hyper_heavy".into(), json!(heavy));
    Ok(t)
}

pub fn coords(config: &RunConfig, pool: &ThreadPool) -> Result<Table, CliError> {
    let map = CoordinateMap::new(config.spacetime()?, config.rescale.to_core()).map_err(config_err)?;
    let mut t = Table::new(vec!["x", "r", "log_gap", "f_squared"]);
    let grid = log_points(&config.grids.coords);
    t.rows = sweep(pool, &grid, t.columns.len(), x_prefix, |&x| {
        let p = map.point_of_x(x)?;
        Ok(vec![
            Cell::Num(map.r_of_x(x)?),
            Cell::Num(p.log_gap),
            Cell::Num(map.geometry().f_squared(p)),
        ])
    })?;
    t.summary.insert("length_unit".into(), json!(map.length_unit()));
    Ok(t)
}

pub fn coeffs(config: &RunConfig, pool: &ThreadPool) -> Result<Table, CliError> {
    let mode = mode(config)?;
    let mut t = Table::new(vec!["x", "a", "b", "c", "d"]);
    let grid = log_points(&config.grids.coeffs);
    let raw = config.rescale == RescaleSpec::None;
    t.rows = sweep(pool, &grid, t.columns.len(), x_prefix, |&x| {
        let s = if raw { coefficients_raw(&mode, x)? } else { coefficients(&mode, x)? };
        Ok(vec![Cell::Num(s.a), Cell::Num(s.b), Cell::Num(s.c), Cell::Num(s.d)])
    })?;
    Ok(t)
}

fn endpoint_cells(r: &EndpointReport) -> Vec<Cell> {
    let verdicts: Vec<String> = r.l2_verdicts.iter().map(|v| v.to_string()).collect();
    vec![
        Cell::Text(r.classification.name().into()),
        Cell::opt(r.exponent_p),
        Cell::Int(r.l2_verdicts.iter().filter(|&&v| v).count() as i64),
        Cell::Text(verdicts.join(";")),
        Cell::Empty,
        Cell::Empty,
    ]
}

pub fn endpoints(config: &RunConfig, settings: &SpectralSettings) -> Result<Table, CliError> {
    let mode = mode(config)?;
    let mut t = Table::new(vec![
        "endpoint", "classification", "exponent_p", "l2_solutions", "l2_verdicts", "n_plus", "n_minus",
    ]);
    let w = t.columns.len();
    let name = |s: &str| vec![Cell::Text(s.into())];
    t.rows.push(row_or_abort(name("zero"), w, classify_zero_endpoint(&mode).map(|r| endpoint_cells(&r)))?);
    t.rows.push(row_or_abort(
        name("infinity"),
        w,
        classify_infinity_endpoint(&mode, settings).map(|r| endpoint_cells(&r)),
    )?);
    let def = deficiency_indices(&mode, settings);
    if let Ok(d) = &def {
        t.summary.insert("deficiency_indices".into(), json!([d.n_plus, d.n_minus]));
        t.summary.insert("self_adjoint".into(), json!(d.n_plus == 0 && d.n_minus == 0));
    }
    t.rows.push(row_or_abort(
        name("deficiency"),
        w,
        def.map(|d| {
            let mut cells = vec![Cell::Empty; 4];
            cells.push(Cell::Int(d.n_plus as i64));
            cells.push(Cell::Int(d.n_minus as i64));
            cells
        }),
    )?);
    Ok(t)
}

pub fn threshold(config: &RunConfig) -> Result<Table, CliError> {
    let mode = mode(config)?;
    let report = esa_threshold(mode.spacetime()).map_err(config_err)?;
    let mut t = Table::new(vec!["fa_crit", "slope", "fa_crit_bisected", "relative_difference", "fa", "p_at_fa"]);
    let tol = config.tolerances.threshold.into();
    let bisected = bisect_threshold(&mode, config.grids.threshold_fa_hi, &tol);
    let prefix = vec![Cell::Num(report.fa_crit), Cell::Num(report.slope)];
    let fa = config.fa;
    t.rows.push(row_or_abort(
        prefix,
        t.columns.len(),
        bisected.map(|b| {
            vec![
                Cell::Num(b),
                Cell::Num((b - report.fa_crit).abs() / report.fa_crit),
                Cell::Num(fa),
                Cell::Num(report.p_of_fa(fa)),
            ]
        }),
    )?);
    t.summary.insert("fa_crit".into(), json!(report.fa_crit));
    t.summary.insert("slope".into(), json!(report.slope));
    Ok(t)
}

pub fn eigenscan(config: &RunConfig, settings: &SpectralSettings, pool: &ThreadPool) -> Result<Table, CliError> {
    let mode = mode(config)?;
    let mut t = Table::new(vec!["lambda", "ratio_1", "ratio_2", "ratio_3", "mismatch", "l2_tail"]);
    let grid = linear_points(&config.grids.eigenscan);
    t.rows = sweep(pool, &grid, t.columns.len(), x_prefix, |&lambda| {
        let p = eigen_scan_point(&mode, lambda, settings)?;
        let mut cells: Vec<Cell> = p.window_ratios.iter().map(|&r| Cell::Num(r)).collect();
        cells.resize(3, Cell::Empty);
        cells.push(Cell::Num(p.mismatch));
        cells.push(Cell::Bool(p.l2_tail));
        Ok(cells)
    })?;
    let roots: Vec<f64> = t
        .rows
        .iter()
        .filter(|r| r.cells.last() == Some(&Cell::Bool(true)))
        .filter_map(|r| match r.cells[0] {
            Cell::Num(l) => Some(l),
            _ => None,
        })
        .collect();
    t.summary.insert("roots_found".into(), json!(roots.len()));
    t.summary.insert("roots".into(), json!(roots));
    Ok(t)
}

pub fn weyldemo(config: &RunConfig, settings: &SpectralSettings, pool: &ThreadPool) -> Result<Table, CliError> {
    let mode = mode(config)?;
    let lambda = config.grids.weyl_lambda;
    let mut t = Table::new(vec!["n", "residual", "quadrature", "norm", "support_start"]);
    let grid = config.grids.weyl_n.clone();
    t.rows = sweep(pool, &grid, t.columns.len(), |&n| vec![Cell::Int(n as i64)], |&n| {
        let r = weyl_residual_report(&mode, lambda, n, settings)?;
        Ok(vec![
            Cell::Num(r.analytic),
            Cell::Num(r.quadrature),
            Cell::Num(r.norm),
            Cell::Num(r.support_start),
        ])
    })?;
    let pts: Vec<(f64, f64)> = t
        .rows
        .iter()
        .filter_map(|r| match (&r.cells[0], &r.cells[1]) {
            (Cell::Int(n), Cell::Num(res)) => Some((*n as f64, *res)),
            _ => None,
        })
        .collect();
    let slope = fit_power_law(&pts).ok().map(|f| f.slope);
    t.summary.insert("lambda".into(), json!(lambda));
    t.summary.insert("slope".into(), json!(slope));
    Ok(t)
}

pub fn mfunc(config: &RunConfig, settings: &SpectralSettings, pool: &ThreadPool) -> Result<Table, CliError> {
    let mode = mode(config)?;
    let line = config.grids.mfunc;
    let re = linear_points(&crate::config::Range {
        min: line.re_min,
        max: line.re_max,
        points: line.points,
    });
    let grid: Vec<Complex64> = re.iter().map(|&x| Complex64::new(x, line.im)).collect();
    let mut t = Table::new(vec!["re_z", "im_z", "re_m", "im_m"]);
    t.rows = sweep(
        pool,
        &grid,
        t.columns.len(),
        |z| vec![Cell::Num(z.re), Cell::Num(z.im)],
        |&z| {
            let m = m_function(&mode, z, settings)?;
            Ok(vec![Cell::Num(m.re), Cell::Num(m.im)])
        },
    )?;
    Ok(t)
}

pub fn candidate(config: &RunConfig, settings: &SpectralSettings) -> Result<Table, CliError> {
    let mode = mode(config)?;
    let raw = candidate_eigenvalue(mode.spacetime(), rwn_dirac::coordinates::Rescale::None).map_err(config_err)?;
    let mut t = Table::new(vec![
        "lambda_star",
        "lambda_star_compton",
        "anchor",
        "u_abs",
        "v_abs",
        "conservation_drift",
        "plateau_change",
        "verdict",
    ]);
    let ev = variation_limits(&mode, settings);
    if let Ok(e) = &ev {
        t.summary.insert("window_ratios".into(), json!(e.window_ratios));
    }
    let cells = ev.map(|e| {
        let verdict = match e.verdict {
            CandidateVerdict::NoEigenvalueEvidence => "no_eigenvalue_evidence",
            CandidateVerdict::Inconclusive => "inconclusive",
        };
        t.summary.insert("verdict".into(), json!(verdict));
        vec![
            Cell::Num(e.lambda_star),
            Cell::Num(raw),
            Cell::Num(e.anchor),
            Cell::opt(e.uv_limits.map(|p| p.0)),
            Cell::opt(e.uv_limits.map(|p| p.1)),
            Cell::opt(e.conservation_drift),
            Cell::opt(e.plateau_change),
            Cell::Text(verdict.into()),
        ]
    });
    let w = t.columns.len();
    t.rows.push(row_or_abort(Vec::new(), w, cells)?);
    Ok(t)
}
