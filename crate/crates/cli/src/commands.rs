//! One function per command. Each returns JSON records and the matching table.

use std::time::Instant;

use qtm_core::bethe_check::certify;
use qtm_core::contours::{build_ref_contour, trace_fermi_curve};
use qtm_core::excitations::{solve_quantisation, ExcitationSpec, RootSet};
use qtm_core::integral_equations::{dressed_suite, fredholm_det_segment_order, DressedSuite};
use qtm_core::nlie::{NlieOptions, NlieSolution};
use qtm_core::observables::{cft_spectrum_check, momentum_p, spectral_report, Partition};
use qtm_core::{ModelParams, Trotter, C64};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::config::{Command, RunConfig};
use crate::output::{fmt_f64, CommandOutput, Table};
use crate::{CliError, Log};

pub const THREADS_ENV: &str = "QTM_NLIE_THREADS";

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serialisable record")
}

fn records_output(records: Vec<Value>) -> CommandOutput {
    let table = Table::from_records(&records);
    CommandOutput { records, table }
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

fn suite_for(cfg: &RunConfig, p: &ModelParams) -> Result<DressedSuite, CliError> {
    Ok(dressed_suite(&p.with_trotter(Trotter::Infinite), cfg.numerics.quad_order)?)
}

fn trotter_label(p: &ModelParams) -> Option<u32> {
    match p.trotter {
        Trotter::Finite(n) => Some(n),
        Trotter::Infinite => None,
    }
}

fn solve_logged(
    p: &ModelParams,
    spec: &ExcitationSpec,
    suite: &DressedSuite,
    opts: &NlieOptions,
    log: &Log,
) -> Result<(NlieSolution, RootSet), CliError> {
    let start = Instant::now();
    let res = solve_quantisation(p, spec, suite, opts);
    let label = spec.label();
    match &res {
        Ok((sol, rs)) => {
            for it in &sol.log {
                log.line(format!(
                    "[{label} T={} N={:?}] iter {} residual {:e} damped {} sources {}",
                    p.t, p.trotter, it.iter, it.residual, it.damped, it.n_sources
                ));
            }
            log.line(format!(
                "[{label} T={} N={:?}] solved in {:.3}s, rho {:.3e}, jacobian cond {:.3e}, max root residual {:.3e}",
                p.t,
                p.trotter,
                start.elapsed().as_secs_f64(),
                sol.rho,
                rs.jacobian_cond,
                rs.max_residual()
            ));
        }
        Err(e) => log.line(format!("[{label} T={} N={:?}] failed: {e}", p.t, p.trotter)),
    }
    Ok(res?)
}

pub fn dispatch(command: Command, cfg: &RunConfig, log: &Log) -> Result<CommandOutput, CliError> {
    match command {
        Command::Dressed => dressed(cfg),
        Command::Contour => contour(cfg, log),
        Command::SolveNlie => solve_nlie(cfg, log),
        Command::Excite => excite(cfg, log),
        Command::Spectrum => spectrum(cfg, log),
        Command::CftCheck => cft_check(cfg, log),
        Command::BetheCheck => bethe_check(cfg, log),
        Command::Sweep => sweep(cfg, log),
    }
}

#[derive(Serialize)]
struct DressedRecord {
    j: f64,
    zeta: f64,
    h: f64,
    q: f64,
    #[serde(rename = "vF")]
    v_f: f64,
    tau: f64,
    det_segment: f64,
    eps_prime_q: f64,
    eps_prime_q_fd: f64,
    z_q: f64,
    cond: f64,
}

fn dressed(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let p = cfg.params()?;
    let suite = suite_for(cfg, &p)?;
    let s = suite.summary();
    let rec = DressedRecord {
        j: p.j,
        zeta: p.zeta,
        h: p.h,
        q: s.q,
        v_f: s.v_f,
        tau: s.tau,
        det_segment: fredholm_det_segment_order(&p, s.q, cfg.numerics.quad_order)?,
        eps_prime_q: s.eps_prime_q,
        eps_prime_q_fd: suite.eps_dq_fd,
        z_q: s.z_q,
        cond: s.cond,
    };
    Ok(records_output(vec![to_value(&rec)]))
}

#[derive(Serialize)]
struct CurveRecord {
    curve_id: String,
    points: Vec<[f64; 2]>,
}

fn contour(cfg: &RunConfig, log: &Log) -> Result<CommandOutput, CliError> {
    let p = cfg.params()?;
    let suite = suite_for(cfg, &p)?;
    let mut curves: Vec<(String, Vec<C64>)> = Vec::new();
    let fermi = trace_fermi_curve(&suite, cfg.numerics.fermi_density)?;
    curves.push(("fermi_R".into(), fermi.right.points.clone()));
    curves.push(("fermi_L".into(), fermi.left.points.clone()));
    curves.push(("reference".into(), build_ref_contour(&suite, &p)?.polyline()));
    let opts = cfg.options();
    for spec in cfg.specs() {
        let (sol, _) = solve_logged(&p, &spec, &suite, &opts, log)?;
        curves.push((format!("nlie:{}", spec.label()), sol.contour.closed_polyline()));
    }
    let mut table = Table::new(&["curve_id", "idx", "re", "im"]);
    let mut records = Vec::new();
    for (id, pts) in curves {
        for (k, z) in pts.iter().enumerate() {
            table.push(vec![id.clone(), k.to_string(), fmt_f64(z.re), fmt_f64(z.im)]);
        }
        records.push(to_value(&CurveRecord { curve_id: id, points: pts.into_iter().map(pair).collect() }));
    }
    Ok(CommandOutput { records, table })
}

#[derive(Serialize)]
struct SolveRecord {
    label: String,
    t: f64,
    trotter_n: Option<u32>,
    spin: i64,
    monodromy: i64,
    iterations: usize,
    residual: f64,
    rho: f64,
    jacobian_cond: f64,
    index: [f64; 2],
    q_plus: [f64; 2],
    q_minus: [f64; 2],
    fermi_residual: f64,
    n_nodes: usize,
    roots: Vec<[f64; 2]>,
}

fn solve_record(spec: &ExcitationSpec, sol: &NlieSolution) -> SolveRecord {
    SolveRecord {
        label: spec.label(),
        t: sol.t(),
        trotter_n: trotter_label(&sol.params),
        spin: sol.spin(),
        monodromy: sol.monodromy(),
        iterations: sol.log.len(),
        residual: sol.residual(),
        rho: sol.rho,
        jacobian_cond: sol.jacobian_cond,
        index: pair(sol.index),
        q_plus: pair(sol.contour.q_plus),
        q_minus: pair(sol.contour.q_minus),
        fermi_residual: sol.fermi_residual(),
        n_nodes: sol.contour.nodes.len(),
        roots: sol.roots.iter().map(|&r| pair(r)).collect(),
    }
}

fn solve_nlie(cfg: &RunConfig, log: &Log) -> Result<CommandOutput, CliError> {
    let p = cfg.params()?;
    let suite = suite_for(cfg, &p)?;
    let opts = cfg.options();
    let mut records = Vec::new();
    for spec in cfg.specs() {
        let (sol, _) = solve_logged(&p, &spec, &suite, &opts, log)?;
        records.push(to_value(&solve_record(&spec, &sol)));
    }
    Ok(records_output(records))
}

fn excite(cfg: &RunConfig, log: &Log) -> Result<CommandOutput, CliError> {
    let p = cfg.params()?;
    let suite = suite_for(cfg, &p)?;
    let opts = cfg.options();
    let mut out = CommandOutput {
        records: Vec::new(),
        table: Table::new(&[
            "label", "t", "root_id", "side", "kind", "n", "re", "im", "order0_re", "order0_im", "order1_re",
            "order1_im", "order2_re", "order2_im", "residual", "far",
        ]),
    };
    for spec in cfg.specs() {
        let (_, rs) = solve_logged(&p, &spec, &suite, &opts, log)?;
        let label = spec.label();
        for e in &rs.entries {
            out.table.push(vec![
                label.clone(),
                fmt_f64(p.t),
                e.id.to_string(),
                format!("{:?}", e.side),
                format!("{:?}", e.kind),
                e.n.to_string(),
                fmt_f64(e.root.re),
                fmt_f64(e.root.im),
                fmt_f64(e.order0.re),
                fmt_f64(e.order0.im),
                fmt_f64(e.order1.re),
                fmt_f64(e.order1.im),
                fmt_f64(e.order2.re),
                fmt_f64(e.order2.im),
                fmt_f64(e.residual),
                e.far.to_string(),
            ]);
        }
        let mut v = to_value(&rs);
        if let Value::Object(m) = &mut v {
            m.insert("label".into(), Value::String(label));
            m.insert("t".into(), to_value(&p.t));
        }
        out.records.push(v);
    }
    Ok(out)
}

fn spectrum(cfg: &RunConfig, log: &Log) -> Result<CommandOutput, CliError> {
    let p = cfg.params()?;
    let suite = suite_for(cfg, &p)?;
    let opts = cfg.options();
    let (e_sol, _) = solve_logged(&p, &ExcitationSpec::empty(), &suite, &opts, log)?;
    let p_empty = momentum_p(&e_sol, &Partition::new(&e_sol, None))?.direct;
    let mut records = Vec::new();
    for spec in cfg.specs() {
        let (sol, rs) = solve_logged(&p, &spec, &suite, &opts, log)?;
        records.push(to_value(&spectral_report(&sol, Some(&rs), p_empty)?));
    }
    Ok(records_output(records))
}

fn cft_check(cfg: &RunConfig, log: &Log) -> Result<CommandOutput, CliError> {
    let p = cfg.params()?;
    let suite = suite_for(cfg, &p)?;
    let ts = if cfg.sweep.temperatures.is_empty() { vec![p.t] } else { cfg.sweep.temperatures.clone() };
    let start = Instant::now();
    let rows = cft_spectrum_check(&cfg.specs(), &p, &ts, &suite, &cfg.options())?;
    log.line(format!("cft-check: {} rows in {:.3}s", rows.len(), start.elapsed().as_secs_f64()));
    Ok(records_output(rows.iter().map(to_value).collect()))
}

fn bethe_check(cfg: &RunConfig, log: &Log) -> Result<CommandOutput, CliError> {
    let p = cfg.params()?;
    if p.trotter == Trotter::Infinite {
        return Err(CliError::Validation("bethe-check needs model.trotter_n".into()));
    }
    let suite = suite_for(cfg, &p)?;
    let opts = cfg.options();
    let mut out = CommandOutput {
        records: Vec::new(),
        table: Table::new(&["label", "t", "n", "index", "re", "im", "from_march", "residual", "admissible"]),
    };
    for spec in cfg.specs() {
        let (sol, _) = solve_logged(&p, &spec, &suite, &opts, log)?;
        let (rs, cert) = certify(&sol, C64::new(cfg.numerics.xi, 0.0))?;
        let label = spec.label();
        log.line(format!(
            "[{label}] bethe residual {:.3e}, eigenvalue rel diff {:.3e}, factorisation {:.3e}, {} Fredholm nodes",
            cert.max_bae_residual, cert.eigenvalue_rel_diff, cert.gaudin.factorisation_residual, cert.gaudin.n_nodes
        ));
        for (k, r) in rs.roots.iter().enumerate() {
            out.table.push(vec![
                label.clone(),
                fmt_f64(p.t),
                rs.n.to_string(),
                k.to_string(),
                fmt_f64(r.root.re),
                fmt_f64(r.root.im),
                r.from_march.to_string(),
                fmt_f64(r.residual),
                r.admissible.to_string(),
            ]);
        }
        let mut v = to_value(&cert);
        if let Value::Object(m) = &mut v {
            m.insert("label".into(), Value::String(label));
            m.insert("roots".into(), to_value(&rs.lambdas().into_iter().map(pair).collect::<Vec<_>>()));
        }
        out.records.push(v);
    }
    Ok(out)
}

/// Worker count from QTM_NLIE_THREADS, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

fn sweep(cfg: &RunConfig, log: &Log) -> Result<CommandOutput, CliError> {
    let inner = cfg.sweep.command.unwrap_or(Command::SolveNlie);
    let ts = if cfg.sweep.temperatures.is_empty() { vec![cfg.model.t] } else { cfg.sweep.temperatures.clone() };
    let ns: Vec<Option<i64>> = if cfg.sweep.trotter_ns.is_empty() {
        vec![cfg.model.trotter_n]
    } else {
        cfg.sweep.trotter_ns.iter().map(|&n| Some(n)).collect()
    };
    let mut points = Vec::new();
    for &t in &ts {
        for &n in &ns {
            let mut c = cfg.clone();
            c.command = Some(inner);
            c.model.t = t;
            c.model.trotter_n = n;
            // A cft-check point covers only its own temperature.
            c.sweep.temperatures.clear();
            points.push(c);
        }
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Solver(format!("thread pool: {e}")))?;
    log.line(format!("sweep: {} points, {} threads, inner command {:?}", points.len(), pool.current_num_threads(), inner));
    let results: Vec<Result<CommandOutput, CliError>> =
        pool.install(|| points.par_iter().map(|c| dispatch(inner, c, log)).collect());
    let mut out = CommandOutput::default();
    for r in results {
        out.append(r?);
    }
    Ok(out)
}
