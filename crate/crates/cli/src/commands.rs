use fourns::bitree::{enumerate_chronicles, RegionRule};
use fourns::dynamics::{convergence_experiment, flow_truncated, summarize, FlowConfig};
use fourns::measure::{
    cauchy_differences, change_of_variable_check, weight_convergence_sweep, Ball, GaussianSampler, McEstimate,
};
use fourns::normal_form::{energy_drift, telescoping_residual, EnergyFunctional};
use serde_json::{json, Value};

use crate::config::{dyadic_cutoffs, Command, RunConfig};
use crate::error::CliError;
use crate::output::{num, RunDir};

/// Radius of the `H^σ` ball used as the test set of `qi-check`.
pub const QI_RADIUS: f64 = 2.0;

pub fn run(cfg: &RunConfig, dir: &mut RunDir) -> Result<String, CliError> {
    match cfg.command {
        Command::Simulate => simulate(cfg, dir),
        Command::EnergyDrift => drift(cfg, dir),
        Command::BitreeAudit => audit(cfg, dir),
        Command::Telescope => telescope(cfg, dir),
        Command::QiCheck => qi_check(cfg, dir),
        Command::Convergence => convergence(cfg, dir),
        Command::WeightSweep => weight_sweep(cfg, dir),
    }
}

fn rule(cfg: &RunConfig) -> RegionRule {
    RegionRule::new(cfg.c_impl)
}

fn sampler(cfg: &RunConfig, m: usize) -> GaussianSampler {
    GaussianSampler::new(cfg.s, m, cfg.seed)
}

fn simulate(cfg: &RunConfig, dir: &mut RunDir) -> Result<String, CliError> {
    let u0 = sampler(cfg, cfg.m).sample_at(0);
    let mut flow = FlowConfig::new(cfg.n, cfg.m, cfg.t_final).with_dt(cfg.dt);
    flow = flow.clone().with_record_every((flow.steps() / 200).max(1));
    let traj = flow_truncated(&u0, &flow)?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)?;
    dir.write("trajectory.csv", &csv)?;
    let summary = summarize(&traj, &flow, cfg.sobolev().sigma)?;
    dir.write_json("summary.json", &serde_json::to_value(&summary)?)?;
    Ok(format!(
        "mass drift {:e}, hamiltonian drift {:e}",
        summary.mass_drift, summary.hamiltonian_drift
    ))
}

fn drift(cfg: &RunConfig, dir: &mut RunDir) -> Result<String, CliError> {
    let u0 = sampler(cfg, cfg.m).sample_at(0);
    let flow = FlowConfig::new(cfg.n, cfg.m, cfg.t_final).with_dt(cfg.dt);
    let steps: Vec<usize> = (0..=cfg.j).collect();
    let rows = energy_drift(&u0, &flow, &steps, cfg.s, rule(cfg))?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.steps.to_string(),
                num(r.sup_analytic),
                num(r.sup_finite_difference),
                num(r.max_discrepancy),
            ]
        })
        .collect();
    dir.write_csv("drift.csv", &["J", "sup_analytic", "sup_finite_difference", "max_discrepancy"], &table)?;
    dir.write_json("drift.json", &json!({ "rows": rows, "seed": cfg.seed }))?;
    let last = rows.last().expect("at least J = 0");
    Ok(format!("sup |dE/dt|: J=0 {:e}, J={} {:e}", rows[0].sup_analytic, last.steps, last.sup_analytic))
}

fn audit(cfg: &RunConfig, dir: &mut RunDir) -> Result<String, CliError> {
    let trees = enumerate_chronicles(cfg.j)?;
    let expected: usize = (2..=cfg.j).map(|k| 2 * k).product();
    for t in &trees {
        t.validate()?;
    }
    let chronicles: Vec<Value> = trees.iter().map(|t| t.audit_json()).collect();
    dir.write_json(
        "audit.json",
        &json!({ "J": cfg.j, "count": trees.len(), "expected": expected, "chronicles": chronicles }),
    )?;
    Ok(format!("J = {}: {} chronicles (expected {expected})", cfg.j, trees.len()))
}

fn telescope(cfg: &RunConfig, dir: &mut RunDir) -> Result<String, CliError> {
    let v = sampler(cfg, cfg.n).sample_at(0);
    let rep = telescoping_residual(&v, cfg.t_final, cfg.j, cfg.s, cfg.n, rule(cfg))?;
    dir.write_json(
        "residual.json",
        &json!({
            "J": cfg.j, "N": cfg.n, "s": cfg.s, "t": cfg.t_final, "seed": cfg.seed,
            "lhs": rep.lhs, "rhs": rep.rhs, "residual": rep.residual,
        }),
    )?;
    Ok(format!("telescoping residual {:e}", rep.residual))
}

fn record(name: &str, params: &Value, e: &McEstimate, seed: u64) -> Value {
    json!({
        "name": name,
        "params": params,
        "mean": e.mean,
        "std_err": if e.std_err.is_finite() { json!(e.std_err) } else { Value::Null },
        "n_samples": e.n_samples,
        "hits": e.hits,
        "seed": seed,
    })
}

fn qi_check(cfg: &RunConfig, dir: &mut RunDir) -> Result<String, CliError> {
    let index = cfg.sobolev();
    let region = Ball::centered(QI_RADIUS, index.sigma);
    let weight = EnergyFunctional::new(cfg.j, cfg.s, cfg.n, rule(cfg))?;
    let sampler = sampler(cfg, cfg.m);
    let mut records = Vec::new();
    let mut checks = Vec::new();
    for t in [0.0, cfg.t_final] {
        let cov = change_of_variable_check(&region, &sampler, t, &weight, cfg.dt, cfg.samples)?;
        let params = json!({
            "t": t, "N": cfg.n, "M": cfg.m, "J": cfg.j, "s": cfg.s, "sigma": index.sigma,
            "radius": QI_RADIUS, "c_impl": cfg.c_impl, "dt": cfg.dt,
        });
        records.push(record("lhs", &params, &cov.lhs, cfg.seed));
        records.push(record("rhs", &params, &cov.rhs, cfg.seed));
        checks.push(json!({ "t": t, "z_score": cov.z_score, "overlap": cov.overlap }));
    }
    let pass = checks.iter().all(|c| c["overlap"] == json!(true));
    dir.write_json("qi.json", &json!({ "records": records, "checks": checks, "pass": pass }))?;
    Ok(format!("change of variable {}", if pass { "PASS" } else { "FAIL" }))
}

fn convergence(cfg: &RunConfig, dir: &mut RunDir) -> Result<String, CliError> {
    let list = dyadic_cutoffs(cfg.n);
    let n_ref = 2 * cfg.n;
    let u0 = sampler(cfg, cfg.m.max(n_ref)).sample_at(0);
    let sigma = cfg.sobolev().sigma;
    let rows = convergence_experiment(&u0, cfg.t_final, &list, sigma, cfg.dt)?;
    let table: Vec<Vec<String>> = rows.iter().map(|r| vec![r.n.to_string(), num(r.distance)]).collect();
    dir.write_csv("convergence.csv", &["N", "distance"], &table)?;
    dir.write_json(
        "convergence.json",
        &json!({ "rows": rows, "N_ref": n_ref, "sigma": sigma, "t": cfg.t_final, "seed": cfg.seed }),
    )?;
    let last = rows.last().expect("non-empty cutoff list");
    Ok(format!("H^sigma distance at N = {}: {:e}", last.n, last.distance))
}

fn weight_sweep(cfg: &RunConfig, dir: &mut RunDir) -> Result<String, CliError> {
    let list = dyadic_cutoffs(cfg.n);
    let u = sampler(cfg, cfg.m.max(cfg.n)).sample_at(0);
    let rows = weight_convergence_sweep(&u, cfg.j, cfg.s, &list, rule(cfg))?;
    let diffs = cauchy_differences(&rows);
    let table: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let diff = if k == 0 { String::new() } else { num(diffs[k - 1]) };
            vec![r.n.to_string(), num(r.log_f), num(r.f), diff]
        })
        .collect();
    dir.write_csv("weights.csv", &["N", "log_F", "F", "diff_prev"], &table)?;
    dir.write_json("weights.json", &json!({ "rows": rows, "cauchy_differences": diffs, "J": cfg.j, "seed": cfg.seed }))?;
    Ok(format!("tail difference {:e}", diffs.last().copied().unwrap_or(0.0)))
}
