use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::json;
use tasd::approxmm::{error_sweep, write_error_csv, ErrorSweep};
use tasd::decomp::{
    decompose as decompose_matrix, drop_metrics, sweep_synthetic, write_sweep_csv, SyntheticSweep,
};
use tasd::hwmodel::{workload_cost, write_cost_csv, HwSpec};
use tasd::matrix::{load_matrix, save_matrix, INVALID_INDEX};
use tasd::search::{
    effective_sparsity, layer_wise_greedy, network_wise_search, select_activation_configs,
    ActStatistic, ActivationSelectParams, Assignment, GreedyParams, StepOutcome, StopPolicy,
};
use tasd::synth::{random_sparse, ValueDist};
use tasd::workload::{
    load_workload, ExternalCommandOracle, OutputErrorOracle, QualityOracle,
    RetainedMagnitudeOracle, Workload,
};
use tasd::{Execution, TasdConfig};

use crate::{
    AnalyzeArgs, BuiltinOracle, DecomposeArgs, GenArgs, PatternsArgs, SearchArgs, SearchMode,
    SimulateArgs, Statistic, SweepKind, UsageError,
};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Opens `path` for writing, or stdout.
fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn parse_config(s: &str) -> Result<TasdConfig> {
    s.parse()
        .map_err(|e| usage(format!("bad config {s:?}: {e}")))
}

fn load_hw(arg: &str) -> Result<HwSpec> {
    match arg {
        "vegeta-m8" => Ok(HwSpec::vegeta_m8()),
        "stc-m4" => Ok(HwSpec::stc_m4()),
        path => Ok(HwSpec::load(path)?),
    }
}

pub fn gen(a: GenArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.density) {
        return Err(usage(format!("--density {} outside [0, 1]", a.density)));
    }
    let dist: ValueDist = a.dist.parse().map_err(|e| usage(format!("{e}")))?;
    let m = random_sparse(a.rows, a.cols, a.density, dist, a.seed)?;
    save_matrix(&m, &a.out)?;
    tracing::info!(rows = a.rows, cols = a.cols, nnz = m.nnz(), out = %a.out.display(), "generated");
    Ok(())
}

pub fn decompose(a: DecomposeArgs) -> Result<()> {
    let config = parse_config(&a.config)?;
    let mat = load_matrix(&a.input)?;
    let d = decompose_matrix(&mat, &config);
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut terms = Vec::new();
    for (i, term) in d.terms().iter().enumerate() {
        let file = format!("term_{i}.tasd");
        save_matrix(&term.decode()?, a.out_dir.join(&file))?;
        let sidecar = format!("term_{i}.idx.json");
        write_json(
            &a.out_dir.join(&sidecar),
            &json!({
                "pattern": term.pattern().to_string(),
                "rows": term.rows(),
                "cols": term.cols(),
                "blocks_per_row": term.blocks_per_row(),
                "invalid_index": INVALID_INDEX,
                "indices": term.indices(),
            }),
        )?;
        terms
            .push(json!({"pattern": term.pattern().to_string(), "matrix": file, "index": sidecar}));
    }
    save_matrix(d.residual(), a.out_dir.join("residual.tasd"))?;
    let m = drop_metrics(&d);
    let metrics_path = a.metrics.unwrap_or_else(|| a.out_dir.join("metrics.json"));
    write_json(
        &metrics_path,
        &json!({
            "config": config.canonical(),
            "rows": mat.rows(),
            "cols": mat.cols(),
            "terms": terms,
            "residual": "residual.tasd",
            "dropped_nnz_fraction": m.dropped_nnz_fraction,
            "dropped_magnitude_fraction": m.dropped_magnitude_fraction,
            "retained_magnitude_fraction": m.retained_magnitude_fraction,
            "mse": m.mse,
        }),
    )?;
    Ok(())
}

pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    if a.seeds == 0 {
        return Err(usage("--seeds must be positive"));
    }
    let exec = Execution::default();
    let mut out = output(a.out.as_deref())?;
    match a.sweep {
        SweepKind::DroppedNonzeros => {
            let grid = SyntheticSweep::dropped_nonzeros_grid(a.seeds, a.seed);
            let rows = sweep_synthetic(&grid, exec)?;
            write_sweep_csv(&rows, &mut out)?;
        }
        SweepKind::MatmulError => {
            let grid = ErrorSweep::matmul_error_grid(a.seeds, a.seed);
            let rows = error_sweep(&grid, exec)?;
            write_error_csv(&rows, &mut out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn make_oracle(a: &SearchArgs) -> Result<Box<dyn QualityOracle>> {
    if let Some(cmd) = &a.oracle {
        let argv =
            shlex::split(cmd).ok_or_else(|| usage(format!("cannot split --oracle {cmd:?}")))?;
        if argv.is_empty() {
            return Err(usage("--oracle is empty"));
        }
        return Ok(Box::new(ExternalCommandOracle::new(argv)?));
    }
    Ok(match a.builtin_oracle {
        BuiltinOracle::RetainedMagnitude => Box::new(RetainedMagnitudeOracle::new()),
        BuiltinOracle::OutputError => Box::new(OutputErrorOracle::new()),
    })
}

fn uniform(workload: &Workload, config: &TasdConfig) -> Assignment {
    let mut out = Assignment::default();
    if !config.is_dense() {
        for l in &workload.layers {
            out.set(&l.layer_id, config.clone());
        }
    }
    out
}

pub fn search(a: SearchArgs) -> Result<()> {
    if !(a.threshold.is_finite() && a.threshold > 0.0) {
        return Err(usage("--threshold must be positive"));
    }
    if !(0.0..=1.0).contains(&a.alpha) || !(a.rho > 0.0 && a.rho <= 1.0) {
        return Err(usage("--alpha must be in [0, 1] and --rho in (0, 1]"));
    }
    let workload = load_workload(&a.workload)?;
    let hw = load_hw(&a.hw)?;
    let menu = hw.menu()?;
    let (assignment, log) = match a.mode {
        SearchMode::Network => {
            let mut oracle = make_oracle(&a)?;
            let cost_hw = (!a.mac_cost).then_some(&hw);
            let choice =
                network_wise_search(&workload, &menu, oracle.as_mut(), a.threshold, cost_hw)?;
            let candidates: Vec<_> = choice
                .candidates
                .iter()
                .map(|c| {
                    json!({"config": c.config.canonical(), "quality": c.quality,
                           "cost": c.cost, "qualifies": c.qualifies})
                })
                .collect();
            let log = json!({
                "mode": "network",
                "threshold": a.threshold,
                "cost": if a.mac_cost { "macs" } else { "cycles" },
                "candidates": candidates,
                "chosen": {"config": choice.config.canonical(), "quality": choice.quality, "cost": choice.cost},
            });
            (uniform(&workload, &choice.config), log)
        }
        SearchMode::Greedy => {
            let mut oracle = make_oracle(&a)?;
            let params = GreedyParams {
                threshold: a.threshold,
                policy: if a.skip_and_continue {
                    StopPolicy::SkipAndContinue
                } else {
                    StopPolicy::RevertAndStop
                },
            };
            let out = layer_wise_greedy(
                &workload,
                &menu,
                oracle.as_mut(),
                params,
                Execution::default(),
            )?;
            let steps: Vec<_> = out
                .steps
                .iter()
                .map(|s| {
                    json!({
                        "layer": s.layer_id,
                        "config": s.config.canonical(),
                        "drop": s.drop,
                        "quality": s.quality,
                        "outcome": match s.outcome {
                            StepOutcome::Applied => "applied",
                            StepOutcome::Reverted => "reverted",
                            StepOutcome::SkippedDowngrade => "skipped",
                        },
                    })
                })
                .collect();
            let log = json!({
                "mode": "greedy",
                "threshold": a.threshold,
                "pairs_evaluated": out.steps.iter().filter(|s| s.quality.is_some()).count(),
                "steps": steps,
                "quality": out.quality,
            });
            (out.assignment, log)
        }
        SearchMode::Activation => {
            let params = ActivationSelectParams {
                alpha: a.alpha,
                rho: a.rho,
                statistic: match a.statistic {
                    Statistic::Mean => ActStatistic::Mean,
                    Statistic::P99 => ActStatistic::P99,
                },
                relu_based: !a.non_relu,
            };
            let stats = workload
                .layers
                .iter()
                .filter(|l| l.acts_sparse)
                .map(|l| l.activation_stats())
                .collect::<tasd::Result<Vec<_>>>()?;
            let assignment = select_activation_configs(&stats, &params, &menu)?;
            let layers = stats
                .iter()
                .map(|s| {
                    Ok(json!({
                        "layer": s.layer_id,
                        "effective_sparsity": effective_sparsity(s, &params)?,
                        "config": assignment.get(&s.layer_id).map_or("dense".to_string(), |c| c.canonical()),
                    }))
                })
                .collect::<tasd::Result<Vec<_>>>()?;
            let log = json!({
                "mode": "activation",
                "alpha": a.alpha,
                "rho": a.rho,
                "layers": layers,
            });
            (assignment, log)
        }
    };
    assignment.validate(&menu)?;
    let mut out = output(a.out.as_deref())?;
    writeln!(out, "{}", assignment.to_json())?;
    out.flush()?;
    if let Some(p) = &a.log {
        write_json(p, &log)?;
    }
    for (id, c) in assignment.iter() {
        tracing::info!(layer = id, config = %c.canonical(), "assigned");
    }
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let workload = load_workload(&a.workload)?;
    let hw = load_hw(&a.hw)?;
    let assignment = match &a.assignment {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Assignment::from_json(&text)?
        }
        None => Assignment::default(),
    };
    assignment.validate(&hw.menu()?)?;
    let mut gating = BTreeMap::new();
    if a.gate_inputs {
        for l in workload.layers.iter().filter(|l| l.acts_sparse) {
            if let Some(s) = l.activation_stats().ok().and_then(|s| s.act_sparsity_mean) {
                gating.insert(l.layer_id.clone(), s);
            }
        }
    }
    let cost = workload_cost(&hw, &workload, &assignment, &gating)?;
    let dense = workload_cost(&hw, &workload, &Assignment::default(), &gating)?;
    let mut out = output(a.out.as_deref())?;
    write_cost_csv(&cost, &mut out)?;
    out.flush()?;
    for l in &cost.layers {
        eprintln!(
            "{:<12} {:<10} cycles {:>14} edp {:>12.4e}",
            l.layer_id, l.config, l.report.cycles, l.report.edp
        );
    }
    let ratio = cost.total.edp / dense.total.edp;
    eprintln!("edp_vs_dense {ratio:.6}");
    Ok(())
}

pub fn patterns(a: PatternsArgs) -> Result<()> {
    let hw = load_hw(&a.hw)?;
    let menu = hw.menu()?;
    let mut out = output(None)?;
    writeln!(out, "pattern,series")?;
    for (total, series) in menu.pattern_table() {
        let s = series.map_or_else(|| "-".to_string(), |c| c.canonical());
        writeln!(out, "{total}:{},{s}", menu.m)?;
        eprintln!(
            "{:>5}:{:<3} {}",
            total,
            menu.m,
            if s == "-" { "not supported" } else { &s }
        );
    }
    out.flush()?;
    Ok(())
}
