use std::path::{Path, PathBuf};

use serde_json::json;

use ssc_core::bench::run_bench_with;
use ssc_core::cox::{cox_fit, has_treated, marginal_counterfactual_hazard, CoxDesign};
use ssc_core::format::fmt_f64;
use ssc_core::km::km_fit;
use ssc_core::metrics::write_error_table;
use ssc_core::panel::{CensoredObservation, CsvSchema, DonorPool, PanelDataset, Period, Treatment};
use ssc_core::simgen::{generate_panel, Model};
use ssc_core::ssc::{bootstrap, estimate, make_grid};
use ssc_core::Error;

use crate::config::{BenchRunConfig, BootstrapRunConfig, CoxConfig, EstimateConfig, KmConfig, SimulateConfig};
use crate::error::{CliError, CliResult};
use crate::run::{LongTable, Run};

fn require_input(input: &Option<PathBuf>) -> CliResult<&Path> {
    input
        .as_deref()
        .ok_or_else(|| CliError::Usage("no input panel: pass --input or set `input` in the config".into()))
}

fn load_panel(path: &Path) -> CliResult<PanelDataset> {
    if !path.is_file() {
        return Err(CliError::Io(format!("{}: no such file", path.display())));
    }
    Ok(PanelDataset::load_csv(path, &CsvSchema::default())?)
}

/// The explicit unit, or else the single unit treated in the post-period.
fn resolve_target(data: &PanelDataset, explicit: Option<&str>) -> CliResult<String> {
    if let Some(unit) = explicit {
        return match data.unit_index(unit) {
            Some(_) => Ok(unit.to_string()),
            None => Err(CliError::Usage(format!("unknown target unit `{unit}`"))),
        };
    }
    let treated: Vec<&String> = data
        .units()
        .iter()
        .filter(|u| data.treatment_of(Period::Post, u) == Some(Treatment::Treated))
        .collect();
    match treated.as_slice() {
        [one] => Ok((*one).clone()),
        _ => Err(CliError::Usage(format!(
            "{} units are treated in the post-period; pass --target-unit",
            treated.len()
        ))),
    }
}

pub fn simulate(cfg: &SimulateConfig, out: &Path) -> CliResult<()> {
    cfg.dgp().validate()?;
    let mut run = Run::start("simulate", out, cfg, vec![cfg.seed], &[])?;
    let body = (|| {
        let sim = generate_panel(&cfg.dgp())?;
        sim.dataset.save_csv(run.path("panel.csv"))?;
        run.record("panel.csv")?;

        let grid = make_grid(&sim.dataset, cfg.horizon_quantile, cfg.grid_points)?;
        let mut rows = Vec::new();
        for period in Period::BOTH {
            for unit in 0..cfg.n_units {
                let truth = sim.dgp.true_survival(unit, period);
                for &t in grid.timestamps() {
                    rows.push(vec![
                        fmt_f64(t),
                        period.to_string(),
                        ssc_core::simgen::SimulatedPanel::unit_name(unit),
                        fmt_f64(truth.evaluate(t)),
                    ]);
                }
            }
        }
        run.write_csv("truth.csv", &["t", "period", "unit", "survival"], rows)?;

        let lambda0 = match cfg.model {
            Model::Cox => cfg.lambda,
            Model::Aalen => sim.dgp.aalen_baseline.unwrap_or(f64::NAN),
        };
        run.detail("nu", sim.nu);
        run.detail("lambda0", lambda0);
        run.detail("achieved_censoring", sim.achieved_censoring);
        run.detail("target_unit", sim.target_unit.clone());
        run.detail("horizon", grid.horizon());
        Ok(())
    })();
    run.close(body)
}

pub fn estimate_cmd(cfg: &EstimateConfig, out: &Path) -> CliResult<()> {
    let input = require_input(&cfg.input)?;
    let data = load_panel(input)?;
    let target = resolve_target(&data, cfg.target_unit.as_deref())?;
    let mut echo = cfg.clone();
    echo.target_unit = Some(target.clone());
    let mut run = Run::start("estimate", out, &echo, Vec::new(), &[input])?;
    let body = (|| {
        let grid = make_grid(&data, cfg.quantile, cfg.t0)?;
        let pool = DonorPool::from_dataset(&data, &target)?;
        let res = estimate(&data, &pool, &grid, &cfg.options())?;
        let t = grid.timestamps();

        let rows = (0..t.len()).map(|i| vec![fmt_f64(t[i]), fmt_f64(res.pre_fit[i]), fmt_f64(res.counterfactual[i])]);
        run.write_csv("counterfactual.csv", &["t", "pre_fit", "counterfactual"], rows)?;
        let rows = res
            .donor_order
            .iter()
            .zip(&res.weights.weights)
            .map(|(u, w)| vec![u.clone(), fmt_f64(*w)]);
        run.write_csv("weights.csv", &["unit", "weight"], rows)?;

        let mut plot = LongTable::default();
        plot.series("pre_target", t, &res.pre_target);
        plot.series("pre_fit", t, &res.pre_fit);
        plot.series("counterfactual", t, &res.counterfactual);
        run.write_long(&plot)?;

        run.detail("rank_used", res.weights.rank_used);
        run.detail("singular_values", res.singular_values.clone());
        run.detail("horizon", grid.horizon());
        Ok(())
    })();
    run.close(body)
}

pub fn bootstrap_cmd(cfg: &BootstrapRunConfig, out: &Path) -> CliResult<()> {
    let input = require_input(&cfg.input)?;
    let data = load_panel(input)?;
    let target = resolve_target(&data, cfg.target_unit.as_deref())?;
    let mut echo = cfg.clone();
    echo.target_unit = Some(target.clone());
    let mut run = Run::start("bootstrap", out, &echo, vec![cfg.seed], &[input])?;
    let body = (|| {
        let grid = make_grid(&data, cfg.quantile, cfg.t0)?;
        let pool = DonorPool::from_dataset(&data, &target)?;
        let band = bootstrap(&data, &pool, &grid, &cfg.estimate().options(), &cfg.bootstrap())?;
        let t = grid.timestamps();

        let rows = (0..t.len()).map(|i| {
            vec![fmt_f64(t[i]), fmt_f64(band.lower[i]), fmt_f64(band.point[i]), fmt_f64(band.upper[i])]
        });
        run.write_csv("band.csv", &["t", "lower", "point", "upper"], rows)?;

        let mut plot = LongTable::default();
        plot.series("lower", t, &band.lower);
        plot.series("point", t, &band.point);
        plot.series("upper", t, &band.upper);
        run.write_long(&plot)?;

        run.detail("replicates", band.replicates);
        run.detail("level", band.level);
        Ok(())
    })();
    run.close(body)
}

pub fn cox_cmd(cfg: &CoxConfig, out: &Path) -> CliResult<()> {
    let input = require_input(&cfg.input)?;
    let data = load_panel(input)?;
    let target = if cfg.marginal {
        Some(resolve_target(&data, cfg.target_unit.as_deref())?)
    } else {
        cfg.target_unit.clone()
    };
    let echo = CoxConfig {
        target_unit: target.clone(),
        ..cfg.clone()
    };
    let mut run = Run::start("cox", out, &echo, Vec::new(), &[input])?;
    let body = (|| {
        if data.covariate_names().is_empty() {
            return Err(Error::NoCovariates.into());
        }
        let obs: Vec<CensoredObservation> = data
            .cells()
            .flat_map(|(_, _, cell)| cell.observations.iter().cloned())
            .collect();
        let with_treatment = has_treated(&obs);
        let fit = cox_fit(&CoxDesign::from_observations(&obs, with_treatment)?)?;

        let mut terms: Vec<String> = data.covariate_names().to_vec();
        if with_treatment {
            terms.push("treatment".into());
        }
        let rows = terms.iter().zip(&fit.beta).map(|(n, b)| vec![n.clone(), fmt_f64(*b)]);
        run.write_csv("beta.csv", &["term", "beta"], rows)?;

        let base = &fit.baseline_cumhaz;
        let rows = (0..base.times.len()).map(|i| {
            vec![fmt_f64(base.times[i]), fmt_f64(base.increments[i]), fmt_f64(base.cumulative[i])]
        });
        run.write_csv("baseline.csv", &["t", "increment", "cumulative_hazard"], rows)?;

        let mut plot = LongTable::default();
        plot.series("baseline_cumulative_hazard", &base.times, &base.cumulative);

        if let Some(target) = target.as_deref().filter(|_| cfg.marginal) {
            let rows: Vec<Vec<f64>> = data
                .require_cell(Period::Post, target)?
                .iter()
                .map(|o| o.covariates.clone())
                .collect();
            let marginal = marginal_counterfactual_hazard(&fit, &rows)?;
            let survival: Vec<f64> = marginal
                .increments
                .iter()
                .scan(0.0, |cum, inc| {
                    *cum += inc;
                    Some((-*cum).exp())
                })
                .collect();
            let rows = (0..marginal.timestamps.len()).map(|i| {
                vec![
                    fmt_f64(marginal.timestamps[i]),
                    fmt_f64(marginal.increments[i]),
                    fmt_f64(marginal.values[i]),
                    fmt_f64(survival[i]),
                ]
            });
            run.write_csv("marginal.csv", &["t", "increment", "hazard", "survival"], rows)?;
            plot.series("marginal_hazard", &marginal.timestamps, &marginal.values);
            plot.series("marginal_survival", &marginal.timestamps, &survival);
        }
        run.write_long(&plot)?;

        run.detail("iterations", fit.convergence.iterations);
        run.detail("gradient_norm", fit.convergence.gradient_norm);
        run.detail("n_subjects", obs.len());
        Ok(())
    })();
    run.close(body)
}

pub fn km_cmd(cfg: &KmConfig, out: &Path) -> CliResult<()> {
    let input = require_input(&cfg.input)?;
    let data = load_panel(input)?;
    let period = match cfg.period {
        None => None,
        Some(code) => Some(
            Period::from_code(code).ok_or_else(|| CliError::Usage(format!("period must be 0 or 1, got {code}")))?,
        ),
    };
    if let Some(unit) = cfg.unit.as_deref() {
        if data.unit_index(unit).is_none() {
            return Err(CliError::Usage(format!("unknown unit `{unit}`")));
        }
    }
    let mut run = Run::start("km", out, cfg, Vec::new(), &[input])?;
    let body = (|| {
        let mut rows = Vec::new();
        let mut plot = LongTable::default();
        let mut curves = 0usize;
        for (p, unit, cell) in data.cells() {
            if period.is_some_and(|q| q != p) || cfg.unit.as_deref().is_some_and(|u| u != unit) {
                continue;
            }
            let curve = km_fit(&cell.observations)?;
            for (t, v) in curve.jump_times().iter().zip(curve.values()) {
                rows.push(vec![p.to_string(), unit.to_string(), fmt_f64(*t), fmt_f64(*v)]);
            }
            plot.series(&format!("{p}:{unit}"), curve.jump_times(), curve.values());
            curves += 1;
        }
        run.detail("curves", curves);
        run.write_csv("km.csv", &["period", "unit", "jump_time", "value"], rows)?;
        run.write_long(&plot)?;
        Ok(())
    })();
    run.close(body)
}

pub fn bench_cmd(cfg: &BenchRunConfig, out: &Path) -> CliResult<()> {
    let bench = cfg.bench()?;
    let mut run = Run::start("bench", out, cfg, bench.seeds.clone(), &[])?;
    let body = (|| {
        let mut long = run.csv_writer("replications.csv")?;
        long.write_record([
            "dgp", "K", "seed", "ssc_error", "oracle_error", "rank_used", "nu", "censoring", "failure",
        ])?;
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        let mut write_err = None;
        let report = run_bench_with(&bench, |row| {
            let rec = [
                row.model.to_string(),
                row.k.to_string(),
                row.seed.to_string(),
                opt(row.ssc_error),
                opt(row.oracle_error),
                row.rank_used.map(|r| r.to_string()).unwrap_or_default(),
                opt(row.nu),
                opt(row.censoring),
                row.failure.clone().unwrap_or_default(),
            ];
            let flushed = long.write_record(&rec).and_then(|()| long.flush().map_err(csv::Error::from));
            if let Err(e) = flushed {
                write_err.get_or_insert(e);
            }
        });
        if let Some(e) = write_err {
            return Err(e.into());
        }
        drop(long);
        run.record("replications.csv")?;

        let path = run.path("table.csv");
        let file = std::fs::File::create(&path).map_err(|e| CliError::io(path.display(), e))?;
        write_error_table(&report.summaries, std::io::BufWriter::new(file))?;
        run.record("table.csv")?;

        run.detail("replications", report.rows.len());
        run.detail("failed", report.failures());
        run.detail(
            "failures",
            json!(report
                .rows
                .iter()
                .filter_map(|r| r.failure.as_ref().map(|f| json!({"dgp": r.model, "K": r.k, "seed": r.seed, "error": f})))
                .collect::<Vec<_>>()),
        );
        Ok(report.failures())
    })();
    match run.close(body)? {
        0 => Ok(()),
        n => Err(CliError::Compute(format!("{n} replications failed; see replications.csv"))),
    }
}
