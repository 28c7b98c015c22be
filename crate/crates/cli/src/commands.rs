use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use otoc_core::protocol::{run_temperatures, temperature_sweep, OtocSeries, SeriesField, OPTIMIZER_STREAM};
use otoc_core::rng::derive_seed;
use otoc_core::spinchain::{build_hamiltonian, diagonalize, exact_otoc, exact_tfd_state, Temperature};
use otoc_core::statevector::PauliString;
use otoc_core::tfd::{optimize_tfd, prepare_tfd, reference_parameters, tfd_fidelity, TfdAnsatz};

use crate::config::{parse_pauli, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{compact_temperature, fmt_num, fmt_opt, render_dat, OutputDir, Table};

/// Fidelity the preparations are expected to reach.
pub const FIDELITY_TARGET: f64 = 0.97;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Oracle,
    TfdOptimize,
    Run,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Oracle => "oracle",
            Command::TfdOptimize => "tfd-optimize",
            Command::Run => "run",
            Command::Sweep => "sweep",
        }
    }
}

/// Everything needed to reproduce a result directory.
#[derive(Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub otoc_core_version: String,
    pub otoc_cli_version: String,
    pub outputs: Vec<String>,
    pub config: RunConfig,
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

/// Label used inside file names.
fn file_label(t: Temperature) -> String {
    format!("T{t}")
}

/// Checks the whole configuration for `cmd` before anything is computed.
pub fn validate(cmd: Command, cfg: &RunConfig) -> CliResult<()> {
    cfg.nonempty_temperatures()?;
    match cmd {
        Command::Oracle => {
            operators(cfg)?;
        }
        Command::TfdOptimize => {
            for t in cfg.temperatures()? {
                cfg.ansatz_for(t)?;
            }
        }
        Command::Run => {
            cfg.experiment()?;
        }
        Command::Sweep => {
            cfg.experiment()?;
            cfg.check_decay_times()?;
        }
    }
    Ok(())
}

pub fn execute(cmd: Command, cfg: &RunConfig, out: &mut OutputDir) -> CliResult<()> {
    validate(cmd, cfg)?;
    match cmd {
        Command::Oracle => oracle(cfg, out)?,
        Command::TfdOptimize => tfd_optimize(cfg, out)?,
        Command::Run => run(cfg, out)?,
        Command::Sweep => sweep(cfg, out)?,
    }
    let mut outputs = out.written().to_vec();
    outputs.push("manifest.toml".into());
    let manifest = Manifest {
        command: cmd.name().into(),
        seed: cfg.seed,
        otoc_core_version: otoc_core::VERSION.into(),
        otoc_cli_version: env!("CARGO_PKG_VERSION").into(),
        outputs,
        config: cfg.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| CliError::Io(format!("cannot serialize manifest: {e}")))?;
    out.write("manifest.toml", &text)
}

fn operators(cfg: &RunConfig) -> CliResult<(PauliString, PauliString)> {
    let n = cfg.model.n_sites;
    let ops = &cfg.operators;
    let single = |name: &str, site: usize, letter: &str| -> CliResult<PauliString> {
        if !(1..=n).contains(&site) {
            return Err(CliError::Config(format!("operators.{name}_site = {site} is outside 1..={n}")));
        }
        Ok(PauliString::single(n, site - 1, parse_pauli(&format!("{name}_pauli"), letter)?)?)
    };
    Ok((single("w", ops.w_site, &ops.w_pauli)?, single("v", ops.v_site, &ops.v_pauli)?))
}

fn oracle(cfg: &RunConfig, out: &mut OutputDir) -> CliResult<()> {
    let temps = cfg.nonempty_temperatures()?;
    let (w, v) = operators(cfg)?;
    let times = cfg.schedule()?.times();
    let sd = diagonalize(&build_hamiltonian(&cfg.tfim()?)?)?;
    let curves = temps
        .par_iter()
        .map(|&temp| {
            times.iter().map(|&t| Ok((t, exact_otoc(&sd, temp, t, &w, &v)?))).collect::<CliResult<Vec<(f64, f64)>>>()
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut table = Table::new(["temperature", "t", "O_exact"]);
    for (temp, curve) in temps.iter().zip(&curves) {
        for &(t, o) in curve {
            table.push(vec![temp.to_string(), fmt_num(t)?, fmt_num(o)?]);
        }
    }
    if cfg.output.wants("csv") {
        out.write("oracle.csv", &table.render())?;
    }
    if cfg.output.wants("dat") {
        for (temp, curve) in temps.iter().zip(&curves) {
            let comments = vec![format!("exact OTOC at T = {temp}"), "t O_exact".into()];
            out.write(&format!("oracle_{}.dat", file_label(*temp)), &render_dat(&comments, curve)?)?;
        }
    }
    Ok(())
}

struct OptimizedRow {
    temp: Temperature,
    layout: &'static str,
    thetas: Vec<f64>,
    fidelity: f64,
    reference_fidelity: Option<f64>,
    best_restart: usize,
}

fn tfd_optimize(cfg: &RunConfig, out: &mut OutputDir) -> CliResult<()> {
    let temps = cfg.nonempty_temperatures()?;
    let n = cfg.model.n_sites;
    let sd = diagonalize(&build_hamiltonian(&cfg.tfim()?)?)?;
    let rows = temps
        .par_iter()
        .enumerate()
        .map(|(i, &temp)| -> CliResult<OptimizedRow> {
            let ansatz = cfg.ansatz_for(temp)?;
            // Same stream as an optimized preparation inside `run`, so both find the same angles.
            let seed = derive_seed(derive_seed(cfg.seed, &[i as u64]), &[OPTIMIZER_STREAM]);
            let r = optimize_tfd(&ansatz, temp, &sd, &cfg.optimizer(seed))?;
            let reference_fidelity = match reference_parameters(temp) {
                Ok(params) => {
                    let prepared = prepare_tfd(&TfdAnsatz::for_reference(n, temp)?, &params)?;
                    Some(tfd_fidelity(&prepared, &exact_tfd_state(&sd, temp)?)?)
                }
                Err(_) => None,
            };
            Ok(OptimizedRow {
                temp,
                layout: ansatz.layout().name(),
                thetas: r.params.thetas,
                fidelity: r.fidelity,
                reference_fidelity,
                best_restart: r.best_restart,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let width = rows.iter().map(|r| r.thetas.len()).max().unwrap_or(0);
    let mut header = vec!["temperature".to_string(), "layout".into()];
    header.extend((1..=width).map(|k| format!("theta{k}")));
    header.extend(["fidelity", "overlap", "reference_fidelity", "best_restart"].map(String::from));
    let mut table = Table::new(header);
    for r in &rows {
        let mut row = vec![r.temp.to_string(), r.layout.to_string()];
        for k in 0..width {
            row.push(fmt_opt(r.thetas.get(k).copied())?);
        }
        row.push(fmt_num(r.fidelity)?);
        row.push(fmt_num(r.fidelity.sqrt())?);
        row.push(fmt_opt(r.reference_fidelity)?);
        row.push(r.best_restart.to_string());
        table.push(row);
        if r.fidelity < FIDELITY_TARGET {
            warn(&format!(
                "T = {}: best fidelity {:.6} is below the {FIDELITY_TARGET} target for variational TFD preparation",
                r.temp, r.fidelity
            ));
        }
    }
    if cfg.output.wants("csv") {
        out.write("tfd_parameters.csv", &table.render())?;
    }
    if cfg.output.wants("dat") {
        let points: Vec<(f64, f64)> = rows.iter().map(|r| (compact_temperature(r.temp), r.fidelity)).collect();
        let comments = vec!["optimized TFD fidelity".into(), "T/(1+T) fidelity".into()];
        out.write("tfd_fidelity.dat", &render_dat(&comments, &points)?)?;
    }
    Ok(())
}

const SERIES_HEADER: [&str; 8] =
    ["temperature", "t", "O_exact", "O_state", "O_sampled", "O_postselected", "kept_fraction", "std_error"];

fn series_rows(table: &mut Table, s: &OtocSeries) -> CliResult<()> {
    for p in &s.points {
        table.push(vec![
            s.temperature.to_string(),
            fmt_num(p.t)?,
            fmt_num(p.o_exact)?,
            fmt_num(p.o_state)?,
            fmt_opt(p.o_sampled)?,
            fmt_opt(p.o_postselected)?,
            fmt_opt(p.kept_fraction)?,
            fmt_opt(p.std_error)?,
        ]);
    }
    Ok(())
}

fn warn_starved(all: &[OtocSeries]) {
    for s in all {
        for t in s.starved_times() {
            warn(&format!("T = {}, t = {t}: no shot survived parity postselection; cell left empty", s.temperature));
        }
    }
}

fn warn_low_fidelity(all: &[OtocSeries]) {
    for s in all {
        if s.prep.fidelity < FIDELITY_TARGET {
            warn(&format!(
                "T = {}: {} preparation fidelity {:.6} is below the {FIDELITY_TARGET} target",
                s.temperature, s.prep.mode, s.prep.fidelity
            ));
        }
    }
}

fn preparation_table(all: &[OtocSeries]) -> CliResult<String> {
    let mut table = Table::new(["temperature", "mode", "layout", "fidelity", "one_qubit_gates", "two_qubit_gates"]);
    for s in all {
        let gates = s.points.last().map(|p| p.gate_counts).unwrap_or_default();
        table.push(vec![
            s.temperature.to_string(),
            s.prep.mode.to_string(),
            s.prep.layout.map(|l| l.name().to_string()).unwrap_or_default(),
            fmt_num(s.prep.fidelity)?,
            gates.one_qubit.to_string(),
            gates.two_qubit.to_string(),
        ]);
    }
    Ok(table.render())
}

fn field_name(f: SeriesField) -> &'static str {
    match f {
        SeriesField::Exact => "exact",
        SeriesField::State => "state",
        SeriesField::Sampled => "sampled",
        SeriesField::Postselected => "postselected",
    }
}

/// One `t O` file per temperature and available series variant.
fn write_curves(out: &mut OutputDir, all: &[OtocSeries]) -> CliResult<()> {
    for s in all {
        for f in SeriesField::ALL {
            let points: Vec<(f64, f64)> = s.points.iter().filter_map(|p| f.of(p).map(|o| (p.t, o))).collect();
            if points.is_empty() {
                continue;
            }
            let comments = vec![format!("O_{} at T = {}", field_name(f), s.temperature), "t O".into()];
            out.write(
                &format!("otoc_{}_{}.dat", field_name(f), file_label(s.temperature)),
                &render_dat(&comments, &points)?,
            )?;
        }
    }
    Ok(())
}

fn run(cfg: &RunConfig, out: &mut OutputDir) -> CliResult<()> {
    let exp = cfg.experiment()?;
    let all = run_temperatures(&exp, &cfg.nonempty_temperatures()?)?;
    warn_starved(&all);
    warn_low_fidelity(&all);
    if cfg.output.wants("csv") {
        let mut table = Table::new(SERIES_HEADER);
        for s in &all {
            series_rows(&mut table, s)?;
        }
        out.write("run.csv", &table.render())?;
        out.write("preparation.csv", &preparation_table(&all)?)?;
    }
    if cfg.output.wants("dat") {
        write_curves(out, &all)?;
    }
    Ok(())
}

fn sweep(cfg: &RunConfig, out: &mut OutputDir) -> CliResult<()> {
    let exp = cfg.experiment()?;
    let entries = temperature_sweep(&exp, &cfg.nonempty_temperatures()?)?;
    let all: Vec<OtocSeries> = entries.iter().map(|e| e.series.clone()).collect();
    warn_starved(&all);
    warn_low_fidelity(&all);
    let lambdas = |e: &otoc_core::protocol::SweepEntry| {
        [Some(e.lambda_exact), Some(e.lambda_state), e.lambda_sampled, e.lambda_postselected]
    };
    if cfg.output.wants("csv") {
        let mut table =
            Table::new(["temperature", "lambda_exact", "lambda_state", "lambda_sampled", "lambda_postselected"]);
        for e in &entries {
            let mut row = vec![e.temperature.to_string()];
            for l in lambdas(e) {
                row.push(fmt_opt(l)?);
            }
            table.push(row);
        }
        out.write("sweep.csv", &table.render())?;
        out.write("preparation.csv", &preparation_table(&all)?)?;
        for s in &all {
            let mut t = Table::new(SERIES_HEADER);
            series_rows(&mut t, s)?;
            out.write(&format!("series_{}.csv", file_label(s.temperature)), &t.render())?;
        }
    }
    if cfg.output.wants("dat") {
        for (k, f) in SeriesField::ALL.into_iter().enumerate() {
            let points: Vec<(f64, f64)> =
                entries.iter().filter_map(|e| lambdas(e)[k].map(|l| (compact_temperature(e.temperature), l))).collect();
            if points.is_empty() {
                continue;
            }
            let comments = vec![format!("decay rate lambda_{} (units of J)", field_name(f)), "T/(1+T) lambda".into()];
            out.write(&format!("lambda_{}.dat", field_name(f)), &render_dat(&comments, &points)?)?;
        }
        write_curves(out, &all)?;
    }
    Ok(())
}
