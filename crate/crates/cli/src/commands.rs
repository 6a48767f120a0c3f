//! Implementations of the five subcommands: `simulate`, `identify`,
//! `figures`, `psych`, and `sweep`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use telebench_core::{
    bode, effective_stiffness, fit_psychometric, fit_second_order_with_options, jnd,
    run_simulation, simulated_observer, staircase_threshold, staircase_update, step_response,
    FitOptions, FitReport, PsychError, SecondOrderModel, SimConfig, StaircaseState, SysIdError,
    TimeSeriesLog, TrialRecord,
};

use crate::config::{
    io_error, load_config, recorded_config_path, resolve_out_dir, write_manifest, CliError,
    ConstantStimuliTable, FiguresConfig, IdentifyConfig, Paradigm, PsychConfig, StaircaseTable,
    SweepConfig,
};
use crate::svg::{chart_svg, stacked_svg, ChartSpec, Trace};

const PARTICIPANT_COLOR: &str = "#1f4fd8";
const ENVIRONMENT_COLOR: &str = "#d81f1f";

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn cmd_simulate(
    config_path: &str,
    out: Option<&str>,
    seed: Option<u64>,
    quiet: bool,
) -> Result<(), CliError> {
    let loaded = load_config::<SimConfig>(Path::new(config_path), "simulate")?;
    let replay = loaded.replay;
    let mut config = loaded.config;
    let effective_seed = seed.or(replay.as_ref().and_then(|r| r.seed));
    if let Some(s) = effective_seed {
        config.rng_seed = s;
    }
    let out_dir = resolve_out_dir(out, replay.as_ref())?;
    fs::create_dir_all(&out_dir)
        .map_err(|e| io_error("cannot create output directory", &out_dir, e))?;

    let log = run_simulation(&config)?;
    let csv_path = out_dir.join("timeseries.csv");
    log.write_csv(&csv_path)?;
    write_manifest(
        &out_dir,
        "simulate",
        &recorded_config_path(config_path, replay.as_ref()),
        effective_seed,
        &config,
    )?;
    if !quiet {
        println!(
            "simulate: {} samples over {} s -> {}",
            log.len(),
            config.duration,
            csv_path.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// identify
// ---------------------------------------------------------------------------

/// Successful fit as written to a model file.
#[derive(Serialize)]
struct ModelRecord {
    system: String,
    input: String,
    output: String,
    free_run: bool,
    gain: f64,
    natural_frequency: f64,
    damping_ratio: f64,
    percent_fit: f64,
    fpe: f64,
    mse: f64,
    n_samples: usize,
    n_params: usize,
}

/// Failed fit as written to a model file.
#[derive(Serialize)]
struct FailedModelRecord {
    system: String,
    input: String,
    output: String,
    free_run: bool,
    error: String,
}

struct SidePorts {
    system: &'static str,
    input: &'static str,
    output: &'static str,
    file: &'static str,
}

const PARTICIPANT_SIDE: SidePorts = SidePorts {
    system: "participant",
    input: "sensed_master_torque",
    output: "master_angle",
    file: "participant_model.toml",
};

const ENVIRONMENT_SIDE: SidePorts = SidePorts {
    system: "environment",
    input: "sensed_environment_torque",
    output: "slave_angle",
    file: "environment_model.toml",
};

fn write_model_file(
    dir: &Path,
    side: &SidePorts,
    free_run: bool,
    result: &Result<(SecondOrderModel, FitReport), String>,
) -> Result<PathBuf, CliError> {
    let text = match result {
        Ok((model, report)) => toml::to_string_pretty(&ModelRecord {
            system: side.system.to_string(),
            input: side.input.to_string(),
            output: side.output.to_string(),
            free_run,
            gain: model.gain,
            natural_frequency: model.natural_frequency,
            damping_ratio: model.damping_ratio,
            percent_fit: report.percent_fit,
            fpe: report.fpe,
            mse: report.mse,
            n_samples: report.n_samples,
            n_params: report.n_params,
        }),
        Err(message) => toml::to_string_pretty(&FailedModelRecord {
            system: side.system.to_string(),
            input: side.input.to_string(),
            output: side.output.to_string(),
            free_run,
            error: message.clone(),
        }),
    }
    .map_err(|e| CliError::config(format!("cannot serialize model record: {e}")))?;
    let path = dir.join(side.file);
    fs::write(&path, text).map_err(|e| io_error("cannot write model file", &path, e))?;
    Ok(path)
}

/// Mean-removed sum of squares; zero means the signal carries no excitation.
fn detrended_energy(series: &[f64]) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    series.iter().map(|x| (x - mean) * (x - mean)).sum()
}

/// Environment-side fit with an explicit excitation check on the *true*
/// rendered torque: in free space the sensed channel is pure sensor noise, so
/// a naive fit would return a meaningless model instead of failing.
fn fit_environment_side(
    log: &TimeSeriesLog,
    dt: f64,
    options: FitOptions,
) -> Result<(SecondOrderModel, FitReport), String> {
    if detrended_energy(&log.environment_torque) == 0.0 {
        return Err(format!(
            "{} (the environment rendered zero torque for the whole run)",
            SysIdError::RankDeficient
        ));
    }
    fit_second_order_with_options(&log.sensed_environment_torque, &log.slave_angle, dt, options)
        .map_err(|e| e.to_string())
}

fn infer_dt(log: &TimeSeriesLog, source: &str) -> Result<f64, CliError> {
    if log.len() < 2 {
        return Err(CliError::numeric(format!(
            "log `{source}` has {} samples; need at least 2 to infer the sample time",
            log.len()
        )));
    }
    Ok(log.time[1] - log.time[0])
}

pub fn cmd_identify(config_path: &str, out: Option<&str>, quiet: bool) -> Result<(), CliError> {
    let loaded = load_config::<IdentifyConfig>(Path::new(config_path), "identify")?;
    let replay = loaded.replay;
    let config = loaded.config;
    let out_dir = resolve_out_dir(out, replay.as_ref())?;
    fs::create_dir_all(&out_dir)
        .map_err(|e| io_error("cannot create output directory", &out_dir, e))?;

    let log = TimeSeriesLog::read_csv(&config.log)?;
    let dt = infer_dt(&log, &config.log)?;
    let options = FitOptions {
        free_run: config.free_run,
    };

    // Participant side is the primary deliverable; its failure is fatal.
    let participant = fit_second_order_with_options(
        &log.sensed_master_torque,
        &log.master_angle,
        dt,
        options,
    )
    .map_err(|e| CliError::numeric(format!("participant-side fit failed: {e}")))?;
    let p_path = write_model_file(&out_dir, &PARTICIPANT_SIDE, config.free_run, &Ok(participant))?;

    // Environment side is best-effort: failures are recorded in the model
    // file and reported, but do not abort the run.
    let environment = fit_environment_side(&log, dt, options);
    let e_path = write_model_file(&out_dir, &ENVIRONMENT_SIDE, config.free_run, &environment)?;

    write_manifest(
        &out_dir,
        "identify",
        &recorded_config_path(config_path, replay.as_ref()),
        None,
        &config,
    )?;

    if !quiet {
        let (model, report) = &participant;
        println!(
            "identify: participant gain {} natural_frequency {} damping_ratio {} ({}% fit) -> {}",
            model.gain,
            model.natural_frequency,
            model.damping_ratio,
            report.percent_fit,
            p_path.display()
        );
    }
    match &environment {
        Ok((model, report)) => {
            if !quiet {
                println!(
                    "identify: environment gain {} natural_frequency {} damping_ratio {} ({}% fit) -> {}",
                    model.gain,
                    model.natural_frequency,
                    model.damping_ratio,
                    report.percent_fit,
                    e_path.display()
                );
            }
        }
        // Always surfaced, even under --quiet: a recorded failure is a
        // result the caller must see, not progress chatter.
        Err(message) => eprintln!("identify: environment-side fit failed: {message}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// figures
// ---------------------------------------------------------------------------

struct FigureModel {
    label: &'static str,
    column: &'static str,
    color: &'static str,
    dashed: bool,
    model: SecondOrderModel,
}

fn load_model_file(path_str: &str) -> Result<SecondOrderModel, CliError> {
    let path = Path::new(path_str);
    let text = fs::read_to_string(path).map_err(|e| io_error("cannot read model file", path, e))?;
    let value: toml::Value = toml::from_str(&text)
        .map_err(|e| CliError::config(format!("invalid TOML in model file `{path_str}`: {e}")))?;
    if let Some(err) = value.get("error") {
        return Err(CliError::config(format!(
            "model file `{path_str}` records a failed fit: {}",
            err.as_str().unwrap_or("unknown error")
        )));
    }
    #[derive(Deserialize)]
    struct Params {
        gain: f64,
        natural_frequency: f64,
        damping_ratio: f64,
    }
    let params: Params = value
        .try_into()
        .map_err(|e| CliError::config(format!("invalid model file `{path_str}`: {e}")))?;
    let model = SecondOrderModel {
        gain: params.gain,
        natural_frequency: params.natural_frequency,
        damping_ratio: params.damping_ratio,
    };
    model
        .validate()
        .map_err(|e| CliError::config(format!("invalid model in `{path_str}`: {e}")))?;
    Ok(model)
}

fn check_positive(field: &str, value: f64) -> Result<(), CliError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(CliError::config(format!(
            "{field} must be finite and > 0 (got {value})"
        )))
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_error("cannot write", path, e))
}

pub fn cmd_figures(config_path: &str, out: Option<&str>, quiet: bool) -> Result<(), CliError> {
    let loaded = load_config::<FiguresConfig>(Path::new(config_path), "figures")?;
    let replay = loaded.replay;
    let config = loaded.config;
    let out_dir = resolve_out_dir(out, replay.as_ref())?;
    fs::create_dir_all(&out_dir)
        .map_err(|e| io_error("cannot create output directory", &out_dir, e))?;

    check_positive("step_duration", config.step_duration)?;
    check_positive("step_dt", config.step_dt)?;
    check_positive("bode_min", config.bode_min)?;
    if !config.bode_max.is_finite() || config.bode_max <= config.bode_min {
        return Err(CliError::config(format!(
            "bode_max must be finite and > bode_min (got {} vs {})",
            config.bode_max, config.bode_min
        )));
    }
    if config.bode_points < 2 {
        return Err(CliError::config(format!(
            "bode_points must be at least 2 (got {})",
            config.bode_points
        )));
    }

    let mut models: Vec<FigureModel> = Vec::new();
    if let Some(path) = &config.participant_model {
        models.push(FigureModel {
            label: "Participant",
            column: "participant",
            color: PARTICIPANT_COLOR,
            dashed: false,
            model: load_model_file(path)?,
        });
    }
    if let Some(path) = &config.environment_model {
        models.push(FigureModel {
            label: "Environment",
            column: "environment",
            color: ENVIRONMENT_COLOR,
            dashed: true,
            model: load_model_file(path)?,
        });
    }
    if models.is_empty() {
        return Err(CliError::config(
            "at least one of participant_model / environment_model is required",
        ));
    }

    // Step responses: the CSV holds exactly the values step_response returns.
    let steps: Vec<Vec<f64>> = models
        .iter()
        .map(|m| step_response(&m.model, config.step_duration, config.step_dt))
        .collect();
    let n_step = steps.iter().map(Vec::len).min().unwrap_or(0);
    let mut step_csv = String::from("time");
    for m in &models {
        step_csv.push(',');
        step_csv.push_str(m.column);
    }
    step_csv.push('\n');
    for i in 0..n_step {
        step_csv.push_str(&format!("{}", i as f64 * config.step_dt));
        for series in &steps {
            step_csv.push_str(&format!(",{}", series[i]));
        }
        step_csv.push('\n');
    }
    write_text(&out_dir.join("step_response.csv"), &step_csv)?;

    let step_traces: Vec<Trace> = models
        .iter()
        .zip(&steps)
        .map(|(m, series)| Trace {
            label: m.label.to_string(),
            color: m.color,
            dashed: m.dashed,
            points: series
                .iter()
                .enumerate()
                .map(|(i, &y)| (i as f64 * config.step_dt, y))
                .collect(),
        })
        .collect();
    let step_svg = chart_svg(
        ChartSpec {
            title: "Unit step response".to_string(),
            x_label: "Time (s)".to_string(),
            y_label: "Angle per unit torque (rad/N·m)".to_string(),
            log_x: false,
        },
        step_traces,
    );
    write_text(&out_dir.join("step_response.svg"), &step_svg)?;

    // Bode: logarithmically spaced frequencies, magnitude and phase panels.
    let n = config.bode_points;
    let ratio = config.bode_max / config.bode_min;
    let freqs: Vec<f64> = (0..n)
        .map(|i| config.bode_min * ratio.powf(i as f64 / (n - 1) as f64))
        .collect();
    let responses: Vec<(Vec<f64>, Vec<f64>)> =
        models.iter().map(|m| bode(&m.model, &freqs)).collect();

    let mut bode_csv = String::from("frequency");
    for m in &models {
        bode_csv.push_str(&format!(",{0}_magnitude_db,{0}_phase_deg", m.column));
    }
    bode_csv.push('\n');
    for (i, &f) in freqs.iter().enumerate() {
        bode_csv.push_str(&format!("{f}"));
        for (mag, phase) in &responses {
            bode_csv.push_str(&format!(",{},{}", mag[i], phase[i]));
        }
        bode_csv.push('\n');
    }
    write_text(&out_dir.join("bode.csv"), &bode_csv)?;

    let panel = |title: &str, y_label: &str, pick: fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| {
        let traces: Vec<Trace> = models
            .iter()
            .zip(&responses)
            .map(|(m, resp)| Trace {
                label: m.label.to_string(),
                color: m.color,
                dashed: m.dashed,
                points: freqs.iter().copied().zip(pick(resp).iter().copied()).collect(),
            })
            .collect();
        (
            ChartSpec {
                title: title.to_string(),
                x_label: "Frequency (rad/s)".to_string(),
                y_label: y_label.to_string(),
                log_x: true,
            },
            traces,
        )
    };
    let bode_svg = stacked_svg(&[
        panel("Bode magnitude", "Magnitude (dB)", |r| &r.0),
        panel("Bode phase", "Phase (deg)", |r| &r.1),
    ]);
    write_text(&out_dir.join("bode.svg"), &bode_svg)?;

    write_manifest(
        &out_dir,
        "figures",
        &recorded_config_path(config_path, replay.as_ref()),
        None,
        &config,
    )?;
    if !quiet {
        println!(
            "figures: {} trace(s) -> {}",
            models.len(),
            out_dir.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// psych
// ---------------------------------------------------------------------------

struct TrialRow {
    trial_index: usize,
    level: f64,
    reference_stiffness: f64,
    comparison_stiffness: f64,
    effective_reference: f64,
    effective_comparison: f64,
    response_greater: bool,
    correct: bool,
    rng_draw_index: u64,
}

fn write_trials_csv(path: &Path, rows: &[TrialRow]) -> Result<(), CliError> {
    let mut text = String::from(
        "trial_index,level,reference_stiffness,comparison_stiffness,effective_reference,\
         effective_comparison,response_greater,correct,rng_draw_index\n",
    );
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.trial_index,
            r.level,
            r.reference_stiffness,
            r.comparison_stiffness,
            r.effective_reference,
            r.effective_comparison,
            r.response_greater,
            r.correct,
            r.rng_draw_index
        ));
    }
    write_text(path, &text)
}

/// Effective (transmission-rendered) stiffness for one nominal spring value,
/// memoized so repeated staircase visits to a level run one simulation.
fn effective_for(
    config: &PsychConfig,
    cache: &mut HashMap<u64, f64>,
    stiffness: f64,
) -> Result<f64, CliError> {
    if !stiffness.is_finite() || stiffness <= 0.0 {
        return Err(CliError::numeric(format!(
            "trial requires a rendered stiffness of {stiffness} N·m/rad, which is not positive; \
             adjust the levels or set floor_level"
        )));
    }
    if let Some(&v) = cache.get(&stiffness.to_bits()) {
        return Ok(v);
    }
    let v = effective_stiffness(&config.engine, config.engine.transmission.clone(), stiffness)?;
    cache.insert(stiffness.to_bits(), v);
    Ok(v)
}

fn summary_table(entries: Vec<(&str, toml::Value)>) -> String {
    let mut map = toml::map::Map::new();
    for (key, value) in entries {
        map.insert(key.to_string(), value);
    }
    toml::to_string_pretty(&toml::Value::Table(map)).expect("summary serialization cannot fail")
}

fn run_staircase_session(
    config: &PsychConfig,
    table: &StaircaseTable,
    out_dir: &Path,
    quiet: bool,
) -> Result<(), CliError> {
    let mut state = StaircaseState::new(table.initial_level, table.step_size);
    state.termination_reversals = table.termination_reversals;
    if let Some(floor) = table.floor_level {
        state.floor_level = floor;
    }
    state.validate()?;
    if table.max_trials == 0 {
        return Err(CliError::config("staircase.max_trials must be at least 1"));
    }

    let mut cache = HashMap::new();
    let reference_eff = effective_for(config, &mut cache, config.reference_stiffness)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rows: Vec<TrialRow> = Vec::new();

    while !state.is_terminated() && state.trial_count < table.max_trials {
        let level = state.current_level;
        let comparison_k = config.reference_stiffness + level;
        let comparison_eff = effective_for(config, &mut cache, comparison_k)?;
        let response_greater =
            simulated_observer(reference_eff, comparison_eff, &config.observer, &mut rng);
        let correct = response_greater == (comparison_k > config.reference_stiffness);
        rows.push(TrialRow {
            trial_index: rows.len(),
            level,
            reference_stiffness: config.reference_stiffness,
            comparison_stiffness: comparison_k,
            effective_reference: reference_eff,
            effective_comparison: comparison_eff,
            response_greater,
            correct,
            rng_draw_index: rows.len() as u64,
        });
        state = staircase_update(state, correct);
    }

    write_trials_csv(&out_dir.join("trials.csv"), &rows)?;

    let mut entries: Vec<(&str, toml::Value)> = vec![
        ("paradigm", toml::Value::String("staircase".to_string())),
        (
            "reference_stiffness",
            toml::Value::Float(config.reference_stiffness),
        ),
        ("effective_reference", toml::Value::Float(reference_eff)),
        ("n_trials", toml::Value::Integer(state.trial_count as i64)),
        (
            "n_reversals",
            toml::Value::Integer(state.reversal_levels.len() as i64),
        ),
        ("terminated", toml::Value::Boolean(state.is_terminated())),
        ("final_level", toml::Value::Float(state.current_level)),
    ];
    let outcome = match staircase_threshold(&state) {
        Ok(threshold) => {
            entries.push(("threshold", toml::Value::Float(threshold)));
            format!("threshold {threshold}")
        }
        Err(e) => {
            entries.push(("threshold_error", toml::Value::String(e.to_string())));
            format!("no threshold ({e})")
        }
    };
    write_text(&out_dir.join("summary.toml"), &summary_table(entries))?;
    if !quiet {
        println!(
            "psych: staircase finished after {} trials, {} reversals; {}",
            state.trial_count,
            state.reversal_levels.len(),
            outcome
        );
    }
    Ok(())
}

fn run_constant_stimuli_session(
    config: &PsychConfig,
    table: &ConstantStimuliTable,
    out_dir: &Path,
    quiet: bool,
) -> Result<(), CliError> {
    if table.trials_per_level == 0 {
        return Err(CliError::config(
            "constant_stimuli.trials_per_level must be at least 1",
        ));
    }
    let mut distinct = table.levels.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(CliError::config(
            "constant_stimuli.levels needs at least two distinct values",
        ));
    }
    for &level in &table.levels {
        if !level.is_finite() || level <= 0.0 {
            return Err(CliError::config(format!(
                "constant_stimuli.levels are absolute stiffnesses and must be finite and > 0 \
                 (got {level})"
            )));
        }
    }

    // Presentation order is shuffled with the same RNG that draws responses,
    // mirroring the library's constant-stimuli runner.
    let mut comparisons: Vec<f64> = Vec::with_capacity(table.levels.len() * table.trials_per_level);
    for &level in &table.levels {
        comparisons.extend(std::iter::repeat(level).take(table.trials_per_level));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    comparisons.shuffle(&mut rng);

    let mut cache = HashMap::new();
    let reference_eff = effective_for(config, &mut cache, config.reference_stiffness)?;
    let mut rows: Vec<TrialRow> = Vec::new();
    let mut records: Vec<TrialRecord> = Vec::new();
    for (i, &comparison_k) in comparisons.iter().enumerate() {
        let comparison_eff = effective_for(config, &mut cache, comparison_k)?;
        let response_greater =
            simulated_observer(reference_eff, comparison_eff, &config.observer, &mut rng);
        let correct = response_greater == (comparison_k > config.reference_stiffness);
        rows.push(TrialRow {
            trial_index: i,
            level: comparison_k - config.reference_stiffness,
            reference_stiffness: config.reference_stiffness,
            comparison_stiffness: comparison_k,
            effective_reference: reference_eff,
            effective_comparison: comparison_eff,
            response_greater,
            correct,
            rng_draw_index: i as u64,
        });
        records.push(TrialRecord {
            trial_index: i,
            reference: reference_eff,
            comparison: comparison_eff,
            response_greater,
            correct,
            rng_draw_index: i as u64,
        });
    }

    write_trials_csv(&out_dir.join("trials.csv"), &rows)?;

    let mut entries: Vec<(&str, toml::Value)> = vec![
        (
            "paradigm",
            toml::Value::String("constant_stimuli".to_string()),
        ),
        (
            "reference_stiffness",
            toml::Value::Float(config.reference_stiffness),
        ),
        ("effective_reference", toml::Value::Float(reference_eff)),
        ("n_trials", toml::Value::Integer(records.len() as i64)),
        ("n_levels", toml::Value::Integer(distinct.len() as i64)),
    ];
    // Fit over *effective* stimulus differences; μ, σ and the JND are in
    // effective N·m/rad.
    let outcome = match fit_psychometric(&records) {
        Ok(pf) => {
            entries.push(("threshold_mu", toml::Value::Float(pf.threshold_mu)));
            entries.push(("slope_sigma", toml::Value::Float(pf.slope_sigma)));
            entries.push(("lapse_rate", toml::Value::Float(pf.lapse_rate)));
            entries.push(("jnd", toml::Value::Float(jnd(&pf))));
            format!("mu {} sigma {} jnd {}", pf.threshold_mu, pf.slope_sigma, jnd(&pf))
        }
        // A session whose responses defeat the fit is still a completed
        // session: record the failure and exit cleanly.
        Err(PsychError::Degenerate { fit }) => {
            entries.push(("fit_error", toml::Value::String(
                "responses are perfectly separated; slope is degenerate".to_string(),
            )));
            entries.push(("threshold_mu", toml::Value::Float(fit.threshold_mu)));
            entries.push(("slope_sigma", toml::Value::Float(fit.slope_sigma)));
            entries.push(("lapse_rate", toml::Value::Float(fit.lapse_rate)));
            "degenerate fit (perfect separation)".to_string()
        }
        Err(e) => {
            entries.push(("fit_error", toml::Value::String(e.to_string())));
            format!("fit failed ({e})")
        }
    };
    write_text(&out_dir.join("summary.toml"), &summary_table(entries))?;
    if !quiet {
        println!("psych: constant stimuli, {} trials; {}", records.len(), outcome);
    }
    Ok(())
}

pub fn cmd_psych(
    config_path: &str,
    out: Option<&str>,
    seed: Option<u64>,
    quiet: bool,
) -> Result<(), CliError> {
    let loaded = load_config::<PsychConfig>(Path::new(config_path), "psych")?;
    let replay = loaded.replay;
    let mut config = loaded.config;
    let effective_seed = seed.or(replay.as_ref().and_then(|r| r.seed));
    if let Some(s) = effective_seed {
        config.seed = s;
    }
    let out_dir = resolve_out_dir(out, replay.as_ref())?;
    fs::create_dir_all(&out_dir)
        .map_err(|e| io_error("cannot create output directory", &out_dir, e))?;

    config.observer.validate()?;
    config.engine.validate()?;
    if !config.reference_stiffness.is_finite() || config.reference_stiffness <= 0.0 {
        return Err(CliError::config(format!(
            "reference_stiffness must be finite and > 0 (got {})",
            config.reference_stiffness
        )));
    }

    match config.paradigm {
        Paradigm::Staircase => {
            let table = config.staircase.clone().ok_or_else(|| {
                CliError::config("paradigm = \"staircase\" requires a [staircase] table")
            })?;
            run_staircase_session(&config, &table, &out_dir, quiet)?;
        }
        Paradigm::ConstantStimuli => {
            let table = config.constant_stimuli.clone().ok_or_else(|| {
                CliError::config(
                    "paradigm = \"constant_stimuli\" requires a [constant_stimuli] table",
                )
            })?;
            run_constant_stimuli_session(&config, &table, &out_dir, quiet)?;
        }
    }

    write_manifest(
        &out_dir,
        "psych",
        &recorded_config_path(config_path, replay.as_ref()),
        effective_seed,
        &config,
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

/// Substitutes `value` at a dotted path in a TOML document. Intermediate
/// segments must already exist as tables; the leaf may be created (typos
/// there are caught when the patched document is deserialized).
fn set_dotted(
    root: &mut toml::Value,
    parameter: &str,
    value: f64,
) -> Result<(), String> {
    let segments: Vec<&str> = parameter.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(format!("invalid parameter path `{parameter}`"));
    }
    let mut node = root;
    for (i, segment) in segments[..segments.len() - 1].iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| format!("`{}` is not a table", segments[..i].join(".")))?;
        node = table.get_mut(*segment).ok_or_else(|| {
            format!(
                "parameter path `{parameter}`: `{}` not found in base config",
                segments[..=i].join(".")
            )
        })?;
    }
    let leaf = segments[segments.len() - 1];
    let table = node.as_table_mut().ok_or_else(|| {
        format!(
            "`{}` is not a table",
            segments[..segments.len() - 1].join(".")
        )
    })?;
    table.insert(leaf.to_string(), toml::Value::Float(value));
    Ok(())
}

fn prefixed(label: String, err: CliError) -> CliError {
    match err {
        CliError::Config(msg) => CliError::Config(format!("{label}: {msg}")),
        CliError::Numeric(msg) => CliError::Numeric(format!("{label}: {msg}")),
    }
}

pub fn cmd_sweep(config_path: &str, out: Option<&str>, quiet: bool) -> Result<(), CliError> {
    let loaded = load_config::<SweepConfig>(Path::new(config_path), "sweep")?;
    let replay = loaded.replay;
    let config = loaded.config;
    let out_dir = resolve_out_dir(out, replay.as_ref())?;
    fs::create_dir_all(&out_dir)
        .map_err(|e| io_error("cannot create output directory", &out_dir, e))?;

    if config.values.is_empty() {
        return Err(CliError::config("sweep.values must be non-empty"));
    }
    let base_path = Path::new(&config.base_config);
    let base_text = fs::read_to_string(base_path)
        .map_err(|e| io_error("cannot read base config", base_path, e))?;
    let base_value: toml::Value = toml::from_str(&base_text).map_err(|e| {
        CliError::config(format!("invalid TOML in `{}`: {e}", base_path.display()))
    })?;
    // A simulate manifest works as a base too; sweep over its resolved config.
    let base_value = if base_value.get("run").is_some() {
        let manifest: crate::config::RunManifest = base_value.try_into().map_err(|e| {
            CliError::config(format!("invalid manifest `{}`: {e}", base_path.display()))
        })?;
        if manifest.run.command != "simulate" {
            return Err(CliError::config(format!(
                "base_config manifest `{}` records a `{}` run; sweep needs a simulate config",
                base_path.display(),
                manifest.run.command
            )));
        }
        manifest.config
    } else {
        base_value
    };

    let mut summary = String::from(
        "index,value,dir,participant_gain,participant_natural_frequency,\
         participant_damping_ratio,participant_percent_fit\n",
    );
    for (i, &value) in config.values.iter().enumerate() {
        let label = format!("sweep point {i} ({} = {value})", config.parameter);
        let mut patched = base_value.clone();
        set_dotted(&mut patched, &config.parameter, value).map_err(CliError::Config)?;
        let sim: SimConfig = patched.clone().try_into().map_err(|e| {
            CliError::config(format!("{label}: patched config is invalid: {e}"))
        })?;

        let point_name = format!("point_{i:03}");
        let point_dir = out_dir.join(&point_name);
        fs::create_dir_all(&point_dir)
            .map_err(|e| io_error("cannot create output directory", &point_dir, e))?;
        let point_config_path = point_dir.join("config.toml");
        let patched_text = toml::to_string_pretty(&patched)
            .map_err(|e| CliError::config(format!("{label}: cannot serialize config: {e}")))?;
        write_text(&point_config_path, &patched_text)?;

        let log = run_simulation(&sim)
            .map_err(|e| prefixed(label.clone(), CliError::from(e)))?;
        log.write_csv(point_dir.join("timeseries.csv"))
            .map_err(|e| prefixed(label.clone(), CliError::from(e)))?;
        write_manifest(
            &point_dir,
            "simulate",
            &point_config_path.display().to_string(),
            None,
            &sim,
        )?;

        let mut fit_cells = String::from(",,,");
        if config.identify {
            // Per-point fit failures are recorded in the model files and
            // leave the summary cells empty; the sweep itself continues.
            let participant = fit_second_order_with_options(
                &log.sensed_master_torque,
                &log.master_angle,
                sim.dt,
                FitOptions::default(),
            )
            .map_err(|e| e.to_string());
            write_model_file(&point_dir, &PARTICIPANT_SIDE, false, &participant)?;
            let environment = fit_environment_side(&log, sim.dt, FitOptions::default());
            write_model_file(&point_dir, &ENVIRONMENT_SIDE, false, &environment)?;
            match &participant {
                Ok((model, report)) => {
                    fit_cells = format!(
                        "{},{},{},{}",
                        model.gain,
                        model.natural_frequency,
                        model.damping_ratio,
                        report.percent_fit
                    );
                }
                Err(message) => {
                    eprintln!("sweep: {label}: participant-side fit failed: {message}");
                    fit_cells = ",,,".to_string();
                }
            }
            if let Err(message) = &environment {
                eprintln!("sweep: {label}: environment-side fit failed: {message}");
            }
        }
        summary.push_str(&format!("{i},{value},{point_name},{fit_cells}\n"));
        if !quiet {
            println!("sweep: {label} -> {}", point_dir.display());
        }
    }

    write_text(&out_dir.join("summary.csv"), &summary)?;
    write_manifest(
        &out_dir,
        "sweep",
        &recorded_config_path(config_path, replay.as_ref()),
        None,
        &config,
    )?;
    if !quiet {
        println!(
            "sweep: {} point(s) -> {}",
            config.values.len(),
            out_dir.join("summary.csv").display()
        );
    }
    Ok(())
}
