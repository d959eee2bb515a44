//! Implementations behind the subcommands.

use crate::config::parse_config;
use crate::tensor::{read_tensor, write_tensor, Tensor};
use crate::wire::{self, LoggedGroup, RolloutGroupRecord};
use anyhow::{anyhow, bail, Context, Result};
use noisygrpo::advantage::{
    estimate_advantages, AdvantageParams, AdvantageReport, EstimatorMode, RewardedGroup,
};
use noisygrpo::diagnostics::{
    collect_residuals, histogram, kolmogorov_smirnov, noise_correctness_summary, qq_pairs,
    shapiro_wilk_capped, ResidualKind,
};
use noisygrpo::format_f64;
use noisygrpo::noise::{forward_noise, NoiseSchedule};
use noisygrpo::trainer::{metric_csv_row, run_experiment_observed, METRIC_CSV_HEADER};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write as IoWrite};
use std::path::Path;

/// Streams rollout groups from JSONL and writes one advantage report per
/// line. Stops loudly at the first bad line, naming it.
pub fn cmd_advantages(
    input: &Path,
    alpha: f64,
    gamma: f64,
    mode: EstimatorMode,
    out: &mut dyn IoWrite,
) -> Result<()> {
    let params = AdvantageParams::new(alpha, gamma, mode).map_err(|e| anyhow!("{e}"))?;
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let reader = BufReader::new(file);
    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line.with_context(|| format!("reading line {line_no}"))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RolloutGroupRecord = serde_json::from_str(&line)
            .map_err(|e| anyhow!("line {line_no}: malformed group record: {e}"))?;
        let noise_levels: Vec<f64> = record.rollouts.iter().map(|r| r.noise_level).collect();
        let rewards: Vec<f64> = record.rollouts.iter().map(|r| r.semantic_reward).collect();
        let group = RewardedGroup::new(noise_levels, rewards)
            .map_err(|e| anyhow!("line {line_no}: {e}"))?;
        let report =
            estimate_advantages(&group, &params).map_err(|e| anyhow!("line {line_no}: {e}"))?;
        writeln!(out, "{}", wire::advantage_line(record.group_id, &report))?;
    }
    Ok(())
}

/// Runs one experiment from a config file and writes the metric series
/// (CSV and JSON), the per-group advantage log, and the final policy.
pub fn cmd_train(
    config_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
    quiet: bool,
) -> Result<()> {
    let text = fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let cfg = parse_config(&text, seed_override)?;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let adv_path = out_dir.join("advantages.jsonl");
    let adv_file =
        File::create(&adv_path).with_context(|| format!("creating {}", adv_path.display()))?;
    let mut adv_writer = BufWriter::new(adv_file);
    let mut write_error: Option<std::io::Error> = None;
    let run = run_experiment_observed(&cfg, |trace| {
        if write_error.is_some() {
            return;
        }
        if let Err(e) = writeln!(adv_writer, "{}", wire::trace_line(trace)) {
            write_error = Some(e);
        }
    })
    .map_err(|e| anyhow!("{e}"))?;
    if let Some(e) = write_error {
        return Err(e).with_context(|| format!("writing {}", adv_path.display()));
    }
    adv_writer
        .flush()
        .with_context(|| format!("flushing {}", adv_path.display()))?;

    let mut csv = String::new();
    csv.push_str(METRIC_CSV_HEADER);
    csv.push('\n');
    for record in &run.metrics {
        csv.push_str(&metric_csv_row(record, cfg.method, cfg.seed));
        csv.push('\n');
    }
    fs::write(out_dir.join("metrics.csv"), csv).context("writing metrics.csv")?;

    fs::write(
        out_dir.join("metrics.json"),
        wire::metrics_json(cfg.method, cfg.seed, &run.metrics),
    )
    .context("writing metrics.json")?;

    let policy = &run.final_policy;
    let policy_json = format!(
        "{{\"feature_dim\":{},\"num_answers\":{},\"weights\":{},\"bias\":{}}}",
        policy.feature_dim(),
        policy.num_actions(),
        wire::json_array(policy.weights()),
        wire::json_array(policy.bias()),
    );
    fs::write(out_dir.join("policy.json"), policy_json).context("writing policy.json")?;

    if !quiet {
        let last = run.metrics.last().expect("at least one iteration");
        eprintln!(
            "{} seed {}: {} iterations complete, final eval accuracy {:.4}",
            cfg.method.name(),
            cfg.seed,
            cfg.iterations,
            last.eval_accuracy
        );
    }
    Ok(())
}

/// Pools residuals from an advantage log and reports normality statistics
/// plus the noise/correctness decile table, optionally exporting CSVs.
pub fn cmd_diagnose(
    input: &Path,
    kind: ResidualKind,
    out_dir: Option<&Path>,
    bins: usize,
    seed: u64,
    out: &mut dyn IoWrite,
) -> Result<()> {
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let reader = BufReader::new(file);
    let mut reports: Vec<AdvantageReport> = Vec::new();
    let mut raw_groups: Vec<RewardedGroup> = Vec::new();
    let mut raw_complete = true;
    let mut iteration_range: Option<(usize, usize)> = None;

    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line.with_context(|| format!("reading line {line_no}"))?;
        if line.trim().is_empty() {
            continue;
        }
        let logged: LoggedGroup = serde_json::from_str(&line)
            .map_err(|e| anyhow!("line {line_no}: malformed log record: {e}"))?;
        let group_size = logged.prior_normed.len();
        if group_size < 2
            || logged.obs_normed.len() != group_size
            || logged.posterior.len() != group_size
        {
            bail!("line {line_no}: prior_normed, obs_normed, and posterior must share one length of at least 2");
        }
        if logged
            .prior_normed
            .iter()
            .chain(&logged.obs_normed)
            .chain(&logged.posterior)
            .any(|v| !v.is_finite())
        {
            bail!("line {line_no}: non-finite value in logged vectors");
        }
        let mode = match &logged.mode {
            Some(label) => wire::parse_mode_label(label)
                .ok_or_else(|| anyhow!("line {line_no}: unknown mode `{label}`"))?,
            None if logged.importance_weight == 0.0 => EstimatorMode::VanillaGrpo,
            None => EstimatorMode::FullNoisy,
        };
        if mode == EstimatorMode::VanillaGrpo {
            bail!(
                "line {line_no}: this record comes from a vanilla run (importance weight 0); \
                 vanilla logs record no prior signal, so residual diagnostics are unavailable"
            );
        }
        if let Some(iteration) = logged.iteration {
            iteration_range = Some(match iteration_range {
                None => (iteration, iteration),
                Some((lo, hi)) => (lo.min(iteration), hi.max(iteration)),
            });
        }
        match (&logged.noise_levels, &logged.semantic_rewards) {
            (Some(levels), Some(rewards)) if raw_complete => {
                raw_groups.push(
                    RewardedGroup::new(levels.clone(), rewards.clone())
                        .map_err(|e| anyhow!("line {line_no}: {e}"))?,
                );
            }
            _ => raw_complete = false,
        }
        // Only the mode and the three vectors feed the residual pooling;
        // the scalar fields besides the weight are not re-used.
        reports.push(AdvantageReport {
            mode,
            advantages: logged.posterior.clone(),
            prior_normed: logged.prior_normed,
            obs_normed: logged.obs_normed,
            posterior: logged.posterior,
            sigma_n_sq: 0.5,
            sigma_s_sq: 0.1,
            importance_weight: logged.importance_weight,
        });
    }
    if reports.is_empty() {
        bail!("no log records found in {}", input.display());
    }

    let mut residuals = collect_residuals(&reports, kind).map_err(|e| anyhow!("{e}"))?;
    if let Some((lo, hi)) = iteration_range {
        let run_id = input
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| input.display().to_string());
        residuals = residuals.with_provenance(run_id, lo, hi);
    }
    let values = residuals.values.clone();
    let count = values.len();

    let shapiro_json = if count < 3 {
        "\"insufficient sample\"".to_string()
    } else if values.iter().all(|v| *v == values[0]) {
        "\"degenerate sample\"".to_string()
    } else {
        let (w, p) = shapiro_wilk_capped(&values, seed).map_err(|e| anyhow!("{e}"))?;
        format!("{{\"w\":{},\"p\":{}}}", format_f64(w), format_f64(p))
    };

    let mean = values.iter().sum::<f64>() / count as f64;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
    let ks_json = if variance <= 0.0 {
        "\"degenerate sample\"".to_string()
    } else {
        let (d, p) = kolmogorov_smirnov(&values, mean, variance).map_err(|e| anyhow!("{e}"))?;
        format!(
            "{{\"d\":{},\"p\":{},\"reference_mean\":{},\"reference_variance\":{}}}",
            format_f64(d),
            format_f64(p),
            format_f64(mean),
            format_f64(variance)
        )
    };

    let decile_table = if raw_complete && !raw_groups.is_empty() {
        Some(noise_correctness_summary(&raw_groups).map_err(|e| anyhow!("{e}"))?)
    } else {
        None
    };
    let decile_json = match &decile_table {
        Some(table) => {
            let rows: Vec<String> = table
                .iter()
                .map(|bin| {
                    format!(
                        "{{\"lo\":{},\"hi\":{},\"count\":{},\"mean_raw\":{},\"mean_normalized\":{}}}",
                        format_f64(bin.lo),
                        format_f64(bin.hi),
                        bin.count,
                        format_f64(bin.mean_raw),
                        format_f64(bin.mean_normalized)
                    )
                })
                .collect();
            format!("[{}]", rows.join(","))
        }
        None => "null".to_string(),
    };

    let provenance_json = match &residuals.provenance {
        Some(p) => format!(
            "{{\"run_id\":{},\"first_iteration\":{},\"last_iteration\":{}}}",
            serde_json::to_string(&p.run_id).expect("strings always serialize"),
            p.first_iteration,
            p.last_iteration
        ),
        None => "null".to_string(),
    };

    writeln!(
        out,
        "{{\"residual_kind\":\"{}\",\"residual_count\":{},\"provenance\":{},\"shapiro_wilk\":{},\"kolmogorov_smirnov\":{},\"noise_correctness\":{}}}",
        residuals.kind.label(),
        count,
        provenance_json,
        shapiro_json,
        ks_json,
        decile_json
    )?;

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating export directory {}", dir.display()))?;

        let pairs = qq_pairs(&values).map_err(|e| anyhow!("{e}"))?;
        let mut qq_csv = String::from("theoretical,sample\n");
        for (theoretical, sample) in pairs {
            qq_csv.push_str(&format!(
                "{},{}\n",
                format_f64(theoretical),
                format_f64(sample)
            ));
        }
        fs::write(dir.join("qq.csv"), qq_csv).context("writing qq.csv")?;

        let hist = histogram(&values, bins).map_err(|e| anyhow!("{e}"))?;
        let mut hist_csv = String::from("lo,hi,count\n");
        for bin in hist {
            hist_csv.push_str(&format!(
                "{},{},{}\n",
                format_f64(bin.lo),
                format_f64(bin.hi),
                bin.count
            ));
        }
        fs::write(dir.join("histogram.csv"), hist_csv).context("writing histogram.csv")?;

        if let Some(table) = &decile_table {
            let mut csv = String::from("lo,hi,count,mean_raw,mean_normalized\n");
            for bin in table {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    format_f64(bin.lo),
                    format_f64(bin.hi),
                    bin.count,
                    format_f64(bin.mean_raw),
                    format_f64(bin.mean_normalized)
                ));
            }
            fs::write(dir.join("deciles.csv"), csv).context("writing deciles.csv")?;
        }
    }
    Ok(())
}

/// Applies forward noising to an NGT1 tensor file.
pub fn cmd_noise(
    input: &Path,
    output: &Path,
    level: f64,
    steps: usize,
    seed: u64,
    quiet: bool,
) -> Result<()> {
    let tensor = read_tensor(input)?;
    let schedule = NoiseSchedule::linear(steps).map_err(|e| anyhow!("{e}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noised =
        forward_noise(&tensor.data, level, &schedule, &mut rng).map_err(|e| anyhow!("{e}"))?;
    let element_count = noised.len();
    write_tensor(
        output,
        &Tensor {
            dims: tensor.dims,
            data: noised,
        },
    )?;
    if !quiet {
        eprintln!(
            "noised {element_count} elements at level {level} -> {}",
            output.display()
        );
    }
    Ok(())
}
