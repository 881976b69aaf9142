//! Command-line experiment runner: one subcommand per pipeline stage, CSV
//! outputs plus a JSON manifest per run so results are reproducible byte for
//! byte.

use crate::config::Config;
use crate::error::{Error, Result};
use crate::manifest::RunManifest;
use crate::model::ModelSpec;
use crate::noncompact::{self, CoupledState};
use crate::stability::{self, Stability};
use crate::threshold::{self, MonotoneFamily, ThresholdOutcome, Verdict};
use crate::volterra::{self, InitialDistribution};
use crate::{characteristics, delaycheck};
use clap::{Parser, Subcommand};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "renewal-lab", version, about = "Renewal-equation laboratory for bistable age-structured populations")]
pub struct Cli {
    /// Model configuration (TOML with [mortality], [birth_rate], [birth_function])
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for CSV files and the run manifest
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Seed recorded in the manifest for randomized sweeps
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Check every model assumption and print PASS/FAIL per item
    Validate,
    /// Solve the renewal equation and write t,b,B
    Simulate {
        #[arg(long, default_value = "step:0,3,1")]
        u0: String,
        #[arg(long, short = 'T', default_value_t = 100.0)]
        horizon: f64,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Reconstructed age-density snapshots, one a,u file per requested time
    Density {
        #[arg(long, default_value = "step:0,3,1")]
        u0: String,
        /// Comma-separated snapshot times
        #[arg(long, default_value = "0,5,20")]
        times: String,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// L1 norm and distances to the three equilibria over time
    Norms {
        #[arg(long, default_value = "step:0,3,1")]
        u0: String,
        #[arg(long, short = 'T', default_value_t = 100.0)]
        horizon: f64,
        #[arg(long)]
        delta: Option<f64>,
        /// Write every n-th grid point
        #[arg(long, default_value_t = 16)]
        stride: usize,
    },
    /// Equilibrium classification table and the unstable growth rate
    Stability,
    /// Bisection for the critical scaling of an initial profile
    Threshold {
        #[arg(long, default_value = "step:0,3,1")]
        profile: String,
        #[arg(long, default_value_t = 1e-3)]
        width: f64,
        #[arg(long, short = 'T', default_value_t = 200.0)]
        horizon: f64,
        /// Horizon of the diagnostic midpoint run
        #[arg(long, default_value_t = 400.0)]
        t_long: f64,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Fate verdicts over a grid of scalings
    Sweep {
        #[arg(long, default_value = "step:0,3,1")]
        profile: String,
        #[arg(long, default_value_t = 0.0)]
        lambda_min: f64,
        #[arg(long, default_value_t = 2.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[arg(long, short = 'T', default_value_t = 200.0)]
        horizon: f64,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Coupled old-age system: solve, equivalence check or threshold
    Noncompact {
        #[arg(long, value_parser = ["solve", "equivalence", "threshold"])]
        mode: String,
        /// Initial old-age mass (solve/threshold modes)
        #[arg(long)]
        alpha: Option<f64>,
        /// Constant birth history level (solve/threshold modes)
        #[arg(long)]
        b0: Option<f64>,
        /// Initial age distribution (equivalence mode)
        #[arg(long, default_value = "equilibrium:1.5")]
        u0: String,
        #[arg(long, default_value_t = 1e-3)]
        width: f64,
        #[arg(long, short = 'T', default_value_t = 200.0)]
        horizon: f64,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Triple cross-check of the delay-equation reduction
    DelayCompare {
        #[arg(long, default_value = "equilibrium:1.5")]
        u0: String,
        #[arg(long, short = 'T', default_value_t = 100.0)]
        horizon: f64,
        #[arg(long)]
        delta: Option<f64>,
    },
}

pub fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Extinct => "extinct",
        Verdict::Persistent => "persistent",
        Verdict::Undecided => "undecided",
    }
}

fn parse_u0(s: &str) -> Result<InitialDistribution> {
    if s == "zero" {
        return Ok(InitialDistribution::zero());
    }
    if let Some(c) = s.strip_prefix("equilibrium:") {
        let c: f64 = c.parse().map_err(|_| Error::Config(format!("bad u0 `{s}`")))?;
        return InitialDistribution::scaled_survival(c);
    }
    if let Some(body) = s.strip_prefix("step:") {
        let mut pieces = Vec::new();
        for part in body.split(';') {
            let nums: Vec<f64> = part
                .split(',')
                .map(|x| x.parse().map_err(|_| Error::Config(format!("bad u0 `{s}`"))))
                .collect::<Result<_>>()?;
            if nums.len() != 3 {
                return Err(Error::Config(format!("bad u0 `{s}`: step pieces are lo,hi,value")));
            }
            pieces.push((nums[0], nums[1], nums[2]));
        }
        return InitialDistribution::step(pieces);
    }
    if let Some(body) = s.strip_prefix("sampled:") {
        let (step, values) = body
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("bad u0 `{s}`: sampled:step:v0,v1,...")))?;
        let step: f64 = step.parse().map_err(|_| Error::Config(format!("bad u0 `{s}`")))?;
        let values: Vec<f64> = values
            .split(',')
            .map(|x| x.parse().map_err(|_| Error::Config(format!("bad u0 `{s}`"))))
            .collect::<Result<_>>()?;
        return InitialDistribution::sampled(step, values);
    }
    Err(Error::Config(format!(
        "bad u0 `{s}`: expected zero | equilibrium:c | step:lo,hi,v[;...] | sampled:step:v0,v1,..."
    )))
}

fn parse_times(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| Error::Config(format!("bad time list `{s}`"))))
        .collect()
}

fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io(_) => 64,
        Error::ComparisonViolation { .. }
        | Error::FixedPointDiverged(_)
        | Error::MarginalStability => 2,
        _ => 1,
    }
}

/// Parses the command line and runs it; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(cli: &Cli) -> Result<(String, Config)> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config <file> is required".into()))?;
    let text = std::fs::read_to_string(path)?;
    let config = Config::parse(&text)?;
    Ok((text, config))
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let (config_text, config) = load_config(cli)?;
    std::fs::create_dir_all(&cli.out)?;

    if let Cmd::Validate = cli.cmd {
        return validate(&config);
    }

    let spec = config.build()?;
    let mut manifest = RunManifest::new(subcommand_name(&cli.cmd), &config_text);
    manifest.seed = cli.seed;

    match &cli.cmd {
        Cmd::Validate => unreachable!(),
        Cmd::Simulate { u0, horizon, delta } => {
            let delta = delta.unwrap_or_else(|| spec.default_delta());
            let u0_parsed = parse_u0(u0)?;
            let traj = volterra::solve_b(&spec, &u0_parsed, *horizon, delta)?;
            let path = cli.out.join("trajectory.csv");
            let big = traj.big_b.as_ref().expect("solve_b stores B");
            write_csv(
                &path,
                "t,b,B",
                traj.times()
                    .zip(traj.b.iter().zip(big))
                    .map(|(t, (b, bb))| format!("{t},{b},{bb}")),
            )?;
            manifest.param("u0", u0).param("horizon", horizon).param("delta", delta);
            manifest.output(&path);
        }
        Cmd::Density { u0, times, delta } => {
            let delta = delta.unwrap_or_else(|| spec.default_delta());
            let u0_parsed = parse_u0(u0)?;
            let times = parse_times(times)?;
            let t_max = times.iter().cloned().fold(0.0, f64::max).max(delta);
            let traj = volterra::solve_b(&spec, &u0_parsed, t_max, delta)?;
            for (i, &t) in times.iter().enumerate() {
                // snap to the nearest grid node
                let t = (t / delta).round() * delta;
                let d = characteristics::reconstruct(&spec, &u0_parsed, &traj, t)?;
                let path = cli.out.join(format!("density_{i}.csv"));
                write_csv(
                    &path,
                    "a,u",
                    d.ages.iter().zip(&d.values).map(|(a, u)| format!("{a},{u}")),
                )?;
                manifest.output(&path);
            }
            manifest.param("u0", u0).param("times", times.len()).param("delta", delta);
        }
        Cmd::Norms { u0, horizon, delta, stride } => {
            let delta = delta.unwrap_or_else(|| spec.default_delta());
            let u0_parsed = parse_u0(u0)?;
            let traj = volterra::solve_b(&spec, &u0_parsed, *horizon, delta)?;
            let stride = (*stride).max(1);
            let mut rows = Vec::new();
            for n in (0..traj.b.len()).step_by(stride) {
                let t = n as f64 * delta;
                let d = characteristics::reconstruct(&spec, &u0_parsed, &traj, t)?;
                let l1 = characteristics::l1_norm(&d);
                let d0 = characteristics::l1_distance_to_equilibrium(&d, &spec, 0);
                let d1 = characteristics::l1_distance_to_equilibrium(&d, &spec, 1);
                let d2 = characteristics::l1_distance_to_equilibrium(&d, &spec, 2);
                rows.push(format!("{t},{l1},{d0},{d1},{d2}"));
            }
            let path = cli.out.join("norms.csv");
            write_csv(&path, "t,l1,dist0,dist1,dist2", rows)?;
            manifest
                .param("u0", u0)
                .param("horizon", horizon)
                .param("delta", delta)
                .param("stride", stride);
            manifest.output(&path);
        }
        Cmd::Stability => {
            println!("equilibrium  level      f'(level)  classification");
            for which in 0..3 {
                let level = spec.equilibrium_level(which);
                let slope = spec.f.derivative(level);
                let class = match stability::classify_stability(&spec, which)? {
                    Stability::Stable => "stable",
                    Stability::Unstable => "unstable",
                };
                println!("{which}            {level:<10.6} {slope:<10.6} {class}");
            }
            let root = stability::unstable_root(&spec)?;
            println!("unstable growth rate lambda_hat = {root:.12}");
            manifest.param("lambda_hat", root);
        }
        Cmd::Threshold { profile, width, horizon, t_long, delta } => {
            let delta = delta.unwrap_or_else(|| spec.default_delta());
            let family = MonotoneFamily::new(&spec, parse_u0(profile)?)?;
            let outcome = threshold::find_threshold(&spec, &family, *width, *horizon, delta)?;
            let path = cli.out.join("threshold.json");
            let json = threshold_json(&spec, &family, &outcome, *t_long, delta)?;
            std::fs::write(&path, json)?;
            manifest
                .param("profile", profile)
                .param("width", width)
                .param("horizon", horizon)
                .param("t_long", t_long)
                .param("delta", delta);
            manifest.output(&path);
            if let ThresholdOutcome::Bracket(res) = &outcome {
                let u0_mid = family.at(res.lambda_star);
                let traj = volterra::solve_b(&spec, &u0_mid, *t_long, delta)?;
                let csv = cli.out.join("threshold_midpoint.csv");
                write_csv(
                    &csv,
                    "t,b",
                    traj.times().zip(&traj.b).map(|(t, b)| format!("{t},{b}")),
                )?;
                manifest.output(&csv);
            }
        }
        Cmd::Sweep { profile, lambda_min, lambda_max, points, horizon, delta } => {
            let delta = delta.unwrap_or_else(|| spec.default_delta());
            let family = MonotoneFamily::new(&spec, parse_u0(profile)?)?;
            let n = (*points).max(2);
            let lambdas: Vec<f64> = (0..n)
                .map(|i| lambda_min + (lambda_max - lambda_min) * i as f64 / (n - 1) as f64)
                .collect();
            let mut reports = threshold::fate_sweep(&spec, &family, &lambdas, *horizon, delta)?;
            reports.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let path = cli.out.join("sweep.csv");
            write_csv(
                &path,
                "lambda,verdict,trailing_min,trailing_max",
                reports.iter().map(|(lam, r)| {
                    format!("{lam},{},{},{}", verdict_name(r.verdict), r.trailing_min, r.trailing_max)
                }),
            )?;
            manifest
                .param("profile", profile)
                .param("lambda_min", lambda_min)
                .param("lambda_max", lambda_max)
                .param("points", n)
                .param("horizon", horizon)
                .param("delta", delta);
            manifest.output(&path);
        }
        Cmd::Noncompact { mode, alpha, b0, u0, width, horizon, delta } => {
            let (a0, _) = spec.beta.tail().ok_or(Error::RequiresEventuallyConstant)?;
            let delta = delta.unwrap_or(a0 / 64.0);
            manifest.param("mode", mode).param("horizon", horizon).param("delta", delta);
            match mode.as_str() {
                "solve" => {
                    let eq = noncompact::coupled_equilibria(&spec)?;
                    let alpha = alpha.unwrap_or(eq[2].0);
                    let b0 = b0.unwrap_or(eq[2].1);
                    let state = CoupledState::constant(&spec, delta, alpha, b0)?;
                    let traj = noncompact::solve_coupled(&spec, &state, *horizon, delta)?;
                    let path = cli.out.join("coupled.csv");
                    write_csv(
                        &path,
                        "t,I,b",
                        traj.i
                            .iter()
                            .zip(&traj.b)
                            .enumerate()
                            .map(|(n, (i, b))| format!("{},{i},{b}", n as f64 * delta)),
                    )?;
                    manifest.param("alpha", alpha).param("b0", b0);
                    manifest.output(&path);
                }
                "equivalence" => {
                    let u0_parsed = parse_u0(u0)?;
                    let report = noncompact::equivalence_check(&spec, &u0_parsed, *horizon, delta)?;
                    println!(
                        "max |b_full - b_coupled| = {:e}\nmax |I_full - I_coupled| = {:e}",
                        report.max_b_deviation, report.max_i_deviation
                    );
                    manifest
                        .param("u0", u0)
                        .param("max_b_deviation", report.max_b_deviation)
                        .param("max_i_deviation", report.max_i_deviation);
                }
                "threshold" => {
                    let eq = noncompact::coupled_equilibria(&spec)?;
                    let alpha = alpha.unwrap_or(eq[1].0);
                    let b0 = b0.unwrap_or(eq[1].1);
                    let base = CoupledState::constant(&spec, delta, alpha, b0)?;
                    let outcome = noncompact::coupled_threshold(&spec, &base, *width, *horizon, delta)?;
                    let path = cli.out.join("coupled_threshold.json");
                    std::fs::write(&path, outcome_json(&outcome))?;
                    manifest.param("alpha", alpha).param("b0", b0).param("width", width);
                    manifest.output(&path);
                }
                _ => unreachable!("clap restricts the mode values"),
            }
        }
        Cmd::DelayCompare { u0, horizon, delta } => {
            let (a0, _) = spec.beta.tail().ok_or_else(|| {
                Error::SpecShapeMismatch("delay-compare needs an eventually-constant birth rate".into())
            })?;
            let delta = delta.unwrap_or(a0 / 32.0);
            let u0_parsed = parse_u0(u0)?;
            let report = delaycheck::cross_validate(&spec, &u0_parsed, *horizon, delta)?;
            let path = cli.out.join("delay_compare.csv");
            write_csv(
                &path,
                "t,U_delay,U_characteristics,deviation",
                report
                    .rows
                    .iter()
                    .map(|(t, ud, uc, _)| format!("{t},{ud},{uc},{}", (ud - uc).abs())),
            )?;
            manifest
                .param("u0", u0)
                .param("horizon", horizon)
                .param("delta", delta)
                .param("max_delay_vs_characteristics", report.max_delay_vs_characteristics)
                .param("max_delay_vs_coupled", report.max_delay_vs_coupled);
            manifest.output(&path);
        }
    }
    manifest.write(&cli.out)?;
    Ok(0)
}

fn subcommand_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::Validate => "validate",
        Cmd::Simulate { .. } => "simulate",
        Cmd::Density { .. } => "density",
        Cmd::Norms { .. } => "norms",
        Cmd::Stability => "stability",
        Cmd::Threshold { .. } => "threshold",
        Cmd::Sweep { .. } => "sweep",
        Cmd::Noncompact { .. } => "noncompact",
        Cmd::DelayCompare { .. } => "delay-compare",
    }
}

fn validate(config: &Config) -> Result<i32> {
    let spec = match config.build() {
        Ok(s) => s,
        Err(e) => {
            println!("FAIL  model construction: {e}");
            return Ok(1);
        }
    };
    let report = spec.validate();
    for check in &report.checks {
        println!(
            "{}  {} (value = {})",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.value
        );
    }
    Ok(if report.passed() { 0 } else { 1 })
}

fn outcome_json(outcome: &ThresholdOutcome) -> String {
    match outcome {
        ThresholdOutcome::AllExtinct { lambda_max } => format!(
            "{{\n  \"kind\": \"all_extinct\",\n  \"lambda_max\": {lambda_max}\n}}\n"
        ),
        ThresholdOutcome::Bracket(res) => {
            let mut log = String::new();
            for (i, (lam, v)) in res.log.iter().enumerate() {
                if i > 0 {
                    log.push_str(",\n");
                }
                let _ = write!(log, "    {{\"lambda\": {lam}, \"verdict\": \"{}\"}}", verdict_name(*v));
            }
            format!(
                "{{\n  \"kind\": \"bracket\",\n  \"lo\": {},\n  \"hi\": {},\n  \"lambda_star\": {},\n  \"horizon\": {},\n  \"log\": [\n{log}\n  ]\n}}\n",
                res.lo, res.hi, res.lambda_star, res.horizon
            )
        }
    }
}

fn threshold_json(
    spec: &ModelSpec,
    family: &MonotoneFamily,
    outcome: &ThresholdOutcome,
    t_long: f64,
    delta: f64,
) -> Result<String> {
    let mut json = outcome_json(outcome);
    if let ThresholdOutcome::Bracket(res) = outcome {
        let hover = threshold::threshold_diagnostics(spec, family, res, t_long, delta)?;
        json.pop(); // trailing newline
        json.pop(); // closing brace
        let _ = write!(
            json,
            ",\n  \"diagnostics\": {{\n    \"hover_start\": {},\n    \"hover_end\": {},\n    \"hover_duration\": {},\n    \"trailing_b_min\": {},\n    \"trailing_b_max\": {},\n    \"dist_to_zero\": {},\n    \"dist_to_phi2\": {}\n  }}\n}}\n",
            hover.hover_start,
            hover.hover_end,
            hover.hover_duration,
            hover.trailing_b.0,
            hover.trailing_b.1,
            hover.dist_to_zero,
            hover.dist_to_phi2
        );
    }
    Ok(json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u0_grammar() {
        assert!(parse_u0("zero").is_ok());
        assert!(parse_u0("equilibrium:2").is_ok());
        assert!(parse_u0("step:0,3,1;4,5,0.5").is_ok());
        assert!(parse_u0("sampled:0.5:1,2,3").is_ok());
        assert!(matches!(parse_u0("nonsense"), Err(Error::Config(_))));
        assert!(matches!(parse_u0("step:0,3"), Err(Error::Config(_))));
    }
}
