//! Command-line driver: single solves, wavelength sweeps and oracle checks.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dtn::DtnCache;
use crate::error::{Error, Result};
use crate::march::{solve_with_cache, SolveResult};
use crate::model::{parse_problem, WaveguideProblem};
use crate::oracle::direct_solve;

pub const SWEEP_HEADER: &str = "lambda_um,flux_incident,flux_reflected,flux_transmitted,norm_left_outgoing,norm_right_outgoing,maps_built,cache_hits,status";
pub const RESULT_HEADER: &str = "interface,z_um,norm,net_flux";
pub const DEFAULT_VERIFY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(
    name = "dtn-waveguide",
    version,
    about = "DtN-map marching solver for piecewise uniform waveguides"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem and write result.csv / summary.csv.
    Solve(SolveArgs),
    /// Sweep the vacuum wavelength and write one CSV row per point.
    Sweep(SweepArgs),
    /// Compare the marching solver with the direct global solve.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one field_zNNN.csv per interface.
    #[arg(long)]
    pub dump_fields: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub lambda_min: f64,
    #[arg(long)]
    pub lambda_max: f64,
    #[arg(long)]
    pub steps: usize,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, hide = true, default_value_t = DEFAULT_VERIFY_TOLERANCE)]
    pub tolerance: f64,
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Solve(a) => {
            let r = run_solve(&a.config, &a.out, a.dump_fields)?;
            println!(
                "solved {} segments: reflected norm {:.6e}, transmitted norm {:.6e}, maps built {}",
                r.z.len() - 1,
                r.norm_left_outgoing(),
                r.norm_right_outgoing(),
                r.diagnostics.maps_built
            );
            for w in &r.diagnostics.warnings {
                eprintln!("warning: {w}");
            }
            Ok(0)
        }
        Command::Sweep(a) => {
            let spec = SweepSpec::new(a.lambda_min, a.lambda_max, a.steps)?;
            let rows = run_sweep(&a.config, &spec, &a.out, a.jobs)?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            println!("swept {} wavelengths, {failed} failed", rows.len());
            Ok(0)
        }
        Command::Verify(a) => {
            let report = run_verify(&a.config)?;
            println!(
                "max relative interface-field discrepancy: {:.3e}",
                report.discrepancy
            );
            if report.discrepancy <= a.tolerance {
                Ok(0)
            } else {
                eprintln!("discrepancy exceeds tolerance {:.1e}", a.tolerance);
                Ok(1)
            }
        }
    }
}

/// Reads and parses a configuration file; returns the problem and the SHA-256 of the file.
pub fn load_config(path: &Path) -> Result<(WaveguideProblem, String)> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e))?;
    let hash = hex::encode(Sha256::digest(text.as_bytes()));
    Ok((parse_problem(&text)?, hash))
}

pub fn run_solve(config: &Path, out_dir: &Path, dump_fields: bool) -> Result<SolveResult> {
    let (problem, hash) = load_config(config)?;
    let result = solve_with_cache(&problem, &DtnCache::new())?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("result.csv"), result_csv(&result))?;
    let row = SweepRow::from_result(problem.wavelength(), &result);
    fs::write(
        out_dir.join("summary.csv"),
        sweep_csv(std::slice::from_ref(&row)),
    )?;
    if dump_fields {
        for j in 0..result.z.len() {
            fs::write(
                out_dir.join(format!("field_z{j:03}.csv")),
                field_csv(&result, j, &hash),
            )?;
        }
    }
    Ok(result)
}

pub fn result_csv(r: &SolveResult) -> String {
    let mut s = String::from(RESULT_HEADER);
    s.push('\n');
    for j in 0..r.z.len() {
        let _ = writeln!(
            s,
            "{j},{:.12e},{:.12e},{:.12e}",
            r.z[j], r.norms[j], r.net_flux[j]
        );
    }
    s
}

pub fn field_csv(r: &SolveResult, interface: usize, config_hash: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# config_sha256: {config_hash}");
    let _ = writeln!(s, "# solver: dtn-waveguide {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "# interface: {interface}");
    s.push_str("x,z,re_u,im_u\n");
    let z = r.z[interface];
    for (x, u) in r.x.iter().zip(&r.u_at_interfaces[interface]) {
        let _ = writeln!(s, "{x:.12e},{z:.12e},{:.12e},{:.12e}", u.re, u.im);
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub steps: usize,
}

impl SweepSpec {
    pub fn new(lambda_min: f64, lambda_max: f64, steps: usize) -> Result<Self> {
        if !(lambda_min > 0.0 && lambda_min.is_finite()) {
            return Err(Error::config("lambda-min", "must be positive"));
        }
        if !(lambda_max > lambda_min && lambda_max.is_finite()) {
            return Err(Error::config("lambda-max", "must exceed lambda-min"));
        }
        if steps == 0 {
            return Err(Error::config("steps", "must be at least 1"));
        }
        Ok(SweepSpec {
            lambda_min,
            lambda_max,
            steps,
        })
    }

    /// Uniform samples including both ends; a single step samples `lambda_min`.
    pub fn wavelengths(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.lambda_min];
        }
        let span = self.lambda_max - self.lambda_min;
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.lambda_max
                } else {
                    self.lambda_min + span * i as f64 / (self.steps - 1) as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda_um: f64,
    pub flux_incident: f64,
    pub flux_reflected: f64,
    pub flux_transmitted: f64,
    pub norm_left_outgoing: f64,
    pub norm_right_outgoing: f64,
    pub maps_built: usize,
    pub cache_hits: usize,
    pub status: String,
}

impl SweepRow {
    pub fn from_result(lambda_um: f64, r: &SolveResult) -> Self {
        let f = |v: Option<f64>| v.unwrap_or(f64::NAN);
        SweepRow {
            lambda_um,
            flux_incident: f(r.incident_flux.flux),
            flux_reflected: f(r.reflected_flux.flux),
            flux_transmitted: f(r.transmitted_flux.flux),
            norm_left_outgoing: r.norm_left_outgoing(),
            norm_right_outgoing: r.norm_right_outgoing(),
            maps_built: r.diagnostics.maps_built,
            cache_hits: r.diagnostics.cache_hits,
            status: "ok".into(),
        }
    }

    pub fn failed(lambda_um: f64, e: &Error) -> Self {
        let message: String = e
            .to_string()
            .chars()
            .map(|c| {
                if c == ',' || c == '\n' || c == '"' {
                    ';'
                } else {
                    c
                }
            })
            .collect();
        SweepRow {
            lambda_um,
            flux_incident: f64::NAN,
            flux_reflected: f64::NAN,
            flux_transmitted: f64::NAN,
            norm_left_outgoing: f64::NAN,
            norm_right_outgoing: f64::NAN,
            maps_built: 0,
            cache_hits: 0,
            status: format!("failed: {message}"),
        }
    }

    /// `R = P_refl / P_in` when both fluxes are defined.
    pub fn reflectance(&self) -> f64 {
        self.flux_reflected / self.flux_incident
    }

    pub fn transmittance(&self) -> f64 {
        self.flux_transmitted / self.flux_incident
    }
}

/// Solves every wavelength of `spec`; rows come back in ascending wavelength.
pub fn sweep(problem: &WaveguideProblem, spec: &SweepSpec) -> Vec<SweepRow> {
    spec.wavelengths()
        .into_par_iter()
        .map(|lambda| {
            let p = problem.with_wavelength(lambda);
            match solve_with_cache(&p, &DtnCache::new()) {
                Ok(r) => SweepRow::from_result(lambda, &r),
                Err(e) => SweepRow::failed(lambda, &e),
            }
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{}",
            r.lambda_um,
            r.flux_incident,
            r.flux_reflected,
            r.flux_transmitted,
            r.norm_left_outgoing,
            r.norm_right_outgoing,
            r.maps_built,
            r.cache_hits,
            r.status
        );
    }
    s
}

pub fn run_sweep(
    config: &Path,
    spec: &SweepSpec,
    out: &Path,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    let (problem, _) = load_config(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::numerical("thread pool", e))?;
    let rows = pool.install(|| sweep(&problem, spec));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(out, sweep_csv(&rows))?;
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub discrepancy: f64,
    pub marched: SolveResult,
    pub direct: SolveResult,
}

pub fn run_verify(config: &Path) -> Result<VerifyReport> {
    let (problem, _) = load_config(config)?;
    let direct = direct_solve(&problem)?;
    let marched = solve_with_cache(&problem, &DtnCache::new())?;
    Ok(VerifyReport {
        discrepancy: marched.max_interface_discrepancy(&direct),
        marched,
        direct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wavelengths_include_both_ends() {
        let s = SweepSpec::new(1.0, 1.8, 5).unwrap();
        let w = s.wavelengths();
        assert_eq!(w.len(), 5);
        assert_eq!(w[0], 1.0);
        assert_eq!(w[4], 1.8);
        assert!((w[2] - 1.4).abs() < 1e-15);
        assert_eq!(
            SweepSpec::new(1.0, 1.8, 1).unwrap().wavelengths(),
            vec![1.0]
        );
    }

    #[test]
    fn bad_sweeps_are_config_errors() {
        for (a, b, n) in [(1.8, 1.0, 3), (1.0, 1.0, 3), (1.0, 2.0, 0), (-1.0, 2.0, 3)] {
            assert_eq!(SweepSpec::new(a, b, n).unwrap_err().exit_code(), 2);
        }
    }

    #[test]
    fn failed_rows_keep_the_column_count() {
        let row = SweepRow::failed(1.2, &Error::numerical("a, b", "x\ny"));
        let csv = sweep_csv(&[row]);
        let line = csv.lines().nth(1).unwrap();
        assert_eq!(line.split(',').count(), SWEEP_HEADER.split(',').count());
        assert!(line.contains("failed"));
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run_from(["dtn-waveguide", "solve"]), 2);
        assert_eq!(run_from(["dtn-waveguide", "frobnicate"]), 2);
    }
}
