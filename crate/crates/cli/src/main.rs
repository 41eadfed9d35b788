//! `bohr`: build families, witnesses and audit reports from the command line.
//!
//! Exit codes: 0 when everything passes, 1 when an audit fails or a witness
//! cannot be certified, 2 on bad flags or an unusable configuration.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use bohr_core::audit::{self, AuditReport, SamplingPolicy};
use bohr_core::circle::{Precision, UAngle};
use bohr_core::family::{self, FamilyConfig, ScheduleHints, SetFamily, Track, UnionPick};
use bohr_core::klapprox::{self, CalibrationConfig};
use bohr_core::serial::parse_ratio;
use bohr_core::witness::{self, WitnessAngle};
use clap::{Args, Parser, Subcommand};
use num_bigint::BigUint;
use num_rational::BigRational;

#[derive(Parser)]
#[command(
    name = "bohr",
    version,
    about = "Explicit r-Bohr families and their certification"
)]
struct Cli {
    /// Worker threads for audits (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    #[arg(long, default_value = "empirical")]
    track: Track,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    precision_bits: u32,
    #[arg(long, default_value_t = 4096)]
    precision_cap: u32,
    /// Denominator bound of the empirical constant search.
    #[arg(long, default_value_t = 64)]
    grid_denom_max: u64,
    #[arg(long, value_parser = parse_ratio)]
    c1: Option<BigRational>,
    #[arg(long, value_parser = parse_ratio)]
    c2: Option<BigRational>,
    #[arg(long, value_parser = parse_ratio)]
    c3: Option<BigRational>,
    #[arg(long, value_parser = parse_ratio)]
    c4: Option<BigRational>,
}

impl ConfigArgs {
    fn config(&self) -> FamilyConfig {
        let mut cfg = FamilyConfig {
            track: self.track,
            seed: self.seed,
            precision_bits: self.precision_bits,
            precision_cap: self.precision_cap,
            grid_denom_max: self.grid_denom_max,
            ..Default::default()
        };
        for (r, c) in [(1, &self.c1), (2, &self.c2), (3, &self.c3), (4, &self.c4)] {
            if let Some(c) = c {
                cfg.c.insert(r, c.clone());
            }
        }
        cfg
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a family manifest.
    Build {
        #[arg(long)]
        r: u32,
        #[arg(long, default_value_t = 4)]
        stages: u32,
        /// Lower bound on H_1.
        #[arg(long)]
        h1_min: Option<BigUint>,
        /// Per-stage ε overrides, comma separated.
        #[arg(long, value_delimiter = ',', value_parser = parse_ratio)]
        epsilons: Vec<BigRational>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stage constants for one (r, ε, L).
    Params {
        #[arg(long)]
        r: u32,
        #[arg(long, value_parser = parse_ratio)]
        epsilon: BigRational,
        #[arg(long, default_value = "1")]
        l: BigUint,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Witness angles of a family, with their verification.
    Witness {
        #[arg(long)]
        family: PathBuf,
        #[arg(long, default_value = "1/2", value_parser = parse_ratio)]
        delta: BigRational,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recurrence hits over all rational tuples with bounded denominators.
    AuditRecurrence {
        #[arg(long)]
        family: PathBuf,
        #[arg(long, default_value_t = 64)]
        denom_max: u64,
        /// Tuple length (default: the family's r).
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Witness separation on the family's blocks.
    AuditNonrecurrence {
        #[arg(long)]
        family: PathBuf,
        /// Witnesses as written by `witness` (default: built from the family).
        #[arg(long)]
        witnesses: Option<PathBuf>,
        #[arg(long, default_value = "1/2", value_parser = parse_ratio)]
        delta: BigRational,
        /// Number of stages to audit (default: all).
        #[arg(long)]
        depth: Option<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200_000)]
        full_limit: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-dimensional trichotomy sweep.
    AuditTrichotomy {
        #[arg(long, default_value = "1/2", value_parser = parse_ratio)]
        epsilon2: BigRational,
        #[arg(long, default_value = "2")]
        l: BigUint,
        #[arg(long, default_value_t = 12)]
        denom_max: u64,
        #[arg(long = "h", value_delimiter = ',', default_value = "1,2")]
        hs: Vec<BigUint>,
        /// Scale δ₂ (negative control).
        #[arg(long, value_parser = parse_ratio)]
        delta2_factor: Option<BigRational>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Independence condition implies a hit, on seeded random instances.
    AuditKl {
        #[arg(long, default_value_t = 2)]
        r: usize,
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[arg(long, default_value_t = 30)]
        denom_max: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Constant under test (default: the calibrated c_r).
        #[arg(long, value_parser = parse_ratio)]
        c: Option<BigRational>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate c_r from seeded random instances.
    Calibrate {
        #[arg(long, default_value_t = 2)]
        r: usize,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 30)]
        denom_max: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Union of one stage from each family, optionally audited.
    Union {
        /// Family manifests.
        #[arg(long = "family", required = true)]
        families: Vec<PathBuf>,
        /// Picks as `r:stage` or `r:stage:j_min`, in increasing order.
        #[arg(long = "pick", required = true, value_parser = parse_pick)]
        picks: Vec<UnionPick>,
        /// Audit recurrence per part over this denominator bound.
        #[arg(long)]
        denom_max: Option<u64>,
        #[arg(long, default_value_t = 1_000_000)]
        enum_limit: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integers n ≤ n_max with some |λ_j^n + 1| < δ.
    Katznelson {
        /// Angles as p/q turns, comma separated.
        #[arg(long, value_delimiter = ',', required = true, value_parser = parse_angle)]
        theta: Vec<UAngle>,
        #[arg(long, value_parser = parse_ratio)]
        delta: BigRational,
        #[arg(long)]
        n_max: u64,
        #[arg(long, default_value_t = 128)]
        precision_bits: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_angle(s: &str) -> Result<UAngle, String> {
    parse_ratio(s)
        .map(|q| UAngle::from_ratio(&q))
        .map_err(|e| e.to_string())
}

fn parse_pick(s: &str) -> Result<UnionPick, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| t.parse::<u32>().map_err(|e| format!("{t}: {e}"));
    match parts.as_slice() {
        [r, n] => Ok(UnionPick {
            r: num(r)?,
            stage: num(n)?,
            j_min: BigUint::from(1u32),
        }),
        [r, n, j] => Ok(UnionPick {
            r: num(r)?,
            stage: num(n)?,
            j_min: j.parse().map_err(|e| format!("{j}: {e}"))?,
        }),
        _ => Err(format!("expected r:stage[:j_min], got {s}")),
    }
}

/// A failure and the exit code it maps to.
struct Failure(u8, String);

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure(2, e.to_string())
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_family(path: &PathBuf) -> Result<SetFamily, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    SetFamily::from_json(&text).map_err(usage)
}

/// Writes the report and turns failures into exit code 1.
fn finish(report: &AuditReport, out: &Option<PathBuf>) -> Result<(), Failure> {
    emit(out, &report.to_jsonl())?;
    if out.is_some() {
        println!("{}", report.summary());
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure(
            1,
            format!("{} audit instance(s) failed", report.fail_count),
        ))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(j) = cli.jobs {
        rayon_threads(j)?;
    }
    match cli.cmd {
        Cmd::Build {
            r,
            stages,
            h1_min,
            epsilons,
            cfg,
            out,
        } => {
            let hints = ScheduleHints {
                epsilons,
                l_min: Vec::new(),
                h1_min,
            };
            let fam = family::build_family(r, stages, &hints, &cfg.config()).map_err(usage)?;
            emit(&out, &fam.to_json())
        }
        Cmd::Params {
            r,
            epsilon,
            l,
            cfg,
            out,
        } => {
            let p = family::stage_params(r, &epsilon, &l, &cfg.config()).map_err(usage)?;
            emit(
                &out,
                &serde_json::to_string_pretty(&p).expect("params serialize"),
            )
        }
        Cmd::Witness { family, delta, out } => {
            let fam = load_family(&family)?;
            let ws = witness::all_witnesses(&fam).map_err(|e| Failure(1, e.to_string()))?;
            let prec = fam.config.prec();
            let mut passed = true;
            let mut checks = Vec::new();
            for w in &ws {
                let v = witness::verify_witness(w, &fam, &delta, prec)
                    .map_err(|e| Failure(1, e.to_string()))?;
                passed &= v.passed;
                checks.push(v);
            }
            let doc = serde_json::json!({ "witnesses": ws, "verification": checks });
            emit(
                &out,
                &serde_json::to_string_pretty(&doc).expect("witnesses serialize"),
            )?;
            if passed {
                Ok(())
            } else {
                Err(Failure(1, "witness verification failed".into()))
            }
        }
        Cmd::AuditRecurrence {
            family,
            denom_max,
            r,
            out,
        } => {
            let fam = load_family(&family)?;
            let r = r.unwrap_or(fam.r as usize);
            let rep =
                audit::grid_audit(&fam, r, denom_max, None, fam.config.prec()).map_err(usage)?;
            finish(&rep, &out)
        }
        Cmd::AuditNonrecurrence {
            family,
            witnesses,
            delta,
            depth,
            seed,
            full_limit,
            out,
        } => {
            let fam = load_family(&family)?;
            let depth = depth.unwrap_or(fam.stages.len() as u32);
            let policy = SamplingPolicy {
                seed,
                full_limit,
                ..Default::default()
            };
            let prec = fam.config.prec();
            let rep = match witnesses {
                Some(p) => {
                    let text = fs::read_to_string(&p)
                        .map_err(|e| usage(format!("{}: {e}", p.display())))?;
                    let ws = parse_witnesses(&text).map_err(usage)?;
                    audit::nonrecurrence_audit(&fam, &ws, &delta, depth, &policy, prec)
                }
                None => audit::nonrecurrence_audit_family(&fam, &delta, depth, &policy, prec),
            }
            .map_err(usage)?;
            finish(&rep, &out)
        }
        Cmd::AuditTrichotomy {
            epsilon2,
            l,
            denom_max,
            hs,
            delta2_factor,
            cfg,
            out,
        } => {
            let cfg = cfg.config();
            let c2 = cfg.c_for(2);
            let rep = audit::trichotomy_audit(
                &epsilon2,
                &l,
                &c2,
                denom_max,
                &hs,
                delta2_factor.as_ref(),
                &cfg,
            )
            .map_err(usage)?;
            finish(&rep, &out)
        }
        Cmd::AuditKl {
            r,
            trials,
            denom_max,
            seed,
            c,
            out,
        } => {
            let c = c.unwrap_or_else(|| klapprox::default_c(r));
            let rep = audit::kl_soundness_audit(
                r,
                trials,
                denom_max,
                seed,
                &c,
                &CalibrationConfig::soundness(),
                Precision::default(),
            )
            .map_err(usage)?;
            finish(&rep, &out)
        }
        Cmd::Calibrate {
            r,
            trials,
            denom_max,
            seed,
            out,
        } => {
            let rep = klapprox::calibrate_c(
                r,
                trials,
                denom_max,
                seed,
                &CalibrationConfig::default(),
                Precision::default(),
            )
            .map_err(usage)?;
            emit(
                &out,
                &serde_json::to_string_pretty(&rep).expect("report serializes"),
            )
        }
        Cmd::Union {
            families,
            picks,
            denom_max,
            enum_limit,
            out,
        } => {
            let fams = families
                .iter()
                .map(load_family)
                .collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<&SetFamily> = fams.iter().collect();
            let u = family::bohr_union(&refs, &picks).map_err(usage)?;
            match denom_max {
                None => emit(
                    &out,
                    &serde_json::to_string_pretty(&u).expect("union serializes"),
                ),
                Some(d) => {
                    let rep = audit::union_audit(&u, d, enum_limit, Precision::default())
                        .map_err(usage)?;
                    finish(&rep, &out)
                }
            }
        }
        Cmd::Katznelson {
            theta,
            delta,
            n_max,
            precision_bits,
            out,
        } => {
            let k = family::katznelson_set(
                &theta,
                &delta,
                n_max,
                Precision::with_start(precision_bits),
            )
            .map_err(usage)?;
            emit(
                &out,
                &serde_json::to_string_pretty(&k).expect("set serializes"),
            )
        }
    }
}

/// Accepts the `witness` command's output or a bare list.
fn parse_witnesses(text: &str) -> Result<Vec<WitnessAngle>, String> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let list = v.get("witnesses").cloned().unwrap_or(v);
    serde_json::from_value(list).map_err(|e| e.to_string())
}

fn rayon_threads(n: usize) -> Result<(), Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(usage)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("bohr: {msg}");
            ExitCode::from(code)
        }
    }
}
