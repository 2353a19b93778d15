//! Experiment configuration: an optional JSON file overlaid by command-line flags.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use lyakrylov::solvers::Method;
use serde::Deserialize;

use crate::problem::{GeneratorSpec, ProblemSource};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_K_MAX: usize = 50;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_OUT: &str = "lyakrylov-out";
/// Upper limit on the default iteration count when `--mmax` is not given.
pub const DEFAULT_M_MAX_LIMIT: usize = 500;

/// Flags shared by every subcommand. Each one overrides the matching config file key.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// JSON config file; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Generated problem, e.g. `laplacian_2d:100` or `conv_diff_3d:10:0.01`.
    #[arg(long)]
    pub problem: Option<String>,
    /// Matrix Market file holding `A`.
    #[arg(long)]
    pub matrix_file: Option<PathBuf>,
    /// Matrix Market array file holding `C`; seeded random when omitted.
    #[arg(long)]
    pub rhs_file: Option<PathBuf>,
    /// Methods, comma-separated or repeated: galerkin, pmr, mr, nks.
    #[arg(long = "method", visible_alias = "methods", value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Block size of the right-hand side; a comma-separated list for `sweep`.
    #[arg(long, value_delimiter = ',')]
    pub rank: Option<Vec<usize>>,
    /// Maximum number of block Arnoldi steps.
    #[arg(long = "mmax")]
    pub m_max: Option<usize>,
    /// Relative residual target.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Seed for generated right-hand sides and matrices.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Basis columns stored per restart cycle.
    #[arg(long = "memmax")]
    pub mem_max: Option<usize>,
    /// Relative compression threshold, or `off`.
    #[arg(long)]
    pub compress_tol: Option<String>,
    /// Maximum number of restart cycles.
    #[arg(long = "kmax")]
    pub k_max: Option<usize>,
    /// Output directory, created if needed.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for `sweep`.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Threshold {
    Value(f64),
    Word(String),
}

/// On-disk form. Unknown keys are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FileConfig {
    problem: Option<String>,
    matrix_file: Option<PathBuf>,
    rhs_file: Option<PathBuf>,
    methods: Option<Vec<String>>,
    rank: Option<OneOrMany>,
    m_max: Option<usize>,
    tol: Option<f64>,
    seed: Option<u64>,
    mem_max: Option<usize>,
    compress_tol: Option<Threshold>,
    k_max: Option<usize>,
    out: Option<PathBuf>,
    threads: Option<usize>,
}

/// Validated settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSource,
    /// Empty means the command's default.
    pub methods: Vec<Method>,
    pub ranks: Vec<usize>,
    pub seed: u64,
    pub m_max: Option<usize>,
    pub tol: f64,
    pub mem_max: Option<usize>,
    pub compress_tol: Option<f64>,
    pub k_max: usize,
    pub out: PathBuf,
    pub threads: usize,
}

impl ExperimentConfig {
    /// Reads the config file named by `flags.config`, applies the flags on top and validates.
    /// `default_problem` is used when neither a generator nor a matrix file is given.
    pub fn resolve(flags: &Overrides, default_problem: Option<&str>) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
                serde_json::from_str::<FileConfig>(&text).with_context(|| format!("invalid config {}", path.display()))?
            }
            None => FileConfig::default(),
        };

        let problem_spec = flags.problem.clone().or(file.problem);
        let matrix_file = flags.matrix_file.clone().or(file.matrix_file);
        let rhs_file = flags.rhs_file.clone().or(file.rhs_file);
        let problem = match (problem_spec, matrix_file) {
            (Some(_), Some(_)) => bail!("give either a generated problem or a matrix file, not both"),
            (Some(spec), None) => {
                if rhs_file.is_some() {
                    bail!("a right-hand side file requires a matrix file");
                }
                ProblemSource::Generator(spec.parse::<GeneratorSpec>()?)
            }
            (None, Some(matrix)) => ProblemSource::Files { matrix, rhs: rhs_file },
            (None, None) => match default_problem {
                Some(spec) if rhs_file.is_none() => ProblemSource::Generator(spec.parse::<GeneratorSpec>()?),
                Some(_) => bail!("a right-hand side file requires a matrix file"),
                None => bail!("no problem given: use --problem or --matrix-file"),
            },
        };

        let methods = flags
            .methods
            .clone()
            .or(file.methods)
            .unwrap_or_default()
            .iter()
            .map(|s| s.parse::<Method>().map_err(anyhow::Error::from))
            .collect::<Result<Vec<_>>>()?;

        let ranks = match (&flags.rank, file.rank) {
            (Some(r), _) => r.clone(),
            (None, Some(OneOrMany::One(r))) => vec![r],
            (None, Some(OneOrMany::Many(r))) => r,
            (None, None) => vec![1],
        };
        if ranks.is_empty() || ranks.contains(&0) {
            bail!("ranks must be a nonempty list of positive integers");
        }

        let m_max = flags.m_max.or(file.m_max);
        if m_max == Some(0) {
            bail!("mmax must be at least 1");
        }
        let tol = flags.tol.or(file.tol).unwrap_or(DEFAULT_TOL);
        if !(tol.is_finite() && tol > 0.0) {
            bail!("tol must be a positive number, got {tol}");
        }

        let compress_tol = match (&flags.compress_tol, file.compress_tol) {
            (Some(s), _) => parse_threshold(s)?,
            (None, Some(Threshold::Value(v))) => parse_threshold(&v.to_string())?,
            (None, Some(Threshold::Word(s))) => parse_threshold(&s)?,
            (None, None) => Some(f64::EPSILON),
        };

        let k_max = flags.k_max.or(file.k_max).unwrap_or(DEFAULT_K_MAX);
        if k_max == 0 {
            bail!("kmax must be at least 1");
        }
        let threads = flags.threads.or(file.threads).unwrap_or(1);
        if threads == 0 {
            bail!("threads must be at least 1");
        }

        Ok(Self {
            problem,
            methods,
            ranks,
            seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            m_max,
            tol,
            mem_max: flags.mem_max.or(file.mem_max),
            compress_tol,
            k_max,
            out: flags.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            threads,
        })
    }

    /// The single rank of a non-sweep command.
    pub fn rank(&self) -> Result<usize> {
        match self.ranks.as_slice() {
            [r] => Ok(*r),
            _ => bail!("this command takes a single rank, got {:?}", self.ranks),
        }
    }

    /// The single method of a one-run command, `default` when none was given.
    pub fn single_method(&self, default: Method) -> Result<Method> {
        match self.methods.as_slice() {
            [] => Ok(default),
            [m] => Ok(*m),
            _ => bail!("this command takes a single method; use `compare` for several"),
        }
    }

    /// `--mmax` or `min(ceil(n / r), 500)`.
    pub fn m_max_for(&self, n: usize, r: usize) -> usize {
        self.m_max.unwrap_or_else(|| n.div_ceil(r).clamp(1, DEFAULT_M_MAX_LIMIT))
    }
}

fn parse_threshold(s: &str) -> Result<Option<f64>> {
    match s.trim().to_ascii_lowercase().as_str() {
        "off" | "none" => Ok(None),
        t => {
            let v: f64 = t.parse().with_context(|| format!("compress tol must be a number or `off`, got `{s}`"))?;
            if !(v.is_finite() && v >= 0.0) {
                bail!("compress tol must be finite and nonnegative, got {v}");
            }
            Ok(Some(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        fs::write(f.path(), text).unwrap();
        f
    }

    #[test]
    fn flags_override_file_values() {
        let f = write(r#"{"problem": "laplacian_1d:20", "tol": 1e-3, "rank": [1, 2], "methods": ["pmr"]}"#);
        let flags = Overrides { config: Some(f.path().into()), tol: Some(1e-8), ..Overrides::default() };
        let cfg = ExperimentConfig::resolve(&flags, None).unwrap();
        assert_eq!(cfg.tol, 1e-8);
        assert_eq!(cfg.ranks, vec![1, 2]);
        assert_eq!(cfg.methods, vec![Method::Pmr]);
        assert_eq!(cfg.problem, ProblemSource::Generator(GeneratorSpec::Laplacian1d(20)));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let f = write(r#"{"problem": "laplacian_1d:20", "tolerance": 1e-3}"#);
        let flags = Overrides { config: Some(f.path().into()), ..Overrides::default() };
        let err = ExperimentConfig::resolve(&flags, None).unwrap_err();
        assert!(format!("{err:#}").contains("tolerance"));
    }

    #[test]
    fn defaults_and_validation() {
        let flags = Overrides { problem: Some("laplacian_2d:4".into()), ..Overrides::default() };
        let cfg = ExperimentConfig::resolve(&flags, None).unwrap();
        assert_eq!(cfg.tol, DEFAULT_TOL);
        assert_eq!(cfg.ranks, vec![1]);
        assert_eq!(cfg.m_max_for(16, 3), 6);
        assert!(ExperimentConfig::resolve(&Overrides::default(), None).is_err());
        let bad = Overrides { tol: Some(-1.0), ..flags.clone() };
        assert!(ExperimentConfig::resolve(&bad, None).is_err());
        let both = Overrides { matrix_file: Some("a.mtx".into()), ..flags };
        assert!(ExperimentConfig::resolve(&both, None).is_err());
    }

    #[test]
    fn compress_threshold_accepts_off() {
        assert_eq!(parse_threshold("off").unwrap(), None);
        assert_eq!(parse_threshold("1e-16").unwrap(), Some(1e-16));
        assert!(parse_threshold("-1").is_err());
        let f = write(r#"{"problem": "laplacian_1d:5", "compress_tol": "off", "rank": 2}"#);
        let cfg = ExperimentConfig::resolve(&Overrides { config: Some(f.path().into()), ..Overrides::default() }, None).unwrap();
        assert_eq!(cfg.compress_tol, None);
        assert_eq!(cfg.rank().unwrap(), 2);
    }
}
