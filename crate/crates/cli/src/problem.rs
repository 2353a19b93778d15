//! Test problems: named generators or Matrix Market files.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use lyakrylov::operators::{
    gen_bad_cond_diag, gen_conv_diff_3d, gen_laplacian_1d, gen_laplacian_2d, gen_log_diag, read_dense_matrix_market,
    read_sparse_matrix_market, seeded_block, BlockVector, SparseOperator,
};

/// A generator name with its parameters, written `name:param[:param]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneratorSpec {
    Laplacian1d(usize),
    /// Grid points per side.
    Laplacian2d(usize),
    /// Grid points per side and diffusion `eps`.
    ConvDiff3d(usize, f64),
    BadCondDiag(usize),
    LogDiag(usize),
}

impl GeneratorSpec {
    pub const NAMES: [&'static str; 5] = ["laplacian_1d", "laplacian_2d", "conv_diff_3d", "bad_cond_diag", "log_diag"];

    fn build(self, seed: u64) -> lyakrylov::Result<SparseOperator> {
        match self {
            Self::Laplacian1d(n) => gen_laplacian_1d(n),
            Self::Laplacian2d(g) => gen_laplacian_2d(g),
            Self::ConvDiff3d(g, eps) => gen_conv_diff_3d(g, eps),
            Self::BadCondDiag(n) => gen_bad_cond_diag(n),
            Self::LogDiag(n) => gen_log_diag(n, seed),
        }
    }
}

impl FromStr for GeneratorSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let size = |i: usize| -> Result<usize> {
            let v: usize = parts
                .get(i)
                .with_context(|| format!("problem `{s}` is missing its size"))?
                .parse()
                .with_context(|| format!("problem `{s}`: size must be a positive integer"))?;
            if v == 0 {
                bail!("problem `{s}`: size must be positive");
            }
            Ok(v)
        };
        let arity = |k: usize| -> Result<()> {
            if parts.len() != k + 1 {
                bail!("problem `{s}` takes {k} parameter(s)");
            }
            Ok(())
        };
        let spec = match parts[0] {
            "laplacian_1d" => Self::Laplacian1d(size(1)?),
            "laplacian_2d" => Self::Laplacian2d(size(1)?),
            "bad_cond_diag" => Self::BadCondDiag(size(1)?),
            "log_diag" => Self::LogDiag(size(1)?),
            "conv_diff_3d" => {
                arity(2)?;
                let eps: f64 = parts[2].parse().with_context(|| format!("problem `{s}`: eps must be a number"))?;
                return Ok(Self::ConvDiff3d(size(1)?, eps));
            }
            other => bail!("unknown problem `{other}`; expected one of {}", Self::NAMES.join(", ")),
        };
        arity(1)?;
        Ok(spec)
    }
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Laplacian1d(n) => write!(f, "laplacian_1d:{n}"),
            Self::Laplacian2d(g) => write!(f, "laplacian_2d:{g}"),
            Self::ConvDiff3d(g, eps) => write!(f, "conv_diff_3d:{g}:{eps}"),
            Self::BadCondDiag(n) => write!(f, "bad_cond_diag:{n}"),
            Self::LogDiag(n) => write!(f, "log_diag:{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    Generator(GeneratorSpec),
    Files { matrix: PathBuf, rhs: Option<PathBuf> },
}

impl fmt::Display for ProblemSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Generator(g) => g.fmt(f),
            Self::Files { matrix, .. } => write!(f, "{}", matrix.display()),
        }
    }
}

pub struct Problem {
    pub label: String,
    pub a: SparseOperator,
    pub c: BlockVector,
}

impl Problem {
    pub fn n(&self) -> usize {
        self.a.dim()
    }

    pub fn rank(&self) -> usize {
        self.c.width()
    }
}

/// Builds `A` and `C`. A right-hand side file fixes the rank; otherwise `C` is a seeded
/// uniform `n x rank` block.
pub fn load(source: &ProblemSource, rank: usize, seed: u64) -> Result<Problem> {
    let (a, rhs) = match source {
        ProblemSource::Generator(g) => (g.build(seed).with_context(|| format!("cannot build {g}"))?, None),
        ProblemSource::Files { matrix, rhs } => {
            let a = read_sparse_matrix_market(matrix).context("cannot load matrix")?;
            let c = match rhs {
                Some(path) => Some(read_dense_matrix_market(path).context("cannot load right-hand side")?),
                None => None,
            };
            (a, c)
        }
    };
    let c = match rhs {
        Some(m) => {
            if m.nrows() != a.dim() {
                bail!("right-hand side has {} rows but A has order {}", m.nrows(), a.dim());
            }
            BlockVector::new(m)?
        }
        None => seeded_block(a.dim(), rank, seed)?,
    };
    if c.width() > a.dim() {
        bail!("rank {} exceeds the problem order {}", c.width(), a.dim());
    }
    Ok(Problem { label: source.to_string(), a, c })
}
