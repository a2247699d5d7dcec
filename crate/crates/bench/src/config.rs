//! Sweep configuration, dataset specs and the shipped presets.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;
use vizbench_core::advection::AdvectStrategy;
use vizbench_core::field::{gen_impulse_image, gen_noise_field, gen_rotational_field, gen_sphere_field, Dims, StructuredField};
use vizbench_core::io::{load_field, LoadError};
use vizbench_core::isocontour::ContourStrategy;
use vizbench_core::perf::BackendKind;
use vizbench_core::stencil::StencilStrategy;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown kernel {0:?}, expected stencil, isocontour or advection")]
    UnknownKernel(String),
    #[error("unknown {kernel} strategy {name:?}, expected one of {expected}")]
    UnknownStrategy { kernel: Kernel, name: String, expected: String },
    #[error("unknown preset {0:?}, expected stencil-paper, iso-paper or advect-paper")]
    UnknownPreset(String),
    #[error("bad synthetic dataset spec {0:?}: {1}")]
    BadSynthetic(String, String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Load(#[from] LoadError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kernel {
    Stencil,
    Isocontour,
    Advection,
}

impl Kernel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Stencil => "stencil",
            Self::Isocontour => "isocontour",
            Self::Advection => "advection",
        }
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        match self {
            Self::Stencil => StencilStrategy::ALL.map(Strategy::Stencil).to_vec(),
            Self::Isocontour => ContourStrategy::ALL.map(Strategy::Contour).to_vec(),
            Self::Advection => AdvectStrategy::ALL.map(Strategy::Advect).to_vec(),
        }
    }

    pub fn parse_strategy(&self, name: &str) -> Result<Strategy, ConfigError> {
        let all = self.strategies();
        all.iter().copied().find(|s| s.name() == name.trim()).ok_or_else(|| ConfigError::UnknownStrategy {
            kernel: *self,
            name: name.to_owned(),
            expected: all.iter().map(Strategy::name).collect::<Vec<_>>().join(", "),
        })
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "stencil" => Ok(Self::Stencil),
            "isocontour" => Ok(Self::Isocontour),
            "advection" => Ok(Self::Advection),
            other => Err(ConfigError::UnknownKernel(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Stencil(StencilStrategy),
    Contour(ContourStrategy),
    Advect(AdvectStrategy),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Stencil(s) => s.name(),
            Self::Contour(s) => s.name(),
            Self::Advect(s) => s.name(),
        }
    }

    pub fn kernel(&self) -> Kernel {
        match self {
            Self::Stencil(_) => Kernel::Stencil,
            Self::Contour(_) => Kernel::Isocontour,
            Self::Advect(_) => Kernel::Advection,
        }
    }

    /// Single-threaded regardless of the requested thread count.
    pub fn is_serial(&self) -> bool {
        matches!(self, Self::Contour(ContourStrategy::Serial) | Self::Advect(AdvectStrategy::Serial))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    /// Uniform noise in `[0, 1)`.
    Noise,
    /// Unit impulse at the image center.
    Impulse,
    /// Signed distance to a centered sphere of radius `min(dims) / 4`.
    Sphere,
    /// `(-y, x, 0)` on a grid centered at the origin.
    Rotational,
}

/// `<generator>:<nx>x<ny>[x<nz>]`, e.g. `noise:2048x2048` or `sphere:64x64x64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub generator: Generator,
    pub dims: Dims,
}

impl FromStr for SyntheticSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| ConfigError::BadSynthetic(s.to_owned(), why.to_owned());
        let (gen, shape) = s.split_once(':').ok_or_else(|| bad("expected <generator>:<dims>"))?;
        let generator = match gen.trim() {
            "noise" => Generator::Noise,
            "impulse" => Generator::Impulse,
            "sphere" => Generator::Sphere,
            "rotational" => Generator::Rotational,
            _ => return Err(bad("generator must be noise, impulse, sphere or rotational")),
        };
        let n: Vec<usize> = shape
            .split('x')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("dims must be positive integers joined by 'x'"))?;
        let dims = match n.as_slice() {
            [x, y] => Dims::new_2d(*x, *y),
            [x, y, z] => Dims::new(*x, *y, *z),
            _ => return Err(bad("expected 2 or 3 dims")),
        }
        .map_err(|e| bad(&e.to_string()))?;
        Ok(Self { generator, dims })
    }
}

impl fmt::Display for SyntheticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = match self.generator {
            Generator::Noise => "noise",
            Generator::Impulse => "impulse",
            Generator::Sphere => "sphere",
            Generator::Rotational => "rotational",
        };
        let d = self.dims;
        if d.is_2d() {
            write!(f, "{g}:{}x{}", d.nx, d.ny)
        } else {
            write!(f, "{g}:{}x{}x{}", d.nx, d.ny, d.nz)
        }
    }
}

impl SyntheticSpec {
    pub fn generate(&self, rng_seed: u64) -> Result<StructuredField, ConfigError> {
        let d = self.dims;
        let err = |e: vizbench_core::field::FieldError| ConfigError::BadSynthetic(self.to_string(), e.to_string());
        match self.generator {
            Generator::Noise => Ok(gen_noise_field(d, rng_seed)),
            Generator::Impulse => gen_impulse_image(d, (d.nx / 2, d.ny / 2)).map_err(err),
            Generator::Sphere => {
                let center = d.as_array().map(|n| (n - 1) as f64 / 2.0);
                let radius = d.as_array().into_iter().min().unwrap_or(1) as f64 / 4.0;
                gen_sphere_field(d, center, radius).map_err(err)
            }
            Generator::Rotational => gen_rotational_field(d).map_err(err),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    File(PathBuf),
    Synthetic(SyntheticSpec),
}

impl Dataset {
    pub fn load(&self, rng_seed: u64) -> Result<StructuredField, ConfigError> {
        match self {
            Self::File(path) => Ok(load_field(path)?),
            Self::Synthetic(spec) => spec.generate(rng_seed),
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::File(p) => write!(f, "{}", p.display()),
            Self::Synthetic(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    /// Stencil window width `R` (odd).
    pub stencil_size: usize,
    pub sigma: f64,
    pub isovalue: f64,
    pub n_seeds: usize,
    pub max_steps: usize,
    /// Integration step; `None` picks a quarter of the finest spacing.
    pub step_size: Option<f64>,
    pub reclassify: bool,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            stencil_size: 19,
            sigma: 0.33,
            isovalue: 15.0,
            n_seeds: 500,
            max_steps: 1000,
            step_size: None,
            reclassify: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub kernel: Kernel,
    pub strategies: Vec<Strategy>,
    pub dataset: Dataset,
    pub params: KernelParams,
    pub thread_counts: Vec<usize>,
    pub repetitions: usize,
    pub chunk_size: usize,
    pub out_dir: Option<PathBuf>,
    pub rng_seed: u64,
    pub backend: BackendKind,
}

impl BenchConfig {
    /// Defaults for `kernel`: every strategy, the reference kernel
    /// parameters and a desk-scale synthetic dataset.
    pub fn for_kernel(kernel: Kernel) -> Self {
        let dataset = match kernel {
            Kernel::Stencil => "noise:1024x1024",
            Kernel::Isocontour => "sphere:128x128x128",
            Kernel::Advection => "rotational:65x65x65",
        };
        Self {
            kernel,
            strategies: kernel.strategies(),
            dataset: Dataset::Synthetic(dataset.parse().expect("valid built-in spec")),
            params: KernelParams::default(),
            thread_counts: vec![1, 2, 4, 8],
            repetitions: 3,
            chunk_size: vizbench_core::dpp::DEFAULT_CHUNK_SIZE,
            out_dir: None,
            rng_seed: 0,
            backend: BackendKind::Auto,
        }
    }

    /// `stencil-paper` (19x19, sigma 0.33), `iso-paper` (isovalue 15) or
    /// `advect-paper` (500 diagonal seeds, 1000 RK4 steps).
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match name {
            "stencil-paper" => Ok(Self::for_kernel(Kernel::Stencil)),
            "iso-paper" => Ok(Self::for_kernel(Kernel::Isocontour)),
            "advect-paper" => Ok(Self::for_kernel(Kernel::Advection)),
            other => Err(ConfigError::UnknownPreset(other.to_owned())),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.strategies.is_empty() {
            return invalid("no strategies selected".into());
        }
        if let Some(s) = self.strategies.iter().find(|s| s.kernel() != self.kernel) {
            return invalid(format!("strategy {} does not belong to kernel {}", s.name(), self.kernel));
        }
        if self.thread_counts.is_empty() {
            return invalid("thread_counts is empty".into());
        }
        if self.thread_counts.windows(2).any(|w| w[0] >= w[1]) || self.thread_counts[0] == 0 {
            return invalid(format!("thread_counts must be positive and strictly ascending, got {:?}", self.thread_counts));
        }
        if self.repetitions == 0 {
            return invalid("repetitions must be >= 1".into());
        }
        if self.chunk_size == 0 {
            return invalid("chunk_size must be >= 1".into());
        }
        let p = &self.params;
        match self.kernel {
            Kernel::Stencil if p.stencil_size.is_multiple_of(2) => invalid(format!("stencil size must be odd, got {}", p.stencil_size)),
            Kernel::Stencil if !(p.sigma > 0.0) => invalid(format!("sigma must be positive, got {}", p.sigma)),
            Kernel::Isocontour if !p.isovalue.is_finite() => invalid("isovalue must be finite".into()),
            Kernel::Advection if p.n_seeds < 2 => invalid(format!("need at least 2 seeds, got {}", p.n_seeds)),
            Kernel::Advection if p.max_steps == 0 => invalid("steps must be >= 1".into()),
            Kernel::Advection if p.step_size.is_some_and(|h| !(h > 0.0)) => invalid("h must be positive".into()),
            _ => Ok(()),
        }
    }
}
