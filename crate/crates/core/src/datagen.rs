//! Seeded generators for the simulation designs.
//!
//! The bivariate shapes (`four_clouds` … `circle`) have uncorrelated
//! coordinates; only `four_clouds` has independent ones. Their noise scales
//! are adjustable parameters with the defaults below.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranks::DataMatrix;
use crate::rng::{self, Domain};

fn default_offset() -> f64 {
    2.0
}
fn default_shape_noise() -> f64 {
    0.25
}
fn default_circle_noise() -> f64 {
    0.05
}
fn default_r() -> f64 {
    0.4
}

/// A named simulation law with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Generator {
    /// Each coordinate `U(-1,1) ± offset`, fair coin per coordinate.
    FourClouds {
        #[serde(default = "default_offset")]
        offset: f64,
    },
    /// `X ~ U(-1,1)`, `Y = ||X| - 0.5| + noise·U(0,1)`.
    W {
        #[serde(default = "default_shape_noise")]
        noise: f64,
    },
    /// The square `[-1,1]²` rotated by 45°.
    Diamond,
    /// `X ~ U(-1,1)`, `Y = X² + noise·U(0,1)`.
    Parabola {
        #[serde(default = "default_shape_noise")]
        noise: f64,
    },
    /// `Y = S·(X² + noise·U(0,1))` with a fair random sign `S`.
    TwoParabolas {
        #[serde(default = "default_shape_noise")]
        noise: f64,
    },
    /// `(cos θ, sin θ) + noise·N(0, I)`, `θ ~ U(0, 2π)`.
    Circle {
        #[serde(default = "default_circle_noise")]
        noise: f64,
    },
    /// `X₁ = U`, `X₂ = U + V`, `U, V ~ U(-1,1)`.
    #[serde(rename = "hyperplane2d")]
    Hyperplane2d,
    /// Standard bivariate normal with correlation `r`.
    #[serde(rename = "normal2d")]
    Normal2d {
        #[serde(default = "default_r")]
        r: f64,
    },
    /// Two independent draws of a bivariate law in coordinates (1,2) and
    /// (3,4), then four independent `N(0,1)` coordinates.
    #[serde(rename = "aug8")]
    Aug8 { base: Box<Generator> },
    /// `X₂…X₈ ~ N(0,1)`, `X₁ = X₂ + … + X₈ + ε`.
    #[serde(rename = "hyperplane8d")]
    Hyperplane8d,
    /// 8-variate normal with covariance `rho^|i-j|`.
    #[serde(rename = "normal8d_ar")]
    Normal8dAr {
        #[serde(default = "default_r")]
        rho: f64,
    },
    /// Four `U(-1,1)` conditioned on a positive product.
    ExampleA,
    /// `Xᵢ = Uᵢ·sign(Uᵢ₊₁)` cyclically, `Uᵢ ~ N(0,1)`.
    ExampleB,
}

impl Generator {
    pub fn dimension(&self) -> usize {
        match self {
            Self::Aug8 { .. } | Self::Hyperplane8d | Self::Normal8dAr { .. } => 8,
            Self::ExampleA | Self::ExampleB => 4,
            _ => 2,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        match self {
            Self::FourClouds { offset } if !offset.is_finite() => bad(format!("offset = {offset}")),
            Self::W { noise }
            | Self::Parabola { noise }
            | Self::TwoParabolas { noise }
            | Self::Circle { noise }
                if !(noise.is_finite() && *noise >= 0.0) =>
            {
                bad(format!("noise must be finite and nonnegative, got {noise}"))
            }
            Self::Normal2d { r } if !(r.abs() < 1.0) => bad(format!("|r| must be < 1, got {r}")),
            Self::Normal8dAr { rho } if !(rho.abs() < 1.0) => {
                bad(format!("|rho| must be < 1, got {rho}"))
            }
            Self::Aug8 { base } if base.dimension() != 2 => {
                bad(format!("aug8 needs a bivariate base law, got {base}"))
            }
            Self::Aug8 { base } => base.validate(),
            _ => Ok(()),
        }
    }

    fn sample_row(&self, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        let unif = |rng: &mut ChaCha8Rng| rng.random_range(-1.0..1.0);
        let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
        let coin = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        match self {
            Self::FourClouds { offset } => {
                for _ in 0..2 {
                    let u = unif(rng);
                    out.push(u + offset * coin(rng));
                }
            }
            Self::W { noise } => {
                let x = unif(rng);
                let e: f64 = rng.random();
                out.extend([x, (x.abs() - 0.5).abs() + noise * e]);
            }
            Self::Diamond => {
                let (u, v) = (unif(rng), unif(rng));
                out.extend([(u + v) / SQRT_2, (u - v) / SQRT_2]);
            }
            Self::Parabola { noise } => {
                let x = unif(rng);
                let e: f64 = rng.random();
                out.extend([x, x * x + noise * e]);
            }
            Self::TwoParabolas { noise } => {
                let x = unif(rng);
                let e: f64 = rng.random();
                let s = coin(rng);
                out.extend([x, s * (x * x + noise * e)]);
            }
            Self::Circle { noise } => {
                let theta = rng.random_range(0.0..2.0 * PI);
                let (e1, e2) = (normal(rng), normal(rng));
                out.extend([theta.cos() + noise * e1, theta.sin() + noise * e2]);
            }
            Self::Hyperplane2d => {
                let (u, v) = (unif(rng), unif(rng));
                out.extend([u, u + v]);
            }
            Self::Normal2d { r } => {
                let (z1, z2) = (normal(rng), normal(rng));
                out.extend([z1, r * z1 + (1.0 - r * r).sqrt() * z2]);
            }
            Self::Aug8 { base } => {
                base.sample_row(rng, out);
                base.sample_row(rng, out);
                for _ in 0..4 {
                    out.push(normal(rng));
                }
            }
            Self::Hyperplane8d => {
                let rest: Vec<f64> = (0..7).map(|_| normal(rng)).collect();
                let eps = normal(rng);
                out.push(rest.iter().sum::<f64>() + eps);
                out.extend(rest);
            }
            Self::Normal8dAr { rho } => {
                // stationary AR(1) has covariance rho^|i-j|
                let innovation = (1.0 - rho * rho).sqrt();
                let mut x = normal(rng);
                out.push(x);
                for _ in 1..8 {
                    x = rho * x + innovation * normal(rng);
                    out.push(x);
                }
            }
            Self::ExampleA => loop {
                let u = [unif(rng), unif(rng), unif(rng), unif(rng)];
                if u.iter().product::<f64>() > 0.0 {
                    out.extend(u);
                    break;
                }
            },
            Self::ExampleB => {
                let u = [normal(rng), normal(rng), normal(rng), normal(rng)];
                for i in 0..4 {
                    out.push(u[i] * u[(i + 1) % 4].signum());
                }
            }
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::FourClouds { .. } => write!(f, "four_clouds"),
            Self::W { .. } => write!(f, "w"),
            Self::Diamond => write!(f, "diamond"),
            Self::Parabola { .. } => write!(f, "parabola"),
            Self::TwoParabolas { .. } => write!(f, "two_parabolas"),
            Self::Circle { .. } => write!(f, "circle"),
            Self::Hyperplane2d => write!(f, "hyperplane2d"),
            Self::Normal2d { r } => write!(f, "normal2d:{r}"),
            Self::Aug8 { base } => write!(f, "aug8:{base}"),
            Self::Hyperplane8d => write!(f, "hyperplane8d"),
            Self::Normal8dAr { rho } => write!(f, "normal8d_ar:{rho}"),
            Self::ExampleA => write!(f, "example_a"),
            Self::ExampleB => write!(f, "example_b"),
        }
    }
}

/// Parses `name` or `name:param`, e.g. `normal2d:0.5`, `aug8:circle`.
impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let num = |default: f64| -> Result<f64> {
            arg.map_or(Ok(default), |a| {
                a.parse()
                    .map_err(|_| Error::InvalidParam(format!("`{a}` is not a number")))
            })
        };
        let g = match name {
            "four_clouds" => Self::FourClouds { offset: num(default_offset())? },
            "w" => Self::W { noise: num(default_shape_noise())? },
            "diamond" => Self::Diamond,
            "parabola" => Self::Parabola { noise: num(default_shape_noise())? },
            "two_parabolas" => Self::TwoParabolas { noise: num(default_shape_noise())? },
            "circle" => Self::Circle { noise: num(default_circle_noise())? },
            "hyperplane2d" => Self::Hyperplane2d,
            "normal2d" => Self::Normal2d { r: num(default_r())? },
            "aug8" => {
                let base = arg.ok_or_else(|| Error::InvalidParam("aug8 needs a base law".into()))?;
                Self::Aug8 { base: Box::new(base.parse()?) }
            }
            "hyperplane8d" => Self::Hyperplane8d,
            "normal8d_ar" => Self::Normal8dAr { rho: num(default_r())? },
            "example_a" => Self::ExampleA,
            "example_b" => Self::ExampleB,
            other => return Err(Error::UnknownGenerator(other.to_string())),
        };
        g.validate()?;
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub generator: Generator,
    pub n: usize,
    pub seed: u64,
}

/// `n` i.i.d. rows of the named law; identical specs give identical output.
pub fn generate(spec: &GeneratorSpec) -> Result<DataMatrix> {
    spec.generator.validate()?;
    if spec.n < 2 {
        return Err(Error::InvalidParam(format!("need n >= 2, got {}", spec.n)));
    }
    let d = spec.generator.dimension();
    let mut rng = rng::stream(spec.seed, Domain::Generator, 0);
    let mut values = Vec::with_capacity(spec.n * d);
    for _ in 0..spec.n {
        spec.generator.sample_row(&mut rng, &mut values);
    }
    DataMatrix::new(spec.n, d, values)
}

/// Appends `extra_gaussian` independent standard normal columns.
pub fn augment_dims(base: &DataMatrix, extra_gaussian: usize, seed: u64) -> Result<DataMatrix> {
    if extra_gaussian == 0 {
        return Ok(base.clone());
    }
    let mut rng = rng::stream(seed, Domain::Augment, 0);
    let d = base.d() + extra_gaussian;
    let mut values = Vec::with_capacity(base.n() * d);
    for row in base.rows() {
        values.extend_from_slice(row);
        values.extend((0..extra_gaussian).map(|_| rng.sample::<f64, _>(StandardNormal)));
    }
    DataMatrix::new(base.n(), d, values)
}
