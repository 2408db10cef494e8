//! Potentials sampled at interior nodes, and named builders for them.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// A real potential at the interior nodes of a grid, extended by zero
/// outside the rectangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub id: String,
    pub values: Vec<f64>,
    /// Upper bound for `max |values|`.
    pub sup_bound: f64,
    /// Discrete H1 norm of the zero extension.
    pub h1_bound: Option<f64>,
}

impl Potential {
    /// Wraps node values, computing the sup and H1 bounds on `grid`.
    pub fn from_values(id: impl Into<String>, values: Vec<f64>, grid: &GridSpec) -> Result<Self> {
        if values.len() != grid.n_int() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_int(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("potential has non-finite values".into()));
        }
        let sup_bound = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let h1 = discrete_h1_norm(&values, grid);
        Ok(Self {
            id: id.into(),
            values,
            sup_bound,
            h1_bound: Some(h1),
        })
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(id: impl Into<String>, grid: &GridSpec, f: F) -> Result<Self> {
        let values = (0..grid.n_int())
            .map(|p| {
                let (x, y) = grid.interior_point(p);
                f(x, y)
            })
            .collect();
        Self::from_values(id, values, grid)
    }

    pub fn zero(grid: &GridSpec) -> Self {
        Self::from_values("zero", vec![0.0; grid.n_int()], grid).expect("zero potential is valid")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Pointwise difference `self - other`.
    pub fn difference(&self, other: &Potential, grid: &GridSpec) -> Result<Potential> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        let v = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Potential::from_values(format!("{}-{}", self.id, other.id), v, grid)
    }

    /// `self + t * other`.
    pub fn add_scaled(&self, t: f64, other: &Potential, grid: &GridSpec) -> Result<Potential> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        let v = self.values.iter().zip(&other.values).map(|(a, b)| a + t * b).collect();
        Potential::from_values(format!("{}+{t}*{}", self.id, other.id), v, grid)
    }

    /// Discrete L2 norm `sqrt(sum q^2 hx hy)`.
    pub fn l2_norm(&self, grid: &GridSpec) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * grid.cell_area()).sqrt()
    }

    /// True when the potential vanishes at every node closer than `dist` to
    /// the boundary.
    pub fn vanishes_near_boundary(&self, grid: &GridSpec, dist: f64) -> bool {
        self.values
            .iter()
            .enumerate()
            .all(|(p, v)| *v == 0.0 || grid.distance_to_boundary(p) >= dist)
    }
}

/// Discrete H1 norm of the zero extension: mass plus squared differences
/// over every lattice edge, including edges to the boundary.
pub fn discrete_h1_norm(values: &[f64], grid: &GridSpec) -> f64 {
    let (nx, ny) = (grid.nx(), grid.ny());
    let at = |i: usize, j: usize| -> f64 {
        if i == 0 || j == 0 || i > nx || j > ny {
            0.0
        } else {
            values[grid.interior_index(i, j)]
        }
    };
    let mut s = 0.0;
    for j in 0..=ny + 1 {
        for i in 0..=nx + 1 {
            let v = at(i, j);
            if i >= 1 && i <= nx && j >= 1 && j <= ny {
                s += v * v;
            }
            if i <= nx && j >= 1 && j <= ny {
                let d = at(i + 1, j) - v;
                s += d * d / (grid.hx() * grid.hx());
            }
            if j <= ny && i >= 1 && i <= nx {
                let d = at(i, j + 1) - v;
                s += d * d / (grid.hy() * grid.hy());
            }
        }
    }
    (s * grid.cell_area()).sqrt()
}

/// Named potential builders accepted in experiment configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    Constant {
        value: f64,
    },
    /// `amp * exp(-|x - center|^2 / (2 width^2))`.
    Gaussian {
        center: [f64; 2],
        width: f64,
        amp: f64,
    },
    /// `amp * sin(jx pi x / lx) sin(jy pi y / ly)`.
    Mode {
        jx: u32,
        jy: u32,
        amp: f64,
    },
    /// Smooth bump `amp * exp(1 - 1 / (1 - r^2 / radius^2))` supported in the
    /// disc of the given radius.
    Bump {
        center: [f64; 2],
        radius: f64,
        amp: f64,
    },
    /// Seeded random sine series with coefficients decaying like
    /// `|k|^(-smoothness)`, multiplied by a fixed interior cutoff window and
    /// scaled so that the maximum modulus equals `amp`.
    Random {
        seed: u64,
        smoothness: f64,
        amp: f64,
    },
    /// `base + t * perturbation`.
    Sum {
        base: Box<PotentialSpec>,
        perturbation: Box<PotentialSpec>,
        t: f64,
    },
}

/// Smooth step from 0 on `t <= 0` to 1 on `t >= 1`.
fn smooth_step(t: f64) -> f64 {
    let g = |x: f64| if x <= 0.0 { 0.0 } else { (-1.0 / x).exp() };
    let a = g(t);
    let b = g(1.0 - t);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// Cutoff window equal to 1 on the middle of the rectangle and vanishing
/// within a tenth of each side length of the boundary.
pub fn cutoff_window(x: f64, y: f64, lx: f64, ly: f64) -> f64 {
    let one = |t: f64| smooth_step((t - 0.1) / 0.15) * smooth_step((0.9 - t) / 0.15);
    one(x / lx) * one(y / ly)
}

impl PotentialSpec {
    pub fn id(&self) -> String {
        match self {
            PotentialSpec::Zero => "zero".into(),
            PotentialSpec::Constant { value } => format!("const({value})"),
            PotentialSpec::Gaussian { center, width, amp } => {
                format!("gauss({},{};{width};{amp})", center[0], center[1])
            }
            PotentialSpec::Mode { jx, jy, amp } => format!("mode({jx},{jy};{amp})"),
            PotentialSpec::Bump { center, radius, amp } => {
                format!("bump({},{};{radius};{amp})", center[0], center[1])
            }
            PotentialSpec::Random { seed, smoothness, amp } => format!("random({seed};{smoothness};{amp})"),
            PotentialSpec::Sum { base, perturbation, t } => {
                format!("{}+{t}*{}", base.id(), perturbation.id())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match self {
            PotentialSpec::Gaussian { width, .. } if !(*width > 0.0) => bad(format!("gaussian width {width} must be positive")),
            PotentialSpec::Bump { radius, .. } if !(*radius > 0.0) => bad(format!("bump radius {radius} must be positive")),
            PotentialSpec::Mode { jx, jy, .. } if *jx == 0 || *jy == 0 => bad("mode indices must be positive".into()),
            PotentialSpec::Random { smoothness, .. } if !(*smoothness >= 0.0) => bad("smoothness must be non-negative".into()),
            PotentialSpec::Sum { base, perturbation, .. } => {
                base.validate()?;
                perturbation.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self, grid: &GridSpec) -> Result<Potential> {
        self.validate()?;
        let id = self.id();
        let (lx, ly) = (grid.lx(), grid.ly());
        match self {
            PotentialSpec::Zero => Ok(Potential::zero(grid)),
            PotentialSpec::Constant { value } => Potential::from_fn(id, grid, |_, _| *value),
            PotentialSpec::Gaussian { center, width, amp } => Potential::from_fn(id, grid, |x, y| {
                let r2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
                amp * (-r2 / (2.0 * width * width)).exp()
            }),
            PotentialSpec::Mode { jx, jy, amp } => Potential::from_fn(id, grid, |x, y| {
                let pi = std::f64::consts::PI;
                amp * (*jx as f64 * pi * x / lx).sin() * (*jy as f64 * pi * y / ly).sin()
            }),
            PotentialSpec::Bump { center, radius, amp } => Potential::from_fn(id, grid, |x, y| {
                let r2 = ((x - center[0]).powi(2) + (y - center[1]).powi(2)) / (radius * radius);
                if r2 < 1.0 {
                    amp * (1.0 - 1.0 / (1.0 - r2)).exp()
                } else {
                    0.0
                }
            }),
            PotentialSpec::Random { seed, smoothness, amp } => {
                const KMAX: usize = 8;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                let mut coef = [[0.0; KMAX]; KMAX];
                for (a, row) in coef.iter_mut().enumerate() {
                    for (b, c) in row.iter_mut().enumerate() {
                        let k2 = ((a + 1) * (a + 1) + (b + 1) * (b + 1)) as f64;
                        *c = rng.gen_range(-1.0..1.0) * k2.powf(-0.5 * smoothness);
                    }
                }
                let raw = Potential::from_fn(id.clone(), grid, |x, y| {
                    let pi = std::f64::consts::PI;
                    let mut s = 0.0;
                    for (a, row) in coef.iter().enumerate() {
                        let sx = ((a + 1) as f64 * pi * x / lx).sin();
                        for (b, c) in row.iter().enumerate() {
                            s += c * sx * ((b + 1) as f64 * pi * y / ly).sin();
                        }
                    }
                    s * cutoff_window(x, y, lx, ly)
                })?;
                let scale = if raw.sup_bound > 0.0 { amp / raw.sup_bound } else { 0.0 };
                Potential::from_values(id, raw.values.iter().map(|v| v * scale).collect(), grid)
            }
            PotentialSpec::Sum { base, perturbation, t } => {
                let b = base.build(grid)?;
                let p = perturbation.build(grid)?;
                let mut out = b.add_scaled(*t, &p, grid)?;
                out.id = id;
                Ok(out)
            }
        }
    }
}
