//! Built-in analytic benchmark problems.
//!
//! Every entry ships analytic gradient oracles and, where known, the
//! Lipschitz/convexity moduli used for default step sizes. `l_g1` stores the
//! curvature bound of `g(x, .)` in `y`, which is what inner step sizes need.

use crate::error::{Error, Result};
use crate::problem::{BilevelProblem, CoupledConstraint, ProblemConstants};
use crate::set::FeasibleSet;
use crate::vecmath::{DenseMatrix, RealVec};
use std::sync::Arc;

/// Tunable parameters for the parameterized catalog entries.
#[derive(Debug, Clone, Copy)]
pub struct ExampleParams {
    /// Slope of the linear `y` term in the bias example (its `l_f0`).
    pub bias_slope: f64,
    /// Dimensions `(d_x, d_y)` of the decoupled quadratic.
    pub quad_dims: (usize, usize),
}

impl Default for ExampleParams {
    fn default() -> Self {
        ExampleParams { bias_slope: 10.0, quad_dims: (1, 1) }
    }
}

/// Gaussian width of the oscillatory bump in `example3`.
///
/// The narrative width 0.005 makes the example's advertised flatness
/// constant impossible (the penalized minimizer lands in a trough of depth
/// ~2.9, not ~3e-3); with 4e-6 the example is (2.5e-3, 1.1)-flat with
/// modulus 5 while keeping the gradient spike of 1000 at the lower-level
/// optimum, which is the property the example exists to demonstrate.
pub const EXAMPLE3_SIGMA: f64 = 4e-6;
const EXAMPLE3_AMP: f64 = 10.0;
const EXAMPLE3_FREQ: f64 = 100.0;

/// One row of the problem catalog.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub coupled: bool,
    pub default_gamma: f64,
    pub default_eta_outer: f64,
    pub blurb: &'static str,
}

/// The catalog in listing order.
pub fn catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "fig1_unconstrained",
            coupled: false,
            default_gamma: 10.0,
            default_eta_outer: 0.05,
            blurb: "f = y, g = (x - y)^2 on all of space",
        },
        CatalogEntry {
            name: "fig1_box",
            coupled: false,
            default_gamma: 10.0,
            default_eta_outer: 0.05,
            blurb: "f = y, g = (x - y)^2 with y in [-1/2, 1/2]",
        },
        CatalogEntry {
            name: "fig1_coupled",
            coupled: true,
            default_gamma: 10.0,
            default_eta_outer: 0.05,
            blurb: "f = y, g = (x - y)^2 with y <= x/2",
        },
        CatalogEntry {
            name: "bias",
            coupled: false,
            default_gamma: 10.0,
            default_eta_outer: 0.05,
            blurb: "f = x^2 + 10y, g = (y - x + 1)^2; value-function-free bias showcase",
        },
        CatalogEntry {
            name: "example1",
            coupled: false,
            default_gamma: 10.0,
            default_eta_outer: 0.1,
            blurb: "oscillatory objectives on the box [0,3]^2",
        },
        CatalogEntry {
            name: "example2",
            coupled: true,
            default_gamma: 10.0,
            default_eta_outer: 0.05,
            blurb: "coupled constraint y - x <= 0 on the box [0,3]^2",
        },
        CatalogEntry {
            name: "example3",
            coupled: false,
            default_gamma: 15.0,
            default_eta_outer: 0.05,
            blurb: "flat upper objective with a 1000-magnitude gradient spike",
        },
        CatalogEntry {
            name: "quad_decoupled",
            coupled: false,
            default_gamma: 10.0,
            default_eta_outer: 0.05,
            blurb: "f = |x|^2, g = |y|^2; fully decoupled sanity problem",
        },
    ]
}

pub fn catalog_entry(name: &str) -> Result<CatalogEntry> {
    catalog()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::argument(format!("unknown problem name: {name}")))
}

/// Build a catalog problem with default parameters.
pub fn make_example(name: &str) -> Result<BilevelProblem> {
    make_example_with(name, &ExampleParams::default())
}

/// Build a catalog problem with explicit parameters.
pub fn make_example_with(name: &str, params: &ExampleParams) -> Result<BilevelProblem> {
    match name {
        "fig1_unconstrained" => fig1(Fig1Variant::Unconstrained),
        "fig1_box" => fig1(Fig1Variant::Box),
        "fig1_coupled" => fig1(Fig1Variant::Coupled),
        "bias" => bias(params.bias_slope),
        "example1" => example1(),
        "example2" => example2(),
        "example3" => example3(),
        "quad_decoupled" => quad_decoupled(params.quad_dims.0, params.quad_dims.1),
        other => Err(Error::argument(format!("unknown problem name: {other}"))),
    }
}

enum Fig1Variant {
    Unconstrained,
    Box,
    Coupled,
}

/// `f = y`, `g = (x - y)^2`, three constraint regimes.
fn fig1(variant: Fig1Variant) -> Result<BilevelProblem> {
    let set_y = match variant {
        Fig1Variant::Box => FeasibleSet::interval(1, -0.5, 0.5)?,
        _ => FeasibleSet::AllSpace(1),
    };
    let mut builder = BilevelProblem::builder(1, 1)
        .objectives(|_x, y| y[0], |x, y| (x[0] - y[0]).powi(2))
        .upper_gradients(
            |_x, _y| RealVec::zeros(1),
            |_x, _y| RealVec::from_raw(vec![1.0]),
        )
        .lower_gradients(
            |x, y| RealVec::from_raw(vec![2.0 * (x[0] - y[0])]),
            |x, y| RealVec::from_raw(vec![-2.0 * (x[0] - y[0])]),
        )
        .sets(FeasibleSet::AllSpace(1), set_y)
        .constants(ProblemConstants {
            l_f0: Some(1.0),
            l_f1: Some(0.0),
            l_g1: Some(2.0),
            mu_g: Some(2.0),
            l_g2: Some(0.0),
            b_lambda: None,
        });
    if matches!(variant, Fig1Variant::Coupled) {
        // c(x, y) = y - x/2 <= 0.
        builder = builder.coupled(CoupledConstraint::new(
            1,
            Arc::new(|x: &RealVec, y: &RealVec| RealVec::from_raw(vec![y[0] - 0.5 * x[0]])),
            Arc::new(|_: &RealVec, _: &RealVec| DenseMatrix::new(1, 1, vec![-0.5]).unwrap()),
            Arc::new(|_: &RealVec, _: &RealVec| DenseMatrix::new(1, 1, vec![1.0]).unwrap()),
        ));
    }
    builder.build()
}

/// `f = x^2 + slope * y`, `g = (y - x + 1)^2`.
///
/// The penalty gradient `2x + slope` and the bare upper gradient `2x` point
/// in opposite directions on `(-slope/2, 0)`, which is the counterexample
/// where value-function-free updates settle at the wrong point.
fn bias(slope: f64) -> Result<BilevelProblem> {
    BilevelProblem::builder(1, 1)
        .objectives(
            move |x, y| x[0] * x[0] + slope * y[0],
            |x, y| (y[0] - x[0] + 1.0).powi(2),
        )
        .upper_gradients(
            |x, _y| RealVec::from_raw(vec![2.0 * x[0]]),
            move |_x, _y| RealVec::from_raw(vec![slope]),
        )
        .lower_gradients(
            |x, y| RealVec::from_raw(vec![-2.0 * (y[0] - x[0] + 1.0)]),
            |x, y| RealVec::from_raw(vec![2.0 * (y[0] - x[0] + 1.0)]),
        )
        .sets(FeasibleSet::AllSpace(1), FeasibleSet::AllSpace(1))
        .constants(ProblemConstants {
            l_f0: Some(slope),
            l_f1: Some(0.0),
            l_g1: Some(2.0),
            mu_g: Some(2.0),
            l_g2: Some(0.0),
            b_lambda: None,
        })
        .build()
}

fn example1() -> Result<BilevelProblem> {
    let f = |x: &RealVec, y: &RealVec| {
        (1.0 - y[0]).exp() / (2.0 + (4.0 * x[0]).cos())
            + 0.5 * ((4.0 * x[0] - 2.0).powi(2) + 1.0).ln()
            + x[0] * x[0]
    };
    let gx_f = |x: &RealVec, y: &RealVec| {
        let denom = 2.0 + (4.0 * x[0]).cos();
        let t = 4.0 * x[0] - 2.0;
        RealVec::from_raw(vec![
            (1.0 - y[0]).exp() * 4.0 * (4.0 * x[0]).sin() / (denom * denom)
                + 4.0 * t / (t * t + 1.0)
                + 2.0 * x[0],
        ])
    };
    let gy_f = |x: &RealVec, y: &RealVec| {
        RealVec::from_raw(vec![-(1.0 - y[0]).exp() / (2.0 + (4.0 * x[0]).cos())])
    };
    let g = |x: &RealVec, y: &RealVec| {
        2.0 * (y[0] - x[0]).powi(2) + 0.5 * x[0] * (x[0] + y[0]).sin().powi(2)
    };
    let gx_g = |x: &RealVec, y: &RealVec| {
        RealVec::from_raw(vec![
            -4.0 * (y[0] - x[0])
                + 0.5 * (x[0] + y[0]).sin().powi(2)
                + 0.5 * x[0] * (2.0 * (x[0] + y[0])).sin(),
        ])
    };
    let gy_g = |x: &RealVec, y: &RealVec| {
        RealVec::from_raw(vec![
            4.0 * (y[0] - x[0]) + 0.5 * x[0] * (2.0 * (x[0] + y[0])).sin(),
        ])
    };
    BilevelProblem::builder(1, 1)
        .objectives(f, g)
        .upper_gradients(gx_f, gy_f)
        .lower_gradients(gx_g, gy_g)
        .sets(
            FeasibleSet::interval(1, 0.0, 3.0)?,
            FeasibleSet::interval(1, 0.0, 3.0)?,
        )
        .constants(ProblemConstants {
            // |d f / d y| <= e on the box; y-curvature of g is 4 + x cos(.)
            // which stays in [1, 7] for x in [0, 3].
            l_f0: Some(std::f64::consts::E),
            l_f1: Some(3.0),
            l_g1: Some(7.0),
            mu_g: Some(1.0),
            l_g2: Some(12.0),
            b_lambda: None,
        })
        .build()
}

fn example2() -> Result<BilevelProblem> {
    let f = |x: &RealVec, y: &RealVec| {
        (2.0 - y[0]).exp() / (2.0 + (4.0 * x[0]).cos())
            + 0.5 * ((4.0 * x[0] - 2.0).powi(2) + 1.0).ln()
            + x[0] * x[0]
    };
    let gx_f = |x: &RealVec, y: &RealVec| {
        let denom = 2.0 + (4.0 * x[0]).cos();
        let t = 4.0 * x[0] - 2.0;
        RealVec::from_raw(vec![
            (2.0 - y[0]).exp() * 4.0 * (4.0 * x[0]).sin() / (denom * denom)
                + 4.0 * t / (t * t + 1.0)
                + 2.0 * x[0],
        ])
    };
    let gy_f = |x: &RealVec, y: &RealVec| {
        RealVec::from_raw(vec![-(2.0 - y[0]).exp() / (2.0 + (4.0 * x[0]).cos())])
    };
    let g = |x: &RealVec, y: &RealVec| (y[0] - 2.0 * x[0]).powi(2);
    let gx_g =
        |x: &RealVec, y: &RealVec| RealVec::from_raw(vec![-4.0 * (y[0] - 2.0 * x[0])]);
    let gy_g =
        |x: &RealVec, y: &RealVec| RealVec::from_raw(vec![2.0 * (y[0] - 2.0 * x[0])]);
    BilevelProblem::builder(1, 1)
        .objectives(f, g)
        .upper_gradients(gx_f, gy_f)
        .lower_gradients(gx_g, gy_g)
        .sets(
            FeasibleSet::interval(1, 0.0, 3.0)?,
            FeasibleSet::interval(1, 0.0, 3.0)?,
        )
        .coupled(CoupledConstraint::new(
            1,
            Arc::new(|x: &RealVec, y: &RealVec| RealVec::from_raw(vec![y[0] - x[0]])),
            Arc::new(|_: &RealVec, _: &RealVec| DenseMatrix::new(1, 1, vec![-1.0]).unwrap()),
            Arc::new(|_: &RealVec, _: &RealVec| DenseMatrix::new(1, 1, vec![1.0]).unwrap()),
        ))
        .constants(ProblemConstants {
            l_f0: Some(std::f64::consts::E.powi(2)),
            l_f1: Some(8.0),
            l_g1: Some(2.0),
            mu_g: Some(2.0),
            l_g2: Some(0.0),
            // lambda_g*(x) = 2x <= 6 on the box; 12 leaves slack for the
            // penalized multiplier's O(1/gamma) shift.
            b_lambda: Some(12.0),
        })
        .build()
}

/// Flatness construction: `g = (y - x)^2` and
/// `f = (sin(y-x) + 2)(y-x)^2 + 10 exp(-(y-x)^2 / (2 sigma^2)) sin(100(y-x))`.
///
/// Both objectives depend only on `u = y - x`, so the penalty objective is
/// constant in `x` while `|d f / d y|` at the lower-level optimum is 1000.
fn example3() -> Result<BilevelProblem> {
    let fu = |u: f64| -> f64 {
        (u.sin() + 2.0) * u * u
            + EXAMPLE3_AMP
                * (-u * u / (2.0 * EXAMPLE3_SIGMA * EXAMPLE3_SIGMA)).exp()
                * (EXAMPLE3_FREQ * u).sin()
    };
    let dfu = |u: f64| -> f64 {
        let env = (-u * u / (2.0 * EXAMPLE3_SIGMA * EXAMPLE3_SIGMA)).exp();
        u.cos() * u * u
            + 2.0 * u * (u.sin() + 2.0)
            + EXAMPLE3_AMP
                * env
                * (EXAMPLE3_FREQ * (EXAMPLE3_FREQ * u).cos()
                    - (u / (EXAMPLE3_SIGMA * EXAMPLE3_SIGMA)) * (EXAMPLE3_FREQ * u).sin())
    };
    BilevelProblem::builder(1, 1)
        .objectives(
            move |x, y| fu(y[0] - x[0]),
            |x, y| (y[0] - x[0]).powi(2),
        )
        .upper_gradients(
            move |x, y| RealVec::from_raw(vec![-dfu(y[0] - x[0])]),
            move |x, y| RealVec::from_raw(vec![dfu(y[0] - x[0])]),
        )
        .lower_gradients(
            |x, y| RealVec::from_raw(vec![-2.0 * (y[0] - x[0])]),
            |x, y| RealVec::from_raw(vec![2.0 * (y[0] - x[0])]),
        )
        .sets(FeasibleSet::interval(1, -10.0, 10.0)?, FeasibleSet::AllSpace(1))
        .constants(ProblemConstants {
            l_f0: Some(1600.0),
            // Curvature of the bump peaks near 1.38 * amp * freq / sigma.
            l_f1: Some(3.5e8),
            l_g1: Some(2.0),
            mu_g: Some(2.0),
            l_g2: Some(0.0),
            b_lambda: None,
        })
        .build()
}

fn quad_decoupled(d_x: usize, d_y: usize) -> Result<BilevelProblem> {
    if d_x == 0 || d_y == 0 {
        return Err(Error::argument("quad_decoupled dimensions must be positive"));
    }
    BilevelProblem::builder(d_x, d_y)
        .objectives(
            |x, _y| x.dot(x),
            |_x, y| y.dot(y),
        )
        .upper_gradients(
            |x, _y| x.scale(2.0),
            |_x, y| RealVec::zeros(y.dim()),
        )
        .lower_gradients(
            |x, _y| RealVec::zeros(x.dim()),
            |_x, y| y.scale(2.0),
        )
        .sets(FeasibleSet::AllSpace(d_x), FeasibleSet::AllSpace(d_y))
        .constants(ProblemConstants {
            l_f0: Some(0.0),
            l_f1: Some(0.0),
            l_g1: Some(2.0),
            mu_g: Some(2.0),
            l_g2: Some(0.0),
            b_lambda: None,
        })
        .build()
}

/// Default inner step for minimizing `f/gamma + g` (or plain `g` when
/// `gamma` is `None`) from the stored constants: `1 / (2 (l_f1/gamma + l_g1))`.
pub fn default_inner_step(problem: &BilevelProblem, gamma: Option<f64>) -> Option<f64> {
    let c = problem.constants.as_ref()?;
    let l_g1 = c.l_g1?;
    let curv = match gamma {
        Some(t) => l_g1 + c.l_f1? / t,
        None => l_g1,
    };
    Some(1.0 / (2.0 * curv))
}
