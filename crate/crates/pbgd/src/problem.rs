//! Problem oracle bundles.
//!
//! A [`BilevelProblem`] packages the upper objective `f`, lower objective
//! `g`, their analytic gradients, the feasible sets for `x` and `y`, and an
//! optional coupled constraint `c(x, y) <= 0`. Oracles are plain closures;
//! they must be pure (identical inputs give bit-identical outputs) so that
//! runs are reproducible.

use crate::error::{Error, Result};
use crate::set::FeasibleSet;
use crate::vecmath::{DenseMatrix, RealVec};
use std::sync::Arc;

pub type ScalarOracle = Arc<dyn Fn(&RealVec, &RealVec) -> f64 + Send + Sync>;
pub type VectorOracle = Arc<dyn Fn(&RealVec, &RealVec) -> RealVec + Send + Sync>;
pub type MatrixOracle = Arc<dyn Fn(&RealVec, &RealVec) -> DenseMatrix + Send + Sync>;
/// `(x, y, lambda) -> lambda^T Jacobian`, the adjoint product solvers need.
pub type AdjointOracle = Arc<dyn Fn(&RealVec, &RealVec, &RealVec) -> RealVec + Send + Sync>;

/// Known Lipschitz/convexity moduli, used only for default step-size
/// selection and diagnostic scaling laws.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProblemConstants {
    /// Lipschitz modulus of `f(x, .)`.
    pub l_f0: Option<f64>,
    /// Curvature bound of `f(x, .)` in `y`; drives penalized inner steps.
    pub l_f1: Option<f64>,
    /// Curvature bound of `g(x, .)` in `y`; drives lower-level steps.
    pub l_g1: Option<f64>,
    /// Strong-convexity modulus of `g(x, .)`.
    pub mu_g: Option<f64>,
    /// Hessian Lipschitz modulus of `g`.
    pub l_g2: Option<f64>,
    /// Bound on the lower-level Lagrange multiplier norm.
    pub b_lambda: Option<f64>,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("l_f0", self.l_f0),
            ("l_f1", self.l_f1),
            ("l_g1", self.l_g1),
            ("mu_g", self.mu_g),
            ("l_g2", self.l_g2),
            ("b_lambda", self.b_lambda),
        ] {
            if let Some(v) = v {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::argument(format!(
                        "constant {name} must be a nonnegative real, got {v}"
                    )));
                }
            }
        }
        if let Some(mu) = self.mu_g {
            if mu <= 0.0 {
                return Err(Error::argument("mu_g must be strictly positive"));
            }
            if let Some(l) = self.l_g1 {
                if l < mu {
                    return Err(Error::argument("l_g1 must be at least mu_g"));
                }
            }
        }
        Ok(())
    }
}

/// Coupled inequality constraint `c(x, y) <= 0` with analytic Jacobians.
///
/// The Jacobian oracles define the constraint; `jac_x_t_mul`/`jac_y_t_mul`
/// compute `lambda^T jac` without materializing the matrix and default to
/// doing exactly that. Large problems (the SVM) override them.
#[derive(Clone)]
pub struct CoupledConstraint {
    pub d_c: usize,
    pub eval: VectorOracle,
    pub jac_x: MatrixOracle,
    pub jac_y: MatrixOracle,
    jac_x_t_mul: Option<AdjointOracle>,
    jac_y_t_mul: Option<AdjointOracle>,
}

impl CoupledConstraint {
    pub fn new(d_c: usize, eval: VectorOracle, jac_x: MatrixOracle, jac_y: MatrixOracle) -> Self {
        CoupledConstraint {
            d_c,
            eval,
            jac_x,
            jac_y,
            jac_x_t_mul: None,
            jac_y_t_mul: None,
        }
    }

    /// Install matrix-free adjoint products.
    pub fn with_adjoint_products(mut self, jac_x_t: AdjointOracle, jac_y_t: AdjointOracle) -> Self {
        self.jac_x_t_mul = Some(jac_x_t);
        self.jac_y_t_mul = Some(jac_y_t);
        self
    }

    pub fn eval(&self, x: &RealVec, y: &RealVec) -> RealVec {
        (self.eval)(x, y)
    }

    /// `lambda^T d c / d x` as a `d_x` vector.
    pub fn jac_x_t_mul(&self, x: &RealVec, y: &RealVec, lambda: &RealVec) -> RealVec {
        match &self.jac_x_t_mul {
            Some(f) => f(x, y, lambda),
            None => (self.jac_x)(x, y).matvec_t(lambda),
        }
    }

    /// `lambda^T d c / d y` as a `d_y` vector.
    pub fn jac_y_t_mul(&self, x: &RealVec, y: &RealVec, lambda: &RealVec) -> RealVec {
        match &self.jac_y_t_mul {
            Some(f) => f(x, y, lambda),
            None => (self.jac_y)(x, y).matvec_t(lambda),
        }
    }
}

/// Oracle bundle for one bilevel problem.
#[derive(Clone)]
pub struct BilevelProblem {
    pub d_x: usize,
    pub d_y: usize,
    pub f: ScalarOracle,
    pub grad_x_f: VectorOracle,
    pub grad_y_f: VectorOracle,
    pub g: ScalarOracle,
    pub grad_x_g: VectorOracle,
    pub grad_y_g: VectorOracle,
    pub set_x: FeasibleSet,
    pub set_y: FeasibleSet,
    pub coupled: Option<CoupledConstraint>,
    pub constants: Option<ProblemConstants>,
}

pub struct ProblemBuilder {
    d_x: usize,
    d_y: usize,
    f: Option<ScalarOracle>,
    grad_x_f: Option<VectorOracle>,
    grad_y_f: Option<VectorOracle>,
    g: Option<ScalarOracle>,
    grad_x_g: Option<VectorOracle>,
    grad_y_g: Option<VectorOracle>,
    set_x: Option<FeasibleSet>,
    set_y: Option<FeasibleSet>,
    coupled: Option<CoupledConstraint>,
    constants: Option<ProblemConstants>,
}

impl BilevelProblem {
    pub fn builder(d_x: usize, d_y: usize) -> ProblemBuilder {
        ProblemBuilder {
            d_x,
            d_y,
            f: None,
            grad_x_f: None,
            grad_y_f: None,
            g: None,
            grad_x_g: None,
            grad_y_g: None,
            set_x: None,
            set_y: None,
            coupled: None,
            constants: None,
        }
    }

    pub fn is_coupled(&self) -> bool {
        self.coupled.is_some()
    }

    pub fn f(&self, x: &RealVec, y: &RealVec) -> f64 {
        (self.f)(x, y)
    }

    pub fn g(&self, x: &RealVec, y: &RealVec) -> f64 {
        (self.g)(x, y)
    }

    pub fn grad_x_f(&self, x: &RealVec, y: &RealVec) -> RealVec {
        (self.grad_x_f)(x, y)
    }

    pub fn grad_y_f(&self, x: &RealVec, y: &RealVec) -> RealVec {
        (self.grad_y_f)(x, y)
    }

    pub fn grad_x_g(&self, x: &RealVec, y: &RealVec) -> RealVec {
        (self.grad_x_g)(x, y)
    }

    pub fn grad_y_g(&self, x: &RealVec, y: &RealVec) -> RealVec {
        (self.grad_y_g)(x, y)
    }

    /// Lower-level Lagrangian gradient in `y`.
    ///
    /// `gamma = None` selects `L_g = g + <lambda, c>`; `gamma = Some(t)`
    /// selects `L_t = f/t + g + <lambda, c>`. The constraint term is skipped
    /// when the problem is uncoupled or no multiplier is given.
    pub fn grad_y_lagrangian(
        &self,
        x: &RealVec,
        y: &RealVec,
        lambda: Option<&RealVec>,
        gamma: Option<f64>,
    ) -> RealVec {
        let mut grad = self.grad_y_g(x, y);
        if let Some(gamma) = gamma {
            grad.axpy_mut(1.0 / gamma, &self.grad_y_f(x, y));
        }
        if let (Some(cc), Some(lambda)) = (&self.coupled, lambda) {
            grad.axpy_mut(1.0, &cc.jac_y_t_mul(x, y, lambda));
        }
        grad
    }

    /// Lower-level Lagrangian gradient in `x` (used by the coupled drivers).
    pub fn grad_x_lagrangian(
        &self,
        x: &RealVec,
        y: &RealVec,
        lambda: Option<&RealVec>,
        gamma: Option<f64>,
    ) -> RealVec {
        let mut grad = self.grad_x_g(x, y);
        if let Some(gamma) = gamma {
            grad.axpy_mut(1.0 / gamma, &self.grad_x_f(x, y));
        }
        if let (Some(cc), Some(lambda)) = (&self.coupled, lambda) {
            grad.axpy_mut(1.0, &cc.jac_x_t_mul(x, y, lambda));
        }
        grad
    }
}

impl ProblemBuilder {
    pub fn objectives(
        mut self,
        f: impl Fn(&RealVec, &RealVec) -> f64 + Send + Sync + 'static,
        g: impl Fn(&RealVec, &RealVec) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.f = Some(Arc::new(f));
        self.g = Some(Arc::new(g));
        self
    }

    pub fn upper_gradients(
        mut self,
        gx: impl Fn(&RealVec, &RealVec) -> RealVec + Send + Sync + 'static,
        gy: impl Fn(&RealVec, &RealVec) -> RealVec + Send + Sync + 'static,
    ) -> Self {
        self.grad_x_f = Some(Arc::new(gx));
        self.grad_y_f = Some(Arc::new(gy));
        self
    }

    pub fn lower_gradients(
        mut self,
        gx: impl Fn(&RealVec, &RealVec) -> RealVec + Send + Sync + 'static,
        gy: impl Fn(&RealVec, &RealVec) -> RealVec + Send + Sync + 'static,
    ) -> Self {
        self.grad_x_g = Some(Arc::new(gx));
        self.grad_y_g = Some(Arc::new(gy));
        self
    }

    pub fn sets(mut self, set_x: FeasibleSet, set_y: FeasibleSet) -> Self {
        self.set_x = Some(set_x);
        self.set_y = Some(set_y);
        self
    }

    pub fn coupled(mut self, cc: CoupledConstraint) -> Self {
        self.coupled = Some(cc);
        self
    }

    pub fn constants(mut self, constants: ProblemConstants) -> Self {
        self.constants = Some(constants);
        self
    }

    pub fn build(self) -> Result<BilevelProblem> {
        let set_x = self
            .set_x
            .ok_or_else(|| Error::argument("problem is missing feasible sets"))?;
        let set_y = self.set_y.unwrap();
        if set_x.dim() != self.d_x || set_y.dim() != self.d_y {
            return Err(Error::argument(
                "feasible set dimensions do not match d_x/d_y",
            ));
        }
        if let Some(c) = &self.constants {
            c.validate()?;
        }
        let missing = |what: &str| Error::argument(format!("problem is missing {what}"));
        Ok(BilevelProblem {
            d_x: self.d_x,
            d_y: self.d_y,
            f: self.f.ok_or_else(|| missing("f"))?,
            grad_x_f: self.grad_x_f.clone().ok_or_else(|| missing("grad_x_f"))?,
            grad_y_f: self.grad_y_f.ok_or_else(|| missing("grad_y_f"))?,
            g: self.g.ok_or_else(|| missing("g"))?,
            grad_x_g: self.grad_x_g.ok_or_else(|| missing("grad_x_g"))?,
            grad_y_g: self.grad_y_g.ok_or_else(|| missing("grad_y_g"))?,
            set_x,
            set_y,
            coupled: self.coupled,
            constants: self.constants,
        })
    }
}
