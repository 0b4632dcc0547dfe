//! Binary classifiers sharing one fit/score/predict contract.
//!
//! Scores are on a margin scale (logit or SVM decision value) and the label is
//! Malignant exactly when the score is at least zero.

pub mod logreg;
pub mod mlp;
pub mod svm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use logreg::{fit_logreg, LogRegModel};
pub use mlp::{fit_mlp, MlpModel, MlpNetwork};
pub use svm::{fit_svm, SvmModel};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::preprocessing::ClassWeights;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "&'static str", try_from = "String")]
pub enum Algorithm {
    Svm,
    Mlp,
    LogReg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Svm, Algorithm::Mlp, Algorithm::LogReg];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Svm => "svm",
            Algorithm::Mlp => "mlp",
            Algorithm::LogReg => "logreg",
        }
    }
}

impl From<Algorithm> for &'static str {
    fn from(v: Algorithm) -> Self {
        v.as_str()
    }
}

impl TryFrom<String> for Algorithm {
    type Error = Error;

    fn try_from(s: String) -> std::result::Result<Self, Error> {
        s.parse()
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "svm" => Ok(Algorithm::Svm),
            "mlp" => Ok(Algorithm::Mlp),
            "logreg" | "logistic" | "logistic_regression" | "lr" => Ok(Algorithm::LogReg),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

macro_rules! named_enum {
    ($(#[$m:meta])* $name:ident { $($var:ident => $s:literal $(| $alias:literal)*),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(into = "&'static str", try_from = "String")]
        pub enum $name { $($var),+ }

        impl From<$name> for &'static str {
            fn from(v: $name) -> Self {
                v.as_str()
            }
        }

        impl TryFrom<String> for $name {
            type Error = Error;
            fn try_from(s: String) -> Result<Self> {
                s.parse()
            }
        }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$var => $s),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($s $(| $alias)* => Ok($name::$var),)+
                    other => Err(Error::Config(format!(concat!("unknown ", stringify!($name), " `{}`"), other))),
                }
            }
        }
    };
}

named_enum!(Kernel {
    Linear => "linear",
    Polynomial => "polynomial" | "poly",
    Rbf => "rbf",
    Sigmoid => "sigmoid",
});

named_enum!(Activation {
    Relu => "relu",
    Tanh => "tanh",
});

named_enum!(MlpSolver {
    Adam => "adam",
    Sgd => "sgd",
    Lbfgs => "lbfgs",
});

named_enum!(LearningRate {
    Constant => "constant",
    InvScaling => "invscaling",
    Adaptive => "adaptive",
});

named_enum!(Penalty {
    L1 => "l1",
    L2 => "l2",
    ElasticNet => "elasticnet",
    None => "none",
});

named_enum!(
    /// Solver names from the search grid. They map onto two optimisers: a
    /// Newton method (l2/none only) and accelerated proximal gradient.
    LogRegSolver {
        NewtonCg => "newton-cg" | "newton_cg",
        Lbfgs => "lbfgs",
        Liblinear => "liblinear",
        Saga => "saga",
    }
);

impl LogRegSolver {
    pub fn supports(self, p: Penalty) -> bool {
        match self {
            LogRegSolver::NewtonCg | LogRegSolver::Lbfgs => matches!(p, Penalty::L2 | Penalty::None),
            LogRegSolver::Liblinear => matches!(p, Penalty::L1 | Penalty::L2),
            LogRegSolver::Saga => true,
        }
    }

    pub fn uses_newton(self) -> bool {
        matches!(self, LogRegSolver::NewtonCg | LogRegSolver::Lbfgs)
    }
}

/// Kernel coefficient. Serialised as `"scale"`, `"auto"` or a bare number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "GammaRepr", try_from = "GammaRepr")]
pub enum Gamma {
    Scale,
    Auto,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GammaRepr {
    Value(f64),
    Name(String),
}

impl From<Gamma> for GammaRepr {
    fn from(g: Gamma) -> Self {
        match g {
            Gamma::Value(v) => GammaRepr::Value(v),
            other => GammaRepr::Name(other.to_string()),
        }
    }
}

impl TryFrom<GammaRepr> for Gamma {
    type Error = Error;
    fn try_from(r: GammaRepr) -> Result<Self> {
        match r {
            GammaRepr::Value(v) => Gamma::from_str(&v.to_string()),
            GammaRepr::Name(s) => s.parse(),
        }
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::Scale => f.write_str("scale"),
            Gamma::Auto => f.write_str("auto"),
            Gamma::Value(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for Gamma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scale" => Ok(Gamma::Scale),
            "auto" => Ok(Gamma::Auto),
            v => v
                .parse::<f64>()
                .ok()
                .filter(|g| *g > 0.0 && g.is_finite())
                .map(Gamma::Value)
                .ok_or_else(|| Error::Config(format!("bad gamma `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: Gamma,
    pub degree: u32,
    pub kernel: Kernel,
    pub tolerance: f64,
    /// Zero means automatic: `max(100_000, 100 n)`.
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: Gamma::Scale,
            degree: 3,
            kernel: Kernel::Rbf,
            tolerance: 1e-3,
            max_iter: 0,
        }
    }
}

/// Weight initialisation for the MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MlpInit {
    #[default]
    Glorot,
    /// All weights and biases zero; only useful for the symmetry test.
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden_layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub solver: MlpSolver,
    pub learning_rate: LearningRate,
    pub learning_rate_init: f64,
    /// L2 penalty strength.
    pub alpha: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub early_stopping: bool,
    pub validation_fraction: f64,
    pub patience: usize,
    pub tolerance: f64,
    #[serde(default)]
    pub init: MlpInit,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden_layer_sizes: vec![100],
            activation: Activation::Relu,
            solver: MlpSolver::Adam,
            learning_rate: LearningRate::Constant,
            learning_rate_init: 1e-3,
            alpha: 1e-4,
            max_epochs: 200,
            batch_size: 200,
            early_stopping: true,
            validation_fraction: 0.1,
            patience: 10,
            tolerance: 1e-4,
            init: MlpInit::Glorot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub penalty: Penalty,
    pub c: f64,
    pub solver: LogRegSolver,
    pub max_iter: usize,
    pub l1_ratio: f64,
    pub tolerance: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            penalty: Penalty::L2,
            c: 1.0,
            solver: LogRegSolver::Lbfgs,
            max_iter: 100,
            l1_ratio: 0.5,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum HyperParams {
    Svm(SvmParams),
    Mlp(MlpParams),
    LogReg(LogRegParams),
}

impl HyperParams {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            HyperParams::Svm(_) => Algorithm::Svm,
            HyperParams::Mlp(_) => Algorithm::Mlp,
            HyperParams::LogReg(_) => Algorithm::LogReg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match self {
            HyperParams::Svm(p) => {
                if !(p.c > 0.0) {
                    return bad(format!("SVM C must be positive, got {}", p.c));
                }
                if p.degree == 0 {
                    return bad("SVM degree must be at least 1".into());
                }
            }
            HyperParams::Mlp(p) => {
                if p.hidden_layer_sizes.is_empty() || p.hidden_layer_sizes.contains(&0) {
                    return bad(format!("bad hidden layer sizes {:?}", p.hidden_layer_sizes));
                }
                if p.solver == MlpSolver::Lbfgs {
                    return bad("the MLP lbfgs solver is not implemented; use adam or sgd".into());
                }
            }
            HyperParams::LogReg(p) => {
                if !(p.c > 0.0) {
                    return bad(format!("logistic regression C must be positive, got {}", p.c));
                }
                if !(0.0..=1.0).contains(&p.l1_ratio) {
                    return bad(format!("l1_ratio must lie in [0, 1], got {}", p.l1_ratio));
                }
                if !p.solver.supports(p.penalty) {
                    return bad(format!("solver {} does not support penalty {}", p.solver, p.penalty));
                }
            }
        }
        Ok(())
    }

    /// Equivalent cells map to the same key: options the model ignores
    /// (gamma for a linear kernel, learning-rate schedule under adam, ...)
    /// are blanked and solver names collapse onto the optimiser they use.
    pub fn canonical_key(&self) -> String {
        match self {
            HyperParams::Svm(p) => {
                let gamma = match p.kernel {
                    Kernel::Linear => "-".to_string(),
                    _ => p.gamma.to_string(),
                };
                let degree = match p.kernel {
                    Kernel::Polynomial => p.degree.to_string(),
                    _ => "-".into(),
                };
                format!("svm|{}|{}|{}|{}", p.kernel, p.c, gamma, degree)
            }
            HyperParams::Mlp(p) => {
                let lr = match p.solver {
                    MlpSolver::Sgd => p.learning_rate.as_str(),
                    _ => "-",
                };
                format!("mlp|{:?}|{}|{}|{}", p.hidden_layer_sizes, p.activation, p.solver, lr)
            }
            HyperParams::LogReg(p) => {
                let opt = if p.solver.uses_newton() { "newton" } else { "prox" };
                let c = if p.penalty == Penalty::None { "-".to_string() } else { p.c.to_string() };
                let ratio = if p.penalty == Penalty::ElasticNet {
                    p.l1_ratio.to_string()
                } else {
                    "-".into()
                };
                format!("logreg|{}|{}|{}|{}|{}", p.penalty, c, opt, p.max_iter, ratio)
            }
        }
    }

    /// Short human-readable description, e.g. `kernel=rbf C=10 gamma=scale`.
    pub fn describe(&self) -> String {
        match self {
            HyperParams::Svm(p) => match p.kernel {
                Kernel::Linear => format!("kernel=linear C={}", p.c),
                Kernel::Polynomial => format!("kernel=polynomial C={} gamma={} degree={}", p.c, p.gamma, p.degree),
                k => format!("kernel={k} C={} gamma={}", p.c, p.gamma),
            },
            HyperParams::Mlp(p) => format!(
                "hidden={:?} activation={} solver={} learning_rate={}",
                p.hidden_layer_sizes, p.activation, p.solver, p.learning_rate
            ),
            HyperParams::LogReg(p) => format!(
                "penalty={} C={} solver={} max_iter={} l1_ratio={}",
                p.penalty, p.c, p.solver, p.max_iter, p.l1_ratio
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", bound = "T: Scalar")]
pub enum FittedModel<T> {
    LogReg(LogRegModel<T>),
    Svm(SvmModel<T>),
    Mlp(MlpModel<T>),
}

impl<T: Scalar> FittedModel<T> {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            FittedModel::LogReg(_) => Algorithm::LogReg,
            FittedModel::Svm(_) => Algorithm::Svm,
            FittedModel::Mlp(_) => Algorithm::Mlp,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            FittedModel::LogReg(m) => m.weights.len(),
            FittedModel::Svm(m) => m.n_features,
            FittedModel::Mlp(m) => m.network.sizes[0],
        }
    }

    pub fn meta(&self) -> &TrainingMeta {
        match self {
            FittedModel::LogReg(m) => &m.meta,
            FittedModel::Svm(m) => &m.meta,
            FittedModel::Mlp(m) => &m.meta,
        }
    }

    fn check(&self, x: &FeatureMatrix<T>) -> Result<()> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Margin-scale scores; larger means more confidently Malignant.
    pub fn score(&self, x: &FeatureMatrix<T>) -> Result<Vec<T>> {
        self.check(x)?;
        Ok(match self {
            FittedModel::LogReg(m) => x.rows_iter().map(|r| m.decision(r)).collect(),
            FittedModel::Svm(m) => x.rows_iter().map(|r| m.decision(r)).collect(),
            FittedModel::Mlp(m) => m.network.logits(x),
        })
    }

    pub fn predict(&self, x: &FeatureMatrix<T>) -> Result<Vec<Label>> {
        Ok(self.score(x)?.into_iter().map(label_of).collect())
    }

    /// Malignant probability where the model has one (logistic models);
    /// the logistic of the margin otherwise.
    pub fn probability(&self, x: &FeatureMatrix<T>) -> Result<Vec<T>> {
        Ok(self
            .score(x)?
            .into_iter()
            .map(|s| T::one() / (T::one() + (-s).exp()))
            .collect())
    }
}

/// The decision rule shared by every model.
pub fn label_of<T: Scalar>(score: T) -> Label {
    Label::from_bool(score >= T::zero())
}

fn check_training<T: Scalar>(x: &FeatureMatrix<T>, y: &[Label]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidInput(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidInput("training matrix is empty".into()));
    }
    if !x.all_finite() {
        return Err(Error::NonFinite("training features".into()));
    }
    let pos = y.iter().filter(|l| l.is_malignant()).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass("training labels contain one class".into()));
    }
    Ok(())
}

/// Fits the model named by `hp`. `weights` scale each sample's loss (or box
/// constraint for the SVM); `seed` drives any randomness.
pub fn fit<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &[Label],
    hp: &HyperParams,
    weights: &ClassWeights,
    seed: u64,
) -> Result<FittedModel<T>> {
    hp.validate()?;
    Ok(match hp {
        HyperParams::LogReg(p) => FittedModel::LogReg(fit_logreg(x, y, p, weights)?),
        HyperParams::Svm(p) => FittedModel::Svm(fit_svm(x, y, p, weights)?),
        HyperParams::Mlp(p) => FittedModel::Mlp(fit_mlp(x, y, p, weights, seed)?),
    })
}
