//! Hyperparameter grids. Defaults reproduce the published search space; any
//! list can be overridden from a TOML file using the same keys.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::classifiers::{
    Activation, Algorithm, Gamma, HyperParams, Kernel, LearningRate, LogRegParams, LogRegSolver, MlpParams,
    MlpSolver, Penalty, SvmParams,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmGrid {
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    pub gamma: Vec<Gamma>,
    pub degree: Vec<u32>,
    pub kernel: Vec<Kernel>,
}

impl Default for SvmGrid {
    fn default() -> Self {
        Self {
            c: vec![0.1, 1.0, 10.0, 100.0, 1000.0],
            gamma: vec![
                Gamma::Scale,
                Gamma::Auto,
                Gamma::Value(1e-4),
                Gamma::Value(1e-3),
                Gamma::Value(0.01),
                Gamma::Value(0.1),
                Gamma::Value(1.0),
            ],
            degree: vec![2, 3, 4],
            kernel: vec![Kernel::Linear, Kernel::Polynomial, Kernel::Rbf, Kernel::Sigmoid],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpGrid {
    pub hidden_layer_sizes: Vec<Vec<usize>>,
    pub activation: Vec<Activation>,
    pub solver: Vec<MlpSolver>,
    pub learning_rate: Vec<LearningRate>,
}

impl Default for MlpGrid {
    fn default() -> Self {
        Self {
            hidden_layer_sizes: vec![vec![50], vec![100], vec![100, 50], vec![100, 100], vec![50, 50, 50]],
            activation: vec![Activation::Relu, Activation::Tanh],
            solver: vec![MlpSolver::Adam, MlpSolver::Sgd, MlpSolver::Lbfgs],
            learning_rate: vec![LearningRate::Constant, LearningRate::InvScaling, LearningRate::Adaptive],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegGrid {
    pub penalty: Vec<Penalty>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    pub solver: Vec<LogRegSolver>,
    pub max_iter: Vec<usize>,
    pub l1_ratio: Vec<f64>,
}

impl Default for LogRegGrid {
    fn default() -> Self {
        Self {
            penalty: vec![Penalty::L1, Penalty::L2, Penalty::ElasticNet, Penalty::None],
            c: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            solver: vec![LogRegSolver::NewtonCg, LogRegSolver::Lbfgs, LogRegSolver::Liblinear, LogRegSolver::Saga],
            max_iter: vec![100, 200, 300, 500],
            l1_ratio: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamGrid {
    pub svm: SvmGrid,
    pub mlp: MlpGrid,
    pub logreg: LogRegGrid,
}

/// Keeps the first cell of every equivalence class and drops combinations
/// the model cannot run, preserving enumeration order.
fn prune(raw: Vec<HyperParams>) -> Vec<HyperParams> {
    let mut seen = HashSet::new();
    raw.into_iter()
        .filter(|hp| hp.validate().is_ok())
        .filter(|hp| seen.insert(hp.canonical_key()))
        .collect()
}

impl ParamGrid {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("grid override: {e}")))
    }

    /// Distinct runnable cells in lexicographic order over the grid keys as
    /// listed (first key outermost).
    pub fn cells(&self, algorithm: Algorithm) -> Vec<HyperParams> {
        let mut raw = Vec::new();
        match algorithm {
            Algorithm::Svm => {
                let g = &self.svm;
                for &c in &g.c {
                    for &gamma in &g.gamma {
                        for &degree in &g.degree {
                            for &kernel in &g.kernel {
                                raw.push(HyperParams::Svm(SvmParams {
                                    c,
                                    gamma,
                                    degree,
                                    kernel,
                                    ..SvmParams::default()
                                }));
                            }
                        }
                    }
                }
            }
            Algorithm::Mlp => {
                let g = &self.mlp;
                for hidden in &g.hidden_layer_sizes {
                    for &activation in &g.activation {
                        for &solver in &g.solver {
                            for &learning_rate in &g.learning_rate {
                                raw.push(HyperParams::Mlp(MlpParams {
                                    hidden_layer_sizes: hidden.clone(),
                                    activation,
                                    solver,
                                    learning_rate,
                                    ..MlpParams::default()
                                }));
                            }
                        }
                    }
                }
            }
            Algorithm::LogReg => {
                let g = &self.logreg;
                for &penalty in &g.penalty {
                    for &c in &g.c {
                        for &solver in &g.solver {
                            for &max_iter in &g.max_iter {
                                for &l1_ratio in &g.l1_ratio {
                                    raw.push(HyperParams::LogReg(LogRegParams {
                                        penalty,
                                        c,
                                        solver,
                                        max_iter,
                                        l1_ratio,
                                        ..LogRegParams::default()
                                    }));
                                }
                            }
                        }
                    }
                }
            }
        }
        prune(raw)
    }

    /// Errors when an algorithm's grid has no runnable cell.
    pub fn validate(&self) -> Result<()> {
        for a in Algorithm::ALL {
            if self.cells(a).is_empty() {
                return Err(Error::Config(format!("the {a} grid has no runnable combination")));
            }
        }
        Ok(())
    }
}
