//! Kernel transforms for GNN building blocks.
//!
//! A network is written as a list of [`BlockInstr`]; each block maps the
//! pair `(K, Θ)` to a new pair. Composing the blocks of a GCN layer
//! reproduces [`crate::recursion::gcn_kernels`], and other architectures
//! (GraphSAGE below) fall out of the same rules.
//!
//! | block | `K` | `Θ` |
//! |---|---|---|
//! | input | `C⁽⁰⁾` | `0` |
//! | bias | `K + σ_b² 1` | `Θ + σ_b² 1` |
//! | weight | `σ_w² K` | `σ_w² Θ + σ_w² K` |
//! | mixed weight | `(α² + β²σ_w²) K` | `(α² + β²σ_w²) Θ + β²σ_w² K` |
//! | graph conv | `A K A^T` | `A Θ A^T` |
//! | activation | `C(K)` | `Θ ⊙ Ċ(K)` |
//! | independent add | `K₁ + K₂` | `Θ₁ + Θ₂` |
//! | layer sample | `A (M ⊙ K) A^T` | `A (M ⊙ Θ) A^T` |
//! | node sample | `A(x,:) (M_xx' ⊙ K) A(x',:)^T` | same with `Θ` |

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::graph::{FeatureMoment, GraphSpec};
use crate::linalg::{self, Mat};
use crate::recursion::{masked_aggregate, nodewise_aggregate, GcnHyper, KernelPair};
use crate::sampling::{SamplingScheme, SchemeSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum BlockInstr {
    Input,
    Bias {
        sigma_b2: f64,
    },
    Weight {
        sigma_w2: f64,
    },
    MixedWeight {
        alpha: f64,
        beta: f64,
        sigma_w2: f64,
    },
    GraphConv,
    Activation {
        kind: ActivationKind,
    },
    /// Both branches start from the incoming state and use independent
    /// weights.
    IndependentAdd {
        left: Vec<BlockInstr>,
        right: Vec<BlockInstr>,
    },
    /// Graph convolution under a layer-wise scheme; the mask comes from the
    /// scheme.
    LayerSample {
        scheme: SamplingScheme,
    },
    /// Graph convolution under node-wise sampling. Only valid directly after
    /// a weight block.
    NodeSample {
        fanout: usize,
    },
}

pub type NetworkProgram = Vec<BlockInstr>;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelState {
    pub k: Mat,
    pub theta: Mat,
}

impl KernelState {
    pub fn into_pair(self, layer: usize) -> KernelPair {
        KernelPair {
            k: self.k,
            theta: self.theta,
            layer,
        }
    }
}

/// What blocks may read besides the incoming state.
#[derive(Debug, Clone, Copy)]
pub struct ProgramContext<'a> {
    pub graph: Option<&'a GraphSpec>,
    pub c0: &'a FeatureMoment,
}

impl<'a> ProgramContext<'a> {
    pub fn new(graph: &'a GraphSpec, c0: &'a FeatureMoment) -> Self {
        ProgramContext {
            graph: Some(graph),
            c0,
        }
    }

    fn graph(&self) -> Result<&'a GraphSpec> {
        self.graph.ok_or(Error::MissingGraph)
    }

    fn n_nodes(&self) -> usize {
        self.c0.n_nodes()
    }
}

fn nonnegative(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, value })
    }
}

/// Apply one block. Output matrices are symmetrized.
pub fn apply_block(state: &KernelState, instr: &BlockInstr, ctx: &ProgramContext<'_>) -> Result<KernelState> {
    let n = state.k.nrows();
    let mut out = match instr {
        BlockInstr::Input => KernelState {
            k: ctx.c0.matrix().clone(),
            theta: Mat::zeros(ctx.n_nodes(), ctx.n_nodes()),
        },
        BlockInstr::Bias { sigma_b2 } => {
            nonnegative("sigma_b2", *sigma_b2)?;
            KernelState {
                k: state.k.add_scalar(*sigma_b2),
                theta: state.theta.add_scalar(*sigma_b2),
            }
        }
        BlockInstr::Weight { sigma_w2 } => {
            nonnegative("sigma_w2", *sigma_w2)?;
            KernelState {
                k: &state.k * *sigma_w2,
                theta: &state.theta * *sigma_w2 + &state.k * *sigma_w2,
            }
        }
        BlockInstr::MixedWeight { alpha, beta, sigma_w2 } => {
            nonnegative("sigma_w2", *sigma_w2)?;
            for (name, v) in [("alpha", *alpha), ("beta", *beta)] {
                if !v.is_finite() {
                    return Err(Error::InvalidParameter { name, value: v });
                }
            }
            let scale = alpha * alpha + beta * beta * sigma_w2;
            KernelState {
                k: &state.k * scale,
                theta: &state.theta * scale + &state.k * (beta * beta * sigma_w2),
            }
        }
        BlockInstr::GraphConv => {
            let g = ctx.graph()?;
            check_graph(g, n)?;
            KernelState {
                k: masked_aggregate(g, &state.k, None),
                theta: masked_aggregate(g, &state.theta, None),
            }
        }
        BlockInstr::Activation { kind } => {
            linalg::ensure_symmetric(&state.theta)?;
            let m = kind.moments(&state.k)?;
            KernelState {
                k: m.c,
                theta: state.theta.component_mul(&m.c_dot),
            }
        }
        BlockInstr::IndependentAdd { left, right } => {
            let l = run_from(state, left, ctx)?;
            let r = run_from(state, right, ctx)?;
            if l.k.nrows() != r.k.nrows() {
                return Err(Error::DimensionMismatch {
                    context: "independent add branches",
                    expected: l.k.nrows(),
                    found: r.k.nrows(),
                });
            }
            KernelState {
                k: l.k + r.k,
                theta: l.theta + r.theta,
            }
        }
        BlockInstr::LayerSample { scheme } => {
            let g = ctx.graph()?;
            check_graph(g, n)?;
            if matches!(scheme, SamplingScheme::NodeWise { .. }) {
                return Err(Error::InvalidProgram(
                    "layer_sample takes a layer-wise scheme; use node_sample for node-wise sampling".into(),
                ));
            }
            scheme.validate(n)?;
            let mask = scheme.layer_mask()?;
            KernelState {
                k: masked_aggregate(g, &state.k, mask.as_ref()),
                theta: masked_aggregate(g, &state.theta, mask.as_ref()),
            }
        }
        BlockInstr::NodeSample { fanout } => {
            let g = ctx.graph()?;
            check_graph(g, n)?;
            SamplingScheme::NodeWise { fanout: *fanout }.validate(n)?;
            KernelState {
                k: nodewise_aggregate(g, &state.k, *fanout),
                theta: nodewise_aggregate(g, &state.theta, *fanout),
            }
        }
    };
    linalg::symmetrize(&mut out.k);
    linalg::symmetrize(&mut out.theta);
    Ok(out)
}

fn check_graph(g: &GraphSpec, n: usize) -> Result<()> {
    if g.n_nodes() != n {
        return Err(Error::DimensionMismatch {
            context: "graph size vs kernel state",
            expected: n,
            found: g.n_nodes(),
        });
    }
    Ok(())
}

/// Structural checks: nonempty, starts with `input`, node samples only
/// directly after a weight block.
pub fn validate_program(program: &[BlockInstr]) -> Result<()> {
    match program.first() {
        Some(BlockInstr::Input) => {}
        Some(other) => {
            return Err(Error::InvalidProgram(format!(
                "program must start with input, found {other:?}"
            )))
        }
        None => return Err(Error::InvalidProgram("empty program".into())),
    }
    validate_placement(program)
}

fn validate_placement(program: &[BlockInstr]) -> Result<()> {
    for (i, instr) in program.iter().enumerate() {
        match instr {
            BlockInstr::NodeSample { .. } => {
                let after_weight = i > 0
                    && matches!(
                        program[i - 1],
                        BlockInstr::Weight { .. } | BlockInstr::MixedWeight { .. }
                    );
                if !after_weight {
                    return Err(Error::InvalidProgram(format!(
                        "node_sample at position {i} must directly follow a weight block"
                    )));
                }
            }
            BlockInstr::IndependentAdd { left, right } => {
                if left.is_empty() || right.is_empty() {
                    return Err(Error::InvalidProgram("independent_add with an empty branch".into()));
                }
                validate_placement(left)?;
                validate_placement(right)?;
            }
            _ => {}
        }
    }
    Ok(())
}

fn run_from(state: &KernelState, program: &[BlockInstr], ctx: &ProgramContext<'_>) -> Result<KernelState> {
    let mut iter = program.iter();
    let Some(first) = iter.next() else {
        return Ok(state.clone());
    };
    let mut cur = apply_block(state, first, ctx)?;
    for instr in iter {
        cur = apply_block(&cur, instr, ctx)?;
    }
    Ok(cur)
}

/// Validate and run a full program.
pub fn run_program(program: &[BlockInstr], ctx: &ProgramContext<'_>) -> Result<KernelState> {
    validate_program(program)?;
    let n = ctx.n_nodes();
    if let Some(g) = ctx.graph {
        check_graph(g, n)?;
    }
    let empty = KernelState {
        k: Mat::zeros(n, n),
        theta: Mat::zeros(n, n),
    };
    run_from(&empty, program, ctx)
}

fn conv_block(scheme: &SamplingScheme) -> BlockInstr {
    match scheme {
        SamplingScheme::None => BlockInstr::GraphConv,
        SamplingScheme::NodeWise { fanout } => BlockInstr::NodeSample { fanout: *fanout },
        layer => BlockInstr::LayerSample {
            scheme: layer.clone(),
        },
    }
}

/// GCN as a program: `input` then per layer
/// `[activation,] weight, conv, bias` with the first activation omitted.
pub fn gcn_program(hyper: &GcnHyper, schedule: &SchemeSchedule) -> NetworkProgram {
    let mut program = vec![BlockInstr::Input];
    for l in 1..=hyper.n_layers {
        if l > 1 {
            program.push(BlockInstr::Activation { kind: hyper.activation });
        }
        program.push(BlockInstr::Weight { sigma_w2: hyper.sigma_w2 });
        program.push(conv_block(schedule.at(l)));
        program.push(BlockInstr::Bias { sigma_b2: hyper.sigma_b2 });
    }
    program
}

/// GraphSAGE: a self branch and an aggregated branch with independent
/// weights, then a bias. The aggregated branch samples per `schedule`.
pub fn graphsage_program(hyper: &GcnHyper, schedule: &SchemeSchedule) -> NetworkProgram {
    let weight = BlockInstr::Weight { sigma_w2: hyper.sigma_w2 };
    let mut program = vec![BlockInstr::Input];
    for l in 1..=hyper.n_layers {
        if l > 1 {
            program.push(BlockInstr::Activation { kind: hyper.activation });
        }
        program.push(BlockInstr::IndependentAdd {
            left: vec![weight.clone()],
            right: vec![weight.clone(), conv_block(schedule.at(l))],
        });
        program.push(BlockInstr::Bias { sigma_b2: hyper.sigma_b2 });
    }
    program
}

fn run_architecture(
    graph: &GraphSpec,
    c0: &FeatureMoment,
    hyper: &GcnHyper,
    program: NetworkProgram,
) -> Result<KernelPair> {
    hyper.validate()?;
    let state = run_program(&program, &ProgramContext::new(graph, c0))?;
    Ok(state.into_pair(hyper.n_layers))
}

pub fn gcn_kernels_via_program(
    graph: &GraphSpec,
    c0: &FeatureMoment,
    hyper: &GcnHyper,
    schedule: &SchemeSchedule,
) -> Result<KernelPair> {
    schedule.validate(hyper.n_layers, graph.n_nodes())?;
    run_architecture(graph, c0, hyper, gcn_program(hyper, schedule))
}

pub fn graphsage_kernels(graph: &GraphSpec, c0: &FeatureMoment, hyper: &GcnHyper) -> Result<KernelPair> {
    run_architecture(graph, c0, hyper, graphsage_program(hyper, &SchemeSchedule::none()))
}

pub fn graphsage_kernels_sampled(
    graph: &GraphSpec,
    c0: &FeatureMoment,
    hyper: &GcnHyper,
    schedule: &SchemeSchedule,
) -> Result<KernelPair> {
    schedule.validate(hyper.n_layers, graph.n_nodes())?;
    run_architecture(graph, c0, hyper, graphsage_program(hyper, schedule))
}

pub fn graphsage_nodewise_kernels(
    graph: &GraphSpec,
    c0: &FeatureMoment,
    hyper: &GcnHyper,
    fanout: usize,
) -> Result<KernelPair> {
    graphsage_kernels_sampled(graph, c0, hyper, &SamplingScheme::NodeWise { fanout }.into())
}
