//! Layer-level task decomposition into a dependency DAG with level priorities.
//!
//! Forward graphs hold one node per output element (one per neuron for dense
//! layers); a node depends on the producer nodes inside its receptive field.
//! Backward graphs start from a loss node, fan out into per-element delta
//! nodes whose dependencies follow the inverse receptive fields, and finish
//! with per-filter (or per-neuron) gradient nodes feeding a single update
//! node.

use nn_core::{conv_output_shape, pool_output_shape, Layer, Network, Scalar};

use crate::error::ParallelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskKind {
    ConvTile {
        layer: usize,
        filter: usize,
        row: usize,
        col: usize,
    },
    Pool {
        layer: usize,
        channel: usize,
        row: usize,
        col: usize,
    },
    Dense {
        layer: usize,
        neuron: usize,
    },
    Loss,
    Delta {
        layer: usize,
        index: usize,
    },
    Gradient {
        layer: usize,
        group: usize,
    },
    Update,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskNode {
    pub id: usize,
    pub kind: TaskKind,
    pub deps: Vec<usize>,
    /// Longest-path depth from any entrance node; filled by
    /// [`assign_priorities`].
    pub level: usize,
    /// Entrance tasks carry the maximum priority; priorities decrease
    /// strictly per level and are equal within a level.
    pub priority: usize,
    /// Multiply-accumulate estimate used for min-workload placement.
    pub cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskDag {
    pub nodes: Vec<TaskNode>,
}

impl TaskDag {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, kind: TaskKind, deps: Vec<usize>, cost: f64) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TaskNode {
            id,
            kind,
            deps,
            level: 0,
            priority: 0,
            cost,
        });
        id
    }
}

/// Inclusive range of output indices whose windows cover padded position `p`.
fn covering(p: usize, extent: usize, stride: usize, out_len: usize) -> (usize, usize) {
    let lo = if p + 1 > extent {
        (p + 1 - extent).div_ceil(stride)
    } else {
        0
    };
    let hi = (p / stride).min(out_len.saturating_sub(1));
    (lo, hi)
}

/// Builds the forward or backward task DAG for a network and input shape.
pub fn build_task_dag<T: Scalar>(
    network: &Network<T>,
    input_shape: (usize, usize, usize),
    phase: Phase,
) -> Result<TaskDag, ParallelError> {
    let shapes = network.validate(input_shape)?;
    match phase {
        Phase::Forward => build_forward(network, input_shape, &shapes),
        Phase::Backward => build_backward(network, input_shape, &shapes),
    }
}

fn build_forward<T: Scalar>(
    network: &Network<T>,
    input_shape: (usize, usize, usize),
    shapes: &[(usize, usize, usize)],
) -> Result<TaskDag, ParallelError> {
    let mut dag = TaskDag::default();
    // element node ids of the previous layer, row-major (depth, row, col)
    let mut prev_ids: Vec<usize> = Vec::new();
    let mut prev_shape = input_shape;

    for (l, layer) in network.layers.iter().enumerate() {
        let out_shape = shapes[l];
        let mut ids = Vec::with_capacity(out_shape.0 * out_shape.1 * out_shape.2);
        match layer {
            Layer::Conv {
                filters,
                stride,
                padding,
                ..
            } => {
                let (fd, fh, fw) = filters[0].weights.shape();
                let (_, ha, wa) =
                    conv_output_shape(prev_shape, filters[0].weights.shape(), *stride, *padding)?;
                let cost = (fd * fh * fw) as f64;
                for f in 0..filters.len() {
                    for i in 0..ha {
                        for j in 0..wa {
                            let mut deps = Vec::new();
                            if l > 0 {
                                for d in 0..prev_shape.0 {
                                    for m in 0..fh {
                                        let pr = i * stride + m;
                                        if pr < *padding || pr - padding >= prev_shape.1 {
                                            continue;
                                        }
                                        for n in 0..fw {
                                            let pc = j * stride + n;
                                            if pc < *padding || pc - padding >= prev_shape.2 {
                                                continue;
                                            }
                                            let r = pr - padding;
                                            let c = pc - padding;
                                            deps.push(
                                                prev_ids
                                                    [(d * prev_shape.1 + r) * prev_shape.2 + c],
                                            );
                                        }
                                    }
                                }
                            }
                            ids.push(dag.push(
                                TaskKind::ConvTile {
                                    layer: l,
                                    filter: f,
                                    row: i,
                                    col: j,
                                },
                                deps,
                                cost,
                            ));
                        }
                    }
                }
            }
            Layer::Pool {
                window, stride, ..
            } => {
                let (d_out, ho, wo) = pool_output_shape(prev_shape, *window, *stride)?;
                let cost = (window * window) as f64;
                for d in 0..d_out {
                    for i in 0..ho {
                        for j in 0..wo {
                            let mut deps = Vec::new();
                            if l > 0 {
                                for m in 0..*window {
                                    for n in 0..*window {
                                        let r = i * stride + m;
                                        let c = j * stride + n;
                                        deps.push(
                                            prev_ids[(d * prev_shape.1 + r) * prev_shape.2 + c],
                                        );
                                    }
                                }
                            }
                            ids.push(dag.push(
                                TaskKind::Pool {
                                    layer: l,
                                    channel: d,
                                    row: i,
                                    col: j,
                                },
                                deps,
                                cost,
                            ));
                        }
                    }
                }
            }
            Layer::Dense { weights, .. } => {
                let cost = weights.cols() as f64;
                for o in 0..weights.rows() {
                    let deps = if l > 0 { prev_ids.clone() } else { Vec::new() };
                    ids.push(dag.push(TaskKind::Dense { layer: l, neuron: o }, deps, cost));
                }
            }
        }
        prev_ids = ids;
        prev_shape = out_shape;
    }
    Ok(dag)
}

fn build_backward<T: Scalar>(
    network: &Network<T>,
    input_shape: (usize, usize, usize),
    shapes: &[(usize, usize, usize)],
) -> Result<TaskDag, ParallelError> {
    let n_layers = network.layers.len();
    let mut dag = TaskDag::default();
    let out_shape = shapes[n_layers - 1];
    let loss = dag.push(
        TaskKind::Loss,
        Vec::new(),
        (out_shape.0 * out_shape.1 * out_shape.2) as f64,
    );

    // Delta nodes, from the output layer towards the input. delta_ids[l]
    // holds the node ids for layer l's delta elements.
    let mut delta_ids: Vec<Vec<usize>> = vec![Vec::new(); n_layers];
    for l in (0..n_layers).rev() {
        let shape = shapes[l];
        let count = shape.0 * shape.1 * shape.2;
        let mut ids = Vec::with_capacity(count);
        for idx in 0..count {
            let deps = if l == n_layers - 1 {
                vec![loss]
            } else {
                // dependencies on the next layer's delta nodes per the
                // inverse receptive field of layer l+1
                let d = idx / (shape.1 * shape.2);
                let r = (idx / shape.2) % shape.1;
                let c = idx % shape.2;
                delta_deps(&network.layers[l + 1], shapes[l + 1], shape, &delta_ids[l + 1], d, r, c)
            };
            let cost = delta_cost(&network.layers[l.min(n_layers - 1)]);
            ids.push(dag.push(TaskKind::Delta { layer: l, index: idx }, deps, cost));
        }
        delta_ids[l] = ids;
    }

    // Gradient nodes: one per conv filter / dense neuron, depending on the
    // layer's delta nodes; a final update node depends on all gradients.
    let mut gradient_ids = Vec::new();
    for (l, layer) in network.layers.iter().enumerate() {
        match layer {
            Layer::Conv { filters, .. } => {
                let (_, ha, wa) = shapes[l];
                let per_filter = ha * wa;
                let (fd, fh, fw) = filters[0].weights.shape();
                for f in 0..filters.len() {
                    let deps: Vec<usize> = delta_ids[l][f * per_filter..(f + 1) * per_filter].to_vec();
                    gradient_ids.push(dag.push(
                        TaskKind::Gradient { layer: l, group: f },
                        deps,
                        (fd * fh * fw * per_filter) as f64,
                    ));
                }
            }
            Layer::Pool { .. } => {}
            Layer::Dense { weights, .. } => {
                for o in 0..weights.rows() {
                    gradient_ids.push(dag.push(
                        TaskKind::Gradient { layer: l, group: o },
                        vec![delta_ids[l][o]],
                        weights.cols() as f64,
                    ));
                }
            }
        }
    }
    let param_count: f64 = nn_core::layout_of(network)
        .iter()
        .map(|lay| lay.param_count() as f64)
        .sum();
    dag.push(TaskKind::Update, gradient_ids, param_count);
    let _ = input_shape;
    Ok(dag)
}

fn delta_cost<T: Scalar>(layer: &Layer<T>) -> f64 {
    match layer {
        Layer::Conv { filters, .. } => {
            let (_, fh, fw) = filters[0].weights.shape();
            (filters.len() * fh * fw) as f64
        }
        Layer::Pool { window, .. } => (window * window) as f64,
        Layer::Dense { weights, .. } => weights.rows() as f64,
    }
}

/// Delta-node dependencies of element (d, r, c) of layer `l` on layer
/// `l+1`'s delta nodes.
fn delta_deps<T: Scalar>(
    next_layer: &Layer<T>,
    next_shape: (usize, usize, usize),
    shape: (usize, usize, usize),
    next_ids: &[usize],
    d: usize,
    r: usize,
    c: usize,
) -> Vec<usize> {
    let mut deps = Vec::new();
    match next_layer {
        Layer::Conv {
            filters,
            stride,
            padding,
            ..
        } => {
            let (_, fh, fw) = filters[0].weights.shape();
            let (i_lo, i_hi) = covering(r + padding, fh, *stride, next_shape.1);
            let (j_lo, j_hi) = covering(c + padding, fw, *stride, next_shape.2);
            for f in 0..next_shape.0 {
                for i in i_lo..=i_hi {
                    for j in j_lo..=j_hi {
                        deps.push(next_ids[(f * next_shape.1 + i) * next_shape.2 + j]);
                    }
                }
            }
        }
        Layer::Pool { window, stride, .. } => {
            let (i_lo, i_hi) = covering(r, *window, *stride, next_shape.1);
            let (j_lo, j_hi) = covering(c, *window, *stride, next_shape.2);
            for i in i_lo..=i_hi {
                for j in j_lo..=j_hi {
                    deps.push(next_ids[(d * next_shape.1 + i) * next_shape.2 + j]);
                }
            }
        }
        Layer::Dense { .. } => {
            let _ = shape;
            deps.extend_from_slice(next_ids);
        }
    }
    deps
}

/// Assigns longest-path levels and per-level priorities: entrance tasks get
/// the maximum priority; each level down decreases it by one; tasks at the
/// same level share one priority. Fails on cycles.
pub fn assign_priorities(dag: &mut TaskDag) -> Result<(), ParallelError> {
    let n = dag.nodes.len();
    let mut indegree = vec![0usize; n];
    let mut successors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for node in &dag.nodes {
        for &dep in &node.deps {
            if dep >= n {
                return Err(ParallelError::UnknownDependency {
                    task: node.id,
                    dep,
                });
            }
            successors[dep].push(node.id);
            indegree[node.id] += 1;
        }
    }
    let mut queue: std::collections::VecDeque<usize> = (0..n)
        .filter(|&i| indegree[i] == 0)
        .collect();
    let mut level = vec![0usize; n];
    let mut seen = 0usize;
    while let Some(u) = queue.pop_front() {
        seen += 1;
        for &v in &successors[u] {
            level[v] = level[v].max(level[u] + 1);
            indegree[v] -= 1;
            if indegree[v] == 0 {
                queue.push_back(v);
            }
        }
    }
    if seen != n {
        let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap_or(0);
        return Err(ParallelError::Cycle(stuck));
    }
    let max_level = level.iter().copied().max().unwrap_or(0);
    for node in dag.nodes.iter_mut() {
        node.level = level[node.id];
        node.priority = max_level - level[node.id] + 1;
    }
    Ok(())
}
