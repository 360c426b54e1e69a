//! Depth-wise histogram regression trees.

use serde::{Deserialize, Serialize};

use super::binning::BinnedMatrix;
use super::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A regression tree stored as a node arena with the root at index 0.
/// Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_values(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { value } => Some(*value),
                _ => None,
            })
            .collect()
    }
}

/// How a leaf turns the rows it holds into a constant.
#[derive(Debug, Clone, Copy)]
pub enum LeafRule<'a> {
    /// Mean of the gradients (squared error, where the negative gradient is
    /// the residual).
    MeanGradient,
    /// Empirical τ-quantile of the residuals (pinball).
    ResidualQuantile { tau: f64, residuals: &'a [f64] },
}

#[inline]
fn soft_threshold(x: f64, lambda: f64) -> f64 {
    x.signum() * (x.abs() - lambda).max(0.0)
}

#[inline]
fn split_score(g: f64, n: f64, cfg: &TrainConfig) -> f64 {
    let s = soft_threshold(g, cfg.lambda_l1);
    s * s / (n + cfg.lambda_l2)
}

/// Type-1 empirical quantile `x_(⌈τn⌉)`; reorders `values`.
pub fn empirical_quantile(values: &mut [f64], tau: f64) -> f64 {
    let n = values.len();
    let k = ((tau * n as f64 - 1e-9).ceil() as usize).clamp(1, n) - 1;
    let (_, v, _) = values.select_nth_unstable_by(k, f64::total_cmp);
    *v
}

fn leaf_value(rows: &[u32], gradients: &[f64], rule: LeafRule<'_>, cfg: &TrainConfig) -> f64 {
    let n = rows.len() as f64;
    let stat = match rule {
        LeafRule::MeanGradient => rows.iter().map(|&r| gradients[r as usize]).sum::<f64>() / n,
        LeafRule::ResidualQuantile { tau, residuals } => {
            let mut vals: Vec<f64> = rows.iter().map(|&r| residuals[r as usize]).collect();
            empirical_quantile(&mut vals, tau)
        }
    };
    if cfg.lambda_l1 == 0.0 && cfg.lambda_l2 == 0.0 {
        stat
    } else {
        soft_threshold(stat * n, cfg.lambda_l1) / (n + cfg.lambda_l2)
    }
}

#[derive(Clone)]
struct Histogram {
    // Per feature, per bin: gradient sum and row count.
    grad: Vec<Vec<f64>>,
    count: Vec<Vec<u32>>,
}

impl Histogram {
    fn build(data: &BinnedMatrix, rows: &[u32], gradients: &[f64]) -> Self {
        let mut grad = Vec::with_capacity(data.n_cols());
        let mut count = Vec::with_capacity(data.n_cols());
        for (col, mapper) in data.columns.iter().zip(&data.mappers) {
            let mut g = vec![0.0; mapper.num_bins()];
            let mut c = vec![0u32; mapper.num_bins()];
            for &r in rows {
                let b = col[r as usize] as usize;
                g[b] += gradients[r as usize];
                c[b] += 1;
            }
            grad.push(g);
            count.push(c);
        }
        Self { grad, count }
    }

    fn minus(&self, other: &Histogram) -> Histogram {
        Histogram {
            grad: self
                .grad
                .iter()
                .zip(&other.grad)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
            count: self
                .count
                .iter()
                .zip(&other.count)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
        }
    }
}

struct SplitChoice {
    gain: f64,
    feature: usize,
    bin: u16,
}

fn best_split(hist: &Histogram, g_total: f64, n_total: usize, cfg: &TrainConfig, min_gain: f64) -> Option<SplitChoice> {
    let parent = split_score(g_total, n_total as f64, cfg);
    let mut best: Option<SplitChoice> = None;
    for (f, (grad, count)) in hist.grad.iter().zip(&hist.count).enumerate() {
        let mut gl = 0.0;
        let mut nl = 0usize;
        for b in 0..grad.len().saturating_sub(1) {
            gl += grad[b];
            nl += count[b] as usize;
            let nr = n_total - nl;
            if nl < cfg.min_data_in_leaf {
                continue;
            }
            if nr < cfg.min_data_in_leaf {
                break;
            }
            let gain = split_score(gl, nl as f64, cfg) + split_score(g_total - gl, nr as f64, cfg) - parent;
            if gain > min_gain && best.as_ref().is_none_or(|s| gain > s.gain) {
                best = Some(SplitChoice {
                    gain,
                    feature: f,
                    bin: b as u16,
                });
            }
        }
    }
    best
}

struct Pending {
    node: usize,
    rows: Vec<u32>,
    hist: Histogram,
    grad_sum: f64,
}

/// Grow one tree on the given rows.
///
/// Splits maximise `S(G_L, n_L) + S(G_R, n_R) − S(G, n)` with
/// `S(G, n) = soft(G, λ1)² / (n + λ2)` over histogram bin boundaries.
/// Growth is level by level up to `max_depth`; within a level the highest
/// gains are taken first until `num_leaves` is reached.
pub fn fit_tree(
    data: &BinnedMatrix,
    rows: Vec<u32>,
    gradients: &[f64],
    rule: LeafRule<'_>,
    cfg: &TrainConfig,
) -> Tree {
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut leaves = 1usize;
    let grad_sum: f64 = rows.iter().map(|&r| gradients[r as usize]).sum();
    let sq_sum: f64 = rows.iter().map(|&r| gradients[r as usize].powi(2)).sum();
    let min_gain = 1e-12 * sq_sum;
    let hist = Histogram::build(data, &rows, gradients);
    let mut level = vec![Pending {
        node: 0,
        rows,
        hist,
        grad_sum,
    }];
    let mut finished: Vec<(usize, Vec<u32>)> = Vec::new();

    for _depth in 0..cfg.max_depth {
        let mut candidates: Vec<(SplitChoice, Pending)> = Vec::new();
        for p in level.drain(..) {
            match best_split(&p.hist, p.grad_sum, p.rows.len(), cfg, min_gain) {
                Some(s) => candidates.push((s, p)),
                None => finished.push((p.node, p.rows)),
            }
        }
        // Stable sort keeps arena order among equal gains.
        candidates.sort_by(|a, b| b.0.gain.total_cmp(&a.0.gain));

        let mut next = Vec::new();
        for (split, p) in candidates {
            if leaves >= cfg.num_leaves {
                finished.push((p.node, p.rows));
                continue;
            }
            let col = &data.columns[split.feature];
            let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
                p.rows.iter().partition(|&&r| col[r as usize] <= split.bin);
            let left_is_small = left_rows.len() <= right_rows.len();
            let small_rows = if left_is_small { &left_rows } else { &right_rows };
            let small = Histogram::build(data, small_rows, gradients);
            let large = p.hist.minus(&small);
            let (lh, rh) = if left_is_small { (small, large) } else { (large, small) };
            let gl: f64 = left_rows.iter().map(|&r| gradients[r as usize]).sum();
            let gr: f64 = right_rows.iter().map(|&r| gradients[r as usize]).sum();

            let left = nodes.len();
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            nodes[p.node] = Node::Split {
                feature: split.feature,
                threshold: data.mappers[split.feature].thresholds[split.bin as usize],
                left,
                right: left + 1,
            };
            leaves += 1;
            next.push(Pending {
                node: left,
                rows: left_rows,
                hist: lh,
                grad_sum: gl,
            });
            next.push(Pending {
                node: left + 1,
                rows: right_rows,
                hist: rh,
                grad_sum: gr,
            });
        }
        if next.is_empty() {
            break;
        }
        level = next;
    }
    finished.extend(level.into_iter().map(|p| (p.node, p.rows)));

    for (node, rows) in finished {
        let value = if rows.is_empty() {
            0.0
        } else {
            leaf_value(&rows, gradients, rule, cfg)
        };
        nodes[node] = Node::Leaf { value };
    }
    Tree { nodes }
}
