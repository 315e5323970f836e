//! Distinctiveness pruning of the fully connected hidden layer.
//!
//! Each hidden neuron is described by its squashed, centered activation over a
//! pattern set: `sigmoid(z) - 0.5` of the pre-ReLU output. Two neurons whose
//! vectors point the same way (angle ≤ α) do the same job, so one is dropped
//! and its outgoing weights are folded into the other. Two neurons pointing
//! opposite ways (angle ≥ 180° − α) roughly cancel, so both are dropped.
//! Complementary pairs are handled first, then similar pairs, both greedily
//! over a single precomputed angle matrix.

use std::path::Path;

use serde::Serialize;

use crate::dataset::{DataSplit, NormalizedDataset};
use crate::error::{Error, Result};
use crate::harness::argmax;
use crate::layers::LinearParams;
use crate::model::eval::{FeatureSet, EVAL_CHUNK};
use crate::model::{Architecture, Network};
use crate::tensor::{dot, gemm_nt, Tensor};

pub const DEFAULT_PATTERN_LIMIT: usize = 10_000;
pub const DEFAULT_NORM_EPSILON: f64 = 1e-9;

/// Largest double below 0.5. Centered values are clamped to this so they
/// stay strictly inside (-0.5, 0.5) even where the sigmoid rounds to 0 or 1.
const CENTERED_BOUND: f64 = 0.5 - f64::EPSILON / 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PruneConfig {
    pub angle_threshold_deg: f64,
    pub pattern_limit: usize,
    pub norm_epsilon: f64,
}

impl PruneConfig {
    pub fn new(angle_threshold_deg: f64) -> Result<Self> {
        let cfg = Self {
            angle_threshold_deg,
            pattern_limit: DEFAULT_PATTERN_LIMIT,
            norm_epsilon: DEFAULT_NORM_EPSILON,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        validate_angle(self.angle_threshold_deg)?;
        if self.pattern_limit == 0 {
            return Err(Error::Config("pattern limit must be positive".into()));
        }
        if !(self.norm_epsilon >= 0.0 && self.norm_epsilon.is_finite()) {
            return Err(Error::Config(format!("bad norm epsilon {}", self.norm_epsilon)));
        }
        Ok(())
    }
}

/// At 90° and beyond the similar and complementary bands overlap.
fn validate_angle(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 90.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("angle threshold {alpha} outside (0, 90) degrees")))
    }
}

/// `sigmoid(z) - 0.5`, computed as `tanh(z/2)/2` to avoid cancellation near zero.
pub fn squash_centered(z: f64) -> f64 {
    (0.5 * (0.5 * z).tanh()).clamp(-CENTERED_BOUND, CENTERED_BOUND)
}

/// Centered activations, one row per hidden neuron and one column per pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    values: Tensor,
    source: DataSplit,
}

impl ActivationMatrix {
    /// Wraps an `[H, P]` matrix of already-centered values.
    pub fn from_values(values: Tensor, source: DataSplit) -> Result<Self> {
        if values.dims().len() != 2 {
            return Err(Error::shape(format!("activation matrix must be rank 2, got {}", values.shape())));
        }
        if let Some(v) = values.data().iter().find(|v| !(v.abs() < 0.5)) {
            return Err(Error::Config(format!("centered activation {v} outside (-0.5, 0.5)")));
        }
        Ok(Self { values, source })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn hidden(&self) -> usize {
        self.values.dims()[0]
    }

    pub fn pattern_count(&self) -> usize {
        self.values.dims()[1]
    }

    pub fn source(&self) -> DataSplit {
        self.source
    }

    pub fn row(&self, h: usize) -> &[f64] {
        let p = self.pattern_count();
        &self.values.data()[h * p..(h + 1) * p]
    }
}

/// Eval-mode hidden activations over the first `limit` patterns, in dataset order.
pub fn collect_activations(net: &Network, patterns: &NormalizedDataset, limit: usize) -> Result<ActivationMatrix> {
    let n = patterns.len().min(limit);
    if n == 0 {
        return Err(Error::Empty("no patterns to collect activations over".into()));
    }
    let hidden = net.hidden_size();
    let mut values = vec![0.0; hidden * n];
    let order: Vec<usize> = (0..n).collect();
    for chunk in order.chunks(EVAL_CHUNK) {
        let images = patterns.images(chunk)?;
        let pre = net.fc1_pre_relu(&net.features(&images)?)?;
        for (b, row) in pre.data().chunks_exact(hidden).enumerate() {
            let p = chunk[b];
            for (h, &z) in row.iter().enumerate() {
                values[h * n + p] = squash_centered(z);
            }
        }
    }
    ActivationMatrix::from_values(Tensor::from_vec(&[hidden, n], values)?, patterns.raw().split())
}

/// Angle from a dot product and the two squared norms; `None` when either
/// norm is below `eps`. Written so that `(uv, uu, vv)` and `(uv, vv, uu)`
/// give the same bits and `uu == vv == uv` gives exactly 0.
fn angle_from_gram(uv: f64, uu: f64, vv: f64, eps: f64) -> Option<f64> {
    if uu.sqrt() < eps || vv.sqrt() < eps {
        return None;
    }
    let cos = (uv / (uu * vv).sqrt()).clamp(-1.0, 1.0);
    Some(cos.acos().to_degrees())
}

/// Angle between two vectors in degrees, or `None` if either is shorter than `eps`.
pub fn angle_deg(u: &[f64], v: &[f64], eps: f64) -> Result<Option<f64>> {
    if u.len() != v.len() {
        return Err(Error::shape(format!("angle between vectors of length {} and {}", u.len(), v.len())));
    }
    Ok(angle_from_gram(dot(u, v), dot(u, u), dot(v, v), eps))
}

/// All pairwise angles of an activation matrix, computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleMatrix {
    n: usize,
    angles: Vec<f64>,
    norms: Vec<f64>,
    eps: f64,
}

impl AngleMatrix {
    /// The Gram matrix comes from one GEMM whose per-entry sums run in the
    /// same order as [`dot`], so entries equal [`angle_deg`] bit for bit.
    pub fn compute(acts: &ActivationMatrix, eps: f64) -> Self {
        let (n, p) = (acts.hidden(), acts.pattern_count());
        let a = acts.values().data();
        let mut gram = vec![0.0; n * n];
        gemm_nt(n, p, n, a, a, &mut gram);
        let diag: Vec<f64> = (0..n).map(|i| gram[i * n + i]).collect();
        let mut angles = vec![f64::NAN; n * n];
        for i in 0..n {
            for j in 0..n {
                if let Some(a) = angle_from_gram(gram[i * n + j], diag[i], diag[j], eps) {
                    angles[i * n + j] = a;
                }
            }
        }
        Self {
            n,
            angles,
            norms: diag.iter().map(|d| d.sqrt()).collect(),
            eps,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let a = self.angles[i * self.n + j];
        (!a.is_nan()).then_some(a)
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Neurons whose activation vector is too short to have a direction.
    pub fn excluded(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.norms[i] < self.eps).collect()
    }

    /// Defined pairs `(angle, i, j)` with `i < j` that satisfy `keep`.
    fn pairs(&self, keep: impl Fn(f64) -> bool) -> Vec<(f64, usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if let Some(a) = self.get(i, j).filter(|&a| keep(a)) {
                    out.push((a, i, j));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplementaryPair {
    pub first: usize,
    pub second: usize,
    pub angle_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimilarMerge {
    pub kept: usize,
    pub removed: usize,
    pub angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrunePlan {
    pub hidden: usize,
    pub complementary_removals: Vec<ComplementaryPair>,
    pub similar_merges: Vec<SimilarMerge>,
    /// Surviving neuron indices, ascending.
    pub kept: Vec<usize>,
    /// Neurons left out of pairing because their activation norm is too small.
    pub excluded: Vec<usize>,
}

impl PrunePlan {
    /// The plan that keeps every neuron.
    pub fn identity(hidden: usize) -> Self {
        Self {
            hidden,
            complementary_removals: Vec::new(),
            similar_merges: Vec::new(),
            kept: (0..hidden).collect(),
            excluded: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.complementary_removals.is_empty() && self.similar_merges.is_empty()
    }

    /// Removed indices, ascending.
    pub fn removed(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self
            .complementary_removals
            .iter()
            .flat_map(|p| [p.first, p.second])
            .chain(self.similar_merges.iter().map(|m| m.removed))
            .collect();
        r.sort_unstable();
        r
    }

    pub fn post_size(&self) -> usize {
        self.kept.len()
    }

    pub fn removal_fraction(&self) -> f64 {
        if self.hidden == 0 {
            return 0.0;
        }
        1.0 - self.kept.len() as f64 / self.hidden as f64
    }

    /// Checks that every index is in range, touched by at most one action, and
    /// that kept and removed partition `0..hidden`.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.hidden];
        let mut touch = |i: usize| -> Result<()> {
            match seen.get_mut(i) {
                None => Err(Error::Plan(format!("index {i} out of range for {} neurons", self.hidden))),
                Some(true) => Err(Error::Plan(format!("index {i} appears in more than one action"))),
                Some(s) => {
                    *s = true;
                    Ok(())
                }
            }
        };
        for p in &self.complementary_removals {
            touch(p.first)?;
            touch(p.second)?;
        }
        for m in &self.similar_merges {
            touch(m.kept)?;
            touch(m.removed)?;
        }
        let removed = self.removed();
        let mut in_kept = vec![false; self.hidden];
        for w in self.kept.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Plan("kept indices must be strictly ascending".into()));
            }
        }
        for &k in &self.kept {
            if k >= self.hidden {
                return Err(Error::Plan(format!("kept index {k} out of range for {} neurons", self.hidden)));
            }
            in_kept[k] = true;
        }
        if let Some(&r) = removed.iter().find(|&&r| in_kept[r]) {
            return Err(Error::Plan(format!("index {r} is both kept and removed")));
        }
        if self.kept.len() + removed.len() != self.hidden {
            return Err(Error::Plan(format!(
                "{} kept + {} removed does not cover {} neurons",
                self.kept.len(),
                removed.len(),
                self.hidden
            )));
        }
        Ok(())
    }
}

/// Greedy two-phase plan over a fixed angle matrix.
///
/// Phase one takes pairs with angle ≥ 180° − α, widest first, and removes both
/// members. Phase two takes pairs with angle ≤ α among the survivors, narrowest
/// first, keeping the lower index. Ties go to the lexicographically smaller
/// pair. A neuron takes part in at most one action.
pub fn plan_from_angles(angles: &AngleMatrix, alpha: f64) -> Result<PrunePlan> {
    validate_angle(alpha)?;
    let n = angles.len();
    let mut alive = vec![true; n];

    let mut comp = angles.pairs(|a| a >= 180.0 - alpha);
    comp.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut complementary_removals = Vec::new();
    for (a, i, j) in comp {
        if alive[i] && alive[j] {
            alive[i] = false;
            alive[j] = false;
            complementary_removals.push(ComplementaryPair { first: i, second: j, angle_deg: a });
        }
    }

    let mut sim = angles.pairs(|a| a <= alpha);
    sim.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut similar_merges = Vec::new();
    let mut kept_mask = alive.clone();
    for (a, i, j) in sim {
        if alive[i] && alive[j] {
            alive[i] = false;
            alive[j] = false;
            kept_mask[j] = false;
            similar_merges.push(SimilarMerge { kept: i, removed: j, angle_deg: a });
        }
    }

    Ok(PrunePlan {
        hidden: n,
        complementary_removals,
        similar_merges,
        kept: (0..n).filter(|&i| kept_mask[i]).collect(),
        excluded: angles.excluded(),
    })
}

pub fn build_plan(acts: &ActivationMatrix, cfg: &PruneConfig) -> Result<PrunePlan> {
    cfg.validate()?;
    plan_from_angles(&AngleMatrix::compute(acts, cfg.norm_epsilon), cfg.angle_threshold_deg)
}

/// Builds the smaller network a plan describes. The conv stack and the kept
/// neurons' incoming weights are copied as is; each merge adds the removed
/// neuron's outgoing column to the keeper's; other removed columns are dropped.
pub fn apply_plan(net: &Network, plan: &PrunePlan) -> Result<Network> {
    let hidden = net.hidden_size();
    if plan.hidden != hidden {
        return Err(Error::Plan(format!("plan is for {} neurons, network has {hidden}", plan.hidden)));
    }
    plan.validate()?;
    if plan.kept.is_empty() {
        return Err(Error::Plan("plan removes every hidden neuron".into()));
    }
    let features = net.fc1.in_features();
    let classes = net.fc2.out_features();
    let h2 = plan.kept.len();

    let w1 = net.fc1.weights.data();
    let b1 = net.fc1.bias.data();
    let mut fc1_w = Vec::with_capacity(h2 * features);
    let mut fc1_b = Vec::with_capacity(h2);
    for &k in &plan.kept {
        fc1_w.extend_from_slice(&w1[k * features..(k + 1) * features]);
        fc1_b.push(b1[k]);
    }

    let mut w2 = net.fc2.weights.data().to_vec();
    for m in &plan.similar_merges {
        for c in 0..classes {
            w2[c * hidden + m.kept] += w2[c * hidden + m.removed];
        }
    }
    let mut fc2_w = Vec::with_capacity(classes * h2);
    for c in 0..classes {
        fc2_w.extend(plan.kept.iter().map(|&k| w2[c * hidden + k]));
    }

    let fc1 = LinearParams::from_parts(Tensor::from_vec(&[h2, features], fc1_w)?, Tensor::from_vec(&[h2], fc1_b)?)?;
    let fc2 = LinearParams::from_parts(Tensor::from_vec(&[classes, h2], fc2_w)?, net.fc2.bias.clone())?;
    let mut convs = net.convs.clone();
    for c in &mut convs {
        c.grad_weights.fill(0.0);
        c.grad_bias.fill(0.0);
    }
    let arch = Architecture {
        hidden: h2,
        ..net.architecture().clone()
    };
    Network::from_parts(arch, convs, fc1, fc2)
}

/// Outcome of pruning one network at one angle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneReport {
    pub angle_threshold_deg: f64,
    pub pattern_count: usize,
    pub pre_size: usize,
    pub post_size: usize,
    pub pre_accuracy: f64,
    pub post_accuracy: f64,
    pub removal_fraction: f64,
    /// Activation vector norm of every original hidden neuron.
    pub norms: Vec<f64>,
    pub plan: PrunePlan,
}

impl PruneReport {
    /// Accuracy lost, in percentage points.
    pub fn acc_drop_points(&self) -> f64 {
        100.0 * (self.pre_accuracy - self.post_accuracy)
    }

    /// Accuracy lost as a fraction of the pre-prune accuracy.
    pub fn acc_drop_relative(&self) -> f64 {
        if self.pre_accuracy == 0.0 {
            0.0
        } else {
            (self.pre_accuracy - self.post_accuracy) / self.pre_accuracy
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// A trained network with its angle matrix and test features precomputed, so
/// that many thresholds can be tried cheaply.
#[derive(Debug, Clone)]
pub struct PruneSession<'a> {
    net: &'a Network,
    angles: AngleMatrix,
    pattern_count: usize,
    test: FeatureSet,
    pre_accuracy: f64,
}

impl<'a> PruneSession<'a> {
    pub fn new(
        net: &'a Network,
        patterns: &NormalizedDataset,
        test: &NormalizedDataset,
        pattern_limit: usize,
        norm_epsilon: f64,
    ) -> Result<Self> {
        let acts = collect_activations(net, patterns, pattern_limit)?;
        let test = FeatureSet::compute(net, test, None)?;
        let pre_accuracy = test.accuracy(net)?;
        Ok(Self {
            net,
            angles: AngleMatrix::compute(&acts, norm_epsilon),
            pattern_count: acts.pattern_count(),
            test,
            pre_accuracy,
        })
    }

    pub fn angles(&self) -> &AngleMatrix {
        &self.angles
    }

    pub fn pre_accuracy(&self) -> f64 {
        self.pre_accuracy
    }

    /// Prunes at `alpha` and scores the result on the test features. When
    /// nothing survives, the network collapses to its output bias and the
    /// returned network is `None`.
    pub fn prune(&self, alpha: f64) -> Result<(PruneReport, Option<Network>)> {
        let plan = plan_from_angles(&self.angles, alpha)?;
        let (pruned, post_accuracy) = if plan.kept.is_empty() {
            let class = argmax(self.net.fc2.bias.data());
            (None, self.test.constant_accuracy(class))
        } else {
            let pruned = apply_plan(self.net, &plan)?;
            let acc = self.test.accuracy(&pruned)?;
            (Some(pruned), acc)
        };
        let report = PruneReport {
            angle_threshold_deg: alpha,
            pattern_count: self.pattern_count,
            pre_size: plan.hidden,
            post_size: plan.post_size(),
            pre_accuracy: self.pre_accuracy,
            post_accuracy,
            removal_fraction: plan.removal_fraction(),
            norms: self.angles.norms().to_vec(),
            plan,
        };
        Ok((report, pruned))
    }
}

/// Collect, plan, rebuild and evaluate in one step.
pub fn prune_and_evaluate(
    net: &Network,
    patterns: &NormalizedDataset,
    test: &NormalizedDataset,
    cfg: &PruneConfig,
) -> Result<(PruneReport, Option<Network>)> {
    cfg.validate()?;
    PruneSession::new(net, patterns, test, cfg.pattern_limit, cfg.norm_epsilon)?.prune(cfg.angle_threshold_deg)
}

/// Appends a copy of hidden neuron `index` (same incoming row and bias). The
/// original keeps outgoing column `column`; the copy gets `original - column`,
/// so the network computes the same function up to rounding.
pub fn duplicate_hidden_neuron(net: &Network, index: usize, column: &[f64]) -> Result<Network> {
    let hidden = net.hidden_size();
    let classes = net.fc2.out_features();
    let features = net.fc1.in_features();
    if index >= hidden {
        return Err(Error::Plan(format!("neuron {index} out of range for {hidden} neurons")));
    }
    if column.len() != classes {
        return Err(Error::shape(format!("column of length {} for {classes} classes", column.len())));
    }
    let mut w1 = net.fc1.weights.data().to_vec();
    w1.extend_from_within(index * features..(index + 1) * features);
    let mut b1 = net.fc1.bias.data().to_vec();
    b1.push(b1[index]);

    let w2 = net.fc2.weights.data();
    let mut fc2_w = Vec::with_capacity(classes * (hidden + 1));
    for c in 0..classes {
        let row = &w2[c * hidden..(c + 1) * hidden];
        fc2_w.extend_from_slice(row);
        fc2_w[c * (hidden + 1) + index] = column[c];
        fc2_w.push(row[index] - column[c]);
    }
    let fc1 = LinearParams::from_parts(Tensor::from_vec(&[hidden + 1, features], w1)?, Tensor::from_vec(&[hidden + 1], b1)?)?;
    let fc2 = LinearParams::from_parts(Tensor::from_vec(&[classes, hidden + 1], fc2_w)?, net.fc2.bias.clone())?;
    let arch = Architecture {
        hidden: hidden + 1,
        ..net.architecture().clone()
    };
    Network::from_parts(arch, net.convs.clone(), fc1, fc2)
}
