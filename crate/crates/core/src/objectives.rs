//! Next-turn and history-turn knowledge losses, the Jensen-Shannon
//! adversarial regularizer, and their weighted combination.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{log_sum_exp, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};

#[derive(Clone, Copy, Debug)]
pub struct NextTurnHeads {
    /// `d × 1`
    pub w_p: ParamId,
    /// `3d × 1`
    pub w_b: ParamId,
    /// `3d × 1`
    pub w_e: ParamId,
}

impl NextTurnHeads {
    pub fn new(d: usize, params: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let b1 = 1.0 / (d as f64).sqrt();
        let b3 = 1.0 / ((3 * d) as f64).sqrt();
        Self {
            w_p: params.uniform("next.w_p", d, 1, b1, rng),
            w_b: params.uniform("next.w_b", 3 * d, 1, b3, rng),
            w_e: params.uniform("next.w_e", 3 * d, 1, b3, rng),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HistoryHeads {
    pub w_h: ParamId,
    pub w_ph: ParamId,
    pub w_bh: ParamId,
    pub w_eh: ParamId,
}

impl HistoryHeads {
    pub fn new(d: usize, params: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let b = 1.0 / (d as f64).sqrt();
        Self {
            w_h: params.uniform("hist.w_h", d, d, b, rng),
            w_ph: params.uniform("hist.w_ph", d, 1, b, rng),
            w_bh: params.uniform("hist.w_bh", d, d, b, rng),
            w_eh: params.uniform("hist.w_eh", d, d, b, rng),
        }
    }
}

/// Maps `(passage, su)` onto the concatenated SU axis.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SuIndexMap {
    offsets: Vec<usize>,
    counts: Vec<usize>,
}

impl SuIndexMap {
    pub fn new(counts: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(counts.len());
        let mut acc = 0;
        for c in &counts {
            offsets.push(acc);
            acc += c;
        }
        Self { offsets, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn passages(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, passage: usize) -> usize {
        self.counts[passage]
    }

    pub fn offset(&self, passage: usize) -> usize {
        self.offsets[passage]
    }

    pub fn global(&self, passage: usize, su: usize) -> Option<usize> {
        (passage < self.counts.len() && su < self.counts[passage])
            .then(|| self.offsets[passage] + su)
    }

    pub fn local(&self, global: usize) -> Option<(usize, usize)> {
        let k = self
            .offsets
            .iter()
            .rposition(|&o| o <= global)
            .filter(|&k| global - self.offsets[k] < self.counts[k])?;
        Some((k, global - self.offsets[k]))
    }
}

/// Passage, begin and end logits for one example.
#[derive(Clone, Debug)]
pub struct NextTurnLogits {
    /// `K × 1`
    pub psg: Var,
    /// `L × 1` over every retained SU of every candidate.
    pub begin: Var,
    pub end: Var,
    pub index: SuIndexMap,
}

pub fn next_turn_logits(
    g: &Graph,
    passages: &[(Var, Var)],
    w_p: Var,
    w_b: Var,
    w_e: Var,
) -> Result<NextTurnLogits> {
    assert!(!passages.is_empty(), "no candidate passages");
    let (zr, d) = g.shape(passages[0].0);
    if zr != 1 {
        return Err(Error::shape("pooled z", "1 row", zr));
    }
    if g.shape(w_p) != (d, 1) {
        return Err(Error::shape(
            "passage head w_p",
            format!("{d}x1"),
            format!("{:?}", g.shape(w_p)),
        ));
    }
    for (name, w) in [("begin head w_b", w_b), ("end head w_e", w_e)] {
        if g.shape(w) != (3 * d, 1) {
            return Err(Error::shape(
                name,
                format!("{}x1", 3 * d),
                format!("{:?}", g.shape(w)),
            ));
        }
    }
    let mut counts = Vec::with_capacity(passages.len());
    for (z, sdot) in passages {
        if g.shape(*z) != (1, d) {
            return Err(Error::shape("pooled z", d, g.shape(*z).1));
        }
        let (l, w) = g.shape(*sdot);
        if w != 3 * d {
            return Err(Error::shape("contextualized spans", 3 * d, w));
        }
        counts.push(l);
    }
    let zs: Vec<Var> = passages.iter().map(|(z, _)| *z).collect();
    let ss: Vec<Var> = passages.iter().map(|(_, s)| *s).collect();
    let z_all = if zs.len() == 1 {
        zs[0]
    } else {
        g.concat_rows(&zs)
    };
    let s_all = if ss.len() == 1 {
        ss[0]
    } else {
        g.concat_rows(&ss)
    };
    Ok(NextTurnLogits {
        psg: g.matmul(z_all, w_p),
        begin: g.matmul(s_all, w_b),
        end: g.matmul(s_all, w_e),
        index: SuIndexMap::new(counts),
    })
}

/// `−log softmax(logits)[gold]`.
pub fn cross_entropy(logits: &[f64], gold: usize) -> Result<f64> {
    if gold >= logits.len() {
        return Err(Error::Data(format!(
            "gold index {gold} out of range for {} logits",
            logits.len()
        )));
    }
    Ok(log_sum_exp(logits) - logits[gold])
}

/// Gold passage and its begin/end SU, in candidate-local indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GoldTarget {
    pub passage: usize,
    pub begin: usize,
    pub end: usize,
}

/// `(l_psg, l_begin, l_end)`; begin/end softmaxes run over the global SU axis.
pub fn next_loss(g: &Graph, logits: &NextTurnLogits, gold: GoldTarget) -> Result<(Var, Var, Var)> {
    let k = g.shape(logits.psg).0;
    if gold.passage >= k {
        return Err(Error::Data(format!("gold passage {} of {k}", gold.passage)));
    }
    let map = |su: usize| {
        logits.index.global(gold.passage, su).ok_or_else(|| {
            Error::Data(format!(
                "gold SU {su} not retained in passage {} ({} SUs)",
                gold.passage,
                logits.index.count(gold.passage)
            ))
        })
    };
    let (b, e) = (map(gold.begin)?, map(gold.end)?);
    Ok((
        g.cross_entropy(logits.psg, gold.passage),
        g.cross_entropy(logits.begin, b),
        g.cross_entropy(logits.end, e),
    ))
}

/// One history turn whose knowledge lies in the candidate set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HistoryTarget {
    /// Row of the turn in every passage's `U`.
    pub turn: usize,
    pub passage: usize,
    pub begin: usize,
    pub end: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct HistoryHeadVars {
    pub w_h: Var,
    pub w_ph: Var,
    pub w_bh: Var,
    pub w_eh: Var,
}

/// Averaged history passage/begin/end losses. `u` and `s` hold each
/// candidate's pooled turn rows and raw span rows.
pub fn history_loss(
    g: &Graph,
    u: &[Var],
    s: &[Var],
    targets: &[HistoryTarget],
    heads: HistoryHeadVars,
) -> (Var, Var, Var) {
    let zero = || g.constant(Array2::zeros((1, 1)));
    if targets.is_empty() {
        return (zero(), zero(), zero());
    }
    let mut psg = Vec::new();
    let mut begin = Vec::new();
    let mut end = Vec::new();
    for t in targets {
        let rows: Vec<Var> = u.iter().map(|uk| g.row(*uk, t.turn)).collect();
        let stacked = if rows.len() == 1 {
            rows[0]
        } else {
            g.concat_rows(&rows)
        };
        let hidden = g.relu(g.matmul_t(stacked, heads.w_h));
        let logits = g.matmul(hidden, heads.w_ph);
        psg.push(g.cross_entropy(logits, t.passage));

        let own = rows[t.passage];
        let spans = s[t.passage];
        let qb = g.matmul_t(own, heads.w_bh);
        let qe = g.matmul_t(own, heads.w_eh);
        begin.push(g.cross_entropy(g.matmul_t(spans, qb), t.begin));
        end.push(g.cross_entropy(g.matmul_t(spans, qe), t.end));
    }
    let inv = 1.0 / targets.len() as f64;
    (
        g.scale(g.add_all(&psg), inv),
        g.scale(g.add_all(&begin), inv),
        g.scale(g.add_all(&end), inv),
    )
}

/// Jensen-Shannon divergence (natural log) of the softmaxes of two logit
/// vectors.
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "js_divergence: length mismatch");
    let g = Graph::frozen();
    let a = g.constant(Array2::from_shape_vec((p.len(), 1), p.to_vec()).expect("shape"));
    let b = g.constant(Array2::from_shape_vec((q.len(), 1), q.to_vec()).expect("shape"));
    let v = g.js_divergence(a, b);
    g.scalar(v)
}

/// Handles to the three output heads of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct HeadLogits {
    pub psg: Var,
    pub begin: Var,
    pub end: Var,
}

impl HeadLogits {
    pub fn values(&self, g: &Graph) -> [Tensor; 3] {
        [
            g.value(self.psg).clone(),
            g.value(self.begin).clone(),
            g.value(self.end).clone(),
        ]
    }
}

/// A model whose head logits can be recomputed under an additive
/// perturbation of its embedded input.
pub trait Perturbable {
    /// Shape of the perturbation tensor.
    fn perturbation_shape(&self) -> (usize, usize);
    fn perturbed_logits(&self, g: &Graph, epsilon: Var) -> HeadLogits;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdversarialConfig {
    /// L2 radius `a` of the perturbation ball.
    pub radius: f64,
    pub steps: usize,
    /// Length of each normalized ascent step.
    pub step_size: f64,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        Self {
            radius: 1.0,
            steps: 1,
            step_size: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdversarialOutcome {
    pub value: f64,
    pub epsilon: Tensor,
    /// Ascent steps that were accepted.
    pub accepted: usize,
}

/// Σ over heads of JS(clean ‖ perturbed).
pub fn divergence_sum(g: &Graph, clean: [Var; 3], perturbed: HeadLogits) -> Var {
    let parts = [
        g.js_divergence(clean[0], perturbed.psg),
        g.js_divergence(clean[1], perturbed.begin),
        g.js_divergence(clean[2], perturbed.end),
    ];
    g.add_all(&parts)
}

fn l2(t: &Tensor) -> f64 {
    t.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn project(t: Tensor, radius: f64) -> Tensor {
    let n = l2(&t);
    if n > radius {
        t * (radius / n)
    } else {
        t
    }
}

/// Worst-case divergence inside the L2 ball by projected, normalized
/// gradient ascent from a small random start; a step is kept only if it
/// does not lower the divergence. Clean logits are held constant.
pub fn adversarial_loss(
    model: &impl Perturbable,
    clean: &[Tensor; 3],
    config: &AdversarialConfig,
    rng: &mut impl Rng,
) -> Result<AdversarialOutcome> {
    if config.radius.is_nan() || config.radius < 0.0 {
        return Err(Error::Config(format!(
            "adversarial radius must be >= 0, got {}",
            config.radius
        )));
    }
    let shape = model.perturbation_shape();
    if config.radius == 0.0 {
        return Ok(AdversarialOutcome {
            value: 0.0,
            epsilon: Array2::zeros(shape),
            accepted: 0,
        });
    }

    let evaluate = |eps: &Tensor| -> (f64, Tensor) {
        let g = Graph::frozen();
        let e = g.variable(eps.clone());
        let c = [
            g.constant(clean[0].clone()),
            g.constant(clean[1].clone()),
            g.constant(clean[2].clone()),
        ];
        let div = divergence_sum(&g, c, model.perturbed_logits(&g, e));
        let grads = g.backward(div);
        let grad = grads
            .get(e)
            .cloned()
            .unwrap_or_else(|| Array2::zeros(shape));
        (g.scalar(div), grad)
    };

    let init: Tensor = Array2::from_shape_simple_fn(shape, || rng.sample(StandardNormal));
    let n0 = l2(&init);
    let mut eps = if n0 > 0.0 {
        init * (config.radius / 10.0 / n0)
    } else {
        init
    };
    let (mut value, mut grad) = evaluate(&eps);
    let mut accepted = 0;
    for _ in 0..config.steps {
        let gn = l2(&grad);
        if gn == 0.0 || !gn.is_finite() {
            break;
        }
        let candidate = project(&eps + &(&grad * (config.step_size / gn)), config.radius);
        let (cv, cg) = evaluate(&candidate);
        if cv >= value {
            eps = candidate;
            value = cv;
            grad = cg;
            accepted += 1;
        } else {
            break;
        }
    }
    Ok(AdversarialOutcome {
        value,
        epsilon: eps,
        accepted,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_psg: f64,
    pub l_begin: f64,
    pub l_end: f64,
    pub l_next: f64,
    pub l_hist_psg: f64,
    pub l_hist_begin: f64,
    pub l_hist_end: f64,
    pub l_hist: f64,
    pub l_adv: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        let n = items.len().max(1) as f64;
        let mut out = LossBreakdown::default();
        for b in items {
            out.l_psg += b.l_psg / n;
            out.l_begin += b.l_begin / n;
            out.l_end += b.l_end / n;
            out.l_next += b.l_next / n;
            out.l_hist_psg += b.l_hist_psg / n;
            out.l_hist_begin += b.l_hist_begin / n;
            out.l_hist_end += b.l_hist_end / n;
            out.l_hist += b.l_hist / n;
            out.l_adv += b.l_adv / n;
            out.total += b.total / n;
        }
        out
    }
}

/// Component values before weighting.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub next: (f64, f64, f64),
    pub hist: (f64, f64, f64),
    pub adv: f64,
}

pub fn joint_loss(parts: LossParts, alpha: f64, beta: f64) -> LossBreakdown {
    let l_next = parts.next.0 + parts.next.1 + parts.next.2;
    let l_hist = parts.hist.0 + parts.hist.1 + parts.hist.2;
    LossBreakdown {
        l_psg: parts.next.0,
        l_begin: parts.next.1,
        l_end: parts.next.2,
        l_next,
        l_hist_psg: parts.hist.0,
        l_hist_begin: parts.hist.1,
        l_hist_end: parts.hist.2,
        l_hist,
        l_adv: parts.adv,
        total: l_next + alpha * l_hist + beta * parts.adv,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn col(v: &[f64]) -> Tensor {
        Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()
    }

    #[test]
    fn cross_entropy_closed_forms() {
        for k in [2usize, 4, 8] {
            let ce = cross_entropy(&vec![0.3; k], k - 1).unwrap();
            assert!((ce - (k as f64).ln()).abs() < 1e-9);
        }
        assert!((cross_entropy(&[0.0, 0.0], 0).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let a = cross_entropy(&[1.0, -2.0, 0.5], 2).unwrap();
        let b = cross_entropy(&[11.0, 8.0, 10.5], 2).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(cross_entropy(&[0.0], 1).is_err());
        assert_eq!(cross_entropy(&[3.7], 0).unwrap(), 0.0);
    }

    #[test]
    fn zero_heads_give_zero_logits() {
        let g = Graph::new();
        let z = g.constant(Array2::ones((1, 2)));
        let s = g.constant(Array2::ones((1, 6)));
        let out = next_turn_logits(
            &g,
            &[(z, s)],
            g.constant(Array2::zeros((2, 1))),
            g.constant(Array2::zeros((6, 1))),
            g.constant(Array2::zeros((6, 1))),
        )
        .unwrap();
        assert_eq!(g.value(out.psg).as_slice().unwrap(), &[0.0]);
        assert_eq!(g.value(out.begin).as_slice().unwrap(), &[0.0]);
        let (lp, lb, le) = next_loss(
            &g,
            &out,
            GoldTarget {
                passage: 0,
                begin: 0,
                end: 0,
            },
        )
        .unwrap();
        assert_eq!((g.scalar(lp), g.scalar(lb), g.scalar(le)), (0.0, 0.0, 0.0));
    }

    #[test]
    fn head_dimension_mismatch_names_head() {
        let g = Graph::new();
        let z = g.constant(Array2::ones((1, 2)));
        let s = g.constant(Array2::ones((3, 6)));
        let err = next_turn_logits(
            &g,
            &[(z, s)],
            g.constant(Array2::zeros((2, 1))),
            g.constant(Array2::zeros((2, 1))),
            g.constant(Array2::zeros((6, 1))),
        )
        .unwrap_err();
        assert!(err.to_string().contains("w_b"), "{err}");
    }

    #[test]
    fn logits_match_loop_oracle_and_duplicate_passages() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = 3;
        let mut r =
            |rows, cols| Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-1.0..1.0));
        let (z0, s0, z1, s1) = (r(1, d), r(2, 3 * d), r(1, d), r(3, 3 * d));
        let (wp, wb, we) = (r(d, 1), r(3 * d, 1), r(3 * d, 1));
        let g = Graph::new();
        let c = |t: &Tensor| g.constant(t.clone());
        let out = next_turn_logits(
            &g,
            &[(c(&z0), c(&s0)), (c(&z1), c(&s1))],
            c(&wp),
            c(&wb),
            c(&we),
        )
        .unwrap();
        let dot = |a: ndarray::ArrayView1<f64>, w: &Tensor| {
            let mut acc = 0.0;
            for i in 0..a.len() {
                acc += a[i] * w[[i, 0]];
            }
            acc
        };
        let psg = g.value(out.psg).clone();
        assert!((psg[[0, 0]] - dot(z0.row(0), &wp)).abs() < 1e-12);
        assert!((psg[[1, 0]] - dot(z1.row(0), &wp)).abs() < 1e-12);
        let begin = g.value(out.begin).clone();
        let end = g.value(out.end).clone();
        let rows: Vec<_> = s0.rows().into_iter().chain(s1.rows()).collect();
        for (i, row) in rows.iter().enumerate() {
            assert!((begin[[i, 0]] - dot(row.view(), &wb)).abs() < 1e-12);
            assert!((end[[i, 0]] - dot(row.view(), &we)).abs() < 1e-12);
        }

        let dup = next_turn_logits(
            &g,
            &[(c(&z0), c(&s0)), (c(&z1), c(&s1)), (c(&z1), c(&s1))],
            c(&wp),
            c(&wb),
            c(&we),
        )
        .unwrap();
        let p = g.value(dup.psg).clone();
        assert_eq!(p.nrows(), 3);
        assert_eq!(p[[1, 0]], p[[2, 0]]);
    }

    #[test]
    fn index_map_round_trip() {
        let m = SuIndexMap::new(vec![2, 0, 3]);
        assert_eq!(m.total(), 5);
        for k in 0..3 {
            for j in 0..m.count(k) {
                let gidx = m.global(k, j).unwrap();
                assert_eq!(m.local(gidx), Some((k, j)));
            }
        }
        assert_eq!(m.global(1, 0), None);
        assert_eq!(m.local(5), None);
    }

    #[test]
    fn uniform_passage_loss_is_ln_k() {
        let g = Graph::new();
        let zs: Vec<_> = (0..4)
            .map(|_| {
                (
                    g.constant(Array2::ones((1, 2))),
                    g.constant(Array2::ones((1, 6))),
                )
            })
            .collect();
        let out = next_turn_logits(
            &g,
            &zs,
            g.constant(col(&[0.5, -0.5])),
            g.constant(Array2::zeros((6, 1))),
            g.constant(Array2::zeros((6, 1))),
        )
        .unwrap();
        let (lp, _, _) = next_loss(
            &g,
            &out,
            GoldTarget {
                passage: 2,
                begin: 0,
                end: 0,
            },
        )
        .unwrap();
        assert!((g.scalar(lp) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn history_loss_fallback_and_uniform() {
        let g = Graph::new();
        let heads = HistoryHeadVars {
            w_h: g.constant(Array2::eye(2)),
            w_ph: g.constant(Array2::zeros((2, 1))),
            w_bh: g.constant(Array2::eye(2)),
            w_eh: g.constant(Array2::eye(2)),
        };
        let u: Vec<_> = (0..5).map(|_| g.constant(Array2::ones((3, 2)))).collect();
        let s: Vec<_> = (0..5).map(|_| g.constant(Array2::zeros((4, 2)))).collect();
        let (a, b, c) = history_loss(&g, &u, &s, &[], heads);
        assert_eq!((g.scalar(a), g.scalar(b), g.scalar(c)), (0.0, 0.0, 0.0));

        let t = HistoryTarget {
            turn: 1,
            passage: 3,
            begin: 0,
            end: 2,
        };
        let (a, b, c) = history_loss(&g, &u, &s, &[t], heads);
        assert!((g.scalar(a) - 5f64.ln()).abs() < 1e-12);
        // zero span vectors give uniform span logits over 4 SUs
        assert!((g.scalar(b) - 4f64.ln()).abs() < 1e-12);
        assert!((g.scalar(c) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn history_loss_averages_turns() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut r =
            |rows, cols| Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-1.0..1.0));
        let g = Graph::new();
        let heads = HistoryHeadVars {
            w_h: g.constant(r(3, 3)),
            w_ph: g.constant(r(3, 1)),
            w_bh: g.constant(r(3, 3)),
            w_eh: g.constant(r(3, 3)),
        };
        let u: Vec<_> = (0..2).map(|_| g.constant(r(2, 3))).collect();
        let s: Vec<_> = (0..2).map(|_| g.constant(r(3, 3))).collect();
        let t0 = HistoryTarget {
            turn: 0,
            passage: 1,
            begin: 0,
            end: 1,
        };
        let t1 = HistoryTarget {
            turn: 1,
            passage: 0,
            begin: 2,
            end: 2,
        };
        let single = |t| {
            let (a, b, c) = history_loss(&g, &u, &s, &[t], heads);
            [g.scalar(a), g.scalar(b), g.scalar(c)]
        };
        let (a, b, c) = history_loss(&g, &u, &s, &[t0, t1], heads);
        let both = [g.scalar(a), g.scalar(b), g.scalar(c)];
        let (x, y) = (single(t0), single(t1));
        for i in 0..3 {
            assert!((both[i] - (x[i] + y[i]) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn js_properties() {
        assert_eq!(js_divergence(&[0.1, 2.0, -1.0], &[0.1, 2.0, -1.0]), 0.0);
        let extreme = js_divergence(&[50.0, -50.0], &[-50.0, 50.0]);
        assert!((extreme - std::f64::consts::LN_2).abs() < 1e-12);
        let p = [0.3, -1.2, 2.2];
        let q = [1.0, 0.0, -0.5];
        assert!((js_divergence(&p, &q) - js_divergence(&q, &p)).abs() < 1e-15);
    }

    #[test]
    fn joint_arithmetic() {
        let parts = LossParts {
            next: (0.25, 0.5, 0.25),
            hist: (1.0, 0.5, 0.5),
            adv: 3.0,
        };
        let b = joint_loss(parts, 1.0, 5.0);
        assert_eq!(b.l_next, 1.0);
        assert_eq!(b.l_hist, 2.0);
        assert_eq!(b.total, 18.0);
        assert_eq!(joint_loss(parts, 0.0, 0.0).total, b.l_next);
    }

    /// Logits `[c·(x+ε)², 0]` with a scalar embedding `x`.
    struct Quadratic {
        x: f64,
        c: f64,
    }

    impl Perturbable for Quadratic {
        fn perturbation_shape(&self) -> (usize, usize) {
            (1, 1)
        }
        fn perturbed_logits(&self, g: &Graph, eps: Var) -> HeadLogits {
            let x = g.add(g.constant(Array2::from_elem((1, 1), self.x)), eps);
            let sq = g.scale(g.mul(x, x), self.c);
            let logits = g.concat_rows(&[sq, g.constant(Array2::zeros((1, 1)))]);
            HeadLogits {
                psg: logits,
                begin: logits,
                end: logits,
            }
        }
    }

    fn quad_clean(m: &Quadratic) -> [Tensor; 3] {
        let v = col(&[m.c * m.x * m.x, 0.0]);
        [v.clone(), v.clone(), v]
    }

    #[test]
    fn adversarial_zero_radius_and_negative_radius() {
        let m = Quadratic { x: 0.5, c: 2.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = AdversarialConfig {
            radius: 0.0,
            steps: 3,
            step_size: 0.1,
        };
        assert_eq!(
            adversarial_loss(&m, &quad_clean(&m), &cfg, &mut rng)
                .unwrap()
                .value,
            0.0
        );
        let bad = AdversarialConfig {
            radius: -1.0,
            ..cfg
        };
        assert!(adversarial_loss(&m, &quad_clean(&m), &bad, &mut rng).is_err());
    }

    /// Logits `[w·ε, 0]` for a 1 × 2 perturbation; clean logits are zero,
    /// so the divergence is symmetric in the sign of `w·ε`.
    struct Linear {
        w: [f64; 2],
    }

    impl Perturbable for Linear {
        fn perturbation_shape(&self) -> (usize, usize) {
            (1, 2)
        }
        fn perturbed_logits(&self, g: &Graph, eps: Var) -> HeadLogits {
            let w = g.constant(Array2::from_shape_vec((1, 2), self.w.to_vec()).unwrap());
            let dot = g.matmul_t(eps, w);
            let logits = g.concat_rows(&[dot, g.constant(Array2::zeros((1, 1)))]);
            HeadLogits {
                psg: logits,
                begin: logits,
                end: logits,
            }
        }
    }

    #[test]
    fn adversarial_matches_grid_search() {
        for (w, a, seed) in [
            ([1.0, 2.0], 1.0, 1),
            ([-0.5, 0.3], 2.0, 2),
            ([3.0, 0.0], 0.5, 3),
        ] {
            let m = Linear { w };
            let clean = [col(&[0.0, 0.0]), col(&[0.0, 0.0]), col(&[0.0, 0.0])];
            let n = 20_000;
            let best = (0..n)
                .map(|i| {
                    let t = std::f64::consts::TAU * i as f64 / n as f64;
                    let dot = a * (w[0] * t.cos() + w[1] * t.sin());
                    3.0 * js_divergence(&[0.0, 0.0], &[dot, 0.0])
                })
                .fold(0.0f64, f64::max);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = AdversarialConfig {
                radius: a,
                steps: 10,
                step_size: a / 2.0,
            };
            let got = adversarial_loss(&m, &clean, &cfg, &mut rng).unwrap();
            assert!(l2(&got.epsilon) <= a + 1e-12);
            assert!(got.accepted >= 1);
            assert!(
                (got.value - best).abs() <= 0.05 * best,
                "w={w:?}: got {} grid {best}",
                got.value
            );
        }
    }

    #[test]
    fn quadratic_toy_matches_grid_search_with_defaults() {
        for (c, a, seed) in [(2.0, 1.0, 0), (-1.5, 0.7, 1), (0.8, 2.0, 2)] {
            let m = Quadratic { x: 0.0, c };
            let clean = quad_clean(&m);
            let n = 20_001;
            let best = (0..n)
                .map(|i| -a + 2.0 * a * i as f64 / (n - 1) as f64)
                .map(|e| 3.0 * js_divergence(&[0.0, 0.0], &[c * e * e, 0.0]))
                .fold(0.0f64, f64::max);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = AdversarialConfig {
                radius: a,
                steps: 1,
                step_size: a,
            };
            let got = adversarial_loss(&m, &clean, &cfg, &mut rng).unwrap();
            assert!(
                (got.value - best).abs() <= 0.05 * best,
                "c={c}: {} vs {best}",
                got.value
            );
        }
    }

    #[test]
    fn adversarial_never_below_start() {
        // non-convex toy: ascent may stall at a local maximum but not descend
        let m = Quadratic { x: 0.5, c: 2.0 };
        let clean = quad_clean(&m);
        for seed in 0..8 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let zero_steps = AdversarialConfig {
                radius: 1.0,
                steps: 0,
                step_size: 0.5,
            };
            let start = adversarial_loss(&m, &clean, &zero_steps, &mut rng).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = AdversarialConfig {
                steps: 5,
                ..zero_steps
            };
            let got = adversarial_loss(&m, &clean, &cfg, &mut rng).unwrap();
            assert!(got.value >= start.value);
            assert!((l2(&start.epsilon) - 0.1).abs() < 1e-12);
        }
    }
}
