//! Exact-split decision trees shared by the tree families.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    Gini,
    Entropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(Vec<f64>),
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> &[f64] {
        let mut n = 0usize;
        loop {
            match &self.nodes[n] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    n = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], n: usize) -> usize {
            match &nodes[n] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left as usize).max(go(nodes, *right as usize)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// Per-sample sufficient statistics and the split score they induce.
pub(crate) trait Objective: Sync {
    fn width(&self) -> usize;
    fn add(&self, stats: &mut [f64], i: usize);
    /// Larger is better; a split's gain is `score(L) + score(R) - score(parent)`.
    fn score(&self, stats: &[f64]) -> f64;
    fn leaf(&self, stats: &[f64]) -> Vec<f64>;
    fn is_pure(&self, stats: &[f64]) -> bool;
}

pub(crate) struct Classification<'a> {
    pub y: &'a [usize],
    pub w: &'a [f64],
    pub n_classes: usize,
    pub criterion: Criterion,
}

impl Objective for Classification<'_> {
    fn width(&self) -> usize {
        self.n_classes
    }

    fn add(&self, stats: &mut [f64], i: usize) {
        stats[self.y[i]] += self.w[i];
    }

    fn score(&self, c: &[f64]) -> f64 {
        let n: f64 = c.iter().sum();
        if n <= 0.0 {
            return 0.0;
        }
        match self.criterion {
            Criterion::Gini => c.iter().map(|v| v * v).sum::<f64>() / n - n,
            Criterion::Entropy => c.iter().filter(|&&v| v > 0.0).map(|&v| v * (v / n).ln()).sum(),
        }
    }

    fn leaf(&self, c: &[f64]) -> Vec<f64> {
        let n: f64 = c.iter().sum();
        c.iter().map(|v| v / n).collect()
    }

    fn is_pure(&self, c: &[f64]) -> bool {
        c.iter().filter(|&&v| v > 0.0).count() <= 1
    }
}

/// Second-order boosting objective with an L2 leaf penalty.
pub(crate) struct Newton<'a> {
    pub g: &'a [f64],
    pub h: &'a [f64],
    pub lambda: f64,
}

impl Objective for Newton<'_> {
    fn width(&self) -> usize {
        2
    }

    fn add(&self, stats: &mut [f64], i: usize) {
        stats[0] += self.g[i];
        stats[1] += self.h[i];
    }

    fn score(&self, s: &[f64]) -> f64 {
        s[0] * s[0] / (s[1] + self.lambda)
    }

    fn leaf(&self, s: &[f64]) -> Vec<f64> {
        vec![-s[0] / (s[1] + self.lambda)]
    }

    fn is_pure(&self, _s: &[f64]) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeConfig {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Non-constant features examined per node; `None` means all.
    pub max_features: Option<usize>,
    /// Draw one uniform threshold per feature instead of scanning all cuts.
    pub random_splits: bool,
}

/// Feature-wise sample orderings, computed once and reused across trees.
pub(crate) struct Presorted {
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: &Matrix) -> Self {
        let order = (0..x.cols())
            .map(|j| {
                let mut idx: Vec<u32> = (0..x.rows() as u32).collect();
                idx.sort_by(|&a, &b| x.get(a as usize, j).total_cmp(&x.get(b as usize, j)).then(a.cmp(&b)));
                idx
            })
            .collect();
        Presorted { order }
    }

    fn restricted(&self, keep: &[bool]) -> Vec<Vec<u32>> {
        self.order
            .iter()
            .map(|o| o.iter().copied().filter(|&i| keep[i as usize]).collect())
            .collect()
    }
}

struct Builder<'a, O: Objective> {
    x: &'a Matrix,
    obj: &'a O,
    cfg: TreeConfig,
    rng: &'a mut Rng,
    nodes: Vec<Node>,
    go_left: Vec<bool>,
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl<O: Objective> Builder<'_, O> {
    fn stats(&self, idx: &[u32]) -> Vec<f64> {
        let mut s = vec![0.0; self.obj.width()];
        for &i in idx {
            self.obj.add(&mut s, i as usize);
        }
        s
    }

    fn build(&mut self, sorted: Vec<Vec<u32>>, depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let members = &sorted[0];
        let parent = self.stats(members);
        let n = members.len();
        let msl = self.cfg.min_samples_leaf.max(1);
        let stop = self.cfg.max_depth.is_some_and(|d| depth >= d) || n < 2 * msl || self.obj.is_pure(&parent);
        let best = if stop { None } else { self.find_split(&sorted, &parent) };
        let Some(best) = best else {
            self.nodes.push(Node::Leaf(self.obj.leaf(&parent)));
            return id;
        };
        self.nodes.push(Node::Leaf(Vec::new()));
        for &i in members {
            self.go_left[i as usize] = self.x.get(i as usize, best.feature) <= best.threshold;
        }
        let (mut left, mut right) = (Vec::with_capacity(sorted.len()), Vec::with_capacity(sorted.len()));
        for list in sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = list.into_iter().partition(|&i| self.go_left[i as usize]);
            left.push(l);
            right.push(r);
        }
        let l = self.build(left, depth + 1);
        let r = self.build(right, depth + 1);
        self.nodes[id as usize] = Node::Split {
            feature: best.feature as u32,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        id
    }

    fn find_split(&mut self, sorted: &[Vec<u32>], parent: &[f64]) -> Option<Best> {
        let d = sorted.len();
        let mut features: Vec<usize> = (0..d).collect();
        if self.cfg.max_features.is_some_and(|m| m < d) {
            features.shuffle(self.rng);
        }
        let budget = self.cfg.max_features.unwrap_or(d).max(1);
        let parent_score = self.obj.score(parent);
        let msl = self.cfg.min_samples_leaf.max(1);
        let mut best: Option<Best> = None;
        let mut examined = 0;
        for &j in &features {
            if examined >= budget {
                break;
            }
            let list = &sorted[j];
            let lo = self.x.get(list[0] as usize, j);
            let hi = self.x.get(*list.last().unwrap() as usize, j);
            if lo == hi {
                continue;
            }
            examined += 1;
            let cand = if self.cfg.random_splits {
                let u: f64 = self.rng.random();
                let mut t = lo + u * (hi - lo);
                if t >= hi {
                    t = lo;
                }
                self.eval_threshold(list, j, t, parent, parent_score, msl)
            } else {
                self.scan(list, j, parent, parent_score, msl)
            };
            if let Some(c) = cand {
                if best.as_ref().is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        // zero-gain splits are kept: an impure node may need two cuts (XOR)
        best.filter(|b| b.gain > -1e-12)
    }

    fn eval_threshold(&self, list: &[u32], j: usize, t: f64, parent: &[f64], ps: f64, msl: usize) -> Option<Best> {
        let mut left = vec![0.0; parent.len()];
        let mut nl = 0;
        for &i in list {
            if self.x.get(i as usize, j) > t {
                break;
            }
            self.obj.add(&mut left, i as usize);
            nl += 1;
        }
        if nl < msl || list.len() - nl < msl {
            return None;
        }
        let right: Vec<f64> = parent.iter().zip(&left).map(|(p, l)| p - l).collect();
        Some(Best {
            gain: self.obj.score(&left) + self.obj.score(&right) - ps,
            feature: j,
            threshold: t,
        })
    }

    fn scan(&self, list: &[u32], j: usize, parent: &[f64], ps: f64, msl: usize) -> Option<Best> {
        let n = list.len();
        let mut left = vec![0.0; parent.len()];
        let mut right = vec![0.0; parent.len()];
        let mut best: Option<Best> = None;
        for (pos, &i) in list.iter().enumerate().take(n - 1) {
            self.obj.add(&mut left, i as usize);
            let a = self.x.get(i as usize, j);
            let b = self.x.get(list[pos + 1] as usize, j);
            if a == b || pos + 1 < msl || n - pos - 1 < msl {
                continue;
            }
            for ((r, p), l) in right.iter_mut().zip(parent).zip(&left) {
                *r = p - l;
            }
            let gain = self.obj.score(&left) + self.obj.score(&right) - ps;
            if best.as_ref().is_none_or(|bb| gain > bb.gain) {
                let mut t = a + (b - a) / 2.0;
                if t >= b {
                    t = a;
                }
                best = Some(Best {
                    gain,
                    feature: j,
                    threshold: t,
                });
            }
        }
        best
    }
}

/// Grows a tree on the samples whose `keep` flag is set.
pub(crate) fn grow<O: Objective>(
    x: &Matrix,
    presorted: &Presorted,
    keep: Option<&[bool]>,
    obj: &O,
    cfg: TreeConfig,
    rng: &mut Rng,
) -> Tree {
    let sorted = match keep {
        Some(k) => presorted.restricted(k),
        None => presorted.order.clone(),
    };
    let mut b = Builder {
        x,
        obj,
        cfg,
        rng,
        nodes: Vec::new(),
        go_left: vec![false; x.rows()],
    };
    if sorted.first().is_some_and(|s| !s.is_empty()) {
        b.build(sorted, 0);
    }
    Tree { nodes: b.nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn fit(x: &Matrix, y: &[usize], k: usize, cfg: TreeConfig, criterion: Criterion) -> Tree {
        let w = vec![1.0; y.len()];
        let obj = Classification {
            y,
            w: &w,
            n_classes: k,
            criterion,
        };
        grow(x, &Presorted::new(x), None, &obj, cfg, &mut rng::seeded(0))
    }

    const FULL: TreeConfig = TreeConfig {
        max_depth: None,
        min_samples_leaf: 1,
        max_features: None,
        random_splits: false,
    };

    #[test]
    fn threshold_at_midpoint() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![4.0], vec![5.0]]).unwrap();
        let t = fit(&x, &[0, 0, 1, 1], 2, FULL, Criterion::Gini);
        assert_eq!(t.depth(), 1);
        assert_eq!(t.predict(&[2.9]), &[1.0, 0.0]);
        assert_eq!(t.predict(&[3.0]), &[1.0, 0.0]);
        assert_eq!(t.predict(&[3.1]), &[0.0, 1.0]);
    }

    #[test]
    fn xor_needs_depth_two() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let y = [0, 1, 1, 0];
        for c in [Criterion::Gini, Criterion::Entropy] {
            let t = fit(&x, &y, 2, FULL, c);
            for (i, &yi) in y.iter().enumerate() {
                assert_eq!(t.predict(x.row(i))[yi], 1.0);
            }
        }
        let stump = fit(&x, &y, 2, TreeConfig { max_depth: Some(0), ..FULL }, Criterion::Gini);
        assert_eq!(stump.predict(&[0.0, 0.0]), &[0.5, 0.5]);
    }

    #[test]
    fn min_samples_leaf_respected() {
        let x = Matrix::from_rows(&(0..10).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        let y: Vec<usize> = (0..10).map(|i| usize::from(i >= 9)).collect();
        let t = fit(&x, &y, 2, TreeConfig { min_samples_leaf: 3, ..FULL }, Criterion::Gini);
        assert!(t.n_leaves() <= 3);
    }

    #[test]
    fn random_splits_separate_duplicates_free_data() {
        let x = Matrix::from_rows(&(0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect::<Vec<_>>()).unwrap();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let t = fit(&x, &y, 2, TreeConfig { random_splits: true, ..FULL }, Criterion::Gini);
        for i in 0..20 {
            assert_eq!(t.predict(x.row(i))[y[i]], 1.0);
        }
    }

    #[test]
    fn newton_leaf_value() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let g = [2.0, -2.0];
        let h = [1.0, 1.0];
        let obj = Newton { g: &g, h: &h, lambda: 1.0 };
        let t = grow(&x, &Presorted::new(&x), None, &obj, FULL, &mut rng::seeded(0));
        assert_eq!(t.predict(&[0.0]), &[-1.0]);
        assert_eq!(t.predict(&[1.0]), &[1.0]);
    }
}
