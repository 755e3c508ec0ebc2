//! Weighted CART regression tree (squared error), shared by the forest and
//! the boosting learners.

use ndarray::ArrayView2;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features tried per split; `None` means all.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 3,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    target: &'a [f64],
    w: &'a [f64],
    params: TreeParams,
    nodes: Vec<Node>,
}

impl RegressionTree {
    /// Fit on the rows listed in `rows` (repeats allowed, e.g. bootstrap).
    /// `rng` is only consulted when `max_features` restricts the candidates.
    pub fn fit(
        x: ArrayView2<'_, f64>,
        target: &[f64],
        w: &[f64],
        rows: Vec<usize>,
        params: TreeParams,
        rng: &mut Rng,
    ) -> Self {
        let mut b = Builder {
            x,
            target,
            w,
            params,
            nodes: Vec::new(),
        };
        b.build(rows, 0, rng);
        RegressionTree { nodes: b.nodes }
    }

    /// Fit a plain (deterministic, all-features) tree on every row.
    pub fn fit_all(x: ArrayView2<'_, f64>, target: &[f64], w: &[f64], params: TreeParams) -> Self {
        let mut rng = crate::rng::rng_from_seed(0);
        let params = TreeParams {
            max_features: None,
            ..params
        };
        Self::fit(x, target, w, (0..target.len()).collect(), params, &mut rng)
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut buf = vec![0.0; x.ncols()];
        x.rows()
            .into_iter()
            .map(|r| {
                for (b, v) in buf.iter_mut().zip(r.iter()) {
                    *b = *v;
                }
                self.predict_row(&buf)
            })
            .collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    /// Replace every leaf value through `f` (used for Newton leaf updates).
    pub(crate) fn map_leaves(&mut self, mut f: impl FnMut(f64) -> f64) {
        for n in &mut self.nodes {
            if let Node::Leaf(v) = n {
                *v = f(*v);
            }
        }
    }
}

impl Builder<'_> {
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let (mut sw, mut swy) = (0.0, 0.0);
        for &i in rows {
            sw += self.w[i];
            swy += self.w[i] * self.target[i];
        }
        if sw > 0.0 {
            swy / sw
        } else {
            0.0
        }
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize, rng: &mut Rng) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(self.leaf_value(&rows)));
        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_samples_leaf.max(1) {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&rows, rng) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| self.x[(i, feature)] <= threshold);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&self, rows: &[usize], rng: &mut Rng) -> Option<(usize, f64)> {
        let p = self.x.ncols();
        if p == 0 {
            return None;
        }
        let features: Vec<usize> = match self.params.max_features {
            Some(m) if m < p => {
                let mut f = sample(rng, p, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        };
        let (mut tw, mut twy) = (0.0, 0.0);
        for &i in rows {
            tw += self.w[i];
            twy += self.w[i] * self.target[i];
        }
        if tw <= 0.0 {
            return None;
        }
        let base = twy * twy / tw;
        let min_leaf = self.params.min_samples_leaf.max(1);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = rows.to_vec();
        for &f in &features {
            order.sort_by(|&a, &b| self.x[(a, f)].total_cmp(&self.x[(b, f)]));
            let (mut lw, mut lwy) = (0.0, 0.0);
            for k in 0..order.len() - 1 {
                let i = order[k];
                lw += self.w[i];
                lwy += self.w[i] * self.target[i];
                let left_n = k + 1;
                let right_n = order.len() - left_n;
                if left_n < min_leaf || right_n < min_leaf {
                    continue;
                }
                let (xv, xn) = (self.x[(i, f)], self.x[(order[k + 1], f)]);
                if xv == xn {
                    continue;
                }
                let rw = tw - lw;
                if lw <= 0.0 || rw <= 0.0 {
                    continue;
                }
                let rwy = twy - lwy;
                let gain = lwy * lwy / lw + rwy * rwy / rw - base;
                if gain > 1e-12 * base.abs().max(1e-300) && best.is_none_or(|b| gain > b.0) {
                    best = Some((gain, f, 0.5 * (xv + xn)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn stump_splits_at_zero() {
        let x = array![[-1.0], [1.0]];
        let t = RegressionTree::fit_all(
            x.view(),
            &[0.0, 10.0],
            &[1.0, 1.0],
            TreeParams {
                max_depth: 1,
                ..Default::default()
            },
        );
        assert_eq!(t.predict_row(&[-5.0]), 0.0);
        assert_eq!(t.predict_row(&[5.0]), 10.0);
        assert_eq!(t.n_leaves(), 2);
    }

    #[test]
    fn constant_target_gives_single_leaf() {
        let x = array![[1.0], [2.0], [3.0]];
        let t = RegressionTree::fit_all(x.view(), &[4.0; 3], &[1.0; 3], TreeParams::default());
        assert_eq!(t.n_leaves(), 1);
    }

    #[test]
    fn predictions_within_target_range() {
        let x = array![[0.3, 1.0], [0.1, 2.0], [0.9, 0.5], [0.5, 0.1], [0.7, 0.4], [0.2, 0.8]];
        let y = [3.0, -1.0, 7.0, 2.0, 5.5, 0.0];
        let t = RegressionTree::fit_all(
            x.view(),
            &y,
            &[1.0, 2.0, 1.0, 0.5, 1.0, 1.0],
            TreeParams {
                max_depth: 4,
                ..Default::default()
            },
        );
        for v in t.predict(x.view()) {
            assert!((-1.0..=7.0).contains(&v));
        }
    }
}
