//! CART decision trees and the bootstrap forest built on them.
//!
//! Trees grow greedily on Gini impurity with `min_leaf = 1` until a node is
//! pure or no feature offers a valid threshold. Zero-gain splits that still
//! partition the node are taken, which lets the tree express interactions
//! whose first split alone does not reduce impurity.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};
use crate::error::Result;
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        n_case: u32,
        n_control: u32,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// One fitted decision tree over an index arena.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
}

impl Tree {
    fn leaf_counts(&self, x: ArrayView1<'_, f64>) -> (u32, u32) {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { n_case, n_control } => return (*n_case, *n_control),
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Fraction of training cases in the reached leaf.
    pub fn case_fraction(&self, x: ArrayView1<'_, f64>) -> f64 {
        let (c, d) = self.leaf_counts(x);
        c as f64 / (c + d) as f64
    }

    /// Majority vote of the reached leaf; ties go to control.
    pub fn vote(&self, x: ArrayView1<'_, f64>) -> Label {
        if self.case_fraction(x) > 0.5 {
            Label::Case
        } else {
            Label::Control
        }
    }
}

/// Bagged ensemble of CART trees with per-split feature subsampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub n_trees: usize,
    pub mtry: usize,
    pub rng_seed: u64,
}

impl Forest {
    /// Fraction of trees voting case.
    pub fn vote_ratio(&self, x: ArrayView1<'_, f64>) -> f64 {
        let votes = self.trees.iter().filter(|t| t.vote(x).is_case()).count();
        votes as f64 / self.trees.len() as f64
    }
}

pub fn train_cart(d: &Dataset) -> Result<Tree> {
    let rows: Vec<usize> = (0..d.n_samples()).collect();
    Ok(grow_tree(&d.x, &d.y, rows, d.n_features(), None))
}

pub fn train_random_forest(
    d: &Dataset,
    n_trees: usize,
    mtry: Option<usize>,
    seed: u64,
    bootstrap: bool,
) -> Result<Forest> {
    let p = d.n_features();
    let n = d.n_samples();
    let mtry = mtry.unwrap_or_else(|| (p as f64).sqrt().ceil() as usize).clamp(1, p);
    let trees: Vec<Tree> = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, t as u64);
            let rows: Vec<usize> = if bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(&d.x, &d.y, rows, mtry, Some(rng))
        })
        .collect();
    Ok(Forest { trees, n_features: p, n_trees, mtry, rng_seed: seed })
}

fn grow_tree(
    x: &Array2<f64>,
    y: &[Label],
    rows: Vec<usize>,
    mtry: usize,
    rng: Option<ChaCha8Rng>,
) -> Tree {
    let mut grower = Grower { x, y, mtry, rng, nodes: Vec::new() };
    grower.grow(rows);
    Tree { nodes: grower.nodes, n_features: x.ncols() }
}

struct Grower<'a> {
    x: &'a Array2<f64>,
    y: &'a [Label],
    mtry: usize,
    rng: Option<ChaCha8Rng>,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    improvement: f64,
}

impl Grower<'_> {
    fn grow(&mut self, rows: Vec<usize>) -> usize {
        let n_case = rows.iter().filter(|&&i| self.y[i].is_case()).count() as u32;
        let n_control = rows.len() as u32 - n_case;

        let split = if n_case == 0 || n_control == 0 { None } else { self.best_split(&rows) };

        let Some(best) = split else {
            self.nodes.push(Node::Leaf { n_case, n_control });
            return self.nodes.len() - 1;
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| self.x[(i, best.feature)] <= best.threshold);
        if left_rows.is_empty() || right_rows.is_empty() {
            // threshold rounding collapsed the partition; give up on the node
            self.nodes.push(Node::Leaf { n_case, n_control });
            return self.nodes.len() - 1;
        }

        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { n_case, n_control }); // placeholder
        let left = self.grow(left_rows);
        let right = self.grow(right_rows);
        self.nodes[at] = Node::Split { feature: best.feature, threshold: best.threshold, left, right };
        at
    }

    /// Best Gini split among `mtry` sampled features; when none of the
    /// sampled features has two distinct values the scan widens to all
    /// features, mirroring samplers that keep drawing past constant columns.
    fn best_split(&mut self, rows: &[usize]) -> Option<BestSplit> {
        let p = self.x.ncols();
        if self.mtry < p && self.rng.is_some() {
            let candidates = self.sample_features(p);
            if let Some(best) = self.scan_features(rows, &candidates) {
                return Some(best);
            }
            let all: Vec<usize> = (0..p).collect();
            self.scan_features(rows, &all)
        } else {
            let all: Vec<usize> = (0..p).collect();
            self.scan_features(rows, &all)
        }
    }

    fn sample_features(&mut self, p: usize) -> Vec<usize> {
        let rng = self.rng.as_mut().expect("sampling requires an rng");
        let mut pool: Vec<usize> = (0..p).collect();
        for i in 0..self.mtry {
            let j = rng.random_range(i..p);
            pool.swap(i, j);
        }
        pool.truncate(self.mtry);
        pool
    }

    fn scan_features(&self, rows: &[usize], features: &[usize]) -> Option<BestSplit> {
        let total = rows.len() as f64;
        let total_case = rows.iter().filter(|&&i| self.y[i].is_case()).count() as f64;
        let parent_gini = gini(total_case, total - total_case);

        let mut best: Option<BestSplit> = None;
        let mut sorted: Vec<(f64, bool)> = Vec::with_capacity(rows.len());
        for &feature in features {
            sorted.clear();
            sorted.extend(rows.iter().map(|&i| (self.x[(i, feature)], self.y[i].is_case())));
            sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

            let mut left_case = 0.0;
            for k in 1..sorted.len() {
                if sorted[k - 1].1 {
                    left_case += 1.0;
                }
                if sorted[k - 1].0 == sorted[k].0 {
                    continue;
                }
                let left_n = k as f64;
                let right_n = total - left_n;
                let right_case = total_case - left_case;
                let children = (left_n * gini(left_case, left_n - left_case)
                    + right_n * gini(right_case, right_n - right_case))
                    / total;
                let improvement = parent_gini - children;
                if best.as_ref().is_none_or(|b| improvement > b.improvement) {
                    best = Some(BestSplit {
                        feature,
                        threshold: 0.5 * (sorted[k - 1].0 + sorted[k].0),
                        improvement,
                    });
                }
            }
        }
        best
    }
}

fn gini(n_case: f64, n_control: f64) -> f64 {
    let n = n_case + n_control;
    if n == 0.0 {
        return 0.0;
    }
    1.0 - (n_case * n_case + n_control * n_control) / (n * n)
}
