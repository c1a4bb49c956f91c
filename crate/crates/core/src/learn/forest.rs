//! Random forest over unordered categorical features with multiway splits.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matrix::{argmax_class, check_targets, class_index, PredictorMatrix};
use crate::error::{invalid, Error, Result};
use crate::num::Real;
use crate::seed;

/// Minimum number of training rows.
pub const MIN_ROWS: usize = 50;
/// Largest number of distinct levels a column may take.
pub const MAX_LEVELS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Candidate features per split; `None` means ⌈√K⌉.
    pub mtry: Option<usize>,
    /// Nodes holding fewer bootstrap samples than this are leaves.
    pub min_node: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 500,
            mtry: None,
            min_node: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        votes: [u32; 3],
    },
    Split {
        feature: u16,
        /// Class counts reaching the node; used for levels unseen here.
        votes: [u32; 3],
        /// `(level value, child node index)` in level order.
        children: Vec<(i8, u32)>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn predict_with(&self, row: &[i8], replace: Option<(usize, i8)>) -> i8 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { votes } => return argmax_class(votes),
                Node::Split { feature, votes, children } => {
                    let f = *feature as usize;
                    let v = match replace {
                        Some((c, v)) if c == f => v,
                        _ => row[f],
                    };
                    match children.iter().find(|(level, _)| *level == v) {
                        Some(&(_, child)) => at = child as usize,
                        None => return argmax_class(votes),
                    }
                }
            }
        }
    }

    pub fn predict(&self, row: &[i8]) -> i8 {
        self.predict_with(row, None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format_version: u32,
    pub config: ForestConfig,
    pub seed: u64,
    pub columns: Vec<String>,
    pub trees: Vec<Tree>,
    /// Out-of-bag row indices of each tree.
    pub oob: Vec<Vec<u32>>,
    /// Set when the training target had a single class.
    pub degenerate: Option<i8>,
    pub oob_accuracy: Option<f64>,
}

struct Grower<'a> {
    x: &'a PredictorMatrix,
    /// Level code of every cell, row-major.
    codes: &'a [u8],
    n_levels: &'a [usize],
    y: &'a [u8],
    weight: Vec<u32>,
    mtry: usize,
    min_node: usize,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn counts(&self, rows: &[u32]) -> [u32; 3] {
        let mut c = [0u32; 3];
        for &r in rows {
            c[self.y[r as usize] as usize] += self.weight[r as usize];
        }
        c
    }

    /// Weighted Σ_level Σ_class n² / n_level for a split on `f`, which the
    /// Gini gain increases with.
    fn split_score(&self, rows: &[u32], f: usize) -> f64 {
        let k = self.x.n_cols();
        let mut table = [[0u32; 3]; MAX_LEVELS];
        for &r in rows {
            let r = r as usize;
            table[self.codes[r * k + f] as usize][self.y[r] as usize] += self.weight[r];
        }
        table[..self.n_levels[f]]
            .iter()
            .filter_map(|t| {
                let n: u32 = t.iter().sum();
                (n > 0).then(|| t.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>() / n as f64)
            })
            .sum()
    }

    fn grow(&mut self, rows: &mut [u32], rng: &mut ChaCha8Rng) -> u32 {
        let id = self.nodes.len() as u32;
        let votes = self.counts(rows);
        let total: u32 = votes.iter().sum();
        let pure = votes.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || (total as usize) < self.min_node {
            self.nodes.push(Node::Leaf { votes });
            return id;
        }

        let parent = votes.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>() / total as f64;
        let eps = 1e-9 * total as f64;
        let mut order: Vec<usize> = (0..self.x.n_cols()).collect();
        order.shuffle(rng);
        let mut best: Option<(usize, f64)> = None;
        for (tried, &f) in order.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            let s = self.split_score(rows, f);
            if s - parent > eps && best.is_none_or(|(_, b)| s > b) {
                best = Some((f, s));
            }
        }
        let Some((f, _)) = best else {
            self.nodes.push(Node::Leaf { votes });
            return id;
        };

        // group rows by level, stable
        let k = self.x.n_cols();
        let mut start_of = [0usize; MAX_LEVELS + 1];
        for &r in rows.iter() {
            start_of[self.codes[r as usize * k + f] as usize + 1] += 1;
        }
        for l in 0..MAX_LEVELS {
            start_of[l + 1] += start_of[l];
        }
        let scratch: Vec<u32> = rows.to_vec();
        for r in scratch {
            let c = self.codes[r as usize * k + f] as usize;
            rows[start_of[c]] = r;
            start_of[c] += 1;
        }
        self.nodes.push(Node::Split {
            feature: f as u16,
            votes,
            children: Vec::new(),
        });
        let mut children = Vec::new();
        let mut start = 0;
        while start < rows.len() {
            let code = self.codes[rows[start] as usize * k + f];
            let end = start + rows[start..].iter().take_while(|&&r| self.codes[r as usize * k + f] == code).count();
            let value = self.x.get(rows[start] as usize, f);
            let child = self.grow(&mut rows[start..end], rng);
            children.push((value, child));
            start = end;
        }
        if let Node::Split { children: c, .. } = &mut self.nodes[id as usize] {
            *c = children;
        }
        id
    }
}

fn encode(x: &PredictorMatrix) -> Result<(Vec<u8>, Vec<usize>)> {
    let k = x.n_cols();
    let levels: Vec<Vec<i8>> = (0..k).map(|c| x.levels(c)).collect();
    if let Some((c, l)) = levels.iter().enumerate().find(|(_, l)| l.len() > MAX_LEVELS) {
        return Err(invalid("predictors", format!("column `{}` has {} levels (max {MAX_LEVELS})", x.columns[c], l.len())));
    }
    let mut codes = Vec::with_capacity(x.n_rows() * k);
    for row in x.rows() {
        for (c, &v) in row.iter().enumerate() {
            codes.push(levels[c].binary_search(&v).unwrap() as u8);
        }
    }
    Ok((codes, levels.iter().map(Vec::len).collect()))
}

/// Grow `cfg.n_trees` trees on bootstrap resamples. Tree `k` draws all its
/// randomness from `(seed, k)`, so the model does not depend on the number
/// of worker threads.
pub fn train_forest(x: &PredictorMatrix, y: &[i8], cfg: &ForestConfig, seed: u64) -> Result<ForestModel> {
    check_targets(x, y)?;
    if x.n_rows() < MIN_ROWS {
        return Err(Error::Insufficient(format!("{} training rows, forest needs {MIN_ROWS}", x.n_rows())));
    }
    if x.n_cols() == 0 || x.n_cols() > u16::MAX as usize {
        return Err(invalid("predictors", format!("{} columns", x.n_cols())));
    }
    if cfg.n_trees == 0 {
        return Err(invalid("n_trees", "must be at least 1"));
    }
    let mut model = ForestModel {
        format_version: 1,
        config: *cfg,
        seed,
        columns: x.columns.clone(),
        trees: Vec::new(),
        oob: Vec::new(),
        degenerate: None,
        oob_accuracy: None,
    };
    if y.iter().all(|&v| v == y[0]) {
        model.degenerate = Some(y[0]);
        model.oob_accuracy = Some(1.0);
        return Ok(model);
    }

    let (codes, n_levels) = encode(x)?;
    let yc: Vec<u8> = y.iter().map(|&v| class_index(v) as u8).collect();
    let n = x.n_rows();
    let k = x.n_cols();
    let mtry = cfg.mtry.unwrap_or_else(|| (k as f64).sqrt().ceil() as usize).clamp(1, k);

    let grown: Vec<(Tree, Vec<u32>)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed, &[t as u64]);
            let mut weight = vec![0u32; n];
            for _ in 0..n {
                weight[rng.random_range(0..n)] += 1;
            }
            let mut rows: Vec<u32> = (0..n as u32).filter(|&r| weight[r as usize] > 0).collect();
            let oob: Vec<u32> = (0..n as u32).filter(|&r| weight[r as usize] == 0).collect();
            let mut g = Grower {
                x,
                codes: &codes,
                n_levels: &n_levels,
                y: &yc,
                weight,
                mtry,
                min_node: cfg.min_node,
                nodes: Vec::new(),
            };
            g.grow(&mut rows, &mut rng);
            (Tree { nodes: g.nodes }, oob)
        })
        .collect();
    for (tree, oob) in grown {
        model.trees.push(tree);
        model.oob.push(oob);
    }

    let mut votes = vec![[0u32; 3]; n];
    for (tree, oob) in model.trees.iter().zip(&model.oob) {
        for &r in oob {
            votes[r as usize][class_index(tree.predict(x.row(r as usize)))] += 1;
        }
    }
    let (mut hit, mut seen) = (0usize, 0usize);
    for (v, &truth) in votes.iter().zip(y) {
        if v.iter().sum::<u32>() > 0 {
            seen += 1;
            hit += usize::from(argmax_class(v) == truth);
        }
    }
    model.oob_accuracy = (seen > 0).then(|| hit as f64 / seen as f64);
    Ok(model)
}

/// Majority class over trees (ties to the smallest class) and the vote
/// fractions of −1, 0, +1.
pub fn forest_predict<F: Real>(model: &ForestModel, row: &[i8]) -> Result<(i8, [F; 3])> {
    if row.len() != model.columns.len() {
        return Err(Error::Schema {
            expected: model.columns.len(),
            got: row.len(),
        });
    }
    if let Some(c) = model.degenerate {
        let mut f = [F::zero(); 3];
        f[class_index(c)] = F::one();
        return Ok((c, f));
    }
    let mut votes = [0u32; 3];
    for t in &model.trees {
        votes[class_index(t.predict(row))] += 1;
    }
    let n = F::count(model.trees.len());
    Ok((argmax_class(&votes), votes.map(|v| F::from_u32(v).unwrap() / n)))
}

/// Per-column Breiman–Cutler importance with ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport<F> {
    pub columns: Vec<String>,
    pub importance: Vec<F>,
    /// 1 = most important; ties broken by column index.
    pub rank: Vec<usize>,
}

/// Mean over trees of the increase in out-of-bag error rate when column `c`
/// is shuffled among that tree's out-of-bag rows.
pub fn permutation_importance<F: Real>(model: &ForestModel, x: &PredictorMatrix, y: &[i8], seed: u64) -> Result<ImportanceReport<F>> {
    check_targets(x, y)?;
    if x.columns != model.columns {
        return Err(Error::Schema {
            expected: model.columns.len(),
            got: x.n_cols(),
        });
    }
    let k = x.n_cols();
    let per_tree: Vec<Option<Vec<F>>> = model
        .trees
        .par_iter()
        .zip(&model.oob)
        .enumerate()
        .map(|(t, (tree, oob))| {
            if oob.is_empty() {
                return None;
            }
            let base = oob.iter().filter(|&&r| tree.predict(x.row(r as usize)) != y[r as usize]).count();
            let n = F::count(oob.len());
            let mut out = Vec::with_capacity(k);
            for c in 0..k {
                let mut rng = seed::rng(seed, &[t as u64, c as u64]);
                let mut values: Vec<i8> = oob.iter().map(|&r| x.get(r as usize, c)).collect();
                values.shuffle(&mut rng);
                let err = oob
                    .iter()
                    .zip(&values)
                    .filter(|&(&r, &v)| tree.predict_with(x.row(r as usize), Some((c, v))) != y[r as usize])
                    .count();
                out.push((F::count(err) - F::count(base)) / n);
            }
            Some(out)
        })
        .collect();
    let mut importance = vec![F::zero(); k];
    let mut used = 0usize;
    for v in per_tree.into_iter().flatten() {
        used += 1;
        for (a, b) in importance.iter_mut().zip(v) {
            *a += b;
        }
    }
    if used > 0 {
        for a in &mut importance {
            *a /= F::count(used);
        }
    }
    Ok(ImportanceReport {
        columns: x.columns.clone(),
        rank: ranks(&importance),
        importance,
    })
}

fn ranks<F: Real>(importance: &[F]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..importance.len()).collect();
    order.sort_by(|&a, &b| importance[b].partial_cmp(&importance[a]).unwrap().then(a.cmp(&b)));
    let mut rank = vec![0; importance.len()];
    for (pos, &c) in order.iter().enumerate() {
        rank[c] = pos + 1;
    }
    rank
}

/// r = (rank − 1)/(K − 1): 0 for the most important column, 1 for the least.
pub fn adjusted_rank_ratio<F: Real>(report: &ImportanceReport<F>, column: usize) -> Result<F> {
    let k = report.rank.len();
    if k < 2 {
        return Err(invalid("columns", "rank ratio needs at least two columns"));
    }
    let rank = *report.rank.get(column).ok_or_else(|| invalid("column", format!("{column} out of range")))?;
    Ok(F::count(rank - 1) / F::count(k - 1))
}
