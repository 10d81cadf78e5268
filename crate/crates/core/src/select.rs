//! Exact maximum-weight selection of corpus items under a consistency test.
//!
//! Items that share no context key are independent, so the search runs per
//! connected component: branch and bound over include/exclude, heaviest
//! first. Components larger than [`EXACT_LIMIT`] fall back to a greedy pass
//! and the result is flagged inexact.

pub(crate) const EXACT_LIMIT: usize = 24;

pub(crate) struct Selection {
    pub chosen: Vec<bool>,
    pub mass: f64,
    pub exact: bool,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// `links` joins items whose choices can interact. `compatible(chosen, item)`
/// reports whether `item` can be added to the already chosen set; it must be
/// monotone (a subset of a consistent set is consistent). `viable(item)`
/// rules out items that are inconsistent on their own.
pub(crate) fn best_subset<C, V>(weights: &[f64], links: &[(usize, usize)], mut viable: V, mut compatible: C) -> Selection
where
    V: FnMut(usize) -> bool,
    C: FnMut(&[usize], usize) -> bool,
{
    let n = weights.len();
    let mut uf = UnionFind((0..n).collect());
    for &(a, b) in links {
        uf.union(a, b);
    }
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        if !viable(i) {
            continue;
        }
        let r = uf.find(i);
        if slot[r] == usize::MAX {
            slot[r] = components.len();
            components.push(Vec::new());
        }
        components[slot[r]].push(i);
    }

    let mut chosen = vec![false; n];
    let mut exact = true;
    for mut comp in components {
        comp.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
        let picked = if comp.len() > EXACT_LIMIT {
            exact = false;
            let mut picked = Vec::new();
            for &i in &comp {
                if compatible(&picked, i) {
                    picked.push(i);
                }
            }
            picked
        } else {
            let mut search = Search {
                order: &comp,
                weights,
                suffix: suffix_sums(&comp, weights),
                current: Vec::new(),
                current_mass: 0.0,
                best: Vec::new(),
                best_mass: f64::NEG_INFINITY,
            };
            search.run(0, &mut compatible);
            search.best
        };
        for i in picked {
            chosen[i] = true;
        }
    }
    let mass = (0..n).filter(|&i| chosen[i]).map(|i| weights[i]).sum();
    Selection { chosen, mass, exact }
}

fn suffix_sums(order: &[usize], weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; order.len() + 1];
    for k in (0..order.len()).rev() {
        out[k] = out[k + 1] + weights[order[k]];
    }
    out
}

struct Search<'a> {
    order: &'a [usize],
    weights: &'a [f64],
    suffix: Vec<f64>,
    current: Vec<usize>,
    current_mass: f64,
    best: Vec<usize>,
    best_mass: f64,
}

impl Search<'_> {
    fn run<C: FnMut(&[usize], usize) -> bool>(&mut self, k: usize, compatible: &mut C) {
        if self.current_mass + self.suffix[k] <= self.best_mass {
            return;
        }
        if k == self.order.len() {
            self.best_mass = self.current_mass;
            self.best = self.current.clone();
            return;
        }
        let item = self.order[k];
        if compatible(&self.current, item) {
            self.current.push(item);
            self.current_mass += self.weights[item];
            self.run(k + 1, compatible);
            self.current_mass -= self.weights[item];
            self.current.pop();
        }
        self.run(k + 1, compatible);
    }
}
