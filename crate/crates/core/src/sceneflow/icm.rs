//! Iterated conditional modes over a pairwise labeling energy.

/// A pairwise energy over nodes with finite label sets.
pub trait LabelEnergy {
    fn node_count(&self) -> usize;
    fn label_count(&self, node: usize) -> usize;
    fn neighbors(&self, node: usize) -> &[usize];
    fn unary(&mut self, node: usize, label: usize) -> f64;
    /// Must not exceed `unary(node, label)`; lets ICM skip expensive unaries.
    fn unary_lower_bound(&mut self, node: usize, label: usize) -> f64 {
        self.unary(node, label)
    }
    fn pairwise(&mut self, i: usize, li: usize, j: usize, lj: usize) -> f64;
}

/// Energy of a full labeling (each edge counted once).
pub fn labeling_energy<E: LabelEnergy + ?Sized>(energy: &mut E, labels: &[usize]) -> f64 {
    let mut e = 0.0;
    for i in 0..energy.node_count() {
        e += energy.unary(i, labels[i]);
        let nb = energy.neighbors(i).to_vec();
        for j in nb {
            if j > i {
                e += energy.pairwise(i, labels[i], j, labels[j]);
            }
        }
    }
    e
}

/// Conditional energy of `node` taking `label` given its neighbors' labels.
fn local<E: LabelEnergy + ?Sized>(energy: &mut E, labels: &[usize], node: usize, label: usize) -> f64 {
    let nb = energy.neighbors(node).to_vec();
    nb.into_iter().map(|j| energy.pairwise(node, label, j, labels[j])).sum()
}

/// Sweeps nodes in index order, moving each to its best label given its
/// neighbors, until no label changes or `max_sweeps` is reached. A node only
/// moves on a strict decrease, so the energy never increases. Returns the
/// number of sweeps performed.
pub fn icm<E: LabelEnergy + ?Sized>(energy: &mut E, labels: &mut [usize], max_sweeps: usize) -> usize {
    let n = energy.node_count();
    for sweep in 1..=max_sweeps {
        let mut changed = false;
        for i in 0..n {
            let current = labels[i];
            let cur_e = energy.unary(i, current) + local(energy, labels, i, current);
            // Candidates ordered by lower bound; stop once the bound exceeds the best.
            let mut cands: Vec<(f64, usize)> = (0..energy.label_count(i))
                .filter(|&l| l != current)
                .map(|l| (energy.unary_lower_bound(i, l) + local(energy, labels, i, l), l))
                .collect();
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let (mut best_e, mut best) = (cur_e, current);
            for (lb, l) in cands {
                if lb >= best_e {
                    break;
                }
                let pair = lb - energy.unary_lower_bound(i, l);
                let e = energy.unary(i, l) + pair;
                if e < best_e {
                    best_e = e;
                    best = l;
                }
            }
            if best != current && best_e < cur_e - 1e-12 * (1.0 + cur_e.abs()) {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            return sweep;
        }
    }
    max_sweeps
}

/// Labels minimizing each node's unary alone.
pub fn unary_argmin<E: LabelEnergy + ?Sized>(energy: &mut E) -> Vec<usize> {
    (0..energy.node_count())
        .map(|i| {
            (0..energy.label_count(i))
                .map(|l| (energy.unary(i, l), l))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map_or(0, |(_, l)| l)
        })
        .collect()
}

/// Global minimum by enumerating every labeling (small instances only).
pub fn exhaustive_minimum<E: LabelEnergy + ?Sized>(energy: &mut E) -> (Vec<usize>, f64) {
    let n = energy.node_count();
    let counts: Vec<usize> = (0..n).map(|i| energy.label_count(i)).collect();
    let unaries: Vec<Vec<f64>> = (0..n).map(|i| (0..counts[i]).map(|l| energy.unary(i, l)).collect()).collect();
    let edges: Vec<(usize, usize)> =
        (0..n).flat_map(|i| energy.neighbors(i).iter().filter(move |&&j| j > i).map(move |&j| (i, j)).collect::<Vec<_>>()).collect();
    let tables: Vec<Vec<f64>> = edges
        .iter()
        .map(|&(i, j)| {
            let mut t = Vec::with_capacity(counts[i] * counts[j]);
            for li in 0..counts[i] {
                for lj in 0..counts[j] {
                    t.push(energy.pairwise(i, li, j, lj));
                }
            }
            t
        })
        .collect();
    let mut labels = vec![0; n];
    let mut best = (labels.clone(), f64::INFINITY);
    if counts.contains(&0) {
        return best;
    }
    loop {
        let mut e: f64 = (0..n).map(|i| unaries[i][labels[i]]).sum();
        for (k, &(i, j)) in edges.iter().enumerate() {
            e += tables[k][labels[i] * counts[j] + labels[j]];
        }
        if e < best.1 {
            best = (labels.clone(), e);
        }
        // Odometer increment.
        let mut k = 0;
        loop {
            if k == n {
                return best;
            }
            labels[k] += 1;
            if labels[k] < counts[k] {
                break;
            }
            labels[k] = 0;
            k += 1;
        }
    }
}
