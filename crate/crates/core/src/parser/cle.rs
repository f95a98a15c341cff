//! Chu-Liu-Edmonds maximum spanning arborescence.

use super::table::{ArcScoreTable, RootMode};

/// Highest-scoring arborescence rooted at 0 under arc weights `log att`,
/// i.e. the tree with the largest product of attachment probabilities.
/// The root may take any number of dependents.
pub fn decode_cle(table: &ArcScoreTable) -> Vec<usize> {
    decode_cle_with(table, RootMode::Multi)
}

pub fn decode_cle_with(table: &ArcScoreTable, mode: RootMode) -> Vec<usize> {
    let n = table.n();
    let weights: Vec<Vec<f64>> =
        (0..=n).map(|h| (0..=n).map(|m| if m == 0 { f64::NEG_INFINITY } else { table.log_att(h, m) }).collect()).collect();
    match mode {
        RootMode::Multi => heads_of(&max_arborescence(&weights)),
        RootMode::Single => {
            // Fix each candidate root child in turn and keep the best tree.
            let mut best: Option<(f64, Vec<usize>)> = None;
            for r in 1..=n {
                let mut w = weights.clone();
                for (m, cell) in w[0].iter_mut().enumerate().skip(1) {
                    if m != r {
                        *cell = f64::NEG_INFINITY;
                    }
                }
                let heads = heads_of(&max_arborescence(&w));
                let score: f64 = heads.iter().enumerate().map(|(i, &h)| weights[h][i + 1]).sum();
                if best.as_ref().is_none_or(|(s, _)| score > *s) {
                    best = Some((score, heads));
                }
            }
            best.map(|(_, h)| h).unwrap_or_default()
        }
    }
}

fn heads_of(parents: &[usize]) -> Vec<usize> {
    parents[1..].to_vec()
}

/// Maximum spanning arborescence of the dense graph `w[from][to]`, rooted
/// at node 0. Returns the parent of every node (`parents[0]` is unused).
/// Ties go to the smaller node index.
fn max_arborescence(w: &[Vec<f64>]) -> Vec<usize> {
    let size = w.len();
    let mut parent = vec![0usize; size];
    for v in 1..size {
        let mut best = f64::NEG_INFINITY;
        let mut arg = None;
        for (u, row) in w.iter().enumerate() {
            if u != v && (arg.is_none() || row[v] > best) {
                best = row[v];
                arg = Some(u);
            }
        }
        parent[v] = arg.unwrap_or(0);
    }

    let cycle = match find_cycle(&parent) {
        Some(c) => c,
        None => return parent,
    };

    let mut in_cycle = vec![false; size];
    for &v in &cycle {
        in_cycle[v] = true;
    }
    // non-cycle nodes keep their relative order; the contracted node goes last
    let mut to_new = vec![usize::MAX; size];
    let mut to_old = Vec::with_capacity(size - cycle.len() + 1);
    for v in 0..size {
        if !in_cycle[v] {
            to_new[v] = to_old.len();
            to_old.push(v);
        }
    }
    let c = to_old.len();
    let new_size = c + 1;

    let mut cw = vec![vec![f64::NEG_INFINITY; new_size]; new_size];
    let mut enter = vec![usize::MAX; size]; // outside u -> cycle node it enters
    let mut leave = vec![usize::MAX; size]; // outside v -> cycle node it leaves from
    for u in 0..size {
        for v in 0..size {
            if u == v {
                continue;
            }
            match (in_cycle[u], in_cycle[v]) {
                (false, false) => cw[to_new[u]][to_new[v]] = w[u][v],
                (false, true) => {
                    let kept = w[parent[v]][v];
                    let val = if kept.is_finite() { w[u][v] - kept } else { w[u][v] };
                    if enter[u] == usize::MAX || val > cw[to_new[u]][c] {
                        cw[to_new[u]][c] = val;
                        enter[u] = v;
                    }
                }
                (true, false) => {
                    if leave[v] == usize::MAX || w[u][v] > cw[c][to_new[v]] {
                        cw[c][to_new[v]] = w[u][v];
                        leave[v] = u;
                    }
                }
                (true, true) => {}
            }
        }
    }

    let contracted = max_arborescence(&cw);

    let mut result = parent.clone();
    for v in 1..size {
        if in_cycle[v] {
            continue;
        }
        let p = contracted[to_new[v]];
        result[v] = if p == c { leave[v] } else { to_old[p] };
    }
    let entry_from = to_old[contracted[c]];
    result[enter[entry_from]] = entry_from;
    result
}

/// Some cycle in the parent graph, if any (node 0 is the root).
fn find_cycle(parent: &[usize]) -> Option<Vec<usize>> {
    let size = parent.len();
    let mut mark = vec![0usize; size]; // 0 unseen, otherwise start node + 1
    mark[0] = usize::MAX;
    for start in 1..size {
        if mark[start] != 0 {
            continue;
        }
        let mut v = start;
        while mark[v] == 0 {
            mark[v] = start + 1;
            v = parent[v];
        }
        if mark[v] == start + 1 {
            let mut cycle = vec![v];
            let mut u = parent[v];
            while u != v {
                cycle.push(u);
                u = parent[u];
            }
            return Some(cycle);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::table::tree_score;
    use crate::tree::is_tree;

    #[test]
    fn single_token() {
        let t = ArcScoreTable::uniform(1).unwrap();
        assert_eq!(decode_cle(&t), vec![0]);
    }

    #[test]
    fn greedy_cycle_is_broken() {
        // 1 and 2 prefer each other; the root is a weak second choice.
        let s = [[0.0, 1.0], [0.0, 5.0], [4.0, 0.0]];
        let t = ArcScoreTable::from_fn(2, |h, m| s[h][m - 1]).unwrap();
        let heads = decode_cle(&t);
        assert!(is_tree(&heads));
        let best = [[0usize, 0], [0, 1], [2, 0]]
            .iter()
            .map(|h| (tree_score(&t, h).unwrap(), h.to_vec()))
            .fold((f64::NEG_INFINITY, vec![]), |a, b| if b.0 > a.0 { b } else { a });
        assert_eq!(heads, best.1);
    }

    #[test]
    fn single_root_mode_limits_root_children() {
        let t = ArcScoreTable::from_fn(4, |h, _| if h == 0 { 3.0 } else { 0.0 }).unwrap();
        assert_eq!(decode_cle(&t), vec![0, 0, 0, 0]);
        let heads = decode_cle_with(&t, RootMode::Single);
        assert!(is_tree(&heads));
        assert_eq!(crate::tree::root_children(&heads), 1);
    }
}
