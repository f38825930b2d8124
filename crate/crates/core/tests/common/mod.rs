#![allow(dead_code)]

//! Exhaustive tree enumeration used as a decoding oracle.

pub mod checks;

/// A binary tree shape over a word range; nodes in postorder with the
/// indices of their children.
#[derive(Clone, Debug)]
pub struct Shape {
    pub nodes: Vec<(usize, usize, Option<(usize, usize)>)>,
}

fn shapes_over(i: usize, j: usize) -> Vec<Shape> {
    if j - i == 1 {
        return vec![Shape { nodes: vec![(i, j, None)] }];
    }
    let mut out = Vec::new();
    for k in i + 1..j {
        for left in shapes_over(i, k) {
            for right in shapes_over(k, j) {
                let mut nodes = left.nodes.clone();
                let l = nodes.len() - 1;
                let off = nodes.len();
                nodes.extend(right.nodes.iter().map(|&(a, b, c)| (a, b, c.map(|(x, y)| (x + off, y + off)))));
                let r = nodes.len() - 1;
                nodes.push((i, j, Some((l, r))));
                out.push(Shape { nodes });
            }
        }
    }
    out
}

/// All binary shapes over `n` words.
pub fn shapes(n: usize) -> Vec<Shape> {
    shapes_over(0, n)
}

/// Maximum over every binary tree and every labeling (root label in
/// `1..=labels`, other nodes in `0..=labels`) of
/// `node = term(i, j, l) + (left + right)`, which mirrors the chart's
/// arithmetic. Returns the best value and the labeled nodes achieving it.
pub fn brute_force_max(
    n: usize,
    labels: usize,
    term: impl Fn(usize, usize, usize) -> f64,
) -> (f64, Vec<(usize, usize, usize)>) {
    let mut best = f64::NEG_INFINITY;
    let mut best_nodes = Vec::new();
    for shape in shapes(n) {
        let m = shape.nodes.len();
        let root = m - 1;
        let mut assign = vec![0usize; m];
        assign[root] = 1;
        let mut vals = vec![0.0; m];
        let table: Vec<Vec<f64>> = shape.nodes.iter().map(|&(i, j, _)| (0..=labels).map(|l| term(i, j, l)).collect()).collect();
        loop {
            for (idx, &(_, _, kids)) in shape.nodes.iter().enumerate() {
                let t = table[idx][assign[idx]];
                vals[idx] = match kids {
                    None => t,
                    Some((l, r)) => t + (vals[l] + vals[r]),
                };
            }
            if vals[root] > best {
                best = vals[root];
                best_nodes = shape.nodes.iter().zip(&assign).map(|(&(i, j, _), &l)| (i, j, l)).collect();
            }
            // odometer over labels
            let mut pos = 0;
            loop {
                if pos == m {
                    break;
                }
                let lo = if pos == root { 1 } else { 0 };
                if assign[pos] < labels {
                    assign[pos] += 1;
                    break;
                }
                assign[pos] = lo;
                pos += 1;
            }
            if pos == m {
                break;
            }
        }
    }
    (best, best_nodes)
}
