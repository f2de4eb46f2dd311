#![allow(dead_code)]

use leader_select::graph::NoisyGraph;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random spanning tree plus `extra` distinct chords, variances in [0.2, 3).
pub fn random_connected(n: usize, extra: usize, rng: &mut impl Rng) -> NoisyGraph {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for i in 1..n {
        let j = order[rng.random_range(0..i)];
        let (a, b) = (order[i].min(j), order[i].max(j));
        edges.push((a, b));
    }
    let mut chords: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|e| !edges.contains(e))
        .collect();
    chords.shuffle(rng);
    edges.extend(chords.into_iter().take(extra));
    let weighted: Vec<(usize, usize, f64)> = edges
        .into_iter()
        .map(|(i, j)| (i, j, rng.random_range(0.2..3.0)))
        .collect();
    NoisyGraph::new(n, weighted).unwrap()
}

/// Dense Laplacian built straight from the edge list.
pub fn laplacian(g: &NoisyGraph) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let mut l = vec![vec![0.0; n]; n];
    for e in g.edges() {
        let w = 1.0 / e.nu;
        l[e.i][e.j] -= w;
        l[e.j][e.i] -= w;
        l[e.i][e.i] += w;
        l[e.j][e.j] += w;
    }
    l
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
            .unwrap();
        a.swap(c, p);
        inv.swap(c, p);
        let d = a[c][c];
        assert!(d.abs() > 1e-14, "singular");
        for j in 0..n {
            a[c][j] /= d;
            inv[c][j] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                if f != 0.0 {
                    for j in 0..n {
                        a[r][j] -= f * a[c][j];
                        inv[r][j] -= f * inv[c][j];
                    }
                }
            }
        }
    }
    inv
}

/// Followers in id order and the inverse of the grounded block.
pub fn grounded_inverse(g: &NoisyGraph, leaders: &[usize]) -> (Vec<usize>, Vec<Vec<f64>>) {
    let l = laplacian(g);
    let f: Vec<usize> = (0..g.node_count()).filter(|v| !leaders.contains(v)).collect();
    let block = f.iter().map(|&i| f.iter().map(|&j| l[i][j]).collect()).collect();
    let inv = if f.is_empty() { Vec::new() } else { invert(block) };
    (f, inv)
}

/// `½ Tr(L_ff⁻¹)` computed independently of the library.
pub fn oracle_error(g: &NoisyGraph, leaders: &[usize]) -> f64 {
    let (_, inv) = grounded_inverse(g, leaders);
    0.5 * (0..inv.len()).map(|i| inv[i][i]).sum::<f64>()
}

/// Every subset of `0..n` of size `k`.
pub fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for v in start..n {
            cur.push(v);
            go(v + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

pub fn members(mask: u32) -> Vec<usize> {
    (0..32).filter(|b| mask & (1 << b) != 0).collect()
}

/// Smallest `f(S) + f(S∪{v,w}) − f(S∪{v}) − f(S∪{w})` over nonempty `S`
/// and distinct `v, w ∉ S`, with `f` tabulated by bitmask. Masks for which
/// `f` is `None` are skipped.
pub fn supermodular_slack(n: usize, f: &[Option<f64>]) -> f64 {
    let mut worst = f64::INFINITY;
    for s in 1u32..(1 << n) {
        for v in 0..n {
            for w in v + 1..n {
                let (bv, bw) = (1 << v, 1 << w);
                if s & (bv | bw) != 0 {
                    continue;
                }
                let vals = [f[s as usize], f[(s | bv | bw) as usize], f[(s | bv) as usize], f[(s | bw) as usize]];
                if let [Some(a), Some(b), Some(c), Some(d)] = vals {
                    worst = worst.min(a + b - c - d);
                }
            }
        }
    }
    worst
}
