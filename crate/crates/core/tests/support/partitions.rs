//! Set partitions of `0..n` as block labels (restricted growth strings).

pub fn all(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..=max + 1 {
            cur.push(b);
            rec(i + 1, n, cur, max.max(b), out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        let mut cur = vec![0];
        rec(1, n, &mut cur, 0, &mut out);
    }
    out
}

/// Block sizes of a partition.
pub fn sizes(labels: &[usize]) -> Vec<usize> {
    let blocks = labels.iter().max().map_or(0, |m| m + 1);
    let mut s = vec![0; blocks];
    labels.iter().for_each(|&b| s[b] += 1);
    s
}

/// Quorum exists iff one block is strictly largest and has at least two
/// members.
pub fn has_quorum(labels: &[usize]) -> bool {
    let s = sizes(labels);
    let best = *s.iter().max().unwrap_or(&0);
    best >= 2 && s.iter().filter(|&&x| x == best).count() == 1
}
