use super::Descriptor;

/// Mutual nearest-neighbor matches `(i, j, distance)` with distance at most
/// `max_hamming`, in increasing `i`. Nearest-neighbor ties go to the lower index.
pub fn mutual_matches(a: &[Descriptor], b: &[Descriptor], max_hamming: u32) -> Vec<(usize, usize, u32)> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let m = b.len();
    let dist: Vec<u32> = a.iter().flat_map(|d| b.iter().map(move |e| d.hamming(e))).collect();
    // Column minima: nearest `a` for each `b`.
    let mut back = vec![(u32::MAX, 0usize); m];
    for i in 0..a.len() {
        for (j, slot) in back.iter_mut().enumerate() {
            let d = dist[i * m + j];
            if d < slot.0 {
                *slot = (d, i);
            }
        }
    }
    let mut out = Vec::new();
    for i in 0..a.len() {
        let row = &dist[i * m..(i + 1) * m];
        let mut best = (u32::MAX, 0usize);
        for (j, &d) in row.iter().enumerate() {
            if d < best.0 {
                best = (d, j);
            }
        }
        let (d, j) = best;
        if d <= max_hamming && back[j].1 == i {
            out.push((i, j, d));
        }
    }
    out
}

/// Number of mutual nearest-neighbor matches.
pub fn match_count(a: &[Descriptor], b: &[Descriptor], max_hamming: u32) -> u32 {
    mutual_matches(a, b, max_hamming).len() as u32
}
