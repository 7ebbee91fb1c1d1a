fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Greedy farthest point sampling from `start`: each pick maximizes the distance to the
/// nearest point already picked, ties going to the lower index. Picks are distinct.
pub fn farthest_point_sample(points: &[[f64; 3]], count: usize, start: usize) -> Vec<usize> {
    assert!(count <= points.len() && start < points.len(), "fps: count {count} of {} from {start}", points.len());
    let mut picked = Vec::with_capacity(count);
    if count == 0 {
        return picked;
    }
    let mut taken = vec![false; points.len()];
    let mut nearest = vec![f64::INFINITY; points.len()];
    let mut current = start;
    loop {
        picked.push(current);
        taken[current] = true;
        if picked.len() == count {
            return picked;
        }
        let mut best = None::<(usize, f64)>;
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(dist2(p, &points[current]));
            if !taken[i] && best.map_or(true, |(_, d)| nearest[i] > d) {
                best = Some((i, nearest[i]));
            }
        }
        current = best.expect("count <= len leaves a candidate").0;
    }
}

/// Index of the point farthest from the centroid, ties going to the lower index.
/// Unlike a fixed index this start does not depend on point order.
pub fn farthest_from_centroid(points: &[[f64; 3]]) -> usize {
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for d in 0..3 {
            c[d] += p[d] / n;
        }
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d = dist2(p, &c);
        if d > best.1 {
            best = (i, d);
        }
    }
    best.0
}
