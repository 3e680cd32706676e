use std::collections::BTreeMap;

use super::dtw::dtw;
use super::AssignmentParams;
use crate::stimulus::Stimulus;
use crate::util::{argmin, linspace, mean};

/// Dispatch on a classical method label. Assumes at least two lines and at
/// least one fixation; the caller handles the degenerate cases.
pub(super) fn run(method: &str, xs: &[f64], ys: &[f64], s: &Stimulus, p: &AssignmentParams) -> Vec<usize> {
    match method {
        "attach" => attach(ys, s),
        "chain" => chain(xs, ys, s, p),
        "cluster" => cluster(ys, s),
        "compare" => compare(xs, ys, s, p),
        "merge" => merge(xs, ys, s, p),
        "regress" => regress(xs, ys, s, p),
        "segment" => segment(xs, s),
        "split" => split(xs, ys, s),
        "stretch" => stretch(ys, s, p),
        "warp" => warp(xs, ys, s),
        "slice" => slice(xs, ys, s, p),
        other => unreachable!("unvalidated method {other}"),
    }
}

fn attach(ys: &[f64], s: &Stimulus) -> Vec<usize> {
    ys.iter().map(|&y| s.nearest_line(y)).collect()
}

/// Assign each contiguous group `[start, end)` to the line nearest its mean y.
fn assign_groups(bounds: &[(usize, usize)], ys: &[f64], s: &Stimulus, out: &mut [usize]) {
    for &(a, b) in bounds {
        let line = s.nearest_line(mean(&ys[a..b]).expect("non-empty group"));
        out[a..b].fill(line);
    }
}

/// Split `0..n` at every index `i` where `breaks(i)` says a new group starts.
fn groups(n: usize, breaks: impl Fn(usize) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..n {
        if breaks(i) {
            out.push((start, i));
            start = i;
        }
    }
    out.push((start, n));
    out
}

fn chain(xs: &[f64], ys: &[f64], s: &Stimulus, p: &AssignmentParams) -> Vec<usize> {
    let g = groups(xs.len(), |i| (xs[i] - xs[i - 1]).abs() > p.chain_x_max || (ys[i] - ys[i - 1]).abs() > p.chain_y_max);
    let mut out = vec![0; xs.len()];
    assign_groups(&g, ys, s, &mut out);
    out
}

/// 1-D k-means seeded at the line centers. Empty clusters snap back to their
/// seed, so cluster `j` always stands for line `j` after sorting by mean.
fn cluster(ys: &[f64], s: &Stimulus) -> Vec<usize> {
    let seeds = &s.line_centers_y;
    let mut means = seeds.clone();
    let mut labels = vec![0usize; ys.len()];
    for _ in 0..100 {
        let new_labels: Vec<usize> =
            ys.iter().map(|&y| argmin(means.iter().map(|m| (m - y).abs())).unwrap_or(0)).collect();
        let mut new_means = means.clone();
        for (k, m) in new_means.iter_mut().enumerate() {
            let mut members: Vec<f64> = ys.iter().zip(&new_labels).filter(|(_, &l)| l == k).map(|(&y, _)| y).collect();
            members.sort_by(f64::total_cmp);
            *m = mean(&members).unwrap_or(seeds[k]);
        }
        let done = new_labels == labels && new_means == means;
        labels = new_labels;
        means = new_means;
        if done {
            break;
        }
    }
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b)));
    let mut rank = vec![0; means.len()];
    for (r, &k) in order.iter().enumerate() {
        rank[k] = r;
    }
    labels.into_iter().map(|k| rank[k]).collect()
}

fn compare(xs: &[f64], ys: &[f64], s: &Stimulus, p: &AssignmentParams) -> Vec<usize> {
    let g = groups(xs.len(), |i| xs[i] - xs[i - 1] <= -p.compare_sweep_px);
    let mut out = vec![0; xs.len()];
    for (a, b) in g {
        let my = mean(&ys[a..b]).expect("non-empty group");
        let mut candidates: Vec<usize> = (0..s.line_count()).collect();
        candidates.sort_by(|&i, &j| {
            (s.line_centers_y[i] - my).abs().total_cmp(&(s.line_centers_y[j] - my).abs()).then(i.cmp(&j))
        });
        candidates.truncate(p.compare_n_nearest.max(1));
        let costs = candidates.iter().map(|&line| {
            let word_x: Vec<f64> = s.line_words(line).iter().map(|w| w.center_x()).collect();
            let r = dtw(&xs[a..b], &word_x, |u, v| (u - v).abs()).expect("non-empty sequences");
            r.cost / r.path.len() as f64
        });
        let best = candidates[argmin(costs).unwrap_or(0)];
        out[a..b].fill(best);
    }
    out
}

/// Least-squares line through the points; a vertical cloud gets slope 0.
fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    (slope, intercept, (sse / n).sqrt())
}

fn merge(xs: &[f64], ys: &[f64], s: &Stimulus, p: &AssignmentParams) -> Vec<usize> {
    let m = s.line_count();
    let mut seqs: Vec<Vec<usize>> = groups(xs.len(), |i| xs[i] < xs[i - 1] || (ys[i] - ys[i - 1]).abs() > p.merge_y_max)
        .into_iter()
        .map(|(a, b)| (a..b).collect())
        .collect();
    for (min_i, min_j, unconstrained) in [(3, 3, false), (1, 3, false), (1, 1, false), (1, 1, true)] {
        while seqs.len() > m {
            let mut best: Option<(usize, usize, f64)> = None;
            for i in 0..seqs.len() - 1 {
                if seqs[i].len() < min_i {
                    continue;
                }
                for j in i + 1..seqs.len() {
                    if seqs[j].len() < min_j {
                        continue;
                    }
                    let pts: Vec<(f64, f64)> = seqs[i].iter().chain(&seqs[j]).map(|&k| (xs[k], ys[k])).collect();
                    let (slope, _, err) = linear_fit(&pts);
                    let allowed = unconstrained || (slope.abs() <= p.merge_slope_max && err <= p.merge_error_max);
                    if allowed && best.is_none_or(|b| err < b.2) {
                        best = Some((i, j, err));
                    }
                }
            }
            let Some((i, j, _)) = best else { break };
            let tail = seqs.remove(j);
            seqs[i].extend(tail);
        }
    }

    let means: Vec<f64> = seqs.iter().map(|q| mean(&q.iter().map(|&k| ys[k]).collect::<Vec<_>>()).unwrap()).collect();
    let mut out = vec![0; xs.len()];
    if seqs.len() == m {
        let mut order: Vec<usize> = (0..seqs.len()).collect();
        order.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b)));
        for (line, &q) in order.iter().enumerate() {
            for &k in &seqs[q] {
                out[k] = line;
            }
        }
    } else {
        for (q, seq) in seqs.iter().enumerate() {
            let line = s.nearest_line(means[q]);
            for &k in seq {
                out[k] = line;
            }
        }
    }
    out
}

/// Bounded minimisation: a coarse grid over both dimensions, then a pattern
/// search that halves its step whenever no neighbour improves. `extra` seeds
/// are considered alongside the grid. Earlier points win ties.
fn grid_then_refine(
    b0: [f64; 2],
    b1: [f64; 2],
    extra: &[(f64, f64)],
    f: impl Fn(f64, f64) -> f64,
) -> (f64, f64) {
    const GRID: usize = 50;
    let mut best = (b0[0], b1[0]);
    let mut best_v = f64::INFINITY;
    let grid = linspace(b0[0], b0[1], GRID)
        .into_iter()
        .flat_map(|a| linspace(b1[0], b1[1], GRID).into_iter().map(move |b| (a, b)));
    for (a, b) in extra.iter().copied().chain(grid) {
        let v = f(a, b);
        if v < best_v {
            best = (a, b);
            best_v = v;
        }
    }
    let mut step = [(b0[1] - b0[0]) / (GRID - 1) as f64, (b1[1] - b1[0]) / (GRID - 1) as f64];
    for _ in 0..40 {
        let mut improved = false;
        for (da, db) in [(-step[0], 0.0), (step[0], 0.0), (0.0, -step[1]), (0.0, step[1])] {
            let cand = ((best.0 + da).clamp(b0[0], b0[1]), (best.1 + db).clamp(b1[0], b1[1]));
            let v = f(cand.0, cand.1);
            if v < best_v {
                best = cand;
                best_v = v;
                improved = true;
            }
        }
        if !improved {
            step = [step[0] / 2.0, step[1] / 2.0];
        }
    }
    best
}

/// Parallel lines `y = k·x + o + center_j` with Gaussian deviation `s`.
/// For fixed (k, o) the best line per fixation does not depend on `s`, and
/// the likelihood-maximising `s` is the RMS residual clamped to its bounds,
/// so only (k, o) are searched.
fn regress(xs: &[f64], ys: &[f64], s: &Stimulus, p: &AssignmentParams) -> Vec<usize> {
    let centers = &s.line_centers_y;
    let residuals = |k: f64, o: f64| -> Vec<(usize, f64)> {
        xs.iter()
            .zip(ys)
            .map(|(&x, &y)| {
                let r: Vec<f64> = centers.iter().map(|c| (y - (k * x + o + c)).abs()).collect();
                let j = argmin(r.iter().copied()).unwrap_or(0);
                (j, r[j])
            })
            .collect()
    };
    let [s_lo, s_hi] = p.regress_s_bounds;
    let neg_log_likelihood = |k: f64, o: f64| {
        let r = residuals(k, o);
        let n = r.len() as f64;
        let sse: f64 = r.iter().map(|(_, d)| d * d).sum();
        let sd = (sse / n).sqrt().clamp(s_lo, s_hi);
        n * sd.ln() + sse / (2.0 * sd * sd)
    };
    let seed = [(0.0f64.clamp(p.regress_k_bounds[0], p.regress_k_bounds[1]), 0.0f64.clamp(p.regress_o_bounds[0], p.regress_o_bounds[1]))];
    let (k, o) = grid_then_refine(p.regress_k_bounds, p.regress_o_bounds, &seed, neg_log_likelihood);
    residuals(k, o).into_iter().map(|(j, _)| j).collect()
}

fn segment(xs: &[f64], s: &Stimulus) -> Vec<usize> {
    let m = s.line_count();
    let mut jumps: Vec<usize> = (1..xs.len()).collect();
    jumps.sort_by(|&a, &b| (xs[a] - xs[a - 1]).total_cmp(&(xs[b] - xs[b - 1])).then(a.cmp(&b)));
    jumps.truncate(m - 1);
    let mut line = 0;
    (0..xs.len())
        .map(|i| {
            if jumps.contains(&i) {
                line += 1;
            }
            line.min(m - 1)
        })
        .collect()
}

/// 2-means on horizontal steps; the low-mean cluster marks return sweeps.
fn split(xs: &[f64], ys: &[f64], s: &Stimulus) -> Vec<usize> {
    let dx: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sweep = vec![false; dx.len()];
    let lo = dx.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = dx.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo < hi {
        let mut c = [lo, hi];
        for _ in 0..100 {
            let labels: Vec<bool> = dx.iter().map(|&d| (d - c[0]).abs() <= (d - c[1]).abs()).collect();
            let pick = |want: bool| {
                mean(&dx.iter().zip(&labels).filter(|(_, &l)| l == want).map(|(&d, _)| d).collect::<Vec<_>>())
            };
            let next = [pick(true).unwrap_or(c[0]), pick(false).unwrap_or(c[1])];
            sweep = labels;
            if next == c {
                break;
            }
            c = next;
        }
        if c[0] > c[1] {
            sweep.iter_mut().for_each(|b| *b = !*b);
        }
    }
    let g = groups(xs.len(), |i| sweep[i - 1]);
    let mut out = vec![0; xs.len()];
    assign_groups(&g, ys, s, &mut out);
    out
}

fn stretch(ys: &[f64], s: &Stimulus, p: &AssignmentParams) -> Vec<usize> {
    // Summing in sorted order keeps the fit independent of fixation order.
    let mut sorted = ys.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cost = |scale: f64, offset: f64| {
        sorted
            .iter()
            .map(|&y| {
                let t = scale * y + offset;
                (t - s.line_centers_y[s.nearest_line(t)]).abs()
            })
            .sum::<f64>()
    };
    let identity = [(1.0f64.clamp(p.stretch_scale_bounds[0], p.stretch_scale_bounds[1]), 0.0f64.clamp(p.stretch_offset_bounds[0], p.stretch_offset_bounds[1]))];
    let (scale, offset) = grid_then_refine(p.stretch_scale_bounds, p.stretch_offset_bounds, &identity, cost);
    ys.iter().map(|&y| s.nearest_line(scale * y + offset)).collect()
}

fn warp(xs: &[f64], ys: &[f64], s: &Stimulus) -> Vec<usize> {
    let fix: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    let words: Vec<(f64, f64, usize)> =
        s.words.iter().map(|w| (w.center_x(), s.line_centers_y[w.line_idx], w.line_idx)).collect();
    let r = dtw(&fix, &words, |a, b| (a.0 - b.0).hypot(a.1 - b.1)).expect("non-empty sequences");
    let mut votes: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); xs.len()];
    for (i, j) in r.path {
        *votes[i].entry(words[j].2).or_default() += 1;
    }
    votes
        .into_iter()
        .map(|v| {
            let top = *v.values().max().expect("every fixation is on the path");
            *v.iter().find(|(_, &c)| c == top).expect("max exists").0
        })
        .collect()
}

fn slice(xs: &[f64], ys: &[f64], s: &Stimulus, p: &AssignmentParams) -> Vec<usize> {
    let spacing = s.line_spacing();
    let run_y = p.slice_run_y_max.unwrap_or(0.5 * spacing);
    let same = p.slice_same_line_max.unwrap_or(0.5 * spacing);
    let adjacent = p.slice_adjacent_line_max.unwrap_or(1.4 * spacing);
    let mut runs: Vec<Vec<usize>> =
        groups(xs.len(), |i| (xs[i] - xs[i - 1]).abs() > p.slice_run_x_max || (ys[i] - ys[i - 1]).abs() > run_y)
            .into_iter()
            .map(|(a, b)| (a..b).collect())
            .collect();

    let extent = |r: &Vec<usize>| {
        let lo = r.iter().map(|&k| xs[k]).fold(f64::INFINITY, f64::min);
        let hi = r.iter().map(|&k| xs[k]).fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    // Longest run by horizontal extent; the first one wins ties.
    let longest = (0..runs.len()).fold(0, |b, i| if extent(&runs[i]) > extent(&runs[b]) { i } else { b });
    let anchor_y = mean(&runs[longest].iter().map(|&k| ys[k]).collect::<Vec<_>>()).unwrap();

    let mut proto: BTreeMap<i64, Vec<usize>> = BTreeMap::from([(0, runs.remove(longest))]);
    let mut phantom: BTreeMap<i64, (f64, f64)> = BTreeMap::new();

    let points_of = |proto: &BTreeMap<i64, Vec<usize>>, phantom: &BTreeMap<i64, (f64, f64)>, key: i64| -> Vec<(f64, f64)> {
        match proto.get(&key) {
            Some(v) if !v.is_empty() => v.iter().map(|&k| (xs[k], ys[k])).collect(),
            _ => vec![phantom[&key]],
        }
    };
    // Mean vertical offset of a run from the horizontally nearest points of a proto line.
    let offset = |pts: &[(f64, f64)], run: &[usize]| -> f64 {
        let d: Vec<f64> = run
            .iter()
            .map(|&k| {
                let near = argmin(pts.iter().map(|q| (q.0 - xs[k]).abs())).unwrap_or(0);
                ys[k] - pts[near].1
            })
            .collect();
        mean(&d).unwrap()
    };

    while !runs.is_empty() {
        let mut merged_any = false;
        for direction in [-1i64, 1] {
            let key = if direction < 0 { *proto.keys().next().unwrap() } else { *proto.keys().next_back().unwrap() };
            let pts = points_of(&proto, &phantom, key);
            proto.insert(key + direction, Vec::new());
            let diffs: Vec<f64> = runs.iter().map(|r| offset(&pts, r)).collect();
            let into_current: Vec<usize> = (0..runs.len()).filter(|&i| diffs[i].abs() < same).collect();
            let into_adjacent: Vec<usize> = (0..runs.len())
                .filter(|&i| {
                    let d = diffs[i] * direction as f64;
                    d >= same && d < adjacent
                })
                .collect();
            for &i in &into_current {
                let r = runs[i].clone();
                proto.get_mut(&key).unwrap().extend(r);
            }
            for &i in &into_adjacent {
                let r = runs[i].clone();
                proto.get_mut(&(key + direction)).unwrap().extend(r);
            }
            if into_adjacent.is_empty() {
                let ax = mean(&pts.iter().map(|q| q.0).collect::<Vec<_>>()).unwrap();
                let ay = mean(&pts.iter().map(|q| q.1).collect::<Vec<_>>()).unwrap();
                phantom.insert(key + direction, (ax, ay + spacing * direction as f64));
            }
            let mut taken: Vec<usize> = into_current.into_iter().chain(into_adjacent).collect();
            taken.sort_unstable();
            taken.dedup();
            merged_any |= !taken.is_empty();
            for i in taken.into_iter().rev() {
                runs.remove(i);
            }
        }
        if !merged_any {
            break;
        }
    }

    for run in runs {
        let keys: Vec<i64> = proto.keys().copied().collect();
        let dist = keys.iter().map(|&k| offset(&points_of(&proto, &phantom, k), &run).abs());
        let best = keys[argmin(dist).unwrap_or(0)];
        proto.get_mut(&best).unwrap().extend(run);
    }

    let m = s.line_count();
    while proto.len() > m {
        let top = *proto.keys().next().unwrap();
        let bottom = *proto.keys().next_back().unwrap();
        if proto[&top].len() < proto[&bottom].len() {
            let v = proto.remove(&top).unwrap();
            proto.get_mut(&(top + 1)).unwrap().extend(v);
        } else {
            let v = proto.remove(&bottom).unwrap();
            proto.get_mut(&(bottom - 1)).unwrap().extend(v);
        }
    }

    // Proto line 0 sits on the line nearest the anchor run; the rest follow
    // in vertical order, shifted as a block to stay within range.
    let lo = *proto.keys().next().unwrap();
    let hi = *proto.keys().next_back().unwrap();
    let mut shift = s.nearest_line(anchor_y) as i64;
    if lo + shift < 0 {
        shift = -lo;
    }
    if hi + shift > m as i64 - 1 {
        shift = m as i64 - 1 - hi;
    }
    let mut out = vec![0; xs.len()];
    for (key, members) in proto {
        let line = (key + shift).clamp(0, m as i64 - 1) as usize;
        for k in members {
            out[k] = line;
        }
    }
    out
}
