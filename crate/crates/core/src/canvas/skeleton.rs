//! Topology-preserving thinning.
//!
//! Two-subiteration parallel thinning in the Zhang-Suen scheme. Candidates of
//! each subiteration are collected in parallel and then deleted one at a time,
//! re-checking that each is still a simple point, so 8-connected components
//! never split or vanish. A final pass removes staircase corners (pixels with
//! two perpendicular 4-neighbours that are redundant under 8-connectivity) so
//! the result carries no 2x2 blocks. Blocks that survive both passes are
//! broken by a last-resort deletion that keeps foreground connectivity; only
//! blocks where every pixel is a cut pixel remain (see [`block_is_irreducible`]).

use super::raster::{PathMask, NEIGHBORS_8};

/// Neighbourhood bits in `NEIGHBORS_8` order (N, NE, E, SE, S, SW, W, NW).
fn neighborhood(mask: &PathMask, c: usize, r: usize) -> [bool; 8] {
    let mut n = [false; 8];
    for (i, (dc, dr)) in NEIGHBORS_8.iter().enumerate() {
        n[i] = mask.get_signed(c as i64 + dc, r as i64 + dr);
    }
    n
}

/// Yokoi 8-connectivity number; a foreground pixel is simple iff it is 1.
fn connectivity_number(n: &[bool; 8]) -> u32 {
    let bg = |i: usize| u32::from(!n[i % 8]);
    [0usize, 2, 4, 6].iter().map(|&k| bg(k) - bg(k) * bg(k + 1) * bg(k + 2)).sum()
}

pub(crate) fn is_simple(mask: &PathMask, c: usize, r: usize) -> bool {
    connectivity_number(&neighborhood(mask, c, r)) == 1
}

/// Number of 8-connected components formed by the set neighbours alone.
fn neighbor_components(n: &[bool; 8]) -> usize {
    let mut label = [usize::MAX; 8];
    let mut count = 0;
    for start in 0..8 {
        if !n[start] || label[start] != usize::MAX {
            continue;
        }
        label[start] = count;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for j in 0..8 {
                let (a, b) = (NEIGHBORS_8[i], NEIGHBORS_8[j]);
                if n[j] && label[j] == usize::MAX && (a.0 - b.0).abs() <= 1 && (a.1 - b.1).abs() <= 1 {
                    label[j] = count;
                    stack.push(j);
                }
            }
        }
        count += 1;
    }
    count
}

/// Zhang-Suen deletion test for subiteration `pass` (0 or 1).
fn zs_candidate(n: &[bool; 8], pass: usize) -> bool {
    let b = n.iter().filter(|x| **x).count();
    if !(2..=6).contains(&b) {
        return false;
    }
    let transitions = (0..8).filter(|&i| !n[i] && n[(i + 1) % 8]).count();
    if transitions != 1 {
        return false;
    }
    let (p2, p4, p6, p8) = (n[0], n[2], n[4], n[6]);
    if pass == 0 {
        !(p2 && p4 && p6) && !(p4 && p6 && p8)
    } else {
        !(p2 && p4 && p8) && !(p2 && p6 && p8)
    }
}

/// Deletes `candidates` sequentially, each only if still simple and not an end.
fn delete_checked(mask: &mut PathMask, candidates: &[(usize, usize)]) -> bool {
    let mut changed = false;
    for &(c, r) in candidates {
        if mask.neighbor_count(c, r) >= 2 && is_simple(mask, c, r) {
            mask.set(c, r, false);
            changed = true;
        }
    }
    changed
}

fn zs_pass(mask: &mut PathMask, pass: usize) -> bool {
    let mut candidates = Vec::new();
    for r in 0..mask.grid_height {
        for c in 0..mask.grid_width {
            if mask.get(c, r) && zs_candidate(&neighborhood(mask, c, r), pass) {
                candidates.push((c, r));
            }
        }
    }
    delete_checked(mask, &candidates)
}

fn staircase_pass(mask: &mut PathMask) -> bool {
    let mut changed = false;
    for r in 0..mask.grid_height {
        for c in 0..mask.grid_width {
            if !mask.get(c, r) {
                continue;
            }
            let n = neighborhood(mask, c, r);
            let corner = (n[0] && n[2]) || (n[2] && n[4]) || (n[4] && n[6]) || (n[6] && n[0]);
            if corner && mask.neighbor_count(c, r) >= 2 && is_simple(mask, c, r) {
                mask.set(c, r, false);
                changed = true;
            }
        }
    }
    changed
}

/// Breaks remaining 2x2 blocks by deleting a pixel whose neighbours stay
/// 8-connected without it. This may open a one-pixel hole into the
/// background but never splits a foreground component.
fn block_pass(mask: &mut PathMask) -> bool {
    let mut changed = false;
    for r in 0..mask.grid_height.saturating_sub(1) {
        for c in 0..mask.grid_width.saturating_sub(1) {
            let block = [(c, r), (c + 1, r), (c, r + 1), (c + 1, r + 1)];
            if !block.iter().all(|&(x, y)| mask.get(x, y)) {
                continue;
            }
            if let Some(&(x, y)) = block.iter().find(|&&(x, y)| neighbor_components(&neighborhood(mask, x, y)) == 1) {
                mask.set(x, y, false);
                changed = true;
            }
        }
    }
    changed
}

/// True when no pixel of the 2x2 block at `(c, r)` can be deleted without
/// splitting its neighbourhood (the four-arm "X" core). Thinning cannot
/// remove such blocks while keeping every component connected.
pub fn block_is_irreducible(mask: &PathMask, c: usize, r: usize) -> bool {
    [(c, r), (c + 1, r), (c, r + 1), (c + 1, r + 1)]
        .iter()
        .all(|&(x, y)| mask.get(x, y) && neighbor_components(&neighborhood(mask, x, y)) > 1)
}

/// Thins a binary mask to a width-1 skeleton, iterating to a fixpoint.
pub fn skeletonize(mask: &PathMask) -> PathMask {
    let mut out = mask.clone();
    loop {
        let mut changed = false;
        loop {
            let a = zs_pass(&mut out, 0);
            let b = zs_pass(&mut out, 1);
            if !(a || b) {
                break;
            }
            changed = true;
        }
        while staircase_pass(&mut out) {
            changed = true;
        }
        if !changed && block_pass(&mut out) {
            changed = true;
        }
        if !changed {
            return out;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ribbon_thins_to_centerline() {
        let mut m = PathMask::empty(24, 7);
        for r in 2..5 {
            for c in 2..22 {
                m.set(c, r, true);
            }
        }
        let s = skeletonize(&m);
        assert!(s.find_block().is_none());
        assert_eq!(s.component_count(), 1);
        let cols: Vec<usize> = (0..24).filter(|&c| (0..7).any(|r| s.get(c, r))).collect();
        assert!(*cols.first().unwrap() <= 3 && *cols.last().unwrap() >= 20, "{cols:?}");
        // every column in the span holds exactly one pixel
        for &c in &cols {
            assert_eq!((0..7).filter(|&r| s.get(c, r)).count(), 1);
        }
    }

    #[test]
    fn empty_and_single_pixel() {
        let e = PathMask::empty(5, 5);
        assert_eq!(skeletonize(&e), e);
        let mut one = PathMask::empty(5, 5);
        one.set(2, 3, true);
        assert_eq!(skeletonize(&one), one);
    }

    #[test]
    fn square_block_keeps_one_component() {
        let m = PathMask::from_ascii(&["....", ".##.", ".##.", "...."]);
        let s = skeletonize(&m);
        assert_eq!(s.component_count(), 1);
        assert!(s.find_block().is_none());
        assert!(s.count() >= 1);
    }

    #[test]
    fn staircase_corner_removed() {
        let m = PathMask::from_ascii(&["##...", ".##..", "..##.", "...##"]);
        let s = skeletonize(&m);
        assert_eq!(s.component_count(), 1);
        for r in 0..4 {
            for c in 0..5 {
                if s.get(c, r) {
                    let n = neighborhood(&s, c, r);
                    assert!(!((n[0] && n[2]) || (n[2] && n[4]) || (n[4] && n[6]) || (n[6] && n[0])));
                }
            }
        }
    }

    #[test]
    fn cross_is_preserved() {
        let m = PathMask::from_ascii(&["..#..", "..#..", "#####", "..#..", "..#.."]);
        assert_eq!(skeletonize(&m), m);
    }
}

/// Removes terminal branches of at most `max_len` pixels that end on a
/// junction pixel (three or more neighbours). Branches that never reach a
/// junction are whole lines and are kept. Single pass, then re-thinned.
pub fn prune_spurs(skeleton: &PathMask, max_len: usize) -> PathMask {
    if max_len == 0 {
        return skeleton.clone();
    }
    let mut out = skeleton.clone();
    let (w, h) = (skeleton.grid_width, skeleton.grid_height);
    for r in 0..h {
        for c in 0..w {
            if !skeleton.get(c, r) || skeleton.neighbor_count(c, r) != 1 {
                continue;
            }
            let mut branch = vec![(c, r)];
            let (mut prev, mut cur) = ((c, r), (c, r));
            let reached_junction = loop {
                let next = NEIGHBORS_8.iter().find_map(|(dc, dr)| {
                    let (nc, nr) = (cur.0 as i64 + dc, cur.1 as i64 + dr);
                    let n = (nc as usize, nr as usize);
                    (skeleton.get_signed(nc, nr) && n != prev).then_some(n)
                });
                let Some(next) = next else { break false };
                match skeleton.neighbor_count(next.0, next.1) {
                    2 => {
                        if branch.len() >= max_len {
                            break false;
                        }
                        branch.push(next);
                        prev = cur;
                        cur = next;
                    }
                    k => break k >= 3,
                }
            };
            if reached_junction {
                for (x, y) in branch {
                    out.set(x, y, false);
                }
            }
        }
    }
    skeletonize(&out)
}
