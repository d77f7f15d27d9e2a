//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use collision_replay::gridmap::{Compass, GridMap};
use collision_replay::rollout::PolicyConfig;

/// Distance (in steps) from one cell to the nearest cell with an occupied
/// neighbor, found by a plain BFS from that cell alone.
pub fn brute_force_df(map: &GridMap, compass: Compass, x: i32, y: i32) -> u32 {
    let is_seed = |x: i32, y: i32| compass.dirs().iter().any(|&(dx, dy)| map.is_occupied(x + dx, y + dy));
    let mut seen = HashMap::new();
    let mut queue = VecDeque::from([((x, y), 0u32)]);
    seen.insert((x, y), ());
    while let Some(((cx, cy), d)) = queue.pop_front() {
        if is_seed(cx, cy) {
            return d;
        }
        for &(dx, dy) in compass.dirs() {
            let n = (cx + dx, cy + dy);
            if map.is_free(n.0, n.1) && seen.insert(n, ()).is_none() {
                queue.push_back((n, d + 1));
            }
        }
    }
    panic!("no wall reachable from ({x}, {y})");
}

/// Number of 4-connected free regions.
pub fn flood_fill_regions(map: &GridMap) -> usize {
    let mut seen = vec![false; map.width() * map.height()];
    let mut regions = 0;
    for (x, y) in map.free_cells() {
        let i = y as usize * map.width() + x as usize;
        if seen[i] {
            continue;
        }
        regions += 1;
        let mut stack = vec![(x, y)];
        seen[i] = true;
        while let Some((cx, cy)) = stack.pop() {
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (nx, ny) = (cx + dx, cy + dy);
                if map.is_free(nx, ny) {
                    let j = ny as usize * map.width() + nx as usize;
                    if !seen[j] {
                        seen[j] = true;
                        stack.push((nx, ny));
                    }
                }
            }
        }
    }
    regions
}

fn state_index(map: &GridMap, compass: Compass, x: i32, y: i32, h: u8) -> usize {
    (y as usize * map.width() + x as usize) * compass.count() as usize + h as usize
}

/// Exact distribution of ticks until the next collision from an unforced
/// state `(x, y, heading)`, for a noiseless walk with `policy`, by forward
/// propagation of the absorbing chain. Bin `k` holds `P(T >= k)`.
pub fn hitting_time_distribution(map: &GridMap, compass: Compass, policy: &PolicyConfig, start: (i32, i32, u8), k: usize) -> Vec<f64> {
    let h = compass.count();
    let n = map.width() * map.height() * h as usize;
    let mut mass = vec![0.0; n];
    mass[state_index(map, compass, start.0, start.1, start.2)] = 1.0;
    let mut out = vec![0.0; k + 1];
    for slot in out.iter_mut().take(k) {
        let mut next = vec![0.0; n];
        for (x, y) in map.free_cells() {
            for hd in 0..h {
                let m = mass[state_index(map, compass, x, y, hd)];
                if m == 0.0 {
                    continue;
                }
                let (dx, dy) = compass.dir(hd);
                if map.is_occupied(x + dx, y + dy) {
                    *slot += m * policy.p_forward;
                } else {
                    next[state_index(map, compass, x + dx, y + dy, hd)] += m * policy.p_forward;
                }
                next[state_index(map, compass, x, y, compass.rotate(hd, -1))] += m * policy.p_left;
                next[state_index(map, compass, x, y, compass.rotate(hd, 1))] += m * policy.p_right;
            }
        }
        mass = next;
    }
    out[k] = 1.0 - out[..k].iter().sum::<f64>();
    out
}

/// `P(F = f)` for `f < k` where `F` counts forward moves before the next
/// collision (turns are free), for every `(x, y, heading)` state. Solved per
/// level by fixed-point iteration over the turn dynamics.
pub fn forward_count_distributions(map: &GridMap, compass: Compass, policy: &PolicyConfig, k: usize) -> HashMap<(i32, i32, u8), Vec<f64>> {
    let h = compass.count();
    let n = map.width() * map.height() * h as usize;
    let cells = map.free_cells();
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(k);
    for f in 0..k {
        // source term: collide now (f == 0) or move forward into level f-1
        let mut source = vec![0.0; n];
        for &(x, y) in &cells {
            for hd in 0..h {
                let (dx, dy) = compass.dir(hd);
                let i = state_index(map, compass, x, y, hd);
                source[i] = if map.is_occupied(x + dx, y + dy) {
                    if f == 0 { policy.p_forward } else { 0.0 }
                } else if f > 0 {
                    policy.p_forward * levels[f - 1][state_index(map, compass, x + dx, y + dy, hd)]
                } else {
                    0.0
                };
            }
        }
        let mut q = source.clone();
        for _ in 0..10_000 {
            let mut next = source.clone();
            for &(x, y) in &cells {
                for hd in 0..h {
                    let i = state_index(map, compass, x, y, hd);
                    next[i] += policy.p_left * q[state_index(map, compass, x, y, compass.rotate(hd, -1))]
                        + policy.p_right * q[state_index(map, compass, x, y, compass.rotate(hd, 1))];
                }
            }
            let delta = next.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            q = next;
            if delta < 1e-16 {
                break;
            }
        }
        levels.push(q);
    }
    let mut out = HashMap::new();
    for &(x, y) in &cells {
        for hd in 0..h {
            let i = state_index(map, compass, x, y, hd);
            out.insert((x, y, hd), levels.iter().map(|l| l[i]).collect());
        }
    }
    out
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
