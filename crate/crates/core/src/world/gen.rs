//! Seeded world and task generation.
//!
//! Obstacles are scattered at the configured density and smoothed with a
//! cellular-automaton pass. Goal clusters, dispensers and agents are placed
//! inside the largest free region so every generated world is playable.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::RngCore;

use super::*;
use crate::geom::Coord;

/// A random connected shape with `size` blocks. The first block always sits
/// directly south of the submitting agent; the rest grow from the shape.
pub fn random_shape<R: RngCore>(rng: &mut R, size: u32, block_types: BlockType) -> TaskShape {
    let mut cells: Vec<Coord> = alloc::vec![Coord::new(0, 1)];
    while (cells.len() as u32) < size {
        let mut frontier: Vec<Coord> = cells
            .iter()
            .flat_map(|c| c.neighbors())
            .filter(|n| *n != Coord::ORIGIN && !cells.contains(n))
            .collect();
        frontier.sort();
        frontier.dedup();
        let pick = frontier[rng.gen_range(0..frontier.len())];
        cells.push(pick);
    }
    TaskShape::new(
        cells
            .into_iter()
            .map(|offset| ShapeEntry {
                offset,
                kind: rng.gen_range(0..block_types.max(1)),
            })
            .collect(),
    )
}

/// Every distinct task footprint with `size` cells: connected, never
/// covering the origin and always holding the cell directly south of it.
pub fn all_shapes(size: usize) -> Vec<Vec<Coord>> {
    let mut layer: BTreeSet<Vec<Coord>> = BTreeSet::new();
    if size == 0 {
        return Vec::new();
    }
    layer.insert(alloc::vec![Coord::new(0, 1)]);
    for _ in 1..size {
        let mut next = BTreeSet::new();
        for cells in &layer {
            for c in cells {
                for n in c.neighbors() {
                    if n == Coord::ORIGIN || cells.contains(&n) {
                        continue;
                    }
                    let mut grown = cells.clone();
                    grown.push(n);
                    grown.sort();
                    next.insert(grown);
                }
            }
        }
        layer = next;
    }
    layer.into_iter().collect()
}

impl WorldState {
    /// Generates a world for `teams` (name, agent count) from `seed`.
    pub fn generate(config: WorldConfig, teams: &[(String, u32)], seed: u64) -> WorldState {
        let mut w = WorldState::empty(config, seed);
        let mut rng = w.rng.fork(1);
        let (width, height) = (w.config.width as i32, w.config.height as i32);

        let mut obstacle: Vec<bool> = (0..width * height)
            .map(|_| rng.gen_bool(w.config.obstacle_density))
            .collect();
        for _ in 0..w.config.smoothing_passes {
            let prev = obstacle.clone();
            for y in 0..height {
                for x in 0..width {
                    let mut count = 0;
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            if dx == 0 && dy == 0 {
                                continue;
                            }
                            let (nx, ny) = (x + dx, y + dy);
                            if nx >= 0 && ny >= 0 && nx < width && ny < height {
                                count += prev[(ny * width + nx) as usize] as u32;
                            }
                        }
                    }
                    let i = (y * width + x) as usize;
                    // lone specks vanish, dense pockets fill in
                    obstacle[i] = if prev[i] { count >= 1 } else { count >= 5 };
                }
            }
        }
        for y in 0..height {
            for x in 0..width {
                if obstacle[(y * width + x) as usize] {
                    w.set_terrain(Coord::new(x, y), Terrain::Obstacle);
                }
            }
        }

        let region = w.largest_free_region();
        let mut free: Vec<Coord> = region.iter().copied().collect();

        // goal clusters grown by BFS inside the region
        let mut used: BTreeSet<Coord> = BTreeSet::new();
        for _ in 0..w.config.goal_clusters {
            if free.is_empty() {
                break;
            }
            let seed_cell = free[rng.gen_range(0..free.len())];
            let mut queue = VecDeque::from([seed_cell]);
            let mut grown = 0;
            while let Some(c) = queue.pop_front() {
                if grown >= w.config.goal_cluster_size {
                    break;
                }
                if !region.contains(&c) || used.contains(&c) {
                    continue;
                }
                used.insert(c);
                w.set_terrain(c, Terrain::Goal);
                grown += 1;
                let mut ns = c.neighbors();
                ns.shuffle(&mut rng);
                queue.extend(ns);
            }
        }
        free.retain(|c| !used.contains(c));
        free.shuffle(&mut rng);

        for kind in 0..w.config.block_types {
            for _ in 0..w.config.dispensers_per_type {
                if let Some(c) = free.pop() {
                    w.set_terrain(c, Terrain::Dispenser(kind as BlockType));
                }
            }
        }

        for (name, count) in teams {
            let team = w.add_team(name.clone());
            let spots: Vec<Coord> = match w.config.spawn_spread {
                Some(spread) if !free.is_empty() => {
                    let center = free[rng.gen_range(0..free.len())];
                    let half = (spread / 2) as i32;
                    let near: Vec<Coord> = free
                        .iter()
                        .copied()
                        .filter(|c| (c.x - center.x).abs() <= half && (c.y - center.y).abs() <= half)
                        .collect();
                    if near.len() >= *count as usize {
                        near
                    } else {
                        free.clone()
                    }
                }
                _ => free.clone(),
            };
            let mut placed = 0;
            for c in spots {
                if placed == *count {
                    break;
                }
                if w.occupant(c).is_none() {
                    w.add_agent(team, c);
                    free.retain(|f| *f != c);
                    placed += 1;
                }
            }
        }

        let mut events = Vec::new();
        w.spawn_random(&mut events);
        w
    }

    fn largest_free_region(&self) -> BTreeSet<Coord> {
        let mut seen: BTreeSet<Coord> = BTreeSet::new();
        let mut best: BTreeSet<Coord> = BTreeSet::new();
        for y in 0..self.config.height as i32 {
            for x in 0..self.config.width as i32 {
                let start = Coord::new(x, y);
                if self.terrain(start) == Terrain::Obstacle || seen.contains(&start) {
                    continue;
                }
                let mut region = BTreeSet::new();
                let mut queue = VecDeque::from([start]);
                seen.insert(start);
                while let Some(c) = queue.pop_front() {
                    region.insert(c);
                    for n in c.neighbors() {
                        if self.in_bounds(n) && self.terrain(n) != Terrain::Obstacle && seen.insert(n) {
                            queue.push_back(n);
                        }
                    }
                }
                if region.len() > best.len() {
                    best = region;
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn shapes_are_well_formed() {
        let mut rng = SimRng::seed_from_u64(3);
        for size in 1..=6 {
            for _ in 0..50 {
                let s = random_shape(&mut rng, size, 3);
                assert_eq!(s.len() as u32, size);
                assert!(s.is_well_formed(), "{s:?}");
                assert!(s.contains(Coord::new(0, 1)));
            }
        }
    }

    #[test]
    fn shape_enumeration() {
        assert_eq!(all_shapes(1).len(), 1);
        assert_eq!(all_shapes(2).len(), 3);
        for k in 2..=4 {
            for s in all_shapes(k) {
                assert_eq!(s.len(), k);
                assert!(crate::geom::is_connected(&s));
                assert!(!s.contains(&Coord::ORIGIN));
            }
        }
        // every random shape shows up in the enumeration
        let mut rng = SimRng::seed_from_u64(8);
        let three = all_shapes(3);
        for _ in 0..100 {
            let t = random_shape(&mut rng, 3, 1);
            let cells: Vec<Coord> = t.entries().iter().map(|e| e.offset).collect();
            assert!(three.contains(&cells));
        }
    }

    #[test]
    fn generation_is_deterministic_and_sound() {
        let teams = vec![("A".to_string(), 4), ("B".to_string(), 4)];
        let a = WorldState::generate(WorldConfig::default(), &teams, 11);
        let b = WorldState::generate(WorldConfig::default(), &teams, 11);
        assert_eq!(a.agents, b.agents);
        assert_eq!(a.terrain, b.terrain);
        assert_eq!(a.agents().count(), 8);
        assert!(a.check_invariants().is_ok());
        let dispensers = a.terrain.iter().filter(|t| matches!(t, Terrain::Dispenser(_))).count();
        assert_eq!(dispensers, 4);
        assert!(a.terrain.contains(&Terrain::Goal));
        assert_eq!(a.tasks().count(), 1);
    }

    #[test]
    fn spawn_spread_keeps_team_close() {
        let cfg = WorldConfig {
            spawn_spread: Some(8),
            ..WorldConfig::default()
        };
        let w = WorldState::generate(cfg, &[("A".to_string(), 5)], 5);
        let ps: Vec<Coord> = w.agents().map(|a| a.pos).collect();
        for p in &ps {
            for q in &ps {
                assert!((p.x - q.x).abs() <= 8 && (p.y - q.y).abs() <= 8);
            }
        }
    }
}
