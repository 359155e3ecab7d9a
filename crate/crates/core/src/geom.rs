//! Grid geometry shared by every module: coordinates, directions and
//! quarter-turn rotations. `x` grows east, `y` grows south.

use core::fmt;
use core::ops::{Add, AddAssign, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Coord {
    pub x: i32,
    pub y: i32,
}

impl Coord {
    pub const ORIGIN: Coord = Coord { x: 0, y: 0 };

    pub const fn new(x: i32, y: i32) -> Self {
        Coord { x, y }
    }

    pub fn manhattan(self) -> u32 {
        self.x.unsigned_abs() + self.y.unsigned_abs()
    }

    pub fn distance(self, other: Coord) -> u32 {
        (self - other).manhattan()
    }

    pub fn neighbors(self) -> [Coord; 4] {
        Dir::ALL.map(|d| self + d.delta())
    }

    pub fn is_adjacent(self, other: Coord) -> bool {
        self.distance(other) == 1
    }

    /// Quarter turn clockwise about the origin: (x, y) -> (-y, x).
    pub fn rotate_cw(self) -> Coord {
        Coord::new(-self.y, self.x)
    }

    /// Quarter turn counter-clockwise about the origin: (x, y) -> (y, -x).
    pub fn rotate_ccw(self) -> Coord {
        Coord::new(self.y, -self.x)
    }

    pub fn rotate(self, turn: Turn) -> Coord {
        match turn {
            Turn::Cw => self.rotate_cw(),
            Turn::Ccw => self.rotate_ccw(),
        }
    }

    /// Applies `quarters` clockwise quarter turns (taken mod 4).
    pub fn rotated(self, quarters: u8) -> Coord {
        let mut c = self;
        for _ in 0..(quarters % 4) {
            c = c.rotate_cw();
        }
        c
    }

    /// The direction of a unit offset, if this is one.
    pub fn as_dir(self) -> Option<Dir> {
        Dir::ALL.into_iter().find(|d| d.delta() == self)
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

impl Add for Coord {
    type Output = Coord;
    fn add(self, rhs: Coord) -> Coord {
        Coord::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Coord {
    fn add_assign(&mut self, rhs: Coord) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Coord {
    type Output = Coord;
    fn sub(self, rhs: Coord) -> Coord {
        Coord::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Coord {
    type Output = Coord;
    fn neg(self) -> Coord {
        Coord::new(-self.x, -self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dir {
    N,
    S,
    E,
    W,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::N, Dir::S, Dir::E, Dir::W];

    pub fn delta(self) -> Coord {
        match self {
            Dir::N => Coord::new(0, -1),
            Dir::S => Coord::new(0, 1),
            Dir::E => Coord::new(1, 0),
            Dir::W => Coord::new(-1, 0),
        }
    }

    pub fn opposite(self) -> Dir {
        match self {
            Dir::N => Dir::S,
            Dir::S => Dir::N,
            Dir::E => Dir::W,
            Dir::W => Dir::E,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Turn {
    Cw,
    Ccw,
}

impl Turn {
    /// Change in the clockwise quarter-turn count.
    pub fn quarters(self) -> u8 {
        match self {
            Turn::Cw => 1,
            Turn::Ccw => 3,
        }
    }
}

/// True when the cells form one 4-connected component (an empty set counts as connected).
pub fn is_connected(cells: &[Coord]) -> bool {
    use alloc::collections::BTreeSet;
    use alloc::vec;
    let Some(&first) = cells.first() else {
        return true;
    };
    let all: BTreeSet<Coord> = cells.iter().copied().collect();
    let mut seen = BTreeSet::new();
    seen.insert(first);
    let mut stack = vec![first];
    while let Some(c) = stack.pop() {
        for n in c.neighbors() {
            if all.contains(&n) && seen.insert(n) {
                stack.push(n);
            }
        }
    }
    seen.len() == all.len()
}
