//! Benchmark environments: 8×8 FrozenLake, Taxi and seeded 2D mazes.
//!
//! All builders return models with discount [`DEFAULT_DISCOUNT`]; use
//! [`Mdp::with_discount`] to change it.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{ActionEntry, Mdp};

pub const DEFAULT_DISCOUNT: f64 = 0.95;

/// Merges duplicate targets and sorts by target so every entry is canonical.
fn distribution(outcomes: impl IntoIterator<Item = (usize, f64)>) -> Vec<(usize, f64)> {
    let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
    for (j, p) in outcomes {
        if p > 0.0 {
            *merged.entry(j).or_insert(0.0) += p;
        }
    }
    merged.into_iter().collect()
}

// ---------------------------------------------------------------------------
// FrozenLake

pub const FROZENLAKE_MAP: [&str; 8] = [
    "SFFFFFFF", "FFFFFFFF", "FFFHFFFF", "FFFFFHFF", "FFFHFFFF", "FHHFFFHF", "FHFFHFHF", "FFFHFFFG",
];
pub const FROZENLAKE_NORMAL_COST: f64 = 1.0;
pub const FROZENLAKE_HOLE_COST: f64 = 1e3;

/// Tile kind of FrozenLake state `s` (row-major over the 8×8 map).
pub fn frozenlake_tile(s: usize) -> u8 {
    FROZENLAKE_MAP[s / 8].as_bytes()[s % 8]
}

/// 8×8 slippery FrozenLake. Actions are left, down, right, up; each moves in
/// the intended direction or one of its two perpendiculars with probability
/// 1/3, and moves off the grid leave the agent in place. Holes cost 1000 per
/// stage and trap the agent; the goal is absorbing at zero cost.
pub fn build_frozenlake() -> Mdp {
    const SIDE: usize = 8;
    // left, down, right, up
    const MOVES: [(isize, isize); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];
    let step = |s: usize, dir: usize| -> usize {
        let (r, c) = ((s / SIDE) as isize, (s % SIDE) as isize);
        let (nr, nc) = (r + MOVES[dir].0, c + MOVES[dir].1);
        if (0..SIDE as isize).contains(&nr) && (0..SIDE as isize).contains(&nc) {
            nr as usize * SIDE + nc as usize
        } else {
            s
        }
    };
    let actions = (0..SIDE * SIDE)
        .map(|s| match frozenlake_tile(s) {
            b'H' => vec![ActionEntry::deterministic(FROZENLAKE_HOLE_COST, s); 4],
            b'G' => vec![ActionEntry::deterministic(0.0, s); 4],
            _ => (0..4)
                .map(|a| {
                    let outcomes = [(a + 3) % 4, a, (a + 1) % 4]
                        .into_iter()
                        .map(|d| (step(s, d), 1.0 / 3.0));
                    ActionEntry::new(FROZENLAKE_NORMAL_COST, distribution(outcomes))
                })
                .collect(),
        })
        .collect();
    Mdp::new(DEFAULT_DISCOUNT, actions)
}

// ---------------------------------------------------------------------------
// Taxi

const TAXI_MAP: [&str; 7] = [
    "+---------+",
    "|R: | : :G|",
    "| : | : : |",
    "| : : : : |",
    "| | : | : |",
    "|Y| : |B: |",
    "+---------+",
];
/// Landmarks R, G, Y, B as (row, col).
pub const TAXI_LOCATIONS: [(usize, usize); 4] = [(0, 0), (0, 4), (4, 0), (4, 3)];
/// Passenger-location code meaning "in the taxi".
pub const TAXI_IN_CAR: usize = 4;
pub const TAXI_DELIVERY_COST: f64 = -20.0;
pub const TAXI_ILLEGAL_COST: f64 = 10.0;
pub const TAXI_STEP_COST: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaxiAction {
    South = 0,
    North = 1,
    East = 2,
    West = 3,
    Pickup = 4,
    Dropoff = 5,
}

pub fn taxi_encode(row: usize, col: usize, passenger: usize, destination: usize) -> usize {
    ((row * 5 + col) * 5 + passenger) * 4 + destination
}

/// `(row, col, passenger, destination)`.
pub fn taxi_decode(state: usize) -> (usize, usize, usize, usize) {
    let destination = state % 4;
    let rest = state / 4;
    let passenger = rest % 5;
    let rest = rest / 5;
    (rest / 5, rest % 5, passenger, destination)
}

/// States whose passenger already sits at its destination. These stand for
/// the end of an episode and are absorbing at zero cost.
pub fn taxi_is_delivered(state: usize) -> bool {
    let (_, _, passenger, destination) = taxi_decode(state);
    passenger == destination
}

/// The 500-state Taxi domain on the classic 5×5 walled map.
///
/// Moves cost 1 (also when blocked by a wall or the border, in which case the
/// taxi stays put). Pick-up and drop-off cost 10 when illegal. Dropping the
/// passenger at a landmark other than the destination is legal and costs 1;
/// dropping at the destination costs −20 and enters a delivered state.
pub fn build_taxi() -> Mdp {
    let wall_free = |row: usize, col: usize, east: bool| -> bool {
        let line = TAXI_MAP[row + 1].as_bytes();
        let k = if east { 2 * col + 2 } else { 2 * col };
        line[k] == b':'
    };
    let mut actions = Vec::with_capacity(500);
    for s in 0..500 {
        if taxi_is_delivered(s) {
            actions.push(vec![ActionEntry::deterministic(0.0, s); 6]);
            continue;
        }
        let (row, col, passenger, destination) = taxi_decode(s);
        let at = |r: usize, c: usize| taxi_encode(r, c, passenger, destination);
        let mut entries = Vec::with_capacity(6);
        entries.push(ActionEntry::deterministic(
            TAXI_STEP_COST,
            at((row + 1).min(4), col),
        ));
        entries.push(ActionEntry::deterministic(
            TAXI_STEP_COST,
            at(row.saturating_sub(1), col),
        ));
        let east = if col < 4 && wall_free(row, col, true) {
            col + 1
        } else {
            col
        };
        entries.push(ActionEntry::deterministic(TAXI_STEP_COST, at(row, east)));
        let west = if col > 0 && wall_free(row, col, false) {
            col - 1
        } else {
            col
        };
        entries.push(ActionEntry::deterministic(TAXI_STEP_COST, at(row, west)));

        let landmark = TAXI_LOCATIONS.iter().position(|&l| l == (row, col));
        let pickup = if passenger < 4 && landmark == Some(passenger) {
            ActionEntry::deterministic(
                TAXI_STEP_COST,
                taxi_encode(row, col, TAXI_IN_CAR, destination),
            )
        } else {
            ActionEntry::deterministic(TAXI_ILLEGAL_COST, s)
        };
        entries.push(pickup);
        let dropoff = match landmark {
            Some(l) if passenger == TAXI_IN_CAR && l == destination => ActionEntry::deterministic(
                TAXI_DELIVERY_COST,
                taxi_encode(row, col, destination, destination),
            ),
            Some(l) if passenger == TAXI_IN_CAR => {
                ActionEntry::deterministic(TAXI_STEP_COST, taxi_encode(row, col, l, destination))
            }
            _ => ActionEntry::deterministic(TAXI_ILLEGAL_COST, s),
        };
        entries.push(dropoff);
        actions.push(entries);
    }
    Mdp::new(DEFAULT_DISCOUNT, actions)
}

// ---------------------------------------------------------------------------
// 2D maze

pub const DEFAULT_SLIP_MASS: f64 = 0.7;
pub const DEFAULT_WALL_DENSITY: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MazeParams {
    /// Grid is `side × side`.
    pub side: usize,
    pub seed: u64,
    /// Probability of the intended move.
    pub slip_mass: f64,
    /// Target fraction of cells turned into walls before connectivity repair.
    pub wall_density: f64,
}

impl MazeParams {
    pub fn new(side: usize, seed: u64) -> Self {
        Self {
            side,
            seed,
            slip_mass: DEFAULT_SLIP_MASS,
            wall_density: DEFAULT_WALL_DENSITY,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.side < 3 {
            return Err(Error::InvalidConfig(format!(
                "maze side must be ≥ 3, got {}",
                self.side
            )));
        }
        if !(self.slip_mass > 0.0 && self.slip_mass <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "slip mass must be in (0,1], got {}",
                self.slip_mass
            )));
        }
        if !(0.0..0.9).contains(&self.wall_density) {
            return Err(Error::InvalidConfig(format!(
                "wall density must be in [0,0.9), got {}",
                self.wall_density
            )));
        }
        Ok(())
    }
}

/// A generated grid. Free cells are numbered row-major; the terminal cell is
/// the bottom-right corner and therefore the last state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MazeLayout {
    pub side: usize,
    /// `free[r * side + c]`.
    pub free: Vec<bool>,
    /// `state_of[cell]` for free cells.
    pub state_of: Vec<Option<usize>>,
    pub cells: Vec<usize>,
}

impl MazeLayout {
    pub fn n_states(&self) -> usize {
        self.cells.len()
    }

    pub fn terminal(&self) -> usize {
        self.cells.len() - 1
    }

    /// Free in-grid neighbours of `cell`, ordered north, east, south, west
    /// (`None` where blocked).
    pub fn neighbours(&self, cell: usize) -> [Option<usize>; 4] {
        let n = self.side;
        let (r, c) = (cell / n, cell % n);
        let candidates = [
            (r > 0).then(|| cell - n),
            (c + 1 < n).then(|| cell + 1),
            (r + 1 < n).then(|| cell + n),
            (c > 0).then(|| cell - 1),
        ];
        candidates.map(|x| x.filter(|&k| self.free[k]))
    }
}

/// Scatters random wall segments until the requested density is reached,
/// then drops every free cell that cannot reach the terminal corner.
pub fn generate_maze_layout(params: &MazeParams) -> Result<MazeLayout> {
    params.check()?;
    let n = params.side;
    let cells = n * n;
    let terminal = cells - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut free = vec![true; cells];
    let target = (params.wall_density * cells as f64).round() as usize;
    let max_len = (n / 4).max(1);
    let mut walls = 0;
    while walls < target {
        let (r, c) = (rng.random_range(0..n), rng.random_range(0..n));
        let len = rng.random_range(1..=max_len);
        let horizontal = rng.random_bool(0.5);
        for k in 0..len {
            let (rr, cc) = if horizontal { (r, c + k) } else { (r + k, c) };
            if rr >= n || cc >= n || walls >= target {
                break;
            }
            let cell = rr * n + cc;
            if cell != terminal && free[cell] {
                free[cell] = false;
                walls += 1;
            }
        }
    }

    let mut reached = vec![false; cells];
    let mut queue = VecDeque::from([terminal]);
    reached[terminal] = true;
    while let Some(cell) = queue.pop_front() {
        let (r, c) = (cell / n, cell % n);
        let around = [
            (r > 0).then(|| cell - n),
            (c + 1 < n).then(|| cell + 1),
            (r + 1 < n).then(|| cell + n),
            (c > 0).then(|| cell - 1),
        ];
        for next in around.into_iter().flatten() {
            if free[next] && !reached[next] {
                reached[next] = true;
                queue.push_back(next);
            }
        }
    }
    let free = reached;
    let mut state_of = vec![None; cells];
    let mut order = Vec::new();
    for cell in 0..cells {
        if free[cell] {
            state_of[cell] = Some(order.len());
            order.push(cell);
        }
    }
    Ok(MazeLayout {
        side: n,
        free,
        state_of,
        cells: order,
    })
}

/// Seeded `side × side` maze with four actions (north, east, south, west).
///
/// The intended move (or staying put, when it is blocked) gets `slip_mass`;
/// the rest is spread evenly over the other free neighbours and staying put.
/// Every stage costs 1 except at the terminal, which is absorbing and free.
pub fn build_maze(params: &MazeParams) -> Result<Mdp> {
    let layout = generate_maze_layout(params)?;
    Ok(maze_mdp(&layout, params.slip_mass))
}

pub fn maze_mdp(layout: &MazeLayout, slip_mass: f64) -> Mdp {
    let terminal = layout.terminal();
    let state = |cell: usize| layout.state_of[cell].expect("free cell has a state");
    let actions = layout
        .cells
        .iter()
        .enumerate()
        .map(|(s, &cell)| {
            if s == terminal {
                return vec![ActionEntry::deterministic(0.0, s); 4];
            }
            let around = layout.neighbours(cell);
            let mut outcomes: Vec<usize> = around.iter().flatten().map(|&k| state(k)).collect();
            outcomes.push(s);
            (0..4)
                .map(|a| {
                    let intended = around[a].map_or(s, state);
                    let others: Vec<usize> = outcomes
                        .iter()
                        .copied()
                        .filter(|&o| o != intended)
                        .collect();
                    let rest = if others.is_empty() {
                        0.0
                    } else {
                        (1.0 - slip_mass) / others.len() as f64
                    };
                    let mass = if others.is_empty() { 1.0 } else { slip_mass };
                    let dist = std::iter::once((intended, mass))
                        .chain(others.into_iter().map(|o| (o, rest)));
                    ActionEntry::new(1.0, distribution(dist))
                })
                .collect()
        })
        .collect();
    Mdp::new(DEFAULT_DISCOUNT, actions)
}

// ---------------------------------------------------------------------------
// Random instances

/// Generator of small random MDPs with sparse transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomMdp {
    pub n_states: usize,
    /// Each state gets between 1 and this many actions.
    pub max_actions: usize,
    /// Each action reaches between 1 and this many distinct states.
    pub max_branching: usize,
    pub discount: f64,
    pub min_cost: f64,
    pub max_cost: f64,
}

impl RandomMdp {
    pub fn new(n_states: usize, discount: f64) -> Self {
        Self {
            n_states,
            max_actions: 4,
            max_branching: 4,
            discount,
            min_cost: -5.0,
            max_cost: 5.0,
        }
    }

    pub fn with_costs(mut self, min_cost: f64, max_cost: f64) -> Self {
        self.min_cost = min_cost;
        self.max_cost = max_cost;
        self
    }

    pub fn build(&self, seed: u64) -> Mdp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.build_with(&mut rng)
    }

    pub fn build_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Mdp {
        let n = self.n_states;
        let actions = (0..n)
            .map(|_| {
                let count = rng.random_range(1..=self.max_actions.max(1));
                (0..count)
                    .map(|_| {
                        let cost = if self.max_cost > self.min_cost {
                            rng.random_range(self.min_cost..self.max_cost)
                        } else {
                            self.min_cost
                        };
                        let branching = rng.random_range(1..=self.max_branching.clamp(1, n));
                        let targets = rand::seq::index::sample(rng, n, branching).into_vec();
                        let weights: Vec<f64> = (0..branching)
                            .map(|_| rng.random_range(0.05..1.0))
                            .collect();
                        let total: f64 = weights.iter().sum();
                        let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
                        let head: f64 = probs[..branching - 1].iter().sum();
                        probs[branching - 1] = 1.0 - head;
                        ActionEntry::new(cost, distribution(targets.into_iter().zip(probs)))
                    })
                    .collect()
            })
            .collect();
        Mdp::new(self.discount, actions)
    }
}

// ---------------------------------------------------------------------------

/// A named environment with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Environment {
    FrozenLake,
    Taxi,
    Maze(MazeParams),
}

impl Environment {
    pub fn name(&self) -> &'static str {
        match self {
            Environment::FrozenLake => "frozenlake",
            Environment::Taxi => "taxi",
            Environment::Maze(_) => "maze",
        }
    }

    pub fn build(&self) -> Result<Mdp> {
        match self {
            Environment::FrozenLake => Ok(build_frozenlake()),
            Environment::Taxi => Ok(build_taxi()),
            Environment::Maze(p) => build_maze(p),
        }
    }
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Environment::Maze(p) => write!(f, "maze{}", p.side),
            other => f.write_str(other.name()),
        }
    }
}

/// Parses `frozenlake`, `taxi` or `maze` (default maze: side 80, seed 0).
impl FromStr for Environment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "frozenlake" => Ok(Environment::FrozenLake),
            "taxi" => Ok(Environment::Taxi),
            "maze" => Ok(Environment::Maze(MazeParams::new(80, 0))),
            _ => Err(Error::UnknownEnvironment(s.to_string())),
        }
    }
}
