use rand::Rng;

use super::{Environment, ObservationKind, StepResult};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::RunRng;

/// Planes: wall, goal, agent, agent direction (`dir / 3` at the agent cell).
pub const GRID_CHANNELS: usize = 4;

const STEP_REWARD: f64 = -0.01;
const GOAL_REWARD: f64 = 1.0;

pub const TURN_LEFT: usize = 0;
pub const TURN_RIGHT: usize = 1;
pub const FORWARD: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Empty,
    FourRooms,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    East = 0,
    South = 1,
    West = 2,
    North = 3,
}

impl Direction {
    fn from_index(i: usize) -> Self {
        match i % 4 {
            0 => Direction::East,
            1 => Direction::South,
            2 => Direction::West,
            _ => Direction::North,
        }
    }

    fn left(self) -> Self {
        Self::from_index(self as usize + 3)
    }

    fn right(self) -> Self {
        Self::from_index(self as usize + 1)
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Direction::East => (0, 1),
            Direction::South => (1, 0),
            Direction::West => (0, -1),
            Direction::North => (-1, 0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridConfig {
    size: usize,
    layout: Layout,
}

impl GridConfig {
    pub fn new(size: usize, layout: Layout) -> Result<Self> {
        if size < 5 {
            return Err(Error::Config(format!("grid size must be at least 5, got {size}")));
        }
        if layout == Layout::FourRooms && size.is_multiple_of(2) {
            return Err(Error::Config(format!("four_rooms needs an odd size, got {size}")));
        }
        Ok(Self { size, layout })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Side of the observed grid, which includes the outer wall ring.
    pub fn side(&self) -> usize {
        self.size + 2
    }

    pub fn max_steps(&self) -> usize {
        4 * self.size * self.size
    }

    /// Row-major wall mask over the `side × side` grid.
    pub fn wall_mask(&self) -> Vec<bool> {
        let side = self.side();
        let mut walls = vec![false; side * side];
        for r in 0..side {
            for c in 0..side {
                if r == 0 || c == 0 || r == side - 1 || c == side - 1 {
                    walls[r * side + c] = true;
                }
            }
        }
        if self.layout == Layout::FourRooms {
            let n = self.size;
            let mid = n / 2;
            let doors = [mid / 2, n - 1 - mid / 2];
            for i in 0..n {
                if !doors.contains(&i) {
                    // vertical divider at interior column `mid`, horizontal at row `mid`
                    walls[(i + 1) * side + mid + 1] = true;
                    walls[(mid + 1) * side + i + 1] = true;
                }
            }
            // the crossing point is always wall
            walls[(mid + 1) * side + mid + 1] = true;
        }
        walls
    }

    /// Agent start: top-left interior cell.
    pub fn start(&self) -> (usize, usize) {
        (1, 1)
    }
}

/// Fully observed gridworld with a goal that moves every episode.
#[derive(Clone, Debug)]
pub struct GridWorld {
    cfg: GridConfig,
    walls: Vec<bool>,
    free: Vec<(usize, usize)>,
    agent: (usize, usize),
    dir: Direction,
    goal: (usize, usize),
    steps: usize,
    done: bool,
}

impl GridWorld {
    pub fn new(cfg: GridConfig) -> Self {
        let walls = cfg.wall_mask();
        let side = cfg.side();
        let start = cfg.start();
        let free = (0..side * side)
            .filter(|&i| !walls[i])
            .map(|i| (i / side, i % side))
            .filter(|&p| p != start)
            .collect();
        Self {
            cfg,
            walls,
            free,
            agent: start,
            dir: Direction::East,
            goal: (side - 2, side - 2),
            steps: 0,
            // no episode until the first reset
            done: true,
        }
    }

    pub fn config(&self) -> &GridConfig {
        &self.cfg
    }

    pub fn agent(&self) -> (usize, usize) {
        self.agent
    }

    pub fn direction(&self) -> Direction {
        self.dir
    }

    pub fn goal(&self) -> (usize, usize) {
        self.goal
    }

    /// Cells the goal may be placed on.
    pub fn goal_cells(&self) -> &[(usize, usize)] {
        &self.free
    }

    pub fn is_wall(&self, cell: (usize, usize)) -> bool {
        self.walls[cell.0 * self.cfg.side() + cell.1]
    }

    /// Place agent, direction and goal directly. Used to set up specific
    /// situations; the episode counter restarts.
    pub fn set_state(&mut self, agent: (usize, usize), dir: Direction, goal: (usize, usize)) -> Result<()> {
        if self.is_wall(agent) || self.is_wall(goal) || agent == goal {
            return Err(Error::Usage("agent and goal must be distinct free cells".into()));
        }
        self.agent = agent;
        self.dir = dir;
        self.goal = goal;
        self.steps = 0;
        self.done = false;
        Ok(())
    }

    pub fn observe(&self) -> Tensor {
        let side = self.cfg.side();
        let plane = side * side;
        let mut data = vec![0.0; GRID_CHANNELS * plane];
        for (i, &w) in self.walls.iter().enumerate() {
            if w {
                data[i] = 1.0;
            }
        }
        let at = |(r, c): (usize, usize)| r * side + c;
        data[plane + at(self.goal)] = 1.0;
        data[2 * plane + at(self.agent)] = 1.0;
        data[3 * plane + at(self.agent)] = self.dir as usize as f64 / 3.0;
        Tensor::new(&[GRID_CHANNELS, side, side], data).expect("grid observation shape")
    }
}

impl Environment for GridWorld {
    fn name(&self) -> &'static str {
        match self.cfg.layout {
            Layout::Empty => "random_goal",
            Layout::FourRooms => "four_rooms",
        }
    }

    fn num_actions(&self) -> usize {
        3
    }

    fn observation_shape(&self) -> Vec<usize> {
        vec![GRID_CHANNELS, self.cfg.side(), self.cfg.side()]
    }

    fn observation_kind(&self) -> ObservationKind {
        ObservationKind::Grid
    }

    fn return_bounds(&self) -> (f64, f64) {
        (STEP_REWARD * self.cfg.max_steps() as f64, GOAL_REWARD + STEP_REWARD)
    }

    fn reset(&mut self, rng: &mut RunRng) -> Tensor {
        self.agent = self.cfg.start();
        self.dir = Direction::East;
        self.goal = self.free[rng.random_range(0..self.free.len())];
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage("step called on a finished grid episode".into()));
        }
        let mut reward = STEP_REWARD;
        let mut terminated = false;
        match action {
            TURN_LEFT => self.dir = self.dir.left(),
            TURN_RIGHT => self.dir = self.dir.right(),
            FORWARD => {
                let (dr, dc) = self.dir.delta();
                let next = (
                    self.agent
                        .0
                        .checked_add_signed(dr)
                        .expect("outer walls bound the agent"),
                    self.agent
                        .1
                        .checked_add_signed(dc)
                        .expect("outer walls bound the agent"),
                );
                if !self.is_wall(next) {
                    self.agent = next;
                }
                if self.agent == self.goal {
                    reward += GOAL_REWARD;
                    terminated = true;
                }
            }
            other => return Err(Error::Usage(format!("grid action {other} out of range 0..3"))),
        }
        self.steps += 1;
        let truncated = !terminated && self.steps >= self.cfg.max_steps();
        self.done = terminated || truncated;
        Ok(StepResult {
            observation: self.observe(),
            reward,
            terminated,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn env(size: usize, layout: Layout) -> GridWorld {
        GridWorld::new(GridConfig::new(size, layout).unwrap())
    }

    #[test]
    fn config_validation() {
        assert!(GridConfig::new(4, Layout::Empty).is_err());
        assert!(GridConfig::new(8, Layout::FourRooms).is_err());
        assert!(GridConfig::new(9, Layout::FourRooms).is_ok());
    }

    #[test]
    fn four_rooms_mask_matches_declared_layout() {
        // 11×11 including the outer ring; dividers at row/column 5 with
        // doorways at interior offsets 2 and 6.
        #[rustfmt::skip]
        let expected = [
            "###########",
            "#....#....#",
            "#....#....#",
            "#.........#",
            "#....#....#",
            "###.###.###",
            "#....#....#",
            "#.........#",
            "#....#....#",
            "#....#....#",
            "###########",
        ];
        let mask = GridConfig::new(9, Layout::FourRooms).unwrap().wall_mask();
        let rendered: Vec<String> = mask
            .chunks(11)
            .map(|row| row.iter().map(|&w| if w { '#' } else { '.' }).collect())
            .collect();
        assert_eq!(rendered, expected);
    }

    #[test]
    fn goal_at_adjacent_cell_pays_net_reward() {
        let mut g = env(8, Layout::Empty);
        g.set_state((3, 3), Direction::East, (3, 4)).unwrap();
        let s = g.step(FORWARD).unwrap();
        assert!((s.reward - 0.99).abs() < 1e-12);
        assert!(s.terminated && !s.truncated);
        assert!(g.step(FORWARD).is_err());
    }

    #[test]
    fn forward_into_wall_is_a_noop() {
        let mut g = env(8, Layout::Empty);
        g.set_state((1, 1), Direction::North, (5, 5)).unwrap();
        let s = g.step(FORWARD).unwrap();
        assert_eq!(g.agent(), (1, 1));
        assert_eq!(s.reward, -0.01);
        assert!(!s.done());
    }

    #[test]
    fn truncates_after_four_size_squared_steps() {
        let mut g = env(8, Layout::Empty);
        g.reset(&mut rng::seeded(0));
        for i in 1..=256 {
            let s = g.step(TURN_LEFT).unwrap();
            assert_eq!(s.truncated, i == 256);
            assert!(!s.terminated);
        }
        assert!(g.step(TURN_LEFT).is_err());
    }

    #[test]
    fn turning_cycles_direction() {
        let mut g = env(8, Layout::Empty);
        g.reset(&mut rng::seeded(0));
        g.step(TURN_RIGHT).unwrap();
        assert_eq!(g.direction(), Direction::South);
        g.step(TURN_LEFT).unwrap();
        g.step(TURN_LEFT).unwrap();
        assert_eq!(g.direction(), Direction::North);
    }

    #[test]
    fn observation_planes_are_well_formed() {
        let mut g = env(9, Layout::FourRooms);
        let mut r = rng::seeded(1);
        let mut o = g.reset(&mut r);
        for _ in 0..500 {
            let plane = 11 * 11;
            let d = o.data();
            assert!(d[..3 * plane].iter().all(|&v| v == 0.0 || v == 1.0));
            assert!(d[3 * plane..]
                .iter()
                .all(|&v| [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0].contains(&v)));
            assert_eq!(d[2 * plane..3 * plane].iter().sum::<f64>(), 1.0);
            assert!(!g.is_wall(g.agent()));
            assert_ne!(g.goal(), g.config().start());
            let s = g
                .step([FORWARD, FORWARD, TURN_LEFT, TURN_RIGHT][r.random_range(0..4)])
                .unwrap();
            o = if s.done() { g.reset(&mut r) } else { s.observation };
        }
    }

    #[test]
    fn same_seed_same_goals() {
        let goals = |seed| {
            let mut g = env(8, Layout::Empty);
            let mut r = rng::seeded(seed);
            (0..50)
                .map(|_| {
                    g.reset(&mut r);
                    g.goal()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(goals(4), goals(4));
        assert_ne!(goals(4), goals(5));
    }

    #[test]
    fn goal_placement_is_uniform() {
        // Pearson chi-square over 10k resets. 62 degrees of freedom; the
        // 0.999 quantile is about 100.9.
        let mut g = env(8, Layout::Empty);
        let cells = g.goal_cells().to_vec();
        assert_eq!(cells.len(), 63);
        let mut counts = vec![0usize; cells.len()];
        let mut r = rng::seeded(11);
        let n = 10_000;
        for _ in 0..n {
            g.reset(&mut r);
            let i = cells.iter().position(|&c| c == g.goal()).unwrap();
            counts[i] += 1;
        }
        let e = n as f64 / cells.len() as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 100.9, "chi2 = {chi2}");
    }
}
