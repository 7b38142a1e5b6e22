//! Planar simulation world: randomized polygon scenarios, a ray-cast range
//! sensor with occupancy rasterization, single-integrator motion and
//! collision checks.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::contract::Point2;
use crate::error::{GmIpcError, Result};
use crate::losses::{FreeCellSet, LossTargets};
use crate::seeding::{self, stream};

pub const WORKSPACE_HALF: f64 = 5.0;
pub const GRID_N: usize = 64;
pub const ROBOT_RADIUS: f64 = 0.3;

const BOUNDARY_SPACING: f64 = 0.1;
const INTERIOR_SPACING: f64 = 0.2;
const OBSTACLE_CLEARANCE: f64 = 1.2;
const ENDPOINT_CLEARANCE: f64 = 1.0;
const MAX_PLACEMENT_TRIES: usize = 1000;
/// Obstacle centers are drawn from `[−r, r]²`.
const CENTER_RANGE: f64 = 2.8;
/// Start and goal sit this far from the origin along one axis.
const ENDPOINT_OFFSET: f64 = 4.6;
const ENDPOINT_SPREAD: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleKind {
    RectChair,
    LSofa,
}

impl ObstacleKind {
    /// Counterclockwise footprint centered on its bounding box.
    fn template(self) -> Vec<Point2> {
        match self {
            ObstacleKind::RectChair => vec![
                Point2::new(-0.3, -0.3),
                Point2::new(0.3, -0.3),
                Point2::new(0.3, 0.3),
                Point2::new(-0.3, 0.3),
            ],
            // 2.0 × 1.6 box with a 1.0 × 0.8 notch in one corner.
            ObstacleKind::LSofa => vec![
                Point2::new(-1.0, -0.8),
                Point2::new(1.0, -0.8),
                Point2::new(1.0, 0.0),
                Point2::new(0.0, 0.0),
                Point2::new(0.0, 0.8),
                Point2::new(-1.0, 0.8),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub polygon: Vec<Point2>,
    pub kind: ObstacleKind,
}

fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let o1 = (b - a).cross(c - a);
    let o2 = (b - a).cross(d - a);
    let o3 = (d - c).cross(a - c);
    let o4 = (d - c).cross(b - c);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

impl Obstacle {
    pub fn new(kind: ObstacleKind, center: Point2, angle: f64) -> Self {
        let polygon = kind.template().into_iter().map(|v| center + v.rotated(angle)).collect();
        Obstacle { polygon, kind }
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.polygon.len();
        (0..n).map(move |i| (self.polygon[i], self.polygon[(i + 1) % n]))
    }

    /// Shoelace area; positive for counterclockwise polygons.
    pub fn area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a.cross(b)).sum::<f64>()
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, p: Point2) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn boundary_distance(&self, p: Point2) -> f64 {
        self.edges().map(|(a, b)| segment_distance(p, a, b)).fold(f64::INFINITY, f64::min)
    }

    /// Distance to the footprint; zero inside.
    pub fn distance(&self, p: Point2) -> f64 {
        if self.contains(p) {
            0.0
        } else {
            self.boundary_distance(p)
        }
    }

    pub fn distance_to(&self, other: &Obstacle) -> f64 {
        let crosses = self
            .edges()
            .any(|(a, b)| other.edges().any(|(c, d)| segments_intersect(a, b, c, d)));
        if crosses || self.contains(other.polygon[0]) || other.contains(self.polygon[0]) {
            return 0.0;
        }
        let d1 = self.polygon.iter().map(|&v| other.boundary_distance(v)).fold(f64::INFINITY, f64::min);
        let d2 = other.polygon.iter().map(|&v| self.boundary_distance(v)).fold(f64::INFINITY, f64::min);
        d1.min(d2)
    }

    /// Ground-truth footprint samples: the boundary every 0.1 m plus an
    /// axis-aligned 0.2 m interior lattice.
    pub fn gt_samples(&self) -> Vec<Point2> {
        let mut pts = Vec::new();
        for (a, b) in self.edges() {
            let n = ((a.dist(b) / BOUNDARY_SPACING).round() as usize).max(1);
            pts.extend((0..n).map(|j| a + (b - a) * (j as f64 / n as f64)));
        }
        let (lo, hi) = self.bbox();
        let mut y = lo.y + INTERIOR_SPACING / 2.0;
        while y < hi.y {
            let mut x = lo.x + INTERIOR_SPACING / 2.0;
            while x < hi.x {
                let p = Point2::new(x, y);
                if self.contains(p) && self.boundary_distance(p) > 1e-9 {
                    pts.push(p);
                }
                x += INTERIOR_SPACING;
            }
            y += INTERIOR_SPACING;
        }
        pts
    }

    pub fn bbox(&self) -> (Point2, Point2) {
        self.polygon.iter().fold(
            (Point2::new(f64::INFINITY, f64::INFINITY), Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY)),
            |(lo, hi), p| (Point2::new(lo.x.min(p.x), lo.y.min(p.y)), Point2::new(hi.x.max(p.x), hi.y.max(p.y))),
        )
    }

    /// Nearest ray parameter `t ∈ (0, max_t]` hitting the boundary.
    fn ray_hit(&self, origin: Point2, dir: Point2, max_t: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (a, b) in self.edges() {
            let e = b - a;
            let denom = dir.cross(e);
            if denom.abs() < 1e-15 {
                continue;
            }
            let w = a - origin;
            let t = w.cross(e) / denom;
            let u = w.cross(dir) / denom;
            if t > 1e-12 && t <= max_t && (0.0..=1.0).contains(&u) && best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Chair,
    Sofa,
    MultiSofa,
    Mixed,
    /// No obstacles; a debugging baseline.
    Empty,
}

impl ScenarioKind {
    pub fn obstacle_kinds(self) -> &'static [ObstacleKind] {
        match self {
            ScenarioKind::Chair => &[ObstacleKind::RectChair],
            ScenarioKind::Sofa => &[ObstacleKind::LSofa],
            ScenarioKind::MultiSofa => &[ObstacleKind::LSofa, ObstacleKind::LSofa],
            ScenarioKind::Mixed => &[ObstacleKind::LSofa, ObstacleKind::RectChair],
            ScenarioKind::Empty => &[],
        }
    }

    pub fn is_multi_object(self) -> bool {
        self.obstacle_kinds().len() > 1
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Chair => "chair",
            ScenarioKind::Sofa => "sofa",
            ScenarioKind::MultiSofa => "multi_sofa",
            ScenarioKind::Mixed => "mixed",
            ScenarioKind::Empty => "empty",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = GmIpcError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "chair" => ScenarioKind::Chair,
            "sofa" => ScenarioKind::Sofa,
            "multi_sofa" | "multi-sofa" => ScenarioKind::MultiSofa,
            "mixed" => ScenarioKind::Mixed,
            "empty" => ScenarioKind::Empty,
            other => return Err(GmIpcError::Config(format!("unknown scenario kind `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub obstacles: Vec<Obstacle>,
    pub start: Point2,
    pub goal: Point2,
    pub workspace_half: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| GmIpcError::Serde(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| GmIpcError::Serde(e.to_string()))
    }

    pub fn clearance(&self, p: Point2) -> f64 {
        self.obstacles.iter().map(|o| o.distance(p)).fold(f64::INFINITY, f64::min)
    }
}

pub fn make_scenario(kind: ScenarioKind, seed: u64) -> Result<Scenario> {
    let mut rng = seeding::rng_for(&[stream::SCENARIO, seed]);
    let half = WORKSPACE_HALF;
    for _ in 0..MAX_PLACEMENT_TRIES {
        let mut obstacles: Vec<Obstacle> = Vec::new();
        let mut ok = true;
        for &ok_kind in kind.obstacle_kinds() {
            let center = Point2::new(
                rng.random_range(-CENTER_RANGE..CENTER_RANGE),
                rng.random_range(-CENTER_RANGE..CENTER_RANGE),
            );
            let o = Obstacle::new(ok_kind, center, rng.random_range(0.0..2.0 * PI));
            if obstacles.iter().any(|p| p.distance_to(&o) < OBSTACLE_CLEARANCE) {
                ok = false;
                break;
            }
            obstacles.push(o);
        }
        let along_x: bool = rng.random();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let a = rng.random_range(-ENDPOINT_SPREAD..ENDPOINT_SPREAD);
        let b = rng.random_range(-ENDPOINT_SPREAD..ENDPOINT_SPREAD);
        let (start, goal) = if along_x {
            (Point2::new(-sign * ENDPOINT_OFFSET, a), Point2::new(sign * ENDPOINT_OFFSET, b))
        } else {
            (Point2::new(a, -sign * ENDPOINT_OFFSET), Point2::new(b, sign * ENDPOINT_OFFSET))
        };
        if !ok {
            continue;
        }
        let s = Scenario { obstacles, start, goal, workspace_half: half, seed };
        if s.clearance(start) >= ENDPOINT_CLEARANCE && s.clearance(goal) >= ENDPOINT_CLEARANCE {
            return Ok(s);
        }
    }
    Err(GmIpcError::ScenarioGeneration(format!(
        "no valid {} placement after {MAX_PLACEMENT_TRIES} tries (seed {seed})",
        kind.name()
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pos: Point2,
    pub t: usize,
}

/// Single-integrator step, clamped to the workspace square.
pub fn step_dynamics(x: RobotState, u: Point2, dt: f64, workspace_half: f64) -> RobotState {
    let p = x.pos + u * dt;
    RobotState {
        pos: Point2::new(p.x.clamp(-workspace_half, workspace_half), p.y.clamp(-workspace_half, workspace_half)),
        t: x.t + 1,
    }
}

/// Strictly closer than `robot_radius` to any footprint.
pub fn in_collision(s: &Scenario, p: Point2, robot_radius: f64) -> bool {
    s.obstacles.iter().any(|o| o.distance(p) < robot_radius)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub n_rays: usize,
    pub fov: f64,
    pub max_range: f64,
    pub noise_sigma: f64,
    pub dropout_p: f64,
    pub stream: u64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig { n_rays: 180, fov: 2.0 * PI, max_range: 8.0, noise_sigma: 0.03, dropout_p: 0.1, stream: 0 }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rays < 8 {
            return Err(GmIpcError::Config("n_rays must be at least 8".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(GmIpcError::Config("dropout_p must be in [0, 1)".into()));
        }
        if !(self.fov > 0.0 && self.fov <= 2.0 * PI + 1e-12) || !(self.max_range > 0.0) || self.noise_sigma < 0.0 {
            return Err(GmIpcError::Config("invalid sensor geometry".into()));
        }
        Ok(())
    }
}

/// Square binary raster over the workspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    n: usize,
    half: f64,
    occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(n: usize, half: f64) -> Self {
        OccupancyGrid { n, half, occupied: vec![false; n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half(&self) -> f64 {
        self.half
    }

    pub fn center(&self) -> Point2 {
        Point2::ORIGIN
    }

    pub fn cell_size(&self) -> f64 {
        2.0 * self.half / self.n as f64
    }

    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        let h = self.cell_size();
        let i = ((p.x + self.half) / h).floor();
        let j = ((p.y + self.half) / h).floor();
        let n = self.n as f64;
        (i >= 0.0 && j >= 0.0 && i < n && j < n).then_some((i as usize, j as usize))
    }

    pub fn cell_center(&self, (i, j): (usize, usize)) -> Point2 {
        let h = self.cell_size();
        Point2::new(-self.half + (i as f64 + 0.5) * h, -self.half + (j as f64 + 0.5) * h)
    }

    pub fn is_occupied(&self, (i, j): (usize, usize)) -> bool {
        self.occupied[j * self.n + i]
    }

    pub fn set_occupied(&mut self, (i, j): (usize, usize)) {
        self.occupied[j * self.n + i] = true;
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    /// Cells crossed by the segment `a → b`, in traversal order.
    pub fn traverse(&self, a: Point2, b: Point2) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let Some((a, b)) = clip_to_box(a, b, self.half) else {
            return out;
        };
        let h = self.cell_size();
        let n = self.n as i64;
        let to_idx = |v: f64| (((v + self.half) / h).floor() as i64).clamp(0, n - 1);
        let (mut i, mut j) = (to_idx(a.x), to_idx(a.y));
        let (ei, ej) = (to_idx(b.x), to_idx(b.y));
        let d = b - a;
        let step_i = if d.x > 0.0 { 1 } else { -1 };
        let step_j = if d.y > 0.0 { 1 } else { -1 };
        let next_boundary = |idx: i64, step: i64| -self.half + (idx + i64::from(step > 0)) as f64 * h;
        let mut t_max_x = if d.x != 0.0 { (next_boundary(i, step_i) - a.x) / d.x } else { f64::INFINITY };
        let mut t_max_y = if d.y != 0.0 { (next_boundary(j, step_j) - a.y) / d.y } else { f64::INFINITY };
        let t_dx = if d.x != 0.0 { h / d.x.abs() } else { f64::INFINITY };
        let t_dy = if d.y != 0.0 { h / d.y.abs() } else { f64::INFINITY };
        loop {
            out.push((i as usize, j as usize));
            if (i == ei && j == ej) || out.len() > 4 * self.n {
                break;
            }
            if t_max_x < t_max_y {
                if t_max_x > 1.0 {
                    break;
                }
                i += step_i;
                t_max_x += t_dx;
            } else {
                if t_max_y > 1.0 {
                    break;
                }
                j += step_j;
                t_max_y += t_dy;
            }
            if !(0..n).contains(&i) || !(0..n).contains(&j) {
                break;
            }
        }
        out
    }
}

/// Liang–Barsky clip of a segment to `[−half, half]²`.
fn clip_to_box(a: Point2, b: Point2, half: f64) -> Option<(Point2, Point2)> {
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [(-d.x, a.x + half), (d.x, half - a.x), (-d.y, a.y + half), (d.y, half - a.y)] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 <= t1).then(|| (a + d * t0, a + d * t1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub perceived: Vec<Point2>,
    pub grid: OccupancyGrid,
    pub free_cells: FreeCellSet,
    /// Footprint samples of every obstacle the sensor saw this step.
    pub gt_points: Vec<Point2>,
    pub visible_obstacles: Vec<usize>,
    pub n_hits: usize,
    pub n_dropped: usize,
    pub n_misses: usize,
}

impl Observation {
    /// Build an observation from explicit point sets (tests and demos).
    pub fn synthetic(
        perceived: Vec<Point2>,
        gt_points: Vec<Point2>,
        free: Vec<Point2>,
        workspace_half: f64,
        grid_n: usize,
    ) -> Self {
        let mut grid = OccupancyGrid::new(grid_n, workspace_half);
        for &p in &perceived {
            if let Some(c) = grid.cell_of(p) {
                grid.set_occupied(c);
            }
        }
        let cell_area = grid.cell_size().powi(2);
        let n = perceived.len();
        Observation {
            perceived,
            grid,
            free_cells: FreeCellSet { centers: free, cell_area },
            gt_points,
            visible_obstacles: vec![],
            n_hits: n,
            n_dropped: 0,
            n_misses: 0,
        }
    }
}

impl<'a> From<&'a Observation> for LossTargets<'a> {
    fn from(obs: &'a Observation) -> Self {
        LossTargets { gt_points: &obs.gt_points, free: &obs.free_cells }
    }
}

/// Ray directions: the field of view is centered on the bearing to the goal.
fn ray_angles(heading: f64, cfg: &SensorConfig) -> Vec<f64> {
    let n = cfg.n_rays;
    if cfg.fov >= 2.0 * PI - 1e-12 {
        (0..n).map(|i| heading + 2.0 * PI * i as f64 / n as f64).collect()
    } else {
        (0..n).map(|i| heading - cfg.fov / 2.0 + cfg.fov * i as f64 / (n - 1) as f64).collect()
    }
}

/// One sensor sweep. Noise and dropout come from a substream keyed by the
/// scenario seed, the sensor stream id and the step index.
pub fn sense(s: &Scenario, x: &RobotState, cfg: &SensorConfig) -> Observation {
    let mut rng = seeding::rng_for(&[stream::SENSOR, s.seed, cfg.stream, x.t as u64]);
    let mut grid = OccupancyGrid::new(GRID_N, s.workspace_half);
    let origin = x.pos;
    let to_goal = s.goal - origin;
    let heading = to_goal.y.atan2(to_goal.x);

    let mut perceived = Vec::new();
    let mut visible = vec![false; s.obstacles.len()];
    let mut free = vec![false; GRID_N * GRID_N];
    let (mut n_hits, mut n_dropped, mut n_misses) = (0, 0, 0);

    for angle in ray_angles(heading, cfg) {
        let dir = Point2::new(angle.cos(), angle.sin());
        let hit = s
            .obstacles
            .iter()
            .enumerate()
            .filter_map(|(k, o)| o.ray_hit(origin, dir, cfg.max_range).map(|t| (k, t)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        // Draw both variates on every ray so streams stay aligned.
        let noise = Point2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
        let drop_draw: f64 = rng.random();
        match hit {
            Some((k, t)) => {
                n_hits += 1;
                visible[k] = true;
                let end = origin + dir * t;
                let cells = grid.traverse(origin, end);
                let terminal = grid.cell_of(end);
                for c in cells {
                    if Some(c) != terminal {
                        free[c.1 * GRID_N + c.0] = true;
                    }
                }
                let p = end + noise * cfg.noise_sigma;
                match grid.cell_of(p) {
                    Some(c) if drop_draw >= cfg.dropout_p => {
                        grid.set_occupied(c);
                        perceived.push(p);
                    }
                    _ => n_dropped += 1,
                }
            }
            None => {
                n_misses += 1;
                for c in grid.traverse(origin, origin + dir * cfg.max_range) {
                    free[c.1 * GRID_N + c.0] = true;
                }
            }
        }
    }

    let mut centers = Vec::new();
    for j in 0..GRID_N {
        for i in 0..GRID_N {
            if free[j * GRID_N + i] && !grid.is_occupied((i, j)) {
                centers.push(grid.cell_center((i, j)));
            }
        }
    }
    let visible_obstacles: Vec<usize> = (0..s.obstacles.len()).filter(|&k| visible[k]).collect();
    let gt_points = visible_obstacles.iter().flat_map(|&k| s.obstacles[k].gt_samples()).collect();
    let cell_area = grid.cell_size().powi(2);
    Observation {
        perceived,
        grid,
        free_cells: FreeCellSet { centers, cell_area },
        gt_points,
        visible_obstacles,
        n_hits: n_hits - n_dropped,
        n_dropped,
        n_misses,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> SensorConfig {
        SensorConfig { noise_sigma: 0.0, dropout_p: 0.0, ..SensorConfig::default() }
    }

    #[test]
    fn scenario_shapes() {
        for seed in 0..30 {
            let c = make_scenario(ScenarioKind::Chair, seed).unwrap();
            assert_eq!(c.obstacles.len(), 1);
            assert_eq!(c.obstacles[0].polygon.len(), 4);
            let s = make_scenario(ScenarioKind::Sofa, seed).unwrap();
            assert_eq!(s.obstacles[0].polygon.len(), 6);
            assert!((s.obstacles[0].area() - 2.4).abs() < 1e-9);
            let m = make_scenario(ScenarioKind::Mixed, seed).unwrap();
            assert_eq!(m.obstacles.len(), 2);
            assert_ne!(m.obstacles[0].kind, m.obstacles[1].kind);
            let ms = make_scenario(ScenarioKind::MultiSofa, seed).unwrap();
            assert!(ms.obstacles[0].distance_to(&ms.obstacles[1]) >= OBSTACLE_CLEARANCE);
            for sc in [&c, &s, &m, &ms] {
                assert!(sc.clearance(sc.start) >= ENDPOINT_CLEARANCE);
                assert!(sc.clearance(sc.goal) >= ENDPOINT_CLEARANCE);
                for p in [sc.start, sc.goal] {
                    assert!(p.x.abs().max(p.y.abs()) >= sc.workspace_half - 0.5);
                }
            }
        }
        assert_eq!(make_scenario(ScenarioKind::Sofa, 4).unwrap(), make_scenario(ScenarioKind::Sofa, 4).unwrap());
        assert!(make_scenario(ScenarioKind::Empty, 1).unwrap().obstacles.is_empty());
    }

    #[test]
    fn scenario_toml_round_trip() {
        let s = make_scenario(ScenarioKind::Mixed, 3).unwrap();
        assert_eq!(Scenario::from_toml(&s.to_toml().unwrap()).unwrap(), s);
        assert!(Scenario::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn gt_samples_lie_in_footprint() {
        for kind in [ObstacleKind::RectChair, ObstacleKind::LSofa] {
            let o = Obstacle::new(kind, Point2::new(0.4, -1.0), 0.9);
            let gt = o.gt_samples();
            assert!(gt.len() > 20);
            for p in gt {
                assert!(o.contains(p) || o.boundary_distance(p) < 1e-9);
            }
        }
    }

    #[test]
    fn nothing_in_range_means_all_free() {
        let s = Scenario { obstacles: vec![], start: Point2::ORIGIN, goal: Point2::new(4.0, 0.0), workspace_half: 5.0, seed: 0 };
        let obs = sense(&s, &RobotState { pos: Point2::ORIGIN, t: 0 }, &SensorConfig::default());
        assert!(obs.perceived.is_empty() && obs.gt_points.is_empty());
        assert_eq!(obs.n_misses, 180);
        assert!(obs.free_cells.len() > 1000);
    }

    #[test]
    fn noiseless_hits_lie_on_facing_edge() {
        let o = Obstacle::new(ObstacleKind::RectChair, Point2::new(2.0, 0.0), 0.0);
        let s = Scenario { obstacles: vec![o.clone()], start: Point2::ORIGIN, goal: Point2::new(4.5, 0.0), workspace_half: 5.0, seed: 1 };
        let obs = sense(&s, &RobotState { pos: Point2::ORIGIN, t: 0 }, &quiet());
        assert!(!obs.perceived.is_empty());
        for p in &obs.perceived {
            assert!((p.x - 1.7).abs() < 1e-9, "{p:?}");
            assert!(o.boundary_distance(*p) < 1e-9);
        }
        assert_eq!(obs.visible_obstacles, vec![0]);
        assert_eq!(obs.gt_points, o.gt_samples());
    }

    #[test]
    fn observation_invariants() {
        for seed in 0..10 {
            let s = make_scenario(ScenarioKind::MultiSofa, seed).unwrap();
            let x = RobotState { pos: s.start, t: seed as usize };
            let obs = sense(&s, &x, &SensorConfig::default());
            assert_eq!(obs.n_hits + obs.n_dropped + obs.n_misses, 180);
            assert_eq!(obs.n_hits, obs.perceived.len());
            for p in &obs.perceived {
                assert!(obs.grid.is_occupied(obs.grid.cell_of(*p).unwrap()));
            }
            for c in &obs.free_cells.centers {
                assert!(!obs.grid.is_occupied(obs.grid.cell_of(*c).unwrap()));
            }
            let q = sense(&s, &x, &quiet());
            for p in &q.perceived {
                let d = s.obstacles.iter().map(|o| o.boundary_distance(*p)).fold(f64::INFINITY, f64::min);
                assert!(d < 1e-9);
            }
            assert_eq!(sense(&s, &x, &SensorConfig::default()), obs);
        }
    }

    #[test]
    fn dropout_is_binomial() {
        let o = Obstacle::new(ObstacleKind::LSofa, Point2::new(2.5, 0.0), 0.3);
        let cfg = SensorConfig { noise_sigma: 0.0, dropout_p: 0.5, ..SensorConfig::default() };
        let mut total_hits = 0usize;
        let mut total_kept = 0usize;
        for seed in 0..200 {
            let s = Scenario { obstacles: vec![o.clone()], start: Point2::ORIGIN, goal: Point2::new(4.5, 0.0), workspace_half: 5.0, seed };
            let obs = sense(&s, &RobotState { pos: Point2::ORIGIN, t: 0 }, &cfg);
            total_hits += obs.n_hits + obs.n_dropped;
            total_kept += obs.n_hits;
        }
        let mean = total_hits as f64 * 0.5;
        let sd = (total_hits as f64 * 0.25).sqrt();
        assert!((total_kept as f64 - mean).abs() < 3.0 * sd);
    }

    #[test]
    fn dynamics_examples() {
        let x = RobotState { pos: Point2::new(1.0, 1.0), t: 3 };
        assert_eq!(step_dynamics(x, Point2::ORIGIN, 0.1, 5.0).pos, x.pos);
        let y = step_dynamics(x, Point2::new(1.0, 0.0), 0.1, 5.0);
        assert!((y.pos.x - 1.1).abs() < 1e-15 && y.t == 4);
        let edge = RobotState { pos: Point2::new(5.0, 0.0), t: 0 };
        assert_eq!(step_dynamics(edge, Point2::new(1.0, 0.0), 0.1, 5.0).pos.x, 5.0);
    }

    #[test]
    fn collision_examples() {
        let o = Obstacle::new(ObstacleKind::RectChair, Point2::ORIGIN, 0.0);
        let s = Scenario { obstacles: vec![o], start: Point2::new(-4.6, 0.0), goal: Point2::new(4.6, 0.0), workspace_half: 5.0, seed: 0 };
        assert!(in_collision(&s, Point2::ORIGIN, 0.3));
        assert!(!in_collision(&s, Point2::new(2.0, 2.0), 0.3));
        assert!(!in_collision(&s, Point2::new(0.5, 0.0), 0.2 - 1e-12 + 1e-12));
        assert!(!in_collision(&s, Point2::new(0.6, 0.0), 0.3));
        assert!(in_collision(&s, Point2::new(0.6, 0.0), 0.3 + 1e-9));
    }

    #[test]
    fn traverse_walks_contiguous_cells() {
        let g = OccupancyGrid::new(64, 5.0);
        let cells = g.traverse(Point2::new(-4.9, -4.9), Point2::new(4.9, 3.0));
        assert_eq!(cells[0], g.cell_of(Point2::new(-4.9, -4.9)).unwrap());
        assert_eq!(*cells.last().unwrap(), g.cell_of(Point2::new(4.9, 3.0)).unwrap());
        for w in cells.windows(2) {
            let di = w[0].0.abs_diff(w[1].0);
            let dj = w[0].1.abs_diff(w[1].1);
            assert_eq!(di + dj, 1);
        }
        assert!(g.traverse(Point2::new(0.0, 0.0), Point2::new(20.0, 0.0)).len() == 32);
    }
}
