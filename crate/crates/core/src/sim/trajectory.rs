use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Rect, SimError};
use crate::Point2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Waypoint {
    pub position: Point2,
    pub time: f64,
}

/// Piecewise-linear user motion, sampled at a fixed rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
    /// Nominal walking speed, m/s.
    pub speed: f64,
    /// CSI samples per second.
    pub sample_rate: f64,
}

impl Trajectory {
    /// Builds a trajectory visiting `points` in order at constant `speed`,
    /// starting at time 0.
    pub fn from_polyline(points: &[Point2], speed: f64, sample_rate: f64) -> Result<Self, SimError> {
        if !(speed > 0.0) {
            return Err(SimError::InvalidTrajectory("speed must be positive".into()));
        }
        let mut t = 0.0;
        let mut waypoints = Vec::with_capacity(points.len());
        for (i, &p) in points.iter().enumerate() {
            if i > 0 {
                t += dist(points[i - 1], p) / speed;
            }
            waypoints.push(Waypoint { position: p, time: t });
        }
        let traj = Self { waypoints, speed, sample_rate };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.waypoints.len() < 2 {
            return Err(SimError::EmptyTrajectory);
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(SimError::InvalidTrajectory("speed must be positive".into()));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(SimError::InvalidTrajectory("sample_rate must be positive".into()));
        }
        for w in self.waypoints.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(SimError::InvalidTrajectory(format!(
                    "waypoint times must be strictly increasing ({} then {})",
                    w[0].time, w[1].time
                )));
            }
        }
        Ok(())
    }

    pub fn start_time(&self) -> f64 {
        self.waypoints.first().map_or(0.0, |w| w.time)
    }

    pub fn duration(&self) -> f64 {
        match (self.waypoints.first(), self.waypoints.last()) {
            (Some(a), Some(b)) => b.time - a.time,
            _ => 0.0,
        }
    }

    /// Sampling instants `t0 + k / sample_rate` strictly before the end time.
    pub fn sample_times(&self) -> Vec<f64> {
        let span = self.duration() * self.sample_rate;
        // Relative slack so that e.g. 100.00000000001 still yields 100 samples.
        let n = (span - 1e-9 * span.max(1.0)).ceil().max(0.0) as usize;
        let t0 = self.start_time();
        (0..n).map(|k| t0 + k as f64 / self.sample_rate).collect()
    }

    /// Linear interpolation between the waypoints bracketing `t` (clamped).
    pub fn position_at(&self, t: f64) -> Point2 {
        let w = &self.waypoints;
        if t <= w[0].time {
            return w[0].position;
        }
        let idx = w.partition_point(|p| p.time <= t);
        if idx >= w.len() {
            return w[w.len() - 1].position;
        }
        let (a, b) = (w[idx - 1], w[idx]);
        let s = (t - a.time) / (b.time - a.time);
        if s == 0.0 {
            return a.position;
        }
        [
            a.position[0] + s * (b.position[0] - a.position[0]),
            a.position[1] + s * (b.position[1] - a.position[1]),
        ]
    }
}

fn dist(a: Point2, b: Point2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

const LOOP_VERTICES: usize = 720;

/// Elliptic loop traversed `laps` times counter-clockwise, starting at
/// `center + (radii[0], 0)`. Waypoint times follow the true arc length of the
/// ellipse (Gauss–Legendre quadrature per segment), so one lap lasts exactly
/// `perimeter / speed` and every lap ends on the starting point.
pub fn make_loop_trajectory(
    center: Point2,
    radii: Point2,
    laps: usize,
    speed: f64,
    sample_rate: f64,
) -> Result<Trajectory, SimError> {
    if !(radii[0] > 0.0 && radii[1] > 0.0) {
        return Err(SimError::InvalidTrajectory("ellipse radii must be positive".into()));
    }
    if laps < 1 {
        return Err(SimError::InvalidTrajectory("laps must be at least 1".into()));
    }
    if !(speed > 0.0) {
        return Err(SimError::InvalidTrajectory("speed must be positive".into()));
    }
    let step = std::f64::consts::TAU / LOOP_VERTICES as f64;
    let point = |k: usize| -> Point2 {
        if k % LOOP_VERTICES == 0 {
            return [center[0] + radii[0], center[1]];
        }
        let phi = k as f64 * step;
        [center[0] + radii[0] * phi.cos(), center[1] + radii[1] * phi.sin()]
    };
    let mut arc = vec![0.0; LOOP_VERTICES + 1];
    for k in 0..LOOP_VERTICES {
        arc[k + 1] = arc[k] + ellipse_arc(radii, k as f64 * step, (k + 1) as f64 * step);
    }
    let lap_time = arc[LOOP_VERTICES] / speed;
    let mut waypoints = Vec::with_capacity(laps * LOOP_VERTICES + 1);
    waypoints.push(Waypoint { position: point(0), time: 0.0 });
    for lap in 0..laps {
        for k in 1..=LOOP_VERTICES {
            waypoints.push(Waypoint {
                position: point(k),
                time: lap as f64 * lap_time + arc[k] / speed,
            });
        }
    }
    let traj = Trajectory { waypoints, speed, sample_rate };
    traj.validate()?;
    Ok(traj)
}

/// Arc length of the ellipse between parameter angles `a` and `b`.
fn ellipse_arc(radii: Point2, a: f64, b: f64) -> f64 {
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    NODES
        .iter()
        .zip(WEIGHTS)
        .map(|(&x, w)| {
            let phi = mid + half * x;
            w * (radii[0] * phi.sin()).hypot(radii[1] * phi.cos())
        })
        .sum::<f64>()
        * half
}

/// Pedestrian random walk on a Manhattan street grid inside `area`.
///
/// Streets run every `street_spacing` meters, offset by half a block from the
/// area border. At each intersection the walker takes the least-walked
/// street leaving it (uniformly random among ties), avoiding an immediate
/// U-turn unless at a dead end, so the grid is covered before streets are
/// revisited. The walk is cut to exactly `duration` seconds.
pub fn street_walk_trajectory(
    area: Rect,
    street_spacing: f64,
    duration: f64,
    speed: f64,
    sample_rate: f64,
    seed: u64,
) -> Result<Trajectory, SimError> {
    if !(street_spacing > 0.0) || !(duration > 0.0) || !(speed > 0.0) {
        return Err(SimError::InvalidTrajectory(
            "street spacing, duration and speed must be positive".into(),
        ));
    }
    let lines = |lo: f64, hi: f64| -> Vec<f64> {
        let mut v = Vec::new();
        let mut x = lo + 0.5 * street_spacing;
        while x < hi {
            v.push(x);
            x += street_spacing;
        }
        v
    };
    let xs = lines(area.min[0], area.max[0]);
    let ys = lines(area.min[1], area.max[1]);
    if xs.len() < 2 || ys.len() < 2 {
        return Err(SimError::InvalidTrajectory(
            "street grid needs at least two streets in each direction".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x57ee7);
    let mut node = (rng.random_range(0..xs.len()), rng.random_range(0..ys.len()));
    let mut prev: Option<(usize, usize)> = None;
    let mut walked: std::collections::HashMap<((usize, usize), (usize, usize)), u32> = Default::default();
    let edge = |a: (usize, usize), b: (usize, usize)| if a < b { (a, b) } else { (b, a) };
    let pos = |n: (usize, usize)| [xs[n.0], ys[n.1]];
    let mut waypoints = vec![Waypoint { position: pos(node), time: 0.0 }];
    let mut t = 0.0;
    while t < duration {
        let mut options = Vec::with_capacity(4);
        if node.0 > 0 {
            options.push((node.0 - 1, node.1));
        }
        if node.0 + 1 < xs.len() {
            options.push((node.0 + 1, node.1));
        }
        if node.1 > 0 {
            options.push((node.0, node.1 - 1));
        }
        if node.1 + 1 < ys.len() {
            options.push((node.0, node.1 + 1));
        }
        if options.len() > 1 {
            if let Some(p) = prev {
                options.retain(|&o| o != p);
            }
        }
        let least = options.iter().map(|&o| walked.get(&edge(node, o)).copied().unwrap_or(0)).min().unwrap_or(0);
        options.retain(|&o| walked.get(&edge(node, o)).copied().unwrap_or(0) == least);
        let next = options[rng.random_range(0..options.len())];
        let (a, b) = (pos(node), pos(next));
        let seg = dist(a, b) / speed;
        if t + seg >= duration {
            let s = (duration - t) / seg;
            let end = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            waypoints.push(Waypoint { position: end, time: duration });
            t = duration;
        } else {
            t += seg;
            waypoints.push(Waypoint { position: b, time: t });
        }
        *walked.entry(edge(node, next)).or_insert(0) += 1;
        prev = Some(node);
        node = next;
    }
    let traj = Trajectory { waypoints, speed, sample_rate };
    traj.validate()?;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_seconds_at_ten_hertz() {
        let t = Trajectory::from_polyline(&[[0.0, 0.0], [10.0, 0.0]], 1.0, 10.0).unwrap();
        let times = t.sample_times();
        assert_eq!(times.len(), 100);
        assert_eq!(times[0], 0.0);
        assert!((times[1] - 0.1).abs() < 1e-15);
        assert!((times[99] - 9.9).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_increasing_times() {
        let t = Trajectory {
            waypoints: vec![
                Waypoint { position: [0.0, 0.0], time: 0.0 },
                Waypoint { position: [1.0, 0.0], time: 0.0 },
            ],
            speed: 1.0,
            sample_rate: 1.0,
        };
        assert!(matches!(t.validate(), Err(SimError::InvalidTrajectory(_))));
        let empty = Trajectory { waypoints: vec![], speed: 1.0, sample_rate: 1.0 };
        assert_eq!(empty.validate(), Err(SimError::EmptyTrajectory));
    }

    #[test]
    fn single_lap_closes() {
        let t = make_loop_trajectory([5.0, 5.0], [3.0, 2.0], 1, 1.0, 2.0).unwrap();
        let first = t.waypoints[0].position;
        let last = t.waypoints.last().unwrap().position;
        assert_eq!(first, last);
    }

    #[test]
    fn lap_boundaries_coincide() {
        let t = make_loop_trajectory([0.0, 0.0], [20.0, 10.0], 3, 1.0, 2.0).unwrap();
        let lap = t.duration() / 3.0;
        let p0 = t.position_at(0.0);
        for k in 1..=3 {
            let p = t.position_at(k as f64 * lap);
            assert!(dist(p, p0) < 1e-9, "lap {k}: {p:?} vs {p0:?}");
        }
    }

    #[test]
    fn loop_rejects_bad_parameters() {
        assert!(make_loop_trajectory([0.0, 0.0], [0.0, 1.0], 1, 1.0, 1.0).is_err());
        assert!(make_loop_trajectory([0.0, 0.0], [1.0, 1.0], 0, 1.0, 1.0).is_err());
    }

    #[test]
    fn street_walk_has_exact_duration_and_stays_inside() {
        let area = Rect::new([0.0, 0.0], [200.0, 200.0]);
        let t = street_walk_trajectory(area, 40.0, 500.0, 1.0, 1.0, 3).unwrap();
        assert_eq!(t.duration(), 500.0);
        assert_eq!(t.sample_times().len(), 500);
        for w in &t.waypoints {
            assert!(area.contains(w.position));
        }
        // Unit speed: consecutive samples are at most 1 m apart.
        let times = t.sample_times();
        for w in times.windows(2) {
            assert!(dist(t.position_at(w[0]), t.position_at(w[1])) <= 1.0 + 1e-9);
        }
    }
}
