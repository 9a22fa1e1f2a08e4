//! Random Waypoint mobility.
//!
//! A node starts at a uniform placement, pauses for `pause_time`, then
//! repeatedly picks a uniform destination and a uniform speed in
//! `[v_min, v_max]`, travels in a straight line, and pauses again. Positions
//! are evaluated analytically from the leg list, so there is no stepping
//! error.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn lerp(self, other: Point, f: f64) -> Point {
        Point::new(self.x + (other.x - self.x) * f, self.y + (other.y - self.y) * f)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("area dimensions must be positive, got {0} x {1}")]
    Area(f64, f64),
    #[error("need 0 < v_min <= v_max, got v_min={0} v_max={1}")]
    Speed(f64, f64),
    #[error("pause_time must be >= 0, got {0}")]
    Pause(f64),
    #[error("schedule line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityParams {
    pub width: f64,
    pub height: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub pause_time: f64,
}

impl Default for MobilityParams {
    fn default() -> Self {
        MobilityParams {
            width: 800.0,
            height: 600.0,
            v_min: 0.5,
            v_max: 5.0,
            pause_time: 0.0,
        }
    }
}

impl MobilityParams {
    pub fn validate(&self) -> Result<(), MobilityError> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(MobilityError::Area(self.width, self.height));
        }
        if !(self.v_min > 0.0 && self.v_min <= self.v_max) {
            return Err(MobilityError::Speed(self.v_min, self.v_max));
        }
        if !(self.pause_time >= 0.0) {
            return Err(MobilityError::Pause(self.pause_time));
        }
        Ok(())
    }

    fn random_point<R: Rng>(&self, rng: &mut R) -> Point {
        Point::new(
            rng.random_range(0.0..=self.width),
            rng.random_range(0.0..=self.height),
        )
    }
}

/// One straight-line movement followed by a pause.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointLeg {
    pub start_pos: Point,
    pub end_pos: Point,
    pub depart_time: f64,
    pub speed: f64,
    pub pause_after: f64,
}

impl WaypointLeg {
    pub fn arrival_time(&self) -> f64 {
        self.depart_time + self.start_pos.dist(self.end_pos) / self.speed
    }
}

/// A node's whole trajectory: an initial placement and its legs in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub node: NodeId,
    pub initial: Point,
    pub legs: Vec<WaypointLeg>,
}

impl Schedule {
    pub fn stationary(node: NodeId, at: Point) -> Self {
        Schedule {
            node,
            initial: at,
            legs: Vec::new(),
        }
    }

    /// Generates legs covering `[0, horizon]`. The node pauses first, so a
    /// pause time at or beyond the horizon leaves it where it was placed.
    pub fn generate<R: Rng>(node: NodeId, params: &MobilityParams, horizon: f64, rng: &mut R) -> Self {
        let initial = params.random_point(rng);
        let mut legs = Vec::new();
        let mut pos = initial;
        let mut t = params.pause_time;
        while t < horizon {
            let dest = params.random_point(rng);
            let speed = if params.v_min == params.v_max {
                params.v_max
            } else {
                rng.random_range(params.v_min..=params.v_max)
            };
            let leg = WaypointLeg {
                start_pos: pos,
                end_pos: dest,
                depart_time: t,
                speed,
                pause_after: params.pause_time,
            };
            t = leg.arrival_time() + params.pause_time;
            pos = dest;
            legs.push(leg);
        }
        Schedule { node, initial, legs }
    }

    pub fn position_at(&self, t: f64) -> Point {
        // index of the last leg departed at or before t
        let idx = self.legs.partition_point(|l| l.depart_time <= t);
        if idx == 0 {
            return self.initial;
        }
        let leg = &self.legs[idx - 1];
        let travel = leg.start_pos.dist(leg.end_pos);
        if travel == 0.0 {
            return leg.end_pos;
        }
        let elapsed = t - leg.depart_time;
        let frac = elapsed * leg.speed / travel;
        if frac >= 1.0 {
            leg.end_pos
        } else {
            leg.start_pos.lerp(leg.end_pos, frac)
        }
    }

    /// Times at which the node starts moving.
    pub fn waypoint_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.legs.iter().map(|l| l.depart_time)
    }

    /// Text export, one leg per line: `node time x y speed pause`, where
    /// `(x, y)` is the leg's destination. A leading line with speed 0 carries
    /// the initial placement.
    pub fn write_text(&self, out: &mut String) {
        let _ = writeln!(
            out,
            "{} {:.9} {:.6} {:.6} 0 0",
            self.node, 0.0, self.initial.x, self.initial.y
        );
        for l in &self.legs {
            let _ = writeln!(
                out,
                "{} {:.9} {:.6} {:.6} {:.6} {:.6}",
                self.node, l.depart_time, l.end_pos.x, l.end_pos.y, l.speed, l.pause_after
            );
        }
    }
}

/// Parses the text written by [`Schedule::write_text`] for any number of nodes.
pub fn parse_schedules(text: &str) -> Result<Vec<Schedule>, MobilityError> {
    let mut out: Vec<Schedule> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| MobilityError::Parse {
            line: i + 1,
            msg: msg.to_string(),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(err("expected 6 fields: node time x y speed pause"));
        }
        let node: u32 = f[0].parse().map_err(|_| err("bad node id"))?;
        let mut nums = [0.0f64; 5];
        for (k, s) in f[1..].iter().enumerate() {
            let v: f64 = s.parse().map_err(|_| err("bad number"))?;
            if !v.is_finite() {
                return Err(err("non-finite number"));
            }
            nums[k] = v;
        }
        let [time, x, y, speed, pause] = nums;
        let node = NodeId(node);
        match out.last_mut() {
            Some(s) if s.node == node => {
                if speed <= 0.0 {
                    return Err(err("moving leg needs positive speed"));
                }
                if pause < 0.0 {
                    return Err(err("negative pause"));
                }
                let start_pos = s.legs.last().map(|l| l.end_pos).unwrap_or(s.initial);
                let min_depart = s.legs.last().map(|l| l.arrival_time()).unwrap_or(0.0);
                if time < min_depart - 1e-6 {
                    return Err(err("leg departs before the previous one arrives"));
                }
                s.legs.push(WaypointLeg {
                    start_pos,
                    end_pos: Point::new(x, y),
                    depart_time: time,
                    speed,
                    pause_after: pause,
                });
            }
            _ => {
                if speed != 0.0 {
                    return Err(err("first line of a node must be its placement (speed 0)"));
                }
                if out.iter().any(|s| s.node == node) {
                    return Err(err("node schedule split across the file"));
                }
                out.push(Schedule::stationary(node, Point::new(x, y)));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::rng_stream;

    fn leg(from: (f64, f64), to: (f64, f64), depart: f64, speed: f64, pause: f64) -> WaypointLeg {
        WaypointLeg {
            start_pos: Point::new(from.0, from.1),
            end_pos: Point::new(to.0, to.1),
            depart_time: depart,
            speed,
            pause_after: pause,
        }
    }

    #[test]
    fn straight_line_kinematics() {
        let s = Schedule {
            node: NodeId(0),
            initial: Point::new(0.0, 0.0),
            legs: vec![leg((0.0, 0.0), (100.0, 0.0), 0.0, 5.0, 0.0)],
        };
        assert_eq!(s.position_at(0.0), Point::new(0.0, 0.0));
        assert_eq!(s.position_at(10.0), Point::new(50.0, 0.0));
        assert_eq!(s.position_at(20.0), Point::new(100.0, 0.0));
        assert_eq!(s.position_at(500.0), Point::new(100.0, 0.0));
    }

    #[test]
    fn initial_placement_at_zero() {
        let mut rng = rng_stream(3, "m");
        let s = Schedule::generate(NodeId(4), &MobilityParams::default(), 120.0, &mut rng);
        assert_eq!(s.position_at(0.0), s.initial);
    }

    #[test]
    fn long_pause_means_static() {
        let p = MobilityParams {
            pause_time: 200.0,
            ..Default::default()
        };
        let mut rng = rng_stream(1, "m");
        let s = Schedule::generate(NodeId(0), &p, 120.0, &mut rng);
        assert!(s.legs.is_empty());
        assert_eq!(s.position_at(119.0), s.initial);
    }

    #[test]
    fn zero_pause_keeps_moving() {
        let p = MobilityParams::default();
        let mut rng = rng_stream(1, "m");
        let s = Schedule::generate(NodeId(0), &p, 120.0, &mut rng);
        assert!(!s.legs.is_empty());
        for w in s.legs.windows(2) {
            assert!((w[1].depart_time - w[0].arrival_time()).abs() < 1e-9);
        }
        assert!(s.legs.last().unwrap().arrival_time() >= 120.0);
    }

    #[test]
    fn degenerate_speed_interval() {
        let p = MobilityParams {
            v_min: 5.0,
            v_max: 5.0,
            ..Default::default()
        };
        let mut rng = rng_stream(9, "m");
        let s = Schedule::generate(NodeId(0), &p, 1000.0, &mut rng);
        assert!(s.legs.iter().all(|l| l.speed == 5.0));
    }

    #[test]
    fn waypoints_stay_inside_area() {
        let p = MobilityParams::default();
        let mut draws = 0;
        let mut node = 0;
        while draws < 10_000 {
            let mut rng = rng_stream(11, &format!("mobility/{node}"));
            let s = Schedule::generate(NodeId(node), &p, 2000.0, &mut rng);
            for pt in std::iter::once(s.initial).chain(s.legs.iter().map(|l| l.end_pos)) {
                assert!((0.0..=800.0).contains(&pt.x) && (0.0..=600.0).contains(&pt.y));
                draws += 1;
            }
            node += 1;
        }
    }

    #[test]
    fn matches_numeric_integration() {
        // three legs with pauses, checked against explicit Euler stepping of
        // the velocity field at dt = 1e-3
        let s = Schedule {
            node: NodeId(0),
            initial: Point::new(10.0, 20.0),
            legs: vec![
                leg((10.0, 20.0), (310.0, 420.0), 1.5, 4.0, 3.0),
                leg((310.0, 420.0), (700.0, 100.0), 130.5, 2.5, 0.75),
                leg((700.0, 100.0), (50.0, 590.0), 333.0, 5.0, 2.0),
            ],
        };
        let dt = 1e-3;
        let steps = 520_000;
        let mut pos = s.initial;
        let mut max_err: f64 = 0.0;
        for k in 0..steps {
            let t = k as f64 * dt;
            if k % 1000 == 0 {
                max_err = max_err.max(pos.dist(s.position_at(t)));
            }
            // velocity on [t, t+dt): integrate the moving portion exactly
            // within the step, since leg boundaries fall mid-step
            let step_end = (k + 1) as f64 * dt;
            let mut tt = t;
            while tt < step_end {
                let active = s.legs.iter().find(|l| l.depart_time <= tt && tt < l.arrival_time());
                let end = match active {
                    Some(l) => {
                        let end = l.arrival_time().min(step_end);
                        let d = l.start_pos.dist(l.end_pos);
                        pos.x += (l.end_pos.x - l.start_pos.x) / d * l.speed * (end - tt);
                        pos.y += (l.end_pos.y - l.start_pos.y) / d * l.speed * (end - tt);
                        end
                    }
                    None => s
                        .legs
                        .iter()
                        .map(|l| l.depart_time)
                        .find(|&d| d > tt)
                        .unwrap_or(f64::INFINITY)
                        .min(step_end),
                };
                tt = end;
            }
        }
        assert!(max_err < 1e-6, "max deviation {max_err}");
    }

    #[test]
    fn text_round_trip() {
        let p = MobilityParams::default();
        let mut text = String::new();
        let mut orig = Vec::new();
        for n in 0..3 {
            let mut rng = rng_stream(5, &format!("mobility/{n}"));
            let s = Schedule::generate(NodeId(n), &p, 60.0, &mut rng);
            s.write_text(&mut text);
            orig.push(s);
        }
        let back = parse_schedules(&text).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in orig.iter().zip(&back) {
            assert_eq!(a.legs.len(), b.legs.len());
            for t in [0.0, 7.3, 31.0, 59.9] {
                assert!(a.position_at(t).dist(b.position_at(t)) < 1e-3);
            }
        }
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(parse_schedules("0 0 1 2 3").is_err());
        assert!(parse_schedules("0 0 1 2 3 0\n").is_err());
        assert!(parse_schedules("0 0 1 2 0 0\n0 5 1 2 -1 0\n").is_err());
        assert!(parse_schedules("0 0 nan 2 0 0\n").is_err());
    }

    #[test]
    fn params_validation() {
        assert!(MobilityParams::default().validate().is_ok());
        let bad = MobilityParams {
            v_min: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = MobilityParams {
            width: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
