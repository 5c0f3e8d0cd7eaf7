//! Ground-truth scene: vehicle trajectory, scatterer epochs and per-path geometry.
//!
//! Coordinates are metric with the x axis pointing east and the y axis pointing
//! north. The base station sits at the origin in the upper-left corner of the
//! drivable rectangle, so the rectangle spans `x ∈ [0, width]`,
//! `y ∈ [-height, 0]`.
//!
//! Path angles are kept *signed* in `(-π, π]`:
//!
//! * the angle of departure `φ_l` is the global direction of the ray BS → S_l;
//! * the angle of arrival `θ_l` is the global direction of the ray S_l → UE
//!   minus the vehicle heading `γ`.
//!
//! With that convention the UE lies at `S_l + (R_l - r_l)·(cos(θ_l+γ), sin(θ_l+γ))`
//! where `S_l = BS + r_l·(cos φ_l, sin φ_l)`. Steering vectors only see
//! `cos(angle)`, so the fold onto the array half-plane `[0, π]` happens there
//! (see [`array_angle`]); the sign is what lets the triangulator place the line.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::Vector2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of paths a scene may carry.
pub const MAX_PATHS: usize = 8;

/// Rejection threshold on `|sin(φ − (θ+γ))|` for nearly parallel legs.
pub const COLLINEAR_TOL: f64 = 1e-3;

/// Scatterers closer than this to the BS or the UE are re-drawn.
pub const MIN_LEG: f64 = 1.0;

const MAX_PLACEMENT_RETRIES: usize = 1000;

/// A point in the plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Global direction of the ray from `self` to `other`.
    pub fn bearing_to(&self, other: &Point2) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }

    pub fn offset(&self, dist: f64, angle: f64) -> Point2 {
        Point2::new(self.x + dist * angle.cos(), self.y + dist * angle.sin())
    }

    fn as_vec(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_to_pi(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Folds a signed angle onto the half-plane a linear array can resolve, `[0, π]`.
pub fn array_angle(a: f64) -> f64 {
    a.cos().clamp(-1.0, 1.0).acos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryShape {
    SCurve,
    Waypoints,
}

/// Drivable rectangle with the BS in its upper-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Default for Area {
    fn default() -> Self {
        Self {
            width: 500.0,
            height: 600.0,
        }
    }
}

impl Area {
    pub fn contains(&self, p: &Point2) -> bool {
        const SLACK: f64 = 1e-9;
        p.x >= -SLACK && p.x <= self.width + SLACK && p.y <= SLACK && p.y >= -self.height - SLACK
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    pub shape: TrajectoryShape,
    /// m/s
    pub speed: f64,
    /// s
    pub duration: f64,
    /// s
    pub dt: f64,
    pub area: Area,
    /// Radius of the two arcs forming the S-curve.
    pub s_curve_radius: f64,
    /// Start of the S-curve; the vehicle leaves it heading east.
    pub s_curve_start: Point2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<Point2>>,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            shape: TrajectoryShape::SCurve,
            speed: 15.0,
            duration: 60.0,
            dt: 0.1,
            area: Area::default(),
            s_curve_radius: 145.0,
            s_curve_start: Point2::new(250.0, -590.0),
            waypoints: None,
        }
    }
}

impl TrajectoryConfig {
    pub fn num_frames(&self) -> usize {
        (self.duration / self.dt).round() as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.speed >= 0.0) || !self.speed.is_finite() {
            return Err(Error::InvalidConfig(format!("speed must be >= 0, got {}", self.speed)));
        }
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "duration must be >= 0, got {}",
                self.duration
            )));
        }
        if !(self.area.width > 0.0 && self.area.height > 0.0) {
            return Err(Error::InvalidConfig("area must have positive extent".into()));
        }
        match self.shape {
            TrajectoryShape::SCurve => {
                if !(self.s_curve_radius > 0.0) {
                    return Err(Error::InvalidConfig("s_curve_radius must be > 0".into()));
                }
            }
            TrajectoryShape::Waypoints => match &self.waypoints {
                Some(w) if !w.is_empty() => {
                    if w.iter().any(|p| !p.is_finite()) {
                        return Err(Error::InvalidConfig("non-finite waypoint".into()));
                    }
                }
                _ => {
                    return Err(Error::InvalidConfig(
                        "waypoints mode needs a non-empty waypoint list".into(),
                    ))
                }
            },
        }
        Ok(())
    }
}

/// One trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub pos: Point2,
    /// Heading, radians.
    pub heading: f64,
    pub vel: Vector2<f64>,
    pub acc: Vector2<f64>,
}

/// An arc-length parameterized planar curve, extended straight past both ends.
trait Path {
    fn length(&self) -> f64;
    fn point(&self, s: f64) -> Point2;
    fn tangent_heading(&self, s: f64) -> f64;
}

struct SCurve {
    start: Point2,
    radius: f64,
}

impl SCurve {
    fn lower_center(&self) -> Point2 {
        Point2::new(self.start.x, self.start.y + self.radius)
    }

    fn upper_center(&self) -> Point2 {
        Point2::new(self.start.x, self.start.y + 3.0 * self.radius)
    }
}

impl Path for SCurve {
    fn length(&self) -> f64 {
        2.0 * PI * self.radius
    }

    fn point(&self, s: f64) -> Point2 {
        let r = self.radius;
        let half = PI * r;
        if s < 0.0 {
            // extended back along the initial (eastward) tangent
            Point2::new(self.start.x + s, self.start.y)
        } else if s <= half {
            let a = -PI / 2.0 + s / r;
            self.lower_center().offset(r, a)
        } else if s <= 2.0 * half {
            let a = -PI / 2.0 - (s - half) / r;
            self.upper_center().offset(r, a)
        } else {
            let end = Point2::new(self.start.x, self.start.y + 4.0 * r);
            Point2::new(end.x + (s - 2.0 * half), end.y)
        }
    }

    fn tangent_heading(&self, s: f64) -> f64 {
        let r = self.radius;
        let half = PI * r;
        if s < 0.0 || s > 2.0 * half {
            0.0
        } else if s <= half {
            wrap_to_pi(s / r)
        } else {
            wrap_to_pi(PI - (s - half) / r)
        }
    }
}

struct Polyline {
    points: Vec<Point2>,
    /// cumulative arc length at each vertex
    cum: Vec<f64>,
}

impl Polyline {
    fn new(waypoints: &[Point2]) -> Self {
        let mut points: Vec<Point2> = Vec::with_capacity(waypoints.len());
        for p in waypoints {
            if points.last().is_none_or(|q| q.distance(p) > 0.0) {
                points.push(*p);
            }
        }
        let mut cum = vec![0.0];
        for w in points.windows(2) {
            let last = *cum.last().unwrap();
            cum.push(last + w[0].distance(&w[1]));
        }
        Self { points, cum }
    }

    fn segment(&self, s: f64) -> usize {
        let n = self.points.len();
        if n < 2 {
            return 0;
        }
        match self.cum.iter().position(|&c| c > s) {
            Some(0) => 0,
            Some(i) => (i - 1).min(n - 2),
            None => n - 2,
        }
    }
}

impl Path for Polyline {
    fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn point(&self, s: f64) -> Point2 {
        if self.points.len() < 2 {
            return self.points[0];
        }
        let i = self.segment(s);
        let (a, b) = (self.points[i], self.points[i + 1]);
        let along = s - self.cum[i];
        a.offset(along, a.bearing_to(&b))
    }

    fn tangent_heading(&self, s: f64) -> f64 {
        if self.points.len() < 2 {
            return 0.0;
        }
        let i = self.segment(s);
        self.points[i].bearing_to(&self.points[i + 1])
    }
}

/// Samples the configured trajectory at constant speed.
///
/// Velocity and acceleration are the central first and second differences of
/// the sampled positions, so a constant-acceleration model sees them as exact.
/// The heading is the direction of the reported velocity (or of the path
/// tangent when the vehicle stands still).
pub fn generate_trajectory(cfg: &TrajectoryConfig) -> Result<Vec<TrajectorySample>> {
    cfg.validate()?;
    let path: Box<dyn Path> = match cfg.shape {
        TrajectoryShape::SCurve => Box::new(SCurve {
            start: cfg.s_curve_start,
            radius: cfg.s_curve_radius,
        }),
        TrajectoryShape::Waypoints => Box::new(Polyline::new(cfg.waypoints.as_deref().unwrap())),
    };
    let n = cfg.num_frames();
    let travel = cfg.speed * (n - 1) as f64 * cfg.dt;
    if travel > path.length() * (1.0 + 1e-12) + 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "trajectory needs {travel:.3} m but the path is only {:.3} m long",
            path.length()
        )));
    }
    let ds = cfg.speed * cfg.dt;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let s = cfg.speed * k as f64 * cfg.dt;
        let pos = path.point(s);
        if !cfg.area.contains(&pos) {
            return Err(Error::InvalidConfig(format!(
                "trajectory leaves the area at ({:.3}, {:.3})",
                pos.x, pos.y
            )));
        }
        let prev = path.point(s - ds).as_vec();
        let next = path.point(s + ds).as_vec();
        let vel = (next - prev) / (2.0 * cfg.dt);
        let acc = (next - 2.0 * pos.as_vec() + prev) / (cfg.dt * cfg.dt);
        let heading = if vel.norm() > 0.0 {
            vel.y.atan2(vel.x)
        } else {
            path.tangent_heading(s)
        };
        out.push(TrajectorySample {
            pos,
            heading,
            vel,
            acc,
        });
    }
    Ok(out)
}

/// How scatterers are placed around the vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScattererPolicy {
    /// Traveled distance between wholesale re-draws, m. `inf` keeps them static.
    pub redraw_distance: f64,
    /// Radius of the placement disk around the UE, m.
    pub placement_radius: f64,
    /// Number of paths `L` of the first epoch.
    pub num_paths: usize,
    /// When set, `L` is re-drawn uniformly from this inclusive range at every re-draw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redraw_num_paths: Option<[usize; 2]>,
}

impl Default for ScattererPolicy {
    fn default() -> Self {
        Self {
            redraw_distance: 50.0,
            placement_radius: 100.0,
            num_paths: 4,
            redraw_num_paths: None,
        }
    }
}

impl ScattererPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.redraw_distance > 0.0) {
            return Err(Error::InvalidConfig("redraw_distance must be > 0".into()));
        }
        if !(self.placement_radius > 0.0) || !self.placement_radius.is_finite() {
            return Err(Error::InvalidConfig("placement_radius must be > 0".into()));
        }
        let check = |l: usize| {
            if (1..=MAX_PATHS).contains(&l) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "number of paths must be in 1..={MAX_PATHS}, got {l}"
                )))
            }
        };
        check(self.num_paths)?;
        if let Some([lo, hi]) = self.redraw_num_paths {
            check(lo)?;
            check(hi)?;
            if lo > hi {
                return Err(Error::InvalidConfig("redraw_num_paths range is empty".into()));
            }
        }
        Ok(())
    }

    /// Largest `L` any epoch can have.
    pub fn max_paths(&self) -> usize {
        match self.redraw_num_paths {
            Some([_, hi]) => hi.max(self.num_paths),
            None => self.num_paths,
        }
    }
}

fn usable_scatterer(s: &Point2, ue: &Point2, bs: &Point2) -> bool {
    if s.distance(ue) < MIN_LEG || s.distance(bs) < MIN_LEG {
        return false;
    }
    let aod = bs.bearing_to(s);
    let ray = s.bearing_to(ue);
    (aod - ray).sin().abs() >= COLLINEAR_TOL
}

/// Draws `num_paths` scatterers uniformly in the placement disk around `ue`.
///
/// Draws whose two legs are nearly parallel, or that sit within [`MIN_LEG`] of
/// either end, are rejected and re-drawn.
pub fn place_scatterers<R: Rng + ?Sized>(
    ue: Point2,
    bs: Point2,
    num_paths: usize,
    placement_radius: f64,
    rng: &mut R,
) -> Result<Vec<Point2>> {
    if !(placement_radius > 0.0) {
        return Err(Error::InvalidConfig("placement_radius must be > 0".into()));
    }
    let mut out = Vec::with_capacity(num_paths);
    let mut retries = 0;
    while out.len() < num_paths {
        let rad = placement_radius * rng.random::<f64>().sqrt();
        let ang = 2.0 * PI * rng.random::<f64>();
        let s = ue.offset(rad, ang);
        if usable_scatterer(&s, &ue, &bs) {
            out.push(s);
        } else {
            retries += 1;
            if retries >= MAX_PLACEMENT_RETRIES {
                return Err(Error::PlacementRetries(retries));
            }
        }
    }
    Ok(out)
}

/// Per-path angles and lengths for one UE pose.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGeometry {
    pub aod: Vec<f64>,
    pub aoa: Vec<f64>,
    pub path_lengths: Vec<f64>,
}

pub fn compute_geometry(
    bs: Point2,
    ue: Point2,
    heading: f64,
    scatterers: &[Point2],
) -> Result<PathGeometry> {
    let mut g = PathGeometry {
        aod: Vec::with_capacity(scatterers.len()),
        aoa: Vec::with_capacity(scatterers.len()),
        path_lengths: Vec::with_capacity(scatterers.len()),
    };
    for s in scatterers {
        let first = bs.distance(s);
        let second = s.distance(&ue);
        if first < 1e-9 || second < 1e-9 {
            return Err(Error::DegenerateGeometry(format!(
                "scatterer ({:.3}, {:.3}) coincides with an end point",
                s.x, s.y
            )));
        }
        g.aod.push(bs.bearing_to(s));
        g.aoa.push(wrap_to_pi(s.bearing_to(&ue) - heading));
        g.path_lengths.push(first + second);
    }
    Ok(g)
}

/// Ground truth at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFrame {
    pub t: usize,
    pub ue_pos: Point2,
    pub ue_orientation: f64,
    pub ue_vel: Vector2<f64>,
    pub ue_acc: Vector2<f64>,
    pub scatterers: Vec<Point2>,
    pub true_aod: Vec<f64>,
    pub true_aoa: Vec<f64>,
    pub path_lengths: Vec<f64>,
    pub epoch_id: usize,
}

impl SceneFrame {
    pub fn num_paths(&self) -> usize {
        self.scatterers.len()
    }

    /// Stacked angle vector `[φ_1..φ_L, θ_1..θ_L]`.
    pub fn angle_vector(&self) -> Vec<f64> {
        self.true_aod.iter().chain(&self.true_aoa).copied().collect()
    }
}

/// Builds the full ground-truth sequence: trajectory plus scatterer epochs.
///
/// A new epoch starts whenever the cumulative traveled distance crosses a
/// multiple of `policy.redraw_distance`; all scatterers are re-drawn around the
/// UE position at that step.
pub fn simulate_scene<R: Rng + ?Sized>(
    bs: Point2,
    traj: &TrajectoryConfig,
    policy: &ScattererPolicy,
    rng: &mut R,
) -> Result<Vec<SceneFrame>> {
    policy.validate()?;
    let samples = generate_trajectory(traj)?;
    let mut frames = Vec::with_capacity(samples.len());
    let mut traveled = 0.0;
    let mut epoch_id = 0;
    let mut scatterers = place_scatterers(
        samples[0].pos,
        bs,
        policy.num_paths,
        policy.placement_radius,
        rng,
    )?;
    for (t, sample) in samples.iter().enumerate() {
        if t > 0 {
            let before = (traveled / policy.redraw_distance).floor();
            traveled += samples[t - 1].pos.distance(&sample.pos);
            if (traveled / policy.redraw_distance).floor() > before {
                epoch_id += 1;
                let l = match policy.redraw_num_paths {
                    Some([lo, hi]) => rng.random_range(lo..=hi),
                    None => policy.num_paths,
                };
                scatterers = place_scatterers(sample.pos, bs, l, policy.placement_radius, rng)?;
            }
        }
        let geo = compute_geometry(bs, sample.pos, sample.heading, &scatterers)?;
        frames.push(SceneFrame {
            t,
            ue_pos: sample.pos,
            ue_orientation: sample.heading,
            ue_vel: sample.vel,
            ue_acc: sample.acc,
            scatterers: scatterers.clone(),
            true_aod: geo.aod,
            true_aoa: geo.aoa,
            path_lengths: geo.path_lengths,
            epoch_id,
        });
    }
    Ok(frames)
}

/// Writes one CSV row per frame; per-path columns are padded with `NaN` up to
/// the largest `L` in the sequence.
pub fn write_scene_csv<W: Write>(frames: &[SceneFrame], out: W) -> Result<()> {
    let max_l = frames.iter().map(|f| f.num_paths()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["t", "x", "y", "gamma", "vx", "vy", "ax", "ay", "epoch_id"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for l in 1..=max_l {
        for name in ["phi", "theta", "R", "s_x", "s_y"] {
            header.push(format!("{name}_{l}"));
        }
    }
    w.write_record(&header)?;
    for f in frames {
        let mut row = vec![
            f.t.to_string(),
            f.ue_pos.x.to_string(),
            f.ue_pos.y.to_string(),
            f.ue_orientation.to_string(),
            f.ue_vel.x.to_string(),
            f.ue_vel.y.to_string(),
            f.ue_acc.x.to_string(),
            f.ue_acc.y.to_string(),
            f.epoch_id.to_string(),
        ];
        for l in 0..max_l {
            if l < f.num_paths() {
                row.push(f.true_aod[l].to_string());
                row.push(f.true_aoa[l].to_string());
                row.push(f.path_lengths[l].to_string());
                row.push(f.scatterers[l].x.to_string());
                row.push(f.scatterers[l].y.to_string());
            } else {
                row.extend(std::iter::repeat_n("NaN".to_string(), 5));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
