//! Coarse pose from single-bounce path lines.
//!
//! For a given heading `γ`, path `l` confines the UE to the line
//! `a_l x + b_l y + c_l = 0` with
//!
//! ```text
//! a_l = sin φ_l − sin(θ_l + γ)
//! b_l = cos(θ_l + γ) − cos φ_l
//! c_l = −a_l (R_l cos(θ_l + γ) + x_BS) − b_l (R_l sin(θ_l + γ) + y_BS)
//! ```
//!
//! The pose minimizes `f(x, y, γ) = Σ β_l d_l²`, `d_l` being the distance to
//! line `l`. For fixed `γ` the cost is quadratic in `(x, y)` and is solved in
//! closed form on unit-normal lines; `γ` is found by a 1-D search on that
//! profile, refined with Newton steps on its analytic derivative.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{wrap_to_pi, Point2};

const MIN_NORMAL_SQ: f64 = 1e-12;

/// Line `a x + b y + c = 0` with weight `β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub weight: f64,
}

impl PathLine {
    fn normal_sq(&self) -> f64 {
        self.a * self.a + self.b * self.b
    }

    /// The same line scaled so that `a² + b² = 1`.
    pub fn normalized(&self) -> PathLine {
        let s = self.normal_sq().sqrt();
        PathLine {
            a: self.a / s,
            b: self.b / s,
            c: self.c / s,
            weight: self.weight,
        }
    }
}

fn raw_line(aod: f64, aoa: f64, gamma: f64, length: f64, bs: Point2) -> PathLine {
    let arrival = aoa + gamma;
    let (sa, ca) = arrival.sin_cos();
    let (sd, cd) = aod.sin_cos();
    let a = sd - sa;
    let b = ca - cd;
    let c = -a * (length * ca + bs.x) - b * (length * sa + bs.y);
    PathLine { a, b, c, weight: 1.0 }
}

/// Line of candidate UE positions for one path.
///
/// Fails when the two legs are parallel (`|sin(φ − (θ+γ))| ≤ 1e-9`); the caller
/// should drop that path.
pub fn build_line(aod: f64, aoa: f64, gamma: f64, length: f64, bs: Point2) -> Result<PathLine> {
    if (aod - (aoa + gamma)).sin().abs() <= 1e-9 {
        return Err(Error::DegenerateGeometry(
            "path legs are parallel; the line is undefined".into(),
        ));
    }
    Ok(raw_line(aod, aoa, gamma, length, bs))
}

pub fn point_line_distance(p: Point2, line: &PathLine) -> f64 {
    (line.a * p.x + line.b * p.y + line.c).abs() / line.normal_sq().sqrt()
}

/// One path as seen by the triangulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathMeasurement {
    pub aod: f64,
    pub aoa: f64,
    pub length: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseStatus {
    Converged,
    MaxIter,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEstimate {
    pub x: f64,
    pub y: f64,
    pub gamma: f64,
    /// Minimized `f`, m².
    pub cost: f64,
    pub status: PoseStatus,
}

impl PoseEstimate {
    fn degenerate() -> Self {
        Self {
            x: f64::NAN,
            y: f64::NAN,
            gamma: f64::NAN,
            cost: f64::INFINITY,
            status: PoseStatus::Degenerate,
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn is_valid(&self) -> bool {
        self.status != PoseStatus::Degenerate
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Half-width of the heading search around the initial guess, rad.
    pub gamma_bracket: f64,
    pub max_iter: usize,
    /// Absolute heading tolerance of the line search, rad.
    pub tol: f64,
    /// Grid size of the global heading scan used without an initial guess.
    pub grid_points: usize,
    /// Largest accepted condition number of the 2×2 normal matrix.
    pub max_condition: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            gamma_bracket: 10f64.to_radians(),
            max_iter: 200,
            tol: 1e-12,
            grid_points: 720,
            max_condition: 1e8,
        }
    }
}

/// `f(x, y, γ) = Σ β_l d_l²` evaluated directly from the point-line distances.
pub fn cost(paths: &[PathMeasurement], bs: Point2, x: f64, y: f64, gamma: f64) -> f64 {
    paths
        .iter()
        .filter_map(|p| {
            let line = raw_line(p.aod, p.aoa, gamma, p.length, bs);
            (line.normal_sq() > MIN_NORMAL_SQ)
                .then(|| p.weight * point_line_distance(Point2::new(x, y), &line).powi(2))
        })
        .sum()
}

/// `(f, ∂f/∂γ)` at a fixed point.
fn cost_and_dgamma(paths: &[PathMeasurement], bs: Point2, p: Vector2<f64>, gamma: f64) -> (f64, f64) {
    let mut f = 0.0;
    let mut df = 0.0;
    for m in paths {
        let arrival = m.aoa + gamma;
        let (sa, ca) = arrival.sin_cos();
        let (sd, cd) = m.aod.sin_cos();
        let a = sd - sa;
        let b = ca - cd;
        let s2 = a * a + b * b;
        if s2 <= MIN_NORMAL_SQ {
            continue;
        }
        let ux = m.length * ca + bs.x;
        let uy = m.length * sa + bs.y;
        let c = -a * ux - b * uy;
        let da = -ca;
        let db = -sa;
        let dc = -da * ux + a * m.length * sa - db * uy - b * m.length * ca;
        let s = s2.sqrt();
        let ds = (a * da + b * db) / s;
        let num = a * p.x + b * p.y + c;
        let dnum = da * p.x + db * p.y + dc;
        let e = num / s;
        let de = (dnum * s - num * ds) / s2;
        f += m.weight * e * e;
        df += 2.0 * m.weight * e * de;
    }
    (f, df)
}

/// Closed-form `(x, y)` minimizer for a fixed heading, with its cost.
pub fn solve_position_fixed_gamma(
    paths: &[PathMeasurement],
    bs: Point2,
    gamma: f64,
    max_condition: f64,
) -> Option<(Point2, f64)> {
    let lines: Vec<PathLine> = paths
        .iter()
        .filter_map(|p| {
            let mut l = raw_line(p.aod, p.aoa, gamma, p.length, bs);
            l.weight = p.weight;
            (l.normal_sq() > MIN_NORMAL_SQ && p.weight > 0.0).then(|| l.normalized())
        })
        .collect();
    if lines.len() < 2 {
        return None;
    }
    let mut a = Matrix2::zeros();
    let mut rhs = Vector2::zeros();
    for l in &lines {
        let n = Vector2::new(l.a, l.b);
        a += n * n.transpose() * l.weight;
        rhs -= n * (l.c * l.weight);
    }
    let eig = a.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) || hi / lo > max_condition {
        return None;
    }
    let p = a.try_inverse()? * rhs;
    let c: f64 = lines
        .iter()
        .map(|l| l.weight * (l.a * p.x + l.b * p.y + l.c).powi(2))
        .sum();
    Some((Point2::new(p.x, p.y), c))
}

/// Brent's minimizer on `[lo, hi]` with an absolute abscissa tolerance.
fn brent<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> (f64, f64, bool) {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = 1e-15 * x.abs() + tol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            return (x, fx, true);
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx, false)
}

struct Profile<'a> {
    paths: &'a [PathMeasurement],
    bs: Point2,
    max_condition: f64,
}

impl Profile<'_> {
    fn value(&self, gamma: f64) -> f64 {
        solve_position_fixed_gamma(self.paths, self.bs, gamma, self.max_condition)
            .map_or(f64::INFINITY, |(_, c)| c)
    }

    /// Derivative of the profile cost; by the envelope theorem it is `∂f/∂γ`
    /// at the inner minimizer.
    fn slope(&self, gamma: f64) -> Option<f64> {
        let (p, _) = solve_position_fixed_gamma(self.paths, self.bs, gamma, self.max_condition)?;
        Some(cost_and_dgamma(self.paths, self.bs, Vector2::new(p.x, p.y), gamma).1)
    }

    /// Newton steps on the slope, accepted only while they shrink it.
    fn polish(&self, mut gamma: f64) -> f64 {
        let Some(mut g) = self.slope(gamma) else {
            return gamma;
        };
        for _ in 0..4 {
            let h = 1e-5;
            let (Some(gp), Some(gm)) = (self.slope(gamma + h), self.slope(gamma - h)) else {
                break;
            };
            let curv = (gp - gm) / (2.0 * h);
            if !(curv > 0.0) {
                break;
            }
            let cand = gamma - g / curv;
            match self.slope(cand) {
                Some(gc) if gc.abs() < g.abs() => {
                    gamma = cand;
                    g = gc;
                }
                _ => break,
            }
        }
        gamma
    }
}

/// Minimizes `f(x, y, γ)` over position and heading.
///
/// With an initial heading the search covers `γ_init ± gamma_bracket`, widening
/// to a global scan if the optimum sits on the bracket edge. Without one, a
/// coarse grid over `(−π, π]` seeds the search. With exactly two usable paths
/// the heading is held at `γ_init`.
pub fn solve_pose(
    paths: &[PathMeasurement],
    bs: Point2,
    gamma_init: Option<f64>,
    opts: &SolveOptions,
) -> PoseEstimate {
    let profile = Profile {
        paths,
        bs,
        max_condition: opts.max_condition,
    };
    let usable = paths.iter().filter(|p| p.weight > 0.0).count();
    if usable < 2 {
        return PoseEstimate::degenerate();
    }
    if usable == 2 {
        let Some(gamma) = gamma_init else {
            return PoseEstimate::degenerate();
        };
        return match solve_position_fixed_gamma(paths, bs, gamma, opts.max_condition) {
            Some((p, c)) => PoseEstimate {
                x: p.x,
                y: p.y,
                gamma: wrap_to_pi(gamma),
                cost: c,
                status: PoseStatus::Converged,
            },
            None => PoseEstimate::degenerate(),
        };
    }

    let global = |profile: &Profile| -> (f64, f64, bool) {
        let n = opts.grid_points.max(8);
        let step = 2.0 * PI / n as f64;
        let best = (0..n)
            .map(|k| -PI + step * (k + 1) as f64)
            .map(|g| (g, profile.value(g)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if !best.1.is_finite() {
            return (best.0, best.1, false);
        }
        brent(
            |g| profile.value(g),
            best.0 - 2.0 * step,
            best.0 + 2.0 * step,
            opts.tol,
            opts.max_iter,
        )
    };

    let (mut gamma, mut fmin, mut converged) = match gamma_init {
        Some(g0) => {
            let (lo, hi) = (g0 - opts.gamma_bracket, g0 + opts.gamma_bracket);
            let local = brent(|g| profile.value(g), lo, hi, opts.tol, opts.max_iter);
            let edge = 10.0 * opts.tol;
            if local.0 - lo < edge || hi - local.0 < edge || !local.1.is_finite() {
                let wide = global(&profile);
                if wide.1 < local.1 {
                    wide
                } else {
                    local
                }
            } else {
                local
            }
        }
        None => global(&profile),
    };
    if !fmin.is_finite() {
        return PoseEstimate::degenerate();
    }
    let polished = profile.polish(gamma);
    let fp = profile.value(polished);
    // The profile is flat to rounding near its minimum; trust the slope there.
    if fp <= fmin * (1.0 + 1e-9) + 1e-12 {
        gamma = polished;
        fmin = fp;
        converged = true;
    }
    match solve_position_fixed_gamma(paths, bs, gamma, opts.max_condition) {
        Some((p, c)) => PoseEstimate {
            x: p.x,
            y: p.y,
            gamma: wrap_to_pi(gamma),
            cost: c.min(fmin).max(0.0),
            status: if converged {
                PoseStatus::Converged
            } else {
                PoseStatus::MaxIter
            },
        },
        None => PoseEstimate::degenerate(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPolicy {
    Uniform,
    /// `β_l ∝ 1 / variance_l`, normalized to sum to `L`.
    InnovationInverse,
}

/// Per-path weights from per-path angle posterior variances.
pub fn path_weights(policy: WeightPolicy, variances: &[f64]) -> Vec<f64> {
    let l = variances.len();
    match policy {
        WeightPolicy::Uniform => vec![1.0; l],
        WeightPolicy::InnovationInverse => {
            if variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return vec![1.0; l];
            }
            let inv: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
            let total: f64 = inv.iter().sum();
            inv.iter().map(|w| w * l as f64 / total).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use crate::scene::{compute_geometry, place_scatterers};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn build_line_example() {
        let l = build_line(PI / 2.0, 0.0, 0.0, 10.0, Point2::ORIGIN).unwrap();
        assert_abs_diff_eq!(l.a, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l.b, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l.c, -10.0, epsilon = 1e-14);
        assert!(build_line(0.7, 0.5, 0.2, 10.0, Point2::ORIGIN).is_err());
    }

    #[test]
    fn distance_examples() {
        let l = PathLine { a: 1.0, b: 1.0, c: -10.0, weight: 1.0 };
        assert_abs_diff_eq!(point_line_distance(Point2::ORIGIN, &l), 10.0 / 2f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(point_line_distance(Point2::new(3.0, 7.0), &l), 0.0, epsilon = 1e-14);
        let k = PathLine { a: -3.5, b: -3.5, c: 35.0, weight: 1.0 };
        let p = Point2::new(-2.0, 4.5);
        assert_abs_diff_eq!(point_line_distance(p, &l), point_line_distance(p, &k), epsilon = 1e-14);
    }

    fn random_scene(seed: u64) -> (Point2, f64, Vec<PathMeasurement>) {
        let mut rng = stream(seed, Stream::Scene);
        let ue = Point2::new(rng.random_range(20.0..480.0), rng.random_range(-580.0..-20.0));
        let gamma = rng.random_range(-PI..PI);
        let sc = place_scatterers(ue, Point2::ORIGIN, 4, 100.0, &mut rng).unwrap();
        let g = compute_geometry(Point2::ORIGIN, ue, gamma, &sc).unwrap();
        let paths = (0..4)
            .map(|l| PathMeasurement {
                aod: g.aod[l],
                aoa: g.aoa[l],
                length: g.path_lengths[l],
                weight: 1.0,
            })
            .collect();
        (ue, gamma, paths)
    }

    #[test]
    fn true_ue_lies_on_every_line() {
        for seed in 0..20 {
            let (ue, gamma, paths) = random_scene(seed);
            for p in &paths {
                let line = build_line(p.aod, p.aoa, gamma, p.length, Point2::ORIGIN).unwrap();
                assert!(point_line_distance(ue, &line) < 1e-9);
            }
        }
    }

    #[test]
    fn exact_inputs_recover_pose() {
        for seed in 0..50 {
            let (ue, gamma, paths) = random_scene(seed);
            let est = solve_pose(&paths, Point2::ORIGIN, None, &SolveOptions::default());
            assert_eq!(est.status, PoseStatus::Converged);
            assert!(est.position().distance(&ue) < 1e-6, "seed {seed}");
            assert!(wrap_to_pi(est.gamma - gamma).abs() < 1e-8, "seed {seed}");
            assert!(est.cost <= 1e-12);
            let near = solve_pose(&paths, Point2::ORIGIN, Some(gamma + 0.05), &SolveOptions::default());
            assert!(near.position().distance(&ue) < 1e-6);
        }
    }

    #[test]
    fn two_paths_with_known_heading_intersect() {
        let (ue, gamma, paths) = random_scene(3);
        let est = solve_pose(&paths[..2], Point2::ORIGIN, Some(gamma), &SolveOptions::default());
        assert!(est.position().distance(&ue) < 1e-8);
        assert_eq!(solve_pose(&paths[..2], Point2::ORIGIN, None, &SolveOptions::default()).status, PoseStatus::Degenerate);
        assert_eq!(solve_pose(&paths[..1], Point2::ORIGIN, Some(gamma), &SolveOptions::default()).status, PoseStatus::Degenerate);
    }

    #[test]
    fn weight_additivity() {
        let (_, gamma, mut paths) = random_scene(5);
        for (i, p) in paths.iter_mut().enumerate() {
            p.aoa += 0.01 * (i as f64 - 1.5);
        }
        let mut doubled = paths.clone();
        doubled[0].weight = 2.0;
        let mut copied = paths.clone();
        copied.push(paths[0]);
        let opts = SolveOptions::default();
        let a = solve_pose(&doubled, Point2::ORIGIN, Some(gamma), &opts);
        let b = solve_pose(&copied, Point2::ORIGIN, Some(gamma), &opts);
        assert!(a.position().distance(&b.position()) < 1e-7);
        assert!((a.gamma - b.gamma).abs() < 1e-9);
    }

    #[test]
    fn noisy_minimizer_beats_truth_and_is_stationary() {
        let mut rng = stream(77, Stream::Noise);
        for seed in 0..30 {
            let (ue, gamma, mut paths) = random_scene(100 + seed);
            for p in &mut paths {
                p.aod += 0.01 * rng.random_range(-1.0..1.0);
                p.aoa += 0.02 * rng.random_range(-1.0..1.0);
            }
            let est = solve_pose(&paths, Point2::ORIGIN, Some(gamma), &SolveOptions::default());
            if est.status != PoseStatus::Converged {
                continue;
            }
            let at_truth = cost(&paths, Point2::ORIGIN, ue.x, ue.y, gamma);
            let at_est = cost(&paths, Point2::ORIGIN, est.x, est.y, est.gamma);
            assert!(at_est <= at_truth + 1e-10);
            assert!((at_est - est.cost).abs() <= 1e-9 * at_est.max(1.0));
            let h = 1e-6;
            let gx = (cost(&paths, Point2::ORIGIN, est.x + h, est.y, est.gamma)
                - cost(&paths, Point2::ORIGIN, est.x - h, est.y, est.gamma))
                / (2.0 * h);
            let gy = (cost(&paths, Point2::ORIGIN, est.x, est.y + h, est.gamma)
                - cost(&paths, Point2::ORIGIN, est.x, est.y - h, est.gamma))
                / (2.0 * h);
            let gg = (cost(&paths, Point2::ORIGIN, est.x, est.y, est.gamma + h)
                - cost(&paths, Point2::ORIGIN, est.x, est.y, est.gamma - h))
                / (2.0 * h);
            let norm = (gx * gx + gy * gy + gg * gg).sqrt();
            assert!(norm <= 1e-6, "seed {seed}: gradient {norm} ({gx:e}, {gy:e}, {gg:e}) cost {at_est}");
        }
    }

    #[test]
    fn analytic_heading_derivative() {
        let (ue, gamma, paths) = random_scene(9);
        let p = Vector2::new(ue.x + 3.0, ue.y - 2.0);
        let h = 1e-6;
        let (_, d) = cost_and_dgamma(&paths, Point2::ORIGIN, p, gamma);
        let fd = (cost(&paths, Point2::ORIGIN, p.x, p.y, gamma + h)
            - cost(&paths, Point2::ORIGIN, p.x, p.y, gamma - h))
            / (2.0 * h);
        assert!((d - fd).abs() < 1e-5 * fd.abs().max(1.0));
    }

    #[test]
    fn translation_equivariance() {
        let (ue, gamma, paths) = random_scene(11);
        let shift = Point2::new(123.0, -45.5);
        let moved_ue = Point2::new(ue.x + shift.x, ue.y + shift.y);
        let a = solve_pose(&paths, Point2::ORIGIN, Some(gamma), &SolveOptions::default());
        let b = solve_pose(&paths, shift, Some(gamma), &SolveOptions::default());
        assert!((b.x - a.x - shift.x).abs() < 1e-8);
        assert!((b.y - a.y - shift.y).abs() < 1e-8);
        assert!(b.position().distance(&moved_ue) < 1e-6);
    }

    #[test]
    fn parallel_lines_are_degenerate() {
        // all scatterers on the BS–UE axis: every line passes through the same direction
        let paths: Vec<PathMeasurement> = [10.0, 20.0, 30.0]
            .iter()
            .map(|&r| PathMeasurement {
                aod: 0.0,
                aoa: PI / 2.0,
                length: r + 50.0,
                weight: 1.0,
            })
            .collect();
        let est = solve_pose(&paths, Point2::ORIGIN, Some(0.0), &SolveOptions { gamma_bracket: 0.0, ..Default::default() });
        assert_eq!(est.status, PoseStatus::Degenerate);
    }

    #[test]
    fn weight_policies() {
        assert_eq!(path_weights(WeightPolicy::Uniform, &[0.1; 4]), vec![1.0; 4]);
        assert_eq!(path_weights(WeightPolicy::InnovationInverse, &[0.3; 4]), vec![1.0; 4]);
        let w = path_weights(WeightPolicy::InnovationInverse, &[4.0, 1.0]);
        assert_abs_diff_eq!(w[0], 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 1.6, epsilon = 1e-12);
    }
}
