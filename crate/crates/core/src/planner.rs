//! Ironing plan: split long wrinkles, pick static or sliding motions, order
//! them greedily and emit position-controlled waypoints.
//!
//! Force is not controlled. The iron presses a fixed depth into a foam
//! underlay, which acts as a spring, so the reported force is
//! `foam_stiffness * press_depth`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusedWrinkle;
use crate::geom::{dist, lerp, Point};
use crate::gridio::FloatGrid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IronSpec {
    /// Length of the iron head's long axis, meters.
    pub long_axis: f64,
    pub short_axis: f64,
    /// Depth pressed below the cloth surface, meters.
    pub press_depth: f64,
    pub foam_thickness: f64,
    /// Foam spring constant, N/m. Only used for the force estimate.
    pub foam_stiffness: f64,
    /// Clearance above the surface while moving between actions.
    pub lift_height: f64,
    /// Speed for transit and vertical moves, m/s.
    pub travel_speed: f64,
    /// Speed while sliding under pressure, m/s.
    pub slide_speed: f64,
    /// Hold time of a static press, seconds.
    pub static_dwell: f64,
}

impl Default for IronSpec {
    fn default() -> Self {
        Self {
            long_axis: 0.20,
            short_axis: 0.12,
            press_depth: 0.01,
            foam_thickness: 0.06,
            foam_stiffness: 500.0,
            lift_height: 0.05,
            travel_speed: 0.1,
            slide_speed: 0.02,
            static_dwell: 3.0,
        }
    }
}

impl IronSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("iron: {m}")));
        let all_finite = [
            self.long_axis,
            self.short_axis,
            self.press_depth,
            self.foam_thickness,
            self.foam_stiffness,
            self.lift_height,
            self.travel_speed,
            self.slide_speed,
            self.static_dwell,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return bad("values must be finite");
        }
        if !(self.long_axis > self.short_axis && self.short_axis > 0.0) {
            return bad("need long_axis > short_axis > 0");
        }
        if !(self.press_depth > 0.0 && self.press_depth < self.foam_thickness) {
            return bad("need 0 < press_depth < foam_thickness");
        }
        if !(self.lift_height > 0.0) {
            return bad("lift_height must be positive");
        }
        if !(self.travel_speed > 0.0 && self.slide_speed > 0.0) {
            return bad("speeds must be positive");
        }
        if !(self.foam_stiffness >= 0.0 && self.static_dwell >= 0.0) {
            return bad("foam_stiffness and static_dwell must be non-negative");
        }
        Ok(())
    }

    /// Spring-model press force, newtons.
    pub fn force(&self) -> f64 {
        self.foam_stiffness * self.press_depth
    }

    fn vertical_time(&self) -> f64 {
        (self.lift_height + self.press_depth) / self.travel_speed
    }
}

/// One piece of an accepted wrinkle, ready for planning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WrinklePiece {
    pub wrinkle_id: usize,
    /// Index of this piece along the wrinkle.
    pub piece: usize,
    pub pieces: usize,
    pub endpoints: [Point; 2],
    pub length: f64,
    pub direction: f64,
    pub q: f64,
    pub r: f64,
    pub p: f64,
}

impl WrinklePiece {
    pub fn midpoint(&self) -> Point {
        lerp(self.endpoints[0], self.endpoints[1], 0.5)
    }
}

/// Cut wrinkles longer than twice the long axis into equal collinear
/// pieces. Every piece inherits `q`, `r` and `p`.
pub fn split_wrinkle(w: &FusedWrinkle, iron: &IronSpec) -> Vec<WrinklePiece> {
    let d = &w.discontinuity;
    let [a, b] = d.endpoints;
    let length = dist(a, b);
    let bound = 2.0 * iron.long_axis;
    let pieces = if length <= bound {
        1
    } else {
        (length / bound).ceil() as usize
    };
    (0..pieces)
        .map(|k| {
            let s = lerp(a, b, k as f64 / pieces as f64);
            let e = lerp(a, b, (k + 1) as f64 / pieces as f64);
            WrinklePiece {
                wrinkle_id: d.id,
                piece: k,
                pieces,
                endpoints: [s, e],
                length: length / pieces as f64,
                direction: d.direction,
                q: w.q,
                r: w.r,
                p: w.p,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Static,
    Sliding,
}

/// Static when the piece is shorter than 70% of the long axis.
pub fn select_motion(length: f64, iron: &IronSpec) -> MotionKind {
    if length < 0.7 * iron.long_axis {
        MotionKind::Static
    } else {
        MotionKind::Sliding
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IronAction {
    pub kind: MotionKind,
    pub wrinkle_id: usize,
    pub piece: usize,
    /// Iron head direction in `[0, pi)`, along the wrinkle.
    pub align_angle: f64,
    pub start: Point,
    pub end: Point,
    /// Press heights at `start` and `end`: surface minus press depth.
    pub press_z: [f64; 2],
    /// Seconds from arriving above `start` to leaving above `end`.
    pub duration: f64,
    pub force: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaypointKind {
    Approach,
    Press,
    Slide,
    Retract,
}

impl WaypointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Approach => "approach",
            Self::Press => "press",
            Self::Slide => "slide",
            Self::Retract => "retract",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// Seconds since leaving home.
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub angle: f64,
    pub kind: WaypointKind,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IroningPlan {
    pub home: Point,
    pub actions: Vec<IronAction>,
    /// Waypoints per action, parallel to `actions`.
    pub waypoints: Vec<Vec<Waypoint>>,
    /// Lifted xy travel, including home to the first action, meters.
    pub travel_distance: f64,
    /// xy distance covered while pressing, meters.
    pub slide_distance: f64,
    pub total_time: f64,
}

/// Greedy order: start with the most probable piece at its endpoint nearer
/// `home`, then repeatedly enter the unvisited piece whose entry point is
/// nearest the iron. Sliding pieces may be entered at either end; static
/// pieces at their midpoint.
///
/// Press heights assume a flat surface at `z = 0` until
/// [`emit_waypoints`] samples the real one.
pub fn order_actions(pieces: &[WrinklePiece], iron: &IronSpec, home: Point) -> IroningPlan {
    let mut plan = IroningPlan {
        home,
        ..IroningPlan::default()
    };
    if pieces.is_empty() {
        return plan;
    }
    let kinds: Vec<MotionKind> = pieces
        .iter()
        .map(|w| select_motion(w.length, iron))
        .collect();
    let entries = |i: usize| -> Vec<(Point, Point)> {
        let w = &pieces[i];
        match kinds[i] {
            MotionKind::Static => vec![(w.midpoint(), w.midpoint())],
            MotionKind::Sliding => vec![
                (w.endpoints[0], w.endpoints[1]),
                (w.endpoints[1], w.endpoints[0]),
            ],
        }
    };

    let first = (0..pieces.len())
        .min_by(|&i, &j| {
            let (a, b) = (&pieces[i], &pieces[j]);
            b.p.total_cmp(&a.p)
                .then((a.wrinkle_id, a.piece).cmp(&(b.wrinkle_id, b.piece)))
        })
        .expect("non-empty");
    let mut visited = vec![false; pieces.len()];
    let mut pos = home;
    let mut next = Some(first);
    while let Some(i) = next {
        let (start, end) = entries(i)
            .into_iter()
            .min_by(|x, y| dist(pos, x.0).total_cmp(&dist(pos, y.0)))
            .expect("at least one entry");
        plan.travel_distance += dist(pos, start);
        visited[i] = true;
        plan.actions
            .push(make_action(&pieces[i], kinds[i], start, end, iron));
        pos = end;
        next = (0..pieces.len())
            .filter(|&j| !visited[j])
            .flat_map(|j| entries(j).into_iter().map(move |e| (j, e.0)))
            .min_by(|x, y| {
                dist(pos, x.1).total_cmp(&dist(pos, y.1)).then(
                    (pieces[x.0].wrinkle_id, pieces[x.0].piece)
                        .cmp(&(pieces[y.0].wrinkle_id, pieces[y.0].piece)),
                )
            })
            .map(|(j, _)| j);
    }
    plan.slide_distance = plan.actions.iter().map(|a| dist(a.start, a.end)).sum();
    plan.total_time = plan.travel_distance / iron.travel_speed
        + plan.actions.iter().map(|a| a.duration).sum::<f64>();
    plan
}

fn make_action(
    w: &WrinklePiece,
    kind: MotionKind,
    start: Point,
    end: Point,
    iron: &IronSpec,
) -> IronAction {
    let work = match kind {
        MotionKind::Static => iron.static_dwell,
        MotionKind::Sliding => dist(start, end) / iron.slide_speed,
    };
    IronAction {
        kind,
        wrinkle_id: w.wrinkle_id,
        piece: w.piece,
        align_angle: w.direction,
        start,
        end,
        press_z: [-iron.press_depth; 2],
        duration: 2.0 * iron.vertical_time() + work,
        force: iron.force(),
    }
}

fn surface_at(surface: &FloatGrid, p: Point) -> Result<f64> {
    surface
        .sample_world(p[0], p[1])
        .ok_or(Error::OutOfBounds { x: p[0], y: p[1] })
}

/// Fill in waypoints and surface-relative press heights.
///
/// Each action is approach (lifted) then press, an optional slide at press
/// depth, and retract. Waypoint times follow the same duration model as
/// the plan totals, so the last waypoint's `t` equals `total_time`.
pub fn emit_waypoints(plan: &mut IroningPlan, iron: &IronSpec, surface: &FloatGrid) -> Result<()> {
    let mut t = 0.0;
    let mut pos = plan.home;
    let mut all = Vec::with_capacity(plan.actions.len());
    for action in &mut plan.actions {
        let zs = surface_at(surface, action.start)?;
        let ze = surface_at(surface, action.end)?;
        action.press_z = [zs - iron.press_depth, ze - iron.press_depth];
        let angle = action.align_angle;
        let wp = |t: f64, p: Point, z: f64, kind| Waypoint {
            t,
            x: p[0],
            y: p[1],
            z,
            angle,
            kind,
        };
        let mut list = Vec::with_capacity(4);
        t += dist(pos, action.start) / iron.travel_speed;
        list.push(wp(
            t,
            action.start,
            zs + iron.lift_height,
            WaypointKind::Approach,
        ));
        t += iron.vertical_time();
        list.push(wp(t, action.start, action.press_z[0], WaypointKind::Press));
        match action.kind {
            MotionKind::Static => t += iron.static_dwell,
            MotionKind::Sliding => {
                t += dist(action.start, action.end) / iron.slide_speed;
                list.push(wp(t, action.end, action.press_z[1], WaypointKind::Slide));
            }
        }
        t += iron.vertical_time();
        list.push(wp(
            t,
            action.end,
            ze + iron.lift_height,
            WaypointKind::Retract,
        ));
        pos = action.end;
        all.push(list);
    }
    plan.waypoints = all;
    Ok(())
}

/// Split, order and emit waypoints for every accepted wrinkle.
pub fn plan_ironing(
    wrinkles: &[FusedWrinkle],
    iron: &IronSpec,
    home: Point,
    surface: &FloatGrid,
) -> Result<IroningPlan> {
    iron.validate()?;
    let pieces: Vec<WrinklePiece> = wrinkles
        .iter()
        .filter(|w| w.accepted)
        .flat_map(|w| split_wrinkle(w, iron))
        .collect();
    let mut plan = order_actions(&pieces, iron, home);
    emit_waypoints(&mut plan, iron, surface)?;
    Ok(plan)
}

/// Waypoints as CSV with columns `t,x,y,z,angle,kind`.
pub fn waypoints_csv(plan: &IroningPlan) -> String {
    let mut out = String::from("t,x,y,z,angle,kind\n");
    for w in plan.waypoints.iter().flatten() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            w.t,
            w.x,
            w.y,
            w.z,
            w.angle,
            w.kind.as_str()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discont::Discontinuity;
    use crate::geom::undirected_angle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fused(id: usize, a: Point, b: Point, p: f64) -> FusedWrinkle {
        FusedWrinkle {
            discontinuity: Discontinuity {
                id,
                endpoints: [a, b],
                pixel_endpoints: [a, b],
                length: dist(a, b),
                direction: undirected_angle(a, b),
                support_count: 1,
                support: Vec::new(),
            },
            q: 1.0,
            r: p,
            p,
            accepted: p >= 0.3,
        }
    }

    fn piece(id: usize, a: Point, b: Point, p: f64) -> WrinklePiece {
        split_wrinkle(&fused(id, a, b, p), &IronSpec::default())
            .into_iter()
            .next()
            .unwrap()
    }

    #[test]
    fn split_table() {
        let iron = IronSpec::default();
        for (len, n) in [(0.10, 1), (0.40, 1), (0.50, 2), (0.8000001, 3), (1.2, 3)] {
            let parts = split_wrinkle(&fused(0, [0.0, 0.0], [len, 0.0], 0.9), &iron);
            assert_eq!(parts.len(), n, "length {len}");
            for (k, p) in parts.iter().enumerate() {
                assert!((p.length - len / n as f64).abs() < 1e-12);
                assert_eq!(p.piece, k);
                assert_eq!(p.p, 0.9);
            }
            assert_eq!(parts[0].endpoints[0], [0.0, 0.0]);
            assert!((parts[n - 1].endpoints[1][0] - len).abs() < 1e-12);
        }
        let parts = split_wrinkle(&fused(0, [0.0, 0.0], [0.5, 0.0], 0.9), &iron);
        assert!((parts[0].endpoints[1][0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn motion_table() {
        let iron = IronSpec::default();
        assert_eq!(select_motion(0.10, &iron), MotionKind::Static);
        assert_eq!(select_motion(0.139, &iron), MotionKind::Static);
        assert_eq!(select_motion(0.7 * 0.20, &iron), MotionKind::Sliding);
        assert_eq!(select_motion(0.30, &iron), MotionKind::Sliding);
    }

    #[test]
    fn empty_input_gives_empty_plan() {
        let plan = order_actions(&[], &IronSpec::default(), [0.0, 0.0]);
        assert!(plan.actions.is_empty());
        assert_eq!(plan.travel_distance, 0.0);
        assert_eq!(plan.total_time, 0.0);
    }

    #[test]
    fn single_wrinkle_travel_is_home_to_entry() {
        let w = piece(0, [0.3, 0.4], [0.3, 0.6], 0.8);
        let plan = order_actions(&[w], &IronSpec::default(), [0.0, 0.0]);
        assert_eq!(plan.actions.len(), 1);
        assert!((plan.travel_distance - 0.5).abs() < 1e-12);
        assert_eq!(plan.actions[0].start, [0.3, 0.4]);
    }

    #[test]
    fn collinear_segments_left_to_right() {
        let ws: Vec<WrinklePiece> = (0..3)
            .map(|k| {
                let x = 2.0 * k as f64;
                WrinklePiece {
                    wrinkle_id: k + 1,
                    piece: 0,
                    pieces: 1,
                    endpoints: [[x, 0.0], [x + 1.0, 0.0]],
                    length: 1.0,
                    direction: 0.0,
                    q: 1.0,
                    r: 1.0,
                    p: 1.0,
                }
            })
            .collect();
        let plan = order_actions(&ws, &IronSpec::default(), [0.0, 0.0]);
        let order: Vec<usize> = plan.actions.iter().map(|a| a.wrinkle_id).collect();
        assert_eq!(order, vec![1, 2, 3]);
        assert!((plan.travel_distance - 2.0).abs() < 1e-12);
        assert!((plan.slide_distance - 3.0).abs() < 1e-12);
    }

    #[test]
    fn static_waypoints_on_flat_surface() {
        let iron = IronSpec::default();
        let surface = FloatGrid::zeros(50, 50, 0.01).unwrap();
        let w = piece(0, [0.2, 0.2], [0.25, 0.2], 0.9);
        let mut plan = order_actions(&[w], &iron, [0.0, 0.0]);
        emit_waypoints(&mut plan, &iron, &surface).unwrap();
        let zs: Vec<f64> = plan.waypoints[0].iter().map(|w| w.z).collect();
        assert_eq!(zs.len(), 3);
        for (z, e) in zs.iter().zip([0.05, -0.01, 0.05]) {
            assert!((z - e).abs() < 1e-12);
        }
        assert!((plan.actions[0].force - 5.0).abs() < 1e-12);
        let last = plan.waypoints[0].last().unwrap();
        assert!((last.t - plan.total_time).abs() < 1e-9);
    }

    #[test]
    fn sliding_press_follows_the_surface() {
        let iron = IronSpec::default();
        // plane z = 0.1 x + 0.02 y, reproduced exactly by bilinear sampling
        let surface = FloatGrid::from_fn(60, 60, 0.01, [0.0, 0.0], |u, v| {
            0.1 * u as f64 * 0.01 + 0.02 * v as f64 * 0.01
        })
        .unwrap();
        let w = piece(0, [0.1, 0.1], [0.4, 0.3], 0.9);
        let mut plan = order_actions(&[w], &iron, [0.0, 0.0]);
        emit_waypoints(&mut plan, &iron, &surface).unwrap();
        let a = &plan.actions[0];
        let oracle = |p: Point| 0.1 * p[0] + 0.02 * p[1] - 0.01;
        assert!((a.press_z[0] - oracle(a.start)).abs() < 1e-12);
        assert!((a.press_z[1] - oracle(a.end)).abs() < 1e-12);
        let kinds: Vec<WaypointKind> = plan.waypoints[0].iter().map(|w| w.kind).collect();
        assert_eq!(
            kinds,
            vec![
                WaypointKind::Approach,
                WaypointKind::Press,
                WaypointKind::Slide,
                WaypointKind::Retract
            ]
        );
    }

    #[test]
    fn out_of_bounds_action_is_an_error() {
        let iron = IronSpec::default();
        let surface = FloatGrid::zeros(10, 10, 0.01).unwrap();
        let w = piece(0, [0.5, 0.5], [0.55, 0.5], 0.9);
        let mut plan = order_actions(&[w], &iron, [0.0, 0.0]);
        assert!(matches!(
            emit_waypoints(&mut plan, &iron, &surface),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn totals_match_waypoints() {
        let iron = IronSpec::default();
        let surface = FloatGrid::zeros(101, 101, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let ws: Vec<FusedWrinkle> = (0..rng.gen_range(1..8))
                .map(|id| {
                    let a = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
                    let b = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
                    fused(id, a, b, rng.gen_range(0.0..1.0))
                })
                .collect();
            let plan = plan_ironing(&ws, &iron, [0.0, 0.0], &surface).unwrap();
            let expected: usize = ws
                .iter()
                .filter(|w| w.accepted)
                .map(|w| split_wrinkle(w, &iron).len())
                .sum();
            assert_eq!(plan.actions.len(), expected);
            let mut path = 0.0;
            let mut prev = plan.home;
            for w in plan.waypoints.iter().flatten() {
                path += dist(prev, [w.x, w.y]);
                prev = [w.x, w.y];
            }
            assert!((path - plan.travel_distance - plan.slide_distance).abs() < 1e-9);
            let end_t = plan.waypoints.iter().flatten().last().map_or(0.0, |w| w.t);
            assert!((end_t - plan.total_time).abs() < 1e-9);
            for (a, wps) in plan.actions.iter().zip(&plan.waypoints) {
                assert!(
                    (crate::geom::angle_diff_mod_pi(
                        a.align_angle,
                        undirected_angle(a.start, a.end)
                    ))
                    .abs()
                        < 1e-9
                        || a.kind == MotionKind::Static
                );
                assert!(wps.iter().all(|w| w.angle == a.align_angle));
            }
        }
    }

    #[test]
    fn csv_has_header_and_one_row_per_waypoint() {
        let iron = IronSpec::default();
        let surface = FloatGrid::zeros(50, 50, 0.01).unwrap();
        let ws = [
            fused(0, [0.1, 0.1], [0.4, 0.1], 0.9),
            fused(1, [0.2, 0.3], [0.22, 0.3], 0.8),
        ];
        let plan = plan_ironing(&ws, &iron, [0.0, 0.0], &surface).unwrap();
        let csv = waypoints_csv(&plan);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x,y,z,angle,kind");
        assert_eq!(lines.len(), 1 + 4 + 3);
        assert!(lines[1].ends_with(",approach"));
    }
}
