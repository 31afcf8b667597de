//! Indoor geometry: rooms, walls, surfaces, device positions and the binary
//! visibility indicators between them.
//!
//! Walls are infinitely thin 2-D segments. Heights only enter 3-D distances.
//!
//! # Layout file format
//!
//! Layouts are TOML documents with the following keys (lengths in meters,
//! surface indices 1-based):
//!
//! ```toml
//! region = [20.0, 20.0]            # width (x) and depth (y)
//! ap = [3.0, 3.0, 2.5]             # x, y, height
//!
//! [elements]                       # element grid shared by all surfaces
//! horizontal = 5
//! vertical = 2
//! spacing_h = 0.2
//! spacing_v = 0.1
//!
//! [[rooms]]                        # optional, axis-aligned rectangles
//! name = "ap-room"
//! min = [0.0, 0.0]
//! max = [10.0, 10.0]
//!
//! [[walls]]
//! from = [0.0, 10.0]
//! to = [4.5, 10.0]
//! kind = "opaque"
//!
//! [[walls]]
//! from = [4.5, 10.0]
//! to = [5.5, 10.0]
//! kind = "star_ris"
//! surface = 1                      # index into `surfaces`
//! normal = [0.0, 1.0]              # unit forward normal
//!
//! [[surfaces]]
//! center = [5.0, 10.0, 1.5]
//!
//! mus = [[2.0, 7.5], [14.0, 3.0]]  # user positions (x, y)
//! reference_pairing = [1, 3]       # optional 1-based cluster per user
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

const GEOM_EPS: f64 = 1e-9;
const VERIFICATION_LAYOUT: &str = include_str!("../data/verification_layout.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallKind {
    Opaque,
    StarRis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub kind: WallKind,
    /// 1-based surface index, only for `star_ris` walls.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<usize>,
    /// Unit forward normal, only for `star_ris` walls.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<[f64; 2]>,
}

impl Wall {
    pub fn opaque(from: [f64; 2], to: [f64; 2]) -> Self {
        Self {
            from,
            to,
            kind: WallKind::Opaque,
            surface: None,
            normal: None,
        }
    }

    pub fn star_ris(from: [f64; 2], to: [f64; 2], surface: usize, normal: [f64; 2]) -> Self {
        Self {
            from,
            to,
            kind: WallKind::StarRis,
            surface: Some(surface),
            normal: Some(normal),
        }
    }

    pub fn is_opaque(&self) -> bool {
        self.kind == WallKind::Opaque
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub name: String,
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Room {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementGrid {
    pub horizontal: usize,
    pub vertical: usize,
    pub spacing_h: f64,
    pub spacing_v: f64,
}

impl ElementGrid {
    pub fn count(&self) -> usize {
        self.horizontal * self.vertical
    }
}

impl Default for ElementGrid {
    fn default() -> Self {
        Self {
            horizontal: 5,
            vertical: 2,
            spacing_h: 0.2,
            spacing_v: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSite {
    pub center: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub region: [f64; 2],
    pub ap: [f64; 3],
    #[serde(default)]
    pub elements: ElementGrid,
    #[serde(default)]
    pub rooms: Vec<Room>,
    pub walls: Vec<Wall>,
    pub surfaces: Vec<SurfaceSite>,
    #[serde(default)]
    pub mus: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_pairing: Option<Vec<usize>>,
}

/// Binary visibility structure between the AP, the surfaces and the users.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyIndicators {
    /// AP → user direct path.
    pub c_b_u: Vec<bool>,
    /// AP → surface.
    pub c_b_l: Vec<bool>,
    /// Surface forward side → user, indexed `[l][u]`.
    pub c_lf_u: Vec<Vec<bool>>,
    /// Surface backward side → user, indexed `[l][u]`.
    pub c_lb_u: Vec<Vec<bool>>,
}

impl AdjacencyIndicators {
    pub fn num_users(&self) -> usize {
        self.c_b_u.len()
    }

    pub fn num_surfaces(&self) -> usize {
        self.c_b_l.len()
    }

    /// Whether user `u` has any nonzero path to the AP.
    pub fn has_path(&self, u: usize) -> bool {
        self.c_b_u[u]
            || (0..self.num_surfaces())
                .any(|l| self.c_b_l[l] && (self.c_lf_u[l][u] || self.c_lb_u[l][u]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct UserLinks {
    direct: bool,
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    cross(sub(b, a), sub(c, a))
}

fn within_box(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) - GEOM_EPS
        && p[0] <= a[0].max(b[0]) + GEOM_EPS
        && p[1] >= a[1].min(b[1]) - GEOM_EPS
        && p[1] <= a[1].max(b[1]) + GEOM_EPS
}

/// Closed-segment intersection test; touching counts.
pub fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > GEOM_EPS && d2 < -GEOM_EPS) || (d1 < -GEOM_EPS && d2 > GEOM_EPS))
        && ((d3 > GEOM_EPS && d4 < -GEOM_EPS) || (d3 < -GEOM_EPS && d4 > GEOM_EPS))
    {
        return true;
    }
    (d1.abs() <= GEOM_EPS && within_box(q1, q2, p1))
        || (d2.abs() <= GEOM_EPS && within_box(q1, q2, p2))
        || (d3.abs() <= GEOM_EPS && within_box(p1, p2, q1))
        || (d4.abs() <= GEOM_EPS && within_box(p1, p2, q2))
}

/// Distance from `p` to the segment `a`–`b`.
pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 == 0.0 {
        0.0
    } else {
        (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0)
    };
    let proj = [a[0] + t * ab[0], a[1] + t * ab[1]];
    let d = sub(p, proj);
    dot(d, d).sqrt()
}

impl Layout {
    pub fn from_toml(text: &str) -> Result<Self> {
        let layout: Layout = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn num_surfaces(&self) -> usize {
        self.surfaces.len()
    }

    pub fn num_users(&self) -> usize {
        self.mus.len()
    }

    pub fn elements_per_surface(&self) -> usize {
        self.elements.count()
    }

    pub fn surface_center_2d(&self, l: usize) -> [f64; 2] {
        let c = self.surfaces[l].center;
        [c[0], c[1]]
    }

    pub fn ap_2d(&self) -> [f64; 2] {
        [self.ap[0], self.ap[1]]
    }

    /// The `star_ris` wall carrying surface `l` (0-based).
    pub fn surface_wall(&self, l: usize) -> &Wall {
        self.walls
            .iter()
            .find(|w| w.kind == WallKind::StarRis && w.surface == Some(l + 1))
            .expect("validated layout has one wall per surface")
    }

    /// Forward normal of surface `l` (0-based).
    pub fn forward_normal(&self, l: usize) -> [f64; 2] {
        self.surface_wall(l).normal.expect("validated star_ris wall")
    }

    /// True when the forward side of surface `l` faces the AP.
    pub fn forward_faces_ap(&self, l: usize) -> bool {
        dot(self.forward_normal(l), sub(self.ap_2d(), self.surface_center_2d(l))) > 0.0
    }

    /// Index of the room containing `p`, if rooms are defined.
    pub fn room_of(&self, p: [f64; 2]) -> Option<usize> {
        self.rooms.iter().position(|r| r.contains(p))
    }

    fn inside_region(&self, p: [f64; 2]) -> bool {
        p[0] >= 0.0 && p[0] <= self.region[0] && p[1] >= 0.0 && p[1] <= self.region[1]
    }

    /// Checks every structural invariant and reports all offending fields.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.region[0] > 0.0 && self.region[1] > 0.0) {
            problems.push("region: width and depth must be positive".to_string());
        }
        if !self.inside_region(self.ap_2d()) {
            problems.push("ap: outside region".to_string());
        }
        if self.elements.count() == 0 {
            problems.push("elements: grid must have at least one element".to_string());
        }
        if !(self.elements.spacing_h > 0.0 && self.elements.spacing_v > 0.0) {
            problems.push("elements: spacings must be positive".to_string());
        }
        for (i, w) in self.walls.iter().enumerate() {
            if !self.inside_region(w.from) || !self.inside_region(w.to) {
                problems.push(format!("walls[{i}]: endpoint outside region"));
            }
            if w.from == w.to {
                problems.push(format!("walls[{i}]: zero length"));
            }
            match w.kind {
                WallKind::Opaque => {
                    if w.surface.is_some() || w.normal.is_some() {
                        problems.push(format!("walls[{i}]: opaque wall with surface fields"));
                    }
                }
                WallKind::StarRis => {
                    match w.surface {
                        Some(l) if l >= 1 && l <= self.surfaces.len() => {}
                        _ => problems.push(format!("walls[{i}]: surface index out of range")),
                    }
                    match w.normal {
                        Some(n) => {
                            let len = dot(n, n).sqrt();
                            if (len - 1.0).abs() > 1e-9 {
                                problems.push(format!("walls[{i}]: normal is not unit length"));
                            }
                            let dir = sub(w.to, w.from);
                            if dot(n, dir).abs() > 1e-9 * dot(dir, dir).sqrt() {
                                problems.push(format!("walls[{i}]: normal not perpendicular"));
                            }
                        }
                        None => problems.push(format!("walls[{i}]: missing normal")),
                    }
                }
            }
        }
        for l in 0..self.surfaces.len() {
            let carriers: Vec<&Wall> = self
                .walls
                .iter()
                .filter(|w| w.kind == WallKind::StarRis && w.surface == Some(l + 1))
                .collect();
            if carriers.len() != 1 {
                problems.push(format!(
                    "surfaces[{l}]: referenced by {} star_ris walls, expected 1",
                    carriers.len()
                ));
                continue;
            }
            let c = self.surface_center_2d(l);
            if !self.inside_region(c) {
                problems.push(format!("surfaces[{l}]: outside region"));
            }
            if point_segment_distance(c, carriers[0].from, carriers[0].to) > 1e-6 {
                problems.push(format!("surfaces[{l}]: center not on its wall"));
            }
        }
        for (u, &p) in self.mus.iter().enumerate() {
            if !self.inside_region(p) {
                problems.push(format!("mus[{u}]: outside region"));
            }
        }
        if let Some(pairing) = &self.reference_pairing {
            if pairing.len() != self.mus.len() {
                problems.push("reference_pairing: length differs from mus".to_string());
            }
            if pairing.iter().any(|&k| k == 0) {
                problems.push("reference_pairing: cluster indices are 1-based".to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    fn crosses_wall(&self, a: [f64; 2], b: [f64; 2], opaque_only: bool) -> bool {
        self.walls
            .iter()
            .filter(|w| !opaque_only || w.is_opaque())
            .any(|w| segments_intersect(a, b, w.from, w.to))
    }

    fn check_position(&self, p: [f64; 2]) -> Result<()> {
        for (i, w) in self.walls.iter().enumerate() {
            if point_segment_distance(p, w.from, w.to) <= GEOM_EPS {
                return Err(Error::DegenerateGeometry(format!(
                    "position ({}, {}) lies on walls[{i}]",
                    p[0], p[1]
                )));
            }
        }
        for l in 0..self.surfaces.len() {
            let s = dot(self.forward_normal(l), sub(p, self.surface_center_2d(l)));
            if s.abs() <= GEOM_EPS {
                return Err(Error::DegenerateGeometry(format!(
                    "position ({}, {}) lies on the line of surface {}",
                    p[0],
                    p[1],
                    l + 1
                )));
            }
        }
        Ok(())
    }

    /// Direct indicator plus per-surface (forward, backward) indicators.
    fn user_links(&self, p: [f64; 2]) -> Result<(UserLinks, Vec<(bool, bool)>)> {
        self.check_position(p)?;
        let direct = !self.crosses_wall(self.ap_2d(), p, false);
        let sides = (0..self.surfaces.len())
            .map(|l| {
                let c = self.surface_center_2d(l);
                let visible = !self.crosses_wall(c, p, true);
                let s = dot(self.forward_normal(l), sub(p, c));
                (visible && s > 0.0, visible && s < 0.0)
            })
            .collect();
        Ok((UserLinks { direct }, sides))
    }

    fn surface_visible(&self, l: usize) -> bool {
        !self.crosses_wall(self.ap_2d(), self.surface_center_2d(l), true)
    }

    /// Whether a user at `p` would have at least one path to the AP.
    pub fn is_covered(&self, p: [f64; 2]) -> Result<bool> {
        let (links, sides) = self.user_links(p)?;
        Ok(links.direct
            || sides
                .iter()
                .enumerate()
                .any(|(l, &(f, b))| self.surface_visible(l) && (f || b)))
    }
}

pub fn compute_adjacency(layout: &Layout) -> Result<AdjacencyIndicators> {
    let num_l = layout.num_surfaces();
    let num_u = layout.num_users();
    let c_b_l: Vec<bool> = (0..num_l).map(|l| layout.surface_visible(l)).collect();
    let mut c_b_u = Vec::with_capacity(num_u);
    let mut c_lf_u = vec![vec![false; num_u]; num_l];
    let mut c_lb_u = vec![vec![false; num_u]; num_l];
    for (u, &p) in layout.mus.iter().enumerate() {
        let (links, sides) = layout.user_links(p)?;
        c_b_u.push(links.direct);
        for (l, (f, b)) in sides.into_iter().enumerate() {
            c_lf_u[l][u] = f;
            c_lb_u[l][u] = b;
        }
    }
    Ok(AdjacencyIndicators {
        c_b_u,
        c_b_l,
        c_lf_u,
        c_lb_u,
    })
}

/// Draws `count` user positions uniformly over the region interior.
///
/// Positions on a wall, on a surface line, or without any path to the AP
/// are redrawn. Every other field is copied from `template`.
pub fn sample_deployment(rng: &mut Rng, template: &Layout, count: usize) -> Result<Layout> {
    const MAX_REJECTIONS: usize = 100_000;
    let mut layout = template.clone();
    layout.mus.clear();
    layout.reference_pairing = None;
    let mut rejections = 0;
    while layout.mus.len() < count {
        let p = [
            rng.uniform() * template.region[0],
            rng.uniform() * template.region[1],
        ];
        let accept = p[0] > 0.0 && p[1] > 0.0 && matches!(template.is_covered(p), Ok(true));
        if accept {
            layout.mus.push(p);
        } else {
            rejections += 1;
            if rejections > MAX_REJECTIONS {
                return Err(Error::DegenerateGeometry(
                    "no covered position found in the region".into(),
                ));
            }
        }
    }
    Ok(layout)
}

/// The fixed four-room verification layout.
pub fn verification_layout() -> Layout {
    Layout::from_toml(VERIFICATION_LAYOUT).expect("shipped verification layout is valid")
}

/// Unit normal at `point` pointing clockwise around `pivot` (viewed from
/// above). Used to orient surface forward sides consistently.
pub fn clockwise_normal(pivot: [f64; 2], point: [f64; 2]) -> [f64; 2] {
    let r = sub(point, pivot);
    let t = [r[1], -r[0]];
    let len = dot(t, t).sqrt();
    [t[0] / len, t[1] / len]
}
