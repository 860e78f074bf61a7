//! Street network geometry.
//!
//! Streets are lines of a Poisson line process, parameterized by the angle
//! `theta` of their normal and its length `r`. Vehicles on each street form a
//! one-dimensional PPP. The ego radar sits at the origin on the y-axis street
//! `L_0` and looks along `+y`.
//!
//! A line `(theta, r)` with `0 < theta < pi` crosses `L_0` ahead of the ego at
//! `d = r / sin(theta)`. Lines with `theta` in `(pi/2, pi)` are reflected
//! across the y-axis (`theta -> pi - theta`) so that the interferer interval
//! is always evaluated for `0 < theta <= pi/2`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{Densities, RadarParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    /// The street stays inside the ego beam forever: every vehicle beyond
    /// `a` (clamped at 0) lies in the interferer interval.
    #[error("unbounded interferer interval: theta {theta} <= half beamwidth {half_beamwidth}")]
    UnboundedInterval {
        theta: f64,
        half_beamwidth: f64,
        a: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(&self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn sub(&self, other: Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }

    pub fn scale(&self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }

    pub fn rotate(&self, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

/// A street as a point of the line process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    pub theta: f64,
    pub r: f64,
}

impl LineParams {
    pub fn new(theta: f64, r: f64) -> Result<Self, GeometryError> {
        if !(theta.is_finite() && (0.0..TAU).contains(&theta)) {
            return Err(GeometryError::InvalidParameter {
                name: "theta",
                value: theta,
            });
        }
        if !(r.is_finite() && r >= 0.0) {
            return Err(GeometryError::InvalidParameter {
                name: "r",
                value: r,
            });
        }
        Ok(Self { theta, r })
    }

    /// The ego street, the y-axis.
    pub fn ego() -> Self {
        Self { theta: 0.0, r: 0.0 }
    }

    /// Unit direction `z = (-sin theta, cos theta)`; vehicle offsets are
    /// measured along it.
    pub fn direction(&self) -> Point {
        Point::new(-self.theta.sin(), self.theta.cos())
    }

    /// Foot of the perpendicular from the origin.
    pub fn foot(&self) -> Point {
        Point::new(self.r * self.theta.cos(), self.r * self.theta.sin())
    }

    pub fn point_at(&self, offset: f64) -> Point {
        let f = self.foot();
        let z = self.direction();
        Point::new(f.x + offset * z.x, f.y + offset * z.y)
    }

    /// Half-length of the chord inside a disc of radius `radius` about the
    /// origin; `None` when the line misses or only touches the disc.
    pub fn half_chord(&self, radius: f64) -> Option<f64> {
        if self.r >= radius {
            None
        } else {
            Some((radius * radius - self.r * self.r).sqrt())
        }
    }

    /// Rotate the line about the origin.
    pub fn rotated(&self, angle: f64) -> Self {
        Self {
            theta: (self.theta + angle).rem_euclid(TAU),
            r: self.r,
        }
    }

    /// Canonical crossing with the ego street, if the line crosses it ahead of
    /// the ego radar.
    pub fn crossing(&self) -> Option<Crossing> {
        let s = self.theta.sin();
        if !(self.theta > 0.0 && self.theta < PI) || s <= 0.0 || self.r <= 0.0 {
            return None;
        }
        let (folded, mirror) = if self.theta <= FRAC_PI_2 {
            (self.theta, 1.0)
        } else {
            (PI - self.theta, -1.0)
        };
        let d = self.r / s;
        // offset of the crossing point, in the folded frame
        let origin_offset = self.r * folded.cos() / folded.sin();
        Some(Crossing {
            theta: folded,
            distance: d,
            mirror,
            origin_offset,
        })
    }
}

/// Where a street crosses the ego street, in the frame where `0 < theta <= pi/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    /// Folded angle in `(0, pi/2]`.
    pub theta: f64,
    /// Distance `d` from the ego radar to the crossing point.
    pub distance: f64,
    mirror: f64,
    origin_offset: f64,
}

impl Crossing {
    /// Signed distance of a vehicle from the crossing point; positive values
    /// are on the far side, the side Lemma-1 interferers live on.
    pub fn distance_from_crossing(&self, offset: f64) -> f64 {
        self.mirror * offset - self.origin_offset
    }
}

/// Heading of a vehicle along its street direction `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Along,
    Against,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Along => 1.0,
            Orientation::Against => -1.0,
        }
    }
}

/// One street together with the vehicles sampled on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreetRealization {
    pub line: LineParams,
    pub vehicle_offsets: Vec<f64>,
    pub orientations: Vec<Orientation>,
}

impl StreetRealization {
    pub fn empty(line: LineParams) -> Self {
        Self {
            line,
            vehicle_offsets: Vec::new(),
            orientations: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.vehicle_offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicle_offsets.is_empty()
    }

    /// Vehicle positions with their boresight unit vectors.
    pub fn vehicles(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let z = self.line.direction();
        self.vehicle_offsets
            .iter()
            .zip(&self.orientations)
            .map(move |(&s, o)| (self.line.point_at(s), z.scale(o.sign())))
    }
}

/// Provenance of a sampled realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master_seed: u64,
    pub stream: u64,
}

/// A Palm-conditioned network realization seen from the ego radar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRealization {
    /// Streets other than the ego street.
    pub streets: Vec<StreetRealization>,
    /// Traffic on the ego street moving in the ego direction (`+y`).
    pub ego_same_direction: StreetRealization,
    /// Oncoming traffic on the ego street (facing `-y`).
    pub ego_opposing: StreetRealization,
    pub window_radius: f64,
    pub seed: SeedRecord,
}

impl NetworkRealization {
    pub fn empty(window_radius: f64) -> Self {
        Self {
            streets: Vec::new(),
            ego_same_direction: StreetRealization::empty(LineParams::ego()),
            ego_opposing: StreetRealization::empty(LineParams::ego()),
            window_radius,
            seed: SeedRecord {
                master_seed: 0,
                stream: 0,
            },
        }
    }
}

fn check_non_negative(name: &'static str, value: f64) -> Result<(), GeometryError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(GeometryError::InvalidParameter { name, value })
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<(), GeometryError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(GeometryError::InvalidParameter { name, value })
    }
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mean).expect("positive finite mean");
    dist.sample(rng) as u64
}

/// Sample the lines of a PLP hitting a disc of radius `window_radius`.
///
/// The number of lines is Poisson with mean `lambda_L * 2 pi * window_radius`
/// and each `(theta, r)` is uniform on `[0, 2 pi) x (0, window_radius)`.
pub fn sample_plp<R: Rng + ?Sized>(
    intensity: f64,
    window_radius: f64,
    rng: &mut R,
) -> Result<Vec<LineParams>, GeometryError> {
    check_non_negative("line intensity", intensity)?;
    check_positive("window radius", window_radius)?;
    let n = poisson_count(intensity * TAU * window_radius, rng);
    Ok((0..n)
        .map(|_| LineParams {
            theta: rng.random_range(0.0..TAU),
            r: rng.random_range(0.0..window_radius),
        })
        .collect())
}

/// Sample the 1-D PPP of vehicles on the chord of `line` inside the window,
/// each heading along or against the street direction with probability 1/2.
pub fn sample_plcp_on_line<R: Rng + ?Sized>(
    line: LineParams,
    vehicle_intensity: f64,
    window_radius: f64,
    rng: &mut R,
) -> Result<StreetRealization, GeometryError> {
    check_non_negative("vehicle intensity", vehicle_intensity)?;
    check_positive("window radius", window_radius)?;
    let Some(h) = line.half_chord(window_radius) else {
        return Ok(StreetRealization::empty(line));
    };
    let n = poisson_count(vehicle_intensity * 2.0 * h, rng) as usize;
    let mut offsets = Vec::with_capacity(n);
    let mut orientations = Vec::with_capacity(n);
    for _ in 0..n {
        offsets.push(rng.random_range(-h..h));
        orientations.push(if rng.random_bool(0.5) {
            Orientation::Along
        } else {
            Orientation::Against
        });
    }
    Ok(StreetRealization {
        line,
        vehicle_offsets: offsets,
        orientations,
    })
}

fn sample_ego_lane<R: Rng + ?Sized>(
    intensity: f64,
    window_radius: f64,
    orientation: Orientation,
    rng: &mut R,
) -> StreetRealization {
    let line = LineParams::ego();
    let n = poisson_count(intensity * 2.0 * window_radius, rng) as usize;
    let offsets: Vec<f64> = (0..n)
        .map(|_| rng.random_range(-window_radius..window_radius))
        .collect();
    StreetRealization {
        line,
        orientations: vec![orientation; offsets.len()],
        vehicle_offsets: offsets,
    }
}

/// Sample a full network realization around the ego radar.
pub fn sample_network<R: Rng + ?Sized>(
    densities: Densities,
    window_radius: f64,
    seed: SeedRecord,
    rng: &mut R,
) -> Result<NetworkRealization, GeometryError> {
    check_non_negative("vehicle intensity", densities.vehicle)?;
    let lines = sample_plp(densities.street, window_radius, rng)?;
    let ego_same_direction =
        sample_ego_lane(densities.vehicle, window_radius, Orientation::Along, rng);
    let ego_opposing = sample_ego_lane(densities.vehicle, window_radius, Orientation::Against, rng);
    let streets = lines
        .into_iter()
        .map(|line| sample_plcp_on_line(line, densities.vehicle, window_radius, rng))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NetworkRealization {
        streets,
        ego_same_direction,
        ego_opposing,
        window_radius,
        seed,
    })
}

/// Radar sector: the set of points within `range` of `apex` whose bearing is
/// within `half_beamwidth` of `boresight`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarSector {
    pub apex: Point,
    pub boresight: Point,
    pub half_beamwidth: f64,
    pub range: f64,
}

impl RadarSector {
    pub fn new(
        apex: Point,
        boresight: Point,
        half_beamwidth: f64,
        range: f64,
    ) -> Result<Self, GeometryError> {
        let n = boresight.norm();
        if !((n - 1.0).abs() < 1e-9) {
            return Err(GeometryError::InvalidParameter {
                name: "boresight norm",
                value: n,
            });
        }
        if !(half_beamwidth > 0.0 && half_beamwidth < FRAC_PI_2) {
            return Err(GeometryError::InvalidParameter {
                name: "half beamwidth",
                value: half_beamwidth,
            });
        }
        check_positive("range", range)?;
        Ok(Self {
            apex,
            boresight,
            half_beamwidth,
            range,
        })
    }

    /// The ego radar's sector: origin, looking along `+y`.
    pub fn ego(half_beamwidth: f64, range: f64) -> Result<Self, GeometryError> {
        Self::new(Point::ORIGIN, Point::new(0.0, 1.0), half_beamwidth, range)
    }

    pub fn transformed(&self, angle: f64, shift: Point) -> Self {
        let apex = self.apex.rotate(angle);
        Self {
            apex: Point::new(apex.x + shift.x, apex.y + shift.y),
            boresight: self.boresight.rotate(angle),
            ..*self
        }
    }
}

pub fn in_sector(sector: &RadarSector, point: Point) -> bool {
    let v = point.sub(sector.apex);
    let dist = v.norm();
    if dist == 0.0 || dist > sector.range {
        return false;
    }
    v.dot(sector.boresight) / dist > sector.half_beamwidth.cos()
}

/// Both radars fall into each other's sectors.
pub fn mutually_visible(a: &RadarSector, b: &RadarSector) -> bool {
    in_sector(a, b.apex) && in_sector(b, a.apex)
}

/// Distances `(a, b)` from the crossing point between which a radar on a
/// street crossing `L_0` at distance `d` and angle `theta` both sees and is
/// seen by the ego radar.
///
/// `a` is where the ego enters the interferer's beam and `b` is where the
/// interferer leaves the ego beam. The interval is empty when `a >= b`, which
/// happens for `theta >= 2 * half_beamwidth`.
pub fn interference_interval(
    theta: f64,
    d: f64,
    half_beamwidth: f64,
) -> Result<(f64, f64), GeometryError> {
    if !(theta > 0.0 && theta <= FRAC_PI_2) {
        return Err(GeometryError::InvalidParameter {
            name: "theta",
            value: theta,
        });
    }
    check_positive("crossing distance", d)?;
    if !(half_beamwidth > 0.0 && half_beamwidth < FRAC_PI_2) {
        return Err(GeometryError::InvalidParameter {
            name: "half beamwidth",
            value: half_beamwidth,
        });
    }
    let excess = theta - half_beamwidth;
    let a = d * excess.sin() / half_beamwidth.sin();
    if excess <= 0.0 {
        return Err(GeometryError::UnboundedInterval {
            theta,
            half_beamwidth,
            a,
        });
    }
    let b = d * half_beamwidth.sin() / excess.sin();
    Ok((a, b))
}

/// The interferer interval as an open span `(lo, hi)` with `hi` possibly
/// infinite, or `None` when it is empty.
pub fn interferer_span(theta: f64, d: f64, half_beamwidth: f64) -> Option<(f64, f64)> {
    match interference_interval(theta, d, half_beamwidth) {
        Ok((a, b)) if a < b => Some((a, b)),
        Ok(_) => None,
        Err(GeometryError::UnboundedInterval { a, .. }) => Some((a.max(0.0), f64::INFINITY)),
        Err(_) => None,
    }
}

/// How the interfering set is determined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceMode {
    /// Interval rule of the analysis: every vehicle in `(a, b)` on crossing
    /// streets plus oncoming ego-street traffic ahead; orientation and range
    /// are ignored.
    Lemma1Interval,
    /// Exact mutual sector test with the range cap, using each vehicle's
    /// orientation.
    Def1Mutual,
}

impl InterferenceMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            InterferenceMode::Lemma1Interval => "lemma1",
            InterferenceMode::Def1Mutual => "def1",
        }
    }
}

impl std::str::FromStr for InterferenceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lemma1" | "lemma1_interval" => Ok(Self::Lemma1Interval),
            "def1" | "def1_mutual" => Ok(Self::Def1Mutual),
            other => Err(format!(
                "unknown interference mode `{other}` (expected lemma1 or def1)"
            )),
        }
    }
}

impl std::fmt::Display for InterferenceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interferer {
    pub position: Point,
    pub distance: f64,
}

impl Interferer {
    fn at(position: Point) -> Self {
        Self {
            position,
            distance: position.norm(),
        }
    }
}

/// The potential interferers of the ego radar in a realization.
///
/// Ego-street traffic is listed first (oncoming, then same direction), then the
/// other streets in order.
pub fn interferer_set(
    net: &NetworkRealization,
    radar: &RadarParams,
    mode: InterferenceMode,
) -> Vec<Interferer> {
    let half = radar.half_beamwidth_rad;
    let mut out = Vec::new();
    match mode {
        InterferenceMode::Lemma1Interval => {
            for &y in &net.ego_opposing.vehicle_offsets {
                if y > 0.0 {
                    out.push(Interferer::at(Point::new(0.0, y)));
                }
            }
            for street in &net.streets {
                let Some(crossing) = street.line.crossing() else {
                    continue;
                };
                let Some((lo, hi)) = interferer_span(crossing.theta, crossing.distance, half)
                else {
                    continue;
                };
                for &s in &street.vehicle_offsets {
                    let t = crossing.distance_from_crossing(s);
                    if t > lo && t < hi {
                        out.push(Interferer::at(street.line.point_at(s)));
                    }
                }
            }
        }
        InterferenceMode::Def1Mutual => {
            let ego = RadarSector::ego(half, radar.target_range_m).expect("validated radar");
            let ego_street = [&net.ego_opposing, &net.ego_same_direction];
            for street in ego_street.into_iter().chain(&net.streets) {
                for (p, boresight) in street.vehicles() {
                    let sector = RadarSector {
                        apex: p,
                        boresight,
                        half_beamwidth: half,
                        range: radar.target_range_m,
                    };
                    if mutually_visible(&ego, &sector) {
                        out.push(Interferer::at(p));
                    }
                }
            }
        }
    }
    out
}
