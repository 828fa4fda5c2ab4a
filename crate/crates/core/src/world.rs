//! Road geometry: an arc-length sampled centerline made of constant-curvature
//! pieces, plus projection and lateral-deviation queries.
//!
//! Conventions: heading is counter-clockwise from +x, curvature is positive
//! for left turns, lateral deviation is positive to the left of the direction
//! of travel.

use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;
use crate::{Error, Result};

/// Centerline sampling step in meters.
pub const ARC_STEP: f64 = 0.5;

/// Tolerance for points that project exactly onto a road end.
const END_TOLERANCE: f64 = 1e-9;

/// One constant-curvature piece of a road.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub length: f64,
    /// Signed curvature, 1/m, left-positive.
    pub curvature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterlineSample {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    /// Curvature of the piece leaving this sample.
    pub curvature: f64,
}

impl CenterlineSample {
    /// Pose reached after travelling `ds` along the arc leaving this sample.
    fn advance(&self, ds: f64) -> (f64, f64, f64) {
        let (h, k) = (self.heading, self.curvature);
        if k == 0.0 {
            (self.x + ds * h.cos(), self.y + ds * h.sin(), h)
        } else {
            let h1 = h + k * ds;
            (
                self.x + (h1.sin() - h.sin()) / k,
                self.y - (h1.cos() - h.cos()) / k,
                h1,
            )
        }
    }

    /// Exact projection onto the (infinite) line or circle this sample's piece lies on.
    /// Returns `(arc position, signed lateral offset)`.
    fn project_local(&self, x: f64, y: f64) -> (f64, f64) {
        let (sin_h, cos_h) = self.heading.sin_cos();
        let (dx, dy) = (x - self.x, y - self.y);
        let k = self.curvature;
        if k == 0.0 {
            (self.s + dx * cos_h + dy * sin_h, -dx * sin_h + dy * cos_h)
        } else {
            // Circle center sits 1/k along the left normal.
            let (cx, cy) = (self.x - sin_h / k, self.y + cos_h / k);
            let (qx, qy) = (x - cx, y - cy);
            let (rx, ry) = (self.x - cx, self.y - cy);
            let swept = (rx * qy - ry * qx).atan2(rx * qx + ry * qy);
            let lateral = 1.0 / k - k.signum() * qx.hypot(qy);
            (self.s + swept / k, lateral)
        }
    }
}

/// Result of projecting a point onto the centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub s: f64,
    pub lateral: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Road {
    samples: Vec<CenterlineSample>,
    lane_width: f64,
    total_length: f64,
}

impl Road {
    /// Chains `segments` tangentially, starting at the origin heading +x.
    pub fn from_segments(segments: &[Segment], lane_width: f64) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::EmptyInput("road segments"));
        }
        if segments.iter().any(|s| !(s.length > 0.0) || !s.curvature.is_finite()) {
            return Err(Error::InvalidArgument(
                "segments need positive length and finite curvature".into(),
            ));
        }
        let total_length: f64 = segments.iter().map(|s| s.length).sum();

        // Start pose of every piece, integrated in closed form.
        let mut starts = Vec::with_capacity(segments.len());
        let mut cursor = CenterlineSample {
            s: 0.0,
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            curvature: segments[0].curvature,
        };
        for seg in segments {
            cursor.curvature = seg.curvature;
            starts.push(cursor);
            let (x, y, heading) = cursor.advance(seg.length);
            cursor = CenterlineSample {
                s: cursor.s + seg.length,
                x,
                y,
                heading,
                curvature: seg.curvature,
            };
        }

        // Grid points plus every piece boundary, so no sample interval straddles a junction.
        let n = (total_length / ARC_STEP).floor() as usize;
        let mut positions: Vec<f64> = (0..=n).map(|i| i as f64 * ARC_STEP).collect();
        positions.extend(starts.iter().skip(1).map(|p| p.s));
        positions.push(total_length);
        positions.sort_by(f64::total_cmp);
        positions.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

        let mut piece = 0;
        let samples = positions
            .into_iter()
            .map(|s| {
                while piece + 1 < starts.len() && s >= starts[piece + 1].s - 1e-9 {
                    piece += 1;
                }
                let start = starts[piece];
                let (x, y, heading) = start.advance(s - start.s);
                CenterlineSample {
                    s,
                    x,
                    y,
                    heading,
                    curvature: start.curvature,
                }
            })
            .collect();
        Ok(Self {
            samples,
            lane_width,
            total_length,
        })
    }

    pub fn samples(&self) -> &[CenterlineSample] {
        &self.samples
    }

    pub fn lane_width(&self) -> f64 {
        self.lane_width
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    /// Last sample at or before `s` (clamped to the road).
    fn index_at(&self, s: f64) -> usize {
        self.samples.partition_point(|p| p.s <= s).saturating_sub(1)
    }

    /// Exact centerline pose at arc position `s`.
    pub fn pose_at(&self, s: f64) -> Result<CenterlineSample> {
        if !(-END_TOLERANCE..=self.total_length + END_TOLERANCE).contains(&s) {
            return Err(self.end_of_road(s));
        }
        let s = s.clamp(0.0, self.total_length);
        let base = self.samples[self.index_at(s)];
        let (x, y, heading) = base.advance(s - base.s);
        Ok(CenterlineSample {
            s,
            x,
            y,
            heading,
            curvature: base.curvature,
        })
    }

    fn end_of_road(&self, s: f64) -> Error {
        Error::EndOfRoad {
            arc_position: s,
            road_length: self.total_length,
        }
    }

    /// Projection onto the whole road.
    pub fn project(&self, x: f64, y: f64) -> Result<Projection> {
        self.project_in(x, y, 0, self.samples.len())
    }

    /// Projection restricted to centerline samples within `radius` meters
    /// of arc length around `s_hint`. Needed on roads that loop back on
    /// themselves, where the globally nearest point may lie on another lap.
    pub fn project_near(&self, x: f64, y: f64, s_hint: f64, radius: f64) -> Result<Projection> {
        let lo = self.index_at(s_hint - radius);
        let hi = (self.index_at(s_hint + radius) + 1).min(self.samples.len());
        self.project_in(x, y, lo, hi)
    }

    fn project_in(&self, x: f64, y: f64, lo: usize, hi: usize) -> Result<Projection> {
        let mut best = lo;
        let mut best_d2 = f64::INFINITY;
        for (i, p) in self.samples[lo..hi].iter().enumerate() {
            let d2 = (p.x - x).powi(2) + (p.y - y).powi(2);
            if d2 < best_d2 {
                best_d2 = d2;
                best = lo + i;
            }
        }
        let nearest = &self.samples[best];
        let (sin_h, cos_h) = nearest.heading.sin_cos();
        let along = (x - nearest.x) * cos_h + (y - nearest.y) * sin_h;
        // The piece behind the nearest sample owns points that fall behind it.
        let base = if along < 0.0 && best > 0 {
            &self.samples[best - 1]
        } else {
            nearest
        };
        let (s, lateral) = base.project_local(x, y);
        if s < -END_TOLERANCE || s > self.total_length + END_TOLERANCE {
            return Err(self.end_of_road(s));
        }
        let heading = base.heading + base.curvature * (s - base.s);
        Ok(Projection { s, lateral, heading })
    }
}

/// Road for a scenario: one constant-curvature piece per topology arc.
pub fn build_road(s: &Scenario) -> Road {
    let segments: Vec<_> = s
        .curvature_profile()
        .into_iter()
        .map(|(share, curvature)| Segment {
            length: share * s.road_length,
            curvature,
        })
        .collect();
    Road::from_segments(&segments, s.lane_width).expect("valid scenario yields a valid road")
}

/// Signed distance (left-positive) from `(x, y)` to the centerline.
pub fn lateral_deviation(r: &Road, x: f64, y: f64) -> Result<f64> {
    r.project(x, y).map(|p| p.lateral)
}
