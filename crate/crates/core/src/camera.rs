//! Ego-view renderer: pinhole projection of the ground plane onto a small
//! grayscale image, followed by weather effects. PGM (P5) persistence.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::dynamics::VehicleState;
use crate::scenario::{Scenario, Weather};
use crate::seed;
use crate::world::Road;
use crate::{Error, Result};

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            pixels: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    /// Intensities are clamped to `[0, 1]`.
    pub fn from_pixels(width: usize, height: usize, mut pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        for p in &mut pixels {
            *p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    pub fn write_pgm<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .map(|&p| (f64::from(p) * 255.0).round() as u8)
            .collect();
        out.write_all(&bytes)?;
        Ok(())
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_pgm(std::io::BufWriter::new(file))
    }

    pub fn read_pgm<R: Read>(mut input: R, origin: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::Format {
            path: origin.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut data = Vec::new();
        input.read_to_end(&mut data)?;
        // Header: magic, width, height, maxval, each separated by whitespace.
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < data.len() && data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < data.len() && data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&data[start..pos]).map_err(|_| bad("non-ascii header"))?);
        }
        if fields[0] != "P5" {
            return Err(bad("not a binary PGM (P5)"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
        let (width, height, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
        if maxval != 255 {
            return Err(bad("only maxval 255 is supported"));
        }
        let body = &data[pos + 1..];
        if body.len() != width * height {
            return Err(bad("pixel data length does not match header"));
        }
        let pixels = body.iter().map(|&b| f32::from(b) / 255.0).collect();
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn load_pgm(path: &Path) -> Result<Self> {
        Self::read_pgm(std::fs::File::open(path)?, path)
    }
}

/// Fixed camera model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub mount_height: f64,
    /// Downward pitch of the optical axis.
    pub pitch: f64,
    pub horizontal_fov: f64,
    /// Ground beyond this distance is drawn as haze.
    pub max_range: f64,
    /// Subsamples per pixel side for anti-aliasing.
    pub supersample: usize,
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            mount_height: 1.2,
            pitch: 12f64.to_radians(),
            horizontal_fov: 90f64.to_radians(),
            max_range: 45.0,
            supersample: 3,
        }
    }
}

const SKY: f64 = 0.75;
const HAZE: f64 = 0.45;
const GRASS: f64 = 0.35;
const ASPHALT: f64 = 0.12;
const BOUNDARY: f64 = 1.0;
const CENTERLINE: f64 = 0.7;
const BOUNDARY_HALF_WIDTH: f64 = 0.12;
const CENTERLINE_HALF_WIDTH: f64 = 0.06;

impl Camera {
    /// Shade of the ground point `forward` m ahead and `left` m to the
    /// left of the vehicle.
    fn shade_ground(
        &self,
        road: &Road,
        st: &VehicleState,
        s_vehicle: f64,
        forward: f64,
        left: f64,
    ) -> f64 {
        if forward > self.max_range {
            return HAZE;
        }
        let (sin_h, cos_h) = st.heading.sin_cos();
        let gx = st.x + forward * cos_h - left * sin_h;
        let gy = st.y + forward * sin_h + left * cos_h;
        let radius = left.abs() + 6.0;
        match road.project_near(gx, gy, s_vehicle + forward, radius) {
            Err(_) => GRASS,
            Ok(p) => {
                let d = p.lateral.abs();
                let half = 0.5 * road.lane_width();
                if (d - half).abs() <= BOUNDARY_HALF_WIDTH {
                    BOUNDARY
                } else if d <= CENTERLINE_HALF_WIDTH {
                    CENTERLINE
                } else if d < half {
                    ASPHALT
                } else {
                    GRASS
                }
            }
        }
    }

    /// Renders the raw (weather-free) view.
    pub fn render_clear(
        &self,
        road: &Road,
        st: &VehicleState,
        width: usize,
        height: usize,
    ) -> Result<Image> {
        let s_vehicle = road.project(st.x, st.y)?.s;
        self.render_at(road, st, s_vehicle, width, height)
    }

    /// As [`Camera::render_clear`] with the vehicle's arc position already known.
    pub(crate) fn render_at(
        &self,
        road: &Road,
        st: &VehicleState,
        s_vehicle: f64,
        width: usize,
        height: usize,
    ) -> Result<Image> {
        if s_vehicle > road.total_length() || s_vehicle < 0.0 {
            return Err(Error::EndOfRoad {
                arc_position: s_vehicle,
                road_length: road.total_length(),
            });
        }
        let focal = 0.5 * width as f64 / (0.5 * self.horizontal_fov).tan();
        let (sin_p, cos_p) = self.pitch.sin_cos();
        let n = self.supersample.max(1);
        let inv = 1.0 / (n * n) as f64;
        let mut pixels = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                let mut acc = 0.0;
                for sy in 0..n {
                    let yc = row as f64 + (sy as f64 + 0.5) / n as f64 - 0.5 * height as f64;
                    let down = focal * sin_p + yc * cos_p;
                    for sx in 0..n {
                        if down <= 0.0 {
                            acc += SKY;
                            continue;
                        }
                        let xc = col as f64 + (sx as f64 + 0.5) / n as f64 - 0.5 * width as f64;
                        let t = self.mount_height / down;
                        let forward = t * (focal * cos_p - yc * sin_p);
                        let left = -t * xc;
                        acc += self.shade_ground(road, st, s_vehicle, forward, left);
                    }
                }
                pixels.push((acc * inv) as f32);
            }
        }
        Image::from_pixels(width, height, pixels)
    }
}

/// Renders the scenario's view from `st`, including weather.
pub fn render(r: &Road, st: &VehicleState, s: &Scenario, width: usize, height: usize) -> Result<Image> {
    let clear = Camera::default().render_clear(r, st, width, height)?;
    Ok(apply_weather(&clear, s.weather, s.weather_intensity, s.brightness, s.rng_seed))
}

/// Brightness scaling, then the weather layer; output clamped to `[0, 1]`.
/// Rain draws short vertical streaks, snow isolated specks, both with
/// density proportional to `intensity`; fog blends toward white.
pub fn apply_weather(img: &Image, weather: Weather, intensity: f64, brightness: f64, seed: u64) -> Image {
    let intensity = intensity.clamp(0.0, 1.0);
    let (w, h) = (img.width, img.height);
    let mut px: Vec<f64> = img
        .pixels
        .iter()
        .map(|&p| f64::from(p) * brightness)
        .collect();
    let mut rng = seed::rng(seed::substream(seed, 0x5745_4154));
    match weather {
        Weather::Sunny => {}
        Weather::Fog => {
            for p in &mut px {
                *p = *p * (1.0 - intensity) + intensity;
            }
        }
        Weather::Rain => {
            const STREAK: usize = 3;
            let density = 0.12 * intensity;
            for col in 0..w {
                for row in 0..h {
                    if rng.random::<f64>() < density {
                        for r in row..(row + STREAK).min(h) {
                            px[r * w + col] += 0.35;
                        }
                    }
                }
            }
        }
        Weather::Snow => {
            let density = 0.25 * intensity;
            for p in &mut px {
                if rng.random::<f64>() < density {
                    *p = 1.0;
                }
            }
        }
    }
    let pixels = px.into_iter().map(|p| p.clamp(0.0, 1.0) as f32).collect();
    Image {
        width: w,
        height: h,
        pixels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::RoadTopology;
    use crate::world::build_road;

    fn scenario(weather: Weather, intensity: f64) -> Scenario {
        Scenario {
            id: "c".into(),
            road_topology: RoadTopology::Straight,
            curvature: 0.0,
            road_length: 200.0,
            lane_width: 3.5,
            weather,
            weather_intensity: intensity,
            brightness: 1.0,
            ego_speed: 10.0,
            rng_seed: 11,
        }
    }

    fn at(x: f64, y: f64) -> VehicleState {
        VehicleState {
            x,
            y,
            heading: 0.0,
            speed: 10.0,
        }
    }

    #[test]
    fn centered_view_is_mirror_symmetric() {
        let s = scenario(Weather::Sunny, 0.0);
        let road = build_road(&s);
        let img = render(&road, &at(5.0, 0.0), &s, 32, 32).unwrap();
        for row in 0..32 {
            for col in 0..16 {
                let (a, b) = (img.get(col, row), img.get(31 - col, row));
                assert!((a - b).abs() <= 1e-9, "row {row} col {col}: {a} vs {b}");
            }
        }
        // Sky on top, markings somewhere below.
        assert!((img.get(0, 0) - SKY as f32).abs() < 1e-6);
        assert!(img.pixels().iter().any(|&p| p > 0.6));
    }

    /// Intensity-weighted mean column of everything brighter than grass.
    fn marking_centroid(img: &Image) -> f64 {
        let (mut sum, mut wsum) = (0.0, 0.0);
        for row in 16..img.height() {
            for col in 0..img.width() {
                let weight = (f64::from(img.get(col, row)) - GRASS).max(0.0);
                sum += weight * col as f64;
                wsum += weight;
            }
        }
        sum / wsum
    }

    /// Mean column of the middle of three bright runs (the centerline
    /// between two boundaries), over rows where exactly three appear.
    fn centerline_column(img: &Image) -> f64 {
        let (mut sum, mut rows) = (0.0, 0);
        for row in 16..img.height() {
            let mut runs = Vec::new();
            let mut start = None;
            for col in 0..=img.width() {
                let bright = col < img.width() && img.get(col, row) > 0.5;
                match (bright, start) {
                    (true, None) => start = Some(col),
                    (false, Some(s0)) => {
                        runs.push((s0 + col - 1) as f64 / 2.0);
                        start = None;
                    }
                    _ => {}
                }
            }
            if runs.len() == 3 {
                sum += runs[1];
                rows += 1;
            }
        }
        assert!(rows > 0, "no row shows all three markings");
        sum / rows as f64
    }

    #[test]
    fn lateral_offset_shifts_markings() {
        let s = scenario(Weather::Sunny, 0.0);
        let road = build_road(&s);
        let c: Vec<f64> = [-0.5, 0.0, 0.5]
            .iter()
            .map(|&y| centerline_column(&render(&road, &at(5.0, y), &s, 32, 32).unwrap()))
            .collect();
        // Driving left of center moves the road to the right of the image.
        assert!(c[0] < c[1] && c[1] < c[2], "{c:?}");
        assert!((c[1] - 15.5).abs() < 1e-9);

        // The nearer boundary dominates the marking mass, so the centroid
        // moves the other way, but still monotonically.
        let m: Vec<f64> = [-0.5, 0.0, 0.5]
            .iter()
            .map(|&y| marking_centroid(&render(&road, &at(5.0, y), &s, 32, 32).unwrap()))
            .collect();
        assert!(m[0] > m[1] && m[1] > m[2], "{m:?}");
    }

    #[test]
    fn rendering_is_deterministic_and_translation_consistent() {
        let s = scenario(Weather::Rain, 0.6);
        let road = build_road(&s);
        let a = render(&road, &at(10.0, 0.4), &s, 32, 32).unwrap();
        assert_eq!(a, render(&road, &at(10.0, 0.4), &s, 32, 32).unwrap());
        for dx in [7.0, 23.5, 61.25] {
            let b = render(&road, &at(10.0 + dx, 0.4), &s, 32, 32).unwrap();
            for (p, q) in a.pixels().iter().zip(b.pixels()) {
                assert!((p - q).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn render_past_road_end_fails() {
        let s = scenario(Weather::Sunny, 0.0);
        let road = build_road(&s);
        assert!(matches!(
            render(&road, &at(250.0, 0.0), &s, 32, 32),
            Err(Error::EndOfRoad { .. })
        ));
    }

    fn gradient(w: usize, h: usize) -> Image {
        let pixels = (0..w * h).map(|i| i as f32 / (w * h) as f32).collect();
        Image::from_pixels(w, h, pixels).unwrap()
    }

    #[test]
    fn weather_effects() {
        let img = gradient(16, 12);
        let fog = apply_weather(&img, Weather::Fog, 1.0, 0.7, 3);
        assert!(fog.pixels().iter().all(|&p| p == 1.0));
        for wx in Weather::ALL {
            assert_eq!(apply_weather(&img, wx, 0.0, 1.0, 3), img, "{wx}");
            let out = apply_weather(&img, wx, 0.8, 1.3, 5);
            assert_eq!(out, apply_weather(&img, wx, 0.8, 1.3, 5));
            assert!(out.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
        }
        let dim = apply_weather(&img, Weather::Sunny, 0.9, 0.5, 3);
        for (a, b) in img.pixels().iter().zip(dim.pixels()) {
            assert!((a * 0.5 - b).abs() < 1e-6);
        }
        let light = apply_weather(&img, Weather::Snow, 0.2, 1.0, 9);
        let heavy = apply_weather(&img, Weather::Snow, 1.0, 1.0, 9);
        let count = |i: &Image| i.pixels().iter().filter(|&&p| p == 1.0).count();
        assert!(count(&heavy) > count(&light));
    }

    #[test]
    fn pgm_round_trip_quantizes() {
        let img = gradient(7, 5);
        let mut buf = Vec::new();
        img.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n7 5\n255\n"));
        let back = Image::read_pgm(&buf[..], Path::new("mem")).unwrap();
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
            assert_eq!((b * 255.0).round() as u8 as f32 / 255.0, *b);
        }
        assert!(Image::read_pgm(&b"P2\n1 1\n255\n0"[..], Path::new("x")).is_err());
    }
}
