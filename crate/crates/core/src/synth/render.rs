//! Rasterizers for the stick figure, garments, bodies and heads.
//!
//! Everything is sampled at pixel centres. Skeleton bones are anti-aliased;
//! garments and bodies use hard inside/outside tests so their masks are
//! exactly binary.

use super::pose::{bones, PoseParams, Side, V2, FOREARM, HEAD, HEAD_RADIUS, NECK, UPPER_ARM};
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Tensor;

pub type Rgb = [f32; 3];

/// Minimum brightest-channel value of every synthetic colour, so rendered
/// content is never mistaken for the black background.
pub const MIN_BRIGHTNESS: f32 = 0.25;

fn random_color(rng: &mut RngState, lo: f64, hi: f64) -> Rgb {
    let mut c = [0f32; 3];
    for v in &mut c {
        *v = rng.range(lo, hi) as f32;
    }
    let m = c.iter().cloned().fold(0.0, f32::max);
    if m < MIN_BRIGHTNESS {
        let k = MIN_BRIGHTNESS / m.max(1e-6);
        for v in &mut c {
            *v = (*v * k).min(1.0);
        }
    }
    c
}

fn color_distance(a: Rgb, b: Rgb) -> f32 {
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum()
}

/// Writes `color` at pixel `(y, x)` of a `3 x H x W` buffer.
fn put(img: &mut [f32], plane: usize, idx: usize, color: Rgb) {
    for (c, v) in color.into_iter().enumerate() {
        img[c * plane + idx] = v;
    }
}

fn for_each_pixel(size: usize, mut f: impl FnMut(usize, V2)) {
    for y in 0..size {
        for x in 0..size {
            f(y * size + x, V2::new(x as f64 + 0.5, y as f64 + 0.5));
        }
    }
}

fn segment_distance(p: V2, a: V2, b: V2) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    let t = if len2 == 0.0 { 0.0 } else { (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0) };
    let d = p.sub(a.add(ab.scale(t)));
    d.dot(d).sqrt()
}

/// Inside test for a convex polygon given in either winding.
fn in_convex(p: V2, poly: &[V2]) -> bool {
    let mut sign = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        if cross != 0.0 {
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
    }
    true
}

/// Colour-coded bones on black, anti-aliased.
pub fn render_skeleton(p: &PoseParams, size: usize) -> Result<Tensor> {
    p.validate()?;
    let plane = size * size;
    let mut img = vec![0f32; 3 * plane];
    let width = (0.03 * size as f64 * p.scale).max(1.0);
    let segs: Vec<(V2, V2, Rgb)> = bones(p)
        .into_iter()
        .map(|(a, b, c)| (p.to_image(a, size), p.to_image(b, size), c))
        .collect();
    for_each_pixel(size, |idx, q| {
        for &(a, b, color) in &segs {
            let cover = (width / 2.0 + 0.5 - segment_distance(q, a, b)).clamp(0.0, 1.0) as f32;
            if cover > 0.0 {
                for (c, v) in color.into_iter().enumerate() {
                    let px = &mut img[c * plane + idx];
                    *px = *px * (1.0 - cover) + v * cover;
                }
            }
        }
    });
    Tensor::new(&[3, size, size], img)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Texture {
    Flat(Rgb),
    /// Two-tone stripes in garment coordinates, so they follow the garment
    /// through every pose.
    Stripes {
        a: Rgb,
        b: Rgb,
        period: f64,
        angle: f64,
        phase: f64,
    },
}

impl Texture {
    pub fn color_at(&self, c: V2) -> Rgb {
        match *self {
            Texture::Flat(rgb) => rgb,
            Texture::Stripes { a, b, period, angle, phase } => {
                let s = c.dot(V2::unit(angle)) / period + phase;
                if s - s.floor() < 0.5 {
                    a
                } else {
                    b
                }
            }
        }
    }
}

/// Shirt-like garment: a torso quad plus sleeves that follow the arms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GarmentParams {
    pub shoulder_half: f64,
    pub hem_half: f64,
    pub hem_y: f64,
    /// Sleeve length in upper-arm lengths; values above 1 continue down the
    /// forearm.
    pub sleeve_len: f64,
    pub sleeve_half: f64,
    pub texture: Texture,
}

pub const GARMENT_TOP: f64 = -0.21;

impl GarmentParams {
    pub fn random(rng: &mut RngState) -> Self {
        let shoulder_half = rng.range(0.08, 0.12);
        let hem_half = rng.range(0.07, 0.12);
        let hem_y = rng.range(0.04, 0.14);
        let sleeve_len = rng.range(0.25, 1.0);
        let sleeve_half = rng.range(0.024, 0.034);
        let a = random_color(rng, 0.0, 1.0);
        let texture = if rng.coin(0.5) {
            Texture::Flat(a)
        } else {
            let mut b = random_color(rng, 0.0, 1.0);
            for _ in 0..16 {
                if color_distance(a, b) > 0.45 {
                    break;
                }
                b = random_color(rng, 0.0, 1.0);
            }
            Texture::Stripes {
                a,
                b,
                period: rng.range(0.12, 0.25),
                angle: rng.range(0.0, std::f64::consts::PI),
                phase: rng.uniform(),
            }
        };
        Self {
            shoulder_half,
            hem_half,
            hem_y,
            sleeve_len,
            sleeve_half,
            texture,
        }
    }

    fn torso(&self) -> [V2; 4] {
        [
            V2::new(-self.shoulder_half, GARMENT_TOP),
            V2::new(self.shoulder_half, GARMENT_TOP),
            V2::new(self.hem_half, self.hem_y),
            V2::new(-self.hem_half, self.hem_y),
        ]
    }

    /// Garment coordinate (canonical-pose body frame) of body-frame point
    /// `b` under pose `p`, or `None` outside the garment.
    pub fn garment_coord(&self, p: &PoseParams, b: V2) -> Option<V2> {
        if in_convex(b, &self.torso()) {
            return Some(b);
        }
        let canon = PoseParams::CANONICAL;
        let w = self.sleeve_half;
        for side in Side::BOTH {
            let s = PoseParams::shoulder(side);
            let (dir, cdir) = (p.upper_dir(side), canon.upper_dir(side));
            let rel = b.sub(s);
            let (t, u) = (rel.dot(dir), rel.dot(dir.perp()));
            let upper_len = self.sleeve_len.min(1.0) * UPPER_ARM;
            if (-w..=upper_len).contains(&t) && u.abs() <= w {
                return Some(s.add(cdir.scale(t)).add(cdir.perp().scale(u)));
            }
            if self.sleeve_len > 1.0 {
                let e = p.elbow(side);
                let ce = canon.elbow(side);
                let (fdir, cfdir) = (p.fore_dir(side), canon.fore_dir(side));
                let rel = b.sub(e);
                let (t, u) = (rel.dot(fdir), rel.dot(fdir.perp()));
                if (0.0..=(self.sleeve_len - 1.0) * FOREARM).contains(&t) && u.abs() <= w {
                    return Some(ce.add(cfdir.scale(t)).add(cfdir.perp().scale(u)));
                }
                if rel.dot(rel) <= w * w {
                    let turn = cdir.y.atan2(cdir.x) - dir.y.atan2(dir.x);
                    return Some(ce.add(rel.rotate(turn)));
                }
            }
        }
        None
    }
}

/// Garment at pose `p` on black, with its binary mask.
pub fn render_garment(g: &GarmentParams, p: &PoseParams, size: usize) -> Result<(Tensor, Tensor)> {
    p.validate()?;
    let plane = size * size;
    let mut img = vec![0f32; 3 * plane];
    let mut mask = vec![0f32; plane];
    for_each_pixel(size, |idx, q| {
        if let Some(c) = g.garment_coord(p, p.to_body(q, size)) {
            put(&mut img, plane, idx, g.texture.color_at(c));
            mask[idx] = 1.0;
        }
    });
    Ok((Tensor::new(&[3, size, size], img)?, Tensor::new(&[1, size, size], mask)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyParams {
    pub skin: Rgb,
    pub pants: Rgb,
    pub hair: Rgb,
}

const BASE_SKIN: Rgb = [0.87, 0.67, 0.53];

impl BodyParams {
    pub fn random(rng: &mut RngState) -> Self {
        let k = rng.range(0.55, 1.0) as f32;
        Self {
            skin: BASE_SKIN.map(|c| c * k),
            pants: random_color(rng, 0.05, 0.5),
            hair: random_color(rng, 0.0, 0.45),
        }
    }
}

const ARM_RADIUS: f64 = 0.022;
const LEG_RADIUS: f64 = 0.03;
const NECK_RADIUS: f64 = 0.018;
const BODY_TORSO: [V2; 4] = [
    V2::new(-0.088, -0.205),
    V2::new(0.088, -0.205),
    V2::new(0.072, 0.105),
    V2::new(-0.072, 0.105),
];
const BODY_HIPS: [V2; 4] = [
    V2::new(-0.075, 0.08),
    V2::new(0.075, 0.08),
    V2::new(0.09, 0.15),
    V2::new(-0.09, 0.15),
];

fn body_color(body: &BodyParams, p: &PoseParams, b: V2) -> Option<Rgb> {
    let mut hit = None;
    for side in Side::BOTH {
        let (h, k, a) = (PoseParams::hip(side), PoseParams::knee(side), PoseParams::ankle(side));
        if segment_distance(b, h, k) <= LEG_RADIUS || segment_distance(b, k, a) <= LEG_RADIUS {
            hit = Some(body.pants);
        }
    }
    if in_convex(b, &BODY_HIPS) {
        hit = Some(body.pants);
    }
    if in_convex(b, &BODY_TORSO) || segment_distance(b, NECK, NECK.add(V2::new(0.0, -0.045))) <= NECK_RADIUS {
        hit = Some(body.skin);
    }
    for side in Side::BOTH {
        let s = PoseParams::shoulder(side);
        if segment_distance(b, s, p.elbow(side)) <= ARM_RADIUS || segment_distance(b, p.elbow(side), p.wrist(side)) <= ARM_RADIUS {
            hit = Some(body.skin);
        }
    }
    hit
}

/// Headless body on black with its silhouette.
pub fn render_body(body: &BodyParams, p: &PoseParams, size: usize) -> Result<(Tensor, Tensor)> {
    p.validate()?;
    let plane = size * size;
    let mut img = vec![0f32; 3 * plane];
    let mut mask = vec![0f32; plane];
    for_each_pixel(size, |idx, q| {
        if let Some(c) = body_color(body, p, p.to_body(q, size)) {
            put(&mut img, plane, idx, c);
            mask[idx] = 1.0;
        }
    });
    Ok((Tensor::new(&[3, size, size], img)?, Tensor::new(&[1, size, size], mask)?))
}

/// Head (skin disc with a hair cap) on black with its mask.
pub fn render_head(body: &BodyParams, p: &PoseParams, size: usize) -> Result<(Tensor, Tensor)> {
    p.validate()?;
    let plane = size * size;
    let mut img = vec![0f32; 3 * plane];
    let mut mask = vec![0f32; plane];
    for_each_pixel(size, |idx, q| {
        let b = p.to_body(q, size);
        let r = b.sub(HEAD);
        if r.dot(r) <= HEAD_RADIUS * HEAD_RADIUS {
            let c = if r.y < -0.3 * HEAD_RADIUS { body.hair } else { body.skin };
            put(&mut img, plane, idx, c);
            mask[idx] = 1.0;
        }
    });
    Ok((Tensor::new(&[3, size, size], img)?, Tensor::new(&[1, size, size], mask)?))
}

/// Rotates an image by `degrees` about its centre and shifts it by
/// `(dx, dy)` pixels, nearest-neighbour, zero fill. Exact colours survive,
/// so masks stay binary.
pub fn rotate_translate(img: &Tensor, degrees: f64, dx: i32, dy: i32) -> Result<Tensor> {
    let (c, h, w) = match *img.shape() {
        [c, h, w] => (c, h, w),
        _ => return Err(Error::shape("rotate_translate", img.shape(), &[3, 0, 0])),
    };
    let centre = V2::new(w as f64 / 2.0, h as f64 / 2.0);
    let a = degrees.to_radians();
    let plane = h * w;
    let src = img.data();
    let mut out = vec![0f32; c * plane];
    for y in 0..h {
        for x in 0..w {
            let q = V2::new(x as f64 + 0.5 - dx as f64, y as f64 + 0.5 - dy as f64);
            let s = q.sub(centre).rotate(-a).add(centre);
            let (sx, sy) = (s.x.floor(), s.y.floor());
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < w && (sy as usize) < h {
                let si = sy as usize * w + sx as usize;
                for ch in 0..c {
                    out[ch * plane + y * w + x] = src[ch * plane + si];
                }
            }
        }
    }
    Tensor::new(&[c, h, w], out)
}
