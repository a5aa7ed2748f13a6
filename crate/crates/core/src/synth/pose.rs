use crate::error::{Error, Result};
use crate::rng::RngState;

/// 2-D point or direction. Body-frame units are fractions of the image
/// side; image-frame units are pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct V2 {
    pub x: f64,
    pub y: f64,
}

impl V2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn add(self, o: V2) -> V2 {
        V2::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: V2) -> V2 {
        V2::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, s: f64) -> V2 {
        V2::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: V2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// Rotation by `a` radians (positive turns +x towards +y, i.e.
    /// clockwise on screen).
    pub fn rotate(self, a: f64) -> V2 {
        let (s, c) = a.sin_cos();
        V2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Unit vector at angle `a` from +x.
    pub fn unit(a: f64) -> V2 {
        V2::new(a.cos(), a.sin())
    }

    /// Left-hand perpendicular.
    pub fn perp(self) -> V2 {
        V2::new(-self.y, self.x)
    }
}

/// Which side of the body a limb is on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

pub const NECK: V2 = V2::new(0.0, -0.2);
pub const HEAD: V2 = V2::new(0.0, -0.305);
pub const HEAD_RADIUS: f64 = 0.065;
pub const PELVIS: V2 = V2::new(0.0, 0.1);
pub const SHOULDER_X: f64 = 0.1;
pub const SHOULDER_Y: f64 = -0.19;
pub const HIP_X: f64 = 0.06;
pub const KNEE: V2 = V2::new(0.065, 0.225);
pub const ANKLE: V2 = V2::new(0.065, 0.345);
pub const UPPER_ARM: f64 = 0.12;
pub const FOREARM: f64 = 0.11;

/// Pose of the stick figure. Arm angles are radians measured downward from
/// horizontal (zero is the T-pose); forearm angles are relative to the
/// upper arm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseParams {
    pub torso: f64,
    pub upper_left: f64,
    pub upper_right: f64,
    pub fore_left: f64,
    pub fore_right: f64,
    pub scale: f64,
    pub dx: f64,
    pub dy: f64,
}

pub const TORSO_RANGE: (f64, f64) = (-0.2, 0.2);
pub const UPPER_RANGE: (f64, f64) = (-0.4, 1.2);
pub const FORE_RANGE: (f64, f64) = (-0.6, 1.2);
pub const SCALE_RANGE: (f64, f64) = (0.75, 1.0);
pub const OFFSET_RANGE: (f64, f64) = (-0.03, 0.03);

fn check(name: &str, v: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if v.is_finite() && (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {v} outside [{lo}, {hi}]")))
    }
}

impl PoseParams {
    /// Zero angles, unit scale, centred: the T-pose.
    pub const CANONICAL: PoseParams = PoseParams {
        torso: 0.0,
        upper_left: 0.0,
        upper_right: 0.0,
        fore_left: 0.0,
        fore_right: 0.0,
        scale: 1.0,
        dx: 0.0,
        dy: 0.0,
    };

    pub fn random(rng: &mut RngState) -> Self {
        let mut r = |(lo, hi): (f64, f64)| rng.range(lo, hi);
        PoseParams {
            torso: r(TORSO_RANGE),
            upper_left: r(UPPER_RANGE),
            upper_right: r(UPPER_RANGE),
            fore_left: r(FORE_RANGE),
            fore_right: r(FORE_RANGE),
            scale: r(SCALE_RANGE),
            dx: r(OFFSET_RANGE),
            dy: r(OFFSET_RANGE),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check("torso", self.torso, TORSO_RANGE)?;
        check("upper_left", self.upper_left, UPPER_RANGE)?;
        check("upper_right", self.upper_right, UPPER_RANGE)?;
        check("fore_left", self.fore_left, FORE_RANGE)?;
        check("fore_right", self.fore_right, FORE_RANGE)?;
        check("scale", self.scale, SCALE_RANGE)?;
        check("dx", self.dx, OFFSET_RANGE)?;
        check("dy", self.dy, OFFSET_RANGE)
    }

    pub fn upper(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.upper_left,
            Side::Right => self.upper_right,
        }
    }

    pub fn fore(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.fore_left,
            Side::Right => self.fore_right,
        }
    }

    /// Image-frame position (pixels) of a body-frame point.
    pub fn to_image(&self, p: V2, size: usize) -> V2 {
        let s = size as f64;
        let centre = V2::new(0.5 + self.dx, 0.5 + self.dy);
        centre.add(p.rotate(self.torso).scale(self.scale)).scale(s)
    }

    /// Inverse of [`PoseParams::to_image`].
    pub fn to_body(&self, q: V2, size: usize) -> V2 {
        let s = size as f64;
        let centre = V2::new(0.5 + self.dx, 0.5 + self.dy);
        q.scale(1.0 / s).sub(centre).scale(1.0 / self.scale).rotate(-self.torso)
    }

    /// Body-frame direction of an upper arm.
    pub fn upper_dir(&self, side: Side) -> V2 {
        arm_dir(side, self.upper(side))
    }

    /// Body-frame direction of a forearm.
    pub fn fore_dir(&self, side: Side) -> V2 {
        arm_dir(side, self.upper(side) + self.fore(side))
    }

    pub fn shoulder(side: Side) -> V2 {
        V2::new(side.sign() * SHOULDER_X, SHOULDER_Y)
    }

    pub fn hip(side: Side) -> V2 {
        V2::new(side.sign() * HIP_X, PELVIS.y)
    }

    pub fn knee(side: Side) -> V2 {
        V2::new(side.sign() * KNEE.x, KNEE.y)
    }

    pub fn ankle(side: Side) -> V2 {
        V2::new(side.sign() * ANKLE.x, ANKLE.y)
    }

    pub fn elbow(&self, side: Side) -> V2 {
        Self::shoulder(side).add(self.upper_dir(side).scale(UPPER_ARM))
    }

    pub fn wrist(&self, side: Side) -> V2 {
        self.elbow(side).add(self.fore_dir(side).scale(FOREARM))
    }
}

/// Direction of an arm segment at `angle` below horizontal, pointing away
/// from the body.
fn arm_dir(side: Side, angle: f64) -> V2 {
    let d = V2::unit(angle);
    V2::new(side.sign() * d.x, d.y)
}

/// Segments of the stick figure in body frame, each with a fixed colour.
pub fn bones(p: &PoseParams) -> Vec<(V2, V2, [f32; 3])> {
    let l = Side::Left;
    let r = Side::Right;
    vec![
        (NECK, V2::new(0.0, HEAD.y - HEAD_RADIUS * 0.5), [1.0, 1.0, 1.0]),
        (NECK, PELVIS, [1.0, 0.85, 0.0]),
        (NECK, PoseParams::shoulder(l), [1.0, 0.0, 0.0]),
        (NECK, PoseParams::shoulder(r), [0.0, 1.0, 0.0]),
        (PoseParams::shoulder(l), p.elbow(l), [1.0, 0.5, 0.0]),
        (p.elbow(l), p.wrist(l), [1.0, 0.0, 1.0]),
        (PoseParams::shoulder(r), p.elbow(r), [0.0, 1.0, 1.0]),
        (p.elbow(r), p.wrist(r), [0.0, 0.45, 1.0]),
        (PELVIS, PoseParams::hip(l), [0.6, 0.0, 1.0]),
        (PELVIS, PoseParams::hip(r), [0.6, 1.0, 0.3]),
        (PoseParams::hip(l), PoseParams::knee(l), [1.0, 0.4, 0.6]),
        (PoseParams::knee(l), PoseParams::ankle(l), [0.6, 0.3, 0.15]),
        (PoseParams::hip(r), PoseParams::knee(r), [0.3, 0.6, 0.6]),
        (PoseParams::knee(r), PoseParams::ankle(r), [0.2, 0.3, 0.9]),
    ]
}
