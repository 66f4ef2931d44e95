use serde::{Deserialize, Serialize};

use crate::geom::{rodrigues, v3, Vec3};

/// Shape of an object primitive in its local frame (centroid at the origin).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere { radius: f64 },
    /// Half extents along the local axes.
    Box { half: [f64; 3] },
    /// Segment from `-half_length` to `+half_length` along local z.
    Capsule { half_length: f64, radius: f64 },
    /// Ring in the local xy plane.
    Torus { major: f64, minor: f64 },
}

impl Shape {
    pub fn code(&self) -> u32 {
        match self {
            Shape::Sphere { .. } => 0,
            Shape::Box { .. } => 1,
            Shape::Capsule { .. } => 2,
            Shape::Torus { .. } => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        ["sphere", "box", "capsule", "torus"][self.code() as usize]
    }

    /// Size parameters padded to three values.
    pub fn params(&self) -> [f64; 3] {
        match *self {
            Shape::Sphere { radius } => [radius, 0.0, 0.0],
            Shape::Box { half } => half,
            Shape::Capsule { half_length, radius } => [half_length, radius, 0.0],
            Shape::Torus { major, minor } => [major, minor, 0.0],
        }
    }

    pub fn from_code(code: u32, p: [f64; 3]) -> Option<Self> {
        Some(match code {
            0 => Shape::Sphere { radius: p[0] },
            1 => Shape::Box { half: p },
            2 => Shape::Capsule { half_length: p[0], radius: p[1] },
            3 => Shape::Torus { major: p[0], minor: p[1] },
            _ => return None,
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        let p = self.params().map(|v| v * s);
        Self::from_code(self.code(), p).unwrap()
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            Shape::Sphere { radius } => radius > 0.0,
            Shape::Box { half } => half.iter().all(|h| *h > 0.0),
            Shape::Capsule { half_length, radius } => half_length > 0.0 && radius > 0.0,
            Shape::Torus { major, minor } => minor > 0.0 && major > minor,
        }
    }

    /// Radius of a ball around the centroid containing the shape.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } => radius,
            Shape::Box { half } => v3(half).norm(),
            Shape::Capsule { half_length, radius } => half_length + radius,
            Shape::Torus { major, minor } => major + minor,
        }
    }

    /// Exact signed distance in the local frame.
    pub fn sdf(&self, p: &Vec3) -> f64 {
        match *self {
            Shape::Sphere { radius } => p.norm() - radius,
            Shape::Box { half } => {
                let q = p.abs() - v3(half);
                q.sup(&Vec3::zeros()).norm() + q.max().min(0.0)
            }
            Shape::Capsule { half_length, radius } => {
                let z = p.z.clamp(-half_length, half_length);
                (p - Vec3::new(0.0, 0.0, z)).norm() - radius
            }
            Shape::Torus { major, minor } => {
                let ring = (p.x * p.x + p.y * p.y).sqrt() - major;
                (ring * ring + p.z * p.z).sqrt() - minor
            }
        }
    }
}

/// A posed primitive: local shape, orientation (axis-angle) and centroid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectPrimitive {
    pub shape: Shape,
    pub rotation: [f64; 3],
    pub t_o: [f64; 3],
}

impl ObjectPrimitive {
    pub fn at_origin(shape: Shape) -> Self {
        Self { shape, rotation: [0.0; 3], t_o: [0.0; 3] }
    }

    /// World-to-local map, precomputed for repeated queries.
    pub fn local_frame(&self) -> impl Fn([f64; 3]) -> Vec3 {
        let rt = rodrigues(&v3(self.rotation)).transpose();
        let t = v3(self.t_o);
        move |x| rt * (v3(x) - t)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { shape: self.shape.scaled(s), rotation: self.rotation, t_o: self.t_o.map(|v| v * s) }
    }
}

/// Exact signed distance to a posed primitive (negative inside).
pub fn analytic_object_sdf(x: [f64; 3], prim: &ObjectPrimitive) -> f64 {
    prim.shape.sdf(&prim.local_frame()(x))
}

/// Batch version that builds the frame once.
pub fn object_sdf_batch(points: &[[f64; 3]], prim: &ObjectPrimitive) -> Vec<f64> {
    let f = prim.local_frame();
    points.iter().map(|p| prim.shape.sdf(&f(*p))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn analytic_examples() {
        let s = ObjectPrimitive::at_origin(Shape::Sphere { radius: 0.5 });
        assert_eq!(analytic_object_sdf([0.0; 3], &s), -0.5);
        let b = ObjectPrimitive::at_origin(Shape::Box { half: [0.5; 3] });
        assert_eq!(analytic_object_sdf([1.0, 0.0, 0.0], &b), 0.5);
        assert_eq!(analytic_object_sdf([0.0, 0.25, 0.0], &b), -0.25);
        assert!((analytic_object_sdf([1.5, 1.5, 0.0], &b) - 2f64.sqrt()).abs() < 1e-15);
        let c = ObjectPrimitive::at_origin(Shape::Capsule { half_length: 0.3, radius: 0.1 });
        assert!((analytic_object_sdf([0.0, 0.0, 0.6], &c) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn torus_matches_point_cloud() {
        let t = ObjectPrimitive { shape: Shape::Torus { major: 0.5, minor: 0.1 }, rotation: [0.3, 0.2, -0.4], t_o: [0.1, 0.0, -0.2] };
        let r = rodrigues(&v3(t.rotation));
        let mut cloud = Vec::new();
        let (nu, nv) = (720, 180);
        for i in 0..nu {
            let u = 2.0 * std::f64::consts::PI * i as f64 / nu as f64;
            for j in 0..nv {
                let v = 2.0 * std::f64::consts::PI * j as f64 / nv as f64;
                let p = Vec3::new((0.5 + 0.1 * v.cos()) * u.cos(), (0.5 + 0.1 * v.cos()) * u.sin(), 0.1 * v.sin());
                cloud.push(r * p + v3(t.t_o));
            }
        }
        for x in [[0.9, 0.1, 0.0], [0.1, 0.6, -0.1], [0.0, 0.0, 0.5], [-0.6, 0.2, -0.3]] {
            let d = analytic_object_sdf(x, &t);
            let brute = cloud.iter().map(|p| (p - v3(x)).norm()).fold(f64::INFINITY, f64::min);
            assert!(d > 0.0);
            assert!((d - brute).abs() < 2e-3, "{d} vs {brute}");
        }
    }

    #[test]
    fn codes_round_trip() {
        for s in [
            Shape::Sphere { radius: 0.2 },
            Shape::Box { half: [0.1, 0.2, 0.3] },
            Shape::Capsule { half_length: 0.1, radius: 0.05 },
            Shape::Torus { major: 0.3, minor: 0.1 },
        ] {
            assert_eq!(Shape::from_code(s.code(), s.params()), Some(s));
            assert!(s.is_valid());
        }
    }

    proptest! {
        #[test]
        fn canonical_object_pullback(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64, tx in -0.5..0.5f64, ty in -0.5..0.5f64) {
            let t_o = [tx, ty, 0.2];
            for shape in [Shape::Sphere { radius: 0.3 }, Shape::Box { half: [0.2, 0.1, 0.3] }, Shape::Torus { major: 0.3, minor: 0.05 }] {
                let placed = ObjectPrimitive { shape, rotation: [0.0; 3], t_o };
                let xc = crate::objpose::canonicalize_object(&[[x, y, z]], t_o)[0];
                let a = analytic_object_sdf(xc, &ObjectPrimitive::at_origin(shape));
                let b = analytic_object_sdf([x, y, z], &placed);
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
