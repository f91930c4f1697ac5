#![allow(dead_code)]

use mvsfit::camera::{CameraPose, Intrinsics, Keyframe};
use mvsfit::depth::DepthMap;
use mvsfit::image::Image;
use mvsfit::landmarks::LandmarkObservation;
use mvsfit::mesh::TriMesh;
use mvsfit::spatial::MeshDistance;
use mvsfit::synth::{render_image, Shading};
use nalgebra::{Point3, Vector2, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const PLANE_Z: f64 = 5.0;

pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>) -> CameraPose {
    CameraPose::look_at(Point3::from(eye), Point3::from(target), Vector3::new(0.0, -1.0, 0.0)).unwrap()
}

/// Keyframe whose image is a shaded rendering of `mesh`.
pub fn rendered_keyframe(id: u32, mesh: &TriMesh, pose: CameraPose, intr: Intrinsics, shading: &Shading) -> Keyframe {
    let gray = render_image(mesh, &pose, &intr, shading);
    Keyframe::new(id, Image::from_gray(&gray), pose, intr).unwrap()
}

/// Plane `z = depth` facing a camera at the origin looking along +z.
pub fn facing_plane(half: f64, depth: f64, n: usize) -> TriMesh {
    let mut g = TriMesh::grid(n, n, (-half, half), (-half, half), depth);
    for f in &mut g.faces {
        f.swap(1, 2);
    }
    g
}

/// Analytic depth map of a sphere (ray casting), with exact normals.
pub fn sphere_depth(kf: &Keyframe, center: Vector3<f64>, radius: f64) -> DepthMap {
    let intr = &kf.intrinsics;
    let mut map = DepthMap::invalid(intr.width, intr.height);
    let mut normals = vec![[0.0f32; 3]; intr.width * intr.height];
    let c = kf.pose.to_camera(&center);
    for y in 0..intr.height {
        for x in 0..intr.width {
            let ray = intr.ray(Vector2::new(x as f64, y as f64));
            // |t * ray - c|^2 = r^2
            let a = ray.norm_squared();
            let b = -2.0 * ray.dot(&c);
            let cc = c.norm_squared() - radius * radius;
            let disc = b * b - 4.0 * a * cc;
            if disc < 0.0 {
                continue;
            }
            let t = (-b - disc.sqrt()) / (2.0 * a);
            if t <= 0.0 {
                continue;
            }
            map.set(x, y, t);
            let n = (ray * t - c).normalize();
            normals[y * intr.width + x] = [n.x as f32, n.y as f32, n.z as f32];
        }
    }
    map.normal = Some(normals);
    map
}

pub fn ring(n: usize, rng: &mut ChaCha8Rng) -> Vec<Keyframe> {
    let intr = Intrinsics::new(600.0, 600.0, 319.5, 239.5, 640, 480).unwrap();
    (0..n)
        .map(|k| {
            let a = (-60.0 + 120.0 * k as f64 / (n - 1) as f64 + rng.random_range(-5.0..5.0)).to_radians();
            let r = rng.random_range(3.5..4.5);
            let eye = Vector3::new(r * a.sin(), rng.random_range(-0.8..0.8), -r * a.cos());
            let target = Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
            Keyframe::blank(k as u32, look_at(eye, target), intr)
        })
        .collect()
}

/// Pinhole projection written out independently of the library.
pub fn pixel(kf: &Keyframe, x: &Vector3<f64>) -> Vector2<f64> {
    let r = kf.pose.rotation;
    let t = kf.pose.translation;
    let c = [0, 1, 2].map(|i| r[(i, 0)] * x.x + r[(i, 1)] * x.y + r[(i, 2)] * x.z + t[i]);
    let i = &kf.intrinsics;
    Vector2::new(i.fx * c[0] / c[2] + i.cx, i.fy * c[1] / c[2] + i.cy)
}

pub fn observe(kfs: &[Keyframe], id: i64, x: &Vector3<f64>, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<LandmarkObservation> {
    let noise = Normal::new(0.0, sigma.max(1e-300)).unwrap();
    kfs.iter()
        .map(|k| {
            let mut p = pixel(k, x);
            if sigma > 0.0 {
                p += Vector2::new(noise.sample(rng), noise.sample(rng));
            }
            LandmarkObservation { frame_id: k.id, landmark_id: id, position: p, confidence: 1.0 }
        })
        .collect()
}

/// Successively refined 21^3 grid search on the plain squared reprojection
/// error.
pub fn grid_minimizer(kfs: &[Keyframe], obs: &[LandmarkObservation], start: Vector3<f64>) -> Vector3<f64> {
    let cost = |x: &Vector3<f64>| -> f64 { obs.iter().map(|o| (pixel(&kfs[o.frame_id as usize], x) - o.position).norm_squared()).sum() };
    let mut center = start;
    let mut half = 0.05;
    while half > 1e-10 {
        let step = half / 10.0;
        let mut best = (cost(&center), center);
        for i in -10..=10 {
            for j in -10..=10 {
                for k in -10..=10 {
                    let p = center + Vector3::new(i as f64, j as f64, k as f64) * step;
                    let c = cost(&p);
                    if c < best.0 {
                        best = (c, p);
                    }
                }
            }
        }
        center = best.1;
        half *= 0.5;
    }
    center
}

pub fn two_sided_rms(a: &TriMesh, b: &TriMesh) -> f64 {
    let (ta, tb) = (MeshDistance::new(a).unwrap(), MeshDistance::new(b).unwrap());
    let da: Vec<f64> = a.vertices.iter().map(|p| tb.distance(p)).collect();
    let db: Vec<f64> = b.vertices.iter().map(|p| ta.distance(p)).collect();
    let s: f64 = da.iter().chain(&db).map(|d| d * d).sum();
    (s / (da.len() + db.len()) as f64).sqrt()
}

/// Area-uniform random samples of a mesh surface.
pub fn sample_surface(mesh: &TriMesh, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
    let areas: Vec<f64> = (0..mesh.faces.len())
        .map(|f| {
            let [a, b, c] = mesh.triangle(f);
            0.5 * (b - a).cross(&(c - a)).norm()
        })
        .collect();
    let total: f64 = areas.iter().sum();
    let mut cdf = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for a in &areas {
        acc += a / total;
        cdf.push(acc);
    }
    (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(0.0..1.0);
            let f = cdf.partition_point(|&c| c < u).min(areas.len() - 1);
            let [a, b, c] = mesh.triangle(f);
            let (mut s, mut t): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            if s + t > 1.0 {
                s = 1.0 - s;
                t = 1.0 - t;
            }
            a + (b - a) * s + (c - a) * t
        })
        .collect()
}

/// Distance from `p` to the ellipsoid with semi-axes `e` by Newton
/// iteration on the Lagrange multiplier of the closest-point problem.
pub fn ellipsoid_distance(p: &Vector3<f64>, e: &Vector3<f64>) -> f64 {
    let q = p.abs();
    let f = |t: f64| -> f64 { (0..3).map(|i| (e[i] * q[i] / (t + e[i] * e[i])).powi(2)).sum::<f64>() - 1.0 };
    let df = |t: f64| -> f64 { (0..3).map(|i| -2.0 * (e[i] * q[i]).powi(2) / (t + e[i] * e[i]).powi(3)).sum::<f64>() };
    let emin = e.min();
    let mut lo = -emin * emin + 1e-15;
    let mut hi = e.max() * q.norm() + 1.0;
    let mut t = 0.0f64.clamp(lo, hi);
    for _ in 0..200 {
        let v = f(t);
        if v > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let mut next = t - v / df(t);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-16 * (1.0 + t.abs()) {
            t = next;
            break;
        }
        t = next;
    }
    let x = Vector3::from_fn(|i, _| e[i] * e[i] * q[i] / (t + e[i] * e[i]));
    (x - q).norm()
}

/// Point-to-triangle distance by cases: inside the prism → plane distance,
/// otherwise the closest of the three edge segments.
pub fn brute_triangle(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let n = (b - a).cross(&(c - a));
    let nn = n.norm_squared();
    let inside = [(a, b), (b, c), (c, a)].iter().all(|(u, v)| (*v - *u).cross(&(p - *u)).dot(&n) >= 0.0);
    if inside && nn > 0.0 {
        return (p - a).dot(&n).abs() / nn.sqrt();
    }
    let seg = |u: &Vector3<f64>, v: &Vector3<f64>| {
        let d = v - u;
        let t = if d.norm_squared() > 0.0 { ((p - u).dot(&d) / d.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
        (p - (u + d * t)).norm()
    };
    seg(a, b).min(seg(b, c)).min(seg(c, a))
}

pub fn brute_distance(p: &Vector3<f64>, mesh: &TriMesh) -> f64 {
    (0..mesh.faces.len())
        .map(|f| {
            let [a, b, c] = mesh.triangle(f);
            brute_triangle(p, &a, &b, &c)
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn plane_scene() -> (TriMesh, Vec<Keyframe>) {
    let plane = facing_plane(4.0, PLANE_Z, 8);
    let intr = Intrinsics::new(150.0, 150.0, 80.0, 60.0, 160, 120).unwrap();
    let shading = Shading { texture_scale: 0.1, light_dir: Vector3::new(0.0, 0.0, -1.0), ..Default::default() };
    let eyes = [
        Vector3::zeros(),
        Vector3::new(0.5, 0.0, 0.0),
        Vector3::new(-0.5, 0.0, 0.0),
        Vector3::new(0.0, 0.5, 0.0),
        Vector3::new(0.0, -0.5, 0.0),
    ];
    let kfs = eyes
        .iter()
        .enumerate()
        .map(|(i, e)| rendered_keyframe(i as u32, &plane, look_at(*e, e + Vector3::new(0.0, 0.0, PLANE_Z)), intr, &shading))
        .collect();
    (plane, kfs)
}

pub fn sphere_views(n: usize, size: usize, f: f64) -> Vec<Keyframe> {
    let intr = Intrinsics::new(f, f, size as f64 / 2.0 - 0.5, size as f64 / 2.0 - 0.5, size, size).unwrap();
    (0..n)
        .map(|k| {
            let a = (-20.0 + 40.0 * k as f64 / (n - 1).max(1) as f64).to_radians();
            let eye = Vector3::new(4.0 * a.sin(), 0.3 * k as f64 - 0.6, -4.0 * a.cos());
            Keyframe::blank(k as u32, look_at(eye, Vector3::zeros()), intr)
        })
        .collect()
}
