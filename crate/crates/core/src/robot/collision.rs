//! Sphere cover of the robot, self-collision residuals and padded halfplane
//! constraints against convex polytopes.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::chain::{KinematicChain, Kinematics, RobotState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereSpec {
    pub link: usize,
    #[serde(default)]
    pub offset: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
}

/// Spheres attached to links. Self-collision checks run over `pairs` when
/// given, otherwise over every pair on different links minus `exclude`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereCover {
    pub spheres: Vec<SphereSpec>,
    #[serde(default)]
    pub exclude: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<[usize; 2]>>,
}

impl SphereCover {
    pub fn validate(&self, chain: &KinematicChain) -> Result<()> {
        for (i, s) in self.spheres.iter().enumerate() {
            if s.link >= chain.link_count() {
                return Err(Error::config(format!(
                    "spheres[{i}].link = {} out of range (chain has {} links)",
                    s.link,
                    chain.link_count()
                )));
            }
            if !(s.radius > 0.0) {
                return Err(Error::config(format!("spheres[{i}].radius must be > 0")));
            }
        }
        let n = self.spheres.len();
        let all = self.exclude.iter().chain(self.pairs.iter().flatten());
        for [a, b] in all {
            if *a >= n || *b >= n || a == b {
                return Err(Error::config(format!("sphere pair [{a}, {b}] is invalid")));
            }
        }
        Ok(())
    }

    /// Index pairs subject to the self-collision constraint.
    pub fn collision_pairs(&self) -> Vec<[usize; 2]> {
        if let Some(pairs) = &self.pairs {
            return pairs
                .iter()
                .filter(|p| !self.is_excluded(p[0], p[1]))
                .copied()
                .collect();
        }
        let n = self.spheres.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.spheres[i].link != self.spheres[j].link && !self.is_excluded(i, j) {
                    out.push([i, j]);
                }
            }
        }
        out
    }

    fn is_excluded(&self, i: usize, j: usize) -> bool {
        self.exclude
            .iter()
            .any(|&[a, b]| (a == i && b == j) || (a == j && b == i))
    }

    pub fn spheres_from(&self, fk: &Kinematics) -> Vec<Sphere> {
        self.spheres
            .iter()
            .map(|s| Sphere {
                center: fk.links[s.link].apply(&Vector3::from(s.offset)),
                radius: s.radius,
            })
            .collect()
    }
}

/// World-frame spheres at `state`.
pub fn sphere_positions(chain: &KinematicChain, cover: &SphereCover, state: &RobotState) -> Result<Vec<Sphere>> {
    cover.validate(chain)?;
    Ok(cover.spheres_from(&chain.forward(state)))
}

/// `|p_i - p_j| - (r_i + r_j)` per pair; non-negative means separated.
pub fn self_collision_residuals(spheres: &[Sphere], pairs: &[[usize; 2]]) -> Vec<f64> {
    pairs
        .iter()
        .map(|&[i, j]| {
            (spheres[i].center - spheres[j].center).norm() - (spheres[i].radius + spheres[j].radius)
        })
        .collect()
}

/// Convex polytope `{p : A (p - c) <= b}` with unit-norm rows and `c` strictly
/// inside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolytopeObstacle {
    pub a: Vec<[f64; 3]>,
    pub b: Vec<f64>,
    pub c: [f64; 3],
}

impl PolytopeObstacle {
    pub fn new(a: Vec<[f64; 3]>, b: Vec<f64>, c: [f64; 3]) -> Result<Self> {
        let p = Self { a, b, c };
        p.validate()?;
        Ok(p)
    }

    /// Axis-aligned box as a six-facet polytope.
    pub fn from_box(center: [f64; 3], half_extents: [f64; 3]) -> Result<Self> {
        let mut a = Vec::with_capacity(6);
        let mut b = Vec::with_capacity(6);
        for axis in 0..3 {
            for sign in [1.0, -1.0] {
                let mut row = [0.0; 3];
                row[axis] = sign;
                a.push(row);
                b.push(half_extents[axis]);
            }
        }
        Self::new(a, b, center)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.is_empty() || self.a.len() != self.b.len() {
            return Err(Error::config("polytope needs matching, non-empty A rows and b"));
        }
        for (j, row) in self.a.iter().enumerate() {
            let n = Vector3::from(*row).norm();
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::config(format!("polytope row {j} is not unit norm")));
            }
        }
        if self.b.iter().any(|&bj| !(bj > 0.0)) {
            return Err(Error::config("polytope b must be > 0 (centre strictly inside)"));
        }
        if !self.is_bounded() {
            return Err(Error::config("polytope is unbounded"));
        }
        Ok(())
    }

    /// Every direction must leave through some facet. Checked on a dense
    /// Fibonacci sphere of directions.
    fn is_bounded(&self) -> bool {
        let n = 2000;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        (0..n).all(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let t = golden * k as f64;
            let d = Vector3::new(r * t.cos(), r * t.sin(), z);
            self.a.iter().any(|row| Vector3::from(*row).dot(&d) > 1e-9)
        })
    }

    pub fn row(&self, j: usize) -> Vector3<f64> {
        Vector3::from(self.a[j])
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::from(self.c)
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let d = p - self.center();
        self.a
            .iter()
            .zip(&self.b)
            .all(|(row, &bj)| Vector3::from(*row).dot(&d) <= bj)
    }

    /// Facet hit by the ray from the centre through `p`: the row with the
    /// smallest positive step `b_j / A_j (p - c)`, ties to the lower index.
    pub fn facet_index(&self, p: &Vector3<f64>) -> Result<usize> {
        let d = p - self.center();
        let mut best: Option<(usize, f64)> = None;
        for (j, (row, &bj)) in self.a.iter().zip(&self.b).enumerate() {
            let denom = Vector3::from(*row).dot(&d);
            if denom > 0.0 {
                let gamma = bj / denom;
                if best.is_none_or(|(_, g)| gamma < g) {
                    best = Some((j, gamma));
                }
            }
        }
        best.map(|(j, _)| j).ok_or_else(|| {
            Error::Geometry("no facet faces the query point (point at the polytope centre?)".into())
        })
    }

    /// `A_j* (p - c) - b_j* - r`; non-negative means the sphere is clear.
    pub fn residual(&self, sphere: &Sphere) -> Result<f64> {
        let j = self.facet_index(&sphere.center)?;
        Ok(self.residual_on_facet(j, sphere))
    }

    pub(crate) fn residual_on_facet(&self, j: usize, sphere: &Sphere) -> f64 {
        self.row(j).dot(&(sphere.center - self.center())) - self.b[j] - sphere.radius
    }
}

pub fn facet_index(obstacle: &PolytopeObstacle, p: &Vector3<f64>) -> Result<usize> {
    obstacle.facet_index(p)
}

pub fn obstacle_residual(obstacle: &PolytopeObstacle, sphere: &Sphere) -> Result<f64> {
    obstacle.residual(sphere)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cube() -> PolytopeObstacle {
        PolytopeObstacle::from_box([0.0; 3], [0.5; 3]).unwrap()
    }

    /// Facet crossed by the segment from the centre, found by checking which
    /// facet plane intersection lies on the polytope.
    fn brute_force_facet(o: &PolytopeObstacle, p: &Vector3<f64>) -> usize {
        let c = o.center();
        let d = p - c;
        let mut candidates = Vec::new();
        for j in 0..o.a.len() {
            let denom = o.row(j).dot(&d);
            if denom <= 0.0 {
                continue;
            }
            let hit = c + d * (o.b[j] / denom);
            let inside = (0..o.a.len()).all(|k| o.row(k).dot(&(hit - c)) <= o.b[k] + 1e-12);
            if inside {
                candidates.push(j);
            }
        }
        candidates[0]
    }

    #[test]
    fn facet_examples() {
        let o = cube();
        assert_eq!(o.facet_index(&Vector3::new(2.0, 0.1, 0.0)).unwrap(), 0);
        assert_eq!(brute_force_facet(&o, &Vector3::new(2.0, 0.1, 0.0)), 0);
        assert_eq!(o.facet_index(&Vector3::new(0.7, 0.0, 0.0)).unwrap(), 0);
        let eps = 1e-3;
        // +x (row 0) and +y (row 2) tie
        assert_eq!(o.facet_index(&Vector3::new(0.5 + eps, 0.5 + eps, 0.0)).unwrap(), 0);
        assert_eq!(o.facet_index(&Vector3::new(-0.2, 0.0, -3.0)).unwrap(), 5);
    }

    #[test]
    fn facet_at_center_is_geometry_error() {
        assert!(matches!(cube().facet_index(&Vector3::zeros()), Err(Error::Geometry(_))));
    }

    #[test]
    fn residual_examples() {
        let o = cube();
        let s = Sphere { center: Vector3::new(1.0, 0.0, 0.0), radius: 0.2 };
        assert_relative_eq!(o.residual(&s).unwrap(), 0.3, epsilon = 1e-12);
        let inside = Sphere { center: Vector3::new(0.1, 0.2, -0.1), radius: 0.05 };
        assert!(o.residual(&inside).unwrap() < 0.0);
        let on_face = Sphere { center: Vector3::new(0.5, 0.1, 0.2), radius: 0.0 };
        assert_eq!(o.residual(&on_face).unwrap(), 0.0);
    }

    #[test]
    fn self_collision_examples() {
        let a = Sphere { center: Vector3::zeros(), radius: 0.1 };
        let b = Sphere { center: Vector3::zeros(), radius: 0.1 };
        let c = Sphere { center: Vector3::new(1.0, 0.0, 0.0), radius: 0.1 };
        let r = self_collision_residuals(&[a, b, c], &[[0, 1], [0, 2]]);
        assert_relative_eq!(r[0], -0.2);
        assert_relative_eq!(r[1], 0.8);
    }

    #[test]
    fn excluded_pairs_not_emitted() {
        let cover = SphereCover {
            spheres: vec![
                SphereSpec { link: 0, offset: [0.0; 3], radius: 0.1 },
                SphereSpec { link: 1, offset: [0.0; 3], radius: 0.1 },
                SphereSpec { link: 2, offset: [0.0; 3], radius: 0.1 },
                SphereSpec { link: 2, offset: [0.1, 0.0, 0.0], radius: 0.1 },
            ],
            exclude: vec![[1, 0]],
            pairs: None,
        };
        let pairs = cover.collision_pairs();
        assert!(!pairs.contains(&[0, 1]));
        assert!(!pairs.contains(&[2, 3]), "same-link pair");
        assert_eq!(pairs, vec![[0, 2], [0, 3], [1, 2], [1, 3]]);
    }

    #[test]
    fn invalid_polytopes_rejected() {
        assert!(PolytopeObstacle::new(vec![[2.0, 0.0, 0.0]], vec![1.0], [0.0; 3]).is_err());
        assert!(PolytopeObstacle::from_box([0.0; 3], [0.5, 0.0, 0.5]).is_err());
        // half-space only
        assert!(PolytopeObstacle::new(vec![[1.0, 0.0, 0.0]], vec![1.0], [0.0; 3]).is_err());
    }
}
