use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

/// Tolerance on the length of a stored normal.
pub const UNIT_NORMAL_TOLERANCE: f64 = 1e-6;

/// Surface samples paired with unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientedPointCloud {
    points: Vec<Point3<f64>>,
    normals: Vec<Vector3<f64>>,
}

impl OrientedPointCloud {
    pub fn new(points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::invalid(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        if let Some(i) = normals
            .iter()
            .position(|n| !((n.norm() - 1.0).abs() <= UNIT_NORMAL_TOLERANCE))
        {
            return Err(Error::invalid(format!(
                "normal {i} has length {} (expected unit length)",
                normals[i].norm()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("point {i} is not finite")));
        }
        Ok(Self { points, normals })
    }

    /// Normalizes each normal; zero-length normals are an error.
    pub fn with_unnormalized(points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        let normals = normals
            .into_iter()
            .enumerate()
            .map(|(i, n)| {
                n.try_normalize(0.0)
                    .ok_or_else(|| Error::invalid(format!("normal {i} has zero length")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points, normals)
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the first point outside the closed cube `[-bound, bound]^3`.
    pub fn first_outside(&self, bound: f64) -> Option<usize> {
        self.points
            .iter()
            .position(|p| p.iter().any(|c| c.abs() > bound))
    }

    /// Concatenation of two clouds, `self` first.
    pub fn concat(&self, other: &Self) -> Self {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let mut normals = self.normals.clone();
        normals.extend_from_slice(&other.normals);
        Self { points, normals }
    }
}
