use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CloudError {
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("ground mask has {mask} entries for {points} points")]
    MaskLength { mask: usize, points: usize },
}

/// Which sensor captured a cloud, and when.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameId {
    pub sensor: String,
    pub k: u64,
}

/// Points in the capturing sensor's frame, with an optional ground label per point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub frame: FrameId,
    points: Vec<Vec3>,
    ground: Option<Vec<bool>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self, CloudError> {
        Self::with_ground(points, None)
    }

    pub fn with_ground(points: Vec<Vec3>, ground: Option<Vec<bool>>) -> Result<Self, CloudError> {
        if let Some(index) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(CloudError::NonFinite { index });
        }
        if let Some(mask) = &ground {
            if mask.len() != points.len() {
                return Err(CloudError::MaskLength {
                    mask: mask.len(),
                    points: points.len(),
                });
            }
        }
        Ok(Self {
            frame: FrameId::default(),
            points,
            ground,
        })
    }

    pub fn in_frame(mut self, sensor: impl Into<String>, k: u64) -> Self {
        self.frame = FrameId {
            sensor: sensor.into(),
            k,
        };
        self
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn ground_mask(&self) -> Option<&[bool]> {
        self.ground.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Ground-labeled points; every point when the cloud carries no labels.
    pub fn ground_points(&self) -> Vec<Vec3> {
        match &self.ground {
            Some(mask) => self
                .points
                .iter()
                .zip(mask)
                .filter(|(_, g)| **g)
                .map(|(p, _)| *p)
                .collect(),
            None => self.points.clone(),
        }
    }

    pub fn transformed(&self, pose: &Pose) -> Vec<Vec3> {
        self.points
            .iter()
            .map(|p| pose.transform_point(p))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            PointCloud::new(vec![Vec3::zeros(), Vec3::new(f64::NAN, 0.0, 0.0)]),
            Err(CloudError::NonFinite { index: 1 })
        );
        assert_eq!(
            PointCloud::with_ground(vec![Vec3::zeros()], Some(vec![true, false])),
            Err(CloudError::MaskLength { mask: 2, points: 1 })
        );
    }

    #[test]
    fn empty_cloud_is_valid() {
        let c = PointCloud::new(vec![]).unwrap();
        assert!(c.is_empty());
        assert!(c.ground_points().is_empty());
    }

    #[test]
    fn ground_points_follow_mask() {
        let c = PointCloud::with_ground(
            vec![Vec3::x(), Vec3::y(), Vec3::z()],
            Some(vec![true, false, true]),
        )
        .unwrap();
        assert_eq!(c.ground_points(), vec![Vec3::x(), Vec3::z()]);
    }
}
