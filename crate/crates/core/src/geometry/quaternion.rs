use nalgebra::{Quaternion as NaQuaternion, Rotation3, UnitQuaternion};

use super::Rotation;

/// Unit quaternion, Hamilton convention. Serialized as `[qx, qy, qz, qw]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion(UnitQuaternion<f64>);

impl Quaternion {
    pub fn identity() -> Self {
        Quaternion(UnitQuaternion::identity())
    }

    /// Normalizes the input; `[0, 0, 0, 0]` yields `None`.
    pub fn from_xyzw(q: [f64; 4]) -> Option<Self> {
        let raw = NaQuaternion::new(q[3], q[0], q[1], q[2]);
        let n = raw.norm();
        if !n.is_finite() || n < 1e-12 {
            return None;
        }
        Some(Quaternion(UnitQuaternion::new_unchecked(raw / n)))
    }

    pub fn to_xyzw(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.i, q.j, q.k, q.w]
    }

    /// Representative with non-negative scalar part.
    pub fn canonical(&self) -> Self {
        if self.0.w < 0.0 {
            Quaternion(UnitQuaternion::new_unchecked(-self.0.into_inner()))
        } else {
            *self
        }
    }

    pub fn from_rotation(r: &Rotation) -> Self {
        let rot = Rotation3::from_matrix_unchecked(*r.matrix());
        Quaternion(UnitQuaternion::from_rotation_matrix(&rot)).canonical()
    }

    pub fn to_rotation(&self) -> Rotation {
        Rotation::from_matrix_unchecked(*self.0.to_rotation_matrix().matrix())
    }

    pub fn inner(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn from_inner(q: UnitQuaternion<f64>) -> Self {
        Quaternion(q)
    }
}
