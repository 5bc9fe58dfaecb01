use nalgebra::SMatrix;

use super::{BasisValues, PoseWithDerivatives, SplineError};
use crate::geometry::{
    hat, se3_exp, se3_left_jacobian_inv, se3_log, se3_right_jacobian, se3_right_jacobian_inv,
    skew, vee, Mat3, Mat4, Pose, Twist, Vec3, Vec6,
};

pub type Mat9x6 = SMatrix<f64, 9, 6>;

/// Control poses `i-1 ..= i+2` of one segment and the three incremental
/// twists between them. Twists are recomputed from the poses each time a
/// segment is built.
#[derive(Debug, Clone)]
pub struct Segment {
    pub index: i64,
    pub poses: [Pose; 4],
    twists: [Twist; 3],
    hats: [Mat4; 3],
}

/// Body-frame kinematics at one time and their derivatives with respect to
/// right-multiplied local increments `T_k ← T_k · exp(δ_k)` of the four
/// supporting control poses. Rows are `[v_v; ω_v; a_v]`, columns
/// `[rotation; translation]`.
#[derive(Debug, Clone)]
pub struct KinematicsJacobian {
    pub segment: i64,
    pub v_v: Vec3,
    pub omega_v: Vec3,
    pub a_v: Vec3,
    pub d_pose: [Mat9x6; 4],
}

/// Factor values `A`, `Ȧ`, `Ä` for each of the three exponentials.
struct Factors {
    a: [[Mat4; 3]; 3],
}

impl Factors {
    /// `order[j]` selects A (0), Ȧ (1), or Ä (2) for factor `j`.
    fn product(&self, order: [usize; 3]) -> Mat4 {
        self.a[0][order[0]] * self.a[1][order[1]] * self.a[2][order[2]]
    }
}

const D0: [[usize; 3]; 1] = [[0, 0, 0]];
const D1: [[usize; 3]; 3] = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];
const D2_SINGLE: [[usize; 3]; 3] = [[2, 0, 0], [0, 2, 0], [0, 0, 2]];
const D2_CROSS: [[usize; 3]; 3] = [[1, 1, 0], [1, 0, 1], [0, 1, 1]];

impl Segment {
    pub fn new(index: i64, poses: [Pose; 4]) -> Result<Self, SplineError> {
        let mut twists = [Twist::zero(); 3];
        for j in 0..3 {
            twists[j] = se3_log(&(poses[j].inverse() * poses[j + 1]))?;
        }
        let hats = twists.map(|w| hat(&w.to_vector()));
        Ok(Segment {
            index,
            poses,
            twists,
            hats,
        })
    }

    pub fn twists(&self) -> &[Twist; 3] {
        &self.twists
    }

    fn factors(&self, basis: &BasisValues) -> Factors {
        let mut a = [[Mat4::zeros(); 3]; 3];
        for j in 0..3 {
            let (b, db, ddb) = (basis.b[j + 1], basis.db[j + 1], basis.ddb[j + 1]);
            let aj = se3_exp(&self.twists[j].scaled(b)).matrix();
            let h = &self.hats[j];
            let daj = aj * h * db;
            let ddaj = daj * h * db + aj * h * ddb;
            a[j] = [aj, daj, ddaj];
        }
        Factors { a }
    }

    pub fn pose(&self, basis: &BasisValues) -> Pose {
        let mut p = self.poses[0];
        for j in 0..3 {
            p = p * se3_exp(&self.twists[j].scaled(basis.b[j + 1]));
        }
        p
    }

    pub fn derivatives(&self, basis: &BasisValues) -> PoseWithDerivatives {
        let f = self.factors(basis);
        let (_, dm, ddm) = relative_products(&f);
        let base = self.poses[0].matrix();
        PoseWithDerivatives {
            pose: self.pose(basis),
            d_pose: base * dm,
            dd_pose: base * ddm,
        }
    }

    /// Body kinematics and their Jacobians with respect to the four control poses.
    pub fn kinematics_jacobian(&self, basis: &BasisValues, gravity_w: &Vec3) -> KinematicsJacobian {
        let f = self.factors(basis);
        let (m, dm, ddm) = relative_products(&f);

        // P0's rotation cancels in v_v and ω_v; it only enters a_v through gravity.
        let r0 = self.poses[0].rotation.matrix();
        let g_local = r0.transpose() * gravity_w;
        let rm: Mat3 = m.fixed_view::<3, 3>(0, 0).into_owned();
        let rmt = rm.transpose();
        let drm: Mat3 = dm.fixed_view::<3, 3>(0, 0).into_owned();
        let dtm: Vec3 = dm.fixed_view::<3, 1>(0, 3).into_owned();
        let ddtm: Vec3 = ddm.fixed_view::<3, 1>(0, 3).into_owned();

        let v_v = rmt * dtm;
        let omega_v = vee(&(rmt * drm));
        let a_v = rmt * (ddtm + g_local);

        let outputs = |dmm: &Mat4, ddmm: &Mat4, dddmm: &Mat4| -> [Vec3; 3] {
            let d_r: Mat3 = dmm.fixed_view::<3, 3>(0, 0).into_owned();
            let d_dr: Mat3 = ddmm.fixed_view::<3, 3>(0, 0).into_owned();
            let d_dt: Vec3 = ddmm.fixed_view::<3, 1>(0, 3).into_owned();
            let d_ddt: Vec3 = dddmm.fixed_view::<3, 1>(0, 3).into_owned();
            let d_rt = d_r.transpose();
            [
                d_rt * dtm + rmt * d_dt,
                vee(&(d_rt * drm + rmt * d_dr)),
                d_rt * (ddtm + g_local) + rmt * d_ddt,
            ]
        };

        // Sensitivities with respect to each twist Ω_j.
        let mut k_twist = [Mat9x6::zeros(); 3];
        for j in 0..3 {
            let (b, db, ddb) = (basis.b[j + 1], basis.db[j + 1], basis.ddb[j + 1]);
            let jr = se3_right_jacobian(&self.twists[j].scaled(b));
            let [aj, daj, _] = f.a[j];
            let h = &self.hats[j];
            for c in 0..6 {
                let e = Vec6::from_fn(|r, _| if r == c { 1.0 } else { 0.0 });
                let de = hat(&e);
                let d_a = aj * hat(&(jr * e * b));
                let d_da = d_a * h * db + aj * de * db;
                let d_dda = d_da * h * db + daj * de * db + d_a * h * ddb + aj * de * ddb;
                let dvar = [d_a, d_da, d_dda];
                let prod = |order: [usize; 3]| -> Mat4 {
                    let pick = |k: usize| {
                        if k == j {
                            dvar[order[k]]
                        } else {
                            f.a[k][order[k]]
                        }
                    };
                    pick(0) * pick(1) * pick(2)
                };
                let d_m = prod(D0[0]);
                let d_dm = D1.iter().fold(Mat4::zeros(), |s, o| s + prod(*o));
                let d_ddm = D2_SINGLE.iter().fold(Mat4::zeros(), |s, o| s + prod(*o))
                    + 2.0 * D2_CROSS.iter().fold(Mat4::zeros(), |s, o| s + prod(*o));
                let out = outputs(&d_m, &d_dm, &d_ddm);
                for (blk, v) in out.iter().enumerate() {
                    k_twist[j]
                        .fixed_view_mut::<3, 1>(3 * blk, c)
                        .copy_from(v);
                }
            }
        }

        // Direct dependence on the base pose: R0ᵀg ← exp(−φ)R0ᵀg.
        let mut k_base = Mat9x6::zeros();
        k_base
            .fixed_view_mut::<3, 3>(6, 0)
            .copy_from(&(rmt * skew(&g_local)));

        let mut d_pose = [Mat9x6::zeros(); 4];
        d_pose[0] = k_base;
        for j in 0..3 {
            // Ω = log(P_j⁻¹·P_{j+1}): the left pose enters through −Jl⁻¹, the right one through Jr⁻¹.
            let jl_inv = se3_left_jacobian_inv(&self.twists[j]);
            let jr_inv = se3_right_jacobian_inv(&self.twists[j]);
            d_pose[j] -= k_twist[j] * jl_inv;
            d_pose[j + 1] += k_twist[j] * jr_inv;
        }

        KinematicsJacobian {
            segment: self.index,
            v_v,
            omega_v,
            a_v,
            d_pose,
        }
    }
}

fn relative_products(f: &Factors) -> (Mat4, Mat4, Mat4) {
    let m = f.product(D0[0]);
    let dm = D1.iter().fold(Mat4::zeros(), |s, o| s + f.product(*o));
    let ddm = D2_SINGLE.iter().fold(Mat4::zeros(), |s, o| s + f.product(*o))
        + 2.0 * D2_CROSS.iter().fold(Mat4::zeros(), |s, o| s + f.product(*o));
    (m, dm, ddm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{se3_exp, Twist};
    use crate::spline::basis;

    fn segment() -> Segment {
        let twists = [
            Twist::new(Vec3::new(0.1, -0.2, 0.3), Vec3::new(1.0, 0.2, -0.1)),
            Twist::new(Vec3::new(-0.3, 0.1, 0.2), Vec3::new(0.8, -0.5, 0.3)),
            Twist::new(Vec3::new(0.2, 0.25, -0.1), Vec3::new(1.2, 0.1, 0.4)),
        ];
        let mut poses = [se3_exp(&Twist::new(Vec3::new(0.5, -0.4, 1.0), Vec3::new(3.0, -2.0, 1.0))); 4];
        for j in 0..3 {
            poses[j + 1] = poses[j] * se3_exp(&twists[j]);
        }
        Segment::new(0, poses).unwrap()
    }

    #[test]
    fn jacobian_values_match_derivatives() {
        let seg = segment();
        let g = Vec3::new(0.0, 0.0, 9.80665);
        let b = basis(0.37, 0.2);
        let kj = seg.kinematics_jacobian(&b, &g);
        let d = seg.derivatives(&b);
        let r = d.pose.rotation.matrix();
        let v = r.transpose() * d.d_pose.fixed_view::<3, 1>(0, 3);
        let w = vee(&(r.transpose() * d.d_pose.fixed_view::<3, 3>(0, 0)));
        let a = r.transpose() * (d.dd_pose.fixed_view::<3, 1>(0, 3) + g);
        assert!((v - kj.v_v).amax() < 1e-10);
        assert!((w - kj.omega_v).amax() < 1e-10);
        assert!((a - kj.a_v).amax() < 1e-9);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let seg = segment();
        let g = Vec3::new(0.0, 0.0, 9.80665);
        let h = 1e-6;
        for u in [0.0, 0.31, 0.77] {
            let b = basis(u, 0.2);
            let kj = seg.kinematics_jacobian(&b, &g);
            for k in 0..4 {
                for c in 0..6 {
                    let e = Vec6::from_fn(|r, _| if r == c { h } else { 0.0 });
                    let eval = |sign: f64| {
                        let mut poses = seg.poses;
                        poses[k] = poses[k] * se3_exp(&Twist::from_vector(&(e * sign)));
                        let out = Segment::new(0, poses).unwrap().kinematics_jacobian(&b, &g);
                        let mut v = nalgebra::SVector::<f64, 9>::zeros();
                        v.fixed_rows_mut::<3>(0).copy_from(&out.v_v);
                        v.fixed_rows_mut::<3>(3).copy_from(&out.omega_v);
                        v.fixed_rows_mut::<3>(6).copy_from(&out.a_v);
                        v
                    };
                    let numeric = (eval(1.0) - eval(-1.0)) / (2.0 * h);
                    let analytic = kj.d_pose[k].column(c);
                    let scale = 1.0 + numeric.amax();
                    assert!(
                        (numeric - analytic).amax() < 1e-5 * scale,
                        "pose {k} dir {c} u {u}: {numeric} vs {analytic}"
                    );
                }
            }
        }
    }
}
