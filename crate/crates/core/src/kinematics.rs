//! Joint angles from absolute segment orientations.
//!
//! World frame: X forward, Y left, Z up. Each segment's longitudinal axis is
//! its local −Z at the neutral pose (arm hanging, forearm in line with the
//! upper arm), so the neutral pose has all three IMU quaternions at identity.

use std::io::Write;
use std::ops::Mul;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Elevation below which shoulder azimuth is reported as undefined, deg.
pub const AZIMUTH_MIN_ELEVATION: f64 = 15.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("degenerate quaternion (norm {0:e})")]
    DegenerateQuaternion(f64),
    #[error("no repetitions found above {threshold}° lasting {min_dwell} s")]
    NoRepetitionsFound { threshold: f64, min_dwell: f64 },
    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    /// Rotation by `angle_deg` about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: [f64; 3], angle_deg: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let half = angle_deg.to_radians() / 2.0;
        let s = half.sin() / n;
        Quaternion::new(half.cos(), axis[0] * s, axis[1] * s, axis[2] * s)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Result<Self, KinematicsError> {
        let n = self.norm();
        if !(n >= 1e-6) || !n.is_finite() {
            return Err(KinematicsError::DegenerateQuaternion(n));
        }
        Ok(Quaternion::new(self.w / n, self.x / n, self.y / n, self.z / n))
    }

    pub fn conjugate(&self) -> Self {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        quat_to_rotmat_unchecked(self).mul_vec(v)
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    /// Hamilton product; `a * b` applies `b` first.
    fn mul(self, b: Quaternion) -> Quaternion {
        let a = self;
        Quaternion::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn mul_vec(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

impl Mul for Mat3 {
    type Output = Mat3;

    fn mul(self, b: Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * b.0[k][j]).sum();
            }
        }
        Mat3(out)
    }
}

fn quat_to_rotmat_unchecked(q: &Quaternion) -> Mat3 {
    let Quaternion { w, x, y, z } = *q;
    Mat3([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])
}

/// Rotation matrix of `q` after re-normalization.
pub fn quat_to_rotmat(q: Quaternion) -> Result<Mat3, KinematicsError> {
    Ok(quat_to_rotmat_unchecked(&q.normalized()?))
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn acos_deg(c: f64) -> f64 {
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Segment longitudinal axis in world coordinates.
pub fn longitudinal_axis(q: Quaternion) -> Result<[f64; 3], KinematicsError> {
    Ok(quat_to_rotmat(q)?.mul_vec([0.0, 0.0, -1.0]))
}

/// Angle between the upper-arm long axis and the downward vertical, deg.
pub fn shoulder_elevation(q_arm: Quaternion) -> Result<f64, KinematicsError> {
    let u = longitudinal_axis(q_arm)?;
    Ok(acos_deg(-u[2]))
}

/// Side carrying the exosuit and the instrumented arm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[default]
    Right,
    Left,
}

impl Side {
    /// Unit lateral direction (toward this side) in a body frame with Y left.
    pub fn lateral_sign(self) -> f64 {
        match self {
            Side::Right => -1.0,
            Side::Left => 1.0,
        }
    }
}

/// Transverse-plane direction of the upper arm relative to the torso, deg:
/// 0° forward, +90° lateral toward `side`. `None` below
/// [`AZIMUTH_MIN_ELEVATION`], where the projection degenerates.
pub fn shoulder_azimuth(
    q_torso: Quaternion,
    q_arm: Quaternion,
    sel_deg: f64,
    side: Side,
) -> Option<f64> {
    if sel_deg < AZIMUTH_MIN_ELEVATION {
        return None;
    }
    let r_torso = quat_to_rotmat(q_torso).ok()?;
    let u_world = longitudinal_axis(q_arm).ok()?;
    let u = r_torso.transpose().mul_vec(u_world);
    if u[0].hypot(u[1]) < 1e-9 {
        return None;
    }
    let mut a = (side.lateral_sign() * u[1]).atan2(u[0]).to_degrees();
    if a <= -180.0 {
        a += 360.0;
    }
    Some(a)
}

/// Angle between upper-arm and forearm long axes, deg (0 = extended).
pub fn elbow_flexion(q_arm: Quaternion, q_forearm: Quaternion) -> Result<f64, KinematicsError> {
    Ok(acos_deg(dot(longitudinal_axis(q_arm)?, longitudinal_axis(q_forearm)?)))
}

/// Heading of the torso forward axis about world Z, deg in (−180, 180].
pub fn torso_yaw(q_torso: Quaternion) -> Result<f64, KinematicsError> {
    let f = quat_to_rotmat(q_torso)?.mul_vec([1.0, 0.0, 0.0]);
    Ok(f[1].atan2(f[0]).to_degrees())
}

pub fn wrap_deg(a: f64) -> f64 {
    let mut a = (a + 180.0).rem_euclid(360.0) - 180.0;
    if a <= -180.0 {
        a += 360.0;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAngles {
    pub sel: f64,
    pub saz: Option<f64>,
    pub efe: f64,
}

pub fn joint_angles(
    q_torso: Quaternion,
    q_arm: Quaternion,
    q_forearm: Quaternion,
    side: Side,
) -> Result<JointAngles, KinematicsError> {
    let sel = shoulder_elevation(q_arm)?;
    let saz = shoulder_azimuth(q_torso, q_arm, sel, side);
    let efe = elbow_flexion(q_arm, q_forearm)?;
    Ok(JointAngles { sel, saz, efe })
}

/// One row of the per-trial angle table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleSample {
    pub t_s: f64,
    pub sel: f64,
    pub saz: Option<f64>,
    pub efe: f64,
    /// Torso torsion: yaw relative to the first sample of the trial.
    pub tto: f64,
}

/// Converts a timed quaternion triplet series into angle samples. Torso
/// torsion is referenced to the first sample.
pub fn angle_series(
    samples: impl IntoIterator<Item = (f64, [Quaternion; 3])>,
    side: Side,
) -> Result<Vec<AngleSample>, KinematicsError> {
    let mut yaw0 = None;
    let mut out = Vec::new();
    for (t_s, [qt, qa, qf]) in samples {
        let ja = joint_angles(qt, qa, qf, side)?;
        let yaw = torso_yaw(qt)?;
        let y0 = *yaw0.get_or_insert(yaw);
        out.push(AngleSample { t_s, sel: ja.sel, saz: ja.saz, efe: ja.efe, tto: wrap_deg(yaw - y0) });
    }
    Ok(out)
}

/// Writes `t_s, sEL_deg, sAZ_deg, eFE_deg, tTO_deg`, with `NaN` for undefined azimuth.
pub fn write_angle_csv<W: Write>(mut w: W, samples: &[AngleSample]) -> std::io::Result<()> {
    writeln!(w, "t_s,sEL_deg,sAZ_deg,eFE_deg,tTO_deg")?;
    for s in samples {
        let saz = s.saz.map_or_else(|| "NaN".to_string(), |a| format!("{a:.4}"));
        writeln!(w, "{:.3},{:.4},{},{:.4},{:.4}", s.t_s, s.sel, saz, s.efe, s.tto)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Repetition segmentation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    /// deg
    pub onset_threshold: f64,
    /// s
    pub min_dwell: f64,
}

impl Default for Segmentation {
    fn default() -> Self {
        Segmentation { onset_threshold: 10.0, min_dwell: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    /// First and last sample index, inclusive.
    pub start: usize,
    pub end: usize,
    pub min: f64,
    pub max: f64,
    pub rom: f64,
}

/// Detects excursions above the onset threshold that last at least
/// `min_dwell`, widens each to the bounding troughs, and reports max − min.
pub fn segment_rom(
    series: &[f64],
    dt: f64,
    seg: Segmentation,
) -> Result<Vec<Repetition>, KinematicsError> {
    if !(dt > 0.0) {
        return Err(KinematicsError::InvalidSegmentation(format!("dt must be > 0, got {dt}")));
    }
    let min_len = (seg.min_dwell / dt).ceil().max(1.0) as usize;
    let mut runs = Vec::new();
    let mut i = 0;
    while i < series.len() {
        if series[i] > seg.onset_threshold {
            let s = i;
            while i < series.len() && series[i] > seg.onset_threshold {
                i += 1;
            }
            if i - s >= min_len {
                runs.push((s, i - 1));
            }
        } else {
            i += 1;
        }
    }
    if runs.is_empty() {
        return Err(KinematicsError::NoRepetitionsFound {
            threshold: seg.onset_threshold,
            min_dwell: seg.min_dwell,
        });
    }
    let mut reps = Vec::with_capacity(runs.len());
    let mut floor = 0usize;
    for (k, &(s, e)) in runs.iter().enumerate() {
        let ceiling = runs.get(k + 1).map_or(series.len() - 1, |r| r.0);
        let mut start = s;
        while start > floor && series[start - 1] < series[start] {
            start -= 1;
        }
        let mut end = e;
        while end < ceiling && series[end + 1] < series[end] {
            end += 1;
        }
        let window = &series[start..=end];
        let max = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = window.iter().copied().fold(f64::INFINITY, f64::min);
        reps.push(Repetition { start, end, min, max, rom: max - min });
        floor = end;
    }
    Ok(reps)
}

#[cfg(test)]
mod tests {
    use super::*;

    const X: [f64; 3] = [1.0, 0.0, 0.0];
    const Y: [f64; 3] = [0.0, 1.0, 0.0];
    const Z: [f64; 3] = [0.0, 0.0, 1.0];

    fn close3(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn identity_rotmat() {
        assert_eq!(quat_to_rotmat(Quaternion::IDENTITY).unwrap(), Mat3::IDENTITY);
    }

    #[test]
    fn ninety_about_x() {
        let r = quat_to_rotmat(Quaternion::from_axis_angle(X, 90.0)).unwrap();
        assert!(close3(r.mul_vec(Y), Z, 1e-9));
        assert!(close3(r.mul_vec(Z), [0.0, -1.0, 0.0], 1e-9));
    }

    #[test]
    fn degenerate_quaternion() {
        assert!(matches!(
            quat_to_rotmat(Quaternion::new(0.0, 0.0, 0.0, 1e-9)),
            Err(KinematicsError::DegenerateQuaternion(_))
        ));
    }

    #[test]
    fn elevation_examples() {
        assert!(shoulder_elevation(Quaternion::IDENTITY).unwrap().abs() < 1e-9);
        // abduction: rotate about the forward axis; flexion: about the lateral axis
        assert!((shoulder_elevation(Quaternion::from_axis_angle(X, 90.0)).unwrap() - 90.0).abs() < 1e-9);
        assert!((shoulder_elevation(Quaternion::from_axis_angle(Y, -90.0)).unwrap() - 90.0).abs() < 1e-9);
        assert!((shoulder_elevation(Quaternion::from_axis_angle(X, 45.0)).unwrap() - 45.0).abs() < 1e-6);
    }

    #[test]
    fn azimuth_anchors() {
        // flexion to horizontal: rotating −Z toward +X is −90° about Y
        let fwd = Quaternion::from_axis_angle(Y, -90.0);
        let a = shoulder_azimuth(Quaternion::IDENTITY, fwd, 90.0, Side::Right).unwrap();
        assert!(a.abs() < 1e-9);
        // right-side abduction: −Z toward −Y is −90° about X
        let lat = Quaternion::from_axis_angle(X, -90.0);
        let a = shoulder_azimuth(Quaternion::IDENTITY, lat, 90.0, Side::Right).unwrap();
        assert!((a - 90.0).abs() < 1e-9);
        let lat_left = Quaternion::from_axis_angle(X, 90.0);
        let a = shoulder_azimuth(Quaternion::IDENTITY, lat_left, 90.0, Side::Left).unwrap();
        assert!((a - 90.0).abs() < 1e-9);
        assert_eq!(shoulder_azimuth(Quaternion::IDENTITY, Quaternion::IDENTITY, 10.0, Side::Right), None);
    }

    #[test]
    fn azimuth_invariant_to_joint_yaw() {
        let arm = Quaternion::from_axis_angle(Z, 20.0) * Quaternion::from_axis_angle(Y, -80.0);
        let torso = Quaternion::from_axis_angle(Z, 5.0);
        let sel = shoulder_elevation(arm).unwrap();
        let a0 = shoulder_azimuth(torso, arm, sel, Side::Right).unwrap();
        let yaw = Quaternion::from_axis_angle(Z, 30.0);
        let a1 = shoulder_azimuth(yaw * torso, yaw * arm, sel, Side::Right).unwrap();
        assert!((a0 - a1).abs() < 1e-6);
        // direct computation: arm heading 20° left of forward, torso 5° left
        assert!((a0 - (-15.0)).abs() < 1e-6);
    }

    #[test]
    fn elbow_examples() {
        let arm = Quaternion::from_axis_angle(X, 30.0);
        assert!(elbow_flexion(arm, arm).unwrap().abs() < 1e-6);
        let fore = Quaternion::from_axis_angle(Y, -90.0);
        assert!((elbow_flexion(Quaternion::IDENTITY, fore).unwrap() - 90.0).abs() < 1e-9);
        let w = Quaternion::from_axis_angle([0.3, -1.0, 0.2], 77.0);
        let e0 = elbow_flexion(arm, fore).unwrap();
        let e1 = elbow_flexion(w * arm, w * fore).unwrap();
        assert!((e0 - e1).abs() < 1e-9);
    }

    #[test]
    fn torsion_references_first_sample() {
        let samples = (0..5).map(|i| {
            let qt = Quaternion::from_axis_angle(Z, 10.0 + 5.0 * i as f64);
            (i as f64 * 0.01, [qt, Quaternion::IDENTITY, Quaternion::IDENTITY])
        });
        let out = angle_series(samples, Side::Right).unwrap();
        assert!(out[0].tto.abs() < 1e-9);
        assert!((out[4].tto - 20.0).abs() < 1e-9);
        assert!(out[0].saz.is_none());
        let mut buf = Vec::new();
        write_angle_csv(&mut buf, &out).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_s,sEL_deg,sAZ_deg,eFE_deg,tTO_deg\n"));
        assert!(text.lines().nth(1).unwrap().contains(",NaN,"));
    }

    fn triangle(peak: f64, n_up: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..=n_up).map(|i| peak * i as f64 / n_up as f64).collect();
        v.extend((0..n_up).rev().map(|i| peak * i as f64 / n_up as f64));
        v
    }

    #[test]
    fn single_triangle_rom() {
        let s = triangle(170.0, 200);
        let reps = segment_rom(&s, 0.01, Segmentation::default()).unwrap();
        assert_eq!(reps.len(), 1);
        assert!((reps[0].rom - 170.0).abs() < 1e-9);
    }

    #[test]
    fn constant_has_no_reps() {
        let s = vec![5.0; 500];
        assert!(matches!(
            segment_rom(&s, 0.01, Segmentation::default()),
            Err(KinematicsError::NoRepetitionsFound { .. })
        ));
    }

    #[test]
    fn three_triangles_match_bruteforce() {
        let peaks = [150.0, 120.0, 165.0];
        let mut s = Vec::new();
        let mut bounds = Vec::new();
        for (k, p) in peaks.iter().enumerate() {
            let mut t = triangle(*p, 150);
            if k > 0 {
                t.remove(0);
            }
            let start = s.len().saturating_sub(1);
            s.extend(t.iter().map(|v| v + 2.0));
            bounds.push((start, s.len() - 1));
        }
        let reps = segment_rom(&s, 0.01, Segmentation::default()).unwrap();
        assert_eq!(reps.len(), 3);
        for (r, (a, b)) in reps.iter().zip(bounds) {
            let w = &s[a..=b];
            let oracle = w.iter().cloned().fold(f64::MIN, f64::max) - w.iter().cloned().fold(f64::MAX, f64::min);
            assert!((r.rom - oracle).abs() < 1e-9, "{} vs {}", r.rom, oracle);
        }
    }

    #[test]
    fn short_excursions_ignored() {
        let mut s = vec![0.0; 100];
        for v in &mut s[40..45] {
            *v = 50.0;
        }
        assert!(segment_rom(&s, 0.01, Segmentation::default()).is_err());
    }
}
