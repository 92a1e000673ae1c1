//! 68-point facial landmarks: `.pts` parsing, shape normalization, the
//! eight-region partition, and cheek-versus-nose displacement features.
//!
//! Indices follow the usual 68-point annotation (0-based here): jaw 0–16,
//! brows 17–26, nose 27–35, eyes 36–47, mouth 48–67. "Left" means the
//! image-left side. Image y grows downward.
//!
//! Region sums are ordered so that mirroring a shape (negating x and applying
//! [`MIRROR`]) negates every x centroid bit-for-bit. That makes the symmetry
//! properties below exact rather than approximate.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::svm::{SvmError, SvmModel};
use crate::Confidence;

pub const N_POINTS: usize = 68;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FaceError {
    #[error("landmark file declares {0} points; need 68")]
    WrongCount(usize),
    #[error("landmark file lists {found} points but declares {declared}")]
    CountMismatch { declared: usize, found: usize },
    #[error("malformed landmark file at line {line}: {reason}")]
    Malformed { line: usize, reason: &'static str },
    #[error("eye centers coincide; cannot normalize")]
    CoincidentEyes,
    #[error("region `{0}` is empty")]
    EmptyRegion(&'static str),
    #[error(transparent)]
    Svm(#[from] SvmError),
}

pub type Result<T, E = FaceError> = std::result::Result<T, E>;

/// Left/right partner of every landmark index.
pub const MIRROR: [usize; N_POINTS] = {
    let mut m = [0usize; N_POINTS];
    let mut i = 0;
    while i <= 16 {
        m[i] = 16 - i;
        i += 1;
    }
    let pairs: [(usize, usize); 22] = [
        (17, 26),
        (18, 25),
        (19, 24),
        (20, 23),
        (21, 22),
        (31, 35),
        (32, 34),
        (36, 45),
        (37, 44),
        (38, 43),
        (39, 42),
        (40, 47),
        (41, 46),
        (48, 54),
        (49, 53),
        (50, 52),
        (55, 59),
        (56, 58),
        (60, 64),
        (61, 63),
        (65, 67),
        (33, 33),
    ];
    let mut k = 0;
    while k < pairs.len() {
        m[pairs[k].0] = pairs[k].1;
        m[pairs[k].1] = pairs[k].0;
        k += 1;
    }
    let midline = [27, 28, 29, 30, 51, 57, 62, 66];
    let mut k = 0;
    while k < midline.len() {
        m[midline[k]] = midline[k];
        k += 1;
    }
    m
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    points: Vec<[f64; 2]>,
}

impl LandmarkSet {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() != N_POINTS {
            return Err(FaceError::WrongCount(points.len()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Negates x and swaps every point with its mirror partner.
    pub fn mirrored(&self) -> Self {
        Self {
            points: (0..N_POINTS)
                .map(|i| {
                    let [x, y] = self.points[MIRROR[i]];
                    [-x, y]
                })
                .collect(),
        }
    }

    /// Applies `p ↦ scale·p + offset` to every point.
    pub fn transformed(&self, scale: f64, offset: [f64; 2]) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|[x, y]| [scale * x + offset[0], scale * y + offset[1]])
                .collect(),
        }
    }

    /// Serializes in `.pts` form.
    pub fn to_pts(&self) -> String {
        let mut out = String::from("version: 1\nn_points: 68\n{\n");
        for [x, y] in &self.points {
            let _ = writeln!(out, "{x} {y}");
        }
        out.push_str("}\n");
        out
    }
}

/// Parses a `.pts` file: `version:` line, `n_points:` line, then the points
/// between `{` and `}`. Any run of whitespace separates tokens.
pub fn parse_landmarks(bytes: &[u8]) -> Result<LandmarkSet> {
    let text = std::str::from_utf8(bytes).map_err(|_| FaceError::Malformed {
        line: 1,
        reason: "not UTF-8",
    })?;
    let mut declared = None;
    let mut points = Vec::new();
    let mut in_body = false;
    let mut closed = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if closed {
            return Err(FaceError::Malformed {
                line,
                reason: "content after closing brace",
            });
        }
        if !in_body {
            if let Some(rest) = trimmed.strip_prefix("version:") {
                rest.trim().parse::<f64>().map_err(|_| FaceError::Malformed {
                    line,
                    reason: "bad version",
                })?;
            } else if let Some(rest) = trimmed.strip_prefix("n_points:") {
                let n = rest.trim().parse::<usize>().map_err(|_| FaceError::Malformed {
                    line,
                    reason: "bad n_points",
                })?;
                if n != N_POINTS {
                    return Err(FaceError::WrongCount(n));
                }
                declared = Some(n);
            } else if trimmed == "{" {
                if declared.is_none() {
                    return Err(FaceError::Malformed {
                        line,
                        reason: "n_points must precede the point list",
                    });
                }
                in_body = true;
            } else {
                return Err(FaceError::Malformed {
                    line,
                    reason: "unexpected header line",
                });
            }
            continue;
        }
        if trimmed == "}" {
            closed = true;
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let parse = |t: Option<&str>| {
            t.and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or(FaceError::Malformed {
                    line,
                    reason: "expected two finite numbers",
                })
        };
        let x = parse(tokens.next())?;
        let y = parse(tokens.next())?;
        if tokens.next().is_some() {
            return Err(FaceError::Malformed {
                line,
                reason: "more than two numbers on a point line",
            });
        }
        points.push([x, y]);
    }
    let declared = declared.ok_or(FaceError::Malformed {
        line: 1,
        reason: "missing n_points",
    })?;
    if !closed {
        return Err(FaceError::Malformed {
            line: text.lines().count(),
            reason: "missing closing brace",
        });
    }
    if points.len() != declared {
        return Err(FaceError::CountMismatch {
            declared,
            found: points.len(),
        });
    }
    LandmarkSet::new(points)
}

/// One summand of a region centroid. Mirror pairs are added together first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    Single(usize),
    Pair(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceRegions {
    pub left_brow: Vec<Unit>,
    pub right_brow: Vec<Unit>,
    pub left_eye: Vec<Unit>,
    pub right_eye: Vec<Unit>,
    pub nose: Vec<Unit>,
    pub mouth: Vec<Unit>,
    pub left_cheek: Vec<Unit>,
    pub right_cheek: Vec<Unit>,
}

fn singles(idx: &[usize]) -> Vec<Unit> {
    idx.iter().map(|&i| Unit::Single(i)).collect()
}

impl FaceRegions {
    /// Standard partition; right-side regions list indices in mirror order of
    /// their left counterparts. Cheeks are jaw points 2–7 and 11–16 (1-based).
    pub fn standard() -> Self {
        Self {
            left_brow: singles(&[17, 18, 19, 20, 21]),
            right_brow: singles(&[26, 25, 24, 23, 22]),
            left_eye: singles(&[36, 37, 38, 39, 40, 41]),
            right_eye: singles(&[45, 44, 43, 42, 47, 46]),
            nose: vec![
                Unit::Single(27),
                Unit::Single(28),
                Unit::Single(29),
                Unit::Single(30),
                Unit::Single(33),
                Unit::Pair(31, 35),
                Unit::Pair(32, 34),
            ],
            mouth: vec![
                Unit::Single(51),
                Unit::Single(57),
                Unit::Single(62),
                Unit::Single(66),
                Unit::Pair(48, 54),
                Unit::Pair(49, 53),
                Unit::Pair(50, 52),
                Unit::Pair(55, 59),
                Unit::Pair(56, 58),
                Unit::Pair(60, 64),
                Unit::Pair(61, 63),
                Unit::Pair(65, 67),
            ],
            left_cheek: singles(&[1, 2, 3, 4, 5, 6]),
            right_cheek: singles(&[15, 14, 13, 12, 11, 10]),
        }
    }

    pub fn named(&self) -> [(&'static str, &[Unit]); 8] {
        [
            ("left_brow", &self.left_brow),
            ("right_brow", &self.right_brow),
            ("left_eye", &self.left_eye),
            ("right_eye", &self.right_eye),
            ("nose", &self.nose),
            ("mouth", &self.mouth),
            ("left_cheek", &self.left_cheek),
            ("right_cheek", &self.right_cheek),
        ]
    }
}

/// Mean position of a region's points.
pub fn centroid(lm: &LandmarkSet, units: &[Unit], name: &'static str) -> Result<[f64; 2]> {
    let mut sum = [0.0, 0.0];
    let mut count = 0usize;
    for unit in units {
        match *unit {
            Unit::Single(i) => {
                sum[0] += lm.points[i][0];
                sum[1] += lm.points[i][1];
                count += 1;
            }
            Unit::Pair(i, j) => {
                sum[0] += lm.points[i][0] + lm.points[j][0];
                sum[1] += lm.points[i][1] + lm.points[j][1];
                count += 2;
            }
        }
    }
    if count == 0 {
        return Err(FaceError::EmptyRegion(name));
    }
    Ok([sum[0] / count as f64, sum[1] / count as f64])
}

/// Moves the midpoint between the eye centers to the origin and scales the
/// interocular distance to 1. No rotation.
pub fn normalize_shape(lm: &LandmarkSet) -> Result<LandmarkSet> {
    let regions = FaceRegions::standard();
    let left = centroid(lm, &regions.left_eye, "left_eye")?;
    let right = centroid(lm, &regions.right_eye, "right_eye")?;
    let mid = [(left[0] + right[0]) / 2.0, (left[1] + right[1]) / 2.0];
    let iod = (left[0] - right[0]).hypot(left[1] - right[1]);
    if !(iod > 1e-12 && iod.is_finite()) {
        return Err(FaceError::CoincidentEyes);
    }
    Ok(LandmarkSet {
        points: lm
            .points
            .iter()
            .map(|[x, y]| [(x - mid[0]) / iod, (y - mid[1]) / iod])
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Polar {
    pub magnitude: f64,
    /// In (−π, π].
    pub angle: f64,
}

impl Polar {
    fn from_xy(dx: f64, dy: f64) -> Self {
        let mut angle = dy.atan2(dx);
        if angle == -PI {
            angle = PI;
        }
        Self {
            magnitude: dx.hypot(dy),
            angle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplacementFeature {
    /// Left cheek centroid relative to the nose centroid, x measured outward.
    pub alpha: Polar,
    /// Right cheek centroid relative to the nose centroid, x measured outward.
    pub beta: Polar,
    /// (|Δmagnitude|, |Δangle|) between alpha and beta.
    pub asymmetry: [f64; 2],
}

impl DisplacementFeature {
    /// `[α mag, α angle, β mag, β angle, asym mag, asym angle]`, the SVM input.
    pub fn to_vector(&self) -> Vec<f64> {
        vec![
            self.alpha.magnitude,
            self.alpha.angle,
            self.beta.magnitude,
            self.beta.angle,
            self.asymmetry[0],
            self.asymmetry[1],
        ]
    }
}

fn wrapped_abs(d: f64) -> f64 {
    let mut d = d % (2.0 * PI);
    if d > PI {
        d -= 2.0 * PI;
    } else if d < -PI {
        d += 2.0 * PI;
    }
    d.abs()
}

/// Cheek-versus-nose displacement features of an already-normalized shape.
///
/// Both cheek displacements are expressed with x measured as the horizontal
/// distance from the nose (the right cheek is read in the mirrored frame), so a mirror-symmetric
/// face yields `alpha == beta` and a zero asymmetry vector.
pub fn displacement_features(lm: &LandmarkSet, regions: &FaceRegions) -> Result<DisplacementFeature> {
    let nose = centroid(lm, &regions.nose, "nose")?;
    let left = centroid(lm, &regions.left_cheek, "left_cheek")?;
    let right = centroid(lm, &regions.right_cheek, "right_cheek")?;
    let alpha = Polar::from_xy((nose[0] - left[0]).abs(), left[1] - nose[1]);
    let beta = Polar::from_xy((right[0] - nose[0]).abs(), right[1] - nose[1]);
    Ok(DisplacementFeature {
        alpha,
        beta,
        asymmetry: [
            (alpha.magnitude - beta.magnitude).abs(),
            wrapped_abs(alpha.angle - beta.angle),
        ],
    })
}

/// Normalizes raw landmarks and extracts displacement features.
pub fn face_features(lm: &LandmarkSet) -> Result<DisplacementFeature> {
    displacement_features(&normalize_shape(lm)?, &FaceRegions::standard())
}

/// Calibrated probability of facial paralysis.
pub fn paralysis_confidence(svm: &SvmModel, lm: &LandmarkSet) -> Result<Confidence> {
    let features = face_features(lm)?;
    Ok(Confidence::clamped(svm.probability(&features.to_vector())?))
}

/// Mirror-symmetric reference shape with eye centers at (∓0.5, ·), so its
/// interocular distance is 1 and the eye midpoint sits on x = 0.
pub fn mean_shape() -> LandmarkSet {
    let mut p = [[f64::NAN; 2]; N_POINTS];
    // left jaw, ear to just before the chin
    for (i, slot) in p.iter_mut().enumerate().take(8) {
        let t = i as f64 / 16.0;
        let phi = PI * t;
        *slot = [-phi.cos(), 0.1 + 1.4 * phi.sin()];
    }
    p[8] = [0.0, 1.5];
    let left: [(usize, [f64; 2]); 27] = [
        (17, [-0.85, -0.38]),
        (18, [-0.70, -0.47]),
        (19, [-0.52, -0.50]),
        (20, [-0.34, -0.48]),
        (21, [-0.17, -0.42]),
        (27, [0.0, -0.05]),
        (28, [0.0, 0.15]),
        (29, [0.0, 0.35]),
        (30, [0.0, 0.55]),
        (31, [-0.25, 0.70]),
        (32, [-0.12, 0.74]),
        (33, [0.0, 0.76]),
        (36, [-0.72, 0.0]),
        (37, [-0.58, -0.08]),
        (38, [-0.42, -0.08]),
        (39, [-0.28, 0.0]),
        (40, [-0.42, 0.07]),
        (41, [-0.58, 0.07]),
        (48, [-0.42, 1.10]),
        (49, [-0.27, 1.02]),
        (50, [-0.10, 0.98]),
        (51, [0.0, 1.00]),
        (57, [0.0, 1.26]),
        (58, [-0.12, 1.25]),
        (59, [-0.27, 1.20]),
        (60, [-0.36, 1.10]),
        (61, [-0.12, 1.06]),
    ];
    for (i, xy) in left {
        p[i] = xy;
    }
    p[62] = [0.0, 1.06];
    p[66] = [0.0, 1.15];
    p[67] = [-0.12, 1.14];
    for i in 0..N_POINTS {
        if p[i][0].is_nan() {
            let [x, y] = p[MIRROR[i]];
            p[i] = [-x, y];
        }
    }
    LandmarkSet { points: p.to_vec() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirror_table_is_an_involution() {
        for i in 0..N_POINTS {
            assert_eq!(MIRROR[MIRROR[i]], i, "{i}");
        }
    }

    #[test]
    fn mean_shape_is_symmetric_and_unit_iod() {
        let m = mean_shape();
        assert!(m.points().iter().all(|p| p[0].is_finite() && p[1].is_finite()));
        assert_eq!(m.mirrored(), m);
        let n = normalize_shape(&m).unwrap();
        let r = FaceRegions::standard();
        let l = centroid(&n, &r.left_eye, "l").unwrap();
        let rr = centroid(&n, &r.right_eye, "r").unwrap();
        assert!(((l[0] - rr[0]).hypot(l[1] - rr[1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parse_round_trip_and_tolerant_whitespace() {
        let m = mean_shape();
        let text = m.to_pts();
        assert_eq!(parse_landmarks(text.as_bytes()).unwrap(), m);
        let messy = text
            .replace("version: 1", "  version:   1\t")
            .replace(' ', "   \t")
            .replace('\n', "\r\n\n");
        assert_eq!(parse_landmarks(messy.as_bytes()).unwrap(), m);
    }

    #[test]
    fn parse_errors() {
        let text = mean_shape().to_pts();
        let wrong = text.replace("n_points: 68", "n_points: 67");
        assert_eq!(parse_landmarks(wrong.as_bytes()), Err(FaceError::WrongCount(67)));

        let mut lines: Vec<&str> = text.lines().collect();
        lines.remove(10);
        let short = lines.join("\n");
        assert_eq!(
            parse_landmarks(short.as_bytes()),
            Err(FaceError::CountMismatch {
                declared: 68,
                found: 67
            })
        );

        let bad = text.replacen("{\n", "{\n1 two\n", 1);
        assert!(matches!(
            parse_landmarks(bad.as_bytes()),
            Err(FaceError::Malformed { line: 4, .. })
        ));
        let open = text.replace('}', "");
        assert!(matches!(
            parse_landmarks(open.as_bytes()),
            Err(FaceError::Malformed { .. })
        ));
    }

    #[test]
    fn normalization_is_idempotent_and_similarity_invariant() {
        let base = mean_shape().transformed(37.0, [120.0, 80.0]);
        let once = normalize_shape(&base).unwrap();
        let twice = normalize_shape(&once).unwrap();
        for (a, b) in once.points().iter().zip(twice.points()) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
        let moved = normalize_shape(&base.transformed(3.0, [-7.5, 12.25])).unwrap();
        for (a, b) in once.points().iter().zip(moved.points()) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn coincident_eyes_rejected() {
        let lm = LandmarkSet::new(vec![[1.0, 1.0]; N_POINTS]).unwrap();
        assert_eq!(normalize_shape(&lm), Err(FaceError::CoincidentEyes));
    }

    #[test]
    fn symmetric_face_has_zero_asymmetry_and_label_swap_is_neutral() {
        let f = face_features(&mean_shape()).unwrap();
        assert_eq!(f.asymmetry, [0.0, 0.0]);
        assert_eq!(f.alpha, f.beta);
        let swapped = LandmarkSet::new((0..N_POINTS).map(|i| mean_shape().points()[MIRROR[i]]).collect()).unwrap();
        let g = face_features(&swapped).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn lowered_left_cheek_matches_hand_arithmetic() {
        let delta = 0.1;
        let mut pts = mean_shape().points().to_vec();
        for p in &mut pts[1..=6] {
            p[1] += delta;
        }
        let lm = LandmarkSet::new(pts.clone()).unwrap();
        let f = face_features(&lm).unwrap();

        // oracle: the eyes do not move, so normalization is the identity here
        let mean = |idx: &[usize]| {
            let (mut sx, mut sy) = (0.0, 0.0);
            for &i in idx {
                sx += pts[i][0];
                sy += pts[i][1];
            }
            (sx / idx.len() as f64, sy / idx.len() as f64)
        };
        let eyes_l = mean(&[36, 37, 38, 39, 40, 41]);
        let eyes_r = mean(&[42, 43, 44, 45, 46, 47]);
        let mid_y = (eyes_l.1 + eyes_r.1) / 2.0;
        let nose = mean(&[27, 28, 29, 30, 31, 32, 33, 34, 35]);
        let lc = mean(&[1, 2, 3, 4, 5, 6]);
        let rc = mean(&[10, 11, 12, 13, 14, 15]);
        let a = ((nose.0 - lc.0).powi(2) + (lc.1 - nose.1).powi(2)).sqrt();
        let b = ((rc.0 - nose.0).powi(2) + (rc.1 - nose.1).powi(2)).sqrt();
        assert!((f.asymmetry[0] - (a - b).abs()).abs() < 1e-9);
        assert!(f.asymmetry[0] > 0.0 && f.asymmetry[1] > 0.0);
        assert!(mid_y.is_finite());
    }
}
