//! Position-embedding math: coordinate normalization, the camera-ray
//! embedding with its inverse-sigmoid stage, single-point LiDAR-ray
//! sampling, anchor-interpolated embeddings and magnitude bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Endpoint guard of the inverse sigmoid.
pub const INVERSE_SIGMOID_EPS: f64 = 1e-5;
/// Fixed depth of the single LiDAR-ray sample, in meters.
pub const LIDAR_DEPTH: f64 = 30.0;
/// Stage-1 magnitudes printed with the two analytic output bounds.
pub const REF_CR_STAGE1: f64 = 11.5;
pub const REF_QD_STAGE1: f64 = 2.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn coords(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// Axis-aligned perception volume in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerceptionRange {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
    pub z_lo: f64,
    pub z_hi: f64,
}

impl Default for PerceptionRange {
    fn default() -> Self {
        Self {
            x_lo: -51.2,
            x_hi: 51.2,
            y_lo: -51.2,
            y_hi: 51.2,
            z_lo: -5.0,
            z_hi: 3.0,
        }
    }
}

impl PerceptionRange {
    /// The wider volume used for detector training runs.
    pub fn wide() -> Self {
        Self {
            x_lo: -61.2,
            x_hi: 61.2,
            y_lo: -61.2,
            y_hi: 61.2,
            z_lo: -10.0,
            z_hi: 10.0,
        }
    }

    pub fn bounds(&self) -> [(f64, f64); 3] {
        [
            (self.x_lo, self.x_hi),
            (self.y_lo, self.y_hi),
            (self.z_lo, self.z_hi),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in self.bounds() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidParam(format!(
                    "degenerate perception range [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Maps a point into `[0, 1]^3`, clamping anything outside the volume.
pub fn normalize(p: &Point3, r: &PerceptionRange) -> Result<Point3> {
    r.validate()?;
    let [(xl, xh), (yl, yh), (zl, zh)] = r.bounds();
    let n = |v: f64, lo: f64, hi: f64| ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    Ok(Point3::new(n(p.x, xl, xh), n(p.y, yl, yh), n(p.z, zl, zh)))
}

/// `ln(w / (1 - w))` with `w = min(v + eps, 1 - eps)`. The upper clamp keeps
/// `v = 1` finite and makes the two endpoint magnitudes equal.
pub fn inverse_sigmoid_value(v: f64, eps: f64) -> f64 {
    let w = (v + eps).min(1.0 - eps);
    (w / (1.0 - w)).ln()
}

/// Element-wise [`inverse_sigmoid_value`]. With `eps = 0` the endpoints map
/// to infinities.
pub fn inverse_sigmoid(v: &Tensor, eps: f64) -> Tensor {
    v.map(|x| inverse_sigmoid_value(x, eps))
}

/// Largest inverse-sigmoid magnitude over `[0, 1]`: `ln((1 - eps) / eps)`.
pub fn eta_max(eps: f64) -> f64 {
    ((1.0 - eps) / eps).ln()
}

/// The point at `depth` along a unit ray.
pub fn lidar_ray_sample(origin: &Point3, dir: &Point3, depth: f64) -> Result<Point3> {
    let n = dir.norm();
    if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
        return Err(Error::NonUnitDirection(n));
    }
    Ok(Point3::new(
        origin.x + depth * dir.x,
        origin.y + depth * dir.y,
        origin.z + depth * dir.z,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Anchor locations (normalized units) and their embedding vectors on one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAxis")]
pub struct AnchorAxis {
    axis: Axis,
    locations: Vec<f64>,
    embeddings: Vec<Vec<f64>>,
    gamma: f64,
}

#[derive(Deserialize)]
struct RawAxis {
    axis: Axis,
    locations: Vec<f64>,
    embeddings: Vec<Vec<f64>>,
    gamma: f64,
}

impl TryFrom<RawAxis> for AnchorAxis {
    type Error = Error;

    fn try_from(r: RawAxis) -> Result<Self> {
        AnchorAxis::new(r.axis, r.locations, r.embeddings, r.gamma)
    }
}

impl AnchorAxis {
    pub fn new(axis: Axis, locations: Vec<f64>, embeddings: Vec<Vec<f64>>, gamma: f64) -> Result<Self> {
        if locations.len() < 2 || locations.len() != embeddings.len() {
            return Err(Error::InvalidParam(format!(
                "{} locations and {} embeddings; need equal counts >= 2",
                locations.len(),
                embeddings.len()
            )));
        }
        if locations.iter().any(|v| !v.is_finite()) || locations.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::NonIncreasingAnchors);
        }
        let dim = embeddings[0].len();
        if dim == 0 || embeddings.iter().any(|e| e.len() != dim) {
            return Err(Error::InvalidParam("anchor embeddings need one common non-zero dimension".into()));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParam(format!("gamma must be >= 0, got {gamma}")));
        }
        if let Some(v) = embeddings.iter().flatten().find(|v| !(v.abs() <= gamma)) {
            return Err(Error::InvalidParam(format!(
                "anchor entry {v} exceeds gamma {gamma}"
            )));
        }
        Ok(Self {
            axis,
            locations,
            embeddings,
            gamma,
        })
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.embeddings[0].len()
    }

    /// Bracketing anchor index and interpolation weight of `v`, clamped to
    /// the anchor span. The weight is exactly 0 on an anchor, except at the
    /// last anchor where it is exactly 1.
    pub fn bracket(&self, v: f64) -> (usize, f64) {
        let l = &self.locations;
        let v = v.clamp(l[0], l[l.len() - 1]);
        let i = l.partition_point(|&x| x <= v).clamp(1, l.len() - 1) - 1;
        let lambda = ((v - l[i]) / (l[i + 1] - l[i])).clamp(0.0, 1.0);
        (i, lambda)
    }

    /// `lambda * E[i+1] + (1 - lambda) * E[i]`, kept within the two anchors
    /// component-wise so rounding can never leave their hull.
    pub fn embed(&self, v: f64) -> Vec<f64> {
        let (i, lambda) = self.bracket(v);
        let (a, b) = (&self.embeddings[i], &self.embeddings[i + 1]);
        a.iter()
            .zip(b)
            .map(|(&ea, &eb)| (lambda * eb + (1.0 - lambda) * ea).clamp(ea.min(eb), ea.max(eb)))
            .collect()
    }
}

/// Anchors for the three axes, serialized as a JSON array in x, y, z order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<AnchorAxis>", into = "Vec<AnchorAxis>")]
pub struct AnchorAxisSet {
    axes: [AnchorAxis; 3],
}

impl TryFrom<Vec<AnchorAxis>> for AnchorAxisSet {
    type Error = Error;

    fn try_from(v: Vec<AnchorAxis>) -> Result<Self> {
        let n = v.len();
        let axes: [AnchorAxis; 3] = v
            .try_into()
            .map_err(|_| Error::InvalidParam(format!("expected 3 anchor axes, got {n}")))?;
        Self::new(axes)
    }
}

impl From<AnchorAxisSet> for Vec<AnchorAxis> {
    fn from(s: AnchorAxisSet) -> Self {
        s.axes.into()
    }
}

impl AnchorAxisSet {
    pub fn new(axes: [AnchorAxis; 3]) -> Result<Self> {
        let order = [Axis::X, Axis::Y, Axis::Z];
        if axes.iter().zip(order).any(|(a, want)| a.axis != want) {
            return Err(Error::InvalidParam("anchor axes must be ordered x, y, z".into()));
        }
        Ok(Self { axes })
    }

    /// `count` anchors per axis at uniform locations on `[0, 1]`, embeddings
    /// drawn uniformly from `[-gamma, gamma]`.
    pub fn random(seed: u64, count: usize, dim: usize, gamma: f64) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidParam("need >= 2 anchors per axis".into()));
        }
        let locations: Vec<f64> = (0..count).map(|i| i as f64 / (count - 1) as f64).collect();
        Self::random_with_locations(seed, [locations.clone(), locations.clone(), locations], dim, gamma)
    }

    pub fn random_with_locations(
        seed: u64,
        locations: [Vec<f64>; 3],
        dim: usize,
        gamma: f64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut make = |axis: Axis, locs: Vec<f64>| {
            let emb = (0..locs.len())
                .map(|_| (0..dim).map(|_| uniform(&mut rng, gamma)).collect())
                .collect();
            AnchorAxis::new(axis, locs, emb, gamma)
        };
        let [lx, ly, lz] = locations;
        Self::new([make(Axis::X, lx)?, make(Axis::Y, ly)?, make(Axis::Z, lz)?])
    }

    pub fn axes(&self) -> &[AnchorAxis; 3] {
        &self.axes
    }

    /// Total embedding width of the concatenated axes.
    pub fn dim(&self) -> usize {
        self.axes.iter().map(AnchorAxis::dim).sum()
    }

    pub fn gamma(&self) -> f64 {
        self.axes.iter().map(AnchorAxis::gamma).fold(0.0, f64::max)
    }

    /// Concatenated per-axis embeddings of a normalized point.
    pub fn features(&self, v: &Point3) -> Vec<f64> {
        self.axes
            .iter()
            .zip(v.coords())
            .flat_map(|(a, c)| a.embed(c))
            .collect()
    }
}

fn uniform(rng: &mut impl Rng, bound: f64) -> f64 {
    if bound == 0.0 {
        0.0
    } else {
        rng.random_range(-bound..=bound)
    }
}

/// Two fully-connected layers with a ReLU between them. Weights are stored
/// input-major: `w1[i][h]` connects input `i` to hidden unit `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
}

impl MlpSpec {
    pub fn new(w1: Vec<Vec<f64>>, b1: Vec<f64>, w2: Vec<Vec<f64>>, b2: Vec<f64>) -> Result<Self> {
        let m = Self { w1, b1, w2, b2 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let hidden = self.b1.len();
        let d_out = self.b2.len();
        let bad_rows = |w: &[Vec<f64>], n: usize| w.is_empty() || w.iter().any(|r| r.len() != n);
        if hidden == 0 || d_out == 0 || bad_rows(&self.w1, hidden) || bad_rows(&self.w2, d_out) || self.w2.len() != hidden {
            return Err(Error::InvalidParam(format!(
                "inconsistent MLP shapes: w1 {}x{}, b1 {}, w2 {}x{}, b2 {}",
                self.w1.len(),
                self.w1.first().map_or(0, Vec::len),
                hidden,
                self.w2.len(),
                self.w2.first().map_or(0, Vec::len),
                d_out
            )));
        }
        let all = self.w1.iter().chain(&self.w2).flatten().chain(&self.b1).chain(&self.b2);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("MLP parameters"));
        }
        Ok(())
    }

    /// Weights uniform on `[-gamma, gamma]`, zero biases.
    pub fn random(seed: u64, d_in: usize, hidden: usize, d_out: usize, gamma: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mat = |r: usize, c: usize| -> Vec<Vec<f64>> {
            (0..r)
                .map(|_| (0..c).map(|_| uniform(&mut rng, gamma)).collect())
                .collect()
        };
        let w1 = mat(d_in, hidden);
        let w2 = mat(hidden, d_out);
        Self::new(w1, vec![0.0; hidden], w2, vec![0.0; d_out])
    }

    pub fn zeros(d_in: usize, hidden: usize, d_out: usize) -> Self {
        Self {
            w1: vec![vec![0.0; hidden]; d_in],
            b1: vec![0.0; hidden],
            w2: vec![vec![0.0; d_out]; hidden],
            b2: vec![0.0; d_out],
        }
    }

    pub fn d_in(&self) -> usize {
        self.w1.len()
    }

    pub fn hidden(&self) -> usize {
        self.b1.len()
    }

    pub fn d_out(&self) -> usize {
        self.b2.len()
    }

    /// Largest weight magnitude over both layers.
    pub fn gamma(&self) -> f64 {
        self.w1
            .iter()
            .chain(&self.w2)
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_in() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.d_in()],
                actual: vec![x.len()],
            });
        }
        let mut h = self.b1.clone();
        for (xi, row) in x.iter().zip(&self.w1) {
            h.iter_mut().zip(row).for_each(|(acc, w)| *acc += xi * w);
        }
        let mut y = self.b2.clone();
        for (hj, row) in h.iter().zip(&self.w2) {
            let a = hj.max(0.0);
            y.iter_mut().zip(row).for_each(|(acc, w)| *acc += a * w);
        }
        Ok(y)
    }

    /// `hidden * G * (d_in * G * m + max|b1|) + max|b2|` for inputs bounded by `m`.
    pub fn output_bound(&self, input_max: f64) -> f64 {
        let g = self.gamma();
        let bmax = |b: &[f64]| b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.hidden() as f64 * g * (self.d_in() as f64 * g * input_max + bmax(&self.b1)) + bmax(&self.b2)
    }
}

fn rows_to_tensor(rows: Vec<Vec<f64>>, width: usize) -> Result<Tensor> {
    let n = rows.len();
    Tensor::new(vec![n, width], rows.into_iter().flatten().collect())
}

/// Inverse-sigmoid features of one pixel's depth samples, concatenated.
pub fn camera_ray_features(samples: &[Point3], r: &PerceptionRange, eps: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(3 * samples.len());
    for p in samples {
        let v = normalize(p, r)?;
        out.extend(v.coords().map(|c| inverse_sigmoid_value(c, eps)));
    }
    Ok(out)
}

/// Camera-ray embedding: per pixel, all depth samples are normalized, passed
/// through the inverse sigmoid, concatenated and projected by the MLP.
pub fn camera_ray_pe(pixels: &[Vec<Point3>], r: &PerceptionRange, mlp: &MlpSpec, eps: f64) -> Result<Tensor> {
    let rows = pixels
        .iter()
        .map(|px| mlp.forward(&camera_ray_features(px, r, eps)?))
        .collect::<Result<Vec<_>>>()?;
    rows_to_tensor(rows, mlp.d_out())
}

/// Anchor-interpolated embedding of one point, projected by the MLP.
pub fn qfpe_embed(p: &Point3, anchors: &AnchorAxisSet, r: &PerceptionRange, mlp: &MlpSpec) -> Result<Vec<f64>> {
    mlp.forward(&anchors.features(&normalize(p, r)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeKind {
    CameraRay,
    Qfpe,
}

impl std::str::FromStr for PeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "camera-ray" | "camera_ray" => Ok(PeKind::CameraRay),
            "qfpe" => Ok(PeKind::Qfpe),
            _ => Err(Error::InvalidParam(format!("unknown PE kind '{s}'"))),
        }
    }
}

/// Rays from the ego origin: `azimuths` evenly around the horizon times
/// `elevations` evenly over [-0.3, 0.3] rad.
pub fn ray_grid(azimuths: usize, elevations: usize) -> Vec<Point3> {
    let mut rays = Vec::with_capacity(azimuths * elevations);
    for a in 0..azimuths {
        let th = 2.0 * std::f64::consts::PI * a as f64 / azimuths as f64;
        for e in 0..elevations {
            let ph = if elevations == 1 {
                0.0
            } else {
                -0.3 + 0.6 * e as f64 / (elevations - 1) as f64
            };
            rays.push(Point3::new(ph.cos() * th.cos(), ph.cos() * th.sin(), ph.sin()));
        }
    }
    rays
}

/// `count` depths spread evenly over `[1, 61]` meters.
pub fn depth_bins(count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| 1.0 + 60.0 * i as f64 / (count.max(2) - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeReport {
    pub kind: PeKind,
    /// Bound on the embedding input to the MLP: `eta_max` or the anchor gamma.
    pub stage1_max: f64,
    pub eta_max: f64,
    pub mlp_gamma: f64,
    pub d_in: usize,
    pub hidden: usize,
    /// Bound computed from this MLP's shapes, weights and biases.
    pub analytic_bound: f64,
    /// `256 * 192 * G^2 * c` with the printed stage-1 constant `c`.
    pub reference_bound: f64,
    /// Ratio of the two printed stage-1 constants, 11.5 / 2.6.
    pub reference_ratio: f64,
    pub empirical_max: f64,
    pub grid_points: usize,
}

/// Analytic and measured output magnitudes of one embedding kind over a
/// grid of rays from the origin. Camera-ray samples `mlp.d_in() / 3` depths
/// per ray; QFPE samples one point per ray at [`LIDAR_DEPTH`].
pub fn magnitude_report(
    mlp: &MlpSpec,
    kind: PeKind,
    anchors: Option<&AnchorAxisSet>,
    r: &PerceptionRange,
    rays: &[Point3],
) -> Result<MagnitudeReport> {
    let eta = eta_max(INVERSE_SIGMOID_EPS);
    let g = mlp.gamma();
    let (stage1, ref_c, outputs) = match kind {
        PeKind::CameraRay => {
            if mlp.d_in() % 3 != 0 {
                return Err(Error::InvalidParam("camera-ray MLP input must be 3 x depths".into()));
            }
            let depths = depth_bins(mlp.d_in() / 3);
            let pixels: Vec<Vec<Point3>> = rays
                .iter()
                .map(|d| depths.iter().map(|&t| lidar_ray_sample(&Point3::ORIGIN, d, t)).collect())
                .collect::<Result<_>>()?;
            (eta, REF_CR_STAGE1, camera_ray_pe(&pixels, r, mlp, INVERSE_SIGMOID_EPS)?)
        }
        PeKind::Qfpe => {
            let anchors = anchors.ok_or_else(|| Error::InvalidParam("QFPE needs anchors".into()))?;
            if anchors.dim() != mlp.d_in() {
                return Err(Error::ShapeMismatch {
                    expected: vec![mlp.d_in()],
                    actual: vec![anchors.dim()],
                });
            }
            let rows = rays
                .iter()
                .map(|d| qfpe_embed(&lidar_ray_sample(&Point3::ORIGIN, d, LIDAR_DEPTH)?, anchors, r, mlp))
                .collect::<Result<Vec<_>>>()?;
            (anchors.gamma(), REF_QD_STAGE1, rows_to_tensor(rows, mlp.d_out())?)
        }
    };
    Ok(MagnitudeReport {
        kind,
        stage1_max: stage1,
        eta_max: eta,
        mlp_gamma: g,
        d_in: mlp.d_in(),
        hidden: mlp.hidden(),
        analytic_bound: mlp.output_bound(stage1),
        reference_bound: 256.0 * 192.0 * g * g * ref_c,
        reference_ratio: REF_CR_STAGE1 / REF_QD_STAGE1,
        empirical_max: outputs.max_abs(),
        grid_points: rays.len(),
    })
}
