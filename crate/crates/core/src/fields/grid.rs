use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::geometry::BoundaryCurve;

/// Local refinement of the polar grid around one boundary angle.
///
/// Node density in θ is raised by `theta_ratio` within roughly
/// `theta_width` radians of `theta`, and density in q by `q_ratio` within
/// `q_width` of the boundary. Both profiles are flat-topped and smooth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFocus {
    pub theta: f64,
    pub theta_width: f64,
    pub theta_ratio: f64,
    pub q_width: f64,
    pub q_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub n_theta: usize,
    pub n_q: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus: Option<GridFocus>,
}

impl GridParams {
    pub fn uniform(n_theta: usize, n_q: usize) -> Self {
        GridParams { n_theta, n_q, focus: None }
    }

    pub fn focused(n_theta: usize, n_q: usize, focus: GridFocus) -> Self {
        GridParams { n_theta, n_q, focus: Some(focus) }
    }
}

/// Mapped polar grid over `Ω_δ`: `x = q·R_δ(θ)·(cos θ, sin θ)`.
///
/// Node 0 is the axis `q = 0`; ring `j ∈ 1..=n_q` at angle index `i` is node
/// `1 + (j − 1)·n_θ + i`, so ring `n_q` lies on the boundary.
#[derive(Debug)]
pub struct GridSpec {
    params: GridParams,
    theta: Vec<f64>,
    q: Vec<f64>,
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    stiffness: CsrMatrix,
    area: f64,
    min_spacing: f64,
    hash: u64,
}

impl GridSpec {
    pub fn build(curve: &BoundaryCurve, params: &GridParams) -> Result<Self> {
        let (nt, nq) = (params.n_theta, params.n_q);
        if nt < 8 || nq < 2 {
            return Err(Error::ParamOutOfRange(format!(
                "grid needs n_theta >= 8 and n_q >= 2, got {nt} x {nq}"
            )));
        }
        let (theta, q) = match &params.focus {
            None => (
                (0..nt).map(|i| TAU * i as f64 / nt as f64).collect::<Vec<_>>(),
                (0..=nq).map(|j| j as f64 / nq as f64).collect::<Vec<_>>(),
            ),
            Some(f) => {
                if !(f.theta_ratio >= 1.0 && f.q_ratio >= 1.0 && f.theta_width > 0.0 && f.q_width > 0.0)
                {
                    return Err(Error::ParamOutOfRange(
                        "grid focus needs ratios >= 1 and positive widths".into(),
                    ));
                }
                let density_theta = |phi: f64| {
                    let chord = 2.0 * (0.5 * phi).sin().abs();
                    1.0 + (f.theta_ratio - 1.0) * (-(chord / f.theta_width).powi(8)).exp()
                };
                let density_q =
                    |q: f64| 1.0 + (f.q_ratio - 1.0) * (-((1.0 - q) / f.q_width).powi(8)).exp();
                let phis = inverse_cdf_nodes(density_theta, 0.0, TAU, nt);
                let theta = phis[..nt].iter().map(|p| f.theta + p).collect();
                (theta, inverse_cdf_nodes(density_q, 0.0, 1.0, nq))
            }
        };

        let radius: Vec<f64> = theta.iter().map(|&t| curve.radial(t)[0]).collect();
        let mut points = Vec::with_capacity(1 + nt * nq);
        points.push([0.0, 0.0]);
        for &qj in &q[1..] {
            for (&t, &r) in theta.iter().zip(&radius) {
                let (s, c) = t.sin_cos();
                points.push([qj * r * c, qj * r * s]);
            }
        }

        // Separable weights: ∫ R_δ² dθ over the angular dual cell times the
        // radial factor (q₊² − q₋²)/2, so they sum to the exact area.
        let (gl_x, gl_w) = gauss_legendre(8);
        let angular: Vec<f64> = (0..nt)
            .map(|i| {
                let prev = if i == 0 { theta[nt - 1] - TAU } else { theta[i - 1] };
                let next = if i + 1 == nt { theta[0] + TAU } else { theta[i + 1] };
                let (a, b) = (0.5 * (prev + theta[i]), 0.5 * (theta[i] + next));
                let half = 0.5 * (b - a);
                let mid = 0.5 * (a + b);
                gl_x.iter()
                    .zip(&gl_w)
                    .map(|(x, w)| {
                        let r = curve.radial(mid + half * x)[0];
                        w * half * r * r
                    })
                    .sum()
            })
            .collect();
        let total_angular: f64 = angular.iter().sum();
        let mut weights = Vec::with_capacity(points.len());
        let q_half = |j: usize| 0.5 * (q[j] + q[j + 1]);
        weights.push(total_angular * 0.5 * q_half(0).powi(2));
        for j in 1..=nq {
            let lo = q_half(j - 1);
            let hi = if j == nq { 1.0 } else { q_half(j) };
            let radial = 0.5 * (hi * hi - lo * lo);
            weights.extend(angular.iter().map(|a| a * radial));
        }
        let area: f64 = weights.iter().sum();

        let index = |j: usize, i: usize| 1 + (j - 1) * nt + (i % nt);
        let mut triplets = Vec::with_capacity(points.len() * 14);
        let mut add = |tri: [usize; 3], scale: f64| {
            let k = p1_stiffness(tri.map(|n| points[n]));
            for a in 0..3 {
                for b in 0..3 {
                    triplets.push((tri[a], tri[b], scale * k[a][b]));
                }
            }
        };
        for i in 0..nt {
            add([0, index(1, i), index(1, i + 1)], 1.0);
        }
        for j in 1..nq {
            for i in 0..nt {
                let (a, b) = (index(j, i), index(j, i + 1));
                let (c, d) = (index(j + 1, i + 1), index(j + 1, i));
                add([a, b, c], 0.5);
                add([a, c, d], 0.5);
                add([a, b, d], 0.5);
                add([b, c, d], 0.5);
            }
        }
        let stiffness = CsrMatrix::from_triplets(points.len(), triplets);

        let mut min_spacing = f64::INFINITY;
        for j in 1..=nq {
            for i in 0..nt {
                let p = points[index(j, i)];
                let n1 = points[index(j, i + 1)];
                let n2 = if j == 1 { points[0] } else { points[index(j - 1, i)] };
                min_spacing = min_spacing
                    .min((p[0] - n1[0]).hypot(p[1] - n1[1]))
                    .min((p[0] - n2[0]).hypot(p[1] - n2[1]));
            }
        }

        let mut hasher = Sha256::new();
        hasher.update(curve.shape().key().as_bytes());
        hasher.update(curve.delta().to_le_bytes());
        hasher.update((nt as u64).to_le_bytes());
        hasher.update((nq as u64).to_le_bytes());
        for x in theta.iter().chain(&q) {
            hasher.update(x.to_le_bytes());
        }
        let digest = hasher.finalize();
        let hash = u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"));

        Ok(GridSpec {
            params: params.clone(),
            theta,
            q,
            points,
            weights,
            stiffness,
            area,
            min_spacing,
            hash,
        })
    }

    pub fn params(&self) -> &GridParams {
        &self.params
    }

    pub fn n_theta(&self) -> usize {
        self.params.n_theta
    }

    pub fn n_q(&self) -> usize {
        self.params.n_q
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Node index of ring `j ≥ 1`, angle `i`.
    pub fn index(&self, j: usize, i: usize) -> usize {
        1 + (j - 1) * self.params.n_theta + (i % self.params.n_theta)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Radial coordinates `q_0 = 0 < … < q_{n_q} = 1`.
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// P1 stiffness matrix: `vᵀ G v = ‖∇v‖²`.
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// `Σ w = |Ω_δ|`.
    pub fn area(&self) -> f64 {
        self.area
    }

    /// Smallest distance between neighbouring nodes away from the axis.
    pub fn min_spacing(&self) -> f64 {
        self.min_spacing
    }

    /// Largest node spacing within `radius` of `center`.
    pub fn max_spacing_near(&self, center: [f64; 2], radius: f64) -> f64 {
        let nt = self.params.n_theta;
        let mut h: f64 = 0.0;
        for j in 1..=self.params.n_q {
            for i in 0..nt {
                let p = self.points[self.index(j, i)];
                if (p[0] - center[0]).hypot(p[1] - center[1]) > radius {
                    continue;
                }
                let n1 = self.points[self.index(j, i + 1)];
                let n2 = if j == 1 { self.points[0] } else { self.points[self.index(j - 1, i)] };
                h = h.max((p[0] - n1[0]).hypot(p[1] - n1[1])).max((p[0] - n2[0]).hypot(p[1] - n2[1]));
            }
        }
        h
    }

    /// Identifier derived from the shape, δ and the node coordinates.
    pub fn hash(&self) -> u64 {
        self.hash
    }
}

/// `n + 1` nodes `x_0 = lo < … < x_n = hi` equidistributing `density`.
fn inverse_cdf_nodes(density: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let m = 64 * n.max(64);
    let dx = (hi - lo) / m as f64;
    let mut cdf = Vec::with_capacity(m + 1);
    cdf.push(0.0);
    let mut prev = density(lo);
    for k in 1..=m {
        let cur = density(lo + k as f64 * dx);
        let last = *cdf.last().unwrap();
        cdf.push(last + 0.5 * (prev + cur) * dx);
        prev = cur;
    }
    let total = cdf[m];
    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(lo);
    let mut k = 0;
    for i in 1..n {
        let target = total * i as f64 / n as f64;
        while cdf[k + 1] < target {
            k += 1;
        }
        let frac = (target - cdf[k]) / (cdf[k + 1] - cdf[k]);
        nodes.push(lo + (k as f64 + frac) * dx);
    }
    nodes.push(hi);
    nodes
}

/// Element stiffness `∫_T ∇λ_a·∇λ_b` of a straight triangle.
fn p1_stiffness(p: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    // Edge opposite vertex a, rotated: ∇λ_a = rot(e_a) / (2|T|).
    let e = [
        [p[2][0] - p[1][0], p[2][1] - p[1][1]],
        [p[0][0] - p[2][0], p[0][1] - p[2][1]],
        [p[1][0] - p[0][0], p[1][1] - p[0][1]],
    ];
    let twice_area = (e[2][0] * (-e[1][1]) - e[2][1] * (-e[1][0])).abs();
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = (e[a][0] * e[b][0] + e[a][1] * e[b][1]) / (2.0 * twice_area);
        }
    }
    k
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let step = p1 / dp;
            z -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ShapeSpec;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((integral - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn stiffness_rows_sum_to_zero() {
        let curve = BoundaryCurve::build(ShapeSpec::Ellipse { a: 1.2, b: 1.0 }, 0.2, 256).unwrap();
        let grid = GridSpec::build(&curve, &GridParams::uniform(32, 12)).unwrap();
        let g = grid.stiffness();
        for i in 0..grid.len() {
            let s: f64 = g.row(i).map(|(_, v)| v).sum();
            assert!(s.abs() < 1e-12, "row {i} sums to {s}");
        }
    }

    #[test]
    fn focused_nodes_are_symmetric_and_refined() {
        let curve = BoundaryCurve::build(ShapeSpec::Disk, 0.2, 256).unwrap();
        let focus = GridFocus {
            theta: 1.0,
            theta_width: 0.3,
            theta_ratio: 5.0,
            q_width: 0.3,
            q_ratio: 4.0,
        };
        let grid = GridSpec::build(&curve, &GridParams::focused(128, 40, focus)).unwrap();
        let th = grid.theta();
        assert_eq!(th[0], 1.0);
        for i in 1..128 {
            let mirror = 2.0 + TAU - th[128 - i];
            assert!((th[i] - mirror).abs() < 1e-9);
        }
        let near = th[1] - th[0];
        let far = th[64] - th[63];
        assert!(far / near > 4.0 && far / near < 5.5, "ratio {}", far / near);
        let q = grid.q();
        assert!((q[40] - q[39]) * 3.5 < q[1] - q[0]);
        let exact = std::f64::consts::PI * 25.0;
        assert!((grid.area() - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn hash_depends_on_layout() {
        let curve = BoundaryCurve::build(ShapeSpec::Disk, 0.2, 256).unwrap();
        let a = GridSpec::build(&curve, &GridParams::uniform(32, 12)).unwrap();
        let b = GridSpec::build(&curve, &GridParams::uniform(32, 12)).unwrap();
        let c = GridSpec::build(&curve, &GridParams::uniform(32, 13)).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}
