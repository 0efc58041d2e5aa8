use nalgebra::{DMatrix, DVector};

use super::{FomProblem, ParameterBox, ParameterVector, QoiFunctional, ResidualKind};
use crate::error::Result;
use crate::scalar::Real;
use crate::subspaces::MetricKind;

/// Block whose integral quantities are exposed as default QoIs (center block).
const QOI_BLOCK: usize = 4;

#[derive(Debug, Clone)]
struct Face<T> {
    p: usize,
    /// `None` when the neighbor is a Dirichlet node.
    q: Option<usize>,
    weight: T,
    block_p: usize,
    block_q: usize,
}

/// Piecewise-constant diffusion on the unit square, `div(kappa grad u) = 0`.
///
/// Node-centered finite volumes on an `(m+1) x (m+1)` grid with harmonic
/// face averaging of `kappa`. `kappa = mu_k` on the k-th block of a 3x3
/// partition (row-major from the bottom-left), `mu in [0.01, 1]^9`.
/// Dirichlet `u = 0` on the top edge, unit inflow flux on the bottom edge,
/// no flux on the sides. Residual `r(w; mu) = b - A(mu) w` with `A` SPD.
#[derive(Debug, Clone)]
pub struct LinearDiffusion<T: Real> {
    m: usize,
    faces: Vec<Face<T>>,
    node_block: Vec<usize>,
    coords: Vec<(usize, usize)>,
    rhs: DVector<T>,
    mass: DVector<T>,
    params: ParameterBox<T>,
}

impl<T: Real> LinearDiffusion<T> {
    pub fn new(m: usize) -> Self {
        assert!(m >= 2, "grid needs at least two intervals");
        let h = T::one() / T::from_usize_lossy(m);
        let half = T::lit(0.5);
        let idx = |i: usize, j: usize| j * (m + 1) + i;
        let block = |i: usize, j: usize| (3 * j / m).min(2) * 3 + (3 * i / m).min(2);
        let n = (m + 1) * m;

        let mut node_block = vec![0; n];
        let mut coords = vec![(0, 0); n];
        let mut mass = DVector::zeros(n);
        let mut rhs = DVector::zeros(n);
        let mut faces = Vec::new();
        for j in 0..m {
            for i in 0..=m {
                let p = idx(i, j);
                node_block[p] = block(i, j);
                coords[p] = (i, j);
                let wx = if i == 0 || i == m { half } else { T::one() };
                let wy = if j == 0 { half } else { T::one() };
                mass[p] = h * h * wx * wy;
                if j == 0 {
                    // unit flux through the bottom boundary segment
                    rhs[p] = h * wx;
                }
                if i < m {
                    faces.push(Face {
                        p,
                        q: Some(idx(i + 1, j)),
                        weight: wy,
                        block_p: block(i, j),
                        block_q: block(i + 1, j),
                    });
                }
                faces.push(Face {
                    p,
                    q: if j + 1 < m { Some(idx(i, j + 1)) } else { None },
                    weight: wx,
                    block_p: block(i, j),
                    block_q: block(i, j + 1),
                });
            }
        }
        Self {
            m,
            faces,
            node_block,
            coords,
            rhs,
            mass,
            params: ParameterBox::uniform(9, T::lit(0.01), T::one()),
        }
    }

    pub fn grid_intervals(&self) -> usize {
        self.m
    }

    /// Right-hand side `b` (parameter independent).
    pub fn rhs(&self) -> &DVector<T> {
        &self.rhs
    }

    /// Lumped control-volume areas.
    pub fn lumped_mass(&self) -> &DVector<T> {
        &self.mass
    }

    /// Grid indices `(i, j)` of every unknown.
    pub fn node_indices(&self) -> &[(usize, usize)] {
        &self.coords
    }

    /// Block (0..9) containing each unknown.
    pub fn node_blocks(&self) -> &[usize] {
        &self.node_block
    }

    fn face_coefficient(&self, face: &Face<T>, kappa: &dyn Fn(usize) -> T) -> T {
        let kp = kappa(face.block_p);
        let kq = kappa(face.block_q);
        face.weight * T::lit(2.0) * kp * kq / (kp + kq)
    }

    fn assemble_operator(&self, kappa: &dyn Fn(usize) -> T) -> DMatrix<T> {
        let n = self.dimension();
        let mut a = DMatrix::zeros(n, n);
        for face in &self.faces {
            let c = self.face_coefficient(face, kappa);
            a[(face.p, face.p)] += c;
            if let Some(q) = face.q {
                a[(q, q)] += c;
                a[(face.p, q)] -= c;
                a[(q, face.p)] -= c;
            }
        }
        a
    }

    /// System matrix `A(mu)`.
    pub fn system_matrix(&self, mu: &ParameterVector<T>) -> DMatrix<T> {
        let v = mu.values();
        self.assemble_operator(&|b| v[b])
    }

    /// Unit-coefficient stiffness matrix (includes the Dirichlet coupling).
    pub fn stiffness(&self) -> DMatrix<T> {
        self.assemble_operator(&|_| T::one())
    }
}

impl<T: Real> FomProblem<T> for LinearDiffusion<T> {
    fn name(&self) -> &'static str {
        "linear_diffusion"
    }

    fn dimension(&self) -> usize {
        self.rhs.len()
    }

    fn parameter_box(&self) -> &ParameterBox<T> {
        &self.params
    }

    fn residual_kind(&self) -> ResidualKind {
        ResidualKind::Linear
    }

    fn assemble_residual(&self, w: &DVector<T>, mu: &ParameterVector<T>) -> DVector<T> {
        let v = mu.values();
        let mut r = self.rhs.clone();
        for face in &self.faces {
            let c = self.face_coefficient(face, &|b| v[b]);
            let wq = face.q.map_or(T::zero(), |q| w[q]);
            let flux = c * (w[face.p] - wq);
            r[face.p] -= flux;
            if let Some(q) = face.q {
                r[q] += flux;
            }
        }
        r
    }

    fn assemble_jacobian(&self, _w: &DVector<T>, mu: &ParameterVector<T>) -> DMatrix<T> {
        -self.system_matrix(mu)
    }

    fn metric_matrix(&self, kind: MetricKind) -> Result<DMatrix<T>> {
        let n = self.dimension();
        Ok(match kind {
            MetricKind::Identity => DMatrix::identity(n, n),
            MetricKind::DiscreteH1 => DMatrix::from_diagonal(&self.mass) + self.stiffness(),
        })
    }

    fn qoi_functionals(&self) -> Vec<QoiFunctional<T>> {
        let weights = DVector::from_iterator(
            self.dimension(),
            self.mass
                .iter()
                .zip(&self.node_block)
                .map(|(&w, &b)| if b == QOI_BLOCK { w } else { T::zero() }),
        );
        let m = DMatrix::from_diagonal(&weights);
        vec![
            QoiFunctional::linear("integral_block5", weights),
            QoiFunctional::quadratic("integral_sq_block5", m).expect("diagonal matrix is symmetric"),
        ]
    }
}
