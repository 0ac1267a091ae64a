//! Wiring between system states and residual networks: which features the
//! network sees and which derivative rows its outputs land in.
//!
//! Feature layouts (frozen, [`FEATURE_LAYOUT_VERSION`]):
//!
//! | variant    | features                                  | outputs -> rows          |
//! |------------|-------------------------------------------|--------------------------|
//! | `a`        | `v_B` (3)                                 | 3 -> `v_dot` (7..10)     |
//! | `a_u`      | `v_B`, `u` (7)                            | 3 -> `v_dot`             |
//! | `full`     | `x`, `u` (17)                             | 6 -> `v_dot`, `omega_dot`|
//! | `ground`   | `x`, `u`, `z 1 - h_l(p)` row-major (26)   | 3 -> `v_dot`             |
//! | `di_state` | double-integrator state `(p, p_dot)` (2)  | 2 -> `(p_dot, p_ddot)`   |
//!
//! `v_B = q* v_W q` is the body-frame velocity.

use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::MlpModel;
use crate::{Matrix, Vector};

use super::heightmap::HeightMap;
use super::quad::{self, QuadState, RotorThrusts};
use super::Dynamics;

/// Bumped whenever a feature layout above changes; stored in model files.
pub const FEATURE_LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResidualVariant {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "a_u")]
    AU,
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "ground")]
    Ground,
    #[serde(rename = "di_state")]
    DiState,
}

const V_ROWS: [usize; 3] = [quad::VEL, quad::VEL + 1, quad::VEL + 2];
const VW_ROWS: [usize; 6] = [
    quad::VEL,
    quad::VEL + 1,
    quad::VEL + 2,
    quad::RATE,
    quad::RATE + 1,
    quad::RATE + 2,
];
const DI_ROWS: [usize; 2] = [0, 1];

impl ResidualVariant {
    pub fn tag(self) -> u8 {
        match self {
            ResidualVariant::A => 0,
            ResidualVariant::AU => 1,
            ResidualVariant::Full => 2,
            ResidualVariant::Ground => 3,
            ResidualVariant::DiState => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => ResidualVariant::A,
            1 => ResidualVariant::AU,
            2 => ResidualVariant::Full,
            3 => ResidualVariant::Ground,
            4 => ResidualVariant::DiState,
            t => return Err(Error::Format(format!("unknown residual variant tag {t}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ResidualVariant::A => "a",
            ResidualVariant::AU => "a_u",
            ResidualVariant::Full => "full",
            ResidualVariant::Ground => "ground",
            ResidualVariant::DiState => "di_state",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [
            ResidualVariant::A,
            ResidualVariant::AU,
            ResidualVariant::Full,
            ResidualVariant::Ground,
            ResidualVariant::DiState,
        ]
        .into_iter()
        .find(|v| v.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown residual variant {s:?}")))
    }

    pub fn feature_dim(self) -> usize {
        match self {
            ResidualVariant::A => 3,
            ResidualVariant::AU => 7,
            ResidualVariant::Full => 17,
            ResidualVariant::Ground => 26,
            ResidualVariant::DiState => 2,
        }
    }

    /// State-derivative rows receiving the network outputs, in output order.
    pub fn output_rows(self) -> &'static [usize] {
        match self {
            ResidualVariant::A | ResidualVariant::AU | ResidualVariant::Ground => &V_ROWS,
            ResidualVariant::Full => &VW_ROWS,
            ResidualVariant::DiState => &DI_ROWS,
        }
    }

    pub fn output_dim(self) -> usize {
        self.output_rows().len()
    }

    pub fn state_dim(self) -> usize {
        match self {
            ResidualVariant::DiState => 2,
            _ => quad::STATE_DIM,
        }
    }
}

impl std::fmt::Display for ResidualVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Maps `(x, u)` to network features and back.
///
/// `anchor` is the shooting-node state the features belong to; exogenous
/// inputs (the height-map patch) are taken at the anchor and held constant.
pub trait FeatureMap: Send + Sync + std::fmt::Debug {
    fn variant(&self) -> ResidualVariant;

    fn features(&self, x: &Vector, u: &Vector, anchor: &Vector) -> Vector;

    /// `d features / d(x, u)`, `feature_dim x (nx + nu)`.
    fn feature_jacobian(&self, x: &Vector, u: &Vector, anchor: &Vector) -> Matrix;

    fn feature_dim(&self) -> usize {
        self.variant().feature_dim()
    }
}

/// Quadrotor feature map for the `a`, `a_u`, `full` and `ground` variants.
#[derive(Debug, Clone)]
pub struct QuadFeatures {
    variant: ResidualVariant,
    height_map: Option<Arc<HeightMap>>,
}

impl QuadFeatures {
    pub fn new(variant: ResidualVariant, height_map: Option<Arc<HeightMap>>) -> Result<Self> {
        match variant {
            ResidualVariant::DiState => Err(Error::Config(
                "di_state features belong to the double integrator".into(),
            )),
            ResidualVariant::Ground if height_map.is_none() => {
                Err(Error::Config("ground variant needs a height map".into()))
            }
            _ => Ok(Self {
                variant,
                height_map,
            }),
        }
    }
}

fn conj(x: &Vector) -> [f64; 4] {
    [x[3], -x[4], -x[5], -x[6]]
}

fn body_velocity(x: &Vector) -> Vector3<f64> {
    quad::rotation_matrix(&conj(x)) * Vector3::new(x[7], x[8], x[9])
}

impl FeatureMap for QuadFeatures {
    fn variant(&self) -> ResidualVariant {
        self.variant
    }

    fn features(&self, x: &Vector, u: &Vector, anchor: &Vector) -> Vector {
        let mut z = Vector::zeros(self.variant.feature_dim());
        match self.variant {
            ResidualVariant::A | ResidualVariant::AU => {
                z.rows_mut(0, 3).copy_from(&body_velocity(x));
                if self.variant == ResidualVariant::AU {
                    z.rows_mut(3, 4).copy_from(u);
                }
            }
            ResidualVariant::Full | ResidualVariant::Ground => {
                z.rows_mut(0, 13).copy_from(x);
                z.rows_mut(13, 4).copy_from(u);
                if let Some(map) = &self.height_map {
                    if self.variant == ResidualVariant::Ground {
                        let patch = map.local_patch(&Vector3::new(anchor[0], anchor[1], anchor[2]));
                        for (c, h) in patch.transpose().iter().enumerate() {
                            z[17 + c] = x[2] - h;
                        }
                    }
                }
            }
            ResidualVariant::DiState => unreachable!("rejected in constructor"),
        }
        z
    }

    fn feature_jacobian(&self, x: &Vector, _u: &Vector, _anchor: &Vector) -> Matrix {
        let nxu = quad::STATE_DIM + quad::INPUT_DIM;
        let mut d = Matrix::zeros(self.variant.feature_dim(), nxu);
        match self.variant {
            ResidualVariant::A | ResidualVariant::AU => {
                let qc = conj(x);
                let dv_dqc = quad::rotation_jacobian(&qc, &Vector3::new(x[7], x[8], x[9]));
                for r in 0..3 {
                    d[(r, quad::QUAT)] = dv_dqc[(r, 0)];
                    for c in 1..4 {
                        d[(r, quad::QUAT + c)] = -dv_dqc[(r, c)];
                    }
                }
                d.view_mut((0, quad::VEL), (3, 3))
                    .copy_from(&quad::rotation_matrix(&qc));
                if self.variant == ResidualVariant::AU {
                    for i in 0..4 {
                        d[(3 + i, quad::STATE_DIM + i)] = 1.0;
                    }
                }
            }
            ResidualVariant::Full | ResidualVariant::Ground => {
                for i in 0..nxu {
                    d[(i, i)] = 1.0;
                }
                if self.variant == ResidualVariant::Ground {
                    for c in 0..9 {
                        d[(17 + c, 2)] = 1.0;
                    }
                }
            }
            ResidualVariant::DiState => unreachable!("rejected in constructor"),
        }
        d
    }
}

/// Double-integrator state features for the runtime benchmark.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleIntegratorFeatures;

impl FeatureMap for DoubleIntegratorFeatures {
    fn variant(&self) -> ResidualVariant {
        ResidualVariant::DiState
    }

    fn features(&self, x: &Vector, _u: &Vector, _anchor: &Vector) -> Vector {
        x.clone()
    }

    fn feature_jacobian(&self, _x: &Vector, _u: &Vector, _anchor: &Vector) -> Matrix {
        Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    }
}

/// Typed feature extraction; the ground patch is taken at `x` itself.
pub fn residual_input(
    x: &QuadState,
    u: &RotorThrusts,
    variant: ResidualVariant,
    height_map: Option<Arc<HeightMap>>,
) -> Result<Vector> {
    let map = QuadFeatures::new(variant, height_map)?;
    let xv = x.to_vector();
    Ok(map.features(&xv, &u.to_vector(), &xv))
}

/// Place network outputs into a zero state-derivative vector.
pub fn residual_output_embed(net_out: &Vector, variant: ResidualVariant) -> Result<Vector> {
    let rows = variant.output_rows();
    if net_out.len() != rows.len() {
        return Err(Error::Config(format!(
            "variant {variant} produces {} outputs, network gave {}",
            rows.len(),
            net_out.len()
        )));
    }
    let mut d = Vector::zeros(variant.state_dim());
    for (o, &r) in rows.iter().enumerate() {
        d[r] = net_out[o];
    }
    Ok(d)
}

/// Inverse of [`residual_output_embed`] on the output rows.
pub fn residual_output_extract(derivative: &Vector, variant: ResidualVariant) -> Vector {
    Vector::from_iterator(
        variant.output_dim(),
        variant.output_rows().iter().map(|&r| derivative[r]),
    )
}

/// Add `jac_xu` (outputs x (nx + nu)) onto the embedded rows of `(jx, ju)`.
pub fn embed_jacobian(rows: &[usize], jac_xu: &Matrix, jx: &mut Matrix, ju: &mut Matrix) {
    let nx = jx.ncols();
    for (o, &r) in rows.iter().enumerate() {
        for c in 0..nx {
            jx[(r, c)] += jac_xu[(o, c)];
        }
        for c in 0..ju.ncols() {
            ju[(r, c)] += jac_xu[(o, nx + c)];
        }
    }
}

/// A trained (or zero) network together with its feature wiring.
#[derive(Debug, Clone)]
pub struct ResidualModel {
    pub network: Arc<MlpModel>,
    pub features: Arc<dyn FeatureMap>,
}

impl ResidualModel {
    pub fn new(network: Arc<MlpModel>, features: Arc<dyn FeatureMap>) -> Result<Self> {
        let variant = features.variant();
        if network.variant() != variant {
            return Err(Error::Config(format!(
                "network trained for variant {} but controller uses {variant}",
                network.variant()
            )));
        }
        if network.input_dim() != features.feature_dim() {
            return Err(Error::shape(
                "residual network input",
                features.feature_dim(),
                network.input_dim(),
            ));
        }
        if network.output_dim() != variant.output_dim() {
            return Err(Error::shape(
                "residual network output",
                variant.output_dim(),
                network.output_dim(),
            ));
        }
        Ok(Self { network, features })
    }

    pub fn variant(&self) -> ResidualVariant {
        self.features.variant()
    }

    /// Embedded residual derivative at `(x, u)`.
    pub fn value(&self, x: &Vector, u: &Vector, anchor: &Vector) -> Vector {
        let out = self.network.forward(&self.features.features(x, u, anchor));
        residual_output_embed(&out, self.variant()).expect("dimensions checked in constructor")
    }

    /// Embedded residual Jacobians `(d/dx, d/du)`.
    pub fn jacobians(&self, x: &Vector, u: &Vector, anchor: &Vector) -> (Matrix, Matrix) {
        let z = self.features.features(x, u, anchor);
        let jz = self.network.jacobian(&z);
        let jxu = jz * self.features.feature_jacobian(x, u, anchor);
        let nx = x.len();
        let mut jx = Matrix::zeros(nx, nx);
        let mut ju = Matrix::zeros(nx, u.len());
        embed_jacobian(self.variant().output_rows(), &jxu, &mut jx, &mut ju);
        (jx, ju)
    }
}

/// `f(x, u) = f_nominal(x, u) + f_residual(x, u)`.
pub fn combined_dynamics(
    nominal: &dyn Dynamics,
    residual: Option<&ResidualModel>,
    x: &Vector,
    u: &Vector,
) -> Result<Vector> {
    if x.len() != nominal.state_dim() {
        return Err(Error::shape("combined_dynamics state", nominal.state_dim(), x.len()));
    }
    if u.len() != nominal.input_dim() {
        return Err(Error::shape("combined_dynamics input", nominal.input_dim(), u.len()));
    }
    let mut f = nominal.eval(x, u);
    if let Some(r) = residual {
        if r.variant().state_dim() != x.len() {
            return Err(Error::shape("residual state", x.len(), r.variant().state_dim()));
        }
        f += r.value(x, u, x);
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::params::QuadParams;
    use crate::dynamics::quad::QuadModel;
    use crate::neural::{Activation, MlpModel};
    use nalgebra::{Quaternion, UnitQuaternion};

    fn random_state(seed: u64) -> Vector {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let q = Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        QuadState::new(
            Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.2..2.0)),
            q,
            Vector3::new(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0), rng.random_range(-3.0..3.0)),
            Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
        )
        .unwrap()
        .to_vector()
    }

    #[test]
    fn identity_attitude_body_velocity_is_world_velocity() {
        let mut x = QuadState::hover_at(Vector3::zeros());
        x.velocity = Vector3::new(1.5, -2.0, 0.25);
        let p = QuadParams::default();
        let z = residual_input(&x, &RotorThrusts::hover(&p), ResidualVariant::A, None).unwrap();
        assert_eq!(z.as_slice(), &[1.5, -2.0, 0.25]);
    }

    #[test]
    fn yawed_body_velocity() {
        // Oracle: nalgebra's unit quaternion inverse rotation.
        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        let mut x = QuadState::hover_at(Vector3::zeros());
        x.attitude = *rot.quaternion();
        x.velocity = Vector3::new(1.0, 0.0, 0.0);
        let p = QuadParams::default();
        let z = residual_input(&x, &RotorThrusts::hover(&p), ResidualVariant::A, None).unwrap();
        let expected = rot.inverse_transform_vector(&x.velocity);
        assert!((Vector3::new(z[0], z[1], z[2]) - expected).norm() < 1e-15);
        assert!((z[0] - 0.0).abs() < 1e-15 && (z[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn input_layouts() {
        let p = QuadParams::default();
        let x = QuadState::hover_at(Vector3::new(0.5, 0.5, 1.0));
        let u = RotorThrusts([1.0, 2.0, 3.0, 4.0]);
        let z = residual_input(&x, &u, ResidualVariant::AU, None).unwrap();
        assert_eq!(z.len(), 7);
        assert_eq!(&z.as_slice()[3..7], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(residual_input(&x, &u, ResidualVariant::Full, None).unwrap().len(), 17);
        let map = Arc::new(HeightMap::flat([0.0, 0.0], 10, 10, 0.2).unwrap());
        let z = residual_input(&x, &u, ResidualVariant::Ground, Some(map)).unwrap();
        assert_eq!(z.len(), 26);
        assert!(z.rows(17, 9).iter().all(|v| (*v - 0.8).abs() < 1e-15));
        assert!(residual_input(&x, &RotorThrusts::hover(&p), ResidualVariant::Ground, None).is_err());
    }

    #[test]
    fn embed_layouts() {
        let zero = residual_output_embed(&Vector::zeros(3), ResidualVariant::A).unwrap();
        assert_eq!(zero, Vector::zeros(13));
        let d = residual_output_embed(&Vector::from_column_slice(&[1.0, 2.0, 3.0]), ResidualVariant::A).unwrap();
        for r in 0..13 {
            let expected = match r {
                7 => 1.0,
                8 => 2.0,
                9 => 3.0,
                _ => 0.0,
            };
            assert_eq!(d[r], expected);
        }
        let out = Vector::from_column_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let d = residual_output_embed(&out, ResidualVariant::Full).unwrap();
        assert_eq!(&d.as_slice()[7..13], out.as_slice());
        assert!(d.rows(0, 7).iter().all(|v| *v == 0.0));
        assert!(matches!(
            residual_output_embed(&out, ResidualVariant::A),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn feature_jacobians_match_finite_differences() {
        let map = Arc::new(HeightMap::flat([-5.0, -5.0], 100, 100, 0.0).unwrap());
        for variant in [ResidualVariant::A, ResidualVariant::AU, ResidualVariant::Full, ResidualVariant::Ground] {
            let fm = QuadFeatures::new(variant, Some(map.clone())).unwrap();
            for seed in 0..5 {
                let x = random_state(seed);
                let u = Vector::from_column_slice(&[1.0, 2.0, 3.0, 4.0]);
                let d = fm.feature_jacobian(&x, &u, &x);
                let h = 1e-6;
                for c in 0..17 {
                    let (mut xp, mut xm, mut up, mut um) = (x.clone(), x.clone(), u.clone(), u.clone());
                    if c < 13 {
                        xp[c] += h;
                        xm[c] -= h;
                    } else {
                        up[c - 13] += h;
                        um[c - 13] -= h;
                    }
                    let fd = (fm.features(&xp, &up, &x) - fm.features(&xm, &um, &x)) / (2.0 * h);
                    assert!((d.column(c) - fd).amax() < 1e-7, "{variant} col {c}");
                }
            }
        }
    }

    #[test]
    fn combined_dynamics_adds_residual() {
        let p = QuadParams::default();
        let model = QuadModel::new(p.clone()).unwrap();
        let x = random_state(3);
        let u = RotorThrusts::hover(&p).to_vector();
        let nominal = model.eval(&x, &u);
        assert_eq!(combined_dynamics(&model, None, &x, &u).unwrap(), nominal);

        // Single linear layer with zero weights and bias c: constant residual.
        let c = [0.5, -1.0, 2.0];
        let net = MlpModel::from_layers(
            vec![(Matrix::zeros(3, 3), Vector::from_column_slice(&c))],
            Activation::Tanh,
            ResidualVariant::A,
        )
        .unwrap();
        let residual = ResidualModel::new(
            Arc::new(net),
            Arc::new(QuadFeatures::new(ResidualVariant::A, None).unwrap()),
        )
        .unwrap();
        let f = combined_dynamics(&model, Some(&residual), &x, &u).unwrap();
        let diff = f - nominal;
        for r in 0..13 {
            let expected = if (7..10).contains(&r) { c[r - 7] } else { 0.0 };
            assert!((diff[r] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn variant_mismatch_rejected() {
        let net = MlpModel::from_layers(
            vec![(Matrix::zeros(3, 7), Vector::zeros(3))],
            Activation::Tanh,
            ResidualVariant::AU,
        )
        .unwrap();
        let err = ResidualModel::new(
            Arc::new(net),
            Arc::new(QuadFeatures::new(ResidualVariant::A, None).unwrap()),
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    proptest::proptest! {
        #[test]
        fn embed_is_injective_on_rows(vals in proptest::collection::vec(-10.0f64..10.0, 6)) {
            for variant in [ResidualVariant::A, ResidualVariant::AU, ResidualVariant::Full, ResidualVariant::Ground, ResidualVariant::DiState] {
                let out = Vector::from_column_slice(&vals[..variant.output_dim()]);
                let d = residual_output_embed(&out, variant).unwrap();
                proptest::prop_assert_eq!(residual_output_extract(&d, variant), out.clone());
                let nonzero_elsewhere = (0..d.len())
                    .filter(|r| !variant.output_rows().contains(r))
                    .any(|r| d[r] != 0.0);
                proptest::prop_assert!(!nonzero_elsewhere);
            }
        }
    }
}
