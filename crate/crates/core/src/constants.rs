//! Fixed method constants in one place.

/// Number of garment types.
pub const N_CLOTHES: usize = 5;
/// Latent size for every garment except shoes.
pub const LATENT_DIM: usize = 18;
pub const LATENT_DIM_SHOES: usize = 4;

pub const LAMBDA_DP: f64 = 1.0;
pub const LAMBDA_REG: f64 = 0.1;
pub const LAMBDA_EXIST: f64 = 0.01;
pub const LAMBDA_GENDER: f64 = 0.01;

/// Latent regularization weight.
pub const ALPHA_SHOES: f64 = 0.1;
pub const ALPHA_OTHER: f64 = 1.0;

/// Distance-field cut-off (meters).
pub const D_MAX_SHOES: f64 = 0.01;
pub const D_MAX_OTHER: f64 = 0.1;

/// Query-point acceptance radius around lifted cloth points (meters).
pub const TAU_COAT: f64 = 0.10;
pub const TAU_OTHER: f64 = 0.03;

/// Segmentation pixels sampled per image.
pub const N_SAMPLE_POINTS: usize = 196;
/// Query grid resolution per axis.
pub const QUERY_GRID: usize = 21;
/// Existence score a garment must exceed to be decoded.
pub const EXISTENCE_THRESHOLD: f64 = 0.25;

/// Leg abduction of the A-pose used for pants and skirt boxes (degrees).
pub const APOSE_ABDUCTION_DEG: f64 = 10.0;
/// Body-cloth correspondence distance threshold (meters).
pub const BCC_THRESHOLD: f64 = 0.03;
/// Probability clamp for the cross-entropy terms.
pub const PROB_EPS: f64 = 1e-7;

/// Default marching cubes level (meters) and lattice size per axis.
pub const DEFAULT_ISO: f64 = 0.005;
pub const DEFAULT_RESOLUTION: usize = 64;
