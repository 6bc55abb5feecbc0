use crate::error::ValidationError;

/// Post-LayerNorm affine parameters and the joint-space projection for one
/// exit layer of the visual encoder.
///
/// `proj` is `d_star × d`, row-major: `proj[i * d + j]` maps hidden unit `i`
/// to joint dimension `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams {
    d_star: usize,
    d: usize,
    ln_gamma: Vec<f32>,
    ln_beta: Vec<f32>,
    ln_eps: f64,
    proj: Vec<f32>,
    exit_layer: u32,
    patch_grid: usize,
}

impl ProjectionParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        d_star: usize,
        d: usize,
        ln_gamma: Vec<f32>,
        ln_beta: Vec<f32>,
        ln_eps: f64,
        proj: Vec<f32>,
        exit_layer: u32,
        patch_grid: usize,
    ) -> Result<Self, ValidationError> {
        if d_star == 0 {
            return Err(ValidationError::Empty("d_star"));
        }
        if d == 0 {
            return Err(ValidationError::Empty("d"));
        }
        if patch_grid == 0 {
            return Err(ValidationError::Empty("patch grid"));
        }
        if !(ln_eps > 0.0 && ln_eps.is_finite()) {
            return Err(ValidationError::OutOfRange {
                name: "ln_eps",
                value: ln_eps,
                min: f64::MIN_POSITIVE,
                max: f64::MAX,
            });
        }
        for (what, v, n) in [
            ("ln_gamma", &ln_gamma, d_star),
            ("ln_beta", &ln_beta, d_star),
            ("projection", &proj, d_star * d),
        ] {
            if v.len() != n {
                return Err(ValidationError::Length {
                    what,
                    expected: n,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ValidationError::NonFinite(what));
            }
        }
        Ok(Self {
            d_star,
            d,
            ln_gamma,
            ln_beta,
            ln_eps,
            proj,
            exit_layer,
            patch_grid,
        })
    }

    pub fn d_star(&self) -> usize {
        self.d_star
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn ln_gamma(&self) -> &[f32] {
        &self.ln_gamma
    }

    pub fn ln_beta(&self) -> &[f32] {
        &self.ln_beta
    }

    pub fn ln_eps(&self) -> f64 {
        self.ln_eps
    }

    pub fn proj(&self) -> &[f32] {
        &self.proj
    }

    pub fn exit_layer(&self) -> u32 {
        self.exit_layer
    }

    pub fn patch_grid(&self) -> usize {
        self.patch_grid
    }

    pub fn with_exit_layer(mut self, layer: u32) -> Self {
        self.exit_layer = layer;
        self
    }
}
