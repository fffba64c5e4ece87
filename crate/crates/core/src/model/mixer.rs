use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_inputs, Forecaster};
use crate::error::{shape_err, Error, Result};
use crate::nn::{Dropout, Matrix, MixAxis, Mlp2, Mlp2Vars, Tape, Var};
use crate::patching::PatchGrid;

/// How the intra-patch and inter-patch heads of a block are arranged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    /// `intra(X) + inter(X^T)^T + X`
    #[default]
    Parallel,
    /// `inter(intra(X)^T)^T + X`
    SerialIntraFirst,
    /// `intra(inter(X^T)^T) + X`
    SerialInterFirst,
    /// `intra(X) + X`
    IntraOnly,
    /// `inter(X^T)^T + X`
    InterOnly,
}

impl HeadMode {
    pub const ALL: [HeadMode; 5] = [
        HeadMode::Parallel,
        HeadMode::SerialIntraFirst,
        HeadMode::SerialInterFirst,
        HeadMode::IntraOnly,
        HeadMode::InterOnly,
    ];

    pub fn uses_intra(self) -> bool {
        self != HeadMode::InterOnly
    }

    pub fn uses_inter(self) -> bool {
        self != HeadMode::IntraOnly
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HeadMode::Parallel => "parallel",
            HeadMode::SerialIntraFirst => "serial_intra_first",
            HeadMode::SerialInterFirst => "serial_inter_first",
            HeadMode::IntraOnly => "intra_only",
            HeadMode::InterOnly => "inter_only",
        }
    }
}

impl core::str::FromStr for HeadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HeadMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown head mode `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixerConfig {
    /// `C`
    pub channels: usize,
    /// `L`
    pub lookback: usize,
    /// `N`
    pub horizon: usize,
    /// `W`; the patch count is `L / W`.
    pub patch_len: usize,
    pub n_blocks: usize,
    /// Hidden width of each mixing MLP is `expansion_factor * in`.
    pub expansion_factor: usize,
    pub dropout: f64,
    pub head_mode: HeadMode,
    /// One parameter set reused for every channel instead of one per channel.
    pub shared_channels: bool,
}

impl Default for MixerConfig {
    fn default() -> Self {
        Self {
            channels: 1,
            lookback: 16,
            horizon: 1,
            patch_len: 4,
            n_blocks: 2,
            expansion_factor: 2,
            dropout: 0.0,
            head_mode: HeadMode::Parallel,
            shared_channels: false,
        }
    }
}

impl MixerConfig {
    /// `H`
    pub fn patch_count(&self) -> usize {
        self.lookback / self.patch_len
    }

    pub fn parameter_sets(&self) -> usize {
        if self.shared_channels {
            1
        } else {
            self.channels
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidArgument(msg));
        if self.channels == 0 || self.lookback == 0 || self.horizon == 0 {
            return bad(format!(
                "channels, lookback and horizon must be positive (got {}, {}, {})",
                self.channels, self.lookback, self.horizon
            ));
        }
        if self.patch_len == 0 || !self.lookback.is_multiple_of(self.patch_len) {
            return Err(Error::PatchDivisibility {
                len: self.lookback,
                patch_len: self.patch_len,
            });
        }
        if self.expansion_factor == 0 {
            return bad("expansion factor must be positive".to_string());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }
}

/// Parameters of one mixing MLP with input `n` and expansion `e`.
fn mlp2_params(n: usize, e: usize) -> usize {
    2 * e * n * n + e * n + n
}

/// Trainable parameters in the mixer blocks across all parameter sets.
pub fn mixing_param_count(cfg: &MixerConfig) -> usize {
    let (w, h, e) = (cfg.patch_len, cfg.patch_count(), cfg.expansion_factor);
    let mut per_block = 0;
    if cfg.head_mode.uses_intra() {
        per_block += mlp2_params(w, e);
    }
    if cfg.head_mode.uses_inter() {
        per_block += mlp2_params(h, e);
    }
    cfg.parameter_sets() * cfg.n_blocks * per_block
}

/// Weight-matrix entries (biases excluded) in the mixer blocks. With
/// `W = H = sqrt(L)` and both heads this is `4 e L` per block: linear in `L`.
pub fn mixing_weight_count(cfg: &MixerConfig) -> usize {
    let (w, h, e) = (cfg.patch_len, cfg.patch_count(), cfg.expansion_factor);
    let mut per_block = 0;
    if cfg.head_mode.uses_intra() {
        per_block += 2 * e * w * w;
    }
    if cfg.head_mode.uses_inter() {
        per_block += 2 * e * h * h;
    }
    cfg.parameter_sets() * cfg.n_blocks * per_block
}

/// Exact trainable parameter count of a [`MixerModel`] built from `cfg`.
pub fn param_count(cfg: &MixerConfig) -> usize {
    let projection = cfg.horizon * cfg.lookback + cfg.horizon;
    mixing_param_count(cfg) + cfg.parameter_sets() * projection
}

/// One mixer layer over an `H x W` patch grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MixerBlock {
    /// Mixes the within-patch axis (length `W`); absent for `InterOnly`.
    pub intra: Option<Mlp2>,
    /// Mixes the across-patch axis (length `H`); absent for `IntraOnly`.
    pub inter: Option<Mlp2>,
    pub mode: HeadMode,
    patch_count: usize,
    patch_len: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct BlockVars {
    intra: Option<Mlp2Vars>,
    inter: Option<Mlp2Vars>,
}

impl MixerBlock {
    pub fn random<R: Rng + ?Sized>(
        patch_count: usize,
        patch_len: usize,
        expansion: usize,
        mode: HeadMode,
        rng: &mut R,
    ) -> Self {
        let intra = mode
            .uses_intra()
            .then(|| Mlp2::random(patch_len, expansion * patch_len, patch_len, rng));
        let inter = mode
            .uses_inter()
            .then(|| Mlp2::random(patch_count, expansion * patch_count, patch_count, rng));
        Self {
            intra,
            inter,
            mode,
            patch_count,
            patch_len,
        }
    }

    pub fn zeros(patch_count: usize, patch_len: usize, expansion: usize, mode: HeadMode) -> Self {
        Self {
            intra: mode
                .uses_intra()
                .then(|| Mlp2::zeros(patch_len, expansion * patch_len, patch_len)),
            inter: mode
                .uses_inter()
                .then(|| Mlp2::zeros(patch_count, expansion * patch_count, patch_count)),
            mode,
            patch_count,
            patch_len,
        }
    }

    pub fn patch_count(&self) -> usize {
        self.patch_count
    }

    pub fn patch_len(&self) -> usize {
        self.patch_len
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        self.intra
            .iter()
            .chain(self.inter.iter())
            .flat_map(|m| m.parameters())
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        self.intra
            .iter_mut()
            .chain(self.inter.iter_mut())
            .flat_map(|m| m.parameters_mut())
            .collect()
    }

    /// Registers the block's parameters from `*next_id` upwards.
    pub fn register(&self, tape: &mut Tape, next_id: &mut usize) -> Result<BlockVars> {
        let mut reg = |m: &Option<Mlp2>, tape: &mut Tape| -> Result<Option<Mlp2Vars>> {
            m.as_ref()
                .map(|m| {
                    let v = m.register(tape, *next_id)?;
                    *next_id += Mlp2::PARAMS;
                    Ok(v)
                })
                .transpose()
        };
        let intra = reg(&self.intra, tape)?;
        let inter = reg(&self.inter, tape)?;
        Ok(BlockVars { intra, inter })
    }

    fn intra_head(&self, tape: &mut Tape, x: Var, vars: &BlockVars, dropout: Option<&mut Dropout<'_>>) -> Result<Var> {
        let (m, v) = self
            .intra
            .as_ref()
            .zip(vars.intra.as_ref())
            .expect("mode uses the intra head");
        m.record(tape, x, MixAxis::Cols, v, dropout)
    }

    /// Inter-patch head on a stack of `H x W` grids: transpose each grid,
    /// mix the rows of the transposed grids, transpose back.
    fn inter_head(&self, tape: &mut Tape, x: Var, vars: &BlockVars, dropout: Option<&mut Dropout<'_>>) -> Result<Var> {
        let (m, v) = self
            .inter
            .as_ref()
            .zip(vars.inter.as_ref())
            .expect("mode uses the inter head");
        let xt = tape.transpose_blocks(x, self.patch_count)?;
        let o = m.record(tape, xt, MixAxis::Cols, v, dropout)?;
        tape.transpose_blocks(o, self.patch_len)
    }

    /// Records the block on a `(B * H) x W` stack of patch grids.
    pub fn record(
        &self,
        tape: &mut Tape,
        x: Var,
        vars: &BlockVars,
        mut dropout: Option<&mut Dropout<'_>>,
    ) -> Result<Var> {
        let (rows, cols) = tape.value(x).shape();
        if cols != self.patch_len || rows % self.patch_count != 0 {
            return Err(shape_err(
                "mixer_block_forward",
                format!("stack of {}x{} grids", self.patch_count, self.patch_len),
                format!("{rows}x{cols}"),
            ));
        }
        let mixed = match self.mode {
            HeadMode::Parallel => {
                let a = self.intra_head(tape, x, vars, dropout.as_deref_mut())?;
                let b = self.inter_head(tape, x, vars, dropout.as_deref_mut())?;
                tape.add(a, b)?
            }
            HeadMode::SerialIntraFirst => {
                let a = self.intra_head(tape, x, vars, dropout.as_deref_mut())?;
                self.inter_head(tape, a, vars, dropout.as_deref_mut())?
            }
            HeadMode::SerialInterFirst => {
                let a = self.inter_head(tape, x, vars, dropout.as_deref_mut())?;
                self.intra_head(tape, a, vars, dropout.as_deref_mut())?
            }
            HeadMode::IntraOnly => self.intra_head(tape, x, vars, dropout)?,
            HeadMode::InterOnly => self.inter_head(tape, x, vars, dropout)?,
        };
        tape.add(mixed, x)
    }

    /// Inference on a single grid.
    pub fn forward(&self, g: &PatchGrid) -> Result<PatchGrid> {
        if (g.patch_count(), g.patch_len()) != (self.patch_count, self.patch_len) {
            return Err(shape_err(
                "mixer_block_forward",
                format!("{}x{} grid", self.patch_count, self.patch_len),
                format!("{}x{}", g.patch_count(), g.patch_len()),
            ));
        }
        let mut tape = Tape::new();
        let mut id = 0;
        let vars = self.register(&mut tape, &mut id)?;
        let x = tape.input(g.grid().clone());
        let out = self.record(&mut tape, x, &vars, None)?;
        Ok(PatchGrid::from_grid(tape.value(out).clone()))
    }
}

/// Final linear map from the flattened window (`L`) to the horizon (`N`).
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionParams {
    /// `N x L`
    pub weight: Matrix,
    /// `1 x N`
    pub bias: Matrix,
}

/// Blocks plus projection for one channel (or for all, when shared).
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStack {
    pub blocks: Vec<MixerBlock>,
    pub projection: ProjectionParams,
}

struct StackVars {
    blocks: Vec<BlockVars>,
    weight: Var,
    bias: Var,
}

impl ChannelStack {
    fn parameters(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = self.blocks.iter().flat_map(MixerBlock::parameters).collect();
        out.push(&self.projection.weight);
        out.push(&self.projection.bias);
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self
            .blocks
            .iter_mut()
            .flat_map(MixerBlock::parameters_mut)
            .collect();
        out.push(&mut self.projection.weight);
        out.push(&mut self.projection.bias);
        out
    }

    fn register(&self, tape: &mut Tape, next_id: &mut usize) -> Result<StackVars> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| b.register(tape, next_id))
            .collect::<Result<Vec<_>>>()?;
        let weight = tape.param(*next_id, &self.projection.weight)?;
        let bias = tape.param(*next_id + 1, &self.projection.bias)?;
        *next_id += 2;
        Ok(StackVars { blocks, weight, bias })
    }
}

/// The patch-mixing forecaster: per channel, patch the window, run the
/// mixer blocks, flatten and project to the horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct MixerModel {
    config: MixerConfig,
    /// One stack per channel, or a single stack when channels are shared.
    pub per_channel: Vec<ChannelStack>,
}

impl MixerModel {
    pub fn new<R: Rng + ?Sized>(config: MixerConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (h, w) = (config.patch_count(), config.patch_len);
        let bound = 1.0 / libm::sqrt(config.lookback as f64);
        let per_channel = (0..config.parameter_sets())
            .map(|_| {
                let blocks = (0..config.n_blocks)
                    .map(|_| MixerBlock::random(h, w, config.expansion_factor, config.head_mode, rng))
                    .collect();
                ChannelStack {
                    blocks,
                    projection: ProjectionParams {
                        weight: Matrix::uniform(config.horizon, config.lookback, bound, rng),
                        bias: Matrix::zeros(1, config.horizon),
                    },
                }
            })
            .collect();
        Ok(Self { config, per_channel })
    }

    /// All parameters zero.
    pub fn zeros(config: MixerConfig) -> Result<Self> {
        config.validate()?;
        let (h, w) = (config.patch_count(), config.patch_len);
        let per_channel = (0..config.parameter_sets())
            .map(|_| ChannelStack {
                blocks: (0..config.n_blocks)
                    .map(|_| MixerBlock::zeros(h, w, config.expansion_factor, config.head_mode))
                    .collect(),
                projection: ProjectionParams {
                    weight: Matrix::zeros(config.horizon, config.lookback),
                    bias: Matrix::zeros(1, config.horizon),
                },
            })
            .collect();
        Ok(Self { config, per_channel })
    }

    pub fn config(&self) -> &MixerConfig {
        &self.config
    }

    fn stack_for(&self, channel: usize) -> usize {
        if self.config.shared_channels {
            0
        } else {
            channel
        }
    }
}

impl Forecaster for MixerModel {
    fn channels(&self) -> usize {
        self.config.channels
    }

    fn lookback(&self) -> usize {
        self.config.lookback
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn parameters(&self) -> Vec<&Matrix> {
        self.per_channel.iter().flat_map(ChannelStack::parameters).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        self.per_channel
            .iter_mut()
            .flat_map(ChannelStack::parameters_mut)
            .collect()
    }

    fn record(&self, tape: &mut Tape, inputs: &[Matrix], mut dropout: Option<&mut Dropout<'_>>) -> Result<Var> {
        let cfg = &self.config;
        let batch = check_inputs(inputs, cfg.channels, cfg.lookback)?;
        let (h, w) = (cfg.patch_count(), cfg.patch_len);
        let mut next_id = 0;
        let vars = self
            .per_channel
            .iter()
            .map(|s| s.register(tape, &mut next_id))
            .collect::<Result<Vec<_>>>()?;

        let mut outputs = Vec::with_capacity(cfg.channels);
        for (c, input) in inputs.iter().enumerate() {
            let s = self.stack_for(c);
            let (stack, sv) = (&self.per_channel[s], &vars[s]);
            let x = tape.input(input.clone());
            let mut g = tape.reshape(x, batch * h, w)?;
            for (block, bv) in stack.blocks.iter().zip(&sv.blocks) {
                g = block.record(tape, g, bv, dropout.as_deref_mut())?;
            }
            let flat = tape.reshape(g, batch, cfg.lookback)?;
            let y = tape.matmul_t(flat, sv.weight)?;
            outputs.push(tape.add_row(y, sv.bias)?);
        }
        tape.concat_cols(&outputs)
    }
}
