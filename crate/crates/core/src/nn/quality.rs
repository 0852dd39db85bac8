use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Bindings, Graph, ParamSet, Tensor, Var};

use super::{bind_frozen, check_divisible, ConvLayer, Init};

/// Parameter tag for the fine-tunable tail: both convolutions of the last
/// decoder block and the final 1x1 convolution.
pub const HEAD3_TAG: &str = "head3";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityConfig {
    /// Channel width per resolution level; the last entry is the bottleneck.
    pub widths: Vec<usize>,
    pub in_channels: usize,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            widths: vec![8, 16, 32],
            in_channels: 3,
        }
    }
}

impl QualityConfig {
    /// A 5-level U-Net at a quarter of the classic 64..1024 widths.
    pub fn quarter_width_unet() -> Self {
        Self {
            widths: vec![16, 32, 64, 128, 256],
            in_channels: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) || self.in_channels == 0 {
            return Err(Error::Config(format!(
                "quality widths {:?} need at least two non-zero levels",
                self.widths
            )));
        }
        Ok(())
    }

    /// Required divisor of input height and width.
    pub fn spatial_divisor(&self) -> usize {
        1 << (self.widths.len() - 1)
    }
}

#[derive(Clone, Debug)]
struct Block {
    conv1: ConvLayer,
    conv2: ConvLayer,
}

impl Block {
    fn forward<T: Scalar>(&self, g: &mut Graph<T>, b: &Bindings, x: Var) -> Result<Var> {
        let y = self.conv1.forward(g, b, x)?;
        let y = g.relu(y);
        let y = self.conv2.forward(g, b, y)?;
        Ok(g.relu(y))
    }
}

/// Split of parameter names into frozen and trainable sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub frozen: Vec<String>,
    pub trainable: Vec<String>,
}

/// U-Net mapping an RGB image to a per-pixel quality in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct QualityNet<T> {
    config: QualityConfig,
    pub params: ParamSet<T>,
    encoders: Vec<Block>,
    bottleneck: Block,
    /// Ordered deepest first; the last entry is the full-resolution block.
    decoders: Vec<Block>,
    head: ConvLayer,
}

impl<T: Scalar> QualityNet<T> {
    pub fn new(config: QualityConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let widths = &config.widths;
        let levels = widths.len();

        let mut block = |params: &mut ParamSet<T>, name: String, cin: usize, cout: usize| Block {
            conv1: ConvLayer::new(params, &mut rng, &format!("{name}.conv1"), cin, cout, 3, 1, Init::He),
            conv2: ConvLayer::new(params, &mut rng, &format!("{name}.conv2"), cout, cout, 3, 1, Init::He),
        };

        let mut encoders = Vec::new();
        let mut cin = config.in_channels;
        for (i, &w) in widths[..levels - 1].iter().enumerate() {
            encoders.push(block(&mut params, format!("quality.enc{i}"), cin, w));
            cin = w;
        }
        let bottleneck = block(&mut params, "quality.bottleneck".into(), cin, widths[levels - 1]);
        let mut decoders = Vec::new();
        for i in (0..levels - 1).rev() {
            let cin = widths[i + 1] + widths[i];
            decoders.push(block(&mut params, format!("quality.dec{i}"), cin, widths[i]));
        }
        let head = ConvLayer::new(&mut params, &mut rng, "quality.head", widths[0], 1, 1, 1, Init::He);

        let last = decoders.last().expect("at least one decoder");
        for id in [
            last.conv1.weight,
            last.conv1.bias,
            last.conv2.weight,
            last.conv2.bias,
            head.weight,
            head.bias,
        ] {
            params.tag(id, HEAD3_TAG);
        }
        Ok(Self {
            config,
            params,
            encoders,
            bottleneck,
            decoders,
            head,
        })
    }

    pub fn config(&self) -> &QualityConfig {
        &self.config
    }

    /// Graph-building forward pass: `[N,3,H,W] -> [N,1,H,W]` through a sigmoid.
    pub fn forward(&self, g: &mut Graph<T>, b: &Bindings, x: Var) -> Result<Var> {
        check_divisible(g.value(x), self.config.spatial_divisor(), "quality_forward")?;
        let mut skips = Vec::with_capacity(self.encoders.len());
        let mut h = x;
        for enc in &self.encoders {
            let y = enc.forward(g, b, h)?;
            skips.push(y);
            h = g.max_pool2x(y)?;
        }
        h = self.bottleneck.forward(g, b, h)?;
        for dec in &self.decoders {
            let skip = skips.pop().expect("one skip per decoder");
            let up = g.upsample_nearest2x(h)?;
            let cat = g.concat_channels(up, skip)?;
            h = dec.forward(g, b, cat)?;
        }
        let logits = self.head.forward(g, b, h)?;
        Ok(g.sigmoid(logits))
    }

    /// Inference on a batch without recording gradients.
    pub fn quality_forward(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let b = bind_frozen(&self.params, &mut g);
        let x = g.constant(image.clone());
        let y = self.forward(&mut g, &b, x)?;
        Ok(g.value(y).clone())
    }

    /// Freeze everything except the `head3` tail.
    pub fn freeze_except_head3(&mut self) -> Partition {
        let mut partition = Partition {
            frozen: Vec::new(),
            trainable: Vec::new(),
        };
        for p in self.params.iter_mut() {
            p.trainable = p.tags.iter().any(|t| t == HEAD3_TAG);
            if p.trainable {
                partition.trainable.push(p.name.clone());
            } else {
                partition.frozen.push(p.name.clone());
            }
        }
        partition
    }

    pub fn unfreeze_all(&mut self) {
        self.params.set_all_trainable(true);
    }
}
