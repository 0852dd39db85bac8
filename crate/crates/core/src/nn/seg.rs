use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Bindings, Graph, ParamSet, Tensor, Var};

use super::{bind_frozen, check_divisible, ConvLayer, Init};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegConfig {
    pub widths: Vec<usize>,
    pub classes: usize,
    pub in_channels: usize,
    /// Start with an all-zero classifier so initial posteriors are uniform.
    pub zero_init_head: bool,
}

impl Default for SegConfig {
    fn default() -> Self {
        Self {
            widths: vec![16, 32, 64],
            classes: 6,
            in_channels: 3,
            zero_init_head: true,
        }
    }
}

impl SegConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) || self.classes < 2 {
            return Err(Error::Config(format!(
                "segmentation widths {:?} / classes {} invalid",
                self.widths, self.classes
            )));
        }
        if self.classes > 256 {
            return Err(Error::Config("at most 256 classes fit in a label byte".into()));
        }
        Ok(())
    }

    pub fn spatial_divisor(&self) -> usize {
        1 << (self.widths.len() - 1)
    }
}

#[derive(Clone, Debug)]
struct Residual {
    conv1: ConvLayer,
    conv2: ConvLayer,
    proj: Option<ConvLayer>,
}

impl Residual {
    fn forward<T: Scalar>(&self, g: &mut Graph<T>, b: &Bindings, x: Var) -> Result<Var> {
        let y = self.conv1.forward(g, b, x)?;
        let y = g.relu(y);
        let y = self.conv2.forward(g, b, y)?;
        let shortcut = match &self.proj {
            Some(p) => p.forward(g, b, x)?,
            None => x,
        };
        let s = g.add(y, shortcut)?;
        Ok(g.relu(s))
    }
}

/// Encoder/decoder with residual stages and additive skip connections.
#[derive(Clone, Debug)]
pub struct SegNet<T> {
    config: SegConfig,
    pub params: ParamSet<T>,
    stem: ConvLayer,
    stages: Vec<Residual>,
    /// `decoders[i]` maps level `i + 1` back to level `i`; applied deepest first.
    decoders: Vec<ConvLayer>,
    head: ConvLayer,
}

impl<T: Scalar> SegNet<T> {
    pub fn new(config: SegConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let w = &config.widths;

        let stem = ConvLayer::new(&mut params, &mut rng, "seg.stem", config.in_channels, w[0], 3, 1, Init::He);
        let mut stages = Vec::new();
        for i in 0..w.len() {
            let (cin, stride) = if i == 0 { (w[0], 1) } else { (w[i - 1], 2) };
            let name = format!("seg.stage{i}");
            let conv1 = ConvLayer::new(&mut params, &mut rng, &format!("{name}.conv1"), cin, w[i], 3, stride, Init::He);
            let conv2 = ConvLayer::new(&mut params, &mut rng, &format!("{name}.conv2"), w[i], w[i], 3, 1, Init::He);
            let proj = (stride != 1 || cin != w[i]).then(|| {
                ConvLayer::new(&mut params, &mut rng, &format!("{name}.proj"), cin, w[i], 1, stride, Init::He)
            });
            stages.push(Residual { conv1, conv2, proj });
        }
        let decoders = (0..w.len() - 1)
            .map(|i| {
                ConvLayer::new(&mut params, &mut rng, &format!("seg.dec{i}.conv"), w[i + 1], w[i], 3, 1, Init::He)
            })
            .collect();
        let head_init = if config.zero_init_head { Init::Zero } else { Init::He };
        let head = ConvLayer::new(&mut params, &mut rng, "seg.head", w[0], config.classes, 1, 1, head_init);
        Ok(Self {
            config,
            params,
            stem,
            stages,
            decoders,
            head,
        })
    }

    pub fn config(&self) -> &SegConfig {
        &self.config
    }

    /// `[N,3,H,W] -> [N,C,H,W]` class logits.
    pub fn forward(&self, g: &mut Graph<T>, b: &Bindings, x: Var) -> Result<Var> {
        check_divisible(g.value(x), self.config.spatial_divisor(), "seg_forward")?;
        let h = self.stem.forward(g, b, x)?;
        let mut h = g.relu(h);
        let mut features = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            h = stage.forward(g, b, h)?;
            features.push(h);
        }
        let mut d = features.pop().expect("at least one stage");
        for (i, dec) in self.decoders.iter().enumerate().rev() {
            let up = g.upsample_nearest2x(d)?;
            let y = dec.forward(g, b, up)?;
            let y = g.relu(y);
            d = g.add(y, features[i])?;
        }
        self.head.forward(g, b, d)
    }

    pub fn seg_forward(&self, fused: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let b = bind_frozen(&self.params, &mut g);
        let x = g.constant(fused.clone());
        let y = self.forward(&mut g, &b, x)?;
        Ok(g.value(y).clone())
    }
}
