use serde::{Deserialize, Serialize};

use super::conv::Precision;
use super::network::{Activation, LayerSpec, NetworkSpec};

/// Shape of a cascaded residual-dense post-processing network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfrnetConfig {
    pub blocks: usize,
    pub convs_per_block: usize,
    pub channels: usize,
    pub growth: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for MfrnetConfig {
    fn default() -> Self {
        MfrnetConfig {
            blocks: 4,
            convs_per_block: 4,
            channels: 32,
            growth: 16,
            activation: Activation::default(),
        }
    }
}

impl MfrnetConfig {
    pub fn new(blocks: usize, convs_per_block: usize, channels: usize, growth: usize) -> Self {
        MfrnetConfig {
            blocks: blocks.max(1),
            convs_per_block: convs_per_block.max(1),
            channels: channels.max(1),
            growth: growth.max(1),
            activation: Activation::default(),
        }
    }
}

/// Builds the residual-dense cascade:
///
/// * `head`: 3×3 conv 1 → `channels`, activation.
/// * block `b` reads the previous block's output (the head for `b = 0`)
///   concatenated with the outputs of all earlier blocks and the head, so
///   features from every previous block are reused.
/// * inside a block, dense conv `j` (3×3, `growth` outputs, activation)
///   sees the block input plus every earlier dense output of the block.
/// * a 1×1 fusion conv maps the block's concatenated features back to
///   `channels`, and the previous block's output is added to it.
/// * `tail`: 3×3 conv `channels` → 1, with the global input residual on.
///
/// Block layers are named `b<k>/...`.
pub fn build_mfrnet_style(cfg: &MfrnetConfig) -> NetworkSpec {
    let act = cfg.activation;
    let c = cfg.channels;
    let g = cfg.growth;
    let mut layers = vec![
        LayerSpec::conv("head", "input", 1, c, 3),
        LayerSpec::activation("head_act", "head", act),
    ];
    // Outputs available for feature reuse, newest first.
    let mut previous: Vec<String> = vec!["head_act".into()];
    for b in 0..cfg.blocks {
        let p = format!("b{b}");
        let primary = previous[0].clone();
        let (block_in, block_in_ch) = if previous.len() == 1 {
            (primary.clone(), c)
        } else {
            let id = format!("{p}/in");
            let refs: Vec<&str> = previous.iter().map(String::as_str).collect();
            layers.push(LayerSpec::concat(&id, &refs));
            (id, c * previous.len())
        };
        let mut features = vec![block_in.clone()];
        let mut feat_ch = block_in_ch;
        let mut current = block_in;
        for j in 0..cfg.convs_per_block {
            let conv = format!("{p}/conv{j}");
            let act_id = format!("{conv}_act");
            layers.push(LayerSpec::conv(&conv, &current, feat_ch, g, 3));
            layers.push(LayerSpec::activation(&act_id, &conv, act));
            features.push(act_id);
            feat_ch += g;
            let cat = format!("{p}/cat{j}");
            let refs: Vec<&str> = features.iter().map(String::as_str).collect();
            layers.push(LayerSpec::concat(&cat, &refs));
            current = cat;
        }
        let fuse = format!("{p}/fuse");
        layers.push(LayerSpec::conv(&fuse, &current, feat_ch, c, 1));
        let out = format!("{p}/out");
        layers.push(LayerSpec::add(&out, &[&fuse, &primary]));
        previous.insert(0, out);
    }
    layers.push(LayerSpec::conv("tail", &previous[0], c, 1, 3));
    NetworkSpec {
        layers,
        input_id: "input".into(),
        output_id: "tail".into(),
        residual_global: true,
        precision: Precision::Single,
    }
}
