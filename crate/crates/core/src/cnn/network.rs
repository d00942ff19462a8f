use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use petgraph::algo::toposort;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use super::conv::{conv2d, ConvParams, Precision};
use super::tensor::Tensor;
use super::weights::WeightFile;
use crate::error::{Error, Result};
use crate::frame_io::Plane;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { alpha: f32 },
}

impl Activation {
    #[inline]
    fn apply(self, v: f32) -> f32 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::LeakyRelu { alpha } => {
                if v >= 0.0 {
                    v
                } else {
                    alpha * v
                }
            }
        }
    }
}

impl Default for Activation {
    fn default() -> Self {
        Activation::LeakyRelu { alpha: 0.2 }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LayerOp {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        pad: usize,
    },
    Activation(Activation),
    Add,
    Concat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub id: String,
    #[serde(flatten)]
    pub op: LayerOp,
    pub inputs: Vec<String>,
}

impl LayerSpec {
    pub fn conv(id: impl Into<String>, input: impl Into<String>, in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        LayerSpec {
            id: id.into(),
            op: LayerOp::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride: 1,
                pad: kernel / 2,
            },
            inputs: vec![input.into()],
        }
    }

    pub fn activation(id: impl Into<String>, input: impl Into<String>, act: Activation) -> Self {
        LayerSpec {
            id: id.into(),
            op: LayerOp::Activation(act),
            inputs: vec![input.into()],
        }
    }

    pub fn add(id: impl Into<String>, inputs: &[&str]) -> Self {
        LayerSpec {
            id: id.into(),
            op: LayerOp::Add,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn concat(id: impl Into<String>, inputs: &[&str]) -> Self {
        LayerSpec {
            id: id.into(),
            op: LayerOp::Concat,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// A layer graph applied to one normalised plane.
///
/// The input tensor (id `input_id`) is the plane scaled to `[0, 1]`. When
/// `residual_global` is set the network output is added to that input before
/// de-normalisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub input_id: String,
    pub output_id: String,
    #[serde(default)]
    pub residual_global: bool,
    #[serde(default)]
    pub precision: Precision,
}

/// Result of validating a [`NetworkSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeTable {
    /// Layer indices in evaluation order.
    pub order: Vec<usize>,
    /// Output channels per tensor id, including the input.
    pub channels: HashMap<String, usize>,
    /// Receptive-field radius of the output in input samples, when every
    /// convolution is stride-1 and size-preserving.
    pub receptive_radius: Option<usize>,
}

impl NetworkSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("network description: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network spec serialises")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        NetworkSpec::from_json(&text)
    }

    pub fn layer(&self, id: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.id == id)
    }

    /// Number of dense blocks, i.e. distinct `<block>/` id prefixes.
    pub fn dense_blocks(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.id.split_once('/').map(|(b, _)| b))
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Checks references, acyclicity and channel arithmetic.
    pub fn validate(&self) -> Result<ShapeTable> {
        let mut graph: DiGraph<usize, ()> = DiGraph::new();
        let mut nodes: HashMap<&str, NodeIndex> = HashMap::new();
        let input_node = graph.add_node(usize::MAX);
        nodes.insert(&self.input_id, input_node);
        for (i, l) in self.layers.iter().enumerate() {
            if nodes.insert(&l.id, graph.add_node(i)).is_some() {
                return Err(Error::shape(&l.id, "duplicate layer id"));
            }
        }
        for l in &self.layers {
            if l.inputs.is_empty() {
                return Err(Error::shape(&l.id, "layer has no inputs"));
            }
            for src in &l.inputs {
                let from = nodes
                    .get(src.as_str())
                    .ok_or_else(|| Error::shape(&l.id, format!("unknown input `{src}`")))?;
                graph.add_edge(*from, nodes[l.id.as_str()], ());
            }
        }
        let sorted = toposort(&graph, None).map_err(|c| {
            let id = match graph[c.node_id()] {
                usize::MAX => self.input_id.clone(),
                i => self.layers[i].id.clone(),
            };
            Error::shape(id, "layer graph has a cycle")
        })?;
        let order: Vec<usize> = sorted
            .into_iter()
            .map(|n| graph[n])
            .filter(|&i| i != usize::MAX)
            .collect();

        let mut channels: HashMap<String, usize> = HashMap::new();
        let mut radius: HashMap<&str, Option<usize>> = HashMap::new();
        channels.insert(self.input_id.clone(), 1);
        radius.insert(&self.input_id, Some(0));
        for &i in &order {
            let l = &self.layers[i];
            let in_ch: Vec<usize> = l.inputs.iter().map(|s| channels[s.as_str()]).collect();
            let in_r = l
                .inputs
                .iter()
                .map(|s| radius[s.as_str()])
                .try_fold(0usize, |acc, r| r.map(|r| acc.max(r)));
            let (ch, r) = match &l.op {
                LayerOp::Conv2d {
                    in_ch: expect,
                    out_ch,
                    kernel,
                    stride,
                    pad,
                } => {
                    if l.inputs.len() != 1 {
                        return Err(Error::shape(&l.id, "convolution takes exactly one input"));
                    }
                    if *kernel == 0 || *stride == 0 || *out_ch == 0 {
                        return Err(Error::shape(&l.id, "kernel, stride and out_ch must be >= 1"));
                    }
                    if in_ch[0] != *expect {
                        return Err(Error::shape(
                            &l.id,
                            format!("declares {expect} input channels but `{}` has {}", l.inputs[0], in_ch[0]),
                        ));
                    }
                    let same = *stride == 1 && kernel % 2 == 1 && *pad == kernel / 2;
                    (*out_ch, if same { in_r.map(|r| r + kernel / 2) } else { None })
                }
                LayerOp::Activation(_) => {
                    if l.inputs.len() != 1 {
                        return Err(Error::shape(&l.id, "activation takes exactly one input"));
                    }
                    (in_ch[0], in_r)
                }
                LayerOp::Add => {
                    if l.inputs.len() < 2 {
                        return Err(Error::shape(&l.id, "add needs at least two inputs"));
                    }
                    if in_ch.iter().any(|&c| c != in_ch[0]) {
                        return Err(Error::shape(&l.id, format!("add inputs have channels {in_ch:?}")));
                    }
                    (in_ch[0], in_r)
                }
                LayerOp::Concat => (in_ch.iter().sum(), in_r),
            };
            channels.insert(l.id.clone(), ch);
            radius.insert(&l.id, r);
        }
        let out_ch = *channels
            .get(&self.output_id)
            .ok_or_else(|| Error::shape(&self.output_id, "output id is not a layer"))?;
        if out_ch != 1 {
            return Err(Error::shape(
                &self.output_id,
                format!("network output must have 1 channel, has {out_ch}"),
            ));
        }
        let receptive_radius = radius[self.output_id.as_str()];
        Ok(ShapeTable {
            order,
            channels,
            receptive_radius,
        })
    }
}

/// A validated network bound to its weights. Immutable and shareable.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    weights: WeightFile,
    table: ShapeTable,
    /// For each position in `table.order`, ids whose last consumer it is.
    release: Vec<Vec<String>>,
}

impl Network {
    pub fn new(spec: NetworkSpec, weights: WeightFile) -> Result<Self> {
        let table = spec.validate()?;
        for l in &spec.layers {
            if let LayerOp::Conv2d { in_ch, out_ch, kernel, .. } = l.op {
                let w = weights
                    .get(&l.id)
                    .ok_or_else(|| Error::shape(&l.id, "no weights for layer"))?;
                if w.shape() != (out_ch, in_ch, kernel, kernel) {
                    return Err(Error::shape(
                        &l.id,
                        format!(
                            "weights have shape {:?}, layer needs {:?}",
                            w.shape(),
                            (out_ch, in_ch, kernel, kernel)
                        ),
                    ));
                }
            }
        }
        for (id, _) in weights.iter() {
            match spec.layer(id) {
                Some(LayerSpec {
                    op: LayerOp::Conv2d { .. },
                    ..
                }) => {}
                _ => return Err(Error::Weights(format!("weights for unknown convolution `{id}`"))),
            }
        }
        let mut last_use: HashMap<&str, usize> = HashMap::new();
        for (pos, &i) in table.order.iter().enumerate() {
            for src in &spec.layers[i].inputs {
                last_use.insert(src, pos);
            }
        }
        let mut release = vec![Vec::new(); table.order.len()];
        for (id, pos) in last_use {
            if id != spec.output_id && id != spec.input_id {
                release[pos].push(id.to_string());
            }
        }
        Ok(Network {
            spec,
            weights,
            table,
            release,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn weights(&self) -> &WeightFile {
        &self.weights
    }

    pub fn shape_table(&self) -> &ShapeTable {
        &self.table
    }

    pub fn receptive_radius(&self) -> Option<usize> {
        self.table.receptive_radius
    }

    /// Evaluates the graph on an input tensor (no normalisation, no global
    /// residual).
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        if input.channels() != 1 {
            return Err(Error::shape(&self.spec.input_id, "input must have 1 channel"));
        }
        let mut values: HashMap<&str, Tensor> = HashMap::new();
        values.insert(&self.spec.input_id, input.clone());
        for (pos, &i) in self.table.order.iter().enumerate() {
            let l = &self.spec.layers[i];
            let args: Vec<&Tensor> = l.inputs.iter().map(|s| &values[s.as_str()]).collect();
            let out = match &l.op {
                LayerOp::Conv2d { stride, pad, .. } => conv2d(
                    args[0],
                    self.weights.get(&l.id).expect("validated"),
                    ConvParams {
                        stride: *stride,
                        pad: *pad,
                    },
                    self.spec.precision,
                    &l.id,
                )?,
                LayerOp::Activation(act) => {
                    let mut t = args[0].clone();
                    for v in t.data_mut() {
                        *v = act.apply(*v);
                    }
                    t
                }
                LayerOp::Add => Tensor::sum(&args).map_err(|e| Error::shape(&l.id, e.to_string()))?,
                LayerOp::Concat => Tensor::concat(&args).map_err(|e| Error::shape(&l.id, e.to_string()))?,
            };
            values.insert(&l.id, out);
            for id in &self.release[pos] {
                values.remove(id.as_str());
            }
        }
        Ok(values
            .remove(self.spec.output_id.as_str())
            .expect("output computed"))
    }

    /// Normalises `plane`, runs the network, applies the global residual and
    /// converts back to integer samples.
    pub fn apply_plane(&self, plane: &Plane) -> Result<Plane> {
        let peak = plane.max_value() as f32;
        let scale = 1.0 / peak;
        let input = Tensor::from_vec(
            1,
            plane.height(),
            plane.width(),
            plane.data().iter().map(|&v| v as f32 * scale).collect(),
        )?;
        let mut out = self.forward(&input)?;
        if out.shape() != input.shape() {
            return Err(Error::shape(
                &self.spec.output_id,
                format!("output shape {:?} differs from input {:?}", out.shape(), input.shape()),
            ));
        }
        if self.spec.residual_global {
            for (o, i) in out.data_mut().iter_mut().zip(input.data()) {
                *o += i;
            }
        }
        let samples = out
            .data()
            .iter()
            .map(|&v| (v * peak).round().clamp(0.0, peak) as u16)
            .collect();
        Plane::from_vec(plane.width(), plane.height(), plane.bit_depth(), samples)
    }
}
