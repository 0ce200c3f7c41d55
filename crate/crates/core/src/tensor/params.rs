use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

/// Architecture of the feed-forward classifier.
///
/// An empty `hidden_dims` gives plain softmax regression.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl ModelSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize) -> Result<Self> {
        let spec = ModelSpec {
            input_dim,
            hidden_dims,
            num_classes,
            activation: Activation::Relu,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 {
            return Err(Error::config("model.input_dim must be >= 1"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("model.num_classes must be >= 2"));
        }
        if let Some(i) = self.hidden_dims.iter().position(|&h| h == 0) {
            return Err(Error::config(format!("model.hidden_dims[{i}] must be >= 1")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every dense layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in self.hidden_dims.iter().chain(std::iter::once(&self.num_classes)) {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims
    }

    pub fn layout(&self) -> Layout {
        let entries = self
            .layer_dims()
            .into_iter()
            .enumerate()
            .flat_map(|(l, (fan_in, fan_out))| {
                [
                    LayoutEntry::new(format!("fc{l}.weight"), vec![fan_out, fan_in]),
                    LayoutEntry::new(format!("fc{l}.bias"), vec![fan_out]),
                ]
            })
            .collect();
        Layout { entries }
    }

    pub fn num_params(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| (i + 1) * o).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

impl LayoutEntry {
    pub fn new(name: impl Into<String>, shape: Vec<usize>) -> Self {
        LayoutEntry {
            name: name.into(),
            shape,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered description of how a flat parameter array splits into tensors.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub entries: Vec<LayoutEntry>,
}

impl Layout {
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(LayoutEntry::len).sum()
    }

    /// Textual form used in checkpoints: `name:d0xd1;name:d0`.
    pub fn descriptor(&self) -> String {
        self.to_string()
    }

    pub fn parse_descriptor(text: &str) -> Result<Self> {
        if text.is_empty() {
            return Ok(Layout::default());
        }
        let entries = text
            .split(';')
            .map(|item| {
                let (name, dims) = item
                    .rsplit_once(':')
                    .ok_or_else(|| Error::Format(format!("layout entry `{item}` has no shape")))?;
                if name.is_empty() {
                    return Err(Error::Format("layout entry with empty name".into()));
                }
                let shape = dims
                    .split('x')
                    .map(|d| {
                        d.parse::<usize>()
                            .map_err(|_| Error::Format(format!("bad dimension `{d}` in `{item}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(LayoutEntry::new(name, shape))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Layout { entries })
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{}:", e.name)?;
            for (j, d) in e.shape.iter().enumerate() {
                if j > 0 {
                    f.write_str("x")?;
                }
                write!(f, "{d}")?;
            }
        }
        Ok(())
    }
}

/// Flat, ordered model weights together with their layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    values: Vec<f64>,
    layout: Layout,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>, layout: Layout) -> Result<Self> {
        if values.len() != layout.num_values() {
            return Err(Error::config(format!(
                "parameter count {} does not match layout size {}",
                values.len(),
                layout.num_values()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("parameter {i} is not finite")));
        }
        Ok(ParameterVector { values, layout })
    }

    pub fn zeros(layout: Layout) -> Self {
        ParameterVector {
            values: vec![0.0; layout.num_values()],
            layout,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access for in-place updates. Callers keep values finite.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Slice of the named tensor.
    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        let mut offset = 0;
        for e in &self.layout.entries {
            if e.name == name {
                return Some(&self.values[offset..offset + e.len()]);
            }
            offset += e.len();
        }
        None
    }

    pub fn check_matches(&self, spec: &ModelSpec) -> Result<()> {
        let expected = spec.layout();
        if self.layout != expected {
            return Err(Error::config(format!(
                "parameter layout `{}` does not match model layout `{}`",
                self.layout, expected
            )));
        }
        Ok(())
    }
}
