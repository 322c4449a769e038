//! Architecture descriptors and the flat parameter layout they imply.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use super::ModelError;

/// Short architecture name used on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArchId {
    Conv,
    Dense,
}

impl ArchId {
    pub fn as_str(self) -> &'static str {
        match self {
            ArchId::Conv => "conv",
            ArchId::Dense => "dense",
        }
    }

    /// Full-size descriptor for 28x28 inputs and ten classes.
    pub fn descriptor(self) -> Architecture {
        match self {
            ArchId::Conv => Architecture::Conv {
                rows: 28,
                cols: 28,
                kernel: 3,
                filters: 32,
                hidden: 128,
                classes: 10,
            },
            ArchId::Dense => Architecture::Dense {
                input: 784,
                hidden: 128,
                classes: 10,
            },
        }
    }
}

impl fmt::Display for ArchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "conv" => Ok(ArchId::Conv),
            "dense" => Ok(ArchId::Dense),
            other => Err(format!("unknown architecture `{other}` (expected conv or dense)")),
        }
    }
}

/// Network shape.
///
/// `Dense`: input -> hidden (ReLU) -> classes (softmax).
/// `Conv`: single-channel `rows x cols` input -> `kernel x kernel` valid
/// convolution with `filters` output maps, stride 1, ReLU, no pooling ->
/// hidden (ReLU) -> classes (softmax).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Dense {
        input: usize,
        hidden: usize,
        classes: usize,
    },
    Conv {
        rows: usize,
        cols: usize,
        kernel: usize,
        filters: usize,
        hidden: usize,
        classes: usize,
    },
}

/// Offsets of every parameter block inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    /// Conv kernel stored as `(kernel*kernel) x filters`, row-major.
    pub conv_weights: Option<Range<usize>>,
    pub conv_bias: Option<Range<usize>>,
    /// `features x hidden`, row-major.
    pub hidden_weights: Range<usize>,
    pub hidden_bias: Range<usize>,
    /// `hidden x classes`, row-major.
    pub output_weights: Range<usize>,
    pub output_bias: Range<usize>,
    pub total: usize,
}

impl Architecture {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = match *self {
            Architecture::Dense {
                input,
                hidden,
                classes,
            } => input > 0 && hidden > 0 && classes >= 2,
            Architecture::Conv {
                rows,
                cols,
                kernel,
                filters,
                hidden,
                classes,
            } => {
                kernel > 0
                    && rows >= kernel
                    && cols >= kernel
                    && filters > 0
                    && hidden > 0
                    && classes >= 2
            }
        };
        if ok {
            Ok(())
        } else {
            Err(ModelError::UnsupportedArchitecture(self.to_string()))
        }
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            Architecture::Dense { input, .. } => input,
            Architecture::Conv { rows, cols, .. } => rows * cols,
        }
    }

    pub fn classes(&self) -> usize {
        match *self {
            Architecture::Dense { classes, .. } | Architecture::Conv { classes, .. } => classes,
        }
    }

    pub fn hidden(&self) -> usize {
        match *self {
            Architecture::Dense { hidden, .. } | Architecture::Conv { hidden, .. } => hidden,
        }
    }

    /// Output grid of the convolution, if any.
    pub fn conv_output(&self) -> Option<(usize, usize)> {
        match *self {
            Architecture::Dense { .. } => None,
            Architecture::Conv {
                rows, cols, kernel, ..
            } => Some((rows - kernel + 1, cols - kernel + 1)),
        }
    }

    /// Width of the vector fed into the hidden dense layer.
    pub fn features_dim(&self) -> usize {
        match *self {
            Architecture::Dense { input, .. } => input,
            Architecture::Conv { filters, .. } => {
                let (r, c) = self.conv_output().unwrap_or((0, 0));
                r * c * filters
            }
        }
    }

    pub fn layout(&self) -> Layout {
        let mut cursor = 0;
        let mut take = |len: usize| {
            let r = cursor..cursor + len;
            cursor += len;
            r
        };
        let (conv_weights, conv_bias) = match *self {
            Architecture::Conv {
                kernel, filters, ..
            } => (Some(take(kernel * kernel * filters)), Some(take(filters))),
            Architecture::Dense { .. } => (None, None),
        };
        let hidden = self.hidden();
        let classes = self.classes();
        let hidden_weights = take(self.features_dim() * hidden);
        let hidden_bias = take(hidden);
        let output_weights = take(hidden * classes);
        let output_bias = take(classes);
        Layout {
            conv_weights,
            conv_bias,
            hidden_weights,
            hidden_bias,
            output_weights,
            output_bias,
            total: cursor,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Architecture::Dense {
                input,
                hidden,
                classes,
            } => write!(f, "dense input={input} hidden={hidden} classes={classes}"),
            Architecture::Conv {
                rows,
                cols,
                kernel,
                filters,
                hidden,
                classes,
            } => write!(
                f,
                "conv rows={rows} cols={cols} kernel={kernel} filters={filters} hidden={hidden} classes={classes}"
            ),
        }
    }
}

impl FromStr for Architecture {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::UnsupportedArchitecture(s.to_string());
        let mut tokens = s.split_whitespace();
        let kind = tokens.next().ok_or_else(bad)?;
        let mut fields = std::collections::BTreeMap::new();
        for tok in tokens {
            let (k, v) = tok.split_once('=').ok_or_else(bad)?;
            let v: usize = v.parse().map_err(|_| bad())?;
            if fields.insert(k, v).is_some() {
                return Err(bad());
            }
        }
        let mut get = |k: &str| fields.remove(k).ok_or_else(bad);
        let arch = match kind {
            "dense" => Architecture::Dense {
                input: get("input")?,
                hidden: get("hidden")?,
                classes: get("classes")?,
            },
            "conv" => Architecture::Conv {
                rows: get("rows")?,
                cols: get("cols")?,
                kernel: get("kernel")?,
                filters: get("filters")?,
                hidden: get("hidden")?,
                classes: get("classes")?,
            },
            _ => return Err(bad()),
        };
        if !fields.is_empty() {
            return Err(bad());
        }
        arch.validate()?;
        Ok(arch)
    }
}
