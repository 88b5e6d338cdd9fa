//! Plain-text container for trained models.
//!
//! ```text
//! waferbench-checkpoint v1
//! kind lstm
//! meta hidden_dim 4
//! tensor cell.input.w 4 1
//! 1.25e-1
//! ...
//! end
//! ```
//!
//! Values are written in shortest round-trip exponent form, so saving a loaded
//! checkpoint reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::dataset::Label;
use crate::htm::{BucketEncoder, HtmPipeline, SdrClassifier, SpatialPooler, SpatialPoolerConfig};
use crate::lstm::{Gate, LstmCellParams, LstmConfig, LstmMode, LstmNetwork, LstmParams};
use crate::model::TrainedModel;
use crate::nn::{Activation, DenseLayer, DenseNetwork, NetworkSpec, Parameters};
use crate::{Error, Result};

const MAGIC: &str = "waferbench-checkpoint v1";

#[derive(Default)]
struct Writer {
    out: String,
}

impl Writer {
    fn meta(&mut self, key: &str, value: impl std::fmt::Display) {
        writeln!(self.out, "meta {key} {value}").unwrap();
    }

    fn tensor(&mut self, name: &str, m: &Array2<f64>) {
        writeln!(self.out, "tensor {name} {} {}", m.nrows(), m.ncols()).unwrap();
        for row in m.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            self.out.push_str(&line.join(" "));
            self.out.push('\n');
        }
    }

    fn vector(&mut self, name: &str, v: &Array1<f64>) {
        self.tensor(name, &v.clone().insert_axis(ndarray::Axis(0)));
    }
}

fn join<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn encode(model: &TrainedModel) -> String {
    let mut w = Writer::default();
    writeln!(w.out, "{MAGIC}\nkind {}", model.kind()).unwrap();
    match model {
        TrainedModel::Dense(net) => write_dense(&mut w, net, ""),
        TrainedModel::Lstm(net) => {
            let c = &net.config;
            w.meta("input_dim", c.input_dim);
            w.meta("hidden_dim", c.hidden_dim);
            w.meta("time_steps", c.time_steps);
            w.meta(
                "mode",
                match c.mode {
                    LstmMode::Sequential => "sequential",
                    LstmMode::Windowed => "windowed",
                },
            );
            for g in Gate::ALL {
                let p = net.params.cell.gate(g);
                w.tensor(&format!("cell.{}.w", g.name()), &p.w);
                w.tensor(&format!("cell.{}.u", g.name()), &p.u);
                w.vector(&format!("cell.{}.b", g.name()), &p.b);
            }
            w.vector("head.w", &net.params.head_w);
            w.vector("head.b", &Array1::from(vec![net.params.head_b]));
        }
        TrainedModel::Htm(p) => {
            let c = &p.pooler.config;
            w.meta("bins", p.encoder.bins);
            w.meta("input_width", p.pooler.input_width);
            w.meta("num_columns", c.num_columns);
            w.meta("active_columns", c.active_columns);
            w.meta("potential_fraction", format!("{:e}", c.potential_fraction));
            w.meta("permanence_threshold", format!("{:e}", c.permanence_threshold));
            w.meta("permanence_increment", format!("{:e}", c.permanence_increment));
            w.meta("permanence_decrement", format!("{:e}", c.permanence_decrement));
            w.meta("seed", c.seed);
            w.vector("encoder.min", &Array1::from(p.encoder.min.clone()));
            w.vector("encoder.max", &Array1::from(p.encoder.max.clone()));
            let pool = p.pooler.potential.first().map_or(0, Vec::len);
            let idx = Array2::from_shape_fn((c.num_columns, pool), |(i, j)| p.pooler.potential[i][j] as f64);
            let perm = Array2::from_shape_fn((c.num_columns, pool), |(i, j)| p.pooler.permanences[i][j]);
            w.tensor("pooler.potential", &idx);
            w.tensor("pooler.permanence", &perm);
            match &p.classifier {
                SdrClassifier::Constant(l) => w.meta("classifier", format!("constant {}", l.as_i8())),
                SdrClassifier::Perceptron(net) => {
                    w.meta("classifier", "perceptron");
                    write_dense(&mut w, net, "readout.");
                }
            }
        }
    }
    w.out.push_str("end\n");
    w.out
}

fn write_dense(w: &mut Writer, net: &DenseNetwork, prefix: &str) {
    w.meta(&format!("{prefix}layer_sizes"), join(&net.spec.layer_sizes));
    w.meta(&format!("{prefix}activations"), join(net.spec.activations.iter().map(|a| a.name())));
    w.meta(&format!("{prefix}use_bias"), net.spec.use_bias);
    for (k, l) in net.params.layers.iter().enumerate() {
        w.tensor(&format!("{prefix}layer{k}.weights"), &l.weights);
        w.vector(&format!("{prefix}layer{k}.bias"), &l.bias);
    }
}

struct Parsed {
    kind: String,
    meta: BTreeMap<String, String>,
    tensors: BTreeMap<String, Array2<f64>>,
}

fn bad(reason: impl Into<String>) -> Error {
    Error::Checkpoint(reason.into())
}

impl Parsed {
    fn meta(&self, key: &str) -> Result<&str> {
        self.meta.get(key).map(String::as_str).ok_or_else(|| bad(format!("missing meta {key}")))
    }

    fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta(key)?.parse().map_err(|_| bad(format!("bad value for meta {key}")))
    }

    fn tensor(&self, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let t = self.tensors.get(name).ok_or_else(|| bad(format!("missing tensor {name}")))?;
        if t.dim() != (rows, cols) {
            return Err(bad(format!("tensor {name} is {:?}, expected {rows}x{cols}", t.dim())));
        }
        Ok(t.clone())
    }

    fn vector(&self, name: &str, len: usize) -> Result<Array1<f64>> {
        Ok(self.tensor(name, 1, len)?.row(0).to_owned())
    }
}

fn parse(text: &str) -> Result<Parsed> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad("not a waferbench checkpoint (bad header)"));
    }
    let kind = lines
        .next()
        .and_then(|l| l.strip_prefix("kind "))
        .ok_or_else(|| bad("missing kind line"))?
        .to_string();
    let mut meta = BTreeMap::new();
    let mut tensors = BTreeMap::new();
    loop {
        let line = lines.next().ok_or_else(|| bad("truncated checkpoint (no end line)"))?;
        if line == "end" {
            break;
        }
        if let Some(rest) = line.strip_prefix("meta ") {
            let (k, v) = rest.split_once(' ').ok_or_else(|| bad(format!("bad meta line {line:?}")))?;
            meta.insert(k.to_string(), v.to_string());
        } else if let Some(rest) = line.strip_prefix("tensor ") {
            let parts: Vec<&str> = rest.split(' ').collect();
            let [name, rows, cols] = parts[..] else {
                return Err(bad(format!("bad tensor line {line:?}")));
            };
            let rows: usize = rows.parse().map_err(|_| bad(format!("bad row count in {line:?}")))?;
            let cols: usize = cols.parse().map_err(|_| bad(format!("bad column count in {line:?}")))?;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let row = lines.next().ok_or_else(|| bad(format!("tensor {name} is truncated")))?;
                let before = data.len();
                for tok in row.split_ascii_whitespace() {
                    data.push(tok.parse::<f64>().map_err(|_| bad(format!("bad number {tok:?} in tensor {name}")))?);
                }
                if data.len() - before != cols {
                    return Err(bad(format!("tensor {name} has a row of the wrong length")));
                }
            }
            let t = Array2::from_shape_vec((rows, cols), data).map_err(|e| bad(e.to_string()))?;
            tensors.insert(name.to_string(), t);
        } else {
            return Err(bad(format!("unexpected line {line:?}")));
        }
    }
    Ok(Parsed { kind, meta, tensors })
}

fn read_dense(p: &Parsed, prefix: &str) -> Result<DenseNetwork> {
    let sizes = p
        .meta(&format!("{prefix}layer_sizes"))?
        .split(',')
        .map(|s| s.parse::<usize>().map_err(|_| bad("bad layer size")))
        .collect::<Result<Vec<_>>>()?;
    let acts = p
        .meta(&format!("{prefix}activations"))?
        .split(',')
        .map(|s| Activation::from_name(s).ok_or_else(|| bad(format!("unknown activation {s:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let use_bias = p.meta_parse::<bool>(&format!("{prefix}use_bias"))?;
    let spec = NetworkSpec::new(sizes, acts, use_bias)?;
    let layers = spec
        .layer_sizes
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            Ok(DenseLayer {
                weights: p.tensor(&format!("{prefix}layer{k}.weights"), w[1], w[0])?,
                bias: p.vector(&format!("{prefix}layer{k}.bias"), w[1])?,
            })
        })
        .collect::<Result<_>>()?;
    DenseNetwork::new(spec, Parameters { layers })
}

pub fn decode(text: &str) -> Result<TrainedModel> {
    let p = parse(text)?;
    match p.kind.as_str() {
        "dense" => Ok(TrainedModel::Dense(read_dense(&p, "")?)),
        "lstm" => {
            let config = LstmConfig {
                input_dim: p.meta_parse("input_dim")?,
                hidden_dim: p.meta_parse("hidden_dim")?,
                time_steps: p.meta_parse("time_steps")?,
                mode: match p.meta("mode")? {
                    "sequential" => LstmMode::Sequential,
                    "windowed" => LstmMode::Windowed,
                    other => return Err(bad(format!("unknown LSTM mode {other:?}"))),
                },
            };
            config.validate()?;
            let (i, h) = (config.input_dim, config.hidden_dim);
            let mut cell = LstmCellParams::zeros(i, h);
            for g in Gate::ALL {
                let gp = cell.gate_mut(g);
                gp.w = p.tensor(&format!("cell.{}.w", g.name()), h, i)?;
                gp.u = p.tensor(&format!("cell.{}.u", g.name()), h, h)?;
                gp.b = p.vector(&format!("cell.{}.b", g.name()), h)?;
            }
            let params = LstmParams {
                cell,
                head_w: p.vector("head.w", h)?,
                head_b: p.vector("head.b", 1)?[0],
            };
            Ok(TrainedModel::Lstm(LstmNetwork::new(config, params)?))
        }
        "htm" => {
            let config = SpatialPoolerConfig {
                num_columns: p.meta_parse("num_columns")?,
                active_columns: p.meta_parse("active_columns")?,
                potential_fraction: p.meta_parse("potential_fraction")?,
                permanence_threshold: p.meta_parse("permanence_threshold")?,
                permanence_increment: p.meta_parse("permanence_increment")?,
                permanence_decrement: p.meta_parse("permanence_decrement")?,
                seed: p.meta_parse("seed")?,
            };
            config.validate()?;
            let bins: usize = p.meta_parse("bins")?;
            let input_width: usize = p.meta_parse("input_width")?;
            if bins < 2 || input_width % bins != 0 {
                return Err(bad("encoder width is not a multiple of the bin count"));
            }
            let len = input_width / bins;
            let encoder = BucketEncoder {
                bins,
                min: p.vector("encoder.min", len)?.to_vec(),
                max: p.vector("encoder.max", len)?.to_vec(),
            };
            let pool = p.tensors.get("pooler.potential").map_or(0, |t| t.ncols());
            let idx = p.tensor("pooler.potential", config.num_columns, pool)?;
            let perm = p.tensor("pooler.permanence", config.num_columns, pool)?;
            let mut potential = Vec::with_capacity(config.num_columns);
            for row in idx.rows() {
                let cols = row
                    .iter()
                    .map(|&v| {
                        if v >= 0.0 && v.fract() == 0.0 && (v as usize) < input_width {
                            Ok(v as usize)
                        } else {
                            Err(bad(format!("bad potential index {v}")))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                potential.push(cols);
            }
            let permanences = perm.rows().into_iter().map(|r| r.to_vec()).collect();
            let classifier = match p.meta("classifier")? {
                "perceptron" => SdrClassifier::Perceptron(read_dense(&p, "readout.")?),
                other => {
                    let v: f64 = other
                        .strip_prefix("constant ")
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad(format!("bad classifier {other:?}")))?;
                    SdrClassifier::Constant(Label::from_value(v).ok_or_else(|| bad("bad constant label"))?)
                }
            };
            Ok(TrainedModel::Htm(HtmPipeline {
                encoder,
                pooler: SpatialPooler {
                    config,
                    input_width,
                    potential,
                    permanences,
                },
                classifier,
            }))
        }
        other => Err(bad(format!("unknown model kind {other:?}"))),
    }
}

pub fn save(path: &Path, model: &TrainedModel) -> Result<()> {
    std::fs::write(path, encode(model)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&text)
}
