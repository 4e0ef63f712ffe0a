//! Line-oriented `.arch` documents. Grammar in `docs/arch_format.md`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{ArchError, ConvSpec, DatasetSpec, FcSpec, LayerSpec, NetworkArch, PoolSpec, SkipConnection, SkipKind};

struct Attrs<'a> {
    line: usize,
    /// key -> (value, 1-based column of the key)
    map: BTreeMap<&'a str, (&'a str, usize)>,
    flags: Vec<(&'a str, usize)>,
    directive_col: usize,
}

impl<'a> Attrs<'a> {
    fn err(&self, column: usize, message: impl Into<String>) -> ArchError {
        ArchError::Parse {
            line: self.line,
            column,
            message: message.into(),
        }
    }

    fn take(&mut self, key: &str) -> Option<(&'a str, usize)> {
        self.map.remove(key)
    }

    fn usize_opt(&mut self, key: &str) -> Result<Option<usize>, ArchError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, col)) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|_| self.err(col, format!("`{key}` expects a non-negative integer, got `{v}`"))),
        }
    }

    fn usize_req(&mut self, key: &str) -> Result<usize, ArchError> {
        let col = self.directive_col;
        self.usize_opt(key)?
            .ok_or_else(|| self.err(col, format!("missing required attribute `{key}`")))
    }

    fn bool_opt(&mut self, key: &str) -> Result<Option<bool>, ArchError> {
        match self.take(key) {
            None => Ok(None),
            Some(("true", _)) => Ok(Some(true)),
            Some(("false", _)) => Ok(Some(false)),
            Some((v, col)) => Err(self.err(col, format!("`{key}` expects true or false, got `{v}`"))),
        }
    }

    fn str_req(&mut self, key: &str) -> Result<&'a str, ArchError> {
        let col = self.directive_col;
        self.take(key)
            .map(|(v, _)| v)
            .ok_or_else(|| self.err(col, format!("missing required attribute `{key}`")))
    }

    fn flag(&mut self, name: &str) -> bool {
        if let Some(pos) = self.flags.iter().position(|(f, _)| *f == name) {
            self.flags.remove(pos);
            true
        } else {
            false
        }
    }

    fn finish(self) -> Result<(), ArchError> {
        if let Some((k, (_, col))) = self.map.iter().next() {
            return Err(self.err(*col, format!("unknown attribute `{k}`")));
        }
        if let Some((f, col)) = self.flags.first() {
            return Err(self.err(*col, format!("unexpected token `{f}`")));
        }
        Ok(())
    }
}

fn tokenize(line_no: usize, line: &str) -> Result<Option<(&str, Attrs<'_>)>, ArchError> {
    let content = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut tokens = Vec::new();
    let mut offset = 0;
    for tok in content.split_whitespace() {
        let start = content[offset..].find(tok).map(|i| i + offset).unwrap_or(offset);
        offset = start + tok.len();
        tokens.push((tok, start + 1));
    }
    let Some(&(directive, directive_col)) = tokens.first() else {
        return Ok(None);
    };
    let mut attrs = Attrs {
        line: line_no,
        map: BTreeMap::new(),
        flags: Vec::new(),
        directive_col,
    };
    for &(tok, col) in &tokens[1..] {
        match tok.split_once('=') {
            Some((k, v)) => {
                if k.is_empty() || v.is_empty() {
                    return Err(attrs.err(col, format!("malformed attribute `{tok}`")));
                }
                if attrs.map.insert(k, (v, col)).is_some() {
                    return Err(attrs.err(col, format!("duplicate attribute `{k}`")));
                }
            }
            None => attrs.flags.push((tok, col)),
        }
    }
    Ok(Some((directive, attrs)))
}

fn parse_conv(a: &mut Attrs<'_>) -> Result<ConvSpec, ArchError> {
    Ok(ConvSpec {
        in_channels: a.usize_opt("in")?.unwrap_or(0),
        out_channels: a.usize_req("out")?,
        kernel: a.usize_req("kernel")?,
        stride: a.usize_opt("stride")?.unwrap_or(1),
        padding: a.usize_opt("padding")?.unwrap_or(0),
        bias: a.bool_opt("bias")?.unwrap_or(false),
    })
}

pub fn parse_arch(text: &str) -> Result<NetworkArch, ArchError> {
    let mut name: Option<String> = None;
    let mut input: Option<DatasetSpec> = None;
    let mut layers = Vec::new();
    let mut skips = Vec::new();
    let mut last_line = 1;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let Some((directive, mut a)) = tokenize(line_no, raw)? else {
            continue;
        };
        let dcol = a.directive_col;
        match directive {
            "network" => {
                if name.is_some() {
                    return Err(a.err(dcol, "duplicate `network` line"));
                }
                name = Some(a.str_req("name")?.to_string());
            }
            "input" => {
                if input.is_some() {
                    return Err(a.err(dcol, "duplicate `input` line"));
                }
                let spec = if let Some((ds, col)) = a.take("dataset") {
                    DatasetSpec::preset(ds).map_err(|_| a.err(col, format!("unknown dataset `{ds}`")))?
                } else {
                    DatasetSpec {
                        name: a.str_req("name")?.to_string(),
                        channels: a.usize_req("channels")?,
                        height: a.usize_req("height")?,
                        width: a.usize_req("width")?,
                        classes: a.usize_req("classes")?,
                    }
                };
                input = Some(spec);
            }
            "conv" => layers.push(LayerSpec::Conv(parse_conv(&mut a)?)),
            "fc" => layers.push(LayerSpec::Fc(FcSpec {
                in_features: a.usize_opt("in")?.unwrap_or(0),
                out_features: a.usize_req("out")?,
                bias: a.bool_opt("bias")?.unwrap_or(true),
            })),
            "relu" => layers.push(LayerSpec::Relu),
            "flatten" => layers.push(LayerSpec::Flatten),
            "avgpool" => {
                let pool = if a.flag("global") {
                    PoolSpec::Global
                } else {
                    let window = a.usize_req("window")?;
                    let stride = a.usize_opt("stride")?.unwrap_or(window);
                    PoolSpec::Window { window, stride }
                };
                layers.push(LayerSpec::AvgPool(pool));
            }
            "skip" => {
                let from = a.usize_req("from")?;
                let to = a.usize_req("to")?;
                let (kind_str, kcol) = a.take("kind").unwrap_or(("identity", dcol));
                let kind = match kind_str {
                    "identity" => SkipKind::Identity,
                    "pad" => SkipKind::Pad {
                        stride: a.usize_opt("stride")?.unwrap_or(1),
                    },
                    "project" => SkipKind::Project(parse_conv(&mut a)?),
                    other => return Err(a.err(kcol, format!("unknown skip kind `{other}`"))),
                };
                skips.push(SkipConnection { from, to, kind });
            }
            other => return Err(a.err(dcol, format!("unknown directive `{other}`"))),
        }
        a.finish()?;
    }

    let missing = |what: &str| ArchError::Parse {
        line: last_line,
        column: 1,
        message: format!("document has no `{what}` line"),
    };
    if name.is_none() && input.is_none() && layers.is_empty() {
        return Err(ArchError::Parse {
            line: 1,
            column: 1,
            message: "empty document".into(),
        });
    }
    let name = name.ok_or_else(|| missing("network"))?;
    let input = input.ok_or_else(|| missing("input"))?;
    if layers.is_empty() {
        return Err(missing("layer"));
    }
    NetworkArch::new(name, input, layers, skips)
}

fn write_conv(out: &mut String, c: &ConvSpec) {
    let _ = write!(
        out,
        "in={} out={} kernel={} stride={} padding={} bias={}",
        c.in_channels, c.out_channels, c.kernel, c.stride, c.padding, c.bias
    );
}

/// Canonical document: every attribute explicit, skips listed after their merge layer.
pub fn serialize_arch(arch: &NetworkArch) -> String {
    let mut out = String::new();
    let d = &arch.input;
    let _ = writeln!(out, "network name={}", arch.name);
    let _ = writeln!(
        out,
        "input name={} channels={} height={} width={} classes={}",
        d.name, d.channels, d.height, d.width, d.classes
    );
    for (i, layer) in arch.layers.iter().enumerate() {
        match layer {
            LayerSpec::Conv(c) => {
                out.push_str("conv ");
                write_conv(&mut out, c);
                out.push('\n');
            }
            LayerSpec::Fc(f) => {
                let _ = writeln!(out, "fc in={} out={} bias={}", f.in_features, f.out_features, f.bias);
            }
            LayerSpec::Relu => out.push_str("relu\n"),
            LayerSpec::Flatten => out.push_str("flatten\n"),
            LayerSpec::AvgPool(PoolSpec::Global) => out.push_str("avgpool global\n"),
            LayerSpec::AvgPool(PoolSpec::Window { window, stride }) => {
                let _ = writeln!(out, "avgpool window={window} stride={stride}");
            }
        }
        for s in arch.skips_into(i) {
            let _ = write!(out, "skip from={} to={} kind=", s.from, s.to);
            match &s.kind {
                SkipKind::Identity => out.push_str("identity"),
                SkipKind::Pad { stride } => {
                    let _ = write!(out, "pad stride={stride}");
                }
                SkipKind::Project(c) => {
                    out.push_str("project ");
                    write_conv(&mut out, c);
                }
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "\
network name=tiny_fc
input name=vec channels=10 height=1 width=1 classes=10
fc out=10   # fully connected
relu
";

    #[test]
    fn parses_minimal_fc() {
        let arch = parse_arch(TINY).unwrap();
        let c = arch.count_layers().unwrap();
        assert_eq!((c.relus, c.params), (10, 110));
    }

    #[test]
    fn empty_is_parse_error() {
        assert!(matches!(parse_arch(""), Err(ArchError::Parse { line: 1, .. })));
        assert!(matches!(
            parse_arch("# just a comment\n\n"),
            Err(ArchError::Parse { .. })
        ));
    }

    #[test]
    fn zero_out_channels_rejected() {
        let doc = "network name=x\ninput dataset=c100\nconv out=0 kernel=3\n";
        assert!(matches!(parse_arch(doc), Err(ArchError::InvalidLayer { index: 0, .. })));
    }

    #[test]
    fn reports_column_of_bad_value() {
        let doc = "network name=x\ninput dataset=c100\nconv out=16 kernel=three\n";
        match parse_arch(doc) {
            Err(ArchError::Parse { line, column, .. }) => assert_eq!((line, column), (3, 13)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_attribute_and_directive() {
        let doc = "network name=x\ninput dataset=c100\nconv out=4 kernel=3 dilation=2\n";
        assert!(matches!(
            parse_arch(doc),
            Err(ArchError::Parse {
                line: 3,
                column: 21,
                ..
            })
        ));
        let doc = "network name=x\ninput dataset=c100\nmaxpool window=2\n";
        assert!(matches!(
            parse_arch(doc),
            Err(ArchError::Parse { line: 3, column: 1, .. })
        ));
    }

    #[test]
    fn round_trip_is_stable() {
        let arch = parse_arch(TINY).unwrap();
        let text = serialize_arch(&arch);
        assert_eq!(parse_arch(&text).unwrap(), arch);
        assert_eq!(serialize_arch(&parse_arch(&text).unwrap()), text);
    }
}
