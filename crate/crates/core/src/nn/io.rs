//! Line-oriented text model files.
//!
//! ```text
//! depreorder-model 1
//! relation head-child
//! dims <embed> <hidden1> <hidden2>
//! dropout <p>
//! slots <n>
//! <slot-name> <kind>            (n lines)
//! table <kind> <V> <D>          (then V lines "item v1 .. vD"; one block per kind)
//! matrix w1 <rows> <cols>       (then one row per line)
//! vector b1 <n>                 (then one line)
//! matrix w2 ..., vector b2 ..., vector w_out ..., scalar b_out <v>
//! ```

use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::net::{LookupTable, NetDims, ReorderNet};
use super::spec::{FeatureSpec, Vocab, VocabKind};
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::extract::Relation;

const MAGIC: &str = "depreorder-model";
const VERSION: &str = "1";

fn write_row<'a, W: Write, I: IntoIterator<Item = &'a f64>>(w: &mut W, row: I) -> Result<()> {
    let mut first = true;
    for v in row {
        if !first {
            w.write_all(b" ")?;
        }
        write!(w, "{v:e}")?;
        first = false;
    }
    writeln!(w)?;
    Ok(())
}

pub fn save_model<W: Write>(net: &ReorderNet, mut w: W) -> Result<()> {
    writeln!(w, "{MAGIC} {VERSION}")?;
    writeln!(w, "relation {}", net.spec.relation.name())?;
    writeln!(w, "dims {} {} {}", net.dims.embed_dim, net.dims.hidden1, net.dims.hidden2)?;
    writeln!(w, "dropout {:e}", net.dropout)?;
    writeln!(w, "slots {}", net.spec.len())?;
    for (name, kind) in &net.spec.slots {
        writeln!(w, "{name} {kind}")?;
    }
    for t in &net.tables {
        writeln!(w, "table {} {} {}", t.vocab.kind(), t.vocab.len(), t.weights.ncols())?;
        for (item, row) in t.vocab.items().iter().zip(t.weights.rows()) {
            write!(w, "{item} ")?;
            write_row(&mut w, row)?;
        }
    }
    for (name, m) in [("w1", &net.w1), ("w2", &net.w2)] {
        writeln!(w, "matrix {name} {} {}", m.nrows(), m.ncols())?;
        for row in m.rows() {
            write_row(&mut w, row)?;
        }
        let (bname, b) = if name == "w1" { ("b1", &net.b1) } else { ("b2", &net.b2) };
        writeln!(w, "vector {bname} {}", b.len())?;
        write_row(&mut w, b)?;
    }
    writeln!(w, "vector w_out {}", net.w_out.len())?;
    write_row(&mut w, &net.w_out)?;
    writeln!(w, "scalar b_out {:e}", net.b_out)?;
    Ok(())
}

pub fn save_model_file(net: &ReorderNet, path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    save_model(net, f)
}

pub fn load_model_file(path: &Path) -> Result<ReorderNet> {
    load_model(std::io::BufReader::new(std::fs::File::open(path)?))
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    lineno: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String> {
        self.lineno += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.lineno,
            msg: msg.into(),
        }
    }

    /// Reads a line `keyword args...` and returns the args.
    fn expect(&mut self, keyword: &str) -> Result<Vec<String>> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(keyword) {
            return Err(self.err(format!("expected `{keyword}`, found `{line}`")));
        }
        Ok(parts.map(str::to_string).collect())
    }

    fn usize_at(&self, args: &[String], i: usize) -> Result<usize> {
        args.get(i)
            .and_then(|a| a.parse().ok())
            .ok_or_else(|| self.err("expected an integer"))
    }

    fn floats(&mut self, expected: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| self.err(format!("invalid number `{v}`"))))
            .collect::<Result<_>>()?;
        if vals.len() != expected {
            return Err(Error::Dimension {
                expected,
                found: vals.len(),
            });
        }
        Ok(vals)
    }

    fn matrix(&mut self, name: &str) -> Result<Array2<f64>> {
        let args = self.expect("matrix")?;
        if args.first().map(String::as_str) != Some(name) {
            return Err(self.err(format!("expected matrix `{name}`")));
        }
        let (r, c) = (self.usize_at(&args, 1)?, self.usize_at(&args, 2)?);
        let mut data = Vec::with_capacity(r * c);
        for _ in 0..r {
            data.extend(self.floats(c)?);
        }
        Ok(Array2::from_shape_vec((r, c), data).expect("shape checked per row"))
    }

    fn vector(&mut self, name: &str) -> Result<Array1<f64>> {
        let args = self.expect("vector")?;
        if args.first().map(String::as_str) != Some(name) {
            return Err(self.err(format!("expected vector `{name}`")));
        }
        let n = self.usize_at(&args, 1)?;
        Ok(Array1::from(self.floats(n)?))
    }
}

pub fn load_model<R: BufRead>(r: R) -> Result<ReorderNet> {
    let mut lines = Lines {
        inner: r.lines(),
        lineno: 0,
    };
    let version = lines.expect(MAGIC)?;
    if version.first().map(String::as_str) != Some(VERSION) {
        return Err(Error::Version(version.join(" ")));
    }
    let relation: Relation = lines
        .expect("relation")?
        .first()
        .ok_or_else(|| lines.err("missing relation"))?
        .parse()?;
    let dims_args = lines.expect("dims")?;
    let dims = NetDims {
        embed_dim: lines.usize_at(&dims_args, 0)?,
        hidden1: lines.usize_at(&dims_args, 1)?,
        hidden2: lines.usize_at(&dims_args, 2)?,
    };
    let dropout: f64 = lines
        .expect("dropout")?
        .first()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| lines.err("invalid dropout"))?;
    let n_slots = {
        let a = lines.expect("slots")?;
        lines.usize_at(&a, 0)?
    };
    let mut slots = Vec::with_capacity(n_slots);
    for _ in 0..n_slots {
        let line = lines.next_line()?;
        let (name, kind) = line.split_once(' ').ok_or_else(|| lines.err("expected `<slot> <kind>`"))?;
        slots.push((name.to_string(), kind.parse::<VocabKind>()?));
    }
    let spec = FeatureSpec { relation, slots };
    if spec != FeatureSpec::for_relation(relation) {
        return Err(Error::Format(format!("slot layout does not match the {} classifier", relation.name())));
    }

    let mut tables = Vec::with_capacity(VocabKind::ALL.len());
    for kind in VocabKind::ALL {
        let args = lines.expect("table")?;
        if args.first().map(String::as_str) != Some(kind.name()) {
            return Err(lines.err(format!("expected table `{kind}`")));
        }
        let (v, d) = (lines.usize_at(&args, 1)?, lines.usize_at(&args, 2)?);
        if d != dims.embed_dim {
            return Err(Error::Dimension {
                expected: dims.embed_dim,
                found: d,
            });
        }
        let first = lines.lineno + 1;
        let mut rows = (0..v).map(|_| lines.next_line());
        let table = EmbeddingTable::read_rows(&mut rows, v, d, first)?;
        let vocab = Vocab::new(kind, table.words().to_vec())?;
        if vocab.items() != table.words() {
            return Err(Error::Format(format!("{kind} table must start with NULL and UNK")));
        }
        tables.push(LookupTable {
            vocab,
            weights: table.vectors().clone(),
        });
    }

    let w1 = lines.matrix("w1")?;
    let b1 = lines.vector("b1")?;
    let w2 = lines.matrix("w2")?;
    let b2 = lines.vector("b2")?;
    let w_out = lines.vector("w_out")?;
    let b_out_args = lines.expect("scalar")?;
    if b_out_args.first().map(String::as_str) != Some("b_out") {
        return Err(lines.err("expected scalar `b_out`"));
    }
    let b_out: f64 = b_out_args
        .get(1)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| lines.err("invalid b_out"))?;

    let input = spec.len() * dims.embed_dim;
    let shapes_ok = w1.dim() == (dims.hidden1, input)
        && b1.len() == dims.hidden1
        && w2.dim() == (dims.hidden2, dims.hidden1)
        && b2.len() == dims.hidden2
        && w_out.len() == dims.hidden2;
    if !shapes_ok {
        return Err(Error::Format("layer shapes do not match the declared dims".into()));
    }
    Ok(ReorderNet {
        spec,
        dims,
        tables,
        w1,
        b1,
        w2,
        b2,
        w_out,
        b_out,
        dropout,
    })
}
