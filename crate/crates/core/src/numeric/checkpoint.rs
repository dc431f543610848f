//! Binary checkpoint format.
//!
//! ```text
//! semsyngtn-ckpt v1
//! config <byte length>
//! <TrainConfig as JSON>
//! roles <JSON array of role names>
//! vocab <JSON array of embedding tokens>
//! params <count>
//! param <name> <frozen 0|1> <rank> <dim>...
//! <rank-product little-endian f64 values>
//! ...
//! ```
//!
//! Parameter names follow the model's dotted convention (`enc.*`, `lstm.*`,
//! `struct.*`, `gtn.alpha`, `gcn.U1`, `head.W1`, `disc.*`).

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::params::ParameterStore;
use super::tensor::Tensor;
use super::NumericError;

pub const CHECKPOINT_MAGIC: &str = "semsyngtn-ckpt v1";

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config_json: String,
    pub roles: Vec<String>,
    pub vocab: Vec<String>,
    pub store: ParameterStore,
}

fn bad(msg: impl Into<String>) -> NumericError {
    NumericError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(format!("config {}\n", self.config_json.len()).as_bytes());
        out.extend_from_slice(self.config_json.as_bytes());
        out.push(b'\n');
        let roles = serde_json::to_string(&self.roles).expect("strings serialize");
        let vocab = serde_json::to_string(&self.vocab).expect("strings serialize");
        out.extend_from_slice(format!("roles {roles}\nvocab {vocab}\n").as_bytes());
        out.extend_from_slice(format!("params {}\n", self.store.len()).as_bytes());
        for id in self.store.ids() {
            let t = self.store.value(id);
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            out.extend_from_slice(
                format!(
                    "param {} {} {} {}\n",
                    self.store.name(id),
                    u8::from(self.store.is_frozen(id)),
                    t.shape().len(),
                    dims.join(" ")
                )
                .as_bytes(),
            );
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
            out.push(b'\n');
        }
        out
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, NumericError> {
        let mut r = BufReader::new(reader);
        let mut line = String::new();
        let next_line = |r: &mut BufReader<R>, line: &mut String| -> Result<(), NumericError> {
            line.clear();
            if r.read_line(line)? == 0 {
                return Err(bad("unexpected end of file"));
            }
            if line.ends_with('\n') {
                line.pop();
            }
            Ok(())
        };

        next_line(&mut r, &mut line)?;
        if line != CHECKPOINT_MAGIC {
            return Err(bad(format!("bad header {line:?}")));
        }
        next_line(&mut r, &mut line)?;
        let len: usize = line
            .strip_prefix("config ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("missing config length"))?;
        let mut buf = vec![0u8; len + 1];
        r.read_exact(&mut buf)?;
        if buf.pop() != Some(b'\n') {
            return Err(bad("config block not newline-terminated"));
        }
        let config_json = String::from_utf8(buf).map_err(|_| bad("config is not UTF-8"))?;

        next_line(&mut r, &mut line)?;
        let roles: Vec<String> = line
            .strip_prefix("roles ")
            .and_then(|s| serde_json::from_str(s).ok())
            .ok_or_else(|| bad("missing roles line"))?;
        next_line(&mut r, &mut line)?;
        let vocab: Vec<String> = line
            .strip_prefix("vocab ")
            .and_then(|s| serde_json::from_str(s).ok())
            .ok_or_else(|| bad("missing vocab line"))?;
        next_line(&mut r, &mut line)?;
        let count: usize = line
            .strip_prefix("params ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("missing params count"))?;

        let mut store = ParameterStore::new();
        for _ in 0..count {
            next_line(&mut r, &mut line)?;
            let mut parts = line.split(' ');
            if parts.next() != Some("param") {
                return Err(bad(format!("expected param line, got {line:?}")));
            }
            let name = parts.next().ok_or_else(|| bad("param name"))?.to_string();
            let frozen = match parts.next() {
                Some("0") => false,
                Some("1") => true,
                _ => return Err(bad(format!("bad frozen flag for {name}"))),
            };
            let rank: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(format!("bad rank for {name}")))?;
            let shape: Vec<usize> = parts
                .map(|s| s.parse().map_err(|_| bad(format!("bad dim for {name}"))))
                .collect::<Result<_, _>>()?;
            if shape.len() != rank {
                return Err(bad(format!("rank/shape disagree for {name}")));
            }
            let n: usize = shape.iter().product();
            let mut raw = vec![0u8; n * 8 + 1];
            r.read_exact(&mut raw)?;
            if raw.pop() != Some(b'\n') {
                return Err(bad(format!("param {name} not newline-terminated")));
            }
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            store.insert(name, Tensor::new(shape, data)?, frozen)?;
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(bad("trailing bytes after last parameter"));
        }
        Ok(Self {
            config_json,
            roles,
            vocab,
            store,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NumericError> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NumericError> {
        Self::from_reader(fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut store = ParameterStore::new();
        store
            .insert("gcn.U1", Tensor::from_rows(&[vec![0.1, -0.0], vec![f64::MIN_POSITIVE, 1e300]]), false)
            .unwrap();
        store
            .insert("gtn.alpha", Tensor::new(vec![1, 2, 3], (0..6).map(f64::from).collect()).unwrap(), false)
            .unwrap();
        store.insert("emb.word", Tensor::zeros(&[2, 1]), true).unwrap();
        Checkpoint {
            config_json: "{\"seed\":1,\n\"x\":\"a b\"}".into(),
            roles: vec!["None".into(), "Agent role".into()],
            vocab: vec!["the".into()],
            store,
        }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_reader(&bytes[..]).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert!(back.store.same_values(&ck.store));
        assert_eq!(back.roles, ck.roles);
        assert_eq!(back.config_json, ck.config_json);
        // negative zero survives
        assert_eq!(back.store.value(back.store.id("gcn.U1").unwrap()).data()[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn header_is_checked() {
        assert!(Checkpoint::from_reader(&b"not a checkpoint\n"[..]).is_err());
        let mut bytes = sample().to_bytes();
        bytes.truncate(bytes.len() - 5);
        assert!(Checkpoint::from_reader(&bytes[..]).is_err());
    }
}
