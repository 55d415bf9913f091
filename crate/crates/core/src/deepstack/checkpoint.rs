//! Deep model checkpoints: a header, each encoder, then the front network
//! in the network checkpoint format.
//!
//! ```text
//! deep v1
//! fine_tuned false
//! encoders 1
//! encoder v1
//! in_dim 7
//! code_dim 2
//! activation tanh
//! params 16
//! ...
//! network v1
//! ...
//! ```

use std::fmt::Write;

use crate::network::{
    expect_key, next_line, parse_network_block, parse_usize, read_values, write_network_block,
    write_values, NetworkError,
};

use super::{DeepError, DeepModel, Encoder};

fn bad(msg: String) -> DeepError {
    DeepError::Network(NetworkError::Checkpoint(msg))
}

impl DeepModel {
    pub fn to_checkpoint(&self) -> String {
        let mut s = String::new();
        writeln!(s, "deep v1").unwrap();
        writeln!(s, "fine_tuned {}", self.fine_tuned).unwrap();
        writeln!(s, "encoders {}", self.stack.len()).unwrap();
        for e in &self.stack {
            writeln!(s, "encoder v1").unwrap();
            writeln!(s, "in_dim {}", e.in_dim()).unwrap();
            writeln!(s, "code_dim {}", e.code_dim()).unwrap();
            writeln!(s, "activation {}", e.activation().name()).unwrap();
            write_values(&mut s, "params", &e.params());
        }
        write_network_block(&mut s, &self.front);
        s
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, DeepError> {
        let mut lines = text.lines();
        let header = next_line(&mut lines)?;
        if header != "deep v1" {
            return Err(bad(format!("expected `deep v1`, found `{header}`")));
        }
        let fine_tuned = match expect_key(&mut lines, "fine_tuned")? {
            "true" => true,
            "false" => false,
            other => return Err(bad(format!("bad fine_tuned flag `{other}`"))),
        };
        let count = parse_usize(expect_key(&mut lines, "encoders")?, "encoder count")?;
        let mut stack = Vec::with_capacity(count);
        for _ in 0..count {
            let h = next_line(&mut lines)?;
            if h != "encoder v1" {
                return Err(bad(format!("expected `encoder v1`, found `{h}`")));
            }
            let in_dim = parse_usize(expect_key(&mut lines, "in_dim")?, "in_dim")?;
            let code_dim = parse_usize(expect_key(&mut lines, "code_dim")?, "code_dim")?;
            let activation = expect_key(&mut lines, "activation")?.parse()?;
            let mut weights = read_values(&mut lines, "params")?;
            if weights.len() != (in_dim + 1) * code_dim {
                return Err(bad(format!(
                    "encoder expects {} params, found {}",
                    (in_dim + 1) * code_dim,
                    weights.len()
                )));
            }
            let bias = weights.split_off(in_dim * code_dim);
            stack.push(Encoder::from_parts(
                in_dim, code_dim, activation, weights, bias,
            )?);
        }
        let front = parse_network_block(&mut lines)?;
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(bad("trailing content".into()));
        }
        let mut model = DeepModel::new(stack, front)?;
        model.fine_tuned = fine_tuned;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, Network, Topology};

    #[test]
    fn round_trip_is_bit_exact() {
        let a = Encoder::from_parts(
            3,
            2,
            Activation::Tanh,
            vec![0.1, -1.0 / 3.0, 2e-17, 0.4, 0.5, -0.6],
            vec![1e300, -0.0],
        )
        .unwrap();
        let b = Encoder::from_parts(
            2,
            1,
            Activation::Linear,
            vec![std::f64::consts::PI, 0.5],
            vec![0.1],
        )
        .unwrap();
        let mut m = DeepModel::new(
            vec![a, b],
            Network::init(Topology::cfmlp(1, &[2, 3]), 4).unwrap(),
        )
        .unwrap();
        m.fine_tuned = true;
        let back = DeepModel::from_checkpoint(&m.to_checkpoint()).unwrap();
        assert_eq!(back, m);
        for (x, y) in back.stack()[0].params().iter().zip(m.stack()[0].params()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn corrupt_checkpoints_rejected() {
        let a = Encoder::from_parts(2, 1, Activation::Tanh, vec![0.1, 0.2], vec![0.0]).unwrap();
        let m = DeepModel::new(vec![a], Network::init(Topology::mlp(1, &[2]), 4).unwrap()).unwrap();
        let text = m.to_checkpoint();
        assert!(DeepModel::from_checkpoint(&text.replace("deep v1", "deep v2")).is_err());
        assert!(DeepModel::from_checkpoint(&text.replace("encoders 1", "encoders 2")).is_err());
        assert!(DeepModel::from_checkpoint(&text.replace("code_dim 1", "code_dim 2")).is_err());
        assert!(DeepModel::from_checkpoint(&(text + "x\n")).is_err());
    }
}
