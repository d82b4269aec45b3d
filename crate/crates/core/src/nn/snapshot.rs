//! Plain-text weight dumps for debugging: per layer a `layer <idx> <out> <in>`
//! header, `out` lines of row-major weights, then one line of biases.

use super::{Network, NnError};

pub fn write_snapshot(net: &Network) -> String {
    let mut out = String::new();
    for (t, layer) in net.layers().iter().enumerate() {
        out.push_str(&format!(
            "layer {t} {} {}\n",
            layer.out_size(),
            layer.in_size()
        ));
        for r in 0..layer.out_size() {
            out.push_str(&join(layer.weights.row(r)));
            out.push('\n');
        }
        out.push_str(&join(&layer.biases));
        out.push('\n');
    }
    out
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Loads parameters into a network of identical topology.
pub fn read_snapshot(net: &mut Network, text: &str) -> Result<(), NnError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| NnError::Parse(format!("snapshot ends before {what}")))
    };
    let numbers = |line_no: usize, line: &str, expected: usize| -> Result<Vec<f64>, NnError> {
        let values = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| NnError::Parse(format!("line {}: {e}", line_no + 1)))?;
        if values.len() != expected {
            return Err(NnError::Parse(format!(
                "line {}: expected {expected} values, found {}",
                line_no + 1,
                values.len()
            )));
        }
        Ok(values)
    };
    let shapes: Vec<(usize, usize)> = net
        .layers()
        .iter()
        .map(|l| (l.out_size(), l.in_size()))
        .collect();
    let mut parsed = Vec::with_capacity(shapes.len());
    for (t, &(rows, cols)) in shapes.iter().enumerate() {
        let (line_no, header) = next("a layer header")?;
        let expected = format!("layer {t} {rows} {cols}");
        if header.split_whitespace().collect::<Vec<_>>().join(" ") != expected {
            return Err(NnError::Parse(format!(
                "line {}: expected '{expected}', found '{header}'",
                line_no + 1
            )));
        }
        let mut weights = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (line_no, line) = next("weights")?;
            weights.extend(numbers(line_no, line, cols)?);
        }
        let (line_no, line) = next("biases")?;
        parsed.push((weights, numbers(line_no, line, rows)?));
    }
    for (layer, (weights, biases)) in net.layers_mut().iter_mut().zip(parsed) {
        layer.weights.as_mut_slice().copy_from_slice(&weights);
        layer.biases = biases;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, InitSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn snapshot_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let acts = [Activation::Relu, Activation::Sigmoid];
        let mut a =
            Network::new(&[3, 4, 2], &acts, InitSpec::Normal { sigma: 1.0 }, &mut rng).unwrap();
        a.layers_mut()[1].biases = vec![0.25, -1.0 / 3.0];
        let mut b =
            Network::new(&[3, 4, 2], &acts, InitSpec::Normal { sigma: 0.0 }, &mut rng).unwrap();
        let text = write_snapshot(&a);
        assert!(text.starts_with("layer 0 4 3\n"));
        read_snapshot(&mut b, &text).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_topology_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Network::new(
            &[3, 2],
            &[Activation::Sigmoid],
            InitSpec::default(),
            &mut rng,
        )
        .unwrap();
        let mut b = Network::new(
            &[2, 2],
            &[Activation::Sigmoid],
            InitSpec::default(),
            &mut rng,
        )
        .unwrap();
        assert!(matches!(
            read_snapshot(&mut b, &write_snapshot(&a)),
            Err(NnError::Parse(_))
        ));
    }
}
