//! Scaled dot-product attention of the current turn over previous turns:
//! `O = softmax(q K^T / sqrt(d)) V`.

use super::tensor::{dot, softmax_in_place, Mat};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Attended {
    pub output: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn attend_turns(query: &[f64], keys: &Mat, values: &Mat, d: f64) -> Result<Attended> {
    if keys.rows == 0 {
        return Err(Error::Shape("no key rows".into()));
    }
    if keys.cols != query.len() || keys.rows != values.rows {
        return Err(Error::Shape(format!(
            "query {} vs keys {}x{} vs values {}x{}",
            query.len(),
            keys.rows,
            keys.cols,
            values.rows,
            values.cols
        )));
    }
    if !(d > 0.0) {
        return Err(Error::Domain(format!("attention scale {d} must be positive")));
    }
    let scale = 1.0 / d.sqrt();
    let mut weights: Vec<f64> = (0..keys.rows).map(|j| dot(query, keys.row(j)) * scale).collect();
    softmax_in_place(&mut weights);
    let mut output = vec![0.0; values.cols];
    for (j, &w) in weights.iter().enumerate() {
        for (o, v) in output.iter_mut().zip(values.row(j)) {
            *o += w * v;
        }
    }
    Ok(Attended { output, weights })
}

pub struct AttendGrads {
    pub query: Vec<f64>,
    pub keys: Mat,
    pub values: Mat,
}

pub fn attend_turns_backward(query: &[f64], keys: &Mat, values: &Mat, d: f64, weights: &[f64], dout: &[f64]) -> AttendGrads {
    let scale = 1.0 / d.sqrt();
    let n = keys.rows;
    let mut dvalues = Mat::zeros(n, values.cols);
    let da: Vec<f64> = (0..n).map(|j| dot(dout, values.row(j))).collect();
    for j in 0..n {
        for (o, g) in dvalues.row_mut(j).iter_mut().zip(dout) {
            *o = weights[j] * g;
        }
    }
    let inner = dot(&da, weights);
    let mut dquery = vec![0.0; query.len()];
    let mut dkeys = Mat::zeros(n, keys.cols);
    for j in 0..n {
        let ds = weights[j] * (da[j] - inner) * scale;
        for (o, k) in dquery.iter_mut().zip(keys.row(j)) {
            *o += ds * k;
        }
        for (o, q) in dkeys.row_mut(j).iter_mut().zip(query) {
            *o = ds * q;
        }
    }
    AttendGrads { query: dquery, keys: dkeys, values: dvalues }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_previous_turn_returns_its_value() {
        let k = Mat::from_rows(&[&[0.4, -1.0, 2.0]]);
        let v = Mat::from_rows(&[&[3.0, -2.0, 0.5]]);
        let o = attend_turns(&[1.0, 2.0, 3.0], &k, &v, 9.0).unwrap();
        assert_eq!(o.output, v.data);
    }

    #[test]
    fn equal_keys_average_values() {
        let k = Mat::from_rows(&[&[0.4, -1.0], &[0.4, -1.0]]);
        let v = Mat::from_rows(&[&[1.0, 3.0], &[2.0, -1.0]]);
        let o = attend_turns(&[0.7, 0.1], &k, &v, 2.0).unwrap();
        assert!((o.output[0] - 1.5).abs() < 1e-15 && (o.output[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_scalar_oracle() {
        let q: [f64; 3] = [0.3, -1.2, 0.8];
        let k: [[f64; 3]; 2] = [[0.5, 0.1, -0.4], [-0.9, 0.6, 1.1]];
        let v = [[1.0, -2.0, 0.5], [0.25, 0.75, -1.5]];
        let s0 = (q[0] * k[0][0] + q[1] * k[0][1] + q[2] * k[0][2]) / 3.0;
        let s1 = (q[0] * k[1][0] + q[1] * k[1][1] + q[2] * k[1][2]) / 3.0;
        let w0 = s0.exp() / (s0.exp() + s1.exp());
        let w1 = 1.0 - w0;
        let o = attend_turns(&q, &Mat::from_rows(&[&k[0], &k[1]]), &Mat::from_rows(&[&v[0], &v[1]]), 9.0).unwrap();
        for c in 0..3 {
            assert!((o.output[c] - (w0 * v[0][c] + w1 * v[1][c])).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let k = Mat::zeros(2, 3);
        assert!(matches!(attend_turns(&[1.0, 2.0], &k, &Mat::zeros(2, 3), 1.0), Err(Error::Shape(_))));
        assert!(matches!(attend_turns(&[1.0, 2.0, 3.0], &k, &Mat::zeros(1, 3), 1.0), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let q = vec![0.3, -1.2, 0.8];
        let k = Mat::from_rows(&[&[0.5, 0.1, -0.4], &[-0.9, 0.6, 1.1], &[0.2, 0.2, 0.2]]);
        let v = Mat::from_rows(&[&[1.0, -2.0, 0.5], &[0.25, 0.75, -1.5], &[0.0, 1.0, 2.0]]);
        let w = [0.7, -0.3, 1.1];
        let f = |q: &[f64], k: &Mat, v: &Mat| dot(&attend_turns(q, k, v, 3.0).unwrap().output, &w);
        let a = attend_turns(&q, &k, &v, 3.0).unwrap();
        let g = attend_turns_backward(&q, &k, &v, 3.0, &a.weights, &w);
        let h = 1e-6;
        for i in 0..3 {
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp[i] += h;
            qm[i] -= h;
            assert!(((f(&qp, &k, &v) - f(&qm, &k, &v)) / (2.0 * h) - g.query[i]).abs() < 1e-8);
        }
        for i in 0..9 {
            let (mut kp, mut km) = (k.clone(), k.clone());
            kp.data[i] += h;
            km.data[i] -= h;
            assert!(((f(&q, &kp, &v) - f(&q, &km, &v)) / (2.0 * h) - g.keys.data[i]).abs() < 1e-8);
            let (mut vp, mut vm) = (v.clone(), v.clone());
            vp.data[i] += h;
            vm.data[i] -= h;
            assert!(((f(&q, &k, &vp) - f(&q, &k, &vm)) / (2.0 * h) - g.values.data[i]).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn paired_row_permutation_leaves_output_unchanged(
            q in prop::collection::vec(-2.0f64..2.0, 3),
            rows in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 6), 1..6),
            seed in any::<u64>(),
        ) {
            let k = Mat::from_vec(rows.len(), 3, rows.iter().flat_map(|r| r[..3].to_vec()).collect());
            let v = Mat::from_vec(rows.len(), 3, rows.iter().flat_map(|r| r[3..].to_vec()).collect());
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.rotate_left((seed as usize) % rows.len());
            if seed % 2 == 0 { order.reverse(); }
            let kp = Mat::from_vec(rows.len(), 3, order.iter().flat_map(|&i| k.row(i).to_vec()).collect());
            let vp = Mat::from_vec(rows.len(), 3, order.iter().flat_map(|&i| v.row(i).to_vec()).collect());
            let a = attend_turns(&q, &k, &v, 3.0).unwrap();
            let b = attend_turns(&q, &kp, &vp, 3.0).unwrap();
            prop_assert!((a.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for c in 0..3 {
                prop_assert!((a.output[c] - b.output[c]).abs() < 1e-12);
                // convex combination of value rows
                let lo = (0..rows.len()).map(|j| v.at(j, c)).fold(f64::INFINITY, f64::min);
                let hi = (0..rows.len()).map(|j| v.at(j, c)).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(a.output[c] >= lo - 1e-12 && a.output[c] <= hi + 1e-12);
            }
        }
    }
}
