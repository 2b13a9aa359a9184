mod oracle;

use emac_core::emac::QuireAccumulator;
use emac_core::formats::{BitValue, Family, Format};
use emac_core::network::{Activation, Layer, ModelMeta, NetworkModel, QuantizedNetwork};
use emac_core::quantize::{mse, quantize_rne, QuantizedTensor};
use num_rational::BigRational;
use num_traits::Zero;
use oracle::Table;
use proptest::prelude::*;
use proptest::sample::Index;

fn any_format() -> impl Strategy<Value = Format> {
    (0usize..3, 5u32..=10, any::<Index>()).prop_map(|(f, n, i)| {
        let fmts = oracle::formats(Family::ALL[f], n..=n);
        fmts[i.index(fmts.len())]
    })
}

/// A format and a sequence of real operand pairs in it.
fn sequence() -> impl Strategy<Value = (Format, Vec<(u64, u64)>)> {
    any_format().prop_flat_map(|fmt| {
        let reals: Vec<u64> = (0..1u64 << fmt.n())
            .filter(|&b| BitValue::new(fmt, b).unwrap().to_f64().is_some())
            .collect();
        let pair = (prop::sample::select(reals.clone()), prop::sample::select(reals));
        (Just(fmt), prop::collection::vec(pair, 1..40))
    })
}

fn run(fmt: Format, pairs: &[(u64, u64)]) -> (num_bigint::BigInt, BitValue) {
    let mut acc = QuireAccumulator::new(fmt, pairs.len() as u64).unwrap();
    for &(w, a) in pairs {
        acc.accumulate(BitValue::new(fmt, w).unwrap(), BitValue::new(fmt, a).unwrap())
            .unwrap();
    }
    (acc.register_value(), acc.finalize().out)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn accumulation_order_is_irrelevant((fmt, pairs) in sequence(), seed in any::<u64>()) {
        let mut shuffled = pairs.clone();
        // deterministic Fisher-Yates from the seed
        let mut s = seed | 1;
        for i in (1..shuffled.len()).rev() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            shuffled.swap(i, (s % (i as u64 + 1)) as usize);
        }
        prop_assert_eq!(run(fmt, &pairs), run(fmt, &shuffled));
    }

    #[test]
    fn negated_weights_negate_the_result((fmt, pairs) in sequence()) {
        let neg: Vec<(u64, u64)> = pairs
            .iter()
            .map(|&(w, a)| (BitValue::new(fmt, w).unwrap().negate().bits(), a))
            .collect();
        // the fixed-point minimum has no negation
        let fixed_min = fmt.family() == Family::Fixed
            && pairs.iter().any(|&(w, _)| w == 1 << (fmt.n() - 1));
        prop_assume!(!fixed_min);
        let (reg, out) = run(fmt, &pairs);
        let (nreg, nout) = run(fmt, &neg);
        prop_assert_eq!(nreg, -reg);
        // saturation is asymmetric for fixed point
        let min = 1 << (fmt.n() - 1);
        let sat = fmt.family() == Family::Fixed && (nout.bits() == min || out.bits() == min);
        if !sat {
            prop_assert_eq!(nout.to_f64().unwrap(), -out.to_f64().unwrap());
        }
    }

    #[test]
    fn quantize_is_monotone_and_idempotent(fmt in any_format(), a in -300.0f64..300.0, b in -300.0f64..300.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let ql = quantize_rne(lo, fmt).unwrap();
        let qh = quantize_rne(hi, fmt).unwrap();
        prop_assert!(ql.to_f64().unwrap() <= qh.to_f64().unwrap());
        prop_assert_eq!(quantize_rne(ql.to_f64().unwrap(), fmt).unwrap(), ql);
    }

    #[test]
    fn model_hex_round_trip(bits in prop::collection::vec(any::<u64>(), 12..13)) {
        let vals: Vec<f64> = bits
            .iter()
            .map(|&b| f64::from_bits(b))
            .map(|x| if x.is_finite() { x } else { 1.5 })
            .collect();
        let mut l1 = Layer::zeros(2, 3, Activation::Relu);
        l1.weights.copy_from_slice(&vals[0..6]);
        l1.biases.copy_from_slice(&vals[6..8]);
        let mut l2 = Layer::zeros(1, 2, Activation::None);
        l2.weights.copy_from_slice(&vals[8..10]);
        l2.biases.copy_from_slice(&vals[10..11]);
        let m = NetworkModel::new(
            ModelMeta { dataset: "p".into(), seed: bits[11], arch: vec![3, 2, 1], norm: "none".into() },
            vec![l1, l2],
        )
        .unwrap();
        let back = NetworkModel::from_json(&m.to_json().unwrap()).unwrap();
        let flat = |m: &NetworkModel| -> Vec<u64> {
            m.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases)).map(|x| x.to_bits()).collect()
        };
        prop_assert_eq!(flat(&back), flat(&m));
        prop_assert_eq!(back.meta, m.meta);
    }

    #[test]
    fn mse_ignores_element_order(fmt in any_format(), xs in prop::collection::vec(-4.0f64..4.0, 1..64)) {
        let q = QuantizedTensor::quantize(fmt, &[xs.len()], &xs).unwrap();
        let mut rev = xs.clone();
        rev.reverse();
        let qr = QuantizedTensor::quantize(fmt, &[rev.len()], &rev).unwrap();
        let (a, b) = (mse(&xs, &q).unwrap(), mse(&rev, &qr).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300), "{} vs {}", a, b);
    }
}

/// Layer outputs of a random small model against the rational oracle:
/// every pre-activation is the nearest value to the exact sum.
#[test]
fn network_matches_rational_oracle() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut ties = 0;
    for fmt in ["posit6es1", "posit8es0", "float7_e3", "float8_e4", "fixed6q3", "fixed8q5"] {
        let fmt: Format = fmt.parse().unwrap();
        let t = Table::new(fmt);
        let z = t.zero_index();
        let span = t.values.len() / 5;
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
            let i = (z + rng.gen_range(0..=2 * span)).saturating_sub(span);
            t.floats[i.min(t.floats.len() - 1)]
        };
        for _ in 0..40 {
            let dims = [rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..4)];
            let mut layers = Vec::new();
            for (i, w) in dims.windows(2).enumerate() {
                let act = if i == 0 { Activation::Relu } else { Activation::None };
                let mut l = Layer::zeros(w[1], w[0], act);
                l.weights.iter_mut().for_each(|x| *x = draw(&mut rng));
                l.biases.iter_mut().for_each(|x| *x = draw(&mut rng));
                layers.push(l);
            }
            let m = NetworkModel::new(
                ModelMeta { dataset: "r".into(), seed: 0, arch: vec![], norm: "none".into() },
                layers,
            )
            .unwrap();
            let input: Vec<f64> = (0..dims[0]).map(|_| draw(&mut rng)).collect();
            let net = QuantizedNetwork::new(&m, fmt).unwrap();
            let outs = net.forward(&net.quantize_input(&input).unwrap()).unwrap();
            let mut acts: Vec<BigRational> = input.iter().map(|&x| oracle::rat(x)).collect();
            for (l, layer) in m.layers.iter().enumerate() {
                let mut next = Vec::new();
                for r in 0..layer.rows {
                    let mut s = oracle::rat(layer.biases[r]);
                    for (w, a) in layer.row(r).iter().zip(&acts) {
                        s += oracle::rat(*w) * a;
                    }
                    let want = t.nearest(&s);
                    ties += want.tie as usize;
                    let mut v = want.value;
                    let mut bits = want.bits;
                    if layer.activation == Activation::Relu && v < BigRational::zero() {
                        v = BigRational::zero();
                        bits = 0;
                    }
                    assert_eq!(outs[l][r].bits(), bits, "{fmt} layer {l} row {r} sum {s}");
                    next.push(v);
                }
                acts = next;
            }
        }
    }
    assert!(ties > 0, "no ties exercised");
}
