use maxplus_hjb::config::ExperimentConfig;
use maxplus_hjb::families::canonical;
use maxplus_hjb::grid::{Axis, Grid, ValueField};
use maxplus_hjb::hamiltonian::{hamiltonian_h, hamiltonian_h_upper, hamiltonian_k, HamiltonianQuery};
use maxplus_hjb::io::{decode_value_field, encode_value_field, read_value_field_csv, value_field_to_csv_string};
use maxplus_hjb::MaxPlus;
use proptest::prelude::*;

/// Dyadic values keep `⊗` exact, so the identities hold bit for bit.
fn maxplus() -> impl Strategy<Value = MaxPlus> {
    prop_oneof![
        1 => Just(MaxPlus::NegInf),
        8 => (-256i32..256).prop_map(|k| MaxPlus::Finite(k as f64 / 8.0)),
    ]
}

fn field() -> impl Strategy<Value = ValueField> {
    (1usize..3, 3usize..6, 1usize..4).prop_flat_map(|(dim, points, steps)| {
        let len = points.pow(dim as u32) * (steps + 1);
        prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, len).prop_map(move |values| {
            let grid = Grid::new(vec![Axis::new(-1.5, 2.0, points); dim], 0.25, 1.0, steps).unwrap();
            ValueField::new(grid, values).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn semiring_laws(a in maxplus(), b in maxplus(), c in maxplus()) {
        prop_assert_eq!(a.oplus(b), b.oplus(a));
        prop_assert_eq!(a.otimes(b), b.otimes(a));
        prop_assert_eq!(a.oplus(b).oplus(c), a.oplus(b.oplus(c)));
        prop_assert_eq!(a.otimes(b).otimes(c), a.otimes(b.otimes(c)));
        prop_assert_eq!(a.otimes(b.oplus(c)), a.otimes(b).oplus(a.otimes(c)));
        prop_assert_eq!(a.oplus(MaxPlus::ZERO), a);
        prop_assert_eq!(a.otimes(MaxPlus::ONE), a);
        prop_assert_eq!(a.otimes(MaxPlus::ZERO), MaxPlus::ZERO);
        prop_assert_eq!(a.oplus(a), a);
    }

    #[test]
    fn binary_dump_round_trips(f in field()) {
        let back = decode_value_field(&encode_value_field(&f)).unwrap();
        prop_assert_eq!(back.grid(), f.grid());
        let same = back.values().iter().zip(f.values()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
    }

    #[test]
    fn csv_round_trips(f in field()) {
        let text = value_field_to_csv_string(&f);
        let back = read_value_field_csv(text.as_bytes()).unwrap();
        prop_assert_eq!(back.values(), f.values());
        prop_assert_eq!(back.grid().axes(), f.grid().axes());
    }

    #[test]
    fn truncated_dumps_are_rejected(f in field(), cut in 1usize..64) {
        let bytes = encode_value_field(&f);
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(decode_value_field(&bytes[..keep]).is_err());
    }

    #[test]
    fn hamiltonian_orderings(x in -2.0f64..2.0, r in -0.5f64..2.5, dr in 0.0f64..1.0, p in -3.0f64..3.0) {
        let problem = canonical();
        let at = |r: f64| HamiltonianQuery::new(std::slice::from_ref(&x), r, std::slice::from_ref(&p));
        let h = hamiltonian_h(&problem, &at(r)).as_f64();
        let upper = hamiltonian_h_upper(&problem, &at(r)).as_f64();
        let k = hamiltonian_k(&problem, &at(r), None, 0.125).as_f64();
        prop_assert!(h <= upper);
        prop_assert!(k <= h + 1e-12);
        // more admissible controls can only lower the minimum
        prop_assert!(hamiltonian_h(&problem, &at(r + dr)).as_f64() <= h);
    }

    #[test]
    fn config_echo_round_trips(seed in any::<u64>(), tol in 1e-6f64..1.0, instances in 1usize..100_000) {
        let mut cfg = ExperimentConfig { seed, tol, ..Default::default() };
        cfg.properties.instances = instances;
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
