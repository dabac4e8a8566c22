use flipdyn_cli::config::{
    Calibration, Costs, Dynamics, Kind, RuleName, Run, ScenarioConfig, Terminal, Value, VectorValue,
};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e3f64..1e3,
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
    ]
}

fn value() -> impl Strategy<Value = Value> {
    prop_oneof![
        finite().prop_map(Value::Scalar),
        (1usize..4, 1usize..4)
            .prop_flat_map(|(r, c)| prop::collection::vec(prop::collection::vec(finite(), c), r))
            .prop_map(Value::Matrix),
    ]
}

fn config() -> impl Strategy<Value = ScenarioConfig> {
    let dynamics = (prop::option::of(finite()), prop::option::of(value()), prop::option::of(value()), prop::option::of(value()))
        .prop_map(|(e, e_matrix, b, h)| Dynamics { e, e_matrix, b, h });
    let costs = (value(), value(), finite(), finite(), value(), value())
        .prop_map(|(g0, g1, d, a, m, n)| Costs { g0, g1, d, a, m, n });
    let terminal = prop::option::of((value(), value()).prop_map(|(g0, g1)| Terminal { g0, g1 }));
    let run = (
        any::<u64>(),
        0usize..1_000_000,
        prop_oneof![finite().prop_map(VectorValue::Scalar), prop::collection::vec(finite(), 1..4).prop_map(VectorValue::List)],
        0u8..2,
        prop::sample::select(vec!["chacha8", "chacha12", "chacha20"]),
    )
        .prop_map(|(seed, n_runs, x1, alpha1, rng)| Run { seed, n_runs, x1, alpha1, rng: rng.into() });
    let calibration = (1e-9f64..1.0, any::<bool>(), prop::option::of(0.1f64..1e3), prop::option::of(0.1f64..1e3))
        .prop_map(|(tolerance, definite, n_hi, g1_hi)| Calibration {
            tolerance,
            regime_rule: if definite { RuleName::Definite } else { RuleName::Strict },
            n_hi,
            g1_hi,
        });
    (any::<bool>(), 1usize..500, finite(), dynamics, costs, terminal, run, calibration).prop_map(
        |(scalar, horizon, dt, dynamics, costs, terminal, run, calibration)| ScenarioConfig {
            kind: if scalar { Kind::Scalar } else { Kind::Ndim },
            horizon,
            dt,
            dynamics,
            costs,
            terminal,
            run,
            calibration,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn parse_serialize_parse_is_identity(cfg in config()) {
        let text = cfg.to_toml().unwrap();
        let once = ScenarioConfig::parse(&text, "generated").unwrap();
        prop_assert_eq!(&once, &cfg);
        let twice = ScenarioConfig::parse(&once.to_toml().unwrap(), "generated").unwrap();
        prop_assert_eq!(twice, once);
    }
}
