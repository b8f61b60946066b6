use moiso::config::AppConfig;
use moiso::device::{device_matrix, pair_power, IsolatorConfig, PortPair};
use moiso::experiments::{count_coincidences, Case, Channel, Event, TimestampStream};
use moiso::magneto::{apply_field, HysteresisParams, MagnetizationState};
use moiso::optics::{
    cascade, make_attenuator, make_coupler, make_phase_shifter, max_singular_value, parallel, unitarity_defect,
    DirectionalElement,
};
use proptest::prelude::*;

fn element() -> impl Strategy<Value = DirectionalElement> {
    prop_oneof![
        (0.0..=1.0f64).prop_map(|r| make_coupler(r).unwrap()),
        (-7.0..7.0f64, -7.0..7.0f64).prop_map(|(a, b)| {
            let one = make_phase_shifter(a, b).unwrap();
            parallel(&[one.clone(), make_phase_shifter(b, a).unwrap()]).unwrap()
        }),
    ]
}

fn lossy_element() -> impl Strategy<Value = DirectionalElement> {
    (element(), 0.0..20.0f64, 0.0..20.0f64).prop_map(|(e, a, b)| {
        let loss = parallel(&[make_attenuator(a).unwrap(), make_attenuator(b).unwrap()]).unwrap();
        cascade(&[e, loss]).unwrap()
    })
}

fn events() -> impl Strategy<Value = Vec<Event>> {
    prop::collection::vec((any::<bool>(), 0u64..50_000), 0..80).prop_map(|raw| {
        let mut ev: Vec<Event> = raw
            .into_iter()
            .map(|(first, t)| Event {
                channel: if first { Channel::I } else { Channel::II },
                time_ps: t,
            })
            .collect();
        ev.sort_by_key(|e| e.time_ps);
        ev
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn lossless_compositions_stay_unitary(parts in prop::collection::vec(element(), 1..6)) {
        let e = cascade(&parts).unwrap();
        prop_assert!(unitarity_defect(e.forward()) <= 1e-12);
        prop_assert!(unitarity_defect(e.backward()) <= 1e-12);
    }

    #[test]
    fn lossy_compositions_are_passive(parts in prop::collection::vec(lossy_element(), 1..5)) {
        let e = cascade(&parts).unwrap();
        prop_assert!(max_singular_value(e.forward()) <= 1.0 + 1e-12);
        prop_assert!(max_singular_value(e.backward()) <= 1.0 + 1e-12);
    }

    #[test]
    fn cascade_is_associative(a in lossy_element(), b in lossy_element(), c in lossy_element()) {
        let left = cascade(&[cascade(&[a.clone(), b.clone()]).unwrap(), c.clone()]).unwrap();
        let right = cascade(&[a, cascade(&[b, c]).unwrap()]).unwrap();
        prop_assert!((left.forward() - right.forward()).norm() < 1e-12);
        prop_assert!((left.backward() - right.backward()).norm() < 1e-12);
    }

    #[test]
    fn device_is_passive_everywhere(w in 1500.0..1600.0f64, m in -1.0..=1.0f64, i in 1u8..=4, o in 1u8..=4) {
        let p = pair_power(&IsolatorConfig::default(), w, m, PortPair::new(i, o).unwrap()).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&p));
    }

    #[test]
    fn isolation_mirrors_under_field_reversal(w in 1500.0..1600.0f64, m in -1.0..=1.0f64) {
        let cfg = IsolatorConfig::default();
        let fwd = PortPair::new(1, 2).unwrap();
        let a = pair_power(&cfg, w, m, fwd).unwrap() / pair_power(&cfg, w, m, fwd.reversed()).unwrap();
        let b = pair_power(&cfg, w, -m, fwd.reversed()).unwrap() / pair_power(&cfg, w, -m, fwd).unwrap();
        prop_assert!((10.0 * a.log10() - 10.0 * b.log10()).abs() < 1e-9);
    }

    #[test]
    fn reciprocal_without_magnetization(w in 1500.0..1600.0f64) {
        let e = device_matrix(&IsolatorConfig::default(), w, 0.0).unwrap();
        prop_assert!(e.is_reciprocal());
    }

    #[test]
    fn hysteresis_stays_bounded(
        m0 in -1.0..=1.0f64,
        fields in prop::collection::vec(-5000.0..5000.0f64, 1..100),
        remanence in 0.0..0.9f64,
    ) {
        let params = HysteresisParams { remanence_ratio: remanence, ..Default::default() };
        let branches = params.branches().unwrap();
        let mut s = MagnetizationState::with_m(m0).unwrap();
        for f in fields {
            s = apply_field(&s, &branches, f);
            prop_assert!(s.m.abs() <= 1.0);
        }
    }

    #[test]
    fn coincidences_ignore_time_translation(ev in events(), shift in 0u64..1_000_000_000) {
        let s = TimestampStream::new(ev).unwrap();
        let a = count_coincidences(&s, 1000.0).unwrap();
        let b = count_coincidences(&s.shifted(shift).unwrap(), 1000.0).unwrap();
        prop_assert_eq!(a.raw_coincidences, b.raw_coincidences);
        prop_assert_eq!(a.accidentals, b.accidentals);
    }

    #[test]
    fn coincidences_ignore_channel_swap(ev in events()) {
        let s = TimestampStream::new(ev).unwrap();
        let a = count_coincidences(&s, 1000.0).unwrap();
        let b = count_coincidences(&s.swapped(), 1000.0).unwrap();
        prop_assert_eq!(a.raw_coincidences, b.raw_coincidences);
        prop_assert_eq!(a.accidentals, b.accidentals);
        prop_assert_eq!(a.singles_i, b.singles_ii);
    }

    #[test]
    fn config_round_trips(seed in any::<u64>(), rate in 1.0..1e7f64, eff in 0.01..=1.0f64, case in 0usize..5) {
        let mut cfg = AppConfig { seed, device: Some(IsolatorConfig::default()), ..Default::default() };
        cfg.source.pair_rate_hz = rate;
        cfg.detector.efficiency = eff;
        cfg.scenario.case = [Case::A, Case::APrime, Case::B, Case::BPrime, Case::ReferenceWaveguide][case];
        let back = AppConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
