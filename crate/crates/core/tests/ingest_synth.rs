mod common;

use std::collections::BTreeMap;

use chrono::Duration;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};
use tcube::ingest::{parse_events, summarize, write_events, EventRecord, IngestError};
use tcube::schema::{bin_age, AgeBins, Schema, UNKNOWN};
use tcube::synth::{generate_synthetic, ConfigError, SyntheticConfig};

use common::*;

fn reports_schema() -> Schema {
    Schema::default_reports()
}

#[test]
fn bad_rows_are_reported_with_line_numbers() {
    let text = "date,age,gender,state,municipality,scene,perpetrator\n\
                2008-01-05,13,female,SAN MIGUEL,Chirilagua,public road,boyfriend\n\
                2008-13-40,13,female,SAN MIGUEL,Chirilagua,public road,boyfriend\n\
                2008-01-07,,F,la unión,,,NOVIO\n";
    let out = parse_events(text.as_bytes(), &reports_schema()).unwrap();
    assert_eq!(out.records.len(), 2);
    assert_eq!(out.errors.len(), 1);
    assert_eq!(out.errors[0].line, 3);
    let aliased = &out.records[1];
    assert_eq!(aliased.value("gender"), Some("female"));
    assert_eq!(aliased.value("state"), Some("LA UNION"));
    assert_eq!(aliased.value("perpetrator"), Some("boyfriend"));
    assert_eq!(aliased.value("age"), Some(UNKNOWN));
    assert_eq!(aliased.value("scene"), Some(UNKNOWN));
    assert_eq!(out.records[0].value("age"), Some("12-14"));
}

#[test]
fn header_errors() {
    let err = parse_events("date,age,gender\n".as_bytes(), &reports_schema()).unwrap_err();
    match err {
        IngestError::SchemaMismatch(missing) => {
            assert_eq!(missing, ["state", "municipality", "scene", "perpetrator"]);
        }
        other => panic!("{other}"),
    }
}

#[test]
fn alternate_date_pattern() {
    let schema = Schema {
        date_format: "%m/%d/%Y".into(),
        ..reports_schema()
    };
    let text = "date,age,gender,state,municipality,scene,perpetrator\n01/30/2008,13,female,MORAZAN,,,boyfriend\n";
    let out = parse_events(text.as_bytes(), &schema).unwrap();
    assert_eq!(out.records[0].date, date(2008, 1, 30));
}

#[test]
fn summary_matches_two_pass_oracle() {
    let schema = reports_schema().with_range(date(2013, 1, 1), date(2013, 12, 31)).unwrap();
    let records = synthetic(&schema, &["state", "age", "gender"], 0.01, Vec::new(), 5);
    let s = summarize(&records);
    assert_eq!(s.total, records.len() as u64);
    let ages: Vec<f64> = records.iter().filter_map(|r| r.raw_age).map(f64::from).collect();
    let n = ages.len() as f64;
    let mean = ages.iter().sum::<f64>() / n;
    let var = ages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((s.age_mean.unwrap() - mean).abs() < 1e-9);
    assert!((s.age_sd.unwrap() - var.sqrt()).abs() < 1e-9);
    let under = records.iter().filter(|r| r.raw_age.is_some_and(|a| a < 15)).count() as u64;
    assert_eq!(s.ages_below(15), under);
    let females = records.iter().filter(|r| r.value("gender") == Some("female")).count() as u64;
    assert_eq!(s.count("gender", "female"), females);
    let lo = records.iter().map(|r| r.date).min().unwrap();
    let hi = records.iter().map(|r| r.date).max().unwrap();
    assert_eq!(s.date_range, Some((lo, hi)));
}

#[test]
fn synthetic_ages_fall_in_their_bins() {
    let schema = reports_schema().with_range(date(2013, 1, 1), date(2013, 6, 30)).unwrap();
    let records = synthetic(&schema, &["age"], 0.5, Vec::new(), 1);
    let bins = AgeBins::default_bins();
    assert!(!records.is_empty());
    for r in &records {
        assert_eq!(bin_age(r.raw_age.unwrap(), &bins), r.value("age").unwrap());
    }
}

/// Mean count per cell and day over many seeds is within 5% of the rate,
/// inside and outside an injection.
#[test]
fn synthetic_means_match_rates() {
    let schema = small_schema(date(2012, 1, 1), date(2012, 1, 20));
    let inj = injection(&[("place", &["P1"]), ("kind", &["k2"])], date(2012, 1, 11), 10, 3.0);
    let (mut plain, mut boosted, mut base) = (0u64, 0u64, 0u64);
    const SEEDS: u64 = 1_000;
    for seed in 0..SEEDS {
        let records = synthetic(&schema, &["place", "kind"], 0.4, vec![inj.clone()], seed);
        for r in records {
            let cell = (r.value("place").unwrap(), r.value("kind").unwrap());
            if cell == ("P1", "k2") {
                if r.date >= date(2012, 1, 11) {
                    boosted += 1;
                } else {
                    base += 1;
                }
            } else {
                plain += 1;
            }
        }
    }
    let per_day = |n: u64, cells: f64, days: f64| n as f64 / (SEEDS as f64 * cells * days);
    assert!((per_day(plain, 11.0, 20.0) / 0.4 - 1.0).abs() < 0.05);
    assert!((per_day(base, 1.0, 10.0) / 0.4 - 1.0).abs() < 0.05);
    assert!((per_day(boosted, 1.0, 10.0) / 1.2 - 1.0).abs() < 0.05);
}

/// Daily counts of one cell follow the configured Poisson law.
#[test]
fn synthetic_daily_counts_are_poisson() {
    let schema = small_schema(date(2000, 1, 1), date(2009, 12, 31));
    let rate = 1.5;
    let records = synthetic(&schema, &["place"], rate, Vec::new(), 42);
    let days = (date(2009, 12, 31) - date(2000, 1, 1)).num_days() as usize + 1;
    let mut daily = vec![0usize; days];
    for r in records.iter().filter(|r| r.value("place") == Some("P3")) {
        daily[(r.date - date(2000, 1, 1)).num_days() as usize] += 1;
    }
    // Bins 0..=5 and a pooled tail.
    let mut observed = [0f64; 7];
    for n in daily {
        observed[n.min(6)] += 1.0;
    }
    let law = Poisson::new(rate).unwrap();
    let mut expected = [0f64; 7];
    for (k, e) in expected.iter_mut().enumerate().take(6) {
        *e = law.pmf(k as u64) * days as f64;
    }
    expected[6] = days as f64 - expected[..6].iter().sum::<f64>();
    let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let p = 1.0 - ChiSquared::new(6.0).unwrap().cdf(stat);
    assert!(p > 0.001, "goodness of fit p = {p}");
}

#[test]
fn synthetic_config_from_toml() {
    let text = r#"
        start = "2013-01-01"
        end = "2013-03-31"
        seed = 7
        attributes = ["state", "age", "perpetrator"]
        uniform_rate = 0.002

        [[rates]]
        terms = { perpetrator = "boyfriend" }
        rate = 0.01

        [[injections]]
        terms = { state = ["SAN MIGUEL", "MORAZAN"], age = ["12-14"] }
        start = "2013-03-01"
        end = "2013-03-28"
        multiplier = 3.0
    "#;
    let config = SyntheticConfig::from_toml(text).unwrap();
    let schema = reports_schema();
    let a = generate_synthetic(&schema, &config, config.seed).unwrap();
    let b = generate_synthetic(&schema, &config, config.seed).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|r| r.value("gender") == Some(UNKNOWN)));

    let bad = SyntheticConfig {
        uniform_rate: -1.0,
        ..config.clone()
    };
    assert!(matches!(generate_synthetic(&schema, &bad, 0), Err(ConfigError::InvalidRate(_))));
    let mut bad = config;
    bad.injections[0].multiplier = -2.0;
    assert!(matches!(generate_synthetic(&schema, &bad, 0), Err(ConfigError::InvalidMultiplier(_))));
}

fn record_strategy() -> impl Strategy<Value = EventRecord> {
    let schema = reports_schema();
    let states = schema.domain("state").unwrap();
    let scenes = schema.domain("scene").unwrap();
    let perps = schema.domain("perpetrator").unwrap();
    (
        0i64..3_000,
        prop::option::of(0u32..=120),
        prop::sample::select(vec!["female", "male", UNKNOWN]),
        prop::sample::select(states),
        prop::sample::select(vec!["Chirilagua", "San Salvador, centro", "El \"Pueblo\"", UNKNOWN]),
        prop::sample::select(scenes),
        prop::sample::select(perps),
    )
        .prop_map(|(d, age, gender, state, muni, scene, perp)| {
            let bins = AgeBins::default_bins();
            let values: BTreeMap<String, String> = [
                ("age", age.map_or(UNKNOWN, |a| bin_age(a, &bins)).to_string()),
                ("gender", gender.to_string()),
                ("state", state),
                ("municipality", muni.to_string()),
                ("scene", scene),
                ("perpetrator", perp),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
            EventRecord {
                date: date(2006, 1, 1) + Duration::days(d),
                values,
                raw_age: age,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_then_parse_is_identity(records in prop::collection::vec(record_strategy(), 0..50)) {
        let schema = reports_schema();
        let mut buf = Vec::new();
        write_events(&mut buf, &records, &schema).unwrap();
        let out = parse_events(buf.as_slice(), &schema).unwrap();
        prop_assert!(out.errors.is_empty(), "{:?}", out.errors);
        prop_assert_eq!(out.records, records);
    }
}
