use gbqa_core::analytics::{aggregate, hours_in_period, parse_period, PeriodRange, TimeStep};
use gbqa_core::calendar::{days_in_month, MonthDay};
use gbqa_core::corpus::{chunk_text, Chunk, SourceKind};
use gbqa_core::epw::{parse_epw, serialize_epw, EpwHeader, Field, HourlyRecord, Timestamp, WeatherSeries};
use gbqa_core::retrieval::{build_index, cosine, search_vector, OfflineEmbedder};
use proptest::prelude::*;

fn month_day() -> impl Strategy<Value = MonthDay> {
    (1u8..=12).prop_flat_map(|m| (Just(m), 1..=days_in_month(m, false))).prop_map(|(m, d)| MonthDay::new(m, d).unwrap())
}

fn year_with_dry_bulb(values: &[Option<f64>]) -> WeatherSeries {
    let mut records = Vec::new();
    let mut i = 0;
    for m in 1..=12 {
        for d in 1..=days_in_month(m, false) {
            for h in 0..24 {
                let mut r = HourlyRecord::new(2001, Timestamp::new(m, d, h));
                r.set(Field::DryBulbTemperature, values[i % values.len()]);
                records.push(r);
                i += 1;
            }
        }
    }
    WeatherSeries::new(EpwHeader::new("P", "X", 0.0, 0.0, 0.0, 0.0), records).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn period_text_round_trips(a in month_day(), b in month_day()) {
        let (start, end) = if a <= b { (a, b) } else { (b, a) };
        let spec = format!("DATE:{}/{}-{}/{}", start.month, start.day, end.month, end.day);
        let p = parse_period(&spec).unwrap();
        prop_assert_eq!(p, PeriodRange::new(start, end).unwrap());
        prop_assert_eq!(parse_period(&p.to_string()).unwrap(), p);
        if a != b {
            let reversed = format!("DATE:{}/{}-{}/{}", end.month, end.day, start.month, start.day);
            prop_assert_eq!(parse_period(&reversed).unwrap_err().code(), "ReversedRange");
        }
    }

    #[test]
    fn period_parser_total(s in "\\PC{0,24}") {
        if let Err(e) = parse_period(&s) {
            prop_assert!(["BadPeriodSyntax", "InvalidDate", "ReversedRange"].contains(&e.code()));
        }
    }

    #[test]
    fn chunks_cover_document(doc in "[a-zé ]{0,400}", size in 1usize..120, overlap_frac in 0.0f64..0.95) {
        let overlap = ((size as f64) * overlap_frac) as usize;
        let chunks = chunk_text(&doc, "d", SourceKind::Textbook, size, overlap).unwrap();
        let chars: Vec<char> = doc.chars().collect();
        let mut covered = vec![false; chars.len()];
        for (k, c) in chunks.iter().enumerate() {
            prop_assert_eq!(&c.chunk_id, &format!("d#{k}"));
            let n = c.text.chars().count();
            prop_assert!(n <= size && n > 0);
            let expected: String = chars[c.char_offset..c.char_offset + n].iter().collect();
            prop_assert_eq!(&c.text, &expected);
            covered[c.char_offset..c.char_offset + n].iter_mut().for_each(|x| *x = true);
        }
        prop_assert!(covered.iter().all(|&x| x));
    }

    #[test]
    fn cosine_laws(a in prop::collection::vec(-10.0f64..10.0, 8), b in prop::collection::vec(-10.0f64..10.0, 8), c in 0.01f64..100.0) {
        prop_assert_eq!(cosine(&a, &b), cosine(&b, &a));
        if a.iter().any(|x| *x != 0.0) {
            prop_assert!((cosine(&a, &a) - 1.0).abs() < 1e-9);
            let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
            prop_assert!((cosine(&scaled, &b) - cosine(&a, &b)).abs() < 1e-9);
        }
    }

    #[test]
    fn query_scaling_keeps_ranking(texts in prop::collection::vec("[a-d ]{1,12}", 2..30), query in "[a-d ]{1,12}", c in 0.1f64..50.0, k in 1usize..6) {
        let chunks: Vec<Chunk> = texts.iter().enumerate().map(|(i, t)| Chunk {
            chunk_id: format!("c{i:03}"),
            source_doc: "d".into(),
            source_kind: SourceKind::Manual,
            char_offset: 0,
            text: t.clone(),
        }).collect();
        let rt = tokio::runtime::Builder::new_current_thread().build().unwrap();
        let index = rt.block_on(build_index(chunks, &OfflineEmbedder)).unwrap();
        let q = OfflineEmbedder.embed_one(&query);
        let scaled: Vec<f64> = q.iter().map(|x| x * c).collect();
        let ids = |hits: Vec<gbqa_core::retrieval::SearchHit>| hits.into_iter().map(|h| h.chunk_id).collect::<Vec<_>>();
        let plain = search_vector(&index, &q, k).unwrap();
        prop_assert_eq!(plain.len(), k.min(texts.len()));
        prop_assert!(plain.windows(2).all(|w| w[0].score > w[1].score || (w[0].score == w[1].score && w[0].chunk_id < w[1].chunk_id)));
        // equal-score ties may resolve differently once rescaling perturbs the last bit
        let distinct = plain.windows(2).all(|w| (w[0].score - w[1].score).abs() > 1e-12);
        if distinct {
            prop_assert_eq!(ids(plain), ids(search_vector(&index, &scaled, k).unwrap()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn epw_values_round_trip(values in prop::collection::vec(prop::option::weighted(0.9, -70.0f64..60.0), 1..48)) {
        let series = year_with_dry_bulb(&values);
        let bytes = serialize_epw(&series).unwrap();
        let back = parse_epw(&bytes).unwrap();
        prop_assert_eq!(&back, &series);
    }

    #[test]
    fn bucket_invariants(values in prop::collection::vec(prop::option::weighted(0.8, -30.0f64..40.0), 1..60), a in month_day(), b in month_day()) {
        let series = year_with_dry_bulb(&values);
        let period = PeriodRange::new(a.min(b), a.max(b)).unwrap();
        for step in [TimeStep::Daily, TimeStep::Monthly] {
            let agg = aggregate(&series, "dry_bulb_temperature", step, period).unwrap();
            let total: usize = agg.points.iter().map(|p| p.count_present + p.count_missing).sum();
            prop_assert_eq!(total, hours_in_period(&series, period));
            for p in &agg.points {
                match p.stats {
                    Some(s) => prop_assert!(s.min <= s.mean && s.mean <= s.max && p.count_present > 0),
                    None => prop_assert_eq!(p.count_present, 0),
                }
            }
        }
    }
}
