//! Property suites. Every oracle here is a direct per-pixel or per-item
//! recount, independent of the library's implementation.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use cvf_core::agreement::{agreement_stats, Label};
use cvf_core::augment::{relative_summary, Composition};
use cvf_core::coco::{CategoryTable, CocoCorpus};
use cvf_core::consistency::{classify_cv, classify_iv, compute_report, FlipOutcome, PredictionSet, ReportOptions};
use cvf_core::mask::{dilate, overlap_score, rasterize_polygons, union_masks, SegmentationMask};
use cvf_core::rle::{counts_from_string, counts_to_string, decode_rle, encode_rle, mask_from_string, mask_to_string};
use cvf_core::select::{EditMode, EditRecord};
use cvf_core::vocab::{extract_qa_objects, VocabularyTable};
use cvf_core::vqa::{split_val, IqaTriplet};

fn mask_strategy(max_w: u32, max_h: u32) -> impl Strategy<Value = SegmentationMask> {
    (1..=max_w, 1..=max_h, 0.0f64..1.0).prop_flat_map(|(w, h, density)| {
        proptest::collection::vec(proptest::bool::weighted(density.clamp(0.01, 0.99)), (w * h) as usize)
            .prop_map(move |bits| SegmentationMask::from_bits(w, h, bits))
    })
}

fn mask_pair(max: u32) -> impl Strategy<Value = (SegmentationMask, SegmentationMask)> {
    (1..=max, 1..=max).prop_flat_map(|(w, h)| {
        let n = (w * h) as usize;
        (
            proptest::collection::vec(any::<bool>(), n),
            proptest::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(a, b)| (SegmentationMask::from_bits(w, h, a), SegmentationMask::from_bits(w, h, b)))
    })
}

fn brute_dilate(m: &SegmentationMask, r: u32) -> SegmentationMask {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let r = r as i64;
    let mut out = SegmentationMask::empty(m.width(), m.height());
    for y in 0..h {
        for x in 0..w {
            let hit = (-r..=r).any(|dy| {
                (-r..=r).any(|dx| {
                    let (nx, ny) = (x + dx, y + dy);
                    nx >= 0 && ny >= 0 && nx < w && ny < h && m.get(nx as u32, ny as u32)
                })
            });
            out.set(x as u32, y as u32, hit);
        }
    }
    out
}

fn brute_counts(m: &SegmentationMask) -> Vec<u32> {
    // column-major, starting with a (possibly empty) run of zeros
    let mut counts = Vec::new();
    let (mut cur, mut run) = (false, 0u32);
    for x in 0..m.width() {
        for y in 0..m.height() {
            let v = m.get(x, y);
            if v != cur {
                counts.push(run);
                run = 0;
                cur = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    counts
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn overlap_matches_pixel_recount((t, q) in mask_pair(24)) {
        let inter = t.bits().iter().zip(q.bits()).filter(|(a, b)| **a && **b).count();
        let qa = q.bits().iter().filter(|b| **b).count();
        match overlap_score(&t, &q) {
            Ok(s) => {
                prop_assert!(qa > 0);
                prop_assert_eq!(s, inter as f64 / qa as f64);
                prop_assert!((0.0..=1.0).contains(&s));
            }
            Err(_) => prop_assert_eq!(qa, 0),
        }
    }

    #[test]
    fn overlap_is_monotone_in_the_target((t, q) in mask_pair(16)) {
        prop_assume!(!q.is_empty());
        let mut bigger = t.clone();
        bigger.union_with(&q).unwrap();
        prop_assert!(overlap_score(&bigger, &q).unwrap() >= overlap_score(&t, &q).unwrap());
        prop_assert_eq!(overlap_score(&q, &q).unwrap(), 1.0);
    }

    #[test]
    fn rle_round_trips(m in mask_strategy(30, 30)) {
        let counts = encode_rle(&m);
        prop_assert_eq!(&counts, &brute_counts(&m));
        prop_assert_eq!(counts.iter().map(|&c| c as u64).sum::<u64>(), m.pixel_total());
        prop_assert_eq!(decode_rle(&counts, m.width(), m.height()).unwrap(), m.clone());
        let s = mask_to_string(&m);
        prop_assert_eq!(mask_from_string(&s, m.width(), m.height()).unwrap(), m);
    }

    #[test]
    fn count_strings_round_trip(counts in proptest::collection::vec(0u32..5000, 0..40)) {
        prop_assert_eq!(counts_from_string(&counts_to_string(&counts)).unwrap(), counts);
    }

    #[test]
    fn dilation_matches_chebyshev_brute_force(m in mask_strategy(20, 20), r in 0u32..5) {
        let d = dilate(&m, r);
        prop_assert_eq!(&d, &brute_dilate(&m, r));
        prop_assert!(m.is_subset_of(&d));
        prop_assert!(d.is_subset_of(&dilate(&m, r + 1)));
    }

    #[test]
    fn dilation_is_identity_at_radius_zero(m in mask_strategy(20, 20)) {
        prop_assert_eq!(dilate(&m, 0), m);
    }

    #[test]
    fn rectangles_rasterize_to_their_pixels(x0 in 0u32..20, y0 in 0u32..20, dw in 1u32..10, dh in 1u32..10) {
        let (x1, y1) = (x0 + dw, y0 + dh);
        let poly = vec![(x0 as f64, y0 as f64), (x1 as f64, y0 as f64), (x1 as f64, y1 as f64), (x0 as f64, y1 as f64)];
        let m = rasterize_polygons(&[poly], 25, 25).unwrap();
        for y in 0..25 {
            for x in 0..25 {
                let inside = x >= x0 && x < x1.min(25) && y >= y0 && y < y1.min(25);
                prop_assert_eq!(m.get(x, y), inside);
            }
        }
    }

    #[test]
    fn union_is_pixelwise_or((a, b) in mask_pair(16)) {
        let u = union_masks([&a, &b], a.width(), a.height()).unwrap();
        for i in 0..a.bits().len() {
            prop_assert_eq!(u.bits()[i], a.bits()[i] || b.bits()[i]);
        }
    }
}

fn classify_iv_oracle(o: &str, e: &str, gt: &str) -> FlipOutcome {
    if o == e {
        FlipOutcome::Consistent
    } else if o == gt {
        FlipOutcome::PosToNeg
    } else if e == gt {
        FlipOutcome::NegToPos
    } else {
        FlipOutcome::NegToNeg
    }
}

proptest! {
    #[test]
    fn iv_matches_oracle_on_small_domains(o in 0u8..6, e in 0u8..6, gt in 0u8..6) {
        let (o, e, gt) = (o.to_string(), e.to_string(), gt.to_string());
        prop_assert_eq!(classify_iv(&o, &e, &gt), classify_iv_oracle(&o, &e, &gt));
        if o == gt && e == gt {
            prop_assert_eq!(classify_iv(&o, &e, &gt), FlipOutcome::Consistent);
        }
    }

    #[test]
    fn cv_verdict_depends_only_on_the_difference(o in 1u32..40, e in 0u32..40, k in 0u32..40, n in 1u32..50) {
        let a = classify_cv(&o.to_string(), &e.to_string(), n).is_flip();
        let b = classify_cv(&(o + k).to_string(), &(e + k).to_string(), n + k).is_flip();
        prop_assert_eq!(a, b);
        prop_assert_eq!(a, e + 1 != o);
    }

    #[test]
    fn reports_partition_exactly(preds in proptest::collection::vec((0u8..4, 0u8..4), 1..60), mode_cv in any::<bool>()) {
        let mode = if mode_cv { EditMode::Cv } else { EditMode::Iv };
        let mut orig = PredictionSet::new("m");
        let mut edit = PredictionSet::new("m");
        let mut manifest = Vec::new();
        let mut triplets = Vec::new();
        for (i, (o, e)) in preds.iter().enumerate() {
            let qid = i as u64 + 1;
            let t = IqaTriplet::new(qid, qid, "How many cats are there?", "how many", &vec!["2".to_string(); 10]);
            orig.insert(qid.to_string(), &o.to_string());
            let id = format!("e{i:03}");
            edit.insert(id.clone(), &e.to_string());
            manifest.push(record(&id, qid, mode, (i % 17) as u64 + 1));
            triplets.push(t);
        }
        let r = compute_report(&orig, &edit, &manifest, &triplets, mode, ReportOptions::default()).unwrap();
        let f = r.flips;
        prop_assert_eq!(f.flipped(), f.pos_to_neg + f.neg_to_pos + f.neg_to_neg);
        prop_assert_eq!(f.n_pairs, f.consistent + f.flipped());
        prop_assert_eq!(f.n_pairs as usize, preds.len());
        let p = r.percentages;
        prop_assert!((p.flipped - (p.pos_to_neg + p.neg_to_pos + p.neg_to_neg)).abs() < 1e-9);
        for v in [p.flipped, p.pos_to_neg, p.neg_to_pos, p.neg_to_neg, r.accuracy_orig.percent()] {
            prop_assert!((0.0..=100.0).contains(&v));
        }
        let binned: u64 = r.per_area_bin.iter().map(|b| b.flips.n_pairs).sum();
        prop_assert_eq!(binned + r.unbinned_pairs, f.n_pairs);

        let swapped = relative_summary(&r, &r).unwrap();
        prop_assert_eq!(swapped.overall.accuracy_delta, 0.0);
        if f.flipped() > 0 {
            prop_assert_eq!(swapped.overall.flip_reduction_relative, Some(0.0));
        }
    }

    #[test]
    fn agreement_bounds_hold(store in proptest::collection::vec(proptest::collection::vec(proptest::option::of(0u8..3), 12), 1..5)) {
        let mut labels: BTreeMap<String, BTreeMap<String, Label>> = BTreeMap::new();
        for (u, row) in store.iter().enumerate() {
            let m = labels.entry(format!("u{u}")).or_default();
            for (i, l) in row.iter().enumerate() {
                if let Some(l) = l {
                    m.insert(format!("i{i}"), Label::ALL[*l as usize]);
                }
            }
        }
        let r = agreement_stats(&labels);
        for label in Label::ALL {
            for c in r.per_user.values() {
                prop_assert!(r.intersection.get(label) <= c.get(label));
                prop_assert!(c.get(label) <= r.union.get(label));
            }
        }
        for c in r.per_user.values() {
            prop_assert_eq!(c.yes + c.no + c.ambiguous + c.missing, r.universe);
        }
    }

    #[test]
    fn split_keeps_images_whole(images in proptest::collection::vec(1u64..40, 1..80), ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let triplets: Vec<IqaTriplet> = images
            .iter()
            .enumerate()
            .map(|(i, &img)| IqaTriplet::new(i as u64, img, "Is it?", "is it", &["yes".to_string()]))
            .collect();
        let (test, val) = split_val(&triplets, ratio, seed).unwrap();
        let (test2, _) = split_val(&triplets, ratio, seed).unwrap();
        prop_assert_eq!(&test, &test2);
        let side: BTreeMap<u64, bool> = test.question_ids.iter().map(|q| (*q, true))
            .chain(val.question_ids.iter().map(|q| (*q, false))).collect();
        prop_assert_eq!(side.len(), triplets.len());
        let mut image_side: BTreeMap<u64, bool> = BTreeMap::new();
        for t in &triplets {
            let s = side[&t.question_id];
            prop_assert_eq!(*image_side.entry(t.image_id).or_insert(s), s);
        }
        let distinct: BTreeSet<u64> = images.iter().copied().collect();
        let n_test = image_side.values().filter(|s| **s).count();
        prop_assert_eq!(n_test, (ratio * distinct.len() as f64).round() as usize);
    }
}

fn record(id: &str, qid: u64, mode: EditMode, area_pixels: u64) -> EditRecord {
    EditRecord {
        edit_id: id.into(),
        question_id: qid,
        image_id: qid,
        mode,
        target_category_id: 17,
        target_category: "cat".into(),
        removed_instance_ids: vec![1],
        removal_mask: SegmentationMask::empty(10, 10),
        expected_answer: "1".into(),
        original_answer: "2".into(),
        question: "How many cats are there?".into(),
        question_type: "how many".into(),
        overlap: cvf_core::mask::PixelRatio::ZERO,
        area: cvf_core::mask::PixelRatio { numerator: area_pixels, denominator: 100 },
        provenance: vec![],
    }
}

const WORDS: &[&str] = &[
    "is", "there", "a", "the", "what", "color", "dog", "dogs", "hot", "man", "wine", "glass", "bike", "bus", "on",
    "table", "dining", "of", "cell", "phone", "many",
];

proptest! {
    #[test]
    fn adding_fresh_phrases_never_removes_categories(
        words in proptest::collection::vec(0usize..WORDS.len(), 1..10),
        fresh in proptest::collection::vec((1usize..3, 1u64..80, 0usize..10), 1..4),
    ) {
        let cats = CategoryTable::coco80();
        let mut table = VocabularyTable::default_for(&cats).unwrap();
        let mut text: Vec<String> = words.iter().map(|&i| WORDS[i].to_string()).collect();
        let mut rules = Vec::new();
        for (k, (len, cat, at)) in fresh.iter().enumerate() {
            let phrase: Vec<String> = (0..*len).map(|j| format!("zqx{k}w{j}")).collect();
            rules.push((phrase.join(" "), *cat));
            let pos = (*at).min(text.len());
            text.splice(pos..pos, phrase);
        }
        let before = extract_qa_objects(1, &text.join(" "), "", &table).categories;
        for (phrase, cat) in rules {
            if cats.contains(cat) {
                table.add_rule(&phrase, cat).unwrap();
            }
        }
        let after = extract_qa_objects(1, &text.join(" "), "", &table).categories;
        prop_assert!(before.is_subset(&after), "{before:?} vs {after:?}");
    }
}

#[test]
fn a_longer_phrase_can_hide_a_shorter_one() {
    // "hot dog" is its own category, so adding it takes "dog" away.
    let cats = CategoryTable::coco80();
    let canonical = VocabularyTable::canonical(&cats);
    let no_hot_dog = VocabularyTable::canonical(&CategoryTable::new(
        cats.entries().iter().filter(|c| c.name != "hot dog").cloned().collect(),
    ).unwrap());
    let q = "Is there a hot dog?";
    assert_eq!(extract_qa_objects(1, q, "", &no_hot_dog).categories, BTreeSet::from([18]));
    assert_eq!(extract_qa_objects(1, q, "", &canonical).categories, BTreeSet::from([58]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn corpora_survive_a_json_round_trip(rects in proptest::collection::vec((1u64..4, 0u32..30, 0u32..30, 1u32..10, 1u32..10), 1..12)) {
        let mut images = String::new();
        let mut anns = Vec::new();
        for img in 1..4u64 {
            if !images.is_empty() { images.push(','); }
            images.push_str(&format!(r#"{{"id":{img},"width":40,"height":40,"file_name":"i{img}.png"}}"#));
        }
        for (i, (img, x, y, w, h)) in rects.iter().enumerate() {
            let (x1, y1) = (x + w, y + h);
            anns.push(format!(
                r#"{{"id":{},"image_id":{img},"category_id":{},"segmentation":[[{x},{y},{x1},{y},{x1},{y1},{x},{y1}]],"area":1.0,"bbox":[0,0,1,1]}}"#,
                i + 1,
                if i % 2 == 0 { 1 } else { 18 }
            ));
        }
        let text = format!(
            r#"{{"images":[{images}],"annotations":[{}],"categories":[{{"id":1,"name":"person"}},{{"id":18,"name":"dog"}}]}}"#,
            anns.join(",")
        );
        let a = CocoCorpus::from_json(&text, "gen.json").unwrap();
        let b = CocoCorpus::from_json(&a.to_json(), "again.json").unwrap();
        prop_assert_eq!(&a, &b);
        let c = CocoCorpus::from_json(&text, "gen.json").unwrap();
        prop_assert_eq!(a, c);
    }
}

#[test]
fn composition_membership_is_consistent() {
    for c in Composition::ALL {
        let iv = c.includes(EditMode::Iv);
        let cv = c.includes(EditMode::Cv);
        assert_eq!(c.as_str().contains("iv"), iv);
        assert_eq!(c.as_str().contains("cv"), cv);
    }
}
