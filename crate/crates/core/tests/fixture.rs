mod common;

use common::fixture::{self, AlwaysSufficient};
use lifegraph::analysis::effective_depth_stats;
use lifegraph::graph::LifeGraph;
use lifegraph::model::Recorder;
use lifegraph::retrieval::{Query, RetrievalConfig, Retriever};

#[test]
fn fixture_has_enough_material() {
    let (va, _, _) = fixture::load();
    assert!(va.concepts.len() >= 3);
    assert!(va.history.len() >= 5);
    assert!(va.media_ids().count() >= 20);
}

#[test]
fn build_is_anchored() {
    let (g, report, va, ..) = fixture::build();
    fixture::check_anchoring(&g, &va).unwrap();
    g.check_invariants().unwrap();
    assert_eq!(report.batches.len(), va.history.len());
    assert!(report.batches.iter().all(|b| b.skipped.is_none()));
}

#[test]
fn anchoring_oracle_catches_a_foreign_node() {
    let (mut g, _, va, ..) = fixture::build();
    let david = g.find_by_label("David")[0].id.clone();
    let r = lifegraph::graph::MediaRef::new("xmas_1.png", Some("2023-12-24".parse().unwrap()));
    let ghost = g
        .add_node(
            lifegraph::graph::EntityKind::Object,
            "Mallard Duck",
            Default::default(),
            [r.clone()],
        )
        .unwrap();
    g.add_edge(&david, "saw", &ghost, Default::default(), [r]).unwrap();
    assert!(fixture::check_anchoring(&g, &va).is_err());
}

#[test]
fn ghost_triple_is_rejected() {
    let (g, report, ..) = fixture::build();
    assert!(g.find_by_label("Mallard Duck").is_empty());
    assert_eq!(report.rejected(), 1);
    let reason = &report.batches.iter().flat_map(|b| &b.rejections).next().unwrap().reason;
    assert!(reason.contains("Mallard Duck"), "{reason}");
}

#[test]
fn build_is_deterministic_and_round_trips() {
    let persist = |g: &LifeGraph| {
        let mut buf = Vec::new();
        g.persist(&mut buf).unwrap();
        buf
    };
    let (a, ..) = fixture::build();
    let (b, ..) = fixture::build();
    assert_eq!(persist(&a), persist(&b));
    let back = LifeGraph::load(&persist(&a)[..]).unwrap();
    assert_eq!(back, a);
}

#[test]
fn every_fixture_query_is_answered() {
    let (g, _, _, store, mock) = fixture::build();
    let r = Retriever::new(&g, &mock).with_media(&store);
    let mut known = 0;
    for q in fixture::queries() {
        let a = r.answer(&Query::new(&q)).unwrap();
        assert!(!a.text.is_empty());
        assert!(!a.context.paths.is_empty());
        known += usize::from(a.text != "I don't know.");
    }
    assert_eq!(known, 16);
}

#[test]
fn depth_sweep_shape() {
    let (g, _, _, store, mock) = fixture::build();
    let queries: Vec<Query> = fixture::queries().iter().map(Query::new).collect();
    let base = RetrievalConfig::default();
    let limits = [1, 2, 3, 4, 5];
    let stats = effective_depth_stats(&g, &queries, &limits, &base, &mock, Some(&store));
    assert!(stats.iter().all(|s| s.failures == 0 && s.runs == queries.len()));
    assert_eq!(stats[0].mean, 1.0);
    for w in stats.windows(2) {
        assert!(w[0].mean <= w[1].mean, "{stats:?}");
    }
    // Some queries need more than one hop.
    assert!(stats[2].mean > 1.0);

    let eager = AlwaysSufficient(&mock);
    let flat = effective_depth_stats(&g, &queries, &limits, &base, &eager, Some(&store));
    assert!(flat.iter().all(|s| s.mean == 1.0), "{flat:?}");
}

#[test]
fn disabling_refs_leaves_paths_untouched() {
    let (g, _, _, store, mock) = fixture::build();
    let rec = Recorder::new(&mock);
    let mut with_refs_total = 0;
    for q in fixture::queries() {
        let query = Query::new(&q);
        let run = |with_refs: bool| {
            rec.clear();
            let cfg = RetrievalConfig {
                with_refs,
                ..Default::default()
            };
            let a = Retriever::new(&g, &rec)
                .with_media(&store)
                .with_config(cfg)
                .answer(&query)
                .unwrap();
            let last = rec.transcripts().pop().unwrap();
            let media: usize = last.iter().map(|t| t.media.len()).sum();
            (a.context, media)
        };
        let (on, on_media) = run(true);
        let (off, off_media) = run(false);
        assert_eq!(
            serde_json::to_string(&on.paths).unwrap(),
            serde_json::to_string(&off.paths).unwrap(),
            "{q}"
        );
        assert!(off.refs.is_empty());
        assert_eq!(off_media, 0);
        assert_eq!(on_media, on.refs.len());
        with_refs_total += on.refs.len();
    }
    assert!(with_refs_total > 0);
}
