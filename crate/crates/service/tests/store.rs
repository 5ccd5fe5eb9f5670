use std::path::PathBuf;

use cpcp_core::model::ColumnKind;
use cpcp_core::{build_layout, Column, Dataset, DatasetId};
use cpcp_service::{Mutation, PatchRequest, ServiceError, SessionStore, ViewRequest};
use proptest::prelude::*;

fn data(name: &str) -> Vec<u8> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name);
    std::fs::read(path).unwrap()
}

fn axes(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn cars_store() -> (SessionStore, String) {
    let store = SessionStore::new();
    let ds = store.upload(&data("cars.csv"), Some("cars")).unwrap();
    let id = ds.id().to_string();
    (store, id)
}

fn cars_view(store: &SessionStore, id: &str) -> String {
    let req = ViewRequest {
        axis_order: axes(&["cylinders", "horsepower", "weight", "acceleration"]),
        k: Some(3),
        ..Default::default()
    };
    store.create_view(id, &req).unwrap().view_id
}

fn patch(store: &SessionStore, view: &str, mutation: Mutation) -> Result<u64, ServiceError> {
    let version = store.view(view)?.version;
    store
        .patch_view(view, &PatchRequest { version, mutation })
        .map(|s| s.version)
}

#[test]
fn cars_schema() {
    let (store, id) = cars_store();
    let ds = store.dataset(&id).unwrap();
    assert_eq!(ds.row_count(), 392);
    assert_eq!(ds.columns().len(), 7);
    assert!(ds.columns().iter().all(|c| c.kind() == ColumnKind::Numeric));
}

#[test]
fn occupancy_schema() {
    let store = SessionStore::new();
    let ds = store.upload(&data("occupancy_like.csv"), None).unwrap();
    assert_eq!(ds.row_count(), 20560);
    assert_eq!(ds.column("date").unwrap().kind(), ColumnKind::Text);
    let numeric = ds
        .columns()
        .iter()
        .filter(|c| c.kind() == ColumnKind::Numeric)
        .count();
    assert_eq!(numeric, 6);
}

#[test]
fn reupload_returns_same_dataset() {
    let (store, id) = cars_store();
    let again = store.upload(&data("cars.csv"), None).unwrap();
    assert_eq!(again.id().as_str(), id);
}

#[test]
fn edits_match_rebuild_from_scratch() {
    let (store, id) = cars_store();
    let view = cars_view(&store, &id);
    let ds = store.dataset(&id).unwrap();
    let edits = [
        Mutation::SplitCluster {
            axis: "weight".into(),
            position: 3000.0,
        },
        Mutation::ReorderAxes {
            axis_order: axes(&["weight", "cylinders", "acceleration", "horsepower"]),
        },
        Mutation::MoveBoundary {
            axis: "horsepower".into(),
            index: 1,
            value: 90.0,
        },
        Mutation::MergeAtBoundary {
            axis: "weight".into(),
            index: 2,
        },
        Mutation::SplitCluster {
            axis: "cylinders".into(),
            position: 5.0,
        },
    ];
    for (i, m) in edits.into_iter().enumerate() {
        assert_eq!(patch(&store, &view, m).unwrap(), i as u64 + 2);
        let snap = store.view(&view).unwrap();
        assert_eq!(*snap.layout, build_layout(&snap.state, &ds).unwrap());
    }
}

#[test]
fn move_recomputes_one_axis_and_two_pairs() {
    let (store, id) = cars_store();
    let view = cars_view(&store, &id);
    let before = store.cache_stats();
    assert_eq!(before.assignments_computed, 4);
    assert_eq!(before.pairs_computed, 3);

    patch(
        &store,
        &view,
        Mutation::MoveBoundary {
            axis: "horsepower".into(),
            index: 1,
            value: 100.0,
        },
    )
    .unwrap();
    let after = store.cache_stats();
    assert_eq!(after.assignments_computed - before.assignments_computed, 1);
    assert_eq!(after.pairs_computed - before.pairs_computed, 2);
    assert_eq!(after.masks_computed, before.masks_computed);
    // stale entries are dropped
    assert_eq!(after.assignments_cached, 4);
    assert_eq!(after.pairs_cached, 3);
}

#[test]
fn edit_on_end_axis_touches_one_pair() {
    let (store, id) = cars_store();
    let view = cars_view(&store, &id);
    let before = store.cache_stats();
    patch(
        &store,
        &view,
        Mutation::SplitCluster {
            axis: "acceleration".into(),
            position: 15.0,
        },
    )
    .unwrap();
    let after = store.cache_stats();
    assert_eq!(after.assignments_computed - before.assignments_computed, 1);
    assert_eq!(after.pairs_computed - before.pairs_computed, 1);
}

#[test]
fn reorder_reuses_assignments() {
    let (store, id) = cars_store();
    let view = cars_view(&store, &id);
    let before = store.cache_stats();
    let order = axes(&["cylinders", "weight", "horsepower", "acceleration"]);
    patch(&store, &view, Mutation::ReorderAxes { axis_order: order }).unwrap();
    let after = store.cache_stats();
    assert_eq!(after.assignments_computed, before.assignments_computed);
    // only cylinders-weight, weight-horsepower and horsepower-acceleration are new
    assert_eq!(after.pairs_computed - before.pairs_computed, 3);
    let back = axes(&["cylinders", "horsepower", "weight", "acceleration"]);
    patch(&store, &view, Mutation::ReorderAxes { axis_order: back }).unwrap();
    assert_eq!(store.cache_stats().pairs_computed - after.pairs_computed, 3);
}

#[test]
fn reads_are_idempotent() {
    let (store, id) = cars_store();
    let view = cars_view(&store, &id);
    let stats = store.cache_stats();
    let a = store.view(&view).unwrap();
    let b = store.view(&view).unwrap();
    assert_eq!(a.body, b.body);
    assert_eq!(a.version, b.version);
    assert_eq!(store.svg(&view).unwrap(), store.svg(&view).unwrap());
    assert_eq!(store.cache_stats(), stats);
}

#[test]
fn stale_version_is_rejected() {
    let (store, id) = cars_store();
    let view = cars_view(&store, &id);
    let m = Mutation::SplitCluster {
        axis: "weight".into(),
        position: 3000.0,
    };
    store
        .patch_view(
            &view,
            &PatchRequest {
                version: 1,
                mutation: m.clone(),
            },
        )
        .unwrap();
    let err = store
        .patch_view(
            &view,
            &PatchRequest {
                version: 1,
                mutation: m,
            },
        )
        .unwrap_err();
    assert!(matches!(
        err,
        ServiceError::VersionConflict {
            current: 2,
            cited: 1
        }
    ));
}

#[test]
fn failed_edit_leaves_view_unchanged() {
    let (store, id) = cars_store();
    let view = cars_view(&store, &id);
    let before = store.view(&view).unwrap();
    let err = patch(
        &store,
        &view,
        Mutation::MoveBoundary {
            axis: "weight".into(),
            index: 0,
            value: 1.0,
        },
    )
    .unwrap_err();
    assert_eq!(err.name(), "NotInterior");
    let after = store.view(&view).unwrap();
    assert_eq!(after.version, before.version);
    assert_eq!(after.body, before.body);
}

#[test]
fn error_names() {
    let (store, id) = cars_store();
    let bad_k = ViewRequest {
        axis_order: axes(&["mpg", "weight"]),
        k: Some(0),
        ..Default::default()
    };
    assert_eq!(
        store.create_view(&id, &bad_k).unwrap_err().name(),
        "InvalidK"
    );

    let unknown = ViewRequest {
        axis_order: axes(&["mpg", "colour"]),
        ..Default::default()
    };
    assert_eq!(
        store.create_view(&id, &unknown).unwrap_err().name(),
        "UnknownAxis"
    );

    let dup = ViewRequest {
        axis_order: axes(&["mpg", "mpg"]),
        ..Default::default()
    };
    assert_eq!(
        store.create_view(&id, &dup).unwrap_err().name(),
        "DuplicateAxis"
    );

    let mut bounds = ViewRequest {
        axis_order: axes(&["mpg"]),
        ..Default::default()
    };
    bounds
        .boundaries
        .insert("mpg".into(), vec![20.0, 10.0, 50.0]);
    assert!(store.create_view(&id, &bounds).is_err());

    assert_eq!(
        store.create_view("nope", &unknown).unwrap_err().name(),
        "UnknownDataset"
    );
    assert_eq!(store.view("nope").unwrap_err().name(), "UnknownView");

    let one = ViewRequest {
        axis_order: axes(&["mpg"]),
        bins: [("mpg".to_string(), 1)].into(),
        ..Default::default()
    };
    let view = store.create_view(&id, &one).unwrap();
    assert!(view.layout.pairs.is_empty());
    assert_eq!(view.layout.axes.len(), 1);
    let err = patch(
        &store,
        &view.view_id,
        Mutation::MergeAtBoundary {
            axis: "mpg".into(),
            index: 1,
        },
    )
    .unwrap_err();
    assert_eq!(err.name(), "LastCluster");
    let err = patch(
        &store,
        &view.view_id,
        Mutation::SplitCluster {
            axis: "weight".into(),
            position: 1.0,
        },
    )
    .unwrap_err();
    assert_eq!(err.name(), "UnknownAxis");
    let err = patch(
        &store,
        &view.view_id,
        Mutation::ReorderAxes {
            axis_order: axes(&["weight"]),
        },
    )
    .unwrap_err();
    assert_eq!(err.name(), "NotAPermutation");
}

#[test]
fn persisted_views_return_with_their_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("views.json");
    let (view, version, body) = {
        let store = SessionStore::with_persistence(&path).unwrap();
        let id = store
            .upload(&data("cars.csv"), None)
            .unwrap()
            .id()
            .to_string();
        let view = cars_view(&store, &id);
        patch(
            &store,
            &view,
            Mutation::SplitCluster {
                axis: "weight".into(),
                position: 2500.0,
            },
        )
        .unwrap();
        let snap = store.view(&view).unwrap();
        (view, snap.version, snap.body)
    };
    let store = SessionStore::with_persistence(&path).unwrap();
    assert!(
        store.view(&view).is_err(),
        "dormant until the dataset returns"
    );
    store.upload(&data("cars.csv"), None).unwrap();
    let restored = store.view(&view).unwrap();
    assert_eq!(restored.version, version);
    assert_eq!(restored.body, body);
}

fn small_dataset() -> Dataset<f64> {
    let n = 300;
    let col = |name: &str, f: &dyn Fn(usize) -> f64| {
        Column::numeric(
            name,
            (0..n)
                .map(|i| if i % 37 == 5 { None } else { Some(f(i)) })
                .collect(),
        )
    };
    Dataset::new(
        DatasetId::new("small"),
        "small",
        vec![
            col("a", &|i| i as f64),
            col("b", &|i| ((i * 7919) % 301) as f64 / 3.0),
            col("c", &|i| (i as f64).sin()),
            Column::categorical(
                "d",
                &(0..n)
                    .map(|i| Some(["x", "y", "z"][i % 3]))
                    .collect::<Vec<_>>(),
            ),
        ],
    )
    .unwrap()
}

fn mutation() -> impl Strategy<Value = Mutation> {
    let axis = prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(String::from);
    prop_oneof![
        Just(vec!["a", "b", "c", "d"])
            .prop_shuffle()
            .prop_map(|o| Mutation::ReorderAxes {
                axis_order: o.into_iter().map(String::from).collect()
            }),
        (axis.clone(), 0usize..6, 0.0f64..1.0).prop_map(|(axis, index, t)| {
            Mutation::MoveBoundary {
                axis,
                index,
                value: t,
            }
        }),
        (axis.clone(), 0.0f64..1.0)
            .prop_map(|(axis, t)| Mutation::SplitCluster { axis, position: t }),
        (axis, 0usize..6).prop_map(|(axis, index)| Mutation::MergeAtBoundary { axis, index }),
    ]
}

/// Maps unit-interval positions onto the axis domain so edits land in range.
fn scale(m: Mutation, ds: &Dataset<f64>) -> Mutation {
    let span = |axis: &str, t: f64| {
        let s = ds
            .column(axis)
            .unwrap()
            .numeric_stats()
            .map_or((0.0, 3.0), |s| (s.min, s.max));
        s.0 + t * (s.1 - s.0)
    };
    match m {
        Mutation::MoveBoundary { axis, index, value } => {
            let value = span(&axis, value);
            Mutation::MoveBoundary { axis, index, value }
        }
        Mutation::SplitCluster { axis, position } => {
            let position = span(&axis, position);
            Mutation::SplitCluster { axis, position }
        }
        other => other,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn any_edit_sequence_matches_rebuild(edits in prop::collection::vec(mutation(), 1..12)) {
        let store = SessionStore::new();
        let ds = store.insert_dataset(small_dataset());
        let req = ViewRequest { axis_order: axes(&["a", "b", "c", "d"]), k: Some(3), ..Default::default() };
        let view = store.create_view(ds.id().as_str(), &req).unwrap().view_id;
        for m in edits {
            let before = store.view(&view).unwrap();
            match patch(&store, &view, scale(m, &ds)) {
                Ok(v) => prop_assert_eq!(v, before.version + 1),
                Err(_) => prop_assert_eq!(store.view(&view).unwrap().version, before.version),
            }
            let snap = store.view(&view).unwrap();
            prop_assert_eq!(&*snap.layout, &build_layout(&snap.state, &ds).unwrap());
        }
    }
}
