use cpcp_core::binning::{assign_column, default_config, MISSING};
use cpcp_core::bundling::{build_layout_with, count_pairs, Execution, KeepMask};
use cpcp_core::geometry::{render_svg, SvgStyle};
use cpcp_core::model::{Column, ColumnKind};
use cpcp_core::{
    build_layout, ClusterConfig, Dataset, Dataset32, DatasetId, ViewState, ViewState32,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Brute-force interval lookup: scan every interval.
fn oracle_cluster(b: &[f64], v: f64) -> usize {
    let k = b.len() - 1;
    for j in 0..k {
        let last = j == k - 1;
        if v >= b[j] && (v < b[j + 1] || (last && v <= b[j + 1])) {
            return j;
        }
    }
    panic!("{v} outside {b:?}");
}

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset<f64> {
    let cols = (0..d)
        .map(|j| {
            let lo = rng.random_range(-100.0..100.0);
            let span = rng.random_range(0.5..50.0);
            let values = (0..n)
                .map(|_| {
                    if rng.random_bool(0.05) {
                        None
                    } else {
                        // coarse grid so exact boundary hits happen
                        let t = (rng.random_range(0..=40) as f64) / 40.0;
                        Some(lo + t * span)
                    }
                })
                .collect();
            Column::numeric(format!("c{j}"), values)
        })
        .collect();
    Dataset::new(DatasetId::new("rand"), "rand", cols).unwrap()
}

fn random_config(rng: &mut ChaCha8Rng, col: &Column<f64>, k: usize) -> ClusterConfig<f64> {
    let base = default_config(col, k).unwrap();
    let Some(b) = base.boundaries() else {
        return base;
    };
    if b.len() < 3 || rng.random_bool(0.5) {
        return base;
    }
    // jitter interior boundaries inside their slots
    let mut nb = b.to_vec();
    for i in 1..nb.len() - 1 {
        let lo = nb[i - 1];
        let hi = b[i + 1];
        nb[i] = lo + (hi - lo) * rng.random_range(0.2..0.8);
    }
    ClusterConfig::from_boundaries(col.name(), nb)
}

#[test]
fn assignment_and_counts_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    for _ in 0..200 {
        let n = rng.random_range(0..=1000);
        let d = rng.random_range(1..=5);
        let ds = random_dataset(&mut rng, n, d);
        let configs: Vec<_> = ds
            .columns()
            .iter()
            .map(|c| {
                let k = rng.random_range(1..=6);
                random_config(&mut rng, c, k)
            })
            .collect();
        let assigned: Vec<_> = ds
            .columns()
            .iter()
            .zip(&configs)
            .map(|(c, cfg)| assign_column(c, cfg).unwrap())
            .collect();
        for ((col, cfg), a) in ds.columns().iter().zip(&configs).zip(&assigned) {
            let b = cfg.boundaries().unwrap();
            for r in 0..n {
                match col.numeric_value(r) {
                    None => assert_eq!(a.indices[r], MISSING),
                    Some(v) => assert_eq!(a.indices[r] as usize, oracle_cluster(b, v)),
                }
            }
        }
        let refs: Vec<_> = assigned.iter().collect();
        let keep = KeepMask::from_assignments(&refs);
        for p in 0..d.saturating_sub(1) {
            let m = count_pairs(refs[p], refs[p + 1], &keep).unwrap();
            let (ka, kb) = (configs[p].k(), configs[p + 1].k());
            for i in 0..ka {
                for j in 0..kb {
                    let expected = (0..n)
                        .filter(|&r| {
                            let all_present = ds.columns().iter().all(|c| !c.is_missing(r));
                            all_present
                                && oracle_cluster(
                                    configs[p].boundaries().unwrap(),
                                    ds.columns()[p].numeric_value(r).unwrap(),
                                ) == i
                                && oracle_cluster(
                                    configs[p + 1].boundaries().unwrap(),
                                    ds.columns()[p + 1].numeric_value(r).unwrap(),
                                ) == j
                        })
                        .count() as u64;
                    assert_eq!(m.get(i, j), expected);
                }
            }
        }
    }
}

fn mixed_dataset() -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 2000;
    let a: Vec<Option<f64>> = (0..n).map(|_| Some(rng.random_range(0.0..10.0))).collect();
    let b: Vec<Option<f64>> = a
        .iter()
        .map(|v| v.map(|x| x * 2.0 + rng.random_range(-1.0..1.0)))
        .collect();
    let labels = ["red", "green", "blue"];
    let c: Vec<Option<&str>> = (0..n)
        .map(|i| {
            if i % 53 == 0 {
                None
            } else {
                Some(labels[i % 3])
            }
        })
        .collect();
    let mut d: Vec<Option<f64>> = (0..n).map(|_| Some(rng.random_range(-5.0..5.0))).collect();
    d[7] = Some(500.0); // outlier population
    Dataset::new(
        DatasetId::new("mixed"),
        "mixed",
        vec![
            Column::numeric("a", a),
            Column::numeric("b", b),
            Column::categorical("c", &c),
            Column::numeric("d", d),
        ],
    )
    .unwrap()
}

fn view_of(ds: &Dataset<f64>, axes: &[&str], k: usize) -> ViewState<f64> {
    ViewState::new(
        ds.id().clone(),
        axes.iter().map(|s| s.to_string()).collect(),
        axes.iter()
            .map(|a| default_config(ds.column(a).unwrap(), k).unwrap()),
    )
}

#[test]
fn row_order_does_not_matter() {
    let ds = mixed_dataset();
    let view = view_of(&ds, &["a", "b", "c", "d"], 4);
    let layout = build_layout(&view, &ds).unwrap();

    let mut order: Vec<usize> = (0..ds.row_count()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let cols = ds
        .columns()
        .iter()
        .map(|c| match c.kind() {
            ColumnKind::Numeric => Column::numeric(
                c.name(),
                order.iter().map(|&r| c.numeric_value(r)).collect(),
            ),
            _ => {
                let v: Vec<Option<&str>> = order.iter().map(|&r| c.category_value(r)).collect();
                Column::categorical(c.name(), &v)
            }
        })
        .collect();
    let shuffled = Dataset::new(DatasetId::new("mixed"), "mixed", cols).unwrap();
    // category first-appearance order may differ, so compare numeric pairs only
    let numeric_view = view_of(&shuffled, &["a", "b"], 4);
    let l1 = build_layout(&view_of(&ds, &["a", "b"], 4), &ds).unwrap();
    let l2 = build_layout(&numeric_view, &shuffled).unwrap();
    assert_eq!(l1, l2);
    assert_eq!(layout.pairs.len(), 3);
}

#[test]
fn conservation_and_bound() {
    let ds = mixed_dataset();
    for k in 1..=6 {
        let layout = build_layout(&view_of(&ds, &["a", "c", "b", "d"], k), &ds).unwrap();
        assert_eq!(
            layout.dropped_rows,
            (0..2000).filter(|i| i % 53 == 0).count() as u64
        );
        assert!(layout.bundle_count() <= layout.bundle_bound());
        for p in &layout.pairs {
            let counts: u64 = p.bundles.iter().map(|b| b.bundle.count).sum();
            assert_eq!(counts, layout.kept_rows);
            let s: f64 = p.bundles.iter().map(|b| b.bundle.density).sum();
            assert!((s - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn parallel_layout_equals_sequential() {
    let ds = mixed_dataset();
    let view = view_of(&ds, &["d", "a", "c", "b"], 5);
    assert_eq!(
        build_layout_with(&view, &ds, Execution::Sequential).unwrap(),
        build_layout_with(&view, &ds, Execution::Parallel).unwrap()
    );
}

#[test]
fn svg_contract() {
    let ds = mixed_dataset();
    let mut view = view_of(&ds, &["a", "b", "d"], 3);
    view.anomaly_threshold = 0.01;
    let layout = build_layout(&view, &ds).unwrap();
    let svg = render_svg(&layout, &SvgStyle::default());
    assert_eq!(
        svg.matches(r#"class="bundle""#).count(),
        layout.bundle_count()
    );
    let dashed = layout.bundles().filter(|b| b.bundle.anomaly).count();
    assert!(
        dashed > 0,
        "the outlier row should form an anomalous bundle"
    );
    assert_eq!(svg.matches("stroke-dasharray").count(), dashed);
    assert_eq!(svg, render_svg(&layout, &SvgStyle::default()));

    // stroke widths equal density * w_max to 1e-6 px
    let mut widths: Vec<f64> = svg
        .lines()
        .filter(|l| l.contains(r#"class="bundle""#))
        .map(|l| {
            let at = l.find("stroke-width=\"").unwrap() + 14;
            l[at..].split('"').next().unwrap().parse().unwrap()
        })
        .collect();
    let mut expected: Vec<f64> = layout
        .bundles()
        .map(|b| b.bundle.density * view.w_max)
        .collect();
    widths.sort_by(|a, b| a.partial_cmp(b).unwrap());
    expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (w, e) in widths.iter().zip(&expected) {
        assert!((w - e).abs() <= 1e-6);
    }
    // wider bundles first
    let drawn: Vec<f64> = svg
        .lines()
        .filter(|l| l.contains(r#"class="bundle""#))
        .map(|l| {
            let at = l.find("stroke-width=\"").unwrap() + 14;
            l[at..].split('"').next().unwrap().parse().unwrap()
        })
        .collect();
    assert!(drawn.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn shared_nodes_have_horizontal_tangents() {
    let ds = mixed_dataset();
    let layout = build_layout(&view_of(&ds, &["a", "b", "d"], 3), &ds).unwrap();
    // bundles ending at axis 1 and bundles starting there share cluster nodes
    for incoming in &layout.pairs[0].bundles {
        for outgoing in &layout.pairs[1].bundles {
            if incoming.bundle.right_cluster == outgoing.bundle.left_cluster {
                assert_eq!(incoming.path.end, outgoing.path.start);
                let (_, t_in) = incoming.path.end_tangents();
                let (t_out, _) = outgoing.path.end_tangents();
                assert_eq!(t_in.y, 0.0);
                assert_eq!(t_out.y, 0.0);
                assert!(t_in.x > 0.0 && t_out.x > 0.0);
            }
        }
    }
}

#[test]
fn axis_scale_is_monotone() {
    let ds = mixed_dataset();
    let layout = build_layout(&view_of(&ds, &["a", "b"], 6), &ds).unwrap();
    for axis in &layout.axes {
        assert!(axis.clusters.windows(2).all(|w| w[0].y > w[1].y));
        assert!(axis.control_points.windows(2).all(|w| w[0].y > w[1].y));
    }
}

#[test]
fn single_precision_pipeline() {
    let ds: Dataset32 = Dataset::new(
        DatasetId::new("f32"),
        "f32",
        vec![
            Column::numeric_dense("x", (0..1000).map(|i| i as f32 / 10.0).collect()),
            Column::numeric_dense("y", (0..1000).map(|i| ((i * 7) % 1000) as f32).collect()),
        ],
    )
    .unwrap();
    let view: ViewState32 = ViewState::new(
        ds.id().clone(),
        vec!["x".into(), "y".into()],
        ds.columns().iter().map(|c| default_config(c, 4).unwrap()),
    );
    let layout = build_layout(&view, &ds).unwrap();
    let s: f32 = layout.bundles().map(|b| b.bundle.density).sum();
    assert!((s - 1.0).abs() < 1e-5);
    assert_eq!(layout.pairs[0].total, 1000);
}
