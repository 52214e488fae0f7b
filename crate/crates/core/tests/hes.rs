use std::collections::BTreeMap;

use rand::Rng;
use safepol::hes::{
    default_pipeline, default_wiring, pd_relative_change, round_scores, scaled_pd_importance,
    submodel_pd_importance, scale_importance, HesPipeline, Node, Rounding, Wiring, THREE_WAY,
    TWO_WAY,
};
use safepol::rng;
use safepol::tables::{decode, is_monotone, mixed_step, DecisionTable, GridPosetDag, LinearExtensionState};

/// A random monotone table reached by a long walk from `start`.
fn random_monotone(start: &DecisionTable, steps: usize, g: &mut rng::Rng) -> DecisionTable {
    let dag = GridPosetDag::new(start.sizes()).unwrap();
    let mut state = LinearExtensionState::from_table(&dag, start).unwrap();
    for _ in 0..steps {
        mixed_step(&mut state, &dag, 0.5, g);
    }
    decode(&state, &dag)
}

fn min_pipeline(levels: u8) -> HesPipeline {
    let l = levels as usize;
    let tables = BTreeMap::from([
        (
            TWO_WAY.to_string(),
            DecisionTable::from_fn(vec![l, l], levels, |c| c[0].min(c[1])).unwrap(),
        ),
        (
            THREE_WAY.to_string(),
            DecisionTable::from_fn(vec![l, l, l], levels, |c| c[0].min(c[1]).min(c[2])).unwrap(),
        ),
    ]);
    HesPipeline::new(default_wiring(levels), tables).unwrap()
}

#[test]
fn coordinate_bumps_never_lower_the_score() {
    let mut g = rng::seeded(21);
    let base = default_pipeline(5);
    let mut pipelines = vec![base.clone(), min_pipeline(5)];
    for _ in 0..8 {
        let mut p = base.clone();
        for key in [TWO_WAY, THREE_WAY] {
            let t = random_monotone(p.table(key).unwrap(), 5000, &mut g);
            assert!(is_monotone(&t));
            p.set_table(key, t).unwrap();
        }
        pipelines.push(p);
    }
    let mut checked = 0;
    while checked < 10_000 {
        let p = &pipelines[checked % pipelines.len()];
        let x: Vec<f64> = (0..20).map(|_| g.random_range(1.0..=5.0)).collect();
        let j = g.random_range(0..20);
        let mut y = x.clone();
        y[j] = g.random_range(x[j]..=5.0);
        assert!(p.evaluate(&y).unwrap() >= p.evaluate(&x).unwrap(), "bump of x{} lowered the score", j + 1);
        checked += 1;
    }
}

#[test]
fn evaluation_examples() {
    assert_eq!(min_pipeline(5).evaluate(&[4.2; 20]).unwrap(), 4);
    let mut constant = default_pipeline(5);
    constant.set_table(TWO_WAY, DecisionTable::constant(vec![5, 5], 5, 5).unwrap()).unwrap();
    constant
        .set_table(THREE_WAY, DecisionTable::constant(vec![5, 5, 5], 5, 5).unwrap())
        .unwrap();
    let mut g = rng::seeded(2);
    for _ in 0..50 {
        let x: Vec<f64> = (0..20).map(|_| g.random_range(1.0..=5.0)).collect();
        assert_eq!(constant.evaluate(&x).unwrap(), 5);
    }
    let two = default_pipeline(5).table(TWO_WAY).unwrap().get(&[2, 3]).unwrap();
    assert_eq!(two, 2);
}

#[test]
fn rounding_rules() {
    assert_eq!(round_scores(&[3.0, 4.5, 1.49], 5, Rounding::HalfUp).unwrap(), vec![3, 5, 1]);
    assert_eq!(round_scores(&[4.5, 2.5], 5, Rounding::HalfDown).unwrap(), vec![4, 2]);
    assert_eq!(round_scores(&[4.5, 2.5, 3.5], 5, Rounding::HalfEven).unwrap(), vec![4, 2, 4]);
    assert!(round_scores(&[0.99], 5, Rounding::HalfUp).is_err());
    assert!(round_scores(&[5.01], 5, Rounding::HalfUp).is_err());
}

#[test]
fn shared_table_changes_every_node() {
    let mut p = min_pipeline(5);
    let x = [3.0; 20];
    let before = p.node_outputs(&p.round(&x).unwrap());
    let plus_one =
        DecisionTable::from_fn(vec![5, 5, 5], 5, |c| (c[0].min(c[1]).min(c[2]) + 1).min(5)).unwrap();
    p.set_table(THREE_WAY, plus_one).unwrap();
    let after = p.node_outputs(&p.round(&x).unwrap());
    let three_way: Vec<usize> = p
        .wiring()
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.table == THREE_WAY)
        .map(|(i, _)| i)
        .collect();
    // level-1 nodes see raw 3s, so each moves to 4
    for &i in &three_way[..6] {
        assert_eq!(before[i], 3);
        assert_eq!(after[i], 4);
    }
}

#[test]
fn scaled_importances_sum_to_one() {
    let mut g = rng::seeded(8);
    let base = default_pipeline(5);
    for trial in 0..20 {
        let mut p = base.clone();
        if trial > 0 {
            let t = random_monotone(p.table(THREE_WAY).unwrap(), 3000, &mut g);
            p.set_table(THREE_WAY, t).unwrap();
        }
        let raw: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..20).map(|_| g.random_range(1.0..=5.0)).collect())
            .collect();
        let sink_rows: Vec<Vec<u8>> = raw.iter().map(|x| p.sink_inputs(x).unwrap()).collect();
        let s = scaled_pd_importance(&p, &sink_rows).unwrap();
        assert_eq!(s.values.len(), 3);
        assert!((s.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.values.iter().all(|&v| v >= 0.0));

        let sub: Vec<f64> = (0..20).map(|j| submodel_pd_importance(&p, &raw, j).unwrap()).collect();
        let scaled = scale_importance(&sub);
        assert!((scaled.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn identical_pipelines_have_zero_relative_change() {
    let mut g = rng::seeded(3);
    let base = default_pipeline(5);
    for _ in 0..10 {
        let mut p = base.clone();
        let t = random_monotone(p.table(THREE_WAY).unwrap(), 3000, &mut g);
        p.set_table(THREE_WAY, t).unwrap();
        let rows: Vec<Vec<u8>> = (0..40)
            .map(|_| (0..3).map(|_| g.random_range(1..=5u8)).collect())
            .collect();
        let rc = pd_relative_change(&p, &p.clone(), &rows).unwrap();
        assert_eq!(rc.len(), 3);
        assert!(rc.iter().flatten().all(|&v| v == 0.0));
    }
}

#[test]
fn unwired_submodel_has_zero_importance() {
    let mut wiring = default_wiring(5);
    // drop x20 from the political node by reusing x19
    let political = wiring.nodes.iter_mut().find(|n| n.id == "political").unwrap();
    political.inputs[2] = "x19".into();
    let p = HesPipeline::new(wiring, default_pipeline(5).tables().clone()).unwrap();
    assert!(!p.uses_input(19));
    let mut g = rng::seeded(5);
    let raw: Vec<Vec<f64>> = (0..50)
        .map(|_| (0..20).map(|_| g.random_range(1.0..=5.0)).collect())
        .collect();
    assert_eq!(submodel_pd_importance(&p, &raw, 19).unwrap(), 0.0);
}

#[test]
fn projection_pipeline_concentrates_importance() {
    let wiring = Wiring {
        n_inputs: 3,
        score_levels: 5,
        rounding: Rounding::HalfUp,
        nodes: vec![Node {
            id: "top".into(),
            table: THREE_WAY.into(),
            inputs: vec!["x1".into(), "x2".into(), "x3".into()],
        }],
    };
    let proj = DecisionTable::from_fn(vec![5, 5, 5], 5, |c| c[0]).unwrap();
    let p = HesPipeline::new(wiring, BTreeMap::from([(THREE_WAY.to_string(), proj)])).unwrap();
    let mut g = rng::seeded(6);
    let raw: Vec<Vec<f64>> = (0..30)
        .map(|_| (0..3).map(|_| g.random_range(1.0..=5.0)).collect())
        .collect();
    let imp: Vec<f64> = (0..3).map(|j| submodel_pd_importance(&p, &raw, j).unwrap()).collect();
    assert_eq!(scale_importance(&imp).values, vec![1.0, 0.0, 0.0]);
}

#[test]
fn bad_wirings_rejected() {
    let tables = default_pipeline(5).tables().clone();
    let mut cyclic = default_wiring(5);
    cyclic.nodes[0].inputs[0] = "security".into();
    assert!(HesPipeline::new(cyclic, tables.clone()).is_err());

    let mut wrong_arity = default_wiring(5);
    wrong_arity.nodes[8].inputs.push("x1".into());
    assert!(HesPipeline::new(wrong_arity, tables.clone()).is_err());

    let mut unknown = default_wiring(5);
    unknown.nodes[0].inputs[0] = "x21".into();
    assert!(HesPipeline::new(unknown, tables).is_err());

    let json = r#"{"wiring":{"n_inputs":1,"nodes":[],"extra":1},"tables":{}}"#;
    assert!(serde_json::from_str::<HesPipeline>(json).is_err());
}
