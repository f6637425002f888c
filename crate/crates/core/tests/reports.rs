use mom_core::function_classes::LossFunction;
use mom_core::geometry_nets::{ball_net, BallNet};
use mom_core::harness::{
    kmeans_interval_demo, moment_bound_check, permutation_simulation, IndicatorMatrix, KMeansIntervalReport,
    MomentCheckReport, PermutationSimReport,
};
use mom_core::planner::{plan, PlanClass};
use mom_core::{mom, partition, DistributionSpec, EstimateResult, Plan, PlanRequest};
use serde::de::DeserializeOwned;
use serde::Serialize;

fn round_trip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(value: &T) {
    let text = serde_json::to_string(value).unwrap();
    let back: T = serde_json::from_str(&text).unwrap();
    assert_eq!(&back, value);
}

#[test]
fn reports_round_trip() {
    let m = IndicatorMatrix::new(vec![[true, false]; 30]).unwrap();
    let r: PermutationSimReport = permutation_simulation(&m, 100_000, 1).unwrap();
    round_trip(&r);

    let r: MomentCheckReport =
        moment_bound_check(&DistributionSpec::symmetric_pareto(2.5, 1.0, 0.0), 1.5, &[10, 20], 500, 2).unwrap();
    round_trip(&r);

    let law = DistributionSpec::MixtureOfGaussians {
        weights: vec![0.3, 0.7],
        means: vec![vec![0.0, 1.0], vec![2.0, -1.0]],
        sds: vec![1.0, 0.5],
    };
    let r: KMeansIntervalReport = kmeans_interval_demo(&law, 0.3, 5, 50, 5, 3).unwrap();
    round_trip(&r);

    let net: BallNet = ball_net(1.0, 0.5, 2, 4, 500).unwrap();
    round_trip(&net);

    let est: EstimateResult = mom(&partition(vec![1.0, 5.0, 2.0, 8.0], 2).unwrap(), |x| *x).unwrap();
    round_trip(&est);
}

#[test]
fn plans_and_requests_round_trip() {
    for class in [
        PlanClass::Singleton,
        PlanClass::KMeans { k: 3, d: 2 },
        PlanClass::Regression {
            w_bound: 2.0,
            d: 3,
            moment_sum: 1.5,
            loss: LossFunction::Huber { delta: 1.0 },
        },
    ] {
        let req = PlanRequest {
            epsilon: 0.5,
            delta: 0.05,
            p: 1.5,
            v_p: 2.0,
            class,
        };
        round_trip(&req);
        let p: Plan = plan(&req).unwrap();
        round_trip(&p);
    }
}

#[test]
fn distribution_specs_round_trip_and_reject_unknown_keys() {
    for spec in [
        DistributionSpec::gaussian(1.0, 2.0),
        DistributionSpec::symmetric_pareto(1.8, 1.0, 0.5),
        DistributionSpec::student_t(3.0, 0.0, 1.0),
    ] {
        round_trip(&spec);
    }
    let bad = r#"{"kind":"gaussian","mean":0.0,"sd":1.0,"dim":1,"extra":3}"#;
    assert!(serde_json::from_str::<DistributionSpec>(bad).is_err());
}
