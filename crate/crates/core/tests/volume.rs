use oneflow::ad::{Eager, Tensor};
use oneflow::boundary::{region_area_mc, BBox};
use oneflow::data::Standardizer;
use oneflow::eval::{BoundingRegion, Method};
use oneflow::flow::{FlowConfig, FlowModel, FlowVariant};
use oneflow::objective::{cost_const_det, cost_general, BallSampler};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian_batch(n: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..2 * n).map(|_| StandardNormal.sample(&mut rng)).collect();
    Tensor::matrix(n, 2, data).unwrap()
}

fn model(variant: FlowVariant, seed: u64) -> FlowModel {
    let mut m = FlowModel::init(FlowConfig::new(2, variant).with_blocks(2, 2).with_hidden_dim(8).with_seed(seed)).unwrap();
    m.perturb(0.2, seed + 100);
    m
}

// Monte Carlo membership area is an independent estimate of exp(cost).
#[test]
fn general_cost_matches_membership_area() {
    let x = gaussian_batch(256, 1);
    for (variant, method) in [(FlowVariant::General, Method::General), (FlowVariant::ConstDet, Method::ConstDet)] {
        let m = model(variant, 7);
        let flow = m.bind(&mut Eager);
        let sampler = BallSampler::new(2, 20_000, 3).unwrap();
        let cost = cost_general(&mut Eager, &flow, &x, 0.05, &sampler).unwrap();
        let radius = cost.radius_estimate.value.item();
        let region = BoundingRegion::new(m.clone(), radius, 0.05, Standardizer::identity(2), method).unwrap();
        let area = region_area_mc(&region, &BBox::centered(12.0).unwrap(), 400_000, 5).unwrap();
        let predicted = cost.total.item().exp();
        assert!(((predicted - area) / area).abs() < 0.05, "{variant:?}: {predicted} vs {area}");
        if variant == FlowVariant::ConstDet {
            let exact = cost_const_det(&mut Eager, &flow, &x, 0.05).unwrap().total.item().exp();
            assert!(((exact - area) / area).abs() < 0.05);
        }
    }
}
