use super::*;
use crate::data::Standardizer;
use crate::eval::Method;
use crate::flow::{FlowConfig, FlowModel, FlowVariant};

fn warped_region() -> BoundingRegion {
    let mut model = FlowModel::init(
        FlowConfig::new(2, FlowVariant::ConstDet).with_blocks(2, 2).with_hidden_dim(8).with_seed(3),
    )
    .unwrap();
    model.perturb(0.2, 11);
    let st = Standardizer { mean: vec![1.0, -2.0], std: vec![0.5, 3.0], clamped: vec![] };
    BoundingRegion::new(model, 1.3, 0.05, st, Method::ConstDet).unwrap()
}

#[test]
fn identity_boundary_is_unit_circle() {
    let region = BoundingRegion::identity(2, 1.0, 0.05).unwrap();
    let poly = boundary_polyline_2d(&region, 64).unwrap();
    assert_eq!(poly.len(), 64);
    for p in &poly {
        assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-9);
    }
    // Counter-clockwise from angle 0.
    assert!((poly[0][0] - 1.0).abs() < 1e-12 && poly[16][1] > 0.999);
}

#[test]
fn boundary_vertices_score_at_radius() {
    let region = warped_region();
    let poly = boundary_polyline_2d(&region, 256).unwrap();
    let x = Tensor::from_rows(&poly.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap();
    for s in region.score(&x).unwrap() {
        assert!((s - region.radius).abs() < 1e-6);
    }
}

#[test]
fn boundary_rejects_bad_inputs() {
    let region = BoundingRegion::identity(2, 1.0, 0.05).unwrap();
    assert!(matches!(boundary_polyline_2d(&region, 15), Err(Error::Config(_))));
    let region3 = BoundingRegion::identity(3, 1.0, 0.05).unwrap();
    assert!(matches!(boundary_polyline_2d(&region3, 32), Err(Error::Config(_))));
    assert!(matches!(boundary_length(&[[0.0, 0.0], [1.0, 0.0]]), Err(Error::Geometry(_))));
}

#[test]
fn length_examples() {
    let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    assert!((boundary_length(&square).unwrap() - 4.0).abs() < 1e-15);
    let repeated = [[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    assert!((boundary_length(&repeated).unwrap() - 4.0).abs() < 1e-15);
    for k in [3usize, 16, 1000] {
        let gon: Vec<[f64; 2]> = (0..k)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / k as f64;
                [t.cos(), t.sin()]
            })
            .collect();
        let expected = 2.0 * k as f64 * (PI / k as f64).sin();
        assert!((boundary_length(&gon).unwrap() - expected).abs() < 1e-12);
    }
}

#[test]
fn disk_area_within_three_sigma() {
    let region = BoundingRegion::identity(2, 1.0, 0.05).unwrap();
    let bbox = BBox::centered(2.0).unwrap();
    let n = 1_000_000;
    let area = region_area_mc(&region, &bbox, n, 1).unwrap();
    let p = PI / 16.0;
    let sigma = 16.0 * (p * (1.0 - p) / n as f64).sqrt();
    assert!((area - PI).abs() < 3.0 * sigma, "area {area}, sigma {sigma}");
    assert!((area - PI).abs() < 0.02);
}

#[test]
fn area_edge_cases() {
    let bbox = BBox::centered(2.0).unwrap();
    let empty = BoundingRegion::identity(2, 0.0, 0.05).unwrap();
    assert_eq!(region_area_mc(&empty, &bbox, 10_000, 0).unwrap(), 0.0);
    let region = BoundingRegion::identity(2, 1.0, 0.05).unwrap();
    assert_eq!(
        region_area_mc(&region, &bbox, 5000, 7).unwrap(),
        region_area_mc(&region, &bbox, 5000, 7).unwrap()
    );
    assert!(BBox::new([0.0, 0.0], [1.0, 0.0]).is_err());
    assert!(matches!(
        region_area_mc(&region, &BBox { min: [0.0; 2], max: [0.0; 2] }, 10, 0),
        Err(Error::Geometry(_))
    ));
}

#[test]
fn area_is_stable_under_bbox_enlargement() {
    let region = warped_region();
    let n = 200_000;
    let small = BBox::centered(12.0).unwrap();
    let big = BBox::centered(24.0).unwrap();
    let a = region_area_mc(&region, &small, n, 2).unwrap();
    let b = region_area_mc(&region, &big, n, 3).unwrap();
    let sigma = |bb: &BBox, a: f64| {
        let p = a / bb.area();
        bb.area() * (p * (1.0 - p) / n as f64).sqrt()
    };
    let tol = 3.0 * sigma(&small, a).hypot(sigma(&big, b));
    assert!(a > 0.0 && (a - b).abs() < tol, "{a} vs {b} (tol {tol})");
}

#[test]
fn bbox_around_data() {
    let x = Tensor::matrix(2, 2, vec![0.0, 0.0, 2.0, 4.0]).unwrap();
    let b = BBox::around(&x, 0.5).unwrap();
    assert_eq!(b.min, [-1.0, -2.0]);
    assert_eq!(b.max, [3.0, 6.0]);
}

#[test]
fn exports() {
    let region = BoundingRegion::identity(2, 1.0, 0.05).unwrap();
    let poly = boundary_polyline_2d(&region, 16).unwrap();
    let mut buf = Vec::new();
    write_polyline_csv(&poly, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 17);
    assert!(text.starts_with("x,y\n1.0,0.0\n"));
    let svg = polyline_svg(&poly, 200).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("Z\""));
}
