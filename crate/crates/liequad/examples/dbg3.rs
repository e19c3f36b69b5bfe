use liequad::expr::CoordinateSystem;
use liequad::vfield::VectorField;
use liequad::lie::{structure_constants, abelian_ideal_le2, LieAlgebraPresentation};
use liequad::rectify::{build_chart, split_gamma, ChartOptions, Realization, WorkBox};
use liequad::integrate::Trace;
use std::sync::Arc;

fn main() {
    let c = CoordinateSystem::new(vec!["x", "y"]).unwrap();
    let x1 = VectorField::parse("X1", &["1", "0"], &c).unwrap();
    let x2 = VectorField::parse("X2", &["y", "0"], &c).unwrap();
    let j = VectorField::parse("J", &["x*y", "1 + y^2"], &c).unwrap();
    let l = LieAlgebraPresentation::new(vec![x1, x2, j]).unwrap();
    let sc = structure_constants(&l).unwrap();
    let ideal = abelian_ideal_le2(&sc).unwrap();
    println!("ideal: {:?}", ideal.subspace.rows());
    let real = Realization::from_presentation(&l, sc);
    let trace = Trace::new();
    let bx = WorkBox::new(vec![1.0, 0.0], 2.0);
    let chart = Arc::new(build_chart(&real, &ideal.subspace, &[1.0, 0.0], &bx, &trace, &ChartOptions::default()).unwrap());
    for (i, (lev, strat, desc)) in chart.slot_dump().iter().enumerate() {
        println!("slot {}: level {} strategy {} : {}", i, lev, strat, desc);
    }
    let gamma = vec![liequad::linalg::rat_i64(0), liequad::linalg::rat_i64(0), liequad::linalg::rat_i64(1)];
    let split = split_gamma(&real, &ideal.subspace, &gamma, &chart).unwrap();
    println!("case {:?} base fields: {:?}", split.case, split.base_fields);
    for bf in &split.base_fields {
        if let Some(f) = bf.as_symbolic() {
            println!("  symbolic: {}", f);
        } else {
            for b in [-0.5, 0.0, 0.3, 0.8] {
                println!("  numeric at {}: {:?}", b, bf.eval(&[b]));
            }
        }
    }
    println!("gamma base coeffs: {:?}", split.gamma_base_coeffs);
    for b in [0.0, 0.1, 0.25] {
        println!("base_gamma({}) = {:?}  f={:?} w={:?}", b, (split.base_gamma)(&[b]), (split.f.as_ref().unwrap())(&[b]), (split.w)(&[b]));
    }
}
