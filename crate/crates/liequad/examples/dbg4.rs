use liequad::harness::load_case;
use liequad::lie::{structure_constants, abelian_ideal_le2, is_solvable};
use liequad::rectify::{build_chart, split_gamma, ChartOptions, Realization, WorkBox};
use liequad::integrate::Trace;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

fn main() {
    let case = load_case(Path::new("crates/liequad/cases/generated_s33_d4.json")).unwrap();
    let l = case.presentation().unwrap();
    let t = Instant::now();
    let sc = structure_constants(&l).unwrap();
    println!("constants: {:?}", t.elapsed());
    let t = Instant::now();
    println!("solvable: {:?} ({:?})", is_solvable(&sc).solvable, t.elapsed());
    let t = Instant::now();
    let ideal = abelian_ideal_le2(&sc).unwrap();
    println!("ideal dim {}: {:?}", ideal.subspace.dim(), t.elapsed());
    let real = Realization::from_presentation(&l, sc);
    let trace = Trace::new();
    let p = case.initial_states[0].clone();
    let t = Instant::now();
    let chart = build_chart(&real, &ideal.subspace, &p, &WorkBox::new(p.clone(), 2.0), &trace, &ChartOptions::default()).unwrap();
    println!("chart: {:?}", t.elapsed());
    for (i, (lev, strat, _)) in chart.slot_dump().iter().enumerate() {
        println!("  slot {}: level {} {}", i, lev, strat);
    }
    let mut gamma = vec![liequad::linalg::rat_i64(0); 4];
    gamma[2] = liequad::linalg::rat_i64(1);
    let t = Instant::now();
    let split = split_gamma(&real, &ideal.subspace, &gamma, &Arc::new(chart)).unwrap();
    println!("split: {:?} case {:?} base dim {}", t.elapsed(), split.case, split.base_fields.len());
    for bf in &split.base_fields {
        println!("  base field symbolic: {}", bf.as_symbolic().is_some());
    }
}
