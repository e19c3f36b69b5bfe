use liequad::expr::CoordinateSystem;
use liequad::vfield::VectorField;
use liequad::lie::LieAlgebraPresentation;
use liequad::integrate::flow::{integrate_quadratures, uniform_grid, FlowOptions};

fn main() {
    let c = CoordinateSystem::new(vec!["x", "y"]).unwrap();
    let x1 = VectorField::parse("X1", &["1", "0"], &c).unwrap();
    let x2 = VectorField::parse("X2", &["y", "0"], &c).unwrap();
    let j = VectorField::parse("J", &["x*y", "1 + y^2"], &c).unwrap();
    let l = LieAlgebraPresentation::new(vec![x1, x2, j]).unwrap();
    let grid = uniform_grid(0.0, 1.2, 6);
    match integrate_quadratures(&l, "J", &[1.0, 0.0], &grid, &FlowOptions::default()) {
        Ok(traj) => {
            for (t, s) in traj.times.iter().zip(&traj.states) {
                println!("t={:.2} x={:.8} ({:.8}) y={:.8} ({:.8})", t, s[0], 1.0/t.cos(), s[1], t.tan());
            }
        }
        Err(e) => println!("ERROR: {}", e),
    }
}
