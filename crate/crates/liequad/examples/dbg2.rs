use liequad::integrate::{quad::AutonomousFlow, Trace};

fn main() {
    let trace = Trace::new();
    let flow = AutonomousFlow::new(Box::new(|_x| Ok(1.0)), 0.0, 1e-10, trace).unwrap();
    // mimic the query pattern of a nested quadrature
    let queries = [0.0, 1.2, 0.6, 0.3, 0.25, 0.9, 1.19, 0.0077, 0.45];
    for &t in &queries {
        match flow.eval(t) {
            Ok(x) => println!("t={} -> {}", t, x),
            Err(e) => println!("t={} -> ERROR {}", t, e),
        }
    }
}
