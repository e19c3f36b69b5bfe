use liequad::harness::{case_to_string, generate_triangular_case};

fn main() {
    for (seed, d) in [(11u64, 2usize), (22, 3), (33, 4)] {
        let case = generate_triangular_case(seed, d);
        let path = format!("crates/liequad/cases/generated_s{}_d{}.json", seed, d);
        std::fs::write(&path, case_to_string(&case)).unwrap();
        println!("wrote {}", path);
    }
}
