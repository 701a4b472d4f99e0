//! Timing probe for the exact bounded-Lipschitz transport solve at several
//! cloud sizes, used to size experiment defaults on one core.

use ergolab::measure::{bl_atomic, AtomicMeasure, MetricSpec};
use ergolab::rng::Stream;
use std::time::Instant;

fn cloud(n: usize, dim: usize, shift: f64, stream: &mut Stream) -> AtomicMeasure {
    let atoms: Vec<Vec<f64>> =
        (0..n).map(|_| (0..dim).map(|_| stream.normal() + shift).collect()).collect();
    AtomicMeasure::equal_weights(atoms).unwrap()
}

fn main() {
    let mut s = Stream::new(1, 0, "bench");
    for &n in &[100usize, 200, 300, 400] {
        let a = cloud(n, 8, 0.0, &mut s);
        let b = cloud(n, 8, 1.0, &mut s);
        let t0 = Instant::now();
        let sol = bl_atomic(&a, &b, &MetricSpec::Euclidean).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        println!("n = {n:4}  bl = {:.4}  time = {dt:.3}s", sol.distance);
    }
}
