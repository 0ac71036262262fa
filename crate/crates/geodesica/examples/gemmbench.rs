use ndarray::Array2;
fn main() {
    for &(m, k, n) in &[(1024usize, 128usize, 128usize), (2048, 128, 128), (1024, 4, 128), (128, 1024, 128)] {
        let a = Array2::<f64>::from_elem((m, k), 1.000001);
        let b = Array2::<f64>::from_elem((k, n), 0.999999);
        // warmup
        let mut c = a.dot(&b);
        let t0 = std::time::Instant::now();
        let reps = 50;
        for _ in 0..reps {
            c = a.dot(&b);
        }
        let dt = t0.elapsed().as_secs_f64();
        let flops = 2.0 * (m * k * n * reps) as f64;
        println!("{m}x{k}x{n}: {:.2} Gflop/s (sink {:.1})", flops / dt / 1e9, c[[0,0]]);
    }
}
