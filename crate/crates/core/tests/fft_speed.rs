// quick throughput probe; run with --ignored
use eddylab::fft::Fft2;
use num_complex::Complex64;
use std::time::Instant;

#[test]
#[ignore]
fn throughput() {
    for n in [256usize, 512, 1024, 2048] {
        let mut fft = Fft2::new(n);
        let f = vec![1.0f64; n * n];
        let mut c = vec![Complex64::default(); fft.spectral_len()];
        let mut back = vec![0.0f64; n * n];
        fft.forward(&f, &mut c);
        let reps = if n <= 512 { 40 } else { 10 };
        let t0 = Instant::now();
        for _ in 0..reps {
            fft.forward(&f, &mut c);
            fft.inverse(&c, &mut back);
        }
        let per = t0.elapsed().as_secs_f64() / (2 * reps) as f64;
        println!("n={n}: {:.2} ms per transform", per * 1e3);
    }
}
