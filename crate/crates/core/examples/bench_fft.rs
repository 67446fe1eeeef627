use mrvf_core::physics::fft::Fft3;
use rustfft::num_complex::Complex;
use std::time::Instant;

fn main() {
    let dims = [128usize, 128, 384];
    let n = dims[0]*dims[1]*dims[2];
    let fft = Fft3::new(dims);
    let mut data: Vec<Complex<f64>> = (0..n).map(|i| Complex::new((i as f64*0.37).sin(), 0.0)).collect();
    // warm
    fft.forward(&mut data);
    fft.inverse(&mut data);
    let t = Instant::now();
    let reps = 5;
    for _ in 0..reps {
        fft.forward(&mut data);
        fft.inverse(&mut data);
    }
    let per = t.elapsed().as_secs_f64()/reps as f64;
    println!("fwd+inv pair: {per:.3} s -> est 1056 steps: {:.0} s", per*1056.0);
}
