use isofree::numerics::GaussHermite;
fn main() {
    for n in [64usize, 128, 180, 200, 256] {
        let gh = GaussHermite::new(n);
        let w: f64 = gh.weights.iter().sum();
        let m2 = gh.expect(|z| z * z);
        let lc1 = gh.expect(|z| z.cosh().ln());
        let lc05 = gh.expect(|z| (0.5 * z).cosh().ln());
        println!("n={n}: sum w - 1 = {:+.3e}, m2-1 = {:+.3e}, lc1 err = {:+.3e}, lc05 err = {:+.3e}",
            w - 1.0, m2 - 1.0, lc1 - 0.3745672074914379741, lc05 - 0.11291200278749448);
    }
}
