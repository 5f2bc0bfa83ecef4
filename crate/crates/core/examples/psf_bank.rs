//! Generates a seeded PSF bank, rescales one kernel and writes both as text.

use turbulence_restore::sim::{format_psf, generate_psf_bank, resize_psf};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bank = generate_psf_bank(4, 15, 2019)?;
    for (i, p) in bank.iter().enumerate() {
        let (cx, cy) = p.centroid();
        let peak = p.kernel().iter().cloned().fold(0.0, f64::max);
        println!("psf {i}: {0}x{0} peak {peak:.4} centroid ({cx:+.3}, {cy:+.3})", p.size());
    }
    let wide = resize_psf(&bank[0], 1.5)?;
    println!("psf 0 at scale 1.5 -> {0}x{0}", wide.size());
    print!("{}", format_psf(&resize_psf(&bank[0], 0.35)?));
    Ok(())
}
