// Distances, principal angles and geodesics between random subspaces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssrlab::grassmann::{principal_angles, projection_distance, random_subspace, Geodesic};

pub fn run() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = random_subspace(&mut rng, 16, 3)?;
    let b = random_subspace(&mut rng, 16, 3)?;

    let theta = principal_angles(&a, &b)?;
    println!("principal angles: {:.4?}", theta.angles());
    println!("projection distance: {:.6}", projection_distance(&a, &b)?);
    println!("sqrt(sum sin^2):     {:.6}", theta.chordal_norm());

    let path = Geodesic::new(&a, &b)?;
    println!("geodesic length: {:.6}", path.length());
    for s in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let p = path.at(s)?;
        println!(
            "  s={s:.2}  d(a, .)={:.4}  d(., b)={:.4}",
            projection_distance(&a, &p)?,
            projection_distance(&p, &b)?
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run().expect("grassmann tour");
}
