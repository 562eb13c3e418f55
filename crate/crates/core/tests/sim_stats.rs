use eittrack::mesh::generate_disk_mesh;
use eittrack::sim::{add_noise, random_walk, StepRule};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn walk_visit_frequencies_follow_degree() {
    let mesh = generate_disk_mesh(40, 1).unwrap();
    let nbrs = mesh.element_neighbors();
    let steps = 100_000;
    let walk = random_walk(
        &mesh,
        steps,
        StepRule::AlwaysMove,
        &mut ChaCha8Rng::seed_from_u64(17),
    )
    .unwrap();
    let mut visits = vec![0usize; mesh.element_count()];
    for &e in &walk.elements {
        visits[e] += 1;
    }
    let total_degree: usize = nbrs.iter().map(Vec::len).sum();
    let tv: f64 = visits
        .iter()
        .zip(&nbrs)
        .map(|(&v, n)| (v as f64 / steps as f64 - n.len() as f64 / total_degree as f64).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv <= 0.02, "total variation {tv}");
}

#[test]
fn realized_snr_matches_request() {
    let v = DVector::from_vec(vec![
        0.3, -0.12, 0.05, 0.21, -0.4, 0.18, 0.02, -0.09, 0.33, -0.27, 0.11, 0.07,
    ]);
    let signal = v.norm_squared() / v.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let copies = 1_000_000;
    let mut noise_power = 0.0;
    for _ in 0..copies {
        noise_power += (add_noise(&v, 40.0, &mut rng) - &v).norm_squared();
    }
    noise_power /= (copies * v.len()) as f64;
    let snr = 10.0 * (signal / noise_power).log10();
    assert!((snr - 40.0).abs() <= 0.1, "realized SNR {snr}");
}
