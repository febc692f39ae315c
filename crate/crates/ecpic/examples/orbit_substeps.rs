//! Face-stopped orbit segmentation of a magnetized particle: a fast particle
//! crosses several cells in one field step, and every segment ends exactly on
//! a mesh face.

use ecpic::grid::{FaceField, Mesh1D};
use ecpic::particles::{orbit_average, ImposedB, Particle, PushConfig};

fn main() {
    let mesh = Mesh1D::new(16, 2.0).unwrap();
    let e = FaceField::from_vec((0..16).map(|i| 0.3 * (i as f64 * 0.7).sin()).collect());
    let b = ImposedB([0.0, 0.8, 0.2]);
    let p = Particle { x: 0.26, v: [2.7, 0.4, -0.1], q: -1.0, m: 0.5, species: 0 };
    let dt = 0.2;

    let (end, records) = orbit_average(&p, &e, &b, dt, &mesh, &PushConfig::default()).unwrap();

    println!("dx = {}, faces at multiples of it; dt = {dt}\n", mesh.dx());
    println!("{:>3} {:>12} {:>12} {:>12} {:>12}", "nu", "dtau", "x_mid", "vx_mid", "x_end");
    let mut x = p.x;
    for (k, r) in records.iter().enumerate() {
        x = mesh.wrap_position(x + r.dx_seg());
        println!("{k:3} {:12.6} {:12.6} {:12.6} {:12.6}", r.dtau, r.x_mid, r.v_mid[0], x);
    }
    let total: f64 = records.iter().map(|r| r.dtau).sum();
    println!("\nsum of dtau = {total} (= dt to round-off)");
    println!("final particle: x = {:.6}, v = {:?}", end.x, end.v);
    println!(
        "speed change from magnetic rotation alone would be zero; with E work: |v| {:.6} -> {:.6}",
        (p.v[0].powi(2) + p.v[1].powi(2) + p.v[2].powi(2)).sqrt(),
        (end.v[0].powi(2) + end.v[1].powi(2) + end.v[2].powi(2)).sqrt()
    );
}
