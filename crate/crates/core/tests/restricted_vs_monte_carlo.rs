use potflow::geom::{ConvexCell, NeighborTag, Vec3};
use potflow::laguerre::{build_cell, site_grid, CellScope};
use potflow::oracle::{mc_centroid, mc_planar_area, mc_sphere_patch_area, mc_volume};
use potflow::restricted::{evaluate_cell, Sphere};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Config {
    positions: Vec<Vec3>,
    psi: Vec<f64>,
    cell: ConvexCell,
}

/// Site 0 near the middle of the unit box with random neighbors; its
/// sphere is large enough to be clipped by several of them.
fn random_config(seed: u64) -> Config {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(5..25);
    let mut positions = vec![Vec3::new(
        rng.random_range(0.3..0.7),
        rng.random_range(0.3..0.7),
        rng.random_range(0.3..0.7),
    )];
    for _ in 1..n {
        positions.push(Vec3::new(rng.random(), rng.random(), rng.random()));
    }
    let mut psi: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.02)).collect();
    psi[0] = rng.random_range(0.01..0.12);
    let domain = ConvexCell::axis_box(Vec3::ZERO, Vec3::ONE);
    let grid = site_grid(&positions, &domain);
    let psi_max = psi.iter().copied().fold(0.0, f64::max);
    let cell = build_cell(0, &grid, &psi, psi_max, &domain, CellScope::Full).expect("site 0 cell");
    Config { positions, psi, cell }
}

fn power_owner(x: Vec3, c: &Config) -> bool {
    let d0 = x.distance_squared(c.positions[0]) - c.psi[0];
    c.positions.iter().zip(&c.psi).skip(1).all(|(p, w)| x.distance_squared(*p) - w > d0)
}

#[test]
fn restricted_cells_match_monte_carlo() {
    let samples = 2_000_000;
    let mut worst = 0.0f64;
    for seed in 0..12 {
        let c = random_config(seed);
        let sphere = Sphere::new(c.positions[0], c.psi[0]);
        let r = evaluate_cell(Some(&c.cell), &sphere).unwrap();
        let in_domain = |x: Vec3| x.cmpge(Vec3::ZERO).all() && x.cmple(Vec3::ONE).all();
        let inside = |x: Vec3| sphere.contains(x) && in_domain(x) && power_owner(x, &c);
        let rad = Vec3::splat(sphere.radius());
        let (lo, hi) = (sphere.center - rad, sphere.center + rad);
        let vol = mc_volume(inside, lo, hi, samples, seed);
        let area = mc_sphere_patch_area(&sphere, |x| in_domain(x) && power_owner(x, &c), samples, seed);
        let (cen, cen_se) = mc_centroid(inside, lo, hi, samples, seed);
        let zc = ((r.centroid - cen).abs() / cen_se).max_element();
        let zv = vol.z_score(r.volume);
        let za = area.z_score(r.free_surface_area);
        let mut zf = 0.0f64;
        for f in &r.facets {
            let n = f.shape.plane.normal;
            // Every constraint except the one that defines this facet.
            let on_facet = |x: Vec3| {
                let d0 = x.distance_squared(c.positions[0]) - c.psi[0];
                let faces = potflow::geom::box_halfspaces(Vec3::ZERO, Vec3::ONE);
                sphere.contains(x)
                    && faces
                        .iter()
                        .enumerate()
                        .all(|(k, h)| f.tag == NeighborTag::DomainFace(k) || h.signed_distance(x) <= 0.0)
                    && c.positions.iter().zip(&c.psi).enumerate().skip(1).all(|(j, (p, w))| {
                        NeighborTag::Site(j) == f.tag || x.distance_squared(*p) - w > d0
                    })
            };
            let foot = f.shape.plane.project(sphere.center);
            let est = mc_planar_area(foot, n, sphere.radius(), on_facet, samples / 4, seed);
            zf = zf.max(est.z_score(f.area));
        }
        println!(
            "seed {seed}: status {:?} facets {} vol {:.6e} z {:.2}  K {:.6e} z {:.2}  centroid z {:.2}  facet z {:.2}",
            r.status,
            r.facets.len(),
            r.volume,
            zv,
            r.free_surface_area,
            za,
            zc,
            zf
        );
        worst = worst.max(zv).max(za).max(zc).max(zf);
    }
    assert!(worst < 5.0, "worst z {worst}");
}
