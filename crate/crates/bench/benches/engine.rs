use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use mesoscribe_bench::{catalog, fill_scene, random_spheres};
use mesoscribe_core::geometry::{catmull_rom, SpatialHash, Vec3};

fn fill(c: &mut Criterion) {
    let cat = catalog();
    let mut g = c.benchmark_group("fill");
    for n in [38u32, 150, 300] {
        g.bench_with_input(BenchmarkId::new("box_r5", n), &n, |b, &n| {
            b.iter_batched(
                || fill_scene(&cat, 42, n, true).unwrap(),
                |(mut scene, id)| black_box(scene.apply_rule(&cat, id).unwrap()),
                criterion::BatchSize::SmallInput,
            )
        });
    }
    g.finish();
}

fn spatial_hash(c: &mut Criterion) {
    let mut g = c.benchmark_group("spatial_hash");
    for n in [500usize, 5000] {
        let spheres = random_spheres(7, n, 100.0 * (n as f64 / 500.0).cbrt(), 4.0);
        g.bench_with_input(BenchmarkId::new("insert_and_pairs", n), &spheres, |b, spheres| {
            b.iter(|| {
                let mut h = SpatialHash::for_max_radius(4.0);
                for (i, (p, r)) in spheres.iter().enumerate() {
                    h.insert(i as u64, *p, *r);
                }
                black_box(h.overlapping_pairs().len())
            })
        });
    }
    g.finish();
}

fn curve(c: &mut Criterion) {
    let controls: Vec<Vec3> = (0..6).map(|i| Vec3::new(i as f64 * 3.0, (i as f64).sin() * 4.0, i as f64 * 0.5)).collect();
    c.bench_function("catmull_rom/build_table", |b| b.iter(|| black_box(catmull_rom(controls.clone()).unwrap())));
    let curve = catmull_rom(controls).unwrap();
    c.bench_function("catmull_rom/resample_64", |b| b.iter(|| black_box(curve.resample_by_arclength(64).unwrap())));
}

criterion_group!(benches, fill, spatial_hash, curve);
criterion_main!(benches);
