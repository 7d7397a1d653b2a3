use proptest::prelude::*;
use texmat::geometry::*;
use texmat::grid::Grid;
use texmat::material::{MaterialSample, MaterialSet};

const UV: usize = 128;
const VIEW: usize = 64;

/// Low-frequency atlas, periodic in u so the sphere seam is continuous.
fn smooth_atlas(w: usize, h: usize) -> MaterialSet {
    MaterialSet::from_fn(w, h, |x, y| {
        let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
        let s = |f: f64, p: f64| 0.5 + 0.15 * (std::f64::consts::TAU * f + p).sin();
        MaterialSample {
            albedo: [s(u, 0.0), s(v, 1.0), s(u + v, 2.0)],
            roughness: s(u, 0.3),
            metallic: s(0.5 * v, 0.7),
            bump: [s(u, 1.3), s(v, 2.3), 0.9],
        }
    })
}

fn sphere() -> Mesh {
    uv_sphere(64, 32)
}

fn front_plane_camera() -> Camera {
    Camera::new(Vec3::new(0.0, 0.0, 2.0), Vec3::zeros(), Vec3::y(), 45.0, VIEW, VIEW).unwrap()
}

#[test]
fn front_view_of_plane_knows_every_texel() {
    let m = plane(Vec3::zeros(), Vec3::z(), 1.0, 4);
    let surf = compute_ccm_uv(&m, 32, 32);
    let g = rasterize_gbuffer(&m, &front_plane_camera());
    let view = MaterialSet::filled(VIEW, VIEW, MaterialSample::uniform(0.3));
    let mut bake = BakeState::new(surf);
    bake_view_to_uv(&view, &g, &mut bake).unwrap();
    assert_eq!(bake.known_fraction(), 1.0);
    for i in 0..32 * 32 {
        if bake.surface.occupancy[i] {
            assert!(bake.weight[i] > 0.9, "{}", bake.weight[i]);
            assert!(bake.materials.get_index(i).to_channels().iter().all(|c| (c - 0.3).abs() < 1e-12));
        }
    }
}

#[test]
fn weaker_second_view_leaves_bake_unchanged() {
    let m = plane(Vec3::zeros(), Vec3::z(), 1.0, 4);
    let mut bake = BakeState::new(compute_ccm_uv(&m, 32, 32));
    let g = rasterize_gbuffer(&m, &front_plane_camera());
    bake_view_to_uv(&MaterialSet::filled(VIEW, VIEW, MaterialSample::uniform(0.3)), &g, &mut bake).unwrap();
    let before = bake.clone();
    let oblique = Camera::new(Vec3::new(1.6, 0.0, 1.2), Vec3::zeros(), Vec3::y(), 45.0, VIEW, VIEW).unwrap();
    let g2 = rasterize_gbuffer(&m, &oblique);
    assert!(g2.covered_count() > 0);
    bake_view_to_uv(&MaterialSet::filled(VIEW, VIEW, MaterialSample::uniform(0.9)), &g2, &mut bake).unwrap();
    assert_eq!(before.weight, bake.weight);
    assert_eq!(before.materials, bake.materials);
}

#[test]
fn six_ring_views_cover_most_of_the_sphere() {
    let m = sphere();
    let atlas = smooth_atlas(UV, UV);
    let surf = compute_ccm_uv(&m, UV, UV);
    let occ = surf.occupancy.clone();
    let mut bake = BakeState::new(surf);
    for cam in camera_ring(6, VIEW).unwrap() {
        let g = rasterize_gbuffer(&m, &cam);
        bake_view_to_uv(&sample_atlas(&atlas, &occ, &g), &g, &mut bake).unwrap();
    }
    assert!(bake.known_fraction() > 0.8, "{}", bake.known_fraction());
    let filled = pullpush_fill(&bake, &occ);
    for i in 0..UV * UV {
        if bake.known[i] {
            assert_eq!(filled.get_index(i), bake.materials.get_index(i));
        } else if !occ[i] {
            assert_eq!(filled.get_index(i).to_channels(), [0.0; 8]);
        }
    }
}

#[test]
fn single_view_round_trip_reproduces_view() {
    let m = sphere();
    let atlas = smooth_atlas(UV, UV);
    let surf = compute_ccm_uv(&m, UV, UV);
    let occ = surf.occupancy.clone();
    let cam = camera_ring(6, VIEW).unwrap()[0];
    let g = rasterize_gbuffer(&m, &cam);
    let view = sample_atlas(&atlas, &occ, &g);
    let mut bake = BakeState::new(surf);
    bake_view_to_uv(&view, &g, &mut bake).unwrap();
    let (back, known) = project_known(&bake, &g);
    let (mut err, mut n) = (0.0, 0usize);
    for i in 0..VIEW * VIEW {
        if g.coverage[i] {
            assert!(known[i]);
            let (a, b) = (view.get_index(i).to_channels(), back.get_index(i).to_channels());
            for k in 0..8 {
                err += (a[k] - b[k]).abs();
                n += 1;
            }
        } else {
            assert!(!known[i]);
        }
    }
    let mae = err / n as f64;
    assert!(mae <= 2.0 / 255.0, "mae {mae}");
}

#[test]
fn bake_in_one_view_reprojects_into_another() {
    let m = sphere();
    let atlas = smooth_atlas(UV, UV);
    let surf = compute_ccm_uv(&m, UV, UV);
    let occ = surf.occupancy.clone();
    let cams = camera_ring(6, VIEW).unwrap();
    let (ga, gb) = (rasterize_gbuffer(&m, &cams[0]), rasterize_gbuffer(&m, &cams[1]));
    let mut bake = BakeState::new(surf);
    bake_view_to_uv(&sample_atlas(&atlas, &occ, &ga), &ga, &mut bake).unwrap();
    let (proj, known) = project_known(&bake, &gb);
    let truth = sample_atlas(&atlas, &occ, &gb);
    let mut checked = 0;
    for i in 0..VIEW * VIEW {
        if !known[i] {
            continue;
        }
        assert!(gb.coverage[i]);
        // only surface seen reasonably head-on from A, away from the rim of the known region
        let (t0, t1) = (proj.get_index(i).to_channels(), truth.get_index(i).to_channels());
        let uv = gb.uv[i];
        let (tx, ty) = texmat::grid::uv_to_texel(uv, UV, UV);
        let interior = (tx.saturating_sub(1)..=(tx + 1).min(UV - 1))
            .all(|x| (ty.saturating_sub(1)..=(ty + 1).min(UV - 1)).all(|y| bake.weight[(x, y)] >= 0.5));
        if interior {
            for k in 0..8 {
                assert!((t0[k] - t1[k]).abs() <= 1.0 / 255.0, "pixel {i} ch {k}: {} vs {}", t0[k], t1[k]);
            }
            checked += 1;
        }
    }
    assert!(checked > 200, "{checked}");
}

#[test]
fn empty_bake_projects_nothing() {
    let m = sphere();
    let bake = BakeState::new(compute_ccm_uv(&m, 32, 32));
    let g = rasterize_gbuffer(&m, &camera_ring(6, VIEW).unwrap()[2]);
    let (mats, known) = project_known(&bake, &g);
    assert!(known.iter().all(|&k| !k));
    assert_eq!(mats.get_index(0), MaterialSample::uniform(0.5));
}

#[test]
fn fully_baked_projects_coverage() {
    let m = sphere();
    let atlas = smooth_atlas(32, 32);
    let bake = BakeState::from_atlas(compute_ccm_uv(&m, 32, 32), &atlas).unwrap();
    for cam in camera_ring(10, VIEW).unwrap() {
        let g = rasterize_gbuffer(&m, &cam);
        let (_, known) = project_known(&bake, &g);
        assert_eq!(known, g.coverage);
    }
}

fn channel_grid(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Grid<[f64; 8]> {
    Grid::from_fn(w, h, |x, y| [f(x, y); 8])
}

#[test]
fn pullpush_without_holes_is_identity() {
    let v = channel_grid(16, 12, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0);
    let out = pullpush(&v, &Grid::filled(16, 12, true)).unwrap();
    assert_eq!(out, v);
}

#[test]
fn pullpush_single_hole_in_uniform_field() {
    let v = channel_grid(9, 9, |_, _| 0.37);
    let mut known = Grid::filled(9, 9, true);
    known[(4, 4)] = false;
    let mut holed = v.clone();
    holed[(4, 4)] = [0.0; 8];
    let out = pullpush(&holed, &known).unwrap();
    for c in out[(4, 4)] {
        assert!((c - 0.37).abs() < 1.0 / 255.0);
    }
}

#[test]
fn pullpush_checker_hole_bounded_by_boundary() {
    let v = channel_grid(16, 16, |x, y| if (x + y) % 2 == 0 { 0.2 } else { 0.8 });
    let mut known = Grid::filled(16, 16, true);
    for y in 6..10 {
        for x in 6..10 {
            known[(x, y)] = false;
        }
    }
    let out = pullpush(&v, &known).unwrap();
    for y in 6..10 {
        for x in 6..10 {
            for c in out[(x, y)] {
                assert!((0.2 - 1e-12..=0.8 + 1e-12).contains(&c), "{c}");
            }
        }
    }
}

#[test]
fn pullpush_fill_with_nothing_known_is_mid_gray() {
    let m = sphere();
    let surf = compute_ccm_uv(&m, 16, 16);
    let occ = surf.occupancy.clone();
    let out = pullpush_fill(&BakeState::new(surf), &occ);
    for i in 0..256 {
        let expect = if occ[i] { 0.5 } else { 0.0 };
        assert_eq!(out.get_index(i).to_channels(), [expect; 8]);
    }
}

#[test]
fn stacked_quads_nearer_wins_along_every_ray() {
    let near = plane(Vec3::new(0.0, 0.0, 0.2), Vec3::z(), 0.5, 2);
    let far = plane(Vec3::new(0.0, 0.0, -0.2), Vec3::z(), 0.9, 2);
    let mut both = far.clone();
    let off = both.positions.len();
    both.positions.extend(&near.positions);
    both.normals.extend(&near.normals);
    both.uvs.extend(&near.uvs);
    both.triangles.extend(near.triangles.iter().map(|t| Triangle {
        pos: t.pos.map(|i| i + off),
        nrm: t.nrm.map(|i| i + off),
        uv: t.uv.map(|i| i + off),
    }));
    let g_near = rasterize_gbuffer(&near, &front_plane_camera());
    let g = rasterize_gbuffer(&both, &front_plane_camera());
    for i in 0..VIEW * VIEW {
        if g_near.coverage[i] {
            assert!((g.position[i].z - 0.2).abs() < 1e-9);
        }
    }
}

fn jacobian_footprint(m: &Mesh, w: usize, h: usize) -> f64 {
    let mut worst = 0.0f64;
    for t in &m.triangles {
        let p = t.pos.map(|i| m.positions[i]);
        let uv = t.uv.map(|i| m.uvs[i]);
        let (du1, dv1) = ((uv[1][0] - uv[0][0]) * w as f64, (uv[1][1] - uv[0][1]) * h as f64);
        let (du2, dv2) = ((uv[2][0] - uv[0][0]) * w as f64, (uv[2][1] - uv[0][1]) * h as f64);
        let det = du1 * dv2 - du2 * dv1;
        if det.abs() < 1e-12 {
            continue;
        }
        let (e1, e2) = (p[1] - p[0], p[2] - p[0]);
        let dpdx = (e1 * dv2 - e2 * dv1) / det;
        let dpdy = (e2 * du1 - e1 * du2) / det;
        worst = worst.max(dpdx.norm()).max(dpdy.norm());
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bake_weights_do_not_depend_on_view_order(seed in 0u64..1000) {
        let m = uv_sphere(24, 12);
        let surf = compute_ccm_uv(&m, 48, 48);
        let occ = surf.occupancy.clone();
        let atlas = smooth_atlas(48, 48);
        let cams = camera_ring(6, 32).unwrap();
        let mut order: Vec<usize> = (0..6).collect();
        let mut s = seed;
        for i in (1..6).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let run = |ord: &[usize]| {
            let mut b = BakeState::new(surf.clone());
            for &k in ord {
                let g = rasterize_gbuffer(&m, &cams[k]);
                bake_view_to_uv(&sample_atlas(&atlas, &occ, &g), &g, &mut b).unwrap();
            }
            b
        };
        let a = run(&[0, 1, 2, 3, 4, 5]);
        let b = run(&order);
        prop_assert_eq!(a.weight, b.weight);
        prop_assert_eq!(a.known, b.known);
    }

    #[test]
    fn cube_ccm_is_continuous_within_faces(res in 24usize..96) {
        let m = cube(2);
        let s = compute_ccm_uv(&m, res, res);
        let bound = 2.0 * jacobian_footprint(&m, res, res) + 1e-9;
        // box atlas charts are the 3x2 cells
        let chart = |x: usize, y: usize| (x * 3 / res, y * 2 / res);
        for y in 0..res {
            for x in 0..res {
                if !s.occupancy[(x, y)] { continue; }
                for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                    if nx >= res || ny >= res || !s.occupancy[(nx, ny)] { continue; }
                    let (a, b) = (s.ccm[(x, y)], s.ccm[(nx, ny)]);
                    if chart(x, y) == chart(nx, ny) {
                        prop_assert!((a - b).norm() <= bound, "{:?} {:?} {}", a, b, bound);
                    }
                }
            }
        }
    }

    #[test]
    fn rasterized_normals_are_unit_and_sentinels_hold(az in 0.0f64..360.0, el in -60.0f64..60.0) {
        let (a, e) = (az.to_radians(), el.to_radians());
        let pos = Vec3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin()) * 2.5;
        let cam = Camera::new(pos, Vec3::zeros(), Vec3::z(), 45.0, 24, 24).unwrap();
        let g = rasterize_gbuffer(&torus(24, 12), &cam);
        for i in 0..24 * 24 {
            if g.coverage[i] {
                prop_assert!((g.normal[i].norm() - 1.0).abs() < 1e-9);
                prop_assert!(g.depth[i].is_finite());
            } else {
                prop_assert_eq!(g.depth[i], f64::INFINITY);
                prop_assert_eq!(g.normal[i], Vec3::zeros());
            }
        }
    }
}
