use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use texmat::geometry::*;
use texmat::grid::Grid;
use texmat::material::{MaterialSample, MaterialSet, FLAT_BUMP};
use texmat::shading::brdf::eval_brdf_parts;
use texmat::shading::lighting::rig_violations;
use texmat::shading::*;

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    v.map(|c| c / n)
}

#[test]
fn flat_bump_returns_geometric_normal_exactly() {
    let n = unit([0.3, -0.2, 0.9]);
    let t = unit([0.9486832980505138, 0.0, -0.31622776601683794]);
    let b = unit([n[1] * t[2] - n[2] * t[1], n[2] * t[0] - n[0] * t[2], n[0] * t[1] - n[1] * t[0]]);
    let out = perturb_normal(n, FLAT_BUMP, t, b);
    assert_eq!(out.0, n);
}

#[test]
fn bump_toward_tangent_tilts_normal() {
    let out = perturb_normal([0.0, 0.0, 1.0], [1.0, 0.5, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
    let o = out.0;
    assert!(o[0] > 0.0 && o[2] < 1.0);
    // decoded (1, 0, 1) normalized
    assert!((o[0] - 0.5f64.sqrt()).abs() < 1e-12 && (o[2] - 0.5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn zero_length_bump_falls_back_to_geometric_normal() {
    let out = perturb_normal([0.0, 1.0, 0.0], [0.5, 0.5, 0.5], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
    assert_eq!(out.0, [0.0, 1.0, 0.0]);
}

#[test]
fn metal_has_no_diffuse() {
    let n = V3([0.0, 0.0, 1.0]);
    let (d, _) = eval_brdf_parts([0.8, 0.3, 0.1], 0.5, 1.0, &n, unit([0.2, 0.1, 1.0]), unit([-0.3, 0.2, 1.0]));
    assert_eq!(d, [0.0; 3]);
}

#[test]
fn white_rough_dielectric_at_normal_incidence() {
    let f = eval_brdf_f64([1.0; 3], 1.0, 0.0, [0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [0.0, 0.0, 1.0]);
    for c in f {
        assert!(c.is_finite() && c >= 1.0 / std::f64::consts::PI);
    }
}

#[test]
fn white_furnace_integral() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let e = hemisphere_albedo(
        |v, l| eval_brdf_f64([1.0; 3], 1.0, 0.0, [0.0, 0.0, 1.0], v, l),
        [0.0, 0.0, 1.0],
        100_000,
        &mut rng,
    );
    assert!((0.9..=1.05).contains(&e), "{e}");
}

#[test]
fn furnace_catches_a_sign_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // a BRDF whose specular lobe enters with the wrong sign
    let broken = |v: [f64; 3], l: [f64; 3]| {
        let (d, s) = eval_brdf_parts([1.0; 3], 1.0, 0.0, &V3([0.0, 0.0, 1.0]), v, l);
        [d[0] - s[0] - 0.1, d[1] - s[1] - 0.1, d[2] - s[2] - 0.1]
    };
    let e = hemisphere_albedo(broken, [0.0, 0.0, 1.0], 20_000, &mut rng);
    assert!(!(0.9..=1.05).contains(&e));
}

#[test]
fn none_rig_has_no_emitters() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = sample_lighting(LightCategory::None, &Vec3::x(), &mut rng);
    assert!(r.emitters().is_empty() && r.points.is_empty() && r.area.is_none());
}

#[test]
fn sampled_rigs_respect_ranges() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..10_000 {
        let cam = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let cat = LightCategory::ALL[i % 4];
        let rig = sample_lighting(cat, &cam, &mut rng);
        assert_eq!(rig.category, cat);
        assert!(rig_violations(&rig, &cam).is_empty(), "{:?}", rig_violations(&rig, &cam));
    }
}

#[test]
fn rig_sampling_is_deterministic_and_serializes() {
    for cat in LightCategory::ALL {
        let a = sample_lighting(cat, &Vec3::y(), &mut ChaCha8Rng::seed_from_u64(11));
        let b = sample_lighting(cat, &Vec3::y(), &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
        let back = LightingRig::from_text(&a.to_text()).unwrap();
        assert_eq!(back, a);
    }
    assert!(LightingRig::from_text("category=none\nextra=1").is_err());
    assert!(LightingRig::from_text("category=laser").is_err());
}

fn scene(res: usize) -> (Mesh, GBuffer) {
    let m = uv_sphere(48, 24);
    let cam = Camera::new(Vec3::new(0.0, -2.5, 0.4), Vec3::zeros(), Vec3::z(), 45.0, res, res).unwrap();
    let g = rasterize_gbuffer(&m, &cam);
    (m, g)
}

fn random_materials(w: usize, h: usize, seed: u64) -> MaterialSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MaterialSet::from_fn(w, h, |_, _| MaterialSample {
        albedo: [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)],
        roughness: rng.random_range(0.15..0.95),
        metallic: rng.random_range(0.05..0.95),
        bump: [rng.random_range(0.3..0.7), rng.random_range(0.3..0.7), rng.random_range(0.8..1.0)],
    })
}

fn rigs() -> Vec<LightingRig> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dir = Vec3::new(0.0, -1.0, 0.16);
    LightCategory::ALL.iter().map(|&c| sample_lighting(c, &dir, &mut rng)).collect()
}

#[test]
fn unlit_render_is_albedo_bit_exact() {
    let (_, g) = scene(32);
    let mats = random_materials(32, 32, 2);
    let img = render(&g, &mats, &LightingRig::none()).unwrap();
    for i in 0..32 * 32 {
        let expect = if g.coverage[i] { mats.albedo[i] } else { [0.0; 3] };
        assert_eq!(img[i], expect);
    }
}

#[test]
fn point_rig_without_lights_is_black() {
    let (_, g) = scene(24);
    let img = render(&g, &random_materials(24, 24, 3), &LightingRig::point(vec![])).unwrap();
    assert!(img.iter().all(|c| *c == [0.0; 3]));
}

#[test]
fn lit_renders_are_finite_and_non_negative() {
    let (_, g) = scene(32);
    let mats = random_materials(32, 32, 4);
    for rig in rigs() {
        let img = render(&g, &mats, &rig).unwrap();
        assert!(img.iter().flatten().all(|c| c.is_finite() && *c >= 0.0));
        if rig.category != LightCategory::None {
            assert!(img.iter().flatten().any(|&c| c > 0.05), "{:?}", rig.category);
        }
    }
}

#[test]
fn doubling_power_doubles_exactly() {
    let (_, g) = scene(32);
    let mats = random_materials(32, 32, 5);
    for rig in rigs().into_iter().filter(|r| matches!(r.category, LightCategory::Point | LightCategory::Area)) {
        let a = render(&g, &mats, &rig).unwrap();
        let b = render(&g, &mats, &rig.scaled_power(2.0)).unwrap();
        for i in 0..a.len() {
            assert_eq!(a[i].map(|c| 2.0 * c), b[i]);
        }
    }
}

#[test]
fn jacobian_matches_central_differences() {
    let (_, g) = scene(32);
    let mats = random_materials(32, 32, 6);
    let covered: Vec<usize> = (0..32 * 32).filter(|&i| g.coverage[i]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let eps = 1e-3;
    for rig in rigs() {
        let (img, jac) = render_with_jacobian(&g, &mats, &rig).unwrap();
        assert_eq!(img, render(&g, &mats, &rig).unwrap());
        for _ in 0..100 {
            let i = covered[rng.random_range(0..covered.len())];
            let ch = rng.random_range(0..8);
            let base = mats.get_index(i).to_channels();
            let eval = |d: f64| {
                let mut c = base;
                c[ch] += d;
                let mut m = mats.clone();
                m.set_index(i, MaterialSample::from_channels(&c));
                render(&g, &m, &rig).unwrap()[i]
            };
            let (p, m) = (eval(eps), eval(-eps));
            for k in 0..3 {
                let num = (p[k] - m[k]) / (2.0 * eps);
                let ana = jac[i][k][ch];
                let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-4);
                assert!(rel < 1e-3, "{:?} px {i} ch {ch} out {k}: {ana} vs {num}", rig.category);
            }
        }
    }
}

#[test]
fn backward_is_jacobian_transpose() {
    let (_, g) = scene(16);
    let mats = random_materials(16, 16, 8);
    let rig = &rigs()[0];
    let (_, jac) = render_with_jacobian(&g, &mats, rig).unwrap();
    let gi = Grid::from_fn(16, 16, |x, y| [x as f64 * 0.1, y as f64 * 0.2, 1.0]);
    let gm = render_backward(&jac, &gi).unwrap();
    let i = (0..256).find(|&i| g.coverage[i]).unwrap();
    for c in 0..8 {
        let expect: f64 = (0..3).map(|k| jac[i][k][c] * gi[i][k]).sum();
        assert_eq!(gm[i][c], expect);
    }
}

fn centered_camera(res: usize) -> Camera {
    Camera::new(Vec3::new(0.0, -2.5, 0.0), Vec3::zeros(), Vec3::z(), 45.0, res, res).unwrap()
}

#[test]
fn uniform_sphere_unlit_is_flat() {
    let m = uv_sphere(48, 24);
    let atlas = MaterialSet::filled(32, 32, MaterialSample { albedo: [0.2, 0.5, 0.7], ..MaterialSample::uniform(0.5) });
    let cam = centered_camera(32);
    let img = relight(&m, &atlas, &LightingRig::none(), &cam).unwrap();
    let g = rasterize_gbuffer(&m, &cam);
    for i in 0..32 * 32 {
        let expect = if g.coverage[i] { [0.2, 0.5, 0.7] } else { [0.0; 3] };
        for k in 0..3 {
            assert!((img[i][k] - expect[k]).abs() < 1e-12);
        }
    }
    let again = relight(&m, &atlas, &LightingRig::none(), &cam).unwrap();
    assert_eq!(img, again);
}

#[test]
fn mirrored_light_mirrors_luminance() {
    let m = uv_sphere(64, 32);
    let atlas = MaterialSet::filled(32, 32, MaterialSample { albedo: [0.7; 3], roughness: 0.6, metallic: 0.0, bump: FLAT_BUMP });
    let res = 48;
    let cam = centered_camera(res);
    let light = |x: f64| LightingRig::point(vec![PointLight { position: Vec3::new(x, -3.0, 1.0), power: 1500.0 }]);
    let left = relight(&m, &atlas, &light(-3.0), &cam).unwrap();
    let right = relight(&m, &atlas, &light(3.0), &cam).unwrap();
    let lum = |img: &Grid<[f64; 3]>, x: usize, y: usize| texmat::shading::render::luminance(&img[(x, y)]);
    let peak = (0..res * res).map(|i| lum(&left, i % res, i / res)).fold(0.0, f64::max);
    assert!(peak > 0.0);
    for y in 0..res {
        for x in 0..res {
            let a = lum(&left, x, y);
            let b = lum(&right, res - 1 - x, y);
            assert!((a - b).abs() <= 0.02 * peak, "({x},{y}) {a} vs {b}");
        }
    }
}

proptest! {
    #[test]
    fn perturbed_normals_are_unit(b0 in 0.0f64..1.0, b1 in 0.0f64..1.0, b2 in 0.0f64..1.0) {
        let out = perturb_normal([0.0, 0.6, 0.8], [b0, b1, b2], [1.0, 0.0, 0.0], [0.0, 0.8, -0.6]);
        let n = out.values();
        prop_assert!(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn specular_is_reciprocal(
        a in prop::array::uniform3(0.0f64..1.0), r in 0.0f64..1.0, m in 0.0f64..1.0,
        v in prop::array::uniform3(-1.0f64..1.0), l in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let v = unit([v[0], v[1], v[2].abs() + 0.05]);
        let l = unit([l[0], l[1], l[2].abs() + 0.05]);
        let n = V3([0.0, 0.0, 1.0]);
        let (_, s1) = eval_brdf_parts(a, r, m, &n, v, l);
        let (_, s2) = eval_brdf_parts(a, r, m, &n, l, v);
        for k in 0..3 {
            prop_assert!((s1[k] - s2[k]).abs() <= 1e-12 * s1[k].abs().max(1.0));
        }
    }

    #[test]
    fn brdf_is_non_negative_and_finite(
        a in prop::array::uniform3(0.0f64..1.0), r in 0.0f64..1.0, m in 0.0f64..1.0,
        v in prop::array::uniform3(-1.0f64..1.0), l in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let v = unit([v[0], v[1], v[2] + 1e-3]);
        let l = unit([l[0], l[1], l[2] + 1e-3]);
        let f = eval_brdf_f64(a, r, m, [0.0, 0.0, 1.0], v, l);
        prop_assert!(f.iter().all(|c| c.is_finite() && *c >= 0.0));
    }
}
