use hydrodarcy::dg::{Basis2D, LocalFace, QuadRule2D};
use hydrodarcy::freeflow::{BcMode, Friction, FreeFlow, HydroCoefficients, HydroState, Orders};
use hydrodarcy::mesh::{build_layered_mesh, LayeredSliceMesh, MeshSpec};
use hydrodarcy::problem::Problem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn coeffs(d: f64) -> HydroCoefficients {
    HydroCoefficients::isotropic(d, 9.81, Friction::Linear(0.0))
}

fn solver(mesh: &LayeredSliceMesh, p: usize, d: f64, problem: Problem) -> FreeFlow {
    FreeFlow::new(mesh, Orders::from_p(p), coeffs(d), BcMode::Physical, problem, 4 * p + 1).unwrap()
}

fn flat_mesh(j: u32) -> LayeredSliceMesh {
    build_layered_mesh(&MeshSpec::level(j, 0.0, 4.0, -1.0), |_| 0.0, |_| 1.0).unwrap()
}

fn random_state(mesh: &LayeredSliceMesh, orders: Orders, seed: u64) -> HydroState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = HydroState::zeros(mesh.columns(), mesh.layers(), orders);
    s.u.coeffs.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    s.xi.coeffs.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
    s
}

#[test]
fn vertical_velocity_of_linear_u() {
    let c = 0.3;
    for p in [1, 2] {
        let mesh = flat_mesh(1);
        let mut ff = solver(&mesh, p, 0.05, Problem::Still { level: 1.0 });
        let mut st = HydroState::project(&mesh, Orders::from_p(p), |_| 1.0, |x, _| c * x).unwrap();
        let flux = vec![0.0; mesh.columns() * ff.points_per_direction()];
        ff.solve_vertical_velocity(&mut st, &mesh, &flux, 0.0).unwrap();
        let rule = QuadRule2D::for_degree(2 * p + 3);
        let tab = Basis2D::new(2 * p).tabulate_volume(&rule);
        for (e, k) in mesh.free.elements.iter().enumerate() {
            for (q, r) in rule.points.iter().enumerate() {
                let z = k.map(r[0], r[1])[1];
                let w = tab.eval(q, st.w.comp(e, 0));
                assert!((w + c * z).abs() < 1e-10, "p={p} e={e}: {w} vs {}", -c * z);
            }
        }
    }
}

#[test]
fn viscous_flux_of_linear_u() {
    let (a, d) = (0.7, 0.05);
    let mesh = build_layered_mesh(
        &MeshSpec {
            columns: 3,
            ..MeshSpec::level(0, 0.0, 3.0, -1.0)
        },
        |_| 0.0,
        |_| 1.0,
    )
    .unwrap();
    let mut ff = solver(&mesh, 1, d, Problem::Still { level: 1.0 });
    let mut st = HydroState::project(&mesh, Orders::from_p(1), |_| 1.0, |x, _| a * x).unwrap();
    ff.solve_auxiliary_q(&mut st, &mesh, 0.0).unwrap();
    // Middle column: every face average equals the trace.
    let basis = Basis2D::new(1);
    for r in [[0.0, 0.0], [0.5, -0.3], [-0.9, 0.9]] {
        let v = basis.eval(r[0], r[1]);
        let qx: f64 = v.iter().zip(st.q.comp(1, 0)).map(|(a, b)| a * b).sum();
        let qz: f64 = v.iter().zip(st.q.comp(1, 1)).map(|(a, b)| a * b).sum();
        assert!((qx + d * a).abs() < 1e-13, "{qx}");
        assert!(qz.abs() < 1e-13, "{qz}");
    }
}

#[test]
fn local_solves_plug_back() {
    let mesh = build_layered_mesh(&MeshSpec::level(2, 0.0, 100.0, -5.0), |x| 0.005 * x, |x| 5.0 + 0.1 * (x / 20.0).sin())
        .unwrap();
    for p in [1, 2] {
        let orders = Orders::from_p(p);
        let mut ff = solver(&mesh, p, 0.05, Problem::Still { level: 5.0 });
        let mut st = random_state(&mesh, orders, 7 + p as u64);
        let nq = ff.points_per_direction();
        let flux: Vec<f64> = (0..mesh.columns() * nq).map(|i| 1e-3 * (i as f64).cos()).collect();
        ff.solve_auxiliary_q(&mut st, &mesh, 0.0).unwrap();
        ff.solve_vertical_velocity(&mut st, &mesh, &flux, 0.0).unwrap();
        let rq = ff.q_residual(&st, &mesh, 0.0).unwrap();
        let rw = ff.w_residual(&st, &mesh, &flux, 0.0).unwrap();
        assert!(rq < 1e-11, "p={p}: Q residual {rq}");
        assert!(rw < 1e-11, "p={p}: W residual {rw}");
    }
}

#[test]
fn lake_at_rest_is_preserved() {
    for p in [1, 2] {
        let mut mesh = build_layered_mesh(&MeshSpec::level(2, 0.0, 100.0, -10.0), |x| -5.0 + 0.005 * x, |_| 0.0).unwrap();
        let orders = Orders::from_p(p);
        let mut ff = solver(&mesh, p, 0.05, Problem::Still { level: 0.0 });
        let mut st = HydroState::project(&mesh, orders, |_| 0.0, |_, _| 0.0).unwrap();
        let flux = vec![0.0; mesh.columns() * ff.points_per_direction()];
        for n in 0..100 {
            ff.step(&mut st, &mut mesh, &flux, n as f64 * 0.01, 0.01).unwrap();
        }
        assert!(st.u.max_abs() < 1e-12, "{}", st.u.max_abs());
        assert!(st.xi.max_abs() < 1e-12, "{}", st.xi.max_abs());
    }
}

#[test]
fn mass_is_conserved_in_a_closed_box() {
    use hydrodarcy::mesh::BoundaryTag;
    for p in [1, 2] {
        let spec = MeshSpec {
            tags: [BoundaryTag::Outflow; 2],
            ..MeshSpec::level(2, 0.0, 100.0, -10.0)
        };
        let mut mesh = build_layered_mesh(&spec, |x| -5.0 + 0.005 * x, |x| 0.1 * (-(x - 50.0f64).powi(2) / 50.0).exp()).unwrap();
        let orders = Orders::from_p(p);
        let mut ff = solver(&mesh, p, 0.05, Problem::Still { level: 0.0 });
        let mut st = HydroState::project(&mesh, orders, |x| 0.1 * (-(x - 50.0f64).powi(2) / 50.0).exp(), |_, _| 0.0).unwrap();
        let flux = vec![0.0; mesh.columns() * ff.points_per_direction()];
        let vol = |st: &HydroState, mesh: &LayeredSliceMesh| -> f64 {
            // Mode 0 of an orthonormal basis integrates to sqrt(2) a.
            (0..mesh.columns())
                .map(|c| st.xi.comp(c, 0)[0] * std::f64::consts::SQRT_2 * mesh.surface.interval(c).half_width())
                .sum()
        };
        let v0 = vol(&st, &mesh);
        for n in 0..200 {
            ff.step(&mut st, &mut mesh, &flux, n as f64 * 0.01, 0.01).unwrap();
            assert!((vol(&st, &mesh) - v0).abs() < 1e-12);
        }
        assert!(st.u.max_abs() > 1e-6);
        let _ = LocalFace::Top;
    }
}
