use hydrodarcy::dg::{Basis2D, LocalFace, QuadRule, QuadRule2D};
use hydrodarcy::mesh::{build_layered_mesh, DarcyBoundary, LayeredSliceMesh, MeshSpec};
use hydrodarcy::problem::Problem;
use hydrodarcy::subsurface::{Darcy, DarcyCoefficients, DarcyOrders, DarcyState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const K: f64 = 0.01;

fn closed_mesh(j: u32) -> LayeredSliceMesh {
    let spec = MeshSpec {
        darcy_lateral: DarcyBoundary::Neumann,
        darcy_base: DarcyBoundary::Neumann,
        ..MeshSpec::level(j, 0.0, 100.0, -10.0)
    };
    build_layered_mesh(&spec, |x| -5.0 + 0.005 * x, |_| 0.0).unwrap()
}

fn solver(mesh: &LayeredSliceMesh, p: usize) -> Darcy {
    Darcy::new(mesh, DarcyOrders::from_p(p), DarcyCoefficients::isotropic(K, 1.0), Problem::Still { level: 0.0 }, 4 * p + 1)
        .unwrap()
}

/// Exact elevation at every Darcy top-face quadrature point.
fn interface_elevation(mesh: &LayeredSliceMesh, p: usize) -> Vec<f64> {
    let line = QuadRule::for_degree(4 * p + 1);
    let top = mesh.darcy.layers - 1;
    (0..mesh.columns())
        .flat_map(|c| {
            let k = &mesh.darcy.elements[mesh.darcy.element(c, top)];
            line.points.iter().map(|&r| k.map_face(LocalFace::Top, r)[1]).collect::<Vec<_>>()
        })
        .collect()
}

fn random_head(mesh: &LayeredSliceMesh, orders: DarcyOrders, seed: u64) -> DarcyState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = DarcyState::zeros(mesh.darcy.elements.len(), orders);
    s.h.coeffs.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    s
}

#[test]
fn linear_head_gives_uniform_flux() {
    for p in [1, 2] {
        let mesh = closed_mesh(2);
        let orders = DarcyOrders::from_p(p);
        let mut d = solver(&mesh, p);
        let mut st = DarcyState::project(&mesh, orders, |_, z| z).unwrap();
        d.solve_flux(&mut st, &mesh, &interface_elevation(&mesh, p), 0.0).unwrap();
        let rule = QuadRule2D::for_degree(2 * p + 3);
        let tab = Basis2D::new(orders.flux).tabulate_volume(&rule);
        for e in 0..mesh.darcy.elements.len() {
            for q in 0..rule.len() {
                let ux = tab.eval(q, st.flux.comp(e, 0));
                let uz = tab.eval(q, st.flux.comp(e, 1));
                assert!(ux.abs() < 1e-13, "p={p} e={e}: {ux}");
                assert!((uz + K).abs() < 1e-13, "p={p} e={e}: {uz}");
            }
        }
    }
}

#[test]
fn flux_solve_plugs_back() {
    for p in [1, 2] {
        let mesh = closed_mesh(2);
        let mut d = solver(&mesh, p);
        let mut st = random_head(&mesh, DarcyOrders::from_p(p), 3 + p as u64);
        let top: Vec<f64> = (0..mesh.columns() * d.points_per_direction()).map(|i| (i as f64).sin()).collect();
        d.solve_flux(&mut st, &mesh, &top, 0.0).unwrap();
        let r = d.flux_residual(&st, &mesh, &top, 0.0).unwrap();
        assert!(r < 1e-12, "p={p}: {r}");
    }
}

#[test]
fn head_at_rest_stays_at_rest() {
    let mesh = build_layered_mesh(&MeshSpec::level(2, 0.0, 100.0, -10.0), |x| -5.0 + 0.005 * x, |_| 0.0).unwrap();
    for p in [1, 2] {
        let orders = DarcyOrders::from_p(p);
        let mut d = solver(&mesh, p);
        let mut st = DarcyState::project(&mesh, orders, |_, _| 0.0).unwrap();
        let n = mesh.columns() * d.points_per_direction();
        d.solve_flux(&mut st, &mesh, &vec![0.0; n], 0.0).unwrap();
        let rate = d.head_rate(&st, &mesh, &vec![0.0; n], 0.0).unwrap();
        assert!(st.flux.max_abs() < 1e-15);
        assert!(rate.iter().all(|r| r.abs() < 1e-15));
    }
}

#[test]
fn closed_block_conserves_volume() {
    for p in [1, 2] {
        let mesh = closed_mesh(1);
        let mut d = solver(&mesh, p);
        let mut st = DarcyState::project(&mesh, DarcyOrders::from_p(p), |x, z| (x / 30.0).sin() + 0.1 * z).unwrap();
        let n = mesh.columns() * d.points_per_direction();
        // No seepage through the top, and the head there only enters the
        // velocity equation.
        let zero = vec![0.0; n];
        let v0 = d.volume(&st, &mesh);
        for step in 0..200 {
            d.solve_flux(&mut st, &mesh, &zero, 0.0).unwrap();
            d.step(&mut st, &mesh, &zero, step as f64, 1.0).unwrap();
            let v = d.volume(&st, &mesh);
            assert!((v - v0).abs() < 1e-12 * v0.abs().max(1.0), "p={p} step {step}: {}", v - v0);
        }
    }
}
