use gridsampler::geometry::{Point, PointCloud};
use gridsampler::grid::{realize_points, topology_probability, voxel_of, voxelize, GridSpec, OffsetField, Topology};
use gridsampler::losses::{chamfer, draw_nonempty_topology, expected_chamfer_term1, mean_chamfer, nearest};
use gridsampler::tensor::{Graph, Tensor};
use proptest::prelude::*;

fn point() -> impl Strategy<Value = Point> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| Point::new(x, y, z))
}

fn cloud(max: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec(point(), 1..max).prop_map(|p| PointCloud::new(p).unwrap())
}

proptest! {
    #[test]
    fn chamfer_is_symmetric_nonnegative_and_zero_on_self(x in cloud(30), y in cloud(30)) {
        let xy = chamfer(&x, &y).unwrap();
        prop_assert!(xy >= 0.0);
        prop_assert!((xy - chamfer(&y, &x).unwrap()).abs() <= 1e-12 * xy.max(1.0));
        prop_assert_eq!(chamfer(&x, &x).unwrap(), 0.0);
        prop_assert!(mean_chamfer(&x, &y).unwrap() <= xy);
    }

    #[test]
    fn nearest_matches_brute_force(p in point(), to in cloud(40)) {
        let (i, d) = nearest(&p, to.points());
        let best = to.points().iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(d, best);
        prop_assert_eq!((p - to.points()[i]).norm(), d);
    }

    #[test]
    fn voxel_of_contains_the_point(p in point(), n in 2usize..9) {
        let grid = GridSpec::unit_cube(n).unwrap();
        let v = voxel_of(&p, &grid).unwrap();
        let c = grid.voxel_center(v);
        let h = grid.cell_edge();
        for k in 0..3 {
            prop_assert!((p[k] - c[k]).abs() <= 0.5 * h + 1e-12);
        }
    }

    #[test]
    fn realized_points_stay_in_their_voxels(
        cells in prop::collection::vec(any::<bool>(), 27),
        offsets in prop::collection::vec(-0.5..=0.5f64, 81),
    ) {
        let grid = GridSpec::unit_cube(3).unwrap();
        let t = Topology::new(3, cells).unwrap();
        let field = OffsetField::new(3, offsets).unwrap();
        let x = realize_points(&t, &field, &grid).unwrap();
        prop_assert_eq!(x.len(), t.count());
        // Every realized point voxelizes back onto the topology, up to points
        // sitting exactly on a shared face.
        if !x.is_empty() {
            let back = voxelize(&x, &grid).unwrap();
            for (flat, &on) in back.cells().iter().enumerate() {
                if on && !t.cells()[flat] {
                    let c = grid.flat_center(flat);
                    let on_face = x.points().iter().any(|p| (0..3).any(|k| ((p[k] - c[k]).abs() - grid.cell_edge() / 2.0).abs() < 1e-12));
                    prop_assert!(on_face);
                }
            }
        }
    }

    #[test]
    fn topology_probabilities_sum_to_one(occ in prop::collection::vec(0.0..=1.0f64, 8)) {
        let total: f64 = (0u32..256)
            .map(|m| {
                let t = Topology::new(2, (0..8).map(|k| m >> k & 1 == 1).collect()).unwrap();
                topology_probability(&occ, &t).unwrap().probability
            })
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forced_draws_are_never_empty(occ in prop::collection::vec(0.0..1e-3f64, 8), seed in any::<u64>()) {
        prop_assert!(draw_nonempty_topology(&occ, 2, seed).unwrap().count() >= 1);
    }

    #[test]
    fn expected_term_is_linear_in_occupancy(
        occ in prop::collection::vec(0.0..=1.0f64, 8),
        delta in prop::collection::vec(-0.5..=0.5f64, 24),
        target in cloud(10),
        s in 0.0..=1.0f64,
    ) {
        let grid = GridSpec::unit_cube(2).unwrap();
        let eval = |o: &[f64]| {
            let mut g = Graph::new();
            let ov = g.constant(Tensor::new(vec![1, 2, 2, 2], o.to_vec()).unwrap());
            let dv = g.constant(Tensor::new(vec![3, 2, 2, 2], delta.clone()).unwrap());
            let t = expected_chamfer_term1(&mut g, ov, dv, &target, &grid).unwrap();
            g.value(t).item()
        };
        let scaled: Vec<f64> = occ.iter().map(|o| o * s).collect();
        let full = eval(&occ);
        prop_assert!(full >= 0.0);
        prop_assert!((eval(&scaled) - s * full).abs() <= 1e-12 * full.max(1.0));
    }
}
