use geoplan_core::canvas::skeleton::block_is_irreducible;
use geoplan_core::canvas::{extract_graph, skeletonize, PathMask, RasterTile};
use geoplan_core::Error;
use proptest::prelude::*;

fn mask_strategy() -> impl Strategy<Value = PathMask> {
    (4usize..20, 4usize..20, 0.2f64..0.8).prop_flat_map(|(w, h, p)| {
        proptest::collection::vec(proptest::bool::weighted(p), w * h)
            .prop_map(move |bits| PathMask { grid_width: w, grid_height: h, bits })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn thinning_preserves_components(mask in mask_strategy()) {
        let s = skeletonize(&mask);
        prop_assert_eq!(s.component_count(), mask.component_count());
        prop_assert!(s.bits.iter().zip(&mask.bits).all(|(a, b)| !*a || *b), "thinning only deletes");
    }

    #[test]
    fn thinning_is_idempotent(mask in mask_strategy()) {
        let s = skeletonize(&mask);
        prop_assert_eq!(skeletonize(&s), s);
    }

    #[test]
    fn thinning_leaves_width_one(mask in mask_strategy()) {
        // only four-arm X cores may survive; removing any of their pixels
        // would split a component
        let s = skeletonize(&mask);
        for (c, r) in s.blocks() {
            prop_assert!(block_is_irreducible(&s, c, r), "input\n{}\nskeleton\n{}", mask, s);
        }
    }

    #[test]
    fn traced_degrees_match_skeleton(mask in mask_strategy()) {
        let s = skeletonize(&mask);
        let tile = RasterTile::blank(s.grid_width, s.grid_height, 1, [0.0, 0.0], 1.0);
        let g = match extract_graph(&s, &tile) {
            Ok(g) => g,
            Err(Error::Precondition(_)) => {
                prop_assert!(s.find_block().is_some());
                return Ok(());
            }
            Err(e) => panic!("{e}"),
        };
        if let Err(e) = g.validate(1.0) {
            panic!("{e}\n{s}");
        }
        prop_assert_eq!(g.component_count(), s.component_count());
        let deg = g.degrees();
        let incidences = 2 * g.edges.len();
        prop_assert_eq!(deg.values().sum::<usize>(), incidences);
        // end and isolated pixels keep their neighbour count as node degree
        for n in &g.nodes {
            let (c, r) = (n.x as usize, n.y as usize);
            let k = s.neighbor_count(c, r);
            if k <= 1 {
                prop_assert_eq!(deg[&n.id], k);
            }
        }
    }
}
