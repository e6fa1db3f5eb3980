mod common;

use common::{axis_frame, dense_ray_visible, random_occluders, unit_square_at};
use occlugrid_core::geom::{point_in_polygon, polygon_area, Footprint, Point};
use occlugrid_core::scene::VectorClass;
use occlugrid_core::sweep::{mask_agreement, mask_iou, rasterize_shadows, sweep_mask};
use occlugrid_core::visibility::{
    cell_visible, compute_mask, occlusion_polylines, shadow_polygon, ShadowPolygon,
    VisibilityError,
};
use occlugrid_core::GridSpec;

const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

#[test]
fn empty_occluder_list_gives_all_zero_mask() {
    let grid = GridSpec::default_scene();
    let frame = axis_frame(grid);
    let mask = compute_mask(&frame, &[], grid).unwrap();
    assert_eq!(mask.occluded_count(), 0);
    assert!(cell_visible(ORIGIN, Point::new(17.0, 42.0), &[]).unwrap());
}

#[test]
fn square_ahead_blocks_collinear_ray_but_not_orthogonal() {
    let sq = unit_square_at(1, 0.0, 10.0);
    let behind = Point::new(0.0, 20.0);
    let aside = Point::new(10.0, 0.0);
    assert!(!cell_visible(ORIGIN, behind, &[sq]).unwrap());
    assert!(cell_visible(ORIGIN, aside, &[sq]).unwrap());
    // The brute-force sampler agrees on both probes.
    assert!(!dense_ray_visible(ORIGIN, behind, &[sq], 5000));
    assert!(dense_ray_visible(ORIGIN, aside, &[sq], 5000));
}

#[test]
fn rays_grazing_a_corner_or_face_count_as_visible() {
    let sq = unit_square_at(1, 0.0, 10.0);
    // Through the corner (1,9): grazing, stays visible.
    assert!(cell_visible(ORIGIN, Point::new(2.0, 18.0), &[sq]).unwrap());
    // Nudged inward, the ray crosses the interior.
    assert!(!cell_visible(ORIGIN, Point::new(1.9, 18.0), &[sq]).unwrap());
    // Target on the near face: the open segment stops at the boundary.
    assert!(cell_visible(ORIGIN, Point::new(0.0, 9.0), &[sq]).unwrap());
    // Target just past the face sits inside the interior.
    assert!(!cell_visible(ORIGIN, Point::new(0.0, 9.0 + 1e-9), &[sq]).unwrap());
}

#[test]
fn dense_ray_sampler_agrees_on_random_cell_probes() {
    let grid = GridSpec::default_scene();
    let frame = axis_frame(grid);
    let occluders = random_occluders(7, 4, 8);
    let mut checked = 0usize;
    let mut agree = 0usize;
    for row in (0..grid.height).step_by(3) {
        for col in (0..grid.width).step_by(3) {
            let target = frame.cell_center_world(row, col, grid);
            if occluders.iter().any(|fp| fp.contains(target)) {
                continue;
            }
            let fast = cell_visible(ORIGIN, target, &occluders).unwrap();
            let slow = dense_ray_visible(ORIGIN, target, &occluders, 4000);
            checked += 1;
            if fast == slow {
                agree += 1;
            }
        }
    }
    assert!(checked > 200, "probe sweep too small: {checked}");
    // The sampler can miss sub-millimeter tangent chords; near-total
    // agreement is the meaningful bar.
    assert!(
        agree as f64 >= 0.995 * checked as f64,
        "dense-ray agreement {agree}/{checked}"
    );
}

#[test]
fn single_occluder_shadow_is_connected_and_widens_with_range() {
    let grid = GridSpec::default_scene();
    // Heading-zero frame: cell centers land on exact integer coordinates,
    // so boundary cells of an axis-aligned square are decided exactly.
    let frame = common::fwd_frame(grid);
    let sq = unit_square_at(1, 10.0, 0.0);
    let mask = compute_mask(&frame, &[sq], grid).unwrap();

    // Footprint cells are observed, never masked.
    for x in 9..=11 {
        for y in -1..=1 {
            let (r, c) = frame.ego_to_cell(Point::new(-y as f64, x as f64), grid).unwrap();
            assert_eq!(mask.at(r, c), 0, "footprint cell ({x},{y})");
        }
    }
    // The column directly behind the square is dark all the way out.
    for x in 12..=60 {
        let (r, c) = frame.ego_to_cell(Point::new(0.0, x as f64), grid).unwrap();
        assert_eq!(mask.at(r, c), 1, "cell ({x},0)");
    }
    // Row occupancy grows (weakly) with range behind the occluder.
    let mut prev = 0usize;
    for x in 12..=60 {
        let row = frame.ego_to_cell(Point::new(0.0, x as f64), grid).unwrap().0;
        let count = (0..grid.width).filter(|&c| mask.at(row, c) == 1).count();
        assert!(count >= prev, "shadow narrowed at range {x}: {count} < {prev}");
        prev = count;
    }
    // All occluded cells form one 4-connected component.
    assert_eq!(connected_components(&mask, grid), 1);
}

#[test]
fn angular_sweep_oracle_agrees_on_random_scenes() {
    let grid = GridSpec::default_scene();
    let frame = axis_frame(grid);
    let mut cells = 0usize;
    let mut matches = 0usize;
    let mut worst = 1.0f64;
    for seed in 0..100u64 {
        let occluders = random_occluders(seed, 3, 8);
        let fast = compute_mask(&frame, &occluders, grid).unwrap();
        let slow = sweep_mask(&frame, &occluders, grid);
        let a = mask_agreement(&fast, &slow);
        worst = worst.min(a);
        let n = grid.cell_count();
        cells += n;
        matches += (a * n as f64).round() as usize;
    }
    let agreement = matches as f64 / cells as f64;
    assert!(
        agreement >= 0.995,
        "sweep agreement {agreement:.6} (worst scene {worst:.6})"
    );
}

#[test]
fn shadow_union_reproduces_mask() {
    let grid = GridSpec::default_scene();
    let frame = axis_frame(grid);
    for seed in 200..230u64 {
        let occluders = random_occluders(seed, 3, 8);
        let mask = compute_mask(&frame, &occluders, grid).unwrap();
        let shadows: Vec<ShadowPolygon> = occluders
            .iter()
            .map(|fp| shadow_polygon(ORIGIN, fp, &frame, grid).unwrap())
            .collect();
        let raster = rasterize_shadows(&shadows, &occluders, &frame, grid);
        let iou = mask_iou(&mask, &raster);
        assert!(iou >= 0.95, "seed {seed}: shadow-union IoU {iou:.4}");
    }
}

#[test]
fn adding_an_occluder_never_reveals_cells_outside_its_footprint() {
    let grid = GridSpec::default_scene();
    let frame = axis_frame(grid);
    for seed in 300..310u64 {
        let occluders = random_occluders(seed, 4, 8);
        let mut before = compute_mask(&frame, &[], grid).unwrap();
        for k in 0..occluders.len() {
            let after = compute_mask(&frame, &occluders[..=k], grid).unwrap();
            let added = &occluders[k];
            for r in 0..grid.height {
                for c in 0..grid.width {
                    // Cells swallowed by the new footprint legitimately
                    // flip to observed; everything else may only darken.
                    if added.contains(frame.cell_center_world(r, c, grid)) {
                        continue;
                    }
                    assert!(
                        !(before.at(r, c) == 1 && after.at(r, c) == 0),
                        "seed {seed}: occluder {k} revealed cell ({r},{c})"
                    );
                }
            }
            before = after;
        }
    }
}

#[test]
fn shadow_of_square_ahead_is_a_symmetric_trapezoid() {
    let grid = GridSpec::default_scene();
    let frame = axis_frame(grid);
    let sq = unit_square_at(1, 0.0, 10.0);
    let sh = shadow_polygon(ORIGIN, &sq, &frame, grid).unwrap();
    assert_eq!(sh.occluder, 1);
    assert!(sh.vertices.len() >= 4);
    assert!(polygon_area(&sh.vertices) > 0.0, "shadow must be CCW");

    let has = |p: Point| sh.vertices.iter().any(|v| (*v - p).norm() < 1e-9);
    assert!(has(Point::new(1.0, 9.0)), "tangent corner (1,9) missing");
    assert!(has(Point::new(-1.0, 9.0)), "tangent corner (-1,9) missing");
    for v in &sh.vertices {
        // Inside the wedge |x| <= y/9 spanned by the two tangent rays.
        assert!(v.y >= 9.0 - 1e-9, "vertex {v:?} ahead of the occluder");
        assert!(v.x.abs() <= v.y / 9.0 + 1e-9, "vertex {v:?} outside wedge");
        // Mirrored partner exists: the trapezoid is symmetric about x=0.
        assert!(
            sh.vertices.iter().any(|w| (w.x + v.x).abs() < 1e-9 && (w.y - v.y).abs() < 1e-9),
            "vertex {v:?} has no mirror"
        );
    }
    assert!(point_in_polygon(Point::new(0.0, 20.0), &sh.vertices));
    assert!(point_in_polygon(Point::new(2.0, 20.0), &sh.vertices));
    assert!(!point_in_polygon(Point::new(2.5, 20.0), &sh.vertices));
    assert!(!point_in_polygon(Point::new(10.0, 0.0), &sh.vertices));
}

#[test]
fn occluder_past_the_far_boundary_casts_no_shadow_in_grid() {
    let grid = GridSpec::default_scene();
    let frame = axis_frame(grid);
    let sq = unit_square_at(9, 0.0, 100.0);
    let sh = shadow_polygon(ORIGIN, &sq, &frame, grid).unwrap();
    assert!(sh.vertices.is_empty(), "expected empty shadow, got {:?}", sh.vertices);
}

#[test]
fn zero_extent_occluder_is_rejected() {
    let grid = GridSpec::default_scene();
    let frame = axis_frame(grid);
    let flat = Footprint { id: 3, center: Point::new(0.0, 10.0), heading: 0.0, length: 0.0, width: 2.0 };
    match shadow_polygon(ORIGIN, &flat, &frame, grid) {
        Err(VisibilityError::DegenerateOccluder { occluder: 3 }) => {}
        other => panic!("expected degenerate-occluder error, got {other:?}"),
    }
}

#[test]
fn occluder_covering_the_sensor_is_a_degenerate_viewpoint() {
    let grid = GridSpec::default_scene();
    let frame = axis_frame(grid);
    let sq = unit_square_at(4, 0.2, 0.1);
    match compute_mask(&frame, &[sq], grid) {
        Err(VisibilityError::DegenerateViewpoint { occluder: 4 }) => {}
        other => panic!("expected degenerate-viewpoint error, got {other:?}"),
    }
    assert!(matches!(
        cell_visible(ORIGIN, Point::new(5.0, 5.0), &[sq]),
        Err(VisibilityError::DegenerateViewpoint { occluder: 4 })
    ));
}

#[test]
fn square_shadow_resamples_into_a_closed_chain_of_eight() {
    let grid = GridSpec::default_scene();
    let frame = axis_frame(grid);
    // Perimeter 40 m at a 5 m step: exactly 8 vectors.
    let sh = ShadowPolygon {
        occluder: 7,
        vertices: vec![
            Point::new(5.0, 20.0),
            Point::new(15.0, 20.0),
            Point::new(15.0, 30.0),
            Point::new(5.0, 30.0),
        ],
    };
    let lines = occlusion_polylines(&[sh], 5.0, &frame, 42);
    assert_eq!(lines.len(), 1);
    let pl = &lines[0];
    assert_eq!(pl.id, 42);
    assert_eq!(pl.class, VectorClass::Occlusion);
    assert_eq!(pl.vectors.len(), 8);
    for w in pl.vectors.windows(2) {
        assert_eq!(w[0].end, w[1].start, "chain must be head-to-tail");
    }
    let first = &pl.vectors[0];
    let last = &pl.vectors[pl.vectors.len() - 1];
    assert_eq!(last.end, first.start, "loop must close");
    for v in &pl.vectors {
        assert_eq!(v.class, VectorClass::Occlusion);
        assert_eq!(v.attrs, [0.0, 0.0, 0.0]);
        assert!(((v.end - v.start).norm() - 5.0).abs() < 1e-12);
    }
}

#[test]
fn empty_or_degenerate_shadows_produce_no_polylines() {
    let grid = GridSpec::default_scene();
    let frame = axis_frame(grid);
    assert!(occlusion_polylines(&[], 5.0, &frame, 0).is_empty());
    let thin = ShadowPolygon { occluder: 1, vertices: vec![Point::new(0.0, 1.0), Point::new(2.0, 1.0)] };
    assert!(occlusion_polylines(&[thin], 5.0, &frame, 0).is_empty());
}

fn connected_components(mask: &occlugrid_core::MaskOgm, grid: GridSpec) -> usize {
    let mut seen = vec![false; grid.cell_count()];
    let mut components = 0;
    for start in 0..grid.cell_count() {
        let (r, c) = (start / grid.width, start % grid.width);
        if mask.at(r, c) == 0 || seen[start] {
            continue;
        }
        components += 1;
        let mut stack = vec![(r, c)];
        seen[start] = true;
        while let Some((r, c)) = stack.pop() {
            let push = |rr: usize, cc: usize, seen: &mut Vec<bool>, stack: &mut Vec<(usize, usize)>| {
                if mask.at(rr, cc) == 1 && !seen[rr * grid.width + cc] {
                    seen[rr * grid.width + cc] = true;
                    stack.push((rr, cc));
                }
            };
            if r > 0 { push(r - 1, c, &mut seen, &mut stack); }
            if r + 1 < grid.height { push(r + 1, c, &mut seen, &mut stack); }
            if c > 0 { push(r, c - 1, &mut seen, &mut stack); }
            if c + 1 < grid.width { push(r, c + 1, &mut seen, &mut stack); }
        }
    }
    components
}
